//! β-sweeps: levels `c^k_β` against the limit level, segregation, multipliers,
//! distance of the extracted states to the limit state, and the residual of
//! the limit equation.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flows::{
    deform_beta, deform_infty, energy_slack, pair_distance, quotient_distance, FlowConfig,
};
use crate::functionals::{
    coupling_integral, energy_beta, energy_star, limit_equation_residual, multipliers, SignedField,
    StatePair,
};
use crate::grid::Grid;
use crate::minimax::{
    build_phi_basis, default_sample_size, extract_critical, minimax_from_family,
    symmetric_collapse, Beta, CriticalPoint, GenusFamily, LevelEstimate, MinimaxConfig,
};

/// Slack on the flow Hölder bound `dist(s, η(s)) ≤ (J(s) − J(η(s)))^{1/2}`.
pub const HOLDER_SLACK: f64 = 1.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub beta_cfg: MinimaxConfig,
    pub infty_cfg: MinimaxConfig,
    /// Sphere sample size; `None` uses [`default_sample_size`].
    pub m: Option<usize>,
    /// Tolerance of the final state gap in [`limit_point_check`].
    pub limit_tol: f64,
    pub warm_start: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            beta_cfg: MinimaxConfig::for_beta(Beta::Finite(1.0)),
            infty_cfg: MinimaxConfig::for_beta(Beta::Infinite),
            m: None,
            limit_tol: 0.05,
            warm_start: true,
        }
    }
}

pub const DEFAULT_SCHEDULE: [f64; 5] = [1.0, 10.0, 100.0, 1e3, 1e4];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub beta: Beta,
    /// Minimax level estimate (sup over the deformed family).
    pub level: f64,
    /// Energy of the extracted critical point.
    pub energy: f64,
    pub residual: f64,
    pub stationary: bool,
    pub segregation: f64,
    pub lambda: f64,
    pub mu: f64,
    /// σ-quotient `dist₂` to the extracted limit state.
    pub dist_to_limit: f64,
    pub limit_residual: f64,
    pub sup_u: f64,
    pub sup_v: f64,
    /// `dist₂((u, v), η(u, v))`, with `η` run for the full unit time even
    /// when the state is already below the residual tolerance.
    pub def_gap: f64,
    /// `J(u, v) − J(η(u, v))`.
    pub def_drop: f64,
    /// σ-quotient `dist₂(η(u, v), limit state)`.
    pub def_dist_to_limit: f64,
    pub collapse_flag: bool,
    pub history: Vec<f64>,
}

impl SweepRecord {
    /// Record-level invariants: finite entries, nonnegative segregation and
    /// residual, and unit masses of the stored state.
    pub fn check(&self, state: &StatePair) -> Result<()> {
        let vals = [
            self.level,
            self.energy,
            self.segregation,
            self.lambda,
            self.mu,
            self.dist_to_limit,
            self.limit_residual,
            self.def_gap,
        ];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidState(format!(
                "non-finite entry in sweep record at beta = {}",
                self.beta
            )));
        }
        if self.segregation < 0.0 || self.limit_residual < 0.0 {
            return Err(Error::InvalidState(
                "negative segregation or residual".into(),
            ));
        }
        let (a, b) = state.masses();
        if (a - 1.0).abs() > 1e-10 || (b - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidState(format!(
                "masses {a}, {b} in sweep record"
            )));
        }
        Ok(())
    }

    /// `def_gap ≤ 1.5 (J − J∘η)^{1/2}` (unit flow time), with the energy drop
    /// floored at the rounding resolution of the energy.
    pub fn holder_bound_holds(&self) -> bool {
        let drop = self.def_drop.max(0.0) + energy_slack(self.energy);
        self.def_gap <= HOLDER_SLACK * drop.sqrt()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GridDescriptor {
    pub dim: usize,
    pub n: usize,
    pub lengths: Vec<f64>,
    pub h: f64,
    pub measure: f64,
}

impl From<&Grid> for GridDescriptor {
    fn from(g: &Grid) -> Self {
        GridDescriptor {
            dim: g.dim(),
            n: g.n(),
            lengths: g.lengths().to_vec(),
            h: g.h(0),
            measure: g.measure(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepReport {
    pub k: usize,
    pub grid: GridDescriptor,
    pub schedule: Vec<f64>,
    pub records: Vec<SweepRecord>,
    pub infinite: SweepRecord,
    pub estimates: Vec<LevelEstimate>,
    pub infinite_estimate: LevelEstimate,
    /// Extracted states per β (same order as `records`), then the limit pair.
    #[serde(skip)]
    pub states: Vec<StatePair>,
    #[serde(skip)]
    pub deformed: Vec<StatePair>,
    #[serde(skip)]
    pub limit_state: Option<StatePair>,
}

impl SweepReport {
    pub const CSV_HEADER: &'static str =
        "beta,level,segregation,lambda,mu,dist_to_limit,limit_residual,sup_u,sup_v,def_gap";

    pub fn to_csv(&self, comment: Option<&str>) -> String {
        let mut s = String::new();
        if let Some(c) = comment {
            for line in c.lines() {
                writeln!(s, "# {line}").unwrap();
            }
        }
        writeln!(s, "{}", Self::CSV_HEADER).unwrap();
        for r in self.records.iter().chain(std::iter::once(&self.infinite)) {
            writeln!(
                s,
                "{},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}",
                r.beta,
                r.level,
                r.segregation,
                r.lambda,
                r.mu,
                r.dist_to_limit,
                r.limit_residual,
                r.sup_u,
                r.sup_v,
                r.def_gap
            )
            .unwrap();
        }
        s
    }

    /// Full nested report; extracted states are included on request.
    pub fn to_json(&self, include_states: bool) -> Result<serde_json::Value> {
        let mut v = serde_json::to_value(self)?;
        if include_states {
            let pairs: Vec<serde_json::Value> = self
                .states
                .iter()
                .chain(self.limit_state.iter())
                .map(|s| serde_json::json!({ "u": s.u().values(), "v": s.v().values() }))
                .collect();
            v["states"] = serde_json::Value::Array(pairs);
        }
        Ok(v)
    }
}

/// `|−Δ(u − v) + (u − v)³ − λu + μv|₂` with `(λ, μ)` the multipliers at `beta`.
pub fn limit_residual(s: &StatePair, beta: f64) -> f64 {
    let m = multipliers(s, beta);
    limit_equation_residual(&s.difference(), m.lambda, m.mu)
}

/// `∫ u²v²`.
pub fn segregation_integral(s: &StatePair) -> f64 {
    coupling_integral(s)
}

/// Runs the limit problem first, then every β of the schedule in increasing
/// order, warm-starting each family from the previous deformed family.
pub fn run_sweep(
    k: usize,
    schedule: &[f64],
    grid: &Grid,
    cfg: &SweepConfig,
) -> Result<SweepReport> {
    if schedule.is_empty() {
        return Err(Error::Config {
            key: "betas".into(),
            msg: "schedule is empty".into(),
        });
    }
    if schedule.windows(2).any(|w| !(w[1] > w[0]))
        || schedule.iter().any(|b| !(b.is_finite() && *b >= 0.0))
    {
        return Err(Error::Config {
            key: "betas".into(),
            msg: "schedule must be finite, nonnegative and strictly increasing".into(),
        });
    }
    let basis = build_phi_basis(grid, k)?;
    let m = cfg.m.unwrap_or_else(|| default_sample_size(k));
    let at = |beta: Beta| {
        move |e: Error| Error::AtBeta {
            beta: beta.to_string(),
            source: Box::new(e),
        }
    };

    let fam = GenusFamily::from_basis(&basis, m, cfg.infty_cfg.seed).map_err(at(Beta::Infinite))?;
    let (inf_est, inf_fam) =
        minimax_from_family(fam, Beta::Infinite, &cfg.infty_cfg).map_err(at(Beta::Infinite))?;
    let inf_crit =
        extract_critical(&inf_est, &inf_fam, &cfg.infty_cfg).map_err(at(Beta::Infinite))?;
    let limit_pair = inf_crit.pair();
    let inf_record =
        infinite_record(&inf_est, &inf_crit, &cfg.infty_cfg).map_err(at(Beta::Infinite))?;
    inf_record.check(&limit_pair).map_err(at(Beta::Infinite))?;
    let limit_level = inf_est.value;

    let mut records = Vec::with_capacity(schedule.len());
    let mut estimates = Vec::with_capacity(schedule.len());
    let mut states = Vec::with_capacity(schedule.len());
    let mut deformed = Vec::with_capacity(schedule.len());
    let mut previous: Option<GenusFamily> = None;
    for &b in schedule {
        let beta = Beta::Finite(b);
        let family = match (&previous, cfg.warm_start) {
            (Some(f), true) => f.clone(),
            _ => GenusFamily::from_basis(&basis, m, cfg.beta_cfg.seed).map_err(at(beta))?,
        };
        let (est, fam) = minimax_from_family(family, beta, &cfg.beta_cfg).map_err(at(beta))?;
        let crit = extract_critical(&est, &fam, &cfg.beta_cfg).map_err(at(beta))?;
        let s = crit.pair();
        let eta = deform_beta(&s, b, &full_unit_time(&cfg.beta_cfg.flow)).map_err(at(beta))?;
        let mult = multipliers(&s, b);
        let record = SweepRecord {
            beta,
            level: est.value,
            energy: crit.energy(),
            residual: crit.residual(),
            stationary: crit.is_stationary(),
            segregation: segregation_integral(&s),
            lambda: mult.lambda,
            mu: mult.mu,
            dist_to_limit: quotient_distance(&s, &limit_pair),
            limit_residual: limit_residual(&s, b),
            sup_u: s.u().max_abs(),
            sup_v: s.v().max_abs(),
            def_gap: pair_distance(&s, &eta),
            def_drop: energy_beta(&s, b) - energy_beta(&eta, b),
            def_dist_to_limit: quotient_distance(&eta, &limit_pair),
            collapse_flag: symmetric_collapse(&s, b, grid.measure(), limit_level),
            history: est.history.clone(),
        };
        record.check(&s).map_err(at(beta))?;
        records.push(record);
        estimates.push(est);
        states.push(s);
        deformed.push(eta);
        previous = Some(fam);
    }
    Ok(SweepReport {
        k,
        grid: grid.into(),
        schedule: schedule.to_vec(),
        records,
        infinite: inf_record,
        estimates,
        infinite_estimate: inf_est,
        states,
        deformed,
        limit_state: Some(limit_pair),
    })
}

fn full_unit_time(flow: &FlowConfig) -> FlowConfig {
    FlowConfig {
        residual_tol: f64::MIN_POSITIVE,
        ..flow.unit_time()
    }
}

fn infinite_record(
    est: &LevelEstimate,
    crit: &CriticalPoint,
    cfg: &MinimaxConfig,
) -> Result<SweepRecord> {
    let (w, tm) = match crit {
        CriticalPoint::Infinite { w, multipliers, .. } => (w, multipliers),
        CriticalPoint::Beta { .. } => unreachable!("limit extraction returns a signed field"),
    };
    let pair = w.to_pair();
    let eta = deform_infty(&pair, &full_unit_time(&cfg.flow))?;
    let record = SweepRecord {
        beta: Beta::Infinite,
        level: est.value,
        energy: crit.energy(),
        residual: crit.residual(),
        stationary: crit.is_stationary(),
        segregation: coupling_integral(&pair),
        lambda: tm.lambda_tilde,
        mu: tm.mu_tilde,
        dist_to_limit: 0.0,
        limit_residual: limit_equation_residual(w.field(), tm.lambda_tilde, tm.mu_tilde),
        sup_u: pair.u().max_abs(),
        sup_v: pair.v().max_abs(),
        def_gap: pair_distance(&pair, &eta),
        def_drop: energy_star(w) - energy_star(&SignedField::from_segregated(&eta)?),
        def_dist_to_limit: quotient_distance(&eta, &pair),
        collapse_flag: false,
        history: est.history.clone(),
    };
    Ok(record)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LimitPointRow {
    pub beta: Beta,
    pub state_gap: f64,
    pub deformation_gap: f64,
    pub residual: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LimitPointDiagnostic {
    pub rows: Vec<LimitPointRow>,
    /// Gap of the limit state to itself and to its deformation.
    pub infinite_row: LimitPointRow,
    pub state_gaps_non_increasing: bool,
    pub deformation_gaps_non_increasing: bool,
    pub final_state_gap: f64,
    pub within_tolerance: bool,
}

impl LimitPointDiagnostic {
    pub fn passed(&self) -> bool {
        self.state_gaps_non_increasing
            && self.deformation_gaps_non_increasing
            && self.within_tolerance
    }
}

/// Whether the extracted β-states and their unit-time deformations approach
/// the limit state (up to σ) along the schedule.
pub fn limit_point_check(report: &SweepReport, tol: f64) -> LimitPointDiagnostic {
    let rows: Vec<LimitPointRow> = report
        .records
        .iter()
        .map(|r| LimitPointRow {
            beta: r.beta,
            state_gap: r.dist_to_limit,
            deformation_gap: r.def_dist_to_limit,
            residual: r.residual,
        })
        .collect();
    let self_gap = report
        .limit_state
        .as_ref()
        .map_or(0.0, |s| quotient_distance(s, s));
    let infinite_row = LimitPointRow {
        beta: Beta::Infinite,
        state_gap: self_gap,
        deformation_gap: report.infinite.def_gap,
        residual: report.infinite.residual,
    };
    let non_increasing =
        |f: fn(&LimitPointRow) -> f64| rows.windows(2).all(|w| f(&w[1]) <= f(&w[0]) + 1e-12);
    let final_state_gap = rows.last().map_or(f64::INFINITY, |r| r.state_gap);
    LimitPointDiagnostic {
        state_gaps_non_increasing: non_increasing(|r| r.state_gap),
        deformation_gaps_non_increasing: non_increasing(|r| r.deformation_gap),
        within_tolerance: final_state_gap <= tol,
        final_state_gap,
        infinite_row,
        rows,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functionals::gradient_infty_with;
    use crate::grid::Field;
    use std::f64::consts::PI;

    #[test]
    fn segregation_of_disjoint_and_equal_pairs() {
        let g = Grid::interval(63, 1.0).unwrap();
        let f = Field::from_fn(g, |x| (2.0 * PI * x[0]).sin());
        let s = StatePair::normalized(&f, &f.neg()).unwrap();
        assert_eq!(segregation_integral(&s), 0.0);
        let p = Field::from_fn(g, |x| (PI * x[0]).sin());
        let d = StatePair::normalized(&p, &p).unwrap();
        let q = d.u().integrate(|x| x.powi(4));
        assert!((segregation_integral(&d) - q).abs() < 1e-14 * q);
        // u = v: the residual collapses to |(λ − μ)u|₂ = 0.
        assert!(limit_residual(&d, 50.0) < 1e-9);
    }

    #[test]
    fn limit_residual_vanishes_at_a_limit_critical_point() {
        let g = Grid::interval(63, 1.0).unwrap();
        let f = Field::from_fn(g, |x| (2.0 * PI * x[0]).sin());
        let w = SignedField::normalized(&f).unwrap();
        let cfg = crate::flows::FlowConfig {
            residual_tol: 1e-10,
            ..crate::flows::FlowConfig::infty_default()
        };
        let (w, _) = crate::flows::relax_infty(&w, &cfg).unwrap();
        let (_, tm) = gradient_infty_with(&w).unwrap();
        // strong residual = −Δ S_∞, bounded by h⁻² times the H¹ residual
        assert!(limit_equation_residual(w.field(), tm.lambda_tilde, tm.mu_tilde) < 1e-4);
    }

    #[test]
    fn schedule_must_increase() {
        let g = Grid::interval(63, 1.0).unwrap();
        let cfg = SweepConfig::default();
        assert!(matches!(
            run_sweep(1, &[10.0, 1.0], &g, &cfg),
            Err(Error::Config { .. })
        ));
        assert!(run_sweep(1, &[], &g, &cfg).is_err());
    }

    #[test]
    fn small_sweep_report_is_consistent() {
        let g = Grid::interval(63, 1.0).unwrap();
        let report = run_sweep(1, &[10.0, 100.0, 1000.0], &g, &SweepConfig::default()).unwrap();
        assert_eq!(report.records.len(), 3);
        for w in report.records.windows(2) {
            assert!(w[0].level <= w[1].level + 1e-9);
        }
        assert!(report
            .records
            .iter()
            .all(|r| r.level <= report.infinite.level + 1e-9));
        assert!(report.records.iter().all(SweepRecord::holder_bound_holds));
        let csv = report.to_csv(Some("config_hash=0"));
        assert_eq!(csv.lines().count(), 2 + 4);
        assert!(csv.lines().last().unwrap().starts_with("inf,"));
        let diag = limit_point_check(&report, 1.0);
        assert_eq!(diag.infinite_row.state_gap, 0.0);
        let json = report.to_json(true).unwrap();
        assert_eq!(json["states"].as_array().unwrap().len(), 4);
    }
}
