//! Time stepping of the constrained flows `∂ₜ(U, V) = −S_β(U, V)` and
//! `∂ₜW = −S_∞(W)`, and the relaxation drivers built on them.
//!
//! The β-flow step treats diffusion and the lagged reaction coefficients
//! implicitly and the multiplier term explicitly:
//!
//! ```text
//! (I + dt(−Δ + u² + βv²)) U' = (1 + dt λ) u
//! ```
//!
//! (symmetrically for `V'`). The matrix is an M-matrix and the right-hand
//! side is nonnegative, so `U' ≥ 0`. Each component is then renormalized to
//! unit mass. The limit flow uses explicit Euler on the H¹ gradient and
//! renormalizes `W'⁺` and `W'⁻` separately.

use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::{
    coupling_integral, energy_beta, energy_star_field, gradient_beta_with, gradient_infty_field,
    SignedField, StatePair,
};
use crate::grid::{h1_seminorm_sq, solve_shifted, Field};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    pub dt_init: f64,
    pub dt_min: f64,
    pub residual_tol: f64,
    pub max_steps: usize,
    pub backtrack_factor: f64,
    /// Stop once this much flow time has elapsed; `INFINITY` relaxes to stationarity.
    #[serde(default = "infinite")]
    pub time_budget: f64,
    /// Keep every `record_every`-th accepted state in the trace (0 keeps none).
    #[serde(default)]
    pub record_every: usize,
}

fn infinite() -> f64 {
    f64::INFINITY
}

impl FlowConfig {
    pub fn beta_default() -> Self {
        FlowConfig {
            dt_init: 1e-3,
            dt_min: 1e-12,
            residual_tol: 1e-6,
            max_steps: 500_000,
            backtrack_factor: 0.5,
            time_budget: f64::INFINITY,
            record_every: 0,
        }
    }

    pub fn infty_default() -> Self {
        FlowConfig {
            dt_init: 0.05,
            ..Self::beta_default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, msg: &str| {
            Err(Error::Config {
                key: key.into(),
                msg: msg.into(),
            })
        };
        if !(self.dt_init > 0.0) {
            return bad("dt_init", "must be positive");
        }
        if !(self.dt_min > 0.0 && self.dt_min <= self.dt_init) {
            return bad("dt_min", "must satisfy 0 < dt_min <= dt_init");
        }
        if !(self.residual_tol > 0.0) {
            return bad("residual_tol", "must be positive");
        }
        if !(self.backtrack_factor > 0.0 && self.backtrack_factor < 1.0) {
            return bad("backtrack_factor", "must lie in (0, 1)");
        }
        if !(self.time_budget > 0.0) {
            return bad("time_budget", "must be positive");
        }
        Ok(())
    }

    /// The unit-time deformation used by the minimax rounds.
    pub fn unit_time(&self) -> Self {
        FlowConfig {
            time_budget: 1.0,
            ..*self
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub step: usize,
    pub time: f64,
    pub dt: f64,
    pub energy: f64,
    pub residual: f64,
    pub lambda: f64,
    pub mu: f64,
    /// Largest `| |U'|₂ − 1 |` before renormalization.
    pub mass_drift: f64,
    /// Smallest nodal value of the accepted state (β-flow: after the clamp).
    pub min_value: f64,
    /// Largest negative value removed by the positivity clamp.
    #[serde(default)]
    pub clamp: f64,
}

#[derive(Clone, Debug, Default)]
pub struct FlowTrace {
    pub entries: Vec<TraceEntry>,
    pub converged: bool,
    /// `(step, state)` for recorded states; limit-flow states are stored as `(W⁺, W⁻)`.
    pub states: Vec<(usize, StatePair)>,
}

impl FlowTrace {
    pub fn final_entry(&self) -> &TraceEntry {
        self.entries
            .last()
            .expect("trace always holds the initial entry")
    }

    pub fn accepted_steps(&self) -> usize {
        self.entries.len() - 1
    }

    pub fn final_time(&self) -> f64 {
        self.final_entry().time
    }

    pub const CSV_HEADER: &'static str =
        "step,time,dt,energy,residual,lambda,mu,mass_drift,min_value";

    pub fn to_csv(&self, comment: Option<&str>) -> String {
        let mut s = String::new();
        if let Some(c) = comment {
            for line in c.lines() {
                writeln!(s, "# {line}").unwrap();
            }
        }
        writeln!(s, "{}", Self::CSV_HEADER).unwrap();
        for e in &self.entries {
            writeln!(
                s,
                "{},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}",
                e.step,
                e.time,
                e.dt,
                e.energy,
                e.residual,
                e.lambda,
                e.mu,
                e.mass_drift,
                e.min_value
            )
            .unwrap();
        }
        s
    }

    pub fn write_csv<W: Write>(&self, comment: Option<&str>, mut out: W) -> Result<()> {
        out.write_all(self.to_csv(comment).as_bytes())?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepInfo {
    pub mass_drift: f64,
    pub clamp: f64,
}

/// One β-flow step of size `dt`.
pub fn step_beta(s: &StatePair, beta: f64, dt: f64) -> Result<StatePair> {
    step_beta_detail(s, beta, dt).map(|(s, _)| s)
}

pub fn step_beta_detail(s: &StatePair, beta: f64, dt: f64) -> Result<(StatePair, StepInfo)> {
    assert!(dt > 0.0, "dt must be positive");
    let (_, _, m) = gradient_beta_with(s, beta);
    let inv = 1.0 / dt;
    let (u, v) = (s.u(), s.v());
    let half = |own: &Field, other: &Field, mult: f64| -> Result<(Field, f64, f64)> {
        let shift: Vec<f64> = own
            .values()
            .iter()
            .zip(other.values())
            .map(|(&a, &b)| inv + a * a + beta * b * b)
            .collect();
        let rhs = own.scaled(inv + mult);
        let next = solve_shifted(&rhs, Some(&shift))?;
        let clamp = (-next.min_value()).max(0.0);
        let next = if clamp > 0.0 { next.pos_part() } else { next };
        let mass = next.norm();
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::FlowCollapse(
                "component vanished after clamping".into(),
            ));
        }
        Ok((next.scaled(1.0 / mass), (mass - 1.0).abs(), clamp))
    };
    let (nu, du, cu) = half(u, v, m.lambda)?;
    let (nv, dv, cv) = half(v, u, m.mu)?;
    Ok((
        StatePair::from_raw(nu, nv),
        StepInfo {
            mass_drift: du.max(dv),
            clamp: cu.max(cv),
        },
    ))
}

/// One explicit limit-flow step `W' = w − dt S_∞(w)` followed by separate
/// renormalization of both sign parts.
pub fn step_infty(w: &SignedField, dt: f64) -> Result<SignedField> {
    step_infty_detail(w, dt).map(|(w, _)| w)
}

pub fn step_infty_detail(w: &SignedField, dt: f64) -> Result<(SignedField, StepInfo)> {
    assert!(dt > 0.0, "dt must be positive");
    let (g, _) = gradient_infty_field(w.field())?;
    let next = w.field().axpy(-dt, &g);
    let p = next.pos_part();
    let n = next.neg_part();
    let (pm, nm) = (p.norm(), n.norm());
    if !(pm > 0.0 && nm > 0.0) {
        return Err(Error::FlowCollapse(
            "a sign part of the limit state vanished".into(),
        ));
    }
    let out = p.scaled(1.0 / pm).sub(&n.scaled(1.0 / nm));
    let info = StepInfo {
        mass_drift: (pm - 1.0).abs().max((nm - 1.0).abs()),
        clamp: 0.0,
    };
    Ok((SignedField::from_raw(out), info))
}

struct Probe {
    energy: f64,
    residual: f64,
    lambda: f64,
    mu: f64,
    min_value: f64,
}

trait ConstrainedFlow {
    type State: Clone;
    fn energy(&self, s: &Self::State) -> f64;
    fn probe(&self, s: &Self::State) -> Result<Probe>;
    fn step(&self, s: &Self::State, dt: f64) -> Result<(Self::State, StepInfo)>;
    fn as_pair(&self, s: &Self::State) -> StatePair;
}

struct BetaFlow(f64);

impl ConstrainedFlow for BetaFlow {
    type State = StatePair;

    fn energy(&self, s: &StatePair) -> f64 {
        energy_beta(s, self.0)
    }

    fn probe(&self, s: &StatePair) -> Result<Probe> {
        let (a, b, m) = gradient_beta_with(s, self.0);
        Ok(Probe {
            energy: energy_beta(s, self.0),
            residual: (a.dot(&a) + b.dot(&b)).sqrt(),
            lambda: m.lambda,
            mu: m.mu,
            min_value: s.u().min_value().min(s.v().min_value()),
        })
    }

    fn step(&self, s: &StatePair, dt: f64) -> Result<(StatePair, StepInfo)> {
        step_beta_detail(s, self.0, dt)
    }

    fn as_pair(&self, s: &StatePair) -> StatePair {
        s.clone()
    }
}

struct LimitFlow;

impl ConstrainedFlow for LimitFlow {
    type State = SignedField;

    fn energy(&self, w: &SignedField) -> f64 {
        energy_star_field(w.field())
    }

    fn probe(&self, w: &SignedField) -> Result<Probe> {
        let (g, tm) = gradient_infty_field(w.field())?;
        Ok(Probe {
            energy: energy_star_field(w.field()),
            residual: h1_seminorm_sq(&g).sqrt(),
            lambda: tm.lambda_tilde,
            mu: tm.mu_tilde,
            min_value: w.field().min_value(),
        })
    }

    fn step(&self, w: &SignedField, dt: f64) -> Result<(SignedField, StepInfo)> {
        step_infty_detail(w, dt)
    }

    fn as_pair(&self, w: &SignedField) -> StatePair {
        w.to_pair()
    }
}

/// Accepted-step rule: the energy may not rise by more than rounding.
/// Rounding resolution of an energy value: increases below it count as no change.
pub fn energy_slack(e: f64) -> f64 {
    1e-14 * e.abs().max(1.0)
}

/// Consecutive accepted steps before the step size is allowed to grow back.
const GROW_AFTER: usize = 4;

fn relax<F: ConstrainedFlow>(
    flow: &F,
    start: &F::State,
    cfg: &FlowConfig,
) -> Result<(F::State, FlowTrace)> {
    cfg.validate()?;
    let mut state = start.clone();
    let mut probe = flow.probe(&state)?;
    let mut trace = FlowTrace::default();
    trace.entries.push(TraceEntry {
        step: 0,
        time: 0.0,
        dt: 0.0,
        energy: probe.energy,
        residual: probe.residual,
        lambda: probe.lambda,
        mu: probe.mu,
        mass_drift: 0.0,
        min_value: probe.min_value,
        clamp: 0.0,
    });
    if cfg.record_every > 0 {
        trace.states.push((0, flow.as_pair(&state)));
    }
    let mut dt = cfg.dt_init;
    let mut time = 0.0;
    let mut streak = 0;
    for step in 1..=cfg.max_steps {
        if probe.residual < cfg.residual_tol {
            trace.converged = true;
            break;
        }
        let remaining = cfg.time_budget - time;
        if cfg.time_budget.is_finite() && remaining <= 1e-12 * cfg.time_budget.max(1.0) {
            break;
        }
        let (next, info, energy, used) = loop {
            let trial = dt.min(remaining);
            let (cand, info) = flow.step(&state, trial)?;
            let e = flow.energy(&cand);
            if e <= probe.energy + energy_slack(probe.energy) {
                break (cand, info, e, trial);
            }
            dt *= cfg.backtrack_factor;
            streak = 0;
            if dt < cfg.dt_min {
                return Err(Error::StepperFailure {
                    time,
                    dt_min: cfg.dt_min,
                });
            }
        };
        state = next;
        time += used;
        probe = flow.probe(&state)?;
        debug_assert!((probe.energy - energy).abs() <= energy_slack(energy));
        trace.entries.push(TraceEntry {
            step,
            time,
            dt: used,
            energy: probe.energy,
            residual: probe.residual,
            lambda: probe.lambda,
            mu: probe.mu,
            mass_drift: info.mass_drift,
            min_value: probe.min_value,
            clamp: info.clamp,
        });
        if cfg.record_every > 0 && step % cfg.record_every == 0 {
            trace.states.push((step, flow.as_pair(&state)));
        }
        streak += 1;
        if streak >= GROW_AFTER && dt < cfg.dt_init {
            dt = (dt / cfg.backtrack_factor).min(cfg.dt_init);
            streak = 0;
        }
    }
    if probe.residual < cfg.residual_tol {
        trace.converged = true;
    }
    if cfg.record_every > 0
        && trace.states.last().map(|(k, _)| *k) != Some(trace.final_entry().step)
    {
        trace
            .states
            .push((trace.final_entry().step, flow.as_pair(&state)));
    }
    Ok((state, trace))
}

/// Runs the β-flow until `|S_β|₂ < residual_tol`, the time budget is spent,
/// or `max_steps` accepted steps; the step size halves on any energy increase.
pub fn relax_beta(s: &StatePair, beta: f64, cfg: &FlowConfig) -> Result<(StatePair, FlowTrace)> {
    relax(&BetaFlow(beta), s, cfg)
}

/// As [`relax_beta`] for the limit flow, with the residual measured as `‖S_∞‖`.
pub fn relax_infty(w: &SignedField, cfg: &FlowConfig) -> Result<(SignedField, FlowTrace)> {
    relax(&LimitFlow, w, cfg)
}

/// `η_β`: the state reached after unit flow time.
pub fn deform_beta(s: &StatePair, beta: f64, cfg: &FlowConfig) -> Result<StatePair> {
    relax_beta(s, beta, &cfg.unit_time()).map(|(s, _)| s)
}

/// `η_∞` on a segregated pair: flow `w = u − v` for unit time, return `(W⁺, W⁻)`.
pub fn deform_infty(s: &StatePair, cfg: &FlowConfig) -> Result<StatePair> {
    let w = SignedField::from_segregated(s)?;
    relax_infty(&w, &cfg.unit_time()).map(|(w, _)| w.to_pair())
}

/// `dist₂` between two pairs.
pub fn pair_distance(a: &StatePair, b: &StatePair) -> f64 {
    let du = a.u().sub(b.u());
    let dv = a.v().sub(b.v());
    (du.dot(&du) + dv.dot(&dv)).sqrt()
}

/// `min(dist₂(a, b), dist₂(a, σb))`.
pub fn quotient_distance(a: &StatePair, b: &StatePair) -> f64 {
    pair_distance(a, b).min(pair_distance(a, &b.swapped()))
}

/// Whether a segregated pair still has nodewise disjoint components.
pub fn is_segregated(s: &StatePair) -> bool {
    coupling_integral(s) == 0.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functionals::{energy_star, gradient_beta, residual_beta, residual_infty};
    use crate::grid::Grid;
    use std::f64::consts::PI;

    fn grid() -> Grid {
        Grid::interval(63, 1.0).unwrap()
    }

    fn two_bump(g: Grid) -> StatePair {
        let u = Field::from_fn(g, |x| {
            if x[0] < 0.5 {
                (2.0 * PI * x[0]).sin()
            } else {
                0.0
            }
        });
        let v = Field::from_fn(g, |x| {
            if x[0] > 0.5 {
                -(2.0 * PI * x[0]).sin()
            } else {
                0.0
            }
        });
        StatePair::normalized(&u, &v).unwrap()
    }

    fn phi1_pair(g: Grid) -> StatePair {
        let f = Field::from_fn(g, |x| (PI * x[0]).sin());
        StatePair::normalized(&f, &f).unwrap()
    }

    #[test]
    fn step_is_equivariant_and_positive() {
        let s = two_bump(grid());
        let a = step_beta(&s, 10.0, 1e-3).unwrap();
        let b = step_beta(&s.swapped(), 10.0, 1e-3).unwrap();
        assert_eq!(a.swapped(), b);
        assert!(a.u().min_value() >= 0.0 && a.v().min_value() >= 0.0);
        let (mu, mv) = a.masses();
        assert!((mu - 1.0).abs() < 1e-14 && (mv - 1.0).abs() < 1e-14);
    }

    #[test]
    fn one_step_from_symmetric_state_decreases_energy() {
        let g = Grid::interval(127, 1.0).unwrap();
        let s = phi1_pair(g);
        let next = step_beta(&s, 10.0, 1e-3).unwrap();
        assert!(energy_beta(&next, 10.0) < energy_beta(&s, 10.0));
    }

    #[test]
    fn stationary_state_is_a_fixed_point() {
        let g = grid();
        let cfg = FlowConfig {
            residual_tol: 1e-11,
            ..FlowConfig::beta_default()
        };
        let (s, trace) = relax_beta(&two_bump(g), 10.0, &cfg).unwrap();
        assert!(trace.converged);
        assert!(residual_beta(&s, 10.0) < 1e-11);
        let next = step_beta(&s, 10.0, 1e-3).unwrap();
        assert!(pair_distance(&s, &next) < 1e-10);
    }

    #[test]
    fn relax_trace_invariants() {
        let g = grid();
        let cfg = FlowConfig {
            residual_tol: 1e-8,
            ..FlowConfig::beta_default()
        };
        let (_, trace) = relax_beta(&two_bump(g), 100.0, &cfg).unwrap();
        assert!(trace.converged);
        for w in trace.entries.windows(2) {
            assert!(w[1].energy <= w[0].energy + 1e-12);
            assert!(w[1].time > w[0].time);
            assert!(w[1].min_value >= 0.0);
        }
        let csv = trace.to_csv(Some("config_hash=x"));
        assert!(csv.starts_with("# config_hash=x\n"));
        assert_eq!(csv.lines().nth(1).unwrap(), FlowTrace::CSV_HEADER);
        assert_eq!(csv.lines().count(), trace.entries.len() + 2);
    }

    #[test]
    fn unit_time_budget_is_respected() {
        let g = grid();
        let cfg = FlowConfig {
            residual_tol: 1e-14,
            ..FlowConfig::beta_default()
        }
        .unit_time();
        let (_, trace) = relax_beta(&two_bump(g), 10.0, &cfg).unwrap();
        assert!((trace.final_time() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn limit_step_oddness_and_mass() {
        let g = grid();
        let w = SignedField::from_segregated(&two_bump(g)).unwrap();
        let w = step_infty(&w, 0.05).unwrap();
        let a = step_infty(&w, 0.05).unwrap();
        let b = step_infty(&w.neg(), 0.05).unwrap();
        assert!(a.field().add(b.field()).max_abs() < 1e-12);
        assert!((a.field().pos_part().norm() - 1.0).abs() < 1e-14);
        assert!((a.field().neg_part().norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn limit_relaxation_reaches_stationarity() {
        let g = grid();
        let w = SignedField::from_segregated(&two_bump(g)).unwrap();
        let (out, trace) = relax_infty(&w, &FlowConfig::infty_default()).unwrap();
        assert!(trace.converged);
        assert!(residual_infty(&out).unwrap() < 1e-6);
        assert!(energy_star(&out) <= energy_star(&w));
        for e in trace.entries.windows(2) {
            assert!(e[1].energy <= e[0].energy + 1e-12);
        }
    }

    #[test]
    fn collapse_is_reported() {
        // A stepper fed a pair with a vanishing component cannot renormalize.
        let g = grid();
        let f = Field::from_fn(g, |x| (PI * x[0]).sin());
        let s = StatePair::from_raw(f.scaled(1.0 / f.norm()), Field::zeros(g));
        assert!(matches!(
            step_beta(&s, 1.0, 1e-3),
            Err(Error::FlowCollapse(_))
        ));
        let _ = gradient_beta(&s, 1.0);
    }

    #[test]
    fn invalid_config_is_rejected() {
        let s = two_bump(grid());
        let cfg = FlowConfig {
            backtrack_factor: 1.5,
            ..FlowConfig::beta_default()
        };
        assert!(matches!(
            relax_beta(&s, 1.0, &cfg),
            Err(Error::Config { .. })
        ));
    }
}
