//! Randomized invariant suites behind `gpseg check`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::flows::{relax_beta, step_beta, step_infty, FlowConfig};
use crate::functionals::{energy_beta, gradient_beta, gradient_infty_with, StatePair};
use crate::grid::{
    inner_l2, neg_laplacian, norm_l2, read_snapshot, solve_poisson, write_snapshot, Grid,
};
use crate::minimax::{build_phi_basis, default_sample_size, GenusFamily};
use crate::sampling::{random_signed_field, random_smooth_field, random_state_pair};
use crate::sweep::{run_sweep, SweepConfig};

#[derive(Clone, Debug, Serialize)]
pub struct CheckRow {
    pub suite: &'static str,
    pub name: &'static str,
    pub passed: bool,
    /// Worst observed value (or the failing error).
    pub detail: String,
}

fn row(suite: &'static str, name: &'static str, r: Result<(bool, String)>) -> CheckRow {
    match r {
        Ok((passed, detail)) => CheckRow {
            suite,
            name,
            passed,
            detail,
        },
        Err(e) => CheckRow {
            suite,
            name,
            passed: false,
            detail: format!("error: {e}"),
        },
    }
}

/// Runs every suite with `samples` random inputs per check, drawing all
/// randomness from one generator seeded with `seed`.
pub fn run_checks(seed: u64, samples: usize) -> Vec<CheckRow> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g1 = Grid::interval(63, 1.0).expect("valid grid");
    let g2 = Grid::new(2, 15, &[1.0, 2.0]).expect("valid grid");
    let mut rows = Vec::new();

    rows.push(row(
        "grid",
        "poisson_residual",
        (|| {
            let mut worst: f64 = 0.0;
            for g in [g1, g2] {
                for _ in 0..samples.min(20) {
                    let f = random_smooth_field(g, &mut rng);
                    let u = solve_poisson(&f)?;
                    worst = worst.max(norm_l2(&neg_laplacian(&u).sub(&f)) / norm_l2(&f));
                }
            }
            Ok((worst <= 1e-9, format!("{worst:.3e}")))
        })(),
    ));

    rows.push(row(
        "grid",
        "snapshot_roundtrip",
        (|| {
            let mut ok = true;
            for g in [g1, g2] {
                let f = random_smooth_field(g, &mut rng);
                let mut buf = Vec::new();
                write_snapshot(&f, Some("check"), &mut buf)?;
                ok &= read_snapshot(buf.as_slice())? == f;
            }
            Ok((
                ok,
                if ok {
                    "exact".into()
                } else {
                    "mismatch".into()
                },
            ))
        })(),
    ));

    rows.push(row(
        "functionals",
        "multiplier_orthogonality",
        (|| {
            let mut worst: f64 = 0.0;
            for _ in 0..samples {
                let s = random_state_pair(g1, &mut rng);
                for beta in [1.0, 1e3] {
                    let (a, b) = gradient_beta(&s, beta);
                    worst = worst
                        .max(inner_l2(&a, s.u())?.abs())
                        .max(inner_l2(&b, s.v())?.abs());
                }
            }
            Ok((worst <= 1e-10, format!("{worst:.3e}")))
        })(),
    ));

    rows.push(row(
        "functionals",
        "swap_symmetry",
        (|| {
            let mut ok = true;
            for _ in 0..samples {
                let s = random_state_pair(g1, &mut rng);
                let t = s.swapped();
                ok &= energy_beta(&s, 10.0) == energy_beta(&t, 10.0);
                let (a, b) = gradient_beta(&s, 10.0);
                let (c, d) = gradient_beta(&t, 10.0);
                ok &= a == d && b == c;
            }
            Ok((
                ok,
                if ok {
                    "bitwise".into()
                } else {
                    "asymmetric".into()
                },
            ))
        })(),
    ));

    rows.push(row(
        "functionals",
        "tilde_orthogonality",
        (|| {
            let mut worst: f64 = 0.0;
            for _ in 0..samples {
                let w = random_signed_field(g1, &mut rng);
                let (s, _) = gradient_infty_with(&w)?;
                worst = worst
                    .max(inner_l2(&s, &w.field().pos_part())?.abs())
                    .max(inner_l2(&s, &w.field().neg_part())?.abs());
            }
            Ok((worst <= 1e-8, format!("{worst:.3e}")))
        })(),
    ));

    rows.push(row(
        "functionals",
        "det_a_positive",
        (|| {
            let mut min_det = f64::INFINITY;
            for _ in 0..samples {
                let w = random_signed_field(g1, &mut rng);
                min_det = min_det.min(gradient_infty_with(&w)?.1.det_a);
            }
            Ok((min_det > 0.0, format!("min det A = {min_det:.3e}")))
        })(),
    ));

    rows.push(row(
        "functionals",
        "diagonal_bound",
        (|| {
            let mut worst = f64::INFINITY;
            for _ in 0..samples {
                let s = random_state_pair(g1, &mut rng);
                let d = StatePair::new(s.u().clone(), s.u().clone())?;
                for beta in [1.0, 1e3] {
                    let bound = (1.0 + beta) / (2.0 * g1.measure());
                    worst = worst.min(energy_beta(&d, beta) - bound);
                }
            }
            Ok((worst >= -1e-8, format!("min J - bound = {worst:.3e}")))
        })(),
    ));

    rows.push(row(
        "flows",
        "step_mass_positivity",
        (|| {
            let mut drift: f64 = 0.0;
            let mut min: f64 = 0.0;
            for _ in 0..samples {
                let s = random_state_pair(g1, &mut rng);
                let t = step_beta(&s, 100.0, 1e-3)?;
                let (a, b) = t.masses();
                drift = drift.max((a - 1.0).abs()).max((b - 1.0).abs());
                min = min.min(t.u().min_value()).min(t.v().min_value());
            }
            Ok((
                drift <= 1e-12 && min >= 0.0,
                format!("mass drift {drift:.3e}, min {min:.3e}"),
            ))
        })(),
    ));

    rows.push(row(
        "flows",
        "step_equivariance",
        (|| {
            let mut ok = true;
            let mut worst: f64 = 0.0;
            for _ in 0..samples {
                let s = random_state_pair(g1, &mut rng);
                ok &= step_beta(&s.swapped(), 10.0, 1e-3)? == step_beta(&s, 10.0, 1e-3)?.swapped();
                let w = random_signed_field(g1, &mut rng);
                let a = step_infty(&w.neg(), 0.05)?;
                let b = step_infty(&w, 0.05)?.neg();
                worst = worst.max(norm_l2(&a.field().sub(b.field())));
            }
            Ok((ok && worst <= 1e-12, format!("odd gap {worst:.3e}")))
        })(),
    ));

    rows.push(row(
        "flows",
        "energy_monotone",
        (|| {
            let cfg = FlowConfig {
                max_steps: 50,
                ..FlowConfig::beta_default()
            };
            let mut worst = f64::NEG_INFINITY;
            for _ in 0..samples.min(20) {
                let s = random_state_pair(g1, &mut rng);
                let (_, trace) = relax_beta(&s, 100.0, &cfg)?;
                for w in trace.entries.windows(2) {
                    worst = worst.max(w[1].energy - w[0].energy);
                }
            }
            Ok((worst <= 1e-12, format!("max increase {worst:.3e}")))
        })(),
    ));

    rows.push(row(
        "minimax",
        "family_equivariance",
        (|| {
            let mut ok = true;
            for k in 1..=3 {
                let basis = build_phi_basis(&g1, k)?;
                let mut fam = GenusFamily::from_basis(&basis, default_sample_size(k), seed)?;
                ok &= fam.is_equivariant() && fam.is_valid();
                let flow = FlowConfig::beta_default().unit_time();
                fam.deform_with(|s| crate::flows::deform_beta(s, 10.0, &flow))?;
                ok &= fam.is_equivariant() && fam.is_valid();
            }
            Ok((
                ok,
                if ok {
                    "bitwise".into()
                } else {
                    "broken".into()
                },
            ))
        })(),
    ));

    rows.push(row(
        "sweep",
        "record_invariants",
        (|| {
            let report = run_sweep(1, &[10.0, 100.0], &g1, &SweepConfig::default())?;
            let mut ok = report
                .records
                .iter()
                .zip(&report.states)
                .all(|(r, s)| r.check(s).is_ok());
            ok &= report
                .records
                .windows(2)
                .all(|w| w[0].level <= w[1].level + 1e-9);
            ok &= report
                .records
                .iter()
                .all(|r| r.level <= report.infinite.level + 1e-9);
            ok &= report.records.iter().all(|r| r.holder_bound_holds());
            let levels: Vec<String> = report
                .records
                .iter()
                .chain(std::iter::once(&report.infinite))
                .map(|r| format!("{}:{:.6}", r.beta, r.level))
                .collect();
            Ok((ok, levels.join(" ")))
        })(),
    ));

    rows
}

/// Fixed-width table, one line per check.
pub fn format_table(rows: &[CheckRow]) -> String {
    let mut s = format!(
        "{:<12} {:<26} {:<6} {}\n",
        "suite", "check", "result", "detail"
    );
    for r in rows {
        s.push_str(&format!(
            "{:<12} {:<26} {:<6} {}\n",
            r.suite,
            r.name,
            if r.passed { "PASS" } else { "FAIL" },
            r.detail
        ));
    }
    s
}
