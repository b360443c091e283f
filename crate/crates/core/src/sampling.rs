//! Seeded random states used by the invariant checks and as random starts.

use std::f64::consts::PI;

use rand::Rng;

use crate::functionals::{SignedField, StatePair};
use crate::grid::{Field, Grid};

/// Number of sine modes per axis in a random smooth field.
pub const RANDOM_MODES: usize = 8;

/// `Σ a_k sin(kπx/L)` with `a_k ~ U(-1, 1) / k` (tensor products in 2D).
pub fn random_smooth_field<R: Rng + ?Sized>(grid: Grid, rng: &mut R) -> Field {
    let modes = RANDOM_MODES;
    match grid.dim() {
        1 => {
            let l = grid.length(0);
            let coef: Vec<f64> = (1..=modes)
                .map(|k| rng.gen_range(-1.0..1.0) / k as f64)
                .collect();
            Field::from_fn(grid, |x| {
                coef.iter()
                    .enumerate()
                    .map(|(k, a)| a * ((k + 1) as f64 * PI * x[0] / l).sin())
                    .sum()
            })
        }
        _ => {
            let (lx, ly) = (grid.length(0), grid.length(1));
            let coef: Vec<f64> = (0..modes * modes)
                .map(|i| rng.gen_range(-1.0..1.0) / ((i / modes + 1) * (i % modes + 1)) as f64)
                .collect();
            Field::from_fn(grid, |x| {
                coef.iter()
                    .enumerate()
                    .map(|(i, a)| {
                        let (p, q) = ((i / modes + 1) as f64, (i % modes + 1) as f64);
                        a * (p * PI * x[0] / lx).sin() * (q * PI * x[1] / ly).sin()
                    })
                    .sum()
            })
        }
    }
}

/// A random nonnegative pair `(|f|, |g|)/masses` with generic overlap.
pub fn random_state_pair<R: Rng + ?Sized>(grid: Grid, rng: &mut R) -> StatePair {
    loop {
        let f = random_smooth_field(grid, rng).map(f64::abs);
        let g = random_smooth_field(grid, rng).map(f64::abs);
        if let Ok(s) = StatePair::normalized(&f, &g) {
            return s;
        }
    }
}

/// A random sign-changing field with both parts of unit mass.
pub fn random_signed_field<R: Rng + ?Sized>(grid: Grid, rng: &mut R) -> SignedField {
    loop {
        let f = random_smooth_field(grid, rng);
        if let Ok(w) = SignedField::normalized(&f) {
            return w;
        }
    }
}

/// A random pair together with its swap, so that a start set is closed under σ.
pub fn random_equivariant_pair<R: Rng + ?Sized>(grid: Grid, rng: &mut R) -> (StatePair, StatePair) {
    let s = random_state_pair(grid, rng);
    let t = s.swapped();
    (s, t)
}

/// Segregated symmetric start: `u` and `v` are the positive and negative
/// parts of `sin(2πx/L)` (times `sin(πy/L_y)` in 2D), so `v` is the mirror
/// image of `u`.
pub fn two_bump_pair(grid: Grid) -> StatePair {
    let lx = grid.length(0);
    let ly = if grid.dim() == 2 { grid.length(1) } else { 1.0 };
    let two_d = grid.dim() == 2;
    let f = Field::from_fn(grid, |x| {
        let s = (2.0 * PI * x[0] / lx).sin();
        if two_d {
            s * (PI * x[1] / ly).sin()
        } else {
            s
        }
    });
    StatePair::normalized(&f.pos_part(), &f.neg_part()).expect("two-bump parts are nonzero")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functionals::coupling_integral;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn two_bump_is_segregated_and_mirrored() {
        let g = Grid::interval(127, 1.0).unwrap();
        let s = two_bump_pair(g);
        assert_eq!(coupling_integral(&s), 0.0);
        let (u, v) = (s.u().values(), s.v().values());
        for i in 0..u.len() {
            assert!((u[i] - v[u.len() - 1 - i]).abs() < 1e-12);
        }
        let g2 = Grid::new(2, 31, &[1.0, 1.0]).unwrap();
        let (a, b) = two_bump_pair(g2).masses();
        assert!((a - 1.0).abs() < 1e-12 && (b - 1.0).abs() < 1e-12);
    }

    #[test]
    fn random_starts_are_valid_and_seeded() {
        let g = Grid::interval(63, 1.0).unwrap();
        let a = random_state_pair(g, &mut ChaCha8Rng::seed_from_u64(3));
        let b = random_state_pair(g, &mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(a, b);
        assert!(a.u().min_value() >= 0.0);
        let (s, t) = random_equivariant_pair(g, &mut ChaCha8Rng::seed_from_u64(4));
        assert_eq!(s.swapped(), t);
        let w = random_signed_field(g, &mut ChaCha8Rng::seed_from_u64(5));
        let p = w.to_pair();
        let (m1, m2) = p.masses();
        assert!((m1 - 1.0).abs() < 1e-12 && (m2 - 1.0).abs() < 1e-12);
    }
}
