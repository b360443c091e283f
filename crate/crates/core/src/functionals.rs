//! Energies, Lagrange multipliers and constrained gradients.
//!
//! For finite coupling `β` the state is a pair `(u, v)` of nonnegative fields
//! with unit L² masses and
//!
//! ```text
//! J_β(u, v) = ½(‖u‖² + ‖v‖²) + ¼(|u|₄⁴ + |v|₄⁴) + (β/2) ∫ u²v²
//! ```
//!
//! In the segregated limit the state is a single sign-changing field `w`
//! with `|w⁺|₂ = |w⁻|₂ = 1` and `J*(w) = ½‖w‖² + ¼|w|₄⁴`. Its constrained
//! gradient `S_∞(w) = w + 𝓛(w³ − λ̃w⁺ + μ̃w⁻)` is the H¹ representative,
//! with `𝓛 = (−Δ)⁻¹` and `(λ̃, μ̃)` fixed by `<w±, S_∞(w)> = 0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{h1_seminorm_sq, neg_laplacian, solve_poisson, Field, Grid};

/// Tolerance on the unit-mass constraint accepted by the validating constructors.
pub const MASS_TOL: f64 = 1e-10;

/// Default coupling-integral threshold below which `J_∞` is finite.
pub const SEG_TOL: f64 = 1e-12;

/// Relative singularity floor for the tilde-multiplier system.
pub const DET_FLOOR: f64 = 1e-14;

/// A point of the constraint manifold: `u, v ≥ 0`, `|u|₂ = |v|₂ = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct StatePair {
    u: Field,
    v: Field,
}

impl StatePair {
    /// Validates an already normalized pair.
    pub fn new(u: Field, v: Field) -> Result<Self> {
        u.grid().ensure_compatible(v.grid())?;
        for (name, f) in [("u", &u), ("v", &v)] {
            if f.min_value() < 0.0 {
                return Err(Error::InvalidState(format!(
                    "{name} has negative nodal values"
                )));
            }
            let m = f.norm();
            if (m - 1.0).abs() > MASS_TOL {
                return Err(Error::InvalidState(format!("|{name}|_2 = {m}, expected 1")));
            }
        }
        Ok(StatePair { u, v })
    }

    /// Takes positive parts and rescales each component to unit mass.
    pub fn normalized(u: &Field, v: &Field) -> Result<Self> {
        u.grid().ensure_compatible(v.grid())?;
        Ok(StatePair {
            u: unit_mass(&u.pos_part(), "u")?,
            v: unit_mass(&v.pos_part(), "v")?,
        })
    }

    pub(crate) fn from_raw(u: Field, v: Field) -> Self {
        StatePair { u, v }
    }

    pub fn u(&self) -> &Field {
        &self.u
    }

    pub fn v(&self) -> &Field {
        &self.v
    }

    pub fn grid(&self) -> &Grid {
        self.u.grid()
    }

    pub fn into_parts(self) -> (Field, Field) {
        (self.u, self.v)
    }

    /// σ(u, v) = (v, u).
    pub fn swapped(&self) -> StatePair {
        StatePair {
            u: self.v.clone(),
            v: self.u.clone(),
        }
    }

    /// `u − v`, the signed field of a segregated pair.
    pub fn difference(&self) -> Field {
        self.u.sub(&self.v)
    }

    pub fn masses(&self) -> (f64, f64) {
        (self.u.norm(), self.v.norm())
    }
}

/// A point of the limit manifold: `|w⁺|₂ = |w⁻|₂ = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct SignedField {
    w: Field,
}

impl SignedField {
    pub fn new(w: Field) -> Result<Self> {
        let (p, m) = (w.pos_part().norm(), w.neg_part().norm());
        if (p - 1.0).abs() > MASS_TOL || (m - 1.0).abs() > MASS_TOL {
            return Err(Error::InvalidState(format!(
                "|w+|_2 = {p}, |w-|_2 = {m}, expected 1 and 1"
            )));
        }
        Ok(SignedField { w })
    }

    /// Rescales the positive and negative parts separately to unit mass.
    pub fn normalized(w: &Field) -> Result<Self> {
        let p = unit_mass(&w.pos_part(), "w+")?;
        let m = unit_mass(&w.neg_part(), "w-")?;
        Ok(SignedField { w: p.sub(&m) })
    }

    /// `u − v` for a pair whose components have disjoint supports.
    pub fn from_segregated(s: &StatePair) -> Result<Self> {
        if s.u
            .values()
            .iter()
            .zip(s.v.values())
            .any(|(a, b)| *a != 0.0 && *b != 0.0)
        {
            return Err(Error::InvalidState(
                "pair is not segregated nodewise".into(),
            ));
        }
        Ok(SignedField { w: s.difference() })
    }

    pub(crate) fn from_raw(w: Field) -> Self {
        SignedField { w }
    }

    pub fn field(&self) -> &Field {
        &self.w
    }

    pub fn into_field(self) -> Field {
        self.w
    }

    pub fn grid(&self) -> &Grid {
        self.w.grid()
    }

    pub fn neg(&self) -> SignedField {
        SignedField { w: self.w.neg() }
    }

    /// `(w⁺, w⁻)`, a segregated point of the pair manifold.
    pub fn to_pair(&self) -> StatePair {
        StatePair {
            u: self.w.pos_part(),
            v: self.w.neg_part(),
        }
    }
}

fn unit_mass(f: &Field, name: &str) -> Result<Field> {
    let m = f.norm();
    if !(m > 0.0 && m.is_finite()) {
        return Err(Error::FlowCollapse(format!(
            "{name} has zero mass and cannot be normalized"
        )));
    }
    Ok(f.scaled(1.0 / m))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Multipliers {
    pub lambda: f64,
    pub mu: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TildeMultipliers {
    pub lambda_tilde: f64,
    pub mu_tilde: f64,
    pub det_a: f64,
}

/// `∫ u²v²`.
pub fn coupling_integral(s: &StatePair) -> f64 {
    let vol = s.grid().cell_volume();
    vol * s
        .u
        .values()
        .iter()
        .zip(s.v.values())
        .map(|(a, b)| (a * b) * (a * b))
        .sum::<f64>()
}

fn quartic(f: &Field) -> f64 {
    f.integrate(|x| x * x * x * x)
}

pub fn energy_beta(s: &StatePair, beta: f64) -> f64 {
    0.5 * (h1_seminorm_sq(&s.u) + h1_seminorm_sq(&s.v))
        + 0.25 * (quartic(&s.u) + quartic(&s.v))
        + 0.5 * beta * coupling_integral(s)
}

/// `J_∞(u, v)`: the decoupled energy when the supports are (numerically)
/// disjoint, `f64::INFINITY` otherwise.
pub fn energy_infty(s: &StatePair, seg_tol: f64) -> f64 {
    if coupling_integral(s) <= seg_tol {
        energy_beta(s, 0.0)
    } else {
        f64::INFINITY
    }
}

pub fn energy_star(w: &SignedField) -> f64 {
    energy_star_field(&w.w)
}

pub(crate) fn energy_star_field(w: &Field) -> f64 {
    0.5 * h1_seminorm_sq(w) + 0.25 * quartic(w)
}

/// `λ = ‖u‖² + |u|₄⁴ + β∫u²v²`, `μ` likewise; unit masses make the
/// denominators 1.
pub fn multipliers(s: &StatePair, beta: f64) -> Multipliers {
    let c = coupling_integral(s);
    Multipliers {
        lambda: neg_laplacian(&s.u).dot(&s.u) + quartic(&s.u) + beta * c,
        mu: neg_laplacian(&s.v).dot(&s.v) + quartic(&s.v) + beta * c,
    }
}

/// Same as [`multipliers`] but divided by the actual masses `|u|₂²`, `|v|₂²`.
pub fn multipliers_explicit(s: &StatePair, beta: f64) -> Multipliers {
    let m = multipliers(s, beta);
    Multipliers {
        lambda: m.lambda / s.u.dot(&s.u),
        mu: m.mu / s.v.dot(&s.v),
    }
}

/// `S_β(u, v) = (−Δu + u³ + βuv² − λu, −Δv + v³ + βu²v − μv)`.
pub fn gradient_beta(s: &StatePair, beta: f64) -> (Field, Field) {
    let (a, b, _) = gradient_beta_with(s, beta);
    (a, b)
}

pub fn gradient_beta_with(s: &StatePair, beta: f64) -> (Field, Field, Multipliers) {
    let lu = neg_laplacian(&s.u);
    let lv = neg_laplacian(&s.v);
    let c = coupling_integral(s);
    let m = Multipliers {
        lambda: lu.dot(&s.u) + quartic(&s.u) + beta * c,
        mu: lv.dot(&s.v) + quartic(&s.v) + beta * c,
    };
    // Same expression for both components so that σ commutes bitwise.
    let component = |lap: &Field, own: &Field, other: &Field, mult: f64| -> Vec<f64> {
        lap.values()
            .iter()
            .zip(own.values().iter().zip(other.values()))
            .map(|(l, (&a, &b))| l + a * a * a + beta * a * (b * b) - mult * a)
            .collect()
    };
    let gu = component(&lu, &s.u, &s.v, m.lambda);
    let gv = component(&lv, &s.v, &s.u, m.mu);
    let grid = *s.grid();
    (Field::from_raw(grid, gu), Field::from_raw(grid, gv), m)
}

/// `|S_β(u, v)|₂`, the L² norm of both components together.
pub fn residual_beta(s: &StatePair, beta: f64) -> f64 {
    let (a, b) = gradient_beta(s, beta);
    (a.dot(&a) + b.dot(&b)).sqrt()
}

/// Pieces of the limit-gradient assembly, kept so callers can reuse the
/// three Poisson solves.
pub(crate) struct LimitParts {
    l_pos: Field,
    l_neg: Field,
    l_cube: Field,
}

fn limit_parts(w: &Field) -> Result<LimitParts> {
    Ok(LimitParts {
        l_pos: solve_poisson(&w.pos_part())?,
        l_neg: solve_poisson(&w.neg_part())?,
        l_cube: solve_poisson(&w.map(|x| x * x * x))?,
    })
}

fn solve_tilde(w: &Field, p: &LimitParts) -> Result<TildeMultipliers> {
    let wp = w.pos_part();
    let wm = w.neg_part();
    let a11 = wp.dot(&p.l_pos);
    let a12 = -wp.dot(&p.l_neg);
    let a21 = -wm.dot(&p.l_pos);
    let a22 = wm.dot(&p.l_neg);
    let base = w.add(&p.l_cube);
    let r1 = base.dot(&wp);
    let r2 = -base.dot(&wm);
    let det = a11 * a22 - a12 * a21;
    let floor = DET_FLOOR * (a11 * a22).abs();
    if !(det > floor) {
        return Err(Error::DegenerateState { det, floor });
    }
    Ok(TildeMultipliers {
        lambda_tilde: (r1 * a22 - a12 * r2) / det,
        mu_tilde: (a11 * r2 - a21 * r1) / det,
        det_a: det,
    })
}

/// Solves the 2x2 system for `(λ̃, μ̃)` in closed form.
pub fn tilde_multipliers(w: &SignedField) -> Result<TildeMultipliers> {
    solve_tilde(&w.w, &limit_parts(&w.w)?)
}

/// `S_∞(w) = w + 𝓛w³ − λ̃𝓛w⁺ + μ̃𝓛w⁻`.
pub fn gradient_infty(w: &SignedField) -> Result<Field> {
    gradient_infty_with(w).map(|(s, _)| s)
}

pub fn gradient_infty_with(w: &SignedField) -> Result<(Field, TildeMultipliers)> {
    gradient_infty_field(&w.w)
}

pub(crate) fn gradient_infty_field(w: &Field) -> Result<(Field, TildeMultipliers)> {
    let parts = limit_parts(w)?;
    let tm = solve_tilde(w, &parts)?;
    let s = Field::from_raw(
        *w.grid(),
        w.values()
            .iter()
            .zip(parts.l_cube.values())
            .zip(parts.l_pos.values().iter().zip(parts.l_neg.values()))
            .map(|((&x, &c), (&p, &m))| x + c - tm.lambda_tilde * p + tm.mu_tilde * m)
            .collect(),
    );
    Ok((s, tm))
}

/// `‖S_∞(w)‖`, the H¹ norm of the limit gradient.
pub fn residual_infty(w: &SignedField) -> Result<f64> {
    let (s, _) = gradient_infty_with(w)?;
    Ok(h1_seminorm_sq(&s).sqrt())
}

/// `|−Δw + w³ − λw⁺ + μw⁻|₂`, the strong-form residual of the limit equation.
pub fn limit_equation_residual(w: &Field, lambda: f64, mu: f64) -> f64 {
    let lw = neg_laplacian(w);
    lw.zip_map(w, |l, x| {
        l + x * x * x - lambda * x.max(0.0) + mu * (-x).max(0.0)
    })
    .norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::{random_signed_field, random_state_pair};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn grid() -> Grid {
        Grid::interval(63, 1.0).unwrap()
    }

    fn split_pair(g: Grid) -> StatePair {
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

    fn phi1(g: Grid) -> Field {
        let f = Field::from_fn(g, |x| (PI * x[0]).sin());
        f.scaled(1.0 / f.norm())
    }

    #[test]
    fn disjoint_supports_decouple() {
        let s = split_pair(grid());
        assert_eq!(coupling_integral(&s), 0.0);
        assert_eq!(energy_beta(&s, 0.0), energy_beta(&s, 1e6));
        assert_eq!(energy_infty(&s, SEG_TOL), energy_beta(&s, 0.0));
        let m = multipliers(&s, 123.0);
        let m0 = multipliers(&s, 0.0);
        assert_eq!(m, m0);
        let expected = h1_seminorm_sq(s.u()) + quartic(s.u());
        assert!((m.lambda - expected).abs() < 1e-10 * expected);
    }

    #[test]
    fn equal_components_energy_and_infinite_limit() {
        let g = grid();
        let p = phi1(g);
        let s = StatePair::new(p.clone(), p.clone()).unwrap();
        let q = quartic(&p);
        let beta = 7.5;
        let expected = 0.5 * 2.0 * g.lambda_min() + 0.25 * 2.0 * q + 0.5 * beta * q;
        assert!((energy_beta(&s, beta) - expected).abs() < 1e-10 * expected);
        assert_eq!(energy_infty(&s, SEG_TOL), f64::INFINITY);
    }

    #[test]
    fn star_energy_matches_segregated_pair_when_parts_are_not_adjacent() {
        // Sign parts separated by at least one zero node: the H¹ cross term vanishes.
        let g = Grid::interval(63, 1.0).unwrap();
        let w = Field::from_fn(g, |x| (2.0 * PI * x[0]).sin());
        let mut vals = w.into_values();
        vals[31] = 0.0; // x = 1/2
        let w = SignedField::normalized(&Field::new(g, vals).unwrap()).unwrap();
        let pair = w.to_pair();
        let a = energy_star(&w);
        let b = energy_infty(&pair, 0.0);
        assert!((a - b).abs() < 1e-12 * a, "{a} vs {b}");
        assert_eq!(energy_star(&w.neg()), energy_star(&w));
    }

    #[test]
    fn multipliers_swap_and_lower_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = grid();
        for _ in 0..50 {
            let s = random_state_pair(g, &mut rng);
            let beta = 10.0;
            let m = multipliers(&s, beta);
            let ms = multipliers(&s.swapped(), beta);
            assert_eq!((ms.lambda, ms.mu), (m.mu, m.lambda));
            assert!(m.lambda >= g.lambda_min() * (1.0 - 1e-12));
            assert!(m.mu >= g.lambda_min() * (1.0 - 1e-12));
            let me = multipliers_explicit(&s, beta);
            assert!((me.lambda - m.lambda).abs() < 1e-12 * m.lambda);
        }
    }

    #[test]
    fn gradient_is_orthogonal_and_equivariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = grid();
        for _ in 0..50 {
            let s = random_state_pair(g, &mut rng);
            let (a, b) = gradient_beta(&s, 100.0);
            assert!(a.dot(s.u()).abs() < 1e-10);
            assert!(b.dot(s.v()).abs() < 1e-10);
            let (a2, b2) = gradient_beta(&s.swapped(), 100.0);
            assert_eq!(a2, b);
            assert_eq!(b2, a);
        }
    }

    #[test]
    fn energy_is_monotone_in_beta() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let s = random_state_pair(grid(), &mut rng);
        let betas = [0.0, 0.5, 1.0, 10.0, 1e3, 1e6];
        for w in betas.windows(2) {
            assert!(energy_beta(&s, w[0]) <= energy_beta(&s, w[1]));
        }
    }

    #[test]
    fn tilde_multipliers_orthogonality_and_antisymmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let g = grid();
        for _ in 0..30 {
            let w = random_signed_field(g, &mut rng);
            let (s, tm) = gradient_infty_with(&w).unwrap();
            assert!(tm.det_a > 0.0);
            assert!(s.dot(&w.field().pos_part()).abs() < 1e-8);
            assert!(s.dot(&w.field().neg_part()).abs() < 1e-8);
            let (sn, tn) = gradient_infty_with(&w.neg()).unwrap();
            assert!((tn.lambda_tilde - tm.mu_tilde).abs() < 1e-9 * tm.mu_tilde.abs().max(1.0));
            assert!((tn.mu_tilde - tm.lambda_tilde).abs() < 1e-9 * tm.lambda_tilde.abs().max(1.0));
            assert!(sn.add(&s).max_abs() < 1e-9 * s.max_abs().max(1.0));
        }
    }

    #[test]
    fn degenerate_signed_state_is_rejected() {
        let g = grid();
        let w = SignedField::from_raw(phi1(g));
        assert!(matches!(
            tilde_multipliers(&w),
            Err(Error::DegenerateState { .. })
        ));
    }

    #[test]
    fn validating_constructors() {
        let g = grid();
        let p = phi1(g);
        assert!(StatePair::new(p.scaled(2.0), p.clone()).is_err());
        assert!(StatePair::new(p.neg(), p.clone()).is_err());
        assert!(StatePair::normalized(&Field::zeros(g), &p).is_err());
        assert!(SignedField::new(p.clone()).is_err());
        assert!(SignedField::normalized(&p).is_err());
        let s = split_pair(g);
        let w = SignedField::from_segregated(&s).unwrap();
        assert_eq!(w.to_pair(), s);
        assert!(SignedField::from_segregated(&StatePair::new(p.clone(), p).unwrap()).is_err());
    }
}
