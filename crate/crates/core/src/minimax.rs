//! Genus-k families and deformation-descent estimates of the minimax levels
//! `c^k_β = inf_{A ∈ 𝓕_k} sup_A J_β` (and the limit level `c^k_∞`).
//!
//! A family is the image of an antipodally closed sample of `S^{k-1}` under
//! `ψ(t) = (t̄ (Σ tᵢφᵢ)⁺, s̄ (Σ tᵢφᵢ)⁻)` where the `φᵢ` are sign-changing and
//! have pairwise disjoint supports. `ψ(−t) = σψ(t)`, so every family is an
//! equivariant image of the sphere. The level estimate repeatedly applies
//! the unit-time flow to every member and records the sup; since the flow
//! never raises the energy the recorded values only go down, and they stay
//! upper bounds for the level on the same grid.

use std::f64::consts::PI;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::flows::{deform_beta, deform_infty, pair_distance, relax_beta, relax_infty, FlowConfig};
use crate::functionals::{
    energy_beta, energy_star, multipliers, residual_beta, residual_infty, tilde_multipliers,
    Multipliers, SignedField, StatePair, TildeMultipliers,
};
use crate::grid::{Field, Grid};

/// Coupling strength: a finite `β ≥ 0` or the segregated limit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Beta {
    Finite(f64),
    Infinite,
}

impl Beta {
    pub fn is_infinite(&self) -> bool {
        matches!(self, Beta::Infinite)
    }

    pub fn value(&self) -> f64 {
        match self {
            Beta::Finite(b) => *b,
            Beta::Infinite => f64::INFINITY,
        }
    }

    pub fn parse(s: &str) -> Option<Beta> {
        let t = s.trim();
        if matches!(t.to_ascii_lowercase().as_str(), "inf" | "infinity" | "∞") {
            return Some(Beta::Infinite);
        }
        t.parse::<f64>().ok().filter(|b| *b >= 0.0).map(|b| {
            if b.is_infinite() {
                Beta::Infinite
            } else {
                Beta::Finite(b)
            }
        })
    }
}

impl fmt::Display for Beta {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Beta::Finite(b) => write!(f, "{b}"),
            Beta::Infinite => write!(f, "inf"),
        }
    }
}

impl Serialize for Beta {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Beta::Finite(b) => s.serialize_f64(*b),
            Beta::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Beta {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(b) => Ok(Beta::Finite(b)),
            Raw::Text(t) => {
                Beta::parse(&t).ok_or_else(|| serde::de::Error::custom(format!("bad beta `{t}`")))
            }
        }
    }
}

/// Minimum number of nonzero nodes each `φᵢ` must occupy.
pub const MIN_NODES_PER_PHI: usize = 8;

/// `k` sign-changing functions with pairwise disjoint supports.
#[derive(Clone, Debug)]
pub struct PhiBasis {
    grid: Grid,
    phis: Vec<Field>,
    pos_mass: Vec<f64>,
    neg_mass: Vec<f64>,
}

impl PhiBasis {
    pub fn k(&self) -> usize {
        self.phis.len()
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn phis(&self) -> &[Field] {
        &self.phis
    }

    /// `|φᵢ⁺|₂²`.
    pub fn pos_mass(&self) -> &[f64] {
        &self.pos_mass
    }

    /// `|φᵢ⁻|₂²`.
    pub fn neg_mass(&self) -> &[f64] {
        &self.neg_mass
    }
}

/// One full sine period on each of `k` equal subintervals of the first axis
/// (times the first Dirichlet mode along the second axis in 2D).
pub fn build_phi_basis(grid: &Grid, k: usize) -> Result<PhiBasis> {
    if k == 0 {
        return Err(Error::Construction("k must be at least 1".into()));
    }
    let n = grid.n();
    let np1 = n + 1;
    // Node j of axis 0 sits at (j+1)/(n+1) of the length; in units of
    // subintervals that is (j+1)k/(n+1), evaluated in integers so the
    // subinterval boundaries and lobe midpoints are exact zeros.
    let profile = |j: usize| -> (usize, f64) {
        let num = (j + 1) * k;
        let (idx, rem) = (num / np1, num % np1);
        if rem == 0 || 2 * rem == np1 {
            (idx.min(k - 1), 0.0)
        } else {
            (idx, (2.0 * PI * rem as f64 / np1 as f64).sin())
        }
    };
    let mut phis: Vec<Vec<f64>> = vec![vec![0.0; grid.len()]; k];
    for idx in 0..grid.len() {
        let (j, across) = match grid.dim() {
            1 => (idx, 1.0),
            _ => (
                idx / n,
                (PI * grid.coord(1, idx % n) / grid.length(1)).sin(),
            ),
        };
        let (which, val) = profile(j);
        if val != 0.0 {
            phis[which][idx] = val * across;
        }
    }
    let mut out = PhiBasis {
        grid: *grid,
        phis: Vec::with_capacity(k),
        pos_mass: vec![],
        neg_mass: vec![],
    };
    for (i, vals) in phis.into_iter().enumerate() {
        let f = Field::new(*grid, vals)?;
        let count = (0..n)
            .filter(|&j| profile(j).0 == i && profile(j).1 != 0.0)
            .count();
        if count < MIN_NODES_PER_PHI {
            return Err(Error::Construction(format!(
                "grid with n = {n} is too coarse for k = {k}: subinterval {i} has {count} nodes, need {MIN_NODES_PER_PHI}"
            )));
        }
        let (p, m) = (f.pos_part(), f.neg_part());
        let (pm, nm) = (p.dot(&p), m.dot(&m));
        if !(pm > 0.0 && nm > 0.0) {
            return Err(Error::Construction(format!(
                "phi_{i} does not change sign on this grid"
            )));
        }
        out.pos_mass.push(pm);
        out.neg_mass.push(nm);
        out.phis.push(f);
    }
    Ok(out)
}

/// `ψ(t)`; requires `|t| = 1` (to rounding).
pub fn psi_map(basis: &PhiBasis, t: &[f64]) -> Result<StatePair> {
    if t.len() != basis.k() {
        return Err(Error::Construction(format!(
            "point has {} coordinates, basis has k = {}",
            t.len(),
            basis.k()
        )));
    }
    let norm = t.iter().map(|x| x * x).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-12 {
        return Err(Error::Construction(format!("sphere point has norm {norm}")));
    }
    let mut f = vec![0.0; basis.grid.len()];
    for (ti, phi) in t.iter().zip(&basis.phis) {
        for (acc, p) in f.iter_mut().zip(phi.values()) {
            *acc += ti * p;
        }
    }
    let f = Field::from_raw(basis.grid, f);
    let (pos, neg) = (f.pos_part(), f.neg_part());
    // |(Σtᵢφᵢ)^±|₂² by disjointness; t̄, s̄ normalize these.
    let (pm, nm) = (pos.dot(&pos), neg.dot(&neg));
    if !(pm > 0.0 && nm > 0.0) {
        return Err(Error::Construction("degenerate normalizer in psi".into()));
    }
    Ok(StatePair::from_raw(
        pos.scaled(1.0 / pm.sqrt()),
        neg.scaled(1.0 / nm.sqrt()),
    ))
}

/// Antipodally closed sample of `S^{k-1}`: entry `i + m/2` is `−(entry i)`.
///
/// `k = 1` gives `{+1, −1}`, `k = 2` gives `m` equispaced angles, `k = 3`
/// a Fibonacci lattice on the upper hemisphere, `k ≥ 4` seeded uniform
/// directions; all are completed by their antipodes.
pub fn sample_sphere(k: usize, m: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if k == 0 {
        return Err(Error::Construction("k must be at least 1".into()));
    }
    if m < 2 || m % 2 != 0 {
        return Err(Error::Construction(format!(
            "sample size m must be even and >= 2, got {m}"
        )));
    }
    let half = if k == 1 { 1 } else { m / 2 };
    let base: Vec<Vec<f64>> = match k {
        1 => vec![vec![1.0]],
        2 => (0..half)
            .map(|j| {
                let a = 2.0 * PI * j as f64 / m as f64;
                vec![a.cos(), a.sin()]
            })
            .collect(),
        3 => {
            let golden = PI * (3.0 - 5f64.sqrt());
            (0..half)
                .map(|i| {
                    let z = (i as f64 + 0.5) / half as f64;
                    let r = (1.0 - z * z).sqrt();
                    let a = golden * i as f64;
                    vec![r * a.cos(), r * a.sin(), z]
                })
                .collect()
        }
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..half)
                .map(|_| loop {
                    let p: Vec<f64> = (0..k).map(|_| rng.gen_range(-1.0..1.0)).collect();
                    let r = p.iter().map(|x| x * x).sum::<f64>().sqrt();
                    if r > 1e-3 && r <= 1.0 {
                        break p.into_iter().map(|x| x / r).collect();
                    }
                })
                .collect()
        }
    };
    let mut out = base.clone();
    out.extend(
        base.iter()
            .map(|p| p.iter().map(|x| -x).collect::<Vec<f64>>()),
    );
    Ok(out)
}

/// Default sphere sample size for a given `k`.
pub fn default_sample_size(k: usize) -> usize {
    match k {
        1 => 2,
        2 => 16,
        _ => 62,
    }
}

/// An equivariant sample `ψ(S^{k-1})`, possibly already deformed.
#[derive(Clone, Debug)]
pub struct GenusFamily {
    k: usize,
    points: Vec<Vec<f64>>,
    states: Vec<StatePair>,
    flowed: bool,
}

impl GenusFamily {
    pub fn from_basis(basis: &PhiBasis, m: usize, seed: u64) -> Result<Self> {
        let points = sample_sphere(basis.k(), m, seed)?;
        let half = points.len() / 2;
        let mut states: Vec<StatePair> = points[..half]
            .iter()
            .map(|t| psi_map(basis, t))
            .collect::<Result<_>>()?;
        let mirrored: Vec<StatePair> = points[half..]
            .iter()
            .map(|t| psi_map(basis, t))
            .collect::<Result<_>>()?;
        states.extend(mirrored);
        Ok(GenusFamily {
            k: basis.k(),
            points,
            states,
            flowed: false,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn states(&self) -> &[StatePair] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn flowed(&self) -> bool {
        self.flowed
    }

    /// Index of the antipodal partner of member `i`.
    pub fn partner(&self, i: usize) -> usize {
        let half = self.len() / 2;
        (i + half) % self.len()
    }

    /// Bitwise check of `ψ(−t) = σψ(t)` across the stored states.
    pub fn is_equivariant(&self) -> bool {
        let half = self.len() / 2;
        (0..half).all(|i| {
            let (a, b) = (&self.states[i], &self.states[i + half]);
            a.u().values() == b.v().values() && a.v().values() == b.u().values()
        }) && (0..half).all(|i| {
            self.points[i]
                .iter()
                .zip(&self.points[i + half])
                .all(|(x, y)| *x == -*y)
        })
    }

    /// Every stored state satisfies the pair-manifold constraints.
    pub fn is_valid(&self) -> bool {
        self.states
            .iter()
            .all(|s| StatePair::new(s.u().clone(), s.v().clone()).is_ok())
    }

    /// Applies `deform` to the first member of each antipodal pair and
    /// mirrors the result onto its partner through σ.
    pub fn deform_with<F>(&mut self, deform: F) -> Result<()>
    where
        F: Fn(&StatePair) -> Result<StatePair> + Sync,
    {
        let half = self.len() / 2;
        let flowed: Vec<StatePair> = self.states[..half]
            .par_iter()
            .map(&deform)
            .collect::<Result<_>>()?;
        let mirrored: Vec<StatePair> = flowed.iter().map(StatePair::swapped).collect();
        self.states = flowed;
        self.states.extend(mirrored);
        self.flowed = true;
        Ok(())
    }

    pub fn energies(&self, beta: Beta) -> Result<Vec<f64>> {
        self.states.iter().map(|s| member_energy(s, beta)).collect()
    }
}

fn member_energy(s: &StatePair, beta: Beta) -> Result<f64> {
    match beta {
        Beta::Finite(b) => Ok(energy_beta(s, b)),
        Beta::Infinite => Ok(energy_star(&SignedField::from_segregated(s)?)),
    }
}

fn member_residual(s: &StatePair, beta: Beta) -> Result<f64> {
    match beta {
        Beta::Finite(b) => Ok(residual_beta(s, b)),
        Beta::Infinite => residual_infty(&SignedField::from_segregated(s)?),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinimaxConfig {
    pub flow: FlowConfig,
    /// Stop once a deformation round lowers the sup by less than this.
    pub level_tol: f64,
    pub max_rounds: usize,
    pub seed: u64,
}

impl MinimaxConfig {
    pub fn for_beta(beta: Beta) -> Self {
        let flow = if beta.is_infinite() {
            FlowConfig::infty_default()
        } else {
            FlowConfig::beta_default()
        };
        MinimaxConfig {
            flow,
            level_tol: 1e-9,
            max_rounds: 200,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelEstimate {
    pub k: usize,
    pub beta: Beta,
    /// Final sup of the energy over the deformed family (an upper bound).
    pub value: f64,
    pub argmax: usize,
    /// `|S_β|₂` (or `‖S_∞‖`) at the argmax member.
    pub residual: f64,
    /// Sup after construction (round 0) and after every deformation round.
    pub history: Vec<f64>,
}

/// Builds `ψ(S^{k-1})` from `basis` and runs [`minimax_from_family`].
pub fn minimax_level(
    k: usize,
    beta: Beta,
    basis: &PhiBasis,
    m: usize,
    cfg: &MinimaxConfig,
) -> Result<(LevelEstimate, GenusFamily)> {
    if basis.k() != k {
        return Err(Error::Construction(format!(
            "basis has k = {}, requested k = {k}",
            basis.k()
        )));
    }
    let family = GenusFamily::from_basis(basis, m, cfg.seed)?;
    minimax_from_family(family, beta, cfg)
}

/// Deformation descent of a given family until the sup stalls.
pub fn minimax_from_family(
    mut family: GenusFamily,
    beta: Beta,
    cfg: &MinimaxConfig,
) -> Result<(LevelEstimate, GenusFamily)> {
    cfg.flow.validate()?;
    if let Beta::Infinite = beta {
        // Limit families must be segregated.
        for s in family.states() {
            SignedField::from_segregated(s)?;
        }
    }
    let sup = |f: &GenusFamily| -> Result<(f64, usize)> {
        let e = f.energies(beta)?;
        let mut best = (f64::NEG_INFINITY, 0);
        for (i, v) in e.into_iter().enumerate() {
            if v > best.0 {
                best = (v, i);
            }
        }
        Ok(best)
    };
    let (mut value, mut argmax) = sup(&family)?;
    let mut history = vec![value];
    let flow = cfg.flow;
    for _ in 0..cfg.max_rounds {
        match beta {
            Beta::Finite(b) => family.deform_with(|s| deform_beta(s, b, &flow))?,
            Beta::Infinite => family.deform_with(|s| deform_infty(s, &flow))?,
        }
        let (v, i) = sup(&family)?;
        history.push(v);
        let drop = value - v;
        value = v;
        argmax = i;
        if drop < cfg.level_tol {
            break;
        }
    }
    let residual = member_residual(&family.states[argmax], beta)?;
    Ok((
        LevelEstimate {
            k: family.k,
            beta,
            value,
            argmax,
            residual,
            history,
        },
        family,
    ))
}

#[derive(Clone, Debug)]
pub enum CriticalPoint {
    Beta {
        state: StatePair,
        multipliers: Multipliers,
        residual: f64,
        energy: f64,
        stationary: bool,
    },
    Infinite {
        w: SignedField,
        multipliers: TildeMultipliers,
        residual: f64,
        energy: f64,
        stationary: bool,
    },
}

impl CriticalPoint {
    pub fn pair(&self) -> StatePair {
        match self {
            CriticalPoint::Beta { state, .. } => state.clone(),
            CriticalPoint::Infinite { w, .. } => w.to_pair(),
        }
    }

    pub fn residual(&self) -> f64 {
        match self {
            CriticalPoint::Beta { residual, .. } | CriticalPoint::Infinite { residual, .. } => {
                *residual
            }
        }
    }

    pub fn energy(&self) -> f64 {
        match self {
            CriticalPoint::Beta { energy, .. } | CriticalPoint::Infinite { energy, .. } => *energy,
        }
    }

    pub fn is_stationary(&self) -> bool {
        match self {
            CriticalPoint::Beta { stationary, .. } | CriticalPoint::Infinite { stationary, .. } => {
                *stationary
            }
        }
    }

    /// `(λ, μ)` or `(λ̃, μ̃)`.
    pub fn lambda_mu(&self) -> (f64, f64) {
        match self {
            CriticalPoint::Beta { multipliers, .. } => (multipliers.lambda, multipliers.mu),
            CriticalPoint::Infinite { multipliers, .. } => {
                (multipliers.lambda_tilde, multipliers.mu_tilde)
            }
        }
    }
}

/// Relaxes the argmax member to stationarity. A run that exhausts
/// `max_steps` returns its best state with `stationary = false`.
pub fn extract_critical(
    estimate: &LevelEstimate,
    family: &GenusFamily,
    cfg: &MinimaxConfig,
) -> Result<CriticalPoint> {
    let start = family
        .states
        .get(estimate.argmax)
        .ok_or_else(|| Error::Construction("argmax index outside the family".into()))?;
    let flow = FlowConfig {
        time_budget: f64::INFINITY,
        ..cfg.flow
    };
    match estimate.beta {
        Beta::Finite(b) => {
            let (state, trace) = relax_beta(start, b, &flow)?;
            Ok(CriticalPoint::Beta {
                multipliers: multipliers(&state, b),
                residual: trace.final_entry().residual,
                energy: trace.final_entry().energy,
                stationary: trace.converged,
                state,
            })
        }
        Beta::Infinite => {
            let w = SignedField::from_segregated(start)?;
            let (w, trace) = relax_infty(&w, &flow)?;
            Ok(CriticalPoint::Infinite {
                multipliers: tilde_multipliers(&w)?,
                residual: trace.final_entry().residual,
                energy: trace.final_entry().energy,
                stationary: trace.converged,
                w,
            })
        }
    }
}

/// Inconsistency flag: an (almost) σ-symmetric state above the coupling
/// `2|Ω| c_∞` beyond which no symmetric critical points exist.
pub fn symmetric_collapse(state: &StatePair, beta: f64, measure: f64, limit_level: f64) -> bool {
    beta >= 2.0 * measure * limit_level
        && pair_distance(state, &state.swapped()) / 2f64.sqrt() < 1e-6
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FamilyExport {
    pub k: usize,
    pub beta: Beta,
    pub points: Vec<Vec<f64>>,
    pub energies: Vec<f64>,
    pub argmax: usize,
    pub history: Vec<f64>,
    pub value: f64,
    pub residual: f64,
}

impl FamilyExport {
    pub fn new(estimate: &LevelEstimate, family: &GenusFamily) -> Result<Self> {
        Ok(FamilyExport {
            k: estimate.k,
            beta: estimate.beta,
            points: family.points.clone(),
            energies: family.energies(estimate.beta)?,
            argmax: estimate.argmax,
            history: estimate.history.clone(),
            value: estimate.value,
            residual: estimate.residual,
        })
    }
}
