//! Independent reference computations on plain vectors over `(0, L)`.
//!
//! Nothing here calls the library's functionals or flows: energies,
//! Laplacians and inner products are re-derived from the definitions.
#![allow(dead_code)]

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Frozen multi-start minima (n = 63, L = 1, 50 starts, seed 2024).
pub const O1_BETA_1_N63: f64 = 11.355_397_505_100_321;
pub const O1_BETA_10_N63: f64 = 17.799_995_183_056_971;
pub const O2_N63: f64 = 40.943_557_524_865_469;
/// Same at n = 127 (used by the relaxation examples).
pub const O1_BETA_10_N127: f64 = 17.801_884_792_946_161;
pub const O2_N127: f64 = 40.967_348_327_847_148;

pub const ORACLE_SEED: u64 = 2024;
pub const ORACLE_STARTS: usize = 50;

pub struct Line {
    pub n: usize,
    pub h: f64,
}

impl Line {
    pub fn new(n: usize) -> Self {
        Line {
            n,
            h: 1.0 / (n + 1) as f64,
        }
    }

    pub fn x(&self, i: usize) -> f64 {
        (i + 1) as f64 * self.h
    }

    pub fn dot(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() * self.h
    }

    pub fn lap(&self, a: &[f64]) -> Vec<f64> {
        let n = self.n;
        let h2 = self.h * self.h;
        (0..n)
            .map(|i| {
                let l = if i > 0 { a[i - 1] } else { 0.0 };
                let r = if i + 1 < n { a[i + 1] } else { 0.0 };
                (2.0 * a[i] - l - r) / h2
            })
            .collect()
    }

    /// `∫ a' b'` as a sum over the n + 1 cells with zero boundary values.
    pub fn h1(&self, a: &[f64], b: &[f64]) -> f64 {
        let get = |v: &[f64], i: isize| {
            if i < 0 || i as usize >= self.n {
                0.0
            } else {
                v[i as usize]
            }
        };
        (0..=self.n as isize)
            .map(|i| (get(a, i) - get(a, i - 1)) * (get(b, i) - get(b, i - 1)))
            .sum::<f64>()
            / self.h
    }

    pub fn quartic(&self, a: &[f64]) -> f64 {
        a.iter().map(|x| x.powi(4)).sum::<f64>() * self.h
    }

    /// `J_β` extended polynomially to arbitrary real vectors.
    pub fn energy_beta(&self, u: &[f64], v: &[f64], beta: f64) -> f64 {
        let c: f64 = u.iter().zip(v).map(|(a, b)| a * a * b * b).sum::<f64>() * self.h;
        0.5 * (self.h1(u, u) + self.h1(v, v))
            + 0.25 * (self.quartic(u) + self.quartic(v))
            + 0.5 * beta * c
    }

    pub fn energy_star(&self, w: &[f64]) -> f64 {
        0.5 * self.h1(w, w) + 0.25 * self.quartic(w)
    }

    pub fn normalize(&self, a: &mut [f64]) {
        let m = self.dot(a, a).sqrt();
        a.iter_mut().for_each(|x| *x /= m);
    }

    pub fn random_smooth(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let coef: Vec<f64> = (1..=8)
            .map(|k| rng.gen_range(-1.0..1.0) / k as f64)
            .collect();
        (0..self.n)
            .map(|i| {
                coef.iter()
                    .enumerate()
                    .map(|(k, a)| a * ((k + 1) as f64 * PI * self.x(i)).sin())
                    .sum()
            })
            .collect()
    }
}

/// Projected gradient descent on `M` with a fixed step `0.2 h²`: step along
/// the L² gradient, clamp at zero, renormalize. Returns the final energy.
pub fn pgd_beta(line: &Line, mut u: Vec<f64>, mut v: Vec<f64>, beta: f64, max_time: f64) -> f64 {
    let tau = 0.2 * line.h * line.h;
    let steps = (max_time / tau).ceil() as usize;
    for step in 0..steps {
        let (lu, lv) = (line.lap(&u), line.lap(&v));
        let gu: Vec<f64> = (0..line.n)
            .map(|i| lu[i] + u[i].powi(3) + beta * u[i] * v[i] * v[i])
            .collect();
        let gv: Vec<f64> = (0..line.n)
            .map(|i| lv[i] + v[i].powi(3) + beta * v[i] * u[i] * u[i])
            .collect();
        if step % 1000 == 0 {
            let (l, m) = (line.dot(&gu, &u), line.dot(&gv, &v));
            let r: f64 = (0..line.n)
                .map(|i| (gu[i] - l * u[i]).powi(2) + (gv[i] - m * v[i]).powi(2))
                .sum::<f64>()
                * line.h;
            if r.sqrt() < 1e-10 {
                break;
            }
        }
        for i in 0..line.n {
            u[i] = (u[i] - tau * gu[i]).max(0.0);
            v[i] = (v[i] - tau * gv[i]).max(0.0);
        }
        line.normalize(&mut u);
        line.normalize(&mut v);
    }
    line.energy_beta(&u, &v, beta)
}

/// Projected gradient descent for `J*` on `{|w⁺|₂ = |w⁻|₂ = 1}`.
pub fn pgd_star(line: &Line, mut w: Vec<f64>, max_time: f64) -> f64 {
    let tau = 0.2 * line.h * line.h;
    let steps = (max_time / tau).ceil() as usize;
    let split = |w: &[f64]| -> (Vec<f64>, Vec<f64>) {
        (
            w.iter().map(|x| x.max(0.0)).collect(),
            w.iter().map(|x| (-x).max(0.0)).collect(),
        )
    };
    for step in 0..steps {
        let lw = line.lap(&w);
        let g: Vec<f64> = (0..line.n).map(|i| lw[i] + w[i].powi(3)).collect();
        if step % 1000 == 0 {
            let (p, m) = split(&w);
            let (l, mu) = (line.dot(&g, &p), line.dot(&g, &m));
            let r: f64 = (0..line.n)
                .map(|i| (g[i] - l * p[i] + mu * m[i]).powi(2))
                .sum::<f64>()
                * line.h;
            if r.sqrt() < 1e-9 {
                break;
            }
        }
        for i in 0..line.n {
            w[i] -= tau * g[i];
        }
        let (mut p, mut m) = split(&w);
        line.normalize(&mut p);
        line.normalize(&mut m);
        w = p.iter().zip(&m).map(|(a, b)| a - b).collect();
    }
    line.energy_star(&w)
}

/// O1: smallest energy over `ORACLE_STARTS` starts (random pairs and their swaps).
pub fn oracle_o1(n: usize, beta: f64, max_time: f64) -> f64 {
    let line = Line::new(n);
    let mut rng = ChaCha8Rng::seed_from_u64(ORACLE_SEED);
    let mut best = f64::INFINITY;
    for _ in 0..ORACLE_STARTS / 2 {
        let mut u: Vec<f64> = line
            .random_smooth(&mut rng)
            .iter()
            .map(|x| x.abs())
            .collect();
        let mut v: Vec<f64> = line
            .random_smooth(&mut rng)
            .iter()
            .map(|x| x.abs())
            .collect();
        line.normalize(&mut u);
        line.normalize(&mut v);
        best = best.min(pgd_beta(&line, u.clone(), v.clone(), beta, max_time));
        best = best.min(pgd_beta(&line, v, u, beta, max_time));
    }
    best
}

/// O2: smallest `J*` over `ORACLE_STARTS` sign-changing starts (`w` and `−w`).
pub fn oracle_o2(n: usize, max_time: f64) -> f64 {
    let line = Line::new(n);
    let mut rng = ChaCha8Rng::seed_from_u64(ORACLE_SEED);
    let mut best = f64::INFINITY;
    let mut found = 0;
    while found < ORACLE_STARTS / 2 {
        let f = line.random_smooth(&mut rng);
        let (mut p, mut m): (Vec<f64>, Vec<f64>) = (
            f.iter().map(|x| x.max(0.0)).collect(),
            f.iter().map(|x| (-x).max(0.0)).collect(),
        );
        if line.dot(&p, &p) < 1e-6 || line.dot(&m, &m) < 1e-6 {
            continue;
        }
        found += 1;
        line.normalize(&mut p);
        line.normalize(&mut m);
        let w: Vec<f64> = p.iter().zip(&m).map(|(a, b)| a - b).collect();
        let neg: Vec<f64> = w.iter().map(|x| -x).collect();
        best = best.min(pgd_star(&line, w, max_time));
        best = best.min(pgd_star(&line, neg, max_time));
    }
    best
}

/// O3: Richardson-extrapolated central difference of `f` along `t ↦ f(t)` at 0.
pub fn directional_derivative(f: impl Fn(f64) -> f64, eps: f64) -> f64 {
    let d = |e: f64| (f(e) - f(-e)) / (2.0 * e);
    (4.0 * d(eps / 2.0) - d(eps)) / 3.0
}
