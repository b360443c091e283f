//! Uniform Dirichlet grids on intervals and rectangles, the discrete
//! Laplacian, its inverse, and the quadrature inner products.
//!
//! Nodes are the interior points `x_i = (i + 1) h` of each axis; the boundary
//! trace is implicitly zero. Every integral is the rectangle rule with weight
//! `h^d`, so the discrete L² product is a weighted Euclidean product and
//! `h1_seminorm_sq(f) = <f, -Δf>` holds exactly (summation by parts).

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative residual at which the 2D conjugate-gradient solve stops.
pub const CG_REL_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dim: usize,
    n: usize,
    lengths: [f64; 2],
    h: [f64; 2],
}

impl Grid {
    /// Builds a grid with `n` interior nodes per axis on `(0, L_1) x ... x (0, L_d)`.
    pub fn new(dim: usize, n: usize, lengths: &[f64]) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::InvalidGrid(format!(
                "dimension must be 1 or 2, got {dim}"
            )));
        }
        if n < 3 {
            return Err(Error::InvalidGrid(format!(
                "need at least 3 interior nodes per axis, got {n}"
            )));
        }
        if lengths.len() != dim {
            return Err(Error::InvalidGrid(format!(
                "expected {dim} side lengths, got {}",
                lengths.len()
            )));
        }
        if lengths.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
            return Err(Error::InvalidGrid(format!(
                "side lengths must be positive, got {lengths:?}"
            )));
        }
        let mut ls = [1.0; 2];
        let mut h = [1.0; 2];
        for (a, &l) in lengths.iter().enumerate() {
            ls[a] = l;
            h[a] = l / (n + 1) as f64;
        }
        Ok(Grid {
            dim,
            n,
            lengths: ls,
            h,
        })
    }

    pub fn interval(n: usize, length: f64) -> Result<Self> {
        Self::new(1, n, &[length])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Interior nodes per axis.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Mesh width along `axis`.
    pub fn h(&self, axis: usize) -> f64 {
        assert!(axis < self.dim);
        self.h[axis]
    }

    pub fn length(&self, axis: usize) -> f64 {
        assert!(axis < self.dim);
        self.lengths[axis]
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths[..self.dim]
    }

    /// Total number of unknowns (`n` or `n²`).
    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// |Ω|, the product of the side lengths.
    pub fn measure(&self) -> f64 {
        self.lengths().iter().product()
    }

    /// Quadrature weight of one node, `h_1 ... h_d`.
    pub fn cell_volume(&self) -> f64 {
        self.h[..self.dim].iter().product()
    }

    /// Smallest eigenvalue of the discrete Dirichlet operator `-Δ_h`.
    pub fn lambda_min(&self) -> f64 {
        (0..self.dim)
            .map(|a| {
                let h = self.h[a];
                let s = (PI * h / (2.0 * self.lengths[a])).sin();
                4.0 * s * s / (h * h)
            })
            .sum()
    }

    /// Largest eigenvalue of `-Δ_h`.
    pub fn lambda_max(&self) -> f64 {
        (0..self.dim)
            .map(|a| {
                let h = self.h[a];
                let c = (PI * h / (2.0 * self.lengths[a])).cos();
                4.0 * c * c / (h * h)
            })
            .sum()
    }

    /// Coordinate of node `i` along `axis`.
    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        (i + 1) as f64 * self.h[axis]
    }

    /// Coordinates of the node with flat (row-major) index `idx`.
    pub fn point(&self, idx: usize) -> [f64; 2] {
        match self.dim {
            1 => [self.coord(0, idx), 0.0],
            _ => [self.coord(0, idx / self.n), self.coord(1, idx % self.n)],
        }
    }

    /// Same node layout and geometry, up to rounding in the side lengths
    /// (a reloaded snapshot reconstructs them from `h`).
    pub fn compatible(&self, other: &Grid) -> bool {
        self.dim == other.dim
            && self.n == other.n
            && (0..self.dim).all(|a| {
                (self.lengths[a] - other.lengths[a]).abs()
                    <= 1e-12 * self.lengths[a].max(other.lengths[a])
            })
    }

    pub fn ensure_compatible(&self, other: &Grid) -> Result<()> {
        if self.compatible(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }
}

/// Nodal values of an `H¹₀` function on a [`Grid`].
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    grid: Grid,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidState(format!(
                "field has {} values, grid expects {}",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidState(format!("non-finite value at node {i}")));
        }
        Ok(Field { grid, values })
    }

    /// Internal constructor for values produced by arithmetic on valid fields.
    pub(crate) fn from_raw(grid: Grid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Field { grid, values }
    }

    pub fn zeros(grid: Grid) -> Self {
        Field {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    /// Samples `f` at every interior node.
    pub fn from_fn(grid: Grid, f: impl Fn([f64; 2]) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.point(i))).collect();
        Field { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field::from_raw(self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    /// Nodewise combination; panics if the node counts differ.
    pub fn zip_map(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Field {
        assert_eq!(
            self.len(),
            other.len(),
            "zip_map on fields of different size"
        );
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Field::from_raw(self.grid, values)
    }

    /// `max(f, 0)` nodewise.
    pub fn pos_part(&self) -> Field {
        self.map(|v| v.max(0.0))
    }

    /// `max(-f, 0)` nodewise.
    pub fn neg_part(&self) -> Field {
        self.map(|v| (-v).max(0.0))
    }

    pub fn scaled(&self, a: f64) -> Field {
        self.map(|v| a * v)
    }

    pub fn neg(&self) -> Field {
        self.map(|v| -v)
    }

    pub fn add(&self, other: &Field) -> Field {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Field) -> Field {
        self.zip_map(other, |a, b| a - b)
    }

    /// `self + a * other`.
    pub fn axpy(&self, a: f64, other: &Field) -> Field {
        self.zip_map(other, |x, y| x + a * y)
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Quadrature of `g(f_i)` over Ω.
    pub fn integrate(&self, g: impl Fn(f64) -> f64) -> f64 {
        self.grid.cell_volume() * self.values.iter().map(|&v| g(v)).sum::<f64>()
    }

    pub(crate) fn dot(&self, other: &Field) -> f64 {
        debug_assert_eq!(self.len(), other.len());
        self.grid.cell_volume()
            * self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a * b)
                .sum::<f64>()
    }

    pub(crate) fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }
}

/// Discrete L² product `h^d Σ f_i g_i`.
pub fn inner_l2(f: &Field, g: &Field) -> Result<f64> {
    f.grid.ensure_compatible(&g.grid)?;
    Ok(f.dot(g))
}

pub fn norm_l2(f: &Field) -> f64 {
    f.norm()
}

/// `‖f‖² = <f, -Δf>`.
pub fn h1_seminorm_sq(f: &Field) -> f64 {
    // Written as a sum of squared forward differences so it is nonnegative
    // to the last bit; equal to <f, -Δf> up to rounding.
    let g = &f.grid;
    let n = g.n;
    let v = &f.values;
    let vol = g.cell_volume();
    match g.dim {
        1 => {
            let ih2 = 1.0 / (g.h[0] * g.h[0]);
            let mut s = v[0] * v[0] + v[n - 1] * v[n - 1];
            for i in 0..n - 1 {
                let d = v[i + 1] - v[i];
                s += d * d;
            }
            vol * ih2 * s
        }
        _ => {
            let ihx = 1.0 / (g.h[0] * g.h[0]);
            let ihy = 1.0 / (g.h[1] * g.h[1]);
            let mut sx = 0.0;
            let mut sy = 0.0;
            for i in 0..n {
                for j in 0..n {
                    let c = v[i * n + j];
                    let right = if i + 1 < n { v[(i + 1) * n + j] } else { 0.0 };
                    let up = if j + 1 < n { v[i * n + j + 1] } else { 0.0 };
                    if i == 0 {
                        sx += c * c;
                    }
                    if j == 0 {
                        sy += c * c;
                    }
                    sx += (right - c) * (right - c);
                    sy += (up - c) * (up - c);
                }
            }
            vol * (ihx * sx + ihy * sy)
        }
    }
}

/// `-Δ_h f` with the 3-point (1D) or 5-point (2D) stencil and zero Dirichlet closure.
pub fn neg_laplacian(f: &Field) -> Field {
    let g = f.grid;
    let n = g.n;
    let v = &f.values;
    let mut out = vec![0.0; v.len()];
    match g.dim {
        1 => {
            let ih2 = 1.0 / (g.h[0] * g.h[0]);
            for i in 0..n {
                let left = if i > 0 { v[i - 1] } else { 0.0 };
                let right = if i + 1 < n { v[i + 1] } else { 0.0 };
                out[i] = (2.0 * v[i] - left - right) * ih2;
            }
        }
        _ => apply_2d(&g, v, None, &mut out),
    }
    Field::from_raw(g, out)
}

/// Inverse of `-Δ_h`.
pub fn solve_poisson(rhs: &Field) -> Result<Field> {
    solve_shifted(rhs, None)
}

/// Solves `(-Δ_h + diag(shift)) g = rhs` for a nonnegative nodal `shift`.
///
/// 1D uses tridiagonal elimination; 2D uses unpreconditioned conjugate
/// gradients to a relative residual of [`CG_REL_TOL`].
pub fn solve_shifted(rhs: &Field, shift: Option<&[f64]>) -> Result<Field> {
    let g = rhs.grid;
    if let Some(s) = shift {
        assert_eq!(s.len(), rhs.len(), "shift length must match the grid");
    }
    let values = match g.dim {
        1 => thomas(&g, &rhs.values, shift),
        _ => conjugate_gradient(&g, &rhs.values, shift)?,
    };
    Ok(Field::from_raw(g, values))
}

fn thomas(g: &Grid, rhs: &[f64], shift: Option<&[f64]>) -> Vec<f64> {
    let n = g.n;
    let ih2 = 1.0 / (g.h[0] * g.h[0]);
    let off = -ih2;
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let diag = |i: usize| 2.0 * ih2 + shift.map_or(0.0, |s| s[i]);

    let mut b = diag(0);
    c[0] = off / b;
    d[0] = rhs[0] / b;
    for i in 1..n {
        b = diag(i) - off * c[i - 1];
        c[i] = off / b;
        d[i] = (rhs[i] - off * d[i - 1]) / b;
    }
    let mut x = d;
    for i in (0..n - 1).rev() {
        x[i] -= c[i] * x[i + 1];
    }
    x
}

fn apply_2d(g: &Grid, v: &[f64], shift: Option<&[f64]>, out: &mut [f64]) {
    let n = g.n;
    let ihx = 1.0 / (g.h[0] * g.h[0]);
    let ihy = 1.0 / (g.h[1] * g.h[1]);
    for i in 0..n {
        for j in 0..n {
            let k = i * n + j;
            let c = v[k];
            let xm = if i > 0 { v[k - n] } else { 0.0 };
            let xp = if i + 1 < n { v[k + n] } else { 0.0 };
            let ym = if j > 0 { v[k - 1] } else { 0.0 };
            let yp = if j + 1 < n { v[k + 1] } else { 0.0 };
            out[k] = (2.0 * c - xm - xp) * ihx
                + (2.0 * c - ym - yp) * ihy
                + shift.map_or(0.0, |s| s[k]) * c;
        }
    }
}

fn conjugate_gradient(g: &Grid, rhs: &[f64], shift: Option<&[f64]>) -> Result<Vec<f64>> {
    let len = rhs.len();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let b_norm = dot(rhs, rhs).sqrt();
    let mut x = vec![0.0; len];
    if b_norm == 0.0 {
        return Ok(x);
    }
    let mut r = rhs.to_vec();
    let mut p = r.clone();
    let mut ap = vec![0.0; len];
    let mut rr = dot(&r, &r);
    let max_iter = 10 * len + 100;
    for _ in 0..max_iter {
        if rr.sqrt() <= CG_REL_TOL * b_norm {
            return Ok(x);
        }
        apply_2d(g, &p, shift, &mut ap);
        let alpha = rr / dot(&p, &ap);
        for k in 0..len {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        rr = rr_new;
        for k in 0..len {
            p[k] = r[k] + beta * p[k];
        }
    }
    if rr.sqrt() <= CG_REL_TOL * b_norm {
        Ok(x)
    } else {
        Err(Error::SolverFailure {
            iterations: max_iter,
            residual: rr.sqrt() / b_norm,
        })
    }
}

/// Writes the plain-text snapshot: `dim n h measure`, then one value per line.
/// Trailing `#` lines carry metadata and are ignored on read.
pub fn write_snapshot<W: Write>(field: &Field, comment: Option<&str>, mut out: W) -> Result<()> {
    let g = field.grid;
    let mut buf = String::with_capacity(24 * (field.len() + 2));
    writeln!(
        buf,
        "{} {} {:.16e} {:.16e}",
        g.dim,
        g.n,
        g.h[0],
        g.measure()
    )
    .unwrap();
    for v in &field.values {
        writeln!(buf, "{v:.16e}").unwrap();
    }
    if let Some(c) = comment {
        for line in c.lines() {
            writeln!(buf, "# {line}").unwrap();
        }
    }
    out.write_all(buf.as_bytes())?;
    Ok(())
}

pub fn read_snapshot<R: BufRead>(input: R) -> Result<Field> {
    let mut lines = input.lines().map(|l| l.map_err(Error::from)).filter(|l| {
        l.as_ref().map_or(true, |s| {
            !s.trim().is_empty() && !s.trim_start().starts_with('#')
        })
    });
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty snapshot".into()))??;
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() != 4 {
        return Err(Error::Parse(format!(
            "snapshot header must be `dim n h measure`, got `{header}`"
        )));
    }
    let perr = |what: &str| Error::Parse(format!("bad {what} in snapshot header `{header}`"));
    let dim: usize = parts[0].parse().map_err(|_| perr("dim"))?;
    let n: usize = parts[1].parse().map_err(|_| perr("n"))?;
    let h: f64 = parts[2].parse().map_err(|_| perr("h"))?;
    let measure: f64 = parts[3].parse().map_err(|_| perr("measure"))?;
    let l0 = h * (n + 1) as f64;
    let grid = match dim {
        1 => Grid::new(1, n, &[l0])?,
        2 => Grid::new(2, n, &[l0, measure / l0])?,
        _ => return Err(perr("dim")),
    };
    let mut values = Vec::with_capacity(grid.len());
    for line in lines {
        let line = line?;
        let v: f64 = line
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("bad snapshot value `{line}`")))?;
        values.push(v);
    }
    Field::new(grid, values)
}
