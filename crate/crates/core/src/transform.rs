//! Point-wise evaluation of the composed canonical transformations.
//!
//! `exp(L_χ) f = f ∘ Φ_χ` where `Φ_χ` is the time-one flow of `χ`. The flows are
//! integrated numerically (RK4 with step doubling and Richardson extrapolation).

use crate::model::{modes_to_point, point_to_modes, ModeState, ModelError, TorusSeed};
use crate::normalizer::{StackEntry, TransformStack};
use crate::series::{Point, TrigSeries};

/// Hamiltonian vector field of a series: `q̇ = χ_p`, `ṗ = −χ_q`, `η̇ = χ_ξ`, `ξ̇ = −χ_η`.
pub struct VectorField<'a> {
    chi: &'a TrigSeries,
}

impl<'a> VectorField<'a> {
    #[must_use]
    pub fn new(chi: &'a TrigSeries) -> Self {
        VectorField { chi }
    }

    #[must_use]
    pub fn eval(&self, z: &Point) -> Point {
        let g = self.chi.gradient(z);
        let neg = |v: Vec<f64>| v.into_iter().map(|x| -x).collect();
        Point { q: g.p, p: neg(g.q), eta: g.xi, xi: neg(g.eta) }
    }
}

fn axpy(z: &Point, a: f64, d: &Point) -> Point {
    let f = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(u, v)| u + a * v).collect();
    Point { p: f(&z.p, &d.p), q: f(&z.q, &d.q), xi: f(&z.xi, &d.xi), eta: f(&z.eta, &d.eta) }
}

fn flat(z: &Point) -> Vec<f64> {
    z.p.iter().chain(&z.q).chain(&z.xi).chain(&z.eta).copied().collect()
}

fn rk4(field: &VectorField, z: &Point, t: f64, n: usize) -> Point {
    let h = t / n as f64;
    let mut y = z.clone();
    for _ in 0..n {
        let k1 = field.eval(&y);
        let k2 = field.eval(&axpy(&y, 0.5 * h, &k1));
        let k3 = field.eval(&axpy(&y, 0.5 * h, &k2));
        let k4 = field.eval(&axpy(&y, h, &k3));
        let mut s = axpy(&y, h / 6.0, &k1);
        s = axpy(&s, h / 3.0, &k2);
        s = axpy(&s, h / 3.0, &k3);
        y = axpy(&s, h / 6.0, &k4);
    }
    y
}

/// Time-`t` flow of `chi` starting at `z`, converged to about `1e-15` absolute.
#[must_use]
pub fn flow(chi: &TrigSeries, z: &Point, t: f64) -> Point {
    if chi.is_empty() {
        return z.clone();
    }
    let field = VectorField::new(chi);
    let mut n = 2;
    let mut coarse = rk4(&field, z, t, n);
    loop {
        n *= 2;
        let fine = rk4(&field, z, t, n);
        let diff = flat(&fine).iter().zip(flat(&coarse)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let size = flat(&fine).iter().map(|v| v.abs()).fold(1.0, f64::max);
        let done = diff <= 1e-14 * size || n >= 1 << 14;
        let extrap = {
            let d = Point {
                p: fine.p.iter().zip(&coarse.p).map(|(a, b)| (a - b) / 15.0).collect(),
                q: fine.q.iter().zip(&coarse.q).map(|(a, b)| (a - b) / 15.0).collect(),
                xi: fine.xi.iter().zip(&coarse.xi).map(|(a, b)| (a - b) / 15.0).collect(),
                eta: fine.eta.iter().zip(&coarse.eta).map(|(a, b)| (a - b) / 15.0).collect(),
            };
            axpy(&fine, 1.0, &d)
        };
        if done {
            return extrap;
        }
        coarse = fine;
    }
}

/// `(η, ξ) = M (η̄, ξ̄)`.
#[must_use]
pub fn apply_linear(m: &[Vec<f64>], z: &Point) -> Point {
    let n = z.xi.len();
    let v: Vec<f64> = z.eta.iter().chain(&z.xi).copied().collect();
    let w: Vec<f64> = m.iter().map(|row| row.iter().zip(&v).map(|(a, b)| a * b).sum()).collect();
    Point { p: z.p.clone(), q: z.q.clone(), eta: w[..n].to_vec(), xi: w[n..].to_vec() }
}

/// Inverse of a symplectic matrix, `−J Mᵀ J`.
#[must_use]
pub fn symplectic_inverse(m: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n2 = m.len();
    let n = n2 / 2;
    // (J Mᵀ J)_{ij} = Σ J_{ia} M_{ba} J_{bj}
    let jrow = |i: usize| -> (usize, f64) { if i < n { (n + i, 1.0) } else { (i - n, -1.0) } };
    let mut out = vec![vec![0.0; n2]; n2];
    for (i, row) in out.iter_mut().enumerate() {
        let (a, sa) = jrow(i);
        for (j, v) in row.iter_mut().enumerate() {
            // J_{bj} nonzero for b = partner of j
            let (b, sb) = if j < n { (n + j, -1.0) } else { (j - n, 1.0) };
            *v = -(sa * m[b][a] * sb);
        }
    }
    out
}

/// Final normal-form coordinates → coordinates of the initial Hamiltonian.
#[must_use]
pub fn pull_back(stack: &TransformStack, z: &Point) -> Point {
    let mut z = z.clone();
    for e in stack.entries.iter().rev() {
        z = match e {
            StackEntry::Lie { chi, .. } => flow(chi, &z, 1.0),
            StackEntry::Linear { m, .. } => apply_linear(m, &z),
        };
    }
    z
}

/// Inverse of [`pull_back`].
#[must_use]
pub fn push_forward(stack: &TransformStack, z: &Point) -> Point {
    let mut z = z.clone();
    for e in &stack.entries {
        z = match e {
            StackEntry::Lie { chi, .. } => flow(chi, &z, -1.0),
            StackEntry::Linear { m, .. } => apply_linear(&symplectic_inverse(m), &z),
        };
    }
    z
}

/// A point in final normal-form coordinates mapped to the chain's mode variables.
pub fn map_to_original(stack: &TransformStack, seed: &TorusSeed, z: &Point) -> Result<ModeState, ModelError> {
    point_to_modes(seed, &pull_back(stack, z))
}

/// Mode variables mapped to final normal-form coordinates.
#[must_use]
pub fn map_from_original(stack: &TransformStack, seed: &TorusSeed, modes: &ModeState) -> Point {
    push_forward(stack, &modes_to_point(seed, modes))
}
