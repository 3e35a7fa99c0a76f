//! Homological equations around the normal part `h = ω·p + Σ Ω_j(ξ_j²+η_j²)/2`.
//!
//! With `D = −L_(·) h = ω·∂_q + Σ Ω_j (ξ_j ∂_{η_j} − η_j ∂_{ξ_j})` every equation has the
//! form `D χ = g − Πg`, where `Π` averages over `q` and over the transverse rotations.
//! `D` leaves invariant the span of terms sharing `(m, k, a_j + b_j)`, so the
//! equation splits into small dense systems ("cells").

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::series::{Parity, TermKey, TrigSeries};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HomologicalError {
    #[error("small divisor {value:e} for k = {k:?}, transverse combination {sigma:?}")]
    SmallDivisor { k: Vec<i32>, sigma: Vec<i32>, value: f64 },
    #[error("singular cell for k = {0:?}")]
    Singular(Vec<i32>),
}

#[derive(Debug, Clone)]
pub struct Solution {
    /// Generating function with `L_χ h + g − Πg = 0`.
    pub chi: TrigSeries,
    /// The unremovable part `Πg`.
    pub kernel: TrigSeries,
    /// Smallest `|k·ω + σ·Ω|` met (infinite when `g` is empty).
    pub min_divisor: f64,
}

/// Solves the homological equation for `g`.
pub fn solve(g: &TrigSeries, omega: &[f64], big_omega: &[f64], floor: f64) -> Result<Solution, HomologicalError> {
    let dims = g.dims();
    assert_eq!(omega.len(), dims.n1);
    assert_eq!(big_omega.len(), dims.n2);
    let mut cells: BTreeMap<TermKey, Vec<(TermKey, f64)>> = BTreeMap::new();
    for (key, c) in g.sorted_terms() {
        cells.entry(cell_id(&key)).or_default().push((key, c));
    }
    let mut chi = TrigSeries::zero(dims, g.caps());
    let mut kernel = TrigSeries::zero(dims, g.caps());
    let mut min_div = f64::INFINITY;
    for (id, terms) in cells {
        let cell = Cell::new(&id);
        let kw: f64 = id.k().iter().zip(omega).map(|(&k, w)| f64::from(k) * w).sum();
        min_div = min_div.min(cell.check_divisors(kw, big_omega, floor)?);
        let n = cell.basis.len();
        let mut rhs = DVector::<f64>::zeros(n);
        for (key, c) in &terms {
            rhs[cell.index_of(key)] += c;
        }
        let d = cell.d_matrix(kw, big_omega);
        let p = cell.p_matrix();
        let pg = &p * &rhs;
        let rhs = &rhs - &pg;
        let a = d + p;
        let x = a.lu().solve(&rhs).ok_or_else(|| HomologicalError::Singular(id.k().iter().map(|&v| i32::from(v)).collect()))?;
        for (i, key) in cell.basis.iter().enumerate() {
            chi.add_term(*key, x[i]);
            kernel.add_term(*key, pg[i]);
        }
    }
    Ok(Solution { chi, kernel, min_divisor: min_div })
}

/// `{h, χ} + g − Πg`, which vanishes for an exact solution.
pub fn residual(h: &TrigSeries, sol: &Solution, g: &TrigSeries) -> TrigSeries {
    let mut r = h.poisson(&sol.chi, sol.chi.caps().max(g.caps())).expect("same dims");
    r.add_scaled(g, 1.0).expect("same dims");
    r.add_scaled(&sol.kernel, -1.0).expect("same dims");
    r
}

/// Representative key of a cell: transverse degrees stored in the `ξ` slots, cos parity.
fn cell_id(key: &TermKey) -> TermKey {
    let deg: Vec<i8> = key.xi().iter().zip(key.eta()).map(|(a, b)| a + b).collect();
    let zero = vec![0i8; deg.len()];
    key.with_transverse(&deg, &zero).with_parity(Parity::Cos)
}

struct Cell {
    degrees: Vec<i8>,
    basis: Vec<TermKey>,
    index: BTreeMap<TermKey, usize>,
    angle_free: bool,
}

impl Cell {
    fn new(id: &TermKey) -> Cell {
        let degrees = id.xi().to_vec();
        let angle_free = id.is_angle_free();
        let mut splits: Vec<Vec<i8>> = vec![vec![]];
        for &d in &degrees {
            let mut next = Vec::new();
            for s in &splits {
                for a in 0..=d {
                    let mut v = s.clone();
                    v.push(a);
                    next.push(v);
                }
            }
            splits = next;
        }
        let parities: &[Parity] = if angle_free { &[Parity::Cos] } else { &[Parity::Cos, Parity::Sin] };
        let mut basis = Vec::new();
        for &par in parities {
            for a in &splits {
                let b: Vec<i8> = a.iter().zip(&degrees).map(|(a, d)| d - a).collect();
                basis.push(id.with_transverse(a, &b).with_parity(par));
            }
        }
        let index = basis.iter().enumerate().map(|(i, k)| (*k, i)).collect();
        Cell { degrees, basis, index, angle_free }
    }

    fn index_of(&self, key: &TermKey) -> usize {
        self.index[key]
    }

    /// Checks all eigenvalues `k·ω + σ·Ω` of `D` on this cell except the kernel.
    fn check_divisors(&self, kw: f64, big_omega: &[f64], floor: f64) -> Result<f64, HomologicalError> {
        let mut min = f64::INFINITY;
        let mut sigma = vec![0i32; self.degrees.len()];
        let mut stack = Vec::new();
        // enumerate σ_j ∈ {−d_j, −d_j+2, …, d_j}
        fn rec(
            j: usize,
            degrees: &[i8],
            sigma: &mut Vec<i32>,
            out: &mut Vec<Vec<i32>>,
        ) {
            if j == degrees.len() {
                out.push(sigma.clone());
                return;
            }
            let d = i32::from(degrees[j]);
            let mut s = -d;
            while s <= d {
                sigma[j] = s;
                rec(j + 1, degrees, sigma, out);
                s += 2;
            }
        }
        rec(0, &self.degrees, &mut sigma, &mut stack);
        for s in stack {
            if self.angle_free && s.iter().all(|&v| v == 0) {
                continue;
            }
            let v = kw + s.iter().zip(big_omega).map(|(&a, w)| f64::from(a) * w).sum::<f64>();
            if v.abs() <= floor {
                let k = self.basis[0].k().iter().map(|&x| i32::from(x)).collect();
                return Err(HomologicalError::SmallDivisor { k, sigma: s, value: v });
            }
            min = min.min(v.abs());
        }
        Ok(min)
    }

    fn d_matrix(&self, kw: f64, big_omega: &[f64]) -> DMatrix<f64> {
        let n = self.basis.len();
        let mut d = DMatrix::<f64>::zeros(n, n);
        for (col, key) in self.basis.iter().enumerate() {
            if !self.angle_free {
                let (target, f) = match key.parity() {
                    Parity::Cos => (key.with_parity(Parity::Sin), -kw),
                    Parity::Sin => (key.with_parity(Parity::Cos), kw),
                };
                d[(self.index[&target], col)] += f;
            }
            let xi = key.xi();
            let eta = key.eta();
            for (j, &w) in big_omega.iter().enumerate() {
                if eta[j] > 0 {
                    let (mut a, mut b) = (xi.to_vec(), eta.to_vec());
                    a[j] += 1;
                    b[j] -= 1;
                    d[(self.index[&key.with_transverse(&a, &b)], col)] += w * f64::from(eta[j]);
                }
                if xi[j] > 0 {
                    let (mut a, mut b) = (xi.to_vec(), eta.to_vec());
                    a[j] -= 1;
                    b[j] += 1;
                    d[(self.index[&key.with_transverse(&a, &b)], col)] -= w * f64::from(xi[j]);
                }
            }
        }
        d
    }

    /// Average over the transverse rotations (only angle-free cells have a kernel).
    fn p_matrix(&self) -> DMatrix<f64> {
        let n = self.basis.len();
        let mut p = DMatrix::<f64>::zeros(n, n);
        if !self.angle_free {
            return p;
        }
        for (col, key) in self.basis.iter().enumerate() {
            let mut terms: Vec<(Vec<i8>, Vec<i8>, f64)> = vec![(vec![], vec![], 1.0)];
            for (&a, &b) in key.xi().iter().zip(key.eta()) {
                if a % 2 != 0 || b % 2 != 0 {
                    terms.clear();
                    break;
                }
                let w = double_factorial(a - 1) * double_factorial(b - 1) / double_factorial(a + b);
                let half = (a + b) / 2;
                let mut next = Vec::new();
                for (xa, xb, c) in &terms {
                    for i in 0..=half {
                        let (mut na, mut nb) = (xa.clone(), xb.clone());
                        na.push(2 * i);
                        nb.push(2 * (half - i));
                        next.push((na, nb, c * w * binomial(half, i)));
                    }
                }
                terms = next;
            }
            for (a, b, c) in terms {
                p[(self.index[&key.with_transverse(&a, &b)], col)] += c;
            }
        }
        p
    }
}

fn double_factorial(n: i8) -> f64 {
    let mut v = 1.0;
    let mut k = n;
    while k > 1 {
        v *= f64::from(k);
        k -= 2;
    }
    v
}

fn binomial(n: i8, k: i8) -> f64 {
    let mut v = 1.0;
    for i in 0..k {
        v = v * f64::from(n - i) / f64::from(i + 1);
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::{Caps, Dims};

    #[test]
    fn chi0_example() {
        let d = Dims::new(1, 0).unwrap();
        let caps = Caps::new(8, 24);
        let mut f = TrigSeries::monomial(d, caps, &[0], &[], &[], &[2], Parity::Cos, 0.5);
        f.add_scaled(&TrigSeries::monomial(d, caps, &[0], &[], &[], &[1], Parity::Sin, 0.3), 1.0).unwrap();
        let s = solve(&f, &[1.0], &[], 1e-8).unwrap();
        assert!((s.chi.get(&TermKey::new(d, &[0], &[], &[], &[2], Parity::Sin).unwrap().0) - 0.25).abs() < 1e-15);
        assert!((s.chi.get(&TermKey::new(d, &[0], &[], &[], &[1], Parity::Cos).unwrap().0) + 0.3).abs() < 1e-15);
    }

    #[test]
    fn averages_of_transverse_monomials() {
        let d = Dims::new(0, 1).unwrap();
        let caps = Caps::UNBOUNDED;
        // ⟨ξ²⟩ = (ξ²+η²)/2, ⟨ξ²η²⟩ = (ξ²+η²)²/8
        let xi2 = TrigSeries::monomial(d, caps, &[], &[2], &[0], &[], Parity::Cos, 1.0);
        let s = solve(&xi2, &[], &[0.7], 1e-8).unwrap();
        assert_eq!(s.kernel.len(), 2);
        assert!(s.kernel.iter().all(|(_, c)| (c - 0.5).abs() < 1e-15));
        let x = TrigSeries::monomial(d, caps, &[], &[2], &[2], &[], Parity::Cos, 1.0);
        let s = solve(&x, &[], &[0.7], 1e-8).unwrap();
        let k = |a, b| TermKey::new(d, &[], &[a], &[b], &[], Parity::Cos).unwrap().0;
        assert!((s.kernel.get(&k(4, 0)) - 0.125).abs() < 1e-15);
        assert!((s.kernel.get(&k(2, 2)) - 0.25).abs() < 1e-15);
    }
}
