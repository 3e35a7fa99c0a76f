//! Finite-order Birkhoff normal form around a constructed elliptic torus.
//!
//! Terms are graded by their degree in the square roots of the actions `(p, J)`: `p`
//! counts 2 and each `ξ_j`, `η_j` counts 1. Step `r` removes the angle-dependent part of
//! degree `r + 2` against `ν·I = ω·p + Σ Ω_j (ξ_j² + η_j²)/2`.

use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::homological::{self, HomologicalError};
use crate::model::{modes_forward, semi_sinusoidal_ic, specific_energy, total_energy, ChainConfig, GradedHamiltonian, TorusSeed};
use crate::normalizer::TransformStack;
use crate::series::{Caps, Dims, LieOperator, Point, SeriesError, TrigSeries};
use crate::transform::{flow, map_from_original};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BirkhoffError {
    #[error(transparent)]
    Homological(#[from] HomologicalError),
    #[error(transparent)]
    Series(#[from] SeriesError),
    #[error("normalized part of degree {0} depends on the angles")]
    NotAngleFree(u32),
    #[error("zero torus frequency")]
    ZeroFrequency,
}

#[derive(Debug, Clone)]
pub struct BirkhoffForm {
    pub dims: Dims,
    pub caps: Caps,
    pub omega: Vec<f64>,
    pub big_omega: Vec<f64>,
    pub energy: f64,
    pub order: u32,
    /// `Z₀ = ν·I`, then `Z_s` of degree `s + 2`.
    pub z: Vec<TrigSeries>,
    /// Not yet normalized terms by degree (all degrees above `order + 2`).
    pub blocks: BTreeMap<u32, TrigSeries>,
    pub generators: Vec<TrigSeries>,
    /// `‖·‖₁` of the terms of degree < 3 left over by the torus normalization and dropped.
    pub dropped: f64,
}

impl BirkhoffForm {
    /// Order-zero form of a torus normal form: the torus sits at `p = ξ = η = 0`.
    #[must_use]
    pub fn from_normal_form(h: &GradedHamiltonian) -> BirkhoffForm {
        let mut blocks: BTreeMap<u32, TrigSeries> = BTreeMap::new();
        let mut dropped = 0.0;
        for (idx, b) in &h.blocks {
            if idx.ell < 3 {
                dropped += b.l1_norm();
                continue;
            }
            blocks.entry(idx.ell).or_insert_with(|| TrigSeries::zero(h.dims, h.caps)).add_scaled(b, 1.0).expect("same dims");
        }
        blocks.retain(|_, b| !b.is_empty());
        BirkhoffForm {
            dims: h.dims,
            caps: h.caps,
            omega: h.omega.clone(),
            big_omega: h.big_omega.clone(),
            energy: h.energy,
            order: 0,
            z: vec![h.normal_part()],
            blocks,
            generators: Vec::new(),
            dropped,
        }
    }

    /// `Σ_{ℓ>r} f_ℓ`: everything of degree above `order + 2`.
    #[must_use]
    pub fn remainder(&self) -> TrigSeries {
        let mut s = TrigSeries::zero(self.dims, self.caps);
        for b in self.blocks.values() {
            s.add_scaled(b, 1.0).expect("same dims");
        }
        s
    }

    /// `|ℛ(z)|` at a point in Birkhoff coordinates.
    #[must_use]
    pub fn remainder_value_at(&self, z: &Point) -> f64 {
        self.blocks.values().map(|b| b.evaluate(z)).sum::<f64>().abs()
    }

    /// `Σ |c| |p|^m ρ^{a+b}` with `ρ_j = (ξ_j² + η_j²)^{1/2}`: the size of the remainder
    /// uniformly over all angles at the actions of `z`.
    #[must_use]
    pub fn remainder_size_at(&self, z: &Point) -> f64 {
        let rho: Vec<f64> = z.xi.iter().zip(&z.eta).map(|(x, e)| x.hypot(*e)).collect();
        let mut total = 0.0;
        for b in self.blocks.values() {
            for (k, c) in b.iter() {
                let mut v = c.abs();
                for (e, p) in k.m().iter().zip(&z.p) {
                    v *= p.abs().powi(i32::from(*e));
                }
                for ((a, bb), r) in k.xi().iter().zip(k.eta()).zip(&rho) {
                    v *= r.powi(i32::from(*a) + i32::from(*bb));
                }
                total += v;
            }
        }
        total
    }

    /// The integrable part `Σ Z_s` plus the remainder, with the torus energy.
    #[must_use]
    pub fn evaluate(&self, z: &Point) -> f64 {
        self.energy + self.z.iter().map(|s| s.evaluate(z)).sum::<f64>() + self.blocks.values().map(|b| b.evaluate(z)).sum::<f64>()
    }

    /// Torus normal-form coordinates → Birkhoff coordinates.
    #[must_use]
    pub fn to_birkhoff(&self, z: &Point) -> Point {
        self.generators.iter().fold(z.clone(), |z, chi| flow(chi, &z, -1.0))
    }

    /// Birkhoff coordinates → torus normal-form coordinates.
    #[must_use]
    pub fn from_birkhoff(&self, z: &Point) -> Point {
        self.generators.iter().rev().fold(z.clone(), |z, chi| flow(chi, &z, 1.0))
    }
}

/// Moves the angle-dependent part of the degree `order + 3` terms into higher degrees.
pub fn birkhoff_step(form: &mut BirkhoffForm, divisor_floor: f64) -> Result<(), BirkhoffError> {
    let r = form.order + 1;
    let d = r + 2;
    let g = form.blocks.remove(&d).unwrap_or_else(|| TrigSeries::zero(form.dims, form.caps));
    let sol = homological::solve(&g, &form.omega, &form.big_omega, divisor_floor)?;
    if sol.kernel.iter().any(|(k, _)| k.k().iter().any(|&v| v != 0) || k.xi().iter().chain(k.eta()).any(|a| a % 2 != 0)) {
        return Err(BirkhoffError::NotAngleFree(d));
    }
    let max = form.caps.max_degree;
    let mut new = form.blocks.clone();
    if !sol.chi.is_empty() {
        let op = LieOperator::new(&sol.chi);
        let mut add = |deg: u32, f: &TrigSeries| {
            if !f.is_empty() {
                new.entry(deg).or_insert_with(|| TrigSeries::zero(form.dims, form.caps)).add_scaled(f, 1.0).expect("same dims");
            }
        };
        // normal part: L_χ ν·I = Πg − g, then L^{i−1}(Πg − g)/i!
        let mut term = sol.kernel.sub(&g)?;
        let mut deg = d;
        let mut i = 1.0;
        while deg + r <= max {
            i += 1.0;
            deg += r;
            term = op.apply(&term, form.caps).scale(1.0 / i);
            if term.is_empty() {
                break;
            }
            add(deg, &term);
        }
        for (src, f) in form.blocks.iter().map(|(&k, v)| (k, v)).chain(std::iter::once((d, &g))) {
            let mut term = f.clone();
            let mut deg = src;
            let mut i = 0.0;
            while deg + r <= max {
                i += 1.0;
                deg += r;
                term = op.apply(&term, form.caps).scale(1.0 / i);
                if term.is_empty() {
                    break;
                }
                add(deg, &term);
            }
        }
    }
    new.retain(|_, b| !b.is_empty());
    form.blocks = new;
    form.z.push(sol.kernel);
    form.generators.push(sol.chi);
    form.order = r;
    Ok(())
}

/// Birkhoff normal form of the given order around the torus of `h`.
pub fn run_birkhoff(h: &GradedHamiltonian, order: u32, divisor_floor: f64) -> Result<BirkhoffForm, BirkhoffError> {
    let mut form = BirkhoffForm::from_normal_form(h);
    for _ in 0..order {
        birkhoff_step(&mut form, divisor_floor)?;
    }
    Ok(form)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub amplitude: f64,
    pub specific_energy: f64,
    /// `|ℛ|` at the point.
    pub remainder: f64,
    /// Angle-uniform size of `ℛ` at the actions of the point.
    pub remainder_size: f64,
}

/// `points` amplitudes spread `±width` around the one whose quadratic energy equals `energy`.
#[must_use]
pub fn amplitude_grid(chain: &ChainConfig, energy: f64, width: f64, points: usize) -> Vec<f64> {
    let harmonic = ChainConfig { alpha: 0.0, beta: 0.0, ..*chain };
    let unit = total_energy(&harmonic, &semi_sinusoidal_ic(&harmonic, 1.0));
    let centre = (energy / unit).sqrt();
    if points < 2 {
        return vec![centre];
    }
    (0..points).map(|i| centre * (1.0 - width + 2.0 * width * i as f64 / (points - 1) as f64)).collect()
}

/// Remainder at the semi-sinusoidal initial condition of amplitude `a`.
#[must_use]
pub fn scan_point(chain: &ChainConfig, seed: &TorusSeed, stack: &TransformStack, form: &BirkhoffForm, a: f64) -> ScanPoint {
    let c = semi_sinusoidal_ic(chain, a);
    let z = form.to_birkhoff(&map_from_original(stack, seed, &modes_forward(chain, &c)));
    ScanPoint { amplitude: a, specific_energy: specific_energy(chain, &c), remainder: form.remainder_value_at(&z), remainder_size: form.remainder_size_at(&z) }
}

/// Remainder at each semi-sinusoidal initial condition of the grid.
#[must_use]
pub fn scan_semi_sinusoidal(chain: &ChainConfig, seed: &TorusSeed, stack: &TransformStack, form: &BirkhoffForm, amplitudes: &[f64]) -> Vec<ScanPoint> {
    amplitudes.iter().map(|&a| scan_point(chain, seed, stack, form, a)).collect()
}

/// Grid minimum of the remainder size refined by golden-section search between the
/// neighbouring grid amplitudes.
#[must_use]
pub fn minimize_remainder(chain: &ChainConfig, seed: &TorusSeed, stack: &TransformStack, form: &BirkhoffForm, amplitudes: &[f64]) -> Option<ScanPoint> {
    let scan = scan_semi_sinusoidal(chain, seed, stack, form, amplitudes);
    let best = minimum(&scan)?;
    let i = scan.iter().position(|p| p.amplitude == best.amplitude)?;
    let (mut lo, mut hi) = (scan[i.saturating_sub(1)].amplitude, scan[(i + 1).min(scan.len() - 1)].amplitude);
    let eval = |a: f64| scan_point(chain, seed, stack, form, a);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut c, mut d) = (hi - g * (hi - lo), lo + g * (hi - lo));
    let (mut pc, mut pd) = (eval(c), eval(d));
    while hi - lo > 1e-12 * hi.abs() {
        if pc.remainder_size < pd.remainder_size {
            hi = d;
            d = c;
            pd = pc;
            c = hi - g * (hi - lo);
            pc = eval(c);
        } else {
            lo = c;
            c = d;
            pc = pd;
            d = lo + g * (hi - lo);
            pd = eval(d);
        }
    }
    [best, pc, pd].into_iter().filter(|p| p.remainder_size.is_finite()).min_by(|a, b| a.remainder_size.total_cmp(&b.remainder_size))
}

/// The scan point with the smallest finite angle-uniform remainder size.
#[must_use]
pub fn minimum(scan: &[ScanPoint]) -> Option<ScanPoint> {
    scan.iter().filter(|p| p.remainder_size.is_finite()).min_by(|a, b| a.remainder_size.total_cmp(&b.remainder_size)).copied()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Monodromy {
    /// `θ_j = 2πΩ_j/ω₁` reduced to `(−π, π]`.
    pub angles: Vec<f64>,
    /// `e^{±iθ_j}` for every `j`, then the unit pair.
    pub eigenvalues: Vec<Complex64>,
}

/// Monodromy eigenvalues of a one-dimensional elliptic torus from its normal form.
pub fn monodromy_angles(omega1: f64, big_omega: &[f64]) -> Result<Monodromy, BirkhoffError> {
    if omega1 == 0.0 {
        return Err(BirkhoffError::ZeroFrequency);
    }
    let angles: Vec<f64> = big_omega
        .iter()
        .map(|w| {
            let t = (TAU * w / omega1).rem_euclid(TAU);
            if t > PI { t - TAU } else { t }
        })
        .collect();
    let mut eigenvalues = Vec::with_capacity(2 * angles.len() + 2);
    for &t in &angles {
        eigenvalues.push(Complex64::from_polar(1.0, t));
        eigenvalues.push(Complex64::from_polar(1.0, -t));
    }
    eigenvalues.extend([Complex64::new(1.0, 0.0); 2]);
    Ok(Monodromy { angles, eigenvalues })
}
