//! The FPU chain, its normal modes and the expansion around a torus seed.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::series::{Caps, ClassIndex, Dims, Parity, Point, SeriesError, TermKey, TrigSeries, Var};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("chain needs N >= 2, got {0}")]
    TooShort(usize),
    #[error("torus dimension n1 = {n1} must be in 1..={max}")]
    BadTorusDim { n1: usize, max: usize },
    #[error("I*[{0}] = {1} is not positive")]
    NonPositiveAction(usize, f64),
    #[error(transparent)]
    Series(#[from] SeriesError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub n: usize,
    pub alpha: f64,
    pub beta: f64,
}

impl ChainConfig {
    pub fn new(n: usize, alpha: f64, beta: f64) -> Result<Self, ModelError> {
        if n < 2 {
            return Err(ModelError::TooShort(n));
        }
        Ok(ChainConfig { n, alpha, beta })
    }

    /// Number of normal modes, `N − 1`.
    #[must_use]
    pub fn modes(&self) -> usize {
        self.n - 1
    }
}

/// Interior positions and momenta `x_1..x_{N−1}`, `y_1..y_{N−1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cartesian {
    pub y: Vec<f64>,
    pub x: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeState {
    pub y: Vec<f64>,
    pub x: Vec<f64>,
}

/// `ν_j = 2 sin(jπ/2N)`, `j = 1..N−1`.
#[must_use]
pub fn mode_frequencies(cfg: &ChainConfig) -> Vec<f64> {
    let n = cfg.n as f64;
    (1..cfg.n).map(|j| 2.0 * (j as f64 * std::f64::consts::PI / (2.0 * n)).sin()).collect()
}

/// Orthogonal symmetric sine matrix `S_{lj} = √(2/N) sin(jlπ/N)`.
#[must_use]
pub fn sine_matrix(n: usize) -> Vec<Vec<f64>> {
    let scale = (2.0 / n as f64).sqrt();
    (1..n)
        .map(|l| {
            (1..n)
                .map(|j| {
                    // reduce jl mod 2N before the sine for accuracy
                    let r = (j * l) % (2 * n);
                    scale * (r as f64 * std::f64::consts::PI / n as f64).sin()
                })
                .collect()
        })
        .collect()
}

fn apply(s: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    s.iter().map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum()).collect()
}

#[must_use]
pub fn modes_forward(cfg: &ChainConfig, c: &Cartesian) -> ModeState {
    let s = sine_matrix(cfg.n);
    let nu = mode_frequencies(cfg);
    let sx = apply(&s, &c.x);
    let sy = apply(&s, &c.y);
    ModeState {
        x: sx.iter().zip(&nu).map(|(v, n)| v * n.sqrt()).collect(),
        y: sy.iter().zip(&nu).map(|(v, n)| v / n.sqrt()).collect(),
    }
}

#[must_use]
pub fn modes_backward(cfg: &ChainConfig, m: &ModeState) -> Cartesian {
    let s = sine_matrix(cfg.n);
    let nu = mode_frequencies(cfg);
    let xs: Vec<f64> = m.x.iter().zip(&nu).map(|(v, n)| v / n.sqrt()).collect();
    let ys: Vec<f64> = m.y.iter().zip(&nu).map(|(v, n)| v * n.sqrt()).collect();
    Cartesian { x: apply(&s, &xs), y: apply(&s, &ys) }
}

/// Bond elongations `x_{j+1} − x_j`, `j = 0..N−1`, with fixed ends.
#[must_use]
pub fn bonds(x: &[f64]) -> Vec<f64> {
    let n = x.len() + 1;
    (0..n)
        .map(|j| {
            let right = if j + 1 < n { x[j] } else { 0.0 };
            let left = if j >= 1 { x[j - 1] } else { 0.0 };
            right - left
        })
        .collect()
}

#[must_use]
pub fn total_energy(cfg: &ChainConfig, c: &Cartesian) -> f64 {
    let kin: f64 = c.y.iter().map(|v| 0.5 * v * v).sum();
    let pot: f64 = bonds(&c.x)
        .iter()
        .map(|&d| 0.5 * d * d + cfg.alpha / 3.0 * d * d * d + cfg.beta / 4.0 * d * d * d * d)
        .sum();
    kin + pot
}

#[must_use]
pub fn specific_energy(cfg: &ChainConfig, c: &Cartesian) -> f64 {
    total_energy(cfg, c) / cfg.n as f64
}

/// Only the first mode excited: `X₁ = A`, everything else zero.
#[must_use]
pub fn semi_sinusoidal_ic(cfg: &ChainConfig, amplitude: f64) -> Cartesian {
    let mut x = vec![0.0; cfg.modes()];
    x[0] = amplitude;
    modes_backward(cfg, &ModeState { y: vec![0.0; cfg.modes()], x })
}

/// `Σ_{l=0}^{N−1} cos(m(2l+1)π/2N)`: `N(−1)^{m/2N}` when `2N | m`, else 0.
fn cos_sum(m: i64, n: usize) -> f64 {
    let two_n = 2 * n as i64;
    if m.rem_euclid(two_n) != 0 {
        return 0.0;
    }
    if (m / two_n).rem_euclid(2) == 0 {
        n as f64
    } else {
        -(n as f64)
    }
}

/// Hamiltonian as a polynomial in the modes, stored with `n₁ = 0`, `ξ_j = Y_j`, `η_j = X_j`.
pub fn hamiltonian_in_modes(cfg: &ChainConfig) -> Result<TrigSeries, ModelError> {
    let nm = cfg.modes();
    let dims = Dims::new(0, nm)?;
    let mut h = TrigSeries::zero(dims, Caps::UNBOUNDED);
    let nu = mode_frequencies(cfg);
    for (j, &nj) in nu.iter().enumerate() {
        let mut a = vec![0u32; nm];
        a[j] = 2;
        let z = vec![0u32; nm];
        h.add_scaled(&TrigSeries::monomial(dims, Caps::UNBOUNDED, &[], &a, &z, &[], Parity::Cos, 0.5 * nj), 1.0)?;
        h.add_scaled(&TrigSeries::monomial(dims, Caps::UNBOUNDED, &[], &z, &a, &[], Parity::Cos, 0.5 * nj), 1.0)?;
    }
    h.add_scaled(&anharmonic_part(cfg)?, 1.0)?;
    Ok(h)
}

/// Cubic and quartic potential in the mode coordinates `X` (stored as `η`).
pub fn anharmonic_part(cfg: &ChainConfig) -> Result<TrigSeries, ModelError> {
    let nm = cfg.modes();
    let dims = Dims::new(0, nm)?;
    let nu = mode_frequencies(cfg);
    // Δ_l = Σ_j c_j cos(j θ_l) X_j with θ_l = (2l+1)π/2N
    let c: Vec<f64> = nu.iter().map(|v| (2.0 / cfg.n as f64).sqrt() * v.sqrt()).collect();
    let mut coeffs: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
    let n = cfg.n;
    if cfg.alpha != 0.0 {
        for a in 0..nm {
            for b in 0..nm {
                for d in 0..nm {
                    let (ja, jb, jd) = ((a + 1) as i64, (b + 1) as i64, (d + 1) as i64);
                    let mut s = 0.0;
                    for sb in [1, -1] {
                        for sd in [1, -1] {
                            s += cos_sum(ja + sb * jb + sd * jd, n);
                        }
                    }
                    if s != 0.0 {
                        let mut e = vec![0u32; nm];
                        e[a] += 1;
                        e[b] += 1;
                        e[d] += 1;
                        *coeffs.entry(e).or_insert(0.0) += cfg.alpha / 3.0 * c[a] * c[b] * c[d] * s / 4.0;
                    }
                }
            }
        }
    }
    if cfg.beta != 0.0 {
        for a in 0..nm {
            for b in 0..nm {
                for d in 0..nm {
                    for g in 0..nm {
                        let j = [(a + 1) as i64, (b + 1) as i64, (d + 1) as i64, (g + 1) as i64];
                        let mut s = 0.0;
                        for sb in [1, -1] {
                            for sd in [1, -1] {
                                for sg in [1, -1] {
                                    s += cos_sum(j[0] + sb * j[1] + sd * j[2] + sg * j[3], n);
                                }
                            }
                        }
                        if s != 0.0 {
                            let mut e = vec![0u32; nm];
                            for idx in [a, b, d, g] {
                                e[idx] += 1;
                            }
                            *coeffs.entry(e).or_insert(0.0) +=
                                cfg.beta / 4.0 * c[a] * c[b] * c[d] * c[g] * s / 8.0;
                        }
                    }
                }
            }
        }
    }
    let mut h = TrigSeries::zero(dims, Caps::UNBOUNDED);
    let zero = vec![0u32; nm];
    for (e, v) in coeffs {
        h.add_scaled(&TrigSeries::monomial(dims, Caps::UNBOUNDED, &[], &zero, &e, &[], Parity::Cos, v), 1.0)?;
    }
    Ok(h)
}

/// Action translation `I = I* + p` applied to the first `n₁` modes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TorusSeed {
    pub n1: usize,
    pub istar: Vec<f64>,
}

impl TorusSeed {
    pub fn new(cfg: &ChainConfig, istar: Vec<f64>) -> Result<Self, ModelError> {
        let n1 = istar.len();
        if n1 == 0 || n1 > cfg.modes() {
            return Err(ModelError::BadTorusDim { n1, max: cfg.modes() });
        }
        if let Some((j, &v)) = istar.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
            return Err(ModelError::NonPositiveAction(j, v));
        }
        Ok(TorusSeed { n1, istar })
    }

    #[must_use]
    pub fn dims(&self, cfg: &ChainConfig) -> Dims {
        Dims { n1: self.n1, n2: cfg.modes() - self.n1 }
    }
}

/// Hamiltonian `ℰ + ω·p + Σ Ω_j(ξ_j²+η_j²)/2 + Σ blocks`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradedHamiltonian {
    pub dims: Dims,
    pub omega: Vec<f64>,
    pub big_omega: Vec<f64>,
    pub energy: f64,
    pub blocks: BTreeMap<ClassIndex, TrigSeries>,
    pub k_width: u32,
    pub caps: Caps,
}

impl GradedHamiltonian {
    /// `ω·p + Σ Ω_j (ξ_j² + η_j²)/2` (without the constant).
    #[must_use]
    pub fn normal_part(&self) -> TrigSeries {
        normal_part(self.dims, self.caps, &self.omega, &self.big_omega)
    }

    /// Everything summed into one series, including `ℰ`.
    #[must_use]
    pub fn to_series(&self) -> TrigSeries {
        let mut s = self.normal_part();
        s.add_term(TermKey::unit(self.dims), self.energy);
        for b in self.blocks.values() {
            s.add_scaled(b, 1.0).expect("blocks share dims");
        }
        s
    }

    #[must_use]
    pub fn evaluate(&self, z: &Point) -> f64 {
        let mut v = self.energy + self.normal_part().evaluate(z);
        for b in self.blocks.values() {
            v += b.evaluate(z);
        }
        v
    }

    #[must_use]
    pub fn block(&self, ell: u32, s: u32) -> Option<&TrigSeries> {
        self.blocks.get(&ClassIndex { ell, s })
    }

    /// Sum of all blocks with the given `ℓ` and `s`.
    #[must_use]
    pub fn block_or_empty(&self, ell: u32, s: u32) -> TrigSeries {
        self.block(ell, s).cloned().unwrap_or_else(|| TrigSeries::zero(self.dims, self.caps))
    }

    /// Adds `f` to block `(ℓ, s)`, dropping the block when it becomes empty.
    pub fn add_to_block(&mut self, idx: ClassIndex, f: &TrigSeries) {
        if f.is_empty() {
            return;
        }
        let dims = self.dims;
        let caps = self.caps;
        let e = self.blocks.entry(idx).or_insert_with(|| TrigSeries::zero(dims, caps));
        e.add_scaled(f, 1.0).expect("blocks share dims");
        if e.is_empty() {
            self.blocks.remove(&idx);
        }
    }
}

#[must_use]
pub fn normal_part(dims: Dims, caps: Caps, omega: &[f64], big_omega: &[f64]) -> TrigSeries {
    let mut s = TrigSeries::zero(dims, caps);
    for (j, &w) in omega.iter().enumerate() {
        s.add_scaled(&TrigSeries::variable(dims, caps, Var::P(j)).scale(w), 1.0).expect("same dims");
    }
    for (j, &w) in big_omega.iter().enumerate() {
        let mut two = vec![0u32; dims.n2];
        two[j] = 2;
        let z = vec![0u32; dims.n2];
        let m = vec![0u32; dims.n1];
        let k = vec![0i32; dims.n1];
        s.add_scaled(&TrigSeries::monomial(dims, caps, &m, &two, &z, &k, Parity::Cos, 0.5 * w), 1.0)
            .expect("same dims");
        s.add_scaled(&TrigSeries::monomial(dims, caps, &m, &z, &two, &k, Parity::Cos, 0.5 * w), 1.0)
            .expect("same dims");
    }
    s
}

/// `Σ_m binom(e/2, m) x^m` coefficients up to `m_max`.
fn half_binomials(e: u32, m_max: u32) -> Vec<f64> {
    let a = f64::from(e) / 2.0;
    let mut out = Vec::with_capacity(m_max as usize + 1);
    let mut c = 1.0;
    for m in 0..=m_max {
        out.push(c);
        c *= (a - f64::from(m)) / f64::from(m + 1);
    }
    out
}

/// `(2I)^{e/2} sin^e(q_j)` with `I = I* + p_j`, expanded in `p_j` within `caps`.
fn action_angle_factor(dims: Dims, caps: Caps, j: usize, e: u32, istar: f64) -> TrigSeries {
    let zero_m = vec![0u32; dims.n1];
    let zero_t = vec![0u32; dims.n2];
    let zero_k = vec![0i32; dims.n1];
    let mut k1 = zero_k.clone();
    k1[j] = 1;
    let sin_q = TrigSeries::monomial(dims, caps, &zero_m, &zero_t, &zero_t, &k1, Parity::Sin, 1.0);
    let mut trig = TrigSeries::constant(dims, caps, 1.0);
    for _ in 0..e {
        trig = trig.mul(&sin_q, caps).expect("same dims");
    }
    let m_max = caps.max_degree / 2;
    let bin = half_binomials(e, m_max);
    let mut radial = TrigSeries::zero(dims, caps);
    let pref = (2.0 * istar).powf(f64::from(e) / 2.0);
    for (m, b) in bin.iter().enumerate() {
        if *b == 0.0 {
            break;
        }
        let mut mm = zero_m.clone();
        mm[j] = m as u32;
        let c = pref * b / istar.powi(m as i32);
        radial.add_scaled(&TrigSeries::monomial(dims, caps, &mm, &zero_t, &zero_t, &zero_k, Parity::Cos, c), 1.0)
            .expect("same dims");
    }
    radial.mul(&trig, caps).expect("same dims")
}

/// The anharmonic part `ℋ*` re-expressed in `(p, q, ξ, η)` around the seed.
pub fn expand_perturbation(cfg: &ChainConfig, seed: &TorusSeed, caps: Caps) -> Result<TrigSeries, ModelError> {
    let dims = seed.dims(cfg);
    let hstar = anharmonic_part(cfg)?;
    let mut out = TrigSeries::zero(dims, caps);
    let mut cache: BTreeMap<(usize, u32, u32), TrigSeries> = BTreeMap::new();
    for (key, c) in hstar.sorted_terms() {
        let x = key.eta();
        let mut trans = vec![0u32; dims.n2];
        for i in 0..dims.n2 {
            trans[i] = x[seed.n1 + i] as u32;
        }
        let tdeg: u32 = trans.iter().sum();
        if tdeg > caps.max_degree {
            continue;
        }
        let sub = Caps { max_degree: caps.max_degree - tdeg, max_trig: caps.max_trig };
        let mut f = TrigSeries::constant(dims, sub, c);
        for j in 0..seed.n1 {
            let e = x[j] as u32;
            if e == 0 {
                continue;
            }
            let fac = cache
                .entry((j, e, sub.max_degree))
                .or_insert_with(|| action_angle_factor(dims, sub, j, e, seed.istar[j]));
            f = f.mul(fac, sub)?;
        }
        let zero_m = vec![0u32; dims.n1];
        let zero_k = vec![0i32; dims.n1];
        let zt = vec![0u32; dims.n2];
        let mono = TrigSeries::monomial(dims, caps, &zero_m, &zt, &trans, &zero_k, Parity::Cos, 1.0);
        out.add_scaled(&f.mul(&mono, caps)?, 1.0)?;
    }
    Ok(out)
}

/// Builds `H⁽⁰⁾`: constants go to `ℰ`, angle-free `p`-linear terms to `ω`, the remaining
/// terms to blocks by `s = ceil(|k|/K)`. Angle-free terms with `ℓ ≤ 2` that are not
/// in normal form are placed in block `s = 1` so the first step removes them.
pub fn assemble_h0(cfg: &ChainConfig, seed: &TorusSeed, caps: Caps, k_width: u32) -> Result<GradedHamiltonian, ModelError> {
    let dims = seed.dims(cfg);
    let nu = mode_frequencies(cfg);
    let mut omega: Vec<f64> = nu[..seed.n1].to_vec();
    let big_omega: Vec<f64> = nu[seed.n1..].to_vec();
    let mut energy: f64 = omega.iter().zip(&seed.istar).map(|(w, i)| w * i).sum();
    let pert = expand_perturbation(cfg, seed, caps)?;
    let mut blocks: BTreeMap<ClassIndex, TrigSeries> = BTreeMap::new();
    for (key, c) in pert.sorted_terms() {
        let ell = key.degree();
        if key.is_angle_free() {
            if ell == 0 {
                energy += c;
                continue;
            }
            if ell == 2 && key.xi().iter().chain(key.eta()).all(|&v| v == 0) {
                let j = key.m().iter().position(|&v| v == 1).expect("p-linear");
                omega[j] += c;
                continue;
            }
        }
        let mut idx = ClassIndex::of(&key, k_width);
        if idx.s == 0 && ell <= 2 {
            idx.s = 1;
        }
        blocks.entry(idx).or_insert_with(|| TrigSeries::zero(dims, caps)).add_term(key, c);
    }
    Ok(GradedHamiltonian { dims, omega, big_omega, energy, blocks, k_width, caps })
}

/// Torus-adapted coordinates back to modes: `X_j = √(2I_j) sin q_j`, `Y_j = √(2I_j) cos q_j`.
pub fn point_to_modes(seed: &TorusSeed, z: &Point) -> Result<ModeState, ModelError> {
    let mut x = Vec::new();
    let mut y = Vec::new();
    for j in 0..seed.n1 {
        let i = seed.istar[j] + z.p[j];
        if i < 0.0 {
            return Err(ModelError::NonPositiveAction(j, i));
        }
        let r = (2.0 * i).sqrt();
        x.push(r * z.q[j].sin());
        y.push(r * z.q[j].cos());
    }
    x.extend_from_slice(&z.eta);
    y.extend_from_slice(&z.xi);
    Ok(ModeState { y, x })
}

/// Inverse of [`point_to_modes`].
#[must_use]
pub fn modes_to_point(seed: &TorusSeed, m: &ModeState) -> Point {
    let n1 = seed.n1;
    let mut p = Vec::new();
    let mut q = Vec::new();
    for j in 0..n1 {
        let i = 0.5 * (m.x[j] * m.x[j] + m.y[j] * m.y[j]);
        p.push(i - seed.istar[j]);
        q.push(m.x[j].atan2(m.y[j]));
    }
    Point { p, q, xi: m.y[n1..].to_vec(), eta: m.x[n1..].to_vec() }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frequencies_n4() {
        let nu = mode_frequencies(&ChainConfig::new(4, 0.0, 0.0).unwrap());
        let want = [0.765_366_864_7, std::f64::consts::SQRT_2, 1.847_759_065_0];
        for (a, b) in nu.iter().zip(want) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn semi_sinusoidal_energy() {
        let cfg = ChainConfig::new(4, 0.0, 0.0).unwrap();
        let e = total_energy(&cfg, &semi_sinusoidal_ic(&cfg, 1.0));
        assert!((e - 0.382_683_432_4).abs() < 1e-10);
    }

    #[test]
    fn harmonic_h0_is_exact() {
        let cfg = ChainConfig::new(4, 0.0, 0.0).unwrap();
        let seed = TorusSeed::new(&cfg, vec![0.3]).unwrap();
        let h = assemble_h0(&cfg, &seed, Caps::new(8, 24), 2).unwrap();
        assert!(h.blocks.is_empty());
        let nu = mode_frequencies(&cfg);
        assert_eq!(h.omega, vec![nu[0]]);
        assert_eq!(h.big_omega, nu[1..].to_vec());
        assert!((h.energy - nu[0] * 0.3).abs() < 1e-15);
    }
}
