//! Frequency analysis of the mode signals: Hanning-windowed tuning function, iterative
//! quasi-periodic decomposition, fundamental frequencies, torus localization and
//! continuation of one-dimensional families.

use std::f64::consts::{PI, TAU};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::integrator::{integrate, Integrator, IntegratorConfig, IntegratorError, Scheme, Signals};
use crate::model::{mode_frequencies, ChainConfig, ModeState};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FaError {
    #[error("no interior maximum of the tuning function")]
    NoPeak,
    #[error("signal too short ({0} samples)")]
    TooShort(usize),
    #[error("no independent component for fundamental frequency {0}")]
    Dependent(usize),
    #[error(transparent)]
    Integrator(#[from] IntegratorError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaConfig {
    /// Components per signal.
    pub n_components: usize,
    /// Bound on `|k|₁` for integer combinations.
    pub k_max: i32,
    /// Commensurability tolerance (absolute, in frequency units).
    pub eps_tol: f64,
    /// Reconstruction tolerance relative to the leading amplitude.
    pub mu_tol: f64,
    pub max_iters: usize,
    /// Passes re-refining each frequency against the residual with its own term restored.
    pub refine_passes: usize,
}

impl Default for FaConfig {
    fn default() -> Self {
        FaConfig { n_components: 25, k_max: 20, eps_tol: 1e-12, mu_tol: 2e-6, max_iters: 20, refine_passes: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub amplitude: f64,
    /// Angular frequency.
    pub freq: f64,
    /// Phase at the start of the window, in `[0, 2π)`.
    pub phase: f64,
}

impl Component {
    #[must_use]
    pub fn value(&self, t: f64) -> Complex64 {
        Complex64::from_polar(self.amplitude, self.freq * t + self.phase)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Decomposition {
    /// Sorted by decreasing amplitude.
    pub components: Vec<Component>,
    /// Candidates dropped as near-duplicates of an extracted frequency.
    pub skipped: usize,
    /// Sampling angular frequency `2π/Δ`: frequencies are only defined modulo it.
    pub sampling: f64,
}

impl Decomposition {
    #[must_use]
    pub fn reconstruct(&self, t: f64) -> Complex64 {
        self.components.iter().map(|c| c.value(t)).sum()
    }
}

/// A uniformly sampled complex signal on `[0, T]`.
#[derive(Debug, Clone)]
struct Window<'a> {
    s: &'a [Complex64],
    dt: f64,
    w: Vec<f64>,
}

impl<'a> Window<'a> {
    fn new(s: &'a [Complex64], dt: f64) -> Result<Self, FaError> {
        if s.len() < 4 {
            return Err(FaError::TooShort(s.len()));
        }
        let n = (s.len() - 1) as f64;
        let w = (0..s.len()).map(|i| 1.0 - (TAU * i as f64 / n).cos()).collect();
        Ok(Window { s, dt, w })
    }

    fn intervals(&self) -> usize {
        self.s.len() - 1
    }

    fn duration(&self) -> f64 {
        self.intervals() as f64 * self.dt
    }

    /// `(F, F', F'')` of `F(υ) = (1/T) Σ s_i W_i e^{−iυτ_i} Δ`, with `τ` centred on the window.
    fn transform(&self, s: &[Complex64], nu: f64, derivs: bool) -> (Complex64, Complex64, Complex64) {
        let n = self.intervals();
        let half = 0.5 * self.duration();
        let (mut f0, mut f1, mut f2) = (Complex64::default(), Complex64::default(), Complex64::default());
        let step = Complex64::from_polar(1.0, -nu * self.dt);
        let mut e = Complex64::default();
        for i in 0..=n {
            let tau = i as f64 * self.dt - half;
            if i % 128 == 0 {
                e = Complex64::from_polar(1.0, -nu * tau);
            }
            let v = self.w[i] * s[i] * e;
            f0 += v;
            if derivs {
                f1 += v * tau;
                f2 += v * (tau * tau);
            }
            e *= step;
        }
        let scale = 1.0 / n as f64;
        // d/dυ e^{−iυτ} = −iτ e^{−iυτ}
        (f0 * scale, f1 * Complex64::new(0.0, -scale), f2 * (-scale))
    }

    /// Windowed inner product with `e^{iυt}` (time origin at the window start).
    fn project(&self, s: &[Complex64], nu: f64) -> Complex64 {
        let (f, _, _) = self.transform(s, nu, false);
        f * Complex64::from_polar(1.0, -nu * 0.5 * self.duration())
    }

    /// `⟨e^{iat}, e^{ibt}⟩` in closed form.
    fn gram(&self, a: f64, b: f64) -> Complex64 {
        let n = self.intervals();
        let theta = (a - b) * self.dt;
        let geo = |th: f64| -> Complex64 {
            // Σ_{i=0}^{n} e^{i th i}
            let z = Complex64::from_polar(1.0, th);
            if (1.0 - z).norm() < 1e-9 {
                let m = (n + 1) as f64;
                return Complex64::new(m, 0.5 * th * (m - 1.0) * m);
            }
            (1.0 - Complex64::from_polar(1.0, th * (n + 1) as f64)) / (1.0 - z)
        };
        let d = TAU / n as f64;
        let sum = geo(theta) - 0.5 * geo(theta + d) - 0.5 * geo(theta - d);
        sum / n as f64
    }

    /// Global maximum of `|F|` on the FFT grid (spacing ≤ π/T).
    fn coarse_peak(&self, s: &[Complex64]) -> f64 {
        let len = s.len();
        let m = (2 * len).next_power_of_two();
        let mut buf: Vec<Complex64> = (0..m).map(|i| if i < len { s[i] * self.w[i] } else { Complex64::default() }).collect();
        FftPlanner::new().plan_fft_forward(m).process(&mut buf);
        let mags: Vec<f64> = buf.iter().map(|z| z.norm_sqr()).collect();
        let k = mags.iter().enumerate().fold(0, |b, (i, v)| if *v > mags[b] { i } else { b });
        let (l, r) = (mags[(k + m - 1) % m], mags[(k + 1) % m]);
        let denom = l - 2.0 * mags[k] + r;
        let shift = if denom < 0.0 { (0.5 * (l - r) / denom).clamp(-0.5, 0.5) } else { 0.0 };
        let kk = if k > m / 2 { k as f64 - m as f64 } else { k as f64 } + shift;
        TAU * kk / (m as f64 * self.dt)
    }

    /// Local maximum of `|F|²` near `nu0` by Newton on the analytic derivative, with a
    /// golden-section fallback on `[nu0 − π/T, nu0 + π/T]`.
    fn refine(&self, s: &[Complex64], nu0: f64) -> Result<f64, FaError> {
        let t = self.duration();
        let (lo, hi) = (nu0 - 2.0 * PI / t, nu0 + 2.0 * PI / t);
        let mut nu = nu0;
        for _ in 0..40 {
            let (f, d1, d2) = self.transform(s, nu, true);
            let g = 2.0 * (f.conj() * d1).re;
            let h = 2.0 * (d1.norm_sqr() + (f.conj() * d2).re);
            if !(h < 0.0) {
                return self.golden(s, lo, hi);
            }
            let step = -g / h;
            let next = nu + step;
            if !(lo..=hi).contains(&next) {
                return self.golden(s, lo, hi);
            }
            nu = next;
            if step.abs() <= 1e-15 * nu.abs().max(1.0 / t) {
                return Ok(nu);
            }
        }
        Ok(nu)
    }

    fn golden(&self, s: &[Complex64], mut a: f64, mut b: f64) -> Result<f64, FaError> {
        let val = |x: f64| self.transform(s, x, false).0.norm_sqr();
        let r = 0.5 * (5f64.sqrt() - 1.0);
        let (mut c, mut d) = (b - r * (b - a), a + r * (b - a));
        let (mut fc, mut fd) = (val(c), val(d));
        let (fa, fb) = (val(a), val(b));
        while (b - a).abs() > 1e-14 * a.abs().max(1e-3) {
            if fc > fd {
                b = d;
                d = c;
                fd = fc;
                c = b - r * (b - a);
                fc = val(c);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + r * (b - a);
                fd = val(d);
            }
        }
        let x = 0.5 * (a + b);
        let fx = val(x);
        if fx < fa.max(fb) {
            return Err(FaError::NoPeak);
        }
        Ok(x)
    }
}

/// `|1/T ∫ s(t) e^{−iυt} W(t) dt|` by the trapezoidal rule on the sample grid.
pub fn tuning(signal: &[Complex64], dt: f64, nu: f64) -> Result<f64, FaError> {
    let w = Window::new(signal, dt)?;
    Ok(w.transform(signal, nu, false).0.norm())
}

/// Maximum of the tuning function inside `[lo, hi]`.
pub fn find_peak(signal: &[Complex64], dt: f64, lo: f64, hi: f64) -> Result<f64, FaError> {
    let w = Window::new(signal, dt)?;
    let t = w.duration();
    let grid = ((hi - lo) / (PI / t)).ceil().max(2.0) as usize;
    let vals: Vec<f64> = (0..=grid).map(|i| w.transform(signal, lo + (hi - lo) * i as f64 / grid as f64, false).0.norm()).collect();
    let k = vals.iter().enumerate().fold(0, |b, (i, v)| if *v > vals[b] { i } else { b });
    if k == 0 || k == grid {
        return Err(FaError::NoPeak);
    }
    let nu0 = lo + (hi - lo) * k as f64 / grid as f64;
    let nu = w.refine(signal, nu0)?;
    if nu < lo || nu > hi {
        return Err(FaError::NoPeak);
    }
    Ok(nu)
}

/// Global maximum of the tuning function.
pub fn global_peak(signal: &[Complex64], dt: f64) -> Result<f64, FaError> {
    let w = Window::new(signal, dt)?;
    let nu0 = w.coarse_peak(signal);
    w.refine(signal, nu0)
}

/// Iterative extraction of `cfg.n_components` terms `A e^{i(υt+φ)}`; amplitudes are the
/// least-squares solution of the windowed Gram system of all frequencies found so far.
pub fn decompose(signal: &[Complex64], dt: f64, cfg: &FaConfig) -> Result<Decomposition, FaError> {
    let w = Window::new(signal, dt)?;
    let n = signal.len();
    let t = w.duration();
    let mut freqs: Vec<f64> = Vec::new();
    let mut basis: Vec<Vec<Complex64>> = Vec::new();
    let mut coef: Vec<Complex64> = Vec::new();
    let mut rhs: Vec<Complex64> = Vec::new();
    let mut residual = signal.to_vec();
    let mut skipped = 0;
    let scale0 = signal.iter().fold(0.0f64, |m, z| m.max(z.norm()));
    let sampling = TAU / dt;
    if scale0 == 0.0 {
        return Ok(Decomposition { components: Vec::new(), skipped: 0, sampling });
    }
    while freqs.len() < cfg.n_components {
        if residual.iter().fold(0.0f64, |m, z| m.max(z.norm())) <= 1e-15 * scale0 {
            break;
        }
        let nu = w.refine(&residual, w.coarse_peak(&residual))?;
        if freqs.iter().any(|f| (f - nu).abs() < 0.05 * PI / t) {
            skipped += 1;
            break;
        }
        freqs.push(nu);
        rhs.push(w.project(signal, nu));
        let k = freqs.len();
        let g = DMatrix::from_fn(k, k, |i, j| w.gram(freqs[j], freqs[i]));
        let b = DVector::from_vec(rhs.clone());
        let Some(sol) = g.clone().lu().solve(&b) else {
            freqs.pop();
            rhs.pop();
            skipped += 1;
            break;
        };
        basis.push(tone(nu, dt, n));
        coef.push(Complex64::default());
        for (j, bj) in basis.iter().enumerate() {
            let delta = sol[j] - coef[j];
            if delta != Complex64::default() {
                for (r, v) in residual.iter_mut().zip(bj) {
                    *r -= delta * v;
                }
            }
            coef[j] = sol[j];
        }
    }
    for _ in 0..cfg.refine_passes {
        if freqs.is_empty() {
            break;
        }
        // leakage of the other terms biases frequencies found early; redo each peak on
        // the signal minus every other term
        for j in 0..freqs.len() {
            let local: Vec<Complex64> = residual.iter().zip(&basis[j]).map(|(r, b)| r + coef[j] * b).collect();
            let Ok(nu) = w.refine(&local, freqs[j]) else { continue };
            if (nu - freqs[j]).abs() < PI / t && freqs.iter().enumerate().all(|(i, f)| i == j || (f - nu).abs() >= 0.05 * PI / t) {
                freqs[j] = nu;
                basis[j] = tone(nu, dt, n);
                let delta = coef[j];
                for ((r, l), b) in residual.iter_mut().zip(&local).zip(&basis[j]) {
                    *r = l - delta * b;
                }
            }
        }
        let k = freqs.len();
        let g = DMatrix::from_fn(k, k, |i, j| w.gram(freqs[j], freqs[i]));
        let b = DVector::from_iterator(k, freqs.iter().map(|&f| w.project(signal, f)));
        if let Some(sol) = g.lu().solve(&b) {
            residual.copy_from_slice(signal);
            for (c, bj) in sol.iter().zip(&basis) {
                for (r, v) in residual.iter_mut().zip(bj) {
                    *r -= c * v;
                }
            }
            coef = sol.iter().copied().collect();
        }
    }
    let mut components: Vec<Component> = freqs
        .iter()
        .zip(&coef)
        .map(|(&f, c)| Component { amplitude: c.norm(), freq: f, phase: c.arg().rem_euclid(TAU) })
        .collect();
    components.sort_by(|a, b| b.amplitude.total_cmp(&a.amplitude));
    Ok(Decomposition { components, skipped, sampling })
}

/// `e^{iνt}` on the sample grid, re-anchored every 128 samples.
fn tone(nu: f64, dt: f64, n: usize) -> Vec<Complex64> {
    let step = Complex64::from_polar(1.0, nu * dt);
    let mut z = Complex64::new(1.0, 0.0);
    (0..n)
        .map(|i| {
            if i % 128 == 0 {
                z = Complex64::from_polar(1.0, nu * i as f64 * dt);
            }
            let v = z;
            z *= step;
            v
        })
        .collect()
}

/// Distance from `x` to the nearest multiple of `period` (plain `|x|` when `period` is 0).
fn wrapped(x: f64, period: f64) -> f64 {
    if period > 0.0 { (x - period * (x / period).round()).abs() } else { x.abs() }
}

/// Integer vector with `|k|₁ ≤ k_max` minimizing `|target − k·ω|` modulo `period`, with
/// its distance.
fn nearest_combination(target: f64, omega: &[f64], k_max: i32, period: f64) -> (Vec<i32>, f64) {
    let mut best = (vec![0; omega.len()], wrapped(target, period));
    let mut k = vec![0i32; omega.len()];
    #[allow(clippy::too_many_arguments)]
    fn rec(j: usize, budget: i32, k: &mut Vec<i32>, omega: &[f64], target: f64, period: f64, best: &mut (Vec<i32>, f64)) {
        if j == omega.len() {
            let v: f64 = k.iter().zip(omega).map(|(&a, w)| f64::from(a) * w).sum();
            let d = wrapped(target - v, period);
            if d < best.1 {
                *best = (k.clone(), d);
            }
            return;
        }
        for a in -budget..=budget {
            k[j] = a;
            rec(j + 1, budget - a.abs(), k, omega, target, period, best);
        }
        k[j] = 0;
    }
    rec(0, k_max, &mut k, omega, target, period, &mut best);
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// Mode index (0-based) and component index of the selected summand.
    pub mode: usize,
    pub component: usize,
    /// Integer coefficients: previous fundamentals, then the selected summand.
    pub k: Vec<i32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FundamentalSet {
    pub omega: Vec<f64>,
    pub provenance: Vec<Provenance>,
}

/// Fundamental frequencies from the decompositions of the first `n1` modes.
/// With priors `ν`, each new frequency is the integer combination closest to `ν_j`.
pub fn fundamental_frequencies(decomps: &[Decomposition], priors: Option<&[f64]>, n1: usize, cfg: &FaConfig) -> Result<FundamentalSet, FaError> {
    let first = decomps.first().and_then(|d| d.components.first()).ok_or(FaError::Dependent(0))?;
    let mut omega = vec![first.freq];
    let mut provenance = vec![Provenance { mode: 0, component: 0, k: vec![1] }];
    for j in 1..n1 {
        let d = decomps.get(j).ok_or(FaError::Dependent(j))?;
        let found = d
            .components
            .iter()
            .enumerate()
            .find(|(_, c)| nearest_combination(c.freq, &omega, cfg.k_max, d.sampling).1 > cfg.eps_tol)
            .ok_or(FaError::Dependent(j))?;
        let (s, c) = found;
        let (value, k) = match priors {
            Some(nu) => {
                let mut best: Option<(f64, Vec<i32>, f64)> = None;
                for kj in -cfg.k_max..=cfg.k_max {
                    if kj == 0 {
                        continue;
                    }
                    let target = nu[j] - f64::from(kj) * c.freq;
                    let (kk, dist) = nearest_combination(target, &omega, cfg.k_max - kj.abs(), 0.0);
                    if best.as_ref().is_none_or(|b| dist < b.2) {
                        let v = f64::from(kj) * c.freq + kk.iter().zip(&omega).map(|(&a, w)| f64::from(a) * w).sum::<f64>();
                        let mut full = kk;
                        full.push(kj);
                        best = Some((v, full, dist));
                    }
                }
                let b = best.expect("k_max ≥ 1");
                (b.0, b.1)
            }
            None => {
                let mut k = vec![0; omega.len()];
                k.push(1);
                (c.freq, k)
            }
        };
        omega.push(value);
        provenance.push(Provenance { mode: j, component: s, k });
    }
    Ok(FundamentalSet { omega, provenance })
}

/// `|Δω_{f;1}|` between the windows `[0, T]` and `[T, 2T]`.
pub fn frequency_variation(chain: &ChainConfig, state0: &ModeState, icfg: &IntegratorConfig) -> Result<f64, FaError> {
    let twice = IntegratorConfig { duration: 2.0 * icfg.duration, ..*icfg };
    let sig = integrate(chain, &twice, state0)?;
    let half = sig.len() / 2;
    let a = global_peak(&sig.modes[0][..=half], sig.delta)?;
    let b = global_peak(&sig.modes[0][half..], sig.delta)?;
    Ok((a - b).abs())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocateResult {
    pub ic: ModeState,
    pub omega: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Worst relative reconstruction error at the last iteration.
    pub error: f64,
}

/// Keeps the components whose frequency is an integer combination of `omega`, up to
/// aliasing by the sampling frequency.
fn filter(d: &Decomposition, omega: &[f64], cfg: &FaConfig) -> Vec<Component> {
    d.components.iter().filter(|c| nearest_combination(c.freq, omega, cfg.k_max, d.sampling).1 <= cfg.eps_tol).copied().collect()
}

/// Iterates integrate → decompose → filter until the signals match their filtered
/// quasi-periodic approximation within `μ_tol`.
pub fn locate_torus(chain: &ChainConfig, ic0: &ModeState, n1: usize, cfg: &FaConfig, icfg: &IntegratorConfig) -> Result<LocateResult, FaError> {
    let priors = mode_frequencies(chain);
    let mut ic = ic0.clone();
    let mut error = f64::INFINITY;
    let mut omega = Vec::new();
    for iter in 1..=cfg.max_iters {
        let sig = integrate(chain, icfg, &ic)?;
        let decomps: Vec<Decomposition> = sig.modes.iter().map(|m| decompose(m, sig.delta, cfg)).collect::<Result<_, _>>()?;
        let fs = match fundamental_frequencies(&decomps, Some(&priors), n1, cfg) {
            Ok(f) => f,
            Err(_) => return Ok(LocateResult { ic, omega, converged: false, iterations: iter, error }),
        };
        omega = fs.omega;
        let kept: Vec<Vec<Component>> = decomps.iter().map(|d| filter(d, &omega, cfg)).collect();
        let a11 = decomps[0].components.first().map_or(0.0, |c| c.amplitude);
        error = worst_error(&sig, &kept) / a11;
        let next = ModeState {
            y: kept.iter().map(|k| k.iter().map(|c| c.value(0.0).re).sum()).collect(),
            x: kept.iter().map(|k| k.iter().map(|c| c.value(0.0).im).sum()).collect(),
        };
        ic = next;
        if error <= cfg.mu_tol {
            return Ok(LocateResult { ic, omega, converged: true, iterations: iter, error });
        }
    }
    Ok(LocateResult { ic, omega, converged: false, iterations: cfg.max_iters, error })
}

fn worst_error(sig: &Signals, kept: &[Vec<Component>]) -> f64 {
    let mut worst: f64 = 0.0;
    for (m, comps) in sig.modes.iter().zip(kept) {
        for (i, z) in m.iter().enumerate() {
            let t = i as f64 * sig.delta;
            let approx: Complex64 = comps.iter().map(|c| c.value(t)).sum();
            worst = worst.max((z - approx).norm());
        }
    }
    worst
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyPoint {
    pub energy: f64,
    pub specific_energy: f64,
    pub omega: Vec<f64>,
    pub ic: ModeState,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuationConfig {
    /// Amplitude of the first mode in the starting condition.
    pub start_amplitude: f64,
    pub zeta0: f64,
    pub zeta_min: f64,
    /// Stop once the specific energy exceeds this value.
    pub max_specific_energy: f64,
}

impl Default for ContinuationConfig {
    fn default() -> Self {
        ContinuationConfig { start_amplitude: 0.05, zeta0: 0.1, zeta_min: 0.00025, max_specific_energy: f64::INFINITY }
    }
}

/// Continues the family of one-dimensional tori through the first mode.
/// `progress` is called after every accepted point.
pub fn continue_family(
    chain: &ChainConfig,
    cfg: &FaConfig,
    icfg: &IntegratorConfig,
    ccfg: &ContinuationConfig,
    progress: impl FnMut(&FamilyPoint),
) -> Result<Vec<FamilyPoint>, FaError> {
    let n = chain.modes();
    let mut x = vec![0.0; n];
    x[0] = ccfg.start_amplitude;
    continue_family_from(chain, &ModeState { y: vec![0.0; n], x }, cfg, icfg, ccfg, progress)
}

/// Same as [`continue_family`], starting the first localization at `start` instead of
/// the single-mode condition (`start_amplitude` is ignored). Used to resume a family
/// beyond a gap, e.g. from a normal-form torus.
pub fn continue_family_from(
    chain: &ChainConfig,
    start: &ModeState,
    cfg: &FaConfig,
    icfg: &IntegratorConfig,
    ccfg: &ContinuationConfig,
    mut progress: impl FnMut(&FamilyPoint),
) -> Result<Vec<FamilyPoint>, FaError> {
    let integ = Integrator::new(*chain, icfg.scheme);
    let mut family: Vec<FamilyPoint> = Vec::new();
    let first = locate_torus(chain, start, 1, cfg, icfg)?;
    if !first.converged {
        return Ok(family);
    }
    let point = |r: &LocateResult| {
        let e = integ.energy(&r.ic);
        FamilyPoint { energy: e, specific_energy: e / chain.n as f64, omega: r.omega.clone(), ic: r.ic.clone() }
    };
    family.push(point(&first));
    progress(&family[0]);
    let mut zeta = ccfg.zeta0;
    while zeta > ccfg.zeta_min {
        let last = family.last().expect("nonempty");
        if last.specific_energy >= ccfg.max_specific_energy {
            break;
        }
        let scale = 1.0 + zeta;
        let trial = ModeState { y: last.ic.y.iter().map(|v| v * scale).collect(), x: last.ic.x.iter().map(|v| v * scale).collect() };
        let r = match locate_torus(chain, &trial, 1, cfg, icfg) {
            Ok(r) => r,
            Err(FaError::Integrator(_)) => {
                zeta *= 0.5;
                continue;
            }
            Err(e) => return Err(e),
        };
        let p = point(&r);
        if r.converged && p.energy >= last.energy {
            progress(&p);
            family.push(p);
        } else {
            zeta *= 0.5;
        }
    }
    Ok(family)
}

/// Linearized period map of the flow at `ic` over `period`, from the exact tangent map
/// of the uncorrected third-order scheme with the step adjusted to divide the period.
/// Rows and columns are ordered `(X, Y)`.
#[must_use]
pub fn monodromy_matrix(chain: &ChainConfig, ic: &ModeState, period: f64, h: f64) -> DMatrix<f64> {
    let integ = Integrator::new(*chain, Scheme::Sbab3);
    let n = chain.modes();
    let steps = (period / h).ceil().max(1.0) as usize;
    let hh = period / steps as f64;
    let mut s = ic.clone();
    let mut tangents: Vec<ModeState> = (0..2 * n)
        .map(|c| {
            let mut v = vec![0.0; 2 * n];
            v[c] = 1.0;
            ModeState { x: v[..n].to_vec(), y: v[n..].to_vec() }
        })
        .collect();
    for _ in 0..steps {
        integ.step_tangent(&mut s, &mut tangents, hh);
    }
    DMatrix::from_fn(2 * n, 2 * n, |r, c| {
        let t = &tangents[c];
        if r < n { t.x[r] } else { t.y[r - n] }
    })
}

/// Arguments `θ ∈ (−π, π]` of the eigenvalues of a monodromy matrix with their moduli,
/// sorted by argument.
#[must_use]
pub fn eigen_angles(m: &DMatrix<f64>) -> Vec<(f64, f64)> {
    let mut v: Vec<(f64, f64)> = m.complex_eigenvalues().iter().map(|z| (z.im.atan2(z.re), z.norm())).collect();
    v.sort_by(|a, b| a.0.total_cmp(&b.0));
    v
}
