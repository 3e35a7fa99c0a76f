//! Splitting integrators for the chain: `A` (harmonic part) is an exact rotation of
//! each mode, `B` (cubic and quartic potential) is a kick.
//!
//! The state is kept in the mode variables `(Y, X)`; kicks go through the dense sine
//! transform.

use std::fmt::Write as _;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{bonds, mode_frequencies, sine_matrix, ChainConfig, ModeState};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntegratorError {
    #[error("non-finite state at t = {0}")]
    BlowUp(f64),
    #[error("invalid integrator settings: {0}")]
    Config(String),
    #[error("signal file: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scheme {
    Leapfrog,
    Sbab3,
    Sbab3c,
}

impl std::str::FromStr for Scheme {
    type Err = IntegratorError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "leapfrog" => Ok(Scheme::Leapfrog),
            "sbab3" => Ok(Scheme::Sbab3),
            "sbab3c" => Ok(Scheme::Sbab3c),
            other => Err(IntegratorError::Config(format!("unknown scheme {other}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub h: f64,
    pub scheme: Scheme,
    /// Sampling interval `Δ`.
    pub delta: f64,
    /// Total duration.
    pub duration: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig { h: 0.125, scheme: Scheme::Sbab3c, delta: 0.5, duration: 65536.0 }
    }
}

impl IntegratorConfig {
    /// Steps per sample and number of samples after the initial one.
    pub fn sampling(&self) -> Result<(usize, usize), IntegratorError> {
        if !(self.h > 0.0) || !(self.delta > 0.0) || !(self.duration >= 0.0) {
            return Err(IntegratorError::Config("h, delta and duration must be positive".into()));
        }
        let per = (self.delta / self.h).round();
        if per < 1.0 || (per * self.h - self.delta).abs() > 1e-12 * self.delta {
            return Err(IntegratorError::Config("delta must be an integer multiple of h".into()));
        }
        let samples = (self.duration / self.delta).round();
        if (samples * self.delta - self.duration).abs() > 1e-9 * self.delta.max(self.duration) {
            return Err(IntegratorError::Config("duration must be a multiple of delta".into()));
        }
        Ok((per as usize, samples as usize))
    }
}

/// Stage list of a scheme: `(is_kick, coefficient)`.
fn stages(scheme: Scheme) -> Vec<(bool, f64)> {
    match scheme {
        Scheme::Leapfrog => vec![(true, 0.5), (false, 1.0), (true, 0.5)],
        Scheme::Sbab3 | Scheme::Sbab3c => {
            let s5 = 5f64.sqrt();
            let (c2, c3) = (0.5 - s5 / 10.0, s5 / 5.0);
            let (d1, d2) = (1.0 / 12.0, 5.0 / 12.0);
            vec![(true, d1), (false, c2), (true, d2), (false, c3), (true, d2), (false, c2), (true, d1)]
        }
    }
}

/// Corrector constant of the third-order Lobatto scheme.
fn corrector_g() -> f64 {
    (13.0 - 5.0 * 5f64.sqrt()) / 288.0
}

/// `(sin θ, cos θ, k)` where `(1 + k)(sin θ, cos θ)` has unit norm to about `1e-32`.
fn unit_rotation(theta: f64) -> (f64, f64, f64) {
    let (sn, cs) = theta.sin_cos();
    let (p1, p2) = (cs * cs, sn * sn);
    let (e1, e2) = (cs.mul_add(cs, -p1), sn.mul_add(sn, -p2));
    let (big, small) = if p1 >= p2 { (p1, p2) } else { (p2, p1) };
    // both differences are exact (Sterbenz)
    let defect = (1.0 - big) - small - (e1 + e2);
    (sn, cs, 0.5 * defect)
}

/// Precomputed transforms and scheme data for one chain.
#[derive(Debug, Clone)]
pub struct Integrator {
    pub chain: ChainConfig,
    pub scheme: Scheme,
    nu: Vec<f64>,
    /// `P[j][l] = √(2/N) sin((j+1)(l+1)π/N) / √ν_j`, so `x = Pᵀ X` and `ΔY = P Δy`.
    p: Vec<Vec<f64>>,
    stages: Vec<(bool, f64)>,
}

impl Integrator {
    #[must_use]
    pub fn new(chain: ChainConfig, scheme: Scheme) -> Self {
        let nu = mode_frequencies(&chain);
        let s = sine_matrix(chain.n);
        let p = s.iter().zip(&nu).map(|(row, n)| row.iter().map(|v| v / n.sqrt()).collect()).collect();
        Integrator { chain, scheme, nu, p, stages: stages(scheme) }
    }

    #[must_use]
    pub fn frequencies(&self) -> &[f64] {
        &self.nu
    }

    fn positions(&self, x_modes: &[f64]) -> Vec<f64> {
        let n = x_modes.len();
        (0..n).map(|l| (0..n).map(|j| self.p[j][l] * x_modes[j]).sum()).collect()
    }

    fn push_momenta(&self, y_modes: &mut [f64], dy: &[f64]) {
        for (j, yj) in y_modes.iter_mut().enumerate() {
            *yj += self.p[j].iter().zip(dy).map(|(a, b)| a * b).sum::<f64>();
        }
    }

    /// `V'(d)` and `V''(d)` of the anharmonic bond potential.
    fn dv(&self, d: f64) -> (f64, f64) {
        let (a, b) = (self.chain.alpha, self.chain.beta);
        (a * d * d + b * d * d * d, 2.0 * a * d + 3.0 * b * d * d)
    }

    /// `∂B/∂x_l` for the interior particles.
    #[must_use]
    pub fn kick_gradient(&self, x: &[f64]) -> Vec<f64> {
        let f: Vec<f64> = bonds(x).iter().map(|&d| self.dv(d).0).collect();
        (0..x.len()).map(|l| f[l] - f[l + 1]).collect()
    }

    /// Exact harmonic flow for time `t`.
    pub fn rotate(&self, s: &mut ModeState, t: f64) {
        for j in 0..s.x.len() {
            let (sn, cs, k) = unit_rotation(self.nu[j] * t);
            let (y, x) = (s.y[j], s.x[j]);
            let (cx, cy) = (k * (x * cs + y * sn), k * (y * cs - x * sn));
            s.x[j] = x.mul_add(cs, y.mul_add(sn, cx));
            s.y[j] = y.mul_add(cs, (-x).mul_add(sn, cy));
        }
    }

    /// Kick by `B` for time `t`.
    pub fn kick(&self, s: &mut ModeState, t: f64) {
        let x = self.positions(&s.x);
        let g = self.kick_gradient(&x);
        let dy: Vec<f64> = g.iter().map(|v| -t * v).collect();
        self.push_momenta(&mut s.y, &dy);
    }

    /// Kick by `K = Σ_l (∂B/∂x_l)²` for time `t`.
    fn corrector_kick(&self, s: &mut ModeState, t: f64) {
        let x = self.positions(&s.x);
        let d = bonds(&x);
        let g = self.kick_gradient(&x);
        let n = x.len();
        let gg = |l: usize| -> f64 { if l == 0 || l > n { 0.0 } else { g[l - 1] } };
        // ∂K/∂d_b = 2 V''(d_b) (G_{b+1} − G_b), with G indexed by particle 1..N−1
        let dk: Vec<f64> = d.iter().enumerate().map(|(b, &db)| 2.0 * self.dv(db).1 * (gg(b + 1) - gg(b))).collect();
        let dy: Vec<f64> = (0..n).map(|l| -t * (dk[l] - dk[l + 1])).collect();
        self.push_momenta(&mut s.y, &dy);
    }

    /// One step of size `h` (negative `h` runs backwards).
    pub fn step(&self, s: &mut ModeState, h: f64) {
        let corr = self.scheme == Scheme::Sbab3c && (self.chain.alpha != 0.0 || self.chain.beta != 0.0);
        let c = -corrector_g() * h * h * h / 2.0;
        if corr {
            self.corrector_kick(s, c);
        }
        for &(is_kick, w) in &self.stages {
            if is_kick {
                self.kick(s, w * h);
            } else {
                self.rotate(s, w * h);
            }
        }
        if corr {
            self.corrector_kick(s, c);
        }
    }

    /// One step of the tangent map alongside the state (correctors are not linearized,
    /// so only the uncorrected schemes are exact here).
    pub fn step_tangent(&self, s: &mut ModeState, tangents: &mut [ModeState], h: f64) {
        for &(is_kick, w) in &self.stages {
            if is_kick {
                let x = self.positions(&s.x);
                let d = bonds(&x);
                let k2: Vec<f64> = d.iter().map(|&db| self.dv(db).1).collect();
                for v in tangents.iter_mut() {
                    let dx = self.positions(&v.x);
                    let dd = bonds(&dx);
                    let df: Vec<f64> = dd.iter().zip(&k2).map(|(a, b)| a * b).collect();
                    let dy: Vec<f64> = (0..dx.len()).map(|l| -w * h * (df[l] - df[l + 1])).collect();
                    self.push_momenta(&mut v.y, &dy);
                }
                self.kick(s, w * h);
            } else {
                self.rotate(s, w * h);
                for v in tangents.iter_mut() {
                    self.rotate(v, w * h);
                }
            }
        }
    }

    /// Total energy in mode variables.
    #[must_use]
    pub fn energy(&self, s: &ModeState) -> f64 {
        let quad: f64 = (0..s.x.len()).map(|j| 0.5 * self.nu[j] * (s.x[j] * s.x[j] + s.y[j] * s.y[j])).sum();
        let (a, b) = (self.chain.alpha, self.chain.beta);
        let pot: f64 = bonds(&self.positions(&s.x)).iter().map(|&d| a / 3.0 * d * d * d + b / 4.0 * d * d * d * d).sum();
        quad + pot
    }
}

/// Sampled complex signals `Y_j(iΔ) + i X_j(iΔ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Signals {
    pub delta: f64,
    pub modes: Vec<Vec<Complex64>>,
}

impl Signals {
    #[must_use]
    pub fn len(&self) -> usize {
        self.modes.first().map_or(0, Vec::len)
    }

    #[must_use]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Samples `[start, start + len)` of every mode.
    #[must_use]
    pub fn window(&self, start: usize, len: usize) -> Signals {
        Signals { delta: self.delta, modes: self.modes.iter().map(|m| m[start..start + len].to_vec()).collect() }
    }
}

/// Integrates from `state0` and samples every `Δ`; `T/Δ + 1` samples per mode.
pub fn integrate(chain: &ChainConfig, icfg: &IntegratorConfig, state0: &ModeState) -> Result<Signals, IntegratorError> {
    let (per, samples) = icfg.sampling()?;
    let integ = Integrator::new(*chain, icfg.scheme);
    let n = chain.modes();
    let mut modes = vec![Vec::with_capacity(samples + 1); n];
    let mut s = state0.clone();
    let record = |s: &ModeState, modes: &mut Vec<Vec<Complex64>>| {
        for j in 0..n {
            modes[j].push(Complex64::new(s.y[j], s.x[j]));
        }
    };
    record(&s, &mut modes);
    for i in 1..=samples {
        for _ in 0..per {
            integ.step(&mut s, icfg.h);
        }
        if s.x.iter().chain(&s.y).any(|v| !v.is_finite()) {
            return Err(IntegratorError::BlowUp(i as f64 * icfg.delta));
        }
        record(&s, &mut modes);
    }
    Ok(Signals { delta: icfg.delta, modes })
}

/// Text dump: `#` header with the run parameters, then `t,Y1,X1,…` rows.
/// Floats use the shortest round-trip form, so reloading is bit-exact.
#[must_use]
pub fn signals_to_csv(chain: &ChainConfig, icfg: &IntegratorConfig, sig: &Signals) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# N={} alpha={:?} beta={:?} h={:?} delta={:?} T={:?}",
        chain.n, chain.alpha, chain.beta, icfg.h, sig.delta, icfg.duration
    );
    out.push('t');
    for j in 1..=sig.modes.len() {
        let _ = write!(out, ",Y{j},X{j}");
    }
    out.push('\n');
    for i in 0..sig.len() {
        let _ = write!(out, "{:?}", i as f64 * sig.delta);
        for m in &sig.modes {
            let _ = write!(out, ",{:?},{:?}", m[i].re, m[i].im);
        }
        out.push('\n');
    }
    out
}

/// Parses [`signals_to_csv`] output.
pub fn signals_from_csv(text: &str) -> Result<Signals, IntegratorError> {
    let err = |m: &str| IntegratorError::Parse(m.to_string());
    let mut delta = None;
    let mut modes: Vec<Vec<Complex64>> = Vec::new();
    for line in text.lines() {
        if let Some(h) = line.strip_prefix('#') {
            for kv in h.split_whitespace() {
                if let Some(v) = kv.strip_prefix("delta=") {
                    delta = Some(v.parse::<f64>().map_err(|_| err("bad delta"))?);
                }
            }
            continue;
        }
        if line.starts_with('t') || line.is_empty() {
            continue;
        }
        let vals: Vec<f64> = line.split(',').map(str::parse).collect::<Result<_, _>>().map_err(|_| err("bad number"))?;
        if vals.len() % 2 != 1 {
            return Err(err("odd column count"));
        }
        let n = vals.len() / 2;
        if modes.is_empty() {
            modes = vec![Vec::new(); n];
        } else if modes.len() != n {
            return Err(err("ragged rows"));
        }
        for j in 0..n {
            modes[j].push(Complex64::new(vals[1 + 2 * j], vals[2 + 2 * j]));
        }
    }
    Ok(Signals { delta: delta.ok_or_else(|| err("missing delta"))?, modes })
}
