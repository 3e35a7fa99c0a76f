//! Sparse real Fourier–Taylor series in the variables (p, q, ξ, η).
//!
//! A term is `c · p^m · ξ^a · η^b · cos(k·q)` (or `sin`). Coefficients are
//! plain `f64`; the algebra is exact in the sense that no coefficient is
//! dropped unless a cap or an explicit [`TrigSeries::prune`] says so.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Total number of exponent/harmonic slots a key can hold (`2·n₁ + 2·n₂`).
pub const MAX_SLOTS: usize = 30;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SeriesError {
    #[error("dimension mismatch: {0:?} vs {1:?}")]
    DimensionMismatch(Dims, Dims),
    #[error("too many variables: 2*n1 + 2*n2 = {0} exceeds {MAX_SLOTS}")]
    TooManySlots(usize),
    #[error("lie series did not terminate after {0} brackets")]
    NonTerminating(usize),
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims {
    pub n1: usize,
    pub n2: usize,
}

impl Dims {
    pub fn new(n1: usize, n2: usize) -> Result<Self, SeriesError> {
        let slots = 2 * n1 + 2 * n2;
        if slots > MAX_SLOTS {
            return Err(SeriesError::TooManySlots(slots));
        }
        Ok(Dims { n1, n2 })
    }

    fn poly_slots(self) -> usize {
        self.n1 + 2 * self.n2
    }
}

/// Truncation caps: total sqrt-action degree `2|m| + |a| + |b|` and trig degree `|k|`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Caps {
    pub max_degree: u32,
    pub max_trig: u32,
}

impl Caps {
    pub const UNBOUNDED: Caps = Caps { max_degree: u32::MAX, max_trig: u32::MAX };

    #[must_use]
    pub fn new(max_degree: u32, max_trig: u32) -> Self {
        Caps { max_degree, max_trig }
    }

    #[must_use]
    pub fn max(self, other: Caps) -> Caps {
        Caps {
            max_degree: self.max_degree.max(other.max_degree),
            max_trig: self.max_trig.max(other.max_trig),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Parity {
    Cos,
    Sin,
}

impl Parity {
    #[must_use]
    pub fn flip(self) -> Parity {
        match self {
            Parity::Cos => Parity::Sin,
            Parity::Sin => Parity::Cos,
        }
    }
}

/// Canonical key of a single term. Slots are laid out as `[m | a(ξ) | b(η) | k]`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TermKey {
    n1: u8,
    n2: u8,
    parity: Parity,
    e: [i8; MAX_SLOTS],
}

impl std::fmt::Debug for TermKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "m{:?} xi{:?} eta{:?} k{:?} {:?}",
            self.m(),
            self.xi(),
            self.eta(),
            self.k(),
            self.parity
        )
    }
}

impl TermKey {
    /// Builds a canonical key. Returns the key and the sign picked up by
    /// canonicalization, or `None` for `sin(0)`.
    pub fn new(
        dims: Dims,
        m: &[u32],
        xi: &[u32],
        eta: &[u32],
        k: &[i32],
        parity: Parity,
    ) -> Option<(TermKey, f64)> {
        assert_eq!(m.len(), dims.n1);
        assert_eq!(k.len(), dims.n1);
        assert_eq!(xi.len(), dims.n2);
        assert_eq!(eta.len(), dims.n2);
        let mut key = TermKey::unit(dims);
        key.parity = parity;
        let (n1, n2) = (dims.n1, dims.n2);
        for j in 0..n1 {
            key.e[j] = m[j] as i8;
            key.e[n1 + 2 * n2 + j] = k[j] as i8;
        }
        for j in 0..n2 {
            key.e[n1 + j] = xi[j] as i8;
            key.e[n1 + n2 + j] = eta[j] as i8;
        }
        key.canonicalize()
    }

    /// The key of the constant term `1`.
    #[must_use]
    pub fn unit(dims: Dims) -> TermKey {
        TermKey { n1: dims.n1 as u8, n2: dims.n2 as u8, parity: Parity::Cos, e: [0; MAX_SLOTS] }
    }

    fn canonicalize(mut self) -> Option<(TermKey, f64)> {
        let ks = self.k_start();
        let ke = ks + self.n1 as usize;
        let first = self.e[ks..ke].iter().copied().find(|&v| v != 0);
        match first {
            None if self.parity == Parity::Sin => None,
            None => Some((self, 1.0)),
            Some(v) if v > 0 => Some((self, 1.0)),
            Some(_) => {
                for v in &mut self.e[ks..ke] {
                    *v = -*v;
                }
                let sign = if self.parity == Parity::Sin { -1.0 } else { 1.0 };
                Some((self, sign))
            }
        }
    }

    #[must_use]
    pub fn dims(&self) -> Dims {
        Dims { n1: self.n1 as usize, n2: self.n2 as usize }
    }
    fn k_start(&self) -> usize {
        self.n1 as usize + 2 * self.n2 as usize
    }
    #[must_use]
    pub fn m(&self) -> &[i8] {
        &self.e[..self.n1 as usize]
    }
    #[must_use]
    pub fn xi(&self) -> &[i8] {
        let s = self.n1 as usize;
        &self.e[s..s + self.n2 as usize]
    }
    #[must_use]
    pub fn eta(&self) -> &[i8] {
        let s = self.n1 as usize + self.n2 as usize;
        &self.e[s..s + self.n2 as usize]
    }
    #[must_use]
    pub fn k(&self) -> &[i8] {
        let s = self.k_start();
        &self.e[s..s + self.n1 as usize]
    }
    #[must_use]
    pub fn parity(&self) -> Parity {
        self.parity
    }

    /// `2|m| + |a| + |b|`.
    #[must_use]
    pub fn degree(&self) -> u32 {
        let m: i32 = self.m().iter().map(|&v| i32::from(v)).sum();
        let t: i32 = self.e[self.n1 as usize..self.k_start()].iter().map(|&v| i32::from(v)).sum();
        (2 * m + t) as u32
    }

    /// `|k| = Σ|k_j|`.
    #[must_use]
    pub fn trig_degree(&self) -> u32 {
        self.k().iter().map(|&v| u32::from(v.unsigned_abs())).sum()
    }

    #[must_use]
    pub fn is_angle_free(&self) -> bool {
        self.k().iter().all(|&v| v == 0)
    }

    /// Same monomial and harmonic with a different parity (no canonical check).
    #[must_use]
    pub fn with_parity(mut self, parity: Parity) -> TermKey {
        self.parity = parity;
        self
    }

    /// Same key with the `(ξ, η)` part replaced.
    #[must_use]
    pub fn with_transverse(mut self, xi: &[i8], eta: &[i8]) -> TermKey {
        let s = self.n1 as usize;
        let n2 = self.n2 as usize;
        self.e[s..s + n2].copy_from_slice(xi);
        self.e[s + n2..s + 2 * n2].copy_from_slice(eta);
        self
    }

    fn slot_mut(&mut self, idx: usize) -> &mut i8 {
        &mut self.e[idx]
    }
}

/// Class index `(ℓ, s)` of a term: `ℓ = 2|m| + |a| + |b|`, `s = ceil(|k|/K)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ClassIndex {
    pub ell: u32,
    pub s: u32,
}

impl ClassIndex {
    #[must_use]
    pub fn of(key: &TermKey, k_width: u32) -> ClassIndex {
        let t = key.trig_degree();
        ClassIndex { ell: key.degree(), s: t.div_ceil(k_width) }
    }
}

/// A point `(p, q, ξ, η)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub xi: Vec<f64>,
    pub eta: Vec<f64>,
}

impl Point {
    #[must_use]
    pub fn zeros(dims: Dims) -> Point {
        Point { p: vec![0.0; dims.n1], q: vec![0.0; dims.n1], xi: vec![0.0; dims.n2], eta: vec![0.0; dims.n2] }
    }

    #[must_use]
    pub fn dims(&self) -> Dims {
        Dims { n1: self.p.len(), n2: self.xi.len() }
    }
}

/// One of the canonical variables, used for partial derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    P(usize),
    Q(usize),
    Xi(usize),
    Eta(usize),
}

#[derive(Clone, PartialEq)]
pub struct TrigSeries {
    dims: Dims,
    caps: Caps,
    terms: FxHashMap<TermKey, f64>,
}

impl std::fmt::Debug for TrigSeries {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mut d = f.debug_map();
        for (k, c) in self.sorted_terms() {
            d.entry(&k, &c);
        }
        d.finish()
    }
}

impl TrigSeries {
    #[must_use]
    pub fn zero(dims: Dims, caps: Caps) -> Self {
        TrigSeries { dims, caps, terms: FxHashMap::default() }
    }

    #[must_use]
    pub fn constant(dims: Dims, caps: Caps, c: f64) -> Self {
        let mut s = Self::zero(dims, caps);
        s.add_term(TermKey::unit(dims), c);
        s
    }

    /// Single term `c · p^m ξ^a η^b trig(k·q)`.
    #[must_use]
    pub fn monomial(
        dims: Dims,
        caps: Caps,
        m: &[u32],
        xi: &[u32],
        eta: &[u32],
        k: &[i32],
        parity: Parity,
        c: f64,
    ) -> Self {
        let mut s = Self::zero(dims, caps);
        if let Some((key, sign)) = TermKey::new(dims, m, xi, eta, k, parity) {
            s.add_term(key, sign * c);
        }
        s
    }

    /// The coordinate function of a polynomial variable (`p_j`, `ξ_j` or `η_j`).
    #[must_use]
    pub fn variable(dims: Dims, caps: Caps, var: Var) -> Self {
        let mut key = TermKey::unit(dims);
        match var {
            Var::P(j) => key.e[j] = 1,
            Var::Xi(j) => key.e[dims.n1 + j] = 1,
            Var::Eta(j) => key.e[dims.n1 + dims.n2 + j] = 1,
            Var::Q(_) => panic!("q is not a polynomial variable"),
        }
        let mut s = Self::zero(dims, caps);
        s.add_term(key, 1.0);
        s
    }

    #[must_use]
    pub fn dims(&self) -> Dims {
        self.dims
    }
    #[must_use]
    pub fn caps(&self) -> Caps {
        self.caps
    }
    pub fn set_caps(&mut self, caps: Caps) {
        self.caps = caps;
        self.terms.retain(|k, _| k.degree() <= caps.max_degree && k.trig_degree() <= caps.max_trig);
    }
    #[must_use]
    pub fn len(&self) -> usize {
        self.terms.len()
    }
    #[must_use]
    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }
    #[must_use]
    pub fn get(&self, key: &TermKey) -> f64 {
        self.terms.get(key).copied().unwrap_or(0.0)
    }
    pub fn iter(&self) -> impl Iterator<Item = (&TermKey, &f64)> {
        self.terms.iter()
    }

    /// Terms in canonical key order.
    #[must_use]
    pub fn sorted_terms(&self) -> Vec<(TermKey, f64)> {
        let mut v: Vec<_> = self.terms.iter().map(|(k, c)| (*k, *c)).collect();
        v.sort_by_key(|a| a.0);
        v
    }

    fn check_dims(&self, other: &TrigSeries) -> Result<(), SeriesError> {
        if self.dims != other.dims {
            return Err(SeriesError::DimensionMismatch(self.dims, other.dims));
        }
        Ok(())
    }

    /// Accumulates `c` on `key`; drops the entry on exact zero and ignores keys over the caps.
    pub fn add_term(&mut self, key: TermKey, c: f64) {
        if c == 0.0 || key.degree() > self.caps.max_degree || key.trig_degree() > self.caps.max_trig {
            return;
        }
        accumulate(&mut self.terms, key, c);
    }

    pub fn remove_term(&mut self, key: &TermKey) -> f64 {
        self.terms.remove(key).unwrap_or(0.0)
    }

    /// `self += c · other`.
    pub fn add_scaled(&mut self, other: &TrigSeries, c: f64) -> Result<(), SeriesError> {
        self.check_dims(other)?;
        self.caps = self.caps.max(other.caps);
        if c == 0.0 {
            return Ok(());
        }
        for (k, v) in &other.terms {
            accumulate(&mut self.terms, *k, c * v);
        }
        Ok(())
    }

    pub fn add(&self, other: &TrigSeries) -> Result<TrigSeries, SeriesError> {
        let mut out = self.clone();
        out.add_scaled(other, 1.0)?;
        Ok(out)
    }

    pub fn sub(&self, other: &TrigSeries) -> Result<TrigSeries, SeriesError> {
        let mut out = self.clone();
        out.add_scaled(other, -1.0)?;
        Ok(out)
    }

    #[must_use]
    pub fn scale(&self, c: f64) -> TrigSeries {
        if c == 0.0 {
            return Self::zero(self.dims, self.caps);
        }
        let mut out = self.clone();
        for v in out.terms.values_mut() {
            *v *= c;
        }
        out
    }

    /// Keeps only the terms for which `pred` holds.
    #[must_use]
    pub fn filter(&self, pred: impl Fn(&TermKey) -> bool) -> TrigSeries {
        let mut out = Self::zero(self.dims, self.caps);
        for (k, v) in &self.terms {
            if pred(k) {
                out.terms.insert(*k, *v);
            }
        }
        out
    }

    /// Splits into (terms satisfying `pred`, the rest).
    #[must_use]
    pub fn partition(&self, pred: impl Fn(&TermKey) -> bool) -> (TrigSeries, TrigSeries) {
        let mut yes = Self::zero(self.dims, self.caps);
        let mut no = Self::zero(self.dims, self.caps);
        for (k, v) in &self.terms {
            if pred(k) {
                yes.terms.insert(*k, *v);
            } else {
                no.terms.insert(*k, *v);
            }
        }
        (yes, no)
    }

    /// Drops terms with `|c| < eps`.
    pub fn prune(&mut self, eps: f64) {
        if eps > 0.0 {
            self.terms.retain(|_, v| v.abs() >= eps);
        }
    }

    #[must_use]
    pub fn l1_norm(&self) -> f64 {
        let mut v: Vec<f64> = self.terms.values().map(|c| c.abs()).collect();
        v.sort_by(f64::total_cmp);
        v.iter().sum()
    }

    #[must_use]
    pub fn max_degree(&self) -> u32 {
        self.terms.keys().map(TermKey::degree).max().unwrap_or(0)
    }

    #[must_use]
    pub fn max_trig_degree(&self) -> u32 {
        self.terms.keys().map(TermKey::trig_degree).max().unwrap_or(0)
    }

    /// Average over all angles `q`: the `k = 0` terms.
    #[must_use]
    pub fn average_over_angles(&self) -> TrigSeries {
        self.filter(TermKey::is_angle_free)
    }

    /// Product with trigonometric products linearized, truncated to `caps`.
    pub fn mul(&self, other: &TrigSeries, caps: Caps) -> Result<TrigSeries, SeriesError> {
        self.check_dims(other)?;
        let mut out = Self::zero(self.dims, caps);
        mul_into(&mut out.terms, self, other, 1.0, caps);
        Ok(out)
    }

    /// Partial derivative with respect to one variable.
    #[must_use]
    pub fn derivative(&self, var: Var) -> TrigSeries {
        let mut out = Self::zero(self.dims, self.caps);
        let (n1, n2) = (self.dims.n1, self.dims.n2);
        let slot = match var {
            Var::P(j) => Some(j),
            Var::Xi(j) => Some(n1 + j),
            Var::Eta(j) => Some(n1 + n2 + j),
            Var::Q(_) => None,
        };
        for (key, c) in &self.terms {
            match (slot, var) {
                (Some(idx), _) => {
                    let e = key.e[idx];
                    if e > 0 {
                        let mut nk = *key;
                        *nk.slot_mut(idx) -= 1;
                        out.terms.insert(nk, c * f64::from(e));
                    }
                }
                (None, Var::Q(j)) => {
                    let kj = f64::from(key.k()[j]);
                    if kj != 0.0 {
                        let nk = key.with_parity(key.parity.flip());
                        let f = if key.parity == Parity::Cos { -kj } else { kj };
                        out.terms.insert(nk, c * f);
                    }
                }
                _ => unreachable!(),
            }
        }
        out
    }

    /// `{f, g} = Σ f_q g_p − f_p g_q + Σ f_η g_ξ − f_ξ g_η`.
    pub fn poisson(&self, g: &TrigSeries, caps: Caps) -> Result<TrigSeries, SeriesError> {
        self.check_dims(g)?;
        let mut out = Self::zero(self.dims, caps);
        let pairs = (0..self.dims.n1)
            .map(|j| (Var::Q(j), Var::P(j)))
            .chain((0..self.dims.n2).map(|j| (Var::Eta(j), Var::Xi(j))));
        for (x, y) in pairs {
            let fx = self.derivative(x);
            let fy = self.derivative(y);
            let gx = g.derivative(x);
            let gy = g.derivative(y);
            if !fx.is_empty() && !gy.is_empty() {
                mul_into(&mut out.terms, &fx, &gy, 1.0, caps);
            }
            if !fy.is_empty() && !gx.is_empty() {
                mul_into(&mut out.terms, &fy, &gx, -1.0, caps);
            }
        }
        Ok(out)
    }

    /// `L_χ f = {f, χ}`.
    pub fn lie_derivative(&self, chi: &TrigSeries, caps: Caps) -> Result<TrigSeries, SeriesError> {
        self.poisson(chi, caps)
    }

    /// `exp(L_χ) f = Σ L_χ^i f / i!`, stopped when a term is empty or negligible
    /// (below `1e-18` of the accumulated norm).
    pub fn lie_series(&self, chi: &TrigSeries, caps: Caps) -> Result<TrigSeries, SeriesError> {
        self.check_dims(chi)?;
        if caps.max_trig == u32::MAX && chi.max_degree() >= 2 {
            return Err(SeriesError::NonTerminating(0));
        }
        let mut sum = self.clone();
        sum.set_caps(caps);
        let mut term = sum.clone();
        const MAX_ITERS: usize = 500;
        for i in 1..=MAX_ITERS {
            term = term.poisson(chi, caps)?.scale(1.0 / i as f64);
            if term.is_empty() {
                return Ok(sum);
            }
            sum.add_scaled(&term, 1.0)?;
            if term.l1_norm() <= 1e-18 * sum.l1_norm() {
                return Ok(sum);
            }
        }
        Err(SeriesError::NonTerminating(MAX_ITERS))
    }

    /// Linear change of the transverse variables, `(η, ξ) = M (η̄, ξ̄)`.
    /// `m` is `2n₂ × 2n₂` with rows and columns ordered `η₁..η_{n₂}, ξ₁..ξ_{n₂}`.
    #[must_use]
    pub fn substitute_transverse(&self, m: &[Vec<f64>], cache: &mut TransverseCache) -> TrigSeries {
        let n2 = self.dims.n2;
        assert_eq!(m.len(), 2 * n2);
        let mut out = TrigSeries::zero(self.dims, self.caps);
        for (key, c) in self.sorted_terms() {
            let mut ex: Vec<i8> = key.xi().to_vec();
            ex.extend_from_slice(key.eta());
            let img = cache.image(m, &ex);
            for (e, c2) in img {
                let nk = key.with_transverse(&e[..n2], &e[n2..]);
                accumulate(&mut out.terms, nk, c * c2);
            }
        }
        out
    }

    /// Partition into `(ℓ, s)` blocks with `s = ceil(|k|/K)`.
    #[must_use]
    pub fn grade(&self, k_width: u32) -> BTreeMap<ClassIndex, TrigSeries> {
        assert!(k_width >= 1);
        let mut out: BTreeMap<ClassIndex, TrigSeries> = BTreeMap::new();
        for (k, c) in &self.terms {
            out.entry(ClassIndex::of(k, k_width))
                .or_insert_with(|| Self::zero(self.dims, self.caps))
                .terms
                .insert(*k, *c);
        }
        out
    }

    /// Numeric value at a point.
    ///
    /// # Panics
    /// On a point whose dimensions do not match.
    #[must_use]
    pub fn evaluate(&self, z: &Point) -> f64 {
        let ev = Evaluator::new(self.dims, z, self.max_degree() as usize);
        let mut v: Vec<f64> = self.terms.iter().map(|(k, c)| c * ev.term(k)).collect();
        v.sort_by(|a, b| a.abs().total_cmp(&b.abs()));
        v.iter().sum()
    }

    /// All first partial derivatives at a point, returned in the layout of [`Point`]
    /// (`p` holds `∂/∂p`, `q` holds `∂/∂q`, and so on).
    ///
    /// # Panics
    /// On a point whose dimensions do not match.
    #[must_use]
    pub fn gradient(&self, z: &Point) -> Point {
        let dims = self.dims;
        let ev = Evaluator::new(dims, z, self.max_degree() as usize);
        let ps = dims.poly_slots();
        let kmax = self.max_trig_component();
        // e^{i k q_j} for k in −kmax..=kmax
        let phases: Vec<Vec<(f64, f64)>> = z
            .q
            .iter()
            .map(|&q| (-kmax..=kmax).map(|k| { let a = f64::from(k) * q; (a.cos(), a.sin()) }).collect())
            .collect();
        let mut gpoly = vec![0.0; ps];
        let mut gq = vec![0.0; dims.n1];
        let mut pre = vec![1.0; ps + 1];
        for (key, &c) in &self.terms {
            let (mut re, mut im) = (1.0, 0.0);
            for (j, &kj) in key.k().iter().enumerate() {
                if kj != 0 {
                    let (a, b) = phases[j][(i32::from(kj) + kmax) as usize];
                    (re, im) = (re * a - im * b, re * b + im * a);
                }
            }
            // trig value and its derivative factor d/dφ
            let (t, dt) = match key.parity {
                Parity::Cos => (re, -im),
                Parity::Sin => (im, re),
            };
            for i in 0..ps {
                let e = key.e[i] as usize;
                pre[i + 1] = pre[i] * if e > 0 { ev.pow[i][e] } else { 1.0 };
            }
            let mono = pre[ps];
            let mut suf = 1.0;
            for i in (0..ps).rev() {
                let e = key.e[i] as usize;
                if e > 0 {
                    gpoly[i] += c * t * e as f64 * ev.pow[i][e - 1] * pre[i] * suf;
                    suf *= ev.pow[i][e];
                }
            }
            for (j, &kj) in key.k().iter().enumerate() {
                if kj != 0 {
                    gq[j] += c * mono * dt * f64::from(kj);
                }
            }
        }
        let (n1, n2) = (dims.n1, dims.n2);
        Point {
            p: gpoly[..n1].to_vec(),
            q: gq,
            xi: gpoly[n1..n1 + n2].to_vec(),
            eta: gpoly[n1 + n2..].to_vec(),
        }
    }

    fn max_trig_component(&self) -> i32 {
        self.terms.keys().flat_map(|k| k.k().iter().map(|&v| i32::from(v).abs())).max().unwrap_or(0)
    }

    /// Deterministic text form; one term per line.
    #[must_use]
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "# trigseries n1={} n2={} max_degree={} max_trig={}",
            self.dims.n1, self.dims.n2, self.caps.max_degree, self.caps.max_trig
        );
        for (k, c) in self.sorted_terms() {
            let join = |v: &[i8]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
            let par = if k.parity == Parity::Cos { "cos" } else { "sin" };
            let _ = writeln!(
                s,
                "{} | {} | {} | {} | {} | {}",
                join(k.m()),
                join(k.xi()),
                join(k.eta()),
                join(k.k()),
                par,
                hexfloat::format(c)
            );
        }
        s
    }

    pub fn from_text(text: &str) -> Result<TrigSeries, SeriesError> {
        let perr = |line: usize, msg: &str| SeriesError::Parse { line, msg: msg.to_string() };
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or_else(|| perr(1, "empty input"))?;
        let mut vals = BTreeMap::new();
        for tok in header.trim_start_matches('#').split_whitespace().skip(1) {
            let (name, v) = tok.split_once('=').ok_or_else(|| perr(1, "bad header"))?;
            vals.insert(name.to_string(), v.parse::<u64>().map_err(|_| perr(1, "bad header value"))?);
        }
        let get = |n: &str| vals.get(n).copied().ok_or_else(|| perr(1, "missing header field"));
        let dims = Dims::new(get("n1")? as usize, get("n2")? as usize)?;
        let caps = Caps::new(get("max_degree")? as u32, get("max_trig")? as u32);
        let mut out = Self::zero(dims, caps);
        for (i, line) in lines {
            let ln = i + 1;
            let fields: Vec<&str> = line.split('|').map(str::trim).collect();
            if fields.len() != 6 {
                return Err(perr(ln, "expected 6 fields"));
            }
            let ints = |f: &str, n: usize| -> Result<Vec<i32>, SeriesError> {
                let v: Vec<i32> = f
                    .split_whitespace()
                    .map(|t| t.parse::<i32>().map_err(|_| perr(ln, "bad integer")))
                    .collect::<Result<_, _>>()?;
                if v.len() != n {
                    return Err(perr(ln, "wrong vector length"));
                }
                Ok(v)
            };
            let to_u = |v: Vec<i32>| -> Result<Vec<u32>, SeriesError> {
                v.into_iter().map(|x| u32::try_from(x).map_err(|_| perr(ln, "negative exponent"))).collect()
            };
            let m = to_u(ints(fields[0], dims.n1)?)?;
            let a = to_u(ints(fields[1], dims.n2)?)?;
            let b = to_u(ints(fields[2], dims.n2)?)?;
            let k = ints(fields[3], dims.n1)?;
            let parity = match fields[4] {
                "cos" => Parity::Cos,
                "sin" => Parity::Sin,
                _ => return Err(perr(ln, "parity must be cos or sin")),
            };
            let c = hexfloat::parse(fields[5]).ok_or_else(|| perr(ln, "bad hex float"))?;
            let (key, sign) = TermKey::new(dims, &m, &a, &b, &k, parity).ok_or_else(|| perr(ln, "sin with k = 0"))?;
            if sign < 0.0 {
                return Err(perr(ln, "non-canonical harmonic"));
            }
            if out.terms.insert(key, c).is_some() {
                return Err(perr(ln, "duplicate term"));
            }
        }
        Ok(out)
    }
}

/// `L_χ = {·, χ}` with the derivatives of `χ` computed once.
pub struct LieOperator {
    dims: Dims,
    /// `(x, y, χ_y, χ_x)` for each canonical pair `(x, y)` with a nonzero derivative.
    pairs: Vec<(Var, Var, TrigSeries, TrigSeries)>,
}

impl LieOperator {
    #[must_use]
    pub fn new(chi: &TrigSeries) -> Self {
        let d = chi.dims;
        let pairs = (0..d.n1)
            .map(|j| (Var::Q(j), Var::P(j)))
            .chain((0..d.n2).map(|j| (Var::Eta(j), Var::Xi(j))))
            .map(|(x, y)| (x, y, chi.derivative(y), chi.derivative(x)))
            .filter(|(_, _, cy, cx)| !cy.is_empty() || !cx.is_empty())
            .collect();
        LieOperator { dims: d, pairs }
    }

    #[must_use]
    pub fn is_zero(&self) -> bool {
        self.pairs.is_empty()
    }

    /// `{f, χ}` truncated to `caps`.
    #[must_use]
    pub fn apply(&self, f: &TrigSeries, caps: Caps) -> TrigSeries {
        assert_eq!(f.dims, self.dims);
        let mut out = TrigSeries::zero(self.dims, caps);
        for (x, y, cy, cx) in &self.pairs {
            if !cy.is_empty() {
                let fx = f.derivative(*x);
                if !fx.is_empty() {
                    mul_into(&mut out.terms, &fx, cy, 1.0, caps);
                }
            }
            if !cx.is_empty() {
                let fy = f.derivative(*y);
                if !fy.is_empty() {
                    mul_into(&mut out.terms, &fy, cx, -1.0, caps);
                }
            }
        }
        out
    }
}

/// Memoized images of transverse monomials under one linear map.
#[derive(Default)]
pub struct TransverseCache {
    images: FxHashMap<Vec<i8>, Vec<(Vec<i8>, f64)>>,
}

impl TransverseCache {
    #[must_use]
    pub fn new() -> Self {
        Self::default()
    }

    /// Exponents are in slot order `ξ₁..ξ_{n₂}, η₁..η_{n₂}`.
    fn image(&mut self, m: &[Vec<f64>], ex: &[i8]) -> Vec<(Vec<i8>, f64)> {
        if let Some(v) = self.images.get(ex) {
            return v.clone();
        }
        let n2 = ex.len() / 2;
        let out = match ex.iter().position(|&e| e > 0) {
            None => vec![(ex.to_vec(), 1.0)],
            Some(slot) => {
                let mut rest = ex.to_vec();
                rest[slot] -= 1;
                let base = self.image(m, &rest);
                // row of M for this variable, mapped to slot order
                let row = if slot < n2 { &m[n2 + slot] } else { &m[slot - n2] };
                let mut acc: FxHashMap<Vec<i8>, f64> = FxHashMap::default();
                for (e, c) in &base {
                    for j in 0..n2 {
                        for (target, coeff) in [(j, row[n2 + j]), (n2 + j, row[j])] {
                            if coeff == 0.0 {
                                continue;
                            }
                            let mut ne = e.clone();
                            ne[target] += 1;
                            *acc.entry(ne).or_insert(0.0) += c * coeff;
                        }
                    }
                }
                let mut v: Vec<(Vec<i8>, f64)> = acc.into_iter().filter(|(_, c)| *c != 0.0).collect();
                v.sort_by(|a, b| a.0.cmp(&b.0));
                v
            }
        };
        self.images.insert(ex.to_vec(), out.clone());
        out
    }
}

fn accumulate(map: &mut FxHashMap<TermKey, f64>, key: TermKey, c: f64) {
    use std::collections::hash_map::Entry;
    match map.entry(key) {
        Entry::Occupied(mut e) => {
            let v = *e.get() + c;
            if v == 0.0 {
                e.remove();
            } else {
                *e.get_mut() = v;
            }
        }
        Entry::Vacant(e) => {
            if c != 0.0 {
                e.insert(c);
            }
        }
    }
}

struct Flat {
    key: TermKey,
    c: f64,
    deg: u32,
}

fn flatten(s: &TrigSeries) -> Vec<Flat> {
    let mut v: Vec<Flat> = s.terms.iter().map(|(k, c)| Flat { key: *k, c: *c, deg: k.degree() }).collect();
    v.sort_by_key(|a| a.key);
    v
}

/// `out += scale · a · b`, truncated to `caps`.
pub(crate) fn mul_into(out: &mut FxHashMap<TermKey, f64>, a: &TrigSeries, b: &TrigSeries, scale: f64, caps: Caps) {
    let fa = flatten(a);
    let fb = flatten(b);
    let dims = a.dims;
    let ps = dims.poly_slots();
    let n1 = dims.n1;
    for ta in &fa {
        for tb in &fb {
            if ta.deg + tb.deg > caps.max_degree {
                continue;
            }
            let c = 0.5 * scale * ta.c * tb.c;
            let mut base = ta.key;
            for i in 0..ps {
                base.e[i] += tb.key.e[i];
            }
            let mut plus = base;
            let mut minus = base;
            for j in 0..n1 {
                plus.e[ps + j] = ta.key.e[ps + j] + tb.key.e[ps + j];
                minus.e[ps + j] = ta.key.e[ps + j] - tb.key.e[ps + j];
            }
            // (parity of a, parity of b) → (parity, sign) for the sum and difference harmonics.
            let (pp, sp, pm, sm) = match (ta.key.parity, tb.key.parity) {
                (Parity::Cos, Parity::Cos) => (Parity::Cos, 1.0, Parity::Cos, 1.0),
                (Parity::Sin, Parity::Sin) => (Parity::Cos, -1.0, Parity::Cos, 1.0),
                (Parity::Sin, Parity::Cos) => (Parity::Sin, 1.0, Parity::Sin, 1.0),
                (Parity::Cos, Parity::Sin) => (Parity::Sin, 1.0, Parity::Sin, -1.0),
            };
            plus.parity = pp;
            minus.parity = pm;
            for (key, sgn) in [(plus, sp), (minus, sm)] {
                if let Some((key, s2)) = key.canonicalize() {
                    if key.trig_degree() <= caps.max_trig {
                        accumulate(out, key, c * sgn * s2);
                    }
                }
            }
        }
    }
}

/// Cached powers and trig values for evaluating many terms at one point.
pub(crate) struct Evaluator<'a> {
    z: &'a Point,
    pow: Vec<Vec<f64>>,
}

impl<'a> Evaluator<'a> {
    pub(crate) fn new(dims: Dims, z: &'a Point, max_deg: usize) -> Self {
        assert_eq!(z.dims(), dims, "point dimensions do not match the series");
        assert_eq!(z.q.len(), dims.n1);
        assert_eq!(z.eta.len(), dims.n2);
        let vars = z.p.iter().chain(&z.xi).chain(&z.eta);
        let pow = vars
            .map(|&x| {
                let mut v = Vec::with_capacity(max_deg + 1);
                let mut acc = 1.0;
                for _ in 0..=max_deg {
                    v.push(acc);
                    acc *= x;
                }
                v
            })
            .collect();
        Evaluator { z, pow }
    }

    pub(crate) fn term(&self, k: &TermKey) -> f64 {
        let ps = k.k_start();
        let mut v = 1.0;
        for i in 0..ps {
            let e = k.e[i] as usize;
            if e > 0 {
                v *= self.pow[i][e];
            }
        }
        let phase: f64 = k.k().iter().zip(&self.z.q).map(|(&kj, &qj)| f64::from(kj) * qj).sum();
        match k.parity {
            Parity::Cos => v * phase.cos(),
            Parity::Sin => v * phase.sin(),
        }
    }
}

/// `(ℓ, s) → (l1 norm, term count)` as JSON, for plotting.
#[must_use]
pub fn block_norms_json(blocks: &BTreeMap<ClassIndex, TrigSeries>) -> serde_json::Value {
    let rows: Vec<serde_json::Value> = blocks
        .iter()
        .map(|(c, s)| serde_json::json!({"ell": c.ell, "s": c.s, "l1": s.l1_norm(), "terms": s.len()}))
        .collect();
    serde_json::Value::Array(rows)
}

/// C99-style hexadecimal floats (`0x1.8p+1`), exact in both directions.
pub mod hexfloat {
    #[must_use]
    pub fn format(x: f64) -> String {
        if x.is_nan() {
            return "nan".into();
        }
        if x.is_infinite() {
            return if x > 0.0 { "inf".into() } else { "-inf".into() };
        }
        let bits = x.to_bits();
        let sign = if bits >> 63 == 1 { "-" } else { "" };
        let exp = ((bits >> 52) & 0x7ff) as i64;
        let man = bits & ((1u64 << 52) - 1);
        if exp == 0 && man == 0 {
            return format!("{sign}0x0p+0");
        }
        let (lead, e) = if exp == 0 { (0, -1022) } else { (1, exp - 1023) };
        let mut digits = format!("{man:013x}");
        while digits.ends_with('0') {
            digits.pop();
        }
        let es = if e >= 0 { format!("+{e}") } else { e.to_string() };
        if digits.is_empty() {
            format!("{sign}0x{lead}p{es}")
        } else {
            format!("{sign}0x{lead}.{digits}p{es}")
        }
    }

    #[must_use]
    pub fn parse(s: &str) -> Option<f64> {
        let s = s.trim();
        match s {
            "nan" => return Some(f64::NAN),
            "inf" => return Some(f64::INFINITY),
            "-inf" => return Some(f64::NEG_INFINITY),
            _ => {}
        }
        let (neg, rest) = match s.strip_prefix('-') {
            Some(r) => (true, r),
            None => (false, s),
        };
        let rest = rest.strip_prefix("0x")?;
        let (mant, exp) = rest.split_once('p')?;
        let exp: i64 = exp.parse().ok()?;
        let (lead, frac) = match mant.split_once('.') {
            Some((l, f)) => (l, f),
            None => (mant, ""),
        };
        let lead = u64::from_str_radix(lead, 16).ok()?;
        if lead > 1 || frac.len() > 13 {
            return None;
        }
        let mut man = 0u64;
        if !frac.is_empty() {
            man = u64::from_str_radix(frac, 16).ok()? << (4 * (13 - frac.len()));
        }
        let bits = if lead == 0 {
            if man != 0 && exp != -1022 {
                return None;
            }
            man
        } else {
            let be = exp + 1023;
            if !(1..=2046).contains(&be) {
                return None;
            }
            ((be as u64) << 52) | man
        };
        let v = f64::from_bits(bits);
        Some(if neg { -v } else { v })
    }
}
