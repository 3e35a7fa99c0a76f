//! Iterative construction of the elliptic-torus normal form.
//!
//! Step `r` removes, in this order, the angle-dependent part of block `(0, r)` (χ₀),
//! block `(1, r)` (χ₁), the `p`-linear angle-dependent part of `(2, r)` (X₂) and its
//! `ξη`-quadratic angle-dependent part (Y₂). The angle-free `p`-linear rest updates `ω`
//! and the angle-free quadratic rest is diagonalized by a linear symplectic map.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::{Complex, DMatrix};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::homological::{self, HomologicalError};
use crate::model::GradedHamiltonian;
use crate::series::{Caps, ClassIndex, LieOperator, SeriesError, TermKey, TransverseCache, TrigSeries};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NormalizerError {
    #[error(transparent)]
    Homological(#[from] HomologicalError),
    #[error("ellipticity lost: eigenvalue {re:e} + {im:e} i")]
    EllipticityLost { re: f64, im: f64 },
    #[error("degenerate transverse frequencies {0} and {1}")]
    DegenerateFrequencies(f64, f64),
    #[error(transparent)]
    Series(#[from] SeriesError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizerConfig {
    /// Block width `K`.
    pub k_width: u32,
    /// Number of steps `r̄`.
    pub steps: u32,
    /// Sqrt-action degree cap.
    pub max_degree: u32,
    pub divisor_floor: f64,
    pub rule_a_base: f64,
    pub rule_b_ratio: f64,
    /// Terms below `prune_rel · ‖block‖` are dropped after each stage.
    pub prune_rel: f64,
}

impl NormalizerConfig {
    /// Defaults for a chain with `n` particles: degree 8 and 12 steps for `N ≤ 4`,
    /// degree 4 and 8 steps above.
    #[must_use]
    pub fn for_chain(n: usize) -> Self {
        let (max_degree, steps) = if n <= 4 { (8, 12) } else { (4, 8) };
        NormalizerConfig {
            k_width: 2,
            steps,
            max_degree,
            divisor_floor: 1e-8,
            rule_a_base: 0.95,
            rule_b_ratio: 1e-3,
            prune_rel: 1e-16,
        }
    }

    #[must_use]
    pub fn caps(&self) -> Caps {
        Caps::new(self.max_degree, self.steps * self.k_width)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GenKind {
    Chi0,
    Chi1,
    X2,
    Y2,
}

impl GenKind {
    /// Sqrt-action degree of the generating function.
    #[must_use]
    pub fn degree(self) -> u32 {
        match self {
            GenKind::Chi0 => 0,
            GenKind::Chi1 => 1,
            GenKind::X2 | GenKind::Y2 => 2,
        }
    }
    fn name(self) -> &'static str {
        match self {
            GenKind::Chi0 => "chi0",
            GenKind::Chi1 => "chi1",
            GenKind::X2 => "X2",
            GenKind::Y2 => "Y2",
        }
    }
}

/// One canonical transformation of the composed map.
#[derive(Debug, Clone)]
pub enum StackEntry {
    /// `exp(L_χ)`; `target` is the removed part and `(omega, big_omega)` the normal part
    /// the homological equation was solved against.
    Lie { step: u32, kind: GenKind, chi: TrigSeries, target: TrigSeries, kernel: TrigSeries, omega: Vec<f64>, big_omega: Vec<f64> },
    /// `(η, ξ) = M (η̄, ξ̄)`.
    Linear { step: u32, m: Vec<Vec<f64>> },
}

/// Transformations in the order they were applied to the Hamiltonian.
#[derive(Debug, Clone, Default)]
pub struct TransformStack {
    pub entries: Vec<StackEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub r: u32,
    /// `‖χ₀‖, ‖χ₁‖, ‖X₂‖, ‖Y₂‖, ‖𝔇 − Id‖`.
    pub norms: [f64; 5],
    pub omega: Vec<f64>,
    pub big_omega: Vec<f64>,
    pub energy: f64,
    pub min_divisor: f64,
}

#[derive(Debug, Clone)]
pub struct NormalizerRun {
    pub h: GradedHamiltonian,
    pub reports: Vec<StepReport>,
    pub stack: TransformStack,
    pub converged: bool,
    pub failure: Option<String>,
}

/// Applies `exp(L_χ)` with block routing `(ℓ, s) → (ℓ + deg χ − 2, s + r)`.
/// `removed` is the part of block `(deg χ, r)` that satisfies `L_χ h = −removed`.
fn apply_generator(h: &mut GradedHamiltonian, chi: &TrigSeries, dchi: u32, r: u32, removed: &TrigSeries, s_max: u32, prune_rel: f64) {
    let target = ClassIndex { ell: dchi, s: r };
    let old = std::mem::take(&mut h.blocks);
    let mut new = old.clone();
    if let Some(b) = new.get_mut(&target) {
        b.add_scaled(removed, -1.0).expect("same dims");
        if b.is_empty() {
            new.remove(&target);
        }
    }
    let caps = h.caps;
    if chi.is_empty() {
        h.blocks = new;
        return;
    }
    let op = LieOperator::new(chi);
    let mut add = |idx: ClassIndex, f: &TrigSeries| {
        if f.is_empty() {
            return;
        }
        let e = new.entry(idx).or_insert_with(|| TrigSeries::zero(h.dims, caps));
        e.add_scaled(f, 1.0).expect("same dims");
    };
    let route = |idx: ClassIndex| -> Option<ClassIndex> {
        let s = idx.s + r;
        let ell = (idx.ell + dchi).checked_sub(2)?;
        (s <= s_max).then_some(ClassIndex { ell, s })
    };
    // higher orders of the normal part: L^{i−1}(−removed)/i!
    let mut term = removed.scale(-1.0);
    let mut idx = target;
    let mut i = 1.0;
    while let Some(next) = route(idx) {
        i += 1.0;
        term = op.apply(&term, caps).scale(1.0 / i);
        if term.is_empty() {
            break;
        }
        add(next, &term);
        idx = next;
    }
    for (src, f) in &old {
        let mut term = f.clone();
        let mut idx = *src;
        let mut i = 0.0;
        while let Some(next) = route(idx) {
            i += 1.0;
            term = op.apply(&term, caps).scale(1.0 / i);
            if term.is_empty() {
                break;
            }
            add(next, &term);
            idx = next;
        }
    }
    for b in new.values_mut() {
        let n = b.l1_norm();
        b.prune(prune_rel * n);
    }
    new.retain(|_, b| !b.is_empty());
    h.blocks = new;
}

/// Symplectic `M` with `Mᵀ S M = diag(Ω, Ω)` for `S` the Hessian of
/// `Σ Ω_prev (ξ²+η²)/2 + quad`.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagonalization {
    pub m: Vec<Vec<f64>>,
    pub big_omega: Vec<f64>,
}

/// Hessian of a quadratic form in `(η, ξ)` order.
fn hessian(quad: &TrigSeries, base: &[f64]) -> DMatrix<f64> {
    let n = base.len();
    let mut s = DMatrix::<f64>::zeros(2 * n, 2 * n);
    for (j, w) in base.iter().enumerate() {
        s[(j, j)] += w;
        s[(n + j, n + j)] += w;
    }
    for (key, c) in quad.sorted_terms() {
        let mut vars = Vec::new();
        for j in 0..n {
            for _ in 0..key.eta()[j] {
                vars.push(j);
            }
            for _ in 0..key.xi()[j] {
                vars.push(n + j);
            }
        }
        assert_eq!(vars.len(), 2, "quadratic form expected");
        let (u, v) = (vars[0], vars[1]);
        if u == v {
            s[(u, u)] += 2.0 * c;
        } else {
            s[(u, v)] += c;
            s[(v, u)] += c;
        }
    }
    s
}

#[must_use]
pub fn symplectic_j(n: usize) -> DMatrix<f64> {
    let mut j = DMatrix::<f64>::zeros(2 * n, 2 * n);
    for i in 0..n {
        j[(i, n + i)] = 1.0;
        j[(n + i, i)] = -1.0;
    }
    j
}

/// Diagonalizes `Σ Ω_prev (ξ²+η²)/2 + quad` by a linear symplectic map.
pub fn diagonalize(quad: &TrigSeries, omega_prev: &[f64], floor: f64) -> Result<Diagonalization, NormalizerError> {
    let n = omega_prev.len();
    let identity = || (0..2 * n).map(|i| (0..2 * n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    if n == 0 {
        return Ok(Diagonalization { m: vec![], big_omega: vec![] });
    }
    if quad.is_empty() {
        return Ok(Diagonalization { m: identity(), big_omega: omega_prev.to_vec() });
    }
    let s = hessian(quad, omega_prev);
    let j = symplectic_j(n);
    let a = &j * &s;
    let scale = a.abs().max().max(1e-300);
    let eig = a.complex_eigenvalues();
    let mut mus = Vec::new();
    for ev in eig.iter() {
        if ev.re.abs() > 1e-9 * scale || ev.im.abs() <= floor {
            return Err(NormalizerError::EllipticityLost { re: ev.re, im: ev.im });
        }
        if ev.im > 0.0 {
            mus.push(ev.im);
        }
    }
    if mus.len() != n {
        return Err(NormalizerError::EllipticityLost { re: 0.0, im: 0.0 });
    }
    mus.sort_by(f64::total_cmp);
    for w in mus.windows(2) {
        if (w[1] - w[0]).abs() <= floor {
            return Err(NormalizerError::DegenerateFrequencies(w[0], w[1]));
        }
    }
    let ac: DMatrix<Complex<f64>> = a.map(|v| Complex::new(v, 0.0));
    let mut m = DMatrix::<f64>::zeros(2 * n, 2 * n);
    let mut big_omega = vec![f64::NAN; n];
    for &mu in &mus {
        let mut b = ac.clone();
        for i in 0..2 * n {
            b[(i, i)] -= Complex::new(0.0, mu);
        }
        let svd = b.svd(false, true);
        let vt = svd.v_t.expect("requested");
        let imin = (0..2 * n).min_by(|&x, &y| svd.singular_values[x].total_cmp(&svd.singular_values[y])).expect("nonempty");
        let mut v: Vec<Complex<f64>> = (0..2 * n).map(|i| vt[(imin, i)].conj()).collect();
        let slot = (0..n)
            .max_by(|&x, &y| {
                let wx = v[x].norm_sqr() + v[n + x].norm_sqr();
                let wy = v[y].norm_sqr() + v[n + y].norm_sqr();
                wx.total_cmp(&wy)
            })
            .expect("n > 0");
        if !big_omega[slot].is_nan() {
            return Err(NormalizerError::DegenerateFrequencies(big_omega[slot], mu));
        }
        let ph = v[slot] - Complex::new(0.0, 1.0) * v[n + slot];
        let rot = ph.conj() / ph.norm();
        for c in &mut v {
            *c *= rot;
        }
        let e: Vec<f64> = v.iter().map(|c| c.re).collect();
        let mut f: Vec<f64> = v.iter().map(|c| c.im).collect();
        // eᵀ J f
        let mut sf: f64 = (0..n).map(|i| e[i] * f[n + i] - e[n + i] * f[i]).sum();
        let mut om = mu;
        if sf < 0.0 {
            om = -mu;
            for x in &mut f {
                *x = -*x;
            }
            sf = -sf;
        }
        let k = 1.0 / sf.sqrt();
        for i in 0..2 * n {
            m[(i, slot)] = e[i] * k;
            m[(i, n + slot)] = f[i] * k;
        }
        big_omega[slot] = om;
    }
    let check = m.transpose() * &j * &m - &j;
    if check.abs().max() > 1e-10 {
        return Err(NormalizerError::EllipticityLost { re: check.abs().max(), im: 0.0 });
    }
    Ok(Diagonalization { m: (0..2 * n).map(|i| (0..2 * n).map(|c| m[(i, c)]).collect()).collect(), big_omega })
}

fn is_p_linear(k: &TermKey) -> bool {
    k.m().iter().any(|&v| v > 0)
}

/// One normalization step. Returns the report and the stack entries.
pub fn normalization_step(h: &mut GradedHamiltonian, cfg: &NormalizerConfig, r: u32) -> Result<(StepReport, Vec<StackEntry>), NormalizerError> {
    let s_max = cfg.steps;
    let floor = cfg.divisor_floor;
    let mut entries = Vec::new();
    let mut norms = [0.0; 5];
    let mut min_div = f64::INFINITY;

    let mut solve_and_apply = |h: &mut GradedHamiltonian, kind: GenKind, g: TrigSeries| -> Result<f64, NormalizerError> {
        let sol = homological::solve(&g, &h.omega, &h.big_omega, floor)?;
        min_div = min_div.min(sol.min_divisor);
        let removed = g.sub(&sol.kernel)?;
        apply_generator(h, &sol.chi, kind.degree(), r, &removed, s_max, cfg.prune_rel);
        let norm = sol.chi.l1_norm();
        entries.push(StackEntry::Lie {
            step: r,
            kind,
            chi: sol.chi,
            target: g,
            kernel: sol.kernel,
            omega: h.omega.clone(),
            big_omega: h.big_omega.clone(),
        });
        Ok(norm)
    };

    // stage I
    let b0 = h.block_or_empty(0, r);
    let (avg0, g0) = b0.partition(TermKey::is_angle_free);
    h.energy += avg0.get(&TermKey::unit(h.dims));
    if !avg0.is_empty() {
        h.add_to_block(ClassIndex { ell: 0, s: r }, &avg0.scale(-1.0));
    }
    norms[0] = solve_and_apply(h, GenKind::Chi0, g0)?;

    // stage II
    let g1 = h.block_or_empty(1, r);
    norms[1] = solve_and_apply(h, GenKind::Chi1, g1)?;

    // stage III
    let b2 = h.block_or_empty(2, r);
    let gx = b2.filter(|k| is_p_linear(k) && !k.is_angle_free());
    norms[2] = solve_and_apply(h, GenKind::X2, gx)?;
    let b2 = h.block_or_empty(2, r);
    let gy = b2.filter(|k| !is_p_linear(k) && !k.is_angle_free());
    norms[3] = solve_and_apply(h, GenKind::Y2, gy)?;

    let b2 = h.block_or_empty(2, r);
    let (avg_p, rest) = b2.partition(|k| is_p_linear(k) && k.is_angle_free());
    for (key, c) in avg_p.sorted_terms() {
        let j = key.m().iter().position(|&v| v == 1).expect("p-linear");
        h.omega[j] += c;
    }
    let quad = rest.filter(TermKey::is_angle_free);
    debug_assert_eq!(quad.len(), rest.len());
    h.blocks.remove(&ClassIndex { ell: 2, s: r });
    if !quad.is_empty() {
        let d = diagonalize(&quad, &h.big_omega, floor)?;
        let mut dev = 0.0;
        for (i, row) in d.m.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                dev += (v - if i == j { 1.0 } else { 0.0 }).abs();
            }
        }
        norms[4] = dev;
        let mut cache = TransverseCache::new();
        for b in h.blocks.values_mut() {
            let t = b.substitute_transverse(&d.m, &mut cache);
            let n = t.l1_norm();
            *b = t;
            b.prune(cfg.prune_rel * n);
        }
        h.blocks.retain(|_, b| !b.is_empty());
        h.big_omega = d.big_omega;
        entries.push(StackEntry::Linear { step: r, m: d.m });
    }
    let report = StepReport {
        r,
        norms,
        omega: h.omega.clone(),
        big_omega: h.big_omega.clone(),
        energy: h.energy,
        min_divisor: min_div,
    };
    Ok((report, entries))
}

/// Rules (A) and (B) on the sequence `‖X₂⁽ʳ⁾‖`, `r = 1..`.
#[must_use]
pub fn convergence_rules(x2: &[f64], steps: u32, base: f64, ratio: f64) -> bool {
    if x2.len() < steps as usize || x2.is_empty() {
        return false;
    }
    let first = x2[0];
    let denom = first + x2.get(1).copied().unwrap_or(0.0);
    for r in 3..=steps as usize {
        let v = x2[r - 1];
        if v == 0.0 {
            continue;
        }
        if !(v / denom < base.powi(r as i32 - 1)) {
            return false;
        }
    }
    let last = x2[steps as usize - 1];
    last == 0.0 || last / first < ratio
}

/// Runs `cfg.steps` steps; numeric failures end the run with `converged = false`.
#[must_use]
pub fn run(h0: &GradedHamiltonian, cfg: &NormalizerConfig) -> NormalizerRun {
    let mut h = h0.clone();
    h.caps = cfg.caps();
    for b in h.blocks.values_mut() {
        b.set_caps(h.caps);
    }
    let mut reports = Vec::new();
    let mut stack = TransformStack::default();
    let mut failure = None;
    for r in 1..=cfg.steps {
        match normalization_step(&mut h, cfg, r) {
            Ok((rep, entries)) => {
                reports.push(rep);
                stack.entries.extend(entries);
            }
            Err(e) => {
                failure = Some(format!("step {r}: {e}"));
                break;
            }
        }
    }
    let x2: Vec<f64> = reports.iter().map(|r| r.norms[2]).collect();
    let converged = failure.is_none() && convergence_rules(&x2, cfg.steps, cfg.rule_a_base, cfg.rule_b_ratio);
    if failure.is_none() && !converged {
        failure = Some("convergence rules (A)-(B) not satisfied".into());
    }
    NormalizerRun { h, reports, stack, converged, failure }
}

/// CSV table of the step reports.
#[must_use]
pub fn reports_csv(reports: &[StepReport]) -> String {
    let mut s = String::new();
    let (n1, n2) = reports.first().map_or((0, 0), |r| (r.omega.len(), r.big_omega.len()));
    s.push_str("r,norm_chi0,norm_chi1,norm_X2,norm_Y2,norm_D_minus_id");
    for j in 0..n1 {
        let _ = write!(s, ",omega_{}", j + 1);
    }
    for j in 0..n2 {
        let _ = write!(s, ",Omega_{}", j + 1);
    }
    s.push_str(",energy,min_divisor\n");
    for rep in reports {
        let _ = write!(s, "{}", rep.r);
        for v in rep.norms.iter().chain(&rep.omega).chain(&rep.big_omega) {
            let _ = write!(s, ",{v:.17e}");
        }
        let _ = writeln!(s, ",{:.17e},{:.17e}", rep.energy, rep.min_divisor);
    }
    s
}

/// Text dump of a stack: generating functions in the series format, matrices as rows.
#[must_use]
pub fn stack_to_text(stack: &TransformStack) -> String {
    let mut s = String::new();
    for e in &stack.entries {
        match e {
            StackEntry::Lie { step, kind, chi, .. } => {
                let _ = writeln!(s, "## lie step={step} kind={}", kind.name());
                s.push_str(&chi.to_text());
            }
            StackEntry::Linear { step, m } => {
                let _ = writeln!(s, "## linear step={step} size={}", m.len());
                for row in m {
                    let r: Vec<String> = row.iter().map(|v| crate::series::hexfloat::format(*v)).collect();
                    let _ = writeln!(s, "{}", r.join(" "));
                }
            }
        }
    }
    s
}

/// Parses [`stack_to_text`] output (generating functions and matrices only).
pub fn stack_from_text(text: &str) -> Result<TransformStack, SeriesError> {
    let perr = |line: usize, msg: &str| SeriesError::Parse { line, msg: msg.to_string() };
    let mut entries = Vec::new();
    let lines: Vec<&str> = text.lines().collect();
    let mut i = 0;
    while i < lines.len() {
        let l = lines[i];
        if l.trim().is_empty() {
            i += 1;
            continue;
        }
        let head = l.strip_prefix("## ").ok_or_else(|| perr(i + 1, "expected section header"))?;
        let fields: BTreeMap<&str, &str> = head.split_whitespace().skip(1).filter_map(|t| t.split_once('=')).collect();
        let step: u32 = fields.get("step").and_then(|v| v.parse().ok()).ok_or_else(|| perr(i + 1, "missing step"))?;
        let start = i + 1;
        let mut end = start;
        while end < lines.len() && !lines[end].starts_with("## ") {
            end += 1;
        }
        let body = lines[start..end].join("\n");
        if head.starts_with("lie") {
            let kind = match fields.get("kind").copied() {
                Some("chi0") => GenKind::Chi0,
                Some("chi1") => GenKind::Chi1,
                Some("X2") => GenKind::X2,
                Some("Y2") => GenKind::Y2,
                _ => return Err(perr(i + 1, "unknown kind")),
            };
            let chi = TrigSeries::from_text(&body)?;
            let z = TrigSeries::zero(chi.dims(), chi.caps());
            entries.push(StackEntry::Lie { step, kind, chi, target: z.clone(), kernel: z, omega: vec![], big_omega: vec![] });
        } else {
            let m: Vec<Vec<f64>> = body
                .lines()
                .filter(|l| !l.trim().is_empty())
                .map(|l| l.split_whitespace().map(|t| crate::series::hexfloat::parse(t).ok_or_else(|| perr(i + 1, "bad matrix entry"))).collect())
                .collect::<Result<_, _>>()?;
            entries.push(StackEntry::Linear { step, m });
        }
        i = end;
    }
    Ok(TransformStack { entries })
}
