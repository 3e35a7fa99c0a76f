use fpu_tori::homological::{self, HomologicalError, Solution};
use fpu_tori::model::*;
use fpu_tori::normalizer::*;
use fpu_tori::series::{Caps, Dims, Parity, Point, TermKey, TrigSeries};
use fpu_tori::transform::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn beta_seed(i: f64) -> (ChainConfig, TorusSeed, GradedHamiltonian, NormalizerConfig) {
    let cfg = ChainConfig::new(4, 0.0, 0.25).unwrap();
    let seed = TorusSeed::new(&cfg, vec![i]).unwrap();
    let nc = NormalizerConfig::for_chain(4);
    let h0 = assemble_h0(&cfg, &seed, nc.caps(), nc.k_width).unwrap();
    (cfg, seed, h0, nc)
}

fn random_point(rng: &mut ChaCha8Rng, dims: Dims, scale_p: f64, scale_t: f64) -> Point {
    Point {
        p: (0..dims.n1).map(|_| rng.gen_range(-scale_p..scale_p)).collect(),
        q: (0..dims.n1).map(|_| rng.gen_range(0.0..std::f64::consts::TAU)).collect(),
        xi: (0..dims.n2).map(|_| rng.gen_range(-scale_t..scale_t)).collect(),
        eta: (0..dims.n2).map(|_| rng.gen_range(-scale_t..scale_t)).collect(),
    }
}

fn key(d: Dims, m: &[u32], xi: &[u32], eta: &[u32], k: &[i32], par: Parity) -> TermKey {
    TermKey::new(d, m, xi, eta, k, par).unwrap().0
}

#[test]
fn every_generator_solves_its_equation() {
    let (_, _, h0, nc) = beta_seed(0.5);
    let run = run(&h0, &nc);
    assert!(run.converged, "{:?}", run.failure);
    let mut count = 0;
    for e in &run.stack.entries {
        if let StackEntry::Lie { chi, target, kernel, omega, big_omega, .. } = e {
            let h = normal_part(chi.dims(), chi.caps(), omega, big_omega);
            let sol = Solution { chi: chi.clone(), kernel: kernel.clone(), min_divisor: 0.0 };
            let mut res = homological::residual(&h, &sol, target);
            res.prune(1e-12 * target.l1_norm());
            assert!(res.is_empty(), "{} leftover terms", res.len());
            count += 1;
        }
    }
    assert_eq!(count, 4 * nc.steps as usize);
}

#[test]
fn steps_preserve_the_hamiltonian_pointwise() {
    let (_, _, h0, nc) = beta_seed(0.5);
    let mut h = h0.clone();
    h.caps = nc.caps();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for r in 1..=6 {
        let before = h.clone();
        let (_, entries) = normalization_step(&mut h, &nc, r).unwrap();
        let stack = TransformStack { entries };
        for _ in 0..20 {
            let z = random_point(&mut rng, h.dims, 0.01, 0.05);
            let a = h.evaluate(&z);
            let b = before.evaluate(&pull_back(&stack, &z));
            assert!((a - b).abs() < 1e-9 * a.abs(), "step {r}: {a} vs {b}");
        }
    }
}

#[test]
fn push_forward_inverts_pull_back() {
    let (_, seed, h0, nc) = beta_seed(0.5);
    let run = run(&h0, &nc);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..5 {
        let z = random_point(&mut rng, run.h.dims, 0.01, 0.05);
        let modes = map_to_original(&run.stack, &seed, &z).unwrap();
        let back = map_from_original(&run.stack, &seed, &modes);
        for (u, v) in back.p.iter().chain(&back.xi).chain(&back.eta).zip(z.p.iter().chain(&z.xi).chain(&z.eta)) {
            assert!((u - v).abs() < 1e-12);
        }
        let dq = (back.q[0] - z.q[0]).rem_euclid(std::f64::consts::TAU);
        assert!(dq.min(std::f64::consts::TAU - dq) < 1e-12);
    }
}

#[test]
fn final_normal_form_energy_matches_chain_energy() {
    let (cfg, seed, h0, nc) = beta_seed(0.5);
    let run = run(&h0, &nc);
    let z = Point { p: vec![0.0], q: vec![0.3], xi: vec![0.0; 2], eta: vec![0.0; 2] };
    let modes = map_to_original(&run.stack, &seed, &z).unwrap();
    let e = total_energy(&cfg, &modes_backward(&cfg, &modes));
    assert!((e - run.h.energy).abs() < 1e-8 * e);
}

#[test]
fn harmonic_chain_step_is_identity() {
    let cfg = ChainConfig::new(4, 0.0, 0.0).unwrap();
    let seed = TorusSeed::new(&cfg, vec![0.3]).unwrap();
    let nc = NormalizerConfig::for_chain(4);
    let h0 = assemble_h0(&cfg, &seed, nc.caps(), 2).unwrap();
    let run = run(&h0, &nc);
    for rep in &run.reports {
        assert!(rep.norms.iter().all(|&n| n == 0.0));
    }
    assert!(run.h.blocks.is_empty());
    assert_eq!(run.h.omega, vec![mode_frequencies(&cfg)[0]]);
}

#[test]
fn step_clears_low_blocks() {
    let (_, _, h0, nc) = beta_seed(0.5);
    let mut h = h0.clone();
    h.caps = nc.caps();
    for r in 1..=3 {
        normalization_step(&mut h, &nc, r).unwrap();
        for (idx, b) in &h.blocks {
            assert!(!(idx.ell <= 2 && idx.s <= r), "block ({}, {}) has {} terms", idx.ell, idx.s, b.len());
        }
    }
}

#[test]
fn small_divisor_examples() {
    let d = Dims::new(2, 0).unwrap();
    let f = TrigSeries::monomial(d, Caps::UNBOUNDED, &[0, 0], &[], &[], &[1, -1], Parity::Cos, 1.0);
    assert!(matches!(homological::solve(&f, &[1.0, 1.0], &[], 1e-8), Err(HomologicalError::SmallDivisor { .. })));

    let d = Dims::new(1, 1).unwrap();
    let f = TrigSeries::monomial(d, Caps::UNBOUNDED, &[0], &[2], &[0], &[1], Parity::Cos, 1.0);
    assert!(matches!(homological::solve(&f, &[1.0], &[0.5], 1e-8), Err(HomologicalError::SmallDivisor { .. })));

    let f = TrigSeries::monomial(d, Caps::UNBOUNDED, &[0], &[1], &[0], &[0], Parity::Cos, 1.0);
    assert!(matches!(homological::solve(&f, &[1.0], &[0.5e-8], 1e-8), Err(HomologicalError::SmallDivisor { .. })));
}

#[test]
fn chi1_and_y2_examples_have_zero_residual() {
    let d = Dims::new(1, 1).unwrap();
    let caps = Caps::UNBOUNDED;
    let h = normal_part(d, caps, &[1.0], &[0.5]);
    let f1 = TrigSeries::monomial(d, caps, &[0], &[1], &[0], &[1], Parity::Cos, 1.0);
    let s = homological::solve(&f1, &[1.0], &[0.5], 1e-8).unwrap();
    // ξ cos q is carried to a ξ sin q + b η cos q; the 2×2 system gives a + Ωb = 1, b + Ωa = 0
    assert_eq!(s.chi.len(), 2);
    assert!((s.chi.get(&key(d, &[0], &[1], &[0], &[1], Parity::Sin)) - 4.0 / 3.0).abs() < 1e-14);
    assert!((s.chi.get(&key(d, &[0], &[0], &[1], &[1], Parity::Cos)) + 2.0 / 3.0).abs() < 1e-14);
    assert!(homological::residual(&h, &s, &f1).l1_norm() < 1e-14);

    let h = normal_part(d, caps, &[1.0], &[0.3]);
    let f2 = TrigSeries::monomial(d, caps, &[0], &[1], &[1], &[1], Parity::Cos, 1.0);
    let s = homological::solve(&f2, &[1.0], &[0.3], 1e-8).unwrap();
    assert!(s.kernel.is_empty());
    assert!(homological::residual(&h, &s, &f2).l1_norm() < 1e-14);

    let x = TrigSeries::monomial(d, caps, &[1], &[0], &[0], &[1], Parity::Cos, 1.0);
    let s = homological::solve(&x, &[1.0], &[0.3], 1e-8).unwrap();
    assert!((s.chi.get(&key(d, &[1], &[0], &[0], &[1], Parity::Sin)) - 1.0).abs() < 1e-15);
}

#[test]
fn constant_goes_to_the_kernel() {
    let d = Dims::new(1, 0).unwrap();
    let f = TrigSeries::constant(d, Caps::UNBOUNDED, 0.7);
    let s = homological::solve(&f, &[1.0], &[], 1e-8).unwrap();
    assert!(s.chi.is_empty());
    assert_eq!(s.kernel.get(&TermKey::unit(d)), 0.7);
}

fn is_symplectic(m: &[Vec<f64>], tol: f64) -> bool {
    let n = m.len() / 2;
    let j = symplectic_j(n);
    let mm = nalgebra::DMatrix::from_fn(2 * n, 2 * n, |i, k| m[i][k]);
    (mm.transpose() * &j * &mm - &j).abs().max() < tol
}

#[test]
fn diagonalize_examples() {
    let d = Dims::new(0, 1).unwrap();
    let caps = Caps::UNBOUNDED;
    let eps = 0.2;
    // ½(ξ²+η²) + εξη, with Ω_prev = 1 supplying the ½(ξ²+η²)
    let q = TrigSeries::monomial(d, caps, &[], &[1], &[1], &[], Parity::Cos, eps);
    let r = diagonalize(&q, &[1.0], 1e-8).unwrap();
    let hess = nalgebra::DMatrix::from_row_slice(2, 2, &[1.0, eps, eps, 1.0]);
    let a = symplectic_j(1) * hess;
    let ev = a.complex_eigenvalues();
    let oracle = ev.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
    assert!((r.big_omega[0] - oracle).abs() < 1e-13);
    assert!((r.big_omega[0] - (1.0 - eps * eps).sqrt()).abs() < 1e-13);
    assert!(is_symplectic(&r.m, 1e-12));

    // diagonal input: identity map, shifted frequency
    let d2 = Dims::new(0, 2).unwrap();
    let mut q = TrigSeries::monomial(d2, caps, &[], &[2, 0], &[0, 0], &[], Parity::Cos, 0.05);
    q.add_scaled(&TrigSeries::monomial(d2, caps, &[], &[0, 0], &[2, 0], &[], Parity::Cos, 0.05), 1.0).unwrap();
    let r = diagonalize(&q, &[1.0, 1.7], 1e-8).unwrap();
    assert!((r.big_omega[0] - 1.1).abs() < 1e-14 && (r.big_omega[1] - 1.7).abs() < 1e-14);
    for (i, row) in r.m.iter().enumerate() {
        for (k, v) in row.iter().enumerate() {
            assert!((v - if i == k { 1.0 } else { 0.0 }).abs() < 1e-14);
        }
    }

    // ½(ξ²−η²) is hyperbolic
    let q = TrigSeries::monomial(d, caps, &[], &[0], &[2], &[], Parity::Cos, -1.0);
    assert!(matches!(diagonalize(&q, &[1.0], 1e-8), Err(NormalizerError::EllipticityLost { .. })));
}

#[test]
fn diagonalized_quadratic_form_is_normal() {
    let d = Dims::new(0, 2).unwrap();
    let caps = Caps::UNBOUNDED;
    let mut q = TrigSeries::zero(d, caps);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for (a, b) in [([2, 0], [0, 0]), ([1, 1], [0, 0]), ([1, 0], [1, 0]), ([1, 0], [0, 1]), ([0, 1], [0, 1]), ([0, 0], [1, 1]), ([0, 0], [2, 0])] {
        q.add_scaled(&TrigSeries::monomial(d, caps, &[], &a, &b, &[], Parity::Cos, rng.gen_range(-0.05..0.05)), 1.0).unwrap();
    }
    let w = [1.0, 1.6];
    let r = diagonalize(&q, &w, 1e-8).unwrap();
    assert!(is_symplectic(&r.m, 1e-12));
    let mut full = normal_part(d, caps, &[], &w);
    full.add_scaled(&q, 1.0).unwrap();
    let mut cache = fpu_tori::series::TransverseCache::new();
    let t = full.substitute_transverse(&r.m, &mut cache);
    let mut target = normal_part(d, caps, &[], &r.big_omega);
    target.add_scaled(&t, -1.0).unwrap();
    assert!(target.l1_norm() < 1e-12 * full.l1_norm());
}

#[test]
fn convergence_rule_examples() {
    let geometric: Vec<f64> = (0..12).map(|r| 0.5f64.powi(r)).collect();
    assert!(convergence_rules(&geometric, 12, 0.95, 1e-3));
    let flat = vec![1.0; 12];
    assert!(!convergence_rules(&flat, 12, 0.95, 1e-3));
    let slow: Vec<f64> = (0..12).map(|r| 0.7f64.powi(r)).collect();
    // passes rule (A) but 0.7¹¹ ≈ 2e-2 fails rule (B)
    assert!(!convergence_rules(&slow, 12, 0.95, 1e-3));
    assert!(!convergence_rules(&geometric[..5], 12, 0.95, 1e-3));
}

#[test]
fn stack_text_roundtrip() {
    let (_, _, h0, mut nc) = beta_seed(0.2);
    nc.steps = 3;
    let run = run(&h0, &nc);
    let text = stack_to_text(&run.stack);
    let back = stack_from_text(&text).unwrap();
    assert_eq!(stack_to_text(&back), text);
    assert_eq!(back.entries.len(), run.stack.entries.len());
}

#[test]
fn alpha_step_one_has_empty_pure_angle_block() {
    let cfg = ChainConfig::new(4, 0.25, 0.0).unwrap();
    let seed = TorusSeed::new(&cfg, vec![1e-4, 1e-4]).unwrap();
    let nc = NormalizerConfig::for_chain(4);
    let h0 = assemble_h0(&cfg, &seed, nc.caps(), 2).unwrap();
    let mut h = h0.clone();
    h.caps = nc.caps();
    normalization_step(&mut h, &nc, 1).unwrap();
    assert!(h.block(0, 1).is_none());
}
