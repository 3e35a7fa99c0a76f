use fpu_tori::model::*;
use fpu_tori::series::{Caps, Point};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_cart(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Cartesian {
    Cartesian {
        y: (0..n - 1).map(|_| rng.gen_range(-scale..scale)).collect(),
        x: (0..n - 1).map(|_| rng.gen_range(-scale..scale)).collect(),
    }
}

/// Direct evaluation of the chain Hamiltonian, written independently of the library.
fn chain_energy(alpha: f64, beta: f64, c: &Cartesian) -> f64 {
    let mut pos = vec![0.0];
    pos.extend_from_slice(&c.x);
    pos.push(0.0);
    let mut e = 0.5 * c.y.iter().map(|v| v * v).sum::<f64>();
    for w in pos.windows(2) {
        let d = w[1] - w[0];
        e += 0.5 * d * d + alpha / 3.0 * d.powi(3) + beta / 4.0 * d.powi(4);
    }
    e
}

#[test]
fn modes_roundtrip_and_isometry() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for n in [2, 4, 8, 11] {
        let cfg = ChainConfig::new(n, 0.0, 0.0).unwrap();
        let nu = mode_frequencies(&cfg);
        for _ in 0..20 {
            let c = random_cart(&mut rng, n, 1.0);
            let m = modes_forward(&cfg, &c);
            let back = modes_backward(&cfg, &m);
            for (a, b) in back.x.iter().chain(&back.y).zip(c.x.iter().chain(&c.y)) {
                assert!((a - b).abs() < 1e-12);
            }
            let quad: f64 = (0..n - 1).map(|j| 0.5 * nu[j] * (m.x[j].powi(2) + m.y[j].powi(2))).sum();
            let direct = chain_energy(0.0, 0.0, &c);
            assert!((quad - direct).abs() < 1e-12 * direct.max(1e-300));
        }
    }
}

#[test]
fn semi_sinusoidal_excites_first_mode() {
    let cfg = ChainConfig::new(8, 0.25, 0.0).unwrap();
    let c = semi_sinusoidal_ic(&cfg, 0.7);
    let m = modes_forward(&cfg, &c);
    assert!((m.x[0] - 0.7).abs() < 1e-14);
    assert!(m.x[1..].iter().chain(&m.y).all(|v| v.abs() < 1e-14));
    assert!(c.y.iter().all(|&v| v == 0.0));
}

#[test]
fn mode_hamiltonian_matches_chain() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for (n, a, b) in [(4, 0.25, 0.0), (4, 0.0, 0.25), (8, 0.3, 0.2), (5, 1.0, 1.0)] {
        let cfg = ChainConfig::new(n, a, b).unwrap();
        let h = hamiltonian_in_modes(&cfg).unwrap();
        for _ in 0..20 {
            let c = random_cart(&mut rng, n, 0.8);
            let m = modes_forward(&cfg, &c);
            let z = Point { p: vec![], q: vec![], xi: m.y.clone(), eta: m.x.clone() };
            let want = chain_energy(a, b, &c);
            assert!((h.evaluate(&z) - want).abs() < 1e-10 * want.abs());
            assert!((total_energy(&cfg, &c) - want).abs() < 1e-13 * want.abs());
        }
    }
}

#[test]
fn beta_model_has_no_cubic_terms() {
    let cfg = ChainConfig::new(6, 0.0, 0.25).unwrap();
    let h = anharmonic_part(&cfg).unwrap();
    assert!(h.iter().all(|(k, _)| k.degree() == 4));
}

#[test]
fn h0_reproduces_chain_energy() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for (n, a, b, istar) in [(4, 0.25, 0.0, vec![0.01, 0.02]), (4, 0.0, 0.25, vec![0.05]), (8, 0.0, 0.25, vec![0.02])] {
        let cfg = ChainConfig::new(n, a, b).unwrap();
        let seed = TorusSeed::new(&cfg, istar.clone()).unwrap();
        let h = assemble_h0(&cfg, &seed, Caps::new(12, 40), 2).unwrap();
        let dims = seed.dims(&cfg);
        for _ in 0..20 {
            let z = Point {
                p: istar.iter().map(|i| rng.gen_range(-0.01..0.01) * i).collect(),
                q: (0..dims.n1).map(|_| rng.gen_range(0.0..6.3)).collect(),
                xi: (0..dims.n2).map(|_| rng.gen_range(-0.05..0.05)).collect(),
                eta: (0..dims.n2).map(|_| rng.gen_range(-0.05..0.05)).collect(),
            };
            let modes = point_to_modes(&seed, &z).unwrap();
            let c = modes_backward(&cfg, &modes);
            let want = chain_energy(a, b, &c);
            let got = h.evaluate(&z);
            assert!((got - want).abs() < 1e-11 * want.abs(), "{got} vs {want}");
            let back = modes_to_point(&seed, &modes);
            for (u, v) in back.p.iter().zip(&z.p) {
                assert!((u - v).abs() < 1e-14);
            }
        }
    }
}

#[test]
fn h0_structure() {
    let cfg = ChainConfig::new(4, 0.25, 0.0).unwrap();
    let seed = TorusSeed::new(&cfg, vec![1e-4, 1e-4]).unwrap();
    let h = assemble_h0(&cfg, &seed, Caps::new(8, 24), 2).unwrap();
    for (idx, b) in &h.blocks {
        assert!(!(idx.ell <= 2 && idx.s == 0));
        // cubic potential: trig degree never exceeds the polynomial degree 3
        assert!(b.max_trig_degree() <= 3);
    }
    let beta = ChainConfig::new(4, 0.0, 0.25).unwrap();
    let h = assemble_h0(&beta, &TorusSeed::new(&beta, vec![0.1]).unwrap(), Caps::new(8, 24), 2).unwrap();
    for b in h.blocks.values() {
        // H is even in X: the parity of ℓ follows the parity of the harmonic
        assert!(b.iter().all(|(k, _)| (k.degree() + k.trig_degree()) % 2 == 0));
        assert!(b.max_trig_degree() <= 4);
    }
    // ω⁽⁰⁾ picks up the quartic correction: positive for β > 0
    assert!(h.omega[0] > mode_frequencies(&beta)[0]);
}

#[test]
fn pure_angle_part_scales_with_the_potential_degree() {
    // angle-dependent ℓ = 0 terms come from X^d with d = 3 (cubic): they scale as I*^{3/2}
    let cfg = ChainConfig::new(4, 0.25, 0.0).unwrap();
    let norm0 = |i: f64| {
        let seed = TorusSeed::new(&cfg, vec![i, i]).unwrap();
        let h = assemble_h0(&cfg, &seed, Caps::new(8, 24), 2).unwrap();
        h.blocks.iter().filter(|(c, _)| c.ell == 0).map(|(_, b)| b.l1_norm()).sum::<f64>()
    };
    let r = norm0(0.5e-3) / norm0(1e-3);
    assert!((r - 2f64.powf(-1.5)).abs() < 1e-12);
}
