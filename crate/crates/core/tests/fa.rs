use std::f64::consts::{PI, TAU};

use fpu_tori::fa::*;
use fpu_tori::integrator::IntegratorConfig;
use fpu_tori::model::*;
use num_complex::Complex64;

fn tones(parts: &[(f64, f64, f64)], t: f64, dt: f64) -> Vec<Complex64> {
    let n = (t / dt).round() as usize;
    (0..=n)
        .map(|i| {
            let x = i as f64 * dt;
            parts.iter().map(|&(a, f, p)| Complex64::from_polar(a, f * x + p)).sum()
        })
        .collect()
}

#[test]
fn tuning_examples() {
    let t = 2000.0;
    let s = tones(&[(1.0, 0.9, 0.0)], t, 0.5);
    assert!((tuning(&s, 0.5, 0.9).unwrap() - 1.0).abs() < 1e-12);
    // Hann transform: −1/2 at the first bin offset, zero at the second
    assert!((tuning(&s, 0.5, 0.9 + TAU / t).unwrap() - 0.5).abs() < 1e-9);
    assert!(tuning(&s, 0.5, 0.9 + 2.0 * TAU / t).unwrap() < 1e-9);
    let z = vec![Complex64::default(); 101];
    assert_eq!(tuning(&z, 0.5, 1.3).unwrap(), 0.0);
    // ∫W = T: a constant signal tunes to 1 at zero frequency
    let c = vec![Complex64::new(1.0, 0.0); 4001];
    assert!((tuning(&c, 0.5, 0.0).unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn pure_tone_peak() {
    let s = tones(&[(1.0, 0.7654, 0.3)], 65536.0, 0.5);
    let nu = find_peak(&s, 0.5, 0.7, 0.8).unwrap();
    assert!((nu - 0.7654).abs() < 1e-10, "{:e}", nu - 0.7654);
    assert!((global_peak(&s, 0.5).unwrap() - 0.7654).abs() < 1e-10);
    assert!(find_peak(&vec![Complex64::default(); 1001], 0.5, 0.1, 0.2).is_err());
}

#[test]
fn dominant_of_two_tones() {
    let s = tones(&[(1.0, 0.61, 0.0), (0.4, 1.37, 1.0)], 4096.0, 0.5);
    assert!((global_peak(&s, 0.5).unwrap() - 0.61).abs() < 1e-7);
    assert!((find_peak(&s, 0.5, 1.2, 1.5).unwrap() - 1.37).abs() < 1e-6);
}

#[test]
fn peak_error_scales_as_inverse_fourth_power() {
    // separation commensurate with every window length, worst case over relative phase
    let f2 = 0.61 + 28.0 * PI / 256.0;
    let err = |t: f64| {
        (0..8)
            .map(|k| {
                let parts = [(1.0, 0.61, 0.2), (0.5, f2, 0.2 + TAU * k as f64 / 8.0)];
                (find_peak(&tones(&parts, t, 0.5), 0.5, 0.5, 0.75).unwrap() - 0.61).abs()
            })
            .fold(0.0, f64::max)
    };
    let (e1, e2, e3) = (err(256.0), err(512.0), err(1024.0));
    for r in [e1 / e2, e2 / e3] {
        assert!((8.0..32.0).contains(&r), "{e1:e} {e2:e} {e3:e}");
    }
}

#[test]
fn single_tone_decomposition() {
    let s = tones(&[(0.8, -1.234, 2.5)], 8192.0, 0.5);
    let d = decompose(&s, 0.5, &FaConfig::default()).unwrap();
    let c = d.components[0];
    assert!((c.amplitude - 0.8).abs() < 1e-8);
    assert!((c.freq + 1.234).abs() < 1e-10);
    assert!((c.phase - 2.5).abs() < 1e-8);
    assert!(d.components.iter().skip(1).all(|c| c.amplitude < 1e-8));
    let zero = decompose(&vec![Complex64::default(); 1001], 0.5, &FaConfig::default()).unwrap();
    assert!(zero.components.iter().all(|c| c.amplitude == 0.0));
}

#[test]
fn two_tone_decomposition_residual() {
    let parts = [(1.0, 0.61, 0.2), (0.3, 1.83, 4.0)];
    let s = tones(&parts, 8192.0, 0.5);
    let cfg = FaConfig { n_components: 2, ..FaConfig::default() };
    let d = decompose(&s, 0.5, &cfg).unwrap();
    assert_eq!(d.components.len(), 2);
    assert!((d.components[1].freq - 1.83).abs() < 1e-9);
    let worst = s.iter().enumerate().map(|(i, z)| (z - d.reconstruct(i as f64 * 0.5)).norm()).fold(0.0, f64::max);
    assert!(worst < 1e-6, "{worst:e}");
}

#[test]
fn residual_decreases_with_component_count() {
    let parts = [(1.0, 0.61, 0.2), (0.3, 1.83, 4.0), (0.1, -0.44, 1.0), (0.02, 2.9, 0.0)];
    let s = tones(&parts, 4096.0, 0.5);
    let mut last = f64::INFINITY;
    for n in 1..=4 {
        let d = decompose(&s, 0.5, &FaConfig { n_components: n, ..FaConfig::default() }).unwrap();
        let r: f64 = s.iter().enumerate().map(|(i, z)| (z - d.reconstruct(i as f64 * 0.5)).norm_sqr()).sum();
        assert!(r < last);
        last = r;
    }
    assert!(last.sqrt() < 1e-6);
}

#[test]
fn dependence_is_flagged() {
    let w = 0.8;
    let mk = |fs: &[f64]| Decomposition {
        components: fs.iter().enumerate().map(|(i, &f)| Component { amplitude: 1.0 / (1.0 + i as f64), freq: f, phase: 0.0 }).collect(),
        skipped: 0,
        sampling: 0.0,
    };
    let d = vec![mk(&[w, 3.0 * w]), mk(&[3.0 * w, -w, 5.0 * w])];
    let cfg = FaConfig::default();
    assert_eq!(fundamental_frequencies(&d, None, 2, &cfg), Err(FaError::Dependent(1)));
    assert_eq!(fundamental_frequencies(&d, None, 1, &cfg).unwrap().omega, vec![w]);
}

#[test]
fn prior_selects_the_integer_multiple() {
    let (w1, nu2, delta) = (0.8, 1.5, 1e-3);
    let u = (nu2 + delta) / 2.0;
    let d = vec![
        Decomposition { components: vec![Component { amplitude: 1.0, freq: w1, phase: 0.0 }], skipped: 0, sampling: 0.0 },
        Decomposition { components: vec![Component { amplitude: 1.0, freq: u, phase: 0.0 }], skipped: 0, sampling: 0.0 },
    ];
    let fs = fundamental_frequencies(&d, Some(&[w1, nu2]), 2, &FaConfig::default()).unwrap();
    assert!((fs.omega[1] - 2.0 * u).abs() < 1e-15);
    assert_eq!(fs.provenance[1].k, vec![0, 2]);
}

#[test]
fn harmonic_chain_is_trivially_a_torus() {
    let cfg = ChainConfig::new(4, 0.0, 0.0).unwrap();
    let icfg = IntegratorConfig { duration: 4096.0, ..IntegratorConfig::default() };
    let ic = ModeState { y: vec![0.0; 3], x: vec![0.3, 0.0, 0.0] };
    let r = locate_torus(&cfg, &ic, 1, &FaConfig::default(), &icfg).unwrap();
    assert!(r.converged);
    assert_eq!(r.iterations, 1);
    assert!((r.omega[0] - mode_frequencies(&cfg)[0]).abs() < 1e-12);
    let v = frequency_variation(&cfg, &ic, &icfg).unwrap();
    assert!(v < 1e-12, "{v:e}");
}

#[test]
fn beta_chain_small_torus_is_located() {
    let cfg = ChainConfig::new(4, 0.0, 0.25).unwrap();
    let icfg = IntegratorConfig { duration: 8192.0, ..IntegratorConfig::default() };
    let ic = ModeState { y: vec![0.0; 3], x: vec![0.3, 0.0, 0.0] };
    let r = locate_torus(&cfg, &ic, 1, &FaConfig::default(), &icfg).unwrap();
    assert!(r.converged, "{:e}", r.error);
    assert!(r.omega[0] > mode_frequencies(&cfg)[0]);
    assert!(frequency_variation(&cfg, &r.ic, &icfg).unwrap() < 1e-9);
}

#[test]
fn monodromy_of_the_harmonic_chain() {
    let cfg = ChainConfig::new(4, 0.0, 0.0).unwrap();
    let nu = mode_frequencies(&cfg);
    let ic = ModeState { y: vec![0.0; 3], x: vec![0.1, 0.0, 0.0] };
    let period = TAU / nu[0];
    let m = monodromy_matrix(&cfg, &ic, period, 0.01);
    let angles = eigen_angles(&m);
    for j in 1..3 {
        let want = (TAU * nu[j] / nu[0] + PI).rem_euclid(TAU) - PI;
        assert!(angles.iter().any(|(a, r)| (a.abs() - want.abs()).abs() < 1e-5 && (r - 1.0).abs() < 1e-8), "{angles:?}");
    }
}
