use std::ffi::CStr;
use std::path::Path;
use std::process::Command;
use std::ptr;

use fpu_tori_ffi::*;

fn chain(n: usize, alpha: f64, beta: f64) -> *mut FpuChain {
    let mut c = ptr::null_mut();
    assert_eq!(unsafe { fpu_chain_new(n, alpha, beta, &mut c) }, FpuStatus::Ok);
    c
}

fn last_error() -> String {
    let mut buf = [0 as std::ffi::c_char; 256];
    unsafe {
        fpu_last_error(buf.as_mut_ptr(), buf.len());
        CStr::from_ptr(buf.as_ptr()).to_string_lossy().into_owned()
    }
}

#[test]
fn version_string() {
    let v = unsafe { CStr::from_ptr(fpu_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn errors_are_reported() {
    let mut c = ptr::null_mut();
    assert_eq!(unsafe { fpu_chain_new(1, 0.0, 0.25, &mut c) }, FpuStatus::InvalidArgument);
    assert!(c.is_null());
    assert!(!last_error().is_empty());
    assert_eq!(unsafe { fpu_chain_new(4, 0.0, 0.25, ptr::null_mut()) }, FpuStatus::NullPointer);
    let c = chain(4, 0.0, 0.25);
    let (x, y) = ([0.0; 2], [0.0; 2]);
    let mut e = 0.0;
    assert_eq!(unsafe { fpu_energy(c, x.as_ptr(), y.as_ptr(), 2, &mut e) }, FpuStatus::BufferSize);
    assert_eq!(unsafe { fpu_energy(c, ptr::null(), y.as_ptr(), 3, &mut e) }, FpuStatus::NullPointer);
    let mut t = ptr::null_mut();
    let bad = [-1.0];
    assert_eq!(unsafe { fpu_torus_normalize(c, bad.as_ptr(), 1, &mut t) }, FpuStatus::InvalidArgument);
    assert_eq!(unsafe { fpu_chain_modes(ptr::null()) }, 0);
    assert_eq!(unsafe { fpu_torus_converged(ptr::null()) }, -1);
    unsafe {
        fpu_chain_free(c);
        fpu_chain_free(ptr::null_mut());
        fpu_torus_free(ptr::null_mut());
    }
}

#[test]
fn evolve_conserves_energy() {
    let c = chain(8, 0.0, 0.25);
    assert_eq!(unsafe { fpu_chain_modes(c) }, 7);
    let (mut x, mut y) = ([0.0; 7], [0.0; 7]);
    assert_eq!(unsafe { fpu_semi_sinusoidal(c, 1.0, x.as_mut_ptr(), y.as_mut_ptr(), 7) }, FpuStatus::Ok);
    let (mut e0, mut e1) = (0.0, 0.0);
    unsafe {
        fpu_energy(c, x.as_ptr(), y.as_ptr(), 7, &mut e0);
        assert_eq!(fpu_evolve(c, 0.05, 2000, 1, x.as_mut_ptr(), y.as_mut_ptr(), 7), FpuStatus::Ok);
        fpu_energy(c, x.as_ptr(), y.as_ptr(), 7, &mut e1);
    }
    assert!(((e1 - e0) / e0).abs() < 1e-8, "{e0} {e1}");
    assert_eq!(unsafe { fpu_evolve(c, -1.0, 1, 0, x.as_mut_ptr(), y.as_mut_ptr(), 7) }, FpuStatus::InvalidArgument);
    unsafe { fpu_chain_free(c) };
}

#[test]
fn sbab3_is_time_reversible() {
    let c = chain(4, 0.0, 0.25);
    let (mut x, mut y) = ([0.0; 3], [0.0; 3]);
    unsafe { fpu_semi_sinusoidal(c, 1.5, x.as_mut_ptr(), y.as_mut_ptr(), 3) };
    let x0 = x;
    unsafe { fpu_evolve(c, 0.1, 500, 0, x.as_mut_ptr(), y.as_mut_ptr(), 3) };
    y.iter_mut().for_each(|v| *v = -*v);
    unsafe { fpu_evolve(c, 0.1, 500, 0, x.as_mut_ptr(), y.as_mut_ptr(), 3) };
    for (a, b) in x.iter().zip(&x0) {
        assert!((a - b).abs() < 1e-11, "{a} {b}");
    }
    assert!(y.iter().all(|v| v.abs() < 1e-11));
    unsafe { fpu_chain_free(c) };
}

#[test]
fn torus_round_trip() {
    let c = chain(4, 0.0, 0.25);
    let mut t = ptr::null_mut();
    let istar = [0.05];
    assert_eq!(unsafe { fpu_torus_normalize(c, istar.as_ptr(), 1, &mut t) }, FpuStatus::Ok);
    assert_eq!(unsafe { fpu_torus_converged(t) }, 1);
    let (mut e, mut w, mut big) = (0.0, [0.0; 1], [0.0; 2]);
    assert_eq!(unsafe { fpu_torus_frequencies(t, &mut e, w.as_mut_ptr(), 1, big.as_mut_ptr(), 2) }, FpuStatus::Ok);
    assert!(w[0] > 2.0 * (std::f64::consts::PI / 8.0).sin());
    let (mut x, mut y) = ([0.0; 3], [0.0; 3]);
    let q = [0.0];
    assert_eq!(unsafe { fpu_torus_point(t, q.as_ptr(), 1, x.as_mut_ptr(), y.as_mut_ptr(), 3) }, FpuStatus::Ok);
    let mut h = 0.0;
    unsafe { fpu_energy(c, x.as_ptr(), y.as_ptr(), 3, &mut h) };
    assert!(((h - e) / e).abs() < 1e-10, "{h} {e}");
    let mut dw = f64::NAN;
    assert_eq!(unsafe { fpu_frequency_variation(c, x.as_ptr(), y.as_ptr(), 3, 4096.0, &mut dw) }, FpuStatus::Ok);
    assert!(dw.abs() < 1e-8, "{dw}");
    unsafe {
        fpu_torus_free(t);
        fpu_chain_free(c);
    }
}

#[test]
fn header_declares_the_api() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/fpu_tori.h");
    let h = std::fs::read_to_string(&path).unwrap();
    for name in ["fpu_chain_new", "fpu_chain_free", "fpu_evolve", "fpu_torus_normalize", "fpu_torus_point", "fpu_last_error", "FPU_STATUS_OK", "typedef struct FpuTorus FpuTorus"] {
        assert!(h.contains(name), "{name}");
    }
    // syntax check with the system C compiler when there is one
    if let Ok(out) = Command::new("cc").args(["-fsyntax-only", "-x", "c", "-std=c99", "-Wall", "-Werror"]).arg(&path).output() {
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
}
