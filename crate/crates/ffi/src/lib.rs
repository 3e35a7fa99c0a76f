//! C ABI over `fpu_tori`. Objects are opaque heap handles; every fallible call returns
//! an `FpuStatus` and writes results through out-pointers. The message of the last
//! error on the calling thread is available from `fpu_last_error`.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, c_int};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use fpu_tori::fa::frequency_variation;
use fpu_tori::integrator::{Integrator, IntegratorConfig, Scheme};
use fpu_tori::model::{self, assemble_h0, modes_backward, modes_forward, Cartesian, ChainConfig, TorusSeed};
use fpu_tori::normalizer::{self, NormalizerConfig, NormalizerRun};
use fpu_tori::series::Point;
use fpu_tori::transform::map_to_original;

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FpuStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    BufferSize = 3,
    Integrator = 4,
    NotConverged = 5,
    Panic = 99,
}

/// Chain parameters `(N, α, β)`.
pub struct FpuChain {
    cfg: ChainConfig,
}

/// A normalized elliptic torus together with its coordinate transformations.
pub struct FpuTorus {
    cfg: ChainConfig,
    seed: TorusSeed,
    run: NormalizerRun,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn fail(status: FpuStatus, msg: impl Into<String>) -> FpuStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
    status
}

fn guard(f: impl FnOnce() -> FpuStatus) -> FpuStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p.downcast_ref::<&str>().map(|s| (*s).to_string()).or_else(|| p.downcast_ref::<String>().cloned()).unwrap_or_else(|| "panic".into());
            fail(FpuStatus::Panic, msg)
        }
    }
}

unsafe fn slice_in<'a>(p: *const f64, len: usize) -> Option<&'a [f64]> {
    if p.is_null() {
        None
    } else {
        Some(slice::from_raw_parts(p, len))
    }
}

unsafe fn slice_out<'a>(p: *mut f64, len: usize) -> Option<&'a mut [f64]> {
    if p.is_null() {
        None
    } else {
        Some(slice::from_raw_parts_mut(p, len))
    }
}

/// Library version, a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn fpu_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the last error message of this thread into `buf` (truncated, NUL-terminated).
/// Returns the full message length in bytes.
#[no_mangle]
pub unsafe extern "C" fn fpu_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = e.len().min(len - 1);
            ptr::copy_nonoverlapping(e.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        e.len()
    })
}

#[no_mangle]
pub unsafe extern "C" fn fpu_chain_new(n: usize, alpha: f64, beta: f64, out: *mut *mut FpuChain) -> FpuStatus {
    guard(|| {
        if out.is_null() {
            return fail(FpuStatus::NullPointer, "out is null");
        }
        match ChainConfig::new(n, alpha, beta) {
            Ok(cfg) => {
                *out = Box::into_raw(Box::new(FpuChain { cfg }));
                FpuStatus::Ok
            }
            Err(e) => fail(FpuStatus::InvalidArgument, e.to_string()),
        }
    })
}

#[no_mangle]
pub unsafe extern "C" fn fpu_chain_free(chain: *mut FpuChain) {
    if !chain.is_null() {
        drop(Box::from_raw(chain));
    }
}

/// Number of normal modes, `N − 1`; 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn fpu_chain_modes(chain: *const FpuChain) -> usize {
    chain.as_ref().map_or(0, |c| c.cfg.modes())
}

/// Total energy of the Cartesian state `(x, y)`, each of length `N − 1`.
#[no_mangle]
pub unsafe extern "C" fn fpu_energy(chain: *const FpuChain, x: *const f64, y: *const f64, len: usize, out: *mut f64) -> FpuStatus {
    guard(|| {
        let (Some(c), Some(x), Some(y)) = (chain.as_ref(), slice_in(x, len), slice_in(y, len)) else {
            return fail(FpuStatus::NullPointer, "null argument");
        };
        if out.is_null() {
            return fail(FpuStatus::NullPointer, "out is null");
        }
        if len != c.cfg.modes() {
            return fail(FpuStatus::BufferSize, format!("expected {} values", c.cfg.modes()));
        }
        *out = model::total_energy(&c.cfg, &Cartesian { x: x.to_vec(), y: y.to_vec() });
        FpuStatus::Ok
    })
}

/// Semi-sinusoidal initial condition of amplitude `amplitude` written to `(x, y)`.
#[no_mangle]
pub unsafe extern "C" fn fpu_semi_sinusoidal(chain: *const FpuChain, amplitude: f64, x: *mut f64, y: *mut f64, len: usize) -> FpuStatus {
    guard(|| {
        let (Some(c), Some(xo), Some(yo)) = (chain.as_ref(), slice_out(x, len), slice_out(y, len)) else {
            return fail(FpuStatus::NullPointer, "null argument");
        };
        if len != c.cfg.modes() {
            return fail(FpuStatus::BufferSize, format!("expected {} values", c.cfg.modes()));
        }
        let ic = model::semi_sinusoidal_ic(&c.cfg, amplitude);
        xo.copy_from_slice(&ic.x);
        yo.copy_from_slice(&ic.y);
        FpuStatus::Ok
    })
}

/// Advances `(x, y)` in place by `steps` SBAB3 steps of size `h`; `corrected` selects the
/// corrector.
#[no_mangle]
pub unsafe extern "C" fn fpu_evolve(chain: *const FpuChain, h: f64, steps: u64, corrected: c_int, x: *mut f64, y: *mut f64, len: usize) -> FpuStatus {
    guard(|| {
        let (Some(c), Some(xs), Some(ys)) = (chain.as_ref(), slice_out(x, len), slice_out(y, len)) else {
            return fail(FpuStatus::NullPointer, "null argument");
        };
        if len != c.cfg.modes() {
            return fail(FpuStatus::BufferSize, format!("expected {} values", c.cfg.modes()));
        }
        if !(h.is_finite() && h > 0.0) {
            return fail(FpuStatus::InvalidArgument, "step size must be positive");
        }
        let scheme = if corrected != 0 { Scheme::Sbab3c } else { Scheme::Sbab3 };
        let integ = Integrator::new(c.cfg, scheme);
        let mut s = modes_forward(&c.cfg, &Cartesian { x: xs.to_vec(), y: ys.to_vec() });
        for _ in 0..steps {
            integ.step(&mut s, h);
        }
        if s.x.iter().chain(&s.y).any(|v| !v.is_finite()) {
            return fail(FpuStatus::Integrator, "state diverged");
        }
        let back = modes_backward(&c.cfg, &s);
        xs.copy_from_slice(&back.x);
        ys.copy_from_slice(&back.y);
        FpuStatus::Ok
    })
}

/// Difference of the main frequency of mode 1 between the windows `[0, T]` and `[T, 2T]`
/// for the Cartesian initial condition `(x, y)`.
#[no_mangle]
pub unsafe extern "C" fn fpu_frequency_variation(chain: *const FpuChain, x: *const f64, y: *const f64, len: usize, duration: f64, out: *mut f64) -> FpuStatus {
    guard(|| {
        let (Some(c), Some(x), Some(y)) = (chain.as_ref(), slice_in(x, len), slice_in(y, len)) else {
            return fail(FpuStatus::NullPointer, "null argument");
        };
        if out.is_null() {
            return fail(FpuStatus::NullPointer, "out is null");
        }
        if len != c.cfg.modes() {
            return fail(FpuStatus::BufferSize, format!("expected {} values", c.cfg.modes()));
        }
        let icfg = IntegratorConfig { duration, ..IntegratorConfig::default() };
        let s = modes_forward(&c.cfg, &Cartesian { x: x.to_vec(), y: y.to_vec() });
        match frequency_variation(&c.cfg, &s, &icfg) {
            Ok(v) => {
                *out = v;
                FpuStatus::Ok
            }
            Err(e) => fail(FpuStatus::Integrator, e.to_string()),
        }
    })
}

/// Normalizes the torus with actions `istar[0..n1]` using the default settings for the
/// chain size. A handle is returned even when the rules fail; `fpu_torus_converged`
/// tells which.
#[no_mangle]
pub unsafe extern "C" fn fpu_torus_normalize(chain: *const FpuChain, istar: *const f64, n1: usize, out: *mut *mut FpuTorus) -> FpuStatus {
    guard(|| {
        let (Some(c), Some(istar)) = (chain.as_ref(), slice_in(istar, n1)) else {
            return fail(FpuStatus::NullPointer, "null argument");
        };
        if out.is_null() {
            return fail(FpuStatus::NullPointer, "out is null");
        }
        let seed = match TorusSeed::new(&c.cfg, istar.to_vec()) {
            Ok(s) => s,
            Err(e) => return fail(FpuStatus::InvalidArgument, e.to_string()),
        };
        let nc = NormalizerConfig::for_chain(c.cfg.n);
        let h0 = match assemble_h0(&c.cfg, &seed, nc.caps(), nc.k_width) {
            Ok(h) => h,
            Err(e) => return fail(FpuStatus::InvalidArgument, e.to_string()),
        };
        let run = normalizer::run(&h0, &nc);
        *out = Box::into_raw(Box::new(FpuTorus { cfg: c.cfg, seed, run }));
        FpuStatus::Ok
    })
}

#[no_mangle]
pub unsafe extern "C" fn fpu_torus_free(torus: *mut FpuTorus) {
    if !torus.is_null() {
        drop(Box::from_raw(torus));
    }
}

/// 1 if the convergence rules held, 0 if not, −1 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn fpu_torus_converged(torus: *const FpuTorus) -> c_int {
    torus.as_ref().map_or(-1, |t| c_int::from(t.run.converged))
}

/// Energy of the torus, and its frequencies: `omega[0..n1]` on the torus,
/// `big_omega[0..N−1−n1]` transverse.
#[no_mangle]
pub unsafe extern "C" fn fpu_torus_frequencies(torus: *const FpuTorus, energy: *mut f64, omega: *mut f64, n_omega: usize, big_omega: *mut f64, n_big: usize) -> FpuStatus {
    guard(|| {
        let (Some(t), Some(o), Some(b)) = (torus.as_ref(), slice_out(omega, n_omega), slice_out(big_omega, n_big)) else {
            return fail(FpuStatus::NullPointer, "null argument");
        };
        if energy.is_null() {
            return fail(FpuStatus::NullPointer, "energy is null");
        }
        if n_omega != t.run.h.omega.len() || n_big != t.run.h.big_omega.len() {
            return fail(FpuStatus::BufferSize, format!("expected {} and {} values", t.run.h.omega.len(), t.run.h.big_omega.len()));
        }
        *energy = t.run.h.energy;
        o.copy_from_slice(&t.run.h.omega);
        b.copy_from_slice(&t.run.h.big_omega);
        FpuStatus::Ok
    })
}

/// Cartesian point of the torus at angles `q[0..n1]`, written to `(x, y)`.
#[no_mangle]
pub unsafe extern "C" fn fpu_torus_point(torus: *const FpuTorus, q: *const f64, n1: usize, x: *mut f64, y: *mut f64, len: usize) -> FpuStatus {
    guard(|| {
        let (Some(t), Some(q), Some(xo), Some(yo)) = (torus.as_ref(), slice_in(q, n1), slice_out(x, len), slice_out(y, len)) else {
            return fail(FpuStatus::NullPointer, "null argument");
        };
        if n1 != t.seed.n1 || len != t.cfg.modes() {
            return fail(FpuStatus::BufferSize, format!("expected {} angles and {} values", t.seed.n1, t.cfg.modes()));
        }
        if !t.run.converged {
            return fail(FpuStatus::NotConverged, t.run.failure.clone().unwrap_or_else(|| "normal form not convergent".into()));
        }
        let mut z = Point::zeros(t.seed.dims(&t.cfg));
        z.q.copy_from_slice(q);
        match map_to_original(&t.run.stack, &t.seed, &z) {
            Ok(m) => {
                let c = modes_backward(&t.cfg, &m);
                xo.copy_from_slice(&c.x);
                yo.copy_from_slice(&c.y);
                FpuStatus::Ok
            }
            Err(e) => fail(FpuStatus::InvalidArgument, e.to_string()),
        }
    })
}
