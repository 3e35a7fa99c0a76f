//! Experiment drivers behind the `fpu` binary. Each command reads a `key = value`
//! configuration and returns named CSV files.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::birkhoff::{amplitude_grid, minimize_remainder, monodromy_angles, run_birkhoff};
use crate::fa::{continue_family, eigen_angles, frequency_variation, monodromy_matrix, ContinuationConfig, FaConfig};
use crate::integrator::{IntegratorConfig, Scheme};
use crate::model::{assemble_h0, modes_forward, semi_sinusoidal_ic, specific_energy, ChainConfig, TorusSeed};
use crate::normalizer::{self, reports_csv, stack_to_text, NormalizerConfig, NormalizerRun};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {0}: expected `key = value`")]
    Syntax(usize),
    #[error("duplicate key `{0}`")]
    Duplicate(String),
    #[error("bad value for `{key}`: {value}")]
    Value { key: String, value: String },
    #[error("unknown keys: {0}")]
    Unknown(String),
    #[error("invalid setting: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    ChaosScan,
    Normalize,
    ToriGrid2d,
    TorusFamily,
    Monodromy,
    BirkhoffScan,
}

impl Kind {
    #[must_use]
    pub fn name(self) -> &'static str {
        match self {
            Kind::ChaosScan => "chaos-scan",
            Kind::Normalize => "normalize",
            Kind::ToriGrid2d => "tori-grid-2d",
            Kind::TorusFamily => "torus-family",
            Kind::Monodromy => "monodromy",
            Kind::BirkhoffScan => "birkhoff-scan",
        }
    }
}

/// Parsed `key = value` lines; `#` starts a comment. Every key read is recorded with
/// its effective value so that unknown keys can be rejected and the provenance header
/// lists defaults too.
#[derive(Debug, Default)]
pub struct Config {
    raw: BTreeMap<String, String>,
    used: RefCell<BTreeMap<String, String>>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Config, ConfigError> {
        let mut raw = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or(ConfigError::Syntax(i + 1))?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return Err(ConfigError::Syntax(i + 1));
            }
            if raw.insert(k.to_string(), v.to_string()).is_some() {
                return Err(ConfigError::Duplicate(k.to_string()));
            }
        }
        Ok(Config { raw, used: RefCell::default() })
    }

    pub fn get<T: FromStr + ToString>(&self, key: &str, default: T) -> Result<T, ConfigError> {
        let v = match self.raw.get(key) {
            Some(s) => s.parse().map_err(|_| ConfigError::Value { key: key.into(), value: s.clone() })?,
            None => default,
        };
        self.used.borrow_mut().insert(key.to_string(), v.to_string());
        Ok(v)
    }

    /// Comma-separated list.
    pub fn list(&self, key: &str, default: &[f64]) -> Result<Vec<f64>, ConfigError> {
        let v = match self.raw.get(key) {
            Some(s) => s
                .split(',')
                .map(|x| x.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| ConfigError::Value { key: key.into(), value: s.clone() })?,
            None => default.to_vec(),
        };
        let text = v.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
        self.used.borrow_mut().insert(key.to_string(), text);
        Ok(v)
    }

    pub fn check_unknown(&self) -> Result<(), ConfigError> {
        let used = self.used.borrow();
        let unknown: Vec<&str> = self.raw.keys().filter(|k| !used.contains_key(*k)).map(String::as_str).collect();
        if unknown.is_empty() { Ok(()) } else { Err(ConfigError::Unknown(unknown.join(", "))) }
    }

    /// Effective settings, one `key = value` per line, sorted.
    #[must_use]
    pub fn canonical(&self) -> String {
        self.used.borrow().iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

#[derive(Debug, Default)]
pub struct Output {
    /// File name and contents, in emission order.
    pub files: Vec<(String, String)>,
    /// Per-point failures, reported on stderr and counted for the exit code.
    pub failures: Vec<String>,
}

/// `n` points from `lo` to `hi`, geometric.
#[must_use]
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n < 2 {
        return vec![lo];
    }
    (0..n).map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64)).collect()
}

fn chain(cfg: &Config) -> Result<ChainConfig, ConfigError> {
    let n: usize = cfg.get("N", 4)?;
    let c = ChainConfig::new(n, cfg.get("alpha", 0.0)?, cfg.get("beta", 0.25)?).map_err(|e| ConfigError::Invalid(e.to_string()))?;
    Ok(c)
}

fn integrator(cfg: &Config) -> Result<IntegratorConfig, ConfigError> {
    let d = IntegratorConfig::default();
    let scheme: String = cfg.get("scheme", "sbab3c".to_string())?;
    let icfg = IntegratorConfig {
        h: cfg.get("h", d.h)?,
        scheme: scheme.parse::<Scheme>().map_err(|_| ConfigError::Value { key: "scheme".into(), value: scheme.clone() })?,
        delta: cfg.get("delta", d.delta)?,
        duration: cfg.get("T", d.duration)?,
    };
    icfg.sampling().map_err(|e| ConfigError::Invalid(e.to_string()))?;
    Ok(icfg)
}

fn fa_config(cfg: &Config) -> Result<FaConfig, ConfigError> {
    let d = FaConfig::default();
    Ok(FaConfig {
        n_components: cfg.get("n_components", d.n_components)?,
        k_max: cfg.get("k_max", d.k_max)?,
        eps_tol: cfg.get("eps_tol", d.eps_tol)?,
        mu_tol: cfg.get("mu_tol", d.mu_tol)?,
        max_iters: cfg.get("max_iters", d.max_iters)?,
        refine_passes: cfg.get("refine_passes", d.refine_passes)?,
    })
}

fn normalizer_config(cfg: &Config, n: usize) -> Result<NormalizerConfig, ConfigError> {
    let d = NormalizerConfig::for_chain(n);
    Ok(NormalizerConfig {
        k_width: cfg.get("k_width", d.k_width)?,
        steps: cfg.get("steps", d.steps)?,
        max_degree: cfg.get("max_degree", d.max_degree)?,
        divisor_floor: cfg.get("divisor_floor", d.divisor_floor)?,
        rule_a_base: cfg.get("rule_a_base", d.rule_a_base)?,
        rule_b_ratio: cfg.get("rule_b_ratio", d.rule_b_ratio)?,
        prune_rel: cfg.get("prune_rel", d.prune_rel)?,
    })
}

fn continuation(cfg: &Config) -> Result<ContinuationConfig, ConfigError> {
    let d = ContinuationConfig::default();
    Ok(ContinuationConfig {
        start_amplitude: cfg.get("start_amplitude", d.start_amplitude)?,
        zeta0: cfg.get("zeta0", d.zeta0)?,
        zeta_min: cfg.get("zeta_min", d.zeta_min)?,
        max_specific_energy: cfg.get("max_specific_energy", d.max_specific_energy)?,
    })
}

/// Runs `f` over `items` on `threads` workers; results come back in input order.
fn parallel_map<T: Sync, R: Send>(items: &[T], threads: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let threads = threads.max(1).min(items.len().max(1));
    if threads == 1 {
        return items.iter().map(&f).collect();
    }
    let next = std::sync::atomic::AtomicUsize::new(0);
    let mut out: Vec<(usize, R)> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..threads)
            .map(|_| {
                s.spawn(|| {
                    let mut local = Vec::new();
                    loop {
                        let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                        if i >= items.len() {
                            break local;
                        }
                        local.push((i, f(&items[i])));
                    }
                })
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("worker panicked")).collect()
    });
    out.sort_by_key(|(i, _)| *i);
    out.into_iter().map(|(_, r)| r).collect()
}

fn header(kind: Kind, cfg: &Config) -> String {
    let canon = cfg.canonical();
    let hash = Sha256::digest(format!("{}\n{canon}", kind.name()).as_bytes());
    let hex: String = hash.iter().map(|b| format!("{b:02x}")).collect();
    let mut h = format!("# fpu-tori {VERSION} {}\n# config-sha256 {hex}\n", kind.name());
    for line in canon.lines() {
        let _ = writeln!(h, "# {line}");
    }
    h
}

fn threads(cfg: &Config) -> Result<usize, ConfigError> {
    cfg.get("threads", 1usize)
}

fn normalize_at(chain: &ChainConfig, nc: &NormalizerConfig, istar: &[f64]) -> Result<(TorusSeed, NormalizerRun), String> {
    let seed = TorusSeed::new(chain, istar.to_vec()).map_err(|e| e.to_string())?;
    let h0 = assemble_h0(chain, &seed, nc.caps(), nc.k_width).map_err(|e| e.to_string())?;
    Ok((seed, normalizer::run(&h0, nc)))
}

/// Runs one experiment; configuration problems are errors, per-point failures are
/// collected in the output.
pub fn run(kind: Kind, text: &str) -> Result<Output, ConfigError> {
    let cfg = Config::parse(text)?;
    match kind {
        Kind::ChaosScan => chaos_scan(&cfg),
        Kind::Normalize => normalize(&cfg),
        Kind::ToriGrid2d => tori_grid(&cfg),
        Kind::TorusFamily => torus_family(&cfg),
        Kind::Monodromy => monodromy(&cfg),
        Kind::BirkhoffScan => birkhoff_scan(&cfg),
    }
}

fn chaos_scan(cfg: &Config) -> Result<Output, ConfigError> {
    let chain = chain(cfg)?;
    let icfg = integrator(cfg)?;
    let amps = log_grid(cfg.get("amp_min", 0.05)?, cfg.get("amp_max", 5.0)?, cfg.get("points", 40)?);
    let threads = threads(cfg)?;
    cfg.check_unknown()?;
    let rows = parallel_map(&amps, threads, |&a| {
        let c = semi_sinusoidal_ic(&chain, a);
        (a, specific_energy(&chain, &c), frequency_variation(&chain, &modes_forward(&chain, &c), &icfg))
    });
    let mut out = Output::default();
    let mut csv = header(Kind::ChaosScan, cfg) + "amplitude,E_S,delta_omega\n";
    for (a, e, r) in rows {
        match r {
            Ok(v) => {
                let _ = writeln!(csv, "{a:?},{e:?},{v:?}");
            }
            Err(err) => out.failures.push(format!("amplitude {a}: {err}")),
        }
    }
    out.files.push(("chaos_scan.csv".into(), csv));
    Ok(out)
}

fn normalize(cfg: &Config) -> Result<Output, ConfigError> {
    let chain = chain(cfg)?;
    let istar = cfg.list("istar", &[1e-4, 1e-4])?;
    let nc = normalizer_config(cfg, chain.n)?;
    cfg.check_unknown()?;
    let mut out = Output::default();
    let (_, run) = normalize_at(&chain, &nc, &istar).map_err(ConfigError::Invalid)?;
    let head = header(Kind::Normalize, cfg);
    out.files.push(("norms.csv".into(), format!("{head}# converged = {}\n{}", run.converged, reports_csv(&run.reports))));
    out.files.push(("stack.txt".into(), stack_to_text(&run.stack)));
    if let Some(f) = &run.failure {
        out.failures.push(f.clone());
    }
    Ok(out)
}

fn tori_grid(cfg: &Config) -> Result<Output, ConfigError> {
    let chain = chain(cfg)?;
    let nc = normalizer_config(cfg, chain.n)?;
    let grid = log_grid(cfg.get("istar_min", 1e-8)?, cfg.get("istar_max", 5.0)?, cfg.get("points", 12)?);
    let threads = threads(cfg)?;
    cfg.check_unknown()?;
    let pairs: Vec<[f64; 2]> = grid.iter().flat_map(|&a| grid.iter().map(move |&b| [a, b])).collect();
    let rows = parallel_map(&pairs, threads, |p| normalize_at(&chain, &nc, p));
    let mut out = Output::default();
    let mut csv = header(Kind::ToriGrid2d, cfg) + "I1,I2,E_S,converged,omega1,omega2\n";
    for (p, r) in pairs.iter().zip(rows) {
        match r {
            Ok((_, run)) => {
                let _ = writeln!(csv, "{:?},{:?},{:?},{},{:?},{:?}", p[0], p[1], run.h.energy / chain.n as f64, u8::from(run.converged), run.h.omega[0], run.h.omega[1]);
            }
            Err(e) => out.failures.push(format!("I* = {p:?}: {e}")),
        }
    }
    out.files.push(("tori_grid.csv".into(), csv));
    Ok(out)
}

fn torus_family(cfg: &Config) -> Result<Output, ConfigError> {
    let chain = chain(cfg)?;
    let icfg = integrator(cfg)?;
    let fcfg = fa_config(cfg)?;
    let ccfg = continuation(cfg)?;
    let nc = normalizer_config(cfg, chain.n)?;
    let grid = log_grid(cfg.get("istar_min", 1e-3)?, cfg.get("istar_max", 10.0)?, cfg.get("points", 25)?);
    let threads = threads(cfg)?;
    cfg.check_unknown()?;
    let mut out = Output::default();
    let head = header(Kind::TorusFamily, cfg);
    let mut fa_csv = head.clone() + "E_S,omega1,energy\n";
    match continue_family(&chain, &fcfg, &icfg, &ccfg, |_| {}) {
        Ok(fam) => {
            for p in fam {
                let _ = writeln!(fa_csv, "{:?},{:?},{:?}", p.specific_energy, p.omega[0], p.energy);
            }
        }
        Err(e) => out.failures.push(format!("continuation: {e}")),
    }
    let mut nf_csv = head + "I1,E_S,omega1,energy,converged\n";
    let rows = parallel_map(&grid, threads, |&i| normalize_at(&chain, &nc, &[i]));
    for (i, r) in grid.iter().zip(rows) {
        match r {
            Ok((_, run)) => {
                let _ = writeln!(nf_csv, "{i:?},{:?},{:?},{:?},{}", run.h.energy / chain.n as f64, run.h.omega[0], run.h.energy, u8::from(run.converged));
            }
            Err(e) => out.failures.push(format!("I* = {i}: {e}")),
        }
    }
    out.files.push(("family_fa.csv".into(), fa_csv));
    out.files.push(("family_nf.csv".into(), nf_csv));
    Ok(out)
}

fn monodromy(cfg: &Config) -> Result<Output, ConfigError> {
    let chain = chain(cfg)?;
    let nc = normalizer_config(cfg, chain.n)?;
    let grid = log_grid(cfg.get("istar_min", 1e-3)?, cfg.get("istar_max", 10.0)?, cfg.get("points", 25)?);
    let numeric: bool = cfg.get("numeric", false)?;
    let h: f64 = cfg.get("h", 0.01)?;
    let threads = threads(cfg)?;
    cfg.check_unknown()?;
    let m = chain.modes() - 1;
    let mut out = Output::default();
    let mut cols = String::from("I1,E_S,omega1");
    for j in 1..=m {
        let _ = write!(cols, ",Omega{j},theta{j}");
    }
    cols.push_str(",lambda_unit");
    if numeric {
        for j in 1..=m {
            let _ = write!(cols, ",theta{j}_numeric");
        }
    }
    let mut csv = header(Kind::Monodromy, cfg) + &cols + "\n";
    let rows = parallel_map(&grid, threads, |&i| -> Result<String, String> {
        let (seed, run) = normalize_at(&chain, &nc, &[i])?;
        if !run.converged {
            return Err(format!("normal form not convergent ({})", run.failure.clone().unwrap_or_default()));
        }
        let mono = monodromy_angles(run.h.omega[0], &run.h.big_omega).map_err(|e| e.to_string())?;
        let mut row = format!("{i:?},{:?},{:?}", run.h.energy / chain.n as f64, run.h.omega[0]);
        for (w, t) in run.h.big_omega.iter().zip(&mono.angles) {
            let _ = write!(row, ",{w:?},{t:?}");
        }
        row.push_str(",1");
        if numeric {
            let z = crate::series::Point::zeros(seed.dims(&chain));
            let ic = crate::transform::map_to_original(&run.stack, &seed, &z).map_err(|e| e.to_string())?;
            let mat = monodromy_matrix(&chain, &ic, std::f64::consts::TAU / run.h.omega[0], h);
            let mut ang: Vec<f64> = eigen_angles(&mat).iter().map(|(a, _)| *a).filter(|a| *a > 1e-6).collect();
            ang.sort_by(|a, b| b.total_cmp(a));
            for j in 0..m {
                let _ = write!(row, ",{:?}", ang.get(j).copied().unwrap_or(f64::NAN));
            }
        }
        Ok(row)
    });
    for (i, r) in grid.iter().zip(rows) {
        match r {
            Ok(row) => {
                csv.push_str(&row);
                csv.push('\n');
            }
            Err(e) => out.failures.push(format!("I* = {i}: {e}")),
        }
    }
    out.files.push(("monodromy.csv".into(), csv));
    Ok(out)
}

fn birkhoff_scan(cfg: &Config) -> Result<Output, ConfigError> {
    let chain = chain(cfg)?;
    let nc = normalizer_config(cfg, chain.n)?;
    let grid = log_grid(cfg.get("istar_min", 1e-3)?, cfg.get("istar_max", 10.0)?, cfg.get("points", 25)?);
    let order: u32 = cfg.get("order", if chain.n <= 4 { 5 } else { 1 })?;
    let width: f64 = cfg.get("width", 0.5)?;
    let amp_points: usize = cfg.get("amp_points", 21)?;
    let threads = threads(cfg)?;
    cfg.check_unknown()?;
    let mut out = Output::default();
    let mut csv = header(Kind::BirkhoffScan, cfg) + "I1,E_S_torus,amplitude,E_S,min_remainder\n";
    let rows = parallel_map(&grid, threads, |&i| -> Result<String, String> {
        let (seed, run) = normalize_at(&chain, &nc, &[i])?;
        if !run.converged {
            return Err(format!("normal form not convergent ({})", run.failure.clone().unwrap_or_default()));
        }
        let form = run_birkhoff(&run.h, order, nc.divisor_floor).map_err(|e| e.to_string())?;
        let amps = amplitude_grid(&chain, run.h.energy, width, amp_points);
        let best = minimize_remainder(&chain, &seed, &run.stack, &form, &amps).ok_or("no finite remainder on the grid")?;
        Ok(format!("{i:?},{:?},{:?},{:?},{:?}", run.h.energy / chain.n as f64, best.amplitude, best.specific_energy, best.remainder_size))
    });
    for (i, r) in grid.iter().zip(rows) {
        match r {
            Ok(row) => {
                csv.push_str(&row);
                csv.push('\n');
            }
            Err(e) => out.failures.push(format!("I* = {i}: {e}")),
        }
    }
    out.files.push(("birkhoff_scan.csv".into(), csv));
    Ok(out)
}
