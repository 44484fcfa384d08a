//! Experiment driver behind the `qmap-spectra` binary.
//!
//! Exit codes: 0 success, 1 configuration error, 2 resource guard refusal,
//! 3 numerical failure.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use num_complex::Complex64;
use serde::Serialize;

use crate::channels::{noise_kernel_or_identity, CoarseGrainedPropagator};
use crate::classical::{build_classical_propagator, classical_leading_spectrum, ClassicalMethod};
use crate::error::{Error, Result};
use crate::limits::ResourceLimits;
use crate::maps::{lyapunov_exponent, quantize_perturbed_cat, PerturbedCatParams};
use crate::observables::{
    autocorrelation_series, averaged_series, fit_decay_rate, fit_linear_slope, initial_centers, late_window,
    late_window_log, linear_entropy_series, loschmidt_series, pre_saturation_window, TimeSeries,
};
use crate::spectral::{
    chord_truncation_spectrum, dense_spectrum, leading_mismatch, quantum_iteration_spectrum, safe_window, Method,
    SpectrumMeta, SpectrumResult, DEFAULT_SVD_TOL, SAFE_CUT, STABILITY_DELTA,
};
use crate::torus::{coherent_state, DensityMatrix, HilbertDim};

/// Coherent-state center used to seed the iteration method when no seed
/// is given.
pub const DEFAULT_CENTER: (f64, f64) = (0.3, 0.7);
/// Initial states averaged by `evolve` and `echo`.
pub const AVERAGED_STATES: usize = 10;
/// Eigenvalues reported by `classical` and `compare`.
pub const LEADING_COUNT: usize = 10;
/// Eigenvalues entering `method_agreement`.
pub const AGREEMENT_COUNT: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Spectrum,
    Classical,
    Evolve,
    Echo,
    Compare,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Parser, Serialize)]
#[command(name = "qmap-spectra", version, about = "Leading spectra and decay laws of noisy quantum cat maps")]
pub struct ExperimentConfig {
    #[arg(long, value_enum)]
    pub command: Command,
    /// Hilbert-space dimension.
    #[arg(long = "N")]
    #[serde(rename = "N")]
    pub n: Option<usize>,
    /// Noise width as a fraction of the torus side.
    #[arg(long, default_value_t = 0.1)]
    pub eps: f64,
    /// Kick strength of the perturbed cat map.
    #[arg(long, default_value_t = 0.01)]
    pub k: f64,
    /// Kick strength of the second map (echo).
    #[arg(long)]
    pub k2: Option<f64>,
    /// Hankel size of the iteration method.
    #[arg(long, default_value_t = 12)]
    pub kiter: usize,
    /// Classical grid side.
    #[arg(long = "L")]
    #[serde(rename = "L")]
    pub l: Option<usize>,
    /// Number of time steps.
    #[arg(long = "T", default_value_t = 30)]
    #[serde(rename = "T")]
    pub t: usize,
    /// Seed for initial-state centers; without it spectra use the center
    /// (0.3, 0.7).
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
    /// Defaults to csv for evolve/echo and json otherwise.
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

impl ExperimentConfig {
    pub fn format(&self) -> Format {
        self.format.unwrap_or(match self.command {
            Command::Evolve | Command::Echo => Format::Csv,
            _ => Format::Json,
        })
    }

    fn dim(&self) -> Result<HilbertDim> {
        let n = self
            .n
            .ok_or_else(|| Error::InvalidParameter(format!("--N is required for {:?}", self.command)))?;
        if n < 2 {
            return Err(Error::InvalidParameter(format!("--N must be >= 2, got {n}")));
        }
        HilbertDim::new(n)
    }

    fn side(&self) -> Result<usize> {
        self.l
            .ok_or_else(|| Error::InvalidParameter(format!("--L is required for {:?}", self.command)))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps >= 0.0 && self.eps.is_finite()) {
            return Err(Error::InvalidParameter(format!("--eps must be >= 0, got {}", self.eps)));
        }
        PerturbedCatParams::new(self.k)?;
        if self.t == 0 {
            return Err(Error::InvalidParameter("--T must be >= 1".into()));
        }
        if self.kiter < 2 {
            return Err(Error::InvalidParameter("--kiter must be >= 2".into()));
        }
        match self.command {
            Command::Spectrum | Command::Evolve => {
                self.dim()?;
            }
            Command::Echo => {
                self.dim()?;
                let k2 = self.k2.ok_or_else(|| Error::InvalidParameter("--k2 is required for echo".into()))?;
                PerturbedCatParams::new(k2)?;
            }
            Command::Classical => {
                self.side()?;
                if self.eps == 0.0 {
                    return Err(Error::InvalidParameter("classical kernel needs --eps > 0".into()));
                }
            }
            Command::Compare => {
                self.dim()?;
                self.side()?;
                if self.eps == 0.0 {
                    return Err(Error::InvalidParameter("compare needs --eps > 0".into()));
                }
            }
        }
        if let Some(l) = self.l {
            if l < 2 {
                return Err(Error::InvalidParameter(format!("--L must be >= 2, got {l}")));
            }
        }
        Ok(())
    }

    fn propagator(&self, k: f64) -> Result<CoarseGrainedPropagator> {
        let dim = self.dim()?;
        let u = quantize_perturbed_cat(dim, PerturbedCatParams::new(k)?)?;
        CoarseGrainedPropagator::new(u, noise_kernel_or_identity(dim, self.eps)?)
    }

    fn seed_state(&self, dim: HilbertDim) -> Result<DensityMatrix> {
        let (q, p) = match self.seed {
            Some(seed) => initial_centers(1, seed)[0],
            None => DEFAULT_CENTER,
        };
        coherent_state(dim, q, p)
    }
}

/// Exit code for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::ResourceGuard { .. } => 2,
        Error::NoUsableOverlap | Error::Numerical(_) | Error::Convention(_) | Error::NonPositiveValue { .. } => 3,
        Error::DimensionMismatch { .. } | Error::InvalidParameter(_) | Error::Io(_) | Error::Json(_) => 1,
    }
}

/// Parses `args` (program name first), runs the experiment and returns the
/// process exit code. Messages go to stderr.
pub fn run_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let config = match ExperimentConfig::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&config) {
        Ok(paths) => {
            for p in paths {
                eprintln!("wrote {}", p.display());
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Runs one experiment and returns the files written.
pub fn run(config: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    config.validate()?;
    let limits = ResourceLimits::from_env()?;
    match config.command {
        Command::Spectrum => run_spectrum(config, &limits),
        Command::Classical => run_classical(config, &limits),
        Command::Compare => run_compare(config, &limits),
        Command::Evolve | Command::Echo => run_evolve(config, &limits),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EigenEntry {
    pub re: f64,
    pub im: f64,
    pub modulus: f64,
    pub stable: bool,
}

fn entries(res: &SpectrumResult) -> Vec<EigenEntry> {
    res.eigenvalues
        .iter()
        .zip(&res.stable)
        .map(|(z, &stable)| EigenEntry {
            re: z.re,
            im: z.im,
            modulus: z.norm(),
            stable,
        })
        .collect()
}

#[derive(Serialize)]
struct MethodReport {
    meta: SpectrumMeta,
    eigenvalues: Vec<EigenEntry>,
}

#[derive(Serialize)]
struct SpectrumReport<'a> {
    config: &'a ExperimentConfig,
    meta: SpectrumMeta,
    /// Method behind the top-level eigenvalues.
    method: Method,
    unitary_regime: bool,
    eigenvalues: Vec<EigenEntry>,
    methods: BTreeMap<&'static str, MethodReport>,
    /// Methods not run, with the reason.
    skipped: BTreeMap<&'static str, String>,
    method_agreement: Option<f64>,
}

fn method_key(m: Method) -> &'static str {
    match m {
        Method::Iteration => "iteration",
        Method::ChordTruncation => "chord_truncation",
        Method::Dense => "dense",
    }
}

/// Runs every method the guards allow. Guard refusals are recorded as
/// skips; any other error aborts.
fn all_quantum_spectra(
    config: &ExperimentConfig,
    prop: &CoarseGrainedPropagator,
    limits: &ResourceLimits,
) -> Result<(Vec<SpectrumResult>, BTreeMap<&'static str, String>)> {
    let mut results = Vec::new();
    let mut skipped = BTreeMap::new();
    let mut record = |key: &'static str, r: Result<SpectrumResult>| -> Result<()> {
        match r {
            Ok(res) => results.push(res),
            Err(e @ Error::ResourceGuard { .. }) => {
                skipped.insert(key, e.to_string());
            }
            Err(e) => return Err(e),
        }
        Ok(())
    };
    record("dense", dense_spectrum(prop, limits))?;
    let window = safe_window(prop, SAFE_CUT);
    record("chord_truncation", chord_truncation_spectrum(prop, window, limits))?;
    if prop.kernel.is_noiseless() {
        skipped.insert(
            "iteration",
            "unitary regime: no spectral gap for the moment method".to_string(),
        );
    } else {
        let rho0 = config.seed_state(prop.dim())?;
        record(
            "iteration",
            quantum_iteration_spectrum(prop, &rho0, config.kiter, DEFAULT_SVD_TOL, STABILITY_DELTA),
        )?;
    }
    Ok((results, skipped))
}

pub fn run_spectrum(config: &ExperimentConfig, limits: &ResourceLimits) -> Result<Vec<PathBuf>> {
    let prop = config.propagator(config.k)?;
    let (results, skipped) = all_quantum_spectra(config, &prop, limits)?;
    // results arrive in preference order: dense, chord, iteration
    let Some(reference) = results.first() else {
        for (key, reason) in &skipped {
            eprintln!("{key}: {reason}");
        }
        return Err(Error::ResourceGuard {
            what: "every spectral method refused; dimension",
            size: prop.dim().get(),
            limit: limits.dense_quantum_max_n,
        });
    };
    let method_agreement = results[1..]
        .iter()
        .map(|r| leading_mismatch(&reference.eigenvalues, &r.eigenvalues, AGREEMENT_COUNT))
        .reduce(f64::max);
    let report = SpectrumReport {
        config,
        meta: reference.meta.clone(),
        method: reference.method,
        unitary_regime: prop.kernel.is_noiseless(),
        eigenvalues: entries(reference),
        methods: results
            .iter()
            .map(|r| {
                (
                    method_key(r.method),
                    MethodReport {
                        meta: r.meta.clone(),
                        eigenvalues: entries(r),
                    },
                )
            })
            .collect(),
        skipped,
        method_agreement,
    };
    match config.format() {
        Format::Json => Ok(vec![write_json(&config.out, &report)?]),
        Format::Csv => {
            let csv = spectrum_csv(reference);
            Ok(vec![write_atomic(&config.out, csv.as_bytes())?, write_json(&sidecar(&config.out), &report)?])
        }
    }
}

fn spectrum_csv(res: &SpectrumResult) -> String {
    let mut s = String::from("rank,re,im,modulus,stable\n");
    for (i, e) in entries(res).iter().enumerate() {
        let _ = writeln!(s, "{i},{},{},{},{}", num(e.re), num(e.im), num(e.modulus), e.stable);
    }
    s
}

#[derive(Serialize)]
struct ClassicalReport<'a> {
    config: &'a ExperimentConfig,
    meta: SpectrumMeta,
    method: &'static str,
    eigenvalues: Vec<EigenEntry>,
}

fn classical_spectrum(config: &ExperimentConfig, limits: &ResourceLimits) -> Result<(SpectrumResult, &'static str)> {
    let l = config.side()?;
    let prop = build_classical_propagator(l, config.eps, PerturbedCatParams::new(config.k)?, limits)?;
    let (method, name) = if l <= limits.classical_dense_max_l {
        (ClassicalMethod::Dense, "dense")
    } else {
        (ClassicalMethod::Moments, "moments")
    };
    Ok((classical_leading_spectrum(&prop, LEADING_COUNT, method, config.kiter, limits)?, name))
}

pub fn run_classical(config: &ExperimentConfig, limits: &ResourceLimits) -> Result<Vec<PathBuf>> {
    let (res, method) = classical_spectrum(config, limits)?;
    let report = ClassicalReport {
        config,
        meta: res.meta.clone(),
        method,
        eigenvalues: entries(&res),
    };
    match config.format() {
        Format::Json => Ok(vec![write_json(&config.out, &report)?]),
        Format::Csv => Ok(vec![
            write_atomic(&config.out, spectrum_csv(&res).as_bytes())?,
            write_json(&sidecar(&config.out), &report)?,
        ]),
    }
}

#[derive(Serialize)]
struct CompareReport<'a> {
    config: &'a ExperimentConfig,
    quantum_meta: SpectrumMeta,
    classical_meta: SpectrumMeta,
    classical_method: &'static str,
    /// Stable iteration-method eigenvalues.
    quantum: Vec<EigenEntry>,
    classical: Vec<EigenEntry>,
    /// `|lambda_q| - |lambda_c|` rank by rank.
    diff: Vec<f64>,
}

pub fn run_compare(config: &ExperimentConfig, limits: &ResourceLimits) -> Result<Vec<PathBuf>> {
    let prop = config.propagator(config.k)?;
    let rho0 = config.seed_state(prop.dim())?;
    let q = quantum_iteration_spectrum(&prop, &rho0, config.kiter, DEFAULT_SVD_TOL, STABILITY_DELTA)?;
    let q_stable: Vec<Complex64> = q.stable_eigenvalues().into_iter().take(LEADING_COUNT).collect();
    let q = SpectrumResult {
        stable: vec![true; q_stable.len()],
        eigenvalues: q_stable,
        ..q
    };
    let (c, classical_method) = classical_spectrum(config, limits)?;
    let diff = q
        .eigenvalues
        .iter()
        .zip(&c.eigenvalues)
        .map(|(a, b)| a.norm() - b.norm())
        .collect();
    let report = CompareReport {
        config,
        quantum_meta: q.meta.clone(),
        classical_meta: c.meta.clone(),
        classical_method,
        quantum: entries(&q),
        classical: entries(&c),
        diff,
    };
    Ok(vec![write_json(&config.out, &report)?])
}

#[derive(Debug, Clone, Serialize)]
pub struct Fit {
    pub slope: f64,
    /// Inclusive step range.
    pub window: (usize, usize),
}

#[derive(Serialize)]
struct Fits {
    autocorrelation: Option<Fit>,
    linear_entropy_subtracted: Option<Fit>,
    linear_entropy_early: Option<Fit>,
    #[serde(skip_serializing_if = "Option::is_none")]
    loschmidt: Option<Option<Fit>>,
}

#[derive(Serialize)]
struct References {
    ln_abs_lambda1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ln_abs_lambda1_prime: Option<Option<f64>>,
    lyapunov_exponent: f64,
}

#[derive(Serialize)]
struct EvolveReport<'a> {
    config: &'a ExperimentConfig,
    states: usize,
    /// Set when a series stopped before `T` (state reached `I/N` exactly).
    truncated: bool,
    fits: Fits,
    reference: References,
    #[serde(skip_serializing_if = "Option::is_none")]
    series: Option<BTreeMap<&'static str, Vec<Option<f64>>>>,
}

fn fit_with(series: &TimeSeries, window: Option<(usize, usize)>, log_values: bool) -> Option<Fit> {
    let (a, b) = window?;
    let slope = if log_values {
        fit_linear_slope(series, a, b)
    } else {
        fit_decay_rate(series, a, b)
    };
    slope.ok().map(|slope| Fit { slope, window: (a, b) })
}

/// `ln |lambda_1|` from the iteration method, if it has a stable nontrivial
/// eigenvalue.
fn ln_lambda1(config: &ExperimentConfig, prop: &CoarseGrainedPropagator) -> Result<Option<f64>> {
    if prop.kernel.is_noiseless() {
        return Ok(None);
    }
    let rho0 = config.seed_state(prop.dim())?;
    let res = match quantum_iteration_spectrum(prop, &rho0, config.kiter, DEFAULT_SVD_TOL, STABILITY_DELTA) {
        Ok(r) => r,
        Err(Error::NoUsableOverlap) => return Ok(None),
        Err(e) => return Err(e),
    };
    Ok(res.stable_eigenvalues().get(1).map(|z| z.norm().ln()))
}

pub fn run_evolve(config: &ExperimentConfig, _limits: &ResourceLimits) -> Result<Vec<PathBuf>> {
    let prop = config.propagator(config.k)?;
    let echo_prop = match config.command {
        Command::Echo => Some(config.propagator(config.k2.expect("validated"))?),
        _ => None,
    };
    let t = config.t;
    let seed = config.seed.unwrap_or(0);
    let count = AVERAGED_STATES;
    let c = averaged_series(&prop, count, seed, |r| autocorrelation_series(r, &prop, t))?;
    let s = averaged_series(&prop, count, seed, |r| linear_entropy_series(r, &prop, t, false))?;
    let ss = averaged_series(&prop, count, seed, |r| linear_entropy_series(r, &prop, t, true))?;
    let m = match &echo_prop {
        Some(p2) => Some(averaged_series(&prop, count, seed, |r| loschmidt_series(r, &prop, p2, t))?),
        None => None,
    };
    let n_dim = prop.dim().get();
    let fits = Fits {
        autocorrelation: fit_with(&c, late_window(&c), false),
        linear_entropy_subtracted: fit_with(&ss, late_window_log(&ss), true),
        linear_entropy_early: fit_with(&s, pre_saturation_window(&s, n_dim), true),
        loschmidt: m.as_ref().map(|m| fit_with(m, late_window(m), false)),
    };
    let reference = References {
        ln_abs_lambda1: ln_lambda1(config, &prop)?,
        ln_abs_lambda1_prime: match &echo_prop {
            Some(p2) => Some(ln_lambda1(config, p2)?),
            None => None,
        },
        lyapunov_exponent: lyapunov_exponent(PerturbedCatParams::new(config.k)?),
    };
    let truncated = c.truncated || s.truncated || ss.truncated || m.as_ref().is_some_and(|m| m.truncated);

    let mut columns: Vec<(&'static str, &TimeSeries)> = vec![
        ("autocorrelation", &c),
        ("linear_entropy", &s),
        ("linear_entropy_subtracted", &ss),
    ];
    if let Some(m) = &m {
        columns.push(("loschmidt", m));
    }
    match config.format() {
        Format::Csv => {
            let mut csv = String::from("n");
            for (name, _) in &columns {
                csv.push(',');
                csv.push_str(name);
            }
            csv.push('\n');
            for n in 0..=t {
                let _ = write!(csv, "{n}");
                for (_, series) in &columns {
                    csv.push(',');
                    if let Some(v) = series.values.get(n) {
                        csv.push_str(&num(*v));
                    }
                }
                csv.push('\n');
            }
            let report = EvolveReport {
                config,
                states: count,
                truncated,
                fits,
                reference,
                series: None,
            };
            Ok(vec![
                write_atomic(&config.out, csv.as_bytes())?,
                write_json(&sidecar(&config.out), &report)?,
            ])
        }
        Format::Json => {
            let series = columns
                .iter()
                .map(|(name, s)| (*name, (0..=t).map(|n| s.values.get(n).copied()).collect()))
                .collect();
            let report = EvolveReport {
                config,
                states: count,
                truncated,
                fits,
                reference,
                series: Some(series),
            };
            Ok(vec![write_json(&config.out, &report)?])
        }
    }
}

/// 17 significant digits.
fn num(v: f64) -> String {
    format!("{v:.16e}")
}

/// `<out>.json`, the metadata file accompanying a CSV.
pub fn sidecar(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<PathBuf> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// Writes through a temporary file in the target directory and renames it
/// into place.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<PathBuf> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(path.to_path_buf())
}
