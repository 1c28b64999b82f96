//! Config-driven command-line front end.
//!
//! `spectrans <subcommand> --config <file.json> [--out <dir>]`. Every
//! subcommand writes CSV tables and a `summary.json` into the output directory.
//! Exit codes: 0 success, 1 invalid configuration or usage, 2 numerical failure
//! (the error is also written to `failure.txt`).

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::gbzoracle::{agbz_ranges_oracle, gbz_points_from_obc, obc_spectrum, winding_number_nonbloch, write_gbz_csv};
use crate::metric::{
    agbz_modulus_ranges, ep_touch_scan, find_minima, find_singularities, noise_floor, read_curve_csv, scan_metric,
    write_curve_csv, MetricCurve, ModulusRange, RangeScan, ScanConfig, TouchScan, DEFAULT_K,
};
use crate::model::{build_hatano_nelson, build_nonreciprocal_ssh, LaurentBlochHamiltonian};
use crate::quasi::{h_transition_scan, write_sweep_csv, HScan, QuasiModel, DEFAULT_DH, DEFAULT_THRESHOLD};
use crate::transport::{fmt_f64, read_cloud_csv, wasserstein2, write_cloud_csv, SpectrumCloud};
use crate::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_NUMERIC: i32 = 2;

/// Environment variable that caps the worker thread count.
pub const THREADS_ENV: &str = "SPECTRANS_THREADS";

#[derive(Debug, Parser)]
#[command(name = "spectrans", version, about = "Wasserstein metric of non-Hermitian lattice spectra")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct PlotArgs {
    /// Curve CSV written by `metric-sweep` or `quasi-sweep`.
    #[arg(long)]
    curve: PathBuf,
    /// Optional configuration; with a lattice model, singularities are marked.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// G_W(μ) curve with singularities and minima.
    MetricSweep(Common),
    /// aGBZ modulus ranges from the metric and from root sorting.
    Agbz(Common),
    /// Model parameter where the GBZ range touches its neighbour.
    EpScan(Common),
    /// Non-Bloch winding number versus a model parameter.
    TopoScan(Common),
    /// h-space metric of a quasiperiodic chain.
    QuasiSweep(Common),
    /// Open-chain spectrum and GBZ points.
    OracleGbz(Common),
    /// W² between two point-cloud CSV files.
    Transport(Common),
    /// SVG rendering of a curve CSV.
    Plot(PlotArgs),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    HatanoNelson { t_l: f64, t_r: f64 },
    Ssh { t1: f64, t2: f64, t3: f64, gamma: f64 },
    Quasiperiodic {
        harmonics: Vec<f64>,
        #[serde(default = "QuasiModel::golden_mean")]
        omega: f64,
        #[serde(default)]
        phi: f64,
        #[serde(default)]
        g: f64,
        #[serde(default = "default_quasi_sites")]
        sites: usize,
    },
}

fn default_quasi_sites() -> usize {
    610
}

impl ModelSpec {
    pub fn lattice(&self) -> Result<LaurentBlochHamiltonian> {
        match *self {
            ModelSpec::HatanoNelson { t_l, t_r } => build_hatano_nelson(t_l, t_r),
            ModelSpec::Ssh { t1, t2, t3, gamma } => build_nonreciprocal_ssh(t1, t2, t3, gamma),
            ModelSpec::Quasiperiodic { .. } => Err(Error::InvalidInput("a lattice model (hatano_nelson or ssh) is required".into())),
        }
    }

    pub fn quasi(&self) -> Result<QuasiModel> {
        match self {
            ModelSpec::Quasiperiodic { harmonics, omega, phi, g, sites } => {
                let q = QuasiModel { harmonics: harmonics.clone(), omega: *omega, phi: *phi, h: 0.0, g: *g, sites: *sites };
                q.validate()?;
                Ok(q)
            }
            _ => Err(Error::InvalidInput("a quasiperiodic model is required".into())),
        }
    }

    /// Copy with the named parameter replaced.
    pub fn with_parameter(&self, name: &str, value: f64) -> Result<Self> {
        let mut m = self.clone();
        let slot = match (&mut m, name) {
            (ModelSpec::HatanoNelson { t_l, .. }, "t_l") => t_l,
            (ModelSpec::HatanoNelson { t_r, .. }, "t_r") => t_r,
            (ModelSpec::Ssh { t1, .. }, "t1") => t1,
            (ModelSpec::Ssh { t2, .. }, "t2") => t2,
            (ModelSpec::Ssh { t3, .. }, "t3") => t3,
            (ModelSpec::Ssh { gamma, .. }, "gamma") => gamma,
            (ModelSpec::Quasiperiodic { phi, .. }, "phi") => phi,
            (ModelSpec::Quasiperiodic { g, .. }, "g") => g,
            _ => return Err(Error::InvalidInput(format!("model has no sweepable parameter `{name}`"))),
        };
        *slot = value;
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    /// `mu`, `h`, or a model parameter name.
    pub variable: String,
    pub lo: f64,
    pub hi: f64,
    pub steps: usize,
}

impl Sweep {
    pub fn grid(&self) -> Vec<f64> {
        let step = (self.hi - self.lo) / (self.steps - 1) as f64;
        (0..self.steps).map(|i| self.lo + step * i as f64).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Finite {
    pub sites: usize,
    /// Δμ or Δh.
    pub delta: f64,
}

/// Range detector settings for `agbz` and `ep-scan`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RangesConfig {
    pub mu_lo: f64,
    pub mu_hi: f64,
    #[serde(default = "default_cell")]
    pub cell: f64,
    /// Window free of aGBZ crossings used to measure the noise floor.
    pub noise_lo: f64,
    pub noise_hi: f64,
    #[serde(default = "default_noise_samples")]
    pub noise_samples: usize,
    #[serde(default = "default_noise_factor")]
    pub noise_factor: f64,
    #[serde(default = "default_max_gap_cells")]
    pub max_gap_cells: usize,
    #[serde(default = "default_ep_guard")]
    pub ep_guard: f64,
    /// Ordinal of the GBZ range within the window (for `ep-scan`).
    #[serde(default = "default_gbz_ordinal")]
    pub gbz_ordinal: usize,
    /// Parameter tolerance of the `ep-scan` bisection.
    #[serde(default = "default_t_tol")]
    pub t_tol: f64,
}

fn default_cell() -> f64 {
    0.01
}
fn default_noise_samples() -> usize {
    41
}
fn default_noise_factor() -> f64 {
    10.0
}
fn default_max_gap_cells() -> usize {
    2
}
fn default_ep_guard() -> f64 {
    20.0
}
fn default_gbz_ordinal() -> usize {
    2
}
fn default_t_tol() -> f64 {
    0.005
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    #[serde(default = "default_obc_sites")]
    pub sites: usize,
    /// Similarity gauge of the open chain; defaults to the central metric minimum.
    #[serde(default)]
    pub gauge: Option<f64>,
    #[serde(default = "default_oracle_k")]
    pub k_grid: usize,
    /// Largest μ gap bridged when assembling oracle ranges.
    #[serde(default = "default_oracle_gap")]
    pub max_gap: f64,
}

fn default_obc_sites() -> usize {
    60
}
fn default_oracle_k() -> usize {
    512
}
fn default_oracle_gap() -> f64 {
    0.05
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self { sites: default_obc_sites(), gauge: None, k_grid: default_oracle_k(), max_gap: default_oracle_gap() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuasiConfig {
    #[serde(default = "default_dh")]
    pub dh: f64,
    #[serde(default = "default_quasi_threshold")]
    pub threshold: f64,
}

fn default_dh() -> f64 {
    DEFAULT_DH
}
fn default_quasi_threshold() -> f64 {
    DEFAULT_THRESHOLD
}

impl Default for QuasiConfig {
    fn default() -> Self {
        Self { dh: DEFAULT_DH, threshold: DEFAULT_THRESHOLD }
    }
}

/// Metric window checked for singularities at every `topo-scan` point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopoConfig {
    pub mu_lo: f64,
    pub mu_hi: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransportConfig {
    pub a: PathBuf,
    pub b: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub model: Option<ModelSpec>,
    #[serde(default)]
    pub sweep: Option<Sweep>,
    #[serde(default)]
    pub finite: Option<Finite>,
    #[serde(default = "default_k")]
    pub k_grid: usize,
    #[serde(default)]
    pub ranges: Option<RangesConfig>,
    #[serde(default)]
    pub oracle: OracleConfig,
    #[serde(default)]
    pub quasi: QuasiConfig,
    #[serde(default)]
    pub topo: Option<TopoConfig>,
    #[serde(default)]
    pub transport: Option<TransportConfig>,
    /// Also write an SVG next to the curve CSV.
    #[serde(default)]
    pub plot: bool,
}

fn default_k() -> usize {
    DEFAULT_K
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::InvalidInput(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if let Some(s) = &self.sweep {
            if !(s.lo < s.hi) {
                return bad(format!("sweep: lo {} must be below hi {}", s.lo, s.hi));
            }
            if s.steps < 2 {
                return bad("sweep: at least two steps are required".into());
            }
            if let Some(f) = &self.finite {
                if s.variable == "mu" && f.delta >= 2.0 * std::f64::consts::PI / f.sites as f64 {
                    return bad(format!("finite: delta {} must be below 2π/N", f.delta));
                }
            }
        }
        if let Some(f) = &self.finite {
            if !(f.delta > 0.0) || f.sites < 2 {
                return bad("finite: need sites ≥ 2 and positive delta".into());
            }
        }
        if let Some(r) = &self.ranges {
            if !(r.mu_lo < r.mu_hi) || !(r.cell > 0.0) || !(r.noise_lo <= r.noise_hi) {
                return bad("ranges: need mu_lo < mu_hi, positive cell and noise_lo ≤ noise_hi".into());
            }
        }
        if self.k_grid < 2 {
            return bad("k_grid must be at least 2".into());
        }
        Ok(())
    }

    fn model(&self) -> Result<&ModelSpec> {
        self.model.as_ref().ok_or_else(|| Error::InvalidInput("config: `model` is required".into()))
    }

    fn sweep(&self, allowed: &[&str]) -> Result<&Sweep> {
        let s = self.sweep.as_ref().ok_or_else(|| Error::InvalidInput("config: `sweep` is required".into()))?;
        if !allowed.is_empty() && !allowed.contains(&s.variable.as_str()) {
            return Err(Error::InvalidInput(format!("sweep variable must be one of {allowed:?}, got `{}`", s.variable)));
        }
        Ok(s)
    }

    fn finite(&self) -> Result<&Finite> {
        self.finite.as_ref().ok_or_else(|| Error::InvalidInput("config: `finite` is required".into()))
    }

    fn ranges(&self) -> Result<&RangesConfig> {
        self.ranges.as_ref().ok_or_else(|| Error::InvalidInput("config: `ranges` is required".into()))
    }
}

/// Failure classes mapped to exit codes.
#[derive(Debug)]
enum Failure {
    Config(String),
    Numeric(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidInput(m) => Failure::Config(m),
            Error::Io(m) => Failure::Config(m),
            other => Failure::Numeric(other),
        }
    }
}

/// Parses arguments, runs the subcommand and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    if let Ok(v) = std::env::var(THREADS_ENV) {
        match v.parse::<usize>() {
            Ok(n) if n > 0 => {
                // a pool may already exist when embedded; the cap then stays as is
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => {
                eprintln!("error: {THREADS_ENV} must be a positive integer");
                return EXIT_CONFIG;
            }
        }
    }
    let out = match &cli.command {
        Command::Plot(p) => p.out.clone(),
        Command::MetricSweep(c)
        | Command::Agbz(c)
        | Command::EpScan(c)
        | Command::TopoScan(c)
        | Command::QuasiSweep(c)
        | Command::OracleGbz(c)
        | Command::Transport(c) => c.out.clone(),
    };
    match dispatch(&cli.command) {
        Ok(()) => EXIT_OK,
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            EXIT_CONFIG
        }
        Err(Failure::Numeric(e)) => {
            eprintln!("numerical failure: {e}");
            let _ = fs::create_dir_all(&out).and_then(|_| fs::write(out.join("failure.txt"), format!("{e}\n{e:?}\n")));
            EXIT_NUMERIC
        }
    }
}

fn load(path: &Path) -> std::result::Result<RunConfig, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    RunConfig::from_json(&text).map_err(|e| Failure::Config(e.to_string()))
}

fn dispatch(cmd: &Command) -> std::result::Result<(), Failure> {
    match cmd {
        Command::Plot(p) => {
            let cfg = match &p.config {
                Some(c) => Some(load(c)?),
                None => None,
            };
            fs::create_dir_all(&p.out).map_err(|e| Failure::Config(e.to_string()))?;
            plot_file(&p.curve, cfg.as_ref(), &p.out)?;
            Ok(())
        }
        Command::MetricSweep(c) => Ok(metric_sweep(&load(&c.config)?, &prepare(&c.out)?)?),
        Command::Agbz(c) => Ok(agbz(&load(&c.config)?, &prepare(&c.out)?)?),
        Command::EpScan(c) => Ok(ep_scan(&load(&c.config)?, &prepare(&c.out)?)?),
        Command::TopoScan(c) => Ok(topo_scan(&load(&c.config)?, &prepare(&c.out)?)?),
        Command::QuasiSweep(c) => Ok(quasi_sweep(&load(&c.config)?, &prepare(&c.out)?)?),
        Command::OracleGbz(c) => Ok(oracle_gbz(&load(&c.config)?, &prepare(&c.out)?)?),
        Command::Transport(c) => Ok(transport(&load(&c.config)?, &prepare(&c.out)?)?),
    }
}

fn prepare(out: &Path) -> std::result::Result<PathBuf, Failure> {
    fs::create_dir_all(out).map_err(|e| Failure::Config(format!("{}: {e}", out.display())))?;
    Ok(out.to_path_buf())
}

fn create(path: &Path) -> Result<fs::File> {
    fs::File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

#[derive(Serialize)]
struct SingularitySummary {
    mu_c: f64,
    k_c: Option<f64>,
    multiplicity: usize,
}

#[derive(Serialize)]
struct MetricSummary {
    singularities: Vec<SingularitySummary>,
    minima: Vec<f64>,
    edge_minimum: Option<f64>,
}

pub fn metric_sweep(cfg: &RunConfig, out: &Path) -> Result<()> {
    let h = cfg.model()?.lattice()?;
    let s = cfg.sweep(&["mu"])?;
    let mut scan = ScanConfig::new(s.lo, s.hi, s.steps);
    scan.k_grid = cfg.k_grid;
    if let Some(f) = &cfg.finite {
        scan = scan.with_finite(f.sites, f.delta);
    }
    let curve = scan_metric(&h, &scan)?;
    write_curve_csv(create(&out.join("curve.csv"))?, &curve)?;
    let summary = MetricSummary {
        singularities: curve
            .singularities
            .iter()
            .map(|s| SingularitySummary { mu_c: s.mu_c, k_c: s.k_c, multiplicity: s.multiplicity })
            .collect(),
        minima: curve.minima.clone(),
        edge_minimum: curve.edge_minimum,
    };
    write_json(&out.join("summary.json"), &summary)?;
    if cfg.plot {
        let svg = emit_plot(&plot_data_from_curve(&curve))?;
        fs::write(out.join("curve.svg"), svg)?;
    }
    Ok(())
}

fn range_scan(cfg: &RunConfig, h: &LaurentBlochHamiltonian) -> Result<RangeScan> {
    let r = cfg.ranges()?;
    let f = cfg.finite()?;
    let floor = noise_floor(h, r.noise_lo, r.noise_hi, r.noise_samples, f.sites, f.delta)?;
    Ok(RangeScan {
        mu_lo: r.mu_lo,
        mu_hi: r.mu_hi,
        cell: r.cell,
        sites: f.sites,
        dmu: f.delta,
        k_grid: cfg.k_grid,
        threshold: r.noise_factor * floor,
        max_gap_cells: r.max_gap_cells,
        ep_guard: r.ep_guard,
    })
}

/// Row of the detector comparison table; mismatches are in cells.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RangeComparison {
    pub ordinal: usize,
    pub metric: Option<ModulusRange>,
    pub oracle: Option<ModulusRange>,
    pub lo_mismatch: Option<f64>,
    pub hi_mismatch: Option<f64>,
}

/// Pairs ranges by position and measures endpoint differences in units of
/// `cell`. Endpoints at the window edge of either detector are not compared.
pub fn compare_ranges(metric: &[ModulusRange], oracle: &[ModulusRange], mu_lo: f64, mu_hi: f64, cell: f64) -> Vec<RangeComparison> {
    let edge = |x: f64| (x - mu_lo).abs() <= cell || (mu_hi - x).abs() <= cell;
    (0..metric.len().max(oracle.len()))
        .map(|i| {
            let (m, o) = (metric.get(i).copied(), oracle.get(i).copied());
            let diff = |a: Option<f64>, b: Option<f64>| match (a, b) {
                (Some(a), Some(b)) if !edge(a) && !edge(b) => Some((a - b).abs() / cell),
                _ => None,
            };
            RangeComparison {
                ordinal: i + 1,
                metric: m,
                oracle: o,
                lo_mismatch: diff(m.map(|r| r.mu_lo), o.map(|r| r.mu_lo)),
                hi_mismatch: diff(m.map(|r| r.mu_hi), o.map(|r| r.mu_hi)),
            }
        })
        .collect()
}

pub fn agbz(cfg: &RunConfig, out: &Path) -> Result<()> {
    let h = cfg.model()?.lattice()?;
    let r = cfg.ranges()?;
    let scan = range_scan(cfg, &h)?;
    let metric = agbz_modulus_ranges(&h, &scan)?;
    let steps = ((r.mu_hi - r.mu_lo) / r.cell).round() as usize + 1;
    let oracle = agbz_ranges_oracle(&h, r.mu_lo, r.mu_hi, steps.max(2), cfg.oracle.k_grid, cfg.oracle.max_gap)?;
    let table = compare_ranges(&metric, &oracle, r.mu_lo, r.mu_hi, r.cell);
    let mut w = csv::Writer::from_writer(create(&out.join("agbz.csv"))?);
    let err = |e: csv::Error| Error::Csv(e.to_string());
    w.write_record(["ordinal", "metric_lo", "metric_hi", "oracle_index", "oracle_lo", "oracle_hi", "lo_mismatch_cells", "hi_mismatch_cells"])
        .map_err(err)?;
    let opt = |x: Option<f64>| x.map(fmt_f64).unwrap_or_default();
    for row in &table {
        w.write_record([
            row.ordinal.to_string(),
            opt(row.metric.map(|m| m.mu_lo)),
            opt(row.metric.map(|m| m.mu_hi)),
            row.oracle.map(|o| o.index.to_string()).unwrap_or_default(),
            opt(row.oracle.map(|o| o.mu_lo)),
            opt(row.oracle.map(|o| o.mu_hi)),
            opt(row.lo_mismatch),
            opt(row.hi_mismatch),
        ])
        .map_err(err)?;
    }
    w.flush()?;
    let worst = table.iter().flat_map(|r| [r.lo_mismatch, r.hi_mismatch]).flatten().fold(0.0, f64::max);
    write_json(&out.join("summary.json"), &serde_json::json!({ "threshold": scan.threshold, "worst_mismatch_cells": worst, "rows": table }))?;
    Ok(())
}

pub fn ep_scan(cfg: &RunConfig, out: &Path) -> Result<()> {
    let model = cfg.model()?;
    let s = cfg.sweep(&[])?;
    let r = cfg.ranges()?;
    let reference = model.with_parameter(&s.variable, s.lo)?.lattice()?;
    let touch = TouchScan { scan: range_scan(cfg, &reference)?, gbz_ordinal: r.gbz_ordinal, t_tol: r.t_tol };
    let family = |t: f64| model.with_parameter(&s.variable, t)?.lattice();
    let point = ep_touch_scan(family, s.lo, s.hi, &touch)?;
    let mut w = csv::Writer::from_writer(create(&out.join("ep_scan.csv"))?);
    let err = |e: csv::Error| Error::Csv(e.to_string());
    w.write_record([s.variable.as_str(), "gap"]).map_err(err)?;
    for (t, g) in &point.history {
        w.write_record([fmt_f64(*t), fmt_f64(*g)]).map_err(err)?;
    }
    w.flush()?;
    write_json(&out.join("summary.json"), &serde_json::json!({ "t_c": point.t_c, "bracket": [point.bracket.0, point.bracket.1] }))?;
    Ok(())
}

/// GBZ radius of an SSH chain without long-range hopping.
fn circular_radius(model: &ModelSpec) -> Result<f64> {
    match *model {
        ModelSpec::Ssh { t1, t3: 0.0, gamma, .. } => Ok(((t1 - gamma / 2.0) / (t1 + gamma / 2.0)).abs().sqrt()),
        _ => Err(Error::InvalidInput("topo-scan needs an ssh model with t3 = 0 (circular GBZ)".into())),
    }
}

pub fn topo_scan(cfg: &RunConfig, out: &Path) -> Result<()> {
    let model = cfg.model()?;
    let s = cfg.sweep(&[])?;
    let mut w = csv::Writer::from_writer(create(&out.join("topo_scan.csv"))?);
    let err = |e: csv::Error| Error::Csv(e.to_string());
    w.write_record([s.variable.as_str(), "radius", "w", "n_plus", "n_minus", "p_plus", "p_minus", "status", "singularities"])
        .map_err(err)?;
    for t in s.grid() {
        let m = model.with_parameter(&s.variable, t)?;
        let h = m.lattice()?;
        let r = circular_radius(&m)?;
        let sing = match &cfg.topo {
            Some(tc) => {
                let mut scan = ScanConfig::new(tc.mu_lo, tc.mu_hi, tc.steps);
                scan.k_grid = cfg.k_grid;
                let curve = scan_metric(&h, &scan)?;
                curve.singularities.iter().map(|s| fmt_f64(s.mu_c)).collect::<Vec<_>>().join(";")
            }
            None => String::new(),
        };
        let row = match winding_number_nonbloch(&h, r) {
            Ok(d) => vec![
                fmt_f64(t),
                fmt_f64(r),
                fmt_f64(d.w),
                d.n_plus.to_string(),
                d.n_minus.to_string(),
                d.p_plus.to_string(),
                d.p_minus.to_string(),
                "ok".into(),
                sing,
            ],
            Err(Error::AtTransition { .. }) => {
                vec![fmt_f64(t), fmt_f64(r), String::new(), String::new(), String::new(), String::new(), String::new(), "at_transition".into(), sing]
            }
            Err(e) => return Err(e),
        };
        w.write_record(row).map_err(err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn quasi_sweep(cfg: &RunConfig, out: &Path) -> Result<()> {
    let q = cfg.model()?.quasi()?;
    let s = cfg.sweep(&["h"])?;
    let scan = HScan { h_lo: s.lo, h_hi: s.hi, steps: s.steps, dh: cfg.quasi.dh, threshold: cfg.quasi.threshold };
    let result = h_transition_scan(&q, &scan)?;
    write_sweep_csv(create(&out.join("quasi_sweep.csv"))?, &result.samples)?;
    write_json(&out.join("summary.json"), &serde_json::json!({ "h_c": result.h_c, "singularities": result.singularities }))?;
    if cfg.plot {
        let data = PlotData {
            x_label: "h".into(),
            xs: result.samples.iter().map(|s| s.h).collect(),
            ys: result.samples.iter().map(|s| s.gw_h).collect(),
            markers: result.singularities.clone(),
            bands: Vec::new(),
        };
        fs::write(out.join("quasi_sweep.svg"), emit_plot(&data)?)?;
    }
    Ok(())
}

/// Central minimum of the metric on the sweep window, or 0 without a sweep.
fn default_gauge(cfg: &RunConfig, h: &LaurentBlochHamiltonian) -> Result<f64> {
    let Some(s) = cfg.sweep.as_ref().filter(|s| s.variable == "mu") else { return Ok(0.0) };
    let mut scan = ScanConfig::new(s.lo, s.hi, s.steps);
    scan.k_grid = cfg.k_grid;
    let curve = scan_metric(h, &scan)?;
    let minima = find_minima(&curve);
    Ok(minima.get(minima.len() / 2).copied().unwrap_or(0.0))
}

pub fn oracle_gbz(cfg: &RunConfig, out: &Path) -> Result<()> {
    let h = cfg.model()?.lattice()?;
    let gauge = match cfg.oracle.gauge {
        Some(g) => g,
        None => default_gauge(cfg, &h)?,
    };
    let cloud = obc_spectrum(&h, cfg.oracle.sites, gauge)?;
    write_cloud_csv(create(&out.join("obc_spectrum.csv"))?, &cloud)?;
    let points = gbz_points_from_obc(&h, &cloud)?;
    write_gbz_csv(create(&out.join("gbz_points.csv"))?, &points)?;
    let moduli: Vec<f64> = points.iter().map(|p| p.beta.norm()).collect();
    let lo = moduli.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = moduli.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    write_json(
        &out.join("summary.json"),
        &serde_json::json!({ "gauge": gauge, "eigenvalues": cloud.len(), "gbz_points": points.len(), "min_modulus": lo, "max_modulus": hi }),
    )?;
    Ok(())
}

pub fn transport(cfg: &RunConfig, out: &Path) -> Result<()> {
    let t = cfg.transport.as_ref().ok_or_else(|| Error::InvalidInput("config: `transport` is required".into()))?;
    let read = |p: &Path| -> Result<SpectrumCloud> {
        let f = fs::File::open(p).map_err(|e| Error::InvalidInput(format!("{}: {e}", p.display())))?;
        read_cloud_csv(f)
    };
    let w2 = wasserstein2(&read(&t.a)?, &read(&t.b)?)?;
    println!("{}", fmt_f64(w2));
    write_json(&out.join("summary.json"), &serde_json::json!({ "w2": w2 }))?;
    Ok(())
}

/// Series and annotations for [`emit_plot`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PlotData {
    pub x_label: String,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    /// Abscissae drawn as vertical lines.
    pub markers: Vec<f64>,
    /// Intervals drawn as bands on the abscissa.
    pub bands: Vec<(f64, f64)>,
}

pub fn plot_data_from_curve(curve: &MetricCurve) -> PlotData {
    let pick = |s: &crate::metric::MetricSample| s.gw_thermo.or(s.gw_finite).or(s.n_delta_gw);
    let (xs, ys) = curve.samples.iter().filter_map(|s| pick(s).filter(|v| v.is_finite()).map(|v| (s.mu, v))).unzip();
    let mut markers: Vec<f64> = curve.singularities.iter().map(|s| s.mu_c).collect();
    markers.extend(curve.samples.iter().filter(|s| s.flags.divergent).map(|s| s.mu));
    PlotData { x_label: "μ".into(), xs, ys, markers, bands: Vec::new() }
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 50.0;

/// Standalone SVG with the curve, singularity lines and axis bands.
pub fn emit_plot(data: &PlotData) -> Result<String> {
    if data.xs.is_empty() || data.xs.len() != data.ys.len() {
        return Err(Error::InvalidInput("plot needs a non-empty curve".into()));
    }
    let (mut x0, mut x1) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY);
    for (&x, &y) in data.xs.iter().zip(&data.ys) {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y1 = y0 + 1.0;
    }
    let px = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let py = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let (bx, by) = (HEIGHT - MARGIN, WIDTH - MARGIN);
    let _ = writeln!(s, r#"<line x1="{MARGIN}" y1="{bx}" x2="{by}" y2="{bx}" stroke="black"/>"#);
    let _ = writeln!(s, r#"<line x1="{MARGIN}" y1="{MARGIN}" x2="{MARGIN}" y2="{bx}" stroke="black"/>"#);
    for &(a, b) in &data.bands {
        let (a, b) = (px(a.max(x0)), px(b.min(x1)));
        let _ = writeln!(s, r#"<rect x="{a:.2}" y="{:.2}" width="{:.2}" height="6" fill="crimson"/>"#, bx - 3.0, (b - a).max(1.0));
    }
    for &m in data.markers.iter().filter(|m| (x0..=x1).contains(*m)) {
        let x = px(m);
        let _ = writeln!(s, r#"<line x1="{x:.2}" y1="{MARGIN}" x2="{x:.2}" y2="{bx}" stroke="gray" stroke-dasharray="4 3"/>"#);
    }
    let points: Vec<String> = data.xs.iter().zip(&data.ys).map(|(&x, &y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
    let _ = writeln!(s, r#"<polyline fill="none" stroke="navy" stroke-width="1.5" points="{}"/>"#, points.join(" "));
    let label = |v: f64| format!("{v:.4}");
    let _ = writeln!(s, r#"<text x="{MARGIN}" y="{}" font-size="12">{}</text>"#, bx + 18.0, label(x0));
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="12" text-anchor="end">{}</text>"#, by, bx + 18.0, label(x1));
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="14" text-anchor="middle">{}</text>"#, WIDTH / 2.0, HEIGHT - 10.0, data.x_label);
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="12" text-anchor="end">{}</text>"#, MARGIN - 4.0, bx, label(y0));
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="12" text-anchor="end">{}</text>"#, MARGIN - 4.0, MARGIN + 4.0, label(y1));
    let _ = writeln!(s, r#"<text x="14" y="{}" font-size="14" transform="rotate(-90 14 {})">G_W</text>"#, HEIGHT / 2.0, HEIGHT / 2.0);
    s.push_str("</svg>\n");
    Ok(s)
}

fn plot_file(curve: &Path, cfg: Option<&RunConfig>, out: &Path) -> Result<()> {
    let text = fs::read_to_string(curve).map_err(|e| Error::InvalidInput(format!("{}: {e}", curve.display())))?;
    let data = if text.starts_with("h,") {
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| Error::Csv(e.to_string()))?;
            let num = |i: usize| -> Result<f64> {
                rec.get(i).and_then(|v| v.parse().ok()).ok_or_else(|| Error::Csv(format!("malformed row {rec:?}")))
            };
            xs.push(num(0)?);
            ys.push(num(1)?);
        }
        PlotData { x_label: "h".into(), xs, ys, ..Default::default() }
    } else {
        let mut parsed = read_curve_csv(text.as_bytes())?;
        if let Some(h) = cfg.and_then(|c| c.model.as_ref()).and_then(|m| m.lattice().ok()) {
            let k = cfg.map_or(DEFAULT_K, |c| c.k_grid);
            parsed.singularities = find_singularities(&h, &parsed, k)?;
        }
        plot_data_from_curve(&parsed)
    };
    let stem = curve.file_stem().and_then(|s| s.to_str()).unwrap_or("curve");
    fs::write(out.join(format!("{stem}.svg")), emit_plot(&data)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_parses_with_defaults() {
        let cfg = RunConfig::from_json(
            r#"{"model": {"kind": "ssh", "t1": 1.3, "t2": 1.0, "t3": 0.0, "gamma": 1.3333333333333333},
                "sweep": {"variable": "mu", "lo": -1.0, "hi": 0.0, "steps": 11}}"#,
        )
        .unwrap();
        assert_eq!(cfg.k_grid, DEFAULT_K);
        assert_eq!(cfg.oracle, OracleConfig::default());
        assert!(cfg.model().unwrap().lattice().is_ok());
    }

    #[test]
    fn config_rejects_bad_windows() {
        let bad = [
            r#"{"sweep": {"variable": "mu", "lo": 1.0, "hi": 0.0, "steps": 11}}"#,
            r#"{"sweep": {"variable": "mu", "lo": 0.0, "hi": 1.0, "steps": 1}}"#,
            r#"{"sweep": {"variable": "mu", "lo": 0.0, "hi": 1.0, "steps": 5}, "finite": {"sites": 100, "delta": 0.1}}"#,
            r#"{"unknown": 1}"#,
        ];
        for text in bad {
            assert!(matches!(RunConfig::from_json(text), Err(Error::InvalidInput(_))), "{text}");
        }
    }

    #[test]
    fn parameter_override() {
        let m = ModelSpec::Ssh { t1: 1.0, t2: 1.0, t3: 0.2, gamma: 1.0 };
        assert_eq!(m.with_parameter("t1", 1.5).unwrap(), ModelSpec::Ssh { t1: 1.5, t2: 1.0, t3: 0.2, gamma: 1.0 });
        assert!(m.with_parameter("t_l", 1.0).is_err());
    }

    #[test]
    fn comparison_skips_window_edges() {
        let r = |lo: f64, hi: f64| ModulusRange { mu_lo: lo, mu_hi: hi, index: 1 };
        let rows = compare_ranges(&[r(-1.9, -1.5), r(-0.5, -0.2)], &[r(-1.9, -1.51), r(-0.52, -0.2)], -1.9, 0.0, 0.01);
        assert_eq!(rows[0].lo_mismatch, None);
        assert!((rows[0].hi_mismatch.unwrap() - 1.0).abs() < 1e-9);
        assert!((rows[1].lo_mismatch.unwrap() - 2.0).abs() < 1e-9);
    }

    #[test]
    fn plot_guards_empty_curves() {
        assert!(emit_plot(&PlotData::default()).is_err());
        let data = PlotData { x_label: "μ".into(), xs: vec![0.0, 1.0], ys: vec![1.0, 2.0], markers: vec![0.5], bands: vec![(0.1, 0.2)] };
        let svg = emit_plot(&data).unwrap();
        assert!(svg.starts_with("<svg") && svg.contains("polyline") && svg.contains("stroke-dasharray"));
    }

    #[test]
    fn usage_errors_exit_with_config_code() {
        assert_eq!(run(["spectrans", "no-such-command"]), EXIT_CONFIG);
        assert_eq!(run(["spectrans", "metric-sweep"]), EXIT_CONFIG);
    }
}
