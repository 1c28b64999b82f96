use std::f64::consts::PI;
use std::io::{Read, Write};

use rayon::prelude::*;

use super::optimize::golden_min;
use super::thermo::{band_splitting, gw_thermo_detailed, DEFAULT_K};
use crate::model::LaurentBlochHamiltonian;
use crate::transport::{fmt_f64, metric_fd};
use crate::{Error, Result};

/// A sample counts as divergent above this multiple of the curve median.
pub const DIVERGENCE_RATIO: f64 = 1e6;
/// Relative band splitting that confirms an exceptional point.
const EP_CONFIRM_TOL: f64 = 1e-5;
/// Candidate k-minima refined per bracket.
const MAX_K_CANDIDATES: usize = 6;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SampleFlags {
    /// Defective k-points or growth beyond [`DIVERGENCE_RATIO`] x median.
    pub divergent: bool,
    /// The finite-size estimate could not be computed.
    pub fd_failed: bool,
}

impl SampleFlags {
    fn encode(&self) -> String {
        let mut parts = Vec::new();
        if self.divergent {
            parts.push("divergent");
        }
        if self.fd_failed {
            parts.push("fd_failed");
        }
        parts.join(";")
    }

    fn decode(s: &str) -> Result<Self> {
        let mut f = SampleFlags::default();
        for tok in s.split(';').filter(|t| !t.is_empty()) {
            match tok {
                "divergent" => f.divergent = true,
                "fd_failed" => f.fd_failed = true,
                other => return Err(Error::Csv(format!("unknown flag '{other}'"))),
            }
        }
        Ok(f)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricSample {
    pub mu: f64,
    /// `None` when divergent.
    pub gw_thermo: Option<f64>,
    pub gw_finite: Option<f64>,
    pub n_delta_gw: Option<f64>,
    pub area: Option<f64>,
    pub flags: SampleFlags,
}

impl MetricSample {
    pub fn thermo(mu: f64, value: f64) -> Self {
        MetricSample { mu, gw_thermo: Some(value), gw_finite: None, n_delta_gw: None, area: None, flags: SampleFlags::default() }
    }
}

/// An exceptional point of the Bloch Hamiltonian on the circle `|β| = e^{μ_c}`.
#[derive(Debug, Clone, PartialEq)]
pub struct EPSingularity {
    pub mu_c: f64,
    /// Momentum of the first EP on the circle.
    pub k_c: Option<f64>,
    /// Number of coalescing eigenvalues.
    pub order: Option<usize>,
    /// Number of distinct momenta hosting an EP at this `μ_c`.
    pub multiplicity: usize,
    pub momenta: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricCurve {
    pub samples: Vec<MetricSample>,
    pub singularities: Vec<EPSingularity>,
    pub minima: Vec<f64>,
    /// Set when there is no interior minimum and the smallest sample sits on
    /// the window edge (possibly unbounded, e.g. unidirectional hopping).
    pub edge_minimum: Option<f64>,
}

impl MetricCurve {
    /// Wraps samples, checking that μ increases strictly.
    pub fn new(samples: Vec<MetricSample>) -> Result<Self> {
        if samples.iter().any(|s| !s.mu.is_finite()) {
            return Err(Error::NonFinite("sample gauge"));
        }
        if samples.windows(2).any(|w| w[1].mu <= w[0].mu) {
            return Err(Error::InvalidInput("sample gauges must increase strictly".into()));
        }
        Ok(MetricCurve { samples, ..Default::default() })
    }

    /// Builds a thermodynamic-only curve from parallel arrays.
    pub fn from_values(mu: &[f64], gw: &[f64]) -> Result<Self> {
        if mu.len() != gw.len() {
            return Err(Error::SizeMismatch { left: mu.len(), right: gw.len() });
        }
        Self::new(mu.iter().zip(gw).map(|(&m, &g)| MetricSample::thermo(m, g)).collect())
    }

    pub fn mus(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.mu).collect()
    }

    fn thermo_or_inf(&self) -> Vec<f64> {
        self.samples
            .iter()
            .map(|s| match (s.flags.divergent, s.gw_thermo) {
                (false, Some(v)) => v,
                _ => f64::INFINITY,
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiniteSize {
    pub sites: usize,
    pub dmu: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanConfig {
    pub mu_lo: f64,
    pub mu_hi: f64,
    pub steps: usize,
    pub k_grid: usize,
    pub finite: Option<FiniteSize>,
}

impl ScanConfig {
    pub fn new(mu_lo: f64, mu_hi: f64, steps: usize) -> Self {
        ScanConfig { mu_lo, mu_hi, steps, k_grid: DEFAULT_K, finite: None }
    }

    pub fn with_finite(mut self, sites: usize, dmu: f64) -> Self {
        self.finite = Some(FiniteSize { sites, dmu });
        self
    }

    pub fn grid(&self) -> Vec<f64> {
        let h = (self.mu_hi - self.mu_lo) / (self.steps - 1) as f64;
        (0..self.steps).map(|i| self.mu_lo + h * i as f64).collect()
    }

    fn validate(&self) -> Result<()> {
        if self.steps < 2 {
            return Err(Error::Precondition("a scan needs at least two points".into()));
        }
        if !(self.mu_lo < self.mu_hi) || !self.mu_lo.is_finite() || !self.mu_hi.is_finite() {
            return Err(Error::Precondition("scan window must satisfy lo < hi".into()));
        }
        if let Some(f) = self.finite {
            if !(f.dmu > 0.0) || f.dmu >= 2.0 * PI / f.sites as f64 {
                return Err(Error::Precondition(format!("gauge step {} must lie in (0, 2*pi/{})", f.dmu, f.sites)));
            }
        }
        Ok(())
    }
}

fn sample_at(h: &LaurentBlochHamiltonian, mu: f64, cfg: &ScanConfig) -> Result<MetricSample> {
    let band = gw_thermo_detailed(h, mu, cfg.k_grid)?;
    let mut s = MetricSample {
        mu,
        gw_thermo: None,
        gw_finite: None,
        n_delta_gw: None,
        area: None,
        flags: SampleFlags { divergent: band.is_divergent(), fd_failed: false },
    };
    if !band.is_divergent() {
        s.gw_thermo = Some(band.gw);
        s.area = Some(band.area);
    }
    if let Some(f) = cfg.finite {
        match metric_fd(h, mu, f.dmu, f.sites) {
            Ok(v) => {
                s.gw_finite = Some(v);
                s.n_delta_gw = s.gw_thermo.map(|t| f.sites as f64 * (v - t).abs());
            }
            Err(_) => s.flags.fd_failed = true,
        }
    }
    Ok(s)
}

fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    Some(values[values.len() / 2])
}

/// Samples the metric on a uniform μ grid and runs the singularity and minimum
/// detectors. Per-sample failures are recorded as flags.
pub fn scan_metric(h: &LaurentBlochHamiltonian, cfg: &ScanConfig) -> Result<MetricCurve> {
    cfg.validate()?;
    let samples: Vec<MetricSample> =
        cfg.grid().into_par_iter().map(|mu| sample_at(h, mu, cfg)).collect::<Result<_>>()?;
    let mut curve = MetricCurve::new(samples)?;
    mark_outliers(&mut curve);
    curve.singularities = find_singularities(h, &curve, cfg.k_grid)?;
    curve.minima = find_minima(&curve);
    if curve.minima.is_empty() {
        curve.edge_minimum = edge_minimum(&curve);
    }
    Ok(curve)
}

fn mark_outliers(curve: &mut MetricCurve) {
    let mut finite: Vec<f64> = curve.samples.iter().filter_map(|s| s.gw_thermo).collect();
    if let Some(med) = median(&mut finite) {
        for s in &mut curve.samples {
            if matches!(s.gw_thermo, Some(v) if v > DIVERGENCE_RATIO * med && med > 0.0) {
                s.flags.divergent = true;
            }
        }
    }
}

fn wrap_k(k: f64) -> f64 {
    k.rem_euclid(2.0 * PI)
}

fn k_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(2.0 * PI);
    d.min(2.0 * PI - d)
}

struct EpHit {
    mu: f64,
    k: f64,
    order: usize,
}

/// Smallest band splitting over the k-grid, relative to the largest eigenvalue.
fn min_splitting(h: &LaurentBlochHamiltonian, mu: f64, k_grid: usize) -> Result<f64> {
    let dk = 2.0 * PI / k_grid as f64;
    let (mut gap, mut scale) = (f64::INFINITY, 0.0f64);
    for j in 0..k_grid {
        let (g, e) = band_splitting(h, dk * j as f64, mu)?;
        gap = gap.min(g);
        scale = e.iter().map(|z| z.norm()).fold(scale, f64::max);
    }
    Ok(if scale > 0.0 { gap / scale } else { 0.0 })
}

fn splitting_or_inf(h: &LaurentBlochHamiltonian, k: f64, mu: f64) -> f64 {
    band_splitting(h, k, mu).map(|r| r.0).unwrap_or(f64::INFINITY)
}

/// Searches the μ-bracket `[lo, hi]` for exceptional points by minimising the
/// band splitting over `(k, μ)`, starting from the k-profile at `start`.
fn eps_in_bracket(h: &LaurentBlochHamiltonian, lo: f64, hi: f64, start: f64, k_grid: usize) -> Result<Vec<EpHit>> {
    let peak = start;
    let dk = 2.0 * PI / k_grid as f64;
    let mut profile = Vec::with_capacity(k_grid);
    let mut scale: f64 = 0.0;
    for j in 0..k_grid {
        let (gap, e) = band_splitting(h, dk * j as f64, peak)?;
        scale = e.iter().map(|z| z.norm()).fold(scale, f64::max);
        profile.push(gap);
    }
    if scale == 0.0 {
        return Ok(Vec::new());
    }
    let mut minima: Vec<(f64, usize)> = (0..k_grid)
        .filter(|&j| {
            let prev = profile[(j + k_grid - 1) % k_grid];
            let next = profile[(j + 1) % k_grid];
            profile[j] < prev && profile[j] <= next
        })
        .map(|j| (profile[j], j))
        .collect();
    minima.sort_by(|a, b| a.0.total_cmp(&b.0));
    minima.truncate(MAX_K_CANDIDATES);

    let mut hits: Vec<EpHit> = Vec::new();
    for (_, j) in minima {
        let (mut k, mut mu) = (dk * j as f64, peak);
        for _ in 0..40 {
            let k_new = golden_min(|x| splitting_or_inf(h, x, mu), k - 2.0 * dk, k + 2.0 * dk, 1e-14);
            let mu_new = golden_min(|m| splitting_or_inf(h, k_new, m), lo, hi, 1e-14);
            let moved = (k_new - k).abs() + (mu_new - mu).abs();
            k = k_new;
            mu = mu_new;
            if moved < 1e-13 {
                break;
            }
        }
        let (gap, e) = band_splitting(h, k, mu)?;
        if gap > EP_CONFIRM_TOL * scale {
            continue;
        }
        let k = wrap_k(k);
        if hits.iter().any(|p| (p.mu - mu).abs() < 1e-6 && k_distance(p.k, k) < 1e-6) {
            continue;
        }
        let radius = (100.0 * gap).max(1e-4 * scale);
        let order = (0..e.len())
            .map(|i| e.iter().filter(|z| (**z - e[i]).norm() <= radius).count())
            .max()
            .unwrap_or(1);
        hits.push(EpHit { mu, k, order });
    }
    Ok(hits)
}

/// Locates exceptional-point singularities of the curve.
///
/// Candidates are divergent samples, interior local maxima of the metric and
/// local minima of the smallest band splitting on the circle. Each candidate is
/// refined by minimising the splitting over `(k, μ)` within its bracket and
/// kept only if the splitting vanishes. Confirmed EPs sharing `μ_c` are merged into one singularity
/// whose multiplicity counts the distinct momenta.
pub fn find_singularities(h: &LaurentBlochHamiltonian, curve: &MetricCurve, k_grid: usize) -> Result<Vec<EPSingularity>> {
    let n = curve.samples.len();
    if n < 5 {
        return Err(Error::Precondition("singularity search needs at least five samples".into()));
    }
    if h.bands() == 1 {
        return Ok(Vec::new());
    }
    let mus = curve.mus();
    let v = curve.thermo_or_inf();
    let split: Vec<f64> = mus.par_iter().map(|&mu| min_splitting(h, mu, k_grid)).collect::<Result<_>>()?;
    let mut candidates: Vec<usize> = Vec::new();
    for i in 0..n {
        let interior = i > 0 && i + 1 < n;
        let diverges = v[i].is_infinite();
        let metric_peak = interior && v[i] > v[i - 1] && v[i] >= v[i + 1];
        let split_dip = interior && split[i] < split[i - 1] && split[i] <= split[i + 1];
        if diverges || metric_peak || split_dip {
            candidates.push(i);
        }
    }
    let found: Vec<Vec<EpHit>> = candidates
        .par_iter()
        .map(|&i| {
            let (a, b) = (i.saturating_sub(1), (i + 1).min(n - 1));
            eps_in_bracket(h, mus[a], mus[b], mus[i], k_grid)
        })
        .collect::<Result<_>>()?;

    let mut out: Vec<EPSingularity> = Vec::new();
    for hit in found.into_iter().flatten() {
        if let Some(s) = out.iter_mut().find(|s| (s.mu_c - hit.mu).abs() < 1e-6) {
            if s.momenta.iter().all(|&k| k_distance(k, hit.k) >= 1e-6) {
                s.momenta.push(hit.k);
                s.multiplicity = s.momenta.len();
                s.order = s.order.max(Some(hit.order));
            }
            continue;
        }
        out.push(EPSingularity { mu_c: hit.mu, k_c: Some(hit.k), order: Some(hit.order), multiplicity: 1, momenta: vec![hit.k] });
    }
    out.sort_by(|a, b| a.mu_c.total_cmp(&b.mu_c));
    Ok(out)
}

/// Interior local minima of the finite thermodynamic values, refined by a
/// three-point parabola.
pub fn find_minima(curve: &MetricCurve) -> Vec<f64> {
    let v = curve.thermo_or_inf();
    let mus = curve.mus();
    let mut out = Vec::new();
    for i in 1..v.len().saturating_sub(1) {
        let (a, b, c) = (v[i - 1], v[i], v[i + 1]);
        if !(a.is_finite() && b.is_finite() && c.is_finite()) || !(b < a && b <= c) {
            continue;
        }
        let (x0, x1, x2) = (mus[i - 1], mus[i], mus[i + 1]);
        let denom = (x1 - x0) * (b - c) - (x1 - x2) * (b - a);
        let mut x = x1;
        if denom != 0.0 {
            let num = (x1 - x0).powi(2) * (b - c) - (x1 - x2).powi(2) * (b - a);
            let cand = x1 - 0.5 * num / denom;
            if cand > x0 && cand < x2 {
                x = cand;
            }
        }
        out.push(x);
    }
    out
}

fn edge_minimum(curve: &MetricCurve) -> Option<f64> {
    let v = curve.thermo_or_inf();
    let (i, _) = v.iter().enumerate().filter(|(_, x)| x.is_finite()).min_by(|a, b| a.1.total_cmp(b.1))?;
    (i == 0 || i + 1 == v.len()).then(|| curve.samples[i].mu)
}

/// The central minimum, i.e. the median by position; requires an odd count.
pub fn gbz_radius_circular(curve: &MetricCurve) -> Result<f64> {
    let minima = if curve.minima.is_empty() { find_minima(curve) } else { curve.minima.clone() };
    if minima.len() % 2 == 0 {
        return Err(Error::AmbiguousCentral { count: minima.len() });
    }
    Ok(minima[minima.len() / 2])
}

/// Convexity verdict on one stretch of samples free of singularities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentConvexity {
    pub mu_lo: f64,
    pub mu_hi: f64,
    pub convex: bool,
    /// Most negative second difference, in units of the segment scale.
    pub worst: f64,
}

/// Relative tolerance on negative second differences.
pub const CONVEXITY_TOL: f64 = 1e-6;

/// Checks `G(μ-h) - 2G(μ) + G(μ+h) ≥ -tol·scale` on every segment separated by
/// singularities or divergent samples. Segments with fewer than three samples are
/// skipped.
pub fn convexity_check(curve: &MetricCurve) -> Vec<SegmentConvexity> {
    let v = curve.thermo_or_inf();
    let mus = curve.mus();
    let cuts: Vec<f64> = curve.singularities.iter().map(|s| s.mu_c).collect();
    let mut segments: Vec<Vec<usize>> = vec![Vec::new()];
    for i in 0..v.len() {
        let crossed = i > 0 && cuts.iter().any(|&c| mus[i - 1] < c && c <= mus[i]);
        if !v[i].is_finite() || crossed {
            segments.push(Vec::new());
        }
        if v[i].is_finite() {
            segments.last_mut().expect("nonempty").push(i);
        }
    }
    segments
        .into_iter()
        .filter(|s| s.len() >= 3)
        .map(|s| {
            let scale = s.iter().map(|&i| v[i].abs()).fold(f64::MIN_POSITIVE, f64::max);
            let worst = s
                .windows(3)
                .map(|w| (v[w[0]] - 2.0 * v[w[1]] + v[w[2]]) / scale)
                .fold(f64::INFINITY, f64::min);
            SegmentConvexity { mu_lo: mus[s[0]], mu_hi: mus[*s.last().expect("nonempty")], convex: worst >= -CONVEXITY_TOL, worst }
        })
        .collect()
}

fn opt_field(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

pub const CURVE_HEADER: [&str; 6] = ["mu", "gw_thermo", "gw_finite", "n_delta_gw", "area", "flags"];

/// Writes samples as `mu,gw_thermo,gw_finite,n_delta_gw,area,flags`; missing
/// values are empty fields.
pub fn write_curve_csv<W: Write>(writer: W, curve: &MetricCurve) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let err = |e: csv::Error| Error::Csv(e.to_string());
    w.write_record(CURVE_HEADER).map_err(err)?;
    for s in &curve.samples {
        w.write_record([
            fmt_f64(s.mu),
            opt_field(s.gw_thermo),
            opt_field(s.gw_finite),
            opt_field(s.n_delta_gw),
            opt_field(s.area),
            s.flags.encode(),
        ])
        .map_err(err)?;
    }
    w.flush()?;
    Ok(())
}

fn parse_opt(field: &str, line: usize) -> Result<Option<f64>> {
    if field.is_empty() {
        return Ok(None);
    }
    field.parse::<f64>().map(Some).map_err(|_| Error::Csv(format!("line {line}: bad number '{field}'")))
}

/// Reads a curve written by [`write_curve_csv`]; detectors are not rerun.
pub fn read_curve_csv<R: Read>(reader: R) -> Result<MetricCurve> {
    let mut r = csv::Reader::from_reader(reader);
    let headers = r.headers().map_err(|e| Error::Csv(e.to_string()))?.clone();
    if headers.iter().collect::<Vec<_>>() != CURVE_HEADER {
        return Err(Error::Csv(format!("unexpected header {:?}", headers)));
    }
    let mut samples = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::Csv(e.to_string()))?;
        let line = i + 2;
        let mu = parse_opt(&rec[0], line)?.ok_or_else(|| Error::Csv(format!("line {line}: missing mu")))?;
        samples.push(MetricSample {
            mu,
            gw_thermo: parse_opt(&rec[1], line)?,
            gw_finite: parse_opt(&rec[2], line)?,
            n_delta_gw: parse_opt(&rec[3], line)?,
            area: parse_opt(&rec[4], line)?,
            flags: SampleFlags::decode(&rec[5])?,
        });
    }
    if samples.is_empty() {
        return Err(Error::Csv("curve has no samples".into()));
    }
    MetricCurve::new(samples).map_err(|e| Error::Csv(e.to_string()))
}
