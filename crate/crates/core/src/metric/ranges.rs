use rayon::prelude::*;

use super::curve::{find_singularities, MetricCurve, MetricSample};
use super::thermo::{gw_thermo_detailed, n_delta_gw_lattice};
use crate::model::LaurentBlochHamiltonian;
use crate::{Error, Result};

/// μ-interval where the finite-size excess is nonzero; `index` counts from the
/// left starting at 1.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ModulusRange {
    pub mu_lo: f64,
    pub mu_hi: f64,
    pub index: usize,
}

impl ModulusRange {
    pub fn width(&self) -> f64 {
        self.mu_hi - self.mu_lo
    }
}

/// Cell-based scan for `N ΔG_W` ranges.
///
/// Spikes are about `dmu` wide, so each cell of width `cell` is sampled at a
/// spacing just below `dmu`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RangeScan {
    pub mu_lo: f64,
    pub mu_hi: f64,
    /// Grid step of the range detector.
    pub cell: f64,
    pub sites: usize,
    pub dmu: f64,
    pub k_grid: usize,
    pub threshold: f64,
    /// Runs of at most this many empty cells are closed.
    pub max_gap_cells: usize,
    /// Half-width, in units of `dmu`, of the window around each Bloch
    /// exceptional point where no spike is accepted.
    pub ep_guard: f64,
}

impl RangeScan {
    pub fn cells(&self) -> usize {
        ((self.mu_hi - self.mu_lo) / self.cell).round().max(1.0) as usize
    }

    pub fn cell_lo(&self, i: usize) -> f64 {
        self.mu_lo + self.cell * i as f64
    }

    fn sub_samples(&self) -> usize {
        (self.cell / (0.9 * self.dmu)).ceil().max(1.0) as usize
    }

    fn sub_mu(&self, cell: usize, j: usize) -> f64 {
        let n = self.sub_samples();
        self.cell_lo(cell) + self.cell * (j as f64 + 0.5) / n as f64
    }

    fn validate(&self) -> Result<()> {
        if !(self.mu_lo < self.mu_hi) {
            return Err(Error::Precondition("range scan window must satisfy lo < hi".into()));
        }
        if !(self.threshold > 0.0) {
            return Err(Error::Precondition("range threshold must be positive".into()));
        }
        if !(self.cell > 0.0) || !(self.dmu > 0.0) {
            return Err(Error::Precondition("cell and gauge step must be positive".into()));
        }
        if self.dmu >= 2.0 * std::f64::consts::PI / self.sites as f64 {
            return Err(Error::Precondition(format!("gauge step {} is not below 2*pi/{}", self.dmu, self.sites)));
        }
        Ok(())
    }
}

/// Classification of one detector cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CellState {
    Empty,
    /// At least one degeneracy spike; `at` is the first one found.
    Hit { at: f64 },
    /// No spike, but a smooth excess above threshold on most of the cell, as
    /// around Bloch exceptional points. Such cells carry no range information.
    Undefined,
}

const PROBES: usize = 5;
/// A spike must exceed both neighbours at `±SPIKE_OFFSET·dmu` by this factor.
const SPIKE_RATIO: f64 = 4.0;
const SPIKE_OFFSET: f64 = 2.0;

fn excess(h: &LaurentBlochHamiltonian, scan: &RangeScan, mu: f64) -> Result<f64> {
    match n_delta_gw_lattice(h, mu, scan.dmu, scan.sites) {
        Ok(v) => Ok(v),
        Err(Error::Divergent { .. }) => Ok(f64::INFINITY),
        Err(e) => Err(e),
    }
}

/// An isolated degeneracy spike: above threshold and well above the excess a
/// couple of spike widths away on both sides. Smooth backgrounds, including the
/// quadrature tails around Bloch exceptional points, fail the second test.
fn is_spike(h: &LaurentBlochHamiltonian, scan: &RangeScan, eps: &[f64], mu: f64, v: f64) -> Result<bool> {
    if !(v > scan.threshold) || !v.is_finite() {
        return Ok(false);
    }
    if eps.iter().any(|&c| (mu - c).abs() <= scan.ep_guard * scan.dmu) {
        return Ok(false);
    }
    let off = SPIKE_OFFSET * scan.dmu;
    let left = excess(h, scan, mu - off)?;
    if !(v > SPIKE_RATIO * left) {
        return Ok(false);
    }
    Ok(v > SPIKE_RATIO * excess(h, scan, mu + off)?)
}

fn classify_cell(h: &LaurentBlochHamiltonian, scan: &RangeScan, eps: &[f64], cell: usize) -> Result<CellState> {
    let n = scan.sub_samples();
    let probes: Vec<usize> = if n <= PROBES {
        (0..n).collect()
    } else {
        (0..PROBES).map(|p| ((p as f64 + 0.5) * n as f64 / PROBES as f64) as usize).collect()
    };
    let mut probe_values = Vec::with_capacity(probes.len());
    for &j in &probes {
        let mu = scan.sub_mu(cell, j);
        let v = excess(h, scan, mu)?;
        if is_spike(h, scan, eps, mu, v)? {
            return Ok(CellState::Hit { at: mu });
        }
        probe_values.push(v);
    }
    for j in (0..n).filter(|j| !probes.contains(j)) {
        let mu = scan.sub_mu(cell, j);
        if is_spike(h, scan, eps, mu, excess(h, scan, mu)?)? {
            return Ok(CellState::Hit { at: mu });
        }
    }
    probe_values.sort_by(f64::total_cmp);
    if probe_values[probe_values.len() / 2] > scan.threshold {
        return Ok(CellState::Undefined);
    }
    Ok(CellState::Empty)
}

/// Outermost spikes of a hit cell.
fn cell_extent(h: &LaurentBlochHamiltonian, scan: &RangeScan, eps: &[f64], cell: usize) -> Result<(f64, f64)> {
    let n = scan.sub_samples();
    let mut first = None;
    let mut last = None;
    for j in 0..n {
        let mu = scan.sub_mu(cell, j);
        if is_spike(h, scan, eps, mu, excess(h, scan, mu)?)? {
            first.get_or_insert(mu);
            last = Some(mu);
        }
    }
    match (first, last) {
        (Some(a), Some(b)) => Ok((a, b)),
        _ => {
            let mid = scan.cell_lo(cell) + 0.5 * scan.cell;
            Ok((mid, mid))
        }
    }
}

/// Gauges of the Bloch exceptional points inside the scan window, located on
/// the thermodynamic curve sampled at the cell edges.
pub fn bloch_eps_in_window(h: &LaurentBlochHamiltonian, scan: &RangeScan) -> Result<Vec<f64>> {
    if h.bands() == 1 {
        return Ok(Vec::new());
    }
    let n = scan.cells() + 1;
    let samples: Vec<MetricSample> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mu = scan.cell_lo(i);
            let b = gw_thermo_detailed(h, mu, scan.k_grid)?;
            let mut s = MetricSample::thermo(mu, b.gw);
            if b.is_divergent() {
                s.gw_thermo = None;
                s.flags.divergent = true;
            }
            Ok(s)
        })
        .collect::<Result<_>>()?;
    let curve = MetricCurve::new(samples)?;
    if curve.samples.len() < 5 {
        return Ok(Vec::new());
    }
    Ok(find_singularities(h, &curve, scan.k_grid)?.iter().map(|s| s.mu_c).collect())
}

/// Per-cell classification over the scan window.
pub fn scan_cells(h: &LaurentBlochHamiltonian, scan: &RangeScan) -> Result<Vec<CellState>> {
    scan.validate()?;
    let eps = bloch_eps_in_window(h, scan)?;
    (0..scan.cells()).into_par_iter().map(|c| classify_cell(h, scan, &eps, c)).collect()
}

/// Groups cells into runs of hits; more than `max_gap` consecutive cells
/// without a spike end a run. Undefined cells count as gap: a smooth excess is
/// no evidence of degeneracies. Returns inclusive `(first_hit_cell,
/// last_hit_cell)` pairs.
pub fn assemble_runs(cells: &[CellState], max_gap: usize) -> Vec<(usize, usize)> {
    runs_of_hits(cells, max_gap, true)
}

/// Like [`assemble_runs`], but Undefined cells neither extend nor break a run.
/// Used to decide whether two ranges are separated: only empty cells are
/// evidence of a gap.
pub fn assemble_runs_bridging(cells: &[CellState], max_gap: usize) -> Vec<(usize, usize)> {
    runs_of_hits(cells, max_gap, false)
}

fn runs_of_hits(cells: &[CellState], max_gap: usize, undefined_is_gap: bool) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut current: Option<(usize, usize)> = None;
    let mut quiet = 0;
    for (i, c) in cells.iter().enumerate() {
        match c {
            CellState::Hit { .. } => {
                current = Some(match current {
                    Some((a, _)) => (a, i),
                    None => (i, i),
                });
                quiet = 0;
            }
            CellState::Undefined if !undefined_is_gap => {}
            _ => {
                quiet += 1;
                if quiet > max_gap {
                    if let Some(r) = current.take() {
                        runs.push(r);
                    }
                }
            }
        }
    }
    if let Some(r) = current {
        runs.push(r);
    }
    runs
}

/// Maximal μ-intervals with `N ΔG_W` above threshold, ordered left to right.
pub fn agbz_modulus_ranges(h: &LaurentBlochHamiltonian, scan: &RangeScan) -> Result<Vec<ModulusRange>> {
    let cells = scan_cells(h, scan)?;
    ranges_from_cells(h, scan, &cells)
}

/// Turns classified cells into ranges, locating the edges inside the boundary
/// cells at sub-sample resolution.
pub fn ranges_from_cells(h: &LaurentBlochHamiltonian, scan: &RangeScan, cells: &[CellState]) -> Result<Vec<ModulusRange>> {
    runs_to_ranges(h, scan, &assemble_runs(cells, scan.max_gap_cells))
}

fn runs_to_ranges(h: &LaurentBlochHamiltonian, scan: &RangeScan, runs: &[(usize, usize)]) -> Result<Vec<ModulusRange>> {
    let eps = if runs.is_empty() { Vec::new() } else { bloch_eps_in_window(h, scan)? };
    runs.iter()
        .enumerate()
        .map(|(i, &(a, b))| {
            let lo = cell_extent(h, scan, &eps, a)?.0;
            let hi = cell_extent(h, scan, &eps, b)?.1;
            Ok(ModulusRange { mu_lo: lo, mu_hi: hi, index: i + 1 })
        })
        .collect()
}

/// Median finite-size excess (as used by the range detector) over `samples`
/// uniform points of a degeneracy-free window.
pub fn noise_floor(h: &LaurentBlochHamiltonian, lo: f64, hi: f64, samples: usize, sites: usize, dmu: f64) -> Result<f64> {
    if samples == 0 || !(lo <= hi) {
        return Err(Error::Precondition("noise window needs at least one sample".into()));
    }
    let step = if samples > 1 { (hi - lo) / (samples - 1) as f64 } else { 0.0 };
    let mut v: Vec<f64> = (0..samples)
        .into_par_iter()
        .map(|i| n_delta_gw_lattice(h, lo + step * i as f64, dmu, sites))
        .collect::<Result<_>>()?;
    v.sort_by(f64::total_cmp);
    Ok(v[v.len() / 2])
}

/// The `p`-th range from the left (1-based).
pub fn gbz_modulus_range(ranges: &[ModulusRange], p: usize) -> Result<ModulusRange> {
    if p == 0 || ranges.len() < p {
        return Err(Error::NotFound(format!("range {p} requested but only {} found", ranges.len())));
    }
    Ok(ranges[p - 1])
}

/// Gap between the `p`-th range and its left neighbour (the right neighbour when
/// `p = 1`); zero when they have merged into fewer than `p` ranges.
pub fn gbz_gap(ranges: &[ModulusRange], p: usize) -> Result<f64> {
    if p == 0 {
        return Err(Error::InvalidInput("range ordinal starts at 1".into()));
    }
    if ranges.len() < p {
        return Ok(0.0);
    }
    if p >= 2 {
        return Ok(ranges[p - 1].mu_lo - ranges[p - 2].mu_hi);
    }
    match ranges.get(1) {
        Some(next) => Ok(next.mu_lo - ranges[0].mu_hi),
        None => Err(Error::NotFound("no range adjacent to the first one".into())),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TouchScan {
    pub scan: RangeScan,
    /// Ordinal of the GBZ range within the scan window.
    pub gbz_ordinal: usize,
    /// Bisection stops once the parameter bracket is narrower than this.
    pub t_tol: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TouchPoint {
    pub t_c: f64,
    pub bracket: (f64, f64),
    /// Every `(t, gap)` evaluated, in evaluation order.
    pub history: Vec<(f64, f64)>,
}

/// Bisects on the parameter `t` for the point where the GBZ range and its
/// neighbour start to touch. Cells dominated by the smooth excess around a
/// Bloch exceptional point do not separate ranges here.
pub fn ep_touch_scan<F>(family: F, t_lo: f64, t_hi: f64, cfg: &TouchScan) -> Result<TouchPoint>
where
    F: Fn(f64) -> Result<LaurentBlochHamiltonian>,
{
    if !(t_lo < t_hi) || !(cfg.t_tol > 0.0) {
        return Err(Error::Precondition("parameter window must satisfy lo < hi with positive tolerance".into()));
    }
    let mut history = Vec::new();
    let mut gap_at = |t: f64| -> Result<f64> {
        let h = family(t)?;
        let cells = scan_cells(&h, &cfg.scan)?;
        let ranges = runs_to_ranges(&h, &cfg.scan, &assemble_runs_bridging(&cells, cfg.scan.max_gap_cells))?;
        let g = gbz_gap(&ranges, cfg.gbz_ordinal)?;
        history.push((t, g));
        Ok(g)
    };
    let (mut a, mut b) = (t_lo, t_hi);
    let sep_a = gap_at(a)? > 0.0;
    let sep_b = gap_at(b)? > 0.0;
    if sep_a == sep_b {
        return Err(Error::NotBracketed { lo: t_lo, hi: t_hi });
    }
    while b - a > cfg.t_tol {
        let m = 0.5 * (a + b);
        if (gap_at(m)? > 0.0) == sep_a {
            a = m;
        } else {
            b = m;
        }
    }
    Ok(TouchPoint { t_c: 0.5 * (a + b), bracket: (a, b), history })
}
