//! Quasiperiodic non-Hermitian chains with potential
//! `V_j(θ) = Σ_l 2λ_l cos[l(2πωj + θ)]`, `θ = φ + ih`, and hoppings `t e^{∓g}`.
//!
//! Without lattice momenta the gauge-space metric is defined by optimal
//! matching of the spectra at `h ± Δh/2`.

use std::f64::consts::PI;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eigensolve::{eig_dense, CMatrix};
use crate::metric::golden_max;
use crate::model::{Boundary, FiniteLattice};
use crate::transport::{fmt_f64, wasserstein2_points};
use crate::{Error, Result, C64};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuasiModel {
    /// `λ_l` for harmonics `l = 1..d`.
    pub harmonics: Vec<f64>,
    pub omega: f64,
    pub phi: f64,
    pub h: f64,
    pub g: f64,
    pub sites: usize,
}

impl QuasiModel {
    pub fn golden_mean() -> f64 {
        (5f64.sqrt() - 1.0) / 2.0
    }

    /// Single-harmonic model at irrational `ω` with `φ = h = g = 0`.
    pub fn aubry_andre(lambda: f64, sites: usize) -> Self {
        Self { harmonics: vec![lambda], omega: Self::golden_mean(), phi: 0.0, h: 0.0, g: 0.0, sites }
    }

    pub fn with_h(&self, h: f64) -> Self {
        Self { h, ..self.clone() }
    }

    pub fn with_phi(&self, phi: f64) -> Self {
        Self { phi, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.harmonics.is_empty() {
            return Err(Error::InvalidModel("at least one harmonic is required".into()));
        }
        if self.sites < 2 {
            return Err(Error::InvalidModel("a ring needs at least two sites".into()));
        }
        let all = self.harmonics.iter().chain([&self.omega, &self.phi, &self.h, &self.g]);
        if all.into_iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("quasiperiodic model parameters"));
        }
        Ok(())
    }

    /// On-site potential `V_j(φ + ih)`.
    pub fn potential(&self, j: usize) -> C64 {
        let theta = C64::new(self.phi, self.h);
        let x = 2.0 * PI * self.omega * j as f64;
        self.harmonics
            .iter()
            .enumerate()
            .map(|(l, lam)| 2.0 * lam * ((l + 1) as f64 * (theta + x)).cos())
            .sum()
    }
}

/// Ring with `H[j][j+1] = e^{-g}`, `H[j+1][j] = e^{g}` and diagonal `V_j(θ)`.
pub fn build_quasiperiodic(q: &QuasiModel) -> Result<FiniteLattice> {
    q.validate()?;
    let n = q.sites;
    let mut m = CMatrix::zeros(n, n);
    for j in 0..n {
        m[(j, j)] += q.potential(j);
        m[(j, (j + 1) % n)] += C64::new((-q.g).exp(), 0.0);
        m[((j + 1) % n, j)] += C64::new(q.g.exp(), 0.0);
    }
    Ok(FiniteLattice { matrix: m, boundary: Boundary::Periodic, gauge: 0.0, sites: n })
}

/// Fourier dual: potential `2cos(2πωj + ig)` and range-`l` hoppings
/// `λ_l e^{∓ilθ}` (upper/lower). The spectra coincide when `ωN` is an integer.
pub fn build_dual(q: &QuasiModel) -> Result<FiniteLattice> {
    q.validate()?;
    let n = q.sites;
    if q.harmonics.len() >= n {
        return Err(Error::WrapAround { sites: n, range: q.harmonics.len() });
    }
    let theta = C64::new(q.phi, q.h);
    let i = C64::new(0.0, 1.0);
    let mut m = CMatrix::zeros(n, n);
    for j in 0..n {
        m[(j, j)] += 2.0 * (C64::new(2.0 * PI * q.omega * j as f64, q.g)).cos();
        for (l, lam) in q.harmonics.iter().enumerate() {
            let r = l + 1;
            let phase = r as f64 * theta * i;
            m[(j, (j + r) % n)] += lam * (-phase).exp();
            m[((j + r) % n, j)] += lam * phase.exp();
        }
    }
    Ok(FiniteLattice { matrix: m, boundary: Boundary::Periodic, gauge: 0.0, sites: n })
}

pub fn spectrum(q: &QuasiModel) -> Result<Vec<C64>> {
    eig_dense(&build_quasiperiodic(q)?.matrix)
}

/// `W²(spec(h + Δh/2), spec(h - Δh/2)) / Δh²` with exact matching.
pub fn gw_h(q: &QuasiModel, h: f64, dh: f64) -> Result<f64> {
    if !(dh > 0.0) || !dh.is_finite() {
        return Err(Error::Precondition("Δh must be positive".into()));
    }
    let plus = spectrum(&q.with_h(h + dh / 2.0))?;
    let minus = spectrum(&q.with_h(h - dh / 2.0))?;
    Ok(wasserstein2_points(&plus, &minus)? / (dh * dh))
}

/// `ln det(H - E)` of the periodic tridiagonal ring in O(N), returned as
/// `(ln|det|, arg det)`.
fn log_det_ring(q: &QuasiModel, e: C64) -> (f64, f64) {
    // det = tr Π T_j - (-1)^N (Π a + Π b), T_j = [[d_j, -a b], [1, 0]], a b = 1
    let n = q.sites;
    let mut t = [[C64::new(1.0, 0.0), C64::new(0.0, 0.0)], [C64::new(0.0, 0.0), C64::new(1.0, 0.0)]];
    let mut log_scale = 0.0;
    for j in 0..n {
        let d = q.potential(j) - e;
        let r0 = [d * t[0][0] - t[1][0], d * t[0][1] - t[1][1]];
        t = [r0, t[0]];
        let s = t.iter().flatten().map(|z| z.norm()).fold(0.0, f64::max);
        if s > 0.0 {
            log_scale += s.ln();
            for z in t.iter_mut().flatten() {
                *z /= s;
            }
        }
    }
    let sign = if n.is_multiple_of(2) { 1.0 } else { -1.0 };
    let corner = sign * ((n as f64 * q.g - log_scale).exp() + (-(n as f64) * q.g - log_scale).exp());
    let reduced = t[0][0] + t[1][1] - corner;
    (log_scale + reduced.norm().ln(), reduced.arg())
}

/// Smallest φ grid used by [`winding_phi`].
pub const WINDING_START_GRID: usize = 256;
/// Largest φ grid before the energy is declared to lie on the spectrum.
const WINDING_MAX_GRID: usize = 1 << 22;

fn phase_winding(q: &QuasiModel, e: C64, grid: usize) -> (f64, f64, f64) {
    let args: Vec<(f64, f64)> = (0..=grid)
        .into_par_iter()
        .map(|i| log_det_ring(&q.with_phi(q.phi + 2.0 * PI * i as f64 / grid as f64), e))
        .collect();
    let mut total = 0.0;
    let mut worst = (0.0, q.phi);
    for i in 0..grid {
        let mut d = args[i + 1].1 - args[i].1;
        d -= 2.0 * PI * (d / (2.0 * PI)).round();
        total += d;
        if d.abs() > worst.0 {
            worst = (d.abs(), q.phi + 2.0 * PI * i as f64 / grid as f64);
        }
    }
    (total / (2.0 * PI * q.sites as f64), worst.0, worst.1)
}

/// Winding of `det(H(φ + ih) - E_B)` around the φ loop, per site.
///
/// The grid starts at `grid` points and doubles until every phase increment is
/// below π/2 and the rounded integer has been reproduced twice.
pub fn winding_phi(q: &QuasiModel, e_b: C64, grid: usize) -> Result<i64> {
    q.validate()?;
    if grid < 4 {
        return Err(Error::Precondition("φ grid needs at least four points".into()));
    }
    let mut grid = grid;
    let mut last: Option<i64> = None;
    let mut repeats = 0;
    loop {
        let (w, worst, at) = phase_winding(q, e_b, grid);
        if worst < PI / 2.0 {
            let r = w.round() as i64;
            if last == Some(r) {
                repeats += 1;
                if repeats >= 2 {
                    return Ok(r);
                }
            } else {
                last = Some(r);
                repeats = 0;
            }
        }
        if grid >= WINDING_MAX_GRID {
            return Err(Error::OnSpectrum { phi: at });
        }
        grid *= 2;
    }
}

/// Smallest number of transfer steps accepted by [`lyapunov_exponent`].
pub const MIN_TRANSFER_STEPS: usize = 10_000;

/// Growth rate `(1/M) ln‖Π T_j‖` of the transfer matrices
/// `T_j = [[E - V_j, -1], [1, 0]]` along the chain. The non-reciprocity `g`
/// is removed by the similarity `ψ_j → e^{gj} ψ_j` and does not enter.
pub fn lyapunov_exponent(q: &QuasiModel, e_b: C64, steps: usize) -> Result<f64> {
    q.validate()?;
    if steps < MIN_TRANSFER_STEPS {
        return Err(Error::Precondition(format!("need at least {MIN_TRANSFER_STEPS} transfer steps")));
    }
    let mut v = [C64::new(1.0, 0.0), C64::new(0.0, 0.0)];
    let mut log_growth = 0.0;
    for j in 0..steps {
        let d = e_b - q.potential(j);
        v = [d * v[0] - v[1], v[0]];
        let s = v[0].norm().max(v[1].norm());
        if !s.is_finite() || s == 0.0 {
            return Err(Error::Overflow { step: j });
        }
        log_growth += s.ln();
        v[0] /= s;
        v[1] /= s;
    }
    Ok(log_growth / steps as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuasiSample {
    pub h: f64,
    pub gw_h: f64,
    /// Whether the sample is one of the local refinement points.
    pub refined: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HScan {
    pub h_lo: f64,
    pub h_hi: f64,
    pub steps: usize,
    pub dh: f64,
    /// Absolute `gw_h` level that marks the onset of complex spectra.
    pub threshold: f64,
}

/// Default `gw_h` onset level. Below the transition the spectrum does not
/// move with `h` and the metric is zero up to rounding.
pub const DEFAULT_THRESHOLD: f64 = 1e-2;
pub const DEFAULT_DH: f64 = 1e-4;
/// Relative size of a negative second difference that counts as a kink.
const KINK_TOL: f64 = 1e-3;
/// Slope fraction that ends the onset step.
const ONSET_SLOPE_DROP: f64 = 0.25;

impl HScan {
    pub fn new(h_lo: f64, h_hi: f64, steps: usize) -> Self {
        Self { h_lo, h_hi, steps, dh: DEFAULT_DH, threshold: DEFAULT_THRESHOLD }
    }

    fn validate(&self) -> Result<()> {
        if self.steps < 50 {
            return Err(Error::Precondition("an h scan needs at least 50 samples".into()));
        }
        if !(self.h_lo < self.h_hi) {
            return Err(Error::Precondition("h window must satisfy lo < hi".into()));
        }
        if !(self.threshold > 0.0) {
            return Err(Error::Precondition("threshold must be positive".into()));
        }
        Ok(())
    }

    fn step(&self) -> f64 {
        (self.h_hi - self.h_lo) / (self.steps - 1) as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HTransition {
    pub h_c: f64,
    /// Peaks and kinks of `gw_h` above the onset, ascending.
    pub singularities: Vec<f64>,
    pub samples: Vec<QuasiSample>,
}

pub fn sweep_gw_h(q: &QuasiModel, hs: &[f64], dh: f64) -> Result<Vec<QuasiSample>> {
    hs.par_iter().map(|&h| Ok(QuasiSample { h, gw_h: gw_h(q, h, dh)?, refined: false })).collect()
}

/// Locates the onset `h_c` (first crossing of the threshold, bisected) and the
/// singularities above it.
///
/// Right above `h_c` the metric climbs steeply to a plateau; that step belongs
/// to the transition itself and is skipped. Beyond it every local maximum and
/// every kink (negative second difference that is a local minimum) is a
/// candidate. Peaks are refined by golden-section search, kinks by a fine
/// local scan of the second difference.
pub fn h_transition_scan(q: &QuasiModel, scan: &HScan) -> Result<HTransition> {
    q.validate()?;
    scan.validate()?;
    let step = scan.step();
    let hs: Vec<f64> = (0..scan.steps).map(|i| scan.h_lo + step * i as f64).collect();
    let mut samples = sweep_gw_h(q, &hs, scan.dh)?;
    let v: Vec<f64> = samples.iter().map(|s| s.gw_h).collect();
    let first = v
        .iter()
        .position(|&x| x > scan.threshold)
        .ok_or_else(|| Error::NotFound(format!("gw_h stays below {} on [{}, {}]", scan.threshold, scan.h_lo, scan.h_hi)))?;
    let eval = |h: f64| gw_h(q, h, scan.dh);
    let h_c = if first == 0 {
        hs[0]
    } else {
        let (mut a, mut b) = (hs[first - 1], hs[first]);
        for _ in 0..10 {
            let mid = 0.5 * (a + b);
            let x = eval(mid)?;
            samples.push(QuasiSample { h: mid, gw_h: x, refined: true });
            if x > scan.threshold {
                b = mid;
            } else {
                a = mid;
            }
        }
        0.5 * (a + b)
    };

    let slope = |i: usize| (v[i + 1] - v[i]) / step;
    let mut end = first;
    let mut steepest = 0.0f64;
    while end + 1 < v.len() {
        let s = slope(end.max(1) - 1).max(slope(end));
        steepest = steepest.max(s);
        if slope(end) < ONSET_SLOPE_DROP * steepest {
            break;
        }
        end += 1;
    }

    let d2 = |i: usize| v[i + 1] - 2.0 * v[i] + v[i - 1];
    let mut peaks = Vec::new();
    let mut kinks = Vec::new();
    for i in (end + 1).max(2)..v.len().saturating_sub(2) {
        if v[i] >= v[i - 1] && v[i] > v[i + 1] {
            peaks.push(i);
        } else if d2(i) < -KINK_TOL * v[i].abs() && d2(i) <= d2(i - 1) && d2(i) <= d2(i + 1) {
            kinks.push(i);
        }
    }
    kinks.retain(|k| peaks.iter().all(|p| k.abs_diff(*p) > 2));

    let mut singular = Vec::new();
    for &i in &peaks {
        let at = golden_max(|h| eval(h).unwrap_or(f64::NEG_INFINITY), hs[i - 1], hs[i + 1], 1e-5);
        singular.push(at);
    }
    for &i in &kinks {
        let fine = step / 5.0;
        let grid: Vec<f64> = (-6..=6).map(|j| hs[i] + fine * j as f64).collect();
        let fv = sweep_gw_h(q, &grid, scan.dh)?;
        let best = (1..grid.len() - 1)
            .min_by(|&a, &b| {
                let c = |j: usize| fv[j + 1].gw_h - 2.0 * fv[j].gw_h + fv[j - 1].gw_h;
                c(a).total_cmp(&c(b))
            })
            .expect("fine grid has interior points");
        singular.push(grid[best]);
        samples.extend(fv.into_iter().map(|s| QuasiSample { refined: true, ..s }));
    }
    singular.sort_by(f64::total_cmp);
    samples.sort_by(|a, b| a.h.total_cmp(&b.h));
    Ok(HTransition { h_c, singularities: singular, samples })
}

pub fn write_sweep_csv<W: Write>(writer: W, samples: &[QuasiSample]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let err = |e: csv::Error| Error::Csv(e.to_string());
    w.write_record(["h", "gw_h", "flags"]).map_err(err)?;
    for s in samples {
        w.write_record([fmt_f64(s.h), fmt_f64(s.gw_h), if s.refined { "refined".into() } else { String::new() }])
            .map_err(err)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::wasserstein2_points;

    fn fib_model(harmonics: Vec<f64>) -> QuasiModel {
        QuasiModel { harmonics, omega: 55.0 / 89.0, phi: 0.37, h: 0.25, g: 0.15, sites: 89 }
    }

    #[test]
    fn free_ring_spectrum() {
        let q = QuasiModel { harmonics: vec![0.0], ..QuasiModel::aubry_andre(0.0, 12) };
        let mut got: Vec<f64> = spectrum(&q).unwrap().iter().map(|z| z.re).collect();
        let mut want: Vec<f64> = (0..12).map(|j| 2.0 * (2.0 * PI * j as f64 / 12.0).cos()).collect();
        got.sort_by(f64::total_cmp);
        want.sort_by(f64::total_cmp);
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(gw_h(&q, 0.4, 1e-4).unwrap(), 0.0);
    }

    #[test]
    fn hermitian_aubry_andre_is_real() {
        let q = QuasiModel::aubry_andre(0.5, 89);
        assert!(spectrum(&q).unwrap().iter().all(|z| z.im.abs() < 1e-10));
        let loops = spectrum(&q.with_h(0.8)).unwrap();
        assert!(loops.iter().any(|z| z.im.abs() > 1e-3));
    }

    #[test]
    fn dual_spectrum_matches_at_commensurate_closure() {
        for harmonics in [vec![0.5], vec![0.5, 0.3]] {
            let q = fib_model(harmonics);
            let a = spectrum(&q).unwrap();
            let b = eig_dense(&build_dual(&q).unwrap().matrix).unwrap();
            assert!(wasserstein2_points(&a, &b).unwrap().sqrt() < 1e-6);
        }
    }

    #[test]
    fn dual_hopping_range_follows_harmonics() {
        let one = build_dual(&fib_model(vec![0.5])).unwrap().matrix;
        assert_eq!(one[(0, 2)], C64::new(0.0, 0.0));
        assert!(one[(0, 1)].norm() > 0.0);
        let two = build_dual(&fib_model(vec![0.5, 0.3])).unwrap().matrix;
        assert!(two[(0, 2)].norm() > 0.0 && two[(2, 0)].norm() > 0.0);
    }

    #[test]
    fn ring_determinant_matches_lu() {
        for (sites, g) in [(89, 0.15), (34, -0.4), (7, 0.0)] {
            let q = QuasiModel { sites, g, ..fib_model(vec![0.5, 0.2]) };
            let e = C64::new(0.3, 0.1);
            let m = build_quasiperiodic(&q).unwrap().matrix;
            let shifted = CMatrix::from_fn(sites, sites, |i, j| if i == j { m[(i, j)] - e } else { m[(i, j)] });
            let want = shifted.det().unwrap();
            let (log_abs, arg) = log_det_ring(&q, e);
            assert!((log_abs - want.norm().ln()).abs() < 1e-9, "{log_abs} vs {}", want.norm().ln());
            let d = (arg - want.arg()).rem_euclid(2.0 * PI);
            assert!(d.min(2.0 * PI - d) < 1e-9);
        }
    }

    #[test]
    fn winding_panel() {
        let q = QuasiModel::aubry_andre(0.5, 89);
        assert_eq!(winding_phi(&q.with_h(0.3), C64::new(0.0, 0.0), WINDING_START_GRID).unwrap(), 0);
        assert_eq!(winding_phi(&q.with_h(1.0), C64::new(0.0, 0.0), WINDING_START_GRID).unwrap().abs(), 1);
        assert_eq!(winding_phi(&q.with_h(1.0), C64::new(10.0, 0.0), WINDING_START_GRID).unwrap(), 0);
        assert!(winding_phi(&q, C64::new(0.0, 0.0), 2).is_err());
    }

    #[test]
    fn lyapunov_exponents() {
        let cases = [(0.5, 0.8), (2.0, 0.0), (0.5, 0.0)];
        for (lam, h) in cases {
            let q = QuasiModel::aubry_andre(lam, 233).with_h(h);
            let sp = spectrum(&q).unwrap();
            let e = sp[sp.len() / 3];
            let gamma = lyapunov_exponent(&q, e, 100_000).unwrap();
            let formula = f64::ln(lam) + h;
            assert!((gamma - formula.max(0.0)).abs() < 0.01, "λ={lam} h={h}: {gamma} vs {formula}");
        }
        let q = QuasiModel::aubry_andre(0.5, 10);
        assert!(matches!(lyapunov_exponent(&q, C64::new(0.0, 0.0), 100), Err(Error::Precondition(_))));
    }

    #[test]
    fn metric_vanishes_below_transition() {
        let q = QuasiModel::aubry_andre(0.5, 89);
        assert!(gw_h(&q, 0.3, 1e-4).unwrap() < DEFAULT_THRESHOLD);
        assert!(gw_h(&q, 0.3, 0.0).is_err());
    }

    #[test]
    fn scan_without_potential_finds_nothing() {
        let q = QuasiModel { harmonics: vec![0.0], ..QuasiModel::aubry_andre(0.0, 21) };
        let err = h_transition_scan(&q, &HScan::new(0.1, 1.0, 50)).unwrap_err();
        assert!(matches!(err, Error::NotFound(_)));
        assert!(h_transition_scan(&q, &HScan::new(0.1, 1.0, 10)).is_err());
    }

    #[test]
    fn sweep_csv_columns() {
        let mut buf = Vec::new();
        write_sweep_csv(&mut buf, &[QuasiSample { h: 0.5, gw_h: 0.0, refined: true }]).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("h,gw_h,flags\n"));
        assert!(s.contains("refined"));
    }
}
