use std::f64::consts::PI;

use crate::eigensolve::{eig_frame, CMatrix};
use crate::model::{bloch_eigenvalues, small_eigenvalues, LaurentBlochHamiltonian};
use crate::transport::metric_fd;
use crate::{Error, Result, C64};

/// Default number of k-points for thermodynamic quadratures.
pub const DEFAULT_K: usize = 512;
const MIN_K: usize = 64;
/// Relative half-splitting below which a 2x2 block counts as defective.
const EP_SPLIT_2X2: f64 = 1e-7;

fn check_k(k_grid: usize) -> Result<()> {
    if k_grid < MIN_K {
        return Err(Error::Precondition(format!("k grid of {k_grid} points is below the minimum {MIN_K}")));
    }
    Ok(())
}

fn beta(k: f64, mu: f64) -> C64 {
    C64::from_polar(mu.exp(), k)
}

/// `Σ_n n² |t_n|² e^{2nμ}` for a single-band model.
pub fn gw_closed_singleband(h: &LaurentBlochHamiltonian, mu: f64) -> Result<f64> {
    if h.bands() != 1 {
        return Err(Error::WrongArity { bands: h.bands() });
    }
    Ok(h.terms().map(|(n, t)| {
        let n = n as f64;
        n * n * t[(0, 0)].norm_sqr() * (2.0 * n * mu).exp()
    }).sum())
}

/// Eigenvalues and their k-derivatives at one Bloch point.
#[derive(Debug, Clone)]
pub struct BandPoint {
    pub values: Vec<C64>,
    /// `∂E_i/∂k` aligned with `values`.
    pub dk: Vec<C64>,
}

/// Eigenvalues and biorthogonal derivatives `<L_i|∂H/∂k|R_i>` at `β = e^{ik+μ}`.
///
/// Fails with a near-EP error when `H(β)` is (numerically) defective.
pub fn band_derivatives(h: &LaurentBlochHamiltonian, k: f64, mu: f64) -> Result<BandPoint> {
    let b = beta(k, mu);
    let a = h.evaluate(b)?;
    let da = h.dk(b)?;
    match h.bands() {
        1 => Ok(BandPoint { values: vec![a[(0, 0)]], dk: vec![da[(0, 0)]] }),
        2 => derivatives_2x2(&a, &da),
        _ => derivatives_general(&a, &da),
    }
}

fn derivatives_2x2(a: &CMatrix, da: &CMatrix) -> Result<BandPoint> {
    let (p, q, r, s) = (a[(0, 0)], a[(0, 1)], a[(1, 0)], a[(1, 1)]);
    let half_tr = (p + s) * 0.5;
    let half_diff = (p - s) * 0.5;
    let root = (half_diff * half_diff + q * r).sqrt();
    let scale = a.max_abs();
    if root.norm() <= EP_SPLIT_2X2 * scale {
        let off = half_diff.norm().max(q.norm()).max(r.norm());
        if off <= EP_SPLIT_2X2 * scale {
            // scalar block: degenerate but diagonalizable, derivatives split by H'
            let d = small_eigenvalues(da)?;
            return Ok(BandPoint { values: vec![half_tr, half_tr], dk: d });
        }
        return Err(Error::NearExceptionalPoint { condition: scale / root.norm().max(f64::MIN_POSITIVE) });
    }
    let (dp, dq, dr, ds) = (da[(0, 0)], da[(0, 1)], da[(1, 0)], da[(1, 1)]);
    let droot = (half_diff * (dp - ds) * 0.5 + (dq * r + q * dr) * 0.5) / root;
    let dtr = (dp + ds) * 0.5;
    Ok(BandPoint { values: vec![half_tr + root, half_tr - root], dk: vec![dtr + droot, dtr - droot] })
}

fn derivatives_general(a: &CMatrix, da: &CMatrix) -> Result<BandPoint> {
    let f = eig_frame(a)?;
    let m = a.nrows();
    let mut dk = Vec::with_capacity(m);
    for i in 0..m {
        let l = f.left.col(i);
        let r = f.right.col(i);
        let mut acc = C64::new(0.0, 0.0);
        for row in 0..m {
            let mut hr = C64::new(0.0, 0.0);
            for col in 0..m {
                hr += da[(row, col)] * r[col];
            }
            acc += l[row].conj() * hr;
        }
        dk.push(acc);
    }
    Ok(BandPoint { values: f.values, dk })
}

/// Trapezoidal k-integrals at fixed μ: the metric, the signed area and the
/// number of k-points skipped as defective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandIntegral {
    pub gw: f64,
    pub area: f64,
    pub flagged: usize,
    pub k_points: usize,
}

impl BandIntegral {
    pub fn is_divergent(&self) -> bool {
        self.flagged > 0
    }
}

/// Band-summed `(1/2π)∫|∂E_i/∂k|² dk` and `Σ_i ∫ Re E_i ∂_k Im E_i dk` with
/// defective k-points counted instead of aborting.
pub fn gw_thermo_detailed(h: &LaurentBlochHamiltonian, mu: f64, k_grid: usize) -> Result<BandIntegral> {
    check_k(k_grid)?;
    if !mu.is_finite() {
        return Err(Error::NonFinite("gauge"));
    }
    let w = 2.0 * PI / k_grid as f64;
    let (mut gw, mut area, mut flagged) = (0.0, 0.0, 0);
    for j in 0..k_grid {
        let k = w * j as f64;
        match band_derivatives(h, k, mu) {
            Ok(bp) => {
                for (e, d) in bp.values.iter().zip(&bp.dk) {
                    gw += d.norm_sqr();
                    area += e.re * d.im;
                }
            }
            Err(Error::NearExceptionalPoint { .. }) => flagged += 1,
            Err(e) => return Err(e),
        }
    }
    Ok(BandIntegral { gw: gw * w / (2.0 * PI), area: area * w, flagged, k_points: k_grid })
}

/// Thermodynamic metric; any defective k-point makes the sample divergent.
pub fn gw_thermo(h: &LaurentBlochHamiltonian, mu: f64, k_grid: usize) -> Result<f64> {
    let r = gw_thermo_detailed(h, mu, k_grid)?;
    if r.is_divergent() {
        return Err(Error::Divergent { mu, flagged: r.flagged });
    }
    Ok(r.gw)
}

/// Signed area enclosed by the bands, oriented by increasing k.
pub fn spectral_area(h: &LaurentBlochHamiltonian, mu: f64, k_grid: usize) -> Result<f64> {
    let r = gw_thermo_detailed(h, mu, k_grid)?;
    if r.is_divergent() {
        return Err(Error::Divergent { mu, flagged: r.flagged });
    }
    Ok(r.area)
}

/// `∫ Tr(H M H† M⁻¹) dk` with `M = U U†` built from the eigenframe.
fn trace_integral(h: &LaurentBlochHamiltonian, mu: f64, k_grid: usize) -> Result<f64> {
    let w = 2.0 * PI / k_grid as f64;
    let mut total = 0.0;
    for j in 0..k_grid {
        let a = h.evaluate(beta(w * j as f64, mu))?;
        let f = eig_frame(&a).map_err(|e| match e {
            Error::NearExceptionalPoint { .. } => Error::Divergent { mu, flagged: 1 },
            other => other,
        })?;
        let m = f.right.matmul(&f.right.adjoint());
        let m_inv = f.left.matmul(&f.left.adjoint());
        let t = a.matmul(&m).matmul(&a.adjoint()).matmul(&m_inv).trace();
        total += t.re;
    }
    Ok(total * w)
}

/// Metric from the second μ-difference of the k-integrated trace, `(1/8π) d²/dμ² ∫ Tr(...)`.
pub fn gw_multiband_trace(h: &LaurentBlochHamiltonian, mu: f64, k_grid: usize, dmu: f64) -> Result<f64> {
    check_k(k_grid)?;
    if !(dmu > 0.0) {
        return Err(Error::Precondition("trace-formula step must be positive".into()));
    }
    let plus = trace_integral(h, mu + dmu, k_grid)?;
    let mid = trace_integral(h, mu, k_grid)?;
    let minus = trace_integral(h, mu - dmu, k_grid)?;
    Ok((plus - 2.0 * mid + minus) / (dmu * dmu) / (8.0 * PI))
}

/// `N |metric_fd - gw_thermo|`; a divergent thermodynamic value propagates as
/// [`Error::Divergent`].
pub fn n_delta_gw(h: &LaurentBlochHamiltonian, mu: f64, dmu: f64, sites: usize, k_grid: usize) -> Result<f64> {
    let fd = metric_fd(h, mu, dmu, sites)?;
    let thermo = gw_thermo(h, mu, k_grid)?;
    Ok(sites as f64 * (fd - thermo).abs())
}

/// Bloch sum `(1/N) Σ_j Σ_i |∂E_i/∂k(k_j)|²` over the ring momenta `k_j = 2πj/N`;
/// the finite-size metric without degeneracy corrections.
pub fn gw_lattice(h: &LaurentBlochHamiltonian, mu: f64, sites: usize) -> Result<f64> {
    if sites == 0 {
        return Err(Error::InvalidInput("lattice needs at least one site".into()));
    }
    let w = 2.0 * PI / sites as f64;
    let mut total = 0.0;
    for j in 0..sites {
        match band_derivatives(h, w * j as f64, mu) {
            Ok(bp) => total += bp.dk.iter().map(|d| d.norm_sqr()).sum::<f64>(),
            Err(Error::NearExceptionalPoint { .. }) => return Err(Error::Divergent { mu, flagged: 1 }),
            Err(e) => return Err(e),
        }
    }
    Ok(total / sites as f64)
}

/// `N |metric_fd - gw_lattice|`: the finite-size excess measured against the
/// Bloch sum on the same momenta. It agrees with [`n_delta_gw`] to exponential
/// accuracy away from Bloch exceptional points and, unlike it, carries no
/// quadrature mismatch near them.
pub fn n_delta_gw_lattice(h: &LaurentBlochHamiltonian, mu: f64, dmu: f64, sites: usize) -> Result<f64> {
    let fd = metric_fd(h, mu, dmu, sites)?;
    let reference = gw_lattice(h, mu, sites)?;
    Ok(sites as f64 * (fd - reference).abs())
}

/// Relative tolerance for accepting a pair as degenerate.
const DEGENERACY_TOL: f64 = 1e-6;

/// Predicted `N ΔG_W` from exact degeneracies `E(k') = E(k'')` at gauge μ:
/// `Σ_pairs |∂_μE(k') - ∂_μE(k'')|² / 2`, with `∂_μE = -i ∂_kE`.
///
/// For multiband models the degenerate bands are the closest pair of
/// eigenvalues between the two momenta. Several pairs are summed independently.
pub fn degeneracy_correction(h: &LaurentBlochHamiltonian, mu: f64, pairs: &[(f64, f64)]) -> Result<f64> {
    let mut total = 0.0;
    for &(k1, k2) in pairs {
        let a = band_derivatives(h, k1, mu)?;
        let b = band_derivatives(h, k2, mu)?;
        let scale = a.values.iter().chain(&b.values).map(|z| z.norm()).fold(1e-300, f64::max);
        let mut best = (f64::INFINITY, 0, 0);
        for (i, ei) in a.values.iter().enumerate() {
            for (j, ej) in b.values.iter().enumerate() {
                let d = (ei - ej).norm();
                if d < best.0 {
                    best = (d, i, j);
                }
            }
        }
        if best.0 > DEGENERACY_TOL * scale {
            return Err(Error::Precondition(format!(
                "E({k1}) and E({k2}) differ by {:.3e}; not a degenerate pair",
                best.0
            )));
        }
        let i = C64::new(0.0, 1.0);
        let d1 = -i * a.dk[best.1];
        let d2 = -i * b.dk[best.2];
        total += (d1 - d2).norm_sqr() / 2.0;
    }
    Ok(total)
}

/// Largest `N ΔG_W` over `[lo, hi]` sampled at spacing `step`.
pub fn peak_n_delta_gw(
    h: &LaurentBlochHamiltonian,
    lo: f64,
    hi: f64,
    step: f64,
    dmu: f64,
    sites: usize,
    k_grid: usize,
) -> Result<(f64, f64)> {
    if !(step > 0.0) || !(hi >= lo) {
        return Err(Error::InvalidInput("empty sampling window".into()));
    }
    let n = ((hi - lo) / step).floor() as usize + 1;
    let mut best = (lo, f64::NEG_INFINITY);
    for i in 0..n {
        let mu = lo + step * i as f64;
        let v = n_delta_gw(h, mu, dmu, sites, k_grid)?;
        if v > best.1 {
            best = (mu, v);
        }
    }
    Ok(best)
}

/// Smallest pairwise distance between the Bloch eigenvalues at `(k, μ)`.
pub(crate) fn band_splitting(h: &LaurentBlochHamiltonian, k: f64, mu: f64) -> Result<(f64, Vec<C64>)> {
    let e = bloch_eigenvalues(h, k, mu)?;
    let mut gap = f64::INFINITY;
    for i in 0..e.len() {
        for j in i + 1..e.len() {
            gap = gap.min((e[i] - e[j]).norm());
        }
    }
    Ok((gap, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_hatano_nelson, build_nonreciprocal_ssh};

    fn hn() -> LaurentBlochHamiltonian {
        build_hatano_nelson(3.0, 1.0).unwrap()
    }

    fn ssh13() -> LaurentBlochHamiltonian {
        build_nonreciprocal_ssh(1.3, 1.0, 0.0, 4.0 / 3.0).unwrap()
    }

    #[test]
    fn closed_form_examples() {
        assert!((gw_closed_singleband(&hn(), 0.0).unwrap() - 10.0).abs() < 1e-12);
        let mu_min = 0.5 * (1.0f64 / 3.0).ln();
        assert!((gw_closed_singleband(&hn(), mu_min).unwrap() - 6.0).abs() < 1e-12);
        let uni = build_hatano_nelson(1.0, 0.0).unwrap();
        assert!((gw_closed_singleband(&uni, -2.0).unwrap() - (-4.0f64).exp()).abs() < 1e-15);
        assert!(matches!(gw_closed_singleband(&ssh13(), 0.0), Err(Error::WrongArity { bands: 2 })));
    }

    #[test]
    fn thermo_examples() {
        assert!((gw_thermo(&hn(), 0.0, 256).unwrap() - 10.0).abs() < 1e-6);
        let sym = build_hatano_nelson(1.0, 1.0).unwrap();
        assert!((gw_thermo(&sym, 0.3, 512).unwrap() - 2.0 * 0.6f64.cosh()).abs() < 1e-9);
        let mu_ep = (1.0f64 / (1.3 + 2.0 / 3.0)).ln();
        assert!(matches!(gw_thermo(&ssh13(), mu_ep, 512), Err(Error::Divergent { .. })));
        assert!(matches!(gw_thermo(&hn(), 0.0, 32), Err(Error::Precondition(_))));
    }

    #[test]
    fn area_examples() {
        assert!((spectral_area(&hn(), 0.0, 512).unwrap() - 8.0 * PI).abs() < 1e-9);
        let sym = build_hatano_nelson(1.0, 1.0).unwrap();
        assert!(spectral_area(&sym, 0.0, 512).unwrap().abs() < 1e-12);
        let d = 1e-3;
        let slope = (spectral_area(&hn(), d, 512).unwrap() - spectral_area(&hn(), -d, 512).unwrap()) / (2.0 * d);
        assert!((slope / (2.0 * PI * 10.0) - 1.0).abs() < 1e-3);
    }

    #[test]
    fn trace_formula_examples() {
        assert!((gw_multiband_trace(&hn(), 0.0, 512, 1e-3).unwrap() - 10.0).abs() < 1e-3);
        let a = gw_multiband_trace(&ssh13(), 0.0, 512, 1e-3).unwrap();
        let b = gw_thermo(&ssh13(), 0.0, 512).unwrap();
        assert!((a / b - 1.0).abs() < 1e-4, "{a} vs {b}");
        let d = CMatrix::from_diag(&[C64::new(1.0, 0.5), C64::new(-2.0, 0.0)]);
        let mut up = CMatrix::zeros(2, 2);
        up[(0, 1)] = C64::new(1.0, 0.0);
        let flat = LaurentBlochHamiltonian::new(2, &[(0, d), (1, up)]).unwrap();
        assert!(gw_multiband_trace(&flat, 0.2, 128, 1e-3).unwrap().abs() < 1e-9);
    }

    #[test]
    fn finite_size_excess_examples() {
        assert!(n_delta_gw(&hn(), 0.0, 1e-4, 200, 512).unwrap() < 1e-3);
        let mu_min = 0.5 * (1.0f64 / 3.0).ln();
        assert!(n_delta_gw(&hn(), mu_min, 1e-4, 200, 512).unwrap() > 1.0);
    }

    #[test]
    fn degeneracy_correction_examples() {
        let mu = 0.5 * (1.0f64 / 3.0).ln();
        let n = 200;
        let pairs: Vec<(f64, f64)> = (1..n / 2)
            .map(|j| {
                let k = 2.0 * PI * j as f64 / n as f64;
                (k, -k)
            })
            .collect();
        let predicted = degeneracy_correction(&hn(), mu, &pairs).unwrap();
        let measured = n_delta_gw(&hn(), mu, 1e-4, n, 512).unwrap();
        assert!((predicted / measured - 1.0).abs() < 0.1, "{predicted} vs {measured}");
        assert!(matches!(degeneracy_correction(&hn(), 0.0, &[(0.3, 1.1)]), Err(Error::Precondition(_))));
        assert_eq!(degeneracy_correction(&hn(), 0.0, &[(0.7, 0.7)]).unwrap(), 0.0);
    }
}
