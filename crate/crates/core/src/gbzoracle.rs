//! Independent GBZ/aGBZ data from the characteristic polynomial
//! `f(E, β) = det(E - H(β))`: sorted β-roots, self-crossings, open-chain spectra
//! and the non-Bloch winding number of two-band chiral chains.

use std::f64::consts::PI;
use std::io::Write;

use rayon::prelude::*;

use crate::eigensolve::{eig_dense, poly_eval, poly_roots, CMatrix};
use crate::metric::{band_derivatives, golden_max};
use crate::model::{bloch_eigenvalues, open_lattice, LaurentBlochHamiltonian};
use crate::metric::ModulusRange;
use crate::transport::{fmt_f64, SpectrumCloud};
use crate::{Error, Result, C64};

/// Coefficients below this fraction of the largest are interpolation noise.
const COEFF_TRIM: f64 = 1e-12;

fn det_e_minus_h(h: &LaurentBlochHamiltonian, e: C64, beta: C64) -> Result<C64> {
    let a = h.evaluate(beta)?;
    let m = h.bands();
    let shifted = CMatrix::from_fn(m, m, |i, j| if i == j { e - a[(i, j)] } else { -a[(i, j)] });
    shifted.det()
}

fn interpolate(h: &LaurentBlochHamiltonian, e: C64, radius: f64) -> Result<Vec<C64>> {
    let m = h.bands();
    let shift = (m * h.left_range()) as i32;
    let degree = m * (h.left_range() + h.right_range());
    let count = degree + 1;
    let mut values = Vec::with_capacity(count);
    for j in 0..count {
        let z = C64::from_polar(radius, 2.0 * PI * j as f64 / count as f64);
        values.push(z.powi(shift) * det_e_minus_h(h, e, z)?);
    }
    let mut coeffs = Vec::with_capacity(count);
    for n in 0..count {
        let mut acc = C64::new(0.0, 0.0);
        for (j, v) in values.iter().enumerate() {
            acc += v * C64::from_polar(1.0, -2.0 * PI * (n * j) as f64 / count as f64);
        }
        coeffs.push(acc / count as f64 / radius.powi(n as i32));
    }
    let scale = coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
    for c in &mut coeffs {
        if c.norm() <= COEFF_TRIM * scale {
            *c = C64::new(0.0, 0.0);
        }
    }
    // fresh points off the interpolation nodes
    for (r, phase) in [(radius * 1.3, 0.37), (radius * 0.8, 2.1)] {
        let z = C64::from_polar(r, phase);
        let direct = z.powi(shift) * det_e_minus_h(h, e, z)?;
        let size: f64 = coeffs.iter().enumerate().map(|(n, c)| c.norm() * r.powi(n as i32)).sum();
        if (poly_eval(&coeffs, z) - direct).norm() > 1e-9 * size.max(1.0) {
            return Err(Error::IllConditioned(format!("characteristic polynomial interpolation on radius {radius}")));
        }
    }
    Ok(coeffs)
}

/// Ascending coefficients of `β^{mp} det(E - H(β))`, of length `m(p+q)+1`,
/// obtained by interpolation on a circle.
pub fn char_poly_coeffs(h: &LaurentBlochHamiltonian, e: C64) -> Result<Vec<C64>> {
    if !(e.re.is_finite() && e.im.is_finite()) {
        return Err(Error::NonFinite("energy"));
    }
    let mut last = None;
    for radius in [1.0, 0.5, 2.0] {
        match interpolate(h, e, radius) {
            Ok(c) => return Ok(c),
            Err(err) => last = Some(err),
        }
    }
    Err(last.expect("at least one radius tried"))
}

/// The characteristic polynomial with structural zeros removed: `coeffs[0]`
/// multiplies `β^{-pole_order}` in `det(E - H(β))`.
#[derive(Debug, Clone, PartialEq)]
pub struct CharPoly {
    pub coeffs: Vec<C64>,
    /// Order of the pole of `det(E - H(β))` at `β = 0`; the GBZ is
    /// `|β_P| = |β_{P+1}|` with `P` this value.
    pub pole_order: usize,
}

pub fn char_poly(h: &LaurentBlochHamiltonian, e: C64) -> Result<CharPoly> {
    let full = char_poly_coeffs(h, e)?;
    let zero = C64::new(0.0, 0.0);
    let lo = full.iter().position(|c| *c != zero).ok_or_else(|| Error::InvalidInput("characteristic polynomial vanishes".into()))?;
    let hi = full.iter().rposition(|c| *c != zero).expect("nonzero entry exists");
    let shift = h.bands() * h.left_range();
    if lo > shift {
        return Err(Error::InvalidInput("characteristic polynomial has no pole; E is a flat-band energy".into()));
    }
    Ok(CharPoly { coeffs: full[lo..=hi].to_vec(), pole_order: shift - lo })
}

/// All β-roots of `det(E - H(β)) = 0`, ascending in modulus with ties broken by
/// phase in `(-π, π]`.
pub fn beta_roots_sorted(h: &LaurentBlochHamiltonian, e: C64) -> Result<Vec<(C64, f64)>> {
    let cp = char_poly(h, e)?;
    let mut roots: Vec<(C64, f64)> = poly_roots(&cp.coeffs)?.into_iter().map(|b| (b, b.norm())).collect();
    roots.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.arg().total_cmp(&b.0.arg())));
    Ok(roots)
}

/// Two momenta at which bands `band_a`, `band_b` share the energy `energy`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelfCrossing {
    pub k1: f64,
    pub k2: f64,
    pub energy: C64,
}

/// Relative degeneracy tolerance after polishing.
const CROSSING_TOL: f64 = 1e-8;

fn tracked_bands(h: &LaurentBlochHamiltonian, mu: f64, k_grid: usize) -> Result<Vec<Vec<C64>>> {
    let m = h.bands();
    let dk = 2.0 * PI / k_grid as f64;
    let mut bands: Vec<Vec<C64>> = vec![Vec::with_capacity(k_grid + 1); m];
    let mut prev = bloch_eigenvalues(h, 0.0, mu)?;
    for (b, e) in prev.iter().enumerate() {
        bands[b].push(*e);
    }
    for j in 1..=k_grid {
        let mut next = bloch_eigenvalues(h, dk * j as f64, mu)?;
        let mut ordered = Vec::with_capacity(m);
        for p in &prev {
            let (idx, _) = next
                .iter()
                .enumerate()
                .min_by(|a, b| (a.1 - p).norm().total_cmp(&(b.1 - p).norm()))
                .expect("bands are nonempty");
            ordered.push(next.swap_remove(idx));
        }
        for (b, e) in ordered.iter().enumerate() {
            bands[b].push(*e);
        }
        prev = ordered;
    }
    Ok(bands)
}

fn segments_intersect(p1: C64, p2: C64, q1: C64, q2: C64) -> Option<(f64, f64)> {
    let r = p2 - p1;
    let s = q2 - q1;
    let cross = |a: C64, b: C64| a.re * b.im - a.im * b.re;
    let denom = cross(r, s);
    if denom == 0.0 {
        return None;
    }
    let t = cross(q1 - p1, s) / denom;
    let u = cross(q1 - p1, r) / denom;
    ((0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&u)).then_some((t, u))
}

fn nearest_band(h: &LaurentBlochHamiltonian, k: f64, mu: f64, target: C64) -> Result<(C64, C64)> {
    let bp = band_derivatives(h, k, mu)?;
    let i = (0..bp.values.len())
        .min_by(|&a, &b| (bp.values[a] - target).norm().total_cmp(&(bp.values[b] - target).norm()))
        .expect("bands are nonempty");
    Ok((bp.values[i], bp.dk[i]))
}

/// Newton polish of `E_a(k1) = E_b(k2)` in the two real unknowns.
fn polish(h: &LaurentBlochHamiltonian, mu: f64, mut k1: f64, mut k2: f64, guess: C64) -> Option<(f64, f64, C64, f64)> {
    let mut target = guess;
    for _ in 0..50 {
        let (e1, d1) = nearest_band(h, k1, mu, target).ok()?;
        let (e2, d2) = nearest_band(h, k2, mu, target).ok()?;
        let f = e1 - e2;
        let det = d1.re * (-d2.im) - (-d2.re) * d1.im;
        if det.abs() < 1e-300 {
            return Some((k1, k2, 0.5 * (e1 + e2), f.norm()));
        }
        let dk1 = (-f.re * (-d2.im) + (-d2.re) * f.im) / det;
        let dk2 = (d1.re * (-f.im) + f.re * d1.im) / det;
        k1 += dk1;
        k2 += dk2;
        target = 0.5 * (e1 + e2);
        if dk1.abs() + dk2.abs() < 1e-15 {
            break;
        }
    }
    let (e1, _) = nearest_band(h, k1, mu, target).ok()?;
    let (e2, _) = nearest_band(h, k2, mu, target).ok()?;
    Some((k1, k2, 0.5 * (e1 + e2), (e1 - e2).norm()))
}

fn wrap(k: f64) -> f64 {
    k.rem_euclid(2.0 * PI)
}

/// Self-intersections of the spectral curves at gauge μ: pairs `k' ≠ k''` with
/// equal energy. Proper crossings of the sampled curves are polished by Newton
/// iteration; coincident samples (doubly traced arcs) are reported directly.
pub fn self_crossings(h: &LaurentBlochHamiltonian, mu: f64, k_grid: usize) -> Result<Vec<SelfCrossing>> {
    if k_grid < 64 {
        return Err(Error::Precondition("self-crossing search needs at least 64 momenta".into()));
    }
    let bands = tracked_bands(h, mu, k_grid)?;
    let dk = 2.0 * PI / k_grid as f64;
    let pts: Vec<(C64, f64)> = bands
        .iter()
        .flat_map(|b| b.iter().enumerate().map(move |(j, e)| (*e, dk * j as f64)))
        .collect();
    let (mut lo_re, mut hi_re, mut lo_im, mut hi_im) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for (e, _) in &pts {
        lo_re = lo_re.min(e.re);
        hi_re = hi_re.max(e.re);
        lo_im = lo_im.min(e.im);
        hi_im = hi_im.max(e.im);
    }
    let diameter = (hi_re - lo_re).hypot(hi_im - lo_im).max(f64::MIN_POSITIVE);
    let tol = CROSSING_TOL * diameter;

    let mut out: Vec<SelfCrossing> = Vec::new();
    let mut push = |c: SelfCrossing| {
        let same = |a: &SelfCrossing| {
            let d = |x: f64, y: f64| {
                let t = (x - y).rem_euclid(2.0 * PI);
                t.min(2.0 * PI - t)
            };
            (d(a.k1, c.k1) < 1e-7 && d(a.k2, c.k2) < 1e-7) || (d(a.k1, c.k2) < 1e-7 && d(a.k2, c.k1) < 1e-7)
        };
        if !out.iter().any(same) {
            out.push(c);
        }
    };

    // coincident samples
    let m = bands.len();
    for a in 0..m {
        for i in 0..k_grid {
            for b in a..m {
                let start = if a == b { i + 1 } else { 0 };
                for j in start..k_grid {
                    if (bands[a][i] - bands[b][j]).norm() <= tol {
                        if a == b && (i as i64 - j as i64).abs() <= 1 {
                            continue;
                        }
                        push(SelfCrossing { k1: dk * i as f64, k2: dk * j as f64, energy: bands[a][i] });
                    }
                }
            }
        }
    }
    // proper crossings between segments
    let seg: Vec<(usize, usize)> = (0..m).flat_map(|b| (0..k_grid).map(move |j| (b, j))).collect();
    for (x, &(a, i)) in seg.iter().enumerate() {
        let (p1, p2) = (bands[a][i], bands[a][i + 1]);
        for &(b, j) in &seg[x + 1..] {
            if a == b && (j == i + 1 || (i == 0 && j + 1 == k_grid)) {
                continue;
            }
            let (q1, q2) = (bands[b][j], bands[b][j + 1]);
            if let Some((t, u)) = segments_intersect(p1, p2, q1, q2) {
                let k1 = dk * (i as f64 + t);
                let k2 = dk * (j as f64 + u);
                let guess = p1 + (p2 - p1) * t;
                if let Some((k1, k2, e, resid)) = polish(h, mu, k1, k2, guess) {
                    let (k1, k2) = (wrap(k1), wrap(k2));
                    let apart = {
                        let d = (k1 - k2).rem_euclid(2.0 * PI);
                        d.min(2.0 * PI - d) > 1e-6
                    };
                    if resid <= tol && (apart || a != b) {
                        push(SelfCrossing { k1, k2, energy: e });
                    }
                }
            }
        }
    }
    out.sort_by(|a, b| a.k1.total_cmp(&b.k1).then(a.k2.total_cmp(&b.k2)));
    Ok(out)
}

/// A point of the GBZ: `β` solves `f(E, β) = 0` with `|β_P| = |β_{P+1}|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GBZPoint {
    pub beta: C64,
    pub energy: C64,
    /// `n` of the satisfied condition `|β_n| = |β_{n+1}|`.
    pub pair_index: usize,
}

/// Largest open chain handled in double precision.
pub const MAX_OBC_SITES: usize = 80;

/// Eigenvalues of the open chain, computed on the similarity-rescaled blocks
/// `T[n] e^{n μ₀}` to tame the non-normality. A second gauge `μ₀ + 0.05` must
/// reproduce the spectrum, otherwise the result is rejected as ill-conditioned.
pub fn obc_spectrum(h: &LaurentBlochHamiltonian, sites: usize, gauge: f64) -> Result<SpectrumCloud> {
    if sites > MAX_OBC_SITES {
        return Err(Error::IllConditioned(format!("open chain of {sites} sites; use at most {MAX_OBC_SITES}")));
    }
    let values = eig_dense(&open_lattice(&h.gauged(gauge), sites)?.matrix)?;
    let check = eig_dense(&open_lattice(&h.gauged(gauge + 0.05), sites)?.matrix)?;
    let scale = values.iter().map(|z| z.norm()).fold(1.0, f64::max);
    let err = crate::transport::wasserstein2_points(&values, &check)?.sqrt();
    if err > 1e-6 * scale {
        return Err(Error::IllConditioned(format!(
            "open-chain spectrum moved by {err:.2e} under a gauge change; reduce the number of sites"
        )));
    }
    SpectrumCloud::new(values)
}

/// Relative modulus mismatch accepted for the GBZ condition.
pub const GBZ_CLOSURE_TOL: f64 = 1e-4;

/// Keeps the energies whose middle roots satisfy `|β_P| ≈ |β_{P+1}|` and
/// returns them with `β = β_P`. Edge and other non-bulk states are dropped.
pub fn gbz_points_from_obc(h: &LaurentBlochHamiltonian, cloud: &SpectrumCloud) -> Result<Vec<GBZPoint>> {
    let mut out = Vec::new();
    for &e in cloud.points() {
        let cp = char_poly(h, e)?;
        let p = cp.pole_order;
        let roots = beta_roots_sorted(h, e)?;
        if p == 0 || p >= roots.len() {
            continue;
        }
        let (lo, hi) = (roots[p - 1].1, roots[p].1);
        if (hi - lo) <= GBZ_CLOSURE_TOL * hi {
            out.push(GBZPoint { beta: roots[p - 1].0, energy: e, pair_index: p });
        }
    }
    Ok(out)
}

pub fn write_gbz_csv<W: Write>(writer: W, points: &[GBZPoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let err = |e: csv::Error| Error::Csv(e.to_string());
    w.write_record(["re_beta", "im_beta", "re_E", "im_E", "pair_index"]).map_err(err)?;
    for p in points {
        w.write_record([fmt_f64(p.beta.re), fmt_f64(p.beta.im), fmt_f64(p.energy.re), fmt_f64(p.energy.im), p.pair_index.to_string()])
            .map_err(err)?;
    }
    w.flush()?;
    Ok(())
}

/// Relative band of moduli treated as equal to `e^μ` when locating a root.
const POSITION_TOL: f64 = 1e-9;

/// Sorted positions (number of strictly smaller roots) of the own roots
/// `β = e^{μ+ik}` of every band energy at `(k, μ)`; `None` if a root sits on
/// the circle and the position is ambiguous.
fn own_positions(h: &LaurentBlochHamiltonian, k: f64, mu: f64) -> Result<Option<Vec<usize>>> {
    let r = mu.exp();
    let mut pos = Vec::with_capacity(h.bands());
    for e in bloch_eigenvalues(h, k, mu)? {
        let roots = beta_roots_sorted(h, e)?;
        let below = roots.iter().filter(|x| x.1 < r * (1.0 - POSITION_TOL)).count();
        let on = roots.iter().filter(|x| (x.1 - r).abs() <= r * POSITION_TOL).count();
        if on != 1 {
            return Ok(None);
        }
        pos.push(below);
    }
    pos.sort_unstable();
    Ok(Some(pos))
}

fn changed_pair(a: &[usize], b: &[usize]) -> Option<usize> {
    // positions present in one list but not the other
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.retain(|v| {
        if let Some(i) = y.iter().position(|w| w == v) {
            y.remove(i);
            false
        } else {
            true
        }
    });
    let lo = x.iter().chain(&y).copied().min()?;
    Some(lo + 1)
}

/// μ at which the own-root positions at momentum `k` change inside `(a, b)`,
/// together with the aGBZ index of the coinciding pair.
fn locate_flip(h: &LaurentBlochHamiltonian, k: f64, mut a: f64, mut b: f64, left: &[usize]) -> Result<Option<(f64, usize)>> {
    let Some(mut right) = own_positions(h, k, b)? else { return Ok(None) };
    while b - a > 1e-12 {
        let mid = 0.5 * (a + b);
        match own_positions(h, k, mid)? {
            Some(p) if p == left => a = mid,
            Some(p) => {
                right = p;
                b = mid;
            }
            // a root on the circle marks the coincidence itself
            None => {
                a = mid;
                b = mid;
            }
        }
    }
    Ok(changed_pair(left, &right).map(|n| (0.5 * (a + b), n)))
}

/// aGBZ modulus ranges from β-root sorting alone.
///
/// On a `(k, μ)` grid the positions of the own roots `e^{μ+ik}` among the
/// sorted roots are tracked; a change between neighbouring μ samples means the
/// circle `|β| = e^μ` crosses the n-th aGBZ there. The crossing gauges are found
/// by bisection and clustered per `n` into intervals, closing gaps smaller than
/// `max_gap` (in μ).
pub fn agbz_ranges_oracle(
    h: &LaurentBlochHamiltonian,
    mu_lo: f64,
    mu_hi: f64,
    steps: usize,
    k_grid: usize,
    max_gap: f64,
) -> Result<Vec<ModulusRange>> {
    if steps < 2 || !(mu_lo < mu_hi) {
        return Err(Error::Precondition("oracle grid needs lo < hi and at least two samples".into()));
    }
    let dmu = (mu_hi - mu_lo) / (steps - 1) as f64;
    let mus: Vec<f64> = (0..steps).map(|i| mu_lo + dmu * i as f64).collect();
    let dk = 2.0 * PI / k_grid as f64;
    // offset the momenta so that symmetric models do not sit on k = 0 exactly
    let ks: Vec<f64> = (0..k_grid).map(|j| dk * (j as f64 + 0.5)).collect();
    let flips: Vec<Vec<Flip>> = ks
        .par_iter()
        .map(|&k| -> Result<Vec<Flip>> {
            let mut found = Vec::new();
            let mut prev: Option<(f64, Vec<usize>)> = None;
            for &mu in &mus {
                let Some(pos) = own_positions(h, k, mu)? else { continue };
                if let Some((pmu, ppos)) = &prev {
                    if *ppos != pos {
                        if let Some((at, n)) = locate_flip(h, k, *pmu, mu, ppos)? {
                            found.push(Flip { mu: at, k, n });
                        }
                    }
                }
                prev = Some((mu, pos));
            }
            Ok(found)
        })
        .collect::<Result<_>>()?;
    let mut all: Vec<Flip> = flips.into_iter().flatten().filter(|f| f.n > 0).collect();
    all.sort_by(|a, b| a.mu.total_cmp(&b.mu));

    let mut clusters: Vec<(Flip, Flip)> = Vec::new();
    let mut open: Vec<(Flip, Flip)> = Vec::new();
    for f in all {
        match open.iter_mut().find(|o| o.0.n == f.n && f.mu - o.1.mu <= max_gap) {
            Some(o) => o.1 = f,
            None => {
                if let Some(i) = open.iter().position(|o| o.0.n == f.n) {
                    clusters.push(open.remove(i));
                }
                open.push((f, f));
            }
        }
    }
    clusters.extend(open);

    let refine = |end: Flip, upward: bool| -> f64 {
        // near a cusp the flip locus folds back in k, so the outermost flip
        // is found by stepping inward from beyond the grid value; the result
        // is then optimized over k within one grid cell on either side
        let fine = dmu / REFINE_SUBSTEPS as f64;
        let reach = max_gap.max(2.0 * dmu);
        let at = |k: f64| -> Option<f64> {
            let start = if upward { end.mu + reach } else { end.mu - reach };
            let step = if upward { -fine } else { fine };
            let mut outer = start;
            let mut outer_pos = own_positions(h, k, outer).ok()??;
            let limit = ((reach + dmu) / fine).ceil() as usize;
            for i in 1..=limit {
                let inner = start + step * i as f64;
                let Some(pos) = own_positions(h, k, inner).ok()? else { continue };
                if pos != outer_pos {
                    let (lo, hi, left) = if upward { (inner, outer, &pos) } else { (outer, inner, &outer_pos) };
                    return match locate_flip(h, k, lo, hi, left) {
                        Ok(Some((mu, n))) if n == end.n => Some(mu),
                        _ => None,
                    };
                }
                outer = inner;
                outer_pos = pos;
            }
            None
        };
        let sign = if upward { 1.0 } else { -1.0 };
        let score = |k: f64| at(k).map_or(f64::NEG_INFINITY, |mu| sign * mu);
        let k = golden_max(score, end.k - dk, end.k + dk, 1e-10);
        at(k).filter(|mu| sign * (mu - end.mu) > 0.0).unwrap_or(end.mu)
    };
    let mut ranges: Vec<ModulusRange> = clusters
        .par_iter()
        .map(|(lo, hi)| {
            // ranges that reach the window edge continue beyond it
            let mu_lo_end = if lo.mu - mu_lo <= dmu { mu_lo } else { refine(*lo, false).max(mu_lo) };
            let mu_hi_end = if mu_hi - hi.mu <= dmu { mu_hi } else { refine(*hi, true).min(mu_hi) };
            ModulusRange { mu_lo: mu_lo_end, mu_hi: mu_hi_end, index: lo.n }
        })
        .collect();
    ranges.sort_by(|a, b| a.mu_lo.total_cmp(&b.mu_lo));
    Ok(ranges)
}

/// Fine steps per μ grid step when refining range endpoints.
const REFINE_SUBSTEPS: usize = 20;

#[derive(Debug, Clone, Copy)]
struct Flip {
    mu: f64,
    k: f64,
    n: usize,
}

/// Non-Bloch winding data of a chiral two-band chain `H = [[0, R+], [R-, 0]]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindingData {
    pub w: f64,
    pub n_plus: usize,
    pub n_minus: usize,
    pub p_plus: usize,
    pub p_minus: usize,
}

/// Relative distance of a root from the GBZ circle treated as on it.
pub const BOUNDARY_ROOT_TOL: f64 = 1e-6;

fn off_diagonal_poly(h: &LaurentBlochHamiltonian, row: usize, col: usize) -> (Vec<C64>, usize) {
    let terms: Vec<(i32, C64)> = h.terms().map(|(n, t)| (n, t[(row, col)])).filter(|(_, c)| c.norm() > 0.0).collect();
    let low = terms.iter().map(|t| t.0).min().unwrap_or(0).min(0);
    let high = terms.iter().map(|t| t.0).max().unwrap_or(0).max(0);
    let mut coeffs = vec![C64::new(0.0, 0.0); (high - low + 1) as usize];
    for (n, c) in terms {
        coeffs[(n - low) as usize] += c;
    }
    (coeffs, (-low) as usize)
}

/// `w = -(N+ - N-)/2 + (p+ - p-)/2` with `N±` the zeros of `β^{p±} R±(β)` inside
/// the circular GBZ of radius `r`.
pub fn winding_number_nonbloch(h: &LaurentBlochHamiltonian, radius: f64) -> Result<WindingData> {
    if h.bands() != 2 {
        return Err(Error::WrongArity { bands: h.bands() });
    }
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(Error::InvalidInput("GBZ radius must be positive".into()));
    }
    if h.terms().any(|(_, t)| t[(0, 0)].norm() > 0.0 || t[(1, 1)].norm() > 0.0) {
        return Err(Error::Precondition("winding number needs a purely off-diagonal Hamiltonian".into()));
    }
    let count = |row: usize, col: usize| -> Result<(usize, usize)> {
        let (coeffs, pole) = off_diagonal_poly(h, row, col);
        if coeffs.iter().all(|c| c.norm() == 0.0) {
            return Err(Error::InvalidModel("an off-diagonal block vanishes identically".into()));
        }
        let roots = poly_roots(&coeffs)?;
        let mut inside = 0;
        for b in roots {
            let m = b.norm();
            if (m - radius).abs() <= BOUNDARY_ROOT_TOL * radius {
                return Err(Error::AtTransition { modulus: m, radius });
            }
            if m < radius {
                inside += 1;
            }
        }
        Ok((inside, pole))
    };
    let (n_plus, p_plus) = count(0, 1)?;
    let (n_minus, p_minus) = count(1, 0)?;
    let w = -(n_plus as f64 - n_minus as f64) / 2.0 + (p_plus as f64 - p_minus as f64) / 2.0;
    Ok(WindingData { w, n_plus, n_minus, p_plus, p_minus })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_hatano_nelson, build_nonreciprocal_ssh};

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn hatano_nelson_polynomial_is_scalar_determinant() {
        let h = build_hatano_nelson(3.0, 1.0).unwrap();
        let e = c(0.7, -0.4);
        let cp = char_poly(&h, e).unwrap();
        assert_eq!(cp.pole_order, 1);
        let expected = [c(-1.0, 0.0), e, c(-3.0, 0.0)];
        for (a, b) in cp.coeffs.iter().zip(expected) {
            assert!((a - b).norm() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn ssh_polynomial_matches_hand_expansion() {
        let (t1, t2, g) = (1.3, 1.0, 4.0 / 3.0);
        let (a, b) = (t1 + g / 2.0, t1 - g / 2.0);
        let h = build_nonreciprocal_ssh(t1, t2, 0.0, g).unwrap();
        let e = c(0.7, 0.2);
        // β (E² - (a + t2/β)(b + t2 β))
        let expected = [c(-b * t2, 0.0), e * e - a * b - t2 * t2, c(-a * t2, 0.0)];
        let cp = char_poly(&h, e).unwrap();
        assert_eq!(cp.coeffs.len(), 3);
        for (x, y) in cp.coeffs.iter().zip(expected) {
            assert!((x - y).norm() < 1e-12, "{x} vs {y}");
        }
        let full = char_poly_coeffs(&h, e).unwrap();
        assert_eq!(full.len(), 5);
    }

    #[test]
    fn hatano_nelson_roots() {
        let h = build_hatano_nelson(3.0, 1.0).unwrap();
        let r = beta_roots_sorted(&h, c(4.0, 0.0)).unwrap();
        assert!((r[0].0 - c(1.0 / 3.0, 0.0)).norm() < 1e-12);
        assert!((r[1].0 - c(1.0, 0.0)).norm() < 1e-12);
        let r = beta_roots_sorted(&h, c(0.0, 0.0)).unwrap();
        let m = 1.0 / 3f64.sqrt();
        assert!((r[0].1 - m).abs() < 1e-12 && (r[1].1 - m).abs() < 1e-12);
        assert!(r[0].0.arg() <= r[1].0.arg());
        assert!((r[0].0.re).abs() < 1e-12);
    }

    #[test]
    fn crossings_on_collapsed_and_elliptic_spectra() {
        let h = build_hatano_nelson(3.0, 1.0).unwrap();
        assert!(self_crossings(&h, 0.0, 128).unwrap().is_empty());
        let pairs = self_crossings(&h, -0.5 * 3f64.ln(), 128).unwrap();
        assert!(!pairs.is_empty());
        for p in &pairs {
            let s = (p.k1 + p.k2).rem_euclid(2.0 * PI);
            assert!(s.min(2.0 * PI - s) < 1e-6, "pair ({}, {}) is not (k, -k)", p.k1, p.k2);
        }
        assert!(matches!(self_crossings(&h, 0.0, 32), Err(Error::Precondition(_))));
    }

    #[test]
    fn crossing_inside_gbz_range_has_adjacent_equal_moduli() {
        let h = build_nonreciprocal_ssh(2.5, 1.0, 0.2, 4.0 / 3.0).unwrap();
        let mu = -0.2;
        let pairs = self_crossings(&h, mu, 256).unwrap();
        assert!(!pairs.is_empty());
        let r = beta_roots_sorted(&h, pairs[0].energy).unwrap();
        let target = mu.exp();
        let on: Vec<usize> = (0..r.len()).filter(|&i| (r[i].1 - target).abs() < 1e-6 * target).collect();
        assert_eq!(on, vec![1, 2]);
    }

    #[test]
    fn open_chain_of_hatano_nelson() {
        let h = build_hatano_nelson(3.0, 1.0).unwrap();
        let cloud = obc_spectrum(&h, 40, -0.5 * 3f64.ln()).unwrap();
        let exact: Vec<C64> = (1..=40).map(|j| c(2.0 * 3f64.sqrt() * (j as f64 * PI / 41.0).cos(), 0.0)).collect();
        let err = crate::transport::wasserstein2_points(cloud.points(), &exact).unwrap();
        assert!(err.sqrt() < 1e-9);
        let pts = gbz_points_from_obc(&h, &cloud).unwrap();
        assert_eq!(pts.len(), 40);
        for p in &pts {
            assert!((p.beta.norm().ln() + 0.5 * 3f64.ln()).abs() < 1e-6);
            assert_eq!(p.pair_index, 1);
        }
        assert!(matches!(obc_spectrum(&h, 81, 0.0), Err(Error::IllConditioned(_))));
    }

    #[test]
    fn circular_gbz_radius_of_ssh() {
        let (t1, g) = (1.3, 4.0 / 3.0);
        let h = build_nonreciprocal_ssh(t1, 1.0, 0.0, g).unwrap();
        let radius = ((t1 - g / 2.0) / (t1 + g / 2.0)).abs().sqrt();
        let cloud = obc_spectrum(&h, 60, radius.ln()).unwrap();
        let pts = gbz_points_from_obc(&h, &cloud).unwrap();
        assert!(pts.len() >= 100);
        for p in &pts {
            assert!((p.beta.norm() - radius).abs() < 1e-6);
            let f = poly_eval(&char_poly(&h, p.energy).unwrap().coeffs, p.beta);
            assert!(f.norm() < 1e-8);
        }
    }

    #[test]
    fn zero_width_oracle_ranges() {
        let h = build_hatano_nelson(3.0, 1.0).unwrap();
        let r = agbz_ranges_oracle(&h, -1.0, 0.0, 101, 64, 0.02).unwrap();
        assert_eq!(r.len(), 1);
        assert!((r[0].mu_lo + 0.5 * 3f64.ln()).abs() < 1e-6 && r[0].width() < 1e-9);
        assert_eq!(r[0].index, 1);
    }

    #[test]
    fn winding_across_the_transition() {
        let radius = |t1: f64| ((t1 - 0.5) / (t1 + 0.5)).abs().sqrt();
        let at = |t1: f64| winding_number_nonbloch(&build_nonreciprocal_ssh(t1, 0.4, 0.0, 1.0).unwrap(), radius(t1));
        let w0 = at(0.29).unwrap();
        assert_eq!((w0.w, w0.n_plus, w0.n_minus, w0.p_plus, w0.p_minus), (0.0, 1, 0, 1, 0));
        let w1 = at(0.31).unwrap();
        assert_eq!((w1.w, w1.n_plus, w1.n_minus), (1.0, 0, 1));
        assert!(matches!(at(0.30), Err(Error::AtTransition { .. })));
        let ssh = build_nonreciprocal_ssh(0.29, 0.4, 0.2, 1.0).unwrap();
        assert!(winding_number_nonbloch(&ssh, 0.5).is_ok());
        assert!(matches!(
            winding_number_nonbloch(&build_hatano_nelson(3.0, 1.0).unwrap(), 0.5),
            Err(Error::WrongArity { .. })
        ));
    }

    #[test]
    fn gbz_csv_header() {
        let mut buf = Vec::new();
        write_gbz_csv(&mut buf, &[GBZPoint { beta: c(0.5, 0.0), energy: c(1.0, 0.0), pair_index: 1 }]).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("re_beta,im_beta,re_E,im_E,pair_index\n"));
    }
}
