use super::matrix::CMatrix;
use crate::{Error, Result, C64};

/// Eigenvector-matrix condition number above which a frame counts as defective.
pub const NEAR_EP_CONDITION: f64 = 1e8;

/// Condition number that, together with coalesced eigenvalues, marks a defect.
const COALESCED_CONDITION: f64 = 1e6;
/// Relative eigenvalue separation counted as coalescence.
const COALESCENCE_TOL: f64 = 1e-6;

const KEXSH: usize = 10;
const DAT1: f64 = 0.75;

#[inline]
fn cabs1(z: C64) -> f64 {
    z.re.abs() + z.im.abs()
}

fn min_gap(values: &[C64]) -> f64 {
    let mut gap = f64::INFINITY;
    for i in 0..values.len() {
        for j in i + 1..values.len() {
            gap = gap.min((values[i] - values[j]).norm());
        }
    }
    gap
}

/// Eigenvalues, right/left eigenvectors and the right-eigenvector overlap.
#[derive(Debug, Clone)]
pub struct EigenFrame {
    pub values: Vec<C64>,
    /// Columns are unit-norm right eigenvectors.
    pub right: CMatrix,
    /// Columns are left eigenvectors scaled so that `left^H right = I`.
    pub left: CMatrix,
    /// `right^H right`.
    pub overlap: CMatrix,
    /// 1-norm condition number of `right`.
    pub condition: f64,
}

impl EigenFrame {
    /// Reconstructs `U diag(E) U^{-1}`.
    pub fn reconstruct(&self) -> CMatrix {
        let d = CMatrix::from_diag(&self.values);
        self.right.matmul(&d).matmul(&self.left.adjoint())
    }
}

fn validate(a: &CMatrix) -> Result<()> {
    if !a.is_square() {
        return Err(Error::SizeMismatch { left: a.nrows(), right: a.ncols() });
    }
    if a.nrows() == 0 {
        return Err(Error::InvalidInput("empty matrix".into()));
    }
    if !a.is_finite() {
        return Err(Error::NonFinite("matrix"));
    }
    Ok(())
}

/// Diagonal similarity `D^{-1} A D` with power-of-two entries that evens out row and
/// column norms. Returns the scaling vector `D`.
fn balance(a: &mut CMatrix) -> Vec<f64> {
    let n = a.nrows();
    let mut d = vec![1.0; n];
    const RADIX: f64 = 2.0;
    let mut converged = false;
    let mut sweeps = 0;
    while !converged && sweeps < 100 {
        converged = true;
        sweeps += 1;
        for i in 0..n {
            let mut c = 0.0;
            let mut r = 0.0;
            for j in 0..n {
                if j != i {
                    c += cabs1(a[(j, i)]);
                    r += cabs1(a[(i, j)]);
                }
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let s = c + r;
            let mut f = 1.0;
            let mut g = r / RADIX;
            while c < g {
                f *= RADIX;
                c *= RADIX * RADIX;
            }
            g = r * RADIX;
            while c >= g {
                f /= RADIX;
                c /= RADIX * RADIX;
            }
            if (c + r) / f < 0.95 * s {
                converged = false;
                d[i] *= f;
                for j in 0..n {
                    a[(i, j)] /= f;
                    a[(j, i)] *= f;
                }
            }
        }
    }
    d
}

/// Householder reduction to upper Hessenberg form; accumulates the unitary factor if asked.
fn hessenberg(a: &mut CMatrix, mut q: Option<&mut CMatrix>) {
    let n = a.nrows();
    let zero = C64::new(0.0, 0.0);
    let mut v = vec![zero; n];
    for k in 0..n.saturating_sub(2) {
        let norm: f64 = (k + 1..n).map(|i| a[(i, k)].norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let x0 = a[(k + 1, k)];
        let phase = if x0.norm() == 0.0 { C64::new(1.0, 0.0) } else { x0 / x0.norm() };
        let alpha = -phase * norm;
        for i in k + 1..n {
            v[i] = a[(i, k)];
        }
        v[k + 1] -= alpha;
        let vnorm: f64 = (k + 1..n).map(|i| v[i].norm_sqr()).sum::<f64>().sqrt();
        if vnorm == 0.0 {
            continue;
        }
        for vi in &mut v[k + 1..n] {
            *vi /= vnorm;
        }
        // A <- (I - 2vv^H) A, accumulated row by row for contiguous access
        let mut w = vec![zero; n - k];
        for (i, vi) in v.iter().enumerate().take(n).skip(k + 1) {
            let vi = vi.conj();
            for (wj, &aij) in w.iter_mut().zip(&a.row(i)[k..]) {
                *wj += vi * aij;
            }
        }
        for (i, vi) in v.iter().enumerate().take(n).skip(k + 1) {
            let vi = vi * 2.0;
            for (aij, &wj) in a.row_mut(i)[k..].iter_mut().zip(&w) {
                *aij -= vi * wj;
            }
        }
        // A <- A (I - 2vv^H)
        let vt = &v[k + 1..n];
        for i in 0..n {
            let row = &mut a.row_mut(i)[k + 1..n];
            let s: C64 = row.iter().zip(vt).map(|(x, y)| x * y).sum::<C64>() * 2.0;
            for (x, y) in row.iter_mut().zip(vt) {
                *x -= s * y.conj();
            }
        }
        if let Some(q) = q.as_deref_mut() {
            for i in 0..n {
                let mut s = zero;
                for j in k + 1..n {
                    s += q[(i, j)] * v[j];
                }
                s *= 2.0;
                for j in k + 1..n {
                    q[(i, j)] -= s * v[j].conj();
                }
            }
        }
        a[(k + 1, k)] = alpha;
        for i in k + 2..n {
            a[(i, k)] = zero;
        }
    }
}

/// Two-element Householder reflector: returns `(beta, tau, v2)` with
/// `(I - tau [1 v2]^T [1 v2^*])^H (alpha, x)^T = (beta, 0)^T`.
fn reflector2(alpha: C64, x: C64) -> (C64, C64, C64) {
    let xnorm = x.norm();
    if xnorm == 0.0 && alpha.im == 0.0 {
        return (alpha, C64::new(0.0, 0.0), x);
    }
    let beta = -alpha.re.signum() * (alpha.norm_sqr() + xnorm * xnorm).sqrt();
    let beta = if beta == 0.0 { -(alpha.norm_sqr() + xnorm * xnorm).sqrt() } else { beta };
    let tau = C64::new((beta - alpha.re) / beta, -alpha.im / beta);
    let scale = C64::new(1.0, 0.0) / (alpha - beta);
    (C64::new(beta, 0.0), tau, x * scale)
}

/// Single-shift complex QR on an upper Hessenberg matrix. With `want_t` the full Schur
/// form is produced and `z` accumulates the Schur vectors.
fn hessenberg_qr(h: &mut CMatrix, mut z: Option<&mut CMatrix>, want_t: bool) -> Result<Vec<C64>> {
    let n = h.nrows();
    let zero = C64::new(0.0, 0.0);
    let mut w = vec![zero; n];
    if n == 1 {
        w[0] = h[(0, 0)];
        return Ok(w);
    }
    for j in 0..n.saturating_sub(3) {
        h[(j + 2, j)] = zero;
        h[(j + 3, j)] = zero;
    }
    if n >= 3 {
        h[(n - 1, n - 3)] = zero;
    }

    // make subdiagonal real
    for i in 1..n {
        let sub = h[(i, i - 1)];
        if sub.im != 0.0 {
            let mut sc = sub / cabs1(sub);
            sc = sc.conj() / sc.norm();
            h[(i, i - 1)] = C64::new(sub.norm(), 0.0);
            for j in i..n {
                h[(i, j)] *= sc;
            }
            for j in 0..(i + 2).min(n) {
                h[(j, i)] *= sc.conj();
            }
            if let Some(z) = z.as_deref_mut() {
                for j in 0..n {
                    z[(j, i)] *= sc.conj();
                }
            }
        }
    }

    let ulp = f64::EPSILON;
    let safmin = f64::MIN_POSITIVE;
    let smlnum = safmin * (n as f64 / ulp);
    let itmax = 30 * n.max(10);
    let mut kdefl = 0usize;
    let (mut i1, mut i2) = (0usize, n - 1);

    let mut i = n as isize - 1;
    while i >= 0 {
        let iu = i as usize;
        let mut l = 0usize;
        let mut converged = false;
        for _its in 0..=itmax {
            let mut k = iu;
            while k > l {
                if cabs1(h[(k, k - 1)]) <= smlnum {
                    break;
                }
                let mut tst = cabs1(h[(k - 1, k - 1)]) + cabs1(h[(k, k)]);
                if tst == 0.0 {
                    if k >= 2 {
                        tst += h[(k - 1, k - 2)].re.abs();
                    }
                    if k + 1 < n {
                        tst += h[(k + 1, k)].re.abs();
                    }
                }
                if h[(k, k - 1)].re.abs() <= ulp * tst {
                    let ab = cabs1(h[(k, k - 1)]).max(cabs1(h[(k - 1, k)]));
                    let ba = cabs1(h[(k, k - 1)]).min(cabs1(h[(k - 1, k)]));
                    let diff = h[(k - 1, k - 1)] - h[(k, k)];
                    let aa = cabs1(h[(k, k)]).max(cabs1(diff));
                    let bb = cabs1(h[(k, k)]).min(cabs1(diff));
                    let s = aa + ab;
                    if ba * (ab / s) <= smlnum.max(ulp * (bb * (aa / s))) {
                        break;
                    }
                }
                k -= 1;
            }
            l = k;
            if l > 0 {
                h[(l, l - 1)] = zero;
            }
            if l >= iu {
                converged = true;
                break;
            }
            kdefl += 1;
            if !want_t {
                i1 = l;
                i2 = iu;
            }

            let t = if kdefl.is_multiple_of(2 * KEXSH) {
                C64::new(DAT1 * h[(iu, iu - 1)].re.abs(), 0.0) + h[(iu, iu)]
            } else if kdefl.is_multiple_of(KEXSH) {
                C64::new(DAT1 * h[(l + 1, l)].re.abs(), 0.0) + h[(l, l)]
            } else {
                let mut t = h[(iu, iu)];
                let u = h[(iu - 1, iu)].sqrt() * h[(iu, iu - 1)].sqrt();
                let mut s = cabs1(u);
                if s != 0.0 {
                    let x = (h[(iu - 1, iu - 1)] - t) * 0.5;
                    let sx = cabs1(x);
                    s = s.max(cabs1(x));
                    let mut y = ((x / s) * (x / s) + (u / s) * (u / s)).sqrt() * s;
                    if sx > 0.0 {
                        let xs = x / sx;
                        if xs.re * y.re + xs.im * y.im < 0.0 {
                            y = -y;
                        }
                    }
                    t -= u * (u / (x + y));
                }
                t
            };

            let m = l;
            let mut h11s = h[(m, m)] - t;
            let mut h21 = h[(m + 1, m)].re;
            let s = cabs1(h11s) + h21.abs();
            h11s /= s;
            h21 /= s;
            let mut v = [h11s, C64::new(h21, 0.0)];
            for k in m..iu {
                if k > m {
                    v = [h[(k, k - 1)], h[(k + 1, k - 1)]];
                }
                let (beta, t1, v2) = reflector2(v[0], v[1]);
                if k > m {
                    h[(k, k - 1)] = beta;
                    h[(k + 1, k - 1)] = zero;
                }
                let t2 = (t1 * v2).re;
                for j in k..=i2 {
                    let sum = t1.conj() * h[(k, j)] + h[(k + 1, j)] * t2;
                    h[(k, j)] -= sum;
                    h[(k + 1, j)] -= sum * v2;
                }
                for j in i1..=(k + 2).min(iu) {
                    let sum = t1 * h[(j, k)] + h[(j, k + 1)] * t2;
                    h[(j, k)] -= sum;
                    h[(j, k + 1)] -= sum * v2.conj();
                }
                if let Some(z) = z.as_deref_mut() {
                    for j in 0..n {
                        let sum = t1 * z[(j, k)] + z[(j, k + 1)] * t2;
                        z[(j, k)] -= sum;
                        z[(j, k + 1)] -= sum * v2.conj();
                    }
                }
            }

            let temp = h[(iu, iu - 1)];
            if temp.im != 0.0 {
                let rtemp = temp.norm();
                h[(iu, iu - 1)] = C64::new(rtemp, 0.0);
                let temp = temp / rtemp;
                if i2 > iu {
                    for j in iu + 1..=i2 {
                        h[(iu, j)] *= temp.conj();
                    }
                }
                for j in i1..iu {
                    h[(j, iu)] *= temp;
                }
                if let Some(z) = z.as_deref_mut() {
                    for j in 0..n {
                        z[(j, iu)] *= temp;
                    }
                }
            }
        }
        if !converged {
            return Err(Error::SolverFailure { remaining: iu + 1 });
        }
        w[iu] = h[(iu, iu)];
        kdefl = 0;
        i = l as isize - 1;
    }
    Ok(w)
}

/// Eigenvalue multiset of a dense complex matrix.
pub fn eig_dense(a: &CMatrix) -> Result<Vec<C64>> {
    validate(a)?;
    let mut h = a.clone();
    balance(&mut h);
    hessenberg(&mut h, None);
    hessenberg_qr(&mut h, None, false)
}

/// Eigenvalues of a matrix already in upper Hessenberg form (no balancing).
pub fn eig_hessenberg(h: &CMatrix) -> Result<Vec<C64>> {
    validate(h)?;
    let mut h = h.clone();
    hessenberg_qr(&mut h, None, false)
}

/// Eigenvectors of an upper-triangular Schur factor by back substitution.
fn triangular_eigenvectors(t: &CMatrix) -> CMatrix {
    let n = t.nrows();
    let ulp = f64::EPSILON;
    let smlnum = f64::MIN_POSITIVE * (n as f64 / ulp);
    let mut x = CMatrix::zeros(n, n);
    for k in 0..n {
        let lambda = t[(k, k)];
        let smin = (ulp * cabs1(lambda)).max(smlnum);
        x[(k, k)] = C64::new(1.0, 0.0);
        for j in (0..k).rev() {
            let mut s = t[(j, k)];
            for l in j + 1..k {
                s += t[(j, l)] * x[(l, k)];
            }
            let mut d = t[(j, j)] - lambda;
            if cabs1(d) < smin {
                d = C64::new(smin, 0.0);
            }
            x[(j, k)] = -s / d;
        }
    }
    x
}

/// Eigen-decomposition with a biorthonormal left/right frame. Fails with
/// [`Error::NearExceptionalPoint`] when the eigenvector matrix is (nearly) singular.
pub fn eig_frame(a: &CMatrix) -> Result<EigenFrame> {
    validate(a)?;
    let n = a.nrows();
    let mut t = a.clone();
    let d = balance(&mut t);
    let mut z = CMatrix::identity(n);
    hessenberg(&mut t, Some(&mut z));
    let values = hessenberg_qr(&mut t, Some(&mut z), true)?;
    let y = triangular_eigenvectors(&t);
    let mut right = z.matmul(&y);
    for i in 0..n {
        for j in 0..n {
            right[(i, j)] *= d[i];
        }
    }
    for j in 0..n {
        let norm = (0..n).map(|i| right[(i, j)].norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::NearExceptionalPoint { condition: f64::INFINITY });
        }
        for i in 0..n {
            right[(i, j)] /= norm;
        }
    }
    let inv = match right.inverse() {
        Ok(inv) => inv,
        Err(_) => return Err(Error::NearExceptionalPoint { condition: f64::INFINITY }),
    };
    let condition = right.norm1() * inv.norm1();
    if !condition.is_finite() || condition > NEAR_EP_CONDITION {
        return Err(Error::NearExceptionalPoint { condition });
    }
    // an exact EP computed in floating point only reaches a condition of about
    // 1/sqrt(eps); coalesced eigenvalues with a poor basis are treated as one
    if condition > COALESCED_CONDITION {
        let scale = values.iter().map(|z| z.norm()).fold(a.max_abs(), f64::max);
        let gap = min_gap(&values);
        if gap <= COALESCENCE_TOL * scale {
            return Err(Error::NearExceptionalPoint { condition });
        }
    }
    let left = inv.adjoint();
    let overlap = right.adjoint().matmul(&right);
    Ok(EigenFrame { values, right, left, overlap, condition })
}
