use super::matrix::CMatrix;
use crate::{Error, Result, C64};

const MAX_ITER: usize = 1000;

/// Evaluates `p(z)` for ascending coefficients by Horner's rule.
pub fn poly_eval(c: &[C64], z: C64) -> C64 {
    c.iter().rev().fold(C64::new(0.0, 0.0), |acc, &a| acc * z + a)
}

/// Newton ratio `p(z)/p'(z)`; evaluates the reversed polynomial for |z| > 1.
fn newton_ratio(c: &[C64], z: C64) -> C64 {
    let n = c.len() - 1;
    if z.norm() <= 1.0 {
        let mut p = c[n];
        let mut dp = C64::new(0.0, 0.0);
        for &a in c[..n].iter().rev() {
            dp = dp * z + p;
            p = p * z + a;
        }
        p / dp
    } else {
        // p(z) = z^n q(1/z), q has coefficients reversed
        let y = C64::new(1.0, 0.0) / z;
        let mut q = c[0];
        let mut dq = C64::new(0.0, 0.0);
        for &a in c[1..].iter() {
            dq = dq * y + q;
            q = q * y + a;
        }
        // p'/p = n/z - y^2 q'(y)/q(y)
        let ratio = C64::new(n as f64, 0.0) * y - y * y * dq / q;
        C64::new(1.0, 0.0) / ratio
    }
}

/// All roots of the polynomial with ascending coefficients `c`, with multiplicity.
///
/// Trailing zero coefficients are trimmed; exact zero roots are split off before an
/// Aberth-Ehrlich iteration, followed by one Newton polish step per root.
pub fn poly_roots(c: &[C64]) -> Result<Vec<C64>> {
    if c.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NonFinite("polynomial coefficients"));
    }
    let top = match c.iter().rposition(|z| *z != C64::new(0.0, 0.0)) {
        Some(t) => t,
        None => return Err(Error::InvalidInput("zero polynomial".into())),
    };
    let low = c.iter().position(|z| *z != C64::new(0.0, 0.0)).unwrap_or(0);
    let mut roots = vec![C64::new(0.0, 0.0); low];
    let p = &c[low..=top];
    let n = p.len() - 1;
    if n == 0 {
        return Ok(roots);
    }
    if n == 1 {
        roots.push(-p[0] / p[1]);
        return Ok(roots);
    }

    let radius = (p[0].norm() / p[n].norm()).powf(1.0 / n as f64);
    let mut z: Vec<C64> = (0..n)
        .map(|k| C64::from_polar(radius, 2.0 * std::f64::consts::PI * k as f64 / n as f64 + 0.4))
        .collect();
    let mut done = vec![false; n];
    for _ in 0..MAX_ITER {
        if done.iter().all(|&d| d) {
            break;
        }
        for i in 0..n {
            if done[i] {
                continue;
            }
            let ratio = newton_ratio(p, z[i]);
            if !ratio.re.is_finite() || !ratio.im.is_finite() {
                done[i] = true;
                continue;
            }
            let mut s = C64::new(0.0, 0.0);
            for j in 0..n {
                if j != i {
                    s += C64::new(1.0, 0.0) / (z[i] - z[j]);
                }
            }
            let w = ratio / (C64::new(1.0, 0.0) - ratio * s);
            if !w.re.is_finite() || !w.im.is_finite() {
                done[i] = true;
                continue;
            }
            z[i] -= w;
            if w.norm() <= 4.0 * f64::EPSILON * z[i].norm() {
                done[i] = true;
            }
        }
    }
    for zi in z.iter_mut() {
        let before = poly_eval(p, *zi).norm();
        let cand = *zi - newton_ratio(p, *zi);
        if cand.re.is_finite() && cand.im.is_finite() && poly_eval(p, cand).norm() < before {
            *zi = cand;
        }
    }
    roots.extend(z);
    Ok(roots)
}

/// Expands `Π (z - r_i)` into ascending coefficients.
pub fn poly_from_roots(roots: &[C64]) -> Vec<C64> {
    let mut c = vec![C64::new(1.0, 0.0)];
    for &r in roots {
        let mut next = vec![C64::new(0.0, 0.0); c.len() + 1];
        for (k, &a) in c.iter().enumerate() {
            next[k + 1] += a;
            next[k] -= a * r;
        }
        c = next;
    }
    c
}

/// Companion matrix of the polynomial with ascending coefficients (leading coefficient nonzero).
pub fn companion(c: &[C64]) -> Result<CMatrix> {
    let n = c.len().saturating_sub(1);
    if n == 0 || c[n] == C64::new(0.0, 0.0) {
        return Err(Error::InvalidInput("companion needs degree >= 1 with nonzero leading term".into()));
    }
    let mut m = CMatrix::zeros(n, n);
    for i in 1..n {
        m[(i, i - 1)] = C64::new(1.0, 0.0);
    }
    for i in 0..n {
        m[(i, n - 1)] = -c[i] / c[n];
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn sorted(mut v: Vec<C64>) -> Vec<C64> {
        v.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
        v
    }

    #[test]
    fn difference_of_squares() {
        let r = sorted(poly_roots(&[c(-1.0), c(0.0), c(1.0)]).unwrap());
        assert!((r[0] - c(-1.0)).norm() < 1e-14 && (r[1] - c(1.0)).norm() < 1e-14);
    }

    #[test]
    fn linear() {
        let r = poly_roots(&[c(-1.0), c(1.0)]).unwrap();
        assert_eq!(r.len(), 1);
        assert!((r[0] - c(1.0)).norm() < 1e-15);
    }

    #[test]
    fn trailing_zeros_and_zero_roots() {
        let r = sorted(poly_roots(&[c(0.0), c(0.0), c(-4.0), c(1.0), c(0.0)]).unwrap());
        assert_eq!(r.len(), 3);
        assert_eq!(r[0], c(0.0));
        assert_eq!(r[1], c(0.0));
        assert!((r[2] - c(4.0)).norm() < 1e-14);
    }

    #[test]
    fn zero_polynomial_rejected() {
        assert!(matches!(poly_roots(&[c(0.0), c(0.0)]), Err(Error::InvalidInput(_))));
        assert!(poly_roots(&[]).is_err());
    }

    #[test]
    fn constant_has_no_roots() {
        assert!(poly_roots(&[c(3.0)]).unwrap().is_empty());
    }

    #[test]
    fn double_root_residual() {
        // (z - 2)^2 (z + i)
        let coeffs = poly_from_roots(&[c(2.0), c(2.0), C64::new(0.0, -1.0)]);
        let r = poly_roots(&coeffs).unwrap();
        let scale = coeffs.iter().map(|z| z.norm()).fold(0.0, f64::max);
        for z in r {
            assert!(poly_eval(&coeffs, z).norm() / scale < 1e-12);
        }
    }

    #[test]
    fn widely_spread_moduli() {
        let roots = [c(1e-3), c(1.0), c(1e3), C64::new(0.0, 30.0)];
        let coeffs = poly_from_roots(&roots);
        let got = poly_roots(&coeffs).unwrap();
        for r in roots {
            let best = got.iter().map(|g| (g - r).norm() / r.norm()).fold(f64::INFINITY, f64::min);
            assert!(best < 1e-10, "root {r} missing, best rel err {best}");
        }
    }
}
