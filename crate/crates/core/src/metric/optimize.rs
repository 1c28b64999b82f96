const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Golden-section minimiser of a unimodal function on `[a, b]`.
pub(crate) fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() <= tol * (1.0 + a.abs().max(b.abs())) {
            break;
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    if fc <= fd { c } else { d }
}

pub(crate) fn golden_max(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    golden_min(|x| -f(x), a, b, tol)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_finds_parabola_vertex() {
        let x = golden_min(|x| (x - 0.3).powi(2), -1.0, 2.0, 1e-12);
        assert!((x - 0.3).abs() < 1e-6);
        let y = golden_max(|x| -(x + 0.7).abs(), -2.0, 1.0, 1e-12);
        assert!((y + 0.7).abs() < 1e-9);
    }
}
