//! Golden-section search.

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Minimizes a unimodal `f` on [lo, hi] by golden-section search.
/// Returns (argmin, min).
pub fn minimize_scalar<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, iters: usize) -> (f64, f64) {
    let (mut a, mut b) = if lo <= hi { (lo, hi) } else { (hi, lo) };
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..iters {
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
        if b - a <= f64::EPSILON * (a.abs() + b.abs()) {
            break;
        }
    }
    let x = 0.5 * (a + b);
    let fx = f(x);
    let best = [(x, fx), (c, fc), (d, fd)]
        .into_iter()
        .fold((x, fx), |acc, p| if p.1 < acc.1 { p } else { acc });
    best
}

/// Golden-section search in log x over [lo, hi], lo > 0.
pub fn minimize_log<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, iters: usize) -> (f64, f64) {
    let (t, v) = minimize_scalar(|t| f(t.exp()), lo.ln(), hi.ln(), iters);
    (t.exp(), v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parabola() {
        let (x, v) = minimize_scalar(|x| (x - 2.0) * (x - 2.0), 0.0, 10.0, 200);
        assert!((x - 2.0).abs() < 1e-8);
        assert!(v < 1e-15);
    }

    #[test]
    fn log_scale() {
        let (x, _) = minimize_log(|x| (x.ln() - 3.0f64.ln()).powi(2), 1e-6, 1e6, 200);
        assert!((x - 3.0).abs() < 1e-7);
    }
}
