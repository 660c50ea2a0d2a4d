//! Digamma, log-gamma and the digamma summation identities.

use crate::error::{domain, Result};

/// Euler–Mascheroni constant; ψ(1) = −EULER_GAMMA.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

// B_{2k} / (2k) for k = 1..7.
const ASYMPTOTIC: [f64; 7] = [
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32760.0,
    1.0 / 12.0,
];

/// ψ(z) for z > 0.
pub fn digamma(z: f64) -> Result<f64> {
    if !z.is_finite() || z <= 0.0 {
        return domain(format!("digamma needs finite z > 0, got {z}"));
    }
    Ok(digamma_unchecked(z))
}

pub(crate) fn digamma_unchecked(mut z: f64) -> f64 {
    let mut acc = 0.0;
    while z < 10.0 {
        acc -= 1.0 / z;
        z += 1.0;
    }
    let inv2 = 1.0 / (z * z);
    let mut p = 1.0;
    let mut tail = 0.0;
    for b in ASYMPTOTIC {
        p *= inv2;
        tail += b * p;
    }
    acc + z.ln() - 0.5 / z - tail
}

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// log Γ(z) for z > 0 (Lanczos, g = 7).
pub fn ln_gamma(z: f64) -> Result<f64> {
    if !z.is_finite() || z <= 0.0 {
        return domain(format!("ln_gamma needs finite z > 0, got {z}"));
    }
    Ok(ln_gamma_unchecked(z))
}

pub(crate) fn ln_gamma_unchecked(z: f64) -> f64 {
    if z < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * z).sin()).ln() - ln_gamma_unchecked(1.0 - z);
    }
    let z = z - 1.0;
    let mut a = LANCZOS[0];
    let t = z + LANCZOS_G + 0.5;
    for (i, &c) in LANCZOS.iter().enumerate().skip(1) {
        a += c / (z + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (z + 0.5) * t.ln() - t + a.ln()
}

/// Σ_{i=1}^n ψ(z+i) via the closed form (n+z)ψ(n+z) − zψ(z) − n.
pub fn sum_digamma(n: u64, z: f64) -> Result<f64> {
    if n == 0 {
        return domain("sum_digamma needs n >= 1");
    }
    let nz = n as f64 + z;
    Ok(nz * digamma(nz)? - z * digamma(z)? - n as f64)
}

/// Σ_{i=1}^d ψ((n−i+1)/2), computed by direct summation.
pub fn sum_digamma_half(n: u64, d: u64) -> Result<f64> {
    if d == 0 || n <= d {
        return domain(format!("sum_digamma_half needs n > d >= 1, got n = {n}, d = {d}"));
    }
    Ok(sum_digamma_half_direct(n, d))
}

fn sum_digamma_half_direct(n: u64, d: u64) -> f64 {
    (1..=d)
        .map(|i| digamma_unchecked((n - i + 1) as f64 / 2.0))
        .sum()
}

/// Closed form of Σ_{i=1}^d ψ((n−i+1)/2), split by parity into two
/// sum_digamma chains. Only defined for n ≥ d+2.
pub fn sum_digamma_half_closed(n: u64, d: u64) -> Result<f64> {
    if d == 0 || n < d + 2 {
        return domain(format!("closed form needs n >= d + 2, got n = {n}, d = {d}"));
    }
    let x = (n - d - 1) as f64 / 2.0;
    let y = (n - d) as f64 / 2.0;
    // i = d, d-2, ... contribute ψ(x+1), ψ(x+2), ...; i = d-1, d-3, ... give ψ(y+1), ...
    let ka = d.div_ceil(2) as f64;
    let kb = (d / 2) as f64;
    let chain = |start: f64, k: f64| {
        if k == 0.0 {
            0.0
        } else {
            (k + start) * digamma_unchecked(k + start) - start * digamma_unchecked(start) - k
        }
    };
    Ok(chain(x, ka) + chain(y, kb))
}

/// E log det(WᵀW) for an n×d standard Gaussian W.
pub fn expected_logdet_wishart(n: u64, d: u64) -> Result<f64> {
    if d == 0 || d > n {
        return domain(format!("expected_logdet_wishart needs n >= d >= 1, got n = {n}, d = {d}"));
    }
    Ok(d as f64 * std::f64::consts::LN_2 + sum_digamma_half_direct(n, d))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b}");
    }

    #[test]
    fn digamma_values() {
        close(digamma(1.0).unwrap(), -0.577_215_664_9, 1e-10);
        close(digamma(2.0).unwrap(), 0.422_784_335_1, 1e-10);
        close(digamma(0.5).unwrap(), -1.963_510_026_0, 1e-10);
        assert!(digamma(0.0).is_err());
        assert!(digamma(f64::NAN).is_err());
        assert!(digamma(-1.0).is_err());
    }

    #[test]
    fn ln_gamma_values() {
        close(ln_gamma(1.0).unwrap(), 0.0, 1e-13);
        close(ln_gamma(0.5).unwrap(), 0.5 * std::f64::consts::PI.ln(), 1e-13);
        close(ln_gamma(10.0).unwrap(), 362_880f64.ln(), 1e-11);
        close(ln_gamma(0.1).unwrap(), 2.252_712_651_734_206, 1e-12);
    }

    #[test]
    fn sums() {
        close(sum_digamma(1, 1.0).unwrap(), 0.422_784_335_1, 1e-10);
        close(sum_digamma(2, 1.0).unwrap(), 1.345_568_670_2, 1e-10);
        close(sum_digamma(3, 0.5).unwrap(), 1.842_803_255_269_063, 1e-12);
        close(sum_digamma_half(3, 1).unwrap(), 0.036_489_974_0, 1e-10);
        close(sum_digamma_half(4, 2).unwrap(), 0.459_274_309_1, 1e-10);
        // ψ(5) + ψ(4.5) + ψ(4), 30-digit reference
        close(sum_digamma_half(10, 3).unwrap(), 4.151_106_263_223_130, 1e-12);
        assert!(sum_digamma_half(3, 3).is_err());
        assert!(sum_digamma_half_closed(4, 3).is_err());
    }

    #[test]
    fn wishart() {
        close(expected_logdet_wishart(3, 1).unwrap(), 0.729_637_154_538_521_8, 1e-12);
        close(expected_logdet_wishart(2, 1).unwrap(), 0.115_931_5, 1e-7);
        close(expected_logdet_wishart(5, 2).unwrap(), 2.512_235_3, 1e-7);
        assert!(expected_logdet_wishart(2, 3).is_err());
    }
}
