//! Independent reference computations. Nothing here shares code with the
//! library paths it checks: no faer factorizations, no recurrence-based
//! digamma, no Cholesky.

use std::f64::consts::PI;

use crate::specfun::EULER_GAMMA;

/// ψ(z) from the series −γ_EM + Σ_{k≥0} (1/(k+1) − 1/(k+z)), summed to
/// N terms with an Euler–Maclaurin tail. z > 0.
pub fn digamma_series(z: f64) -> f64 {
    const N: usize = 2000;
    let mut s = 0.0;
    // small terms first
    for k in (0..N).rev() {
        let k = k as f64;
        s += 1.0 / (k + 1.0) - 1.0 / (k + z);
    }
    let n = N as f64;
    let (a, b) = (n + 1.0, n + z);
    let f = 1.0 / a - 1.0 / b;
    let f1 = -1.0 / a.powi(2) + 1.0 / b.powi(2);
    let f3 = -6.0 / a.powi(4) + 6.0 / b.powi(4);
    let f5 = -120.0 / a.powi(6) + 120.0 / b.powi(6);
    let tail = (b / a).ln() + 0.5 * f - f1 / 12.0 + f3 / 720.0 - f5 / 30240.0;
    -EULER_GAMMA + s + tail
}

/// Dense LU with partial pivoting, row-major.
pub struct Lu {
    n: usize,
    a: Vec<f64>,
    perm: Vec<usize>,
    sign: f64,
}

impl Lu {
    /// None when a pivot is exactly zero.
    pub fn new(rows: &[Vec<f64>]) -> Option<Self> {
        let n = rows.len();
        let mut a: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut sign = 1.0;
        for col in 0..n {
            let p = (col..n).max_by(|&i, &j| a[i * n + col].abs().total_cmp(&a[j * n + col].abs()))?;
            if a[p * n + col] == 0.0 {
                return None;
            }
            if p != col {
                for j in 0..n {
                    a.swap(p * n + j, col * n + j);
                }
                perm.swap(p, col);
                sign = -sign;
            }
            let piv = a[col * n + col];
            for i in col + 1..n {
                let l = a[i * n + col] / piv;
                a[i * n + col] = l;
                for j in col + 1..n {
                    a[i * n + j] -= l * a[col * n + j];
                }
            }
        }
        Some(Self { n, a, perm, sign })
    }

    /// (sign, log|det|).
    pub fn log_det(&self) -> (f64, f64) {
        let mut sign = self.sign;
        let mut l = 0.0;
        for i in 0..self.n {
            let u = self.a[i * self.n + i];
            if u < 0.0 {
                sign = -sign;
            }
            l += u.abs().ln();
        }
        (sign, l)
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            for j in 0..i {
                x[i] -= self.a[i * n + j] * x[j];
            }
        }
        for i in (0..n).rev() {
            for j in i + 1..n {
                x[i] -= self.a[i * n + j] * x[j];
            }
            x[i] /= self.a[i * n + i];
        }
        x
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// −log N(y; 0, C). None if C is singular or has a negative determinant.
pub fn gaussian_neg_log_density(cov: &[Vec<f64>], y: &[f64]) -> Option<f64> {
    let lu = Lu::new(cov)?;
    let (sign, logdet) = lu.log_det();
    if sign <= 0.0 {
        return None;
    }
    let q = dot(y, &lu.solve(y));
    Some(0.5 * q + 0.5 * logdet + 0.5 * y.len() as f64 * (2.0 * PI).ln())
}

/// −log N(Y; 0, λ⁻¹K + γI) for a Gram matrix given as rows.
pub fn free_energy_dense(k: &[Vec<f64>], y: &[f64], lambda: f64, gamma: f64) -> Option<f64> {
    let cov: Vec<Vec<f64>> = k
        .iter()
        .enumerate()
        .map(|(i, row)| {
            row.iter()
                .enumerate()
                .map(|(j, v)| v / lambda + if i == j { gamma } else { 0.0 })
                .collect()
        })
        .collect();
    gaussian_neg_log_density(&cov, y)
}

/// −log ∫ N(Y; Φw, γI) N(w; 0, λ⁻¹I) dw with features φ(x) = x/√d.
pub fn weight_space_neg_log_marginal(x: &[Vec<f64>], y: &[f64], lambda: f64, gamma: f64) -> Option<f64> {
    let n = x.len();
    let d = x.first()?.len();
    let s = 1.0 / (d as f64).sqrt();
    let a: Vec<Vec<f64>> = (0..d)
        .map(|i| {
            (0..d)
                .map(|j| {
                    let g: f64 = x.iter().map(|r| r[i] * r[j] * s * s).sum();
                    g / gamma + if i == j { lambda } else { 0.0 }
                })
                .collect()
        })
        .collect();
    let b: Vec<f64> = (0..d).map(|i| x.iter().zip(y).map(|(r, v)| r[i] * s * v).sum::<f64>() / gamma).collect();
    let lu = Lu::new(&a)?;
    let (sign, logdet_a) = lu.log_det();
    if sign <= 0.0 {
        return None;
    }
    let (n, d) = (n as f64, d as f64);
    Some(
        -0.5 * d * lambda.ln() + 0.5 * n * (2.0 * PI * gamma).ln() + 0.5 * logdet_a - 0.5 * dot(&b, &lu.solve(&b))
            + dot(y, y) / (2.0 * gamma),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn series_digamma_values() {
        assert!((digamma_series(1.0) + EULER_GAMMA).abs() < 1e-13);
        assert!((digamma_series(0.5) - (-EULER_GAMMA - 2.0 * 2f64.ln())).abs() < 1e-13);
    }

    #[test]
    fn lu_solves_and_det() {
        let a = vec![vec![0.0, 2.0, 1.0], vec![1.0, 1.0, 0.0], vec![3.0, 0.0, 1.0]];
        let lu = Lu::new(&a).unwrap();
        // det = 0(1) − 2(1) + 1(−3) = −5
        let (s, l) = lu.log_det();
        assert_eq!(s, -1.0);
        assert!((l - 5f64.ln()).abs() < 1e-14);
        let x = lu.solve(&[3.0, 2.0, 4.0]);
        for (row, b) in a.iter().zip([3.0, 2.0, 4.0]) {
            assert!((dot(row, &x) - b).abs() < 1e-14);
        }
    }

    #[test]
    fn one_point_density() {
        let v = free_energy_dense(&[vec![1.0]], &[1.0], 1.0, 1.0).unwrap();
        assert!((v - (0.5 * (4.0 * PI).ln() + 0.25)).abs() < 1e-15);
    }
}
