//! Finite-n Gaussian process quantities.
//!
//! Everything that touches (K + λγI)⁻¹ goes through one Cholesky factor.

use std::f64::consts::PI;

use faer::linalg::matmul::matmul;
use faer::linalg::triangular_solve::solve_lower_triangular_in_place;
use faer::{Accum, Mat, MatRef, Par, Side};
use rand::seq::index;
use rand::Rng;

use crate::error::{Error, Result};
use crate::kernels::{self, KernelSpec};
use crate::rng;

/// Prior precision scale λ and temperature γ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperParams {
    pub lambda: f64,
    pub gamma: f64,
}

impl HyperParams {
    pub fn new(lambda: f64, gamma: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite() && gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::Domain(format!(
                "lambda and gamma must be positive, got lambda = {lambda}, gamma = {gamma}"
            )));
        }
        if !(lambda * gamma > 0.0) {
            return Err(Error::Domain("lambda * gamma underflows".into()));
        }
        Ok(Self { lambda, gamma })
    }

    /// The tempered posterior λ = μ/γ.
    pub fn tempered(mu: f64, gamma: f64) -> Result<Self> {
        Self::new(mu / gamma, gamma)
    }

    /// The ridge λγ added to the Gram matrix.
    pub fn ridge(&self) -> f64 {
        self.lambda * self.gamma
    }
}

/// Cholesky factor of K + ridge·I.
#[derive(Debug, Clone)]
pub struct RidgeFactor {
    l: Mat<f64>,
}

impl RidgeFactor {
    pub fn new(k: MatRef<'_, f64>, ridge: f64) -> Result<Self> {
        let n = k.nrows();
        if k.ncols() != n {
            return Err(Error::DimensionMismatch(format!("Gram is {}x{}", n, k.ncols())));
        }
        let mut a = k.to_owned();
        for i in 0..n {
            a[(i, i)] += ridge;
        }
        let llt = a.llt(Side::Lower).map_err(|_| Error::FactorizationFailure { n })?;
        let l = llt.L().to_owned();
        if (0..n).any(|i| !(l[(i, i)] > 0.0) || !l[(i, i)].is_finite()) {
            return Err(Error::FactorizationFailure { n });
        }
        Ok(Self { l })
    }

    pub fn n(&self) -> usize {
        self.l.nrows()
    }

    /// log det(K + ridge·I).
    pub fn logdet(&self) -> f64 {
        2.0 * (0..self.n()).map(|i| self.l[(i, i)].ln()).sum::<f64>()
    }

    /// L⁻¹B.
    pub fn half_solve(&self, b: MatRef<'_, f64>) -> Mat<f64> {
        let mut x = b.to_owned();
        solve_lower_triangular_in_place(self.l.as_ref(), x.as_mut(), Par::Seq);
        x
    }

    /// (K + ridge·I)⁻¹B.
    pub fn solve(&self, b: MatRef<'_, f64>) -> Mat<f64> {
        let mut x = self.half_solve(b);
        faer::linalg::triangular_solve::solve_upper_triangular_in_place(
            self.l.transpose(),
            x.as_mut(),
            Par::Seq,
        );
        x
    }

    /// yᵀ(K + ridge·I)⁻¹y.
    pub fn quad_form(&self, y: &[f64]) -> f64 {
        let z = self.half_solve(col(y).as_ref());
        (0..z.nrows()).map(|i| z[(i, 0)] * z[(i, 0)]).sum()
    }

    /// tr((K + ridge·I)⁻¹) = ‖L⁻¹‖²_F.
    pub fn trace_inverse(&self) -> f64 {
        let n = self.n();
        let linv = self.half_solve(Mat::<f64>::identity(n, n).as_ref());
        let mut s = 0.0;
        for j in 0..n {
            for i in j..n {
                s += linv[(i, j)] * linv[(i, j)];
            }
        }
        s
    }
}

pub(crate) fn col(y: &[f64]) -> Mat<f64> {
    Mat::from_fn(y.len(), 1, |i, _| y[i])
}

fn check_len(what: &str, got: usize, want: usize) -> Result<()> {
    if got == want {
        Ok(())
    } else {
        Err(Error::DimensionMismatch(format!("{what} has length {got}, expected {want}")))
    }
}

/// The free energy pieces for labels Y at one (λ, γ).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FreeEnergyParts {
    /// Yᵀ(K + λγI)⁻¹Y
    pub quad: f64,
    /// log det(K + λγI)
    pub logdet: f64,
    pub n: usize,
}

impl FreeEnergyParts {
    pub fn compute(factor: &RidgeFactor, y: &[f64]) -> Result<Self> {
        check_len("Y", y.len(), factor.n())?;
        Ok(Self { quad: factor.quad_form(y), logdet: factor.logdet(), n: factor.n() })
    }

    pub fn value(&self, lambda: f64) -> f64 {
        0.5 * lambda * self.quad + 0.5 * self.logdet - 0.5 * self.n as f64 * (lambda / (2.0 * PI)).ln()
    }
}

/// Bayes free energy F_n = −log Z_n.
pub fn free_energy(k: MatRef<'_, f64>, y: &[f64], hp: &HyperParams) -> Result<f64> {
    let factor = RidgeFactor::new(k, hp.ridge())?;
    Ok(FreeEnergyParts::compute(&factor, y)?.value(hp.lambda))
}

/// Mean f̄(x), covariance λ⁻¹Σ(x) and Σ(x) at m test points.
#[derive(Debug, Clone)]
pub struct PosteriorPredictive {
    pub mean: Vec<f64>,
    pub cov: Mat<f64>,
    pub raw_sigma: Mat<f64>,
}

impl PosteriorPredictive {
    pub fn trace_sigma(&self) -> f64 {
        (0..self.raw_sigma.nrows()).map(|i| self.raw_sigma[(i, i)]).sum()
    }
}

pub fn posterior_predictive(
    k: MatRef<'_, f64>,
    k_x: MatRef<'_, f64>,
    k_xx: MatRef<'_, f64>,
    y: &[f64],
    hp: &HyperParams,
) -> Result<PosteriorPredictive> {
    let n = k.nrows();
    let m = k_xx.nrows();
    check_len("Y", y.len(), n)?;
    if k_x.nrows() != n || k_x.ncols() != m || k_xx.ncols() != m {
        return Err(Error::DimensionMismatch(format!(
            "k_x is {}x{}, expected {n}x{m}",
            k_x.nrows(),
            k_x.ncols()
        )));
    }
    let mut raw_sigma = k_xx.to_owned();
    let mut mean = vec![0.0; m];
    if n > 0 {
        let factor = RidgeFactor::new(k, hp.ridge())?;
        let alpha = factor.solve(col(y).as_ref());
        for (j, mj) in mean.iter_mut().enumerate() {
            *mj = (0..n).map(|i| k_x[(i, j)] * alpha[(i, 0)]).sum();
        }
        let v = factor.half_solve(k_x);
        matmul(raw_sigma.as_mut(), Accum::Add, v.transpose(), v.as_ref(), -1.0, Par::Seq);
        // restore exact symmetry lost to rounding in the product
        for j in 0..m {
            for i in j + 1..m {
                let s = 0.5 * (raw_sigma[(i, j)] + raw_sigma[(j, i)]);
                raw_sigma[(i, j)] = s;
                raw_sigma[(j, i)] = s;
            }
        }
    }
    let cov = Mat::from_fn(m, m, |i, j| raw_sigma[(i, j)] / hp.lambda);
    Ok(PosteriorPredictive { mean, cov, raw_sigma })
}

/// ‖f̄ − y‖² and tr Σ, which is all the loss functions need.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictiveSummary {
    pub sq_err: f64,
    pub trace_sigma: f64,
    pub m: usize,
}

impl PredictiveSummary {
    pub fn of(pp: &PosteriorPredictive, y: &[f64]) -> Result<Self> {
        check_len("y", y.len(), pp.mean.len())?;
        let sq_err = pp.mean.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
        Ok(Self { sq_err, trace_sigma: pp.trace_sigma(), m: y.len() })
    }

    /// Summary without forming the m×m covariance.
    pub fn compute(
        factor: &RidgeFactor,
        train_y: &[f64],
        k_x: MatRef<'_, f64>,
        k_xx_diag: &[f64],
        y: &[f64],
    ) -> Result<Self> {
        let n = factor.n();
        let m = y.len();
        check_len("Y", train_y.len(), n)?;
        check_len("test diagonal", k_xx_diag.len(), m)?;
        if k_x.nrows() != n || k_x.ncols() != m {
            return Err(Error::DimensionMismatch("k_x shape".into()));
        }
        let z = factor.half_solve(col(train_y).as_ref());
        let v = factor.half_solve(k_x);
        let mut sq_err = 0.0;
        let mut trace_sigma = 0.0;
        for j in 0..m {
            let mut mean = 0.0;
            let mut explained = 0.0;
            for i in 0..n {
                mean += v[(i, j)] * z[(i, 0)];
                explained += v[(i, j)] * v[(i, j)];
            }
            sq_err += (mean - y[j]) * (mean - y[j]);
            trace_sigma += k_xx_diag[j] - explained;
        }
        Ok(Self { sq_err, trace_sigma, m })
    }

    pub fn ppl2(&self, hp: &HyperParams) -> f64 {
        self.sq_err + self.trace_sigma / hp.lambda
    }

    pub fn ppnll(&self, hp: &HyperParams) -> f64 {
        let g = hp.gamma;
        self.sq_err / (2.0 * g)
            + self.trace_sigma / (2.0 * hp.lambda * g)
            + 0.5 * self.m as f64 * (2.0 * PI * g).ln()
    }
}

/// Posterior predictive L² loss.
pub fn ppl2(pp: &PosteriorPredictive, y: &[f64], hp: &HyperParams) -> Result<f64> {
    Ok(PredictiveSummary::of(pp, y)?.ppl2(hp))
}

/// Posterior predictive negative log-likelihood.
pub fn ppnll(pp: &PosteriorPredictive, y: &[f64], hp: &HyperParams) -> Result<f64> {
    Ok(PredictiveSummary::of(pp, y)?.ppnll(hp))
}

/// γ* = mse/m and the PPNLL at γ* under λ = μ/γ.
pub fn optimal_ppnll(mse: f64, trace_sigma: f64, m: usize, mu: f64) -> Result<(f64, f64)> {
    if !(mse > 0.0 && mse.is_finite()) || m == 0 || !(mu > 0.0) || !(trace_sigma >= 0.0) {
        return Err(Error::Domain(format!(
            "optimal_ppnll needs mse > 0, m >= 1, mu > 0, trace >= 0; got {mse}, {m}, {mu}, {trace_sigma}"
        )));
    }
    let m_f = m as f64;
    let gamma = mse / m_f;
    Ok((gamma, 0.5 * m_f * (1.0 + (2.0 * PI * gamma).ln()) + trace_sigma / (2.0 * mu)))
}

/// log N(y; f̄, λ⁻¹Σ + γI).
pub fn log_predictive_density(
    k: MatRef<'_, f64>,
    k_x: MatRef<'_, f64>,
    k_xx: MatRef<'_, f64>,
    train_y: &[f64],
    y: &[f64],
    hp: &HyperParams,
) -> Result<f64> {
    let pp = posterior_predictive(k, k_x, k_xx, train_y, hp)?;
    check_len("y", y.len(), pp.mean.len())?;
    let m = y.len();
    let mut c = pp.cov;
    for i in 0..m {
        c[(i, i)] += hp.gamma;
    }
    let factor = RidgeFactor::new(c.as_ref(), 0.0)?;
    let r: Vec<f64> = y.iter().zip(&pp.mean).map(|(a, b)| a - b).collect();
    Ok(-0.5 * factor.quad_form(&r) - 0.5 * factor.logdet() - 0.5 * m as f64 * (2.0 * PI).ln())
}

/// How test subsets are chosen for the leave-k-out score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CvMode {
    /// All C(n, k) subsets and every held-out index.
    Exact,
    /// `reps` random (subset, index) draws.
    Sampled { reps: usize, seed: u64 },
}

/// Evaluation budget for exact enumeration.
pub const CV_EXACT_BUDGET: u128 = 100_000;

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    let mut b: u128 = 1;
    for i in 0..k {
        b = b * (n - i) as u128 / (i + 1) as u128;
    }
    b
}

/// Leave-k-out score S_k.
pub fn cv_score(
    x: MatRef<'_, f64>,
    y: &[f64],
    k: usize,
    spec: &KernelSpec,
    hp: &HyperParams,
    mode: CvMode,
) -> Result<f64> {
    let n = x.nrows();
    check_len("Y", y.len(), n)?;
    if k == 0 || k > n {
        return Err(Error::Domain(format!("leave-k-out needs 1 <= k <= n, got k = {k}, n = {n}")));
    }
    let full = kernels::gram(spec, x)?;
    let held_out = |test: &[usize], i: usize| -> Result<f64> {
        let train: Vec<usize> = (0..n).filter(|j| !test.contains(j)).collect();
        let kt = Mat::from_fn(train.len(), train.len(), |a, b| full[(train[a], train[b])]);
        let kx = Mat::from_fn(train.len(), 1, |a, _| full[(train[a], i)]);
        let kxx = Mat::from_fn(1, 1, |_, _| full[(i, i)]);
        let ty: Vec<f64> = train.iter().map(|&j| y[j]).collect();
        Ok(-log_predictive_density(kt.as_ref(), kx.as_ref(), kxx.as_ref(), &ty, &[y[i]], hp)?)
    };
    match mode {
        CvMode::Exact => {
            let needed = binomial(n, k) * k as u128;
            if needed > CV_EXACT_BUDGET {
                return Err(Error::CombinatorialBudget { needed, budget: CV_EXACT_BUDGET });
            }
            let mut total = 0.0;
            let mut count = 0usize;
            let mut subset: Vec<usize> = (0..k).collect();
            loop {
                for &i in &subset {
                    total += held_out(&subset, i)?;
                    count += 1;
                }
                // next combination in lexicographic order
                let mut p = k;
                while p > 0 && subset[p - 1] == n - k + p - 1 {
                    p -= 1;
                }
                if p == 0 {
                    break;
                }
                subset[p - 1] += 1;
                for q in p..k {
                    subset[q] = subset[q - 1] + 1;
                }
            }
            Ok(total / count as f64)
        }
        CvMode::Sampled { reps, seed } => {
            if reps == 0 {
                return Err(Error::Domain("sampled leave-k-out needs reps >= 1".into()));
            }
            let mut r = rng::stream(seed, &[k as u64]);
            let mut total = 0.0;
            for _ in 0..reps {
                let subset = index::sample(&mut r, n, k).into_vec();
                let i = subset[r.random_range(0..k)];
                total += held_out(&subset, i)?;
            }
            Ok(total / reps as f64)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b}");
    }

    fn one() -> Mat<f64> {
        Mat::from_fn(1, 1, |_, _| 1.0)
    }

    #[test]
    fn free_energy_one_point() {
        let hp = HyperParams::new(1.0, 1.0).unwrap();
        close(free_energy(one().as_ref(), &[1.0], &hp).unwrap(), 0.5 * (4.0 * PI).ln() + 0.25, 1e-14);
    }

    #[test]
    fn free_energy_zero_labels() {
        let k = Mat::from_fn(3, 3, |i, j| if i == j { 2.0 } else { 0.5 });
        let hp = HyperParams::new(0.7, 0.3).unwrap();
        let f = RidgeFactor::new(k.as_ref(), hp.ridge()).unwrap();
        let expect = 0.5 * f.logdet() - 1.5 * (0.7 / (2.0 * PI)).ln();
        close(free_energy(k.as_ref(), &[0.0; 3], &hp).unwrap(), expect, 1e-14);
    }

    #[test]
    fn factorization_failure_is_reported() {
        let k = Mat::from_fn(2, 2, |i, j| if i == j { 1.0 } else { 2.0 });
        let hp = HyperParams::new(1.0, 1e-3).unwrap();
        assert!(matches!(
            free_energy(k.as_ref(), &[1.0, 1.0], &hp),
            Err(Error::FactorizationFailure { n: 2 })
        ));
    }

    #[test]
    fn predictive_one_point() {
        // linear kernel, X = [1], test x = 2
        let k = one();
        let kx = Mat::from_fn(1, 1, |_, _| 2.0);
        let kxx = Mat::from_fn(1, 1, |_, _| 4.0);
        let hp = HyperParams::new(1.0, 1.0).unwrap();
        let pp = posterior_predictive(k.as_ref(), kx.as_ref(), kxx.as_ref(), &[1.0], &hp).unwrap();
        close(pp.mean[0], 1.0, 1e-14);
        close(pp.raw_sigma[(0, 0)], 2.0, 1e-14);
        close(pp.cov[(0, 0)], 2.0, 1e-14);
        close(ppl2(&pp, &[1.0], &hp).unwrap(), 2.0, 1e-14);
    }

    #[test]
    fn predictive_prior_reversion() {
        let k = Mat::<f64>::identity(2, 2);
        let kx = Mat::<f64>::zeros(2, 1);
        let kxx = Mat::from_fn(1, 1, |_, _| 0.5);
        let hp = HyperParams::new(1.0, 1.0).unwrap();
        let pp = posterior_predictive(k.as_ref(), kx.as_ref(), kxx.as_ref(), &[3.0, -1.0], &hp).unwrap();
        assert_eq!(pp.mean, vec![0.0]);
        close(pp.raw_sigma[(0, 0)], 0.5, 0.0);
        close(ppl2(&pp, &[1.0], &hp).unwrap(), 1.5, 1e-15);
    }

    #[test]
    fn ppnll_examples() {
        let s = PredictiveSummary { sq_err: 1.0, trace_sigma: 1.0, m: 1 };
        let hp = HyperParams::new(1.0, 1.0).unwrap();
        close(s.ppl2(&hp), 2.0, 0.0);
        close(s.ppnll(&hp), 1.918_938_5, 1e-7);
    }

    #[test]
    fn optimal_ppnll_examples() {
        let (g, v) = optimal_ppnll(0.5, 1.0, 1, 1.0).unwrap();
        close(g, 0.5, 0.0);
        close(v, 1.572_364_9, 1e-7);
        let (_, v) = optimal_ppnll(1.0 / (2.0 * PI), 0.0, 1, 1.0).unwrap();
        close(v, 0.5, 1e-15);
        assert_eq!(optimal_ppnll(2.0, 0.0, 2, 1.0).unwrap().0, 1.0);
        assert!(optimal_ppnll(0.0, 1.0, 1, 1.0).is_err());
    }

    #[test]
    fn prior_predictive_density() {
        let k = Mat::<f64>::zeros(0, 0);
        let kx = Mat::<f64>::zeros(0, 1);
        let hp = HyperParams::new(1.0, 1.0).unwrap();
        let lp = log_predictive_density(k.as_ref(), kx.as_ref(), one().as_ref(), &[], &[1.0], &hp).unwrap();
        close(lp, -0.5 * (4.0 * PI).ln() - 0.25, 1e-14);
    }

    #[test]
    fn exact_budget() {
        let x = Mat::from_fn(30, 2, |i, j| (i * 3 + j) as f64 * 0.1);
        let y = vec![0.0; 30];
        let hp = HyperParams::new(1.0, 1.0).unwrap();
        assert!(matches!(
            cv_score(x.as_ref(), &y, 10, &KernelSpec::linear(), &hp, CvMode::Exact),
            Err(Error::CombinatorialBudget { .. })
        ));
    }
}
