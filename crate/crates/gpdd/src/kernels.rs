//! Kernel families, Gram assembly and El Karoui coefficients.
//!
//! Inner-product kernels are evaluated as κ(xᵀx′/d), radial kernels as
//! κ(‖x−x′‖²/d). A bandwidth η turns κ into κ_η(t) = κ(ηt)/η.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use faer::linalg::matmul::matmul;
use faer::{Accum, Mat, MatRef, Par};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad;
use crate::specfun::ln_gamma_unchecked;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Family {
    Linear,
    /// (offset + t)^degree
    Polynomial { offset: f64, degree: u32 },
    Exponential,
    Gaussian,
    /// (offset + t)^power
    Multiquadric { offset: f64, power: f64 },
    /// (offset + t)^(−power)
    InverseMultiquadric { offset: f64, power: f64 },
    /// r^ν K_ν(r) / (2^{ν−1} Γ(ν)) with r = √t
    Matern { nu: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    InnerProduct,
    Radial,
}

impl Family {
    pub fn kind(&self) -> Kind {
        match self {
            Family::Linear
            | Family::Polynomial { .. }
            | Family::Exponential => Kind::InnerProduct,
            _ => Kind::Radial,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Family::Linear => "linear",
            Family::Polynomial { .. } => "polynomial",
            Family::Exponential => "exponential",
            Family::Gaussian => "gaussian",
            Family::Multiquadric { .. } => "multiquadric",
            Family::InverseMultiquadric { .. } => "inverse-multiquadric",
            Family::Matern { .. } => "matern",
        }
    }

    fn kappa(&self, t: f64) -> f64 {
        match *self {
            Family::Linear => t,
            Family::Polynomial { offset, degree } => (offset + t).powi(degree as i32),
            Family::Exponential => t.exp(),
            Family::Gaussian => (-t).exp(),
            Family::Multiquadric { offset, power } => (offset + t).powf(power),
            Family::InverseMultiquadric { offset, power } => (offset + t).powf(-power),
            Family::Matern { nu } => matern(nu, t.max(0.0).sqrt()),
        }
    }

    fn kappa_prime(&self, t: f64) -> f64 {
        match *self {
            Family::Linear => 1.0,
            Family::Polynomial { offset, degree } => {
                degree as f64 * (offset + t).powi(degree as i32 - 1)
            }
            Family::Exponential => t.exp(),
            Family::Gaussian => -(-t).exp(),
            Family::Multiquadric { offset, power } => power * (offset + t).powf(power - 1.0),
            Family::InverseMultiquadric { offset, power } => {
                -power * (offset + t).powf(-power - 1.0)
            }
            Family::Matern { nu } => matern_prime(nu, t.max(0.0).sqrt()),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Family::Polynomial { offset, degree } => offset >= 0.0 && degree >= 1,
            Family::Multiquadric { offset, power } => offset > 0.0 && power.is_finite(),
            Family::InverseMultiquadric { offset, power } => offset > 0.0 && power > 0.0,
            Family::Matern { nu } => nu > 0.0 && nu.is_finite(),
            _ => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid kernel parameters {self:?}")))
        }
    }
}

/// A kernel family with bandwidth η.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KernelConfig", into = "KernelConfig")]
pub struct KernelSpec {
    pub family: Family,
    pub eta: f64,
}

impl KernelSpec {
    pub fn new(family: Family) -> Result<Self> {
        Self::with_eta(family, 1.0)
    }

    pub fn with_eta(family: Family, eta: f64) -> Result<Self> {
        family.validate()?;
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::Config(format!("bandwidth must be positive, got {eta}")));
        }
        Ok(Self { family, eta })
    }

    pub fn linear() -> Self {
        Self { family: Family::Linear, eta: 1.0 }
    }

    pub fn gaussian() -> Self {
        Self { family: Family::Gaussian, eta: 1.0 }
    }

    pub fn kind(&self) -> Kind {
        self.family.kind()
    }

    /// κ_η(t).
    pub fn kappa(&self, t: f64) -> f64 {
        if self.eta == 1.0 {
            self.family.kappa(t)
        } else {
            self.family.kappa(self.eta * t) / self.eta
        }
    }

    /// κ_η′(t).
    pub fn kappa_prime(&self, t: f64) -> f64 {
        self.family.kappa_prime(self.eta * t)
    }
}

/// k(x, x′).
pub fn eval(spec: &KernelSpec, x: &[f64], xp: &[f64]) -> Result<f64> {
    if x.len() != xp.len() || x.is_empty() {
        return Err(Error::DimensionMismatch(format!(
            "kernel inputs have lengths {} and {}",
            x.len(),
            xp.len()
        )));
    }
    let d = x.len() as f64;
    let t = match spec.kind() {
        Kind::InnerProduct => x.iter().zip(xp).map(|(a, b)| a * b).sum::<f64>() / d,
        Kind::Radial => x.iter().zip(xp).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / d,
    };
    Ok(spec.kappa(t))
}

/// Scaled inner products XZᵀ/d.
fn scaled_products(x: MatRef<'_, f64>, z: MatRef<'_, f64>) -> Mat<f64> {
    let mut g = Mat::<f64>::zeros(x.nrows(), z.nrows());
    matmul(g.as_mut(), Accum::Replace, x, z.transpose(), 1.0 / x.ncols() as f64, Par::Seq);
    g
}

/// ‖x_i − z_j‖²/d from the expanded form, recomputed directly when cancellation
/// would leave only rounding noise. Kernels through √t are sensitive to that noise.
fn sq_dist(x: MatRef<'_, f64>, z: MatRef<'_, f64>, i: usize, j: usize, nx: f64, nz: f64, g: f64) -> f64 {
    let t = nx + nz - 2.0 * g;
    if t > 1e-8 * (nx + nz) {
        return t;
    }
    (0..x.ncols()).map(|k| (x[(i, k)] - z[(j, k)]).powi(2)).sum::<f64>() / x.ncols() as f64
}

fn row_sq_norms(x: MatRef<'_, f64>) -> Vec<f64> {
    let d = x.ncols() as f64;
    (0..x.nrows())
        .map(|i| (0..x.ncols()).map(|j| x[(i, j)] * x[(i, j)]).sum::<f64>() / d)
        .collect()
}

/// K_X with entries k(X_i, X_j). Exactly symmetric.
pub fn gram(spec: &KernelSpec, x: MatRef<'_, f64>) -> Result<Mat<f64>> {
    let n = x.nrows();
    if n == 0 || x.ncols() == 0 {
        return Err(Error::DimensionMismatch("gram needs n, d >= 1".into()));
    }
    let g = scaled_products(x, x);
    let mut k = Mat::<f64>::zeros(n, n);
    match spec.kind() {
        Kind::InnerProduct => {
            for j in 0..n {
                for i in j..n {
                    k[(i, j)] = spec.kappa(g[(i, j)]);
                }
            }
        }
        Kind::Radial => {
            let k0 = spec.kappa(0.0);
            for j in 0..n {
                k[(j, j)] = k0;
                for i in j + 1..n {
                    k[(i, j)] = spec.kappa(sq_dist(x, x, i, j, g[(i, i)], g[(j, j)], g[(i, j)]));
                }
            }
        }
    }
    for j in 0..n {
        for i in j + 1..n {
            k[(j, i)] = k[(i, j)];
        }
    }
    Ok(k)
}

/// Cross Gram with entries k(X_i, Z_j).
pub fn cross_gram(spec: &KernelSpec, x: MatRef<'_, f64>, z: MatRef<'_, f64>) -> Result<Mat<f64>> {
    if x.ncols() != z.ncols() || x.ncols() == 0 {
        return Err(Error::DimensionMismatch(format!(
            "cross_gram inputs have {} and {} columns",
            x.ncols(),
            z.ncols()
        )));
    }
    let g = scaled_products(x, z);
    let (n, m) = (x.nrows(), z.nrows());
    let out = match spec.kind() {
        Kind::InnerProduct => Mat::from_fn(n, m, |i, j| spec.kappa(g[(i, j)])),
        Kind::Radial => {
            let nx = row_sq_norms(x);
            let nz = row_sq_norms(z);
            Mat::from_fn(n, m, |i, j| spec.kappa(sq_dist(x, z, i, j, nx[i], nz[j], g[(i, j)])))
        }
    };
    Ok(out)
}

/// El Karoui linearization coefficients (α, β) at input variance σ².
pub fn coefficients(spec: &KernelSpec, sigma2: f64) -> Result<(f64, f64)> {
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(Error::Domain(format!("sigma2 must be positive, got {sigma2}")));
    }
    let (alpha, beta) = match spec.kind() {
        Kind::InnerProduct => {
            let a = spec.kappa_prime(0.0);
            (a, spec.kappa(sigma2) - spec.kappa(0.0) - a * sigma2)
        }
        Kind::Radial => {
            let s = 2.0 * sigma2;
            let kp = spec.kappa_prime(s);
            (-2.0 * kp, spec.kappa(0.0) + s * kp - spec.kappa(s))
        }
    };
    if !(alpha > 0.0) {
        return Err(Error::DegenerateKernel { kernel: spec.to_string(), alpha });
    }
    Ok((alpha, beta))
}

/// Sets η = λ and returns the spec with its (α, β₀ = β/λ).
///
/// Fails unless α is independent of λ and β is proportional to λ.
pub fn rescale_bandwidth(spec: &KernelSpec, lambda: f64) -> Result<(KernelSpec, f64, f64)> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::Domain(format!("lambda must be positive, got {lambda}")));
    }
    let at = |eta: f64| -> Result<(KernelSpec, f64, f64)> {
        let s = KernelSpec::with_eta(spec.family, eta)?;
        let (a, b) = coefficients(&s, 1.0)?;
        Ok((s, a, b / eta))
    };
    let (scaled, alpha, beta0) = at(lambda)?;
    let (_, alpha2, beta02) = at(2.0 * lambda)?;
    let rel = |u: f64, v: f64| (u - v).abs() / u.abs().max(v.abs()).max(1e-300);
    if rel(alpha, alpha2) > 1e-9 || (beta0 != beta02 && rel(beta0, beta02) > 1e-9) {
        return Err(Error::NotLambdaScalable(spec.to_string()));
    }
    Ok((scaled, alpha, beta0))
}

// Matérn

/// M_ν(r) = r^ν K_ν(r) / (2^{ν−1} Γ(ν)), with M_ν(0) = 1.
pub fn matern(nu: f64, r: f64) -> f64 {
    if r == 0.0 {
        return 1.0;
    }
    if let Some(p) = half_integer(nu) {
        return matern_half(p, r);
    }
    (nu * r.ln() + log_bessel_k(nu, r) - (nu - 1.0) * std::f64::consts::LN_2
        - ln_gamma_unchecked(nu))
    .exp()
}

/// dM_ν/dt at t = r².
fn matern_prime(nu: f64, r: f64) -> f64 {
    if nu > 1.0 {
        return -matern(nu - 1.0, r) / (4.0 * (nu - 1.0));
    }
    if r == 0.0 {
        return f64::NEG_INFINITY;
    }
    // −r^{ν−1} K_{1−ν}(r) / (2^ν Γ(ν))
    let order = 1.0 - nu;
    -((nu - 1.0) * r.ln() + log_bessel_k(order, r)
        - nu * std::f64::consts::LN_2
        - ln_gamma_unchecked(nu))
    .exp()
}

fn half_integer(nu: f64) -> Option<u32> {
    let p = nu - 0.5;
    if p >= 0.0 && p.fract() == 0.0 && p <= 30.0 {
        Some(p as u32)
    } else {
        None
    }
}

fn matern_half(p: u32, r: f64) -> f64 {
    // e^{−r} p!/(2p)! Σ_i (p+i)!/(i!(p−i)!) (2r)^{p−i}
    let lf = |k: u32| ln_gamma_unchecked(k as f64 + 1.0);
    let mut sum = 0.0;
    for i in 0..=p {
        let coef = (lf(p + i) - lf(i) - lf(p - i) + lf(p) - lf(2 * p)).exp();
        sum += coef * (2.0 * r).powi((p - i) as i32);
    }
    (-r).exp() * sum
}

/// log K_ν(r) from ∫_0^∞ exp(−r cosh t) cosh(νt) dt.
pub fn log_bessel_k(nu: f64, r: f64) -> f64 {
    let nu = nu.abs();
    // log integrand; peak of −r cosh t + νt at t* = asinh(ν/r)
    let g = |t: f64| -r * t.cosh() + nu * t + (0.5 * (1.0 + (-2.0 * nu * t).exp())).ln();
    let tstar = (nu / r).asinh();
    let peak = g(tstar).max(g(0.0));
    let mut width = 1.0;
    while g(tstar + width) - peak > -45.0 {
        width *= 2.0;
    }
    let f = |t: f64| (g(t) - peak).exp();
    let tol = 1e-13;
    let mut total = quad::simpson(f, 0.0, tstar, tol);
    // split the tail so the adaptive rule sees the decay
    let mut a = tstar;
    let mut step = width / 8.0;
    while a < tstar + width {
        total += quad::simpson(f, a, a + step, tol);
        a += step;
        step *= 1.5;
    }
    total.ln() + peak
}

// Text ids: family[:key=value,...]

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut params: Vec<(String, f64)> = params_of(&self.family);
        if self.eta != 1.0 {
            params.push(("eta".into(), self.eta));
        }
        write!(f, "{}", self.family.name())?;
        for (i, (k, v)) in params.iter().enumerate() {
            write!(f, "{}{}={}", if i == 0 { ':' } else { ',' }, k, v)?;
        }
        Ok(())
    }
}

fn params_of(family: &Family) -> Vec<(String, f64)> {
    match *family {
        Family::Polynomial { offset, degree } => {
            vec![("offset".into(), offset), ("degree".into(), degree as f64)]
        }
        Family::Multiquadric { offset, power } | Family::InverseMultiquadric { offset, power } => {
            vec![("offset".into(), offset), ("power".into(), power)]
        }
        Family::Matern { nu } => vec![("nu".into(), nu)],
        _ => vec![],
    }
}

/// Kernel description as it appears in config files.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    pub family: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

impl TryFrom<KernelConfig> for KernelSpec {
    type Error = Error;

    fn try_from(cfg: KernelConfig) -> Result<Self> {
        let mut params = cfg.params;
        let mut take = |key: &str, default: Option<f64>| -> Result<f64> {
            params
                .remove(key)
                .or(default)
                .ok_or_else(|| Error::Config(format!("kernel {} needs parameter {key}", cfg.family)))
        };
        let eta = take("eta", Some(1.0))?;
        let family = match cfg.family.as_str() {
            "linear" => Family::Linear,
            "polynomial" => {
                let degree = take("degree", None)?;
                if degree < 1.0 || degree.fract() != 0.0 || degree > 64.0 {
                    return Err(Error::Config(format!("polynomial degree must be a positive integer, got {degree}")));
                }
                Family::Polynomial { offset: take("offset", Some(1.0))?, degree: degree as u32 }
            }
            "exponential" => Family::Exponential,
            "gaussian" => Family::Gaussian,
            "multiquadric" => Family::Multiquadric {
                offset: take("offset", Some(1.0))?,
                power: take("power", Some(0.5))?,
            },
            "inverse-multiquadric" => Family::InverseMultiquadric {
                offset: take("offset", Some(1.0))?,
                power: take("power", Some(0.5))?,
            },
            "matern" => Family::Matern { nu: take("nu", None)? },
            other => return Err(Error::Config(format!("unknown kernel family {other:?}"))),
        };
        if let Some(key) = params.keys().next() {
            return Err(Error::Config(format!("unknown parameter {key:?} for kernel {}", cfg.family)));
        }
        KernelSpec::with_eta(family, eta)
    }
}

impl From<KernelSpec> for KernelConfig {
    fn from(spec: KernelSpec) -> Self {
        let mut params: BTreeMap<String, f64> = params_of(&spec.family).into_iter().collect();
        if spec.eta != 1.0 {
            params.insert("eta".into(), spec.eta);
        }
        KernelConfig { family: spec.family.name().to_string(), params }
    }
}

impl FromStr for KernelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (family, rest) = match s.split_once(':') {
            Some((f, r)) => (f, r),
            None => (s, ""),
        };
        let mut params = BTreeMap::new();
        for kv in rest.split(',').filter(|p| !p.is_empty()) {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("bad kernel parameter {kv:?} in {s:?}")))?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad kernel parameter value {kv:?} in {s:?}")))?;
            params.insert(k.trim().to_string(), v);
        }
        KernelSpec::try_from(KernelConfig { family: family.trim().to_string(), params })
    }
}
