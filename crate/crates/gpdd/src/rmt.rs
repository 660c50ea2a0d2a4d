//! Marchenko–Pastur and El Karoui limits, the limiting free energy, and
//! the closed-form optimal temperature and regularization.
//!
//! Every square root difference is rewritten in its conjugate form so that
//! large ridges do not cancel catastrophically. The c = 1 case belongs to
//! the c ≤ 1 branch.

use std::f64::consts::PI;

use crate::error::{domain, Error, Result};
use crate::quad;

/// Kernel offset, either fixed or proportional to λ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Offset {
    /// β independent of λ.
    Fixed(f64),
    /// β = β₀λ for a λ-scaled kernel.
    Scaled(f64),
}

/// Kernel slope α, offset β (or β₀) and aspect ratio c = d/n.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RmtContext {
    pub alpha: f64,
    pub offset: Offset,
    pub c: f64,
}

impl RmtContext {
    pub fn new(alpha: f64, offset: Offset, c: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return domain(format!("alpha must be positive, got {alpha}"));
        }
        if !(c > 0.0 && c.is_finite()) {
            return domain(format!("c must be positive, got {c}"));
        }
        match offset {
            Offset::Fixed(b) if !(b >= 0.0 && b.is_finite()) => {
                return domain(format!("beta must be non-negative, got {b}"))
            }
            Offset::Scaled(b0) if !(0.0..1.0).contains(&b0) => {
                return domain(format!("beta0 must lie in [0, 1), got {b0}"))
            }
            _ => {}
        }
        Ok(Self { alpha, offset, c })
    }

    /// The linear kernel: α = 1, β = 0.
    pub fn linear(c: f64) -> Result<Self> {
        Self::new(1.0, Offset::Fixed(0.0), c)
    }

    pub fn with_c(self, c: f64) -> Result<Self> {
        Self::new(self.alpha, self.offset, c)
    }

    /// β resolved at the given λ.
    pub fn beta(&self, lambda: f64) -> f64 {
        match self.offset {
            Offset::Fixed(b) => b,
            Offset::Scaled(b0) => b0 * lambda,
        }
    }

    /// β₀ for the λ* formula; a fixed zero offset counts as β₀ = 0.
    pub fn beta0(&self) -> Result<f64> {
        match self.offset {
            Offset::Scaled(b0) => Ok(b0),
            Offset::Fixed(b) if b == 0.0 => Ok(0.0),
            Offset::Fixed(b) => domain(format!(
                "optimal lambda needs a lambda-scaled offset, got fixed beta = {b}"
            )),
        }
    }

    /// The effective argument μ = (β + λγ)/α.
    pub fn mu_arg(&self, lambda: f64, gamma: f64) -> f64 {
        (self.beta(lambda) + lambda * gamma) / self.alpha
    }

    /// Limit evaluation point for the Gram functionals at (λ, γ).
    pub fn at(&self, lambda: f64, gamma: f64) -> LimitPoint {
        LimitPoint {
            alpha: self.alpha,
            beta: self.beta(lambda),
            ridge: lambda * gamma,
            c: self.c,
        }
    }
}

/// (α, β, additive ridge μ̂, c) for the Gram trace and log-det limits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitPoint {
    pub alpha: f64,
    pub beta: f64,
    pub ridge: f64,
    pub c: f64,
}

impl LimitPoint {
    pub fn mu_arg(&self) -> f64 {
        (self.beta + self.ridge) / self.alpha
    }

    fn check(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.c > 0.0 && self.beta >= 0.0 && self.ridge > 0.0) {
            return domain(format!("invalid limit point {self:?}"));
        }
        Ok(())
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        domain(format!("{name} must be positive and finite, got {v}"))
    }
}

/// Stieltjes transform of the Marchenko–Pastur law on the negative axis.
pub fn mp_stieltjes(z: f64, c: f64) -> Result<f64> {
    if !(z < 0.0 && z.is_finite()) {
        return domain(format!("mp_stieltjes needs z < 0, got {z}"));
    }
    positive("c", c)?;
    let mu = -z;
    let s = ((1.0 - c).powi(2) + 2.0 * mu * (1.0 + c) + mu * mu).sqrt();
    let a = 1.0 - c + mu;
    // for c > 1 and small |z| the direct denominator a + s cancels
    Ok(if a >= 0.0 { 2.0 / (a + s) } else { (s - a) / (2.0 * c * mu) })
}

/// √((cμ+c+1)² − 4c), expanded so that c ≈ 1, μ ≈ 0 does not cancel.
fn disc(mu: f64, c: f64) -> f64 {
    let cm = c * mu;
    ((c - 1.0).powi(2) + 2.0 * cm * (c + 1.0) + cm * cm).sqrt()
}

/// T(μ,c) for c ≤ 1, T̃(μ,c) for c > 1.
pub fn trace_limit(mu: f64, c: f64) -> Result<f64> {
    positive("mu", mu)?;
    positive("c", c)?;
    Ok(trace_unchecked(mu, c))
}

fn trace_unchecked(mu: f64, c: f64) -> f64 {
    let s = disc(mu, c);
    if c <= 1.0 {
        2.0 * c * c / (s + c * mu + 1.0 - c)
    } else {
        2.0 * c / (s + c * mu + c - 1.0)
    }
}

/// D(μ,c) for c ≤ 1, D̃(μ,c) for c > 1.
pub fn logdet_limit(mu: f64, c: f64) -> Result<f64> {
    positive("mu", mu)?;
    positive("c", c)?;
    Ok(logdet_unchecked(mu, c))
}

fn logdet_unchecked(mu: f64, c: f64) -> f64 {
    let t = trace_unchecked(mu, c);
    if c <= 1.0 {
        (t / c).ln_1p() - t / (c + t) - c * (t / c).ln()
    } else {
        c * (t / c).ln_1p() - c * t / (c + t) - t.ln()
    }
}

/// Integral form of the log-determinant limit, used as an oracle.
pub fn logdet_limit_quadrature(mu: f64, c: f64, tol: f64) -> Result<f64> {
    positive("mu", mu)?;
    positive("c", c)?;
    // ∫_0^μ T(t) dt with t = s², which removes the t^{-1/2} singularity at c = 1.
    let integrand = |s: f64| {
        if s == 0.0 {
            if c == 1.0 {
                2.0
            } else {
                0.0
            }
        } else {
            2.0 * s * trace_unchecked(s * s, c)
        }
    };
    let integral = quad::simpson(integrand, 0.0, mu.sqrt(), tol);
    let constant = if c < 1.0 {
        (c - 1.0) * (1.0 - c).ln() - c * c.ln() - c
    } else if c > 1.0 {
        (1.0 - c) * (c - 1.0).ln() + (c - 1.0) * c.ln() - 1.0
    } else {
        -1.0
    };
    Ok(constant + integral)
}

/// Limit of n⁻¹ tr((K + μ̂I)⁻¹).
pub fn gram_trace_limit(p: &LimitPoint) -> Result<f64> {
    p.check()?;
    let m = p.mu_arg();
    Ok(if p.c <= 1.0 {
        (1.0 - p.c) / (p.beta + p.ridge) + trace_unchecked(m, p.c) / p.alpha
    } else {
        trace_unchecked(m, p.c) / p.alpha
    })
}

/// Limit of n⁻¹ log det(K + μ̂I).
pub fn gram_logdet_limit(p: &LimitPoint) -> Result<f64> {
    p.check()?;
    let m = p.mu_arg();
    Ok(if p.c <= 1.0 {
        logdet_unchecked(m, p.c) + (1.0 - p.c) * m.ln() + p.alpha.ln()
    } else {
        logdet_unchecked(m, p.c) + p.alpha.ln()
    })
}

/// F∞ at (λ, γ).
pub fn limiting_free_energy(lambda: f64, gamma: f64, ctx: &RmtContext) -> Result<f64> {
    positive("lambda", lambda)?;
    positive("gamma", gamma)?;
    let p = ctx.at(lambda, gamma);
    let trace = gram_trace_limit(&p)?;
    let logdet = gram_logdet_limit(&p)?;
    Ok(0.5 * lambda * trace + 0.5 * logdet - 0.5 * (lambda / (2.0 * PI)).ln())
}

/// γ* minimizing F∞ under λ = μ/γ. Needs a fixed offset.
pub fn optimal_gamma(mu: f64, ctx: &RmtContext) -> Result<f64> {
    positive("mu", mu)?;
    let beta = match ctx.offset {
        Offset::Fixed(b) => b,
        Offset::Scaled(_) => return domain("optimal gamma needs a fixed offset"),
    };
    // μ/(2(β+μ))·[1 − c − c(β+μ)/α + √(…)] is μ times the Gram trace limit at ridge μ.
    let p = LimitPoint { alpha: ctx.alpha, beta, ridge: mu, c: ctx.c };
    Ok(mu * gram_trace_limit(&p)?)
}

/// The temperature expression as printed in the theorem statement,
/// c − 1 − c(β+μ)/α + √((1 + c(β+μ+α)/α)² − 4c). Kept for comparison only.
pub fn optimal_gamma_theorem_form(mu: f64, ctx: &RmtContext) -> Result<f64> {
    positive("mu", mu)?;
    let beta = ctx.beta(0.0);
    let c = ctx.c;
    let m = (beta + mu) / ctx.alpha;
    Ok(c - 1.0 - c * m + ((1.0 + c * (m + 1.0)).powi(2) - 4.0 * c).sqrt())
}

/// λ* minimizing F∞ for a λ-scaled kernel.
pub fn optimal_lambda(gamma: f64, ctx: &RmtContext) -> Result<f64> {
    positive("gamma", gamma)?;
    let beta0 = ctx.beta0()?;
    let g0 = gamma + beta0;
    if g0 >= 1.0 {
        return Err(Error::NoOptimalLambda { gamma, beta0 });
    }
    let c = ctx.c;
    Ok(ctx.alpha * ((c + 1.0) * g0 + ((c - 1.0).powi(2) + 4.0 * c * g0 * g0).sqrt())
        / (c * (1.0 - g0 * g0)))
}

/// Residual of the critical-point quadratic at μ* = λ*γ₀/α.
pub fn optimal_lambda_residual(lambda: f64, gamma: f64, ctx: &RmtContext) -> Result<f64> {
    let g0 = gamma + ctx.beta0()?;
    let c = ctx.c;
    let mu = lambda * g0 / ctx.alpha;
    Ok(c * c * (1.0 - g0 * g0) * mu * mu
        - 2.0 * c * mu * (c + 1.0) * g0 * g0
        - (c - 1.0).powi(2) * g0 * g0)
}

/// λ solving λ = λ*(γ, β₀ = β/λ) for a kernel with fixed offset β.
///
/// This is the plug-in policy for kernels that are not λ-scalable. For
/// β = 0 it reduces to [`optimal_lambda`].
pub fn plugin_optimal_lambda(gamma: f64, ctx: &RmtContext) -> Result<f64> {
    positive("gamma", gamma)?;
    let beta = match ctx.offset {
        Offset::Fixed(b) => b,
        Offset::Scaled(_) => return optimal_lambda(gamma, ctx),
    };
    if gamma >= 1.0 {
        return Err(Error::NoOptimalLambda { gamma, beta0: 0.0 });
    }
    let scaled = |lambda: f64| {
        let ctx = RmtContext { offset: Offset::Scaled(beta / lambda), ..*ctx };
        optimal_lambda(gamma, &ctx)
    };
    if beta == 0.0 {
        return scaled(1.0);
    }
    // g(λ) = λ*(γ, β/λ) − λ is positive just above β/(1−γ) and negative for large λ.
    let mut lo = (beta / (1.0 - gamma)).ln();
    let mut hi = lo + 1.0;
    let excess = |log_l: f64| -> Result<f64> {
        let l = log_l.exp();
        Ok(scaled(l)?.ln() - log_l)
    };
    while excess(hi)? > 0.0 {
        lo = hi;
        hi += 1.0;
        if hi > 700.0 {
            return domain("plug-in lambda fixed point not bracketed");
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        // λ just above the pole yields NoOptimalLambda; treat as positive excess.
        match excess(mid) {
            Ok(v) if v <= 0.0 => hi = mid,
            _ => lo = mid,
        }
    }
    Ok((0.5 * (lo + hi)).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b}");
    }

    #[test]
    fn stieltjes_examples() {
        close(mp_stieltjes(-1.0, 1.0).unwrap(), 0.618_033_988_7, 1e-10);
        close(mp_stieltjes(-1.0, 0.5).unwrap(), 0.561_552_812_8, 1e-10);
        let (z, c) = (-2.0, 3.0);
        let m = mp_stieltjes(z, c).unwrap();
        close(m, 1.0 / (1.0 - c - z - c * z * m), 1e-12);
        assert!(mp_stieltjes(0.0, 1.0).is_err());
        assert!(mp_stieltjes(-1.0, 0.0).is_err());
    }

    #[test]
    fn trace_examples() {
        close(trace_limit(1.0, 1.0).unwrap(), 0.618_033_988_7, 1e-10);
        close(trace_limit(1.0, 2.0).unwrap(), 0.561_552_812_8, 1e-10);
        close(1e6 * trace_limit(1e6, 0.7).unwrap(), 0.7, 1e-4);
        assert!(trace_limit(0.0, 1.0).is_err());
    }

    #[test]
    fn logdet_examples() {
        // 30-digit quadrature reference
        close(logdet_limit(1.0, 0.5).unwrap(), 0.494_367_164_976_291_7, 1e-13);
        for mu in [0.1, 1.0, 10.0] {
            let a = logdet_limit(mu, 1.0 - 1e-6).unwrap();
            let b = logdet_limit(mu, 1.0 + 1e-6).unwrap();
            assert!((a - b).abs() < 1e-3);
        }
    }

    #[test]
    fn free_energy_linear() {
        let ctx = RmtContext::linear(0.5).unwrap();
        close(limiting_free_energy(1.0, 1.0, &ctx).unwrap(), 1.519_675_506_286_092, 1e-12);
    }

    #[test]
    fn optima_examples() {
        let ctx = RmtContext::linear(1.0).unwrap();
        close(optimal_gamma(1.0, &ctx).unwrap(), 0.618_033_988_7, 1e-10);
        close(optimal_lambda(0.5, &ctx).unwrap(), 8.0 / 3.0, 1e-12);
        let ctx2 = RmtContext::linear(2.0).unwrap();
        close(optimal_gamma(1.0, &ctx2).unwrap(), 0.561_552_812_8, 1e-10);
        close(optimal_lambda(1e-12, &ctx2).unwrap(), 0.5, 1e-9);
        close(optimal_gamma(1e6, &ctx2).unwrap(), 1.0, 1e-4);
        assert!(matches!(
            optimal_lambda(1.2, &ctx),
            Err(Error::NoOptimalLambda { .. })
        ));
    }

    #[test]
    fn plugin_reduces_for_linear() {
        let ctx = RmtContext::linear(0.7).unwrap();
        close(
            plugin_optimal_lambda(0.3, &ctx).unwrap(),
            optimal_lambda(0.3, &ctx).unwrap(),
            1e-14,
        );
    }

    #[test]
    fn plugin_is_fixed_point() {
        let e2 = (-2.0f64).exp();
        let ctx = RmtContext::new(2.0 * e2, Offset::Fixed(1.0 - 3.0 * e2), 1.5).unwrap();
        let l = plugin_optimal_lambda(0.1, &ctx).unwrap();
        let scaled = RmtContext { offset: Offset::Scaled((1.0 - 3.0 * e2) / l), ..ctx };
        let l2 = optimal_lambda(0.1, &scaled).unwrap();
        assert!((l - l2).abs() / l < 1e-12, "{l} vs {l2}");
    }
}
