use faer::Mat;
use proptest::prelude::*;

use gpdd::data::{self, Covariance};
use gpdd::gp::{self, HyperParams};
use gpdd::harness::oracles;
use gpdd::kernels::{self, Family, KernelSpec};
use gpdd::rmt::{self, Offset, RmtContext};
use gpdd::specfun;

fn matrix(rows: usize, cols: usize, v: &[f64]) -> Mat<f64> {
    Mat::from_fn(rows, cols, |i, j| v[i * cols + j])
}

fn family() -> impl Strategy<Value = Family> {
    prop_oneof![
        Just(Family::Linear),
        (0.1f64..3.0, 1u32..5).prop_map(|(offset, degree)| Family::Polynomial { offset, degree }),
        Just(Family::Exponential),
        Just(Family::Gaussian),
        (0.1f64..3.0, 0.1f64..2.0).prop_map(|(offset, power)| Family::Multiquadric { offset, power }),
        (0.1f64..3.0, 0.1f64..2.0).prop_map(|(offset, power)| Family::InverseMultiquadric { offset, power }),
        (0.5f64..6.0).prop_map(|nu| Family::Matern { nu }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn digamma_recurrence(z in 0.01f64..200.0) {
        let lhs = specfun::digamma(z + 1.0).unwrap();
        let rhs = specfun::digamma(z).unwrap() + 1.0 / z;
        prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs().max(1.0));
    }

    #[test]
    fn digamma_matches_series(z in 0.05f64..50.0) {
        let a = specfun::digamma(z).unwrap();
        let b = oracles::digamma_series(z);
        prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0), "{} vs {}", a, b);
    }

    #[test]
    fn half_digamma_closed_form(d in 1u64..40, extra in 2u64..60) {
        let n = d + extra;
        let closed = specfun::sum_digamma_half_closed(n, d).unwrap();
        let direct = specfun::sum_digamma_half(n, d).unwrap();
        prop_assert!((closed - direct).abs() <= 1e-10 * direct.abs().max(1.0));
    }

    #[test]
    fn trace_fixed_point_and_duality(lmu in -6.0f64..6.0, lc in -3.0f64..3.0) {
        let (mu, c) = (lmu.exp(), lc.exp());
        let t = rmt::trace_limit(mu, c).unwrap();
        let rhs = if c <= 1.0 { c * c / (1.0 - c + c * mu + mu * t) } else { c / (c - 1.0 + c * mu + mu * t) };
        prop_assert!((t - rhs).abs() <= 1e-10 * t);
        if c > 1.0 {
            let other = c * c * rmt::trace_limit(c * mu, 1.0 / c).unwrap();
            prop_assert!((t - other).abs() <= 1e-10 * t);
        }
        // μT < c
        prop_assert!(mu * t < c);
    }

    #[test]
    fn mp_fixed_point(lz in -6.0f64..6.0, lc in -3.0f64..3.0) {
        let (z, c) = (-lz.exp(), lc.exp());
        let m = rmt::mp_stieltjes(z, c).unwrap();
        prop_assert!(m > 0.0);
        prop_assert!((m * (1.0 - c - z - c * z * m) - 1.0).abs() <= 1e-10 * m.max(1.0));
    }

    #[test]
    fn lambda_star_is_a_local_minimum(lc in -2.0f64..2.0, gamma in 0.01f64..0.95, beta0 in 0.0f64..0.04) {
        let ctx = RmtContext::new(1.0, Offset::Scaled(beta0), lc.exp()).unwrap();
        let l = rmt::optimal_lambda(gamma, &ctx).unwrap();
        let f = |x: f64| rmt::limiting_free_energy(x, gamma, &ctx).unwrap();
        prop_assert!(f(l) <= f(l * 1.01) && f(l) <= f(l * 0.99));
    }

    #[test]
    fn gamma_star_is_a_local_minimum(lc in -2.0f64..2.0, lmu in -3.0f64..3.0) {
        let ctx = RmtContext::linear(lc.exp()).unwrap();
        let mu = lmu.exp();
        let g = rmt::optimal_gamma(mu, &ctx).unwrap();
        prop_assert!(g > 0.0 && g < 1.0);
        let f = |x: f64| rmt::limiting_free_energy(mu / x, x, &ctx).unwrap();
        prop_assert!(f(g) <= f(g * 1.01) && f(g) <= f(g * 0.99));
    }

    #[test]
    fn gram_is_exactly_symmetric(fam in family(), v in prop::collection::vec(-2.0f64..2.0, 6 * 4)) {
        let spec = KernelSpec::new(fam).unwrap();
        let x = matrix(6, 4, &v);
        let k = kernels::gram(&spec, x.as_ref()).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                prop_assert_eq!(k[(i, j)].to_bits(), k[(j, i)].to_bits());
            }
        }
        let cross = kernels::cross_gram(&spec, x.as_ref(), x.as_ref()).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                prop_assert!((cross[(i, j)] - k[(i, j)]).abs() <= 1e-12 * k[(i, j)].abs().max(1.0));
            }
        }
    }

    #[test]
    fn kernel_ids_roundtrip(fam in family(), leta in -2.0f64..2.0) {
        let spec = KernelSpec::with_eta(fam, leta.exp()).unwrap();
        let back: KernelSpec = spec.to_string().parse().unwrap();
        prop_assert_eq!(back, spec);
    }

    #[test]
    fn free_energy_matches_dense_oracle(
        n in 1usize..9,
        v in prop::collection::vec(-2.0f64..2.0, 8 * 3),
        y in prop::collection::vec(-2.0f64..2.0, 8),
        lambda in 0.05f64..20.0,
        gamma in 0.01f64..2.0,
    ) {
        let x = matrix(n, 3, &v);
        let k = kernels::gram(&KernelSpec::gaussian(), x.as_ref()).unwrap();
        let rows: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| k[(i, j)]).collect()).collect();
        let ours = gp::free_energy(k.as_ref(), &y[..n], &HyperParams::new(lambda, gamma).unwrap()).unwrap();
        let oracle = oracles::free_energy_dense(&rows, &y[..n], lambda, gamma).unwrap();
        prop_assert!((ours - oracle).abs() <= 1e-10 * oracle.abs().max(1.0));
    }

    #[test]
    fn posterior_covariance_is_psd_and_bounded(
        v in prop::collection::vec(-2.0f64..2.0, 10 * 3),
        w in prop::collection::vec(-2.0f64..2.0, 4 * 3),
        y in prop::collection::vec(-2.0f64..2.0, 10),
        lambda in 0.1f64..10.0,
        gamma in 0.01f64..1.0,
    ) {
        let spec = KernelSpec::gaussian();
        let (x, z) = (matrix(10, 3, &v), matrix(4, 3, &w));
        let k = kernels::gram(&spec, x.as_ref()).unwrap();
        let kx = kernels::cross_gram(&spec, x.as_ref(), z.as_ref()).unwrap();
        let kxx = kernels::gram(&spec, z.as_ref()).unwrap();
        let pp = gp::posterior_predictive(k.as_ref(), kx.as_ref(), kxx.as_ref(), &y, &HyperParams::new(lambda, gamma).unwrap()).unwrap();
        let eig = pp.raw_sigma.self_adjoint_eigenvalues(faer::Side::Lower).unwrap();
        prop_assert!(eig.iter().all(|&e| e >= -1e-10));
        prop_assert!(pp.trace_sigma() <= 4.0 + 1e-12);
    }

    #[test]
    fn whitening_gives_identity_covariance(n in 20usize..60, d in 1usize..8, seed in any::<u64>()) {
        let cov = Covariance::TwoLevel { high: 5.0, low: 0.2, fraction: 0.5 };
        let ds = data::synth_gaussian(n, d, &cov, 1.0, seed).unwrap();
        let w = data::whiten_dataset(&ds, 1e-10).unwrap();
        prop_assert_eq!(w.d(), d);
        for a in 0..d {
            for b in 0..d {
                let c: f64 = (0..n).map(|i| w.x[(i, a)] * w.x[(i, b)]).sum::<f64>() / n as f64;
                let target = if a == b { 1.0 } else { 0.0 };
                prop_assert!((c - target).abs() < 1e-9);
            }
        }
    }
}
