//! Replicated sweeps over (n, d) grids.

use std::sync::Arc;

use faer::Mat;
use rand::seq::index;
use rayon::prelude::*;

use super::config::{DataSpec, ExperimentConfig, LambdaPolicy, Metric};
use crate::data::{self, Covariance, Dataset};
use crate::error::{Error, Result};
use crate::gp::{self, FreeEnergyParts, HyperParams, PredictiveSummary, RidgeFactor};
use crate::kernels::{self, Kind, KernelSpec};
use crate::rmt::{self, Offset, RmtContext};
use crate::rng;

/// Aggregate of one (n, d, γ) grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub metric: Metric,
    pub kernel: String,
    pub n: usize,
    pub d: usize,
    pub c: f64,
    pub gamma: f64,
    /// Resolved λ; NaN when no λ could be resolved.
    pub lambda: f64,
    pub reps: usize,
    pub mean: f64,
    pub ci_half_width: f64,
    pub seed: u64,
    pub error: Option<String>,
}

/// 1.96·sd/√reps with the sample standard deviation.
pub fn mean_ci(values: &[f64]) -> (f64, f64) {
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    if values.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (k - 1.0);
    (mean, 1.96 * var.sqrt() / k.sqrt())
}

/// Worker count from GPDD_THREADS, else the hardware parallelism.
pub fn worker_count() -> usize {
    std::env::var("GPDD_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&t| t >= 1)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

/// λ and the kernel to use at (γ, c) under a policy.
pub fn resolve_lambda(
    policy: LambdaPolicy,
    kernel: &KernelSpec,
    gamma: f64,
    c: f64,
) -> Result<(f64, KernelSpec)> {
    match policy {
        LambdaPolicy::Fixed(v) => Ok((v, *kernel)),
        LambdaPolicy::Tempered(mu) => Ok((mu / gamma, *kernel)),
        LambdaPolicy::Optimal => {
            let (alpha, beta) = kernels::coefficients(kernel, 1.0)?;
            let ctx = RmtContext::new(alpha, Offset::Fixed(beta), c)?;
            Ok((rmt::plugin_optimal_lambda(gamma, &ctx)?, *kernel))
        }
        LambdaPolicy::OptimalScaled => {
            let (_, alpha, beta0) = kernels::rescale_bandwidth(kernel, 1.0)?;
            let ctx = RmtContext::new(alpha, Offset::Scaled(beta0), c)?;
            let lambda = rmt::optimal_lambda(gamma, &ctx)?;
            Ok((lambda, KernelSpec::with_eta(kernel.family, lambda)?))
        }
    }
}

/// Prepared data source; CSV tables are loaded once.
#[derive(Debug, Clone)]
pub enum Source {
    Synthetic { cov: Covariance, label_sd: f64 },
    Table(Arc<Dataset>),
    Augmented { base: Box<Source>, base_d: usize, mode: data::AugmentMode, whiten: bool },
    Misspecified { base: Box<Source>, theta: data::ThetaMode, noise_sd: f64 },
}

/// Variance threshold for whitening.
pub const WHITEN_TOL: f64 = 1e-10;

impl Source {
    pub fn prepare(spec: &DataSpec) -> Result<Self> {
        Ok(match spec {
            DataSpec::Synthetic { cov, label_sd } => Source::Synthetic { cov: cov.clone(), label_sd: *label_sd },
            DataSpec::Csv { path, label, whiten } => {
                let raw = data::load_csv(path, label)?;
                let ds = if *whiten { data::whiten_dataset(&raw, WHITEN_TOL)? } else { raw };
                Source::Table(Arc::new(ds))
            }
            DataSpec::Augmented { base, base_d, mode, whiten } => Source::Augmented {
                base: Box::new(Source::prepare(base)?),
                base_d: *base_d,
                mode: *mode,
                whiten: *whiten,
            },
            DataSpec::Misspecified { base, theta, noise_sd } => Source::Misspecified {
                base: Box::new(Source::prepare(base)?),
                theta: *theta,
                noise_sd: *noise_sd,
            },
        })
    }

    /// `rows` observations with `d` inputs, a pure function of `seed`.
    pub fn draw(&self, rows: usize, d: usize, seed: u64) -> Result<Dataset> {
        match self {
            Source::Synthetic { cov, label_sd } => data::synth_gaussian(rows, d, cov, *label_sd, seed),
            Source::Table(table) => {
                if rows > table.n() {
                    return Err(Error::Config(format!(
                        "need {rows} rows but the table has {}",
                        table.n()
                    )));
                }
                if d > table.d() {
                    return Err(Error::Config(format!(
                        "need {d} columns but the table has {}",
                        table.d()
                    )));
                }
                let mut r = rng::stream(seed, &[4]);
                let picked = index::sample(&mut r, table.n(), rows).into_vec();
                table.slice(&picked, d)
            }
            Source::Augmented { base, base_d, mode, whiten } => {
                let b = base.draw(rows, *base_d, rng::derive(seed, &[10]))?;
                let b = if *whiten { data::whiten_dataset(&b, WHITEN_TOL)? } else { b };
                data::augment(&b, *mode, d.max(b.d()), rng::derive(seed, &[11]))
            }
            Source::Misspecified { base, theta, noise_sd } => {
                let b = base.draw(rows, d, rng::derive(seed, &[12]))?;
                data::misspecify_labels(&b, *theta, *noise_sd, rng::derive(seed, &[13]))
            }
        }
    }

    /// Label variance when it is known a priori.
    pub fn label_variance(&self) -> Option<f64> {
        match self {
            Source::Synthetic { label_sd, .. } => Some(label_sd * label_sd),
            _ => None,
        }
    }
}

/// Training and test split of one replicate.
pub struct Replicate {
    pub train: Dataset,
    pub test: Option<Dataset>,
}

/// Draws replicate `rep` of grid point `point`.
pub fn draw_replicate(
    source: &Source,
    n: usize,
    d: usize,
    test_points: usize,
    master_seed: u64,
    point: usize,
    rep: usize,
) -> Result<Replicate> {
    let seed = rng::derive(master_seed, &[point as u64, rep as u64]);
    let all = source.draw(n + test_points, d, seed)?;
    let train_rows: Vec<usize> = (0..n).collect();
    let train = all.slice(&train_rows, all.d())?;
    let test = if test_points > 0 {
        let rows: Vec<usize> = (n..n + test_points).collect();
        Some(all.slice(&rows, all.d())?)
    } else {
        None
    };
    Ok(Replicate { train, test })
}

fn kernel_diag(spec: &KernelSpec, x: &Mat<f64>) -> Vec<f64> {
    let d = x.ncols() as f64;
    (0..x.nrows())
        .map(|i| match spec.kind() {
            Kind::Radial => spec.kappa(0.0),
            Kind::InnerProduct => {
                spec.kappa((0..x.ncols()).map(|j| x[(i, j)] * x[(i, j)]).sum::<f64>() / d)
            }
        })
        .collect()
}

/// Metric value of one replicate at each resolved (λ, kernel); None where λ is unresolved.
pub fn evaluate_replicate(
    metric: Metric,
    rep: &Replicate,
    settings: &[(f64, Option<(f64, KernelSpec)>)],
) -> Result<Vec<Option<f64>>> {
    let mut cache: Option<(KernelSpec, Mat<f64>, Option<(Mat<f64>, Vec<f64>)>)> = None;
    let mut out = Vec::with_capacity(settings.len());
    for (gamma, resolved) in settings {
        let Some((lambda, spec)) = resolved else {
            out.push(None);
            continue;
        };
        if cache.as_ref().map(|c| c.0 != *spec).unwrap_or(true) {
            let k = kernels::gram(spec, rep.train.x.as_ref())?;
            let cross = match (&rep.test, metric.needs_test_points()) {
                (Some(test), true) => Some((
                    kernels::cross_gram(spec, rep.train.x.as_ref(), test.x.as_ref())?,
                    kernel_diag(spec, &test.x),
                )),
                _ => None,
            };
            cache = Some((*spec, k, cross));
        }
        let (_, k, cross) = cache.as_ref().expect("cache filled above");
        let hp = HyperParams::new(*lambda, *gamma)?;
        let factor = RidgeFactor::new(k.as_ref(), hp.ridge())?;
        let value = match metric {
            Metric::FreeEnergy => {
                FreeEnergyParts::compute(&factor, &rep.train.y)?.value(hp.lambda) / rep.train.n() as f64
            }
            _ => {
                let (kx, diag) = cross.as_ref().ok_or_else(|| Error::Config("predictive metric without test points".into()))?;
                let test = rep.test.as_ref().expect("test set present with cross Gram");
                let s = PredictiveSummary::compute(&factor, &rep.train.y, kx.as_ref(), diag, &test.y)?;
                let m = s.m as f64;
                match metric {
                    Metric::Ppl2 => s.ppl2(&hp) / m,
                    Metric::Ppnll => s.ppnll(&hp) / m,
                    Metric::PpnllOpt => gp::optimal_ppnll(s.sq_err, s.trace_sigma, s.m, hp.ridge())?.1 / m,
                    Metric::FreeEnergy => unreachable!(),
                }
            }
        };
        out.push(Some(value));
    }
    Ok(out)
}

/// Runs a sweep with the worker count from GPDD_THREADS.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<Vec<SweepRecord>> {
    run_sweep_with_threads(cfg, worker_count())
}

/// Runs a sweep on `threads` workers. Output does not depend on `threads`.
pub fn run_sweep_with_threads(cfg: &ExperimentConfig, threads: usize) -> Result<Vec<SweepRecord>> {
    cfg.validate()?;
    let source = Source::prepare(&cfg.data)?;
    let grid = cfg.grid()?;
    let gammas = cfg.gammas();
    let m = if cfg.metric.needs_test_points() { cfg.test_points } else { 0 };

    let mut settings = Vec::with_capacity(grid.len());
    for &(n, d) in &grid {
        let c = d as f64 / n as f64;
        let mut row = Vec::with_capacity(gammas.len());
        for &g in &gammas {
            match resolve_lambda(cfg.lambda_policy, &cfg.kernel, g, c) {
                Ok(r) => row.push((g, Ok(r))),
                Err(e @ Error::NoOptimalLambda { .. }) => row.push((g, Err(e.to_string()))),
                Err(e) => return Err(Error::GridPoint { n, d, source: Box::new(e) }),
            }
        }
        settings.push(row);
    }

    let tasks: Vec<(usize, usize)> = (0..grid.len())
        .flat_map(|p| (0..cfg.reps).map(move |r| (p, r)))
        .collect();
    let run = |&(p, r): &(usize, usize)| -> Result<Vec<Option<f64>>> {
        let (n, d) = grid[p];
        let annotate = |e: Error| Error::GridPoint { n, d, source: Box::new(e) };
        let rep = draw_replicate(&source, n, d, m, cfg.seed, p, r).map_err(annotate)?;
        let s: Vec<(f64, Option<(f64, KernelSpec)>)> = settings[p]
            .iter()
            .map(|(g, res)| (*g, res.as_ref().ok().copied()))
            .collect();
        evaluate_replicate(cfg.metric, &rep, &s).map_err(annotate)
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let results: Vec<Result<Vec<Option<f64>>>> = pool.install(|| tasks.par_iter().map(run).collect());

    let mut per_point: Vec<Vec<Vec<f64>>> = vec![vec![Vec::with_capacity(cfg.reps); gammas.len()]; grid.len()];
    for ((p, _), res) in tasks.iter().zip(results) {
        for (gi, v) in res?.into_iter().enumerate() {
            if let Some(v) = v {
                per_point[*p][gi].push(v);
            }
        }
    }

    let mut records = Vec::new();
    for (p, &(n, d)) in grid.iter().enumerate() {
        for (gi, (g, res)) in settings[p].iter().enumerate() {
            let (lambda, kernel, error) = match res {
                Ok((l, spec)) => (*l, spec.to_string(), None),
                Err(msg) => (f64::NAN, cfg.kernel.to_string(), Some(msg.clone())),
            };
            let (mean, ci) = if error.is_none() {
                mean_ci(&per_point[p][gi])
            } else {
                (f64::NAN, f64::NAN)
            };
            records.push(SweepRecord {
                metric: cfg.metric,
                kernel,
                n,
                d,
                c: d as f64 / n as f64,
                gamma: *g,
                lambda,
                reps: cfg.reps,
                mean,
                ci_half_width: ci,
                seed: cfg.seed,
                error,
            });
        }
    }
    Ok(records)
}

/// One sweep point next to its limit.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitComparison {
    pub n: usize,
    pub d: usize,
    pub c: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub empirical: f64,
    pub ci_half_width: f64,
    pub limit: f64,
    pub abs_dev: f64,
}

/// F∞ for unit-variance inputs and labels of variance σ².
pub fn free_energy_limit(spec: &KernelSpec, lambda: f64, gamma: f64, c: f64, sigma2: f64) -> Result<f64> {
    let (alpha, beta) = kernels::coefficients(spec, 1.0)?;
    let ctx = RmtContext::new(alpha, Offset::Fixed(beta), c)?;
    let p = ctx.at(lambda, gamma);
    // labels with variance σ² scale the quadratic term
    Ok(rmt::limiting_free_energy(lambda, gamma, &ctx)? + 0.5 * lambda * (sigma2 - 1.0) * rmt::gram_trace_limit(&p)?)
}

/// Pairs each free-energy sweep point with F∞ at the same (λ, γ, c, α, β).
pub fn empirical_vs_limit(cfg: &ExperimentConfig) -> Result<Vec<LimitComparison>> {
    empirical_vs_limit_with_threads(cfg, worker_count())
}

pub fn empirical_vs_limit_with_threads(cfg: &ExperimentConfig, threads: usize) -> Result<Vec<LimitComparison>> {
    if cfg.metric != Metric::FreeEnergy {
        return Err(Error::Config("empirical_vs_limit needs the free-energy metric".into()));
    }
    let sigma2 = match &cfg.data {
        DataSpec::Synthetic { cov: Covariance::Identity, label_sd } => label_sd * label_sd,
        _ => return Err(Error::Config("empirical_vs_limit needs synthetic identity-covariance data".into())),
    };
    let records = run_sweep_with_threads(cfg, threads)?;
    let mut out = Vec::with_capacity(records.len());
    for r in records.into_iter().filter(|r| r.error.is_none()) {
        let spec: KernelSpec = r.kernel.parse()?;
        let limit = free_energy_limit(&spec, r.lambda, r.gamma, r.c, sigma2)?;
        out.push(LimitComparison {
            n: r.n,
            d: r.d,
            c: r.c,
            gamma: r.gamma,
            lambda: r.lambda,
            empirical: r.mean,
            ci_half_width: r.ci_half_width,
            limit,
            abs_dev: (r.mean - limit).abs(),
        });
    }
    Ok(out)
}
