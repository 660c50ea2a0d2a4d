use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use gpdd::data::{self, AugmentMode, Covariance};
use gpdd::gp::{self, CvMode, HyperParams};
use gpdd::harness::sweep::{resolve_lambda, WHITEN_TOL};
use gpdd::harness::{emit, run_sweep, validate, ExperimentConfig, LambdaPolicy};
use gpdd::kernels::{self, KernelSpec};
use gpdd::rmt::{self, Offset, RmtContext};
use gpdd::{Error, Result};

#[derive(Parser)]
#[command(name = "gpdd", version, about = "GP free energy, predictive losses and their proportional-regime limits")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Policy {
    /// Kernel as given, β₀ = β/λ solved self-consistently
    PlugIn,
    /// Bandwidth set to η = λ
    LambdaScaled,
}

impl From<Policy> for LambdaPolicy {
    fn from(p: Policy) -> Self {
        match p {
            Policy::PlugIn => LambdaPolicy::Optimal,
            Policy::LambdaScaled => LambdaPolicy::OptimalScaled,
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a replicated sweep from a JSON config
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        plot: Option<PathBuf>,
    },
    /// Tabulate the limiting free energy over a c grid
    Limits {
        #[arg(long)]
        kernel: KernelSpec,
        #[arg(long)]
        c_min: f64,
        #[arg(long)]
        c_max: f64,
        #[arg(long)]
        points: usize,
        #[arg(long)]
        gamma: f64,
        #[arg(long, conflicts_with = "optimal_lambda", required_unless_present = "optimal_lambda")]
        lambda: Option<f64>,
        #[arg(long)]
        optimal_lambda: bool,
        #[arg(long, value_enum, default_value = "plug-in")]
        policy: Policy,
        #[arg(long)]
        out: PathBuf,
    },
    /// Closed-form optimal temperature or regularization
    Optimal {
        #[command(subcommand)]
        which: Which,
    },
    /// Whiten a CSV table
    Whiten {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        label: String,
        #[arg(long)]
        output: PathBuf,
    },
    /// Add columns to a CSV table
    Augment {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "y")]
        label: String,
        #[arg(long)]
        mode: AugmentMode,
        #[arg(long)]
        target_d: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        output: PathBuf,
    },
    /// Run the oracle and invariant checks
    Validate {
        #[arg(long, default_value = "all")]
        suite: validate::Suite,
    },
    /// Compare F_n with the sum of exact leave-k-out scores
    Cvcheck {
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..=6))]
        n: u64,
        #[arg(long)]
        kernel: KernelSpec,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 3)]
        d: usize,
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
        #[arg(long, default_value_t = 1.0)]
        gamma: f64,
    },
}

#[derive(Subcommand)]
enum Which {
    /// γ* for λ = μ/γ
    Gamma {
        #[arg(long)]
        kernel: KernelSpec,
        #[arg(long)]
        c: f64,
        #[arg(long)]
        mu: f64,
    },
    /// λ* at temperature γ
    Lambda {
        #[arg(long)]
        kernel: KernelSpec,
        #[arg(long)]
        c: f64,
        #[arg(long)]
        gamma: f64,
        #[arg(long, value_enum, default_value = "plug-in")]
        policy: Policy,
    },
}

/// Exit status for a failed check, as opposed to an error.
struct Failed;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.cmd) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(Failed)) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 3 } else { 2 })
        }
    }
}

fn write(path: &PathBuf, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|source| Error::Io { path: path.clone(), source })
}

fn fmt_num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        String::new()
    }
}

fn run(cmd: Cmd) -> Result<std::result::Result<(), Failed>> {
    match cmd {
        Cmd::Sweep { config, out, plot } => {
            let cfg = ExperimentConfig::load(&config)?;
            let records = run_sweep(&cfg)?;
            emit::emit(&records, &out, plot.as_deref())?;
            let gaps = records.iter().filter(|r| r.error.is_some()).count();
            eprintln!("{} records written to {}", records.len(), out.display());
            if gaps > 0 {
                eprintln!("{gaps} grid points have no optimal lambda (marked in the error column)");
            }
        }
        Cmd::Limits { kernel, c_min, c_max, points, gamma, lambda, optimal_lambda, policy, out } => {
            if !(c_min > 0.0 && c_max >= c_min) || points == 0 {
                return Err(Error::Config("need 0 < c-min <= c-max and points >= 1".into()));
            }
            let mut text = String::from("kernel,c,gamma,lambda,free_energy,error\n");
            for i in 0..points {
                let c = if points == 1 { c_min } else { c_min + (c_max - c_min) * i as f64 / (points - 1) as f64 };
                let resolved = match (lambda, optimal_lambda) {
                    (Some(l), _) => Ok((l, kernel)),
                    _ => resolve_lambda(policy.into(), &kernel, gamma, c),
                };
                let row = resolved.and_then(|(l, spec)| {
                    let (alpha, beta) = kernels::coefficients(&spec, 1.0)?;
                    let ctx = RmtContext::new(alpha, Offset::Fixed(beta), c)?;
                    Ok((l, spec, rmt::limiting_free_energy(l, gamma, &ctx)?))
                });
                match row {
                    Ok((l, spec, f)) => text.push_str(&format!(
                        "{spec},{},{},{},{},\n",
                        fmt_num(c),
                        fmt_num(gamma),
                        fmt_num(l),
                        fmt_num(f)
                    )),
                    Err(e @ Error::NoOptimalLambda { .. }) => text.push_str(&format!(
                        "{kernel},{},{},,,\"{e}\"\n",
                        fmt_num(c),
                        fmt_num(gamma)
                    )),
                    Err(e) => return Err(e),
                }
            }
            write(&out, &text)?;
        }
        Cmd::Optimal { which: Which::Gamma { kernel, c, mu } } => {
            let (alpha, beta) = kernels::coefficients(&kernel, 1.0)?;
            let ctx = RmtContext::new(alpha, Offset::Fixed(beta), c)?;
            println!("{}", rmt::optimal_gamma(mu, &ctx)?);
        }
        Cmd::Optimal { which: Which::Lambda { kernel, c, gamma, policy } } => {
            let (l, _) = resolve_lambda(policy.into(), &kernel, gamma, c)?;
            println!("{l}");
        }
        Cmd::Whiten { input, label, output } => {
            let ds = data::load_csv(&input, &label)?;
            let w = data::whiten_dataset(&ds, WHITEN_TOL)?;
            data::save_csv(&w, &output)?;
            if w.d() < ds.d() {
                eprintln!("dropped {} of {} columns as linearly dependent", ds.d() - w.d(), ds.d());
            }
        }
        Cmd::Augment { input, label, mode, target_d, seed, output } => {
            let ds = data::load_csv(&input, &label)?;
            data::save_csv(&data::augment(&ds, mode, target_d, seed)?, &output)?;
        }
        Cmd::Validate { suite } => {
            let report = validate::run(suite);
            println!("{report}");
            if !report.passed() {
                return Ok(Err(Failed));
            }
        }
        Cmd::Cvcheck { n, kernel, seed, d, lambda, gamma } => {
            let n = n as usize;
            let ds = data::synth_gaussian(n, d, &Covariance::Identity, 1.0, seed)?;
            let hp = HyperParams::new(lambda, gamma)?;
            let k = kernels::gram(&kernel, ds.x.as_ref())?;
            let f = gp::free_energy(k.as_ref(), &ds.y, &hp)?;
            let mut total = 0.0;
            for kk in 1..=n {
                let s = gp::cv_score(ds.x.as_ref(), &ds.y, kk, &kernel, &hp, CvMode::Exact)?;
                println!("S_{kk} = {s:.12}");
                total += s;
            }
            let dev = (f - total).abs();
            println!("F_n = {f:.12}\nsum S_k = {total:.12}\nabs diff = {dev:.3e}");
            if !(dev <= 1e-8 * f.abs().max(1.0)) {
                return Ok(Err(Failed));
            }
        }
    }
    Ok(Ok(()))
}
