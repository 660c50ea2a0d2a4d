//! Experiment configuration files.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{AugmentMode, Covariance, ThetaMode};
use crate::error::{Error, Result};
use crate::kernels::KernelSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    /// n⁻¹F_n
    FreeEnergy,
    /// PPL2 per test point
    Ppl2,
    /// PPNLL per test point
    Ppnll,
    /// PPNLL at the optimal temperature, per test point
    PpnllOpt,
}

impl Metric {
    pub fn id(&self) -> &'static str {
        match self {
            Metric::FreeEnergy => "free-energy",
            Metric::Ppl2 => "ppl2",
            Metric::Ppnll => "ppnll",
            Metric::PpnllOpt => "ppnll-opt",
        }
    }

    pub fn needs_test_points(&self) -> bool {
        !matches!(self, Metric::FreeEnergy)
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum LambdaPolicy {
    Fixed(f64),
    /// λ = μ/γ
    Tempered(f64),
    /// λ* with β₀ = β/λ solved self-consistently for the kernel as given.
    Optimal,
    /// λ* for the λ-scaled kernel (bandwidth η = λ).
    OptimalScaled,
}

impl LambdaPolicy {
    pub fn id(&self) -> String {
        match self {
            LambdaPolicy::Fixed(v) => format!("fixed={v}"),
            LambdaPolicy::Tempered(mu) => format!("tempered={mu}"),
            LambdaPolicy::Optimal => "optimal".into(),
            LambdaPolicy::OptimalScaled => "optimal-scaled".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn to_vec(&self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

/// d = base^{1−ξ} n^ξ, rounded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct XiScaling {
    pub xi: f64,
    #[serde(default = "default_xi_base")]
    pub base: f64,
}

fn default_xi_base() -> f64 {
    1024.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum DataSpec {
    Synthetic {
        #[serde(default = "default_cov")]
        cov: Covariance,
        #[serde(default = "one")]
        label_sd: f64,
    },
    /// Rows are subsampled per replicate; the first d columns are used.
    Csv {
        path: PathBuf,
        label: String,
        #[serde(default = "yes")]
        whiten: bool,
    },
    /// `base` with `base_d` columns, optionally whitened, then widened to the grid's d.
    Augmented {
        base: Box<DataSpec>,
        base_d: usize,
        mode: AugmentMode,
        #[serde(default = "yes")]
        whiten: bool,
    },
    /// `base` inputs with labels θ₀ᵀx + ε.
    Misspecified {
        base: Box<DataSpec>,
        theta: ThetaMode,
        #[serde(default = "one")]
        noise_sd: f64,
    },
}

fn default_cov() -> Covariance {
    Covariance::Identity
}

fn one() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

fn default_test_points() -> usize {
    200
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub kernel: KernelSpec,
    pub metric: Metric,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_grid: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_grid: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_grid: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xi_scaling: Option<XiScaling>,
    pub gamma: OneOrMany<f64>,
    pub lambda_policy: LambdaPolicy,
    pub reps: usize,
    #[serde(default = "default_test_points")]
    pub test_points: usize,
    pub seed: u64,
    pub data: DataSpec,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let dims = [self.d_grid.is_some(), self.c_grid.is_some(), self.xi_scaling.is_some()];
        if dims.iter().filter(|&&b| b).count() != 1 {
            return bad("exactly one of d_grid, c_grid, xi_scaling must be given".into());
        }
        if self.n.is_some() == self.n_grid.is_some() {
            return bad("exactly one of n, n_grid must be given".into());
        }
        if self.reps < 2 {
            return bad(format!("reps must be at least 2, got {}", self.reps));
        }
        if self.metric.needs_test_points() && self.test_points == 0 {
            return bad("test_points must be positive for predictive metrics".into());
        }
        let gammas = self.gammas();
        if gammas.is_empty() || gammas.iter().any(|g| !(*g > 0.0 && g.is_finite())) {
            return bad("gamma values must be positive".into());
        }
        match self.lambda_policy {
            LambdaPolicy::Fixed(v) | LambdaPolicy::Tempered(v) if !(v > 0.0 && v.is_finite()) => {
                return bad(format!("lambda policy value must be positive, got {v}"));
            }
            _ => {}
        }
        let grid = self.grid()?;
        if grid.is_empty() {
            return bad("empty (n, d) grid".into());
        }
        if grid.iter().any(|&(n, d)| n == 0 || d == 0) {
            return bad("grid contains n = 0 or d = 0".into());
        }
        self.data.validate(&grid)
    }

    pub fn gammas(&self) -> Vec<f64> {
        self.gamma.to_vec()
    }

    pub fn ns(&self) -> Vec<usize> {
        match (&self.n, &self.n_grid) {
            (Some(n), _) => vec![*n],
            (None, Some(v)) => v.clone(),
            _ => vec![],
        }
    }

    /// (n, d) grid points in output order.
    pub fn grid(&self) -> Result<Vec<(usize, usize)>> {
        let mut out = Vec::new();
        for n in self.ns() {
            if let Some(ds) = &self.d_grid {
                out.extend(ds.iter().map(|&d| (n, d)));
            } else if let Some(cs) = &self.c_grid {
                for &c in cs {
                    if !(c > 0.0 && c.is_finite()) {
                        return Err(Error::Config(format!("c values must be positive, got {c}")));
                    }
                    out.push((n, ((c * n as f64).round() as usize).max(1)));
                }
            } else if let Some(xi) = &self.xi_scaling {
                let d = xi.base.powf(1.0 - xi.xi) * (n as f64).powf(xi.xi);
                out.push((n, (d.round() as usize).max(1)));
            }
        }
        Ok(out)
    }
}

impl DataSpec {
    fn validate(&self, grid: &[(usize, usize)]) -> Result<()> {
        match self {
            DataSpec::Synthetic { label_sd, .. } if !(*label_sd > 0.0) => {
                Err(Error::Config(format!("label_sd must be positive, got {label_sd}")))
            }
            DataSpec::Augmented { base, base_d, .. } => {
                if let Some(&(_, d)) = grid.iter().find(|&&(_, d)| d < *base_d) {
                    return Err(Error::Config(format!("grid d = {d} is below base_d = {base_d}")));
                }
                base.validate(&[])
            }
            DataSpec::Misspecified { base, noise_sd, .. } => {
                if !(*noise_sd >= 0.0) {
                    return Err(Error::Config(format!("noise_sd must be non-negative, got {noise_sd}")));
                }
                base.validate(&[])
            }
            _ => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASIC: &str = r#"{
        "name": "fig1",
        "kernel": {"family": "linear"},
        "metric": "free-energy",
        "n": 300,
        "d_grid": [30, 60, 90],
        "gamma": [0.1, 0.5],
        "lambda_policy": "optimal",
        "reps": 5,
        "seed": 7,
        "data": {"synthetic": {}}
    }"#;

    #[test]
    fn parses() {
        let cfg = ExperimentConfig::from_json(BASIC).unwrap();
        assert_eq!(cfg.grid().unwrap(), vec![(300, 30), (300, 60), (300, 90)]);
        assert_eq!(cfg.gammas(), vec![0.1, 0.5]);
        assert_eq!(cfg.test_points, 200);
    }

    #[test]
    fn rejects_unknown_keys() {
        let text = BASIC.replace("\"seed\": 7", "\"seed\": 7, \"colour\": 1");
        assert!(matches!(ExperimentConfig::from_json(&text), Err(Error::Config(_))));
    }

    #[test]
    fn rejects_two_dimension_grids() {
        let text = BASIC.replace("\"d_grid\": [30, 60, 90]", "\"d_grid\": [30], \"c_grid\": [0.5]");
        assert!(ExperimentConfig::from_json(&text).is_err());
    }

    #[test]
    fn rejects_single_rep() {
        let text = BASIC.replace("\"reps\": 5", "\"reps\": 1");
        assert!(ExperimentConfig::from_json(&text).is_err());
    }

    #[test]
    fn xi_scaling_grid() {
        let text = BASIC
            .replace("\"n\": 300", "\"n_grid\": [1024, 4096]")
            .replace("\"d_grid\": [30, 60, 90]", "\"xi_scaling\": {\"xi\": 0.5}");
        let cfg = ExperimentConfig::from_json(&text).unwrap();
        assert_eq!(cfg.grid().unwrap(), vec![(1024, 1024), (4096, 2048)]);
    }

    #[test]
    fn policies_parse() {
        for (text, want) in [
            (r#"{"fixed": 0.01}"#, LambdaPolicy::Fixed(0.01)),
            (r#"{"tempered": 2}"#, LambdaPolicy::Tempered(2.0)),
            (r#""optimal-scaled""#, LambdaPolicy::OptimalScaled),
        ] {
            assert_eq!(serde_json::from_str::<LambdaPolicy>(text).unwrap(), want);
        }
    }
}
