//! Datasets: synthetic draws, whitening, augmentation, label
//! misspecification and CSV I/O.

use std::path::Path;

use faer::linalg::matmul::matmul;
use faer::{Accum, Mat, MatRef, Par, Side};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Meta {
    pub seed: u64,
    pub whitened: bool,
    /// Original column index of each retained column.
    pub retained_features: Vec<usize>,
    pub label_variance: f64,
    pub feature_names: Vec<String>,
    pub label_name: String,
}

/// n×d inputs with n labels.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub x: Mat<f64>,
    pub y: Vec<f64>,
    pub meta: Meta,
}

fn default_names(d: usize) -> Vec<String> {
    (1..=d).map(|j| format!("x{j}")).collect()
}

impl Dataset {
    pub fn new(x: Mat<f64>, y: Vec<f64>, seed: u64) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} rows but {} labels",
                x.nrows(),
                y.len()
            )));
        }
        let d = x.ncols();
        let label_variance = population_variance(&y);
        Ok(Self {
            x,
            y,
            meta: Meta {
                seed,
                whitened: false,
                retained_features: (0..d).collect(),
                label_variance,
                feature_names: default_names(d),
                label_name: "y".into(),
            },
        })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    /// Rows `rows` and the first `d` columns.
    pub fn slice(&self, rows: &[usize], d: usize) -> Result<Dataset> {
        if d == 0 || d > self.d() || rows.iter().any(|&r| r >= self.n()) {
            return Err(Error::DimensionMismatch(format!(
                "cannot take {} rows and {d} columns from a {}x{} dataset",
                rows.len(),
                self.n(),
                self.d()
            )));
        }
        let x = Mat::from_fn(rows.len(), d, |i, j| self.x[(rows[i], j)]);
        let y: Vec<f64> = rows.iter().map(|&r| self.y[r]).collect();
        let mut meta = self.meta.clone();
        meta.retained_features.truncate(d);
        meta.feature_names.truncate(d);
        meta.label_variance = population_variance(&y);
        Ok(Dataset { x, y, meta })
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn population_variance(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let m = mean(v);
    v.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / v.len() as f64
}

/// Input covariance for synthetic draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum Covariance {
    Identity,
    Diagonal(Vec<f64>),
    Full(Vec<Vec<f64>>),
    /// The first ⌈fraction·d⌉ coordinates have variance `high`, the rest `low`.
    TwoLevel { high: f64, low: f64, fraction: f64 },
}

impl Covariance {
    /// Row transform R with x = zR for z ~ N(0, I), so that RᵀR = Σ.
    fn root(&self, d: usize) -> Result<Option<Mat<f64>>> {
        let diag = |v: &[f64]| -> Result<Option<Mat<f64>>> {
            if v.len() != d || v.iter().any(|&s| !(s >= 0.0 && s.is_finite())) {
                return Err(Error::Config(format!(
                    "diagonal covariance needs {d} non-negative entries"
                )));
            }
            Ok(Some(Mat::from_fn(d, d, |i, j| if i == j { v[i].sqrt() } else { 0.0 })))
        };
        match self {
            Covariance::Identity => Ok(None),
            Covariance::Diagonal(v) => diag(v),
            Covariance::TwoLevel { high, low, fraction } => {
                if !(0.0..=1.0).contains(fraction) {
                    return Err(Error::Config(format!("two-level fraction {fraction} outside [0, 1]")));
                }
                let k = (fraction * d as f64).ceil() as usize;
                let v: Vec<f64> = (0..d).map(|j| if j < k { *high } else { *low }).collect();
                diag(&v)
            }
            Covariance::Full(rows) => {
                if rows.len() != d || rows.iter().any(|r| r.len() != d) {
                    return Err(Error::Config(format!("full covariance must be {d}x{d}")));
                }
                let s = Mat::from_fn(d, d, |i, j| rows[i][j]);
                let asym = (0..d)
                    .flat_map(|i| (0..d).map(move |j| (i, j)))
                    .any(|(i, j)| (s[(i, j)] - s[(j, i)]).abs() > 1e-12 * (1.0 + s[(i, j)].abs()));
                if asym {
                    return Err(Error::Config("covariance is not symmetric".into()));
                }
                let evd = s
                    .self_adjoint_eigen(Side::Lower)
                    .map_err(|_| Error::Config("covariance eigendecomposition failed".into()))?;
                let u = evd.U();
                let ev = evd.S().column_vector();
                let top = (0..d).map(|i| ev[i]).fold(0.0f64, f64::max);
                if (0..d).any(|i| ev[i] < -1e-10 * top.max(1.0)) {
                    return Err(Error::Config("covariance is not positive semidefinite".into()));
                }
                // R = diag(√s) Uᵀ
                Ok(Some(Mat::from_fn(d, d, |i, j| ev[i].max(0.0).sqrt() * u[(j, i)])))
            }
        }
    }
}

/// Rows iid N(0, Σ), labels iid N(0, label_sd²).
pub fn synth_gaussian(n: usize, d: usize, cov: &Covariance, label_sd: f64, seed: u64) -> Result<Dataset> {
    if n == 0 || d == 0 {
        return Err(Error::Domain(format!("synth_gaussian needs n, d >= 1, got {n}, {d}")));
    }
    if !(label_sd > 0.0 && label_sd.is_finite()) {
        return Err(Error::Domain(format!("label_sd must be positive, got {label_sd}")));
    }
    let root = cov.root(d)?;
    let z = rng::normals(&mut rng::stream(seed, &[0]), n * d);
    let z = Mat::from_fn(n, d, |i, j| z[i * d + j]);
    let x = match root {
        None => z,
        Some(r) => {
            let mut x = Mat::<f64>::zeros(n, d);
            matmul(x.as_mut(), Accum::Replace, z.as_ref(), r.as_ref(), 1.0, Par::Seq);
            x
        }
    };
    let y: Vec<f64> = rng::normals(&mut rng::stream(seed, &[1]), n)
        .into_iter()
        .map(|e| label_sd * e)
        .collect();
    let mut ds = Dataset::new(x, y, seed)?;
    ds.meta.label_variance = label_sd * label_sd;
    Ok(ds)
}

/// Centers, drops near-dependent columns, applies Σ^{-1/2} on the retained
/// columns and standardizes Y.
///
/// Columns are scanned in order and kept while their residual variance,
/// given the columns already kept, exceeds tol·(largest eigenvalue of Σ).
pub fn whiten(x_raw: MatRef<'_, f64>, y_raw: &[f64], tol: f64) -> Result<Dataset> {
    let (n, d) = (x_raw.nrows(), x_raw.ncols());
    if n < 2 {
        return Err(Error::DegenerateData(format!("whitening needs n >= 2, got {n}")));
    }
    if y_raw.len() != n {
        return Err(Error::DimensionMismatch(format!("{n} rows but {} labels", y_raw.len())));
    }
    let means: Vec<f64> = (0..d).map(|j| (0..n).map(|i| x_raw[(i, j)]).sum::<f64>() / n as f64).collect();
    let xc = Mat::from_fn(n, d, |i, j| x_raw[(i, j)] - means[j]);
    let mut cov = Mat::<f64>::zeros(d, d);
    matmul(cov.as_mut(), Accum::Replace, xc.transpose(), xc.as_ref(), 1.0 / n as f64, Par::Seq);
    symmetrize(&mut cov);

    let eig = cov
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|_| Error::DegenerateData("covariance eigendecomposition failed".into()))?;
    let top = eig.iter().cloned().fold(0.0f64, f64::max);
    if !(top > 0.0) {
        return Err(Error::DegenerateData("all input directions have zero variance".into()));
    }
    let floor = tol * top;

    // in-order pivoted Cholesky on the covariance
    let mut kept: Vec<usize> = Vec::new();
    // row a of the Cholesky factor of the kept block
    let mut l: Vec<Vec<f64>> = Vec::new();
    for j in 0..d {
        let row: Vec<f64> = kept.iter().map(|&ka| cov[(j, ka)]).collect();
        // forward substitution against the kept block
        let mut v = vec![0.0; kept.len()];
        for a in 0..kept.len() {
            let s: f64 = (0..a).map(|b| l[a][b] * v[b]).sum();
            v[a] = (row[a] - s) / l[a][a];
        }
        let resid = cov[(j, j)] - v.iter().map(|t| t * t).sum::<f64>();
        if resid > floor {
            v.push(resid.sqrt());
            l.push(v);
            kept.push(j);
        }
    }
    if kept.is_empty() {
        return Err(Error::DegenerateData("no input column survives the variance threshold".into()));
    }

    let k = kept.len();
    let sub = Mat::from_fn(k, k, |a, b| cov[(kept[a], kept[b])]);
    let evd = sub
        .self_adjoint_eigen(Side::Lower)
        .map_err(|_| Error::DegenerateData("covariance eigendecomposition failed".into()))?;
    let u = evd.U();
    let s = evd.S().column_vector();
    if (0..k).any(|i| !(s[i] > 0.0)) {
        return Err(Error::DegenerateData("retained covariance is singular".into()));
    }
    let scaled = Mat::from_fn(k, k, |i, j| u[(i, j)] / s[j].sqrt());
    let mut w = Mat::<f64>::zeros(k, k);
    matmul(w.as_mut(), Accum::Replace, scaled.as_ref(), u.transpose(), 1.0, Par::Seq);
    symmetrize(&mut w);
    let xk = Mat::from_fn(n, k, |i, a| xc[(i, kept[a])]);
    let mut xw = Mat::<f64>::zeros(n, k);
    matmul(xw.as_mut(), Accum::Replace, xk.as_ref(), w.as_ref(), 1.0, Par::Seq);

    let my = mean(y_raw);
    let sd = population_variance(y_raw).sqrt();
    if !(sd > 0.0) {
        return Err(Error::DegenerateData("labels have zero variance".into()));
    }
    let y: Vec<f64> = y_raw.iter().map(|v| (v - my) / sd).collect();

    let mut ds = Dataset::new(xw, y, 0)?;
    ds.meta.whitened = true;
    ds.meta.retained_features = kept;
    ds.meta.label_variance = 1.0;
    Ok(ds)
}

fn symmetrize(m: &mut Mat<f64>) {
    let d = m.nrows();
    for j in 0..d {
        for i in j + 1..d {
            let s = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = s;
            m[(j, i)] = s;
        }
    }
}

/// Whitens a dataset, keeping its names and seed.
pub fn whiten_dataset(ds: &Dataset, tol: f64) -> Result<Dataset> {
    let mut out = whiten(ds.x.as_ref(), &ds.y, tol)?;
    out.meta.seed = ds.meta.seed;
    out.meta.label_name = ds.meta.label_name.clone();
    out.meta.feature_names = out
        .meta
        .retained_features
        .iter()
        .map(|&j| ds.meta.feature_names[j].clone())
        .collect();
    out.meta.retained_features = out
        .meta
        .retained_features
        .iter()
        .map(|&j| ds.meta.retained_features[j])
        .collect();
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AugmentMode {
    /// New columns iid N(0, 1).
    Gaussian,
    /// Column j repeats column j mod d₀.
    Copied,
    /// New columns are zero.
    Padded,
}

impl std::str::FromStr for AugmentMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(AugmentMode::Gaussian),
            "copied" => Ok(AugmentMode::Copied),
            "padded" => Ok(AugmentMode::Padded),
            _ => Err(Error::Config(format!("unknown augmentation mode {s:?}"))),
        }
    }
}

/// Widens the inputs to `target_d` columns.
pub fn augment(ds: &Dataset, mode: AugmentMode, target_d: usize, seed: u64) -> Result<Dataset> {
    let (n, d0) = (ds.n(), ds.d());
    if target_d < d0 {
        return Err(Error::Domain(format!("target_d = {target_d} is below the current d = {d0}")));
    }
    let extra = target_d - d0;
    let noise = match mode {
        AugmentMode::Gaussian => rng::normals(&mut rng::stream(seed, &[2]), n * extra),
        _ => Vec::new(),
    };
    let x = Mat::from_fn(n, target_d, |i, j| {
        if j < d0 {
            ds.x[(i, j)]
        } else {
            match mode {
                AugmentMode::Gaussian => noise[i * extra + (j - d0)],
                AugmentMode::Copied => ds.x[(i, j % d0)],
                AugmentMode::Padded => 0.0,
            }
        }
    });
    let mut meta = ds.meta.clone();
    meta.whitened = false;
    meta.seed = seed;
    // new columns have no source column; they index themselves
    for j in d0..target_d {
        meta.feature_names.push(format!("aug{}", j + 1));
        meta.retained_features.push(j);
    }
    Ok(Dataset { x, y: ds.y.clone(), meta })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThetaMode {
    /// θ₀ = d^{-1/2}·1
    Small,
    /// θ₀ = n·d^{-1/2}·1
    Large,
    /// θ₀ = 1
    Growing,
    /// θ₀ = 0
    Zero,
}

pub fn theta(mode: ThetaMode, n: usize, d: usize) -> Vec<f64> {
    let v = match mode {
        ThetaMode::Small => 1.0 / (d as f64).sqrt(),
        ThetaMode::Large => n as f64 / (d as f64).sqrt(),
        ThetaMode::Growing => 1.0,
        ThetaMode::Zero => 0.0,
    };
    vec![v; d]
}

/// Replaces labels with Y_i = θ₀ᵀX_i + ε_i.
pub fn misspecify_labels(ds: &Dataset, mode: ThetaMode, noise_sd: f64, seed: u64) -> Result<Dataset> {
    if !(noise_sd >= 0.0 && noise_sd.is_finite()) {
        return Err(Error::Domain(format!("noise_sd must be non-negative, got {noise_sd}")));
    }
    let (n, d) = (ds.n(), ds.d());
    let th = theta(mode, n, d);
    let eps = rng::normals(&mut rng::stream(seed, &[3]), n);
    let y: Vec<f64> = (0..n)
        .map(|i| (0..d).map(|j| ds.x[(i, j)] * th[j]).sum::<f64>() + noise_sd * eps[i])
        .collect();
    let mut meta = ds.meta.clone();
    meta.label_variance = population_variance(&y);
    Ok(Dataset { x: ds.x.clone(), y, meta })
}

/// Var θᵀZ = ‖θ‖² for Z ~ N(0, I) and the lower bound d⁻¹(Σθ_i)².
pub fn misspec_diagnostic(theta: &[f64]) -> Result<(f64, f64)> {
    if theta.is_empty() {
        return Err(Error::Domain("theta must have d >= 1".into()));
    }
    let var = theta.iter().map(|t| t * t).sum();
    let s: f64 = theta.iter().sum();
    Ok((var, s * s / theta.len() as f64))
}

pub fn load_csv(path: &Path, label: &str) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let label_col = headers.iter().position(|h| h == label).ok_or_else(|| Error::Csv {
        row: 1,
        col: 0,
        msg: format!("no label column {label:?}; available columns: {}", headers.join(", ")),
    })?;
    let d = headers.len() - 1;
    if d == 0 {
        return Err(Error::Csv { row: 1, col: 0, msg: "no feature columns".into() });
    }
    let mut xs = Vec::new();
    let mut y = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let row = r + 2;
        let rec = rec.map_err(|e| Error::Csv { row, col: 0, msg: e.to_string() })?;
        if rec.len() != headers.len() {
            return Err(Error::Csv {
                row,
                col: rec.len().min(headers.len()) + 1,
                msg: format!("expected {} fields, found {}", headers.len(), rec.len()),
            });
        }
        for (c, cell) in rec.iter().enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| Error::Csv {
                row,
                col: c + 1,
                msg: format!("non-numeric cell {cell:?}"),
            })?;
            if c == label_col {
                y.push(v);
            } else {
                xs.push(v);
            }
        }
    }
    let n = y.len();
    if n == 0 {
        return Err(Error::Csv { row: 2, col: 0, msg: "no data rows".into() });
    }
    let x = Mat::from_fn(n, d, |i, j| xs[i * d + j]);
    let mut ds = Dataset::new(x, y, 0)?;
    ds.meta.feature_names = headers
        .iter()
        .enumerate()
        .filter(|&(c, _)| c != label_col)
        .map(|(_, h)| h.clone())
        .collect();
    ds.meta.label_name = label.to_string();
    Ok(ds)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::Io { path: path.to_path_buf(), source },
        other => Error::Csv { row: 0, col: 0, msg: format!("{other:?}") },
    }
}

/// Writes features then the label, 17 significant digits.
pub fn save_csv(ds: &Dataset, path: &Path) -> Result<()> {
    let io = |source| Error::Io { path: path.to_path_buf(), source };
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut header = ds.meta.feature_names.clone();
    header.push(ds.meta.label_name.clone());
    w.write_record(&header).map_err(|e| csv_error(path, e))?;
    for i in 0..ds.n() {
        let mut rec: Vec<String> = (0..ds.d()).map(|j| format!("{:.16e}", ds.x[(i, j)])).collect();
        rec.push(format!("{:.16e}", ds.y[i]));
        w.write_record(&rec).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn whiten_two_points() {
        let x = Mat::from_fn(2, 1, |i, _| [1.0, 3.0][i]);
        let ds = whiten(x.as_ref(), &[0.0, 1.0], 1e-10).unwrap();
        assert!((ds.x[(0, 0)] + 1.0).abs() < 1e-14);
        assert!((ds.x[(1, 0)] - 1.0).abs() < 1e-14);
        assert_eq!(ds.y, vec![-1.0, 1.0]);
        assert!(ds.meta.whitened);
    }

    #[test]
    fn whiten_drops_duplicate() {
        let base = synth_gaussian(40, 3, &Covariance::Identity, 1.0, 5).unwrap();
        let x = Mat::from_fn(40, 4, |i, j| base.x[(i, [0, 1, 1, 2][j])]);
        let ds = whiten(x.as_ref(), &base.y, 1e-10).unwrap();
        assert_eq!(ds.d(), 3);
        assert_eq!(ds.meta.retained_features, vec![0, 1, 3]);
    }

    #[test]
    fn whiten_degenerate() {
        let x = Mat::<f64>::zeros(3, 2);
        assert!(matches!(whiten(x.as_ref(), &[1.0, 2.0, 3.0], 1e-10), Err(Error::DegenerateData(_))));
        let x = Mat::from_fn(3, 1, |i, _| i as f64);
        assert!(matches!(whiten(x.as_ref(), &[1.0; 3], 1e-10), Err(Error::DegenerateData(_))));
    }

    #[test]
    fn synth_is_deterministic() {
        let a = synth_gaussian(10, 4, &Covariance::Identity, 1.0, 9).unwrap();
        let b = synth_gaussian(10, 4, &Covariance::Identity, 1.0, 9).unwrap();
        assert_eq!(a.x, b.x);
        assert_eq!(a.y, b.y);
    }

    #[test]
    fn full_covariance_root() {
        let cov = Covariance::Full(vec![vec![2.0, 0.5], vec![0.5, 1.0]]);
        let ds = synth_gaussian(20000, 2, &cov, 1.0, 3).unwrap();
        let c01 = (0..20000).map(|i| ds.x[(i, 0)] * ds.x[(i, 1)]).sum::<f64>() / 20000.0;
        let c00 = (0..20000).map(|i| ds.x[(i, 0)].powi(2)).sum::<f64>() / 20000.0;
        assert!((c01 - 0.5).abs() < 0.05, "{c01}");
        assert!((c00 - 2.0).abs() < 0.08, "{c00}");
        let bad = Covariance::Full(vec![vec![1.0, 2.0], vec![2.0, 1.0]]);
        assert!(synth_gaussian(5, 2, &bad, 1.0, 3).is_err());
    }

    #[test]
    fn augment_modes() {
        let base = synth_gaussian(5, 30, &Covariance::Identity, 1.0, 1).unwrap();
        let c = augment(&base, AugmentMode::Copied, 45, 0).unwrap();
        for i in 0..5 {
            assert_eq!(c.x[(i, 30)], base.x[(i, 0)]);
            assert_eq!(c.x[(i, 44)], base.x[(i, 14)]);
        }
        let p = augment(&base, AugmentMode::Padded, 40, 0).unwrap();
        assert!((0..5).all(|i| (30..40).all(|j| p.x[(i, j)] == 0.0)));
        assert!(augment(&base, AugmentMode::Gaussian, 10, 0).is_err());
    }

    #[test]
    fn diagnostic_examples() {
        let d = 4;
        let small = theta(ThetaMode::Small, 10, d);
        let (v, b) = misspec_diagnostic(&small).unwrap();
        assert!((v - 1.0).abs() < 1e-15 && (b - 1.0).abs() < 1e-15);
        let (v, b) = misspec_diagnostic(&[1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!((v, b), (1.0, 0.25));
        let grow = theta(ThetaMode::Growing, 10, 7);
        assert_eq!(misspec_diagnostic(&grow).unwrap().0, 7.0);
    }
}
