// SPDX-License-Identifier: MIT OR Apache-2.0

//! Learning one latent direction per feature from labeled latents.
//!
//! Discrete features are fit with L2-regularized logistic regression by
//! full-batch gradient descent; continuous features with ridge least squares
//! (closed form via Cholesky, or gradient descent above
//! [`FitConfig::normal_equations_max_dim`]). In both cases the direction is
//! the unit normal `w / |w|`; the bias is kept for diagnostics only.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::latent::{dot, norm, DirectionSet, LatentVector};
use crate::registry::{FeatureKind, FeatureRegistry};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    /// Gradient-descent step size.
    pub learning_rate: f64,
    /// Gradient-descent iterations.
    pub epochs: usize,
    /// Logistic-regression L2 penalty.
    pub l2: f64,
    /// Ridge penalty for continuous features.
    pub ridge_l2: f64,
    /// Seeds weight initialization.
    pub rng_seed: u64,
    pub min_samples_per_feature: usize,
    /// Largest latent dimension solved through the d x d normal equations.
    pub normal_equations_max_dim: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            learning_rate: 0.1,
            epochs: 500,
            l2: 1e-4,
            ridge_l2: 1e-6,
            rng_seed: 0,
            min_samples_per_feature: 2,
            normal_equations_max_dim: 2048,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Validation(m.into()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be > 0");
        }
        if self.epochs == 0 {
            return bad("epochs must be >= 1");
        }
        if !(self.l2 >= 0.0 && self.ridge_l2 >= 0.0) {
            return bad("l2 penalties must be >= 0");
        }
        if self.min_samples_per_feature < 2 {
            return bad("min_samples_per_feature must be >= 2");
        }
        Ok(())
    }
}

/// Training diagnostics for one feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub feature: String,
    pub kind: FeatureKind,
    /// Samples labeling this feature.
    pub n: usize,
    pub valid: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub loss: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub rmse: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub r2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub bias: Option<f64>,
    /// Norm of the raw weight vector before normalization.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub weight_norm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub iterations: Option<usize>,
    /// Why the feature was skipped.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub reason: Option<String>,
}

impl FitReport {
    fn empty(feature: &str, kind: FeatureKind, n: usize) -> Self {
        FitReport {
            feature: feature.to_string(),
            kind,
            n,
            valid: true,
            loss: None,
            accuracy: None,
            rmse: None,
            r2: None,
            bias: None,
            weight_norm: None,
            iterations: None,
            reason: None,
        }
    }

    fn skipped(feature: &str, kind: FeatureKind, n: usize, err: &Error) -> Self {
        FitReport {
            valid: false,
            reason: Some(err.to_string()),
            ..FitReport::empty(feature, kind, n)
        }
    }
}

/// A fitted unit direction with its report.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedDirection {
    pub direction: Vec<f64>,
    pub report: FitReport,
}

/// Row-major design matrix.
struct Design {
    x: Vec<f64>,
    n: usize,
    d: usize,
}

impl Design {
    fn new(feature: &str, rows: &[&[f64]], y: &[f64], min: usize) -> Result<Design> {
        if rows.len() != y.len() {
            return Err(Error::dim(
                format!("labels for `{feature}`"),
                rows.len(),
                y.len(),
            ));
        }
        if rows.len() < min {
            return Err(Error::InsufficientSamples {
                feature: feature.to_string(),
                got: rows.len(),
                required: min,
            });
        }
        let d = rows[0].len();
        let mut x = Vec::with_capacity(rows.len() * d);
        for r in rows {
            if r.len() != d {
                return Err(Error::dim(format!("latent for `{feature}`"), d, r.len()));
            }
            x.extend_from_slice(r);
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "label {i} for `{feature}` is not finite"
            )));
        }
        Ok(Design {
            x,
            n: rows.len(),
            d,
        })
    }

    /// Root mean square over all entries.
    fn rms(&self) -> f64 {
        let m = self.x.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        if m == 0.0 || !m.is_finite() {
            return m;
        }
        let s: f64 = self.x.iter().map(|x| (x / m).powi(2)).sum();
        m * (s / self.x.len() as f64).sqrt()
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.d..(i + 1) * self.d]
    }

    fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.x.chunks_exact(self.d)
    }
}

fn unit(w: &[f64], feature: &str) -> Result<Vec<f64>> {
    let n = norm(w);
    if !(n > 0.0 && n.is_finite()) {
        return Err(Error::DegenerateLabels {
            feature: feature.to_string(),
            message: "fitted weight vector is zero".into(),
        });
    }
    Ok(w.iter().map(|x| x / n).collect())
}

/// `ln(1 + e^t)` without overflow.
fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Logistic regression on labels in {-1, +1}.
///
/// Inputs are rescaled to unit RMS before training; `l2` applies to the
/// weights in that rescaled space and the reported `bias` is unaffected.
pub fn fit_discrete(
    feature: &str,
    latents: &[&[f64]],
    labels: &[f64],
    cfg: &FitConfig,
) -> Result<FittedDirection> {
    cfg.validate()?;
    let mut data = Design::new(feature, latents, labels, cfg.min_samples_per_feature)?;
    if let Some(v) = labels.iter().find(|&&v| v != 1.0 && v != -1.0) {
        return Err(Error::Validation(format!(
            "discrete label {v} for `{feature}` is not -1 or +1"
        )));
    }
    if labels.iter().all(|&v| v == labels[0]) {
        return Err(Error::DegenerateLabels {
            feature: feature.to_string(),
            message: "only one class present".into(),
        });
    }

    // Train on unit-RMS inputs so the outcome does not depend on latent scale.
    let scale = Some(data.rms())
        .filter(|s| *s > 0.0 && s.is_finite())
        .unwrap_or(1.0);
    data.x.iter_mut().for_each(|x| *x /= scale);
    let (n, d) = (data.n, data.d);
    let nf = n as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let init = Normal::new(0.0, 1e-3 / (d as f64).sqrt()).expect("valid normal");
    let mut w: Vec<f64> = (0..d).map(|_| init.sample(&mut rng)).collect();
    let mut b = 0.0;
    let mut grad = vec![0.0; d];
    let mut iterations = 0;

    for _ in 0..cfg.epochs {
        iterations += 1;
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut grad_b = 0.0;
        for (row, &y) in data.rows().zip(labels) {
            // d/dz ln(1 + e^{-yz}) = -y σ(-yz)
            let g = -y * sigmoid(-y * (dot(&w, row) + b));
            grad_b += g;
            for (gj, xj) in grad.iter_mut().zip(row) {
                *gj += g * xj;
            }
        }
        let mut gnorm2 = (grad_b / nf).powi(2);
        for (gj, wj) in grad.iter_mut().zip(&w) {
            *gj = *gj / nf + 2.0 * cfg.l2 * wj;
            gnorm2 += *gj * *gj;
        }
        for (wj, gj) in w.iter_mut().zip(&grad) {
            *wj -= cfg.learning_rate * gj;
        }
        b -= cfg.learning_rate * grad_b / nf;
        if !(gnorm2.is_finite() && w.iter().all(|x| x.is_finite())) {
            return Err(Error::Divergence {
                feature: feature.to_string(),
            });
        }
        if gnorm2 < 1e-24 {
            break;
        }
    }

    let mut loss = 0.0;
    let mut correct = 0usize;
    for (row, &y) in data.rows().zip(labels) {
        let z = dot(&w, row) + b;
        loss += softplus(-y * z);
        if (z >= 0.0) == (y > 0.0) {
            correct += 1;
        }
    }
    let loss = loss / nf + cfg.l2 * dot(&w, &w);
    if !loss.is_finite() {
        return Err(Error::Divergence {
            feature: feature.to_string(),
        });
    }

    let mut report = FitReport::empty(feature, FeatureKind::Discrete, n);
    report.loss = Some(loss);
    report.accuracy = Some(correct as f64 / nf);
    report.bias = Some(b);
    report.weight_norm = Some(norm(&w) / scale);
    report.iterations = Some(iterations);
    Ok(FittedDirection {
        direction: unit(&w, feature)?,
        report,
    })
}

/// Solves `a x = b` in place for symmetric positive definite `a` (row-major,
/// d x d). Returns `None` when a pivot is not safely positive.
fn cholesky_solve(a: &mut [f64], b: &mut [f64], d: usize) -> Option<()> {
    let scale = (0..d).map(|i| a[i * d + i].abs()).fold(0.0, f64::max);
    let floor = scale * 1e-12;
    for j in 0..d {
        let mut s = a[j * d + j];
        for k in 0..j {
            s -= a[j * d + k] * a[j * d + k];
        }
        if s.is_nan() || s <= floor {
            return None;
        }
        let ljj = s.sqrt();
        a[j * d + j] = ljj;
        for i in j + 1..d {
            let mut s = a[i * d + j];
            for k in 0..j {
                s -= a[i * d + k] * a[j * d + k];
            }
            a[i * d + j] = s / ljj;
        }
    }
    // L z = b
    for i in 0..d {
        let mut s = b[i];
        for k in 0..i {
            s -= a[i * d + k] * b[k];
        }
        b[i] = s / a[i * d + i];
    }
    // L^T x = z
    for i in (0..d).rev() {
        let mut s = b[i];
        for k in i + 1..d {
            s -= a[k * d + i] * b[k];
        }
        b[i] = s / a[i * d + i];
    }
    Some(())
}

/// Ridge regression `min Σ (w·x + b - y)^2 + ridge_l2 |w|^2`, intercept unpenalized.
pub fn fit_continuous(
    feature: &str,
    latents: &[&[f64]],
    labels: &[f64],
    cfg: &FitConfig,
) -> Result<FittedDirection> {
    cfg.validate()?;
    let data = Design::new(feature, latents, labels, cfg.min_samples_per_feature)?;
    if labels.iter().all(|&v| v == labels[0]) {
        return Err(Error::DegenerateLabels {
            feature: feature.to_string(),
            message: "labels are constant".into(),
        });
    }
    let (n, d) = (data.n, data.d);
    let nf = n as f64;

    let mut mean_x = vec![0.0; d];
    for row in data.rows() {
        for (m, x) in mean_x.iter_mut().zip(row) {
            *m += x;
        }
    }
    mean_x.iter_mut().for_each(|m| *m /= nf);
    let mean_y = labels.iter().sum::<f64>() / nf;

    let (w, iterations) = if d <= cfg.normal_equations_max_dim {
        (
            ridge_normal_equations(feature, &data, labels, &mean_x, mean_y, cfg.ridge_l2)?,
            None,
        )
    } else {
        let (w, it) = ridge_gradient_descent(feature, &data, labels, &mean_x, mean_y, cfg)?;
        (w, Some(it))
    };
    let b = mean_y - dot(&w, &mean_x);

    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        let r = dot(&w, data.row(i)) + b - y;
        ss_res += r * r;
        ss_tot += (y - mean_y).powi(2);
    }

    let mut report = FitReport::empty(feature, FeatureKind::Continuous, n);
    report.rmse = Some((ss_res / nf).sqrt());
    report.r2 = Some(1.0 - ss_res / ss_tot);
    report.bias = Some(b);
    report.weight_norm = Some(norm(&w));
    report.iterations = iterations;
    Ok(FittedDirection {
        direction: unit(&w, feature)?,
        report,
    })
}

fn ridge_normal_equations(
    feature: &str,
    data: &Design,
    y: &[f64],
    mean_x: &[f64],
    mean_y: f64,
    l2: f64,
) -> Result<Vec<f64>> {
    let d = data.d;
    let mut gram = vec![0.0; d * d];
    let mut rhs = vec![0.0; d];
    let mut centered = vec![0.0; d];
    for (row, &yi) in data.rows().zip(y) {
        for ((c, x), m) in centered.iter_mut().zip(row).zip(mean_x) {
            *c = x - m;
        }
        let yc = yi - mean_y;
        for i in 0..d {
            let ci = centered[i];
            rhs[i] += ci * yc;
            let g = &mut gram[i * d..i * d + i + 1];
            for (gij, cj) in g.iter_mut().zip(&centered) {
                *gij += ci * cj;
            }
        }
    }
    for i in 0..d {
        gram[i * d + i] += l2;
        for j in 0..i {
            gram[j * d + i] = gram[i * d + j];
        }
    }
    cholesky_solve(&mut gram, &mut rhs, d).ok_or_else(|| Error::SingularSystem {
        feature: feature.to_string(),
    })?;
    Ok(rhs)
}

fn ridge_gradient_descent(
    feature: &str,
    data: &Design,
    y: &[f64],
    mean_x: &[f64],
    mean_y: f64,
    cfg: &FitConfig,
) -> Result<(Vec<f64>, usize)> {
    // Gradient of (1/n) Σ (w·xc - yc)^2 + (l2/n) |w|^2; same minimizer as the
    // unscaled objective. Starts at zero so that underdetermined systems
    // converge to the minimum-norm solution.
    let d = data.d;
    let nf = data.n as f64;
    let mut w = vec![0.0; d];
    let mut grad = vec![0.0; d];
    let mut centered = vec![0.0; d];
    let mut iterations = 0;
    for _ in 0..cfg.epochs {
        iterations += 1;
        grad.iter_mut().for_each(|g| *g = 0.0);
        for (row, &yi) in data.rows().zip(y) {
            for ((c, x), m) in centered.iter_mut().zip(row).zip(mean_x) {
                *c = x - m;
            }
            let r = dot(&w, &centered) - (yi - mean_y);
            for (g, c) in grad.iter_mut().zip(&centered) {
                *g += 2.0 * r * c;
            }
        }
        let mut gnorm2 = 0.0;
        for (g, wj) in grad.iter_mut().zip(&w) {
            *g = (*g + 2.0 * cfg.ridge_l2 * wj) / nf;
            gnorm2 += *g * *g;
        }
        for (wj, g) in w.iter_mut().zip(&grad) {
            *wj -= cfg.learning_rate * g;
        }
        if !gnorm2.is_finite() {
            return Err(Error::Divergence {
                feature: feature.to_string(),
            });
        }
        if gnorm2 < 1e-24 {
            break;
        }
    }
    Ok((w, iterations))
}

/// A latent with labels for any subset of registry features.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub latent: LatentVector,
    pub labels: BTreeMap<String, f64>,
}

/// Result of [`fit_all`]: directions in registry order plus one report per feature.
#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub directions: DirectionSet,
    pub reports: Vec<FitReport>,
}

impl FitOutcome {
    pub fn skipped(&self) -> impl Iterator<Item = &FitReport> {
        self.reports.iter().filter(|r| !r.valid)
    }

    pub fn is_complete(&self) -> bool {
        self.reports.iter().all(|r| r.valid)
    }

    pub fn report_json(&self) -> String {
        #[derive(Serialize)]
        struct Out<'a> {
            latent_dim: usize,
            valid: usize,
            skipped: usize,
            features: &'a [FitReport],
        }
        let valid = self.reports.iter().filter(|r| r.valid).count();
        serde_json::to_string_pretty(&Out {
            latent_dim: self.directions.latent_dim(),
            valid,
            skipped: self.reports.len() - valid,
            features: &self.reports,
        })
        .expect("report serializes")
    }
}

/// Maps dataset labels for discrete features onto {-1, +1}; 0 counts as -1.
fn discrete_label(v: f64) -> Option<f64> {
    if v == 1.0 {
        Some(1.0)
    } else if v == 0.0 || v == -1.0 {
        Some(-1.0)
    } else {
        None
    }
}

/// Fits every registry feature on the samples that label it. Features that
/// cannot be fit get a zero (invalid) row and a report carrying the reason.
pub fn fit_all(
    dataset: &[LabeledSample],
    reg: &FeatureRegistry,
    cfg: &FitConfig,
) -> Result<FitOutcome> {
    cfg.validate()?;
    let Some(first) = dataset.first() else {
        return Err(Error::EmptyFit);
    };
    let d = first.latent.dim();
    for s in dataset {
        if s.latent.dim() != d {
            return Err(Error::dim("dataset latent dimension", d, s.latent.dim()));
        }
        if let Some(id) = s.labels.keys().find(|id| reg.index_of(id).is_none()) {
            return Err(Error::UnknownFeature(id.clone()));
        }
    }

    let fitted: Vec<(Vec<f64>, FitReport)> = reg
        .features()
        .par_iter()
        .map(|f| {
            let mut xs: Vec<&[f64]> = Vec::new();
            let mut ys: Vec<f64> = Vec::new();
            let mut bad_label = None;
            for s in dataset {
                if let Some(&v) = s.labels.get(&f.id) {
                    let y = match f.kind {
                        FeatureKind::Discrete => discrete_label(v).unwrap_or_else(|| {
                            bad_label.get_or_insert(v);
                            f64::NAN
                        }),
                        FeatureKind::Continuous => v,
                    };
                    xs.push(s.latent.as_slice());
                    ys.push(y);
                }
            }
            let n = xs.len();
            let result = match (bad_label, f.kind) {
                (Some(v), _) => Err(Error::Validation(format!(
                    "discrete label {v} for `{}` is not in {{-1, 0, 1}}",
                    f.id
                ))),
                (None, FeatureKind::Discrete) => fit_discrete(&f.id, &xs, &ys, cfg),
                (None, FeatureKind::Continuous) => fit_continuous(&f.id, &xs, &ys, cfg),
            };
            match result {
                Ok(fd) => (fd.direction, fd.report),
                Err(e) => (vec![0.0; d], FitReport::skipped(&f.id, f.kind, n, &e)),
            }
        })
        .collect();

    if fitted.iter().all(|(_, r)| !r.valid) {
        return Err(Error::EmptyFit);
    }
    let (rows, reports): (Vec<_>, Vec<_>) = fitted.into_iter().unzip();
    let ids = reg.ids().map(String::from).collect();
    Ok(FitOutcome {
        directions: DirectionSet::new(ids, rows)?,
        reports,
    })
}
