// SPDX-License-Identifier: MIT OR Apache-2.0

//! Synthetic ground truth for direction fitting and navigation.
//!
//! An [`OracleWorld`] plants one unit direction per feature in a
//! d-dimensional Gaussian latent space and labels latents through those
//! directions with additive Gaussian noise. Fitting on its datasets and
//! comparing against the planted directions measures recovery error without
//! any generator network.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fit::{fit_all, FitConfig, LabeledSample};
use crate::latent::{dot, norm, DirectionSet, LatentShape, LatentVector};
use crate::nav::{navigate_sequential, SequentialParams};
use crate::registry::{FeatureDef, FeatureKind, FeatureRegistry, FeatureVector, ValueRange};

/// Ground-truth latent world.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleWorld {
    pub d: usize,
    pub planted: DirectionSet,
    pub kinds: Vec<FeatureKind>,
    pub noise_sigma: f64,
    pub entanglement_deg: f64,
    pub rng_seed: u64,
}

/// SplitMix64 finalizer, used to derive independent per-item seeds.
pub(crate) fn mix_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const PLANT_STREAM: u64 = 0x5EED_0001;
const DATA_STREAM: u64 = 0x5EED_0002;
const NAV_STREAM: u64 = 0x5EED_0003;

/// A registry of `kinds.len()` synthetic features named `f00`, `f01`, ...
pub fn synthetic_registry(kinds: &[FeatureKind]) -> FeatureRegistry {
    let width = kinds.len().saturating_sub(1).to_string().len().max(2);
    let defs = kinds
        .iter()
        .enumerate()
        .map(|(i, &kind)| FeatureDef {
            id: format!("f{i:0width$}"),
            display_name: format!("Feature {i}"),
            group: "synthetic".into(),
            kind,
            value_range: ValueRange::new(-3.0, 3.0),
        })
        .collect();
    FeatureRegistry::new(defs).expect("synthetic registry is valid")
}

/// Copy of `reg` with every feature set to `kind`.
pub fn with_uniform_kind(reg: &FeatureRegistry, kind: FeatureKind) -> FeatureRegistry {
    let defs = reg
        .features()
        .iter()
        .map(|f| FeatureDef { kind, ..f.clone() })
        .collect();
    FeatureRegistry::new(defs).expect("kind change keeps registry valid")
}

fn gaussian_unit(rng: &mut impl Rng, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let n = norm(&v);
        if n > 1e-8 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Orthonormalizes `v` against `basis` (two rounds of modified Gram-Schmidt).
fn orthonormalize(mut v: Vec<f64>, basis: &[Vec<f64>]) -> Option<Vec<f64>> {
    for _ in 0..2 {
        for b in basis {
            let c = dot(&v, b);
            for (x, y) in v.iter_mut().zip(b) {
                *x -= c * y;
            }
        }
    }
    let n = norm(&v);
    (n > 1e-6).then(|| v.into_iter().map(|x| x / n).collect())
}

/// Plants one direction per registry feature.
///
/// Directions start orthonormal. When `entanglement_deg < 90`, features are
/// paired in order (0,1), (2,3), ... and the second of each pair is rotated
/// toward the first until they meet at exactly `entanglement_deg`; other
/// pairs stay orthogonal, so the minimum pairwise angle is `entanglement_deg`.
pub fn make_world(
    reg: &FeatureRegistry,
    d: usize,
    entanglement_deg: f64,
    noise_sigma: f64,
    rng_seed: u64,
) -> Result<OracleWorld> {
    let k = reg.len();
    if d == 0 || k > d {
        return Err(Error::Infeasible(format!(
            "{k} directions do not fit in dimension {d}"
        )));
    }
    if !(0.0..=90.0).contains(&entanglement_deg) {
        return Err(Error::Infeasible(format!(
            "entanglement angle {entanglement_deg} must lie in [0, 90]"
        )));
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::Validation(format!(
            "noise sigma {noise_sigma} must be >= 0"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(rng_seed, PLANT_STREAM));
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(k);
    while basis.len() < k {
        if let Some(v) = orthonormalize(gaussian_unit(&mut rng, d), &basis) {
            basis.push(v);
        }
    }

    if entanglement_deg < 90.0 {
        let (s, c) = entanglement_deg.to_radians().sin_cos();
        for pair in basis.chunks_exact_mut(2) {
            let [a, b] = pair else { unreachable!() };
            for (bj, aj) in b.iter_mut().zip(a.iter()) {
                *bj = c * aj + s * *bj;
            }
            let n = norm(b);
            b.iter_mut().for_each(|x| *x /= n);
        }
    }

    let planted = DirectionSet::new(reg.ids().map(String::from).collect(), basis)?;
    Ok(OracleWorld {
        d,
        planted,
        kinds: reg.kinds(),
        noise_sigma,
        entanglement_deg,
        rng_seed,
    })
}

impl OracleWorld {
    pub fn len(&self) -> usize {
        self.kinds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kinds.is_empty()
    }

    /// Labels every feature: continuous `L·p + noise`, discrete `sign(L·p + noise)`.
    pub fn label(
        &self,
        latent: &LatentVector,
        rng: &mut impl Rng,
    ) -> Result<BTreeMap<String, f64>> {
        if latent.dim() != self.d {
            return Err(Error::dim("latent vs oracle world", self.d, latent.dim()));
        }
        let noise = Normal::new(0.0, self.noise_sigma).expect("sigma validated");
        let l = latent.as_slice();
        Ok(self
            .planted
            .feature_ids()
            .iter()
            .zip(self.planted.rows())
            .zip(&self.kinds)
            .map(|((id, row), kind)| {
                let score = dot(l, row) + noise.sample(rng);
                let y = match kind {
                    FeatureKind::Continuous => score,
                    FeatureKind::Discrete if score >= 0.0 => 1.0,
                    FeatureKind::Discrete => -1.0,
                };
                (id.clone(), y)
            })
            .collect())
    }

    /// `n` standard-normal latents, each fully labeled. Sample `i` draws from
    /// its own seed derived from the world seed, so the output does not
    /// depend on how the work is scheduled.
    pub fn generate_dataset(&self, n: usize) -> Vec<LabeledSample> {
        let base = mix_seed(self.rng_seed, DATA_STREAM);
        (0..n)
            .into_par_iter()
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(base, i as u64));
                let data = (0..self.d).map(|_| rng.sample(StandardNormal)).collect();
                let latent = LatentVector::new(LatentShape::flat(self.d), data)
                    .expect("finite gaussian latent");
                let labels = self.label(&latent, &mut rng).expect("dimension matches");
                LabeledSample { latent, labels }
            })
            .collect()
    }

    /// Sign-agnostic angle (degrees) between each fitted row and its planted
    /// row; `None` for rows the fit skipped.
    pub fn angular_error(&self, fitted: &DirectionSet) -> Result<Vec<Option<f64>>> {
        if fitted.len() != self.len() {
            return Err(Error::dim(
                "fitted vs planted direction count",
                self.len(),
                fitted.len(),
            ));
        }
        if fitted.latent_dim() != self.d {
            return Err(Error::dim(
                "fitted vs planted latent dim",
                self.d,
                fitted.latent_dim(),
            ));
        }
        Ok((0..self.len())
            .map(|i| {
                fitted.is_valid(i).then(|| {
                    let a = stable_angle_deg(fitted.row(i), self.planted.row(i));
                    a.min(180.0 - a)
                })
            })
            .collect())
    }
}

/// Angle between unit vectors via `2 atan2(|a - b|, |a + b|)`, which keeps
/// full precision near 0 and 180 degrees where `acos` does not.
fn stable_angle_deg(a: &[f64], b: &[f64]) -> f64 {
    let (mut diff, mut sum) = (0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        diff += (x - y) * (x - y);
        sum += (x + y) * (x + y);
    }
    (2.0 * diff.sqrt().atan2(sum.sqrt())).to_degrees()
}

/// Settings for [`oracle_eval`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleEvalConfig {
    pub d: usize,
    pub n: usize,
    pub noise_sigma: f64,
    pub entanglement_deg: f64,
    pub rng_seed: u64,
    /// Pass threshold on the maximum angular error.
    pub threshold_deg: f64,
    /// Fresh seeds navigated in the end-to-end check.
    pub nav_trials: usize,
    /// Allowed gap between planted projections and targets after navigation.
    pub nav_tolerance: f64,
    #[serde(skip)]
    pub fit: FitConfig,
}

impl Default for OracleEvalConfig {
    fn default() -> Self {
        OracleEvalConfig {
            d: 64,
            n: 3000,
            noise_sigma: 0.1,
            entanglement_deg: 80.0,
            rng_seed: 0,
            threshold_deg: 10.0,
            nav_trials: 20,
            nav_tolerance: 0.15,
            fit: FitConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeatureError {
    pub feature: String,
    pub kind: FeatureKind,
    pub angular_error_deg: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NavCheck {
    pub trials: usize,
    /// Largest gap between a planted noiseless label and its target.
    pub max_deviation: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    pub config: OracleEvalConfig,
    pub features: Vec<FeatureError>,
    /// Infinite when a feature was skipped.
    #[serde(serialize_with = "finite_or_null")]
    pub max_error_deg: f64,
    #[serde(serialize_with = "finite_or_null")]
    pub mean_error_deg: f64,
    pub min_fitted_angle_deg: Option<f64>,
    pub navigation: NavCheck,
    pub passed: bool,
}

fn finite_or_null<S: serde::Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_none()
    }
}

/// Output of [`oracle_eval`], including artifacts callers may persist.
#[derive(Debug, Clone)]
pub struct OracleRun {
    pub world: OracleWorld,
    pub dataset: Vec<LabeledSample>,
    pub fitted: DirectionSet,
    pub report: OracleReport,
}

/// Builds a world over `reg`, samples a dataset, fits it, and measures
/// angular recovery plus an end-to-end navigation check against the planted
/// directions.
pub fn oracle_eval(reg: &FeatureRegistry, cfg: &OracleEvalConfig) -> Result<OracleRun> {
    let world = make_world(
        reg,
        cfg.d,
        cfg.entanglement_deg,
        cfg.noise_sigma,
        cfg.rng_seed,
    )?;
    let dataset = world.generate_dataset(cfg.n);
    let outcome = fit_all(&dataset, reg, &cfg.fit)?;
    let errors = world.angular_error(&outcome.directions)?;

    let features: Vec<FeatureError> = reg
        .features()
        .iter()
        .zip(&errors)
        .map(|(f, e)| FeatureError {
            feature: f.id.clone(),
            kind: f.kind,
            angular_error_deg: *e,
        })
        .collect();
    let max_error_deg = errors
        .iter()
        .map(|e| e.unwrap_or(f64::INFINITY))
        .fold(0.0, f64::max);
    let mean_error_deg = errors
        .iter()
        .map(|e| e.unwrap_or(f64::INFINITY))
        .sum::<f64>()
        / errors.len() as f64;
    let valid = outcome.directions.valid_subset();
    let min_fitted_angle_deg = crate::angles::angle_matrix(&valid)
        .ok()
        .and_then(|m| m.min_off_diagonal())
        .map(|(a, _, _)| a);

    let navigation = navigation_check(&world, &outcome.directions, cfg)?;
    let passed = max_error_deg <= cfg.threshold_deg;
    let report = OracleReport {
        config: cfg.clone(),
        features,
        max_error_deg,
        mean_error_deg,
        min_fitted_angle_deg,
        navigation,
        passed,
    };
    Ok(OracleRun {
        world,
        dataset,
        fitted: outcome.directions,
        report,
    })
}

/// Navigates fresh seeds to random targets with the fitted directions, then
/// re-labels the result noiselessly through the planted directions.
///
/// Continuous targets are drawn from `[-2, 2]` and compared against the
/// planted projection; discrete targets are `±1` and compared against the
/// planted sign label.
pub fn navigation_check(
    world: &OracleWorld,
    fitted: &DirectionSet,
    cfg: &OracleEvalConfig,
) -> Result<NavCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.rng_seed, NAV_STREAM));
    let noiseless = OracleWorld {
        noise_sigma: 0.0,
        ..world.clone()
    };
    let k = world.len();
    let params = SequentialParams {
        tol: 1e-9,
        max_passes: 200,
    };
    let mut max_deviation: f64 = 0.0;
    for _ in 0..cfg.nav_trials {
        let data = (0..world.d).map(|_| rng.sample(StandardNormal)).collect();
        let start = LatentVector::new(LatentShape::flat(world.d), data)?;
        let mut target = FeatureVector::unmasked(k);
        for i in 0..k {
            if fitted.is_valid(i) && rng.random_bool(0.5) {
                let v = match world.kinds[i] {
                    FeatureKind::Continuous => rng.random_range(-2.0..=2.0),
                    FeatureKind::Discrete if rng.random_bool(0.5) => 1.0,
                    FeatureKind::Discrete => -1.0,
                };
                target.set(i, v);
            }
        }
        let out = navigate_sequential(&start, &target, fitted, params)?;
        let labels = noiseless.label(&out.latent, &mut rng)?;
        for f in target.masked_indices() {
            let id = &world.planted.feature_ids()[f];
            max_deviation = max_deviation.max((labels[id] - target.values[f]).abs());
        }
    }
    Ok(NavCheck {
        trials: cfg.nav_trials,
        max_deviation,
        tolerance: cfg.nav_tolerance,
        passed: max_deviation <= cfg.nav_tolerance,
    })
}
