// SPDX-License-Identifier: MIT OR Apache-2.0

//! Projection, seed sampling and navigation along feature directions.
//!
//! A latent `L` has feature value `v_f = L · D_f` along unit direction `D_f`.
//! Navigation moves `L` so that every mentioned feature reaches its target:
//!
//! * [`navigate_vectorized`] applies `L + (V_target - V_rand) D` in one step,
//!   with the difference zeroed for unmentioned features. This is exact when
//!   the rows of `D` are orthonormal.
//! * [`navigate_sequential`] steps along one direction at a time,
//!   re-projecting before each step, and repeats whole passes until the
//!   largest masked residual drops below `tol`. For entangled directions this
//!   is a Gauss-Seidel iteration on the Gram system and converges to the
//!   exact solution.

use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::latent::{dot, norm, DirectionSet, LatentShape, LatentVector};
use crate::registry::FeatureVector;

/// Maximum deviation from unit norm accepted by [`project_feature`].
pub const PROJECTION_NORM_TOL: f64 = 1e-6;

/// Default residual tolerance for [`navigate_sequential`].
pub const DEFAULT_TOL: f64 = 1e-3;
/// Default pass limit for [`navigate_sequential`].
pub const DEFAULT_MAX_PASSES: usize = 50;

/// Value of `latent` along the unit direction `dir`.
pub fn project_feature(latent: &LatentVector, dir: &[f64]) -> Result<f64> {
    if dir.len() != latent.dim() {
        return Err(Error::dim("direction vs latent", latent.dim(), dir.len()));
    }
    let n = norm(dir);
    if (n - 1.0).abs() > PROJECTION_NORM_TOL {
        return Err(Error::Validation(format!(
            "direction has norm {n}, expected 1"
        )));
    }
    Ok(dot(latent.as_slice(), dir))
}

fn check_dim(latent: &LatentVector, dirs: &DirectionSet) -> Result<()> {
    if latent.dim() != dirs.latent_dim() {
        return Err(Error::dim(
            "latent vs directions",
            dirs.latent_dim(),
            latent.dim(),
        ));
    }
    Ok(())
}

fn check_target(target: &FeatureVector, dirs: &DirectionSet) -> Result<()> {
    target.check_len(dirs.len())?;
    for i in target.masked_indices() {
        if !dirs.is_valid(i) {
            return Err(Error::MissingDirection(dirs.feature_ids()[i].clone()));
        }
    }
    Ok(())
}

/// Projects `latent` on every direction.
///
/// The mask is true for every valid row; invalid (unfitted) rows yield 0 and
/// an unset mask bit.
pub fn project_all(latent: &LatentVector, dirs: &DirectionSet) -> Result<FeatureVector> {
    check_dim(latent, dirs)?;
    let l = latent.as_slice();
    let values = dirs
        .rows()
        .enumerate()
        .map(|(i, row)| if dirs.is_valid(i) { dot(l, row) } else { 0.0 })
        .collect();
    Ok(FeatureVector {
        values,
        mask: dirs.valid_mask().to_vec(),
    })
}

/// Where the initial latent comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum SeedSpec {
    /// i.i.d. standard normal entries from a generator seeded with `rng_seed`.
    OracleGaussian { rng_seed: u64 },
    /// A latent file, typically a mapped `w+` exported by an external generator.
    FromFile { path: PathBuf },
}

/// Draws (or loads) the initial latent of the requested shape.
pub fn sample_seed(spec: &SeedSpec, shape: LatentShape) -> Result<LatentVector> {
    match spec {
        SeedSpec::OracleGaussian { rng_seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*rng_seed);
            let data = (0..shape.dim())
                .map(|_| StandardNormal.sample(&mut rng))
                .collect();
            LatentVector::new(shape, data)
        }
        SeedSpec::FromFile { path } => {
            let l = LatentVector::load(path)?;
            if l.dim() != shape.dim() {
                return Err(Error::dim(
                    format!("seed file {}", path.display()),
                    shape.dim(),
                    l.dim(),
                ));
            }
            Ok(l)
        }
    }
}

/// One-step navigation `L + Δ·D` where `Δ_i = target_i - (L·D_i)` for masked
/// features and 0 otherwise.
pub fn navigate_vectorized(
    start: &LatentVector,
    target: &FeatureVector,
    dirs: &DirectionSet,
) -> Result<LatentVector> {
    check_dim(start, dirs)?;
    check_target(target, dirs)?;
    let current = project_all(start, dirs)?;
    let mut out = start.clone();
    let l = out.as_mut_slice();
    for i in target.masked_indices() {
        let delta = target.values[i] - current.values[i];
        if delta != 0.0 {
            for (x, r) in l.iter_mut().zip(dirs.row(i)) {
                *x += delta * r;
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SequentialParams {
    pub tol: f64,
    pub max_passes: usize,
}

impl Default for SequentialParams {
    fn default() -> Self {
        SequentialParams {
            tol: DEFAULT_TOL,
            max_passes: DEFAULT_MAX_PASSES,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequentialOutcome {
    pub latent: LatentVector,
    pub passes: usize,
    /// Largest `|L·D_f - target_f|` over masked features after the last pass.
    pub residual: f64,
}

impl SequentialOutcome {
    pub fn converged(&self, tol: f64) -> bool {
        self.residual <= tol
    }
}

/// Navigates one direction at a time in registry order, re-projecting
/// before each step, until the masked residual is within `params.tol` or
/// `params.max_passes` passes have run. Non-convergence is reported through
/// the residual, not as an error.
pub fn navigate_sequential(
    start: &LatentVector,
    target: &FeatureVector,
    dirs: &DirectionSet,
    params: SequentialParams,
) -> Result<SequentialOutcome> {
    if params.tol.is_nan() || params.tol <= 0.0 {
        return Err(Error::Validation(format!(
            "tol must be > 0, got {}",
            params.tol
        )));
    }
    if params.max_passes == 0 {
        return Err(Error::Validation("max_passes must be >= 1".into()));
    }
    check_dim(start, dirs)?;
    check_target(target, dirs)?;

    let masked: Vec<usize> = target.masked_indices().collect();
    let mut latent = start.clone();
    if masked.is_empty() {
        return Ok(SequentialOutcome {
            latent,
            passes: 1,
            residual: 0.0,
        });
    }

    let mut passes = 0;
    let mut residual = f64::INFINITY;
    while passes < params.max_passes {
        passes += 1;
        let l = latent.as_mut_slice();
        for &f in &masked {
            let row = dirs.row(f);
            let step = target.values[f] - dot(l, row);
            for (x, r) in l.iter_mut().zip(row) {
                *x += step * r;
            }
        }
        residual = masked
            .iter()
            .map(|&f| (dot(latent.as_slice(), dirs.row(f)) - target.values[f]).abs())
            .fold(0.0, f64::max);
        if residual <= params.tol {
            break;
        }
    }
    Ok(SequentialOutcome {
        latent,
        passes,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn ids(k: usize) -> Vec<String> {
        (0..k).map(|i| format!("f{i}")).collect()
    }

    fn identity(d: usize) -> DirectionSet {
        let rows = (0..d)
            .map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        DirectionSet::new(ids(d), rows).unwrap()
    }

    fn lat(v: &[f64]) -> LatentVector {
        LatentVector::from_vec(v.to_vec()).unwrap()
    }

    #[test]
    fn project_feature_examples() {
        assert_eq!(
            project_feature(&lat(&[3.0, 4.0]), &[1.0, 0.0]).unwrap(),
            3.0
        );
        let s = 0.5f64.sqrt();
        assert_eq!(project_feature(&lat(&[0.0, 0.0]), &[s, s]).unwrap(), 0.0);
        assert_abs_diff_eq!(
            project_feature(&lat(&[1.0, 1.0]), &[s, s]).unwrap(),
            std::f64::consts::SQRT_2,
            epsilon = 1e-15
        );
    }

    #[test]
    fn project_feature_errors() {
        assert!(matches!(
            project_feature(&lat(&[1.0, 2.0]), &[1.0]),
            Err(Error::Dimension { .. })
        ));
        assert!(matches!(
            project_feature(&lat(&[1.0, 2.0]), &[1.0, 1.0]),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn project_all_examples() {
        let fv = project_all(&lat(&[0.2, -0.5]), &identity(2)).unwrap();
        assert_eq!(fv.values, vec![0.2, -0.5]);
        assert_eq!(fv.mask, vec![true, true]);

        let d = identity(4);
        let l = lat(&d.row(0).iter().map(|x| 2.0 * x).collect::<Vec<_>>());
        assert_eq!(
            project_all(&l, &d).unwrap().values,
            vec![2.0, 0.0, 0.0, 0.0]
        );

        assert!(project_all(&lat(&[1.0]), &d).is_err());
    }

    #[test]
    fn project_all_skips_invalid_rows() {
        let d = DirectionSet::new(ids(2), vec![vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let fv = project_all(&lat(&[3.0, 4.0]), &d).unwrap();
        assert_eq!(fv.values, vec![3.0, 0.0]);
        assert_eq!(fv.mask, vec![true, false]);
    }

    #[test]
    fn seeds_are_deterministic() {
        let spec = SeedSpec::OracleGaussian { rng_seed: 7 };
        let a = sample_seed(&spec, LatentShape::flat(32)).unwrap();
        let b = sample_seed(&spec, LatentShape::flat(32)).unwrap();
        assert_eq!(a, b);
        let c = sample_seed(
            &SeedSpec::OracleGaussian { rng_seed: 8 },
            LatentShape::flat(32),
        )
        .unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn gaussian_seed_mean_is_near_zero() {
        let l = sample_seed(
            &SeedSpec::OracleGaussian { rng_seed: 0 },
            LatentShape::W_PLUS,
        )
        .unwrap();
        let d = l.dim() as f64;
        let mean = l.as_slice().iter().sum::<f64>() / d;
        assert!(mean.abs() <= 4.0 / d.sqrt(), "mean {mean}");
        let var = l.as_slice().iter().map(|x| (x - mean).powi(2)).sum::<f64>() / d;
        assert!((var - 1.0).abs() < 0.1, "var {var}");
    }

    #[test]
    fn seed_from_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("seed.json");
        let l = sample_seed(
            &SeedSpec::OracleGaussian { rng_seed: 3 },
            LatentShape::W_PLUS,
        )
        .unwrap();
        l.save(&path).unwrap();
        let spec = SeedSpec::FromFile { path: path.clone() };
        assert_eq!(sample_seed(&spec, LatentShape::W_PLUS).unwrap(), l);
        assert!(matches!(
            sample_seed(&spec, LatentShape::flat(64)),
            Err(Error::Dimension { .. })
        ));
        let missing = SeedSpec::FromFile {
            path: dir.path().join("nope.json"),
        };
        assert!(matches!(
            sample_seed(&missing, LatentShape::W_PLUS),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn vectorized_examples() {
        let d = identity(2);
        let start = lat(&[0.2, -0.5]);
        assert_eq!(
            navigate_vectorized(&start, &FeatureVector::unmasked(2), &d).unwrap(),
            start
        );

        let target = FeatureVector::new(vec![1.0, 99.0], vec![true, false]).unwrap();
        let out = navigate_vectorized(&start, &target, &d).unwrap();
        assert_eq!(out.as_slice(), &[1.0, -0.5]);

        let same = project_all(&start, &d).unwrap();
        let out = navigate_vectorized(&start, &same, &d).unwrap();
        for (a, b) in out.as_slice().iter().zip(start.as_slice()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn masked_invalid_direction_is_an_error() {
        let d = DirectionSet::new(ids(2), vec![vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let target = FeatureVector::new(vec![0.0, 1.0], vec![false, true]).unwrap();
        let start = lat(&[0.0, 0.0]);
        assert!(matches!(
            navigate_vectorized(&start, &target, &d),
            Err(Error::MissingDirection(id)) if id == "f1"
        ));
        assert!(navigate_sequential(&start, &target, &d, SequentialParams::default()).is_err());
    }

    #[test]
    fn sequential_orthonormal_single_pass() {
        let d = identity(3);
        let start = lat(&[0.3, 0.1, -2.0]);
        let target = FeatureVector::new(vec![1.0, 0.0, 0.5], vec![true, false, true]).unwrap();
        let out = navigate_sequential(&start, &target, &d, SequentialParams::default()).unwrap();
        assert_eq!(out.passes, 1);
        assert!(out.residual <= 1e-12);
        let vec = navigate_vectorized(&start, &target, &d).unwrap();
        for (a, b) in out.latent.as_slice().iter().zip(vec.as_slice()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn sequential_empty_mask() {
        let d = identity(2);
        let start = lat(&[0.2, -0.5]);
        let out = navigate_sequential(
            &start,
            &FeatureVector::unmasked(2),
            &d,
            SequentialParams::default(),
        )
        .unwrap();
        assert_eq!(out.latent, start);
        assert_eq!(out.passes, 1);
        assert_eq!(out.residual, 0.0);
    }

    #[test]
    fn sequential_sixty_degrees_matches_gram_solution() {
        // Rows at 60 degrees: G = [[1, 1/2], [1/2, 1]], G c = (1, 1) gives c = (2/3, 2/3).
        let h = 3f64.sqrt() / 2.0;
        let d = DirectionSet::new(ids(2), vec![vec![1.0, 0.0], vec![0.5, h]]).unwrap();
        let start = lat(&[0.0, 0.0]);
        let target = FeatureVector::full(vec![1.0, 1.0]);
        let params = SequentialParams {
            tol: 1e-6,
            max_passes: 50,
        };
        let out = navigate_sequential(&start, &target, &d, params).unwrap();
        assert!(out.residual <= 1e-6);
        assert!(out.passes <= 50);
        let c = 2.0 / 3.0;
        let exact = [c * 1.0 + c * 0.5, c * h];
        for (a, b) in out.latent.as_slice().iter().zip(exact) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-6);
        }
    }

    #[test]
    fn sequential_reports_non_convergence() {
        let h = 3f64.sqrt() / 2.0;
        let d = DirectionSet::new(ids(2), vec![vec![1.0, 0.0], vec![0.5, h]]).unwrap();
        let target = FeatureVector::full(vec![1.0, 1.0]);
        let params = SequentialParams {
            tol: 1e-12,
            max_passes: 2,
        };
        let out = navigate_sequential(&lat(&[0.0, 0.0]), &target, &d, params).unwrap();
        assert_eq!(out.passes, 2);
        assert!(out.residual > 1e-12);
        assert!(!out.converged(1e-12));
    }

    #[test]
    fn sequential_rejects_bad_params() {
        let d = identity(2);
        let t = FeatureVector::unmasked(2);
        let l = lat(&[0.0, 0.0]);
        let bad_tol = SequentialParams {
            tol: 0.0,
            max_passes: 3,
        };
        assert!(navigate_sequential(&l, &t, &d, bad_tol).is_err());
        let bad_passes = SequentialParams {
            tol: 1e-3,
            max_passes: 0,
        };
        assert!(navigate_sequential(&l, &t, &d, bad_passes).is_err());
    }
}
