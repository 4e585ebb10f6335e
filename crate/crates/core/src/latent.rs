// SPDX-License-Identifier: MIT OR Apache-2.0

//! Latent vectors, direction sets and their JSON file formats.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::registry::FeatureRegistry;

/// Tolerance on the norm of a direction row.
pub const UNIT_NORM_TOL: f64 = 1e-9;
/// Rows read from files may carry single-precision rounding; within this
/// tolerance they are renormalized on load.
pub const LOAD_NORM_TOL: f64 = 1e-6;

/// `(layers, channels)` layout metadata; `layers * channels` is the flat dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct LatentShape {
    pub layers: usize,
    pub channels: usize,
}

impl LatentShape {
    /// StyleGAN2 `w+` at 1024x1024: 18 layers of 512 channels.
    pub const W_PLUS: LatentShape = LatentShape {
        layers: 18,
        channels: 512,
    };

    pub fn new(layers: usize, channels: usize) -> Self {
        LatentShape { layers, channels }
    }

    /// Single-layer shape of dimension `d`.
    pub fn flat(d: usize) -> Self {
        LatentShape {
            layers: 1,
            channels: d,
        }
    }

    pub fn dim(&self) -> usize {
        self.layers * self.channels
    }
}

impl From<[usize; 2]> for LatentShape {
    fn from([layers, channels]: [usize; 2]) -> Self {
        LatentShape { layers, channels }
    }
}

impl From<LatentShape> for [usize; 2] {
    fn from(s: LatentShape) -> Self {
        [s.layers, s.channels]
    }
}

impl fmt::Display for LatentShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.layers, self.channels)
    }
}

impl std::str::FromStr for LatentShape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Validation(format!("shape `{s}` must look like LAYERSxCHANNELS"));
        let (l, c) = s.split_once(['x', 'X']).ok_or_else(bad)?;
        let layers = l.trim().parse().map_err(|_| bad())?;
        let channels = c.trim().parse().map_err(|_| bad())?;
        Ok(LatentShape { layers, channels })
    }
}

/// A point in (flattened) latent space.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatentVector {
    shape: LatentShape,
    data: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LatentFile {
    shape: LatentShape,
    data: Vec<f64>,
}

impl LatentVector {
    pub fn new(shape: LatentShape, data: Vec<f64>) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::Validation("latent vector must be non-empty".into()));
        }
        if shape.dim() != data.len() {
            return Err(Error::dim(
                format!("latent shape {shape} vs data length"),
                shape.dim(),
                data.len(),
            ));
        }
        if let Some(i) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::Validation(format!("latent entry {i} is not finite")));
        }
        Ok(LatentVector { shape, data })
    }

    /// Single-layer latent.
    pub fn from_vec(data: Vec<f64>) -> Result<Self> {
        LatentVector::new(LatentShape::flat(data.len()), data)
    }

    pub fn zeros(shape: LatentShape) -> Self {
        LatentVector {
            shape,
            data: vec![0.0; shape.dim()],
        }
    }

    pub fn shape(&self) -> LatentShape {
        self.shape
    }

    pub fn dim(&self) -> usize {
        self.data.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let f: LatentFile = serde_json::from_str(s).map_err(|e| Error::json("latent file", &e))?;
        LatentVector::new(f.shape, f.data)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(self).expect("latent serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        LatentVector::from_json_str(&s)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::fsutil::write_atomic(path, self.to_json_string())
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// K unit feature directions in a d-dimensional latent space, one row per
/// feature in registry order.
///
/// A row may be *invalid* (all zeros) when its feature could not be fitted.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionSet {
    feature_ids: Vec<String>,
    latent_dim: usize,
    matrix: Vec<f64>,
    valid: Vec<bool>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DirectionsFile {
    latent_dim: usize,
    feature_ids: Vec<String>,
    directions: Vec<Vec<f64>>,
}

impl DirectionSet {
    /// Builds a set from rows that are either unit-norm (within
    /// [`UNIT_NORM_TOL`]) or exactly zero (marked invalid).
    pub fn new(feature_ids: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::build(feature_ids, rows, UNIT_NORM_TOL, false)
    }

    /// Like [`DirectionSet::new`] but normalizes every non-zero row first.
    pub fn normalized(feature_ids: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::build(feature_ids, rows, f64::INFINITY, true)
    }

    fn build(
        feature_ids: Vec<String>,
        rows: Vec<Vec<f64>>,
        tol: f64,
        renormalize: bool,
    ) -> Result<Self> {
        if feature_ids.len() != rows.len() {
            return Err(Error::dim(
                "direction ids vs rows",
                feature_ids.len(),
                rows.len(),
            ));
        }
        let Some(d) = rows.first().map(Vec::len) else {
            return Err(Error::Validation("direction set has no rows".into()));
        };
        if d == 0 {
            return Err(Error::Validation("direction rows must be non-empty".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for id in &feature_ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::DuplicateId(id.clone()));
            }
        }
        let mut matrix = Vec::with_capacity(rows.len() * d);
        let mut valid = Vec::with_capacity(rows.len());
        for (id, row) in feature_ids.iter().zip(rows) {
            if row.len() != d {
                return Err(Error::dim(format!("direction row `{id}`"), d, row.len()));
            }
            if row.iter().any(|x| !x.is_finite()) {
                return Err(Error::Validation(format!(
                    "direction `{id}` has non-finite entries"
                )));
            }
            let n = norm(&row);
            if n == 0.0 {
                valid.push(false);
                matrix.extend(row);
            } else if (n - 1.0).abs() <= tol {
                valid.push(true);
                if renormalize {
                    matrix.extend(row.iter().map(|x| x / n));
                } else {
                    matrix.extend(row);
                }
            } else {
                return Err(Error::Validation(format!(
                    "direction `{id}` has norm {n}, expected 1"
                )));
            }
        }
        Ok(DirectionSet {
            feature_ids,
            latent_dim: d,
            matrix,
            valid,
        })
    }

    /// Number of directions, K.
    pub fn len(&self) -> usize {
        self.feature_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.feature_ids.is_empty()
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn feature_ids(&self) -> &[String] {
        &self.feature_ids
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.matrix[i * self.latent_dim..(i + 1) * self.latent_dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.matrix.chunks_exact(self.latent_dim)
    }

    pub fn is_valid(&self, i: usize) -> bool {
        self.valid[i]
    }

    pub fn valid_mask(&self) -> &[bool] {
        &self.valid
    }

    pub fn all_valid(&self) -> bool {
        self.valid.iter().all(|&v| v)
    }

    /// The subset of valid rows, in order.
    pub fn valid_subset(&self) -> DirectionSet {
        let keep: Vec<usize> = (0..self.len()).filter(|&i| self.valid[i]).collect();
        DirectionSet {
            feature_ids: keep.iter().map(|&i| self.feature_ids[i].clone()).collect(),
            latent_dim: self.latent_dim,
            matrix: keep
                .iter()
                .flat_map(|&i| self.row(i).iter().copied())
                .collect(),
            valid: vec![true; keep.len()],
        }
    }

    /// Checks that the ids match `reg`'s order exactly.
    pub fn check_registry(&self, reg: &FeatureRegistry) -> Result<()> {
        if self.len() != reg.len() {
            return Err(Error::dim(
                "directions vs registry feature count",
                reg.len(),
                self.len(),
            ));
        }
        for (i, (a, b)) in self.feature_ids.iter().zip(reg.ids()).enumerate() {
            if a != b {
                return Err(Error::Validation(format!(
                    "direction {i} is `{a}` but registry feature {i} is `{b}`"
                )));
            }
        }
        Ok(())
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let f: DirectionsFile =
            serde_json::from_str(s).map_err(|e| Error::json("directions file", &e))?;
        if f.directions.iter().any(|r| r.len() != f.latent_dim) {
            let bad = f
                .directions
                .iter()
                .find(|r| r.len() != f.latent_dim)
                .unwrap();
            return Err(Error::dim(
                "directions row vs latent_dim",
                f.latent_dim,
                bad.len(),
            ));
        }
        Self::build(f.feature_ids, f.directions, LOAD_NORM_TOL, true)
    }

    pub fn to_json_string(&self) -> String {
        let f = DirectionsFile {
            latent_dim: self.latent_dim,
            feature_ids: self.feature_ids.clone(),
            directions: self.rows().map(<[f64]>::to_vec).collect(),
        };
        serde_json::to_string(&f).expect("directions serialize")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        DirectionSet::from_json_str(&s)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::fsutil::write_atomic(path, self.to_json_string())
    }
}
