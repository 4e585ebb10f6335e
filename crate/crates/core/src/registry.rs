// SPDX-License-Identifier: MIT OR Apache-2.0

//! Canonical facial-feature registry.
//!
//! Every [`FeatureVector`] and [`crate::DirectionSet`] is indexed by a
//! registry's feature order. The default registry lists 34 features in nine
//! groups; it is loaded from an embedded JSON file so alternative registries
//! can be swapped in without code changes.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const DEFAULT_REGISTRY_JSON: &str = include_str!("../data/default_registry.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Discrete,
    Continuous,
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureKind::Discrete => f.write_str("discrete"),
            FeatureKind::Continuous => f.write_str("continuous"),
        }
    }
}

/// Closed interval `[lo, hi]` used to clamp target values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct ValueRange {
    pub lo: f64,
    pub hi: f64,
}

impl ValueRange {
    pub fn new(lo: f64, hi: f64) -> Self {
        ValueRange { lo, hi }
    }

    pub fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.lo, self.hi)
    }

    pub fn contains(&self, v: f64) -> bool {
        (self.lo..=self.hi).contains(&v)
    }
}

impl From<[f64; 2]> for ValueRange {
    fn from([lo, hi]: [f64; 2]) -> Self {
        ValueRange { lo, hi }
    }
}

impl From<ValueRange> for [f64; 2] {
    fn from(r: ValueRange) -> Self {
        [r.lo, r.hi]
    }
}

/// One facial attribute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureDef {
    pub id: String,
    #[serde(rename = "name")]
    pub display_name: String,
    pub group: String,
    pub kind: FeatureKind,
    #[serde(rename = "range")]
    pub value_range: ValueRange,
}

impl FeatureDef {
    fn validate(&self) -> Result<()> {
        let id_ok = !self.id.is_empty()
            && self
                .id
                .bytes()
                .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_');
        if !id_ok {
            return Err(Error::Validation(format!(
                "feature id `{}` must be non-empty lowercase ASCII with underscores",
                self.id
            )));
        }
        let r = self.value_range;
        if !(r.lo.is_finite() && r.hi.is_finite() && r.lo < r.hi) {
            return Err(Error::Validation(format!(
                "feature `{}`: range [{}, {}] must satisfy lo < hi",
                self.id, r.lo, r.hi
            )));
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RegistryFile {
    features: Vec<FeatureDef>,
}

/// Ordered, validated set of features. Immutable after construction.
#[derive(Debug, Clone)]
pub struct FeatureRegistry {
    features: Vec<FeatureDef>,
    index: HashMap<String, usize>,
}

impl PartialEq for FeatureRegistry {
    fn eq(&self, other: &Self) -> bool {
        self.features == other.features
    }
}

impl Default for FeatureRegistry {
    fn default() -> Self {
        FeatureRegistry::from_json_str(DEFAULT_REGISTRY_JSON)
            .expect("embedded default registry is valid")
    }
}

impl FeatureRegistry {
    pub fn new(features: Vec<FeatureDef>) -> Result<Self> {
        let mut index = HashMap::with_capacity(features.len());
        for (i, f) in features.iter().enumerate() {
            f.validate()?;
            if index.insert(f.id.clone(), i).is_some() {
                return Err(Error::DuplicateId(f.id.clone()));
            }
        }
        if features.is_empty() {
            return Err(Error::Validation("registry has no features".into()));
        }
        Ok(FeatureRegistry { features, index })
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let file: RegistryFile =
            serde_json::from_str(s).map_err(|e| Error::json("registry", &e))?;
        FeatureRegistry::new(file.features)
    }

    pub fn to_json_string(&self) -> String {
        let file = RegistryFile {
            features: self.features.clone(),
        };
        serde_json::to_string_pretty(&file).expect("registry serializes")
    }

    /// Number of features, K.
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn features(&self) -> &[FeatureDef] {
        &self.features
    }

    pub fn get(&self, i: usize) -> Option<&FeatureDef> {
        self.features.get(i)
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn by_id(&self, id: &str) -> Option<&FeatureDef> {
        self.index_of(id).map(|i| &self.features[i])
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.features.iter().map(|f| f.id.as_str())
    }

    pub fn kinds(&self) -> Vec<FeatureKind> {
        self.features.iter().map(|f| f.kind).collect()
    }

    /// Clamps every masked value into its feature's range.
    pub fn clamp(&self, v: &FeatureVector) -> Result<FeatureVector> {
        v.check_len(self.len())?;
        let values = v
            .values
            .iter()
            .zip(&v.mask)
            .zip(&self.features)
            .map(|((&x, &m), f)| if m { f.value_range.clamp(x) } else { x })
            .collect();
        Ok(FeatureVector {
            values,
            mask: v.mask.clone(),
        })
    }
}

/// Loads a registry from `path`, or the embedded default when `path` is `None`.
pub fn load_registry(path: Option<&Path>) -> Result<FeatureRegistry> {
    match path {
        None => Ok(FeatureRegistry::default()),
        Some(p) => {
            let s = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            FeatureRegistry::from_json_str(&s)
        }
    }
}

/// K feature values plus a mentioned-mask.
///
/// Values at unmasked positions carry no meaning and are ignored by navigation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub mask: Vec<bool>,
}

impl FeatureVector {
    /// All-zero, all-unmasked vector of length `k`.
    pub fn unmasked(k: usize) -> Self {
        FeatureVector {
            values: vec![0.0; k],
            mask: vec![false; k],
        }
    }

    /// Fully masked vector.
    pub fn full(values: Vec<f64>) -> Self {
        let mask = vec![true; values.len()];
        FeatureVector { values, mask }
    }

    pub fn new(values: Vec<f64>, mask: Vec<bool>) -> Result<Self> {
        if values.len() != mask.len() {
            return Err(Error::dim("feature vector mask", values.len(), mask.len()));
        }
        Ok(FeatureVector { values, mask })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn set(&mut self, i: usize, value: f64) {
        self.values[i] = value;
        self.mask[i] = true;
    }

    pub fn any_masked(&self) -> bool {
        self.mask.iter().any(|&m| m)
    }

    /// Indices of masked features, ascending.
    pub fn masked_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.mask
            .iter()
            .enumerate()
            .filter_map(|(i, &m)| m.then_some(i))
    }

    pub(crate) fn check_len(&self, k: usize) -> Result<()> {
        if self.values.len() != k || self.mask.len() != k {
            return Err(Error::dim(
                "feature vector length",
                k,
                self.values.len().max(self.mask.len()),
            ));
        }
        Ok(())
    }
}
