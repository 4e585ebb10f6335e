// SPDX-License-Identifier: MIT OR Apache-2.0

//! JSON Lines dataset files for direction fitting.
//!
//! Each line is `{"latent": [...] | {"ref": "path#index"}, "labels": {...}}`.
//! A `ref` names a latent file relative to the dataset's directory; with a
//! `#index` suffix the file holds many latents, either as a JSON array or as
//! JSON Lines, and the entry at `index` is used.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::LabeledSample;
use crate::latent::LatentVector;

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum LatentField {
    Inline(Vec<f64>),
    Ref {
        #[serde(rename = "ref")]
        reference: String,
    },
}

#[derive(Serialize, Deserialize)]
struct DatasetLine {
    latent: LatentField,
    labels: BTreeMap<String, f64>,
}

/// Resolves `ref` latents, caching each referenced file once.
struct RefResolver {
    base: PathBuf,
    cache: HashMap<PathBuf, Vec<LatentVector>>,
}

impl RefResolver {
    fn resolve(&mut self, reference: &str) -> Result<LatentVector> {
        let (file, index) = match reference.rsplit_once('#') {
            Some((f, i)) => {
                let idx = i.parse::<usize>().map_err(|_| Error::Format {
                    what: "dataset ref".into(),
                    location: reference.to_string(),
                    message: format!("`{i}` is not an index"),
                })?;
                (f, Some(idx))
            }
            None => (reference, None),
        };
        let path = self.base.join(file);
        if !self.cache.contains_key(&path) {
            let latents = load_latent_collection(&path, index.is_some())?;
            self.cache.insert(path.clone(), latents);
        }
        let latents = &self.cache[&path];
        let i = index.unwrap_or(0);
        latents.get(i).cloned().ok_or_else(|| Error::Format {
            what: "dataset ref".into(),
            location: reference.to_string(),
            message: format!("index {i} out of range ({} latents)", latents.len()),
        })
    }
}

fn load_latent_collection(path: &Path, indexed: bool) -> Result<Vec<LatentVector>> {
    let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    if !indexed {
        return Ok(vec![LatentVector::from_json_str(&s)?]);
    }
    let trimmed = s.trim_start();
    if trimmed.starts_with('[') {
        let values: Vec<serde_json::Value> = serde_json::from_str(trimmed)
            .map_err(|e| Error::json(path.display().to_string(), &e))?;
        values
            .into_iter()
            .map(|v| LatentVector::from_json_str(&v.to_string()))
            .collect()
    } else {
        s.lines()
            .filter(|l| !l.trim().is_empty())
            .map(LatentVector::from_json_str)
            .collect()
    }
}

/// Reads a dataset file; `ref` paths resolve against the file's directory.
pub fn read_dataset(path: &Path) -> Result<Vec<LabeledSample>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_dataset(BufReader::new(file), &base)
}

pub fn parse_dataset(reader: impl BufRead, base: &Path) -> Result<Vec<LabeledSample>> {
    let mut resolver = RefResolver {
        base: base.to_path_buf(),
        cache: HashMap::new(),
    };
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(base, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: DatasetLine = serde_json::from_str(&line).map_err(|e| Error::Format {
            what: "dataset".into(),
            location: format!("line {} column {}", lineno + 1, e.column()),
            message: e.to_string(),
        })?;
        let latent = match parsed.latent {
            LatentField::Inline(v) => LatentVector::from_vec(v)?,
            LatentField::Ref { reference } => resolver.resolve(&reference)?,
        };
        out.push(LabeledSample {
            latent,
            labels: parsed.labels,
        });
    }
    Ok(out)
}

/// Writes samples with inline latents.
pub fn write_dataset(path: &Path, samples: &[LabeledSample]) -> Result<()> {
    let mut out = String::new();
    for s in samples {
        let line = DatasetLine {
            latent: LatentField::Inline(s.latent.as_slice().to_vec()),
            labels: s.labels.clone(),
        };
        out.push_str(&serde_json::to_string(&line).expect("dataset line serializes"));
        out.push('\n');
    }
    crate::fsutil::write_atomic(path, out)
}
