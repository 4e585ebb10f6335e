// SPDX-License-Identifier: MIT OR Apache-2.0

//! End-to-end conditioning: description text to target latent.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::latent::{DirectionSet, LatentShape, LatentVector};
use crate::nav::{
    navigate_sequential, navigate_vectorized, project_all, sample_seed, SeedSpec, SequentialParams,
};
use crate::registry::{FeatureRegistry, FeatureVector};
use crate::text::{Lexicon, ParseTrace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NavMode {
    Vectorized,
    #[default]
    Sequential,
}

impl fmt::Display for NavMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NavMode::Vectorized => f.write_str("vectorized"),
            NavMode::Sequential => f.write_str("sequential"),
        }
    }
}

impl FromStr for NavMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vectorized" => Ok(NavMode::Vectorized),
            "sequential" => Ok(NavMode::Sequential),
            other => Err(Error::Validation(format!(
                "unknown navigation mode `{other}` (expected vectorized or sequential)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerateRequest {
    pub text: String,
    pub seed: SeedSpec,
    /// Shape for Gaussian seeds; defaults to a single layer of the directions' dimension.
    pub shape: Option<LatentShape>,
    pub mode: NavMode,
    pub params: SequentialParams,
}

/// Everything needed to reproduce a generated latent bit for bit, given the
/// same directions file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub text: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub rng_seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub seed_file: Option<PathBuf>,
    pub shape: LatentShape,
    pub mode: NavMode,
    pub tol: f64,
    pub max_passes: usize,
    /// Parsed and clamped target, in registry order.
    pub target: FeatureVector,
    /// Mentioned features dropped because their direction was not fitted.
    pub dropped: Vec<String>,
    /// Seed projections on every direction.
    pub v_rand: Vec<f64>,
    pub passes: usize,
    pub residual: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub directions_sha256: Option<String>,
}

impl Provenance {
    fn seed_spec(&self) -> Result<SeedSpec> {
        match (&self.seed_file, self.rng_seed) {
            (Some(path), _) => Ok(SeedSpec::FromFile { path: path.clone() }),
            (None, Some(rng_seed)) => Ok(SeedSpec::OracleGaussian { rng_seed }),
            (None, None) => Err(Error::Validation("provenance names no seed".into())),
        }
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("provenance serializes")
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::json("provenance", &e))
    }
}

#[derive(Debug, Clone)]
pub struct GenerateOutcome {
    pub latent: LatentVector,
    pub provenance: Provenance,
    pub trace: ParseTrace,
}

impl GenerateOutcome {
    /// Whether any mentioned feature was actually navigated.
    pub fn navigated(&self) -> bool {
        self.provenance.target.any_masked()
    }
}

fn navigate(
    seed: &LatentVector,
    target: &FeatureVector,
    dirs: &DirectionSet,
    mode: NavMode,
    params: SequentialParams,
) -> Result<(LatentVector, usize, f64)> {
    match mode {
        NavMode::Sequential => {
            let out = navigate_sequential(seed, target, dirs, params)?;
            Ok((out.latent, out.passes, out.residual))
        }
        NavMode::Vectorized => {
            let latent = navigate_vectorized(seed, target, dirs)?;
            let reached = project_all(&latent, dirs)?;
            let residual = target
                .masked_indices()
                .map(|i| (reached.values[i] - target.values[i]).abs())
                .fold(0.0, f64::max);
            Ok((latent, 1, residual))
        }
    }
}

/// Parses `req.text`, clamps the targets, draws the seed and navigates it.
pub fn generate(
    lexicon: &Lexicon,
    reg: &FeatureRegistry,
    dirs: &DirectionSet,
    req: &GenerateRequest,
) -> Result<GenerateOutcome> {
    dirs.check_registry(reg)?;
    let (parsed, trace) = lexicon.parse(&req.text);
    let mut target = reg.clamp(&parsed)?;
    let mut dropped = Vec::new();
    for i in 0..target.len() {
        if target.mask[i] && !dirs.is_valid(i) {
            target.mask[i] = false;
            dropped.push(dirs.feature_ids()[i].clone());
        }
    }

    let (seed, rng_seed, seed_file) = match &req.seed {
        SeedSpec::OracleGaussian { rng_seed } => {
            let shape = req.shape.unwrap_or(LatentShape::flat(dirs.latent_dim()));
            (sample_seed(&req.seed, shape)?, Some(*rng_seed), None)
        }
        SeedSpec::FromFile { path } => {
            let l = LatentVector::load(path)?;
            if l.dim() != dirs.latent_dim() {
                return Err(Error::dim(
                    format!("seed file {}", path.display()),
                    dirs.latent_dim(),
                    l.dim(),
                ));
            }
            (l, None, Some(path.clone()))
        }
    };
    let v_rand = project_all(&seed, dirs)?.values;
    let (latent, passes, residual) = navigate(&seed, &target, dirs, req.mode, req.params)?;

    let provenance = Provenance {
        text: req.text.clone(),
        rng_seed,
        seed_file,
        shape: seed.shape(),
        mode: req.mode,
        tol: req.params.tol,
        max_passes: req.params.max_passes,
        target,
        dropped,
        v_rand,
        passes,
        residual,
        directions_sha256: None,
    };
    Ok(GenerateOutcome {
        latent,
        provenance,
        trace,
    })
}

/// Recomputes the latent recorded by `prov`.
pub fn replay(prov: &Provenance, dirs: &DirectionSet) -> Result<LatentVector> {
    let seed = sample_seed(&prov.seed_spec()?, prov.shape)?;
    let params = SequentialParams {
        tol: prov.tol,
        max_passes: prov.max_passes,
    };
    navigate(&seed, &prov.target, dirs, prov.mode, params).map(|(l, _, _)| l)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::make_world;

    fn setup() -> (FeatureRegistry, Lexicon, DirectionSet) {
        let reg = FeatureRegistry::default();
        let lex = Lexicon::default_for(&reg).unwrap();
        let world = make_world(&reg, 64, 90.0, 0.0, 1).unwrap();
        (reg, lex, world.planted)
    }

    fn request(text: &str) -> GenerateRequest {
        GenerateRequest {
            text: text.into(),
            seed: SeedSpec::OracleGaussian { rng_seed: 3 },
            shape: None,
            mode: NavMode::Sequential,
            params: SequentialParams::default(),
        }
    }

    #[test]
    fn generate_hits_targets_and_replays() {
        let (reg, lex, dirs) = setup();
        let out = generate(
            &lex,
            &reg,
            &dirs,
            &request("a young woman with blonde long hair"),
        )
        .unwrap();
        assert!(out.navigated());
        let reached = project_all(&out.latent, &dirs).unwrap();
        for i in out.provenance.target.masked_indices() {
            assert!((reached.values[i] - out.provenance.target.values[i]).abs() <= 1e-3);
        }
        assert_eq!(out.provenance.target.masked_indices().count(), 4);
        let prov = Provenance::from_json_str(&out.provenance.to_json_string()).unwrap();
        assert_eq!(prov, out.provenance);
        assert_eq!(replay(&prov, &dirs).unwrap(), out.latent);
    }

    #[test]
    fn empty_text_returns_seed() {
        let (reg, lex, dirs) = setup();
        let out = generate(&lex, &reg, &dirs, &request("")).unwrap();
        assert!(!out.navigated());
        let seed = sample_seed(
            &SeedSpec::OracleGaussian { rng_seed: 3 },
            LatentShape::flat(64),
        )
        .unwrap();
        assert_eq!(out.latent, seed);
    }

    #[test]
    fn unfitted_features_are_dropped() {
        let (reg, lex, dirs) = setup();
        let mut rows: Vec<Vec<f64>> = dirs.rows().map(<[f64]>::to_vec).collect();
        let beard = reg.index_of("beard").unwrap();
        rows[beard] = vec![0.0; 64];
        let partial = DirectionSet::new(dirs.feature_ids().to_vec(), rows).unwrap();
        let out = generate(&lex, &reg, &partial, &request("a man with heavy beard")).unwrap();
        assert_eq!(out.provenance.dropped, vec!["beard".to_string()]);
        assert!(out.navigated());
    }

    #[test]
    fn vectorized_mode_and_mode_parsing() {
        let (reg, lex, dirs) = setup();
        let mut req = request("an old man with glasses");
        req.mode = NavMode::Vectorized;
        let out = generate(&lex, &reg, &dirs, &req).unwrap();
        assert!(out.provenance.residual < 1e-9);
        assert_eq!(replay(&out.provenance, &dirs).unwrap(), out.latent);
        assert_eq!(
            "vectorized".parse::<NavMode>().unwrap(),
            NavMode::Vectorized
        );
        assert!("diagonal".parse::<NavMode>().is_err());
    }
}
