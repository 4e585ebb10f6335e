// SPDX-License-Identifier: MIT OR Apache-2.0

//! `facesteer`: fit feature directions, inspect them, and steer latents
//! from text.
//!
//! Exit codes: 0 success, 1 error, 2 degraded success (some features
//! skipped, nothing recognized in the text, or an oracle threshold missed).

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use facesteer_core::dataset::{read_dataset, write_dataset};
use facesteer_core::fsutil::write_atomic;
use facesteer_core::oracle::{synthetic_registry, with_uniform_kind};
use facesteer_core::pipeline::{generate, GenerateRequest, NavMode};
use facesteer_core::text::Templates;
use facesteer_core::{
    angle_matrix, fit_all, load_registry, oracle_eval, sample_seed, DirectionSet, FeatureKind,
    FeatureRegistry, FitConfig, LatentShape, Lexicon, OracleEvalConfig, SeedSpec, SequentialParams,
};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Parser)]
#[command(
    name = "facesteer",
    version,
    about = "Steer generator latents with face descriptions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit one latent direction per feature from a labeled dataset.
    Fit(FitCmd),
    /// Pairwise angles between fitted directions, as CSV.
    Angles(AnglesCmd),
    /// Show the target values a description resolves to.
    Parse(ParseCmd),
    /// Steer a seed latent toward a description.
    Generate(GenerateCmd),
    /// Sample (description, target) pairs from the lexicon.
    Corpus(CorpusCmd),
    /// Fit directions on a planted synthetic world and measure recovery.
    OracleEval(OracleEvalCmd),
    /// Write a Gaussian seed latent.
    SeedExport(SeedExportCmd),
}

#[derive(Args)]
struct RegistryArgs {
    /// Feature registry JSON; the built-in table when omitted.
    #[arg(long)]
    registry: Option<PathBuf>,
}

#[derive(Args)]
struct LexiconArgs {
    #[command(flatten)]
    registry: RegistryArgs,
    /// Lexicon JSON; the built-in lexicon when omitted.
    #[arg(long)]
    lexicon: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long, default_value_t = FitConfig::default().learning_rate)]
    learning_rate: f64,
    #[arg(long, default_value_t = FitConfig::default().epochs)]
    epochs: usize,
    /// L2 penalty for logistic fits.
    #[arg(long, default_value_t = FitConfig::default().l2)]
    l2: f64,
    /// Ridge penalty for continuous fits.
    #[arg(long, default_value_t = FitConfig::default().ridge_l2)]
    ridge_l2: f64,
    #[arg(long, default_value_t = FitConfig::default().min_samples_per_feature)]
    min_samples: usize,
}

impl FitArgs {
    fn config(&self, rng_seed: u64) -> FitConfig {
        FitConfig {
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            l2: self.l2,
            ridge_l2: self.ridge_l2,
            rng_seed,
            min_samples_per_feature: self.min_samples,
            ..FitConfig::default()
        }
    }
}

#[derive(Args)]
struct FitCmd {
    /// Dataset JSONL.
    #[arg(long)]
    dataset: PathBuf,
    #[command(flatten)]
    registry: RegistryArgs,
    #[command(flatten)]
    fit: FitArgs,
    #[arg(long, default_value_t = 0)]
    rng_seed: u64,
    /// Directions file to write.
    #[arg(long)]
    out: PathBuf,
    /// Fit report JSON; printed to stdout when omitted.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct AnglesCmd {
    #[arg(long)]
    directions: PathBuf,
    /// CSV output; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Flag pairs closer than this many degrees as entangled.
    #[arg(long, default_value_t = 60.0)]
    warn_below: f64,
}

#[derive(Args)]
struct ParseCmd {
    #[arg(long)]
    text: String,
    #[command(flatten)]
    lexicon: LexiconArgs,
}

#[derive(Args)]
struct GenerateCmd {
    #[arg(long)]
    text: String,
    #[arg(long)]
    directions: PathBuf,
    #[command(flatten)]
    lexicon: LexiconArgs,
    /// Seed latent file; a Gaussian seed from --rng-seed when omitted.
    #[arg(long)]
    seed_file: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    rng_seed: u64,
    /// Layout of a Gaussian seed, e.g. 18x512; flat when omitted.
    #[arg(long)]
    shape: Option<LatentShape>,
    #[arg(long, value_enum, default_value_t = ModeArg::Sequential)]
    mode: ModeArg,
    #[arg(long, default_value_t = facesteer_core::nav::DEFAULT_TOL)]
    tol: f64,
    #[arg(long, default_value_t = facesteer_core::nav::DEFAULT_MAX_PASSES)]
    max_passes: usize,
    /// Latent file to write.
    #[arg(long)]
    out: PathBuf,
    /// Provenance file; `<out stem>.provenance.json` when omitted.
    #[arg(long)]
    provenance: Option<PathBuf>,
    /// Print the command that renders the latent with the image bridge.
    #[arg(long)]
    render: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Vectorized,
    Sequential,
}

impl From<ModeArg> for NavMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Vectorized => NavMode::Vectorized,
            ModeArg::Sequential => NavMode::Sequential,
        }
    }
}

#[derive(Args)]
struct CorpusCmd {
    #[arg(long)]
    n: usize,
    #[command(flatten)]
    lexicon: LexiconArgs,
    #[arg(long, default_value_t = 0)]
    rng_seed: u64,
    /// JSONL output; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    /// Kinds as declared by the registry.
    Registry,
    Continuous,
    Discrete,
}

#[derive(Args)]
struct OracleEvalCmd {
    #[command(flatten)]
    registry: RegistryArgs,
    /// Use this many synthetic features instead of a registry.
    #[arg(long)]
    features: Option<usize>,
    /// Override every feature's kind.
    #[arg(long, value_enum, default_value_t = KindArg::Registry)]
    kind: KindArg,
    #[arg(long, default_value_t = 64)]
    d: usize,
    #[arg(long, default_value_t = 3000)]
    n: usize,
    /// Label noise standard deviation.
    #[arg(long, default_value_t = 0.1)]
    sigma: f64,
    /// Minimum planted angle in degrees.
    #[arg(long, default_value_t = 80.0)]
    entanglement: f64,
    /// Maximum allowed angular error in degrees.
    #[arg(long, default_value_t = 10.0)]
    threshold: f64,
    #[arg(long, default_value_t = 20)]
    nav_trials: usize,
    #[arg(long, default_value_t = 0.15)]
    nav_tolerance: f64,
    #[command(flatten)]
    fit: FitArgs,
    #[arg(long, default_value_t = 0)]
    rng_seed: u64,
    /// Report JSON; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the generated dataset.
    #[arg(long)]
    dataset_out: Option<PathBuf>,
    /// Also write the fitted directions.
    #[arg(long)]
    directions_out: Option<PathBuf>,
    /// Also write the planted ground-truth directions.
    #[arg(long)]
    planted_out: Option<PathBuf>,
}

#[derive(Args)]
struct SeedExportCmd {
    #[arg(long, default_value_t = 0)]
    rng_seed: u64,
    #[arg(long, default_value_t = LatentShape::W_PLUS)]
    shape: LatentShape,
    #[arg(long)]
    out: PathBuf,
}

enum Status {
    Ok,
    Degraded,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Fit(c) => cmd_fit(c),
        Command::Angles(c) => cmd_angles(c),
        Command::Parse(c) => cmd_parse(c),
        Command::Generate(c) => cmd_generate(c),
        Command::Corpus(c) => cmd_corpus(c),
        Command::OracleEval(c) => cmd_oracle_eval(c),
        Command::SeedExport(c) => cmd_seed_export(c),
    };
    match result {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::Degraded) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn load_lexicon(args: &LexiconArgs) -> Result<(FeatureRegistry, Lexicon)> {
    let reg = load_registry(args.registry.registry.as_deref())?;
    let lex = Lexicon::load(args.lexicon.as_deref(), &reg)?;
    Ok((reg, lex))
}

fn load_directions(path: &Path, reg: &FeatureRegistry) -> Result<(DirectionSet, String)> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let text =
        std::str::from_utf8(&bytes).with_context(|| format!("{} is not UTF-8", path.display()))?;
    let dirs = DirectionSet::from_json_str(text)?;
    dirs.check_registry(reg)?;
    Ok((dirs, hex::encode(Sha256::digest(&bytes))))
}

/// Writes to `path`, or to stdout when there is none.
fn emit(path: Option<&Path>, contents: &str) -> Result<()> {
    match path {
        Some(p) => write_atomic(p, contents)?,
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(contents.as_bytes())?;
            out.flush()?;
        }
    }
    Ok(())
}

fn with_newline(mut s: String) -> String {
    if !s.ends_with('\n') {
        s.push('\n');
    }
    s
}

fn cmd_fit(c: FitCmd) -> Result<Status> {
    let reg = load_registry(c.registry.registry.as_deref())?;
    let dataset = read_dataset(&c.dataset)?;
    let outcome = fit_all(&dataset, &reg, &c.fit.config(c.rng_seed))?;
    outcome.directions.save(&c.out)?;
    emit(c.report.as_deref(), &with_newline(outcome.report_json()))?;
    let skipped: Vec<_> = outcome.skipped().collect();
    for r in &skipped {
        eprintln!(
            "skipped {}: {}",
            r.feature,
            r.reason.as_deref().unwrap_or("not fitted")
        );
    }
    eprintln!(
        "fitted {} of {} features from {} samples",
        reg.len() - skipped.len(),
        reg.len(),
        dataset.len()
    );
    Ok(if skipped.is_empty() {
        Status::Ok
    } else {
        Status::Degraded
    })
}

fn cmd_angles(c: AnglesCmd) -> Result<Status> {
    let dirs = DirectionSet::load(&c.directions)?;
    let valid = dirs.valid_subset();
    let skipped = dirs.len() - valid.len();
    if valid.is_empty() {
        bail!("{} has no fitted directions", c.directions.display());
    }
    let m = angle_matrix(&valid)?;
    emit(c.out.as_deref(), &m.to_csv())?;
    if skipped > 0 {
        eprintln!("{skipped} unfitted directions left out");
    }
    match m.min_off_diagonal() {
        Some((a, i, j)) => {
            eprintln!(
                "min off-diagonal angle {a:.1} between {} and {}",
                m.feature_ids[i], m.feature_ids[j]
            );
            if a < c.warn_below {
                eprintln!(
                    "entangled: {} and {} are below {:.1} degrees",
                    m.feature_ids[i], m.feature_ids[j], c.warn_below
                );
            }
        }
        None => eprintln!("only one direction; no pairs to compare"),
    }
    Ok(if skipped > 0 {
        Status::Degraded
    } else {
        Status::Ok
    })
}

#[derive(Serialize)]
struct ParseOutput<'a> {
    text: &'a str,
    values: BTreeMap<&'a str, f64>,
    mask: Vec<&'a str>,
    trace: &'a facesteer_core::ParseTrace,
}

fn cmd_parse(c: ParseCmd) -> Result<Status> {
    let (reg, lex) = load_lexicon(&c.lexicon)?;
    let (parsed, trace) = lex.parse(&c.text);
    let v = reg.clamp(&parsed)?;
    let ids: Vec<&str> = reg.ids().collect();
    let mask: Vec<&str> = v.masked_indices().map(|i| ids[i]).collect();
    let out = ParseOutput {
        text: &c.text,
        values: v.masked_indices().map(|i| (ids[i], v.values[i])).collect(),
        mask,
        trace: &trace,
    };
    emit(None, &with_newline(serde_json::to_string_pretty(&out)?))?;
    if v.any_masked() {
        Ok(Status::Ok)
    } else {
        eprintln!("no recognizable features");
        Ok(Status::Degraded)
    }
}

fn default_provenance_path(out: &Path) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    out.with_file_name(format!("{stem}.provenance.json"))
}

fn cmd_generate(c: GenerateCmd) -> Result<Status> {
    let (reg, lex) = load_lexicon(&c.lexicon)?;
    let (dirs, sha) = load_directions(&c.directions, &reg)?;
    let seed = match c.seed_file {
        Some(path) => SeedSpec::FromFile { path },
        None => SeedSpec::OracleGaussian {
            rng_seed: c.rng_seed,
        },
    };
    let req = GenerateRequest {
        text: c.text,
        seed,
        shape: c.shape,
        mode: c.mode.into(),
        params: SequentialParams {
            tol: c.tol,
            max_passes: c.max_passes,
        },
    };
    let mut outcome = generate(&lex, &reg, &dirs, &req)?;
    outcome.provenance.directions_sha256 = Some(sha);

    let prov_path = c
        .provenance
        .unwrap_or_else(|| default_provenance_path(&c.out));
    outcome.latent.save(&c.out)?;
    write_atomic(
        &prov_path,
        with_newline(outcome.provenance.to_json_string()),
    )?;

    let prov = &outcome.provenance;
    for id in &prov.dropped {
        eprintln!("no fitted direction for {id}; ignored");
    }
    let unmatched: Vec<&str> = outcome.trace.unmatched_tokens().collect();
    if !unmatched.is_empty() {
        eprintln!("unmatched: {}", unmatched.join(" "));
    }
    if c.render {
        println!(
            "render with: stylegan-bridge render --latent {} --out {}",
            c.out.display(),
            c.out.with_extension("png").display()
        );
    }
    if !outcome.navigated() {
        eprintln!("no recognizable features; wrote the seed latent unchanged");
        return Ok(Status::Degraded);
    }
    eprintln!(
        "navigated {} features in {} passes, residual {:.3e}",
        prov.target.masked_indices().count(),
        prov.passes,
        prov.residual
    );
    if prov.mode == NavMode::Sequential && prov.residual > prov.tol {
        eprintln!("did not converge within {} passes", prov.max_passes);
        return Ok(Status::Degraded);
    }
    Ok(Status::Ok)
}

fn cmd_corpus(c: CorpusCmd) -> Result<Status> {
    let (_, lex) = load_lexicon(&c.lexicon)?;
    let corpus = lex.build_corpus(c.n, &Templates::default(), c.rng_seed)?;
    let mut out = String::new();
    for e in &corpus {
        out.push_str(&lex.corpus_line(e));
        out.push('\n');
    }
    emit(c.out.as_deref(), &out)?;
    Ok(Status::Ok)
}

fn cmd_oracle_eval(c: OracleEvalCmd) -> Result<Status> {
    let base = match c.features {
        Some(k) => synthetic_registry(
            &(0..k)
                .map(|i| {
                    if i % 2 == 0 {
                        FeatureKind::Discrete
                    } else {
                        FeatureKind::Continuous
                    }
                })
                .collect::<Vec<_>>(),
        ),
        None => load_registry(c.registry.registry.as_deref())?,
    };
    let reg = match c.kind {
        KindArg::Registry => base,
        KindArg::Continuous => with_uniform_kind(&base, FeatureKind::Continuous),
        KindArg::Discrete => with_uniform_kind(&base, FeatureKind::Discrete),
    };
    let cfg = OracleEvalConfig {
        d: c.d,
        n: c.n,
        noise_sigma: c.sigma,
        entanglement_deg: c.entanglement,
        rng_seed: c.rng_seed,
        threshold_deg: c.threshold,
        nav_trials: c.nav_trials,
        nav_tolerance: c.nav_tolerance,
        fit: c.fit.config(c.rng_seed),
    };
    let run = oracle_eval(&reg, &cfg)?;
    if let Some(p) = &c.dataset_out {
        write_dataset(p, &run.dataset)?;
    }
    if let Some(p) = &c.directions_out {
        run.fitted.save(p)?;
    }
    if let Some(p) = &c.planted_out {
        run.world.planted.save(p)?;
    }
    let report = &run.report;
    emit(
        c.out.as_deref(),
        &with_newline(serde_json::to_string_pretty(report)?),
    )?;
    eprintln!(
        "max angular error {:.3} deg, mean {:.3} deg over {} features (threshold {})",
        report.max_error_deg,
        report.mean_error_deg,
        report.features.len(),
        c.threshold
    );
    eprintln!(
        "navigation check: max deviation {:.3} (tolerance {}) {}",
        report.navigation.max_deviation,
        report.navigation.tolerance,
        if report.navigation.passed {
            "ok"
        } else {
            "exceeded"
        }
    );
    Ok(if report.passed {
        Status::Ok
    } else {
        Status::Degraded
    })
}

fn cmd_seed_export(c: SeedExportCmd) -> Result<Status> {
    let seed = sample_seed(
        &SeedSpec::OracleGaussian {
            rng_seed: c.rng_seed,
        },
        c.shape,
    )?;
    seed.save(&c.out)?;
    Ok(Status::Ok)
}
