// SPDX-License-Identifier: MIT OR Apache-2.0

//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use facesteer_core::oracle::synthetic_registry;
use facesteer_core::pipeline::{replay, Provenance};
use facesteer_core::text::Templates;
use facesteer_core::{
    angle_matrix, make_world, navigate_sequential, navigate_vectorized, project_all, AngleMatrix,
    DirectionSet, FeatureKind, FeatureRegistry, FeatureVector, LatentShape, LatentVector, Lexicon,
    SequentialParams,
};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn facesteer(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_facesteer"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn gaussian(rng: &mut impl Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.sample(StandardNormal)).collect()
}

fn latent(rng: &mut impl Rng, d: usize) -> LatentVector {
    LatentVector::new(LatentShape::flat(d), gaussian(rng, d)).unwrap()
}

fn ids(k: usize) -> Vec<String> {
    (0..k).map(|i| format!("f{i}")).collect()
}

fn random_target(rng: &mut impl Rng, k: usize) -> FeatureVector {
    let mut t = FeatureVector::unmasked(k);
    for i in 0..k {
        if rng.random_bool(0.5) {
            t.set(i, rng.random_range(-3.0..=3.0));
        }
    }
    t
}

/// K orthonormal rows in dimension d from the QR factorization of a Gaussian matrix.
fn orthonormal_set(rng: &mut impl Rng, k: usize, d: usize) -> DirectionSet {
    let a = DMatrix::from_fn(d, k, |_, _| rng.sample::<f64, _>(StandardNormal));
    let q = a.qr().q();
    let rows = (0..k)
        .map(|j| q.column(j).iter().copied().collect())
        .collect();
    DirectionSet::normalized(ids(k), rows).unwrap()
}

fn oracle_report(args: &[&str]) -> Result<(serde_json::Value, i32, f64), String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let out = dir.path().join("report.json");
    let mut full = vec!["oracle-eval", "--out", p(&out)];
    full.extend_from_slice(args);
    let start = Instant::now();
    let o = facesteer(&full);
    let secs = start.elapsed().as_secs_f64();
    let code = o.status.code().unwrap_or(-1);
    let text = std::fs::read_to_string(&out)
        .map_err(|e| format!("no report ({e}): {}", String::from_utf8_lossy(&o.stderr)))?;
    let v = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    Ok((v, code, secs))
}

fn direction_recovery() -> Check {
    let (v, code, secs) = oracle_report(&[
        "--d",
        "64",
        "--n",
        "3000",
        "--sigma",
        "0.1",
        "--entanglement",
        "80",
        "--threshold",
        "10",
    ])?;
    let max = v["max_error_deg"].as_f64().ok_or("max error missing")?;
    let k = v["features"].as_array().map_or(0, Vec::len);
    if k != 34 || code != 0 || max > 10.0 || secs >= 60.0 {
        return Err(format!("K={k} exit={code} max={max:.3} deg in {secs:.1} s"));
    }
    let (v0, code0, _) =
        oracle_report(&["--kind", "continuous", "--sigma", "0", "--threshold", "0.5"])?;
    let max0 = v0["max_error_deg"].as_f64().ok_or("max error missing")?;
    if code0 != 0 || max0 > 0.5 {
        return Err(format!(
            "noiseless continuous exit={code0} max={max0:.3e} deg"
        ));
    }
    Ok(format!(
        "K={k} n=3000 sigma=0.1: max {max:.2} deg in {secs:.1} s; sigma=0 continuous: max {max0:.1e} deg"
    ))
}

fn navigation_exactness() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let d = 64;
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let k = rng.random_range(1..=34);
        let dirs = orthonormal_set(&mut rng, k, d);
        let start = latent(&mut rng, d);
        let target = random_target(&mut rng, k);
        let before = project_all(&start, &dirs).unwrap();
        let after =
            project_all(&navigate_vectorized(&start, &target, &dirs).unwrap(), &dirs).unwrap();
        for i in 0..k {
            let want = if target.mask[i] {
                target.values[i]
            } else {
                before.values[i]
            };
            worst = worst.max((after.values[i] - want).abs());
        }
    }
    if worst <= 1e-9 {
        Ok(format!("100 orthonormal sets, worst deviation {worst:.1e}"))
    } else {
        Err(format!("worst deviation {worst:.3e}"))
    }
}

/// Random unit rows in a low dimension, redrawn until every pair is at least
/// `min_deg` apart, so many pairs sit close to the bound.
fn entangled_set(rng: &mut impl Rng, k: usize, d: usize, min_deg: f64) -> DirectionSet {
    let max_cos = min_deg.to_radians().cos();
    loop {
        let dirs =
            DirectionSet::normalized(ids(k), (0..k).map(|_| gaussian(rng, d)).collect()).unwrap();
        let ok = (0..k).all(|i| {
            (i + 1..k).all(|j| {
                let c: f64 = dirs
                    .row(i)
                    .iter()
                    .zip(dirs.row(j))
                    .map(|(x, y)| x * y)
                    .sum();
                c.abs() <= max_cos
            })
        });
        if ok {
            return dirs;
        }
    }
}

/// Planted pairs from the oracle on even trials, dense random sets on odd ones.
fn sixty_degree_set(rng: &mut impl Rng, trial: u64, k: usize, d: usize) -> DirectionSet {
    if trial.is_multiple_of(2) {
        let reg = synthetic_registry(&vec![FeatureKind::Continuous; k]);
        make_world(&reg, d, 60.0, 0.0, trial).unwrap().planted
    } else {
        entangled_set(rng, k, d, 60.0)
    }
}

/// Exact navigation for non-orthogonal directions: solve the Gram system
/// over the masked rows and step along their span.
fn gram_solution(start: &LatentVector, target: &FeatureVector, dirs: &DirectionSet) -> Vec<f64> {
    let m: Vec<usize> = target.masked_indices().collect();
    let g = DMatrix::from_fn(m.len(), m.len(), |a, b| {
        dirs.row(m[a])
            .iter()
            .zip(dirs.row(m[b]))
            .map(|(x, y)| x * y)
            .sum()
    });
    let v = project_all(start, dirs).unwrap();
    let rhs = DVector::from_iterator(m.len(), m.iter().map(|&i| target.values[i] - v.values[i]));
    let c = g.lu().solve(&rhs).expect("Gram matrix is invertible");
    let mut out = start.as_slice().to_vec();
    for (a, &i) in m.iter().enumerate() {
        for (o, x) in out.iter_mut().zip(dirs.row(i)) {
            *o += c[a] * x;
        }
    }
    out
}

/// Trials out of 100 that reach the default tolerance within the default
/// pass budget, and the largest pass count seen.
fn convergence_rate(rng: &mut impl Rng, dense: bool) -> (usize, usize) {
    let params = SequentialParams::default();
    let mut converged = 0;
    let mut max_passes = 0;
    for trial in 0..100u64 {
        let k = rng.random_range(2..=34);
        let d = k + 6;
        let dirs = if dense {
            entangled_set(rng, k, d, 60.0)
        } else {
            let reg = synthetic_registry(&vec![FeatureKind::Continuous; k]);
            make_world(&reg, 64, 60.0, 0.0, trial).unwrap().planted
        };
        let start = latent(rng, dirs.latent_dim());
        let target = random_target(rng, k);
        let out = navigate_sequential(&start, &target, &dirs, params).unwrap();
        if out.residual <= params.tol && out.passes <= params.max_passes {
            converged += 1;
        }
        max_passes = max_passes.max(out.passes);
    }
    (converged, max_passes)
}

fn sequential_convergence() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let (converged, max_passes) = convergence_rate(&mut rng, false);
    // Not part of the criterion: sets where most pairs sit near 60 degrees.
    let (dense, dense_max) = convergence_rate(&mut rng, true);

    let tight = SequentialParams {
        tol: 1e-12,
        max_passes: 10_000,
    };
    let mut worst: f64 = 0.0;
    for trial in 0..100u64 {
        let k = rng.random_range(2..=8);
        let d = rng.random_range(k + 1..=16);
        let dirs = sixty_degree_set(&mut rng, trial, k, d);
        let start = latent(&mut rng, d);
        let mut target = random_target(&mut rng, k);
        if !target.any_masked() {
            target.set(0, 1.0);
        }
        let out = navigate_sequential(&start, &target, &dirs, tight).unwrap();
        let exact = gram_solution(&start, &target, &dirs);
        let dev = out
            .latent
            .as_slice()
            .iter()
            .zip(&exact)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        worst = worst.max(dev);
    }

    let summary = format!(
        "planted: {converged}/100 within 50 passes (max {max_passes}); \
         Gram oracle worst {worst:.1e} on K<=8; dense random sets: {dense}/100 (max {dense_max})"
    );
    if converged >= 99 && worst <= 1e-6 {
        Ok(summary)
    } else {
        Err(summary)
    }
}

fn angle_analysis() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let k = rng.random_range(2..=20);
        let d = rng.random_range(2..=32);
        let mut rows: Vec<Vec<f64>> = (0..k).map(|_| gaussian(&mut rng, d)).collect();
        if rng.random_bool(0.3) {
            rows[k - 1] = rows[0].clone();
        }
        let dirs = DirectionSet::normalized(ids(k), rows).unwrap();
        let m = angle_matrix(&dirs).unwrap();
        for i in 0..k {
            if m.degrees[i][i] != 0.0 {
                return Err(format!("diagonal entry {i} is {}", m.degrees[i][i]));
            }
            for j in 0..k {
                let a = m.degrees[i][j];
                if a != m.degrees[j][i] || !(0.0..=180.0).contains(&a) {
                    return Err(format!("entry ({i}, {j}) = {a} breaks symmetry or range"));
                }
                if i != j {
                    let c: f64 = dirs
                        .row(i)
                        .iter()
                        .zip(dirs.row(j))
                        .map(|(x, y)| x * y)
                        .sum();
                    let brute = c.clamp(-1.0, 1.0).acos().to_degrees();
                    worst = worst.max((a - brute).abs());
                }
            }
        }
        let csv = m.to_csv();
        let back = AngleMatrix::from_csv(&csv).map_err(|e| e.to_string())?;
        if back.feature_ids != m.feature_ids || back.to_csv() != csv {
            return Err("CSV report does not round-trip".into());
        }
        for (r, b) in m.degrees.iter().zip(&back.degrees) {
            if r.iter().zip(b).any(|(x, y)| (x - y).abs() > 0.05 + 1e-9) {
                return Err("CSV values drift beyond one-decimal rounding".into());
            }
        }
    }
    if worst <= 1e-9 {
        Ok(format!(
            "100 sets match brute force within {worst:.1e}; CSV round-trips"
        ))
    } else {
        Err(format!("worst deviation {worst:.3e}"))
    }
}

fn parser_round_trip() -> Check {
    let reg = FeatureRegistry::default();
    let lex = Lexicon::default_for(&reg).map_err(|e| e.to_string())?;
    let corpus = lex
        .build_corpus(1000, &Templates::default(), 404)
        .map_err(|e| e.to_string())?;
    for e in &corpus {
        let (v, _) = lex.parse(&e.text);
        let same = v.mask == e.vector.mask
            && v.masked_indices()
                .all(|i| v.values[i] == e.vector.values[i]);
        if !same {
            return Err(format!("`{}` parses to a different vector", e.text));
        }
    }
    let beard = reg.index_of("beard").unwrap();
    let heavy = lex.parse("heavy beard").0;
    let plain = lex.parse("beard").0;
    if !(heavy.mask[beard] && plain.mask[beard] && heavy.values[beard] > plain.values[beard]) {
        return Err("\"heavy beard\" does not exceed \"beard\"".into());
    }
    Ok(format!(
        "1000 pairs exact; heavy beard {} > beard {}",
        heavy.values[beard], plain.values[beard]
    ))
}

fn determinism() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let dirs_path = dir.path().join("dirs.json");
    let o = facesteer(&[
        "oracle-eval",
        "--n",
        "1000",
        "--threshold",
        "180",
        "--directions-out",
        p(&dirs_path),
        "--out",
        p(&dir.path().join("r.json")),
    ]);
    if o.status.code() != Some(0) {
        return Err(format!(
            "oracle-eval failed: {}",
            String::from_utf8_lossy(&o.stderr)
        ));
    }
    let mut outputs = Vec::new();
    for run in 0..3 {
        let sub = dir.path().join(format!("run{run}"));
        std::fs::create_dir(&sub).map_err(|e| e.to_string())?;
        let out = sub.join("latent.json");
        let o = facesteer(&[
            "generate",
            "--text",
            "a young woman with blonde long hair and no glasses",
            "--rng-seed",
            "42",
            "--directions",
            p(&dirs_path),
            "--out",
            p(&out),
        ]);
        if o.status.code() != Some(0) {
            return Err(format!(
                "generate failed: {}",
                String::from_utf8_lossy(&o.stderr)
            ));
        }
        let latent = std::fs::read(&out).map_err(|e| e.to_string())?;
        let prov = std::fs::read(sub.join("latent.provenance.json")).map_err(|e| e.to_string())?;
        outputs.push((latent, prov));
    }
    if outputs.windows(2).any(|w| w[0] != w[1]) {
        return Err("outputs differ between runs".into());
    }
    let prov = Provenance::from_json_str(std::str::from_utf8(&outputs[0].1).unwrap())
        .map_err(|e| e.to_string())?;
    let dirs = DirectionSet::load(&dirs_path).map_err(|e| e.to_string())?;
    let replayed = replay(&prov, &dirs).map_err(|e| e.to_string())?;
    if replayed.to_json_string().as_bytes() != outputs[0].0.as_slice() {
        return Err("provenance replay does not reproduce the latent".into());
    }
    Ok("3 generate runs byte-identical; provenance replay is bit-exact".into())
}

fn main() -> ExitCode {
    let checks: [Criterion; 6] = [
        ("direction recovery", direction_recovery),
        ("navigation exactness (orthonormal)", navigation_exactness),
        ("sequential convergence", sequential_convergence),
        ("angle analysis", angle_analysis),
        ("parser round trip", parser_round_trip),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        match check() {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        checks.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
