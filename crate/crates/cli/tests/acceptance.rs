//! Acceptance suite. Prints one PASS, FAIL or NOT RUN line per criterion and
//! a summary line. With ZTREE_ACCEPTANCE_STRICT=1 it exits non-zero if any
//! criterion fails; otherwise the verdicts are reported without failing the
//! test run.
//!
//! Criterion 6 needs the UCI Adult data: set ZTREE_ADULT_CSV or place it at
//! `datasets/adult.csv` in the workspace.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::Rng;
use ztree::data::{compute_cutoffs, ingest_csv, NaPolicy, SchemaOverrides, TargetKind};
use ztree::harness::{run_benchmark, BenchmarkSpec, Method};
use ztree::metrics::{auroc, rmse};
use ztree::rng;
use ztree::search::{AtomForm, SubgroupCriterion};
use ztree::stats::{
    differential_effect_z, logrank_z, mann_whitney_u, mann_whitney_z, two_proportion_z, welch_t_z, ArmStats,
    BinarySample, OutcomeKind, SurvivalObs, TestKind, TreatmentGroupSample,
};
use ztree::synth::{generate, GeneratorMode, GeneratorSpec};
use ztree::tuning::default_grid;
use ztree::{learn_tree, Dataset, TreeConfig};

enum Outcome {
    Pass(String),
    Fail(String),
    NotRun(String),
}

type Check = fn() -> Outcome;

fn pass_if(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}

// --- 1: statistical test oracles -------------------------------------------

fn pooled_z_oracle(xa: u64, na: u64, xb: u64, nb: u64) -> f64 {
    let (xa, na, xb, nb) = (xa as f64, na as f64, xb as f64, nb as f64);
    let p = (xa + xb) / (na + nb);
    (xa / na - xb / nb) / (p * (1.0 - p) * (1.0 / na + 1.0 / nb)).sqrt()
}

fn two_pass_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    (mean, v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0))
}

fn welch_oracle(a: &[f64], b: &[f64]) -> f64 {
    let ((ma, va), (mb, vb)) = (two_pass_var(a), two_pass_var(b));
    (ma - mb) / (va / a.len() as f64 + vb / b.len() as f64).sqrt()
}

fn pair_count_u(a: &[f64], b: &[f64]) -> f64 {
    let mut u = 0.0;
    for x in a {
        for y in b {
            u += if x > y {
                1.0
            } else if x == y {
                0.5
            } else {
                0.0
            };
        }
    }
    u
}

fn criterion_1() -> Outcome {
    let mut rng = rng::stream(1, "acceptance:stats", 0);
    let mut worst = 0.0f64;
    let mut failures = Vec::new();
    for _ in 0..1000 {
        let (na, nb) = (rng.random_range(1..300u64), rng.random_range(1..300u64));
        let (xa, xb) = (rng.random_range(0..=na), rng.random_range(0..=nb));
        if xa + xb == 0 || xa + xb == na + nb {
            continue;
        }
        let got = two_proportion_z(BinarySample::new(xa, na), BinarySample::new(xb, nb)).unwrap().value();
        let want = pooled_z_oracle(xa, na, xb, nb);
        worst = worst.max((got - want).abs());
        if !close(got, want, 1e-10) {
            failures.push(format!("two-proportion {xa}/{na} vs {xb}/{nb}"));
        }
    }
    for _ in 0..1000 {
        let sample = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<f64> {
            let n = rng.random_range(2..60);
            let scale = rng.random_range(0.1..100.0);
            (0..n).map(|_| rng.random_range(-1.0..1.0) * scale).collect()
        };
        let (a, b) = (sample(&mut rng), sample(&mut rng));
        let got = welch_t_z(&a, &b).unwrap().value();
        let want = welch_oracle(&a, &b);
        worst = worst.max((got - want).abs() / want.abs().max(1.0));
        if !close(got, want, 1e-10) {
            failures.push(format!("welch {a:?} vs {b:?}"));
        }
    }
    for _ in 0..1000 {
        let binary = rng.random_bool(0.5);
        let arm = |rng: &mut rand_chacha::ChaCha8Rng| -> ArmStats {
            if binary {
                let n = rng.random_range(1..200u64);
                let x = rng.random_range(0..=n);
                ArmStats::from_counts(x, n)
            } else {
                let n = rng.random_range(2..200u64);
                ArmStats { n, mean: rng.random_range(-5.0..5.0), var: rng.random_range(0.01..10.0) }
            }
        };
        let (st, sc, ct, cc) = (arm(&mut rng), arm(&mut rng), arm(&mut rng), arm(&mut rng));
        let se2: f64 = [st, sc, ct, cc].iter().map(|a| a.var / a.n as f64).sum();
        if se2 == 0.0 {
            continue;
        }
        let want = ((st.mean - sc.mean) - (ct.mean - cc.mean)) / se2.sqrt();
        let kind = if binary { OutcomeKind::Binary } else { OutcomeKind::Continuous };
        let got = differential_effect_z(
            TreatmentGroupSample { treated: st, control: sc },
            TreatmentGroupSample { treated: ct, control: cc },
            kind,
        )
        .unwrap()
        .value();
        worst = worst.max((got - want).abs() / want.abs().max(1.0));
        if !close(got, want, 1e-10) {
            failures.push("differential effect".to_string());
        }
    }
    let mut mw_cases = 0;
    for na in 1..12 {
        for nb in 1..=(12 - na) {
            for _ in 0..20 {
                // few distinct values so ties are common
                let a: Vec<f64> = (0..na).map(|_| f64::from(rng.random_range(0..5u8))).collect();
                let b: Vec<f64> = (0..nb).map(|_| f64::from(rng.random_range(0..5u8))).collect();
                mw_cases += 1;
                if mann_whitney_u(&a, &b) != pair_count_u(&a, &b) {
                    failures.push(format!("mann-whitney U {a:?} vs {b:?}"));
                }
            }
        }
    }
    let mw_example = mann_whitney_z(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap().value();
    if (mw_example - (-4.5 / 5.25f64.sqrt())).abs() > 1e-12 {
        failures.push(format!("mann-whitney example {mw_example}"));
    }
    let obs = |t: f64| SurvivalObs { time: t, event: true };
    let lr = logrank_z(&[obs(1.0), obs(2.0)], &[obs(3.0), obs(4.0)]).unwrap().value();
    if (lr - 1.6977).abs() > 1e-4 || (lr - (2.0 - 5.0 / 6.0) / (17.0f64 / 36.0).sqrt()).abs() > 1e-6 {
        failures.push(format!("log-rank example {lr}"));
    }
    pass_if(
        failures.is_empty(),
        format!(
            "3x1000 closed-form checks, worst rel. error {worst:.1e}; {mw_cases} U checks; log-rank z {lr:.6}{}",
            if failures.is_empty() { String::new() } else { format!("; failures: {}", failures.len()) }
        ),
    )
}

// --- 2 and 3: threshold family ---------------------------------------------

fn family_datasets() -> Vec<Dataset> {
    let mut out = Vec::new();
    for outcome in [TargetKind::Binary, TargetKind::Continuous] {
        for n in [200, 1000] {
            for seed in 0..5 {
                let effect = if outcome == TargetKind::Binary { 0.25 } else { 0.6 };
                let plant: SubgroupCriterion = "x1>0.5".parse().unwrap();
                let spec =
                    GeneratorSpec::planted(n, 5, plant, GeneratorMode::OutcomeShift, outcome, effect, 100 + seed);
                out.push(generate(&spec).unwrap());
            }
        }
    }
    out
}

fn criterion_2() -> Outcome {
    let mut mismatches = Vec::new();
    let mut compared = 0;
    for (i, d) in family_datasets().iter().enumerate() {
        let cfg = TreeConfig::for_dataset(d, None).unwrap();
        let base = learn_tree(d, &cfg.clone().with_threshold(0.2)).unwrap();
        for t in [0.6, 1.0, 2.0, 3.0] {
            compared += 1;
            let direct = learn_tree(d, &cfg.clone().with_threshold(t)).unwrap();
            if base.derive_pruned(t).unwrap() != direct {
                mismatches.push(format!("dataset {i} threshold {t}"));
            }
        }
    }
    pass_if(
        mismatches.is_empty(),
        format!("{compared} pruned-vs-direct comparisons, {} mismatches {mismatches:?}", mismatches.len()),
    )
}

fn criterion_3() -> Outcome {
    let mut violations = Vec::new();
    let mut shapes = Vec::new();
    for (i, d) in family_datasets().iter().enumerate() {
        let cfg = TreeConfig::for_dataset(d, None).unwrap();
        let base = learn_tree(d, &cfg.with_threshold(0.2)).unwrap();
        let counts: Vec<usize> = default_grid().iter().map(|&t| base.derive_pruned(t).unwrap().node_count()).collect();
        if counts.windows(2).any(|w| w[1] > w[0]) {
            violations.push(i);
        }
        shapes.push(format!("{}->{}", counts[0], counts[14]));
    }
    pass_if(violations.is_empty(), format!("node counts 0.2->3.0: {}; violations {violations:?}", shapes.join(" ")))
}

// --- 4: null control ---------------------------------------------------------

fn criterion_4() -> Outcome {
    let mut single = 0;
    for seed in 0..50 {
        let d = generate(&GeneratorSpec::null(500, 10, TargetKind::Binary, 1000 + seed)).unwrap();
        let cfg = TreeConfig::for_dataset(&d, None).unwrap().with_threshold(2.0);
        if learn_tree(&d, &cfg).unwrap().node_count() == 1 {
            single += 1;
        }
    }
    pass_if(single >= 40, format!("{single}/50 single-leaf trees (need >= 40)"))
}

// --- 5: planted recovery -----------------------------------------------------

/// Root criterion is one atom on `x1` whose cutoff is at most one candidate
/// step from the candidate nearest the planted cutoff.
fn recovers_plant(d: &Dataset, test: TestKind) -> bool {
    let cfg = TreeConfig::for_dataset(d, Some(test)).unwrap();
    let model = learn_tree(d, &cfg).unwrap();
    let Some(split) = &model.root.split else { return false };
    let [atom] = split.criterion.atoms() else { return false };
    let AtomForm::GreaterThan(cut) = atom.form else { return false };
    if atom.feature != "x1" {
        return false;
    }
    let x = d.table().feature("x1").unwrap().1.numeric().unwrap();
    let cutoffs = compute_cutoffs(x);
    let nearest =
        |v: f64| (0..cutoffs.len()).min_by(|&i, &j| (cutoffs[i] - v).abs().total_cmp(&(cutoffs[j] - v).abs())).unwrap();
    let Some(chosen) = cutoffs.iter().position(|&c| c == cut) else { return false };
    chosen.abs_diff(nearest(0.5)) <= 1
}

fn criterion_5() -> Outcome {
    let plant: SubgroupCriterion = "x1>0.5".parse().unwrap();
    let run = |mode: GeneratorMode, test: TestKind| -> usize {
        (0..20)
            .filter(|&seed| {
                let spec =
                    GeneratorSpec::planted(2000, 10, plant.clone(), mode, TargetKind::Continuous, 1.0, 2000 + seed);
                recovers_plant(&generate(&spec).unwrap(), test)
            })
            .count()
    };
    let shift = run(GeneratorMode::OutcomeShift, TestKind::MannWhitneyU);
    let interaction = run(GeneratorMode::TreatmentInteraction, TestKind::DiffEffectContinuous);
    pass_if(
        shift >= 18 && interaction >= 18,
        format!("outcome shift {shift}/20, treatment interaction {interaction}/20 (need >= 18 each)"),
    )
}

// --- 6: Adult benchmark ------------------------------------------------------

fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn criterion_6() -> Outcome {
    let csv = std::env::var_os("ZTREE_ADULT_CSV")
        .map(PathBuf::from)
        .unwrap_or_else(|| workspace_root().join("datasets/adult.csv"));
    if !csv.exists() {
        return Outcome::NotRun(format!("{} not found; set ZTREE_ADULT_CSV", csv.display()));
    }
    let schema = SchemaOverrides::load(&workspace_root().join("datasets/adult.schema")).unwrap();
    let data = match ingest_csv(&csv, &schema, NaPolicy::NaLevel) {
        Ok(d) => d,
        Err(e) => return Outcome::Fail(format!("cannot read {}: {e}", csv.display())),
    };
    let mut spec = BenchmarkSpec::new(TreeConfig::for_dataset(&data, None).unwrap(), 42);
    spec.sizes = vec![100, 1000];
    spec.resamples = 10;
    spec.methods = vec![Method::Ztree, Method::Cart];
    let report = run_benchmark(&data, &spec).unwrap();
    let z100 = report.summary(Method::Ztree, 100).unwrap();
    let z1000 = report.summary(Method::Ztree, 1000).unwrap();
    let c1000 = report.summary(Method::Cart, 1000).unwrap();
    let (a100, a1000) = (z100.metric.unwrap(), z1000.metric.unwrap());
    let ok = (a100 - 0.770).abs() <= 0.05 && (a1000 - 0.853).abs() <= 0.05 && z1000.depth <= c1000.depth;
    pass_if(
        ok,
        format!(
            "ztree AUROC n=100 {a100:.3} (0.770±0.05), n=1000 {a1000:.3} (0.853±0.05); depth at n=1000 ztree {:.1} vs cart {:.1}",
            z1000.depth, c1000.depth
        ),
    )
}

// --- 7: metrics ----------------------------------------------------------------

fn criterion_7() -> Outcome {
    let mut rng = rng::stream(7, "acceptance:metrics", 0);
    let mut checked = 0;
    let mut worst = 0.0f64;
    while checked < 500 {
        let n = rng.random_range(2..=50);
        let scores: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(0..10u8)) / 10.0).collect();
        let labels: Vec<f64> = (0..n).map(|_| f64::from(u8::from(rng.random_bool(0.4)))).collect();
        if !labels.contains(&0.0) || !labels.contains(&1.0) {
            continue;
        }
        checked += 1;
        let (mut wins, mut pairs) = (0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                if labels[i] == 1.0 && labels[j] == 0.0 {
                    pairs += 1.0;
                    wins += if scores[i] > scores[j] {
                        1.0
                    } else if scores[i] == scores[j] {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        worst = worst.max((auroc(&scores, &labels).unwrap() - wins / pairs).abs());
    }
    let mut rmse_ok = true;
    for _ in 0..200 {
        let n = rng.random_range(1..=50);
        let p: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
        let mut sse = 0.0;
        for i in 0..n {
            sse += (p[i] - a[i]) * (p[i] - a[i]);
        }
        rmse_ok &= (rmse(&p, &a).unwrap() - (sse / n as f64).sqrt()).abs() <= 1e-12;
    }
    pass_if(
        worst <= 1e-12 && rmse_ok,
        format!("{checked} AUROC instances, worst error {worst:.1e}; rmse agrees: {rmse_ok}"),
    )
}

// --- 8: CLI determinism ------------------------------------------------------

fn ztree_in(dir: &Path, threads: &str, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_ztree"))
        .current_dir(dir)
        .arg("--threads")
        .arg(threads)
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)))
    }
}

fn criterion_8() -> Outcome {
    let runs: Vec<(tempfile::TempDir, &str)> =
        ["1", "4", "1"].into_iter().map(|t| (tempfile::tempdir().unwrap(), t)).collect();
    let commands = [
        "synth --n 400 --features 4 --nominal 1 --mode outcome-shift --plant x1>0.5 --effect 0.25 --seed 7 --out d.csv",
        "train --data d.csv --target y --threshold 1.0 --seed 7 --out m.json",
        "tune --data d.csv --target y --seed 7 --out t.json --report r.csv",
        "predict --model t.json --data d.csv --out p.csv",
        "bench --data d.csv --target y --sizes 100 --resamples 2 --seed 7 --out b.csv",
    ];
    for (dir, threads) in &runs {
        for line in commands {
            let args: Vec<&str> = line.split_whitespace().collect();
            if let Err(e) = ztree_in(dir.path(), threads, &args) {
                return Outcome::Fail(e);
            }
        }
    }
    let files = ["d.csv", "m.json", "t.json", "r.csv", "p.csv", "b.csv"];
    let mut differing = Vec::new();
    for f in files {
        let first = std::fs::read(runs[0].0.path().join(f)).unwrap();
        if runs[1..].iter().any(|(d, _)| std::fs::read(d.path().join(f)).unwrap() != first) {
            differing.push(f);
        }
    }
    pass_if(
        differing.is_empty(),
        format!("{} artifacts compared across 3 runs (threads 1, 4, 1); differing: {differing:?}", files.len()),
    )
}

fn main() {
    // `cargo test -- --list` and similar harness flags: nothing to list
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let criteria: [(&str, Check, Duration); 8] = [
        ("1 statistical test oracles", criterion_1, Duration::from_secs(30)),
        ("2 threshold-family exactness", criterion_2, Duration::from_secs(300)),
        ("3 monotone complexity", criterion_3, Duration::from_secs(300)),
        ("4 null control", criterion_4, Duration::from_secs(600)),
        ("5 planted-subgroup recovery", criterion_5, Duration::from_secs(600)),
        ("6 Adult benchmark", criterion_6, Duration::from_secs(1800)),
        ("7 metric correctness", criterion_7, Duration::from_secs(10)),
        ("8 CLI determinism", criterion_8, Duration::from_secs(120)),
    ];
    let (mut passed, mut not_run) = (0, 0);
    let mut failed = 0;
    for (name, check, budget) in criteria {
        let start = Instant::now();
        let outcome = check();
        let elapsed = start.elapsed();
        let over = if elapsed > budget { format!(" [over the {}s budget]", budget.as_secs()) } else { String::new() };
        // a runtime budget is part of each criterion
        let (tag, detail) = match outcome {
            Outcome::Pass(d) if over.is_empty() => {
                passed += 1;
                ("PASS", d)
            }
            Outcome::Pass(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Outcome::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Outcome::NotRun(d) => {
                not_run += 1;
                ("NOT RUN", d)
            }
        };
        println!("{tag}: criterion {name}: {detail} ({:.1}s){over}", elapsed.as_secs_f64());
    }
    println!("acceptance: {passed} passed, {failed} failed, {not_run} not run");
    let strict = std::env::var("ZTREE_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if strict && failed > 0 {
        std::process::exit(1);
    }
}
