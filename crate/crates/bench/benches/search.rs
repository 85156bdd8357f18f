use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ztree::data::TargetKind;
use ztree::search::{train_best_subgroup, SearchDepth};
use ztree::synth::{generate, GeneratorMode, GeneratorSpec};
use ztree::{internal_cv_score, TreeConfig};

fn data(n: usize) -> ztree::Dataset {
    let plant = "x1>0.5".parse().unwrap();
    let spec = GeneratorSpec::planted(n, 10, plant, GeneratorMode::OutcomeShift, TargetKind::Binary, 0.3, 1);
    generate(&spec).unwrap()
}

fn best_subgroup(c: &mut Criterion) {
    let mut group = c.benchmark_group("train_best_subgroup");
    for n in [1000, 10_000] {
        let d = data(n);
        let rows: Vec<usize> = (0..n).collect();
        let test = TreeConfig::for_dataset(&d, None).unwrap().test;
        for depth in [1, 2] {
            let depth = SearchDepth::new(depth).unwrap();
            group.bench_with_input(BenchmarkId::new(format!("depth{}", depth.get()), n), &rows, |b, rows| {
                b.iter(|| train_best_subgroup(black_box(&d), rows, test, depth, 10).unwrap())
            });
        }
    }
    group.finish();
}

fn cv_score(c: &mut Criterion) {
    let d = data(2000);
    let rows: Vec<usize> = (0..d.n()).collect();
    let cfg = TreeConfig::for_dataset(&d, None).unwrap();
    c.bench_function("internal_cv_score/2000", |b| {
        b.iter(|| internal_cv_score(black_box(&d), &rows, cfg.test, cfg.search_depth, 10, &cfg.cv, "").unwrap())
    });
}

criterion_group!(benches, best_subgroup, cv_score);
criterion_main!(benches);
