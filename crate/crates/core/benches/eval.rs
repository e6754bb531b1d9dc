use std::path::Path;

use bespoke_core::eval::{sweep, EvalSettings, Profile};
use bespoke_core::isa::Precision;
use bespoke_core::mlcodegen::{FloatModel, Variant};
use criterion::{criterion_group, criterion_main, Criterion};

fn models() -> Vec<FloatModel> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/models");
    let mut paths: Vec<_> = std::fs::read_dir(&dir)
        .expect("fixture models")
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| FloatModel::load(p).expect("fixture model"))
        .collect()
}

fn fixture_sweep(c: &mut Criterion) {
    let models = models();
    let mut group = c.benchmark_group("fixture_sweep");
    group.sample_size(10);
    for (name, parallel) in [("parallel", true), ("sequential", false)] {
        let settings = EvalSettings {
            parallel,
            ..EvalSettings::default()
        };
        group.bench_function(name, |b| {
            b.iter(|| {
                sweep(
                    &models,
                    &Precision::ALL,
                    &Variant::ALL,
                    &Profile::ALL,
                    &settings,
                )
            })
        });
    }
    group.finish();
}

criterion_group!(benches, fixture_sweep);
criterion_main!(benches);
