use std::hint::black_box;
use std::time::Duration;

use chartmeta::analysis::facts_for_chart;
use chartmeta::codegen::{emit_code, CodeGrammar};
use chartmeta::pipeline::{run_all, PipelineConfig};
use chartmeta::recommend::{recommend, RecommendConfig};
use chartmeta::slice::slice_for_spec;
use chartmeta_bench::{corpus_tables, CORPUS_DIR};
use criterion::{criterion_group, criterion_main, Criterion, Throughput};

fn stages(c: &mut Criterion) {
    let tables = corpus_tables();
    let cfg = RecommendConfig::default();
    let mut g = c.benchmark_group("corpus");
    g.throughput(Throughput::Elements(tables.len() as u64));
    g.bench_function("recommend", |b| {
        b.iter(|| tables.iter().map(|t| recommend(black_box(t), &cfg).unwrap().len()).sum::<usize>())
    });

    let charts: Vec<_> = tables
        .iter()
        .flat_map(|t| recommend(t, &cfg).unwrap().into_iter().map(move |s| (s, t)))
        .map(|(s, t)| {
            let slice = slice_for_spec(&s, t).unwrap();
            (s, slice)
        })
        .collect();
    g.bench_function("codegen", |b| {
        b.iter(|| {
            for (spec, slice) in &charts {
                for grammar in CodeGrammar::ALL {
                    let _ = black_box(emit_code(spec, slice, grammar));
                }
            }
        })
    });
    g.bench_function("analyze", |b| {
        b.iter(|| {
            for (spec, slice) in &charts {
                black_box(facts_for_chart(spec, slice).unwrap());
            }
        })
    });
    g.finish();
}

fn full_run(c: &mut Criterion) {
    let mut g = c.benchmark_group("run_all");
    g.sample_size(10).measurement_time(Duration::from_secs(20));
    for parallelism in [1usize, 4] {
        g.bench_function(format!("parallelism_{parallelism}"), |b| {
            b.iter_with_setup(
                || tempfile::tempdir().unwrap(),
                |dir| {
                    let cfg = PipelineConfig {
                        input_glob: format!("{CORPUS_DIR}/*.csv"),
                        workspace_dir: dir.path().join("ws"),
                        parallelism,
                        ..Default::default()
                    };
                    black_box(run_all(&cfg).unwrap());
                },
            )
        });
    }
    g.finish();
}

criterion_group!(benches, stages, full_run);
criterion_main!(benches);
