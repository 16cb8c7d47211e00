use std::hint::black_box;

use chartmeta::eval::{
    contrastive_loss, meteor, mrr_at_10, ndcg_at_10, rank_charts, recall_at_k, rouge_l, rouge_n, table_recall_f1,
};
use chartmeta_bench::{embeddings, ranked_lists, sentence, table_text};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use rand::rngs::StdRng;
use rand::SeedableRng;

fn retrieval(c: &mut Criterion) {
    let lists = ranked_lists(1000, 100, 500, 1);
    let mut g = c.benchmark_group("retrieval_metrics");
    g.throughput(Throughput::Elements(lists.len() as u64));
    g.bench_function("recall@10", |b| b.iter(|| recall_at_k(black_box(&lists), 10).unwrap()));
    g.bench_function("mrr@10", |b| b.iter(|| mrr_at_10(black_box(&lists)).unwrap()));
    g.bench_function("ndcg@10", |b| b.iter(|| ndcg_at_10(black_box(&lists)).unwrap()));
    g.finish();

    let mut g = c.benchmark_group("rank_charts");
    for n in [1_000usize, 10_000] {
        let charts = embeddings(n, 512, 2);
        let query = &charts[n / 2];
        g.throughput(Throughput::Elements(n as u64));
        g.bench_with_input(BenchmarkId::from_parameter(n), &charts, |b, charts| {
            b.iter(|| rank_charts(black_box(query), charts, 10).unwrap())
        });
    }
    g.finish();

    let row: Vec<f64> = (0..4096).map(|i| (i as f64 * 0.37).sin()).collect();
    c.bench_function("contrastive_loss/4096", |b| b.iter(|| contrastive_loss(black_box(&row), 17, 0.07).unwrap()));
}

fn text(c: &mut Criterion) {
    let mut rng = StdRng::seed_from_u64(3);
    let mut g = c.benchmark_group("text_metrics");
    for words in [20usize, 80] {
        let (p, r) = (sentence(words, &mut rng), sentence(words, &mut rng));
        g.bench_with_input(BenchmarkId::new("rouge1", words), &(&p, &r), |b, (p, r)| b.iter(|| rouge_n(p, r, 1)));
        g.bench_with_input(BenchmarkId::new("rougeL", words), &(&p, &r), |b, (p, r)| b.iter(|| rouge_l(p, r)));
        g.bench_with_input(BenchmarkId::new("meteor", words), &(&p, &r), |b, (p, r)| b.iter(|| meteor(p, r)));
    }
    g.finish();
}

fn table(c: &mut Criterion) {
    let mut g = c.benchmark_group("table_recall_f1");
    for rows in [10usize, 100] {
        let gold = table_text(rows, 4, 1.0, 4);
        let pred = table_text(rows, 4, 1.03, 4);
        g.bench_with_input(BenchmarkId::from_parameter(rows), &(pred, gold), |b, (p, gld)| {
            b.iter(|| table_recall_f1(black_box(p), black_box(gld), 0.05).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, retrieval, text, table);
criterion_main!(benches);
