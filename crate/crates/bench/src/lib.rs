//! Input generators shared by the benchmarks.

use chartmeta::{CleanTable, Embedding, RankedList};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

pub const CORPUS_DIR: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/sample_corpus");

/// `n` ranked lists of `depth` ids drawn from a pool of `pool` charts.
pub fn ranked_lists(n: usize, depth: usize, pool: usize, seed: u64) -> Vec<RankedList> {
    let mut rng = StdRng::seed_from_u64(seed);
    (0..n)
        .map(|q| {
            let mut ids: Vec<usize> = (0..pool).collect();
            for i in 0..depth.min(pool) {
                let j = rng.random_range(i..pool);
                ids.swap(i, j);
            }
            RankedList {
                query_id: format!("q{q}"),
                ranked: ids[..depth.min(pool)].iter().map(|i| format!("c{i}")).collect(),
                relevant_id: format!("c{}", rng.random_range(0..pool)),
            }
        })
        .collect()
}

pub fn embeddings(n: usize, dim: usize, seed: u64) -> Vec<Embedding> {
    let mut rng = StdRng::seed_from_u64(seed);
    (0..n)
        .map(|i| Embedding {
            id: format!("c{i}"),
            vector: (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
        })
        .collect()
}

/// Pseudo-sentence of `words` tokens over a small vocabulary, so pairs share
/// many unigrams.
pub fn sentence(words: usize, rng: &mut StdRng) -> String {
    const VOCAB: [&str; 24] = [
        "the", "sales", "rose", "fell", "in", "march", "chart", "shows", "revenue", "by", "region", "steadily",
        "peak", "of", "mean", "is", "north", "south", "quarter", "growth", "a", "sharp", "drop", "year",
    ];
    (0..words).map(|_| VOCAB[rng.random_range(0..VOCAB.len())]).collect::<Vec<_>>().join(" ")
}

/// Linearized table with `rows` rows and `cols` value columns.
pub fn table_text(rows: usize, cols: usize, scale: f64, seed: u64) -> String {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut lines = vec![std::iter::once("key".to_string())
        .chain((0..cols).map(|c| format!("v{c}")))
        .collect::<Vec<_>>()
        .join(" | ")];
    for r in 0..rows {
        let mut cells = vec![format!("row{r}")];
        cells.extend((0..cols).map(|_| format!("{:.2}", rng.random_range(1.0..1000.0) * scale)));
        lines.push(cells.join(" | "));
    }
    lines.join("\n")
}

pub fn corpus_tables() -> Vec<CleanTable> {
    let mut paths: Vec<_> = std::fs::read_dir(CORPUS_DIR)
        .expect("sample corpus")
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let id = p.file_stem().unwrap().to_string_lossy().to_string();
            let raw = chartmeta::ingest::parse_csv(&id, &std::fs::read(p).unwrap()).unwrap();
            chartmeta::ingest::clean_table(&raw).unwrap()
        })
        .collect()
}
