use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hazardrag::agents::CallLog;
use hazardrag::corpus::ChunkSource;
use hazardrag::retrieval::{active_set, allocate_budget, rerank, Candidate, LexicalScorer};
use hazardrag::synthetic::DeskBenchmark;
use hazardrag::vecstore::{HashEmbeddingProvider, HazardDatabase};
use hazardrag::{Chunk, ChunkStrategy, Embedding, EmbeddingProvider, Hazard, PipelineVariant, RoutingDistribution};

fn chunk(id: String, text: String) -> Chunk {
    Chunk {
        source: ChunkSource {
            document_id: id.clone(),
            paragraphs: vec![0],
            span: None,
        },
        id,
        text,
        hazard_type: Hazard::Flood,
        summary: None,
        propositions: Vec::new(),
        strategy: ChunkStrategy::Paragraph,
    }
}

fn random_vec(rng: &mut ChaCha8Rng, dim: usize) -> Embedding {
    Embedding::new((0..dim).map(|_| rng.random_range(-1.0f32..1.0)).collect()).unwrap()
}

fn coarse_search(c: &mut Criterion) {
    let mut group = c.benchmark_group("coarse_search");
    for (size, dim) in [(2_000, 256), (2_000, 1536), (20_000, 256)] {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut db = HazardDatabase::new(Hazard::Flood, dim);
        for i in 0..size {
            db.insert(chunk(format!("c{i:06}"), String::new()), random_vec(&mut rng, dim)).unwrap();
        }
        let q = random_vec(&mut rng, dim);
        group.bench_with_input(BenchmarkId::new("l50", format!("{size}x{dim}")), &q, |b, q| {
            b.iter(|| black_box(db.coarse_search(q, 50).unwrap().len()))
        });
    }
    group.finish();
}

fn budget(c: &mut Criterion) {
    let d = RoutingDistribution::from_array([0.01, 0.10, 0.05, 0.61, 0.21, 0.01, 0.01]).unwrap();
    c.bench_function("allocate_budget/L50", |b| {
        b.iter(|| {
            let s = active_set(black_box(&d), 0.2);
            black_box(allocate_budget(&d, &s, 50))
        })
    });
}

fn lexical_rerank(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let words = ["levee", "breach", "surge", "river", "stage", "crest", "pump", "station", "ward", "depth"];
    let candidates: Vec<Candidate> = (0..50)
        .map(|i| {
            let text: Vec<&str> = (0..40).map(|_| words[rng.random_range(0..words.len())]).collect();
            Candidate {
                chunk: chunk(format!("c{i:03}"), text.join(" ")),
                coarse_score: 0.0,
                hazard: Hazard::Flood,
            }
        })
        .collect();
    c.bench_function("rerank/lexical/50to5", |b| {
        b.iter(|| {
            let mut log = CallLog::new();
            black_box(rerank(&LexicalScorer, "did the levee pump station breach", candidates.clone(), 5, &mut log).unwrap())
        })
    });
}

fn hash_embedding(c: &mut Criterion) {
    let p = HashEmbeddingProvider::new(1536, 0);
    let text = "The levee at the Lakeview pump station breached during the flood and water reached two meters.";
    c.bench_function("embed/hash/d1536", |b| b.iter(|| black_box(p.embed_text(text).unwrap())));
}

fn desk_inference(c: &mut Criterion) {
    let bench = DeskBenchmark::build(0, 1).unwrap();
    let engine = bench.engine(PipelineVariant::FullMora);
    let q = bench.dataset.items[0].question();
    c.bench_function("infer/desk/full_mora", |b| b.iter(|| black_box(engine.infer(&q))));
}

criterion_group!(benches, coarse_search, budget, lexical_rerank, hash_embedding, desk_inference);
criterion_main!(benches);
