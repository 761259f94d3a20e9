use std::hint::black_box;

use claim_anchor::eval::mrr_at_k;
use claim_anchor_bench::{
    collection, embeddings, index, queries, random_vector, run_with_gold, COLLECTION_SIZE,
};
use criterion::{criterion_group, criterion_main, Criterion};

fn bm25(c: &mut Criterion) {
    let corpus = collection();
    let mut group = c.benchmark_group("bm25");
    group.sample_size(10);
    group.bench_function("build_index_7718", |b| b.iter(|| index(black_box(&corpus))));

    let idx = index(&corpus);
    let qs = queries(&corpus, 64, 3);
    let mut i = 0;
    group.sample_size(100);
    group.bench_function("retrieve_top100", |b| {
        b.iter(|| {
            let q = &qs.queries()[i % qs.len()];
            i += 1;
            idx.search(&q.post_id, black_box(&q.tweet_text), 100)
        })
    });
    group.finish();
}

fn dense(c: &mut Criterion) {
    let store = embeddings(COLLECTION_SIZE, 384, 5);
    let query = random_vector(384, 6);
    c.bench_function("dense/retrieve_top100_384d", |b| {
        b.iter(|| store.retrieve("q", black_box(&query), 100))
    });
}

fn mrr(c: &mut Criterion) {
    let (run, gold) = run_with_gold(1000, 100, 9);
    c.bench_function("eval/mrr_at_5_1000q", |b| {
        b.iter(|| mrr_at_k(black_box(&run), &gold, 5))
    });
}

criterion_group!(benches, bm25, dense, mrr);
criterion_main!(benches);
