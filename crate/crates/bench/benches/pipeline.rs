use criterion::{criterion_group, criterion_main, Criterion};
use mvcode_core::corpus::{build_pair_pool, ingest};
use mvcode_core::frontend::parse_source;
use mvcode_core::interp::{evaluate, Value, DEFAULT_STEP_LIMIT};
use mvcode_core::model::{train, EncoderConfig, Forward, ModelState, TrainOptions};
use mvcode_core::synth::synth_corpus;
use mvcode_core::transform::generate_variants;
use mvcode_core::typing::{infer_types, train_bpe};
use mvcode_core::views::{build_cfg, linearize_ast, linearize_cfg};
use std::hint::black_box;

const PROGRAM: &str = "def busy(n):\n    total = 0\n    for i in range(n):\n        if i % 3 == 0:\n            total = total + i * i\n        else:\n            total = total - i\n    while total > 100:\n        total = total // 2\n    return total\n";

fn frontend_benches(c: &mut Criterion) {
    c.bench_function("parse", |b| b.iter(|| parse_source(black_box(PROGRAM)).unwrap()));
    let tree = parse_source(PROGRAM).unwrap();
    c.bench_function("linearize_ast", |b| b.iter(|| linearize_ast(black_box(&tree))));
    c.bench_function("build_and_linearize_cfg", |b| {
        b.iter(|| {
            let cfg = build_cfg(black_box(&tree)).unwrap();
            linearize_cfg(&tree, &cfg)
        })
    });
    c.bench_function("infer_types", |b| b.iter(|| infer_types(black_box(&tree))));
    c.bench_function("generate_variants", |b| {
        b.iter(|| generate_variants(black_box(&tree), 7, 3))
    });
    c.bench_function("interpret_busy_50", |b| {
        b.iter(|| evaluate(black_box(&tree), Some("busy"), &[Value::Int(50)], DEFAULT_STEP_LIMIT))
    });
}

fn bpe_benches(c: &mut Criterion) {
    let records = synth_corpus(50, 3);
    let (corpus, _) = ingest(&records, 3, 1);
    let sequences = corpus.token_sequences();
    c.bench_function("bpe_train_200_merges", |b| b.iter(|| train_bpe(black_box(&sequences), 200)));
    let model = train_bpe(&sequences, 200);
    c.bench_function("bpe_encode_token", |b| {
        b.iter(|| model.encode_token(black_box("countdown_alpha_bravo")))
    });
}

fn model_benches(c: &mut Criterion) {
    let records = synth_corpus(16, 5);
    let (corpus, _) = ingest(&records, 5, 1);
    let bpe = train_bpe(&corpus.token_sequences(), 120);
    let pool = build_pair_pool(&corpus, &bpe, None).unwrap();
    let config = EncoderConfig {
        vocab_size: bpe.vocab_size(),
        hidden: 32,
        layers: 2,
        heads: 4,
        feed_forward: 64,
        max_positions: 96,
        ..Default::default()
    };
    let state = ModelState::init(config.clone()).unwrap();
    let ids = &pool[0].1.ids;
    c.bench_function("encoder_forward", |b| {
        b.iter(|| {
            let mut fwd = Forward::new(black_box(&state));
            fwd.encode(ids).unwrap()
        })
    });
    c.bench_function("train_step_n4", |b| {
        b.iter(|| {
            let mut s = ModelState::init(config.clone()).unwrap();
            let options = TrainOptions { steps: 1, batch_size: 4, ..Default::default() };
            train(&mut s, black_box(&pool), &options, |_, _, _| {}).unwrap()
        })
    });
}

criterion_group!(benches, frontend_benches, bpe_benches, model_benches);
criterion_main!(benches);
