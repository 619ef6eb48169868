//! End-to-end behavior of the training loop: descent, determinism,
//! regularizer dominance, the non-finite abort path, and the
//! finite-difference gradient verification at a d=8, single-layer scale.

use mvcode_core::corpus::{build_pair_pool, ingest};
use mvcode_core::model::{
    grad_check, train, EncoderConfig, ModelError, ModelState, OptimizerKind, TrainOptions,
};
use mvcode_core::pairs::{make_batches, PositivePair};
use mvcode_core::synth::synth_corpus;
use mvcode_core::typing::train_bpe;

fn toy_pool(samples: usize, seed: u64, merges: usize) -> (Vec<PositivePair>, usize) {
    let records = synth_corpus(samples, seed);
    let (corpus, _) = ingest(&records, seed, 1);
    let bpe = train_bpe(&corpus.token_sequences(), merges);
    let pool = build_pair_pool(&corpus, &bpe, None).unwrap();
    (pool, bpe.vocab_size())
}

fn small_config(vocab: usize, seed: u64) -> EncoderConfig {
    EncoderConfig {
        vocab_size: vocab,
        hidden: 16,
        layers: 1,
        heads: 2,
        feed_forward: 32,
        max_positions: 256,
        lambda: 1e-5,
        learning_rate: 3e-3,
        seed,
        ..Default::default()
    }
}

#[test]
fn mvcl_descends_on_toy_corpus() {
    // 8 paired samples x 8 combinations = 64 positive pairs
    let (pool, vocab) = toy_pool(8, 42, 120);
    assert_eq!(pool.len(), 64);
    let mut state = ModelState::init(small_config(vocab, 1)).unwrap();
    let options = TrainOptions {
        steps: 50,
        batch_size: 4,
        seed: 5,
        optimizer: OptimizerKind::Adam,
        learning_rate: 3e-3,
        lambda: 1e-6,
        ..Default::default()
    };
    let log = train(&mut state, &pool, &options, |_, _, _| {}).unwrap();
    assert_eq!(log.records.len(), 50);
    let head: f64 = log.records[..5].iter().map(|r| r.mvcl).sum::<f64>() / 5.0;
    let tail: f64 = log.records[45..].iter().map(|r| r.mvcl).sum::<f64>() / 5.0;
    assert!(
        tail < head,
        "contrastive loss failed to descend: first {head:.4}, last {tail:.4}"
    );
    assert!(state.all_finite());
}

#[test]
fn same_seed_identical_loss_logs() {
    let (pool, vocab) = toy_pool(6, 9, 100);
    let options = TrainOptions {
        steps: 12,
        batch_size: 3,
        seed: 17,
        ..Default::default()
    };
    let mut s1 = ModelState::init(small_config(vocab, 2)).unwrap();
    let log1 = train(&mut s1, &pool, &options, |_, _, _| {}).unwrap();
    let mut s2 = ModelState::init(small_config(vocab, 2)).unwrap();
    let log2 = train(&mut s2, &pool, &options, |_, _, _| {}).unwrap();
    assert_eq!(log1.records, log2.records);
    assert_eq!(s1, s2);
}

#[test]
fn huge_lambda_shrinks_parameter_norm_monotonically() {
    let (pool, vocab) = toy_pool(4, 3, 80);
    let mut state = ModelState::init(small_config(vocab, 3)).unwrap();
    // warm start: a couple of ordinary steps
    let warm = TrainOptions {
        steps: 2,
        batch_size: 2,
        seed: 1,
        optimizer: OptimizerKind::Sgd,
        learning_rate: 1e-4,
        lambda: 0.0,
        ..Default::default()
    };
    train(&mut state, &pool, &warm, |_, _, _| {}).unwrap();
    // with lambda = 1e6 and a matching step size the L2 term dominates
    let mut norms = vec![state.theta_norm()];
    for step in 0..10 {
        let crush = TrainOptions {
            steps: 1,
            batch_size: 2,
            seed: 100 + step,
            optimizer: OptimizerKind::Sgd,
            learning_rate: 1e-7,
            lambda: 1e6,
            ..Default::default()
        };
        train(&mut state, &pool, &crush, |_, _, _| {}).unwrap();
        norms.push(state.theta_norm());
    }
    for w in norms.windows(2) {
        assert!(w[1] < w[0], "norm not monotone: {norms:?}");
    }
}

#[test]
fn diverging_run_aborts_naming_component() {
    let (pool, vocab) = toy_pool(4, 3, 80);
    let mut state = ModelState::init(small_config(vocab, 4)).unwrap();
    let options = TrainOptions {
        steps: 40,
        batch_size: 2,
        seed: 2,
        optimizer: OptimizerKind::Sgd,
        learning_rate: 1e9,
        lambda: 0.0,
        ..Default::default()
    };
    match train(&mut state, &pool, &options, |_, _, _| {}) {
        Err(ModelError::NonFinite { component, .. }) => {
            assert!(["mvcl", "fgti", "mmlm", "l2", "parameters"].contains(&component));
        }
        other => panic!("expected a non-finite abort, got {other:?}"),
    }
}

#[test]
fn gradients_match_finite_differences_at_d8() {
    let (pool, vocab) = toy_pool(4, 7, 60);
    let batches = make_batches(pool, 2, 0).unwrap();
    let batch = &batches[0];
    let config = EncoderConfig {
        vocab_size: vocab,
        hidden: 8,
        layers: 1,
        heads: 2,
        feed_forward: 16,
        max_positions: 256,
        seed: 11,
        ..Default::default()
    };
    let state = ModelState::init(config).unwrap();
    let reports = grad_check(&state, batch, 3, 1e-4, 40, 99).unwrap();
    assert_eq!(reports.len(), 4);
    for report in &reports {
        assert!(
            report.max_rel_err < 1e-3,
            "{} gradient check failed: {}",
            report.component,
            report.max_rel_err
        );
    }
}

#[test]
fn short_pool_errors_instead_of_spinning() {
    let (pool, vocab) = toy_pool(2, 5, 60);
    let mut state = ModelState::init(small_config(vocab, 0)).unwrap();
    let options = TrainOptions { steps: 5, batch_size: 64, ..Default::default() };
    assert!(matches!(
        train(&mut state, &pool, &options, |_, _, _| {}),
        Err(ModelError::BadConfig(_))
    ));
}
