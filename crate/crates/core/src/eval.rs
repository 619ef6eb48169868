//! Retrieval evaluation: mean reciprocal rank and MAP@R over projected
//! `<CLS>` embeddings scored by raw dot product, matching the contrastive
//! training geometry.

use crate::model::{embed_sequence, ModelError, ModelState};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("query {0} has no relevant candidate in its pool")]
    NoRelevant(usize),
    #[error("query {0} has an empty candidate pool")]
    EmptyPool(usize),
    #[error("model error: {0}")]
    Model(#[from] ModelError),
}

/// One retrieval query: id sequences for the query and every pool
/// candidate, plus the indices of the relevant candidates.
#[derive(Debug, Clone)]
pub struct RetrievalQuery {
    pub query_ids: Vec<u32>,
    pub candidates: Vec<Vec<u32>>,
    pub relevant: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalResult {
    /// 1-based rank of the first relevant candidate, per query.
    pub first_relevant_rank: Vec<usize>,
    pub mrr: f64,
    /// Mean average precision at R (R = relevant count per query).
    pub map_at_r: f64,
    pub pool_size: usize,
}

/// Rank candidates for each query by dot product of projected embeddings
/// (descending; ties by candidate index) and fold into MRR and MAP@R.
pub fn eval_retrieval(
    state: &ModelState,
    queries: &[RetrievalQuery],
) -> Result<RetrievalResult, EvalError> {
    let mut ranks = Vec::with_capacity(queries.len());
    let mut ap_sum = 0.0;
    let mut pool_size = 0;
    for (qi, query) in queries.iter().enumerate() {
        if query.candidates.is_empty() {
            return Err(EvalError::EmptyPool(qi));
        }
        if query.relevant.is_empty() {
            return Err(EvalError::NoRelevant(qi));
        }
        let q = embed_sequence(state, &query.query_ids)?;
        let scores: Vec<f64> = query
            .candidates
            .iter()
            .map(|c| embed_sequence(state, c).map(|e| dot(&q, &e)))
            .collect::<Result<_, _>>()?;
        let order = ranking(&scores);
        let relevant: Vec<bool> = order.iter().map(|&i| query.relevant.contains(&i)).collect();
        let first = relevant
            .iter()
            .position(|&r| r)
            .expect("relevant indices are within the pool")
            + 1;
        ranks.push(first);
        ap_sum += average_precision_at_r(&relevant, query.relevant.len());
        pool_size = pool_size.max(query.candidates.len());
    }
    Ok(RetrievalResult {
        mrr: mrr_from_ranks(&ranks),
        map_at_r: ap_sum / queries.len() as f64,
        first_relevant_rank: ranks,
        pool_size,
    })
}

/// Candidate indices sorted by score descending, index ascending on ties.
pub fn ranking(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b].partial_cmp(&scores[a]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
    });
    order
}

pub fn mrr_from_ranks(ranks: &[usize]) -> f64 {
    assert!(!ranks.is_empty());
    ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / ranks.len() as f64
}

/// Average precision over the first `r` retrieved items:
/// `(1/r) * Σ_{k ≤ r, item_k relevant} precision@k`.
pub fn average_precision_at_r(relevant_in_rank_order: &[bool], r: usize) -> f64 {
    assert!(r > 0);
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (k, &rel) in relevant_in_rank_order.iter().take(r).enumerate() {
        if rel {
            hits += 1;
            sum += hits as f64 / (k + 1) as f64;
        }
    }
    sum / r as f64
}

/// Monte-Carlo baseline: MRR of random embeddings over `trials` queries
/// against pools of `pool_size` candidates.
pub fn random_embedding_baseline(pool_size: usize, trials: usize, dim: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sum = 0.0;
    for _ in 0..trials {
        let q: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut true_rank = 1usize;
        let true_score = {
            let c: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            dot(&q, &c)
        };
        for _ in 1..pool_size {
            let c: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            if dot(&q, &c) > true_score {
                true_rank += 1;
            }
        }
        sum += 1.0 / true_rank as f64;
    }
    sum / trials as f64
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
