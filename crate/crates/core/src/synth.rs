//! Synthetic paired corpus generator for smoke-scale training runs.
//!
//! Each sample draws a template and two distinct words from a fixed pool;
//! the words become parameter names and reappear in the comment, so a
//! correctly trained encoder can match held-out comments to programs by
//! shared subwords while the candidates still overlap pairwise.

use crate::corpus::CorpusRecord;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

const WORDS: &[&str] = &[
    "alpha", "bravo", "carbon", "delta", "ember", "falcon", "gamma", "harbor", "indigo",
    "jasper", "kelvin", "lumen", "meadow", "nickel", "onyx", "prism", "quartz", "ridge",
    "sierra", "topaz", "umber", "vortex", "willow", "xenon", "yonder", "zephyr",
];

struct Template {
    name: &'static str,
    body: fn(&str, &str) -> String,
    comment: fn(&str, &str) -> String,
}

const TEMPLATES: &[Template] = &[
    Template {
        name: "sum",
        body: |a, b| format!("def sum_{a}_{b}({a}, {b}):\n    return {a} + {b}\n"),
        comment: |a, b| format!("add {a} and {b}"),
    },
    Template {
        name: "diff",
        body: |a, b| format!("def diff_{a}_{b}({a}, {b}):\n    return {a} - {b}\n"),
        comment: |a, b| format!("subtract {b} from {a}"),
    },
    Template {
        name: "larger",
        body: |a, b| {
            format!(
                "def larger_{a}_{b}({a}, {b}):\n    if {a} > {b}:\n        return {a}\n    return {b}\n"
            )
        },
        comment: |a, b| format!("pick the larger of {a} and {b}"),
    },
    Template {
        name: "repeat",
        body: |a, b| {
            format!(
                "def repeat_{a}_{b}({a}, {b}):\n    total = 0\n    for step in range({a}):\n        total = total + {b}\n    return total\n"
            )
        },
        comment: |a, b| format!("multiply {a} by {b} using repeated addition"),
    },
    Template {
        name: "countdown",
        body: |a, b| {
            format!(
                "def countdown_{a}_{b}({a}, {b}):\n    count = 0\n    while {a} > {b}:\n        {a} = {a} - 1\n        count = count + 1\n    return count\n"
            )
        },
        comment: |a, b| format!("count the steps from {a} down to {b}"),
    },
];

/// Deterministic paired corpus of `count` distinct (template, word, word)
/// samples, each with oracle inputs for the transformation check.
pub fn synth_corpus(count: usize, seed: u64) -> Vec<CorpusRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = std::collections::BTreeSet::new();
    let mut records = Vec::with_capacity(count);
    let max_distinct = TEMPLATES.len() * WORDS.len() * (WORDS.len() - 1);
    assert!(count <= max_distinct, "at most {max_distinct} distinct samples");
    while records.len() < count {
        let t = rng.random_range(0..TEMPLATES.len());
        let a = rng.random_range(0..WORDS.len());
        let b = rng.random_range(0..WORDS.len());
        if a == b || !seen.insert((t, a, b)) {
            continue;
        }
        let template = &TEMPLATES[t];
        let (wa, wb) = (WORDS[a], WORDS[b]);
        records.push(CorpusRecord {
            code: (template.body)(wa, wb),
            nl: Some((template.comment)(wa, wb)),
            entry: Some(format!("{}_{wa}_{wb}", template.name)),
            inputs: Some(vec![
                vec![serde_json::json!(2), serde_json::json!(3)],
                vec![serde_json::json!(0), serde_json::json!(1)],
                vec![serde_json::json!(5), serde_json::json!(2)],
                vec![serde_json::json!(7), serde_json::json!(7)],
                vec![serde_json::json!(1), serde_json::json!(0)],
            ]),
        });
    }
    records
}
