//! Model-input assembly: single and dual input forms, the eight positive
//! pair combinations, view-homogeneous batches with implicit 2n−2 negatives
//! per anchor, and masked-language-model masking.

use crate::typing::{BpeModel, TypeLabel, CLS_ID, MASK_ID, PAD_ID, SEP_ID, SPECIAL_TOKENS};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Longest single-form input including the leading `<CLS>`.
pub const SINGLE_MAX_LEN: usize = 512;
/// Subtoken budget for the NL segment of a dual input.
pub const NL_SEGMENT_MAX: usize = 96;
/// Subtoken budget for the second segment of a dual input.
pub const SECOND_SEGMENT_MAX: usize = 416;

/// Ids below this are special tokens (`<PAD>`, `<UNK>`, `<CLS>`, `<SEP>`,
/// `<MASK>`, `<blk>`) and are never masked.
pub const SPECIAL_ID_COUNT: u32 = SPECIAL_TOKENS.len() as u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ViewKind {
    Nl,
    Pl,
    Ast,
    Cfg,
    Pt,
}

impl ViewKind {
    pub fn name(self) -> &'static str {
        match self {
            ViewKind::Nl => "NL",
            ViewKind::Pl => "PL",
            ViewKind::Ast => "AST",
            ViewKind::Cfg => "CFG",
            ViewKind::Pt => "PT",
        }
    }

    pub fn from_name(name: &str) -> Option<ViewKind> {
        match name {
            "NL" => Some(ViewKind::Nl),
            "PL" => Some(ViewKind::Pl),
            "AST" => Some(ViewKind::Ast),
            "CFG" => Some(ViewKind::Cfg),
            "PT" => Some(ViewKind::Pt),
            _ => None,
        }
    }
}

/// One view of one sample after subword tokenization. Labels parallel the
/// subtokens; non-identifier and NL positions carry `O`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ViewRecord {
    pub sample_id: String,
    pub view: ViewKind,
    pub subtokens: Vec<String>,
    pub sublabels: Vec<TypeLabel>,
    /// Transformation seed for PT records.
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InputForm {
    Single,
    Dual,
}

/// One encoder input: ids starting with `<CLS>`, a dual form containing
/// exactly one `<SEP>`, and per-position labels for the type-inference head.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InputSequence {
    pub sample_id: String,
    pub form: InputForm,
    pub views: (ViewKind, Option<ViewKind>),
    pub ids: Vec<u32>,
    pub labels: Vec<TypeLabel>,
}

impl InputSequence {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Positions eligible for masking: non-special, non-pad.
    pub fn maskable_positions(&self) -> Vec<usize> {
        self.ids
            .iter()
            .enumerate()
            .filter(|(_, &id)| id >= SPECIAL_ID_COUNT)
            .map(|(i, _)| i)
            .collect()
    }

    fn pad_to(&mut self, len: usize) {
        while self.ids.len() < len {
            self.ids.push(PAD_ID);
            self.labels.push(TypeLabel::O);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PairError {
    #[error("empty view record for sample {0}")]
    EmptyRecord(String),
    #[error("sample-id mismatch: {nl} vs {other}")]
    SampleMismatch { nl: String, other: String },
    #[error("dual input requires an NL first view, got {0}")]
    NlRequired(String),
    #[error("missing required view {0} for sample {1}")]
    MissingView(&'static str, String),
    #[error("batch size must be at least 2, got {0}")]
    BatchTooSmall(usize),
}

/// `[<CLS>] + subtokens`, truncated to [`SINGLE_MAX_LEN`]. Padding to the
/// batch maximum happens at batch assembly.
pub fn assemble_single(rec: &ViewRecord, bpe: &BpeModel) -> Result<InputSequence, PairError> {
    if rec.subtokens.is_empty() {
        return Err(PairError::EmptyRecord(rec.sample_id.clone()));
    }
    let take = rec.subtokens.len().min(SINGLE_MAX_LEN - 1);
    let mut ids = Vec::with_capacity(take + 1);
    let mut labels = Vec::with_capacity(take + 1);
    ids.push(CLS_ID);
    labels.push(TypeLabel::O);
    for (sub, label) in rec.subtokens.iter().zip(&rec.sublabels).take(take) {
        ids.push(bpe.subtoken_id(sub));
        labels.push(*label);
    }
    Ok(InputSequence {
        sample_id: rec.sample_id.clone(),
        form: InputForm::Single,
        views: (rec.view, None),
        ids,
        labels,
    })
}

/// `[<CLS>] + NL (≤96) + [<SEP>] + second view (≤416)`.
pub fn assemble_dual(
    nl: &ViewRecord,
    rec: &ViewRecord,
    bpe: &BpeModel,
) -> Result<InputSequence, PairError> {
    if nl.view != ViewKind::Nl {
        return Err(PairError::NlRequired(nl.view.name().to_string()));
    }
    if nl.sample_id != rec.sample_id {
        return Err(PairError::SampleMismatch {
            nl: nl.sample_id.clone(),
            other: rec.sample_id.clone(),
        });
    }
    if nl.subtokens.is_empty() {
        return Err(PairError::EmptyRecord(nl.sample_id.clone()));
    }
    if rec.subtokens.is_empty() {
        return Err(PairError::EmptyRecord(rec.sample_id.clone()));
    }
    let mut ids = vec![CLS_ID];
    let mut labels = vec![TypeLabel::O];
    for (sub, label) in nl.subtokens.iter().zip(&nl.sublabels).take(NL_SEGMENT_MAX) {
        ids.push(bpe.subtoken_id(sub));
        labels.push(*label);
    }
    ids.push(SEP_ID);
    labels.push(TypeLabel::O);
    for (sub, label) in rec.subtokens.iter().zip(&rec.sublabels).take(SECOND_SEGMENT_MAX) {
        ids.push(bpe.subtoken_id(sub));
        labels.push(*label);
    }
    Ok(InputSequence {
        sample_id: rec.sample_id.clone(),
        form: InputForm::Dual,
        views: (ViewKind::Nl, Some(rec.view)),
        ids,
        labels,
    })
}

/// The eight positive-pair combinations: five single-view, three dual-view
/// with the NL segment frozen in place.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PairCombination {
    NlPl,
    NlPt,
    PlAst,
    PlCfg,
    PlPt,
    DualNlAst,
    DualNlCfg,
    DualNlPt,
}

impl PairCombination {
    pub const ALL: [PairCombination; 8] = [
        PairCombination::NlPl,
        PairCombination::NlPt,
        PairCombination::PlAst,
        PairCombination::PlCfg,
        PairCombination::PlPt,
        PairCombination::DualNlAst,
        PairCombination::DualNlCfg,
        PairCombination::DualNlPt,
    ];

    /// Does the combination involve the given view on either side?
    pub fn uses_view(self, view: ViewKind) -> bool {
        let (a, b) = match self {
            PairCombination::NlPl => (ViewKind::Nl, ViewKind::Pl),
            PairCombination::NlPt => (ViewKind::Nl, ViewKind::Pt),
            PairCombination::PlAst => (ViewKind::Pl, ViewKind::Ast),
            PairCombination::PlCfg => (ViewKind::Pl, ViewKind::Cfg),
            PairCombination::PlPt => (ViewKind::Pl, ViewKind::Pt),
            PairCombination::DualNlAst => (ViewKind::Nl, ViewKind::Ast),
            PairCombination::DualNlCfg => (ViewKind::Nl, ViewKind::Cfg),
            PairCombination::DualNlPt => (ViewKind::Nl, ViewKind::Pt),
        };
        a == view || b == view || (matches!(self, PairCombination::DualNlAst | PairCombination::DualNlCfg | PairCombination::DualNlPt) && view == ViewKind::Pl)
    }
}

/// All views of one sample; `nl` present only for paired samples.
#[derive(Debug, Clone)]
pub struct SampleViews {
    pub pl: ViewRecord,
    pub ast: ViewRecord,
    pub cfg: ViewRecord,
    pub pt: ViewRecord,
    pub nl: Option<ViewRecord>,
}

pub type PositivePair = (PairCombination, InputSequence, InputSequence);

/// Construct the positive pairs of one sample: all eight combinations for
/// paired samples, the three NL-free single-view combinations otherwise.
pub fn make_positive_pairs(
    views: &SampleViews,
    bpe: &BpeModel,
) -> Result<Vec<PositivePair>, PairError> {
    let pl = assemble_single(&views.pl, bpe)?;
    let ast = assemble_single(&views.ast, bpe)?;
    let cfg = assemble_single(&views.cfg, bpe)?;
    let pt = assemble_single(&views.pt, bpe)?;
    let mut pairs = Vec::new();
    match &views.nl {
        Some(nl_rec) => {
            let nl = assemble_single(nl_rec, bpe)?;
            pairs.push((PairCombination::NlPl, nl.clone(), pl.clone()));
            pairs.push((PairCombination::NlPt, nl.clone(), pt.clone()));
            pairs.push((PairCombination::PlAst, pl.clone(), ast.clone()));
            pairs.push((PairCombination::PlCfg, pl.clone(), cfg.clone()));
            pairs.push((PairCombination::PlPt, pl.clone(), pt.clone()));
            let dual_pl = assemble_dual(nl_rec, &views.pl, bpe)?;
            let dual_ast = assemble_dual(nl_rec, &views.ast, bpe)?;
            let dual_cfg = assemble_dual(nl_rec, &views.cfg, bpe)?;
            let dual_pt = assemble_dual(nl_rec, &views.pt, bpe)?;
            pairs.push((PairCombination::DualNlAst, dual_pl.clone(), dual_ast));
            pairs.push((PairCombination::DualNlCfg, dual_pl.clone(), dual_cfg));
            pairs.push((PairCombination::DualNlPt, dual_pl, dual_pt));
        }
        None => {
            pairs.push((PairCombination::PlAst, pl.clone(), ast));
            pairs.push((PairCombination::PlCfg, pl.clone(), cfg));
            pairs.push((PairCombination::PlPt, pl, pt));
        }
    }
    Ok(pairs)
}

/// A view-homogeneous contrastive batch: `n` anchors aligned with `n`
/// positives over distinct sample-ids. For anchor `i` the negatives are
/// implicit: the other `n−1` anchors (intra-view) plus the other `n−1`
/// positives (inter-view).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainingBatch {
    pub combination: PairCombination,
    pub anchors: Vec<InputSequence>,
    pub positives: Vec<InputSequence>,
}

impl TrainingBatch {
    pub fn new(
        combination: PairCombination,
        mut anchors: Vec<InputSequence>,
        mut positives: Vec<InputSequence>,
    ) -> Result<TrainingBatch, PairError> {
        if anchors.len() < 2 || anchors.len() != positives.len() {
            return Err(PairError::BatchTooSmall(anchors.len()));
        }
        let a_max = anchors.iter().map(InputSequence::len).max().unwrap();
        let p_max = positives.iter().map(InputSequence::len).max().unwrap();
        for a in &mut anchors {
            a.pad_to(a_max);
        }
        for p in &mut positives {
            p.pad_to(p_max);
        }
        Ok(TrainingBatch { combination, anchors, positives })
    }

    pub fn size(&self) -> usize {
        self.anchors.len()
    }

    /// Negative sets for anchor `i`: `(intra-view, inter-view)`, each of
    /// size `n−1`.
    pub fn negatives_of(&self, i: usize) -> (Vec<&InputSequence>, Vec<&InputSequence>) {
        let intra = self
            .anchors
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, s)| s)
            .collect();
        let inter = self
            .positives
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, s)| s)
            .collect();
        (intra, inter)
    }
}

/// Seeded shuffle of the pair stream into view-homogeneous batches of `n`
/// distinct sample-ids; the final short batch of each combination is
/// dropped. The resulting batch list is itself shuffled so combinations
/// interleave during training.
pub fn make_batches(
    pairs: Vec<PositivePair>,
    n: usize,
    seed: u64,
) -> Result<Vec<TrainingBatch>, PairError> {
    if n < 2 {
        return Err(PairError::BatchTooSmall(n));
    }
    let mut by_combination: std::collections::BTreeMap<PairCombination, Vec<PositivePair>> =
        std::collections::BTreeMap::new();
    for pair in pairs {
        by_combination.entry(pair.0).or_default().push(pair);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut batches = Vec::new();
    for (combination, mut group) in by_combination {
        shuffle(&mut group, &mut rng);
        let mut pending: Vec<PositivePair> = Vec::new();
        let mut used: std::collections::BTreeSet<String> = std::collections::BTreeSet::new();
        let mut carry: Vec<PositivePair> = Vec::new();
        for pair in group {
            if used.contains(&pair.1.sample_id) {
                carry.push(pair);
            } else {
                used.insert(pair.1.sample_id.clone());
                pending.push(pair);
            }
            if pending.len() == n {
                let anchors = pending.iter().map(|p| p.1.clone()).collect();
                let positives = pending.iter().map(|p| p.2.clone()).collect();
                batches.push(TrainingBatch::new(combination, anchors, positives)?);
                pending.clear();
                used.clear();
                // duplicates held back earlier become eligible again
                let retry = std::mem::take(&mut carry);
                for pair in retry {
                    if used.contains(&pair.1.sample_id) {
                        carry.push(pair);
                    } else {
                        used.insert(pair.1.sample_id.clone());
                        pending.push(pair);
                        if pending.len() == n {
                            let anchors = pending.iter().map(|p| p.1.clone()).collect();
                            let positives = pending.iter().map(|p| p.2.clone()).collect();
                            batches.push(TrainingBatch::new(combination, anchors, positives)?);
                            pending.clear();
                            used.clear();
                        }
                    }
                }
            }
        }
        // anything left is a short batch: dropped
    }
    shuffle(&mut batches, &mut rng);
    Ok(batches)
}

fn shuffle<T>(items: &mut [T], rng: &mut ChaCha8Rng) {
    for i in (1..items.len()).rev() {
        let j = rng.random_range(0..=i);
        items.swap(i, j);
    }
}

/// A batch's anchor side after masking: `<MASK>` substituted at the chosen
/// positions, originals kept as prediction targets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskedBatch {
    pub ids: Vec<Vec<u32>>,
    /// (sequence index, position) of every masked token.
    pub positions: Vec<(usize, usize)>,
    /// Original ids, parallel to `positions`.
    pub originals: Vec<u32>,
}

impl MaskedBatch {
    pub fn masked_count(&self) -> usize {
        self.positions.len()
    }
}

/// Independently mask each maskable anchor position with probability
/// `rate`. Special tokens and padding are never selected.
pub fn apply_mlm_mask(batch: &TrainingBatch, rate: f64, seed: u64) -> MaskedBatch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ids: Vec<Vec<u32>> = batch.anchors.iter().map(|a| a.ids.clone()).collect();
    let mut positions = Vec::new();
    let mut originals = Vec::new();
    for (s, anchor) in batch.anchors.iter().enumerate() {
        for pos in anchor.maskable_positions() {
            if rng.random::<f64>() < rate {
                positions.push((s, pos));
                originals.push(ids[s][pos]);
                ids[s][pos] = MASK_ID;
            }
        }
    }
    MaskedBatch { ids, positions, originals }
}
