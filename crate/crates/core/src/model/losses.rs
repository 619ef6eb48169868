//! The four loss components: the contrastive pair loss over raw dot
//! products with in-batch negatives, its batch form (both directions per
//! pair), token-level cross-entropies for the type-inference and MLM heads,
//! and the L2 term. Each has a pure slow-path reference used by the tests.

use super::encoder::Forward;
use super::graph::Var;
use super::{ModelError, ModelState};
use crate::pairs::{MaskedBatch, TrainingBatch};
use crate::typing::TypeLabel;

/// Contrastive loss for a single positive pair against an explicit negative
/// set, computed with max-subtraction:
/// `−ln( exp(a·b) / (exp(a·b) + Σ_k exp(a·n_k)) )`.
pub fn pair_loss(anchor: &[f64], positive: &[f64], negatives: &[Vec<f64>]) -> f64 {
    let dot = |x: &[f64], y: &[f64]| -> f64 { x.iter().zip(y).map(|(a, b)| a * b).sum() };
    let pos = dot(anchor, positive);
    let mut logits = Vec::with_capacity(negatives.len() + 1);
    logits.push(pos);
    for n in negatives {
        logits.push(dot(anchor, n));
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    lse - pos
}

/// Naive reference for the batch contrastive loss: explicit negative sets,
/// double loop, both pair directions, mean over anchors. The vectorized
/// implementation must match this to 1e-10.
pub fn mvcl_reference(anchors: &[Vec<f64>], positives: &[Vec<f64>]) -> f64 {
    let n = anchors.len();
    assert!(n >= 2 && positives.len() == n);
    let mut total = 0.0;
    for i in 0..n {
        let negatives_ab: Vec<Vec<f64>> = (0..n)
            .filter(|&j| j != i)
            .map(|j| anchors[j].clone())
            .chain((0..n).filter(|&j| j != i).map(|j| positives[j].clone()))
            .collect();
        let negatives_ba: Vec<Vec<f64>> = (0..n)
            .filter(|&j| j != i)
            .map(|j| positives[j].clone())
            .chain((0..n).filter(|&j| j != i).map(|j| anchors[j].clone()))
            .collect();
        total += pair_loss(&anchors[i], &positives[i], &negatives_ab);
        total += pair_loss(&positives[i], &anchors[i], &negatives_ba);
    }
    total / n as f64
}

/// Scalar components of one batch loss, plus the tape variable for the
/// composite so callers can run backward on it.
#[derive(Debug, Clone)]
pub struct BatchLoss {
    pub loss_var: Var,
    pub mvcl: f64,
    pub fgti: f64,
    pub mmlm: f64,
    pub l2: f64,
    pub total: f64,
    /// |Z|: labeled positions feeding the type-inference head.
    pub fgti_positions: usize,
    /// |M|: masked positions feeding the MLM head.
    pub mmlm_positions: usize,
}

impl BatchLoss {
    /// Name of the first non-finite component, if any.
    pub fn non_finite_component(&self) -> Option<&'static str> {
        if !self.mvcl.is_finite() {
            return Some("mvcl");
        }
        if !self.fgti.is_finite() {
            return Some("fgti");
        }
        if !self.mmlm.is_finite() {
            return Some("mmlm");
        }
        if !self.l2.is_finite() {
            return Some("l2");
        }
        None
    }
}

/// Encode one batch and build the full objective
/// `L = L_MVCL + L_FGTI + L_MMLM + λ‖Θ‖²` on the forward tape.
///
/// Anchors are encoded from their masked ids; the same hidden states feed
/// the contrastive head (via `<CLS>`), the type-inference head (labeled
/// positions), and the MLM head (masked positions). Positives are encoded
/// clean. An empty position set contributes zero for that component.
pub fn total_loss(
    fwd: &mut Forward,
    batch: &TrainingBatch,
    masked: &MaskedBatch,
    lambda: f64,
) -> Result<BatchLoss, ModelError> {
    let n = batch.size();
    let mut anchor_hiddens = Vec::with_capacity(n);
    let mut anchor_cls = Vec::with_capacity(n);
    for ids in &masked.ids {
        let hidden = fwd.encode(ids)?;
        anchor_hiddens.push(hidden);
        anchor_cls.push(fwd.graph.gather_rows(hidden, &[0]));
    }
    let mut positive_cls = Vec::with_capacity(n);
    for positive in &batch.positives {
        let hidden = fwd.encode(&positive.ids)?;
        positive_cls.push(fwd.graph.gather_rows(hidden, &[0]));
    }

    // MVCL over projected CLS vectors, both directions
    let a_rows = fwd.graph.concat_rows(&anchor_cls);
    let b_rows = fwd.graph.concat_rows(&positive_cls);
    let va = fwd.project_rows(a_rows);
    let vb = fwd.project_rows(b_rows);
    let l_ab = fwd.graph.info_nce_rows(va, vb);
    let l_ba = fwd.graph.info_nce_rows(vb, va);
    let both = fwd.graph.add(l_ab, l_ba);
    let mvcl = fwd.graph.mean_all(both);

    // FGTI over labeled anchor positions
    let mut fgti_rows = Vec::new();
    let mut fgti_targets = Vec::new();
    for (i, anchor) in batch.anchors.iter().enumerate() {
        let positions: Vec<usize> = anchor
            .labels
            .iter()
            .enumerate()
            .filter(|(_, l)| **l != TypeLabel::O)
            .map(|(p, _)| p)
            .collect();
        if positions.is_empty() {
            continue;
        }
        fgti_targets.extend(positions.iter().map(|&p| anchor.labels[p].index()));
        fgti_rows.push(fwd.graph.gather_rows(anchor_hiddens[i], &positions));
    }
    let fgti = if fgti_rows.is_empty() {
        None
    } else {
        let rows = fwd.graph.concat_rows(&fgti_rows);
        let logits = fwd.fgti_logits(rows);
        let ce = fwd.graph.cross_entropy_rows(logits, &fgti_targets);
        Some(fwd.graph.mean_all(ce))
    };
    let fgti_positions = fgti_targets.len();

    // MMLM over masked anchor positions
    let mmlm = if masked.positions.is_empty() {
        None
    } else {
        let mut rows = Vec::new();
        let mut targets = Vec::new();
        for (i, _) in batch.anchors.iter().enumerate() {
            let positions: Vec<usize> = masked
                .positions
                .iter()
                .zip(&masked.originals)
                .filter(|((s, _), _)| *s == i)
                .map(|((_, p), _)| *p)
                .collect();
            if positions.is_empty() {
                continue;
            }
            targets.extend(
                masked
                    .positions
                    .iter()
                    .zip(&masked.originals)
                    .filter(|((s, _), _)| *s == i)
                    .map(|(_, &orig)| orig as usize),
            );
            rows.push(fwd.graph.gather_rows(anchor_hiddens[i], &positions));
        }
        let rows = fwd.graph.concat_rows(&rows);
        let logits = fwd.mmlm_logits(rows);
        let ce = fwd.graph.cross_entropy_rows(logits, &targets);
        Some(fwd.graph.mean_all(ce))
    };
    let mmlm_positions = masked.positions.len();

    let l2 = fwd.l2_term();
    let l2_scaled = fwd.graph.scale(l2, lambda);

    let mut total = mvcl;
    if let Some(f) = fgti {
        total = fwd.graph.add(total, f);
    }
    if let Some(m) = mmlm {
        total = fwd.graph.add(total, m);
    }
    total = fwd.graph.add(total, l2_scaled);

    Ok(BatchLoss {
        loss_var: total,
        mvcl: fwd.graph.value(mvcl).item(),
        fgti: fgti.map_or(0.0, |f| fwd.graph.value(f).item()),
        mmlm: mmlm.map_or(0.0, |m| fwd.graph.value(m).item()),
        l2: fwd.graph.value(l2).item(),
        total: fwd.graph.value(total).item(),
        fgti_positions,
        mmlm_positions,
    })
}

/// The contrastive component alone over clean (unmasked) inputs.
pub fn mvcl_loss(fwd: &mut Forward, batch: &TrainingBatch) -> Result<Var, ModelError> {
    let mut anchor_cls = Vec::new();
    for anchor in &batch.anchors {
        let hidden = fwd.encode(&anchor.ids)?;
        anchor_cls.push(fwd.graph.gather_rows(hidden, &[0]));
    }
    let mut positive_cls = Vec::new();
    for positive in &batch.positives {
        let hidden = fwd.encode(&positive.ids)?;
        positive_cls.push(fwd.graph.gather_rows(hidden, &[0]));
    }
    let a_rows = fwd.graph.concat_rows(&anchor_cls);
    let b_rows = fwd.graph.concat_rows(&positive_cls);
    let va = fwd.project_rows(a_rows);
    let vb = fwd.project_rows(b_rows);
    let l_ab = fwd.graph.info_nce_rows(va, vb);
    let l_ba = fwd.graph.info_nce_rows(vb, va);
    let both = fwd.graph.add(l_ab, l_ba);
    Ok(fwd.graph.mean_all(both))
}

/// Scalar MVCL value of a batch under the given state.
pub fn mvcl_value(state: &ModelState, batch: &TrainingBatch) -> Result<f64, ModelError> {
    let mut fwd = Forward::new(state);
    let v = mvcl_loss(&mut fwd, batch)?;
    Ok(fwd.graph.value(v).item())
}
