//! Deterministic training loop and the finite-difference gradient checker.

use super::encoder::Forward;
use super::losses;
use super::tensor::Tensor;
use super::{ModelError, ModelState};
use crate::pairs::{apply_mlm_mask, make_batches, PositivePair, TrainingBatch};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OptimizerKind {
    /// Fixed-step gradient descent.
    Sgd,
    /// Adam-style adaptive per-parameter scaling.
    Adam,
}

impl OptimizerKind {
    pub fn parse(name: &str) -> Option<OptimizerKind> {
        match name {
            "sgd" => Some(OptimizerKind::Sgd),
            "adam" => Some(OptimizerKind::Adam),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub steps: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub mask_rate: f64,
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub lambda: f64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            steps: 300,
            batch_size: 8,
            seed: 0,
            mask_rate: 0.15,
            optimizer: OptimizerKind::Adam,
            learning_rate: 3e-3,
            lambda: 1e-5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub step: usize,
    pub mvcl: f64,
    pub fgti: f64,
    pub mmlm: f64,
    pub l2: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrainLog {
    pub records: Vec<LossRecord>,
    pub epochs_completed: usize,
    /// Batches whose type-labeled position set was empty.
    pub fgti_empty_batches: usize,
    /// Batches where the mask selected nothing.
    pub mmlm_empty_batches: usize,
}

struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    t: usize,
}

impl Optimizer {
    fn new(kind: OptimizerKind, lr: f64, state: &ModelState) -> Optimizer {
        let shapes: Vec<Tensor> = (0..state.param_count())
            .map(|i| Tensor::zeros(state.tensor(i).rows, state.tensor(i).cols))
            .collect();
        Optimizer { kind, lr, m: shapes.clone(), v: shapes, t: 0 }
    }

    fn step(&mut self, state: &mut ModelState, grads: &[Option<Tensor>], param_vars: &[usize]) {
        self.t += 1;
        match self.kind {
            OptimizerKind::Sgd => {
                for (i, &var) in param_vars.iter().enumerate() {
                    if let Some(g) = &grads[var] {
                        let p = state.tensor_mut(i);
                        for (pv, gv) in p.data.iter_mut().zip(&g.data) {
                            *pv -= self.lr * gv;
                        }
                    }
                }
            }
            OptimizerKind::Adam => {
                let (b1, b2, eps): (f64, f64, f64) = (0.9, 0.999, 1e-8);
                let bc1 = 1.0 - b1.powi(self.t as i32);
                let bc2 = 1.0 - b2.powi(self.t as i32);
                for (i, &var) in param_vars.iter().enumerate() {
                    if let Some(g) = &grads[var] {
                        let m = &mut self.m[i];
                        let v = &mut self.v[i];
                        let p = state.tensor_mut(i);
                        for k in 0..g.data.len() {
                            m.data[k] = b1 * m.data[k] + (1.0 - b1) * g.data[k];
                            v.data[k] = b2 * v.data[k] + (1.0 - b2) * g.data[k] * g.data[k];
                            let mh = m.data[k] / bc1;
                            let vh = v.data[k] / bc2;
                            p.data[k] -= self.lr * mh / (vh.sqrt() + eps);
                        }
                    }
                }
            }
        }
    }
}

/// Seeded first-order training over a positive-pair pool. Batches are
/// rebuilt per epoch with a derived seed; each step masks its anchors with
/// a per-step seed, builds the composite loss, and applies one optimizer
/// update. A non-finite component aborts with the component name. The
/// `on_epoch` callback fires once per completed epoch with the number of
/// steps taken so far (checkpointing).
pub fn train(
    state: &mut ModelState,
    pairs: &[PositivePair],
    options: &TrainOptions,
    mut on_epoch: impl FnMut(usize, usize, &ModelState),
) -> Result<TrainLog, ModelError> {
    let mut optimizer = Optimizer::new(options.optimizer, options.learning_rate, state);
    let mut log = TrainLog::default();
    let mut step = 0;
    let mut epoch = 0;
    while step < options.steps {
        let batches = make_batches(
            pairs.to_vec(),
            options.batch_size,
            options.seed.wrapping_add(epoch as u64),
        )
        .map_err(|e| ModelError::BadConfig(e.to_string()))?;
        if batches.is_empty() {
            return Err(ModelError::BadConfig(
                "pair pool yields no full batch at this batch size".into(),
            ));
        }
        for batch in &batches {
            if step >= options.steps {
                break;
            }
            let masked = apply_mlm_mask(
                batch,
                options.mask_rate,
                options.seed.wrapping_add(0x5eed).wrapping_add(step as u64),
            );
            let mut fwd = Forward::new(state);
            let loss = losses::total_loss(&mut fwd, batch, &masked, options.lambda)?;
            if let Some(component) = loss.non_finite_component() {
                return Err(ModelError::NonFinite { component, step });
            }
            if loss.fgti_positions == 0 {
                log.fgti_empty_batches += 1;
            }
            if loss.mmlm_positions == 0 {
                log.mmlm_empty_batches += 1;
            }
            let grads = fwd.graph.backward(loss.loss_var);
            let param_vars = fwd.param_vars().to_vec();
            drop(fwd);
            optimizer.step(state, &grads, &param_vars);
            if !state.all_finite() {
                return Err(ModelError::NonFinite { component: "parameters", step });
            }
            log.records.push(LossRecord {
                step,
                mvcl: loss.mvcl,
                fgti: loss.fgti,
                mmlm: loss.mmlm,
                l2: loss.l2,
                total: loss.total,
            });
            step += 1;
        }
        epoch += 1;
        log.epochs_completed = epoch;
        on_epoch(epoch, step, state);
    }
    Ok(log)
}

/// Loss value, per-node gradients, and the parameter leaf vars of the
/// forward pass that produced them.
type ComponentEval = (f64, Vec<Option<Tensor>>, Vec<usize>);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub component: String,
    pub checked: usize,
    pub max_rel_err: f64,
}

/// Verify analytic gradients of each loss component and the composite
/// against central finite differences (step `1e-4`) on `samples` uniformly
/// sampled parameters. Relative error uses a small absolute floor so
/// legitimately zero gradients compare cleanly.
pub fn grad_check(
    state: &ModelState,
    batch: &TrainingBatch,
    mask_seed: u64,
    lambda: f64,
    samples: usize,
    seed: u64,
) -> Result<Vec<GradCheckReport>, ModelError> {
    let masked = apply_mlm_mask(batch, 0.3, mask_seed);

    type LossFn<'a> = Box<dyn Fn(&ModelState) -> Result<ComponentEval, ModelError> + 'a>;
    let component_losses: Vec<(&str, LossFn)> = vec![
        (
            "mvcl",
            Box::new(|s: &ModelState| {
                let mut fwd = Forward::new(s);
                let v = losses::mvcl_loss(&mut fwd, batch)?;
                let value = fwd.graph.value(v).item();
                let grads = fwd.graph.backward(v);
                Ok((value, grads, fwd.param_vars().to_vec()))
            }),
        ),
        ("fgti", Box::new(|s: &ModelState| component_fgti(s, batch))),
        ("mmlm", Box::new(|s: &ModelState| component_mmlm(s, &masked))),
        (
            "total",
            Box::new(|s: &ModelState| {
                let mut fwd = Forward::new(s);
                let loss = losses::total_loss(&mut fwd, batch, &masked, lambda)?;
                let value = loss.total;
                let grads = fwd.graph.backward(loss.loss_var);
                Ok((value, grads, fwd.param_vars().to_vec()))
            }),
        ),
    ];

    let mut reports = Vec::new();
    for (name, loss_fn) in component_losses {
        let (_, grads, param_vars) = loss_fn(state)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut max_rel = 0.0f64;
        let h = 1e-4;
        for _ in 0..samples {
            let pi = rng.random_range(0..state.param_count());
            let slot = rng.random_range(0..state.tensor(pi).len());
            let analytic = grads[param_vars[pi]]
                .as_ref()
                .map(|g| g.data[slot])
                .unwrap_or(0.0);
            let mut plus = state.clone();
            plus.tensor_mut(pi).data[slot] += h;
            let mut minus = state.clone();
            minus.tensor_mut(pi).data[slot] -= h;
            let (vp, _, _) = loss_fn(&plus)?;
            let (vm, _, _) = loss_fn(&minus)?;
            let fd = (vp - vm) / (2.0 * h);
            let rel = (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(1e-6);
            if rel > max_rel {
                max_rel = rel;
            }
        }
        reports.push(GradCheckReport {
            component: name.to_string(),
            checked: samples,
            max_rel_err: max_rel,
        });
    }
    Ok(reports)
}

/// FGTI component in isolation (same encoding path as the composite).
fn component_fgti(
    state: &ModelState,
    batch: &TrainingBatch,
) -> Result<ComponentEval, ModelError> {
    use crate::typing::TypeLabel;
    let mut fwd = Forward::new(state);
    let mut rows = Vec::new();
    let mut targets = Vec::new();
    for anchor in &batch.anchors {
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
        let hidden = fwd.encode(&anchor.ids)?;
        targets.extend(positions.iter().map(|&p| anchor.labels[p].index()));
        rows.push(fwd.graph.gather_rows(hidden, &positions));
    }
    if rows.is_empty() {
        return Err(ModelError::BadConfig("grad-check batch has no labeled positions".into()));
    }
    let rows = fwd.graph.concat_rows(&rows);
    let logits = fwd.fgti_logits(rows);
    let ce = fwd.graph.cross_entropy_rows(logits, &targets);
    let mean = fwd.graph.mean_all(ce);
    let value = fwd.graph.value(mean).item();
    let grads = fwd.graph.backward(mean);
    Ok((value, grads, fwd.param_vars().to_vec()))
}

/// MMLM component in isolation (used by the gradient checker and tests).
fn component_mmlm(
    state: &ModelState,
    masked: &crate::pairs::MaskedBatch,
) -> Result<ComponentEval, ModelError> {
    let mut fwd = Forward::new(state);
    let mut rows = Vec::new();
    let mut targets = Vec::new();
    for (i, ids) in masked.ids.iter().enumerate() {
        let positions: Vec<usize> = masked
            .positions
            .iter()
            .filter(|(s, _)| *s == i)
            .map(|(_, p)| *p)
            .collect();
        if positions.is_empty() {
            continue;
        }
        let hidden = fwd.encode(ids)?;
        targets.extend(
            masked
                .positions
                .iter()
                .zip(&masked.originals)
                .filter(|((s, _), _)| *s == i)
                .map(|(_, &orig)| orig as usize),
        );
        rows.push(fwd.graph.gather_rows(hidden, &positions));
    }
    if rows.is_empty() {
        return Err(ModelError::BadConfig("grad-check mask selected no positions".into()));
    }
    let rows = fwd.graph.concat_rows(&rows);
    let logits = fwd.mmlm_logits(rows);
    let ce = fwd.graph.cross_entropy_rows(logits, &targets);
    let mean = fwd.graph.mean_all(ce);
    let value = fwd.graph.value(mean).item();
    let grads = fwd.graph.backward(mean);
    Ok((value, grads, fwd.param_vars().to_vec()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::losses;
    use crate::model::EncoderConfig;
    use crate::pairs::{InputForm, InputSequence, MaskedBatch, TrainingBatch, PairCombination};
    use crate::typing::{TypeLabel, CLS_ID};

    fn seq(id: &str, ids: Vec<u32>, labels: Vec<TypeLabel>) -> InputSequence {
        InputSequence {
            sample_id: id.into(),
            form: InputForm::Single,
            views: (crate::pairs::ViewKind::Pl, None),
            ids,
            labels,
        }
    }

    fn toy_batch() -> TrainingBatch {
        use TypeLabel::*;
        TrainingBatch::new(
            PairCombination::PlAst,
            vec![
                seq("a", vec![CLS_ID, 10, 11, 12], vec![O, Int, Float, O]),
                seq("b", vec![CLS_ID, 13, 14, 15], vec![O, Int, O, Str]),
            ],
            vec![
                seq("a", vec![CLS_ID, 16, 17], vec![O, O, O]),
                seq("b", vec![CLS_ID, 18, 19], vec![O, O, O]),
            ],
        )
        .unwrap()
    }

    fn toy_state(vocab: usize, seed: u64) -> ModelState {
        ModelState::init(EncoderConfig {
            vocab_size: vocab,
            hidden: 8,
            layers: 1,
            heads: 2,
            feed_forward: 16,
            max_positions: 16,
            seed,
            ..Default::default()
        })
        .unwrap()
    }

    fn zero_head(state: &mut ModelState, w: &str, b: &str) {
        for name in [w, b] {
            for v in &mut state.by_name_mut(name).unwrap().data {
                *v = 0.0;
            }
        }
    }

    #[test]
    fn fgti_uniform_predictions_give_ln_class_count() {
        let mut state = toy_state(32, 3);
        zero_head(&mut state, "fgti.w", "fgti.b");
        let batch = toy_batch();
        let (value, _, _) = component_fgti(&state, &batch).unwrap();
        let expected = (crate::typing::TYPE_CLASS_COUNT as f64).ln(); // ln 10
        assert!((value - expected).abs() < 1e-12, "{value} vs {expected}");
    }

    #[test]
    fn fgti_perfect_prediction_loss_vanishes() {
        let mut state = toy_state(32, 3);
        zero_head(&mut state, "fgti.w", "fgti.b");
        // single labeled class with a +20 logit margin on the bias
        let bias = state.by_name_mut("fgti.b").unwrap();
        bias.data[TypeLabel::Int.index()] = 20.0;
        use TypeLabel::*;
        let batch = TrainingBatch::new(
            PairCombination::PlAst,
            vec![
                seq("a", vec![CLS_ID, 10, 11], vec![O, Int, Int]),
                seq("b", vec![CLS_ID, 12, 13], vec![O, Int, O]),
            ],
            vec![
                seq("a", vec![CLS_ID, 14], vec![O, O]),
                seq("b", vec![CLS_ID, 15], vec![O, O]),
            ],
        )
        .unwrap();
        let (value, _, _) = component_fgti(&state, &batch).unwrap();
        assert!(value <= 1e-6, "loss {value} should vanish at margin 20");
    }

    #[test]
    fn mmlm_uniform_predictions_give_ln_vocab() {
        let mut state = toy_state(100, 4);
        zero_head(&mut state, "mmlm.w", "mmlm.b");
        let batch = toy_batch();
        let masked = MaskedBatch {
            ids: batch.anchors.iter().map(|a| a.ids.clone()).collect(),
            positions: vec![(0, 1), (0, 2), (1, 3)],
            originals: vec![10, 11, 15],
        };
        let (value, _, _) = component_mmlm(&state, &masked).unwrap();
        let expected = 100.0f64.ln();
        assert!((value - expected).abs() < 1e-12, "{value} vs {expected}");
    }

    #[test]
    fn mmlm_ignores_unmasked_positions() {
        let state = toy_state(100, 4);
        let batch = toy_batch();
        let masked = MaskedBatch {
            ids: batch.anchors.iter().map(|a| a.ids.clone()).collect(),
            positions: vec![(0, 1)],
            originals: vec![10],
        };
        let (base, _, _) = component_mmlm(&state, &masked).unwrap();
        // sequence 1 has no masked position, so its content is invisible
        // to the loss: only positions inside M enter the sum
        let mut other = masked.clone();
        other.ids[1][2] = 31;
        let (changed, _, _) = component_mmlm(&state, &other).unwrap();
        assert_eq!(base, changed);
    }

    #[test]
    fn total_is_exact_sum_at_lambda_zero() {
        let state = toy_state(32, 5);
        let batch = toy_batch();
        let masked = crate::pairs::apply_mlm_mask(&batch, 0.4, 9);
        let mut fwd = Forward::new(&state);
        let loss = losses::total_loss(&mut fwd, &batch, &masked, 0.0).unwrap();
        let sum = loss.mvcl + loss.fgti + loss.mmlm;
        assert!((loss.total - sum).abs() < 1e-12, "{} vs {sum}", loss.total);
    }

    #[test]
    fn lambda_one_adds_exactly_theta_norm_squared() {
        let state = toy_state(32, 6);
        let batch = toy_batch();
        let masked = crate::pairs::apply_mlm_mask(&batch, 0.4, 9);
        let mut fwd = Forward::new(&state);
        let loss = losses::total_loss(&mut fwd, &batch, &masked, 1.0).unwrap();
        let sum = loss.mvcl + loss.fgti + loss.mmlm;
        let norm_sq = state.theta_norm().powi(2);
        assert!(
            ((loss.total - sum) - norm_sq).abs() < 1e-9 * norm_sq.max(1.0),
            "residual {} vs theta^2 {norm_sq}",
            loss.total - sum
        );
        assert!((loss.l2 - norm_sq).abs() < 1e-9 * norm_sq.max(1.0));
    }
}
