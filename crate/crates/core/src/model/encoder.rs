//! Forward-pass builders: pre-norm transformer encoder with pad-masked
//! attention, the two-layer projection head, and the classifier heads.

use super::graph::{Graph, Var};
use super::{ModelError, ModelState};
use crate::typing::PAD_ID;

const LN_EPS: f64 = 1e-5;

/// One forward construction over a model state: registers every parameter
/// as a graph leaf, then builds encodings and losses on the same tape so a
/// single backward pass yields all gradients.
pub struct Forward<'m> {
    pub graph: Graph,
    state: &'m ModelState,
    param_vars: Vec<Var>,
}

impl<'m> Forward<'m> {
    pub fn new(state: &'m ModelState) -> Forward<'m> {
        let mut graph = Graph::new();
        let param_vars =
            (0..state.param_count()).map(|i| graph.param(state.tensor(i).clone())).collect();
        Forward { graph, state, param_vars }
    }

    /// Graph leaves in parameter order; index-aligned with
    /// `ModelState::tensor`.
    pub fn param_vars(&self) -> &[Var] {
        &self.param_vars
    }

    pub fn param(&self, name: &str) -> Var {
        let i = (0..self.state.param_count())
            .find(|&i| self.state.name(i) == name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"));
        self.param_vars[i]
    }

    /// Hidden states for one id sequence: token + position embeddings
    /// through `L` pre-norm layers and a final layer norm. `<PAD>` key
    /// positions are masked out of every attention row.
    pub fn encode(&mut self, ids: &[u32]) -> Result<Var, ModelError> {
        let config = &self.state.config;
        if ids.is_empty() {
            return Err(ModelError::EmptyInput);
        }
        if ids.len() > config.max_positions {
            return Err(ModelError::TooLong { len: ids.len(), max: config.max_positions });
        }
        if let Some(&bad) = ids.iter().find(|&&id| id as usize >= config.vocab_size) {
            return Err(ModelError::IdOutOfRange { id: bad, vocab: config.vocab_size });
        }
        let indices: Vec<usize> = ids.iter().map(|&id| id as usize).collect();
        let positions: Vec<usize> = (0..ids.len()).collect();
        let token_table = self.param("token_embedding");
        let position_table = self.param("position_embedding");
        let tok = self.graph.gather_rows(token_table, &indices);
        let pos = self.graph.gather_rows(position_table, &positions);
        let mut x = self.graph.add(tok, pos);

        let pad_mask: Vec<bool> = ids.iter().map(|&id| id == PAD_ID).collect();
        let mask = if pad_mask.iter().any(|&m| m) { Some(pad_mask) } else { None };

        for l in 0..config.layers {
            x = self.encoder_layer(x, l, &mask);
        }
        let gamma = self.param("final_ln.gamma");
        let beta = self.param("final_ln.beta");
        Ok(self.graph.layer_norm(x, gamma, beta, LN_EPS))
    }

    fn encoder_layer(&mut self, x: Var, layer: usize, mask: &Option<Vec<bool>>) -> Var {
        let config = &self.state.config;
        let d = config.hidden;
        let heads = config.heads;
        let dh = d / heads;

        let ln1_g = self.param(&format!("layer{layer}.ln1.gamma"));
        let ln1_b = self.param(&format!("layer{layer}.ln1.beta"));
        let xn = self.graph.layer_norm(x, ln1_g, ln1_b, LN_EPS);

        let q = self.affine(xn, &format!("layer{layer}.attn.wq"), &format!("layer{layer}.attn.bq"));
        let k = self.affine(xn, &format!("layer{layer}.attn.wk"), &format!("layer{layer}.attn.bk"));
        let v = self.affine(xn, &format!("layer{layer}.attn.wv"), &format!("layer{layer}.attn.bv"));

        let mut head_outputs = Vec::with_capacity(heads);
        for h in 0..heads {
            let qh = self.graph.slice_cols(q, h * dh, dh);
            let kh = self.graph.slice_cols(k, h * dh, dh);
            let vh = self.graph.slice_cols(v, h * dh, dh);
            let kt = self.graph.transpose(kh);
            let scores = self.graph.matmul(qh, kt);
            let scaled = self.graph.scale(scores, 1.0 / (dh as f64).sqrt());
            let probs = self.graph.softmax_rows(scaled, mask.clone());
            head_outputs.push(self.graph.matmul(probs, vh));
        }
        let ctx = self.graph.concat_cols(&head_outputs);
        let attn =
            self.affine(ctx, &format!("layer{layer}.attn.wo"), &format!("layer{layer}.attn.bo"));
        let x = self.graph.add(x, attn);

        let ln2_g = self.param(&format!("layer{layer}.ln2.gamma"));
        let ln2_b = self.param(&format!("layer{layer}.ln2.beta"));
        let xn2 = self.graph.layer_norm(x, ln2_g, ln2_b, LN_EPS);
        let h1 = self.affine(xn2, &format!("layer{layer}.ff.w1"), &format!("layer{layer}.ff.b1"));
        let h1 = self.graph.tanh(h1);
        let ff = self.affine(h1, &format!("layer{layer}.ff.w2"), &format!("layer{layer}.ff.b2"));
        self.graph.add(x, ff)
    }

    fn affine(&mut self, x: Var, w: &str, b: &str) -> Var {
        let w = self.param(w);
        let b = self.param(b);
        let xw = self.graph.matmul(x, w);
        self.graph.add_row(xw, b)
    }

    /// Projection head applied to each row: `W2 · tanh(W1 · h + b1) + b2`.
    /// No normalization; the contrastive loss consumes raw dot products.
    pub fn project_rows(&mut self, h: Var) -> Var {
        let h1 = self.affine(h, "proj.w1", "proj.b1");
        let h1 = self.graph.tanh(h1);
        self.affine(h1, "proj.w2", "proj.b2")
    }

    /// Projected `<CLS>` vector (1×d) for one sequence.
    pub fn cls_projection(&mut self, ids: &[u32]) -> Result<Var, ModelError> {
        let hidden = self.encode(ids)?;
        let cls = self.graph.gather_rows(hidden, &[0]);
        Ok(self.project_rows(cls))
    }

    pub fn fgti_logits(&mut self, hidden_rows: Var) -> Var {
        self.affine(hidden_rows, "fgti.w", "fgti.b")
    }

    pub fn mmlm_logits(&mut self, hidden_rows: Var) -> Var {
        self.affine(hidden_rows, "mmlm.w", "mmlm.b")
    }

    /// ‖Θ‖² over every trainable parameter.
    pub fn l2_term(&mut self) -> Var {
        let params = self.param_vars.clone();
        self.graph.sum_squares(&params)
    }
}

/// Forward-only projected `<CLS>` embedding used for retrieval.
pub fn embed_sequence(state: &ModelState, ids: &[u32]) -> Result<Vec<f64>, ModelError> {
    let mut fwd = Forward::new(state);
    let v = fwd.cls_projection(ids)?;
    Ok(fwd.graph.value(v).data.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tensor::Tensor;
    use crate::model::EncoderConfig;
    use crate::typing::PAD_ID;

    fn tiny_state() -> ModelState {
        let config = EncoderConfig {
            vocab_size: 32,
            hidden: 8,
            layers: 1,
            heads: 2,
            feed_forward: 16,
            max_positions: 16,
            ..Default::default()
        };
        ModelState::init(config).unwrap()
    }

    #[test]
    fn encode_shape_and_finiteness() {
        let state = tiny_state();
        let mut fwd = Forward::new(&state);
        let hidden = fwd.encode(&[2, 7, 9, 11]).unwrap();
        let value = fwd.graph.value(hidden);
        assert_eq!((value.rows, value.cols), (4, 8));
        assert!(value.is_finite());
    }

    #[test]
    fn encode_is_deterministic() {
        let state = tiny_state();
        let ids = [2u32, 7, 9, 11, 3];
        let mut f1 = Forward::new(&state);
        let h1 = f1.encode(&ids).unwrap();
        let mut f2 = Forward::new(&state);
        let h2 = f2.encode(&ids).unwrap();
        assert_eq!(f1.graph.value(h1), f2.graph.value(h2));
    }

    #[test]
    fn pad_tail_does_not_change_non_pad_rows() {
        let state = tiny_state();
        let base = [2u32, 7, 9];
        let padded = [2u32, 7, 9, PAD_ID, PAD_ID, PAD_ID];
        let mut f1 = Forward::new(&state);
        let h1 = f1.encode(&base).unwrap();
        let mut f2 = Forward::new(&state);
        let h2 = f2.encode(&padded).unwrap();
        let v1 = f1.graph.value(h1);
        let v2 = f2.graph.value(h2);
        for r in 0..base.len() {
            for c in 0..v1.cols {
                assert_eq!(v1.get(r, c), v2.get(r, c), "row {r} col {c}");
            }
        }
    }

    #[test]
    fn out_of_range_id_rejected() {
        let state = tiny_state();
        let mut fwd = Forward::new(&state);
        assert!(matches!(
            fwd.encode(&[2, 99]),
            Err(ModelError::IdOutOfRange { id: 99, .. })
        ));
    }

    #[test]
    fn over_length_rejected() {
        let state = tiny_state();
        let mut fwd = Forward::new(&state);
        let ids = vec![2u32; 17];
        assert!(matches!(fwd.encode(&ids), Err(ModelError::TooLong { .. })));
    }

    #[test]
    fn projection_zero_weights_zero_output() {
        let mut state = tiny_state();
        for name in ["proj.w1", "proj.b1", "proj.w2", "proj.b2"] {
            let t = state.by_name_mut(name).unwrap();
            for v in &mut t.data {
                *v = 0.0;
            }
        }
        let mut fwd = Forward::new(&state);
        let h = fwd.graph.constant(Tensor::from_vec(2, 8, (0..16).map(|i| i as f64).collect()));
        let v = fwd.project_rows(h);
        assert!(fwd.graph.value(v).data.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn projection_linear_in_w2_when_hidden_fixed() {
        // with tanh saturated inputs fixed, doubling W2 doubles (v - b2)
        let state = tiny_state();
        let h = Tensor::from_vec(1, 8, vec![0.3; 8]);
        let run = |scale: f64| -> Vec<f64> {
            let mut doubled = state.clone();
            let w2 = doubled.by_name_mut("proj.w2").unwrap();
            w2.scale_assign(scale);
            let mut fwd = Forward::new(&doubled);
            let hv = fwd.graph.constant(h.clone());
            let v = fwd.project_rows(hv);
            fwd.graph.value(v).data.clone()
        };
        let b2 = state.by_name("proj.b2").unwrap().data.clone();
        let v1 = run(1.0);
        let v2 = run(2.0);
        for i in 0..v1.len() {
            let lhs = v2[i] - b2[i];
            let rhs = 2.0 * (v1[i] - b2[i]);
            assert!((lhs - rhs).abs() < 1e-12, "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn projection_gradient_matches_finite_differences() {
        let state = tiny_state();
        let h = Tensor::from_vec(1, 8, vec![0.25, -0.5, 0.75, -1.0, 0.1, 0.2, -0.3, 0.4]);
        // scalar objective: mean of projected vector
        let loss_of = |s: &ModelState| -> f64 {
            let mut fwd = Forward::new(s);
            let hv = fwd.graph.constant(h.clone());
            let v = fwd.project_rows(hv);
            let m = fwd.graph.mean_all(v);
            fwd.graph.value(m).item()
        };
        let mut fwd = Forward::new(&state);
        let hv = fwd.graph.constant(h.clone());
        let v = fwd.project_rows(hv);
        let m = fwd.graph.mean_all(v);
        let grads = fwd.graph.backward(m);
        let w1_index = (0..state.param_count()).find(|&i| state.name(i) == "proj.w1").unwrap();
        let analytic = grads[fwd.param_vars()[w1_index]].clone().unwrap();

        let h_step = 1e-4;
        for slot in [0usize, 5, 17, 40, 63] {
            let mut plus = state.clone();
            plus.tensor_mut(w1_index).data[slot] += h_step;
            let mut minus = state.clone();
            minus.tensor_mut(w1_index).data[slot] -= h_step;
            let fd = (loss_of(&plus) - loss_of(&minus)) / (2.0 * h_step);
            let a = analytic.data[slot];
            let err = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-6);
            assert!(err < 1e-4, "slot {slot}: analytic {a} vs fd {fd}");
        }
    }
}
