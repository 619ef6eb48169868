//! Tape-based reverse-mode autodiff over [`Tensor`] values.
//!
//! Each operation appends a node holding its forward value; `backward`
//! replays the tape in reverse, dispatching per-op gradient rules. The op
//! set is exactly what the encoder and the loss heads need; every rule is
//! covered by finite-difference tests.

use super::tensor::Tensor;

pub type Var = usize;

enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    Tanh(Var),
    SoftmaxRows(Var),
    SliceCols { x: Var, start: usize },
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    GatherRows { x: Var, indices: Vec<usize> },
    LayerNorm { x: Var, gamma: Var, beta: Var, eps: f64 },
    CrossEntropyRows { logits: Var, targets: Vec<usize> },
    InfoNceRows { anchors: Var, positives: Var },
    MeanAll(Var),
    SumSquares(Vec<Var>),
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Graph {
        Graph { nodes: Vec::new() }
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        self.nodes.len() - 1
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v].needs_grad
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v].value
    }

    /// Trainable leaf: gradients flow into it.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Constant leaf: no gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.nodes[a].value.matmul(&self.nodes[b].value);
        let needs = self.needs(a) || self.needs(b);
        self.push(value, Op::MatMul(a, b), needs)
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let value = self.nodes[a].value.transpose();
        let needs = self.needs(a);
        self.push(value, Op::Transpose(a), needs)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (&self.nodes[a].value, &self.nodes[b].value);
        assert_eq!((va.rows, va.cols), (vb.rows, vb.cols), "add shape mismatch");
        let mut value = va.clone();
        value.add_assign(vb);
        let needs = self.needs(a) || self.needs(b);
        self.push(value, Op::Add(a, b), needs)
    }

    /// Broadcast a 1×n bias over every row of a.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Var {
        let (va, vb) = (&self.nodes[a].value, &self.nodes[bias].value);
        assert_eq!(vb.rows, 1, "bias must be a row vector");
        assert_eq!(va.cols, vb.cols, "bias width mismatch");
        let mut value = va.clone();
        for r in 0..value.rows {
            for c in 0..value.cols {
                let v = value.get(r, c) + vb.get(0, c);
                value.set(r, c, v);
            }
        }
        let needs = self.needs(a) || self.needs(bias);
        self.push(value, Op::AddRow(a, bias), needs)
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let mut value = self.nodes[a].value.clone();
        value.scale_assign(factor);
        let needs = self.needs(a);
        self.push(value, Op::Scale(a, factor), needs)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let mut value = self.nodes[a].value.clone();
        for v in &mut value.data {
            *v = v.tanh();
        }
        let needs = self.needs(a);
        self.push(value, Op::Tanh(a), needs)
    }

    /// Row-wise softmax with optional masked key columns (set to zero
    /// probability). Uses max-subtraction; masked columns contribute
    /// exactly zero.
    pub fn softmax_rows(&mut self, x: Var, masked_cols: Option<Vec<bool>>) -> Var {
        let vx = &self.nodes[x].value;
        if let Some(mask) = &masked_cols {
            assert_eq!(mask.len(), vx.cols, "mask width mismatch");
        }
        let mut value = Tensor::zeros(vx.rows, vx.cols);
        for r in 0..vx.rows {
            let row = vx.row(r);
            let mut max = f64::NEG_INFINITY;
            for (c, &v) in row.iter().enumerate() {
                let masked = masked_cols.as_ref().is_some_and(|m| m[c]);
                if !masked && v > max {
                    max = v;
                }
            }
            let mut denom = 0.0;
            for (c, &v) in row.iter().enumerate() {
                let masked = masked_cols.as_ref().is_some_and(|m| m[c]);
                if !masked {
                    denom += (v - max).exp();
                }
            }
            for (c, &v) in row.iter().enumerate() {
                let masked = masked_cols.as_ref().is_some_and(|m| m[c]);
                if !masked {
                    value.set(r, c, (v - max).exp() / denom);
                }
            }
        }
        let needs = self.needs(x);
        // backward does not need the mask: masked outputs are exactly zero,
        // which zeroes their gradient term in the softmax rule
        self.push(value, Op::SoftmaxRows(x), needs)
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Var {
        let vx = &self.nodes[x].value;
        assert!(start + len <= vx.cols, "slice out of range");
        let mut value = Tensor::zeros(vx.rows, len);
        for r in 0..vx.rows {
            for c in 0..len {
                value.set(r, c, vx.get(r, start + c));
            }
        }
        let needs = self.needs(x);
        self.push(value, Op::SliceCols { x, start }, needs)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let rows = self.nodes[parts[0]].value.rows;
        let cols: usize = parts.iter().map(|&p| self.nodes[p].value.cols).sum();
        let mut value = Tensor::zeros(rows, cols);
        let mut offset = 0;
        for &p in parts {
            let vp = &self.nodes[p].value;
            assert_eq!(vp.rows, rows, "concat_cols row mismatch");
            for r in 0..rows {
                for c in 0..vp.cols {
                    value.set(r, offset + c, vp.get(r, c));
                }
            }
            offset += vp.cols;
        }
        let needs = parts.iter().any(|&p| self.needs(p));
        self.push(value, Op::ConcatCols(parts.to_vec()), needs)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let cols = self.nodes[parts[0]].value.cols;
        let rows: usize = parts.iter().map(|&p| self.nodes[p].value.rows).sum();
        let mut value = Tensor::zeros(rows, cols);
        let mut offset = 0;
        for &p in parts {
            let vp = &self.nodes[p].value;
            assert_eq!(vp.cols, cols, "concat_rows col mismatch");
            for r in 0..vp.rows {
                value.row_mut(offset + r).copy_from_slice(vp.row(r));
            }
            offset += vp.rows;
        }
        let needs = parts.iter().any(|&p| self.needs(p));
        self.push(value, Op::ConcatRows(parts.to_vec()), needs)
    }

    /// Select rows by index (embedding lookup, position selection).
    pub fn gather_rows(&mut self, x: Var, indices: &[usize]) -> Var {
        let vx = &self.nodes[x].value;
        let mut value = Tensor::zeros(indices.len(), vx.cols);
        for (r, &i) in indices.iter().enumerate() {
            value.row_mut(r).copy_from_slice(vx.row(i));
        }
        let needs = self.needs(x);
        self.push(value, Op::GatherRows { x, indices: indices.to_vec() }, needs)
    }

    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Var {
        let vx = &self.nodes[x].value;
        let (vg, vb) = (&self.nodes[gamma].value, &self.nodes[beta].value);
        assert_eq!(vg.cols, vx.cols);
        assert_eq!(vb.cols, vx.cols);
        let mut value = Tensor::zeros(vx.rows, vx.cols);
        for r in 0..vx.rows {
            let row = vx.row(r);
            let mean = row.iter().sum::<f64>() / row.len() as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / row.len() as f64;
            let denom = (var + eps).sqrt();
            for (c, &v) in row.iter().enumerate() {
                value.set(r, c, vg.get(0, c) * (v - mean) / denom + vb.get(0, c));
            }
        }
        let needs = self.needs(x) || self.needs(gamma) || self.needs(beta);
        self.push(value, Op::LayerNorm { x, gamma, beta, eps }, needs)
    }

    /// Per-row stable cross-entropy against integer targets; output m×1.
    pub fn cross_entropy_rows(&mut self, logits: Var, targets: &[usize]) -> Var {
        let vl = &self.nodes[logits].value;
        assert_eq!(vl.rows, targets.len());
        let mut value = Tensor::zeros(vl.rows, 1);
        for (r, &t) in targets.iter().enumerate() {
            let row = vl.row(r);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            value.set(r, 0, lse - row[t]);
        }
        let needs = self.needs(logits);
        self.push(value, Op::CrossEntropyRows { logits, targets: targets.to_vec() }, needs)
    }

    /// Contrastive losses for one direction: anchors n×d against aligned
    /// positives n×d. Anchor i's denominator runs over its positive plus
    /// the 2n−2 in-batch negatives (other anchors, other positives), all as
    /// raw dot products with max-subtraction.
    pub fn info_nce_rows(&mut self, anchors: Var, positives: Var) -> Var {
        let (va, vb) = (&self.nodes[anchors].value, &self.nodes[positives].value);
        assert_eq!((va.rows, va.cols), (vb.rows, vb.cols));
        let n = va.rows;
        assert!(n >= 2, "contrastive batch needs n >= 2");
        let mut value = Tensor::zeros(n, 1);
        for i in 0..n {
            let (logits, _) = nce_logits(va, vb, i);
            let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
            value.set(i, 0, lse - logits[0]);
        }
        let needs = self.needs(anchors) || self.needs(positives);
        self.push(value, Op::InfoNceRows { anchors, positives }, needs)
    }

    pub fn mean_all(&mut self, x: Var) -> Var {
        let vx = &self.nodes[x].value;
        let mean = vx.data.iter().sum::<f64>() / vx.len() as f64;
        let needs = self.needs(x);
        self.push(Tensor::scalar(mean), Op::MeanAll(x), needs)
    }

    pub fn sum_squares(&mut self, parts: &[Var]) -> Var {
        let total: f64 = parts.iter().map(|&p| self.nodes[p].value.sum_squares()).sum();
        let needs = parts.iter().any(|&p| self.needs(p));
        self.push(Tensor::scalar(total), Op::SumSquares(parts.to_vec()), needs)
    }

    /// Reverse pass from a scalar loss. Returns one gradient slot per node;
    /// only nodes on a gradient path are populated.
    pub fn backward(&self, loss: Var) -> Vec<Option<Tensor>> {
        assert_eq!(self.nodes[loss].value.len(), 1, "backward needs a scalar loss");
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss] = Some(Tensor::scalar(1.0));
        for v in (0..=loss).rev() {
            let Some(grad) = grads[v].take() else { continue };
            if !self.nodes[v].needs_grad {
                grads[v] = Some(grad);
                continue;
            }
            self.backprop_node(v, &grad, &mut grads);
            grads[v] = Some(grad);
        }
        grads
    }

    fn accumulate(grads: &mut [Option<Tensor>], var: Var, delta: Tensor) {
        match &mut grads[var] {
            Some(g) => g.add_assign(&delta),
            slot @ None => *slot = Some(delta),
        }
    }

    fn backprop_node(&self, v: Var, grad: &Tensor, grads: &mut [Option<Tensor>]) {
        match &self.nodes[v].op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (va, vb) = (&self.nodes[*a].value, &self.nodes[*b].value);
                if self.needs(*a) {
                    Self::accumulate(grads, *a, grad.matmul(&vb.transpose()));
                }
                if self.needs(*b) {
                    Self::accumulate(grads, *b, va.transpose().matmul(grad));
                }
            }
            Op::Transpose(a) => {
                if self.needs(*a) {
                    Self::accumulate(grads, *a, grad.transpose());
                }
            }
            Op::Add(a, b) => {
                if self.needs(*a) {
                    Self::accumulate(grads, *a, grad.clone());
                }
                if self.needs(*b) {
                    Self::accumulate(grads, *b, grad.clone());
                }
            }
            Op::AddRow(a, bias) => {
                if self.needs(*a) {
                    Self::accumulate(grads, *a, grad.clone());
                }
                if self.needs(*bias) {
                    let mut db = Tensor::zeros(1, grad.cols);
                    for r in 0..grad.rows {
                        for c in 0..grad.cols {
                            db.data[c] += grad.get(r, c);
                        }
                    }
                    Self::accumulate(grads, *bias, db);
                }
            }
            Op::Scale(a, factor) => {
                if self.needs(*a) {
                    let mut d = grad.clone();
                    d.scale_assign(*factor);
                    Self::accumulate(grads, *a, d);
                }
            }
            Op::Tanh(a) => {
                if self.needs(*a) {
                    let y = &self.nodes[v].value;
                    let mut d = grad.clone();
                    for (dv, yv) in d.data.iter_mut().zip(&y.data) {
                        *dv *= 1.0 - yv * yv;
                    }
                    Self::accumulate(grads, *a, d);
                }
            }
            Op::SoftmaxRows(x) => {
                if self.needs(*x) {
                    let y = &self.nodes[v].value;
                    let mut dx = Tensor::zeros(y.rows, y.cols);
                    for r in 0..y.rows {
                        let yrow = y.row(r);
                        let grow = grad.row(r);
                        let dot: f64 = yrow.iter().zip(grow).map(|(a, b)| a * b).sum();
                        for c in 0..y.cols {
                            dx.set(r, c, yrow[c] * (grow[c] - dot));
                        }
                    }
                    Self::accumulate(grads, *x, dx);
                }
            }
            Op::SliceCols { x, start } => {
                if self.needs(*x) {
                    let vx = &self.nodes[*x].value;
                    let mut dx = Tensor::zeros(vx.rows, vx.cols);
                    for r in 0..grad.rows {
                        for c in 0..grad.cols {
                            dx.set(r, start + c, grad.get(r, c));
                        }
                    }
                    Self::accumulate(grads, *x, dx);
                }
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let width = self.nodes[p].value.cols;
                    if self.needs(p) {
                        let mut dp = Tensor::zeros(grad.rows, width);
                        for r in 0..grad.rows {
                            for c in 0..width {
                                dp.set(r, c, grad.get(r, offset + c));
                            }
                        }
                        Self::accumulate(grads, p, dp);
                    }
                    offset += width;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let height = self.nodes[p].value.rows;
                    if self.needs(p) {
                        let mut dp = Tensor::zeros(height, grad.cols);
                        for r in 0..height {
                            dp.row_mut(r).copy_from_slice(grad.row(offset + r));
                        }
                        Self::accumulate(grads, p, dp);
                    }
                    offset += height;
                }
            }
            Op::GatherRows { x, indices } => {
                if self.needs(*x) {
                    let vx = &self.nodes[*x].value;
                    let mut dx = Tensor::zeros(vx.rows, vx.cols);
                    for (r, &i) in indices.iter().enumerate() {
                        for c in 0..grad.cols {
                            let v = dx.get(i, c) + grad.get(r, c);
                            dx.set(i, c, v);
                        }
                    }
                    Self::accumulate(grads, *x, dx);
                }
            }
            Op::LayerNorm { x, gamma, beta, eps } => {
                let vx = &self.nodes[*x].value;
                let vg = &self.nodes[*gamma].value;
                let n = vx.cols as f64;
                let mut dx = Tensor::zeros(vx.rows, vx.cols);
                let mut dgamma = Tensor::zeros(1, vx.cols);
                let mut dbeta = Tensor::zeros(1, vx.cols);
                for r in 0..vx.rows {
                    let row = vx.row(r);
                    let mean = row.iter().sum::<f64>() / n;
                    let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                    let denom = (var + eps).sqrt();
                    let xhat: Vec<f64> = row.iter().map(|v| (v - mean) / denom).collect();
                    let grow = grad.row(r);
                    let g: Vec<f64> =
                        grow.iter().enumerate().map(|(c, &d)| d * vg.get(0, c)).collect();
                    let mean_g = g.iter().sum::<f64>() / n;
                    let mean_gx = g.iter().zip(&xhat).map(|(a, b)| a * b).sum::<f64>() / n;
                    for c in 0..vx.cols {
                        dx.set(r, c, (g[c] - mean_g - xhat[c] * mean_gx) / denom);
                        dgamma.data[c] += grow[c] * xhat[c];
                        dbeta.data[c] += grow[c];
                    }
                }
                if self.needs(*x) {
                    Self::accumulate(grads, *x, dx);
                }
                if self.needs(*gamma) {
                    Self::accumulate(grads, *gamma, dgamma);
                }
                if self.needs(*beta) {
                    Self::accumulate(grads, *beta, dbeta);
                }
            }
            Op::CrossEntropyRows { logits, targets } => {
                if self.needs(*logits) {
                    let vl = &self.nodes[*logits].value;
                    let mut dl = Tensor::zeros(vl.rows, vl.cols);
                    for (r, &t) in targets.iter().enumerate() {
                        let row = vl.row(r);
                        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                        let denom: f64 = row.iter().map(|z| (z - max).exp()).sum();
                        let scale = grad.get(r, 0);
                        for (c, &z) in row.iter().enumerate() {
                            let p = (z - max).exp() / denom;
                            let delta = if c == t { p - 1.0 } else { p };
                            dl.set(r, c, delta * scale);
                        }
                    }
                    Self::accumulate(grads, *logits, dl);
                }
            }
            Op::InfoNceRows { anchors, positives } => {
                let va = &self.nodes[*anchors].value;
                let vb = &self.nodes[*positives].value;
                let n = va.rows;
                let d = va.cols;
                let mut da = Tensor::zeros(n, d);
                let mut db = Tensor::zeros(n, d);
                for i in 0..n {
                    let (logits, refs) = nce_logits(va, vb, i);
                    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let denom: f64 = logits.iter().map(|z| (z - max).exp()).sum();
                    let scale = grad.get(i, 0);
                    for (k, (z, target)) in logits.iter().zip(&refs).enumerate() {
                        let p = (z - max).exp() / denom;
                        let coeff = (if k == 0 { p - 1.0 } else { p }) * scale;
                        // z = a_i . other, so grad flows to both sides
                        match *target {
                            NceRef::Positive(j) => {
                                for c in 0..d {
                                    da.data[i * d + c] += coeff * vb.get(j, c);
                                    db.data[j * d + c] += coeff * va.get(i, c);
                                }
                            }
                            NceRef::Anchor(j) => {
                                for c in 0..d {
                                    da.data[i * d + c] += coeff * va.get(j, c);
                                    da.data[j * d + c] += coeff * va.get(i, c);
                                }
                            }
                        }
                    }
                }
                if self.needs(*anchors) {
                    Self::accumulate(grads, *anchors, da);
                }
                if self.needs(*positives) {
                    Self::accumulate(grads, *positives, db);
                }
            }
            Op::MeanAll(x) => {
                if self.needs(*x) {
                    let vx = &self.nodes[*x].value;
                    let factor = grad.item() / vx.len() as f64;
                    let mut dx = Tensor::zeros(vx.rows, vx.cols);
                    for v in &mut dx.data {
                        *v = factor;
                    }
                    Self::accumulate(grads, *x, dx);
                }
            }
            Op::SumSquares(parts) => {
                let scale = 2.0 * grad.item();
                for &p in parts {
                    if self.needs(p) {
                        let mut dp = self.nodes[p].value.clone();
                        dp.scale_assign(scale);
                        Self::accumulate(grads, p, dp);
                    }
                }
            }
        }
    }
}

enum NceRef {
    Positive(usize),
    Anchor(usize),
}

/// Logits for anchor i: its positive first, then the intra-view negatives
/// (other anchors) and inter-view negatives (other positives).
fn nce_logits(va: &Tensor, vb: &Tensor, i: usize) -> (Vec<f64>, Vec<NceRef>) {
    let n = va.rows;
    let dot = |x: &[f64], y: &[f64]| -> f64 { x.iter().zip(y).map(|(a, b)| a * b).sum() };
    let mut logits = Vec::with_capacity(2 * n - 1);
    let mut refs = Vec::with_capacity(2 * n - 1);
    logits.push(dot(va.row(i), vb.row(i)));
    refs.push(NceRef::Positive(i));
    for j in 0..n {
        if j != i {
            logits.push(dot(va.row(i), va.row(j)));
            refs.push(NceRef::Anchor(j));
        }
    }
    for j in 0..n {
        if j != i {
            logits.push(dot(va.row(i), vb.row(j)));
            refs.push(NceRef::Positive(j));
        }
    }
    (logits, refs)
}
