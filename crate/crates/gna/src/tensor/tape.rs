//! Reverse-mode automatic differentiation on an arena tape.
//!
//! A [`Tape`] records every operation as it runs; [`Tape::backward`] then
//! walks the records in reverse, pushing gradients from one scalar root back
//! to the differentiable leaves. Handles are plain indices ([`Var`]), valid
//! only for the tape that produced them. A tape supports one backward pass;
//! after it, only leaf gradients remain readable.

use std::sync::Arc;

use crate::attention::{fused_attention_backward, fused_attention_forward, AttentionPlan};
use crate::error::{Error, Result};

use super::ops;
use super::Tensor;

/// Handle to a value on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

enum Op {
    Leaf,
    Matmul(Var, Var),
    Softmax(Var, usize),
    Relu(Var),
    Sigmoid(Var),
    Add(Var, Var),
    Scale(Var, f64),
    Mean(Var, Option<usize>),
    SumAll(Var),
    Concat(Vec<Var>, usize),
    Reshape(Var),
    Conv2d { x: Var, w: Var, b: Option<Var>, stride: usize, dilation: usize, padding: usize },
    Deconv2d { x: Var, w: Var, b: Option<Var> },
    AvgPool2(Var),
    Gather(Var, Arc<Vec<(usize, usize)>>),
    Attention { q: Var, keys: Vec<Var>, values: Vec<Var>, plan: Arc<AttentionPlan> },
    Bce { pred: Var, target: Arc<Tensor>, w_pos: f64 },
}

/// Operation recorder and gradient store.
#[derive(Default)]
pub struct Tape {
    vals: Vec<Tensor>,
    ops: Vec<Op>,
    needs: Vec<bool>,
    grads: Vec<Option<Vec<f64>>>,
    consumed: bool,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of recorded values.
    pub fn len(&self) -> usize {
        self.vals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vals.is_empty()
    }

    /// Record an input value; gradients flow into it iff `needs_grad`.
    pub fn leaf(&mut self, t: Tensor, needs_grad: bool) -> Var {
        self.push(t, Op::Leaf, needs_grad)
    }

    /// Record an input that never receives gradients.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.leaf(t, false)
    }

    /// The tensor held at `v`.
    pub fn value(&self, v: Var) -> &Tensor {
        &self.vals[v.0]
    }

    /// Gradient of the backward root w.r.t. leaf `v`, if one was produced.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Remove and return the gradient at leaf `v`.
    pub fn take_grad(&mut self, v: Var) -> Option<Vec<f64>> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }

    fn push(&mut self, val: Tensor, op: Op, needs: bool) -> Var {
        self.vals.push(val);
        self.ops.push(op);
        self.needs.push(needs);
        self.grads.push(None);
        Var(self.vals.len() - 1)
    }

    fn check(&self, v: Var) -> Result<()> {
        if v.0 >= self.vals.len() {
            return Err(Error::index(format!("var {} outside tape of {} values", v.0, self.vals.len())));
        }
        Ok(())
    }

    // ── Recorded operations ─────────────────────────────────────────────

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check(a)?;
        self.check(b)?;
        let y = ops::matmul(&self.vals[a.0], &self.vals[b.0])?;
        let needs = self.needs[a.0] || self.needs[b.0];
        Ok(self.push(y, Op::Matmul(a, b), needs))
    }

    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        self.check(x)?;
        let y = ops::softmax(&self.vals[x.0], axis)?;
        let needs = self.needs[x.0];
        Ok(self.push(y, Op::Softmax(x, axis), needs))
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.check(x)?;
        let y = ops::relu(&self.vals[x.0]);
        let needs = self.needs[x.0];
        Ok(self.push(y, Op::Relu(x), needs))
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.check(x)?;
        let y = ops::sigmoid(&self.vals[x.0]);
        let needs = self.needs[x.0];
        Ok(self.push(y, Op::Sigmoid(x), needs))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check(a)?;
        self.check(b)?;
        let y = ops::add(&self.vals[a.0], &self.vals[b.0])?;
        let needs = self.needs[a.0] || self.needs[b.0];
        Ok(self.push(y, Op::Add(a, b), needs))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Result<Var> {
        self.check(x)?;
        let y = ops::scale(&self.vals[x.0], c);
        let needs = self.needs[x.0];
        Ok(self.push(y, Op::Scale(x, c), needs))
    }

    pub fn mean(&mut self, x: Var, axis: Option<usize>) -> Result<Var> {
        self.check(x)?;
        let y = ops::mean(&self.vals[x.0], axis)?;
        let needs = self.needs[x.0];
        Ok(self.push(y, Op::Mean(x, axis), needs))
    }

    pub fn sum_all(&mut self, x: Var) -> Result<Var> {
        self.check(x)?;
        let y = ops::sum_all(&self.vals[x.0]);
        let needs = self.needs[x.0];
        Ok(self.push(y, Op::SumAll(x), needs))
    }

    pub fn concat(&mut self, xs: &[Var], axis: usize) -> Result<Var> {
        for &x in xs {
            self.check(x)?;
        }
        let tensors: Vec<&Tensor> = xs.iter().map(|v| &self.vals[v.0]).collect();
        let y = ops::concat(&tensors, axis)?;
        let needs = xs.iter().any(|v| self.needs[v.0]);
        Ok(self.push(y, Op::Concat(xs.to_vec(), axis), needs))
    }

    pub fn conv2d(
        &mut self,
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: usize,
        dilation: usize,
        padding: usize,
    ) -> Result<Var> {
        self.check(x)?;
        self.check(w)?;
        if let Some(b) = b {
            self.check(b)?;
        }
        let y = ops::conv2d(
            &self.vals[x.0],
            &self.vals[w.0],
            b.map(|b| &self.vals[b.0]),
            stride,
            dilation,
            padding,
        )?;
        let needs = self.needs[x.0]
            || self.needs[w.0]
            || b.map_or(false, |b| self.needs[b.0]);
        Ok(self.push(y, Op::Conv2d { x, w, b, stride, dilation, padding }, needs))
    }

    pub fn deconv2d(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        self.check(x)?;
        self.check(w)?;
        if let Some(b) = b {
            self.check(b)?;
        }
        let y = ops::deconv2d(
            &self.vals[x.0],
            &self.vals[w.0],
            b.map(|b| &self.vals[b.0]),
            2,
        )?;
        let needs = self.needs[x.0]
            || self.needs[w.0]
            || b.map_or(false, |b| self.needs[b.0]);
        Ok(self.push(y, Op::Deconv2d { x, w, b }, needs))
    }

    pub fn avg_pool2(&mut self, x: Var) -> Result<Var> {
        self.check(x)?;
        let y = ops::avg_pool2(&self.vals[x.0])?;
        let needs = self.needs[x.0];
        Ok(self.push(y, Op::AvgPool2(x), needs))
    }

    /// Same data, new extents (element count must match).
    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        self.check(x)?;
        let y = self.vals[x.0].reshaped(shape)?;
        let needs = self.needs[x.0];
        Ok(self.push(y, Op::Reshape(x), needs))
    }

    pub fn gather(&mut self, x: Var, idx: Arc<Vec<(usize, usize)>>) -> Result<Var> {
        self.check(x)?;
        let y = ops::gather_indices(&self.vals[x.0], &idx)?;
        let needs = self.needs[x.0];
        Ok(self.push(y, Op::Gather(x, idx), needs))
    }

    /// Fused sparse attention over a pre-built sampling plan. `keys[s]` and
    /// `values[s]` are the maps that plan references with source `s`; the
    /// same [`Var`] may appear several times and gradients accumulate.
    pub fn attention(
        &mut self,
        q: Var,
        keys: &[Var],
        values: &[Var],
        plan: Arc<AttentionPlan>,
    ) -> Result<Var> {
        self.check(q)?;
        for &v in keys.iter().chain(values) {
            self.check(v)?;
        }
        let key_refs: Vec<&Tensor> = keys.iter().map(|v| &self.vals[v.0]).collect();
        let val_refs: Vec<&Tensor> = values.iter().map(|v| &self.vals[v.0]).collect();
        let y = fused_attention_forward(&self.vals[q.0], &key_refs, &val_refs, &plan)?;
        let needs = self.needs[q.0] || keys.iter().chain(values).any(|v| self.needs[v.0]);
        Ok(self.push(
            y,
            Op::Attention { q, keys: keys.to_vec(), values: values.to_vec(), plan },
            needs,
        ))
    }

    /// Weighted binary cross-entropy against a fixed target, mean-reduced.
    pub fn weighted_bce(&mut self, pred: Var, target: Arc<Tensor>, w_pos: f64) -> Result<Var> {
        self.check(pred)?;
        let y = ops::weighted_bce_loss(&self.vals[pred.0], &target, w_pos)?;
        let needs = self.needs[pred.0];
        Ok(self.push(y, Op::Bce { pred, target, w_pos }, needs))
    }

    // ── Backward ────────────────────────────────────────────────────────

    /// Propagate gradients from scalar `root` back to the leaves. Consumes
    /// the recorded operations; a second call is an error.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        self.check(root)?;
        if self.consumed {
            return Err(Error::contract("backward already run on this tape"));
        }
        self.consumed = true;
        if self.vals[root.0].rank() != 0 {
            return Err(Error::contract(format!(
                "backward root must be a scalar, got shape {:?}",
                self.vals[root.0].shape()
            )));
        }
        if !self.needs[root.0] {
            return Err(Error::contract("backward root depends on no differentiable leaf"));
        }
        self.grads[root.0] = Some(vec![1.0]);
        for i in (0..=root.0).rev() {
            if matches!(self.ops[i], Op::Leaf) {
                continue; // leaf gradients stay readable after backward
            }
            let Some(g) = self.grads[i].take() else { continue };
            let op = std::mem::replace(&mut self.ops[i], Op::Leaf);
            let vals = &self.vals;
            let needs = &self.needs;
            let grads = &mut self.grads;
            match op {
                Op::Leaf => unreachable!(),
                Op::Matmul(a, b) => {
                    let (ga, gb) = ops::matmul_bwd(&vals[a.0], &vals[b.0], &g);
                    accum(grads, needs, a, ga);
                    accum(grads, needs, b, gb);
                }
                Op::Softmax(x, axis) => {
                    accum(grads, needs, x, ops::softmax_bwd(&vals[i], &g, axis));
                }
                Op::Relu(x) => {
                    accum(grads, needs, x, ops::relu_bwd(&vals[x.0], &g));
                }
                Op::Sigmoid(x) => {
                    accum(grads, needs, x, ops::sigmoid_bwd(&vals[i], &g));
                }
                Op::Add(a, b) => {
                    accum(grads, needs, a, g.clone());
                    accum(grads, needs, b, g);
                }
                Op::Scale(x, c) => {
                    accum(grads, needs, x, g.iter().map(|&v| v * c).collect());
                }
                Op::Mean(x, axis) => {
                    accum(grads, needs, x, ops::mean_bwd(vals[x.0].shape(), &g, axis));
                }
                Op::SumAll(x) => {
                    accum(grads, needs, x, vec![g[0]; vals[x.0].numel()]);
                }
                Op::Concat(xs, axis) => {
                    let shapes: Vec<&[usize]> = xs.iter().map(|v| vals[v.0].shape()).collect();
                    let parts = ops::concat_bwd(&shapes, &g, axis);
                    for (&x, part) in xs.iter().zip(parts) {
                        accum(grads, needs, x, part);
                    }
                }
                Op::Reshape(x) => {
                    accum(grads, needs, x, g); // row-major layout is unchanged
                }
                Op::Conv2d { x, w, b, stride, dilation, padding } => {
                    let (gx, gw, gb) = ops::conv2d_bwd(
                        &vals[x.0],
                        &vals[w.0],
                        &g,
                        stride,
                        dilation,
                        padding,
                        b.is_some(),
                    );
                    accum(grads, needs, x, gx);
                    accum(grads, needs, w, gw);
                    if let (Some(b), Some(gb)) = (b, gb) {
                        accum(grads, needs, b, gb);
                    }
                }
                Op::Deconv2d { x, w, b } => {
                    let (gx, gw, gb) =
                        ops::deconv2d_bwd(&vals[x.0], &vals[w.0], &g, b.is_some());
                    accum(grads, needs, x, gx);
                    accum(grads, needs, w, gw);
                    if let (Some(b), Some(gb)) = (b, gb) {
                        accum(grads, needs, b, gb);
                    }
                }
                Op::AvgPool2(x) => {
                    accum(grads, needs, x, ops::avg_pool2_bwd(vals[x.0].shape(), &g));
                }
                Op::Gather(x, idx) => {
                    accum(grads, needs, x, ops::gather_bwd(vals[x.0].shape(), &idx, &g));
                }
                Op::Attention { q, keys, values, plan } => {
                    let key_refs: Vec<&Tensor> = keys.iter().map(|v| &vals[v.0]).collect();
                    let val_refs: Vec<&Tensor> = values.iter().map(|v| &vals[v.0]).collect();
                    let (gq, gks, gvs) =
                        fused_attention_backward(&vals[q.0], &key_refs, &val_refs, &plan, &g);
                    accum(grads, needs, q, gq);
                    for (&k, gk) in keys.iter().zip(gks) {
                        accum(grads, needs, k, gk);
                    }
                    for (&v, gv) in values.iter().zip(gvs) {
                        accum(grads, needs, v, gv);
                    }
                }
                Op::Bce { pred, target, w_pos } => {
                    let gp = ops::weighted_bce_bwd(&vals[pred.0], &target, w_pos, g[0]);
                    accum(grads, needs, pred, gp);
                }
            }
        }
        Ok(())
    }
}

fn accum(grads: &mut [Option<Vec<f64>>], needs: &[bool], target: Var, contrib: Vec<f64>) {
    if !needs[target.0] {
        return;
    }
    match &mut grads[target.0] {
        Some(g) => {
            for (a, b) in g.iter_mut().zip(&contrib) {
                *a += b;
            }
        }
        slot @ None => *slot = Some(contrib),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    #[test]
    fn sum_backward_gives_ones() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::from_vec(&[3], vec![1.0, -2.0, 5.0]).unwrap(), true);
        let s = tape.sum_all(x).unwrap();
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn sigmoid_slope_at_zero_is_quarter() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(0.0), true);
        let y = tape.sigmoid(x).unwrap();
        let s = tape.sum_all(y).unwrap();
        tape.backward(s).unwrap();
        assert!((tape.grad(x).unwrap()[0] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn fan_in_accumulates() {
        // y = 2x + x  ⇒  dy/dx = 3
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(1.5), true);
        let two_x = tape.scale(x, 2.0).unwrap();
        let y = tape.add(two_x, x).unwrap();
        tape.backward(y).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[3.0]);
    }

    #[test]
    fn matmul_gradients_match_hand_result() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::from_vec(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap(), true);
        let b = tape.leaf(Tensor::from_vec(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap(), true);
        let y = tape.matmul(a, b).unwrap();
        let s = tape.sum_all(y).unwrap();
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(a).unwrap(), &[1.0, 1.0, 1.0, 1.0]);
        // d(sum)/db[l][j] = Σ_i a[i][l]: column sums of a.
        assert_eq!(tape.grad(b).unwrap(), &[4.0, 4.0, 6.0, 6.0]);
    }

    #[test]
    fn softmax_of_sum_has_zero_gradient() {
        // Softmax outputs sum to one, so d(sum)/dx ≡ 0.
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::from_vec(&[4], vec![0.3, -1.0, 2.0, 0.7]).unwrap(), true);
        let y = tape.softmax(x, 0).unwrap();
        let s = tape.sum_all(y).unwrap();
        tape.backward(s).unwrap();
        for &g in tape.grad(x).unwrap() {
            assert!(g.abs() < 1e-15, "got {g}");
        }
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(2.0), true);
        let c = tape.constant(Tensor::scalar(3.0));
        let y = tape.add(x, c).unwrap();
        tape.backward(y).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[1.0]);
        assert!(tape.grad(c).is_none());
    }

    #[test]
    fn second_backward_is_rejected() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(1.0), true);
        let y = tape.scale(x, 2.0).unwrap();
        tape.backward(y).unwrap();
        assert!(matches!(tape.backward(y), Err(crate::error::Error::Contract(_))));
    }

    #[test]
    fn non_scalar_root_is_rejected() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::zeros(&[2]), true);
        let y = tape.scale(x, 1.0).unwrap();
        assert!(matches!(tape.backward(y), Err(crate::error::Error::Contract(_))));
    }

    #[test]
    fn bce_gradient_through_tape() {
        let mut tape = Tape::new();
        let p = tape.leaf(Tensor::from_vec(&[2], vec![0.25, 0.75]).unwrap(), true);
        let t = Arc::new(Tensor::from_vec(&[2], vec![1.0, 0.0]).unwrap());
        let loss = tape.weighted_bce(p, t, 3.0).unwrap();
        tape.backward(loss).unwrap();
        let g = tape.grad(p).unwrap();
        assert!((g[0] - (-3.0 / 0.25) / 2.0).abs() < 1e-12);
        assert!((g[1] - (1.0 / 0.25) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn conv_chain_matches_finite_differences() {
        let mut rng = rng_from_seed(77);
        let x0 = Tensor::rand_uniform(&[4, 4, 2], -1.0, 1.0, &mut rng);
        let w0 = Tensor::rand_uniform(&[3, 3, 2, 3], -0.6, 0.6, &mut rng);
        let b0 = Tensor::rand_uniform(&[3], -0.2, 0.2, &mut rng);
        let run = |wdata: &[f64]| -> f64 {
            let w = Tensor::from_vec(&[3, 3, 2, 3], wdata.to_vec()).unwrap();
            let mut tape = Tape::new();
            let xv = tape.constant(x0.clone());
            let wv = tape.leaf(w, true);
            let bv = tape.leaf(b0.clone(), true);
            let c = tape.conv2d(xv, wv, Some(bv), 1, 1, 1).unwrap();
            let r = tape.sigmoid(c).unwrap();
            let p = tape.avg_pool2(r).unwrap();
            let s = tape.mean(p, None).unwrap();
            tape.value(s).item().unwrap()
        };
        let mut tape = Tape::new();
        let xv = tape.constant(x0.clone());
        let wv = tape.leaf(w0.clone(), true);
        let bv = tape.leaf(b0.clone(), true);
        let c = tape.conv2d(xv, wv, Some(bv), 1, 1, 1).unwrap();
        let r = tape.sigmoid(c).unwrap();
        let p = tape.avg_pool2(r).unwrap();
        let s = tape.mean(p, None).unwrap();
        tape.backward(s).unwrap();
        let analytic = tape.grad(wv).unwrap().to_vec();
        let numeric = super::super::gradcheck::finite_diff(run, w0.data(), 1e-5);
        let err = super::super::gradcheck::max_rel_err(&analytic, &numeric);
        assert!(err < 1e-6, "max relative error {err}");
    }

    #[test]
    fn reshape_passes_values_and_gradients_through() {
        let mut tape = Tape::new();
        let x = tape.leaf(
            Tensor::from_vec(&[2, 3, 1], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap(),
            true,
        );
        let r = tape.reshape(x, &[2, 3]).unwrap();
        assert_eq!(tape.value(r).shape(), &[2, 3]);
        assert_eq!(tape.value(r).data(), tape.value(x).data());
        assert!(tape.reshape(x, &[4, 2]).is_err());
        let s = tape.sum_all(r).unwrap();
        let m = tape.scale(s, 2.0).unwrap();
        tape.backward(m).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[2.0; 6]);
    }
}
