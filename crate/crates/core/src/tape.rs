//! Minimal reverse-mode differentiation over a recorded op tape.
//!
//! The op set is exactly what the tagger network needs: embedding gathers,
//! matrix-vector products, elementwise gates, concatenation, the gradient
//! reversal connector, max-over-time pooling, softmax and fused
//! softmax/cross-entropy. Nodes hold owned f64 tensors; `backward` walks
//! the tape in reverse and accumulates gradients for every named parameter
//! it encounters.

use crate::error::{Error, Result};
use crate::tensor::{GradMap, Parameters, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug)]
enum Op {
    /// Constant input; no gradient.
    Leaf,
    /// Leaf bound to a named parameter.
    Param(String),
    /// w: [m,n] · x: [n] -> [m]
    MatVec { w: NodeId, x: NodeId },
    /// Row lookup into a 2-D node (embedding table).
    GatherRow { table: NodeId, row: usize },
    Add { a: NodeId, b: NodeId },
    Mul { a: NodeId, b: NodeId },
    /// 1 - x, elementwise.
    OneMinus { x: NodeId },
    Sigmoid { x: NodeId },
    Tanh { x: NodeId },
    Concat { parts: Vec<NodeId> },
    /// Identity forward; backward multiplies the upstream gradient by
    /// `-coeff` (the reversal connector).
    Grl { x: NodeId, coeff: f64 },
    /// Elementwise max; ties route the gradient to `a`.
    MaxPair { a: NodeId, b: NodeId },
    Softmax { x: NodeId },
    /// Scalar loss: -log softmax(logits)[gold]; caches the softmax.
    CrossEntropyLogits {
        logits: NodeId,
        gold: usize,
        softmax: Vec<f64>,
    },
    /// scale * sum(parts); all parts scalar.
    SumScaled { parts: Vec<NodeId>, scale: f64 },
}

struct Node {
    op: Op,
    value: Tensor,
}

/// A single-use computation record. Build the forward pass, then call
/// [`Tape::backward`] from a scalar loss node.
pub struct Tape<'p> {
    params: &'p Parameters,
    nodes: Vec<Node>,
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p Parameters) -> Self {
        Tape {
            params,
            nodes: Vec::new(),
        }
    }

    fn push(&mut self, op: Op, value: Tensor) -> NodeId {
        self.nodes.push(Node { op, value });
        NodeId(self.nodes.len() - 1)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn scalar_value(&self, id: NodeId) -> f64 {
        debug_assert_eq!(self.nodes[id.0].value.len(), 1);
        self.nodes[id.0].value.data[0]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, t: Tensor) -> NodeId {
        self.push(Op::Leaf, t)
    }

    pub fn zeros(&mut self, n: usize) -> NodeId {
        self.leaf(Tensor::zeros(&[n]))
    }

    /// Bind a named parameter as a leaf. Each call creates a node; gradients
    /// from all of them accumulate into the same entry of the result map.
    pub fn param(&mut self, name: &str) -> NodeId {
        let t = self
            .params
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter '{name}'"))
            .clone();
        self.push(Op::Param(name.to_string()), t)
    }

    pub fn gather_row(&mut self, table: NodeId, row: usize) -> NodeId {
        let t = &self.nodes[table.0].value;
        debug_assert_eq!(t.shape.len(), 2);
        let value = Tensor::vector(t.row(row).to_vec());
        self.push(Op::GatherRow { table, row }, value)
    }

    pub fn matvec(&mut self, w: NodeId, x: NodeId) -> NodeId {
        let wt = &self.nodes[w.0].value;
        let xt = &self.nodes[x.0].value;
        debug_assert_eq!(wt.shape.len(), 2);
        debug_assert_eq!(wt.shape[1], xt.len());
        let (m, n) = (wt.shape[0], wt.shape[1]);
        let mut out = vec![0.0; m];
        for (i, o) in out.iter_mut().enumerate() {
            let row = &wt.data[i * n..(i + 1) * n];
            let mut acc = 0.0;
            for (a, b) in row.iter().zip(&xt.data) {
                acc += a * b;
            }
            *o = acc;
        }
        self.push(Op::MatVec { w, x }, Tensor::vector(out))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        debug_assert_eq!(va.len(), vb.len());
        let out: Vec<f64> = va.data.iter().zip(&vb.data).map(|(x, y)| x + y).collect();
        self.push(Op::Add { a, b }, Tensor::vector(out))
    }

    pub fn add3(&mut self, a: NodeId, b: NodeId, c: NodeId) -> NodeId {
        let ab = self.add(a, b);
        self.add(ab, c)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        debug_assert_eq!(va.len(), vb.len());
        let out: Vec<f64> = va.data.iter().zip(&vb.data).map(|(x, y)| x * y).collect();
        self.push(Op::Mul { a, b }, Tensor::vector(out))
    }

    pub fn one_minus(&mut self, x: NodeId) -> NodeId {
        let out: Vec<f64> = self.nodes[x.0].value.data.iter().map(|v| 1.0 - v).collect();
        self.push(Op::OneMinus { x }, Tensor::vector(out))
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let out: Vec<f64> = self.nodes[x.0]
            .value
            .data
            .iter()
            .map(|v| 1.0 / (1.0 + (-v).exp()))
            .collect();
        self.push(Op::Sigmoid { x }, Tensor::vector(out))
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        let out: Vec<f64> = self.nodes[x.0].value.data.iter().map(|v| v.tanh()).collect();
        self.push(Op::Tanh { x }, Tensor::vector(out))
    }

    pub fn concat(&mut self, parts: &[NodeId]) -> NodeId {
        let mut out = Vec::new();
        for p in parts {
            out.extend_from_slice(&self.nodes[p.0].value.data);
        }
        self.push(
            Op::Concat {
                parts: parts.to_vec(),
            },
            Tensor::vector(out),
        )
    }

    /// The reversal connector: identity in the forward pass; the backward
    /// pass multiplies the upstream gradient by `-coeff`.
    pub fn grl(&mut self, x: NodeId, coeff: f64) -> NodeId {
        let value = self.nodes[x.0].value.clone();
        self.push(Op::Grl { x, coeff }, value)
    }

    pub fn max_pair(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        debug_assert_eq!(va.len(), vb.len());
        let out: Vec<f64> = va.data.iter().zip(&vb.data).map(|(x, y)| x.max(*y)).collect();
        self.push(Op::MaxPair { a, b }, Tensor::vector(out))
    }

    /// Fold a sequence into its elementwise maximum.
    pub fn max_over(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty());
        let mut acc = parts[0];
        for p in &parts[1..] {
            acc = self.max_pair(acc, *p);
        }
        acc
    }

    pub fn softmax(&mut self, x: NodeId) -> NodeId {
        let out = stable_softmax(&self.nodes[x.0].value.data);
        self.push(Op::Softmax { x }, Tensor::vector(out))
    }

    pub fn cross_entropy_logits(&mut self, logits: NodeId, gold: usize) -> Result<NodeId> {
        let lv = &self.nodes[logits.0].value.data;
        if gold >= lv.len() {
            return Err(Error::Numeric(format!(
                "gold index {gold} out of range for {} labels",
                lv.len()
            )));
        }
        let sm = stable_softmax(lv);
        let loss = -sm[gold].max(f64::MIN_POSITIVE).ln();
        Ok(self.push(
            Op::CrossEntropyLogits {
                logits,
                gold,
                softmax: sm,
            },
            Tensor::scalar(loss),
        ))
    }

    /// scale * sum of scalar nodes; used for loss averaging.
    pub fn sum_scaled(&mut self, parts: &[NodeId], scale: f64) -> NodeId {
        let total: f64 = parts.iter().map(|p| self.nodes[p.0].value.data[0]).sum();
        self.push(
            Op::SumScaled {
                parts: parts.to_vec(),
                scale,
            },
            Tensor::scalar(total * scale),
        )
    }

    pub fn mean(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty());
        self.sum_scaled(parts, 1.0 / parts.len() as f64)
    }

    /// Reverse pass from a scalar node. Returns gradients for every named
    /// parameter reached by the graph.
    pub fn backward(&self, loss: NodeId) -> GradMap {
        assert_eq!(self.nodes[loss.0].value.len(), 1, "loss must be scalar");
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);

        let mut out = GradMap::new();
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            match &self.nodes[idx].op {
                Op::Leaf => {}
                Op::Param(name) => {
                    let entry = out.entry(name.clone()).or_insert_with(|| {
                        Tensor::zeros(&self.nodes[idx].value.shape)
                    });
                    for (dst, src) in entry.data.iter_mut().zip(&g) {
                        *dst += src;
                    }
                }
                Op::MatVec { w, x } => {
                    let wt = &self.nodes[w.0].value;
                    let xt = &self.nodes[x.0].value;
                    let (m, n) = (wt.shape[0], wt.shape[1]);
                    {
                        let gw = ensure(&mut grads, w.0, m * n);
                        for i in 0..m {
                            let gi = g[i];
                            let row = &mut gw[i * n..(i + 1) * n];
                            for (dst, xv) in row.iter_mut().zip(&xt.data) {
                                *dst += gi * xv;
                            }
                        }
                    }
                    {
                        let gx = ensure(&mut grads, x.0, n);
                        for i in 0..m {
                            let gi = g[i];
                            let row = &wt.data[i * n..(i + 1) * n];
                            for (dst, wv) in gx.iter_mut().zip(row) {
                                *dst += gi * wv;
                            }
                        }
                    }
                }
                Op::GatherRow { table, row } => {
                    let cols = self.nodes[table.0].value.shape[1];
                    let total = self.nodes[table.0].value.len();
                    let gt = ensure(&mut grads, table.0, total);
                    for (dst, src) in gt[row * cols..(row + 1) * cols].iter_mut().zip(&g) {
                        *dst += src;
                    }
                }
                Op::Add { a, b } => {
                    accumulate(&mut grads, a.0, &g);
                    accumulate(&mut grads, b.0, &g);
                }
                Op::Mul { a, b } => {
                    let (va, vb) = (&self.nodes[a.0].value.data, &self.nodes[b.0].value.data);
                    let ga: Vec<f64> = g.iter().zip(vb).map(|(gi, bv)| gi * bv).collect();
                    let gb: Vec<f64> = g.iter().zip(va).map(|(gi, av)| gi * av).collect();
                    accumulate(&mut grads, a.0, &ga);
                    accumulate(&mut grads, b.0, &gb);
                }
                Op::OneMinus { x } => {
                    let gx: Vec<f64> = g.iter().map(|v| -v).collect();
                    accumulate(&mut grads, x.0, &gx);
                }
                Op::Sigmoid { x } => {
                    let y = &self.nodes[idx].value.data;
                    let gx: Vec<f64> = g
                        .iter()
                        .zip(y)
                        .map(|(gi, yi)| gi * yi * (1.0 - yi))
                        .collect();
                    accumulate(&mut grads, x.0, &gx);
                }
                Op::Tanh { x } => {
                    let y = &self.nodes[idx].value.data;
                    let gx: Vec<f64> = g.iter().zip(y).map(|(gi, yi)| gi * (1.0 - yi * yi)).collect();
                    accumulate(&mut grads, x.0, &gx);
                }
                Op::Concat { parts } => {
                    let mut offset = 0;
                    for p in parts {
                        let len = self.nodes[p.0].value.len();
                        accumulate(&mut grads, p.0, &g[offset..offset + len]);
                        offset += len;
                    }
                }
                Op::Grl { x, coeff } => {
                    let gx: Vec<f64> = g.iter().map(|v| -coeff * v).collect();
                    accumulate(&mut grads, x.0, &gx);
                }
                Op::MaxPair { a, b } => {
                    let (va, vb) = (&self.nodes[a.0].value.data, &self.nodes[b.0].value.data);
                    let mut ga = vec![0.0; g.len()];
                    let mut gb = vec![0.0; g.len()];
                    for i in 0..g.len() {
                        if va[i] >= vb[i] {
                            ga[i] = g[i];
                        } else {
                            gb[i] = g[i];
                        }
                    }
                    accumulate(&mut grads, a.0, &ga);
                    accumulate(&mut grads, b.0, &gb);
                }
                Op::Softmax { x } => {
                    let y = &self.nodes[idx].value.data;
                    let dot: f64 = g.iter().zip(y).map(|(gi, yi)| gi * yi).sum();
                    let gx: Vec<f64> = g.iter().zip(y).map(|(gi, yi)| yi * (gi - dot)).collect();
                    accumulate(&mut grads, x.0, &gx);
                }
                Op::CrossEntropyLogits {
                    logits,
                    gold,
                    softmax,
                } => {
                    let gs = g[0];
                    let mut gl: Vec<f64> = softmax.iter().map(|s| gs * s).collect();
                    gl[*gold] -= gs;
                    accumulate(&mut grads, logits.0, &gl);
                }
                Op::SumScaled { parts, scale } => {
                    let gv = [g[0] * *scale];
                    for p in parts {
                        accumulate(&mut grads, p.0, &gv);
                    }
                }
            }
        }
        out
    }
}

fn ensure<'a>(grads: &'a mut [Option<Vec<f64>>], idx: usize, len: usize) -> &'a mut Vec<f64> {
    grads[idx].get_or_insert_with(|| vec![0.0; len])
}

fn accumulate(grads: &mut [Option<Vec<f64>>], idx: usize, g: &[f64]) {
    let dst = grads[idx].get_or_insert_with(|| vec![0.0; g.len()]);
    for (d, s) in dst.iter_mut().zip(g) {
        *d += s;
    }
}

fn stable_softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| (v - m).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

/// Standalone reversal-connector backward: `-lambda * upstream`.
/// The forward pass of the connector is the identity.
pub fn grl_backward(upstream: &Tensor, lambda: f64) -> Tensor {
    Tensor::from_vec(
        &upstream.shape,
        upstream.data.iter().map(|v| -lambda * v).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn central_diff(
        params: &mut Parameters,
        name: &str,
        idx: usize,
        eps: f64,
        loss: impl Fn(&Parameters) -> f64,
    ) -> f64 {
        let orig = params.get(name).unwrap().data[idx];
        params.get_mut(name).unwrap().data[idx] = orig + eps;
        let lp = loss(params);
        params.get_mut(name).unwrap().data[idx] = orig - eps;
        let lm = loss(params);
        params.get_mut(name).unwrap().data[idx] = orig;
        (lp - lm) / (2.0 * eps)
    }

    #[test]
    fn quadratic_gradient() {
        // L = sum(theta^2); dL/dtheta = 2*theta
        let mut params = Parameters::new();
        params.insert("theta", Tensor::vector(vec![1.0, 2.0]));
        let mut tape = Tape::new(&params);
        let th = tape.param("theta");
        let sq = tape.mul(th, th);
        let ones = tape.leaf(Tensor::vector(vec![1.0, 1.0]));
        let prods = tape.mul(sq, ones);
        // reduce via matvec with a 1x2 "ones" matrix
        let m = tape.leaf(Tensor::from_vec(&[1, 2], vec![1.0, 1.0]));
        let loss = tape.matvec(m, prods);
        let grads = tape.backward(loss);
        assert_eq!(grads["theta"].data, vec![2.0, 4.0]);
    }

    #[test]
    fn grl_negates_and_scales() {
        let up = Tensor::vector(vec![0.5, -1.0]);
        let out = grl_backward(&up, 0.5);
        assert_eq!(out.data, vec![-0.25, 0.5]);
        let zero = grl_backward(&up, 0.0);
        assert!(zero.data.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn grl_forward_is_identity() {
        let params = Parameters::new();
        let mut tape = Tape::new(&params);
        let x = tape.leaf(Tensor::vector(vec![1.0, -2.0, 3.0]));
        let y = tape.grl(x, 0.7);
        assert_eq!(tape.value(y).data, vec![1.0, -2.0, 3.0]);
    }

    #[test]
    fn grl_trunk_gradient_is_minus_lambda_times_bypassed() {
        let mut params = Parameters::new();
        params.insert("w", Tensor::from_vec(&[2, 2], vec![0.3, -0.2, 0.5, 0.1]));
        params.insert("v", Tensor::from_vec(&[1, 2], vec![0.7, -0.4]));
        let lambda = 0.6;

        let run = |with_grl: bool| {
            let mut tape = Tape::new(&params);
            let w = tape.param("w");
            let v = tape.param("v");
            let x = tape.leaf(Tensor::vector(vec![1.0, 2.0]));
            let h = tape.matvec(w, x);
            let h = tape.tanh(h);
            let h = if with_grl { tape.grl(h, lambda) } else { h };
            let o = tape.matvec(v, h);
            let loss = tape.sum_scaled(&[o], 1.0);
            tape.backward(loss)
        };

        let reversed = run(true);
        let bypassed = run(false);
        // trunk parameter w: reversed = -lambda * bypassed
        for (r, b) in reversed["w"].data.iter().zip(&bypassed["w"].data) {
            assert!((r - (-lambda) * b).abs() < 1e-12);
        }
        // head parameter v sits above the connector: untouched
        for (r, b) in reversed["v"].data.iter().zip(&bypassed["v"].data) {
            assert!((r - b).abs() < 1e-12);
        }
    }

    #[test]
    fn cross_entropy_matches_closed_forms() {
        let params = Parameters::new();
        let mut tape = Tape::new(&params);
        // uniform logits over 4 labels -> loss = ln 4
        let l = tape.leaf(Tensor::vector(vec![0.0; 4]));
        let ce = tape.cross_entropy_logits(l, 2).unwrap();
        assert!((tape.scalar_value(ce) - 4.0_f64.ln()).abs() < 1e-12);
        // near-one-hot -> loss near 0
        let l2 = tape.leaf(Tensor::vector(vec![50.0, 0.0, 0.0]));
        let ce2 = tape.cross_entropy_logits(l2, 0).unwrap();
        assert!(tape.scalar_value(ce2) < 1e-9);
    }

    #[test]
    fn gold_out_of_range_is_error() {
        let params = Parameters::new();
        let mut tape = Tape::new(&params);
        let l = tape.leaf(Tensor::vector(vec![0.0; 3]));
        assert!(tape.cross_entropy_logits(l, 3).is_err());
    }

    #[test]
    fn elementwise_ops_pass_finite_difference() {
        let mut params = Parameters::new();
        params.insert("w", Tensor::from_vec(&[3, 3], (0..9).map(|i| 0.1 * i as f64 - 0.4).collect()));
        params.insert("b", Tensor::vector(vec![0.05, -0.02, 0.3]));

        let loss_fn = |p: &Parameters| {
            let mut tape = Tape::new(p);
            let w = tape.param("w");
            let b = tape.param("b");
            let x = tape.leaf(Tensor::vector(vec![0.2, -0.7, 1.1]));
            let h = tape.matvec(w, x);
            let h = tape.add(h, b);
            let s = tape.sigmoid(h);
            let t = tape.tanh(h);
            let m = tape.mul(s, t);
            let u = tape.one_minus(m);
            let sm = tape.softmax(u);
            let picked = tape.mul(sm, u);
            let ones = tape.leaf(Tensor::from_vec(&[1, 3], vec![1.0; 3]));
            let red = tape.matvec(ones, picked);
            let loss = tape.sum_scaled(&[red], 1.0);
            (tape.scalar_value(loss), tape.backward(loss))
        };

        let (_, grads) = loss_fn(&params);
        for name in ["w", "b"] {
            let n = params.get(name).unwrap().len();
            for i in 0..n {
                let num = central_diff(&mut params, name, i, 1e-6, |p| loss_fn(p).0);
                let ana = grads[name].data[i];
                assert!(
                    (num - ana).abs() / ana.abs().max(1.0) < 1e-7,
                    "{name}[{i}]: analytic {ana} vs numeric {num}"
                );
            }
        }
    }

    #[test]
    fn max_pair_routes_gradient_to_winner() {
        let mut params = Parameters::new();
        params.insert("a", Tensor::vector(vec![1.0, -1.0]));
        params.insert("b", Tensor::vector(vec![0.0, 2.0]));
        let mut tape = Tape::new(&params);
        let a = tape.param("a");
        let b = tape.param("b");
        let m = tape.max_pair(a, b);
        let ones = tape.leaf(Tensor::from_vec(&[1, 2], vec![1.0, 1.0]));
        let red = tape.matvec(ones, m);
        let loss = tape.sum_scaled(&[red], 1.0);
        let grads = tape.backward(loss);
        assert_eq!(grads["a"].data, vec![1.0, 0.0]);
        assert_eq!(grads["b"].data, vec![0.0, 1.0]);
    }

    #[test]
    fn gather_row_accumulates_into_table() {
        let mut params = Parameters::new();
        params.insert("emb", Tensor::from_vec(&[3, 2], vec![0.0; 6]));
        let mut tape = Tape::new(&params);
        let table = tape.param("emb");
        let r1 = tape.gather_row(table, 1);
        let r1b = tape.gather_row(table, 1);
        let s = tape.add(r1, r1b);
        let ones = tape.leaf(Tensor::from_vec(&[1, 2], vec![1.0, 1.0]));
        let red = tape.matvec(ones, s);
        let loss = tape.sum_scaled(&[red], 1.0);
        let grads = tape.backward(loss);
        assert_eq!(grads["emb"].data, vec![0.0, 0.0, 2.0, 2.0, 0.0, 0.0]);
    }
}
