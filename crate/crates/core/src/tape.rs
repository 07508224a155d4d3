//! Reverse-mode differentiation: a flat tape of tensor primitives.
//!
//! Forward calls evaluate eagerly and record the op; [`Tape::backward`] walks
//! the record once in reverse, accumulating adjoints. There is no graph
//! rewriting — per-primitive adjoints composed by the tape are all a 2-layer
//! ConvGRU needs. A tape is single-use: one forward pass, one backward pass.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::tensor::{
    concat_channels, conv2d_same, conv2d_same_grads, xcorr_valid, xcorr_valid_grad_kernel,
    xcorr_valid_grad_signal, Tensor,
};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f32),
    Sigmoid(NodeId),
    Tanh(NodeId),
    /// Elementwise product with a constant tensor (dropout masks).
    MulConst(NodeId, Tensor),
    XcorrValid {
        signal: NodeId,
        kernel: NodeId,
    },
    Conv2dSame {
        input: NodeId,
        weights: NodeId,
        bias: NodeId,
    },
    LayerNormCh {
        input: NodeId,
        gain: NodeId,
        offset: NodeId,
        eps: f32,
    },
    ConcatCh(NodeId, NodeId),
    SumAll(NodeId),
    MeanAll(NodeId),
    /// Mean over cells of `softplus(r) - y*r`, the logistic loss with
    /// {0,1} labels held as constants.
    BceLogitsMean {
        logits: NodeId,
        labels: Tensor,
    },
    /// mean((a - b)^2)
    SqDiffMean(NodeId, NodeId),
}

struct Node {
    value: Tensor,
    op: Op,
    trainable: bool,
}

/// Gradients keyed by parameter name, in deterministic (sorted) order.
pub type GradMap = BTreeMap<String, Tensor>;

/// Named parameter tensors in deterministic order. The single source of truth
/// for trainable state; tapes bind copies of these values per forward pass.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamSet {
    entries: BTreeMap<String, Tensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, value: Tensor) {
        self.entries.insert(name.to_string(), value);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.entries.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.entries.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor)> {
        self.entries.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn num_values(&self) -> usize {
        self.entries.values().map(|t| t.numel()).sum()
    }

    /// Binds every entry onto a tape, trainable or frozen.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> BTreeMap<String, NodeId> {
        self.entries
            .iter()
            .map(|(name, value)| {
                let id = if trainable {
                    tape.param(name, value.clone())
                } else {
                    tape.constant(value.clone())
                };
                (name.clone(), id)
            })
            .collect()
    }
}

/// Ordered record of primitive applications plus leaf bookkeeping.
pub struct Tape {
    nodes: Vec<Node>,
    params: Vec<(String, NodeId)>,
    backward_done: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            params: Vec::new(),
            backward_done: false,
        }
    }

    fn push(&mut self, value: Tensor, op: Op) -> NodeId {
        self.nodes.push(Node {
            value,
            op,
            trainable: false,
        });
        NodeId(self.nodes.len() - 1)
    }

    /// Records a constant leaf (no gradient).
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf)
    }

    /// Records a trainable leaf; its gradient appears in the backward map.
    pub fn param(&mut self, name: &str, value: Tensor) -> NodeId {
        let id = self.push(value, Op::Leaf);
        self.nodes[id.0].trainable = true;
        self.params.push((name.to_string(), id));
        id
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).add(self.value(b))?;
        Ok(self.push(v, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).sub(self.value(b))?;
        Ok(self.push(v, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).mul(self.value(b))?;
        Ok(self.push(v, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: NodeId, k: f32) -> Result<NodeId> {
        let v = self.value(a).scale(k)?;
        Ok(self.push(v, Op::Scale(a, k)))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.value(a).sigmoid()?;
        Ok(self.push(v, Op::Sigmoid(a)))
    }

    pub fn tanh(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.value(a).tanh()?;
        Ok(self.push(v, Op::Tanh(a)))
    }

    pub fn mul_const(&mut self, a: NodeId, mask: Tensor) -> Result<NodeId> {
        let v = self.value(a).mul(&mask)?;
        Ok(self.push(v, Op::MulConst(a, mask)))
    }

    pub fn xcorr_valid(&mut self, signal: NodeId, kernel: NodeId) -> Result<NodeId> {
        let v = xcorr_valid(self.value(signal), self.value(kernel))?;
        Ok(self.push(v, Op::XcorrValid { signal, kernel }))
    }

    pub fn conv2d_same(&mut self, input: NodeId, weights: NodeId, bias: NodeId) -> Result<NodeId> {
        let v = conv2d_same(self.value(input), self.value(weights), self.value(bias))?;
        Ok(self.push(
            v,
            Op::Conv2dSame {
                input,
                weights,
                bias,
            },
        ))
    }

    /// Layer normalization over channels at each spatial site, with per-channel
    /// gain and offset.
    pub fn layer_norm_ch(
        &mut self,
        input: NodeId,
        gain: NodeId,
        offset: NodeId,
        eps: f32,
    ) -> Result<NodeId> {
        let x = self.value(input);
        let g = self.value(gain);
        let o = self.value(offset);
        if x.rank() != 3 || g.numel() != x.channels() || o.numel() != x.channels() {
            return Err(Error::ShapeMismatch {
                op: "layer_norm_ch",
                lhs: x.shape().to_vec(),
                rhs: g.shape().to_vec(),
            });
        }
        let (h, w) = x.hw();
        let c = x.channels();
        let mut out = Tensor::zeros(x.shape());
        for i in 0..h {
            for j in 0..w {
                let mut mean = 0.0f64;
                for k in 0..c {
                    mean += x.at3(i, j, k) as f64;
                }
                mean /= c as f64;
                let mut var = 0.0f64;
                for k in 0..c {
                    let d = x.at3(i, j, k) as f64 - mean;
                    var += d * d;
                }
                var /= c as f64;
                let inv = 1.0 / math::sqrt(var + eps as f64);
                for k in 0..c {
                    let xhat = (x.at3(i, j, k) as f64 - mean) * inv;
                    out.data_mut()[(i * w + j) * c + k] =
                        (xhat * g.data()[k] as f64 + o.data()[k] as f64) as f32;
                }
            }
        }
        out.ensure_finite("layer_norm_ch")?;
        Ok(self.push(
            out,
            Op::LayerNormCh {
                input,
                gain,
                offset,
                eps,
            },
        ))
    }

    pub fn concat_ch(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = concat_channels(self.value(a), self.value(b))?;
        Ok(self.push(v, Op::ConcatCh(a, b)))
    }

    pub fn sum_all(&mut self, a: NodeId) -> Result<NodeId> {
        let v = Tensor::scalar(self.value(a).sum() as f32);
        v.ensure_finite("sum_all")?;
        Ok(self.push(v, Op::SumAll(a)))
    }

    pub fn mean_all(&mut self, a: NodeId) -> Result<NodeId> {
        let v = Tensor::scalar(self.value(a).mean() as f32);
        v.ensure_finite("mean_all")?;
        Ok(self.push(v, Op::MeanAll(a)))
    }

    /// Normalized logistic loss over a response map against constant {0,1}
    /// labels: `mean(softplus(r) - y*r)`.
    pub fn bce_logits_mean(&mut self, logits: NodeId, labels: Tensor) -> Result<NodeId> {
        let r = self.value(logits);
        if r.shape() != labels.shape() {
            return Err(Error::ShapeMismatch {
                op: "bce_logits_mean",
                lhs: r.shape().to_vec(),
                rhs: labels.shape().to_vec(),
            });
        }
        let mut acc = 0.0f64;
        for (&rv, &yv) in r.data().iter().zip(labels.data()) {
            acc += math::softplusf(rv) as f64 - (yv * rv) as f64;
        }
        let v = Tensor::scalar((acc / r.numel() as f64) as f32);
        v.ensure_finite("bce_logits_mean")?;
        Ok(self.push(v, Op::BceLogitsMean { logits, labels }))
    }

    /// `mean((a - b)^2)`, the drift penalty against an anchor model.
    pub fn sq_diff_mean(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let d = self.value(a).sub(self.value(b))?;
        let v = Tensor::scalar((d.sq_norm() / d.numel() as f64) as f32);
        v.ensure_finite("sq_diff_mean")?;
        Ok(self.push(v, Op::SqDiffMean(a, b)))
    }

    /// Reverse pass from a scalar loss. Returns one gradient per trainable
    /// parameter. Errors if the loss is not scalar, if the tape is empty, or
    /// if backward already ran on this tape.
    pub fn backward(&mut self, loss: NodeId) -> Result<GradMap> {
        if self.backward_done {
            return Err(Error::invalid(
                "backward",
                "backward already ran on this tape; record a new forward pass",
            ));
        }
        if self.nodes.is_empty() || loss.0 >= self.nodes.len() {
            return Err(Error::invalid("backward", "no forward pass recorded"));
        }
        if self.nodes[loss.0].value.numel() != 1 {
            return Err(Error::invalid("backward", "loss must be scalar"));
        }
        self.backward_done = true;

        let mut adj: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        adj[loss.0] = Some(Tensor::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let up = match adj[idx].take() {
                Some(u) => u,
                None => continue,
            };
            let (op, value) = {
                let n = &self.nodes[idx];
                (n.op.clone(), n.value.clone())
            };
            match op {
                Op::Leaf => {
                    adj[idx] = Some(up);
                    continue;
                }
                Op::Add(a, b) => {
                    self.accumulate(&mut adj, a, up.clone());
                    self.accumulate(&mut adj, b, up);
                }
                Op::Sub(a, b) => {
                    self.accumulate(&mut adj, a, up.clone());
                    self.accumulate(&mut adj, b, up.scale(-1.0).expect("finite"));
                }
                Op::Mul(a, b) => {
                    let ga = self.nodes[b.0].value.mul(&up).expect("shapes recorded");
                    let gb = self.nodes[a.0].value.mul(&up).expect("shapes recorded");
                    self.accumulate(&mut adj, a, ga);
                    self.accumulate(&mut adj, b, gb);
                }
                Op::Scale(a, k) => {
                    self.accumulate(&mut adj, a, up.scale(k).expect("finite"));
                }
                Op::Sigmoid(a) => {
                    // s' = s(1-s), with s the stored output
                    let mut g = value.clone();
                    for (gv, &uv) in g.data_mut().iter_mut().zip(up.data()) {
                        *gv = *gv * (1.0 - *gv) * uv;
                    }
                    self.accumulate(&mut adj, a, g);
                }
                Op::Tanh(a) => {
                    let mut g = value.clone();
                    for (gv, &uv) in g.data_mut().iter_mut().zip(up.data()) {
                        *gv = (1.0 - *gv * *gv) * uv;
                    }
                    self.accumulate(&mut adj, a, g);
                }
                Op::MulConst(a, mask) => {
                    self.accumulate(&mut adj, a, up.mul(&mask).expect("shapes recorded"));
                }
                Op::XcorrValid { signal, kernel } => {
                    let gs = xcorr_valid_grad_signal(
                        &up,
                        &self.nodes[signal.0].value,
                        &self.nodes[kernel.0].value,
                    );
                    let gk = xcorr_valid_grad_kernel(
                        &up,
                        &self.nodes[signal.0].value,
                        &self.nodes[kernel.0].value,
                    );
                    self.accumulate(&mut adj, signal, gs);
                    self.accumulate(&mut adj, kernel, gk);
                }
                Op::Conv2dSame {
                    input,
                    weights,
                    bias,
                } => {
                    let (gi, gw, gb) = conv2d_same_grads(
                        &up,
                        &self.nodes[input.0].value,
                        &self.nodes[weights.0].value,
                    );
                    self.accumulate(&mut adj, input, gi);
                    self.accumulate(&mut adj, weights, gw);
                    self.accumulate(&mut adj, bias, gb);
                }
                Op::LayerNormCh {
                    input,
                    gain,
                    offset,
                    eps,
                } => {
                    let (gi, gg, go) =
                        layer_norm_ch_grads(&up, &self.nodes[input.0].value, &self.nodes[gain.0].value, eps);
                    self.accumulate(&mut adj, input, gi);
                    self.accumulate(&mut adj, gain, gg);
                    self.accumulate(&mut adj, offset, go);
                }
                Op::ConcatCh(a, b) => {
                    let ta = &self.nodes[a.0].value;
                    let (h, w) = ta.hw();
                    let ca = ta.channels();
                    let cb = self.nodes[b.0].value.channels();
                    let mut ga = Tensor::zeros(ta.shape());
                    let mut gb = Tensor::zeros(self.nodes[b.0].value.shape());
                    for i in 0..h {
                        for j in 0..w {
                            for c in 0..ca {
                                ga.data_mut()[(i * w + j) * ca + c] = up.at3(i, j, c);
                            }
                            for c in 0..cb {
                                gb.data_mut()[(i * w + j) * cb + c] = up.at3(i, j, ca + c);
                            }
                        }
                    }
                    self.accumulate(&mut adj, a, ga);
                    self.accumulate(&mut adj, b, gb);
                }
                Op::SumAll(a) => {
                    let u = up.data()[0];
                    let g = Tensor::filled(self.nodes[a.0].value.shape(), u);
                    self.accumulate(&mut adj, a, g);
                }
                Op::MeanAll(a) => {
                    let n = self.nodes[a.0].value.numel() as f32;
                    let g = Tensor::filled(self.nodes[a.0].value.shape(), up.data()[0] / n);
                    self.accumulate(&mut adj, a, g);
                }
                Op::BceLogitsMean { logits, labels } => {
                    let r = &self.nodes[logits.0].value;
                    let n = r.numel() as f32;
                    let u = up.data()[0];
                    let mut g = Tensor::zeros(r.shape());
                    for ((gv, &rv), &yv) in
                        g.data_mut().iter_mut().zip(r.data()).zip(labels.data())
                    {
                        *gv = (math::sigmoidf(rv) - yv) / n * u;
                    }
                    self.accumulate(&mut adj, logits, g);
                }
                Op::SqDiffMean(a, b) => {
                    let ta = &self.nodes[a.0].value;
                    let tb = &self.nodes[b.0].value;
                    let n = ta.numel() as f32;
                    let u = up.data()[0];
                    let mut ga = Tensor::zeros(ta.shape());
                    for ((gv, &av), &bv) in ga.data_mut().iter_mut().zip(ta.data()).zip(tb.data())
                    {
                        *gv = 2.0 * (av - bv) / n * u;
                    }
                    let gb = ga.scale(-1.0).expect("finite");
                    self.accumulate(&mut adj, a, ga);
                    self.accumulate(&mut adj, b, gb);
                }
            }
        }

        let mut grads = GradMap::new();
        for (name, id) in &self.params {
            let g = adj[id.0]
                .take()
                .unwrap_or_else(|| Tensor::zeros(self.nodes[id.0].value.shape()));
            grads.insert(name.clone(), g);
        }
        Ok(grads)
    }

    fn accumulate(&self, adj: &mut [Option<Tensor>], target: NodeId, grad: Tensor) {
        match &mut adj[target.0] {
            Some(existing) => {
                *existing = existing.add(&grad).expect("adjoint shapes match");
            }
            slot @ None => *slot = Some(grad),
        }
    }
}

fn layer_norm_ch_grads(
    upstream: &Tensor,
    x: &Tensor,
    gain: &Tensor,
    eps: f32,
) -> (Tensor, Tensor, Tensor) {
    let (h, w) = x.hw();
    let c = x.channels();
    let mut gi = Tensor::zeros(x.shape());
    let mut gg = Tensor::zeros(gain.shape());
    let mut go = Tensor::zeros(gain.shape());
    for i in 0..h {
        for j in 0..w {
            let mut mean = 0.0f64;
            for k in 0..c {
                mean += x.at3(i, j, k) as f64;
            }
            mean /= c as f64;
            let mut var = 0.0f64;
            for k in 0..c {
                let d = x.at3(i, j, k) as f64 - mean;
                var += d * d;
            }
            var /= c as f64;
            let inv = 1.0 / math::sqrt(var + eps as f64);

            // dxhat, then the two coupled reduction terms
            let mut sum_dxhat = 0.0f64;
            let mut sum_dxhat_xhat = 0.0f64;
            let mut dxhat = [0.0f64; 64];
            let mut xhat = [0.0f64; 64];
            debug_assert!(c <= 64, "channel count beyond desk scale");
            for k in 0..c {
                let xh = (x.at3(i, j, k) as f64 - mean) * inv;
                let du = upstream.at3(i, j, k) as f64;
                let dxh = du * gain.data()[k] as f64;
                xhat[k] = xh;
                dxhat[k] = dxh;
                sum_dxhat += dxh;
                sum_dxhat_xhat += dxh * xh;
                gg.data_mut()[k] += (du * xh) as f32;
                go.data_mut()[k] += du as f32;
            }
            let cn = c as f64;
            for k in 0..c {
                let g = inv * (dxhat[k] - sum_dxhat / cn - xhat[k] * sum_dxhat_xhat / cn);
                gi.data_mut()[(i * w + j) * c + k] = g as f32;
            }
        }
    }
    (gi, gg, go)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn square_grad() {
        let mut tape = Tape::new();
        let p = tape.param("p", Tensor::scalar(3.0));
        let sq = tape.mul(p, p).unwrap();
        let loss = tape.sum_all(sq).unwrap();
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads["p"].data()[0], 6.0);
    }

    #[test]
    fn sigmoid_grad_at_zero() {
        let mut tape = Tape::new();
        let p = tape.param("p", Tensor::scalar(0.0));
        let s = tape.sigmoid(p).unwrap();
        let loss = tape.sum_all(s).unwrap();
        let grads = tape.backward(loss).unwrap();
        assert!((grads["p"].data()[0] - 0.25).abs() < 1e-7);
    }

    #[test]
    fn backward_twice_is_an_error() {
        let mut tape = Tape::new();
        let p = tape.param("p", Tensor::scalar(2.0));
        let loss = tape.sum_all(p).unwrap();
        tape.backward(loss).unwrap();
        assert!(tape.backward(loss).is_err());
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut tape = Tape::new();
        let p = tape.param("p", Tensor::from_vec(&[2], vec![1.0, 2.0]).unwrap());
        assert!(tape.backward(p).is_err());
    }

    #[test]
    fn backward_before_forward_rejected() {
        let mut tape = Tape::new();
        assert!(tape.backward(NodeId(0)).is_err());
    }

    #[test]
    fn grads_exist_only_for_trainable() {
        let mut tape = Tape::new();
        let p = tape.param("p", Tensor::scalar(1.0));
        let c = tape.constant(Tensor::scalar(5.0));
        let prod = tape.mul(p, c).unwrap();
        let loss = tape.sum_all(prod).unwrap();
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.len(), 1);
        assert_eq!(grads["p"].data()[0], 5.0);
    }

    #[test]
    fn bce_at_zero_logits_is_ln2() {
        let mut tape = Tape::new();
        let r = tape.param("r", Tensor::zeros(&[3, 3]));
        let y = Tensor::zeros(&[3, 3]);
        let loss = tape.bce_logits_mean(r, y).unwrap();
        let v = tape.value(loss).data()[0];
        assert!((v - core::f32::consts::LN_2).abs() < 1e-6);
    }
}
