//! Stacked convolutional GRU: the recurrent core that aggregates per-frame
//! candidate models into a hidden state, plus the output convolution that
//! turns hidden states into a target model.
//!
//! Cell (per layer, all convolutions 3x3 with zero padding, LN = layer
//! normalization over channels at each spatial site, applied to each gate
//! pre-activation):
//!
//! ```text
//! z = sigmoid(LN(Wz*u + Uz*h + bz))
//! r = sigmoid(LN(Wr*u + Ur*h + br))
//! c = tanh(LN(Wc*u + Uc*(r.h) + bc))
//! h' = (1-z).h + z.c
//! ```
//!
//! Dropout, when enabled, multiplies layer inputs only (never the recurrent
//! path) and only during training; masks are derived from `(seed, frame,
//! layer)` so a truncated-window replay sees the same masks as a full run.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::math;
use crate::rng::stream;
use crate::tape::{NodeId, ParamSet, Tape};
use crate::tensor::Tensor;

const GATES: [&str; 3] = ["update", "reset", "cand"];

/// Shape and regularization settings of the recurrent updater network.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvGruConfig {
    /// Channels of the candidate models fed in (and of the emitted model).
    pub model_channels: usize,
    /// Spatial size of the models (hidden states share it).
    pub model_size: usize,
    /// Hidden channels per layer; two layers by default.
    pub hidden_channels: Vec<usize>,
    /// Dropout rate on layer inputs during training.
    pub dropout: f32,
    /// Layer-norm epsilon.
    pub ln_eps: f32,
}

impl ConvGruConfig {
    /// Desk-scale default: hidden size tracks the model channel count.
    pub fn for_model(model_size: usize, model_channels: usize) -> Self {
        ConvGruConfig {
            model_channels,
            model_size,
            hidden_channels: alloc::vec![model_channels, model_channels],
            dropout: 0.1,
            ln_eps: 1e-5,
        }
    }

    pub fn layers(&self) -> usize {
        self.hidden_channels.len()
    }

    fn input_channels(&self, layer: usize) -> usize {
        if layer == 0 {
            self.model_channels
        } else {
            self.hidden_channels[layer - 1]
        }
    }

    /// Fresh all-zero hidden state.
    pub fn zero_state(&self) -> Vec<Tensor> {
        self.hidden_channels
            .iter()
            .map(|&c| Tensor::zeros(&[self.model_size, self.model_size, c]))
            .collect()
    }
}

fn gate_names(layer: usize, gate: &str) -> [String; 5] {
    [
        format!("gru{layer}.{gate}.wi"),
        format!("gru{layer}.{gate}.wh"),
        format!("gru{layer}.{gate}.bias"),
        format!("gru{layer}.{gate}.ln_gain"),
        format!("gru{layer}.{gate}.ln_offset"),
    ]
}

/// Standard-normal sample via Box-Muller.
fn gaussian(rng: &mut impl Rng) -> f64 {
    let u1: f64 = rng.gen_range(1e-12..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    math::sqrt(-2.0 * libm::log(u1)) * math::cos(2.0 * core::f64::consts::PI * u2)
}

/// Hidden-path kernels: rows of the flattened `ch x (k*k*ch)` matrix made
/// orthonormal by Gram-Schmidt, then reshaped to `k x k x ch x ch`.
fn orthogonal_kernel(k: usize, ch: usize, rng: &mut impl Rng) -> Tensor {
    let cols = k * k * ch;
    let mut rows: Vec<Vec<f64>> = (0..ch)
        .map(|_| (0..cols).map(|_| gaussian(rng)).collect())
        .collect();
    for i in 0..ch {
        for j in 0..i {
            let dot: f64 = rows[i].iter().zip(&rows[j]).map(|(a, b)| a * b).sum();
            for c in 0..cols {
                rows[i][c] -= dot * rows[j][c];
            }
        }
        let norm = math::sqrt(rows[i].iter().map(|v| v * v).sum::<f64>()).max(1e-12);
        for v in rows[i].iter_mut() {
            *v /= norm;
        }
    }
    // row c0 holds the kernel producing output channel c0; storage layout is
    // (u, v, cin, cout)
    let mut data = alloc::vec![0.0f32; k * k * ch * ch];
    for co in 0..ch {
        for u in 0..k {
            for v in 0..k {
                for ci in 0..ch {
                    data[((u * k + v) * ch + ci) * ch + co] =
                        rows[co][(u * k + v) * ch + ci] as f32;
                }
            }
        }
    }
    Tensor::from_vec(&[k, k, ch, ch], data).expect("finite init")
}

fn fan_in_uniform(shape: &[usize], fan_in: usize, rng: &mut impl Rng) -> Tensor {
    let bound = 1.0 / math::sqrtf(fan_in as f32);
    let numel: usize = shape.iter().product();
    let data: Vec<f32> = (0..numel).map(|_| rng.gen_range(-bound..bound)).collect();
    Tensor::from_vec(shape, data).expect("finite init")
}

/// Initializes all updater parameters: orthogonal hidden kernels, fan-in
/// uniform input kernels, zero biases, unit LN gain, plus the output
/// convolution that maps concatenated hidden states back to a model.
pub fn init_params(cfg: &ConvGruConfig, seed: u64) -> ParamSet {
    let mut params = ParamSet::new();
    let k = 3usize;
    for layer in 0..cfg.layers() {
        let cin = cfg.input_channels(layer);
        let ch = cfg.hidden_channels[layer];
        for (gi, gate) in GATES.iter().enumerate() {
            let mut rng = stream(seed, &[0x9720, layer as u64, gi as u64]);
            let [wi, wh, bias, gain, offset] = gate_names(layer, gate);
            params.insert(&wi, fan_in_uniform(&[k, k, cin, ch], k * k * cin, &mut rng));
            params.insert(&wh, orthogonal_kernel(k, ch, &mut rng));
            params.insert(&bias, Tensor::zeros(&[ch]));
            params.insert(&gain, Tensor::filled(&[ch], 1.0));
            params.insert(&offset, Tensor::zeros(&[ch]));
        }
    }
    let concat: usize = cfg.hidden_channels.iter().sum();
    let mut rng = stream(seed, &[0x9721]);
    params.insert(
        "emit.w",
        fan_in_uniform(
            &[k, k, concat, cfg.model_channels],
            k * k * concat,
            &mut rng,
        ),
    );
    params.insert("emit.bias", Tensor::zeros(&[cfg.model_channels]));
    params
}

fn id(ids: &BTreeMap<String, NodeId>, name: &str) -> Result<NodeId> {
    ids.get(name)
        .copied()
        .ok_or_else(|| Error::invalid("convgru", format!("missing parameter {name}")))
}

/// One recurrent step of a single layer on the tape.
pub fn gru_step(
    tape: &mut Tape,
    ids: &BTreeMap<String, NodeId>,
    layer: usize,
    h_prev: NodeId,
    input: NodeId,
    ln_eps: f32,
) -> Result<NodeId> {
    let h_shape = tape.value(h_prev).shape().to_vec();
    let zero_bias = tape.constant(Tensor::zeros(&[h_shape[2]]));

    let gate = |tape: &mut Tape, gate_name: &str, hid: NodeId| -> Result<NodeId> {
        let [wi, wh, bias, gain, offset] = gate_names(layer, gate_name);
        let from_input = tape.conv2d_same(input, id(ids, &wi)?, id(ids, &bias)?)?;
        let from_hidden = tape.conv2d_same(hid, id(ids, &wh)?, zero_bias)?;
        let pre = tape.add(from_input, from_hidden)?;
        tape.layer_norm_ch(pre, id(ids, &gain)?, id(ids, &offset)?, ln_eps)
    };

    let z = gate(tape, "update", h_prev)?;
    let z = tape.sigmoid(z)?;
    let r = gate(tape, "reset", h_prev)?;
    let r = tape.sigmoid(r)?;
    let gated_h = tape.mul(r, h_prev)?;
    let c = gate(tape, "cand", gated_h)?;
    let c = tape.tanh(c)?;

    // h' = (1-z).h + z.c
    let ones = tape.constant(Tensor::filled(&h_shape, 1.0));
    let one_minus_z = tape.sub(ones, z)?;
    let keep = tape.mul(one_minus_z, h_prev)?;
    let write = tape.mul(z, c)?;
    tape.add(keep, write)
}

/// Deterministic inverted-dropout mask for a layer input at a given frame.
pub fn dropout_mask(shape: &[usize], rate: f32, seed: u64, frame: u64, layer: u64) -> Tensor {
    let mut rng = stream(seed, &[0xd0d0, frame, layer]);
    let keep = 1.0 - rate;
    let numel: usize = shape.iter().product();
    let data: Vec<f32> = (0..numel)
        .map(|_| {
            if rng.gen_range(0.0f32..1.0) < keep {
                1.0 / keep
            } else {
                0.0
            }
        })
        .collect();
    Tensor::from_vec(shape, data).expect("finite mask")
}

/// Dropout context for one step; `None` at tracking time.
#[derive(Debug, Clone, Copy)]
pub struct StepDropout {
    pub seed: u64,
    pub frame: u64,
}

/// Advances the whole stack one step. Layer 0 consumes `input`, layer `l`
/// consumes layer `l-1`'s fresh hidden state. Returns one node per layer.
pub fn stack_step(
    tape: &mut Tape,
    ids: &BTreeMap<String, NodeId>,
    cfg: &ConvGruConfig,
    h_prev: &[NodeId],
    input: NodeId,
    dropout: Option<StepDropout>,
) -> Result<Vec<NodeId>> {
    if h_prev.len() != cfg.layers() {
        return Err(Error::invalid("stack_step", "hidden state layer count"));
    }
    let mut new_h = Vec::with_capacity(cfg.layers());
    let mut layer_input = input;
    for layer in 0..cfg.layers() {
        if let Some(ctx) = dropout {
            if cfg.dropout > 0.0 {
                let mask = dropout_mask(
                    tape.value(layer_input).shape(),
                    cfg.dropout,
                    ctx.seed,
                    ctx.frame,
                    layer as u64,
                );
                layer_input = tape.mul_const(layer_input, mask)?;
            }
        }
        let h = gru_step(tape, ids, layer, h_prev[layer], layer_input, cfg.ln_eps)?;
        new_h.push(h);
        layer_input = h;
    }
    Ok(new_h)
}

/// Generates a target model from the concatenated hidden states with one
/// 3x3 convolution.
pub fn emit_model(
    tape: &mut Tape,
    ids: &BTreeMap<String, NodeId>,
    hidden: &[NodeId],
) -> Result<NodeId> {
    let mut cat = hidden[0];
    for &h in &hidden[1..] {
        cat = tape.concat_ch(cat, h)?;
    }
    tape.conv2d_same(cat, id(ids, "emit.w")?, id(ids, "emit.bias")?)
}

/// Convenience: runs `stack_step` outside any training context and returns
/// the new hidden state as plain tensors.
pub fn step_values(
    params: &ParamSet,
    cfg: &ConvGruConfig,
    hidden: &[Tensor],
    input: &Tensor,
) -> Result<Vec<Tensor>> {
    let mut tape = Tape::new();
    let ids = params.bind(&mut tape, false);
    let h_ids: Vec<NodeId> = hidden.iter().map(|h| tape.constant(h.clone())).collect();
    let input_id = tape.constant(input.clone());
    let new_h = stack_step(&mut tape, &ids, cfg, &h_ids, input_id, None)?;
    Ok(new_h.iter().map(|&id| tape.value(id).clone()).collect())
}

/// Convenience: emits a model from plain hidden-state tensors.
pub fn emit_values(params: &ParamSet, hidden: &[Tensor]) -> Result<Tensor> {
    let mut tape = Tape::new();
    let ids = params.bind(&mut tape, false);
    let h_ids: Vec<NodeId> = hidden.iter().map(|h| tape.constant(h.clone())).collect();
    let out = emit_model(&mut tape, &ids, &h_ids)?;
    Ok(tape.value(out).clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn tiny_cfg() -> ConvGruConfig {
        ConvGruConfig {
            model_channels: 2,
            model_size: 4,
            hidden_channels: vec![2, 2],
            dropout: 0.0,
            ln_eps: 1e-5,
        }
    }

    #[test]
    fn zero_params_halve_hidden() {
        // gain = 0 forces all pre-activations to 0: z = r = 0.5, cand = 0,
        // so h' = 0.5 h
        let cfg = tiny_cfg();
        let mut params = init_params(&cfg, 1);
        for (name, value) in params.iter_mut() {
            if name.ends_with("ln_gain") {
                *value = Tensor::zeros(value.shape());
            }
        }
        let h: Vec<Tensor> = cfg
            .zero_state()
            .iter()
            .map(|t| Tensor::filled(t.shape(), 0.8))
            .collect();
        let input = Tensor::filled(&[4, 4, 2], 0.3);
        let out = step_values(&params, &cfg, &h, &input).unwrap();
        for layer in &out {
            for &v in layer.data() {
                assert!((v - 0.4).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn hidden_stays_bounded() {
        // |h'| <= max(|h|_inf, 1) elementwise; from h = 0 everything lands in (-1, 1)
        let cfg = tiny_cfg();
        let params = init_params(&cfg, 7);
        let mut h = cfg.zero_state();
        let mut rng = stream(3, &[1]);
        for step in 0..5 {
            let data: Vec<f32> = (0..32).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let input = Tensor::from_vec(&[4, 4, 2], data).unwrap();
            let prev_max: f32 = h
                .iter()
                .flat_map(|t| t.data().iter().map(|v| math::absf(*v)))
                .fold(0.0, f32::max);
            h = step_values(&params, &cfg, &h, &input).unwrap();
            for layer in &h {
                for &v in layer.data() {
                    assert!(math::absf(v) <= prev_max.max(1.0), "step {step}");
                    assert!(math::absf(v) < 1.0, "from h0=0 all steps stay in (-1,1)");
                }
            }
        }
    }

    #[test]
    fn one_layer_stack_reduces_to_gru_step() {
        let cfg = ConvGruConfig {
            hidden_channels: vec![2],
            ..tiny_cfg()
        };
        let params = init_params(&cfg, 5);
        let h0 = cfg.zero_state();
        let input = Tensor::filled(&[4, 4, 2], 0.25);

        let stacked = step_values(&params, &cfg, &h0, &input).unwrap();

        let mut tape = Tape::new();
        let ids = params.bind(&mut tape, false);
        let h_id = tape.constant(h0[0].clone());
        let in_id = tape.constant(input.clone());
        let direct = gru_step(&mut tape, &ids, 0, h_id, in_id, cfg.ln_eps).unwrap();
        assert_eq!(stacked[0], *tape.value(direct));
    }

    #[test]
    fn two_layer_stack_matches_hand_composition() {
        let cfg = tiny_cfg();
        let params = init_params(&cfg, 9);
        let h0 = cfg.zero_state();
        let input = Tensor::filled(&[4, 4, 2], -0.4);

        let stacked = step_values(&params, &cfg, &h0, &input).unwrap();

        let mut tape = Tape::new();
        let ids = params.bind(&mut tape, false);
        let h0_id = tape.constant(h0[0].clone());
        let h1_id = tape.constant(h0[1].clone());
        let in_id = tape.constant(input.clone());
        let l0 = gru_step(&mut tape, &ids, 0, h0_id, in_id, cfg.ln_eps).unwrap();
        let l1 = gru_step(&mut tape, &ids, 1, h1_id, l0, cfg.ln_eps).unwrap();
        assert_eq!(stacked[0], *tape.value(l0));
        assert_eq!(stacked[1], *tape.value(l1));
    }

    #[test]
    fn dropout_masks_are_reproducible() {
        let a = dropout_mask(&[4, 4, 2], 0.5, 11, 3, 0);
        let b = dropout_mask(&[4, 4, 2], 0.5, 11, 3, 0);
        let c = dropout_mask(&[4, 4, 2], 0.5, 11, 4, 0);
        assert_eq!(a, b);
        assert_ne!(a, c);
        // inverted dropout: kept entries are scaled by 1/keep
        for &v in a.data() {
            assert!(v == 0.0 || (v - 2.0).abs() < 1e-6);
        }
    }

    #[test]
    fn disabling_dropout_is_deterministic() {
        let cfg = tiny_cfg();
        let params = init_params(&cfg, 2);
        let h = cfg.zero_state();
        let input = Tensor::filled(&[4, 4, 2], 0.6);
        let a = step_values(&params, &cfg, &h, &input).unwrap();
        let b = step_values(&params, &cfg, &h, &input).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn saturated_update_gate_bound() {
        // force z ~ 1 by a large positive LN offset on the update gate:
        // h' = cand, which tanh keeps inside (-1, 1)
        let cfg = ConvGruConfig {
            hidden_channels: vec![2],
            ..tiny_cfg()
        };
        let mut params = init_params(&cfg, 4);
        *params.get_mut("gru0.update.ln_offset").unwrap() = Tensor::filled(&[2], 50.0);
        let h = cfg.zero_state();
        let input = Tensor::filled(&[4, 4, 2], 2.0);
        let out = step_values(&params, &cfg, &h, &input).unwrap();
        for &v in out[0].data() {
            assert!(v > -1.0 && v < 1.0);
        }
    }
}
