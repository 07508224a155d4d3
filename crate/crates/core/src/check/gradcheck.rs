//! Central finite-difference checks for every differentiable primitive and
//! for an unrolled recurrent chain.
//!
//! A scenario is a closure that rebuilds the same forward pass on a fresh
//! tape from a [`ParamSet`]; the check compares tape adjoints against
//! `(f(p+h) - f(p-h)) / 2h` with step `1e-3`. An element passes when
//! `|grad - fd| <= tol * max(1, |grad|, |fd|)` with `tol = 1e-4`. Tensors
//! larger than [`MAX_ELEMENTS_PER_TENSOR`] are probed on a seeded random
//! subset of elements.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::CheckReport;
use crate::convgru::{self, ConvGruConfig};
use crate::error::Result;
use crate::rng::stream;
use crate::tape::{NodeId, ParamSet, Tape};
use crate::tensor::Tensor;

pub const FD_STEP: f64 = 1e-3;
pub const FD_TOL: f64 = 1e-4;
pub const MAX_ELEMENTS_PER_TENSOR: usize = 48;

type Build = dyn Fn(&mut Tape, &BTreeMap<String, NodeId>) -> Result<NodeId>;

fn eval(params: &ParamSet, build: &Build) -> f64 {
    let mut tape = Tape::new();
    let ids = params.bind(&mut tape, false);
    let loss = build(&mut tape, &ids).expect("scenario forward");
    tape.value(loss).data()[0] as f64
}

/// Runs one finite-difference comparison; returns the worst error metric.
pub fn finite_diff_check(name: &str, params: &ParamSet, build: &Build, seed: u64) -> CheckReport {
    let mut tape = Tape::new();
    let ids = params.bind(&mut tape, true);
    let loss = build(&mut tape, &ids).expect("scenario forward");
    let grads = tape.backward(loss).expect("scenario backward");

    let mut max_metric = 0.0f64;
    let mut checked = 0usize;
    for (pname, tensor) in params.iter() {
        let grad = &grads[pname];
        let numel = tensor.numel();
        let picks: Vec<usize> = if numel <= MAX_ELEMENTS_PER_TENSOR {
            (0..numel).collect()
        } else {
            let mut rng = stream(seed, &[0xfd, checked as u64]);
            (0..MAX_ELEMENTS_PER_TENSOR)
                .map(|_| rng.gen_range(0..numel))
                .collect()
        };
        for k in picks {
            let mut plus = params.clone();
            plus.get_mut(pname).unwrap().data_mut()[k] += FD_STEP as f32;
            let mut minus = params.clone();
            minus.get_mut(pname).unwrap().data_mut()[k] -= FD_STEP as f32;
            let fd = (eval(&plus, build) - eval(&minus, build)) / (2.0 * FD_STEP);
            let g = grad.data()[k] as f64;
            let metric = (g - fd).abs() / g.abs().max(fd.abs()).max(1.0);
            max_metric = max_metric.max(metric);
            checked += 1;
        }
    }
    CheckReport::new(
        name,
        max_metric <= FD_TOL,
        max_metric,
        format!("{checked} elements, step {FD_STEP:.0e}"),
    )
}

fn random_tensor(shape: &[usize], rng: &mut impl Rng) -> Tensor {
    let numel: usize = shape.iter().product();
    let data: Vec<f32> = (0..numel).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Tensor::from_vec(shape, data).expect("finite")
}

/// Finite-difference suite over every differentiable primitive.
pub fn suite_primitives(seed: u64) -> Vec<CheckReport> {
    let mut rng = stream(seed, &[0x6c0]);
    let mut reports = Vec::new();

    // elementwise pair ops reduced by sum
    for op in ["add", "sub", "mul"] {
        let mut params = ParamSet::new();
        params.insert("a", random_tensor(&[3, 3], &mut rng));
        params.insert("b", random_tensor(&[3, 3], &mut rng));
        let name = format!("primitive {op}");
        let build = move |tape: &mut Tape, ids: &BTreeMap<String, NodeId>| {
            let (a, b) = (ids["a"], ids["b"]);
            let out = match op {
                "add" => tape.add(a, b)?,
                "sub" => tape.sub(a, b)?,
                _ => tape.mul(a, b)?,
            };
            // square to make the loss curvature nontrivial
            let sq = tape.mul(out, out)?;
            tape.sum_all(sq)
        };
        reports.push(finite_diff_check(&name, &params, &build, seed));
    }

    // unary ops
    for op in ["sigmoid", "tanh", "scale"] {
        let mut params = ParamSet::new();
        params.insert("a", random_tensor(&[4, 4], &mut rng));
        let name = format!("primitive {op}");
        let build = move |tape: &mut Tape, ids: &BTreeMap<String, NodeId>| {
            let a = ids["a"];
            let out = match op {
                "sigmoid" => tape.sigmoid(a)?,
                "tanh" => tape.tanh(a)?,
                _ => tape.scale(a, 1.7)?,
            };
            let sq = tape.mul(out, out)?;
            tape.sum_all(sq)
        };
        reports.push(finite_diff_check(&name, &params, &build, seed));
    }

    // dropout-style constant mask
    {
        let mut params = ParamSet::new();
        params.insert("a", random_tensor(&[4, 4], &mut rng));
        let mask = convgru::dropout_mask(&[4, 4], 0.3, seed, 0, 0);
        let build = move |tape: &mut Tape, ids: &BTreeMap<String, NodeId>| {
            let m = tape.mul_const(ids["a"], mask.clone())?;
            let sq = tape.mul(m, m)?;
            tape.sum_all(sq)
        };
        reports.push(finite_diff_check(
            "primitive mul_const (dropout mask)",
            &params,
            &build,
            seed,
        ));
    }

    // cross-correlation: gradients for both signal and kernel
    {
        let mut params = ParamSet::new();
        params.insert("signal", random_tensor(&[6, 6, 2], &mut rng));
        params.insert("kernel", random_tensor(&[3, 3, 2], &mut rng));
        let build = |tape: &mut Tape, ids: &BTreeMap<String, NodeId>| {
            let resp = tape.xcorr_valid(ids["signal"], ids["kernel"])?;
            tape.sum_all(resp)
        };
        reports.push(finite_diff_check(
            "primitive xcorr_valid (sum of response)",
            &params,
            &build,
            seed,
        ));
        // squared response exercises the upstream-dependent path
        let build2 = |tape: &mut Tape, ids: &BTreeMap<String, NodeId>| {
            let resp = tape.xcorr_valid(ids["signal"], ids["kernel"])?;
            let sq = tape.mul(resp, resp)?;
            tape.sum_all(sq)
        };
        reports.push(finite_diff_check(
            "primitive xcorr_valid (squared response)",
            &params,
            &build2,
            seed,
        ));
    }

    // same-size convolution layer
    {
        let mut params = ParamSet::new();
        params.insert("input", random_tensor(&[5, 5, 2], &mut rng));
        params.insert("w", random_tensor(&[3, 3, 2, 2], &mut rng));
        params.insert("b", random_tensor(&[2], &mut rng));
        let build = |tape: &mut Tape, ids: &BTreeMap<String, NodeId>| {
            let out = tape.conv2d_same(ids["input"], ids["w"], ids["b"])?;
            let sq = tape.mul(out, out)?;
            tape.sum_all(sq)
        };
        reports.push(finite_diff_check("primitive conv2d_same", &params, &build, seed));
    }

    // layer norm over channels
    {
        let mut params = ParamSet::new();
        params.insert("input", random_tensor(&[4, 4, 3], &mut rng));
        params.insert("gain", random_tensor(&[3], &mut rng));
        params.insert("offset", random_tensor(&[3], &mut rng));
        let build = |tape: &mut Tape, ids: &BTreeMap<String, NodeId>| {
            let out = tape.layer_norm_ch(ids["input"], ids["gain"], ids["offset"], 1e-5)?;
            let sq = tape.mul(out, out)?;
            tape.sum_all(sq)
        };
        reports.push(finite_diff_check("primitive layer_norm_ch", &params, &build, seed));
    }

    // channel concatenation
    {
        let mut params = ParamSet::new();
        params.insert("a", random_tensor(&[3, 3, 2], &mut rng));
        params.insert("b", random_tensor(&[3, 3, 1], &mut rng));
        let build = |tape: &mut Tape, ids: &BTreeMap<String, NodeId>| {
            let cat = tape.concat_ch(ids["a"], ids["b"])?;
            let sq = tape.mul(cat, cat)?;
            tape.sum_all(sq)
        };
        reports.push(finite_diff_check("primitive concat_ch", &params, &build, seed));
    }

    // reductions
    {
        let mut params = ParamSet::new();
        params.insert("a", random_tensor(&[4, 4], &mut rng));
        let build = |tape: &mut Tape, ids: &BTreeMap<String, NodeId>| {
            let sq = tape.mul(ids["a"], ids["a"])?;
            tape.mean_all(sq)
        };
        reports.push(finite_diff_check("primitive mean_all", &params, &build, seed));
    }

    // classification loss against a binary label map
    {
        let mut params = ParamSet::new();
        params.insert("logits", random_tensor(&[5, 5], &mut rng));
        let mut labels = Tensor::zeros(&[5, 5]);
        for k in [2usize, 7, 12, 17] {
            labels.data_mut()[k] = 1.0;
        }
        let build = move |tape: &mut Tape, ids: &BTreeMap<String, NodeId>| {
            tape.bce_logits_mean(ids["logits"], labels.clone())
        };
        reports.push(finite_diff_check("primitive bce_logits_mean", &params, &build, seed));
    }

    // anchor-style squared drift
    {
        let mut params = ParamSet::new();
        params.insert("a", random_tensor(&[3, 3, 2], &mut rng));
        params.insert("b", random_tensor(&[3, 3, 2], &mut rng));
        let build = |tape: &mut Tape, ids: &BTreeMap<String, NodeId>| {
            tape.sq_diff_mean(ids["a"], ids["b"])
        };
        reports.push(finite_diff_check("primitive sq_diff_mean", &params, &build, seed));
    }

    reports
}

/// Single recurrent step and a 3-step unrolled chain through the full
/// 2-layer stack plus the emission convolution.
pub fn suite_convgru(seed: u64) -> Vec<CheckReport> {
    let cfg = ConvGruConfig {
        model_channels: 2,
        model_size: 4,
        hidden_channels: vec![2, 2],
        dropout: 0.0,
        ln_eps: 1e-5,
    };
    let mut rng = stream(seed, &[0x6c2]);
    let mut params = convgru::init_params(&cfg, seed);
    // perturb LN offsets/biases away from zero so their gradients are informative
    for (name, value) in params.iter_mut() {
        if name.ends_with("bias") || name.ends_with("ln_offset") {
            for v in value.data_mut() {
                *v = rng.gen_range(-0.2..0.2);
            }
        }
    }
    let inputs: Vec<Tensor> = (0..3).map(|_| random_tensor(&[4, 4, 2], &mut rng)).collect();

    let cfg1 = cfg.clone();
    let inputs1 = inputs.clone();
    let one_step = move |tape: &mut Tape, ids: &BTreeMap<String, NodeId>| {
        let h0: Vec<NodeId> = cfg1
            .zero_state()
            .into_iter()
            .map(|h| tape.constant(h))
            .collect();
        let in_id = tape.constant(inputs1[0].clone());
        let h1 = crate::convgru::stack_step(tape, ids, &cfg1, &h0, in_id, None)?;
        let model = crate::convgru::emit_model(tape, ids, &h1)?;
        let sq = tape.mul(model, model)?;
        tape.sum_all(sq)
    };

    let cfg3 = cfg.clone();
    let inputs3 = inputs.clone();
    let three_step = move |tape: &mut Tape, ids: &BTreeMap<String, NodeId>| {
        let mut h: Vec<NodeId> = cfg3
            .zero_state()
            .into_iter()
            .map(|t| tape.constant(t))
            .collect();
        let mut total: Option<NodeId> = None;
        for input in &inputs3 {
            let in_id = tape.constant(input.clone());
            h = crate::convgru::stack_step(tape, ids, &cfg3, &h, in_id, None)?;
            let model = crate::convgru::emit_model(tape, ids, &h)?;
            let sq = tape.mul(model, model)?;
            let s = tape.sum_all(sq)?;
            total = Some(match total {
                Some(t) => tape.add(t, s)?,
                None => s,
            });
        }
        Ok(total.expect("nonempty chain"))
    };

    vec![
        finite_diff_check("convgru single step + emit", &params, &one_step, seed),
        finite_diff_check("convgru 3-step unrolled chain", &params, &three_step, seed),
    ]
}

/// The full gradient suite at one seed.
pub fn run_suite(seed: u64) -> Vec<CheckReport> {
    let mut reports = suite_primitives(seed);
    reports.extend(suite_convgru(seed));
    reports
}
