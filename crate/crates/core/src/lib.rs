//! Core algorithms for linear-target-model visual tracking with pluggable
//! model-update strategies.
//!
//! The crate is `no_std` (with `alloc`) so the numeric kernel stays portable
//! and bit-reproducible: all transcendentals go through [`libm`], every
//! reduction accumulates in `f64`, and nothing here touches the filesystem,
//! clocks or threads. IO, file formats and the CLI live in the companion
//! `lute` crate.
//!
//! Layout:
//! - [`tensor`], [`fft`]: dense arrays, cross-correlation, 2D transforms
//! - [`tape`]: reverse-mode differentiation over tensor primitives
//! - [`cf`]: closed-form correlation-filter learning in the Fourier domain
//! - [`convgru`]: stacked convolutional GRU cells
//! - [`updater`]: the four model-update strategies behind one interface
//! - [`loss`], [`train`]: meta-training losses, truncated BPTT, Adam
//! - [`frame`], [`features`], [`synth`]: images, feature extractors and the
//!   synthetic benchmark generator
//! - [`track`], [`metrics`]: the online tracking loop and OPE metrics
//! - [`check`]: independent oracles (finite differences, dense ridge solves,
//!   hand-unrolled backprop) used by tests and the `gradcheck`/`oracle`
//!   subcommands

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod cf;
pub mod check;
pub mod checkpoint;
pub mod convgru;
pub mod error;
pub mod features;
pub mod fft;
pub mod frame;
pub mod loss;
mod math;
pub mod metrics;
pub mod rng;
pub mod synth;
pub mod tape;
pub mod tensor;
pub mod track;
pub mod train;
pub mod updater;

pub use error::{Error, Result};
pub use tensor::Tensor;
