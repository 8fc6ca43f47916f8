//! Multi-focus Gaussian neighborhood attention and a desk-scale video
//! crowd-localization pipeline.
//!
//! The crate is organized bottom-up:
//!
//! - [`tensor`]: dense `f64` tensors, numeric kernels, and a reverse-mode
//!   autodiff tape;
//! - [`attention`]: full attention plus the sampled sparse kernels (Gaussian
//!   neighborhood, local window, uniform-random, disk-random) driven by
//!   explicit sampling plans;
//! - [`bounds`]: an executable error bound comparing sparse attention to
//!   full attention;
//! - [`bench`]: wall-clock and accuracy benchmarks of the attention kernels;
//! - [`data`]: synthetic crowd-video generation and on-disk corpus I/O;
//! - [`model`]: the video network and its single-image ablation;
//! - [`training`]: weighted-BCE SGD training loops;
//! - [`evaluation`]: peak extraction, matching, AP/AR and counting metrics;
//! - [`config`], [`plot`], [`cli`]: the command-line surface.
//!
//! Every random quantity flows from explicit 64-bit seeds through
//! [`rng::Rng`] streams, so all results are reproducible.

pub mod attention;
pub mod bench;
pub mod bounds;
pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod model;
pub mod plot;
pub mod rng;
pub mod training;
pub mod tensor;

pub use error::{Error, Result};
