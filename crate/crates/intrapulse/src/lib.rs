//! Radar intra-pulse modulation recognition toolkit.
//!
//! The crate covers the full desk-scale experiment loop for classifying the
//! modulation inside a single detected radar pulse:
//!
//! - [`waveform`] — synthesis of complex baseband pulses for 23 intra-pulse
//!   modulation classes (chirps, Costas hops, Barker/polyphase/T phase codes,
//!   PSK) plus calibrated complex AWGN.
//! - [`tf`] — short-time Fourier analysis with the reassignment method and
//!   conversion to fixed-size 128x256 time-frequency images.
//! - [`phase`] — instantaneous-phase features: Hermite-Gaussian smoothed
//!   differentiation, robust phase-jump detection, and a discretized
//!   jump vector.
//! - [`net`] — a dual-branch convolutional network (2-D branch over the
//!   time-frequency image, 1-D branch over the jump vector, fused dense
//!   head) with hand-written backprop and an Adam trainer.
//! - [`dataset`] — deterministic dataset generation, binary serialization,
//!   and streaming batch loading.
//! - [`pipeline`] — the operations behind the `intrapulse` command line
//!   tool: `generate`, `train`, `eval`, `classify`, `export-tfi`.
//!
//! Every stage is a pure function of its inputs and seeds; identical seeds
//! reproduce datasets byte-for-byte and training trajectories bit-for-bit.
//!
//! The `examples/` directory has one runnable program per capability; start
//! with `cargo run --release --example synth_pulse`.

pub mod dataset;
pub mod error;
pub mod net;
pub mod phase;
pub mod pipeline;
pub mod tf;
pub mod waveform;

pub use error::{Error, Result};
