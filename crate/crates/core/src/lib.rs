//! Learning-from-demonstration stack for automated dolly-in camera shots.
//!
//! The crate is organised bottom-up:
//!
//! - [`sim`]: deterministic kinematic simulation of a ground filming robot with
//!   a pan/tilt camera observing a static subject.
//! - [`rewards`]: the handcrafted per-step rewards for the Base and Full tasks.
//! - [`nn`]: dense MLPs with exact reverse-mode gradients, Adam, the squashed
//!   Gaussian policy and the discriminator.
//! - [`ppo`]: the clipped-surrogate policy-gradient trainer (also the GAIL generator).
//! - [`gail`]: adversarial imitation on top of [`ppo`].
//! - [`demos`]: demonstration recording, the `.demos.jsonl` format and a
//!   scripted stand-in expert.
//! - [`evalkit`]: framing errors, Spearman rank correlation, sim-vs-twin
//!   evaluation and learning-curve aggregation.
//! - [`config`]: the JSON run configuration shared by every front end.
//! - [`verify`]: the self-check suite behind `dolly verify`.

pub mod config;
pub mod demos;
pub mod error;
pub mod evalkit;
pub mod gail;
pub mod nn;
pub mod ppo;
pub mod rewards;
pub mod sim;
pub mod verify;

pub use error::{Error, Result};

/// Version string recorded in every artifact produced by this crate.
pub const SIM_VERSION: &str = concat!("dolly-sim/", env!("CARGO_PKG_VERSION"));
