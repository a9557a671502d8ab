//! Unsupervised learning of perceptual goal-conditioned policies.
//!
//! A latent-conditioned policy explores the environment and, together with a
//! shared discriminator, generates goals and reward functions for a second,
//! goal-conditioned policy. The crate bundles the environments, the two
//! soft actor-critic agents, the discriminator rewards, the perception codec,
//! the comparison baselines and the evaluation/verification tooling needed to
//! run the whole training loop on a single core.

pub mod analysis;
pub mod baselines;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod discriminator;
pub mod envs;
pub mod error;
pub mod numerics;
pub mod perception;
pub mod policy;
pub mod rng;
pub mod trainer;

pub use error::{Error, Result};
