//! Conditioned soft actor-critic. The same agent serves both halves of the
//! training loop: conditioned on a latent skill while exploring, and on an
//! encoded goal while imitating. The condition vector is concatenated to the
//! state at every network input.

pub mod replay;
pub mod sac;

pub use replay::ReplayBuffer;
pub use sac::{soft_update, ActionMode, SacAgent, SacConfig, SacLosses};
