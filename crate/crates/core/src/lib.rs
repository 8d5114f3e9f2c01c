//! Learning to search with locally optimal guarantees.
//!
//! * [`search`]: search spaces, linear policies, trajectory execution.
//! * [`cslearn`]: online cost-sensitive one-against-all learner.
//! * [`lols`]: the roll-in / roll-out training loop.
//! * [`bandit`]: epsilon-greedy structured contextual bandit learning.
//! * [`tasks`]: sequence labeling, label-tree multiclass and arc-hybrid parsing.
//! * [`theory`]: exact evaluation on small enumerable search spaces.
//! * [`experiment`]: configs, training/evaluation drivers and the strategy grid.

pub mod bandit;
pub mod cslearn;
pub mod error;
pub mod experiment;
pub mod features;
pub mod lols;
pub mod rng;
pub mod search;
pub mod tasks;
pub mod theory;

pub use error::{Error, Result};
