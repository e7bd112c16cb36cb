//! F-statistic deep-embedding loss with oracle samplers and
//! disentanglement metrics.
//!
//! The crate is organised bottom-up:
//!
//! - [`specfun`]: log-gamma, incomplete beta, F distribution.
//! - [`floss`]: per-dimension F statistics, separation probabilities and the
//!   loss with its analytic gradient.
//! - [`baselines`]: the triplet loss used for comparison.
//! - [`encoder`]: a small ReLU MLP, ADAM and the early-stopping trainer.
//! - [`sampling`]: episodic minibatches for the class, conjunction and
//!   unnamed-factor oracles.
//! - [`synthdata`]: factorial datasets and the sixteen golden codes.
//! - [`metrics`]: recall@k, mutual information, modularity, explicitness.

use std::fmt;

use serde::{Deserialize, Serialize};

pub mod baselines;
pub mod encoder;
pub mod error;
pub mod floss;
pub mod io;
pub mod metrics;
pub mod sampling;
pub mod specfun;
pub mod synthdata;

pub use error::{Error, Result};

/// Opaque group identifier: a class, a conjunction of factor values, or a
/// single factor value, depending on which oracle produced it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Label(pub u32);

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<u32> for Label {
    fn from(v: u32) -> Self {
        Label(v)
    }
}
