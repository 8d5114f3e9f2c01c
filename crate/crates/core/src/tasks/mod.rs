//! Concrete search spaces: sequence labeling, multiclass prediction through
//! a label tree, and arc-hybrid dependency parsing.

mod data;
mod multiclass;
mod parse;
mod sequence;
mod synth;

pub use data::{read_csv, read_tsv, write_csv, write_tsv, MulticlassRow, Sentence, TagSet};
pub use multiclass::{LabelTree, LabelTreeTask, TreeState};
pub use parse::{ParseAction, ParseConfig, ParseTask};
pub use sequence::SequenceTask;
pub use synth::{synth_multiclass, synth_parse, synth_sequences};

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::features::mix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReferenceQuality {
    #[default]
    Optimal,
    Suboptimal,
    Bad,
}

impl FromStr for ReferenceQuality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "optimal" => Ok(Self::Optimal),
            "suboptimal" => Ok(Self::Suboptimal),
            "bad" => Ok(Self::Bad),
            other => Err(Error::BadConfig(format!("unknown reference quality '{other}'"))),
        }
    }
}

/// Fraction of decisions a suboptimal sequence or tree reference gets wrong.
pub const SUBOPTIMAL_ERROR_RATE: f64 = 0.3;

/// Fixed pseudo-random action in `0..k` for a structural state key.
pub(crate) fn keyed_choice(seed: u64, keys: &[u64], k: usize) -> usize {
    (mix(seed, keys) % k as u64) as usize
}

/// Fixed pseudo-random coin with probability `p` for a structural state key.
pub(crate) fn keyed_coin(seed: u64, keys: &[u64], p: f64) -> bool {
    ((mix(seed ^ 0x5bd1_e995, keys) >> 11) as f64 / (1u64 << 53) as f64) < p
}
