use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CleanEmail, CorpusError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    #[serde(rename = "val")]
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    /// File stem used in dataset bundles.
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "val" | "valid" | "validation" | "dev" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub seed: u64,
    pub assignments: BTreeMap<String, Split>,
}

impl SplitAssignment {
    pub fn get(&self, id: &str) -> Option<Split> {
        self.assignments.get(id).copied()
    }

    pub fn count(&self, split: Split) -> usize {
        self.assignments.values().filter(|s| **s == split).count()
    }

    /// Assigns every id to one split.
    pub fn all_in(split: Split, ids: impl IntoIterator<Item = String>) -> Self {
        Self {
            seed: 0,
            assignments: ids.into_iter().map(|id| (id, split)).collect(),
        }
    }
}

/// Samples disjoint train/validation/test sets of exactly the requested sizes.
///
/// Ids are sorted before shuffling, so the result depends only on the id set
/// and the seed, not on input order. E-mails not drawn are left unassigned.
pub fn sample_splits(
    emails: &[CleanEmail],
    sizes: (usize, usize, usize),
    seed: u64,
) -> Result<SplitAssignment, CorpusError> {
    let (train, val, test) = sizes;
    let requested = train + val + test;
    if emails.len() < requested {
        return Err(CorpusError::InsufficientCorpus {
            available: emails.len(),
            requested,
        });
    }
    let mut ids: Vec<&str> = emails.iter().map(|e| e.id.as_str()).collect();
    ids.sort_unstable();
    ids.dedup();
    if ids.len() < requested {
        return Err(CorpusError::InsufficientCorpus {
            available: ids.len(),
            requested,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);
    let labels = std::iter::repeat_n(Split::Train, train)
        .chain(std::iter::repeat_n(Split::Validation, val))
        .chain(std::iter::repeat_n(Split::Test, test));
    let assignments = ids
        .into_iter()
        .zip(labels)
        .map(|(id, s)| (id.to_string(), s))
        .collect();
    Ok(SplitAssignment { seed, assignments })
}
