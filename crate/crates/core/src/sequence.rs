//! Sample and learner identifiers, epoch permutations and global batches.
//!
//! Every learner derives the same epoch order from `(seed, epoch)` alone, so
//! the global mini-batch sequence never has to be communicated.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Index of a sample in a dataset of `D` samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SampleId(pub u64);

impl SampleId {
    pub fn index(self) -> u64 {
        self.0
    }
}

impl fmt::Display for SampleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// Rank of a learner among `p` learners.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LearnerId(pub usize);

impl LearnerId {
    pub fn rank(self) -> usize {
        self.0
    }
}

impl fmt::Display for LearnerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "L{}", self.0)
    }
}

/// The sample order for one epoch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EpochPermutation {
    pub seed: u64,
    pub epoch: u64,
    pub order: Vec<SampleId>,
}

impl EpochPermutation {
    pub fn len(&self) -> u64 {
        self.order.len() as u64
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }
}

/// One step's globally agreed sequence of sample indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GlobalBatch {
    pub step: u64,
    pub samples: Vec<SampleId>,
}

impl GlobalBatch {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Shuffles `[0, d)` with Fisher–Yates driven by the keyed stream for
/// `(seed, epoch)`.
pub fn permute_epoch(seed: u64, epoch: u64, d: u64) -> Result<EpochPermutation> {
    if d == 0 {
        return Err(Error::InvalidDataset("dataset has no samples".into()));
    }
    let len = usize::try_from(d)
        .map_err(|_| Error::InvalidDataset(format!("{d} samples do not fit in memory")))?;
    let mut order: Vec<SampleId> = (0..d).map(SampleId).collect();
    let mut stream = rng::keyed(seed, rng::domain::PERMUTATION, epoch);
    for i in (1..len).rev() {
        let j = rng::below(&mut stream, i as u64 + 1) as usize;
        order.swap(i, j);
    }
    Ok(EpochPermutation { seed, epoch, order })
}

/// Cuts an epoch into `⌊D/b⌋` consecutive batches; the trailing `D mod b`
/// samples are dropped.
pub fn batches(perm: &EpochPermutation, b: usize) -> Result<Vec<GlobalBatch>> {
    if b == 0 || b as u64 > perm.len() {
        return Err(Error::InvalidBatchSize {
            batch: b,
            samples: perm.len(),
        });
    }
    Ok(perm
        .order
        .chunks_exact(b)
        .enumerate()
        .map(|(step, chunk)| GlobalBatch {
            step: step as u64,
            samples: chunk.to_vec(),
        })
        .collect())
}

/// Number of full batches an epoch of `d` samples yields.
pub fn batches_per_epoch(d: u64, b: usize) -> u64 {
    if b == 0 {
        0
    } else {
        d / b as u64
    }
}
