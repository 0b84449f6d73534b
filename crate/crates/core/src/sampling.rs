//! The two ways of handing a global batch to learners.
//!
//! * Regular: learner `j` takes the `j`-th even slice of the batch sequence.
//! * Locality-aware: each learner takes the batch samples already resident in
//!   its own cache, as recorded by a replicated [`CacheDirectory`].
//!
//! The directory is a closed-form block partition of the lowest-indexed
//! `⌊α·D⌋` samples, so every learner can evaluate it without book-keeping and
//! it never changes after population.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sequence::{GlobalBatch, LearnerId, SampleId};

/// Replicated map from sample to the learner whose cache holds it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CacheDirectory {
    d: u64,
    p: usize,
    alpha: f64,
    cached: u64,
}

impl CacheDirectory {
    pub fn samples(&self) -> u64 {
        self.d
    }

    pub fn learners(&self) -> usize {
        self.p
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Number of samples resident in the aggregated cache, `⌊α·D⌋`.
    pub fn cached_count(&self) -> u64 {
        self.cached
    }

    /// Owner of `sample`, or `None` when it is not cached anywhere.
    pub fn owner(&self, sample: SampleId) -> Option<LearnerId> {
        if sample.0 >= self.cached {
            return None;
        }
        let rank = u128::from(sample.0) * self.p as u128 / u128::from(self.cached);
        Some(LearnerId(rank as usize))
    }

    /// Contiguous index range cached by `learner`.
    pub fn owned_range(&self, learner: LearnerId) -> Range<u64> {
        let start = |j: usize| -> u64 {
            let num = j as u128 * u128::from(self.cached);
            num.div_ceil(self.p as u128) as u64
        };
        start(learner.0)..start(learner.0 + 1)
    }

    pub fn owned_count(&self, learner: LearnerId) -> u64 {
        let r = self.owned_range(learner);
        r.end - r.start
    }
}

/// Builds the block-partition directory for `d` samples over `p` learners
/// with cached fraction `alpha`.
pub fn build_directory(d: u64, p: usize, alpha: f64) -> Result<CacheDirectory> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidFraction(alpha));
    }
    if p == 0 {
        return Err(Error::InvalidConfig("learner count must be at least 1".into()));
    }
    if d == 0 {
        return Err(Error::InvalidDataset("dataset has no samples".into()));
    }
    let cached = ((alpha * d as f64).floor() as u64).min(d);
    Ok(CacheDirectory { d, p, alpha, cached })
}

/// The samples one learner trains with in one step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocalAssignment {
    pub learner: LearnerId,
    pub step: u64,
    pub samples: Vec<SampleId>,
}

impl LocalAssignment {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Regular scheme: learner `j` receives positions `[B/p·j, B/p·(j+1))`.
pub fn reg_slice(batch: &GlobalBatch, p: usize, j: LearnerId) -> Result<LocalAssignment> {
    if p == 0 || batch.len() % p != 0 {
        return Err(Error::UnevenSlice {
            batch: batch.len(),
            learners: p,
        });
    }
    if j.0 >= p {
        return Err(Error::LearnerOutOfRange {
            learner: j.0,
            learners: p,
        });
    }
    let width = batch.len() / p;
    Ok(LocalAssignment {
        learner: j,
        step: batch.step,
        samples: batch.samples[width * j.0..width * (j.0 + 1)].to_vec(),
    })
}

/// All `p` regular slices of `batch`.
pub fn reg_slices(batch: &GlobalBatch, p: usize) -> Result<Vec<LocalAssignment>> {
    (0..p).map(|j| reg_slice(batch, p, LearnerId(j))).collect()
}

/// Result of walking a global batch against the cache directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LocDistribution {
    pub step: u64,
    /// Cache-resident batch samples per learner, in batch order.
    pub cached: Vec<LocalAssignment>,
    /// Batch samples not held by any cache, in batch order.
    pub uncached: Vec<SampleId>,
    uncached_positions: Vec<usize>,
}

impl LocDistribution {
    /// Per-learner cached counts.
    pub fn counts(&self) -> Vec<usize> {
        self.cached.iter().map(LocalAssignment::len).collect()
    }

    /// Local batches before balancing: each learner's cached samples plus
    /// the uncached samples dealt round-robin by their batch position.
    pub fn local_batches(&self) -> Vec<LocalAssignment> {
        let p = self.cached.len();
        let mut out = self.cached.clone();
        for (&pos, &sample) in self.uncached_positions.iter().zip(&self.uncached) {
            out[pos % p].samples.push(sample);
        }
        out
    }

    /// Per-learner sizes of [`local_batches`](Self::local_batches).
    pub fn local_counts(&self) -> Vec<usize> {
        let p = self.cached.len();
        let mut counts = self.counts();
        for &pos in &self.uncached_positions {
            counts[pos % p] += 1;
        }
        counts
    }
}

/// Locality-aware scheme: assigns each cached batch sample to its owner and
/// lists the rest as storage loads.
pub fn loc_distribution(batch: &GlobalBatch, dir: &CacheDirectory) -> LocDistribution {
    let mut cached: Vec<LocalAssignment> = (0..dir.learners())
        .map(|j| LocalAssignment {
            learner: LearnerId(j),
            step: batch.step,
            samples: Vec::with_capacity(batch.len() / dir.learners() + 1),
        })
        .collect();
    let mut uncached = Vec::new();
    let mut uncached_positions = Vec::new();
    for (pos, &sample) in batch.samples.iter().enumerate() {
        match dir.owner(sample) {
            Some(owner) => cached[owner.0].samples.push(sample),
            None => {
                uncached.push(sample);
                uncached_positions.push(pos);
            }
        }
    }
    LocDistribution {
        step: batch.step,
        cached,
        uncached,
        uncached_positions,
    }
}

/// Per-learner cached counts only; avoids building the assignments.
pub fn loc_counts(batch: &GlobalBatch, dir: &CacheDirectory) -> Vec<usize> {
    let mut counts = vec![0; dir.learners()];
    for &s in &batch.samples {
        if let Some(owner) = dir.owner(s) {
            counts[owner.0] += 1;
        }
    }
    counts
}
