//! Locality-aware sample distribution for data-parallel training.
//!
//! Every learner caches a fixed shard of the dataset. Instead of cutting each
//! global mini-batch into even slices, a learner trains on the samples of the
//! batch it already holds, and a small transfer schedule restores equal local
//! batch sizes when the counts drift apart. The global batch, and therefore
//! the synchronous SGD trajectory, is unchanged.
//!
//! ```
//! use locload::balance::{balance, ImbalanceVector};
//! use locload::sampling::{build_directory, loc_counts};
//! use locload::sequence::{batches, permute_epoch};
//!
//! let dir = build_directory(1024, 4, 1.0)?;
//! let perm = permute_epoch(7, 0, 1024)?;
//! let first = &batches(&perm, 64)?[0];
//! let counts = loc_counts(first, &dir);
//! assert_eq!(counts.iter().sum::<usize>(), 64);
//!
//! let schedule = balance(&ImbalanceVector::new(counts));
//! assert!(schedule.len() <= 3);
//! # Ok::<(), locload::Error>(())
//! ```

pub mod balance;
pub mod equivalence;
mod error;
pub mod model;
pub mod pipeline;
mod rng;
pub mod sampling;
pub mod sequence;
pub mod simulate;

pub use error::{Error, Result};
pub use sequence::{LearnerId, SampleId};

// Guide chapters are compiled and run as doc-tests.
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/introduction.md")]
mod book_introduction {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/sequencing.md")]
mod book_sequencing {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/distribution.md")]
mod book_distribution {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/balancing.md")]
mod book_balancing {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/cost-model.md")]
mod book_cost_model {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/imbalance.md")]
mod book_imbalance {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/equivalence.md")]
mod book_equivalence {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/pipeline.md")]
mod book_pipeline {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/configuration.md")]
mod book_configuration {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/limits.md")]
mod book_limits {}
