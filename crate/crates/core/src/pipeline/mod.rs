//! A single-machine loading pipeline: worker pool, intra-batch parallel
//! sample tasks, bounded prefetch with in-order delivery, and a
//! no-replacement software cache.

mod cache;
mod dataset;
mod loader;

pub use cache::{Lookup, SampleCache};
pub use dataset::{sample_contents, sample_file_name, DatasetSpec};
pub use loader::{
    run_epoch, warm_cache_epoch, EpochBatches, LoadedBatch, Loader, LoaderConfig, Preprocess,
    ThroughputReport,
};
