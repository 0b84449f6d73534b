use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use crate::error::Result;
use crate::sequence::SampleId;

/// Fixed-capacity in-memory sample cache.
///
/// Samples are admitted on first touch until the cache is full and are
/// never evicted afterwards.
#[derive(Debug)]
pub struct SampleCache {
    capacity: usize,
    entries: RwLock<HashMap<SampleId, Arc<[u8]>>>,
}

/// Whether a lookup was served from the cache.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Lookup {
    Hit,
    Miss,
}

impl SampleCache {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            entries: RwLock::new(HashMap::with_capacity(capacity.min(1 << 20))),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, id: SampleId) -> bool {
        self.entries.read().expect("cache lock poisoned").contains_key(&id)
    }

    /// Returns the cached bytes for `id`, or loads them with `load` and admits
    /// them if there is room.
    pub fn get_or_load(
        &self,
        id: SampleId,
        load: impl FnOnce() -> Result<Vec<u8>>,
    ) -> Result<(Arc<[u8]>, Lookup)> {
        if let Some(bytes) = self.entries.read().expect("cache lock poisoned").get(&id) {
            return Ok((Arc::clone(bytes), Lookup::Hit));
        }
        let bytes: Arc<[u8]> = load()?.into();
        if self.capacity > 0 {
            let mut entries = self.entries.write().expect("cache lock poisoned");
            if entries.len() < self.capacity {
                entries.entry(id).or_insert_with(|| Arc::clone(&bytes));
            }
        }
        Ok((bytes, Lookup::Miss))
    }
}
