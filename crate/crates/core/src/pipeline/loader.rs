use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use crossbeam_channel::{unbounded, Receiver, Sender};
use serde::{Deserialize, Serialize};

use super::cache::{Lookup, SampleCache};
use super::dataset::DatasetSpec;
use crate::error::{Error, Result};
use crate::sequence::{batches, permute_epoch, GlobalBatch, SampleId};

/// Work injected per sample after it is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Preprocess {
    None,
    /// Busy-wait this many microseconds.
    Spin(u64),
    /// Sleep this many microseconds.
    Sleep(u64),
}

impl Preprocess {
    fn per_sample(self) -> Duration {
        match self {
            Preprocess::None => Duration::ZERO,
            Preprocess::Spin(us) | Preprocess::Sleep(us) => Duration::from_micros(us),
        }
    }

    fn run(self) {
        match self {
            Preprocess::None => {}
            Preprocess::Sleep(us) => thread::sleep(Duration::from_micros(us)),
            Preprocess::Spin(us) => {
                let until = Instant::now() + Duration::from_micros(us);
                while Instant::now() < until {
                    std::hint::spin_loop();
                }
            }
        }
    }
}

impl fmt::Display for Preprocess {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Preprocess::None => f.write_str("none"),
            Preprocess::Spin(us) => write!(f, "spin:{us}"),
            Preprocess::Sleep(us) => write!(f, "sleep:{us}"),
        }
    }
}

impl FromStr for Preprocess {
    type Err = Error;

    /// Parses `none`, `spin:<µs>` or `sleep:<µs>`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidConfig(format!("bad preprocess {s:?}; use none, spin:<us> or sleep:<us>"));
        if s == "none" {
            return Ok(Preprocess::None);
        }
        let (kind, us) = s.split_once(':').ok_or_else(bad)?;
        let us: u64 = us.trim().parse().map_err(|_| bad())?;
        match kind.trim() {
            "spin" => Ok(Preprocess::Spin(us)),
            "sleep" => Ok(Preprocess::Sleep(us)),
            _ => Err(bad()),
        }
    }
}

impl TryFrom<String> for Preprocess {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Preprocess> for String {
    fn from(p: Preprocess) -> String {
        p.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoaderConfig {
    /// Batch-loading workers, each handling one batch at a time.
    pub workers: usize,
    /// Parallel sample tasks inside one batch.
    pub intra_batch_threads: usize,
    /// Batch requests kept outstanding ahead of the consumer.
    pub prefetch_depth: usize,
    pub batch_size: usize,
    pub preprocess: Preprocess,
    /// In-memory cache capacity in samples; `None` disables the cache.
    pub cache_capacity: Option<usize>,
}

impl Default for LoaderConfig {
    fn default() -> Self {
        Self {
            workers: 1,
            intra_batch_threads: 1,
            prefetch_depth: 2,
            batch_size: 64,
            preprocess: Preprocess::None,
            cache_capacity: None,
        }
    }
}

impl LoaderConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("workers", self.workers),
            ("intra_batch_threads", self.intra_batch_threads),
            ("prefetch_depth", self.prefetch_depth),
            ("batch_size", self.batch_size),
        ] {
            if v == 0 {
                return Err(Error::InvalidConfig(format!("{name} must be at least 1")));
            }
        }
        Ok(())
    }

    /// Epoch time implied by the injected delay alone: batches go out `W` at
    /// a time and each takes `⌈B/T⌉` sequential delays.
    pub fn predicted_epoch_time(&self, n: u64) -> Duration {
        let batches = n / self.batch_size as u64;
        let rounds = batches.div_ceil(self.workers as u64);
        let per_batch = self.batch_size.div_ceil(self.intra_batch_threads) as u32;
        self.preprocess.per_sample() * per_batch * rounds as u32
    }
}

/// A batch as handed to the consumer.
#[derive(Debug, Clone)]
pub struct LoadedBatch {
    pub step: u64,
    pub samples: Vec<SampleId>,
    pub data: Vec<Arc<[u8]>>,
    /// Time the worker spent loading this batch.
    pub load_time: Duration,
    pub cache_hits: u64,
    pub cache_misses: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThroughputReport {
    pub samples: u64,
    pub batches: u64,
    pub wall_time_s: f64,
    pub samples_per_second: f64,
    pub batch_latencies_s: Vec<f64>,
    pub cache_hits: u64,
    pub cache_misses: u64,
}

struct Request {
    step: u64,
    samples: Vec<SampleId>,
}

struct Completion {
    step: u64,
    result: Result<LoadedBatch>,
}

struct WorkerContext {
    dataset: DatasetSpec,
    cache: Option<Arc<SampleCache>>,
    preprocess: Preprocess,
    threads: usize,
}

impl WorkerContext {
    fn load_one(&self, id: SampleId) -> Result<(Arc<[u8]>, Lookup)> {
        let loaded = match &self.cache {
            Some(cache) => cache.get_or_load(id, || self.dataset.read_sample(id))?,
            None => (self.dataset.read_sample(id)?.into(), Lookup::Miss),
        };
        self.preprocess.run();
        Ok(loaded)
    }

    /// Loads `samples` with up to `threads` tasks pulling the next index
    /// from a shared counter; results keep batch order.
    fn load_all(&self, samples: &[SampleId]) -> Result<Vec<(Arc<[u8]>, Lookup)>> {
        let tasks = self.threads.min(samples.len()).max(1);
        if tasks == 1 {
            return samples.iter().map(|&id| self.load_one(id)).collect();
        }
        let next = AtomicUsize::new(0);
        let parts: Vec<Vec<(usize, Result<(Arc<[u8]>, Lookup)>)>> = thread::scope(|s| {
            let handles: Vec<_> = (0..tasks)
                .map(|_| {
                    s.spawn(|| {
                        let mut out = Vec::new();
                        loop {
                            let i = next.fetch_add(1, Ordering::Relaxed);
                            let Some(&id) = samples.get(i) else { break };
                            out.push((i, self.load_one(id)));
                        }
                        out
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("sample task panicked"))
                .collect()
        });
        let mut slots: Vec<Option<Result<(Arc<[u8]>, Lookup)>>> =
            (0..samples.len()).map(|_| None).collect();
        for (i, r) in parts.into_iter().flatten() {
            slots[i] = Some(r);
        }
        slots
            .into_iter()
            .map(|s| s.expect("every index is claimed by exactly one task"))
            .collect()
    }

    fn load_batch(&self, req: Request) -> Result<LoadedBatch> {
        let start = Instant::now();
        let loaded = self.load_all(&req.samples)?;
        let hits = loaded.iter().filter(|(_, l)| *l == Lookup::Hit).count() as u64;
        Ok(LoadedBatch {
            step: req.step,
            cache_hits: hits,
            cache_misses: loaded.len() as u64 - hits,
            data: loaded.into_iter().map(|(b, _)| b).collect(),
            samples: req.samples,
            load_time: start.elapsed(),
        })
    }
}

/// Prefetching batch loader: `W` workers fed through a request queue, each
/// fanning a batch out to `T` sample tasks, with completions reordered so
/// batches reach the consumer in step order.
pub struct Loader {
    cfg: LoaderConfig,
    dataset: DatasetSpec,
    cache: Option<Arc<SampleCache>>,
    requests: Option<Sender<Request>>,
    completions: Receiver<Completion>,
    workers: Vec<JoinHandle<()>>,
}

impl fmt::Debug for Loader {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Loader")
            .field("cfg", &self.cfg)
            .field("dataset", &self.dataset)
            .field("workers", &self.workers.len())
            .finish()
    }
}

impl Loader {
    pub fn new(dataset: DatasetSpec, cfg: LoaderConfig) -> Result<Self> {
        cfg.validate()?;
        if cfg.batch_size as u64 > dataset.n {
            return Err(Error::InvalidBatchSize {
                batch: cfg.batch_size,
                samples: dataset.n,
            });
        }
        let cache = cfg.cache_capacity.map(|c| Arc::new(SampleCache::new(c)));
        let ctx = Arc::new(WorkerContext {
            dataset: dataset.clone(),
            cache: cache.clone(),
            preprocess: cfg.preprocess,
            threads: cfg.intra_batch_threads,
        });
        let (req_tx, req_rx) = unbounded::<Request>();
        let (done_tx, done_rx) = unbounded::<Completion>();
        let workers = (0..cfg.workers)
            .map(|w| {
                let ctx = Arc::clone(&ctx);
                let req_rx = req_rx.clone();
                let done_tx = done_tx.clone();
                thread::Builder::new()
                    .name(format!("loader-worker-{w}"))
                    .spawn(move || {
                        for req in req_rx {
                            let step = req.step;
                            let result = ctx.load_batch(req);
                            if done_tx.send(Completion { step, result }).is_err() {
                                break;
                            }
                        }
                    })
                    .map_err(|e| Error::io("spawning loader worker", e))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            cfg,
            dataset,
            cache,
            requests: Some(req_tx),
            completions: done_rx,
            workers,
        })
    }

    pub fn config(&self) -> &LoaderConfig {
        &self.cfg
    }

    pub fn cache(&self) -> Option<&SampleCache> {
        self.cache.as_deref()
    }

    /// Starts an epoch; up to `prefetch_depth` requests go out immediately.
    pub fn epoch(&mut self, seed: u64, epoch: u64) -> Result<EpochBatches<'_>> {
        let perm = permute_epoch(seed, epoch, self.dataset.n)?;
        let queue: VecDeque<GlobalBatch> = batches(&perm, self.cfg.batch_size)?.into();
        let mut it = EpochBatches {
            total: queue.len() as u64,
            queue,
            loader: self,
            next_deliver: 0,
            in_flight: 0,
            pending: BTreeMap::new(),
            done: false,
        };
        it.fill();
        Ok(it)
    }

    /// Consumes one epoch, passing each batch to `sink` in step order.
    pub fn run_epoch(
        &mut self,
        seed: u64,
        epoch: u64,
        mut sink: impl FnMut(&LoadedBatch),
    ) -> Result<ThroughputReport> {
        let start = Instant::now();
        let mut report = ThroughputReport {
            samples: 0,
            batches: 0,
            wall_time_s: 0.0,
            samples_per_second: 0.0,
            batch_latencies_s: Vec::new(),
            cache_hits: 0,
            cache_misses: 0,
        };
        for batch in self.epoch(seed, epoch)? {
            let batch = batch?;
            sink(&batch);
            report.samples += batch.samples.len() as u64;
            report.batches += 1;
            report.cache_hits += batch.cache_hits;
            report.cache_misses += batch.cache_misses;
            report.batch_latencies_s.push(batch.load_time.as_secs_f64());
        }
        report.wall_time_s = start.elapsed().as_secs_f64();
        report.samples_per_second = report.samples as f64 / report.wall_time_s;
        Ok(report)
    }
}

impl Drop for Loader {
    fn drop(&mut self) {
        self.requests.take();
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }
}

/// Ordered batches of one epoch. Dropping it early waits for the requests
/// already in flight so the loader is clean for the next epoch.
pub struct EpochBatches<'a> {
    loader: &'a Loader,
    queue: VecDeque<GlobalBatch>,
    total: u64,
    next_deliver: u64,
    in_flight: usize,
    pending: BTreeMap<u64, Result<LoadedBatch>>,
    done: bool,
}

impl EpochBatches<'_> {
    fn fill(&mut self) {
        let Some(tx) = &self.loader.requests else { return };
        while self.in_flight + self.pending.len() < self.loader.cfg.prefetch_depth {
            let Some(batch) = self.queue.pop_front() else { break };
            let req = Request {
                step: batch.step,
                samples: batch.samples,
            };
            if tx.send(req).is_err() {
                break;
            }
            self.in_flight += 1;
        }
    }

    /// Completed batches waiting for an earlier step.
    pub fn buffered(&self) -> usize {
        self.pending.len()
    }
}

impl Iterator for EpochBatches<'_> {
    type Item = Result<LoadedBatch>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done || self.next_deliver == self.total {
            return None;
        }
        loop {
            if let Some(result) = self.pending.remove(&self.next_deliver) {
                self.next_deliver += 1;
                if result.is_err() {
                    self.done = true;
                } else {
                    self.fill();
                }
                return Some(result);
            }
            if self.in_flight == 0 {
                self.done = true;
                return Some(Err(Error::LoaderShutdown));
            }
            match self.loader.completions.recv() {
                Ok(c) => {
                    self.in_flight -= 1;
                    self.pending.insert(c.step, c.result);
                }
                Err(_) => {
                    self.done = true;
                    return Some(Err(Error::LoaderShutdown));
                }
            }
        }
    }
}

impl Drop for EpochBatches<'_> {
    fn drop(&mut self) {
        while self.in_flight > 0 {
            if self.loader.completions.recv().is_err() {
                break;
            }
            self.in_flight -= 1;
        }
    }
}

/// Loads one epoch of `dataset` with a fresh loader.
pub fn run_epoch(
    dataset: &DatasetSpec,
    cfg: LoaderConfig,
    seed: u64,
    epoch: u64,
) -> Result<ThroughputReport> {
    Loader::new(dataset.clone(), cfg)?.run_epoch(seed, epoch, |_| {})
}

/// Runs two consecutive epochs on one loader so the second sees the cache
/// populated by the first. Returns `(cold, warm)`.
pub fn warm_cache_epoch(
    dataset: &DatasetSpec,
    cfg: LoaderConfig,
    seed: u64,
) -> Result<(ThroughputReport, ThroughputReport)> {
    let mut loader = Loader::new(dataset.clone(), cfg)?;
    let cold = loader.run_epoch(seed, 0, |_| {})?;
    let warm = loader.run_epoch(seed, 1, |_| {})?;
    Ok((cold, warm))
}
