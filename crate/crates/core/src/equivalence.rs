//! Synchronous data-parallel SGD on a toy least-squares problem, run under
//! the regular and locality-aware distribution schemes.
//!
//! All learners are simulated in one thread. Each step every learner computes
//! per-sample gradients over its local batch and the step's global gradient
//! is their sum divided by `B`. With [`Aggregation::Canonical`] the sum runs
//! over all per-sample gradients sorted by sample id, so the result does not
//! depend on which learner computed which sample and the weight trajectories
//! of the schemes match bit for bit.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::balance::balance_assignments;
use crate::error::{Error, Result};
use crate::rng;
use crate::sampling::{build_directory, loc_distribution, reg_slices, LocalAssignment};
use crate::sequence::{batches, batches_per_epoch, permute_epoch, GlobalBatch, SampleId};

/// Weight dimension of the toy model.
pub const TOY_DIM: usize = 8;

/// Linear least squares: `g_i(w) = ½ (w·x_i − y_i)²`, `F(w) = mean g_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyObjective {
    features: Vec<f64>,
    labels: Vec<f64>,
}

impl ToyObjective {
    /// `n` samples with roughly standard-normal features and labels from a
    /// random linear teacher plus small noise.
    pub fn generate(n: u64, seed: u64) -> Self {
        let mut stream = rng::keyed(seed, rng::domain::TOY_DATA, 0);
        let mut gaussish = || {
            let s: f64 = (0..4).map(|_| rng::unit(&mut stream)).sum();
            (s - 2.0) * 3f64.sqrt()
        };
        let teacher: Vec<f64> = (0..TOY_DIM).map(|_| gaussish()).collect();
        let mut features = Vec::with_capacity(n as usize * TOY_DIM);
        let mut labels = Vec::with_capacity(n as usize);
        for _ in 0..n {
            let x: Vec<f64> = (0..TOY_DIM).map(|_| gaussish()).collect();
            labels.push(dot(&teacher, &x) + 0.1 * gaussish());
            features.extend(x);
        }
        Self { features, labels }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn features(&self, id: SampleId) -> &[f64] {
        let i = id.0 as usize;
        &self.features[i * TOY_DIM..(i + 1) * TOY_DIM]
    }

    pub fn label(&self, id: SampleId) -> f64 {
        self.labels[id.0 as usize]
    }

    fn residual(&self, w: &[f64], id: SampleId) -> f64 {
        dot(w, self.features(id)) - self.label(id)
    }

    pub fn loss(&self, w: &[f64], id: SampleId) -> f64 {
        0.5 * self.residual(w, id).powi(2)
    }

    /// `∇g_i(w) = (w·x_i − y_i) x_i`.
    pub fn gradient(&self, w: &[f64], id: SampleId) -> Vec<f64> {
        let r = self.residual(w, id);
        self.features(id).iter().map(|x| r * x).collect()
    }

    pub fn objective(&self, w: &[f64]) -> f64 {
        let n = self.len();
        (0..n as u64).map(|i| self.loss(w, SampleId(i))).sum::<f64>() / n as f64
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn add_into(acc: &mut [f64], g: &[f64]) {
    for (a, x) in acc.iter_mut().zip(g) {
        *a += x;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplingScheme {
    /// Even block slices of the batch.
    Reg,
    /// Cache-resident samples, unbalanced.
    Loc,
    /// Cache-resident samples, balanced with the greedy schedule.
    LocBalanced,
}

impl SamplingScheme {
    pub const ALL: [SamplingScheme; 3] = [
        SamplingScheme::Reg,
        SamplingScheme::Loc,
        SamplingScheme::LocBalanced,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SamplingScheme::Reg => "reg",
            SamplingScheme::Loc => "loc",
            SamplingScheme::LocBalanced => "loc-balanced",
        }
    }
}

impl fmt::Display for SamplingScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SamplingScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown sampling scheme {s:?}")))
    }
}

/// Order in which per-sample gradients are summed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Aggregation {
    /// All per-sample gradients of the step sorted by sample id.
    Canonical,
    /// Each learner sums its own samples in local order, then learner sums
    /// are added by rank, as a plain all-reduce would.
    LearnerOrder,
}

/// One learner's contribution to a step.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalGradients {
    pub per_sample: Vec<(SampleId, Vec<f64>)>,
}

impl LocalGradients {
    pub fn compute(obj: &ToyObjective, w: &[f64], local: &LocalAssignment) -> Self {
        Self {
            per_sample: local
                .samples
                .iter()
                .map(|&id| (id, obj.gradient(w, id)))
                .collect(),
        }
    }
}

/// Sum of all contributions (not yet divided by `B`).
pub fn aggregate(contributions: &[LocalGradients], mode: Aggregation) -> Vec<f64> {
    let mut total = vec![0.0; TOY_DIM];
    match mode {
        Aggregation::Canonical => {
            let mut all: Vec<&(SampleId, Vec<f64>)> =
                contributions.iter().flat_map(|c| &c.per_sample).collect();
            all.sort_by_key(|(id, _)| *id);
            for (_, g) in all {
                add_into(&mut total, g);
            }
        }
        Aggregation::LearnerOrder => {
            for c in contributions {
                let mut local = vec![0.0; TOY_DIM];
                for (_, g) in &c.per_sample {
                    add_into(&mut local, g);
                }
                add_into(&mut total, &local);
            }
        }
    }
    total
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub scheme: SamplingScheme,
    pub learners: usize,
    pub batch_size: usize,
    pub dataset_size: u64,
    pub steps: u64,
    pub learning_rate: f64,
    pub seed: u64,
    pub aggregation: Aggregation,
}

impl TrainingConfig {
    pub fn new(scheme: SamplingScheme, learners: usize, batch_size: usize, steps: u64, seed: u64) -> Self {
        Self {
            scheme,
            learners,
            batch_size,
            dataset_size: 768,
            steps,
            learning_rate: 0.05,
            seed,
            aggregation: Aggregation::Canonical,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.learners == 0 {
            return Err(Error::InvalidConfig("learners must be at least 1".into()));
        }
        if self.batch_size == 0 || self.batch_size as u64 > self.dataset_size {
            return Err(Error::InvalidBatchSize {
                batch: self.batch_size,
                samples: self.dataset_size,
            });
        }
        if self.scheme == SamplingScheme::Reg && self.batch_size % self.learners != 0 {
            return Err(Error::UnevenSlice {
                batch: self.batch_size,
                learners: self.learners,
            });
        }
        Ok(())
    }
}

/// Everything a run produced, step by step.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingTrace {
    /// Global gradient applied at each step.
    pub gradients: Vec<Vec<f64>>,
    /// Weights after each step.
    pub weights: Vec<Vec<f64>>,
    /// Global batch of each step.
    pub batches: Vec<GlobalBatch>,
    /// Local batch sizes per step.
    pub local_sizes: Vec<Vec<usize>>,
}

impl TrainingTrace {
    pub fn final_weights(&self) -> &[f64] {
        self.weights.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

fn assign(cfg: &TrainingConfig, batch: &GlobalBatch, dir_d: u64) -> Result<Vec<LocalAssignment>> {
    match cfg.scheme {
        SamplingScheme::Reg => reg_slices(batch, cfg.learners),
        SamplingScheme::Loc | SamplingScheme::LocBalanced => {
            let dir = build_directory(dir_d, cfg.learners, 1.0)?;
            let local = loc_distribution(batch, &dir).local_batches();
            Ok(if cfg.scheme == SamplingScheme::LocBalanced {
                balance_assignments(&local).1
            } else {
                local
            })
        }
    }
}

/// Trains from zero weights for `cfg.steps` steps, walking consecutive
/// epochs of the `(seed, epoch)` permutation.
pub fn run_training(cfg: &TrainingConfig) -> Result<TrainingTrace> {
    cfg.validate()?;
    let obj = ToyObjective::generate(cfg.dataset_size, cfg.seed);
    let per_epoch = batches_per_epoch(cfg.dataset_size, cfg.batch_size);
    let mut w = vec![0.0; TOY_DIM];
    let mut trace = TrainingTrace {
        gradients: Vec::with_capacity(cfg.steps as usize),
        weights: Vec::with_capacity(cfg.steps as usize),
        batches: Vec::with_capacity(cfg.steps as usize),
        local_sizes: Vec::with_capacity(cfg.steps as usize),
    };
    let mut epoch_batches: Vec<GlobalBatch> = Vec::new();
    for t in 0..cfg.steps {
        let (epoch, k) = (t / per_epoch, (t % per_epoch) as usize);
        if k == 0 {
            epoch_batches = batches(&permute_epoch(cfg.seed, epoch, cfg.dataset_size)?, cfg.batch_size)?;
        }
        let batch = &epoch_batches[k];
        let local = assign(cfg, batch, cfg.dataset_size)?;
        let contributions: Vec<LocalGradients> = local
            .iter()
            .map(|a| LocalGradients::compute(&obj, &w, a))
            .collect();
        let mut g = aggregate(&contributions, cfg.aggregation);
        for x in &mut g {
            *x /= cfg.batch_size as f64;
        }
        for (wi, gi) in w.iter_mut().zip(&g) {
            *wi -= cfg.learning_rate * gi;
        }
        trace.local_sizes.push(local.iter().map(LocalAssignment::len).collect());
        trace.gradients.push(g);
        trace.weights.push(w.clone());
        trace.batches.push(GlobalBatch {
            step: t,
            samples: batch.samples.clone(),
        });
    }
    Ok(trace)
}

/// Runs locality-aware training without and with balancing on otherwise
/// identical settings. Returns `(unbalanced, balanced)`.
pub fn run_training_imbalanced_vs_balanced(
    learners: usize,
    batch_size: usize,
    steps: u64,
    seed: u64,
) -> Result<(TrainingTrace, TrainingTrace)> {
    let base = TrainingConfig::new(SamplingScheme::Loc, learners, batch_size, steps, seed);
    let balanced = TrainingConfig {
        scheme: SamplingScheme::LocBalanced,
        ..base
    };
    Ok((run_training(&base)?, run_training(&balanced)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceComparison {
    /// Every weight of every step is bitwise equal.
    pub identical: bool,
    /// Largest per-coordinate weight difference over all steps.
    pub max_abs_diff: f64,
}

pub fn compare(a: &TrainingTrace, b: &TrainingTrace) -> TraceComparison {
    let mut identical = a.weights.len() == b.weights.len();
    let mut max_abs_diff: f64 = 0.0;
    for (wa, wb) in a.weights.iter().zip(&b.weights) {
        for (x, y) in wa.iter().zip(wb) {
            identical &= x.to_bits() == y.to_bits();
            max_abs_diff = max_abs_diff.max((x - y).abs());
        }
    }
    TraceComparison {
        identical,
        max_abs_diff,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Independent oracle: the batch gradient summed in batch order.
    fn full_batch_gradient(obj: &ToyObjective, w: &[f64], batch: &GlobalBatch) -> Vec<f64> {
        let mut g = vec![0.0; TOY_DIM];
        for &id in &batch.samples {
            let r = dot(w, obj.features(id)) - obj.label(id);
            for (gi, xi) in g.iter_mut().zip(obj.features(id)) {
                *gi += r * xi;
            }
        }
        g.iter().map(|x| x / batch.len() as f64).collect()
    }

    #[test]
    fn gradients_match_finite_differences() {
        let obj = ToyObjective::generate(16, 3);
        let w: Vec<f64> = (0..TOY_DIM).map(|i| 0.1 * i as f64 - 0.3).collect();
        let h = 1e-5;
        for i in 0..16 {
            let id = SampleId(i);
            let g = obj.gradient(&w, id);
            for k in 0..TOY_DIM {
                let (mut up, mut down) = (w.clone(), w.clone());
                up[k] += h;
                down[k] -= h;
                let fd = (obj.loss(&up, id) - obj.loss(&down, id)) / (2.0 * h);
                let rel = (fd - g[k]).abs() / g[k].abs().max(1e-3);
                assert!(rel < 1e-6, "sample {i} coord {k}: fd {fd} vs {}", g[k]);
            }
        }
    }

    #[test]
    fn objective_gradient_is_mean_of_sample_gradients() {
        let obj = ToyObjective::generate(10, 4);
        let w = vec![0.2; TOY_DIM];
        let h = 1e-5;
        let mean: Vec<f64> = (0..TOY_DIM)
            .map(|k| (0..10).map(|i| obj.gradient(&w, SampleId(i))[k]).sum::<f64>() / 10.0)
            .collect();
        for k in 0..TOY_DIM {
            let (mut up, mut down) = (w.clone(), w.clone());
            up[k] += h;
            down[k] -= h;
            let fd = (obj.objective(&up) - obj.objective(&down)) / (2.0 * h);
            assert!((fd - mean[k]).abs() < 1e-6 * mean[k].abs().max(1.0));
        }
    }

    #[test]
    fn single_learner_schemes_agree() {
        let reg = run_training(&TrainingConfig::new(SamplingScheme::Reg, 1, 12, 30, 1)).unwrap();
        let loc = run_training(&TrainingConfig::new(SamplingScheme::Loc, 1, 12, 30, 1)).unwrap();
        assert!(compare(&reg, &loc).identical);
    }

    #[test]
    fn three_learners_bitwise_equal() {
        let cfg = TrainingConfig {
            dataset_size: 120,
            ..TrainingConfig::new(SamplingScheme::Reg, 3, 12, 50, 9)
        };
        let reg = run_training(&cfg).unwrap();
        let loc = run_training(&TrainingConfig {
            scheme: SamplingScheme::Loc,
            ..cfg
        })
        .unwrap();
        let cmp = compare(&reg, &loc);
        assert!(cmp.identical, "{cmp:?}");
        assert_eq!(cmp.max_abs_diff, 0.0);
        assert_ne!(reg.local_sizes, loc.local_sizes);
    }

    #[test]
    fn loc_gradient_matches_full_batch_oracle() {
        let cfg = TrainingConfig {
            dataset_size: 120,
            ..TrainingConfig::new(SamplingScheme::Loc, 3, 12, 20, 2)
        };
        let trace = run_training(&cfg).unwrap();
        let obj = ToyObjective::generate(cfg.dataset_size, cfg.seed);
        let mut w = vec![0.0; TOY_DIM];
        for (t, batch) in trace.batches.iter().enumerate() {
            let want = full_batch_gradient(&obj, &w, batch);
            for (a, b) in trace.gradients[t].iter().zip(&want) {
                assert!((a - b).abs() <= 1e-12 * b.abs().max(1e-12), "step {t}");
            }
            w = trace.weights[t].clone();
        }
    }

    #[test]
    fn balancing_does_not_change_training() {
        let (plain, balanced) = run_training_imbalanced_vs_balanced(4, 64, 100, 5).unwrap();
        let cmp = compare(&plain, &balanced);
        assert!(cmp.identical);
        assert_eq!(cmp.max_abs_diff, 0.0);
        assert!(balanced.local_sizes.iter().all(|s| s == &vec![16; 4]));

        let (plain, balanced) = run_training_imbalanced_vs_balanced(2, 2, 40, 5).unwrap();
        assert!(compare(&plain, &balanced).identical);
    }

    #[test]
    fn canonical_sum_ignores_local_order() {
        let obj = ToyObjective::generate(64, 1);
        let w = vec![0.3; TOY_DIM];
        let a = LocalAssignment {
            learner: crate::LearnerId(0),
            step: 0,
            samples: (0..40).map(SampleId).collect(),
        };
        let mut shuffled = a.clone();
        shuffled.samples.reverse();
        shuffled.samples.swap(3, 17);
        let g1 = aggregate(&[LocalGradients::compute(&obj, &w, &a)], Aggregation::Canonical);
        let g2 = aggregate(&[LocalGradients::compute(&obj, &w, &shuffled)], Aggregation::Canonical);
        assert_eq!(g1, g2);
    }

    #[test]
    fn reg_needs_even_slices() {
        let cfg = TrainingConfig::new(SamplingScheme::Reg, 8, 12, 5, 0);
        assert!(matches!(run_training(&cfg), Err(Error::UnevenSlice { .. })));
        let loc = TrainingConfig::new(SamplingScheme::Loc, 8, 12, 5, 0);
        assert!(run_training(&loc).is_ok());
    }

    #[test]
    fn training_descends() {
        let trace = run_training(&TrainingConfig::new(SamplingScheme::Loc, 4, 64, 100, 3)).unwrap();
        let obj = ToyObjective::generate(768, 3);
        assert!(obj.objective(trace.final_weights()) < 0.1 * obj.objective(&[0.0; TOY_DIM]));
    }
}
