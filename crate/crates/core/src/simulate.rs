//! Monte Carlo experiments: balancing traffic of locality-aware batches,
//! maximum bin load of random placement, and epoch cost curves.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::balance::{beta, ImbalanceVector};
use crate::error::{Error, Result};
use crate::model::{CostBreakdown, ModelParams, Scheme};
use crate::rng;
use crate::sampling::{build_directory, loc_counts};
use crate::sequence::{batches, permute_epoch};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImbalanceConfig {
    pub d: u64,
    pub p: usize,
    pub local_batch: usize,
    pub steps: usize,
    pub seed: u64,
}

impl ImbalanceConfig {
    pub fn global_batch(&self) -> usize {
        self.p * self.local_batch
    }

    fn validate(&self) -> Result<()> {
        if self.p == 0 || self.local_batch == 0 {
            return Err(Error::InvalidConfig(
                "learner count and local batch must be at least 1".into(),
            ));
        }
        if self.global_batch() as u64 > self.d {
            return Err(Error::InvalidConfig(format!(
                "global batch {} exceeds dataset size {}",
                self.global_batch(),
                self.d
            )));
        }
        if self.steps == 0 {
            return Err(Error::InvalidConfig("steps must be at least 1".into()));
        }
        Ok(())
    }
}

/// Box-plot summary; whiskers reach the furthest samples within 1.5·IQR of
/// the quartiles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub mean: f64,
}

impl Summary {
    pub fn of(samples: &[f64]) -> Option<Self> {
        if samples.is_empty() {
            return None;
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        let q1 = quantile(&sorted, 0.25);
        let q3 = quantile(&sorted, 0.75);
        let iqr = q3 - q1;
        let (lo, hi) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
        let whisker_low = sorted.iter().copied().find(|&x| x >= lo).unwrap_or(q1);
        let whisker_high = sorted.iter().rev().copied().find(|&x| x <= hi).unwrap_or(q3);
        Some(Self {
            median: quantile(&sorted, 0.5),
            q1,
            q3,
            whisker_low,
            whisker_high,
            mean: sorted.iter().sum::<f64>() / sorted.len() as f64,
        })
    }
}

/// Linearly interpolated quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let (lo, hi) = (h.floor() as usize, h.ceil() as usize);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImbalanceStats {
    pub config: ImbalanceConfig,
    pub betas: Vec<f64>,
    pub summary: Summary,
}

/// Per-step β for consecutive batches starting at `first_epoch`, against an
/// even block directory holding the whole dataset.
fn beta_series(cfg: &ImbalanceConfig, first_epoch: u64) -> Result<Vec<f64>> {
    let dir = build_directory(cfg.d, cfg.p, 1.0)?;
    let b = cfg.global_batch();
    let mut out = Vec::with_capacity(cfg.steps);
    let mut epoch = first_epoch;
    while out.len() < cfg.steps {
        let perm = permute_epoch(cfg.seed, epoch, cfg.d)?;
        for batch in batches(&perm, b)?.iter().take(cfg.steps - out.len()) {
            let iv = ImbalanceVector::new(loc_counts(batch, &dir));
            out.push(beta(&iv));
        }
        epoch += 1;
    }
    Ok(out)
}

/// Balancing traffic of `steps` consecutive locality-aware batches of size
/// `p · local_batch`, with the dataset evenly partitioned across `p` caches.
pub fn simulate_imbalance(cfg: ImbalanceConfig) -> Result<ImbalanceStats> {
    cfg.validate()?;
    let betas = beta_series(&cfg, 0)?;
    let summary = Summary::of(&betas).expect("at least one step");
    Ok(ImbalanceStats {
        config: cfg,
        betas,
        summary,
    })
}

/// Runs [`simulate_imbalance`] for every `(p, local_batch)` pair, in parallel.
/// Results come back in `ps`-major order.
pub fn imbalance_sweep(
    d: u64,
    ps: &[usize],
    local_batches: &[usize],
    steps: usize,
    seed: u64,
) -> Result<Vec<ImbalanceStats>> {
    let grid: Vec<ImbalanceConfig> = ps
        .iter()
        .flat_map(|&p| {
            local_batches.iter().map(move |&local_batch| ImbalanceConfig {
                d,
                p,
                local_batch,
                steps,
                seed,
            })
        })
        .collect();
    grid.into_par_iter().map(simulate_imbalance).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BallsBinsCheck {
    pub balls: u64,
    pub bins: u64,
    pub alpha_param: f64,
    pub k_alpha: f64,
    pub trials: u64,
    pub exceed_count: u64,
    pub empirical_exceed_rate: f64,
}

/// Tail threshold `b/p + α·sqrt(2·(b/p)·ln p)` on the fullest bin.
pub fn k_alpha(balls: u64, bins: u64, alpha_param: f64) -> f64 {
    let mean = balls as f64 / bins as f64;
    mean + alpha_param * (2.0 * mean * (bins as f64).ln()).sqrt()
}

/// Throws `balls` into `bins` uniformly, `trials` times, and reports how often
/// the fullest bin exceeds [`k_alpha`]. Trial `i` draws from its own stream,
/// so results do not depend on the thread count.
pub fn balls_in_bins_check(
    balls: u64,
    bins: u64,
    alpha_param: f64,
    trials: u64,
    seed: u64,
) -> Result<BallsBinsCheck> {
    if trials == 0 || bins < 2 || !(alpha_param > 1.0) {
        return Err(Error::InvalidConfig(
            "need trials >= 1, bins >= 2 and alpha_param > 1".into(),
        ));
    }
    let k = k_alpha(balls, bins, alpha_param);
    let exceed_count = (0..trials)
        .into_par_iter()
        .filter(|&trial| {
            let mut stream = rng::keyed(seed, rng::domain::BALLS, trial);
            let mut load = vec![0u64; bins as usize];
            for _ in 0..balls {
                load[rng::below(&mut stream, bins) as usize] += 1;
            }
            let max = load.into_iter().max().unwrap_or(0);
            max as f64 > k
        })
        .count() as u64;
    Ok(BallsBinsCheck {
        balls,
        bins,
        alpha_param,
        k_alpha: k,
        trials,
        exceed_count,
        empirical_exceed_rate: exceed_count as f64 / trials as f64,
    })
}

/// Where the locality scheme's β comes from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BetaSource {
    /// Use the value in the model parameters.
    Fixed,
    /// Measure it per epoch as the mean over `steps` simulated batches.
    Sampled {
        local_batch: usize,
        steps: usize,
        seed: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochCostRow {
    pub p: u64,
    pub scheme: Scheme,
    pub beta: f64,
    pub training_s: f64,
    pub io_s: f64,
    pub preprocess_s: f64,
    pub loading_s: f64,
    pub waiting_s: f64,
    pub total_s: f64,
}

/// Averages epoch costs over `epochs` epochs for each node count, with data
/// loading prefetched behind training so only the excess shows as waiting.
pub fn simulate_epoch_costs(
    base: &ModelParams,
    ps: &[u64],
    scheme: Scheme,
    epochs: u64,
    beta_source: BetaSource,
) -> Result<Vec<EpochCostRow>> {
    if ps.is_empty() {
        return Err(Error::InvalidConfig("node count list is empty".into()));
    }
    if epochs == 0 {
        return Err(Error::InvalidConfig("epochs must be at least 1".into()));
    }
    ps.par_iter()
        .map(|&p| {
            let mp = base.with_p(p);
            mp.validate()?;
            let mut betas = Vec::with_capacity(epochs as usize);
            let mut costs = Vec::with_capacity(epochs as usize);
            for epoch in 0..epochs {
                let b = epoch_beta(&mp, scheme, beta_source, epoch)?;
                betas.push(b);
                costs.push(CostBreakdown::new(&mp.with_beta(b), scheme));
            }
            let n = epochs as f64;
            let mean = |f: fn(&CostBreakdown) -> f64| costs.iter().map(f).sum::<f64>() / n;
            Ok(EpochCostRow {
                p,
                scheme,
                beta: betas.iter().sum::<f64>() / n,
                training_s: mean(|c| c.training_s),
                io_s: mean(|c| c.sample_io_s),
                preprocess_s: mean(|c| c.preprocessing_s),
                loading_s: mean(|c| c.data_loading_s),
                waiting_s: mean(CostBreakdown::waiting_s),
                total_s: mean(|c| c.true_cost_s),
            })
        })
        .collect()
}

fn epoch_beta(mp: &ModelParams, scheme: Scheme, source: BetaSource, epoch: u64) -> Result<f64> {
    match (scheme, source) {
        (
            Scheme::Locality,
            BetaSource::Sampled {
                local_batch,
                steps,
                seed,
            },
        ) => {
            let cfg = ImbalanceConfig {
                d: mp.d,
                p: mp.p as usize,
                local_batch,
                steps,
                seed,
            };
            cfg.validate()?;
            let betas = beta_series(&cfg, epoch)?;
            Ok(betas.iter().sum::<f64>() / betas.len() as f64)
        }
        _ => Ok(mp.beta),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::balance::balance;
    use crate::sampling::loc_distribution;

    fn cfg(d: u64, p: usize, local_batch: usize, steps: usize) -> ImbalanceConfig {
        ImbalanceConfig {
            d,
            p,
            local_batch,
            steps,
            seed: 17,
        }
    }

    #[test]
    fn single_learner_never_moves() {
        let stats = simulate_imbalance(cfg(10_000, 1, 64, 50)).unwrap();
        assert_eq!(stats.betas.len(), 50);
        assert!(stats.betas.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn oversized_batch_rejected() {
        assert!(matches!(
            simulate_imbalance(cfg(100, 8, 16, 10)),
            Err(Error::InvalidConfig(_))
        ));
        assert!(simulate_imbalance(cfg(100, 2, 8, 0)).is_err());
    }

    #[test]
    fn steps_span_epochs() {
        // 1000 / 128 = 7 batches per epoch, so 20 steps need three epochs.
        let stats = simulate_imbalance(cfg(1000, 4, 32, 20)).unwrap();
        assert_eq!(stats.betas.len(), 20);
        assert!(stats.betas.iter().all(|b| (0.0..1.0).contains(b)));
    }

    #[test]
    fn betas_match_balance_module() {
        let c = cfg(4096, 8, 32, 16);
        let stats = simulate_imbalance(c).unwrap();
        let dir = build_directory(c.d, c.p, 1.0).unwrap();
        let perm = permute_epoch(c.seed, 0, c.d).unwrap();
        for (batch, &b) in batches(&perm, c.global_batch()).unwrap().iter().zip(&stats.betas) {
            let iv = ImbalanceVector::new(loc_distribution(batch, &dir).counts());
            assert_eq!(beta(&iv), b);
            assert_eq!(balance(&iv).volume() as f64 / c.global_batch() as f64, b);
        }
    }

    #[test]
    fn summary_of_known_data() {
        let s = Summary::of(&[1.0, 2.0, 3.0, 4.0, 100.0]).unwrap();
        assert_eq!(s.median, 3.0);
        assert_eq!(s.q1, 2.0);
        assert_eq!(s.q3, 4.0);
        assert_eq!(s.whisker_low, 1.0);
        assert_eq!(s.whisker_high, 4.0);
        assert_eq!(s.mean, 22.0);
        let one = Summary::of(&[0.25]).unwrap();
        assert_eq!((one.median, one.q1, one.q3), (0.25, 0.25, 0.25));
        assert!(Summary::of(&[]).is_none());
    }

    #[test]
    fn k_alpha_closed_form() {
        let k = k_alpha(6400, 64, 1.0);
        assert!((k - 128.8405377).abs() < 1e-6, "{k}");
    }

    #[test]
    fn balls_in_bins_sparse_regime_reports() {
        let check = balls_in_bins_check(100, 100, 2.0, 2_000, 3).unwrap();
        assert!((0.0..=1.0).contains(&check.empirical_exceed_rate));
        assert_eq!(check.trials, 2_000);
    }

    #[test]
    fn balls_in_bins_is_reproducible() {
        let a = balls_in_bins_check(500, 16, 1.2, 300, 5).unwrap();
        let b = balls_in_bins_check(500, 16, 1.2, 300, 5).unwrap();
        assert_eq!(a, b);
        assert!(balls_in_bins_check(10, 1, 2.0, 1, 0).is_err());
        assert!(balls_in_bins_check(10, 4, 1.0, 1, 0).is_err());
    }

    fn small_model() -> ModelParams {
        ModelParams {
            d: 64_000,
            p: 1,
            v: 100.0,
            r: 800.0,
            r_c: 8_000.0,
            r_b: 8_000.0,
            u: 10_000.0,
            alpha: 1.0,
            beta: 0.0,
        }
    }

    #[test]
    fn regular_waiting_appears_past_crossover() {
        let ps = [1, 2, 4, 8, 16, 32, 64];
        let rows =
            simulate_epoch_costs(&small_model(), &ps, Scheme::Regular, 1, BetaSource::Fixed).unwrap();
        let mut share = 0.0;
        for row in &rows {
            if row.p < 8 {
                assert_eq!(row.waiting_s, 0.0, "p = {}", row.p);
            } else if row.p > 8 {
                let s = row.waiting_s / row.total_s;
                assert!(row.waiting_s > 0.0 && s > share, "p = {}", row.p);
                share = s;
            }
            assert!((row.total_s - (row.training_s + row.waiting_s)).abs() < 1e-9);
        }
    }

    #[test]
    fn locality_cost_keeps_falling() {
        let ps = [1, 2, 4, 8, 16, 32, 64];
        let source = BetaSource::Sampled {
            local_batch: 32,
            steps: 20,
            seed: 1,
        };
        let rows = simulate_epoch_costs(&small_model(), &ps, Scheme::Locality, 2, source).unwrap();
        for w in rows.windows(2) {
            assert!(w[1].total_s < w[0].total_s, "{:?}", w);
        }
        assert_eq!(rows[0].beta, 0.0);
        assert!(rows[6].beta > 0.0);
    }

    #[test]
    fn zero_beta_hides_all_loading() {
        let ps = [1, 4, 16, 64, 256];
        let rows =
            simulate_epoch_costs(&small_model(), &ps, Scheme::Locality, 1, BetaSource::Fixed).unwrap();
        assert!(rows.iter().all(|r| r.waiting_s == 0.0));
    }

    #[test]
    fn epoch_cost_errors() {
        let m = small_model();
        assert!(simulate_epoch_costs(&m, &[], Scheme::Regular, 1, BetaSource::Fixed).is_err());
        assert!(simulate_epoch_costs(&m, &[2], Scheme::Regular, 0, BetaSource::Fixed).is_err());
    }

    #[test]
    fn medians_insensitive_to_dataset_size() {
        let small = simulate_imbalance(cfg(128_000, 16, 64, 300)).unwrap();
        assert!((small.summary.median - 0.048).abs() <= 0.01, "{:?}", small.summary);
    }
}
