//! Analytical per-epoch cost model.
//!
//! With loading overlapped with training, an epoch costs the larger of the
//! training time `D/(p·V)` and the data loading time (sample I/O plus
//! `D/(p·U)` preprocessing). Sample I/O depends on the scheme:
//!
//! | scheme     | sample I/O time                                   |
//! |------------|---------------------------------------------------|
//! | regular    | `D/R`                                             |
//! | distcache  | `(1-α)·D/R + (α·D/R_c)·(p-1)/p`                   |
//! | locality   | `(1-α)·D/R + (α·D/R_b)·β`                         |
//!
//! Local cache hits are treated as free.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Dataset size in samples.
    pub d: u64,
    /// Compute node count.
    pub p: u64,
    /// Per-node training rate, samples/s.
    pub v: f64,
    /// Storage system I/O rate, samples/s.
    pub r: f64,
    /// Remote cache I/O rate, samples/s.
    pub r_c: f64,
    /// I/O rate of balancing transfers, samples/s.
    pub r_b: f64,
    /// Per-node preprocessing rate, samples/s.
    pub u: f64,
    /// Fraction of the dataset held in the aggregated cache.
    pub alpha: f64,
    /// Balancing traffic as a fraction of the data.
    pub beta: f64,
}

impl Default for ModelParams {
    /// Illustrative values for an Imagenet-sized dataset; not measurements.
    fn default() -> Self {
        Self {
            d: 1_280_000,
            p: 16,
            v: 1_200.0,
            r: 12_800.0,
            r_c: 128_000.0,
            r_b: 128_000.0,
            u: 4_000.0,
            alpha: 1.0,
            beta: 0.048,
        }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidConfig(what.to_string()));
        if self.d < 1 {
            return bad("d must be at least 1");
        }
        if self.p < 1 {
            return bad("p must be at least 1");
        }
        for (name, rate) in [
            ("v", self.v),
            ("r", self.r),
            ("r_c", self.r_c),
            ("r_b", self.r_b),
            ("u", self.u),
        ] {
            if !(rate > 0.0 && rate.is_finite()) {
                return bad(&format!("rate {name} must be positive and finite"));
            }
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad("alpha must lie in [0, 1]");
        }
        if !(0.0..1.0).contains(&self.beta) {
            return bad("beta must lie in [0, 1)");
        }
        Ok(())
    }

    pub fn with_p(self, p: u64) -> Self {
        Self { p, ..self }
    }

    pub fn with_beta(self, beta: f64) -> Self {
        Self { beta, ..self }
    }

    fn df(&self) -> f64 {
        self.d as f64
    }

    fn pf(&self) -> f64 {
        self.p as f64
    }

    /// `D / (p·V)`.
    pub fn training_time(&self) -> f64 {
        self.df() / (self.pf() * self.v)
    }

    /// `D / R`, independent of `p`.
    pub fn io_time_regular(&self) -> f64 {
        self.df() / self.r
    }

    /// `D / (p·U)`.
    pub fn preprocessing_time(&self) -> f64 {
        self.df() / (self.pf() * self.u)
    }

    /// Node count `R / V` at which sample I/O overtakes training.
    pub fn crossover_p(&self) -> f64 {
        self.r / self.v
    }

    /// Piecewise epoch cost assuming preprocessing is negligible:
    /// `D/(p·V)` up to the crossover, `D/R` beyond it.
    pub fn true_cost(&self) -> f64 {
        if self.pf() <= self.crossover_p() {
            self.training_time()
        } else {
            self.io_time_regular()
        }
    }

    /// `max(training, io + preprocessing)` for the regular scheme. Unlike
    /// [`true_cost`](Self::true_cost) this keeps the preprocessing term,
    /// which matters at small `p`.
    pub fn true_cost_extended(&self) -> f64 {
        CostBreakdown::new(self, Scheme::Regular).true_cost_s
    }

    /// Storage misses plus remote cache hits under distributed caching.
    pub fn io_time_distcache(&self) -> f64 {
        let storage = (1.0 - self.alpha) * self.df() / self.r;
        let remote = self.alpha * self.df() / self.r_c;
        storage + remote * ((self.pf() - 1.0) / self.pf())
    }

    /// Storage misses plus balancing transfers under locality-aware loading.
    pub fn io_time_locality(&self) -> f64 {
        let storage = (1.0 - self.alpha) * self.df() / self.r;
        storage + self.alpha * self.df() / self.r_b * self.beta
    }

    pub fn io_time(&self, scheme: Scheme) -> f64 {
        match scheme {
            Scheme::Regular => self.io_time_regular(),
            Scheme::DistCache => self.io_time_distcache(),
            Scheme::Locality => self.io_time_locality(),
        }
    }
}

/// Source of sample I/O in the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Regular,
    DistCache,
    Locality,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::Regular, Scheme::DistCache, Scheme::Locality];

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Regular => "regular",
            Scheme::DistCache => "distcache",
            Scheme::Locality => "locality",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "regular" => Ok(Scheme::Regular),
            "distcache" => Ok(Scheme::DistCache),
            "locality" => Ok(Scheme::Locality),
            other => Err(Error::InvalidConfig(format!(
                "unknown scheme {other:?} (expected regular, distcache or locality)"
            ))),
        }
    }
}

/// Per-epoch cost components in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub training_s: f64,
    pub sample_io_s: f64,
    pub preprocessing_s: f64,
    pub data_loading_s: f64,
    pub true_cost_s: f64,
}

impl CostBreakdown {
    pub fn new(mp: &ModelParams, scheme: Scheme) -> Self {
        let training_s = mp.training_time();
        let sample_io_s = mp.io_time(scheme);
        let preprocessing_s = mp.preprocessing_time();
        let data_loading_s = sample_io_s + preprocessing_s;
        Self {
            training_s,
            sample_io_s,
            preprocessing_s,
            data_loading_s,
            true_cost_s: training_s.max(data_loading_s),
        }
    }

    /// Time a learner spends waiting for data when loading is prefetched.
    pub fn waiting_s(&self) -> f64 {
        (self.data_loading_s - self.training_s).max(0.0)
    }
}
