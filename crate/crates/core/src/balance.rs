//! Load balancing of locality-aware local batches.
//!
//! After the directory walk each learner holds some number of batch samples.
//! [`balance`] pairs the largest remaining surplus with the largest remaining
//! deficit until both are exhausted, which needs at most `p - 1` messages and
//! never more than twice the optimum. [`optimal_message_count`] finds the
//! optimum exhaustively for small `p`.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::sampling::LocalAssignment;
use crate::sequence::LearnerId;

/// Largest learner count [`optimal_message_count`] accepts.
pub const ORACLE_MAX_LEARNERS: usize = 10;

/// Per-learner target sizes: `⌈B/p⌉` for the first `B mod p` learners,
/// `⌊B/p⌋` for the rest.
pub fn targets(b: usize, p: usize) -> Vec<usize> {
    if p == 0 {
        return Vec::new();
    }
    let (base, extra) = (b / p, b % p);
    (0..p).map(|j| base + usize::from(j < extra)).collect()
}

/// Assigned counts against target counts for one step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImbalanceVector {
    counts: Vec<usize>,
    targets: Vec<usize>,
}

impl ImbalanceVector {
    /// Counts balanced against the remainder-spread [`targets`].
    pub fn new(counts: Vec<usize>) -> Self {
        let targets = targets(counts.iter().sum(), counts.len());
        Self { counts, targets }
    }

    pub fn with_targets(counts: Vec<usize>, targets: Vec<usize>) -> Result<Self> {
        if counts.len() != targets.len() {
            return Err(Error::InconsistentImbalance(format!(
                "{} counts but {} targets",
                counts.len(),
                targets.len()
            )));
        }
        let (c, t): (usize, usize) = (counts.iter().sum(), targets.iter().sum());
        if c != t {
            return Err(Error::InconsistentImbalance(format!(
                "counts sum to {c} but targets sum to {t}"
            )));
        }
        Ok(Self { counts, targets })
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn targets(&self) -> &[usize] {
        &self.targets
    }

    pub fn learners(&self) -> usize {
        self.counts.len()
    }

    /// Global batch size `B`.
    pub fn batch_size(&self) -> usize {
        self.counts.iter().sum()
    }

    /// `count - target` per learner; positive is surplus.
    pub fn imbalance(&self) -> impl Iterator<Item = i64> + '_ {
        self.counts
            .iter()
            .zip(&self.targets)
            .map(|(&c, &t)| c as i64 - t as i64)
    }

    pub fn total_deficit(&self) -> usize {
        self.counts
            .iter()
            .zip(&self.targets)
            .map(|(&c, &t)| t.saturating_sub(c))
            .sum()
    }

    pub fn is_balanced(&self) -> bool {
        self.counts == self.targets
    }
}

/// Sender-to-receiver transfer of `count` samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Move {
    pub sender: LearnerId,
    pub receiver: LearnerId,
    pub count: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransferSchedule {
    pub moves: Vec<Move>,
}

/// Ways a schedule can fail to balance an [`ImbalanceVector`].
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ScheduleViolation {
    #[error("move {index} sends from a learner to itself")]
    SelfMove { index: usize },
    #[error("move {index} carries no samples")]
    EmptyMove { index: usize },
    #[error("move {index} names a learner outside 0..{learners}")]
    UnknownLearner { index: usize, learners: usize },
    #[error("move {index} overdraws learner {learner}")]
    Overdraw { index: usize, learner: usize },
    #[error("learner {learner} ends with {got} samples, target {want}")]
    NotBalanced { learner: usize, got: usize, want: usize },
    #[error("{moves} moves exceed the bound of {bound}")]
    TooManyMoves { moves: usize, bound: usize },
}

impl TransferSchedule {
    pub fn len(&self) -> usize {
        self.moves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.moves.is_empty()
    }

    pub fn volume(&self) -> usize {
        self.moves.iter().map(|m| m.count).sum()
    }

    /// Checks conservation, move validity and the `p - 1` message bound.
    pub fn verify(&self, iv: &ImbalanceVector) -> std::result::Result<(), ScheduleViolation> {
        let p = iv.learners();
        let mut counts = iv.counts().to_vec();
        for (index, m) in self.moves.iter().enumerate() {
            if m.sender.0 >= p || m.receiver.0 >= p {
                return Err(ScheduleViolation::UnknownLearner { index, learners: p });
            }
            if m.sender == m.receiver {
                return Err(ScheduleViolation::SelfMove { index });
            }
            if m.count == 0 {
                return Err(ScheduleViolation::EmptyMove { index });
            }
            counts[m.sender.0] = counts[m.sender.0]
                .checked_sub(m.count)
                .ok_or(ScheduleViolation::Overdraw {
                    index,
                    learner: m.sender.0,
                })?;
            counts[m.receiver.0] += m.count;
        }
        for (learner, (&got, &want)) in counts.iter().zip(iv.targets()).enumerate() {
            if got != want {
                return Err(ScheduleViolation::NotBalanced { learner, got, want });
            }
        }
        let bound = p.saturating_sub(1);
        if self.moves.len() > bound {
            return Err(ScheduleViolation::TooManyMoves {
                moves: self.moves.len(),
                bound,
            });
        }
        Ok(())
    }

    /// Moves samples between local batches. Each move takes the last `count`
    /// samples of the sender's batch.
    pub fn apply(&self, local: &[LocalAssignment]) -> Vec<LocalAssignment> {
        let mut out = local.to_vec();
        for m in &self.moves {
            let from = &mut out[m.sender.0].samples;
            let moved = from.split_off(from.len() - m.count);
            out[m.receiver.0].samples.extend(moved);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Pending {
    amount: usize,
    learner: usize,
}

// Max-heap on amount; among equal amounts the lowest learner id pops first.
impl Ord for Pending {
    fn cmp(&self, other: &Self) -> Ordering {
        self.amount
            .cmp(&other.amount)
            .then_with(|| Reverse(self.learner).cmp(&Reverse(other.learner)))
    }
}

impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Greedy heap-based transfer schedule.
pub fn balance(iv: &ImbalanceVector) -> TransferSchedule {
    let mut surplus = BinaryHeap::new();
    let mut deficit = BinaryHeap::new();
    for (learner, delta) in iv.imbalance().enumerate() {
        match delta.cmp(&0) {
            Ordering::Greater => surplus.push(Pending {
                amount: delta as usize,
                learner,
            }),
            Ordering::Less => deficit.push(Pending {
                amount: delta.unsigned_abs() as usize,
                learner,
            }),
            Ordering::Equal => {}
        }
    }

    let mut moves = Vec::with_capacity(surplus.len() + deficit.len());
    while let Some(mut s) = surplus.pop() {
        // Sums match, so a surplus always has a deficit to go to.
        let mut d = deficit.pop().expect("deficit heap drained before surplus heap");
        let m = s.amount.min(d.amount);
        s.amount -= m;
        d.amount -= m;
        moves.push(Move {
            sender: LearnerId(s.learner),
            receiver: LearnerId(d.learner),
            count: m,
        });
        if s.amount > 0 {
            surplus.push(s);
        }
        if d.amount > 0 {
            deficit.push(d);
        }
    }
    TransferSchedule { moves }
}

/// Balances local batches toward [`targets`], returning the schedule and the
/// balanced batches.
pub fn balance_assignments(local: &[LocalAssignment]) -> (TransferSchedule, Vec<LocalAssignment>) {
    let iv = ImbalanceVector::new(local.iter().map(LocalAssignment::len).collect());
    let schedule = balance(&iv);
    let balanced = schedule.apply(local);
    (schedule, balanced)
}

/// Minimum number of messages that balances `iv`, by exhaustive search.
///
/// A set of transfers splits the imbalanced learners into connected groups,
/// each of which must net to zero and needs at least `size - 1` messages; any
/// zero-sum group can be settled with exactly that many. The optimum is thus
/// the number of imbalanced learners minus the largest number of disjoint
/// zero-sum groups covering them, found by a DP over subsets.
pub fn optimal_message_count(iv: &ImbalanceVector) -> Result<usize> {
    if iv.learners() > ORACLE_MAX_LEARNERS {
        return Err(Error::OracleLimit {
            learners: iv.learners(),
            limit: ORACLE_MAX_LEARNERS,
        });
    }
    let deltas: Vec<i64> = iv.imbalance().filter(|&x| x != 0).collect();
    let n = deltas.len();
    if n == 0 {
        return Ok(0);
    }
    let full = (1usize << n) - 1;
    let mut sum = vec![0i64; full + 1];
    let mut groups = vec![0usize; full + 1];
    for mask in 1..=full {
        let low = mask.trailing_zeros() as usize;
        sum[mask] = sum[mask & (mask - 1)] + deltas[low];
        let best = (0..n)
            .filter(|&i| mask & (1 << i) != 0)
            .map(|i| groups[mask & !(1 << i)])
            .max()
            .unwrap_or(0);
        groups[mask] = best + usize::from(sum[mask] == 0);
    }
    Ok(n - groups[full])
}

/// Balancing traffic as a fraction of the batch: `Σ max(0, target - count) / B`.
pub fn beta(iv: &ImbalanceVector) -> f64 {
    let b = iv.batch_size();
    if b == 0 {
        0.0
    } else {
        iv.total_deficit() as f64 / b as f64
    }
}

/// Random instance number `index`: a learner count uniform in
/// `1..=max_learners`, and `batch` samples dealt to learners with random
/// weights, so some instances are nearly balanced and others heavily skewed.
pub fn random_counts(seed: u64, index: u64, max_learners: usize, batch: usize) -> Vec<usize> {
    let mut stream = rng::keyed(seed, rng::domain::COUNTS, index);
    let p = 1 + rng::below(&mut stream, max_learners.max(1) as u64) as usize;
    let mut cumulative = Vec::with_capacity(p);
    let mut total = 0u64;
    for _ in 0..p {
        let w = 1 + rng::below(&mut stream, 32);
        total += w * w;
        cumulative.push(total);
    }
    let mut counts = vec![0; p];
    for _ in 0..batch {
        let u = rng::below(&mut stream, total);
        counts[cumulative.partition_point(|&c| c <= u)] += 1;
    }
    counts
}
