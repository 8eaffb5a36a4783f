//! Replica-parallel Monte Carlo driver and the estimate types it produces.
//!
//! Replicas are grouped into fixed-size chunks. Each chunk is processed in
//! replica order by one worker and the chunk results are merged in chunk
//! order, so every estimate is bitwise independent of the thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::Neumaier;

pub const CHUNK: u64 = 1024;

/// Something a chunk of replicas can be folded into.
pub trait Merge: Send {
    fn merge(&mut self, other: Self);
}

/// Runs `per_replica(scratch, replica, acc)` for every replica in
/// `0..replicas` and merges the chunk accumulators in order.
pub fn run_replicas<A, S, I, F>(replicas: u64, init_scratch: I, per_replica: F) -> A
where
    A: Merge + Default,
    I: Fn() -> S + Sync + Send,
    F: Fn(&mut S, u64, &mut A) + Sync + Send,
{
    let chunks = replicas.div_ceil(CHUNK);
    let parts: Vec<A> = (0..chunks)
        .into_par_iter()
        .map_init(&init_scratch, |scratch, c| {
            let mut acc = A::default();
            let end = ((c + 1) * CHUNK).min(replicas);
            for r in c * CHUNK..end {
                per_replica(scratch, r, &mut acc);
            }
            acc
        })
        .collect();
    let mut total = A::default();
    for p in parts {
        total.merge(p);
    }
    total
}

#[derive(Debug, Default, Clone, Copy)]
pub struct HitCounter {
    pub hits: u64,
    pub trials: u64,
}

impl HitCounter {
    pub fn record(&mut self, hit: bool) {
        self.hits += hit as u64;
        self.trials += 1;
    }
}

impl Merge for HitCounter {
    fn merge(&mut self, o: Self) {
        self.hits += o.hits;
        self.trials += o.trials;
    }
}

/// Compensated running mean and second moment.
#[derive(Debug, Default, Clone, Copy)]
pub struct MeanAccumulator {
    count: u64,
    sum: Neumaier,
    sumsq: Neumaier,
}

impl MeanAccumulator {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        self.sum.add(x);
        self.sumsq.add(x * x);
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.sum.sum() / self.count as f64
        }
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            return 0.0;
        }
        let n = self.count as f64;
        let m = self.mean();
        ((self.sumsq.sum() - n * m * m) / (n - 1.0)).max(0.0)
    }
}

impl Merge for MeanAccumulator {
    fn merge(&mut self, o: Self) {
        self.count += o.count;
        self.sum.add(o.sum.sum());
        self.sumsq.add(o.sumsq.sum());
    }
}

impl<A: Merge> Merge for Vec<A> {
    fn merge(&mut self, other: Self) {
        if self.is_empty() {
            *self = other;
            return;
        }
        for (a, b) in self.iter_mut().zip(other) {
            a.merge(b);
        }
    }
}

/// A Monte Carlo probability or mean with its sampling uncertainty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailEstimate {
    pub p_hat: f64,
    pub replicas: u64,
    pub stderr: f64,
    /// `p_hat +- 1.96 stderr`.
    pub ci95: (f64, f64),
    /// Number of successes, for indicator estimates.
    pub hits: Option<u64>,
}

const Z95: f64 = 1.959_963_984_540_054;

impl TailEstimate {
    pub fn from_hits(hits: u64, replicas: u64) -> Self {
        let n = replicas.max(1) as f64;
        let p = hits as f64 / n;
        let se = (p * (1.0 - p) / n).sqrt();
        Self {
            p_hat: p,
            replicas,
            stderr: se,
            ci95: (p - Z95 * se, p + Z95 * se),
            hits: Some(hits),
        }
    }

    pub fn from_counter(c: HitCounter) -> Self {
        Self::from_hits(c.hits, c.trials)
    }

    pub fn from_mean(acc: &MeanAccumulator) -> Self {
        let n = acc.count().max(1) as f64;
        let m = acc.mean();
        let se = (acc.variance() / n).sqrt();
        Self {
            p_hat: m,
            replicas: acc.count(),
            stderr: se,
            ci95: (m - Z95 * se, m + Z95 * se),
            hits: None,
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.ci95.0 <= x && x <= self.ci95.1
    }

    /// `|p_hat - x|` in units of the standard error (infinite when the
    /// standard error vanishes and the values differ).
    pub fn z_score(&self, x: f64) -> f64 {
        let d = (self.p_hat - x).abs();
        if d == 0.0 {
            0.0
        } else {
            d / self.stderr
        }
    }

    /// One-sided 97.5% upper confidence limit for an indicator probability:
    /// exact (Clopper-Pearson) with zero hits, Wilson score otherwise.
    pub fn upper_confidence(&self) -> f64 {
        let n = self.replicas.max(1) as f64;
        match self.hits {
            Some(0) => 1.0 - 0.025f64.powf(1.0 / n),
            Some(k) => {
                let p = k as f64 / n;
                let z2 = Z95 * Z95;
                let centre = p + z2 / (2.0 * n);
                let half = Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
                ((centre + half) / (1.0 + z2 / n)).min(1.0)
            }
            None => self.ci95.1,
        }
    }
}

pub(crate) fn check_replicas(replicas: u64, min: u64) -> Result<()> {
    if replicas < min {
        return Err(Error::Parameter(format!(
            "need at least {min} replicas, got {replicas}"
        )));
    }
    Ok(())
}
