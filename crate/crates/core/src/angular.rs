//! Angular and time-gap oscillation of the walk.
//!
//! Estimates how often `S_n(theta)` moves by more than `eta sigma phi(n)`
//! over a short angular window, or over the times between two consecutive
//! schedule points, and the Taylor-expansion majorant for the angular event.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::increments::{IncrementLaw, IncrementSource, LawSource};
use crate::mc::{check_replicas, run_replicas, HitCounter, Merge, TailEstimate};
use crate::walk::{first_derivative_bound, floor_pow, phase, second_derivative_bound, threshold};

/// An angular window `[0, eps]` at time `n`, sampled at `k` angles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub n: u64,
    pub eps: f64,
    pub eta: f64,
    pub beta: f64,
    pub k: usize,
}

impl WindowSpec {
    pub fn new(n: u64, eps: f64, eta: f64, beta: f64, k: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::Parameter(format!("window time must be >= 2, got {n}")));
        }
        for (name, v) in [("eps", eps), ("eta", eta), ("beta", beta)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Parameter(format!("{name} must be positive, got {v}")));
            }
        }
        if k < 8 {
            return Err(Error::Parameter(format!(
                "window grid needs at least 8 angles, got {k}"
            )));
        }
        Ok(Self { n, eps, eta, beta, k })
    }

    /// `eps = n^{-(1 + beta)}`.
    pub fn standard(n: u64, beta: f64, eta: f64, k: usize) -> Result<Self> {
        Self::new(n, (n as f64).powf(-(1.0 + beta)), eta, beta, k)
    }

    /// True when `eps n^{1 + beta} > 1`, i.e. the window is wider than the
    /// regime the decay estimate covers.
    pub fn out_of_regime(&self) -> bool {
        self.eps * (self.n as f64).powf(1.0 + self.beta) > 1.0
    }

    fn spacing(&self) -> f64 {
        self.eps / (self.k - 1) as f64
    }
}

/// Exceedance frequencies for a windowed supremum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngularEstimate {
    /// Event `{grid max > threshold}`: underestimates the true sup event.
    pub grid: TailEstimate,
    /// Event `{grid max + derivative correction > threshold}`: overestimates it.
    pub corrected: TailEstimate,
    pub out_of_regime: bool,
}

#[derive(Debug, Default, Clone, Copy)]
struct PairHits {
    grid: HitCounter,
    corrected: HitCounter,
}

impl Merge for PairHits {
    fn merge(&mut self, o: Self) {
        self.grid.merge(o.grid);
        self.corrected.merge(o.corrected);
    }
}

/// Frequency of `sup_{0 <= theta <= eps} |S_n(theta) - S_n(0)| > eta sigma phi(n)`.
///
/// The window is anchored at 0; rotating the increments by `e^{2 pi i j theta'}`
/// preserves a rotationally symmetric law, so any other anchor has the same
/// distribution.
pub fn mc_angular_exceedance(
    law: &IncrementLaw,
    window: WindowSpec,
    alpha: f64,
    replicas: u64,
    seed: u64,
) -> Result<AngularEstimate> {
    mc_angular_exceedance_with(&LawSource::new(*law, seed), window, alpha, replicas)
}

pub fn mc_angular_exceedance_with<S: IncrementSource>(
    source: &S,
    window: WindowSpec,
    alpha: f64,
    replicas: u64,
) -> Result<AngularEstimate> {
    check_replicas(replicas, 1)?;
    let n = window.n as usize;
    let level = window.eta * source.sigma() * threshold(alpha, window.n)?;
    let h = window.spacing();
    // e^{2 pi i j theta_k} - 1 for the k - 1 nonzero grid angles.
    let tables: Vec<Vec<Complex64>> = (1..window.k)
        .map(|k| {
            let theta = k as f64 * h;
            (1..=n as u64).map(|j| phase(j, theta) - 1.0).collect()
        })
        .collect();
    let hits: PairHits = run_replicas(
        replicas,
        || vec![Complex64::default(); n],
        |buf, r, acc: &mut PairHits| {
            source.fill(r, buf);
            let mut sup = 0.0f64;
            for t in &tables {
                sup = sup.max(crate::walk::dot(buf, t).norm());
            }
            acc.grid.record(sup > level);
            // Between neighbouring grid angles |f| exceeds the larger endpoint
            // by at most h sup|f'| / 2, and also by at most h^2 sup|f''| / 8
            // (chord bound); either caps the supremum.
            let corrected = if sup > level {
                sup
            } else {
                let slope = first_derivative_bound(buf) * h / 2.0;
                let chord = second_derivative_bound(buf) * h * h / 8.0;
                sup + slope.min(chord)
            };
            acc.corrected.record(corrected > level);
        },
    );
    Ok(AngularEstimate {
        grid: TailEstimate::from_counter(hits.grid),
        corrected: TailEstimate::from_counter(hits.corrected),
        out_of_regime: window.out_of_regime(),
    })
}

/// Terms of the Taylor majorant for the angular event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaylorBound {
    /// Terms `j = 1..k-1`.
    pub terms: Vec<f64>,
    pub remainder: f64,
    /// `sum(terms) + remainder`; not clamped to 1.
    pub total: f64,
}

impl TaylorBound {
    pub fn probability(&self) -> f64 {
        self.total.min(1.0)
    }
}

/// Majorant for `P(sup_{|theta| < eps} |S_n(theta) - S_n(0)| > eta sigma phi(n))`
/// for Gaussian steps, from a Taylor expansion to order `k`.
///
/// Each of the `k` pieces must carry `eta phi / k`. The `j`-th derivative
/// has per-coordinate variance at most `(2 pi)^{2j} n^{2j+1} sigma^2`, so with
/// `C_j = (2 pi)^j / j!`
///
/// ```text
/// term_j    = exp(-alpha ln n (eta / (k C_j))^2 / (n eps)^{2j})
/// remainder = n exp(-alpha ln n (eta / (k C_k))^2 / (n^{k+1} eps^k)^2)
/// ```
///
/// The bound is certified only relative to these constants.
pub fn taylor_tail_bound(n: u64, k: u32, eps: f64, eta: f64, alpha: f64) -> Result<TaylorBound> {
    if n < 2 || k < 1 {
        return Err(Error::Parameter(format!(
            "need n >= 2 and k >= 1, got n = {n}, k = {k}"
        )));
    }
    if !(eps > 0.0) || !(alpha > 0.0) || !(eta >= 0.0) {
        return Err(Error::Parameter(
            "eps, alpha must be positive and eta nonnegative".into(),
        ));
    }
    let nf = n as f64;
    let ln_n = nf.ln();
    let ratio = (nf.ln() * (k + 1) as f64 + eps.ln() * k as f64).exp();
    if ratio >= 1.0 {
        return Err(Error::Regime(format!(
            "n^(k+1) eps^k = {ratio} >= 1: the bound is vacuous"
        )));
    }
    let c = |j: u32| (2.0 * PI).powi(j as i32) / (1..=j).map(f64::from).product::<f64>();
    let coef = |j: u32| {
        let a = eta / (k as f64 * c(j));
        alpha * ln_n * a * a
    };
    let terms: Vec<f64> = (1..k)
        .map(|j| (-coef(j) / (nf * eps).powi(2 * j as i32)).exp())
        .collect();
    let remainder = nf * (-coef(k) / (ratio * ratio)).exp();
    let total = terms.iter().sum::<f64>() + remainder;
    Ok(TaylorBound {
        terms,
        remainder,
        total,
    })
}

/// Result of a time-gap scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGapEstimate {
    /// Combined event over angles and times.
    pub combined: TailEstimate,
    /// Angular part alone: times restricted to `t0`.
    pub angular: TailEstimate,
    /// Time part alone: angle 0, `|S_r(0) - S_{t0}(0)| > eta sigma phi(t0) / 2`.
    pub time: TailEstimate,
    pub t0: u64,
    pub t1: u64,
    /// Stride between checked times; above 1 the gap was sub-sampled.
    pub stride: u64,
    pub subsampled: bool,
}

#[derive(Debug, Default, Clone, Copy)]
struct GapHits {
    combined: HitCounter,
    angular: HitCounter,
    time: HitCounter,
}

impl Merge for GapHits {
    fn merge(&mut self, o: Self) {
        self.combined.merge(o.combined);
        self.angular.merge(o.angular);
        self.time.merge(o.time);
    }
}

const GAP_CHECKS: u64 = 64;

/// Frequency of
/// `sup_{x in A_0^n, t0 <= r <= t1} |S_r(x) - S_{t0}(0)| > eta sigma phi(t0)`
/// with `t0 = floor(q^n)`, `t1 = floor(q^{n+1})` and `A_0^n = [0, 2^{-n})`
/// sampled at `k` angles.
///
/// Gaps longer than 64 steps are checked every `ceil(gap / 64)` times (plus
/// the last one) and flagged.
#[allow(clippy::too_many_arguments)]
pub fn mc_time_gap_exceedance(
    law: &IncrementLaw,
    q: f64,
    n_level: u32,
    eta: f64,
    alpha: f64,
    k: usize,
    replicas: u64,
    seed: u64,
) -> Result<TimeGapEstimate> {
    mc_time_gap_exceedance_with(&LawSource::new(*law, seed), q, n_level, eta, alpha, k, replicas)
}

pub fn mc_time_gap_exceedance_with<S: IncrementSource>(
    source: &S,
    q: f64,
    n_level: u32,
    eta: f64,
    alpha: f64,
    k: usize,
    replicas: u64,
) -> Result<TimeGapEstimate> {
    if !(q > 1.0 && q.is_finite()) {
        return Err(Error::Parameter(format!("q must exceed 1, got {q}")));
    }
    if !(eta > 0.0) {
        return Err(Error::Parameter(format!("eta must be positive, got {eta}")));
    }
    if k < 1 {
        return Err(Error::Parameter("need at least one angle".into()));
    }
    if (n_level + 1) as f64 * q.log2() > 28.0 {
        return Err(Error::Parameter(format!(
            "floor(q^{}) is too many increments",
            n_level + 1
        )));
    }
    check_replicas(replicas, 1)?;
    let t0 = floor_pow(q, n_level);
    let t1 = floor_pow(q, n_level + 1);
    let level = eta * source.sigma() * threshold(alpha, t0)?;
    let gap = t1 - t0;
    let stride = if gap > GAP_CHECKS { gap.div_ceil(GAP_CHECKS) } else { 1 };
    let width = (0.5f64).powi(n_level as i32);
    let angles: Vec<f64> = (0..k).map(|i| i as f64 * width / k as f64).collect();
    let len = t1 as usize;
    let tables: Vec<Vec<Complex64>> = angles
        .iter()
        .map(|&x| (1..=t1).map(|j| phase(j, x)).collect())
        .collect();

    let hits: GapHits = run_replicas(
        replicas,
        || (vec![Complex64::default(); len], vec![Complex64::default(); k]),
        |(buf, sums), r, acc: &mut GapHits| {
            source.fill(r, buf);
            let head = &buf[..t0 as usize];
            for (s, t) in sums.iter_mut().zip(&tables) {
                *s = crate::walk::dot(head, t);
            }
            let anchor = sums[0];
            let mut angular = sums.iter().any(|s| (s - anchor).norm() > level);
            let mut combined = angular;
            let mut time = false;
            for step in t0 + 1..=t1 {
                let j = step as usize - 1;
                for (s, t) in sums.iter_mut().zip(&tables) {
                    *s += buf[j] * t[j];
                }
                if (step - t0) % stride == 0 || step == t1 {
                    time |= (sums[0] - anchor).norm() > level / 2.0;
                    combined |= sums.iter().any(|s| (s - anchor).norm() > level);
                }
            }
            if gap == 0 {
                angular = combined;
            }
            acc.combined.record(combined);
            acc.angular.record(angular);
            acc.time.record(time);
        },
    );
    Ok(TimeGapEstimate {
        combined: TailEstimate::from_counter(hits.combined),
        angular: TailEstimate::from_counter(hits.angular),
        time: TailEstimate::from_counter(hits.time),
        t0,
        t1,
        stride,
        subsampled: stride > 1,
    })
}

/// Frequency of `|S_{n2} - S_{n1}| > sigma t` at angle 0.
pub fn mc_time_increment(
    law: &IncrementLaw,
    n1: u64,
    n2: u64,
    t: f64,
    replicas: u64,
    seed: u64,
) -> Result<TailEstimate> {
    mc_time_increment_with(&LawSource::new(*law, seed), n1, n2, t, replicas)
}

pub fn mc_time_increment_with<S: IncrementSource>(
    source: &S,
    n1: u64,
    n2: u64,
    t: f64,
    replicas: u64,
) -> Result<TailEstimate> {
    if n2 <= n1 {
        return Err(Error::Parameter(format!("need n2 > n1, got {n1}, {n2}")));
    }
    check_replicas(replicas, 1)?;
    let level = source.sigma() * t;
    let hits: HitCounter = run_replicas(
        replicas,
        || vec![Complex64::default(); n2 as usize],
        |buf, r, acc: &mut HitCounter| {
            source.fill(r, buf);
            let d: Complex64 = buf[n1 as usize..].iter().sum();
            acc.record(d.norm() > level);
        },
    );
    Ok(TailEstimate::from_counter(hits))
}
