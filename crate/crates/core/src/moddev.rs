//! Moderate deviations of `|S_n|` at the `sqrt(n log n)` scale.
//!
//! Monte Carlo estimators for single and joint tails and for smoothed
//! (plateau) expectations, plus closed-form majorants from Bernstein's
//! inequality.
//!
//! All smoothed quantities use the `phi`-normalized radius
//! `x = |S_n| / (sigma phi(n))`, so the tail event `{|S_n| > m sigma phi(n)}`
//! is `{x > m}`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::increments::{IncrementLaw, IncrementSource, LawSource};
use crate::mc::{check_replicas, run_replicas, HitCounter, MeanAccumulator, Merge, TailEstimate};
use crate::oracle::{dirichlet_kernel, joint_tail, single_tail, QuadratureSpec};
use crate::walk::{threshold, GridEvaluator, PhaseTable};

const MIN_REPLICAS: u64 = 1000;

/// `p_{m,eps}(r) = p(1 + (r - m) / eps)`, with `p` zero below 1, one above 2
/// and a degree-9 smoothstep in between.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlateauSpec {
    pub m: f64,
    pub eps: f64,
}

impl PlateauSpec {
    pub fn new(m: f64, eps: f64) -> Result<Self> {
        if !(m <= 1.0) || !m.is_finite() {
            return Err(Error::Parameter(format!("plateau start must be <= 1, got {m}")));
        }
        if !(eps > 0.0) || !eps.is_finite() {
            return Err(Error::Parameter(format!("plateau width must be positive, got {eps}")));
        }
        Ok(Self { m, eps })
    }
}

/// The order-4 smoothstep `t^5 (126 - 420 t + 540 t^2 - 315 t^3 + 70 t^4)`:
/// its first four derivatives vanish at both ends.
#[inline]
fn smoothstep9(t: f64) -> f64 {
    let t2 = t * t;
    t2 * t2 * t * (126.0 + t * (-420.0 + t * (540.0 + t * (-315.0 + 70.0 * t))))
}

pub fn plateau_eval(spec: &PlateauSpec, r: f64) -> f64 {
    let t = (r - spec.m) / spec.eps;
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else if t <= 0.5 {
        smoothstep9(t)
    } else {
        // S(t) = 1 - S(1 - t); keeps the flat contact at 1 exact in floating point.
        1.0 - smoothstep9(1.0 - t)
    }
}

/// `P(|S_n| > sigma phi(n))`.
pub fn mc_tail(law: &IncrementLaw, n: usize, alpha: f64, replicas: u64, seed: u64) -> Result<TailEstimate> {
    mc_tail_with(&LawSource::new(*law, seed), n, alpha, replicas)
}

pub fn mc_tail_with<S: IncrementSource>(source: &S, n: usize, alpha: f64, replicas: u64) -> Result<TailEstimate> {
    check_replicas(replicas, MIN_REPLICAS)?;
    let level = source.sigma() * threshold(alpha, n as u64)?;
    let counter: HitCounter = run_replicas(
        replicas,
        || vec![Complex64::default(); n],
        |buf, r, acc: &mut HitCounter| {
            source.fill(r, buf);
            let s: Complex64 = buf.iter().sum();
            acc.record(s.norm() > level);
        },
    );
    Ok(TailEstimate::from_counter(counter))
}

/// Counts for a pair of events sharing one stream.
#[derive(Debug, Default, Clone, Copy)]
pub struct PairCounter {
    pub both: u64,
    pub first: u64,
    pub second: u64,
    pub trials: u64,
}

impl PairCounter {
    pub fn record(&mut self, a: bool, b: bool) {
        self.both += (a && b) as u64;
        self.first += a as u64;
        self.second += b as u64;
        self.trials += 1;
    }

    /// Empirical `P(A and B) - P(A) P(B)` with its delta-method standard
    /// error (computed exactly from the 2x2 table).
    pub fn covariance(&self) -> (f64, f64) {
        let n = self.trials.max(1) as f64;
        let p11 = self.both as f64 / n;
        let p1 = self.first as f64 / n;
        let p2 = self.second as f64 / n;
        let p10 = p1 - p11;
        let p01 = p2 - p11;
        let p00 = 1.0 - p11 - p10 - p01;
        let cov = p11 - p1 * p2;
        let sq = |x: f64| x * x;
        let m4 = p11 * sq(1.0 - p1) * sq(1.0 - p2)
            + p10 * sq(1.0 - p1) * sq(p2)
            + p01 * sq(p1) * sq(1.0 - p2)
            + p00 * sq(p1) * sq(p2);
        (cov, ((m4 - cov * cov).max(0.0) / n).sqrt())
    }
}

impl Merge for PairCounter {
    fn merge(&mut self, o: Self) {
        self.both += o.both;
        self.first += o.first;
        self.second += o.second;
        self.trials += o.trials;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointEstimate {
    pub theta: f64,
    /// `P(|S_n| > sigma phi, |S_n(theta)| > sigma phi)`.
    pub joint: TailEstimate,
    pub base: TailEstimate,
    pub rotated: TailEstimate,
    /// Empirical covariance of the two indicators and its standard error.
    pub covariance: f64,
    pub covariance_se: f64,
}

impl JointEstimate {
    fn from_counter(theta: f64, c: &PairCounter) -> Self {
        let (covariance, covariance_se) = c.covariance();
        Self {
            theta,
            joint: TailEstimate::from_hits(c.both, c.trials),
            base: TailEstimate::from_hits(c.first, c.trials),
            rotated: TailEstimate::from_hits(c.second, c.trials),
            covariance,
            covariance_se,
        }
    }
}

pub fn mc_joint(
    law: &IncrementLaw,
    n: usize,
    theta: f64,
    alpha: f64,
    replicas: u64,
    seed: u64,
) -> Result<JointEstimate> {
    mc_joint_with(&LawSource::new(*law, seed), n, theta, alpha, replicas)
}

pub fn mc_joint_with<S: IncrementSource>(
    source: &S,
    n: usize,
    theta: f64,
    alpha: f64,
    replicas: u64,
) -> Result<JointEstimate> {
    check_replicas(replicas, MIN_REPLICAS)?;
    let level = source.sigma() * threshold(alpha, n as u64)?;
    let table = PhaseTable::new(n, theta);
    let counter: PairCounter = run_replicas(
        replicas,
        || vec![Complex64::default(); n],
        |buf, r, acc: &mut PairCounter| {
            source.fill(r, buf);
            let s0: Complex64 = buf.iter().sum();
            let s1 = table.eval(buf);
            acc.record(s0.norm() > level, s1.norm() > level);
        },
    );
    Ok(JointEstimate::from_counter(table.theta(), &counter))
}

/// One angle of a decorrelation scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecorrelationRow {
    pub theta: f64,
    pub abs_d: f64,
    pub mc: JointEstimate,
    /// Quadrature joint tail (Gaussian laws only).
    pub oracle_joint: Option<f64>,
    pub oracle_joint_err: Option<f64>,
    /// `|joint - single^2| n^{2 alpha} n theta / ln n` from quadrature.
    pub oracle_ratio: Option<f64>,
    /// Same ratio from the Monte Carlo covariance.
    pub mc_ratio: f64,
}

/// Joint-minus-product scan over `thetas` from common random numbers.
///
/// Dyadic angles share one folded FFT grid per replica; other angles fall
/// back to precomputed phase tables.
pub fn decorrelation_curve(
    law: &IncrementLaw,
    n: usize,
    alpha: f64,
    thetas: &[f64],
    replicas: u64,
    seed: u64,
) -> Result<Vec<DecorrelationRow>> {
    let rows = decorrelation_curve_with(&LawSource::new(*law, seed), n, alpha, thetas, replicas)?;
    if !law.is_gaussian() {
        return Ok(rows);
    }
    let single2 = single_tail(n as u64, alpha)?.powi(2);
    let scale = (n as f64).powf(2.0 * alpha) * n as f64 / (n as f64).ln();
    rows.into_iter()
        .map(|mut row| {
            if row.abs_d < 1.0 - 1e-12 {
                let q = joint_tail(n as u64, row.theta, alpha, QuadratureSpec::default())?;
                row.oracle_joint = Some(q.value);
                row.oracle_joint_err = Some(q.error);
                row.oracle_ratio = Some((q.value - single2).abs() * scale * row.theta);
            }
            Ok(row)
        })
        .collect()
}

fn dyadic_depth(theta: f64) -> Option<u32> {
    (0..=20).find(|&m| {
        let x = theta * (1u64 << m) as f64;
        x == x.round()
    })
}

pub fn decorrelation_curve_with<S: IncrementSource>(
    source: &S,
    n: usize,
    alpha: f64,
    thetas: &[f64],
    replicas: u64,
) -> Result<Vec<DecorrelationRow>> {
    check_replicas(replicas, MIN_REPLICAS)?;
    if thetas.is_empty() {
        return Err(Error::Parameter("no angles given".into()));
    }
    for &t in thetas {
        if !(t > 0.0 && t <= 0.5) {
            return Err(Error::Parameter(format!(
                "decorrelation angles must lie in (0, 1/2], got {t}"
            )));
        }
    }
    let level = source.sigma() * threshold(alpha, n as u64)?;
    let depths: Option<Vec<u32>> = thetas.iter().map(|&t| dyadic_depth(t)).collect();
    let grid_depth = depths.as_ref().map(|d| d.iter().copied().max().unwrap_or(0));

    let counters: Vec<PairCounter> = match grid_depth {
        Some(depth) => {
            let size = 1usize << depth;
            let idx: Vec<usize> = thetas.iter().map(|&t| (t * size as f64).round() as usize).collect();
            run_replicas(
                replicas,
                || {
                    (
                        vec![Complex64::default(); n],
                        GridEvaluator::new(depth).expect("depth <= 20"),
                        Vec::new(),
                    )
                },
                |(buf, grid, values), r, acc: &mut Vec<PairCounter>| {
                    if acc.is_empty() {
                        acc.resize(idx.len(), PairCounter::default());
                    }
                    source.fill(r, buf);
                    grid.eval_into(buf, values);
                    let base = values[0].norm() > level;
                    for (c, &i) in acc.iter_mut().zip(&idx) {
                        c.record(base, values[i].norm() > level);
                    }
                },
            )
        }
        None => {
            let tables: Vec<PhaseTable> = thetas.iter().map(|&t| PhaseTable::new(n, t)).collect();
            run_replicas(
                replicas,
                || vec![Complex64::default(); n],
                |buf, r, acc: &mut Vec<PairCounter>| {
                    if acc.is_empty() {
                        acc.resize(tables.len(), PairCounter::default());
                    }
                    source.fill(r, buf);
                    let s0: Complex64 = buf.iter().sum();
                    let base = s0.norm() > level;
                    for (c, t) in acc.iter_mut().zip(&tables) {
                        c.record(base, t.eval(buf).norm() > level);
                    }
                },
            )
        }
    };

    let scale = (n as f64).powf(2.0 * alpha) * n as f64 / (n as f64).ln();
    thetas
        .iter()
        .zip(&counters)
        .map(|(&theta, c)| {
            let mc = JointEstimate::from_counter(theta, c);
            Ok(DecorrelationRow {
                theta,
                abs_d: dirichlet_kernel(n as u64, theta)?.norm(),
                mc,
                oracle_joint: None,
                oracle_joint_err: None,
                oracle_ratio: None,
                mc_ratio: mc.covariance.abs() * scale * theta,
            })
        })
        .collect()
}

/// `E p_{m,eps}(|S_n| / (sigma phi(n)))`.
pub fn mc_smoothed(
    law: &IncrementLaw,
    n: usize,
    alpha: f64,
    spec: PlateauSpec,
    replicas: u64,
    seed: u64,
) -> Result<TailEstimate> {
    mc_smoothed_with(&LawSource::new(*law, seed), n, alpha, spec, replicas)
}

pub fn mc_smoothed_with<S: IncrementSource>(
    source: &S,
    n: usize,
    alpha: f64,
    spec: PlateauSpec,
    replicas: u64,
) -> Result<TailEstimate> {
    check_replicas(replicas, MIN_REPLICAS)?;
    let level = source.sigma() * threshold(alpha, n as u64)?;
    let acc: MeanAccumulator = run_replicas(
        replicas,
        || vec![Complex64::default(); n],
        |buf, r, acc: &mut MeanAccumulator| {
            source.fill(r, buf);
            let s: Complex64 = buf.iter().sum();
            acc.push(plateau_eval(&spec, s.norm() / level));
        },
    );
    Ok(TailEstimate::from_mean(&acc))
}

/// Inputs to Bernstein's inequality for a sum of independent centred
/// variables bounded by `m_bound`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BernsteinParams {
    pub variance_sum: f64,
    pub m_bound: f64,
    pub t: f64,
}

impl BernsteinParams {
    pub fn new(variance_sum: f64, m_bound: f64, t: f64) -> Result<Self> {
        if !(variance_sum >= 0.0) || !(m_bound > 0.0) || !(t > 0.0) {
            return Err(Error::Parameter(format!(
                "Bernstein needs variance_sum >= 0, M > 0, t > 0; got {variance_sum}, {m_bound}, {t}"
            )));
        }
        Ok(Self {
            variance_sum,
            m_bound,
            t,
        })
    }
}

/// `exp(-(t^2 / 2) / (sum E X_i^2 + M t / 3))`.
pub fn bernstein_bound(p: &BernsteinParams) -> f64 {
    (-(p.t * p.t / 2.0) / (p.variance_sum + p.m_bound * p.t / 3.0)).exp()
}

/// Parameters of the direction-discretized tail bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DirectionalParams {
    pub n: u64,
    pub alpha: f64,
    pub m: f64,
    pub d_n: u32,
    pub k_n: f64,
    /// `psi(n) = (m phi(n) - K_n) cos(pi / d_n)`.
    pub psi: f64,
}

impl DirectionalParams {
    pub fn new(n: u64, alpha: f64, m: f64, d_n: u32, k_n: f64) -> Result<Self> {
        if d_n < 3 {
            return Err(Error::Parameter(format!("need at least 3 directions, got {d_n}")));
        }
        if !(k_n >= 0.0) {
            return Err(Error::Parameter(format!("truncation level must be >= 0, got {k_n}")));
        }
        let psi = (m * threshold(alpha, n)? - k_n) * (std::f64::consts::PI / d_n as f64).cos();
        Ok(Self {
            n,
            alpha,
            m,
            d_n,
            k_n,
            psi,
        })
    }

    /// `d_n = max(3, ceil(ln n))`, `K_n = (ln n)^2`.
    pub fn with_defaults(n: u64, alpha: f64, m: f64) -> Result<Self> {
        let l = (n as f64).ln();
        Self::new(n, alpha, m, (l.ceil() as u32).max(3), l * l)
    }
}

/// Constants for the truncation term `C n e^{-kappa K_n}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncationConstants {
    pub c: f64,
    pub kappa: f64,
}

impl TruncationConstants {
    /// `C = 10` with `kappa` from the law.
    pub fn for_law(law: &IncrementLaw) -> Self {
        Self {
            c: 10.0,
            kappa: law.kappa(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DirectionalBound {
    pub params: DirectionalParams,
    /// `d_n exp(-(psi^2 / 2) / (n + psi K_n / 3))`.
    pub bernstein_term: f64,
    /// `C n e^{-kappa K_n}`.
    pub truncation_term: f64,
    pub total: f64,
}

/// Majorant for `P(|S_n| > m sigma phi(n))` (in units where the real part
/// of one step has unit variance), built from `d_n` directional half-plane
/// events, truncation at `K_n` and Bernstein's inequality.
pub fn directional_bound(params: DirectionalParams, consts: TruncationConstants) -> Result<DirectionalBound> {
    if !(params.psi > 0.0) {
        return Err(Error::Regime(format!(
            "threshold too small: psi(n) = {} <= 0",
            params.psi
        )));
    }
    let n = params.n as f64;
    let b = BernsteinParams::new(n, params.k_n.max(f64::MIN_POSITIVE), params.psi)?;
    let bernstein_term = params.d_n as f64 * bernstein_bound(&b);
    let truncation_term = consts.c * n * (-consts.kappa * params.k_n).exp();
    Ok(DirectionalBound {
        params,
        bernstein_term,
        truncation_term,
        total: bernstein_term + truncation_term,
    })
}
