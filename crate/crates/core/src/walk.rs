//! Evaluation of the coupled walk `S_n(theta) = sum_j U_j e^{2 pi i j theta}`.
//!
//! Angles live on `[0, 1)`; inputs outside are reduced mod 1.

use std::f64::consts::PI;
use std::io::Write;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Interval between exact phase re-anchors in the recurrence.
const REANCHOR: usize = 256;

pub fn normalize_angle(theta: f64) -> f64 {
    let t = theta - theta.floor();
    // theta = -tiny rounds to exactly 1.0.
    if t >= 1.0 {
        0.0
    } else {
        t
    }
}

/// `(j * theta) mod 1` without losing the low bits of the product.
#[inline]
pub(crate) fn frac_product(j: u64, theta: f64) -> f64 {
    let jf = j as f64;
    let p = jf * theta;
    let err = jf.mul_add(theta, -p);
    let f = (p - p.floor()) + err;
    f - f.floor()
}

/// `e^{2 pi i x}` with `x` reduced to `[-1/2, 1/2)` first.
#[inline]
pub(crate) fn unit_phase(x: f64) -> Complex64 {
    let r = x - (x + 0.5).floor();
    let (s, c) = (2.0 * PI * r).sin_cos();
    Complex64::new(c, s)
}

/// `e^{2 pi i j theta}`.
#[inline]
pub fn phase(j: u64, theta: f64) -> Complex64 {
    unit_phase(frac_product(j, theta))
}

/// `S_n(theta)` for `n = increments.len()`.
///
/// Uses the multiplicative recurrence `e^{2 pi i (j+1) theta} = e^{2 pi i j theta} w`
/// with an exact re-anchor every few hundred steps, which keeps the phase
/// error at a few ulps independent of `n`.
pub fn eval_point(increments: &[Complex64], theta: f64) -> Complex64 {
    let theta = normalize_angle(theta);
    let w = unit_phase(theta);
    let mut acc = ZERO;
    for (c, chunk) in increments.chunks(REANCHOR).enumerate() {
        let mut z = phase((c * REANCHOR + 1) as u64, theta);
        for &u in chunk {
            acc += u * z;
            z *= w;
        }
    }
    acc
}

/// `S_n^{(order)}(theta) = sum_r U_r (2 pi i r)^order e^{2 pi i r theta}`.
///
/// Order 0 is plain evaluation; orders above 8 are refused.
pub fn eval_derivative(increments: &[Complex64], order: u32, theta: f64) -> Result<Complex64> {
    if order == 0 {
        return Ok(eval_point(increments, theta));
    }
    if order > 8 {
        return Err(Error::Parameter(format!(
            "derivative order {order} exceeds the supported maximum of 8"
        )));
    }
    let theta = normalize_angle(theta);
    let w = unit_phase(theta);
    let mut acc = ZERO;
    for (c, chunk) in increments.chunks(REANCHOR).enumerate() {
        let base = c * REANCHOR + 1;
        let mut z = phase(base as u64, theta);
        for (k, &u) in chunk.iter().enumerate() {
            let r = (base + k) as f64;
            acc += u * z * r.powi(order as i32);
            z *= w;
        }
    }
    let factor = Complex64::new(0.0, 2.0 * PI).powu(order);
    Ok(acc * factor)
}

/// Precomputed `e^{2 pi i j theta}` for `j = 1..=n`, for repeated evaluation
/// at one angle across many increment sequences.
#[derive(Debug, Clone)]
pub struct PhaseTable {
    theta: f64,
    phases: Vec<Complex64>,
}

impl PhaseTable {
    pub fn new(n: usize, theta: f64) -> Self {
        let theta = normalize_angle(theta);
        let phases = (1..=n as u64).map(|j| phase(j, theta)).collect();
        Self { theta, phases }
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn len(&self) -> usize {
        self.phases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phases.is_empty()
    }

    /// Evaluates the walk over `min(len, increments.len())` steps.
    #[inline]
    pub fn eval(&self, increments: &[Complex64]) -> Complex64 {
        dot(increments, &self.phases)
    }
}

#[inline]
pub(crate) fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    // Four accumulators let the compiler keep the loop pipelined.
    let (mut re0, mut im0, mut re1, mut im1) = (0.0, 0.0, 0.0, 0.0);
    let mut ca = a.chunks_exact(2);
    let mut cb = b.chunks_exact(2);
    for (x, y) in (&mut ca).zip(&mut cb) {
        re0 += x[0].re * y[0].re - x[0].im * y[0].im;
        im0 += x[0].re * y[0].im + x[0].im * y[0].re;
        re1 += x[1].re * y[1].re - x[1].im * y[1].im;
        im1 += x[1].re * y[1].im + x[1].im * y[1].re;
    }
    let mut acc = Complex64::new(re0 + re1, im0 + im1);
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        acc += x * y;
    }
    acc
}

/// `S_n` at the dyadic angles `i / 2^depth`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DyadicGrid {
    pub depth: u32,
    pub n: usize,
    pub values: Vec<Complex64>,
}

impl DyadicGrid {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn theta(&self, i: usize) -> f64 {
        i as f64 / self.values.len() as f64
    }

    /// Writes `i,theta,re,im,modulus` rows under a header.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["i", "theta", "re", "im", "modulus"])?;
        for (i, z) in self.values.iter().enumerate() {
            w.write_record(&[
                i.to_string(),
                format!("{:e}", self.theta(i)),
                format!("{:e}", z.re),
                format!("{:e}", z.im),
                format!("{:e}", z.norm()),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Reusable folding + FFT evaluator for one grid depth.
pub struct GridEvaluator {
    depth: u32,
    fft: Arc<dyn Fft<f64>>,
    scratch: Vec<Complex64>,
}

impl GridEvaluator {
    pub fn new(depth: u32) -> Result<Self> {
        if depth > 30 {
            return Err(Error::Parameter(format!("grid depth {depth} is too large")));
        }
        let size = 1usize << depth;
        let fft = FftPlanner::new().plan_fft(size, FftDirection::Inverse);
        let scratch = vec![ZERO; fft.get_inplace_scratch_len()];
        Ok(Self { depth, fft, scratch })
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    /// Fills `out` (length `2^depth`) with `S_n(i / 2^depth)`.
    ///
    /// The phase `e^{2 pi i j i / 2^m}` only depends on `j mod 2^m`, so the
    /// increments are folded into `2^m` bins before a single inverse FFT.
    pub fn eval_into(&mut self, increments: &[Complex64], out: &mut Vec<Complex64>) {
        let size = 1usize << self.depth;
        let mask = size - 1;
        out.clear();
        out.resize(size, ZERO);
        for (k, &u) in increments.iter().enumerate() {
            out[(k + 1) & mask] += u;
        }
        if size > 1 {
            self.fft.process_with_scratch(out, &mut self.scratch);
        }
    }

    pub fn eval(&mut self, increments: &[Complex64]) -> DyadicGrid {
        let mut values = Vec::new();
        self.eval_into(increments, &mut values);
        DyadicGrid {
            depth: self.depth,
            n: increments.len(),
            values,
        }
    }
}

pub fn eval_grid_fft(increments: &[Complex64], depth: u32) -> Result<DyadicGrid> {
    Ok(GridEvaluator::new(depth)?.eval(increments))
}

/// `phi(n) = sqrt(2 alpha n ln n)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSpec {
    pub alpha: f64,
}

impl ThresholdSpec {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::Parameter(format!("alpha must be positive, got {alpha}")));
        }
        Ok(Self { alpha })
    }

    pub fn phi(&self, n: u64) -> Result<f64> {
        threshold(self.alpha, n)
    }

    /// `R_n = phi(n) / sqrt(2n) = sqrt(alpha ln n)`.
    pub fn radius(&self, n: u64) -> Result<f64> {
        check_time(n)?;
        Ok((self.alpha * (n as f64).ln()).sqrt())
    }
}

fn check_time(n: u64) -> Result<()> {
    if n < 2 {
        return Err(Error::Domain(format!("phi(n) needs n >= 2, got {n}")));
    }
    Ok(())
}

pub fn threshold(alpha: f64, n: u64) -> Result<f64> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::Parameter(format!("alpha must be positive, got {alpha}")));
    }
    check_time(n)?;
    let n = n as f64;
    Ok((2.0 * alpha * n * n.ln()).sqrt())
}

/// Double-double value `hi + lo`.
#[derive(Clone, Copy)]
struct DoubleDouble {
    hi: f64,
    lo: f64,
}

impl DoubleDouble {
    fn from(x: f64) -> Self {
        Self { hi: x, lo: 0.0 }
    }

    fn mul(self, o: Self) -> Self {
        let p = self.hi * o.hi;
        let e = self.hi.mul_add(o.hi, -p) + (self.hi * o.lo + self.lo * o.hi);
        let hi = p + e;
        Self { hi, lo: e - (hi - p) }
    }

    fn powu(self, mut k: u32) -> Self {
        let mut base = self;
        let mut acc = Self::from(1.0);
        while k > 0 {
            if k & 1 == 1 {
                acc = acc.mul(base);
            }
            base = base.mul(base);
            k >>= 1;
        }
        acc
    }

    fn floor(self) -> f64 {
        let f = self.hi.floor();
        if f == self.hi && self.lo < 0.0 {
            f - 1.0
        } else {
            f
        }
    }
}

/// `floor(q^k)` with the power carried in double-double precision.
pub fn floor_pow(q: f64, k: u32) -> u64 {
    DoubleDouble::from(q).powu(k).floor() as u64
}

/// Times `floor(q^k)` for `k = 0..=max_level`, with repeats collapsed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSchedule {
    pub q: f64,
    /// `times[k] = floor(q^k)`.
    pub times: Vec<u64>,
    /// Distinct times in increasing order.
    pub distinct: Vec<u64>,
    /// `distinct[level_to_distinct[k]] == times[k]`.
    pub level_to_distinct: Vec<usize>,
}

impl TimeSchedule {
    pub fn new(q: f64, max_level: u32) -> Result<Self> {
        if !(q > 1.0 && q.is_finite()) {
            return Err(Error::Parameter(format!("q must exceed 1, got {q}")));
        }
        if (max_level as f64) * q.log2() > 62.0 {
            return Err(Error::Parameter(format!("q^{max_level} does not fit in a 64-bit time")));
        }
        let times: Vec<u64> = (0..=max_level).map(|k| floor_pow(q, k)).collect();
        let mut distinct: Vec<u64> = Vec::new();
        let mut level_to_distinct = Vec::with_capacity(times.len());
        for &t in &times {
            if distinct.last() != Some(&t) {
                distinct.push(t);
            }
            level_to_distinct.push(distinct.len() - 1);
        }
        Ok(Self {
            q,
            times,
            distinct,
            level_to_distinct,
        })
    }

    pub fn time(&self, level: usize) -> u64 {
        self.times[level]
    }

    pub fn max_level(&self) -> usize {
        self.times.len() - 1
    }
}

/// Result of a windowed supremum search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowSup {
    /// Largest `|S_n(theta) - S_n(theta0)|` on the grid: a lower bound for
    /// the true supremum.
    pub lower: f64,
    /// `lower` plus a Taylor correction that bounds the supremum from above.
    pub upper: f64,
}

/// `sup |S_n(theta) - S_n(theta0)|` over `theta in [theta0, theta0 + eps]`,
/// sampled at `resolution` equally spaced angles (endpoints included).
///
/// Nested grids (`K` then `2K - 1`) give nondecreasing lower bounds.
pub fn sup_window(increments: &[Complex64], theta0: f64, eps: f64, resolution: usize) -> Result<WindowSup> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::Domain(format!("window width must be positive, got {eps}")));
    }
    if resolution < 2 {
        return Err(Error::Parameter("window resolution must be at least 2".into()));
    }
    let h = eps / (resolution - 1) as f64;
    let anchor = eval_point(increments, theta0);
    let mut lower = 0.0f64;
    let mut deriv_max = 0.0f64;
    for k in 0..resolution {
        let theta = theta0 + k as f64 * h;
        let d = (eval_point(increments, theta) - anchor).norm();
        lower = lower.max(d);
        deriv_max = deriv_max.max(eval_derivative(increments, 1, theta)?.norm());
    }
    let second = second_derivative_bound(increments);
    let upper = lower + deriv_max * h / 2.0 + second * h * h / 8.0;
    Ok(WindowSup { lower, upper })
}

/// `sum_r (2 pi r)^2 |U_r|`, a uniform bound on `|S_n''|`.
pub fn second_derivative_bound(increments: &[Complex64]) -> f64 {
    increments
        .iter()
        .enumerate()
        .map(|(k, u)| {
            let r = 2.0 * PI * (k + 1) as f64;
            r * r * u.norm()
        })
        .sum()
}

/// `sum_r 2 pi r |U_r|`, a uniform bound on `|S_n'|`.
pub fn first_derivative_bound(increments: &[Complex64]) -> f64 {
    increments
        .iter()
        .enumerate()
        .map(|(k, u)| 2.0 * PI * (k + 1) as f64 * u.norm())
        .sum()
}
