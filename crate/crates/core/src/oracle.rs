//! Exact and quadrature reference values for the Gaussian walk `B_n`.
//!
//! Conventions: `G_j` has covariance `I_2`, so `B_n / sqrt(2n)` is a
//! standard complex normal with density `e^{-|z|^2} / pi`, and the pair
//! `(B_n, B_n(theta)) / sqrt(2n)` has cross-covariance `D_n(theta)`.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::moddev::{plateau_eval, PlateauSpec};
use crate::quadrature::{integrate, Integral, Tolerance};
use crate::walk::{normalize_angle, phase, threshold, ThresholdSpec};

/// `D_n(theta)` together with its modulus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairCovariance {
    pub n: u64,
    pub theta: f64,
    pub d: Complex64,
    pub abs_d: f64,
}

impl PairCovariance {
    pub fn new(n: u64, theta: f64) -> Result<Self> {
        let d = dirichlet_kernel(n, theta)?;
        Ok(Self {
            n,
            theta: normalize_angle(theta),
            d,
            abs_d: d.norm().min(1.0),
        })
    }
}

/// `sin(pi * j * theta)` with the product reduced exactly mod 2.
fn sin_pi_product(j: u64, theta: f64) -> f64 {
    let jf = j as f64;
    let p = jf * theta;
    let err = jf.mul_add(theta, -p);
    let k = p.floor();
    let mut f = (p - k) + err;
    let mut odd = k.rem_euclid(2.0) == 1.0;
    if f >= 1.0 {
        f -= 1.0;
        odd = !odd;
    } else if f < 0.0 {
        f += 1.0;
        odd = !odd;
    }
    let s = (PI * f).sin();
    if odd {
        -s
    } else {
        s
    }
}

/// `(1/n) sum_{j=1}^n e^{2 pi i j theta}` by compensated direct summation.
pub fn dirichlet_direct(n: u64, theta: f64) -> Complex64 {
    let theta = normalize_angle(theta);
    let (mut re, mut im) = (Neumaier::default(), Neumaier::default());
    for j in 1..=n {
        let z = phase(j, theta);
        re.add(z.re);
        im.add(z.im);
    }
    Complex64::new(re.sum(), im.sum()) / n as f64
}

/// `D_n(theta) = (1/n) sum_{j=1}^n e^{2 pi i j theta}`.
///
/// Closed form `e^{i pi (n+1) theta} sin(pi n theta) / (n sin(pi theta))`;
/// direct summation when `|sin(pi theta)| < 1e-8`.
pub fn dirichlet_kernel(n: u64, theta: f64) -> Result<Complex64> {
    if n == 0 {
        return Err(Error::Parameter("Dirichlet kernel needs n >= 1".into()));
    }
    let theta = normalize_angle(theta);
    let den = sin_pi_product(1, theta);
    if den.abs() < 1e-8 {
        return Ok(dirichlet_direct(n, theta));
    }
    let ratio = sin_pi_product(n, theta) / (n as f64 * den);
    Ok(phase(n + 1, theta / 2.0) * ratio)
}

/// `P(|B_n(theta)| > phi(n)) = n^{-alpha}`, for every `theta`.
pub fn single_tail(n: u64, alpha: f64) -> Result<f64> {
    threshold(alpha, n)?;
    Ok((n as f64).powf(-alpha))
}

/// `P(|X| > t)` for `X ~ N_C(0, v)` with covariance `v I_2`.
pub fn gaussian_modulus_tail(variance: f64, t: f64) -> f64 {
    if t <= 0.0 {
        return 1.0;
    }
    (-t * t / (2.0 * variance)).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    /// Target absolute error for the joint tail.
    pub abs_tol: f64,
    /// Radial truncation beyond `R_n`.
    pub radius_margin: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            abs_tol: 1e-10,
            radius_margin: 12.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointTail {
    pub value: f64,
    pub error: f64,
    pub abs_d: f64,
}

/// `e^{-a} I_0(a)` for `a >= 0`.
///
/// Moderate `a`: trapezoidal rule on the relative-phase integral
/// `(1/2pi) int e^{a (cos psi - 1)} dpsi`, spectrally accurate for this
/// periodic integrand. Large `a`: the Hankel asymptotic series.
pub(crate) fn scaled_bessel_i0(a: f64) -> f64 {
    if a < 1e-300 {
        return 1.0;
    }
    if a <= 50.0 {
        const N: usize = 80;
        let mut s = 0.0;
        for k in 0..N {
            let psi = 2.0 * PI * k as f64 / N as f64;
            s += (a * (psi.cos() - 1.0)).exp();
        }
        return s / N as f64;
    }
    let x = 8.0 * a;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        let m = (2 * k - 1) as f64;
        let next = term * m * m / (k as f64 * x);
        if next.abs() > term.abs() {
            break;
        }
        term = next;
        sum += term;
        if term < 1e-17 * sum {
            break;
        }
    }
    sum / (2.0 * PI * a).sqrt()
}

/// `P(|B_n| > phi(n), |B_n(theta)| > phi(n))` by quadrature.
///
/// In squared normalized radii `u = |z|^2` and relative phase `psi` the
/// joint density integrates to
/// `(1/s) int int_{u1, u2 > R^2} exp(-(u1 + u2)/s) I_0(2 d sqrt(u1 u2) / s)`
/// with `d = |D_n(theta)|` and `s = 1 - d^2`; the `psi` integral is the
/// Bessel factor.
pub fn joint_tail(n: u64, theta: f64, alpha: f64, spec: QuadratureSpec) -> Result<JointTail> {
    let radius = ThresholdSpec::new(alpha)?.radius(n)?;
    let abs_d = PairCovariance::new(n, theta)?.abs_d;
    joint_tail_at(abs_d, radius, spec)
}

/// Joint tail for a pair of standard complex normals with cross-covariance
/// modulus `abs_d`, both beyond normalized radius `radius`.
pub fn joint_tail_at(abs_d: f64, radius: f64, spec: QuadratureSpec) -> Result<JointTail> {
    if !(abs_d < 1.0 - 1e-12) {
        return Err(Error::DegenerateCovariance(abs_d));
    }
    let d = abs_d.max(0.0);
    let s = 1.0 - d * d;
    let lo = radius * radius;
    let hi = (radius + spec.radius_margin).powi(2);
    let inner_tol = Tolerance {
        abs: 1e-16,
        rel: 1e-13,
        max_intervals: 4000,
    };
    let mut worst_inner: f64 = 0.0;
    let width = |u1: f64| 2.0 * (u1 * s).sqrt() + s;
    let outer = integrate(
        |u1| {
            let peak = d * d * u1 + s;
            let w = width(u1);
            let mut bps = vec![lo];
            for c in [
                peak - 16.0 * w,
                peak - 4.0 * w,
                peak - w,
                peak,
                peak + w,
                peak + 4.0 * w,
                peak + 16.0 * w,
            ] {
                if c > *bps.last().unwrap() && c < hi {
                    bps.push(c);
                }
            }
            bps.push(hi);
            let r = integrate(
                |u2| {
                    let g = (u1 * u2).sqrt();
                    let a = 2.0 * d * g / s;
                    (-(u1 + u2 - 2.0 * d * g) / s).exp() * scaled_bessel_i0(a)
                },
                &bps,
                inner_tol,
            );
            worst_inner = worst_inner.max(r.error);
            r.value / s
        },
        &[lo, lo + 0.5, lo + 2.0, lo + 8.0, lo + 32.0, hi].map(|x| x.min(hi)),
        Tolerance {
            abs: spec.abs_tol * 1e-2,
            rel: 1e-12,
            max_intervals: 4000,
        },
    );
    let error = outer.error + worst_inner * (hi - lo) / s;
    Ok(JointTail {
        value: outer.value,
        error,
        abs_d: d,
    })
}

/// Closed-form bounds obtained by replacing the cross term of the density
/// with `+- d (|z1|^2 + |z2|^2)`.
pub fn joint_tail_envelope(n: u64, theta: f64, alpha: f64) -> Result<(f64, f64)> {
    threshold(alpha, n)?;
    let d = PairCovariance::new(n, theta)?.abs_d;
    envelope_from(d, n, alpha)
}

pub fn envelope_from(d: f64, n: u64, alpha: f64) -> Result<(f64, f64)> {
    if !(d < 1.0) {
        return Err(Error::DegenerateCovariance(d));
    }
    let n = n as f64;
    let upper = (1.0 + d) / (1.0 - d) * n.powf(-2.0 * alpha / (1.0 + d));
    let lower = (1.0 - d) / (1.0 + d) * n.powf(-2.0 * alpha / (1.0 - d));
    Ok((lower, upper))
}

/// A bounded radial test function, evaluated at the `phi`-normalized
/// radius `|B_n| / phi(n)`.
#[derive(Clone)]
pub enum RadialFn {
    Zero,
    /// `1{x > m}`.
    Indicator {
        m: f64,
    },
    Plateau(PlateauSpec),
    Custom {
        f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
        /// Declared `sup |f|`.
        bound: f64,
    },
}

impl std::fmt::Debug for RadialFn {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RadialFn::Zero => write!(f, "Zero"),
            RadialFn::Indicator { m } => write!(f, "Indicator {{ m: {m} }}"),
            RadialFn::Plateau(p) => write!(f, "Plateau({p:?})"),
            RadialFn::Custom { bound, .. } => write!(f, "Custom {{ bound: {bound} }}"),
        }
    }
}

/// `E g(|B_n| / phi(n)) = int_0^inf g(sqrt(u) / R_n) e^{-u} du`.
pub fn smoothed_expectation(g: &RadialFn, n: u64, alpha: f64) -> Result<Integral> {
    let radius = ThresholdSpec::new(alpha)?.radius(n)?;
    let r2 = radius * radius;
    let tol = Tolerance {
        abs: 1e-13,
        rel: 1e-13,
        max_intervals: 4000,
    };
    match g {
        RadialFn::Zero => Ok(Integral {
            value: 0.0,
            error: 0.0,
            converged: true,
        }),
        RadialFn::Indicator { m } => Ok(Integral {
            value: (-m.max(0.0).powi(2) * r2).exp(),
            error: 0.0,
            converged: true,
        }),
        RadialFn::Plateau(spec) => {
            let a = spec.m.max(0.0).powi(2) * r2;
            let b = (spec.m + spec.eps).powi(2) * r2;
            let ramp = integrate(
                |u| plateau_eval(spec, u.sqrt() / radius) * (-u).exp(),
                &[a, 0.5 * (a + b), b],
                tol,
            );
            Ok(Integral {
                value: ramp.value + (-b).exp(),
                error: ramp.error,
                converged: ramp.converged,
            })
        }
        RadialFn::Custom { f, bound } => {
            if !bound.is_finite() {
                return Err(Error::Domain("test function must be bounded".into()));
            }
            let mut bad = None;
            let r = integrate(
                |u| {
                    let v = f(u.sqrt() / radius);
                    if !v.is_finite() || v.abs() > *bound {
                        bad = Some(v);
                        return 0.0;
                    }
                    v * (-u).exp()
                },
                &[
                    0.0,
                    0.25 * r2,
                    r2,
                    2.0 * r2 + 1.0,
                    4.0 * r2 + 8.0,
                    800.0f64.max(8.0 * r2),
                ],
                tol,
            );
            if let Some(v) = bad {
                return Err(Error::Domain(format!(
                    "test function value {v} exceeds its declared bound {bound}"
                )));
            }
            Ok(r)
        }
    }
}

/// `sum_{r=1}^n (2 pi r)^{2j}`, the variance scale of `B_n^{(j)}(0)`.
///
/// Returns `+inf` when the value overflows; see [`ln_derivative_variance`].
pub fn derivative_variance(n: u64, j: u32) -> Result<f64> {
    Ok(ln_derivative_variance(n, j)?.exp())
}

/// Natural log of [`derivative_variance`], computed as
/// `2j ln(2 pi n) + ln sum (r/n)^{2j}` so it never overflows.
pub fn ln_derivative_variance(n: u64, j: u32) -> Result<f64> {
    if j == 0 {
        return Err(Error::Parameter("derivative order must be at least 1".into()));
    }
    if n == 0 {
        return Err(Error::Parameter("need n >= 1".into()));
    }
    let nf = n as f64;
    let mut acc = Neumaier::default();
    // Largest terms last keeps the small ones from being absorbed early.
    for r in 1..=n {
        acc.add((r as f64 / nf).powi(2 * j as i32));
    }
    Ok(2.0 * j as f64 * (2.0 * PI * nf).ln() + acc.sum().ln())
}

/// `P(|B_{n2}(x) - B_{n1}(x)| > (eta / 2) phi(n1))`.
///
/// The difference sums `n2 - n1` Gaussian steps, so its law is
/// `N_C(0, n2 - n1)`.
pub fn time_increment_tail(n1: u64, n2: u64, eta: f64, alpha: f64) -> Result<f64> {
    if n2 <= n1 {
        return Err(Error::Parameter(format!("need n2 > n1, got {n1} and {n2}")));
    }
    if eta < 0.0 {
        return Err(Error::Parameter("eta must be nonnegative".into()));
    }
    let t = 0.5 * eta * threshold(alpha, n1)?;
    Ok(gaussian_modulus_tail((n2 - n1) as f64, t))
}

/// One row of the oracle table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct OracleRecord {
    pub n: u64,
    pub theta: f64,
    pub alpha: f64,
    pub D_re: f64,
    pub D_im: f64,
    pub single: f64,
    pub joint: f64,
    pub joint_err: f64,
    pub env_lo: f64,
    pub env_hi: f64,
}

pub fn oracle_record(n: u64, theta: f64, alpha: f64) -> Result<OracleRecord> {
    let d = dirichlet_kernel(n, theta)?;
    let single = single_tail(n, alpha)?;
    let joint = joint_tail(n, theta, alpha, QuadratureSpec::default())?;
    let (env_lo, env_hi) = joint_tail_envelope(n, theta, alpha)?;
    Ok(OracleRecord {
        n,
        theta: normalize_angle(theta),
        alpha,
        D_re: d.re,
        D_im: d.im,
        single,
        joint: joint.value,
        joint_err: joint.error,
        env_lo,
        env_hi,
    })
}

/// Neumaier compensated summation.
#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn sum(&self) -> f64 {
        self.sum + self.comp
    }
}
