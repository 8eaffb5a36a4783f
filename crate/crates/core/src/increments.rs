//! Rotationally symmetric complex increments and their seeded streams.
//!
//! Every stream is keyed by a [`SeedSpec`]: the master seed selects a ChaCha8
//! key and the replica index selects the ChaCha stream, so replica `r` draws
//! the same values no matter which worker runs it or in which order.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LawKind {
    /// Both coordinates independent N(0, rho2).
    ComplexGaussian { rho2: f64 },
    /// Uniform on the unit circle.
    UnitCircle,
    /// Exponential(rate) radius, uniform angle.
    RadialExp { rate: f64 },
}

/// A rotationally symmetric step law together with its cached moments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IncrementLaw {
    kind: LawKind,
    sigma2: f64,
    kappa: f64,
}

impl IncrementLaw {
    pub fn new(kind: LawKind) -> Result<Self> {
        let (sigma2, kappa) = match kind {
            LawKind::ComplexGaussian { rho2 } => {
                if !(rho2 > 0.0 && rho2.is_finite()) {
                    return Err(Error::Parameter(format!(
                        "gaussian variance must be positive, got {rho2}"
                    )));
                }
                (rho2, 1.0)
            }
            LawKind::UnitCircle => (0.5, 1.0),
            LawKind::RadialExp { rate } => {
                if !(rate > 0.0 && rate.is_finite()) {
                    return Err(Error::Parameter(format!(
                        "radial exponential rate must be positive, got {rate}"
                    )));
                }
                // E r^2 = 2 / rate^2, split evenly between Re and Im.
                (1.0 / (rate * rate), rate / 2.0)
            }
        };
        Ok(Self { kind, sigma2, kappa })
    }

    pub fn gaussian(rho2: f64) -> Result<Self> {
        Self::new(LawKind::ComplexGaussian { rho2 })
    }

    pub fn unit_circle() -> Self {
        Self::new(LawKind::UnitCircle).expect("unit circle law has no parameters")
    }

    pub fn radial_exp(rate: f64) -> Result<Self> {
        Self::new(LawKind::RadialExp { rate })
    }

    pub fn kind(&self) -> LawKind {
        self.kind
    }

    /// `E(Re(U)^2)`.
    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn sigma(&self) -> f64 {
        self.sigma2.sqrt()
    }

    /// A constant with `E exp(kappa |U|) < inf`.
    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn is_gaussian(&self) -> bool {
        matches!(self.kind, LawKind::ComplexGaussian { .. })
    }

    /// Draws one increment from `rng`.
    #[inline]
    pub fn sample<R: RngCore + ?Sized>(&self, rng: &mut R) -> Complex64 {
        match self.kind {
            LawKind::ComplexGaussian { rho2 } => {
                let s = rho2.sqrt();
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                Complex64::new(s * re, s * im)
            }
            LawKind::UnitCircle => unit_direction(rng),
            LawKind::RadialExp { rate } => {
                // 1 - u lies in (0, 1], so the log is finite.
                let u: f64 = rng.random();
                let r = -(1.0 - u).ln() / rate;
                unit_direction(rng) * r
            }
        }
    }
}

/// Uniform point on the unit circle by rejection from the square.
#[inline]
fn unit_direction<R: RngCore + ?Sized>(rng: &mut R) -> Complex64 {
    const SCALE: f64 = 1.0 / 2147483648.0;
    loop {
        let bits = rng.next_u64();
        let x = ((bits >> 32) as u32 as i32) as f64 * SCALE;
        let y = (bits as u32 as i32) as f64 * SCALE;
        let s = x * x + y * y;
        if s <= 1.0 && s > 1e-12 {
            let inv = 1.0 / s.sqrt();
            return Complex64::new(x * inv, y * inv);
        }
    }
}

/// Parses `gaussian:1.0`, `circle` or `radial-exp:2.0`.
impl FromStr for IncrementLaw {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        let parse_arg = |a: Option<&str>, default: Option<f64>| -> Result<f64> {
            match a {
                Some(a) => a
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Parameter(format!("bad law parameter {a:?} in {s:?}"))),
                None => default.ok_or_else(|| Error::Parameter(format!("law {s:?} needs a parameter"))),
            }
        };
        match name {
            "gaussian" => Self::gaussian(parse_arg(arg, Some(1.0))?),
            "circle" => match arg {
                None => Ok(Self::unit_circle()),
                Some(_) => Err(Error::Parameter("circle law takes no parameter".into())),
            },
            "radial-exp" => Self::radial_exp(parse_arg(arg, None)?),
            other => Err(Error::Parameter(format!("unknown law {other:?}"))),
        }
    }
}

impl fmt::Display for IncrementLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            LawKind::ComplexGaussian { rho2 } => write!(f, "gaussian:{rho2}"),
            LawKind::UnitCircle => write!(f, "circle"),
            LawKind::RadialExp { rate } => write!(f, "radial-exp:{rate}"),
        }
    }
}

/// Identifies one reproducible increment stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedSpec {
    pub master_seed: u64,
    pub replica_index: u64,
}

impl SeedSpec {
    pub fn new(master_seed: u64, replica_index: u64) -> Self {
        Self {
            master_seed,
            replica_index,
        }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.replica_index);
        rng
    }
}

/// Endless iterator over the increments of one stream.
#[derive(Debug, Clone)]
pub struct IncrementStream {
    law: IncrementLaw,
    rng: ChaCha8Rng,
}

impl IncrementStream {
    pub fn new(law: IncrementLaw, seed: SeedSpec) -> Self {
        Self { law, rng: seed.rng() }
    }

    pub fn fill(&mut self, out: &mut [Complex64]) {
        for z in out.iter_mut() {
            *z = self.law.sample(&mut self.rng);
        }
    }
}

impl Iterator for IncrementStream {
    type Item = Complex64;

    fn next(&mut self) -> Option<Complex64> {
        Some(self.law.sample(&mut self.rng))
    }
}

/// The first `n` increments of the stream named by `seed`.
pub fn sample_increments(law: &IncrementLaw, n: usize, seed: SeedSpec) -> Result<Vec<Complex64>> {
    if n == 0 {
        return Err(Error::Parameter("need at least one increment".into()));
    }
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    IncrementStream::new(*law, seed).fill(&mut out);
    Ok(out)
}

pub fn sigma(law: &IncrementLaw) -> f64 {
    law.sigma()
}

/// Anything that can hand out per-replica increment prefixes.
///
/// The Monte Carlo drivers and the tree builder are written against this
/// trait so that deterministic sequences can stand in for a random law.
pub trait IncrementSource: Sync {
    /// Scale `sigma` used for thresholds `sigma * phi(n)`.
    fn sigma(&self) -> f64;

    /// Writes the first `out.len()` increments of replica `replica`.
    fn fill(&self, replica: u64, out: &mut [Complex64]);
}

/// A law paired with a master seed.
#[derive(Debug, Clone, Copy)]
pub struct LawSource {
    pub law: IncrementLaw,
    pub master_seed: u64,
}

impl LawSource {
    pub fn new(law: IncrementLaw, master_seed: u64) -> Self {
        Self { law, master_seed }
    }
}

impl IncrementSource for LawSource {
    fn sigma(&self) -> f64 {
        self.law.sigma()
    }

    fn fill(&self, replica: u64, out: &mut [Complex64]) {
        IncrementStream::new(self.law, SeedSpec::new(self.master_seed, replica)).fill(out);
    }
}

/// The same fixed sequence for every replica, zero-padded past its end.
#[derive(Debug, Clone)]
pub struct FixedIncrements {
    pub values: Vec<Complex64>,
    pub sigma: f64,
}

impl FixedIncrements {
    pub fn zeros(sigma: f64) -> Self {
        Self {
            values: Vec::new(),
            sigma,
        }
    }
}

impl IncrementSource for FixedIncrements {
    fn sigma(&self) -> f64 {
        self.sigma
    }

    fn fill(&self, _replica: u64, out: &mut [Complex64]) {
        for (i, z) in out.iter_mut().enumerate() {
            *z = self.values.get(i).copied().unwrap_or_default();
        }
    }
}
