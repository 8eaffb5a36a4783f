//! Dyadic trees of circled vertices and the statistics built on them.
//!
//! Vertex `i` at level `n` stands for the angle `i 2^{-n}` (left endpoint of
//! its dyadic interval) at time `floor(q^n)`. Its mark is either the
//! indicator of `|S_{floor(q^n)}(i 2^{-n})| > sigma phi(floor(q^n))` or a
//! plateau of the normalized modulus.

use std::io::Write;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::increments::{IncrementLaw, IncrementSource, LawSource, SeedSpec};
use crate::mc::MeanAccumulator;
use crate::moddev::{plateau_eval, PlateauSpec};
use crate::walk::{threshold, GridEvaluator, TimeSchedule};

/// Largest number of increments a single tree may draw.
const MAX_TREE_TIME: u64 = 1 << 28;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MarkKind {
    Indicator,
    Plateau(PlateauSpec),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeConfig {
    pub q: f64,
    pub max_depth: u32,
    pub alpha: f64,
    pub mark_kind: MarkKind,
}

impl TreeConfig {
    pub fn new(q: f64, max_depth: u32, alpha: f64, mark_kind: MarkKind) -> Result<Self> {
        if !(q > 1.0 && q.is_finite()) {
            return Err(Error::Config(format!("q must exceed 1, got {q}")));
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::Config(format!("alpha must be positive, got {alpha}")));
        }
        if max_depth > 24 {
            return Err(Error::Config(format!("depth {max_depth} exceeds the supported 24")));
        }
        let schedule = TimeSchedule::new(q, max_depth)?;
        if schedule.time(max_depth as usize) > MAX_TREE_TIME {
            return Err(Error::Config(format!(
                "floor(q^{max_depth}) = {} increments is too many",
                schedule.time(max_depth as usize)
            )));
        }
        Ok(Self {
            q,
            max_depth,
            alpha,
            mark_kind,
        })
    }

    pub fn indicator(q: f64, max_depth: u32, alpha: f64) -> Result<Self> {
        Self::new(q, max_depth, alpha, MarkKind::Indicator)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeLevel {
    pub level: u32,
    /// `floor(q^level)`, or `None` for synthetic trees.
    pub time: Option<u64>,
    /// False for levels skipped because `floor(q^level) < 2`.
    pub marked: bool,
    /// `2^level` marks in `[0, 1]`.
    pub marks: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircledTree {
    /// `None` for synthetic trees.
    pub config: Option<TreeConfig>,
    pub law: Option<IncrementLaw>,
    pub seed: SeedSpec,
    pub levels: Vec<TreeLevel>,
}

impl CircledTree {
    pub fn depth(&self) -> u32 {
        self.levels.len() as u32 - 1
    }

    pub fn marks(&self, level: u32) -> Result<&[f64]> {
        self.levels
            .get(level as usize)
            .map(|l| l.marks.as_slice())
            .ok_or_else(|| Error::Range(format!("level {level} beyond tree depth {}", self.depth())))
    }

    /// One line per level: `level q n_time marks...`. Synthetic trees print
    /// `-` for `q` and `n_time`.
    pub fn write_dump<W: Write>(&self, mut out: W) -> Result<()> {
        let q = self.config.map(|c| c.q.to_string()).unwrap_or_else(|| "-".into());
        for l in &self.levels {
            let t = l.time.map(|t| t.to_string()).unwrap_or_else(|| "-".into());
            write!(out, "{} {} {}", l.level, q, t)?;
            for m in &l.marks {
                write!(out, " {m}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

pub fn build_tree(law: &IncrementLaw, config: TreeConfig, seed: SeedSpec) -> Result<CircledTree> {
    let source = LawSource::new(*law, seed.master_seed);
    let mut tree = build_tree_with_source(&source, config, seed.replica_index)?;
    tree.law = Some(*law);
    Ok(tree)
}

/// Builds a tree from replica `replica` of `source`. Level `n` reads the
/// first `floor(q^n)` increments of a single stream.
pub fn build_tree_with_source<S: IncrementSource>(source: &S, config: TreeConfig, replica: u64) -> Result<CircledTree> {
    let schedule = TimeSchedule::new(config.q, config.max_depth)?;
    let mut buf = vec![Complex64::default(); schedule.time(config.max_depth as usize) as usize];
    source.fill(replica, &mut buf);
    let mut values = Vec::new();
    let mut levels = Vec::with_capacity(config.max_depth as usize + 1);
    for n in 0..=config.max_depth {
        let t = schedule.time(n as usize);
        let size = 1usize << n;
        if t < 2 {
            levels.push(TreeLevel {
                level: n,
                time: Some(t),
                marked: false,
                marks: vec![0.0; size],
            });
            continue;
        }
        let scale = source.sigma() * threshold(config.alpha, t)?;
        GridEvaluator::new(n)?.eval_into(&buf[..t as usize], &mut values);
        let marks = values
            .iter()
            .map(|s| {
                let x = s.norm() / scale;
                match config.mark_kind {
                    MarkKind::Indicator => f64::from(u8::from(x > 1.0)),
                    MarkKind::Plateau(p) => plateau_eval(&p, x),
                }
            })
            .collect();
        levels.push(TreeLevel {
            level: n,
            time: Some(t),
            marked: true,
            marks,
        });
    }
    Ok(CircledTree {
        config: Some(config),
        law: None,
        seed: SeedSpec::new(0, replica),
        levels,
    })
}

/// `trees` independent trees, replica `r` keyed by `(master_seed, r)`.
pub fn build_forest(law: &IncrementLaw, config: TreeConfig, master_seed: u64, trees: u64) -> Result<Vec<CircledTree>> {
    (0..trees)
        .into_par_iter()
        .map(|r| build_tree(law, config, SeedSpec::new(master_seed, r)))
        .collect()
}

/// Tree whose vertex at level `n` is an independent Bernoulli(`2^{-n beta}`)
/// indicator. Its expected level-`n` count is `2^{n (1 - beta)}`.
pub fn synthetic_bernoulli_tree(beta: f64, depth: u32, seed: SeedSpec) -> Result<CircledTree> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::Parameter(format!("beta must lie in [0, 1], got {beta}")));
    }
    if depth > 24 {
        return Err(Error::Parameter(format!("depth {depth} exceeds the supported 24")));
    }
    let mut rng = seed.rng();
    let levels = (0..=depth)
        .map(|n| {
            let p = (-(n as f64) * beta).exp2();
            let marks = (0..1usize << n)
                .map(|_| f64::from(u8::from(rng.random::<f64>() < p)))
                .collect();
            TreeLevel {
                level: n,
                time: None,
                marked: true,
                marks,
            }
        })
        .collect();
    Ok(CircledTree {
        config: None,
        law: None,
        seed,
        levels,
    })
}

/// `M_n(u) = sum of Z_v over the level-n descendants v of u = (level, index)`.
pub fn subtree_sum(tree: &CircledTree, level: u32, index: usize, n: u32) -> Result<f64> {
    if n < level || n > tree.depth() || index >= 1usize << level {
        return Err(Error::Range(format!(
            "vertex ({level}, {index}) at level {n} outside a depth-{} tree",
            tree.depth()
        )));
    }
    let shift = n - level;
    let marks = tree.marks(n)?;
    Ok(marks[index << shift..(index + 1) << shift].iter().sum())
}

/// `#{i : Z_{v_i^level} > 0}`; zero beyond the tree depth.
pub fn count_circled(tree: &CircledTree, level: u32) -> u64 {
    tree.marks(level)
        .map(|m| m.iter().filter(|&&z| z > 0.0).count() as u64)
        .unwrap_or(0)
}

/// Per-level moment statistics over a forest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentStats {
    pub level: u32,
    /// Fraction of vertices with `Z > 0`.
    pub p_hat: f64,
    /// Mean mark.
    pub m_hat: f64,
    /// Fraction of vertices with `Z = 1`.
    pub p_one: f64,
    /// `Var(M_n(root)) / (m_hat 2^n)`; `None` when `m_hat = 0`.
    pub var_ratio: Option<f64>,
    pub mean_count: f64,
    pub count_se: f64,
}

pub fn moment_stats(trees: &[CircledTree], level: u32) -> Result<MomentStats> {
    if trees.is_empty() {
        return Err(Error::Parameter("no trees".into()));
    }
    let size = (1u64 << level) as f64;
    let (mut pos, mut ones) = (0u64, 0u64);
    let mut mass = MeanAccumulator::default();
    let mut counts = MeanAccumulator::default();
    for t in trees {
        let marks = t.marks(level)?;
        let c = marks.iter().filter(|&&z| z > 0.0).count() as u64;
        pos += c;
        ones += marks.iter().filter(|&&z| z == 1.0).count() as u64;
        mass.push(marks.iter().sum());
        counts.push(c as f64);
    }
    let total = trees.len() as f64 * size;
    let m_hat = mass.mean() / size;
    Ok(MomentStats {
        level,
        p_hat: pos as f64 / total,
        m_hat,
        p_one: ones as f64 / total,
        var_ratio: (m_hat > 0.0).then(|| mass.variance() / (m_hat * size)),
        mean_count: counts.mean(),
        count_se: (counts.variance() / trees.len() as f64).sqrt(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceRatio {
    pub level: u32,
    pub ratio: Option<f64>,
    /// True when `m_hat = 0` and the level was skipped.
    pub skipped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceProfile {
    pub rows: Vec<VarianceRatio>,
    /// Set for `q < 2`, where the ratio may grow like `(2 / q)^n`.
    pub growth_expected: bool,
    pub max_ratio: Option<f64>,
}

pub fn variance_ratio_profile(trees: &[CircledTree], levels: &[u32]) -> Result<VarianceProfile> {
    if trees.len() < 50 {
        return Err(Error::Parameter(format!("need at least 50 trees, got {}", trees.len())));
    }
    let rows = levels
        .iter()
        .map(|&l| {
            let s = moment_stats(trees, l)?;
            Ok(VarianceRatio {
                level: l,
                ratio: s.var_ratio,
                skipped: s.var_ratio.is_none(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let max_ratio = rows.iter().filter_map(|r| r.ratio).reduce(f64::max);
    let growth_expected = trees[0].config.is_some_and(|c| c.q < 2.0);
    Ok(VarianceProfile {
        rows,
        growth_expected,
        max_ratio,
    })
}

/// Mean circled count at one level with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelMean {
    pub level: u32,
    pub mean: f64,
    pub stderr: f64,
}

pub fn level_means(trees: &[CircledTree], levels: &[u32]) -> Result<Vec<LevelMean>> {
    levels
        .iter()
        .map(|&l| {
            let s = moment_stats(trees, l)?;
            Ok(LevelMean {
                level: l,
                mean: s.mean_count,
                stderr: s.count_se,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub stderr: f64,
    pub intercept: f64,
    pub levels_used: usize,
    /// True for the inverse-variance fit, false for the ordinary fit used
    /// when some level has zero sampling error.
    pub weighted: bool,
}

/// Least-squares slope of `log2(mean count)` against level.
///
/// Levels with a zero mean are dropped. When every retained level has a
/// positive standard error the fit is weighted by the delta-method variance
/// of `log2(mean)` and the slope error uses those known variances; otherwise
/// an ordinary fit with a residual-based error is used.
pub fn dimension_slope(points: &[LevelMean]) -> Result<SlopeFit> {
    let used: Vec<&LevelMean> = points.iter().filter(|p| p.mean > 0.0).collect();
    if used.len() < 4 {
        return Err(Error::UndefinedSlope(format!(
            "need at least 4 levels with nonzero counts, got {}",
            used.len()
        )));
    }
    let ln2 = std::f64::consts::LN_2;
    let xs: Vec<f64> = used.iter().map(|p| p.level as f64).collect();
    let ys: Vec<f64> = used.iter().map(|p| p.mean.log2()).collect();
    let ses: Vec<f64> = used.iter().map(|p| p.stderr / (p.mean * ln2)).collect();
    let weighted = ses.iter().all(|&s| s > 0.0);
    let ws: Vec<f64> = if weighted {
        ses.iter().map(|s| 1.0 / (s * s)).collect()
    } else {
        vec![1.0; xs.len()]
    };
    let sw: f64 = ws.iter().sum();
    let xbar = xs.iter().zip(&ws).map(|(x, w)| x * w).sum::<f64>() / sw;
    let ybar = ys.iter().zip(&ws).map(|(y, w)| y * w).sum::<f64>() / sw;
    let sxx: f64 = xs.iter().zip(&ws).map(|(x, w)| w * (x - xbar).powi(2)).sum();
    let sxy: f64 = xs
        .iter()
        .zip(&ys)
        .zip(&ws)
        .map(|((x, y), w)| w * (x - xbar) * (y - ybar))
        .sum();
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;
    let stderr = if weighted {
        (1.0 / sxx).sqrt()
    } else {
        let rss: f64 = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| (y - intercept - slope * x).powi(2))
            .sum();
        (rss / (xs.len() - 2) as f64 / sxx).sqrt()
    };
    Ok(SlopeFit {
        slope,
        stderr,
        intercept,
        levels_used: used.len(),
        weighted,
    })
}

/// How mass sits inside the intervals of the finest recorded level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FineStructure {
    /// Spread uniformly.
    Uniform,
    /// Concentrated at a point.
    Atomic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureLevel {
    pub level: u32,
    pub masses: Vec<f64>,
}

/// A measure on `[0, 1)` given by its masses on dyadic intervals at a
/// sequence of levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DyadicMeasure {
    pub base_level: u32,
    pub levels: Vec<MeasureLevel>,
    pub fine: FineStructure,
}

impl DyadicMeasure {
    /// Measure with the given masses at one level.
    pub fn from_masses(level: u32, masses: Vec<f64>, fine: FineStructure) -> Result<Self> {
        if masses.len() != 1usize << level {
            return Err(Error::Parameter(format!(
                "level {level} needs {} masses, got {}",
                1usize << level,
                masses.len()
            )));
        }
        if masses.iter().any(|&m| !(m >= 0.0)) {
            return Err(Error::Parameter("masses must be nonnegative".into()));
        }
        Ok(Self {
            base_level: level,
            levels: vec![MeasureLevel { level, masses }],
            fine,
        })
    }

    pub fn uniform(level: u32) -> Self {
        let size = 1usize << level;
        Self::from_masses(level, vec![1.0 / size as f64; size], FineStructure::Uniform).expect("valid uniform masses")
    }

    pub fn finest_level(&self) -> u32 {
        self.levels.last().map(|l| l.level).unwrap_or(self.base_level)
    }

    pub fn total_mass(&self) -> f64 {
        self.levels.last().map(|l| l.masses.iter().sum()).unwrap_or(0.0)
    }

    /// Masses of the `2^depth` intervals at `depth`.
    ///
    /// Coarser depths aggregate the nearest finer recorded level; finer
    /// depths split the finest level uniformly (or put everything in the
    /// leftmost child for atomic measures).
    pub fn masses_at(&self, depth: u32) -> Vec<f64> {
        let src = self
            .levels
            .iter()
            .find(|l| l.level >= depth)
            .unwrap_or_else(|| self.levels.last().expect("measure has a level"));
        if src.level >= depth {
            let block = 1usize << (src.level - depth);
            return src.masses.chunks(block).map(|c| c.iter().sum()).collect();
        }
        let split = 1usize << (depth - src.level);
        let mut out = vec![0.0; 1usize << depth];
        for (i, &m) in src.masses.iter().enumerate() {
            match self.fine {
                FineStructure::Uniform => {
                    let share = m / split as f64;
                    out[i * split..(i + 1) * split].iter_mut().for_each(|x| *x = share);
                }
                FineStructure::Atomic => out[i * split] = m,
            }
        }
        out
    }

    /// Largest of `|total - 1|` and `|sum(children) - parent|` over every
    /// pair of consecutive recorded levels.
    pub fn additivity_error(&self) -> f64 {
        let mut err = (self.total_mass() - 1.0).abs();
        for w in self.levels.windows(2) {
            let block = 1usize << (w[1].level - w[0].level);
            for (p, c) in w[0].masses.iter().zip(w[1].masses.chunks(block)) {
                err = err.max((c.iter().sum::<f64>() - p).abs());
            }
        }
        err
    }

    /// CSV with columns `level,index,mass`, one row per recorded interval.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["level", "index", "mass"])?;
        for l in &self.levels {
            for (i, m) in l.masses.iter().enumerate() {
                w.write_record([l.level.to_string(), i.to_string(), m.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Mass splitting along subtree sums.
///
/// Every interval at `levels[0]` gets mass `2^{-levels[0]}`; the mass of a
/// vertex `v` at `levels[k-1]` is then shared among its descendants `u` at
/// `levels[k]` in proportion to `Z_u`. Fails when some charged `v` has no
/// marked descendant.
pub fn build_frostman_measure(tree: &CircledTree, levels: &[u32]) -> Result<DyadicMeasure> {
    if levels.is_empty() || levels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Parameter(
            "levels must be nonempty and strictly increasing".into(),
        ));
    }
    if *levels.last().unwrap() > tree.depth() {
        return Err(Error::Range(format!(
            "level {} beyond tree depth {}",
            levels.last().unwrap(),
            tree.depth()
        )));
    }
    let base = levels[0];
    let size = 1usize << base;
    let mut recorded = vec![MeasureLevel {
        level: base,
        masses: vec![1.0 / size as f64; size],
    }];
    for w in levels.windows(2) {
        let (parent_level, level) = (w[0], w[1]);
        let marks = tree.marks(level)?;
        let block = 1usize << (level - parent_level);
        let parent = &recorded.last().unwrap().masses;
        let mut masses = vec![0.0; marks.len()];
        for (v, (&mu, kids)) in parent.iter().zip(marks.chunks(block)).enumerate() {
            if mu == 0.0 {
                continue;
            }
            let total: f64 = kids.iter().sum();
            if total <= 0.0 {
                return Err(Error::ScheduleRejected {
                    parent_level: parent_level as usize,
                    vertex: v,
                    level: level as usize,
                });
            }
            for (m, &z) in masses[v * block..(v + 1) * block].iter_mut().zip(kids) {
                *m = mu * z / total;
            }
        }
        recorded.push(MeasureLevel { level, masses });
    }
    Ok(DyadicMeasure {
        base_level: base,
        levels: recorded,
        fine: FineStructure::Uniform,
    })
}

/// First schedule in `candidates` that the tree supports.
pub fn find_feasible_schedule(tree: &CircledTree, candidates: &[Vec<u32>]) -> Option<(Vec<u32>, DyadicMeasure)> {
    candidates
        .iter()
        .find_map(|c| build_frostman_measure(tree, c).ok().map(|m| (c.clone(), m)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Energy {
    pub value: f64,
    pub cross: f64,
    pub diagonal: f64,
    /// Set for measures with atoms, whose energy is infinite.
    pub divergent: bool,
}

/// Discrete `gamma`-energy at `depth`:
/// `sum_{I != J} mu(I) mu(J) / dist(I, J)^gamma` over depth-`depth` dyadic
/// intervals (circular midpoint distance) plus, for each interval, the exact
/// self-energy `mu(I)^2 |I|^{-gamma} 2 / ((1 - gamma)(2 - gamma))` of mass
/// spread uniformly on it.
pub fn gamma_energy(measure: &DyadicMeasure, gamma: f64, depth: u32) -> Result<Energy> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::Domain(format!("gamma must lie in (0, 1), got {gamma}")));
    }
    if depth > 16 {
        return Err(Error::Parameter(format!(
            "energy depth {depth} exceeds the supported 16"
        )));
    }
    if measure.fine == FineStructure::Atomic && measure.total_mass() > 0.0 {
        return Ok(Energy {
            value: f64::INFINITY,
            cross: f64::NAN,
            diagonal: f64::INFINITY,
            divergent: true,
        });
    }
    let masses = measure.masses_at(depth);
    let size = masses.len();
    let support: Vec<(usize, f64)> = masses.iter().copied().enumerate().filter(|&(_, m)| m > 0.0).collect();
    // kernel[d] = (d / size)^{-gamma} for circular index distance d.
    let kernel: Vec<f64> = (0..=size / 2)
        .map(|d| {
            if d == 0 {
                0.0
            } else {
                (d as f64 / size as f64).powf(-gamma)
            }
        })
        .collect();
    let mut cross = 0.0;
    for (a, &(i, mi)) in support.iter().enumerate() {
        let mut row = 0.0;
        for &(j, mj) in &support[a + 1..] {
            let d = j - i;
            row += mj * kernel[d.min(size - d)];
        }
        cross += 2.0 * mi * row;
    }
    let self_energy = 2.0 / ((1.0 - gamma) * (2.0 - gamma)) * (size as f64).powf(gamma);
    let diagonal: f64 = support.iter().map(|&(_, m)| m * m).sum::<f64>() * self_energy;
    Ok(Energy {
        value: cross + diagonal,
        cross,
        diagonal,
        divergent: false,
    })
}
