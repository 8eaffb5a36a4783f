//! Command-line front end.
//!
//! Every subcommand produces a table of rows written as CSV or JSON, plus a
//! manifest recording the effective flags. Exit codes: 0 on success, 2 for
//! usage and configuration errors, 3 for numeric or regime errors.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::angular::{mc_angular_exceedance, mc_time_gap_exceedance, mc_time_increment, taylor_tail_bound, WindowSpec};
use crate::error::{Error, Result};
use crate::increments::{IncrementLaw, SeedSpec};
use crate::mc::TailEstimate;
use crate::moddev::{
    bernstein_bound, decorrelation_curve, directional_bound, mc_joint, mc_smoothed, mc_tail, BernsteinParams,
    DirectionalParams, PlateauSpec, TruncationConstants,
};
use crate::oracle::{
    gaussian_modulus_tail, joint_tail, oracle_record, single_tail, smoothed_expectation, QuadratureSpec, RadialFn,
};
use crate::tree::{
    build_forest, build_tree, dimension_slope, find_feasible_schedule, gamma_energy, moment_stats, MarkKind, TreeConfig,
};
use crate::walk::floor_pow;

#[derive(Debug, Parser)]
#[command(
    name = "rotwalk",
    version,
    about = "Coupled rotational random walk experiments",
    args_override_self = true
)]
pub struct Cli {
    /// Flat `key = value` file; its entries act as flags given before the
    /// command line ones.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Worker threads (results do not depend on this).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Result file; the manifest goes to `<out>.manifest.json`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    /// P(|S_n| > sigma phi(n)) by Monte Carlo.
    Tail(TailArgs),
    /// Joint exceedance at angles 0 and theta.
    Joint(JointArgs),
    /// Joint-minus-product scan over several angles.
    Decorrelation(DecorrelationArgs),
    /// E p_{m,eps}(|S_n| / (sigma phi(n))).
    Smoothed(SmoothedArgs),
    /// Closed-form majorants.
    Bounds(BoundsArgs),
    /// Angular window exceedance.
    Angular(AngularArgs),
    /// Exceedance across a schedule time gap.
    Timegap(TimegapArgs),
    /// Dump one circled tree.
    Tree(TreeArgs),
    /// Per-level circled counts and the log2-count slope.
    Dimension(DimensionArgs),
    /// Frostman measures and gamma-energies.
    Frostman(FrostmanArgs),
    /// Gaussian oracle record.
    Oracle(OracleArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Tail(_) => "tail",
            Command::Joint(_) => "joint",
            Command::Decorrelation(_) => "decorrelation",
            Command::Smoothed(_) => "smoothed",
            Command::Bounds(_) => "bounds",
            Command::Angular(_) => "angular",
            Command::Timegap(_) => "timegap",
            Command::Tree(_) => "tree",
            Command::Dimension(_) => "dimension",
            Command::Frostman(_) => "frostman",
            Command::Oracle(_) => "oracle",
        }
    }

    fn seed(&self) -> Option<u64> {
        match self {
            Command::Tail(a) => Some(a.mc.seed),
            Command::Joint(a) => Some(a.mc.seed),
            Command::Decorrelation(a) => Some(a.mc.seed),
            Command::Smoothed(a) => Some(a.mc.seed),
            Command::Angular(a) => Some(a.mc.seed),
            Command::Timegap(a) => Some(a.seed),
            Command::Tree(a) => Some(a.seed),
            Command::Dimension(a) => Some(a.seed),
            Command::Frostman(a) => Some(a.seed),
            Command::Bounds(_) | Command::Oracle(_) => None,
        }
    }
}

const SUBCOMMANDS: [&str; 11] = [
    "tail",
    "joint",
    "decorrelation",
    "smoothed",
    "bounds",
    "angular",
    "timegap",
    "tree",
    "dimension",
    "frostman",
    "oracle",
];

/// Parameters shared by the Monte Carlo subcommands.
#[derive(Debug, Clone, Args, Serialize)]
pub struct McArgs {
    /// `gaussian:<rho2>`, `circle` or `radial-exp:<rate>`.
    #[arg(long, default_value = "gaussian:1")]
    #[serde(serialize_with = "display")]
    pub law: IncrementLaw,
    #[arg(long)]
    pub n: u64,
    #[arg(long)]
    pub alpha: f64,
    #[arg(long, default_value_t = 100_000)]
    pub reps: u64,
    #[arg(long)]
    pub seed: u64,
}

fn display<T: std::fmt::Display, S: serde::Serializer>(v: &T, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_str(v)
}

#[derive(Debug, Args, Serialize)]
pub struct TailArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub mc: McArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct JointArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub mc: McArgs,
    #[arg(long)]
    pub theta: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct DecorrelationArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub mc: McArgs,
    /// Comma-separated angles in (0, 1/2]; defaults to 2^-1, ..., 2^-8.
    #[arg(long, value_delimiter = ',')]
    pub thetas: Vec<f64>,
}

#[derive(Debug, Args, Serialize)]
pub struct SmoothedArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub mc: McArgs,
    #[arg(long, default_value_t = 1.0)]
    pub m: f64,
    #[arg(long, default_value_t = 0.1)]
    pub eps: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundKind {
    Directional,
    Bernstein,
    Taylor,
}

#[derive(Debug, Args, Serialize)]
pub struct BoundsArgs {
    #[arg(long, value_enum, default_value = "directional")]
    pub kind: BoundKind,
    #[arg(long, default_value = "gaussian:1")]
    #[serde(serialize_with = "display")]
    pub law: IncrementLaw,
    #[arg(long, default_value_t = 10_000)]
    pub n: u64,
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
    /// Threshold multiple for the directional bound.
    #[arg(long, default_value_t = 1.0)]
    pub m: f64,
    /// Number of directions (default max(3, ceil(ln n))).
    #[arg(long)]
    pub dn: Option<u32>,
    /// Truncation level (default (ln n)^2).
    #[arg(long)]
    pub kn: Option<f64>,
    #[arg(long)]
    pub variance_sum: Option<f64>,
    #[arg(long)]
    pub m_bound: Option<f64>,
    #[arg(long)]
    pub t: Option<f64>,
    /// Taylor order.
    #[arg(long, default_value_t = 3)]
    pub order: u32,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long, default_value_t = 0.5)]
    pub eta: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct AngularArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub mc: McArgs,
    /// Window width (default n^-(1 + beta)).
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub eta: f64,
    #[arg(long, default_value_t = 0.5)]
    pub beta: f64,
    /// Grid angles in the window.
    #[arg(long = "grid", default_value_t = 8)]
    pub k: usize,
    /// Taylor order for the analytic bound.
    #[arg(long, default_value_t = 3)]
    pub order: u32,
}

#[derive(Debug, Args, Serialize)]
pub struct TimegapArgs {
    #[arg(long, default_value = "gaussian:1")]
    #[serde(serialize_with = "display")]
    pub law: IncrementLaw,
    #[arg(long)]
    pub q: Option<f64>,
    #[arg(long)]
    pub level: Option<u32>,
    #[arg(long, default_value_t = 1.0)]
    pub eta: f64,
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
    /// Angles in A_0^n.
    #[arg(long = "grid", default_value_t = 8)]
    pub k: usize,
    #[arg(long, default_value_t = 10_000)]
    pub reps: u64,
    #[arg(long)]
    pub seed: u64,
    /// Plain increment mode: |S_{n2} - S_{n1}| > sigma t.
    #[arg(long, requires_all = ["n2", "t"])]
    pub n1: Option<u64>,
    #[arg(long)]
    pub n2: Option<u64>,
    #[arg(long)]
    pub t: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MarkArg {
    Indicator,
    Plateau,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TreeShape {
    #[arg(long, default_value = "gaussian:1")]
    #[serde(serialize_with = "display")]
    pub law: IncrementLaw,
    #[arg(long, default_value_t = 3.0)]
    pub q: f64,
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
    #[arg(long, default_value_t = 10)]
    pub depth: u32,
    #[arg(long, value_enum, default_value = "indicator")]
    pub mark: MarkArg,
    /// Plateau start.
    #[arg(long, default_value_t = 1.0)]
    pub m: f64,
    /// Plateau width.
    #[arg(long, default_value_t = 1.0)]
    pub eps: f64,
}

impl TreeShape {
    fn config(&self) -> Result<TreeConfig> {
        let mark_kind = match self.mark {
            MarkArg::Indicator => MarkKind::Indicator,
            MarkArg::Plateau => MarkKind::Plateau(PlateauSpec::new(self.m, self.eps)?),
        };
        TreeConfig::new(self.q, self.depth, self.alpha, mark_kind)
    }
}

#[derive(Debug, Args, Serialize)]
pub struct TreeArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub shape: TreeShape,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 0)]
    pub replica: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct DimensionArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub shape: TreeShape,
    #[arg(long, default_value_t = 200)]
    pub trees: u64,
    #[arg(long)]
    pub seed: u64,
    /// First level in the fit (default: first level with floor(q^n) >= 2,
    /// but at least 4 when the tree is deep enough).
    #[arg(long)]
    pub min_level: Option<u32>,
}

#[derive(Debug, Args, Serialize)]
pub struct FrostmanArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub shape: TreeShape,
    #[arg(long, default_value_t = 1)]
    pub trees: u64,
    #[arg(long)]
    pub seed: u64,
    /// Candidate level schedules, tried in order: `0,4,8,12;0,12`.
    #[arg(long, default_value = "0,4,8,10;0,6,10;0,10")]
    pub schedules: String,
    #[arg(long, default_value_t = 0.1)]
    pub gamma: f64,
    /// Energy evaluation depths.
    #[arg(long, value_delimiter = ',', default_value = "9,10")]
    pub energy_depths: Vec<u32>,
    /// CSV file for the first feasible measure (`level,index,mass`).
    #[arg(long)]
    pub measure_out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct OracleArgs {
    #[arg(long)]
    pub n: u64,
    #[arg(long)]
    pub theta: f64,
    #[arg(long)]
    pub alpha: f64,
}

/// Ordered result table; every row carries the same keys.
#[derive(Debug, Default)]
struct Table {
    rows: Vec<Map<String, Value>>,
}

impl Table {
    fn push(&mut self, row: Map<String, Value>) {
        self.rows.push(row);
    }

    fn write<W: Write>(&self, out: W, format: Format) -> Result<()> {
        match format {
            Format::Json => {
                let mut out = out;
                serde_json::to_writer_pretty(&mut out, &self.rows)?;
                writeln!(out)?;
            }
            Format::Csv => {
                let mut w = csv::Writer::from_writer(out);
                let mut keys: Vec<&String> = Vec::new();
                for r in &self.rows {
                    for k in r.keys() {
                        if !keys.contains(&k) {
                            keys.push(k);
                        }
                    }
                }
                w.write_record(&keys)?;
                for r in &self.rows {
                    w.write_record(keys.iter().map(|k| match r.get(*k) {
                        None | Some(Value::Null) => String::new(),
                        Some(Value::String(s)) => s.clone(),
                        Some(v) => v.to_string(),
                    }))?;
                }
                w.flush()?;
            }
        }
        Ok(())
    }
}

/// Builds a result row: leading parameters, then the standard columns.
struct RowBuilder {
    map: Map<String, Value>,
}

impl RowBuilder {
    fn new(quantity: &str) -> Self {
        let mut map = Map::new();
        map.insert("quantity".into(), json!(quantity));
        Self { map }
    }

    fn param<V: Into<Value>>(mut self, k: &str, v: V) -> Self {
        self.map.insert(k.into(), v.into());
        self
    }

    fn estimate(self, e: &TailEstimate) -> Self {
        self.values(e.p_hat, Some(e.stderr), Some(e.ci95))
    }

    fn values(mut self, estimate: f64, stderr: Option<f64>, ci: Option<(f64, f64)>) -> Self {
        self.map.insert("estimate".into(), num(estimate));
        self.map.insert("stderr".into(), stderr.map(num).unwrap_or(Value::Null));
        self.map
            .insert("ci_lo".into(), ci.map(|c| num(c.0)).unwrap_or(Value::Null));
        self.map
            .insert("ci_hi".into(), ci.map(|c| num(c.1)).unwrap_or(Value::Null));
        self
    }

    fn oracle(mut self, value: Option<f64>, kind: &str) -> Self {
        self.map.insert("oracle".into(), value.map(num).unwrap_or(Value::Null));
        self.map.insert(
            "oracle_kind".into(),
            if value.is_some() { json!(kind) } else { Value::Null },
        );
        self
    }

    fn provenance(mut self, p: &str) -> Map<String, Value> {
        if !self.map.contains_key("oracle") {
            self = self.oracle(None, "");
        }
        self.map.insert("provenance".into(), json!(p));
        self.map
    }
}

/// Finite floats as numbers; non-finite ones as strings (`inf`, `NaN`).
fn num(x: f64) -> Value {
    serde_json::Number::from_f64(x)
        .map(Value::Number)
        .unwrap_or_else(|| Value::String(x.to_string()))
}

enum Output {
    Table(Table),
    Text(String),
}

/// Parses `argv`, runs the command and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(argv, &mut stdout.lock(), &mut stderr.lock())
}

pub fn run_with<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let args = match merge_config(args) {
        Ok(a) => a,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            return 2;
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let rendered = e.render().to_string();
            let _ = if e.use_stderr() {
                write!(stderr, "{rendered}")
            } else {
                write!(stdout, "{rendered}")
            };
            return code;
        }
    };
    match execute(&cli, stdout, stderr) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            if e.is_config() {
                2
            } else {
                3
            }
        }
    }
}

/// Splices `--key value` pairs from the config file right after the
/// subcommand name, so later command-line flags override them.
fn merge_config(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let mut path = None;
    for (i, a) in args.iter().enumerate() {
        let s = a.to_string_lossy();
        if s == "--config" {
            path = args.get(i + 1).cloned();
        } else if let Some(p) = s.strip_prefix("--config=") {
            path = Some(p.into());
        }
    }
    let Some(path) = path else { return Ok(args) };
    let text = fs::read_to_string(&path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", Path::new(&path).display())))?;
    let mut extra = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
        let k = k.trim().replace('_', "-");
        if k == "config" {
            return Err(Error::Config("config files cannot include other config files".into()));
        }
        extra.push(OsString::from(format!("--{k}")));
        extra.push(OsString::from(v.trim()));
    }
    let at = args
        .iter()
        .position(|a| SUBCOMMANDS.contains(&a.to_string_lossy().as_ref()))
        .map(|i| i + 1)
        .unwrap_or(args.len());
    let mut merged = args[..at].to_vec();
    merged.extend(extra);
    merged.extend_from_slice(&args[at..]);
    Ok(merged)
}

fn execute(cli: &Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<()> {
    let start = Instant::now();
    let output = match cli.threads {
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
            pool.install(|| dispatch(&cli.command, cli.format))?
        }
        None => dispatch(&cli.command, cli.format)?,
    };
    let format = cli.format.unwrap_or(match cli.command {
        Command::Oracle(_) => Format::Json,
        _ => Format::Csv,
    });
    match &cli.out {
        Some(path) => {
            let file = fs::File::create(path)?;
            emit(&output, std::io::BufWriter::new(file), format)?;
        }
        None => emit(&output, &mut *stdout, format)?,
    }
    let manifest = json!({
        "subcommand": cli.command.name(),
        "flags": serde_json::to_value(&cli.command)?
            .as_object()
            .and_then(|o| o.values().next().cloned())
            .unwrap_or(Value::Null),
        "format": format,
        "threads": cli.threads,
        "seed": cli.command.seed(),
        "version": env!("CARGO_PKG_VERSION"),
        "runtime_s": start.elapsed().as_secs_f64(),
    });
    match &cli.out {
        Some(path) => {
            let mut p = path.clone().into_os_string();
            p.push(".manifest.json");
            fs::write(PathBuf::from(p), serde_json::to_string_pretty(&manifest)? + "\n")?;
        }
        None => writeln!(stderr, "{}", serde_json::to_string(&manifest)?)?,
    }
    Ok(())
}

fn emit<W: Write>(output: &Output, mut out: W, format: Format) -> Result<()> {
    match output {
        Output::Table(t) => t.write(out, format),
        Output::Text(s) => {
            out.write_all(s.as_bytes())?;
            out.flush()?;
            Ok(())
        }
    }
}

fn dispatch(cmd: &Command, format: Option<Format>) -> Result<Output> {
    Ok(match cmd {
        Command::Tail(a) => Output::Table(cmd_tail(a)?),
        Command::Joint(a) => Output::Table(cmd_joint(a)?),
        Command::Decorrelation(a) => Output::Table(cmd_decorrelation(a)?),
        Command::Smoothed(a) => Output::Table(cmd_smoothed(a)?),
        Command::Bounds(a) => Output::Table(cmd_bounds(a)?),
        Command::Angular(a) => Output::Table(cmd_angular(a)?),
        Command::Timegap(a) => Output::Table(cmd_timegap(a)?),
        Command::Tree(a) => cmd_tree(a, format)?,
        Command::Dimension(a) => Output::Table(cmd_dimension(a)?),
        Command::Frostman(a) => Output::Table(cmd_frostman(a)?),
        Command::Oracle(a) => cmd_oracle(a, format)?,
    })
}

fn mc_params(q: &str, a: &McArgs) -> RowBuilder {
    RowBuilder::new(q)
        .param("law", a.law.to_string())
        .param("n", a.n)
        .param("alpha", num(a.alpha))
        .param("reps", a.reps)
        .param("seed", a.seed)
}

fn cmd_tail(a: &TailArgs) -> Result<Table> {
    let m = &a.mc;
    let e = mc_tail(&m.law, m.n as usize, m.alpha, m.reps, m.seed)?;
    let oracle = if m.law.is_gaussian() {
        Some(single_tail(m.n, m.alpha)?)
    } else {
        None
    };
    let mut t = Table::default();
    t.push(
        mc_params("tail", m)
            .estimate(&e)
            .oracle(oracle, "exact")
            .provenance("mc"),
    );
    Ok(t)
}

fn cmd_joint(a: &JointArgs) -> Result<Table> {
    let m = &a.mc;
    let e = mc_joint(&m.law, m.n as usize, a.theta, m.alpha, m.reps, m.seed)?;
    let oracle = if m.law.is_gaussian() {
        match joint_tail(m.n, a.theta, m.alpha, QuadratureSpec::default()) {
            Ok(j) => Some(j.value),
            Err(Error::DegenerateCovariance(_)) => Some(single_tail(m.n, m.alpha)?),
            Err(e) => return Err(e),
        }
    } else {
        None
    };
    let single = if m.law.is_gaussian() {
        Some(single_tail(m.n, m.alpha)?)
    } else {
        None
    };
    let mut t = Table::default();
    let row = |q: &str| mc_params(q, m).param("theta", num(a.theta));
    t.push(
        row("joint")
            .estimate(&e.joint)
            .oracle(oracle, "quadrature")
            .provenance("mc"),
    );
    t.push(row("base").estimate(&e.base).oracle(single, "exact").provenance("mc"));
    t.push(
        row("rotated")
            .estimate(&e.rotated)
            .oracle(single, "exact")
            .provenance("mc"),
    );
    let cov_oracle = oracle.zip(single).map(|(j, s)| j - s * s);
    t.push(
        row("covariance")
            .values(
                e.covariance,
                Some(e.covariance_se),
                Some((
                    e.covariance - 1.96 * e.covariance_se,
                    e.covariance + 1.96 * e.covariance_se,
                )),
            )
            .oracle(cov_oracle, "quadrature")
            .provenance("mc"),
    );
    Ok(t)
}

fn cmd_decorrelation(a: &DecorrelationArgs) -> Result<Table> {
    let m = &a.mc;
    let thetas: Vec<f64> = if a.thetas.is_empty() {
        (1..=8).map(|k| 0.5f64.powi(k)).collect()
    } else {
        a.thetas.clone()
    };
    let rows = decorrelation_curve(&m.law, m.n as usize, m.alpha, &thetas, m.reps, m.seed)?;
    let single2 = if m.law.is_gaussian() {
        Some(single_tail(m.n, m.alpha)?.powi(2))
    } else {
        None
    };
    let mut t = Table::default();
    for r in &rows {
        let se = r.mc.covariance_se;
        t.push(
            mc_params("covariance", m)
                .param("theta", num(r.theta))
                .param("abs_d", num(r.abs_d))
                .param("ratio_mc", num(r.mc_ratio))
                .param("ratio_oracle", r.oracle_ratio.map(num).unwrap_or(Value::Null))
                .values(
                    r.mc.covariance,
                    Some(se),
                    Some((r.mc.covariance - 1.96 * se, r.mc.covariance + 1.96 * se)),
                )
                .oracle(r.oracle_joint.zip(single2).map(|(j, s)| j - s), "quadrature")
                .provenance("mc"),
        );
    }
    if let Some(max) = rows.iter().filter_map(|r| r.oracle_ratio).reduce(f64::max) {
        t.push(
            mc_params("max_ratio", m)
                .param("theta", Value::Null)
                .param("abs_d", Value::Null)
                .param("ratio_mc", Value::Null)
                .param("ratio_oracle", Value::Null)
                .values(max, None, None)
                .provenance("quadrature"),
        );
    }
    Ok(t)
}

fn cmd_smoothed(a: &SmoothedArgs) -> Result<Table> {
    let m = &a.mc;
    let spec = PlateauSpec::new(a.m, a.eps)?;
    let e = mc_smoothed(&m.law, m.n as usize, m.alpha, spec, m.reps, m.seed)?;
    let oracle = smoothed_expectation(&RadialFn::Plateau(spec), m.n, m.alpha)?.value;
    let mut t = Table::default();
    t.push(
        mc_params("smoothed", m)
            .param("m", num(a.m))
            .param("eps", num(a.eps))
            .estimate(&e)
            .oracle(Some(oracle), "quadrature")
            .provenance("mc"),
    );
    Ok(t)
}

fn cmd_bounds(a: &BoundsArgs) -> Result<Table> {
    let mut t = Table::default();
    match a.kind {
        BoundKind::Directional => {
            let p = match (a.dn, a.kn) {
                (None, None) => DirectionalParams::with_defaults(a.n, a.alpha, a.m)?,
                _ => {
                    let d = DirectionalParams::with_defaults(a.n, a.alpha, a.m)?;
                    DirectionalParams::new(a.n, a.alpha, a.m, a.dn.unwrap_or(d.d_n), a.kn.unwrap_or(d.k_n))?
                }
            };
            let b = directional_bound(p, TruncationConstants::for_law(&a.law))?;
            let row = |q: &str| {
                RowBuilder::new(q)
                    .param("law", a.law.to_string())
                    .param("n", a.n)
                    .param("alpha", num(a.alpha))
                    .param("m", num(a.m))
                    .param("d_n", p.d_n)
                    .param("k_n", num(p.k_n))
                    .param("psi", num(p.psi))
            };
            t.push(
                row("bernstein_term")
                    .values(b.bernstein_term, None, None)
                    .provenance("exact"),
            );
            t.push(
                row("truncation_term")
                    .values(b.truncation_term, None, None)
                    .provenance("exact"),
            );
            t.push(row("directional_bound").values(b.total, None, None).provenance("exact"));
        }
        BoundKind::Bernstein => {
            let need =
                |v: Option<f64>, name: &str| v.ok_or_else(|| Error::Config(format!("--kind bernstein needs --{name}")));
            let p = BernsteinParams::new(
                need(a.variance_sum, "variance-sum")?,
                need(a.m_bound, "m-bound")?,
                need(a.t, "t")?,
            )?;
            t.push(
                RowBuilder::new("bernstein_bound")
                    .param("variance_sum", num(p.variance_sum))
                    .param("m_bound", num(p.m_bound))
                    .param("t", num(p.t))
                    .values(bernstein_bound(&p), None, None)
                    .provenance("exact"),
            );
        }
        BoundKind::Taylor => {
            let eps = a.eps.unwrap_or_else(|| (a.n as f64).powf(-1.5));
            let b = taylor_tail_bound(a.n, a.order, eps, a.eta, a.alpha)?;
            let row = |q: &str| {
                RowBuilder::new(q)
                    .param("n", a.n)
                    .param("order", a.order)
                    .param("eps", num(eps))
                    .param("eta", num(a.eta))
                    .param("alpha", num(a.alpha))
            };
            for (j, v) in b.terms.iter().enumerate() {
                t.push(
                    row(&format!("taylor_term_{}", j + 1))
                        .values(*v, None, None)
                        .provenance("exact"),
                );
            }
            t.push(
                row("taylor_remainder")
                    .values(b.remainder, None, None)
                    .provenance("exact"),
            );
            t.push(row("taylor_bound").values(b.total, None, None).provenance("exact"));
        }
    }
    Ok(t)
}

fn cmd_angular(a: &AngularArgs) -> Result<Table> {
    let m = &a.mc;
    let eps = a.eps.unwrap_or_else(|| (m.n as f64).powf(-(1.0 + a.beta)));
    let w = WindowSpec::new(m.n, eps, a.eta, a.beta, a.k)?;
    let e = mc_angular_exceedance(&m.law, w, m.alpha, m.reps, m.seed)?;
    let bound = if m.law.is_gaussian() {
        match taylor_tail_bound(m.n, a.order, eps, a.eta, m.alpha) {
            Ok(b) => Some(b.total),
            Err(Error::Regime(_)) => None,
            Err(e) => return Err(e),
        }
    } else {
        None
    };
    let row = |q: &str, corrected: bool| {
        mc_params(q, m)
            .param("eps", num(eps))
            .param("eta", num(a.eta))
            .param("K", a.k)
            .param("corrected_sup", corrected)
            .param("out_of_regime", w.out_of_regime())
    };
    let mut t = Table::default();
    t.push(
        row("grid_exceedance", false)
            .estimate(&e.grid)
            .oracle(bound, "bound")
            .provenance("mc"),
    );
    t.push(
        row("corrected_exceedance", true)
            .estimate(&e.corrected)
            .oracle(bound, "bound")
            .provenance("mc"),
    );
    Ok(t)
}

fn cmd_timegap(a: &TimegapArgs) -> Result<Table> {
    let mut t = Table::default();
    if let (Some(n1), Some(n2), Some(level)) = (a.n1, a.n2, a.t) {
        let e = mc_time_increment(&a.law, n1, n2, level, a.reps, a.seed)?;
        let oracle = a
            .law
            .is_gaussian()
            .then(|| gaussian_modulus_tail((n2 - n1) as f64, level));
        t.push(
            RowBuilder::new("time_increment")
                .param("law", a.law.to_string())
                .param("n1", n1)
                .param("n2", n2)
                .param("t", num(level))
                .param("reps", a.reps)
                .param("seed", a.seed)
                .estimate(&e)
                .oracle(oracle, "exact")
                .provenance("mc"),
        );
        return Ok(t);
    }
    let q =
        a.q.ok_or_else(|| Error::Config("timegap needs --q and --level (or --n1, --n2, --t)".into()))?;
    let level = a.level.ok_or_else(|| Error::Config("timegap needs --level".into()))?;
    let e = mc_time_gap_exceedance(&a.law, q, level, a.eta, a.alpha, a.k, a.reps, a.seed)?;
    let row = |name: &str| {
        RowBuilder::new(name)
            .param("law", a.law.to_string())
            .param("q", num(q))
            .param("level", level)
            .param("t0", e.t0)
            .param("t1", e.t1)
            .param("eta", num(a.eta))
            .param("alpha", num(a.alpha))
            .param("K", a.k)
            .param("stride", e.stride)
            .param("subsampled", e.subsampled)
            .param("reps", a.reps)
            .param("seed", a.seed)
    };
    t.push(row("combined").estimate(&e.combined).provenance("mc"));
    t.push(row("angular").estimate(&e.angular).provenance("mc"));
    t.push(row("time").estimate(&e.time).provenance("mc"));
    Ok(t)
}

fn cmd_tree(a: &TreeArgs, format: Option<Format>) -> Result<Output> {
    let tree = build_tree(&a.shape.law, a.shape.config()?, SeedSpec::new(a.seed, a.replica))?;
    Ok(match format {
        Some(Format::Json) => Output::Text(serde_json::to_string(&tree)? + "\n"),
        _ => {
            let mut buf = Vec::new();
            tree.write_dump(&mut buf)?;
            Output::Text(String::from_utf8(buf).expect("dump is ASCII"))
        }
    })
}

fn first_marked_level(q: f64) -> u32 {
    (0..64).find(|&n| floor_pow(q, n) >= 2).unwrap_or(64)
}

fn cmd_dimension(a: &DimensionArgs) -> Result<Table> {
    let s = &a.shape;
    let cfg = s.config()?;
    let trees = build_forest(&s.law, cfg, a.seed, a.trees)?;
    let first = first_marked_level(s.q);
    let lo = a
        .min_level
        .unwrap_or(if s.depth >= first + 4 { first.max(4) } else { first });
    if lo > s.depth {
        return Err(Error::Config(format!("min level {lo} exceeds depth {}", s.depth)));
    }
    let gaussian_indicator = s.law.is_gaussian() && matches!(cfg.mark_kind, MarkKind::Indicator);
    let row = |q: &str| {
        RowBuilder::new(q)
            .param("law", s.law.to_string())
            .param("q", num(s.q))
            .param("alpha", num(s.alpha))
            .param("trees", a.trees)
            .param("seed", a.seed)
    };
    let mut t = Table::default();
    let mut means = Vec::new();
    for level in lo..=s.depth {
        let st = moment_stats(&trees, level)?;
        let time = floor_pow(s.q, level);
        let oracle = gaussian_indicator.then(|| (level as f64).exp2() * (time as f64).powf(-s.alpha));
        t.push(
            row("mean_count")
                .param("level", level)
                .param("p_hat", num(st.p_hat))
                .param("m_hat", num(st.m_hat))
                .param("var_ratio", st.var_ratio.map(num).unwrap_or(Value::Null))
                .values(
                    st.mean_count,
                    Some(st.count_se),
                    Some((st.mean_count - 1.96 * st.count_se, st.mean_count + 1.96 * st.count_se)),
                )
                .oracle(oracle, "exact")
                .provenance("mc"),
        );
        means.push(crate::tree::LevelMean {
            level,
            mean: st.mean_count,
            stderr: st.count_se,
        });
    }
    let fit = dimension_slope(&means)?;
    let slope_oracle = gaussian_indicator.then(|| (1.0 - s.alpha * s.q.log2()).max(0.0));
    t.push(
        row("slope")
            .param("level", Value::Null)
            .param("p_hat", Value::Null)
            .param("m_hat", Value::Null)
            .param("var_ratio", Value::Null)
            .values(
                fit.slope,
                Some(fit.stderr),
                Some((fit.slope - 1.96 * fit.stderr, fit.slope + 1.96 * fit.stderr)),
            )
            .oracle(slope_oracle, "exact")
            .provenance("mc"),
    );
    Ok(t)
}

fn parse_schedules(s: &str) -> Result<Vec<Vec<u32>>> {
    s.split(';')
        .filter(|c| !c.trim().is_empty())
        .map(|c| {
            c.split(',')
                .map(|x| {
                    x.trim()
                        .parse::<u32>()
                        .map_err(|_| Error::Config(format!("bad level `{x}` in schedule `{c}`")))
                })
                .collect()
        })
        .collect()
}

fn cmd_frostman(a: &FrostmanArgs) -> Result<Table> {
    let s = &a.shape;
    let candidates = parse_schedules(&a.schedules)?;
    if candidates.is_empty() {
        return Err(Error::Config("no level schedules given".into()));
    }
    let trees = build_forest(&s.law, s.config()?, a.seed, a.trees)?;
    let mut t = Table::default();
    let mut wrote_measure = false;
    for (i, tree) in trees.iter().enumerate() {
        let row = |q: &str, schedule: &str| {
            RowBuilder::new(q)
                .param("tree", i)
                .param("schedule", schedule.to_string())
                .param("gamma", num(a.gamma))
        };
        let Some((schedule, measure)) = find_feasible_schedule(tree, &candidates) else {
            t.push(
                row("infeasible", "")
                    .param("depth", Value::Null)
                    .values(f64::NAN, None, None)
                    .provenance("mc"),
            );
            continue;
        };
        let label = schedule.iter().map(u32::to_string).collect::<Vec<_>>().join(",");
        if let (Some(path), false) = (&a.measure_out, wrote_measure) {
            measure.write_csv(std::io::BufWriter::new(fs::File::create(path)?))?;
            wrote_measure = true;
        }
        t.push(
            row("additivity_error", &label)
                .param("depth", Value::Null)
                .values(measure.additivity_error(), None, None)
                .provenance("mc"),
        );
        for &d in &a.energy_depths {
            let e = gamma_energy(&measure, a.gamma, d)?;
            t.push(
                row("energy", &label)
                    .param("depth", d)
                    .values(e.value, None, None)
                    .provenance("mc"),
            );
        }
    }
    Ok(t)
}

fn cmd_oracle(a: &OracleArgs, format: Option<Format>) -> Result<Output> {
    let r = oracle_record(a.n, a.theta, a.alpha)?;
    if format != Some(Format::Csv) {
        return Ok(Output::Text(serde_json::to_string_pretty(&r)? + "\n"));
    }
    let mut t = Table::default();
    let row = |q: &str| {
        RowBuilder::new(q)
            .param("n", a.n)
            .param("theta", num(r.theta))
            .param("alpha", num(a.alpha))
    };
    t.push(row("D_re").values(r.D_re, None, None).provenance("exact"));
    t.push(row("D_im").values(r.D_im, None, None).provenance("exact"));
    t.push(row("single").values(r.single, None, None).provenance("exact"));
    t.push(
        row("joint")
            .values(r.joint, Some(r.joint_err), None)
            .provenance("quadrature"),
    );
    t.push(row("env_lo").values(r.env_lo, None, None).provenance("exact"));
    t.push(row("env_hi").values(r.env_hi, None, None).provenance("exact"));
    Ok(Output::Table(t))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_capture(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run_with(args.iter().copied(), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn unknown_flag_is_a_usage_error() {
        let (code, _, err) = run_capture(&["rotwalk", "tail", "--bogus", "1"]);
        assert_eq!(code, 2);
        assert!(err.contains("--bogus"));
    }

    #[test]
    fn randomized_commands_need_a_seed() {
        let (code, _, _) = run_capture(&["rotwalk", "tail", "--n", "10", "--alpha", "1", "--reps", "1000"]);
        assert_eq!(code, 2);
    }

    #[test]
    fn numeric_errors_exit_3() {
        let (code, _, _) = run_capture(&["rotwalk", "oracle", "--n", "100", "--theta", "0", "--alpha", "0.5"]);
        assert_eq!(code, 3);
        let (code, _, _) = run_capture(&["rotwalk", "oracle", "--n", "100", "--theta", "0.1", "--alpha", "-1"]);
        assert_eq!(code, 2);
    }

    #[test]
    fn help_exits_zero() {
        let (code, out, _) = run_capture(&["rotwalk", "--help"]);
        assert_eq!(code, 0);
        assert!(out.contains("decorrelation"));
    }

    #[test]
    fn bernstein_row() {
        let (code, out, _) = run_capture(&[
            "rotwalk",
            "bounds",
            "--kind",
            "bernstein",
            "--variance-sum",
            "100",
            "--m-bound",
            "1",
            "--t",
            "30",
        ]);
        assert_eq!(code, 0);
        let mut lines = out.lines();
        assert_eq!(
            lines.next().unwrap(),
            "quantity,variance_sum,m_bound,t,estimate,stderr,ci_lo,ci_hi,oracle,oracle_kind,provenance"
        );
        assert!(lines
            .next()
            .unwrap()
            .starts_with("bernstein_bound,100.0,1.0,30.0,0.0167240229884"));
    }

    #[test]
    fn schedules_parse() {
        assert_eq!(parse_schedules("0,4;1, 12").unwrap(), vec![vec![0, 4], vec![1, 12]]);
        assert!(parse_schedules("0,x").is_err());
    }
}
