//! Command-line front end: argument parsing, command dispatch and CSV/JSON
//! output. `main.rs` only maps the outcome to an exit code.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, Write};
use std::path::PathBuf;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Map, Value};

use branchlab::analysis::{analyze, analyze_limit, CoefficientReport, LimitRatios};
use branchlab::cost::{q_finite, q_limit, t_star_finite, tau_star};
use branchlab::experiment::{
    qplot, run_simulation, sweep_skew, sweep_sym, table_rows, tau_star_curve, xi_critical_rows, ExperimentConfig,
    SimulationReport,
};
use branchlab::par::{self, Execution};
use branchlab::rng::PRNG_NAME;
use branchlab::verify::{gate_simulation, run_fast_gates, GateResult};
use branchlab::{ResetPolicy, SamplingParam, Scheme, SiteId};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] branchlab::Error),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{failed} verification check(s) failed: {}", names.join(", "))]
    Verification { failed: usize, names: Vec<String> },
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Core(branchlab::Error::Parameter(_)) => "parameter",
            CliError::Core(branchlab::Error::Domain(_)) => "domain",
            CliError::Core(_) => "numeric",
            CliError::Io(_) => "io",
            CliError::Csv(_) | CliError::Json(_) => "output",
            CliError::Verification { .. } => "verification",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Verification { .. } => EXIT_VERIFY_FAILED,
            _ => EXIT_USAGE,
        }
    }

    /// Machine-readable form written to stderr.
    pub fn to_json(&self) -> Value {
        let mut err = json!({ "kind": self.kind(), "message": self.to_string() });
        if let CliError::Verification { names, .. } = self {
            err["failed"] = json!(names);
        }
        json!({ "error": err })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Default)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Parser)]
#[command(name = "branchlab", version, about = "Branch misses of classic and dual-pivot Quicksort")]
pub struct Cli {
    /// Output format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Write to this file instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Omit the timestamp from JSON metadata.
    #[arg(long, global = true)]
    pub deterministic: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Leading coefficient for a finite sampling parameter.
    Analyze(AnalyzeArgs),
    /// Leading coefficient in the limit of large samples.
    AnalyzeLimit(AnalyzeLimitArgs),
    /// The 30-cell coefficient table.
    Table,
    /// Sort random permutations and count branch misses.
    Simulate(SimulateArgs),
    /// Coefficients for symmetric sampling of growing size.
    SweepSym(SweepArgs),
    /// Coefficients for extremely skewed sampling of growing size.
    SweepSkew(SweepArgs),
    /// Combined cost q_xi((tau, 1 - tau)) over tau.
    Qplot(QplotArgs),
    /// Optimal pivot position tau* as a function of xi.
    TauStar(TauStarArgs),
    /// Threshold xi above which the median stops being optimal.
    XiC(SchemeOnly),
    /// Optimal classic sampling parameter for a fixed sample size.
    OptT(OptTArgs),
    /// Check closed forms against the numerical oracles.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
pub struct SchemeOnly {
    /// 1bit, 2bit-sc, 2bit-fc or all.
    #[arg(long, default_value = "all", value_parser = parse_schemes)]
    pub scheme: Schemes,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Sampling parameter, e.g. "2,2" (classic) or "1,1,1" (dual-pivot).
    #[arg(long, value_parser = parse_t)]
    pub t: SamplingParam,
    #[arg(long, default_value = "all", value_parser = parse_schemes)]
    pub scheme: Schemes,
}

#[derive(Debug, Args)]
pub struct AnalyzeLimitArgs {
    /// Limit ratios summing to 1, e.g. "0.1,0.9" or "1/3,1/3,1/3".
    #[arg(long, value_parser = parse_tau)]
    pub tau: LimitRatios,
    #[arg(long, default_value = "all", value_parser = parse_schemes)]
    pub scheme: Schemes,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_parser = parse_t)]
    pub t: SamplingParam,
    /// A single scheme.
    #[arg(long, value_parser = parse_scheme)]
    pub scheme: Scheme,
    /// Comma-separated input sizes; scientific notation allowed.
    #[arg(long, default_value = "1e6", value_parser = parse_sizes)]
    pub sizes: Sizes,
    #[arg(long, default_value_t = 50)]
    pub trials: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// persistent or per-partition.
    #[arg(long, default_value = "persistent", value_parser = parse_policy)]
    pub policy: ResetPolicy,
    /// Insertionsort cutoff; defaults to max(k, 16).
    #[arg(long)]
    pub w: Option<usize>,
    /// parallel or sequential.
    #[arg(long, default_value = "parallel", value_parser = parse_execution)]
    pub execution: Execution,
    /// Emit one row per trial instead of one per size.
    #[arg(long)]
    pub per_trial: bool,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long, default_value_t = 10)]
    pub t_max: u32,
    #[arg(long, default_value = "all", value_parser = parse_schemes)]
    pub scheme: Schemes,
}

#[derive(Debug, Args)]
pub struct QplotArgs {
    /// Comma-separated relative branch-miss costs.
    #[arg(long, default_value = "0,5,10,20,30,50,73,100", value_parser = parse_floats)]
    pub xi: Floats,
    /// Grid resolution in tau.
    #[arg(long, default_value_t = 100)]
    pub steps: usize,
    #[arg(long, default_value = "all", value_parser = parse_schemes)]
    pub scheme: Schemes,
}

#[derive(Debug, Args)]
pub struct TauStarArgs {
    #[arg(long, default_value_t = 100.0)]
    pub xi_max: f64,
    #[arg(long, default_value_t = 1.0)]
    pub step: f64,
    #[arg(long, default_value = "all", value_parser = parse_schemes)]
    pub scheme: Schemes,
}

#[derive(Debug, Args)]
pub struct OptTArgs {
    #[arg(long, value_parser = parse_floats)]
    pub xi: Floats,
    /// Sample size.
    #[arg(long)]
    pub k: usize,
    #[arg(long, default_value = "all", value_parser = parse_schemes)]
    pub scheme: Schemes,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Also run the sorting simulations (minutes).
    #[arg(long)]
    pub simulate: bool,
    /// Samples per Monte Carlo check.
    #[arg(long, default_value_t = 1_000_000)]
    pub mc_samples: u64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value = "1e4,1e5,1e6", value_parser = parse_sizes)]
    pub sizes: Sizes,
    #[arg(long, default_value_t = 50)]
    pub trials: usize,
    #[arg(long, default_value = "persistent", value_parser = parse_policy)]
    pub policy: ResetPolicy,
    /// Relative tolerance of the simulation checks.
    #[arg(long, default_value_t = 0.05)]
    pub tol: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Schemes(pub Vec<Scheme>);

#[derive(Debug, Clone, PartialEq)]
pub struct Sizes(pub Vec<usize>);

#[derive(Debug, Clone, PartialEq)]
pub struct Floats(pub Vec<f64>);

fn parse_scheme(s: &str) -> Result<Scheme, String> {
    s.parse().map_err(|e: branchlab::Error| e.to_string())
}

fn parse_schemes(s: &str) -> Result<Schemes, String> {
    if s.eq_ignore_ascii_case("all") {
        return Ok(Schemes(Scheme::ALL.to_vec()));
    }
    s.split(',').map(|x| parse_scheme(x.trim())).collect::<Result<_, _>>().map(Schemes)
}

fn parse_t(s: &str) -> Result<SamplingParam, String> {
    s.parse().map_err(|e: branchlab::Error| e.to_string())
}

fn parse_tau(s: &str) -> Result<LimitRatios, String> {
    s.parse().map_err(|e: branchlab::Error| e.to_string())
}

fn parse_policy(s: &str) -> Result<ResetPolicy, String> {
    s.parse().map_err(|e: branchlab::Error| e.to_string())
}

fn parse_execution(s: &str) -> Result<Execution, String> {
    s.parse().map_err(|e: branchlab::Error| e.to_string())
}

fn parse_floats(s: &str) -> Result<Floats, String> {
    s.split(',')
        .map(|x| {
            let v: f64 = x.trim().parse().map_err(|_| format!("not a number: '{x}'"))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(format!("not finite: '{x}'"))
            }
        })
        .collect::<Result<_, _>>()
        .map(Floats)
}

fn parse_sizes(s: &str) -> Result<Sizes, String> {
    s.split(',')
        .map(|x| {
            let x = x.trim();
            if let Ok(n) = x.parse::<usize>() {
                return Ok(n);
            }
            let v: f64 = x.parse().map_err(|_| format!("not a size: '{x}'"))?;
            if v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
                Ok(v as usize)
            } else {
                Err(format!("not a whole size: '{x}'"))
            }
        })
        .collect::<Result<_, _>>()
        .map(Sizes)
}

/// Result of a command: rows plus optional extra JSON fields.
struct Emission {
    rows: Vec<Value>,
    extra: Map<String, Value>,
    seed: Option<u64>,
    /// Names of failed checks (`verify` only).
    failed: Vec<String>,
}

impl Emission {
    fn rows<R: Serialize>(rows: &[R]) -> Result<Self, CliError> {
        Ok(Emission {
            rows: rows.iter().map(serde_json::to_value).collect::<Result<_, _>>()?,
            extra: Map::new(),
            seed: None,
            failed: Vec::new(),
        })
    }
}

#[derive(Serialize)]
struct AnalyzeRow {
    algorithm: String,
    scheme: Scheme,
    params: String,
    a: f64,
    entropy: f64,
    coefficient: f64,
    y1: Option<f64>,
    y2: Option<f64>,
    y3: Option<f64>,
    y4: Option<f64>,
}

impl From<&CoefficientReport> for AnalyzeRow {
    fn from(r: &CoefficientReport) -> Self {
        let site = |s| r.sites.and_then(|x| x.get(s));
        AnalyzeRow {
            algorithm: r.algorithm.to_string(),
            scheme: r.scheme,
            params: r.params.to_string(),
            a: r.a,
            entropy: r.entropy,
            coefficient: r.coefficient,
            y1: site(SiteId::Y1),
            y2: site(SiteId::Y2),
            y3: site(SiteId::Y3),
            y4: site(SiteId::Y4),
        }
    }
}

#[derive(Serialize)]
struct SizeRow {
    n: usize,
    trials: usize,
    mean_branch_misses: f64,
    bm_coefficient: f64,
    bm_std_error: f64,
    analytic: f64,
    relative_deviation: f64,
    c1: f64,
    c2: f64,
    y1: f64,
    y2: f64,
    y3: f64,
    y4: f64,
    comparison_coefficient: f64,
}

#[derive(Serialize)]
struct TrialRow {
    n: usize,
    trial: usize,
    seed: u64,
    branch_misses: u64,
    c1: u64,
    c2: u64,
    y1: u64,
    y2: u64,
    y3: u64,
    y4: u64,
    comparisons: u64,
    swaps: u64,
    partitioning_calls: u64,
}

#[derive(Serialize)]
struct XiRow {
    scheme: Scheme,
    closed_form: f64,
    numeric: f64,
    abs_diff: f64,
}

#[derive(Serialize)]
struct OptTRow {
    xi: f64,
    scheme: Scheme,
    k: usize,
    t: String,
    q: f64,
    tau_star: f64,
    q_limit: f64,
}

fn simulate(args: &SimulateArgs) -> Result<Emission, CliError> {
    let mut cfg = ExperimentConfig::new(args.t, args.scheme, args.sizes.0.clone(), args.trials, args.seed);
    cfg.policy = args.policy;
    cfg.execution = args.execution;
    if let Some(w) = args.w {
        cfg.w = w;
    }
    let rep = run_simulation(&cfg)?;
    let mut out = if args.per_trial {
        let rows: Vec<TrialRow> = rep
            .trials
            .iter()
            .map(|t| TrialRow {
                n: t.n,
                trial: t.trial,
                seed: t.seed,
                branch_misses: t.branch_misses,
                c1: t.site_misses[0],
                c2: t.site_misses[1],
                y1: t.site_misses[2],
                y2: t.site_misses[3],
                y3: t.site_misses[4],
                y4: t.site_misses[5],
                comparisons: t.comparisons,
                swaps: t.swaps,
                partitioning_calls: t.partitioning_calls,
            })
            .collect();
        Emission::rows(&rows)?
    } else {
        Emission::rows(&size_rows(&rep))?
    };
    out.seed = Some(args.seed);
    out.extra.insert("config".into(), serde_json::to_value(&rep.config)?);
    out.extra.insert("analytic".into(), serde_json::to_value(&rep.analytic)?);
    out.extra.insert("measured".into(), json!(rep.measured));
    out.extra.insert("relative_deviation".into(), json!(rep.relative_deviation));
    out.extra.insert("fitted".into(), json!(rep.fitted));
    out.extra.insert("fitted_deviation".into(), json!(rep.fitted_deviation));
    Ok(out)
}

fn size_rows(rep: &SimulationReport) -> Vec<SizeRow> {
    let a = rep.analytic.coefficient;
    rep.sizes
        .iter()
        .map(|s| {
            let c = s.site_coefficients;
            SizeRow {
                n: s.n,
                trials: s.trials,
                mean_branch_misses: s.mean_branch_misses,
                bm_coefficient: s.bm_coefficient,
                bm_std_error: s.bm_std_error,
                analytic: a,
                relative_deviation: (s.bm_coefficient - a).abs() / a,
                c1: c[0],
                c2: c[1],
                y1: c[2],
                y2: c[3],
                y3: c[4],
                y4: c[5],
                comparison_coefficient: s.comparison_coefficient,
            }
        })
        .collect()
}

fn opt_t(args: &OptTArgs) -> Result<Emission, CliError> {
    let mut rows = Vec::new();
    for &xi in &args.xi.0 {
        for &scheme in &args.scheme.0 {
            let t = t_star_finite(xi, scheme, args.k)?;
            let ts = tau_star(xi, scheme)?;
            rows.push(OptTRow {
                xi,
                scheme,
                k: args.k,
                t: t.to_string(),
                q: q_finite(xi, scheme, &t)?,
                tau_star: ts,
                q_limit: q_limit(xi, scheme, &LimitRatios::classic(ts)?)?,
            });
        }
    }
    Emission::rows(&rows)
}

fn verify(args: &VerifyArgs) -> Result<Emission, CliError> {
    let mut gates: Vec<GateResult> = run_fast_gates(args.mc_samples, args.seed)?;
    if args.simulate {
        gates.extend(gate_simulation(&args.sizes.0, args.trials, args.policy, args.tol, args.seed)?);
    }
    let mut out = Emission::rows(&gates)?;
    out.seed = Some(args.seed);
    out.failed = gates.iter().filter(|g| !g.passed).map(|g| g.gate.clone()).collect();
    Ok(out)
}

fn dispatch(command: &Command) -> Result<Emission, CliError> {
    match command {
        Command::Analyze(a) => {
            let rows: Vec<AnalyzeRow> = a
                .scheme
                .0
                .iter()
                .map(|&s| analyze(s, &a.t).map(|r| AnalyzeRow::from(&r)))
                .collect::<Result<_, _>>()?;
            Emission::rows(&rows)
        }
        Command::AnalyzeLimit(a) => {
            let rows: Vec<AnalyzeRow> = a
                .scheme
                .0
                .iter()
                .map(|&s| analyze_limit(s, &a.tau).map(|r| AnalyzeRow::from(&r)))
                .collect::<Result<_, _>>()?;
            Emission::rows(&rows)
        }
        Command::Table => Emission::rows(&table_rows()?),
        Command::Simulate(a) => simulate(a),
        Command::SweepSym(a) => Emission::rows(&sweep_sym(a.t_max, &a.scheme.0)?),
        Command::SweepSkew(a) => Emission::rows(&sweep_skew(a.t_max, &a.scheme.0)?),
        Command::Qplot(a) => Emission::rows(&qplot(&a.xi.0, &a.scheme.0, a.steps)?),
        Command::TauStar(a) => Emission::rows(&tau_star_curve(a.xi_max, a.step, &a.scheme.0)?),
        Command::XiC(a) => {
            let rows: Vec<XiRow> = xi_critical_rows(&a.scheme.0)?
                .into_iter()
                .map(|x| XiRow { scheme: x.scheme, closed_form: x.closed_form, numeric: x.numeric, abs_diff: x.abs_diff() })
                .collect();
            Emission::rows(&rows)
        }
        Command::OptT(a) => opt_t(a),
        Command::Verify(a) => verify(a),
    }
}

fn command_name(command: &Command) -> &'static str {
    match command {
        Command::Analyze(_) => "analyze",
        Command::AnalyzeLimit(_) => "analyze-limit",
        Command::Table => "table",
        Command::Simulate(_) => "simulate",
        Command::SweepSym(_) => "sweep-sym",
        Command::SweepSkew(_) => "sweep-skew",
        Command::Qplot(_) => "qplot",
        Command::TauStar(_) => "tau-star",
        Command::XiC(_) => "xi-c",
        Command::OptT(_) => "opt-t",
        Command::Verify(_) => "verify",
    }
}

/// CSV with a header taken from the first row's keys.
fn write_csv<W: Write>(rows: &[Value], w: W) -> Result<(), CliError> {
    let mut wtr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
    if let Some(Value::Object(first)) = rows.first() {
        wtr.write_record(first.keys())?;
    }
    for row in rows {
        let Value::Object(obj) = row else { continue };
        wtr.write_record(obj.values().map(csv_field))?;
    }
    wtr.flush()?;
    Ok(())
}

fn csv_field(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn render(cli: &Cli, args: &[String], em: &Emission) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    match cli.format {
        Format::Csv => write_csv(&em.rows, &mut buf)?,
        Format::Json => {
            let mut meta = Map::new();
            meta.insert("tool".into(), json!("branchlab"));
            meta.insert("version".into(), json!(env!("CARGO_PKG_VERSION")));
            meta.insert("command".into(), json!(command_name(&cli.command)));
            meta.insert("args".into(), json!(args));
            meta.insert("prng".into(), json!(PRNG_NAME));
            if let Some(seed) = em.seed {
                meta.insert("seed".into(), json!(seed));
            }
            if !cli.deterministic {
                let now = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
                meta.insert("timestamp_unix".into(), json!(now));
            }
            let mut top = Map::new();
            top.insert("metadata".into(), Value::Object(meta));
            for (k, v) in &em.extra {
                top.insert(k.clone(), v.clone());
            }
            top.insert("rows".into(), Value::Array(em.rows.clone()));
            serde_json::to_writer_pretty(&mut buf, &Value::Object(top))?;
            buf.push(b'\n');
        }
    }
    Ok(buf)
}

/// Parses `argv` (including the program name) and runs the command.
///
/// Output goes to `--out` or `stdout`. Help and version requests are
/// printed and reported as success.
pub fn run<I, T>(argv: I, stdout: &mut dyn Write) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            write!(stdout, "{}", e.render())?;
            return Ok(());
        }
        Err(e) => return Err(CliError::Usage(e.render().to_string().trim_end().to_string())),
    };
    par::init_threads_from_env()?;
    let args: Vec<String> = argv.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    let em = dispatch(&cli.command)?;
    let bytes = render(&cli, &args, &em)?;
    match &cli.out {
        Some(path) => File::create(path)?.write_all(&bytes)?,
        None => stdout.write_all(&bytes)?,
    }
    if !em.failed.is_empty() {
        return Err(CliError::Verification { failed: em.failed.len(), names: em.failed });
    }
    Ok(())
}
