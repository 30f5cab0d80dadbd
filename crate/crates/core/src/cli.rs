//! Command-line front end.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 usage error, 3 invalid
//! configuration, 4 every constrained trial infeasible, 5 self-check failure.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::analytics::{watts_to_dbm, LinkBudget};
use crate::config::{load_scenario, LoadError, Scenario};
use crate::selfcheck::run_selfcheck;
use crate::simulation::Scheme;
use crate::simulation::{
    run_trials_multi, summarize, sweep, SimOptions, StatsSummary, SweepParameter, SweepPoint, TrialRecord, TrialStatus,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_INFEASIBLE: i32 = 4;
pub const EXIT_SELFCHECK: i32 = 5;

#[derive(Parser, Debug)]
#[command(name = "wetbeam", version, about = "Energy beamforming simulator for clustered wireless energy transfer")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Monte Carlo run of one scheme.
    Simulate(SimulateArgs),
    /// Repeat a run over values of one parameter.
    Sweep(SweepArgs),
    /// Compare the simulator against closed-form baselines.
    Selfcheck(SelfcheckArgs),
}

#[derive(Args, Debug, Clone)]
pub struct RunArgs {
    /// Scenario TOML, or a manifest.json from an earlier run.
    /// Defaults to the three-cluster operating point.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 10_000)]
    pub trials: u64,
    /// Overrides the scenario's master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads (results do not depend on this).
    #[arg(long)]
    pub parallel: Option<usize>,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long, default_value = "STAT_MULTI")]
    pub scheme: Scheme,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// kappa, antennas, angle, rotation or clusters.
    #[arg(long)]
    pub param: SweepParameter,
    /// `start:stop:step` (inclusive) or a comma-separated list.
    #[arg(long, value_parser = parse_values, allow_hyphen_values = true)]
    pub values: Values,
    /// Comma-separated scheme list.
    #[arg(long, value_delimiter = ',', default_value = "STAT_MULTI")]
    pub scheme: Vec<Scheme>,
}

#[derive(Args, Debug)]
pub struct SelfcheckArgs {
    #[arg(long, default_value_t = 10_000)]
    pub trials: u64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, hide = true, default_value_t = 1.0)]
    pub tolerance_scale: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Values(pub Vec<f64>);

pub fn parse_values(s: &str) -> Result<Values, String> {
    let num = |t: &str| t.trim().parse::<f64>().map_err(|_| format!("not a number: {t:?}"));
    if s.contains(':') {
        let parts: Vec<&str> = s.split(':').collect();
        let [a, b, step] = parts.as_slice() else {
            return Err(format!("range must be start:stop:step, got {s:?}"));
        };
        let (a, b, step) = (num(a)?, num(b)?, num(step)?);
        if step.is_nan() || step <= 0.0 || b < a {
            return Err(format!("range {s:?} needs step > 0 and stop >= start"));
        }
        let count = ((b - a) / step + 1e-9).floor() as usize + 1;
        return Ok(Values((0..count).map(|i| a + step * i as f64).collect()));
    }
    let v = s.split(',').filter(|t| !t.trim().is_empty()).map(num).collect::<Result<Vec<_>, _>>()?;
    if v.is_empty() {
        return Err("no values given".into());
    }
    Ok(Values(v))
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub command: String,
    pub scenario: Scenario,
    pub schemes: Vec<Scheme>,
    pub trials: u64,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub parameter: Option<SweepParameter>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub values: Option<Vec<f64>>,
    pub tool_version: String,
    pub outputs: Vec<String>,
    pub wall_clock_s: f64,
}

struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::new(EXIT_IO, format!("{e:#}"))
    }
}

/// Full-precision float formatting (17 significant digits).
fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn load(run: &RunArgs) -> Result<(Scenario, SimOptions), Failure> {
    let mut scenario = match &run.config {
        Some(path) => load_scenario(path).map_err(|e| match e {
            LoadError::Io { .. } => Failure::new(EXIT_IO, e.to_string()),
            LoadError::Invalid { .. } => Failure::new(EXIT_CONFIG, e.to_string()),
        })?,
        None => Scenario::operating_point(),
    };
    if let Some(seed) = run.seed {
        scenario.system.master_seed = seed;
    }
    if run.trials == 0 {
        return Err(Failure::new(EXIT_USAGE, "--trials must be at least 1"));
    }
    if run.parallel == Some(0) {
        return Err(Failure::new(EXIT_USAGE, "--parallel must be at least 1"));
    }
    scenario.validate().map_err(|e| Failure::new(EXIT_CONFIG, e.to_string()))?;
    let options = SimOptions { threads: run.parallel, solver: scenario.solver.clone() };
    Ok((scenario, options))
}

fn write_file(dir: &Path, name: &str, contents: &str) -> anyhow::Result<String> {
    let path = dir.join(name);
    let mut f = fs::File::create(&path).with_context(|| format!("cannot create {}", path.display()))?;
    f.write_all(contents.as_bytes()).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(path.display().to_string())
}

fn to_csv(header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> anyhow::Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    Ok(String::from_utf8(w.into_inner().context("flushing csv")?)?)
}

fn samples_csv(records: &[TrialRecord], clusters: usize) -> anyhow::Result<String> {
    let mut header: Vec<String> = ["trial", "sum_power_w", "harvested_w"].map(String::from).to_vec();
    header.extend((0..clusters).map(|l| format!("cluster_{l}_w")));
    header.push("status".into());
    let rows = records.iter().map(|r| {
        let mut row = vec![r.trial.to_string(), num(r.sum_power_rf), num(r.sum_power_harvested)];
        row.extend(r.per_cluster_rf.iter().map(|&p| num(p)));
        row.push(
            match r.status {
                TrialStatus::Ok => "ok",
                TrialStatus::Infeasible => "infeasible",
                TrialStatus::MaxIterations => "max_iterations",
            }
            .into(),
        );
        row
    });
    to_csv(&header, rows)
}

#[derive(Serialize)]
struct SummaryFile<'a> {
    scheme: Scheme,
    trials: u64,
    #[serde(flatten)]
    summary: &'a StatsSummary,
    mean_dbm: f64,
    /// Precoding gain implied by the mean sum power.
    implied_gain_db: f64,
}

fn simulate(args: &SimulateArgs) -> Result<String, Failure> {
    let started = Instant::now();
    let (scenario, options) = load(&args.run)?;
    let records = run_trials_multi(&scenario.system, &scenario.eh_circuit, &[args.scheme], args.run.trials, &options)
        .map_err(|e| Failure::new(EXIT_CONFIG, e.to_string()))?
        .remove(0);
    if records.iter().all(|r| r.status == TrialStatus::Infeasible) {
        return Err(Failure::new(EXIT_INFEASIBLE, format!("all {} trials were infeasible", records.len())));
    }
    let summary = summarize(&records).map_err(|e| Failure::new(EXIT_CONFIG, e.to_string()))?;
    let system = &scenario.system;
    let beta_db = system.clusters.iter().map(|c| c.pathloss_db).sum::<f64>() / system.clusters.len() as f64;
    let mean_dbm = watts_to_dbm(summary.mean);
    let budget = LinkBudget::implied_gain(mean_dbm, watts_to_dbm(system.tx_power_w), system.antenna_gain_db, beta_db);

    let dir = &args.run.out;
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let mut outputs = vec![write_file(dir, "samples.csv", &samples_csv(&records, system.clusters.len())?)?];
    let file = SummaryFile {
        scheme: args.scheme,
        trials: args.run.trials,
        summary: &summary,
        mean_dbm,
        implied_gain_db: budget.gp_db,
    };
    outputs.push(write_file(dir, "summary.json", &(serde_json::to_string_pretty(&file).context("summary")? + "\n"))?);
    outputs.push(dir.join("manifest.json").display().to_string());
    let manifest = RunManifest {
        command: "simulate".into(),
        scenario: scenario.clone(),
        schemes: vec![args.scheme],
        trials: args.run.trials,
        seed: system.master_seed,
        parameter: None,
        values: None,
        tool_version: env!("CARGO_PKG_VERSION").into(),
        outputs,
        wall_clock_s: started.elapsed().as_secs_f64(),
    };
    write_file(dir, "manifest.json", &(serde_json::to_string_pretty(&manifest).context("manifest")? + "\n"))?;
    Ok(format!(
        "{}: mean {:.6e} W ({:.2} dBm), variance {:.6e} W², {} trials kept, {} infeasible, implied gain {:.2} dB\n",
        args.scheme, summary.mean, mean_dbm, summary.variance, summary.count, summary.infeasible, budget.gp_db
    ))
}

fn sweep_csv(points: &[SweepPoint]) -> anyhow::Result<String> {
    let header = ["value", "scheme", "mean_w", "variance_w2", "count", "infeasible", "cluster_angles_deg", "error"]
        .map(String::from);
    let rows = points.iter().map(|p| {
        let angles: Vec<String> = p.cluster_angles_deg.iter().map(|a| a.to_string()).collect();
        let (mean, var, count, infeasible) = match &p.summary {
            Some(x) => (num(x.mean), num(x.variance), x.count.to_string(), x.infeasible.to_string()),
            None => Default::default(),
        };
        vec![
            num(p.value),
            p.scheme.to_string(),
            mean,
            var,
            count,
            infeasible,
            angles.join(";"),
            p.error.clone().unwrap_or_default(),
        ]
    });
    to_csv(&header, rows)
}

fn sweep_long_csv(parameter: SweepParameter, points: &[SweepPoint]) -> anyhow::Result<String> {
    let header = ["parameter", "value", "scheme", "metric", "cluster", "estimate"].map(String::from);
    let mut rows = Vec::new();
    for p in points {
        let Some(x) = &p.summary else { continue };
        let row = |metric: &str, cluster: String, est: f64| {
            vec![parameter.to_string(), num(p.value), p.scheme.to_string(), metric.to_string(), cluster, num(est)]
        };
        for (metric, est) in [("mean_w", x.mean), ("variance_w2", x.variance), ("harvested_mean_w", x.harvested_mean)] {
            rows.push(row(metric, String::new(), est));
        }
        for (l, m) in x.per_cluster.iter().enumerate() {
            rows.push(row("cluster_mean_w", l.to_string(), m.mean));
        }
    }
    to_csv(&header, rows)
}

fn run_sweep(args: &SweepArgs) -> Result<String, Failure> {
    let started = Instant::now();
    let (scenario, options) = load(&args.run)?;
    if args.scheme.is_empty() {
        return Err(Failure::new(EXIT_USAGE, "at least one scheme is required"));
    }
    let points = sweep(
        &scenario.system,
        &scenario.eh_circuit,
        &args.scheme,
        args.param,
        &args.values.0,
        args.run.trials,
        &options,
    );
    let dir = &args.run.out;
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let mut outputs = vec![
        write_file(dir, "sweep.csv", &sweep_csv(&points)?)?,
        write_file(dir, "sweep_long.csv", &sweep_long_csv(args.param, &points)?)?,
    ];
    outputs.push(dir.join("manifest.json").display().to_string());
    let manifest = RunManifest {
        command: "sweep".into(),
        scenario: scenario.clone(),
        schemes: args.scheme.clone(),
        trials: args.run.trials,
        seed: scenario.system.master_seed,
        parameter: Some(args.param),
        values: Some(args.values.0.clone()),
        tool_version: env!("CARGO_PKG_VERSION").into(),
        outputs,
        wall_clock_s: started.elapsed().as_secs_f64(),
    };
    write_file(dir, "manifest.json", &(serde_json::to_string_pretty(&manifest).context("manifest")? + "\n"))?;

    let mut report = String::new();
    for p in &points {
        match (&p.summary, &p.error) {
            (Some(x), _) => {
                let _ = writeln!(report, "{}={} {}: mean {:.6e} W", args.param, p.value, p.scheme, x.mean);
            }
            (None, Some(e)) => {
                let _ = writeln!(report, "{}={} {}: error: {e}", args.param, p.value, p.scheme);
            }
            (None, None) => {}
        }
    }
    if points.iter().all(|p| p.summary.is_none()) {
        let code = if points.iter().all(|p| p.error.as_deref().is_some_and(|e| e.contains("infeasible"))) {
            EXIT_INFEASIBLE
        } else {
            EXIT_CONFIG
        };
        return Err(Failure::new(code, format!("every sweep value failed\n{report}")));
    }
    Ok(report)
}

fn selfcheck(args: &SelfcheckArgs) -> Result<String, Failure> {
    let results = run_selfcheck(args.trials, args.seed, args.tolerance_scale)
        .map_err(|e| Failure::new(EXIT_SELFCHECK, e.to_string()))?;
    let mut report = String::new();
    for r in &results {
        let _ = writeln!(report, "{} {} ({})", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
    }
    let failed: Vec<&str> = results.iter().filter(|r| !r.passed).map(|r| r.name.as_str()).collect();
    if failed.is_empty() {
        let _ = writeln!(report, "all {} checks passed", results.len());
        Ok(report)
    } else {
        Err(Failure::new(EXIT_SELFCHECK, format!("{report}failed checks: {}", failed.join(", "))))
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code. Reports go to stdout, errors to stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Sweep(a) => run_sweep(a),
        Command::Selfcheck(a) => selfcheck(a),
    };
    match result {
        Ok(report) => {
            print!("{report}");
            EXIT_OK
        }
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}
