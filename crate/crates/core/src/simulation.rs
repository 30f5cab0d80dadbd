//! Monte Carlo harness: per-trial channel draws, scheme evaluation, the
//! energy-harvesting circuit, summaries and parameter sweeps.
//!
//! Each trial owns two random streams derived from `(master_seed, trial)`:
//! one for the channel (statistics, then fading) and one for the constrained
//! solver's random starts. Every scheme evaluated in the same call sees the
//! same channel draws.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{
    draw_statistics, realize_system, trial_rng, ClusterConfig, ClusterStatistics, Stream, SystemConfig,
};
use crate::constrained::{solve_constrained, ConstrainedProblem, SolveStatus, SolverOptions};
use crate::error::{Error, Result};
use crate::linalg::CVector;
use crate::precoding::{
    build_stat_matrix, expected_powers, precoder_aa, precoder_full_csit, precoder_mp, precoder_stat, received_powers,
    BeamScheme,
};

/// Piecewise-linear harvester: dead below the sensitivity, linear with
/// efficiency `η` up to saturation, flat above.
#[derive(Serialize, Deserialize, Clone, Copy, Debug, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct EhCircuit {
    pub sensitivity_w: f64,
    pub saturation_w: f64,
    pub efficiency: f64,
}

impl Default for EhCircuit {
    fn default() -> Self {
        Self { sensitivity_w: 6.30e-6, saturation_w: 311e-6, efficiency: 0.25 }
    }
}

impl EhCircuit {
    pub fn validate(&self) -> Result<()> {
        if !(self.sensitivity_w >= 0.0 && self.sensitivity_w < self.saturation_w) {
            return Err(Error::Config(format!(
                "eh_circuit needs 0 <= sensitivity < saturation, got {} and {}",
                self.sensitivity_w, self.saturation_w
            )));
        }
        if !(self.efficiency > 0.0 && self.efficiency <= 1.0) {
            return Err(Error::Config(format!("eh_circuit.efficiency must lie in (0, 1], got {}", self.efficiency)));
        }
        Ok(())
    }
}

pub fn harvest(p_in: f64, circuit: &EhCircuit) -> f64 {
    if p_in < circuit.sensitivity_w {
        0.0
    } else if p_in < circuit.saturation_w {
        circuit.efficiency * p_in
    } else {
        circuit.efficiency * circuit.saturation_w
    }
}

/// Every transmission strategy the harness can evaluate.
#[derive(Serialize, Deserialize, Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Scheme {
    Mp,
    StatSingle,
    StatMulti,
    FullCsit,
    Aa,
    ConstrainedStat,
    ConstrainedFull,
    /// One antenna at a time, cycling through the array.
    Sa,
}

impl Scheme {
    pub const ALL: [Scheme; 8] = [
        Scheme::Mp,
        Scheme::StatSingle,
        Scheme::StatMulti,
        Scheme::FullCsit,
        Scheme::Aa,
        Scheme::ConstrainedStat,
        Scheme::ConstrainedFull,
        Scheme::Sa,
    ];

    pub fn beam(self) -> Option<BeamScheme> {
        Some(match self {
            Scheme::Mp => BeamScheme::Mp,
            Scheme::StatSingle => BeamScheme::StatSingle,
            Scheme::StatMulti => BeamScheme::StatMulti,
            Scheme::FullCsit => BeamScheme::FullCsit,
            Scheme::Aa => BeamScheme::Aa,
            Scheme::ConstrainedStat => BeamScheme::ConstrainedStat,
            Scheme::ConstrainedFull => BeamScheme::ConstrainedFull,
            Scheme::Sa => return None,
        })
    }

    pub fn name(self) -> &'static str {
        self.beam().map_or("SA", BeamScheme::name)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let wanted = s.trim().to_ascii_uppercase().replace('-', "_");
        Scheme::ALL
            .into_iter()
            .find(|b| b.name() == wanted)
            .ok_or_else(|| Error::Domain(format!("unknown scheme {s:?}")))
    }
}

#[derive(Serialize, Deserialize, Clone, Copy, Debug, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum TrialStatus {
    Ok,
    /// Constrained solver found no feasible point; excluded from summaries.
    Infeasible,
    /// Feasible, but the solver stopped before meeting its tolerance.
    MaxIterations,
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
pub struct TrialRecord {
    pub trial: u64,
    pub scheme: Scheme,
    pub status: TrialStatus,
    pub sum_power_rf: f64,
    pub per_cluster_rf: Vec<f64>,
    pub per_terminal_rf: Vec<f64>,
    pub sum_power_harvested: f64,
    /// Per-terminal powers the constrained solver bounded (expected powers
    /// for the statistical variant, instantaneous for full CSIT).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub constraint_powers: Option<Vec<f64>>,
}

#[derive(Serialize, Deserialize, Clone, Debug, Default, PartialEq)]
pub struct SimOptions {
    /// Worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
    pub solver: SolverOptions,
}

struct Evaluation {
    per_terminal: Vec<f64>,
    harvested: f64,
    status: TrialStatus,
    constraint_powers: Option<Vec<f64>>,
}

fn beam_evaluation(x: &CVector, real: &crate::channel::ChannelRealization, circuit: &EhCircuit) -> Result<Evaluation> {
    let mut per_terminal = Vec::new();
    for c in &real.clusters {
        per_terminal.extend(received_powers(&c.effective, x)?);
    }
    let harvested = per_terminal.iter().map(|&p| harvest(p, circuit)).sum();
    Ok(Evaluation { per_terminal, harvested, status: TrialStatus::Ok, constraint_powers: None })
}

fn evaluate(
    scheme: Scheme,
    config: &SystemConfig,
    circuit: &EhCircuit,
    stats: &[ClusterStatistics],
    real: &crate::channel::ChannelRealization,
    solver_rng: &mut impl Rng,
    options: &SimOptions,
) -> Result<Evaluation> {
    let px = config.tx_power_w;
    let x = match scheme {
        Scheme::Sa => {
            let m = config.num_antennas as f64;
            let mut per_terminal = Vec::new();
            let mut harvested = 0.0;
            for c in &real.clusters {
                for row in c.effective.row_iter() {
                    let slots = row.iter().map(|h| px * h.norm_sqr());
                    let (rf, eh) = slots.fold((0.0, 0.0), |(rf, eh), p| (rf + p, eh + harvest(p, circuit)));
                    per_terminal.push(rf / m);
                    harvested += eh / m;
                }
            }
            return Ok(Evaluation { per_terminal, harvested, status: TrialStatus::Ok, constraint_powers: None });
        }
        Scheme::Mp => precoder_mp(&stats[0].kl.basis, px)?.x,
        Scheme::StatSingle => precoder_stat(&build_stat_matrix(&stats[..1])?.matrix, px)?.x,
        Scheme::StatMulti => precoder_stat(&build_stat_matrix(stats)?.matrix, px)?.x,
        Scheme::FullCsit => precoder_full_csit(real, px)?.x,
        Scheme::Aa => precoder_aa(config.num_antennas, px)?.x,
        Scheme::ConstrainedStat | Scheme::ConstrainedFull => {
            let (lo, hi, opts) = (circuit.sensitivity_w, circuit.saturation_w, options.solver.clone());
            let problem = if scheme == Scheme::ConstrainedStat {
                ConstrainedProblem::statistical(stats, px, lo, hi, opts)?
            } else {
                ConstrainedProblem::full_csit(real, px, lo, hi, opts)?
            };
            let sol = solve_constrained(&problem, None, solver_rng)?;
            let mut eval = beam_evaluation(&sol.beam.x, real, circuit)?;
            eval.status = match sol.status {
                SolveStatus::OptimalFeasible => TrialStatus::Ok,
                SolveStatus::MaxIterations => TrialStatus::MaxIterations,
                SolveStatus::Infeasible => TrialStatus::Infeasible,
            };
            eval.constraint_powers = Some(match problem.mode {
                crate::constrained::ConstraintMode::Expected => expected_powers(stats, &sol.beam.x)?,
                crate::constrained::ConstraintMode::Instantaneous => sol.per_terminal_powers,
            });
            return Ok(eval);
        }
    };
    beam_evaluation(&x, real, circuit)
}

fn run_one(
    config: &SystemConfig,
    circuit: &EhCircuit,
    schemes: &[Scheme],
    trial: u64,
    frozen: Option<&[ClusterStatistics]>,
    options: &SimOptions,
) -> Result<Vec<TrialRecord>> {
    let mut rng = trial_rng(config.master_seed, trial, Stream::Channel);
    let drawn;
    let stats = match frozen {
        Some(s) => s,
        None => {
            drawn = draw_statistics(config, &mut rng)?;
            &drawn
        }
    };
    let real = realize_system(stats, &mut rng);
    let sizes: Vec<usize> = stats.iter().map(ClusterStatistics::num_terminals).collect();
    schemes
        .iter()
        .map(|&scheme| {
            let mut solver_rng = trial_rng(config.master_seed, trial, Stream::Solver);
            let eval = evaluate(scheme, config, circuit, stats, &real, &mut solver_rng, options)?;
            let mut at = 0;
            let per_cluster_rf = sizes
                .iter()
                .map(|&k| {
                    let s = eval.per_terminal[at..at + k].iter().sum();
                    at += k;
                    s
                })
                .collect();
            Ok(TrialRecord {
                trial,
                scheme,
                status: eval.status,
                sum_power_rf: eval.per_terminal.iter().sum(),
                per_cluster_rf,
                per_terminal_rf: eval.per_terminal,
                sum_power_harvested: eval.harvested,
                constraint_powers: eval.constraint_powers,
            })
        })
        .collect()
}

/// Runs `trials` channel draws and evaluates every scheme on each of them.
/// Returns one record stream per scheme, in the order given.
pub fn run_trials_multi(
    config: &SystemConfig,
    circuit: &EhCircuit,
    schemes: &[Scheme],
    trials: u64,
    options: &SimOptions,
) -> Result<Vec<Vec<TrialRecord>>> {
    config.validate()?;
    circuit.validate()?;
    options.solver.validate()?;
    if trials == 0 {
        return Err(Error::Domain("at least one trial is required".into()));
    }
    if schemes.is_empty() {
        return Err(Error::Empty);
    }
    let frozen = if config.correlation.frozen {
        let mut rng = trial_rng(config.master_seed, 0, Stream::Frozen);
        Some(draw_statistics(config, &mut rng)?)
    } else {
        None
    };
    let work = || -> Result<Vec<Vec<TrialRecord>>> {
        (0..trials).into_par_iter().map(|t| run_one(config, circuit, schemes, t, frozen.as_deref(), options)).collect()
    };
    let per_trial = match options.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::Config(format!("cannot start {n} worker threads: {e}")))?
            .install(work)?,
        None => work()?,
    };
    let mut out: Vec<Vec<TrialRecord>> = schemes.iter().map(|_| Vec::with_capacity(per_trial.len())).collect();
    for records in per_trial {
        for (dst, r) in out.iter_mut().zip(records) {
            dst.push(r);
        }
    }
    Ok(out)
}

pub fn run_trials(
    config: &SystemConfig,
    circuit: &EhCircuit,
    scheme: Scheme,
    trials: u64,
    options: &SimOptions,
) -> Result<Vec<TrialRecord>> {
    Ok(run_trials_multi(config, circuit, &[scheme], trials, options)?.remove(0))
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

/// Equal-width bins, Freedman–Diaconis width `2·IQR·n^{−1/3}`.
pub fn histogram(samples: &[f64]) -> Histogram {
    const MAX_BINS: usize = 10_000;
    if samples.is_empty() {
        return Histogram { edges: vec![], counts: vec![] };
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
    let q = |p: f64| {
        let pos = p * (sorted.len() - 1) as f64;
        let (i, frac) = (pos.floor() as usize, pos.fract());
        let next = sorted[(i + 1).min(sorted.len() - 1)];
        sorted[i] + frac * (next - sorted[i])
    };
    let width = 2.0 * (q(0.75) - q(0.25)) / (sorted.len() as f64).cbrt();
    let bins = if hi > lo && width > 0.0 { (((hi - lo) / width).ceil() as usize).clamp(1, MAX_BINS) } else { 1 };
    let step = if hi > lo { (hi - lo) / bins as f64 } else { 0.0 };
    let edges: Vec<f64> = (0..=bins).map(|i| if i == bins { hi } else { lo + step * i as f64 }).collect();
    let mut counts = vec![0u64; bins];
    for &x in &sorted {
        let idx = if step > 0.0 { (((x - lo) / step) as usize).min(bins - 1) } else { 0 };
        counts[idx] += 1;
    }
    Histogram { edges, counts }
}

/// Mean and unbiased variance.
#[derive(Serialize, Deserialize, Clone, Copy, Debug, PartialEq)]
pub struct Moments {
    pub mean: f64,
    pub variance: f64,
}

pub fn moments(samples: &[f64]) -> Result<Moments> {
    if samples.is_empty() {
        return Err(Error::Empty);
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let variance =
        if samples.len() > 1 { samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    Ok(Moments { mean, variance })
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
pub struct StatsSummary {
    pub mean: f64,
    pub variance: f64,
    pub count: usize,
    /// Trials dropped because the constrained solver found no feasible point.
    pub infeasible: usize,
    /// Feasible trials where the solver hit its iteration limit.
    pub max_iterations: usize,
    pub harvested_mean: f64,
    pub histogram: Histogram,
    pub per_cluster: Vec<Moments>,
}

pub fn summarize(records: &[TrialRecord]) -> Result<StatsSummary> {
    if records.is_empty() {
        return Err(Error::Empty);
    }
    let kept: Vec<&TrialRecord> = records.iter().filter(|r| r.status != TrialStatus::Infeasible).collect();
    if kept.is_empty() {
        return Err(Error::Domain(format!("all {} trials were infeasible", records.len())));
    }
    let sums: Vec<f64> = kept.iter().map(|r| r.sum_power_rf).collect();
    let m = moments(&sums)?;
    let harvested: Vec<f64> = kept.iter().map(|r| r.sum_power_harvested).collect();
    let clusters = kept[0].per_cluster_rf.len();
    let per_cluster = (0..clusters)
        .map(|l| moments(&kept.iter().map(|r| r.per_cluster_rf[l]).collect::<Vec<_>>()))
        .collect::<Result<_>>()?;
    Ok(StatsSummary {
        mean: m.mean,
        variance: m.variance,
        count: kept.len(),
        infeasible: records.len() - kept.len(),
        max_iterations: kept.iter().filter(|r| r.status == TrialStatus::MaxIterations).count(),
        harvested_mean: moments(&harvested)?.mean,
        histogram: histogram(&sums),
        per_cluster,
    })
}

/// Evaluates every scheme on shared channel draws.
pub fn compare_schemes(
    config: &SystemConfig,
    circuit: &EhCircuit,
    schemes: &[Scheme],
    trials: u64,
    options: &SimOptions,
) -> Result<BTreeMap<Scheme, StatsSummary>> {
    let runs = run_trials_multi(config, circuit, schemes, trials, options)?;
    schemes.iter().zip(runs).map(|(&s, r)| Ok((s, summarize(&r)?))).collect()
}

#[derive(Serialize, Deserialize, Clone, Copy, Debug, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    /// Rician factor of every cluster.
    Kappa,
    /// Array size.
    Antennas,
    /// Direction of the first cluster.
    Angle,
    /// Mechanical rotation of the array.
    Rotation,
    /// Number of clusters, placed at `180°·l/(L+1)` for `l = 1..L`.
    Clusters,
}

impl FromStr for SweepParameter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "kappa" => SweepParameter::Kappa,
            "antennas" => SweepParameter::Antennas,
            "angle" => SweepParameter::Angle,
            "rotation" => SweepParameter::Rotation,
            "clusters" => SweepParameter::Clusters,
            other => return Err(Error::Domain(format!("unknown sweep parameter {other:?}"))),
        })
    }
}

impl fmt::Display for SweepParameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepParameter::Kappa => "kappa",
            SweepParameter::Antennas => "antennas",
            SweepParameter::Angle => "angle",
            SweepParameter::Rotation => "rotation",
            SweepParameter::Clusters => "clusters",
        })
    }
}

fn as_count(value: f64, what: &str) -> Result<usize> {
    if value >= 1.0 && value.fract() == 0.0 && value.is_finite() {
        Ok(value as usize)
    } else {
        Err(Error::Domain(format!("{what} must be a positive integer, got {value}")))
    }
}

/// Cluster directions `180°·l/(L+1)`, `l = 1..L`.
pub fn cluster_angles(num_clusters: usize) -> Vec<f64> {
    (1..=num_clusters).map(|l| 180.0 * l as f64 / (num_clusters + 1) as f64).collect()
}

/// `config` with one parameter replaced; the result is validated.
pub fn apply_parameter(config: &SystemConfig, parameter: SweepParameter, value: f64) -> Result<SystemConfig> {
    let mut c = config.clone();
    match parameter {
        SweepParameter::Kappa => c.clusters.iter_mut().for_each(|cl| cl.rician_kappa = value),
        SweepParameter::Antennas => c.num_antennas = as_count(value, "antennas")?,
        SweepParameter::Angle => c.clusters[0].angle_deg = value,
        SweepParameter::Rotation => c.rotation_deg = value,
        SweepParameter::Clusters => {
            let template: ClusterConfig = c.clusters[0].clone();
            c.clusters = cluster_angles(as_count(value, "clusters")?)
                .into_iter()
                .map(|angle_deg| ClusterConfig { angle_deg, ..template.clone() })
                .collect();
        }
    }
    c.validate()?;
    Ok(c)
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
pub struct SweepPoint {
    pub value: f64,
    pub scheme: Scheme,
    pub cluster_angles_deg: Vec<f64>,
    pub summary: Option<StatsSummary>,
    pub error: Option<String>,
}

/// One summary per (value, scheme); invalid values become error entries.
pub fn sweep(
    config: &SystemConfig,
    circuit: &EhCircuit,
    schemes: &[Scheme],
    parameter: SweepParameter,
    values: &[f64],
    trials: u64,
    options: &SimOptions,
) -> Vec<SweepPoint> {
    let mut out = Vec::with_capacity(values.len() * schemes.len());
    for &value in values {
        let applied = apply_parameter(config, parameter, value);
        let angles: Vec<f64> =
            applied.as_ref().map(|c| c.clusters.iter().map(|cl| cl.angle_deg).collect()).unwrap_or_default();
        let results: Vec<Result<StatsSummary>> =
            match applied.and_then(|c| run_trials_multi(&c, circuit, schemes, trials, options)) {
                Ok(runs) => runs.iter().map(|r| summarize(r)).collect(),
                Err(e) => schemes.iter().map(|_| Err(e.clone())).collect(),
            };
        for (&scheme, result) in schemes.iter().zip(results) {
            let (summary, error) = match result {
                Ok(s) => (Some(s), None),
                Err(e) => (None, Some(e.to_string())),
            };
            out.push(SweepPoint { value, scheme, cluster_angles_deg: angles.clone(), summary, error });
        }
    }
    out
}
