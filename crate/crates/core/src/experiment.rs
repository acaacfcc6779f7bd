//! Configuration-driven experiment runner: sweeps, metrics, and
//! deterministic artifact emission.
//!
//! Every run is a pure function of `(config, seed)`: each `(point, trial)`
//! job owns a counter-derived RNG stream, jobs execute in a work pool, and
//! results are buffered and written in `(point, trial)` order, so outputs
//! are byte-identical regardless of worker count. Engine wall times go to
//! a separate `timings.csv`, which is the one non-deterministic artifact.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cover::{
    count_ranking, exact_binary, exact_integer, greedy_cover, CoverSolution, SolverBudget,
};
use crate::plot::{render_line_chart, Series};
use crate::routing::{RoutingMatrix, TrafficPattern};
use crate::simulator::{
    account_icmp, ground_truth, run_epoch, CountSpec, DropClass, EpochTrace, FailureScenario,
    GroundTruth, Placement, RateInterval, ScenarioSpec, TrafficConfig,
};
use crate::topology::{ClosParams, LinkId, Topology};
use crate::voting::{
    blame_flow, classify_drop, find_bad_links, tally_votes, write_blame_csv, write_votes_csv,
    BadLinkSearch, BadLinkSet, Ranking, VoteTally,
};

/// Environment variable overriding the worker-pool size.
pub const WORKERS_ENV: &str = "CLOSLAB_WORKERS";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    Voting,
    Greedy,
    ExactBinary,
    ExactInteger,
}

impl Engine {
    pub fn label(self) -> &'static str {
        match self {
            Engine::Voting => "voting",
            Engine::Greedy => "greedy",
            Engine::ExactBinary => "exact_binary",
            Engine::ExactInteger => "exact_integer",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Failed-link drop rate (interval collapses to the value).
    FailedRate,
    /// Upper end of the good-link noise interval `(0, value)`.
    NoiseCap,
    /// Number of failed links.
    FailedCount,
    /// Connections per host per epoch.
    FlowsPerHost,
    /// Fraction of flows sinking at the hot ToR.
    HotTorFraction,
    /// Weight of the skewed destination ToR set.
    SkewWeight,
    /// Number of pods.
    Pods,
}

impl SweepAxis {
    pub fn label(self) -> &'static str {
        match self {
            SweepAxis::FailedRate => "failed_rate",
            SweepAxis::NoiseCap => "noise_cap",
            SweepAxis::FailedCount => "failed_count",
            SweepAxis::FlowsPerHost => "flows_per_host",
            SweepAxis::HotTorFraction => "hot_tor_fraction",
            SweepAxis::SkewWeight => "skew_weight",
            SweepAxis::Pods => "pods",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub topology: ClosParams,
    #[serde(default)]
    pub scenario: ScenarioSpec,
    #[serde(default = "default_traffic")]
    pub traffic: TrafficPattern,
    #[serde(default = "default_flows")]
    pub flows_per_host: CountSpec,
    #[serde(default = "default_packets")]
    pub packets_per_flow: CountSpec,
    #[serde(default = "one")]
    pub epochs: u32,
    #[serde(default = "one")]
    pub trials: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_epoch_seconds")]
    pub epoch_seconds: f64,
    #[serde(default = "default_t_max")]
    pub t_max: f64,
    #[serde(default = "default_engines")]
    pub engines: Vec<Engine>,
    #[serde(default)]
    pub analysis: BadLinkSearch,
    #[serde(default)]
    pub solver_budget: SolverBudget,
    #[serde(default)]
    pub sweep: Option<Sweep>,
}

fn default_traffic() -> TrafficPattern {
    TrafficPattern::Uniform
}
fn default_flows() -> CountSpec {
    CountSpec::Fixed(60)
}
fn default_packets() -> CountSpec {
    CountSpec::Fixed(100)
}
fn one() -> u32 {
    1
}
fn default_epoch_seconds() -> f64 {
    30.0
}
fn default_t_max() -> f64 {
    100.0
}
fn default_engines() -> Vec<Engine> {
    vec![Engine::Voting]
}

impl ExperimentConfig {
    /// Desk-scale two-pod baseline used by the bundled sweeps.
    pub fn desk2pod(name: &str) -> Self {
        Self {
            name: name.into(),
            topology: ClosParams {
                n_pod: 2,
                n0: 8,
                n1: 4,
                n2: 4,
                hosts_per_tor: 10,
                include_host_links: true,
            },
            scenario: ScenarioSpec::default(),
            traffic: TrafficPattern::Uniform,
            flows_per_host: CountSpec::Fixed(60),
            packets_per_flow: CountSpec::Fixed(100),
            epochs: 1,
            trials: 1,
            seed: 0,
            epoch_seconds: 30.0,
            t_max: 100.0,
            engines: vec![Engine::Voting],
            analysis: BadLinkSearch::default(),
            solver_budget: SolverBudget::default(),
            sweep: None,
        }
    }

    /// Production-scale two-pod preset: 20 ToRs per pod, 40 hosts per ToR.
    pub fn paper2pod(name: &str) -> Self {
        Self {
            topology: ClosParams {
                n_pod: 2,
                n0: 20,
                n1: 10,
                n2: 10,
                hosts_per_tor: 40,
                include_host_links: true,
            },
            ..Self::desk2pod(name)
        }
    }

    pub fn from_json(json: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(json).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("config field `{field}` invalid: {reason}")]
    Field { field: &'static str, reason: String },
}

fn field_err(field: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Field { field, reason: reason.into() }
}

/// One resolved sweep point.
#[derive(Clone, Debug)]
struct PointConfig {
    axis_value: Option<f64>,
    config: ExperimentConfig,
}

fn resolve_points(config: &ExperimentConfig) -> Result<Vec<PointConfig>, ConfigError> {
    let points = match &config.sweep {
        None => vec![PointConfig { axis_value: None, config: config.clone() }],
        Some(sweep) => {
            if sweep.values.is_empty() {
                return Err(field_err("sweep.values", "must be nonempty"));
            }
            sweep
                .values
                .iter()
                .map(|v| {
                    let mut point = config.clone();
                    apply_axis(&mut point, sweep.axis, *v)?;
                    Ok(PointConfig { axis_value: Some(*v), config: point })
                })
                .collect::<Result<Vec<_>, _>>()?
        }
    };
    for p in &points {
        validate_point(&p.config)?;
    }
    Ok(points)
}

fn apply_axis(cfg: &mut ExperimentConfig, axis: SweepAxis, value: f64) -> Result<(), ConfigError> {
    match axis {
        SweepAxis::FailedRate => {
            cfg.scenario.failed_rate = RateInterval::fixed(value);
        }
        SweepAxis::NoiseCap => {
            cfg.scenario.good_rate = RateInterval::new(0.0, value);
        }
        SweepAxis::FailedCount => {
            cfg.scenario.failed_count = as_count(value, "sweep.values")?;
        }
        SweepAxis::FlowsPerHost => {
            cfg.flows_per_host = CountSpec::Fixed(as_count(value, "sweep.values")?);
        }
        SweepAxis::HotTorFraction => match &mut cfg.traffic {
            TrafficPattern::HotTor { fraction, .. } => *fraction = value,
            _ => {
                return Err(field_err("traffic", "hot_tor_fraction sweep needs a hot_tor pattern"))
            }
        },
        SweepAxis::SkewWeight => match &mut cfg.traffic {
            TrafficPattern::SkewedTorSet { weight, .. } => *weight = value,
            _ => {
                return Err(field_err("traffic", "skew_weight sweep needs a skewed_tor_set pattern"))
            }
        },
        SweepAxis::Pods => {
            cfg.topology.n_pod = as_count(value, "sweep.values")?;
        }
    }
    Ok(())
}

fn as_count(value: f64, field: &'static str) -> Result<u32, ConfigError> {
    if value.fract() != 0.0 || value < 0.0 || value > f64::from(u32::MAX) {
        return Err(field_err(field, format!("{value} is not a valid count")));
    }
    Ok(value as u32)
}

fn validate_point(cfg: &ExperimentConfig) -> Result<(), ConfigError> {
    cfg.topology
        .validate()
        .map_err(|e| field_err("topology", e.to_string()))?;
    if cfg.topology.hosts_per_tor == 0 {
        return Err(field_err("topology.hosts_per_tor", "simulation requires hosts"));
    }
    cfg.traffic
        .validate(&cfg.topology)
        .map_err(|e| field_err("traffic", e.to_string()))?;
    cfg.scenario
        .failed_rate
        .validate("failed_rate")
        .map_err(|e| field_err("scenario.failed_rate", e.to_string()))?;
    cfg.scenario
        .good_rate
        .validate("good_rate")
        .map_err(|e| field_err("scenario.good_rate", e.to_string()))?;
    let eligible = match &cfg.scenario.placement {
        Placement::Fixed(links) => links.len() as u32,
        Placement::Uniform => cfg.topology.link_count(),
        Placement::Levels(levels) => levels
            .iter()
            .map(|lv| match lv {
                crate::topology::LinkLevel::Host => cfg.topology.host_link_count(),
                crate::topology::LinkLevel::Level1 => cfg.topology.level1_count(),
                crate::topology::LinkLevel::Level2 => cfg.topology.level2_count(),
            })
            .sum(),
    };
    let requested = if matches!(cfg.scenario.placement, Placement::Fixed(_)) {
        cfg.scenario.hot_failed_count
    } else {
        cfg.scenario.failed_count + cfg.scenario.hot_failed_count
    };
    if requested > eligible {
        return Err(field_err(
            "scenario.failed_count",
            format!("{requested} failures requested but only {eligible} links eligible"),
        ));
    }
    if !cfg.flows_per_host.validate() {
        return Err(field_err("flows_per_host", "uniform bounds must satisfy lo <= hi"));
    }
    if !cfg.packets_per_flow.validate() {
        return Err(field_err("packets_per_flow", "uniform bounds must satisfy lo <= hi"));
    }
    if cfg.epochs == 0 {
        return Err(field_err("epochs", "must be at least 1"));
    }
    if cfg.trials == 0 {
        return Err(field_err("trials", "must be at least 1"));
    }
    if !(cfg.epoch_seconds.is_finite() && cfg.epoch_seconds > 0.0) {
        return Err(field_err("epoch_seconds", "must be positive"));
    }
    if !(cfg.t_max.is_finite() && cfg.t_max >= 0.0) {
        return Err(field_err("t_max", "must be nonnegative"));
    }
    if cfg.engines.is_empty() {
        return Err(field_err("engines", "at least one engine required"));
    }
    if !(cfg.analysis.threshold_fraction > 0.0 && cfg.analysis.threshold_fraction < 1.0) {
        return Err(field_err("analysis.threshold_fraction", "must lie in (0,1)"));
    }
    Ok(())
}

/// Per-engine artifacts of one epoch.
pub struct EngineOutputs {
    pub voting: Option<(VoteTally, Ranking, BadLinkSet)>,
    pub greedy: Option<CoverSolution>,
    pub exact_binary: Option<CoverSolution>,
    pub exact_integer: Option<CoverSolution>,
    /// Engine wall times in microseconds (non-deterministic).
    pub micros: BTreeMap<Engine, u128>,
}

/// Runs the selected engines over one epoch trace.
pub fn run_engines(
    trace: &EpochTrace,
    topo: &Topology,
    engines: &[Engine],
    analysis: &BadLinkSearch,
    budget: &SolverBudget,
) -> EngineOutputs {
    let mut out = EngineOutputs {
        voting: None,
        greedy: None,
        exact_binary: None,
        exact_integer: None,
        micros: BTreeMap::new(),
    };
    let needs_matrix = engines
        .iter()
        .any(|e| matches!(e, Engine::Greedy | Engine::ExactBinary | Engine::ExactInteger));
    let matrix: Option<RoutingMatrix> = needs_matrix.then(|| {
        let known: Vec<_> = trace.traced_retransmitted().cloned().collect();
        crate::routing::build_routing_matrix(&known, topo.link_count())
    });
    for engine in engines {
        let start = Instant::now();
        match engine {
            Engine::Voting => {
                let tally = tally_votes(trace);
                let ranking = Ranking::from_tally(&tally);
                let bad = find_bad_links(&tally, trace, topo, analysis);
                out.voting = Some((tally, ranking, bad));
            }
            Engine::Greedy => {
                out.greedy = Some(greedy_cover(matrix.as_ref().expect("matrix built")));
            }
            Engine::ExactBinary => {
                let m = matrix.as_ref().expect("matrix built");
                out.exact_binary = Some(exact_binary(m, m.n_links(), budget));
            }
            Engine::ExactInteger => {
                out.exact_integer = Some(exact_integer(matrix.as_ref().expect("matrix built"), budget));
            }
        }
        out.micros.insert(*engine, start.elapsed().as_micros());
    }
    out
}

/// One engine's score for one epoch.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EngineScore {
    pub engine: Engine,
    /// Correct blames among flows the engine classed as failure drops.
    pub correct: u64,
    pub scored: u64,
    pub precision: f64,
    pub recall: f64,
    pub flagged: usize,
    pub failed: usize,
    pub budget_exceeded: bool,
}

impl EngineScore {
    pub fn accuracy(&self) -> Option<f64> {
        (self.scored > 0).then(|| self.correct as f64 / self.scored as f64)
    }
}

fn set_metrics(flagged: &[LinkId], failed: &[LinkId]) -> (f64, f64) {
    let hits = flagged.iter().filter(|l| failed.contains(l)).count();
    let precision = if flagged.is_empty() {
        // Empty flag set: precision defined as 1 (nothing wrongly accused).
        1.0
    } else {
        hits as f64 / flagged.len() as f64
    };
    let recall = if failed.is_empty() {
        1.0
    } else {
        hits as f64 / failed.len() as f64
    };
    (precision, recall)
}

/// Scores every engine's outputs for one epoch against ground truth.
///
/// Per-flow accuracy counts flows the engine itself puts in the failure
/// class (voting: path crosses a flagged link; integer program: path
/// crosses the support); noise-class flows are excluded.
pub fn score(trace: &EpochTrace, outputs: &EngineOutputs, gt: &GroundTruth) -> Vec<EngineScore> {
    let failed = &trace.scenario.failed;
    let mut scores = Vec::new();
    if let Some((_, ranking, bad)) = &outputs.voting {
        let mut correct = 0u64;
        let mut scored = 0u64;
        for (i, flow) in trace.flows.iter().enumerate() {
            if !(flow.traced && flow.retransmitted) {
                continue;
            }
            if classify_drop(flow, bad) != DropClass::Failure {
                continue;
            }
            scored += 1;
            let blamed = blame_flow(flow, ranking).expect("traced retransmitted");
            if gt.verdicts[i].map(|(culprit, _)| culprit) == Some(blamed) {
                correct += 1;
            }
        }
        let (precision, recall) = set_metrics(&bad.links, failed);
        scores.push(EngineScore {
            engine: Engine::Voting,
            correct,
            scored,
            precision,
            recall,
            flagged: bad.links.len(),
            failed: failed.len(),
            budget_exceeded: false,
        });
    }
    for (engine, solution) in [
        (Engine::Greedy, &outputs.greedy),
        (Engine::ExactBinary, &outputs.exact_binary),
    ] {
        if let Some(sol) = solution {
            let (precision, recall) = set_metrics(&sol.links, failed);
            scores.push(EngineScore {
                engine,
                correct: 0,
                scored: 0,
                precision,
                recall,
                flagged: sol.links.len(),
                failed: failed.len(),
                budget_exceeded: engine != Engine::Greedy && !sol.stats.optimal,
            });
        }
    }
    if let Some(sol) = &outputs.exact_integer {
        let rank = count_ranking(sol, trace.link_drop_totals.len());
        let mut correct = 0u64;
        let mut scored = 0u64;
        for (i, flow) in trace.flows.iter().enumerate() {
            if !(flow.traced && flow.retransmitted) {
                continue;
            }
            if !flow.path.links.iter().any(|l| sol.links.contains(l)) {
                continue;
            }
            scored += 1;
            let blamed = flow
                .path
                .links
                .iter()
                .copied()
                .min_by_key(|l| rank[l.index()])
                .expect("paths are nonempty");
            if gt.verdicts[i].map(|(culprit, _)| culprit) == Some(blamed) {
                correct += 1;
            }
        }
        let (precision, recall) = set_metrics(&sol.links, failed);
        scores.push(EngineScore {
            engine: Engine::ExactInteger,
            correct,
            scored,
            precision,
            recall,
            flagged: sol.links.len(),
            failed: failed.len(),
            budget_exceeded: !sol.stats.optimal,
        });
    }
    scores
}

#[derive(Clone, Debug)]
struct TrialEngineStats {
    engine: Engine,
    correct: u64,
    scored: u64,
    precision_sum: f64,
    recall_sum: f64,
    epochs: u32,
    flagged: usize,
    failed: usize,
    budget_exceeded: bool,
    micros: u128,
}

impl TrialEngineStats {
    fn accuracy(&self) -> Option<f64> {
        (self.scored > 0).then(|| self.correct as f64 / self.scored as f64)
    }

    fn precision(&self) -> f64 {
        self.precision_sum / f64::from(self.epochs)
    }

    fn recall(&self) -> f64 {
        self.recall_sum / f64::from(self.epochs)
    }
}

struct TrialOutput {
    point: usize,
    trial: usize,
    engines: Vec<TrialEngineStats>,
    votes_csv: Option<String>,
    blame_csv: Option<String>,
    flows_rows: Option<String>,
    icmp_rows: Option<String>,
    max_icmp_rate: f64,
    solutions: Vec<(String, CoverSolution)>,
}

fn trial_rng(seed: u64, point: usize, trial: usize) -> ChaCha8Rng {
    let mut bytes = [0u8; 32];
    bytes[..8].copy_from_slice(&seed.to_le_bytes());
    bytes[8..16].copy_from_slice(&(point as u64).to_le_bytes());
    bytes[16..24].copy_from_slice(&(trial as u64).to_le_bytes());
    bytes[24..].copy_from_slice(&0x9E37_79B9_7F4A_7C15u64.to_le_bytes());
    ChaCha8Rng::from_seed(bytes)
}

fn run_trial(
    cfg: &ExperimentConfig,
    point: usize,
    trial: usize,
    capture_epoch_csvs: bool,
    capture_flows: bool,
) -> TrialOutput {
    let topo = Topology::build(cfg.topology).expect("validated");
    let mut rng = trial_rng(cfg.seed, point, trial);
    let scenario = FailureScenario::draw(&cfg.scenario, &topo, &mut rng).expect("validated");
    let traffic = TrafficConfig {
        pattern: cfg.traffic.clone(),
        flows_per_host: cfg.flows_per_host,
        packets_per_flow: cfg.packets_per_flow,
        epoch_seconds: cfg.epoch_seconds,
        t_max: cfg.t_max,
    };
    let mut stats: Vec<TrialEngineStats> = cfg
        .engines
        .iter()
        .map(|e| TrialEngineStats {
            engine: *e,
            correct: 0,
            scored: 0,
            precision_sum: 0.0,
            recall_sum: 0.0,
            epochs: 0,
            flagged: 0,
            failed: 0,
            budget_exceeded: false,
            micros: 0,
        })
        .collect();
    let mut votes_csv = None;
    let mut blame_csv = None;
    let mut flows_rows = capture_flows.then(String::new);
    let mut icmp_rows = capture_flows.then(String::new);
    let mut max_icmp_rate = 0.0f64;
    let mut solutions = Vec::new();
    for epoch in 0..cfg.epochs {
        let trace = run_epoch(&topo, &scenario, &traffic, epoch, &mut rng);
        let icmp = account_icmp(&trace, cfg.t_max);
        if icmp.max_rate > max_icmp_rate {
            max_icmp_rate = icmp.max_rate;
        }
        let gt = ground_truth(&trace);
        let outputs = run_engines(&trace, &topo, &cfg.engines, &cfg.analysis, &cfg.solver_budget);
        for sc in score(&trace, &outputs, &gt) {
            let slot = stats
                .iter_mut()
                .find(|s| s.engine == sc.engine)
                .expect("engine configured");
            slot.correct += sc.correct;
            slot.scored += sc.scored;
            slot.precision_sum += sc.precision;
            slot.recall_sum += sc.recall;
            slot.epochs += 1;
            slot.flagged = sc.flagged;
            slot.failed = sc.failed;
            slot.budget_exceeded |= sc.budget_exceeded;
        }
        for (engine, micros) in &outputs.micros {
            if let Some(slot) = stats.iter_mut().find(|s| s.engine == *engine) {
                slot.micros += micros;
            }
        }
        if capture_epoch_csvs && epoch == 0 {
            if let Some((tally, ranking, bad)) = &outputs.voting {
                let mut v = Vec::new();
                write_votes_csv(&mut v, epoch, tally, ranking, bad).expect("in-memory write");
                votes_csv = Some(String::from_utf8(v).expect("utf8"));
                let mut b = Vec::new();
                write_blame_csv(&mut b, &trace, ranking, bad).expect("in-memory write");
                blame_csv = Some(String::from_utf8(b).expect("utf8"));
            }
        }
        if let Some(rows) = &mut flows_rows {
            for f in &trace.flows {
                let culprit = f.culprit.map(|l| l.0.to_string()).unwrap_or_default();
                let _ = writeln!(
                    rows,
                    "{trial},{epoch},{},{},{},{},{},{},{},{},{}",
                    f.id,
                    f.src.0,
                    f.dst.0,
                    f.hops(),
                    f.packets,
                    f.total_drops(),
                    u8::from(f.retransmitted),
                    culprit,
                    u8::from(f.traced)
                );
            }
        }
        if let Some(rows) = &mut icmp_rows {
            for (id, count) in trace.icmp_per_switch.iter().enumerate() {
                let _ = writeln!(rows, "{trial},{epoch},{id},{}", f64::from(*count) / trace.epoch_seconds);
            }
        }
        for (engine, sol) in [
            (Engine::Greedy, &outputs.greedy),
            (Engine::ExactBinary, &outputs.exact_binary),
            (Engine::ExactInteger, &outputs.exact_integer),
        ] {
            if let Some(sol) = sol {
                solutions.push((
                    format!("point{point}/trial{trial}/epoch{epoch}/{}", engine.label()),
                    sol.clone(),
                ));
            }
        }
    }
    TrialOutput {
        point,
        trial,
        engines: stats,
        votes_csv,
        blame_csv,
        flows_rows,
        icmp_rows,
        max_icmp_rate,
        solutions,
    }
}

/// Aggregated mean and 95% confidence half-width over trials.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MeanCi {
    pub mean: f64,
    pub ci: f64,
    pub n: usize,
}

fn mean_ci(values: &[f64]) -> Option<MeanCi> {
    if values.is_empty() {
        return None;
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let ci = if n > 1 {
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        1.96 * (var / n as f64).sqrt()
    } else {
        0.0
    };
    Some(MeanCi { mean, ci, n })
}

/// Per-engine aggregate at one sweep point.
#[derive(Clone, Debug, Serialize)]
pub struct EngineSummary {
    pub engine: Engine,
    pub accuracy: Option<MeanCi>,
    pub precision: MeanCi,
    pub recall: MeanCi,
    pub budget_exceeded: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct PointSummary {
    pub point: usize,
    pub axis_value: Option<f64>,
    pub engines: Vec<EngineSummary>,
    pub max_icmp_rate: f64,
}

/// Everything a run produces: deterministic artifact files keyed by name,
/// wall-time files (excluded from the determinism contract), and the
/// aggregated summary.
#[derive(Debug)]
pub struct ExperimentOutput {
    pub files: BTreeMap<String, String>,
    pub timing_files: BTreeMap<String, String>,
    pub points: Vec<PointSummary>,
    pub all_budget_exceeded: bool,
}

impl ExperimentOutput {
    pub fn write_to(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, content) in self.files.iter().chain(self.timing_files.iter()) {
            std::fs::write(dir.join(name), content)?;
        }
        Ok(())
    }

    pub fn summary_for(&self, point: usize, engine: Engine) -> Option<&EngineSummary> {
        self.points
            .get(point)
            .and_then(|p| p.engines.iter().find(|e| e.engine == engine))
    }
}

fn build_pool() -> Result<rayon::ThreadPool, ConfigError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        let workers: usize = v
            .parse()
            .ok()
            .filter(|w| *w >= 1)
            .ok_or_else(|| field_err("CLOSLAB_WORKERS", "must be a positive integer"))?;
        builder = builder.num_threads(workers);
    }
    builder
        .build()
        .map_err(|e| field_err("CLOSLAB_WORKERS", e.to_string()))
}

/// Validates a configuration, including every resolved sweep point,
/// without running anything.
pub fn validate_config(config: &ExperimentConfig) -> Result<(), ConfigError> {
    resolve_points(config).map(|_| ())
}

/// Runs the full experiment: every sweep point times every trial, in a
/// work pool, with deterministic aggregation and artifact generation.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput, ConfigError> {
    let points = resolve_points(config)?;
    let single_point = config.sweep.is_none();
    let jobs: Vec<(usize, usize)> = (0..points.len())
        .flat_map(|p| (0..config.trials as usize).map(move |t| (p, t)))
        .collect();
    let pool = build_pool()?;
    let results: Vec<TrialOutput> = pool.install(|| {
        jobs.par_iter()
            .map(|(p, t)| {
                run_trial(
                    &points[*p].config,
                    *p,
                    *t,
                    *p == 0 && *t == 0,
                    single_point,
                )
            })
            .collect()
    });

    // Aggregation and emission run sequentially in (point, trial) order.
    let axis_label = config.sweep.as_ref().map(|s| s.axis.label()).unwrap_or("none");
    let mut metrics = String::from(
        "point,axis,value,trial,engine,accuracy,precision,recall,flagged,failed,scored_flows,budget_exceeded\n",
    );
    let mut timings = String::from("point,trial,engine,micros\n");
    let mut flows_csv = single_point.then(|| {
        String::from("trial,epoch,flow_id,src,dst,h,packets,drops,retransmitted,culprit_link,traced\n")
    });
    let mut icmp_csv = single_point.then(|| String::from("trial,epoch,switch_id,rate\n"));
    let mut votes_csv = None;
    let mut blame_csv = None;
    let mut solutions: Vec<(String, CoverSolution)> = Vec::new();
    let mut point_summaries: Vec<PointSummary> = Vec::new();

    for (p, point) in points.iter().enumerate() {
        let value_str = point.axis_value.map(|v| v.to_string()).unwrap_or_default();
        let trials: Vec<&TrialOutput> = results
            .iter()
            .filter(|r| r.point == p)
            .collect();
        let mut engine_summaries = Vec::new();
        for engine in &point.config.engines {
            let mut accuracies = Vec::new();
            let mut precisions = Vec::new();
            let mut recalls = Vec::new();
            let mut exceeded = false;
            for trial in &trials {
                let s = trial
                    .engines
                    .iter()
                    .find(|s| s.engine == *engine)
                    .expect("engine ran");
                if let Some(a) = s.accuracy() {
                    accuracies.push(a);
                }
                precisions.push(s.precision());
                recalls.push(s.recall());
                exceeded |= s.budget_exceeded;
                let acc_str = s.accuracy().map(|a| a.to_string()).unwrap_or_default();
                let _ = writeln!(
                    metrics,
                    "{p},{axis_label},{value_str},{},{},{},{},{},{},{},{},{}",
                    trial.trial,
                    engine.label(),
                    acc_str,
                    s.precision(),
                    s.recall(),
                    s.flagged,
                    s.failed,
                    s.scored,
                    u8::from(s.budget_exceeded),
                );
                let _ = writeln!(timings, "{p},{},{},{}", trial.trial, engine.label(), s.micros);
            }
            engine_summaries.push(EngineSummary {
                engine: *engine,
                accuracy: mean_ci(&accuracies),
                precision: mean_ci(&precisions).expect("at least one trial"),
                recall: mean_ci(&recalls).expect("at least one trial"),
                budget_exceeded: exceeded,
            });
        }
        let max_icmp_rate = trials
            .iter()
            .map(|t| t.max_icmp_rate)
            .fold(0.0f64, f64::max);
        point_summaries.push(PointSummary {
            point: p,
            axis_value: point.axis_value,
            engines: engine_summaries,
            max_icmp_rate,
        });
        for trial in &trials {
            if let (Some(rows), Some(csv)) = (&trial.flows_rows, &mut flows_csv) {
                csv.push_str(rows);
            }
            if let (Some(rows), Some(csv)) = (&trial.icmp_rows, &mut icmp_csv) {
                csv.push_str(rows);
            }
            if votes_csv.is_none() {
                votes_csv = trial.votes_csv.clone();
            }
            if blame_csv.is_none() {
                blame_csv = trial.blame_csv.clone();
            }
            solutions.extend(trial.solutions.iter().cloned());
        }
    }

    // plotdata.csv and the chart.
    let mut plotdata = String::from("x,series,mean,ci\n");
    let mut series: BTreeMap<String, Series> = BTreeMap::new();
    for ps in &point_summaries {
        let x = ps.axis_value.unwrap_or(ps.point as f64);
        for es in &ps.engines {
            let mut push = |metric: &str, mc: MeanCi| {
                let name = format!("{}_{}", es.engine.label(), metric);
                let _ = writeln!(plotdata, "{x},{name},{},{}", mc.mean, mc.ci);
                series
                    .entry(name.clone())
                    .or_insert_with(|| Series { name, points: Vec::new() })
                    .points
                    .push((x, mc.mean, mc.ci));
            };
            if let Some(a) = es.accuracy {
                push("accuracy", a);
            }
            push("precision", es.precision);
            push("recall", es.recall);
        }
    }
    let series: Vec<Series> = series.into_values().collect();
    let svg = render_line_chart(
        &config.name,
        axis_label,
        "metric",
        &series,
    );

    let mut files = BTreeMap::new();
    files.insert("metrics.csv".to_string(), metrics);
    files.insert("plotdata.csv".to_string(), plotdata);
    files.insert("plot.svg".to_string(), svg);
    files.insert("config.json".to_string(), config.to_json());
    {
        let mut buf = Vec::new();
        crate::cover::write_solutions_json(&mut buf, &solutions).expect("in-memory write");
        files.insert("solutions.json".to_string(), String::from_utf8(buf).expect("utf8"));
    }
    if let Some(csv) = flows_csv {
        files.insert("flows.csv".to_string(), csv);
    }
    if let Some(csv) = icmp_csv {
        files.insert("icmp.csv".to_string(), csv);
    }
    if let Some(csv) = votes_csv {
        files.insert("votes.csv".to_string(), csv);
    }
    if let Some(csv) = blame_csv {
        files.insert("blame.csv".to_string(), csv);
    }
    let mut timing_files = BTreeMap::new();
    timing_files.insert("timings.csv".to_string(), timings);

    let solver_engines_configured = config.engines.iter().any(|e| {
        matches!(e, Engine::ExactBinary | Engine::ExactInteger)
    });
    let all_budget_exceeded = solver_engines_configured
        && !point_summaries.is_empty()
        && point_summaries
            .iter()
            .all(|p| p.engines.iter().any(|e| e.budget_exceeded));

    Ok(ExperimentOutput {
        files,
        timing_files,
        points: point_summaries,
        all_budget_exceeded,
    })
}

/// Re-renders `plot.svg` from an existing `plotdata.csv`.
pub fn render_plotdata(csv: &str, title: &str, x_label: &str) -> Result<String, ConfigError> {
    let mut series: BTreeMap<String, Series> = BTreeMap::new();
    for (i, line) in csv.lines().enumerate() {
        if i == 0 || line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 4 {
            return Err(ConfigError::Parse(format!("plotdata line {i}: expected 4 fields")));
        }
        let x: f64 = parts[0]
            .parse()
            .map_err(|_| ConfigError::Parse(format!("plotdata line {i}: bad x")))?;
        let mean: f64 = parts[2]
            .parse()
            .map_err(|_| ConfigError::Parse(format!("plotdata line {i}: bad mean")))?;
        let ci: f64 = parts[3]
            .parse()
            .map_err(|_| ConfigError::Parse(format!("plotdata line {i}: bad ci")))?;
        let name = parts[1].to_string();
        series
            .entry(name.clone())
            .or_insert_with(|| Series { name, points: Vec::new() })
            .points
            .push((x, mean, ci));
    }
    let series: Vec<Series> = series.into_values().collect();
    Ok(render_line_chart(title, x_label, "metric", &series))
}
