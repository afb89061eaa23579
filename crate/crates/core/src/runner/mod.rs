//! Run loops for one instance, benchmark sweeps and ordering statistics.
//!
//! Seeds: a run seed `s` derives the solver rng (`mix(s, SOLVER_STREAM)`), the
//! policy seed (`mix(s, POLICY_STREAM)`), the degradation seed (`mix(s, DEGRADE_STREAM)`)
//! and the ordering-log rng (`mix(s, LOG_STREAM)`), so each component is
//! reproducible on its own.
//!
//! Sampled orderings are drawn once per agent per timestep; PIBT backtracking
//! inside that timestep reuses them.

mod stats;
mod sweep;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bench_io::RunRecord;
use crate::grid::{flowtime, makespan, validate_paths, Cell, Instance, PathSet};
use crate::heuristics::{backward_dijkstra, degrade, HeuristicError, HeuristicTable};
use crate::lacam::{lacam_solve, Limits, DEFAULT_NODE_CAP};
use crate::pibt::{cs_naive_step, initial_priorities, priority_order, update_priorities, PibtPlanner};
use crate::policy::{
    sampled_ordering, strict_ordering, ExternalPolicy, OrderingSource, PolicyError, PolicyProvider, RankMode,
    SampleMode, SoftmaxHeuristicPolicy, UniformPolicy, DEFAULT_STEP_TIMEOUT,
};
use crate::seeds::{mix, DEGRADE_STREAM, LOG_STREAM, POLICY_STREAM, SOLVER_STREAM};

pub use stats::{histogram_csv, ordering_histogram, read_log, write_log, HistogramKey, LogEntry, OrderingHistogram};
pub use sweep::{aggregate, bench_sweep, expand_sweep, expand_with, noise_study, CellConfig, Job, SweepConfig, SweepError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algo {
    Pibt,
    Lacam,
}

impl Algo {
    pub fn label(self) -> &'static str {
        match self {
            Algo::Pibt => "pibt",
            Algo::Lacam => "lacam",
        }
    }
}

impl FromStr for Algo {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "pibt" | "onestep-pibt" => Ok(Algo::Pibt),
            "lacam" => Ok(Algo::Lacam),
            _ => Err(format!("unknown algo `{s}` (expected pibt|lacam)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shield {
    Naive,
    Pibt,
}

impl FromStr for Shield {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "naive" => Ok(Shield::Naive),
            "pibt" => Ok(Shield::Pibt),
            _ => Err(format!("unknown shield `{s}` (expected naive|pibt)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeuristicSpec {
    Bd,
    Manhattan,
}

impl FromStr for HeuristicSpec {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "bd" => Ok(HeuristicSpec::Bd),
            "manhattan" => Ok(HeuristicSpec::Manhattan),
            _ => Err(format!("unknown heuristic `{s}` (expected bd|manhattan)")),
        }
    }
}

impl fmt::Display for HeuristicSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HeuristicSpec::Bd => "bd",
            HeuristicSpec::Manhattan => "manhattan",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PolicySpec {
    None,
    Uniform,
    Softmax { temperature: f64, kappa: f64 },
    External { cmd: String },
}

impl FromStr for PolicySpec {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "none" => return Ok(PolicySpec::None),
            "uniform" => return Ok(PolicySpec::Uniform),
            _ => {}
        }
        if let Some(cmd) = s.strip_prefix("external:") {
            if cmd.trim().is_empty() {
                return Err("external policy needs a command".into());
            }
            return Ok(PolicySpec::External { cmd: cmd.to_string() });
        }
        if let Some(args) = s.strip_prefix("softmax:") {
            let (t, k) = args
                .split_once(',')
                .ok_or_else(|| format!("expected softmax:TAU,KAPPA, got `{s}`"))?;
            let num = |v: &str| v.trim().parse::<f64>().map_err(|_| format!("bad number `{v}` in `{s}`"));
            return Ok(PolicySpec::Softmax {
                temperature: num(t)?,
                kappa: num(k)?,
            });
        }
        Err(format!("unknown policy `{s}` (expected none|uniform|softmax:TAU,KAPPA|external:CMD)"))
    }
}

impl fmt::Display for PolicySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicySpec::None => f.write_str("none"),
            PolicySpec::Uniform => f.write_str("uniform"),
            PolicySpec::Softmax { temperature, kappa } => write!(f, "softmax:{temperature},{kappa}"),
            PolicySpec::External { cmd } => write!(f, "external:{cmd}"),
        }
    }
}

/// Everything needed to run one solver on one instance.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub map_name: String,
    pub scen_name: String,
    pub algo: Algo,
    /// One-step loops only.
    pub shield: Shield,
    pub order: RankMode,
    pub sample: SampleMode,
    pub policy: PolicySpec,
    pub heuristic: HeuristicSpec,
    /// Degradation level K in percent applied to the ranking tables.
    pub noise_k: f64,
    pub seed: u64,
    pub timeout: Duration,
    /// One-step loops; `None` means `16 * (width + height)`.
    pub max_timesteps: Option<usize>,
    pub node_cap: usize,
    pub policy_timeout: Duration,
    /// Keep per-step ordering logs (needs a policy).
    pub log_orderings: bool,
    /// Label that identifies the compared method in aggregates.
    pub method: Option<String>,
}

impl Default for RunSpec {
    fn default() -> Self {
        Self {
            map_name: String::new(),
            scen_name: String::new(),
            algo: Algo::Pibt,
            shield: Shield::Pibt,
            order: RankMode::H,
            sample: SampleMode::Strict,
            policy: PolicySpec::None,
            heuristic: HeuristicSpec::Bd,
            noise_k: 0.0,
            seed: 0,
            timeout: Duration::from_secs(60),
            max_timesteps: None,
            node_cap: DEFAULT_NODE_CAP,
            policy_timeout: DEFAULT_STEP_TIMEOUT,
            log_orderings: false,
            method: None,
        }
    }
}

impl RunSpec {
    pub fn validate(&self) -> Result<(), String> {
        let has_policy = self.policy != PolicySpec::None;
        if self.algo == Algo::Pibt && self.shield == Shield::Naive && !has_policy {
            return Err("the naive shield needs a policy to propose actions".into());
        }
        if self.order.needs_policy() && !has_policy {
            return Err(format!("ordering `{}` needs a policy", self.order));
        }
        if !(0.0..=100.0).contains(&self.noise_k) {
            return Err(format!("noise K must lie in [0, 100], got {}", self.noise_k));
        }
        Ok(())
    }

    pub fn shield_label(&self) -> &'static str {
        match (self.algo, self.shield) {
            (Algo::Lacam, _) => "none",
            (_, Shield::Naive) => "naive",
            (_, Shield::Pibt) => "pibt",
        }
    }

    /// Default method label built from the settings that distinguish runs.
    pub fn method_label(&self) -> String {
        if let Some(m) = &self.method {
            return m.clone();
        }
        let mut s = format!("{}_{}_{}", self.algo.label(), self.heuristic, self.order);
        if self.algo == Algo::Pibt {
            s.push_str(&format!("_{}", self.shield_label()));
        }
        if self.order.needs_policy() || self.shield == Shield::Naive && self.algo == Algo::Pibt {
            s.push_str(&format!("_{}", self.sample));
        }
        if self.policy != PolicySpec::None {
            s.push_str(&format!("_{}", self.policy));
        }
        if self.noise_k > 0.0 {
            s.push_str(&format!("_K{}", self.noise_k));
        }
        s
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub record: RunRecord,
    /// Present on success.
    pub paths: Option<PathSet>,
    pub log: Vec<LogEntry>,
}

/// Exact cost-to-go table for every agent.
pub fn exact_tables(inst: &Instance) -> Result<Vec<Arc<HeuristicTable>>, HeuristicError> {
    inst.goals
        .iter()
        .map(|&g| backward_dijkstra(&inst.map, g).map(Arc::new))
        .collect()
}

/// Tables used to rank moves: exact or Manhattan, degraded at `k` with
/// per-agent seeds derived from `seed`.
pub fn ranking_tables(
    inst: &Instance,
    exact: &[Arc<HeuristicTable>],
    heuristic: HeuristicSpec,
    k: f64,
    seed: u64,
) -> Result<Vec<Arc<HeuristicTable>>, HeuristicError> {
    let base: Vec<Arc<HeuristicTable>> = match heuristic {
        HeuristicSpec::Bd => exact.to_vec(),
        HeuristicSpec::Manhattan => inst
            .goals
            .iter()
            .map(|&g| Arc::new(HeuristicTable::manhattan(&inst.map, g)))
            .collect(),
    };
    if k == 0.0 {
        return Ok(base);
    }
    let dseed = mix(seed, DEGRADE_STREAM);
    base.iter()
        .enumerate()
        .map(|(i, t)| degrade(t, k, mix(dseed, i as u64)).map(Arc::new))
        .collect()
}

pub fn default_max_timesteps(inst: &Instance) -> usize {
    16 * (inst.map.width() + inst.map.height()) as usize
}

fn build_policy(spec: &RunSpec, inst: &Instance, exact: &[Arc<HeuristicTable>]) -> Result<Option<Box<dyn PolicyProvider>>, PolicyError> {
    let pseed = mix(spec.seed, POLICY_STREAM);
    Ok(match &spec.policy {
        PolicySpec::None => None,
        PolicySpec::Uniform => Some(Box::new(UniformPolicy::new(inst.n_agents()))),
        PolicySpec::Softmax { temperature, kappa } => Some(Box::new(SoftmaxHeuristicPolicy::new(
            inst,
            exact,
            *temperature,
            *kappa,
            pseed,
        )?)),
        PolicySpec::External { cmd } => Some(Box::new(ExternalPolicy::spawn(cmd, inst, pseed, spec.policy_timeout)?)),
    })
}

fn base_record(spec: &RunSpec, inst: &Instance) -> RunRecord {
    let mut r = RunRecord {
        algo: spec.algo.label().into(),
        ordering_mode: spec.order.label().into(),
        shield: spec.shield_label().into(),
        map: spec.map_name.clone(),
        scen: spec.scen_name.clone(),
        n_agents: inst.n_agents(),
        seed: spec.seed as i64,
        ..RunRecord::default()
    };
    r.set_param("method", spec.method_label());
    r.set_param("heuristic", spec.heuristic);
    r.set_param("K", spec.noise_k);
    if let RankMode::Sum(x) = spec.order {
        r.set_param("R", x);
    }
    r.set_param("sample", spec.sample);
    r.set_param("policy", &spec.policy);
    r.set_param("timeout_s", spec.timeout.as_secs_f64());
    match spec.algo {
        Algo::Pibt => r.set_param("max_timesteps", spec.max_timesteps.unwrap_or_else(|| default_max_timesteps(inst))),
        Algo::Lacam => r.set_param("node_cap", spec.node_cap),
    }
    r
}

fn fail(mut record: RunRecord, reason: &str) -> RunOutput {
    record.success = false;
    record.flowtime = 0;
    record.makespan = 0;
    record.set_param("reason", reason);
    RunOutput {
        record,
        paths: None,
        log: Vec::new(),
    }
}

/// Run one spec on one instance. Setup and policy errors become failed
/// records with a `reason` parameter; successful paths are validated before
/// the record is returned.
pub fn run_instance(spec: &RunSpec, inst: &Instance) -> RunOutput {
    let started = Instant::now();
    let record = base_record(spec, inst);
    if let Err(e) = spec.validate() {
        return fail(record, &format!("invalid_spec: {e}"));
    }
    let exact = match exact_tables(inst) {
        Ok(t) => t,
        Err(e) => return fail(record, &format!("heuristic: {e}")),
    };
    let tables = match ranking_tables(inst, &exact, spec.heuristic, spec.noise_k, spec.seed) {
        Ok(t) => t,
        Err(e) => return fail(record, &format!("heuristic: {e}")),
    };
    let policy = match build_policy(spec, inst, &exact) {
        Ok(p) => p,
        Err(e) => return fail(record, &format!("policy: {e}")),
    };
    let mut source = match OrderingSource::new(inst.map.clone(), tables, spec.order, spec.sample, policy) {
        Ok(s) => s,
        Err(e) => return fail(record, &format!("policy: {e}")),
    };
    let start_dist: Vec<f64> = exact.iter().zip(&inst.starts).map(|(t, &s)| t.value(s)).collect();
    let init = initial_priorities(&start_dist);
    let mut out = match spec.algo {
        Algo::Pibt => run_onestep(spec, inst, &mut source, init, started, record),
        Algo::Lacam => run_lacam(spec, inst, &mut source, init, started, record),
    };
    let success = out.record.success;
    if let Some(p) = source.policy() {
        for (k, v) in p.stats() {
            out.record.set_param(k, v);
        }
    }
    source.finish(success);
    if let Some(paths) = &out.paths {
        let report = validate_paths(paths, inst);
        if !report.passed() {
            let mut failed = fail(out.record, "invalid_paths");
            failed.record.runtime_ms = started.elapsed().as_millis() as u64;
            return failed;
        }
    }
    out.record.runtime_ms = started.elapsed().as_millis() as u64;
    out
}

fn run_onestep(
    spec: &RunSpec,
    inst: &Instance,
    source: &mut OrderingSource,
    mut prio: Vec<crate::pibt::PriorityState>,
    started: Instant,
    mut record: RunRecord,
) -> RunOutput {
    let map = &*inst.map;
    let max_t = spec.max_timesteps.unwrap_or_else(|| default_max_timesteps(inst));
    let mut rng = ChaCha8Rng::seed_from_u64(mix(spec.seed, SOLVER_STREAM));
    let mut log_rng = ChaCha8Rng::seed_from_u64(mix(spec.seed, LOG_STREAM));
    let mut planner = PibtPlanner::new(map);
    let mut config: Vec<Cell> = inst.starts.clone();
    let mut configs = vec![config.clone()];
    let mut log = Vec::new();
    let mut reason = None;
    for t in 0.. {
        if config == inst.goals {
            break;
        }
        if t >= max_t {
            reason = Some("max_timesteps".to_string());
            break;
        }
        if started.elapsed() >= spec.timeout {
            reason = Some("timeout".to_string());
            break;
        }
        let orderings = match source.orderings(t, &config, &mut rng) {
            Ok(o) => o,
            Err(e) => {
                reason = Some(format!("policy: {e}"));
                break;
            }
        };
        if spec.log_orderings {
            if let Some(dists) = source.last_distributions() {
                for (i, d) in dists.iter().enumerate() {
                    log.push(LogEntry {
                        t,
                        agent: i,
                        at_goal: config[i] == inst.goals[i],
                        probs: *d.probs(),
                        strict: strict_ordering(d, &mut log_rng).indices(),
                        sampled: sampled_ordering(d, &mut log_rng).indices(),
                    });
                }
            }
        }
        let next = match spec.shield {
            Shield::Naive => {
                let proposed: Vec<_> = orderings.iter().map(|o| o.first()).collect();
                cs_naive_step(map, &config, &proposed).next
            }
            Shield::Pibt => {
                planner
                    .step(map, &config, &orderings, &priority_order(&prio), &[])
                    .expect("unconstrained PIBT always succeeds")
                    .next
            }
        };
        config = next.0;
        prio = update_priorities(&prio, &config, &inst.goals);
        configs.push(config.clone());
    }
    record.set_param("timesteps", configs.len() - 1);
    match reason {
        Some(r) => {
            let mut out = fail(record, &r);
            out.log = log;
            out
        }
        None => {
            let paths = PathSet::from_configurations(&configs);
            record.success = true;
            record.flowtime = flowtime(&paths, &inst.goals) as u64;
            record.makespan = makespan(&paths, &inst.goals) as u64;
            RunOutput {
                record,
                paths: Some(paths),
                log,
            }
        }
    }
}

fn run_lacam(
    spec: &RunSpec,
    inst: &Instance,
    source: &mut OrderingSource,
    init: Vec<crate::pibt::PriorityState>,
    started: Instant,
    mut record: RunRecord,
) -> RunOutput {
    let mut rng = ChaCha8Rng::seed_from_u64(mix(spec.seed, SOLVER_STREAM));
    let limits = Limits {
        timeout: spec.timeout.saturating_sub(started.elapsed()),
        node_cap: spec.node_cap,
    };
    match lacam_solve(inst, source, init, limits, &mut rng) {
        Err(e) => fail(record, &format!("policy: {e}")),
        Ok(res) => {
            record.hl_nodes = res.hl_nodes_generated as u64;
            record.set_param("status", res.status.label());
            record.set_param("hl_expanded", res.hl_nodes_expanded);
            record.set_param("ll_nodes", res.ll_nodes_generated);
            if !res.status.is_success() {
                let mut out = fail(record, res.status.label());
                out.record.hl_nodes = res.hl_nodes_generated as u64;
                return out;
            }
            record.success = true;
            record.flowtime = res.flowtime as u64;
            record.makespan = res.makespan as u64;
            RunOutput {
                record,
                paths: res.paths,
                log: Vec::new(),
            }
        }
    }
}
