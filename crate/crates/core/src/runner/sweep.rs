//! Sweep files, parallel execution and aggregation.
//!
//! A sweep file is TOML:
//!
//! ```toml
//! map = "data/random-32-32-10.map"
//! scen_dir = "data/scen-random"   # or: scens = ["a.scen", "b.scen"]
//! scen_limit = 25                 # optional
//! agents = [50, 100]
//! seeds = [0, 1, 2, 3, 4]
//! timeout = 60.0                  # seconds per run
//! threads = 0                     # 0: one per core
//!
//! [[cell]]
//! name = "lacam_bd"               # method label in aggregates
//! algo = "lacam"
//! heuristic = "bd"
//! noise_k = [0, 10, 20]           # optional, scalar or list
//! order = "h"
//! group = "main"                  # methods compared for the cost protocol
//! ```
//!
//! Aggregate rows use `scen = ALL`, `seed = -1` and carry
//! `kind=aggregate`, `success_rate`, `mean_cost` and the number of instances
//! the cost is averaged over. Mean path cost per agent follows the
//! common-solved protocol: inside a group and agent count, only methods with
//! success rate at least 0.5 take part, and their cost is averaged over the
//! (scen, seed) pairs every one of them solved. Other methods report the mean
//! over their own solved runs with `cost_protocol=own`.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use rayon::prelude::*;
use serde::Deserialize;
use thiserror::Error;

use super::{run_instance, Algo, HeuristicSpec, PolicySpec, RunOutput, RunSpec, Shield};
use crate::bench_io::{load_map, load_scen, make_instance, BenchIoError, InstanceError, RunRecord, ScenarioEntry};
use crate::grid::{GridMap, Instance};
use crate::policy::{RankMode, SampleMode};

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("cannot read sweep file {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("bad sweep file: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("{path}: {source}")]
    Bench { path: PathBuf, source: BenchIoError },
    #[error("{scen} with {n} agents: {source}")]
    Instance { scen: String, n: usize, source: InstanceError },
    #[error("cell `{cell}`: {msg}")]
    Cell { cell: String, msg: String },
    #[error("{0}")]
    Config(String),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum OneOrMany {
    One(f64),
    Many(Vec<f64>),
}

fn default_noise() -> OneOrMany {
    OneOrMany::One(0.0)
}

fn default_str(s: &str) -> String {
    s.to_string()
}

/// One row of the method grid.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellConfig {
    pub name: Option<String>,
    #[serde(default = "CellConfig::d_algo")]
    pub algo: String,
    #[serde(default = "CellConfig::d_heuristic")]
    pub heuristic: String,
    #[serde(default = "default_noise")]
    noise_k: OneOrMany,
    #[serde(default = "CellConfig::d_order")]
    pub order: String,
    #[serde(default)]
    pub r: f64,
    #[serde(default = "CellConfig::d_sample")]
    pub sample: String,
    #[serde(default = "CellConfig::d_shield")]
    pub shield: String,
    #[serde(default = "CellConfig::d_policy")]
    pub policy: String,
    pub group: Option<String>,
    pub max_timesteps: Option<usize>,
    #[serde(default)]
    pub log_orderings: bool,
}

impl CellConfig {
    fn d_algo() -> String {
        default_str("pibt")
    }
    fn d_heuristic() -> String {
        default_str("bd")
    }
    fn d_order() -> String {
        default_str("h")
    }
    fn d_sample() -> String {
        default_str("strict")
    }
    fn d_shield() -> String {
        default_str("pibt")
    }
    fn d_policy() -> String {
        default_str("none")
    }

    pub fn noise_levels(&self) -> Vec<f64> {
        match &self.noise_k {
            OneOrMany::One(k) => vec![*k],
            OneOrMany::Many(v) => v.clone(),
        }
    }

    /// One spec per noise level; instance fields and seed are left blank.
    pub fn specs(&self, timeout: Duration, node_cap: Option<usize>) -> Result<Vec<RunSpec>, String> {
        let algo: Algo = self.algo.parse()?;
        let heuristic: HeuristicSpec = self.heuristic.parse()?;
        let order = RankMode::parse(&self.order, self.r)?;
        let sample: SampleMode = self.sample.parse()?;
        let shield: Shield = self.shield.parse()?;
        let policy: PolicySpec = self.policy.parse()?;
        let levels = self.noise_levels();
        let multi = levels.len() > 1;
        levels
            .into_iter()
            .map(|k| {
                let mut spec = RunSpec {
                    algo,
                    shield,
                    order,
                    sample,
                    policy: policy.clone(),
                    heuristic,
                    noise_k: k,
                    timeout,
                    max_timesteps: self.max_timesteps,
                    log_orderings: self.log_orderings,
                    ..RunSpec::default()
                };
                if let Some(cap) = node_cap {
                    spec.node_cap = cap;
                }
                spec.method = Some(match (&self.name, multi) {
                    (Some(n), true) => format!("{n}_K{k}"),
                    (Some(n), false) => n.clone(),
                    (None, _) => spec.method_label(),
                });
                spec.validate()?;
                Ok(spec)
            })
            .collect()
    }
}

fn d_seeds() -> Vec<u64> {
    vec![0]
}

fn d_timeout() -> f64 {
    60.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub map: PathBuf,
    #[serde(default)]
    pub scens: Vec<PathBuf>,
    pub scen_dir: Option<PathBuf>,
    pub scen_limit: Option<usize>,
    #[serde(default)]
    pub agents: Vec<usize>,
    #[serde(default = "d_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "d_timeout")]
    pub timeout: f64,
    pub node_cap: Option<usize>,
    #[serde(default)]
    pub threads: usize,
    pub log_dir: Option<PathBuf>,
    #[serde(default, rename = "cell")]
    pub cells: Vec<CellConfig>,
}

impl SweepConfig {
    pub fn parse(text: &str) -> Result<Self, SweepError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, SweepError> {
        let text = fs::read_to_string(path).map_err(|source| SweepError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::parse(&text)?;
        if let Some(base) = path.parent() {
            cfg.rebase(base);
        }
        Ok(cfg)
    }

    /// Resolve relative paths against `base`.
    pub fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.map);
        self.scens.iter_mut().for_each(fix);
        if let Some(d) = self.scen_dir.as_mut() {
            fix(d);
        }
        if let Some(d) = self.log_dir.as_mut() {
            fix(d);
        }
    }

    /// Scenario files in sweep order: explicit list first, then the sorted
    /// `.scen` files of `scen_dir` (numeric suffixes sort numerically).
    pub fn scenario_files(&self) -> Result<Vec<PathBuf>, SweepError> {
        let mut files = self.scens.clone();
        if let Some(dir) = &self.scen_dir {
            let rd = fs::read_dir(dir).map_err(|source| SweepError::Read {
                path: dir.clone(),
                source,
            })?;
            let mut found: Vec<PathBuf> = rd
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|e| e == "scen"))
                .collect();
            found.sort_by_key(|p| scen_sort_key(p));
            files.extend(found);
        }
        if let Some(n) = self.scen_limit {
            files.truncate(n);
        }
        Ok(files)
    }
}

fn scen_sort_key(p: &Path) -> (String, u64) {
    let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let digits: String = stem.chars().rev().take_while(|c| c.is_ascii_digit()).collect();
    let num: String = digits.chars().rev().collect();
    let prefix = stem[..stem.len() - num.len()].to_string();
    (prefix, num.parse().unwrap_or(0))
}

/// One run of a sweep.
#[derive(Debug, Clone)]
pub struct Job {
    pub spec: RunSpec,
    pub instance: Arc<Instance>,
    pub group: String,
}

fn file_label(p: &Path) -> String {
    p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// All runs of a sweep: cells x noise levels x agent counts x scenarios x
/// seeds, in that nesting order.
pub fn expand_sweep(cfg: &SweepConfig) -> Result<Vec<Job>, SweepError> {
    let map: Arc<GridMap> = Arc::new(load_map(&cfg.map).map_err(|source| SweepError::Bench {
        path: cfg.map.clone(),
        source,
    })?);
    let mut scens: Vec<(String, Vec<ScenarioEntry>)> = Vec::new();
    for f in cfg.scenario_files()? {
        let entries = load_scen(&f).map_err(|source| SweepError::Bench {
            path: f.clone(),
            source,
        })?;
        scens.push((file_label(&f), entries));
    }
    expand_with(cfg, &file_label(&cfg.map), map, &scens)
}

/// Like [`expand_sweep`] with the map and scenarios already loaded.
pub fn expand_with(
    cfg: &SweepConfig,
    map_name: &str,
    map: Arc<GridMap>,
    scens: &[(String, Vec<ScenarioEntry>)],
) -> Result<Vec<Job>, SweepError> {
    if !(cfg.timeout > 0.0 && cfg.timeout.is_finite()) {
        return Err(SweepError::Config(format!("timeout must be positive, got {}", cfg.timeout)));
    }
    let timeout = Duration::from_secs_f64(cfg.timeout);
    let mut instances: BTreeMap<(usize, usize), Arc<Instance>> = BTreeMap::new();
    let mut jobs = Vec::new();
    for (ci, cell) in cfg.cells.iter().enumerate() {
        let cell_name = cell.name.clone().unwrap_or_else(|| format!("cell{ci}"));
        let specs = cell.specs(timeout, cfg.node_cap).map_err(|msg| SweepError::Cell {
            cell: cell_name.clone(),
            msg,
        })?;
        let group = cell.group.clone().unwrap_or_else(|| "all".into());
        for base in &specs {
            for &n in &cfg.agents {
                for (si, (scen_name, entries)) in scens.iter().enumerate() {
                    let inst = match instances.get(&(si, n)) {
                        Some(i) => i.clone(),
                        None => {
                            let i = Arc::new(make_instance(map.clone(), entries, n).map_err(|source| {
                                SweepError::Instance {
                                    scen: scen_name.clone(),
                                    n,
                                    source,
                                }
                            })?);
                            instances.insert((si, n), i.clone());
                            i
                        }
                    };
                    for &seed in &cfg.seeds {
                        let mut spec = base.clone();
                        spec.map_name = map_name.to_string();
                        spec.scen_name = scen_name.clone();
                        spec.seed = seed;
                        jobs.push(Job {
                            spec,
                            instance: inst.clone(),
                            group: group.clone(),
                        });
                    }
                }
            }
        }
    }
    Ok(jobs)
}

/// Run all jobs on a pool of `threads` workers (0: one per core). Results
/// come back in job order. `on_done` sees every finished run.
pub fn bench_sweep<F>(jobs: &[Job], threads: usize, on_done: F) -> Vec<RunOutput>
where
    F: Fn(usize, &RunOutput) + Sync,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .expect("thread pool");
    pool.install(|| {
        jobs.par_iter()
            .enumerate()
            .map(|(i, job)| {
                let mut out = run_instance(&job.spec, &job.instance);
                out.record.set_param("group", &job.group);
                on_done(i, &out);
                out
            })
            .collect()
    })
}

fn key_of(r: &RunRecord) -> (String, String) {
    (
        r.param("group").unwrap_or("all").to_string(),
        r.param("method").unwrap_or(&r.algo).to_string(),
    )
}

fn is_run(r: &RunRecord) -> bool {
    r.param("kind").is_none()
}

fn fmt_f(v: f64) -> String {
    format!("{v:.4}")
}

/// Aggregate rows, one per (group, agent count, method), in order of first
/// appearance.
pub fn aggregate(records: &[RunRecord]) -> Vec<RunRecord> {
    let runs: Vec<&RunRecord> = records.iter().filter(|r| is_run(r)).collect();
    let mut slots: Vec<((String, usize), Vec<String>)> = Vec::new();
    for r in &runs {
        let (g, m) = key_of(r);
        let k = (g, r.n_agents);
        match slots.iter_mut().find(|(key, _)| *key == k) {
            Some((_, methods)) => {
                if !methods.contains(&m) {
                    methods.push(m);
                }
            }
            None => slots.push((k, vec![m])),
        }
    }
    let mut out = Vec::new();
    for ((group, n), methods) in slots {
        let of = |m: &str| -> Vec<&RunRecord> {
            runs.iter()
                .copied()
                .filter(|r| r.n_agents == n && key_of(r) == (group.clone(), m.to_string()))
                .collect()
        };
        let rate = |rs: &[&RunRecord]| rs.iter().filter(|r| r.success).count() as f64 / rs.len().max(1) as f64;
        let qualified: Vec<&String> = methods.iter().filter(|m| rate(&of(m)) >= 0.5).collect();
        let solved_by = |m: &str| -> HashSet<(String, i64)> {
            of(m).iter()
                .filter(|r| r.success)
                .map(|r| (r.scen.clone(), r.seed))
                .collect()
        };
        let common: Option<HashSet<(String, i64)>> = qualified
            .iter()
            .map(|m| solved_by(m))
            .reduce(|a, b| a.intersection(&b).cloned().collect());
        for m in &methods {
            let rs = of(m);
            let first = rs[0];
            let solved = rs.iter().filter(|r| r.success).count();
            let mut agg = RunRecord {
                algo: first.algo.clone(),
                ordering_mode: first.ordering_mode.clone(),
                shield: first.shield.clone(),
                map: first.map.clone(),
                scen: "ALL".into(),
                n_agents: n,
                seed: -1,
                success: rate(&rs) >= 0.5,
                flowtime: 0,
                makespan: 0,
                runtime_ms: rs.iter().map(|r| r.runtime_ms).sum::<u64>() / rs.len() as u64,
                hl_nodes: rs.iter().map(|r| r.hl_nodes).sum::<u64>() / rs.len() as u64,
                params: Vec::new(),
            };
            agg.set_param("kind", "aggregate");
            agg.set_param("method", m);
            agg.set_param("group", &group);
            for key in ["heuristic", "K", "R", "sample", "policy"] {
                if let Some(v) = first.param(key) {
                    agg.set_param(key, v);
                }
            }
            agg.set_param("runs", rs.len());
            agg.set_param("solved", solved);
            agg.set_param("success_rate", fmt_f(rate(&rs)));
            let is_q = qualified.contains(&m);
            let costs: Vec<f64> = rs
                .iter()
                .filter(|r| r.success)
                .filter(|r| !is_q || common.as_ref().is_some_and(|c| c.contains(&(r.scen.clone(), r.seed))))
                .filter_map(|r| r.mean_cost())
                .collect();
            agg.set_param("cost_protocol", if is_q { "common" } else { "own" });
            agg.set_param("cost_instances", costs.len());
            if !costs.is_empty() {
                agg.set_param("mean_cost", fmt_f(costs.iter().sum::<f64>() / costs.len() as f64));
            }
            out.push(agg);
        }
    }
    out
}

/// Noise-study rows: for every method name of the form `BASE_K<k>` and
/// agent count, success rate and the ratio of its mean cost to the `K0`
/// variant over the (scen, seed) pairs both solved.
pub fn noise_study(records: &[RunRecord]) -> Vec<RunRecord> {
    let runs: Vec<&RunRecord> = records.iter().filter(|r| is_run(r)).collect();
    let split = |m: &str| -> Option<(String, f64)> {
        let (base, k) = m.rsplit_once("_K")?;
        Some((base.to_string(), k.parse().ok()?))
    };
    let mut keys: Vec<(String, usize, f64, String)> = Vec::new();
    for r in &runs {
        let m = key_of(r).1;
        if let Some((base, k)) = split(&m) {
            let key = (base, r.n_agents, k, m);
            if !keys.contains(&key) {
                keys.push(key);
            }
        }
    }
    let mut out = Vec::new();
    for (base, n, k, method) in &keys {
        let of = |m: &str| -> Vec<&RunRecord> {
            runs.iter()
                .copied()
                .filter(|r| r.n_agents == *n && key_of(r).1 == m)
                .collect()
        };
        let rs = of(method);
        let reference = keys
            .iter()
            .find(|(b, nn, kk, _)| b == base && nn == n && *kk == 0.0)
            .map(|(_, _, _, m)| of(m))
            .unwrap_or_default();
        let rate = rs.iter().filter(|r| r.success).count() as f64 / rs.len().max(1) as f64;
        let mut num = 0.0;
        let mut den = 0.0;
        let mut paired = 0usize;
        for r in rs.iter().filter(|r| r.success) {
            if let Some(z) = reference
                .iter()
                .find(|z| z.success && z.scen == r.scen && z.seed == r.seed)
            {
                num += r.mean_cost().unwrap_or(0.0);
                den += z.mean_cost().unwrap_or(0.0);
                paired += 1;
            }
        }
        let first = rs[0];
        let mut row = RunRecord {
            algo: first.algo.clone(),
            ordering_mode: first.ordering_mode.clone(),
            shield: first.shield.clone(),
            map: first.map.clone(),
            scen: "ALL".into(),
            n_agents: *n,
            seed: -1,
            success: rate >= 0.5,
            ..RunRecord::default()
        };
        row.set_param("kind", "noise");
        row.set_param("method", method);
        row.set_param("base", base);
        row.set_param("K", k);
        row.set_param("runs", rs.len());
        row.set_param("success_rate", fmt_f(rate));
        row.set_param("paired", paired);
        if paired > 0 {
            row.set_param("mean_cost", fmt_f(num / paired as f64));
            if den > 0.0 {
                row.set_param("cost_ratio", fmt_f(num / den));
            }
        }
        out.push(row);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(method: &str, n: usize, scen: &str, seed: i64, cost: Option<u64>) -> RunRecord {
        let mut r = RunRecord {
            algo: "lacam".into(),
            n_agents: n,
            scen: scen.into(),
            seed,
            success: cost.is_some(),
            flowtime: cost.unwrap_or(0) * n as u64,
            ..RunRecord::default()
        };
        r.set_param("method", method);
        r
    }

    #[test]
    fn parse_sweep_file() {
        let cfg = SweepConfig::parse(
            r#"
            map = "m.map"
            scens = ["a.scen"]
            agents = [2]
            seeds = [0, 1]
            [[cell]]
            name = "x"
            algo = "lacam"
            noise_k = [0, 20]
            [[cell]]
            order = "sum"
            r = 0.5
            policy = "softmax:0.5,20"
            "#,
        )
        .unwrap();
        assert_eq!(cfg.cells.len(), 2);
        let specs = cfg.cells[0].specs(Duration::from_secs(1), None).unwrap();
        assert_eq!(specs.len(), 2);
        assert_eq!(specs[1].method.as_deref(), Some("x_K20"));
        assert_eq!(cfg.cells[1].specs(Duration::from_secs(1), None).unwrap()[0].order, RankMode::Sum(0.5));
        assert!(SweepConfig::parse("map = 1").is_err());
        assert!(SweepConfig::parse("map = \"m\"\nbogus = 1").is_err());
        let bad = SweepConfig::parse("map = \"m\"\n[[cell]]\norder = \"tie\"").unwrap();
        assert!(bad.cells[0].specs(Duration::from_secs(1), None).is_err());
    }

    #[test]
    fn scen_files_sort_numerically() {
        let mut v: Vec<PathBuf> = ["r-10.scen", "r-2.scen", "r-1.scen"].iter().map(PathBuf::from).collect();
        v.sort_by_key(|p| scen_sort_key(p));
        assert_eq!(v[0], PathBuf::from("r-1.scen"));
        assert_eq!(v[2], PathBuf::from("r-10.scen"));
    }

    #[test]
    fn aggregation_uses_common_solved_instances() {
        let records = vec![
            rec("a", 10, "s1", 0, Some(10)),
            rec("a", 10, "s2", 0, Some(20)),
            rec("b", 10, "s1", 0, Some(30)),
            rec("b", 10, "s2", 0, None),
            rec("c", 10, "s1", 0, None),
            rec("c", 10, "s2", 0, None),
        ];
        let agg = aggregate(&records);
        assert_eq!(agg.len(), 3);
        let get = |m: &str, k: &str| agg.iter().find(|r| r.param("method") == Some(m)).unwrap().param(k).map(String::from);
        assert_eq!(get("a", "success_rate").unwrap(), "1.0000");
        assert_eq!(get("b", "success_rate").unwrap(), "0.5000");
        // a and b qualify; only s1 is solved by both.
        assert_eq!(get("a", "mean_cost").unwrap(), "10.0000");
        assert_eq!(get("b", "mean_cost").unwrap(), "30.0000");
        assert_eq!(get("c", "mean_cost"), None);
        assert_eq!(get("c", "cost_protocol").unwrap(), "own");
        assert!(agg.iter().all(|r| r.seed == -1 && r.scen == "ALL"));
        assert!(aggregate(&[]).is_empty());
    }

    #[test]
    fn noise_rows_pair_with_k0() {
        let records = vec![
            rec("l_K0", 5, "s1", 0, Some(10)),
            rec("l_K0", 5, "s2", 0, Some(10)),
            rec("l_K20", 5, "s1", 0, Some(200)),
            rec("l_K20", 5, "s2", 0, None),
        ];
        let rows = noise_study(&records);
        assert_eq!(rows.len(), 2);
        let k20 = &rows[1];
        assert_eq!(k20.param("cost_ratio"), Some("20.0000"));
        assert_eq!(k20.param("success_rate"), Some("0.5000"));
        assert_eq!(rows[0].param("cost_ratio"), Some("1.0000"));
    }
}
