#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use mapfboost::bench_io::{load_map, load_scen, ScenarioEntry};
use mapfboost::grid::{Action, Cell, GridMap};
use mapfboost::heuristics::{backward_dijkstra, HeuristicTable};
use mapfboost::policy::{rank_actions, ActionDistribution, RankMode, SampleMode};
use rand::seq::IteratorRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn bench_map() -> Arc<GridMap> {
    Arc::new(load_map(data_dir().join("random-32-32-10.map")).unwrap())
}

/// Scenario files 1..=n of the benchmark, labelled by file name.
pub fn bench_scens(n: usize) -> Vec<(String, Vec<ScenarioEntry>)> {
    (1..=n)
        .map(|i| {
            let name = format!("random-32-32-10-random-{i}.scen");
            (name.clone(), load_scen(data_dir().join("scen-random").join(&name)).unwrap())
        })
        .collect()
}

/// Distribution whose five probabilities differ pairwise by at least `gap`.
pub fn distinct_distribution(rng: &mut ChaCha8Rng, gap: f64) -> ActionDistribution {
    loop {
        let w: [f64; 5] = std::array::from_fn(|_| -rng.gen::<f64>().ln());
        let d = ActionDistribution::from_weights(w);
        let p = d.probs();
        let ok = (0..5).all(|i| (i + 1..5).all(|j| (p[i] - p[j]).abs() >= gap));
        if ok {
            return d;
        }
    }
}

/// Random distribution, sometimes with zero entries.
pub fn random_distribution(rng: &mut ChaCha8Rng) -> ActionDistribution {
    let zeros = rng.gen_range(0..3);
    let mut w: [f64; 5] = std::array::from_fn(|_| -rng.gen::<f64>().ln());
    for i in (0..5).choose_multiple(rng, zeros) {
        w[i] = 0.0;
    }
    ActionDistribution::from_weights(w)
}

/// A random free cell and the exact table of a random goal.
pub fn random_cell_and_table(map: &GridMap, rng: &mut ChaCha8Rng) -> (Cell, HeuristicTable) {
    let cell = map.free_cells().choose(rng).unwrap();
    let goal = map.free_cells().choose(rng).unwrap();
    (cell, backward_dijkstra(map, goal).unwrap())
}

pub fn rank(
    map: &GridMap,
    cell: Cell,
    h: &HeuristicTable,
    d: &ActionDistribution,
    mode: RankMode,
    rng: &mut ChaCha8Rng,
) -> [Action; 5] {
    *rank_actions(map, cell, h, Some(d), mode, SampleMode::Strict, &|_| false, rng)
        .unwrap()
        .actions()
}

/// The three ordering identities; `Err` names the first that fails.
pub fn check_ordering_algebra(
    map: &GridMap,
    cell: Cell,
    h: &HeuristicTable,
    d: &ActionDistribution,
    rng: &mut ChaCha8Rng,
) -> Result<(), String> {
    let hv = |a: Action| map.apply_action(cell, a).map(|t| h.value(t));
    let best = Action::ALL
        .iter()
        .filter_map(|&a| hv(a))
        .fold(f64::INFINITY, f64::min);
    let top = rank(map, cell, h, d, RankMode::Sum(0.0), rng)[0];
    if hv(top) != Some(best) && best.is_finite() {
        return Err(format!("sum(0) picked {top} at {cell}"));
    }
    let (s, t) = (rank(map, cell, h, d, RankMode::Sum(0.5), rng), rank(map, cell, h, d, RankMode::Tie, rng));
    if s != t {
        return Err(format!("sum(0.5) {s:?} != tie {t:?} at {cell}"));
    }
    let (s, p) = (rank(map, cell, h, d, RankMode::Sum(1e6), rng), rank(map, cell, h, d, RankMode::Pi, rng));
    if s != p {
        return Err(format!("sum(1e6) {s:?} != pi {p:?} at {cell}"));
    }
    Ok(())
}

/// Empirical `m[a][k]` over `draws` sampled orderings.
pub fn sampled_marginals(d: &ActionDistribution, draws: usize, rng: &mut ChaCha8Rng) -> [[f64; 5]; 5] {
    let mut m = [[0.0; 5]; 5];
    for _ in 0..draws {
        let o = mapfboost::policy::sampled_ordering(d, rng);
        for (k, a) in o.iter().enumerate() {
            m[a.index()][k] += 1.0;
        }
    }
    m.map(|row| row.map(|c| c / draws as f64))
}
