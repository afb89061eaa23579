//! Brute-force oracles for tiny instances. Nothing here is fast; everything
//! is written to be obviously correct and independent of the solver code
//! paths it checks (only the grid types are shared).

use std::collections::{BinaryHeap, HashMap, HashSet, VecDeque};
use std::cmp::Reverse;
use std::sync::Arc;

use mapfboost::grid::{Action, Cell, GridMap, Instance, PathSet};
use mapfboost::policy::ActionDistribution;
use rand::seq::SliceRandom;
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Solvability {
    Solvable { makespan: usize, flowtime: usize },
    Unsolvable,
    /// State limit hit before the search finished.
    Inconclusive,
}

impl Solvability {
    pub fn is_solvable(self) -> Option<bool> {
        match self {
            Solvability::Solvable { .. } => Some(true),
            Solvability::Unsolvable => Some(false),
            Solvability::Inconclusive => None,
        }
    }
}

/// Cells reachable from `c` in one step, including `c`.
fn moves(map: &GridMap, c: Cell) -> Vec<Cell> {
    let mut v = vec![c];
    let (x, y) = (c.x as i64, c.y as i64);
    for (dx, dy) in [(0, -1), (0, 1), (-1, 0), (1, 0)] {
        let (nx, ny) = (x + dx, y + dy);
        if nx >= 0 && ny >= 0 && nx < map.width() as i64 && ny < map.height() as i64 {
            let n = Cell::new(nx as u32, ny as u32);
            if !map.is_blocked(n) {
                v.push(n);
            }
        }
    }
    v
}

/// Pairwise check of one joint transition: no shared target, no swap.
fn transition_ok(from: &[Cell], to: &[Cell]) -> bool {
    for i in 0..from.len() {
        for j in i + 1..from.len() {
            if to[i] == to[j] {
                return false;
            }
            if to[i] == from[j] && to[j] == from[i] && from[i] != from[j] {
                return false;
            }
        }
    }
    true
}

fn config_ok(map: &GridMap, config: &[Cell]) -> bool {
    let distinct: HashSet<&Cell> = config.iter().collect();
    distinct.len() == config.len() && config.iter().all(|&c| map.in_bounds(c) && !map.is_blocked(c))
}

/// Every joint successor of `config` without collisions. Empty when
/// `config` itself is invalid.
pub fn joint_successors(map: &GridMap, config: &[Cell]) -> Vec<Vec<Cell>> {
    if !config_ok(map, config) {
        return Vec::new();
    }
    let options: Vec<Vec<Cell>> = config.iter().map(|&c| moves(map, c)).collect();
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(config.len());
    fn rec(i: usize, options: &[Vec<Cell>], from: &[Cell], cur: &mut Vec<Cell>, out: &mut Vec<Vec<Cell>>) {
        if i == options.len() {
            if transition_ok(from, cur) {
                out.push(cur.clone());
            }
            return;
        }
        for &c in &options[i] {
            cur.push(c);
            rec(i + 1, options, from, cur, out);
            cur.pop();
        }
    }
    rec(0, &options, config, &mut cur, &mut out);
    out
}

/// All valid one-step joint moves from `config` as action vectors paired
/// with the resulting configuration.
pub fn exhaustive_onestep(map: &GridMap, config: &[Cell]) -> Vec<(Vec<Action>, Vec<Cell>)> {
    joint_successors(map, config)
        .into_iter()
        .map(|next| {
            let acts = config
                .iter()
                .zip(&next)
                .map(|(&a, &b)| {
                    Action::ALL
                        .into_iter()
                        .find(|&act| {
                            let (dx, dy) = act.delta();
                            a.x as i64 + dx == b.x as i64 && a.y as i64 + dy == b.y as i64
                        })
                        .expect("successor cells are unit steps")
                })
                .collect();
            (acts, next)
        })
        .collect()
}

/// Exhaustive joint-space search. Makespan by BFS over configurations,
/// flowtime by uniform-cost search over (configuration, agents resting for
/// good). `max_states` bounds each search.
pub fn joint_bfs(inst: &Instance, max_states: usize) -> Solvability {
    let map = &*inst.map;
    let start = inst.starts.clone();
    let goal = inst.goals.clone();

    let mut seen: HashSet<Vec<Cell>> = HashSet::from([start.clone()]);
    let mut queue = VecDeque::from([(start.clone(), 0usize)]);
    let mut makespan = None;
    while let Some((c, d)) = queue.pop_front() {
        if c == goal {
            makespan = Some(d);
            break;
        }
        for n in joint_successors(map, &c) {
            if seen.insert(n.clone()) {
                if seen.len() > max_states {
                    return Solvability::Inconclusive;
                }
                queue.push_back((n, d + 1));
            }
        }
    }
    let Some(makespan) = makespan else {
        return Solvability::Unsolvable;
    };

    // An agent standing on its goal may commit to stay forever; every step
    // costs one per uncommitted agent.
    let n = start.len();
    let full: u32 = (1 << n) - 1;
    let commits = |c: &[Cell], mask: u32| -> Vec<u32> {
        let free: Vec<usize> = (0..n).filter(|&i| mask & (1 << i) == 0 && c[i] == goal[i]).collect();
        (0..1u32 << free.len())
            .map(|sub| {
                let mut m = mask;
                for (b, &i) in free.iter().enumerate() {
                    if sub & (1 << b) != 0 {
                        m |= 1 << i;
                    }
                }
                m
            })
            .collect()
    };
    let mut best: HashMap<(Vec<Cell>, u32), usize> = HashMap::new();
    let mut heap = BinaryHeap::new();
    for m in commits(&start, 0) {
        best.insert((start.clone(), m), 0);
        heap.push(Reverse((0usize, start.clone(), m)));
    }
    while let Some(Reverse((cost, c, mask))) = heap.pop() {
        if mask == full {
            return Solvability::Solvable {
                makespan,
                flowtime: cost,
            };
        }
        if best.get(&(c.clone(), mask)).is_some_and(|&b| b < cost) {
            continue;
        }
        let step_cost = n - mask.count_ones() as usize;
        for next in joint_successors(map, &c) {
            if (0..n).any(|i| mask & (1 << i) != 0 && next[i] != c[i]) {
                continue;
            }
            for m in commits(&next, mask) {
                let key = (next.clone(), m);
                let nc = cost + step_cost;
                if best.get(&key).is_none_or(|&b| nc < b) {
                    if best.len() > max_states * (1 << n) {
                        return Solvability::Inconclusive;
                    }
                    best.insert(key, nc);
                    heap.push(Reverse((nc, next.clone(), m)));
                }
            }
        }
    }
    unreachable!("goal configuration is reachable, so full commitment is too")
}

/// Exact probability of every ordering under sequential sampling without
/// replacement. When the remaining mass is zero the rest is uniform.
pub fn plackett_luce_exact(d: &ActionDistribution) -> Vec<([usize; 5], f64)> {
    let p = d.probs();
    let mut out = Vec::with_capacity(120);
    let mut perm = [0usize; 5];
    fn rec(k: usize, used: u8, prob: f64, p: &[f64; 5], perm: &mut [usize; 5], out: &mut Vec<([usize; 5], f64)>) {
        if k == 5 {
            out.push((*perm, prob));
            return;
        }
        let left: Vec<usize> = (0..5).filter(|i| used & (1 << i) == 0).collect();
        let mass: f64 = left.iter().map(|&i| p[i]).sum();
        for &i in &left {
            let q = if mass > 0.0 { p[i] / mass } else { 1.0 / left.len() as f64 };
            perm[k] = i;
            rec(k + 1, used | (1 << i), prob * q, p, perm, out);
        }
    }
    rec(0, 0, 1.0, p, &mut perm, &mut out);
    out
}

/// `m[a][k]`: probability that action `a` lands at position `k`.
pub fn plackett_luce_marginals(d: &ActionDistribution) -> [[f64; 5]; 5] {
    let mut m = [[0.0; 5]; 5];
    for (perm, prob) in plackett_luce_exact(d) {
        for (k, &a) in perm.iter().enumerate() {
            m[a][k] += prob;
        }
    }
    m
}

/// Independent path checker: start/goal endpoints, unit moves, obstacles,
/// and pairwise vertex and swap conflicts at every timestep.
pub fn check_paths(paths: &PathSet, inst: &Instance) -> Result<(), String> {
    let n = inst.n_agents();
    if paths.paths.len() != n {
        return Err(format!("{} paths for {n} agents", paths.paths.len()));
    }
    let len = paths.paths.first().map_or(0, |p| p.len());
    if len == 0 || paths.paths.iter().any(|p| p.len() != len) {
        return Err("paths must share one non-zero length".into());
    }
    let map = &*inst.map;
    for (i, p) in paths.paths.iter().enumerate() {
        if p[0] != inst.starts[i] {
            return Err(format!("agent {i} does not start at its start"));
        }
        if p[len - 1] != inst.goals[i] {
            return Err(format!("agent {i} does not end at its goal"));
        }
        for (t, &c) in p.iter().enumerate() {
            if !map.in_bounds(c) || map.is_blocked(c) {
                return Err(format!("agent {i} on an obstacle at t={t}"));
            }
            if t > 0 && !moves(map, p[t - 1]).contains(&c) {
                return Err(format!("agent {i} jumps at t={t}"));
            }
        }
    }
    for t in 0..len {
        for i in 0..n {
            for j in i + 1..n {
                let (a, b) = (&paths.paths[i], &paths.paths[j]);
                if a[t] == b[t] {
                    return Err(format!("agents {i} and {j} share {} at t={t}", a[t]));
                }
                if t > 0 && a[t] == b[t - 1] && b[t] == a[t - 1] {
                    return Err(format!("agents {i} and {j} swap at t={t}"));
                }
            }
        }
    }
    Ok(())
}

/// The unsolvable two-agent swap in a 1x2 corridor.
pub fn corridor_swap() -> Instance {
    let map = Arc::new(GridMap::empty(2, 1).expect("valid map"));
    Instance::new(map, vec![Cell::new(0, 0), Cell::new(1, 0)], vec![Cell::new(1, 0), Cell::new(0, 0)])
        .expect("valid instance")
}

/// Random instance with at most `max_agents` agents on a map of at most
/// `max_side` x `max_side` cells, obstacles with probability `obstacle_p`.
/// Starts and goals are distinct free cells but need not be connected.
pub fn random_micro<R: Rng + ?Sized>(rng: &mut R, max_side: u32, max_agents: usize, obstacle_p: f64) -> Instance {
    loop {
        let w = rng.gen_range(1..=max_side);
        let h = rng.gen_range(1..=max_side);
        let blocked: Vec<Cell> = (0..w * h)
            .map(|i| Cell::new(i % w, i / w))
            .filter(|_| rng.gen_bool(obstacle_p))
            .collect();
        let map = GridMap::new(w, h, blocked).expect("cells in bounds");
        let mut free: Vec<Cell> = map.free_cells().collect();
        let n = rng.gen_range(1..=max_agents);
        if free.len() < n {
            continue;
        }
        free.shuffle(rng);
        let starts = free[..n].to_vec();
        free.shuffle(rng);
        let goals = free[..n].to_vec();
        return Instance::new(Arc::new(map), starts, goals).expect("distinct free endpoints");
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn swap_in_corridor_is_unsolvable() {
        assert_eq!(joint_bfs(&corridor_swap(), 1000), Solvability::Unsolvable);
    }

    #[test]
    fn crossing_on_two_by_two() {
        let map = Arc::new(GridMap::empty(2, 2).unwrap());
        let inst = Instance::new(map, vec![Cell::new(0, 0), Cell::new(1, 1)], vec![Cell::new(1, 1), Cell::new(0, 0)])
            .unwrap();
        assert_eq!(
            joint_bfs(&inst, 1000),
            Solvability::Solvable {
                makespan: 2,
                flowtime: 4
            }
        );
        // 4 cells, 2 agents: 12 valid configurations.
        let mut seen = HashSet::new();
        let mut q = VecDeque::from([inst.starts.clone()]);
        while let Some(c) = q.pop_front() {
            for n in joint_successors(&inst.map, &c) {
                if seen.insert(n.clone()) {
                    q.push_back(n);
                }
            }
        }
        assert_eq!(seen.len(), 12);
    }

    #[test]
    fn single_agent_makespan_is_distance() {
        let map = Arc::new(GridMap::new(3, 3, [Cell::new(1, 1)]).unwrap());
        let inst = Instance::new(map, vec![Cell::new(0, 0)], vec![Cell::new(2, 2)]).unwrap();
        assert_eq!(
            joint_bfs(&inst, 1000),
            Solvability::Solvable {
                makespan: 4,
                flowtime: 4
            }
        );
    }

    #[test]
    fn agent_on_goal_pays_for_stepping_aside() {
        // Agent 1 starts on its goal but must step aside for agent 0.
        let map = Arc::new(GridMap::new(3, 2, [Cell::new(0, 1), Cell::new(2, 1)]).unwrap());
        let inst = Instance::new(map, vec![Cell::new(0, 0), Cell::new(1, 0)], vec![Cell::new(2, 0), Cell::new(1, 0)])
            .unwrap();
        assert_eq!(
            joint_bfs(&inst, 1000),
            Solvability::Solvable {
                makespan: 2,
                flowtime: 2 + 2
            }
        );
    }

    #[test]
    fn onestep_enumeration() {
        let map = GridMap::empty(3, 3).unwrap();
        assert_eq!(exhaustive_onestep(&map, &[Cell::new(1, 1)]).len(), 5);
        assert_eq!(exhaustive_onestep(&map, &[Cell::new(0, 0)]).len(), 3);
        assert!(exhaustive_onestep(&map, &[Cell::new(0, 0), Cell::new(0, 0)]).is_empty());
        let corridor = GridMap::empty(2, 1).unwrap();
        // Both wait, or nothing: swapping and shared targets are out.
        let s = exhaustive_onestep(&corridor, &[Cell::new(0, 0), Cell::new(1, 0)]);
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].0, vec![Action::Wait, Action::Wait]);
    }

    #[test]
    fn plackett_luce_basics() {
        let u = plackett_luce_exact(&ActionDistribution::uniform());
        assert_eq!(u.len(), 120);
        assert!(u.iter().all(|(_, p)| (p - 1.0 / 120.0).abs() < 1e-12));
        let d = ActionDistribution::deterministic(Action::Up);
        let m = plackett_luce_marginals(&d);
        assert!((m[0][0] - 1.0).abs() < 1e-12);
        let d = ActionDistribution::new([0.55, 0.45, 0.0, 0.0, 0.0]).unwrap();
        let m = plackett_luce_marginals(&d);
        assert!((m[0][0] - 0.55).abs() < 1e-12);
        assert!((m[2][2] - 1.0 / 3.0).abs() < 1e-12);
        let total: f64 = plackett_luce_exact(&d).iter().map(|(_, p)| p).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn checker_spots_conflicts() {
        let inst = corridor_swap();
        let bad = PathSet::new(vec![
            vec![Cell::new(0, 0), Cell::new(1, 0)],
            vec![Cell::new(1, 0), Cell::new(0, 0)],
        ]);
        assert!(check_paths(&bad, &inst).unwrap_err().contains("swap"));
    }

    #[test]
    fn micro_instances_respect_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let i = random_micro(&mut rng, 4, 3, 0.2);
            assert!(i.map.width() <= 4 && i.map.height() <= 4);
            assert!((1..=3).contains(&i.n_agents()));
        }
    }
}
