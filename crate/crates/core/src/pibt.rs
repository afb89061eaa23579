//! Priority Inheritance with Backtracking as a one-step configuration
//! generator, plus the two collision shields built on top of it.

use rand::Rng;
use thiserror::Error;

use crate::grid::{validate_step, Action, Cell, Configuration, GridMap};
use crate::policy::{to_ordering, ActionDistribution, ActionOrdering, SampleMode};

/// Dynamic priority: steps since the agent last rested at its goal plus a
/// fixed fractional tiebreak.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorityState {
    pub elapsed: u64,
    pub tiebreak: f64,
}

impl PriorityState {
    #[inline]
    pub fn value(&self) -> f64 {
        self.elapsed as f64 + self.tiebreak
    }
}

/// Initial priorities: agents further from their goal get the larger
/// tiebreak. `dist[i]` is agent i's cost-to-go from its start.
pub fn initial_priorities(dist: &[f64]) -> Vec<PriorityState> {
    let n = dist.len();
    let mut by_dist: Vec<usize> = (0..n).collect();
    by_dist.sort_by(|&a, &b| dist[b].total_cmp(&dist[a]).then(a.cmp(&b)));
    let mut out = vec![
        PriorityState {
            elapsed: 0,
            tiebreak: 0.0
        };
        n
    ];
    for (rank, &agent) in by_dist.iter().enumerate() {
        out[agent].tiebreak = (n - 1 - rank) as f64 / n as f64;
    }
    out
}

/// Reset agents standing on their goal, age everybody else.
pub fn update_priorities(prio: &[PriorityState], config: &[Cell], goals: &[Cell]) -> Vec<PriorityState> {
    prio.iter()
        .zip(config.iter().zip(goals))
        .map(|(p, (c, g))| PriorityState {
            elapsed: if c == g { 0 } else { p.elapsed + 1 },
            tiebreak: p.tiebreak,
        })
        .collect()
}

/// Agents sorted by descending priority.
pub fn priority_order(prio: &[PriorityState]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..prio.len()).collect();
    order.sort_by(|&a, &b| prio[b].value().total_cmp(&prio[a].value()).then(a.cmp(&b)));
    order
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepResult {
    pub moves: Vec<Action>,
    pub next: Configuration,
}

/// The given vertex constraints cannot all be met in one step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("constraints cannot be satisfied in one step")]
pub struct Infeasible;

const NONE: u32 = u32::MAX;

/// Reusable PIBT scratch space for one map.
#[derive(Debug, Clone)]
pub struct PibtPlanner {
    occ_now: Vec<u32>,
    occ_next: Vec<u32>,
    to: Vec<u32>,
}

impl PibtPlanner {
    pub fn new(map: &GridMap) -> Self {
        Self {
            occ_now: vec![NONE; map.num_cells()],
            occ_next: vec![NONE; map.num_cells()],
            to: Vec::new(),
        }
    }

    /// One PIBT step. Agents are processed in `order` (descending priority);
    /// `constraints` pin agents to cells before anyone else plans.
    pub fn step(
        &mut self,
        map: &GridMap,
        from: &[Cell],
        orderings: &[ActionOrdering],
        order: &[usize],
        constraints: &[(usize, Cell)],
    ) -> Result<StepResult, Infeasible> {
        assert_eq!(from.len(), orderings.len());
        let n = from.len();
        self.to.clear();
        self.to.resize(n, NONE);
        for (i, &c) in from.iter().enumerate() {
            self.occ_now[map.index(c)] = i as u32;
        }
        let result = self.run(map, from, orderings, order, constraints);
        for &c in from {
            self.occ_now[map.index(c)] = NONE;
        }
        for &v in &self.to {
            if v != NONE {
                self.occ_next[v as usize] = NONE;
            }
        }
        result
    }

    fn run(
        &mut self,
        map: &GridMap,
        from: &[Cell],
        orderings: &[ActionOrdering],
        order: &[usize],
        constraints: &[(usize, Cell)],
    ) -> Result<StepResult, Infeasible> {
        for &(i, c) in constraints {
            if self.to[i] != NONE || !map.is_free(c) || !from[i].is_adjacent_or_same(c) {
                return Err(Infeasible);
            }
            let v = map.index(c);
            if self.occ_next[v] != NONE {
                return Err(Infeasible);
            }
            let j = self.occ_now[v];
            if j != NONE && j as usize != i && self.to[j as usize] == map.index(from[i]) as u32 {
                return Err(Infeasible);
            }
            self.to[i] = v as u32;
            self.occ_next[v] = i as u32;
        }
        for &k in order {
            if self.to[k] == NONE && !self.plan(k, map, from, orderings) {
                return Err(Infeasible);
            }
        }
        let next: Configuration = self.to.iter().map(|&v| map.cell(v as usize)).collect();
        let moves = from
            .iter()
            .zip(next.iter())
            .map(|(&a, &b)| Action::between(a, b).expect("PIBT moves are unit steps"))
            .collect();
        Ok(StepResult { moves, next })
    }

    fn plan(&mut self, k: usize, map: &GridMap, from: &[Cell], orderings: &[ActionOrdering]) -> bool {
        let s = map.index(from[k]) as u32;
        for a in orderings[k].iter() {
            let Some(target) = map.apply_action(from[k], a) else {
                continue;
            };
            let v = map.index(target);
            if self.occ_next[v] != NONE {
                continue;
            }
            let j = self.occ_now[v];
            if j != NONE && j as usize != k && self.to[j as usize] == s {
                continue;
            }
            self.to[k] = v as u32;
            self.occ_next[v] = k as u32;
            if j != NONE && j as usize != k && self.to[j as usize] == NONE && !self.plan(j as usize, map, from, orderings) {
                // j stays put on v and now owns it.
                continue;
            }
            return true;
        }
        self.to[k] = s;
        self.occ_next[s as usize] = k as u32;
        false
    }
}

/// Stand-alone PIBT step; see [`PibtPlanner::step`].
pub fn pibt_step(
    map: &GridMap,
    config: &[Cell],
    orderings: &[ActionOrdering],
    priorities: &[PriorityState],
    constraints: &[(usize, Cell)],
) -> Result<StepResult, Infeasible> {
    PibtPlanner::new(map).step(map, config, orderings, &priority_order(priorities), constraints)
}

/// Naive collision shield: every agent involved in a conflict waits, repeated
/// until no conflicts remain.
pub fn cs_naive_step(map: &GridMap, config: &[Cell], proposed: &[Action]) -> StepResult {
    assert_eq!(config.len(), proposed.len());
    let mut moves = proposed.to_vec();
    loop {
        let next: Vec<Cell> = config
            .iter()
            .zip(&mut moves)
            .map(|(&c, a)| match map.apply_action(c, *a) {
                Some(n) => n,
                None => {
                    *a = Action::Wait;
                    c
                }
            })
            .collect();
        let conflicts = validate_step(config, &next, map);
        if conflicts.is_empty() {
            return StepResult {
                moves,
                next: Configuration(next),
            };
        }
        for c in conflicts {
            match c {
                crate::grid::Conflict::Vertex { a, b, .. } | crate::grid::Conflict::Edge { a, b } => {
                    moves[a] = Action::Wait;
                    moves[b] = Action::Wait;
                }
                crate::grid::Conflict::Obstacle { agent, .. } | crate::grid::Conflict::NonAdjacent { agent, .. } => {
                    moves[agent] = Action::Wait;
                }
            }
        }
    }
}

/// PIBT collision shield: turn each distribution into an ordering and run an
/// unconstrained PIBT step.
pub fn cs_pibt_step<R: Rng + ?Sized>(
    map: &GridMap,
    config: &[Cell],
    dists: &[ActionDistribution],
    priorities: &[PriorityState],
    sample: SampleMode,
    rng: &mut R,
) -> StepResult {
    let orderings: Vec<ActionOrdering> = dists.iter().map(|d| to_ordering(d, sample, rng)).collect();
    pibt_step(map, config, &orderings, priorities, &[]).expect("unconstrained PIBT always succeeds")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use Action::*;

    fn c(x: u32, y: u32) -> Cell {
        Cell::new(x, y)
    }

    fn ord(first: &[Action]) -> ActionOrdering {
        let mut v: Vec<Action> = first.to_vec();
        for a in Action::ALL {
            if !v.contains(&a) {
                v.push(a);
            }
        }
        ActionOrdering::new(v.try_into().unwrap()).unwrap()
    }

    fn prio(values: &[f64]) -> Vec<PriorityState> {
        values
            .iter()
            .map(|&v| PriorityState {
                elapsed: v.floor() as u64,
                tiebreak: v.fract(),
            })
            .collect()
    }

    #[test]
    fn disjoint_top_actions() {
        let m = GridMap::empty(4, 4).unwrap();
        let r = pibt_step(&m, &[c(0, 0), c(3, 3)], &[ord(&[Right]), ord(&[Up])], &prio(&[1.5, 0.5]), &[]).unwrap();
        assert_eq!(r.moves, vec![Right, Up]);
        assert_eq!(r.next.0, vec![c(1, 0), c(3, 2)]);
    }

    #[test]
    fn higher_priority_wins_contested_cell() {
        // A at (0,1) and B at (2,1) both want (1,1).
        let m = GridMap::empty(3, 3).unwrap();
        let r = pibt_step(
            &m,
            &[c(0, 1), c(2, 1)],
            &[ord(&[Right]), ord(&[Left, Up])],
            &prio(&[2.5, 1.5]),
            &[],
        )
        .unwrap();
        assert_eq!(r.moves, vec![Right, Up]);
        let r = pibt_step(
            &m,
            &[c(0, 1), c(2, 1)],
            &[ord(&[Right, Down]), ord(&[Left, Up])],
            &prio(&[1.5, 2.5]),
            &[],
        )
        .unwrap();
        assert_eq!(r.moves, vec![Down, Left]);
    }

    #[test]
    fn corridor_backtracking() {
        // 1-wide corridor: A at (0,0) wants Right into B at (1,0); B can only
        // escape Right, which is blocked. A must fall back.
        let m = GridMap::new(3, 2, [c(2, 0), c(1, 1)]).unwrap();
        let r = pibt_step(
            &m,
            &[c(0, 0), c(1, 0)],
            &[ord(&[Right, Down]), ord(&[Wait])],
            &prio(&[2.5, 1.5]),
            &[],
        )
        .unwrap();
        assert_eq!(r.moves, vec![Down, Wait]);
    }

    #[test]
    fn priority_inheritance_pushes_occupant() {
        let m = GridMap::empty(4, 1).unwrap();
        let r = pibt_step(
            &m,
            &[c(0, 0), c(1, 0)],
            &[ord(&[Right]), ord(&[Wait, Left, Right])],
            &prio(&[2.5, 1.5]),
            &[],
        )
        .unwrap();
        assert_eq!(r.moves, vec![Right, Right]);
    }

    #[test]
    fn no_swaps() {
        let m = GridMap::empty(2, 1).unwrap();
        let r = pibt_step(&m, &[c(0, 0), c(1, 0)], &[ord(&[Right]), ord(&[Left])], &prio(&[1.5, 0.5]), &[]).unwrap();
        assert_eq!(r.moves, vec![Wait, Wait]);
    }

    #[test]
    fn constraints_are_honoured_or_infeasible() {
        let m = GridMap::empty(3, 3).unwrap();
        let p = prio(&[1.5, 0.5]);
        let o = [ord(&[Right]), ord(&[Wait])];
        let r = pibt_step(&m, &[c(0, 0), c(2, 2)], &o, &p, &[(0, c(0, 1))]).unwrap();
        assert_eq!(r.next[0], c(0, 1));
        assert_eq!(pibt_step(&m, &[c(0, 0), c(2, 2)], &o, &p, &[(0, c(2, 0))]), Err(Infeasible));
        assert_eq!(
            pibt_step(&m, &[c(0, 0), c(1, 0)], &o, &p, &[(0, c(1, 0)), (1, c(0, 0))]),
            Err(Infeasible)
        );
        assert_eq!(
            pibt_step(&m, &[c(0, 0), c(2, 0)], &o, &p, &[(0, c(1, 0)), (1, c(1, 0))]),
            Err(Infeasible)
        );
        // Agent 1 would have to stay on the cell agent 0 is pinned to.
        let m1 = GridMap::empty(2, 1).unwrap();
        assert_eq!(
            pibt_step(&m1, &[c(0, 0), c(1, 0)], &o, &p, &[(0, c(1, 0))]),
            Err(Infeasible)
        );
    }

    #[test]
    fn priority_updates() {
        let p = vec![
            PriorityState { elapsed: 7, tiebreak: 0.5 },
            PriorityState { elapsed: 0, tiebreak: 0.25 },
        ];
        let u = update_priorities(&p, &[c(1, 1), c(0, 0)], &[c(1, 1), c(2, 2)]);
        assert_eq!(u[0].elapsed, 0);
        assert_eq!(u[1].elapsed, 1);
        assert_eq!(u[0].tiebreak, 0.5);
    }

    #[test]
    fn relative_order_is_stable_off_goal() {
        let mut p = initial_priorities(&[3.0, 9.0]);
        for _ in 0..50 {
            p = update_priorities(&p, &[c(0, 0), c(0, 1)], &[c(5, 5), c(6, 6)]);
            assert_eq!(priority_order(&p), vec![1, 0]);
        }
    }

    #[test]
    fn initial_tiebreaks_distinct() {
        let p = initial_priorities(&[4.0, 4.0, 10.0, f64::INFINITY]);
        let mut tb: Vec<f64> = p.iter().map(|s| s.tiebreak).collect();
        assert_eq!(priority_order(&p), vec![3, 2, 0, 1]);
        tb.sort_by(f64::total_cmp);
        tb.dedup();
        assert_eq!(tb.len(), 4);
        assert!(tb.iter().all(|&t| (0.0..1.0).contains(&t)));
    }

    #[test]
    fn naive_shield_cases() {
        let m = GridMap::empty(4, 3).unwrap();
        let r = cs_naive_step(&m, &[c(0, 0), c(3, 2)], &[Right, Left]);
        assert_eq!(r.moves, vec![Right, Left]);
        let r = cs_naive_step(&m, &[c(0, 1), c(2, 1)], &[Right, Left]);
        assert_eq!(r.moves, vec![Wait, Wait]);
        // Blue and green collide, orange was following blue and must stop too.
        let r = cs_naive_step(&m, &[c(0, 1), c(2, 1), c(0, 0)], &[Right, Left, Down]);
        assert_eq!(r.moves, vec![Wait, Wait, Wait]);
        assert!(validate_step(&[c(0, 1), c(2, 1), c(0, 0)], &r.next, &m).is_empty());
        let r = cs_naive_step(&m, &[c(0, 0)], &[Up]);
        assert_eq!(r.moves, vec![Wait]);
    }

    #[test]
    fn cs_pibt_with_deterministic_dists_is_argmax() {
        let m = GridMap::empty(4, 4).unwrap();
        let dists = [ActionDistribution::deterministic(Down), ActionDistribution::deterministic(Left)];
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        for mode in [SampleMode::Strict, SampleMode::Sampled] {
            let r = cs_pibt_step(&m, &[c(0, 0), c(3, 3)], &dists, &initial_priorities(&[1.0, 2.0]), mode, &mut rng);
            assert_eq!(r.moves, vec![Down, Left]);
        }
    }

    use rand::SeedableRng;

    fn arb_case() -> impl Strategy<Value = (Vec<bool>, Vec<usize>, Vec<[usize; 5]>, Vec<f64>)> {
        (
            proptest::collection::vec(prop::bool::weighted(0.15), 25),
            Just((0..25).collect::<Vec<usize>>()).prop_shuffle(),
            proptest::collection::vec(Just([0usize, 1, 2, 3, 4]).prop_shuffle(), 8),
            proptest::collection::vec(0.0f64..10.0, 8),
        )
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(2000))]
        #[test]
        fn steps_are_always_valid((blocked, cells, ords, pr) in arb_case(), n in 1usize..8) {
            let blocked_cells: Vec<Cell> = (0..25).filter(|&i| blocked[i]).map(|i| c(i as u32 % 5, i as u32 / 5)).collect();
            let m = GridMap::new(5, 5, blocked_cells).unwrap();
            let config: Vec<Cell> = cells.iter().map(|&i| c(i as u32 % 5, i as u32 / 5)).filter(|&x| m.is_free(x)).take(n).collect();
            let k = config.len();
            let orderings: Vec<ActionOrdering> = ords[..k].iter().map(|&o| ActionOrdering::from_indices(o).unwrap()).collect();
            let p = prio(&pr[..k]);
            let r = pibt_step(&m, &config, &orderings, &p, &[]).unwrap();
            prop_assert!(validate_step(&config, &r.next, &m).is_empty());
            for (i, (&from, &a)) in config.iter().zip(&r.moves).enumerate() {
                prop_assert_eq!(m.apply_action(from, a), Some(r.next[i]));
            }
            let again = pibt_step(&m, &config, &orderings, &p, &[]).unwrap();
            prop_assert_eq!(again, r);
        }
    }
}
