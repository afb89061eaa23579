//! Cost-to-go tables.
//!
//! [`backward_dijkstra`] gives exact distances (unit costs, so a BFS from the
//! goal). [`HeuristicTable::manhattan`] ignores obstacles. [`degrade`] scales
//! every value by a frozen per-cell factor drawn from `[1 - K/100, 1]`, which
//! keeps the table admissible.

use std::collections::VecDeque;

use thiserror::Error;

use crate::grid::{Cell, GridMap};

#[derive(Debug, Error, PartialEq)]
pub enum HeuristicError {
    #[error("goal {0} is blocked or outside the map")]
    BlockedGoal(Cell),
    #[error("imperfection level K must lie in [0, 100], got {0}")]
    InvalidLevel(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeuristicKind {
    BackwardDijkstra,
    Manhattan,
    Degraded,
}

/// Per-cell cost-to-go towards one goal. Unreachable and blocked cells hold
/// `f64::INFINITY`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeuristicTable {
    goal: Cell,
    width: u32,
    kind: HeuristicKind,
    values: Vec<f64>,
}

impl HeuristicTable {
    pub fn goal(&self) -> Cell {
        self.goal
    }

    pub fn kind(&self) -> HeuristicKind {
        self.kind
    }

    fn idx(&self, c: Cell) -> usize {
        c.y as usize * self.width as usize + c.x as usize
    }

    /// Raw value; `INFINITY` when unreachable. Panics if `c` is off the map.
    #[inline]
    pub fn value(&self, c: Cell) -> f64 {
        self.values[self.idx(c)]
    }

    /// `None` for unreachable cells.
    pub fn get(&self, c: Cell) -> Option<f64> {
        let v = self.value(c);
        v.is_finite().then_some(v)
    }

    pub fn is_reachable(&self, c: Cell) -> bool {
        self.value(c).is_finite()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Obstacle-blind table; blocked cells are still marked unreachable.
    pub fn manhattan(map: &GridMap, goal: Cell) -> Self {
        let values = (0..map.num_cells())
            .map(|i| {
                let c = map.cell(i);
                if map.is_free(c) {
                    manhattan(c, goal) as f64
                } else {
                    f64::INFINITY
                }
            })
            .collect();
        Self {
            goal,
            width: map.width(),
            kind: HeuristicKind::Manhattan,
            values,
        }
    }
}

pub fn manhattan(a: Cell, b: Cell) -> u32 {
    a.x.abs_diff(b.x) + a.y.abs_diff(b.y)
}

/// Exact shortest-path distances from every free cell to `goal`.
pub fn backward_dijkstra(map: &GridMap, goal: Cell) -> Result<HeuristicTable, HeuristicError> {
    if !map.is_free(goal) {
        return Err(HeuristicError::BlockedGoal(goal));
    }
    let mut values = vec![f64::INFINITY; map.num_cells()];
    let mut queue = VecDeque::new();
    values[map.index(goal)] = 0.0;
    queue.push_back(goal);
    while let Some(c) = queue.pop_front() {
        let d = values[map.index(c)] + 1.0;
        for n in map.neighbors(c) {
            let slot = &mut values[map.index(n)];
            if slot.is_infinite() {
                *slot = d;
                queue.push_back(n);
            }
        }
    }
    Ok(HeuristicTable {
        goal,
        width: map.width(),
        kind: HeuristicKind::BackwardDijkstra,
        values,
    })
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Uniform draw in `[0, 1)` determined only by `(seed, index)`.
pub fn cell_uniform(seed: u64, index: usize) -> f64 {
    let z = splitmix64(splitmix64(seed) ^ (index as u64).wrapping_mul(0xd1b5_4a32_d192_ed03));
    (z >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// K% imperfect copy of `table`: each cell is scaled by its own
/// `e ~ U[1 - K/100, 1]`, frozen by `(seed, cell)`.
pub fn degrade(table: &HeuristicTable, k: f64, seed: u64) -> Result<HeuristicTable, HeuristicError> {
    if !(0.0..=100.0).contains(&k) {
        return Err(HeuristicError::InvalidLevel(k));
    }
    let spread = k / 100.0;
    let goal_idx = table.idx(table.goal);
    let values = table
        .values
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            if !v.is_finite() || i == goal_idx || spread == 0.0 {
                return v;
            }
            let e = 1.0 - spread * cell_uniform(seed, i);
            e * v
        })
        .collect();
    Ok(HeuristicTable {
        goal: table.goal,
        width: table.width,
        kind: if spread == 0.0 { table.kind } else { HeuristicKind::Degraded },
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn random_map(w: u32, h: u32, bits: &[bool]) -> GridMap {
        let blocked = (0..w * h)
            .filter(|&i| bits[i as usize % bits.len()])
            .map(|i| Cell::new(i % w, i / w));
        GridMap::new(w, h, blocked).unwrap()
    }

    /// Naive relaxation: repeat full sweeps until nothing changes.
    fn bellman(map: &GridMap, goal: Cell) -> Vec<f64> {
        let mut d = vec![f64::INFINITY; map.num_cells()];
        d[map.index(goal)] = 0.0;
        loop {
            let mut changed = false;
            for i in 0..map.num_cells() {
                let c = map.cell(i);
                if !map.is_free(c) {
                    continue;
                }
                for j in 0..map.num_cells() {
                    let o = map.cell(j);
                    if map.is_free(o) && manhattan(c, o) == 1 && d[j] + 1.0 < d[i] {
                        d[i] = d[j] + 1.0;
                        changed = true;
                    }
                }
            }
            if !changed {
                return d;
            }
        }
    }

    #[test]
    fn corners_of_open_3x3() {
        let m = GridMap::empty(3, 3).unwrap();
        let t = backward_dijkstra(&m, Cell::new(1, 1)).unwrap();
        for c in [(0, 0), (2, 0), (0, 2), (2, 2)] {
            assert_eq!(t.value(c.into()), 2.0);
        }
        assert_eq!(t.value(Cell::new(1, 1)), 0.0);
    }

    #[test]
    fn blocked_goal_is_rejected() {
        let m = GridMap::new(2, 1, [Cell::new(1, 0)]).unwrap();
        assert_eq!(
            backward_dijkstra(&m, Cell::new(1, 0)).unwrap_err(),
            HeuristicError::BlockedGoal(Cell::new(1, 0))
        );
    }

    #[test]
    fn disconnected_cells_are_unreachable() {
        let m = GridMap::new(3, 1, [Cell::new(1, 0)]).unwrap();
        let t = backward_dijkstra(&m, Cell::new(0, 0)).unwrap();
        assert_eq!(t.get(Cell::new(2, 0)), None);
        let d = degrade(&t, 50.0, 1).unwrap();
        assert_eq!(d.get(Cell::new(2, 0)), None);
    }

    #[test]
    fn manhattan_examples() {
        assert_eq!(manhattan(Cell::new(0, 0), Cell::new(3, 4)), 7);
        assert_eq!(manhattan(Cell::new(5, 2), Cell::new(5, 2)), 0);
    }

    #[test]
    fn degrade_levels() {
        let m = GridMap::empty(8, 8).unwrap();
        let t = backward_dijkstra(&m, Cell::new(2, 5)).unwrap();
        assert_eq!(degrade(&t, 0.0, 9).unwrap(), t);
        let full = degrade(&t, 100.0, 9).unwrap();
        for (a, b) in full.values().iter().zip(t.values()) {
            assert!(*a >= 0.0 && a <= b);
        }
        assert_eq!(full.value(Cell::new(2, 5)), 0.0);
        assert!(degrade(&t, 100.5, 0).is_err());
        assert!(degrade(&t, -1.0, 0).is_err());
        assert_eq!(degrade(&t, 20.0, 4).unwrap(), degrade(&t, 20.0, 4).unwrap());
        assert_ne!(degrade(&t, 20.0, 4).unwrap(), degrade(&t, 20.0, 5).unwrap());
    }

    proptest! {
        #[test]
        fn bfs_matches_bellman(w in 1u32..7, h in 1u32..7, bits in proptest::collection::vec(prop::bool::weighted(0.25), 49), g in 0usize..49) {
            let m = random_map(w, h, &bits);
            let free: Vec<Cell> = m.free_cells().collect();
            prop_assume!(!free.is_empty());
            let goal = free[g % free.len()];
            let t = backward_dijkstra(&m, goal).unwrap();
            prop_assert_eq!(t.values(), &bellman(&m, goal)[..]);
        }

        #[test]
        fn exact_table_is_one_lipschitz(w in 2u32..9, h in 2u32..9, bits in proptest::collection::vec(prop::bool::weighted(0.2), 64), g in 0usize..64) {
            let m = random_map(w, h, &bits);
            let free: Vec<Cell> = m.free_cells().collect();
            prop_assume!(!free.is_empty());
            let t = backward_dijkstra(&m, free[g % free.len()]).unwrap();
            for c in m.free_cells() {
                for n in m.neighbors(c) {
                    if t.is_reachable(c) {
                        prop_assert!((t.value(c) - t.value(n)).abs() <= 1.0);
                    }
                }
            }
        }

        #[test]
        fn manhattan_equals_bfs_on_open_grids(w in 1u32..10, h in 1u32..10, gx in 0u32..10, gy in 0u32..10) {
            let m = GridMap::empty(w, h).unwrap();
            let goal = Cell::new(gx % w, gy % h);
            let t = backward_dijkstra(&m, goal).unwrap();
            let man = HeuristicTable::manhattan(&m, goal);
            prop_assert_eq!(t.values(), man.values());
        }

        #[test]
        fn degrade_stays_admissible(k in 0.0f64..=100.0, seed in any::<u64>()) {
            let m = GridMap::new(10, 10, [Cell::new(3, 3), Cell::new(4, 3)]).unwrap();
            let t = backward_dijkstra(&m, Cell::new(7, 1)).unwrap();
            let d = degrade(&t, k, seed).unwrap();
            for (lo, (x, hi)) in t.values().iter().map(|v| (1.0 - k / 100.0) * v).zip(d.values().iter().zip(t.values())) {
                if hi.is_finite() {
                    prop_assert!(lo <= *x && x <= hi);
                }
            }
        }
    }
}
