//! Grid world: cells, actions, the transition function, collision checks
//! and the rest-at-goal cost metrics.

use std::collections::HashMap;
use std::fmt;
use std::ops::{Deref, DerefMut};
use std::sync::Arc;

use thiserror::Error;

/// A grid cell. `x` is the column from the left, `y` the row from the top.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Cell {
    pub x: u32,
    pub y: u32,
}

impl Cell {
    pub const fn new(x: u32, y: u32) -> Self {
        Self { x, y }
    }

    pub fn is_adjacent_or_same(self, other: Cell) -> bool {
        self.x.abs_diff(other.x) + self.y.abs_diff(other.y) <= 1
    }
}

impl From<(u32, u32)> for Cell {
    fn from((x, y): (u32, u32)) -> Self {
        Self { x, y }
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.x, self.y)
    }
}

/// The five grid actions. The discriminant is the canonical index used by
/// every distribution, ordering and wire message.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Action {
    Up = 0,
    Down = 1,
    Left = 2,
    Right = 3,
    Wait = 4,
}

impl Action {
    pub const ALL: [Action; 5] = [
        Action::Up,
        Action::Down,
        Action::Left,
        Action::Right,
        Action::Wait,
    ];

    pub const fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Action> {
        Self::ALL.get(i).copied()
    }

    /// (dx, dy) with `Up` decreasing y.
    pub const fn delta(self) -> (i64, i64) {
        match self {
            Action::Up => (0, -1),
            Action::Down => (0, 1),
            Action::Left => (-1, 0),
            Action::Right => (1, 0),
            Action::Wait => (0, 0),
        }
    }

    /// The action that moves `from` onto `to`, if they are equal or 4-adjacent.
    pub fn between(from: Cell, to: Cell) -> Option<Action> {
        let dx = to.x as i64 - from.x as i64;
        let dy = to.y as i64 - from.y as i64;
        Self::ALL.into_iter().find(|a| a.delta() == (dx, dy))
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Action::Up => "Up",
            Action::Down => "Down",
            Action::Left => "Left",
            Action::Right => "Right",
            Action::Wait => "Wait",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GridError {
    #[error("map dimensions must be positive, got {width}x{height}")]
    EmptyMap { width: u32, height: u32 },
    #[error("blocked cell {0} lies outside the map")]
    BlockedOutOfBounds(Cell),
    #[error("instance has {starts} starts but {goals} goals")]
    CountMismatch { starts: usize, goals: usize },
    #[error("instance needs at least one agent")]
    NoAgents,
    #[error("agent {agent}: {what} {cell} is outside the map or blocked")]
    NotFree {
        agent: usize,
        what: &'static str,
        cell: Cell,
    },
    #[error("agents {a} and {b} share the {what} cell {cell}")]
    Duplicate {
        a: usize,
        b: usize,
        what: &'static str,
        cell: Cell,
    },
}

/// Static 4-connected grid. Passability never changes after construction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridMap {
    width: u32,
    height: u32,
    blocked: Vec<bool>,
}

impl GridMap {
    pub fn new(
        width: u32,
        height: u32,
        blocked: impl IntoIterator<Item = Cell>,
    ) -> Result<Self, GridError> {
        if width == 0 || height == 0 {
            return Err(GridError::EmptyMap { width, height });
        }
        let mut map = Self {
            width,
            height,
            blocked: vec![false; width as usize * height as usize],
        };
        for c in blocked {
            if !map.in_bounds(c) {
                return Err(GridError::BlockedOutOfBounds(c));
            }
            let i = map.index(c);
            map.blocked[i] = true;
        }
        Ok(map)
    }

    pub fn empty(width: u32, height: u32) -> Result<Self, GridError> {
        Self::new(width, height, [])
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn num_cells(&self) -> usize {
        self.blocked.len()
    }

    pub fn in_bounds(&self, c: Cell) -> bool {
        c.x < self.width && c.y < self.height
    }

    pub fn is_free(&self, c: Cell) -> bool {
        self.in_bounds(c) && !self.blocked[self.index(c)]
    }

    pub fn is_blocked(&self, c: Cell) -> bool {
        !self.is_free(c)
    }

    /// Row-major index of an in-bounds cell.
    #[inline]
    pub fn index(&self, c: Cell) -> usize {
        c.y as usize * self.width as usize + c.x as usize
    }

    #[inline]
    pub fn cell(&self, index: usize) -> Cell {
        let w = self.width as usize;
        Cell::new((index % w) as u32, (index / w) as u32)
    }

    pub fn blocked_cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.blocked.len())
            .filter(|&i| self.blocked[i])
            .map(|i| self.cell(i))
    }

    pub fn free_cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.blocked.len())
            .filter(|&i| !self.blocked[i])
            .map(|i| self.cell(i))
    }

    pub fn blocked_count(&self) -> usize {
        self.blocked.iter().filter(|&&b| b).count()
    }

    pub fn free_count(&self) -> usize {
        self.num_cells() - self.blocked_count()
    }

    /// Transition function. `None` when the target is off the map or blocked.
    pub fn apply_action(&self, c: Cell, a: Action) -> Option<Cell> {
        let (dx, dy) = a.delta();
        let x = c.x as i64 + dx;
        let y = c.y as i64 + dy;
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            return None;
        }
        let next = Cell::new(x as u32, y as u32);
        (!self.blocked[self.index(next)]).then_some(next)
    }

    /// Free 4-neighbours of `c` in canonical action order (Wait excluded).
    pub fn neighbors(&self, c: Cell) -> impl Iterator<Item = Cell> + '_ {
        Action::ALL[..4]
            .iter()
            .filter_map(move |&a| self.apply_action(c, a))
    }
}

/// Joint placement of all agents at one timestep, indexed by agent id.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Configuration(pub Vec<Cell>);

impl Deref for Configuration {
    type Target = Vec<Cell>;
    fn deref(&self) -> &Vec<Cell> {
        &self.0
    }
}

impl DerefMut for Configuration {
    fn deref_mut(&mut self) -> &mut Vec<Cell> {
        &mut self.0
    }
}

impl From<Vec<Cell>> for Configuration {
    fn from(v: Vec<Cell>) -> Self {
        Self(v)
    }
}

impl FromIterator<Cell> for Configuration {
    fn from_iter<I: IntoIterator<Item = Cell>>(iter: I) -> Self {
        Self(iter.into_iter().collect())
    }
}

/// A MAPF instance: one map plus a start/goal pair per agent.
#[derive(Debug, Clone)]
pub struct Instance {
    pub map: Arc<GridMap>,
    pub starts: Vec<Cell>,
    pub goals: Vec<Cell>,
}

impl Instance {
    pub fn new(map: Arc<GridMap>, starts: Vec<Cell>, goals: Vec<Cell>) -> Result<Self, GridError> {
        if starts.len() != goals.len() {
            return Err(GridError::CountMismatch {
                starts: starts.len(),
                goals: goals.len(),
            });
        }
        if starts.is_empty() {
            return Err(GridError::NoAgents);
        }
        for (what, cells) in [("start", &starts), ("goal", &goals)] {
            let mut seen: HashMap<Cell, usize> = HashMap::with_capacity(cells.len());
            for (agent, &cell) in cells.iter().enumerate() {
                if !map.is_free(cell) {
                    return Err(GridError::NotFree { agent, what, cell });
                }
                if let Some(&a) = seen.get(&cell) {
                    return Err(GridError::Duplicate {
                        a,
                        b: agent,
                        what,
                        cell,
                    });
                }
                seen.insert(cell, agent);
            }
        }
        Ok(Self { map, starts, goals })
    }

    pub fn n_agents(&self) -> usize {
        self.starts.len()
    }

    pub fn start_config(&self) -> Configuration {
        Configuration(self.starts.clone())
    }

    pub fn goal_config(&self) -> Configuration {
        Configuration(self.goals.clone())
    }
}

/// One-step conflict between consecutive configurations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Conflict {
    /// Agent ends the step on a blocked or off-map cell.
    Obstacle { agent: usize, cell: Cell },
    /// Agent jumped further than one cell.
    NonAdjacent { agent: usize, from: Cell, to: Cell },
    /// Two agents share a cell; `a < b`.
    Vertex { a: usize, b: usize, cell: Cell },
    /// Two agents swapped cells; `a < b`.
    Edge { a: usize, b: usize },
}

/// Every conflict in the step `prev -> next`. Empty means the step is valid.
///
/// Panics if the configurations have different lengths.
pub fn validate_step(prev: &[Cell], next: &[Cell], map: &GridMap) -> Vec<Conflict> {
    assert_eq!(
        prev.len(),
        next.len(),
        "configurations must have one cell per agent"
    );
    let mut out = Vec::new();
    for (agent, (&p, &n)) in prev.iter().zip(next).enumerate() {
        if !map.is_free(n) {
            out.push(Conflict::Obstacle { agent, cell: n });
        }
        if !p.is_adjacent_or_same(n) {
            out.push(Conflict::NonAdjacent {
                agent,
                from: p,
                to: n,
            });
        }
    }

    let mut at_next: HashMap<Cell, Vec<usize>> = HashMap::with_capacity(next.len());
    for (agent, &n) in next.iter().enumerate() {
        at_next.entry(n).or_default().push(agent);
    }
    let mut vertex: Vec<Conflict> = Vec::new();
    for (&cell, agents) in &at_next {
        for (k, &a) in agents.iter().enumerate() {
            for &b in &agents[k + 1..] {
                vertex.push(Conflict::Vertex { a, b, cell });
            }
        }
    }
    vertex.sort_by_key(|c| match *c {
        Conflict::Vertex { a, b, .. } => (a, b),
        _ => unreachable!(),
    });
    out.extend(vertex);

    let mut at_prev: HashMap<Cell, Vec<usize>> = HashMap::with_capacity(prev.len());
    for (agent, &p) in prev.iter().enumerate() {
        at_prev.entry(p).or_default().push(agent);
    }
    for (i, (&p, &n)) in prev.iter().zip(next).enumerate() {
        if p == n {
            continue;
        }
        for &j in at_prev.get(&n).map_or(&[][..], Vec::as_slice) {
            if j > i && next[j] == p {
                out.push(Conflict::Edge { a: i, b: j });
            }
        }
    }
    out
}

/// Per-agent sequences of cells, all padded to the same length.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PathSet {
    pub paths: Vec<Vec<Cell>>,
}

impl PathSet {
    pub fn new(paths: Vec<Vec<Cell>>) -> Self {
        Self { paths }
    }

    /// Build from a sequence of joint configurations (one per timestep).
    pub fn from_configurations<C: AsRef<[Cell]>>(configs: &[C]) -> Self {
        let n = configs.first().map_or(0, |c| c.as_ref().len());
        let mut paths = vec![Vec::with_capacity(configs.len()); n];
        for c in configs {
            for (path, &cell) in paths.iter_mut().zip(c.as_ref()) {
                path.push(cell);
            }
        }
        Self { paths }
    }

    pub fn n_agents(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty() || self.paths.iter().all(|p| p.is_empty())
    }

    /// Number of stored timesteps (makespan + 1 for a padded set).
    pub fn horizon(&self) -> usize {
        self.paths.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Configuration at timestep `t`; agents whose path ended stay put.
    pub fn config_at(&self, t: usize) -> Configuration {
        self.paths
            .iter()
            .map(|p| p[t.min(p.len().saturating_sub(1))])
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PathIssue {
    AgentCount { expected: usize, found: usize },
    EmptyPath { agent: usize },
    Ragged { agent: usize, len: usize, expected: usize },
    WrongStart { agent: usize, found: Cell, expected: Cell },
    Conflict { t: usize, conflict: Conflict },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationReport {
    pub issues: Vec<PathIssue>,
    /// Whether each agent's final cell is its goal.
    pub reached_goal: Vec<bool>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.issues.is_empty() && self.reached_goal.iter().all(|&r| r)
    }

    pub fn conflicts(&self) -> impl Iterator<Item = (usize, Conflict)> + '_ {
        self.issues.iter().filter_map(|i| match *i {
            PathIssue::Conflict { t, conflict } => Some((t, conflict)),
            _ => None,
        })
    }
}

/// Check every step of `paths` plus the start and goal endpoints.
pub fn validate_paths(paths: &PathSet, inst: &Instance) -> ValidationReport {
    let mut issues = Vec::new();
    let n = inst.n_agents();
    if paths.n_agents() != n {
        issues.push(PathIssue::AgentCount {
            expected: n,
            found: paths.n_agents(),
        });
        return ValidationReport {
            issues,
            reached_goal: vec![false; n],
        };
    }
    let horizon = paths.horizon();
    for (agent, p) in paths.paths.iter().enumerate() {
        if p.is_empty() {
            issues.push(PathIssue::EmptyPath { agent });
        } else if p.len() != horizon {
            issues.push(PathIssue::Ragged {
                agent,
                len: p.len(),
                expected: horizon,
            });
        }
        if let Some(&first) = p.first() {
            if first != inst.starts[agent] {
                issues.push(PathIssue::WrongStart {
                    agent,
                    found: first,
                    expected: inst.starts[agent],
                });
            }
        }
    }
    let reached_goal = paths
        .paths
        .iter()
        .zip(&inst.goals)
        .map(|(p, g)| p.last() == Some(g))
        .collect();
    if !issues.is_empty() {
        return ValidationReport {
            issues,
            reached_goal,
        };
    }

    let first = paths.config_at(0);
    for (agent, &c) in first.iter().enumerate() {
        if !inst.map.is_free(c) {
            issues.push(PathIssue::Conflict {
                t: 0,
                conflict: Conflict::Obstacle { agent, cell: c },
            });
        }
    }
    let mut prev = first;
    for t in 1..horizon {
        let next = paths.config_at(t);
        issues.extend(
            validate_step(&prev, &next, &inst.map)
                .into_iter()
                .map(|conflict| PathIssue::Conflict { t, conflict }),
        );
        prev = next;
    }
    ValidationReport {
        issues,
        reached_goal,
    }
}

/// Timesteps spent before the agent rests at `goal` for good.
pub fn path_cost(path: &[Cell], goal: Cell) -> usize {
    path.iter().rposition(|&c| c != goal).map_or(0, |t| t + 1)
}

/// Sum of per-agent rest-at-goal costs.
pub fn flowtime(paths: &PathSet, goals: &[Cell]) -> usize {
    paths
        .paths
        .iter()
        .zip(goals)
        .map(|(p, &g)| path_cost(p, g))
        .sum()
}

/// Timestep at which the last agent comes to rest at its goal.
pub fn makespan(paths: &PathSet, goals: &[Cell]) -> usize {
    paths
        .paths
        .iter()
        .zip(goals)
        .map(|(p, &g)| path_cost(p, g))
        .max()
        .unwrap_or(0)
}
