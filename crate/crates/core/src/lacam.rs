//! LaCAM: depth-first search over joint configurations. Successors of a
//! configuration are produced lazily, one PIBT call per low-level node, where
//! each low-level node pins a prefix of the agents (in priority order) to
//! specific cells.
//!
//! This is the original search: a configuration seen before is never pushed
//! again and the first goal hit is returned as is.

use std::collections::{HashSet, VecDeque};
use std::rc::Rc;
use std::time::{Duration, Instant};

use rand::Rng;

use crate::grid::{flowtime, makespan, Action, Cell, GridMap, Instance, PathSet};
use crate::pibt::{priority_order, update_priorities, PibtPlanner, PriorityState};
use crate::policy::{OrderingSource, PolicyError};

pub const DEFAULT_NODE_CAP: usize = 10_000_000;
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Limits {
    pub timeout: Duration,
    /// Maximum number of high-level nodes generated.
    pub node_cap: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Self {
            timeout: DEFAULT_TIMEOUT,
            node_cap: DEFAULT_NODE_CAP,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Success,
    FailureTimeout,
    FailureExhausted,
    FailureLimit,
}

impl SolveStatus {
    pub fn label(self) -> &'static str {
        match self {
            SolveStatus::Success => "success",
            SolveStatus::FailureTimeout => "failure_timeout",
            SolveStatus::FailureExhausted => "failure_exhausted",
            SolveStatus::FailureLimit => "failure_limit",
        }
    }

    pub fn is_success(self) -> bool {
        self == SolveStatus::Success
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub status: SolveStatus,
    /// Present on success only.
    pub paths: Option<PathSet>,
    pub flowtime: usize,
    pub makespan: usize,
    pub runtime_ms: u64,
    pub hl_nodes_generated: usize,
    pub hl_nodes_expanded: usize,
    pub ll_nodes_generated: usize,
}

/// Constraint set: `(agent, cell)` pairs for a prefix of the owning node's
/// agent order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LowNode {
    pub constraints: Vec<(usize, Cell)>,
}

impl LowNode {
    pub fn depth(&self) -> usize {
        self.constraints.len()
    }
}

#[derive(Debug, Clone)]
pub struct HighNode {
    pub config: Rc<[Cell]>,
    pub parent: Option<usize>,
    /// Timestep along the chain from the root.
    pub depth: usize,
    pub priorities: Vec<PriorityState>,
    /// Agents by descending priority; PIBT and constraint enumeration both
    /// follow it.
    pub order: Vec<usize>,
    pub low_queue: VecDeque<LowNode>,
    pub ll_generated: usize,
}

impl HighNode {
    pub fn new(config: Rc<[Cell]>, parent: Option<usize>, depth: usize, priorities: Vec<PriorityState>) -> Self {
        let order = priority_order(&priorities);
        Self {
            config,
            parent,
            depth,
            priorities,
            order,
            low_queue: VecDeque::from([LowNode::default()]),
            ll_generated: 1,
        }
    }
}

/// Pop the next low-level node of `node` and queue its children: one per
/// cell the next unconstrained agent could occupy, canonical action order
/// with the current cell last. Returns `None` once the queue is empty.
pub fn expand_lownode(node: &mut HighNode, map: &GridMap) -> Option<LowNode> {
    let low = node.low_queue.pop_front()?;
    if let Some(&agent) = node.order.get(low.depth()) {
        let here = node.config[agent];
        for a in Action::ALL {
            if let Some(c) = map.apply_action(here, a) {
                let mut constraints = Vec::with_capacity(low.depth() + 1);
                constraints.extend_from_slice(&low.constraints);
                constraints.push((agent, c));
                node.low_queue.push_back(LowNode { constraints });
                node.ll_generated += 1;
            }
        }
    }
    Some(low)
}

/// Paths from the root to `goal`, one timestep per edge.
pub fn reconstruct(nodes: &[HighNode], goal: usize) -> PathSet {
    let mut chain = Vec::new();
    let mut cur = Some(goal);
    while let Some(i) = cur {
        chain.push(nodes[i].config.clone());
        cur = nodes[i].parent;
    }
    chain.reverse();
    PathSet::from_configurations(&chain)
}

struct Search<'a> {
    inst: &'a Instance,
    nodes: Vec<HighNode>,
    explored: HashSet<Rc<[Cell]>>,
    open: Vec<usize>,
    planner: PibtPlanner,
    expanded: usize,
}

enum Outcome {
    Found(usize),
    Status(SolveStatus),
}

impl<'a> Search<'a> {
    fn new(inst: &'a Instance, init: Vec<PriorityState>) -> Self {
        let root: Rc<[Cell]> = inst.starts.clone().into();
        let mut explored = HashSet::new();
        explored.insert(root.clone());
        Self {
            inst,
            nodes: vec![HighNode::new(root, None, 0, init)],
            explored,
            open: vec![0],
            planner: PibtPlanner::new(&inst.map),
            expanded: 0,
        }
    }

    fn run<R: Rng + ?Sized>(
        &mut self,
        source: &mut OrderingSource,
        limits: Limits,
        started: Instant,
        rng: &mut R,
    ) -> Result<Outcome, PolicyError> {
        let map = &*self.inst.map;
        let goals = &self.inst.goals[..];
        if *self.nodes[0].config == *goals {
            return Ok(Outcome::Found(0));
        }
        while let Some(&top) = self.open.last() {
            if started.elapsed() >= limits.timeout {
                return Ok(Outcome::Status(SolveStatus::FailureTimeout));
            }
            let Some(low) = expand_lownode(&mut self.nodes[top], map) else {
                self.open.pop();
                let node = &mut self.nodes[top];
                node.priorities = Vec::new();
                node.order = Vec::new();
                node.low_queue = VecDeque::new();
                continue;
            };
            if low.depth() == 0 {
                self.expanded += 1;
            }
            let node = &self.nodes[top];
            let orderings = source.orderings(node.depth, &node.config, rng)?;
            let Ok(step) = self.planner.step(map, &node.config, &orderings, &node.order, &low.constraints) else {
                continue;
            };
            for &(i, c) in &low.constraints {
                assert_eq!(step.next[i], c, "generated configuration breaks its constraints");
            }
            let next: Rc<[Cell]> = step.next.0.into();
            if self.explored.contains(&next) {
                continue;
            }
            if self.nodes.len() >= limits.node_cap {
                return Ok(Outcome::Status(SolveStatus::FailureLimit));
            }
            let prio = update_priorities(&node.priorities, &next, goals);
            let child = HighNode::new(next.clone(), Some(top), node.depth + 1, prio);
            let id = self.nodes.len();
            self.explored.insert(next.clone());
            self.nodes.push(child);
            if *next == *goals {
                return Ok(Outcome::Found(id));
            }
            self.open.push(id);
        }
        Ok(Outcome::Status(SolveStatus::FailureExhausted))
    }
}

/// Solve `inst` with LaCAM. `init` holds the root priorities. Policy
/// failures abort the search.
pub fn lacam_solve<R: Rng + ?Sized>(
    inst: &Instance,
    source: &mut OrderingSource,
    init: Vec<PriorityState>,
    limits: Limits,
    rng: &mut R,
) -> Result<SolveResult, PolicyError> {
    assert_eq!(init.len(), inst.n_agents());
    let started = Instant::now();
    let mut search = Search::new(inst, init);
    let outcome = search.run(source, limits, started, rng)?;
    let runtime_ms = started.elapsed().as_millis() as u64;
    let ll_nodes_generated = search.nodes.iter().map(|n| n.ll_generated).sum();
    let (status, paths) = match outcome {
        Outcome::Found(goal) => (SolveStatus::Success, Some(reconstruct(&search.nodes, goal))),
        Outcome::Status(s) => (s, None),
    };
    let (ft, ms) = paths
        .as_ref()
        .map_or((0, 0), |p| (flowtime(p, &inst.goals), makespan(p, &inst.goals)));
    Ok(SolveResult {
        status,
        paths,
        flowtime: ft,
        makespan: ms,
        runtime_ms,
        hl_nodes_generated: search.nodes.len(),
        hl_nodes_expanded: search.expanded,
        ll_nodes_generated,
    })
}
