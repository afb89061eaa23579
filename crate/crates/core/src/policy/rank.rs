//! Action rankers that combine a cost-to-go table with an optional policy
//! distribution.
//!
//! Every mode produces a full ordering. Moves that leave the map or hit an
//! obstacle always come last, moves onto cells the table cannot reach come
//! right before them; inside those two tail groups the heuristic term is
//! dropped and the remaining terms of the mode decide.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

use super::ordering::{to_ordering, ActionDistribution, ActionOrdering, SampleMode};
use crate::grid::{Action, Cell, GridMap};
use crate::heuristics::HeuristicTable;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RankMode {
    /// Ascending `h(T(s,a))`, random tie-break.
    H,
    /// Like `H`, ties prefer cells no other agent currently occupies.
    H2,
    /// Policy preference only.
    Pi,
    /// Lexicographic `(h(T(s,a)), 1 - p(a))`.
    Tie,
    /// Ascending `h(T(s,a)) + R * (1 - p(a))`, random tie-break.
    Sum(f64),
}

impl RankMode {
    pub fn needs_policy(self) -> bool {
        matches!(self, RankMode::Pi | RankMode::Tie | RankMode::Sum(_))
    }

    pub fn label(self) -> &'static str {
        match self {
            RankMode::H => "h",
            RankMode::H2 => "h2",
            RankMode::Pi => "pi",
            RankMode::Tie => "tie",
            RankMode::Sum(_) => "sum",
        }
    }

    /// Parse a CLI mode name; `r` is only used by `sum`.
    pub fn parse(name: &str, r: f64) -> Result<Self, String> {
        match name {
            "h" => Ok(RankMode::H),
            "h2" => Ok(RankMode::H2),
            "pi" => Ok(RankMode::Pi),
            "tie" => Ok(RankMode::Tie),
            "sum" if r >= 0.0 && r.is_finite() => Ok(RankMode::Sum(r)),
            "sum" => Err(format!("R must be a non-negative number, got {r}")),
            _ => Err(format!("unknown ordering `{name}` (expected h|h2|pi|tie|sum)")),
        }
    }
}

impl fmt::Display for RankMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RankMode::Sum(r) => write!(f, "sum({r})"),
            m => f.write_str(m.label()),
        }
    }
}

impl FromStr for RankMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.strip_prefix("sum(").and_then(|r| r.strip_suffix(')')) {
            Some(r) => Self::parse("sum", r.parse().map_err(|_| format!("bad R `{r}`"))?),
            None => Self::parse(s, 0.0),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RankError {
    #[error("ordering mode `{0}` needs a policy distribution")]
    MissingDistribution(&'static str),
}

/// Rank the five actions at `cell`. `occupied` reports cells held by other
/// agents (only `H2` consults it).
#[allow(clippy::too_many_arguments)]
pub fn rank_actions<R: Rng + ?Sized>(
    map: &GridMap,
    cell: Cell,
    h: &HeuristicTable,
    d: Option<&ActionDistribution>,
    mode: RankMode,
    sample: SampleMode,
    occupied: &dyn Fn(Cell) -> bool,
    rng: &mut R,
) -> Result<ActionOrdering, RankError> {
    if mode.needs_policy() && d.is_none() {
        return Err(RankError::MissingDistribution(mode.label()));
    }
    let targets = Action::ALL.map(|a| map.apply_action(cell, a));

    if mode == RankMode::Pi {
        let base = to_ordering(d.expect("checked above"), sample, rng);
        let mut acts = *base.actions();
        acts.sort_by_key(|a| targets[a.index()].is_none());
        return Ok(ActionOrdering::new(acts).expect("permutation"));
    }

    // (group, primary, secondary) ascending; group 0 = reachable,
    // 1 = free but unreachable per the table, 2 = infeasible.
    let keys: [(u8, f64, f64); 5] = Action::ALL.map(|a| {
        let (group, hv) = match targets[a.index()] {
            None => (2, 0.0),
            Some(t) => match h.value(t) {
                v if v.is_finite() => (0, v),
                _ => (1, 0.0),
            },
        };
        let miss = d.map_or(0.0, |d| 1.0 - d.prob(a));
        match mode {
            RankMode::H => (group, hv, 0.0),
            RankMode::H2 => {
                let busy = targets[a.index()].is_some_and(|t| t != cell && occupied(t));
                (group, hv, if busy { 1.0 } else { 0.0 })
            }
            RankMode::Tie => (group, hv, miss),
            RankMode::Sum(r) => (group, hv + r * miss, 0.0),
            RankMode::Pi => unreachable!(),
        }
    });

    let mut acts = Action::ALL;
    acts.shuffle(rng);
    acts.sort_by(|a, b| {
        let (ka, kb) = (keys[a.index()], keys[b.index()]);
        ka.0.cmp(&kb.0)
            .then_with(|| ka.1.partial_cmp(&kb.1).unwrap_or(Ordering::Equal))
            .then_with(|| ka.2.partial_cmp(&kb.2).unwrap_or(Ordering::Equal))
    });
    Ok(ActionOrdering::new(acts).expect("permutation"))
}
