//! Per-timestep action orderings for every agent, built from cost-to-go
//! tables, a rank mode and an optional policy.

use std::sync::Arc;

use rand::Rng;

use super::ordering::{ActionDistribution, ActionOrdering, SampleMode};
use super::provider::{PolicyError, PolicyProvider};
use super::rank::{rank_actions, RankMode};
use crate::grid::{Cell, GridMap};
use crate::heuristics::HeuristicTable;

pub struct OrderingSource {
    map: Arc<GridMap>,
    tables: Vec<Arc<HeuristicTable>>,
    mode: RankMode,
    sample: SampleMode,
    policy: Option<Box<dyn PolicyProvider>>,
    occupied: Vec<bool>,
    last_dists: Option<Vec<ActionDistribution>>,
}

impl OrderingSource {
    /// `tables[i]` ranks agent i's moves. Modes that mix in a policy need one.
    pub fn new(
        map: Arc<GridMap>,
        tables: Vec<Arc<HeuristicTable>>,
        mode: RankMode,
        sample: SampleMode,
        policy: Option<Box<dyn PolicyProvider>>,
    ) -> Result<Self, PolicyError> {
        if mode.needs_policy() && policy.is_none() {
            return Err(PolicyError::Config(format!("ordering `{mode}` needs a policy")));
        }
        let occupied = vec![false; map.num_cells()];
        Ok(Self {
            map,
            tables,
            mode,
            sample,
            policy,
            occupied,
            last_dists: None,
        })
    }

    pub fn mode(&self) -> RankMode {
        self.mode
    }

    pub fn sample(&self) -> SampleMode {
        self.sample
    }

    pub fn policy_mut(&mut self) -> Option<&mut (dyn PolicyProvider + 'static)> {
        self.policy.as_deref_mut()
    }

    pub fn policy(&self) -> Option<&(dyn PolicyProvider + 'static)> {
        self.policy.as_deref()
    }

    /// Distributions fetched by the last [`Self::orderings`] call.
    pub fn last_distributions(&self) -> Option<&[ActionDistribution]> {
        self.last_dists.as_deref()
    }

    /// Policy distributions at `config`, or `None` without a policy.
    pub fn distributions(&mut self, t: usize, config: &[Cell]) -> Result<Option<Vec<ActionDistribution>>, PolicyError> {
        match self.policy.as_mut() {
            Some(p) => p.distributions(t, config).map(Some),
            None => Ok(None),
        }
    }

    /// One ordering per agent for timestep `t`. Sampled modes draw once per
    /// agent per call.
    pub fn orderings<R: Rng + ?Sized>(
        &mut self,
        t: usize,
        config: &[Cell],
        rng: &mut R,
    ) -> Result<Vec<ActionOrdering>, PolicyError> {
        let dists = if self.mode.needs_policy() {
            self.distributions(t, config)?
        } else {
            None
        };
        if self.mode == RankMode::H2 {
            for &c in config {
                self.occupied[self.map.index(c)] = true;
            }
        }
        let map = &self.map;
        let occ = &self.occupied;
        let is_occ = |c: Cell| occ[map.index(c)];
        let out = config
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                let d = dists.as_ref().map(|d| &d[i]);
                rank_actions(map, c, &self.tables[i], d, self.mode, self.sample, &is_occ, rng)
                    .expect("policy presence checked at construction")
            })
            .collect();
        if self.mode == RankMode::H2 {
            for &c in config {
                self.occupied[self.map.index(c)] = false;
            }
        }
        self.last_dists = dists;
        Ok(out)
    }

    pub fn finish(&mut self, success: bool) {
        if let Some(p) = self.policy.as_mut() {
            p.finish(success);
        }
    }
}
