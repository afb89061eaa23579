use std::sync::Arc;

use thiserror::Error;

use super::ordering::{ActionDistribution, DistributionError};
use crate::grid::{Action, Cell, GridMap, Instance};
use crate::heuristics::{degrade, HeuristicError, HeuristicTable};
use crate::seeds::mix;

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("failed to start policy process `{cmd}`: {source}")]
    Spawn {
        cmd: String,
        source: std::io::Error,
    },
    #[error("policy I/O error at {}: {source}", step_label(*.step))]
    Io {
        step: Option<usize>,
        source: std::io::Error,
    },
    #[error("policy process exited at {}", step_label(*.step))]
    Exited { step: Option<usize> },
    #[error("policy timed out at {}", step_label(*.step))]
    Timeout { step: Option<usize> },
    #[error("malformed policy reply at {}: {msg}", step_label(*.step))]
    Protocol { step: Option<usize>, msg: String },
    #[error("policy returned {found} distributions for {expected} agents at step {step}")]
    CountMismatch {
        step: usize,
        expected: usize,
        found: usize,
    },
    #[error("invalid distribution for agent {agent} at step {step}: {source}")]
    InvalidDistribution {
        step: usize,
        agent: usize,
        source: DistributionError,
    },
    #[error("bad policy parameters: {0}")]
    Config(String),
    #[error(transparent)]
    Heuristic(#[from] HeuristicError),
}

fn step_label(step: Option<usize>) -> String {
    match step {
        Some(t) => format!("step {t}"),
        None => "handshake".to_string(),
    }
}

/// Source of per-agent one-step action distributions.
///
/// Providers receive global state and build whatever observation they need.
/// A provider must return exactly one distribution per agent and be
/// deterministic given its own seed.
pub trait PolicyProvider: Send {
    fn distributions(
        &mut self,
        t: usize,
        config: &[Cell],
    ) -> Result<Vec<ActionDistribution>, PolicyError>;

    /// Called once when the run ends.
    fn finish(&mut self, _success: bool) {}

    /// Extra key/value pairs for the run record.
    fn stats(&self) -> Vec<(String, String)> {
        Vec::new()
    }

    fn label(&self) -> String;
}

impl<P: PolicyProvider + ?Sized> PolicyProvider for Box<P> {
    fn distributions(
        &mut self,
        t: usize,
        config: &[Cell],
    ) -> Result<Vec<ActionDistribution>, PolicyError> {
        (**self).distributions(t, config)
    }

    fn finish(&mut self, success: bool) {
        (**self).finish(success)
    }

    fn stats(&self) -> Vec<(String, String)> {
        (**self).stats()
    }

    fn label(&self) -> String {
        (**self).label()
    }
}

/// Uniform 0.2 on every action.
#[derive(Debug, Clone)]
pub struct UniformPolicy {
    n_agents: usize,
}

impl UniformPolicy {
    pub fn new(n_agents: usize) -> Self {
        Self { n_agents }
    }
}

impl PolicyProvider for UniformPolicy {
    fn distributions(&mut self, _t: usize, config: &[Cell]) -> Result<Vec<ActionDistribution>, PolicyError> {
        debug_assert_eq!(config.len(), self.n_agents);
        Ok(vec![ActionDistribution::uniform(); self.n_agents])
    }

    fn label(&self) -> String {
        "uniform".into()
    }
}

/// Surrogate "learnt" policy: softmax over `-h̄(T(s,a)) / τ`, where `h̄` is
/// the agent's exact table degraded at level κ (frozen for the whole run,
/// so the policy is a fixed function of the agent's cell). Infeasible moves
/// get zero mass.
#[derive(Debug, Clone)]
pub struct SoftmaxHeuristicPolicy {
    map: Arc<GridMap>,
    tables: Vec<HeuristicTable>,
    temperature: f64,
    kappa: f64,
}

impl SoftmaxHeuristicPolicy {
    /// `tables[i]` must be agent i's exact cost-to-go table. κ lies in
    /// `[0, 100)`, τ ≥ 0 (τ = 0 is the argmax limit).
    pub fn new(
        inst: &Instance,
        tables: &[Arc<HeuristicTable>],
        temperature: f64,
        kappa: f64,
        seed: u64,
    ) -> Result<Self, PolicyError> {
        if !(temperature >= 0.0 && temperature.is_finite()) {
            return Err(PolicyError::Config(format!("temperature must be >= 0, got {temperature}")));
        }
        if !(0.0..100.0).contains(&kappa) {
            return Err(PolicyError::Config(format!("corruption must lie in [0, 100), got {kappa}")));
        }
        if tables.len() != inst.n_agents() {
            return Err(PolicyError::Config(format!(
                "{} tables for {} agents",
                tables.len(),
                inst.n_agents()
            )));
        }
        let tables = tables
            .iter()
            .enumerate()
            .map(|(i, t)| degrade(t, kappa, mix(seed, i as u64)))
            .collect::<Result<_, _>>()?;
        Ok(Self {
            map: inst.map.clone(),
            tables,
            temperature,
            kappa,
        })
    }

    pub fn distribution(&self, agent: usize, cell: Cell) -> ActionDistribution {
        let table = &self.tables[agent];
        let scores: [f64; 5] = Action::ALL.map(|a| match self.map.apply_action(cell, a) {
            Some(n) => -table.value(n),
            None => f64::NEG_INFINITY,
        });
        let best = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if best == f64::NEG_INFINITY {
            // Agent cut off from its goal: uniform over feasible moves.
            let w = Action::ALL.map(|a| if self.map.apply_action(cell, a).is_some() { 1.0 } else { 0.0 });
            return ActionDistribution::from_weights(w);
        }
        let w = scores.map(|s| {
            if s == f64::NEG_INFINITY {
                0.0
            } else if self.temperature == 0.0 {
                if s == best { 1.0 } else { 0.0 }
            } else {
                ((s - best) / self.temperature).exp()
            }
        });
        ActionDistribution::from_weights(w)
    }
}

impl PolicyProvider for SoftmaxHeuristicPolicy {
    fn distributions(&mut self, _t: usize, config: &[Cell]) -> Result<Vec<ActionDistribution>, PolicyError> {
        Ok(config
            .iter()
            .enumerate()
            .map(|(i, &c)| self.distribution(i, c))
            .collect())
    }

    fn label(&self) -> String {
        format!("softmax_{}_{}", self.temperature, self.kappa)
    }
}
