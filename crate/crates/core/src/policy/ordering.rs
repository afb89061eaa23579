use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

use crate::grid::Action;

/// Tolerance on the sum of an internally produced distribution.
pub const INTERNAL_SUM_TOL: f64 = 1e-6;
/// Slack allowed for distributions received over the wire before renormalising.
pub const EXTERNAL_SUM_TOL: f64 = 1e-3;

#[derive(Debug, Error, PartialEq)]
pub enum DistributionError {
    #[error("probability {value} for {action} is outside [0, 1]")]
    OutOfRange { action: Action, value: f64 },
    #[error("probabilities sum to {0}")]
    BadSum(f64),
    #[error("expected 5 probabilities, got {0}")]
    WrongLength(usize),
}

/// Probabilities over the five actions, in canonical action order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionDistribution([f64; 5]);

impl ActionDistribution {
    pub fn new(probs: [f64; 5]) -> Result<Self, DistributionError> {
        Self::check(probs, INTERNAL_SUM_TOL)?;
        Ok(Self(probs))
    }

    /// Accept a wire distribution: entries must be finite and non-negative and
    /// the sum within [`EXTERNAL_SUM_TOL`] of one; the result is renormalised.
    pub fn from_external(probs: &[f64]) -> Result<Self, DistributionError> {
        let probs: [f64; 5] = probs
            .try_into()
            .map_err(|_| DistributionError::WrongLength(probs.len()))?;
        for (a, &p) in Action::ALL.iter().zip(&probs) {
            if !p.is_finite() || p < 0.0 {
                return Err(DistributionError::OutOfRange { action: *a, value: p });
            }
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > EXTERNAL_SUM_TOL {
            return Err(DistributionError::BadSum(sum));
        }
        Ok(Self(probs.map(|p| p / sum)))
    }

    /// Normalise non-negative weights. All-zero weights give the uniform distribution.
    pub fn from_weights(weights: [f64; 5]) -> Self {
        let sum: f64 = weights.iter().sum();
        if sum > 0.0 && sum.is_finite() {
            Self(weights.map(|w| w / sum))
        } else {
            Self::uniform()
        }
    }

    pub fn uniform() -> Self {
        Self([0.2; 5])
    }

    /// All mass on one action.
    pub fn deterministic(a: Action) -> Self {
        let mut p = [0.0; 5];
        p[a.index()] = 1.0;
        Self(p)
    }

    fn check(probs: [f64; 5], tol: f64) -> Result<(), DistributionError> {
        for (a, &p) in Action::ALL.iter().zip(&probs) {
            if !(0.0..=1.0).contains(&p) {
                return Err(DistributionError::OutOfRange { action: *a, value: p });
            }
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > tol {
            return Err(DistributionError::BadSum(sum));
        }
        Ok(())
    }

    pub fn probs(&self) -> &[f64; 5] {
        &self.0
    }

    pub fn prob(&self, a: Action) -> f64 {
        self.0[a.index()]
    }

    /// Most probable action, ties broken uniformly at random.
    pub fn argmax<R: Rng + ?Sized>(&self, rng: &mut R) -> Action {
        strict_ordering(self, rng).first()
    }
}

/// A permutation of the five actions, most preferred first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ActionOrdering([Action; 5]);

impl ActionOrdering {
    pub const CANONICAL: ActionOrdering = ActionOrdering(Action::ALL);

    /// `None` unless `actions` is a permutation of the five actions.
    pub fn new(actions: [Action; 5]) -> Option<Self> {
        let mut seen = [false; 5];
        for a in actions {
            if std::mem::replace(&mut seen[a.index()], true) {
                return None;
            }
        }
        Some(Self(actions))
    }

    pub fn from_indices(idx: [usize; 5]) -> Option<Self> {
        let mut out = [Action::Wait; 5];
        for (slot, i) in out.iter_mut().zip(idx) {
            *slot = Action::from_index(i)?;
        }
        Self::new(out)
    }

    pub fn actions(&self) -> &[Action; 5] {
        &self.0
    }

    pub fn first(&self) -> Action {
        self.0[0]
    }

    /// 0-based preference position of `a`.
    pub fn position(&self, a: Action) -> usize {
        self.0.iter().position(|&b| b == a).expect("ordering is a permutation")
    }

    pub fn iter(&self) -> impl Iterator<Item = Action> + '_ {
        self.0.iter().copied()
    }

    pub fn indices(&self) -> [usize; 5] {
        self.0.map(Action::index)
    }
}

/// How a distribution is turned into an ordering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum SampleMode {
    /// Descending probability.
    Strict,
    /// Sequential sampling without replacement.
    #[default]
    Sampled,
}

impl fmt::Display for SampleMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SampleMode::Strict => "strict",
            SampleMode::Sampled => "sampled",
        })
    }
}

impl FromStr for SampleMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "strict" => Ok(SampleMode::Strict),
            "sampled" => Ok(SampleMode::Sampled),
            _ => Err(format!("unknown sample mode `{s}` (expected strict|sampled)")),
        }
    }
}

pub fn to_ordering<R: Rng + ?Sized>(
    d: &ActionDistribution,
    mode: SampleMode,
    rng: &mut R,
) -> ActionOrdering {
    match mode {
        SampleMode::Strict => strict_ordering(d, rng),
        SampleMode::Sampled => sampled_ordering(d, rng),
    }
}

/// Actions by descending probability; exact ties in random order.
pub fn strict_ordering<R: Rng + ?Sized>(d: &ActionDistribution, rng: &mut R) -> ActionOrdering {
    let mut acts = Action::ALL;
    acts.shuffle(rng);
    let p = d.probs();
    acts.sort_by(|a, b| p[b.index()].total_cmp(&p[a.index()]));
    ActionOrdering(acts)
}

/// Plackett–Luce draw: pick each position with probability proportional to
/// the remaining mass. Zero-probability actions trail in random order.
pub fn sampled_ordering<R: Rng + ?Sized>(d: &ActionDistribution, rng: &mut R) -> ActionOrdering {
    let p = d.probs();
    let mut rest: Vec<Action> = Action::ALL.iter().copied().filter(|a| p[a.index()] > 0.0).collect();
    let mut zeros: Vec<Action> = Action::ALL.iter().copied().filter(|a| p[a.index()] <= 0.0).collect();
    let mut out = [Action::Wait; 5];
    let mut k = 0;
    while !rest.is_empty() {
        let total: f64 = rest.iter().map(|a| p[a.index()]).sum();
        let mut u = rng.gen::<f64>() * total;
        let mut pick = rest.len() - 1;
        for (i, a) in rest.iter().enumerate() {
            u -= p[a.index()];
            if u < 0.0 {
                pick = i;
                break;
            }
        }
        out[k] = rest.remove(pick);
        k += 1;
    }
    zeros.shuffle(rng);
    for a in zeros {
        out[k] = a;
        k += 1;
    }
    ActionOrdering(out)
}
