//! Deterministic threshold cascade over a filtered correlation matrix.
//!
//! Starting from a set of seeded defaults, every node accumulates the
//! filtered correlations to its defaulted neighbours,
//! `I_i = sum_j rho_ij * S_j`, and defaults once `I_i` strictly exceeds its
//! threshold. Updates are synchronous: the whole influence vector is computed
//! from the previous state before any node flips. Defaults are absorbing.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::marketdata::{ticker_index, AssetMeta};
use crate::matrix::Matrix;

pub const DEFAULT_INFLUENCE_THRESHOLD: f64 = 0.5;
pub const DEFAULT_MAX_ITERATIONS: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DefaultState(Vec<bool>);

impl DefaultState {
    pub fn healthy(n: usize) -> Self {
        Self(vec![false; n])
    }

    pub fn from_flags(flags: Vec<bool>) -> Self {
        Self(flags)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_defaulted(&self, i: usize) -> bool {
        self.0[i]
    }

    pub fn flags(&self) -> &[bool] {
        &self.0
    }

    pub fn count(&self) -> usize {
        self.0.iter().filter(|d| **d).count()
    }

    pub fn defaulted(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().enumerate().filter(|(_, d)| **d).map(|(i, _)| i)
    }

    pub fn is_superset_of(&self, other: &DefaultState) -> bool {
        self.0.len() == other.0.len() && self.0.iter().zip(&other.0).all(|(a, b)| *a || !*b)
    }
}

/// Per-node default threshold `T_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InfluenceThreshold {
    Uniform(f64),
    PerNode(Vec<f64>),
}

impl InfluenceThreshold {
    pub fn at(&self, i: usize) -> f64 {
        match self {
            InfluenceThreshold::Uniform(t) => *t,
            InfluenceThreshold::PerNode(ts) => ts[i],
        }
    }

    fn check_len(&self, n: usize) -> Result<()> {
        match self {
            InfluenceThreshold::PerNode(ts) if ts.len() != n => Err(Error::DimensionMismatch {
                expected: n,
                found: ts.len(),
            }),
            _ => Ok(()),
        }
    }
}

impl Default for InfluenceThreshold {
    fn default() -> Self {
        InfluenceThreshold::Uniform(DEFAULT_INFLUENCE_THRESHOLD)
    }
}

/// Default states by iteration; `iterations[0]` is the seed state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeTrace {
    pub tickers: Vec<String>,
    pub iterations: Vec<DefaultState>,
    pub converged: bool,
    pub theta: f64,
    pub influence_threshold: InfluenceThreshold,
}

impl CascadeTrace {
    pub fn final_state(&self) -> &DefaultState {
        self.iterations.last().expect("trace always holds the seed state")
    }

    /// Indices that flipped to default at each iteration (iteration 0 lists
    /// the seeds).
    pub fn newly_defaulted(&self) -> Vec<Vec<usize>> {
        let mut prev = DefaultState::healthy(self.tickers.len());
        self.iterations
            .iter()
            .map(|s| {
                let fresh = s.defaulted().filter(|&i| !prev.is_defaulted(i)).collect();
                prev = s.clone();
                fresh
            })
            .collect()
    }
}

pub fn seed_default<S: AsRef<str>>(universe: &[AssetMeta], targets: &[S]) -> Result<DefaultState> {
    let mut state = DefaultState::healthy(universe.len());
    for t in targets {
        state.0[ticker_index(universe, t.as_ref())?] = true;
    }
    Ok(state)
}

/// `I_i = sum over defaulted j of filtered_rho[i][j]`.
pub fn influence(state: &DefaultState, filtered_rho: &Matrix) -> Result<Vec<f64>> {
    filtered_rho.ensure_square(state.len())?;
    Ok((0..state.len())
        .map(|i| {
            state
                .defaulted()
                .map(|j| filtered_rho[(i, j)])
                .sum()
        })
        .collect())
}

pub fn step(state: &DefaultState, filtered_rho: &Matrix, threshold: &InfluenceThreshold) -> Result<DefaultState> {
    threshold.check_len(state.len())?;
    let infl = influence(state, filtered_rho)?;
    Ok(DefaultState(
        infl.iter()
            .enumerate()
            .map(|(i, &v)| state.0[i] || v > threshold.at(i))
            .collect(),
    ))
}

/// Iterates [`step`] until a state repeats or `max_iterations` steps have
/// run. The repeated state is recorded, so a converged trace ends with two
/// identical snapshots.
pub fn run<S: AsRef<str>>(
    universe: &[AssetMeta],
    filtered_rho: &Matrix,
    theta: f64,
    targets: &[S],
    threshold: InfluenceThreshold,
    max_iterations: usize,
) -> Result<CascadeTrace> {
    let seed = seed_default(universe, targets)?;
    filtered_rho.ensure_square(universe.len())?;
    threshold.check_len(universe.len())?;

    let mut iterations = vec![seed];
    let mut converged = false;
    for _ in 0..max_iterations {
        let prev = iterations.last().expect("non-empty");
        let next = step(prev, filtered_rho, &threshold)?;
        let fixed = &next == prev;
        iterations.push(next);
        if fixed {
            converged = true;
            break;
        }
    }
    Ok(CascadeTrace {
        tickers: universe.iter().map(|a| a.ticker.clone()).collect(),
        iterations,
        converged,
        theta,
        influence_threshold: threshold,
    })
}
