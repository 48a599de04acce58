//! Stochastic capital-shortfall cascades over the exposure network.
//!
//! Each asset starts with capital `K_i = 0.2 P_i` and fails once capital
//! drops strictly below `K_min,i = 0.1 P_i`. A simulation shocks one or more
//! assets (`K_i -= s P_i`) and then lets every failed asset transmit
//!
//! ```text
//! L_ij = min(E_ij, max(0, E_ij - (K_i - D_i)))
//! ```
//!
//! to each counterparty `j` with `E_ij > 0`, where `D_i` is the column sum
//! `sum_j E_ji` and `K_i` is the failed asset's capital at the moment it
//! failed. Every failure transmits exactly once, so a simulation stops after
//! at most `n` propagation passes.
//!
//! # Reproducibility
//!
//! Simulation `k` draws from a ChaCha8 generator seeded (via
//! `SeedableRng::seed_from_u64`) with
//!
//! ```text
//! splitmix64(master_seed ^ k.wrapping_mul(0x9E37_79B9_7F4A_7C15))
//! ```
//!
//! where `splitmix64` is a single SplitMix64 output step. Within a
//! simulation the target index is drawn first (general shocks only, with
//! `random_range(0..n)`), then the magnitude `lo + (hi - lo) * u`,
//! `u = random::<f64>()`. Results are reduced in simulation-index order, so
//! reports do not depend on the number of worker threads.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::marketdata::{ticker_index, AssetMeta, Region, ReturnPanel};
use crate::matrix::Matrix;
use crate::netbuild::{correlation_matrix, erdos_renyi, volatilities, ExposureNetwork, FilterMode};

pub const CAPITAL_FRACTION: f64 = 0.2;
pub const MIN_CAPITAL_FRACTION: f64 = 0.1;
pub const SEED_STRIDE: u64 = 0x9E37_79B9_7F4A_7C15;
pub const DEFAULT_SYSTEMIC_CUTOFF: usize = 5;
pub const DEFAULT_SIMULATIONS: usize = 1000;

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the generator used by simulation `sim_index`.
pub fn simulation_seed(master_seed: u64, sim_index: u64) -> u64 {
    splitmix64(master_seed ^ sim_index.wrapping_mul(SEED_STRIDE))
}

pub fn simulation_rng(master_seed: u64, sim_index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(simulation_seed(master_seed, sim_index))
}

/// How `D_i` enters the transmitted loss.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LiabilityMode {
    /// Column sums of the exposure matrix, fixed at initialization.
    #[default]
    Fixed,
    /// Column sums over counterparties that have not failed yet, evaluated
    /// when the failed asset transmits.
    Surviving,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CapitalState {
    pub capital: Vec<f64>,
    pub k_min: Vec<f64>,
    pub liabilities: Vec<f64>,
    pub defaulted: Vec<bool>,
    prices: Vec<f64>,
    capital_at_default: Vec<Option<f64>>,
    transmitted: Vec<bool>,
}

impl CapitalState {
    pub fn failed_count(&self) -> usize {
        self.defaulted.iter().filter(|d| **d).count()
    }

    pub fn prices(&self) -> &[f64] {
        &self.prices
    }

    fn mark_if_failed(&mut self, i: usize) -> bool {
        if !self.defaulted[i] && self.capital[i] < self.k_min[i] {
            self.defaulted[i] = true;
            self.capital_at_default[i] = Some(self.capital[i]);
            true
        } else {
            false
        }
    }
}

pub fn init_capital(universe: &[AssetMeta], exposures: &ExposureNetwork) -> Result<CapitalState> {
    exposures.exposures().ensure_square(universe.len())?;
    if universe.iter().any(|a| !(a.final_price > 0.0 && a.final_price.is_finite())) {
        return Err(Error::InvalidParameter("final prices must be positive".into()));
    }
    let prices: Vec<f64> = universe.iter().map(|a| a.final_price).collect();
    let n = prices.len();
    Ok(CapitalState {
        capital: prices.iter().map(|p| CAPITAL_FRACTION * p).collect(),
        k_min: prices.iter().map(|p| MIN_CAPITAL_FRACTION * p).collect(),
        liabilities: exposures.column_sums(),
        defaulted: vec![false; n],
        capital_at_default: vec![None; n],
        transmitted: vec![false; n],
        prices,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ShockMode {
    /// One asset drawn uniformly at random per simulation.
    General,
    Single(String),
    Simultaneous(Vec<String>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ShockMagnitude {
    UniformRandom { lo: f64, hi: f64 },
    Fixed(f64),
}

impl Default for ShockMagnitude {
    fn default() -> Self {
        ShockMagnitude::UniformRandom { lo: 0.1, hi: 0.5 }
    }
}

impl ShockMagnitude {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            ShockMagnitude::UniformRandom { lo, hi } => 0.0 < lo && lo <= hi && hi < 1.0,
            ShockMagnitude::Fixed(s) => 0.0 < s && s < 1.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid shock magnitude {self}")))
        }
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            ShockMagnitude::UniformRandom { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
            ShockMagnitude::Fixed(s) => s,
        }
    }
}

impl fmt::Display for ShockMagnitude {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ShockMagnitude::UniformRandom { lo, hi } => write!(f, "uniform:{lo}:{hi}"),
            ShockMagnitude::Fixed(s) => write!(f, "fixed:{s}"),
        }
    }
}

impl FromStr for ShockMagnitude {
    type Err = Error;

    /// `uniform:LO:HI`, `uniform` (0.1..0.5) or `fixed:S`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidParameter(format!("cannot parse shock magnitude `{s}`"));
        let num = |v: &str| v.trim().parse::<f64>().map_err(|_| bad());
        let parts: Vec<&str> = s.trim().split(':').collect();
        let m = match parts.as_slice() {
            ["uniform"] => ShockMagnitude::default(),
            ["uniform", lo, hi] => ShockMagnitude::UniformRandom {
                lo: num(lo)?,
                hi: num(hi)?,
            },
            ["fixed", v] => ShockMagnitude::Fixed(num(v)?),
            _ => return Err(bad()),
        };
        m.validate()?;
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShockScenario {
    pub mode: ShockMode,
    pub magnitude: ShockMagnitude,
}

impl ShockScenario {
    pub fn new(mode: ShockMode, magnitude: ShockMagnitude) -> Self {
        Self { mode, magnitude }
    }

    pub fn general() -> Self {
        Self::new(ShockMode::General, ShockMagnitude::default())
    }

    pub fn single(ticker: impl Into<String>) -> Self {
        Self::new(ShockMode::Single(ticker.into()), ShockMagnitude::default())
    }

    pub fn simultaneous<S: Into<String>>(tickers: impl IntoIterator<Item = S>) -> Self {
        Self::new(
            ShockMode::Simultaneous(tickers.into_iter().map(Into::into).collect()),
            ShockMagnitude::default(),
        )
    }

    pub fn with_magnitude(mut self, magnitude: ShockMagnitude) -> Self {
        self.magnitude = magnitude;
        self
    }

    /// Label such as `general`, `single:GOLL4.SA` or `simultaneous:GOLL4.SA+AAPL`.
    pub fn label(&self) -> String {
        match &self.mode {
            ShockMode::General => "general".into(),
            ShockMode::Single(t) => format!("single:{t}"),
            ShockMode::Simultaneous(ts) => format!("simultaneous:{}", ts.join("+")),
        }
    }

    /// Parses a [`label`](Self::label); the magnitude is left at its default.
    pub fn parse_label(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::InvalidParameter(format!("cannot parse scenario `{s}`"));
        let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
        let targets: Vec<String> = rest
            .split('+')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(str::to_string)
            .collect();
        let mode = match kind.to_ascii_lowercase().as_str() {
            "general" if targets.is_empty() => ShockMode::General,
            "single" if targets.len() == 1 => ShockMode::Single(targets[0].clone()),
            "simultaneous" if !targets.is_empty() => ShockMode::Simultaneous(targets),
            _ => return Err(bad()),
        };
        Ok(Self::new(mode, ShockMagnitude::default()))
    }

    /// Resolves tickers against `universe`.
    pub fn resolve(&self, universe: &[AssetMeta]) -> Result<ShockPlan> {
        self.magnitude.validate()?;
        if universe.is_empty() {
            return Err(Error::InvalidParameter("empty universe".into()));
        }
        let targets = match &self.mode {
            ShockMode::General => None,
            ShockMode::Single(t) => Some(vec![ticker_index(universe, t)?]),
            ShockMode::Simultaneous(ts) => {
                let mut idx = ts
                    .iter()
                    .map(|t| ticker_index(universe, t))
                    .collect::<Result<Vec<_>>>()?;
                idx.sort_unstable();
                idx.dedup();
                Some(idx)
            }
        };
        Ok(ShockPlan {
            n_assets: universe.len(),
            targets,
            magnitude: self.magnitude,
        })
    }
}

/// A scenario with tickers resolved to indices.
#[derive(Debug, Clone, PartialEq)]
pub struct ShockPlan {
    n_assets: usize,
    /// `None` draws one target per simulation.
    targets: Option<Vec<usize>>,
    magnitude: ShockMagnitude,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShockDraw {
    pub targets: Vec<usize>,
    pub magnitude: f64,
}

/// Draws targets (general mode) then magnitude, and debits `s * P_i` from
/// every target. One magnitude is shared by all targets of a simulation.
pub fn apply_shock<R: Rng>(state: &mut CapitalState, plan: &ShockPlan, rng: &mut R) -> Result<ShockDraw> {
    if state.capital.len() != plan.n_assets {
        return Err(Error::DimensionMismatch {
            expected: plan.n_assets,
            found: state.capital.len(),
        });
    }
    let targets = match &plan.targets {
        Some(t) => t.clone(),
        None => vec![rng.random_range(0..plan.n_assets)],
    };
    let s = plan.magnitude.draw(rng);
    for &i in &targets {
        state.capital[i] -= s * state.prices[i];
        state.mark_if_failed(i);
    }
    Ok(ShockDraw { targets, magnitude: s })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossTransfer {
    pub from: usize,
    pub to: usize,
    pub loss: f64,
}

/// Runs transmission passes until no failure is left untransmitted. Returns
/// every loss transfer in the order it was applied.
pub fn propagate_losses(
    state: &mut CapitalState,
    exposures: &ExposureNetwork,
    liabilities: LiabilityMode,
) -> Result<Vec<LossTransfer>> {
    let n = state.capital.len();
    let e = exposures.exposures();
    e.ensure_square(n)?;

    let mut transfers = Vec::new();
    let mut pending: Vec<usize> = (0..n)
        .filter(|&i| state.defaulted[i] && !state.transmitted[i])
        .collect();
    while !pending.is_empty() {
        let mut next = Vec::new();
        for &i in &pending {
            let d_i = match liabilities {
                LiabilityMode::Fixed => state.liabilities[i],
                LiabilityMode::Surviving => (0..n)
                    .filter(|&j| !state.defaulted[j])
                    .map(|j| e[(j, i)])
                    .sum(),
            };
            let buffer = state.capital_at_default[i].unwrap_or(state.capital[i]) - d_i;
            for j in 0..n {
                let exposure = e[(i, j)];
                if j == i || exposure <= 0.0 {
                    continue;
                }
                let loss = (exposure - buffer).max(0.0).min(exposure);
                state.capital[j] -= loss;
                transfers.push(LossTransfer { from: i, to: j, loss });
                if state.mark_if_failed(j) {
                    next.push(j);
                }
            }
            state.transmitted[i] = true;
        }
        pending = next;
    }
    Ok(transfers)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub n_simulations: usize,
    pub theta: f64,
    pub filter_mode: FilterMode,
    pub systemic_cutoff: usize,
    pub master_seed: u64,
    #[serde(default)]
    pub liabilities: LiabilityMode,
}

impl McConfig {
    pub fn new(theta: f64, filter_mode: FilterMode, master_seed: u64) -> Self {
        Self {
            n_simulations: DEFAULT_SIMULATIONS,
            theta,
            filter_mode,
            systemic_cutoff: DEFAULT_SYSTEMIC_CUTOFF,
            master_seed,
            liabilities: LiabilityMode::Fixed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_simulations == 0 {
            return Err(Error::InvalidParameter("n_simulations must be >= 1".into()));
        }
        Ok(())
    }
}

/// Asset universe together with its filtered exposure network.
#[derive(Debug, Clone, PartialEq)]
pub struct CascadeSystem {
    assets: Vec<AssetMeta>,
    network: ExposureNetwork,
}

impl CascadeSystem {
    pub fn new(assets: Vec<AssetMeta>, network: ExposureNetwork) -> Result<Self> {
        network.exposures().ensure_square(assets.len())?;
        Ok(Self { assets, network })
    }

    /// Correlations and volatilities of `returns`, final prices of its assets.
    pub fn from_returns(returns: &ReturnPanel, theta: f64, mode: FilterMode) -> Result<Self> {
        let rho = correlation_matrix(returns)?;
        let sigma = volatilities(returns)?;
        let prices: Vec<f64> = returns.assets().iter().map(|a| a.final_price).collect();
        let network = ExposureNetwork::build(&rho, &sigma, &prices, theta, mode)?;
        Self::new(returns.assets().to_vec(), network)
    }

    pub fn assets(&self) -> &[AssetMeta] {
        &self.assets
    }

    pub fn network(&self) -> &ExposureNetwork {
        &self.network
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutcome {
    pub failed_count: usize,
    pub failed: Vec<bool>,
    pub shock: ShockDraw,
}

pub fn run_simulation(system: &CascadeSystem, config: &McConfig, plan: &ShockPlan, sim_index: u64) -> Result<SimOutcome> {
    let mut rng = simulation_rng(config.master_seed, sim_index);
    let mut state = init_capital(&system.assets, &system.network)?;
    let shock = apply_shock(&mut state, plan, &mut rng)?;
    propagate_losses(&mut state, &system.network, config.liabilities)?;
    Ok(SimOutcome {
        failed_count: state.failed_count(),
        failed: state.defaulted,
        shock,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub scenario: String,
    pub shock: String,
    pub theta: f64,
    pub filter_mode: FilterMode,
    pub n: usize,
    pub master_seed: u64,
    pub failure_probability: f64,
    pub avg_failed: f64,
    pub per_region: BTreeMap<Region, f64>,
    pub counts: Vec<usize>,
}

/// Runs `config.n_simulations` simulations on the current rayon pool.
pub fn monte_carlo(system: &CascadeSystem, config: &McConfig, scenario: &ShockScenario) -> Result<McReport> {
    config.validate()?;
    check_network_matches(system, config)?;
    let plan = scenario.resolve(&system.assets)?;
    let outcomes = (0..config.n_simulations as u64)
        .into_par_iter()
        .map(|k| run_simulation(system, config, &plan, k))
        .collect::<Result<Vec<_>>>()?;
    Ok(aggregate(system, config, scenario, &outcomes))
}

/// [`monte_carlo`] on a dedicated pool with `threads` workers.
pub fn monte_carlo_with_threads(
    system: &CascadeSystem,
    config: &McConfig,
    scenario: &ShockScenario,
    threads: usize,
) -> Result<McReport> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    pool.install(|| monte_carlo(system, config, scenario))
}

fn check_network_matches(system: &CascadeSystem, config: &McConfig) -> Result<()> {
    let net = &system.network;
    if net.theta() != config.theta || net.mode() != config.filter_mode {
        return Err(Error::InvalidParameter(format!(
            "network was filtered with theta={} mode={}, config says theta={} mode={}",
            net.theta(),
            net.mode(),
            config.theta,
            config.filter_mode
        )));
    }
    Ok(())
}

fn aggregate(system: &CascadeSystem, config: &McConfig, scenario: &ShockScenario, outcomes: &[SimOutcome]) -> McReport {
    let n = outcomes.len();
    let counts: Vec<usize> = outcomes.iter().map(|o| o.failed_count).collect();
    let mut region_failures: BTreeMap<Region, usize> = system.assets.iter().map(|a| (a.region, 0)).collect();
    for o in outcomes {
        for (i, _) in o.failed.iter().enumerate().filter(|(_, f)| **f) {
            *region_failures.get_mut(&system.assets[i].region).expect("region registered") += 1;
        }
    }
    McReport {
        scenario: scenario.label(),
        shock: scenario.magnitude.to_string(),
        theta: config.theta,
        filter_mode: config.filter_mode,
        n,
        master_seed: config.master_seed,
        failure_probability: systemic_fraction(&counts, config.systemic_cutoff),
        avg_failed: counts.iter().sum::<usize>() as f64 / n as f64,
        per_region: region_failures
            .into_iter()
            .map(|(r, c)| (r, c as f64 / n as f64))
            .collect(),
        counts,
    }
}

/// Fraction of runs with strictly more than `cutoff` failures.
pub fn systemic_fraction(counts: &[usize], cutoff: usize) -> f64 {
    counts.iter().filter(|&&c| c > cutoff).count() as f64 / counts.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticComparison {
    pub er_p: f64,
    pub er_seed: u64,
    /// Exposure put on every synthetic edge (mean non-zero real exposure).
    pub edge_weight: f64,
    pub synthetic_edges: usize,
    pub real: McReport,
    pub synthetic: McReport,
}

/// Edge density of the symmetrized real network, used as the default
/// Erdős-Rényi probability.
pub fn matched_density(network: &ExposureNetwork) -> f64 {
    let n = network.len();
    if n < 2 {
        return 0.0;
    }
    network.adjacency().undirected_edge_count() as f64 / (n * (n - 1) / 2) as f64
}

/// Same Monte Carlo on the real network and on an Erdős-Rényi graph whose
/// edges all carry the real network's mean non-zero exposure (both
/// directions).
pub fn compare_synthetic(
    system: &CascadeSystem,
    config: &McConfig,
    scenario: &ShockScenario,
    er_p: Option<f64>,
    er_seed: u64,
) -> Result<SyntheticComparison> {
    let n = system.assets.len();
    let p = er_p.unwrap_or_else(|| matched_density(&system.network));
    let graph = erdos_renyi(n, p, er_seed)?;
    let weight = system.network.mean_nonzero_exposure().unwrap_or(0.0);
    let exposures = Matrix::from_fn(n, n, |i, j| if graph.has(i, j) { weight } else { 0.0 });
    let synthetic = CascadeSystem::new(
        system.assets.clone(),
        ExposureNetwork::from_filtered(exposures, config.theta, config.filter_mode)?,
    )?;
    Ok(SyntheticComparison {
        er_p: p,
        er_seed,
        edge_weight: weight,
        synthetic_edges: graph.undirected_edge_count(),
        real: monte_carlo(system, config, scenario)?,
        synthetic: monte_carlo(&synthetic, config, scenario)?,
    })
}
