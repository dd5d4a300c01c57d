//! The reserve process: agents with i.i.d. endowments arrive one at a time and
//! trade against a single pool; estimators for the time-averaged welfare,
//! spot price and reserve occupancy.

mod io;

pub use io::{write_heatmap_csv, write_run_json, write_trajectory_csv, RunSummary};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cfmm::CfmmState;
use crate::distribution::{stream, EndowmentDistribution};
use crate::economy::{AssetVector, PriceVector, UtilityFunction};
use crate::error::{check_dim, Error, Result};
use crate::solvers::{stationary_distribution, trade_choice, MarkovChain, SolverSettings};
use crate::stats::{BatchMeans, Estimate, DEFAULT_BATCHES};

fn one() -> f64 {
    1.0
}

fn every_step() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CfmmwdConfig {
    pub cfmm: CfmmState,
    pub utility: UtilityFunction,
    pub distribution: EndowmentDistribution,
    pub steps: u64,
    pub seed: u64,
    /// Multiplies the initial reserves.
    #[serde(default = "one")]
    pub liquidity_scale: f64,
    /// Keep every n-th state in the trajectory. Estimators see every step.
    #[serde(default = "every_step")]
    pub record_every: u64,
    #[serde(default)]
    pub settings: SolverSettings,
}

impl CfmmwdConfig {
    pub fn new(
        cfmm: CfmmState,
        utility: UtilityFunction,
        distribution: EndowmentDistribution,
        steps: u64,
        seed: u64,
    ) -> Result<Self> {
        let c = Self {
            cfmm,
            utility,
            distribution,
            steps,
            seed,
            liquidity_scale: 1.0,
            record_every: 1,
            settings: SolverSettings::default(),
        };
        c.validate()?;
        Ok(c)
    }

    pub fn with_scale(mut self, lambda: f64) -> Result<Self> {
        self.liquidity_scale = lambda;
        self.validate()?;
        Ok(self)
    }

    pub fn with_record_every(mut self, n: u64) -> Result<Self> {
        self.record_every = n;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        self.cfmm.validate()?;
        self.distribution.validate()?;
        self.settings.validate()?;
        check_dim(self.cfmm.dim(), self.distribution.dim())?;
        self.utility.check(self.cfmm.dim())?;
        if self.steps == 0 {
            return Err(Error::InvalidInput("steps must be at least 1".into()));
        }
        if self.record_every == 0 {
            return Err(Error::InvalidInput(
                "record_every must be at least 1".into(),
            ));
        }
        if !(self.liquidity_scale > 0.0 && self.liquidity_scale.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "liquidity scale must be positive, got {}",
                self.liquidity_scale
            )));
        }
        self.initial_state().map(|_| ())
    }

    /// The pool with reserves multiplied by the liquidity scale.
    pub fn initial_state(&self) -> Result<CfmmState> {
        self.cfmm
            .with_reserves(self.cfmm.reserves.scaled(self.liquidity_scale)?)
    }

    /// Hex SHA-256 of the JSON encoding.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&bytes)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// Endowment of the agent arriving at step `step`.
pub fn sample_endowment(dist: &EndowmentDistribution, seed: u64, step: u64) -> AssetVector {
    dist.sample(&mut stream(seed, step))
}

/// One recorded step: the state the agent met and what it got.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub step: u64,
    /// Pre-trade reserves `R_k`.
    pub reserves: Vec<f64>,
    /// Normalized spot price at `R_k`; `None` where it is undefined.
    pub price: Option<Vec<f64>>,
    /// `U(zeta_k)`.
    pub utility: f64,
    pub traded: bool,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub config_hash: String,
    pub seed: u64,
    /// First simulated step (nonzero for resumed runs).
    pub start_step: u64,
    pub points: Vec<TrajectoryPoint>,
    /// Reserves after the last step.
    pub final_reserves: Vec<f64>,
    pub traded_steps: u64,
    /// `max_k |C(R_k) - C(R_start)| / |C(R_start)|`.
    pub max_invariant_drift: f64,
    welfare: BatchMeans,
    prices: Vec<BatchMeans>,
    undefined_price: Option<Vec<f64>>,
}

impl Trajectory {
    /// Number of simulated steps.
    pub fn steps(&self) -> u64 {
        self.welfare.count()
    }

    /// Steps whose realized utility was `-inf`.
    pub fn neg_inf_steps(&self) -> u64 {
        self.welfare.neg_inf_count()
    }
}

/// Simulates `config.steps` agents from the scaled initial reserves.
pub fn run_cfmmwd(config: &CfmmwdConfig) -> Result<Trajectory> {
    config.validate()?;
    let start = config.initial_state()?;
    simulate(config, 0, start)
}

/// Continues a run from step `step` with pre-trade reserves `reserves`. With
/// the reserves recorded at `step` by [`run_cfmmwd`] this reproduces the rest
/// of that run exactly.
pub fn resume_cfmmwd(config: &CfmmwdConfig, step: u64, reserves: Vec<f64>) -> Result<Trajectory> {
    config.validate()?;
    if step >= config.steps {
        return Err(Error::InvalidInput(format!(
            "resume step {step} is past the end of a {}-step run",
            config.steps
        )));
    }
    let state = config.cfmm.with_reserves(AssetVector::new(reserves)?)?;
    simulate(config, step, state)
}

/// Independent runs in parallel; results keep the input order.
pub fn run_replicas(configs: &[CfmmwdConfig]) -> Vec<Result<Trajectory>> {
    configs.par_iter().map(run_cfmmwd).collect()
}

fn simulate(config: &CfmmwdConfig, start_step: u64, mut state: CfmmState) -> Result<Trajectory> {
    let u = &config.utility;
    let l = state.dim();
    let total = config.steps - start_step;
    let level = state.invariant();
    let mut traj = Trajectory {
        config_hash: config.hash(),
        seed: config.seed,
        start_step,
        points: Vec::with_capacity((total / config.record_every + 1) as usize),
        final_reserves: Vec::new(),
        traded_steps: 0,
        max_invariant_drift: 0.0,
        welfare: BatchMeans::new(total, DEFAULT_BATCHES),
        prices: (0..l)
            .map(|_| BatchMeans::new(total, DEFAULT_BATCHES))
            .collect(),
        undefined_price: None,
    };
    for k in start_step..config.steps {
        let endowment = sample_endowment(&config.distribution, config.seed, k);
        let outcome =
            trade_choice(u, &endowment, &state, &config.settings).map_err(|e| Error::Step {
                step: k,
                reserves: state.reserves.as_slice().to_vec(),
                source: Box::new(e),
            })?;
        let utility = u.eval_unchecked(outcome.bundle.as_slice());
        let price = state.spot_price().ok().map(PriceVector::into_inner);
        match &price {
            Some(p) => {
                for (acc, v) in traj.prices.iter_mut().zip(p) {
                    acc.push(*v);
                }
            }
            None => {
                if traj.undefined_price.is_none() {
                    traj.undefined_price = Some(state.reserves.as_slice().to_vec());
                }
            }
        }
        traj.welfare.push(utility);
        let traded = outcome.traded();
        if traded {
            traj.traded_steps += 1;
        }
        if k % config.record_every == 0 {
            traj.points.push(TrajectoryPoint {
                step: k,
                reserves: state.reserves.as_slice().to_vec(),
                price,
                utility,
                traded,
            });
        }
        if traded {
            state.reserves = outcome.reserves;
            let drift = (state.invariant() - level).abs();
            let rel = if level != 0.0 {
                drift / level.abs()
            } else {
                drift
            };
            traj.max_invariant_drift = traj.max_invariant_drift.max(rel);
        }
    }
    traj.final_reserves = state.reserves.into_inner();
    Ok(traj)
}

/// Time average of the realized utilities with a batch-means standard error.
/// Any `-inf` step makes the mean `-inf` (see [`Trajectory::neg_inf_steps`]).
pub fn estimate_welfare(traj: &Trajectory) -> Estimate {
    traj.welfare.estimate()
}

/// Time average of the normalized spot prices, renormalized to the simplex,
/// with per-coordinate batch-means standard errors.
pub fn estimate_avg_price(traj: &Trajectory) -> Result<(PriceVector, Vec<f64>)> {
    if let Some(r) = &traj.undefined_price {
        return Err(Error::NonSmooth(r.clone()));
    }
    let estimates: Vec<Estimate> = traj.prices.iter().map(|b| b.estimate()).collect();
    let price = PriceVector::simplex(estimates.iter().map(|e| e.mean).collect())?;
    Ok((price, estimates.iter().map(|e| e.std_err).collect()))
}

/// Occupancy counts of the recorded reserves on a `bins x bins` grid over
/// their bounding box.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub x_edges: Vec<f64>,
    pub y_edges: Vec<f64>,
    /// `counts[i][j]`: x bin `i`, y bin `j`.
    pub counts: Vec<Vec<u64>>,
}

impl Heatmap {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }
}

fn edges(lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    let (lo, hi) = if hi > lo {
        (lo, hi)
    } else {
        (lo - 0.5, lo + 0.5)
    };
    (0..=bins)
        .map(|i| lo + (hi - lo) * i as f64 / bins as f64)
        .collect()
}

fn bin_of(v: f64, e: &[f64]) -> usize {
    let bins = e.len() - 1;
    let (lo, hi) = (e[0], e[bins]);
    (((v - lo) / (hi - lo) * bins as f64).floor() as usize).min(bins - 1)
}

pub fn reserve_heatmap(traj: &Trajectory, bins: usize) -> Result<Heatmap> {
    if bins == 0 {
        return Err(Error::InvalidInput("need at least one bin".into()));
    }
    let Some(first) = traj.points.first() else {
        return Err(Error::InvalidInput(
            "trajectory has no recorded states".into(),
        ));
    };
    check_dim(2, first.reserves.len())?;
    let range = |i: usize| {
        traj.points
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| {
                (a.min(p.reserves[i]), b.max(p.reserves[i]))
            })
    };
    let (x0, x1) = range(0);
    let (y0, y1) = range(1);
    let x_edges = edges(x0, x1, bins);
    let y_edges = edges(y0, y1, bins);
    let mut counts = vec![vec![0u64; bins]; bins];
    for p in &traj.points {
        counts[bin_of(p.reserves[0], &x_edges)][bin_of(p.reserves[1], &y_edges)] += 1;
    }
    Ok(Heatmap {
        x_edges,
        y_edges,
        counts,
    })
}

/// `E_{pi x D}[U(zeta)]`: the stationary welfare of a finite reserve chain,
/// where state `s` carries reserves `chain.states[s]` of `pool`'s curve and
/// `dist` has finite support.
pub fn chain_welfare(
    u: &UtilityFunction,
    dist: &EndowmentDistribution,
    pool: &CfmmState,
    chain: &MarkovChain,
    settings: &SolverSettings,
) -> Result<f64> {
    let atoms = dist.support().ok_or_else(|| {
        Error::Unsupported("stationary welfare needs a finitely supported distribution".into())
    })?;
    let pi = stationary_distribution(chain, settings)?;
    let mut total = 0.0;
    for (state, weight) in chain.states.iter().zip(&pi) {
        let here = pool.with_reserves(AssetVector::new(state.clone())?)?;
        for (prob, d) in &atoms {
            let t = trade_choice(u, d, &here, settings)?;
            total += weight * prob * u.eval_unchecked(t.bundle.as_slice());
        }
    }
    Ok(total)
}
