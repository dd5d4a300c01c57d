//! Pure exchange economies: utilities, Walrasian demand and one-shot welfare.

mod utility;
mod vector;

pub use utility::UtilityFunction;
pub(crate) use vector::dot;
pub use vector::{AssetVector, PriceVector};

use serde::{Deserialize, Serialize};

use crate::distribution::EndowmentDistribution;
use crate::error::{check_dim, Error, Result};
use crate::stats::Estimate;

/// Traders sharing one utility, each with an endowment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExchangeEconomy {
    pub utility: UtilityFunction,
    pub endowments: Vec<AssetVector>,
}

impl ExchangeEconomy {
    pub fn new(utility: UtilityFunction, endowments: Vec<AssetVector>) -> Result<Self> {
        let e = Self {
            utility,
            endowments,
        };
        e.validate()?;
        Ok(e)
    }

    pub fn validate(&self) -> Result<()> {
        let Some(first) = self.endowments.first() else {
            return Err(Error::InvalidInput(
                "an economy needs at least one agent".into(),
            ));
        };
        for e in &self.endowments {
            check_dim(first.dim(), e.dim())?;
        }
        self.utility.check(first.dim())?;
        if let Some(good) = self.aggregate().iter().position(|v| *v <= 0.0) {
            return Err(Error::Degenerate { good });
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.endowments[0].dim()
    }

    pub fn aggregate(&self) -> Vec<f64> {
        let mut total = vec![0.0; self.endowments[0].dim()];
        for e in &self.endowments {
            for (t, v) in total.iter_mut().zip(e.as_slice()) {
                *t += v;
            }
        }
        total
    }
}

pub fn utility_eval(u: &UtilityFunction, x: &AssetVector) -> Result<f64> {
    u.eval(x.as_slice())
}

pub fn utility_grad(u: &UtilityFunction, x: &AssetVector) -> Result<Vec<f64>> {
    u.grad(x.as_slice())
}

/// `zeta(endowment, p)`.
pub fn walrasian_demand(
    u: &UtilityFunction,
    endowment: &AssetVector,
    p: &PriceVector,
) -> Result<AssetVector> {
    u.demand(endowment, p)
}

/// `z = zeta - endowment`.
pub fn excess_demand(
    u: &UtilityFunction,
    endowment: &AssetVector,
    p: &PriceVector,
) -> Result<Vec<f64>> {
    let zeta = u.demand(endowment, p)?;
    Ok(zeta
        .as_slice()
        .iter()
        .zip(endowment.as_slice())
        .map(|(a, b)| a - b)
        .collect())
}

/// `E[U(zeta(endowment, p))]`: exact for finite distributions, Monte Carlo
/// over `n_samples` draws otherwise.
pub fn one_shot_welfare(
    u: &UtilityFunction,
    dist: &EndowmentDistribution,
    p: &PriceVector,
    n_samples: usize,
    seed: u64,
) -> Result<Estimate> {
    check_dim(dist.dim(), p.dim())?;
    let set = dist.sample_set(n_samples, seed)?;
    set.mean(|x| u.eval(u.demand(x, p)?.as_slice()))
}

/// `E[U(endowment)]`, the no-trade benchmark.
pub fn autarky_welfare(
    u: &UtilityFunction,
    dist: &EndowmentDistribution,
    n_samples: usize,
    seed: u64,
) -> Result<Estimate> {
    let set = dist.sample_set(n_samples, seed)?;
    set.mean(|x| u.eval(x.as_slice()))
}
