//! Numerical routines: trade choice against a pool, Walrasian equilibria,
//! price/reserve inversion, the stochastic equilibrium price and finite
//! Markov chains.

mod equilibrium;
mod markov;
mod pricing;
mod trade;

pub use equilibrium::{
    distributional_walrasian_equilibrium, finite_walrasian_equilibrium, tatonnement,
    DistributionalEquilibrium, Equilibrium,
};
pub use markov::{build_csmm_example_chain, enumerate_chain, stationary_distribution, MarkovChain};
pub use pricing::{price_to_reserves, stochastic_equilibrium_price, StochasticEquilibrium};
pub use trade::{trade_choice, trade_choice_barrier, TradeOutcome};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSettings {
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Step weight of damped fixed-point iterations, in `(0, 1]`.
    pub damping: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_iterations: 10_000,
            damping: 0.5,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidInput(
                "max_iterations must be at least 1".into(),
            ));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "damping must lie in (0, 1], got {}",
                self.damping
            )));
        }
        Ok(())
    }
}
