//! Constant function market makers traded against by Walrasian-demand agents:
//! trade choice, welfare and price dynamics of the reserve process, builder
//! MEV in batch auctions, and LP rebalancing loss.

pub mod cfmm;
pub mod distribution;
pub mod economy;
pub mod error;
pub mod lp_analysis;
pub mod mev;
pub mod simulation;
pub mod solvers;
pub mod stats;

pub use cfmm::{CfmmState, TradingFunction};
pub use distribution::{EndowmentDistribution, SampleSet};
pub use economy::{AssetVector, ExchangeEconomy, PriceVector, UtilityFunction};
pub use error::{Error, Result};
pub use solvers::SolverSettings;
pub use stats::Estimate;
