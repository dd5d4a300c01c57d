//! Liquidity provision versus rebalancing at a reference market price.

use serde::{Deserialize, Serialize};

use crate::cfmm::TradingFunction;
use crate::economy::{dot, AssetVector, PriceVector, UtilityFunction};
use crate::error::{check_dim, Error, Result};
use crate::solvers::price_to_reserves;

/// A holder of `initial` who can either trade at `market_price` or post
/// `initial` as pool reserves on `cfmm` and be arbitraged to that price.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpComparison {
    pub utility: UtilityFunction,
    pub cfmm: TradingFunction,
    pub initial: AssetVector,
    pub market_price: PriceVector,
}

impl LpComparison {
    pub fn new(
        utility: UtilityFunction,
        cfmm: TradingFunction,
        initial: AssetVector,
        market_price: PriceVector,
    ) -> Result<Self> {
        let c = Self {
            utility,
            cfmm,
            initial,
            market_price,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let l = self.initial.dim();
        check_dim(l, self.market_price.dim())?;
        self.utility.check(l)?;
        self.cfmm.eval(self.initial.as_slice())?;
        if self.initial.as_slice().iter().any(|v| *v <= 0.0) {
            return Err(Error::Domain(format!(
                "initial reserves must be interior, got {:?}",
                self.initial.as_slice()
            )));
        }
        Ok(())
    }
}

/// Best bundle on the budget line `c . x = c . R`.
pub fn lp_rebalance_opt(cmp: &LpComparison) -> Result<AssetVector> {
    cmp.validate()?;
    cmp.utility.demand(&cmp.initial, &cmp.market_price)
}

/// Reserves left after arbitrage: the point of `C(x) = C(R)` with least
/// market value, where `grad C(x)` is parallel to `c`.
pub fn lp_cfmm_arb(cmp: &LpComparison) -> Result<AssetVector> {
    cmp.validate()?;
    match cmp.cfmm {
        TradingFunction::ConstantProduct
        | TradingFunction::GeometricMean { .. }
        | TradingFunction::ExpProduct => {
            let level = cmp.cfmm.eval(cmp.initial.as_slice())?;
            price_to_reserves(&cmp.cfmm, level, &cmp.market_price)
        }
        _ => Err(Error::Unsupported(format!(
            "arbitrage of {} has no interior tangency point",
            cmp.cfmm.name()
        ))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpLoss {
    pub rebalanced: AssetVector,
    pub arbitraged: AssetVector,
    pub u_rebalance: f64,
    pub u_cfmm: f64,
    /// `u_rebalance - u_cfmm`, nonnegative.
    pub gap: f64,
}

pub fn lp_loss(cmp: &LpComparison) -> Result<LpLoss> {
    let rebalanced = lp_rebalance_opt(cmp)?;
    let arbitraged = lp_cfmm_arb(cmp)?;
    let u_rebalance = cmp.utility.eval(rebalanced.as_slice())?;
    let u_cfmm = cmp.utility.eval(arbitraged.as_slice())?;
    Ok(LpLoss {
        rebalanced,
        arbitraged,
        u_rebalance,
        u_cfmm,
        gap: u_rebalance - u_cfmm,
    })
}

/// Market value `c . x` of a bundle at the comparison's price.
pub fn market_value(cmp: &LpComparison, x: &AssetVector) -> f64 {
    dot(cmp.market_price.as_slice(), x.as_slice())
}

/// One row of a two-good sweep over `c = (1, p)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LpSweepRow {
    pub p: f64,
    pub u_rebalance: f64,
    pub u_cfmm: f64,
    pub gap: f64,
}

pub fn lp_loss_sweep(
    utility: &UtilityFunction,
    cfmm: &TradingFunction,
    initial: &AssetVector,
    prices: &[f64],
) -> Result<Vec<LpSweepRow>> {
    prices
        .iter()
        .map(|p| {
            let cmp = LpComparison::new(
                utility.clone(),
                cfmm.clone(),
                initial.clone(),
                PriceVector::new(vec![1.0, *p])?,
            )?;
            let l = lp_loss(&cmp)?;
            Ok(LpSweepRow {
                p: *p,
                u_rebalance: l.u_rebalance,
                u_cfmm: l.u_cfmm,
                gap: l.gap,
            })
        })
        .collect()
}
