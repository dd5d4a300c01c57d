//! Trading functions, spot prices and trade feasibility.
//!
//! Sign convention: `QuadraticOverLinear` (`-x^2/y`) decreases in `x`, so its
//! spot price is the l1-normalized *absolute* gradient.

use serde::{Deserialize, Serialize};

use crate::economy::{AssetVector, PriceVector};
use crate::error::{check_dim, Error, Result};

/// Relative slack used when comparing invariant values.
pub const FEASIBILITY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case", deny_unknown_fields)]
pub enum TradingFunction {
    /// `c . x`
    ConstantSum { coefficients: Vec<f64> },
    /// `x y`
    ConstantProduct,
    /// `prod x_i^{w_i}`
    GeometricMean { weights: Vec<f64> },
    /// `min_i x_i`
    ConstantMin,
    /// `-x^2 / y` on `y > 0`
    QuadraticOverLinear,
    /// `x e^y`
    ExpProduct,
}

impl TradingFunction {
    pub fn constant_sum(coefficients: Vec<f64>) -> Result<Self> {
        let c = Self::ConstantSum { coefficients };
        c.validate()?;
        Ok(c)
    }

    pub fn geometric_mean(weights: Vec<f64>) -> Result<Self> {
        let c = Self::GeometricMean { weights };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::ConstantSum { coefficients } => {
                if coefficients.len() < 2
                    || coefficients.iter().any(|c| !(c.is_finite() && *c > 0.0))
                {
                    return Err(Error::InvalidInput(format!(
                        "constant-sum coefficients must be positive, got {coefficients:?}"
                    )));
                }
            }
            Self::GeometricMean { weights } => {
                if weights.len() < 2 || weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
                    return Err(Error::InvalidInput(format!(
                        "geometric-mean weights must be positive, got {weights:?}"
                    )));
                }
                let total: f64 = weights.iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(Error::InvalidInput(format!(
                        "geometric-mean weights must sum to 1, got {total}"
                    )));
                }
            }
            _ => {}
        }
        Ok(())
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::ConstantSum { .. } => "constant_sum",
            Self::ConstantProduct => "constant_product",
            Self::GeometricMean { .. } => "geometric_mean",
            Self::ConstantMin => "constant_min",
            Self::QuadraticOverLinear => "quadratic_over_linear",
            Self::ExpProduct => "exp_product",
        }
    }

    /// Dimension fixed by the variant, if any.
    pub fn dim(&self) -> Option<usize> {
        match self {
            Self::ConstantSum { coefficients } => Some(coefficients.len()),
            Self::GeometricMean { weights } => Some(weights.len()),
            Self::ConstantProduct | Self::QuadraticOverLinear | Self::ExpProduct => Some(2),
            Self::ConstantMin => None,
        }
    }

    /// Increasing in every coordinate and differentiable on the open orthant.
    pub fn is_smooth_increasing(&self) -> bool {
        matches!(
            self,
            Self::ConstantSum { .. }
                | Self::ConstantProduct
                | Self::GeometricMean { .. }
                | Self::ExpProduct
        )
    }

    pub(crate) fn check(&self, r: &[f64]) -> Result<()> {
        match self.dim() {
            Some(d) => check_dim(d, r.len())?,
            None if r.len() < 2 => {
                return Err(Error::DimensionMismatch {
                    expected: 2,
                    got: r.len(),
                })
            }
            None => {}
        }
        if let Some(v) = r.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::Domain(format!(
                "reserves must be nonnegative, got {v}"
            )));
        }
        if matches!(self, Self::QuadraticOverLinear) && r[1] <= 0.0 {
            return Err(Error::Domain("quadratic-over-linear needs y > 0".into()));
        }
        Ok(())
    }

    pub fn eval(&self, r: &[f64]) -> Result<f64> {
        self.check(r)?;
        Ok(self.eval_unchecked(r))
    }

    pub(crate) fn eval_unchecked(&self, r: &[f64]) -> f64 {
        match self {
            Self::ConstantSum { coefficients } => {
                coefficients.iter().zip(r).map(|(c, x)| c * x).sum()
            }
            Self::ConstantProduct => r[0] * r[1],
            Self::GeometricMean { weights } => {
                weights.iter().zip(r).map(|(w, x)| x.powf(*w)).product()
            }
            Self::ConstantMin => r.iter().copied().fold(f64::INFINITY, f64::min),
            Self::QuadraticOverLinear => -r[0] * r[0] / r[1],
            Self::ExpProduct => r[0] * r[1].exp(),
        }
    }

    pub fn grad(&self, r: &[f64]) -> Result<Vec<f64>> {
        self.check(r)?;
        match self {
            Self::GeometricMean { .. } if r.iter().any(|x| *x <= 0.0) => Err(Error::Domain(
                format!("geometric-mean gradient undefined on the boundary at {r:?}"),
            )),
            Self::ConstantMin => {
                let m = self.eval_unchecked(r);
                let at_min: Vec<usize> = (0..r.len()).filter(|i| r[*i] == m).collect();
                if at_min.len() > 1 {
                    return Err(Error::NonSmooth(r.to_vec()));
                }
                let mut g = vec![0.0; r.len()];
                g[at_min[0]] = 1.0;
                Ok(g)
            }
            _ => Ok(self.grad_unchecked(r)),
        }
    }

    pub(crate) fn grad_unchecked(&self, r: &[f64]) -> Vec<f64> {
        match self {
            Self::ConstantSum { coefficients } => coefficients.clone(),
            Self::ConstantProduct => vec![r[1], r[0]],
            Self::GeometricMean { weights } => {
                let c = self.eval_unchecked(r);
                weights.iter().zip(r).map(|(w, x)| w * c / x).collect()
            }
            Self::ConstantMin => unreachable!("handled in grad"),
            Self::QuadraticOverLinear => vec![-2.0 * r[0] / r[1], (r[0] / r[1]).powi(2)],
            Self::ExpProduct => {
                let e = r[1].exp();
                vec![e, r[0] * e]
            }
        }
    }

    /// `|grad C(R)| / ||grad C(R)||_1`.
    pub fn spot_price(&self, r: &[f64]) -> Result<PriceVector> {
        let g: Vec<f64> = self.grad(r)?.into_iter().map(f64::abs).collect();
        if g.iter().any(|v| *v <= 0.0 || !v.is_finite()) {
            return Err(Error::Domain(format!(
                "spot price of {} at {r:?} is not an interior simplex point",
                self.name()
            )));
        }
        PriceVector::simplex(g)
    }

    /// Marginal rate `dC/dx_0 / dC/dx_1` at an interior point of a two-good curve.
    pub(crate) fn marginal_rate(&self, r: &[f64]) -> f64 {
        match self {
            Self::ConstantSum { coefficients } => coefficients[0] / coefficients[1],
            Self::ConstantProduct => r[1] / r[0],
            Self::GeometricMean { weights } => weights[0] * r[1] / (weights[1] * r[0]),
            Self::ExpProduct => 1.0 / r[0],
            _ => {
                let g = self.grad_unchecked(r);
                g[0] / g[1]
            }
        }
    }

    /// Solves `C(point with coordinate i replaced) = level` for coordinate `i`
    /// on a two-good curve. The result may be negative (the constraint is slack
    /// even at zero) or infinite (unreachable level).
    pub(crate) fn solve_coordinate(&self, other: f64, i: usize, level: f64) -> f64 {
        let j = 1 - i;
        match self {
            Self::ConstantSum { coefficients } => {
                (level - coefficients[j] * other) / coefficients[i]
            }
            Self::ConstantProduct => {
                if other == 0.0 {
                    f64::INFINITY
                } else {
                    level / other
                }
            }
            Self::GeometricMean { weights } => {
                if other == 0.0 {
                    f64::INFINITY
                } else {
                    ((level.ln() - weights[j] * other.ln()) / weights[i]).exp()
                }
            }
            Self::ExpProduct => {
                if i == 0 {
                    level * (-other).exp()
                } else if other == 0.0 {
                    f64::INFINITY
                } else {
                    (level / other).ln()
                }
            }
            Self::QuadraticOverLinear => {
                if i == 0 {
                    (-level * other).max(0.0).sqrt()
                } else {
                    -other * other / level
                }
            }
            Self::ConstantMin => level,
        }
    }
}

/// A pool: trading function, reserves and fee.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CfmmState {
    pub function: TradingFunction,
    pub reserves: AssetVector,
    pub fee: f64,
}

impl CfmmState {
    pub fn new(function: TradingFunction, reserves: AssetVector, fee: f64) -> Result<Self> {
        let s = Self {
            function,
            reserves,
            fee,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn feeless(function: TradingFunction, reserves: Vec<f64>) -> Result<Self> {
        Self::new(function, AssetVector::new(reserves)?, 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        self.function.validate()?;
        self.function.check(self.reserves.as_slice())?;
        if !(0.0..1.0).contains(&self.fee) {
            return Err(Error::InvalidInput(format!(
                "fee must lie in [0, 1), got {}",
                self.fee
            )));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.reserves.dim()
    }

    pub fn invariant(&self) -> f64 {
        self.function.eval_unchecked(self.reserves.as_slice())
    }

    pub fn spot_price(&self) -> Result<PriceVector> {
        self.function.spot_price(self.reserves.as_slice())
    }

    pub fn with_reserves(&self, reserves: AssetVector) -> Result<Self> {
        Self::new(self.function.clone(), reserves, self.fee)
    }
}

pub fn invariant_eval(c: &TradingFunction, r: &AssetVector) -> Result<f64> {
    c.eval(r.as_slice())
}

pub fn invariant_grad(c: &TradingFunction, r: &AssetVector) -> Result<Vec<f64>> {
    c.grad(r.as_slice())
}

pub fn spot_price(c: &TradingFunction, r: &AssetVector) -> Result<PriceVector> {
    c.spot_price(r.as_slice())
}

/// `C(R + (1 - fee) trade) >= C(R)`; trades leaving the domain are infeasible.
pub fn trade_feasible(state: &CfmmState, trade: &[f64]) -> Result<bool> {
    check_dim(state.dim(), trade.len())?;
    let r = state.reserves.as_slice();
    let after: Vec<f64> = r
        .iter()
        .zip(trade)
        .map(|(x, t)| x + (1.0 - state.fee) * t)
        .collect();
    if state.function.check(&after).is_err() {
        return Ok(false);
    }
    let before = state.invariant();
    let tol = FEASIBILITY_TOL * before.abs().max(1.0);
    Ok(state.function.eval_unchecked(&after) >= before - tol)
}

/// Output of selling `amount` of token 0 into an `x y = k` pool.
pub fn cpmm_swap_output(r0: f64, r1: f64, amount: f64) -> Result<f64> {
    if !(r0 > 0.0 && r1 > 0.0 && amount >= 0.0) {
        return Err(Error::Domain(format!(
            "swap needs positive reserves and a nonnegative input, got ({r0}, {r1}, {amount})"
        )));
    }
    Ok(r1 * amount / (r0 + amount))
}
