use serde::{Deserialize, Serialize};

use super::vector::{dot, AssetVector, PriceVector};
use crate::error::{check_dim, Error, Result};

/// Concave, strictly increasing utilities shared by every trader in an economy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case", deny_unknown_fields)]
pub enum UtilityFunction {
    /// `prod x_i^{w_i}` with positive weights summing to one.
    WeightedGeometric { weights: Vec<f64> },
    /// `sum log(x_i + s_i)`.
    ShiftedLogSum { shifts: Vec<f64> },
    /// `prod x_i`, i.e. `xy` in two goods.
    CobbDouglasProduct,
}

impl UtilityFunction {
    pub fn weighted_geometric(weights: Vec<f64>) -> Result<Self> {
        let u = Self::WeightedGeometric { weights };
        u.validate()?;
        Ok(u)
    }

    pub fn shifted_log_sum(shifts: Vec<f64>) -> Result<Self> {
        let u = Self::ShiftedLogSum { shifts };
        u.validate()?;
        Ok(u)
    }

    /// `log(x + 1/n) + log(y + 1/n)`.
    pub fn log_family(n: f64) -> Self {
        Self::ShiftedLogSum {
            shifts: vec![1.0 / n, 1.0 / n],
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::WeightedGeometric { weights } => {
                if weights.len() < 2 || weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
                    return Err(Error::InvalidInput(format!(
                        "geometric weights must be positive, got {weights:?}"
                    )));
                }
                let total: f64 = weights.iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(Error::InvalidInput(format!(
                        "geometric weights must sum to 1, got {total}"
                    )));
                }
            }
            Self::ShiftedLogSum { shifts } => {
                if shifts.len() < 2 || shifts.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
                    return Err(Error::InvalidInput(format!(
                        "log shifts must be nonnegative, got {shifts:?}"
                    )));
                }
            }
            Self::CobbDouglasProduct => {}
        }
        Ok(())
    }

    /// Number of goods fixed by the parameters, if any.
    pub fn dim(&self) -> Option<usize> {
        match self {
            Self::WeightedGeometric { weights } => Some(weights.len()),
            Self::ShiftedLogSum { shifts } => Some(shifts.len()),
            Self::CobbDouglasProduct => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::WeightedGeometric { .. } => "weighted_geometric",
            Self::ShiftedLogSum { .. } => "shifted_log_sum",
            Self::CobbDouglasProduct => "cobb_douglas_product",
        }
    }

    pub(crate) fn check(&self, dim: usize) -> Result<()> {
        match self.dim() {
            Some(d) => check_dim(d, dim),
            None => Ok(()),
        }
    }

    /// Returns `U(x)`. Log variants return `-inf` where `x_i + s_i = 0`.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        self.check(x.len())?;
        Ok(self.eval_unchecked(x))
    }

    pub(crate) fn eval_unchecked(&self, x: &[f64]) -> f64 {
        match self {
            Self::WeightedGeometric { weights } => x
                .iter()
                .zip(weights)
                .map(|(xi, wi)| xi.max(0.0).powf(*wi))
                .product(),
            Self::ShiftedLogSum { shifts } => x
                .iter()
                .zip(shifts)
                .map(|(xi, si)| {
                    let v = xi + si;
                    if v <= 0.0 {
                        f64::NEG_INFINITY
                    } else {
                        v.ln()
                    }
                })
                .sum(),
            Self::CobbDouglasProduct => x.iter().map(|xi| xi.max(0.0)).product(),
        }
    }

    pub fn grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check(x.len())?;
        match self {
            Self::WeightedGeometric { .. } if x.iter().any(|v| *v <= 0.0) => Err(Error::Domain(
                format!("geometric utility gradient undefined on the boundary at {x:?}"),
            )),
            Self::ShiftedLogSum { shifts } if x.iter().zip(shifts).any(|(v, s)| v + s <= 0.0) => {
                Err(Error::Domain(format!(
                    "log utility gradient undefined at {x:?}"
                )))
            }
            _ => Ok(self.grad_unchecked(x)),
        }
    }

    pub(crate) fn grad_unchecked(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Self::WeightedGeometric { weights } => {
                let u = self.eval_unchecked(x);
                x.iter().zip(weights).map(|(xi, wi)| wi * u / xi).collect()
            }
            Self::ShiftedLogSum { shifts } => x
                .iter()
                .zip(shifts)
                .map(|(xi, si)| 1.0 / (xi + si))
                .collect(),
            Self::CobbDouglasProduct => (0..x.len())
                .map(|i| {
                    x.iter()
                        .enumerate()
                        .filter(|(j, _)| *j != i)
                        .map(|(_, v)| *v)
                        .product()
                })
                .collect(),
        }
    }

    /// Separable concave surrogate with the same maximizers: `log U` for the
    /// geometric families, `U` itself for the log family. Returns the value,
    /// gradient and diagonal Hessian.
    pub(crate) fn surrogate(&self, x: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
        let l = x.len();
        let (shift, weight): (Vec<f64>, Vec<f64>) = match self {
            Self::WeightedGeometric { weights } => (vec![0.0; l], weights.clone()),
            Self::CobbDouglasProduct => (vec![0.0; l], vec![1.0; l]),
            Self::ShiftedLogSum { shifts } => (shifts.clone(), vec![1.0; l]),
        };
        let mut value = 0.0;
        let mut grad = Vec::with_capacity(l);
        let mut hess = Vec::with_capacity(l);
        for i in 0..l {
            let v = x[i] + shift[i];
            value += weight[i] * if v > 0.0 { v.ln() } else { f64::NEG_INFINITY };
            grad.push(weight[i] / v);
            hess.push(-weight[i] / (v * v));
        }
        (value, grad, hess)
    }

    /// Budget shares of the geometric families.
    pub(crate) fn shares(&self, dim: usize) -> Option<Vec<f64>> {
        match self {
            Self::WeightedGeometric { weights } => Some(weights.clone()),
            Self::CobbDouglasProduct => Some(vec![1.0 / dim as f64; dim]),
            Self::ShiftedLogSum { .. } => None,
        }
    }

    /// Walrasian demand `argmax U(x) s.t. p.x = p.endowment`.
    pub fn demand(&self, endowment: &AssetVector, price: &PriceVector) -> Result<AssetVector> {
        let l = endowment.dim();
        check_dim(l, price.dim())?;
        self.check(l)?;
        let p = price.normalized();
        let p = p.as_slice();
        let wealth = dot(p, endowment.as_slice());
        if wealth <= 0.0 {
            return Ok(AssetVector::zeros(l));
        }
        let bundle = match self.shares(l) {
            Some(shares) => shares
                .iter()
                .zip(p)
                .map(|(w, pi)| w * wealth / pi)
                .collect(),
            None => {
                let Self::ShiftedLogSum { shifts } = self else {
                    unreachable!()
                };
                shifted_log_demand(shifts, p, wealth)
            }
        };
        AssetVector::new(bundle)
    }

    /// Same maximizers restricted to a subset of goods; used when some goods
    /// have no supply in a batch.
    pub(crate) fn restricted(&self, active: &[usize]) -> Self {
        match self {
            Self::WeightedGeometric { weights } => {
                let total: f64 = active.iter().map(|i| weights[*i]).sum();
                Self::WeightedGeometric {
                    weights: active.iter().map(|i| weights[*i] / total).collect(),
                }
            }
            Self::ShiftedLogSum { shifts } => Self::ShiftedLogSum {
                shifts: active.iter().map(|i| shifts[*i]).collect(),
            },
            Self::CobbDouglasProduct => Self::CobbDouglasProduct,
        }
    }
}

/// Water-filling: goods with `p_i s_i` below the common level `1/mu` get
/// `x_i = level / p_i - s_i`, the rest get zero.
fn shifted_log_demand(shifts: &[f64], p: &[f64], wealth: f64) -> Vec<f64> {
    let l = p.len();
    let mut order: Vec<usize> = (0..l).collect();
    order.sort_by(|a, b| (p[*a] * shifts[*a]).total_cmp(&(p[*b] * shifts[*b])));
    let mut active = 0;
    let mut spent = wealth;
    for (m, &i) in order.iter().enumerate() {
        let candidate = spent + p[i] * shifts[i];
        let level = candidate / (m + 1) as f64;
        if p[i] * shifts[i] < level {
            spent = candidate;
            active = m + 1;
        } else {
            break;
        }
    }
    let level = spent / active as f64;
    let mut out = vec![0.0; l];
    for &i in &order[..active] {
        out[i] = (level / p[i] - shifts[i]).max(0.0);
    }
    out
}
