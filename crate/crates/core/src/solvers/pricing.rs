//! Price/reserve inversion on a level set and the stochastic equilibrium price.

use serde::{Deserialize, Serialize};

use super::{trade_choice, SolverSettings};
use crate::cfmm::{CfmmState, TradingFunction};
use crate::distribution::{EndowmentDistribution, SampleSet};
use crate::economy::{AssetVector, PriceVector, UtilityFunction};
use crate::error::{check_dim, Error, Result};

/// Prices closer than this to the simplex boundary count as drift.
const BOUNDARY: f64 = 1e-6;

/// The reserves on `C = level` whose spot price is `p`.
///
/// Only curves whose spot price is injective on a level set are supported:
/// `ConstantProduct`, `GeometricMean`, `ExpProduct` and `QuadraticOverLinear`.
pub fn price_to_reserves(c: &TradingFunction, level: f64, p: &PriceVector) -> Result<AssetVector> {
    c.validate()?;
    if let Some(d) = c.dim() {
        check_dim(d, p.dim())?;
    }
    let p = p.normalized();
    let p = p.as_slice();
    let positive_level = || {
        if level > 0.0 && level.is_finite() {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "{} needs a positive level, got {level}",
                c.name()
            )))
        }
    };
    let reserves = match c {
        TradingFunction::ConstantProduct => {
            positive_level()?;
            vec![(level * p[1] / p[0]).sqrt(), (level * p[0] / p[1]).sqrt()]
        }
        TradingFunction::GeometricMean { weights } => {
            positive_level()?;
            let base: f64 = weights.iter().zip(p).map(|(w, pi)| w * (w / pi).ln()).sum();
            let t = level / base.exp();
            weights.iter().zip(p).map(|(w, pi)| w * t / pi).collect()
        }
        TradingFunction::ExpProduct => {
            positive_level()?;
            let x = p[1] / p[0];
            if x > level {
                return Err(Error::Domain(format!(
                    "price {p:?} is not attained on x e^y = {level}"
                )));
            }
            vec![x, (level / x).ln()]
        }
        TradingFunction::QuadraticOverLinear => {
            if !(level < 0.0 && level.is_finite()) {
                return Err(Error::Domain(format!(
                    "quadratic-over-linear needs a negative level, got {level}"
                )));
            }
            let x = -level * p[0] / (2.0 * p[1]);
            vec![x, -x * x / level]
        }
        TradingFunction::ConstantSum { .. } | TradingFunction::ConstantMin => {
            return Err(Error::Unsupported(format!(
                "{} has no injective price map on a level set",
                c.name()
            )))
        }
    };
    AssetVector::new(reserves)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StochasticEquilibrium {
    pub price: PriceVector,
    /// `||F(p) - p||_inf` at the returned price.
    pub residual: f64,
    pub iterations: usize,
    pub exact: bool,
}

/// Expected spot price after one trade starting from the reserves priced at `p`.
fn price_update(
    u: &UtilityFunction,
    set: &SampleSet,
    c: &TradingFunction,
    level: f64,
    p: &PriceVector,
    settings: &SolverSettings,
) -> Result<Vec<f64>> {
    let state = CfmmState::feeless(c.clone(), price_to_reserves(c, level, p)?.into_inner())?;
    set.mean_vec(|d| {
        let t = trade_choice(u, d, &state, settings)?;
        Ok(c.spot_price(t.reserves.as_slice())?.into_inner())
    })
}

/// Fixed point of `F(p) = E[spot price of (reserves(p) + inflow)]`.
///
/// With two goods `F(p)_0 - p_0` is bracketed and bisected on
/// `[1e-6, 1 - 1e-6]`; no sign change means the iterates run to the simplex
/// boundary and [`Error::BoundaryDrift`] is returned. With more goods a
/// damped iteration `p <- p + a (F(p) - p)` is used, with the same boundary
/// check.
pub fn stochastic_equilibrium_price(
    u: &UtilityFunction,
    dist: &EndowmentDistribution,
    c: &TradingFunction,
    level: f64,
    settings: &SolverSettings,
    n_samples: usize,
    seed: u64,
) -> Result<StochasticEquilibrium> {
    settings.validate()?;
    dist.validate()?;
    u.check(dist.dim())?;
    let set = dist.sample_set(n_samples, seed)?;
    if dist.dim() == 2 {
        two_good_fixed_point(u, &set, c, level, settings)
    } else {
        damped_fixed_point(u, &set, c, level, settings)
    }
}

fn two_good_fixed_point(
    u: &UtilityFunction,
    set: &SampleSet,
    c: &TradingFunction,
    level: f64,
    settings: &SolverSettings,
) -> Result<StochasticEquilibrium> {
    let gap = |p0: f64| -> Result<(PriceVector, f64)> {
        let p = PriceVector::simplex(vec![p0, 1.0 - p0])?;
        let f = price_update(u, set, c, level, &p, settings)?;
        Ok((p, f[0] / (f[0] + f[1]) - p0))
    };
    let (mut a, mut b) = (BOUNDARY, 1.0 - BOUNDARY);
    let (pa, mut ga) = gap(a)?;
    let (pb, gb) = gap(b)?;
    if ga == 0.0 {
        return Ok(done(pa, 0.0, 0, set));
    }
    if gb == 0.0 {
        return Ok(done(pb, 0.0, 0, set));
    }
    if ga.signum() == gb.signum() {
        let (price, residual) = if ga < 0.0 {
            (pa, ga.abs())
        } else {
            (pb, gb.abs())
        };
        return Err(Error::BoundaryDrift {
            price: price.into_inner(),
            residual,
        });
    }
    for iteration in 1..=settings.max_iterations {
        let m = 0.5 * (a + b);
        let (pm, gm) = gap(m)?;
        if gm.abs() <= settings.tolerance || m <= a || m >= b {
            return Ok(done(pm, gm.abs(), iteration, set));
        }
        if gm.signum() == ga.signum() {
            a = m;
            ga = gm;
        } else {
            b = m;
        }
    }
    Err(Error::NonConvergence {
        what: "stochastic equilibrium bisection",
        iterations: settings.max_iterations,
        residual: b - a,
    })
}

fn done(
    price: PriceVector,
    residual: f64,
    iterations: usize,
    set: &SampleSet,
) -> StochasticEquilibrium {
    StochasticEquilibrium {
        price,
        residual,
        iterations,
        exact: set.exact,
    }
}

fn damped_fixed_point(
    u: &UtilityFunction,
    set: &SampleSet,
    c: &TradingFunction,
    level: f64,
    settings: &SolverSettings,
) -> Result<StochasticEquilibrium> {
    let l = set.points.first().map_or(2, |x| x.dim());
    let mut p = PriceVector::simplex(vec![1.0; l])?;
    let step = |p: &PriceVector| -> Result<(Vec<f64>, f64)> {
        let f = price_update(u, set, c, level, p, settings)?;
        let total: f64 = f.iter().sum();
        let g: Vec<f64> = f
            .iter()
            .zip(p.as_slice())
            .map(|(fi, pi)| fi / total - pi)
            .collect();
        let r = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        Ok((g, r))
    };
    let (mut g, mut residual) = step(&p)?;
    let mut gain = settings.damping;
    for iteration in 0..settings.max_iterations {
        if residual <= settings.tolerance {
            return Ok(done(p, residual, iteration, set));
        }
        let trial: Vec<f64> = p
            .as_slice()
            .iter()
            .zip(&g)
            .map(|(pi, gi)| pi + gain * gi)
            .collect();
        if trial.iter().any(|v| *v < BOUNDARY) {
            if gain <= settings.damping * 1e-12 {
                return Err(Error::BoundaryDrift {
                    price: trial,
                    residual,
                });
            }
            gain *= 0.5;
            continue;
        }
        let trial = PriceVector::simplex(trial)?;
        let (tg, tr) = step(&trial)?;
        if tr < residual {
            p = trial;
            g = tg;
            residual = tr;
            gain *= 1.5;
        } else {
            gain *= 0.5;
            if gain < 1e-12 {
                break;
            }
        }
    }
    if p.as_slice().iter().any(|v| *v < 10.0 * BOUNDARY) {
        return Err(Error::BoundaryDrift {
            price: p.into_inner(),
            residual,
        });
    }
    Err(Error::NonConvergence {
        what: "stochastic equilibrium iteration",
        iterations: settings.max_iterations,
        residual,
    })
}
