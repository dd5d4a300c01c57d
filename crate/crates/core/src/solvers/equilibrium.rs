//! Walrasian equilibria by multiplicative tâtonnement.

use serde::{Deserialize, Serialize};

use super::SolverSettings;
use crate::distribution::EndowmentDistribution;
use crate::economy::{excess_demand, AssetVector, ExchangeEconomy, PriceVector, UtilityFunction};
use crate::error::{Error, Result};
use crate::stats::Estimate;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Equilibrium {
    pub price: PriceVector,
    /// Per-agent demands at `price`, in input order.
    pub allocations: Vec<AssetVector>,
    pub residual: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionalEquilibrium {
    pub price: PriceVector,
    /// `||E[z(p)]||_inf` at the returned price.
    pub residual: f64,
    pub iterations: usize,
    /// True when the expectation was taken over the exact support.
    pub exact: bool,
    /// `E[U(zeta(endowment, price))]`.
    pub welfare: Estimate,
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Drives the aggregate excess demand `excess` to zero starting from `start`
/// (uniform prices if `None`). `supply` is the aggregate endowment; it scales
/// each good's step, and the stopping rule is
/// `||z||_inf <= tolerance * max(1, ||supply||_inf)`.
///
/// Update: `p_i <- p_i (1 + a z_i / supply_i)`, then ℓ1 renormalization. The
/// gain `a` starts at `settings.damping`, halves whenever the residual grows
/// and recovers slowly otherwise.
pub fn tatonnement<F>(
    excess: F,
    supply: &[f64],
    start: Option<PriceVector>,
    settings: &SolverSettings,
) -> Result<(PriceVector, f64, usize)>
where
    F: Fn(&PriceVector) -> Result<Vec<f64>>,
{
    settings.validate()?;
    if let Some(good) = supply.iter().position(|s| *s <= 0.0) {
        return Err(Error::Degenerate { good });
    }
    let l = supply.len();
    let mut p = match start {
        Some(p) => p.normalized(),
        None => PriceVector::simplex(vec![1.0; l])?,
    };
    let target = settings.tolerance * sup_norm(supply).max(1.0);
    let mut z = excess(&p)?;
    let mut residual = sup_norm(&z);
    let mut gain = settings.damping.min(0.9);
    for iteration in 0..settings.max_iterations {
        if residual <= target {
            return Ok((p, residual, iteration));
        }
        let trial: Vec<f64> = p
            .as_slice()
            .iter()
            .zip(&z)
            .zip(supply)
            .map(|((pi, zi), si)| pi * (1.0 + gain * zi / si).max(1e-3))
            .collect();
        let trial = PriceVector::simplex(trial)?;
        let tz = excess(&trial)?;
        let tr = sup_norm(&tz);
        if tr <= residual || gain < 1e-9 {
            p = trial;
            z = tz;
            residual = tr;
            gain = (gain * 1.2).min(0.9);
        } else {
            gain *= 0.5;
        }
    }
    if residual <= target {
        return Ok((p, residual, settings.max_iterations));
    }
    Err(Error::NonConvergence {
        what: "tatonnement",
        iterations: settings.max_iterations,
        residual,
    })
}

/// Geometric utilities clear at `p_i ∝ w_i / supply_i`; the log family goes
/// through [`tatonnement`].
fn clearing_price<F>(
    u: &UtilityFunction,
    excess: F,
    supply: &[f64],
    settings: &SolverSettings,
) -> Result<(PriceVector, f64, usize)>
where
    F: Fn(&PriceVector) -> Result<Vec<f64>>,
{
    match u.shares(supply.len()) {
        Some(w) if supply.iter().all(|s| *s > 0.0) => {
            let p = PriceVector::simplex(w.iter().zip(supply).map(|(w, s)| w / s).collect())?;
            let residual = sup_norm(&excess(&p)?);
            Ok((p, residual, 0))
        }
        _ => tatonnement(excess, supply, None, settings),
    }
}

/// Equilibrium of a finite economy: normalized `p*` with aggregate excess
/// demand below tolerance and the agents' demands at `p*`.
pub fn finite_walrasian_equilibrium(
    economy: &ExchangeEconomy,
    settings: &SolverSettings,
) -> Result<Equilibrium> {
    economy.validate()?;
    let u = &economy.utility;
    let excess = |p: &PriceVector| -> Result<Vec<f64>> {
        let mut total = vec![0.0; economy.dim()];
        for e in &economy.endowments {
            for (t, z) in total.iter_mut().zip(excess_demand(u, e, p)?) {
                *t += z;
            }
        }
        Ok(total)
    };
    let (price, residual, iterations) = clearing_price(u, excess, &economy.aggregate(), settings)?;
    let allocations = economy
        .endowments
        .iter()
        .map(|e| u.demand(e, &price))
        .collect::<Result<Vec<_>>>()?;
    Ok(Equilibrium {
        price,
        allocations,
        residual,
        iterations,
    })
}

/// `p*` with `E[z(endowment, p*)] = 0`. Finite distributions are handled
/// exactly; continuous ones through a fixed sample of `n_samples` draws.
pub fn distributional_walrasian_equilibrium(
    u: &UtilityFunction,
    dist: &EndowmentDistribution,
    settings: &SolverSettings,
    n_samples: usize,
    seed: u64,
) -> Result<DistributionalEquilibrium> {
    dist.validate()?;
    u.check(dist.dim())?;
    let set = dist.sample_set(n_samples, seed)?;
    let supply = set.mean_vec(|x| Ok(x.as_slice().to_vec()))?;
    let excess = |p: &PriceVector| set.mean_vec(|x| excess_demand(u, x, p));
    let (price, residual, iterations) = clearing_price(u, excess, &supply, settings)?;
    let welfare = set.mean(|x| u.eval(u.demand(x, &price)?.as_slice()))?;
    Ok(DistributionalEquilibrium {
        price,
        residual,
        iterations,
        exact: set.exact,
        welfare,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn av(v: &[f64]) -> AssetVector {
        AssetVector::new(v.to_vec()).unwrap()
    }

    fn solve(agents: &[&[f64]]) -> Equilibrium {
        let e = ExchangeEconomy::new(
            UtilityFunction::CobbDouglasProduct,
            agents.iter().map(|a| av(a)).collect(),
        )
        .unwrap();
        finite_walrasian_equilibrium(&e, &SolverSettings::default()).unwrap()
    }

    #[test]
    fn two_symmetric_agents() {
        let eq = solve(&[&[1.0, 0.0], &[0.0, 1.0]]);
        assert!((eq.price[0] - 0.5).abs() < 1e-10);
        for a in &eq.allocations {
            assert!((a[0] - 0.5).abs() < 1e-9 && (a[1] - 0.5).abs() < 1e-9);
        }
    }

    #[test]
    fn builder_batches() {
        let eq = solve(&[&[0.0, 1.0], &[1.0, 0.0], &[1.0, 0.0]]);
        assert!((eq.price[0] - 1.0 / 3.0).abs() < 1e-10);
        let b = &eq.allocations[0];
        assert!((b[0] - 1.0).abs() < 1e-9 && (b[1] - 0.5).abs() < 1e-9);

        let eq = solve(&[&[0.0, 1.0], &[1.0, 0.0], &[1.0, 0.0], &[0.0, 1.0]]);
        let b = &eq.allocations[0];
        assert!((b[0] - 0.5).abs() < 1e-9 && (b[1] - 0.5).abs() < 1e-9);
        let ub = UtilityFunction::CobbDouglasProduct
            .eval(b.as_slice())
            .unwrap();
        assert!((ub - 0.25).abs() < 1e-9);
    }

    /// Cobb-Douglas with common weights `w`: `p_i ∝ w_i / E_i`.
    #[test]
    fn matches_cobb_douglas_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let l = rng.gen_range(2..6);
            let mut w: Vec<f64> = (0..l).map(|_| rng.gen_range(0.1..1.0)).collect();
            let s: f64 = w.iter().sum();
            w.iter_mut().for_each(|x| *x /= s);
            let agents: Vec<AssetVector> = (0..rng.gen_range(1..8))
                .map(|_| {
                    av(&(0..l)
                        .map(|_| rng.gen_range(0.01..10.0))
                        .collect::<Vec<_>>())
                })
                .collect();
            let e = ExchangeEconomy::new(
                UtilityFunction::weighted_geometric(w.clone()).unwrap(),
                agents,
            )
            .unwrap();
            let eq = finite_walrasian_equilibrium(&e, &SolverSettings::default()).unwrap();
            let agg = e.aggregate();
            let oracle: Vec<f64> = w.iter().zip(&agg).map(|(a, b)| a / b).collect();
            let total: f64 = oracle.iter().sum();
            let excess = |p: &PriceVector| -> Result<Vec<f64>> {
                let mut z = vec![0.0; l];
                for a in &e.endowments {
                    for (t, v) in z.iter_mut().zip(excess_demand(&e.utility, a, p)?) {
                        *t += v;
                    }
                }
                Ok(z)
            };
            let (iterated, _, _) =
                tatonnement(excess, &agg, None, &SolverSettings::default()).unwrap();
            for ((p, q), o) in eq
                .price
                .as_slice()
                .iter()
                .zip(iterated.as_slice())
                .zip(&oracle)
            {
                assert!(
                    (p - o / total).abs() < 1e-12,
                    "{:?} vs {oracle:?}",
                    eq.price
                );
                assert!((q - o / total).abs() < 1e-9, "{iterated:?} vs {oracle:?}");
            }
            // market clearing
            for g in 0..l {
                let s: f64 = eq.allocations.iter().map(|a| a[g]).sum();
                assert!((s - agg[g]).abs() < 1e-9 * agg[g].max(1.0));
            }
        }
    }

    #[test]
    fn shifted_log_economy_clears() {
        let e = ExchangeEconomy::new(
            UtilityFunction::shifted_log_sum(vec![0.1, 0.5, 0.02]).unwrap(),
            vec![
                av(&[1.0, 0.0, 0.3]),
                av(&[0.0, 2.0, 0.0]),
                av(&[0.4, 0.1, 1.0]),
            ],
        )
        .unwrap();
        let eq = finite_walrasian_equilibrium(&e, &SolverSettings::default()).unwrap();
        let agg = e.aggregate();
        for g in 0..3 {
            let s: f64 = eq.allocations.iter().map(|a| a[g]).sum();
            assert!((s - agg[g]).abs() < 1e-9);
        }
    }

    #[test]
    fn distributional_examples() {
        let u = UtilityFunction::CobbDouglasProduct;
        let s = SolverSettings::default();
        let d = EndowmentDistribution::atoms(vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![0.5, 0.5])
            .unwrap();
        let eq = distributional_walrasian_equilibrium(&u, &d, &s, 0, 0).unwrap();
        assert!(eq.exact && (eq.price[0] - 0.5).abs() < 1e-10);

        let d = EndowmentDistribution::atoms(vec![vec![2.0, 0.0], vec![0.0, 1.0]], vec![0.5, 0.5])
            .unwrap();
        let eq = distributional_walrasian_equilibrium(&u, &d, &s, 0, 0).unwrap();
        assert!((eq.price[1] / eq.price[0] - 2.0).abs() < 1e-9);

        let eq = distributional_walrasian_equilibrium(
            &u,
            &EndowmentDistribution::unit_square(),
            &s,
            20_000,
            1,
        )
        .unwrap();
        assert!(!eq.exact);
        assert!((eq.price[0] - 0.5).abs() < 0.01, "{:?}", eq.price);
    }

    #[test]
    fn nobody_owns_a_good() {
        let d = EndowmentDistribution::point_mass(vec![1.0, 0.0]).unwrap();
        let r = distributional_walrasian_equilibrium(
            &UtilityFunction::CobbDouglasProduct,
            &d,
            &SolverSettings::default(),
            0,
            0,
        );
        assert_eq!(r.unwrap_err(), Error::Degenerate { good: 1 });
    }
}
