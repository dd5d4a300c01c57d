//! Walrasian MEV of a block builder: batch allocation, subset selection under
//! censoring rules, the uninformed builder's gap and expected MEV over pool
//! reserves.

use std::cell::Cell;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cfmm::{CfmmState, TradingFunction};
use crate::distribution::{stream, EndowmentDistribution};
use crate::economy::{AssetVector, ExchangeEconomy, PriceVector, UtilityFunction};
use crate::error::{check_dim, Error, Result};
use crate::solvers::{
    distributional_walrasian_equilibrium, finite_walrasian_equilibrium, price_to_reserves,
    trade_choice, SolverSettings,
};
use crate::stats::{Estimate, Welford};

/// Largest transaction count searched exhaustively.
pub const EXACT_SEARCH_CAP: usize = 20;

/// Utilities closer than this (relative) are ties, broken by index order.
const TIE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transaction {
    pub utility: UtilityFunction,
    pub endowment: AssetVector,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BuilderMode {
    /// Any subset of at most `capacity - 1` transactions.
    Censoring,
    /// Exactly `min(M, capacity - 1)` transactions.
    CensorshipMinimizer,
    /// The builder cannot see transactions and takes them in arrival order.
    Uninformed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchMode {
    Exact,
    Heuristic,
    /// Exact up to [`EXACT_SEARCH_CAP`] transactions, heuristic beyond.
    Auto,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuilderProblem {
    /// Shared by the builder and every transaction.
    pub utility: UtilityFunction,
    pub builder_endowment: AssetVector,
    pub transactions: Vec<Transaction>,
    /// Block size including the builder's own transaction.
    pub capacity: usize,
    pub mode: BuilderMode,
}

impl BuilderProblem {
    pub fn validate(&self) -> Result<()> {
        let l = self.builder_endowment.dim();
        self.utility.check(l)?;
        if self.capacity == 0 {
            return Err(Error::InvalidInput("capacity must be at least 1".into()));
        }
        for (i, t) in self.transactions.iter().enumerate() {
            check_dim(l, t.endowment.dim())?;
            if t.utility != self.utility {
                return Err(Error::Unsupported(format!(
                    "transaction {i} has utility {}, but batches need a common utility",
                    t.utility.name()
                )));
            }
        }
        Ok(())
    }

    fn max_included(&self) -> usize {
        self.capacity - 1
    }
}

/// Allocation of one batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchAllocation {
    /// Equilibrium price on the goods present in the batch; `None` when at
    /// most one good has positive supply (nobody can trade).
    pub price: Option<PriceVector>,
    pub allocations: Vec<AssetVector>,
}

/// Walrasian allocation of a batch sharing one utility. Goods nobody in the
/// batch owns are left out of the market (their allocations are zero).
pub fn batch_walrasian_allocation(
    txs: &[Transaction],
    settings: &SolverSettings,
) -> Result<BatchAllocation> {
    let Some(first) = txs.first() else {
        return Err(Error::InvalidInput("empty batch".into()));
    };
    let u = &first.utility;
    for t in txs {
        if t.utility != *u {
            return Err(Error::Unsupported("batches need a common utility".into()));
        }
    }
    allocate(
        u,
        &txs.iter().map(|t| t.endowment.clone()).collect::<Vec<_>>(),
        settings,
    )
}

fn allocate(
    u: &UtilityFunction,
    endowments: &[AssetVector],
    settings: &SolverSettings,
) -> Result<BatchAllocation> {
    let l = endowments[0].dim();
    let mut supply = vec![0.0; l];
    for e in endowments {
        check_dim(l, e.dim())?;
        for (s, v) in supply.iter_mut().zip(e.as_slice()) {
            *s += v;
        }
    }
    let active: Vec<usize> = (0..l).filter(|i| supply[*i] > 0.0).collect();
    if active.len() < 2 {
        return Ok(BatchAllocation {
            price: None,
            allocations: endowments.to_vec(),
        });
    }
    if active.len() == l {
        let eq = finite_walrasian_equilibrium(
            &ExchangeEconomy::new(u.clone(), endowments.to_vec())?,
            settings,
        )?;
        return Ok(BatchAllocation {
            price: Some(eq.price),
            allocations: eq.allocations,
        });
    }
    let restricted = u.restricted(&active);
    let sub: Vec<AssetVector> = endowments
        .iter()
        .map(|e| AssetVector::new(active.iter().map(|i| e[*i]).collect()))
        .collect::<Result<_>>()?;
    let eq = finite_walrasian_equilibrium(&ExchangeEconomy::new(restricted, sub)?, settings)?;
    let allocations = eq
        .allocations
        .iter()
        .map(|a| {
            let mut full = vec![0.0; l];
            for (k, i) in active.iter().enumerate() {
                full[*i] = a[k];
            }
            AssetVector::new(full)
        })
        .collect::<Result<_>>()?;
    Ok(BatchAllocation {
        price: Some(eq.price),
        allocations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MevResult {
    pub mode: BuilderMode,
    /// Included transaction indices, ascending.
    pub subset: Vec<usize>,
    pub price: Option<PriceVector>,
    pub builder_allocation: AssetVector,
    pub utility: f64,
    /// True when every admissible subset was evaluated.
    pub exact: bool,
    /// Evaluated batches in which some good had no supply.
    pub degenerate_batches: usize,
}

struct Scored {
    utility: f64,
    subset: Vec<usize>,
    degenerate: bool,
}

fn score(
    p: &BuilderProblem,
    subset: &[usize],
    settings: &SolverSettings,
) -> Result<(Scored, BatchAllocation)> {
    let mut endowments = vec![p.builder_endowment.clone()];
    endowments.extend(subset.iter().map(|i| p.transactions[*i].endowment.clone()));
    let batch = allocate(&p.utility, &endowments, settings)?;
    let utility = p.utility.eval_unchecked(batch.allocations[0].as_slice());
    let l = endowments[0].dim();
    let degenerate = (0..l).any(|g| endowments.iter().all(|e| e[g] == 0.0));
    Ok((
        Scored {
            utility,
            subset: subset.to_vec(),
            degenerate,
        },
        batch,
    ))
}

fn better(a: &Scored, b: &Scored) -> bool {
    let tol = TIE * a.utility.abs().max(b.utility.abs()).max(1.0);
    if a.utility.is_finite() && b.utility.is_finite() && (a.utility - b.utility).abs() <= tol {
        return a.subset < b.subset;
    }
    a.utility > b.utility
}

fn indices(mask: u32) -> Vec<usize> {
    (0..32).filter(|i| mask & (1 << i) != 0).collect()
}

fn exhaustive(
    p: &BuilderProblem,
    size: impl Fn(usize) -> bool + Sync,
    settings: &SolverSettings,
) -> Result<(Scored, usize)> {
    let m = p.transactions.len();
    let scored: Vec<Scored> = (0u32..(1u32 << m))
        .into_par_iter()
        .filter(|mask| size(mask.count_ones() as usize))
        .map(|mask| score(p, &indices(mask), settings).map(|s| s.0))
        .collect::<Result<_>>()?;
    let degenerate = scored.iter().filter(|s| s.degenerate).count();
    let mut best: Option<Scored> = None;
    for s in scored {
        if best.as_ref().is_none_or(|b| better(&s, b)) {
            best = Some(s);
        }
    }
    Ok((
        best.expect("the empty or full subset is admissible"),
        degenerate,
    ))
}

/// Greedy local search over single additions, removals (when `swap_only` is
/// false) or one-for-one swaps.
fn local_search(
    p: &BuilderProblem,
    start: Vec<usize>,
    admissible: impl Fn(usize) -> bool,
    swap_only: bool,
    settings: &SolverSettings,
) -> Result<(Scored, usize)> {
    let m = p.transactions.len();
    let degenerate = Cell::new(0);
    let eval = |s: Vec<usize>| -> Result<Scored> {
        let (sc, _) = score(p, &s, settings)?;
        degenerate.set(degenerate.get() + usize::from(sc.degenerate));
        Ok(sc)
    };
    let mut current = eval(start)?;
    loop {
        let mut moves: Vec<Vec<usize>> = Vec::new();
        let inside = |i: usize, s: &[usize]| s.binary_search(&i).is_ok();
        if !swap_only {
            for i in 0..m {
                let mut s = current.subset.clone();
                match s.binary_search(&i) {
                    Ok(pos) => {
                        s.remove(pos);
                    }
                    Err(pos) => s.insert(pos, i),
                }
                if admissible(s.len()) {
                    moves.push(s);
                }
            }
        } else {
            for &out in &current.subset {
                for inn in (0..m).filter(|i| !inside(*i, &current.subset)) {
                    let mut s: Vec<usize> = current
                        .subset
                        .iter()
                        .copied()
                        .filter(|i| *i != out)
                        .collect();
                    s.push(inn);
                    s.sort_unstable();
                    moves.push(s);
                }
            }
        }
        let mut improved = false;
        for s in moves {
            let cand = eval(s)?;
            let tol = TIE * current.utility.abs().max(1.0);
            let gain = if current.utility.is_finite() {
                cand.utility > current.utility + tol
            } else {
                cand.utility > current.utility
            };
            if gain {
                current = cand;
                improved = true;
            }
        }
        if !improved {
            return Ok((current, degenerate.get()));
        }
    }
}

fn use_exact(p: &BuilderProblem, search: SearchMode) -> Result<bool> {
    let m = p.transactions.len();
    match search {
        SearchMode::Exact if m > EXACT_SEARCH_CAP => Err(Error::EnumerationCap {
            cap: EXACT_SEARCH_CAP,
            got: m,
        }),
        SearchMode::Exact => Ok(true),
        SearchMode::Heuristic => Ok(false),
        SearchMode::Auto => Ok(m <= EXACT_SEARCH_CAP),
    }
}

fn finish(
    p: &BuilderProblem,
    best: Scored,
    exact: bool,
    degenerate_batches: usize,
    settings: &SolverSettings,
) -> Result<MevResult> {
    let (scored, batch) = score(p, &best.subset, settings)?;
    Ok(MevResult {
        mode: p.mode,
        subset: scored.subset,
        price: batch.price,
        builder_allocation: batch.allocations[0].clone(),
        utility: scored.utility,
        exact,
        degenerate_batches,
    })
}

/// Best subset of at most `capacity - 1` transactions for the builder.
pub fn censoring_mev(
    p: &BuilderProblem,
    search: SearchMode,
    settings: &SolverSettings,
) -> Result<MevResult> {
    p.validate()?;
    let cap = p.max_included();
    let (best, degenerate, exact) = if use_exact(p, search)? {
        let (b, d) = exhaustive(p, |k| k <= cap, settings)?;
        (b, d, true)
    } else {
        let (b, d) = local_search(p, Vec::new(), |k| k <= cap, false, settings)?;
        (b, d, false)
    };
    finish(p, best, exact, degenerate, settings)
}

/// Best subset of exactly `min(M, capacity - 1)` transactions.
pub fn censorship_min_mev(
    p: &BuilderProblem,
    search: SearchMode,
    settings: &SolverSettings,
) -> Result<MevResult> {
    p.validate()?;
    let k = p.transactions.len().min(p.max_included());
    let (best, degenerate, exact) = if use_exact(p, search)? {
        let (b, d) = exhaustive(p, |n| n == k, settings)?;
        (b, d, true)
    } else {
        let (b, d) = local_search(p, (0..k).collect(), |n| n == k, true, settings)?;
        (b, d, false)
    };
    finish(p, best, exact, degenerate, settings)
}

/// The first `min(M, capacity - 1)` transactions in arrival order.
pub fn uninformed_mev(p: &BuilderProblem, settings: &SolverSettings) -> Result<MevResult> {
    p.validate()?;
    let k = p.transactions.len().min(p.max_included());
    let subset: Vec<usize> = (0..k).collect();
    let (best, _) = score(p, &subset, settings)?;
    let degenerate = usize::from(best.degenerate);
    finish(p, best, true, degenerate, settings)
}

/// Dispatches on `p.mode`.
pub fn solve_builder(
    p: &BuilderProblem,
    search: SearchMode,
    settings: &SolverSettings,
) -> Result<MevResult> {
    match p.mode {
        BuilderMode::Censoring => censoring_mev(p, search, settings),
        BuilderMode::CensorshipMinimizer => censorship_min_mev(p, search, settings),
        BuilderMode::Uninformed => uninformed_mev(p, settings),
    }
}

/// Builder versus an ordinary sender when blocks are filled blindly: the
/// builder's own transaction is always included, anyone else's with
/// probability `inclusion_prob`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuilderGap {
    pub inclusion_prob: f64,
    pub equilibrium_price: PriceVector,
    /// `Wf(D, U)`: `E[U(zeta(endowment, p*))]`.
    pub expected_mev: Estimate,
    /// `E[U(endowment)]`.
    pub autarky: Estimate,
    /// `Pr Wf + (1 - Pr) E[U(endowment)]`.
    pub non_builder_value: f64,
    /// `(1 - Pr)(Wf - E[U(endowment)])`.
    pub gap: f64,
}

pub fn uninformed_builder_gap(
    u: &UtilityFunction,
    dist: &EndowmentDistribution,
    inclusion_prob: f64,
    settings: &SolverSettings,
    n_samples: usize,
    seed: u64,
) -> Result<BuilderGap> {
    check_probability(inclusion_prob)?;
    let eq = distributional_walrasian_equilibrium(u, dist, settings, n_samples, seed)?;
    let set = dist.sample_set(n_samples, seed)?;
    let autarky = set.mean(|x| u.eval(x.as_slice()))?;
    let wf = eq.welfare.mean;
    let non_builder_value = inclusion_prob * wf + (1.0 - inclusion_prob) * autarky.mean;
    Ok(BuilderGap {
        inclusion_prob,
        equilibrium_price: eq.price,
        expected_mev: eq.welfare,
        autarky,
        non_builder_value,
        gap: wf - non_builder_value,
    })
}

fn check_probability(p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidInput(format!(
            "inclusion probability must lie in [0, 1], got {p}"
        )));
    }
    Ok(())
}

/// Monte Carlo of the builder gap at a given clearing price: each draw pairs
/// the builder's payoff `U(zeta(x, p))` with an ordinary sender's, who is
/// included with probability `inclusion_prob` and otherwise keeps `x`.
/// Returns the mean paired difference and its standard error.
pub fn simulate_builder_gap(
    u: &UtilityFunction,
    dist: &EndowmentDistribution,
    price: &PriceVector,
    inclusion_prob: f64,
    n_samples: usize,
    seed: u64,
) -> Result<Estimate> {
    check_probability(inclusion_prob)?;
    dist.validate()?;
    if n_samples == 0 {
        return Err(Error::InvalidInput("need at least one sample".into()));
    }
    let diffs: Vec<f64> = (0..n_samples as u64)
        .into_par_iter()
        .map(|i| {
            use rand::Rng;
            let mut rng = stream(seed, i);
            let x = dist.sample(&mut rng);
            let included = rng.gen::<f64>() < inclusion_prob;
            let traded = u.eval(u.demand(&x, price)?.as_slice())?;
            let sender = if included {
                traded
            } else {
                u.eval(x.as_slice())?
            };
            Ok(traded - sender)
        })
        .collect::<Result<_>>()?;
    let mut acc = Welford::default();
    for d in diffs {
        acc.push(d);
    }
    Ok(acc.estimate())
}

/// `E[U(zeta(endowment, R, C))]`: expected utility of one agent trading
/// against the pool.
pub fn expected_trade_utility(
    u: &UtilityFunction,
    dist: &EndowmentDistribution,
    pool: &CfmmState,
    settings: &SolverSettings,
    n_samples: usize,
    seed: u64,
) -> Result<Estimate> {
    let set = dist.sample_set(n_samples, seed)?;
    set.mean(|x| Ok(u.eval_unchecked(trade_choice(u, x, pool, settings)?.bundle.as_slice())))
}

/// Paired (common random numbers) estimate of
/// `E[U(zeta(x, pool a))] - E[U(zeta(x, pool b))]`.
pub fn paired_trade_utility_difference(
    u: &UtilityFunction,
    dist: &EndowmentDistribution,
    a: &CfmmState,
    b: &CfmmState,
    settings: &SolverSettings,
    n_samples: usize,
    seed: u64,
) -> Result<Estimate> {
    let set = dist.sample_set(n_samples, seed)?;
    set.mean(|x| {
        let ua = u.eval_unchecked(trade_choice(u, x, a, settings)?.bundle.as_slice());
        let ub = u.eval_unchecked(trade_choice(u, x, b, settings)?.bundle.as_slice());
        Ok(ua - ub)
    })
}

/// Expected trade utility with the pool's reserves placed at each grid price
/// on the level set `C = level`.
#[allow(clippy::too_many_arguments)]
pub fn expected_trade_utility_surface(
    u: &UtilityFunction,
    dist: &EndowmentDistribution,
    c: &TradingFunction,
    level: f64,
    grid: &[PriceVector],
    settings: &SolverSettings,
    n_samples: usize,
    seed: u64,
) -> Result<Vec<(PriceVector, Estimate)>> {
    grid.iter()
        .map(|p| {
            let pool = CfmmState::new(c.clone(), price_to_reserves(c, level, p)?, 0.0)?;
            let e = expected_trade_utility(u, dist, &pool, settings, n_samples, seed)?;
            Ok((p.clone(), e))
        })
        .collect()
}
