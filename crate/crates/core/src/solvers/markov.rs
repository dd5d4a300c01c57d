//! Finite Markov chains over pool reserves and their stationary distributions.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use serde::{Deserialize, Serialize};

use super::{trade_choice, SolverSettings};
use crate::cfmm::CfmmState;
use crate::distribution::EndowmentDistribution;
use crate::economy::UtilityFunction;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovChain {
    /// Reserve vector labelling each state.
    pub states: Vec<Vec<f64>>,
    /// Row-stochastic, `transition[i][j] = Pr[i -> j]`.
    pub transition: Vec<Vec<f64>>,
}

impl MarkovChain {
    pub fn new(states: Vec<Vec<f64>>, transition: Vec<Vec<f64>>) -> Result<Self> {
        let chain = Self { states, transition };
        chain.validate()?;
        Ok(chain)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.transition.len();
        if n == 0 || self.states.len() != n {
            return Err(Error::InvalidInput(format!(
                "chain has {} labels for {n} transition rows",
                self.states.len()
            )));
        }
        for (i, row) in self.transition.iter().enumerate() {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: row.len(),
                });
            }
            if row.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                return Err(Error::InvalidInput(format!("row {i} has a negative entry")));
            }
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidInput(format!("row {i} sums to {total}")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.transition.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transition.is_empty()
    }

    fn components(&self) -> Vec<Vec<usize>> {
        let n = self.len();
        let mut g = DiGraph::<(), ()>::with_capacity(n, n);
        let nodes: Vec<_> = (0..n).map(|_| g.add_node(())).collect();
        for (i, row) in self.transition.iter().enumerate() {
            for (j, p) in row.iter().enumerate() {
                if *p > 0.0 {
                    g.add_edge(nodes[i], nodes[j], ());
                }
            }
        }
        tarjan_scc(&g)
            .into_iter()
            .map(|scc| {
                let mut s: Vec<usize> = scc.into_iter().map(|v| v.index()).collect();
                s.sort_unstable();
                s
            })
            .collect()
    }

    /// Every state reaches every other.
    pub fn is_irreducible(&self) -> bool {
        self.components().len() == 1
    }

    /// Communicating classes that the chain never leaves.
    pub fn closed_classes(&self) -> Vec<Vec<usize>> {
        let components = self.components();
        let mut component = vec![0; self.len()];
        for (c, scc) in components.iter().enumerate() {
            for v in scc {
                component[*v] = c;
            }
        }
        let mut classes: Vec<Vec<usize>> = components
            .into_iter()
            .enumerate()
            .filter(|(c, scc)| {
                scc.iter().all(|v| {
                    self.transition[*v]
                        .iter()
                        .enumerate()
                        .all(|(j, p)| *p == 0.0 || component[j] == *c)
                })
            })
            .map(|(_, scc)| scc)
            .collect();
        classes.sort();
        classes
    }

    fn residual(&self, pi: &[f64]) -> f64 {
        let n = self.len();
        (0..n)
            .map(|j| {
                let flow: f64 = (0..n).map(|i| pi[i] * self.transition[i][j]).sum();
                (flow - pi[j]).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// `pi` with `pi P = pi`, `sum pi = 1`, for an irreducible chain. Solved as a
/// linear system (aperiodicity is not needed); a lazy power iteration takes
/// over if the direct solve is inaccurate.
pub fn stationary_distribution(chain: &MarkovChain, settings: &SolverSettings) -> Result<Vec<f64>> {
    chain.validate()?;
    if !chain.is_irreducible() {
        return Err(Error::Reducible {
            classes: chain.closed_classes(),
        });
    }
    let n = chain.len();
    let mut a = DMatrix::<f64>::from_fn(n, n, |i, j| {
        chain.transition[j][i] - if i == j { 1.0 } else { 0.0 }
    });
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(n);
    b[n - 1] = 1.0;
    if let Some(x) = a.lu().solve(&b) {
        let pi = clean(x.as_slice());
        if chain.residual(&pi) <= settings.tolerance {
            return Ok(pi);
        }
    }

    let mut pi = vec![1.0 / n as f64; n];
    for _ in 0..settings.max_iterations {
        let mut next = vec![0.0; n];
        for (i, row) in chain.transition.iter().enumerate() {
            for (j, p) in row.iter().enumerate() {
                next[j] += 0.5 * pi[i] * p;
            }
            next[i] += 0.5 * pi[i];
        }
        pi = clean(&next);
        if chain.residual(&pi) <= settings.tolerance {
            return Ok(pi);
        }
    }
    Err(Error::NonConvergence {
        what: "stationary distribution",
        iterations: settings.max_iterations,
        residual: chain.residual(&pi),
    })
}

fn clean(x: &[f64]) -> Vec<f64> {
    let clipped: Vec<f64> = x.iter().map(|v| v.max(0.0)).collect();
    let total: f64 = clipped.iter().sum();
    clipped.iter().map(|v| v / total).collect()
}

/// Constant-sum pool `x + y = r1 + r2` traded against by Cobb-Douglas agents
/// with Bernoulli(1/2) endowments in `{0, 1}^2`: `x` moves by `+1/2` or `-1/2`
/// with probability 1/4 each and stays put otherwise. A move past the boundary
/// is a self-loop.
pub fn build_csmm_example_chain(r1: u32, r2: u32) -> Result<MarkovChain> {
    if r1 == 0 || r2 == 0 {
        return Err(Error::InvalidInput(format!(
            "example chain needs positive integer reserves, got ({r1}, {r2})"
        )));
    }
    let total = (r1 + r2) as usize;
    let n = 2 * total + 1;
    let mut transition = vec![vec![0.0; n]; n];
    for (j, row) in transition.iter_mut().enumerate() {
        row[j] = 0.5;
        if j + 1 < n {
            row[j + 1] += 0.25;
        } else {
            row[j] += 0.25;
        }
        if j > 0 {
            row[j - 1] += 0.25;
        } else {
            row[j] += 0.25;
        }
    }
    let states = (0..n)
        .map(|j| {
            let x = j as f64 / 2.0;
            vec![x, total as f64 - x]
        })
        .collect();
    MarkovChain::new(states, transition)
}

/// Quantizes reserves so that states reached along different paths merge.
fn state_key(r: &[f64]) -> Vec<i64> {
    r.iter()
        .map(|x| (x * 1_073_741_824.0).round() as i64)
        .collect()
}

/// Breadth-first enumeration of the reserves reachable from `state` when each
/// step trades one endowment drawn from the finite distribution `dist`.
pub fn enumerate_chain(
    u: &UtilityFunction,
    dist: &EndowmentDistribution,
    state: &CfmmState,
    settings: &SolverSettings,
    max_states: usize,
) -> Result<MarkovChain> {
    let atoms = dist.support().ok_or_else(|| {
        Error::Unsupported("chain enumeration needs a finitely supported distribution".into())
    })?;
    let mut index: HashMap<Vec<i64>, usize> = HashMap::new();
    let mut states = vec![state.reserves.as_slice().to_vec()];
    index.insert(state_key(&states[0]), 0);
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut next = 0;
    while next < states.len() {
        let here = state.with_reserves(crate::economy::AssetVector::new(states[next].clone())?)?;
        let mut row: Vec<(usize, f64)> = Vec::new();
        for (prob, d) in &atoms {
            let t = trade_choice(u, d, &here, settings)?;
            let r = t.reserves.into_inner();
            let key = state_key(&r);
            let j = match index.get(&key) {
                Some(j) => *j,
                None => {
                    if states.len() == max_states {
                        return Err(Error::StateCap { cap: max_states });
                    }
                    index.insert(key, states.len());
                    states.push(r);
                    states.len() - 1
                }
            };
            match row.iter_mut().find(|(k, _)| *k == j) {
                Some(entry) => entry.1 += prob,
                None => row.push((j, *prob)),
            }
        }
        rows.push(row);
        next += 1;
    }
    let n = states.len();
    let transition = rows
        .into_iter()
        .map(|row| {
            let mut dense = vec![0.0; n];
            for (j, p) in row {
                dense[j] += p;
            }
            let total: f64 = dense.iter().sum();
            dense.iter().map(|p| p / total).collect()
        })
        .collect();
    MarkovChain::new(states, transition)
}
