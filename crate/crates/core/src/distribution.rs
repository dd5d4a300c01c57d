//! Endowment distributions, per-draw random streams and expectations over them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::economy::AssetVector;
use crate::error::{Error, Result};
use crate::stats::{Estimate, Welford};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case", deny_unknown_fields)]
pub enum EndowmentDistribution {
    UniformBox {
        lo: AssetVector,
        hi: AssetVector,
    },
    DiscreteAtoms {
        points: Vec<AssetVector>,
        probs: Vec<f64>,
    },
    /// Each good is `delta_max` with probability `p`, independently.
    BernoulliProduct {
        p: f64,
        delta_max: f64,
        dimension: usize,
    },
}

/// Independent stream for draw `index` under `seed`. Draws never depend on
/// how many other draws were made or on which thread made them.
pub fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

impl EndowmentDistribution {
    pub fn uniform_box(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        let d = Self::UniformBox {
            lo: AssetVector::new(lo)?,
            hi: AssetVector::new(hi)?,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn unit_square() -> Self {
        Self::uniform_box(vec![0.0, 0.0], vec![1.0, 1.0]).expect("valid box")
    }

    pub fn atoms(points: Vec<Vec<f64>>, probs: Vec<f64>) -> Result<Self> {
        let d = Self::DiscreteAtoms {
            points: points
                .into_iter()
                .map(AssetVector::new)
                .collect::<Result<_>>()?,
            probs,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn point_mass(point: Vec<f64>) -> Result<Self> {
        Self::atoms(vec![point], vec![1.0])
    }

    pub fn bernoulli(p: f64, delta_max: f64, dimension: usize) -> Result<Self> {
        let d = Self::BernoulliProduct {
            p,
            delta_max,
            dimension,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::UniformBox { lo, hi } => {
                if lo.dim() != hi.dim() {
                    return Err(Error::DimensionMismatch {
                        expected: lo.dim(),
                        got: hi.dim(),
                    });
                }
                if lo.as_slice().iter().zip(hi.as_slice()).any(|(a, b)| a > b) {
                    return Err(Error::InvalidInput(format!(
                        "box corners out of order: {lo:?} > {hi:?}"
                    )));
                }
            }
            Self::DiscreteAtoms { points, probs } => {
                if points.is_empty() || points.len() != probs.len() {
                    return Err(Error::InvalidInput(format!(
                        "{} atoms with {} probabilities",
                        points.len(),
                        probs.len()
                    )));
                }
                let dim = points[0].dim();
                if let Some(p) = points.iter().find(|p| p.dim() != dim) {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        got: p.dim(),
                    });
                }
                if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                    return Err(Error::InvalidInput(format!(
                        "atom probabilities must be nonnegative, got {probs:?}"
                    )));
                }
                let total: f64 = probs.iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(Error::InvalidInput(format!(
                        "atom probabilities sum to {total}, not 1"
                    )));
                }
            }
            Self::BernoulliProduct {
                p,
                delta_max,
                dimension,
            } => {
                if !(0.0..=1.0).contains(p) {
                    return Err(Error::InvalidInput(format!(
                        "bernoulli p must lie in [0,1], got {p}"
                    )));
                }
                if !(delta_max.is_finite() && *delta_max >= 0.0) {
                    return Err(Error::InvalidInput(format!(
                        "delta_max must be finite and nonnegative, got {delta_max}"
                    )));
                }
                if *dimension < 2 || *dimension > 16 {
                    return Err(Error::InvalidInput(format!(
                        "bernoulli dimension must be in 2..=16, got {dimension}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::UniformBox { lo, .. } => lo.dim(),
            Self::DiscreteAtoms { points, .. } => points[0].dim(),
            Self::BernoulliProduct { dimension, .. } => *dimension,
        }
    }

    /// Exact support with probabilities for finite distributions.
    pub fn support(&self) -> Option<Vec<(f64, AssetVector)>> {
        match self {
            Self::UniformBox { lo, hi } => {
                if lo == hi {
                    Some(vec![(1.0, lo.clone())])
                } else {
                    None
                }
            }
            Self::DiscreteAtoms { points, probs } => Some(
                probs
                    .iter()
                    .zip(points)
                    .filter(|(p, _)| **p > 0.0)
                    .map(|(p, x)| (*p, x.clone()))
                    .collect(),
            ),
            Self::BernoulliProduct {
                p,
                delta_max,
                dimension,
            } => {
                let mut out = Vec::with_capacity(1 << dimension);
                for mask in 0u32..(1 << dimension) {
                    let mut prob = 1.0;
                    let mut x = Vec::with_capacity(*dimension);
                    for i in 0..*dimension {
                        if mask & (1 << i) != 0 {
                            prob *= p;
                            x.push(*delta_max);
                        } else {
                            prob *= 1.0 - p;
                            x.push(0.0);
                        }
                    }
                    if prob > 0.0 {
                        out.push((prob, AssetVector::new(x).expect("nonnegative atom")));
                    }
                }
                Some(out)
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> AssetVector {
        match self {
            Self::UniformBox { lo, hi } => AssetVector::new(
                lo.as_slice()
                    .iter()
                    .zip(hi.as_slice())
                    .map(|(a, b)| a + (b - a) * rng.gen::<f64>())
                    .collect(),
            )
            .expect("inside the box"),
            Self::DiscreteAtoms { points, probs } => {
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                for (p, x) in probs.iter().zip(points) {
                    acc += p;
                    if u < acc {
                        return x.clone();
                    }
                }
                let last = probs.iter().rposition(|p| *p > 0.0).unwrap_or(0);
                points[last].clone()
            }
            Self::BernoulliProduct {
                p,
                delta_max,
                dimension,
            } => AssetVector::new(
                (0..*dimension)
                    .map(|_| {
                        if rng.gen::<f64>() < *p {
                            *delta_max
                        } else {
                            0.0
                        }
                    })
                    .collect(),
            )
            .expect("nonnegative draw"),
        }
    }

    /// The exact support for finite distributions, otherwise `n_samples`
    /// equally weighted draws from streams `0..n_samples` of `seed`.
    pub fn sample_set(&self, n_samples: usize, seed: u64) -> Result<SampleSet> {
        self.validate()?;
        if let Some(atoms) = self.support() {
            let (weights, points) = atoms.into_iter().unzip();
            return Ok(SampleSet {
                points,
                weights,
                exact: true,
            });
        }
        if n_samples == 0 {
            return Err(Error::InvalidInput(
                "continuous distributions need n_samples > 0".into(),
            ));
        }
        let points: Vec<AssetVector> = (0..n_samples as u64)
            .into_par_iter()
            .map(|i| self.sample(&mut stream(seed, i)))
            .collect();
        let w = 1.0 / n_samples as f64;
        Ok(SampleSet {
            points,
            weights: vec![w; n_samples],
            exact: false,
        })
    }
}

/// Weighted points standing in for a distribution: either its exact support
/// or a fixed Monte Carlo sample (common random numbers across evaluations).
#[derive(Debug, Clone)]
pub struct SampleSet {
    pub points: Vec<AssetVector>,
    pub weights: Vec<f64>,
    pub exact: bool,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Evaluates `f` on every point (in parallel) and returns the values in order.
    pub fn map<T, F>(&self, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(&AssetVector) -> Result<T> + Sync + Send,
    {
        self.points.par_iter().map(f).collect()
    }

    /// `E[f]`, exact for finite support, Monte Carlo with its standard error otherwise.
    pub fn mean<F>(&self, f: F) -> Result<Estimate>
    where
        F: Fn(&AssetVector) -> Result<f64> + Sync + Send,
    {
        let values = self.map(f)?;
        Ok(self.reduce(&values))
    }

    pub fn reduce(&self, values: &[f64]) -> Estimate {
        if self.exact {
            let mean = values.iter().zip(&self.weights).map(|(v, w)| v * w).sum();
            return Estimate::exact(mean);
        }
        let mut acc = Welford::default();
        for v in values {
            acc.push(*v);
        }
        let mut e = acc.estimate();
        if values.contains(&f64::NEG_INFINITY) {
            e = Estimate {
                mean: f64::NEG_INFINITY,
                std_err: f64::NAN,
            };
        }
        e
    }

    /// Componentwise weighted mean of vector-valued `f`.
    pub fn mean_vec<F>(&self, f: F) -> Result<Vec<f64>>
    where
        F: Fn(&AssetVector) -> Result<Vec<f64>> + Sync + Send,
    {
        let values = self.map(f)?;
        let dim = values.first().map_or(0, |v| v.len());
        let mut out = vec![0.0; dim];
        for (v, w) in values.iter().zip(&self.weights) {
            for (o, x) in out.iter_mut().zip(v) {
                *o += w * x;
            }
        }
        Ok(out)
    }
}
