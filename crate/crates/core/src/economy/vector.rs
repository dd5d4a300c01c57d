use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// A nonnegative bundle of goods: endowments, reserves and allocations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct AssetVector(Vec<f64>);

impl AssetVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "bundles need at least two goods, got {}",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidInput(format!(
                "bundle entries must be finite and nonnegative, got {v}"
            )));
        }
        Ok(Self(values))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim.max(2)])
    }

    /// Builds a bundle from values that may carry tiny negative rounding noise.
    /// Entries in `[-tol, 0)` are clamped to zero; anything below fails.
    pub(crate) fn from_clamped(values: Vec<f64>, tol: f64) -> Result<Self> {
        let mut out = values;
        for v in out.iter_mut() {
            if *v < 0.0 && *v >= -tol {
                *v = 0.0;
            }
        }
        Self::new(out)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.0.iter().map(|v| v * factor).collect())
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|v| *v == 0.0)
    }
}

impl TryFrom<Vec<f64>> for AssetVector {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<AssetVector> for Vec<f64> {
    fn from(v: AssetVector) -> Self {
        v.0
    }
}

impl std::ops::Index<usize> for AssetVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Strictly positive prices. Reported prices are always simplex points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceVector {
    values: Vec<f64>,
    normalized: bool,
}

impl PriceVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "prices need at least two goods, got {}",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::InvalidInput(format!(
                "prices must be finite and positive, got {v}"
            )));
        }
        Ok(Self {
            values,
            normalized: false,
        })
    }

    /// Builds an l1-normalized price vector.
    pub fn simplex(values: Vec<f64>) -> Result<Self> {
        Ok(Self::new(values)?.normalized())
    }

    pub fn normalized(&self) -> Self {
        if self.normalized {
            return self.clone();
        }
        let total: f64 = self.values.iter().sum();
        Self {
            values: self.values.iter().map(|v| v / total).collect(),
            normalized: true,
        }
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.values
    }

    pub fn value_of(&self, bundle: &[f64]) -> Result<f64> {
        check_dim(self.dim(), bundle.len())?;
        Ok(dot(&self.values, bundle))
    }

    pub fn max_abs_diff(&self, other: &PriceVector) -> f64 {
        let a = self.normalized();
        let b = other.normalized();
        a.values
            .iter()
            .zip(&b.values)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }
}

impl std::ops::Index<usize> for PriceVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.values[i]
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
