//! Core vector and identifier types.

use crate::{Error, Result};
use serde::Serialize;
use std::fmt;

/// Identifier of an enrolled client, stable across rounds.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize)]
#[serde(transparent)]
pub struct ClientId(pub u32);

impl fmt::Display for ClientId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Fixed-dimension real vector of model coordinates.
///
/// Holds global parameters, local update deltas, and perturbed updates.
/// Construction rejects non-finite entries; the arithmetic helpers check
/// dimensions so downstream code cannot silently mix models of different
/// size.
#[derive(Clone, PartialEq, Debug, Serialize)]
#[serde(transparent)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    /// The all-zeros vector of dimension `d`.
    pub fn zeros(d: usize) -> Self {
        ParamVector(vec![0.0; d])
    }

    /// Wraps `values`, rejecting NaN and infinities.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(ParamVector(values))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_values(self) -> Vec<f64> {
        self.0
    }

    /// Euclidean norm.
    pub fn l2_norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Element-wise multiplication by a scalar.
    pub fn scaled(&self, factor: f64) -> ParamVector {
        let out: Vec<f64> = self.0.iter().map(|v| v * factor).collect();
        debug_assert!(out.iter().all(|v| v.is_finite()));
        ParamVector(out)
    }

    /// Element-wise sum; dimensions must agree.
    pub fn add(&self, other: &ParamVector) -> Result<ParamVector> {
        self.check_dim(other)?;
        let out: Vec<f64> = self
            .0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| a + b)
            .collect();
        debug_assert!(out.iter().all(|v| v.is_finite()));
        Ok(ParamVector(out))
    }

    /// Element-wise difference; dimensions must agree.
    pub fn sub(&self, other: &ParamVector) -> Result<ParamVector> {
        self.check_dim(other)?;
        let out: Vec<f64> = self
            .0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| a - b)
            .collect();
        debug_assert!(out.iter().all(|v| v.is_finite()));
        Ok(ParamVector(out))
    }

    fn check_dim(&self, other: &ParamVector) -> Result<()> {
        if self.len() != other.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                got: other.len(),
            });
        }
        Ok(())
    }
}
