use alloc::vec::Vec;
use core::ops::{Deref, Index};

use crate::error::{Error, Result};

/// A point of the value space: one expected discounted cost per state.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(transparent))]
pub struct ValueVector(Vec<f64>);

impl ValueVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                field: "V".into(),
            });
        }
        Ok(ValueVector(values))
    }

    pub fn zeros(len: usize) -> Self {
        ValueVector(alloc::vec![0.0; len])
    }

    pub fn constant(len: usize, value: f64) -> Self {
        ValueVector(alloc::vec![value; len])
    }

    pub(crate) fn from_vec_unchecked(values: Vec<f64>) -> Self {
        ValueVector(values)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn sup_norm(&self) -> f64 {
        self.0.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn sup_distance(&self, other: &ValueVector) -> f64 {
        sup_distance(&self.0, &other.0)
    }

    /// `self <= other` coordinate-wise, with additive slack.
    pub fn le_within(&self, other: &ValueVector, slack: f64) -> bool {
        self.0.iter().zip(&other.0).all(|(a, b)| *a <= *b + slack)
    }

    pub fn min_coord(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_coord(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

impl Deref for ValueVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl Index<usize> for ValueVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl From<ValueVector> for Vec<f64> {
    fn from(v: ValueVector) -> Vec<f64> {
        v.0
    }
}

/// Sup-norm distance between two equally long slices.
pub fn sup_distance(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

pub(crate) fn check_len(axis: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch {
            axis,
            expected,
            found,
        });
    }
    Ok(())
}
