//! Real-valued functions on the point set.

use crate::error::{Error, Result};
use crate::space::Space;

/// A real-valued function on the points of a [`Space`].
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    values: Vec<f64>,
}

impl Field {
    pub fn new(values: Vec<f64>) -> Self {
        Field { values }
    }

    pub fn constant(n: usize, c: f64) -> Self {
        Field { values: vec![c; n] }
    }

    pub fn zeros(n: usize) -> Self {
        Field::constant(n, 0.0)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Check that the field lives on `space` and all entries are finite.
    pub fn check_on(&self, space: &Space) -> Result<()> {
        if self.len() != space.n() {
            return Err(Error::DimensionMismatch {
                expected: space.n(),
                got: self.len(),
            });
        }
        if let Some(v) = self.values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite entry {v}")));
        }
        Ok(())
    }

    /// Entrywise map.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field::new(self.values.iter().map(|&v| f(v)).collect())
    }

    /// Entrywise absolute value.
    pub fn abs(&self) -> Field {
        self.map(f64::abs)
    }

    /// Positive part `f^+ = max(f, 0)`.
    pub fn positive_part(&self) -> Field {
        self.map(|v| v.max(0.0))
    }

    /// Negative part `f^- = max(-f, 0)`.
    pub fn negative_part(&self) -> Field {
        self.map(|v| (-v).max(0.0))
    }

    pub fn scale(&self, c: f64) -> Field {
        self.map(|v| c * v)
    }

    pub fn add(&self, other: &Field) -> Field {
        Field::new(
            self.values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + b)
                .collect(),
        )
    }

    pub fn sub(&self, other: &Field) -> Field {
        Field::new(
            self.values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a - b)
                .collect(),
        )
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

impl std::ops::Index<usize> for Field {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.values[i]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::build_two_state;

    #[test]
    fn parts_split_sign() {
        let f = Field::new(vec![2.0, -3.0, 0.0]);
        assert_eq!(f.positive_part().values(), &[2.0, 0.0, 0.0]);
        assert_eq!(f.negative_part().values(), &[0.0, 3.0, 0.0]);
        assert_eq!(
            f.positive_part().sub(&f.negative_part()).values(),
            f.values()
        );
    }

    #[test]
    fn check_on_rejects_mismatch_and_nan() {
        let s = build_two_state(1.0).unwrap();
        assert!(Field::new(vec![1.0]).check_on(&s).is_err());
        assert!(Field::new(vec![1.0, f64::NAN]).check_on(&s).is_err());
        assert!(Field::new(vec![1.0, 2.0]).check_on(&s).is_ok());
    }
}
