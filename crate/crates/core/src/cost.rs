//! Exact scaled-integer cost vectors and finite-support cost distributions.
//!
//! A [`CostVector`] stores `d` integer numerators over one shared positive
//! denominator, so sums and comparisons never drift. Within one instance every
//! cost, budget and cumulative cost uses the instance denominator.

use std::fmt;

use num_bigint::BigInt;
use num_traits::Zero;
use smallvec::SmallVec;

use crate::error::{Error, Result};
use crate::rational::{self, Rational};

/// Integer coordinates of a cumulative cost (exact numerators or grid indices).
pub type Key = SmallVec<[i64; 4]>;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CostVector {
    components: Key,
    denominator: i64,
}

impl CostVector {
    pub fn new(components: &[i64], denominator: i64) -> Result<Self> {
        if denominator <= 0 {
            return Err(Error::config(format!(
                "cost denominator must be positive, got {denominator}"
            )));
        }
        Ok(Self { components: Key::from_slice(components), denominator })
    }

    pub(crate) fn from_key(components: Key, denominator: i64) -> Self {
        debug_assert!(denominator > 0);
        Self { components, denominator }
    }

    pub fn zero(dim: usize, denominator: i64) -> Self {
        Self::from_key(smallvec::smallvec![0; dim], denominator)
    }

    /// Scalar shorthand for `d = 1`.
    pub fn scalar(numerator: i64, denominator: i64) -> Result<Self> {
        Self::new(&[numerator], denominator)
    }

    /// Builds the vector from exact rationals, failing if one is not a multiple
    /// of `1/denominator`.
    pub fn from_rationals(values: &[Rational], denominator: i64) -> Result<Self> {
        let den = BigInt::from(denominator);
        let mut components = Key::new();
        for v in values {
            let scaled = v * Rational::from_integer(den.clone());
            if !scaled.is_integer() {
                return Err(Error::config(format!(
                    "value {v} is not a multiple of 1/{denominator}"
                )));
            }
            let n = scaled
                .to_integer()
                .try_into()
                .map_err(|_| Error::config(format!("value {v} overflows i64 numerators")))?;
            components.push(n);
        }
        Self::new(&components, denominator)
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[i64] {
        &self.components
    }

    pub fn key(&self) -> &Key {
        &self.components
    }

    pub fn denominator(&self) -> i64 {
        self.denominator
    }

    pub fn component(&self, i: usize) -> Rational {
        rational::ratio(self.components[i], self.denominator)
    }

    pub fn to_rationals(&self) -> Vec<Rational> {
        (0..self.dim()).map(|i| self.component(i)).collect()
    }

    pub fn is_zero(&self) -> bool {
        self.components.iter().all(|c| *c == 0)
    }

    /// Exact componentwise sum. Both operands must share a denominator.
    pub fn checked_add(&self, other: &CostVector) -> Result<CostVector> {
        if self.denominator != other.denominator {
            return Err(Error::config(format!(
                "denominator mismatch: {} vs {}",
                self.denominator, other.denominator
            )));
        }
        if self.dim() != other.dim() {
            return Err(Error::config(format!(
                "dimension mismatch: {} vs {}",
                self.dim(),
                other.dim()
            )));
        }
        let mut components = Key::with_capacity(self.dim());
        for (a, b) in self.components.iter().zip(&other.components) {
            components.push(
                a.checked_add(*b).ok_or_else(|| Error::config("cost numerator overflow"))?,
            );
        }
        Ok(Self::from_key(components, self.denominator))
    }

    /// Componentwise `self <= other`, exact even across denominators.
    pub fn le(&self, other: &CostVector) -> bool {
        self.dim() == other.dim()
            && self.components.iter().zip(&other.components).all(|(a, b)| {
                (*a as i128) * (other.denominator as i128) <= (*b as i128) * (self.denominator as i128)
            })
    }

    /// Componentwise maximum; operands must share denominator and dimension.
    pub fn max(&self, other: &CostVector) -> CostVector {
        debug_assert_eq!(self.denominator, other.denominator);
        let components = self
            .components
            .iter()
            .zip(&other.components)
            .map(|(a, b)| *a.max(b))
            .collect();
        Self::from_key(components, self.denominator)
    }

    /// Re-expresses the vector over `denominator`, which must be a multiple of
    /// the current one.
    pub fn rescale(&self, denominator: i64) -> Result<CostVector> {
        if denominator % self.denominator != 0 {
            return Err(Error::config(format!(
                "cannot rescale 1/{} to 1/{denominator}",
                self.denominator
            )));
        }
        let factor = denominator / self.denominator;
        let mut components = Key::with_capacity(self.dim());
        for c in &self.components {
            components
                .push(c.checked_mul(factor).ok_or_else(|| Error::config("cost numerator overflow"))?);
        }
        Ok(Self::from_key(components, denominator))
    }
}

impl fmt::Display for CostVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.to_rationals().iter().map(|r| r.to_string()).collect();
        write!(f, "({})", parts.join(", "))
    }
}

/// Exact componentwise sum, the cumulative-cost update.
pub fn cost_add(a: &CostVector, b: &CostVector) -> Result<CostVector> {
    a.checked_add(b)
}

/// A finite-support cost distribution: distinct cost vectors with positive
/// probabilities summing to one.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CostDistribution {
    support: Vec<(CostVector, Rational)>,
}

impl CostDistribution {
    pub fn new(support: Vec<(CostVector, Rational)>) -> Self {
        Self { support }
    }

    pub fn deterministic(cost: CostVector) -> Self {
        Self { support: vec![(cost, rational::one())] }
    }

    pub fn support(&self) -> &[(CostVector, Rational)] {
        &self.support
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn costs(&self) -> impl Iterator<Item = &CostVector> {
        self.support.iter().map(|(c, _)| c)
    }

    /// Returns `{0}` with probability one exactly.
    pub fn is_zero(&self) -> bool {
        self.support.len() == 1 && self.support[0].0.is_zero()
    }

    pub(crate) fn violations(&self, dim: usize, denominator: i64) -> Vec<String> {
        let mut out = Vec::new();
        let mut total = rational::zero();
        for (i, (c, p)) in self.support.iter().enumerate() {
            if c.dim() != dim {
                out.push(format!("has a cost of dimension {} (expected {dim})", c.dim()));
            }
            if c.denominator() != denominator {
                out.push(format!(
                    "has a cost with denominator {} (expected {denominator})",
                    c.denominator()
                ));
            }
            if *p <= Rational::zero() || *p > rational::one() {
                out.push(format!("has probability {p} outside (0, 1]"));
            }
            if self.support[..i].iter().any(|(other, _)| other == c) {
                out.push(format!("repeats cost {c}"));
            }
            total += p;
        }
        if !self.support.is_empty() && total != rational::one() {
            out.push(format!("probabilities sum to {total}"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cv(c: &[i64], d: i64) -> CostVector {
        CostVector::new(c, d).unwrap()
    }

    #[test]
    fn addition_examples() {
        assert_eq!(cost_add(&cv(&[0], 1), &cv(&[0], 1)).unwrap(), cv(&[0], 1));
        // 3/4 + 1/4 = 1 with denominator 4
        assert_eq!(cost_add(&cv(&[3], 4), &cv(&[1], 4)).unwrap(), cv(&[4], 4));
        assert_eq!(cost_add(&cv(&[3], 4), &cv(&[1], 4)).unwrap().component(0), rational::int(1));
        // (1/2, -1/2) + (1/2, 1/2) = (1, 0)
        let s = cost_add(&cv(&[1, -1], 2), &cv(&[1, 1], 2)).unwrap();
        assert_eq!(s.to_rationals(), vec![rational::int(1), rational::int(0)]);
    }

    #[test]
    fn denominator_mismatch_is_config_error() {
        let err = cost_add(&cv(&[1], 2), &cv(&[1], 3)).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(CostVector::new(&[1], 0).is_err());
    }

    #[test]
    fn comparison_is_componentwise() {
        assert!(cv(&[1, 2], 1).le(&cv(&[1, 3], 1)));
        assert!(!cv(&[2, 2], 1).le(&cv(&[1, 3], 1)));
        assert!(cv(&[1], 2).le(&cv(&[2], 4)));
    }

    #[test]
    fn distribution_violations() {
        let d = CostDistribution::new(vec![
            (cv(&[0], 2), rational::ratio(1, 2)),
            (cv(&[0], 2), rational::ratio(1, 3)),
        ]);
        let v = d.violations(1, 2);
        assert!(v.iter().any(|m| m.contains("repeats")));
        assert!(v.iter().any(|m| m.contains("sum to 5/6")));
    }

    proptest! {
        #[test]
        fn addition_is_associative_and_commutative(
            a in prop::collection::vec(-1000i64..1000, 2),
            b in prop::collection::vec(-1000i64..1000, 2),
            c in prop::collection::vec(-1000i64..1000, 2),
            den in 1i64..64,
        ) {
            let (a, b, c) = (cv(&a, den), cv(&b, den), cv(&c, den));
            let left = cost_add(&cost_add(&a, &b).unwrap(), &c).unwrap();
            let right = cost_add(&a, &cost_add(&b, &c).unwrap()).unwrap();
            prop_assert_eq!(&left, &right);
            prop_assert_eq!(cost_add(&a, &b).unwrap(), cost_add(&b, &a).unwrap());
        }
    }
}
