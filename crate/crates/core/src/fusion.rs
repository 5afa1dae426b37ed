//! Merging independent evidence about one skill, and evidence transfer
//! from correlated skills.

use crate::beta_basis::BasisCoefficients;
use crate::error::{Error, Result};
use crate::observe::bernstein_product;
use crate::scalar::Scalar;
use crate::smoothing::smooth;

/// Default correlation smoothing order.
pub const DEFAULT_CORRELATION_ORDER: usize = 5;
/// Correlation orders above this are rejected at graph validation.
pub const MAX_CORRELATION_ORDER: usize = 10;

/// Posterior from two conditionally independent evidence streams; the
/// density is proportional to the pointwise product. Order `n_1 + n_2`.
pub fn merge<T: Scalar>(d1: &BasisCoefficients<T>, d2: &BasisCoefficients<T>) -> Result<BasisCoefficients<T>> {
    let raw = bernstein_product(d1.coeffs(), d2.coeffs())?;
    BasisCoefficients::normalized(raw)
}

/// Merges a non-empty sequence left to right.
pub fn merge_all<'a, T: Scalar>(
    dists: impl IntoIterator<Item = &'a BasisCoefficients<T>>,
) -> Result<BasisCoefficients<T>> {
    let mut iter = dists.into_iter();
    let first = iter.next().ok_or(Error::EmptyGroup)?.clone();
    iter.try_fold(first, |acc, d| merge(&acc, d))
}

/// Evidence a correlated skill carries about this one: the same transform
/// as smoothing, with the correlation order `n_c`.
pub fn correlate<T: Scalar>(d: &BasisCoefficients<T>, n_c: usize) -> Result<BasisCoefficients<T>> {
    smooth(d, n_c)
}

/// Element-wise product of correlation-smoothed distributions that share
/// one joint prior of order `n_c`.
pub fn combine_group<T: Scalar>(smoothed: &[BasisCoefficients<T>]) -> Result<BasisCoefficients<T>> {
    let first = smoothed.first().ok_or(Error::EmptyGroup)?;
    let order = first.order();
    let mut acc = first.coeffs().to_vec();
    for d in &smoothed[1..] {
        if d.order() != order {
            return Err(Error::OrderMismatch { expected: order, found: d.order() });
        }
        for (slot, c) in acc.iter_mut().zip(d.coeffs()) {
            *slot = slot.clone() * c.clone();
        }
    }
    BasisCoefficients::normalized(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use num_rational::BigRational;

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    fn c(v: &[f64]) -> BasisCoefficients<f64> {
        BasisCoefficients::normalized(v.to_vec()).unwrap()
    }

    #[test]
    fn merge_examples() {
        let lin = BasisCoefficients::<f64>::spike(1, 1).unwrap();
        assert_eq!(merge(&lin, &lin).unwrap().coeffs(), &[0.0, 0.0, 1.0]);
        let d = c(&[0.2, 0.5, 0.3]);
        let m = merge(&BasisCoefficients::flat(), &d).unwrap();
        assert_eq!(m, d);
        let e = c(&[0.6, 0.1, 0.3, 0.0]);
        let ab = merge(&d, &e).unwrap();
        let ba = merge(&e, &d).unwrap();
        for (x, y) in ab.coeffs().iter().zip(ba.coeffs()) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-12);
        }
        assert_eq!(ab.order(), 5);
    }

    #[test]
    fn merge_of_opposite_lines_and_empty_input() {
        let lo = BasisCoefficients::<f64>::spike(1, 0).unwrap();
        let hi = BasisCoefficients::<f64>::spike(1, 1).unwrap();
        assert!(merge(&lo, &hi).is_ok());
        assert_eq!(merge_all(Vec::<&BasisCoefficients<f64>>::new()), Err(Error::EmptyGroup));
    }

    #[test]
    fn correlate_examples() {
        let flat = BasisCoefficients::<BigRational>::flat();
        assert!(correlate(&flat, 5).unwrap().is_flat());
        let lin = BasisCoefficients::<BigRational>::spike(1, 1).unwrap();
        assert_eq!(correlate(&lin, 1).unwrap().coeffs(), &[q(1, 3), q(2, 3)]);
        let d = c(&[0.1, 0.0, 0.2, 0.7]);
        let out = correlate(&d, 6).unwrap();
        assert_abs_diff_eq!(out.mean() - 0.5, (6.0 / 8.0) * (d.mean() - 0.5), epsilon = 1e-12);
    }

    #[test]
    fn combine_group_examples() {
        let s = BasisCoefficients::<BigRational>::normalized(vec![q(1, 3), q(2, 3)]).unwrap();
        assert_eq!(combine_group(std::slice::from_ref(&s)).unwrap(), s);
        let flat = BasisCoefficients::<BigRational>::flat_of_order(1);
        assert!(combine_group(&[flat.clone(), flat]).unwrap().is_flat());
        assert_eq!(combine_group(&[s.clone(), s]).unwrap().coeffs(), &[q(1, 5), q(4, 5)]);
    }

    #[test]
    fn combine_group_errors() {
        let a = BasisCoefficients::<f64>::flat_of_order(2);
        let b = BasisCoefficients::<f64>::flat_of_order(3);
        assert_eq!(combine_group(&[a, b]), Err(Error::OrderMismatch { expected: 2, found: 3 }));
        assert_eq!(combine_group::<f64>(&[]), Err(Error::EmptyGroup));
        let x = BasisCoefficients::<f64>::spike(2, 0).unwrap();
        let y = BasisCoefficients::<f64>::spike(2, 2).unwrap();
        assert_eq!(combine_group(&[x, y]), Err(Error::AllZero));
    }
}
