//! Scalar abstraction shared by every coefficient transform.
//!
//! All coefficient arithmetic uses field operations only (add, subtract,
//! multiply, divide, compare), so the same code runs on `f64`, `f32` and
//! exact `BigRational`. Transcendental work (decay ratios, quadrature)
//! lives outside this trait and is `f64`-only.

use std::fmt::Debug;

use num_traits::{FromPrimitive, Num, ToPrimitive};

/// Numeric type usable for basis coefficients.
///
/// `f32` overflows on binomials above roughly order 120; use `f64` for
/// stored student state.
pub trait Scalar:
    Clone + Debug + PartialOrd + Num + FromPrimitive + ToPrimitive + Send + Sync + 'static
{
    /// Exact conversion of a small count.
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in scalar type")
    }

    /// Lossy conversion from `f64`, used for user-supplied weights.
    fn from_real(x: f64) -> Self {
        Self::from_f64(x).expect("finite real representable in scalar type")
    }

    fn to_real(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Largest value, treating incomparable values (NaN) as not greater.
    fn max_of(a: Self, b: Self) -> Self {
        if b > a {
            b
        } else {
            a
        }
    }
}

impl<T> Scalar for T where
    T: Clone + Debug + PartialOrd + Num + FromPrimitive + ToPrimitive + Send + Sync + 'static
{
}

/// Pascal triangle of binomial coefficients, built by addition.
///
/// Entries are exact in every scalar type up to 2^53 in `f64`; beyond that
/// relative rounding stays at machine epsilon.
#[derive(Debug, Clone)]
pub struct Binomials<T> {
    rows: Vec<Vec<T>>,
}

impl<T: Scalar> Binomials<T> {
    pub fn up_to(n: usize) -> Self {
        let mut rows: Vec<Vec<T>> = Vec::with_capacity(n + 1);
        rows.push(vec![T::one()]);
        for r in 1..=n {
            let prev = &rows[r - 1];
            let mut row = Vec::with_capacity(r + 1);
            row.push(T::one());
            for k in 1..r {
                row.push(prev[k - 1].clone() + prev[k].clone());
            }
            row.push(T::one());
            rows.push(row);
        }
        Self { rows }
    }

    pub fn max_n(&self) -> usize {
        self.rows.len() - 1
    }

    /// `C(n, k)`; zero when `k > n`.
    pub fn get(&self, n: usize, k: usize) -> T {
        if k > n {
            return T::zero();
        }
        self.rows[n][k].clone()
    }
}

/// `x^k` by repeated squaring.
pub fn powi<T: Scalar>(x: &T, k: usize) -> T {
    num_traits::pow::pow(x.clone(), k)
}
