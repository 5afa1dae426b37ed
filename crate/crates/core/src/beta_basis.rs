//! Success-rate distributions as mixtures of beta-distribution densities.
//!
//! A distribution of order `n` is stored as `n + 1` non-negative weights
//! `c_0..c_n` summing to one. Weight `c_i` multiplies the density
//! `g_{i,n}(a) = (n+1) C(n,i) a^i (1-a)^(n-i)`, which is Beta(i+1, n-i+1).
//! Order 0 is the flat prior.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Upper bound on the order of any distribution the engine produces.
pub const MAX_ORDER: usize = 160;

/// Normalized beta-basis coefficient vector.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisCoefficients<T> {
    coeffs: Vec<T>,
}

/// Clamp negatives to zero and rescale to unit sum.
pub fn normalize<T: Scalar>(raw: Vec<T>) -> Result<BasisCoefficients<T>> {
    BasisCoefficients::normalized(raw)
}

impl<T: Scalar> BasisCoefficients<T> {
    /// Normalizes `raw`; its order is `raw.len() - 1`.
    pub fn normalized(mut raw: Vec<T>) -> Result<Self> {
        if raw.is_empty() {
            return Err(Error::InvalidArgument("empty coefficient vector".into()));
        }
        if raw.len() - 1 > MAX_ORDER {
            return Err(Error::OrderOverflow { order: raw.len() - 1, max: MAX_ORDER });
        }
        let zero = T::zero();
        let mut total = T::zero();
        for c in raw.iter_mut() {
            // NaN also fails `>`, so it is treated as zero weight
            if !(*c > zero) {
                *c = T::zero();
            }
            total = total + c.clone();
        }
        if !(total > zero) {
            return Err(Error::AllZero);
        }
        for c in raw.iter_mut() {
            *c = c.clone() / total.clone();
        }
        Ok(Self { coeffs: raw })
    }

    /// The flat prior `[1]`.
    pub fn flat() -> Self {
        Self { coeffs: vec![T::one()] }
    }

    /// Flat density written at order `n` (all weights equal).
    pub fn flat_of_order(n: usize) -> Self {
        let w = T::one() / T::from_count(n + 1);
        Self { coeffs: vec![w; n + 1] }
    }

    /// Single weight at `index`: the posterior after `index` successes and
    /// `order - index` failures from the flat prior.
    pub fn spike(order: usize, index: usize) -> Result<Self> {
        if index > order {
            return Err(Error::InvalidArgument(format!(
                "spike index {index} exceeds order {order}"
            )));
        }
        if order > MAX_ORDER {
            return Err(Error::OrderOverflow { order, max: MAX_ORDER });
        }
        let mut coeffs = vec![T::zero(); order + 1];
        coeffs[index] = T::one();
        Ok(Self { coeffs })
    }

    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[T] {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<T> {
        self.coeffs
    }

    /// True when every weight is equal, i.e. the density is constant.
    pub fn is_flat(&self) -> bool {
        let first = &self.coeffs[0];
        self.coeffs.iter().all(|c| c == first)
    }

    /// Density at `a`; zero outside `[0, 1]`.
    pub fn pdf_at(&self, a: &T) -> T {
        if *a < T::zero() || *a > T::one() {
            return T::zero();
        }
        de_casteljau(&self.coeffs, a) * T::from_count(self.coeffs.len())
    }

    /// `E[a] = Σ c_i (i+1)/(n+2)`.
    pub fn mean(&self) -> T {
        let denom = T::from_count(self.order() + 2);
        let mut acc = T::zero();
        for (i, c) in self.coeffs.iter().enumerate() {
            acc = acc + c.clone() * T::from_count(i + 1);
        }
        acc / denom
    }

    /// `E[a^m]`. The factorial ratio `(n+1)!/(n+m+1)! * (i+m)!/i!` is
    /// accumulated as the product `Π_{t=1..m} (i+t)/(n+1+t)`.
    pub fn moment(&self, m: usize) -> T {
        let n = self.order();
        let mut acc = T::zero();
        for (i, c) in self.coeffs.iter().enumerate() {
            if *c == T::zero() {
                continue;
            }
            let mut w = T::one();
            for t in 1..=m {
                w = w * T::from_count(i + t) / T::from_count(n + 1 + t);
            }
            acc = acc + c.clone() * w;
        }
        acc
    }

    /// All moments `E[a^0] .. E[a^max_m]`.
    pub fn moments(&self, max_m: usize) -> Vec<T> {
        let n = self.order();
        let mut out = vec![T::zero(); max_m + 1];
        for (i, c) in self.coeffs.iter().enumerate() {
            if *c == T::zero() {
                continue;
            }
            let mut w = T::one();
            out[0] = out[0].clone() + c.clone();
            for (t, slot) in out.iter_mut().enumerate().skip(1) {
                w = w * T::from_count(i + t) / T::from_count(n + 1 + t);
                *slot = slot.clone() + c.clone() * w.clone();
            }
        }
        out
    }

    pub fn variance(&self) -> T {
        let m = self.mean();
        self.moment(2) - m.clone() * m
    }

    /// Distribution of the failure rate `1 - a`.
    pub fn flip(&self) -> Self {
        let mut coeffs = self.coeffs.clone();
        coeffs.reverse();
        Self { coeffs }
    }

    pub fn cdf(&self) -> CdfCoefficients<T> {
        let mut cum = Vec::with_capacity(self.coeffs.len() + 1);
        let mut acc = T::zero();
        cum.push(acc.clone());
        for c in &self.coeffs {
            acc = acc + c.clone();
            cum.push(acc.clone());
        }
        CdfCoefficients { cum }
    }

    pub fn cdf_at(&self, a: &T) -> T {
        self.cdf().at(a)
    }
}

impl BasisCoefficients<f64> {
    /// Smallest `a` with `F(a) >= p`, by bisection to 1e-9.
    pub fn quantile(&self, p: f64) -> f64 {
        let p = p.clamp(0.0, 1.0);
        let cdf = self.cdf();
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        while hi - lo > 1e-9 {
            let mid = 0.5 * (lo + hi);
            if cdf.at(&mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Equal-tailed credible interval holding `mass` of the probability.
    pub fn credible_interval(&self, mass: f64) -> (f64, f64) {
        let tail = 0.5 * (1.0 - mass);
        (self.quantile(tail), self.quantile(1.0 - tail))
    }
}

/// CDF of a distribution of order `n`, written at order `n + 1` with
/// cumulative weights `C_0 = 0, C_i = Σ_{j<i} c_j`.
///
/// In density-basis form `F(a) = (1/(n+2)) Σ C_i g_{i,n+1}(a)`; the factor
/// `1/(n+2)` cancels the `(n+2)` inside `g`, leaving a plain Bernstein sum.
#[derive(Debug, Clone, PartialEq)]
pub struct CdfCoefficients<T> {
    cum: Vec<T>,
}

impl<T: Scalar> CdfCoefficients<T> {
    pub fn order(&self) -> usize {
        self.cum.len() - 1
    }

    pub fn cumulative(&self) -> &[T] {
        &self.cum
    }

    pub fn at(&self, a: &T) -> T {
        if *a <= T::zero() {
            return T::zero();
        }
        if *a >= T::one() {
            return self.cum.last().cloned().unwrap_or_else(T::one);
        }
        de_casteljau(&self.cum, a)
    }
}

/// Evaluates `Σ w_i C(n,i) a^i (1-a)^(n-i)` without forming binomials.
pub(crate) fn de_casteljau<T: Scalar>(weights: &[T], a: &T) -> T {
    let mut work = weights.to_vec();
    let one_minus = T::one() - a.clone();
    for level in (1..work.len()).rev() {
        for i in 0..level {
            work[i] = work[i].clone() * one_minus.clone() + work[i + 1].clone() * a.clone();
        }
    }
    work.swap_remove(0)
}

#[derive(Serialize, Deserialize)]
struct Wire<T> {
    order: usize,
    coeffs: Vec<T>,
}

impl<T: Scalar + Serialize> Serialize for BasisCoefficients<T> {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        Wire { order: self.order(), coeffs: self.coeffs.clone() }.serialize(serializer)
    }
}

impl<'de, T: Scalar + Deserialize<'de>> Deserialize<'de> for BasisCoefficients<T> {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let wire = Wire::<T>::deserialize(deserializer)?;
        if wire.coeffs.len() != wire.order + 1 {
            return Err(D::Error::custom(Error::LengthMismatch {
                order: wire.order,
                len: wire.coeffs.len(),
            }));
        }
        // Already-normalized payloads are kept bit-for-bit.
        let non_negative = wire.coeffs.iter().all(|c| *c >= T::zero());
        let sum: f64 = wire.coeffs.iter().map(Scalar::to_real).sum();
        if non_negative && (sum - 1.0).abs() <= 1e-9 && wire.order <= MAX_ORDER {
            return Ok(Self { coeffs: wire.coeffs });
        }
        Self::normalized(wire.coeffs).map_err(D::Error::custom)
    }
}
