//! Folding exercise outcomes into skill distributions.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::beta_basis::{BasisCoefficients, MAX_ORDER};
use crate::error::{Error, Result};
use crate::scalar::{Binomials, Scalar};
use crate::setup_dsl::{ProbPolynomial, SkillId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Success,
    Failure,
}

impl Outcome {
    pub fn from_bool(success: bool) -> Self {
        if success {
            Self::Success
        } else {
            Self::Failure
        }
    }

    pub fn is_success(self) -> bool {
        self == Self::Success
    }
}

/// Single-skill update: the order grows by one.
pub fn update_binary<T: Scalar>(c: &BasisCoefficients<T>, outcome: Outcome) -> Result<BasisCoefficients<T>> {
    let n = c.order();
    let raw: Vec<T> = (0..=n + 1)
        .map(|i| match outcome {
            Outcome::Success if i == 0 => T::zero(),
            Outcome::Success => T::from_count(i) * c.coeffs()[i - 1].clone(),
            Outcome::Failure if i == n + 1 => T::zero(),
            Outcome::Failure => T::from_count(n + 1 - i) * c.coeffs()[i].clone(),
        })
        .collect();
    BasisCoefficients::normalized(raw)
}

/// Likelihood `h(a)` of an outcome as a function of one skill's success
/// rate, with every other skill integrated out.
#[derive(Debug, Clone, PartialEq)]
pub struct HPolynomial<T> {
    power: Vec<T>,
    bernstein: Vec<T>,
}

impl<T: Scalar> HPolynomial<T> {
    /// From monomial coefficients `k_0..k_{n_p}`.
    pub fn from_power(power: Vec<T>) -> Self {
        let power = if power.is_empty() { vec![T::zero()] } else { power };
        let bernstein = to_bernstein(&power);
        Self { power, bernstein }
    }

    pub fn order(&self) -> usize {
        self.power.len() - 1
    }

    pub fn power_coeffs(&self) -> &[T] {
        &self.power
    }

    pub fn bernstein_coeffs(&self) -> &[T] {
        &self.bernstein
    }

    /// Horner evaluation of the monomial form.
    pub fn eval_power(&self, a: &T) -> T {
        self.power.iter().rev().fold(T::zero(), |acc, k| acc * a.clone() + k.clone())
    }

    /// Evaluation of the Bernstein form.
    pub fn eval_bernstein(&self, a: &T) -> T {
        crate::beta_basis::de_casteljau(&self.bernstein, a)
    }
}

/// Monomial to Bernstein coefficients:
/// `C(n_p, n_p - i) k'_i = Σ_{j<=i} C(n_p - j, n_p - i) k_j`.
pub fn to_bernstein<T: Scalar>(power: &[T]) -> Vec<T> {
    let np = power.len().saturating_sub(1);
    let binom = Binomials::<T>::up_to(np);
    (0..=np)
        .map(|i| {
            let mut acc = T::zero();
            for (j, k) in power.iter().enumerate().take(i + 1) {
                acc = acc + binom.get(np - j, np - i) * k.clone();
            }
            acc / binom.get(np, np - i)
        })
        .collect()
}

/// `h(a)` for `skill` given the exercise polynomial and the other skills'
/// current distributions.
pub fn marginal_h<T: Scalar>(
    poly: &ProbPolynomial<T>,
    skill: &SkillId,
    outcome: Outcome,
    others: &BTreeMap<SkillId, BasisCoefficients<T>>,
) -> Result<HPolynomial<T>> {
    let mut power = poly.expect_except(skill, others)?;
    if outcome == Outcome::Failure {
        for k in power.iter_mut() {
            *k = T::zero() - k.clone();
        }
        power[0] = power[0].clone() + T::one();
    }
    Ok(HPolynomial::from_power(power))
}

/// Raw (unnormalized) coefficients of the product of a distribution with a
/// Bernstein-form polynomial of order `m`:
/// `c*_i = Σ_j C(i,j) C(n* - i, m - j) c_{i-j} w_j`.
pub(crate) fn bernstein_product<T: Scalar>(c: &[T], w: &[T]) -> Result<Vec<T>> {
    let n = c.len() - 1;
    let m = w.len() - 1;
    let total = n + m;
    if total > MAX_ORDER {
        return Err(Error::OrderOverflow { order: total, max: MAX_ORDER });
    }
    let binom = Binomials::<T>::up_to(total);
    let zero = T::zero();
    Ok((0..=total)
        .map(|i| {
            let lo = i.saturating_sub(n);
            let hi = m.min(i);
            let mut acc = T::zero();
            for j in lo..=hi {
                if c[i - j] == zero {
                    continue;
                }
                acc = acc + binom.get(i, j) * binom.get(total - i, m - j) * c[i - j].clone() * w[j].clone();
            }
            acc
        })
        .collect())
}

/// General update with likelihood `h`; the order grows by `h.order()`.
pub fn update_general<T: Scalar>(c: &BasisCoefficients<T>, h: &HPolynomial<T>) -> Result<BasisCoefficients<T>> {
    let raw = bernstein_product(c.coeffs(), h.bernstein_coeffs())?;
    BasisCoefficients::normalized(raw)
}

/// Rejects a likelihood that is materially negative on `[0, 1]`.
pub fn check_likelihood(h: &HPolynomial<f64>) -> Result<()> {
    const GRID: usize = 200;
    for s in 0..=GRID {
        let a = s as f64 / GRID as f64;
        let value = h.eval_bernstein(&a);
        if value < -1e-8 {
            return Err(Error::NegativeLikelihood { value, at: a });
        }
    }
    Ok(())
}

/// Updates one skill of a multi-skill exercise.
pub fn update_skill<T: Scalar>(
    poly: &ProbPolynomial<T>,
    skill: &SkillId,
    outcome: Outcome,
    dists: &BTreeMap<SkillId, BasisCoefficients<T>>,
) -> Result<BasisCoefficients<T>> {
    let current = dists.get(skill).ok_or_else(|| Error::MissingSkillDistribution(skill.clone()))?;
    let h = marginal_h(poly, skill, outcome, dists)?;
    update_general(current, &h)
}
