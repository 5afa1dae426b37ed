//! Distribution of an exercise's (or composite skill's) success rate,
//! inferred from the distributions of the skills in its set-up.
//!
//! The composed rate `x(a, b, ...)` is generally not of basis form, so the
//! engine reports the smoothed rate `x̂` whose coefficients are
//! `c_i = E[g_{i,n_i}(x(a, b, ...))]`. Expanding `g_{i,n_i}(x)` as
//! `(n_i+1) C(n_i,i) Σ_l C(n_i-i,l) (-1)^l x^(i+l)` reduces everything to
//! the raw moments `E[x^k]`, `k <= n_i`, each a sum of products of
//! per-skill moments. That route is exact in rational arithmetic but
//! cancels badly in floating point once `x` has several signed terms and
//! the skills are concentrated; [`infer_gauss`] computes the same
//! coefficients in `f64` without cancellation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::beta_basis::{BasisCoefficients, MAX_ORDER};
use crate::error::{Error, Result};
use crate::gauss::GaussRule;
use crate::scalar::{Binomials, Scalar};
use crate::setup_dsl::{ProbPolynomial, SkillId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct InferenceConfig {
    /// Inference smoothing order `n_i`.
    pub n_i: usize,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self { n_i: 10 }
    }
}

/// Raw moments `E[x^0] .. E[x^n]` of the composed polynomial.
pub fn composed_moments<T: Scalar>(
    poly: &ProbPolynomial<T>,
    dists: &BTreeMap<SkillId, BasisCoefficients<T>>,
    n: usize,
) -> Result<Vec<T>> {
    let degree = poly.max_var_degree() * n;
    if degree > MAX_ORDER {
        return Err(Error::OrderOverflow { order: degree, max: MAX_ORDER });
    }
    let mut out = Vec::with_capacity(n + 1);
    let mut power = ProbPolynomial::one();
    out.push(power.expected_value(dists)?);
    for _ in 1..=n {
        power = power.mul(poly);
        out.push(power.expected_value(dists)?);
    }
    Ok(out)
}

/// Smoothed distribution of `x(...)`, order `cfg.n_i`.
pub fn infer<T: Scalar>(
    poly: &ProbPolynomial<T>,
    dists: &BTreeMap<SkillId, BasisCoefficients<T>>,
    cfg: &InferenceConfig,
) -> Result<BasisCoefficients<T>> {
    let n = cfg.n_i;
    for v in poly.vars() {
        if !dists.contains_key(v) {
            return Err(Error::MissingSkillDistribution(v.clone()));
        }
    }
    let moments = composed_moments(poly, dists, n)?;
    let binom = Binomials::<T>::up_to(n);
    let raw = (0..=n)
        .map(|i| {
            let mut acc = T::zero();
            for l in 0..=(n - i) {
                let term = binom.get(n - i, l) * moments[i + l].clone();
                acc = if l % 2 == 0 { acc + term } else { acc - term };
            }
            binom.get(n, i) * acc
        })
        .collect();
    BasisCoefficients::normalized(raw)
}

/// Tensor grids above this many points are refused.
pub const MAX_GAUSS_POINTS: usize = 20_000_000;

/// Same coefficients as [`infer`], integrating `g_{i,n_i}(x)` over a tensor
/// product of per-skill Gauss rules. Each rule is exact for the degree of
/// the integrand in its skill, weights are positive and the integrand is
/// nonnegative, so the result carries only rounding error.
pub fn infer_gauss(
    poly: &ProbPolynomial<f64>,
    dists: &BTreeMap<SkillId, BasisCoefficients<f64>>,
    cfg: &InferenceConfig,
) -> Result<BasisCoefficients<f64>> {
    let n = cfg.n_i;
    let degree = poly.max_var_degree() * n;
    if degree > MAX_ORDER {
        return Err(Error::OrderOverflow { order: degree, max: MAX_ORDER });
    }
    let vars = poly.vars();
    let mut rules = Vec::with_capacity(vars.len());
    let mut points = 1usize;
    for v in vars {
        let d = dists.get(v).ok_or_else(|| Error::MissingSkillDistribution(v.clone()))?;
        let rule = GaussRule::for_distribution(d, poly.degree_in(v) * n);
        points = points.saturating_mul(rule.len());
        rules.push(rule);
    }
    if points > MAX_GAUSS_POINTS {
        return Err(Error::InvalidArgument(format!(
            "inference over {} skills needs {points} quadrature points",
            vars.len()
        )));
    }
    let terms: Vec<(&[u32], f64)> = poly.terms().map(|(e, c)| (e, *c)).collect();
    // powers[v][node][p] = node^p
    let powers: Vec<Vec<Vec<f64>>> = vars
        .iter()
        .zip(&rules)
        .map(|(v, rule)| {
            let top = poly.degree_in(v);
            rule.nodes
                .iter()
                .map(|&a| std::iter::successors(Some(1.0), |p| Some(p * a)).take(top + 1).collect())
                .collect()
        })
        .collect();
    let mut acc = vec![0.0f64; n + 1];
    let mut up = vec![1.0f64; n + 1];
    let mut down = vec![1.0f64; n + 1];
    let mut idx = vec![0usize; vars.len()];
    loop {
        let weight: f64 = idx.iter().zip(&rules).map(|(&k, r)| r.weights[k]).product();
        let x: f64 = terms
            .iter()
            .map(|(e, c)| c * e.iter().enumerate().map(|(v, &p)| powers[v][idx[v]][p as usize]).product::<f64>())
            .sum::<f64>()
            .clamp(0.0, 1.0);
        for k in 1..=n {
            up[k] = up[k - 1] * x;
            down[k] = down[k - 1] * (1.0 - x);
        }
        for (i, slot) in acc.iter_mut().enumerate() {
            *slot += weight * up[i] * down[n - i];
        }
        let mut v = 0;
        while v < idx.len() {
            idx[v] += 1;
            if idx[v] < rules[v].len() {
                break;
            }
            idx[v] = 0;
            v += 1;
        }
        if v == idx.len() {
            break;
        }
    }
    let binom = Binomials::<f64>::up_to(n);
    let raw = acc.iter().enumerate().map(|(i, a)| binom.get(n, i) * a).collect();
    BasisCoefficients::normalized(raw)
}

/// `E[x]` under independence; the mean of the unsmoothed rate.
pub fn expected_success<T: Scalar>(
    poly: &ProbPolynomial<T>,
    dists: &BTreeMap<SkillId, BasisCoefficients<T>>,
) -> Result<T> {
    poly.expected_value(dists)
}
