//! Smoothing (flattening toward the flat prior) and the decay schedule that
//! turns elapsed time and practice count into smoothing orders.
//!
//! Smoothing with order `n_s` pulls the mean toward one half by the decay
//! ratio `r = n_s / (n_s + 2)`. A target ratio that no single integer order
//! hits is split into a product of ratios that each do.

use serde::{Deserialize, Serialize};

use crate::beta_basis::{BasisCoefficients, MAX_ORDER};
use crate::error::{Error, Result};
use crate::scalar::{Binomials, Scalar};

pub const SECONDS_PER_YEAR: i64 = 31_557_600;
pub const SECONDS_PER_MONTH: i64 = SECONDS_PER_YEAR / 12;

/// Remaining ratios this close to one end the decomposition.
const RATIO_TOLERANCE: f64 = 1e-12;
/// Guards `ceil` against `2r/(1-r)` landing a few ulps above an integer.
const CEIL_SLACK: f64 = 1e-9;

/// `c_i = Σ_j C(i+j, i) C(n* + n_s - i - j, n* - j) c*_j`, normalized.
/// The output has order `n_s`.
pub fn smooth<T: Scalar>(c: &BasisCoefficients<T>, n_s: usize) -> Result<BasisCoefficients<T>> {
    if n_s > MAX_ORDER {
        return Err(Error::OrderOverflow { order: n_s, max: MAX_ORDER });
    }
    let n = c.order();
    let binom = Binomials::<T>::up_to(n + n_s);
    let zero = T::zero();
    let raw = (0..=n_s)
        .map(|i| {
            let mut acc = T::zero();
            for (j, cj) in c.coeffs().iter().enumerate() {
                if *cj == zero {
                    continue;
                }
                acc = acc + binom.get(i + j, i) * binom.get(n + n_s - i - j, n - j) * cj.clone();
            }
            acc
        })
        .collect();
    BasisCoefficients::normalized(raw)
}

/// Mean-displacement shrink factor of one smoothing step.
pub fn step_ratio(n_s: usize) -> f64 {
    n_s as f64 / (n_s as f64 + 2.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecayParams {
    /// Time for half the skill to fade.
    pub t_half_secs: i64,
    /// Equivalent inactive time of one practice for a fresh skill.
    pub t_e0_secs: i64,
    /// Practice count that halves the equivalent inactive time.
    pub n_half: u32,
    /// Largest smoothing order the schedule emits.
    pub n_s_max: usize,
}

impl Default for DecayParams {
    fn default() -> Self {
        Self {
            t_half_secs: SECONDS_PER_YEAR,
            t_e0_secs: 2 * SECONDS_PER_MONTH,
            n_half: 8,
            n_s_max: 120,
        }
    }
}

impl DecayParams {
    pub fn validate(&self) -> Result<()> {
        if self.t_half_secs <= 0 || self.t_e0_secs <= 0 || self.n_half == 0 || self.n_s_max == 0 {
            return Err(Error::InvalidArgument("decay parameters must be strictly positive".into()));
        }
        if self.n_s_max > MAX_ORDER {
            return Err(Error::OrderOverflow { order: self.n_s_max, max: MAX_ORDER });
        }
        Ok(())
    }
}

/// `r = (1/2)^((t + t_e) / t_half)` with `t_e = t_e0 (1/2)^(count / n_half)`.
pub fn decay_ratio(t_since_secs: i64, practice_count: u64, p: &DecayParams) -> f64 {
    let t = t_since_secs.max(0) as f64;
    let t_e = p.t_e0_secs as f64 * 0.5f64.powf(practice_count as f64 / p.n_half as f64);
    0.5f64.powf((t + t_e) / p.t_half_secs as f64)
}

/// Integer smoothing orders whose ratios multiply to (at least) a target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayPlan {
    pub target_ratio: f64,
    /// Ascending.
    pub orders: Vec<usize>,
    /// Order the result is compressed to after smoothing, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compress_to: Option<usize>,
    /// Shrink factor of the mean displacement the plan applies.
    pub realized_ratio: f64,
}

impl DecayPlan {
    fn from_orders(target_ratio: f64, mut orders: Vec<usize>) -> Self {
        orders.sort_unstable();
        let realized_ratio = orders.iter().map(|&n| step_ratio(n)).product();
        Self { target_ratio, orders, compress_to: None, realized_ratio }
    }

    /// Largest order first, so the result ends at the smallest order.
    pub fn application_order(&self) -> impl Iterator<Item = usize> + '_ {
        self.orders.iter().rev().copied()
    }

    pub fn is_empty(&self) -> bool {
        self.orders.is_empty() && self.compress_to.is_none()
    }
}

/// Splits `r` into per-step ratios `n/(n+2)`, each `n = ceil(2r/(1-r))` of
/// the remaining ratio, until the next order would exceed `n_s_max` or the
/// remainder reaches one.
pub fn decompose(r: f64, p: &DecayParams) -> DecayPlan {
    let target = r;
    if !(r > RATIO_TOLERANCE) {
        // everything forgotten: order 0 is the flat prior
        return DecayPlan::from_orders(target, vec![0]);
    }
    let mut remaining = r;
    let mut orders = Vec::new();
    while remaining < 1.0 - RATIO_TOLERANCE {
        let exact = 2.0 * remaining / (1.0 - remaining);
        let n = ((exact - CEIL_SLACK * exact.max(1.0)).ceil() as usize).max(1);
        if n > p.n_s_max {
            break;
        }
        orders.push(n);
        remaining /= step_ratio(n);
    }
    DecayPlan::from_orders(target, orders)
}

/// Mean-displacement factor of [`compress`] from order `n` to `m`.
pub fn compress_ratio(n: usize, m: usize) -> f64 {
    (m * (n + 2)) as f64 / (n * (m + 2)) as f64
}

/// Lowers the order from `n` to `m < n` without smoothing: the weight of
/// index `i` moves to position `i·m/n`, split between the two neighbouring
/// indices. The mean displacement from one half shrinks by exactly
/// `m(n+2) / (n(m+2))` and the shape is otherwise kept, so only the
/// concentration is capped at that of order `m`.
pub fn compress<T: Scalar>(c: &BasisCoefficients<T>, m: usize) -> Result<BasisCoefficients<T>> {
    let n = c.order();
    if m >= n {
        return Ok(c.clone());
    }
    let mut raw = vec![T::zero(); m + 1];
    let den = T::from_count(n);
    for (i, ci) in c.coeffs().iter().enumerate() {
        let lo = i * m / n;
        let rem = i * m % n;
        if rem == 0 {
            raw[lo] = raw[lo].clone() + ci.clone();
        } else {
            let hi = T::from_count(rem) / den.clone();
            raw[lo + 1] = raw[lo + 1].clone() + ci.clone() * hi.clone();
            raw[lo] = raw[lo].clone() + ci.clone() * (T::one() - hi);
        }
    }
    BasisCoefficients::normalized(raw)
}

/// The plan [`apply_decay`] executes for a stored state of the given order.
///
/// When the target ratio is too close to one for any order up to `n_s_max`,
/// no smoothing happens; a state above `n_s_max` is then compressed to
/// `n_s_max` so stored orders stay bounded.
pub fn effective_plan(order: usize, t_since_secs: i64, practice_count: u64, p: &DecayParams) -> DecayPlan {
    let r = decay_ratio(t_since_secs, practice_count, p);
    let mut plan = decompose(r, p);
    if plan.orders.is_empty() && order > p.n_s_max {
        plan.compress_to = Some(p.n_s_max);
        plan.realized_ratio = compress_ratio(order, p.n_s_max);
    }
    plan
}

/// Decays a stored (post-update, pre-smoothing) state to the present.
pub fn apply_decay<T: Scalar>(
    c: &BasisCoefficients<T>,
    t_since_secs: i64,
    practice_count: u64,
    p: &DecayParams,
) -> Result<BasisCoefficients<T>> {
    // the flat prior is a fixed point; keep it at order 0
    if c.order() == 0 {
        return Ok(c.clone());
    }
    let plan = effective_plan(c.order(), t_since_secs, practice_count, p);
    apply_plan(c, &plan)
}

pub fn apply_plan<T: Scalar>(c: &BasisCoefficients<T>, plan: &DecayPlan) -> Result<BasisCoefficients<T>> {
    let smoothed = plan.application_order().try_fold(c.clone(), |acc, n| smooth(&acc, n))?;
    match plan.compress_to {
        Some(m) => compress(&smoothed, m),
        None => Ok(smoothed),
    }
}
