//! Direct semantics of set-up trees, independent of polynomial compilation,
//! plus seeded generators for random trees, distributions and likelihoods.

use std::collections::BTreeMap;

use rand::Rng;

use crate::setup_dsl::{SetupExpr, SkillId};

/// Set-up tree with skills replaced by positions in a value slice.
#[derive(Debug, Clone)]
pub enum IndexedExpr {
    Skill(usize),
    And(Vec<IndexedExpr>),
    Or(Vec<IndexedExpr>),
    Pick { children: Vec<IndexedExpr>, weights: Vec<f64>, choose: usize },
    Part { child: Box<IndexedExpr>, fraction: f64 },
}

impl IndexedExpr {
    /// Indexes `e` against `vars`; every skill of `e` must be listed.
    pub fn new(e: &SetupExpr, vars: &[SkillId]) -> Self {
        match e {
            SetupExpr::Skill(id) => {
                Self::Skill(vars.iter().position(|v| v == id).expect("skill missing from variable list"))
            }
            SetupExpr::And(c) => Self::And(c.iter().map(|x| Self::new(x, vars)).collect()),
            SetupExpr::Or(c) => Self::Or(c.iter().map(|x| Self::new(x, vars)).collect()),
            SetupExpr::Pick { children, weights, choose } => {
                let n = children.len();
                Self::Pick {
                    children: children.iter().map(|x| Self::new(x, vars)).collect(),
                    weights: weights.clone().unwrap_or_else(|| vec![1.0 / n as f64; n]),
                    choose: *choose,
                }
            }
            SetupExpr::Part { child, fraction } => {
                Self::Part { child: Box::new(Self::new(child, vars)), fraction: *fraction }
            }
        }
    }

    /// Success probability when each skill occurrence succeeds
    /// independently with the given rate.
    pub fn eval(&self, rates: &[f64]) -> f64 {
        self.eval_in(rates, true)
    }

    fn eval_in(&self, rates: &[f64], under_and: bool) -> f64 {
        match self {
            Self::Skill(i) => rates[*i],
            Self::And(c) => c.iter().map(|x| x.eval_in(rates, true)).product(),
            Self::Or(c) => 1.0 - c.iter().map(|x| 1.0 - x.eval_in(rates, false)).product::<f64>(),
            Self::Pick { children, weights, choose } => {
                let values: Vec<f64> = children.iter().map(|x| x.eval(rates)).collect();
                if *choose <= 1 {
                    return values.iter().zip(weights).map(|(v, w)| v * w).sum();
                }
                let subsets = k_subsets(values.len(), *choose);
                let total: f64 = subsets.iter().map(|s| s.iter().map(|&i| values[i]).product::<f64>()).sum();
                total / subsets.len() as f64
            }
            Self::Part { child, fraction } => {
                let v = child.eval(rates);
                // when not required the child is neutral for its parent
                let neutral = if under_and { 1.0 } else { 0.0 };
                fraction * v + (1.0 - fraction) * neutral
            }
        }
    }

    /// Random choice points in pre-order, with their number of outcomes.
    fn choice_arities(&self, out: &mut Vec<usize>) {
        match self {
            Self::Skill(_) => {}
            Self::And(c) | Self::Or(c) => c.iter().for_each(|x| x.choice_arities(out)),
            Self::Pick { children, choose, .. } => {
                out.push(if *choose <= 1 { children.len() } else { k_subsets(children.len(), *choose).len() });
                children.iter().for_each(|x| x.choice_arities(out));
            }
            Self::Part { child, .. } => {
                out.push(2);
                child.choice_arities(out);
            }
        }
    }

    /// Probability of the joint choice and the boolean outcome of the
    /// resulting deterministic tree, for 0/1 skill values.
    fn scenario(&self, bits: &[bool], choices: &[usize], cursor: &mut usize, under_and: bool) -> (f64, bool) {
        match self {
            Self::Skill(i) => (1.0, bits[*i]),
            Self::And(c) | Self::Or(c) => {
                let is_and = matches!(self, Self::And(_));
                let mut prob = 1.0;
                let mut value = is_and;
                for x in c {
                    let (p, v) = x.scenario(bits, choices, cursor, is_and);
                    prob *= p;
                    value = if is_and { value && v } else { value || v };
                }
                (prob, value)
            }
            Self::Pick { children, weights, choose } => {
                let pick = choices[*cursor];
                *cursor += 1;
                // every child subtree consumes its choice points
                let outcomes: Vec<(f64, bool)> =
                    children.iter().map(|x| x.scenario(bits, choices, cursor, true)).collect();
                let inner: f64 = outcomes.iter().map(|o| o.0).product();
                if *choose <= 1 {
                    (inner * weights[pick], outcomes[pick].1)
                } else {
                    let subsets = k_subsets(children.len(), *choose);
                    let value = subsets[pick].iter().all(|&i| outcomes[i].1);
                    (inner / subsets.len() as f64, value)
                }
            }
            Self::Part { child, fraction } => {
                let required = choices[*cursor] == 0;
                *cursor += 1;
                let (p, v) = child.scenario(bits, choices, cursor, true);
                if required {
                    (p * fraction, v)
                } else {
                    (p * (1.0 - fraction), under_and)
                }
            }
        }
    }

    /// Number of joint scenarios [`Self::brute_force`] enumerates.
    pub fn scenario_count(&self) -> usize {
        let mut arities = Vec::new();
        self.choice_arities(&mut arities);
        arities.iter().product()
    }

    /// Success probability at a 0/1 corner by summing over every joint
    /// outcome of the pick and part choices.
    pub fn brute_force(&self, bits: &[bool]) -> f64 {
        let mut arities = Vec::new();
        self.choice_arities(&mut arities);
        let mut choices = vec![0usize; arities.len()];
        let mut total = 0.0;
        loop {
            let mut cursor = 0;
            let (p, v) = self.scenario(bits, &choices, &mut cursor, true);
            if v {
                total += p;
            }
            let mut k = 0;
            while k < choices.len() {
                choices[k] += 1;
                if choices[k] < arities[k] {
                    break;
                }
                choices[k] = 0;
                k += 1;
            }
            if k == choices.len() {
                return total;
            }
        }
    }
}

fn k_subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    (0u32..1 << n)
        .filter(|m| m.count_ones() as usize == k)
        .map(|m| (0..n).filter(|i| m & (1 << i) != 0).collect())
        .collect()
}

/// Direct evaluation keyed by skill id.
pub fn eval_setup(e: &SetupExpr, rates: &BTreeMap<SkillId, f64>) -> f64 {
    let vars: Vec<SkillId> = rates.keys().cloned().collect();
    let values: Vec<f64> = rates.values().copied().collect();
    IndexedExpr::new(e, &vars).eval(&values)
}

/// Limits for [`random_setup`].
#[derive(Debug, Clone, Copy)]
pub struct TreeShape {
    pub skills: usize,
    pub max_depth: usize,
    pub max_children: usize,
    pub deterministic: bool,
}

/// Random set-up over skills named `A`, `B`, ... .
pub fn random_setup<R: Rng + ?Sized>(rng: &mut R, shape: &TreeShape) -> SetupExpr {
    random_node(rng, shape, shape.max_depth, false)
}

fn random_node<R: Rng + ?Sized>(rng: &mut R, shape: &TreeShape, depth: usize, part_allowed: bool) -> SetupExpr {
    if depth == 0 || rng.random_bool(0.3) {
        let k = rng.random_range(0..shape.skills);
        let name = ((b'A' + k as u8) as char).to_string();
        let skill = SetupExpr::skill(&name);
        if part_allowed && !shape.deterministic && rng.random_bool(0.2) {
            return SetupExpr::Part { child: Box::new(skill), fraction: round2(rng.random_range(0.05..0.95)) };
        }
        return skill;
    }
    let n = rng.random_range(2..=shape.max_children.max(2));
    let kind = if shape.deterministic { rng.random_range(0..2) } else { rng.random_range(0..4) };
    let node = match kind {
        0 | 1 => {
            let children = (0..n).map(|_| random_node(rng, shape, depth - 1, true)).collect();
            if kind == 0 {
                SetupExpr::And(children)
            } else {
                SetupExpr::Or(children)
            }
        }
        2 => {
            let children = (0..n).map(|_| random_node(rng, shape, depth - 1, false)).collect();
            let raw: Vec<f64> = (0..n).map(|_| rng.random_range(1..10) as f64).collect();
            let total: f64 = raw.iter().sum();
            let weights = if rng.random_bool(0.5) { Some(raw.iter().map(|w| w / total).collect()) } else { None };
            SetupExpr::Pick { children, weights, choose: 1 }
        }
        _ => {
            let children = (0..n).map(|_| random_node(rng, shape, depth - 1, false)).collect();
            SetupExpr::Pick { children, weights: None, choose: rng.random_range(1..n) + 1 }
        }
    };
    if part_allowed && !shape.deterministic && rng.random_bool(0.15) {
        return SetupExpr::Part { child: Box::new(node), fraction: round2(rng.random_range(0.05..0.95)) };
    }
    node
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

/// Random coefficients of exactly `order`, with occasional zeros.
pub fn random_coeffs<R: Rng + ?Sized>(rng: &mut R, order: usize) -> Vec<f64> {
    loop {
        let raw: Vec<f64> = (0..=order)
            .map(|_| if rng.random_bool(0.2) { 0.0 } else { rng.random::<f64>() })
            .collect();
        let total: f64 = raw.iter().sum();
        if total > 0.0 {
            return raw.iter().map(|c| c / total).collect();
        }
    }
}

/// Monomial coefficients of a random polynomial of degree `degree` that is
/// nonnegative on `[0, 1]` (nonnegative Bernstein coefficients, expanded).
pub fn random_nonnegative_poly<R: Rng + ?Sized>(rng: &mut R, degree: usize) -> Vec<f64> {
    let bern: Vec<f64> = (0..=degree).map(|_| rng.random::<f64>()).collect();
    let mut power = vec![0.0; degree + 1];
    for (i, b) in bern.iter().enumerate() {
        // C(d,i) a^i (1-a)^(d-i) = C(d,i) Σ_t C(d-i,t) (-1)^t a^(i+t)
        let cdi = binom(degree, i);
        for t in 0..=degree - i {
            let sign = if t % 2 == 0 { 1.0 } else { -1.0 };
            power[i + t] += b * cdi * binom(degree - i, t) * sign;
        }
    }
    power
}

fn binom(n: usize, k: usize) -> f64 {
    (1..=k).fold(1.0, |acc, j| acc * (n - k + j) as f64 / j as f64)
}
