//! Sparse multivariate polynomials over skill success rates.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::beta_basis::BasisCoefficients;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::SkillId;

/// Exponent vector aligned with [`ProbPolynomial::vars`].
type Exponents = Vec<u32>;

/// Polynomial `x(a, b, ...)` giving an exercise's success probability from
/// the success rates of the skills it uses.
///
/// Variables are kept sorted; each term maps an exponent vector to its
/// coefficient. Exact-zero terms are dropped after every operation.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbPolynomial<T> {
    vars: Vec<SkillId>,
    terms: BTreeMap<Exponents, T>,
}

impl<T: Scalar> ProbPolynomial<T> {
    pub fn constant(value: T) -> Self {
        let mut terms = BTreeMap::new();
        if value != T::zero() {
            terms.insert(Vec::new(), value);
        }
        Self { vars: Vec::new(), terms }
    }

    pub fn zero() -> Self {
        Self::constant(T::zero())
    }

    pub fn one() -> Self {
        Self::constant(T::one())
    }

    /// The polynomial `s` for a single skill.
    pub fn var(skill: SkillId) -> Self {
        let mut terms = BTreeMap::new();
        terms.insert(vec![1], T::one());
        Self { vars: vec![skill], terms }
    }

    /// Builds a polynomial from `(skill powers, coefficient)` pairs.
    pub fn from_terms<'a, I>(terms: I) -> Self
    where
        I: IntoIterator<Item = (Vec<(&'a str, u32)>, T)>,
    {
        let mut acc = Self::zero();
        for (powers, coef) in terms {
            let mut term = Self::constant(coef);
            for (name, k) in powers {
                term = term.mul(&Self::var(SkillId::from(name)).pow(k as usize));
            }
            acc = acc.add(&term);
        }
        acc
    }

    pub fn vars(&self) -> &[SkillId] {
        &self.vars
    }

    /// Terms as exponent vectors aligned with [`Self::vars`].
    pub fn terms(&self) -> impl Iterator<Item = (&[u32], &T)> + '_ {
        self.terms.iter().map(|(e, c)| (e.as_slice(), c))
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn term_count(&self) -> usize {
        self.terms.len()
    }

    /// Terms keyed by the powers of each variable that occurs in them.
    pub fn term_map(&self) -> BTreeMap<BTreeMap<SkillId, u32>, T> {
        self.terms
            .iter()
            .map(|(exps, coef)| {
                let key = self
                    .vars
                    .iter()
                    .zip(exps)
                    .filter(|(_, &e)| e > 0)
                    .map(|(v, &e)| (v.clone(), e))
                    .collect();
                (key, coef.clone())
            })
            .collect()
    }

    /// Coefficient of the monomial with the given powers.
    pub fn coefficient(&self, powers: &[(&str, u32)]) -> T {
        let wanted: BTreeMap<SkillId, u32> = powers
            .iter()
            .filter(|(_, e)| *e > 0)
            .map(|(s, e)| (SkillId::from(*s), *e))
            .collect();
        self.term_map().get(&wanted).cloned().unwrap_or_else(T::zero)
    }

    /// Highest power of `skill` in any term.
    pub fn degree_in(&self, skill: &SkillId) -> usize {
        match self.vars.binary_search(skill) {
            Ok(idx) => self.terms.keys().map(|e| e[idx] as usize).max().unwrap_or(0),
            Err(_) => 0,
        }
    }

    /// Highest single-variable power across all variables.
    pub fn max_var_degree(&self) -> usize {
        self.terms
            .keys()
            .flat_map(|e| e.iter().copied())
            .max()
            .unwrap_or(0) as usize
    }

    fn realigned(&self, vars: &[SkillId]) -> BTreeMap<Exponents, T> {
        let map: Vec<usize> = self
            .vars
            .iter()
            .map(|v| vars.binary_search(v).expect("target variable set is a superset"))
            .collect();
        self.terms
            .iter()
            .map(|(exps, c)| {
                let mut out = vec![0u32; vars.len()];
                for (src, &dst) in map.iter().enumerate() {
                    out[dst] = exps[src];
                }
                (out, c.clone())
            })
            .collect()
    }

    fn union_vars(&self, other: &Self) -> Vec<SkillId> {
        let set: BTreeSet<SkillId> = self.vars.iter().chain(other.vars.iter()).cloned().collect();
        set.into_iter().collect()
    }

    fn from_parts(vars: Vec<SkillId>, terms: BTreeMap<Exponents, T>) -> Self {
        let zero = T::zero();
        let terms: BTreeMap<Exponents, T> = terms.into_iter().filter(|(_, c)| *c != zero).collect();
        // drop variables that no longer occur
        let used: Vec<bool> = (0..vars.len())
            .map(|i| terms.keys().any(|e| e[i] > 0))
            .collect();
        if used.iter().all(|u| *u) {
            return Self { vars, terms };
        }
        let kept_vars = vars
            .iter()
            .zip(&used)
            .filter(|(_, u)| **u)
            .map(|(v, _)| v.clone())
            .collect();
        let terms = terms
            .into_iter()
            .map(|(e, c)| {
                let e = e.iter().zip(&used).filter(|(_, u)| **u).map(|(x, _)| *x).collect();
                (e, c)
            })
            .collect();
        Self { vars: kept_vars, terms }
    }

    pub fn add(&self, other: &Self) -> Self {
        let vars = self.union_vars(other);
        let mut terms = self.realigned(&vars);
        for (e, c) in other.realigned(&vars) {
            let slot = terms.entry(e).or_insert_with(T::zero);
            *slot = slot.clone() + c;
        }
        Self::from_parts(vars, terms)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(&(T::zero() - T::one())))
    }

    pub fn scale(&self, k: &T) -> Self {
        let terms = self.terms.iter().map(|(e, c)| (e.clone(), c.clone() * k.clone())).collect();
        Self::from_parts(self.vars.clone(), terms)
    }

    pub fn mul(&self, other: &Self) -> Self {
        let vars = self.union_vars(other);
        let lhs = self.realigned(&vars);
        let rhs = other.realigned(&vars);
        let mut terms: BTreeMap<Exponents, T> = BTreeMap::new();
        for (e1, c1) in &lhs {
            for (e2, c2) in &rhs {
                let e: Exponents = e1.iter().zip(e2).map(|(a, b)| a + b).collect();
                let slot = terms.entry(e).or_insert_with(T::zero);
                *slot = slot.clone() + c1.clone() * c2.clone();
            }
        }
        Self::from_parts(vars, terms)
    }

    /// `1 - self`.
    pub fn complement(&self) -> Self {
        Self::one().sub(self)
    }

    pub fn pow(&self, k: usize) -> Self {
        let mut out = Self::one();
        let mut base = self.clone();
        let mut k = k;
        while k > 0 {
            if k & 1 == 1 {
                out = out.mul(&base);
            }
            k >>= 1;
            if k > 0 {
                base = base.mul(&base);
            }
        }
        out
    }

    /// Value at a point; every variable must be assigned.
    pub fn evaluate(&self, assignment: &BTreeMap<SkillId, T>) -> Result<T> {
        let values: Vec<&T> = self
            .vars
            .iter()
            .map(|v| assignment.get(v).ok_or_else(|| Error::MissingVariable(v.clone())))
            .collect::<Result<_>>()?;
        let mut acc = T::zero();
        for (exps, c) in &self.terms {
            let mut term = c.clone();
            for (x, &e) in values.iter().zip(exps) {
                term = term * crate::scalar::powi(*x, e as usize);
            }
            acc = acc + term;
        }
        Ok(acc)
    }

    fn moment_tables(
        &self,
        dists: &BTreeMap<SkillId, BasisCoefficients<T>>,
        skip: Option<usize>,
    ) -> Result<Vec<Vec<T>>> {
        self.vars
            .iter()
            .enumerate()
            .map(|(idx, v)| {
                if Some(idx) == skip {
                    return Ok(Vec::new());
                }
                let dist = dists.get(v).ok_or_else(|| Error::MissingSkillDistribution(v.clone()))?;
                Ok(dist.moments(self.degree_in(v)))
            })
            .collect()
    }

    /// `E[x]` with every variable independent and distributed per `dists`;
    /// each monomial becomes a product of per-skill moments.
    pub fn expected_value(&self, dists: &BTreeMap<SkillId, BasisCoefficients<T>>) -> Result<T> {
        let moments = self.moment_tables(dists, None)?;
        let mut acc = T::zero();
        for (exps, c) in &self.terms {
            let mut term = c.clone();
            for (table, &e) in moments.iter().zip(exps) {
                term = term * table[e as usize].clone();
            }
            acc = acc + term;
        }
        Ok(acc)
    }

    /// Expectation over every variable except `keep`, returned as power-basis
    /// coefficients `k_0..k_d` of a polynomial in `keep`.
    pub fn expect_except(
        &self,
        keep: &SkillId,
        dists: &BTreeMap<SkillId, BasisCoefficients<T>>,
    ) -> Result<Vec<T>> {
        let keep_idx = self.vars.binary_search(keep).ok();
        let moments = self.moment_tables(dists, keep_idx)?;
        let degree = keep_idx.map(|_| self.degree_in(keep)).unwrap_or(0);
        let mut out = vec![T::zero(); degree + 1];
        for (exps, c) in &self.terms {
            let mut term = c.clone();
            let mut power = 0usize;
            for (idx, (table, &e)) in moments.iter().zip(exps).enumerate() {
                if Some(idx) == keep_idx {
                    power = e as usize;
                } else {
                    term = term * table[e as usize].clone();
                }
            }
            out[power] = out[power].clone() + term;
        }
        Ok(out)
    }
}

impl<T: Scalar + fmt::Display> fmt::Display for ProbPolynomial<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let zero = T::zero();
        for (n, (exps, c)) in self.terms.iter().enumerate() {
            let negative = *c < zero;
            let magnitude = if negative { zero.clone() - c.clone() } else { c.clone() };
            match (n, negative) {
                (0, true) => write!(f, "-")?,
                (0, false) => {}
                (_, true) => write!(f, " - ")?,
                (_, false) => write!(f, " + ")?,
            }
            let factors: Vec<String> = self
                .vars
                .iter()
                .zip(exps)
                .filter(|(_, &e)| e > 0)
                .map(|(v, &e)| if e == 1 { v.to_string() } else { format!("{v}^{e}") })
                .collect();
            if factors.is_empty() {
                write!(f, "{magnitude}")?;
            } else if magnitude == T::one() {
                write!(f, "{}", factors.join("*"))?;
            } else {
                write!(f, "{magnitude}*{}", factors.join("*"))?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::BigRational;

    fn v(s: &str) -> ProbPolynomial<f64> {
        ProbPolynomial::var(SkillId::from(s))
    }

    #[test]
    fn arithmetic_and_display() {
        let a = v("a");
        let b = v("b");
        let or = a.add(&b).sub(&a.mul(&b));
        assert_eq!(or.to_string(), "b + a - a*b");
        assert_eq!(or.complement().complement(), or);
        assert!(a.sub(&a).is_zero());
        assert_eq!(a.sub(&a).vars().len(), 0);
        assert_eq!(a.pow(3).coefficient(&[("a", 3)]), 1.0);
        assert_eq!(or.max_var_degree(), 1);
    }

    #[test]
    fn evaluate_examples() {
        let a = v("A");
        let b = v("B");
        let or = a.add(&b).sub(&a.mul(&b));
        let at = |x: f64, y: f64| BTreeMap::from([("A".into(), x), ("B".into(), y)]);
        assert_eq!(or.evaluate(&at(1.0, 0.0)).unwrap(), 1.0);
        assert_eq!(a.mul(&b).evaluate(&at(0.5, 0.5)).unwrap(), 0.25);
        let nested = a.mul(&or);
        // 1/4 + 1/4 - 1/8
        assert_eq!(nested.evaluate(&at(0.5, 0.5)).unwrap(), 0.375);
        let partial = BTreeMap::from([(SkillId::from("A"), 0.5)]);
        assert_eq!(or.evaluate(&partial), Err(Error::MissingVariable("B".into())));
    }

    #[test]
    fn expected_value_examples() {
        let flat = BasisCoefficients::<BigRational>::flat();
        let dists = BTreeMap::from([("a".into(), flat.clone()), ("b".into(), flat)]);
        let a = ProbPolynomial::<BigRational>::var("a".into());
        let b = ProbPolynomial::<BigRational>::var("b".into());
        let quarter = BigRational::new(1.into(), 4.into());
        assert_eq!(a.mul(&b).expected_value(&dists).unwrap(), quarter);
        assert_eq!(a.pow(2).expected_value(&dists).unwrap(), BigRational::new(1.into(), 3.into()));
        let skew = BasisCoefficients::<BigRational>::spike(5, 1).unwrap();
        let one = BTreeMap::from([("a".into(), skew.clone())]);
        assert_eq!(a.expected_value(&one).unwrap(), skew.mean());
        assert_eq!(
            a.mul(&b).expected_value(&one),
            Err(Error::MissingSkillDistribution("b".into()))
        );
    }

    #[test]
    fn expect_except_marginalizes_other_skills() {
        let a = v("a");
        let b = v("b");
        let flat = BasisCoefficients::<f64>::flat();
        let dists = BTreeMap::from([("b".into(), flat)]);
        let and = a.mul(&b);
        assert_eq!(and.expect_except(&"a".into(), &dists).unwrap(), vec![0.0, 0.5]);
        let or = a.add(&b).sub(&and);
        assert_eq!(or.expect_except(&"a".into(), &dists).unwrap(), vec![0.5, 0.5]);
    }
}
