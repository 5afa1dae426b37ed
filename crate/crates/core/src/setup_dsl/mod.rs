//! Exercise and skill set-ups and their probability polynomials.
//!
//! A set-up is a small expression language over skill identifiers:
//!
//! ```text
//! expr  := IDENT | op '(' args ')'
//! and(e, e, ...)            all children must succeed
//! or(e, e, ...)             any child suffices
//! pick(e, e, ..., k=K)      K children chosen uniformly (default K = 1)
//! pick(e:w, e:w, ...)       one child chosen with the given weights
//! part(e, p)                child needed only in a fraction p of cases
//! ```
//!
//! Operator names are case-insensitive and whitespace is ignored.

mod parser;
mod poly;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

pub use parser::{parse, ParseError};
pub use poly::ProbPolynomial;

use crate::scalar::Scalar;

/// Skill identifier.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SkillId(String);

impl SkillId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl From<&str> for SkillId {
    fn from(s: &str) -> Self {
        Self(s.to_string())
    }
}

impl From<String> for SkillId {
    fn from(s: String) -> Self {
        Self(s)
    }
}

impl fmt::Display for SkillId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::borrow::Borrow<str> for SkillId {
    fn borrow(&self) -> &str {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SetupExpr {
    Skill(SkillId),
    And(Vec<SetupExpr>),
    Or(Vec<SetupExpr>),
    /// `choose` of the children are required, picked uniformly; with
    /// `choose == 1` optional per-child weights replace the uniform pick.
    Pick {
        children: Vec<SetupExpr>,
        weights: Option<Vec<f64>>,
        choose: usize,
    },
    /// Child required in a fraction `fraction` of the cases. Only valid
    /// directly under `And` or `Or`.
    Part {
        child: Box<SetupExpr>,
        fraction: f64,
    },
}

impl SetupExpr {
    pub fn skill(id: &str) -> Self {
        Self::Skill(SkillId::from(id))
    }

    /// Every skill referenced anywhere in the tree.
    pub fn skills(&self) -> BTreeSet<SkillId> {
        let mut out = BTreeSet::new();
        self.collect_skills(&mut out);
        out
    }

    fn collect_skills(&self, out: &mut BTreeSet<SkillId>) {
        match self {
            Self::Skill(id) => {
                out.insert(id.clone());
            }
            Self::And(c) | Self::Or(c) | Self::Pick { children: c, .. } => {
                c.iter().for_each(|e| e.collect_skills(out))
            }
            Self::Part { child, .. } => child.collect_skills(out),
        }
    }

    /// Only `and` and `or` nodes (what exercises may use).
    pub fn is_deterministic(&self) -> bool {
        match self {
            Self::Skill(_) => true,
            Self::And(c) | Self::Or(c) => c.iter().all(Self::is_deterministic),
            Self::Pick { .. } | Self::Part { .. } => false,
        }
    }

    /// Compiles to the probability polynomial.
    pub fn compile<T: Scalar>(&self) -> ProbPolynomial<T> {
        match self {
            Self::Skill(id) => ProbPolynomial::var(id.clone()),
            Self::And(children) => children.iter().fold(ProbPolynomial::one(), |acc, c| {
                acc.mul(&c.compile_under(Surrounding::And))
            }),
            Self::Or(children) => children
                .iter()
                .fold(ProbPolynomial::one(), |acc, c| {
                    acc.mul(&c.compile_under(Surrounding::Or).complement())
                })
                .complement(),
            Self::Pick { children, weights, choose } => compile_pick(children, weights.as_deref(), *choose),
            // parse rejects a root-level part; treat it as required
            Self::Part { child, fraction } => compile_part(child, *fraction, Surrounding::And),
        }
    }

    fn compile_under<T: Scalar>(&self, surrounding: Surrounding) -> ProbPolynomial<T> {
        match self {
            Self::Part { child, fraction } => compile_part(child, *fraction, surrounding),
            other => other.compile(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Surrounding {
    And,
    Or,
}

fn compile_part<T: Scalar>(child: &SetupExpr, p: f64, surrounding: Surrounding) -> ProbPolynomial<T> {
    let p = T::from_real(p);
    let inner = child.compile::<T>();
    match surrounding {
        // 1 - p (1 - x)
        Surrounding::And => inner.complement().scale(&p).complement(),
        // p x
        Surrounding::Or => inner.scale(&p),
    }
}

fn compile_pick<T: Scalar>(children: &[SetupExpr], weights: Option<&[f64]>, choose: usize) -> ProbPolynomial<T> {
    let compiled: Vec<ProbPolynomial<T>> = children.iter().map(SetupExpr::compile).collect();
    if choose <= 1 {
        let uniform = T::one() / T::from_count(compiled.len());
        return compiled.iter().enumerate().fold(ProbPolynomial::zero(), |acc, (i, c)| {
            let w = weights.map(|w| T::from_real(w[i])).unwrap_or_else(|| uniform.clone());
            acc.add(&c.scale(&w))
        });
    }
    let mut total = ProbPolynomial::zero();
    let mut count = 0usize;
    for_each_combination(compiled.len(), choose, &mut |idx| {
        let product = idx.iter().fold(ProbPolynomial::one(), |acc, &i| acc.mul(&compiled[i]));
        total = total.add(&product);
        count += 1;
    });
    total.scale(&(T::one() / T::from_count(count.max(1))))
}

fn for_each_combination(n: usize, k: usize, f: &mut dyn FnMut(&[usize])) {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
        if cur.len() == k {
            f(cur);
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, f);
            cur.pop();
        }
    }
    if k <= n {
        rec(0, n, k, &mut Vec::with_capacity(k), f);
    }
}

impl fmt::Display for SetupExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn list(f: &mut fmt::Formatter<'_>, name: &str, c: &[SetupExpr]) -> fmt::Result {
            write!(f, "{name}(")?;
            for (i, e) in c.iter().enumerate() {
                if i > 0 {
                    write!(f, ", ")?;
                }
                write!(f, "{e}")?;
            }
            write!(f, ")")
        }
        match self {
            Self::Skill(id) => write!(f, "{id}"),
            Self::And(c) => list(f, "and", c),
            Self::Or(c) => list(f, "or", c),
            Self::Pick { children, weights, choose } => {
                write!(f, "pick(")?;
                for (i, e) in children.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{e}")?;
                    if let Some(w) = weights {
                        write!(f, ":{}", w[i])?;
                    }
                }
                if *choose != 1 {
                    write!(f, ", k={choose}")?;
                }
                write!(f, ")")
            }
            Self::Part { child, fraction } => write!(f, "part({child}, {fraction})"),
        }
    }
}
