//! Seeded comparison of every coefficient transform against its oracle.

use std::collections::BTreeMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::semantics::{random_coeffs, random_nonnegative_poly, random_setup, IndexedExpr, TreeShape};
use super::{
    basis_pdf, fit_coefficients, joint_prior_correlation, l1_distance, mc_expect, mixture_pdf, quad_infer,
    quad_posterior, simpson_refined, smooth_coefficients, GaussLegendre, GridPdf, MIN_GRID_POINTS,
};
use crate::beta_basis::BasisCoefficients;
use crate::error::Result;
use crate::fusion::merge;
use crate::inference::{expected_success, infer, infer_gauss, InferenceConfig};
use crate::observe::{update_binary, update_general, HPolynomial, Outcome};
use crate::setup_dsl::{SetupExpr, SkillId};
use crate::smoothing::smooth;

#[derive(Debug, Clone, Copy)]
pub struct SuiteConfig {
    /// Random cases per coefficient transform.
    pub cases: usize,
    /// Random set-up trees for the semantics check.
    pub trees: usize,
    pub mc_samples: usize,
    pub seed: u64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self { cases: 200, trees: 50, mc_samples: 1_000_000, seed: 20_240_601 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub cases: usize,
    /// L1 coefficient distance, absolute error, or z-score for sampled
    /// checks.
    pub max_deviation: f64,
    pub threshold: f64,
    pub seed: u64,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.max_deviation <= self.threshold
    }
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {:<22} cases={:<4} max_dev={:.3e} threshold={:.1e} seed={}",
            if self.passed() { "PASS" } else { "FAIL" },
            self.name,
            self.cases,
            self.max_deviation,
            self.threshold,
            self.seed
        )
    }
}

/// Runs every check.
pub fn run(cfg: &SuiteConfig) -> Result<Vec<CheckResult>> {
    Ok(vec![
        check_basis_integrals(),
        check_update_binary(cfg.cases, cfg.seed)?,
        check_update_general(cfg.cases, cfg.seed + 1)?,
        check_smooth(cfg.cases, cfg.seed + 2)?,
        check_merge(cfg.cases, cfg.seed + 3)?,
        check_infer(cfg.cases, cfg.seed + 4, InferRoute::Gauss)?,
        check_infer(cfg.cases, cfg.seed + 4, InferRoute::Monomial)?,
        check_expected_value(cfg.cases.div_ceil(20).min(10), cfg.mc_samples, cfg.seed + 5)?,
        check_setup_semantics(cfg.trees, cfg.seed + 6)?,
        check_joint_prior(cfg.mc_samples, cfg.seed + 7),
    ])
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn dist(rng: &mut ChaCha8Rng, max_order: usize) -> BasisCoefficients<f64> {
    let order = rng.random_range(0..=max_order);
    BasisCoefficients::normalized(random_coeffs(rng, order)).expect("nonzero coefficients")
}

/// Every basis function integrates to one under both quadrature rules.
pub fn check_basis_integrals() -> CheckResult {
    let rule = GaussLegendre::new(48);
    let mut worst = 0.0f64;
    let mut cases = 0;
    for n in 0..=40 {
        for i in 0..=n {
            let gl = rule.integrate(|a| basis_pdf(i, n, a));
            let simpson = simpson_refined(|a| basis_pdf(i, n, a), 16_001, 1e-6).unwrap_or(f64::INFINITY);
            worst = worst.max((gl - 1.0).abs()).max((simpson - 1.0).abs());
            cases += 1;
        }
    }
    CheckResult { name: "basis_integral", cases, max_deviation: worst, threshold: 1e-10, seed: 0 }
}

fn posterior_fit(prior: &[f64], likelihood: impl Fn(f64) -> f64, order: usize) -> Result<Vec<f64>> {
    let grid = quad_posterior(|a| mixture_pdf(prior, a), likelihood, MIN_GRID_POINTS)?;
    fit_coefficients(&grid, order)
}

pub fn check_update_binary(cases: usize, seed: u64) -> Result<CheckResult> {
    let mut rng = rng(seed);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let c = dist(&mut rng, 12);
        let outcome = Outcome::from_bool(rng.random_bool(0.5));
        let got = update_binary(&c, outcome)?;
        let reference = posterior_fit(
            c.coeffs(),
            |a| if outcome.is_success() { a } else { 1.0 - a },
            c.order() + 1,
        )?;
        worst = worst.max(l1_distance(got.coeffs(), &reference));
    }
    Ok(CheckResult { name: "update_binary", cases, max_deviation: worst, threshold: 1e-6, seed })
}

pub fn check_update_general(cases: usize, seed: u64) -> Result<CheckResult> {
    let mut rng = rng(seed);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let c = dist(&mut rng, 12);
        let degree = rng.random_range(1..=3);
        let power = random_nonnegative_poly(&mut rng, degree);
        let got = update_general(&c, &HPolynomial::from_power(power.clone()))?;
        let horner = |a: f64| power.iter().rev().fold(0.0, |acc, k| acc * a + k);
        let reference = posterior_fit(c.coeffs(), horner, c.order() + degree)?;
        worst = worst.max(l1_distance(got.coeffs(), &reference));
    }
    Ok(CheckResult { name: "update_general", cases, max_deviation: worst, threshold: 1e-6, seed })
}

pub fn check_smooth(cases: usize, seed: u64) -> Result<CheckResult> {
    let mut rng = rng(seed);
    let rule = GaussLegendre::new(64);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let c = dist(&mut rng, 12);
        let n_s = rng.random_range(0..=16);
        let got = smooth(&c, n_s)?;
        let reference = smooth_coefficients(|a| mixture_pdf(c.coeffs(), a), n_s, &rule);
        worst = worst.max(l1_distance(got.coeffs(), &reference));
    }
    Ok(CheckResult { name: "smooth", cases, max_deviation: worst, threshold: 1e-6, seed })
}

pub fn check_merge(cases: usize, seed: u64) -> Result<CheckResult> {
    let mut rng = rng(seed);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let d1 = dist(&mut rng, 10);
        let d2 = dist(&mut rng, 10);
        let got = merge(&d1, &d2)?;
        let reference = posterior_fit(d1.coeffs(), |a| mixture_pdf(d2.coeffs(), a), d1.order() + d2.order())?;
        worst = worst.max(l1_distance(got.coeffs(), &reference));
    }
    Ok(CheckResult { name: "merge", cases, max_deviation: worst, threshold: 1e-6, seed })
}

/// Set-up over at most three skills with every skill of degree at most two,
/// so tensor Gauss–Legendre on 32 nodes is exact.
fn small_setup(rng: &mut ChaCha8Rng) -> SetupExpr {
    let shape = TreeShape { skills: 3, max_depth: 2, max_children: 3, deterministic: false };
    loop {
        let e = random_setup(rng, &shape);
        if e.compile::<f64>().max_var_degree() <= 2 {
            return e;
        }
    }
}

fn random_dists(
    rng: &mut ChaCha8Rng,
    e: &SetupExpr,
    max_order: usize,
) -> (Vec<SkillId>, BTreeMap<SkillId, BasisCoefficients<f64>>) {
    let vars: Vec<SkillId> = e.skills().into_iter().collect();
    let dists = vars.iter().map(|v| (v.clone(), dist(rng, max_order))).collect();
    (vars, dists)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InferRoute {
    /// [`infer_gauss`], what the tracker runs.
    Gauss,
    /// [`infer`] in `f64`.
    Monomial,
}

pub fn check_infer(cases: usize, seed: u64, route: InferRoute) -> Result<CheckResult> {
    let mut rng = rng(seed);
    let rule = GaussLegendre::new(32);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let e = small_setup(&mut rng);
        let (vars, dists) = random_dists(&mut rng, &e, 6);
        let n_i = rng.random_range(1..=12);
        let cfg = InferenceConfig { n_i };
        let got = match route {
            InferRoute::Gauss => infer_gauss(&e.compile(), &dists, &cfg)?,
            InferRoute::Monomial => infer(&e.compile(), &dists, &cfg)?,
        };
        let ix = IndexedExpr::new(&e, &vars);
        let slices: Vec<&[f64]> = vars.iter().map(|v| dists[v].coeffs()).collect();
        let reference = quad_infer(|p| ix.eval(p), &slices, n_i, &rule);
        worst = worst.max(l1_distance(got.coeffs(), &reference));
    }
    let name = match route {
        InferRoute::Gauss => "infer",
        InferRoute::Monomial => "infer_monomial",
    };
    Ok(CheckResult { name, cases, max_deviation: worst, threshold: 1e-6, seed })
}

/// Largest z-score of the closed-form expectation against sampling.
pub fn check_expected_value(cases: usize, samples: usize, seed: u64) -> Result<CheckResult> {
    let mut rng = rng(seed);
    let mut worst = 0.0f64;
    for case in 0..cases {
        let e = small_setup(&mut rng);
        let (vars, dists) = random_dists(&mut rng, &e, 8);
        let exact = expected_success(&e.compile(), &dists)?;
        let ix = IndexedExpr::new(&e, &vars);
        let slices: Vec<&[f64]> = vars.iter().map(|v| dists[v].coeffs()).collect();
        let est = mc_expect(|p| ix.eval(p), &slices, samples, seed ^ case as u64);
        worst = worst.max(est.z_score(exact));
    }
    Ok(CheckResult { name: "expected_value_mc", cases, max_deviation: worst, threshold: 3.0, seed })
}

/// Compiled polynomials against scenario enumeration at every 0/1 corner
/// and against direct evaluation at random interior points.
pub fn check_setup_semantics(trees: usize, seed: u64) -> Result<CheckResult> {
    let mut rng = rng(seed);
    let shape = TreeShape { skills: 4, max_depth: 4, max_children: 3, deterministic: false };
    let mut worst = 0.0f64;
    let mut done = 0;
    while done < trees {
        let e = random_setup(&mut rng, &shape);
        let vars: Vec<SkillId> = e.skills().into_iter().collect();
        let ix = IndexedExpr::new(&e, &vars);
        if ix.scenario_count() > 50_000 {
            continue;
        }
        let poly = e.compile::<f64>();
        for mask in 0u32..1 << vars.len() {
            let bits: Vec<bool> = (0..vars.len()).map(|k| mask & (1 << k) != 0).collect();
            let point: BTreeMap<SkillId, f64> =
                vars.iter().zip(&bits).map(|(v, b)| (v.clone(), if *b { 1.0 } else { 0.0 })).collect();
            worst = worst.max((poly.evaluate(&point)? - ix.brute_force(&bits)).abs());
        }
        for _ in 0..8 {
            let values: Vec<f64> = vars.iter().map(|_| rng.random()).collect();
            let point: BTreeMap<SkillId, f64> = vars.iter().cloned().zip(values.iter().copied()).collect();
            worst = worst.max((poly.evaluate(&point)? - ix.eval(&values)).abs());
        }
        done += 1;
    }
    Ok(CheckResult { name: "setup_semantics", cases: trees, max_deviation: worst, threshold: 1e-12, seed })
}

/// Correlation of consecutive rates under the joint prior against the
/// decay ratio `n_s / (n_s + 2)`.
pub fn check_joint_prior(samples: usize, seed: u64) -> CheckResult {
    let orders = [1usize, 2, 5, 10, 20];
    let worst = orders
        .iter()
        .map(|&n| (joint_prior_correlation(n, samples, seed + n as u64) - n as f64 / (n as f64 + 2.0)).abs())
        .fold(0.0, f64::max);
    CheckResult { name: "joint_prior_correlation", cases: orders.len(), max_deviation: worst, threshold: 5e-3, seed }
}

/// Beta(s+1, f+1) density on the standard grid, via statrs.
pub fn beta_grid(successes: usize, failures: usize) -> GridPdf {
    use statrs::distribution::{Beta, Continuous};
    let beta = Beta::new((successes + 1) as f64, (failures + 1) as f64).expect("positive shape");
    GridPdf::from_fn(MIN_GRID_POINTS, |a| beta.pdf(a))
}
