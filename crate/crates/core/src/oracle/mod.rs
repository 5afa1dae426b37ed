//! Brute-force reference computations for checking the coefficient
//! formulas: numerical quadrature of the defining integrals, Monte-Carlo
//! sampling, and least-squares projection of gridded densities back onto
//! the beta basis.
//!
//! Nothing here calls the closed-form coefficient transforms. Basis
//! densities are evaluated from their explicit power form rather than
//! through the engine's evaluator.

pub mod semantics;
pub mod suite;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};

use crate::error::{Error, Result};

/// Minimum grid resolution for gridded densities.
pub const MIN_GRID_POINTS: usize = 2001;

/// `g_{i,n}(a) = (n+1) C(n,i) a^i (1-a)^(n-i)` from its power form.
pub fn basis_pdf(i: usize, n: usize, a: f64) -> f64 {
    if !(0.0..=1.0).contains(&a) {
        return 0.0;
    }
    let mut binom = 1.0f64;
    for j in 1..=i {
        binom = binom * (n - i + j) as f64 / j as f64;
    }
    (n + 1) as f64 * binom * a.powi(i as i32) * (1.0 - a).powi((n - i) as i32)
}

/// Density of a beta-basis mixture with the given weights.
pub fn mixture_pdf(coeffs: &[f64], a: f64) -> f64 {
    let n = coeffs.len() - 1;
    coeffs
        .iter()
        .enumerate()
        .filter(|(_, c)| **c != 0.0)
        .map(|(i, c)| c * basis_pdf(i, n, a))
        .sum()
}

/// Composite Simpson rule on `points` (odd) equally spaced nodes.
pub fn simpson(f: impl Fn(f64) -> f64, lo: f64, hi: f64, points: usize) -> f64 {
    let points = if points.is_multiple_of(2) { points + 1 } else { points.max(3) };
    let h = (hi - lo) / (points - 1) as f64;
    let mut acc = f(lo) + f(hi);
    for k in 1..points - 1 {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(lo + k as f64 * h);
    }
    acc * h / 3.0
}

/// Simpson integral checked against the same rule on half the nodes.
pub fn simpson_refined(f: impl Fn(f64) -> f64, points: usize, tolerance: f64) -> Result<f64> {
    let fine = simpson(&f, 0.0, 1.0, points);
    let coarse = simpson(&f, 0.0, 1.0, points / 2 + 1);
    let delta = (fine - coarse).abs();
    if delta > tolerance * fine.abs().max(1.0) {
        return Err(Error::NonConvergence { delta, tolerance });
    }
    Ok(fine)
}

/// Gauss–Legendre rule mapped to `[0, 1]`; exact for polynomials of degree
/// below `2 * len`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        let mut nodes = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        for k in 0..n {
            // Newton iteration on P_n from the Chebyshev guess
            let mut x = (std::f64::consts::PI * (k as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 1.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0f64, x);
                for j in 2..=n {
                    let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
                    p0 = p1;
                    p1 = p2;
                }
                let pn = if n == 0 { 1.0 } else { p1 };
                let pn1 = if n == 0 { 0.0 } else { p0 };
                dp = n as f64 * (x * pn - pn1) / (x * x - 1.0);
                let dx = pn / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            nodes.push(0.5 * (1.0 - x));
            weights.push(1.0 / ((1.0 - x * x) * dp * dp));
        }
        Self { nodes, weights }
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(x, w)| w * f(*x)).sum()
    }
}

/// Density sampled on a uniform grid over `[0, 1]`.
#[derive(Debug, Clone)]
pub struct GridPdf {
    pub xs: Vec<f64>,
    pub values: Vec<f64>,
}

impl GridPdf {
    pub fn from_fn(points: usize, f: impl Fn(f64) -> f64) -> Self {
        let points = points.max(MIN_GRID_POINTS);
        let xs: Vec<f64> = (0..points).map(|k| k as f64 / (points - 1) as f64).collect();
        let values = xs.iter().map(|&x| f(x)).collect();
        Self { xs, values }
    }

    pub fn integral(&self) -> f64 {
        let n = self.xs.len();
        let h = 1.0 / (n - 1) as f64;
        if n % 2 == 1 {
            let mut acc = self.values[0] + self.values[n - 1];
            for k in 1..n - 1 {
                acc += if k % 2 == 1 { 4.0 } else { 2.0 } * self.values[k];
            }
            acc * h / 3.0
        } else {
            let mut acc = 0.5 * (self.values[0] + self.values[n - 1]);
            acc += self.values[1..n - 1].iter().sum::<f64>();
            acc * h
        }
    }

    pub fn max_abs_diff(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.xs
            .iter()
            .zip(&self.values)
            .map(|(x, v)| (f(*x) - v).abs())
            .fold(0.0, f64::max)
    }
}

/// Posterior density `prior · likelihood / Z` on a grid, with `Z` from
/// Simpson's rule checked by grid refinement.
pub fn quad_posterior(
    prior: impl Fn(f64) -> f64,
    likelihood: impl Fn(f64) -> f64,
    points: usize,
) -> Result<GridPdf> {
    let unnormalized = |a: f64| prior(a) * likelihood(a);
    let z = simpson_refined(unnormalized, points.max(MIN_GRID_POINTS), 1e-9)?;
    if !(z > 0.0) {
        return Err(Error::AllZero);
    }
    Ok(GridPdf::from_fn(points, |a| unnormalized(a) / z))
}

/// Coefficients of the smoothed density, each the integral
/// `(1/(n_s+1)) ∫ f(a) g_{i,n_s}(a) da` evaluated by Gauss–Legendre.
pub fn smooth_coefficients(pdf: impl Fn(f64) -> f64, n_s: usize, rule: &GaussLegendre) -> Vec<f64> {
    (0..=n_s)
        .map(|i| rule.integrate(|a| pdf(a) * basis_pdf(i, n_s, a)) / (n_s + 1) as f64)
        .collect()
}

/// Density of the smoothed distribution on a grid, by direct evaluation of
/// the smoothing integral against the joint prior.
pub fn quad_smooth(pdf: impl Fn(f64) -> f64, n_s: usize, points: usize) -> GridPdf {
    let rule = GaussLegendre::new(64);
    let w = smooth_coefficients(pdf, n_s, &rule);
    GridPdf::from_fn(points, |x| {
        w.iter().enumerate().map(|(i, wi)| wi * basis_pdf(i, n_s, x)).sum()
    })
}

/// Least-squares projection of a gridded density onto the order-`order`
/// basis (SVD solve of the collocation system).
pub fn fit_coefficients(grid: &GridPdf, order: usize) -> Result<Vec<f64>> {
    let rows = grid.xs.len();
    let design = DMatrix::from_fn(rows, order + 1, |r, i| basis_pdf(i, order, grid.xs[r]));
    let rhs = DVector::from_column_slice(&grid.values);
    let svd = design.svd(true, true);
    let solution = svd
        .solve(&rhs, 1e-14)
        .map_err(|e| Error::InvalidArgument(format!("least-squares solve failed: {e}")))?;
    Ok(solution.iter().copied().collect())
}

/// Sum of absolute coefficient differences after scaling `reference` to
/// unit sum.
pub fn l1_distance(coeffs: &[f64], reference: &[f64]) -> f64 {
    let total: f64 = reference.iter().sum();
    if coeffs.len() != reference.len() {
        return f64::INFINITY;
    }
    coeffs.iter().zip(reference).map(|(a, b)| (a - b / total).abs()).sum()
}

/// Inference coefficients `E[g_{i,n_i}(x(a, b, ...))]` on a tensor
/// Gauss–Legendre grid. `x` receives one value per distribution.
pub fn quad_infer(x: impl Fn(&[f64]) -> f64, dists: &[&[f64]], n_i: usize, rule: &GaussLegendre) -> Vec<f64> {
    let d = dists.len();
    let m = rule.nodes.len();
    let weights: Vec<Vec<f64>> = dists
        .iter()
        .map(|c| rule.nodes.iter().zip(&rule.weights).map(|(a, w)| w * mixture_pdf(c, *a)).collect())
        .collect();
    let mut out = vec![0.0; n_i + 1];
    let mut idx = vec![0usize; d];
    let mut point = vec![0.0; d];
    loop {
        let mut w = 1.0;
        for k in 0..d {
            point[k] = rule.nodes[idx[k]];
            w *= weights[k][idx[k]];
        }
        let value = x(&point).clamp(0.0, 1.0);
        for (i, slot) in out.iter_mut().enumerate() {
            *slot += w * basis_pdf(i, n_i, value);
        }
        // odometer increment
        let mut k = 0;
        while k < d {
            idx[k] += 1;
            if idx[k] < m {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
        if k == d {
            break;
        }
    }
    out
}

/// Draw from a beta-basis mixture: component `i` with probability `c_i`,
/// then Beta(i+1, n-i+1).
pub fn sample_mixture<R: Rng + ?Sized>(rng: &mut R, coeffs: &[f64]) -> f64 {
    let n = coeffs.len() - 1;
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut pick = n;
    for (i, c) in coeffs.iter().enumerate() {
        acc += c;
        if u < acc {
            pick = i;
            break;
        }
    }
    Beta::new((pick + 1) as f64, (n - pick + 1) as f64)
        .expect("positive shape parameters")
        .sample(rng)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub samples: usize,
    pub seed: u64,
}

impl McEstimate {
    /// Distance from `value` in standard errors.
    pub fn z_score(&self, value: f64) -> f64 {
        if self.stderr == 0.0 {
            return if value == self.mean { 0.0 } else { f64::INFINITY };
        }
        (value - self.mean).abs() / self.stderr
    }
}

/// Monte-Carlo estimate of `E[f(a, b, ...)]` with independent draws from
/// each distribution.
pub fn mc_expect(f: impl Fn(&[f64]) -> f64, dists: &[&[f64]], samples: usize, seed: u64) -> McEstimate {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut point = vec![0.0; dists.len()];
    let (mut sum, mut sum_sq) = (0.0f64, 0.0f64);
    for _ in 0..samples {
        for (slot, c) in point.iter_mut().zip(dists) {
            *slot = sample_mixture(&mut rng, c);
        }
        let v = f(&point);
        sum += v;
        sum_sq += v * v;
    }
    let n = samples as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0) * n / (n - 1.0).max(1.0);
    McEstimate { mean, stderr: (var / n).sqrt(), samples, seed }
}

/// Sample correlation between consecutive success rates under the joint
/// smoothing prior of order `n_s`.
pub fn joint_prior_correlation(n_s: usize, samples: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for _ in 0..samples {
        let i = rng.random_range(0..=n_s);
        let beta = Beta::new((i + 1) as f64, (n_s - i + 1) as f64).expect("positive shape");
        let x: f64 = beta.sample(&mut rng);
        let y: f64 = beta.sample(&mut rng);
        sx += x;
        sy += y;
        sxx += x * x;
        syy += y * y;
        sxy += x * y;
    }
    let n = samples as f64;
    let cov = sxy / n - (sx / n) * (sy / n);
    let vx = sxx / n - (sx / n).powi(2);
    let vy = syy / n - (sy / n).powi(2);
    cov / (vx * vy).sqrt()
}
