//! Gauss quadrature rules for integrating against a skill distribution.
//!
//! A rule with `k` nodes built for a distribution integrates every
//! polynomial of degree below `2k` exactly against its density. Nodes lie
//! in `[0, 1]` and weights are positive, so integrating a nonnegative
//! polynomial involves no cancellation.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::beta_basis::{de_casteljau, BasisCoefficients};

#[derive(Debug, Clone, PartialEq)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussRule {
    /// Rule exact for polynomials up to `degree` against `d`'s density.
    pub fn for_distribution(d: &BasisCoefficients<f64>, degree: usize) -> Self {
        let k = degree / 2 + 1;
        // Legendre points resolve the density times any degree-2k integrand
        let (t, w) = legendre(d.order().div_ceil(2) + k + 1);
        let scale = (d.order() + 1) as f64;
        let mass: Vec<f64> = t
            .iter()
            .zip(&w)
            .map(|(x, w)| w * scale * de_casteljau(d.coeffs(), x).max(0.0))
            .collect();
        lanczos(&t, &mass, k)
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(x, w)| w * f(*x)).sum()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Gauss–Legendre nodes and weights on `[0, 1]`.
pub(crate) fn legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for k in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (k as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0f64, x);
            for j in 2..=n {
                let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = p2;
            }
            let (pn, pn1) = if n == 1 { (x, 1.0) } else { (p1, p0) };
            dp = n as f64 * (x * pn - pn1) / (x * x - 1.0);
            let step = pn / dp;
            x -= step;
            if step.abs() < 1e-15 {
                break;
            }
        }
        let w = 1.0 / ((1.0 - x * x) * dp * dp);
        nodes[k] = 0.5 * (1.0 - x);
        nodes[n - 1 - k] = 0.5 * (1.0 + x);
        weights[k] = w;
        weights[n - 1 - k] = w;
    }
    (nodes, weights)
}

/// `k`-point Gauss rule of a discrete measure, from the Jacobi matrix that
/// Lanczos (with full reorthogonalization) builds on `diag(t)`.
fn lanczos(t: &[f64], mass: &[f64], k: usize) -> GaussRule {
    let total: f64 = mass.iter().sum();
    let mut basis: Vec<Vec<f64>> = vec![mass.iter().map(|m| (m / total).sqrt()).collect()];
    let mut alpha = Vec::with_capacity(k);
    let mut beta = Vec::with_capacity(k);
    for j in 0..k {
        let v = &basis[j];
        let mut w: Vec<f64> = t.iter().zip(v).map(|(x, v)| x * v).collect();
        alpha.push(dot(&w, v));
        if j + 1 == k {
            break;
        }
        for _ in 0..2 {
            for u in &basis {
                let proj = dot(&w, u);
                w.iter_mut().zip(u).for_each(|(a, b)| *a -= proj * b);
            }
        }
        let norm = dot(&w, &w).sqrt();
        if norm < 1e-14 {
            // the measure has no more points to separate
            break;
        }
        beta.push(norm);
        basis.push(w.into_iter().map(|x| x / norm).collect());
    }
    let m = alpha.len();
    let jacobi = DMatrix::from_fn(m, m, |r, c| {
        if r == c {
            alpha[r]
        } else if r + 1 == c {
            beta[r]
        } else if c + 1 == r {
            beta[c]
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(f64, f64)> = (0..m)
        .map(|i| (eig.eigenvalues[i].clamp(0.0, 1.0), eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    GaussRule { nodes: pairs.iter().map(|p| p.0).collect(), weights: pairs.iter().map(|p| p.1).collect() }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
