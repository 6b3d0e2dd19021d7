//! Gauss quadrature for the sphere-coordinate marginal and the chi radial law.
//!
//! The marginal law of one coordinate of a uniform point on the (d-1)-sphere
//! has density proportional to `(1-t^2)^{(d-3)/2}` on [-1, 1]; the chi_d law
//! has density proportional to `r^{d-1} e^{-r^2/2}` on [0, inf). Both rules
//! are built by the Golub-Welsch construction: nodes are eigenvalues of the
//! Jacobi matrix of the orthonormal polynomial family, and the weight at a
//! node x is the Christoffel function `1 / sum_k q_k(x)^2`, which avoids
//! computing eigenvectors.

use crate::{Result, SimlabError};

/// Nodes and weights of a Gauss rule for a probability measure; weights sum
/// to one.
#[derive(Debug, Clone)]
pub struct Quadrature {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Quadrature {
    /// Integrate a function against the measure.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Default node count for basis diagnostics: exactness margin for products
/// of basis polynomials up to degree lmax.
pub fn default_npoints(lmax: usize) -> usize {
    (2 * lmax + 8).max(64)
}

/// Eigenvalues of a symmetric tridiagonal matrix by the implicit-shift QL
/// iteration. `diag` has length n, `offdiag` length n-1. Ascending order.
fn tridiagonal_eigenvalues(diag: &[f64], offdiag: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut d = diag.to_vec();
    let mut e = Vec::with_capacity(n);
    e.extend_from_slice(offdiag);
    e.push(0.0);

    for l in 0..n {
        let mut iter = 0;
        loop {
            // Find a small off-diagonal element to split at.
            let mut m = l;
            while m < n - 1 {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            assert!(iter < 64, "tridiagonal QL failed to converge");
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c) = (1.0f64, 1.0f64);
            let mut p = 0.0f64;
            let mut underflow = false;
            for i in (l..m).rev() {
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    // Rotation annihilated early; deflate and retry.
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    d.sort_by(|a, b| a.partial_cmp(b).unwrap());
    d
}

/// Build a Gauss rule from the orthonormal three-term recurrence
/// `x q_k = b_{k+1} q_{k+1} + a_k q_k + b_k q_{k-1}` (probability measure, so
/// `q_0 = 1`): nodes are Jacobi-matrix eigenvalues, weights the Christoffel
/// function.
fn gauss_rule(a: &[f64], b: &[f64]) -> Quadrature {
    let n = a.len();
    let nodes = tridiagonal_eigenvalues(a, b);
    let mut weights = Vec::with_capacity(n);
    for &x in &nodes {
        let mut sum_sq = 1.0; // q_0(x)^2
        let mut prev = 0.0;
        let mut cur = 1.0;
        for k in 0..n - 1 {
            let next = ((x - a[k]) * cur - if k > 0 { b[k - 1] * prev } else { 0.0 }) / b[k];
            prev = cur;
            cur = next;
            sum_sq += cur * cur;
        }
        weights.push(1.0 / sum_sq);
    }
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    Quadrature { nodes, weights }
}

/// Gauss rule for the one-coordinate marginal of the uniform sphere measure
/// in dimension d. Integrates polynomials of degree <= 2 npoints - 1 exactly.
pub fn tau_d1_quadrature(d: usize, npoints: usize) -> Result<Quadrature> {
    if d < 3 {
        return Err(SimlabError::Unsupported(format!("tau_{{d,1}} quadrature requires d >= 3, got {d}")));
    }
    if npoints == 0 {
        return Err(SimlabError::Config("quadrature needs npoints >= 1".into()));
    }
    let a = vec![0.0; npoints];
    let b: Vec<f64> = (1..npoints)
        .map(|m| {
            let m = m as f64;
            let df = d as f64;
            (m * (m + df - 3.0) / ((2.0 * m + df - 4.0) * (2.0 * m + df - 2.0))).sqrt()
        })
        .collect();
    Ok(gauss_rule(&a, &b))
}

/// Gauss rule for the chi_d radial law, via the Laguerre rule for
/// `Gamma(d/2)` under `r = sqrt(2u)`.
///
/// Even powers of r are polynomials in the Laguerre variable and integrate
/// exactly; generic smooth integrands converge spectrally. At very small d
/// the substitution leaves a mild algebraic endpoint effect (relative error
/// around 1e-5 at d = 3); exact moments should come from
/// [`crate::basis::chi_moment`] instead.
pub fn chi_quadrature(d: usize, npoints: usize) -> Result<Quadrature> {
    if d == 0 || npoints == 0 {
        return Err(SimlabError::Config("chi quadrature needs d >= 1 and npoints >= 1".into()));
    }
    let alpha = d as f64 / 2.0 - 1.0;
    let a: Vec<f64> = (0..npoints).map(|n| 2.0 * n as f64 + alpha + 1.0).collect();
    let b: Vec<f64> = (1..npoints).map(|m| (m as f64 * (m as f64 + alpha)).sqrt()).collect();
    let gamma_rule = gauss_rule(&a, &b);
    let nodes = gamma_rule.nodes.iter().map(|&u| (2.0 * u).sqrt()).collect();
    Ok(Quadrature { nodes, weights: gamma_rule.weights })
}
