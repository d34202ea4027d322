//! Quadrature rules on the reference simplex and the unit interval.
//!
//! Rules are conical products of Gauss-Legendre and Gauss-Jacobi(1,0) rules,
//! so every weight is strictly positive by construction at any supported
//! degree. Nodes and weights come from the Golub-Welsch eigenvalue method.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Highest supported polynomial exactness degree.
pub const MAX_DEGREE: usize = 20;

/// Points and positive weights on a reference element (simplex or segment).
#[derive(Clone, Debug)]
pub struct QuadratureRule {
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    /// Polynomial degree integrated exactly.
    pub degree: usize,
}

/// Rule on the unit reference simplex {x >= 0, y >= 0, x + y <= 1}, exact for
/// all polynomials of total degree <= `degree`. Cached per degree.
pub fn simplex_rule(degree: usize) -> Result<Arc<QuadratureRule>> {
    if degree > MAX_DEGREE {
        return Err(Error::UnsupportedOrder {
            requested: degree,
            supported: format!("0..={MAX_DEGREE}"),
        });
    }
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<QuadratureRule>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().unwrap();
    Ok(guard.entry(degree).or_insert_with(|| Arc::new(build_simplex_rule(degree))).clone())
}

fn build_simplex_rule(degree: usize) -> QuadratureRule {
    let n = degree / 2 + 1;
    let (xu, wu) = gauss_legendre_01(n);
    let (xv, wv) = gauss_jacobi10_01(n);
    let mut points = Vec::with_capacity(n * n);
    let mut weights = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            points.push([xu[j] * (1.0 - xv[i]), xv[i]]);
            weights.push(wu[j] * wv[i]);
        }
    }
    QuadratureRule { points, weights, degree }
}

/// Gauss-Legendre nodes/weights on (0, 1).
pub fn gauss_legendre_01(n: usize) -> (Vec<f64>, Vec<f64>) {
    // beta_k for Legendre on [-1, 1]
    let beta: Vec<f64> =
        (1..n).map(|k| (k * k) as f64 / ((4 * k * k) as f64 - 1.0)).collect();
    let (x, w) = golub_welsch(&vec![0.0; n], &beta, 2.0);
    (x.iter().map(|t| 0.5 * (t + 1.0)).collect(), w.iter().map(|t| 0.5 * t).collect())
}

/// Gauss-Jacobi nodes/weights for the weight (1 - v) on (0, 1), i.e. rules
/// such that sum w_i g(v_i) = int_0^1 (1-v) g(v) dv exactly for polynomials
/// g of degree <= 2n - 1.
fn gauss_jacobi10_01(n: usize) -> (Vec<f64>, Vec<f64>) {
    // recurrence for Jacobi(a=1, b=0) on [-1, 1]
    let mut alpha = vec![0.0; n];
    alpha[0] = -1.0 / 3.0;
    for (k, a) in alpha.iter_mut().enumerate().skip(1) {
        let kk = (2 * k) as f64;
        *a = -1.0 / ((kk + 1.0) * (kk + 3.0));
    }
    let beta: Vec<f64> = (1..n)
        .map(|k| {
            let k = k as f64;
            k * (k + 1.0) / ((2.0 * k + 1.0) * (2.0 * k + 1.0))
        })
        .collect();
    let (x, w) = golub_welsch(&alpha, &beta, 2.0);
    (x.iter().map(|t| 0.5 * (t + 1.0)).collect(), w.iter().map(|t| 0.25 * t).collect())
}

/// Nodes and weights from the symmetric tridiagonal Jacobi matrix.
fn golub_welsch(alpha: &[f64], beta: &[f64], mu0: f64) -> (Vec<f64>, Vec<f64>) {
    let n = alpha.len();
    let mut j = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        j[(i, i)] = alpha[i];
        if i + 1 < n {
            let b = beta[i].sqrt();
            j[(i, i + 1)] = b;
            j[(i + 1, i)] = b;
        }
    }
    let eig = j.symmetric_eigen();
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| (eig.eigenvalues[i], mu0 * eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    (pairs.iter().map(|p| p.0).collect(), pairs.iter().map(|p| p.1).collect())
}

/// Exact integral of x^a y^b over the unit reference simplex.
pub fn monomial_integral_simplex(a: usize, b: usize) -> f64 {
    // a! b! / (a + b + 2)!
    let mut val = 1.0;
    for k in 1..=(a + b + 2) {
        val /= k as f64;
        if k <= a {
            val *= k as f64;
        }
        if k <= b {
            val *= k as f64;
        }
    }
    val
}
