//! Gauss-Hermite rules for expectations over a standard normal variable.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Nodes and weights for the weight function `exp(-x^2)` on the real line.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussHermite {
    /// Golub-Welsch eigenvalues of the Jacobi matrix as starting points,
    /// polished by Newton steps on the orthonormal Hermite recurrence, which
    /// also yields accurate weights in the far tails.
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("Gauss-Hermite needs n >= 1".into()));
        }
        let jacobi = DMatrix::<f64>::from_fn(n, n, |i, j| {
            if i + 1 == j || j + 1 == i {
                (i.max(j) as f64 / 2.0).sqrt()
            } else {
                0.0
            }
        });
        let mut nodes: Vec<f64> = SymmetricEigen::new(jacobi).eigenvalues.iter().copied().collect();
        nodes.sort_by(|a, b| b.total_cmp(a));
        let weights = nodes
            .iter_mut()
            .map(|z| {
                let mut pp = 0.0;
                for _ in 0..8 {
                    let (p1, d) = orthonormal_hermite(n, *z);
                    pp = d;
                    let step = p1 / d;
                    *z -= step;
                    if step.abs() <= 1e-15 * z.abs().max(1.0) {
                        break;
                    }
                }
                2.0 / (pp * pp)
            })
            .collect();
        Ok(Self { nodes, weights })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `int exp(-x^2) f(x) dx`.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }

    /// `E[f(Z)]` for `Z ~ N(0, 1)`.
    pub fn expect_normal<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        let s = std::f64::consts::SQRT_2;
        self.integrate(|x| f(s * x)) / std::f64::consts::PI.sqrt()
    }
}

/// Value of the degree-`n` orthonormal Hermite function at `z` and the
/// derivative factor used by Newton's method.
fn orthonormal_hermite(n: usize, z: f64) -> (f64, f64) {
    const PIM4: f64 = 0.751_125_544_464_942_5; // pi^{-1/4}
    let mut p1 = PIM4;
    let mut p2 = 0.0;
    for j in 1..=n {
        let p3 = p2;
        p2 = p1;
        let jf = j as f64;
        p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
    }
    (p1, (2.0 * n as f64).sqrt() * p2)
}
