//! Three-node Gauss-Legendre quadrature.
//!
//! Every time integral in the estimators (dual-norm residual integrals, the
//! L2(0,T;V) error norm, error-bound right-hand sides) uses this one rule,
//! mapped affinely to each step interval.

use crate::error::Result;

/// The 3-node Gauss-Legendre rule on [-1, 1]: nodes {-sqrt(3/5), 0, +sqrt(3/5)},
/// weights {5/9, 8/9, 5/9}. Exact for polynomials of degree <= 5.
pub struct Quadrature3;

impl Quadrature3 {
    /// Reference nodes on [-1, 1].
    pub const NODES: [f64; 3] = [-0.774_596_669_241_483_4, 0.0, 0.774_596_669_241_483_4];
    /// Reference weights.
    pub const WEIGHTS: [f64; 3] = [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0];

    /// The rule's nodes mapped to [a, b].
    pub fn nodes_on(a: f64, b: f64) -> [f64; 3] {
        let mid = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        [
            mid + half * Self::NODES[0],
            mid + half * Self::NODES[1],
            mid + half * Self::NODES[2],
        ]
    }

    /// Approximates the integral of `f` over [a, b].
    pub fn integrate<F: FnMut(f64) -> f64>(a: f64, b: f64, mut f: F) -> f64 {
        let half = 0.5 * (b - a);
        let nodes = Self::nodes_on(a, b);
        let mut sum = 0.0;
        for (x, w) in nodes.iter().zip(Self::WEIGHTS.iter()) {
            sum += w * f(*x);
        }
        half * sum
    }

    /// Like [`integrate`](Self::integrate), for integrands that can fail
    /// (estimator integrands contain operator solves).
    pub fn try_integrate<F: FnMut(f64) -> Result<f64>>(a: f64, b: f64, mut f: F) -> Result<f64> {
        let half = 0.5 * (b - a);
        let nodes = Self::nodes_on(a, b);
        let mut sum = 0.0;
        for (x, w) in nodes.iter().zip(Self::WEIGHTS.iter()) {
            sum += w * f(*x)?;
        }
        Ok(half * sum)
    }
}
