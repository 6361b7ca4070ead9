//! The entire functions phi_k and their operator actions.
//!
//! phi_0(z) = e^z and phi_{k+1}(z) = (phi_k(z) - phi_k(0))/z with
//! phi_k(0) = 1/k!. The method and every estimator consume actions
//! w = phi_k(-tau A) v, evaluated here by one of three paths:
//! an analytic eigen-decomposition (spectral), a numeric symmetric
//! eigen-decomposition of the materialized operator (dense), or a
//! Lanczos projection (krylov).

use std::fmt;
use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::operators::{EigenSystem, SpdOperator};

/// Below this |z| the Taylor series replaces the closed form; the recurrence
/// loses roughly |log10(z)| digits per level to cancellation there.
const SERIES_SWITCH: f64 = 1e-2;
const SERIES_TERMS: usize = 20;

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

/// phi_k(z) for scalar z.
///
/// For |z| < 1e-2 the truncated Taylor series sum_j z^j/(j+k)! is used
/// (20 terms, far below double round-off); otherwise the closed forms
/// e^z and expm1(z)/z, with the upward recurrence seeded from the expm1
/// form for k >= 2 (seeding from e^z loses two extra digits to the
/// cancellation in (e^z - 1)/z just outside the series window).
pub fn phi_scalar(k: usize, z: f64) -> f64 {
    if z.abs() < SERIES_SWITCH {
        let mut term = 1.0 / factorial(k);
        let mut sum = term;
        for j in 1..SERIES_TERMS {
            term *= z / (j + k) as f64;
            sum += term;
        }
        return sum;
    }
    match k {
        0 => z.exp(),
        _ => {
            let mut p = z.exp_m1() / z;
            for j in 2..=k {
                p = (p - 1.0 / factorial(j - 1)) / z;
            }
            p
        }
    }
}

/// How phi_k(-tau A) v is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhiMethod {
    /// Analytic eigenpairs supplied by the operator.
    Spectral,
    /// Numeric symmetric eigen-decomposition of the materialized matrix.
    Dense,
    /// Lanczos projection with full reorthogonalization.
    Krylov,
}

impl fmt::Display for PhiMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PhiMethod::Spectral => write!(f, "spectral"),
            PhiMethod::Dense => write!(f, "dense"),
            PhiMethod::Krylov => write!(f, "krylov"),
        }
    }
}

impl std::str::FromStr for PhiMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spectral" => Ok(PhiMethod::Spectral),
            "dense" => Ok(PhiMethod::Dense),
            "krylov" => Ok(PhiMethod::Krylov),
            other => Err(Error::InvalidConfig(format!(
                "unknown phi method '{other}' (expected spectral, dense or krylov)"
            ))),
        }
    }
}

/// Evaluator of w = phi_k(-tau A) v and w = e^{-tau A} v for one operator.
///
/// Immutable after construction; actions are pure, so one evaluator can be
/// shared across a whole run and its estimator passes.
pub struct PhiEvaluator {
    op: Arc<dyn SpdOperator>,
    method: PhiMethod,
    krylov_max_dim: usize,
    krylov_tol: f64,
    dense_eigen: OnceLock<EigenSystem>,
}

impl PhiEvaluator {
    pub const DEFAULT_KRYLOV_DIM: usize = 30;
    pub const DEFAULT_KRYLOV_TOL: f64 = 1e-12;

    pub fn new(op: Arc<dyn SpdOperator>, method: PhiMethod) -> Self {
        Self {
            op,
            method,
            krylov_max_dim: Self::DEFAULT_KRYLOV_DIM,
            krylov_tol: Self::DEFAULT_KRYLOV_TOL,
            dense_eigen: OnceLock::new(),
        }
    }

    /// Spectral when the operator carries analytic eigenpairs, Krylov otherwise.
    pub fn for_operator(op: Arc<dyn SpdOperator>) -> Self {
        let method = if op.eigensystem().is_some() {
            PhiMethod::Spectral
        } else {
            PhiMethod::Krylov
        };
        Self::new(op, method)
    }

    pub fn with_krylov(mut self, max_dim: usize, tol: f64) -> Self {
        self.krylov_max_dim = max_dim.max(1);
        self.krylov_tol = tol;
        self
    }

    pub fn operator(&self) -> &Arc<dyn SpdOperator> {
        &self.op
    }

    pub fn method(&self) -> PhiMethod {
        self.method
    }

    /// w = phi_k(-tau A) v.
    pub fn phi_action(&self, k: usize, tau: f64, v: &DVector<f64>) -> Result<DVector<f64>> {
        if v.len() != self.op.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.op.dim(),
                got: v.len(),
            });
        }
        if !(tau > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "phi_action needs tau > 0, got {tau}"
            )));
        }
        match self.method {
            PhiMethod::Spectral => {
                let eigen = self.op.eigensystem().ok_or_else(|| {
                    Error::InvalidConfig(
                        "spectral phi evaluation needs an operator with analytic eigenpairs"
                            .into(),
                    )
                })?;
                Ok(apply_in_basis(eigen, k, tau, v, true))
            }
            PhiMethod::Dense => {
                let eigen = self.dense_eigen.get_or_init(|| {
                    let se = nalgebra::SymmetricEigen::new(self.op.materialize());
                    EigenSystem {
                        eigenvalues: se.eigenvalues,
                        basis: se.eigenvectors,
                    }
                });
                Ok(apply_in_basis(eigen, k, tau, v, false))
            }
            PhiMethod::Krylov => {
                if k > 1 {
                    return Err(Error::InvalidConfig(format!(
                        "the Krylov path evaluates phi_0 and phi_1 only, got k={k}"
                    )));
                }
                self.krylov_action(k, tau, v)
            }
        }
    }

    /// w = e^{-tau A} v.
    pub fn exp_action(&self, tau: f64, v: &DVector<f64>) -> Result<DVector<f64>> {
        self.phi_action(0, tau, v)
    }

    /// Lanczos with full reorthogonalization; w = |v| V_m phi_k(-tau H_m) e_1,
    /// stopped when the generalized residual h_{m+1,m} |y_m| drops below the
    /// configured tolerance (relative to |v|).
    fn krylov_action(&self, k: usize, tau: f64, v: &DVector<f64>) -> Result<DVector<f64>> {
        let beta0 = v.norm();
        if beta0 == 0.0 {
            return Ok(DVector::zeros(v.len()));
        }
        let mut basis: Vec<DVector<f64>> = vec![v / beta0];
        let mut alphas: Vec<f64> = Vec::new();
        let mut betas: Vec<f64> = Vec::new();

        for m in 1..=self.krylov_max_dim {
            let mut w = self.op.apply(&basis[m - 1]);
            if m > 1 {
                w.axpy(-betas[m - 2], &basis[m - 2], 1.0);
            }
            let alpha = basis[m - 1].dot(&w);
            w.axpy(-alpha, &basis[m - 1], 1.0);
            // full reorthogonalization: cheap at these dimensions and makes
            // the iteration deterministic and accurate
            for u in &basis {
                let c = u.dot(&w);
                w.axpy(-c, u, 1.0);
            }
            alphas.push(alpha);
            let beta = w.norm();

            let y = phi_of_tridiag(k, tau, &alphas, &betas);
            let residual = beta * y[m - 1].abs();
            let hscale = alphas
                .iter()
                .chain(betas.iter())
                .fold(1.0_f64, |acc, &x| acc.max(x.abs()));
            if residual <= self.krylov_tol || beta <= 1e-14 * hscale {
                // breakdown means the Krylov space is invariant: exact result
                let mut out = DVector::zeros(v.len());
                for (j, u) in basis.iter().enumerate() {
                    out.axpy(beta0 * y[j], u, 1.0);
                }
                return Ok(out);
            }
            if m == self.krylov_max_dim {
                return Err(Error::KrylovNoConvergence {
                    max_dim: self.krylov_max_dim,
                    residual,
                });
            }
            betas.push(beta);
            basis.push(w / beta);
        }
        unreachable!("loop always returns at m == krylov_max_dim");
    }
}

/// w = Q (phi_k(-tau lambda) .* (Q^T v)) in the given orthogonal basis.
/// With `check_bounded`, asserts 0 < phi_1(-tau lambda) <= 1 elementwise,
/// the bound that holds on any SPD spectrum.
fn apply_in_basis(
    eigen: &EigenSystem,
    k: usize,
    tau: f64,
    v: &DVector<f64>,
    check_bounded: bool,
) -> DVector<f64> {
    let mut coeffs = eigen.basis.tr_mul(v);
    for (i, c) in coeffs.iter_mut().enumerate() {
        let p = phi_scalar(k, -tau * eigen.eigenvalues[i]);
        if check_bounded && k == 1 {
            assert!(
                p > 0.0 && p <= 1.0,
                "phi_1(-tau lambda) = {p} escapes (0, 1] at lambda = {}",
                eigen.eigenvalues[i]
            );
        }
        *c *= p;
    }
    &eigen.basis * coeffs
}

/// y = phi_k(-tau H) e_1 for the symmetric tridiagonal H given by its
/// diagonal and off-diagonal, via a small dense eigen-decomposition.
fn phi_of_tridiag(k: usize, tau: f64, diag: &[f64], off: &[f64]) -> DVector<f64> {
    let m = diag.len();
    let mut h = DMatrix::zeros(m, m);
    for i in 0..m {
        h[(i, i)] = diag[i];
        if i + 1 < m {
            h[(i, i + 1)] = off[i];
            h[(i + 1, i)] = off[i];
        }
    }
    let se = nalgebra::SymmetricEigen::new(h);
    // V (phi(-tau Lambda) .* V^T e_1); V^T e_1 is the first row of V
    let mut coeffs = DVector::zeros(m);
    for i in 0..m {
        coeffs[i] = phi_scalar(k, -tau * se.eigenvalues[i]) * se.eigenvectors[(0, i)];
    }
    &se.eigenvectors * coeffs
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{norm_h, DiagonalOperator, DirichletLaplacian1D};

    fn wiggle(dim: usize, seed: u64) -> DVector<f64> {
        let mut state = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(1);
        DVector::from_fn(dim, |_, _| {
            state = state
                .wrapping_mul(6_364_136_223_846_793_005)
                .wrapping_add(1_442_695_040_888_963_407);
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        })
    }

    #[test]
    fn phi_scalar_reference_values() {
        assert!((phi_scalar(1, 0.0) - 1.0).abs() < 1e-15);
        assert!((phi_scalar(2, 0.0) - 0.5).abs() < 1e-15);
        assert!((phi_scalar(0, 0.0) - 1.0).abs() < 1e-15);
        let want = 1.0 - (-1.0_f64).exp();
        assert!((phi_scalar(1, -1.0) - want).abs() < 1e-15);
        assert!((phi_scalar(0, 2.5) - 2.5_f64.exp()).abs() < 1e-12);
        assert!((phi_scalar(3, 0.0) - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn phi_scalar_recurrence() {
        let zs = [
            -30.0, -3.0, -0.5, -0.011, -1e-3, 1e-3, 0.011, 0.5, 3.0, 30.0,
        ];
        for &z in &zs {
            for k in 0..=4usize {
                let lhs = phi_scalar(k + 1, z);
                let rhs = (phi_scalar(k, z) - 1.0 / factorial(k)) / z;
                assert!(
                    (lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0),
                    "k={k} z={z}: {lhs} vs {rhs}"
                );
            }
        }
    }

    #[test]
    fn phi_scalar_series_matches_closed_form_at_switch() {
        // just inside / outside the series window, phi_1 from both branches
        for &z in &[-9.9e-3, 9.9e-3] {
            let series = phi_scalar(1, z);
            let closed = z.exp_m1() / z;
            assert!((series - closed).abs() < 1e-14);
        }
    }

    #[test]
    fn phi_one_bounded_on_negative_axis() {
        for &tau in &[1e-8, 1e-3, 0.1, 1.0, 50.0] {
            for &lam in &[1e-6, 1.0, 1e3, 1e7] {
                let p = phi_scalar(1, -tau * lam);
                assert!(p > 0.0 && p <= 1.0, "tau={tau} lam={lam} p={p}");
            }
        }
    }

    #[test]
    fn spectral_action_matches_eigenvector_oracle() {
        let op = Arc::new(DirichletLaplacian1D::unit(20).unwrap());
        let phi = PhiEvaluator::new(op.clone(), PhiMethod::Spectral);
        let eig = op.eigensystem().unwrap();
        for j in [0, 5, 18] {
            let q = DVector::from(eig.basis.column(j));
            let lam = eig.eigenvalues[j];
            for k in 0..=3usize {
                let got = phi.phi_action(k, 0.02, &q).unwrap();
                let want = phi_scalar(k, -0.02 * lam) * &q;
                assert!((&got - &want).norm() < 1e-12, "j={j} k={k}");
            }
        }
    }

    #[test]
    fn exp_equals_phi_zero_and_identity_with_phi_one() {
        let op = Arc::new(DirichletLaplacian1D::unit(30).unwrap());
        let phi = PhiEvaluator::new(op.clone(), PhiMethod::Spectral);
        let v = wiggle(op.dim(), 9);
        for &tau in &[1e-6, 1e-3, 0.05, 0.7] {
            let e = phi.exp_action(tau, &v).unwrap();
            let p0 = phi.phi_action(0, tau, &v).unwrap();
            assert_eq!((&e - &p0).norm(), 0.0);
            // e^{-tau A} v = v - tau phi_1(-tau A) A v
            let rhs = &v - tau * phi.phi_action(1, tau, &op.apply(&v)).unwrap();
            assert!(
                (&e - &rhs).norm() <= 1e-10 * e.norm().max(1.0),
                "tau={tau}"
            );
        }
    }

    #[test]
    fn methods_agree() {
        let op = Arc::new(DirichletLaplacian1D::unit(40).unwrap());
        let spectral = PhiEvaluator::new(op.clone(), PhiMethod::Spectral);
        let dense = PhiEvaluator::new(op.clone(), PhiMethod::Dense);
        let krylov = PhiEvaluator::new(op.clone(), PhiMethod::Krylov).with_krylov(40, 1e-13);
        let dx = op.mesh_weight();
        let v = wiggle(op.dim(), 77);
        // tau small enough that the 30-odd Krylov vectors resolve the decay
        for &tau in &[1e-5, 1e-4, 1e-3] {
            for k in 0..=1usize {
                let a = spectral.phi_action(k, tau, &v).unwrap();
                let b = dense.phi_action(k, tau, &v).unwrap();
                let c = krylov.phi_action(k, tau, &v).unwrap();
                let scale = norm_h(&a, dx);
                assert!(norm_h(&(&a - &b), dx) <= 1e-8 * scale, "dense k={k} tau={tau}");
                assert!(norm_h(&(&a - &c), dx) <= 1e-8 * scale, "krylov k={k} tau={tau}");
            }
        }
        // dense path also covers k >= 2
        let a = spectral.phi_action(2, 1e-3, &v).unwrap();
        let b = dense.phi_action(2, 1e-3, &v).unwrap();
        assert!(norm_h(&(&a - &b), dx) <= 1e-8 * norm_h(&a, dx));
    }

    #[test]
    fn krylov_exact_at_breakdown() {
        // scalar operator: breakdown after one vector, result is exact
        let op = Arc::new(DiagonalOperator::scalar(3.0).unwrap());
        let phi = PhiEvaluator::new(op, PhiMethod::Krylov);
        let v = DVector::from_element(1, 2.0);
        let got = phi.phi_action(1, 0.5, &v).unwrap();
        assert!((got[0] - 2.0 * phi_scalar(1, -1.5)).abs() < 1e-14);
    }

    #[test]
    fn krylov_rejects_higher_phi() {
        let op = Arc::new(DirichletLaplacian1D::unit(10).unwrap());
        let phi = PhiEvaluator::new(op.clone(), PhiMethod::Krylov);
        let v = wiggle(op.dim(), 1);
        assert!(matches!(
            phi.phi_action(2, 0.1, &v),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn krylov_reports_nonconvergence() {
        // stiff tau with a tiny subspace cannot meet the tolerance
        let op = Arc::new(DirichletLaplacian1D::unit(100).unwrap());
        let phi = PhiEvaluator::new(op.clone(), PhiMethod::Krylov).with_krylov(5, 1e-12);
        let v = wiggle(op.dim(), 12);
        match phi.phi_action(1, 0.1, &v) {
            Err(Error::KrylovNoConvergence { max_dim, residual }) => {
                assert_eq!(max_dim, 5);
                assert!(residual > 1e-12);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn zero_vector_maps_to_zero() {
        let op = Arc::new(DirichletLaplacian1D::unit(10).unwrap());
        for method in [PhiMethod::Spectral, PhiMethod::Dense, PhiMethod::Krylov] {
            let phi = PhiEvaluator::new(op.clone(), method);
            let z = DVector::zeros(op.dim());
            let w = phi.phi_action(1, 0.3, &z).unwrap();
            assert_eq!(w.norm(), 0.0, "{method}");
        }
    }

    #[test]
    fn small_tau_limit() {
        let op = Arc::new(DirichletLaplacian1D::unit(50).unwrap());
        let phi = PhiEvaluator::new(op.clone(), PhiMethod::Spectral);
        let v = wiggle(op.dim(), 31);
        let tau = 1e-6;
        let w = phi.phi_action(1, tau, &v).unwrap();
        let dx = op.mesh_weight();
        // phi_1(-tau A) v = v - (tau/2) A v + O(tau^2)
        assert!(norm_h(&(&w - &v), dx) <= tau * norm_h(&op.apply(&v), dx));
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let op = Arc::new(DirichletLaplacian1D::unit(10).unwrap());
        let phi = PhiEvaluator::new(op, PhiMethod::Spectral);
        let v = DVector::zeros(4);
        assert!(matches!(
            phi.phi_action(1, 0.1, &v),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn tau_must_be_positive() {
        let op = Arc::new(DirichletLaplacian1D::unit(10).unwrap());
        let phi = PhiEvaluator::new(op.clone(), PhiMethod::Spectral);
        let v = wiggle(op.dim(), 2);
        assert!(phi.phi_action(1, 0.0, &v).is_err());
        assert!(phi.phi_action(1, -1.0, &v).is_err());
    }
}
