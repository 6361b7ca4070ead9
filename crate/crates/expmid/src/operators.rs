//! SPD operator contract, the 1D Dirichlet Laplacian, and the discrete norms.
//!
//! All norms carry the mesh weight dx: (u,v)_h = dx * sum_i u_i v_i. The energy
//! norm is ||v|| = (Av,v)_h^{1/2} and the dual norm ||v||_* = (v,A^{-1}v)_h^{1/2},
//! so that ||A v||_* = ||v|| for every v.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Spectral decomposition A = Q diag(lambda) Q^T with Q orthogonal
/// (plain Euclidean orthogonality; the scalar mesh weight cancels).
pub struct EigenSystem {
    pub eigenvalues: DVector<f64>,
    pub basis: DMatrix<f64>,
}

/// A symmetric positive-definite linear operator together with the mesh weight
/// of the discrete inner product it is symmetric in.
pub trait SpdOperator: Send + Sync {
    fn dim(&self) -> usize;

    /// v -> Av
    fn apply(&self, v: &DVector<f64>) -> DVector<f64>;

    /// v -> A^{-1} v
    fn solve(&self, v: &DVector<f64>) -> Result<DVector<f64>>;

    /// Smallest eigenvalue of A (the discrete Poincare constant).
    fn lambda1(&self) -> f64;

    /// dx weight of the discrete inner product.
    fn mesh_weight(&self) -> f64;

    /// Analytic eigen-decomposition, when one is known.
    fn eigensystem(&self) -> Option<&EigenSystem> {
        None
    }

    /// Dense matrix of the operator, assembled column by column by default.
    fn materialize(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut a = DMatrix::zeros(n, n);
        let mut e = DVector::zeros(n);
        for j in 0..n {
            e[j] = 1.0;
            a.set_column(j, &self.apply(&e));
            e[j] = 0.0;
        }
        a
    }
}

/// Discrete inner product (v,w)_h = dx * sum_i v_i w_i.
///
/// Panics on length mismatch; mixing vectors from different meshes is a
/// programming error, not a recoverable condition.
pub fn inner_h(v: &DVector<f64>, w: &DVector<f64>, dx: f64) -> f64 {
    assert_eq!(v.len(), w.len(), "inner_h: length mismatch");
    dx * v.dot(w)
}

/// |v| = (v,v)_h^{1/2}
pub fn norm_h(v: &DVector<f64>, dx: f64) -> f64 {
    inner_h(v, v, dx).max(0.0).sqrt()
}

/// ||v|| = (Av,v)_h^{1/2}
pub fn norm_v(a: &dyn SpdOperator, v: &DVector<f64>) -> f64 {
    inner_h(&a.apply(v), v, a.mesh_weight()).max(0.0).sqrt()
}

/// ||v||_* = (v,A^{-1}v)_h^{1/2}
pub fn norm_vstar(a: &dyn SpdOperator, v: &DVector<f64>) -> Result<f64> {
    Ok(inner_h(v, &a.solve(v)?, a.mesh_weight()).max(0.0).sqrt())
}

/// Standard second-order finite-difference Laplacian on (0, length) with
/// homogeneous Dirichlet boundary conditions, scaled by a diffusion
/// coefficient. M mesh intervals, dim = M - 1 interior points.
///
/// apply(v)_i = diffusion/dx^2 * (-v_{i-1} + 2 v_i - v_{i+1}), v_0 = v_M = 0.
/// Eigenpairs are analytic: lambda_j = diffusion * (4/dx^2) sin^2(j pi / 2M)
/// with orthonormal eigenvectors q_j(i) = sqrt(2/M) sin(i j pi / M).
pub struct DirichletLaplacian1D {
    m: usize,
    dx: f64,
    diffusion: f64,
    eigen: EigenSystem,
}

impl DirichletLaplacian1D {
    pub fn new(m: usize, length: f64, diffusion: f64) -> Result<Self> {
        if m < 4 {
            return Err(Error::InvalidConfig(format!(
                "mesh needs at least 4 intervals, got {m}"
            )));
        }
        if !(length > 0.0) || !(diffusion > 0.0) {
            return Err(Error::InvalidConfig(
                "length and diffusion must be positive".into(),
            ));
        }
        let dx = length / m as f64;
        let dim = m - 1;
        let mf = m as f64;
        let scale = (2.0 / mf).sqrt();
        let mut eigenvalues = DVector::zeros(dim);
        let mut basis = DMatrix::zeros(dim, dim);
        for j in 1..=dim {
            let s = (j as f64 * std::f64::consts::PI / (2.0 * mf)).sin();
            eigenvalues[j - 1] = diffusion * 4.0 / (dx * dx) * s * s;
            for i in 1..=dim {
                basis[(i - 1, j - 1)] = scale * ((i * j) as f64 * std::f64::consts::PI / mf).sin();
            }
        }
        Ok(Self {
            m,
            dx,
            diffusion,
            eigen: EigenSystem { eigenvalues, basis },
        })
    }

    /// Unit-coefficient Laplacian on (0, 1).
    pub fn unit(m: usize) -> Result<Self> {
        Self::new(m, 1.0, 1.0)
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn intervals(&self) -> usize {
        self.m
    }

    pub fn diffusion(&self) -> f64 {
        self.diffusion
    }
}

impl SpdOperator for DirichletLaplacian1D {
    fn dim(&self) -> usize {
        self.m - 1
    }

    fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        assert_eq!(v.len(), self.dim(), "apply: dimension mismatch");
        let c = self.diffusion / (self.dx * self.dx);
        let n = v.len();
        let mut out = DVector::zeros(n);
        for i in 0..n {
            let left = if i > 0 { v[i - 1] } else { 0.0 };
            let right = if i + 1 < n { v[i + 1] } else { 0.0 };
            out[i] = c * (2.0 * v[i] - left - right);
        }
        out
    }

    fn solve(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        if v.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: v.len(),
            });
        }
        // Thomas algorithm on c * tridiag(-1, 2, -1); the matrix is irreducibly
        // diagonally dominant, so no pivoting is needed.
        let c = self.diffusion / (self.dx * self.dx);
        let n = v.len();
        let mut diag = vec![2.0 * c; n];
        let mut rhs: Vec<f64> = v.iter().copied().collect();
        for i in 1..n {
            let w = -c / diag[i - 1];
            diag[i] += w * c; // diag - off^2/diag_prev with off = -c
            rhs[i] -= w * rhs[i - 1];
        }
        let mut out = DVector::zeros(n);
        out[n - 1] = rhs[n - 1] / diag[n - 1];
        for i in (0..n - 1).rev() {
            out[i] = (rhs[i] + c * out[i + 1]) / diag[i];
        }
        Ok(out)
    }

    fn lambda1(&self) -> f64 {
        self.eigen.eigenvalues[0]
    }

    fn mesh_weight(&self) -> f64 {
        self.dx
    }

    fn eigensystem(&self) -> Option<&EigenSystem> {
        Some(&self.eigen)
    }

    fn materialize(&self) -> DMatrix<f64> {
        let n = self.dim();
        let c = self.diffusion / (self.dx * self.dx);
        let mut a = DMatrix::zeros(n, n);
        for i in 0..n {
            a[(i, i)] = 2.0 * c;
            if i + 1 < n {
                a[(i, i + 1)] = -c;
                a[(i + 1, i)] = -c;
            }
        }
        a
    }
}

/// Diagonal SPD operator. Used for scalar model problems and property tests;
/// a 1x1 instance is the scalar equation u' + a u = f.
pub struct DiagonalOperator {
    eigen: EigenSystem,
    mesh_weight: f64,
}

impl DiagonalOperator {
    pub fn new(entries: DVector<f64>, mesh_weight: f64) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidConfig("empty diagonal".into()));
        }
        if entries.iter().any(|&a| !(a > 0.0)) {
            return Err(Error::InvalidConfig(
                "diagonal entries must be positive".into(),
            ));
        }
        if !(mesh_weight > 0.0) {
            return Err(Error::InvalidConfig("mesh weight must be positive".into()));
        }
        let dim = entries.len();
        Ok(Self {
            eigen: EigenSystem {
                eigenvalues: entries,
                basis: DMatrix::identity(dim, dim),
            },
            mesh_weight,
        })
    }

    /// The scalar problem u' + a u = f as a 1x1 system with unit weight.
    pub fn scalar(a: f64) -> Result<Self> {
        Self::new(DVector::from_element(1, a), 1.0)
    }

    fn entries(&self) -> &DVector<f64> {
        &self.eigen.eigenvalues
    }
}

impl SpdOperator for DiagonalOperator {
    fn dim(&self) -> usize {
        self.entries().len()
    }

    fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        assert_eq!(v.len(), self.dim(), "apply: dimension mismatch");
        v.component_mul(self.entries())
    }

    fn solve(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        if v.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: v.len(),
            });
        }
        Ok(v.component_div(self.entries()))
    }

    fn lambda1(&self) -> f64 {
        self.entries().min()
    }

    fn mesh_weight(&self) -> f64 {
        self.mesh_weight
    }

    fn eigensystem(&self) -> Option<&EigenSystem> {
        Some(&self.eigen)
    }
}
