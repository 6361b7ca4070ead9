//! The four benchmark problems: three manufactured-solution heat equations
//! (two linear, one semilinear) on (0,1) and an Allen-Cahn equation on (-1,1)
//! with the inhomogeneous boundary folded into the nonlinearity.

use std::sync::Arc;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::integrators::{SemilinearConfig, Trajectory};
use crate::operators::{DirichletLaplacian1D, SpdOperator};

/// Right hand side of u' + Au = ...: either a forcing f(t) or a nonlinearity
/// B(t, u), both sampled at the interior grid points.
pub enum ProblemKind {
    Linear {
        forcing: Box<dyn Fn(f64) -> DVector<f64> + Send + Sync>,
    },
    Semilinear {
        nonlinearity: Box<dyn Fn(f64, &DVector<f64>) -> DVector<f64> + Send + Sync>,
    },
}

/// A fully specified initial value problem, optionally with its exact
/// solution (used for error metrics and effectivity indices).
pub struct ProblemSpec {
    pub label: String,
    pub kind: ProblemKind,
    pub operator: Arc<dyn SpdOperator>,
    pub u0: DVector<f64>,
    pub exact: Option<Box<dyn Fn(f64) -> DVector<f64> + Send + Sync>>,
    pub semilinear: SemilinearConfig,
    pub t_end: f64,
}

impl ProblemSpec {
    pub fn is_semilinear(&self) -> bool {
        matches!(self.kind, ProblemKind::Semilinear { .. })
    }

    pub fn has_exact(&self) -> bool {
        self.exact.is_some()
    }

    /// f(t) on linear problems, B(t, u) on semilinear ones.
    pub fn value_at(&self, t: f64, u: &DVector<f64>) -> DVector<f64> {
        match &self.kind {
            ProblemKind::Linear { forcing } => forcing(t),
            ProblemKind::Semilinear { nonlinearity } => nonlinearity(t, u),
        }
    }

    pub fn exact_at(&self, t: f64) -> Result<DVector<f64>> {
        match &self.exact {
            Some(u) => Ok(u(t)),
            None => Err(Error::MissingExact),
        }
    }

    /// Install a fine reference trajectory as the stand-in exact solution
    /// (piecewise linear in time between the reference nodes, so coarse node
    /// times that coincide with reference nodes are matched exactly).
    pub fn set_reference(&mut self, reference: &Trajectory) {
        let nodes: Vec<f64> = reference.grid.nodes().to_vec();
        let values: Vec<DVector<f64>> = reference.values.clone();
        self.exact = Some(Box::new(move |t| {
            let last = nodes.len() - 1;
            let t = t.clamp(nodes[0], nodes[last]);
            let i = nodes.partition_point(|&x| x <= t).clamp(1, last);
            let w = (t - nodes[i - 1]) / (nodes[i] - nodes[i - 1]);
            &values[i - 1] + w * (&values[i] - &values[i - 1])
        }));
    }
}

fn interior_points(op: &DirichletLaplacian1D, left: f64) -> DVector<f64> {
    let dx = op.dx();
    DVector::from_fn(op.dim(), |i, _| left + dx * (i + 1) as f64)
}

/// Heat equation u_t = u_xx + f on (0,1) with exact solution
/// u = x(1-x)e^t, so f = x(1-x)e^t + 2e^t.
pub fn example1(m: usize) -> Result<ProblemSpec> {
    let op = DirichletLaplacian1D::new(m, 1.0, 1.0)?;
    let x = interior_points(&op, 0.0);
    let xf = x.clone();
    let xe = x.clone();
    Ok(ProblemSpec {
        label: "example1".into(),
        kind: ProblemKind::Linear {
            forcing: Box::new(move |t| {
                let et = t.exp();
                xf.map(|xi| xi * (1.0 - xi) * et + 2.0 * et)
            }),
        },
        operator: Arc::new(op),
        u0: x.map(|xi| xi * (1.0 - xi)),
        exact: Some(Box::new(move |t| {
            let et = t.exp();
            xe.map(|xi| xi * (1.0 - xi) * et)
        })),
        semilinear: SemilinearConfig::default(),
        t_end: 1.0,
    })
}

/// Decaying variant: exact solution u = x(1-x)e^{-t}, forcing
/// f = 2e^{-t} - x(1-x)e^{-t}.
pub fn example2(m: usize) -> Result<ProblemSpec> {
    let op = DirichletLaplacian1D::new(m, 1.0, 1.0)?;
    let x = interior_points(&op, 0.0);
    let xf = x.clone();
    let xe = x.clone();
    Ok(ProblemSpec {
        label: "example2".into(),
        kind: ProblemKind::Linear {
            forcing: Box::new(move |t| {
                let emt = (-t).exp();
                xf.map(|xi| 2.0 * emt - xi * (1.0 - xi) * emt)
            }),
        },
        operator: Arc::new(op),
        u0: x.map(|xi| xi * (1.0 - xi)),
        exact: Some(Box::new(move |t| {
            let emt = (-t).exp();
            xe.map(|xi| xi * (1.0 - xi) * emt)
        })),
        semilinear: SemilinearConfig::default(),
        t_end: 1.0,
    })
}

/// Semilinear problem u_t = u_xx + 1/(1+u^2) + phi(x,t) with the source
/// chosen so that u = x(1-x)e^t solves it.
pub fn example3(m: usize) -> Result<ProblemSpec> {
    let op = DirichletLaplacian1D::new(m, 1.0, 1.0)?;
    let x = interior_points(&op, 0.0);
    let xb = x.clone();
    let xe = x.clone();
    Ok(ProblemSpec {
        label: "example3".into(),
        kind: ProblemKind::Semilinear {
            nonlinearity: Box::new(move |t, u| {
                let et = t.exp();
                let src = xb.map(|xi| {
                    let w = xi * (1.0 - xi) * et;
                    xi * (1.0 - xi) * et + 2.0 * et - 1.0 / (1.0 + w * w)
                });
                u.map(|ui| 1.0 / (1.0 + ui * ui)) + src
            }),
        },
        operator: Arc::new(op),
        u0: x.map(|xi| xi * (1.0 - xi)),
        exact: Some(Box::new(move |t| {
            let et = t.exp();
            xe.map(|xi| xi * (1.0 - xi) * et)
        })),
        semilinear: SemilinearConfig::default(),
        t_end: 1.0,
    })
}

/// Allen-Cahn equation u_t = eps u_xx + u - u^3 on (-1,1) with boundary
/// values u(-1) = -1, u(1) = 1 lifted into the nonlinearity:
/// B(t, u) = u - u^3 + g, g_1 = -eps/dx^2, g_{M-1} = +eps/dx^2.
/// No exact solution; attach a reference run via `set_reference`.
pub fn example4(m: usize, epsilon: f64) -> Result<ProblemSpec> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    let op = DirichletLaplacian1D::new(m, 2.0, epsilon)?;
    let dx = op.dx();
    let x = interior_points(&op, -1.0);
    let dim = op.dim();
    let mut g = DVector::zeros(dim);
    g[0] = epsilon / (dx * dx) * (-1.0);
    g[dim - 1] = epsilon / (dx * dx) * 1.0;
    Ok(ProblemSpec {
        label: "example4".into(),
        kind: ProblemKind::Semilinear {
            nonlinearity: Box::new(move |_t, u| u.map(|ui| ui - ui * ui * ui) + &g),
        },
        operator: Arc::new(op),
        u0: x.map(|xi| 0.53 * xi + 0.47 * (-1.5 * std::f64::consts::PI * xi).sin()),
        exact: None,
        semilinear: SemilinearConfig::default(),
        t_end: 1.0,
    })
}
