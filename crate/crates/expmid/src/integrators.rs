//! Time stepping: the exponential midpoint rule for linear problems, the
//! exponential midpoint method with a fixed-point stage solve for semilinear
//! problems, the general exponential quadrature rule, and the order-condition
//! checker.

use std::sync::Arc;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::operators::norm_h;
use crate::phifun::{phi_scalar, PhiEvaluator};
use crate::problems::{ProblemKind, ProblemSpec};

/// Partition 0 = t^0 < t^1 < ... < t^N = T.
#[derive(Debug, Clone)]
pub struct TimeGrid {
    nodes: Vec<f64>,
}

impl TimeGrid {
    /// Uniform grid with n steps on [0, t_end].
    pub fn uniform(t_end: f64, n: usize) -> Result<Self> {
        if n == 0 || !(t_end > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "uniform grid needs n >= 1 and t_end > 0, got n={n}, t_end={t_end}"
            )));
        }
        let nodes = (0..=n).map(|i| t_end * i as f64 / n as f64).collect();
        Self::from_nodes(nodes)
    }

    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::InvalidConfig("grid needs at least one step".into()));
        }
        if nodes[0] != 0.0 {
            return Err(Error::InvalidConfig("grid must start at t = 0".into()));
        }
        if nodes.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidConfig(
                "grid nodes must be strictly increasing".into(),
            ));
        }
        let t_end = *nodes.last().unwrap();
        let sum: f64 = nodes.windows(2).map(|w| w[1] - w[0]).sum();
        if (sum - t_end).abs() > 1e-12 * t_end.max(1.0) {
            return Err(Error::InvalidConfig(
                "grid steps do not sum to the final time".into(),
            ));
        }
        Ok(Self { nodes })
    }

    pub fn n_steps(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn t_end(&self) -> f64 {
        *self.nodes.last().unwrap()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// t^i, i = 0..=N.
    pub fn node(&self, i: usize) -> f64 {
        self.nodes[i]
    }

    /// k_n = t^n - t^{n-1}, n = 1..=N.
    pub fn step(&self, n: usize) -> f64 {
        self.nodes[n] - self.nodes[n - 1]
    }

    /// t^{n-1/2} = (t^{n-1} + t^n)/2.
    pub fn midpoint(&self, n: usize) -> f64 {
        0.5 * (self.nodes[n - 1] + self.nodes[n])
    }
}

/// Vectors cached while stepping; every estimator reuses exactly these, so the
/// solver and the estimators stay bit-consistent.
#[derive(Debug, Clone)]
pub struct StepCache {
    /// f(t^{n-1/2}), or B(t^{n-1/2}, U^{n-1/2}) on semilinear steps.
    pub value_mid: DVector<f64>,
    /// f(t^{n-1}), or B(t^{n-1}, U^{n-1}).
    pub value_left: DVector<f64>,
    /// phi_1(-k_n A) value_mid.
    pub phi_mid: DVector<f64>,
    /// phi_1(-k_n A) A U^{n-1}.
    pub phi_au: DVector<f64>,
    /// phi_1(-k_n A) (value_mid - value_left).
    pub phi_dmid: DVector<f64>,
    /// Semilinear stage U^{n-1/2}.
    pub stage: Option<DVector<f64>>,
}

/// A completed run: nodal values U^0..U^N plus the per-step caches.
pub struct Trajectory {
    pub grid: TimeGrid,
    pub values: Vec<DVector<f64>>,
    pub caches: Vec<StepCache>,
    pub phi: Arc<PhiEvaluator>,
    /// Largest fixed-point iteration count over all steps (0 on linear runs).
    pub max_fp_iters: usize,
}

impl Trajectory {
    pub fn n_steps(&self) -> usize {
        self.grid.n_steps()
    }

    /// U^n, n = 0..=N.
    pub fn u(&self, n: usize) -> &DVector<f64> {
        &self.values[n]
    }

    /// Cache of step n, n = 1..=N.
    pub fn cache(&self, n: usize) -> &StepCache {
        &self.caches[n - 1]
    }

    pub fn operator(&self) -> &Arc<dyn crate::operators::SpdOperator> {
        self.phi.operator()
    }
}

/// Stage-solve and bound constants for semilinear runs.
///
/// The defaults are the benchmark configuration: theta = lambda = 1/6 and L
/// chosen so that 1 + L^2/(4 theta) = 2, with mu = 0.
#[derive(Debug, Clone, Copy)]
pub struct SemilinearConfig {
    pub fp_tol: f64,
    pub fp_max_iter: usize,
    /// Lipschitz constant L of B in a strip around the solution.
    pub lipschitz: f64,
    pub lambda: f64,
    pub mu: f64,
    pub theta: f64,
}

impl Default for SemilinearConfig {
    fn default() -> Self {
        Self {
            fp_tol: 1e-10,
            fp_max_iter: 100,
            lipschitz: (2.0f64 / 3.0).sqrt(),
            lambda: 1.0 / 6.0,
            mu: 0.0,
            theta: 1.0 / 6.0,
        }
    }
}

impl SemilinearConfig {
    /// The bound formulas additionally need 0 < theta < (1 - lambda)/4 and mu = 0.
    pub fn validate_for_bounds(&self) -> Result<()> {
        if !(self.fp_tol > 0.0) {
            return Err(Error::InvalidConfig("fp_tol must be positive".into()));
        }
        if self.mu != 0.0 {
            return Err(Error::InvalidConfig(
                "bounds are implemented for mu = 0 only".into(),
            ));
        }
        let cap = (1.0 - self.lambda) / 4.0;
        if !(self.theta > 0.0 && self.theta < cap) {
            return Err(Error::InvalidConfig(format!(
                "theta must lie in (0, {cap}), got {}",
                self.theta
            )));
        }
        Ok(())
    }
}

/// One exponential midpoint step for u' + Au = f(t):
/// U^n = U^{n-1} + k phi_1(-kA)(f(t^{n-1/2}) - A U^{n-1}).
pub fn step_linear<F>(
    phi: &PhiEvaluator,
    f: F,
    u_prev: &DVector<f64>,
    t_prev: f64,
    k: f64,
) -> Result<(DVector<f64>, StepCache)>
where
    F: Fn(f64) -> DVector<f64>,
{
    let t_mid = t_prev + 0.5 * k;
    let value_mid = f(t_mid);
    let value_left = f(t_prev);
    let phi_mid = phi.phi_action(1, k, &value_mid)?;
    let phi_au = phi.phi_action(1, k, &phi.operator().apply(u_prev))?;
    let phi_dmid = phi.phi_action(1, k, &(&value_mid - &value_left))?;
    let u_next = u_prev + k * (&phi_mid - &phi_au);
    Ok((
        u_next,
        StepCache {
            value_mid,
            value_left,
            phi_mid,
            phi_au,
            phi_dmid,
            stage: None,
        },
    ))
}

/// One exponential midpoint step for u' + Au = B(t, u). The stage
/// U^{n-1/2} = e^{-(k/2)A} U^{n-1} + (k/2) phi_1(-(k/2)A) B(t^{n-1/2}, U^{n-1/2})
/// is solved by fixed-point iteration started from U^{n-1}.
///
/// Returns the next value, the step cache (with the stage), and the iteration
/// count.
pub fn step_semilinear<B>(
    phi: &PhiEvaluator,
    b: B,
    u_prev: &DVector<f64>,
    t_prev: f64,
    k: f64,
    cfg: &SemilinearConfig,
) -> Result<(DVector<f64>, StepCache, usize)>
where
    B: Fn(f64, &DVector<f64>) -> DVector<f64>,
{
    let dx = phi.operator().mesh_weight();
    let t_mid = t_prev + 0.5 * k;
    let drift = phi.exp_action(0.5 * k, u_prev)?;
    let mut stage = u_prev.clone();
    let mut iters = 0usize;
    loop {
        iters += 1;
        let next = &drift + 0.5 * k * phi.phi_action(1, 0.5 * k, &b(t_mid, &stage))?;
        let increment = norm_h(&(&next - &stage), dx);
        stage = next;
        if increment < cfg.fp_tol {
            break;
        }
        if iters >= cfg.fp_max_iter {
            return Err(Error::FixedPointNoConvergence {
                max_iter: cfg.fp_max_iter,
                last_increment: increment,
            });
        }
    }

    let value_mid = b(t_mid, &stage);
    let value_left = b(t_prev, u_prev);
    let phi_mid = phi.phi_action(1, k, &value_mid)?;
    let phi_au = phi.phi_action(1, k, &phi.operator().apply(u_prev))?;
    let phi_dmid = phi.phi_action(1, k, &(&value_mid - &value_left))?;
    let u_next = u_prev + k * (&phi_mid - &phi_au);
    Ok((
        u_next,
        StepCache {
            value_mid,
            value_left,
            phi_mid,
            phi_au,
            phi_dmid,
            stage: Some(stage),
        },
        iters,
    ))
}

/// Advance a problem over the whole grid, populating all caches.
pub fn run(problem: &ProblemSpec, grid: TimeGrid, phi: Arc<PhiEvaluator>) -> Result<Trajectory> {
    let dim = problem.operator.dim();
    if phi.operator().dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: phi.operator().dim(),
        });
    }
    if problem.u0.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: problem.u0.len(),
        });
    }
    let n = grid.n_steps();
    let mut values = Vec::with_capacity(n + 1);
    let mut caches = Vec::with_capacity(n);
    values.push(problem.u0.clone());
    let mut max_fp_iters = 0usize;

    for step in 1..=n {
        let t_prev = grid.node(step - 1);
        let k = grid.step(step);
        let u_prev = values.last().unwrap();
        match &problem.kind {
            ProblemKind::Linear { forcing } => {
                let (u_next, cache) = step_linear(&phi, |t| forcing(t), u_prev, t_prev, k)
                    .map_err(|e| e.at_step(step))?;
                values.push(u_next);
                caches.push(cache);
            }
            ProblemKind::Semilinear { nonlinearity } => {
                let (u_next, cache, iters) = step_semilinear(
                    &phi,
                    |t, u| nonlinearity(t, u),
                    u_prev,
                    t_prev,
                    k,
                    &problem.semilinear,
                )
                .map_err(|e| e.at_step(step))?;
                max_fp_iters = max_fp_iters.max(iters);
                values.push(u_next);
                caches.push(cache);
            }
        }
    }

    Ok(Trajectory {
        grid,
        values,
        caches,
        phi,
        max_fp_iters,
    })
}

/// Exponential quadrature rule on collocation nodes c_1..c_s in [0, 1]:
/// U^n = e^{-kA} U^{n-1} + k sum_i b_i(-kA) f(t^{n-1} + c_i k), with weights
/// b_i(-kA) = sum_j coeff_ij j! phi_{j+1}(-kA) read off the monomial expansion
/// of the Lagrange polynomials over the nodes.
pub struct ExpQuadratureRule {
    nodes: Vec<f64>,
    coeffs: Vec<Vec<f64>>,
}

/// Build the rule for the given nodes (1 <= s <= 3, distinct).
pub fn exp_quadrature_weights(c: &[f64]) -> Result<ExpQuadratureRule> {
    let s = c.len();
    if s == 0 || s > 3 {
        return Err(Error::InvalidConfig(format!(
            "the rule supports 1..=3 nodes, got {s}"
        )));
    }
    for i in 0..s {
        for j in 0..i {
            if (c[i] - c[j]).abs() < 1e-12 {
                return Err(Error::InvalidConfig(format!(
                    "coincident quadrature nodes c[{j}] = c[{i}] = {}",
                    c[i]
                )));
            }
        }
    }
    let mut coeffs = Vec::with_capacity(s);
    for i in 0..s {
        // expand prod_{j != i} (theta - c_j) / (c_i - c_j)
        let mut poly = vec![1.0f64];
        let mut denom = 1.0f64;
        for j in 0..s {
            if j == i {
                continue;
            }
            denom *= c[i] - c[j];
            let mut next = vec![0.0; poly.len() + 1];
            for (p, &a) in poly.iter().enumerate() {
                next[p + 1] += a;
                next[p] -= c[j] * a;
            }
            poly = next;
        }
        for a in poly.iter_mut() {
            *a /= denom;
        }
        coeffs.push(poly);
    }
    Ok(ExpQuadratureRule {
        nodes: c.to_vec(),
        coeffs,
    })
}

impl ExpQuadratureRule {
    pub fn s(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// w = b_i(-kA) v.
    pub fn weight_action(
        &self,
        phi: &PhiEvaluator,
        i: usize,
        k: f64,
        v: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        let mut out = DVector::zeros(v.len());
        let mut jfact = 1.0f64;
        for (j, &a) in self.coeffs[i].iter().enumerate() {
            if j > 0 {
                jfact *= j as f64;
            }
            if a != 0.0 {
                out += a * jfact * phi.phi_action(j + 1, k, v)?;
            }
        }
        Ok(out)
    }

    /// b_i(0) = integral of the i-th Lagrange polynomial over [0, 1].
    pub fn weights_at_zero(&self) -> Vec<f64> {
        self.coeffs
            .iter()
            .map(|poly| {
                poly.iter()
                    .enumerate()
                    .map(|(j, &a)| a / (j + 1) as f64)
                    .sum()
            })
            .collect()
    }

    /// One step of the exponential quadrature rule for u' + Au = f(t).
    pub fn step<F>(
        &self,
        phi: &PhiEvaluator,
        f: F,
        u_prev: &DVector<f64>,
        t_prev: f64,
        k: f64,
    ) -> Result<DVector<f64>>
    where
        F: Fn(f64) -> DVector<f64>,
    {
        let mut u = phi.exp_action(k, u_prev)?;
        for i in 0..self.s() {
            let fv = f(t_prev + self.nodes[i] * k);
            u += k * self.weight_action(phi, i, k, &fv)?;
        }
        Ok(u)
    }
}

/// Scalar order conditions of the update at A = 0: the largest q with
/// sum_i b_i(0) c_i^{j-1}/(j-1)! = 1/j! for all j <= q, and whether the
/// additional condition sum_i b_i(0) c_i^s = 1/(s+1) holds.
pub fn check_update_order(c: &[f64]) -> Result<(usize, bool)> {
    let rule = exp_quadrature_weights(c)?;
    let b0 = rule.weights_at_zero();
    let s = c.len();
    let fact = |k: usize| -> f64 { (1..=k).map(|i| i as f64).product() };
    let mut q = 0;
    for j in 1..=2 * s {
        let lhs: f64 = b0
            .iter()
            .zip(c.iter())
            .map(|(&b, &ci)| b * ci.powi(j as i32 - 1) / fact(j - 1))
            .sum();
        if (lhs - 1.0 / fact(j)).abs() <= 1e-12 {
            q = j;
        } else {
            break;
        }
    }
    let extra: f64 = b0
        .iter()
        .zip(c.iter())
        .map(|(&b, &ci)| b * ci.powi(s as i32))
        .sum();
    Ok((q, (extra - 1.0 / (s as f64 + 1.0)).abs() <= 1e-12))
}

/// phi_1(-k a) for scalar a, handy in tests of the scalar limits.
pub fn phi1_scalar(k: f64, a: f64) -> f64 {
    phi_scalar(1, -k * a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{DiagonalOperator, SpdOperator};
    use crate::phifun::PhiMethod;

    fn scalar_phi(a: f64) -> PhiEvaluator {
        PhiEvaluator::new(Arc::new(DiagonalOperator::scalar(a).unwrap()), PhiMethod::Spectral)
    }

    #[test]
    fn grid_invariants() {
        let g = TimeGrid::uniform(1.0, 10).unwrap();
        assert_eq!(g.n_steps(), 10);
        assert!((g.t_end() - 1.0).abs() < 1e-15);
        assert!((g.step(3) - 0.1).abs() < 1e-15);
        assert!((g.midpoint(1) - 0.05).abs() < 1e-15);
        let sum: f64 = (1..=10).map(|n| g.step(n)).sum();
        assert!((sum - 1.0).abs() <= 1e-12);

        assert!(TimeGrid::uniform(0.0, 10).is_err());
        assert!(TimeGrid::uniform(1.0, 0).is_err());
        assert!(TimeGrid::from_nodes(vec![0.0, 0.5, 0.5, 1.0]).is_err());
        assert!(TimeGrid::from_nodes(vec![0.1, 0.5, 1.0]).is_err());
    }

    #[test]
    fn homogeneous_scalar_decay() {
        let a = 2.0;
        let phi = scalar_phi(a);
        let u0 = DVector::from_element(1, 1.5);
        let k = 0.25;
        let (u1, _) = step_linear(&phi, |_| DVector::zeros(1), &u0, 0.0, k).unwrap();
        let want = 1.5 * (-k * a).exp();
        assert!((u1[0] - want).abs() <= 1e-12 * want.abs());
    }

    #[test]
    fn vanishing_operator_gives_mid_rectangle() {
        // a -> 0: the rule degenerates to U^n = U^{n-1} + k f(t^{n-1/2})
        let phi = scalar_phi(1e-14);
        let u0 = DVector::from_element(1, 0.7);
        let k = 0.4;
        let f = |t: f64| DVector::from_element(1, (2.0 * t).cos());
        let (u1, _) = step_linear(&phi, f, &u0, 0.3, k).unwrap();
        let want = 0.7 + k * (2.0f64 * (0.3 + 0.2)).cos();
        assert!((u1[0] - want).abs() <= 1e-12);
    }

    #[test]
    fn semilinear_reduces_to_linear() {
        let phi = scalar_phi(1.3);
        let u0 = DVector::from_element(1, 0.9);
        let cfg = SemilinearConfig::default();
        // B == 0
        let (u_zero, _, _) =
            step_semilinear(&phi, |_, _| DVector::zeros(1), &u0, 0.0, 0.2, &cfg).unwrap();
        let (u_lin, _) = step_linear(&phi, |_| DVector::zeros(1), &u0, 0.0, 0.2).unwrap();
        assert_eq!(u_zero[0], u_lin[0]);

        // B = f(t), no state dependence: fixed point is immediate
        let f = |t: f64| DVector::from_element(1, 1.0 + t * t);
        let (u_b, cache, iters) =
            step_semilinear(&phi, |t, _| f(t), &u0, 0.0, 0.2, &cfg).unwrap();
        let (u_f, _) = step_linear(&phi, f, &u0, 0.0, 0.2).unwrap();
        assert!(iters <= 2, "iters = {iters}");
        assert_eq!(u_b[0], u_f[0]);
        assert!(cache.stage.is_some());
    }

    #[test]
    fn stage_satisfies_its_equation() {
        let op: Arc<dyn SpdOperator> = Arc::new(
            crate::operators::DirichletLaplacian1D::unit(20).unwrap(),
        );
        let phi = PhiEvaluator::new(op.clone(), PhiMethod::Spectral);
        let dim = op.dim();
        let u0 = DVector::from_fn(dim, |i, _| ((i + 1) as f64 * 0.05).sin());
        let cfg = SemilinearConfig::default();
        let b = |_t: f64, u: &DVector<f64>| u.map(|x| 1.0 / (1.0 + x * x));
        let k = 0.1;
        let (_, cache, _) = step_semilinear(&phi, b, &u0, 0.0, k, &cfg).unwrap();
        let stage = cache.stage.as_ref().unwrap();
        let rhs = phi.exp_action(0.5 * k, &u0).unwrap()
            + 0.5 * k * phi.phi_action(1, 0.5 * k, &b(0.05, stage)).unwrap();
        let residual = norm_h(&(stage - rhs), op.mesh_weight());
        assert!(residual <= 10.0 * cfg.fp_tol, "residual = {residual:e}");
    }

    #[test]
    fn fixed_point_divergence_is_reported() {
        let phi = scalar_phi(1e-12);
        let u0 = DVector::from_element(1, 1.0);
        let cfg = SemilinearConfig {
            fp_max_iter: 5,
            ..Default::default()
        };
        // (k/2) * 50 = 25 > 1: the iteration blows up and must be rejected
        let r = step_semilinear(&phi, |_, u: &DVector<f64>| 50.0 * u, &u0, 0.0, 1.0, &cfg);
        assert!(matches!(r, Err(Error::FixedPointNoConvergence { .. })));
    }

    #[test]
    fn both_update_forms_agree() {
        let op: Arc<dyn SpdOperator> = Arc::new(
            crate::operators::DirichletLaplacian1D::unit(25).unwrap(),
        );
        let phi = PhiEvaluator::new(op.clone(), PhiMethod::Spectral);
        let dim = op.dim();
        let u0 = DVector::from_fn(dim, |i, _| ((i as f64) * 0.3).cos());
        let f = |t: f64| DVector::from_element(dim, (1.0 + t).ln());
        let k = 0.05;
        let (u_rearranged, _) = step_linear(&phi, f, &u0, 0.2, k).unwrap();
        // U^n = e^{-kA} U^{n-1} + k phi_1(-kA) f(t^{n-1/2})
        let u_direct = phi.exp_action(k, &u0).unwrap()
            + k * phi.phi_action(1, k, &f(0.2 + 0.5 * k)).unwrap();
        let scale = norm_h(&u_direct, op.mesh_weight());
        assert!(norm_h(&(&u_rearranged - &u_direct), op.mesh_weight()) <= 1e-11 * scale);
    }

    #[test]
    fn midpoint_is_the_one_node_rule() {
        let op: Arc<dyn SpdOperator> = Arc::new(
            crate::operators::DirichletLaplacian1D::unit(15).unwrap(),
        );
        let phi = PhiEvaluator::new(op.clone(), PhiMethod::Spectral);
        let dim = op.dim();
        let u0 = DVector::from_fn(dim, |i, _| (i as f64 + 1.0).recip());
        let f = |t: f64| DVector::from_element(dim, t.exp());
        let rule = exp_quadrature_weights(&[0.5]).unwrap();
        let k = 0.125;
        let via_rule = rule.step(&phi, f, &u0, 0.0, k).unwrap();
        let (via_step, _) = step_linear(&phi, f, &u0, 0.0, k).unwrap();
        // same phi actions modulo the exact e^{-kA} = I - kA phi_1 identity
        let scale = norm_h(&via_step, op.mesh_weight());
        assert!(norm_h(&(&via_rule - &via_step), op.mesh_weight()) <= 1e-11 * scale);
    }

    #[test]
    fn trapezoid_nodes_reduce_to_classical_weights() {
        let rule = exp_quadrature_weights(&[0.0, 1.0]).unwrap();
        let b0 = rule.weights_at_zero();
        assert!((b0[0] - 0.5).abs() < 1e-14);
        assert!((b0[1] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn update_order_reference_cases() {
        // midpoint: conditions through j = 2 plus the additional one
        let (q, extra) = check_update_order(&[0.5]).unwrap();
        assert_eq!(q, 2);
        assert!(extra);

        // right endpoint: first order, additional condition fails (1 != 1/2)
        let (q, extra) = check_update_order(&[1.0]).unwrap();
        assert_eq!(q, 1);
        assert!(!extra);

        // trapezoid nodes: q = 2 but sum b_i(0) c_i^2 = 1/2 != 1/3
        let (q, extra) = check_update_order(&[0.0, 1.0]).unwrap();
        assert_eq!(q, 2);
        assert!(!extra);
    }

    #[test]
    fn rule_rejects_bad_nodes() {
        assert!(exp_quadrature_weights(&[]).is_err());
        assert!(exp_quadrature_weights(&[0.1, 0.2, 0.3, 0.4]).is_err());
        assert!(exp_quadrature_weights(&[0.5, 0.5]).is_err());
    }

    #[test]
    fn semilinear_bound_config_validation() {
        let good = SemilinearConfig::default();
        assert!(good.validate_for_bounds().is_ok());
        let bad_theta = SemilinearConfig {
            theta: 0.3,
            ..Default::default()
        };
        assert!(bad_theta.validate_for_bounds().is_err());
        let bad_mu = SemilinearConfig {
            mu: 0.5,
            ..Default::default()
        };
        assert!(bad_mu.validate_for_bounds().is_err());
    }
}
