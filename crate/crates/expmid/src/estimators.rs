//! A posteriori machinery: the piecewise linear interpolant of the nodal
//! values, the piecewise quadratic reconstruction, the residuals they leave in
//! the equation, and the norm estimators and error bounds built from them.
//!
//! Everything here consumes the vectors cached in [`StepCache`] during the
//! run, so the estimators see exactly the phi actions the solver produced.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::integrators::Trajectory;
use crate::operators::{inner_h, norm_h};
use crate::phifun::PhiMethod;
use crate::problems::{ProblemKind, ProblemSpec};
use crate::quadrature::Quadrature3;

/// Everything one benchmark row reports. `e_t`, `e_inf`, `e_1` and the
/// effectivity indices are present only when the problem carries an exact
/// solution (or a reference run standing in for one).
#[derive(Debug, Clone)]
pub struct EstimatorReport {
    pub label: String,
    /// Spatial intervals of the underlying mesh.
    pub m: usize,
    pub n_steps: usize,
    pub phi_method: PhiMethod,
    /// |u(T) - U^N|_h.
    pub e_t: Option<f64>,
    /// max_n |u(t^n) - U^n|_h.
    pub e_inf: Option<f64>,
    /// (sum_n int ||u - U||_V^2)^(1/2).
    pub e_1: Option<f64>,
    pub est_u: f64,
    pub est_fb: f64,
    pub zeta_u: f64,
    pub lower: f64,
    pub upper: f64,
    pub ei_l: Option<f64>,
    pub ei_u: Option<f64>,
}

fn check_step(traj: &Trajectory, n: usize, t: f64) -> Result<()> {
    if n == 0 || n > traj.n_steps() {
        return Err(Error::InvalidConfig(format!(
            "step index {n} outside 1..={}",
            traj.n_steps()
        )));
    }
    let t0 = traj.grid.node(n - 1);
    let t1 = traj.grid.node(n);
    let slack = 1e-12 * (t1 - t0).max(1.0);
    if t < t0 - slack || t > t1 + slack {
        return Err(Error::OutOfStep {
            t,
            left: t0,
            right: t1,
        });
    }
    Ok(())
}

/// Piecewise linear interpolant U(t) on step n.
pub fn interpolant(traj: &Trajectory, n: usize, t: f64) -> Result<DVector<f64>> {
    check_step(traj, n, t)?;
    let t0 = traj.grid.node(n - 1);
    let k = traj.grid.step(n);
    let u_prev = traj.u(n - 1);
    Ok(u_prev + (t - t0) * ((traj.u(n) - u_prev) / k))
}

/// Quadratic reconstruction
/// Uhat(t) = U^{n-1} + (t - t^{n-1}) phi_1(-kA)(value_mid - A U^{n-1})
///         - (t - t^{n-1})(t^n - t)/k phi_1(-kA)(value_mid - value_left).
pub fn reconstruction(traj: &Trajectory, n: usize, t: f64) -> Result<DVector<f64>> {
    check_step(traj, n, t)?;
    let t0 = traj.grid.node(n - 1);
    let t1 = traj.grid.node(n);
    let k = traj.grid.step(n);
    let c = traj.cache(n);
    let dt = t - t0;
    let mut uhat = traj.u(n - 1) + dt * (&c.phi_mid - &c.phi_au);
    uhat -= (dt * (t1 - t) / k) * &c.phi_dmid;
    Ok(uhat)
}

/// Uhat(t) - U(t) in closed form: the interpolant drops out of the
/// reconstruction, leaving only the bubble term.
pub fn recon_minus_interp(traj: &Trajectory, n: usize, t: f64) -> Result<DVector<f64>> {
    check_step(traj, n, t)?;
    let t0 = traj.grid.node(n - 1);
    let t1 = traj.grid.node(n);
    let k = traj.grid.step(n);
    Ok(-((t - t0) * (t1 - t) / k) * &traj.cache(n).phi_dmid)
}

fn value_at(traj: &Trajectory, problem: &ProblemSpec, n: usize, t: f64) -> Result<DVector<f64>> {
    match &problem.kind {
        ProblemKind::Linear { forcing } => Ok(forcing(t)),
        ProblemKind::Semilinear { nonlinearity } => {
            let u_t = interpolant(traj, n, t)?;
            Ok(nonlinearity(t, &u_t))
        }
    }
}

fn forcing_residual(
    traj: &Trajectory,
    problem: &ProblemSpec,
    n: usize,
    t: f64,
) -> Result<DVector<f64>> {
    check_step(traj, n, t)?;
    let k = traj.grid.step(n);
    let t_mid = traj.grid.midpoint(n);
    let c = traj.cache(n);
    let value = value_at(traj, problem, n, t)?;
    Ok(value - (&c.value_mid + (2.0 / k) * (t - t_mid) * (&c.value_mid - &c.value_left)))
}

/// Data oscillation residual R_f(t) = f(t) - (linear interpolant of f through
/// the midpoint with slope 2(f_mid - f_left)/k). Linear problems only.
pub fn residual_rf(traj: &Trajectory, problem: &ProblemSpec, n: usize, t: f64) -> Result<DVector<f64>> {
    if problem.is_semilinear() {
        return Err(Error::InvalidConfig(
            "residual_rf is defined for linear problems; use residual_rb".into(),
        ));
    }
    forcing_residual(traj, problem, n, t)
}

/// Semilinear counterpart of R_f with f(t) replaced by B(t, U(t)).
pub fn residual_rb(traj: &Trajectory, problem: &ProblemSpec, n: usize, t: f64) -> Result<DVector<f64>> {
    if !problem.is_semilinear() {
        return Err(Error::InvalidConfig(
            "residual_rb is defined for semilinear problems; use residual_rf".into(),
        ));
    }
    forcing_residual(traj, problem, n, t)
}

/// Residual of the interpolant, R(t) = U'(t) + A U(t) - value(t), assembled
/// from the cached phi actions so that U'(t) is exactly the solver's slope.
pub fn residual_r(
    traj: &Trajectory,
    problem: &ProblemSpec,
    n: usize,
    t: f64,
) -> Result<DVector<f64>> {
    check_step(traj, n, t)?;
    let op = traj.operator();
    let t0 = traj.grid.node(n - 1);
    let k = traj.grid.step(n);
    let c = traj.cache(n);
    let u_prev = traj.u(n - 1);
    let value = value_at(traj, problem, n, t)?;
    let dbar_au = op.apply(&((traj.u(n) - u_prev) / k));
    let mut r = &c.phi_mid - &c.phi_au;
    r -= &c.value_mid - op.apply(u_prev);
    r += &c.value_mid;
    r -= &value;
    r += (t - t0) * dbar_au;
    Ok(r)
}

/// Residual of the reconstruction, Rhat(t) = Uhat'(t) + A Uhat(t) - value(t).
/// Diagnostic only; the estimators never integrate it.
pub fn residual_rhat(
    traj: &Trajectory,
    problem: &ProblemSpec,
    n: usize,
    t: f64,
) -> Result<DVector<f64>> {
    check_step(traj, n, t)?;
    let op = traj.operator();
    let t0 = traj.grid.node(n - 1);
    let t1 = traj.grid.node(n);
    let k = traj.grid.step(n);
    let c = traj.cache(n);
    let value = value_at(traj, problem, n, t)?;
    let uhat = reconstruction(traj, n, t)?;
    let mut r = &c.phi_mid - &c.phi_au;
    r -= ((t0 + t1 - 2.0 * t) / k) * &c.phi_dmid;
    r += op.apply(&uhat);
    r -= &value;
    Ok(r)
}

/// Accumulate the three estimators over the whole run. Returns
/// (est_U, est_F or est_B, zeta_U):
///
/// est_U^2    = sum_n (k_n^3/30) (A phi_dmid, phi_dmid)_h,
/// est_FB^2   = sum_n int ||phi_1(-k_n A) R_f||_*^2 dt,
/// zeta_U^2   = sum_n int ||(phi_1(-k_n A) - I) R||_*^2 dt,
///
/// both integrals by three point Gauss per step.
pub fn accumulate_estimators(
    traj: &Trajectory,
    problem: &ProblemSpec,
) -> Result<(f64, f64, f64)> {
    let op = traj.operator();
    let dx = op.mesh_weight();
    let mut eps_u = 0.0;
    let mut est_fb_sq = 0.0;
    let mut zeta_sq = 0.0;
    for n in 1..=traj.n_steps() {
        let t0 = traj.grid.node(n - 1);
        let t1 = traj.grid.node(n);
        let k = traj.grid.step(n);
        let c = traj.cache(n);
        eps_u += (k.powi(3) / 30.0) * inner_h(&op.apply(&c.phi_dmid), &c.phi_dmid, dx);
        let nodes = Quadrature3::nodes_on(t0, t1);
        for (node, &s) in nodes.iter().enumerate() {
            let scale = 0.5 * k * Quadrature3::WEIGHTS[node];
            let ctx = |e: Error| e.at_node(n, node);
            let rf = forcing_residual(traj, problem, n, s).map_err(ctx)?;
            let w = traj.phi.phi_action(1, k, &rf).map_err(ctx)?;
            est_fb_sq += scale * inner_h(&w, &op.solve(&w).map_err(ctx)?, dx);
            let r = residual_r(traj, problem, n, s).map_err(ctx)?;
            let wz = traj.phi.phi_action(1, k, &r).map_err(ctx)? - r;
            zeta_sq += scale * inner_h(&wz, &op.solve(&wz).map_err(ctx)?, dx);
        }
    }
    Ok((
        eps_u.max(0.0).sqrt(),
        est_fb_sq.max(0.0).sqrt(),
        zeta_sq.max(0.0).sqrt(),
    ))
}

/// Exact-solution error metrics (E_T, E_inf, E_1). Requires `problem.exact`.
pub fn error_metrics(traj: &Trajectory, problem: &ProblemSpec) -> Result<(f64, f64, f64)> {
    let op = traj.operator();
    let dx = op.mesh_weight();
    let n_steps = traj.n_steps();
    let mut e_t = 0.0;
    let mut e_inf = 0.0f64;
    for i in 1..=n_steps {
        let d = problem.exact_at(traj.grid.node(i))? - traj.u(i);
        let e = norm_h(&d, dx);
        e_inf = e_inf.max(e);
        if i == n_steps {
            e_t = e;
        }
    }
    let mut e1_sq = 0.0;
    for n in 1..=n_steps {
        let t0 = traj.grid.node(n - 1);
        let t1 = traj.grid.node(n);
        let k = traj.grid.step(n);
        let nodes = Quadrature3::nodes_on(t0, t1);
        for (node, &s) in nodes.iter().enumerate() {
            let d = problem.exact_at(s)? - interpolant(traj, n, s)?;
            e1_sq += 0.5 * k * Quadrature3::WEIGHTS[node] * inner_h(&op.apply(&d), &d, dx);
        }
    }
    Ok((e_t, e_inf, e1_sq.max(0.0).sqrt()))
}

/// Fill in the lower/upper bounds and, when error metrics are present, the
/// effectivity indices ei_L = lower / (c E_1) and ei_U = upper / (E_T + c E_1)
/// with c = 5/3 on linear and c = 1/3 on semilinear problems.
pub fn bounds_and_effectivity(report: &mut EstimatorReport, problem: &ProblemSpec) {
    let (lower, upper, c) = if problem.is_semilinear() {
        (
            report.est_u / 12.0,
            2.0 * report.est_u + 6.0 * report.est_fb + 6.0 * report.zeta_u,
            1.0 / 3.0,
        )
    } else {
        (
            2.0 * report.est_u / 5.0,
            report.est_u + 6.0 * report.est_fb + 6.0 * report.zeta_u,
            5.0 / 3.0,
        )
    };
    assert!(lower <= upper);
    report.lower = lower;
    report.upper = upper;
    if let (Some(e_t), Some(e_1)) = (report.e_t, report.e_1) {
        if e_1 > 0.0 {
            report.ei_l = Some(lower / (c * e_1));
            report.ei_u = Some(upper / (e_t + c * e_1));
        }
    }
}

/// Run estimators, error metrics (when an exact solution is attached) and
/// bounds in one go.
pub fn assemble_report(traj: &Trajectory, problem: &ProblemSpec) -> Result<EstimatorReport> {
    let (est_u, est_fb, zeta_u) = accumulate_estimators(traj, problem)?;
    let mut report = EstimatorReport {
        label: problem.label.clone(),
        m: traj.operator().dim() + 1,
        n_steps: traj.n_steps(),
        phi_method: traj.phi.method(),
        e_t: None,
        e_inf: None,
        e_1: None,
        est_u,
        est_fb,
        zeta_u,
        lower: 0.0,
        upper: 0.0,
        ei_l: None,
        ei_u: None,
    };
    if problem.has_exact() {
        let (e_t, e_inf, e_1) = error_metrics(traj, problem)?;
        report.e_t = Some(e_t);
        report.e_inf = Some(e_inf);
        report.e_1 = Some(e_1);
    }
    bounds_and_effectivity(&mut report, problem);
    Ok(report)
}

/// Right hand sides of the residual-based a priori style bounds:
/// (max_t |R(t)|_h^2 / lambda_1^2, sum_n int ||R||_*^2 dt), both sampled or
/// integrated at the Gauss nodes.
pub fn suboptimal_bounds(traj: &Trajectory, problem: &ProblemSpec) -> Result<(f64, f64)> {
    let op = traj.operator();
    let dx = op.mesh_weight();
    let lam1 = op.lambda1();
    let mut max_r_sq = 0.0f64;
    let mut l2_star = 0.0;
    for n in 1..=traj.n_steps() {
        let t0 = traj.grid.node(n - 1);
        let t1 = traj.grid.node(n);
        let k = traj.grid.step(n);
        let nodes = Quadrature3::nodes_on(t0, t1);
        for (node, &s) in nodes.iter().enumerate() {
            let r = residual_r(traj, problem, n, s).map_err(|e| e.at_node(n, node))?;
            let r_sq = inner_h(&r, &r, dx);
            max_r_sq = max_r_sq.max(r_sq);
            l2_star += 0.5 * k * Quadrature3::WEIGHTS[node] * inner_h(&r, &op.solve(&r)?, dx);
        }
    }
    Ok((max_r_sq / (lam1 * lam1), l2_star))
}

/// Both sides of the residual bounds, for checking them on problems with an
/// exact solution: max |e|^2 <= max |R|^2 / lambda_1^2 and
/// E_T^2 + E_1^2 <= sum_n int ||R||_*^2.
#[derive(Debug, Clone, Copy)]
pub struct SuboptimalCheck {
    pub max_err_sq: f64,
    pub max_bound: f64,
    pub terminal_err_sq_plus_l2v: f64,
    pub l2v_bound: f64,
}

pub fn check_suboptimal(traj: &Trajectory, problem: &ProblemSpec) -> Result<SuboptimalCheck> {
    let op = traj.operator();
    let dx = op.mesh_weight();
    let (max_bound, l2v_bound) = suboptimal_bounds(traj, problem)?;
    let mut max_err_sq = 0.0f64;
    for n in 1..=traj.n_steps() {
        let t0 = traj.grid.node(n - 1);
        let t1 = traj.grid.node(n);
        for &s in Quadrature3::nodes_on(t0, t1).iter() {
            let e = problem.exact_at(s)? - interpolant(traj, n, s)?;
            max_err_sq = max_err_sq.max(inner_h(&e, &e, dx));
        }
    }
    let (e_t, _, e_1) = error_metrics(traj, problem)?;
    Ok(SuboptimalCheck {
        max_err_sq,
        max_bound,
        terminal_err_sq_plus_l2v: e_t * e_t + e_1 * e_1,
        l2v_bound,
    })
}

/// Right hand side of the semilinear energy bound:
/// (1 + L^2/(4 theta)) sum_n int ||Uhat - U||_V^2 + (est_B^2 + zeta_U^2)/theta.
pub fn semilinear_bound(traj: &Trajectory, problem: &ProblemSpec) -> Result<f64> {
    if !problem.is_semilinear() {
        return Err(Error::InvalidConfig(
            "the energy bound applies to semilinear problems".into(),
        ));
    }
    let cfg = &problem.semilinear;
    cfg.validate_for_bounds()?;
    let op = traj.operator();
    let dx = op.mesh_weight();
    let (_, est_b, zeta_u) = accumulate_estimators(traj, problem)?;
    let mut bubble = 0.0;
    for n in 1..=traj.n_steps() {
        let t0 = traj.grid.node(n - 1);
        let t1 = traj.grid.node(n);
        bubble += Quadrature3::try_integrate(t0, t1, |s| {
            let d = recon_minus_interp(traj, n, s)?;
            Ok(inner_h(&op.apply(&d), &d, dx))
        })?;
    }
    let l = cfg.lipschitz;
    Ok((1.0 + l * l / (4.0 * cfg.theta)) * bubble + (est_b * est_b + zeta_u * zeta_u) / cfg.theta)
}

/// Both sides of the semilinear bounds (mu = 0), for exact-solution checks:
///
/// upper:  |ehat(T)|^2 + (1 - lambda - 4 theta) int (||e||_V^2 + ||ehat||_V^2)
///         <= rhs of [`semilinear_bound`],
/// lower:  (1/2) int ||Uhat - U||_V^2 <= int (||e||_V^2 + ||ehat||_V^2),
///
/// with e = u - U and ehat = u - Uhat.
#[derive(Debug, Clone, Copy)]
pub struct SemilinearCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub lower_lhs: f64,
    pub lower_rhs: f64,
}

pub fn check_semilinear(traj: &Trajectory, problem: &ProblemSpec) -> Result<SemilinearCheck> {
    let cfg = &problem.semilinear;
    cfg.validate_for_bounds()?;
    let op = traj.operator();
    let dx = op.mesh_weight();
    let rhs = semilinear_bound(traj, problem)?;
    let n_steps = traj.n_steps();
    let mut err_energy = 0.0;
    let mut bubble = 0.0;
    for n in 1..=n_steps {
        let t0 = traj.grid.node(n - 1);
        let t1 = traj.grid.node(n);
        err_energy += Quadrature3::try_integrate(t0, t1, |s| {
            let u = problem.exact_at(s)?;
            let e = &u - interpolant(traj, n, s)?;
            let ehat = &u - reconstruction(traj, n, s)?;
            Ok(inner_h(&op.apply(&e), &e, dx) + inner_h(&op.apply(&ehat), &ehat, dx))
        })?;
        bubble += Quadrature3::try_integrate(t0, t1, |s| {
            let d = recon_minus_interp(traj, n, s)?;
            Ok(inner_h(&op.apply(&d), &d, dx))
        })?;
    }
    let ehat_t = problem.exact_at(traj.grid.t_end())? - traj.u(n_steps);
    let ehat_t_sq = inner_h(&ehat_t, &ehat_t, dx);
    Ok(SemilinearCheck {
        lhs: ehat_t_sq + (1.0 - cfg.lambda - 4.0 * cfg.theta) * err_energy,
        rhs,
        lower_lhs: 0.5 * bubble,
        lower_rhs: err_energy,
    })
}
