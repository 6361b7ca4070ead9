//! Benchmark driver behind the `expmid` binary: sweep configuration, the
//! actual runs, observed convergence orders, and the CSV / plain text tables.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use expmid::{
    assemble_report, example1, example2, example3, example4, run, EstimatorReport, PhiEvaluator,
    PhiMethod, ProblemSpec, TimeGrid,
};

/// Steps of the fine self-reference run used when a problem carries no
/// closed-form solution (example 4).
pub const REFERENCE_STEPS: usize = 10_000;

/// Column header of the CSV output, one line per sweep row.
pub const CSV_HEADER: &str = "example,M,N,phi_method,E_T,order_ET,E_inf,order_Einf,E_1,order_E1,\
est_U,order_estU,est_F_or_B,order_estFB,zeta_U,order_zetaU,lower,upper,ei_L,ei_U";

/// Which table(s) the text output shows. The CSV always carries every column.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableKind {
    Errors,
    Estimators,
    Effectivity,
    All,
}

impl FromStr for TableKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "errors" => Ok(TableKind::Errors),
            "estimators" => Ok(TableKind::Estimators),
            "effectivity" => Ok(TableKind::Effectivity),
            "all" => Ok(TableKind::All),
            other => Err(format!(
                "unknown table '{other}' (expected errors, estimators, effectivity or all)"
            )),
        }
    }
}

impl fmt::Display for TableKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TableKind::Errors => "errors",
            TableKind::Estimators => "estimators",
            TableKind::Effectivity => "effectivity",
            TableKind::All => "all",
        };
        f.write_str(s)
    }
}

/// Everything one invocation needs: the problem, the sweep, and the solver
/// knobs. `for_example` fills in the per-example defaults.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub example: u8,
    /// Spatial intervals of the mesh.
    pub m: usize,
    /// Step counts of the sweep, strictly increasing.
    pub steps: Vec<usize>,
    pub phi_method: PhiMethod,
    pub krylov_dim: usize,
    pub krylov_tol: f64,
    pub fp_tol: f64,
    pub fp_max_iter: usize,
    /// Diffusion coefficient of example 4; ignored elsewhere.
    pub epsilon: f64,
    pub table: TableKind,
    /// Write the CSV here as well as printing the text tables.
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn for_example(example: u8) -> Self {
        let (m, steps) = if example == 4 {
            (80, vec![10, 20, 40, 80])
        } else {
            (100, vec![10, 20, 40, 80, 160, 320])
        };
        RunConfig {
            example,
            m,
            steps,
            phi_method: PhiMethod::Spectral,
            krylov_dim: 30,
            krylov_tol: 1e-12,
            fp_tol: 1e-10,
            fp_max_iter: 100,
            epsilon: 0.01,
            table: TableKind::All,
            out: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=4).contains(&self.example) {
            bail!("example must be 1, 2, 3 or 4, got {}", self.example);
        }
        if self.m < 4 {
            bail!("need at least 4 spatial intervals, got {}", self.m);
        }
        if self.steps.is_empty() {
            bail!("the step sweep is empty");
        }
        if !self.steps.windows(2).all(|w| w[0] < w[1]) {
            bail!("step counts must be strictly increasing: {:?}", self.steps);
        }
        if self.steps[0] == 0 {
            bail!("step counts must be positive");
        }
        if !(self.epsilon > 0.0) {
            bail!("epsilon must be positive, got {}", self.epsilon);
        }
        if !(self.fp_tol > 0.0) {
            bail!("fixed point tolerance must be positive, got {}", self.fp_tol);
        }
        if self.krylov_dim == 0 {
            bail!("the Krylov dimension must be at least 1");
        }
        if !(self.krylov_tol > 0.0) {
            bail!("the Krylov tolerance must be positive, got {}", self.krylov_tol);
        }
        Ok(())
    }

    /// Error columns are wanted unless the run only prints estimators.
    fn needs_errors(&self) -> bool {
        !matches!(self.table, TableKind::Estimators)
    }
}

/// Build the configured problem with the solver knobs folded in.
pub fn build_problem(cfg: &RunConfig) -> Result<ProblemSpec> {
    let mut problem = match cfg.example {
        1 => example1(cfg.m),
        2 => example2(cfg.m),
        3 => example3(cfg.m),
        4 => example4(cfg.m, cfg.epsilon),
        other => bail!("example must be 1, 2, 3 or 4, got {other}"),
    }?;
    problem.semilinear.fp_tol = cfg.fp_tol;
    problem.semilinear.fp_max_iter = cfg.fp_max_iter;
    Ok(problem)
}

pub fn phi_evaluator(cfg: &RunConfig, problem: &ProblemSpec) -> Arc<PhiEvaluator> {
    Arc::new(
        PhiEvaluator::new(problem.operator.clone(), cfg.phi_method)
            .with_krylov(cfg.krylov_dim, cfg.krylov_tol),
    )
}

/// Observed orders p_i = ln(v_{i-1}/v_i) / ln(N_i/N_{i-1}); one entry fewer
/// than the sweep, entry i-1 pairing rows i-1 and i.
pub fn convergence_order(values: &[f64], steps: &[usize]) -> Result<Vec<f64>> {
    if values.len() != steps.len() {
        bail!(
            "got {} values for {} step counts",
            values.len(),
            steps.len()
        );
    }
    if values.len() < 2 {
        bail!("need at least two rows to estimate an order");
    }
    let mut orders = Vec::with_capacity(values.len() - 1);
    for i in 1..values.len() {
        if !(values[i - 1] > 0.0 && values[i] > 0.0) {
            bail!(
                "convergence orders need positive values, got {} and {}",
                values[i - 1],
                values[i]
            );
        }
        let ratio = values[i - 1] / values[i];
        let refinement = steps[i] as f64 / steps[i - 1] as f64;
        orders.push(ratio.ln() / refinement.ln());
    }
    Ok(orders)
}

/// Per-column observed orders; a column is `None` when the values are missing
/// or an order cannot be formed (single row, nonpositive entries).
pub struct OrderColumns {
    pub e_t: Option<Vec<f64>>,
    pub e_inf: Option<Vec<f64>>,
    pub e_1: Option<Vec<f64>>,
    pub est_u: Option<Vec<f64>>,
    pub est_fb: Option<Vec<f64>>,
    pub zeta_u: Option<Vec<f64>>,
}

pub fn order_columns(reports: &[EstimatorReport], steps: &[usize]) -> OrderColumns {
    let col = |values: Vec<Option<f64>>| -> Option<Vec<f64>> {
        let values: Option<Vec<f64>> = values.into_iter().collect();
        convergence_order(&values?, steps).ok()
    };
    OrderColumns {
        e_t: col(reports.iter().map(|r| r.e_t).collect()),
        e_inf: col(reports.iter().map(|r| r.e_inf).collect()),
        e_1: col(reports.iter().map(|r| r.e_1).collect()),
        est_u: col(reports.iter().map(|r| Some(r.est_u)).collect()),
        est_fb: col(reports.iter().map(|r| Some(r.est_fb)).collect()),
        zeta_u: col(reports.iter().map(|r| Some(r.zeta_u)).collect()),
    }
}

/// The reports plus both renderings of one sweep.
pub struct SuiteOutput {
    pub reports: Vec<EstimatorReport>,
    pub csv: String,
    pub text: String,
}

/// Run the configured sweep. Example 4 first integrates a fine reference
/// trajectory (same phi method) and uses it in place of an exact solution;
/// that run is skipped when only estimators are asked for.
pub fn run_suite(cfg: &RunConfig) -> Result<SuiteOutput> {
    cfg.validate()?;
    let mut problem = build_problem(cfg)?;
    let phi = phi_evaluator(cfg, &problem);
    if cfg.example == 4 && cfg.needs_errors() {
        let grid = TimeGrid::uniform(problem.t_end, REFERENCE_STEPS)?;
        let reference = run(&problem, grid, phi.clone())
            .context("reference run for example 4 failed")?;
        problem.set_reference(&reference);
    }
    let mut reports = Vec::with_capacity(cfg.steps.len());
    for &n in &cfg.steps {
        let grid = TimeGrid::uniform(problem.t_end, n)?;
        let trajectory =
            run(&problem, grid, phi.clone()).with_context(|| format!("run with N={n} failed"))?;
        let report = assemble_report(&trajectory, &problem)
            .with_context(|| format!("estimators for N={n} failed"))?;
        reports.push(report);
    }
    let orders = order_columns(&reports, &cfg.steps);
    let csv = render_csv(cfg, &reports, &orders)?;
    let text = render_text(cfg, &reports, &orders);
    Ok(SuiteOutput { reports, csv, text })
}

fn full(x: f64) -> String {
    format!("{x}")
}

fn opt_full(x: Option<f64>) -> String {
    x.map(full).unwrap_or_default()
}

/// Five significant digits, two-digit signed exponent: 4.2546e-03.
fn sci(x: f64) -> String {
    let s = format!("{x:.4e}");
    let (mantissa, exp) = s.split_once('e').expect("scientific float format");
    let exp: i32 = exp.parse().expect("float exponent");
    let sign = if exp < 0 { '-' } else { '+' };
    format!("{mantissa}e{sign}{:02}", exp.abs())
}

/// Full-precision CSV with [`CSV_HEADER`]; empty cells where a value is
/// unavailable and in the order columns of the first row.
pub fn render_csv(cfg: &RunConfig, reports: &[EstimatorReport], orders: &OrderColumns) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER.split(','))?;
    for (i, r) in reports.iter().enumerate() {
        let ord = |column: &Option<Vec<f64>>| -> String {
            match (i, column) {
                (0, _) | (_, None) => String::new(),
                (_, Some(v)) => full(v[i - 1]),
            }
        };
        w.write_record(&[
            cfg.example.to_string(),
            r.m.to_string(),
            r.n_steps.to_string(),
            r.phi_method.to_string(),
            opt_full(r.e_t),
            ord(&orders.e_t),
            opt_full(r.e_inf),
            ord(&orders.e_inf),
            opt_full(r.e_1),
            ord(&orders.e_1),
            full(r.est_u),
            ord(&orders.est_u),
            full(r.est_fb),
            ord(&orders.est_fb),
            full(r.zeta_u),
            ord(&orders.zeta_u),
            full(r.lower),
            full(r.upper),
            opt_full(r.ei_l),
            opt_full(r.ei_u),
        ])?;
    }
    w.flush()?;
    let bytes = w
        .into_inner()
        .map_err(|e| anyhow::anyhow!("finishing the csv failed: {e}"))?;
    Ok(String::from_utf8(bytes)?)
}

fn val_cell(x: Option<f64>) -> String {
    x.map(sci).unwrap_or_else(|| "--".into())
}

fn ord_cell(column: &Option<Vec<f64>>, i: usize) -> String {
    if i == 0 {
        return "--".into();
    }
    column
        .as_ref()
        .map(|v| format!("{:.4}", v[i - 1]))
        .unwrap_or_else(|| "--".into())
}

fn ei_cell(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.4}")).unwrap_or_else(|| "--".into())
}

/// Aligned text tables, five significant digits, sections per [`TableKind`].
pub fn render_text(cfg: &RunConfig, reports: &[EstimatorReport], orders: &OrderColumns) -> String {
    use std::fmt::Write as _;

    let mut out = String::new();
    let title = format!("example {} (M={}, phi={})", cfg.example, cfg.m, cfg.phi_method);
    let show = |kind: TableKind| cfg.table == TableKind::All || cfg.table == kind;
    let have_errors = !reports.is_empty() && reports.iter().all(|r| r.e_t.is_some());

    if show(TableKind::Errors) {
        if have_errors {
            writeln!(out, "{title}: errors").unwrap();
            writeln!(
                out,
                "{:>6}  {:>12} {:>8}  {:>12} {:>8}  {:>12} {:>8}",
                "N", "E_T", "order", "E_inf", "order", "E_1", "order"
            )
            .unwrap();
            for (i, r) in reports.iter().enumerate() {
                writeln!(
                    out,
                    "{:>6}  {:>12} {:>8}  {:>12} {:>8}  {:>12} {:>8}",
                    r.n_steps,
                    val_cell(r.e_t),
                    ord_cell(&orders.e_t, i),
                    val_cell(r.e_inf),
                    ord_cell(&orders.e_inf, i),
                    val_cell(r.e_1),
                    ord_cell(&orders.e_1, i)
                )
                .unwrap();
            }
            out.push('\n');
        } else {
            writeln!(out, "{title}: errors unavailable (no exact solution)").unwrap();
            out.push('\n');
        }
    }

    if show(TableKind::Estimators) {
        let est_name = if cfg.example >= 3 { "est_B" } else { "est_F" };
        writeln!(out, "{title}: estimators").unwrap();
        writeln!(
            out,
            "{:>6}  {:>12} {:>8}  {:>12} {:>8}  {:>12} {:>8}",
            "N", "est_U", "order", est_name, "order", "zeta_U", "order"
        )
        .unwrap();
        for (i, r) in reports.iter().enumerate() {
            writeln!(
                out,
                "{:>6}  {:>12} {:>8}  {:>12} {:>8}  {:>12} {:>8}",
                r.n_steps,
                sci(r.est_u),
                ord_cell(&orders.est_u, i),
                sci(r.est_fb),
                ord_cell(&orders.est_fb, i),
                sci(r.zeta_u),
                ord_cell(&orders.zeta_u, i)
            )
            .unwrap();
        }
        out.push('\n');
    }

    if show(TableKind::Effectivity) {
        writeln!(out, "{title}: bounds and effectivity").unwrap();
        writeln!(
            out,
            "{:>6}  {:>12}  {:>12}  {:>8}  {:>8}",
            "N", "lower", "upper", "ei_L", "ei_U"
        )
        .unwrap();
        for r in reports {
            writeln!(
                out,
                "{:>6}  {:>12}  {:>12}  {:>8}  {:>8}",
                r.n_steps,
                sci(r.lower),
                sci(r.upper),
                ei_cell(r.ei_l),
                ei_cell(r.ei_u)
            )
            .unwrap();
        }
        out.push('\n');
    }

    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orders_for_exact_halving_are_one() {
        let orders = convergence_order(&[8.0, 4.0, 2.0, 1.0], &[10, 20, 40, 80]).unwrap();
        for o in orders {
            assert!((o - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn orders_match_a_reference_pair() {
        let orders = convergence_order(&[4.2546e-3, 1.1009e-3], &[10, 20]).unwrap();
        assert_eq!(orders.len(), 1);
        assert!((orders[0] - 1.9504).abs() < 1e-4, "got {}", orders[0]);
    }

    #[test]
    fn constant_values_give_order_zero() {
        let orders = convergence_order(&[3.0, 3.0, 3.0], &[10, 20, 40]).unwrap();
        assert!(orders.iter().all(|&o| o.abs() < 1e-14));
    }

    #[test]
    fn orders_reject_bad_input() {
        assert!(convergence_order(&[1.0, 0.0], &[10, 20]).is_err());
        assert!(convergence_order(&[1.0, -2.0], &[10, 20]).is_err());
        assert!(convergence_order(&[1.0], &[10]).is_err());
        assert!(convergence_order(&[1.0, 2.0], &[10, 20, 40]).is_err());
    }

    #[test]
    fn defaults_follow_the_example() {
        let cfg = RunConfig::for_example(1);
        assert_eq!(cfg.m, 100);
        assert_eq!(cfg.steps, vec![10, 20, 40, 80, 160, 320]);
        assert_eq!(cfg.phi_method, PhiMethod::Spectral);
        assert_eq!(cfg.table, TableKind::All);
        assert!(cfg.validate().is_ok());

        let cfg = RunConfig::for_example(4);
        assert_eq!(cfg.m, 80);
        assert_eq!(cfg.steps, vec![10, 20, 40, 80]);
        assert_eq!(cfg.epsilon, 0.01);
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn validate_rejects_bad_configs() {
        let mut cfg = RunConfig::for_example(5);
        assert!(cfg.validate().is_err());
        cfg.example = 1;
        assert!(cfg.validate().is_ok());

        cfg.steps = vec![];
        assert!(cfg.validate().is_err());
        cfg.steps = vec![10, 10];
        assert!(cfg.validate().is_err());
        cfg.steps = vec![20, 10];
        assert!(cfg.validate().is_err());
        cfg.steps = vec![10, 20];
        assert!(cfg.validate().is_ok());

        cfg.m = 3;
        assert!(cfg.validate().is_err());
        cfg.m = 100;

        cfg.epsilon = 0.0;
        assert!(cfg.validate().is_err());
        cfg.epsilon = 0.01;

        cfg.fp_tol = -1.0;
        assert!(cfg.validate().is_err());
        cfg.fp_tol = 1e-10;

        cfg.krylov_dim = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn table_kinds_parse_and_print() {
        for (s, kind) in [
            ("errors", TableKind::Errors),
            ("estimators", TableKind::Estimators),
            ("effectivity", TableKind::Effectivity),
            ("all", TableKind::All),
        ] {
            assert_eq!(s.parse::<TableKind>().unwrap(), kind);
            assert_eq!(kind.to_string(), s);
        }
        assert!("Errors".parse::<TableKind>().is_err());
        assert!("csv".parse::<TableKind>().is_err());
    }

    #[test]
    fn sci_pads_the_exponent() {
        assert_eq!(sci(4.2546e-3), "4.2546e-03");
        assert_eq!(sci(0.0), "0.0000e+00");
        assert_eq!(sci(-1.5), "-1.5000e+00");
        assert_eq!(sci(12345.678), "1.2346e+04");
        assert_eq!(sci(9.97e-13), "9.9700e-13");
    }

    fn fake_report(n: usize, scale: f64) -> EstimatorReport {
        EstimatorReport {
            label: "fake".into(),
            m: 100,
            n_steps: n,
            phi_method: PhiMethod::Spectral,
            e_t: Some(1e-3 * scale),
            e_inf: Some(2e-3 * scale),
            e_1: Some(3e-3 * scale),
            est_u: 4e-3 * scale,
            est_fb: 5e-4 * scale,
            zeta_u: 6e-3 * scale,
            lower: 1e-3 * scale,
            upper: 4e-2 * scale,
            ei_l: Some(0.2),
            ei_u: Some(2.5),
        }
    }

    #[test]
    fn csv_has_the_fixed_header_and_empty_first_orders() {
        let cfg = RunConfig::for_example(1);
        let reports = vec![fake_report(10, 1.0), fake_report(20, 0.25)];
        let orders = order_columns(&reports, &[10, 20]);
        let csv = render_csv(&cfg, &reports, &orders).unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), CSV_HEADER);
        let first: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(first.len(), 20);
        assert_eq!(first[0], "1");
        assert_eq!(first[1], "100");
        assert_eq!(first[2], "10");
        assert_eq!(first[3], "spectral");
        assert_eq!(first[5], "", "first row has no order");
        let second: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(second[2], "20");
        assert!((second[5].parse::<f64>().unwrap() - 2.0).abs() < 1e-12);
        assert!(lines.next().is_none());
        assert!(csv.ends_with('\n'));
        assert!(!csv.contains('\r'));
    }

    #[test]
    fn missing_errors_leave_cells_empty_or_dashed() {
        let mut cfg = RunConfig::for_example(4);
        cfg.table = TableKind::All;
        let mut r = fake_report(10, 1.0);
        r.e_t = None;
        r.e_inf = None;
        r.e_1 = None;
        r.ei_l = None;
        r.ei_u = None;
        let reports = vec![r];
        let orders = order_columns(&reports, &[10]);
        let csv = render_csv(&cfg, &reports, &orders).unwrap();
        let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
        assert_eq!(row[4], "");
        assert_eq!(row[18], "");
        let text = render_text(&cfg, &reports, &orders);
        assert!(text.contains("errors unavailable"));
        assert!(text.contains("--"));
    }
}
