use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Parser;
use expmid::PhiMethod;
use expmid_cli::{run_suite, RunConfig, TableKind};

/// Exponential midpoint benchmarks: errors, a posteriori estimators and
/// effectivity indices for the built-in parabolic test problems.
#[derive(Parser, Debug)]
#[command(name = "expmid", version)]
struct Args {
    /// Benchmark problem: 1, 2, 3 or 4.
    #[arg(long)]
    example: u8,

    /// Spatial intervals M (default 100, example 4: 80).
    #[arg(long)]
    space: Option<usize>,

    /// Comma separated step counts, e.g. 10,20,40 (default 10,20,...,320,
    /// example 4: 10,20,40,80).
    #[arg(long, value_delimiter = ',')]
    steps: Option<Vec<usize>>,

    /// How phi functions are applied: spectral, dense or krylov.
    #[arg(long, default_value = "spectral")]
    phi_method: PhiMethod,

    /// Maximal Krylov subspace dimension.
    #[arg(long, default_value_t = 30)]
    krylov_dim: usize,

    /// Krylov stopping tolerance.
    #[arg(long, default_value_t = 1e-12)]
    krylov_tol: f64,

    /// Fixed point tolerance of the semilinear stage solve.
    #[arg(long, default_value_t = 1e-10)]
    fp_tol: f64,

    /// Fixed point iteration cap.
    #[arg(long, default_value_t = 100)]
    fp_max_iter: usize,

    /// Diffusion coefficient of example 4.
    #[arg(long, default_value_t = 0.01)]
    epsilon: f64,

    /// Which tables to print: errors, estimators, effectivity or all.
    #[arg(long, default_value = "all")]
    table: TableKind,

    /// Also write the full CSV table to this path.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> Result<()> {
    let args = Args::parse();
    let mut cfg = RunConfig::for_example(args.example);
    if let Some(m) = args.space {
        cfg.m = m;
    }
    if let Some(steps) = args.steps {
        cfg.steps = steps;
    }
    cfg.phi_method = args.phi_method;
    cfg.krylov_dim = args.krylov_dim;
    cfg.krylov_tol = args.krylov_tol;
    cfg.fp_tol = args.fp_tol;
    cfg.fp_max_iter = args.fp_max_iter;
    cfg.epsilon = args.epsilon;
    cfg.table = args.table;
    cfg.out = args.out;

    let suite = run_suite(&cfg)?;
    print!("{}", suite.text);
    if let Some(path) = &cfg.out {
        std::fs::write(path, suite.csv.as_bytes())
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}
