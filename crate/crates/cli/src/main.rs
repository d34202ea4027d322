//! Command-line harness: single runs, convergence studies, geometry checks.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cutfem_core::harness::{self, Norm, RunConfig};
use cutfem_core::stepper::Stepper;
use cutfem_core::{vtk, Result};

#[derive(Parser)]
#[command(
    name = "cutfem",
    about = "Unfitted isoparametric finite elements for convection-diffusion on moving domains"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One run at the lowest configured refinement levels, with per-step CSV
    /// (and optional VTK) output.
    Solve {
        /// Configuration file (key = value format; see dump-config).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Inline overrides, e.g. --set k=3 --set lt=2
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Full (Lx, Lt) refinement grid with EOC tables written as CSV.
    Converge {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Deformation/quadrature diagnostics on the static circle.
    Geomcheck {
        /// Geometry orders to test.
        #[arg(long, value_delimiter = ',', default_values_t = vec![2usize, 3])]
        orders: Vec<usize>,
        /// Base mesh subdivisions.
        #[arg(long, default_value_t = 8)]
        nx0: usize,
        /// Number of refinement levels.
        #[arg(long, default_value_t = 3)]
        levels: usize,
    },
    /// Print the default configuration with inline documentation.
    DumpConfig,
}

fn load_config(path: &Option<PathBuf>, overrides: &[String]) -> Result<RunConfig> {
    let mut cfg = match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    for item in overrides {
        let (key, value) = item.split_once('=').ok_or_else(|| {
            cutfem_core::Error::Config(format!("override '{item}' is not KEY=VALUE"))
        })?;
        cfg.set(key.trim(), value.trim())?;
    }
    Ok(cfg)
}

fn cmd_solve(cfg: &RunConfig) -> Result<bool> {
    let (lx, lt) = (cfg.lx.0, cfg.lt.0);
    let stepper = Stepper::new(cfg.stepper_config(lx, lt)?)?;
    println!(
        "solve: problem={} k={} q={} r={} lx={lx} lt={lt} steps={} delta={:.3e}",
        cfg.problem,
        cfg.k,
        cfg.q,
        cfg.r,
        stepper.cfg.n_steps,
        stepper.delta()
    );
    let mut state = stepper.startup()?;
    if cfg.write_vtk {
        std::fs::create_dir_all(&cfg.out_dir)?;
    }
    while state.n < stepper.cfg.n_steps {
        stepper.advance(&mut state)?;
        let d = state.diagnostics.last().unwrap();
        println!(
            "  n={:<4} t={:<8.4} dofs={:<6} K={:<3} gamma={:<6.3} l2={:.3e} h1={:.3e}",
            d.n, d.t, d.dofs, d.k_actual, d.gamma, d.l2_err, d.h1_err
        );
        if cfg.write_vtk {
            let path = cfg.out_dir.join(format!("step_{:04}.vtk", state.n));
            let mut f = std::fs::File::create(path)?;
            vtk::write_state(
                &stepper.cfg.mesh,
                &state.level.theta,
                &[("u", &state.history[0]), ("phi", &state.level.slice.phi_h)],
                Some(&state.level.active.elem_class),
                cfg.q > 1,
                &mut f,
            )?;
        }
    }
    println!(
        "final norms: Linf(L2) = {:.6e}, L2(H1) = {:.6e}",
        state.norms.linf_l2,
        state.norms.l2h1()
    );
    if cfg.write_csv {
        std::fs::create_dir_all(&cfg.out_dir)?;
        let path = cfg.out_dir.join("steps.csv");
        harness::write_step_csv(&state.diagnostics, &mut std::fs::File::create(&path)?)?;
        println!("per-step log: {}", path.display());
    }
    Ok(true)
}

fn cmd_converge(cfg: &RunConfig) -> Result<bool> {
    println!(
        "converge: problem={} k={} q={} r={} lx={}..{} lt={}..{} form={:?}",
        cfg.problem, cfg.k, cfg.q, cfg.r, cfg.lx.0, cfg.lx.1, cfg.lt.0, cfg.lt.1, cfg.form
    );
    let tables = harness::run_convergence(cfg)?;
    for (name, t) in [("Linf(L2)", &tables.linf_l2), ("L2(H1)", &tables.l2h1)] {
        println!("{name} errors (rows Lx, cols Lt):");
        for (i, row) in t.iter().enumerate() {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.4e}")).collect();
            println!("  Lx={:<2} {}", tables.lx[i], cells.join("  "));
        }
    }
    if let (Some(sx), Some(st)) = (
        tables.spatial_eoc(Norm::LinfL2, 2),
        tables.temporal_eoc(Norm::LinfL2, 2),
    ) {
        println!("Linf(L2): spatial EOC = {sx:.3}, temporal EOC = {st:.3}");
    }
    if let (Some(sx), Some(st)) =
        (tables.spatial_eoc(Norm::L2H1, 2), tables.temporal_eoc(Norm::L2H1, 2))
    {
        println!("L2(H1):   spatial EOC = {sx:.3}, temporal EOC = {st:.3}");
    }
    if cfg.write_csv {
        let (p1, p2) = tables.write_csv(&cfg.out_dir)?;
        println!("tables: {} {}", p1.display(), p2.display());
    }
    for (lx, lt, e) in &tables.failures {
        println!("FAILED cell lx={lx} lt={lt}: {e}");
    }
    Ok(tables.failures.is_empty())
}

fn cmd_geomcheck(orders: &[usize], nx0: usize, levels: usize) -> Result<bool> {
    let mut ok = true;
    for &q in orders {
        let rep = harness::geomcheck(q, nx0, levels)?;
        let threshold = q as f64 + 0.5;
        let pass = rep.rate >= threshold;
        ok &= pass;
        let residuals: Vec<String> = rep.residuals.iter().map(|r| format!("{r:.3e}")).collect();
        println!(
            "q={q}: interface residuals [{}], rate {:.2} (>= {threshold}): {}",
            residuals.join(", "),
            rep.rate,
            if pass { "PASS" } else { "FAIL" }
        );
        println!(
            "      |Theta-id|/h^2 = {:?}, |DTheta-I|/h = {:?}",
            rep.disp_ratios
                .iter()
                .map(|v| (v * 1000.0).round() / 1000.0)
                .collect::<Vec<_>>(),
            rep.grad_ratios
                .iter()
                .map(|v| (v * 1000.0).round() / 1000.0)
                .collect::<Vec<_>>()
        );
    }
    Ok(ok)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Solve { config, overrides } => {
            load_config(config, overrides).and_then(|cfg| cmd_solve(&cfg))
        }
        Command::Converge { config, overrides } => {
            load_config(config, overrides).and_then(|cfg| cmd_converge(&cfg))
        }
        Command::Geomcheck { orders, nx0, levels } => cmd_geomcheck(orders, *nx0, *levels),
        Command::DumpConfig => {
            print!("{}", RunConfig::print_defaults());
            Ok(true)
        }
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("one or more checks failed");
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
