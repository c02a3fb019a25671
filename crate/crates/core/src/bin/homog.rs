use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use homog_core::cell::{bundle, CellData, CellOptions};
use homog_core::domain::triangulate;
use homog_core::fem::{assemble, solve, Coefficients, SolveOptions};
use homog_core::harness::{run_plan_with, verify_all, Config};
use homog_core::{Error, Result};

#[derive(Parser)]
#[command(name = "homog", version, about = "Periodic homogenization: correctors, effective tensors and rate studies")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Rows solved concurrently.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Comma-separated eps values, e.g. 0.125,0.0625,0.03125.
    #[arg(long, global = true, value_delimiter = ',')]
    eps_list: Option<Vec<f64>>,
    /// Coefficient preset (identity, laminate, smooth-trig, random-trig, coupled).
    #[arg(long, global = true)]
    preset: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the cell problems and write the cell data bundle.
    Cell,
    /// Print the homogenized tensors.
    Homogenize,
    /// Solve one boundary value problem and write the nodal solution.
    Solve {
        /// Oscillation scale; 0 solves the homogenized problem.
        #[arg(long, default_value_t = 0.0)]
        eps: f64,
        /// Mesh size.
        #[arg(long, default_value_t = 1.0 / 128.0)]
        h: f64,
    },
    /// Run the eps sweep and fit the convergence rates.
    Rates,
    /// Run the verification suite.
    Verify,
}

fn load_config(c: &Common) -> Result<Config> {
    let mut cfg = match &c.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(w) = c.workers {
        cfg.plan.workers = w;
    }
    if let Some(s) = c.seed {
        cfg.plan.seed = s;
    }
    if let Some(e) = &c.eps_list {
        cfg.plan.eps = e.clone();
    }
    if let Some(p) = &c.preset {
        cfg.plan.preset = p.clone();
    }
    Ok(cfg)
}

fn cell_data(cfg: &Config) -> Result<CellData> {
    let c = cfg.coefficients()?;
    CellData::compute(&c, cfg.cell_grid(c.dim())?, CellOptions::default())
}

fn run(cli: Cli) -> Result<bool> {
    let cfg = load_config(&cli.common)?;
    let out = &cli.common.out;
    match cli.command {
        Command::Cell => {
            let cell = cell_data(&cfg)?;
            std::fs::create_dir_all(out)?;
            let path = out.join("cell.json");
            bundle::export_json(&cell, &path)?;
            println!("{}", serde_json::to_string_pretty(&cell.diagnostics)?);
            eprintln!("wrote {}", path.display());
        }
        Command::Homogenize => {
            let cell = cell_data(&cfg)?;
            let v = serde_json::json!({
                "preset": cell.name,
                "layout": cell.layout,
                "lambda": cell.lambda,
                "hats": cell.hats,
                "hats_adjoint": cell.hats_star,
            });
            println!("{}", serde_json::to_string_pretty(&v)?);
        }
        Command::Solve { eps, h } => {
            let c = cfg.coefficients()?;
            let domain = cfg.plan.domain()?;
            let mesh = Arc::new(triangulate(&domain, h)?);
            let data = cfg.plan.problem(&domain, c.m(), eps)?;
            let cell;
            let coeffs = if eps > 0.0 {
                Coefficients::Periodic(&c)
            } else {
                cell = CellData::compute(&c, cfg.cell_grid(c.dim())?, CellOptions::default())?;
                Coefficients::Constant {
                    layout: c.layout,
                    values: &cell.hats,
                    lambda: c.lambda,
                }
            };
            let sys = assemble(coeffs, mesh, &data, false)?;
            for w in &sys.warnings {
                eprintln!("warning: {w}");
            }
            let (u, stats) = solve(
                &sys,
                SolveOptions {
                    tol: cfg.plan.solver_tol,
                    ..Default::default()
                },
            )?;
            std::fs::create_dir_all(out)?;
            let path = out.join("solution.csv");
            u.write_csv(&path)?;
            eprintln!(
                "{} nodes, {} iterations, residual {:.3e}; wrote {}",
                u.mesh.node_count(),
                stats.iterations,
                stats.residual,
                path.display()
            );
        }
        Command::Rates => {
            let report = run_plan_with(&cfg, &|msg| eprintln!("{msg}"))?;
            report.write(out)?;
            for s in &report.slopes {
                match &s.fit {
                    Some(f) => println!(
                        "{:<20} slope {:>7.4}  95% [{:.4}, {:.4}]  residual {:.2e}",
                        s.column, f.slope, f.interval[0], f.interval[1], f.residual
                    ),
                    None => println!("{:<20} {}", s.column, s.error.as_deref().unwrap_or("")),
                }
            }
            if let Some(r) = &report.richardson {
                println!(
                    "richardson at eps={}: pollution l2 {:.3}, h1_w {:.3}",
                    r.eps, r.pollution_l2, r.pollution_h1_w
                );
            }
            for f in &report.failures {
                eprintln!("row {} (eps = {}) failed: {}", f.id, f.eps, f.error);
            }
            eprintln!("wrote {}", out.join("rates.csv").display());
            return Ok(report.failures.is_empty());
        }
        Command::Verify => {
            let report = verify_all(&cfg);
            let json = report.to_json()?;
            std::fs::create_dir_all(out)?;
            std::fs::write(out.join("verify.json"), json.clone() + "\n")?;
            println!("{json}");
            for s in &report.stages {
                eprintln!("{:<16} {:?}", s.name, s.status);
            }
            return Ok(report.pass);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Config(_) | Error::Invalid(_) => 2,
                _ => 3,
            })
        }
    }
}
