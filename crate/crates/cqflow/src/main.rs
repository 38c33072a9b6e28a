use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cqflow::commands::{cmd_calibrate, cmd_riccati_check, cmd_simulate, cmd_stats, cmd_validate_cir};
use cqflow::{Context, RawConfig, Result, RunConfig, Scale};

#[derive(Parser)]
#[command(name = "cqflow", version, about = "Concentration-discharge modelling with a superposed memory process")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convergence study of the CIR schemes on the three validation cases.
    ValidateCir(Common),
    /// Long coupled simulation of discharge, memory and concentration.
    Simulate(Common),
    /// Moments, autocorrelation and mutual covariance of the memory process.
    Stats(Common),
    /// Identify discharge and memory parameters from observed records.
    Calibrate(Common),
    /// Compare the Riccati moment-generating function with Monte Carlo.
    RiccatiCheck(Common),
}

#[derive(Args)]
struct Common {
    /// key = value configuration file with [section] headers.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides [run] seed.
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
    /// Overrides [run] out.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Use the full resolutions as defaults instead of the desk-scale ones.
    #[arg(long)]
    paper_scale: bool,
}

fn load(c: &Common) -> Result<RunConfig> {
    let scale = if c.paper_scale { Scale::Paper } else { Scale::Desk };
    let mut cfg = match &c.config {
        Some(p) => RunConfig::from_raw(&RawConfig::read(p)?, scale, p.parent())?,
        None => RunConfig::defaults(scale),
    };
    if let Some(s) = c.seed {
        cfg.run.seed = s;
    }
    if let Some(o) = &c.out {
        cfg.run.out = o.clone();
    }
    Ok(cfg)
}

fn print_files(files: &[PathBuf]) {
    for f in files {
        println!("wrote {}", f.display());
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::ValidateCir(c) => {
            let ctx = Context::new(load(&c)?)?;
            let out = cmd_validate_cir(&ctx)?;
            for r in &out.reports {
                println!(
                    "case {} dt {:e}: mean lsq {:.3e}, variance lsq {:.3e}, hitting-time error {}",
                    r.case.label(),
                    r.dt,
                    r.mean_lsq_error,
                    r.var_lsq_error,
                    r.hit_time_error.map_or("n/a".to_string(), |e| format!("{e:.3e}"))
                );
            }
            print_files(&out.files);
        }
        Command::Simulate(c) => {
            let ctx = Context::new(load(&c)?)?;
            let out = cmd_simulate(&ctx)?;
            println!(
                "{} steps: memory mean {:.5} (theory {:.5}), variance {:.5} (theory {:.5})",
                out.steps,
                out.m.mean(),
                out.theoretical_mean,
                out.m.variance(),
                out.theoretical_variance
            );
            print_files(&out.files);
        }
        Command::Stats(c) => {
            let ctx = Context::new(load(&c)?)?;
            let out = cmd_stats(&ctx)?;
            println!("mean {:.5}, variance {:.5}, lambda(0) {:.5} m^3/s", out.mean, out.variance, out.lambda0);
            match out.peak {
                Some(p) => println!("peak lag {p:.4} day"),
                None => println!("no interior peak within h_max"),
            }
            print_files(&out.files);
        }
        Command::Calibrate(c) => {
            let ctx = Context::new(load(&c)?)?;
            let out = cmd_calibrate(&ctx)?;
            let m = &out.report.memory.model;
            println!(
                "sigma {:.5e}, a {:.5e}, b {:.5e} s/m^3, rho mean {:.5e} 1/day",
                m.sigma,
                m.a,
                m.b,
                m.rho.mean()
            );
            if !out.discharge_rejected.is_empty() || !out.quality_rejected.is_empty() {
                println!(
                    "rejected rows: {} discharge, {} quality",
                    out.discharge_rejected.len(),
                    out.quality_rejected.len()
                );
            }
            print_files(&out.files);
        }
        Command::RiccatiCheck(c) => {
            let ctx = Context::new(load(&c)?)?;
            let out = cmd_riccati_check(&ctx)?;
            for r in &out.configured.rows {
                match r.relative_difference {
                    Some(d) => println!("varpi {:+.3}: riccati {:.6}, relative difference {:.3e}", r.varpi, r.riccati, d),
                    None => println!("varpi {:+.3}: riccati {:.6}", r.varpi, r.riccati),
                }
            }
            print_files(&out.files);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
