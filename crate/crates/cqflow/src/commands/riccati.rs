use std::path::PathBuf;

use cqflow_core::memory::MemoryModel;
use cqflow_core::riccati::{mgf_crosscheck_with, MgfComparison, MonteCarloOptions, RiccatiOptions};

use super::Context;
use crate::error::Result;
use crate::io::{num, opt, Table};

#[derive(Debug, Clone)]
pub struct RiccatiOutput {
    pub configured: MgfComparison,
    /// Same check with `σ = b = 0`, where the exact value is `e^{ϖ a}`.
    pub deterministic: Option<MgfComparison>,
    pub files: Vec<PathBuf>,
}

pub fn cmd_riccati_check(ctx: &Context) -> Result<RiccatiOutput> {
    let r = &ctx.cfg.riccati;
    let dis = ctx.cfg.model.discharge;
    let mem = ctx.cfg.model.memory()?;
    let ode = RiccatiOptions { dt_ode: r.dt_ode, ..RiccatiOptions::default() };
    let mc = MonteCarloOptions {
        paths: r.mc_paths,
        dt: r.mc_dt,
        burn_in: r.mc_burn_in,
        span: r.mc_span,
        stride: r.mc_stride,
        seed: ctx.cfg.run.seed,
        max_steps: r.max_steps,
    };
    let run = |m: &MemoryModel| {
        mgf_crosscheck_with(m, &dis, r.n, &r.varpis, &ode, &mc, |n, f| ctx.map_range(n as u64, |p| f(p)))
    };
    let configured = run(&mem)?;
    let deterministic = if r.deterministic_row && mem.a > 0.0 {
        Some(run(&MemoryModel { b: 0.0, sigma: 0.0, ..mem.clone() })?)
    } else {
        None
    };

    let mut t = Table::create(
        &ctx.path("riccati_mgf.csv")?,
        "Moment-generating function E[exp(varpi M)] from the Riccati system and from Monte Carlo (Appendix A2 cross-check).\nthe deterministic model sets sigma = b = 0; its exact value is exp(varpi a).",
        &[
            ("model", "-"),
            ("varpi", "-"),
            ("riccati", "-"),
            ("monte_carlo", "-"),
            ("mc_standard_error", "-"),
            ("relative_difference", "-"),
            ("exact", "-"),
            ("paths", "-"),
        ],
    )?;
    for row in &configured.rows {
        t.row([
            "configured".to_string(),
            num(row.varpi),
            num(row.riccati),
            opt(row.monte_carlo),
            opt(row.mc_se),
            opt(row.relative_difference),
            String::new(),
            configured.paths.to_string(),
        ])?;
    }
    if let Some(d) = &deterministic {
        for row in &d.rows {
            t.row([
                "deterministic".to_string(),
                num(row.varpi),
                num(row.riccati),
                opt(row.monte_carlo),
                opt(row.mc_se),
                opt(row.relative_difference),
                num((row.varpi * mem.a).exp()),
                d.paths.to_string(),
            ])?;
        }
    }
    let files = vec![t.finish()?];
    Ok(RiccatiOutput { configured, deterministic, files })
}
