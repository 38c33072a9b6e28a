use std::path::PathBuf;

use cqflow_core::ig::{
    convergence_rates, finish_validation, simulate_validation_block, StepCoefficients, ValidationAccumulator,
    ValidationConfig, ValidationReport,
};
use cqflow_core::Error as CoreError;

use super::Context;
use crate::error::{CliError, Result};
use crate::io::{num, opt, Table};

#[derive(Debug, Clone)]
pub struct ValidateOutput {
    pub reports: Vec<ValidationReport>,
    pub rates: Vec<Option<f64>>,
    pub files: Vec<PathBuf>,
}

fn experiment(ctx: &Context, case: cqflow_core::ig::ValidationCase, dt: f64) -> ValidationConfig {
    let v = &ctx.cfg.validate;
    ValidationConfig {
        horizon: v.horizon,
        report_dt: v.report_dt,
        hit_cap: v.hit_cap,
        ..ValidationConfig::new(case, dt, v.paths, ctx.cfg.run.seed)
    }
}

/// Working memory of one experiment in MiB: per-block accumulators held
/// concurrently plus the merged one.
fn memory_estimate_mb(ctx: &Context, cfg: &ValidationConfig) -> f64 {
    let points = (cfg.horizon / cfg.report_dt.max(cfg.dt)).round() + 1.0;
    let per_acc = points * 2.0 * 16.0 + 64.0;
    let blocks = (cfg.n_paths as f64 / ctx.cfg.validate.block as f64).ceil();
    let threads = ctx.threads().max(1) as f64;
    let live = blocks.min(threads * 4.0) + blocks + 1.0;
    let sample = ctx.cfg.validate.sample_paths as f64 * (cfg.horizon / ctx.cfg.validate.sample_dt + 1.0) * 8.0;
    (live * per_acc + sample) / (1024.0 * 1024.0)
}

pub fn cmd_validate_cir(ctx: &Context) -> Result<ValidateOutput> {
    let v = &ctx.cfg.validate;
    if v.cases.is_empty() {
        return Err(CliError::Usage(
            "no validation cases configured; set `cases = A, B, C` under [validate]".into(),
        ));
    }
    let mut experiments = Vec::new();
    for &case in &v.cases {
        for &dt in &v.dts {
            let e = experiment(ctx, case, dt);
            let need = memory_estimate_mb(ctx, &e);
            if need > v.max_memory_mb {
                return Err(CliError::validation(format!(
                    "case {} dt {dt}: requires about {need:.1} MiB, budget is {} MiB",
                    case.label(),
                    v.max_memory_mb
                )));
            }
            e.validate().map_err(|err| match err {
                CoreError::Constraint(m) => {
                    CliError::validation(format!("case {} dt {dt}: {m} (memory estimate {need:.1} MiB)", case.label()))
                }
                other => other.into(),
            })?;
            experiments.push(e);
        }
    }

    let mut reports = Vec::with_capacity(experiments.len());
    for e in &experiments {
        let blocks: Vec<(u64, u64)> =
            (0..e.n_paths).step_by(v.block as usize).map(|s| (s, (s + v.block).min(e.n_paths))).collect();
        let parts = ctx.map(&blocks, |&(s, t)| simulate_validation_block(e, s, t));
        let mut acc = ValidationAccumulator::new(parts.first().map_or(0, |p| p.as_ref().map_or(0, |a| a.sum.len())));
        for p in parts {
            acc.merge(&p?);
        }
        reports.push(finish_validation(e, &acc)?);
    }
    let rates = convergence_rates(&reports);

    let mut files = Vec::new();
    let mut t = Table::create(
        &ctx.path("tables_1_2_3.csv")?,
        "Errors of the inverse-Gaussian scheme against exact moments and hitting time (Tables 1-3).\nconvergence_rate = log10(error at 10 dt / error at dt); error is the hitting-time error in case C, the variance error otherwise.",
        &[
            ("case", "-"),
            ("dt", "time"),
            ("n_paths", "-"),
            ("mean_lsq_error", "state"),
            ("var_lsq_error", "state^2"),
            ("hit_time_error", "time"),
            ("convergence_rate", "-"),
        ],
    )?;
    for (r, rate) in reports.iter().zip(&rates) {
        t.row([
            r.case.label().to_string(),
            num(r.dt),
            r.n_paths.to_string(),
            num(r.mean_lsq_error),
            num(r.var_lsq_error),
            opt(r.hit_time_error),
            opt(*rate),
        ])?;
    }
    files.push(t.finish()?);

    let mut t = Table::create(
        &ctx.path("hitting_time.csv")?,
        "Mean first hitting time of zero in case C (Table 3).",
        &[
            ("dt", "time"),
            ("n_paths", "-"),
            ("computed", "time"),
            ("standard_error", "time"),
            ("exact", "time"),
            ("error", "time"),
            ("unhit_paths", "-"),
        ],
    )?;
    for r in reports.iter().filter(|r| r.hit_time_exact.is_some()) {
        t.row([
            num(r.dt),
            r.n_paths.to_string(),
            opt(r.hit_time_mean),
            opt(r.hit_time_se),
            opt(r.hit_time_exact),
            opt(r.hit_time_error),
            r.unhit.to_string(),
        ])?;
    }
    files.push(t.finish()?);

    for r in &reports {
        let name = format!("moments_case_{}_dt_{}.csv", r.case.label(), num(r.dt));
        let mut t = Table::create(
            &ctx.path(&name)?,
            &format!("Computed and exact mean and variance trajectories, case {} (Fig. 2).", r.case.label()),
            &[("t", "time"), ("mean", "state"), ("variance", "state^2"), ("exact_mean", "state"), ("exact_variance", "state^2")],
        )?;
        for k in 0..r.times.len() {
            t.row([num(r.times[k]), num(r.mean[k]), num(r.variance[k]), num(r.exact_mean[k]), num(r.exact_variance[k])])?;
        }
        files.push(t.finish()?);
    }

    for &case in &v.cases {
        files.push(write_sample_paths(ctx, case)?);
    }
    Ok(ValidateOutput { reports, rates, files })
}

fn write_sample_paths(ctx: &Context, case: cqflow_core::ig::ValidationCase) -> Result<PathBuf> {
    let v = &ctx.cfg.validate;
    let e = experiment(ctx, case, v.sample_dt);
    let p = case.params();
    let coef = StepCoefficients::new(p.rate, v.sample_dt);
    let steps = (v.horizon / v.sample_dt).round() as usize;
    let paths: Vec<Vec<f64>> = ctx.map_range(v.sample_paths, |i| {
        let mut rng = e.path_stream(i);
        let mut x = p.x0;
        let mut out = Vec::with_capacity(steps + 1);
        out.push(x);
        for _ in 0..steps {
            x = coef.step(x, p.level, p.noise, &mut rng);
            out.push(x);
        }
        out
    });
    let mut cols: Vec<(String, &str)> = vec![("t".into(), "time")];
    cols.extend((0..paths.len()).map(|i| (format!("path_{i}"), "state")));
    let refs: Vec<(&str, &str)> = cols.iter().map(|(n, u)| (n.as_str(), *u)).collect();
    let mut t = Table::create(
        &ctx.path(&format!("paths_case_{}.csv", case.label()))?,
        &format!("Sample paths of case {} at dt = {} (Fig. 1).", case.label(), v.sample_dt),
        &refs,
    )?;
    for k in 0..=steps {
        let mut row = vec![num(k as f64 * v.sample_dt)];
        row.extend(paths.iter().map(|p| num(p[k])));
        t.row(row)?;
    }
    t.finish()
}
