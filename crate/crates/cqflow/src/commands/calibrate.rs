use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use cqflow_core::calibrate::{calibrate_with, CalibrationConfig, CalibrationReport, RhoKind};
use cqflow_core::measures::MixingMeasure;

use super::Context;
use crate::error::{CliError, Result};
use crate::io::{num, read_series, BadRow, Series, Table};
use crate::synthetic::{generate, write_records};

#[derive(Debug, Clone)]
pub struct CalibrateOutput {
    pub report: CalibrationReport,
    pub discharge_rejected: Vec<BadRow>,
    pub quality_rejected: Vec<BadRow>,
    pub files: Vec<PathBuf>,
}

fn ingest(path: &Path, ctx: &Context) -> Result<Series> {
    let s = read_series(path, ctx.cfg.run.epoch)?;
    for b in &s.rejected {
        eprintln!("{}:{}: rejected row: {}", path.display(), b.line, b.reason);
    }
    Ok(s)
}

pub fn cmd_calibrate(ctx: &Context) -> Result<CalibrateOutput> {
    let c = &ctx.cfg.calibrate;
    let mut files = Vec::new();
    let (dpath, qpath) = if c.synthetic {
        let d = ctx.path("synthetic_discharge.csv")?;
        let q = ctx.path("synthetic_quality.csv")?;
        let m = &ctx.cfg.model;
        let records = generate(&m.discharge, &m.memory()?, &m.seasonal(), &ctx.cfg.synthetic, ctx.cfg.run.seed)?;
        write_records(&records, ctx.cfg.run.epoch, &d, &q)?;
        files.push(d.clone());
        files.push(q.clone());
        (d, q)
    } else {
        match (&c.discharge_csv, &c.quality_csv) {
            (Some(d), Some(q)) => (d.clone(), q.clone()),
            _ => {
                return Err(CliError::Usage(
                    "calibrate needs discharge_csv and quality_csv under [calibrate], or synthetic = true".into(),
                ))
            }
        }
    };

    let discharge = ingest(&dpath, ctx)?;
    let quality = ingest(&qpath, ctx)?;
    if quality.points.is_empty() {
        return Err(CliError::Usage(format!("{} holds no usable water-quality rows", qpath.display())));
    }
    if discharge.points.is_empty() {
        return Err(CliError::Usage(format!("{} holds no usable discharge rows", dpath.display())));
    }
    let days: BTreeSet<i64> = discharge.points.iter().map(|p| p.0.floor() as i64).collect();
    if !quality.points.iter().any(|p| days.contains(&(p.0.floor() as i64))) {
        return Err(CliError::validation(format!(
            "no sampling date in {} falls on a day covered by {}",
            qpath.display(),
            dpath.display()
        )));
    }

    let mut cc = CalibrationConfig::new(c.n_int);
    cc.discharge_max_lag = c.max_lag;
    cc.fit.starts = c.starts;
    cc.fit.max_evals = c.max_evals;
    cc.fit.seed = ctx.cfg.run.seed;
    cc.identify.fit = cc.fit.clone();
    let report = calibrate_with(&discharge.points, &quality.points, c.rho, &cc, |ps, f| ctx.map(ps, |&p| f(p)))?;

    let mut rej = Table::create(
        &ctx.path("rejected_rows.csv")?,
        "Input rows skipped during ingestion.",
        &[("file", "-"), ("line", "-"), ("reason", "-")],
    )?;
    for (p, s) in [(&dpath, &discharge), (&qpath, &quality)] {
        for b in &s.rejected {
            rej.row([p.display().to_string(), b.line.to_string(), b.reason.clone()])?;
        }
    }
    files.push(rej.finish()?);

    let text = report_text(&report, &dpath, &qpath, &discharge, &quality);
    let rp = ctx.path("calibration_report.txt")?;
    std::fs::write(&rp, text).map_err(|e| CliError::io(&rp, e))?;
    files.push(rp);
    files.push(write_tables(ctx, &report)?);

    Ok(CalibrateOutput { report, discharge_rejected: discharge.rejected, quality_rejected: quality.rejected, files })
}

fn rho_params(m: &MixingMeasure) -> (Option<f64>, f64) {
    match *m {
        MixingMeasure::Gamma { shape, scale } => (Some(shape), scale),
        MixingMeasure::Dirac { atom } => (None, atom),
        MixingMeasure::Empirical { .. } => (None, m.mean()),
    }
}

/// Report in the same `[section]` / `key = value` form as the run
/// configuration.
fn report_text(r: &CalibrationReport, dpath: &Path, qpath: &Path, d: &Series, q: &Series) -> String {
    let mut s = String::new();
    let mem = &r.memory;
    let (zeta, xi) = rho_params(&mem.model.rho);
    let _ = writeln!(s, "[inputs]");
    let _ = writeln!(s, "discharge_csv = {}", dpath.display());
    let _ = writeln!(s, "discharge_rows = {}", d.points.len());
    let _ = writeln!(s, "discharge_rejected = {}", d.rejected.len());
    let _ = writeln!(s, "quality_csv = {}", qpath.display());
    let _ = writeln!(s, "quality_rows = {}", q.points.len());
    let _ = writeln!(s, "quality_rejected = {}", q.rejected.len());
    let _ = writeln!(s, "unmatched_samples = {}", r.unmatched_samples);
    let _ = writeln!(s, "\n[discharge]");
    let _ = writeln!(s, "alpha = {}", num(r.moments.model.alpha));
    let _ = writeln!(s, "beta = {}", num(r.moments.model.beta));
    let _ = writeln!(s, "a1 = {}", num(r.moments.model.a1));
    let _ = writeln!(s, "a2 = {}", num(r.moments.model.a2));
    let _ = writeln!(s, "a3 = {}", num(r.moments.model.a3));
    let _ = writeln!(s, "autocorrelation_objective = {}", num(r.autocorrelation.objective));
    let _ = writeln!(s, "autocorrelation_boundary = {}", r.autocorrelation.boundary);
    let _ = writeln!(s, "moment_objective = {}", num(r.moments.objective));
    let _ = writeln!(s, "moment_converged = {}", r.moments.converged);
    let _ = writeln!(s, "moment_poor_fit = {}", r.moments.poor_fit);
    let _ = writeln!(s, "\n[seasonal]");
    let sm = &r.seasonal.model;
    let _ = writeln!(s, "exp_a0 = {}", num(sm.a0.exp()));
    let _ = writeln!(s, "a1 = {}", num(sm.a1));
    let _ = writeln!(s, "a2 = {}", num(sm.a2));
    let _ = writeln!(s, "b1 = {}", num(sm.b1));
    let _ = writeln!(s, "b2 = {}", num(sm.b2));
    let _ = writeln!(s, "rms_log_residual = {}", num(r.seasonal.rms));
    let _ = writeln!(s, "nonpositive_samples = {}", r.seasonal.rejected.len());
    let _ = writeln!(s, "\n[memory]");
    let _ = writeln!(s, "rho = {}", if mem.kind == RhoKind::Gamma { "gamma" } else { "dirac" });
    if let Some(z) = mem.zeta_n {
        let _ = writeln!(s, "zeta_n = {}", num(z));
    }
    let _ = writeln!(s, "xi_n = {}", num(mem.xi_n));
    if let Some(z) = zeta {
        let _ = writeln!(s, "zeta = {}", num(z));
    }
    let _ = writeln!(s, "xi = {}", num(xi));
    let _ = writeln!(s, "sigma = {}", num(mem.model.sigma));
    let _ = writeln!(s, "a = {}", num(mem.model.a));
    let _ = writeln!(s, "b = {}", num(mem.model.b));
    let _ = writeln!(s, "w = {}", num(mem.w));
    let _ = writeln!(s, "nominal_objective = {}", num(mem.nominal_objective));
    let _ = writeln!(s, "lambda0_gap = {}", num(mem.lambda0_gap));
    let _ = writeln!(s, "candidates = {}", mem.candidates);
    let _ = writeln!(s, "moved_from_nominal = {}", mem.improved);
    s
}

fn write_tables(ctx: &Context, r: &CalibrationReport) -> Result<PathBuf> {
    let mut t = Table::create(
        &ctx.path("calibration_tables.csv")?,
        "Identified parameters and empirical versus theoretical statistics (Tables 4-7 layout).\nunit applies to the identified, empirical and theoretical cells of its row.",
        &[
            ("table", "-"),
            ("quantity", "-"),
            ("unit", "-"),
            ("identified", "row unit"),
            ("empirical", "row unit"),
            ("theoretical", "row unit"),
            ("relative_error", "-"),
        ],
    )?;
    let blank = String::new;
    let d = &r.moments.model;
    for (name, unit, v) in [
        ("alpha", "-", d.alpha),
        ("beta", "1/day", d.beta),
        ("a1", "m^(3 a3)/s^(a3)/day", d.a1),
        ("a2", "s/m^3", d.a2),
        ("a3", "-", d.a3),
    ] {
        t.row(["4".into(), name.into(), unit.into(), num(v), blank(), blank(), blank()])?;
    }
    let sm = &r.seasonal.model;
    let mem = &r.memory;
    let (zeta, xi) = rho_params(&mem.model.rho);
    let rows: [(&str, &str, Option<f64>); 12] = [
        ("exp_a0", "mg/L", Some(sm.a0.exp())),
        ("a1", "-", Some(sm.a1)),
        ("a2", "-", Some(sm.a2)),
        ("b1", "-", Some(sm.b1)),
        ("b2", "-", Some(sm.b2)),
        ("zeta_n", "-", mem.zeta_n),
        ("xi_n", "1/day", Some(mem.xi_n)),
        ("zeta", "-", zeta),
        ("xi", "1/day", Some(xi)),
        ("sigma", "-", Some(mem.model.sigma)),
        ("a", "-", Some(mem.model.a)),
        ("b", "s/m^3", Some(mem.model.b)),
    ];
    for (name, unit, v) in rows {
        if let Some(v) = v {
            t.row(["5".into(), name.into(), unit.into(), num(v), blank(), blank(), blank()])?;
        }
    }
    for (row, unit) in r.discharge_table.iter().zip(["m^3/s", "m^6/s^2", "-", "-"]) {
        t.row(["6".into(), row.name.clone(), unit.into(), blank(), num(row.empirical), num(row.theoretical), num(row.relative_error())])?;
    }
    for (row, unit) in r.memory_table.iter().zip(["-", "-", "m^3/s"]) {
        t.row(["7".into(), row.name.clone(), unit.into(), blank(), num(row.empirical), num(row.theoretical), num(row.relative_error())])?;
    }
    t.finish()
}
