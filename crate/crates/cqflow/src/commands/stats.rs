use std::path::PathBuf;

use cqflow_core::discharge::q_cumulant;
use cqflow_core::measures::MixingMeasure;
use cqflow_core::memory::MemoryModel;
use cqflow_core::stats::{kl_misspecification, DischargeMoments, IntegralGrid, MemoryStatistics};

use super::Context;
use crate::error::Result;
use crate::io::{num, opt, Table};

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub delta: f64,
    pub peak: Option<f64>,
    /// Absent for a Dirac reversion law, whose scale perturbations are
    /// mutually singular.
    pub kl: Option<f64>,
    pub lambda0: f64,
    pub curve: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct StatsOutput {
    pub mean: f64,
    pub variance: f64,
    pub lambda0: f64,
    pub peak: Option<f64>,
    pub sweep: Vec<SweepRow>,
    pub files: Vec<PathBuf>,
}

fn lag_grid(h_max: f64, step: f64) -> Vec<f64> {
    let n = (h_max / step).round() as i64;
    (0..=n).map(|k| k as f64 * step).collect()
}

/// `ρ` with its scale multiplied by `1 + Δ`.
fn perturbed(model: &MemoryModel, delta: f64) -> Result<MemoryModel> {
    let rho = match model.rho {
        MixingMeasure::Gamma { shape, scale } => MixingMeasure::gamma(shape, scale * (1.0 + delta))?,
        MixingMeasure::Dirac { atom } => MixingMeasure::dirac(atom * (1.0 + delta))?,
        MixingMeasure::Empirical { ref atoms } => {
            MixingMeasure::empirical(atoms.iter().map(|a| a * (1.0 + delta)).collect())?
        }
    };
    Ok(MemoryModel { rho, ..model.clone() })
}

pub fn cmd_stats(ctx: &Context) -> Result<StatsOutput> {
    let st = &ctx.cfg.stats;
    let dis = ctx.cfg.model.discharge;
    let mem = ctx.cfg.model.memory()?;
    let q = DischargeMoments { mean: q_cumulant(1, &dis)?, variance: q_cumulant(2, &dis)? };
    let theta = dis.autocorrelation_measure()?;
    let build = |m: &MemoryModel| -> Result<MemoryStatistics> {
        let grid = IntegralGrid::new(&theta, &m.rho, st.n_int)?;
        Ok(MemoryStatistics::new(m, q, &grid)?)
    };
    let base = build(&mem)?;
    let lags = lag_grid(st.h_max, st.h_step);
    let lambda0 = base.lambda0();
    let norm = if st.normalize { lambda0 } else { 1.0 };
    let lambda_unit = if st.normalize { "-" } else { "m^3/s" };
    let mut files = Vec::new();

    let mut t = Table::create(
        &ctx.path("autocorrelation.csv")?,
        "Autocorrelation of the memory process (Fig. 8).",
        &[("h", "day"), ("autocorrelation", "-")],
    )?;
    for &h in &lags {
        t.row([num(h), num(base.autocorrelation(h)?)])?;
    }
    files.push(t.finish()?);

    let mut t = Table::create(
        &ctx.path("mutual_covariance.csv")?,
        if st.normalize {
            "Mutual covariance between discharge and memory process, normalized so that lambda(0) = 1 (Fig. 9)."
        } else {
            "Mutual covariance between discharge and memory process (Fig. 9)."
        },
        &[("h", "day"), ("lambda", lambda_unit)],
    )?;
    for &h in lags.iter().rev().filter(|&&h| h > 0.0) {
        t.row([num(-h), num(base.mutual_covariance(-h) / norm)])?;
    }
    for &h in &lags {
        t.row([num(h), num(base.mutual_covariance(h) / norm)])?;
    }
    files.push(t.finish()?);

    let peak = base.peak_lag(st.h_max, st.h_step, st.peak_tol);
    let mut t = Table::create(
        &ctx.path("peaks.csv")?,
        "Lag of the maximum of the mutual covariance over h >= 0 and the zero-lag covariance.",
        &[("peak_lag", "day"), ("lambda0", "m^3/s"), ("mean", "-"), ("variance", "-")],
    )?;
    t.row([opt(peak), num(lambda0), num(base.mean()), num(base.variance())])?;
    files.push(t.finish()?);

    let zeta = match mem.rho {
        MixingMeasure::Gamma { shape, .. } => Some(shape),
        _ => None,
    };
    let rows: Vec<Result<SweepRow>> = ctx.map(&st.deltas, |&delta| {
        let s = build(&perturbed(&mem, delta)?)?;
        let l0 = s.lambda0();
        let n = if st.normalize { l0 } else { 1.0 };
        Ok(SweepRow {
            delta,
            peak: s.peak_lag(st.h_max, st.h_step, st.peak_tol),
            kl: zeta.map(|z| kl_misspecification(z, delta)).transpose()?,
            lambda0: l0,
            curve: lags.iter().map(|&h| s.mutual_covariance(h) / n).collect(),
        })
    });
    let sweep: Vec<SweepRow> = rows.into_iter().collect::<Result<_>>()?;

    let mut t = Table::create(
        &ctx.path("delta_sweep.csv")?,
        "Peak location, divergence and zero-lag covariance under a scale misspecification of the reversion law (Table 8).",
        &[("delta", "-"), ("peak_lag", "day"), ("kl", "-"), ("lambda0", "m^3/s")],
    )?;
    for r in &sweep {
        t.row([num(r.delta), opt(r.peak), opt(r.kl), num(r.lambda0)])?;
    }
    files.push(t.finish()?);

    let mut t = Table::create(
        &ctx.path("delta_sweep_curves.csv")?,
        "Mutual covariance at h >= 0 for each misspecification (Fig. 12).",
        &[("delta", "-"), ("h", "day"), ("lambda", lambda_unit)],
    )?;
    for r in &sweep {
        for (&h, &v) in lags.iter().zip(&r.curve) {
            t.row([num(r.delta), num(h), num(v)])?;
        }
    }
    files.push(t.finish()?);

    Ok(StatsOutput { mean: base.mean(), variance: base.variance(), lambda0, peak, sweep, files })
}
