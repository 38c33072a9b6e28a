use std::path::PathBuf;

use cqflow_core::discharge::DischargeStats;
use cqflow_core::memory::{CoupledConfig, CoupledSimulator, RunningMoments, YEAR};
use cqflow_core::stats::{DischargeMoments, Histogram, IntegralGrid, MemoryStatistics, MIN_RESOLUTION};

use super::Context;
use crate::config::stride_of;
use crate::error::{CliError, Result};
use crate::io::{num, table_bytes, Table};

#[derive(Debug, Clone)]
pub struct SimulateOutput {
    pub steps: u64,
    pub q: RunningMoments,
    pub m: RunningMoments,
    pub c: RunningMoments,
    pub theoretical_mean: f64,
    pub theoretical_variance: f64,
    pub files: Vec<PathBuf>,
}

pub fn cmd_simulate(ctx: &Context) -> Result<SimulateOutput> {
    let s = &ctx.cfg.simulate;
    let dis = ctx.cfg.model.discharge;
    let mem = ctx.cfg.model.memory()?;
    let seasonal = ctx.cfg.model.seasonal();
    let steps = (s.years * YEAR / s.dt).round() as u64;
    let burn = (s.burn_in_years * YEAR / s.dt).round() as u64;
    let stride = stride_of(s.record_dt, s.dt).map_err(CliError::validation)? as u64;

    let rows = steps / stride + u64::from(steps > 0);
    let days = (steps as f64 * s.dt).ceil() as u64;
    let need_mb = (table_bytes(rows, 4) + table_bytes(days, 4)) / (1024.0 * 1024.0);
    if need_mb > s.max_output_mb {
        return Err(CliError::validation(format!(
            "path output would take about {need_mb:.0} MiB, above max_output_mb = {}; raise record_dt or the cap",
            s.max_output_mb
        )));
    }

    let q_mom = DischargeStats::of_model(&dis)?;
    let n_int = s.components.max(MIN_RESOLUTION);
    let grid = IntegralGrid::new(&dis.autocorrelation_measure()?, &mem.rho, n_int)?;
    let theory = MemoryStatistics::new(&mem, DischargeMoments { mean: q_mom.mean, variance: q_mom.variance }, &grid)?;

    let mut path = Table::create(
        &ctx.path("path.csv")?,
        "Sample path of discharge, memory process and concentration (Fig. 10).",
        &[("t", "day"), ("q", "m^3/s"), ("m", "-"), ("c", "mg/L")],
    )?;
    let mut daily = Table::create(
        &ctx.path("daily_loop.csv")?,
        "Daily averaged discharge and concentration for concentration-discharge loops (Fig. 11).",
        &[("day", "day"), ("q_mean", "m^3/s"), ("m_mean", "-"), ("c_mean", "mg/L")],
    )?;

    let mut hq = Histogram::new(s.bins, 0.0, s.q_max)?;
    let mut hm = Histogram::new(s.bins, 0.0, s.m_max)?;
    let mut hc = Histogram::new(s.bins, 0.0, s.c_max)?;
    let (mut mq, mut mm, mut mc) = (RunningMoments::default(), RunningMoments::default(), RunningMoments::default());

    let cfg = CoupledConfig::new(s.components, s.dt);
    if steps > 0 {
        let mut sim = CoupledSimulator::new(&dis, &mem, &cfg, ctx.cfg.run.seed, 0)?;
        for _ in 0..burn {
            sim.step();
        }
        path.row([num(0.0), num(sim.q()), num(sim.m()), num(seasonal.value(0.0) * sim.m())])?;
        let (mut day, mut n_day) = (0u64, 0u64);
        let mut sums = [0.0f64; 3];
        for k in 1..=steps {
            let (q, m) = sim.step();
            let t = k as f64 * s.dt;
            let c = seasonal.value(t) * m;
            if !(q >= 0.0 && m >= 0.0) || !q.is_finite() || !m.is_finite() {
                return Err(CliError::Numeric(format!("state left the nonnegative domain at t = {t} (q = {q}, m = {m})")));
            }
            for (h, mom, x) in [(&mut hq, &mut mq, q), (&mut hm, &mut mm, m), (&mut hc, &mut mc, c)] {
                h.add(x);
                mom.add(x);
            }
            if k % stride == 0 {
                path.row([num(t), num(q), num(m), num(c)])?;
            }
            // Step k covers (t - dt, t]; attribute it to the day holding its midpoint.
            let d = (t - 0.5 * s.dt).floor() as u64;
            if d != day && n_day > 0 {
                let n = n_day as f64;
                daily.row([day.to_string(), num(sums[0] / n), num(sums[1] / n), num(sums[2] / n)])?;
                sums = [0.0; 3];
                n_day = 0;
            }
            day = d;
            sums[0] += q;
            sums[1] += m;
            sums[2] += c;
            n_day += 1;
        }
        let per_day = (1.0 / s.dt).round() as u64;
        if n_day == per_day {
            let n = n_day as f64;
            daily.row([day.to_string(), num(sums[0] / n), num(sums[1] / n), num(sums[2] / n)])?;
        }
    }
    let mut files = vec![path.finish()?, daily.finish()?];

    let mut hist = Table::create(
        &ctx.path("histogram_pdf.csv")?,
        "Empirical probability densities of discharge, memory process and concentration (Figs. 6-7).\nunit of density is the inverse unit of the variable.",
        &[("variable", "-"), ("center", "variable unit"), ("density", "1/variable unit")],
    )?;
    if steps > 0 {
        for (name, h) in [("q", &hq), ("m", &hm), ("c", &hc)] {
            for (x, p) in h.density() {
                hist.row([name.to_string(), num(x), num(p)])?;
            }
        }
    }
    files.push(hist.finish()?);

    let mut st = Table::create(
        &ctx.path("statistics.csv")?,
        "Theoretical and computed average and variance of the memory process (Tables A1-A3 layout).",
        &[
            ("statistic", "-"),
            ("theoretical", "-"),
            ("computed", "-"),
            ("relative_error", "-"),
            ("dt", "day"),
            ("n", "-"),
            ("samples", "-"),
        ],
    )?;
    if steps > 0 {
        for (name, th, co) in [("average", theory.mean(), mm.mean()), ("variance", theory.variance(), mm.variance())] {
            st.row([
                name.to_string(),
                num(th),
                num(co),
                num(((co - th) / th).abs()),
                num(s.dt),
                s.components.to_string(),
                mm.n.to_string(),
            ])?;
        }
    }
    files.push(st.finish()?);

    let mut qs = Table::create(
        &ctx.path("discharge_statistics.csv")?,
        "Theoretical and computed average and variance of discharge along the sample path (Table 6 quantities).",
        &[("statistic", "-"), ("theoretical", "m^3/s or m^6/s^2"), ("computed", "m^3/s or m^6/s^2"), ("relative_error", "-")],
    )?;
    if steps > 0 {
        for (name, th, co) in [("average", q_mom.mean, mq.mean()), ("variance", q_mom.variance, mq.variance())] {
            qs.row([name.to_string(), num(th), num(co), num(((co - th) / th).abs())])?;
        }
    }
    files.push(qs.finish()?);

    Ok(SimulateOutput {
        steps,
        q: mq,
        m: mm,
        c: mc,
        theoretical_mean: theory.mean(),
        theoretical_variance: theory.variance(),
        files,
    })
}
