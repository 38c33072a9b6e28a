//! Synthetic discharge and water-quality records drawn from the model
//! itself, for simulate-then-calibrate round trips.

use std::path::Path;

use chrono::NaiveDateTime;
use cqflow_core::discharge::DischargeModel;
use cqflow_core::memory::{CoupledConfig, CoupledSimulator, MemoryModel, SeasonalModel, YEAR};

use crate::config::{stride_of, SyntheticSection};
use crate::error::{CliError, Result};
use crate::io::{format_timestamp, num, timestamp_at, Table};

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticRecords {
    /// `(days since epoch, m³/s)`.
    pub discharge: Vec<(f64, f64)>,
    /// `(days since epoch, mg/L)`.
    pub quality: Vec<(f64, f64)>,
}

/// Simulates `(Q, C)` after burn-in and samples discharge every
/// `discharge_interval` days and concentration every `sample_interval`
/// days, offset by half a day so that samples fall mid-day.
pub fn generate(
    dis: &DischargeModel,
    mem: &MemoryModel,
    seasonal: &SeasonalModel,
    sy: &SyntheticSection,
    seed: u64,
) -> Result<SyntheticRecords> {
    let q_stride = stride_of(sy.discharge_interval, sy.dt).map_err(CliError::validation)? as u64;
    let c_stride = stride_of(sy.sample_interval, sy.dt).map_err(CliError::validation)? as u64;
    let offset = (0.5 / sy.dt).round() as u64;
    let cfg = CoupledConfig::new(sy.components, sy.dt);
    let mut sim = CoupledSimulator::new(dis, mem, &cfg, seed, 0)?;
    for _ in 0..(sy.burn_in_years * YEAR / sy.dt).round() as u64 {
        sim.step();
    }
    let steps = (sy.years * YEAR / sy.dt).round() as u64;
    let mut out = SyntheticRecords {
        discharge: Vec::with_capacity((steps / q_stride + 1) as usize),
        quality: Vec::with_capacity((steps / c_stride + 1) as usize),
    };
    out.discharge.push((0.0, sim.q()));
    for k in 1..=steps {
        let (q, m) = sim.step();
        let t = k as f64 * sy.dt;
        if k % q_stride == 0 {
            out.discharge.push((t, q));
        }
        if k >= offset && (k - offset) % c_stride == 0 {
            out.quality.push((t, seasonal.value(t) * m));
        }
    }
    Ok(out)
}

pub fn write_records(records: &SyntheticRecords, epoch: NaiveDateTime, discharge: &Path, quality: &Path) -> Result<()> {
    let mut t = Table::create(discharge, "Synthetic discharge record.", &[("timestamp", "ISO-8601"), ("discharge", "m^3/s")])?;
    for &(d, q) in &records.discharge {
        t.row([format_timestamp(timestamp_at(epoch, d)), num(q)])?;
    }
    t.finish()?;
    let mut t = Table::create(quality, "Synthetic water-quality samples.", &[("date", "ISO-8601"), ("concentration", "mg/L")])?;
    for &(d, c) in &records.quality {
        t.row([format_timestamp(timestamp_at(epoch, d)), num(c)])?;
    }
    t.finish()?;
    Ok(())
}
