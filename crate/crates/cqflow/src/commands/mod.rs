mod calibrate;
mod riccati;
mod simulate;
mod stats;
mod validate;

use std::path::{Path, PathBuf};

use rayon::prelude::*;

pub use calibrate::{cmd_calibrate, CalibrateOutput};
pub use riccati::{cmd_riccati_check, RiccatiOutput};
pub use simulate::{cmd_simulate, SimulateOutput};
pub use stats::{cmd_stats, StatsOutput, SweepRow};
pub use validate::{cmd_validate_cir, ValidateOutput};

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::io::ensure_dir;

/// Validated configuration, output directory and worker pool shared by the
/// commands.
pub struct Context {
    pub cfg: RunConfig,
    pool: rayon::ThreadPool,
}

impl Context {
    pub fn new(cfg: RunConfig) -> Result<Self> {
        cfg.validate()?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.run.threads)
            .build()
            .map_err(|e| CliError::validation(format!("thread pool: {e}")))?;
        Ok(Self { cfg, pool })
    }

    pub fn out_dir(&self) -> Result<&Path> {
        ensure_dir(&self.cfg.run.out)?;
        Ok(&self.cfg.run.out)
    }

    pub fn path(&self, name: &str) -> Result<PathBuf> {
        Ok(self.out_dir()?.join(name))
    }

    pub fn threads(&self) -> usize {
        self.pool.current_num_threads()
    }

    /// Maps `f` over `items` on the pool; results keep the input order, so
    /// the outcome does not depend on the number of threads.
    pub fn map<T, R, F>(&self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync,
    {
        self.pool.install(|| items.par_iter().map(&f).collect())
    }

    pub fn map_range<R, F>(&self, n: u64, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(u64) -> R + Sync,
    {
        self.pool.install(|| (0..n).into_par_iter().map(&f).collect())
    }
}
