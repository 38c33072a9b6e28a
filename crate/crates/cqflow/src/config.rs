//! Run configuration.
//!
//! The file format is flat `key = value` lines grouped under `[section]`
//! headers. `#` starts a comment. Unknown sections, unknown keys and
//! repeated keys are errors, reported with their line number.
//!
//! ```text
//! [run]
//! seed = 7
//! [memory]
//! preset = tp
//! sigma = 1.2
//! ```

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::NaiveDateTime;
use cqflow_core::calibrate::RhoKind;
use cqflow_core::discharge::DischargeModel;
use cqflow_core::ig::ValidationCase;
use cqflow_core::measures::MixingMeasure;
use cqflow_core::memory::{MemoryModel, SeasonalModel, YEAR};

use crate::error::{CliError, Result};
use crate::io::parse_timestamp;

const SCHEMA: &[(&str, &[&str])] = &[
    ("run", &["seed", "out", "epoch", "threads"]),
    ("discharge", &["alpha", "beta", "a1", "a2", "a3"]),
    ("memory", &["preset", "a", "b", "sigma", "rho", "zeta", "xi"]),
    ("seasonal", &["exp_a0", "a1", "a2", "b1", "b2", "period"]),
    (
        "validate",
        &["cases", "dt", "paths", "horizon", "report_dt", "hit_cap", "block", "sample_paths", "sample_dt", "max_memory_mb"],
    ),
    (
        "simulate",
        &["components", "dt", "years", "burn_in_years", "record_dt", "bins", "q_max", "m_max", "c_max", "max_output_mb"],
    ),
    ("stats", &["n_int", "h_max", "h_step", "deltas", "normalize", "peak_tol"]),
    ("calibrate", &["discharge_csv", "quality_csv", "rho", "n_int", "starts", "max_evals", "max_lag", "synthetic"]),
    ("synthetic", &["years", "burn_in_years", "sample_interval", "discharge_interval", "components", "dt"]),
    (
        "riccati",
        &["n", "varpis", "dt_ode", "mc_paths", "mc_dt", "mc_burn_in", "mc_span", "mc_stride", "max_steps", "deterministic_row"],
    ),
];

#[derive(Debug, Clone, PartialEq)]
pub struct RawValue {
    pub value: String,
    pub line: usize,
}

/// Parsed but untyped configuration.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig {
    sections: BTreeMap<String, BTreeMap<String, RawValue>>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut sections: BTreeMap<String, BTreeMap<String, RawValue>> = BTreeMap::new();
        let mut current: Option<(String, &'static [&'static str])> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            if let Some(name) = body.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| bad(line, format!("malformed section header `{body}`")))?
                    .trim();
                let keys = SCHEMA
                    .iter()
                    .find(|(s, _)| *s == name)
                    .map(|(_, k)| *k)
                    .ok_or_else(|| bad(line, format!("unknown section [{name}]")))?;
                sections.entry(name.to_string()).or_default();
                current = Some((name.to_string(), keys));
                continue;
            }
            let (key, value) = body.split_once('=').ok_or_else(|| bad(line, format!("expected `key = value`, found `{body}`")))?;
            let (key, value) = (key.trim(), value.trim());
            let (section, keys) = current.as_ref().ok_or_else(|| bad(line, format!("key `{key}` outside any section")))?;
            if !keys.contains(&key) {
                return Err(bad(line, format!("unknown key `{key}` in [{section}]")));
            }
            let entries = sections.get_mut(section).expect("section registered at its header");
            if let Some(prev) = entries.get(key) {
                return Err(bad(line, format!("`{key}` already set on line {}", prev.line)));
            }
            entries.insert(key.to_string(), RawValue { value: value.to_string(), line });
        }
        Ok(Self { sections })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))
    }

    pub fn raw(&self, section: &str, key: &str) -> Option<&RawValue> {
        self.sections.get(section)?.get(key)
    }

    fn get<T>(&self, section: &str, key: &str) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        match self.raw(section, key) {
            None => Ok(None),
            Some(v) if v.value.is_empty() => Err(bad(v.line, format!("empty value for [{section}] {key}"))),
            Some(v) => v
                .value
                .parse()
                .map(Some)
                .map_err(|e| bad(v.line, format!("[{section}] {key} = `{}`: {e}", v.value))),
        }
    }

    fn set<T>(&self, section: &str, key: &str, slot: &mut T) -> Result<()>
    where
        T: FromStr,
        T::Err: Display,
    {
        if let Some(v) = self.get(section, key)? {
            *slot = v;
        }
        Ok(())
    }

    fn set_list<T>(&self, section: &str, key: &str, slot: &mut Vec<T>) -> Result<()>
    where
        T: FromStr,
        T::Err: Display,
    {
        let Some(v) = self.raw(section, key) else {
            return Ok(());
        };
        *slot = v
            .value
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|e| bad(v.line, format!("[{section}] {key}: `{s}`: {e}"))))
            .collect::<Result<_>>()?;
        Ok(())
    }

    fn set_count(&self, section: &str, key: &str, slot: &mut u64) -> Result<()> {
        if let Some(v) = self.raw(section, key) {
            if v.value.is_empty() {
                return Err(bad(v.line, format!("empty value for [{section}] {key}")));
            }
            *slot = parse_count(&v.value).map_err(|e| bad(v.line, format!("[{section}] {key}: {e}")))?;
        }
        Ok(())
    }
}

fn bad(line: usize, msg: impl Display) -> CliError {
    CliError::validation(format!("line {line}: {msg}"))
}

/// Nonnegative integer, also accepting exact scientific notation such as
/// `1e5`.
fn parse_count(s: &str) -> std::result::Result<u64, String> {
    if let Ok(v) = s.parse::<u64>() {
        return Ok(v);
    }
    let x: f64 = s.parse().map_err(|_| format!("`{s}` is not a count"))?;
    if x >= 0.0 && x.fract() == 0.0 && x < 2f64.powi(63) {
        Ok(x as u64)
    } else {
        Err(format!("`{s}` is not a count"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Desk,
    Paper,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Tn,
    Tp,
    Toc,
}

impl FromStr for Preset {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "tn" => Ok(Preset::Tn),
            "tp" => Ok(Preset::Tp),
            "toc" => Ok(Preset::Toc),
            other => Err(format!("unknown preset `{other}` (tn, tp or toc)")),
        }
    }
}

/// Identified parameters of one water-quality index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndexParams {
    pub exp_a0: f64,
    pub a1: f64,
    pub a2: f64,
    pub b1: f64,
    pub b2: f64,
    pub rho: RhoKind,
    pub zeta: f64,
    pub xi: f64,
    pub sigma: f64,
    pub a: f64,
    pub b: f64,
}

impl Preset {
    pub fn params(self) -> IndexParams {
        match self {
            Preset::Tn => IndexParams {
                exp_a0: 0.5975,
                a1: 0.1200,
                a2: 0.07878,
                b1: 1.071,
                b2: 0.6825,
                rho: RhoKind::Gamma,
                zeta: 0.5355,
                xi: 0.3482,
                sigma: 0.5412,
                a: 0.3844,
                b: 0.01684,
            },
            Preset::Tp => IndexParams {
                exp_a0: 0.03432,
                a1: -0.1783,
                a2: 0.09344,
                b1: 1.362,
                b2: 0.5727,
                rho: RhoKind::Dirac,
                zeta: f64::NAN,
                xi: 0.294,
                sigma: 1.132,
                a: 7.064e-3,
                b: 0.02986,
            },
            Preset::Toc => IndexParams {
                exp_a0: 0.7598,
                a1: -0.1942,
                a2: 0.07817,
                b1: 0.4759,
                b2: 1.468,
                rho: RhoKind::Dirac,
                zeta: f64::NAN,
                xi: 0.238,
                sigma: 0.4502,
                a: 0.1966,
                b: 0.02220,
            },
        }
    }
}

/// Discharge parameters identified for the reference gauge.
pub fn reference_discharge() -> DischargeModel {
    DischargeModel { alpha: 1.752, beta: 1.608, a1: 2.985, a2: 1.510e-3, a3: 0.7998 }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSection {
    pub seed: u64,
    pub out: PathBuf,
    pub epoch: NaiveDateTime,
    /// Worker threads; 0 lets the pool decide.
    pub threads: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSection {
    pub discharge: DischargeModel,
    pub index: IndexParams,
    pub period: f64,
}

impl ModelSection {
    pub fn memory(&self) -> Result<MemoryModel> {
        let p = &self.index;
        let rho = match p.rho {
            RhoKind::Gamma => MixingMeasure::gamma(p.zeta, p.xi)?,
            RhoKind::Dirac => MixingMeasure::dirac(p.xi)?,
        };
        Ok(MemoryModel::new(p.a, p.b, p.sigma, rho)?)
    }

    pub fn seasonal(&self) -> SeasonalModel {
        let p = &self.index;
        SeasonalModel { period: self.period, ..SeasonalModel::new(p.exp_a0.ln(), p.a1, p.a2, p.b1, p.b2) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidateSection {
    pub cases: Vec<ValidationCase>,
    pub dts: Vec<f64>,
    pub paths: u64,
    pub horizon: f64,
    pub report_dt: f64,
    pub hit_cap: f64,
    /// Paths per parallel work unit.
    pub block: u64,
    /// Paths written to each per-case path file.
    pub sample_paths: u64,
    pub sample_dt: f64,
    pub max_memory_mb: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulateSection {
    pub components: usize,
    pub dt: f64,
    pub years: f64,
    pub burn_in_years: f64,
    pub record_dt: f64,
    pub bins: usize,
    pub q_max: f64,
    pub m_max: f64,
    pub c_max: f64,
    pub max_output_mb: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StatsSection {
    pub n_int: usize,
    pub h_max: f64,
    pub h_step: f64,
    pub deltas: Vec<f64>,
    pub normalize: bool,
    pub peak_tol: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrateSection {
    pub discharge_csv: Option<PathBuf>,
    pub quality_csv: Option<PathBuf>,
    pub rho: RhoKind,
    pub n_int: usize,
    pub starts: usize,
    pub max_evals: usize,
    pub max_lag: usize,
    /// Generate the input files from the configured model first.
    pub synthetic: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSection {
    pub years: f64,
    pub burn_in_years: f64,
    /// Days between concentration samples.
    pub sample_interval: f64,
    /// Days between discharge records.
    pub discharge_interval: f64,
    pub components: usize,
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiSection {
    pub n: usize,
    pub varpis: Vec<f64>,
    pub dt_ode: f64,
    pub mc_paths: usize,
    pub mc_dt: f64,
    pub mc_burn_in: f64,
    pub mc_span: f64,
    pub mc_stride: usize,
    pub max_steps: u64,
    /// Append rows for the model with `σ = b = 0`.
    pub deterministic_row: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scale: Scale,
    pub run: RunSection,
    pub model: ModelSection,
    pub validate: ValidateSection,
    pub simulate: SimulateSection,
    pub stats: StatsSection,
    pub calibrate: CalibrateSection,
    pub synthetic: SyntheticSection,
    pub riccati: RiccatiSection,
}

impl RunConfig {
    pub fn defaults(scale: Scale) -> Self {
        let paper = scale == Scale::Paper;
        let pick = |desk: f64, full: f64| if paper { full } else { desk };
        Self {
            scale,
            run: RunSection {
                seed: 1,
                out: PathBuf::from("out"),
                epoch: parse_timestamp("1970-01-01").expect("literal epoch"),
                threads: 0,
            },
            model: ModelSection { discharge: reference_discharge(), index: Preset::Tn.params(), period: YEAR },
            validate: ValidateSection {
                cases: ValidationCase::ALL.to_vec(),
                dts: if paper { vec![0.1, 0.01, 0.001, 0.0001] } else { vec![0.1, 0.01, 0.001] },
                paths: if paper { 1_000_000 } else { 10_000 },
                horizon: 20.0,
                report_dt: 0.1,
                hit_cap: 200.0,
                block: 1000,
                sample_paths: 3,
                sample_dt: 0.01,
                max_memory_mb: 1024.0,
            },
            simulate: SimulateSection {
                components: if paper { 2048 } else { 512 },
                dt: pick(0.02, 0.01),
                years: pick(50.0, 1000.0),
                burn_in_years: pick(50.0, 1000.0),
                record_dt: pick(0.1, 0.5),
                bins: 200,
                q_max: 1000.0,
                m_max: 6.0,
                c_max: 6.0,
                max_output_mb: 1024.0,
            },
            stats: StatsSection {
                n_int: 2048,
                h_max: 30.0,
                h_step: 0.05,
                deltas: (-5..=5).map(|k| k as f64 / 10.0).collect(),
                normalize: false,
                peak_tol: 1e-3,
            },
            calibrate: CalibrateSection {
                discharge_csv: None,
                quality_csv: None,
                rho: RhoKind::Gamma,
                n_int: if paper { 2048 } else { 512 },
                starts: if paper { 20 } else { 8 },
                max_evals: 2000,
                max_lag: 30,
                synthetic: false,
            },
            synthetic: SyntheticSection {
                years: 30.0,
                burn_in_years: pick(20.0, 100.0),
                sample_interval: 7.0,
                discharge_interval: 1.0 / 24.0,
                components: if paper { 2048 } else { 512 },
                dt: pick(1.0 / 48.0, 1.0 / 96.0),
            },
            riccati: RiccatiSection {
                n: 256,
                varpis: vec![-1.0, -0.5, -0.2, 0.0],
                dt_ode: 0.01,
                mc_paths: if paper { 64 } else { 8 },
                mc_dt: 0.02,
                mc_burn_in: pick(3652.5, 36525.0),
                mc_span: pick(3652.5, 36525.0),
                mc_stride: 5,
                max_steps: 10_000_000_000,
                deterministic_row: true,
            },
        }
    }

    /// Applies every key of `raw` over the defaults of `scale`. Relative
    /// input paths are resolved against `base`.
    pub fn from_raw(raw: &RawConfig, scale: Scale, base: Option<&Path>) -> Result<Self> {
        let mut c = Self::defaults(scale);

        raw.set("run", "seed", &mut c.run.seed)?;
        raw.set("run", "out", &mut c.run.out)?;
        raw.set("run", "threads", &mut c.run.threads)?;
        if let Some(v) = raw.raw("run", "epoch") {
            c.run.epoch = parse_timestamp(&v.value).map_err(|e| bad(v.line, format!("[run] epoch: {e}")))?;
        }

        let d = &mut c.model.discharge;
        raw.set("discharge", "alpha", &mut d.alpha)?;
        raw.set("discharge", "beta", &mut d.beta)?;
        raw.set("discharge", "a1", &mut d.a1)?;
        raw.set("discharge", "a2", &mut d.a2)?;
        raw.set("discharge", "a3", &mut d.a3)?;

        if let Some(p) = raw.get::<Preset>("memory", "preset")? {
            c.model.index = p.params();
        }
        let ix = &mut c.model.index;
        raw.set("memory", "a", &mut ix.a)?;
        raw.set("memory", "b", &mut ix.b)?;
        raw.set("memory", "sigma", &mut ix.sigma)?;
        if let Some(v) = raw.raw("memory", "rho") {
            ix.rho = v.value.parse().map_err(|e| bad(v.line, e))?;
        }
        raw.set("memory", "zeta", &mut ix.zeta)?;
        raw.set("memory", "xi", &mut ix.xi)?;
        raw.set("seasonal", "exp_a0", &mut ix.exp_a0)?;
        raw.set("seasonal", "a1", &mut ix.a1)?;
        raw.set("seasonal", "a2", &mut ix.a2)?;
        raw.set("seasonal", "b1", &mut ix.b1)?;
        raw.set("seasonal", "b2", &mut ix.b2)?;
        raw.set("seasonal", "period", &mut c.model.period)?;

        let v = &mut c.validate;
        if let Some(r) = raw.raw("validate", "cases") {
            v.cases = r
                .value
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| s.parse().map_err(|e| bad(r.line, e)))
                .collect::<Result<_>>()?;
        }
        raw.set_list("validate", "dt", &mut v.dts)?;
        raw.set_count("validate", "paths", &mut v.paths)?;
        raw.set("validate", "horizon", &mut v.horizon)?;
        raw.set("validate", "report_dt", &mut v.report_dt)?;
        raw.set("validate", "hit_cap", &mut v.hit_cap)?;
        raw.set_count("validate", "block", &mut v.block)?;
        raw.set_count("validate", "sample_paths", &mut v.sample_paths)?;
        raw.set("validate", "sample_dt", &mut v.sample_dt)?;
        raw.set("validate", "max_memory_mb", &mut v.max_memory_mb)?;

        let s = &mut c.simulate;
        raw.set("simulate", "components", &mut s.components)?;
        raw.set("simulate", "dt", &mut s.dt)?;
        raw.set("simulate", "years", &mut s.years)?;
        raw.set("simulate", "burn_in_years", &mut s.burn_in_years)?;
        raw.set("simulate", "record_dt", &mut s.record_dt)?;
        raw.set("simulate", "bins", &mut s.bins)?;
        raw.set("simulate", "q_max", &mut s.q_max)?;
        raw.set("simulate", "m_max", &mut s.m_max)?;
        raw.set("simulate", "c_max", &mut s.c_max)?;
        raw.set("simulate", "max_output_mb", &mut s.max_output_mb)?;

        let st = &mut c.stats;
        raw.set("stats", "n_int", &mut st.n_int)?;
        raw.set("stats", "h_max", &mut st.h_max)?;
        raw.set("stats", "h_step", &mut st.h_step)?;
        raw.set_list("stats", "deltas", &mut st.deltas)?;
        raw.set("stats", "normalize", &mut st.normalize)?;
        raw.set("stats", "peak_tol", &mut st.peak_tol)?;

        let cal = &mut c.calibrate;
        let resolve = |p: PathBuf| match base {
            Some(b) if p.is_relative() => b.join(p),
            _ => p,
        };
        if let Some(p) = raw.get::<PathBuf>("calibrate", "discharge_csv")? {
            cal.discharge_csv = Some(resolve(p));
        }
        if let Some(p) = raw.get::<PathBuf>("calibrate", "quality_csv")? {
            cal.quality_csv = Some(resolve(p));
        }
        cal.rho = c.model.index.rho;
        if let Some(v) = raw.raw("calibrate", "rho") {
            cal.rho = v.value.parse().map_err(|e| bad(v.line, e))?;
        }
        raw.set("calibrate", "n_int", &mut cal.n_int)?;
        raw.set("calibrate", "starts", &mut cal.starts)?;
        raw.set("calibrate", "max_evals", &mut cal.max_evals)?;
        raw.set("calibrate", "max_lag", &mut cal.max_lag)?;
        raw.set("calibrate", "synthetic", &mut cal.synthetic)?;

        let sy = &mut c.synthetic;
        raw.set("synthetic", "years", &mut sy.years)?;
        raw.set("synthetic", "burn_in_years", &mut sy.burn_in_years)?;
        raw.set("synthetic", "sample_interval", &mut sy.sample_interval)?;
        raw.set("synthetic", "discharge_interval", &mut sy.discharge_interval)?;
        raw.set("synthetic", "components", &mut sy.components)?;
        raw.set("synthetic", "dt", &mut sy.dt)?;

        let r = &mut c.riccati;
        raw.set("riccati", "n", &mut r.n)?;
        raw.set_list("riccati", "varpis", &mut r.varpis)?;
        raw.set("riccati", "dt_ode", &mut r.dt_ode)?;
        raw.set("riccati", "mc_paths", &mut r.mc_paths)?;
        raw.set("riccati", "mc_dt", &mut r.mc_dt)?;
        raw.set("riccati", "mc_burn_in", &mut r.mc_burn_in)?;
        raw.set("riccati", "mc_span", &mut r.mc_span)?;
        raw.set("riccati", "mc_stride", &mut r.mc_stride)?;
        raw.set_count("riccati", "max_steps", &mut r.max_steps)?;
        raw.set("riccati", "deterministic_row", &mut r.deterministic_row)?;

        Ok(c)
    }

    /// Checks every field against the invariants of the module that
    /// consumes it.
    pub fn validate(&self) -> Result<()> {
        self.model.discharge.validate()?;
        self.model.memory()?;
        positive("seasonal exp_a0", self.model.index.exp_a0)?;
        positive("seasonal period", self.model.period)?;
        for (name, x) in [
            ("seasonal a1", self.model.index.a1),
            ("seasonal a2", self.model.index.a2),
            ("seasonal b1", self.model.index.b1),
            ("seasonal b2", self.model.index.b2),
        ] {
            if !x.is_finite() {
                return Err(CliError::validation(format!("{name} must be finite")));
            }
        }

        let v = &self.validate;
        for &dt in &v.dts {
            positive("validate dt", dt)?;
        }
        positive("validate horizon", v.horizon)?;
        positive("validate report_dt", v.report_dt)?;
        positive("validate sample_dt", v.sample_dt)?;
        positive("validate max_memory_mb", v.max_memory_mb)?;
        if v.hit_cap < v.horizon {
            return Err(CliError::validation("validate hit_cap must not precede the horizon"));
        }
        if v.paths < 2 && !v.cases.is_empty() {
            return Err(CliError::validation("validate paths must be at least 2"));
        }
        if v.block == 0 {
            return Err(CliError::validation("validate block must be positive"));
        }

        let s = &self.simulate;
        positive("simulate dt", s.dt)?;
        positive("simulate record_dt", s.record_dt)?;
        nonnegative("simulate years", s.years)?;
        nonnegative("simulate burn_in_years", s.burn_in_years)?;
        positive("simulate q_max", s.q_max)?;
        positive("simulate m_max", s.m_max)?;
        positive("simulate c_max", s.c_max)?;
        positive("simulate max_output_mb", s.max_output_mb)?;
        if s.components == 0 {
            return Err(CliError::validation("simulate components must be positive"));
        }
        if s.bins < 10 {
            return Err(CliError::validation("simulate bins must be at least 10"));
        }
        stride_of(s.record_dt, s.dt).map_err(|e| CliError::validation(format!("simulate record_dt: {e}")))?;

        let st = &self.stats;
        if st.n_int < cqflow_core::stats::MIN_RESOLUTION {
            return Err(CliError::validation(format!(
                "stats n_int must be at least {}",
                cqflow_core::stats::MIN_RESOLUTION
            )));
        }
        positive("stats h_max", st.h_max)?;
        positive("stats h_step", st.h_step)?;
        positive("stats peak_tol", st.peak_tol)?;
        for &d in &st.deltas {
            if !(d > -1.0) || !d.is_finite() {
                return Err(CliError::validation(format!("stats delta {d} must exceed -1")));
            }
        }

        let c = &self.calibrate;
        if c.n_int < cqflow_core::stats::MIN_RESOLUTION || c.starts == 0 || c.max_evals == 0 || c.max_lag < 2 {
            return Err(CliError::validation("calibrate n_int, starts, max_evals and max_lag must be positive (max_lag ≥ 2)"));
        }

        let sy = &self.synthetic;
        positive("synthetic years", sy.years)?;
        nonnegative("synthetic burn_in_years", sy.burn_in_years)?;
        positive("synthetic dt", sy.dt)?;
        if sy.components == 0 {
            return Err(CliError::validation("synthetic components must be positive"));
        }
        stride_of(sy.sample_interval, sy.dt).map_err(|e| CliError::validation(format!("synthetic sample_interval: {e}")))?;
        stride_of(sy.discharge_interval, sy.dt)
            .map_err(|e| CliError::validation(format!("synthetic discharge_interval: {e}")))?;

        let r = &self.riccati;
        if r.n == 0 || r.mc_stride == 0 {
            return Err(CliError::validation("riccati n and mc_stride must be positive"));
        }
        positive("riccati dt_ode", r.dt_ode)?;
        positive("riccati mc_dt", r.mc_dt)?;
        nonnegative("riccati mc_burn_in", r.mc_burn_in)?;
        positive("riccati mc_span", r.mc_span)?;
        for &w in &r.varpis {
            if !(w <= 0.0) {
                return Err(CliError::validation(format!("riccati varpi {w} must be nonpositive")));
            }
        }
        Ok(())
    }
}

fn positive(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(CliError::validation(format!("{name} must be positive and finite, got {x}")))
    }
}

fn nonnegative(name: &str, x: f64) -> Result<()> {
    if x >= 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(CliError::validation(format!("{name} must be nonnegative and finite, got {x}")))
    }
}

/// Number of `dt` steps in `interval`, which must be a whole multiple.
pub fn stride_of(interval: f64, dt: f64) -> std::result::Result<usize, String> {
    let k = (interval / dt).round();
    if !(k >= 1.0) || (k * dt - interval).abs() > 1e-9 * interval {
        return Err(format!("{interval} is not a positive multiple of the step {dt}"));
    }
    Ok(k as usize)
}
