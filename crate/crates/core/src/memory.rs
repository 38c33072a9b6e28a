//! The superposed square-root memory process and seasonal assembly.
//!
//! `M = Σ_i m_i`, each component a square-root process
//! `dm_i = -R_i (m_i - (a + b Q_t) / N) dt + σ sqrt(R_i m_i) dW_i` at the
//! quantile atoms `R_i` of `ρ`. Concentration is `C_t = S_t M_t` with a
//! two-harmonic log-sinusoidal season `S_t`.

use alloc::format;
use alloc::vec::Vec;

use crate::discharge::{DischargeModel, DischargeSimConfig, DischargeSimulator};
use crate::ig::StepCoefficients;
use crate::measures::MixingMeasure;
use crate::path::SamplePath;
use crate::rng::{stream_index, tag, RngStream};
use crate::sum::KahanSum;
use crate::{Error, Result};

/// Days per seasonal period.
pub const YEAR: f64 = 365.25;

#[derive(Debug, Clone, PartialEq)]
pub struct MemoryModel {
    pub a: f64,
    pub b: f64,
    pub sigma: f64,
    pub rho: MixingMeasure,
}

impl MemoryModel {
    pub fn new(a: f64, b: f64, sigma: f64, rho: MixingMeasure) -> Result<Self> {
        let m = Self { a, b, sigma, rho };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("a", self.a), ("b", self.b), ("sigma", self.sigma)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::arg(format!("{name} {v} must be nonnegative")));
            }
        }
        if self.a == 0.0 && self.b == 0.0 {
            return Err(Error::arg("a and b cannot both vanish"));
        }
        Ok(())
    }

    /// Long-run level `a + b q` for a held discharge `q`.
    pub fn level(&self, q: f64) -> f64 {
        self.a + self.b * q
    }

    /// Reversion atoms at resolution `n`. A Dirac `ρ` collapses to a single
    /// component when `collapse_dirac` is set: a sum of independent
    /// square-root processes sharing one rate is again one in law.
    pub fn atoms(&self, n: usize, collapse_dirac: bool) -> Result<Vec<f64>> {
        match self.rho {
            MixingMeasure::Dirac { atom } if collapse_dirac => Ok(alloc::vec![atom]),
            _ => self.rho.atoms(n),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeasonalModel {
    pub a0: f64,
    pub a1: f64,
    pub a2: f64,
    pub b1: f64,
    pub b2: f64,
    pub period: f64,
}

impl SeasonalModel {
    pub fn new(a0: f64, a1: f64, a2: f64, b1: f64, b2: f64) -> Self {
        Self { a0, a1, a2, b1, b2, period: YEAR }
    }

    /// `S_t = exp(A0 + A1 sin(2πt/T + B1) + A2 sin(4πt/T + B2))`.
    pub fn value(&self, t: f64) -> f64 {
        let w = 2.0 * core::f64::consts::PI * t / self.period;
        libm::exp(self.a0 + self.a1 * libm::sin(w + self.b1) + self.a2 * libm::sin(2.0 * w + self.b2))
    }

    pub fn constant(level: f64) -> Self {
        Self::new(libm::log(level), 0.0, 0.0, 0.0, 0.0)
    }
}

pub fn seasonal_value(s: &SeasonalModel, t: f64) -> f64 {
    s.value(t)
}

/// `C_t = S_t M_t` on a shared time grid.
pub fn assemble_concentration(s: &SeasonalModel, times: &[f64], m: &[f64]) -> Result<Vec<f64>> {
    if times.len() != m.len() {
        return Err(Error::arg(format!("{} times for {} memory values", times.len(), m.len())));
    }
    Ok(times.iter().zip(m).map(|(&t, &v)| s.value(t) * v).collect())
}

/// `M_t = C_t / S_t`.
pub fn deseasonalize(s: &SeasonalModel, times: &[f64], c: &[f64]) -> Result<Vec<f64>> {
    if times.len() != c.len() {
        return Err(Error::arg(format!("{} times for {} concentrations", times.len(), c.len())));
    }
    Ok(times.iter().zip(c).map(|(&t, &v)| v / s.value(t)).collect())
}

/// Concentration path from a memory path.
pub fn assemble_path(s: &SeasonalModel, m: &SamplePath) -> SamplePath {
    let values = m.values.iter().enumerate().map(|(k, &v)| s.value(m.time(k)) * v).collect();
    SamplePath { values, ..m.clone() }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MemoryState {
    pub components: Vec<f64>,
    pub atoms: Vec<f64>,
}

impl MemoryState {
    pub fn total(&self) -> f64 {
        crate::sum::ksum(&self.components)
    }
}

/// Every component at its conditional mean `(a + b q0) / N`.
pub fn stationary_init(model: &MemoryModel, q0: f64, atoms: Vec<f64>) -> Result<MemoryState> {
    model.validate()?;
    if !(q0 >= 0.0) {
        return Err(Error::arg(format!("discharge {q0} must be nonnegative")));
    }
    if atoms.is_empty() {
        return Err(Error::arg("at least one memory component is needed"));
    }
    let each = model.level(q0) / atoms.len() as f64;
    Ok(MemoryState { components: alloc::vec![each; atoms.len()], atoms })
}

/// Steps every component with its own random stream.
#[derive(Debug, Clone)]
pub struct MemoryStepper {
    coefs: Vec<StepCoefficients>,
    rngs: Vec<RngStream>,
}

impl MemoryStepper {
    /// Streams keyed by `(seed, path, component)`.
    pub fn new(atoms: &[f64], dt: f64, seed: u64, path: u64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::arg(format!("step {dt} must be positive")));
        }
        let coefs = atoms.iter().map(|&r| StepCoefficients::new(r, dt)).collect();
        let rngs = (0..atoms.len() as u64).map(|i| RngStream::keyed(seed, &[tag::MEMORY, path, i])).collect();
        Ok(Self { coefs, rngs })
    }

    /// Advances the state one step with discharge `q` held over the step.
    pub fn step(&mut self, state: &mut MemoryState, model: &MemoryModel, q: f64) {
        let level = model.level(q) / state.components.len() as f64;
        for ((m, c), rng) in state.components.iter_mut().zip(&self.coefs).zip(self.rngs.iter_mut()) {
            *m = c.step(*m, level, model.sigma, rng);
        }
    }
}

/// One step of the memory system, drawing component `i` from `rngs[i]`.
pub fn memory_step(state: &mut MemoryState, model: &MemoryModel, q: f64, dt: f64, rngs: &mut [RngStream]) -> Result<()> {
    if !(q >= 0.0) {
        return Err(Error::arg(format!("discharge {q} must be nonnegative")));
    }
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::arg(format!("step {dt} must be positive")));
    }
    if rngs.len() != state.components.len() {
        return Err(Error::arg("one random stream per component is required"));
    }
    let level = model.level(q) / state.components.len() as f64;
    for ((m, &r), rng) in state.components.iter_mut().zip(&state.atoms).zip(rngs.iter_mut()) {
        *m = StepCoefficients::new(r, dt).step(*m, level, model.sigma, rng);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoupledConfig {
    pub discharge: DischargeSimConfig,
    pub memory_components: usize,
    pub collapse_dirac: bool,
}

impl CoupledConfig {
    pub fn new(components: usize, dt: f64) -> Self {
        Self { discharge: DischargeSimConfig::new(components, dt), memory_components: components, collapse_dirac: true }
    }

    pub fn dt(&self) -> f64 {
        self.discharge.dt
    }
}

/// Joint generator of `(Q, M)` on a common grid. The memory step uses the
/// discharge at the left end of each step.
#[derive(Debug, Clone)]
pub struct CoupledSimulator {
    pub discharge: DischargeSimulator,
    pub memory: MemoryState,
    stepper: MemoryStepper,
    model: MemoryModel,
    q: f64,
    dt: f64,
    steps: u64,
}

impl CoupledSimulator {
    pub fn new(dis: &DischargeModel, mem: &MemoryModel, cfg: &CoupledConfig, seed: u64, path: u64) -> Result<Self> {
        let stream = stream_index(&[tag::DISCHARGE, path]);
        let discharge = DischargeSimulator::new(dis, &cfg.discharge, RngStream::new(seed, stream))?;
        let q = discharge.value();
        let atoms = mem.atoms(cfg.memory_components, cfg.collapse_dirac)?;
        let stepper = MemoryStepper::new(&atoms, cfg.dt(), seed, path)?;
        let memory = stationary_init(mem, q, atoms)?;
        Ok(Self { discharge, memory, stepper, model: mem.clone(), q, dt: cfg.dt(), steps: 0 })
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn m(&self) -> f64 {
        self.memory.total()
    }

    /// Elapsed simulated time.
    pub fn time(&self) -> f64 {
        self.steps as f64 * self.dt
    }

    /// Advances one step and returns `(Q, M)` at its end.
    pub fn step(&mut self) -> (f64, f64) {
        self.stepper.step(&mut self.memory, &self.model, self.q);
        self.q = self.discharge.step();
        self.steps += 1;
        (self.q, self.m())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoupledPaths {
    pub q: SamplePath,
    pub m: SamplePath,
}

/// Simulates `t_end` days after `burn_in` days, recording every `stride`-th
/// step. Time 0 is the end of burn-in.
pub fn simulate_coupled(
    dis: &DischargeModel,
    mem: &MemoryModel,
    cfg: &CoupledConfig,
    t_end: f64,
    burn_in: f64,
    stride: usize,
    seed: u64,
    path: u64,
) -> Result<CoupledPaths> {
    if !(t_end >= 0.0) || !(burn_in >= 0.0) || stride == 0 {
        return Err(Error::arg("span and burn-in must be nonnegative and the stride positive"));
    }
    let mut sim = CoupledSimulator::new(dis, mem, cfg, seed, path)?;
    let dt = cfg.dt();
    for _ in 0..libm::round(burn_in / dt) as u64 {
        sim.step();
    }
    let steps = libm::round(t_end / dt) as usize;
    let mut q = Vec::with_capacity(steps / stride + 1);
    let mut m = Vec::with_capacity(steps / stride + 1);
    q.push(sim.q());
    m.push(sim.m());
    for k in 1..=steps {
        let (qv, mv) = sim.step();
        if k % stride == 0 {
            q.push(qv);
            m.push(mv);
        }
    }
    let step = dt * stride as f64;
    Ok(CoupledPaths {
        q: SamplePath::new(0.0, step, q, 0, seed, stream_index(&[tag::DISCHARGE, path])),
        m: SamplePath::new(0.0, step, m, 0, seed, path),
    })
}

/// Running mean and variance of a stream of values.
#[derive(Debug, Clone, Default)]
pub struct RunningMoments {
    pub n: u64,
    sum: KahanSum,
    sum_sq: KahanSum,
}

impl RunningMoments {
    pub fn add(&mut self, x: f64) {
        self.n += 1;
        self.sum.add(x);
        self.sum_sq.add(x * x);
    }

    pub fn mean(&self) -> f64 {
        self.sum.value() / self.n as f64
    }

    pub fn variance(&self) -> f64 {
        let n = self.n as f64;
        let m = self.mean();
        ((self.sum_sq.value() - n * m * m) / (n - 1.0)).max(0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::MixingMeasure;

    fn tn() -> MemoryModel {
        MemoryModel::new(0.3844, 0.01684, 0.5412, MixingMeasure::gamma(0.5355, 0.3482).unwrap()).unwrap()
    }

    #[test]
    fn stationary_init_levels() {
        let m = MemoryModel::new(1.0, 0.0, 0.3, MixingMeasure::gamma(0.5, 1.0).unwrap()).unwrap();
        let s = stationary_init(&m, 10.0, m.atoms(4, true).unwrap()).unwrap();
        assert_eq!(s.components, alloc::vec![0.25; 4]);
        let t = tn();
        let s = stationary_init(&t, 41.56, t.atoms(2048, true).unwrap()).unwrap();
        assert!((s.total() - (0.3844 + 0.01684 * 41.56)).abs() < 1e-12);
        assert!((s.total() - 1.0843).abs() < 1e-4);
        assert!(MemoryModel::new(0.0, 0.0, 0.1, MixingMeasure::dirac(1.0).unwrap()).is_err());
    }

    #[test]
    fn deterministic_fixed_point() {
        let m = MemoryModel::new(0.7, 0.0, 0.0, MixingMeasure::gamma(0.8, 0.5).unwrap()).unwrap();
        let atoms = m.atoms(16, true).unwrap();
        let mut s = stationary_init(&m, 0.0, atoms.clone()).unwrap();
        let start = s.clone();
        let mut st = MemoryStepper::new(&atoms, 0.1, 1, 0).unwrap();
        for _ in 0..100 {
            st.step(&mut s, &m, 3.0);
        }
        for (a, b) in s.components.iter().zip(&start.components) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn relaxes_to_held_level_without_noise() {
        let m = MemoryModel::new(0.2, 0.05, 0.0, MixingMeasure::gamma(0.8, 0.5).unwrap()).unwrap();
        let atoms = m.atoms(8, true).unwrap();
        let mut s = stationary_init(&m, 0.0, atoms.clone()).unwrap();
        let mut st = MemoryStepper::new(&atoms, 0.05, 1, 0).unwrap();
        let q = 10.0;
        let steps = 200;
        for _ in 0..steps {
            st.step(&mut s, &m, q);
        }
        let t = steps as f64 * 0.05;
        let n = atoms.len() as f64;
        for (c, &r) in s.components.iter().zip(&atoms) {
            let exact = 0.7 / n + (0.2 / n - 0.7 / n) * libm::exp(-r * t);
            assert!((c - exact).abs() < 1e-12, "{c} vs {exact}");
        }
    }

    #[test]
    fn one_step_mean_of_total() {
        let t = tn();
        let atoms = t.atoms(8, true).unwrap();
        let q = 41.56;
        let n = 200_000;
        let mut acc = RunningMoments::default();
        for p in 0..n {
            let mut s = stationary_init(&t, q, atoms.clone()).unwrap();
            let mut st = MemoryStepper::new(&atoms, 0.05, 9, p).unwrap();
            st.step(&mut s, &t, q);
            acc.add(s.total());
        }
        let se = libm::sqrt(acc.variance() / n as f64);
        assert!((acc.mean() - t.level(q)).abs() < 4.0 * se, "{} vs {}", acc.mean(), t.level(q));
    }

    #[test]
    fn seasonal_periodicity_and_inverse() {
        let s = SeasonalModel::new(libm::log(0.5975), 0.12, 0.07878, 1.071, 0.6825);
        for &t in &[0.0, 17.3, 200.0, 3000.5] {
            assert!((s.value(t + YEAR) / s.value(t) - 1.0).abs() < 1e-12);
            assert!(s.value(t) > 0.0);
        }
        let flat = SeasonalModel::constant(0.5975);
        assert!((flat.value(123.0) - 0.5975).abs() < 1e-15);
        let times = [0.0, 1.0, 2.5];
        let c = [0.4, 0.9, 1.3];
        let m = deseasonalize(&s, &times, &c).unwrap();
        let back = assemble_concentration(&s, &times, &m).unwrap();
        for (x, y) in back.iter().zip(&c) {
            assert!((x - y).abs() < 1e-14);
        }
        let ones = assemble_concentration(&s, &times, &[1.0; 3]).unwrap();
        assert_eq!(ones[1], s.value(1.0));
        assert!(assemble_concentration(&s, &times, &[1.0; 2]).is_err());
    }

    #[test]
    fn dirac_collapses() {
        let m = MemoryModel::new(0.1, 0.03, 1.1, MixingMeasure::dirac(0.294).unwrap()).unwrap();
        assert_eq!(m.atoms(512, true).unwrap(), alloc::vec![0.294]);
        assert_eq!(m.atoms(4, false).unwrap().len(), 4);
    }
}
