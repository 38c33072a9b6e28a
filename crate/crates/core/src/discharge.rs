//! Jump-driven superposition of Ornstein–Uhlenbeck discharge pulses.
//!
//! `Q_t = ∫∫ e^{-r (t - s)} z N(ds, dz, dr)` with jump intensity
//! `ν(dz) = a1 e^{-a2 z} z^{-(1 + a3)} dz` and recession rates distributed as
//! `π = Gamma(alpha, beta)` (shape, scale). The finite system replaces `π` by
//! its `N` quantile atoms, each component receiving jumps at rate `ν / N`.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::Exp1;

use crate::measures::{quantile_atoms, theta_from_pi, MixingMeasure};
use crate::path::SamplePath;
use crate::rng::{tag, RngStream};
use crate::special::{ln_gamma, reg_lower_gamma};
use crate::{quad, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DischargeModel {
    pub alpha: f64,
    pub beta: f64,
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
}

impl DischargeModel {
    pub fn new(alpha: f64, beta: f64, a1: f64, a2: f64, a3: f64) -> Result<Self> {
        let m = Self { alpha, beta, a1, a2, a3 };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 1.0) || !self.alpha.is_finite() {
            return Err(Error::domain(format!("alpha {} must exceed 1", self.alpha)));
        }
        for (name, v) in [("beta", self.beta), ("a1", self.a1), ("a2", self.a2)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::arg(format!("{name} {v} must be positive")));
            }
        }
        if !(self.a3 < 1.0) || !self.a3.is_finite() {
            return Err(Error::arg(format!("a3 {} must be below 1", self.a3)));
        }
        Ok(())
    }

    /// The recession law `π`.
    pub fn recession_measure(&self) -> Result<MixingMeasure> {
        MixingMeasure::gamma(self.alpha, self.beta)
    }

    /// The law `θ ∝ r^{-1} π(dr)` whose Laplace transform is the
    /// autocorrelation.
    pub fn autocorrelation_measure(&self) -> Result<MixingMeasure> {
        theta_from_pi(self.alpha, self.beta)
    }

    /// `∫ r^{-1} π(dr) = 1 / (beta (alpha - 1))`.
    pub fn mean_inverse_rate(&self) -> f64 {
        1.0 / (self.beta * (self.alpha - 1.0))
    }

    /// Jump intensity density `ν(z)`.
    pub fn nu_density(&self, z: f64) -> f64 {
        if z <= 0.0 {
            return 0.0;
        }
        self.a1 * libm::exp(-self.a2 * z - (1.0 + self.a3) * libm::log(z))
    }
}

/// `m_n = ∫ z^n ν(dz) = a1 Γ(n - a3) a2^{a3 - n}`.
pub fn nu_moment(n: u32, model: &DischargeModel) -> Result<f64> {
    model.validate()?;
    if n == 0 {
        return Err(Error::arg("moment order must be at least 1"));
    }
    let k = n as f64 - model.a3;
    let v = libm::exp(libm::log(model.a1) + ln_gamma(k) - k * libm::log(model.a2));
    if !v.is_finite() {
        return Err(Error::numeric(format!("jump moment of order {n} overflows")));
    }
    Ok(v)
}

/// `n`-th cumulant of the stationary discharge, `m_n / (n beta (alpha - 1))`.
pub fn q_cumulant(n: u32, model: &DischargeModel) -> Result<f64> {
    Ok(nu_moment(n, model)? * model.mean_inverse_rate() / n as f64)
}

/// `A_Q(h) = (1 + beta h)^{-(alpha - 1)}`.
pub fn q_autocorrelation(h: f64, model: &DischargeModel) -> Result<f64> {
    if !(h >= 0.0) {
        return Err(Error::arg(format!("lag {h} must be nonnegative")));
    }
    model.validate()?;
    Ok(libm::pow(1.0 + model.beta * h, -(model.alpha - 1.0)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DischargeStats {
    pub mean: f64,
    pub variance: f64,
    pub skewness: f64,
    /// `κ4 / κ2²`.
    pub kurtosis: f64,
}

impl DischargeStats {
    pub fn from_cumulants(k: [f64; 4]) -> Self {
        Self {
            mean: k[0],
            variance: k[1],
            skewness: k[2] / libm::pow(k[1], 1.5),
            kurtosis: k[3] / (k[1] * k[1]),
        }
    }

    pub fn of_model(model: &DischargeModel) -> Result<Self> {
        Ok(Self::from_cumulants([
            q_cumulant(1, model)?,
            q_cumulant(2, model)?,
            q_cumulant(3, model)?,
            q_cumulant(4, model)?,
        ]))
    }
}

/// `∫₀^{z_min} z ν(dz) = a1 Γ(1 - a3) a2^{a3 - 1} P(1 - a3, a2 z_min)`.
pub fn small_jump_mean(model: &DischargeModel, z_min: f64) -> f64 {
    if z_min <= 0.0 {
        return 0.0;
    }
    nu_moment(1, model).map(|m1| m1 * reg_lower_gamma(1.0 - model.a3, model.a2 * z_min)).unwrap_or(0.0)
}

/// Tabulated tail of `ν` above `z_min` for inversion sampling.
#[derive(Debug, Clone)]
pub struct JumpTable {
    z_min: f64,
    /// `ln z` grid.
    log_z: Vec<f64>,
    /// `∫_{z_min}^{z_k} ν(dz)`.
    cumulative: Vec<f64>,
}

pub const JUMP_TABLE_POINTS: usize = 4096;

impl JumpTable {
    pub fn new(model: &DischargeModel, z_min: f64, points: usize) -> Result<Self> {
        model.validate()?;
        if !(z_min > 0.0) || !z_min.is_finite() {
            return Err(Error::arg(format!("truncation level {z_min} must be positive")));
        }
        if points < 2 {
            return Err(Error::arg("jump table needs at least two points"));
        }
        // Beyond 60 / a2 the tempering factor is below e^{-60}.
        let z_max = (60.0 / model.a2).max(2.0 * z_min);
        let (s0, s1) = (libm::log(z_min), libm::log(z_max));
        let ds = (s1 - s0) / (points - 1) as f64;
        let mut log_z = Vec::with_capacity(points);
        let mut cumulative = Vec::with_capacity(points);
        let mut acc = 0.0;
        // In s = ln z the integrand is a1 exp(-a2 e^s - a3 s).
        let g = |s: f64| model.a1 * libm::exp(-model.a2 * libm::exp(s) - model.a3 * s);
        for k in 0..points {
            let s = s0 + k as f64 * ds;
            if k > 0 {
                acc += quad::integrate(g, s - ds, s, 0.0, 1e-12)?;
            }
            log_z.push(s);
            cumulative.push(acc);
        }
        if !(acc > 0.0) || !acc.is_finite() {
            return Err(Error::numeric(format!("jump tail rate {acc} above {z_min} is not positive and finite")));
        }
        Ok(Self { z_min, log_z, cumulative })
    }

    pub fn z_min(&self) -> f64 {
        self.z_min
    }

    /// `Λ(z_min) = ∫_{z_min}^∞ ν(dz)`.
    pub fn rate(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    /// Jump size for a uniform variate `u ∈ [0, 1)`.
    pub fn invert(&self, u: f64) -> f64 {
        let target = u * self.rate();
        let k = self.cumulative.partition_point(|&c| c <= target).clamp(1, self.cumulative.len() - 1);
        let (c0, c1) = (self.cumulative[k - 1], self.cumulative[k]);
        let w = if c1 > c0 { ((target - c0) / (c1 - c0)).clamp(0.0, 1.0) } else { 0.0 };
        libm::exp(self.log_z[k - 1] + w * (self.log_z[k] - self.log_z[k - 1]))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.invert(rng.random())
    }
}

/// Smallest `z` whose tail rate is at most `rate`, by bisection in `ln z`.
pub fn z_min_for_rate(model: &DischargeModel, rate: f64) -> Result<f64> {
    model.validate()?;
    if !(rate > 0.0) || !rate.is_finite() {
        return Err(Error::arg(format!("event rate {rate} must be positive")));
    }
    let g = |s: f64| model.a1 * libm::exp(-model.a2 * libm::exp(s) - model.a3 * s);
    let s_max = libm::log(60.0 / model.a2);
    let tail = |s: f64| quad::integrate(g, s, s_max, 0.0, 1e-10);
    let (mut lo, mut hi) = (s_max - 1.0, s_max);
    if tail(lo)? >= rate {
        // Already too many events one e-fold below the cap.
        return Ok(libm::exp(lo));
    }
    while tail(lo)? < rate {
        hi = lo;
        lo -= 4.0;
        if lo < -700.0 {
            return Err(Error::numeric("no truncation level reaches the requested event rate"));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if tail(mid)? > rate {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    Ok(libm::exp(hi))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Truncation {
    /// Use this jump-size floor.
    Fixed(f64),
    /// Pick the floor whose tail rate is this many events per day.
    EventRate(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmallJumps {
    /// Replace jumps below the floor by their mean inflow.
    Drift,
    Drop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decay {
    /// `q ← q e^{-r dt}` between jumps.
    Exact,
    /// `q ← q (1 - r dt)`, jumps added at the end of the step.
    Euler,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DischargeInit {
    /// Each component at its stationary mean.
    Stationary,
    Zero,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DischargeSimConfig {
    pub components: usize,
    pub dt: f64,
    pub truncation: Truncation,
    pub small_jumps: SmallJumps,
    pub decay: Decay,
    pub init: DischargeInit,
    /// Upper bound on the expected number of jumps per step.
    pub max_events_per_step: f64,
}

impl DischargeSimConfig {
    pub fn new(components: usize, dt: f64) -> Self {
        Self {
            components,
            dt,
            truncation: Truncation::EventRate(1000.0),
            small_jumps: SmallJumps::Drift,
            decay: Decay::Exact,
            init: DischargeInit::Stationary,
            max_events_per_step: 1e4,
        }
    }
}

/// Streaming generator of the finite-dimensional discharge.
#[derive(Debug, Clone)]
pub struct DischargeSimulator {
    rates: Vec<f64>,
    decay: Vec<f64>,
    /// Per-step inflow of the small-jump drift for each component.
    inflow: Vec<f64>,
    q: Vec<f64>,
    table: JumpTable,
    dt: f64,
    rule: Decay,
    /// Time of the next jump, measured from the start of the current step.
    next_jump: f64,
    inv_rate: f64,
    rng: RngStream,
}

impl DischargeSimulator {
    pub fn new(model: &DischargeModel, cfg: &DischargeSimConfig, rng: RngStream) -> Result<Self> {
        model.validate()?;
        if cfg.components == 0 {
            return Err(Error::arg("at least one discharge component is needed"));
        }
        if !(cfg.dt > 0.0) || !cfg.dt.is_finite() {
            return Err(Error::arg(format!("step {} must be positive", cfg.dt)));
        }
        let z_min = match cfg.truncation {
            Truncation::Fixed(z) => z,
            Truncation::EventRate(r) => z_min_for_rate(model, r)?,
        };
        let table = JumpTable::new(model, z_min, JUMP_TABLE_POINTS)?;
        let per_step = table.rate() * cfg.dt;
        if per_step > cfg.max_events_per_step {
            return Err(Error::Config(format!(
                "{per_step:.3e} expected jumps per step exceeds the limit {:.3e}; raise the truncation level or shorten dt",
                cfg.max_events_per_step
            )));
        }
        let rates = match quantile_atoms(&model.recession_measure()?, cfg.components)? {
            MixingMeasure::Empirical { atoms } => atoms,
            _ => unreachable!(),
        };
        let n = cfg.components as f64;
        let drift = match cfg.small_jumps {
            SmallJumps::Drift => small_jump_mean(model, z_min) / n,
            SmallJumps::Drop => 0.0,
        };
        let inflow_total = match cfg.small_jumps {
            SmallJumps::Drift => nu_moment(1, model)?,
            SmallJumps::Drop => nu_moment(1, model)? - small_jump_mean(model, z_min),
        };
        let decay: Vec<f64> = rates
            .iter()
            .map(|&r| match cfg.decay {
                Decay::Exact => libm::exp(-r * cfg.dt),
                Decay::Euler => 1.0 - r * cfg.dt,
            })
            .collect();
        let inflow = rates
            .iter()
            .map(|&r| match cfg.decay {
                Decay::Exact => drift * (-libm::expm1(-r * cfg.dt)) / r,
                Decay::Euler => drift * cfg.dt,
            })
            .collect();
        let q = match cfg.init {
            DischargeInit::Stationary => rates.iter().map(|&r| inflow_total / n / r).collect(),
            DischargeInit::Zero => alloc::vec![0.0; rates.len()],
        };
        let inv_rate = 1.0 / table.rate();
        let mut sim = Self { rates, decay, inflow, q, table, dt: cfg.dt, rule: cfg.decay, next_jump: 0.0, inv_rate, rng };
        sim.next_jump = sim.draw_gap();
        Ok(sim)
    }

    fn draw_gap(&mut self) -> f64 {
        let e: f64 = self.rng.sample(Exp1);
        e * self.inv_rate
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    pub fn components(&self) -> &[f64] {
        &self.q
    }

    pub fn z_min(&self) -> f64 {
        self.table.z_min()
    }

    pub fn jump_rate(&self) -> f64 {
        self.table.rate()
    }

    pub fn value(&self) -> f64 {
        crate::sum::ksum(&self.q)
    }

    /// Advances one step and returns the discharge at its end.
    pub fn step(&mut self) -> f64 {
        for ((q, &d), &c) in self.q.iter_mut().zip(&self.decay).zip(&self.inflow) {
            *q = *q * d + c;
        }
        let n = self.rates.len();
        while self.next_jump < self.dt {
            let j = if n == 1 { 0 } else { self.rng.random_range(0..n) };
            let z = self.table.sample(&mut self.rng);
            let weight = match self.rule {
                Decay::Exact => libm::exp(-self.rates[j] * (self.dt - self.next_jump)),
                Decay::Euler => 1.0,
            };
            self.q[j] += z * weight;
            let gap = self.draw_gap();
            self.next_jump += gap;
        }
        self.next_jump -= self.dt;
        if self.rule == Decay::Euler {
            for q in &mut self.q {
                *q = q.max(0.0);
            }
        }
        self.value()
    }
}

/// Simulates `t_end` days after `burn_in` days of warm-up. The returned
/// path starts at time 0 (the end of burn-in) and records every step.
pub fn simulate_discharge(
    model: &DischargeModel,
    cfg: &DischargeSimConfig,
    t_end: f64,
    burn_in: f64,
    seed: u64,
    path: u64,
) -> Result<SamplePath> {
    if !(t_end >= 0.0) || !(burn_in >= 0.0) {
        return Err(Error::arg("simulation span and burn-in must be nonnegative"));
    }
    let stream = crate::rng::stream_index(&[tag::DISCHARGE, path]);
    let mut sim = DischargeSimulator::new(model, cfg, RngStream::new(seed, stream))?;
    let warm = libm::round(burn_in / cfg.dt) as u64;
    for _ in 0..warm {
        sim.step();
    }
    let steps = libm::round(t_end / cfg.dt) as usize;
    let mut values = Vec::with_capacity(steps + 1);
    values.push(sim.value());
    for _ in 0..steps {
        values.push(sim.step());
    }
    Ok(SamplePath::new(0.0, cfg.dt, values, 0, seed, stream))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table4() -> DischargeModel {
        DischargeModel::new(1.752, 1.608, 2.985, 1.510e-3, 0.7998).unwrap()
    }

    fn quad_moment(n: u32, m: &DischargeModel) -> f64 {
        // In s = ln z: a1 exp((n - a3) s - a2 e^s).
        let g = |s: f64| m.a1 * libm::exp((n as f64 - m.a3) * s - m.a2 * libm::exp(s));
        quad::integrate(g, -400.0, libm::log(80.0 / m.a2), 0.0, 1e-13).unwrap()
    }

    #[test]
    fn moments_match_quadrature() {
        let m = table4();
        for n in 1..=4 {
            let exact = nu_moment(n, &m).unwrap();
            let q = quad_moment(n, &m);
            assert!((exact / q - 1.0).abs() < 1e-8, "n={n}: {exact} vs {q}");
        }
        let m1 = nu_moment(1, &m).unwrap();
        assert!((m1 - 50.2512).abs() < 1e-4, "{m1}");
        let near0 = DischargeModel::new(1.752, 1.608, 2.0, 0.5, -1e-9).unwrap();
        assert!((nu_moment(1, &near0).unwrap() / quad_moment(1, &near0) - 1.0).abs() < 1e-8);
        assert!((nu_moment(1, &near0).unwrap() - 2.0 / 0.5).abs() < 1e-6);
        let twice = DischargeModel { a1: 2.0 * m.a1, ..m };
        assert!((nu_moment(3, &twice).unwrap() / nu_moment(3, &m).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn cumulants_scale_with_intensity() {
        let m = table4();
        let twice = DischargeModel { a1: 2.0 * m.a1, ..m };
        let s1 = DischargeStats::of_model(&m).unwrap();
        let s2 = DischargeStats::of_model(&twice).unwrap();
        assert!((s2.mean / s1.mean - 2.0).abs() < 1e-12);
        assert!((s2.variance / s1.variance - 2.0).abs() < 1e-12);
        assert!((s2.skewness / s1.skewness - libm::sqrt(0.5)).abs() < 1e-12);
    }

    #[test]
    fn autocorrelation_values() {
        let m = table4();
        assert_eq!(q_autocorrelation(0.0, &m).unwrap(), 1.0);
        let a1 = q_autocorrelation(1.0, &m).unwrap();
        assert!((a1 - 0.4863).abs() < 1e-4, "{a1}");
        assert!((a1 - m.autocorrelation_measure().unwrap().exp_transform(1.0).unwrap()).abs() < 1e-15);
        assert!((q_autocorrelation(7.0, &m).unwrap() - 0.151901).abs() < 1e-6);
        assert!(q_autocorrelation(-1.0, &m).is_err());
    }

    #[test]
    fn domain_errors() {
        assert!(matches!(DischargeModel::new(1.0, 1.0, 1.0, 1.0, 0.5), Err(Error::Domain(_))));
        assert!(DischargeModel::new(2.0, 1.0, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn small_jump_mean_matches_quadrature() {
        let m = table4();
        let z = 1e-3;
        let g = |s: f64| m.a1 * libm::exp((1.0 - m.a3) * s - m.a2 * libm::exp(s));
        let q = quad::integrate(g, -200.0, libm::log(z), 0.0, 1e-12).unwrap();
        assert!((small_jump_mean(&m, z) / q - 1.0).abs() < 1e-8);
    }

    #[test]
    fn jump_table_inverts_the_tail() {
        let m = table4();
        let t = JumpTable::new(&m, 1e-3, JUMP_TABLE_POINTS).unwrap();
        // Rate of jumps above 1 relative to those above z_min.
        let above = |z: f64| {
            let g = |s: f64| m.a1 * libm::exp(-m.a2 * libm::exp(s) - m.a3 * s);
            quad::integrate(g, libm::log(z), libm::log(60.0 / m.a2), 0.0, 1e-12).unwrap()
        };
        for &z in &[0.01, 1.0, 100.0, 1000.0] {
            let p = 1.0 - above(z) / t.rate();
            assert!((t.invert(p) / z - 1.0).abs() < 1e-4, "{z}: {}", t.invert(p));
        }
        assert!((t.invert(0.0) - 1e-3).abs() < 1e-15);
    }

    #[test]
    fn rate_budget_truncation() {
        let m = table4();
        let z = z_min_for_rate(&m, 1000.0).unwrap();
        let t = JumpTable::new(&m, z, JUMP_TABLE_POINTS).unwrap();
        assert!((t.rate() / 1000.0 - 1.0).abs() < 1e-6, "{}", t.rate());
    }

    #[test]
    fn no_jumps_means_pure_decay() {
        let m = DischargeModel::new(1.752, 1.608, 1e-300, 1.510e-3, 0.7998).unwrap();
        let mut cfg = DischargeSimConfig::new(8, 0.1);
        cfg.truncation = Truncation::Fixed(1.0);
        cfg.small_jumps = SmallJumps::Drop;
        cfg.init = DischargeInit::Zero;
        let p = simulate_discharge(&m, &cfg, 50.0, 10.0, 3, 0).unwrap();
        assert!(p.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn exact_decay_between_jumps() {
        let m = DischargeModel::new(1.752, 1.608, 1e-300, 1.510e-3, 0.7998).unwrap();
        let mut cfg = DischargeSimConfig::new(4, 0.05);
        cfg.truncation = Truncation::Fixed(1.0);
        cfg.small_jumps = SmallJumps::Drop;
        let mut sim = DischargeSimulator::new(&m, &cfg, RngStream::new(1, 0)).unwrap();
        sim.q = alloc::vec![1.0, 2.0, 3.0, 4.0];
        let before = sim.q.clone();
        sim.step();
        for ((b, a), r) in before.iter().zip(&sim.q).zip(&sim.rates) {
            assert_eq!(*a, b * libm::exp(-r * 0.05));
        }
    }

    #[test]
    fn too_many_events_is_a_config_error() {
        let m = table4();
        let mut cfg = DischargeSimConfig::new(4, 1.0);
        cfg.truncation = Truncation::Fixed(1e-9);
        cfg.max_events_per_step = 1e3;
        assert!(matches!(DischargeSimulator::new(&m, &cfg, RngStream::new(1, 0)), Err(Error::Config(_))));
    }
}
