//! Inverse-Gaussian sampling and the one-step scheme for square-root
//! processes `dX = -R (X - f) dt + g sqrt(R X) dW`.
//!
//! Over a step of length `dt` the scheme draws
//! `U ~ IG(κ, (κ/ω)²)` with
//!
//! ```text
//! κ = X (1 - e^{-R dt}) / R - f ((1 - e^{-R dt}) / R - dt)
//! ω = g sqrt(R) (1 - e^{-R dt}) / R
//! ```
//!
//! and sets `Z = (U - κ) / ω`, `X' = X + R f dt - R U + g sqrt(R) Z`.
//! Algebraically `X' = R e^{-R dt} U / (1 - e^{-R dt}) + f (1 - R dt e^{-R dt} / (1 - e^{-R dt})) ≥ 0`;
//! the update is evaluated in the printed form and clamped at zero, so
//! cancellation at states far below `κ`'s scale rounds to an exact zero.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::quad;
use crate::rng::{tag, RngStream};
use crate::sum::KahanSum;
use crate::{Error, Result};

/// Draws from `IG(mu, eta)` with density
/// `sqrt(eta / (2π x³)) exp(-eta (x - mu)² / (2 mu² x))`.
pub fn sample_inverse_gaussian<R: Rng + ?Sized>(mu: f64, eta: f64, rng: &mut R) -> Result<f64> {
    if !(mu >= 0.0) || !(eta >= 0.0) {
        return Err(Error::arg(format!("inverse Gaussian parameters ({mu}, {eta}) must be nonnegative")));
    }
    Ok(ig_draw(mu, eta, rng))
}

/// Transformation method of Michael, Schucany and Haas, with the smaller
/// root of the quadratic in rationalized form `4 mu eta y / (s + y)²` so it
/// keeps full relative precision for strongly skewed laws. A zero mean
/// gives zero, an infinite shape gives the mean.
#[inline]
pub(crate) fn ig_draw<R: Rng + ?Sized>(mu: f64, eta: f64, rng: &mut R) -> f64 {
    if mu == 0.0 {
        return 0.0;
    }
    if eta == f64::INFINITY {
        return mu;
    }
    let v: f64 = rng.sample(StandardNormal);
    let y = mu * v * v;
    let s = libm::sqrt(4.0 * eta * y + y * y);
    let denom = s + y;
    let x = if denom > 0.0 { 4.0 * mu * eta * y / (denom * denom) } else { mu };
    let u: f64 = rng.random();
    if u * (mu + x) <= mu {
        x
    } else if x > 0.0 {
        mu * mu / x
    } else {
        0.0
    }
}

/// Parameters of `dX = -R (X - f) dt + g sqrt(R X) dW`, `X_0 = x0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CirParams {
    pub rate: f64,
    pub level: f64,
    pub noise: f64,
    pub x0: f64,
}

impl CirParams {
    pub fn new(rate: f64, level: f64, noise: f64, x0: f64) -> Result<Self> {
        if !(rate > 0.0) || !rate.is_finite() {
            return Err(Error::arg(format!("reversion rate {rate} must be positive")));
        }
        for (name, v) in [("level", level), ("noise", noise), ("initial state", x0)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::arg(format!("{name} {v} must be nonnegative")));
            }
        }
        Ok(Self { rate, level, noise, x0 })
    }
}

/// Per-step constants of the scheme for a fixed rate and step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepCoefficients {
    pub rate: f64,
    pub dt: f64,
    /// `(1 - e^{-R dt}) / R`
    pub c: f64,
    /// `(1 - e^{-R dt}) / R - dt`
    pub d: f64,
    /// `ω / g = sqrt(R) (1 - e^{-R dt}) / R`
    pub w: f64,
    /// `1 - R dt e^{-R dt} / (1 - e^{-R dt})`, the update at `U = 0`
    /// per unit level.
    pub offset: f64,
    sqrt_rate: f64,
}

impl StepCoefficients {
    pub fn new(rate: f64, dt: f64) -> Self {
        let rdt = rate * dt;
        let c = -libm::expm1(-rdt) / rate;
        // (1 - e^{-x}) - x, accurate for small x.
        let d = if rdt < 1e-3 {
            -rdt * rdt / 2.0 * (1.0 - rdt / 3.0 + rdt * rdt / 12.0) / rate
        } else {
            c - dt
        };
        // 1 - x e^{-x} / (1 - e^{-x}) = 1 - x / (e^x - 1)
        let offset = if rdt < 1e-3 { rdt / 2.0 - rdt * rdt / 12.0 } else { 1.0 - rdt / libm::expm1(rdt) };
        let sqrt_rate = libm::sqrt(rate);
        Self { rate, dt, c, d, w: sqrt_rate * c, offset, sqrt_rate }
    }

    /// Drift and inverse-Gaussian parameters `(κ, ω)` at state `x`.
    #[inline]
    pub fn kappa_omega(&self, x: f64, level: f64, noise: f64) -> (f64, f64) {
        ((x * self.c - level * self.d).max(0.0), noise * self.w)
    }

    /// State update for a given draw `u` of `U`.
    #[inline]
    pub fn update(&self, x: f64, level: f64, noise: f64, kappa: f64, omega: f64, u: f64) -> f64 {
        if u == 0.0 {
            // The printed form would leave an underflowed x in place.
            return level * self.offset;
        }
        let z = if omega > 0.0 { (u - kappa) / omega } else { 0.0 };
        (x + self.rate * level * self.dt - self.rate * u + noise * self.sqrt_rate * z).max(0.0)
    }

    /// One step of the scheme with precomputed coefficients.
    #[inline]
    pub fn step<R: Rng + ?Sized>(&self, x: f64, level: f64, noise: f64, rng: &mut R) -> f64 {
        let (kappa, omega) = self.kappa_omega(x, level, noise);
        let eta = if omega > 0.0 {
            let s = kappa / omega;
            s * s
        } else {
            f64::INFINITY
        };
        let u = ig_draw(kappa, eta, rng);
        self.update(x, level, noise, kappa, omega, u)
    }
}

/// One step of the inverse-Gaussian scheme.
pub fn cir_step<R: Rng + ?Sized>(x: f64, p: &CirParams, dt: f64, rng: &mut R) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::arg(format!("state {x} must be nonnegative")));
    }
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::arg(format!("step {dt} must be positive")));
    }
    Ok(StepCoefficients::new(p.rate, dt).step(x, p.level, p.noise, rng))
}

/// One Euler–Maruyama step with `|X|` under the root. May go negative.
pub fn euler_maruyama_step<R: Rng + ?Sized>(x: f64, p: &CirParams, dt: f64, rng: &mut R) -> f64 {
    let drift = -p.rate * (x - p.level) * dt;
    if p.noise == 0.0 {
        return x + drift;
    }
    let n: f64 = rng.sample(StandardNormal);
    x + drift + p.noise * libm::sqrt(p.rate * x.abs() * dt) * n
}

/// Transient mean and variance for unit reversion rate.
pub fn cir_theoretical_moments(p: &CirParams, t: f64) -> Result<(f64, f64)> {
    if p.rate != 1.0 {
        return Err(Error::Unsupported(format!("transient moments are implemented for R = 1, got {}", p.rate)));
    }
    if !(t >= 0.0) {
        return Err(Error::arg(format!("time {t} must be nonnegative")));
    }
    let e = libm::exp(-t);
    let one_minus_e = -libm::expm1(-t);
    let g2 = p.noise * p.noise;
    let mean = p.x0 * e + p.level * one_minus_e;
    let var = g2 * p.x0 * e * one_minus_e + 0.5 * p.level * g2 * one_minus_e * one_minus_e;
    Ok((mean, var))
}

/// Mean extinction time of `dX = -R X dt + g sqrt(R X) dW` from `x0`.
///
/// `P(τ > t) = 1 - exp(-c e^{-Rt} / (1 - e^{-Rt}))` with `c = 2 x0 / g²`;
/// integrating over `t` and substituting `s = e^{-Rt}` gives
/// `E[τ] = (1/R) ∫₀¹ (1 - exp(-c s / (1 - s))) / s ds`.
pub fn cir_hitting_time_mean(x0: f64, rate: f64, noise: f64) -> Result<f64> {
    for (name, v) in [("initial state", x0), ("rate", rate), ("noise", noise)] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::arg(format!("{name} {v} must be positive")));
        }
    }
    let c = 2.0 * x0 / (noise * noise);
    let integrand = |s: f64| {
        if s <= 0.0 {
            return c;
        }
        if s >= 1.0 {
            return 1.0;
        }
        -libm::expm1(-c * s / (1.0 - s)) / s
    };
    Ok(quad::integrate(integrand, 0.0, 1.0, 1e-13, 1e-11)? / rate)
}

/// The three single-process experiments: `R = 1`, `g = 10`, `X_0 = 5`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ValidationCase {
    A,
    B,
    C,
}

impl ValidationCase {
    pub const ALL: [ValidationCase; 3] = [ValidationCase::A, ValidationCase::B, ValidationCase::C];

    pub fn params(self) -> CirParams {
        let level = match self {
            ValidationCase::A => 100.0,
            ValidationCase::B => 10.0,
            ValidationCase::C => 0.0,
        };
        CirParams { rate: 1.0, level, noise: 10.0, x0: 5.0 }
    }

    pub fn label(self) -> &'static str {
        match self {
            ValidationCase::A => "A",
            ValidationCase::B => "B",
            ValidationCase::C => "C",
        }
    }

    fn id(self) -> u64 {
        self as u64
    }
}

impl core::str::FromStr for ValidationCase {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "A" | "a" => Ok(ValidationCase::A),
            "B" | "b" => Ok(ValidationCase::B),
            "C" | "c" => Ok(ValidationCase::C),
            other => Err(Error::arg(format!("unknown validation case {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationConfig {
    pub case: ValidationCase,
    pub dt: f64,
    pub n_paths: u64,
    pub horizon: f64,
    /// Spacing of the grid on which mean and variance trajectories are
    /// compared with theory; must be a multiple of `dt`.
    pub report_dt: f64,
    /// In case C, paths still positive at the horizon keep running up to
    /// this time.
    pub hit_cap: f64,
    /// Upper bound on `n_paths × horizon / dt`.
    pub step_budget: f64,
    pub seed: u64,
}

impl ValidationConfig {
    pub fn new(case: ValidationCase, dt: f64, n_paths: u64, seed: u64) -> Self {
        Self { case, dt, n_paths, horizon: 20.0, report_dt: 0.1, hit_cap: 200.0, step_budget: 1e11, seed }
    }

    fn stride(&self) -> Result<usize> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::arg(format!("step {} must be positive", self.dt)));
        }
        let report = self.report_dt.max(self.dt);
        let stride = libm::round(report / self.dt);
        if (stride * self.dt - report).abs() > 1e-9 * report {
            return Err(Error::arg(format!("report spacing {} is not a multiple of dt {}", self.report_dt, self.dt)));
        }
        Ok(stride as usize)
    }

    fn steps(&self) -> Result<usize> {
        let n = libm::round(self.horizon / self.dt);
        if !(self.horizon > 0.0) || (n * self.dt - self.horizon).abs() > 1e-9 * self.horizon {
            return Err(Error::arg(format!("horizon {} is not a positive multiple of dt {}", self.horizon, self.dt)));
        }
        Ok(n as usize)
    }

    pub fn validate(&self) -> Result<()> {
        let stride = self.stride()?;
        let steps = self.steps()?;
        if steps % stride != 0 {
            return Err(Error::arg("horizon is not a multiple of the report spacing"));
        }
        if self.n_paths < 2 {
            return Err(Error::arg("at least two paths are needed for a variance"));
        }
        if !(self.hit_cap >= self.horizon) {
            return Err(Error::arg("hitting-time cap must not precede the horizon"));
        }
        let work = self.n_paths as f64 * steps as f64;
        if work > self.step_budget {
            return Err(Error::Constraint(format!(
                "{} paths × {} steps = {work:.3e} exceeds the step budget {:.3e}",
                self.n_paths, steps, self.step_budget
            )));
        }
        Ok(())
    }

    /// RNG stream of one path; independent of `dt`.
    pub fn path_stream(&self, path: u64) -> RngStream {
        RngStream::keyed(self.seed, &[tag::VALIDATION, self.case.id(), path])
    }
}

/// Order-sensitive partial sums over a contiguous block of paths.
/// Merging blocks in path order reproduces the same totals however they
/// were distributed over threads.
#[derive(Debug, Clone)]
pub struct ValidationAccumulator {
    pub paths: u64,
    pub sum: Vec<KahanSum>,
    pub sum_sq: Vec<KahanSum>,
    pub hit_sum: KahanSum,
    pub hit_sum_sq: KahanSum,
    pub hits: u64,
}

impl ValidationAccumulator {
    pub fn new(points: usize) -> Self {
        Self {
            paths: 0,
            sum: alloc::vec![KahanSum::new(); points],
            sum_sq: alloc::vec![KahanSum::new(); points],
            hit_sum: KahanSum::new(),
            hit_sum_sq: KahanSum::new(),
            hits: 0,
        }
    }

    pub fn merge(&mut self, other: &ValidationAccumulator) {
        self.paths += other.paths;
        for (a, b) in self.sum.iter_mut().zip(&other.sum) {
            a.merge(b);
        }
        for (a, b) in self.sum_sq.iter_mut().zip(&other.sum_sq) {
            a.merge(b);
        }
        self.hit_sum.merge(&other.hit_sum);
        self.hit_sum_sq.merge(&other.hit_sum_sq);
        self.hits += other.hits;
    }
}

/// Simulates paths `start..end` of the experiment.
pub fn simulate_validation_block(cfg: &ValidationConfig, start: u64, end: u64) -> Result<ValidationAccumulator> {
    cfg.validate()?;
    let stride = cfg.stride()?;
    let steps = cfg.steps()?;
    let points = steps / stride + 1;
    let p = cfg.case.params();
    let coef = StepCoefficients::new(p.rate, cfg.dt);
    let absorbing = p.level == 0.0;
    let cap_steps = libm::round(cfg.hit_cap / cfg.dt) as usize;
    let mut acc = ValidationAccumulator::new(points);
    for path in start..end {
        let mut rng = cfg.path_stream(path);
        let mut x = p.x0;
        acc.sum[0].add(x);
        acc.sum_sq[0].add(x * x);
        let mut hit = None;
        for k in 1..=steps {
            x = coef.step(x, p.level, p.noise, &mut rng);
            if absorbing && hit.is_none() && x == 0.0 {
                hit = Some(k);
            }
            if k % stride == 0 {
                let j = k / stride;
                acc.sum[j].add(x);
                acc.sum_sq[j].add(x * x);
            }
            if x == 0.0 && absorbing {
                // Absorbed: the remaining grid values are zero.
                break;
            }
        }
        if absorbing {
            let mut k = steps;
            while hit.is_none() && k < cap_steps {
                k += 1;
                x = coef.step(x, p.level, p.noise, &mut rng);
                if x == 0.0 {
                    hit = Some(k);
                }
            }
            if let Some(k) = hit {
                let tau = k as f64 * cfg.dt;
                acc.hit_sum.add(tau);
                acc.hit_sum_sq.add(tau * tau);
                acc.hits += 1;
            }
        }
        acc.paths += 1;
    }
    Ok(acc)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub case: ValidationCase,
    pub dt: f64,
    pub n_paths: u64,
    /// Comparison grid and the empirical and exact trajectories on it.
    pub times: Vec<f64>,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub exact_mean: Vec<f64>,
    pub exact_variance: Vec<f64>,
    /// Root-mean-square deviation over the comparison grid.
    pub mean_lsq_error: f64,
    pub var_lsq_error: f64,
    /// Case C only: estimated mean hitting time, its standard error, the
    /// exact value and the absolute error.
    pub hit_time_mean: Option<f64>,
    pub hit_time_se: Option<f64>,
    pub hit_time_exact: Option<f64>,
    pub hit_time_error: Option<f64>,
    /// Paths that never reached zero before the cap.
    pub unhit: u64,
}

impl ValidationReport {
    /// The error whose decay the convergence rate tracks: hitting time in
    /// case C, the variance trajectory otherwise.
    pub fn primary_error(&self) -> f64 {
        self.hit_time_error.unwrap_or(self.var_lsq_error)
    }
}

pub fn finish_validation(cfg: &ValidationConfig, acc: &ValidationAccumulator) -> Result<ValidationReport> {
    let p = cfg.case.params();
    let stride = cfg.stride()?;
    let n = acc.paths as f64;
    if acc.paths < 2 {
        return Err(Error::arg("at least two paths are needed for a variance"));
    }
    let mut times = Vec::with_capacity(acc.sum.len());
    let mut mean = Vec::with_capacity(acc.sum.len());
    let mut variance = Vec::with_capacity(acc.sum.len());
    let mut exact_mean = Vec::with_capacity(acc.sum.len());
    let mut exact_variance = Vec::with_capacity(acc.sum.len());
    let mut se_mean = KahanSum::new();
    let mut se_var = KahanSum::new();
    for (j, (s, s2)) in acc.sum.iter().zip(&acc.sum_sq).enumerate() {
        let t = (j * stride) as f64 * cfg.dt;
        let m = s.value() / n;
        let v = ((s2.value() - n * m * m) / (n - 1.0)).max(0.0);
        let (em, ev) = cir_theoretical_moments(&p, t)?;
        se_mean.add((m - em) * (m - em));
        se_var.add((v - ev) * (v - ev));
        times.push(t);
        mean.push(m);
        variance.push(v);
        exact_mean.push(em);
        exact_variance.push(ev);
    }
    let k = times.len() as f64;
    let (mut hit_time_mean, mut hit_time_se, mut hit_time_exact, mut hit_time_error) = (None, None, None, None);
    if p.level == 0.0 {
        let exact = cir_hitting_time_mean(p.x0, p.rate, p.noise)?;
        if acc.hits > 0 {
            let h = acc.hits as f64;
            let m = acc.hit_sum.value() / h;
            let v = if acc.hits > 1 { ((acc.hit_sum_sq.value() - h * m * m) / (h - 1.0)).max(0.0) } else { 0.0 };
            hit_time_mean = Some(m);
            hit_time_se = Some(libm::sqrt(v / h));
            hit_time_error = Some((m - exact).abs());
        }
        hit_time_exact = Some(exact);
    }
    Ok(ValidationReport {
        case: cfg.case,
        dt: cfg.dt,
        n_paths: acc.paths,
        times,
        mean,
        variance,
        exact_mean,
        exact_variance,
        mean_lsq_error: libm::sqrt(se_mean.value() / k),
        var_lsq_error: libm::sqrt(se_var.value() / k),
        hit_time_mean,
        hit_time_se,
        hit_time_exact,
        hit_time_error,
        unhit: if p.level == 0.0 { acc.paths - acc.hits } else { 0 },
    })
}

/// Runs one experiment sequentially.
pub fn run_validation_suite(cfg: &ValidationConfig) -> Result<ValidationReport> {
    let acc = simulate_validation_block(cfg, 0, cfg.n_paths)?;
    finish_validation(cfg, &acc)
}

/// `log10(error(10 dt) / error(dt))` for each report that has a
/// predecessor at ten times its step in the same case.
pub fn convergence_rates(reports: &[ValidationReport]) -> Vec<Option<f64>> {
    reports
        .iter()
        .map(|r| {
            reports
                .iter()
                .find(|c| c.case == r.case && (c.dt - 10.0 * r.dt).abs() <= 1e-9 * c.dt)
                .map(|c| libm::log10(c.primary_error() / r.primary_error()))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stream(i: u64) -> RngStream {
        RngStream::keyed(2024, &[tag::TEST, i])
    }

    #[test]
    fn degenerate_draw_is_zero() {
        let mut rng = stream(0);
        assert_eq!(sample_inverse_gaussian(0.0, 0.0, &mut rng).unwrap(), 0.0);
        assert!(sample_inverse_gaussian(-1.0, 1.0, &mut rng).is_err());
        assert!(sample_inverse_gaussian(1.0, -1.0, &mut rng).is_err());
    }

    #[test]
    fn ig_mean_and_variance() {
        let mut rng = stream(1);
        let n = 1_000_000;
        let mut s = KahanSum::new();
        let mut s2 = KahanSum::new();
        let mut s4 = KahanSum::new();
        let xs: Vec<f64> = (0..n).map(|_| sample_inverse_gaussian(2.0, 3.0, &mut rng).unwrap()).collect();
        for &x in &xs {
            s.add(x);
        }
        let m = s.value() / n as f64;
        for &x in &xs {
            let d = x - m;
            s2.add(d * d);
            s4.add(d * d * d * d);
        }
        let v = s2.value() / (n - 1) as f64;
        let m4 = s4.value() / n as f64;
        let se = libm::sqrt(8.0 / 3.0) / 1e3;
        assert!((m - 2.0).abs() < 3.0 * se, "mean {m}");
        // SE of the sample variance: sqrt((m4 - v²) / n).
        let se_v = libm::sqrt((m4 - v * v) / n as f64);
        assert!((v - 8.0 / 3.0).abs() < 5.0 * se_v, "variance {v} se {se_v}");
    }

    #[test]
    fn kappa_matches_direct_evaluation() {
        let c = StepCoefficients::new(1.0, 0.1);
        let (k, _) = c.kappa_omega(5.0, 100.0, 10.0);
        let e = libm::exp(-0.1);
        let direct = 5.0 * (1.0 - e) - 100.0 * ((1.0 - e) - 0.1);
        assert!((k - direct).abs() < 1e-12);
        assert!((k - 0.959555).abs() < 1e-6);
    }

    #[test]
    fn update_matches_closed_form() {
        for &(r, dt, x, f, g) in &[(1.0, 0.1, 5.0, 100.0, 10.0), (0.3, 0.01, 2.0, 1.0, 0.5), (20.0, 0.5, 0.1, 3.0, 2.0)] {
            let c = StepCoefficients::new(r, dt);
            let (kappa, omega) = c.kappa_omega(x, f, g);
            let e = libm::exp(-r * dt);
            for &u in &[0.0, 0.5 * kappa, kappa, 3.0 * kappa] {
                let closed = r * e / (1.0 - e) * u + f * (1.0 - r * dt * e / (1.0 - e));
                let ours = c.update(x, f, g, kappa, omega, u);
                assert!((closed - ours).abs() < 1e-9 * (1.0 + closed.abs()), "{closed} vs {ours}");
            }
        }
    }

    #[test]
    fn absorbing_and_deterministic_steps() {
        let mut rng = stream(2);
        let p = CirParams::new(1.0, 0.0, 3.0, 0.0).unwrap();
        assert_eq!(cir_step(0.0, &p, 0.1, &mut rng).unwrap(), 0.0);
        let p = CirParams::new(1.0, 100.0, 0.0, 5.0).unwrap();
        let x = cir_step(5.0, &p, 0.1, &mut rng).unwrap();
        let e = libm::exp(-0.1);
        assert!((x - (5.0 * e + 100.0 * (1.0 - e))).abs() < 1e-11);
        assert!(cir_step(-1.0, &p, 0.1, &mut rng).is_err());
        assert!(cir_step(1.0, &p, 0.0, &mut rng).is_err());
    }

    #[test]
    fn one_step_conditional_mean() {
        let mut rng = stream(3);
        let p = CirParams::new(1.0, 100.0, 10.0, 5.0).unwrap();
        let n = 1_000_000;
        let mut s = KahanSum::new();
        let mut s2 = KahanSum::new();
        for _ in 0..n {
            let x = cir_step(5.0, &p, 0.1, &mut rng).unwrap();
            s.add(x);
            s2.add(x * x);
        }
        let m = s.value() / n as f64;
        let se = libm::sqrt((s2.value() / n as f64 - m * m) / n as f64);
        let exact = 5.0 * libm::exp(-0.1) + 100.0 * (1.0 - libm::exp(-0.1));
        assert!((exact - 14.0405).abs() < 1e-4);
        assert!((m - exact).abs() < 3.0 * se, "{m} vs {exact} (se {se})");
    }

    #[test]
    fn euler_reference_step() {
        let mut rng = stream(4);
        let p = CirParams::new(1.0, 100.0, 0.0, 5.0).unwrap();
        assert!((euler_maruyama_step(5.0, &p, 0.1, &mut rng) - 14.5).abs() < 1e-12);
        let p0 = CirParams::new(1.0, 0.0, 0.0, 0.0).unwrap();
        assert_eq!(euler_maruyama_step(0.0, &p0, 0.1, &mut rng), 0.0);
        let p = CirParams::new(1.0, 10.0, 10.0, 0.01).unwrap();
        let neg = (0..100_000).filter(|_| euler_maruyama_step(0.01, &p, 0.01, &mut rng) < 0.0).count();
        assert!(neg > 0);
    }

    #[test]
    fn theoretical_moments() {
        let a = ValidationCase::A.params();
        assert_eq!(cir_theoretical_moments(&a, 0.0).unwrap(), (5.0, 0.0));
        let (m, v) = cir_theoretical_moments(&a, 60.0).unwrap();
        assert!((m - 100.0).abs() < 1e-9 && (v - 5000.0).abs() < 1e-6);
        let c = ValidationCase::C.params();
        let (m, _) = cir_theoretical_moments(&c, 1.0).unwrap();
        assert!((m - 1.8394).abs() < 1e-4);
        let bad = CirParams::new(2.0, 1.0, 1.0, 1.0).unwrap();
        assert!(matches!(cir_theoretical_moments(&bad, 1.0), Err(Error::Unsupported(_))));
    }

    #[test]
    fn hitting_time_quadrature() {
        let t = cir_hitting_time_mean(5.0, 1.0, 10.0).unwrap();
        assert!((t - 0.289273).abs() < 1e-6, "{t}");
        // Doubling R halves the time.
        let t2 = cir_hitting_time_mean(5.0, 2.0, 10.0).unwrap();
        assert!((2.0 * t2 - t).abs() < 1e-10);
        assert!(cir_hitting_time_mean(1e-9, 1.0, 10.0).unwrap() < 1e-8);
        assert!(cir_hitting_time_mean(0.0, 1.0, 10.0).is_err());
    }

    #[test]
    fn budget_guard() {
        let mut cfg = ValidationConfig::new(ValidationCase::A, 0.001, 1_000_000, 1);
        cfg.step_budget = 1e9;
        assert!(matches!(run_validation_suite(&cfg), Err(Error::Constraint(_))));
    }

    #[test]
    fn blocks_merge_to_the_whole() {
        let cfg = ValidationConfig::new(ValidationCase::B, 0.1, 300, 5);
        let whole = simulate_validation_block(&cfg, 0, 300).unwrap();
        let mut parts = simulate_validation_block(&cfg, 0, 100).unwrap();
        parts.merge(&simulate_validation_block(&cfg, 100, 300).unwrap());
        let a = finish_validation(&cfg, &whole).unwrap();
        let b = finish_validation(&cfg, &parts).unwrap();
        assert!((a.mean_lsq_error - b.mean_lsq_error).abs() < 1e-12);
        assert!((a.var_lsq_error - b.var_lsq_error).abs() < 1e-9);
    }

    #[test]
    fn case_c_paths_stay_absorbed() {
        let p = ValidationCase::C.params();
        let c = StepCoefficients::new(1.0, 0.01);
        let mut rng = stream(6);
        for _ in 0..200 {
            let mut x = p.x0;
            let mut dead = false;
            for _ in 0..2000 {
                x = c.step(x, p.level, p.noise, &mut rng);
                if dead {
                    assert_eq!(x, 0.0);
                }
                dead |= x == 0.0;
            }
        }
    }
}
