//! Identification of the seasonal, discharge and memory models from data.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;

use crate::discharge::{DischargeModel, DischargeStats};
use crate::linalg::least_squares;
use crate::measures::MixingMeasure;
use crate::memory::{MemoryModel, SeasonalModel, YEAR};
use crate::optim::{golden_section_max, nelder_mead, NelderMeadOptions};
use crate::rng::{tag, RngStream};
use crate::stats::{
    empirical_autocorrelation, empirical_cross_covariance, empirical_moments, DischargeMoments, IntegralGrid,
    LagFunction, MemoryStatistics,
};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SeasonalFit {
    pub model: SeasonalModel,
    /// Indices of samples with nonpositive concentration.
    pub rejected: Vec<usize>,
    /// RMS residual of `ln C`.
    pub rms: f64,
}

/// Linear least squares of `ln C` on `{1, sin ωt, cos ωt, sin 2ωt, cos 2ωt}`,
/// `ω = 2π / T`.
pub fn fit_seasonal(samples: &[(f64, f64)]) -> Result<SeasonalFit> {
    let mut rejected = Vec::new();
    let mut rows = Vec::new();
    let mut y = Vec::new();
    let w = 2.0 * core::f64::consts::PI / YEAR;
    for (i, &(t, c)) in samples.iter().enumerate() {
        if !(c > 0.0) || !c.is_finite() {
            rejected.push(i);
            continue;
        }
        rows.extend_from_slice(&[1.0, libm::sin(w * t), libm::cos(w * t), libm::sin(2.0 * w * t), libm::cos(2.0 * w * t)]);
        y.push(libm::log(c));
    }
    if y.len() < 10 {
        return Err(Error::arg(format!("{} usable samples; the seasonal fit needs 10", y.len())));
    }
    let x = least_squares(&rows, y.len(), 5, &y).map_err(|e| match e {
        Error::Numeric(m) => Error::numeric(format!("seasonal fit failed: {m}")),
        other => other,
    })?;
    // A sin(ωt + B) = A cos B sin ωt + A sin B cos ωt
    let harmonic = |s: f64, c: f64| {
        let a = libm::hypot(s, c);
        (a, if a > 0.0 { libm::atan2(c, s) } else { 0.0 })
    };
    let (a1, b1) = harmonic(x[1], x[2]);
    let (a2, b2) = harmonic(x[3], x[4]);
    let model = SeasonalModel::new(x[0], a1, a2, b1, b2);
    let ss: f64 = y
        .iter()
        .enumerate()
        .map(|(i, yi)| {
            let fit: f64 = (0..5).map(|k| rows[i * 5 + k] * x[k]).sum();
            (yi - fit) * (yi - fit)
        })
        .sum();
    Ok(SeasonalFit { model, rejected, rms: libm::sqrt(ss / y.len() as f64) })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub starts: usize,
    pub max_evals: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { starts: 20, max_evals: 2000, tol: 1e-10, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiStart {
    pub x: Vec<f64>,
    pub objective: f64,
    pub evals: usize,
    pub converged: bool,
}

/// Nelder–Mead from `starts` points (the first is `x0`, the rest drawn by
/// `draw`), then one polishing restart from the best.
fn multistart<F, D>(f: F, x0: &[f64], mut draw: D, opts: &FitOptions, stream: u64) -> MultiStart
where
    F: Fn(&[f64]) -> f64,
    D: FnMut(&mut RngStream) -> Vec<f64>,
{
    let mut rng = RngStream::keyed(opts.seed, &[tag::CALIBRATE, stream]);
    let nm = NelderMeadOptions { max_evals: opts.max_evals, tol: opts.tol, step: alloc::vec![0.5; x0.len()] };
    let mut best: Option<MultiStart> = None;
    let mut evals = 0;
    for k in 0..opts.starts.max(1) {
        let start = if k == 0 { x0.to_vec() } else { draw(&mut rng) };
        let m = nelder_mead(&f, &start, &nm);
        evals += m.evals;
        if best.as_ref().map_or(true, |b| m.value < b.objective) {
            best = Some(MultiStart { x: m.x, objective: m.value, evals: 0, converged: m.converged });
        }
    }
    let mut best = best.unwrap();
    let polish = nelder_mead(&f, &best.x, &NelderMeadOptions { step: alloc::vec![0.05; x0.len()], ..nm });
    evals += polish.evals;
    if polish.value <= best.objective {
        best = MultiStart { x: polish.x, objective: polish.value, evals: 0, converged: polish.converged };
    }
    best.evals = evals;
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerLawFit {
    /// Exponent: `α - 1` for discharge, `ζ` for memory.
    pub exponent: f64,
    pub scale: f64,
    pub objective: f64,
    pub evals: usize,
    pub converged: bool,
    /// The fit ran off toward the exponential limit `β → 0, (α-1)β fixed`.
    pub boundary: bool,
}

fn lag_points(emp: &LagFunction) -> Vec<(f64, f64)> {
    emp.lags.iter().zip(&emp.values).map(|(&h, &v)| (h, v)).filter(|p| p.1.is_finite()).collect()
}

/// Least squares of `(1 + s h)^{-e}` against an empirical autocorrelation,
/// in `(ln e, ln s)`.
pub fn fit_power_law(emp: &LagFunction, opts: &FitOptions, stream: u64) -> Result<PowerLawFit> {
    let pts = lag_points(emp);
    if pts.iter().filter(|p| p.0 > 0.0).count() < 5 {
        return Err(Error::arg("autocorrelation fit needs at least 5 positive lags"));
    }
    let f = |x: &[f64]| {
        if x.iter().any(|v| v.abs() > 30.0) {
            return f64::INFINITY;
        }
        let (e, s) = (libm::exp(x[0]), libm::exp(x[1]));
        pts.iter().map(|&(h, a)| (a - libm::pow(1.0 + s * h, -e)) * (a - libm::pow(1.0 + s * h, -e))).sum()
    };
    let m = multistart(f, &[0.0, 0.0], |r| alloc::vec![r.random_range(-3.0..3.0), r.random_range(-5.0..3.0)], opts, stream);
    let (e, s) = (libm::exp(m.x[0]), libm::exp(m.x[1]));
    Ok(PowerLawFit { exponent: e, scale: s, objective: m.objective, evals: m.evals, converged: m.converged, boundary: e > 100.0 || s < 1e-3 })
}

/// Least squares of `e^{-s h}`.
pub fn fit_exponential(emp: &LagFunction) -> Result<(f64, f64)> {
    let pts = lag_points(emp);
    if pts.iter().filter(|p| p.0 > 0.0).count() < 5 {
        return Err(Error::arg("autocorrelation fit needs at least 5 positive lags"));
    }
    let f = |u: f64| -> f64 {
        let s = libm::exp(u);
        -pts.iter().map(|&(h, a)| (a - libm::exp(-s * h)) * (a - libm::exp(-s * h))).sum::<f64>()
    };
    // Coarse scan of ln s then golden refinement.
    let grid: Vec<f64> = (0..=400).map(|k| -12.0 + k as f64 * 0.04).collect();
    let k = (0..grid.len()).max_by(|&i, &j| f(grid[i]).total_cmp(&f(grid[j]))).unwrap();
    let lo = grid[k.saturating_sub(1)];
    let hi = grid[(k + 1).min(grid.len() - 1)];
    let u = golden_section_max(f, lo, hi, 1e-12);
    Ok((libm::exp(u), -f(u)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DischargeAutocorrelationFit {
    pub alpha: f64,
    pub beta: f64,
    pub objective: f64,
    pub evals: usize,
    pub converged: bool,
    pub boundary: bool,
}

/// `(α, β)` minimizing `Σ_h (A_emp(h) - (1 + βh)^{-(α-1)})²`.
pub fn fit_discharge_autocorrelation(emp: &LagFunction, opts: &FitOptions) -> Result<DischargeAutocorrelationFit> {
    let p = fit_power_law(emp, opts, 1)?;
    Ok(DischargeAutocorrelationFit {
        alpha: 1.0 + p.exponent,
        beta: p.scale,
        objective: p.objective,
        evals: p.evals,
        converged: p.converged,
        boundary: p.boundary,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DischargeMomentFit {
    pub model: DischargeModel,
    pub fitted: DischargeStats,
    pub objective: f64,
    pub evals: usize,
    pub converged: bool,
    /// Objective above `1e-2`.
    pub poor_fit: bool,
}

/// Sum of squared relative errors over mean, variance, skewness and kurtosis.
pub fn moment_objective(target: &DischargeStats, model: &DischargeStats) -> f64 {
    let r = |e: f64, m: f64| ((e - m) / e) * ((e - m) / e);
    r(target.mean, model.mean) + r(target.variance, model.variance) + r(target.skewness, model.skewness) + r(target.kurtosis, model.kurtosis)
}

/// Moment matching for `(a1, a2, a3)` in `(ln a1, ln a2, ln(1 - a3))`.
/// Every start fixes `a1` to match the mean, since cumulants are linear in
/// `a1`.
pub fn fit_discharge_moments(target: &DischargeStats, alpha: f64, beta: f64, opts: &FitOptions) -> Result<DischargeMomentFit> {
    for (name, v) in [("mean", target.mean), ("variance", target.variance), ("skewness", target.skewness), ("kurtosis", target.kurtosis)] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::arg(format!("empirical {name} {v} must be finite and positive")));
        }
    }
    DischargeModel::new(alpha, beta, 1.0, 1.0, 0.5)?;
    let build = |x: &[f64]| DischargeModel::new(alpha, beta, libm::exp(x[0]), libm::exp(x[1]), 1.0 - libm::exp(x[2]));
    let f = |x: &[f64]| {
        if x.iter().any(|v| v.abs() > 60.0) {
            return f64::INFINITY;
        }
        match build(x).and_then(|m| DischargeStats::of_model(&m)) {
            Ok(s) => moment_objective(target, &s),
            Err(_) => f64::INFINITY,
        }
    };
    let anchor = |mut x: Vec<f64>| -> Vec<f64> {
        if let Ok(s) = build(&x).and_then(|m| DischargeStats::of_model(&m)) {
            if s.mean > 0.0 && s.mean.is_finite() {
                x[0] += libm::log(target.mean / s.mean);
            }
        }
        x
    };
    let x0 = anchor(alloc::vec![0.0, libm::log(1e-3), libm::log(0.2)]);
    let m = multistart(
        f,
        &x0,
        |r| {
            let a3: f64 = r.random_range(-1.0..0.99);
            anchor(alloc::vec![0.0, r.random_range(-10.0..0.0), libm::log(1.0 - a3)])
        },
        opts,
        2,
    );
    let model = build(&m.x)?;
    let fitted = DischargeStats::of_model(&model)?;
    Ok(DischargeMomentFit { model, fitted, objective: m.objective, evals: m.evals, converged: m.converged, poor_fit: !(m.objective <= 1e-2) })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RhoKind {
    Gamma,
    Dirac,
}

impl core::str::FromStr for RhoKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gamma" => Ok(RhoKind::Gamma),
            "dirac" => Ok(RhoKind::Dirac),
            other => Err(Error::Config(format!("unknown rho kind `{other}` (gamma or dirac)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentifyConfig {
    pub n_int: usize,
    /// Weekly bins `[7k - 3.5, 7k + 3.5)`, `k = 1..=13`, by default.
    pub lag_bins: Vec<(f64, f64)>,
    pub zeta_step: f64,
    pub zeta_window: f64,
    pub xi_step: f64,
    /// Dirac search covers `[ξ_n / w, ξ_n w]`.
    pub xi_factor: f64,
    pub fit: FitOptions,
}

impl IdentifyConfig {
    pub fn new(n_int: usize) -> Self {
        Self {
            n_int,
            lag_bins: (1..=13).map(|k| (7.0 * k as f64 - 3.5, 7.0 * k as f64 + 3.5)).collect(),
            zeta_step: 5e-4,
            zeta_window: 0.3,
            xi_step: 1e-3,
            xi_factor: 3.0,
            fit: FitOptions::default(),
        }
    }
}

/// Deseasonalized memory samples and discharge statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryData {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub q_mean: f64,
    pub q_variance: f64,
    pub lambda0: f64,
    pub theta: MixingMeasure,
}

/// Empirical summaries entering the search.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryTargets {
    pub mean: f64,
    pub variance: f64,
    pub autocorrelation: LagFunction,
    pub q_mean: f64,
    pub q_variance: f64,
    pub lambda0: f64,
}

impl MemoryTargets {
    pub fn from_data(data: &MemoryData, cfg: &IdentifyConfig) -> Result<Self> {
        let mom = empirical_moments(&data.values)?;
        let bins = empirical_autocorrelation(&data.times, &data.values, &cfg.lag_bins)?;
        let (lags, values): (Vec<f64>, Vec<f64>) =
            bins.iter().filter_map(|b| Some((b.lag?, b.value?))).unzip();
        if !(data.q_mean > 0.0) || !(data.q_variance > 0.0) {
            return Err(Error::arg("discharge mean and variance must be positive"));
        }
        Ok(Self {
            mean: mom.mean,
            variance: mom.variance,
            autocorrelation: LagFunction::new(lags, values)?,
            q_mean: data.q_mean,
            q_variance: data.q_variance,
            lambda0: data.lambda0,
        })
    }
}

/// One point of the `ζ` (gamma) or `ξ` (Dirac) search.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub param: f64,
    pub w: f64,
    pub sigma: f64,
    pub b: f64,
    pub a: f64,
    pub i0: f64,
    pub lambda0: f64,
    /// `|λ(0)_e - λ(0)_m|`.
    pub objective: f64,
    pub autocorrelation_sse: f64,
}

impl Candidate {
    pub fn feasible(&self) -> bool {
        self.a >= 0.0 && self.objective.is_finite()
    }
}

fn rho_for(kind: RhoKind, param: f64, xi_n: f64) -> Result<MixingMeasure> {
    match kind {
        RhoKind::Gamma => MixingMeasure::gamma(param, xi_n),
        RhoKind::Dirac => MixingMeasure::dirac(param),
    }
}

/// Fit `w` in `A(h) = (L(h) + w K(h)) / (1 + w I(0))` on `[0, ∞)`, as
/// `w = s / (1 - s)` over `s ∈ [0, 1)`.
fn fit_w(a: &[f64], l: &[f64], k: &[f64], i0: f64) -> (f64, f64) {
    let sse = |w: f64| -> f64 {
        a.iter().zip(l).zip(k).map(|((&ae, &le), &ke)| {
            let m = (le + w * ke) / (1.0 + w * i0);
            (ae - m) * (ae - m)
        }).sum()
    };
    let of_s = |s: f64| -sse(s / (1.0 - s));
    let n = 400;
    let grid: Vec<f64> = (0..n).map(|j| j as f64 / n as f64).collect();
    let j = (0..n).max_by(|&x, &y| of_s(grid[x]).total_cmp(&of_s(grid[y])).then(y.cmp(&x))).unwrap();
    let lo = grid[j.saturating_sub(1)];
    let hi = if j + 1 < n { grid[j + 1] } else { 1.0 - 1e-12 };
    let s = if j == 0 && of_s(0.0) >= of_s(grid[1]) { 0.0 } else { golden_section_max(of_s, lo, hi, 1e-12) };
    let s = if of_s(0.0) >= of_s(s) { 0.0 } else { s };
    let w = s / (1.0 - s);
    (w, sse(w))
}

/// Evaluate one search point: fit `w`, then `σ`, `b`, `a` in closed form
/// and the model covariance `λ(0)`.
pub fn evaluate_candidate(kind: RhoKind, param: f64, xi_n: f64, theta: &MixingMeasure, t: &MemoryTargets, n_int: usize) -> Result<Candidate> {
    let rho = rho_for(kind, param, xi_n)?;
    let grid = IntegralGrid::new(theta, &rho, n_int)?;
    let probe = MemoryModel::new(1.0, 0.0, 1.0, rho.clone())?;
    let st = MemoryStatistics::new(&probe, DischargeMoments { mean: t.q_mean, variance: t.q_variance }, &grid)?;
    let mut l = Vec::with_capacity(t.autocorrelation.len());
    let mut k = Vec::with_capacity(l.capacity());
    let mut i0 = st.triple_integral();
    for &h in &t.autocorrelation.lags {
        let (lh, kh, i) = st.autocorrelation_parts(h)?;
        l.push(lh);
        k.push(kh);
        i0 = i;
    }
    let (w, sse) = fit_w(&t.autocorrelation.values, &l, &k, i0);
    let sigma = libm::sqrt(2.0 * t.variance / (t.mean * (1.0 + w * i0)));
    let b = sigma * libm::sqrt(w * t.mean / (2.0 * t.q_variance));
    let a = t.mean - b * t.q_mean;
    let lambda0 = b * t.q_variance * st.g_unit(0.0);
    Ok(Candidate { param, w, sigma, b, a, i0, lambda0, objective: libm::fabs(t.lambda0 - lambda0), autocorrelation_sse: sse })
}

/// Search values centered on the nominal parameter.
pub fn candidate_grid(kind: RhoKind, nominal: f64, cfg: &IdentifyConfig) -> Vec<f64> {
    let (step, lo, hi) = match kind {
        RhoKind::Gamma => (cfg.zeta_step, nominal - cfg.zeta_window, nominal + cfg.zeta_window),
        RhoKind::Dirac => (cfg.xi_step, nominal / cfg.xi_factor, nominal * cfg.xi_factor),
    };
    let below = libm::floor((nominal - lo) / step + 1e-9) as i64;
    let above = libm::floor((hi - nominal) / step + 1e-9) as i64;
    (-below..=above).map(|k| nominal + k as f64 * step).filter(|&p| p > 0.0).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MemoryIdentification {
    pub model: MemoryModel,
    pub kind: RhoKind,
    pub w: f64,
    /// Nominal shape of the `w = 0` fit (gamma only).
    pub zeta_n: Option<f64>,
    pub xi_n: f64,
    pub nominal_objective: f64,
    pub lambda0_model: f64,
    /// `|λ(0)_e - λ(0)_m|` at the selected candidate.
    pub lambda0_gap: f64,
    pub candidates: usize,
    /// The search moved away from the nominal parameter.
    pub improved: bool,
    pub targets: MemoryTargets,
}

/// Full identification with the candidate evaluations routed through
/// `map`, which must return results in input order.
pub fn identify_memory_with<M>(data: &MemoryData, kind: RhoKind, cfg: &IdentifyConfig, map: M) -> Result<MemoryIdentification>
where
    M: FnOnce(&[f64], &(dyn Fn(f64) -> Result<Candidate> + Sync)) -> Vec<Result<Candidate>>,
{
    let t = MemoryTargets::from_data(data, cfg)?;
    let (zeta_n, xi_n, nominal_objective) = match kind {
        RhoKind::Gamma => {
            let p = fit_power_law(&t.autocorrelation, &cfg.fit, 3)?;
            (Some(p.exponent), p.scale, p.objective)
        }
        RhoKind::Dirac => {
            let (s, obj) = fit_exponential(&t.autocorrelation)?;
            (None, s, obj)
        }
    };
    let nominal = zeta_n.unwrap_or(xi_n);
    let params = candidate_grid(kind, nominal, cfg);
    let eval = |p: f64| evaluate_candidate(kind, p, xi_n, &data.theta, &t, cfg.n_int);
    let results = map(&params, &eval);
    let mut best: Option<Candidate> = None;
    for r in results {
        let c = r?;
        if !c.feasible() {
            continue;
        }
        // Parameters arrive in increasing order, so a strict comparison
        // keeps the smallest parameter on ties.
        if best.as_ref().map_or(true, |b| c.objective < b.objective) {
            best = Some(c);
        }
    }
    let best = best.ok_or_else(|| {
        Error::Constraint(format!(
            "a = M_e - b Q_e is negative for every candidate; try rho kind {}",
            if kind == RhoKind::Gamma { "dirac" } else { "gamma" }
        ))
    })?;
    let rho = rho_for(kind, best.param, xi_n)?;
    let model = MemoryModel::new(best.a, best.b, best.sigma, rho)?;
    Ok(MemoryIdentification {
        model,
        kind,
        w: best.w,
        zeta_n,
        xi_n,
        nominal_objective,
        lambda0_model: best.lambda0,
        lambda0_gap: best.objective,
        candidates: params.len(),
        improved: libm::fabs(best.param - nominal) > 1e-12,
        targets: t,
    })
}

pub fn identify_memory(data: &MemoryData, kind: RhoKind, cfg: &IdentifyConfig) -> Result<MemoryIdentification> {
    identify_memory_with(data, kind, cfg, |ps, f| ps.iter().map(|&p| f(p)).collect())
}

/// Mean of each calendar day (`floor(t)`).
pub fn daily_means(times: &[f64], values: &[f64]) -> BTreeMap<i64, f64> {
    let mut acc: BTreeMap<i64, (f64, u32)> = BTreeMap::new();
    for (&t, &v) in times.iter().zip(values) {
        let e = acc.entry(libm::floor(t) as i64).or_insert((0.0, 0));
        e.0 += v;
        e.1 += 1;
    }
    acc.into_iter().map(|(d, (s, n))| (d, s / n as f64)).collect()
}

/// Autocorrelation of the raw samples with pairs binned on unit lag bins
/// centered at `0..=max_lag` days.
pub fn daily_autocorrelation(times: &[f64], values: &[f64], max_lag: usize) -> Result<LagFunction> {
    let mut bins = alloc::vec![(0.0, 0.5)];
    bins.extend((1..=max_lag).map(|k| (k as f64 - 0.5, k as f64 + 0.5)));
    let ac = empirical_autocorrelation(times, values, &bins)?;
    let (lags, vals): (Vec<f64>, Vec<f64>) = ac.iter().filter_map(|b| Some((b.lag?, b.value?))).unzip();
    LagFunction::new(lags, vals)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationConfig {
    pub discharge_max_lag: usize,
    pub fit: FitOptions,
    pub identify: IdentifyConfig,
}

impl CalibrationConfig {
    pub fn new(n_int: usize) -> Self {
        Self { discharge_max_lag: 30, fit: FitOptions::default(), identify: IdentifyConfig::new(n_int) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StatRow {
    pub name: String,
    pub empirical: f64,
    pub theoretical: f64,
}

impl StatRow {
    pub fn relative_error(&self) -> f64 {
        libm::fabs((self.empirical - self.theoretical) / self.empirical)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationReport {
    pub seasonal: SeasonalFit,
    pub autocorrelation: DischargeAutocorrelationFit,
    pub moments: DischargeMomentFit,
    pub memory: MemoryIdentification,
    pub discharge_stats: DischargeStats,
    pub discharge_table: Vec<StatRow>,
    pub memory_table: Vec<StatRow>,
    pub unmatched_samples: usize,
}

/// Seasonal fit, discharge fit and memory identification from raw
/// discharge `(t, q)` and concentration `(t, c)` samples.
pub fn calibrate_with<M>(discharge: &[(f64, f64)], quality: &[(f64, f64)], kind: RhoKind, cfg: &CalibrationConfig, map: M) -> Result<CalibrationReport>
where
    M: FnOnce(&[f64], &(dyn Fn(f64) -> Result<Candidate> + Sync)) -> Vec<Result<Candidate>>,
{
    let mut sorted = discharge.to_vec();
    sorted.sort_by(|x, y| x.0.total_cmp(&y.0));
    let (qt, qv): (Vec<f64>, Vec<f64>) = sorted.into_iter().unzip();
    let qm = empirical_moments(&qv)?;
    let target = DischargeStats { mean: qm.mean, variance: qm.variance, skewness: qm.skewness, kurtosis: qm.kurtosis };
    let daily = daily_means(&qt, &qv);
    let ac = daily_autocorrelation(&qt, &qv, cfg.discharge_max_lag)?;
    let autocorrelation = fit_discharge_autocorrelation(&ac, &cfg.fit)?;
    let moments = fit_discharge_moments(&target, autocorrelation.alpha, autocorrelation.beta, &cfg.fit)?;
    let theta = moments.model.autocorrelation_measure()?;

    let seasonal = fit_seasonal(quality)?;
    let kept: Vec<(f64, f64)> =
        quality.iter().enumerate().filter(|(i, _)| !seasonal.rejected.contains(i)).map(|(_, &p)| p).collect();
    let mut m: Vec<(f64, f64)> = kept.iter().map(|&(t, c)| (t, c / seasonal.model.value(t))).collect();
    m.sort_by(|x, y| x.0.total_cmp(&y.0));
    let unmatched = m.iter().filter(|p| !daily.contains_key(&(libm::floor(p.0) as i64))).count();
    let matched: Vec<(f64, f64)> = m.iter().copied().filter(|p| daily.contains_key(&(libm::floor(p.0) as i64))).collect();
    let lambda0 = empirical_cross_covariance(&daily, &matched)?;
    let (times, values): (Vec<f64>, Vec<f64>) = m.into_iter().unzip();
    let data = MemoryData { times, values, q_mean: qm.mean, q_variance: qm.variance, lambda0, theta };
    let memory = identify_memory_with(&data, kind, &cfg.identify, map)?;

    let fitted = moments.fitted;
    let row = |name: &str, e: f64, t: f64| StatRow { name: name.into(), empirical: e, theoretical: t };
    let discharge_table = alloc::vec![
        row("mean", target.mean, fitted.mean),
        row("variance", target.variance, fitted.variance),
        row("skewness", target.skewness, fitted.skewness),
        row("kurtosis", target.kurtosis, fitted.kurtosis),
    ];
    let mt = &memory.targets;
    let i0 = {
        let grid = IntegralGrid::new(&data.theta, &memory.model.rho, cfg.identify.n_int)?;
        MemoryStatistics::new(&memory.model, DischargeMoments { mean: qm.mean, variance: qm.variance }, &grid)?
    };
    let memory_table = alloc::vec![
        row("mean", mt.mean, i0.mean()),
        row("variance", mt.variance, i0.variance()),
        row("lambda0", mt.lambda0, memory.lambda0_model),
    ];
    Ok(CalibrationReport {
        seasonal,
        autocorrelation,
        moments,
        memory,
        discharge_stats: target,
        discharge_table,
        memory_table,
        unmatched_samples: unmatched,
    })
}

pub fn calibrate(discharge: &[(f64, f64)], quality: &[(f64, f64)], kind: RhoKind, cfg: &CalibrationConfig) -> Result<CalibrationReport> {
    calibrate_with(discharge, quality, kind, cfg, |ps, f| ps.iter().map(|&p| f(p)).collect())
}
