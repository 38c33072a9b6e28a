//! Generalized Riccati system for the moment-generating function of the
//! finite-dimensional model.
//!
//! With `s = N_R⁻¹ Σ R_i ω_i`,
//!
//! ```text
//! κ' = a s + N_r⁻¹ Σ_j Λ(ψ_j)
//! ω_i' = -R_i ω_i + ½ σ² R_i ω_i²
//! ψ_j' = -r_j ψ_j + b s
//! ```
//!
//! from `ω_i = ϖ`, `ψ_j = κ = 0`, where `Λ(ψ) = ∫ (e^{ψz} - 1) ν(dz)`.
//! `E[e^{ϖ M}] = lim exp(κ_t)` in the stationary regime.

use alloc::format;
use alloc::vec::Vec;

use crate::discharge::{nu_moment, DischargeModel};
use crate::memory::{CoupledConfig, CoupledSimulator, MemoryModel};
use crate::special::gamma;
use crate::sum::KahanSum;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiState {
    pub t: f64,
    pub kappa: f64,
    pub omega: Vec<f64>,
    pub psi: Vec<f64>,
}

impl RiccatiState {
    fn max_abs(&self) -> f64 {
        self.omega.iter().chain(&self.psi).fold(libm::fabs(self.kappa), |m, x| m.max(libm::fabs(*x)))
    }
}

/// `∫ (e^{ψz} - 1) a1 e^{-a2 z} z^{-1-a3} dz`, for `ψ ≤ 0`.
pub fn jump_integral(psi: f64, model: &DischargeModel) -> Result<f64> {
    if psi > 0.0 || psi.is_nan() {
        return Err(Error::domain(format!("ψ = {psi} > 0 makes the jump integral diverge")));
    }
    Ok(laplace_exponent(psi, model))
}

/// The jump integral continued to `ψ < a2`, where it stays finite.
fn laplace_exponent(psi: f64, model: &DischargeModel) -> f64 {
    if psi == 0.0 {
        return 0.0;
    }
    let x = libm::log1p(-psi / model.a2);
    if libm::fabs(model.a3) < 1e-8 {
        return -model.a1 * x;
    }
    model.a1 * gamma(-model.a3) * libm::pow(model.a2, model.a3) * libm::expm1(model.a3 * x)
}

/// `ω_t = ϖ e^{-Rt} / (1 - ½σ²ϖ (1 - e^{-Rt}))`.
pub fn omega_exact(varpi: f64, rate: f64, sigma: f64, t: f64) -> f64 {
    let e = libm::exp(-rate * t);
    varpi * e / (1.0 + 0.5 * sigma * sigma * varpi * libm::expm1(-rate * t))
}

/// `φ_k(z) = Σ_m z^m / (m + k)!` for `k = 1, 2, 3`.
fn phi123(z: f64) -> (f64, f64, f64) {
    if libm::fabs(z) < 1.0 {
        let mut out = [0.0; 3];
        for (k, o) in out.iter_mut().enumerate() {
            // 1 / (k+1)!
            let mut term = [1.0, 0.5, 1.0 / 6.0][k];
            let mut sum = term;
            for m in 1..30 {
                term *= z / (m + k + 1) as f64;
                sum += term;
            }
            *o = sum;
        }
        (out[0], out[1], out[2])
    } else {
        let p1 = libm::expm1(z) / z;
        let p2 = (p1 - 1.0) / z;
        let p3 = (p2 - 0.5) / z;
        (p1, p2, p3)
    }
}

#[derive(Debug, Clone, Copy)]
struct ExpRkCoefficients {
    e: f64,
    e_half: f64,
    p1: f64,
    p2: f64,
    p3: f64,
    p1h: f64,
    p2h: f64,
    a52: f64,
    a54: f64,
}

impl ExpRkCoefficients {
    fn new(z: f64) -> Self {
        let (p1, p2, p3) = phi123(z);
        let (p1h, p2h, p3h) = phi123(0.5 * z);
        let a52 = 0.5 * p2h - p3 + 0.25 * p2 - 0.5 * p3h;
        Self { e: libm::exp(z), e_half: libm::exp(0.5 * z), p1, p2, p3, p1h, p2h, a52, a54: 0.25 * p2h - a52 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiSystem {
    pub memory_rates: Vec<f64>,
    pub discharge_rates: Vec<f64>,
    pub a: f64,
    pub b: f64,
    pub sigma: f64,
    pub discharge: DischargeModel,
}

impl RiccatiSystem {
    /// Atoms at resolution `n`; a Dirac `ρ` collapses to one component.
    pub fn new(mem: &MemoryModel, dis: &DischargeModel, n: usize) -> Result<Self> {
        mem.validate()?;
        dis.validate()?;
        Ok(Self {
            memory_rates: mem.atoms(n, true)?,
            discharge_rates: dis.recession_measure()?.atoms(n)?,
            a: mem.a,
            b: mem.b,
            sigma: mem.sigma,
            discharge: dis.clone(),
        })
    }

    pub fn initial(&self, varpi: f64) -> RiccatiState {
        RiccatiState {
            t: 0.0,
            kappa: 0.0,
            omega: alloc::vec![varpi; self.memory_rates.len()],
            psi: alloc::vec![0.0; self.discharge_rates.len()],
        }
    }

    fn forcing(&self, y: &RiccatiState) -> f64 {
        let s: KahanSum = self.memory_rates.iter().zip(&y.omega).map(|(r, w)| r * w).collect();
        s.value() / self.memory_rates.len() as f64
    }

    /// Nonlinear part of the vector field.
    fn nonlinear(&self, y: &RiccatiState) -> Result<RiccatiState> {
        let s = self.forcing(y);
        let mut jumps = KahanSum::new();
        for &p in &y.psi {
            if !(p < self.discharge.a2) {
                return Err(Error::domain(format!("ψ = {p} reaches a2; the jump integral diverges")));
            }
            jumps.add(laplace_exponent(p, &self.discharge));
        }
        let half = 0.5 * self.sigma * self.sigma;
        Ok(RiccatiState {
            t: y.t,
            kappa: self.a * s + jumps.value() / y.psi.len() as f64,
            omega: self.memory_rates.iter().zip(&y.omega).map(|(r, w)| half * r * w * w).collect(),
            psi: alloc::vec![self.b * s; y.psi.len()],
        })
    }

    /// Full vector field.
    pub fn derivative(&self, y: &RiccatiState) -> Result<RiccatiState> {
        let mut d = self.nonlinear(y)?;
        for ((dw, w), r) in d.omega.iter_mut().zip(&y.omega).zip(&self.memory_rates) {
            *dw -= r * w;
        }
        for ((dp, p), r) in d.psi.iter_mut().zip(&y.psi).zip(&self.discharge_rates) {
            *dp -= r * p;
        }
        Ok(d)
    }

    fn flatten(y: &RiccatiState) -> Vec<f64> {
        let mut v = Vec::with_capacity(1 + y.omega.len() + y.psi.len());
        v.push(y.kappa);
        v.extend_from_slice(&y.omega);
        v.extend_from_slice(&y.psi);
        v
    }

    fn unflatten(&self, t: f64, v: &[f64]) -> RiccatiState {
        let n = self.memory_rates.len();
        RiccatiState { t, kappa: v[0], omega: v[1..=n].to_vec(), psi: v[n + 1..].to_vec() }
    }

    fn nonlinear_flat(&self, v: &[f64]) -> Result<Vec<f64>> {
        Ok(Self::flatten(&self.nonlinear(&self.unflatten(0.0, v))?))
    }

    /// One fourth-order exponential Runge–Kutta step (the five-stage
    /// scheme of Hochbruck and Ostermann): the linear decay is integrated
    /// exactly and the order holds for stiff components.
    pub fn step(&self, y: &RiccatiState, h: f64) -> Result<RiccatiState> {
        let rates: Vec<f64> = core::iter::once(0.0).chain(self.memory_rates.iter().copied()).chain(self.discharge_rates.iter().copied()).collect();
        let coef: Vec<ExpRkCoefficients> = rates.iter().map(|&r| ExpRkCoefficients::new(-r * h)).collect();
        let u = Self::flatten(y);
        let n1 = self.nonlinear_flat(&u)?;
        let stage = |e: &dyn Fn(&ExpRkCoefficients) -> f64, terms: &[(&dyn Fn(&ExpRkCoefficients) -> f64, &Vec<f64>)]| -> Vec<f64> {
            (0..u.len())
                .map(|i| {
                    let c = &coef[i];
                    let mut x = e(c) * u[i];
                    for (w, n) in terms {
                        x += h * w(c) * n[i];
                    }
                    x
                })
                .collect()
        };
        let u2 = stage(&|c| c.e_half, &[(&|c| 0.5 * c.p1h, &n1)]);
        let n2 = self.nonlinear_flat(&u2)?;
        let u3 = stage(&|c| c.e_half, &[(&|c| 0.5 * c.p1h - c.p2h, &n1), (&|c| c.p2h, &n2)]);
        let n3 = self.nonlinear_flat(&u3)?;
        let u4 = stage(&|c| c.e, &[(&|c| c.p1 - 2.0 * c.p2, &n1), (&|c| c.p2, &n2), (&|c| c.p2, &n3)]);
        let n4 = self.nonlinear_flat(&u4)?;
        let u5 = stage(
            &|c| c.e_half,
            &[(&|c| 0.5 * c.p1h - 2.0 * c.a52 - c.a54, &n1), (&|c| c.a52, &n2), (&|c| c.a52, &n3), (&|c| c.a54, &n4)],
        );
        let n5 = self.nonlinear_flat(&u5)?;
        let v = stage(
            &|c| c.e,
            &[(&|c| c.p1 - 3.0 * c.p2 + 4.0 * c.p3, &n1), (&|c| 4.0 * c.p3 - c.p2, &n4), (&|c| 4.0 * c.p2 - 8.0 * c.p3, &n5)],
        );
        let mut next = self.unflatten(y.t + h, &v);
        let scale = next.psi.iter().fold(libm::fabs(y.omega.first().copied().unwrap_or(0.0)), |m, p| m.max(libm::fabs(*p)));
        for p in next.psi.iter_mut() {
            if *p > 0.0 {
                if *p > 1e-12 * scale {
                    return Err(Error::domain(format!("ψ = {p} became positive; the jump integral diverges")));
                }
                *p = 0.0;
            }
        }
        Ok(next)
    }

    /// `20 / min(R_i, r_j)`.
    pub fn default_horizon(&self) -> f64 {
        let slow = self.memory_rates.iter().chain(&self.discharge_rates).fold(f64::INFINITY, |m, &r| m.min(r));
        20.0 / slow
    }

    /// Stationary means of the components: `(a + b Q̄) / N_R` and
    /// `m1 / (N_r r_j)`.
    pub fn stationary_means(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        let m1 = nu_moment(1, &self.discharge)?;
        let nr = self.discharge_rates.len() as f64;
        let q: Vec<f64> = self.discharge_rates.iter().map(|r| m1 / (nr * r)).collect();
        let qbar = crate::sum::ksum(&q);
        let each = (self.a + self.b * qbar) / self.memory_rates.len() as f64;
        Ok((alloc::vec![each; self.memory_rates.len()], q))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiOptions {
    /// Base step. Steps grow as `dt_ode · max(1, t)`.
    pub dt_ode: f64,
    /// Defaults to `20 / min(R_i, r_j)`.
    pub t_end: Option<f64>,
    pub max_steps: usize,
    /// Keep every `record_every`-th state; 0 keeps only the endpoints.
    pub record_every: usize,
    pub derivative_tol: f64,
}

impl Default for RiccatiOptions {
    fn default() -> Self {
        Self { dt_ode: 0.01, t_end: None, max_steps: 1_000_000, record_every: 0, derivative_tol: 1e-10 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiSolution {
    pub trajectory: Vec<RiccatiState>,
    pub last: RiccatiState,
    pub steps: usize,
    /// Max-norm of the vector field at the end.
    pub derivative_norm: f64,
}

impl RiccatiSolution {
    /// `κ + Σ ω_i m_i + Σ ψ_j q_j` at the given state.
    pub fn log_mgf_at(&self, m: &[f64], q: &[f64]) -> f64 {
        let s = &self.last;
        let mut acc = KahanSum::new();
        acc.add(s.kappa);
        for (w, x) in s.omega.iter().zip(m) {
            acc.add(w * x);
        }
        for (p, x) in s.psi.iter().zip(q) {
            acc.add(p * x);
        }
        acc.value()
    }
}

pub fn solve_system(sys: &RiccatiSystem, varpi: f64, opts: &RiccatiOptions) -> Result<RiccatiSolution> {
    if !(varpi <= 0.0) {
        return Err(Error::domain(format!("ϖ = {varpi} must be nonpositive")));
    }
    if !(opts.dt_ode > 0.0) {
        return Err(Error::arg("ODE step must be positive"));
    }
    let t_end = opts.t_end.unwrap_or_else(|| sys.default_horizon());
    let mut y = sys.initial(varpi);
    let mut trajectory = alloc::vec![y.clone()];
    let mut steps = 0;
    while y.t < t_end {
        if steps >= opts.max_steps {
            return Err(Error::numeric(format!("Riccati integration exceeded {} steps before t = {t_end}", opts.max_steps)));
        }
        let h = (opts.dt_ode * y.t.max(1.0)).min(t_end - y.t);
        y = sys.step(&y, h)?;
        if !y.kappa.is_finite() {
            return Err(Error::numeric("Riccati state is not finite"));
        }
        steps += 1;
        if opts.record_every > 0 && steps % opts.record_every == 0 {
            trajectory.push(y.clone());
        }
    }
    let mut derivative_norm = sys.derivative(&y)?.max_abs();
    // Past the nominal horizon, continue until the state has settled.
    while opts.t_end.is_none() && !(derivative_norm < opts.derivative_tol) {
        if steps >= opts.max_steps {
            return Err(Error::numeric(format!("Riccati state has not settled (derivative norm {derivative_norm:e})")));
        }
        y = sys.step(&y, opts.dt_ode * y.t.max(1.0))?;
        steps += 1;
        if opts.record_every > 0 && steps % opts.record_every == 0 {
            trajectory.push(y.clone());
        }
        derivative_norm = sys.derivative(&y)?.max_abs();
    }
    if trajectory.last().map_or(true, |s| s.t != y.t) {
        trajectory.push(y.clone());
    }
    Ok(RiccatiSolution { trajectory, last: y, steps, derivative_norm })
}

pub fn solve_riccati(n: usize, varpi: f64, mem: &MemoryModel, dis: &DischargeModel, opts: &RiccatiOptions) -> Result<RiccatiSolution> {
    solve_system(&RiccatiSystem::new(mem, dis, n)?, varpi, opts)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloOptions {
    pub paths: usize,
    pub dt: f64,
    pub burn_in: f64,
    pub span: f64,
    /// Sample every `stride` steps after burn-in.
    pub stride: usize,
    pub seed: u64,
    /// Total simulation steps allowed across paths.
    pub max_steps: u64,
}

impl MonteCarloOptions {
    pub fn steps_per_path(&self) -> u64 {
        libm::round((self.burn_in + self.span) / self.dt) as u64
    }

    /// Paths that fit the budget.
    pub fn affordable_paths(&self) -> usize {
        let per = self.steps_per_path().max(1);
        (self.max_steps / per).min(self.paths as u64) as usize
    }
}

/// Time averages of `e^{ϖ M}` along one coupled path, one per `ϖ`.
pub fn mgf_path_average(mem: &MemoryModel, dis: &DischargeModel, n: usize, varpis: &[f64], opts: &MonteCarloOptions, path: u64) -> Result<Vec<f64>> {
    let mut cfg = CoupledConfig::new(n, opts.dt);
    cfg.collapse_dirac = true;
    let mut sim = CoupledSimulator::new(dis, mem, &cfg, opts.seed, path)?;
    for _ in 0..libm::round(opts.burn_in / opts.dt) as u64 {
        sim.step();
    }
    let mut sums = alloc::vec![KahanSum::new(); varpis.len()];
    let mut count = 0u64;
    let steps = libm::round(opts.span / opts.dt) as u64;
    for k in 1..=steps {
        let (_, m) = sim.step();
        if k % opts.stride.max(1) as u64 == 0 {
            for (s, &v) in sums.iter_mut().zip(varpis) {
                s.add(libm::exp(v * m));
            }
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::arg("Monte Carlo span records no samples"));
    }
    Ok(sums.iter().map(|s| s.value() / count as f64).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct MgfRow {
    pub varpi: f64,
    pub riccati: f64,
    pub monte_carlo: Option<f64>,
    /// Standard error from the spread of independent path averages.
    pub mc_se: Option<f64>,
    pub relative_difference: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MgfComparison {
    pub rows: Vec<MgfRow>,
    pub paths: usize,
    /// The budget allowed fewer paths than requested.
    pub partial: bool,
}

/// Riccati MGF against Monte Carlo, with the path simulations routed
/// through `map` (results in path order).
pub fn mgf_crosscheck_with<M>(
    mem: &MemoryModel,
    dis: &DischargeModel,
    n: usize,
    varpis: &[f64],
    ode: &RiccatiOptions,
    mc: &MonteCarloOptions,
    map: M,
) -> Result<MgfComparison>
where
    M: FnOnce(usize, &(dyn Fn(u64) -> Result<Vec<f64>> + Sync)) -> Vec<Result<Vec<f64>>>,
{
    if let Some(&v) = varpis.iter().find(|&&v| !(v <= 0.0)) {
        return Err(Error::domain(format!("ϖ = {v} must be nonpositive")));
    }
    let sys = RiccatiSystem::new(mem, dis, n)?;
    let (m0, q0) = sys.stationary_means()?;
    let mut riccati = Vec::with_capacity(varpis.len());
    for &v in varpis {
        let sol = solve_system(&sys, v, ode)?;
        riccati.push(libm::exp(sol.log_mgf_at(&m0, &q0)));
    }
    let paths = mc.affordable_paths();
    let averages: Vec<Vec<f64>> = if paths >= 2 {
        map(paths, &|p| mgf_path_average(mem, dis, n, varpis, mc, p)).into_iter().collect::<Result<_>>()?
    } else {
        Vec::new()
    };
    let rows = varpis
        .iter()
        .enumerate()
        .map(|(k, &v)| {
            if averages.is_empty() {
                return MgfRow { varpi: v, riccati: riccati[k], monte_carlo: None, mc_se: None, relative_difference: None };
            }
            let xs: Vec<f64> = averages.iter().map(|a| a[k]).collect();
            let mean = crate::sum::kmean(&xs);
            let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (xs.len() - 1) as f64;
            MgfRow {
                varpi: v,
                riccati: riccati[k],
                monte_carlo: Some(mean),
                mc_se: Some(libm::sqrt(var / xs.len() as f64)),
                relative_difference: Some((mean - riccati[k]) / riccati[k]),
            }
        })
        .collect();
    Ok(MgfComparison { rows, paths, partial: paths < mc.paths })
}

pub fn mgf_crosscheck(
    mem: &MemoryModel,
    dis: &DischargeModel,
    n: usize,
    varpis: &[f64],
    ode: &RiccatiOptions,
    mc: &MonteCarloOptions,
) -> Result<MgfComparison> {
    mgf_crosscheck_with(mem, dis, n, varpis, ode, mc, |p, f| (0..p as u64).map(f).collect())
}
