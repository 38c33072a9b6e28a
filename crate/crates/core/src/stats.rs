//! Closed-form statistics of the memory process and empirical estimators.
//!
//! With `θ` the law representing the discharge autocorrelation and `ρ` the
//! reversion law, stationary statistics of `M` are integrals over
//! `(r, R, P) ~ θ ⊗ ρ ⊗ ρ`. Each is evaluated by quantile discretization:
//! `N_θ` atoms for `θ` and `N_ρ` for `ρ` (one atom when `ρ` is Dirac).
//! The triple sums factor through partial sums over one index, so setup is
//! `O(N²)` and each lag costs `O(N)`; [`tensor`] keeps the direct `O(N³)`
//! sums as a cross-check.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use crate::measures::MixingMeasure;
use crate::memory::MemoryModel;
use crate::optim::golden_section_max;
use crate::sum::KahanSum;
use crate::{Error, Result};

/// Smallest admissible resolution for non-atomic measures.
pub const MIN_RESOLUTION: usize = 16;

/// Pairs closer than this relative gap are summed directly in the
/// divided-difference kernels.
const NEAR_GAP: f64 = 1e-3;
/// Below this relative gap the divided difference takes its confluent
/// limit `l e^{-R l}`.
const CONFLUENT_GAP: f64 = 1e-8;

/// Quantile atoms of `θ` and `ρ`.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegralGrid {
    pub theta: Vec<f64>,
    pub rho: Vec<f64>,
    pub n_int: usize,
}

impl IntegralGrid {
    pub fn new(theta: &MixingMeasure, rho: &MixingMeasure, n_int: usize) -> Result<Self> {
        if n_int < MIN_RESOLUTION {
            return Err(Error::arg(format!("integration resolution {n_int} is below {MIN_RESOLUTION}")));
        }
        let atoms = |m: &MixingMeasure| match m {
            MixingMeasure::Dirac { atom } => Ok(alloc::vec![*atom]),
            other => other.atoms(n_int),
        };
        Ok(Self { theta: atoms(theta)?, rho: atoms(rho)?, n_int })
    }
}

/// Sampled lag function.
#[derive(Debug, Clone, PartialEq)]
pub struct LagFunction {
    pub lags: Vec<f64>,
    pub values: Vec<f64>,
}

impl LagFunction {
    pub fn new(lags: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if lags.len() != values.len() {
            return Err(Error::arg("lags and values differ in length"));
        }
        if lags.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::arg("lags must be strictly increasing"));
        }
        Ok(Self { lags, values })
    }

    pub fn len(&self) -> usize {
        self.lags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lags.is_empty()
    }
}

/// Stationary mean and variance of discharge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DischargeMoments {
    pub mean: f64,
    pub variance: f64,
}

/// `(e^{-r l} - e^{-R l}) / (R - r)`.
#[inline]
fn divided_exp(big: f64, small: f64, l: f64) -> f64 {
    let diff = big - small;
    if diff.abs() < CONFLUENT_GAP * big.max(small) {
        return l * libm::exp(-0.5 * (big + small) * l);
    }
    let x = diff * l;
    let phi = if x == 0.0 { 1.0 } else { -libm::expm1(-x) / x };
    l * libm::exp(-small * l) * phi
}

/// `S(l) = Σ_i Σ_j v_i w_j (e^{-r_j l} - e^{-R_i l}) / (R_i - r_j)`,
/// split into separable far-pair sums and a direct near-pair list.
#[derive(Debug, Clone)]
struct DividedKernel {
    r: Vec<f64>,
    big: Vec<f64>,
    /// Far-pair coefficients of `e^{-r_j l}` and `e^{-R_i l}`.
    alpha: Vec<f64>,
    beta: Vec<f64>,
    near: Vec<(usize, usize, f64)>,
}

impl DividedKernel {
    fn new(big: &[f64], v: &[f64], r: &[f64], w: &[f64]) -> Self {
        let mut alpha = alloc::vec![KahanSum::new(); r.len()];
        let mut beta = alloc::vec![KahanSum::new(); big.len()];
        let mut near = Vec::new();
        for (i, (&bi, &vi)) in big.iter().zip(v).enumerate() {
            for (j, (&rj, &wj)) in r.iter().zip(w).enumerate() {
                let diff = bi - rj;
                if diff.abs() < NEAR_GAP * bi.max(rj) {
                    near.push((i, j, vi * wj));
                } else {
                    let c = vi * wj / diff;
                    alpha[j].add(c);
                    beta[i].add(c);
                }
            }
        }
        Self {
            r: r.to_vec(),
            big: big.to_vec(),
            alpha: alpha.iter().map(KahanSum::value).collect(),
            beta: beta.iter().map(KahanSum::value).collect(),
            near,
        }
    }

    fn eval(&self, l: f64) -> f64 {
        let mut s = KahanSum::new();
        for (&rj, &a) in self.r.iter().zip(&self.alpha) {
            s.add(a * libm::exp(-rj * l));
        }
        for (&bi, &b) in self.big.iter().zip(&self.beta) {
            s.add(-b * libm::exp(-bi * l));
        }
        for &(i, j, c) in &self.near {
            s.add(c * divided_exp(self.big[i], self.r[j], l));
        }
        s.value()
    }
}

/// Precomputed closed-form statistics for one model.
#[derive(Debug, Clone)]
pub struct MemoryStatistics {
    model: MemoryModel,
    q: DischargeMoments,
    r: Vec<f64>,
    big: Vec<f64>,
    /// `R_i · mean_j 1 / (R_i + r_j) / N_ρ`: first term of `F`.
    f_first: Vec<f64>,
    /// `mean_i R_i / (R_i + r_j) / N_θ`: `G` weights.
    g_weight: Vec<f64>,
    /// `I(h) = Σ_k c_k e^{-P_k h}`.
    i_coef: Vec<f64>,
    triple: f64,
    f_kernel: DividedKernel,
    j_kernel: DividedKernel,
}

impl MemoryStatistics {
    pub fn new(model: &MemoryModel, q: DischargeMoments, grid: &IntegralGrid) -> Result<Self> {
        model.validate()?;
        if !(q.mean >= 0.0) || !(q.variance >= 0.0) {
            return Err(Error::arg("discharge mean and variance must be nonnegative"));
        }
        let r = grid.theta.clone();
        let big = grid.rho.clone();
        let (nt, nr) = (r.len() as f64, big.len() as f64);
        // g(x) = mean_r 1 / (x + r)
        let g: Vec<f64> = big
            .iter()
            .map(|&x| r.iter().map(|&rj| 1.0 / (x + rj)).collect::<KahanSum>().value() / nt)
            .collect();
        // u_j = mean_R R / (R + r_j)
        let u: Vec<f64> = r
            .iter()
            .map(|&rj| big.iter().map(|&bi| bi / (bi + rj)).collect::<KahanSum>().value() / nr)
            .collect();
        let mut i_coef = Vec::with_capacity(big.len());
        let mut triple = KahanSum::new();
        for (k, &pk) in big.iter().enumerate() {
            let mut c = KahanSum::new();
            for (i, &ri) in big.iter().enumerate() {
                c.add(ri * pk / (pk + ri) * (g[k] + g[i]));
            }
            let ck = c.value() / (nr * nr);
            triple.add(ck);
            i_coef.push(ck);
        }
        let triple = triple.value();
        if !triple.is_finite() {
            return Err(Error::Divergent("the discharge-driven variance integral is not finite".into()));
        }
        let f_first = big.iter().zip(&g).map(|(&bi, &gi)| bi * gi / nr).collect();
        let g_weight = u.iter().map(|&uj| uj / nt).collect();
        let v_f: Vec<f64> = big.iter().map(|&bi| bi / nr).collect();
        let w_f = alloc::vec![1.0 / nt; r.len()];
        let f_kernel = DividedKernel::new(&big, &v_f, &r, &w_f);
        let w_j: Vec<f64> = u.iter().map(|&uj| uj / nt).collect();
        let j_kernel = DividedKernel::new(&big, &v_f, &r, &w_j);
        Ok(Self { model: model.clone(), q, r, big, f_first, g_weight, i_coef, triple, f_kernel, j_kernel })
    }

    pub fn model(&self) -> &MemoryModel {
        &self.model
    }

    pub fn mean(&self) -> f64 {
        self.model.level(self.q.mean)
    }

    /// `∫∫∫ PR/(P+R) (1/(P+r) + 1/(R+r)) θ(dr) ρ(dR) ρ(dP)`, which is `I(0)`.
    pub fn triple_integral(&self) -> f64 {
        self.triple
    }

    pub fn noise_variance(&self) -> f64 {
        0.5 * self.model.sigma * self.model.sigma * self.mean()
    }

    pub fn discharge_variance(&self) -> f64 {
        self.model.b * self.model.b * self.q.variance * self.triple
    }

    pub fn variance(&self) -> f64 {
        self.noise_variance() + self.discharge_variance()
    }

    pub fn i_term(&self, h: f64) -> f64 {
        self.big.iter().zip(&self.i_coef).map(|(&p, &c)| c * libm::exp(-p * h)).collect::<KahanSum>().value()
    }

    /// `J(h)`; exactly zero at `h = 0`.
    pub fn j_term(&self, h: f64) -> f64 {
        if h == 0.0 {
            0.0
        } else {
            self.j_kernel.eval(h)
        }
    }

    /// `A_M(h)`, with `A_M(0) = 1`.
    pub fn autocorrelation(&self, h: f64) -> Result<f64> {
        if !(h >= 0.0) {
            return Err(Error::arg(format!("lag {h} must be nonnegative")));
        }
        if h == 0.0 {
            return Ok(1.0);
        }
        let v = self.variance();
        let first = self.noise_variance() * self.model.rho.exp_transform(h)?;
        let b2v = self.model.b * self.model.b * self.q.variance;
        Ok((first + b2v * (self.i_term(h) + self.j_term(h))) / v)
    }

    /// Eq. (42) building blocks: the `ρ` transform, `I(h) + J(h)`, and
    /// `I(0)`.
    pub fn autocorrelation_parts(&self, h: f64) -> Result<(f64, f64, f64)> {
        Ok((self.model.rho.exp_transform(h)?, self.i_term(h) + self.j_term(h), self.triple))
    }

    /// `F(l) / (b V̄)`.
    pub fn f_unit(&self, l: f64) -> f64 {
        let mut s: KahanSum = self.big.iter().zip(&self.f_first).map(|(&bi, &c)| c * libm::exp(-bi * l)).collect();
        if l > 0.0 {
            s.add(self.f_kernel.eval(l));
        }
        s.value()
    }

    /// `G(l) / (b V̄)`.
    pub fn g_unit(&self, l: f64) -> f64 {
        self.r.iter().zip(&self.g_weight).map(|(&rj, &c)| c * libm::exp(-rj * l)).collect::<KahanSum>().value()
    }

    fn coupling(&self) -> f64 {
        self.model.b * self.q.variance
    }

    /// `λ(h) = F(h)` for `h ≥ 0` and `G(-h)` for `h < 0`.
    pub fn mutual_covariance(&self, h: f64) -> f64 {
        if h >= 0.0 {
            self.coupling() * self.f_unit(h)
        } else {
            self.coupling() * self.g_unit(-h)
        }
    }

    /// `λ(0) = b V̄ ∫∫ R/(R+r) θ(dr) ρ(dR)`.
    pub fn lambda0(&self) -> f64 {
        self.coupling() * self.g_unit(0.0)
    }

    /// Interior maximizer of `F` on `[0, h_max]`, or `None` when the
    /// maximum sits at 0.
    pub fn peak_lag(&self, h_max: f64, coarse: f64, tol: f64) -> Option<f64> {
        let n = libm::ceil(h_max / coarse) as usize;
        let f = |h: f64| self.f_unit(h);
        let mut best = (0usize, f(0.0));
        for k in 1..=n {
            let v = f((k as f64 * coarse).min(h_max));
            if v > best.1 {
                best = (k, v);
            }
        }
        if best.0 == 0 {
            return None;
        }
        let lo = (best.0 - 1) as f64 * coarse;
        let hi = ((best.0 + 1) as f64 * coarse).min(h_max);
        Some(golden_section_max(f, lo, hi, tol))
    }
}

/// Direct tensor-product sums, `O(N³)` per evaluation.
pub mod tensor {
    use super::*;

    fn mean3(r: &[f64], big: &[f64], f: impl Fn(f64, f64, f64) -> f64) -> f64 {
        let mut s = KahanSum::new();
        for &ri in big {
            for &pk in big {
                for &rj in r {
                    s.add(f(rj, ri, pk));
                }
            }
        }
        s.value() / (r.len() * big.len() * big.len()) as f64
    }

    fn mean2(r: &[f64], big: &[f64], f: impl Fn(f64, f64) -> f64) -> f64 {
        let mut s = KahanSum::new();
        for &ri in big {
            for &rj in r {
                s.add(f(rj, ri));
            }
        }
        s.value() / (r.len() * big.len()) as f64
    }

    pub fn triple(grid: &IntegralGrid) -> f64 {
        mean3(&grid.theta, &grid.rho, |r, big, p| p * big / (p + big) * (1.0 / (p + r) + 1.0 / (big + r)))
    }

    pub fn i_term(grid: &IntegralGrid, h: f64) -> f64 {
        mean3(&grid.theta, &grid.rho, |r, big, p| {
            big * p / (p + big) * (1.0 / (p + r) + 1.0 / (big + r)) * libm::exp(-p * h)
        })
    }

    pub fn j_term(grid: &IntegralGrid, h: f64) -> f64 {
        mean3(&grid.theta, &grid.rho, |r, big, p| big * p / (big + r) * divided_exp(p, r, h))
    }

    pub fn f_unit(grid: &IntegralGrid, l: f64) -> f64 {
        mean2(&grid.theta, &grid.rho, |r, big| big / (big + r) * libm::exp(-big * l) + big * divided_exp(big, r, l))
    }

    pub fn g_unit(grid: &IntegralGrid, l: f64) -> f64 {
        mean2(&grid.theta, &grid.rho, |r, big| big / (big + r) * libm::exp(-r * l))
    }
}

/// `E[M] = a + b Q̄`.
pub fn mem_mean(model: &MemoryModel, q_mean: f64) -> Result<f64> {
    if !(q_mean >= 0.0) {
        return Err(Error::arg(format!("discharge mean {q_mean} must be nonnegative")));
    }
    Ok(model.level(q_mean))
}

/// Stationary variance of `M`. The discharge term is also evaluated at
/// half resolution; growth of more than a quarter on doubling is reported
/// as a divergent integral.
pub fn mem_variance(model: &MemoryModel, q: DischargeMoments, theta: &MixingMeasure, n_int: usize) -> Result<f64> {
    let full = MemoryStatistics::new(model, q, &IntegralGrid::new(theta, &model.rho, n_int)?)?;
    if n_int / 2 >= MIN_RESOLUTION {
        let half = MemoryStatistics::new(model, q, &IntegralGrid::new(theta, &model.rho, n_int / 2)?)?;
        if full.triple_integral() > 1.25 * half.triple_integral() {
            return Err(Error::Divergent(format!(
                "discharge-driven variance grows from {} to {} as the resolution doubles",
                half.triple_integral(),
                full.triple_integral()
            )));
        }
    }
    Ok(full.variance())
}

pub fn mem_autocorrelation(h: f64, stats: &MemoryStatistics) -> Result<f64> {
    stats.autocorrelation(h)
}

pub fn mutual_covariance(h: f64, stats: &MemoryStatistics) -> f64 {
    stats.mutual_covariance(h)
}

/// Peak search with a 0.05-day coarse grid.
pub fn peak_lag(stats: &MemoryStatistics, h_max: f64, tol: f64) -> Option<f64> {
    stats.peak_lag(h_max, 0.05, tol)
}

/// `KL(Δ) = ζ (Δ - ln(1 + Δ))` between `Gamma(ζ, ξ)` and `Gamma(ζ, ξ(1+Δ))`.
pub fn kl_misspecification(zeta: f64, delta: f64) -> Result<f64> {
    if !(delta > -1.0) {
        return Err(Error::domain(format!("misspecification {delta} must exceed -1")));
    }
    Ok(zeta * (delta - libm::log1p(delta)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmpiricalMoments {
    pub n: usize,
    pub mean: f64,
    pub variance: f64,
    pub skewness: f64,
    /// `k4 / k2²` from unbiased k-statistics.
    pub kurtosis: f64,
}

pub fn empirical_moments(xs: &[f64]) -> Result<EmpiricalMoments> {
    let n = xs.len();
    if n < 8 {
        return Err(Error::arg(format!("{n} samples are too few for four moments (need 8)")));
    }
    let mean = crate::sum::kmean(xs);
    let (mut s2, mut s3, mut s4) = (KahanSum::new(), KahanSum::new(), KahanSum::new());
    for &x in xs {
        let d = x - mean;
        let d2 = d * d;
        s2.add(d2);
        s3.add(d2 * d);
        s4.add(d2 * d2);
    }
    let nf = n as f64;
    let (m2, m3, m4) = (s2.value() / nf, s3.value() / nf, s4.value() / nf);
    if !(m2 > 0.0) {
        return Err(Error::arg("sample variance is zero; skewness and kurtosis are undefined"));
    }
    let k2 = nf / (nf - 1.0) * m2;
    let k3 = nf * nf / ((nf - 1.0) * (nf - 2.0)) * m3;
    let k4 = nf * nf * ((nf + 1.0) * m4 - 3.0 * (nf - 1.0) * m2 * m2) / ((nf - 1.0) * (nf - 2.0) * (nf - 3.0));
    Ok(EmpiricalMoments { n, mean, variance: k2, skewness: k3 / libm::pow(k2, 1.5), kurtosis: k4 / (k2 * k2) })
}

/// One lag bin `[lo, hi)` of an empirical autocorrelation.
#[derive(Debug, Clone, PartialEq)]
pub struct LagBin {
    pub lo: f64,
    pub hi: f64,
    /// Mean lag of the pairs in the bin.
    pub lag: Option<f64>,
    pub value: Option<f64>,
    pub pairs: u64,
}

/// Bins `[k w, (k+1) w)` for `k` in `first..=last`.
pub fn uniform_bins(width: f64, first: usize, last: usize) -> Vec<(f64, f64)> {
    (first..=last).map(|k| (k as f64 * width, (k + 1) as f64 * width)).collect()
}

/// Autocorrelation of irregular samples: pair products of deviations
/// binned by `|t_i - t_j|`, normalized by the sample variance. A bin
/// starting at 0 includes the `i = j` pairs.
pub fn empirical_autocorrelation(times: &[f64], xs: &[f64], bins: &[(f64, f64)]) -> Result<Vec<LagBin>> {
    if times.len() != xs.len() {
        return Err(Error::arg("times and values differ in length"));
    }
    if times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::arg("sample times must be nondecreasing"));
    }
    if bins.iter().any(|&(lo, hi)| !(hi > lo) || lo < 0.0) || bins.windows(2).any(|w| w[1].0 < w[0].1) {
        return Err(Error::arg("lag bins must be positive-width, nonnegative and ordered"));
    }
    if xs.len() < 2 {
        return Err(Error::arg("at least two samples are needed"));
    }
    let mean = crate::sum::kmean(xs);
    let dev: Vec<f64> = xs.iter().map(|x| x - mean).collect();
    let var = dev.iter().map(|d| d * d).collect::<KahanSum>().value() / xs.len() as f64;
    if !(var > 0.0) {
        return Err(Error::arg("sample variance is zero"));
    }
    let max_hi = bins.last().map(|b| b.1).unwrap_or(0.0);
    let mut sums = alloc::vec![KahanSum::new(); bins.len()];
    let mut lags = alloc::vec![KahanSum::new(); bins.len()];
    let mut counts = alloc::vec![0u64; bins.len()];
    for i in 0..xs.len() {
        for j in i..xs.len() {
            let lag = times[j] - times[i];
            if lag >= max_hi {
                break;
            }
            // Bins are ordered; find the one whose lower edge is the last ≤ lag.
            let k = bins.partition_point(|b| b.0 <= lag);
            if k == 0 {
                continue;
            }
            let (lo, hi) = bins[k - 1];
            if lag < lo || lag >= hi {
                continue;
            }
            sums[k - 1].add(dev[i] * dev[j]);
            lags[k - 1].add(lag);
            counts[k - 1] += 1;
        }
    }
    Ok(bins
        .iter()
        .enumerate()
        .map(|(k, &(lo, hi))| {
            let c = counts[k];
            let (lag, value) = if c == 0 {
                (None, None)
            } else {
                (Some(lags[k].value() / c as f64), Some(sums[k].value() / c as f64 / var))
            };
            LagBin { lo, hi, lag, value, pairs: c }
        })
        .collect())
}

/// Standard autocorrelation estimator of a regularly sampled series at
/// lags `0..=max_lag` steps.
pub fn regular_autocorrelation(xs: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    if xs.len() <= max_lag + 1 {
        return Err(Error::arg("series is shorter than the largest lag"));
    }
    let n = xs.len();
    let mean = crate::sum::kmean(xs);
    let dev: Vec<f64> = xs.iter().map(|x| x - mean).collect();
    let c0 = dev.iter().map(|d| d * d).collect::<KahanSum>().value() / n as f64;
    if !(c0 > 0.0) {
        return Err(Error::arg("sample variance is zero"));
    }
    Ok((0..=max_lag)
        .map(|h| dev[..n - h].iter().zip(&dev[h..]).map(|(a, b)| a * b).collect::<KahanSum>().value() / (n - h) as f64 / c0)
        .collect())
}

/// Sample covariance between concentration samples and the daily mean
/// discharge of their day. `q_daily` maps a day index (days since the
/// epoch, floored) to that day's mean discharge; sample times are floored
/// to find their day.
pub fn empirical_cross_covariance(q_daily: &BTreeMap<i64, f64>, conc: &[(f64, f64)]) -> Result<f64> {
    let mut unmatched = Vec::new();
    let mut pairs = Vec::with_capacity(conc.len());
    for &(t, c) in conc {
        match q_daily.get(&(libm::floor(t) as i64)) {
            Some(&q) => pairs.push((q, c)),
            None => unmatched.push(t),
        }
    }
    if !unmatched.is_empty() {
        return Err(Error::Unmatched(unmatched));
    }
    if pairs.len() < 2 {
        return Err(Error::arg("at least two matched samples are needed"));
    }
    // Shift by the first pair; covariance is shift invariant.
    let (q0, c0) = pairs[0];
    let n = pairs.len() as f64;
    let qm = pairs.iter().map(|p| p.0 - q0).collect::<KahanSum>().value() / n;
    let cm = pairs.iter().map(|p| p.1 - c0).collect::<KahanSum>().value() / n;
    let s: KahanSum = pairs.iter().map(|&(q, c)| (q - q0 - qm) * (c - c0 - cm)).collect();
    Ok(s.value() / (n - 1.0))
}

/// Histogram normalized to a probability density on `[lo, hi)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
    pub below: u64,
    pub above: u64,
}

impl Histogram {
    pub fn new(bins: usize, lo: f64, hi: f64) -> Result<Self> {
        if bins < 10 {
            return Err(Error::arg(format!("{bins} bins are too few (need 10)")));
        }
        if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::arg(format!("histogram range [{lo}, {hi}) is empty")));
        }
        Ok(Self { lo, hi, counts: alloc::vec![0; bins], below: 0, above: 0 })
    }

    pub fn add(&mut self, x: f64) {
        if x < self.lo {
            self.below += 1;
        } else if x >= self.hi {
            self.above += 1;
        } else {
            let w = (self.hi - self.lo) / self.counts.len() as f64;
            let k = (((x - self.lo) / w) as usize).min(self.counts.len() - 1);
            self.counts[k] += 1;
        }
    }

    pub fn merge(&mut self, other: &Histogram) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.below += other.below;
        self.above += other.above;
    }

    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.counts.len() as f64
    }

    pub fn inside(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Bin centers and densities; the densities times the bin width sum
    /// to 1 over the samples inside the range.
    pub fn density(&self) -> Vec<(f64, f64)> {
        let w = self.width();
        let total = self.inside() as f64;
        self.counts
            .iter()
            .enumerate()
            .map(|(k, &c)| (self.lo + (k as f64 + 0.5) * w, if total > 0.0 { c as f64 / (total * w) } else { 0.0 }))
            .collect()
    }
}

pub fn histogram_pdf(xs: &[f64], bins: usize, lo: f64, hi: f64) -> Result<Histogram> {
    if xs.is_empty() {
        return Err(Error::arg("cannot build a histogram from no samples"));
    }
    let mut h = Histogram::new(bins, lo, hi)?;
    for &x in xs {
        h.add(x);
    }
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discharge::{q_cumulant, DischargeModel};
    use crate::measures::theta_from_pi;

    fn table4() -> DischargeModel {
        DischargeModel::new(1.752, 1.608, 2.985, 1.510e-3, 0.7998).unwrap()
    }

    fn q_moments() -> DischargeMoments {
        let m = table4();
        DischargeMoments { mean: q_cumulant(1, &m).unwrap(), variance: q_cumulant(2, &m).unwrap() }
    }

    fn tn() -> MemoryModel {
        MemoryModel::new(0.3844, 0.01684, 0.5412, MixingMeasure::gamma(0.5355, 0.3482).unwrap()).unwrap()
    }

    fn tp() -> MemoryModel {
        MemoryModel::new(7.064e-3, 2.986e-2, 1.132, MixingMeasure::dirac(0.294).unwrap()).unwrap()
    }

    fn theta() -> MixingMeasure {
        theta_from_pi(1.752, 1.608).unwrap()
    }

    fn stats(model: &MemoryModel, n: usize) -> (MemoryStatistics, IntegralGrid) {
        let grid = IntegralGrid::new(&theta(), &model.rho, n).unwrap();
        (MemoryStatistics::new(model, q_moments(), &grid).unwrap(), grid)
    }

    #[test]
    fn factorized_sums_match_tensor_sums() {
        for model in [tn(), tp()] {
            let (s, grid) = stats(&model, 48);
            let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1e-300);
            assert!(rel(s.triple_integral(), tensor::triple(&grid)) < 1e-12);
            for &h in &[0.0, 0.3, 1.07, 5.0, 40.0] {
                assert!(rel(s.i_term(h), tensor::i_term(&grid, h)) < 1e-11, "I({h})");
                let (j, jt) = (s.j_term(h), tensor::j_term(&grid, h));
                assert!((j - jt).abs() < 1e-11 * s.i_term(0.0), "J({h}) {j} vs {jt}");
                assert!(rel(s.f_unit(h), tensor::f_unit(&grid, h)) < 1e-10, "F({h})");
                assert!(rel(s.g_unit(h), tensor::g_unit(&grid, h)) < 1e-12, "G({h})");
            }
        }
    }

    #[test]
    fn coincident_atoms_take_the_confluent_limit() {
        let grid = IntegralGrid { theta: alloc::vec![0.5, 1.0, 2.0], rho: alloc::vec![0.5, 1.0 + 1e-12, 3.0], n_int: 16 };
        let model = MemoryModel::new(0.3, 0.02, 0.5, MixingMeasure::empirical(grid.rho.clone()).unwrap()).unwrap();
        let s = MemoryStatistics::new(&model, q_moments(), &grid).unwrap();
        for &l in &[0.1, 1.0, 4.0] {
            let f = s.f_unit(l);
            assert!(f.is_finite());
            assert!((f - tensor::f_unit(&grid, l)).abs() < 1e-12);
            // Continuity of the kernel across the confluent threshold.
            let a = divided_exp(1.0 + 1e-9, 1.0, l);
            let b = divided_exp(1.0 + 1e-7, 1.0, l);
            assert!((a - b).abs() < 1e-6 * a);
        }
    }

    #[test]
    fn symmetric_in_the_two_reversion_grids() {
        let (s, grid) = stats(&tn(), 64);
        let mut swapped = 0.0;
        let t = &grid.theta;
        let rho = &grid.rho;
        let mut acc = KahanSum::new();
        for &p in rho {
            for &big in rho {
                for &r in t {
                    acc.add(big * p / (big + p) * (1.0 / (big + r) + 1.0 / (p + r)));
                }
            }
        }
        swapped += acc.value() / (t.len() * rho.len() * rho.len()) as f64;
        assert!((swapped - s.triple_integral()).abs() < 1e-13 * swapped);
    }

    fn gamma_parts(m: &MixingMeasure) -> (f64, f64) {
        match *m {
            MixingMeasure::Gamma { shape, scale } => (shape, scale),
            _ => unreachable!(),
        }
    }

    /// Continuous integrals through Laplace transforms:
    /// `R/(R+r) = ∫ R e^{-(R+r)s} ds` and similarly for the triple integrand.
    fn transform_oracle(model: &MemoryModel) -> (f64, f64) {
        use crate::quad::integrate_to_infinity;
        let (zt, xt) = gamma_parts(&theta());
        let (zr, xr) = gamma_parts(&model.rho);
        let lt = move |s: f64| libm::pow(1.0 + xt * s, -zt);
        let dr = move |s: f64| zr * xr * libm::pow(1.0 + xr * s, -zr - 1.0);
        let pair = integrate_to_infinity(|s| dr(s) * lt(s), 0.0, 1e-13, 1e-11).unwrap();
        let triple = 2.0
            * integrate_to_infinity(
                |s| dr(s) * integrate_to_infinity(|t| dr(s + t) * lt(t), 0.0, 1e-12, 1e-8).unwrap(),
                0.0,
                1e-11,
                1e-7,
            )
            .unwrap();
        (pair, triple)
    }

    #[test]
    fn discretization_converges_to_continuous_integrals() {
        let (pair, triple) = transform_oracle(&tn());
        let (s, _) = stats(&tn(), 2048);
        assert!((s.g_unit(0.0) - pair).abs() < 2e-3 * pair, "{} {pair}", s.g_unit(0.0));
        assert!((s.triple_integral() - triple).abs() < 2e-3 * triple, "{} {triple}", s.triple_integral());
    }

    #[test]
    fn tn_peak_lag() {
        let (s, _) = stats(&tn(), 256);
        assert!((s.mean() - 1.084).abs() < 5e-4, "{}", s.mean());
        let peak = s.peak_lag(30.0, 0.05, 0.005).unwrap();
        assert!((peak - 1.07).abs() < 0.02, "{peak}");
    }

    #[test]
    fn correlation_at_zero_and_continuity() {
        for model in [tn(), tp()] {
            let (s, _) = stats(&model, 64);
            assert_eq!(s.autocorrelation(0.0).unwrap(), 1.0);
            assert_eq!(s.j_term(0.0), 0.0);
            let l0 = s.lambda0();
            assert!((s.mutual_covariance(0.0) - s.mutual_covariance(-0.0 - 1e-300)).abs() < 1e-12 * l0);
            assert!((s.f_unit(0.0) - s.g_unit(0.0)).abs() < 1e-12 * s.g_unit(0.0));
        }
    }

    #[test]
    fn no_coupling_no_covariance() {
        let m = MemoryModel::new(0.4, 0.0, 0.5, MixingMeasure::gamma(0.5355, 0.3482).unwrap()).unwrap();
        let (s, _) = stats(&m, 32);
        for &h in &[-3.0, 0.0, 2.0] {
            assert_eq!(s.mutual_covariance(h), 0.0);
        }
        assert!((s.variance() - 0.5 * 0.25 * 0.4).abs() < 1e-15);
    }

    #[test]
    fn lambda_branch_bounds() {
        let (s, _) = stats(&tn(), 128);
        let mean_rate = tn().rho.mean();
        let aq = |l: f64| theta().exp_transform(l).unwrap();
        let mut prev = f64::INFINITY;
        for k in 0..200 {
            let l = k as f64 * 0.25;
            let f = s.f_unit(l);
            let g = s.g_unit(l);
            assert!(f <= 1.0 + l * mean_rate + 1e-12);
            assert!(g <= aq(l) + 1e-12);
            assert!(g <= prev);
            prev = g;
        }
    }

    #[test]
    fn kl_values() {
        assert_eq!(kl_misspecification(0.5355, 0.0).unwrap(), 0.0);
        assert!((kl_misspecification(0.5355, -0.5).unwrap() - 0.1034).abs() < 5e-5);
        assert!((kl_misspecification(0.5355, 0.2).unwrap() - 9.467e-3).abs() < 5e-7);
        assert!(matches!(kl_misspecification(1.0, -1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn moments_of_known_laws() {
        use crate::rng::{tag, RngStream};
        use rand::Rng;
        use rand_distr::{Exp1, StandardNormal};
        let mut rng = RngStream::keyed(5, &[tag::TEST, 40]);
        let n = 1_000_000;
        let xs: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let m = empirical_moments(&xs).unwrap();
        let nf = n as f64;
        assert!(m.mean.abs() < 4.0 / nf.sqrt());
        assert!((m.variance - 1.0).abs() < 4.0 * (2.0 / nf).sqrt());
        assert!(m.skewness.abs() < 4.0 * (6.0 / nf).sqrt());
        assert!(m.kurtosis.abs() < 4.0 * (24.0 / nf).sqrt());
        let ys: Vec<f64> = (0..n).map(|_| rng.sample(Exp1)).collect();
        let e = empirical_moments(&ys).unwrap();
        assert!((e.skewness - 2.0).abs() < 0.05);
        assert!(empirical_moments(&[3.0; 20]).is_err());
        assert!(empirical_moments(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn autocorrelation_estimators() {
        use crate::rng::{tag, RngStream};
        use rand::Rng;
        let mut rng = RngStream::keyed(5, &[tag::TEST, 41]);
        let n = 3000;
        let times: Vec<f64> = (0..n).map(|i| i as f64 * 7.0 + rng.random::<f64>()).collect();
        let xs: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let mut bins = alloc::vec![(0.0, 0.5)];
        bins.extend(uniform_bins(7.0, 1, 12));
        let ac = empirical_autocorrelation(&times, &xs, &bins).unwrap();
        assert_eq!(ac[0].value, Some(1.0));
        assert_eq!(ac[0].pairs, n as u64);
        for b in &ac[1..] {
            let v = b.value.unwrap();
            assert!(v.abs() < 4.0 / (b.pairs as f64).sqrt(), "{b:?}");
        }
        let gaps = empirical_autocorrelation(&[0.0, 1.0, 2.0], &[1.0, 2.0, 4.0], &[(10.0, 11.0)]).unwrap();
        assert_eq!(gaps[0].value, None);
        let reg = regular_autocorrelation(&xs, 5).unwrap();
        assert!((reg[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cross_covariance_matching() {
        let mut q = BTreeMap::new();
        for d in 0..10 {
            q.insert(d, d as f64 * 2.0);
        }
        let conc: Vec<(f64, f64)> = (0..10).map(|d| (d as f64 + 0.4, 5.0)).collect();
        assert_eq!(empirical_cross_covariance(&q, &conc).unwrap(), 0.0);
        let lin: Vec<(f64, f64)> = (0..10).map(|d| (d as f64 + 0.4, d as f64)).collect();
        // Cov(2d, d) = 2 Var(d) = 2 · 55/6.
        assert!((empirical_cross_covariance(&q, &lin).unwrap() - 2.0 * 55.0 / 6.0).abs() < 1e-12);
        match empirical_cross_covariance(&q, &[(3.2, 1.0), (12.5, 1.0), (-0.5, 2.0)]) {
            Err(Error::Unmatched(ts)) => assert_eq!(ts, alloc::vec![12.5, -0.5]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn histogram_normalization() {
        use crate::rng::{tag, RngStream};
        use rand::Rng;
        let mut rng = RngStream::keyed(5, &[tag::TEST, 42]);
        let xs: Vec<f64> = (0..1_000_000).map(|_| rng.random::<f64>()).collect();
        let h = histogram_pdf(&xs, 20, 0.0, 1.0).unwrap();
        let d = h.density();
        assert!(d.iter().all(|&(_, p)| (p - 1.0).abs() < 0.02));
        let total: f64 = d.iter().map(|&(_, p)| p * h.width()).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(histogram_pdf(&[], 20, 0.0, 1.0).is_err());
        assert!(histogram_pdf(&xs, 5, 0.0, 1.0).is_err());
    }
}
