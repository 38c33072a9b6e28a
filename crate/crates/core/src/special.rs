//! Special functions needed by the closed forms and the quantile
//! discretization: gamma, log-gamma, the regularized incomplete gamma
//! function and its inverse.

use crate::{Error, Result};

#[inline]
pub fn gamma(x: f64) -> f64 {
    libm::tgamma(x)
}

#[inline]
pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

const EPS: f64 = 1e-16;
const TINY: f64 = 1e-300;

/// Regularized lower incomplete gamma function `P(a, x)`.
///
/// Series expansion below `x < a + 1`, Lentz continued fraction for the
/// upper tail otherwise.
pub fn reg_lower_gamma(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x.is_infinite() {
        return 1.0;
    }
    if x < a + 1.0 {
        series_p(a, x)
    } else {
        1.0 - cont_frac_q(a, x)
    }
}

/// Regularized upper incomplete gamma function `Q(a, x) = 1 - P(a, x)`.
pub fn reg_upper_gamma(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < a + 1.0 {
        1.0 - series_p(a, x)
    } else {
        cont_frac_q(a, x)
    }
}

fn prefactor(a: f64, x: f64) -> f64 {
    libm::exp(a * libm::log(x) - x - ln_gamma(a))
}

fn series_p(a: f64, x: f64) -> f64 {
    let mut ap = a;
    let mut term = 1.0 / a;
    let mut sum = term;
    for _ in 0..10_000 {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if libm::fabs(term) < libm::fabs(sum) * EPS {
            break;
        }
    }
    sum * prefactor(a, x)
}

fn cont_frac_q(a: f64, x: f64) -> f64 {
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..10_000 {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if libm::fabs(d) < TINY {
            d = TINY;
        }
        c = b + an / c;
        if libm::fabs(c) < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if libm::fabs(del - 1.0) < EPS {
            break;
        }
    }
    prefactor(a, x) * h
}

/// Density of the unit-scale gamma law with the given shape.
pub fn gamma_density(shape: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    libm::exp((shape - 1.0) * libm::log(x) - x - ln_gamma(shape))
}

/// Quantile of the unit-scale gamma law: the `x` with `P(shape, x) = p`.
///
/// Bracketed bisection with Newton refinement; converges to `1e-12` in
/// probability (relative to `p` for very small levels).
pub fn gamma_quantile(shape: f64, p: f64) -> Result<f64> {
    if !(shape > 0.0) || !shape.is_finite() {
        return Err(Error::arg("gamma shape must be positive and finite"));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::arg("quantile level must lie in (0, 1)"));
    }

    let mut lo = 0.0_f64;
    let mut hi = libm::fmax(shape, 1.0);
    let mut guard = 0;
    while reg_lower_gamma(shape, hi) < p {
        lo = hi;
        hi *= 2.0;
        guard += 1;
        if guard > 2000 {
            return Err(Error::numeric(alloc::format!(
                "gamma quantile bracket failed at level {p}"
            )));
        }
    }

    // Small-level asymptote P(a, x) ~ x^a / Gamma(a + 1).
    let mut x = libm::exp((libm::log(p) + ln_gamma(shape + 1.0)) / shape);
    if !(x > lo && x < hi) {
        x = 0.5 * (lo + hi);
    }

    for _ in 0..500 {
        let f = reg_lower_gamma(shape, x) - p;
        if f < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        if libm::fabs(f) <= 1e-15 * p.min(1.0 - p).max(1e-300) || (hi - lo) <= 4.0 * f64::EPSILON * x {
            return Ok(x);
        }
        let dens = gamma_density(shape, x);
        let mut next = if dens > 0.0 { x - f / dens } else { f64::NAN };
        if !(next > lo && next < hi) {
            // Geometric bisection while the bracket spans decades.
            next = if lo == 0.0 {
                0.5 * hi
            } else if hi / lo > 4.0 {
                libm::sqrt(lo * hi)
            } else {
                0.5 * (lo + hi)
            };
        }
        if next == x {
            break;
        }
        x = next;
    }

    let resid = libm::fabs(reg_lower_gamma(shape, x) - p);
    if resid <= 1e-12 {
        Ok(x)
    } else {
        Err(Error::numeric(alloc::format!(
            "gamma quantile did not converge at level {p} (residual {resid:e})"
        )))
    }
}
