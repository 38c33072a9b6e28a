//! Mixing measures on `(0, ∞)`.
//!
//! Every superposition in the model integrates exponentials against one of
//! three probability measures: the reversion law of the memory components,
//! the recession law of the discharge pulses, and the normalized law that
//! represents the discharge autocorrelation. All three are either gamma,
//! Dirac, or an equal-weight set of atoms obtained by quantile
//! discretization.

use alloc::format;
use alloc::vec::Vec;

use crate::special::gamma_quantile;
use crate::sum::KahanSum;
use crate::{Error, Result};

/// Shapes below this are rejected; their low quantile atoms underflow.
pub const MIN_SHAPE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub enum MixingMeasure {
    /// Gamma law with density `r^{k-1} e^{-r/s} / (Γ(k) s^k)`.
    Gamma { shape: f64, scale: f64 },
    Dirac { atom: f64 },
    /// Equal-weight atoms, stored sorted.
    Empirical { atoms: Vec<f64> },
}

impl MixingMeasure {
    pub fn gamma(shape: f64, scale: f64) -> Result<Self> {
        if !(shape >= MIN_SHAPE) || !shape.is_finite() {
            return Err(Error::arg(format!("gamma shape {shape} must be finite and >= {MIN_SHAPE}")));
        }
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::arg(format!("gamma scale {scale} must be positive")));
        }
        Ok(MixingMeasure::Gamma { shape, scale })
    }

    pub fn dirac(atom: f64) -> Result<Self> {
        if !(atom > 0.0) || !atom.is_finite() {
            return Err(Error::arg(format!("Dirac atom {atom} must be positive")));
        }
        Ok(MixingMeasure::Dirac { atom })
    }

    /// Builds an empirical measure; atoms are sorted on the way in.
    pub fn empirical(mut atoms: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::arg("empirical measure needs at least one atom"));
        }
        if let Some(bad) = atoms.iter().find(|a| !(**a > 0.0) || !a.is_finite()) {
            return Err(Error::arg(format!("empirical atom {bad} must be positive")));
        }
        atoms.sort_by(|a, b| a.total_cmp(b));
        Ok(MixingMeasure::Empirical { atoms })
    }

    /// Mean `∫ r m(dr)`.
    pub fn mean(&self) -> f64 {
        match self {
            MixingMeasure::Gamma { shape, scale } => shape * scale,
            MixingMeasure::Dirac { atom } => *atom,
            MixingMeasure::Empirical { atoms } => crate::sum::kmean(atoms),
        }
    }

    /// Laplace transform `∫ e^{-r h} m(dr)`.
    pub fn exp_transform(&self, h: f64) -> Result<f64> {
        if !(h >= 0.0) {
            return Err(Error::arg(format!("lag {h} must be nonnegative")));
        }
        Ok(self.exp_transform_unchecked(h))
    }

    pub(crate) fn exp_transform_unchecked(&self, h: f64) -> f64 {
        match self {
            MixingMeasure::Gamma { shape, scale } => libm::pow(1.0 + scale * h, -shape),
            MixingMeasure::Dirac { atom } => libm::exp(-atom * h),
            MixingMeasure::Empirical { atoms } => {
                let s: KahanSum = atoms.iter().map(|r| libm::exp(-r * h)).collect();
                s.value() / atoms.len() as f64
            }
        }
    }

    /// Atoms of the measure at resolution `n`: quantile atoms for gamma,
    /// `n` copies for Dirac, the stored atoms for an empirical measure.
    pub fn atoms(&self, n: usize) -> Result<Vec<f64>> {
        match self {
            MixingMeasure::Empirical { atoms } => Ok(atoms.clone()),
            _ => match quantile_atoms(self, n)? {
                MixingMeasure::Empirical { atoms } => Ok(atoms),
                _ => unreachable!(),
            },
        }
    }

    pub fn is_dirac(&self) -> bool {
        matches!(self, MixingMeasure::Dirac { .. })
    }
}

/// Equal-weight discretization at the quantile levels `(2i - 1) / (2n)`.
pub fn quantile_atoms(m: &MixingMeasure, n: usize) -> Result<MixingMeasure> {
    if n == 0 {
        return Err(Error::arg("quantile resolution must be at least 1"));
    }
    let atoms = match m {
        MixingMeasure::Dirac { atom } => alloc::vec![*atom; n],
        MixingMeasure::Gamma { shape, scale } => {
            let mut atoms = Vec::with_capacity(n);
            for i in 1..=n {
                let p = (2 * i - 1) as f64 / (2 * n) as f64;
                let x = gamma_quantile(*shape, p).map_err(|e| match e {
                    Error::Numeric(msg) => Error::Numeric(format!("{msg} (level {p})")),
                    other => other,
                })?;
                atoms.push(x * scale);
            }
            atoms
        }
        MixingMeasure::Empirical { .. } => {
            return Err(Error::arg("quantile discretization expects a gamma or Dirac measure"));
        }
    };
    if let Some(bad) = atoms.iter().find(|a| !(**a > 0.0)) {
        return Err(Error::numeric(format!("quantile atom {bad} underflowed")));
    }
    Ok(MixingMeasure::Empirical { atoms })
}

/// The autocorrelation law `θ(dr) ∝ r^{-1} π(dr)` for a gamma recession law
/// `π = Gamma(alpha, beta)`; it is again gamma with shape `alpha - 1`.
pub fn theta_from_pi(alpha: f64, beta: f64) -> Result<MixingMeasure> {
    if !(alpha > 1.0) {
        return Err(Error::domain(format!(
            "recession shape {alpha} must exceed 1 for ∫ r^-1 π(dr) to be finite"
        )));
    }
    MixingMeasure::gamma(alpha - 1.0, beta)
}
