//! Dense least squares by Householder QR.

use alloc::vec::Vec;

use crate::{Error, Result};

/// Least-squares solution of `A x ≈ y` for a row-major `rows × cols`
/// design matrix. Columns whose reflected diagonal falls below `1e-10`
/// of the largest column norm make the system rank deficient.
pub fn least_squares(a: &[f64], rows: usize, cols: usize, y: &[f64]) -> Result<Vec<f64>> {
    if a.len() != rows * cols || y.len() != rows {
        return Err(Error::arg("design matrix and observations disagree in shape"));
    }
    if rows < cols {
        return Err(Error::arg("fewer observations than unknowns"));
    }
    let mut m = a.to_vec();
    let mut rhs = y.to_vec();
    let scale = (0..cols)
        .map(|j| libm::sqrt((0..rows).map(|i| m[i * cols + j] * m[i * cols + j]).sum::<f64>()))
        .fold(0.0, f64::max);
    if !(scale > 0.0) {
        return Err(Error::numeric("design matrix is zero"));
    }
    for k in 0..cols {
        let norm = libm::sqrt((k..rows).map(|i| m[i * cols + k] * m[i * cols + k]).sum::<f64>());
        if norm <= 1e-10 * scale {
            return Err(Error::numeric("design matrix is rank deficient"));
        }
        let alpha = if m[k * cols + k] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = (k..rows).map(|i| m[i * cols + k]).collect();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 > 0.0 {
            for j in k..cols {
                let dot: f64 = v.iter().enumerate().map(|(o, vi)| vi * m[(k + o) * cols + j]).sum();
                let f = 2.0 * dot / vnorm2;
                for (o, vi) in v.iter().enumerate() {
                    m[(k + o) * cols + j] -= f * vi;
                }
            }
            let dot: f64 = v.iter().enumerate().map(|(o, vi)| vi * rhs[k + o]).sum();
            let f = 2.0 * dot / vnorm2;
            for (o, vi) in v.iter().enumerate() {
                rhs[k + o] -= f * vi;
            }
        }
        if libm::fabs(m[k * cols + k]) <= 1e-10 * scale {
            return Err(Error::numeric("design matrix is rank deficient"));
        }
    }
    let mut x = alloc::vec![0.0; cols];
    for k in (0..cols).rev() {
        let s: f64 = ((k + 1)..cols).map(|j| m[k * cols + j] * x[j]).sum();
        x[k] = (rhs[k] - s) / m[k * cols + k];
    }
    Ok(x)
}
