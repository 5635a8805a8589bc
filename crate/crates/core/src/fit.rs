//! Least-squares extrapolation of `ε`-sweeps to `ε → 0`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Relative singular-value cutoff below which a design is called rank
/// deficient.
const RANK_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct LeastSquares<T> {
    pub coeffs: Vec<T>,
    pub residuals: Vec<T>,
    pub rms: T,
    pub rank: usize,
}

impl<T> LeastSquares<T> {
    pub fn full_rank(&self) -> bool {
        self.rank == self.coeffs.len()
    }
}

/// Minimizes `‖A c - y‖₂` through the SVD of `A`, given by rows. A rank
/// deficient design gets the minimum-norm solution.
pub fn least_squares<T: Real>(rows: &[Vec<T>], y: &[T]) -> Result<LeastSquares<T>> {
    let m = rows.len();
    let n = rows.first().map_or(0, Vec::len);
    if m == 0 || n == 0 || y.len() != m || rows.iter().any(|r| r.len() != n) {
        return Err(Error::domain(format!(
            "least squares needs a nonempty {m}x{n} design matching {} observations",
            y.len()
        )));
    }
    let f = |v: T| v.to_f64().unwrap_or(f64::NAN);
    let a = DMatrix::from_fn(m, n, |i, j| f(rows[i][j]));
    let b = DVector::from_iterator(m, y.iter().map(|&v| f(v)));
    if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
        return Err(Error::domain("least squares input is not finite"));
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let cut = RANK_TOL * smax.max(f64::MIN_POSITIVE);
    let rank = svd.singular_values.iter().filter(|&&s| s > cut).count();
    let c = svd
        .solve(&b, cut)
        .map_err(|e| Error::domain(format!("least squares solve failed: {e}")))?;
    let r = &a * &c - &b;
    let rms = (r.norm_squared() / m as f64).sqrt();
    Ok(LeastSquares {
        coeffs: c.iter().map(|&v| T::of(v)).collect(),
        residuals: r.iter().map(|&v| T::of(v)).collect(),
        rms: T::of(rms),
        rank,
    })
}

/// Correction terms in `value(ε) = limit + Σ a_i·φ_i(ε)`, with `L = |log ε|`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Correction {
    /// `log L / L`.
    LogLog,
    /// `1 / L`.
    Inverse,
    /// `log L / L` and `1 / L`.
    LogLogInverse,
}

impl Correction {
    pub fn basis<T: Real>(&self, eps: T) -> Vec<T> {
        let l = -eps.ln();
        let loglog = l.ln() / l;
        let inv = T::one() / l;
        match self {
            Self::LogLog => vec![loglog],
            Self::Inverse => vec![inv],
            Self::LogLogInverse => vec![loglog, inv],
        }
    }

    pub fn terms(&self) -> usize {
        match self {
            Self::LogLog | Self::Inverse => 1,
            Self::LogLogInverse => 2,
        }
    }
}

/// Extrapolated limit of a sweep.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LimitFit<T> {
    pub model: Correction,
    pub limit: T,
    /// Coefficients of the correction terms.
    pub corrections: Vec<T>,
    pub rms: T,
    pub rows_used: usize,
    /// Too few rows, a rank deficient design, or nothing to extrapolate.
    pub degenerate: bool,
}

/// Fits `model` to the last `last` rows of `(eps, value)`.
pub fn fit_limit<T: Real>(eps: &[T], values: &[T], model: Correction, last: usize) -> Result<LimitFit<T>> {
    if eps.len() != values.len() {
        return Err(Error::domain("eps and value columns differ in length"));
    }
    if eps.iter().any(|&e| !(e > T::zero() && e < T::one())) {
        return Err(Error::domain("fit needs every eps in (0, 1)"));
    }
    let start = eps.len().saturating_sub(last);
    let (eps, values) = (&eps[start..], &values[start..]);
    let params = model.terms() + 1;
    if eps.len() < params {
        return Ok(LimitFit {
            model,
            limit: values.last().copied().unwrap_or_else(T::nan),
            corrections: vec![T::nan(); model.terms()],
            rms: T::nan(),
            rows_used: eps.len(),
            degenerate: true,
        });
    }
    let rows: Vec<Vec<T>> = eps
        .iter()
        .map(|&e| std::iter::once(T::one()).chain(model.basis(e)).collect())
        .collect();
    let ls = least_squares(&rows, values)?;
    Ok(LimitFit {
        model,
        limit: ls.coeffs[0],
        corrections: ls.coeffs[1..].to_vec(),
        rms: ls.rms,
        rows_used: eps.len(),
        degenerate: !ls.full_rank(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line() {
        let rows: Vec<Vec<f64>> = (0..4).map(|i| vec![1.0, i as f64]).collect();
        let y = [1.0, 3.0, 5.0, 7.0];
        let ls = least_squares(&rows, &y).unwrap();
        assert!((ls.coeffs[0] - 1.0).abs() < 1e-12 && (ls.coeffs[1] - 2.0).abs() < 1e-12);
        assert!(ls.rms < 1e-12 && ls.full_rank());
    }

    #[test]
    fn overdetermined_matches_normal_equations() {
        // y = 2 + 3x with alternating ±0.1 noise
        let xs = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0];
        let rows: Vec<Vec<f64>> = xs.iter().map(|&x| vec![1.0, x]).collect();
        let y: Vec<f64> = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| 2.0 + 3.0 * x + if i % 2 == 0 { 0.1 } else { -0.1 })
            .collect();
        let ls = least_squares(&rows, &y).unwrap();
        let n = xs.len() as f64;
        let (sx, sy) = (xs.iter().sum::<f64>(), y.iter().sum::<f64>());
        let sxx: f64 = xs.iter().map(|x| x * x).sum();
        let sxy: f64 = xs.iter().zip(&y).map(|(x, y)| x * y).sum();
        let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        assert!((ls.coeffs[1] - slope).abs() < 1e-12);
        assert!((ls.coeffs[0] - (sy - slope * sx) / n).abs() < 1e-12);
    }

    #[test]
    fn rank_deficiency_flagged() {
        let rows: Vec<Vec<f64>> = (0..4).map(|i| vec![1.0, 2.0 * i as f64, i as f64]).collect();
        let ls = least_squares(&rows, &[0.0, 1.0, 2.0, 3.0]).unwrap();
        assert_eq!(ls.rank, 2);
        assert!(!ls.full_rank());
        assert!(least_squares::<f64>(&[], &[]).is_err());
    }

    #[test]
    fn recovers_synthetic_limit() {
        let eps: Vec<f64> = (4..=12).map(|n| 10f64.powi(-n)).collect();
        let model = Correction::LogLogInverse;
        let y: Vec<f64> = eps
            .iter()
            .map(|&e| {
                let b = model.basis(e);
                3.0 + 0.7 * b[0] - 2.0 * b[1]
            })
            .collect();
        let f = fit_limit(&eps, &y, model, 5).unwrap();
        assert!((f.limit - 3.0).abs() < 1e-9);
        assert!((f.corrections[0] - 0.7).abs() < 1e-7);
        assert_eq!(f.rows_used, 5);
        assert!(!f.degenerate);
        let short = fit_limit(&eps[..2], &y[..2], model, 5).unwrap();
        assert!(short.degenerate);
    }
}
