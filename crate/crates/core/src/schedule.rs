//! The `ε`-dependent scalings `p_ε` and `c_ε = ε^{p_ε}`.
//!
//! The logarithmic energy behaves like the truncated quadratic
//! `min{ε^{1-2p}|z|², 1/ε}` with threshold slope `c_ε/ε`. The canonical
//! exponent is `p_ε = sqrt(log|log ε| / |log ε|)`, which tends to zero while
//! `log|log ε| / (p_ε |log ε|)` also tends to zero.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Largest `ε` accepted by [`EpsSchedule::canonical`].
pub const DEFAULT_MAX_EPS: f64 = 1e-3;

/// `e^{-e}`: largest `ε` for which `log|log ε| ≥ 1`.
pub fn max_admissible_eps<T: Real>() -> T {
    (-T::E()).exp()
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct EpsSchedule<T> {
    pub eps: T,
    pub p_eps: T,
    pub c_eps: T,
}

impl<T: Real> EpsSchedule<T> {
    /// Canonical schedule for `0 < eps ≤ 1e-3`.
    pub fn canonical(eps: T) -> Result<Self> {
        if eps > T::of(DEFAULT_MAX_EPS) && eps <= max_admissible_eps() {
            return Err(Error::domain(format!(
                "eps = {eps} exceeds {DEFAULT_MAX_EPS}; use EpsSchedule::extended for the range up to e^-e"
            )));
        }
        Self::extended(eps)
    }

    /// Canonical exponent on the full admissible range `(0, e^{-e}]`.
    pub fn extended(eps: T) -> Result<Self> {
        check_eps(eps)?;
        let log_abs = -eps.ln();
        let p = (log_abs.ln() / log_abs).sqrt();
        Ok(Self::assemble(eps, p))
    }

    /// Schedule with an explicitly chosen exponent `p ∈ (0, 1)`.
    pub fn with_exponent(eps: T, p: T) -> Result<Self> {
        check_eps(eps)?;
        if !(p > T::zero() && p < T::one()) {
            return Err(Error::domain(format!("exponent p = {p} outside (0, 1)")));
        }
        Ok(Self::assemble(eps, p))
    }

    fn assemble(eps: T, p: T) -> Self {
        Self {
            eps,
            p_eps: p,
            c_eps: eps.powf(p),
        }
    }

    /// `|log ε|`.
    pub fn log_abs(&self) -> T {
        -self.eps.ln()
    }

    /// `ε|log ε|`, the coefficient inside the logarithm.
    pub fn eps_log(&self) -> T {
        self.eps * self.log_abs()
    }

    /// Threshold slope `c_ε/ε`.
    pub fn threshold(&self) -> T {
        self.c_eps / self.eps
    }

    /// `ε^{1-2p_ε}`, the quadratic coefficient of the truncated energy.
    pub fn quadratic_coefficient(&self) -> T {
        self.eps.powf(T::one() - (self.p_eps + self.p_eps))
    }

    /// `p_ε < 1/2`.
    pub fn is_subcritical(&self) -> bool {
        self.p_eps < T::of(0.5)
    }
}

fn check_eps<T: Real>(eps: T) -> Result<()> {
    if eps > T::zero() && eps <= max_admissible_eps() {
        Ok(())
    } else {
        Err(Error::domain(format!("eps = {eps} outside (0, e^-e]")))
    }
}

/// Canonical schedule; see [`EpsSchedule::canonical`].
pub fn make_schedule<T: Real>(eps: T) -> Result<EpsSchedule<T>> {
    EpsSchedule::canonical(eps)
}

/// `(c_ε|log ε|, log(1 + ε|log ε|·c_ε²/ε²)/|log ε|)`; both tend to `0` and
/// `1` respectively as `ε → 0`.
pub fn mn_lemma_ratios<T: Real>(s: &EpsSchedule<T>) -> (T, T) {
    let log_abs = s.log_abs();
    let r_a = s.c_eps * log_abs;
    let r_b = (log_abs * s.c_eps * s.c_eps / s.eps).ln_1p() / log_abs;
    (r_a, r_b)
}

/// `(1/(ε|log ε|))·log(1 + ε|log ε|·z²)`.
pub fn log_density<T: Real>(s: &EpsSchedule<T>, z: T) -> T {
    let el = s.eps_log();
    (el * z * z).ln_1p() / el
}

/// Literal max-form bound:
/// `log-density(z) ≥ (1-η)·max{ε^{1-2p}z², 1/ε}`.
///
/// Fails at `z = 0` and for every `z` below the threshold slope; see
/// [`truncated_bound_holds`] for the truncated-quadratic bound.
pub fn sub_prop_holds<T: Real>(s: &EpsSchedule<T>, eta: T, z: T) -> bool {
    let quad = s.quadratic_coefficient() * z * z;
    log_density(s, z) >= (T::one() - eta) * quad.max(T::one() / s.eps)
}

/// Truncated-quadratic bound:
/// `log-density(z) ≥ (1-η)·min{ε^{1-2p}z², 1/ε}`.
pub fn truncated_bound_holds<T: Real>(s: &EpsSchedule<T>, eta: T, z: T) -> bool {
    let quad = s.quadratic_coefficient() * z * z;
    log_density(s, z) >= (T::one() - eta) * quad.min(T::one() / s.eps)
}

/// Worst ratio `log-density(z) / min{ε^{1-2p}z², 1/ε}` over `zs`; the
/// truncated bound holds on `zs` iff this is at least `1-η`.
pub fn truncated_bound_margin<T: Real>(s: &EpsSchedule<T>, zs: &[T]) -> T {
    zs.iter()
        .map(|&z| {
            let quad = s.quadratic_coefficient() * z * z;
            log_density(s, z) / quad.min(T::one() / s.eps)
        })
        .fold(T::infinity(), T::min)
}

/// Log-spaced slopes `c_ε/ε·10^{-decades} .. c_ε/ε·10^{decades}`.
pub fn threshold_grid<T: Real>(s: &EpsSchedule<T>, decades: T, points: usize) -> Vec<T> {
    let center = s.threshold().log10();
    let ten = T::of(10.0);
    (0..points)
        .map(|i| {
            let frac = if points > 1 {
                T::of_usize(i) / T::of_usize(points - 1)
            } else {
                T::of(0.5)
            };
            ten.powf(center - decades + (decades + decades) * frac)
        })
        .collect()
}
