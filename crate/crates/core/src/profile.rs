//! Exact optimal transition profile and the jump-energy constant `m_k`.
//!
//! On `[0, 1]` the minimizer of `∫|v^{(k)}|²` with `v(0) = 0`, `v(1) = 1` and
//! vanishing derivatives of orders `1..k-1` at both ends is the unique
//! polynomial of degree `2k-1` fixed by those `2k` conditions. Rescaling to
//! `[0, T]` multiplies the derivative energy by `T^{1-2k}`, so
//!
//! ```text
//! m_k = min_T  T + c_k·T^{1-2k},    c_k = ∫₀¹ |v^{(k)}|²,
//! ```
//!
//! attained at `T* = ((2k-1)·c_k)^{1/(2k)}` with `m_k = 2k/(2k-1)·T*`.

use num_bigint::BigInt;
use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::linalg::solve_exact;
use crate::poly::Polynomial;
use crate::scalar::{Coefficient, Real};
use crate::Rational;

/// Largest supported derivative order.
pub const MAX_ORDER: usize = 12;

fn check_order(k: usize) -> Result<()> {
    if (1..=MAX_ORDER).contains(&k) {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "derivative order k = {k} outside 1..={MAX_ORDER}"
        )))
    }
}

fn falling_factorial(n: usize, m: usize) -> i64 {
    ((n - m + 1)..=n).fold(1i64, |acc, f| acc * f as i64)
}

/// Clamped Hermite profile on `[0, 1]`, solved exactly from the `2k×2k`
/// constraint system in the monomial basis.
pub fn hermite_profile(k: usize) -> Result<Polynomial<Rational>> {
    check_order(k)?;
    let size = 2 * k;
    let mut rows = Vec::with_capacity(size);
    let mut rhs = Vec::with_capacity(size);
    for order in 0..k {
        // v^{(order)}(0) = order!·a_order
        let mut row = vec![Rational::zero(); size];
        row[order] = Rational::from_i64(falling_factorial(order, order));
        rows.push(row);
        rhs.push(Rational::zero());

        // v^{(order)}(1) = Σ_i i!/(i-order)!·a_i
        let row = (0..size)
            .map(|i| {
                if i < order {
                    Rational::zero()
                } else {
                    Rational::from_i64(falling_factorial(i, order))
                }
            })
            .collect();
        rows.push(row);
        rhs.push(if order == 0 { Rational::one() } else { Rational::zero() });
    }
    let coeffs = solve_exact(rows, rhs).ok_or(Error::Singular("Hermite constraint matrix"))?;
    Ok(Polynomial::new(coeffs))
}

/// `c_k = ∫₀¹ |v^{(k)}|²` for the clamped profile, exactly.
pub fn derivative_energy(profile: &Polynomial<Rational>, k: usize) -> Rational {
    let dk = profile.nth_derivative(k);
    (&dk * &dk).integrate_unit()
}

/// `(2k-1)·((2k-2)!/(k-1)!)²`, the closed form observed for `c_k`.
pub fn derivative_energy_closed_form(k: usize) -> BigInt {
    let ratio: BigInt = (k..=2 * k - 2).fold(BigInt::one(), |acc, f| acc * BigInt::from(f));
    BigInt::from(2 * k - 1) * &ratio * &ratio
}

/// Minimal derivative energy of a clamped transition of unit height on
/// `[0, length]`: `c_k·length^{1-2k}`.
pub fn transition_energy<T: Real>(k: usize, length: T) -> Result<T> {
    check_order(k)?;
    if !(length > T::zero()) || !length.is_finite() {
        return Err(Error::domain(format!(
            "transition length must be positive, got {length}"
        )));
    }
    let c_k = T::of(derivative_energy(&hermite_profile(k)?, k).approx());
    Ok(c_k * length.powi(1 - 2 * k as i32))
}

/// Closed-form minimum of `T + weight·T^{1-2k}` over `T > 0`; returns
/// `(argmin, min)`.
pub fn length_energy_min<T: Real>(k: usize, weight: T) -> (T, T) {
    let two_k = T::of_usize(2 * k);
    let t = ((two_k - T::one()) * weight).powf(T::one() / two_k);
    (t, t + weight * t.powi(1 - 2 * k as i32))
}

/// The optimal profile with its constants.
#[derive(Clone, Debug)]
pub struct OptimalProfile<T> {
    pub k: usize,
    /// Profile on `[0, 1]`; the optimal transition on `[0, T*]` is
    /// `t ↦ unit_poly(t / T*)`.
    pub unit_poly: Polynomial<Rational>,
    pub c_k: Rational,
    pub t_star: T,
    pub m_k: T,
    unit_real: Polynomial<T>,
}

impl<T: Real> OptimalProfile<T> {
    pub fn new(k: usize) -> Result<Self> {
        let unit_poly = hermite_profile(k)?;
        let c_k = derivative_energy(&unit_poly, k);
        let two_k = T::of_usize(2 * k);
        let t_star = ((two_k - T::one()) * T::of(c_k.approx())).powf(T::one() / two_k);
        let m_k = t_star * two_k / (two_k - T::one());
        let unit_real = unit_poly.to_real();
        Ok(Self {
            k,
            unit_poly,
            c_k,
            t_star,
            m_k,
            unit_real,
        })
    }

    /// Profile on `[0, 1]` in floating point.
    pub fn unit_real(&self) -> &Polynomial<T> {
        &self.unit_real
    }

    /// `unit_poly(s)` for `s ∈ [0, 1]`, clamped to the plateau values outside.
    pub fn eval_unit(&self, s: T) -> T {
        if s <= T::zero() {
            T::zero()
        } else if s >= T::one() {
            T::one()
        } else {
            self.unit_real.eval(&s)
        }
    }

    /// `m_k·|z|^{1/k}`.
    pub fn jump_density(&self, z: T) -> T {
        self.m_k * z.abs().powf(T::one() / T::of_usize(self.k))
    }

    /// Optimal length for a jump of height `z`: `|z|^{1/k}·T*`.
    pub fn optimal_length(&self, z: T) -> T {
        self.t_star * z.abs().powf(T::one() / T::of_usize(self.k))
    }

    pub fn c_k_real(&self) -> T {
        T::of(self.c_k.approx())
    }
}

/// `m_k` together with the optimal profile and length.
pub fn m_const<T: Real>(k: usize) -> Result<OptimalProfile<T>> {
    OptimalProfile::new(k)
}

/// Amplitude `α` of the logarithmic term and gradient scale `κ`.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ScalingParams<T> {
    pub alpha: T,
    pub kappa: T,
}

impl<T: Real> ScalingParams<T> {
    pub fn new(alpha: T, kappa: T) -> Result<Self> {
        let p = Self { alpha, kappa };
        p.validate()?;
        Ok(p)
    }

    pub fn identity() -> Self {
        Self {
            alpha: T::one(),
            kappa: T::one(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: T| v > T::zero() && v.is_finite();
        if ok(self.alpha) && ok(self.kappa) {
            Ok(())
        } else {
            Err(Error::domain(format!(
                "scaling parameters must be positive and finite (alpha = {}, kappa = {})",
                self.alpha, self.kappa
            )))
        }
    }

    /// Weight `1/(ακ²)` on the derivative energy in the rescaled problem.
    pub fn derivative_weight(&self) -> T {
        T::one() / (self.alpha * self.kappa * self.kappa)
    }
}

/// Jump constant of the rescaled problem, `m_k·κ^{-1/k}·α^{-1/(2k)}`.
///
/// Also evaluates the weighted minimization of `T + c_k/(ακ²)·T^{1-2k}` and
/// panics if the two routes disagree beyond `1e-12` relative.
pub fn m_scaled<T: Real>(k: usize, p: &ScalingParams<T>) -> Result<T> {
    let (closed, weighted) = m_scaled_routes(k, p)?;
    assert!(
        ((closed - weighted) / closed).abs() <= T::of(1e-12),
        "scaled jump constant routes disagree: {closed} vs {weighted}"
    );
    Ok(closed)
}

/// `(closed form, weighted minimization)` for the rescaled jump constant.
pub fn m_scaled_routes<T: Real>(k: usize, p: &ScalingParams<T>) -> Result<(T, T)> {
    p.validate()?;
    let profile = OptimalProfile::<T>::new(k)?;
    let kk = T::of_usize(k);
    let closed = profile.m_k * p.kappa.powf(-T::one() / kk) * p.alpha.powf(-T::one() / (kk + kk));
    let (_, weighted) = length_energy_min(k, profile.c_k_real() * p.derivative_weight());
    Ok((closed, weighted))
}

/// Coefficient of `Σ|z|^{1/k}` in the limit of the rescaled logarithmic
/// energy: `α^{1-1/(2k)}·m_k`, equal to `α·κ^{1/k}·m_scaled`.
pub fn scaled_jump_coefficient<T: Real>(k: usize, p: &ScalingParams<T>) -> Result<T> {
    p.validate()?;
    let profile = OptimalProfile::<T>::new(k)?;
    let kk = T::of_usize(k);
    Ok(p.alpha.powf(T::one() - T::one() / (kk + kk)) * profile.m_k)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(n: i64) -> Rational {
        Rational::from_integer(n.into())
    }

    #[test]
    fn low_order_profiles() {
        assert_eq!(hermite_profile(1).unwrap(), Polynomial::new(vec![r(0), r(1)]));
        assert_eq!(
            hermite_profile(2).unwrap(),
            Polynomial::new(vec![r(0), r(0), r(3), r(-2)])
        );
        assert_eq!(
            hermite_profile(3).unwrap(),
            Polynomial::new(vec![r(0), r(0), r(0), r(10), r(-15), r(6)])
        );
    }

    #[test]
    fn order_out_of_range() {
        assert!(matches!(hermite_profile(0), Err(Error::Domain(_))));
        assert!(matches!(hermite_profile(13), Err(Error::Domain(_))));
        assert!(transition_energy(2, 0.0).is_err());
        assert!(transition_energy(2, -1.0).is_err());
    }

    #[test]
    fn transition_energy_examples() {
        assert_eq!(transition_energy(1, 1.0).unwrap(), 1.0);
        assert_eq!(transition_energy(2, 1.0).unwrap(), 12.0);
        assert_eq!(transition_energy(2, 2.0).unwrap(), 1.5);
    }

    #[test]
    fn constants_for_small_orders() {
        let p1 = m_const::<f64>(1).unwrap();
        assert_eq!(p1.c_k, r(1));
        assert!((p1.t_star - 1.0).abs() < 1e-15 && (p1.m_k - 2.0).abs() < 1e-15);

        let p2 = m_const::<f64>(2).unwrap();
        assert_eq!(p2.c_k, r(12));
        assert!((p2.t_star - 6f64.sqrt()).abs() < 1e-14);
        assert!((p2.m_k - 4.0 * 6f64.sqrt() / 3.0).abs() < 1e-14);
        assert!((p2.m_k - 3.265986).abs() < 1e-6);

        let p3 = m_const::<f64>(3).unwrap();
        assert_eq!(p3.c_k, r(720));
        assert!((p3.t_star - 3600f64.powf(1.0 / 6.0)).abs() < 1e-13);
        assert!((p3.t_star - 3.914868).abs() < 1e-6);
        assert!((p3.m_k - 4.697841).abs() < 1e-6);
    }

    #[test]
    fn generic_over_f32() {
        let p = m_const::<f32>(2).unwrap();
        assert!((p.m_k - 3.265986f32).abs() < 1e-5);
    }

    #[test]
    fn scaled_constant_examples() {
        let m2 = m_const::<f64>(2).unwrap().m_k;
        let at = |a: f64, q: f64| m_scaled(2, &ScalingParams::new(a, q).unwrap()).unwrap();
        assert!((at(1.0, 1.0) - m2).abs() < 1e-14);
        assert!((at(1.0, 2.0) - 2.309401).abs() < 1e-6);
        // m_2·2^{-1/4}
        assert!((at(2.0, 1.0) - 2.746356).abs() < 1e-6);
        assert!(ScalingParams::new(0.0, 1.0).is_err());
        assert!(ScalingParams::new(1.0, -2.0).is_err());
    }

    #[test]
    fn jump_coefficient_relation() {
        for (a, q) in [(1.0f64, 2.0f64), (2.0, 1.0), (0.5, 3.0)] {
            let p = ScalingParams::new(a, q).unwrap();
            let lhs = scaled_jump_coefficient(2, &p).unwrap();
            let rhs = a * q.sqrt() * m_scaled(2, &p).unwrap();
            assert!(((lhs - rhs) / rhs).abs() < 1e-14);
        }
    }
}
