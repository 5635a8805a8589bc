//! Jump-energy densities obtained from constrained transition problems, and
//! the bounds relating them to `m_k|z|^{1/k}`.

use std::collections::HashMap;
use std::sync::Mutex;

use crate::error::{Error, Result};
use crate::optim::ConstraintSet;
use crate::profile::OptimalProfile;
use crate::scalar::Real;
use crate::schedule::EpsSchedule;
use crate::transition::{LengthGrid, Resolution, TransitionProblem, TransitionSolution};

/// `max{ℓ : 2ℓ < k+1}`, i.e. `⌊(k-1)/2⌋`.
pub fn ell_of_k(k: usize) -> Result<usize> {
    if k < 2 {
        return Err(Error::domain(format!("ell(k) needs k >= 2, got {k}")));
    }
    Ok((0..=k).take_while(|&l| 2 * l < k + 1).last().unwrap_or(0))
}

/// Derivative bound level `1/N`; `Unbounded` stands for `N = ∞`, where the
/// bounds become the clamped conditions `v^{(ℓ)} = 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Level<T> {
    Finite(T),
    Unbounded,
}

impl<T: Real> Level<T> {
    pub fn finite(n: T) -> Result<Self> {
        if n > T::zero() && n.is_finite() {
            Ok(Self::Finite(n))
        } else {
            Err(Error::domain(format!("bound level N = {n} must be positive")))
        }
    }

    /// `1/N`, or 0 at infinity.
    pub fn bound(&self) -> T {
        match *self {
            Self::Finite(n) => T::one() / n,
            Self::Unbounded => T::zero(),
        }
    }

    fn scaled(&self, theta: T) -> Self {
        match *self {
            Self::Finite(n) => Self::Finite(theta * n),
            Self::Unbounded => Self::Unbounded,
        }
    }

    fn key(&self) -> u64 {
        match *self {
            Self::Finite(n) => n.to_f64().unwrap_or(f64::NAN).to_bits(),
            Self::Unbounded => u64::MAX,
        }
    }
}

/// A density value with its optimal length and solver status.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DensityValue<T> {
    pub value: T,
    pub length: T,
    /// False if any length in the search failed to converge; the value is
    /// still an upper bound for the discrete problem.
    pub converged: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum Kind {
    Phi,
    MOfN,
    PhiEps,
}

/// Problem kind, order and the bit patterns of its real parameters.
type CacheKey = (Kind, usize, u64, u64, u64);

/// Search and grid settings plus a cache of solved densities.
#[derive(Debug)]
pub struct DensitySolver<T> {
    pub grid: LengthGrid<T>,
    pub resolution: Resolution<T>,
    cache: Mutex<HashMap<CacheKey, DensityValue<T>>>,
}

impl<T: Real> Default for DensitySolver<T> {
    fn default() -> Self {
        Self::new(LengthGrid::default(), Resolution::default())
    }
}

impl<T: Real> DensitySolver<T> {
    pub fn new(grid: LengthGrid<T>, resolution: Resolution<T>) -> Self {
        Self {
            grid,
            resolution,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn cached(&self) -> usize {
        self.cache.lock().expect("cache lock").len()
    }

    fn solve(&self, key: CacheKey, problem: TransitionProblem<T>) -> Result<DensityValue<T>> {
        if let Some(v) = self.cache.lock().expect("cache lock").get(&key) {
            return Ok(*v);
        }
        let prof = OptimalProfile::<T>::new(problem.k)?;
        let upper = problem.clamped_upper_bound(prof.c_k_real());
        let search = problem.search(&self.grid, &self.resolution, upper)?;
        let v = DensityValue {
            value: search.best.value,
            length: search.best.length,
            converged: search.all_converged,
        };
        self.cache.lock().expect("cache lock").insert(key, v);
        Ok(v)
    }

    fn bounded(k: usize, z: T, orders: std::ops::RangeInclusive<usize>, level: Level<T>) -> TransitionProblem<T> {
        TransitionProblem {
            k,
            z,
            conditions: ConstraintSet::new().bound_derivatives(orders, level.bound()),
            weight: T::one(),
        }
    }

    /// `min T + ∫|v^{(k)}|²` with `v(T) - v(0) = z` and all endpoint
    /// derivatives of orders `1..k-1` bounded by `1/N`.
    pub fn phi(&self, z: T, k: usize, level: Level<T>) -> Result<DensityValue<T>> {
        check_z(z)?;
        let p = Self::bounded(k, z, 1..=k - 1, level);
        self.solve((Kind::Phi, k, level.key(), bits(z), 0), p)
    }

    /// `phi` at `z = 1` with bounds only on orders `1..ell(k)`.
    pub fn m_of_n(&self, k: usize, level: Level<T>) -> Result<DensityValue<T>> {
        let ell = ell_of_k(k)?;
        let p = Self::bounded(k, T::one(), 1..=ell, level);
        self.solve((Kind::MOfN, k, level.key(), 0, 0), p)
    }

    /// `min{m(N)·θ^{1/k-1}|z|, m(θN)·|z|^{1/k}}`, with `m(θN)` evaluated at
    /// the real bound `1/(θN)`.
    pub fn psi(&self, z: T, k: usize, theta: T, level: Level<T>) -> Result<DensityValue<T>> {
        if !(theta > T::zero() && theta < T::one()) {
            return Err(Error::domain(format!("theta = {theta} outside (0, 1)")));
        }
        let a = self.m_of_n(k, level)?;
        let b = self.m_of_n(k, level.scaled(theta))?;
        let inv_k = T::one() / T::of_usize(k);
        let linear = a.value * theta.powf(inv_k - T::one()) * z.abs();
        let root = b.value * z.abs().powf(inv_k);
        let (value, length) = if linear <= root {
            (linear, a.length)
        } else {
            (root, b.length)
        };
        Ok(DensityValue {
            value,
            length,
            converged: a.converged && b.converged,
        })
    }

    /// First derivative bounded by `c_ε` at both ends, orders `2..ell(k)`
    /// by `1/N`.
    pub fn phi_eps(&self, z: T, s: &EpsSchedule<T>, k: usize, level: Level<T>) -> Result<DensityValue<T>> {
        check_z(z)?;
        let ell = ell_of_k(k)?;
        let mut conditions = ConstraintSet::new().bound_derivatives([1], s.c_eps);
        if ell >= 2 {
            conditions = conditions.bound_derivatives(2..=ell, level.bound());
        }
        let p = TransitionProblem {
            k,
            z,
            conditions,
            weight: T::one(),
        };
        self.solve((Kind::PhiEps, k, level.key(), bits(z), bits(s.c_eps)), p)
    }

    /// Minimum of `∫|v^{(k)}|²` for the `phi` constraints at a forced length.
    pub fn forced_length(&self, z: T, k: usize, level: Level<T>, length: T) -> Result<TransitionSolution<T>> {
        check_z(z)?;
        Self::bounded(k, z, 1..=k - 1, level).solve_at(length, &self.resolution)
    }
}

fn check_z<T: Real>(z: T) -> Result<()> {
    if z == T::zero() || !z.is_finite() {
        Err(Error::domain("jump height must be finite and nonzero"))
    } else {
        Ok(())
    }
}

fn bits<T: Real>(v: T) -> u64 {
    v.to_f64().unwrap_or(f64::NAN).to_bits()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick() -> DensitySolver<f64> {
        DensitySolver::new(
            LengthGrid::default(),
            Resolution {
                nodes_per_unit: 401,
                ..Resolution::default()
            },
        )
    }

    #[test]
    fn ell_values() {
        assert_eq!(ell_of_k(2).unwrap(), 1);
        assert_eq!(ell_of_k(3).unwrap(), 1);
        assert_eq!(ell_of_k(4).unwrap(), 2);
        assert_eq!(ell_of_k(7).unwrap(), 3);
        assert!(ell_of_k(1).is_err());
    }

    #[test]
    fn unbounded_level_recovers_the_constant() {
        let s = quick();
        let m2 = OptimalProfile::<f64>::new(2).unwrap().m_k;
        let v = s.phi(1.0, 2, Level::Unbounded).unwrap();
        assert!(v.converged);
        assert!(((v.value - m2) / m2).abs() < 1e-3, "{} vs {m2}", v.value);
        let m = s.m_of_n(2, Level::Unbounded).unwrap();
        assert!(((m.value - m2) / m2).abs() < 1e-3);
    }

    #[test]
    fn finite_levels_stay_below_the_constant() {
        let s = quick();
        let m2 = OptimalProfile::<f64>::new(2).unwrap().m_k;
        let one = s.phi(1.0, 2, Level::Finite(1.0)).unwrap().value;
        let four = s.phi(1.0, 2, Level::Finite(4.0)).unwrap().value;
        assert!(one > 0.0 && one <= m2 + 1e-3);
        assert!(four >= one - 1e-3);
        let small = s.phi(0.25, 2, Level::Finite(8.0)).unwrap().value;
        assert!(small <= m2 * 0.5 + 1e-3);
    }

    #[test]
    fn psi_branches() {
        let s = quick();
        let lv = Level::Finite(8.0);
        let big = s.psi(10.0, 2, 0.5, lv).unwrap().value;
        let root = s.m_of_n(2, Level::Finite(4.0)).unwrap().value * 10f64.sqrt();
        assert!((big - root).abs() < 1e-12);
        let tiny = s.psi(1e-4, 2, 0.5, lv).unwrap().value;
        let linear = s.m_of_n(2, lv).unwrap().value * 0.5f64.powf(-0.5) * 1e-4;
        assert!((tiny - linear).abs() < 1e-15);
        assert!(s.psi(1.0, 2, 1.5, lv).is_err());
    }

    #[test]
    fn negation_symmetry_and_cache() {
        let s = quick();
        let a = s.phi(1.0, 2, Level::Finite(2.0)).unwrap().value;
        let b = s.phi(-1.0, 2, Level::Finite(2.0)).unwrap().value;
        assert!((a - b).abs() < 1e-6);
        let before = s.cached();
        s.phi(1.0, 2, Level::Finite(2.0)).unwrap();
        assert_eq!(s.cached(), before);
    }

    #[test]
    fn shrinking_length_diverges() {
        let s = quick();
        let at = |n: f64| s.forced_length(1.0, 2, Level::Finite(1.0), 1.0 / n).unwrap().energy;
        assert!(at(64.0) >= 10.0 * at(8.0));
    }
}
