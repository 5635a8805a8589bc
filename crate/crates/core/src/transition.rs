//! One-dimensional transition problems
//! `min { T + w·∫₀ᵀ |v^{(k)}|² : v(0) = 0, v(T) = z, endpoint conditions }`
//! solved by projected gradient over splines whose `k`-th derivative is
//! constant on each cell, followed by a search over the length `T`.
//!
//! The unknowns are the derivatives `v(0), …, v^{(k-1)}(0)` followed by the
//! cell values of `v^{(k)}`. The derivative energy of such a spline is
//! exactly `h·Σ w_j²`, and every endpoint derivative is a linear functional
//! with closed-form coefficients, so no difference stencils appear.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::optim::{minimize, ConstraintSet, Coordinates, DiscreteEnergy, End, Functional, Options};
use crate::profile::length_energy_min;
use crate::scalar::Real;

/// Coordinates of splines of order `k` on `n` uniform nodes of `[0, T]`.
#[derive(Clone, Copy, Debug)]
pub struct SplineCoordinates<T> {
    pub k: usize,
    pub n: usize,
    pub length: T,
}

impl<T: Real> SplineCoordinates<T> {
    pub fn new(k: usize, n: usize, length: T) -> Result<Self> {
        if k == 0 {
            return Err(Error::domain("spline order must be at least 1"));
        }
        if n < 2 {
            return Err(Error::domain(format!("spline needs at least 2 nodes, got {n}")));
        }
        if !(length > T::zero()) || !length.is_finite() {
            return Err(Error::domain(format!("length must be positive, got {length}")));
        }
        Ok(Self { k, n, length })
    }

    pub fn h(&self) -> T {
        self.length / T::of_usize(self.n - 1)
    }

    pub fn cells(&self) -> usize {
        self.n - 1
    }

    /// Coefficients of `v^{(order)}` at node `i`.
    fn derivative_at_node(&self, order: usize, i: usize) -> Vec<T> {
        let (k, h) = (self.k, self.h());
        let mut row = vec![T::zero(); self.k + self.cells()];
        let t = h * T::of_usize(i);
        let mut fact = T::one();
        for m in order..k {
            if m > order {
                fact = fact * T::of_usize(m - order);
            }
            row[m] = t.powi((m - order) as i32) / fact;
        }
        // cell j on [t_j, t_j + h] contributes ∫ (t - τ)^{p-1}/(p-1)! dτ with p = k - order
        let p = k - order;
        let p_fact: T = (1..=p).map(T::of_usize).fold(T::one(), |a, b| a * b);
        for j in 0..i {
            let a = T::of_usize(i - j);
            let b = T::of_usize(i - j - 1);
            // (a^p - b^p) = Σ a^q b^{p-1-q}, in units of h
            let diff: T = (0..p).map(|q| a.powi(q as i32) * b.powi((p - 1 - q) as i32)).sum();
            row[k + j] = diff * h.powi(p as i32) / p_fact;
        }
        row
    }

    /// Values at the nodes for the coordinate vector `x`.
    pub fn node_values(&self, x: &[T]) -> Vec<T> {
        self.node_derivatives(x, 0)
    }

    /// `v^{(order)}` at every node, by exact Taylor propagation cell by cell.
    pub fn node_derivatives(&self, x: &[T], order: usize) -> Vec<T> {
        let (k, h) = (self.k, self.h());
        let mut state: Vec<T> = x[..k].to_vec();
        let mut out = Vec::with_capacity(self.n);
        let at = |state: &[T]| if order < k { state[order] } else { T::zero() };
        out.push(at(&state));
        let mut powers = vec![T::one(); k + 1];
        let mut fact = T::one();
        for (p, slot) in powers.iter_mut().enumerate().skip(1) {
            fact = fact * T::of_usize(p);
            *slot = h.powi(p as i32) / fact;
        }
        for &w in &x[k..] {
            let mut next = vec![T::zero(); k];
            for (l, nl) in next.iter_mut().enumerate() {
                let mut v = T::zero();
                for m in l..k {
                    v = v + state[m] * powers[m - l];
                }
                *nl = v + w * powers[k - l];
            }
            state = next;
            out.push(at(&state));
        }
        out
    }

    /// Coordinates of the linear ramp from 0 to `z`.
    pub fn ramp(&self, z: T) -> Vec<T> {
        let mut x = vec![T::zero(); self.k + self.cells()];
        let slope = z / self.length;
        if self.k > 1 {
            x[1] = slope;
        } else {
            x[1..].iter_mut().for_each(|w| *w = slope);
        }
        x
    }
}

impl<T: Real> Coordinates<T> for SplineCoordinates<T> {
    fn dim(&self) -> usize {
        self.k + self.cells()
    }

    fn row(&self, f: &Functional) -> Result<Vec<T>> {
        match *f {
            Functional::Node(i) => {
                if i >= self.n {
                    return Err(Error::domain(format!("node {i} outside {} nodes", self.n)));
                }
                Ok(self.derivative_at_node(0, i))
            }
            Functional::Derivative { order, end } => {
                if order >= self.k {
                    return Err(Error::domain(format!(
                        "endpoint derivative of order {order} is not a constraint for order {}",
                        self.k
                    )));
                }
                Ok(match end {
                    End::Left => self.derivative_at_node(order, 0),
                    End::Right => self.derivative_at_node(order, self.n - 1),
                })
            }
            Functional::Increment => {
                let mut row = self.derivative_at_node(0, self.n - 1);
                row[0] = row[0] - T::one();
                Ok(row)
            }
        }
    }
}

/// `weight·h·Σ w_j²` on spline coordinates.
#[derive(Clone, Copy, Debug)]
pub struct SplineEnergy<T> {
    coords: SplineCoordinates<T>,
    weight: T,
}

impl<T: Real> SplineEnergy<T> {
    pub fn new(coords: SplineCoordinates<T>, weight: T) -> Self {
        Self { coords, weight }
    }
}

impl<T: Real> DiscreteEnergy<T> for SplineEnergy<T> {
    fn dim(&self) -> usize {
        self.coords.dim()
    }

    fn eval(&self, x: &[T], grad: &mut [T]) -> T {
        let k = self.coords.k;
        let c = self.weight * self.coords.h();
        let two_c = c + c;
        grad[..k].iter_mut().for_each(|g| *g = T::zero());
        let mut sum = T::zero();
        for (g, &w) in grad[k..].iter_mut().zip(&x[k..]) {
            sum = sum + w * w;
            *g = two_c * w;
        }
        c * sum
    }

    /// `h` on the cell values; on `v^{(ℓ)}(0)` the weight `T^{2ℓ+1-2k}`
    /// that gives it the units of the energy.
    fn metric(&self) -> Option<Vec<T>> {
        let (k, len) = (self.coords.k, self.coords.length);
        let mut d = vec![self.weight * self.coords.h(); self.dim()];
        for (l, v) in d[..k].iter_mut().enumerate() {
            *v = self.weight * len.powi(2 * l as i32 + 1 - 2 * k as i32);
        }
        Some(d)
    }

    fn change(&self, from: &[T], _: T, to: &[T], _: T) -> T {
        let k = self.coords.k;
        let sum: T = from[k..].iter().zip(&to[k..]).map(|(&a, &b)| (b - a) * (b + a)).sum();
        self.weight * self.coords.h() * sum
    }
}

/// Grid and solver settings for transition problems.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Resolution<T> {
    pub nodes_per_unit: usize,
    pub min_nodes: usize,
    pub opts: Options<T>,
}

impl<T: Real> Default for Resolution<T> {
    fn default() -> Self {
        Self {
            nodes_per_unit: 2001,
            min_nodes: 101,
            opts: Options {
                tol: T::of(1e-8),
                max_iter: 20_000,
            },
        }
    }
}

impl<T: Real> Resolution<T> {
    pub fn nodes_for(&self, length: T) -> usize {
        let per = (T::of_usize(self.nodes_per_unit) * length)
            .ceil()
            .to_usize()
            .unwrap_or(usize::MAX - 1);
        self.min_nodes.max(per + 1)
    }
}

/// A transition of height `z` with extra endpoint conditions.
#[derive(Clone, Debug)]
pub struct TransitionProblem<T> {
    pub k: usize,
    pub z: T,
    /// Derivative pins and bounds of orders `1..k`; the value conditions
    /// `v(0) = 0`, `v(T) = z` are added automatically.
    pub conditions: ConstraintSet<T>,
    /// Weight on the derivative energy.
    pub weight: T,
}

#[derive(Clone, Debug)]
pub struct TransitionSolution<T> {
    pub length: T,
    /// `weight·∫|v^{(k)}|²` at the discrete minimizer.
    pub energy: T,
    /// `length + energy`.
    pub value: T,
    pub converged: bool,
    pub iterations: usize,
    /// Scaled projected-gradient norm at exit.
    pub residual: T,
    pub coords: SplineCoordinates<T>,
    pub x: Vec<T>,
}

#[derive(Clone, Debug)]
pub struct LengthSearch<T> {
    pub best: TransitionSolution<T>,
    /// `(T, value, converged)` for every length evaluated, in order.
    pub samples: Vec<(T, T, bool)>,
    pub all_converged: bool,
}

/// Geometric search grid: `points` lengths on `[lo, hi]` and `rounds` local
/// refinements, each dividing the log-spacing by `factor`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LengthGrid<T> {
    pub lo: T,
    pub hi: T,
    pub points: usize,
    pub rounds: usize,
    pub factor: usize,
}

impl<T: Real> Default for LengthGrid<T> {
    fn default() -> Self {
        Self {
            lo: T::of(1e-2),
            hi: T::of(1e2),
            points: 49,
            rounds: 2,
            factor: 5,
        }
    }
}

impl<T: Real> TransitionProblem<T> {
    /// Clamped problem: all derivatives of orders `1..k` vanish at both ends.
    pub fn clamped(k: usize, z: T) -> Self {
        Self {
            k,
            z,
            conditions: ConstraintSet::new().clamp_derivatives(1..k),
            weight: T::one(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::domain("derivative order must be at least 1"));
        }
        if self.z == T::zero() || !self.z.is_finite() {
            return Err(Error::domain("transition height must be finite and nonzero"));
        }
        if !(self.weight > T::zero()) {
            return Err(Error::domain("derivative weight must be positive"));
        }
        Ok(())
    }

    /// True when the rescaled optimal clamped profile satisfies every
    /// condition, which gives the bound `value ≤ min_T T + w c_k z² T^{1-2k}`.
    fn clamped_profile_feasible(&self) -> bool {
        let zero_pins = self
            .conditions
            .pins
            .iter()
            .all(|(f, v)| matches!(f, Functional::Derivative { order, .. } if *order >= 1) && *v == T::zero());
        let derivative_bounds = self
            .conditions
            .bounds
            .iter()
            .all(|(f, _)| matches!(f, Functional::Derivative { order, .. } if *order >= 1));
        zero_pins && derivative_bounds
    }

    /// Upper bound on the optimal value from the clamped profile, if it is
    /// feasible for these conditions.
    pub fn clamped_upper_bound(&self, c_k: T) -> Option<T> {
        self.clamped_profile_feasible()
            .then(|| length_energy_min(self.k, self.weight * c_k * self.z * self.z).1)
    }

    /// Minimizes the derivative energy at fixed length.
    pub fn solve_at(&self, length: T, res: &Resolution<T>) -> Result<TransitionSolution<T>> {
        self.validate()?;
        let coords = SplineCoordinates::new(self.k, res.nodes_for(length), length)?;
        let mut set = self.conditions.clone();
        set.pins.push((
            Functional::Derivative {
                order: 0,
                end: End::Left,
            },
            T::zero(),
        ));
        set.pins.push((
            Functional::Derivative {
                order: 0,
                end: End::Right,
            },
            self.z,
        ));
        let lc = set.compile(&coords)?;
        let energy = SplineEnergy::new(coords, self.weight);
        let min = minimize(&energy, lc, coords.ramp(self.z), res.opts)?;
        Ok(TransitionSolution {
            length,
            energy: min.value,
            value: length + min.value,
            converged: min.converged,
            iterations: min.iterations,
            residual: min.residual,
            coords,
            x: min.x,
        })
    }

    /// Minimizes `T + energy(T)` over a geometric grid with local refinement.
    /// Lengths above a known upper bound on the optimum are skipped, since
    /// the value there exceeds the length itself.
    pub fn search(&self, grid: &LengthGrid<T>, res: &Resolution<T>, upper: Option<T>) -> Result<LengthSearch<T>> {
        self.validate()?;
        if grid.points < 2 || !(grid.hi > grid.lo) || !(grid.lo > T::zero()) || grid.factor < 2 {
            return Err(Error::domain(
                "length grid needs at least two points on a positive interval",
            ));
        }
        let log_step = (grid.hi / grid.lo).ln() / T::of_usize(grid.points - 1);
        let mut lengths: Vec<T> = (0..grid.points)
            .map(|i| grid.lo * (log_step * T::of_usize(i)).exp())
            .collect();
        let keep = |t: &T| upper.is_none_or(|u| *t <= u * T::of(1.05));
        let mut samples: Vec<(T, T, bool)> = Vec::new();
        let mut best: Option<TransitionSolution<T>> = None;
        let mut step = log_step;
        for round in 0..=grid.rounds {
            let candidates: Vec<T> = lengths.iter().copied().filter(keep).collect();
            let solved: Vec<Result<TransitionSolution<T>>> =
                candidates.par_iter().map(|&t| self.solve_at(t, res)).collect();
            for sol in solved {
                let sol = sol?;
                samples.push((sol.length, sol.value, sol.converged));
                if best.as_ref().is_none_or(|b| sol.value < b.value) {
                    best = Some(sol);
                }
            }
            let Some(center) = best.as_ref().map(|b| b.length) else {
                return Err(Error::domain("no admissible length in the search grid"));
            };
            if round == grid.rounds {
                break;
            }
            let fine = step / T::of_usize(grid.factor);
            let f = grid.factor as i64;
            lengths = (-f..=f)
                .filter(|&j| j != 0)
                .map(|j| center * (fine * T::of(j as f64)).exp())
                .collect();
            step = fine;
        }
        let best = best.expect("at least one sample");
        let all_converged = samples.iter().all(|s| s.2);
        Ok(LengthSearch {
            best,
            samples,
            all_converged,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profile::OptimalProfile;

    #[test]
    fn node_rows_match_propagation() {
        let c = SplineCoordinates::<f64>::new(3, 9, 2.0).unwrap();
        let x: Vec<f64> = (0..c.dim()).map(|i| ((i * 5) % 7) as f64 - 3.0).collect();
        let vals = c.node_values(&x);
        let d1 = c.node_derivatives(&x, 1);
        for i in [0, 3, 8] {
            let r = c.row(&Functional::Node(i)).unwrap();
            let v: f64 = r.iter().zip(&x).map(|(a, b)| a * b).sum();
            assert!((v - vals[i]).abs() < 1e-12 * (1.0 + v.abs()));
        }
        let r = c
            .row(&Functional::Derivative {
                order: 1,
                end: End::Right,
            })
            .unwrap();
        let v: f64 = r.iter().zip(&x).map(|(a, b)| a * b).sum();
        assert!((v - d1[8]).abs() < 1e-12 * (1.0 + v.abs()));
        assert!(c
            .row(&Functional::Derivative {
                order: 3,
                end: End::Left
            })
            .is_err());
    }

    #[test]
    fn cubic_is_represented_exactly() {
        // 3t² - 2t³ on [0, 1]: third derivative is constant -12
        let c = SplineCoordinates::<f64>::new(3, 11, 1.0).unwrap();
        let mut x = vec![-12.0; c.dim()];
        x[0] = 0.0;
        x[1] = 0.0;
        x[2] = 6.0;
        for (i, v) in c.node_values(&x).iter().enumerate() {
            let t = i as f64 / 10.0;
            assert!((v - (3.0 * t * t - 2.0 * t * t * t)).abs() < 1e-13);
        }
    }

    #[test]
    fn clamped_unit_length_matches_exact_energy() {
        let p = TransitionProblem::<f64>::clamped(2, 1.0);
        let res = Resolution::default();
        let sol = p.solve_at(1.0, &res).unwrap();
        let n = sol.coords.n;
        assert!(sol.converged);
        assert!((sol.energy - 12.0).abs() < 1e-3 * 12.0);
        let v = sol.coords.node_values(&sol.x);
        let worst = v
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let s = i as f64 / (n - 1) as f64;
                (v - (3.0 * s * s - 2.0 * s * s * s)).abs()
            })
            .fold(0.0, f64::max);
        assert!(worst < 1e-3, "sup error {worst}");
    }

    #[test]
    fn relaxed_bounds_lower_the_energy() {
        let res = Resolution::default();
        let clamped = TransitionProblem::clamped(2, 1.0).solve_at(1.0, &res).unwrap();
        let relaxed = TransitionProblem {
            k: 2,
            z: 1.0,
            conditions: ConstraintSet::new().bound_derivatives([1], 1.0),
            weight: 1.0,
        }
        .solve_at(1.0, &res)
        .unwrap();
        assert!(relaxed.converged);
        assert!(relaxed.energy <= clamped.energy);
        // the bounds are active: the free optimum (affine) has slope 1 = bound
        assert!(relaxed.energy < 1e-6);
    }

    #[test]
    fn fixed_length_oracle_for_low_orders() {
        for k in 1..=4 {
            let prof = OptimalProfile::<f64>::new(k).unwrap();
            let res = Resolution {
                nodes_per_unit: 4001,
                ..Resolution::default()
            };
            let sol = TransitionProblem::clamped(k, 1.0).solve_at(prof.t_star, &res).unwrap();
            let exact = prof.c_k_real() * prof.t_star.powi(1 - 2 * k as i32);
            assert!(sol.converged, "k = {k}");
            assert!(
                ((sol.energy - exact) / exact).abs() < 1e-3,
                "k = {k}: {} vs {exact}",
                sol.energy
            );
        }
    }
}
