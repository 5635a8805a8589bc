//! Discrete energies on uniform grids and the limit functionals on
//! piecewise-smooth signals.
//!
//! Every discrete energy has the form
//! `h·Σ_cells f(d1_i) + ε^{2k-1}·h·Σ_windows (dk_j)²`
//! for a slope density `f`; the variants differ only in `f` and, for the
//! threshold energy, in restricting both sums to a sub-interval.

use crate::error::{Error, Result};
use crate::grid::{d1, dk, dk_adjoint, CompositeSignal, Grid1D, Signal};
use crate::optim::{Band, DiscreteEnergy, SecondOrder};
use crate::profile::{m_const, scaled_jump_coefficient, ScalingParams};
use crate::sbv::SbvSignal;
use crate::scalar::Real;
use crate::schedule::EpsSchedule;

/// Integrand acting on first differences.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SlopeDensity<T> {
    /// `log(1 + a·d²)/a`.
    Log { a: T },
    /// `min{q·d², cap}`.
    Truncated { q: T, cap: T },
    /// `scale·log(1 + d²)`.
    SaturatedLog { scale: T },
    /// `(w/a)·log(1 + b·a·d²)`.
    WeightedLog { w: T, a: T, b: T },
}

impl<T: Real> SlopeDensity<T> {
    pub fn value(&self, d: T) -> T {
        let d2 = d * d;
        match *self {
            Self::Log { a } => (a * d2).ln_1p() / a,
            Self::Truncated { q, cap } => (q * d2).min(cap),
            Self::SaturatedLog { scale } => scale * d2.ln_1p(),
            Self::WeightedLog { w, a, b } => w * (b * a * d2).ln_1p() / a,
        }
    }

    /// Derivative in `d`; zero on the flat branch of the truncation.
    pub fn slope(&self, d: T) -> T {
        let two = T::of(2.0);
        let d2 = d * d;
        match *self {
            Self::Log { a } => two * d / (T::one() + a * d2),
            Self::Truncated { q, cap } => {
                if q * d2 < cap {
                    two * q * d
                } else {
                    T::zero()
                }
            }
            Self::SaturatedLog { scale } => scale * two * d / (T::one() + d2),
            Self::WeightedLog { w, a, b } => w * b * two * d / (T::one() + b * a * d2),
        }
    }

    /// Second derivative in `d`; the kink of the truncation counts as flat.
    pub fn curvature(&self, d: T) -> T {
        let two = T::of(2.0);
        let d2 = d * d;
        let bend = |c: T| {
            let q = T::one() + c * d2;
            two * (T::one() - c * d2) / (q * q)
        };
        match *self {
            Self::Log { a } => bend(a),
            Self::Truncated { q, cap } => {
                if q * d2 < cap {
                    two * q
                } else {
                    T::zero()
                }
            }
            Self::SaturatedLog { scale } => scale * bend(T::one()),
            Self::WeightedLog { w, a, b } => w * b * bend(b * a),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct EnergyParts<T> {
    /// `h·Σ f(d1)`.
    pub bulk: T,
    /// `ε^{2k-1}·h·Σ (dk)²`.
    pub penalty: T,
}

impl<T: Real> EnergyParts<T> {
    pub fn total(&self) -> T {
        self.bulk + self.penalty
    }
}

/// A discretized functional: slope density, derivative order `k` and the
/// weight of the `k`-th derivative penalty.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Energy<T> {
    density: SlopeDensity<T>,
    k: usize,
    weight: T,
    window: Option<(T, T)>,
}

fn check_k(k: usize) -> Result<()> {
    if k == 0 {
        Err(Error::domain("derivative order k must be at least 1"))
    } else {
        Ok(())
    }
}

fn check_eps<T: Real>(eps: T) -> Result<()> {
    if eps > T::zero() && eps < T::one() {
        Ok(())
    } else {
        Err(Error::domain(format!("eps = {eps} outside (0, 1)")))
    }
}

fn penalty_weight<T: Real>(eps: T, k: usize) -> T {
    eps.powi(2 * k as i32 - 1)
}

impl<T: Real> Energy<T> {
    /// Logarithmic energy with coefficient `ε|log ε|`.
    pub fn perona_malik(s: &EpsSchedule<T>, k: usize) -> Result<Self> {
        check_k(k)?;
        Ok(Self {
            density: SlopeDensity::Log { a: s.eps_log() },
            k,
            weight: penalty_weight(s.eps, k),
            window: None,
        })
    }

    /// `min{|u'|², 1/ε}` plus the penalty.
    pub fn truncated_quadratic(eps: T, k: usize) -> Result<Self> {
        check_k(k)?;
        check_eps(eps)?;
        Ok(Self {
            density: SlopeDensity::Truncated {
                q: T::one(),
                cap: T::one() / eps,
            },
            k,
            weight: penalty_weight(eps, k),
            window: None,
        })
    }

    /// `min{ε^{1-2p}|u'|², 1/ε}` plus the penalty, restricted to `sub` when
    /// given: only cells and windows whose nodes all lie in `sub` count.
    pub fn threshold_quadratic(s: &EpsSchedule<T>, k: usize, sub: Option<(T, T)>) -> Result<Self> {
        check_k(k)?;
        if let Some((a, b)) = sub {
            if !(b > a) {
                return Err(Error::domain(format!("empty sub-interval ({a}, {b})")));
            }
        }
        Ok(Self {
            density: SlopeDensity::Truncated {
                q: s.quadratic_coefficient(),
                cap: T::one() / s.eps,
            },
            k,
            weight: penalty_weight(s.eps, k),
            window: sub,
        })
    }

    /// `log(1+|u'|²)/(2ε|log ε|)` plus the penalty.
    pub fn surface_scaled(eps: T, k: usize) -> Result<Self> {
        check_k(k)?;
        check_eps(eps)?;
        let el = -eps * eps.ln();
        Ok(Self {
            density: SlopeDensity::SaturatedLog {
                scale: T::one() / (el + el),
            },
            k,
            weight: penalty_weight(eps, k),
            window: None,
        })
    }

    /// `(α/(ε|log ε|))·log(1 + cκ²ε|log ε||u'|²)` plus the unweighted penalty.
    pub fn scaled_perona_malik(s: &EpsSchedule<T>, k: usize, p: &ScalingParams<T>, c: T) -> Result<Self> {
        check_k(k)?;
        p.validate()?;
        if !(c > T::zero()) {
            return Err(Error::domain(format!("log coefficient c = {c} must be positive")));
        }
        Ok(Self {
            density: SlopeDensity::WeightedLog {
                w: p.alpha,
                a: s.eps_log(),
                b: c * p.kappa * p.kappa,
            },
            k,
            weight: penalty_weight(s.eps, k),
            window: None,
        })
    }

    /// Energy with an explicit density and penalty weight.
    pub fn custom(density: SlopeDensity<T>, k: usize, weight: T) -> Result<Self> {
        check_k(k)?;
        Ok(Self {
            density,
            k,
            weight,
            window: None,
        })
    }

    pub fn density(&self) -> &SlopeDensity<T> {
        &self.density
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn penalty_weight(&self) -> T {
        self.weight
    }

    /// Index ranges of cells and windows inside the sub-interval.
    fn ranges(&self, grid: &Grid1D<T>) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        let n = grid.n();
        let windows = n.saturating_sub(self.k);
        let Some((a, b)) = self.window else {
            return (0..n - 1, 0..windows);
        };
        let tol = grid.h() * T::of(1e-9);
        let first = (0..n).find(|&i| grid.node(i) >= a - tol).unwrap_or(n);
        let last = (0..n).rev().find(|&i| grid.node(i) <= b + tol);
        match last {
            Some(last) if last > first => {
                let cells = first..last;
                let win_end = (last + 1).saturating_sub(self.k).max(first);
                (cells, first..win_end)
            }
            _ => (0..0, 0..0),
        }
    }

    pub fn parts(&self, u: &Signal<T>) -> Result<EnergyParts<T>> {
        let h = u.grid().h();
        let slopes = d1(u.values(), h);
        let high = dk(u.values(), h, self.k)?;
        let (cells, windows) = self.ranges(u.grid());
        let bulk: T = slopes[cells].iter().map(|&d| self.density.value(d)).sum::<T>() * h;
        let penalty: T = high[windows].iter().map(|&d| d * d).sum::<T>() * h * self.weight;
        Ok(EnergyParts { bulk, penalty })
    }

    pub fn value(&self, u: &Signal<T>) -> Result<T> {
        Ok(self.parts(u)?.total())
    }

    /// Value and gradient with respect to the nodal values.
    pub fn value_grad(&self, u: &Signal<T>) -> Result<(T, Vec<T>)> {
        let mut grad = vec![T::zero(); u.len()];
        let v = self.eval_into(u.grid(), u.values(), &mut grad)?;
        Ok((v, grad))
    }

    fn eval_into(&self, grid: &Grid1D<T>, x: &[T], grad: &mut [T]) -> Result<T> {
        let h = grid.h();
        let slopes = d1(x, h);
        let high = dk(x, h, self.k)?;
        let (cells, windows) = self.ranges(grid);
        grad.iter_mut().for_each(|g| *g = T::zero());

        let mut bulk = T::zero();
        for i in cells {
            let d = slopes[i];
            bulk = bulk + self.density.value(d);
            let s = self.density.slope(d);
            grad[i] = grad[i] - s;
            grad[i + 1] = grad[i + 1] + s;
        }

        let mut coeff = vec![T::zero(); high.len()];
        let mut penalty = T::zero();
        let scale = (T::of(2.0) * h * self.weight) / h.powi(self.k as i32);
        for j in windows {
            penalty = penalty + high[j] * high[j];
            coeff[j] = scale * high[j];
        }
        for (g, a) in grad.iter_mut().zip(dk_adjoint(&coeff, self.k)) {
            *g = *g + a;
        }
        Ok(bulk * h + penalty * h * self.weight)
    }

    /// Banded Hessian with respect to the nodal values.
    fn hessian_into(&self, grid: &Grid1D<T>, x: &[T]) -> Band<T> {
        let h = grid.h();
        let n = x.len();
        let mut band = Band::zeros(n, self.k.max(1));
        let (cells, windows) = self.ranges(grid);
        for i in cells {
            let c = self.density.curvature((x[i + 1] - x[i]) / h) / h;
            band.add(i, i, c);
            band.add(i + 1, i + 1, c);
            band.add(i, i + 1, -c);
        }
        let stencil = binomial_stencil::<T>(self.k);
        let scale = (T::of(2.0) * h * self.weight) / h.powi(2 * self.k as i32);
        for j in windows {
            for (a, &ca) in stencil.iter().enumerate() {
                for (b, &cb) in stencil.iter().enumerate().skip(a) {
                    band.add(j + a, j + b, scale * ca * cb);
                }
            }
        }
        band
    }

    /// Energy of a piecewise-uniform signal. Cells are summed piece by piece;
    /// penalty windows that would straddle a junction are left out.
    pub fn parts_composite(&self, u: &CompositeSignal<T>) -> Result<EnergyParts<T>> {
        let mut acc = EnergyParts::default();
        for piece in u.pieces() {
            if piece.len() <= self.k {
                // too short for a penalty window; still count its cells
                let h = piece.grid().h();
                let bulk: T = d1(piece.values(), h).iter().map(|&d| self.density.value(d)).sum();
                acc.bulk = acc.bulk + bulk * h;
                continue;
            }
            let p = self.parts(piece)?;
            acc.bulk = acc.bulk + p.bulk;
            acc.penalty = acc.penalty + p.penalty;
        }
        Ok(acc)
    }

    pub fn value_composite(&self, u: &CompositeSignal<T>) -> Result<T> {
        Ok(self.parts_composite(u)?.total())
    }

    /// The energy as a function of the nodal values on `grid`.
    pub fn on_grid(self, grid: Grid1D<T>) -> Result<GridEnergy<T>> {
        if grid.n() <= self.k {
            return Err(Error::domain(format!(
                "grid of {} nodes too coarse for order {}",
                grid.n(),
                self.k
            )));
        }
        Ok(GridEnergy { energy: self, grid })
    }
}

/// Coefficients of `Δ^k`: `(-1)^{k-m}·C(k, m)`.
fn binomial_stencil<T: Real>(k: usize) -> Vec<T> {
    let mut c = vec![T::one()];
    for _ in 0..k {
        let mut next = vec![T::zero(); c.len() + 1];
        for (m, &v) in c.iter().enumerate() {
            next[m] = next[m] - v;
            next[m + 1] = next[m + 1] + v;
        }
        c = next;
    }
    c
}

/// An [`Energy`] bound to a grid, usable by the minimizer.
#[derive(Clone, Debug)]
pub struct GridEnergy<T> {
    energy: Energy<T>,
    grid: Grid1D<T>,
}

impl<T: Real> GridEnergy<T> {
    pub fn grid(&self) -> &Grid1D<T> {
        &self.grid
    }

    pub fn energy(&self) -> &Energy<T> {
        &self.energy
    }
}

impl<T: Real> DiscreteEnergy<T> for GridEnergy<T> {
    fn dim(&self) -> usize {
        self.grid.n()
    }

    fn eval(&self, x: &[T], grad: &mut [T]) -> T {
        self.energy
            .eval_into(&self.grid, x, grad)
            .expect("grid size checked at construction")
    }
}

impl<T: Real> SecondOrder<T> for GridEnergy<T> {
    fn hessian(&self, x: &[T]) -> Band<T> {
        self.energy.hessian_into(&self.grid, x)
    }
}

/// A grid energy plus the fidelity term `λ·h·Σ(u_i - g_i)²`.
#[derive(Clone, Debug)]
pub struct WithFidelity<T> {
    inner: GridEnergy<T>,
    data: Vec<T>,
    lambda: T,
}

impl<T: Real> WithFidelity<T> {
    pub fn new(inner: GridEnergy<T>, data: Vec<T>, lambda: T) -> Result<Self> {
        if data.len() != inner.grid.n() {
            return Err(Error::domain(format!(
                "data has {} samples for a grid of {} nodes",
                data.len(),
                inner.grid.n()
            )));
        }
        if !(lambda > T::zero() && lambda.is_finite()) {
            return Err(Error::domain(format!("fidelity weight {lambda} must be positive")));
        }
        Ok(Self { inner, data, lambda })
    }

    pub fn inner(&self) -> &GridEnergy<T> {
        &self.inner
    }

    pub fn fidelity(&self, x: &[T]) -> T {
        let h = self.inner.grid.h();
        self.lambda * h * x.iter().zip(&self.data).map(|(&u, &g)| (u - g) * (u - g)).sum::<T>()
    }
}

impl<T: Real> DiscreteEnergy<T> for WithFidelity<T> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn eval(&self, x: &[T], grad: &mut [T]) -> T {
        let base = self.inner.eval(x, grad);
        let scale = T::of(2.0) * self.lambda * self.inner.grid.h();
        for ((gi, &u), &d) in grad.iter_mut().zip(x).zip(&self.data) {
            *gi = *gi + scale * (u - d);
        }
        base + self.fidelity(x)
    }
}

impl<T: Real> SecondOrder<T> for WithFidelity<T> {
    fn hessian(&self, x: &[T]) -> Band<T> {
        let mut band = self.inner.hessian(x);
        let diag = T::of(2.0) * self.lambda * self.inner.grid.h();
        for i in 0..x.len() {
            band.add(i, i, diag);
        }
        band
    }
}

/// `∫|ac'|² + m_k·Σ|z_i|^{1/k}`.
pub fn limit_value<T: Real>(u: &SbvSignal<T>, k: usize) -> Result<T> {
    let m = m_const::<T>(k)?.m_k;
    Ok(u.dirichlet_energy() + m * u.jump_sum(k))
}

/// `m_k·Σ|z_i|^{1/k}`; the limit is infinite unless the ac part is
/// piecewise constant.
pub fn limit_surface<T: Real>(u: &SbvSignal<T>, k: usize) -> Result<T> {
    if !u.is_piecewise_constant() {
        return Err(Error::domain("nonzero absolutely continuous derivative"));
    }
    let m = m_const::<T>(k)?.m_k;
    Ok(m * u.jump_sum(k))
}

/// Limit of the scaled logarithmic energy:
/// `αcκ²∫|ac'|² + α^{1-1/(2k)}m_k·Σ|z_i|^{1/k}`.
pub fn limit_scaled<T: Real>(u: &SbvSignal<T>, k: usize, p: &ScalingParams<T>, c: T) -> Result<T> {
    let bulk = p.alpha * c * p.kappa * p.kappa;
    Ok(bulk * u.dirichlet_energy() + scaled_jump_coefficient(k, p)? * u.jump_sum(k))
}
