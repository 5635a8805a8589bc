//! Projected-gradient minimization of discrete energies under linear equality
//! and two-sided bound constraints.
//!
//! Steps are taken in a diagonal metric `D` supplied by the energy; the
//! projection is the `D`-orthogonal projection onto the feasible polytope,
//! computed exactly by enumerating which bound rows are active.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::{Grid1D, Signal};
use crate::linalg::solve_small;
use crate::scalar::Real;

/// A smooth function of a coordinate vector with its gradient.
pub trait DiscreteEnergy<T: Real>: Sync {
    fn dim(&self) -> usize;

    /// Returns the value and overwrites `grad`.
    fn eval(&self, x: &[T], grad: &mut [T]) -> T;

    /// Diagonal of the step metric; `None` means the identity.
    fn metric(&self) -> Option<Vec<T>> {
        None
    }

    fn value(&self, x: &[T]) -> T {
        let mut g = vec![T::zero(); self.dim()];
        self.eval(x, &mut g)
    }

    /// `f(to) - f(from)` given both values. Energies that can form the
    /// difference without cancellation should override this.
    fn change(&self, _from: &[T], f_from: T, _to: &[T], f_to: T) -> T {
        f_to - f_from
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum End {
    Left,
    Right,
}

/// A linear functional of the unknown profile.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Functional {
    /// Value at a node.
    Node(usize),
    /// Derivative of the given order at an endpoint.
    Derivative { order: usize, end: End },
    /// `v(right) - v(left)`.
    Increment,
}

/// Equality pins and symmetric bounds `|f(v)| ≤ bound`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConstraintSet<T> {
    pub pins: Vec<(Functional, T)>,
    pub bounds: Vec<(Functional, T)>,
}

impl<T: Real> ConstraintSet<T> {
    pub fn new() -> Self {
        Self {
            pins: Vec::new(),
            bounds: Vec::new(),
        }
    }

    pub fn pin(mut self, f: Functional, value: T) -> Self {
        self.pins.push((f, value));
        self
    }

    pub fn bound(mut self, f: Functional, max_abs: T) -> Self {
        self.bounds.push((f, max_abs));
        self
    }

    /// Pins `v^{(ℓ)} = 0` at both ends for `ℓ` in `orders`.
    pub fn clamp_derivatives(mut self, orders: impl IntoIterator<Item = usize>) -> Self {
        for order in orders {
            for end in [End::Left, End::Right] {
                self.pins.push((Functional::Derivative { order, end }, T::zero()));
            }
        }
        self
    }

    /// Bounds `|v^{(ℓ)}| ≤ max_abs` at both ends for `ℓ` in `orders`.
    pub fn bound_derivatives(mut self, orders: impl IntoIterator<Item = usize>, max_abs: T) -> Self {
        for order in orders {
            for end in [End::Left, End::Right] {
                self.bounds.push((Functional::Derivative { order, end }, max_abs));
            }
        }
        self
    }

    fn validate(&self) -> Result<()> {
        for (i, (f, _)) in self.pins.iter().enumerate() {
            if self.pins[..i].iter().any(|(g, _)| g == f) {
                return Err(Error::domain(format!("{f:?} pinned twice")));
            }
        }
        for (f, b) in &self.bounds {
            if !(*b >= T::zero()) || !b.is_finite() {
                return Err(Error::domain(format!(
                    "bound on {f:?} must be finite and non-negative, got {b}"
                )));
            }
        }
        Ok(())
    }

    /// Compiles against a coordinate system. A zero bound becomes a pin.
    pub fn compile(&self, coords: &impl Coordinates<T>) -> Result<LinearConstraints<T>> {
        self.validate()?;
        let mut lc = LinearConstraints::new(coords.dim());
        for (f, v) in &self.pins {
            lc.push_eq(coords.row(f)?, *v);
        }
        for (f, b) in &self.bounds {
            if *b == T::zero() {
                lc.push_eq(coords.row(f)?, T::zero());
            } else {
                lc.push_bound(coords.row(f)?, -*b, *b);
            }
        }
        Ok(lc)
    }
}

/// Maps functionals to coefficient rows over the unknowns.
pub trait Coordinates<T: Real> {
    fn dim(&self) -> usize;
    fn row(&self, f: &Functional) -> Result<Vec<T>>;
}

/// Unknowns are the nodal values on a grid; endpoint derivatives use
/// one-sided differences `Δ^ℓ/h^ℓ`.
#[derive(Clone, Copy, Debug)]
pub struct Nodal<T> {
    pub grid: Grid1D<T>,
}

impl<T: Real> Coordinates<T> for Nodal<T> {
    fn dim(&self) -> usize {
        self.grid.n()
    }

    fn row(&self, f: &Functional) -> Result<Vec<T>> {
        let n = self.grid.n();
        let mut row = vec![T::zero(); n];
        match *f {
            Functional::Node(i) => {
                if i >= n {
                    return Err(Error::domain(format!("node {i} outside grid of {n}")));
                }
                row[i] = T::one();
            }
            Functional::Increment => {
                row[0] = -T::one();
                row[n - 1] = T::one();
            }
            Functional::Derivative { order, end } => {
                if order >= n {
                    return Err(Error::domain(format!(
                        "derivative order {order} needs more than {n} nodes"
                    )));
                }
                let scale = self.grid.h().powi(order as i32);
                let mut binom = T::one();
                for j in 0..=order {
                    let sign = if (order - j) % 2 == 0 { T::one() } else { -T::one() };
                    let c = sign * binom / scale;
                    match end {
                        End::Left => row[j] = c,
                        End::Right => row[n - 1 - order + j] = c,
                    }
                    binom = binom * T::of_usize(order - j) / T::of_usize(j + 1);
                }
            }
        }
        Ok(row)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum RowKind<T> {
    Eq(T),
    Bound(T, T),
}

/// Rows `r·x = v` and `lo ≤ r·x ≤ hi`, stored normalized.
#[derive(Clone, Debug)]
pub struct LinearConstraints<T> {
    dim: usize,
    rows: Vec<Vec<T>>,
    kinds: Vec<RowKind<T>>,
}

impl<T: Real> LinearConstraints<T> {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            rows: Vec::new(),
            kinds: Vec::new(),
        }
    }

    fn normalized(&self, row: Vec<T>) -> (Vec<T>, T) {
        assert_eq!(row.len(), self.dim, "constraint row has wrong length");
        let norm = row.iter().map(|&a| a * a).sum::<T>().sqrt();
        assert!(norm > T::zero(), "zero constraint row");
        (row.into_iter().map(|a| a / norm).collect(), norm)
    }

    pub fn push_eq(&mut self, row: Vec<T>, value: T) {
        let (row, norm) = self.normalized(row);
        self.rows.push(row);
        self.kinds.push(RowKind::Eq(value / norm));
    }

    pub fn push_bound(&mut self, row: Vec<T>, lo: T, hi: T) {
        let (row, norm) = self.normalized(row);
        self.rows.push(row);
        self.kinds.push(RowKind::Bound(lo / norm, hi / norm));
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Largest violation of any row at `x`.
    pub fn violation(&self, x: &[T]) -> T {
        self.rows
            .iter()
            .zip(&self.kinds)
            .map(|(r, kind)| {
                let v = dot(r, x);
                match *kind {
                    RowKind::Eq(b) => (v - b).abs(),
                    RowKind::Bound(lo, hi) => (lo - v).max(v - hi).max(T::zero()),
                }
            })
            .fold(T::zero(), T::max)
    }
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

fn sup_norm<T: Real>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |m, a| m.max(a.abs()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum State {
    Free,
    Lower,
    Upper,
}

/// `D`-orthogonal projection onto a set of linear constraints.
#[derive(Clone, Debug)]
pub struct Projector<T> {
    lc: LinearConstraints<T>,
    inv_metric: Vec<T>,
    /// `R D⁻¹ Rᵀ`, row-major.
    gram: Vec<T>,
    bound_rows: Vec<usize>,
    eq_rows: Vec<usize>,
    patterns: Vec<Vec<State>>,
    last: Option<usize>,
}

impl<T: Real> Projector<T> {
    pub fn new(lc: LinearConstraints<T>, metric: Option<&[T]>) -> Result<Self> {
        let dim = lc.dim;
        let inv_metric: Vec<T> = match metric {
            Some(d) => {
                if d.len() != dim || d.iter().any(|&v| !(v > T::zero())) {
                    return Err(Error::domain("metric must be positive with one entry per unknown"));
                }
                d.iter().map(|&v| T::one() / v).collect()
            }
            None => vec![T::one(); dim],
        };
        let m = lc.len();
        let mut gram = vec![T::zero(); m * m];
        for i in 0..m {
            for j in 0..=i {
                let v: T = lc.rows[i]
                    .iter()
                    .zip(&lc.rows[j])
                    .zip(&inv_metric)
                    .map(|((&a, &b), &d)| a * b * d)
                    .sum();
                gram[i * m + j] = v;
                gram[j * m + i] = v;
            }
        }
        let bound_rows: Vec<usize> = (0..m).filter(|&i| matches!(lc.kinds[i], RowKind::Bound(..))).collect();
        let eq_rows: Vec<usize> = (0..m).filter(|&i| matches!(lc.kinds[i], RowKind::Eq(_))).collect();
        if bound_rows.len() > 10 {
            return Err(Error::domain(format!(
                "{} bound rows; active-set enumeration is limited to 10",
                bound_rows.len()
            )));
        }
        let mut patterns: Vec<Vec<State>> = Vec::new();
        let count = 3usize.pow(bound_rows.len() as u32);
        for mut code in 0..count {
            let mut p = Vec::with_capacity(bound_rows.len());
            for _ in 0..bound_rows.len() {
                p.push(match code % 3 {
                    0 => State::Free,
                    1 => State::Lower,
                    _ => State::Upper,
                });
                code /= 3;
            }
            patterns.push(p);
        }
        patterns.sort_by_key(|p| p.iter().filter(|&&s| s != State::Free).count());
        Ok(Self {
            lc,
            inv_metric,
            gram,
            bound_rows,
            eq_rows,
            patterns,
            last: None,
        })
    }

    pub fn constraints(&self) -> &LinearConstraints<T> {
        &self.lc
    }

    /// Tries one active pattern; returns the multipliers for the active rows.
    fn try_pattern(&self, pattern: &[State], ry: &[T]) -> Option<Vec<(usize, T)>> {
        let m = self.lc.len();
        let mut active: Vec<(usize, T)> = self
            .eq_rows
            .iter()
            .map(|&i| match self.lc.kinds[i] {
                RowKind::Eq(b) => (i, b),
                RowKind::Bound(..) => unreachable!(),
            })
            .collect();
        for (&row, &state) in self.bound_rows.iter().zip(pattern) {
            if let RowKind::Bound(lo, hi) = self.lc.kinds[row] {
                match state {
                    State::Lower => active.push((row, lo)),
                    State::Upper => active.push((row, hi)),
                    State::Free => {}
                }
            }
        }
        let na = active.len();
        let mut lambda = Vec::new();
        if na > 0 {
            // unit-diagonal scaling; the metric can spread the Gram entries
            // over many decades
            let s: Vec<T> = active
                .iter()
                .map(|&(i, _)| T::one() / self.gram[i * m + i].sqrt())
                .collect();
            let mut a = vec![T::zero(); na * na];
            for (p, &(i, _)) in active.iter().enumerate() {
                for (q, &(j, _)) in active.iter().enumerate() {
                    a[p * na + q] = s[p] * self.gram[i * m + j] * s[q];
                }
            }
            let rhs: Vec<T> = active.iter().zip(&s).map(|(&(i, b), &sp)| sp * (ry[i] - b)).collect();
            lambda = solve_small(&a, &rhs, na, T::of(1e-13))?;
            lambda.iter_mut().zip(&s).for_each(|(l, &sp)| *l = *l * sp);
        }
        // multiplier signs
        for (p, &(row, _)) in active.iter().enumerate() {
            if let Some(pos) = self.bound_rows.iter().position(|&r| r == row) {
                let ok = match pattern[pos] {
                    State::Upper => lambda[p] >= T::zero(),
                    State::Lower => lambda[p] <= T::zero(),
                    State::Free => true,
                };
                if !ok {
                    return None;
                }
            }
        }
        // feasibility of the free bound rows
        let slack = T::of(1e-12);
        for (&row, &state) in self.bound_rows.iter().zip(pattern) {
            if state != State::Free {
                continue;
            }
            let v = ry[row]
                - active
                    .iter()
                    .zip(&lambda)
                    .map(|(&(j, _), &l)| self.gram[row * m + j] * l)
                    .sum::<T>();
            if let RowKind::Bound(lo, hi) = self.lc.kinds[row] {
                let tol = slack * (T::one() + lo.abs().max(hi.abs()));
                if v < lo - tol || v > hi + tol {
                    return None;
                }
            }
        }
        Some(active.iter().map(|&(i, _)| i).zip(lambda).collect())
    }

    /// Projects `y` in place.
    pub fn project(&mut self, y: &mut [T]) -> Result<()> {
        if self.lc.is_empty() {
            return Ok(());
        }
        let ry: Vec<T> = self.lc.rows.iter().map(|r| dot(r, y)).collect();
        let order = self.last.into_iter().chain(0..self.patterns.len());
        for idx in order {
            if let Some(mult) = self.try_pattern(&self.patterns[idx], &ry) {
                self.last = Some(idx);
                for (row, l) in mult {
                    for ((yi, &r), &d) in y.iter_mut().zip(&self.lc.rows[row]).zip(&self.inv_metric) {
                        *yi = *yi - d * r * l;
                    }
                }
                return Ok(());
            }
        }
        Err(Error::Infeasible("no active set satisfies the constraints".into()))
    }

    pub fn projected(&mut self, y: &[T]) -> Result<Vec<T>> {
        let mut out = y.to_vec();
        self.project(&mut out)?;
        Ok(out)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Options<T> {
    /// Tolerance on `‖P(x - D⁻¹g) - x‖∞ / max(1, ‖x‖∞)`.
    pub tol: T,
    pub max_iter: usize,
}

impl<T: Real> Default for Options<T> {
    fn default() -> Self {
        Self {
            tol: T::of(1e-8),
            max_iter: 20_000,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Minimum<T> {
    pub x: Vec<T>,
    pub value: T,
    pub converged: bool,
    pub iterations: usize,
    /// Objective after every accepted step, starting with the initial point;
    /// later entries add each step's computed change to the initial value.
    pub history: Vec<T>,
    /// Final projected-gradient norm.
    pub residual: T,
}

fn stationarity<T: Real>(proj: &mut Projector<T>, x: &[T], g: &[T]) -> Result<T> {
    let y: Vec<T> = x
        .iter()
        .zip(g)
        .zip(&proj.inv_metric)
        .map(|((&xi, &gi), &d)| xi - d * gi)
        .collect();
    let p = proj.projected(&y)?;
    let step = p.iter().zip(x).fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()));
    Ok(step / sup_norm(x).max(T::one()))
}

/// Projected gradient with Barzilai–Borwein steps and monotone Armijo
/// backtracking. The initial point is projected first.
pub fn minimize<T: Real>(
    e: &dyn DiscreteEnergy<T>,
    lc: LinearConstraints<T>,
    init: Vec<T>,
    opts: Options<T>,
) -> Result<Minimum<T>> {
    if init.len() != e.dim() || lc.dim() != e.dim() {
        return Err(Error::domain(
            "dimension mismatch between energy, constraints and initial point",
        ));
    }
    if !(opts.tol > T::zero()) {
        return Err(Error::domain("tolerance must be positive"));
    }
    let metric = e.metric();
    let mut proj = Projector::new(lc, metric.as_deref())?;
    let mut x = proj.projected(&init)?;
    let n = x.len();
    let mut g = vec![T::zero(); n];
    let mut f = e.eval(&x, &mut g);
    let mut history = vec![f];
    let mut step = T::one();
    let mut g_new = vec![T::zero(); n];
    let armijo = T::of(1e-4);
    let dmetric: Vec<T> = proj.inv_metric.iter().map(|&d| T::one() / d).collect();

    for it in 0..opts.max_iter {
        let residual = stationarity(&mut proj, &x, &g)?;
        let floor = T::of(1024.0) * T::epsilon() * (T::one() + f.abs());
        if residual <= opts.tol {
            return Ok(Minimum {
                x,
                value: f,
                converged: true,
                iterations: it,
                history,
                residual,
            });
        }
        let mut accepted = None;
        let mut trial_step = step;
        let mut stalled = false;
        for _ in 0..60 {
            let y: Vec<T> = x
                .iter()
                .zip(&g)
                .zip(&proj.inv_metric)
                .map(|((&xi, &gi), &d)| xi - trial_step * d * gi)
                .collect();
            let xt = proj.projected(&y)?;
            let decrease: T = g
                .iter()
                .zip(xt.iter().zip(&x))
                .map(|(&gi, (&a, &b))| gi * (a - b))
                .sum();
            let ft = e.eval(&xt, &mut g_new);
            let change = e.change(&x, f, &xt, ft);
            if decrease < T::zero() && change <= armijo * decrease {
                accepted = Some((xt, ft, change));
                break;
            }
            stalled = change.abs() <= floor;
            trial_step = trial_step * T::of(0.5);
        }
        let Some((xt, ft, change)) = accepted else {
            // the smallest trials moved f by roundoff only: projection noise,
            // not the iterate, is what keeps the residual above tol
            let converged = stalled && residual <= T::of(100.0) * opts.tol;
            return Ok(Minimum {
                x,
                value: f,
                converged,
                iterations: it,
                history,
                residual,
            });
        };
        let mut sy = T::zero();
        let mut sds = T::zero();
        for i in 0..n {
            let s = xt[i] - x[i];
            sy = sy + s * (g_new[i] - g[i]);
            sds = sds + s * s * dmetric[i];
        }
        step = if sy > T::zero() && sds > T::zero() {
            (sds / sy).max(T::of(1e-12)).min(T::of(1e12))
        } else {
            (trial_step * T::of(2.0)).min(T::of(1e12))
        };
        x = xt;
        f = ft;
        std::mem::swap(&mut g, &mut g_new);
        let last = *history.last().expect("nonempty");
        history.push(last + change);
    }
    let residual = stationarity(&mut proj, &x, &g)?;
    Ok(Minimum {
        x,
        value: f,
        converged: residual <= opts.tol,
        iterations: opts.max_iter,
        history,
        residual,
    })
}

/// Minimizes an energy over nodal values on `init`'s grid. Node pins must
/// already hold at `init`; derivative constraints are enforced by projection.
pub fn minimize_signal<T: Real>(
    e: &dyn DiscreteEnergy<T>,
    c: &ConstraintSet<T>,
    init: Signal<T>,
    opts: Options<T>,
) -> Result<(Signal<T>, Minimum<T>)> {
    let grid = *init.grid();
    for (f, v) in &c.pins {
        if let Functional::Node(i) = *f {
            let have = *init
                .values()
                .get(i)
                .ok_or_else(|| Error::domain(format!("pinned node {i} outside grid")))?;
            if (have - *v).abs() > T::of(1e-12) * (T::one() + v.abs()) {
                return Err(Error::domain(format!(
                    "initial value {have} at node {i} violates pin {v}"
                )));
            }
        }
    }
    let lc = c.compile(&Nodal { grid })?;
    let min = minimize(e, lc, init.into_values(), opts)?;
    let signal = Signal::new(grid, min.x.clone())?;
    Ok((signal, min))
}

/// Symmetric band matrix with half-bandwidth `p`; `band[d][i]` holds
/// entry `(i, i + d)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Band<T> {
    n: usize,
    p: usize,
    band: Vec<Vec<T>>,
}

impl<T: Real> Band<T> {
    pub fn zeros(n: usize, p: usize) -> Self {
        Self {
            n,
            p,
            band: (0..=p).map(|d| vec![T::zero(); n.saturating_sub(d)]).collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.p
    }

    /// Adds `v` at `(i, j)` (and its mirror); `|i - j|` must not exceed `p`.
    pub fn add(&mut self, i: usize, j: usize, v: T) {
        let (lo, hi) = if i <= j { (i, j) } else { (j, i) };
        let d = hi - lo;
        assert!(d <= self.p, "entry ({i}, {j}) outside the band");
        self.band[d][lo] = self.band[d][lo] + v;
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        let (lo, hi) = if i <= j { (i, j) } else { (j, i) };
        let d = hi - lo;
        if d > self.p {
            T::zero()
        } else {
            self.band[d][lo]
        }
    }

    pub fn max_diagonal(&self) -> T {
        self.band[0].iter().fold(T::zero(), |m, &v| m.max(v.abs()))
    }

    /// Solves `(A + shift·I) x = b` by banded Cholesky; `None` if the
    /// shifted matrix is not numerically positive definite.
    pub fn solve_shifted(&self, shift: T, b: &[T]) -> Option<Vec<T>> {
        let (n, p) = (self.n, self.p);
        // l[d][i] = L(i + d, i)
        let mut l: Vec<Vec<T>> = self.band.clone();
        for v in &mut l[0] {
            *v = *v + shift;
        }
        let tiny = T::epsilon() * (self.max_diagonal() + shift.abs()).max(T::min_positive_value());
        for j in 0..n {
            let mut diag = l[0][j];
            for d in 1..=p.min(j) {
                let v = l[d][j - d];
                diag = diag - v * v;
            }
            if !(diag > tiny) {
                return None;
            }
            let root = diag.sqrt();
            l[0][j] = root;
            for d in 1..=p.min(n - 1 - j) {
                let mut v = l[d][j];
                for e in 1..=(p - d).min(j) {
                    v = v - l[d + e][j - e] * l[e][j - e];
                }
                l[d][j] = v / root;
            }
        }
        let mut y = b.to_vec();
        for i in 0..n {
            let mut v = y[i];
            for d in 1..=p.min(i) {
                v = v - l[d][i - d] * y[i - d];
            }
            y[i] = v / l[0][i];
        }
        for i in (0..n).rev() {
            let mut v = y[i];
            for d in 1..=p.min(n - 1 - i) {
                v = v - l[d][i] * y[i + d];
            }
            y[i] = v / l[0][i];
        }
        Some(y)
    }
}

/// An energy with a banded Hessian.
pub trait SecondOrder<T: Real>: DiscreteEnergy<T> {
    fn hessian(&self, x: &[T]) -> Band<T>;
}

/// Damped Newton for unconstrained banded problems. Each step solves
/// `(H + μ·I) d = -g` with `μ` raised until the shifted Hessian factors and
/// the step passes the Armijo test, then relaxed. Converged once a step
/// taken with negligible damping satisfies `‖d‖∞ ≤ tol·max(1, ‖x‖∞)`, or
/// stays within `100·tol` while moving `f` by roundoff only.
pub fn minimize_newton<T: Real>(e: &dyn SecondOrder<T>, init: Vec<T>, opts: Options<T>) -> Result<Minimum<T>> {
    if init.len() != e.dim() {
        return Err(Error::domain("dimension mismatch between energy and initial point"));
    }
    if !(opts.tol > T::zero()) {
        return Err(Error::domain("tolerance must be positive"));
    }
    let n = init.len();
    let mut x = init;
    let mut g = vec![T::zero(); n];
    let mut f = e.eval(&x, &mut g);
    let mut history = vec![f];
    let mut g_new = vec![T::zero(); n];
    let armijo = T::of(1e-4);
    let mut mu_rel = T::zero();
    let mut residual = T::infinity();

    for it in 0..opts.max_iter {
        let h = e.hessian(&x);
        let scale = h.max_diagonal().max(T::min_positive_value());
        let rhs: Vec<T> = g.iter().map(|&v| -v).collect();
        let mut accepted = None;
        for _ in 0..40 {
            let mu = mu_rel * scale;
            if let Some(d) = h.solve_shifted(mu, &rhs) {
                let slope: T = g.iter().zip(&d).map(|(&a, &b)| a * b).sum();
                let step = sup_norm(&d) / sup_norm(&x).max(T::one());
                let small_damping = mu_rel <= T::of(1e-10);
                if small_damping {
                    residual = step;
                }
                if small_damping && step <= opts.tol {
                    return Ok(Minimum {
                        x,
                        value: f,
                        converged: true,
                        iterations: it,
                        history,
                        residual,
                    });
                }
                let xt: Vec<T> = x.iter().zip(&d).map(|(&a, &b)| a + b).collect();
                let ft = e.eval(&xt, &mut g_new);
                let change = e.change(&x, f, &xt, ft);
                if slope < T::zero() && change <= armijo * slope {
                    accepted = Some((xt, ft, change));
                    break;
                }
                let floor = T::of(1024.0) * T::epsilon() * (T::one() + f.abs());
                if small_damping && change.abs() <= floor && step <= T::of(100.0) * opts.tol {
                    return Ok(Minimum {
                        x,
                        value: f,
                        converged: true,
                        iterations: it,
                        history,
                        residual,
                    });
                }
                if step <= T::epsilon() * T::of(16.0) {
                    break;
                }
            }
            mu_rel = if mu_rel == T::zero() {
                T::of(1e-12)
            } else {
                mu_rel * T::of(10.0)
            };
        }
        let Some((xt, ft, change)) = accepted else {
            return Ok(Minimum {
                x,
                value: f,
                converged: false,
                iterations: it,
                history,
                residual,
            });
        };
        x = xt;
        f = ft;
        std::mem::swap(&mut g, &mut g_new);
        let last = *history.last().expect("nonempty");
        history.push(last + change);
        mu_rel = if mu_rel <= T::of(1e-12) {
            T::zero()
        } else {
            mu_rel / T::of(10.0)
        };
    }
    Ok(Minimum {
        x,
        value: f,
        converged: false,
        iterations: opts.max_iter,
        history,
        residual,
    })
}

/// Largest relative error between the analytic gradient and fourth-order
/// central differences at up to 32 coordinates drawn with a fixed seed. The
/// difference step at coordinate `i` is `h_fd·(1 + |x_i|)`.
pub fn grad_check<T: Real>(e: &dyn DiscreteEnergy<T>, x: &[T], h_fd: T) -> T {
    let n = e.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let picks = sample(&mut rng, n, n.min(32)).into_vec();
    let mut g = vec![T::zero(); n];
    e.eval(x, &mut g);
    let mut scratch = vec![T::zero(); n];
    let floor = T::of(1e-10) * (T::one() + sup_norm(&g));
    let mut xp = x.to_vec();
    let mut worst = T::zero();
    for i in picks {
        let step = h_fd * (T::one() + x[i].abs());
        let mut at = |offset: T| {
            xp[i] = x[i] + offset;
            let f = e.eval(&xp, &mut scratch);
            xp[i] = x[i];
            f
        };
        let near = at(step) - at(-step);
        let far = at(step + step) - at(-step - step);
        let fd = (T::of(8.0) * near - far) / (T::of(12.0) * step);
        let rel = (fd - g[i]).abs() / fd.abs().max(g[i].abs()).max(floor);
        worst = worst.max(rel);
    }
    worst
}
