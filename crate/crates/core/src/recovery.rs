//! Recovery sequences: the optimal profile pasted, rescaled, into each jump,
//! plus the flattening step that makes a limit object admissible.

use crate::error::{Error, Result};
use crate::grid::{CompositeSignal, Grid1D, Signal};
use crate::profile::{OptimalProfile, ScalingParams};
use crate::sbv::{poly, AcSegment, Jump, SbvSignal};
use crate::scalar::{Coefficient, Real};
use crate::schedule::EpsSchedule;

/// Drops jumps with `|z| ≤ n_min_jump` and opens a flat stretch of length
/// `2·eta` on each side of every remaining jump, then rescales the longer
/// domain back onto `[0, 1]`.
///
/// With `n` kept jumps the domain grows to `1 + 4·eta·n`, so the output has
/// plateau radius `2·eta/(1 + 4·eta·n)` and Dirichlet energy multiplied by
/// `1 + 4·eta·n`. Inputs whose kept jumps already sit on plateaus of radius
/// at least `eta` are returned with only the small jumps removed.
pub fn flatten<T: Real>(u: &SbvSignal<T>, eta: T, n_min_jump: T) -> Result<SbvSignal<T>> {
    if !(eta > T::zero() && eta.is_finite()) {
        return Err(Error::domain(format!(
            "plateau half-width eta = {eta} must be positive"
        )));
    }
    if !(n_min_jump >= T::zero()) {
        return Err(Error::domain(format!("jump cutoff {n_min_jump} must be nonnegative")));
    }
    let kept: Vec<Jump<T>> = u.jumps().iter().copied().filter(|j| j.z.abs() > n_min_jump).collect();
    if kept.iter().all(|j| j.eta >= eta) {
        return u.with_jumps(kept);
    }

    let four = T::of(4.0);
    let two_eta = eta + eta;
    let len = T::one() + four * eta * T::of_usize(kept.len());
    let shift_before = |x: T| four * eta * T::of_usize(kept.iter().filter(|j| j.t < x).count());

    let mut cuts = u.breakpoints();
    cuts.extend(kept.iter().map(|j| j.t));
    cuts.sort_by(|a, b| a.partial_cmp(b).expect("finite breakpoints"));
    cuts.dedup_by(|a, b| (*a - *b).abs() <= T::of(1e-14));

    let mut ac = Vec::new();
    let mut jumps = Vec::new();
    let mut next = 0;
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        if let Some(j) = kept.get(next).filter(|j| (j.t - a).abs() <= T::of(1e-14)) {
            let start = (j.t + shift_before(j.t)) / len;
            let level = u.ac_value(j.t);
            ac.push(AcSegment {
                from: start,
                to: start + two_eta * T::of(2.0) / len,
                coeffs: vec![level],
            });
            jumps.push(Jump {
                t: start + two_eta / len,
                z: j.z,
                eta: two_eta / len,
            });
            next += 1;
        }
        let mid = (a + b) / T::of(2.0);
        let seg = u
            .ac()
            .iter()
            .find(|s| mid >= s.from && mid <= s.to)
            .expect("segments cover [0, 1]");
        let shift = shift_before(mid);
        // x = len·y - shift
        let mapped = poly(&seg.coeffs).compose_affine(&-shift, &len);
        ac.push(AcSegment {
            from: (a + shift) / len,
            to: (b + shift) / len,
            coeffs: mapped.coeffs().to_vec(),
        });
    }
    snap_segments(&mut ac);
    SbvSignal::new(ac, jumps)
}

/// Makes consecutive segment endpoints bitwise equal and pins the ends to 0
/// and 1 after the affine map.
fn snap_segments<T: Real>(ac: &mut [AcSegment<T>]) {
    for i in 1..ac.len() {
        ac[i].from = ac[i - 1].to;
    }
    if let Some(first) = ac.first_mut() {
        first.from = T::zero();
    }
    if let Some(last) = ac.last_mut() {
        last.to = T::one();
    }
}

/// Node counts for the pasted signal.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Pasting {
    /// Nodes inside each transition window.
    pub nodes_per_layer: usize,
    /// Node density on the stretches away from the windows.
    pub nodes_per_unit: usize,
}

impl Default for Pasting {
    fn default() -> Self {
        Self {
            nodes_per_layer: 2001,
            nodes_per_unit: 10_001,
        }
    }
}

/// Smallest number of nodes accepted inside a transition window.
pub const MIN_LAYER_NODES: usize = 50;

/// Transition window `(start, start + width)` where `u(t⁻) + z·v` replaces
/// the jump.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct Window<T> {
    pub start: T,
    pub width: T,
    pub base: T,
    pub z: T,
}

/// A recovery signal together with the limit object it approximates.
#[derive(Clone, Debug)]
pub struct Recovery<T> {
    pub signal: CompositeSignal<T>,
    pub windows: Vec<Window<T>>,
    target: SbvSignal<T>,
    profile: OptimalProfile<T>,
}

impl<T: Real> Recovery<T> {
    pub fn target(&self) -> &SbvSignal<T> {
        &self.target
    }

    /// Exact value of the construction at `x`.
    pub fn value(&self, x: T) -> T {
        for w in &self.windows {
            if x > w.start && x < w.start + w.width {
                return w.base + w.z * self.profile.eval_unit((x - w.start) / w.width);
            }
        }
        self.target.value(x)
    }

    /// The construction sampled on `n` uniform nodes of `[0, 1]`.
    pub fn uniform(&self, n: usize) -> Result<Signal<T>> {
        Ok(Signal::from_fn(Grid1D::unit(n)?, |x| self.value(x)))
    }

    /// `∫|recovery - u|`, exact: `Σ |z|·width·∫₀¹(1 - v)`.
    pub fn l1_distance(&self) -> T {
        let gap = T::one() - T::of(self.profile.unit_poly.integrate_unit().approx());
        self.windows.iter().map(|w| w.z.abs() * w.width * gap).sum()
    }

    pub fn node_count(&self) -> usize {
        self.signal.node_count()
    }
}

/// Pastes `v̄` into every jump of `u` with window `ε|z|^{1/k}T*`.
pub fn build_recovery<T: Real>(
    u: &SbvSignal<T>,
    s: &EpsSchedule<T>,
    prof: &OptimalProfile<T>,
    pasting: Pasting,
) -> Result<Recovery<T>> {
    paste(u, s.eps, prof, T::one(), pasting)
}

/// Same pasting for the surface-scaled energy; `u` must be piecewise
/// constant.
pub fn build_recovery_surface<T: Real>(
    u: &SbvSignal<T>,
    eps: T,
    prof: &OptimalProfile<T>,
    pasting: Pasting,
) -> Result<Recovery<T>> {
    if !u.is_piecewise_constant() {
        return Err(Error::domain(
            "surface recovery needs a piecewise constant signal (zero ac derivative)",
        ));
    }
    paste(u, eps, prof, T::one(), pasting)
}

/// Pasting for the rescaled logarithmic energy: windows shrink by
/// `α^{-1/(2k)}`, the optimal length of `αT + c_k z² T^{1-2k}`.
pub fn build_recovery_scaled<T: Real>(
    u: &SbvSignal<T>,
    s: &EpsSchedule<T>,
    prof: &OptimalProfile<T>,
    p: &ScalingParams<T>,
    pasting: Pasting,
) -> Result<Recovery<T>> {
    p.validate()?;
    let stretch = p.alpha.powf(-T::one() / T::of_usize(2 * prof.k));
    paste(u, s.eps, prof, stretch, pasting)
}

fn paste<T: Real>(
    u: &SbvSignal<T>,
    eps: T,
    prof: &OptimalProfile<T>,
    stretch: T,
    pasting: Pasting,
) -> Result<Recovery<T>> {
    if !(eps > T::zero() && eps < T::one()) {
        return Err(Error::domain(format!("eps = {eps} outside (0, 1)")));
    }
    if pasting.nodes_per_layer < MIN_LAYER_NODES {
        return Err(Error::domain(format!(
            "{} nodes per transition window; at least {MIN_LAYER_NODES} required",
            pasting.nodes_per_layer
        )));
    }
    let mut windows = Vec::with_capacity(u.jumps().len());
    for j in u.jumps() {
        let width = eps * prof.optimal_length(j.z) * stretch;
        if width > j.eta {
            return Err(Error::domain(format!(
                "transition width {width} exceeds the plateau radius {} at {}",
                j.eta, j.t
            )));
        }
        windows.push(Window {
            start: j.t,
            width,
            base: u.value_left(j.t),
            z: j.z,
        });
    }

    let mut pieces = Vec::new();
    let mut from = T::zero();
    for w in &windows {
        pieces.push(outer_piece(u, from, w.start, pasting.nodes_per_unit, prof.k)?);
        let n = pasting.nodes_per_layer;
        let grid = Grid1D::on_interval(w.start, w.start + w.width, n)?;
        let last = T::of_usize(n - 1);
        let values = (0..n)
            .map(|i| w.base + w.z * prof.eval_unit(T::of_usize(i) / last))
            .collect();
        pieces.push(Signal::new(grid, values)?);
        from = w.start + w.width;
    }
    if from < T::one() {
        pieces.push(outer_piece(u, from, T::one(), pasting.nodes_per_unit, prof.k)?);
    }
    Ok(Recovery {
        signal: CompositeSignal::new(pieces),
        windows,
        target: u.clone(),
        profile: prof.clone(),
    })
}

/// `u` sampled on `[a, b]`; the right end takes the left limit so a jump at
/// `b` is left to the window that follows.
fn outer_piece<T: Real>(u: &SbvSignal<T>, a: T, b: T, per_unit: usize, k: usize) -> Result<Signal<T>> {
    let n = ((b - a) * T::of_usize(per_unit))
        .ceil()
        .to_usize()
        .unwrap_or(0)
        .max(k + 2);
    let grid = Grid1D::on_interval(a, b, n)?;
    let mut values: Vec<T> = (0..n).map(|i| u.value(grid.node(i))).collect();
    values[0] = u.value(a);
    values[n - 1] = u.value_left(b);
    Signal::new(grid, values)
}
