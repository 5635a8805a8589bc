//! Uniform grids, sampled signals and forward differences.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Uniform grid with `n ≥ 2` nodes `origin + i·h`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid1D<T> {
    n: usize,
    h: T,
    origin: T,
}

impl<T: Real> Grid1D<T> {
    /// `n` nodes on `[0, 1]`.
    pub fn unit(n: usize) -> Result<Self> {
        Self::on_interval(T::zero(), T::one(), n)
    }

    pub fn on_interval(a: T, b: T, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::domain(format!("grid needs at least 2 nodes, got {n}")));
        }
        if !(b > a) {
            return Err(Error::domain(format!("empty interval [{a}, {b}]")));
        }
        Ok(Self {
            n,
            h: (b - a) / T::of_usize(n - 1),
            origin: a,
        })
    }

    /// Grid starting at `origin` with spacing `h`; the spacing is kept exactly
    /// rather than recomputed from the endpoints.
    pub fn with_spacing(origin: T, h: T, n: usize) -> Result<Self> {
        if n < 2 || !(h > T::zero()) {
            return Err(Error::domain(format!("invalid grid: n = {n}, h = {h}")));
        }
        Ok(Self { n, h, origin })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> T {
        self.h
    }

    pub fn origin(&self) -> T {
        self.origin
    }

    pub fn length(&self) -> T {
        self.h * T::of_usize(self.n - 1)
    }

    pub fn end(&self) -> T {
        self.origin + self.length()
    }

    pub fn node(&self, i: usize) -> T {
        self.origin + self.h * T::of_usize(i)
    }

    pub fn nodes(&self) -> impl Iterator<Item = T> + '_ {
        (0..self.n).map(|i| self.node(i))
    }
}

/// Values of a function at the nodes of a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Signal<T> {
    grid: Grid1D<T>,
    values: Vec<T>,
}

impl<T: Real> Signal<T> {
    pub fn new(grid: Grid1D<T>, values: Vec<T>) -> Result<Self> {
        if values.len() != grid.n() {
            return Err(Error::domain(format!(
                "signal has {} values for a grid of {} nodes",
                values.len(),
                grid.n()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: Grid1D<T>, f: impl Fn(T) -> T) -> Self {
        let values = grid.nodes().map(f).collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &Grid1D<T> {
        &self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn d1(&self) -> Vec<T> {
        d1(&self.values, self.grid.h())
    }

    pub fn dk(&self, k: usize) -> Result<Vec<T>> {
        dk(&self.values, self.grid.h(), k)
    }

    pub fn sup_distance(&self, other: &[T]) -> T {
        self.values
            .iter()
            .zip(other)
            .fold(T::zero(), |acc, (a, b)| acc.max((*a - *b).abs()))
    }

    /// Writes `x,value` rows with a header.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x", "value"])?;
        for (x, v) in self.grid.nodes().zip(&self.values) {
            w.write_record([x.to_string(), v.to_string()])?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(file)
    }

    /// Reads `x,value` rows; the nodes must be uniformly spaced.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let mut xs = Vec::new();
        let mut vs = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let parse = |i: usize| -> Result<T> {
                let field = rec.get(i).ok_or_else(|| Error::Config("short csv row".into()))?;
                field
                    .trim()
                    .parse::<f64>()
                    .map(T::of)
                    .map_err(|e| Error::Config(format!("bad number {field:?}: {e}")))
            };
            xs.push(parse(0)?);
            vs.push(parse(1)?);
        }
        if xs.len() < 2 {
            return Err(Error::domain("signal csv needs at least two rows"));
        }
        let grid = Grid1D::on_interval(xs[0], xs[xs.len() - 1], xs.len())?;
        let tol = T::of(1e-9) * grid.length().max(T::one());
        if xs.iter().enumerate().any(|(i, &x)| (x - grid.node(i)).abs() > tol) {
            return Err(Error::domain("signal csv nodes are not uniformly spaced"));
        }
        Signal::new(grid, vs)
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(file)
    }
}

/// Signal made of uniformly sampled pieces on adjacent intervals. Consecutive
/// pieces share their junction node, so first differences see every cell;
/// `k`-th difference windows straddling a junction are not formed.
#[derive(Clone, Debug, Default)]
pub struct CompositeSignal<T> {
    pieces: Vec<Signal<T>>,
}

impl<T: Real> CompositeSignal<T> {
    pub fn new(pieces: Vec<Signal<T>>) -> Self {
        Self { pieces }
    }

    pub fn single(signal: Signal<T>) -> Self {
        Self { pieces: vec![signal] }
    }

    pub fn pieces(&self) -> &[Signal<T>] {
        &self.pieces
    }

    pub fn push(&mut self, piece: Signal<T>) {
        self.pieces.push(piece);
    }

    pub fn node_count(&self) -> usize {
        self.pieces.iter().map(Signal::len).sum()
    }

    /// Value at `x` by linear interpolation inside the piece containing it.
    pub fn eval(&self, x: T) -> Option<T> {
        let piece = self
            .pieces
            .iter()
            .find(|p| x >= p.grid().origin() && x <= p.grid().end())?;
        let g = piece.grid();
        let pos = ((x - g.origin()) / g.h()).max(T::zero());
        let i = pos.floor().to_usize()?.min(g.n() - 2);
        let frac = pos - T::of_usize(i);
        let v = piece.values();
        Some(v[i] + (v[i + 1] - v[i]) * frac)
    }
}

/// Forward differences `(u_{i+1} - u_i)/h`, one per cell.
pub fn d1<T: Real>(u: &[T], h: T) -> Vec<T> {
    u.windows(2).map(|w| (w[1] - w[0]) / h).collect()
}

/// `k`-th forward differences `Δ^k u_i / h^k` on windows `i = 0..n-1-k`.
pub fn dk<T: Real>(u: &[T], h: T, k: usize) -> Result<Vec<T>> {
    if u.len() <= k {
        return Err(Error::domain(format!(
            "k-th difference needs more than k = {k} nodes, got {}",
            u.len()
        )));
    }
    let mut d = u.to_vec();
    for _ in 0..k {
        d = d.windows(2).map(|w| w[1] - w[0]).collect();
    }
    let scale = h.powi(k as i32);
    Ok(d.into_iter().map(|v| v / scale).collect())
}

/// Adjoint of `u ↦ Δ^k u` (unscaled): maps window coefficients `g` of length
/// `n-k` to node coefficients of length `n`.
pub(crate) fn dk_adjoint<T: Real>(g: &[T], k: usize) -> Vec<T> {
    let mut out = g.to_vec();
    for _ in 0..k {
        let m = out.len();
        let mut next = vec![T::zero(); m + 1];
        for (i, &v) in out.iter().enumerate() {
            next[i] = next[i] - v;
            next[i + 1] = next[i + 1] + v;
        }
        out = next;
        debug_assert_eq!(out.len(), m + 1);
    }
    out
}
