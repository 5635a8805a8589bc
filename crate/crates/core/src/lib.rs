//! Optimal transition profiles and discretized higher-order Perona–Malik
//! energies.
//!
//! The crate computes the jump-energy constant `m_k` exactly, discretizes the
//! logarithmic energies with a `k`-th order singular perturbation, builds
//! recovery sequences by pasting optimal profiles at jumps, and runs the
//! numerical experiments that check the limit energy and its scaling laws.
//!
//! Core numerics are generic over the floating-point type through [`Real`];
//! the profile polynomials are generic over any [`Coefficient`] field and are
//! computed with exact rationals. Concrete `f64` aliases are exported at the
//! crate root for the harness and the command-line front end.

pub mod densities;
pub mod energy;
pub mod error;
pub mod fit;
pub mod grid;
pub mod harness;
mod linalg;
pub mod optim;
pub mod poly;
pub mod profile;
pub mod recovery;
pub mod sbv;
pub mod scalar;
pub mod schedule;
pub mod transition;

pub use error::{Error, Result};
pub use poly::Polynomial;
pub use profile::{OptimalProfile, ScalingParams};
pub use scalar::{Coefficient, Real};
pub use schedule::EpsSchedule;

/// Exact rational used for profile coefficients and `c_k`.
pub type Rational = num_rational::BigRational;

pub type Grid = grid::Grid1D<f64>;
pub type Signal = grid::Signal<f64>;
pub type CompositeSignal = grid::CompositeSignal<f64>;
pub type SbvSignal = sbv::SbvSignal<f64>;
pub type Schedule = schedule::EpsSchedule<f64>;
pub type Profile = profile::OptimalProfile<f64>;
pub type Scaling = profile::ScalingParams<f64>;
pub type RationalPolynomial = poly::Polynomial<Rational>;
