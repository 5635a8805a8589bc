//! Piecewise-smooth limit objects: an absolutely continuous part plus a
//! finite list of jumps, each surrounded by a flat plateau.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::poly::Polynomial;
use crate::scalar::Real;

/// Polynomial piece of the absolutely continuous part, in the global
/// variable `x` on `[from, to]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcSegment<T> {
    pub from: T,
    pub to: T,
    pub coeffs: Vec<T>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Jump<T> {
    /// Location in `(0, 1)`.
    pub t: T,
    /// `u(t⁺) - u(t⁻)`, nonzero.
    pub z: T,
    /// Plateau radius: the absolutely continuous part is constant on
    /// `(t - eta, t + eta)`.
    pub eta: T,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Real + Deserialize<'de>"))]
struct SbvRepr<T> {
    ac: Vec<AcSegment<T>>,
    #[serde(default)]
    jumps: Vec<Jump<T>>,
}

/// `u(x) = ac(x) + Σ_{t_i < x} z_i` on `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(
    try_from = "SbvRepr<T>",
    bound(serialize = "T: Real + Serialize", deserialize = "T: Real + Deserialize<'de>")
)]
pub struct SbvSignal<T> {
    ac: Vec<AcSegment<T>>,
    jumps: Vec<Jump<T>>,
}

impl<T: Real> TryFrom<SbvRepr<T>> for SbvSignal<T> {
    type Error = Error;

    fn try_from(r: SbvRepr<T>) -> Result<Self> {
        Self::new(r.ac, r.jumps)
    }
}

impl<T: Real> SbvSignal<T> {
    pub fn new(ac: Vec<AcSegment<T>>, jumps: Vec<Jump<T>>) -> Result<Self> {
        let s = Self { ac, jumps };
        s.validate()?;
        Ok(s)
    }

    fn validate(&self) -> Result<()> {
        let tol = T::of(1e-12);
        let first = self
            .ac
            .first()
            .ok_or_else(|| Error::domain("ac part has no segments"))?;
        let last = self.ac.last().expect("nonempty");
        if first.from.abs() > tol || (last.to - T::one()).abs() > tol {
            return Err(Error::domain("ac segments must cover [0, 1]"));
        }
        for seg in &self.ac {
            if !(seg.to > seg.from) {
                return Err(Error::domain(format!("empty ac segment [{}, {}]", seg.from, seg.to)));
            }
        }
        for pair in self.ac.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            if (a.to - b.from).abs() > tol {
                return Err(Error::domain(format!("ac segments not contiguous at {}", a.to)));
            }
            let left = poly(&a.coeffs).eval(&a.to);
            let right = poly(&b.coeffs).eval(&b.from);
            if (left - right).abs() > tol * (T::one() + left.abs()) {
                return Err(Error::domain(format!(
                    "ac part discontinuous at {}: {left} vs {right}",
                    a.to
                )));
            }
        }
        for j in &self.jumps {
            if !(j.t > T::zero() && j.t < T::one()) {
                return Err(Error::domain(format!("jump location {} outside (0, 1)", j.t)));
            }
            if j.z == T::zero() || !j.z.is_finite() {
                return Err(Error::domain(format!("jump at {} has zero or non-finite height", j.t)));
            }
            if !(j.eta > T::zero()) {
                return Err(Error::domain(format!(
                    "jump at {} needs a positive plateau radius, got {}",
                    j.t, j.eta
                )));
            }
            if j.t - j.eta < T::zero() || j.t + j.eta > T::one() {
                return Err(Error::domain(format!(
                    "plateau of radius {} at {} leaves (0, 1)",
                    j.eta, j.t
                )));
            }
            for seg in &self.ac {
                let lo = seg.from.max(j.t - j.eta);
                let hi = seg.to.min(j.t + j.eta);
                if hi - lo > tol && poly(&seg.coeffs).degree().unwrap_or(0) > 0 {
                    return Err(Error::domain(format!(
                        "ac part is not constant on the plateau around {}",
                        j.t
                    )));
                }
            }
        }
        for pair in self.jumps.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            if !(b.t > a.t) {
                return Err(Error::domain("jump locations must be strictly increasing"));
            }
            if a.t + a.eta > b.t - b.eta + tol {
                return Err(Error::domain(format!("plateaus around {} and {} overlap", a.t, b.t)));
            }
        }
        Ok(())
    }

    /// Constant `value` with no jumps.
    pub fn constant(value: T) -> Self {
        Self {
            ac: vec![AcSegment {
                from: T::zero(),
                to: T::one(),
                coeffs: vec![value],
            }],
            jumps: Vec::new(),
        }
    }

    /// `slope·x`, no jumps.
    pub fn affine(slope: T) -> Self {
        Self {
            ac: vec![AcSegment {
                from: T::zero(),
                to: T::one(),
                coeffs: vec![T::zero(), slope],
            }],
            jumps: Vec::new(),
        }
    }

    /// Piecewise constant function starting at 0 with the given jumps.
    pub fn piecewise_constant(jumps: Vec<Jump<T>>) -> Result<Self> {
        Self::new(
            vec![AcSegment {
                from: T::zero(),
                to: T::one(),
                coeffs: vec![T::zero()],
            }],
            jumps,
        )
    }

    pub fn ac(&self) -> &[AcSegment<T>] {
        &self.ac
    }

    pub fn jumps(&self) -> &[Jump<T>] {
        &self.jumps
    }

    fn segment_at(&self, x: T) -> &AcSegment<T> {
        self.ac
            .iter()
            .find(|s| x <= s.to)
            .unwrap_or_else(|| self.ac.last().expect("nonempty"))
    }

    pub fn ac_value(&self, x: T) -> T {
        poly(&self.segment_at(x).coeffs).eval(&x)
    }

    pub fn ac_derivative(&self, x: T) -> T {
        poly(&self.segment_at(x).coeffs).derivative().eval(&x)
    }

    /// `u(x)`, left-continuous at jumps.
    pub fn value(&self, x: T) -> T {
        let jumps: T = self.jumps.iter().filter(|j| j.t < x).map(|j| j.z).sum();
        self.ac_value(x) + jumps
    }

    /// `u(t⁻)`.
    pub fn value_left(&self, t: T) -> T {
        self.value(t)
    }

    /// `∫₀¹ |ac'|²`, exact per segment.
    pub fn dirichlet_energy(&self) -> T {
        self.ac
            .iter()
            .map(|s| {
                let d = poly(&s.coeffs).derivative();
                (&d * &d).integrate(&s.from, &s.to)
            })
            .sum()
    }

    /// `Σ_i |z_i|^{1/k}`.
    pub fn jump_sum(&self, k: usize) -> T {
        let inv_k = T::one() / T::of_usize(k);
        self.jumps.iter().map(|j| j.z.abs().powf(inv_k)).sum()
    }

    /// True when every ac segment is constant.
    pub fn is_piecewise_constant(&self) -> bool {
        self.ac.iter().all(|s| poly(&s.coeffs).degree().unwrap_or(0) == 0)
    }

    /// Breakpoints of the ac part, including 0 and 1.
    pub fn breakpoints(&self) -> Vec<T> {
        let mut out = vec![self.ac[0].from];
        out.extend(self.ac.iter().map(|s| s.to));
        out
    }

    /// Copy with the jump list replaced (validated).
    pub fn with_jumps(&self, jumps: Vec<Jump<T>>) -> Result<Self> {
        Self::new(self.ac.clone(), jumps)
    }

    pub fn from_json_str(s: &str) -> Result<Self>
    where
        T: for<'de> Deserialize<'de>,
    {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json_string(&self) -> Result<String>
    where
        T: Serialize,
    {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self>
    where
        T: for<'de> Deserialize<'de>,
    {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }
}

pub(crate) fn poly<T: Real>(coeffs: &[T]) -> Polynomial<T> {
    Polynomial::new(coeffs.to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp_with_flat_jump() -> SbvSignal<f64> {
        // x off [0.4, 0.6], flat on it, jump 4 at 0.5
        SbvSignal::new(
            vec![
                AcSegment {
                    from: 0.0,
                    to: 0.4,
                    coeffs: vec![0.0, 1.0],
                },
                AcSegment {
                    from: 0.4,
                    to: 0.6,
                    coeffs: vec![0.4],
                },
                AcSegment {
                    from: 0.6,
                    to: 1.0,
                    coeffs: vec![-0.2, 1.0],
                },
            ],
            vec![Jump {
                t: 0.5,
                z: 4.0,
                eta: 0.1,
            }],
        )
        .unwrap()
    }

    #[test]
    fn dirichlet_part_is_exact() {
        let u = ramp_with_flat_jump();
        assert!((u.dirichlet_energy() - 0.8).abs() < 1e-15);
        assert_eq!(u.jump_sum(2), 2.0);
        assert_eq!(u.value(0.45), 0.4);
        assert_eq!(u.value(0.55), 4.4);
        assert_eq!(u.value_left(0.5), 0.4);
    }

    #[test]
    fn rejects_slope_on_plateau() {
        let err = SbvSignal::new(
            vec![AcSegment {
                from: 0.0,
                to: 1.0,
                coeffs: vec![0.0, 1.0],
            }],
            vec![Jump {
                t: 0.5,
                z: 1.0,
                eta: 0.1,
            }],
        );
        assert!(err.is_err());
    }

    #[test]
    fn rejects_overlapping_plateaus_and_bad_jumps() {
        let j = |t, eta| Jump { t, z: 1.0, eta };
        assert!(SbvSignal::<f64>::piecewise_constant(vec![j(0.3, 0.1), j(0.45, 0.1)]).is_err());
        assert!(SbvSignal::<f64>::piecewise_constant(vec![j(0.5, 0.1), j(0.3, 0.1)]).is_err());
        assert!(SbvSignal::<f64>::piecewise_constant(vec![j(0.05, 0.1)]).is_err());
        assert!(SbvSignal::<f64>::piecewise_constant(vec![Jump {
            t: 0.5,
            z: 0.0,
            eta: 0.1
        }])
        .is_err());
        assert!(SbvSignal::<f64>::piecewise_constant(vec![j(0.3, 0.1), j(0.5, 0.1)]).is_ok());
    }

    #[test]
    fn rejects_discontinuous_ac() {
        let err = SbvSignal::<f64>::new(
            vec![
                AcSegment {
                    from: 0.0,
                    to: 0.5,
                    coeffs: vec![0.0],
                },
                AcSegment {
                    from: 0.5,
                    to: 1.0,
                    coeffs: vec![1.0],
                },
            ],
            vec![],
        );
        assert!(err.is_err());
    }

    #[test]
    fn json_round_trip() {
        let u = ramp_with_flat_jump();
        let text = u.to_json_string().unwrap();
        let back = SbvSignal::<f64>::from_json_str(&text).unwrap();
        assert_eq!(u, back);
        let bad = r#"{"ac":[{"from":0,"to":1,"coeffs":[0,1]}],"jumps":[{"t":0.5,"z":1,"eta":0.1}]}"#;
        assert!(SbvSignal::<f64>::from_json_str(bad).is_err());
    }
}
