//! Dense univariate polynomials over a coefficient field.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use crate::scalar::{Coefficient, Real};

/// Polynomial `Σ coeffs[i]·s^i`. The trailing coefficient is nonzero unless
/// the polynomial is identically zero, in which case `coeffs` is empty.
#[derive(Clone, Debug, PartialEq)]
pub struct Polynomial<C> {
    coeffs: Vec<C>,
}

impl<C: Coefficient> Polynomial<C> {
    pub fn new(mut coeffs: Vec<C>) -> Self {
        while coeffs.last().is_some_and(|c| c.is_zero()) {
            coeffs.pop();
        }
        Self { coeffs }
    }

    pub fn zero() -> Self {
        Self { coeffs: Vec::new() }
    }

    pub fn constant(c: C) -> Self {
        Self::new(vec![c])
    }

    /// The monomial `s`.
    pub fn identity() -> Self {
        Self::new(vec![C::zero(), C::one()])
    }

    pub fn coeffs(&self) -> &[C] {
        &self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Degree, `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn eval(&self, s: &C) -> C {
        self.coeffs
            .iter()
            .rev()
            .fold(C::zero(), |acc, c| acc * s.clone() + c.clone())
    }

    pub fn derivative(&self) -> Self {
        Self::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(i, c)| c.clone() * C::from_i64(i as i64))
                .collect(),
        )
    }

    pub fn nth_derivative(&self, order: usize) -> Self {
        (0..order).fold(self.clone(), |p, _| p.derivative())
    }

    /// Antiderivative vanishing at 0.
    pub fn antiderivative(&self) -> Self {
        let mut out = Vec::with_capacity(self.coeffs.len() + 1);
        out.push(C::zero());
        for (i, c) in self.coeffs.iter().enumerate() {
            out.push(c.clone() / C::from_i64(i as i64 + 1));
        }
        Self::new(out)
    }

    pub fn integrate(&self, a: &C, b: &C) -> C {
        let anti = self.antiderivative();
        anti.eval(b) - anti.eval(a)
    }

    /// `∫₀¹ p(s) ds`.
    pub fn integrate_unit(&self) -> C {
        self.coeffs
            .iter()
            .enumerate()
            .fold(C::zero(), |acc, (i, c)| acc + c.clone() / C::from_i64(i as i64 + 1))
    }

    /// `s ↦ p(a + b·s)`.
    pub fn compose_affine(&self, a: &C, b: &C) -> Self {
        let inner = Self::new(vec![a.clone(), b.clone()]);
        self.coeffs
            .iter()
            .rev()
            .fold(Self::zero(), |acc, c| &(&acc * &inner) + &Self::constant(c.clone()))
    }

    pub fn map<D: Coefficient>(&self, f: impl Fn(&C) -> D) -> Polynomial<D> {
        Polynomial::new(self.coeffs.iter().map(f).collect())
    }

    /// Coefficients rounded to the floating-point type `T`.
    pub fn to_real<T: Real>(&self) -> Polynomial<T> {
        self.map(|c| T::of(c.approx()))
    }
}

impl<C: Coefficient> Add for &Polynomial<C> {
    type Output = Polynomial<C>;

    fn add(self, rhs: Self) -> Polynomial<C> {
        let n = self.coeffs.len().max(rhs.coeffs.len());
        let at = |p: &Polynomial<C>, i: usize| p.coeffs.get(i).cloned().unwrap_or_else(C::zero);
        Polynomial::new((0..n).map(|i| at(self, i) + at(rhs, i)).collect())
    }
}

impl<C: Coefficient> Sub for &Polynomial<C> {
    type Output = Polynomial<C>;

    fn sub(self, rhs: Self) -> Polynomial<C> {
        self + &(-rhs)
    }
}

impl<C: Coefficient> Neg for &Polynomial<C> {
    type Output = Polynomial<C>;

    fn neg(self) -> Polynomial<C> {
        Polynomial::new(self.coeffs.iter().map(|c| -c.clone()).collect())
    }
}

impl<C: Coefficient> Mul for &Polynomial<C> {
    type Output = Polynomial<C>;

    fn mul(self, rhs: Self) -> Polynomial<C> {
        if self.is_zero() || rhs.is_zero() {
            return Polynomial::zero();
        }
        let mut out = vec![C::zero(); self.coeffs.len() + rhs.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in rhs.coeffs.iter().enumerate() {
                out[i + j] = out[i + j].clone() + a.clone() * b.clone();
            }
        }
        Polynomial::new(out)
    }
}

impl<C: Coefficient + fmt::Display> fmt::Display for Polynomial<C> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let mut first = true;
        for (i, c) in self.coeffs.iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            match i {
                0 => write!(f, "{c}")?,
                1 => write!(f, "({c})·s")?,
                _ => write!(f, "({c})·s^{i}")?,
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Rational;

    fn q(n: i64, d: i64) -> Rational {
        Rational::new(n.into(), d.into())
    }

    #[test]
    fn trims_trailing_zeros() {
        let p = Polynomial::new(vec![1.0, 2.0, 0.0, 0.0]);
        assert_eq!(p.degree(), Some(1));
        assert!(Polynomial::<f64>::new(vec![0.0]).is_zero());
        assert_eq!(Polynomial::<f64>::zero().degree(), None);
    }

    #[test]
    fn derivative_and_integral_are_exact() {
        // 3s² − 2s³
        let p = Polynomial::new(vec![q(0, 1), q(0, 1), q(3, 1), q(-2, 1)]);
        assert_eq!(p.derivative(), Polynomial::new(vec![q(0, 1), q(6, 1), q(-6, 1)]));
        assert_eq!(p.integrate_unit(), q(1, 2));
        assert_eq!(p.integrate(&q(0, 1), &q(1, 1)), q(1, 2));
        assert_eq!(p.antiderivative().derivative(), p);
    }

    #[test]
    fn compose_affine_reflects() {
        let p = Polynomial::new(vec![q(0, 1), q(0, 1), q(3, 1), q(-2, 1)]);
        let reflected = p.compose_affine(&q(1, 1), &q(-1, 1));
        for s in [q(0, 1), q(1, 3), q(1, 2), q(5, 7)] {
            assert_eq!(reflected.eval(&s), p.eval(&(q(1, 1) - s.clone())));
        }
    }

    #[test]
    fn product_degree_adds() {
        let a = Polynomial::new(vec![1.0, 1.0]);
        let b = Polynomial::new(vec![-1.0, 0.0, 2.0]);
        let c = &a * &b;
        assert_eq!(c.degree(), Some(3));
        assert_eq!(c.eval(&2.0), a.eval(&2.0) * b.eval(&2.0));
    }
}
