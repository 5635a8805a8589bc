//! Small dense solves: exact elimination for the Hermite system and a
//! partially pivoted solve for the projector's Gram systems.

use crate::scalar::{Coefficient, Real};

/// Gauss–Jordan elimination over an exact field. Returns `None` if singular.
pub(crate) fn solve_exact<C: Coefficient>(mut a: Vec<Vec<C>>, mut b: Vec<C>) -> Option<Vec<C>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).find(|&r| !a[r][col].is_zero())?;
        a.swap(col, pivot);
        b.swap(col, pivot);
        let inv = C::one() / a[col][col].clone();
        for j in col..n {
            a[col][j] = a[col][j].clone() * inv.clone();
        }
        b[col] = b[col].clone() * inv;
        for r in 0..n {
            if r == col || a[r][col].is_zero() {
                continue;
            }
            let factor = a[r][col].clone();
            for j in col..n {
                let sub = factor.clone() * a[col][j].clone();
                a[r][j] = a[r][j].clone() - sub;
            }
            let sub = factor * b[col].clone();
            b[r] = b[r].clone() - sub;
        }
    }
    Some(b)
}

/// Solves `a·x = b` for a small dense system with partial pivoting.
/// `a` is row-major `n×n`. Returns `None` when a pivot falls below
/// `rel_tol` times the largest entry.
pub(crate) fn solve_small<T: Real>(a: &[T], b: &[T], n: usize, rel_tol: T) -> Option<Vec<T>> {
    let mut m = a.to_vec();
    let mut x = b.to_vec();
    let scale = m.iter().fold(T::zero(), |acc, v| acc.max(v.abs()));
    if scale == T::zero() {
        return if n == 0 { Some(x) } else { None };
    }
    for col in 0..n {
        let (pivot, best) = (col..n)
            .map(|r| (r, m[r * n + col].abs()))
            .fold((col, -T::one()), |acc, c| if c.1 > acc.1 { c } else { acc });
        if best <= rel_tol * scale {
            return None;
        }
        if pivot != col {
            for j in 0..n {
                m.swap(col * n + j, pivot * n + j);
            }
            x.swap(col, pivot);
        }
        for r in col + 1..n {
            let factor = m[r * n + col] / m[col * n + col];
            if factor == T::zero() {
                continue;
            }
            for j in col..n {
                let v = m[col * n + j];
                m[r * n + j] = m[r * n + j] - factor * v;
            }
            let v = x[col];
            x[r] = x[r] - factor * v;
        }
    }
    for col in (0..n).rev() {
        let mut acc = x[col];
        for j in col + 1..n {
            acc = acc - m[col * n + j] * x[j];
        }
        x[col] = acc / m[col * n + col];
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Rational;

    #[test]
    fn exact_solve_recovers_solution() {
        let r = |n: i64| Rational::from_integer(n.into());
        let a = vec![vec![r(2), r(1)], vec![r(1), r(3)]];
        let x = solve_exact(a, vec![r(3), r(5)]).unwrap();
        assert_eq!(
            x,
            vec![Rational::new(4.into(), 5.into()), Rational::new(7.into(), 5.into())]
        );
    }

    #[test]
    fn exact_solve_detects_singular() {
        let r = |n: i64| Rational::from_integer(n.into());
        assert!(solve_exact(vec![vec![r(1), r(2)], vec![r(2), r(4)]], vec![r(1), r(2)]).is_none());
    }

    #[test]
    fn small_solve_pivots() {
        let x = solve_small::<f64>(&[0.0, 1.0, 1.0, 1.0], &[2.0, 3.0], 2, 1e-14).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 2.0).abs() < 1e-15);
        assert!(solve_small(&[1.0, 2.0, 2.0, 4.0], &[1.0, 1.0], 2, 1e-12).is_none());
    }
}
