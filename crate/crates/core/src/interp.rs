//! Smooth convex interpolation inequalities.
//!
//! A finite set of triples `(x, g, f)` is consistent with some convex function
//! with `L`-Lipschitz gradient iff for every ordered pair `(n, l)`
//!
//! ```text
//! f_l - f_n + sum_i <g_l_i, x_n_i - x_l_i> + 1/(2L) sum_i ||g_n_i - g_l_i||^2 <= 0
//! ```
//!
//! The block sums are the ordinary inner products split by coordinate block.

use std::collections::BTreeSet;

use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{BlockVectorExpr, FValVar, PointTag, QuadExpr};
use crate::scalar::Scalar;

/// A point at which the function is evaluated, with its block-split gradient.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluatedPoint<S> {
    pub tag: PointTag,
    pub x: BlockVectorExpr<S>,
    pub g: BlockVectorExpr<S>,
    pub f: FValVar,
}

impl<S: Scalar> EvaluatedPoint<S> {
    /// The minimizer after normalization: origin, zero gradient, `f* = 0`.
    pub fn optimum(p: usize) -> Self {
        EvaluatedPoint {
            tag: PointTag::Optimum,
            x: BlockVectorExpr::zero(p),
            g: BlockVectorExpr::zero(p),
            f: FValVar(PointTag::Optimum),
        }
    }
}

/// Parameters of the class of `L`-smooth convex functions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassParams<S> {
    pub lipschitz: S,
}

impl<S: Scalar + PartialOrd> ClassParams<S> {
    pub fn new(lipschitz: S) -> Result<Self> {
        if !(lipschitz > S::zero()) {
            return Err(Error::NonPositiveSmoothness(lipschitz.to_f64().unwrap_or(f64::NAN)));
        }
        Ok(ClassParams { lipschitz })
    }
}

/// Which ordered pair a constraint came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PairLabel {
    pub n: PointTag,
    pub l: PointTag,
}

/// The interpolation inequality for pair `(n, l)`, in `<= 0` form.
pub fn pair_constraint<S: Scalar>(
    n: &EvaluatedPoint<S>,
    l: &EvaluatedPoint<S>,
    params: &ClassParams<S>,
) -> QuadExpr<S> {
    let p = n.x.num_blocks();
    let half_inv_l = S::one() / (params.lipschitz.clone() + params.lipschitz.clone());
    let mut q = QuadExpr::fval(p, l.f);
    q.add_scaled(-S::one(), &QuadExpr::fval(p, n.f));
    q.add_scaled(S::one(), &l.g.inner(&(&n.x - &l.x)));
    q.add_scaled(half_inv_l, &(&n.g - &l.g).sqnorm());
    q
}

/// All `M(M-1)` ordered-pair inequalities for `M` points, each meaning `expr <= 0`.
///
/// The order is row-major over `(n, l)` in input order.
pub fn interpolation_constraints<S: Scalar + PartialOrd>(
    points: &[EvaluatedPoint<S>],
    params: &ClassParams<S>,
) -> Result<Vec<(PairLabel, QuadExpr<S>)>> {
    if !(params.lipschitz > S::zero()) {
        return Err(Error::NonPositiveSmoothness(params.lipschitz.lower()));
    }
    if points.len() < 2 {
        return Err(Error::InvalidSize(format!("need at least 2 points, got {}", points.len())));
    }
    let mut seen = BTreeSet::new();
    for pt in points {
        if !seen.insert(pt.tag) {
            return Err(Error::DuplicatePoint(pt.tag.to_string()));
        }
    }
    let mut out = Vec::with_capacity(points.len() * (points.len() - 1));
    for n in points {
        for l in points {
            if n.tag != l.tag {
                out.push((PairLabel { n: n.tag, l: l.tag }, pair_constraint(n, l, params)));
            }
        }
    }
    Ok(out)
}

/// Concrete data at one point: per-block coordinates and partial gradients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConcretePoint<T> {
    pub x: Vec<Vec<T>>,
    pub g: Vec<Vec<T>>,
    pub f: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InterpolationReport<T> {
    pub feasible: bool,
    /// Largest left-hand side over all ordered pairs; `-inf` with fewer than two points.
    pub worst_residual: T,
    /// Input indices `(n, l)` attaining the worst residual.
    pub violating_pair: Option<(usize, usize)>,
}

fn dot<T: Float>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (x, y)| acc + *x * *y)
}

/// Residual of the `(n, l)` inequality on concrete data.
pub fn pair_residual<T: Float>(n: &ConcretePoint<T>, l: &ConcretePoint<T>, lipschitz: T) -> T {
    let mut lin = T::zero();
    let mut sq = T::zero();
    for i in 0..n.x.len() {
        let dx: Vec<T> = n.x[i].iter().zip(&l.x[i]).map(|(a, b)| *a - *b).collect();
        lin = lin + dot(&l.g[i], &dx);
        sq = sq + n.g[i].iter().zip(&l.g[i]).fold(T::zero(), |acc, (a, b)| acc + (*a - *b) * (*a - *b));
    }
    l.f - n.f + lin + sq / (lipschitz + lipschitz)
}

/// Checks every ordered pair; feasible iff all residuals are `<= tol`.
pub fn check_interpolable<T: Float>(
    data: &[ConcretePoint<T>],
    lipschitz: T,
    tol: T,
) -> Result<InterpolationReport<T>> {
    if lipschitz <= T::zero() {
        return Err(Error::NonPositiveSmoothness(lipschitz.to_f64().unwrap_or(f64::NAN)));
    }
    if let Some(first) = data.first() {
        let dims: Vec<usize> = first.x.iter().map(Vec::len).collect();
        for (k, pt) in data.iter().enumerate() {
            let xd: Vec<usize> = pt.x.iter().map(Vec::len).collect();
            let gd: Vec<usize> = pt.g.iter().map(Vec::len).collect();
            if xd != dims || gd != dims {
                return Err(Error::DimensionMismatch(format!(
                    "point {k} has block dims x={xd:?} g={gd:?}, expected {dims:?}"
                )));
            }
        }
    }
    let mut worst = T::neg_infinity();
    let mut pair = None;
    for (a, n) in data.iter().enumerate() {
        for (b, l) in data.iter().enumerate() {
            if a == b {
                continue;
            }
            let r = pair_residual(n, l, lipschitz);
            if r > worst || r.is_nan() {
                worst = r;
                pair = Some((a, b));
            }
        }
    }
    Ok(InterpolationReport { feasible: !(worst > tol) && !worst.is_nan(), worst_residual: worst, violating_pair: pair })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{AtomKind, BlockId};
    use crate::Rational;

    fn point(p: usize, k: usize) -> EvaluatedPoint<Rational> {
        EvaluatedPoint {
            tag: PointTag::Point(k),
            x: BlockVectorExpr::spanning(p, AtomKind::InitialPoint)
                .scaled(Rational::from_integer(k as i64 + 1)),
            g: BlockVectorExpr::spanning(p, AtomKind::Gradient(k)),
            f: FValVar(PointTag::Point(k)),
        }
    }

    #[test]
    fn ordered_pair_counts() {
        let params = ClassParams::new(Rational::from_integer(1)).unwrap();
        let two = vec![point(2, 0), EvaluatedPoint::optimum(2)];
        assert_eq!(interpolation_constraints(&two, &params).unwrap().len(), 2);
        let four = vec![point(2, 0), point(2, 1), point(2, 2), EvaluatedPoint::optimum(2)];
        assert_eq!(interpolation_constraints(&four, &params).unwrap().len(), 12);
    }

    #[test]
    fn stationary_pair_reduces_to_gradient_bound() {
        let one = Rational::from_integer(1);
        let params = ClassParams::new(one).unwrap();
        let n = point(2, 0);
        let star = EvaluatedPoint::optimum(2);
        let q = pair_constraint(&n, &star, &params);
        // f* - f0 + ||g0||^2 / 2
        let mut expected = QuadExpr::fval(2, FValVar(PointTag::Optimum));
        expected.add_scaled(-one, &QuadExpr::fval(2, n.f));
        expected.add_scaled(Rational::new(1, 2), &n.g.sqnorm());
        assert_eq!(q, expected);
        let b = BlockId::new(2);
        assert_eq!(q.coefficient(b, AtomKind::InitialPoint, AtomKind::Gradient(0)), Rational::from_integer(0));
    }

    #[test]
    fn rejects_bad_inputs() {
        let params = ClassParams { lipschitz: Rational::from_integer(0) };
        let pts = vec![point(1, 0), EvaluatedPoint::optimum(1)];
        assert!(matches!(interpolation_constraints(&pts, &params), Err(Error::NonPositiveSmoothness(_))));
        let params = ClassParams::new(Rational::from_integer(1)).unwrap();
        let dup = vec![point(1, 0), point(1, 0)];
        assert!(matches!(interpolation_constraints(&dup, &params), Err(Error::DuplicatePoint(_))));
        assert!(ClassParams::new(-1.0).is_err());
    }

    fn cp(x: f64, g: f64, f: f64) -> ConcretePoint<f64> {
        ConcretePoint { x: vec![vec![x]], g: vec![vec![g]], f }
    }

    #[test]
    fn single_point_is_interpolable() {
        let r = check_interpolable(&[cp(3.0, 0.0, -7.0)], 1.0, 1e-7).unwrap();
        assert!(r.feasible);
        assert!(r.violating_pair.is_none());
    }

    #[test]
    fn equal_slopes_with_equal_values_are_not_convex() {
        // pair (n=1, l=0): 0 - 0 + 1 * (1 - 0) + 0 = 1 > 0
        let r = check_interpolable(&[cp(0.0, 1.0, 0.0), cp(1.0, 1.0, 0.0)], 1.0, 1e-7).unwrap();
        assert!(!r.feasible);
        assert_eq!(r.violating_pair, Some((1, 0)));
        assert!((r.worst_residual - 1.0).abs() < 1e-15);
    }

    #[test]
    fn quadratic_samples_are_interpolable() {
        let l = 2.5;
        let pts: Vec<ConcretePoint<f64>> = [[0.3, -1.2, 0.7], [2.0, 0.1, -0.4], [-0.9, 0.8, 1.5]]
            .iter()
            .map(|x| ConcretePoint {
                x: vec![vec![x[0], x[1]], vec![x[2]]],
                g: vec![vec![l * x[0], l * x[1]], vec![l * x[2]]],
                f: 0.5 * l * (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]),
            })
            .collect();
        let r = check_interpolable(&pts, l, 1e-9).unwrap();
        assert!(r.feasible, "{r:?}");
        // f = L||x||^2/2 is tight for the class: pairs sit at 0 up to rounding
        assert!(r.worst_residual.abs() < 1e-12);
        // and infeasible for any smaller constant
        assert!(!check_interpolable(&pts, 0.9 * l, 1e-9).unwrap().feasible);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let bad = vec![cp(0.0, 0.0, 0.0), ConcretePoint { x: vec![vec![0.0, 1.0]], g: vec![vec![0.0, 0.0]], f: 0.0 }];
        assert!(matches!(check_interpolable(&bad, 1.0, 1e-7), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn works_in_single_precision() {
        let pt = |x: f32| ConcretePoint { x: vec![vec![x]], g: vec![vec![1.0f32]], f: 0.0f32 };
        let r = check_interpolable(&[pt(0.0), pt(1.0)], 1.0f32, 1e-5).unwrap();
        assert!(!r.feasible);
    }
}
