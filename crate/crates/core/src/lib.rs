//! Performance estimation for cyclic block-coordinate methods.
//!
//! A method's trajectory is written symbolically over per-block basis atoms
//! ([`expr`], [`algos`]), the smooth convex interpolation inequalities are
//! attached ([`interp`]), and the resulting worst-case problem is lifted to a
//! semidefinite program with one Gram matrix per coordinate block ([`pep`]).
//! The SDP is solved by a dense interior-point backend and its dual
//! multipliers are checked independently ([`solve`]). Worst-case instances are
//! recovered from the Gram factors ([`witness`]).
//!
//! The symbolic front end is generic over the coefficient type. `f64` is the
//! working type; [`Rational`] gives exact coefficient arithmetic for text-book
//! step-sizes.

pub mod algos;
pub mod bounds;
pub mod error;
pub mod expr;
pub mod interp;
pub mod pep;
pub mod scalar;
pub mod solve;
pub mod witness;

pub use error::{Error, Result};
pub use scalar::{RealScalar, Scalar};

/// Exact rational coefficients.
pub type Rational = num_rational::Ratio<i64>;

pub type BlockVec = expr::BlockVectorExpr<f64>;
pub type Quad = expr::QuadExpr<f64>;
pub type ExactBlockVec = expr::BlockVectorExpr<Rational>;
pub type ExactQuad = expr::QuadExpr<Rational>;
pub type Trajectory = algos::Trajectory<f64>;
pub type PepProblem = pep::PepProblem<f64>;
pub type ClassParams = interp::ClassParams<f64>;
