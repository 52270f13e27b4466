//! Multi-block SDPs, the solver backend interface and dual certificates.
//!
//! Problems are stated in maximization form over symmetric PSD blocks
//! `X_1, ..., X_p` and free variables `f`:
//!
//! ```text
//! maximize   <C, X> + c.f + c0
//! subject to <A_j, X> + a_j.f + b_j <= 0   (or = 0)
//!            X_i PSD
//! ```
//!
//! where `<C, X> = sum_i trace(C_i X_i)`.

mod certificate;
mod dump;
mod ipm;

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use certificate::{verify_certificate, CertificateReport};
pub use dump::{parse_dump, write_dump};
pub use ipm::InteriorPoint;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Sense {
    /// `row <= 0`.
    Le,
    /// `row = 0`.
    Eq,
}

/// Affine functional of the PSD blocks and free variables.
///
/// `blocks[i]` lists the upper-triangle entries `(r, c, M_rc)`, `r <= c`, of
/// the symmetric coefficient matrix of block `i`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SdpRow {
    pub blocks: Vec<Vec<(usize, usize, f64)>>,
    pub free: Vec<(usize, f64)>,
    pub constant: f64,
}

impl SdpRow {
    pub fn evaluate(&self, grams: &[DMatrix<f64>], free: &[f64]) -> f64 {
        let mut total = self.constant;
        for (entries, x) in self.blocks.iter().zip(grams) {
            for &(r, c, v) in entries {
                total += if r == c { v * x[(r, c)] } else { v * (x[(r, c)] + x[(c, r)]) };
            }
        }
        for &(k, v) in &self.free {
            total += v * free[k];
        }
        total
    }

    /// The symmetric coefficient matrix of block `i`.
    pub fn block_matrix(&self, i: usize, dim: usize) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(dim, dim);
        for &(r, c, v) in &self.blocks[i] {
            m[(r, c)] += v;
            if r != c {
                m[(c, r)] += v;
            }
        }
        m
    }

    pub fn scaled(&self, factor: f64) -> SdpRow {
        SdpRow {
            blocks: self
                .blocks
                .iter()
                .map(|b| b.iter().map(|&(r, c, v)| (r, c, v * factor)).collect())
                .collect(),
            free: self.free.iter().map(|&(k, v)| (k, v * factor)).collect(),
            constant: self.constant * factor,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.constant.is_finite()
            && self.free.iter().all(|(_, v)| v.is_finite())
            && self.blocks.iter().flatten().all(|(_, _, v)| v.is_finite())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SdpConstraint {
    pub row: SdpRow,
    pub sense: Sense,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SdpProblem {
    pub block_dims: Vec<usize>,
    pub num_free: usize,
    pub objective: SdpRow,
    pub constraints: Vec<SdpConstraint>,
}

impl SdpProblem {
    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    /// Every row multiplied by `factor`; used to check scale invariance.
    pub fn scaled(&self, factor: f64) -> SdpProblem {
        SdpProblem {
            block_dims: self.block_dims.clone(),
            num_free: self.num_free,
            objective: self.objective.scaled(factor),
            constraints: self
                .constraints
                .iter()
                .map(|c| SdpConstraint { row: c.row.scaled(factor), sense: c.sense })
                .collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Optimal,
    /// Stopped early with residuals within a relaxed tolerance.
    NearOptimal,
    Infeasible,
    Unbounded,
    Failed,
}

impl Status {
    pub fn is_solved(self) -> bool {
        matches!(self, Status::Optimal | Status::NearOptimal)
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Status::Optimal => "optimal",
            Status::NearOptimal => "near-optimal",
            Status::Infeasible => "infeasible",
            Status::Unbounded => "unbounded",
            Status::Failed => "failed",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    /// Relative feasibility and duality-gap tolerance.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { tolerance: 1e-8, max_iterations: 120 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SdpSolution {
    pub status: Status,
    pub grams: Vec<DMatrix<f64>>,
    pub free: Vec<f64>,
    pub primal_value: f64,
    pub dual_value: f64,
    /// One multiplier per constraint: nonnegative for inequalities, free for equalities.
    pub multipliers: Option<Vec<f64>>,
    /// `|primal - dual| / (1 + |primal|)`.
    pub gap: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub iterations: usize,
}

impl SdpSolution {
    pub fn failed(problem: &SdpProblem, status: Status, iterations: usize) -> Self {
        SdpSolution {
            status,
            grams: problem.block_dims.iter().map(|&d| DMatrix::zeros(d, d)).collect(),
            free: vec![0.0; problem.num_free],
            primal_value: f64::NAN,
            dual_value: f64::NAN,
            multipliers: None,
            gap: f64::NAN,
            primal_residual: f64::NAN,
            dual_residual: f64::NAN,
            iterations,
        }
    }
}

/// A synchronous dense SDP solver.
pub trait SdpBackend: Send + Sync {
    fn name(&self) -> &str;

    fn solve(&self, problem: &SdpProblem, options: &SolveOptions) -> SdpSolution;
}
