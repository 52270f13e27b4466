use serde::{Deserialize, Serialize};

use super::{SdpProblem, SdpSolution, Sense};
use crate::error::{Error, Result};

/// Result of checking a dual certificate from the multipliers alone.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    /// Smallest eigenvalue of `S_i = sum_j lambda_j A_{j,i} - C_i`, per block.
    pub slack_min_eigenvalues: Vec<f64>,
    /// Constraint indices of inequalities with `lambda_j < -tol`.
    pub sign_violations: Vec<usize>,
    /// `max_k |c_k - sum_j lambda_j a_{j,k}|` over the free variables.
    pub stationarity: f64,
    /// `c0 - sum_j lambda_j b_j`.
    pub dual_value: f64,
    pub primal_value: f64,
    pub objective_mismatch: f64,
    pub pass: bool,
}

pub fn verify_certificate(problem: &SdpProblem, solution: &SdpSolution, tol: f64) -> Result<CertificateReport> {
    let lambda = solution.multipliers.as_ref().ok_or(Error::MissingDuals)?;
    if lambda.len() != problem.constraints.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} multipliers for {} constraints",
            lambda.len(),
            problem.constraints.len()
        )));
    }

    let mut slack_min_eigenvalues = Vec::with_capacity(problem.block_dims.len());
    for (i, &d) in problem.block_dims.iter().enumerate() {
        let mut s = -problem.objective.block_matrix(i, d);
        for (con, l) in problem.constraints.iter().zip(lambda) {
            if *l != 0.0 {
                s += con.row.block_matrix(i, d) * *l;
            }
        }
        let min = if d == 0 { 0.0 } else { s.symmetric_eigenvalues().min() };
        slack_min_eigenvalues.push(min);
    }

    let sign_violations: Vec<usize> = problem
        .constraints
        .iter()
        .zip(lambda)
        .enumerate()
        .filter(|(_, (c, l))| c.sense == Sense::Le && **l < -tol)
        .map(|(j, _)| j)
        .collect();

    let mut residual = vec![0.0; problem.num_free];
    for &(k, v) in &problem.objective.free {
        residual[k] += v;
    }
    for (con, l) in problem.constraints.iter().zip(lambda) {
        for &(k, v) in &con.row.free {
            residual[k] -= l * v;
        }
    }
    let stationarity = residual.iter().fold(0.0f64, |m, r| m.max(r.abs()));

    let dual_value = problem.objective.constant
        - problem.constraints.iter().zip(lambda).map(|(c, l)| l * c.row.constant).sum::<f64>();
    let primal_value = solution.primal_value;
    let objective_mismatch = (primal_value - dual_value).abs();

    let pass = slack_min_eigenvalues.iter().all(|e| *e >= -tol)
        && sign_violations.is_empty()
        && stationarity <= tol
        && objective_mismatch <= tol * (1.0 + primal_value.abs());
    Ok(CertificateReport {
        slack_min_eigenvalues,
        sign_violations,
        stationarity,
        dual_value,
        primal_value,
        objective_mismatch,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solve::{SdpConstraint, SdpRow, Status};
    use nalgebra::DMatrix;

    fn one_by_one() -> (SdpProblem, SdpSolution) {
        // maximize X subject to X - 1 <= 0; dual lambda = 1
        let pb = SdpProblem {
            block_dims: vec![1],
            num_free: 0,
            objective: SdpRow { blocks: vec![vec![(0, 0, 1.0)]], free: vec![], constant: 0.0 },
            constraints: vec![SdpConstraint {
                row: SdpRow { blocks: vec![vec![(0, 0, 1.0)]], free: vec![], constant: -1.0 },
                sense: Sense::Le,
            }],
        };
        let sol = SdpSolution {
            status: Status::Optimal,
            grams: vec![DMatrix::from_element(1, 1, 1.0)],
            free: vec![],
            primal_value: 1.0,
            dual_value: 1.0,
            multipliers: Some(vec![1.0]),
            gap: 0.0,
            primal_residual: 0.0,
            dual_residual: 0.0,
            iterations: 0,
        };
        (pb, sol)
    }

    #[test]
    fn analytic_dual_passes_exactly() {
        let (pb, sol) = one_by_one();
        let r = verify_certificate(&pb, &sol, 1e-9).unwrap();
        assert!(r.pass);
        assert_eq!(r.slack_min_eigenvalues, vec![0.0]);
        assert_eq!(r.objective_mismatch, 0.0);
    }

    #[test]
    fn perturbed_multiplier_fails() {
        let (pb, mut sol) = one_by_one();
        sol.multipliers = Some(vec![0.9]);
        let r = verify_certificate(&pb, &sol, 1e-6).unwrap();
        assert!(!r.pass);
        assert!(r.slack_min_eigenvalues[0] < -0.05);
    }

    #[test]
    fn missing_duals_is_an_error() {
        let (pb, mut sol) = one_by_one();
        sol.multipliers = None;
        assert!(matches!(verify_certificate(&pb, &sol, 1e-6), Err(Error::MissingDuals)));
    }

    #[test]
    fn negative_inequality_multiplier_is_a_sign_violation() {
        let (mut pb, mut sol) = one_by_one();
        pb.constraints.push(SdpConstraint { row: SdpRow { blocks: vec![vec![]], free: vec![], constant: -3.0 }, sense: Sense::Le });
        sol.multipliers = Some(vec![1.0, -0.1]);
        let r = verify_certificate(&pb, &sol, 1e-6).unwrap();
        assert_eq!(r.sign_violations, vec![1]);
        assert!(!r.pass);
    }
}
