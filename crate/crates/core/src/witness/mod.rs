//! Concrete worst-case instances recovered from solved problems, and
//! simulation of the methods on concrete functions.

mod simulate;

use std::fmt::Write as _;

use nalgebra::SymmetricEigen;

use crate::algos::{Method, ThetaIndex};
use crate::error::{Error, Result};
use crate::expr::{AtomKind, AtomValues, BlockId};
use crate::interp::{check_interpolable, ConcretePoint, InterpolationReport};
use crate::pep::{InitialCondition, PepProblem, PerformanceCriterion};
use crate::scalar::Scalar;
use crate::solve::SdpSolution;

pub use simulate::{simulate, ConcreteFunction, Quadratic, SimRun};

/// Eigenvalues below this fraction of the largest one are dropped.
pub const DEFAULT_RANK_TOL: f64 = 1e-7;

#[derive(Clone, Debug, PartialEq)]
pub struct Witness {
    /// Retained dimension per block.
    pub ranks: Vec<usize>,
    pub atoms: AtomValues,
    pub x0: Vec<Vec<f64>>,
    /// One entry per trajectory point; the optimum is the origin with `f = 0`.
    pub points: Vec<ConcretePoint<f64>>,
    pub criterion: f64,
    pub primal_value: f64,
}

impl Witness {
    /// Points followed by the optimum, as fed to the interpolation check.
    pub fn with_optimum(&self) -> Vec<ConcretePoint<f64>> {
        let mut pts = self.points.clone();
        let zero: Vec<Vec<f64>> = self.ranks.iter().map(|&r| vec![0.0; r]).collect();
        pts.push(ConcretePoint { x: zero.clone(), g: zero, f: 0.0 });
        pts
    }

    /// `block,atom,point,coord...` rows, then a `point,f` section.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("block,atom,point,coords\n");
        for (block, kind, coords) in self.atoms.iter() {
            let point = match kind {
                AtomKind::InitialPoint => String::new(),
                AtomKind::Gradient(k) => k.to_string(),
                AtomKind::FreeDirection(n) => n.to_string(),
            };
            let _ = write!(out, "{block},{kind},{point}");
            for c in coords {
                let _ = write!(out, ",{c:.16e}");
            }
            out.push('\n');
        }
        out.push_str("point,f\n");
        for (k, pt) in self.points.iter().enumerate() {
            let _ = writeln!(out, "{k},{:.16e}", pt.f);
        }
        let _ = writeln!(out, "*,{:.16e}", 0.0);
        out
    }
}

fn criterion_value<S: Scalar>(problem: &PepProblem<S>, points: &[ConcretePoint<f64>]) -> f64 {
    let traj = &problem.trajectory;
    match problem.criterion {
        PerformanceCriterion::ObjectiveGap => points[traj.branch().final_point].f,
        PerformanceCriterion::GradSqNorm => {
            points[traj.branch().final_point].g.iter().flatten().map(|v| v * v).sum()
        }
        PerformanceCriterion::EnsembleAverageGap => {
            let total: f64 = traj.branches.iter().map(|b| points[b.final_point].f).sum();
            total / traj.branches.len() as f64
        }
    }
}

/// Factors each Gram block as `V sqrt(Lambda)`, keeping eigenvalues above
/// `rank_tol` times the largest one, capped at `rank_tol` itself so that
/// blocks with huge entries along an unbounded optimal face keep their small
/// genuine directions.
pub fn reconstruct<S: Scalar>(solution: &SdpSolution, problem: &PepProblem<S>, rank_tol: f64) -> Result<Witness> {
    if !solution.status.is_solved() {
        return Err(Error::Solver(format!("cannot reconstruct from a {} solve", solution.status)));
    }
    let layout = problem.layout();
    if solution.grams.len() != layout.atoms.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} Gram blocks for {} coordinate blocks",
            solution.grams.len(),
            layout.atoms.len()
        )));
    }
    let mut factors = Vec::with_capacity(layout.atoms.len());
    let mut ranks = Vec::with_capacity(layout.atoms.len());
    for (slot, (gram, atoms)) in solution.grams.iter().zip(&layout.atoms).enumerate() {
        if gram.nrows() != atoms.len() {
            return Err(Error::DimensionMismatch(format!("block {} Gram has the wrong size", slot + 1)));
        }
        let eig = SymmetricEigen::new((gram + gram.transpose()) * 0.5);
        let top = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(*v));
        let floor = rank_tol * top.clamp(f64::MIN_POSITIVE, 1.0);
        if let Some(bad) = eig.eigenvalues.iter().find(|v| **v < -floor.max(rank_tol)) {
            return Err(Error::IndefiniteGram { block: slot + 1, eigenvalue: *bad });
        }
        let kept: Vec<usize> = (0..eig.eigenvalues.len()).filter(|&i| eig.eigenvalues[i] > floor).collect();
        ranks.push(kept.len());
        let rows: Vec<Vec<f64>> = (0..atoms.len())
            .map(|a| kept.iter().map(|&i| eig.eigenvectors[(a, i)] * eig.eigenvalues[i].sqrt()).collect())
            .collect();
        factors.push(rows);
    }

    let mut atoms = AtomValues::new(ranks.clone());
    for (slot, (kinds, rows)) in layout.atoms.iter().zip(factors).enumerate() {
        for (kind, row) in kinds.iter().zip(rows) {
            atoms.insert(BlockId::new(slot + 1), *kind, row);
        }
    }
    let traj = &problem.trajectory;
    let points: Vec<ConcretePoint<f64>> = traj
        .points
        .iter()
        .enumerate()
        .map(|(k, pt)| ConcretePoint { x: pt.x.evaluate(&atoms), g: pt.g.evaluate(&atoms), f: solution.free[k] })
        .collect();
    let x0 = traj.branch().iterates[0].evaluate(&atoms);
    let criterion = criterion_value(problem, &points);
    Ok(Witness { ranks, atoms, x0, points, criterion, primal_value: solution.primal_value })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ValidationReport {
    pub interpolation: InterpolationReport<f64>,
    /// Largest `||x||^2 - R^2` over the constrained iterates.
    pub initial_violation: f64,
    pub initial_condition_ok: bool,
    /// Largest coordinate mismatch found by the forward replay.
    pub replay_error: f64,
    pub replay_ok: bool,
    pub criterion: f64,
    pub attains_primal: bool,
    pub pass: bool,
}

fn max_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter().flatten().zip(b.iter().flatten()).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

fn sqnorm(v: &[Vec<f64>]) -> f64 {
    v.iter().flatten().map(|x| x * x).sum()
}

/// Reruns every branch from `x0` using only the witness gradients and
/// returns the worst mismatch together with the replayed iterates of branch 0.
fn replay<S: Scalar>(w: &Witness, problem: &PepProblem<S>) -> (f64, Vec<Vec<Vec<f64>>>) {
    let traj = &problem.trajectory;
    let p = traj.p as f64;
    let mut worst = 0.0f64;
    let mut first_iterates = Vec::new();
    for (bi, branch) in traj.branches.iter().enumerate() {
        let mut x = w.x0.clone();
        let mut z = w.x0.clone();
        let mut iterates = vec![x.clone()];
        for (n, (block, &k)) in branch.sequence.iter().zip(&branch.eval_points).enumerate() {
            let i = block.slot();
            let pt = &w.points[k];
            match &traj.method {
                Method::Ccd { alpha } => {
                    worst = worst.max(max_diff(&pt.x, &x));
                    let a = alpha.lower();
                    for (xi, gi) in x[i].iter_mut().zip(&pt.g[i]) {
                        *xi -= a * gi;
                    }
                }
                Method::Am => {
                    worst = worst.max(max_diff(&pt.x, &x));
                    let next = branch.iterate_points[n + 1].expect("exact-min iterates are points");
                    let np = &w.points[next];
                    for (j, xb) in x.iter_mut().enumerate() {
                        if j == i {
                            xb.clone_from(&np.x[j]);
                        } else {
                            worst = worst.max(max_diff(std::slice::from_ref(xb), std::slice::from_ref(&np.x[j])));
                        }
                    }
                    worst = worst.max(np.g[i].iter().fold(0.0f64, |m, v| m.max(v.abs())));
                }
                Method::Cacd { lipschitz, theta, theta_index } => {
                    let t = theta.get(n).lower();
                    let tz = match theta_index {
                        ThetaIndex::Prev => t,
                        ThetaIndex::Next => theta.get(n + 1).lower(),
                    };
                    let y: Vec<Vec<f64>> = x
                        .iter()
                        .zip(&z)
                        .map(|(xb, zb)| xb.iter().zip(zb).map(|(a, b)| (1.0 - t) * a + t * b).collect())
                        .collect();
                    worst = worst.max(max_diff(&pt.x, &y));
                    let c = 1.0 / (p * tz * lipschitz.lower());
                    let mut z_new = z.clone();
                    for (zi, gi) in z_new[i].iter_mut().zip(&pt.g[i]) {
                        *zi -= c * gi;
                    }
                    x = y
                        .iter()
                        .zip(z_new.iter().zip(&z))
                        .map(|(yb, (zn, zo))| {
                            yb.iter().zip(zn.iter().zip(zo)).map(|(a, (b, c))| a + p * t * (b - c)).collect()
                        })
                        .collect();
                    z = z_new;
                }
            }
            iterates.push(x.clone());
        }
        worst = worst.max(max_diff(&w.points[branch.final_point].x, &x));
        if bi == 0 {
            first_iterates = iterates;
        }
    }
    (worst, first_iterates)
}

/// Checks interpolation, the initial condition, the update rules and attainment.
pub fn validate_lower_bound<S: Scalar>(w: &Witness, problem: &PepProblem<S>, tol: f64) -> ValidationReport {
    let lipschitz = problem.class.lipschitz.lower();
    let interpolation = check_interpolable(&w.with_optimum(), lipschitz, tol).unwrap_or(InterpolationReport {
        feasible: false,
        worst_residual: f64::INFINITY,
        violating_pair: None,
    });
    let (replay_error, iterates) = replay(w, problem);
    let r = problem.condition.radius().lower();
    let p = problem.trajectory.p;
    let constrained: Vec<&Vec<Vec<f64>>> = match &problem.condition {
        InitialCondition::Init { .. } => vec![&w.x0],
        InitialCondition::All { includes_x0, .. } => {
            let first = if *includes_x0 { 0 } else { 1 };
            (first..)
                .map(|k| k * p)
                .take_while(|&n| n < iterates.len())
                .map(|n| if n == 0 { &w.x0 } else { &iterates[n] })
                .collect()
        }
    };
    let initial_violation = constrained.iter().map(|x| sqnorm(x) - r * r).fold(f64::NEG_INFINITY, f64::max);
    let initial_condition_ok = initial_violation <= tol;
    let replay_ok = replay_error <= tol;
    let criterion = criterion_value(problem, &w.points);
    let attains_primal = criterion >= w.primal_value - tol;
    ValidationReport {
        pass: interpolation.feasible && initial_condition_ok && replay_ok && attains_primal,
        interpolation,
        initial_violation,
        initial_condition_ok,
        replay_error,
        replay_ok,
        criterion,
        attains_primal,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algos::{build_am, build_ccd};
    use crate::interp::ClassParams;
    use crate::pep::{assemble, compile};
    use crate::solve::{InteriorPoint, SdpBackend, SolveOptions, Status};
    use nalgebra::DMatrix;

    fn eq11() -> PepProblem<f64> {
        let t = build_ccd(2, 1, 0.5).unwrap();
        assemble(t, ClassParams::new(1.0).unwrap(), PerformanceCriterion::ObjectiveGap, InitialCondition::Init { radius: 1.0 })
            .unwrap()
    }

    #[test]
    fn zero_grams_give_origin() {
        let pb = eq11();
        let sdp = compile(&pb);
        let mut sol = SdpSolution::failed(&sdp, Status::Optimal, 0);
        sol.primal_value = 0.0;
        let w = reconstruct(&sol, &pb, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(w.ranks, vec![0, 0]);
        assert_eq!(w.criterion, 0.0);
        assert!(w.points.iter().all(|p| p.x.iter().all(Vec::is_empty)));
    }

    #[test]
    fn rank_one_blocks_are_one_dimensional() {
        let pb = eq11();
        let sdp = compile(&pb);
        let mut sol = SdpSolution::failed(&sdp, Status::Optimal, 0);
        let v = nalgebra::DVector::from_vec(vec![1.0, -0.5, 0.25, 2.0]);
        sol.grams = vec![&v * v.transpose(), &v * v.transpose() * 2.0];
        sol.free = vec![0.0; sdp.num_free];
        let w = reconstruct(&sol, &pb, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(w.ranks, vec![1, 1]);
        let x0 = w.atoms.coords(BlockId::new(1), AtomKind::InitialPoint).unwrap();
        assert!((x0[0].abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn indefinite_gram_is_rejected() {
        let pb = eq11();
        let sdp = compile(&pb);
        let mut sol = SdpSolution::failed(&sdp, Status::Optimal, 0);
        sol.grams[0] = DMatrix::from_diagonal_element(4, 4, -1.0);
        assert!(matches!(reconstruct(&sol, &pb, DEFAULT_RANK_TOL), Err(Error::IndefiniteGram { block: 1, .. })));
    }

    #[test]
    fn solved_witness_validates_and_csv_lists_atoms() {
        let pb = eq11();
        let sol = InteriorPoint.solve(&compile(&pb), &SolveOptions::default());
        let w = reconstruct(&sol, &pb, DEFAULT_RANK_TOL).unwrap();
        let rep = validate_lower_bound(&w, &pb, 1e-6);
        assert!(rep.pass, "{rep:?}");
        assert!((w.criterion - sol.primal_value).abs() < 1e-6);

        let mut bad = w.clone();
        bad.x0.iter_mut().flatten().for_each(|v| *v *= 1.01);
        let rep = validate_lower_bound(&bad, &pb, 1e-6);
        assert!(!rep.initial_condition_ok);

        let csv = w.to_csv();
        assert!(csv.starts_with("block,atom,point,coords\n1,x0,"));
        assert!(csv.contains("\npoint,f\n"));
        assert!(csv.trim_end().ends_with("*,0.0000000000000000e0"));
    }

    #[test]
    fn exact_min_witness_has_zero_block_gradients() {
        let t = build_am::<f64>(2, 2).unwrap();
        let pb = assemble(t, ClassParams::new(1.0).unwrap(), PerformanceCriterion::ObjectiveGap, InitialCondition::Init { radius: 1.0 })
            .unwrap();
        let sol = InteriorPoint.solve(&compile(&pb), &SolveOptions::default());
        let w = reconstruct(&sol, &pb, DEFAULT_RANK_TOL).unwrap();
        let br = pb.trajectory.branch();
        for (n, block) in br.sequence.iter().enumerate() {
            let k = br.iterate_points[n + 1].unwrap();
            let g = &w.points[k].g[block.slot()];
            assert!(g.iter().all(|v| v.abs() <= 1e-12));
        }
        let rep = validate_lower_bound(&w, &pb, 1e-6);
        assert!(rep.pass, "{rep:?} {}", sol.primal_value);
    }
}
