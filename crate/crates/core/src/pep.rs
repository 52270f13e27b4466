//! Worst-case problems over smooth convex functions and their Gram lift.
//!
//! The optimum is normalized to `x* = 0`, `g* = 0`, `f* = 0`, so every ball
//! constraint is a Gram diagonal and the optimum contributes no atoms.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::algos::Trajectory;
use crate::error::{Error, Result};
use crate::expr::{AtomKind, BlockId, FValVar, PointTag, QuadExpr};
use crate::interp::{interpolation_constraints, ClassParams, PairLabel};
use crate::scalar::Scalar;
use crate::solve::{SdpBackend, SdpConstraint, SdpProblem, SdpRow, SdpSolution, Sense, SolveOptions, Status};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PerformanceCriterion {
    /// `f(x^(N)) - f*`.
    ObjectiveGap,
    /// `||grad f(x^(N))||^2`.
    GradSqNorm,
    /// Uniform mean of `f(x^(N)) - f*` over all branches.
    EnsembleAverageGap,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum InitialCondition<S> {
    /// `||x^(0) - x*||^2 <= R^2`.
    Init { radius: S },
    /// `||x^(pk) - x*||^2 <= R^2` for the cycle endpoints `k = 1..=K`, and `k = 0`
    /// when `includes_x0` is set.
    All { radius: S, includes_x0: bool },
}

impl<S: Scalar> InitialCondition<S> {
    pub fn radius(&self) -> &S {
        match self {
            InitialCondition::Init { radius } | InitialCondition::All { radius, .. } => radius,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            InitialCondition::Init { .. } => "init",
            InitialCondition::All { .. } => "all",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ConstraintLabel {
    Interpolation(PairLabel),
    /// Ball constraint on iterate `x^(n)`.
    Ball { iterate: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Constraint<S> {
    pub label: ConstraintLabel,
    pub expr: QuadExpr<S>,
    pub sense: Sense,
}

/// A performance estimation problem: maximize `objective` subject to
/// `constraints` over all Gram matrices and function values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PepProblem<S> {
    pub trajectory: Trajectory<S>,
    pub class: ClassParams<S>,
    pub criterion: PerformanceCriterion,
    pub condition: InitialCondition<S>,
    pub constraints: Vec<Constraint<S>>,
    pub objective: QuadExpr<S>,
}

fn ball_iterates<S: Scalar>(trajectory: &Trajectory<S>, condition: &InitialCondition<S>) -> Result<Vec<usize>> {
    match condition {
        InitialCondition::Init { .. } => Ok(vec![0]),
        InitialCondition::All { includes_x0, .. } => {
            if trajectory.is_ensemble() {
                return Err(Error::Incompatible("setting ALL needs a single block sequence".into()));
            }
            let n = trajectory.steps();
            let p = trajectory.p;
            if n % p != 0 {
                return Err(Error::Incompatible(format!(
                    "setting ALL needs whole cycles, got {n} steps for {p} blocks"
                )));
            }
            let first = if *includes_x0 { 0 } else { 1 };
            Ok((first..=n / p).map(|k| k * p).collect())
        }
    }
}

pub fn assemble<S: Scalar + PartialOrd>(
    trajectory: Trajectory<S>,
    class: ClassParams<S>,
    criterion: PerformanceCriterion,
    condition: InitialCondition<S>,
) -> Result<PepProblem<S>> {
    let p = trajectory.p;
    if *condition.radius() < S::zero() {
        return Err(Error::InvalidSize("radius must be nonnegative".into()));
    }
    let objective = match criterion {
        PerformanceCriterion::ObjectiveGap | PerformanceCriterion::GradSqNorm if trajectory.is_ensemble() => {
            return Err(Error::Incompatible(format!(
                "{criterion:?} is defined for a single block sequence; use EnsembleAverageGap"
            )));
        }
        PerformanceCriterion::ObjectiveGap => {
            QuadExpr::fval(p, FValVar(PointTag::Point(trajectory.branch().final_point)))
        }
        PerformanceCriterion::GradSqNorm => {
            let final_pt = &trajectory.points[trajectory.branch().final_point];
            if &final_pt.x != trajectory.final_iterate() || final_pt.g.is_zero() {
                return Err(Error::Incompatible("final iterate carries no gradient".into()));
            }
            final_pt.g.sqnorm()
        }
        PerformanceCriterion::EnsembleAverageGap => {
            let w = S::one() / S::from_count(trajectory.branches.len());
            let terms: Vec<QuadExpr<S>> = trajectory
                .branches
                .iter()
                .map(|b| QuadExpr::fval(p, FValVar(PointTag::Point(b.final_point))))
                .collect();
            QuadExpr::lincomb(p, terms.iter().map(|t| (w.clone(), t)))
        }
    };

    let mut constraints: Vec<Constraint<S>> = interpolation_constraints(&trajectory.points_with_optimum(), &class)?
        .into_iter()
        .map(|(label, expr)| Constraint { label: ConstraintLabel::Interpolation(label), expr, sense: Sense::Le })
        .collect();

    let r = condition.radius().clone();
    let r2 = QuadExpr::constant_expr(p, r.clone() * r);
    for n in ball_iterates(&trajectory, &condition)? {
        let expr = &trajectory.branch().iterates[n].sqnorm() - &r2;
        constraints.push(Constraint { label: ConstraintLabel::Ball { iterate: n }, expr, sense: Sense::Le });
    }

    Ok(PepProblem { trajectory, class, criterion, condition, constraints, objective })
}

/// Maps atoms of each block to Gram indices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GramLayout {
    pub atoms: Vec<Vec<AtomKind>>,
}

impl GramLayout {
    pub fn dims(&self) -> Vec<usize> {
        self.atoms.iter().map(Vec::len).collect()
    }

    fn index_maps(&self) -> Vec<BTreeMap<AtomKind, usize>> {
        self.atoms.iter().map(|a| a.iter().enumerate().map(|(i, k)| (*k, i)).collect()).collect()
    }
}

impl<S: Scalar> PepProblem<S> {
    pub fn layout(&self) -> GramLayout {
        GramLayout { atoms: self.trajectory.atom_layout() }
    }

    /// Number of function-value variables; the optimum's value is fixed to zero.
    pub fn num_fvals(&self) -> usize {
        self.trajectory.points.len()
    }
}

fn lower_row<S: Scalar>(q: &QuadExpr<S>, maps: &[BTreeMap<AtomKind, usize>]) -> SdpRow {
    let blocks = maps
        .iter()
        .enumerate()
        .map(|(slot, map)| {
            let mut entries: Vec<(usize, usize, f64)> = q
                .quad_terms(BlockId::new(slot + 1))
                .iter()
                .map(|((a, b), c)| {
                    let (i, j) = (map[a], map[b]);
                    let (i, j) = if i <= j { (i, j) } else { (j, i) };
                    let v = if i == j { c.lower() } else { 0.5 * c.lower() };
                    (i, j, v)
                })
                .collect();
            entries.sort_by_key(|&(i, j, _)| (i, j));
            entries
        })
        .collect();
    let free = q
        .linear_terms()
        .iter()
        .filter_map(|(var, c)| match var.0 {
            PointTag::Point(k) => Some((k, c.lower())),
            PointTag::Optimum => None,
        })
        .collect();
    SdpRow { blocks, free, constant: q.constant().lower() }
}

/// Lowers the problem to a multi-block SDP: one Gram matrix per coordinate
/// block and one free variable per evaluated point's function value.
pub fn compile<S: Scalar>(problem: &PepProblem<S>) -> SdpProblem {
    let layout = problem.layout();
    let maps = layout.index_maps();
    SdpProblem {
        block_dims: layout.dims(),
        num_free: problem.num_fvals(),
        objective: lower_row(&problem.objective, &maps),
        constraints: problem
            .constraints
            .iter()
            .map(|c| SdpConstraint { row: lower_row(&c.expr, &maps), sense: c.sense })
            .collect(),
    }
}

#[derive(Clone, Debug)]
pub struct WorstCase {
    pub value: f64,
    pub sdp: SdpProblem,
    pub solution: SdpSolution,
}

/// Compiles and solves; statuses other than optimal and near-optimal become errors.
pub fn solve_worst_case<S: Scalar>(
    problem: &PepProblem<S>,
    backend: &dyn SdpBackend,
    options: &SolveOptions,
) -> Result<WorstCase> {
    let sdp = compile(problem);
    let solution = backend.solve(&sdp, options);
    match solution.status {
        Status::Optimal | Status::NearOptimal => {
            Ok(WorstCase { value: solution.primal_value, sdp, solution })
        }
        other => Err(Error::Solver(other.to_string())),
    }
}

/// A problem whose step coefficients are fixed numbers, so that only the
/// function class changes between the two solves of a sandwich.
#[derive(Clone, Debug)]
pub struct SandwichTemplate<S> {
    pub trajectory: Trajectory<S>,
    pub criterion: PerformanceCriterion,
    pub condition: InitialCondition<S>,
}

#[derive(Clone, Debug)]
pub struct Sandwich {
    pub l_min: f64,
    pub l_sum: f64,
    pub lower: WorstCase,
    pub upper: WorstCase,
}

/// Worst cases over `F_{min L_i}` and `F_{sum L_i}`, which bracket the worst
/// case over coordinate-wise smooth functions with constants `lvec`.
pub fn coordinate_sandwich<S: Scalar + PartialOrd>(
    lvec: &[S],
    template: &SandwichTemplate<S>,
    backend: &dyn SdpBackend,
    options: &SolveOptions,
) -> Result<Sandwich> {
    if lvec.len() != template.trajectory.p {
        return Err(Error::DimensionMismatch(format!(
            "{} smoothness constants for {} blocks",
            lvec.len(),
            template.trajectory.p
        )));
    }
    let (l_min, l_sum) = sandwich_constants(lvec)?;
    let solve_with = |l: S| -> Result<WorstCase> {
        let problem = assemble(
            template.trajectory.clone(),
            ClassParams::new(l)?,
            template.criterion,
            template.condition.clone(),
        )?;
        solve_worst_case(&problem, backend, options)
    };
    let lower = solve_with(l_min.clone())?;
    let upper = solve_with(l_sum.clone())?;
    Ok(Sandwich { l_min: l_min.lower(), l_sum: l_sum.lower(), lower, upper })
}

/// `(min_i L_i, sum_i L_i)`.
pub fn sandwich_constants<S: Scalar + PartialOrd>(lvec: &[S]) -> Result<(S, S)> {
    let mut it = lvec.iter();
    let first = it.next().ok_or_else(|| Error::InvalidSize("empty smoothness vector".into()))?;
    let mut l_min = first.clone();
    let mut l_sum = first.clone();
    for l in it {
        if *l < l_min {
            l_min = l.clone();
        }
        l_sum = l_sum + l.clone();
    }
    if !(l_min > S::zero()) {
        return Err(Error::NonPositiveSmoothness(l_min.lower()));
    }
    Ok((l_min, l_sum))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algos::{build_ccd, build_ensemble, StepRule, ThetaIndex, DEFAULT_ENSEMBLE_CAP};
    use crate::Rational;

    fn one() -> Rational {
        Rational::from_integer(1)
    }

    fn eq11() -> PepProblem<Rational> {
        let t = build_ccd(2, 1, Rational::new(1, 2)).unwrap();
        assemble(t, ClassParams::new(one()).unwrap(), PerformanceCriterion::ObjectiveGap, InitialCondition::Init { radius: one() })
            .unwrap()
    }

    #[test]
    fn two_block_one_cycle_instance() {
        let pb = eq11();
        let interp = pb.constraints.iter().filter(|c| matches!(c.label, ConstraintLabel::Interpolation(_))).count();
        assert_eq!(interp, 12);
        assert_eq!(pb.constraints.len(), 13);
        let ball = pb.constraints.last().unwrap();
        assert_eq!(ball.label, ConstraintLabel::Ball { iterate: 0 });
        let b1 = BlockId::new(1);
        assert_eq!(ball.expr.coefficient(b1, AtomKind::InitialPoint, AtomKind::InitialPoint), one());
        assert_eq!(*ball.expr.constant(), -one());
        assert_eq!(pb.objective, QuadExpr::fval(2, FValVar(PointTag::Point(2))));

        let sdp = compile(&pb);
        assert_eq!(sdp.block_dims, vec![4, 4]);
        assert_eq!(sdp.num_free, 3);
        assert_eq!(sdp.constraints.len(), 13);
    }

    #[test]
    fn all_setting_constrains_cycle_endpoints() {
        let k = 3;
        let t = build_ccd(2, k, Rational::new(1, 2)).unwrap();
        let pb = assemble(
            t.clone(),
            ClassParams::new(one()).unwrap(),
            PerformanceCriterion::ObjectiveGap,
            InitialCondition::All { radius: one(), includes_x0: true },
        )
        .unwrap();
        let balls: Vec<_> = pb.constraints.iter().filter_map(|c| match c.label {
            ConstraintLabel::Ball { iterate } => Some(iterate),
            _ => None,
        }).collect();
        assert_eq!(balls, vec![0, 2, 4, 6]);
        let pb = assemble(
            t,
            ClassParams::new(one()).unwrap(),
            PerformanceCriterion::ObjectiveGap,
            InitialCondition::All { radius: one(), includes_x0: false },
        )
        .unwrap();
        assert_eq!(pb.constraints.iter().filter(|c| matches!(c.label, ConstraintLabel::Ball { .. })).count(), k);
    }

    #[test]
    fn criteria_compatibility() {
        let t = build_ccd(2, 1, 0.5).unwrap();
        let pb = assemble(t, ClassParams::new(1.0).unwrap(), PerformanceCriterion::GradSqNorm, InitialCondition::Init { radius: 1.0 })
            .unwrap();
        let sdp = compile(&pb);
        assert!(sdp.objective.free.is_empty());
        assert!(sdp.objective.blocks.iter().all(|b| !b.is_empty()));

        let e = build_ensemble(2, 2, StepRule::Cacd { lipschitz: 1.0, theta_index: ThetaIndex::Prev }, DEFAULT_ENSEMBLE_CAP).unwrap();
        let params = ClassParams::new(1.0).unwrap();
        let init = InitialCondition::Init { radius: 1.0 };
        assert!(assemble(e.clone(), params.clone(), PerformanceCriterion::ObjectiveGap, init.clone()).is_err());
        assert!(assemble(e.clone(), params.clone(), PerformanceCriterion::EnsembleAverageGap, InitialCondition::All { radius: 1.0, includes_x0: true }).is_err());
        let pb = assemble(e, params, PerformanceCriterion::EnsembleAverageGap, init).unwrap();
        assert_eq!(pb.objective.linear_terms().len(), 4);
        assert!(pb.objective.linear_terms().values().all(|w| *w == 0.25));
    }

    #[test]
    fn single_block_compiles_to_one_gram() {
        let t = build_ccd(1, 2, 1.0).unwrap();
        let pb = assemble(t, ClassParams::new(1.0).unwrap(), PerformanceCriterion::ObjectiveGap, InitialCondition::Init { radius: 1.0 })
            .unwrap();
        assert_eq!(compile(&pb).block_dims, vec![4]);
    }

    #[test]
    fn compile_is_deterministic() {
        let a = compile(&eq11());
        let b = compile(&eq11());
        assert_eq!(format!("{a:?}"), format!("{b:?}"));
        assert_eq!(a, b);
    }

    #[test]
    fn sandwich_constants_of_vector() {
        assert_eq!(sandwich_constants(&[1.0, 1.0]).unwrap(), (1.0, 2.0));
        assert_eq!(sandwich_constants(&[3.0]).unwrap(), (3.0, 3.0));
        assert!(sandwich_constants::<f64>(&[]).is_err());
        assert!(sandwich_constants(&[1.0, 0.0]).is_err());
    }
}
