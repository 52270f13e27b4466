//! Symbolic trajectories of cyclic block-coordinate methods.
//!
//! A builder walks one or more block sequences and records, as expressions
//! over basis atoms, every iterate and every point at which a gradient is
//! queried. Sequences sharing a prefix share the corresponding points, which
//! is what the all-sequences ensemble relies on: all branches interpolate one
//! common function.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{AtomKind, BasisAtom, BlockId, BlockVectorExpr, FValVar, PointTag};
use crate::interp::EvaluatedPoint;
use crate::scalar::{RealScalar, Scalar};

/// Default cap on `p^N * N` for ensemble builds.
pub const DEFAULT_ENSEMBLE_CAP: usize = 128;

/// Block visited at each step.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    p: usize,
    sequence: Vec<BlockId>,
}

impl Schedule {
    /// Blocks `1, 2, ..., p` repeated `cycles` times.
    pub fn cyclic(p: usize, cycles: usize) -> Result<Self> {
        if p == 0 {
            return Err(Error::InvalidSize("p must be at least 1".into()));
        }
        let sequence = (0..p * cycles).map(|n| BlockId::new(n % p + 1)).collect();
        Ok(Schedule { p, sequence })
    }

    pub fn custom(p: usize, blocks: &[usize]) -> Result<Self> {
        if p == 0 {
            return Err(Error::InvalidSize("p must be at least 1".into()));
        }
        if blocks.is_empty() {
            return Err(Error::InvalidSize("sequence must be nonempty".into()));
        }
        let sequence = blocks.iter().map(|&b| BlockId::checked(b, p)).collect::<Result<_>>()?;
        Ok(Schedule { p, sequence })
    }

    pub fn blocks(&self) -> usize {
        self.p
    }

    pub fn sequence(&self) -> &[BlockId] {
        &self.sequence
    }

    pub fn len(&self) -> usize {
        self.sequence.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequence.is_empty()
    }

    pub fn is_cyclic(&self) -> bool {
        self.sequence.iter().enumerate().all(|(n, b)| b.index() == n % self.p + 1)
    }
}

/// Which `theta` value scales the accelerated z-step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum ThetaIndex {
    /// `1 / (p theta_{n-1} L)`, the value current at the start of the step.
    #[default]
    Prev,
    /// `1 / (p theta_n L)`, the value produced by the step's own update.
    Next,
}

/// `theta_0 = 1/p`, `theta_n = (sqrt(theta^4 + 4 theta^2) - theta^2) / 2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThetaSchedule<S> {
    values: Vec<S>,
}

impl<S: Scalar> ThetaSchedule<S> {
    pub fn values(&self) -> &[S] {
        &self.values
    }

    pub fn get(&self, n: usize) -> &S {
        &self.values[n]
    }
}

/// `theta_0..=theta_N` for `p` blocks.
pub fn theta_schedule<S: RealScalar>(p: usize, steps: usize) -> ThetaSchedule<S> {
    let mut values = Vec::with_capacity(steps + 1);
    let four = S::from_count(4);
    let two = S::from_count(2);
    let mut t = S::one() / S::from_count(p.max(1));
    values.push(t);
    for _ in 0..steps {
        let t2 = t * t;
        t = ((t2 * t2 + four * t2).sqrt() - t2) / two;
        values.push(t);
    }
    ThetaSchedule { values }
}

/// The per-step update applied along a block sequence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum StepRule<S> {
    /// `x <- x - alpha U_i grad_i f(x)`.
    Ccd { alpha: S },
    /// Exact minimization over block `i`.
    ExactMin,
    /// The cyclic accelerated scheme with step constant `lipschitz`.
    Cacd { lipschitz: S, theta_index: ThetaIndex },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Method<S> {
    Ccd { alpha: S },
    Am,
    Cacd { lipschitz: S, theta: ThetaSchedule<S>, theta_index: ThetaIndex },
}

impl<S: Scalar> Method<S> {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Ccd { .. } => "ccd",
            Method::Am => "am",
            Method::Cacd { .. } => "cacd",
        }
    }
}

/// One block sequence through the trajectory tree.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Branch<S> {
    pub sequence: Vec<BlockId>,
    /// `x^(0), ..., x^(N)`.
    pub iterates: Vec<BlockVectorExpr<S>>,
    /// `z^(0), ..., z^(N)`; empty except for the accelerated scheme.
    pub z_iterates: Vec<BlockVectorExpr<S>>,
    /// Point whose gradient drives step `n` (entry `n - 1`).
    pub eval_points: Vec<usize>,
    /// Point located at `x^(n)`, when `x^(n)` is an evaluated point.
    pub iterate_points: Vec<Option<usize>>,
    /// Point located at `x^(N)`.
    pub final_point: usize,
}

impl<S> Branch<S> {
    pub fn steps(&self) -> usize {
        self.sequence.len()
    }
}

/// Points, iterates and update structure of a method run symbolically.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory<S> {
    pub p: usize,
    pub method: Method<S>,
    /// Evaluated points; entry `k` carries tag `PointTag::Point(k)`. The optimum is not listed.
    pub points: Vec<EvaluatedPoint<S>>,
    pub branches: Vec<Branch<S>>,
}

impl<S: Scalar> Trajectory<S> {
    pub fn is_ensemble(&self) -> bool {
        self.branches.len() > 1
    }

    /// The single branch of a deterministic trajectory.
    pub fn branch(&self) -> &Branch<S> {
        &self.branches[0]
    }

    pub fn steps(&self) -> usize {
        self.branches[0].steps()
    }

    pub fn final_iterate(&self) -> &BlockVectorExpr<S> {
        self.branches[0].iterates.last().expect("at least x^(0)")
    }

    /// Evaluated points followed by the optimum.
    pub fn points_with_optimum(&self) -> Vec<EvaluatedPoint<S>> {
        let mut pts = self.points.clone();
        pts.push(EvaluatedPoint::optimum(self.p));
        pts
    }

    /// Atoms referenced by any point or iterate, per block, in layout order.
    pub fn atom_layout(&self) -> Vec<Vec<AtomKind>> {
        let mut sets = vec![BTreeSet::new(); self.p];
        let mut collect = |v: &BlockVectorExpr<S>| {
            for (atom, _) in v.terms() {
                sets[atom.block.slot()].insert(atom.kind);
            }
        };
        for pt in &self.points {
            collect(&pt.x);
            collect(&pt.g);
        }
        for b in &self.branches {
            b.iterates.iter().chain(&b.z_iterates).for_each(&mut collect);
        }
        sets.into_iter().map(|s| s.into_iter().collect()).collect()
    }
}

enum Rule<S> {
    Ccd { alpha: S },
    Am,
    Cacd { lipschitz: S, theta: ThetaSchedule<S>, theta_index: ThetaIndex },
}

struct Node<S> {
    x: BlockVectorExpr<S>,
    z: Option<BlockVectorExpr<S>>,
    /// Point at `x` (gradient steps) or at `y` (accelerated scheme).
    eval_point: Option<usize>,
    x_point: Option<usize>,
}

struct TreeBuilder<S> {
    p: usize,
    rule: Rule<S>,
    points: Vec<EvaluatedPoint<S>>,
    nodes: BTreeMap<Vec<BlockId>, Node<S>>,
}

impl<S: Scalar> TreeBuilder<S> {
    fn new(p: usize, rule: Rule<S>) -> Self {
        let x0 = BlockVectorExpr::spanning(p, AtomKind::InitialPoint);
        let mut b = TreeBuilder { p, rule, points: Vec::new(), nodes: BTreeMap::new() };
        let z = matches!(b.rule, Rule::Cacd { .. }).then(|| x0.clone());
        let mut root = Node { x: x0, z, eval_point: None, x_point: None };
        if !matches!(b.rule, Rule::Cacd { .. }) {
            let k = b.push_point(root.x.clone(), &[]);
            root.eval_point = Some(k);
            root.x_point = Some(k);
        }
        b.nodes.insert(Vec::new(), root);
        b
    }

    fn push_point(&mut self, x: BlockVectorExpr<S>, zero_blocks: &[BlockId]) -> usize {
        let k = self.points.len();
        self.points.push(EvaluatedPoint {
            tag: PointTag::Point(k),
            x,
            g: BlockVectorExpr::spanning_except(self.p, AtomKind::Gradient(k), zero_blocks),
            f: FValVar(PointTag::Point(k)),
        });
        k
    }

    /// Makes sure the node at `prefix` has the point that drives its children.
    fn ensure_eval_point(&mut self, prefix: &[BlockId]) -> usize {
        if let Some(k) = self.nodes[prefix].eval_point {
            return k;
        }
        let depth = prefix.len();
        let node = &self.nodes[prefix];
        let y = match &self.rule {
            Rule::Cacd { theta, .. } => {
                let t = theta.get(depth).clone();
                let z = node.z.as_ref().expect("accelerated node carries z");
                BlockVectorExpr::lincomb(self.p, [(S::one() - t.clone(), &node.x), (t, z)])
            }
            _ => unreachable!("gradient-step nodes get their point on creation"),
        };
        let k = self.push_point(y, &[]);
        self.nodes.get_mut(prefix).unwrap().eval_point = Some(k);
        k
    }

    fn child(&mut self, prefix: &[BlockId], block: BlockId) -> Vec<BlockId> {
        let mut next = prefix.to_vec();
        next.push(block);
        if self.nodes.contains_key(&next) {
            return next;
        }
        let k = self.ensure_eval_point(prefix);
        let depth = prefix.len();
        let p = self.p;
        let g = self.points[k].g.restrict(block).expect("block in range");
        let node = &self.nodes[prefix];
        let child = match &self.rule {
            Rule::Ccd { alpha } => {
                let x = BlockVectorExpr::lincomb(p, [(S::one(), &node.x), (-alpha.clone(), &g)]);
                Node { x, z: None, eval_point: None, x_point: None }
            }
            Rule::Am => {
                let step = self.points.len();
                let d = BlockVectorExpr::atom(p, BasisAtom { kind: AtomKind::FreeDirection(step), block });
                Node { x: &node.x + &d, z: None, eval_point: None, x_point: None }
            }
            Rule::Cacd { lipschitz, theta, theta_index } => {
                let t = theta.get(depth).clone();
                let t_z = match theta_index {
                    ThetaIndex::Prev => t.clone(),
                    ThetaIndex::Next => theta.get(depth + 1).clone(),
                };
                let pc = S::from_count(p);
                let zc = S::one() / (pc.clone() * t_z * lipschitz.clone());
                let z_old = node.z.as_ref().expect("accelerated node carries z");
                let z = BlockVectorExpr::lincomb(p, [(S::one(), z_old), (-zc, &g)]);
                let y = &self.points[k].x;
                let x = BlockVectorExpr::lincomb(p, [(S::one(), y), (pc * t, &(&z - z_old))]);
                Node { x, z: Some(z), eval_point: None, x_point: None }
            }
        };
        let mut child = child;
        match self.rule {
            Rule::Ccd { .. } => {
                let kp = self.push_point(child.x.clone(), &[]);
                child.eval_point = Some(kp);
                child.x_point = Some(kp);
            }
            Rule::Am => {
                let kp = self.push_point(child.x.clone(), &[block]);
                child.eval_point = Some(kp);
                child.x_point = Some(kp);
            }
            Rule::Cacd { .. } => {}
        }
        self.nodes.insert(next.clone(), child);
        next
    }

    fn walk(&mut self, sequence: &[BlockId]) -> Branch<S> {
        let mut prefix: Vec<BlockId> = Vec::new();
        let mut eval_points = Vec::with_capacity(sequence.len());
        for &b in sequence {
            eval_points.push(self.ensure_eval_point(&prefix));
            prefix = self.child(&prefix, b);
        }
        if self.nodes[&prefix].x_point.is_none() {
            let x = self.nodes[&prefix].x.clone();
            let k = self.push_point(x, &[]);
            self.nodes.get_mut(&prefix).unwrap().x_point = Some(k);
        }
        let path: Vec<&Node<S>> = (0..=sequence.len()).map(|n| &self.nodes[&sequence[..n]]).collect();
        Branch {
            sequence: sequence.to_vec(),
            iterates: path.iter().map(|n| n.x.clone()).collect(),
            z_iterates: path.iter().filter_map(|n| n.z.clone()).collect(),
            eval_points,
            iterate_points: path.iter().map(|n| n.x_point).collect(),
            final_point: path.last().and_then(|n| n.x_point).expect("leaf point created"),
        }
    }

    fn finish(mut self, sequences: &[Vec<BlockId>]) -> Trajectory<S> {
        let branches = sequences.iter().map(|s| self.walk(s)).collect();
        let method = match self.rule {
            Rule::Ccd { alpha } => Method::Ccd { alpha },
            Rule::Am => Method::Am,
            Rule::Cacd { lipschitz, theta, theta_index } => Method::Cacd { lipschitz, theta, theta_index },
        };
        Trajectory { p: self.p, method, points: self.points, branches }
    }
}

fn check_blocks(p: usize) -> Result<()> {
    if p == 0 {
        return Err(Error::InvalidSize("p must be at least 1".into()));
    }
    Ok(())
}

fn check_step<S: Scalar + PartialOrd>(alpha: &S) -> Result<()> {
    if *alpha < S::zero() {
        return Err(Error::InvalidSize(format!("step size must be nonnegative, got {alpha:?}")));
    }
    Ok(())
}

fn check_lipschitz<S: Scalar + PartialOrd>(l: &S) -> Result<()> {
    if !(*l > S::zero()) {
        return Err(Error::NonPositiveSmoothness(l.lower()));
    }
    Ok(())
}

/// Cyclic coordinate descent with step `alpha` for `cycles` cycles.
///
/// `cycles = 0` gives the trivial trajectory `{x^(0)}`.
pub fn build_ccd<S: Scalar + PartialOrd>(p: usize, cycles: usize, alpha: S) -> Result<Trajectory<S>> {
    check_blocks(p)?;
    check_step(&alpha)?;
    let schedule = Schedule::cyclic(p, cycles)?;
    Ok(TreeBuilder::new(p, Rule::Ccd { alpha }).finish(&[schedule.sequence]))
}

/// Cyclic alternating minimization. Step `n` adds a free direction in block
/// `i_n` and pins the block-`i_n` gradient of `x^(n)` to zero.
pub fn build_am<S: Scalar>(p: usize, cycles: usize) -> Result<Trajectory<S>> {
    if p < 2 {
        return Err(Error::InvalidSize(format!("alternating minimization needs p >= 2, got {p}")));
    }
    let schedule = Schedule::cyclic(p, cycles)?;
    Ok(TreeBuilder::new(p, Rule::Am).finish(&[schedule.sequence]))
}

/// The cyclic accelerated scheme. Gradients are queried at `y^(0..N-1)`; the
/// points are those `y` followed by `x^(N)`.
pub fn build_cacd<S: RealScalar>(
    p: usize,
    cycles: usize,
    lipschitz: S,
    theta_index: ThetaIndex,
) -> Result<Trajectory<S>> {
    check_blocks(p)?;
    check_lipschitz(&lipschitz)?;
    let schedule = Schedule::cyclic(p, cycles)?;
    build_sequences(p, &[schedule.sequence], StepRule::Cacd { lipschitz, theta_index })
}

/// Any rule along an arbitrary block sequence.
pub fn build_custom<S: RealScalar>(schedule: &Schedule, rule: StepRule<S>) -> Result<Trajectory<S>> {
    if schedule.is_empty() {
        return Err(Error::InvalidSize("sequence must be nonempty".into()));
    }
    build_sequences(schedule.blocks(), &[schedule.sequence.clone()], rule)
}

/// All `p^N` block sequences of length `N`, sharing the initial point and the
/// optimum, with prefix-shared intermediate points.
pub fn build_ensemble<S: RealScalar>(p: usize, steps: usize, rule: StepRule<S>, cap: usize) -> Result<Trajectory<S>> {
    check_blocks(p)?;
    let branches = p
        .checked_pow(u32::try_from(steps).map_err(|_| Error::InvalidSize("too many steps".into()))?)
        .ok_or(Error::CapExceeded { points: usize::MAX, cap })?;
    let load = branches.saturating_mul(steps.max(1));
    if load > cap {
        return Err(Error::CapExceeded { points: load, cap });
    }
    let sequences: Vec<Vec<BlockId>> = (0..branches)
        .map(|mut code| {
            let mut seq = vec![BlockId::new(1); steps];
            for slot in seq.iter_mut().rev() {
                *slot = BlockId::new(code % p + 1);
                code /= p;
            }
            seq
        })
        .collect();
    build_sequences(p, &sequences, rule)
}

fn build_sequences<S: RealScalar>(p: usize, sequences: &[Vec<BlockId>], rule: StepRule<S>) -> Result<Trajectory<S>> {
    check_blocks(p)?;
    let steps = sequences.iter().map(Vec::len).max().unwrap_or(0);
    let rule = match rule {
        StepRule::Ccd { alpha } => {
            check_step(&alpha)?;
            Rule::Ccd { alpha }
        }
        StepRule::ExactMin => Rule::Am,
        StepRule::Cacd { lipschitz, theta_index } => {
            check_lipschitz(&lipschitz)?;
            Rule::Cacd { lipschitz, theta: theta_schedule(p, steps + 1), theta_index }
        }
    };
    Ok(TreeBuilder::new(p, rule).finish(sequences))
}
