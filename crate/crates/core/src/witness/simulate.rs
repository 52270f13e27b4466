use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::algos::{theta_schedule, Schedule, StepRule, ThetaIndex};
use crate::error::{Error, Result};

const BLOCK_SEARCH_TOL: f64 = 1e-12;
const BLOCK_SEARCH_MAX_ITERS: usize = 1_000_000;

/// A deterministic first-order oracle on a block-partitioned space.
pub trait ConcreteFunction: Send + Sync {
    fn block_dims(&self) -> &[usize];

    fn value_and_gradient(&self, x: &[f64]) -> (f64, Vec<f64>);

    fn lipschitz(&self) -> f64;

    fn block_lipschitz(&self) -> Vec<f64>;

    /// Minimizer and minimum value, when known.
    fn minimum(&self) -> Option<(Vec<f64>, f64)>;

    fn as_quadratic(&self) -> Option<&Quadratic> {
        None
    }
}

/// `f(x) = x'Qx/2 + q'x` with `Q` symmetric PSD.
#[derive(Clone, Debug, PartialEq)]
pub struct Quadratic {
    q: DMatrix<f64>,
    lin: DVector<f64>,
    blocks: Vec<usize>,
    lipschitz: f64,
    block_lipschitz: Vec<f64>,
    minimum: Option<(Vec<f64>, f64)>,
}

fn offsets(blocks: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(blocks.len() + 1);
    out.push(0);
    for b in blocks {
        out.push(out.last().unwrap() + b);
    }
    out
}

impl Quadratic {
    pub fn new(q: DMatrix<f64>, lin: DVector<f64>, blocks: Vec<usize>) -> Result<Self> {
        let n = q.nrows();
        if q.ncols() != n || lin.len() != n || blocks.iter().sum::<usize>() != n || blocks.contains(&0) {
            return Err(Error::DimensionMismatch(format!(
                "matrix {}x{}, linear term {}, blocks {blocks:?}",
                q.nrows(),
                q.ncols(),
                lin.len()
            )));
        }
        if q.iter().chain(lin.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(0));
        }
        if (&q - q.transpose()).amax() > 1e-12 * q.amax().max(1.0) {
            return Err(Error::InvalidSize("quadratic matrix is not symmetric".into()));
        }
        let eig = SymmetricEigen::new(q.clone());
        let top = eig.eigenvalues.max();
        if eig.eigenvalues.min() < -1e-12 * top.abs().max(1.0) {
            return Err(Error::InvalidSize("quadratic is not convex".into()));
        }
        if !(top > 0.0) {
            return Err(Error::NonPositiveSmoothness(top));
        }
        let off = offsets(&blocks);
        let block_lipschitz = (0..blocks.len())
            .map(|i| q.view((off[i], off[i]), (blocks[i], blocks[i])).into_owned().symmetric_eigenvalues().max())
            .collect();
        // minimizer through the pseudo-inverse; absent when q is not in the range of Q
        let svd = q.clone().svd(true, true);
        let minimum = svd.solve(&(-&lin), 1e-12 * top).ok().and_then(|xs| {
            let resid = (&q * &xs + &lin).norm();
            (resid <= 1e-9 * (1.0 + lin.norm())).then(|| {
                let v = 0.5 * xs.dot(&(&q * &xs)) + lin.dot(&xs);
                (xs.as_slice().to_vec(), v)
            })
        });
        Ok(Quadratic { q, lin, blocks, lipschitz: top, block_lipschitz, minimum })
    }

    /// `(x - y)^2 + eps (x^2 + y^2)` on two scalar blocks.
    pub fn f_eps(eps: f64) -> Result<Self> {
        let d = 2.0 + 2.0 * eps;
        Quadratic::new(DMatrix::from_row_slice(2, 2, &[d, -2.0, -2.0, d]), DVector::zeros(2), vec![1, 1])
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.q
    }

    /// `max { ||x - x*|| : f(x) <= f(x0) }`, infinite when `Q` is singular.
    pub fn level_set_radius(&self, x0: &[f64]) -> f64 {
        let Some((_, fstar)) = &self.minimum else { return f64::INFINITY };
        let low = self.q.clone().symmetric_eigenvalues().min();
        if !(low > 0.0) {
            return f64::INFINITY;
        }
        let (f0, _) = self.value_and_gradient(x0);
        (2.0 * (f0 - fstar) / low).sqrt()
    }

    fn block_minimize(&self, x: &mut [f64], off: &[usize], i: usize) -> Result<()> {
        let (a, len) = (off[i], self.blocks[i]);
        let n = x.len();
        let xv = DVector::from_column_slice(x);
        let mut rhs = -self.lin.rows(a, len).into_owned();
        for j in (0..n).filter(|j| *j < a || *j >= a + len) {
            rhs -= self.q.view((a, j), (len, 1)) * xv[j];
        }
        let qii = self.q.view((a, a), (len, len)).into_owned();
        let scale = qii.amax().max(f64::MIN_POSITIVE);
        let sol = qii
            .svd(true, true)
            .solve(&rhs, 1e-12 * scale)
            .map_err(|e| Error::Solver(format!("block minimization: {e}")))?;
        x[a..a + len].copy_from_slice(sol.as_slice());
        Ok(())
    }
}

impl ConcreteFunction for Quadratic {
    fn block_dims(&self) -> &[usize] {
        &self.blocks
    }

    fn value_and_gradient(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let xv = DVector::from_column_slice(x);
        let qx = &self.q * &xv;
        let g = &qx + &self.lin;
        (0.5 * xv.dot(&qx) + self.lin.dot(&xv), g.as_slice().to_vec())
    }

    fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    fn block_lipschitz(&self) -> Vec<f64> {
        self.block_lipschitz.clone()
    }

    fn minimum(&self) -> Option<(Vec<f64>, f64)> {
        self.minimum.clone()
    }

    fn as_quadratic(&self) -> Option<&Quadratic> {
        Some(self)
    }
}

/// Iterates `x^(0..N)` with their objective gaps, squared gradient norms and
/// distances to the minimizer.
#[derive(Clone, Debug, PartialEq)]
pub struct SimRun {
    pub iterates: Vec<Vec<f64>>,
    pub f_gaps: Vec<f64>,
    pub grad_sq_norms: Vec<f64>,
    pub distances: Vec<f64>,
}

fn oracle(f: &dyn ConcreteFunction, x: &[f64], step: usize) -> Result<(f64, Vec<f64>)> {
    let (v, g) = f.value_and_gradient(x);
    if !v.is_finite() || g.iter().any(|c| !c.is_finite()) {
        return Err(Error::NonFinite(step));
    }
    Ok((v, g))
}

/// Minimizes over block `i` by gradient steps of size `1/L_i`.
fn block_search(f: &dyn ConcreteFunction, x: &mut [f64], range: std::ops::Range<usize>, li: f64, step: usize) -> Result<()> {
    for _ in 0..BLOCK_SEARCH_MAX_ITERS {
        let (_, g) = oracle(f, x, step)?;
        let gi = &g[range.clone()];
        if gi.iter().map(|v| v * v).sum::<f64>().sqrt() <= BLOCK_SEARCH_TOL {
            return Ok(());
        }
        for (xj, gj) in x[range.clone()].iter_mut().zip(gi) {
            *xj -= gj / li;
        }
    }
    Err(Error::Solver(format!("block search did not converge at step {step}")))
}

/// Runs `rule` along `schedule` from `x0`.
pub fn simulate(f: &dyn ConcreteFunction, schedule: &Schedule, rule: &StepRule<f64>, x0: &[f64]) -> Result<SimRun> {
    let dims = f.block_dims().to_vec();
    if dims.len() != schedule.blocks() {
        return Err(Error::DimensionMismatch(format!(
            "oracle has {} blocks, schedule has {}",
            dims.len(),
            schedule.blocks()
        )));
    }
    let n = dims.iter().sum::<usize>();
    if x0.len() != n {
        return Err(Error::DimensionMismatch(format!("x0 has {} coordinates, oracle expects {n}", x0.len())));
    }
    let (xstar, fstar) = f.minimum().ok_or_else(|| Error::Incompatible("function has no known minimizer".into()))?;
    let off = offsets(&dims);
    let p = dims.len();
    let steps = schedule.len();
    let theta = theta_schedule::<f64>(p, steps + 1);
    let li = f.block_lipschitz();

    let mut x = x0.to_vec();
    let mut z = x0.to_vec();
    let mut iterates = vec![x.clone()];
    for (n, block) in schedule.sequence().iter().enumerate() {
        let i = block.slot();
        let range = off[i]..off[i + 1];
        match rule {
            StepRule::Ccd { alpha } => {
                let (_, g) = oracle(f, &x, n)?;
                for j in range {
                    x[j] -= alpha * g[j];
                }
            }
            StepRule::ExactMin => match f.as_quadratic() {
                Some(q) => q.block_minimize(&mut x, &off, i)?,
                None => block_search(f, &mut x, range, li[i], n)?,
            },
            StepRule::Cacd { lipschitz, theta_index } => {
                let t = *theta.get(n);
                let tz = match theta_index {
                    ThetaIndex::Prev => t,
                    ThetaIndex::Next => *theta.get(n + 1),
                };
                let y: Vec<f64> = x.iter().zip(&z).map(|(a, b)| (1.0 - t) * a + t * b).collect();
                let (_, g) = oracle(f, &y, n)?;
                let c = 1.0 / (p as f64 * tz * lipschitz);
                let mut z_new = z.clone();
                for j in range {
                    z_new[j] -= c * g[j];
                }
                x = y.iter().zip(z_new.iter().zip(&z)).map(|(a, (b, c))| a + p as f64 * t * (b - c)).collect();
                z = z_new;
            }
        }
        iterates.push(x.clone());
    }

    let mut f_gaps = Vec::with_capacity(iterates.len());
    let mut grad_sq_norms = Vec::with_capacity(iterates.len());
    let mut distances = Vec::with_capacity(iterates.len());
    for (n, it) in iterates.iter().enumerate() {
        let (v, g) = oracle(f, it, n)?;
        f_gaps.push(v - fstar);
        grad_sq_norms.push(g.iter().map(|c| c * c).sum());
        distances.push(it.iter().zip(&xstar).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt());
    }
    Ok(SimRun { iterates, f_gaps, grad_sq_norms, distances })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f_eps_constants() {
        let f = Quadratic::f_eps(0.01).unwrap();
        assert!((f.lipschitz() - 4.02).abs() < 1e-12);
        assert_eq!(f.block_lipschitz(), vec![2.02, 2.02]);
        let (xs, v) = f.minimum().unwrap();
        assert!(xs.iter().all(|c| c.abs() < 1e-12) && v.abs() < 1e-15);
    }

    #[test]
    fn f_eps_level_set_radius() {
        // along (1,1)/sqrt(2) f = eps t^2, so R^2 = f(x0)/eps = (4 + 2 eps)/eps
        for eps in [0.01, 0.1, 1.0] {
            let f = Quadratic::f_eps(eps).unwrap();
            let r = f.level_set_radius(&[1.0, -1.0]);
            assert!((r * r - (4.0 + 2.0 * eps) / eps).abs() < 1e-9 * r * r);
            // same order as 1/sqrt(eps)
            assert!(r * eps.sqrt() >= 2.0 && r * eps.sqrt() < 2.5);
        }
    }

    #[test]
    fn ccd_gaps_do_not_increase() {
        let f = Quadratic::f_eps(0.01).unwrap();
        let sched = Schedule::cyclic(2, 20).unwrap();
        let run = simulate(&f, &sched, &StepRule::Ccd { alpha: 1.0 / f.lipschitz() }, &[1.0, -1.0]).unwrap();
        assert_eq!(run.iterates.len(), 41);
        assert!(run.f_gaps.windows(2).all(|w| w[1] <= w[0] + 1e-15));
    }

    #[test]
    fn zero_step_stays_put() {
        let f = Quadratic::f_eps(0.5).unwrap();
        let run = simulate(&f, &Schedule::cyclic(2, 3).unwrap(), &StepRule::Ccd { alpha: 0.0 }, &[0.3, 2.0]).unwrap();
        assert!(run.iterates.iter().all(|x| x == &vec![0.3, 2.0]));
    }

    #[test]
    fn exact_min_zeroes_block_gradient() {
        let q = DMatrix::from_row_slice(3, 3, &[3.0, 1.0, 0.5, 1.0, 2.0, 0.0, 0.5, 0.0, 1.0]);
        let f = Quadratic::new(q, DVector::from_vec(vec![1.0, -1.0, 0.5]), vec![2, 1]).unwrap();
        let run = simulate(&f, &Schedule::cyclic(2, 2).unwrap(), &StepRule::ExactMin, &[1.0, 1.0, 1.0]).unwrap();
        let (_, g) = f.value_and_gradient(&run.iterates[1]);
        assert!(g[0].abs() < 1e-12 && g[1].abs() < 1e-12);
        let (_, g) = f.value_and_gradient(&run.iterates[2]);
        assert!(g[2].abs() < 1e-12);
    }

    struct Oracle(Quadratic);

    impl ConcreteFunction for Oracle {
        fn block_dims(&self) -> &[usize] {
            self.0.block_dims()
        }
        fn value_and_gradient(&self, x: &[f64]) -> (f64, Vec<f64>) {
            self.0.value_and_gradient(x)
        }
        fn lipschitz(&self) -> f64 {
            self.0.lipschitz()
        }
        fn block_lipschitz(&self) -> Vec<f64> {
            self.0.block_lipschitz()
        }
        fn minimum(&self) -> Option<(Vec<f64>, f64)> {
            self.0.minimum()
        }
    }

    #[test]
    fn block_search_matches_exact_minimization() {
        let f = Quadratic::f_eps(0.2).unwrap();
        let sched = Schedule::cyclic(2, 3).unwrap();
        let exact = simulate(&f, &sched, &StepRule::ExactMin, &[1.0, -1.0]).unwrap();
        let searched = simulate(&Oracle(f), &sched, &StepRule::ExactMin, &[1.0, -1.0]).unwrap();
        for (a, b) in exact.iterates.iter().zip(&searched.iterates) {
            assert!((a[0] - b[0]).abs() < 1e-10 && (a[1] - b[1]).abs() < 1e-10);
        }
    }

    #[test]
    fn rejects_mismatched_start_and_bad_matrices() {
        let f = Quadratic::f_eps(0.1).unwrap();
        assert!(simulate(&f, &Schedule::cyclic(2, 1).unwrap(), &StepRule::ExactMin, &[1.0]).is_err());
        let nonconvex = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(Quadratic::new(nonconvex, DVector::zeros(2), vec![1, 1]).is_err());
    }
}
