//! Dense primal-dual interior-point method on the homogeneous self-dual
//! embedding, with Nesterov-Todd scaling and Mehrotra correction.
//!
//! The SDP is rewritten as the conic program
//!
//! ```text
//! minimize c'x  s.t.  G x + s = h,  A x = b,  s in R_+^m x S_+^{d_1} x ... x S_+^{d_p}
//! ```
//!
//! with `x = (svec X_1, ..., svec X_p, f)`. The PSD rows of `G` are `-I`, so the
//! Newton system reduces to a dense normal matrix of order `dim x`.

use std::collections::BTreeMap;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SVD};

use super::{SdpBackend, SdpProblem, SdpSolution, Sense, SolveOptions, Status};

const SQRT2: f64 = std::f64::consts::SQRT_2;
const STEP_FRACTION: f64 = 0.99;

/// The built-in dense backend.
#[derive(Clone, Copy, Debug, Default)]
pub struct InteriorPoint;

impl SdpBackend for InteriorPoint {
    fn name(&self) -> &str {
        "ipm"
    }

    fn solve(&self, problem: &SdpProblem, options: &SolveOptions) -> SdpSolution {
        let conic = Conic::from_sdp(problem);
        conic.solve(problem, options)
    }
}

fn svec_len(d: usize) -> usize {
    d * (d + 1) / 2
}

/// Column-major upper-triangle position of `(i, j)`, `i <= j`.
fn svec_index(i: usize, j: usize) -> usize {
    j * (j + 1) / 2 + i
}

fn smat(v: &[f64], d: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(d, d);
    for j in 0..d {
        for i in 0..=j {
            let x = v[svec_index(i, j)];
            if i == j {
                m[(i, i)] = x;
            } else {
                m[(i, j)] = x / SQRT2;
                m[(j, i)] = x / SQRT2;
            }
        }
    }
    m
}

fn svec_into(m: &DMatrix<f64>, out: &mut [f64]) {
    let d = m.nrows();
    for j in 0..d {
        for i in 0..=j {
            out[svec_index(i, j)] = if i == j { m[(i, i)] } else { SQRT2 * 0.5 * (m[(i, j)] + m[(j, i)]) };
        }
    }
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    let t = m.transpose();
    (m + t) * 0.5
}

type SparseRow = Vec<(usize, f64)>;

fn sparse_dot(row: &SparseRow, x: &DVector<f64>) -> f64 {
    row.iter().map(|&(k, v)| v * x[k]).sum()
}

struct Iterate {
    x: DVector<f64>,
    y: DVector<f64>,
    s: ConeVec,
    z: ConeVec,
    tau: f64,
    residuals: (f64, f64, f64),
}

#[derive(Clone, Copy, Debug)]
struct Block {
    offset: usize,
    dim: usize,
}

/// Element of the product cone (or its ambient space).
#[derive(Clone, Debug)]
struct ConeVec {
    lp: DVector<f64>,
    psd: Vec<DMatrix<f64>>,
}

impl ConeVec {
    fn identity(nlp: usize, blocks: &[Block]) -> Self {
        ConeVec { lp: DVector::from_element(nlp, 1.0), psd: blocks.iter().map(|b| DMatrix::identity(b.dim, b.dim)).collect() }
    }

    fn dot(&self, other: &ConeVec) -> f64 {
        self.lp.dot(&other.lp) + self.psd.iter().zip(&other.psd).map(|(a, b)| a.dot(b)).sum::<f64>()
    }

    fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    fn axpy(&mut self, a: f64, other: &ConeVec) {
        self.lp.axpy(a, &other.lp, 1.0);
        for (x, y) in self.psd.iter_mut().zip(&other.psd) {
            *x += y * a;
        }
    }

    fn scaled(&self, a: f64) -> ConeVec {
        ConeVec { lp: &self.lp * a, psd: self.psd.iter().map(|m| m * a).collect() }
    }

    fn sub(&self, other: &ConeVec) -> ConeVec {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }
}

struct Conic {
    n: usize,
    c: DVector<f64>,
    g: Vec<SparseRow>,
    h: DVector<f64>,
    a: Vec<SparseRow>,
    b: DVector<f64>,
    blocks: Vec<Block>,
    free_offset: usize,
    /// Original constraint index and row scale of each inequality / equality.
    lp_origin: Vec<(usize, f64)>,
    eq_origin: Vec<(usize, f64)>,
}

fn row_norm(row: &SparseRow) -> f64 {
    row.iter().map(|(_, v)| v * v).sum::<f64>().sqrt()
}

impl Conic {
    fn from_sdp(problem: &SdpProblem) -> Self {
        let mut blocks = Vec::with_capacity(problem.block_dims.len());
        let mut offset = 0;
        for &dim in &problem.block_dims {
            blocks.push(Block { offset, dim });
            offset += svec_len(dim);
        }
        let free_offset = offset;
        let n = offset + problem.num_free;

        let lower = |row: &super::SdpRow| -> SparseRow {
            let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
            for (blk, entries) in blocks.iter().zip(&row.blocks) {
                for &(r, c, v) in entries {
                    let (i, j) = if r <= c { (r, c) } else { (c, r) };
                    let w = if i == j { v } else { SQRT2 * v };
                    *acc.entry(blk.offset + svec_index(i, j)).or_default() += w;
                }
            }
            for &(k, v) in &row.free {
                *acc.entry(free_offset + k).or_default() += v;
            }
            acc.into_iter().filter(|(_, v)| *v != 0.0).collect()
        };

        let mut c = DVector::zeros(n);
        for (k, v) in lower(&problem.objective) {
            c[k] = -v;
        }

        let (mut g, mut h, mut a, mut b) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        let (mut lp_origin, mut eq_origin) = (Vec::new(), Vec::new());
        for (j, con) in problem.constraints.iter().enumerate() {
            let row = lower(&con.row);
            let norm = row_norm(&row);
            let scale = if norm > 0.0 { 1.0 / norm } else { 1.0 };
            let row: SparseRow = row.into_iter().map(|(k, v)| (k, v * scale)).collect();
            let rhs = -con.row.constant * scale;
            match con.sense {
                Sense::Le => {
                    g.push(row);
                    h.push(rhs);
                    lp_origin.push((j, scale));
                }
                Sense::Eq => {
                    a.push(row);
                    b.push(rhs);
                    eq_origin.push((j, scale));
                }
            }
        }
        Conic {
            n,
            c,
            g,
            h: DVector::from_vec(h),
            a,
            b: DVector::from_vec(b),
            blocks,
            free_offset,
            lp_origin,
            eq_origin,
        }
    }

    fn nlp(&self) -> usize {
        self.g.len()
    }

    fn neq(&self) -> usize {
        self.a.len()
    }

    fn degree(&self) -> usize {
        self.nlp() + self.blocks.iter().map(|b| b.dim).sum::<usize>()
    }

    fn h_cone(&self) -> ConeVec {
        ConeVec { lp: self.h.clone(), psd: self.blocks.iter().map(|b| DMatrix::zeros(b.dim, b.dim)).collect() }
    }

    fn g_apply(&self, x: &DVector<f64>) -> ConeVec {
        let lp = DVector::from_iterator(self.nlp(), self.g.iter().map(|r| sparse_dot(r, x)));
        let psd = self
            .blocks
            .iter()
            .map(|b| -smat(&x.as_slice()[b.offset..b.offset + svec_len(b.dim)], b.dim))
            .collect();
        ConeVec { lp, psd }
    }

    fn g_transpose(&self, z: &ConeVec) -> DVector<f64> {
        let mut out = DVector::zeros(self.n);
        for (row, zj) in self.g.iter().zip(z.lp.iter()) {
            for &(k, v) in row {
                out[k] += v * zj;
            }
        }
        let mut buf = Vec::new();
        for (b, zk) in self.blocks.iter().zip(&z.psd) {
            buf.resize(svec_len(b.dim), 0.0);
            svec_into(zk, &mut buf);
            for (i, v) in buf.iter().enumerate() {
                out[b.offset + i] -= v;
            }
        }
        out
    }

    fn a_apply(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.neq(), self.a.iter().map(|r| sparse_dot(r, x)))
    }

    fn a_transpose(&self, y: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.n);
        for (row, yj) in self.a.iter().zip(y.iter()) {
            for &(k, v) in row {
                out[k] += v * yj;
            }
        }
        out
    }

    fn solve(&self, problem: &SdpProblem, options: &SolveOptions) -> SdpSolution {
        if !problem.objective.is_finite() || problem.constraints.iter().any(|c| !c.row.is_finite()) {
            return SdpSolution::failed(problem, Status::Failed, 0);
        }
        let tol = options.tolerance;
        let nu = self.degree() as f64;
        let mut x = DVector::zeros(self.n);
        let mut y = DVector::zeros(self.neq());
        let mut s = ConeVec::identity(self.nlp(), &self.blocks);
        let mut z = ConeVec::identity(self.nlp(), &self.blocks);
        let mut tau = 1.0;
        let mut kappa = 1.0;
        let norm_c = self.c.norm().max(1.0);
        let norm_bh = self.b.norm().max(self.h.norm()).max(1.0);
        let h_cone = self.h_cone();

        let mut status = Status::Failed;
        let mut iterations = 0;
        let mut best: Option<(f64, Iterate)> = None;
        let mut stalls = 0;
        let trace = std::env::var_os("BCPEP_IPM_TRACE").is_some();

        for it in 0..=options.max_iterations {
            iterations = it;
            let rx = self.a_transpose(&y) + self.g_transpose(&z) + &self.c * tau;
            let ry = self.a_apply(&x) - &self.b * tau;
            let gx = self.g_apply(&x);
            let mut rz = gx.clone();
            rz.axpy(1.0, &s);
            rz.axpy(-tau, &h_cone);
            let cx = self.c.dot(&x);
            let by = self.b.dot(&y);
            let hz = self.h.dot(&z.lp);
            let rt = kappa + cx + by + hz;
            let sz = s.dot(&z);
            let mu = (sz + tau * kappa) / (nu + 1.0);

            let pres = ry.norm().max(rz.norm()) / tau / norm_bh;
            let dres = rx.norm() / tau / norm_c;
            let pcost = cx / tau;
            let dcost = -(by + hz) / tau;
            let scale = 1.0 + pcost.abs().min(dcost.abs());
            let gap = (pcost - dcost).abs().max(sz / (tau * tau)) / scale;
            if trace {
                eprintln!("{it:3} pres {pres:.2e} dres {dres:.2e} gap {gap:.2e} pcost {pcost:.9e} mu {mu:.2e} tau {tau:.2e}");
            }
            let merit = pres.max(dres).max(gap);
            if merit.is_finite() && best.as_ref().is_none_or(|(m, _)| merit < *m) {
                let snapshot = Iterate { x: x.clone(), y: y.clone(), s: s.clone(), z: z.clone(), tau, residuals: (pres, dres, gap) };
                best = Some((merit, snapshot));
            }
            if pres <= tol && dres <= tol && gap <= tol {
                status = Status::Optimal;
                break;
            }
            if by + hz < 0.0 {
                let ray = (self.a_transpose(&y) + self.g_transpose(&z)).norm() / -(by + hz);
                if ray <= tol {
                    status = Status::Infeasible;
                    break;
                }
            }
            if cx < 0.0 {
                let mut gs = gx.clone();
                gs.axpy(1.0, &s);
                let ray = self.a_apply(&x).norm().max(gs.norm()) / -cx;
                if ray <= tol {
                    status = Status::Unbounded;
                    break;
                }
            }
            // residuals growing again past the best point: the factorization has lost accuracy
            if let Some((m, _)) = &best {
                if *m <= 1e-5 && merit > 1e3 * m.max(tol) {
                    break;
                }
            }
            if it == options.max_iterations || stalls >= 5 {
                break;
            }

            let Some(sc) = Scaling::new(&s, &z) else { break };
            let Some(kkt) = Kkt::factor(self, &sc) else { break };

            let (x1, y1, z1) = kkt.solve(self, &sc, &(-&self.c), &self.b, &h_cone);
            let denom = self.c.dot(&x1) + self.b.dot(&y1) + self.h.dot(&z1.lp) - kappa / tau;

            // Direction for residual weight `eta` and complementarity terms `(e5, e6)`.
            // `ds` comes from the linearized primal equation so that the
            // primal residual contracts by exactly `1 - alpha eta`.
            let direction = |eta: f64, e5: &ConeVec, e6: f64| {
                let mut r3 = rz.scaled(-eta);
                r3.axpy(-1.0, e5);
                let (x2, y2, z2) = kkt.solve(self, &sc, &(&rx * -eta), &(&ry * -eta), &r3);
                let dtau = (-eta * rt - e6 / tau - (self.c.dot(&x2) + self.b.dot(&y2) + self.h.dot(&z2.lp))) / denom;
                let dx = x2 + &x1 * dtau;
                let dy = y2 + &y1 * dtau;
                let mut dz = z2;
                dz.axpy(dtau, &z1);
                let mut ds = rz.scaled(-eta);
                ds.axpy(-1.0, &self.g_apply(&dx));
                ds.axpy(dtau, &h_cone);
                let dkappa = (e6 - kappa * dtau) / tau;
                let alpha = sc
                    .max_step(&ds, &dz)
                    .min(max_scalar_step(tau, dtau))
                    .min(max_scalar_step(kappa, dkappa));
                (dx, dy, ds, dz, dtau, dkappa, alpha)
            };

            // affine predictor
            let (_, _, ds_a, dz_a, dtau_a, dkappa_a, alpha_a) = direction(1.0, &s.scaled(-1.0), -tau * kappa);
            let sigma = (1.0 - alpha_a.min(1.0)).powi(3).clamp(0.0, 1.0);

            // combined corrector
            let mut rc = sc.lam_sq();
            rc.axpy(1.0, &jordan(&sc.winv_t(&ds_a), &sc.w(&dz_a)));
            rc.axpy(-sigma * mu, &ConeVec::identity(self.nlp(), &self.blocks));
            let e5 = sc.wt(&sc.lam_div(&rc)).scaled(-1.0);
            let e6 = -(tau * kappa + dtau_a * dkappa_a - sigma * mu);
            let (dx, dy, ds, dz, dtau, dkappa, alpha_max) = direction(1.0 - sigma, &e5, e6);

            let alpha = (STEP_FRACTION * alpha_max).min(1.0);
            if !alpha.is_finite() || alpha <= 0.0 {
                break;
            }
            if alpha < 1e-8 {
                stalls += 1;
            } else {
                stalls = 0;
            }
            x.axpy(alpha, &dx, 1.0);
            y.axpy(alpha, &dy, 1.0);
            s.axpy(alpha, &ds);
            z.axpy(alpha, &dz);
            tau += alpha * dtau;
            kappa += alpha * dkappa;
        }

        match status {
            Status::Infeasible | Status::Unbounded => SdpSolution::failed(problem, status, iterations),
            _ => {
                let Some((_, it)) = best else {
                    return SdpSolution::failed(problem, Status::Failed, iterations);
                };
                let (pres, dres, gap) = it.residuals;
                let relaxed = (tol.sqrt() * 1e-1).max(tol * 1e3);
                let status = if pres <= tol && dres <= tol && gap <= tol {
                    Status::Optimal
                } else if pres <= relaxed && dres <= relaxed && gap <= relaxed {
                    Status::NearOptimal
                } else {
                    return SdpSolution::failed(problem, Status::Failed, iterations);
                };
                self.extract(problem, status, iterations, &it)
            }
        }
    }

    fn extract(&self, problem: &SdpProblem, status: Status, iterations: usize, it: &Iterate) -> SdpSolution {
        let Iterate { x, y, s, z, tau, residuals } = it;
        let tau = *tau;
        let grams: Vec<DMatrix<f64>> = s.psd.iter().map(|m| symmetrize(m / tau)).collect();
        let free: Vec<f64> = (0..problem.num_free).map(|k| x[self.free_offset + k] / tau).collect();
        let mut multipliers = vec![0.0; problem.constraints.len()];
        for (&(j, scale), zj) in self.lp_origin.iter().zip(z.lp.iter()) {
            multipliers[j] = zj / tau * scale;
        }
        for (&(j, scale), yj) in self.eq_origin.iter().zip(y.iter()) {
            multipliers[j] = yj / tau * scale;
        }
        let primal_value = problem.objective.evaluate(&grams, &free);
        let dual_value = problem.objective.constant
            - problem.constraints.iter().zip(&multipliers).map(|(c, l)| l * c.row.constant).sum::<f64>();
        SdpSolution {
            status,
            grams,
            free,
            primal_value,
            dual_value,
            multipliers: Some(multipliers),
            gap: (primal_value - dual_value).abs() / (1.0 + primal_value.abs()),
            primal_residual: residuals.0,
            dual_residual: residuals.1,
            iterations,
        }
    }
}

fn max_scalar_step(v: f64, dv: f64) -> f64 {
    if dv < 0.0 {
        -v / dv
    } else {
        f64::INFINITY
    }
}

/// Jordan product: elementwise on the orthant, `(UV + VU)/2` on PSD blocks.
fn jordan(u: &ConeVec, v: &ConeVec) -> ConeVec {
    ConeVec {
        lp: u.lp.component_mul(&v.lp),
        psd: u.psd.iter().zip(&v.psd).map(|(a, b)| (a * b + b * a) * 0.5).collect(),
    }
}

struct PsdScaling {
    r: DMatrix<f64>,
    rinv: DMatrix<f64>,
    /// `R R'`, which maps `Z` to `S` by congruence.
    w: DMatrix<f64>,
    /// `(R R')^{-1}`.
    t: DMatrix<f64>,
    lam: DVector<f64>,
    chol_s: DMatrix<f64>,
    chol_z: DMatrix<f64>,
}

/// Nesterov-Todd scaling at the current `(s, z)`.
struct Scaling {
    lp_w: DVector<f64>,
    lp_lam: DVector<f64>,
    psd: Vec<PsdScaling>,
    lp_s: DVector<f64>,
    lp_z: DVector<f64>,
}

impl Scaling {
    fn new(s: &ConeVec, z: &ConeVec) -> Option<Self> {
        if s.lp.iter().chain(z.lp.iter()).any(|v| !(*v > 0.0)) {
            return None;
        }
        let lp_w = s.lp.zip_map(&z.lp, |a, b| (a / b).sqrt());
        let lp_lam = s.lp.zip_map(&z.lp, |a, b| (a * b).sqrt());
        let mut psd = Vec::with_capacity(s.psd.len());
        for (sk, zk) in s.psd.iter().zip(&z.psd) {
            let d = sk.nrows();
            let ls = Cholesky::new(symmetrize(sk.clone()))?.l();
            let lz = Cholesky::new(symmetrize(zk.clone()))?.l();
            let m = lz.transpose() * &ls;
            let svd = SVD::new(m, true, true);
            let v = svd.v_t.as_ref()?.transpose();
            let lam = svd.singular_values.clone();
            if lam.iter().any(|l| !(*l > 0.0)) {
                return None;
            }
            let inv_sqrt = DMatrix::from_diagonal(&lam.map(|l| 1.0 / l.sqrt()));
            let sqrt = DMatrix::from_diagonal(&lam.map(f64::sqrt));
            let r = &ls * &v * &inv_sqrt;
            let ls_inv = ls.clone().solve_lower_triangular(&DMatrix::identity(d, d))?;
            let rinv = &sqrt * v.transpose() * ls_inv;
            let w = symmetrize(&r * r.transpose());
            let t = symmetrize(rinv.transpose() * &rinv);
            psd.push(PsdScaling { r, rinv, w, t, lam, chol_s: ls, chol_z: lz });
        }
        Some(Scaling { lp_w, lp_lam, psd, lp_s: s.lp.clone(), lp_z: z.lp.clone() })
    }

    /// `W z`.
    fn w(&self, z: &ConeVec) -> ConeVec {
        ConeVec {
            lp: self.lp_w.component_mul(&z.lp),
            psd: self.psd.iter().zip(&z.psd).map(|(p, m)| p.r.transpose() * m * &p.r).collect(),
        }
    }

    /// `W^{-T} s`.
    fn winv_t(&self, s: &ConeVec) -> ConeVec {
        ConeVec {
            lp: s.lp.component_div(&self.lp_w),
            psd: self.psd.iter().zip(&s.psd).map(|(p, m)| &p.rinv * m * p.rinv.transpose()).collect(),
        }
    }

    /// `W' u`.
    fn wt(&self, u: &ConeVec) -> ConeVec {
        ConeVec {
            lp: self.lp_w.component_mul(&u.lp),
            psd: self.psd.iter().zip(&u.psd).map(|(p, m)| &p.r * m * p.r.transpose()).collect(),
        }
    }

    /// `W'W v`.
    fn ww(&self, v: &ConeVec) -> ConeVec {
        ConeVec {
            lp: self.lp_w.component_mul(&self.lp_w).component_mul(&v.lp),
            psd: self.psd.iter().zip(&v.psd).map(|(p, m)| symmetrize(&p.w * m * &p.w)).collect(),
        }
    }

    /// `(W'W)^{-1} v`.
    fn winv2(&self, v: &ConeVec) -> ConeVec {
        ConeVec {
            lp: v.lp.zip_map(&self.lp_w, |a, w| a / (w * w)),
            psd: self.psd.iter().zip(&v.psd).map(|(p, m)| symmetrize(&p.t * m * &p.t)).collect(),
        }
    }

    fn lam_sq(&self) -> ConeVec {
        ConeVec {
            lp: self.lp_lam.map(|l| l * l),
            psd: self.psd.iter().map(|p| DMatrix::from_diagonal(&p.lam.map(|l| l * l))).collect(),
        }
    }

    /// Solves `lambda o u = r` for `u`.
    fn lam_div(&self, r: &ConeVec) -> ConeVec {
        ConeVec {
            lp: r.lp.component_div(&self.lp_lam),
            psd: self
                .psd
                .iter()
                .zip(&r.psd)
                .map(|(p, m)| {
                    let d = m.nrows();
                    DMatrix::from_fn(d, d, |i, j| 2.0 * m[(i, j)] / (p.lam[i] + p.lam[j]))
                })
                .collect(),
        }
    }

    /// Largest `alpha` keeping `s + alpha ds` and `z + alpha dz` in the cone.
    fn max_step(&self, ds: &ConeVec, dz: &ConeVec) -> f64 {
        let mut alpha = f64::INFINITY;
        for (v, dv) in self.lp_s.iter().zip(ds.lp.iter()).chain(self.lp_z.iter().zip(dz.lp.iter())) {
            alpha = alpha.min(max_scalar_step(*v, *dv));
        }
        for (p, (dsk, dzk)) in self.psd.iter().zip(ds.psd.iter().zip(&dz.psd)) {
            alpha = alpha.min(psd_step(&p.chol_s, dsk)).min(psd_step(&p.chol_z, dzk));
        }
        alpha
    }
}

/// Step to the boundary along `dv` from `L L'`.
fn psd_step(l: &DMatrix<f64>, dv: &DMatrix<f64>) -> f64 {
    let d = l.nrows();
    if d == 0 {
        return f64::INFINITY;
    }
    let Some(linv) = l.clone().solve_lower_triangular(&DMatrix::identity(d, d)) else {
        return 0.0;
    };
    let m = symmetrize(&linv * dv * linv.transpose());
    let min = m.symmetric_eigenvalues().min();
    if min < 0.0 {
        -1.0 / min
    } else {
        f64::INFINITY
    }
}

/// Factored reduced Newton system `H = G' (W'W)^{-1} G` plus the equality Schur complement.
struct Kkt {
    chol: Cholesky<f64, Dyn>,
    eq: Option<(DMatrix<f64>, Cholesky<f64, Dyn>)>,
}

impl Kkt {
    fn factor(conic: &Conic, sc: &Scaling) -> Option<Self> {
        let n = conic.n;
        let mut h = DMatrix::<f64>::zeros(n, n);
        for (row, w) in conic.g.iter().zip(sc.lp_w.iter()) {
            let d = 1.0 / (w * w);
            for &(a, va) in row {
                for &(b, vb) in row {
                    h[(a, b)] += d * va * vb;
                }
            }
        }
        for (blk, p) in conic.blocks.iter().zip(&sc.psd) {
            let pairs: Vec<(usize, usize, f64)> = (0..blk.dim)
                .flat_map(|j| (0..=j).map(move |i| (i, j, if i == j { 1.0 / SQRT2 } else { 1.0 })))
                .collect();
            let t = &p.t;
            for (u, &(a, b, sab)) in pairs.iter().enumerate() {
                for (v, &(c, d, scd)) in pairs.iter().enumerate() {
                    h[(blk.offset + u, blk.offset + v)] += (t[(a, c)] * t[(b, d)] + t[(a, d)] * t[(b, c)]) * sab * scd;
                }
            }
        }
        let max_diag = h.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
        let mut reg = 0.0;
        let chol = loop {
            let mut hr = h.clone();
            for i in 0..n {
                hr[(i, i)] += reg;
            }
            if let Some(c) = Cholesky::new(hr) {
                break c;
            }
            reg = if reg == 0.0 { 1e-14 * max_diag } else { reg * 100.0 };
            if reg > 1e-4 * max_diag {
                return None;
            }
        };
        let eq = if conic.neq() == 0 {
            None
        } else {
            let mut at = DMatrix::zeros(n, conic.neq());
            for (j, row) in conic.a.iter().enumerate() {
                for &(k, v) in row {
                    at[(k, j)] = v;
                }
            }
            let hinv_at = chol.solve(&at);
            let schur = symmetrize(at.transpose() * &hinv_at);
            let mut reg = 0.0;
            let max_d = schur.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
            let c = loop {
                let mut sr = schur.clone();
                for i in 0..sr.nrows() {
                    sr[(i, i)] += reg;
                }
                if let Some(c) = Cholesky::new(sr) {
                    break c;
                }
                reg = if reg == 0.0 { 1e-14 * max_d } else { reg * 100.0 };
                if reg > 1e-4 * max_d {
                    return None;
                }
            };
            Some((hinv_at, c))
        };
        Some(Kkt { chol, eq })
    }

    fn solve_once(
        &self,
        conic: &Conic,
        sc: &Scaling,
        r1: &DVector<f64>,
        r2: &DVector<f64>,
        r3: &ConeVec,
    ) -> (DVector<f64>, DVector<f64>, ConeVec) {
        let w3 = sc.winv2(r3);
        let q = r1 + conic.g_transpose(&w3);
        let hq = self.chol.solve(&q);
        let (dx, dy) = match &self.eq {
            None => (hq, DVector::zeros(0)),
            Some((hinv_at, schur)) => {
                let rhs = conic.a_apply(&hq) - r2;
                let dy = schur.solve(&rhs);
                let dx = hq - hinv_at * &dy;
                (dx, dy)
            }
        };
        let dz = sc.winv2(&conic.g_apply(&dx)).sub(&w3);
        (dx, dy, dz)
    }

    /// Solves `[0 A' G'; A 0 0; G 0 -W'W] (dx, dy, dz) = (r1, r2, r3)` with
    /// iterative refinement.
    fn solve(
        &self,
        conic: &Conic,
        sc: &Scaling,
        r1: &DVector<f64>,
        r2: &DVector<f64>,
        r3: &ConeVec,
    ) -> (DVector<f64>, DVector<f64>, ConeVec) {
        let (mut dx, mut dy, mut dz) = self.solve_once(conic, sc, r1, r2, r3);
        let scale = 1.0 + r1.norm() + r2.norm() + r3.norm();
        for _ in 0..3 {
            let e1 = r1 - conic.a_transpose(&dy) - conic.g_transpose(&dz);
            let e2 = r2 - conic.a_apply(&dx);
            let e3 = r3.sub(&conic.g_apply(&dx).sub(&sc.ww(&dz)));
            let err = e1.norm() + e2.norm() + e3.norm();
            if err <= 1e-14 * scale {
                break;
            }
            let (cx, cy, cz) = self.solve_once(conic, sc, &e1, &e2, &e3);
            dx += cx;
            dy += cy;
            dz.axpy(1.0, &cz);
        }
        (dx, dy, dz)
    }
}
