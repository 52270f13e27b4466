//! Single solves, K-sweeps and the two-block accelerated table.

use std::time::Instant;

use anyhow::{bail, Result};
use bcpep::algos::{
    build_am, build_cacd, build_ccd, build_custom, build_ensemble, Schedule, StepRule, ThetaIndex,
    DEFAULT_ENSEMBLE_CAP,
};
use bcpep::bounds::beck_ccd_bound;
use bcpep::pep::{assemble, compile};
use bcpep::solve::{InteriorPoint, SdpBackend, SdpProblem, SdpSolution, SolveOptions, Status};
use bcpep::{ClassParams, PepProblem, Trajectory};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Algorithm, Criterion, ExperimentConfig, Rule, Smoothness};

pub const CSV_HEADER: &str =
    "algorithm,p,K,N,h,L,setting,R,criterion,value,value_times_K,beck_bound,status,gap,time_s";

#[derive(Clone, Debug)]
pub struct ResultRow {
    pub algorithm: &'static str,
    pub p: usize,
    pub cycles: Option<usize>,
    pub steps: usize,
    pub h: Option<f64>,
    /// Smoothness constant of the function class solved over.
    pub lipschitz: f64,
    pub setting: &'static str,
    pub radius: f64,
    pub criterion: &'static str,
    pub value: Option<f64>,
    pub beck_bound: Option<f64>,
    pub status: Status,
    pub gap: Option<f64>,
    pub time_s: f64,
}

impl ResultRow {
    pub fn value_times_k(&self) -> Option<f64> {
        Some(self.value? * self.cycles? as f64)
    }

    /// One CSV line; `time_s` stays empty unless `timing` is set so that the
    /// output is reproducible byte for byte.
    pub fn to_csv(&self, timing: bool) -> String {
        fn opt(v: Option<f64>) -> String {
            v.map(num).unwrap_or_default()
        }
        [
            self.algorithm.to_string(),
            self.p.to_string(),
            self.cycles.map(|k| k.to_string()).unwrap_or_default(),
            self.steps.to_string(),
            opt(self.h),
            num(self.lipschitz),
            self.setting.to_string(),
            num(self.radius),
            self.criterion.to_string(),
            opt(self.value),
            opt(self.value_times_k()),
            opt(self.beck_bound),
            self.status.to_string(),
            opt(self.gap),
            if timing { format!("{:.3}", self.time_s) } else { String::new() },
        ]
        .join(",")
    }
}

/// Shortest round-trip decimal, switching to exponent form for tiny values.
pub fn num(v: f64) -> String {
    if v != 0.0 && v.abs() < 1e-4 {
        format!("{v:e}")
    } else {
        v.to_string()
    }
}

pub fn write_csv(rows: &[ResultRow], timing: bool) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.to_csv(timing));
        out.push('\n');
    }
    out
}

/// A finished solve together with everything needed to re-check it.
#[derive(Clone, Debug)]
pub struct Solved {
    pub row: ResultRow,
    pub problem: PepProblem,
    pub sdp: SdpProblem,
    pub solution: SdpSolution,
}

/// What `certify` reads back.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StoredSolve {
    pub sdp: SdpProblem,
    pub solution: SdpSolution,
}

fn class_constants(cfg: &ExperimentConfig) -> Vec<f64> {
    match &cfg.smoothness {
        Smoothness::Scalar(l) => vec![*l],
        Smoothness::Vector(v) => {
            let min = v.iter().copied().fold(f64::INFINITY, f64::min);
            vec![min, v.iter().sum()]
        }
    }
}

/// Constant used inside step sizes: `L`, or `max L_i` for a vector.
fn step_constant(cfg: &ExperimentConfig) -> f64 {
    match &cfg.smoothness {
        Smoothness::Scalar(l) => *l,
        Smoothness::Vector(v) => v.iter().copied().fold(0.0, f64::max),
    }
}

fn step_rule(rule: Rule, alpha: f64, lipschitz: f64, theta_index: ThetaIndex) -> StepRule<f64> {
    match rule {
        Rule::Ccd => StepRule::Ccd { alpha },
        Rule::Am => StepRule::ExactMin,
        Rule::Cacd => StepRule::Cacd { lipschitz, theta_index },
    }
}

/// The step size `alpha = h / L` when the run uses gradient steps.
pub fn ccd_alpha(cfg: &ExperimentConfig) -> Option<f64> {
    let ccd = match cfg.algorithm {
        Algorithm::Ccd => true,
        Algorithm::Custom | Algorithm::Ensemble => cfg.rule == Rule::Ccd,
        _ => false,
    };
    ccd.then(|| cfg.h / step_constant(cfg))
}

pub fn build_trajectory(cfg: &ExperimentConfig) -> Result<Trajectory> {
    cfg.validate()?;
    let p = cfg.p;
    let n = cfg.num_steps()?;
    let l = step_constant(cfg);
    let alpha = cfg.h / l;
    let t = match cfg.algorithm {
        Algorithm::Ccd => build_ccd(p, n / p, alpha)?,
        Algorithm::Am => build_am(p, n / p)?,
        Algorithm::Cacd => build_cacd(p, n / p, l, cfg.theta_index)?,
        Algorithm::Custom => {
            let schedule = Schedule::custom(p, cfg.sequence.as_deref().unwrap_or_default())?;
            build_custom(&schedule, step_rule(cfg.rule, alpha, l, cfg.theta_index))?
        }
        Algorithm::Ensemble => {
            build_ensemble(p, n, step_rule(cfg.rule, alpha, l, cfg.theta_index), DEFAULT_ENSEMBLE_CAP)?
        }
    };
    Ok(t)
}

/// Builds, solves and reports one config. Vector smoothness gives two rows,
/// one per end of the `min L_i` / `sum L_i` sandwich.
pub fn run_solve(cfg: &ExperimentConfig) -> Result<Vec<Solved>> {
    let trajectory = build_trajectory(cfg)?;
    let criterion = cfg.criterion();
    let options = cfg.solve_options();
    let alpha = ccd_alpha(cfg);
    let mut out = Vec::new();
    for l in class_constants(cfg) {
        let problem = assemble(trajectory.clone(), ClassParams::new(l)?, criterion.to_core(), cfg.initial_condition())?;
        let start = Instant::now();
        let sdp = compile(&problem);
        let solution = InteriorPoint.solve(&sdp, &options);
        let time_s = start.elapsed().as_secs_f64();
        let solved = solution.status.is_solved();
        let beck_bound = match (cfg.algorithm, criterion, alpha) {
            (Algorithm::Ccd, Criterion::ObjGap, Some(a)) => {
                beck_ccd_bound(a, cfg.p, l, problem.trajectory.steps(), cfg.radius).ok()
            }
            _ => None,
        };
        let row = ResultRow {
            algorithm: cfg.algorithm.name(),
            p: cfg.p,
            cycles: cfg.num_cycles(),
            steps: problem.trajectory.steps(),
            h: alpha.map(|_| cfg.h),
            lipschitz: l,
            setting: cfg.setting.name(),
            radius: cfg.radius,
            criterion: criterion.name(),
            value: solved.then(|| solution.primal_value.max(0.0)),
            beck_bound,
            status: solution.status,
            gap: solved.then_some(solution.gap),
            time_s,
        };
        out.push(Solved { row, problem, sdp, solution });
    }
    Ok(out)
}

/// Parses `1-10`, `3` or `1,2,5-7` into cycle counts.
pub fn parse_range(spec: &str) -> Result<Vec<usize>> {
    let mut ks = Vec::new();
    for part in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b): (usize, usize) = (a.trim().parse()?, b.trim().parse()?);
                if a > b {
                    bail!("empty range {part}");
                }
                ks.extend(a..=b);
            }
            None => ks.push(part.parse()?),
        }
    }
    if ks.is_empty() {
        bail!("K range is empty");
    }
    Ok(ks)
}

/// One solve per `K`, run on up to `jobs` threads. Rows come back in the
/// order of `ks`; a config error at some `K` truncates the list there.
pub fn run_sweep(cfg: &ExperimentConfig, ks: &[usize], jobs: usize) -> (Vec<Solved>, Option<anyhow::Error>) {
    if cfg.algorithm == Algorithm::Custom {
        return (Vec::new(), Some(anyhow::anyhow!("sweeps need a cyclic algorithm")));
    }
    let solve_k = |k: &usize| {
        let mut c = cfg.clone();
        c.cycles = Some(*k);
        c.steps = None;
        run_solve(&c)
    };
    let results: Vec<Result<Vec<Solved>>> = match rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build() {
        Ok(pool) => pool.install(|| ks.par_iter().map(solve_k).collect()),
        Err(e) => return (Vec::new(), Some(e.into())),
    };
    let mut rows = Vec::new();
    for r in results {
        match r {
            Ok(s) => rows.extend(s),
            Err(e) => return (rows, Some(e)),
        }
    }
    (rows, None)
}

/// Sequences of the two-block, four-step table, one per label-swap pair.
pub const TABLE1_SEQUENCES: [[usize; 4]; 8] = [
    [1, 1, 1, 1],
    [1, 1, 1, 2],
    [2, 2, 1, 1],
    [2, 1, 1, 1],
    [1, 1, 2, 1],
    [1, 2, 1, 1],
    [1, 2, 2, 1],
    [2, 1, 2, 1],
];

/// Published worst cases for [`TABLE1_SEQUENCES`], then the ensemble average.
pub const TABLE1_REFERENCE: [f64; 9] = [0.5, 0.25517, 0.23462, 0.19905, 0.19574, 0.16453, 0.14988, 0.14429, 0.1046];

#[derive(Clone, Debug)]
pub struct Table1Options {
    pub both: bool,
    pub setting_all: bool,
    pub theta_index: ThetaIndex,
    pub tolerance: f64,
}

impl Default for Table1Options {
    fn default() -> Self {
        Table1Options {
            both: false,
            setting_all: false,
            theta_index: ThetaIndex::Prev,
            tolerance: SolveOptions::default().tolerance,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Table1Row {
    /// Empty for the ensemble average.
    pub sequence: Vec<usize>,
    pub reference: Option<f64>,
    pub value: Option<f64>,
    pub status: Status,
    pub gap: Option<f64>,
    pub solve: Option<Solved>,
}

impl Table1Row {
    pub fn label(&self) -> String {
        if self.sequence.is_empty() {
            "ensemble".into()
        } else {
            self.sequence.iter().map(|b| b.to_string()).collect::<Vec<_>>().join(" ")
        }
    }
}

#[derive(Clone, Debug)]
pub struct Table1 {
    pub rows: Vec<Table1Row>,
    pub ensemble: Table1Row,
    /// Largest disagreement between label-swapped partners, with `--both`.
    pub swap_mismatch: Option<f64>,
}

impl Table1 {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("sequence,value,reference,status,gap\n");
        for r in self.rows.iter().chain(std::iter::once(&self.ensemble)) {
            let f = |v: Option<f64>| v.map(num).unwrap_or_default();
            out.push_str(&format!("{},{},{},{},{}\n", r.label(), f(r.value), f(r.reference), r.status, f(r.gap)));
        }
        out
    }
}

fn table1_row(cfg: &ExperimentConfig, sequence: Vec<usize>, reference: Option<f64>) -> Table1Row {
    match run_solve(cfg) {
        Ok(mut s) => {
            let s = s.remove(0);
            Table1Row { sequence, reference, value: s.row.value, status: s.row.status, gap: s.row.gap, solve: Some(s) }
        }
        Err(e) => {
            eprintln!("table1: {}: {e:#}", cfg);
            Table1Row { sequence, reference, value: None, status: Status::Failed, gap: None, solve: None }
        }
    }
}

pub fn run_table1(opts: &Table1Options) -> Table1 {
    let mut base = ExperimentConfig::default();
    base.p = 2;
    base.rule = Rule::Cacd;
    base.theta_index = opts.theta_index;
    base.tolerance = opts.tolerance;
    base.setting = if opts.setting_all { crate::config::Setting::All } else { crate::config::Setting::Init };

    let mut jobs: Vec<(Vec<usize>, Option<f64>)> = Vec::new();
    for (seq, r) in TABLE1_SEQUENCES.iter().zip(TABLE1_REFERENCE) {
        jobs.push((seq.to_vec(), Some(r)));
        if opts.both {
            jobs.push((seq.iter().map(|b| 3 - b).collect(), Some(r)));
        }
    }
    let rows: Vec<Table1Row> = jobs
        .into_par_iter()
        .map(|(seq, r)| {
            let mut cfg = base.clone();
            cfg.algorithm = Algorithm::Custom;
            cfg.sequence = Some(seq.clone());
            table1_row(&cfg, seq, r)
        })
        .collect();

    let mut ens = base.clone();
    ens.algorithm = Algorithm::Ensemble;
    ens.steps = Some(4);
    ens.setting = crate::config::Setting::Init;
    let ensemble = table1_row(&ens, Vec::new(), Some(TABLE1_REFERENCE[8]));

    let swap_mismatch = opts.both.then(|| {
        rows.chunks(2)
            .map(|pair| match (pair[0].value, pair[1].value) {
                (Some(a), Some(b)) => (a - b).abs(),
                _ => f64::INFINITY,
            })
            .fold(0.0, f64::max)
    });
    Table1 { rows, ensemble, swap_mismatch }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges() {
        assert_eq!(parse_range("1-3").unwrap(), vec![1, 2, 3]);
        assert_eq!(parse_range("4").unwrap(), vec![4]);
        assert_eq!(parse_range("1,3-4").unwrap(), vec![1, 3, 4]);
        assert!(parse_range("").is_err());
        assert!(parse_range("3-1").is_err());
    }

    #[test]
    fn row_columns() {
        let row = ResultRow {
            algorithm: "ccd",
            p: 2,
            cycles: Some(3),
            steps: 6,
            h: Some(0.5),
            lipschitz: 1.0,
            setting: "all",
            radius: 1.0,
            criterion: "obj-gap",
            value: Some(0.25),
            beck_bound: None,
            status: Status::Optimal,
            gap: Some(1e-9),
            time_s: 1.5,
        };
        let line = row.to_csv(false);
        assert_eq!(line, "ccd,2,3,6,0.5,1,all,1,obj-gap,0.25,0.75,,optimal,1e-9,");
        assert_eq!(line.split(',').count(), CSV_HEADER.split(',').count());
        assert!(row.to_csv(true).ends_with(",1.500"));
    }
}
