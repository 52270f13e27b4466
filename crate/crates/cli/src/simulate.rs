//! Runs a configured method on a concrete quadratic.

use anyhow::{anyhow, bail, Context, Result};
use bcpep::algos::{Schedule, StepRule};
use bcpep::witness::{simulate, ConcreteFunction, Quadratic, SimRun};
use nalgebra::{DMatrix, DVector};

use crate::config::{Algorithm, ExperimentConfig, Rule};

/// Reads a dense matrix, one whitespace- or comma-separated row per line.
pub fn parse_matrix(text: &str) -> Result<DMatrix<f64>> {
    let rows: Vec<Vec<f64>> = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(|l| {
            l.split(|c: char| c == ',' || c.is_whitespace())
                .filter(|s| !s.is_empty())
                .map(|s| s.parse::<f64>().map_err(|e| anyhow!("matrix entry {s:?}: {e}")))
                .collect()
        })
        .collect::<Result<_>>()?;
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        bail!("matrix must be square and nonempty");
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

/// `x'Qx/2` with the given block sizes, one coordinate per block by default.
pub fn quadratic_from_file(path: &std::path::Path, blocks: Option<Vec<usize>>) -> Result<Quadratic> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let q = parse_matrix(&text)?;
    let n = q.nrows();
    let blocks = blocks.unwrap_or_else(|| vec![1; n]);
    Ok(Quadratic::new(q, DVector::zeros(n), blocks)?)
}

/// Step rule for a simulation. Step sizes use the function's own global
/// smoothness constant.
pub fn sim_rule(cfg: &ExperimentConfig, f: &dyn ConcreteFunction) -> StepRule<f64> {
    let l = f.lipschitz();
    let rule = match cfg.algorithm {
        Algorithm::Ccd => Rule::Ccd,
        Algorithm::Am => Rule::Am,
        Algorithm::Cacd => Rule::Cacd,
        Algorithm::Custom | Algorithm::Ensemble => cfg.rule,
    };
    match rule {
        Rule::Ccd => StepRule::Ccd { alpha: cfg.h / l },
        Rule::Am => StepRule::ExactMin,
        Rule::Cacd => StepRule::Cacd { lipschitz: l, theta_index: cfg.theta_index },
    }
}

pub fn run_simulate(cfg: &ExperimentConfig, f: &dyn ConcreteFunction, x0: &[f64]) -> Result<SimRun> {
    if cfg.algorithm == Algorithm::Ensemble {
        bail!("simulation follows a single block sequence");
    }
    let p = f.block_dims().len();
    let schedule = match &cfg.sequence {
        Some(s) if cfg.algorithm == Algorithm::Custom => Schedule::custom(p, s)?,
        _ => {
            let n = cfg.num_steps()?;
            if n % p != 0 {
                bail!("N = {n} is not a multiple of the {p} blocks of the function");
            }
            Schedule::cyclic(p, n / p)?
        }
    };
    Ok(simulate(f, &schedule, &sim_rule(cfg, f), x0)?)
}

pub fn sim_csv(run: &SimRun) -> String {
    let mut out = String::from("n,f_gap,grad_sq,distance\n");
    for (n, ((f, g), d)) in run.f_gaps.iter().zip(&run.grad_sq_norms).zip(&run.distances).enumerate() {
        out.push_str(&format!("{n},{f},{g},{d}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_text() {
        let m = parse_matrix("2 -1\n# c\n-1, 2\n").unwrap();
        assert_eq!(m, DMatrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 2.0]));
        assert!(parse_matrix("1 2\n3").is_err());
        assert!(parse_matrix("").is_err());
    }

    #[test]
    fn ccd_on_feps() {
        let f = Quadratic::f_eps(0.01).unwrap();
        let cfg = ExperimentConfig { cycles: Some(3), h: 1.0, ..ExperimentConfig::default() };
        let run = run_simulate(&cfg, &f, &[1.0, -1.0]).unwrap();
        assert_eq!(run.f_gaps.len(), 7);
        assert!(run.f_gaps.windows(2).all(|w| w[1] <= w[0]));
        assert!(sim_csv(&run).starts_with("n,f_gap,grad_sq,distance\n0,4.02,"));
    }
}
