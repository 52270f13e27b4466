use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use bcpep::algos::ThetaIndex;
use bcpep::solve::verify_certificate;
use bcpep::witness::{reconstruct, validate_lower_bound, ConcreteFunction, Quadratic, DEFAULT_RANK_TOL};
use bcpep_cli::config::ExperimentConfig;
use bcpep_cli::run::{run_solve, run_sweep, run_table1, parse_range, write_csv, StoredSolve, Table1Options};
use bcpep_cli::simulate::{quadratic_from_file, run_simulate, sim_csv};
use clap::{Args, Parser, Subcommand};

/// Exact worst-case bounds for cyclic block-coordinate methods.
#[derive(Parser)]
#[command(name = "bcpep-cli", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one configuration and print its result row(s).
    Solve {
        #[command(flatten)]
        cfg: ConfigFlags,
        /// Store the SDP and its solution as JSON for `certify`.
        #[arg(long)]
        save: Option<PathBuf>,
    },
    /// Solve one configuration per K.
    Sweep {
        #[command(flatten)]
        cfg: ConfigFlags,
        /// Cycle counts, e.g. `1-10` or `2,4,6`.
        #[arg(long)]
        range: String,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Two-block accelerated worst cases for all four-step sequences.
    Table1 {
        /// Also solve the label-swapped partners and check they agree.
        #[arg(long)]
        both: bool,
        #[arg(long, default_value = "init")]
        setting: String,
        #[arg(long = "theta-index", default_value = "prev")]
        theta_index: String,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Check the dual certificate of a stored solve.
    Certify {
        input: PathBuf,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
    },
    /// Solve, reconstruct a worst-case instance, validate it and export it.
    Witness {
        #[command(flatten)]
        cfg: ConfigFlags,
        #[arg(long = "rank-tol", default_value_t = DEFAULT_RANK_TOL)]
        rank_tol: f64,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
    },
    /// Run the configured method on a concrete quadratic.
    Simulate {
        #[command(flatten)]
        cfg: ConfigFlags,
        /// Parameter of the built-in two-block family, used without `--matrix`.
        #[arg(long, default_value_t = 0.01)]
        eps: f64,
        /// Dense symmetric matrix Q of f(x) = x'Qx/2.
        #[arg(long)]
        matrix: Option<PathBuf>,
        /// Block sizes for `--matrix`; one coordinate per block by default.
        #[arg(long)]
        blocks: Option<String>,
        /// Starting point, comma separated; (1,-1) by default.
        #[arg(long, allow_hyphen_values = true)]
        x0: Option<String>,
    },
}

/// Config file plus one flag per config key.
#[derive(Args)]
struct ConfigFlags {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    algorithm: Option<String>,
    #[arg(long)]
    p: Option<String>,
    #[arg(long = "K")]
    k: Option<String>,
    #[arg(long = "N")]
    n: Option<String>,
    #[arg(long)]
    sequence: Option<String>,
    #[arg(long)]
    h: Option<String>,
    #[arg(long = "L")]
    l: Option<String>,
    #[arg(long = "Lvec")]
    lvec: Option<String>,
    #[arg(long)]
    setting: Option<String>,
    #[arg(long = "R")]
    r: Option<String>,
    #[arg(long)]
    criterion: Option<String>,
    #[arg(long)]
    tolerance: Option<String>,
    #[arg(long = "theta-index")]
    theta_index: Option<String>,
    #[arg(long = "all-includes-x0")]
    all_includes_x0: Option<String>,
    #[arg(long)]
    rule: Option<String>,
    #[arg(long)]
    output: Option<PathBuf>,
    /// Fill the time_s column.
    #[arg(long)]
    timing: bool,
}

impl ConfigFlags {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        let pairs = [
            ("algorithm", &self.algorithm),
            ("p", &self.p),
            ("K", &self.k),
            ("N", &self.n),
            ("sequence", &self.sequence),
            ("h", &self.h),
            ("L", &self.l),
            ("Lvec", &self.lvec),
            ("setting", &self.setting),
            ("R", &self.r),
            ("criterion", &self.criterion),
            ("tolerance", &self.tolerance),
            ("theta-index", &self.theta_index),
            ("all-includes-x0", &self.all_includes_x0),
            ("rule", &self.rule),
        ];
        for (key, value) in pairs {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        if let Some(o) = &self.output {
            cfg.output = Some(o.clone());
        }
        Ok(cfg)
    }
}

/// Failure kinds mapped to exit codes.
enum Failure {
    Config(anyhow::Error),
    Solver(String),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Config(e)
    }
}

fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn parse_floats(s: &str) -> Result<Vec<f64>> {
    s.split(',').map(|v| v.trim().parse::<f64>().with_context(|| format!("bad number {v:?}"))).collect()
}

fn run(cli: Cli) -> std::result::Result<(), Failure> {
    match cli.command {
        Command::Solve { cfg: flags, save } => {
            let cfg = flags.resolve()?;
            let solved = run_solve(&cfg)?;
            let rows: Vec<_> = solved.iter().map(|s| s.row.clone()).collect();
            emit(cfg.output.as_deref(), &write_csv(&rows, flags.timing))?;
            if let Some(path) = save {
                let stored: Vec<StoredSolve> = solved
                    .iter()
                    .filter(|s| s.solution.status.is_solved())
                    .map(|s| StoredSolve { sdp: s.sdp.clone(), solution: s.solution.clone() })
                    .collect();
                let json = serde_json::to_string(&stored).context("serializing solve")?;
                std::fs::write(&path, json).with_context(|| format!("writing {}", path.display()))?;
            }
            if let Some(bad) = rows.iter().find(|r| !r.status.is_solved()) {
                return Err(Failure::Solver(format!("solver status {} at L = {}", bad.status, bad.lipschitz)));
            }
        }
        Command::Sweep { cfg: flags, range, jobs } => {
            let cfg = flags.resolve()?;
            let ks = parse_range(&range)?;
            let (solved, err) = run_sweep(&cfg, &ks, jobs);
            let rows: Vec<_> = solved.iter().map(|s| s.row.clone()).collect();
            emit(cfg.output.as_deref(), &write_csv(&rows, flags.timing))?;
            if let Some(e) = err {
                return Err(Failure::Config(e));
            }
            let failed = rows.iter().filter(|r| !r.status.is_solved()).count();
            if failed > 0 {
                return Err(Failure::Solver(format!("{failed} of {} solves failed", rows.len())));
            }
        }
        Command::Table1 { both, setting, theta_index, output } => {
            let opts = Table1Options {
                both,
                setting_all: match setting.as_str() {
                    "init" => false,
                    "all" => true,
                    _ => return Err(Failure::Config(anyhow!("setting: expected init or all"))),
                },
                theta_index: match theta_index.as_str() {
                    "prev" => ThetaIndex::Prev,
                    "next" => ThetaIndex::Next,
                    _ => return Err(Failure::Config(anyhow!("theta-index: expected prev or next"))),
                },
                ..Table1Options::default()
            };
            let table = run_table1(&opts);
            emit(output.as_deref(), &table.to_csv())?;
            if let Some(m) = table.swap_mismatch {
                eprintln!("label-swap mismatch {m:e}");
                if m > 1e-5 {
                    return Err(Failure::Solver(format!("label-swapped sequences differ by {m:e}")));
                }
            }
            let failed = table.rows.iter().chain([&table.ensemble]).filter(|r| !r.status.is_solved()).count();
            if failed > 0 {
                return Err(Failure::Solver(format!("{failed} table rows failed")));
            }
        }
        Command::Certify { input, tol } => {
            let text = std::fs::read_to_string(&input).with_context(|| format!("reading {}", input.display()))?;
            let stored: Vec<StoredSolve> = serde_json::from_str(&text).context("parsing stored solve")?;
            if stored.is_empty() {
                return Err(Failure::Config(anyhow!("no solved problems in {}", input.display())));
            }
            let mut ok = true;
            for (i, s) in stored.iter().enumerate() {
                let rep = verify_certificate(&s.sdp, &s.solution, tol).map_err(anyhow::Error::from)?;
                let min_eig = rep.slack_min_eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
                println!(
                    "{i}: {} primal {} dual {} mismatch {:e} min slack eigenvalue {:e} stationarity {:e} sign violations {}",
                    if rep.pass { "PASS" } else { "FAIL" },
                    rep.primal_value,
                    rep.dual_value,
                    rep.objective_mismatch,
                    min_eig,
                    rep.stationarity,
                    rep.sign_violations.len()
                );
                ok &= rep.pass;
            }
            if !ok {
                return Err(Failure::Solver("certificate check failed".into()));
            }
        }
        Command::Witness { cfg: flags, rank_tol, tol } => {
            let cfg = flags.resolve()?;
            let solved = run_solve(&cfg)?;
            let mut ok = true;
            let mut text = String::new();
            for s in &solved {
                if !s.solution.status.is_solved() {
                    return Err(Failure::Solver(format!("solver status {}", s.solution.status)));
                }
                let w = reconstruct(&s.solution, &s.problem, rank_tol).map_err(anyhow::Error::from)?;
                let rep = validate_lower_bound(&w, &s.problem, tol);
                eprintln!(
                    "L = {}: ranks {:?} interpolation residual {:e} replay error {:e} criterion {} primal {} {}",
                    s.row.lipschitz,
                    w.ranks,
                    rep.interpolation.worst_residual,
                    rep.replay_error,
                    rep.criterion,
                    w.primal_value,
                    if rep.pass { "PASS" } else { "FAIL" }
                );
                ok &= rep.pass;
                text.push_str(&w.to_csv());
            }
            emit(cfg.output.as_deref(), &text)?;
            if !ok {
                return Err(Failure::Solver("witness validation failed".into()));
            }
        }
        Command::Simulate { cfg: flags, eps, matrix, blocks, x0 } => {
            let cfg = flags.resolve()?;
            let f = match &matrix {
                Some(path) => {
                    let blocks = blocks
                        .as_deref()
                        .map(|b| b.split(',').map(|v| v.trim().parse::<usize>()).collect::<std::result::Result<Vec<_>, _>>())
                        .transpose()
                        .context("bad block sizes")?;
                    quadratic_from_file(path, blocks)?
                }
                None => Quadratic::f_eps(eps).map_err(anyhow::Error::from)?,
            };
            let x0 = match &x0 {
                Some(s) => parse_floats(s)?,
                None if matrix.is_none() => vec![1.0, -1.0],
                None => return Err(Failure::Config(anyhow!("--x0 is required with --matrix"))),
            };
            if cfg.p != f.block_dims().len() {
                eprintln!("using the {} blocks of the function, not p = {}", f.block_dims().len(), cfg.p);
            }
            let run = run_simulate(&cfg, &f, &x0)?;
            emit(cfg.output.as_deref(), &sim_csv(&run))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Solver(msg)) => {
            eprintln!("solver failure: {msg}");
            ExitCode::from(2)
        }
    }
}
