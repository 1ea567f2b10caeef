//! Command-line harness: flag parsing, single runs and seeded trial batches.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::Parser;
use log::{error, info};
use rayon::prelude::*;

use crate::backward::write_diagnostics_csv;
use crate::config::{ResolvedRun, RunConfig};
use crate::error::{Error, Result};
use crate::forward::SamplingMode;
use crate::solver::{solve, write_reports_csv, write_timings_csv, Solution};

#[derive(Debug, Clone, Default, Parser)]
#[command(
    name = "fbrrt",
    version,
    about = "Branched forward-backward SDE solver for stochastic optimal control"
)]
pub struct Args {
    /// TOML config file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// lqr1d, double_integrator, double_pendulum or quadcopter.
    #[arg(long)]
    pub problem: Option<String>,
    /// rrt or parallel.
    #[arg(long)]
    pub mode: Option<SamplingMode>,
    /// Tree width M after each forward pass.
    #[arg(long)]
    pub particles: Option<usize>,
    /// Width after erosion.
    #[arg(long)]
    pub erode: Option<usize>,
    /// Number of time steps N.
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub iters: Option<usize>,
    /// Rollouts per policy-cost estimate.
    #[arg(long)]
    pub rollouts: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Comma-separated temperatures; enables the lambda search.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub lambda_grid: Option<Vec<f64>>,
    #[arg(long)]
    pub eps_rrt: Option<f64>,
    #[arg(long)]
    pub eps_opt: Option<f64>,
    /// Region of interest as `lo:hi` per coordinate, e.g. `--roi=-6:6,-4:4`.
    #[arg(long, allow_hyphen_values = true)]
    pub roi: Option<String>,
    /// Initial state, comma separated, e.g. `--x0=1,1`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub x0: Option<Vec<f64>>,
    #[arg(long)]
    pub horizon: Option<f64>,
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
    /// Independent trials with seeds `seed, seed + 1, ...`.
    #[arg(long)]
    pub trials: Option<usize>,
}

fn parse_roi(spec: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut lo = Vec::new();
    let mut hi = Vec::new();
    for part in spec.split(',') {
        let (a, b) = part
            .split_once(':')
            .ok_or_else(|| Error::Config(format!("roi entry '{part}' is not of the form lo:hi")))?;
        let parse = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| Error::Config(format!("roi value '{s}': {e}")))
        };
        lo.push(parse(a)?);
        hi.push(parse(b)?);
    }
    Ok((lo, hi))
}

impl Args {
    /// Config file (if any) with the flags layered on top.
    pub fn run_config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_path(path)?,
            None => RunConfig::default(),
        };
        if let Some(p) = &self.problem {
            if cfg.problem.name.as_deref() != Some(p) {
                // problem-specific keys from the file do not carry over to another problem
                cfg.problem = Default::default();
                cfg.forward.roi_min = None;
                cfg.forward.roi_max = None;
            }
            cfg.problem.name = Some(p.clone());
        }
        macro_rules! set {
            ($field:expr, $value:expr) => {
                if let Some(v) = $value.clone() {
                    $field = Some(v);
                }
            };
        }
        set!(cfg.solver.mode, self.mode);
        set!(cfg.solver.particles, self.particles);
        set!(cfg.solver.erode, self.erode);
        set!(cfg.solver.steps, self.steps);
        set!(cfg.solver.iterations, self.iters);
        set!(cfg.solver.rollouts, self.rollouts);
        set!(cfg.solver.seed, self.seed);
        set!(cfg.solver.trials, self.trials);
        set!(cfg.backward.lambda, self.lambda);
        set!(cfg.forward.eps_rrt, self.eps_rrt);
        set!(cfg.forward.eps_opt, self.eps_opt);
        set!(cfg.problem.x0, self.x0);
        set!(cfg.problem.horizon, self.horizon);
        if let Some(grid) = &self.lambda_grid {
            cfg.backward.lambda_grid = Some(grid.clone());
            cfg.backward.lambda_search = Some(true);
        }
        if let Some(spec) = &self.roi {
            let (lo, hi) = parse_roi(spec)?;
            cfg.forward.roi_min = Some(lo);
            cfg.forward.roi_max = Some(hi);
        }
        if self.particles.is_some() && self.erode.is_none() {
            // an erode width from the file may not fit the new particle count
            cfg.solver.erode = None;
        }
        Ok(cfg)
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })
}

/// Write the artifacts of one solved run into `dir`.
pub fn write_run_outputs(dir: &Path, run: &ResolvedRun, solution: &Solution) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut echo = create(&dir.join("config.toml"))?;
    echo.write_all(run.echo.to_toml_string()?.as_bytes())?;
    echo.flush()?;
    write_reports_csv(&solution.reports, create(&dir.join("reports.csv"))?)?;
    write_timings_csv(&solution.reports, create(&dir.join("timings.csv"))?)?;
    solution
        .best_model
        .write_csv(create(&dir.join("model_best.csv"))?)?;
    solution
        .last_model
        .write_csv(create(&dir.join("model_last.csv"))?)?;
    solution.tree.write_csv(create(&dir.join("tree.csv"))?)?;
    write_diagnostics_csv(&solution.diagnostics, create(&dir.join("diagnostics.csv"))?)?;
    Ok(())
}

/// Outcome of one trial in a batch.
#[derive(Clone, Debug)]
pub struct TrialOutcome {
    pub trial: usize,
    pub seed: u64,
    /// Best cost after each iteration, or the failure message.
    pub result: std::result::Result<Vec<f64>, String>,
}

/// Statistics of the best cost across successful trials at one iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct AggregateRow {
    pub iteration: usize,
    pub trials: usize,
    pub mean: f64,
    /// Sample standard deviation; 0 for a single trial.
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

pub fn aggregate(outcomes: &[TrialOutcome]) -> Vec<AggregateRow> {
    let series: Vec<&Vec<f64>> = outcomes
        .iter()
        .filter_map(|o| o.result.as_ref().ok())
        .collect();
    let iterations = series.iter().map(|s| s.len()).max().unwrap_or(0);
    (0..iterations)
        .filter_map(|k| {
            let xs: Vec<f64> = series.iter().filter_map(|s| s.get(k).copied()).collect();
            if xs.is_empty() {
                return None;
            }
            let n = xs.len() as f64;
            let mean = xs.iter().sum::<f64>() / n;
            let std = if xs.len() > 1 {
                (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            Some(AggregateRow {
                iteration: k + 1,
                trials: xs.len(),
                mean,
                std,
                min: xs.iter().copied().fold(f64::INFINITY, f64::min),
                max: xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            })
        })
        .collect()
}

/// `iteration,trials,mean_best_cost,std_best_cost,min_best_cost,max_best_cost`
pub fn write_aggregate_csv<W: Write>(rows: &[AggregateRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "iteration",
        "trials",
        "mean_best_cost",
        "std_best_cost",
        "min_best_cost",
        "max_best_cost",
    ])?;
    for r in rows {
        w.write_record([
            r.iteration.to_string(),
            r.trials.to_string(),
            format!("{:e}", r.mean),
            format!("{:e}", r.std),
            format!("{:e}", r.min),
            format!("{:e}", r.max),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `trial,seed,status,final_best_cost,error`
pub fn write_trials_csv<W: Write>(outcomes: &[TrialOutcome], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["trial", "seed", "status", "final_best_cost", "error"])?;
    for o in outcomes {
        let (status, best, err) = match &o.result {
            Ok(s) => (
                "ok",
                s.last().map_or(String::new(), |c| format!("{c:e}")),
                String::new(),
            ),
            Err(e) => ("failed", String::new(), e.clone()),
        };
        w.write_record([
            o.trial.to_string(),
            o.seed.to_string(),
            status.to_string(),
            best,
            err,
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Run `num_trials` independent trials with seeds `seed_base + t`. When `out_dir` is
/// given, trial `t` writes its artifacts to `out_dir/trial_<t>` (or directly into
/// `out_dir` for a single trial). Failures are recorded and do not stop the batch.
pub fn trial_batch(
    run: &ResolvedRun,
    num_trials: usize,
    seed_base: u64,
    out_dir: Option<&Path>,
) -> Result<(Vec<TrialOutcome>, Vec<AggregateRow>)> {
    if num_trials == 0 {
        return Err(Error::Config("trials must be at least 1".into()));
    }
    let outcomes: Vec<TrialOutcome> = (0..num_trials)
        .into_par_iter()
        .map(|t| {
            let seed = seed_base.wrapping_add(t as u64);
            let mut trial_run = run.clone();
            trial_run.solver.seed = seed;
            trial_run.echo.solver.seed = Some(seed);
            trial_run.echo.solver.trials = Some(1);
            let result = solve(&trial_run.problem, &trial_run.solver).and_then(|sol| {
                if let Some(dir) = out_dir {
                    let dir = if num_trials == 1 {
                        dir.to_path_buf()
                    } else {
                        dir.join(format!("trial_{t:03}"))
                    };
                    write_run_outputs(&dir, &trial_run, &sol)?;
                }
                Ok(sol.reports.iter().map(|r| r.best_cost).collect())
            });
            if let Err(e) = &result {
                error!("trial {t} (seed {seed}) failed: {e}");
            }
            TrialOutcome {
                trial: t,
                seed,
                result: result.map_err(|e| e.to_string()),
            }
        })
        .collect();
    let rows = aggregate(&outcomes);
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
        write_aggregate_csv(&rows, create(&dir.join("aggregate.csv"))?)?;
        write_trials_csv(&outcomes, create(&dir.join("trials.csv"))?)?;
    }
    Ok((outcomes, rows))
}

/// Resolve the configuration, run the batch and write every artifact.
pub fn run(args: &Args) -> Result<()> {
    let cfg = args.run_config()?;
    let resolved = cfg.resolve()?;
    info!(
        "{}: M={} M~={} N={} iterations={} mode={} trials={}",
        resolved.problem.name(),
        resolved.solver.particles,
        resolved.solver.erode_width,
        resolved.solver.steps,
        resolved.solver.iterations,
        resolved.solver.forward.mode,
        resolved.trials
    );
    fs::create_dir_all(&args.out_dir)?;
    let mut echo = create(&args.out_dir.join("config.toml"))?;
    echo.write_all(resolved.echo.to_toml_string()?.as_bytes())?;
    echo.flush()?;
    let (outcomes, _) = trial_batch(
        &resolved,
        resolved.trials,
        resolved.solver.seed,
        Some(&args.out_dir),
    )?;
    let failed: Vec<&TrialOutcome> = outcomes.iter().filter(|o| o.result.is_err()).collect();
    if failed.len() == outcomes.len() {
        let msg = failed[0].result.as_ref().err().cloned().unwrap_or_default();
        return Err(Error::Config(format!(
            "all {} trials failed; first error: {msg}",
            outcomes.len()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roi_spec_parsing() {
        assert_eq!(
            parse_roi("-6:6,-4:4").unwrap(),
            (vec![-6.0, -4.0], vec![6.0, 4.0])
        );
        assert!(parse_roi("1,2").is_err());
        assert!(parse_roi("a:1").is_err());
    }

    #[test]
    fn flags_override_defaults() {
        let args = Args::parse_from([
            "fbrrt",
            "--problem",
            "lqr1d",
            "--particles",
            "100",
            "--lambda-grid",
            "0.5,2",
            "--roi=-2:2",
            "--mode",
            "parallel",
        ]);
        let run = args.run_config().unwrap().resolve().unwrap();
        assert_eq!(run.problem.name(), "lqr1d");
        assert_eq!(run.solver.particles, 100);
        assert_eq!(run.solver.erode_width, 50);
        assert_eq!(run.solver.backward.lambda_grid, Some(vec![0.5, 2.0]));
        assert_eq!(run.solver.forward.roi.max()[0], 2.0);
        assert_eq!(run.solver.forward.mode, SamplingMode::Parallel);
    }

    fn outcome(t: usize, r: std::result::Result<Vec<f64>, String>) -> TrialOutcome {
        TrialOutcome {
            trial: t,
            seed: t as u64,
            result: r,
        }
    }

    #[test]
    fn aggregate_statistics() {
        let single = aggregate(&[outcome(0, Ok(vec![3.0, 2.0]))]);
        assert_eq!(single.len(), 2);
        assert_eq!(
            (single[1].mean, single[1].std, single[1].min, single[1].max),
            (2.0, 0.0, 2.0, 2.0)
        );
        let rows = aggregate(&[
            outcome(0, Ok(vec![3.0, 2.0])),
            outcome(1, Err("boom".into())),
            outcome(2, Ok(vec![5.0, 1.0])),
        ]);
        assert_eq!(rows[0].trials, 2);
        assert_eq!(rows[0].mean, 4.0);
        assert!((rows[0].std - 2f64.sqrt()).abs() < 1e-15);
        for r in &rows {
            assert!(r.min <= r.mean && r.mean <= r.max);
        }
    }
}
