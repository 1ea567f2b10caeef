//! Outer forward/backward iteration and Monte Carlo policy evaluation.

use std::io::Write;
use std::time::Instant;

use log::{info, warn};
use nalgebra::DVector;
use rayon::prelude::*;

use crate::backward::{backward_pass, lambda_search, BackwardConfig, StepDiagnostics};
use crate::basis::ValueModel;
use crate::erode::erode;
use crate::error::{Error, Result};
use crate::forward::{
    forward_pass, noise_sample, parallel_forward_pass, target_control, ForwardConfig, SamplingMode,
};
use crate::problem::SocProblem;
use crate::rng::{Purpose, Streams};
use crate::tree::BranchTree;

pub const DEFAULT_ROLLOUTS: usize = 256;

/// Feedback law `u_i = pi(t_i, x_i)` used for rollouts.
pub trait Policy: Sync {
    fn control(
        &self,
        problem: &SocProblem,
        i: usize,
        t: f64,
        x: &DVector<f64>,
    ) -> Result<DVector<f64>>;
}

/// Target policy of a fitted model; step `i` uses `alpha_{i+1}`.
pub struct ModelPolicy<'a>(pub &'a ValueModel);

impl Policy for ModelPolicy<'_> {
    fn control(
        &self,
        problem: &SocProblem,
        i: usize,
        _t: f64,
        x: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        target_control(problem, self.0, i, x)?.ok_or(Error::UndefinedTimeIndex(i + 1))
    }
}

/// `u = 0` everywhere.
pub struct ZeroPolicy;

impl Policy for ZeroPolicy {
    fn control(
        &self,
        problem: &SocProblem,
        _i: usize,
        _t: f64,
        _x: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        Ok(DVector::zeros(problem.control_dim()))
    }
}

/// Policy from a closure `(t, x) -> u`.
pub struct FnPolicy<F>(pub F);

impl<F> Policy for FnPolicy<F>
where
    F: Fn(f64, &DVector<f64>) -> DVector<f64> + Sync,
{
    fn control(
        &self,
        _problem: &SocProblem,
        _i: usize,
        t: f64,
        x: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        Ok((self.0)(t, x))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CostEstimate {
    pub mean: f64,
    pub std_error: f64,
    /// Rollouts that produced a finite cost.
    pub finite: usize,
    /// Rollouts excluded for non-finite states or costs.
    pub excluded: usize,
}

fn rollout<P: Policy + ?Sized>(
    problem: &SocProblem,
    policy: &P,
    steps: usize,
    streams: Streams,
    r: usize,
) -> Option<f64> {
    let dt = problem.horizon() / steps as f64;
    let mut rng = streams.rng(Purpose::Rollout, r as u64);
    let mut x = problem.initial_state().clone();
    let mut cost = 0.0;
    for i in 0..steps {
        let t = i as f64 * dt;
        let u = policy.control(problem, i, t, &x).ok()?;
        cost += problem.running_cost(t, &x, &u) * dt;
        let drift = problem.drift(t, &x, &u);
        let w = noise_sample(&mut rng, problem.state_dim(), dt);
        x = problem.euler_step(t, &x, &drift, &w, dt);
        if x.iter().any(|v| !v.is_finite()) {
            return None;
        }
    }
    let total = cost + problem.terminal_cost(&x);
    total.is_finite().then_some(total)
}

/// Mean and standard error of the total cost over `rollouts` independent trajectories
/// from `x_0`. Rollout `r` draws from stream `r` of `streams`; the reduction runs in
/// rollout order, so the result does not depend on the thread count.
pub fn policy_cost<P: Policy + ?Sized>(
    problem: &SocProblem,
    policy: &P,
    steps: usize,
    rollouts: usize,
    streams: Streams,
) -> Result<CostEstimate> {
    if steps == 0 || rollouts == 0 {
        return Err(Error::Config(
            "policy_cost needs at least one step and one rollout".into(),
        ));
    }
    let costs: Vec<Option<f64>> = (0..rollouts)
        .into_par_iter()
        .map(|r| rollout(problem, policy, steps, streams, r))
        .collect();
    let finite: Vec<f64> = costs.iter().flatten().copied().collect();
    let excluded = rollouts - finite.len();
    if excluded > 0 {
        warn!("policy_cost: excluded {excluded} of {rollouts} non-finite rollouts");
    }
    if finite.is_empty() {
        return Err(Error::NoFiniteRollouts);
    }
    let n = finite.len() as f64;
    let mean = finite.iter().sum::<f64>() / n;
    let std_error = if finite.len() > 1 {
        (finite.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
    } else {
        0.0
    };
    Ok(CostEstimate {
        mean,
        std_error,
        finite: finite.len(),
        excluded,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    /// Tree width after each forward pass (`M`).
    pub particles: usize,
    /// Width after erosion (`M~`).
    pub erode_width: usize,
    /// Time steps (`N`).
    pub steps: usize,
    pub iterations: usize,
    pub rollouts: usize,
    pub seed: u64,
    pub forward: ForwardConfig,
    pub backward: BackwardConfig,
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.particles == 0 {
            return Err(Error::Config("particles must be positive".into()));
        }
        if self.erode_width == 0 || self.erode_width >= self.particles {
            return Err(Error::Config(format!(
                "erode width must lie in 1..{}, got {}",
                self.particles, self.erode_width
            )));
        }
        if self.steps < 2 {
            return Err(Error::Config(format!(
                "steps must be at least 2, got {}",
                self.steps
            )));
        }
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be positive".into()));
        }
        if self.rollouts == 0 {
            return Err(Error::Config("rollouts must be positive".into()));
        }
        self.forward.validate()?;
        self.backward.validate()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IterationReport {
    pub iteration: usize,
    pub policy_cost: f64,
    pub std_error: f64,
    /// Rollouts left out of `policy_cost` because they went non-finite.
    pub excluded_rollouts: usize,
    /// Minimum of `policy_cost` over iterations `1..=iteration`.
    pub best_cost: f64,
    pub lambda: f64,
    /// Seconds spent in this iteration.
    pub wall_time: f64,
    /// Width at every depth after the forward pass.
    pub forward_width: usize,
    /// Smallest and largest width over depths `1..=N` at the end of the iteration.
    pub min_width: usize,
    pub max_width: usize,
    /// Time steps whose fit needed the ridge fallback.
    pub regularized_steps: usize,
}

#[derive(Clone, Debug)]
pub struct Solution {
    /// Model of the lowest-cost iteration.
    pub best_model: ValueModel,
    pub best_iteration: usize,
    /// Model of the final iteration.
    pub last_model: ValueModel,
    pub reports: Vec<IterationReport>,
    /// Backward-pass diagnostics, one entry per iteration.
    pub diagnostics: Vec<Vec<StepDiagnostics>>,
    /// Tree at the end of the run.
    pub tree: BranchTree,
}

/// Run the forward, backward, policy-cost and erode stages `iterations` times.
pub fn solve(problem: &SocProblem, config: &SolverConfig) -> Result<Solution> {
    config.validate()?;
    if config.forward.roi.dim() != problem.state_dim() {
        return Err(Error::Dimension {
            what: "roi",
            expected: problem.state_dim(),
            actual: config.forward.roi.dim(),
        });
    }
    let n = config.steps;
    let dt = problem.horizon() / n as f64;
    let basis = config.forward.roi.basis();
    let streams = Streams::new(config.seed);
    let mut forward_rng = streams.rng(Purpose::Forward, 0);
    let mut tree = BranchTree::new(problem.initial_state().clone(), n, dt);

    let mut reports: Vec<IterationReport> = Vec::with_capacity(config.iterations);
    let mut diagnostics = Vec::with_capacity(config.iterations);
    let mut last: Option<ValueModel> = None;
    let mut best: Option<(ValueModel, usize, f64)> = None;

    for k in 1..=config.iterations {
        let start = Instant::now();
        match config.forward.mode {
            SamplingMode::Rrt => {
                let cfg = if k == 1 {
                    ForwardConfig {
                        eps_rrt: 1.0,
                        eps_opt: 0.0,
                        ..config.forward.clone()
                    }
                } else {
                    config.forward.clone()
                };
                forward_pass(
                    &mut tree,
                    last.as_ref(),
                    problem,
                    &cfg,
                    config.particles,
                    &mut forward_rng,
                )
                .map_err(|e| e.at_stage(k, "forward"))?;
            }
            SamplingMode::Parallel => {
                tree = parallel_forward_pass(
                    problem,
                    last.as_ref(),
                    &config.forward.roi,
                    config.particles,
                    n,
                    streams.derive(Purpose::Parallel, k as u64),
                )
                .map_err(|e| e.at_stage(k, "forward"))?;
            }
        }
        let forward_width = tree.width(n);

        let rollout_streams = streams.derive(Purpose::Rollout, k as u64);
        let (output, estimate) = match &config.backward.lambda_grid {
            Some(grid) => {
                let search_streams = streams.derive(Purpose::LambdaRollout, k as u64);
                let search = lambda_search(&tree, problem, &basis, &config.backward, grid, |m| {
                    policy_cost(problem, &ModelPolicy(m), n, config.rollouts, search_streams)
                        .map(|c| c.mean)
                })
                .map_err(|e| e.at_stage(k, "backward"))?;
                let estimate = policy_cost(
                    problem,
                    &ModelPolicy(&search.output.model),
                    n,
                    config.rollouts,
                    rollout_streams,
                )
                .map_err(|e| e.at_stage(k, "policy cost"))?;
                (search.output, estimate)
            }
            None => {
                let output = backward_pass(&tree, problem, &basis, &config.backward)
                    .map_err(|e| e.at_stage(k, "backward"))?;
                let estimate = policy_cost(
                    problem,
                    &ModelPolicy(&output.model),
                    n,
                    config.rollouts,
                    rollout_streams,
                )
                .map_err(|e| e.at_stage(k, "policy cost"))?;
                (output, estimate)
            }
        };

        if config.forward.mode == SamplingMode::Rrt {
            erode(&mut tree, &output.heuristics, config.erode_width)
                .map_err(|e| e.at_stage(k, "erode"))?;
        }

        if best.as_ref().is_none_or(|(_, _, c)| estimate.mean < *c) {
            best = Some((output.model.clone(), k, estimate.mean));
        }
        let best_cost = best.as_ref().map(|b| b.2).expect("set above");
        let widths = &tree.widths()[1..];
        let report = IterationReport {
            iteration: k,
            policy_cost: estimate.mean,
            std_error: estimate.std_error,
            excluded_rollouts: estimate.excluded,
            best_cost,
            lambda: output.lambda,
            wall_time: start.elapsed().as_secs_f64(),
            forward_width,
            min_width: widths.iter().copied().min().unwrap_or(0),
            max_width: widths.iter().copied().max().unwrap_or(0),
            regularized_steps: output.diagnostics.iter().filter(|d| d.regularized).count(),
        };
        info!(
            "iteration {k}: cost {:.6} (se {:.2e}), best {:.6}, lambda {}, {:.2}s",
            report.policy_cost, report.std_error, report.best_cost, report.lambda, report.wall_time
        );
        reports.push(report);
        diagnostics.push(output.diagnostics);
        last = Some(output.model);
    }

    let (best_model, best_iteration, _) = best.expect("at least one iteration");
    Ok(Solution {
        best_model,
        best_iteration,
        last_model: last.expect("at least one iteration"),
        reports,
        diagnostics,
        tree,
    })
}

/// Reports CSV. Wall time is left out so fixed-seed runs produce identical bytes; see
/// [`write_timings_csv`].
pub fn write_reports_csv<W: Write>(reports: &[IterationReport], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "iteration",
        "policy_cost",
        "std_error",
        "excluded_rollouts",
        "best_cost",
        "lambda",
        "forward_width",
        "min_width",
        "max_width",
        "regularized_steps",
    ])?;
    for r in reports {
        w.write_record([
            r.iteration.to_string(),
            format!("{:e}", r.policy_cost),
            format!("{:e}", r.std_error),
            r.excluded_rollouts.to_string(),
            format!("{:e}", r.best_cost),
            format!("{:e}", r.lambda),
            r.forward_width.to_string(),
            r.min_width.to_string(),
            r.max_width.to_string(),
            r.regularized_steps.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `iteration,wall_time_s`
pub fn write_timings_csv<W: Write>(reports: &[IterationReport], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["iteration", "wall_time_s"])?;
    for r in reports {
        w.write_record([r.iteration.to_string(), format!("{:e}", r.wall_time)])?;
    }
    w.flush()?;
    Ok(())
}
