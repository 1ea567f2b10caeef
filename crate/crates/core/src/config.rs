//! Run configuration: TOML sections `[problem]`, `[solver]`, `[forward]`, `[backward]`.
//!
//! Every key is optional in the file. [`RunConfig::resolve`] fills in the defaults and
//! returns a copy with every key set, which is what gets echoed next to the outputs.

use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::backward::{
    BackwardConfig, DEFAULT_LAMBDA, DEFAULT_LAMBDA_GRID, DEFAULT_RIDGE_PER_SAMPLE,
};
use crate::error::{Error, Result};
use crate::forward::{ForwardConfig, Roi, SamplingMode};
use crate::problem::{make_problem, SocProblem};
use crate::solver::{SolverConfig, DEFAULT_ROLLOUTS};

pub const DEFAULT_PROBLEM: &str = "double_integrator";
pub const DEFAULT_PARTICLES: usize = 1024;
pub const DEFAULT_ITERATIONS: usize = 10;
pub const DEFAULT_EPS_RRT: f64 = 0.5;
pub const DEFAULT_EPS_OPT: f64 = 0.5;

/// Per-problem defaults that are not part of the problem itself.
#[derive(Clone, Debug, PartialEq)]
pub struct ProblemDefaults {
    pub steps: usize,
    /// `M~ / M`
    pub erode_fraction: f64,
    pub roi_min: Vec<f64>,
    pub roi_max: Vec<f64>,
    /// Entropy temperature; the default search grid is scaled by it.
    pub lambda: f64,
}

pub fn problem_defaults(name: &str) -> Result<ProblemDefaults> {
    use std::f64::consts::PI;
    let d = match name {
        "lqr1d" => ProblemDefaults {
            steps: 50,
            erode_fraction: 0.5,
            roi_min: vec![-3.0],
            roi_max: vec![3.0],
            lambda: DEFAULT_LAMBDA,
        },
        "double_integrator" => ProblemDefaults {
            steps: 64,
            erode_fraction: 0.5,
            roi_min: vec![-6.0, -4.0],
            roi_max: vec![6.0, 4.0],
            lambda: DEFAULT_LAMBDA,
        },
        "double_pendulum" => ProblemDefaults {
            steps: 80,
            erode_fraction: 0.75,
            roi_min: vec![-PI / 2.0, -PI / 2.0, -10.0, -10.0],
            roi_max: vec![PI / 2.0, PI / 2.0, 10.0, 10.0],
            lambda: DEFAULT_LAMBDA,
        },
        "quadcopter" => ProblemDefaults {
            steps: 64,
            erode_fraction: 0.5,
            roi_min: vec![-1.0, -1.0, -4.0, -4.0, -3.0, -3.0, -2.0, -2.0],
            roi_max: vec![1.0, 1.0, 4.0, 4.0, 3.0, 3.0, 2.0, 2.0],
            // terminal weights of 100 put heuristic spreads in the hundreds
            lambda: 100.0,
        },
        other => return Err(Error::UnknownProblem(other.to_string())),
    };
    Ok(d)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemSection {
    pub name: Option<String>,
    pub horizon: Option<f64>,
    pub x0: Option<Vec<f64>>,
    pub control_weight: Option<f64>,
    pub terminal_weights: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub mode: Option<SamplingMode>,
    pub particles: Option<usize>,
    pub erode: Option<usize>,
    pub steps: Option<usize>,
    pub iterations: Option<usize>,
    pub rollouts: Option<usize>,
    pub seed: Option<u64>,
    pub trials: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForwardSection {
    pub eps_rrt: Option<f64>,
    pub eps_opt: Option<f64>,
    pub roi_min: Option<Vec<f64>>,
    pub roi_max: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackwardSection {
    pub lambda: Option<f64>,
    pub lambda_search: Option<bool>,
    pub lambda_grid: Option<Vec<f64>>,
    pub ridge: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemSection,
    pub solver: SolverSection,
    pub forward: ForwardSection,
    pub backward: BackwardSection,
}

/// Everything needed to launch a run.
#[derive(Clone, Debug)]
pub struct ResolvedRun {
    pub problem: SocProblem,
    pub solver: SolverConfig,
    pub trials: usize,
    /// The input with every default filled in.
    pub echo: RunConfig,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("cannot read config file {}: {e}", path.display()))
        })?;
        Self::from_toml_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn resolve(&self) -> Result<ResolvedRun> {
        let name = self
            .problem
            .name
            .clone()
            .unwrap_or_else(|| DEFAULT_PROBLEM.to_string());
        let defaults = problem_defaults(&name)?;
        let mut problem = make_problem(&name)?;
        if let Some(h) = self.problem.horizon {
            problem = problem.with_horizon(h)?;
        }
        if let Some(x0) = &self.problem.x0 {
            problem = problem.with_initial_state(DVector::from_column_slice(x0))?;
        }
        if let Some(w) = self.problem.control_weight {
            problem = problem.with_control_weight(w)?;
        }
        if let Some(c) = &self.problem.terminal_weights {
            problem = problem.with_terminal_weights(DVector::from_column_slice(c))?;
        }

        let particles = self.solver.particles.unwrap_or(DEFAULT_PARTICLES);
        let erode_width = self.solver.erode.unwrap_or(
            ((particles as f64 * defaults.erode_fraction).round() as usize)
                .clamp(1, particles.max(2) - 1),
        );
        let steps = self.solver.steps.unwrap_or(defaults.steps);
        let iterations = self.solver.iterations.unwrap_or(DEFAULT_ITERATIONS);
        let rollouts = self.solver.rollouts.unwrap_or(DEFAULT_ROLLOUTS);
        let seed = self.solver.seed.unwrap_or(0);
        let trials = self.solver.trials.unwrap_or(1);
        let mode = self.solver.mode.unwrap_or_default();
        if trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }

        let roi_min = self.forward.roi_min.clone().unwrap_or(defaults.roi_min);
        let roi_max = self.forward.roi_max.clone().unwrap_or(defaults.roi_max);
        let roi = Roi::new(
            DVector::from_column_slice(&roi_min),
            DVector::from_column_slice(&roi_max),
        )?;
        if roi.dim() != problem.state_dim() {
            return Err(Error::Config(format!(
                "roi has {} coordinates, problem {name} has state dimension {}",
                roi.dim(),
                problem.state_dim()
            )));
        }
        let forward = ForwardConfig {
            eps_rrt: self.forward.eps_rrt.unwrap_or(DEFAULT_EPS_RRT),
            eps_opt: self.forward.eps_opt.unwrap_or(DEFAULT_EPS_OPT),
            roi,
            mode,
        };

        let lambda = self.backward.lambda.unwrap_or(defaults.lambda);
        let lambda_search = self.backward.lambda_search.unwrap_or(false);
        let lambda_grid = self.backward.lambda_grid.clone().unwrap_or_else(|| {
            DEFAULT_LAMBDA_GRID
                .iter()
                .map(|g| g * defaults.lambda)
                .collect()
        });
        let ridge = self
            .backward
            .ridge
            .unwrap_or(DEFAULT_RIDGE_PER_SAMPLE * particles as f64);
        let backward = BackwardConfig {
            lambda,
            lambda_grid: lambda_search.then(|| lambda_grid.clone()),
            ridge,
        };

        let solver = SolverConfig {
            particles,
            erode_width,
            steps,
            iterations,
            rollouts,
            seed,
            forward: forward.clone(),
            backward,
        };
        solver.validate()?;

        let echo = RunConfig {
            problem: ProblemSection {
                name: Some(name),
                horizon: Some(problem.horizon()),
                x0: Some(problem.initial_state().as_slice().to_vec()),
                control_weight: Some(problem.control_cost().weight()),
                terminal_weights: Some(problem.terminal_weights().as_slice().to_vec()),
            },
            solver: SolverSection {
                mode: Some(mode),
                particles: Some(particles),
                erode: Some(erode_width),
                steps: Some(steps),
                iterations: Some(iterations),
                rollouts: Some(rollouts),
                seed: Some(seed),
                trials: Some(trials),
            },
            forward: ForwardSection {
                eps_rrt: Some(forward.eps_rrt),
                eps_opt: Some(forward.eps_opt),
                roi_min: Some(roi_min),
                roi_max: Some(roi_max),
            },
            backward: BackwardSection {
                lambda: Some(lambda),
                lambda_search: Some(lambda_search),
                lambda_grid: Some(lambda_grid),
                ridge: Some(ridge),
            },
        };
        Ok(ResolvedRun {
            problem,
            solver,
            trials,
            echo,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::PROBLEM_NAMES;

    #[test]
    fn empty_file_resolves_to_defaults() {
        let cfg = RunConfig::from_toml_str("").unwrap();
        let run = cfg.resolve().unwrap();
        assert_eq!(run.problem.name(), DEFAULT_PROBLEM);
        assert_eq!(run.solver.particles, 1024);
        assert_eq!(run.solver.erode_width, 512);
        assert_eq!(run.solver.steps, 64);
        assert_eq!(run.solver.rollouts, 256);
        assert_eq!(run.solver.forward.eps_rrt, 0.5);
        assert_eq!(run.solver.backward.lambda_grid, None);
        assert!((run.solver.backward.ridge - 1024e-8).abs() < 1e-18);
    }

    #[test]
    fn echo_is_a_fixed_point() {
        let text = r#"
            [problem]
            name = "double_pendulum"
            [solver]
            particles = 200
            seed = 9
            mode = "parallel_baseline"
            [backward]
            lambda_search = true
        "#;
        let run = RunConfig::from_toml_str(text).unwrap().resolve().unwrap();
        assert_eq!(run.solver.erode_width, 150);
        assert_eq!(run.solver.forward.mode, SamplingMode::Parallel);
        assert_eq!(
            run.solver.backward.lambda_grid.as_deref(),
            Some(&DEFAULT_LAMBDA_GRID[..])
        );
        let echoed = run.echo.to_toml_string().unwrap();
        let again = RunConfig::from_toml_str(&echoed)
            .unwrap()
            .resolve()
            .unwrap();
        assert_eq!(again.echo, run.echo);
        assert_eq!(again.solver, run.solver);
    }

    #[test]
    fn every_problem_has_consistent_defaults() {
        for name in PROBLEM_NAMES {
            let d = problem_defaults(name).unwrap();
            let p = make_problem(name).unwrap();
            assert_eq!(d.roi_min.len(), p.state_dim());
            let cfg = RunConfig {
                problem: ProblemSection {
                    name: Some(name.to_string()),
                    ..Default::default()
                },
                ..Default::default()
            };
            cfg.resolve().unwrap();
        }
    }

    #[test]
    fn bad_inputs_are_rejected() {
        assert!(RunConfig::from_toml_str("[solver]\nbogus = 1").is_err());
        assert!(RunConfig::from_toml_str("[problem]\nname = \"nope\"")
            .unwrap()
            .resolve()
            .is_err());
        let wrong_roi = "[forward]\nroi_min = [-1.0]\nroi_max = [1.0]";
        assert!(RunConfig::from_toml_str(wrong_roi)
            .unwrap()
            .resolve()
            .is_err());
        let bad_erode = "[solver]\nparticles = 10\nerode = 10";
        assert!(RunConfig::from_toml_str(bad_erode)
            .unwrap()
            .resolve()
            .is_err());
        let err = RunConfig::from_path(Path::new("/nonexistent/run.toml")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/run.toml"));
    }
}
