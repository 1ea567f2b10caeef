//! Local-entropy-weighted least-squares Monte Carlo backward pass.
//!
//! Step `i` regresses the drift-corrected one-step targets `y_hat` of every path ending
//! at depth `i + 1` onto the features of its depth-`i` parent, weighting each row by
//! `exp(-(rho - min rho) / lambda)`.

use std::io::Write;

use log::{debug, warn};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{ChebyshevBasis, ValueModel};
use crate::error::{Error, Result};
use crate::problem::SocProblem;
use crate::tree::{BranchTree, NodeId};

pub const DEFAULT_LAMBDA: f64 = 1.0;
pub const DEFAULT_LAMBDA_GRID: [f64; 5] = [0.1, 0.3, 1.0, 3.0, 10.0];
/// Default ridge per sample; the absolute ridge is this times the tree width.
pub const DEFAULT_RIDGE_PER_SAMPLE: f64 = 1e-8;

/// Relative size of an R diagonal entry below which a column counts as dependent.
const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BackwardConfig {
    pub lambda: f64,
    /// Candidate temperatures; `None` disables the search.
    pub lambda_grid: Option<Vec<f64>>,
    /// Tikhonov weight used when the unregularised fit is rank deficient.
    pub ridge: f64,
}

impl BackwardConfig {
    /// Defaults for a tree of width `particles`.
    pub fn for_particles(particles: usize) -> Self {
        Self {
            lambda: DEFAULT_LAMBDA,
            lambda_grid: None,
            ridge: DEFAULT_RIDGE_PER_SAMPLE * particles as f64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!(
                "lambda must be positive, got {}",
                self.lambda
            )));
        }
        if !(self.ridge >= 0.0 && self.ridge.is_finite()) {
            return Err(Error::Config(format!(
                "ridge must be nonnegative, got {}",
                self.ridge
            )));
        }
        if let Some(grid) = &self.lambda_grid {
            if grid.is_empty() {
                return Err(Error::Config("lambda_grid must not be empty".into()));
            }
            if let Some(bad) = grid.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
                return Err(Error::Config(format!(
                    "lambda_grid entries must be positive, got {bad}"
                )));
            }
        }
        Ok(())
    }
}

/// Per-path quantities of one backward step.
#[derive(Clone, Debug, PartialEq)]
pub struct PathRecord {
    pub y_next: f64,
    pub z_next: DVector<f64>,
    pub mu: DVector<f64>,
    pub d: DVector<f64>,
    pub y_hat: f64,
    pub rho: f64,
}

/// Drifted one-step estimator for the edge `(x_i, k_i, x_{i+1})`.
///
/// The target control is the policy at `x_i` built from `grad V_{i+1}(x_i)`, so an
/// edge sampled with that same control has `d = 0` exactly. `sigma` is evaluated at
/// `(t_{i+1}, x_{i+1})`.
#[allow(clippy::too_many_arguments)]
pub fn estimator_step(
    problem: &SocProblem,
    model: &ValueModel,
    i: usize,
    dt: f64,
    x_i: &DVector<f64>,
    k_i: &DVector<f64>,
    x_next: &DVector<f64>,
    accumulated_cost: f64,
) -> Result<PathRecord> {
    let t_i = i as f64 * dt;
    let t_next = t_i + dt;
    let alpha = model.coefficients(i + 1)?;
    let basis = model.basis();
    let y_next = basis.value(alpha, x_next)?;
    let grad_next = basis.gradient(alpha, x_next)?;
    let z_next = problem
        .diffusion_model()
        .transpose_apply(t_next, x_next, &grad_next);
    let grad_policy = basis.gradient(alpha, x_i)?;
    let mu = problem.argmin_policy(t_i, x_i, &grad_policy)?;
    let drift_gap = problem.drift(t_i, x_i, &mu) - k_i;
    let d = problem.diffusion_model().solve(t_next, x_next, &drift_gap);
    let y_hat = y_next + (problem.running_cost(t_i, x_i, &mu) + z_next.dot(&d)) * dt;
    Ok(PathRecord {
        y_next,
        z_next,
        mu,
        d,
        y_hat,
        rho: y_next + accumulated_cost,
    })
}

/// Heuristic `rho_i = Phi(x_i) alpha_i + accumulated cost up to t_i`.
pub fn heuristic_rho(
    model: &ValueModel,
    i: usize,
    state: &DVector<f64>,
    accumulated_cost: f64,
) -> Result<f64> {
    let rho = model.value(i, state)? + accumulated_cost;
    if rho.is_finite() {
        Ok(rho)
    } else {
        Err(Error::non_finite(format!("heuristic at depth {i}")))
    }
}

/// Unnormalised local-entropy weights `exp(-(rho - min rho) / lambda)`.
///
/// `+inf` entries get weight zero; NaN and `-inf` are rejected.
pub fn entropy_weights(rho: &[f64], lambda: f64) -> Result<Vec<f64>> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::Config(format!(
            "lambda must be positive, got {lambda}"
        )));
    }
    if rho.iter().any(|r| r.is_nan() || *r == f64::NEG_INFINITY) {
        return Err(Error::non_finite("heuristic values"));
    }
    let min = rho.iter().copied().fold(f64::INFINITY, f64::min);
    if min == f64::INFINITY {
        return Err(Error::AllInfinite);
    }
    Ok(rho.iter().map(|r| (-(r - min) / lambda).exp()).collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeightedFit {
    pub alpha: DVector<f64>,
    /// `|| sqrt(W) (y - Phi alpha) ||`
    pub residual_norm: f64,
    /// Ratio of the largest to smallest |R_jj| of the factorisation.
    pub condition_estimate: f64,
}

/// Minimise `sum_j w_j (y_j - Phi_j alpha)^2 + ridge |alpha|^2` by QR of the
/// row-scaled system, with the ridge appended as `sqrt(ridge) I` rows.
pub fn weighted_fit(
    features: &DMatrix<f64>,
    targets: &DVector<f64>,
    weights: &[f64],
    ridge: f64,
) -> Result<WeightedFit> {
    let (m, k) = features.shape();
    if targets.len() != m {
        return Err(Error::Dimension {
            what: "regression targets",
            expected: m,
            actual: targets.len(),
        });
    }
    if weights.len() != m {
        return Err(Error::Dimension {
            what: "regression weights",
            expected: m,
            actual: weights.len(),
        });
    }
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(Error::Config(format!(
            "ridge must be nonnegative, got {ridge}"
        )));
    }
    if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
        return Err(Error::non_finite("regression weights"));
    }
    if features
        .iter()
        .chain(targets.iter())
        .any(|v| !v.is_finite())
    {
        return Err(Error::non_finite("regression data"));
    }
    if ridge == 0.0 {
        let positive = weights.iter().filter(|w| **w > 0.0).count();
        if positive < k {
            return Err(Error::TooFewSamples {
                needed: k,
                available: positive,
            });
        }
    }

    let extra = if ridge > 0.0 { k } else { 0 };
    let mut a = DMatrix::zeros(m + extra, k);
    let mut b = DVector::zeros(m + extra);
    for r in 0..m {
        let s = weights[r].sqrt();
        for c in 0..k {
            a[(r, c)] = features[(r, c)] * s;
        }
        b[r] = targets[r] * s;
    }
    let sr = ridge.sqrt();
    for c in 0..extra {
        a[(m + c, c)] = sr;
    }

    let qr = a.clone().qr();
    let r = qr.r();
    let diag: Vec<f64> = (0..k).map(|j| r[(j, j)].abs()).collect();
    let max = diag.iter().copied().fold(0.0, f64::max);
    let deficient = diag.iter().filter(|d| **d <= RANK_TOLERANCE * max).count();
    if deficient > 0 || max == 0.0 {
        return Err(Error::RankDeficient {
            deficient: deficient.max(1),
            columns: k,
        });
    }
    let mut qtb = b.clone();
    qr.q_tr_mul(&mut qtb);
    let rhs = qtb.rows(0, k).into_owned();
    let alpha = r.solve_upper_triangular(&rhs).ok_or(Error::RankDeficient {
        deficient: 1,
        columns: k,
    })?;
    let fitted = a.rows(0, m) * &alpha;
    let residual_norm = (fitted - b.rows(0, m)).norm();
    let min = diag.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(WeightedFit {
        alpha,
        residual_norm,
        condition_estimate: max / min,
    })
}

/// Unregularised fit, falling back to the ridge fit when the weighted system is
/// rank deficient or has too few positively weighted rows.
fn fit_with_fallback(
    features: &DMatrix<f64>,
    targets: &DVector<f64>,
    weights: &[f64],
    ridge: f64,
) -> Result<(WeightedFit, bool)> {
    match weighted_fit(features, targets, weights, 0.0) {
        Ok(fit) => Ok((fit, false)),
        Err(Error::RankDeficient { .. } | Error::TooFewSamples { .. }) if ridge > 0.0 => {
            weighted_fit(features, targets, weights, ridge).map(|f| (f, true))
        }
        Err(e) => Err(e),
    }
}

pub(crate) fn feature_matrix<'a, I>(
    basis: &ChebyshevBasis,
    states: I,
    rows: usize,
) -> Result<DMatrix<f64>>
where
    I: IntoIterator<Item = &'a DVector<f64>>,
{
    let k = basis.num_features();
    let mut buf = vec![0.0; rows * k];
    for (row, x) in buf.chunks_exact_mut(k).zip(states) {
        if x.len() != basis.state_dim() {
            return Err(Error::Dimension {
                what: "regression state",
                expected: basis.state_dim(),
                actual: x.len(),
            });
        }
        basis.write_features(x, row);
    }
    Ok(DMatrix::from_row_slice(rows, k, &buf))
}

/// Fit diagnostics for one time index.
#[derive(Clone, Debug, PartialEq)]
pub struct StepDiagnostics {
    pub time_index: usize,
    /// `sum theta / max theta`
    pub effective_sample_size: f64,
    pub residual_norm: f64,
    pub condition_estimate: f64,
    pub regularized: bool,
}

#[derive(Clone, Debug)]
pub struct BackwardOutput {
    pub model: ValueModel,
    pub lambda: f64,
    /// Heuristic per node, indexed by depth (depth 0 is empty).
    pub heuristics: Vec<Vec<(NodeId, f64)>>,
    /// Ordered from `N` down to 1.
    pub diagnostics: Vec<StepDiagnostics>,
}

fn regress(
    step: usize,
    basis: &ChebyshevBasis,
    states: Vec<&DVector<f64>>,
    targets: DVector<f64>,
    rho: &[f64],
    config: &BackwardConfig,
    lambda: f64,
) -> Result<(DVector<f64>, StepDiagnostics)> {
    let wrap = |e: Error| Error::Fit {
        step,
        source: Box::new(e),
    };
    let theta = entropy_weights(rho, lambda).map_err(wrap)?;
    let phi = feature_matrix(basis, states.iter().copied(), states.len()).map_err(wrap)?;
    let (fit, regularized) =
        fit_with_fallback(&phi, &targets, &theta, config.ridge).map_err(wrap)?;
    if regularized {
        debug!(
            "step {step}: rank-deficient weighted system, used ridge {}",
            config.ridge
        );
    }
    let diag = StepDiagnostics {
        time_index: step,
        effective_sample_size: theta.iter().sum::<f64>(),
        residual_norm: fit.residual_norm,
        condition_estimate: fit.condition_estimate,
        regularized,
    };
    Ok((fit.alpha, diag))
}

/// Fit `alpha_N .. alpha_1` on `tree` at temperature `lambda`.
pub fn backward_pass_with_lambda(
    tree: &BranchTree,
    problem: &SocProblem,
    basis: &ChebyshevBasis,
    config: &BackwardConfig,
    lambda: f64,
) -> Result<BackwardOutput> {
    config.validate()?;
    let n = tree.steps();
    let dt = tree.dt();
    let mut model = ValueModel::new(basis.clone(), n);
    let mut heuristics: Vec<Vec<(NodeId, f64)>> = vec![Vec::new(); n + 1];
    let mut diagnostics = Vec::with_capacity(n);

    let terminal = tree.paths_at_time(n)?;
    let g: Vec<f64> = terminal
        .iter()
        .map(|p| problem.terminal_cost(p.state))
        .collect();
    for (p, gv) in terminal.iter().zip(&g) {
        if !gv.is_finite() {
            return Err(Error::NonFinitePath {
                step: n,
                path: p.serial,
                what: "terminal cost",
            });
        }
    }
    let rho_n: Vec<f64> = terminal
        .iter()
        .zip(&g)
        .map(|(p, gv)| p.accumulated_cost + gv)
        .collect();
    let (alpha, diag) = regress(
        n,
        basis,
        terminal.iter().map(|p| p.state).collect(),
        DVector::from_vec(g),
        &rho_n,
        config,
        lambda,
    )?;
    model.set(n, alpha)?;
    diagnostics.push(diag);
    heuristics[n] = terminal.iter().map(|p| p.node).zip(rho_n).collect();

    for i in (1..n).rev() {
        let paths = tree.paths_at_time(i + 1)?;
        let records: Vec<PathRecord> = paths
            .par_iter()
            .map(|p| {
                let parent = p.parent_state.expect("non-root path has a parent");
                let edge = p.edge.expect("non-root path has an edge");
                let rec = estimator_step(
                    problem,
                    &model,
                    i,
                    dt,
                    parent,
                    &edge.drift,
                    p.state,
                    p.accumulated_cost,
                )
                .map_err(|e| Error::Fit {
                    step: i,
                    source: Box::new(e),
                })?;
                for (what, v) in [("y_hat", rec.y_hat), ("rho", rec.rho)] {
                    if !v.is_finite() {
                        return Err(Error::NonFinitePath {
                            step: i,
                            path: p.serial,
                            what,
                        });
                    }
                }
                Ok(rec)
            })
            .collect::<Result<_>>()?;
        let rho: Vec<f64> = records.iter().map(|r| r.rho).collect();
        let targets = DVector::from_iterator(records.len(), records.iter().map(|r| r.y_hat));
        let states = paths
            .iter()
            .map(|p| p.parent_state.expect("non-root path has a parent"))
            .collect();
        let (alpha, diag) = regress(i, basis, states, targets, &rho, config, lambda)?;
        model.set(i, alpha)?;
        diagnostics.push(diag);
        if i + 1 < n {
            heuristics[i + 1] = paths.iter().map(|p| p.node).zip(rho).collect();
        }
    }

    heuristics[1] = tree
        .paths_at_time(1)?
        .iter()
        .map(|p| heuristic_rho(&model, 1, p.state, p.accumulated_cost).map(|r| (p.node, r)))
        .collect::<Result<_>>()?;

    Ok(BackwardOutput {
        model,
        lambda,
        heuristics,
        diagnostics,
    })
}

/// Backward pass at the configured `lambda`.
pub fn backward_pass(
    tree: &BranchTree,
    problem: &SocProblem,
    basis: &ChebyshevBasis,
    config: &BackwardConfig,
) -> Result<BackwardOutput> {
    backward_pass_with_lambda(tree, problem, basis, config, config.lambda)
}

#[derive(Clone, Debug)]
pub struct LambdaSearch {
    pub output: BackwardOutput,
    pub cost: f64,
    /// Every candidate with its score, `None` when the fit or scoring failed.
    pub candidates: Vec<(f64, Option<f64>)>,
}

/// Run one backward pass per grid entry and keep the model with the lowest `score`.
/// Ties go to the smaller lambda; failed candidates are skipped with a warning.
pub fn lambda_search<F>(
    tree: &BranchTree,
    problem: &SocProblem,
    basis: &ChebyshevBasis,
    config: &BackwardConfig,
    grid: &[f64],
    mut score: F,
) -> Result<LambdaSearch>
where
    F: FnMut(&ValueModel) -> Result<f64>,
{
    if grid.is_empty() {
        return Err(Error::Config("lambda_grid must not be empty".into()));
    }
    let mut sorted = grid.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut best: Option<(BackwardOutput, f64)> = None;
    let mut candidates = Vec::with_capacity(sorted.len());
    for &lambda in &sorted {
        let scored = backward_pass_with_lambda(tree, problem, basis, config, lambda)
            .and_then(|out| score(&out.model).map(|c| (out, c)));
        match scored {
            Ok((out, cost)) if cost.is_finite() => {
                candidates.push((lambda, Some(cost)));
                if best.as_ref().is_none_or(|(_, b)| cost < *b) {
                    best = Some((out, cost));
                }
            }
            Ok((_, cost)) => {
                warn!("lambda {lambda}: non-finite score {cost}, skipped");
                candidates.push((lambda, None));
            }
            Err(e) => {
                warn!("lambda {lambda}: {e}, skipped");
                candidates.push((lambda, None));
            }
        }
    }
    let (output, cost) = best.ok_or(Error::NoLambdaCandidate)?;
    Ok(LambdaSearch {
        output,
        cost,
        candidates,
    })
}

/// CSV: `iteration,time_index,effective_sample_size,residual_norm,condition_estimate,regularized`,
/// one block of rows per iteration (iterations numbered from 1).
pub fn write_diagnostics_csv<W: Write>(
    per_iteration: &[Vec<StepDiagnostics>],
    writer: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "iteration",
        "time_index",
        "effective_sample_size",
        "residual_norm",
        "condition_estimate",
        "regularized",
    ])?;
    for (k, diagnostics) in per_iteration.iter().enumerate() {
        for d in diagnostics {
            w.write_record([
                (k + 1).to_string(),
                d.time_index.to_string(),
                format!("{:e}", d.effective_sample_size),
                format!("{:e}", d.residual_norm),
                format!("{:e}", d.condition_estimate),
                (d.regularized as u8).to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
