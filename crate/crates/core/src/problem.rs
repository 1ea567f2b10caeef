//! Stochastic optimal control problems.
//!
//! A [`SocProblem`] bundles control-affine dynamics `f(t, x, u) = a(t, x) + B(t, x) u`,
//! an invertible diffusion, a control-only running cost, a diagonal quadratic terminal
//! cost and a box of admissible controls. The four named problems used throughout the
//! crate are built by the `make_*` constructors.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Control-affine drift: `f(t, x, u) = free_drift(t, x) + control_matrix(t, x) * u`.
pub trait Dynamics: Send + Sync {
    fn state_dim(&self) -> usize;
    fn control_dim(&self) -> usize;
    fn free_drift(&self, t: f64, x: &DVector<f64>) -> DVector<f64>;
    fn control_matrix(&self, t: f64, x: &DVector<f64>) -> DMatrix<f64>;
}

/// Diffusion matrix `sigma`. Only constant diffusions are modelled; the `(t, x)`
/// arguments are kept so call sites read like the continuous-time equations.
#[derive(Clone, Debug, PartialEq)]
pub enum Diffusion {
    Diagonal(DVector<f64>),
    Full {
        sigma: DMatrix<f64>,
        inverse: DMatrix<f64>,
    },
}

impl Diffusion {
    pub fn diagonal(entries: &[f64]) -> Result<Self> {
        if entries.iter().any(|s| !s.is_finite() || *s == 0.0) {
            return Err(Error::Config(
                "diffusion diagonal must be finite and non-zero".into(),
            ));
        }
        Ok(Diffusion::Diagonal(DVector::from_column_slice(entries)))
    }

    pub fn full(sigma: DMatrix<f64>) -> Result<Self> {
        let inverse = sigma
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Config("diffusion matrix is singular".into()))?;
        Ok(Diffusion::Full { sigma, inverse })
    }

    pub fn dim(&self) -> usize {
        match self {
            Diffusion::Diagonal(d) => d.len(),
            Diffusion::Full { sigma, .. } => sigma.nrows(),
        }
    }

    pub fn matrix(&self, _t: f64, _x: &DVector<f64>) -> DMatrix<f64> {
        match self {
            Diffusion::Diagonal(d) => DMatrix::from_diagonal(d),
            Diffusion::Full { sigma, .. } => sigma.clone(),
        }
    }

    pub fn inverse(&self, _t: f64, _x: &DVector<f64>) -> DMatrix<f64> {
        match self {
            Diffusion::Diagonal(d) => DMatrix::from_diagonal(&d.map(|s| 1.0 / s)),
            Diffusion::Full { inverse, .. } => inverse.clone(),
        }
    }

    /// `sigma * w`
    pub fn apply(&self, _t: f64, _x: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        match self {
            Diffusion::Diagonal(d) => d.component_mul(w),
            Diffusion::Full { sigma, .. } => sigma * w,
        }
    }

    /// `sigma^{-1} * v`
    pub fn solve(&self, _t: f64, _x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        match self {
            Diffusion::Diagonal(d) => v.component_div(d),
            Diffusion::Full { inverse, .. } => inverse * v,
        }
    }

    /// `sigma^T * v`
    pub fn transpose_apply(&self, _t: f64, _x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        match self {
            Diffusion::Diagonal(d) => d.component_mul(v),
            Diffusion::Full { sigma, .. } => sigma.tr_mul(v),
        }
    }
}

/// Running cost, a function of the control only.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ControlCost {
    /// `weight * sum_k |u_k|` (minimum fuel).
    L1 { weight: f64 },
    /// `0.5 * weight * sum_k u_k^2`.
    Quadratic { weight: f64 },
}

impl ControlCost {
    pub fn eval(&self, u: &DVector<f64>) -> f64 {
        match *self {
            ControlCost::L1 { weight } => weight * u.iter().map(|v| v.abs()).sum::<f64>(),
            ControlCost::Quadratic { weight } => 0.5 * weight * u.norm_squared(),
        }
    }

    pub fn weight(&self) -> f64 {
        match *self {
            ControlCost::L1 { weight } | ControlCost::Quadratic { weight } => weight,
        }
    }

    fn with_weight(self, weight: f64) -> Self {
        match self {
            ControlCost::L1 { .. } => ControlCost::L1 { weight },
            ControlCost::Quadratic { .. } => ControlCost::Quadratic { weight },
        }
    }
}

/// Per-coordinate control bounds. Always contains the zero control.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlBox {
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

impl ControlBox {
    pub fn symmetric(dim: usize, bound: f64) -> Self {
        Self {
            lower: DVector::from_element(dim, -bound),
            upper: DVector::from_element(dim, bound),
        }
    }

    pub fn contains(&self, u: &DVector<f64>) -> bool {
        u.len() == self.lower.len()
            && u.iter()
                .zip(self.lower.iter().zip(self.upper.iter()))
                .all(|(v, (lo, hi))| *lo <= *v && *v <= *hi)
    }
}

/// One stochastic optimal control problem instance.
#[derive(Clone)]
pub struct SocProblem {
    name: String,
    horizon: f64,
    initial_state: DVector<f64>,
    dynamics: Arc<dyn Dynamics>,
    diffusion: Diffusion,
    control_cost: ControlCost,
    terminal_weights: DVector<f64>,
    control_box: ControlBox,
    exploration_controls: Vec<DVector<f64>>,
}

impl fmt::Debug for SocProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SocProblem")
            .field("name", &self.name)
            .field("state_dim", &self.state_dim())
            .field("control_dim", &self.control_dim())
            .field("horizon", &self.horizon)
            .field("initial_state", &self.initial_state.as_slice())
            .field("control_cost", &self.control_cost)
            .field("terminal_weights", &self.terminal_weights.as_slice())
            .finish()
    }
}

impl SocProblem {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: impl Into<String>,
        horizon: f64,
        initial_state: DVector<f64>,
        dynamics: Arc<dyn Dynamics>,
        diffusion: Diffusion,
        control_cost: ControlCost,
        terminal_weights: DVector<f64>,
        control_box: ControlBox,
        exploration_controls: Vec<DVector<f64>>,
    ) -> Result<Self> {
        let n = dynamics.state_dim();
        let m = dynamics.control_dim();
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::Config(format!(
                "horizon must be positive, got {horizon}"
            )));
        }
        check_dim("initial state", n, initial_state.len())?;
        check_dim("diffusion", n, diffusion.dim())?;
        check_dim("terminal weights", n, terminal_weights.len())?;
        check_dim("control box", m, control_box.lower.len())?;
        check_dim("control box", m, control_box.upper.len())?;
        if terminal_weights.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(Error::Config(
                "terminal weights must be finite and >= 0".into(),
            ));
        }
        let w = control_cost.weight();
        if !(w.is_finite() && w >= 0.0) {
            return Err(Error::Config(
                "control cost weight must be finite and >= 0".into(),
            ));
        }
        if let ControlCost::Quadratic { weight } = control_cost {
            if weight <= 0.0 {
                return Err(Error::Config(
                    "quadratic control weight must be positive".into(),
                ));
            }
        }
        let zero = DVector::zeros(m);
        if !control_box.contains(&zero) {
            return Err(Error::Config(
                "control box must contain the zero control".into(),
            ));
        }
        if exploration_controls.is_empty() {
            return Err(Error::Config("exploration control set is empty".into()));
        }
        if let Some(u) = exploration_controls
            .iter()
            .find(|u| !control_box.contains(u))
        {
            return Err(Error::Config(format!(
                "exploration control {:?} lies outside the control box",
                u.as_slice()
            )));
        }
        Ok(Self {
            name: name.into(),
            horizon,
            initial_state,
            dynamics,
            diffusion,
            control_cost,
            terminal_weights,
            control_box,
            exploration_controls,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn state_dim(&self) -> usize {
        self.dynamics.state_dim()
    }

    pub fn control_dim(&self) -> usize {
        self.dynamics.control_dim()
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn initial_state(&self) -> &DVector<f64> {
        &self.initial_state
    }

    pub fn control_cost(&self) -> ControlCost {
        self.control_cost
    }

    pub fn terminal_weights(&self) -> &DVector<f64> {
        &self.terminal_weights
    }

    pub fn control_box(&self) -> &ControlBox {
        &self.control_box
    }

    pub fn exploration_controls(&self) -> &[DVector<f64>] {
        &self.exploration_controls
    }

    pub fn diffusion_model(&self) -> &Diffusion {
        &self.diffusion
    }

    pub fn dynamics(&self) -> &dyn Dynamics {
        self.dynamics.as_ref()
    }

    pub fn with_horizon(mut self, horizon: f64) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::Config(format!(
                "horizon must be positive, got {horizon}"
            )));
        }
        self.horizon = horizon;
        Ok(self)
    }

    pub fn with_initial_state(mut self, x0: DVector<f64>) -> Result<Self> {
        check_dim("initial state", self.state_dim(), x0.len())?;
        if x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::non_finite("initial state"));
        }
        self.initial_state = x0;
        Ok(self)
    }

    pub fn with_control_weight(mut self, weight: f64) -> Result<Self> {
        if !(weight.is_finite() && weight >= 0.0) {
            return Err(Error::Config(
                "control cost weight must be finite and >= 0".into(),
            ));
        }
        self.control_cost = self.control_cost.with_weight(weight);
        Ok(self)
    }

    pub fn with_terminal_weights(mut self, weights: DVector<f64>) -> Result<Self> {
        check_dim("terminal weights", self.state_dim(), weights.len())?;
        if weights.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(Error::Config(
                "terminal weights must be finite and >= 0".into(),
            ));
        }
        self.terminal_weights = weights;
        Ok(self)
    }

    pub fn drift(&self, t: f64, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        self.dynamics.free_drift(t, x) + self.dynamics.control_matrix(t, x) * u
    }

    pub fn diffusion(&self, t: f64, x: &DVector<f64>) -> DMatrix<f64> {
        self.diffusion.matrix(t, x)
    }

    pub fn diffusion_inverse(&self, t: f64, x: &DVector<f64>) -> DMatrix<f64> {
        self.diffusion.inverse(t, x)
    }

    pub fn running_cost(&self, _t: f64, _x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        self.control_cost.eval(u)
    }

    pub fn terminal_cost(&self, x: &DVector<f64>) -> f64 {
        x.iter()
            .zip(self.terminal_weights.iter())
            .map(|(xj, cj)| cj * xj * xj)
            .sum()
    }

    /// Euler-Maruyama step `x + k dt + sigma(t, x) w`.
    pub fn euler_step(
        &self,
        t: f64,
        x: &DVector<f64>,
        drift: &DVector<f64>,
        noise: &DVector<f64>,
        dt: f64,
    ) -> DVector<f64> {
        x + drift * dt + self.diffusion.apply(t, x, noise)
    }

    /// Minimiser of `l(t, x, u) + f(t, x, u)^T p` over the control box.
    ///
    /// Closed form per cost family. For the L1 cost with `b = B^T p` each coordinate is
    /// bang-off-bang: `u_k` goes to the bound opposing `b_k` when `|b_k| > weight` and is
    /// zero otherwise (including the tie `|b_k| = weight`). The quadratic cost uses the
    /// stationary point `-b / weight` clamped to the box.
    pub fn argmin_policy(
        &self,
        t: f64,
        x: &DVector<f64>,
        value_gradient: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        check_dim("value gradient", self.state_dim(), value_gradient.len())?;
        if value_gradient.iter().any(|v| !v.is_finite()) {
            return Err(Error::non_finite("value gradient"));
        }
        let b = self.dynamics.control_matrix(t, x).tr_mul(value_gradient);
        let lo = &self.control_box.lower;
        let hi = &self.control_box.upper;
        let u = match self.control_cost {
            ControlCost::L1 { weight } => DVector::from_fn(b.len(), |k, _| {
                if b[k] > weight {
                    lo[k]
                } else if b[k] < -weight {
                    hi[k]
                } else {
                    0.0
                }
            }),
            ControlCost::Quadratic { weight } => {
                DVector::from_fn(b.len(), |k, _| (-b[k] / weight).clamp(lo[k], hi[k]))
            }
        };
        Ok(u)
    }

    /// Objective minimised by [`SocProblem::argmin_policy`].
    pub fn hamiltonian(
        &self,
        t: f64,
        x: &DVector<f64>,
        u: &DVector<f64>,
        value_gradient: &DVector<f64>,
    ) -> f64 {
        self.running_cost(t, x, u) + self.drift(t, x, u).dot(value_gradient)
    }
}

fn check_dim(what: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::Dimension {
            what,
            expected,
            actual,
        });
    }
    Ok(())
}

/// Names accepted by [`make_problem`].
pub const PROBLEM_NAMES: [&str; 4] = [
    "lqr1d",
    "double_integrator",
    "double_pendulum",
    "quadcopter",
];

/// Build a named problem with its default parameters.
pub fn make_problem(name: &str) -> Result<SocProblem> {
    match name {
        "lqr1d" => Ok(make_scalar_lqr().0),
        "double_integrator" => Ok(make_double_integrator()),
        "double_pendulum" => Ok(make_double_pendulum()),
        "quadcopter" => Ok(make_quadcopter()),
        other => Err(Error::UnknownProblem(other.to_string())),
    }
}

fn grid_controls(dim: usize, levels: &[f64]) -> Vec<DVector<f64>> {
    let mut out = vec![Vec::new()];
    for _ in 0..dim {
        out = out
            .into_iter()
            .flat_map(|prefix: Vec<f64>| {
                levels.iter().map(move |&v| {
                    let mut p = prefix.clone();
                    p.push(v);
                    p
                })
            })
            .collect();
    }
    out.into_iter().map(DVector::from_vec).collect()
}

// --- double integrator ---------------------------------------------------------

struct DoubleIntegratorDynamics;

impl Dynamics for DoubleIntegratorDynamics {
    fn state_dim(&self) -> usize {
        2
    }
    fn control_dim(&self) -> usize {
        1
    }
    fn free_drift(&self, _t: f64, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(vec![x[1], 0.0])
    }
    fn control_matrix(&self, _t: f64, _x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_column_slice(2, 1, &[0.0, 1.0])
    }
}

/// L1 double integrator: position/velocity driven by a bounded acceleration.
pub fn make_double_integrator() -> SocProblem {
    SocProblem::new(
        "double_integrator",
        5.0,
        DVector::from_vec(vec![1.0, 1.0]),
        Arc::new(DoubleIntegratorDynamics),
        Diffusion::diagonal(&[0.01, 0.1]).expect("valid diffusion"),
        ControlCost::L1 { weight: 1.0 },
        DVector::from_element(2, 1.0),
        ControlBox::symmetric(1, 1.0),
        grid_controls(1, &[-1.0, 0.0, 1.0]),
    )
    .expect("double integrator is well formed")
}

// --- double pendulum -----------------------------------------------------------

/// Parameters of the damped double pendulum.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PendulumParams {
    pub d0: f64,
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
    pub f1: f64,
    pub f2: f64,
    pub f3: f64,
    pub f4: f64,
}

impl Default for PendulumParams {
    fn default() -> Self {
        Self {
            d0: 10.0,
            d1: 0.37,
            d2: 0.14,
            d3: 0.14,
            f1: 4.9,
            f2: 5.5,
            f3: 0.1,
            f4: 0.1,
        }
    }
}

/// State `(alpha, beta, omega, psi)`: two joint angles and their rates.
struct DoublePendulumDynamics {
    p: PendulumParams,
}

impl DoublePendulumDynamics {
    fn denominator(&self, beta: f64) -> f64 {
        let p = &self.p;
        let c = beta.cos();
        p.d1 * p.d3 + 2.0 * p.d2 * p.d3 * c - p.d2 * p.d2 * c * c
    }
}

impl Dynamics for DoublePendulumDynamics {
    fn state_dim(&self) -> usize {
        4
    }
    fn control_dim(&self) -> usize {
        1
    }
    fn free_drift(&self, _t: f64, x: &DVector<f64>) -> DVector<f64> {
        let p = &self.p;
        let (alpha, beta, omega, psi) = (x[0], x[1], x[2], x[3]);
        let (sb, cb) = beta.sin_cos();
        let sab = (alpha + beta).sin();
        let first = p.d2 * psi * psi * sb + 2.0 * p.d2 * omega * psi * sb - p.f3 * omega
            + p.f2 * sab
            - p.f1 * alpha.sin();
        let second = p.d2 * omega * omega * sb + p.f4 * psi - p.f2 * sab;
        let den = self.denominator(beta);
        DVector::from_vec(vec![
            omega,
            psi,
            (p.d3 * first + p.d2 * cb * second) / den,
            (-(p.d1 + 2.0 * p.d2 * cb) * second - p.d2 * cb * first) / den,
        ])
    }
    fn control_matrix(&self, _t: f64, x: &DVector<f64>) -> DMatrix<f64> {
        let p = &self.p;
        let cb = x[1].cos();
        let den = self.denominator(x[1]);
        DMatrix::from_column_slice(
            4,
            1,
            &[0.0, 0.0, p.d0 * p.d3 / den, -p.d0 * p.d2 * cb / den],
        )
    }
}

/// Horizon of the pendulum problem. The drift's denominator vanishes at
/// `cos(beta) = -0.908`, which the uncontrolled system reaches near `t = 0.41`.
pub const PENDULUM_HORIZON: f64 = 0.3;

/// L1 damped double pendulum, started from the perturbed condition `(pi/10, pi/10, 0, 0)`.
pub fn make_double_pendulum() -> SocProblem {
    make_double_pendulum_with(PendulumParams::default())
}

pub fn make_double_pendulum_with(params: PendulumParams) -> SocProblem {
    SocProblem::new(
        "double_pendulum",
        PENDULUM_HORIZON,
        DVector::from_vec(vec![PI / 10.0, PI / 10.0, 0.0, 0.0]),
        Arc::new(DoublePendulumDynamics { p: params }),
        Diffusion::diagonal(&[0.03, 0.03, 0.18, 0.18]).expect("valid diffusion"),
        ControlCost::L1 { weight: 1.0 },
        DVector::from_element(4, 1.0),
        ControlBox::symmetric(1, 1.0),
        grid_controls(1, &[-1.0, 0.0, 1.0]),
    )
    .expect("double pendulum is well formed")
}

// --- quadcopter ----------------------------------------------------------------

pub const QUAD_TORQUE_GAIN: f64 = 4.1;
pub const GRAVITY: f64 = 9.8;

/// State `(phi, theta, p, q, u, v, x, y)`, control `(tau_x, tau_y)`.
struct QuadcopterDynamics;

impl Dynamics for QuadcopterDynamics {
    fn state_dim(&self) -> usize {
        8
    }
    fn control_dim(&self) -> usize {
        2
    }
    fn free_drift(&self, _t: f64, s: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(vec![
            s[2],
            s[3],
            0.0,
            0.0,
            -GRAVITY * s[1],
            GRAVITY * s[0],
            s[4],
            s[5],
        ])
    }
    fn control_matrix(&self, _t: f64, _x: &DVector<f64>) -> DMatrix<f64> {
        let mut b = DMatrix::zeros(8, 2);
        b[(2, 0)] = QUAD_TORQUE_GAIN;
        b[(3, 1)] = QUAD_TORQUE_GAIN;
        b
    }
}

/// L1 linearized quadcopter with heavily weighted terminal position.
pub fn make_quadcopter() -> SocProblem {
    SocProblem::new(
        "quadcopter",
        1.0,
        DVector::from_vec(vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.5, 0.5]),
        Arc::new(QuadcopterDynamics),
        Diffusion::diagonal(&[1e-5, 1e-5, 0.2, 0.2, 0.002, 0.002, 1e-5, 1e-5])
            .expect("valid diffusion"),
        ControlCost::L1 { weight: 1.0 },
        DVector::from_vec(vec![1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 100.0, 100.0]),
        ControlBox::symmetric(2, 1.0),
        grid_controls(2, &[-1.0, 0.0, 1.0]),
    )
    .expect("quadcopter is well formed")
}

// --- scalar LQR ----------------------------------------------------------------

struct ScalarLinearDynamics;

impl Dynamics for ScalarLinearDynamics {
    fn state_dim(&self) -> usize {
        1
    }
    fn control_dim(&self) -> usize {
        1
    }
    fn free_drift(&self, _t: f64, x: &DVector<f64>) -> DVector<f64> {
        x.clone()
    }
    fn control_matrix(&self, _t: f64, _x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, 1.0)
    }
}

pub const LQR_SIGMA: f64 = 0.2;
pub const LQR_CONTROL_BOUND: f64 = 50.0;

/// Closed-form solution of the scalar problem `dX = (X + u) ds + 0.2 dW`,
/// cost `0.5 X_T^2 + int 0.5 u^2`, horizon 1:
/// `V(t, x) = alpha(t) x^2 + beta(t)` and `pi(t, x) = -2 alpha(t) x`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct AnalyticLqr;

impl AnalyticLqr {
    pub fn alpha(&self, t: f64) -> f64 {
        1.0 / ((-2.0 * (1.0 - t)).exp() + 1.0)
    }

    /// `beta' = -sigma^2 alpha` with `beta(1) = 0`.
    pub fn beta(&self, t: f64) -> f64 {
        LQR_SIGMA * LQR_SIGMA / 2.0 * (0.5 + 0.5 * (2.0 * (1.0 - t)).exp()).ln()
    }

    pub fn alpha_dot(&self, t: f64) -> f64 {
        let a = self.alpha(t);
        -2.0 * a * (1.0 - a)
    }

    pub fn beta_dot(&self, t: f64) -> f64 {
        -LQR_SIGMA * LQR_SIGMA * self.alpha(t)
    }

    pub fn value(&self, t: f64, x: f64) -> f64 {
        self.alpha(t) * x * x + self.beta(t)
    }

    pub fn value_gradient(&self, t: f64, x: f64) -> f64 {
        2.0 * self.alpha(t) * x
    }

    pub fn policy(&self, t: f64, x: f64) -> f64 {
        -2.0 * self.alpha(t) * x
    }
}

/// Scalar LQR with a known analytic value function.
pub fn make_scalar_lqr() -> (SocProblem, AnalyticLqr) {
    let problem = SocProblem::new(
        "lqr1d",
        1.0,
        DVector::from_element(1, 1.0),
        Arc::new(ScalarLinearDynamics),
        Diffusion::diagonal(&[LQR_SIGMA]).expect("valid diffusion"),
        ControlCost::Quadratic { weight: 1.0 },
        DVector::from_element(1, 0.5),
        ControlBox::symmetric(1, LQR_CONTROL_BOUND),
        grid_controls(1, &[-2.0, -1.0, 0.0, 1.0, 2.0]),
    )
    .expect("scalar LQR is well formed");
    (problem, AnalyticLqr)
}
