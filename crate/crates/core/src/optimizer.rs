//! Damped least-squares (Levenberg–Marquardt) minimization.
//!
//! The solver is generic over a [`LeastSquaresProblem`] so it can be
//! validated on analytic benchmarks and then applied to grasp refinement via
//! [`GraspProblem`]. Two properties drive the design:
//!
//! * **Fresh-objective acceptance** — the per-iteration linearization may use
//!   frozen activation sets (semi-smooth objectives), but steps are accepted
//!   only when the *true* objective decreases, so the accepted trace is
//!   strictly decreasing by construction.
//! * **Scale invariance** — every convergence test compares quantities that
//!   scale identically under `r -> c*r` (gradient checks use the cosine
//!   between the residual and the Jacobian columns; objective checks are
//!   relative), so scaling all residuals by a constant does not change the
//!   sequence of accepted states.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hand::HandPose;
use crate::objective::{residual_vector, GraspObjective};

/// A nonlinear least-squares problem over a retractable state.
pub trait LeastSquaresProblem {
    type State: Clone;

    /// Residuals and Jacobian at `x`. Called once per outer iteration; this
    /// is the point where semi-smooth problems refresh their activation sets.
    fn linearize(&mut self, x: &Self::State) -> (DVector<f64>, DMatrix<f64>);

    /// The true objective at `x` (for grasping: fresh activation). Used for
    /// step acceptance, independently of the linearization.
    fn objective(&mut self, x: &Self::State) -> f64;

    /// Retraction: applies a tangent step, projecting onto any constraints
    /// (joint limits, unit quaternion).
    fn apply_step(&self, x: &Self::State, step: &DVector<f64>) -> Self::State;

    fn param_count(&self) -> usize;

    /// Magnitude entering the relative step-size test; override for states
    /// with a meaningful norm.
    fn state_norm(&self, _x: &Self::State) -> f64 {
        1.0
    }
}

/// Solver parameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct LmParams {
    pub max_iters: usize,
    /// Initial damping factor multiplying the scaled diagonal.
    pub initial_damping: f64,
    /// Damping multiplier after a rejected step (> 1).
    pub damping_increase: f64,
    /// Damping multiplier after an accepted step (in (0,1)).
    pub damping_decrease: f64,
    /// Step tolerance: stop when the accepted step satisfies
    /// `|step| <= step_tol * (1 + state_norm)`.
    pub step_tol: f64,
    /// Objective tolerance: stop when an accepted step reduces the objective
    /// by at most `objective_tol * previous`.
    pub objective_tol: f64,
    /// Gradient tolerance on the cosine between the residual vector and the
    /// Jacobian column space.
    pub gradient_tol: f64,
    /// Damping ceiling; exceeding it means no acceptable step exists.
    pub max_damping: f64,
}

impl Default for LmParams {
    fn default() -> Self {
        LmParams {
            max_iters: 100,
            initial_damping: 1e-3,
            damping_increase: 10.0,
            damping_decrease: 0.3,
            step_tol: 1e-8,
            objective_tol: 1e-10,
            gradient_tol: 1e-8,
            max_damping: 1e14,
        }
    }
}

impl LmParams {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::invalid("lm params", "max_iters = 0"));
        }
        for (name, v) in [
            ("initial_damping", self.initial_damping),
            ("step_tol", self.step_tol),
            ("objective_tol", self.objective_tol),
            ("gradient_tol", self.gradient_tol),
            ("max_damping", self.max_damping),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::invalid("lm params", format!("{name} = {v}")));
            }
        }
        if !(self.damping_increase > 1.0) {
            return Err(Error::invalid(
                "lm params",
                format!("damping_increase = {} must be > 1", self.damping_increase),
            ));
        }
        if !(self.damping_decrease > 0.0 && self.damping_decrease < 1.0) {
            return Err(Error::invalid(
                "lm params",
                format!(
                    "damping_decrease = {} must be in (0,1)",
                    self.damping_decrease
                ),
            ));
        }
        Ok(())
    }
}

/// Why the solver stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvergenceReason {
    /// Accepted step shorter than the step tolerance.
    Step,
    /// Relative objective decrease below the objective tolerance.
    Objective,
    /// Residual orthogonal to the Jacobian column space (or exactly zero).
    Gradient,
    /// Iteration budget exhausted.
    MaxIters,
    /// Damping exceeded its ceiling without finding a descent step.
    Stalled,
}

/// Outcome of one minimization.
#[derive(Debug, Clone)]
pub struct LmResult<S> {
    pub state: S,
    /// Final objective value.
    pub objective: f64,
    /// Outer iterations entered (each performs one linearization).
    pub iterations: usize,
    pub reason: ConvergenceReason,
    /// Objective after each accepted step, starting with the initial value.
    /// Strictly decreasing after the first entry.
    pub trace: Vec<f64>,
}

/// Minimizes a least-squares problem from `init`.
///
/// Each outer iteration solves the damped normal equations
/// `(J^T J + mu * diag(J^T J)) step = -J^T r`, retrying with larger damping
/// until the true objective decreases or the damping ceiling is hit.
pub fn lm_minimize<P: LeastSquaresProblem>(
    problem: &mut P,
    init: P::State,
    params: &LmParams,
) -> LmResult<P::State> {
    let dim = problem.param_count();
    let mut x = init;
    let mut objective = problem.objective(&x);
    let mut trace = vec![objective];
    let mut damping = params.initial_damping;
    let mut reason = ConvergenceReason::MaxIters;
    let mut iterations = 0usize;

    'outer: while iterations < params.max_iters {
        iterations += 1;
        let (residuals, jacobian) = problem.linearize(&x);
        let residual_norm = residuals.norm();
        if residual_norm == 0.0 {
            reason = ConvergenceReason::Gradient;
            break;
        }
        let gradient = jacobian.transpose() * &residuals;
        // Cosine-style orthogonality test: invariant under residual scaling.
        let mut gradient_cos: f64 = 0.0;
        for c in 0..dim {
            let column_norm = jacobian.column(c).norm();
            if column_norm > 0.0 {
                gradient_cos = gradient_cos.max((gradient[c] / (column_norm * residual_norm)).abs());
            }
        }
        if gradient_cos <= params.gradient_tol {
            reason = ConvergenceReason::Gradient;
            break;
        }

        let normal = jacobian.transpose() * &jacobian;
        let max_diag = (0..dim).map(|i| normal[(i, i)]).fold(0.0f64, f64::max);
        // Inner loop: escalate damping until a step decreases the objective.
        loop {
            let mut damped = normal.clone();
            for i in 0..dim {
                // Marquardt scaling, floored so unused parameters stay
                // solvable (the floor scales with the problem, keeping the
                // solve scale-invariant).
                let d = normal[(i, i)].max(1e-12 * max_diag);
                damped[(i, i)] += damping * d;
            }
            if let Some(chol) = damped.cholesky() {
                let step = chol.solve(&(-&gradient));
                let candidate = problem.apply_step(&x, &step);
                let candidate_objective = problem.objective(&candidate);
                if candidate_objective < objective {
                    let drop = objective - candidate_objective;
                    let previous = objective;
                    x = candidate;
                    objective = candidate_objective;
                    trace.push(objective);
                    damping = (damping * params.damping_decrease).max(1e-12);
                    if drop <= params.objective_tol * previous {
                        reason = ConvergenceReason::Objective;
                        break 'outer;
                    }
                    if step.norm() <= params.step_tol * (1.0 + problem.state_norm(&x)) {
                        reason = ConvergenceReason::Step;
                        break 'outer;
                    }
                    continue 'outer;
                }
            }
            damping *= params.damping_increase;
            if damping > params.max_damping {
                reason = ConvergenceReason::Stalled;
                break 'outer;
            }
        }
    }

    LmResult {
        state: x,
        objective,
        iterations,
        reason,
        trace,
    }
}

/// The grasp objective as a least-squares problem over hand poses.
pub struct GraspProblem<'a, 'b> {
    objective: &'b GraspObjective<'a>,
}

impl<'a, 'b> GraspProblem<'a, 'b> {
    pub fn new(objective: &'b GraspObjective<'a>) -> Self {
        GraspProblem { objective }
    }
}

impl LeastSquaresProblem for GraspProblem<'_, '_> {
    type State = HandPose;

    fn linearize(&mut self, x: &HandPose) -> (DVector<f64>, DMatrix<f64>) {
        let assembly = self.objective.assemble(x);
        let residuals = residual_vector(&assembly.rows);
        let jacobian = self.objective.jacobian(x, &assembly.rows);
        (residuals, jacobian)
    }

    fn objective(&mut self, x: &HandPose) -> f64 {
        self.objective.evaluate(x).0
    }

    fn apply_step(&self, x: &HandPose, step: &DVector<f64>) -> HandPose {
        self.objective.hand().apply_step(x, step)
    }

    fn param_count(&self) -> usize {
        self.objective.param_count()
    }

    fn state_norm(&self, x: &HandPose) -> f64 {
        (x.translation.norm_squared() + x.joints.norm_squared()).sqrt()
    }
}

/// Refines a grasp pose by minimizing the grasp objective.
pub fn refine_grasp(
    objective: &GraspObjective<'_>,
    init: &HandPose,
    params: &LmParams,
) -> Result<LmResult<HandPose>> {
    params.validate()?;
    let mut problem = GraspProblem::new(objective);
    Ok(lm_minimize(&mut problem, init.clone(), params))
}
