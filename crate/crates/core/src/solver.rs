//! Levenberg-Marquardt over the factor graph. The normal equations are
//! block tridiagonal because factors only couple neighbouring states, so
//! each damped system solves in O(n) with a block Thomas recursion instead
//! of a dense Cholesky.

use std::time::Instant;

use nalgebra::{Cholesky, Matrix4, Vector4, U4};

use crate::graph::{FactorGraph, NormalEqs};
use crate::trajectory::{Trajectory, TrajectoryState};
use crate::{cst, Error, Real, Result};

/// Damping schedule and stopping tolerances.
#[derive(Debug, Clone)]
pub struct LmSettings<T: Real> {
    /// Starting damping; zero gives plain Gauss-Newton steps.
    pub initial_lambda: T,
    /// Multiplier applied after a rejected step (> 1).
    pub lambda_up: T,
    /// Multiplier applied after an accepted step (in (0, 1)).
    pub lambda_down: T,
    /// Rejecting past this damping stops the solve.
    pub max_lambda: T,
    pub max_iterations: usize,
    /// Stop when the relative error decrease falls below this; zero
    /// disables the check.
    pub rel_tol: T,
    /// Stop when the error itself falls below this; zero disables the check.
    pub abs_tol: T,
}

impl<T: Real> Default for LmSettings<T> {
    fn default() -> Self {
        Self {
            initial_lambda: cst(0.01),
            lambda_up: cst(10.0),
            lambda_down: cst(0.1),
            max_lambda: cst(1e12),
            max_iterations: 100,
            rel_tol: cst(1e-6),
            abs_tol: cst(1e-12),
        }
    }
}

impl<T: Real> LmSettings<T> {
    /// Undamped Gauss-Newton: same tolerances, lambda pinned at zero.
    pub fn gauss_newton() -> Self {
        Self {
            initial_lambda: T::zero(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.initial_lambda < T::zero() {
            return Err(Error::ParamRange {
                name: "initial_lambda",
                msg: "must be non-negative".into(),
            });
        }
        if self.lambda_up <= T::one() {
            return Err(Error::ParamRange {
                name: "lambda_up",
                msg: "must exceed 1".into(),
            });
        }
        if self.lambda_down <= T::zero() || self.lambda_down >= T::one() {
            return Err(Error::ParamRange {
                name: "lambda_down",
                msg: "must lie in (0, 1)".into(),
            });
        }
        if self.max_lambda <= T::zero() {
            return Err(Error::ParamRange {
                name: "max_lambda",
                msg: "must be positive".into(),
            });
        }
        if self.max_iterations == 0 {
            return Err(Error::ParamRange {
                name: "max_iterations",
                msg: "must be at least 1".into(),
            });
        }
        if self.rel_tol < T::zero() || self.abs_tol < T::zero() {
            return Err(Error::ParamRange {
                name: "tolerance",
                msg: "must be non-negative".into(),
            });
        }
        Ok(())
    }
}

/// Why the solve stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// A tolerance was met.
    Converged,
    MaxIterations,
    /// No step was accepted before the damping budget ran out.
    LambdaLimit,
    /// The damped system stayed non-positive-definite up to max_lambda.
    SingularSystem,
}

/// One accepted outer iteration.
#[derive(Debug, Clone)]
pub struct IterationStats<T: Real> {
    pub iteration: usize,
    /// Error after the accepted step.
    pub error: T,
    /// Damping used for the accepted step.
    pub lambda: T,
    pub step_norm: T,
    /// Time spent in this outer iteration, including rejected attempts.
    pub wall_time_s: f64,
}

#[derive(Debug, Clone)]
pub struct SolveReport<T: Real> {
    pub iterations: Vec<IterationStats<T>>,
    pub initial_error: T,
    pub final_error: T,
    pub stop: StopReason,
    pub accepted_steps: usize,
    pub total_wall_time_s: f64,
}

impl<T: Real> SolveReport<T> {
    pub fn converged(&self) -> bool {
        self.stop == StopReason::Converged
    }
}

/// Solve (H + lambda I) delta = -grad for a block-tridiagonal H given by its
/// diagonal and upper off-diagonal blocks. Fails with the offending block
/// index if a Schur complement is not positive definite.
pub fn solve_normal_eqs<T: Real>(eqs: &NormalEqs<T>, lambda: T) -> Result<Vec<Vector4<T>>> {
    let n = eqs.diag.len();
    assert!(n > 0 && eqs.off.len() + 1 == n && eqs.grad.len() == n);
    let damping = Matrix4::identity() * lambda;

    // Forward Schur recursion: S_0 = D_0, S_{i+1} = D_{i+1} - U_i^T S_i^{-1} U_i.
    let mut chols: Vec<Cholesky<T, U4>> = Vec::with_capacity(n);
    let mut winv: Vec<Matrix4<T>> = Vec::with_capacity(n - 1);
    let mut s = eqs.diag[0] + damping;
    for i in 0..n {
        let chol = s
            .cholesky()
            .ok_or(Error::SingularSystem { block: i })?;
        if i + 1 < n {
            let wi = chol.solve(&eqs.off[i]);
            s = eqs.diag[i + 1] + damping - eqs.off[i].transpose() * wi;
            winv.push(wi);
        }
        chols.push(chol);
    }

    // Forward substitution on the right-hand side b = -grad.
    let mut z: Vec<Vector4<T>> = Vec::with_capacity(n);
    z.push(-eqs.grad[0]);
    for i in 1..n {
        let prev = chols[i - 1].solve(&z[i - 1]);
        z.push(-eqs.grad[i] - eqs.off[i - 1].transpose() * prev);
    }

    // Back substitution.
    let mut delta = vec![Vector4::zeros(); n];
    delta[n - 1] = chols[n - 1].solve(&z[n - 1]);
    for i in (0..n - 1).rev() {
        delta[i] = chols[i].solve(&z[i]) - winv[i] * delta[i + 1];
    }
    Ok(delta)
}

/// Retract a solver step onto the trajectory.
pub fn apply_step<T: Real>(traj: &Trajectory<T>, delta: &[Vector4<T>]) -> Trajectory<T> {
    Trajectory::new(
        traj.states
            .iter()
            .zip(delta)
            .map(|(s, d)| TrajectoryState::from_vector(&(s.as_vector() + d)))
            .collect(),
    )
}

/// Minimize the graph error starting from `initial`. Steps are accepted only
/// on strict error decrease, so the reported error sequence is monotone. On
/// damping exhaustion or a persistently singular system the best trajectory
/// found so far is returned with the reason in the report.
pub fn lm_optimize<T: Real>(
    graph: &FactorGraph<'_, T>,
    initial: &Trajectory<T>,
    settings: &LmSettings<T>,
) -> Result<(Trajectory<T>, SolveReport<T>)> {
    settings.validate()?;
    let t_total = Instant::now();
    let mut current = initial.clone();
    let mut error = graph.total_error(&current)?;
    let mut report = SolveReport {
        iterations: Vec::new(),
        initial_error: error,
        final_error: error,
        stop: StopReason::Converged,
        accepted_steps: 0,
        total_wall_time_s: 0.0,
    };
    if error < settings.abs_tol {
        report.total_wall_time_s = t_total.elapsed().as_secs_f64();
        return Ok((current, report));
    }

    let mut lambda = settings.initial_lambda;
    let mut stop = None;
    'outer: for iter in 0..settings.max_iterations {
        let t_iter = Instant::now();
        let eqs = graph.linearize(&current)?;
        loop {
            let solved = solve_normal_eqs(&eqs, lambda);
            if let Ok(delta) = &solved {
                let candidate = apply_step(&current, delta);
                let cand_error = graph.total_error(&candidate)?;
                if cand_error < error {
                    let step_norm = delta
                        .iter()
                        .fold(T::zero(), |acc, d| acc + d.norm_squared())
                        .sqrt();
                    let prev = error;
                    current = candidate;
                    error = cand_error;
                    report.accepted_steps += 1;
                    report.iterations.push(IterationStats {
                        iteration: iter,
                        error,
                        lambda,
                        step_norm,
                        wall_time_s: t_iter.elapsed().as_secs_f64(),
                    });
                    if error < settings.abs_tol || prev - error < settings.rel_tol * prev {
                        stop = Some(StopReason::Converged);
                    }
                    lambda *= settings.lambda_down;
                    break;
                }
            }
            // Rejected step (or a singular damped system): raise the damping.
            let exhausted = if lambda <= T::zero() {
                true
            } else {
                lambda *= settings.lambda_up;
                lambda > settings.max_lambda
            };
            if exhausted {
                stop = Some(if solved.is_err() {
                    StopReason::SingularSystem
                } else {
                    StopReason::LambdaLimit
                });
                break 'outer;
            }
        }
        if stop.is_some() {
            break;
        }
    }

    report.stop = stop.unwrap_or(StopReason::MaxIterations);
    report.final_error = error;
    report.total_wall_time_s = t_total.elapsed().as_secs_f64();
    Ok((current, report))
}
