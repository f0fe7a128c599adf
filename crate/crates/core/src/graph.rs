//! Factor graph over trajectory support states. Six factor kinds connect at
//! most two adjacent states: fixed endpoint priors, smoothness priors between
//! neighbours, and obstacle costs (static and dynamic) evaluated either at a
//! support state or at interpolated times inside a segment.
//!
//! Every factor evaluates to a whitened residual padded to four rows with
//! matching Jacobian blocks, so assembly code handles one uniform shape and
//! the zero padding drops out exactly in the accumulated normal equations.

use nalgebra::{Matrix4, Vector4};

use crate::dynfield::{dynamic_factor_error, CombinedField};
use crate::gp::{gp_interp_weights, state_transition, noise_whitener, GpPriorParams};
use crate::sdf::{static_factor_error, SdfGrid};
use crate::trajectory::{TimeGrid, Trajectory, TrajectoryState};
use crate::{cst, Error, Real, Result};

/// Factor payloads. Whiteners, transition matrices, and interpolation
/// weights depend only on the time grid, so they are precomputed at build
/// time and reused across solver iterations.
#[derive(Debug, Clone)]
pub enum FactorKind<T: Real> {
    /// Pins a trajectory endpoint to a full target state.
    EndpointPrior { target: Vector4<T>, weight: T },
    /// Smoothness between neighbours: whitened theta_{i+1} - Phi theta_i.
    GpPrior {
        phi: Matrix4<T>,
        whitener: Matrix4<T>,
        j_first: Matrix4<T>,
    },
    /// Hinge cost on the signed distance at a support state.
    StaticObstacle { weight: T },
    /// Hinge cost at an interpolated time inside a segment.
    StaticInterp {
        weight: T,
        d_prev: Matrix4<T>,
        d_next: Matrix4<T>,
    },
    /// Safe-area cost at a support state.
    DynamicObstacle { weight: T },
    /// Safe-area cost at an interpolated time inside a segment.
    DynamicInterp {
        weight: T,
        d_prev: Matrix4<T>,
        d_next: Matrix4<T>,
    },
}

impl<T: Real> FactorKind<T> {
    pub fn label(&self) -> &'static str {
        match self {
            FactorKind::EndpointPrior { .. } => "endpoint_prior",
            FactorKind::GpPrior { .. } => "gp_prior",
            FactorKind::StaticObstacle { .. } => "static",
            FactorKind::StaticInterp { .. } => "static_interp",
            FactorKind::DynamicObstacle { .. } => "dynamic",
            FactorKind::DynamicInterp { .. } => "dynamic_interp",
        }
    }
}

/// One factor: its payload and the support state(s) it touches. Binary
/// factors always connect neighbours, so `second` is `first + 1`.
#[derive(Debug, Clone)]
pub struct Factor<T: Real> {
    pub first: usize,
    pub second: Option<usize>,
    pub kind: FactorKind<T>,
}

/// Whitened residual and Jacobian blocks, padded to four rows.
#[derive(Debug, Clone)]
pub struct FactorEval<T: Real> {
    pub residual: Vector4<T>,
    pub j_first: Matrix4<T>,
    pub j_second: Option<Matrix4<T>>,
}

/// Gaussian noise and margin settings for graph construction.
#[derive(Debug, Clone)]
pub struct GraphConfig<T: Real> {
    pub gp: GpPriorParams<T>,
    /// Hinge margin for the static field, metres.
    pub epsilon: T,
    /// Noise sigma on static obstacle residuals (smaller = stronger).
    pub static_sigma: T,
    /// Noise sigma on dynamic obstacle residuals.
    pub dynamic_sigma: T,
}

impl<T: Real> GraphConfig<T> {
    pub fn new(gp: GpPriorParams<T>, epsilon: T, static_sigma: T, dynamic_sigma: T) -> Result<Self> {
        if epsilon < T::zero() {
            return Err(Error::ParamRange {
                name: "epsilon",
                msg: "must be non-negative".into(),
            });
        }
        if static_sigma <= T::zero() || dynamic_sigma <= T::zero() {
            return Err(Error::ParamRange {
                name: "obstacle sigma",
                msg: "must be positive".into(),
            });
        }
        Ok(Self {
            gp,
            epsilon,
            static_sigma,
            dynamic_sigma,
        })
    }
}

/// Block-tridiagonal normal equations: H delta = -grad with H given by its
/// diagonal and upper off-diagonal 4x4 blocks.
#[derive(Debug, Clone)]
pub struct NormalEqs<T: Real> {
    pub diag: Vec<Matrix4<T>>,
    pub off: Vec<Matrix4<T>>,
    pub grad: Vec<Vector4<T>>,
}

/// The assembled graph. Borrows the cost fields; factor payloads are owned.
pub struct FactorGraph<'a, T: Real> {
    factors: Vec<Factor<T>>,
    num_states: usize,
    epsilon: T,
    sdf: Option<&'a SdfGrid<T>>,
    dynamic: Option<&'a CombinedField<T>>,
}

/// Assemble the graph for a time grid and endpoint targets. Obstacle factors
/// are added only for the fields that are present.
pub fn build_graph<'a, T: Real>(
    time_grid: &TimeGrid<T>,
    start: &TrajectoryState<T>,
    goal: &TrajectoryState<T>,
    config: &GraphConfig<T>,
    sdf: Option<&'a SdfGrid<T>>,
    dynamic: Option<&'a CombinedField<T>>,
) -> Result<FactorGraph<'a, T>> {
    let n = time_grid.num_states();
    let segs = time_grid.num_segments();
    let per_state = sdf.is_some() as usize + dynamic.is_some() as usize;
    let mut factors =
        Vec::with_capacity(2 + segs + n * per_state + segs * time_grid.interp_per_segment() * per_state);

    factors.push(Factor {
        first: 0,
        second: None,
        kind: FactorKind::EndpointPrior {
            target: start.as_vector(),
            weight: T::one() / config.gp.start_fix_sigma,
        },
    });
    factors.push(Factor {
        first: n - 1,
        second: None,
        kind: FactorKind::EndpointPrior {
            target: goal.as_vector(),
            weight: T::one() / config.gp.goal_fix_sigma,
        },
    });

    for i in 0..segs {
        let dt = time_grid.dt(i);
        let phi = state_transition(dt)?;
        let whitener = noise_whitener(dt, &config.gp.qc)?;
        factors.push(Factor {
            first: i,
            second: Some(i + 1),
            kind: FactorKind::GpPrior {
                phi,
                whitener,
                j_first: -(whitener * phi),
            },
        });
    }

    for i in 0..n {
        if sdf.is_some() {
            factors.push(Factor {
                first: i,
                second: None,
                kind: FactorKind::StaticObstacle {
                    weight: T::one() / config.static_sigma,
                },
            });
        }
        if dynamic.is_some() {
            factors.push(Factor {
                first: i,
                second: None,
                kind: FactorKind::DynamicObstacle {
                    weight: T::one() / config.dynamic_sigma,
                },
            });
        }
    }

    if per_state > 0 {
        let times = time_grid.times();
        for i in 0..segs {
            for tau in time_grid.interp_times(i) {
                let (d_prev, d_next) = gp_interp_weights(times[i], times[i + 1], tau, &config.gp.qc)?;
                if sdf.is_some() {
                    factors.push(Factor {
                        first: i,
                        second: Some(i + 1),
                        kind: FactorKind::StaticInterp {
                            weight: T::one() / config.static_sigma,
                            d_prev,
                            d_next,
                        },
                    });
                }
                if dynamic.is_some() {
                    factors.push(Factor {
                        first: i,
                        second: Some(i + 1),
                        kind: FactorKind::DynamicInterp {
                            weight: T::one() / config.dynamic_sigma,
                            d_prev,
                            d_next,
                        },
                    });
                }
            }
        }
    }

    Ok(FactorGraph {
        factors,
        num_states: n,
        epsilon: config.epsilon,
        sdf,
        dynamic,
    })
}

fn scalar_unary<T: Real>(cost: T, grad: Vector4<T>, w: T) -> FactorEval<T> {
    let mut j = Matrix4::zeros();
    j.row_mut(0).copy_from(&(grad * w).transpose());
    FactorEval {
        residual: Vector4::new(cost * w, T::zero(), T::zero(), T::zero()),
        j_first: j,
        j_second: None,
    }
}

fn scalar_binary<T: Real>(
    cost: T,
    grad: Vector4<T>,
    w: T,
    d_prev: &Matrix4<T>,
    d_next: &Matrix4<T>,
) -> FactorEval<T> {
    let mut j1 = Matrix4::zeros();
    let mut j2 = Matrix4::zeros();
    j1.row_mut(0).copy_from(&((grad.transpose() * d_prev) * w));
    j2.row_mut(0).copy_from(&((grad.transpose() * d_next) * w));
    FactorEval {
        residual: Vector4::new(cost * w, T::zero(), T::zero(), T::zero()),
        j_first: j1,
        j_second: Some(j2),
    }
}

impl<'a, T: Real> FactorGraph<'a, T> {
    pub fn factors(&self) -> &[Factor<T>] {
        &self.factors
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn epsilon(&self) -> T {
        self.epsilon
    }

    fn interp_state(
        &self,
        f: &Factor<T>,
        traj: &Trajectory<T>,
        d_prev: &Matrix4<T>,
        d_next: &Matrix4<T>,
    ) -> TrajectoryState<T> {
        let xi = traj.states[f.first].as_vector();
        let xj = traj.states[f.second.expect("interp factor is binary")].as_vector();
        TrajectoryState::from_vector(&(d_prev * xi + d_next * xj))
    }

    /// Whitened residual and Jacobians of one factor at the given trajectory.
    pub fn eval_factor(&self, f: &Factor<T>, traj: &Trajectory<T>) -> FactorEval<T> {
        let xi = &traj.states[f.first];
        match &f.kind {
            FactorKind::EndpointPrior { target, weight } => FactorEval {
                residual: (xi.as_vector() - target) * *weight,
                j_first: Matrix4::identity() * *weight,
                j_second: None,
            },
            FactorKind::GpPrior {
                phi,
                whitener,
                j_first,
            } => {
                let xj = traj.states[f.second.expect("gp factor is binary")].as_vector();
                FactorEval {
                    residual: whitener * (xj - phi * xi.as_vector()),
                    j_first: *j_first,
                    j_second: Some(*whitener),
                }
            }
            FactorKind::StaticObstacle { weight } => {
                let sdf = self.sdf.expect("static factor without a static field");
                let (c, g) = static_factor_error(xi, sdf, self.epsilon);
                scalar_unary(c, g, *weight)
            }
            FactorKind::StaticInterp {
                weight,
                d_prev,
                d_next,
            } => {
                let sdf = self.sdf.expect("static factor without a static field");
                let s = self.interp_state(f, traj, d_prev, d_next);
                let (c, g) = static_factor_error(&s, sdf, self.epsilon);
                scalar_binary(c, g, *weight, d_prev, d_next)
            }
            FactorKind::DynamicObstacle { weight } => {
                let field = self.dynamic.expect("dynamic factor without a dynamic field");
                let (c, g) = dynamic_factor_error(xi, field);
                scalar_unary(c, g, *weight)
            }
            FactorKind::DynamicInterp {
                weight,
                d_prev,
                d_next,
            } => {
                let field = self.dynamic.expect("dynamic factor without a dynamic field");
                let s = self.interp_state(f, traj, d_prev, d_next);
                let (c, g) = dynamic_factor_error(&s, field);
                scalar_binary(c, g, *weight, d_prev, d_next)
            }
        }
    }

    fn check_len(&self, traj: &Trajectory<T>) -> Result<()> {
        if traj.len() != self.num_states {
            return Err(Error::StateCountMismatch {
                states: traj.len(),
                expected: self.num_states,
            });
        }
        Ok(())
    }

    /// Half the sum of squared whitened residuals.
    pub fn total_error(&self, traj: &Trajectory<T>) -> Result<T> {
        self.check_len(traj)?;
        let mut e = T::zero();
        for f in &self.factors {
            e += self.eval_factor(f, traj).residual.norm_squared();
        }
        Ok(e * cst(0.5))
    }

    /// Accumulate the Gauss-Newton normal equations in factor order.
    pub fn linearize(&self, traj: &Trajectory<T>) -> Result<NormalEqs<T>> {
        self.check_len(traj)?;
        let n = self.num_states;
        let mut eqs = NormalEqs {
            diag: vec![Matrix4::zeros(); n],
            off: vec![Matrix4::zeros(); n.saturating_sub(1)],
            grad: vec![Vector4::zeros(); n],
        };
        for f in &self.factors {
            let ev = self.eval_factor(f, traj);
            let j1t = ev.j_first.transpose();
            eqs.diag[f.first] += j1t * ev.j_first;
            eqs.grad[f.first] += j1t * ev.residual;
            if let (Some(j2), Some(s)) = (ev.j_second.as_ref(), f.second) {
                debug_assert_eq!(s, f.first + 1, "binary factors connect neighbours");
                eqs.diag[s] += j2.transpose() * j2;
                eqs.off[f.first] += j1t * j2;
                eqs.grad[s] += j2.transpose() * ev.residual;
            }
        }
        Ok(eqs)
    }
}
