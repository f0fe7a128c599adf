//! Constant-velocity Gaussian-process prior. States evolve by the linear
//! model p' = p + dt v, v' = v, driven by white acceleration noise with
//! spectral density Qc, which gives the classic transition/noise pair
//!
//!   Phi(dt) = [ I  dt I ]      Q(dt) = [ dt^3/3 Qc   dt^2/2 Qc ]
//!             [ 0     I ]              [ dt^2/2 Qc   dt     Qc ]
//!
//! and lets any time inside a segment be interpolated from the two bounding
//! states alone.

use nalgebra::{Matrix2, Matrix4, Vector4};

use crate::trajectory::TrajectoryState;
use crate::{cst, Error, Real, Result};

/// Prior configuration: noise spectral density and the sigmas of the two
/// endpoint-fixing priors.
#[derive(Debug, Clone)]
pub struct GpPriorParams<T: Real> {
    pub qc: Matrix2<T>,
    pub start_fix_sigma: T,
    pub goal_fix_sigma: T,
}

pub const DEFAULT_FIX_SIGMA: f64 = 1e-4;

impl<T: Real> GpPriorParams<T> {
    pub fn new(qc: Matrix2<T>, start_fix_sigma: T, goal_fix_sigma: T) -> Result<Self> {
        let asym = (qc.m12 - qc.m21).abs();
        let scale = qc.norm().max(T::one());
        if asym > scale * cst(1e-12) || qc.cholesky().is_none() {
            return Err(Error::NotPositiveDefinite {
                what: "noise spectral density qc",
            });
        }
        if start_fix_sigma <= T::zero() || goal_fix_sigma <= T::zero() {
            return Err(Error::ParamRange {
                name: "endpoint fix sigma",
                msg: "must be positive".into(),
            });
        }
        Ok(Self {
            qc,
            start_fix_sigma,
            goal_fix_sigma,
        })
    }

    /// Isotropic qc with the default endpoint sigmas.
    pub fn isotropic(qc: T) -> Result<Self> {
        Self::new(
            Matrix2::identity() * qc,
            cst(DEFAULT_FIX_SIGMA),
            cst(DEFAULT_FIX_SIGMA),
        )
    }
}

fn blocks<T: Real>(
    m11: &Matrix2<T>,
    m12: &Matrix2<T>,
    m21: &Matrix2<T>,
    m22: &Matrix2<T>,
) -> Matrix4<T> {
    let mut m = Matrix4::zeros();
    m.fixed_view_mut::<2, 2>(0, 0).copy_from(m11);
    m.fixed_view_mut::<2, 2>(0, 2).copy_from(m12);
    m.fixed_view_mut::<2, 2>(2, 0).copy_from(m21);
    m.fixed_view_mut::<2, 2>(2, 2).copy_from(m22);
    m
}

/// State transition over a non-negative time step.
pub fn state_transition<T: Real>(dt: T) -> Result<Matrix4<T>> {
    if dt < T::zero() {
        return Err(Error::NegativeDt(dt.to_subset().unwrap_or(f64::NAN)));
    }
    let i = Matrix2::identity();
    Ok(blocks(&i, &(i * dt), &Matrix2::zeros(), &i))
}

/// Process noise covariance accumulated over a positive time step.
pub fn process_noise_cov<T: Real>(dt: T, qc: &Matrix2<T>) -> Result<Matrix4<T>> {
    if dt <= T::zero() {
        return Err(Error::NonPositiveDt(dt.to_subset().unwrap_or(f64::NAN)));
    }
    let dt2 = dt * dt;
    let dt3 = dt2 * dt;
    let third: T = cst(1.0 / 3.0);
    let half: T = cst(0.5);
    Ok(blocks(
        &(qc * (dt3 * third)),
        &(qc * (dt2 * half)),
        &(qc * (dt2 * half)),
        &(qc * dt),
    ))
}

/// Prior residual between consecutive states: theta_{i+1} - Phi(dt) theta_i.
pub fn gp_prior_error<T: Real>(
    theta_i: &TrajectoryState<T>,
    theta_ip1: &TrajectoryState<T>,
    dt: T,
) -> Result<Vector4<T>> {
    let phi = state_transition(dt)?;
    Ok(theta_ip1.as_vector() - phi * theta_i.as_vector())
}

/// Jacobians of the prior residual wrt (theta_i, theta_{i+1}). The residual
/// is affine, so these are exact: (-Phi(dt), I).
pub fn gp_prior_jacobians<T: Real>(dt: T) -> Result<(Matrix4<T>, Matrix4<T>)> {
    Ok((-state_transition(dt)?, Matrix4::identity()))
}

/// Inverse lower Cholesky factor of Q(dt): the whitener W with
/// W Q(dt) W^T = I, so ||W e||^2 = e^T Q(dt)^{-1} e.
pub fn noise_whitener<T: Real>(dt: T, qc: &Matrix2<T>) -> Result<Matrix4<T>> {
    let q = process_noise_cov(dt, qc)?;
    let chol = q.cholesky().ok_or(Error::NotPositiveDefinite {
        what: "process noise covariance",
    })?;
    let l = chol.l();
    l.solve_lower_triangular(&Matrix4::identity())
        .ok_or(Error::NotPositiveDefinite {
            what: "process noise covariance",
        })
}

/// State at an off-support time plus its Jacobians wrt the bounding states.
#[derive(Debug, Clone, Copy)]
pub struct Interpolated<T: Real> {
    pub state: TrajectoryState<T>,
    /// d theta(tau) / d theta_i
    pub d_prev: Matrix4<T>,
    /// d theta(tau) / d theta_{i+1}
    pub d_next: Matrix4<T>,
}

/// Interpolation weights for a query strictly inside a segment. The map is
/// linear: theta(tau) = d_prev * theta_i + d_next * theta_{i+1} with
///
///   d_next = Q(tau - t_i) Phi(t_{i+1} - tau)^T Q(t_{i+1} - t_i)^{-1}
///   d_prev = Phi(tau - t_i) - d_next Phi(t_{i+1} - t_i)
pub fn gp_interp_weights<T: Real>(
    t_i: T,
    t_ip1: T,
    tau: T,
    qc: &Matrix2<T>,
) -> Result<(Matrix4<T>, Matrix4<T>)> {
    if !(tau > t_i && tau < t_ip1) {
        return Err(Error::TauOutsideSegment {
            tau: tau.to_subset().unwrap_or(f64::NAN),
            t0: t_i.to_subset().unwrap_or(f64::NAN),
            t1: t_ip1.to_subset().unwrap_or(f64::NAN),
        });
    }
    let q_tau = process_noise_cov(tau - t_i, qc)?;
    let phi_rest = state_transition(t_ip1 - tau)?;
    let q_seg = process_noise_cov(t_ip1 - t_i, qc)?;
    let chol = q_seg.cholesky().ok_or(Error::NotPositiveDefinite {
        what: "segment noise covariance",
    })?;
    // d_next = (q_tau phi_rest^T) q_seg^{-1}; q_seg is symmetric, so solve on
    // the transposed product.
    let a = q_tau * phi_rest.transpose();
    let d_next = chol.solve(&a.transpose()).transpose();
    let d_prev = state_transition(tau - t_i)? - d_next * state_transition(t_ip1 - t_i)?;
    Ok((d_prev, d_next))
}

/// Interpolate the state at tau in (t_i, t_{i+1}) from the bounding states.
pub fn gp_interpolate<T: Real>(
    theta_i: &TrajectoryState<T>,
    theta_ip1: &TrajectoryState<T>,
    t_i: T,
    t_ip1: T,
    tau: T,
    qc: &Matrix2<T>,
) -> Result<Interpolated<T>> {
    let (d_prev, d_next) = gp_interp_weights(t_i, t_ip1, tau, qc)?;
    let v = d_prev * theta_i.as_vector() + d_next * theta_ip1.as_vector();
    Ok(Interpolated {
        state: TrajectoryState::from_vector(&v),
        d_prev,
        d_next,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::Vector2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn max_abs_diff(a: &Matrix4<f64>, b: &Matrix4<f64>) -> f64 {
        (a - b).abs().max()
    }

    #[test]
    fn transition_structure() {
        let phi = state_transition(0.5_f64).unwrap();
        let expected = Matrix4::new(
            1.0, 0.0, 0.5, 0.0, //
            0.0, 1.0, 0.0, 0.5, //
            0.0, 0.0, 1.0, 0.0, //
            0.0, 0.0, 0.0, 1.0,
        );
        assert_eq!(phi, expected);
        assert!(state_transition(-0.1_f64).is_err());
        assert_eq!(state_transition(0.0_f64).unwrap(), Matrix4::identity());
    }

    #[test]
    fn transition_semigroup() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let a: f64 = rng.gen_range(0.0..5.0);
            let b: f64 = rng.gen_range(0.0..5.0);
            let lhs = state_transition(a).unwrap() * state_transition(b).unwrap();
            let rhs = state_transition(a + b).unwrap();
            assert!(max_abs_diff(&lhs, &rhs) < 1e-12);
        }
    }

    #[test]
    fn noise_cov_unit_step() {
        let q = process_noise_cov(1.0_f64, &Matrix2::identity()).unwrap();
        for i in 0..2 {
            assert_relative_eq!(q[(i, i)], 1.0 / 3.0, epsilon = 1e-15);
            assert_relative_eq!(q[(i, i + 2)], 0.5, epsilon = 1e-15);
            assert_relative_eq!(q[(i + 2, i)], 0.5, epsilon = 1e-15);
            assert_relative_eq!(q[(i + 2, i + 2)], 1.0, epsilon = 1e-15);
        }
        assert_relative_eq!(q[(0, 1)], 0.0);
    }

    #[test]
    fn noise_cov_scales_with_dt_and_qc() {
        let qc = Matrix2::new(3.0, 0.0, 0.0, 3.0);
        let q = process_noise_cov(2.0_f64, &qc).unwrap();
        // dt^3/3 * qc = 8/3 * 3 = 8 on the position block diagonal.
        assert_relative_eq!(q[(0, 0)], 8.0, epsilon = 1e-12);
        assert_relative_eq!(q[(1, 1)], 8.0, epsilon = 1e-12);
        assert!(process_noise_cov(0.0_f64, &qc).is_err());
        assert!(process_noise_cov(-1.0_f64, &qc).is_err());
    }

    #[test]
    fn noise_cov_is_spd_for_valid_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let dt: f64 = rng.gen_range(1e-3..20.0);
            // Random SPD qc = A A^T + eps I.
            let a = Matrix2::new(
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
            );
            let qc = a * a.transpose() + Matrix2::identity() * 1e-3;
            let q = process_noise_cov(dt, &qc).unwrap();
            assert!(q.cholesky().is_some(), "Q not SPD for dt={dt}");
        }
    }

    #[test]
    fn prior_error_zero_on_cv_rollout() {
        let dt = 2.5_f64;
        let s0 = TrajectoryState::new(Vector2::new(1.0, -2.0), Vector2::new(0.4, 1.1));
        let s1 = TrajectoryState::new(
            s0.position + s0.velocity * dt,
            s0.velocity,
        );
        let e = gp_prior_error(&s0, &s1, dt).unwrap();
        assert!(e.norm() < 1e-14);
    }

    #[test]
    fn prior_error_matches_scalar_formula() {
        // Oracle: componentwise e = (p' - p - dt v, v' - v).
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let dt: f64 = rng.gen_range(0.1..5.0);
            let r = |rng: &mut ChaCha8Rng| rng.gen_range(-50.0..50.0);
            let s0 = TrajectoryState::new(
                Vector2::new(r(&mut rng), r(&mut rng)),
                Vector2::new(r(&mut rng), r(&mut rng)),
            );
            let s1 = TrajectoryState::new(
                Vector2::new(r(&mut rng), r(&mut rng)),
                Vector2::new(r(&mut rng), r(&mut rng)),
            );
            let e = gp_prior_error(&s0, &s1, dt).unwrap();
            assert_relative_eq!(
                e[0],
                s1.position.x - s0.position.x - dt * s0.velocity.x,
                epsilon = 1e-12
            );
            assert_relative_eq!(
                e[1],
                s1.position.y - s0.position.y - dt * s0.velocity.y,
                epsilon = 1e-12
            );
            assert_relative_eq!(e[2], s1.velocity.x - s0.velocity.x, epsilon = 1e-12);
            assert_relative_eq!(e[3], s1.velocity.y - s0.velocity.y, epsilon = 1e-12);
        }
    }

    #[test]
    fn prior_jacobians_are_exact() {
        let dt = 0.5_f64;
        let (ja, jb) = gp_prior_jacobians(dt).unwrap();
        assert_eq!(jb, Matrix4::identity());
        assert_eq!(ja, -state_transition(dt).unwrap());

        // Affine residual: central differences agree to roundoff.
        let s0 = TrajectoryState::new(Vector2::new(3.0, -1.0), Vector2::new(1.5, 0.2));
        let s1 = TrajectoryState::new(Vector2::new(4.0, 0.5), Vector2::new(1.2, 0.1));
        let h = 1e-6;
        for k in 0..4 {
            let mut lo = s0.as_vector();
            let mut hi = s0.as_vector();
            lo[k] -= h;
            hi[k] += h;
            let e_lo = gp_prior_error(&TrajectoryState::from_vector(&lo), &s1, dt).unwrap();
            let e_hi = gp_prior_error(&TrajectoryState::from_vector(&hi), &s1, dt).unwrap();
            let fd = (e_hi - e_lo) / (2.0 * h);
            for r in 0..4 {
                assert_relative_eq!(ja[(r, k)], fd[r], epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn whitener_whitens() {
        let qc = Matrix2::new(1.3, 0.2, 0.2, 0.9);
        let dt = 1.7_f64;
        let w = noise_whitener(dt, &qc).unwrap();
        let q = process_noise_cov(dt, &qc).unwrap();
        let should_be_identity = w * q * w.transpose();
        assert!(max_abs_diff(&should_be_identity, &Matrix4::identity()) < 1e-10);
    }

    #[test]
    fn interpolation_on_cv_line_is_the_line() {
        let qc = Matrix2::identity();
        let s0 = TrajectoryState::new(Vector2::new(2.0, 1.0), Vector2::new(2.0, -1.0));
        let dt = 4.0_f64;
        let s1 = TrajectoryState::new(s0.position + s0.velocity * dt, s0.velocity);
        for f in [0.1, 0.25, 0.5, 0.9] {
            let tau = f * dt;
            let out = gp_interpolate(&s0, &s1, 0.0, dt, tau, &qc).unwrap();
            let expect = s0.position + s0.velocity * tau;
            assert_relative_eq!(out.state.position.x, expect.x, epsilon = 1e-10);
            assert_relative_eq!(out.state.position.y, expect.y, epsilon = 1e-10);
            assert_relative_eq!(out.state.velocity.x, s0.velocity.x, epsilon = 1e-10);
            assert_relative_eq!(out.state.velocity.y, s0.velocity.y, epsilon = 1e-10);
        }
    }

    #[test]
    fn interpolation_matches_explicit_inverse_oracle() {
        // Independent route: build the weights with a plain matrix inverse.
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..200 {
            let t0: f64 = rng.gen_range(0.0..3.0);
            let seg: f64 = rng.gen_range(0.5..6.0);
            let t1 = t0 + seg;
            let tau = t0 + seg * rng.gen_range(0.05..0.95);
            let qcs: f64 = rng.gen_range(0.2..4.0);
            let qc = Matrix2::identity() * qcs;

            let r = |rng: &mut ChaCha8Rng| rng.gen_range(-20.0..20.0);
            let s0 = TrajectoryState::new(
                Vector2::new(r(&mut rng), r(&mut rng)),
                Vector2::new(r(&mut rng), r(&mut rng)),
            );
            let s1 = TrajectoryState::new(
                Vector2::new(r(&mut rng), r(&mut rng)),
                Vector2::new(r(&mut rng), r(&mut rng)),
            );

            let psi = process_noise_cov(tau - t0, &qc).unwrap()
                * state_transition(t1 - tau).unwrap().transpose()
                * process_noise_cov(t1 - t0, &qc)
                    .unwrap()
                    .try_inverse()
                    .unwrap();
            let expect = state_transition(tau - t0).unwrap() * s0.as_vector()
                + psi * (s1.as_vector() - state_transition(t1 - t0).unwrap() * s0.as_vector());

            let got = gp_interpolate(&s0, &s1, t0, t1, tau, &qc).unwrap();
            assert!((got.state.as_vector() - expect).norm() < 1e-8 * (1.0 + expect.norm()));
        }
    }

    #[test]
    fn interpolation_approaches_bounding_states() {
        let qc = Matrix2::identity() * 0.7;
        let s0 = TrajectoryState::new(Vector2::new(1.0, 2.0), Vector2::new(-0.5, 0.3));
        let s1 = TrajectoryState::new(Vector2::new(7.0, -1.0), Vector2::new(1.0, 2.0));
        let (t0, t1) = (0.0_f64, 3.0);
        let near0 = gp_interpolate(&s0, &s1, t0, t1, 1e-7, &qc).unwrap();
        assert!((near0.state.as_vector() - s0.as_vector()).norm() < 1e-5);
        let near1 = gp_interpolate(&s0, &s1, t0, t1, 3.0 - 1e-7, &qc).unwrap();
        assert!((near1.state.as_vector() - s1.as_vector()).norm() < 1e-5);
    }

    #[test]
    fn interpolation_rejects_tau_outside_open_segment() {
        let qc = Matrix2::identity();
        let s = TrajectoryState::new(Vector2::new(0.0, 0.0), Vector2::new(1.0, 0.0));
        for tau in [0.0, 2.0, -0.5, 2.5] {
            assert!(gp_interpolate(&s, &s, 0.0, 2.0, tau, &qc).is_err());
        }
    }

    #[test]
    fn interpolation_jacobians_match_finite_differences() {
        let qc = Matrix2::new(1.1, 0.3, 0.3, 0.8);
        let (t0, t1, tau) = (1.0_f64, 4.5, 2.2);
        let s0 = TrajectoryState::new(Vector2::new(3.0, -2.0), Vector2::new(0.5, 1.5));
        let s1 = TrajectoryState::new(Vector2::new(9.0, 4.0), Vector2::new(-1.0, 0.75));
        let base = gp_interpolate(&s0, &s1, t0, t1, tau, &qc).unwrap();
        let h = 1e-6;
        for k in 0..4 {
            let mut lo = s0.as_vector();
            let mut hi = s0.as_vector();
            lo[k] -= h;
            hi[k] += h;
            let f_lo = gp_interpolate(&TrajectoryState::from_vector(&lo), &s1, t0, t1, tau, &qc)
                .unwrap()
                .state
                .as_vector();
            let f_hi = gp_interpolate(&TrajectoryState::from_vector(&hi), &s1, t0, t1, tau, &qc)
                .unwrap()
                .state
                .as_vector();
            let fd = (f_hi - f_lo) / (2.0 * h);
            for r in 0..4 {
                let a = base.d_prev[(r, k)];
                let denom = fd[r].abs().max(1.0);
                assert!(
                    (a - fd[r]).abs() / denom < 1e-6,
                    "d_prev[{r},{k}] = {a} vs fd {}",
                    fd[r]
                );
            }

            let mut lo = s1.as_vector();
            let mut hi = s1.as_vector();
            lo[k] -= h;
            hi[k] += h;
            let f_lo = gp_interpolate(&s0, &TrajectoryState::from_vector(&lo), t0, t1, tau, &qc)
                .unwrap()
                .state
                .as_vector();
            let f_hi = gp_interpolate(&s0, &TrajectoryState::from_vector(&hi), t0, t1, tau, &qc)
                .unwrap()
                .state
                .as_vector();
            let fd = (f_hi - f_lo) / (2.0 * h);
            for r in 0..4 {
                let a = base.d_next[(r, k)];
                let denom = fd[r].abs().max(1.0);
                assert!(
                    (a - fd[r]).abs() / denom < 1e-6,
                    "d_next[{r},{k}] = {a} vs fd {}",
                    fd[r]
                );
            }
        }
    }

    #[test]
    fn params_validation() {
        assert!(GpPriorParams::isotropic(1.0_f64).is_ok());
        assert!(GpPriorParams::isotropic(-1.0_f64).is_err());
        let asym = Matrix2::new(1.0, 0.5, -0.5, 1.0);
        assert!(GpPriorParams::new(asym, 1e-4_f64, 1e-4).is_err());
        let ok = Matrix2::new(2.0, 0.3, 0.3, 1.0);
        assert!(GpPriorParams::new(ok, 1e-4_f64, 1e-4).is_ok());
        assert!(GpPriorParams::new(ok, 0.0_f64, 1e-4).is_err());
    }
}
