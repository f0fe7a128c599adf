use nalgebra::{Vector2, Vector4};

use crate::{cst, Error, Real, Result};

/// Planar vehicle state: position and velocity, stacked as (x, y, vx, vy).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryState<T: Real> {
    pub position: Vector2<T>,
    pub velocity: Vector2<T>,
}

impl<T: Real> TrajectoryState<T> {
    pub fn new(position: Vector2<T>, velocity: Vector2<T>) -> Self {
        Self { position, velocity }
    }

    pub fn as_vector(&self) -> Vector4<T> {
        Vector4::new(
            self.position.x,
            self.position.y,
            self.velocity.x,
            self.velocity.y,
        )
    }

    pub fn from_vector(v: &Vector4<T>) -> Self {
        Self {
            position: Vector2::new(v.x, v.y),
            velocity: Vector2::new(v.z, v.w),
        }
    }
}

/// Support times of a trajectory plus the number of interpolated query times
/// per segment. Times are strictly increasing and start at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid<T: Real> {
    times: Vec<T>,
    interp_per_segment: usize,
}

impl<T: Real> TimeGrid<T> {
    pub fn new(times: Vec<T>, interp_per_segment: usize) -> Result<Self> {
        if times.len() < 2 || times[0] != T::zero() {
            return Err(Error::InvalidTimeGrid);
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidTimeGrid);
        }
        Ok(Self {
            times,
            interp_per_segment,
        })
    }

    /// Uniform grid over [0, total_time] with `segments` equal steps.
    pub fn uniform(segments: usize, total_time: T, interp_per_segment: usize) -> Result<Self> {
        if segments == 0 || total_time <= T::zero() {
            return Err(Error::InvalidTimeGrid);
        }
        let n = cst::<T>(segments as f64);
        let times = (0..=segments)
            .map(|i| {
                if i == segments {
                    total_time
                } else {
                    total_time * cst::<T>(i as f64) / n
                }
            })
            .collect();
        Self::new(times, interp_per_segment)
    }

    pub fn times(&self) -> &[T] {
        &self.times
    }

    pub fn num_states(&self) -> usize {
        self.times.len()
    }

    pub fn num_segments(&self) -> usize {
        self.times.len() - 1
    }

    pub fn interp_per_segment(&self) -> usize {
        self.interp_per_segment
    }

    pub fn total_time(&self) -> T {
        *self.times.last().unwrap()
    }

    pub fn dt(&self, segment: usize) -> T {
        self.times[segment + 1] - self.times[segment]
    }

    /// Interpolated query times of one segment, strictly inside it, evenly
    /// spaced: t_i + j * dt / (k + 1) for j = 1..=k.
    pub fn interp_times(&self, segment: usize) -> Vec<T> {
        let t0 = self.times[segment];
        let dt = self.dt(segment);
        let k = self.interp_per_segment;
        let denom = cst::<T>((k + 1) as f64);
        (1..=k)
            .map(|j| t0 + dt * cst::<T>(j as f64) / denom)
            .collect()
    }
}

/// Trajectory: one state per support time.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T: Real> {
    pub states: Vec<TrajectoryState<T>>,
}

impl<T: Real> Trajectory<T> {
    pub fn new(states: Vec<TrajectoryState<T>>) -> Self {
        Self { states }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Sum of straight segment lengths between consecutive support positions.
    pub fn support_path_length(&self) -> T {
        self.states
            .windows(2)
            .fold(T::zero(), |acc, w| {
                acc + (w[1].position - w[0].position).norm()
            })
    }
}

/// Mission duration from endpoints and a nominal cruise speed. Coincident
/// endpoints get the configured minimum so the time grid stays valid.
pub const MIN_TOTAL_TIME_S: f64 = 1.0;

pub fn total_time_from_nominal_speed<T: Real>(
    start: &Vector2<T>,
    goal: &Vector2<T>,
    nominal_speed: T,
) -> Result<T> {
    if nominal_speed <= T::zero() {
        return Err(Error::NonPositiveSpeed(
            nominal_speed.to_subset().unwrap_or(f64::NAN),
        ));
    }
    let dist = (goal - start).norm();
    if dist == T::zero() {
        return Ok(cst(MIN_TOTAL_TIME_S));
    }
    Ok(dist / nominal_speed)
}

/// Constant-velocity straight-line initialization: positions interpolate
/// start to goal linearly in time, velocity is (goal - start) / T throughout.
/// Endpoint positions are the inputs themselves, untouched by arithmetic.
pub fn init_straight_line<T: Real>(
    start: &Vector2<T>,
    goal: &Vector2<T>,
    grid: &TimeGrid<T>,
) -> Trajectory<T> {
    let total = grid.total_time();
    let velocity = (goal - start) / total;
    let n = grid.num_states();
    let states = grid
        .times()
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let position = if i == 0 {
                *start
            } else if i == n - 1 {
                *goal
            } else {
                start + (goal - start) * (t / total)
            };
            TrajectoryState::new(position, velocity)
        })
        .collect();
    Trajectory::new(states)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn straight_line_midpoint_and_velocity() {
        let grid = TimeGrid::uniform(2, 10.0, 0).unwrap();
        let traj = init_straight_line(
            &Vector2::new(20.0, 20.0),
            &Vector2::new(80.0, 80.0),
            &grid,
        );
        assert_eq!(traj.len(), 3);
        assert_relative_eq!(traj.states[1].position.x, 50.0);
        assert_relative_eq!(traj.states[1].position.y, 50.0);
        for s in &traj.states {
            assert_relative_eq!(s.velocity.x, 6.0);
            assert_relative_eq!(s.velocity.y, 6.0);
        }
    }

    #[test]
    fn straight_line_endpoints_are_bitwise_inputs() {
        // 0.1/0.3-style endpoints catch any lerp arithmetic applied at i=0, N.
        let start = Vector2::new(0.1_f64, 0.7);
        let goal = Vector2::new(0.3_f64, 0.2);
        let grid = TimeGrid::uniform(7, 3.0, 0).unwrap();
        let traj = init_straight_line(&start, &goal, &grid);
        assert_eq!(traj.states[0].position, start);
        assert_eq!(traj.states[7].position, goal);
    }

    #[test]
    fn degenerate_mission_is_stationary() {
        let p = Vector2::new(5.0, -3.0);
        let grid = TimeGrid::uniform(4, 1.0, 0).unwrap();
        let traj = init_straight_line(&p, &p, &grid);
        for s in &traj.states {
            assert_eq!(s.position, p);
            assert_relative_eq!(s.velocity.norm(), 0.0);
        }
    }

    #[test]
    fn total_time_examples() {
        let t = total_time_from_nominal_speed(
            &Vector2::new(20.0, 20.0),
            &Vector2::new(80.0, 80.0),
            2.0,
        )
        .unwrap();
        assert_relative_eq!(t, 42.42640687119285, epsilon = 1e-9);

        let t = total_time_from_nominal_speed(
            &Vector2::new(50.0, 10.0),
            &Vector2::new(50.0, 90.0),
            4.0,
        )
        .unwrap();
        assert_relative_eq!(t, 20.0);

        let p = Vector2::new(1.0, 1.0);
        assert_relative_eq!(total_time_from_nominal_speed(&p, &p, 2.0).unwrap(), 1.0);

        assert!(total_time_from_nominal_speed(&p, &p, 0.0).is_err());
        assert!(total_time_from_nominal_speed(&p, &p, -2.0).is_err());
    }

    #[test]
    fn time_grid_validation() {
        assert!(TimeGrid::new(vec![0.0_f64], 0).is_err());
        assert!(TimeGrid::new(vec![1.0, 2.0], 0).is_err());
        assert!(TimeGrid::new(vec![0.0, 2.0, 2.0], 0).is_err());
        assert!(TimeGrid::uniform(0, 1.0, 0).is_err());
        assert!(TimeGrid::uniform(5, 0.0, 0).is_err());
        let g = TimeGrid::uniform(20, 42.0, 4).unwrap();
        assert_eq!(g.num_states(), 21);
        assert_eq!(g.num_segments(), 20);
        assert_relative_eq!(g.total_time(), 42.0);
    }

    #[test]
    fn interp_times_stay_strictly_inside_segments() {
        let g = TimeGrid::uniform(3, 9.0, 4).unwrap();
        for seg in 0..3 {
            let taus = g.interp_times(seg);
            assert_eq!(taus.len(), 4);
            for tau in taus {
                assert!(tau > g.times()[seg] && tau < g.times()[seg + 1]);
            }
        }
        assert!(g.interp_times(0).windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn works_in_f32() {
        let grid = TimeGrid::<f32>::uniform(2, 10.0, 0).unwrap();
        let traj = init_straight_line(&Vector2::new(0.0_f32, 0.0), &Vector2::new(8.0, 6.0), &grid);
        assert_relative_eq!(traj.support_path_length(), 10.0_f32, epsilon = 1e-5);
    }
}
