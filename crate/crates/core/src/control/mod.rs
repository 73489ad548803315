//! Action executor: meta-action -> target speed -> steering/throttle/brake.
//!
//! Longitudinal control is a PID on the speed error. Lateral control picks a lookahead
//! path-point 3..7 points ahead (further at higher speed) and either runs a PID on the
//! heading error to that point or applies the pure-pursuit law directly.

mod pid;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use pid::{PidGains, PidState, PidTerms, LATERAL_BUFFER, LONGITUDINAL_BUFFER};

use crate::decision::MetaAction;
use crate::geometry::{wrap_angle, Vec2};
use crate::sim::{EgoState, RouteSpec};

/// Speed change applied by one AC or DC, in m/s.
pub const META_SPEED_STEP: f64 = 1.0;
pub const MIN_LOOKAHEAD_POINTS: usize = 3;
pub const MAX_LOOKAHEAD_POINTS: usize = 7;

#[derive(Debug, Error, PartialEq)]
pub enum ControlError {
    #[error("no path-points remain ahead of the ego")]
    EmptyPath,
    #[error("lookahead point coincides with the ego position")]
    ZeroLookahead,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlSignal {
    pub steer: f64,
    pub throttle: f64,
    pub brake: f64,
}

impl ControlSignal {
    /// Clamps every channel into range; NaN maps to zero.
    pub fn clamped(&self) -> Self {
        let fix = |v: f64, lo: f64, hi: f64| if v.is_nan() { 0.0 } else { v.clamp(lo, hi) };
        Self { steer: fix(self.steer, -1.0, 1.0), throttle: fix(self.throttle, 0.0, 1.0), brake: fix(self.brake, 0.0, 1.0) }
    }
}

pub fn meta_to_target_speed(meta: MetaAction, current_target: f64, v_max: f64) -> f64 {
    let next = match meta {
        MetaAction::Ac => current_target + META_SPEED_STEP,
        MetaAction::Dc => current_target - META_SPEED_STEP,
        MetaAction::Stop => 0.0,
        MetaAction::Idle => current_target,
    };
    next.clamp(0.0, v_max)
}

/// Number of path-points ahead of the nearest one to aim at: 3 at standstill, 7 at `v_max`.
pub fn lookahead_points(speed: f64, v_max: f64) -> usize {
    let ratio = (speed.max(0.0).min(v_max) / v_max).clamp(0.0, 1.0);
    let span = (MAX_LOOKAHEAD_POINTS - MIN_LOOKAHEAD_POINTS) as f64;
    (MIN_LOOKAHEAD_POINTS as f64 + span * ratio).round() as usize
}

/// Index of the lookahead point given the nearest path index; the last point when fewer
/// than the required number remain.
pub fn select_target_index(speed: f64, v_max: f64, nearest: usize, path_len: usize) -> Result<usize, ControlError> {
    if nearest >= path_len {
        return Err(ControlError::EmptyPath);
    }
    Ok((nearest + lookahead_points(speed, v_max)).min(path_len - 1))
}

pub fn select_target_point(ego: &EgoState, path: &[Vec2], nearest: usize, v_max: f64) -> Result<Vec2, ControlError> {
    select_target_index(ego.speed, v_max, nearest, path.len()).map(|i| path[i])
}

/// Bearing of `target` relative to the vehicle heading, in (-pi, pi].
pub fn heading_error(position: Vec2, heading: f64, target: Vec2) -> f64 {
    wrap_angle((target - position).angle() - heading)
}

/// Pure-pursuit steering angle (rad): `atan(2 L sin(alpha) / ld)`.
pub fn pure_pursuit_steer(position: Vec2, heading: f64, wheelbase: f64, target: Vec2) -> Result<f64, ControlError> {
    let ld = position.distance(target);
    if ld < 1e-9 {
        return Err(ControlError::ZeroLookahead);
    }
    let alpha = heading_error(position, heading, target);
    Ok((2.0 * wheelbase * alpha.sin() / ld).atan())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LateralMode {
    /// Lateral PID on the heading error to the lookahead point.
    Pid,
    /// Pure-pursuit law on the lookahead point.
    PurePursuit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlConfig {
    pub v_max: f64,
    pub dt: f64,
    pub longitudinal: PidGains,
    pub longitudinal_buffer: usize,
    pub lateral: PidGains,
    pub lateral_buffer: usize,
    /// Longitudinal PID output is divided by this before clamping to throttle/brake.
    pub output_scale: f64,
    /// Steering angle (rad) mapped to a unit steering command.
    pub max_steer_angle: f64,
    pub lateral_mode: LateralMode,
}

impl Default for ControlConfig {
    fn default() -> Self {
        Self {
            v_max: 8.0,
            dt: crate::sim::PHYSICS_DT,
            longitudinal: PidGains::LONGITUDINAL,
            longitudinal_buffer: LONGITUDINAL_BUFFER,
            lateral: PidGains::LATERAL,
            lateral_buffer: LATERAL_BUFFER,
            output_scale: 10.0,
            max_steer_angle: 0.5,
            lateral_mode: LateralMode::Pid,
        }
    }
}

/// Per-tick controller record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlTrace {
    pub t: f64,
    pub target_speed: f64,
    pub speed: f64,
    pub speed_error: f64,
    pub heading_error: f64,
    /// Signed perpendicular offset from the route polyline, positive to the left.
    pub cross_track: f64,
    pub target_index: usize,
    pub longitudinal: PidTerms,
    pub lateral: PidTerms,
    pub signal: ControlSignal,
}

/// Per-route controller: owns both PID states and the path cursor.
#[derive(Debug, Clone)]
pub struct Controller {
    pub config: ControlConfig,
    longitudinal: PidState,
    lateral: PidState,
    cursor: usize,
}

const CURSOR_BEHIND: usize = 5;
const CURSOR_AHEAD: usize = 40;

impl Controller {
    pub fn new(config: ControlConfig) -> Self {
        let longitudinal = PidState::new(config.longitudinal, config.longitudinal_buffer, config.dt);
        let lateral = PidState::new(config.lateral, config.lateral_buffer, config.dt);
        Self { config, longitudinal, lateral, cursor: 0 }
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }

    /// One control tick toward `target_speed` along `path`. `t` only stamps the trace.
    pub fn step(&mut self, ego: &EgoState, path: &RouteSpec, target_speed: f64, t: f64) -> Result<ControlTrace, ControlError> {
        if path.is_empty() {
            return Err(ControlError::EmptyPath);
        }
        let lo = self.cursor.saturating_sub(CURSOR_BEHIND);
        let (nearest, _) = path.nearest_point(ego.position, lo, self.cursor + CURSOR_AHEAD);
        self.cursor = nearest;
        let cross_track = path.project(ego.position, lo, self.cursor + CURSOR_AHEAD).lateral;
        let target_index = select_target_index(ego.speed, self.config.v_max, nearest, path.len())?;
        let target = path.points[target_index];

        let speed_error = target_speed - ego.speed;
        let longitudinal = self.longitudinal.step_terms(speed_error);
        let u = longitudinal.output() / self.config.output_scale;
        let (throttle, brake) = if u >= 0.0 { (u.min(1.0), 0.0) } else { (0.0, (-u).min(1.0)) };

        let (heading_err, angle, lateral) = if ego.position.distance(target) < 1e-9 {
            (0.0, 0.0, self.lateral.step_terms(0.0))
        } else {
            let err = heading_error(ego.position, ego.heading, target);
            match self.config.lateral_mode {
                LateralMode::Pid => {
                    let terms = self.lateral.step_terms(err);
                    (err, terms.output(), terms)
                }
                LateralMode::PurePursuit => {
                    let angle = pure_pursuit_steer(ego.position, ego.heading, ego.wheelbase, target)?;
                    (err, angle, PidTerms::default())
                }
            }
        };
        let steer = (angle / self.config.max_steer_angle).clamp(-1.0, 1.0);

        Ok(ControlTrace {
            t,
            target_speed,
            speed: ego.speed,
            speed_error,
            heading_error: heading_err,
            cross_track,
            target_index,
            longitudinal,
            lateral,
            signal: ControlSignal { steer, throttle, brake },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_4;

    #[test]
    fn meta_action_speeds() {
        assert_eq!(meta_to_target_speed(MetaAction::Ac, 3.0, 8.0), 4.0);
        assert_eq!(meta_to_target_speed(MetaAction::Idle, 4.0, 8.0), 4.0);
        assert_eq!(meta_to_target_speed(MetaAction::Dc, 0.5, 8.0), 0.0);
        assert_eq!(meta_to_target_speed(MetaAction::Stop, 6.0, 8.0), 0.0);
        assert_eq!(meta_to_target_speed(MetaAction::Ac, 8.0, 8.0), 8.0);
    }

    #[test]
    fn idle_and_stop_idempotent() {
        for v in [0.0, 2.5, 8.0] {
            let once = meta_to_target_speed(MetaAction::Idle, v, 8.0);
            assert_eq!(meta_to_target_speed(MetaAction::Idle, once, 8.0), once);
            let once = meta_to_target_speed(MetaAction::Stop, v, 8.0);
            assert_eq!(meta_to_target_speed(MetaAction::Stop, once, 8.0), once);
        }
    }

    #[test]
    fn lookahead_range() {
        assert_eq!(lookahead_points(0.0, 8.0), 3);
        assert_eq!(lookahead_points(8.0, 8.0), 7);
        assert_eq!(lookahead_points(4.0, 8.0), 5);
        assert_eq!(lookahead_points(20.0, 8.0), 7);
        assert_eq!(select_target_index(0.0, 8.0, 98, 100), Ok(99));
        assert_eq!(select_target_index(0.0, 8.0, 100, 100), Err(ControlError::EmptyPath));
    }

    #[test]
    fn pure_pursuit_values() {
        let ld = 7.071;
        let ahead = pure_pursuit_steer(Vec2::ZERO, 0.0, 2.5, Vec2::new(10.0, 0.0)).unwrap();
        assert_eq!(ahead, 0.0);
        let left = pure_pursuit_steer(Vec2::ZERO, 0.0, 2.5, Vec2::from_angle(FRAC_PI_4) * ld).unwrap();
        assert!((left - 0.46365).abs() < 1e-5, "{left}");
        let right = pure_pursuit_steer(Vec2::ZERO, 0.0, 2.5, Vec2::from_angle(-FRAC_PI_4) * ld).unwrap();
        assert!((right + 0.46365).abs() < 1e-5);
        assert_eq!(pure_pursuit_steer(Vec2::ZERO, 0.0, 2.5, Vec2::ZERO), Err(ControlError::ZeroLookahead));
    }

    fn ego(speed: f64) -> EgoState {
        EgoState { position: Vec2::ZERO, heading: 0.0, speed, lane: None, wheelbase: 2.5, target_speed: speed, steer: 0.0 }
    }

    #[test]
    fn equilibrium_and_braking() {
        let path = RouteSpec::new(vec![Vec2::ZERO, Vec2::new(100.0, 0.0)]).unwrap();
        let mut c = Controller::new(ControlConfig::default());
        let tr = c.step(&ego(5.0), &path, 5.0, 0.0).unwrap();
        assert_eq!(tr.signal.throttle, 0.0);
        assert_eq!(tr.signal.brake, 0.0);
        assert_eq!(tr.signal.steer, 0.0);

        let mut c = Controller::new(ControlConfig::default());
        let tr = c.step(&ego(5.0), &path, 0.0, 0.0).unwrap();
        assert!(tr.signal.brake > 0.0);
        assert_eq!(tr.signal.throttle, 0.0);
    }

    #[test]
    fn clamps_control_channels() {
        let c = ControlSignal { steer: -3.0, throttle: f64::NAN, brake: 2.0 }.clamped();
        assert_eq!(c, ControlSignal { steer: -1.0, throttle: 0.0, brake: 1.0 });
    }
}
