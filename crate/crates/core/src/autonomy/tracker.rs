use serde::{Deserialize, Serialize};

use crate::autonomy::planner::PlannedPath;
use crate::num::wrap_angle;
use crate::vehicle::{Command, Pose};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackerParams {
    pub kp_heading: f64,
    pub kp_speed: f64,
    /// m/s
    pub v_ref: f64,
    /// m
    pub lookahead: f64,
    /// Below this distance to the goal the goal heading is blended in, m.
    pub goal_blend_radius: f64,
    /// Speed target per meter of remaining along-track distance near the goal, 1/s.
    pub approach_gain: f64,
    /// Along-track distance treated as "at the goal", m.
    pub arrive_along: f64,
    /// Lateral and heading limits for declaring arrival.
    pub arrive_lateral: f64,
    pub arrive_yaw: f64,
    /// Largest speed at which the vehicle counts as stopped, m/s.
    pub stopped_speed: f64,
}

impl Default for TrackerParams {
    fn default() -> Self {
        Self {
            kp_heading: 2.0,
            kp_speed: 4.0,
            v_ref: 0.15,
            lookahead: 0.2,
            goal_blend_radius: 0.15,
            approach_gain: 1.0,
            arrive_along: 0.012,
            arrive_lateral: 0.03,
            arrive_yaw: 0.07,
            stopped_speed: 0.005,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrackStatus {
    Following,
    Arrived,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrackError {
    #[error("empty path")]
    EmptyPath,
}

/// Proportional path follower with a lookahead point.
#[derive(Debug, Clone)]
pub struct Tracker {
    pub params: TrackerParams,
    /// Arc length of the last projection onto the path; only moves forward.
    progress: f64,
}

fn project(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> (f64, f64) {
    let (ex, ey) = (b[0] - a[0], b[1] - a[1]);
    let len2 = ex * ex + ey * ey;
    let t = if len2 > 0.0 {
        (((p[0] - a[0]) * ex + (p[1] - a[1]) * ey) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (qx, qy) = (a[0] + t * ex, a[1] + t * ey);
    (t, (p[0] - qx).hypot(p[1] - qy))
}

impl Tracker {
    pub fn new(params: TrackerParams) -> Self {
        Self {
            params,
            progress: 0.0,
        }
    }

    /// Forget progress (after a replan).
    pub fn reset(&mut self) {
        self.progress = 0.0;
    }

    /// Projects `p` on the path, searching forward from the current progress.
    fn advance(&mut self, path: &PlannedPath, p: [f64; 2]) -> f64 {
        let mut s = 0.0;
        let mut best = (f64::INFINITY, self.progress);
        let window = self.progress + 4.0 * self.params.lookahead + 0.3;
        for w in path.waypoints.windows(2) {
            let len = (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]);
            if s + len >= self.progress && s <= window {
                let (t, d) = project(w[0], w[1], p);
                let at = s + t * len;
                if at >= self.progress && d < best.0 {
                    best = (d, at);
                }
            }
            s += len;
        }
        self.progress = best.1;
        self.progress
    }

    /// Commands toward `path` from `pose` moving at forward speed `vx`.
    pub fn track_path(
        &mut self,
        pose: &Pose<f64>,
        vx: f64,
        path: &PlannedPath,
    ) -> Result<(Command<f64>, TrackStatus), TrackError> {
        if path.waypoints.is_empty() {
            return Err(TrackError::EmptyPath);
        }
        let p = self.params;
        let [gx, gy, gyaw] = path.goal_pose;
        let (gs, gc) = gyaw.sin_cos();
        let (ex, ey) = (gx - pose.x, gy - pose.y);
        let along = ex * gc + ey * gs;
        let lateral = -ex * gs + ey * gc;
        let yaw_err = wrap_angle(gyaw - pose.yaw);
        let dist = ex.hypot(ey);

        if along.abs() <= p.arrive_along
            && lateral.abs() <= p.arrive_lateral
            && yaw_err.abs() <= p.arrive_yaw
        {
            if vx.abs() <= p.stopped_speed {
                return Ok((Command::zero(), TrackStatus::Arrived));
            }
            let throttle = (p.kp_speed * -vx).clamp(-1.0, 1.0);
            return Ok((Command::new(throttle, 0.0), TrackStatus::Following));
        }

        let s = self.advance(path, [pose.x, pose.y]);
        let total = path.length();
        let target = if s + p.lookahead <= total {
            path.point_at(s + p.lookahead)
        } else {
            // past the end, aim along the goal heading
            let extra = s + p.lookahead - total;
            [gx + extra * gc, gy + extra * gs]
        };
        let mut heading_err = wrap_angle((target[1] - pose.y).atan2(target[0] - pose.x) - pose.yaw);
        if dist < p.goal_blend_radius {
            let beta = 0.5 * (1.0 - dist / p.goal_blend_radius);
            heading_err = (1.0 - beta) * heading_err + beta * yaw_err;
        }

        let remaining = if dist < p.goal_blend_radius + p.lookahead {
            along
        } else {
            (total - s).max(along)
        };
        let mut v_target = p.v_ref.min(p.approach_gain * remaining.max(0.0));
        let mut steering = (p.kp_heading * heading_err).clamp(-1.0, 1.0);
        if remaining < 0.0 {
            // overshoot: back up slowly along the goal heading
            v_target = (p.approach_gain * remaining).max(-0.5 * p.v_ref);
            steering = 0.0;
        }
        let throttle = if remaining.abs() <= p.arrive_along {
            0.0
        } else {
            (p.kp_speed * (v_target - vx)).clamp(-1.0, 1.0)
        };
        Ok((Command::new(throttle, steering), TrackStatus::Following))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line() -> PlannedPath {
        PlannedPath {
            waypoints: (0..=50).map(|k| [k as f64 * 0.02, 0.0]).collect(),
            goal_pose: [1.0, 0.0, 0.0],
        }
    }

    #[test]
    fn on_path_at_speed_is_quiet() {
        let mut t = Tracker::new(TrackerParams::default());
        let (c, s) = t
            .track_path(&Pose::new(0.3, 0.0, 0.0), 0.15, &line())
            .unwrap();
        assert_eq!(s, TrackStatus::Following);
        assert!(c.steering.abs() < 1e-12 && c.throttle.abs() < 1e-12);
    }

    #[test]
    fn left_waypoint_steers_left() {
        let mut t = Tracker::new(TrackerParams::default());
        let (c, _) = t
            .track_path(
                &Pose::new(0.3, 0.0, -std::f64::consts::FRAC_PI_2),
                0.0,
                &line(),
            )
            .unwrap();
        assert!(c.steering > 0.0);
    }

    #[test]
    fn empty_path_is_an_error() {
        let mut t = Tracker::new(TrackerParams::default());
        let p = PlannedPath {
            waypoints: vec![],
            goal_pose: [0.0; 3],
        };
        assert_eq!(
            t.track_path(&Pose::default(), 0.0, &p),
            Err(TrackError::EmptyPath)
        );
    }

    #[test]
    fn arrival() {
        let mut t = Tracker::new(TrackerParams::default());
        let (c, s) = t
            .track_path(&Pose::new(0.995, 0.01, 0.02), 0.0, &line())
            .unwrap();
        assert_eq!((c, s), (Command::zero(), TrackStatus::Arrived));
    }
}
