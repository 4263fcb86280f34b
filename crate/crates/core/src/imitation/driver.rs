//! Drivers for the lap course: the cloned policy, a scripted stand-in for a
//! human at the keyboard, and lap counting along the course centerline.

use serde::{Deserialize, Serialize};

use crate::imitation::features::Featurizer;
use crate::imitation::train::Policy;
use crate::num::wrap_angle;
use crate::rng::NoiseStream;
use crate::sensors::SensorFrame;
use crate::vehicle::{Command, Pose};

/// Runs a trained network on each scan and holds the last command between scans.
#[derive(Debug, Clone)]
pub struct BcDriver {
    pub policy: Policy,
    featurizer: Featurizer,
    last: Command<f64>,
    /// Replaces the network's throttle when set.
    pub fixed_throttle: Option<f64>,
}

impl BcDriver {
    pub fn new(policy: Policy, featurizer: Featurizer) -> Self {
        Self {
            policy,
            featurizer,
            last: Command::zero(),
            fixed_throttle: None,
        }
    }

    pub fn drive(&mut self, frame: &SensorFrame) -> Command<f64> {
        if let Some(f) = self.featurizer.observe(frame) {
            if let Ok(out) = self.policy.predict(&f) {
                let throttle = self.fixed_throttle.unwrap_or(out[1]);
                self.last = Command::new(throttle, out[0]).clamped();
            }
        }
        self.last
    }

    pub fn reset(&mut self) {
        self.featurizer.reset();
        self.last = Command::zero();
    }
}

/// Closed centerline with arc-length bookkeeping.
#[derive(Debug, Clone)]
pub struct Course {
    points: Vec<[f64; 2]>,
    /// `s[i]` is the arc length at `points[i]`; the last entry is the loop length.
    s: Vec<f64>,
}

impl Course {
    /// Treats `points` as a closed loop.
    pub fn new(points: &[[f64; 2]]) -> Self {
        let mut s = vec![0.0];
        let n = points.len();
        for i in 0..n {
            let (a, b) = (points[i], points[(i + 1) % n]);
            s.push(s[i] + (b[0] - a[0]).hypot(b[1] - a[1]));
        }
        Self {
            points: points.to_vec(),
            s,
        }
    }

    pub fn length(&self) -> f64 {
        *self.s.last().unwrap_or(&0.0)
    }

    /// Arc length of the closest point and the distance to it.
    pub fn project(&self, x: f64, y: f64) -> (f64, f64) {
        let n = self.points.len();
        let mut best = (0.0, f64::INFINITY);
        for i in 0..n {
            let (a, b) = (self.points[i], self.points[(i + 1) % n]);
            let (ex, ey) = (b[0] - a[0], b[1] - a[1]);
            let len2 = ex * ex + ey * ey;
            let u = if len2 > 0.0 {
                (((x - a[0]) * ex + (y - a[1]) * ey) / len2).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let d = (a[0] + u * ex - x).hypot(a[1] + u * ey - y);
            if d < best.1 {
                best = (self.s[i] + u * (self.s[i + 1] - self.s[i]), d);
            }
        }
        best
    }

    pub fn point_at(&self, s: f64) -> [f64; 2] {
        let s = s.rem_euclid(self.length());
        let i = self
            .s
            .partition_point(|&v| v <= s)
            .saturating_sub(1)
            .min(self.points.len() - 1);
        let seg = self.s[i + 1] - self.s[i];
        let u = if seg > 0.0 {
            (s - self.s[i]) / seg
        } else {
            0.0
        };
        let (a, b) = (self.points[i], self.points[(i + 1) % self.points.len()]);
        [a[0] + u * (b[0] - a[0]), a[1] + u * (b[1] - a[1])]
    }
}

/// Counts completed loops from signed progress along the course.
#[derive(Debug, Clone)]
pub struct LapCounter {
    course: Course,
    last_s: Option<f64>,
    pub progress: f64,
}

impl LapCounter {
    pub fn new(course: Course) -> Self {
        Self {
            course,
            last_s: None,
            progress: 0.0,
        }
    }

    /// Returns the number of completed laps after moving to `pose`.
    pub fn update(&mut self, pose: &Pose<f64>) -> u32 {
        let (s, _) = self.course.project(pose.x, pose.y);
        if let Some(prev) = self.last_s {
            let len = self.course.length();
            let mut ds = s - prev;
            if ds > 0.5 * len {
                ds -= len;
            } else if ds < -0.5 * len {
                ds += len;
            }
            self.progress += ds;
        }
        self.last_s = Some(s);
        self.laps()
    }

    pub fn laps(&self) -> u32 {
        (self.progress / self.course.length()).floor().max(0.0) as u32
    }

    pub fn course(&self) -> &Course {
        &self.course
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HumanParams {
    /// Pure-pursuit lookahead, m.
    pub lookahead: f64,
    pub throttle: f64,
    /// Stationary std of the steering wobble, in command units.
    pub wobble_sigma: f64,
    /// Correlation time of the wobble, s.
    pub wobble_tau: f64,
    /// Keyboard command rate, Hz.
    pub command_rate: f64,
    /// Record the command before the wobble is added.
    pub label_intent: bool,
}

impl Default for HumanParams {
    fn default() -> Self {
        Self {
            lookahead: 0.3,
            throttle: 0.5,
            wobble_sigma: 0.15,
            wobble_tau: 0.8,
            command_rate: 50.0,
            label_intent: true,
        }
    }
}

/// Pure pursuit along the centerline with an Ornstein-Uhlenbeck steering
/// wobble, issuing commands at a fixed rate like a keyboard client.
#[derive(Debug, Clone)]
pub struct HumanDriver {
    pub params: HumanParams,
    course: Course,
    wheelbase: f64,
    max_steer: f64,
    rng: NoiseStream,
    wobble: f64,
    next_t: f64,
    last: Command<f64>,
    intent: Command<f64>,
}

impl HumanDriver {
    pub fn new(
        params: HumanParams,
        course: Course,
        wheelbase: f64,
        max_steer: f64,
        rng: NoiseStream,
    ) -> Self {
        Self {
            params,
            course,
            wheelbase,
            max_steer,
            rng,
            wobble: 0.0,
            next_t: 0.0,
            last: Command::zero(),
            intent: Command::zero(),
        }
    }

    pub fn command(&mut self, pose: &Pose<f64>, t: f64) -> Command<f64> {
        if t + 1e-12 < self.next_t {
            return self.last;
        }
        let p = self.params;
        let period = 1.0 / p.command_rate;
        self.next_t = t + period;
        let decay = (-period / p.wobble_tau).exp();
        self.wobble = decay * self.wobble
            + p.wobble_sigma * (1.0 - decay * decay).sqrt() * self.rng.gaussian(1.0);
        let (s, _) = self.course.project(pose.x, pose.y);
        let target = self.course.point_at(s + p.lookahead);
        let (dx, dy) = (target[0] - pose.x, target[1] - pose.y);
        let alpha = wrap_angle(dy.atan2(dx) - pose.yaw);
        let ld = dx.hypot(dy).max(1e-3);
        let delta = (2.0 * self.wheelbase * alpha.sin() / ld).atan();
        self.intent = Command::new(p.throttle, delta / self.max_steer).clamped();
        self.last = Command::new(p.throttle, self.intent.steering + self.wobble).clamped();
        self.last
    }

    /// The command the driver meant to give at the last update.
    pub fn intent(&self) -> Command<f64> {
        self.intent
    }

    /// The command to store as the training label for the last update.
    pub fn label(&self) -> Command<f64> {
        if self.params.label_intent {
            self.intent
        } else {
            self.last
        }
    }
}
