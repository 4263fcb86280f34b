use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    point_in_convex, rect_rect_overlap, rect_segment_overlap, OrientedRect, Segment, Vec2,
};
use crate::num::wrap_angle;
use crate::rng::{Channel, NoiseStream};
use crate::vehicle::Pose;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("scene parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid scene `{key}`: {reason}")]
    Invalid { key: String, reason: String },
    #[error("cannot read scene {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("unknown preset scene `{0}`")]
    UnknownPreset(String),
}

impl SceneError {
    fn invalid(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Self::Invalid {
            key: key.into(),
            reason: reason.into(),
        }
    }
}

/// Box obstacle. `extents` are half-lengths along the box's own axes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Obstacle {
    pub center: [f64; 2],
    pub extents: [f64; 2],
    #[serde(default)]
    pub yaw: f64,
    /// Present in the live world but absent from the static map.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub unmapped: bool,
}

impl Obstacle {
    pub fn rect(&self) -> OrientedRect<f64> {
        OrientedRect {
            center: Vec2::new(self.center[0], self.center[1]),
            half: Vec2::new(self.extents[0], self.extents[1]),
            yaw: self.yaw,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scene {
    pub name: String,
    /// `[x_min, y_min, x_max, y_max]`, m.
    pub bounds: [f64; 4],
    /// Segments `[x1, y1, x2, y2]`, m.
    #[serde(default)]
    pub walls: Vec<[f64; 4]>,
    #[serde(default)]
    pub obstacles: Vec<Obstacle>,
    /// Closed lap polyline for lap counting.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub centerline: Option<Vec<[f64; 2]>>,
    /// Vehicle pose on reset, `[x, y, yaw]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spawn: Option<[f64; 3]>,
    /// Default parking goal, `[x, y, yaw]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub goal: Option<[f64; 3]>,
}

/// First feature touched by a footprint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "index", rename_all = "snake_case")]
pub enum Contact {
    Wall(usize),
    Obstacle(usize),
}

impl std::fmt::Display for Contact {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Contact::Wall(i) => write!(f, "walls[{i}]"),
            Contact::Obstacle(i) => write!(f, "obstacles[{i}]"),
        }
    }
}

/// Gaussian pose perturbation of scene features.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbSigmas {
    pub xy: f64,
    pub theta: f64,
}

impl Default for PerturbSigmas {
    fn default() -> Self {
        Self {
            xy: 0.01,
            theta: 0.087,
        }
    }
}

fn rotate_about(p: Vec2<f64>, c: Vec2<f64>, a: f64) -> Vec2<f64> {
    (p - c).rotate(a) + c
}

impl Scene {
    pub fn empty(name: &str, bounds: [f64; 4]) -> Self {
        Self {
            name: name.into(),
            bounds,
            walls: Vec::new(),
            obstacles: Vec::new(),
            centerline: None,
            spawn: None,
            goal: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, SceneError> {
        let scene: Scene = serde_json::from_str(text).map_err(|e| SceneError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        scene.validate()?;
        Ok(scene)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SceneError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| SceneError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene serializes")
    }

    fn inside(&self, x: f64, y: f64) -> bool {
        let [x0, y0, x1, y1] = self.bounds;
        x >= x0 && x <= x1 && y >= y0 && y <= y1
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        let [x0, y0, x1, y1] = self.bounds;
        if !(x0.is_finite()
            && y0.is_finite()
            && x1.is_finite()
            && y1.is_finite()
            && x1 > x0
            && y1 > y0)
        {
            return Err(SceneError::invalid(
                "bounds",
                "must be finite with max > min",
            ));
        }
        for (i, w) in self.walls.iter().enumerate() {
            if !(self.inside(w[0], w[1]) && self.inside(w[2], w[3])) {
                return Err(SceneError::invalid(
                    format!("walls[{i}]"),
                    "endpoint outside bounds",
                ));
            }
            if w[0] == w[2] && w[1] == w[3] {
                return Err(SceneError::invalid(format!("walls[{i}]"), "zero length"));
            }
        }
        for (i, o) in self.obstacles.iter().enumerate() {
            if !(o.extents[0] > 0.0 && o.extents[1] > 0.0) {
                return Err(SceneError::invalid(
                    format!("obstacles[{i}].extents"),
                    "must be positive",
                ));
            }
            if !o.yaw.is_finite() || o.rect().corners().iter().any(|c| !self.inside(c.x, c.y)) {
                return Err(SceneError::invalid(
                    format!("obstacles[{i}]"),
                    "outside bounds",
                ));
            }
        }
        if let Some(cl) = &self.centerline {
            if cl.len() < 3 {
                return Err(SceneError::invalid("centerline", "needs at least 3 points"));
            }
            if let Some(i) = cl.iter().position(|p| !self.inside(p[0], p[1])) {
                return Err(SceneError::invalid(
                    format!("centerline[{i}]"),
                    "outside bounds",
                ));
            }
        }
        for (key, p) in [("spawn", self.spawn), ("goal", self.goal)] {
            if let Some(p) = p {
                if !self.inside(p[0], p[1]) || !p[2].is_finite() {
                    return Err(SceneError::invalid(key, "outside bounds"));
                }
            }
        }
        Ok(())
    }

    pub fn spawn_pose(&self) -> Pose<f64> {
        match self.spawn {
            Some([x, y, yaw]) => Pose::new(x, y, yaw),
            None => {
                let [x0, y0, x1, y1] = self.bounds;
                Pose::new(0.5 * (x0 + x1), 0.5 * (y0 + y1), 0.0)
            }
        }
    }

    pub fn wall_segment(&self, i: usize) -> Segment<f64> {
        let w = self.walls[i];
        Segment::new(Vec2::new(w[0], w[1]), Vec2::new(w[2], w[3]))
    }

    fn collect_segments(&self, include_unmapped: bool) -> Vec<Segment<f64>> {
        let mut out: Vec<_> = (0..self.walls.len())
            .map(|i| self.wall_segment(i))
            .collect();
        for o in &self.obstacles {
            if include_unmapped || !o.unmapped {
                out.extend(o.rect().edges());
            }
        }
        out
    }

    /// Everything a ray can hit in the live world.
    pub fn segments(&self) -> Vec<Segment<f64>> {
        self.collect_segments(true)
    }

    /// Geometry known to the static map (unmapped obstacles excluded).
    pub fn static_segments(&self) -> Vec<Segment<f64>> {
        self.collect_segments(false)
    }

    /// Scene as the static map sees it.
    pub fn static_scene(&self) -> Scene {
        let mut s = self.clone();
        s.obstacles.retain(|o| !o.unmapped);
        s
    }

    /// First wall, then obstacle, touched by `footprint`. Touching counts.
    pub fn collide(&self, footprint: &OrientedRect<f64>) -> Option<Contact> {
        for i in 0..self.walls.len() {
            if rect_segment_overlap(footprint, &self.wall_segment(i)) {
                return Some(Contact::Wall(i));
            }
        }
        self.obstacles
            .iter()
            .position(|o| rect_rect_overlap(footprint, &o.rect()))
            .map(Contact::Obstacle)
    }

    /// Obstacle whose box contains `p`, if any.
    pub fn obstacle_at(&self, p: Vec2<f64>) -> Option<usize> {
        self.obstacles
            .iter()
            .position(|o| point_in_convex(p, &o.rect().corners()))
    }

    /// Perturbs every wall (about its midpoint) and obstacle pose by independent
    /// Gaussian draws. Points pushed outside the bounds are clamped back and a
    /// warning naming the feature is returned.
    pub fn perturb(&self, sigmas: PerturbSigmas, seed: u64) -> (Scene, Vec<String>) {
        let mut rng = NoiseStream::new(seed, Channel::ScenePerturb);
        let mut out = self.clone();
        let mut warnings = Vec::new();
        let [x0, y0, x1, y1] = self.bounds;
        let clamp = |p: Vec2<f64>| Vec2::new(p.x.clamp(x0, x1), p.y.clamp(y0, y1));
        for (i, w) in out.walls.iter_mut().enumerate() {
            let (dx, dy, da) = (
                rng.gaussian(sigmas.xy),
                rng.gaussian(sigmas.xy),
                rng.gaussian(sigmas.theta),
            );
            let a = Vec2::new(w[0], w[1]);
            let b = Vec2::new(w[2], w[3]);
            let mid = (a + b).scale(0.5);
            let shift = Vec2::new(dx, dy);
            let pa = rotate_about(a, mid, da) + shift;
            let pb = rotate_about(b, mid, da) + shift;
            let (ca, cb) = (clamp(pa), clamp(pb));
            if ca != pa || cb != pb {
                warnings.push(format!("walls[{i}] clamped to bounds"));
            }
            *w = [ca.x, ca.y, cb.x, cb.y];
        }
        for (i, o) in out.obstacles.iter_mut().enumerate() {
            let (dx, dy, da) = (
                rng.gaussian(sigmas.xy),
                rng.gaussian(sigmas.xy),
                rng.gaussian(sigmas.theta),
            );
            let orig = *o;
            o.center = [o.center[0] + dx, o.center[1] + dy];
            o.yaw = wrap_angle(o.yaw + da);
            let cs = o.rect().corners();
            let lo = |f: fn(&Vec2<f64>) -> f64| cs.iter().map(f).fold(f64::INFINITY, f64::min);
            let hi = |f: fn(&Vec2<f64>) -> f64| cs.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
            let sx = (x0 - lo(|c| c.x)).max(0.0) + (x1 - hi(|c| c.x)).min(0.0);
            let sy = (y0 - lo(|c| c.y)).max(0.0) + (y1 - hi(|c| c.y)).min(0.0);
            if sx != 0.0 || sy != 0.0 {
                o.center = [o.center[0] + sx, o.center[1] + sy];
                warnings.push(format!("obstacles[{i}] clamped to bounds"));
            }
            if o.rect().corners().iter().any(|c| !self.inside(c.x, c.y)) {
                *o = orig;
            }
        }
        (out, warnings)
    }

    /// Adds an unmapped box to the live scene.
    pub fn spawn_unmapped_obstacle(
        &self,
        center: [f64; 2],
        extents: [f64; 2],
        yaw: f64,
    ) -> Result<Scene, SceneError> {
        let mut out = self.clone();
        out.obstacles.push(Obstacle {
            center,
            extents,
            yaw,
            unmapped: true,
        });
        out.validate()?;
        Ok(out)
    }

    /// Drops every unmapped obstacle.
    pub fn remove_unmapped(&self) -> Scene {
        self.static_scene()
    }
}
