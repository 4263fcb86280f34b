use serde::{Deserialize, Serialize};

use crate::autonomy::grid::{log_odds, OccupancyGrid};
use crate::autonomy::odometry::OdomDelta;
use crate::num::wrap_angle;
use crate::rng::NoiseStream;
use crate::sensors::LidarScan;
use crate::vehicle::Pose;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MclParams {
    pub min_particles: usize,
    pub max_particles: usize,
    pub sigma_hit: f64,
    /// Uniform floor of the per-beam likelihood.
    pub floor: f64,
    /// Use every `beam_stride`-th beam.
    pub beam_stride: usize,
    /// Translation noise per meter travelled.
    pub alpha_trans: f64,
    /// Rotation noise per radian turned.
    pub alpha_rot: f64,
    /// Per-update jitter, m and rad.
    pub jitter_xy: f64,
    pub jitter_yaw: f64,
    /// Position spread (m) at which the particle count reaches its maximum.
    pub spread_ref: f64,
    pub occupied_threshold: f64,
    /// Spread (m) below which the scan likelihood is used at full strength.
    /// Wider clouds see it raised to `temper_spread / spread`.
    pub temper_spread: f64,
    /// Extra jitter as a fraction of the current spread.
    pub roughening: f64,
}

impl Default for MclParams {
    fn default() -> Self {
        Self {
            min_particles: 100,
            max_particles: 2000,
            sigma_hit: 0.05,
            floor: 0.05,
            beam_stride: 10,
            alpha_trans: 0.1,
            alpha_rot: 0.1,
            jitter_xy: 0.004,
            jitter_yaw: 0.008,
            spread_ref: 0.5,
            occupied_threshold: 0.65,
            temper_spread: 0.05,
            roughening: 0.3,
        }
    }
}

/// Distance from each cell center to the nearest occupied cell center, m.
#[derive(Debug, Clone)]
pub struct LikelihoodField {
    grid: OccupancyGrid,
    distance: Vec<f64>,
}

/// One-dimensional squared Euclidean distance transform (lower envelope of parabolas).
fn edt_1d(f: &[f64], out: &mut [f64]) {
    let n = f.len();
    let mut v = vec![0usize; n];
    let mut z = vec![0.0f64; n + 1];
    let mut k = 0usize;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    let mut first = None;
    for q in 0..n {
        if f[q].is_infinite() {
            continue;
        }
        if first.is_none() {
            first = Some(q);
            v[0] = q;
            continue;
        }
        loop {
            let p = v[k];
            let s =
                ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64));
            if s <= z[k] && k > 0 {
                k -= 1;
            } else {
                k += 1;
                v[k] = q;
                z[k] = s;
                z[k + 1] = f64::INFINITY;
                break;
            }
        }
    }
    if first.is_none() {
        out.iter_mut().for_each(|o| *o = f64::INFINITY);
        return;
    }
    k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let d = q as f64 - v[k] as f64;
        *o = d * d + f[v[k]];
    }
}

/// Exact squared distance transform of a binary mask, in cells^2.
pub fn squared_distance_transform(mask: &[bool], width: usize, height: usize) -> Vec<f64> {
    let mut d: Vec<f64> = mask
        .iter()
        .map(|&m| if m { 0.0 } else { f64::INFINITY })
        .collect();
    let mut col = vec![0.0; height];
    let mut out = vec![0.0; height.max(width)];
    for i in 0..width {
        for j in 0..height {
            col[j] = d[j * width + i];
        }
        edt_1d(&col, &mut out[..height]);
        for j in 0..height {
            d[j * width + i] = out[j];
        }
    }
    let mut row = vec![0.0; width];
    for j in 0..height {
        row.copy_from_slice(&d[j * width..(j + 1) * width]);
        edt_1d(&row, &mut out[..width]);
        d[j * width..(j + 1) * width].copy_from_slice(&out[..width]);
    }
    d
}

impl LikelihoodField {
    pub fn new(grid: &OccupancyGrid, threshold: f64) -> Self {
        let mask = grid.occupied_mask(threshold);
        let sq = squared_distance_transform(&mask, grid.width, grid.height);
        Self {
            grid: grid.clone(),
            distance: sq.iter().map(|d| d.sqrt() * grid.resolution).collect(),
        }
    }

    /// Distance to the nearest occupied cell, `None` outside the grid.
    pub fn distance_at(&self, x: f64, y: f64) -> Option<f64> {
        self.grid
            .world_to_cell(x, y)
            .map(|(i, j)| self.distance[self.grid.index(i, j)])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Particle {
    pub pose: Pose<f64>,
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseEstimate {
    pub pose: Pose<f64>,
    /// Weighted RMS position spread, m.
    pub std_xy: f64,
    pub std_yaw: f64,
    pub count: usize,
}

/// Adaptive Monte Carlo localization against a fixed map.
#[derive(Debug, Clone)]
pub struct Mcl {
    pub params: MclParams,
    field: LikelihoodField,
    free_cells: Vec<(f64, f64)>,
    resolution: f64,
    pub particles: Vec<Particle>,
    rng: NoiseStream,
    pub recoveries: u32,
    spread: (f64, f64),
}

impl Mcl {
    pub fn new(map: &OccupancyGrid, params: MclParams, rng: NoiseStream) -> Self {
        let field = LikelihoodField::new(map, params.occupied_threshold);
        let free_level = log_odds(0.35);
        let mut free_cells = Vec::new();
        for j in 0..map.height {
            for i in 0..map.width {
                if map.log_odds_at(i, j) < free_level {
                    free_cells.push(map.cell_center(i, j));
                }
            }
        }
        if free_cells.is_empty() {
            for j in 0..map.height {
                for i in 0..map.width {
                    free_cells.push(map.cell_center(i, j));
                }
            }
        }
        Self {
            params,
            field,
            free_cells,
            resolution: map.resolution,
            particles: Vec::new(),
            rng,
            recoveries: 0,
            spread: (0.0, 0.0),
        }
    }

    pub fn init_gaussian(&mut self, pose: Pose<f64>, sigma_xy: f64, sigma_yaw: f64, count: usize) {
        let n = count.clamp(self.params.min_particles, self.params.max_particles);
        let w = 1.0 / n as f64;
        self.particles = (0..n)
            .map(|_| {
                let x = pose.x + self.rng.gaussian(sigma_xy);
                let y = pose.y + self.rng.gaussian(sigma_xy);
                let yaw = wrap_angle(pose.yaw + self.rng.gaussian(sigma_yaw));
                Particle {
                    pose: Pose::new(x, y, yaw),
                    weight: w,
                }
            })
            .collect();
        let e = self.estimate();
        self.spread = (e.std_xy, e.std_yaw);
    }

    /// Uniform over observed free space, uniform heading.
    pub fn init_uniform(&mut self, count: usize) {
        let n = count.clamp(self.params.min_particles, self.params.max_particles);
        let w = 1.0 / n as f64;
        let half = 0.5 * self.resolution;
        self.particles = (0..n)
            .map(|_| {
                let (cx, cy) = self.free_cells[self.rng.below(self.free_cells.len())];
                let x = cx + self.rng.uniform(-half, half);
                let y = cy + self.rng.uniform(-half, half);
                let yaw = self
                    .rng
                    .uniform(-std::f64::consts::PI, std::f64::consts::PI);
                Particle {
                    pose: Pose::new(x, y, yaw),
                    weight: w,
                }
            })
            .collect();
        let e = self.estimate();
        self.spread = (e.std_xy, e.std_yaw);
    }

    fn motion_update(&mut self, odom: &OdomDelta) {
        let p = self.params;
        let d = odom.distance();
        let (sp_xy, sp_yaw) = self.spread;
        let s_xy = p.alpha_trans * d + p.jitter_xy.max(p.roughening * sp_xy);
        let s_yaw = p.alpha_rot * odom.dyaw.abs() + p.jitter_yaw.max(p.roughening * sp_yaw);
        for k in 0..self.particles.len() {
            let dx = odom.dx + self.rng.gaussian(s_xy);
            let dy = odom.dy + self.rng.gaussian(s_xy);
            let dyaw = odom.dyaw + self.rng.gaussian(s_yaw);
            let pose = &mut self.particles[k].pose;
            let (s, c) = pose.yaw.sin_cos();
            pose.x += c * dx - s * dy;
            pose.y += s * dx + c * dy;
            pose.yaw = wrap_angle(pose.yaw + dyaw);
        }
    }

    /// Sum of per-beam log likelihoods of `scan` seen from `pose`.
    pub fn log_likelihood(&self, pose: &Pose<f64>, scan: &LidarScan) -> f64 {
        let p = &self.params;
        let inv = 1.0 / (2.0 * p.sigma_hit * p.sigma_hit);
        let mut total = 0.0;
        for k in (0..scan.ranges.len()).step_by(p.beam_stride.max(1)) {
            let r = scan.ranges[k];
            if !r.is_finite() {
                continue;
            }
            let a = pose.yaw + scan.bearing(k);
            let hit = match self
                .field
                .distance_at(pose.x + r * a.cos(), pose.y + r * a.sin())
            {
                Some(d) => (-d * d * inv).exp(),
                None => 0.0,
            };
            total += ((1.0 - p.floor) * hit + p.floor).ln();
        }
        total
    }

    fn measurement_update(&mut self, scan: &LidarScan) -> bool {
        let beta = if self.params.temper_spread > 0.0 {
            (self.params.temper_spread / self.spread.0).min(1.0)
        } else {
            1.0
        };
        let logs: Vec<f64> = self
            .particles
            .iter()
            .map(|q| q.weight.ln() + beta * self.log_likelihood(&q.pose, scan))
            .collect();
        let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return false;
        }
        let mut sum = 0.0;
        for (q, l) in self.particles.iter_mut().zip(&logs) {
            q.weight = (l - max).exp();
            sum += q.weight;
        }
        if !(sum > 0.0 && sum.is_finite()) {
            return false;
        }
        for q in &mut self.particles {
            q.weight /= sum;
        }
        true
    }

    /// Effective sample size `1 / sum w^2`.
    pub fn effective_sample_size(&self) -> f64 {
        1.0 / self
            .particles
            .iter()
            .map(|q| q.weight * q.weight)
            .sum::<f64>()
    }

    fn target_count(&self, spread: f64) -> usize {
        let p = &self.params;
        let f = (spread / p.spread_ref).clamp(0.0, 1.0);
        let n = p.min_particles as f64 + f * (p.max_particles - p.min_particles) as f64;
        (n.round() as usize).clamp(p.min_particles, p.max_particles)
    }

    /// Low-variance resampling to `n` particles with uniform weights.
    fn resample(&mut self, n: usize) {
        let step = 1.0 / n as f64;
        let mut u = self.rng.uniform(0.0, step);
        let mut c = self.particles[0].weight;
        let mut i = 0;
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            while u > c && i + 1 < self.particles.len() {
                i += 1;
                c += self.particles[i].weight;
            }
            out.push(Particle {
                pose: self.particles[i].pose,
                weight: step,
            });
            u += step;
        }
        self.particles = out;
    }

    /// One filter cycle: motion, measurement, normalization, resampling and
    /// resizing. Resampling happens when the effective sample size drops below
    /// half the count or when the spread-driven target count differs from the
    /// current count by more than 20%.
    pub fn update(&mut self, odom: &OdomDelta, scan: &LidarScan) -> PoseEstimate {
        if self.particles.is_empty() {
            self.init_uniform(self.params.max_particles);
        }
        self.motion_update(odom);
        if !self.measurement_update(scan) {
            self.recoveries += 1;
            self.init_uniform(self.params.max_particles);
            return self.estimate();
        }
        let est = self.estimate();
        self.spread = (est.std_xy, est.std_yaw);
        let n = self.particles.len();
        let target = self.target_count(est.std_xy);
        let resize = (target as f64 - n as f64).abs() > 0.2 * n as f64;
        if self.effective_sample_size() < 0.5 * n as f64 || resize {
            self.resample(target);
        }
        est
    }

    /// Weighted mean position, circular mean heading.
    pub fn estimate(&self) -> PoseEstimate {
        let (mut x, mut y, mut s, mut c, mut wsum) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for q in &self.particles {
            x += q.weight * q.pose.x;
            y += q.weight * q.pose.y;
            s += q.weight * q.pose.yaw.sin();
            c += q.weight * q.pose.yaw.cos();
            wsum += q.weight;
        }
        x /= wsum;
        y /= wsum;
        let yaw = s.atan2(c);
        let mut var = 0.0;
        let mut var_yaw = 0.0;
        for q in &self.particles {
            var += q.weight * ((q.pose.x - x).powi(2) + (q.pose.y - y).powi(2));
            var_yaw += q.weight * wrap_angle(q.pose.yaw - yaw).powi(2);
        }
        PoseEstimate {
            pose: Pose::new(x, y, yaw),
            std_xy: (var / wsum).sqrt(),
            std_yaw: (var_yaw / wsum).sqrt(),
            count: self.particles.len(),
        }
    }
}
