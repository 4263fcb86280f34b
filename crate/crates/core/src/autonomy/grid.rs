use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::sensors::LidarScan;
use crate::vehicle::Pose;

pub const LOG_ODDS_CLAMP: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InverseSensorModel {
    pub l_free: f64,
    pub l_occ: f64,
}

impl Default for InverseSensorModel {
    fn default() -> Self {
        Self {
            l_free: 0.4,
            l_occ: 0.85,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GridError {
    #[error("pose ({x:.3}, {y:.3}) lies outside the grid")]
    PoseOutside { x: f64, y: f64 },
}

pub fn probability(log_odds: f64) -> f64 {
    1.0 / (1.0 + (-log_odds).exp())
}

pub fn log_odds(p: f64) -> f64 {
    p.ln() - (-p).ln_1p()
}

/// Log-odds occupancy grid. Cell `(i, j)` covers
/// `[ox + i*res, ox + (i+1)*res) x [oy + j*res, oy + (j+1)*res)`; storage is row-major in `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyGrid {
    pub resolution: f64,
    pub origin: [f64; 2],
    pub width: usize,
    pub height: usize,
    pub cells: Vec<f64>,
}

impl OccupancyGrid {
    pub fn new(resolution: f64, origin: [f64; 2], width: usize, height: usize) -> Self {
        Self {
            resolution,
            origin,
            width,
            height,
            cells: vec![0.0; width * height],
        }
    }

    /// Grid covering `bounds = [x0, y0, x1, y1]`.
    pub fn covering(bounds: [f64; 4], resolution: f64) -> Self {
        let w = ((bounds[2] - bounds[0]) / resolution - 1e-9).ceil() as usize;
        let h = ((bounds[3] - bounds[1]) / resolution - 1e-9).ceil() as usize;
        Self::new(resolution, [bounds[0], bounds[1]], w.max(1), h.max(1))
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.width + i
    }

    pub fn contains(&self, i: i64, j: i64) -> bool {
        i >= 0 && j >= 0 && (i as usize) < self.width && (j as usize) < self.height
    }

    /// Cell containing a world point, possibly outside the grid.
    pub fn cell_of(&self, x: f64, y: f64) -> (i64, i64) {
        (
            ((x - self.origin[0]) / self.resolution).floor() as i64,
            ((y - self.origin[1]) / self.resolution).floor() as i64,
        )
    }

    pub fn world_to_cell(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let (i, j) = self.cell_of(x, y);
        self.contains(i, j).then_some((i as usize, j as usize))
    }

    pub fn cell_center(&self, i: usize, j: usize) -> (f64, f64) {
        (
            self.origin[0] + (i as f64 + 0.5) * self.resolution,
            self.origin[1] + (j as f64 + 0.5) * self.resolution,
        )
    }

    pub fn log_odds_at(&self, i: usize, j: usize) -> f64 {
        self.cells[self.index(i, j)]
    }

    pub fn probability_at(&self, i: usize, j: usize) -> f64 {
        probability(self.log_odds_at(i, j))
    }

    fn add(&mut self, i: i64, j: i64, delta: f64) {
        if self.contains(i, j) {
            let k = self.index(i as usize, j as usize);
            self.cells[k] = (self.cells[k] + delta).clamp(-LOG_ODDS_CLAMP, LOG_ODDS_CLAMP);
        }
    }

    /// Inserts one scan taken from `pose`.
    ///
    /// Every cell on the integer line from the sensor cell to the endpoint cell,
    /// endpoint excluded, gets `-l_free`; the endpoint gets `+l_occ`.
    /// No-return beams carry no endpoint and are skipped.
    pub fn update(
        &mut self,
        pose: &Pose<f64>,
        scan: &LidarScan,
        model: &InverseSensorModel,
    ) -> Result<(), GridError> {
        let start = self
            .world_to_cell(pose.x, pose.y)
            .ok_or(GridError::PoseOutside {
                x: pose.x,
                y: pose.y,
            })?;
        let start = (start.0 as i64, start.1 as i64);
        for (k, r) in scan.ranges.iter().enumerate() {
            if !r.is_finite() {
                continue;
            }
            let a = pose.yaw + scan.bearing(k);
            let end = self.cell_of(pose.x + r * a.cos(), pose.y + r * a.sin());
            for (i, j) in bresenham(start, end) {
                if (i, j) == end {
                    break;
                }
                if !self.contains(i, j) {
                    break;
                }
                self.add(i, j, -model.l_free);
            }
            self.add(end.0, end.1, model.l_occ);
        }
        Ok(())
    }

    /// Cells with occupancy probability above `threshold`.
    pub fn occupied_mask(&self, threshold: f64) -> Vec<bool> {
        let l = log_odds(threshold);
        self.cells.iter().map(|&c| c > l).collect()
    }

    /// Occupied cells dilated by a disc of `radius`; unknown cells count as free.
    pub fn inflated(&self, threshold: f64, radius: f64) -> Vec<bool> {
        inflate(
            &self.occupied_mask(threshold),
            self.width,
            self.height,
            radius / self.resolution,
        )
    }

    /// Portable graymap: occupied black, free white, unknown gray; top row is max `y`.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        for j in (0..self.height).rev() {
            for i in 0..self.width {
                let p = self.probability_at(i, j);
                out.push(if p > 0.65 {
                    0
                } else if p < 0.35 {
                    254
                } else {
                    205
                });
            }
        }
        out
    }

    /// Writes `<stem>.pgm` and `<stem>.json` (resolution, origin, size).
    pub fn export(&self, stem: &Path) -> std::io::Result<()> {
        std::fs::File::create(stem.with_extension("pgm"))?.write_all(&self.to_pgm())?;
        let side = serde_json::json!({
            "image": stem.with_extension("pgm").file_name().map(|n| n.to_string_lossy().into_owned()),
            "resolution": self.resolution,
            "origin": self.origin,
            "width": self.width,
            "height": self.height,
            "occupied_thresh": 0.65,
            "free_thresh": 0.35,
        });
        std::fs::write(
            stem.with_extension("json"),
            serde_json::to_vec_pretty(&side)?,
        )
    }
}

/// Cells on the integer line between two cells, both ends included.
pub fn bresenham(a: (i64, i64), b: (i64, i64)) -> impl Iterator<Item = (i64, i64)> {
    let dx = (b.0 - a.0).abs();
    let dy = -(b.1 - a.1).abs();
    let sx = if a.0 < b.0 { 1 } else { -1 };
    let sy = if a.1 < b.1 { 1 } else { -1 };
    let (mut x, mut y, mut err) = (a.0, a.1, dx + dy);
    let mut done = false;
    std::iter::from_fn(move || {
        if done {
            return None;
        }
        let cur = (x, y);
        if cur == b {
            done = true;
        } else {
            let e2 = 2 * err;
            if e2 >= dy {
                err += dy;
                x += sx;
            }
            if e2 <= dx {
                err += dx;
                y += sy;
            }
        }
        Some(cur)
    })
}

/// Dilates `mask` by a disc of `radius_cells` (cell-center distance).
pub fn inflate(mask: &[bool], width: usize, height: usize, radius_cells: f64) -> Vec<bool> {
    let r = radius_cells.ceil() as i64;
    let r2 = radius_cells * radius_cells;
    let offsets: Vec<(i64, i64)> = (-r..=r)
        .flat_map(|dj| (-r..=r).map(move |di| (di, dj)))
        .filter(|&(di, dj)| ((di * di + dj * dj) as f64) <= r2)
        .collect();
    let mut out = vec![false; mask.len()];
    for j in 0..height as i64 {
        for i in 0..width as i64 {
            if !mask[(j as usize) * width + i as usize] {
                continue;
            }
            for &(di, dj) in &offsets {
                let (a, b) = (i + di, j + dj);
                if a >= 0 && b >= 0 && (a as usize) < width && (b as usize) < height {
                    out[(b as usize) * width + a as usize] = true;
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn probability_round_trip() {
        for l in [-9.5, -3.0, -0.4, 0.0, 0.85, 4.2, 9.9] {
            assert!((log_odds(probability(l)) - l).abs() < 1e-10);
        }
    }

    #[test]
    fn bresenham_endpoints_and_adjacency() {
        let cells: Vec<_> = bresenham((0, 0), (7, -3)).collect();
        assert_eq!(cells.first(), Some(&(0, 0)));
        assert_eq!(cells.last(), Some(&(7, -3)));
        for w in cells.windows(2) {
            assert!((w[0].0 - w[1].0).abs() <= 1 && (w[0].1 - w[1].1).abs() <= 1);
        }
        assert_eq!(bresenham((2, 2), (2, 2)).count(), 1);
    }

    #[test]
    fn inflation_radius() {
        let mut m = vec![false; 11 * 11];
        m[5 * 11 + 5] = true;
        let inf = inflate(&m, 11, 11, 2.0);
        assert_eq!(inf.iter().filter(|&&b| b).count(), 13);
        assert!(inf[5 * 11 + 7] && !inf[7 * 11 + 7]);
    }
}
