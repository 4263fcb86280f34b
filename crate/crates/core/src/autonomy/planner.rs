use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::autonomy::grid::OccupancyGrid;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PlanError {
    #[error("start cell {0:?} is blocked or outside the grid")]
    InvalidStart((usize, usize)),
    #[error("goal cell {0:?} is blocked or outside the grid")]
    InvalidGoal((usize, usize)),
    #[error("goal unreachable")]
    Unreachable,
}

/// Cost of a path with `straight` unit moves and `diagonal` sqrt(2) moves, in cells.
///
/// Keeping the counts makes path costs exactly comparable across search orders.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StepCount {
    pub straight: u32,
    pub diagonal: u32,
}

impl StepCount {
    pub fn value(&self) -> f64 {
        self.straight as f64 + self.diagonal as f64 * std::f64::consts::SQRT_2
    }
}

/// Binary occupancy view used for search: `blocked[j * width + i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostGrid {
    pub width: usize,
    pub height: usize,
    pub blocked: Vec<bool>,
}

impl CostGrid {
    pub fn new(width: usize, height: usize, blocked: Vec<bool>) -> Self {
        assert_eq!(blocked.len(), width * height);
        Self {
            width,
            height,
            blocked,
        }
    }

    pub fn is_free(&self, i: usize, j: usize) -> bool {
        i < self.width && j < self.height && !self.blocked[j * self.width + i]
    }

    /// Eight neighbors with their move kind; diagonal moves may not cut a blocked corner.
    pub fn neighbors(&self, i: usize, j: usize) -> impl Iterator<Item = (usize, usize, bool)> + '_ {
        const D: [(i64, i64); 8] = [
            (1, 0),
            (-1, 0),
            (0, 1),
            (0, -1),
            (1, 1),
            (1, -1),
            (-1, 1),
            (-1, -1),
        ];
        D.iter().filter_map(move |&(di, dj)| {
            let (a, b) = (i as i64 + di, j as i64 + dj);
            if a < 0 || b < 0 {
                return None;
            }
            let (a, b) = (a as usize, b as usize);
            if !self.is_free(a, b) {
                return None;
            }
            let diagonal = di != 0 && dj != 0;
            if diagonal && !(self.is_free(a, j) && self.is_free(i, b)) {
                return None;
            }
            Some((a, b, diagonal))
        })
    }

    /// Nearest free cell to `(i, j)` by breadth-first search, within `max_rings` rings.
    pub fn nearest_free(&self, i: usize, j: usize, max_rings: usize) -> Option<(usize, usize)> {
        for r in 0..=max_rings as i64 {
            let mut best: Option<((usize, usize), i64)> = None;
            for dj in -r..=r {
                for di in -r..=r {
                    if di.abs().max(dj.abs()) != r {
                        continue;
                    }
                    let (a, b) = (i as i64 + di, j as i64 + dj);
                    if a < 0 || b < 0 || !self.is_free(a as usize, b as usize) {
                        continue;
                    }
                    let d2 = di * di + dj * dj;
                    if best.is_none_or(|(_, bd)| d2 < bd) {
                        best = Some(((a as usize, b as usize), d2));
                    }
                }
            }
            if let Some((c, _)) = best {
                return Some(c);
            }
        }
        None
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridPath {
    pub cells: Vec<(usize, usize)>,
    pub steps: StepCount,
    /// Nodes popped for expansion.
    pub expanded: usize,
}

impl GridPath {
    /// Path length in cells.
    pub fn cost(&self) -> f64 {
        self.steps.value()
    }
}

#[derive(Clone, Copy, PartialEq)]
struct Open {
    f: f64,
    g: f64,
    node: usize,
}

impl Eq for Open {}

impl Ord for Open {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on f, then prefer larger g, then lower index for determinism
        other
            .f
            .total_cmp(&self.f)
            .then_with(|| self.g.total_cmp(&other.g))
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Open {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// 8-connected A* on `grid`. `heuristic_weight` scales the Euclidean heuristic
/// (1 for A*, 0 for uniform-cost search).
pub fn astar_cells(
    grid: &CostGrid,
    start: (usize, usize),
    goal: (usize, usize),
    heuristic_weight: f64,
) -> Result<GridPath, PlanError> {
    if !grid.is_free(start.0, start.1) {
        return Err(PlanError::InvalidStart(start));
    }
    if !grid.is_free(goal.0, goal.1) {
        return Err(PlanError::InvalidGoal(goal));
    }
    let n = grid.width * grid.height;
    let idx = |i: usize, j: usize| j * grid.width + i;
    let h = |i: usize, j: usize| {
        let dx = i as f64 - goal.0 as f64;
        let dy = j as f64 - goal.1 as f64;
        heuristic_weight * (dx * dx + dy * dy).sqrt()
    };
    let mut steps = vec![StepCount::default(); n];
    let mut known = vec![false; n];
    let mut parent = vec![usize::MAX; n];
    let mut closed = vec![false; n];
    let mut heap = BinaryHeap::new();
    let s = idx(start.0, start.1);
    known[s] = true;
    heap.push(Open {
        f: h(start.0, start.1),
        g: 0.0,
        node: s,
    });
    let mut expanded = 0;
    while let Some(Open { g, node, .. }) = heap.pop() {
        if closed[node] || g > steps[node].value() {
            continue;
        }
        closed[node] = true;
        expanded += 1;
        let (i, j) = (node % grid.width, node / grid.width);
        if (i, j) == goal {
            let mut cells = vec![(i, j)];
            let mut k = node;
            while parent[k] != usize::MAX {
                k = parent[k];
                cells.push((k % grid.width, k / grid.width));
            }
            cells.reverse();
            return Ok(GridPath {
                cells,
                steps: steps[node],
                expanded,
            });
        }
        for (a, b, diagonal) in grid.neighbors(i, j) {
            let m = idx(a, b);
            let mut c = steps[node];
            if diagonal {
                c.diagonal += 1;
            } else {
                c.straight += 1;
            }
            let cv = c.value();
            if !known[m] || cv < steps[m].value() {
                known[m] = true;
                steps[m] = c;
                parent[m] = node;
                // a cheaper route reopens a closed node
                closed[m] = false;
                heap.push(Open {
                    f: cv + h(a, b),
                    g: cv,
                    node: m,
                });
            }
        }
    }
    Err(PlanError::Unreachable)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedPath {
    pub waypoints: Vec<[f64; 2]>,
    /// `[x, y, yaw]`
    pub goal_pose: [f64; 3],
}

impl PlannedPath {
    pub fn length(&self) -> f64 {
        self.waypoints
            .windows(2)
            .map(|w| ((w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2)).sqrt())
            .sum()
    }

    /// Point at arc length `s` from the start (clamped to the ends).
    pub fn point_at(&self, s: f64) -> [f64; 2] {
        let mut left = s.max(0.0);
        for w in self.waypoints.windows(2) {
            let d = ((w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2)).sqrt();
            if left <= d && d > 0.0 {
                let t = left / d;
                return [
                    w[0][0] + t * (w[1][0] - w[0][0]),
                    w[0][1] + t * (w[1][1] - w[0][1]),
                ];
            }
            left -= d;
        }
        *self.waypoints.last().expect("non-empty path")
    }
}

/// Plans between world points on a blocked-cell view of `grid` and returns
/// cell-center waypoints with the exact start and goal points at the ends.
pub fn astar_plan(
    grid: &OccupancyGrid,
    blocked: &[bool],
    start: [f64; 2],
    goal: [f64; 3],
) -> Result<PlannedPath, PlanError> {
    let cg = CostGrid::new(grid.width, grid.height, blocked.to_vec());
    let s = grid
        .world_to_cell(start[0], start[1])
        .ok_or(PlanError::InvalidStart((usize::MAX, usize::MAX)))?;
    let g = grid
        .world_to_cell(goal[0], goal[1])
        .ok_or(PlanError::InvalidGoal((usize::MAX, usize::MAX)))?;
    let path = astar_cells(&cg, s, g, 1.0)?;
    let mut waypoints: Vec<[f64; 2]> = path
        .cells
        .iter()
        .map(|&(i, j)| {
            let (x, y) = grid.cell_center(i, j);
            [x, y]
        })
        .collect();
    waypoints[0] = start;
    let last = waypoints.len() - 1;
    waypoints[last] = [goal[0], goal[1]];
    Ok(PlannedPath {
        waypoints,
        goal_pose: goal,
    })
}
