//! Shortest paths on the agent-inflated occupancy grid.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::WorldError;
use crate::geometry::Vec2;
use crate::world::map::{WorldMap, CELL_SIZE};

/// Path cost as (straight moves, diagonal moves). Distinct counts never tie in
/// length because sqrt(2) is irrational, so optimal counts are unique.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
pub struct StepCount {
    pub straight: u32,
    pub diagonal: u32,
}

impl StepCount {
    pub fn length(&self) -> f64 {
        self.straight as f64 * CELL_SIZE + self.diagonal as f64 * CELL_SIZE * std::f64::consts::SQRT_2
    }

    fn key(&self) -> f64 {
        self.straight as f64 + self.diagonal as f64 * std::f64::consts::SQRT_2
    }
}

pub(crate) const NEIGHBORS: [(i64, i64, bool); 8] = [
    (1, 0, false),
    (-1, 0, false),
    (0, 1, false),
    (0, -1, false),
    (1, 1, true),
    (1, -1, true),
    (-1, 1, true),
    (-1, -1, true),
];

#[derive(Debug, Clone, PartialEq)]
pub struct PlannedPath {
    pub points: Vec<Vec2>,
    pub steps: StepCount,
    pub length: f64,
}

#[derive(PartialEq)]
struct Entry {
    key: f64,
    cell: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other.key.total_cmp(&self.key).then_with(|| other.cell.cmp(&self.cell))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Single-source Dijkstra over free inflated cells (8-connected).
/// Returns per-cell step counts and predecessors.
fn dijkstra(map: &WorldMap, source: usize) -> (Vec<Option<StepCount>>, Vec<usize>) {
    let g = map.grid();
    let blocked = map.inflated();
    let n = g.nx * g.ny;
    let mut best: Vec<Option<StepCount>> = vec![None; n];
    let mut prev = vec![usize::MAX; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    best[source] = Some(StepCount::default());
    heap.push(Entry { key: 0.0, cell: source });
    while let Some(Entry { cell, .. }) = heap.pop() {
        if done[cell] {
            continue;
        }
        done[cell] = true;
        let cur = best[cell].expect("queued cells have a cost");
        let (ix, iy) = ((cell % g.nx) as i64, (cell / g.nx) as i64);
        for &(dx, dy, diag) in &NEIGHBORS {
            let (jx, jy) = (ix + dx, iy + dy);
            if jx < 0 || jy < 0 || jx >= g.nx as i64 || jy >= g.ny as i64 {
                continue;
            }
            let j = g.index(jx as usize, jy as usize);
            if blocked[j] || done[j] {
                continue;
            }
            let next = if diag {
                StepCount { diagonal: cur.diagonal + 1, ..cur }
            } else {
                StepCount { straight: cur.straight + 1, ..cur }
            };
            if best[j].map_or(true, |b| next.key() < b.key()) {
                best[j] = Some(next);
                prev[j] = cell;
                heap.push(Entry { key: next.key(), cell: j });
            }
        }
    }
    (best, prev)
}

fn free_cell(map: &WorldMap, p: Vec2) -> Option<usize> {
    let g = map.grid();
    let (ix, iy) = g.cell_of(p)?;
    let i = g.index(ix, iy);
    (!map.inflated()[i]).then_some(i)
}

pub fn shortest_path(map: &WorldMap, start: Vec2, goal: Vec2) -> Result<PlannedPath, WorldError> {
    let s = free_cell(map, start).ok_or(WorldError::NoPath)?;
    let t = free_cell(map, goal).ok_or(WorldError::NoPath)?;
    let (best, prev) = dijkstra(map, s);
    let steps = best[t].ok_or(WorldError::NoPath)?;
    let g = map.grid();
    let mut cells = vec![t];
    while *cells.last().unwrap() != s {
        cells.push(prev[*cells.last().unwrap()]);
    }
    cells.reverse();
    let points = cells.iter().map(|&c| g.cell_center(c % g.nx, c / g.nx)).collect();
    Ok(PlannedPath { points, steps, length: steps.length() })
}

/// Geodesic distances from a goal to every grid cell, used by the expert.
#[derive(Debug, Clone)]
pub struct DistanceField {
    nx: usize,
    origin: Vec2,
    ny: usize,
    lengths: Vec<f64>,
}

impl DistanceField {
    pub fn from_goal(map: &WorldMap, goal: Vec2) -> Result<Self, WorldError> {
        let t = free_cell(map, goal).ok_or(WorldError::NoPath)?;
        let (best, _) = dijkstra(map, t);
        let g = map.grid();
        Ok(Self {
            nx: g.nx,
            ny: g.ny,
            origin: g.origin,
            lengths: best.iter().map(|b| b.map_or(f64::INFINITY, |s| s.length())).collect(),
        })
    }

    /// Geodesic distance from `p`'s cell to the goal; infinite when unreachable.
    pub fn distance(&self, p: Vec2) -> f64 {
        let fx = ((p.x - self.origin.x) / CELL_SIZE).floor();
        let fy = ((p.y - self.origin.y) / CELL_SIZE).floor();
        if fx < 0.0 || fy < 0.0 || fx as usize >= self.nx || fy as usize >= self.ny {
            return f64::INFINITY;
        }
        self.lengths[fy as usize * self.nx + fx as usize]
    }
}
