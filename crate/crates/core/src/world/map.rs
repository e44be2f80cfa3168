use serde::{Deserialize, Serialize};
use std::sync::OnceLock;

use crate::error::WorldError;
use crate::geometry::{Rect, Vec2};

pub const CELL_SIZE: f64 = 0.1;
pub const RAY_STEP: f64 = 0.05;
pub const AGENT_RADIUS: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapObject {
    pub id: usize,
    pub class: String,
    pub position: Vec2,
}

/// Occupancy grid over the map bounds. Cell `(ix, iy)` covers
/// `[min + ix*CELL_SIZE, min + (ix+1)*CELL_SIZE)` on each axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub origin: Vec2,
    pub nx: usize,
    pub ny: usize,
    pub occupied: Vec<bool>,
}

impl Grid {
    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.nx + ix
    }

    pub fn cell_of(&self, p: Vec2) -> Option<(usize, usize)> {
        let fx = ((p.x - self.origin.x) / CELL_SIZE).floor();
        let fy = ((p.y - self.origin.y) / CELL_SIZE).floor();
        if fx < 0.0 || fy < 0.0 {
            return None;
        }
        let (ix, iy) = (fx as usize, fy as usize);
        (ix < self.nx && iy < self.ny).then_some((ix, iy))
    }

    pub fn cell_center(&self, ix: usize, iy: usize) -> Vec2 {
        Vec2::new(self.origin.x + (ix as f64 + 0.5) * CELL_SIZE, self.origin.y + (iy as f64 + 0.5) * CELL_SIZE)
    }

    pub fn is_occupied(&self, ix: usize, iy: usize) -> bool {
        self.occupied[self.index(ix, iy)]
    }
}

/// Rasterizes rectangles: a cell is occupied iff its center lies inside one.
fn rasterize(bounds: &Rect, obstacles: &[Rect]) -> Grid {
    let nx = (bounds.width() / CELL_SIZE).round().max(1.0) as usize;
    let ny = (bounds.height() / CELL_SIZE).round().max(1.0) as usize;
    let mut grid = Grid { origin: bounds.min, nx, ny, occupied: vec![false; nx * ny] };
    for iy in 0..ny {
        for ix in 0..nx {
            let c = grid.cell_center(ix, iy);
            if obstacles.iter().any(|r| r.contains(c)) {
                let i = grid.index(ix, iy);
                grid.occupied[i] = true;
            }
        }
    }
    grid
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapSpec {
    pub bounds: Rect,
    pub obstacles: Vec<Rect>,
    pub objects: Vec<MapObject>,
}

/// Static 2D environment. The grid is always the rasterization of `obstacles`.
#[derive(Debug, Clone)]
pub struct WorldMap {
    bounds: Rect,
    obstacles: Vec<Rect>,
    objects: Vec<MapObject>,
    grid: Grid,
    inflated: OnceLock<Vec<bool>>,
}

impl PartialEq for WorldMap {
    fn eq(&self, other: &Self) -> bool {
        self.bounds == other.bounds && self.obstacles == other.obstacles && self.objects == other.objects
    }
}

impl Serialize for WorldMap {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_spec().serialize(s)
    }
}

impl<'de> Deserialize<'de> for WorldMap {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let spec = MapSpec::deserialize(d)?;
        WorldMap::new(spec.bounds, spec.obstacles, spec.objects).map_err(serde::de::Error::custom)
    }
}

impl WorldMap {
    pub fn new(bounds: Rect, obstacles: Vec<Rect>, objects: Vec<MapObject>) -> Result<Self, WorldError> {
        if !(bounds.width() > 0.0 && bounds.height() > 0.0) {
            return Err(WorldError::InvalidMap("bounds must have positive area".into()));
        }
        if let Some(r) = obstacles.iter().find(|r| !bounds.contains_rect(r)) {
            return Err(WorldError::InvalidMap(format!("obstacle {r:?} leaves the map bounds")));
        }
        let grid = rasterize(&bounds, &obstacles);
        let map = Self { bounds, obstacles, objects, grid, inflated: OnceLock::new() };
        if let Some(o) = map.objects.iter().find(|o| !map.is_free(o.position)) {
            return Err(WorldError::InvalidMap(format!("object {} ({}) is not in free space", o.id, o.class)));
        }
        Ok(map)
    }

    pub fn empty(bounds: Rect) -> Self {
        Self::new(bounds, Vec::new(), Vec::new()).expect("empty map is valid")
    }

    pub fn to_spec(&self) -> MapSpec {
        MapSpec { bounds: self.bounds, obstacles: self.obstacles.clone(), objects: self.objects.clone() }
    }

    pub fn bounds(&self) -> &Rect {
        &self.bounds
    }

    pub fn obstacles(&self) -> &[Rect] {
        &self.obstacles
    }

    pub fn objects(&self) -> &[MapObject] {
        &self.objects
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Cells blocked for a disc of `AGENT_RADIUS`: occupied, or with a center
    /// closer than the radius to an occupied cell center or the border.
    pub fn inflated(&self) -> &[bool] {
        self.inflated.get_or_init(|| {
            let g = &self.grid;
            let mut out = vec![false; g.nx * g.ny];
            for iy in 0..g.ny {
                for ix in 0..g.nx {
                    let c = g.cell_center(ix, iy);
                    out[g.index(ix, iy)] = g.is_occupied(ix, iy) || self.clearance(c, 0.5) < AGENT_RADIUS;
                }
            }
            out
        })
    }

    /// Inside the bounds and on an unoccupied cell.
    pub fn is_free(&self, p: Vec2) -> bool {
        match self.grid.cell_of(p) {
            Some((ix, iy)) => !self.grid.is_occupied(ix, iy),
            None => false,
        }
    }

    /// Distance from `p` to the nearest occupied cell center or the map border,
    /// searched up to `limit` meters.
    pub fn clearance(&self, p: Vec2, limit: f64) -> f64 {
        let border = (p.x - self.bounds.min.x)
            .min(self.bounds.max.x - p.x)
            .min(p.y - self.bounds.min.y)
            .min(self.bounds.max.y - p.y);
        let mut best = border.min(limit);
        let reach = (limit / CELL_SIZE).ceil() as i64 + 1;
        let Some((cx, cy)) = self.grid.cell_of(p) else { return 0.0 };
        let (cx, cy) = (cx as i64, cy as i64);
        for iy in (cy - reach).max(0)..=(cy + reach).min(self.grid.ny as i64 - 1) {
            for ix in (cx - reach).max(0)..=(cx + reach).min(self.grid.nx as i64 - 1) {
                if self.grid.is_occupied(ix as usize, iy as usize) {
                    best = best.min(p.distance(self.grid.cell_center(ix as usize, iy as usize)));
                }
            }
        }
        best
    }

    /// True iff the segment a-b crosses no occupied cell, sampled every 5 cm.
    pub fn line_of_sight(&self, a: Vec2, b: Vec2) -> bool {
        let len = a.distance(b);
        let steps = (len / RAY_STEP).ceil() as usize;
        (0..=steps).all(|k| {
            let t = if steps == 0 { 0.0 } else { k as f64 / steps as f64 };
            self.is_free(a.lerp(b, t))
        })
    }

    /// Distance along a ray until the first blocked sample, capped at `max_range`.
    pub fn ray_cast(&self, origin: Vec2, direction: Vec2, max_range: f64) -> f64 {
        let steps = (max_range / RAY_STEP).ceil() as usize;
        for k in 1..=steps {
            let r = (k as f64 * RAY_STEP).min(max_range);
            if !self.is_free(origin + direction * r) {
                return (r - RAY_STEP).max(0.0);
            }
        }
        max_range
    }
}
