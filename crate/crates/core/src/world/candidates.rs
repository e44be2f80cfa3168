use std::f64::consts::PI;

use crate::geometry::{Pose2, Vec2};
use crate::world::map::WorldMap;

pub const NUM_SECTORS: usize = 12;
pub const SECTOR_WIDTH: f64 = PI / 6.0;
pub const CANDIDATE_RADII: [f64; 4] = [0.75, 1.5, 2.25, 3.0];
pub const CANDIDATE_CLEARANCE: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    /// Sector index; bearing is `sector * 30deg` counter-clockwise from the heading.
    pub sector: usize,
    pub radius: f64,
    pub position: Vec2,
}

/// Counter-clockwise offset of sector `k` from the agent heading.
pub fn sector_offset(k: usize) -> f64 {
    k as f64 * SECTOR_WIDTH
}

fn clear(map: &WorldMap, origin: Vec2, p: Vec2) -> bool {
    map.is_free(p) && map.clearance(p, 1.0) >= CANDIDATE_CLEARANCE - 1e-9 && map.line_of_sight(origin, p)
}

/// For each of the 12 bearings, the farthest clear ring position.
pub fn waypoint_candidates(map: &WorldMap, pose: &Pose2) -> Vec<Candidate> {
    let origin = pose.position();
    (0..NUM_SECTORS)
        .filter_map(|k| {
            let dir = Vec2::from_angle(pose.heading + sector_offset(k));
            CANDIDATE_RADII.iter().rev().find_map(|&r| {
                let p = origin + dir * r;
                clear(map, origin, p).then_some(Candidate { sector: k, radius: r, position: p })
            })
        })
        .collect()
}
