//! Scripted pedestrians and their animated 17-joint skeletons.

use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};

use crate::error::WorldError;
use crate::geometry::{wrap_angle, Vec2};
use crate::world::map::WorldMap;

pub const STRIDE_LENGTH: f64 = 0.7;
pub const MAX_SPEED: f64 = 2.0;
pub const GROUP_SPACING: f64 = TAU / 3.0;
pub const NUM_KEYPOINTS: usize = 17;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", deny_unknown_fields)]
pub enum ScriptKind {
    Stand { position: Vec2, heading: f64 },
    Pace { a: Vec2, b: Vec2, speed: f64 },
    WalkPath { points: Vec<Vec2>, speed: f64, looped: bool },
    GroupDiscuss { center: Vec2, radius: f64, member: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PedestrianScript {
    pub kind: ScriptKind,
    pub activity_label: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PedestrianState {
    pub position: Vec2,
    pub heading: f64,
    pub gait_phase: f64,
}

impl PedestrianScript {
    pub fn speed(&self) -> Option<f64> {
        match &self.kind {
            ScriptKind::Pace { speed, .. } | ScriptKind::WalkPath { speed, .. } => Some(*speed),
            _ => None,
        }
    }

    /// Points the script can ever visit, for validation.
    fn anchor_segments(&self) -> Vec<(Vec2, Vec2)> {
        match &self.kind {
            ScriptKind::Stand { position, .. } => vec![(*position, *position)],
            ScriptKind::Pace { a, b, .. } => vec![(*a, *b)],
            ScriptKind::WalkPath { points, looped, .. } => {
                let mut segs: Vec<_> = points.windows(2).map(|w| (w[0], w[1])).collect();
                if *looped && points.len() > 1 {
                    segs.push((points[points.len() - 1], points[0]));
                }
                if points.len() == 1 {
                    segs.push((points[0], points[0]));
                }
                segs
            }
            ScriptKind::GroupDiscuss { .. } => {
                let p = pedestrian_state_at(self, 0, 1.0).position;
                vec![(p, p)]
            }
        }
    }

    pub fn validate(&self, map: &WorldMap) -> Result<(), WorldError> {
        if self.activity_label.trim().is_empty() {
            return Err(WorldError::InvalidScript("activity label is empty".into()));
        }
        if let Some(s) = self.speed() {
            if !(s > 0.0 && s <= MAX_SPEED) {
                return Err(WorldError::InvalidScript(format!("speed {s} outside (0, {MAX_SPEED}]")));
            }
        }
        match &self.kind {
            ScriptKind::WalkPath { points, .. } if points.is_empty() => {
                return Err(WorldError::InvalidScript("walk path has no points".into()))
            }
            ScriptKind::GroupDiscuss { radius, .. } if !(*radius >= 0.0) => {
                return Err(WorldError::InvalidScript("group radius is negative".into()))
            }
            _ => {}
        }
        for (a, b) in self.anchor_segments() {
            if !map.is_free(a) || !map.is_free(b) || !map.line_of_sight(a, b) {
                return Err(WorldError::InvalidScript(format!(
                    "script '{}' leaves free space near {a:?}-{b:?}",
                    self.activity_label
                )));
            }
        }
        Ok(())
    }
}

/// Follows a polyline cycle: looped paths wrap around, open paths ping-pong.
fn follow_path(points: &[Vec2], looped: bool, speed: f64, t: u64, dt: f64) -> PedestrianState {
    if points.len() < 2 {
        return PedestrianState { position: points[0], heading: 0.0, gait_phase: 0.0 };
    }
    let mut legs: Vec<(Vec2, Vec2)> = points.windows(2).map(|w| (w[0], w[1])).collect();
    if looped {
        legs.push((points[points.len() - 1], points[0]));
    } else {
        let back: Vec<_> = legs.iter().rev().map(|&(a, b)| (b, a)).collect();
        legs.extend(back);
    }
    let cycle: f64 = legs.iter().map(|(a, b)| a.distance(*b)).sum();
    if cycle == 0.0 {
        return PedestrianState { position: points[0], heading: 0.0, gait_phase: 0.0 };
    }
    // Reduce the step index by the (integral) period so periodic scripts repeat bit-exactly.
    let period = cycle / (speed * dt);
    let t = if (period - period.round()).abs() < 1e-9 && period.round() >= 1.0 { t % period.round() as u64 } else { t };
    let traveled = speed * dt * t as f64;
    let mut u = traveled.rem_euclid(cycle);
    // A completed cycle is the end of the last leg, not the start of the first.
    if u == 0.0 {
        u = cycle;
    }
    let mut acc = 0.0;
    let mut state = PedestrianState::default();
    for &(a, b) in &legs {
        let len = a.distance(b);
        if len == 0.0 {
            continue;
        }
        if u <= acc + len {
            let dir = (b - a) * (1.0 / len);
            state.position = a + dir * (u - acc);
            state.heading = dir.angle();
            break;
        }
        acc += len;
    }
    state.gait_phase = (traveled / STRIDE_LENGTH).rem_euclid(1.0);
    state
}

/// Pure function of (script, step index, dt).
pub fn pedestrian_state_at(script: &PedestrianScript, t: u64, dt: f64) -> PedestrianState {
    match &script.kind {
        ScriptKind::Stand { position, heading } => {
            PedestrianState { position: *position, heading: *heading, gait_phase: 0.0 }
        }
        ScriptKind::Pace { a, b, speed } => follow_path(&[*a, *b], false, *speed, t, dt),
        ScriptKind::WalkPath { points, speed, looped } => follow_path(points, *looped, *speed, t, dt),
        ScriptKind::GroupDiscuss { center, radius, member } => {
            let angle = *member as f64 * GROUP_SPACING;
            let position = *center + Vec2::from_angle(angle) * *radius;
            PedestrianState { position, heading: wrap_angle(angle + PI), gait_phase: 0.0 }
        }
    }
}

/// A joint in the world frame. `z` is the joint height, used only for projection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub visibility: f64,
}

/// COCO-ordered template in the body frame: (forward, left, height) in meters.
const TEMPLATE: [(f64, f64, f64); NUM_KEYPOINTS] = [
    (0.10, 0.00, 1.60),  // nose
    (0.08, 0.03, 1.65),  // left eye
    (0.08, -0.03, 1.65), // right eye
    (0.00, 0.07, 1.62),  // left ear
    (0.00, -0.07, 1.62), // right ear
    (0.00, 0.18, 1.40),  // left shoulder
    (0.00, -0.18, 1.40), // right shoulder
    (0.00, 0.21, 1.12),  // left elbow
    (0.00, -0.21, 1.12), // right elbow
    (0.00, 0.22, 0.85),  // left wrist
    (0.00, -0.22, 0.85), // right wrist
    (0.00, 0.10, 0.92),  // left hip
    (0.00, -0.10, 0.92), // right hip
    (0.00, 0.10, 0.50),  // left knee
    (0.00, -0.10, 0.50), // right knee
    (0.00, 0.10, 0.05),  // left ankle
    (0.00, -0.10, 0.05), // right ankle
];

/// Forward swing amplitude per joint at unit body scale. Legs swing with the
/// phase, arms against it; the right side is the left side half a cycle later.
fn swing_amplitude(joint: usize) -> f64 {
    match joint {
        7 | 8 => -0.12,
        9 | 10 => -0.22,
        13 | 14 => 0.18,
        15 | 16 => 0.30,
        _ => 0.0,
    }
}

fn is_right(joint: usize) -> bool {
    matches!(joint, 2 | 4 | 6 | 8 | 10 | 12 | 14 | 16)
}

pub fn skeleton_at(state: &PedestrianState, body_scale: f64) -> [Keypoint; NUM_KEYPOINTS] {
    let (s, c) = state.heading.sin_cos();
    let forward = Vec2::new(c, s);
    let left = Vec2::new(-s, c);
    let phase = TAU * state.gait_phase;
    let mut out = [Keypoint { x: 0.0, y: 0.0, z: 0.0, visibility: 1.0 }; NUM_KEYPOINTS];
    for (j, &(f, l, h)) in TEMPLATE.iter().enumerate() {
        let side_phase = if is_right(j) { phase + PI } else { phase };
        let swing = swing_amplitude(j) * side_phase.sin();
        let p = state.position + (forward * (f + swing) + left * l) * body_scale;
        out[j] = Keypoint { x: p.x, y: p.y, z: h * body_scale, visibility: 1.0 };
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pace() -> PedestrianScript {
        PedestrianScript {
            kind: ScriptKind::Pace { a: Vec2::new(0.0, 0.0), b: Vec2::new(2.0, 0.0), speed: 1.0 },
            activity_label: "pacing".into(),
        }
    }

    #[test]
    fn stand_is_stationary() {
        let s = PedestrianScript {
            kind: ScriptKind::Stand { position: Vec2::new(1.0, 1.0), heading: 0.0 },
            activity_label: "reading".into(),
        };
        for t in [0, 1, 17, 999] {
            let st = pedestrian_state_at(&s, t, 0.25);
            assert_eq!(st.position, Vec2::new(1.0, 1.0));
            assert_eq!(st.heading, 0.0);
            assert_eq!(st.gait_phase, 0.0);
        }
    }

    #[test]
    fn pace_kinematics() {
        let st = pedestrian_state_at(&pace(), 1, 0.5);
        assert!((st.position - Vec2::new(0.5, 0.0)).norm() < 1e-12);
        assert!(st.heading.abs() < 1e-12);
    }

    #[test]
    fn pace_reflects() {
        let st = pedestrian_state_at(&pace(), 4, 0.5);
        assert!((st.position - Vec2::new(2.0, 0.0)).norm() < 1e-12);
        let st = pedestrian_state_at(&pace(), 8, 0.5);
        assert!(st.position.norm() < 1e-12);
        assert!((st.heading.abs() - PI).abs() < 1e-12);
        let st = pedestrian_state_at(&pace(), 6, 0.5);
        assert!((st.position - Vec2::new(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn gait_phase_tracks_distance() {
        let st = pedestrian_state_at(&pace(), 1, 0.35);
        assert!((st.gait_phase - 0.5).abs() < 1e-12);
    }

    #[test]
    fn skeleton_has_17_visible_joints() {
        let k = skeleton_at(&PedestrianState { position: Vec2::new(3.0, 2.0), heading: 1.0, gait_phase: 0.3 }, 1.1);
        assert_eq!(k.len(), 17);
        assert!(k.iter().all(|p| p.visibility == 1.0));
    }

    #[test]
    fn skeleton_symmetric_at_phase_zero() {
        let k = skeleton_at(&PedestrianState { position: Vec2::ZERO, heading: 0.0, gait_phase: 0.0 }, 1.0);
        // heading axis is world x; mirror is y -> -y
        for (l, r) in [(1, 2), (3, 4), (5, 6), (7, 8), (9, 10), (11, 12), (13, 14), (15, 16)] {
            assert!((k[l].x - k[r].x).abs() < 1e-12);
            assert!((k[l].y + k[r].y).abs() < 1e-12);
            assert_eq!(k[l].z, k[r].z);
        }
    }

    #[test]
    fn half_cycle_swaps_limbs() {
        let base = skeleton_at(&PedestrianState { position: Vec2::ZERO, heading: 0.0, gait_phase: 0.0 }, 1.0);
        let p = 0.13;
        let a = skeleton_at(&PedestrianState { position: Vec2::ZERO, heading: 0.0, gait_phase: p }, 1.0);
        let b = skeleton_at(&PedestrianState { position: Vec2::ZERO, heading: 0.0, gait_phase: p + 0.5 }, 1.0);
        for (l, r) in [(7, 8), (9, 10), (13, 14), (15, 16)] {
            let dl_a = a[l].x - base[l].x;
            let dr_b = b[r].x - base[r].x;
            let dr_a = a[r].x - base[r].x;
            let dl_b = b[l].x - base[l].x;
            assert!((dl_a - dr_b).abs() < 1e-12);
            assert!((dr_a - dl_b).abs() < 1e-12);
            assert!(dl_a.abs() > 1e-3);
        }
    }
}
