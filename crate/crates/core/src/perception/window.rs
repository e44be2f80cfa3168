//! Pause-and-observe window: per-frame detections are back-projected and
//! chained into per-person tracks.

use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::geometry::Vec2;
use crate::perception::camera::backproject;
use crate::perception::observe::{observe, HumanDetection, ObserveContext, PixelKeypoint};
use crate::world::candidates::sector_offset;
use crate::world::sim::{SimState, Simulator};

pub const DEFAULT_WINDOW: usize = 6;
pub const ASSOCIATION_GATE: f64 = 0.6;
pub const MIN_TRACK_LENGTH: usize = 3;
/// Depth assumed when the depth channel is unavailable.
pub const NOMINAL_DEPTH: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackFrame {
    pub position: Vec2,
    pub keypoints: Vec<PixelKeypoint>,
    pub t: u64,
    pub sector: usize,
    #[serde(skip)]
    pub truth_label: String,
    #[serde(skip)]
    pub truth_id: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub id: usize,
    pub frames: Vec<TrackFrame>,
}

impl Track {
    pub fn last(&self) -> &TrackFrame {
        self.frames.last().expect("tracks are never empty")
    }

    /// Ground-truth identity: the pedestrian seen most often along the track.
    pub fn truth_id(&self) -> usize {
        let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
        for f in &self.frames {
            *counts.entry(f.truth_id).or_default() += 1;
        }
        counts.into_iter().max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0))).map(|(id, _)| id).unwrap_or(0)
    }

    pub fn truth_label(&self) -> &str {
        &self.last().truth_label
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ObservationWindow {
    pub m: usize,
    pub tracks: Vec<Track>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowOptions {
    pub m: usize,
    /// When false, back-projection uses `NOMINAL_DEPTH` instead of measured depth.
    pub use_depth: bool,
}

impl Default for WindowOptions {
    fn default() -> Self {
        Self { m: DEFAULT_WINDOW, use_depth: true }
    }
}

fn detection_position(ctx: &ObserveContext<'_>, state: &SimState, det: &HumanDetection, use_depth: bool) -> Vec2 {
    let depth = if use_depth { det.depth } else { NOMINAL_DEPTH };
    let yaw = state.agent.heading + sector_offset(det.sector);
    backproject(det.u, det.v, depth, ctx.intrinsics, yaw, state.agent.heading).expect("detections have positive depth")
}

/// Greedy gated nearest-neighbour association; ties go to the smaller
/// distance, then the smaller track id.
fn associate(open: &[(usize, Vec2)], dets: &[Vec2]) -> Vec<Option<usize>> {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (ti, &(_, last)) in open.iter().enumerate() {
        for (di, &p) in dets.iter().enumerate() {
            let d = last.distance(p);
            if d <= ASSOCIATION_GATE {
                pairs.push((d, open[ti].0, di));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut det_to_track = vec![None; dets.len()];
    let mut used_tracks = Vec::new();
    for (_, track, det) in pairs {
        if det_to_track[det].is_none() && !used_tracks.contains(&track) {
            det_to_track[det] = Some(track);
            used_tracks.push(track);
        }
    }
    det_to_track
}

/// Holds the agent still for `m` world steps, observing each one. Returns the
/// window and the state after the pause.
pub fn collect_window<R: Rng>(
    ctx: &ObserveContext<'_>,
    sim: &Simulator<'_>,
    state: &SimState,
    opts: WindowOptions,
    rng: &mut R,
) -> (ObservationWindow, SimState) {
    let mut tracks: Vec<Track> = Vec::new();
    let mut current = state.clone();
    for _ in 0..opts.m {
        let obs = observe(ctx, &current, rng);
        let dets: Vec<&HumanDetection> = obs.detections().collect();
        let positions: Vec<Vec2> = dets.iter().map(|d| detection_position(ctx, &current, d, opts.use_depth)).collect();
        let open: Vec<(usize, Vec2)> = tracks.iter().map(|t| (t.id, t.last().position)).collect();
        let assignment = associate(&open, &positions);
        for ((det, pos), assigned) in dets.iter().zip(&positions).zip(assignment) {
            let frame = TrackFrame {
                position: *pos,
                keypoints: det.keypoints.clone(),
                t: current.t,
                sector: det.sector,
                truth_label: det.truth_label.clone(),
                truth_id: det.truth_id,
            };
            match assigned {
                Some(id) => tracks.iter_mut().find(|t| t.id == id).expect("assigned track exists").frames.push(frame),
                None => {
                    let id = tracks.len();
                    tracks.push(Track { id, frames: vec![frame] });
                }
            }
        }
        current = sim.wait(&current, 1);
    }
    tracks.retain(|t| t.frames.len() >= MIN_TRACK_LENGTH);
    (ObservationWindow { m: opts.m, tracks }, current)
}
