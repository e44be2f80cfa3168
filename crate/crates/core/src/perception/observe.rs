use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::geometry::{wrap_angle, Vec2};
use crate::perception::camera::{project, CameraIntrinsics};
use crate::world::candidates::{sector_offset, NUM_SECTORS, SECTOR_WIDTH};
use crate::world::episode::Episode;
use crate::world::map::WorldMap;
use crate::world::pedestrian::{skeleton_at, NUM_KEYPOINTS};
use crate::world::sim::SimState;

pub const RAYS_PER_SECTOR: usize = 16;
pub const MAX_RANGE: f64 = 10.0;
pub const DETECTION_RANGE: f64 = 5.0;
pub const NUM_CLASSES: usize = 48;
pub const BODY_RADIUS: f64 = 0.25;

/// Object vocabulary; the histogram slot of a class is its index here.
pub const OBJECT_CLASSES: [&str; NUM_CLASSES] = [
    "sofa",
    "table",
    "chair",
    "bed",
    "tv",
    "plant",
    "sink",
    "fridge",
    "oven",
    "counter",
    "bookshelf",
    "desk",
    "lamp",
    "painting",
    "mirror",
    "wardrobe",
    "bathtub",
    "toilet",
    "shower",
    "stairs",
    "door",
    "window",
    "cabinet",
    "piano",
    "fireplace",
    "rug",
    "clock",
    "vase",
    "dresser",
    "nightstand",
    "stool",
    "bench",
    "printer",
    "whiteboard",
    "coat rack",
    "washing machine",
    "dryer",
    "microwave",
    "dishwasher",
    "armchair",
    "ottoman",
    "shelf",
    "monitor",
    "trash can",
    "umbrella stand",
    "aquarium",
    "laundry basket",
    "easel",
];

pub fn class_index(class: &str) -> usize {
    OBJECT_CLASSES
        .iter()
        .position(|c| *c == class)
        .unwrap_or_else(|| (crate::semantic::fnv1a64(class.as_bytes()) % NUM_CLASSES as u64) as usize)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelKeypoint {
    pub u: f64,
    pub v: f64,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HumanDetection {
    pub sector: usize,
    pub u: f64,
    pub v: f64,
    pub depth: f64,
    pub keypoints: Vec<PixelKeypoint>,
    /// Ground truth, readable only by the rule-based interpreter and by
    /// training bookkeeping. The policy never sees it.
    pub truth_label: String,
    pub truth_id: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectorObservation {
    pub depths: Vec<f64>,
    pub object_counts: Vec<u32>,
    pub detections: Vec<HumanDetection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanoramicObservation {
    pub t: u64,
    pub sectors: Vec<SectorObservation>,
}

impl PanoramicObservation {
    pub fn detections(&self) -> impl Iterator<Item = &HumanDetection> {
        self.sectors.iter().flat_map(|s| s.detections.iter())
    }

    pub fn detection_count(&self) -> usize {
        self.sectors.iter().map(|s| s.detections.len()).sum()
    }
}

/// Sector `k` covers relative bearings in `[offset - 15deg, offset + 15deg)`.
pub fn sector_of(relative_bearing: f64) -> usize {
    let shifted = (relative_bearing + SECTOR_WIDTH / 2.0).rem_euclid(2.0 * PI);
    ((shifted / SECTOR_WIDTH).floor() as usize).min(NUM_SECTORS - 1)
}

fn ray_circle(origin: Vec2, dir: Vec2, center: Vec2, radius: f64) -> Option<f64> {
    let oc = origin - center;
    let b = oc.dot(dir);
    let c = oc.norm_sq() - radius * radius;
    let disc = b * b - c;
    if disc < 0.0 {
        return None;
    }
    let t = -b - disc.sqrt();
    (t >= 0.0).then_some(t)
}

pub struct ObserveContext<'a> {
    pub map: &'a WorldMap,
    pub episode: &'a Episode,
    pub intrinsics: &'a CameraIntrinsics,
    pub noise: f64,
}

/// Simulated panorama at `state`. Noise perturbs pedestrian and joint
/// positions in meters before projection.
pub fn observe<R: Rng>(ctx: &ObserveContext<'_>, state: &SimState, rng: &mut R) -> PanoramicObservation {
    let agent = state.agent;
    let origin = agent.position();
    let normal = Normal::new(0.0, ctx.noise.max(0.0)).expect("valid sigma");
    let sample = |rng: &mut R| if ctx.noise > 0.0 { normal.sample(rng) } else { 0.0 };

    let mut sectors: Vec<SectorObservation> = (0..NUM_SECTORS)
        .map(|k| {
            let center = agent.heading + sector_offset(k);
            let depths = (0..RAYS_PER_SECTOR)
                .map(|i| {
                    let a = center - SECTOR_WIDTH / 2.0 + (i as f64 + 0.5) * SECTOR_WIDTH / RAYS_PER_SECTOR as f64;
                    let dir = Vec2::from_angle(a);
                    let wall = ctx.map.ray_cast(origin, dir, MAX_RANGE);
                    state
                        .pedestrians
                        .iter()
                        .zip(&ctx.episode.pedestrians)
                        .filter_map(|(p, spec)| ray_circle(origin, dir, p.position, BODY_RADIUS * spec.body_scale))
                        .fold(wall, f64::min)
                })
                .collect();
            SectorObservation { depths, object_counts: vec![0; NUM_CLASSES], detections: Vec::new() }
        })
        .collect();

    for obj in ctx.map.objects() {
        let rel = obj.position - origin;
        if rel.norm() > MAX_RANGE || !ctx.map.line_of_sight(origin, obj.position) {
            continue;
        }
        let k = sector_of(wrap_angle(rel.angle() - agent.heading));
        sectors[k].object_counts[class_index(&obj.class)] += 1;
    }

    for (ped, spec) in state.pedestrians.iter().zip(&ctx.episode.pedestrians) {
        let rel = ped.position - origin;
        if rel.norm() > DETECTION_RANGE || !ctx.map.line_of_sight(origin, ped.position) {
            continue;
        }
        let k = sector_of(wrap_angle(rel.angle() - agent.heading));
        let yaw = agent.heading + sector_offset(k);
        let noisy = ped.position + Vec2::new(sample(rng), sample(rng));
        let Some(center) = project(ctx.intrinsics, &agent, yaw, noisy, 0.0) else { continue };
        let keypoints = skeleton_at(ped, spec.body_scale)
            .iter()
            .map(|kp| {
                let p = Vec2::new(kp.x + sample(rng), kp.y + sample(rng));
                let z = kp.z + sample(rng);
                match project(ctx.intrinsics, &agent, yaw, p, z) {
                    Some(pr) => {
                        let inside =
                            pr.u >= 0.0 && pr.u < ctx.intrinsics.width && pr.v >= 0.0 && pr.v < ctx.intrinsics.height;
                        PixelKeypoint { u: pr.u, v: pr.v, confidence: if inside { kp.visibility } else { 0.0 } }
                    }
                    None => PixelKeypoint { u: ctx.intrinsics.cx, v: ctx.intrinsics.cy, confidence: 0.0 },
                }
            })
            .collect::<Vec<_>>();
        debug_assert_eq!(keypoints.len(), NUM_KEYPOINTS);
        sectors[k].detections.push(HumanDetection {
            sector: k,
            u: center.u,
            v: center.v,
            depth: center.depth,
            keypoints,
            truth_label: spec.script.activity_label.clone(),
            truth_id: spec.id,
        });
    }
    PanoramicObservation { t: state.t, sectors }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sector_boundaries() {
        assert_eq!(sector_of(0.0), 0);
        assert_eq!(sector_of(SECTOR_WIDTH / 2.0 - 1e-9), 0);
        assert_eq!(sector_of(SECTOR_WIDTH / 2.0), 1);
        assert_eq!(sector_of(-SECTOR_WIDTH / 2.0), 0);
        assert_eq!(sector_of(-SECTOR_WIDTH / 2.0 - 1e-9), 11);
        assert_eq!(sector_of(PI), 6);
    }

    #[test]
    fn class_vocabulary_is_distinct() {
        for (i, c) in OBJECT_CLASSES.iter().enumerate() {
            assert_eq!(class_index(c), i);
        }
    }
}
