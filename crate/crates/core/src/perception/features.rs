use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::OnceLock;

use crate::perception::observe::{SectorObservation, MAX_RANGE, NUM_CLASSES, RAYS_PER_SECTOR};

pub const STATIC_DIM: usize = 64;
pub const RAW_DIM: usize = RAYS_PER_SECTOR + NUM_CLASSES;
pub const HISTOGRAM_CLIP: u32 = 3;
const PROJECTION_SEED: u64 = 0x5EC7_0F0E_A7D1_2024;

/// Which inputs feed the static encoder; the ablation variants drop one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct StaticChannels {
    pub depth: bool,
    pub objects: bool,
}

impl Default for StaticChannels {
    fn default() -> Self {
        Self { depth: true, objects: true }
    }
}

/// Fixed 64 x 64 projection, row-major, entries uniform in +-sqrt(3/RAW_DIM).
pub fn projection_matrix() -> &'static [f64] {
    static MATRIX: OnceLock<Vec<f64>> = OnceLock::new();
    MATRIX.get_or_init(|| {
        let mut rng = ChaCha8Rng::seed_from_u64(PROJECTION_SEED);
        let scale = (3.0 / RAW_DIM as f64).sqrt();
        (0..STATIC_DIM * RAW_DIM).map(|_| rng.gen_range(-scale..scale)).collect()
    })
}

pub fn raw_sector_input(sector: &SectorObservation, channels: StaticChannels) -> [f64; RAW_DIM] {
    let mut raw = [0.0; RAW_DIM];
    if channels.depth {
        for (r, d) in raw.iter_mut().zip(&sector.depths) {
            *r = d / MAX_RANGE;
        }
    }
    if channels.objects {
        for (r, &c) in raw[RAYS_PER_SECTOR..].iter_mut().zip(&sector.object_counts) {
            *r = c.min(HISTOGRAM_CLIP) as f64 / HISTOGRAM_CLIP as f64;
        }
    }
    raw
}

pub fn static_sector_feature(sector: &SectorObservation, channels: StaticChannels) -> Vec<f64> {
    let raw = raw_sector_input(sector, channels);
    let m = projection_matrix();
    (0..STATIC_DIM).map(|i| m[i * RAW_DIM..(i + 1) * RAW_DIM].iter().zip(&raw).map(|(a, b)| a * b).sum()).collect()
}

/// Rank of the projection restricted to the histogram columns.
pub fn histogram_block_rank() -> usize {
    let m = projection_matrix();
    let mut a: Vec<Vec<f64>> =
        (0..STATIC_DIM).map(|i| m[i * RAW_DIM + RAYS_PER_SECTOR..(i + 1) * RAW_DIM].to_vec()).collect();
    let (rows, cols) = (STATIC_DIM, NUM_CLASSES);
    let mut rank = 0;
    for col in 0..cols {
        let pivot = (rank..rows).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()));
        let Some(p) = pivot else { break };
        if a[p][col].abs() < 1e-10 {
            continue;
        }
        a.swap(rank, p);
        for r in 0..rows {
            if r != rank {
                let f = a[r][col] / a[rank][col];
                for c in col..cols {
                    a[r][c] -= f * a[rank][c];
                }
            }
        }
        rank += 1;
    }
    rank
}
