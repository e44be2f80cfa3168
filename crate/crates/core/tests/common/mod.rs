//! Helpers shared by integration targets.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use socnav_core::geometry::{Rect, Vec2};
use socnav_core::world::WorldMap;
use std::collections::VecDeque;

/// Random 8 x 8 m map with up to four rectangular obstacles.
pub fn random_small_map(seed: u64) -> WorldMap {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = rng.gen_range(0..=4);
    let obstacles = (0..count)
        .map(|_| {
            let (x, y) = (rng.gen_range(0.0..6.5), rng.gen_range(0.0..6.5));
            let (w, h) = (rng.gen_range(0.3..3.0), rng.gen_range(0.3..3.0));
            Rect::new(x, y, (x + w).min(8.0), (y + h).min(8.0))
        })
        .collect();
    WorldMap::new(Rect::new(0.0, 0.0, 8.0, 8.0), obstacles, vec![]).expect("obstacles inside bounds")
}

/// Uniform random cell that is free on the inflated grid.
pub fn random_free_cell(map: &WorldMap, rng: &mut ChaCha8Rng) -> Option<Vec2> {
    let g = map.grid();
    (0..1000).find_map(|_| {
        let (ix, iy) = (rng.gen_range(0..g.nx), rng.gen_range(0..g.ny));
        (!map.inflated()[g.index(ix, iy)]).then(|| g.cell_center(ix, iy))
    })
}

/// Brute-force oracle for 8-connected grid paths: breadth-first search in
/// straight moves, layered by the number of diagonal moves used. Returns
/// the optimal `(straight, diagonal)` counts.
pub fn bfs_oracle(map: &WorldMap, start: Vec2, goal: Vec2) -> Option<(u32, u32)> {
    let g = map.grid();
    let blocked = map.inflated();
    let cell = |p: Vec2| g.cell_of(p).map(|(x, y)| g.index(x, y)).filter(|&i| !blocked[i]);
    let (s, t) = (cell(start)?, cell(goal)?);
    let n = g.nx * g.ny;
    let neighbours = |i: usize, diagonal: bool| -> Vec<usize> {
        let (x, y) = ((i % g.nx) as i64, (i / g.nx) as i64);
        let steps: &[(i64, i64)] =
            if diagonal { &[(1, 1), (1, -1), (-1, 1), (-1, -1)] } else { &[(1, 0), (-1, 0), (0, 1), (0, -1)] };
        steps
            .iter()
            .map(|(dx, dy)| (x + dx, y + dy))
            .filter(|&(a, b)| a >= 0 && b >= 0 && a < g.nx as i64 && b < g.ny as i64)
            .map(|(a, b)| g.index(a as usize, b as usize))
            .filter(|&j| !blocked[j])
            .collect()
    };
    // layer[i] = fewest straight moves reaching i with exactly d diagonals
    let mut layer = vec![u32::MAX; n];
    layer[s] = 0;
    let mut best: Option<(u32, u32)> = None;
    let cost = |(a, b): (u32, u32)| a as f64 + b as f64 * std::f64::consts::SQRT_2;
    for d in 0..=(2 * n as u32) {
        // straight-move relaxation inside the layer: bucketed BFS
        let max = layer.iter().filter(|&&v| v != u32::MAX).max().copied();
        let Some(max) = max else { break };
        let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); max as usize + 1];
        for (i, &v) in layer.iter().enumerate() {
            if v != u32::MAX {
                buckets[v as usize].push(i);
            }
        }
        let mut k = 0;
        while k < buckets.len() {
            let mut queue: VecDeque<usize> = std::mem::take(&mut buckets[k]).into();
            while let Some(i) = queue.pop_front() {
                if layer[i] != k as u32 {
                    continue;
                }
                for j in neighbours(i, false) {
                    if layer[j] > k as u32 + 1 {
                        layer[j] = k as u32 + 1;
                        if buckets.len() <= k + 1 {
                            buckets.push(Vec::new());
                        }
                        buckets[k + 1].push(j);
                    }
                }
            }
            k += 1;
        }
        if layer[t] != u32::MAX && best.map_or(true, |b| cost((layer[t], d)) < cost(b)) {
            best = Some((layer[t], d));
        }
        if let Some(b) = best {
            if (d + 1) as f64 * std::f64::consts::SQRT_2 > cost(b) {
                break;
            }
        }
        let mut next = vec![u32::MAX; n];
        for i in 0..n {
            if layer[i] != u32::MAX {
                for j in neighbours(i, true) {
                    next[j] = next[j].min(layer[i]);
                }
            }
        }
        layer = next;
    }
    best
}
