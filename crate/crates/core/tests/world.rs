mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use socnav_core::geometry::{Pose2, Rect, Vec2};
use socnav_core::world::candidates::CANDIDATE_CLEARANCE;
use socnav_core::world::{shortest_path, waypoint_candidates, WorldMap};
use std::f64::consts::PI;

#[test]
fn l_corridor_matches_oracle() {
    // 6 x 6 m room with a block leaving an L-shaped corridor along two walls
    let map = WorldMap::new(Rect::new(0.0, 0.0, 6.0, 6.0), vec![Rect::new(1.2, 1.2, 6.0, 6.0)], vec![]).unwrap();
    let (s, g) = (Vec2::new(5.55, 0.55), Vec2::new(0.55, 5.55));
    let path = shortest_path(&map, s, g).unwrap();
    let (straight, diagonal) = common::bfs_oracle(&map, s, g).unwrap();
    assert_eq!((path.steps.straight, path.steps.diagonal), (straight, diagonal));
    assert_eq!(path.length, path.steps.length());
    assert!(path.points.iter().all(|p| map.is_free(*p)));
}

#[test]
fn walled_off_goal_has_no_path() {
    let map = WorldMap::new(Rect::new(0.0, 0.0, 6.0, 6.0), vec![Rect::new(2.8, 0.0, 3.2, 6.0)], vec![]).unwrap();
    let (s, g) = (Vec2::new(1.0, 3.0), Vec2::new(5.0, 3.0));
    assert!(shortest_path(&map, s, g).is_err());
    assert_eq!(common::bfs_oracle(&map, s, g), None);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn planner_agrees_with_oracle(seed in 0u64..10_000) {
        let map = common::random_small_map(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        if let (Some(s), Some(g)) = (common::random_free_cell(&map, &mut rng), common::random_free_cell(&map, &mut rng)) {
            let planned = shortest_path(&map, s, g).ok().map(|p| (p.steps.straight, p.steps.diagonal));
            prop_assert_eq!(planned, common::bfs_oracle(&map, s, g));
        }
    }

    #[test]
    fn candidates_are_valid(seed in 0u64..10_000, heading in -PI..PI) {
        let map = common::random_small_map(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
        if let Some(p) = common::random_free_cell(&map, &mut rng) {
            let pose = Pose2::new(p.x, p.y, heading);
            let cands = waypoint_candidates(&map, &pose);
            prop_assert!(cands.len() <= 12);
            for c in &cands {
                let d = c.position.distance(p);
                prop_assert!((0.75 - 1e-9..=3.0 + 1e-9).contains(&d));
                prop_assert!(map.is_free(c.position));
                prop_assert!(map.clearance(c.position, CANDIDATE_CLEARANCE) >= CANDIDATE_CLEARANCE - 1e-9);
                prop_assert!(map.line_of_sight(p, c.position));
            }
        }
    }
}
