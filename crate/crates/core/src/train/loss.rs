//! Loss terms of the training objective.

use serde::{Deserialize, Serialize};

use crate::geometry::Vec2;

pub const COLLISION_PENALTY: f64 = 3.0;
pub const SAFETY_RADIUS: f64 = 1.0;
pub const PROXIMITY_EPS: f64 = 0.0625;
pub const ANNEAL_FLOOR: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub nav: f64,
    pub pose: f64,
    pub traj: f64,
    pub coll: f64,
    pub prox: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn forecast_only(traj: f64, pose: f64) -> Self {
        Self { traj, pose, total: traj + pose, ..Self::default() }
    }

    pub fn is_finite(&self) -> bool {
        [self.nav, self.pose, self.traj, self.coll, self.prox, self.total].iter().all(|x| x.is_finite())
    }
}

/// Front-facing weight: 1 straight ahead, 0.25 directly behind.
pub fn front_weight(theta: f64) -> f64 {
    0.25 + 0.375 * (1.0 + theta.cos())
}

/// `lambda_c` times `delta` per event.
pub fn collision_loss(events: usize, lambda_c: f64, delta: f64) -> f64 {
    lambda_c * (0..events).map(|_| delta).sum::<f64>()
}

/// One human relative to the agent: offset `d` and bearing `theta` from the
/// agent heading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelativeHuman {
    pub offset: Vec2,
    pub bearing: f64,
}

/// Inverse-square repulsion over humans within `r_s`, weighted by bearing.
pub fn proximity_loss(humans: &[RelativeHuman], lambda_p: f64, r_s: f64, eps_p: f64) -> f64 {
    lambda_p
        * humans
            .iter()
            .filter(|h| h.offset.norm() <= r_s)
            .map(|h| front_weight(h.bearing) / h.offset.norm_sq().max(eps_p))
            .sum::<f64>()
}

/// Cross-entropy of the expert action.
pub fn nav_loss(distribution: &[f64], expert: usize) -> f64 {
    -distribution[expert].ln()
}

/// Linear decay from 1 to the 0.1 floor over `t_anneal` iterations.
pub fn anneal_weight(t: usize, t_anneal: usize) -> f64 {
    if t_anneal == 0 {
        return ANNEAL_FLOOR;
    }
    (1.0 - t as f64 / t_anneal as f64).max(ANNEAL_FLOOR)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossComponents {
    pub nav: f64,
    pub pose: f64,
    pub traj: f64,
    pub coll: f64,
    pub prox: f64,
}

pub fn total_loss(c: LossComponents, t: usize, t_anneal: usize) -> LossBreakdown {
    let w = anneal_weight(t, t_anneal);
    LossBreakdown {
        nav: c.nav,
        pose: c.pose,
        traj: c.traj,
        coll: c.coll,
        prox: c.prox,
        total: w * (c.pose + c.traj) + c.coll + c.prox + c.nav,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn front_weight_examples() {
        assert!((front_weight(0.0) - 1.0).abs() < 1e-12);
        assert!((front_weight(PI) - 0.25).abs() < 1e-12);
        assert!((front_weight(PI / 2.0) - 0.625).abs() < 1e-12);
    }

    #[test]
    fn collision_examples() {
        assert_eq!(collision_loss(0, 1.0, COLLISION_PENALTY), 0.0);
        assert_eq!(collision_loss(2, 1.0, COLLISION_PENALTY), 6.0);
        assert_eq!(collision_loss(1, 0.5, COLLISION_PENALTY), 1.5);
    }

    fn h(x: f64, y: f64, theta: f64) -> RelativeHuman {
        RelativeHuman { offset: Vec2::new(x, y), bearing: theta }
    }

    #[test]
    fn proximity_examples() {
        let l = |hs: &[RelativeHuman]| proximity_loss(hs, 1.0, SAFETY_RADIUS, PROXIMITY_EPS);
        assert_eq!(l(&[h(2.0, 0.0, 0.0)]), 0.0);
        assert!((l(&[h(1.0, 0.0, 0.0)]) - 1.0).abs() < 1e-12);
        assert!((l(&[h(0.1, 0.0, 0.0)]) - 16.0).abs() < 1e-12);
        assert!((l(&[h(-1.0, 0.0, PI)]) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn nav_examples() {
        assert_eq!(nav_loss(&[0.0, 1.0], 1), 0.0);
        assert!((nav_loss(&[0.25; 4], 2) - 4f64.ln()).abs() < 1e-12);
        assert!((nav_loss(&[0.5, 0.5], 0) - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn total_examples() {
        let c = LossComponents { nav: 0.1, pose: 0.2, traj: 0.3, coll: 3.0, prox: 0.5 };
        assert!((total_loss(c, 0, 10).total - (0.2 + 0.3 + 3.0 + 0.5 + 0.1)).abs() < 1e-12);
        assert_eq!(anneal_weight(10, 10), 0.1);
        assert_eq!(anneal_weight(25, 10), 0.1);
        assert_eq!(total_loss(LossComponents::default(), 3, 10).total, 0.0);
    }

    proptest! {
        #[test]
        fn front_weight_range(theta in -PI..=PI) {
            let w = front_weight(theta);
            prop_assert!((0.25..=1.0).contains(&w));
            prop_assert!((w - front_weight(-theta)).abs() < 1e-15);
        }

        #[test]
        fn proximity_decreases_with_distance(a in 0.25f64..0.99, gap in 0.001f64..0.5, theta in -PI..=PI) {
            let b = (a + gap).min(SAFETY_RADIUS);
            prop_assume!(b > a);
            let la = proximity_loss(&[h(a, 0.0, theta)], 1.0, SAFETY_RADIUS, PROXIMITY_EPS);
            let lb = proximity_loss(&[h(b, 0.0, theta)], 1.0, SAFETY_RADIUS, PROXIMITY_EPS);
            prop_assert!(la > lb);
        }

        #[test]
        fn anneal_monotone(t in 0usize..1000, dt in 0usize..100, horizon in 1usize..500) {
            let w0 = anneal_weight(t, horizon);
            let w1 = anneal_weight(t + dt, horizon);
            prop_assert!(w1 <= w0);
            prop_assert!((0.1..=1.0).contains(&w0));
        }
    }
}
