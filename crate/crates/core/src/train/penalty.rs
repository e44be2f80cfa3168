//! Social-distance losses in expectation under the policy, evaluated on
//! forecast human positions so they are differentiable in the logits.

use serde::{Deserialize, Serialize};

use crate::geometry::{closest_point_on_segment, wrap_angle, Vec2};
use crate::train::loss::{
    collision_loss, proximity_loss, RelativeHuman, COLLISION_PENALTY, PROXIMITY_EPS, SAFETY_RADIUS,
};
use crate::world::sim::COLLISION_RADIUS;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SocialConfig {
    pub lambda_c: f64,
    pub lambda_p: f64,
    pub delta: f64,
    pub r_s: f64,
    pub eps_p: f64,
    pub r_coll: f64,
}

impl Default for SocialConfig {
    fn default() -> Self {
        Self {
            lambda_c: 1.0,
            lambda_p: 1.0,
            delta: COLLISION_PENALTY,
            r_s: SAFETY_RADIUS,
            eps_p: PROXIMITY_EPS,
            r_coll: COLLISION_RADIUS,
        }
    }
}

/// Penalty of committing to one action.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ActionPenalty {
    pub coll: f64,
    pub prox: f64,
}

impl ActionPenalty {
    pub fn total(&self) -> f64 {
        self.coll + self.prox
    }
}

/// Expected penalty and its gradient with respect to the logits.
#[derive(Debug, Clone, PartialEq)]
pub struct SocialPenalty {
    pub coll: f64,
    pub prox: f64,
    pub per_action: Vec<ActionPenalty>,
    pub d_logits: Vec<f64>,
}

impl SocialPenalty {
    pub fn total(&self) -> f64 {
        self.coll + self.prox
    }
}

/// Penalty for moving from `agent` to `target`. Each forecast human counts
/// at most one predicted contact; proximity uses the closest approach, with
/// the bearing measured from the direction of travel (`heading` when the
/// segment is degenerate).
pub fn action_penalty(
    agent: Vec2,
    target: Vec2,
    heading: f64,
    forecasts: &[Vec<Vec2>],
    cfg: &SocialConfig,
) -> ActionPenalty {
    let dir = target - agent;
    let travel = if dir.norm() > 1e-9 { dir.angle() } else { heading };
    let mut contacts = 0;
    let mut near = Vec::new();
    for human in forecasts {
        let closest = human
            .iter()
            .map(|&q| {
                let (c, _) = closest_point_on_segment(agent, target, q);
                q - c
            })
            .min_by(|a, b| a.norm_sq().total_cmp(&b.norm_sq()));
        let Some(offset) = closest else { continue };
        if offset.norm() < cfg.r_coll {
            contacts += 1;
        }
        if offset.norm() <= cfg.r_s {
            near.push(RelativeHuman { offset, bearing: wrap_angle(offset.angle() - travel) });
        }
    }
    ActionPenalty {
        coll: collision_loss(contacts, cfg.lambda_c, cfg.delta),
        prox: proximity_loss(&near, cfg.lambda_p, cfg.r_s, cfg.eps_p),
    }
}

/// `sum_a p(a) * penalty(a)` over the distribution, whose last entry is STOP
/// (a zero-length segment at the agent).
pub fn expected_social_penalty(
    probs: &[f64],
    agent: Vec2,
    heading: f64,
    targets: &[Vec2],
    forecasts: &[Vec<Vec2>],
    cfg: &SocialConfig,
) -> SocialPenalty {
    assert_eq!(probs.len(), targets.len() + 1, "distribution must cover every target plus STOP");
    let per_action: Vec<ActionPenalty> = targets
        .iter()
        .chain(std::iter::once(&agent))
        .map(|&t| action_penalty(agent, t, heading, forecasts, cfg))
        .collect();
    let coll: f64 = probs.iter().zip(&per_action).map(|(p, a)| p * a.coll).sum();
    let prox: f64 = probs.iter().zip(&per_action).map(|(p, a)| p * a.prox).sum();
    let expected = coll + prox;
    let d_logits = probs.iter().zip(&per_action).map(|(p, a)| p * (a.total() - expected)).collect();
    SocialPenalty { coll, prox, per_action, d_logits }
}
