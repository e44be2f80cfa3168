//! Navigation error, success rate, collision rate and collision events per
//! episode.

use serde::{Deserialize, Serialize};

use crate::agent::EpisodeLog;
use crate::error::EvalError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeOutcome {
    pub final_distance: f64,
    pub collisions: usize,
}

impl From<&EpisodeLog> for EpisodeOutcome {
    fn from(log: &EpisodeLog) -> Self {
        Self { final_distance: log.final_distance(), collisions: log.collision_count() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub ne: f64,
    pub sr: f64,
    pub tcr: f64,
    pub cr: f64,
    pub episodes: usize,
    pub split: String,
    pub ablation: String,
}

/// Order-independent: outcomes are sorted before summation.
pub fn compute_outcome_metrics(
    outcomes: &[EpisodeOutcome],
    delta_th: f64,
    split: &str,
    ablation: &str,
) -> Result<MetricsReport, EvalError> {
    if outcomes.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let n = outcomes.len() as f64;
    let mut dists: Vec<f64> = outcomes.iter().map(|o| o.final_distance).collect();
    dists.sort_by(f64::total_cmp);
    let success = outcomes.iter().filter(|o| o.final_distance < delta_th && o.collisions == 0).count();
    let collided = outcomes.iter().filter(|o| o.collisions > 0).count();
    let events: usize = outcomes.iter().map(|o| o.collisions).sum();
    Ok(MetricsReport {
        ne: dists.iter().sum::<f64>() / n,
        sr: success as f64 / n,
        tcr: events as f64 / n,
        cr: collided as f64 / n,
        episodes: outcomes.len(),
        split: split.to_string(),
        ablation: ablation.to_string(),
    })
}

pub fn compute_metrics(
    logs: &[EpisodeLog],
    delta_th: f64,
    split: &str,
    ablation: &str,
) -> Result<MetricsReport, EvalError> {
    let outcomes: Vec<EpisodeOutcome> = logs.iter().map(EpisodeOutcome::from).collect();
    compute_outcome_metrics(&outcomes, delta_th, split, ablation)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn o(d: f64, c: usize) -> EpisodeOutcome {
        EpisodeOutcome { final_distance: d, collisions: c }
    }

    #[test]
    fn hand_fixture() {
        let m = compute_outcome_metrics(&[o(1.0, 0), o(2.0, 2), o(5.0, 0)], 3.0, "unseen", "full").unwrap();
        assert!((m.ne - 8.0 / 3.0).abs() < 1e-12);
        assert!((m.sr - 1.0 / 3.0).abs() < 1e-12);
        assert!((m.cr - 1.0 / 3.0).abs() < 1e-12);
        assert!((m.tcr - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn all_at_goal() {
        let m = compute_outcome_metrics(&[o(0.0, 0), o(0.0, 0)], 3.0, "seen", "full").unwrap();
        assert_eq!((m.sr, m.cr, m.tcr, m.ne), (1.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn all_collide() {
        let m = compute_outcome_metrics(&[o(0.0, 1), o(9.0, 1)], 3.0, "seen", "full").unwrap();
        assert_eq!((m.sr, m.cr), (0.0, 1.0));
    }

    #[test]
    fn empty_is_error() {
        assert_eq!(compute_outcome_metrics(&[], 3.0, "seen", "full"), Err(EvalError::EmptyInput));
    }

    proptest! {
        #[test]
        fn identities_and_order_invariance(
            raw in prop::collection::vec((0.0..20.0f64, 0usize..4), 1..40),
            seed in any::<u64>(),
        ) {
            let outcomes: Vec<EpisodeOutcome> = raw.iter().map(|&(d, c)| o(d, c)).collect();
            let m = compute_outcome_metrics(&outcomes, 3.0, "s", "a").unwrap();
            prop_assert!(m.sr + m.cr <= 1.0 + 1e-12);
            prop_assert!(m.tcr >= m.cr);
            prop_assert!(m.ne >= 0.0);
            let mut shuffled = outcomes.clone();
            use rand::{seq::SliceRandom, SeedableRng};
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(compute_outcome_metrics(&shuffled, 3.0, "s", "a").unwrap(), m);
        }
    }
}
