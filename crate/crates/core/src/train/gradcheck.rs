//! Finite-difference checks of every analytic gradient path, shared by the
//! tests and the `gradcheck` command.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::forecast::{constant_velocity_sample, grad_check_with, ForecastLossConfig, ForecasterParams, MAX_HISTORY};
use crate::geometry::{Pose2, Vec2};
use crate::nn::{finite_difference_error, probe_indices, Module};
use crate::perception::STATIC_DIM;
use crate::topo::{
    assign_humans, score_backward, score_forward, update_graph, HumanFeature, InstructionTokens, PolicyParams,
    TopoGraph, SUMMARY_DIM,
};
use crate::train::loss::nav_loss;
use crate::train::penalty::{expected_social_penalty, SocialConfig};
use crate::world::candidates::{Candidate, NUM_SECTORS};

pub const FD_STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub forecast: f64,
    pub fuse: f64,
    pub score: f64,
}

impl GradCheckReport {
    pub fn max(&self) -> f64 {
        self.forecast.max(self.fuse).max(self.score)
    }

    pub fn passes(&self) -> bool {
        self.max() < TOLERANCE
    }
}

/// Both forecaster branches on a small batch of noisy walkers.
pub fn forecast_check(seed: u64, probes: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let batch: Vec<_> = (0..3).map(|_| constant_velocity_sample(&mut rng, MAX_HISTORY, 0.25, 0.05)).collect();
    let params = ForecasterParams::init(seed);
    grad_check_with(&params, &batch, FD_STEP, probes, seed, None, &ForecastLossConfig::default())
        .unwrap_or(f64::INFINITY)
}

/// A decision point: two graph updates, humans attached to candidates, and
/// their forecasts crossing the candidate segments.
pub struct PolicyFixture {
    pub graph: TopoGraph,
    pub tokens: InstructionTokens,
    pub params: PolicyParams,
    pub agent: Vec2,
    pub heading: f64,
    pub targets: Vec<Vec2>,
    pub forecasts: Vec<Vec<Vec2>>,
    pub expert: usize,
}

impl PolicyFixture {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut vec = |n: usize, s: f64| -> Vec<f64> { (0..n).map(|_| rng.gen_range(-s..s)).collect() };
        let feats: Vec<Vec<f64>> = (0..NUM_SECTORS).map(|_| vec(STATIC_DIM, 1.0)).collect();
        let ring = |c: Vec2| -> Vec<Candidate> {
            (0..5)
                .map(|k| {
                    let a = k as f64 * 1.2;
                    Candidate { sector: (k * 2) % NUM_SECTORS, radius: 1.5, position: c + Vec2::from_angle(a) * 1.5 }
                })
                .collect()
        };
        let g = update_graph(&TopoGraph::new(), &Pose2::new(0.0, 0.0, 0.0), &ring(Vec2::new(0.0, 0.0)), &feats, 0)
            .expect("fixed sizes");
        let pose = Pose2::new(1.5, 0.0, 0.3);
        let g = update_graph(&g, &pose, &ring(pose.position()), &feats, 1).expect("fixed sizes");
        let targets: Vec<Vec2> = g.actions.iter().map(|&id| g.node(id).position).collect();
        let humans: Vec<HumanFeature> = targets
            .iter()
            .take(2)
            .enumerate()
            .map(|(k, &t)| HumanFeature {
                id: k,
                position: t + Vec2::new(0.1, 0.2),
                geo: vec(SUMMARY_DIM, 1.0),
                sem: vec(SUMMARY_DIM, 0.3),
            })
            .collect();
        let forecasts = humans
            .iter()
            .map(|h| {
                (0..3).map(|s| pose.position().lerp(h.position, 0.3 + 0.2 * s as f64) + Vec2::new(0.05, 0.3)).collect()
            })
            .collect();
        let graph = assign_humans(&g, &humans).expect("fixed sizes");
        let mut trng = ChaCha8Rng::seed_from_u64(seed + 1);
        let tokens = crate::topo::scorer::random_tokens(&mut trng, 8);
        let expert = targets.len() - 1;
        Self {
            graph,
            tokens,
            params: PolicyParams::init(seed),
            agent: pose.position(),
            heading: pose.heading,
            targets,
            forecasts,
            expert,
        }
    }

    /// Navigation cross-entropy plus expected social penalty.
    pub fn objective(&self, p: &PolicyParams) -> f64 {
        let t = score_forward(&self.graph, &self.tokens, p);
        nav_loss(&t.probs, self.expert)
            + expected_social_penalty(
                &t.probs,
                self.agent,
                self.heading,
                &self.targets,
                &self.forecasts,
                &SocialConfig::default(),
            )
            .total()
    }

    pub fn gradient(&self) -> PolicyParams {
        let t = score_forward(&self.graph, &self.tokens, &self.params);
        let sp = expected_social_penalty(
            &t.probs,
            self.agent,
            self.heading,
            &self.targets,
            &self.forecasts,
            &SocialConfig::default(),
        );
        let d: Vec<f64> = t
            .probs
            .iter()
            .enumerate()
            .map(|(k, p)| p - if k == self.expert { 1.0 } else { 0.0 } + sp.d_logits[k])
            .collect();
        let mut g = self.params.zeros_like();
        score_backward(&t, &d, &self.params, &mut g);
        g
    }
}

/// Fusion perceptron weights only (the first four policy tensors).
pub fn fuse_check(seed: u64, probes: usize) -> f64 {
    let f = PolicyFixture::new(seed);
    let g = f.gradient();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sizes: Vec<usize> = f.params.tensors().iter().take(4).map(|t| t.len()).collect();
    let idx: Vec<(usize, usize)> = (0..probes).map(|k| (k % 4, rng.gen_range(0..sizes[k % 4]))).collect();
    finite_difference_error(&f.params, &g, &idx, FD_STEP, |p| f.objective(p))
}

/// Every scorer tensor, through the imitation and social-penalty objective.
pub fn score_check(seed: u64, probes: usize) -> f64 {
    let f = PolicyFixture::new(seed);
    let g = f.gradient();
    let mut idx = probe_indices(&f.params, probes, seed);
    let token_tensor = f.params.tensors().len() - 1;
    let width = f.params.tensors()[token_tensor].cols();
    for (k, &id) in f.tokens.ids.iter().enumerate().take(4) {
        idx.push((token_tensor, id * width + k));
    }
    finite_difference_error(&f.params, &g, &idx, FD_STEP, |p| f.objective(p))
}

pub fn run_all(seed: u64, probes: usize) -> GradCheckReport {
    GradCheckReport {
        forecast: forecast_check(seed, probes),
        fuse: fuse_check(seed, probes),
        score: score_check(seed, probes),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_has_social_signal() {
        let f = PolicyFixture::new(0);
        let t = score_forward(&f.graph, &f.tokens, &f.params);
        let sp =
            expected_social_penalty(&t.probs, f.agent, f.heading, &f.targets, &f.forecasts, &SocialConfig::default());
        assert!(sp.total() > 0.0);
        assert!(f.graph.nodes.iter().any(|n| n.human_summary.iter().any(|&x| x != 0.0)));
    }

    #[test]
    fn all_paths_pass() {
        for seed in 0..2 {
            let r = run_all(seed, 24);
            assert!(r.passes(), "seed {seed}: {r:?}");
        }
    }
}
