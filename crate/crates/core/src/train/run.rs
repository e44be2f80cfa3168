//! Training loop: teacher-forced rollouts with student sampling, imitation
//! plus expected social penalties for the policy, online forecaster updates.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{run_episode, ActionMode, AgentConfig, AgentParams, DecisionRecord};
use crate::error::TrainError;
use crate::forecast::{
    batch_gradient, constant_velocity_sample, fit, FitOptions, ForecastLossConfig, ForecastSample, MAX_HISTORY,
};
use crate::nn::{Adam, Module};
use crate::topo::{score_backward, PolicyParams};
use crate::train::loss::{anneal_weight, nav_loss, total_loss, LossBreakdown, LossComponents};
use crate::train::penalty::{expected_social_penalty, SocialConfig};
use crate::world::Episode;

/// Supervised forecaster pre-training on synthetic constant-velocity walkers,
/// run before the policy sees any forecast.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForecasterWarmup {
    pub tracks: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub final_lr: f64,
    pub noise: f64,
}

impl Default for ForecasterWarmup {
    fn default() -> Self {
        Self { tracks: 120, epochs: 40, batch_size: 10, lr: 1e-2, final_lr: 1e-3, noise: 0.02 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub policy_lr: f64,
    pub forecaster_lr: f64,
    pub iterations: usize,
    pub social: SocialConfig,
    pub gamma1: f64,
    pub gamma2: f64,
    /// Fraction of iterations over which the forecasting weight anneals.
    pub anneal_fraction: f64,
    pub student_prob: f64,
    /// Fraction of iterations run with pure teacher forcing.
    pub warmup_fraction: f64,
    pub seed: u64,
    pub forecaster_warmup: ForecasterWarmup,
    /// Agent settings; `agent.goal_radius` is the success threshold.
    pub agent: AgentConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            policy_lr: 1e-3,
            forecaster_lr: 1e-4,
            iterations: 300,
            social: SocialConfig::default(),
            gamma1: 0.5,
            gamma2: 0.5,
            anneal_fraction: 0.5,
            student_prob: 0.25,
            warmup_fraction: 0.2,
            seed: 0,
            forecaster_warmup: ForecasterWarmup::default(),
            agent: AgentConfig::default(),
        }
    }
}

impl TrainConfig {
    /// Learning rates may be zero (frozen parameters) but not negative.
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |msg: String| Err(TrainError::InvalidConfig(msg));
        for (name, v) in [("policy_lr", self.policy_lr), ("forecaster_lr", self.forecaster_lr)] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be a finite nonnegative rate, got {v}"));
            }
        }
        let s = &self.social;
        for (name, v) in [("lambda_c", s.lambda_c), ("lambda_p", s.lambda_p), ("delta", s.delta)] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be finite and nonnegative, got {v}"));
            }
        }
        if !(s.eps_p > 0.0 && s.r_s > s.eps_p.sqrt()) {
            return bad(format!("need r_s > sqrt(eps_p) > 0, got r_s {} and eps_p {}", s.r_s, s.eps_p));
        }
        if !(self.agent.goal_radius > 0.0) {
            return bad("goal radius must be positive".into());
        }
        for (name, v) in [
            ("student_prob", self.student_prob),
            ("warmup_fraction", self.warmup_fraction),
            ("anneal_fraction", self.anneal_fraction),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} must lie in [0, 1], got {v}"));
            }
        }
        if !(self.gamma1 >= 0.0 && self.gamma2 >= 0.0) {
            return bad("gamma weights must be nonnegative".into());
        }
        Ok(())
    }

    pub fn anneal_iterations(&self) -> usize {
        (self.anneal_fraction * self.iterations as f64).round() as usize
    }

    pub fn warmup_iterations(&self) -> usize {
        (self.warmup_fraction * self.iterations as f64).round() as usize
    }

    fn forecast_loss(&self) -> ForecastLossConfig {
        ForecastLossConfig { gamma1: self.gamma1, gamma2: self.gamma2, ..ForecastLossConfig::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub iteration: usize,
    pub episode: usize,
    pub decisions: usize,
    pub loss: LossBreakdown,
}

pub const CURVE_HEADER: &str = "iteration,nav,pose,traj,coll,prox,total";

impl CurveRow {
    pub fn csv_line(&self) -> String {
        let l = &self.loss;
        format!("{},{},{},{},{},{},{}", self.iteration, l.nav, l.pose, l.traj, l.coll, l.prox, l.total)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: AgentParams,
    pub curves: Vec<CurveRow>,
}

/// Policy-side losses and logit gradient for one decision. Returns
/// `(nav, coll, prox)`.
pub fn decision_objective(d: &DecisionRecord, social: &SocialConfig, d_logits: &mut Vec<f64>) -> (f64, f64, f64) {
    let probs = &d.trace.probs;
    d_logits.clear();
    d_logits.resize(probs.len(), 0.0);
    let mut nav = 0.0;
    if let Some(e) = d.expert {
        nav = nav_loss(probs, e);
        for (k, g) in d_logits.iter_mut().enumerate() {
            *g += probs[k] - if k == e { 1.0 } else { 0.0 };
        }
    }
    let sp = expected_social_penalty(probs, d.agent, d.heading, &d.targets, &d.forecasts, social);
    for (g, s) in d_logits.iter_mut().zip(&sp.d_logits) {
        *g += s;
    }
    (nav, sp.coll, sp.prox)
}

/// Pre-trains the forecaster on synthetic walkers. Skipped when the warmup
/// has no epochs or a zero rate.
pub fn warmup_forecaster(params: &mut AgentParams, cfg: &TrainConfig) -> Result<(), TrainError> {
    let w = &cfg.forecaster_warmup;
    if w.epochs == 0 || w.tracks == 0 || w.lr == 0.0 {
        return Ok(());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_f00d);
    let samples: Vec<ForecastSample> =
        (0..w.tracks).map(|_| constant_velocity_sample(&mut rng, MAX_HISTORY, cfg.agent.dt, w.noise)).collect();
    let opts =
        FitOptions { epochs: w.epochs, batch_size: w.batch_size, lr: w.lr, final_lr: w.final_lr, seed: cfg.seed };
    fit(&mut params.forecaster, &samples, &opts, &cfg.forecast_loss())?;
    Ok(())
}

fn episode_seed(run: u64, iteration: usize) -> u64 {
    run.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(iteration as u64)
}

/// Trains policy and forecaster from `init`. Deterministic in the config.
pub fn train(cfg: &TrainConfig, episodes: &[Episode], init: AgentParams) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    if episodes.is_empty() {
        return Err(TrainError::NoEpisodes);
    }
    let mut params = init;
    warmup_forecaster(&mut params, cfg)?;
    let mut policy_opt = Adam::new(&params.policy);
    let mut forecast_opt = Adam::new(&params.forecaster);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = Vec::new();
    let t_anneal = cfg.anneal_iterations();
    let warmup = cfg.warmup_iterations();
    let fcfg = cfg.forecast_loss();
    let mut curves = Vec::with_capacity(cfg.iterations);
    let mut d_logits = Vec::new();

    for it in 0..cfg.iterations {
        if order.is_empty() {
            order = (0..episodes.len()).collect();
            order.shuffle(&mut rng);
            order.reverse();
        }
        let idx = order.pop().expect("refilled above");
        let mode = if it < warmup { ActionMode::Expert } else { ActionMode::Mixed(cfg.student_prob) };
        let (_, decisions) = run_episode(&episodes[idx], &params, &cfg.agent, mode, episode_seed(cfg.seed, it), true);

        let mut grad: PolicyParams = params.policy.zeros_like();
        let (mut nav, mut coll, mut prox) = (0.0, 0.0, 0.0);
        for d in &decisions {
            let (n, c, p) = decision_objective(d, &cfg.social, &mut d_logits);
            nav += n;
            coll += c;
            prox += p;
            score_backward(&d.trace, &d_logits, &params.policy, &mut grad);
        }
        let count = decisions.len().max(1) as f64;
        grad.scale(1.0 / count);

        let samples: Vec<ForecastSample> = decisions.iter().flat_map(|d| d.samples.iter().cloned()).collect();
        let mut forecast_update = None;
        let (mut traj, mut pose) = (0.0, 0.0);
        if !samples.is_empty() {
            let (t, p, g) = batch_gradient(&params.forecaster, &samples, &fcfg)?;
            traj = t;
            pose = p;
            forecast_update = Some(g);
        }
        let loss = total_loss(
            LossComponents { nav: nav / count, pose, traj, coll: coll / count, prox: prox / count },
            it,
            t_anneal,
        );
        let grads_finite = grad.all_finite() && forecast_update.as_ref().map_or(true, |g| g.all_finite());
        if !loss.is_finite() || !grads_finite {
            return Err(TrainError::NonFiniteLoss {
                iteration: it,
                detail: format!("episode {} loss {loss:?} finite gradients {grads_finite}", episodes[idx].id),
            });
        }
        policy_opt.step(&mut params.policy, &grad, cfg.policy_lr);
        if let Some(g) = forecast_update {
            forecast_opt.step(&mut params.forecaster, &g, cfg.forecaster_lr * anneal_weight(it, t_anneal));
        }
        curves.push(CurveRow { iteration: it, episode: idx, decisions: decisions.len(), loss });
    }
    Ok(TrainOutcome { params, curves })
}

pub fn curves_csv(curves: &[CurveRow], header_comment: &str) -> String {
    let mut out = String::new();
    if !header_comment.is_empty() {
        out.push_str(&format!("# {header_comment}\n"));
    }
    out.push_str(CURVE_HEADER);
    out.push('\n');
    for row in curves {
        out.push_str(&row.csv_line());
        out.push('\n');
    }
    out
}
