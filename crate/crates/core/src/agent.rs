//! Waypoint-level control loop: observe, pause and reason about people when
//! any are visible, score the graph, act.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::forecast::{
    encode_track, forecast_track, normalize_keypoints, ForecastSample, ForecasterParams, TrackHistory, GEO_DIM, HORIZON,
};
use crate::geometry::{Pose2, Vec2};
use crate::io::sha256_hex;
use crate::perception::{
    collect_window, observe, static_sector_feature, CameraIntrinsics, ObserveContext, StaticChannels, Track,
    WindowOptions,
};
use crate::semantic::{encode_text, interpret, InterpreterConfig, SEM_DIM};
use crate::topo::{
    assign_humans, score_forward, update_graph, HumanFeature, InstructionTokens, PolicyParams, ScoreTrace, TopoGraph,
};
use crate::train::LossBreakdown;
use crate::world::{waypoint_candidates, CollisionEvent, DistanceField, Episode, SimState, Simulator};

pub const T_MAX: usize = 50;
pub const GOAL_RADIUS: f64 = 3.0;
pub const DEFAULT_NOISE: f64 = 0.02;

/// Source of the per-person geometric feature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeoMode {
    /// Encoder hiddens of the supervised forecaster.
    Future,
    /// Encoder hiddens of a frozen, never-supervised encoder.
    Past,
    Off,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    pub t_max: usize,
    pub goal_radius: f64,
    pub window: usize,
    pub dt: f64,
    pub noise: f64,
    pub intrinsics: CameraIntrinsics,
    pub channels: StaticChannels,
    pub use_depth: bool,
    pub geo: GeoMode,
    pub semantic: bool,
    pub interpreter: InterpreterConfig,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            t_max: T_MAX,
            goal_radius: GOAL_RADIUS,
            window: crate::perception::window::DEFAULT_WINDOW,
            dt: crate::world::sim::DEFAULT_DT,
            noise: DEFAULT_NOISE,
            intrinsics: CameraIntrinsics::default(),
            channels: StaticChannels::default(),
            use_depth: true,
            geo: GeoMode::Future,
            semantic: true,
            interpreter: InterpreterConfig::default(),
        }
    }
}

/// Everything the loop reads; never written during an episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentParams {
    pub policy: PolicyParams,
    pub forecaster: ForecasterParams,
    /// Frozen encoder for [`GeoMode::Past`].
    pub past_encoder: ForecasterParams,
}

impl AgentParams {
    pub fn init(seed: u64) -> Self {
        Self {
            policy: PolicyParams::init(seed),
            forecaster: ForecasterParams::init(seed.wrapping_add(1)),
            past_encoder: ForecasterParams::init(seed.wrapping_add(2)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ActionMode {
    Greedy,
    Sample,
    Expert,
    /// Expert action, replaced by a policy sample with the given probability.
    Mixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Termination {
    Stop,
    Budget,
    Goal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub t: u64,
    pub pose: Pose2,
    /// Chosen graph node, `None` for STOP.
    pub chosen: Option<usize>,
    pub target: Option<Vec2>,
    pub candidates: usize,
    pub entropy: f64,
    pub detections: usize,
    pub tracks: usize,
    pub paused: bool,
    pub collisions: Vec<CollisionEvent>,
    pub loss: Option<LossBreakdown>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub episode_id: String,
    pub seed: u64,
    pub goal: Vec2,
    pub steps: Vec<StepRecord>,
    pub final_position: Vec2,
    pub termination: Termination,
    pub forecast_calls: usize,
    pub semantic_calls: usize,
    pub hash: String,
}

impl EpisodeLog {
    pub fn collision_count(&self) -> usize {
        self.steps.iter().map(|s| s.collisions.len()).sum()
    }

    pub fn final_distance(&self) -> f64 {
        self.final_position.distance(self.goal)
    }

    /// SHA-256 of the JSON form with an empty hash field.
    pub fn content_hash(&self) -> String {
        let mut copy = self.clone();
        copy.hash.clear();
        sha256_hex(&serde_json::to_vec(&copy).expect("log serializes"))
    }

    pub fn seal(&mut self) {
        self.hash = self.content_hash();
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("log serializes")
    }
}

/// Training-side view of one decision.
pub struct DecisionRecord {
    pub step: usize,
    pub trace: ScoreTrace,
    /// Index of the expert action in the distribution, when one exists.
    pub expert: Option<usize>,
    pub agent: Vec2,
    pub heading: f64,
    pub targets: Vec<Vec2>,
    /// Forecast world positions, `HORIZON` per tracked person.
    pub forecasts: Vec<Vec<Vec2>>,
    /// Forecaster supervision from bookkeeping frames.
    pub samples: Vec<ForecastSample>,
}

/// Geodesic-greedy expert: STOP inside the goal radius, otherwise the action
/// whose position is geodesically closest to the goal.
pub fn expert_action(
    field: &DistanceField,
    agent: Vec2,
    goal: Vec2,
    targets: &[Vec2],
    goal_radius: f64,
) -> Option<usize> {
    if agent.distance(goal) < goal_radius {
        return Some(targets.len());
    }
    targets
        .iter()
        .enumerate()
        .map(|(i, &p)| (i, field.distance(p)))
        .filter(|(_, d)| d.is_finite())
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
        .map(|(i, _)| i)
}

fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&x| x > 0.0).map(|x| x * x.ln()).sum::<f64>()
}

fn sample_index<R: Rng>(p: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &x) in p.iter().enumerate() {
        acc += x;
        if u < acc {
            return i;
        }
    }
    p.len() - 1
}

fn argmax(p: &[f64]) -> usize {
    p.iter().enumerate().fold((0, f64::NEG_INFINITY), |best, (i, &x)| if x > best.1 { (i, x) } else { best }).0
}

/// Noise-free ground truth for the `HORIZON` frames after a pause, expressed
/// in the frozen agent frame.
fn bookkeeping_sample(
    ctx: &ObserveContext<'_>,
    sim: &Simulator<'_>,
    after_pause: &SimState,
    track: &Track,
    history: TrackHistory,
) -> Option<ForecastSample> {
    let truth = track.truth_id();
    let slot = ctx.episode.pedestrians.iter().position(|p| p.id == truth)?;
    let clean = ObserveContext { noise: 0.0, ..*ctx };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut positions = Vec::with_capacity(HORIZON);
    let mut keypoints = Vec::with_capacity(HORIZON);
    for k in 0..HORIZON as u64 {
        let s = sim.wait(after_pause, k);
        let det = observe(&clean, &s, &mut rng).detections().find(|d| d.truth_id == truth).cloned()?;
        positions.push(s.agent.to_agent(s.pedestrians[slot].position));
        keypoints.push(normalize_keypoints(&det.keypoints, ctx.intrinsics));
    }
    Some(ForecastSample { history, future_positions: positions, future_keypoints: keypoints })
}

/// Runs one episode. When `record` is set, per-decision traces for training
/// are returned alongside the log.
pub fn run_episode(
    episode: &Episode,
    params: &AgentParams,
    cfg: &AgentConfig,
    mode: ActionMode,
    seed: u64,
    record: bool,
) -> (EpisodeLog, Vec<DecisionRecord>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ episode.seed.rotate_left(17));
    let sim = Simulator::new(episode);
    let ctx = ObserveContext { map: &episode.map, episode, intrinsics: &cfg.intrinsics, noise: cfg.noise };
    let field = DistanceField::from_goal(&episode.map, episode.goal).ok();
    let tokens = InstructionTokens::from_text(&episode.instruction.text);
    let mut state = sim.initial_state(cfg.dt);
    let mut graph = TopoGraph::new();
    let mut steps = Vec::new();
    let mut decisions = Vec::new();
    let (mut forecast_calls, mut semantic_calls) = (0, 0);
    let mut termination = Termination::Budget;

    for step in 0..cfg.t_max {
        let here = state.agent.position();
        if here.distance(episode.goal) < cfg.goal_radius {
            termination = Termination::Goal;
            break;
        }
        let obs = observe(&ctx, &state, &mut rng);
        let candidates = waypoint_candidates(&episode.map, &state.agent);
        let features: Vec<Vec<f64>> = obs.sectors.iter().map(|s| static_sector_feature(s, cfg.channels)).collect();
        graph = update_graph(&graph, &state.agent, &candidates, &features, state.t)
            .expect("sector features have fixed size");

        let detections = obs.detection_count();
        let mut tracks = 0;
        let mut forecasts = Vec::new();
        let mut samples = Vec::new();
        let paused = detections > 0;
        if paused {
            let opts = WindowOptions { m: cfg.window, use_depth: cfg.use_depth };
            let (window, after) = collect_window(&ctx, &sim, &state, opts, &mut rng);
            let pose = state.agent;
            let mut humans = Vec::new();
            for track in &window.tracks {
                let Ok(history) = TrackHistory::from_track(track, &cfg.intrinsics, cfg.dt) else { continue };
                tracks += 1;
                let (forecast, future_geo) =
                    forecast_track(&history, &params.forecaster).expect("history is long enough");
                forecast_calls += 1;
                forecasts.push(forecast.positions.iter().map(|&p| pose.to_world(p)).collect::<Vec<_>>());
                let geo = match cfg.geo {
                    GeoMode::Future => future_geo,
                    GeoMode::Past => encode_track(&history, &params.past_encoder).expect("history is long enough"),
                    GeoMode::Off => vec![0.0; GEO_DIM],
                };
                let sem = if cfg.semantic {
                    semantic_calls += 1;
                    encode_text(&interpret(track, track.truth_label(), cfg.dt, &cfg.interpreter).text)
                } else {
                    vec![0.0; SEM_DIM]
                };
                humans.push(HumanFeature { id: track.id, position: pose.to_world(track.last().position), geo, sem });
                if record {
                    samples.extend(bookkeeping_sample(&ctx, &sim, &after, track, history));
                }
            }
            graph = assign_humans(&graph, &humans).expect("feature sizes are fixed");
            state = after;
        }

        let trace = score_forward(&graph, &tokens, &params.policy);
        let targets: Vec<Vec2> = trace.actions.iter().map(|&id| graph.node(id).position).collect();
        let here = state.agent.position();
        let expert = field.as_ref().and_then(|f| expert_action(f, here, episode.goal, &targets, cfg.goal_radius));
        let stop = trace.stop_index();
        let choice = match mode {
            ActionMode::Greedy => argmax(&trace.probs),
            ActionMode::Sample => sample_index(&trace.probs, &mut rng),
            ActionMode::Expert => expert.unwrap_or(stop),
            ActionMode::Mixed(p) => {
                if rng.gen::<f64>() < p {
                    sample_index(&trace.probs, &mut rng)
                } else {
                    expert.unwrap_or(stop)
                }
            }
        };
        let mut record_step = StepRecord {
            step,
            t: state.t,
            pose: state.agent,
            chosen: None,
            target: None,
            candidates: targets.len(),
            entropy: entropy(&trace.probs),
            detections,
            tracks,
            paused,
            collisions: Vec::new(),
            loss: None,
        };
        let stopping = choice == stop;
        if !stopping {
            let target = targets[choice];
            let (next, events) = sim.step_agent(&state, target);
            record_step.chosen = Some(trace.actions[choice]);
            record_step.target = Some(target);
            record_step.collisions = events;
            state = next;
        }
        steps.push(record_step);
        if record {
            decisions.push(DecisionRecord {
                step,
                trace,
                expert,
                agent: here,
                heading: state.agent.heading,
                targets,
                forecasts,
                samples,
            });
        }
        if stopping {
            termination = Termination::Stop;
            break;
        }
    }
    if termination == Termination::Budget && state.agent.position().distance(episode.goal) < cfg.goal_radius {
        termination = Termination::Goal;
    }
    let mut log = EpisodeLog {
        episode_id: episode.id.clone(),
        seed,
        goal: episode.goal,
        steps,
        final_position: state.agent.position(),
        termination,
        forecast_calls,
        semantic_calls,
        hash: String::new(),
    };
    log.seal();
    (log, decisions)
}

/// Evaluation entry point: one log, no training traces.
pub fn navigate_episode(
    episode: &Episode,
    params: &AgentParams,
    cfg: &AgentConfig,
    mode: ActionMode,
    seed: u64,
) -> EpisodeLog {
    run_episode(episode, params, cfg, mode, seed, false).0
}
