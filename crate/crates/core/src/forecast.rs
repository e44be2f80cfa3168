//! Trajectory and pose forecasters: LSTM encoder-decoders trained by
//! backpropagation through time, with a finite-difference gradient oracle.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::ForecastError;
use crate::geometry::Vec2;
use crate::nn::{
    finite_difference_error, lstm_backward, lstm_forward, matvec_acc, matvec_t_acc, outer_acc, probe_indices, Adam,
    LstmCache, LstmParams, Module, Tensor,
};
use crate::perception::{CameraIntrinsics, PixelKeypoint, Track};
use crate::train::LossBreakdown;
use crate::world::pedestrian::NUM_KEYPOINTS;

pub const HIDDEN: usize = 64;
pub const HORIZON: usize = 3;
pub const MAX_HISTORY: usize = 6;
pub const MIN_HISTORY: usize = 3;
pub const TRAJ_DIM: usize = 2;
pub const POSE_DIM: usize = NUM_KEYPOINTS * 3;
pub const GEO_DIM: usize = 2 * HIDDEN;

/// Encoder final hiddens of the trajectory and pose branches, concatenated.
pub type GeoFeature = Vec<f64>;

/// One person's observed window in agent-centric meters, with keypoints
/// as (u / width, v / height, confidence).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackHistory {
    pub positions: Vec<Vec2>,
    pub keypoints: Vec<Vec<[f64; 3]>>,
    pub dt: f64,
}

impl TrackHistory {
    pub fn new(positions: Vec<Vec2>, keypoints: Vec<Vec<[f64; 3]>>, dt: f64) -> Result<Self, ForecastError> {
        if positions.len() < MIN_HISTORY {
            return Err(ForecastError::TrackTooShort(positions.len()));
        }
        if positions.len() != keypoints.len() {
            return Err(ForecastError::ShapeMismatch(format!(
                "{} positions vs {} keypoint frames",
                positions.len(),
                keypoints.len()
            )));
        }
        if let Some(k) = keypoints.iter().find(|k| k.len() != NUM_KEYPOINTS) {
            return Err(ForecastError::ShapeMismatch(format!(
                "{} keypoints per frame, expected {NUM_KEYPOINTS}",
                k.len()
            )));
        }
        let finite = positions.iter().all(|p| p.is_finite())
            && keypoints.iter().flatten().flatten().all(|x| x.is_finite())
            && dt.is_finite()
            && dt > 0.0;
        if !finite {
            return Err(ForecastError::ShapeMismatch("non-finite history".into()));
        }
        let skip = positions.len().saturating_sub(MAX_HISTORY);
        Ok(Self { positions: positions[skip..].to_vec(), keypoints: keypoints[skip..].to_vec(), dt })
    }

    pub fn from_track(track: &Track, intr: &CameraIntrinsics, dt: f64) -> Result<Self, ForecastError> {
        let positions = track.frames.iter().map(|f| f.position).collect();
        let keypoints = track.frames.iter().map(|f| normalize_keypoints(&f.keypoints, intr)).collect();
        Self::new(positions, keypoints, dt)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn last_position(&self) -> Vec2 {
        *self.positions.last().expect("history is non-empty")
    }

    pub fn last_velocity(&self) -> Vec2 {
        let n = self.positions.len();
        (self.positions[n - 1] - self.positions[n - 2]) / self.dt
    }
}

pub fn normalize_keypoints(kps: &[PixelKeypoint], intr: &CameraIntrinsics) -> Vec<[f64; 3]> {
    kps.iter().map(|k| [k.u / intr.width, k.v / intr.height, k.confidence]).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forecast {
    pub positions: Vec<Vec2>,
    pub velocities: Vec<Vec2>,
    pub keypoints: Vec<Vec<[f64; 3]>>,
}

/// Encoder, autoregressive decoder and linear output head for one branch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeqModel {
    pub encoder: LstmParams,
    pub decoder: LstmParams,
    pub head_w: Tensor,
    pub head_b: Tensor,
}

impl SeqModel {
    pub fn init<R: Rng>(prefix: &str, dim: usize, rng: &mut R) -> Self {
        let s = 1.0 / (HIDDEN as f64).sqrt();
        Self {
            encoder: LstmParams::init(&format!("{prefix}.encoder"), dim, HIDDEN, rng),
            decoder: LstmParams::init(&format!("{prefix}.decoder"), dim, HIDDEN, rng),
            head_w: Tensor::uniform(&format!("{prefix}.head_w"), &[dim, HIDDEN], s, rng),
            head_b: Tensor::zeros(&format!("{prefix}.head_b"), &[dim]),
        }
    }

    pub fn dim(&self) -> usize {
        self.head_b.len()
    }

    pub fn zero_head(&mut self) {
        self.head_w.data.iter_mut().for_each(|x| *x = 0.0);
        self.head_b.data.iter_mut().for_each(|x| *x = 0.0);
    }
}

impl Module for SeqModel {
    fn tensors(&self) -> Vec<&Tensor> {
        let mut v = self.encoder.tensors();
        v.extend(self.decoder.tensors());
        v.push(&self.head_w);
        v.push(&self.head_b);
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v = self.encoder.tensors_mut();
        v.extend(self.decoder.tensors_mut());
        v.push(&mut self.head_w);
        v.push(&mut self.head_b);
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecasterParams {
    pub traj: SeqModel,
    pub pose: SeqModel,
}

impl ForecasterParams {
    pub fn init(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self { traj: SeqModel::init("traj", TRAJ_DIM, &mut rng), pose: SeqModel::init("pose", POSE_DIM, &mut rng) }
    }
}

impl Module for ForecasterParams {
    fn tensors(&self) -> Vec<&Tensor> {
        let mut v = self.traj.tensors();
        v.extend(self.pose.tensors());
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v = self.traj.tensors_mut();
        v.extend(self.pose.tensors_mut());
        v
    }
}

/// What the decoder consumes at the next step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Feed {
    /// The head output itself (trajectory: a velocity).
    Output,
    /// The accumulated state (pose: the keypoint frame).
    State,
}

struct BranchTrace {
    enc: Vec<LstmCache>,
    enc_h: Vec<f64>,
    dec: Vec<LstmCache>,
    dec_h: Vec<Vec<f64>>,
    outs: Vec<Vec<f64>>,
    states: Vec<Vec<f64>>,
}

/// `state_s = state_{s-1} + scale * out_s`, seeded with `base`.
fn branch_forward(
    m: &SeqModel,
    inputs: &[Vec<f64>],
    seed: &[f64],
    base: &[f64],
    scale: f64,
    feed: Feed,
) -> BranchTrace {
    let mut h = vec![0.0; HIDDEN];
    let mut c = vec![0.0; HIDDEN];
    let mut enc = Vec::with_capacity(inputs.len());
    for x in inputs {
        let (h2, c2, cache) = lstm_forward(x, &h, &c, &m.encoder);
        enc.push(cache);
        h = h2;
        c = c2;
    }
    let enc_h = h.clone();
    let dim = m.dim();
    let mut input = seed.to_vec();
    let mut state = base.to_vec();
    let mut trace =
        BranchTrace { enc, enc_h, dec: Vec::new(), dec_h: Vec::new(), outs: Vec::new(), states: Vec::new() };
    for _ in 0..HORIZON {
        let (h2, c2, cache) = lstm_forward(&input, &h, &c, &m.decoder);
        let mut out = m.head_b.data.clone();
        matvec_acc(&m.head_w.data, &h2, &mut out);
        for k in 0..dim {
            state[k] += scale * out[k];
        }
        input = match feed {
            Feed::Output => out.clone(),
            Feed::State => state.clone(),
        };
        trace.dec.push(cache);
        trace.dec_h.push(h2.clone());
        trace.outs.push(out);
        trace.states.push(state.clone());
        h = h2;
        c = c2;
    }
    trace
}

/// Backpropagates direct loss gradients on states and outputs through the
/// decoder and encoder.
fn branch_backward(
    m: &SeqModel,
    trace: &BranchTrace,
    d_states: &[Vec<f64>],
    d_outs: &[Vec<f64>],
    scale: f64,
    feed: Feed,
    grad: &mut SeqModel,
) {
    let dim = m.dim();
    let mut d_state_carry = vec![0.0; dim];
    let mut d_input_next = vec![0.0; dim];
    let mut dh = vec![0.0; HIDDEN];
    let mut dc = vec![0.0; HIDDEN];
    for s in (0..HORIZON).rev() {
        let mut d_state = d_states[s].clone();
        for k in 0..dim {
            d_state[k] += d_state_carry[k];
            if feed == Feed::State {
                d_state[k] += d_input_next[k];
            }
        }
        let mut d_out: Vec<f64> = (0..dim).map(|k| d_outs[s][k] + scale * d_state[k]).collect();
        if feed == Feed::Output {
            for k in 0..dim {
                d_out[k] += d_input_next[k];
            }
        }
        d_state_carry = d_state;
        outer_acc(&mut grad.head_w.data, &d_out, &trace.dec_h[s]);
        for k in 0..dim {
            grad.head_b.data[k] += d_out[k];
        }
        matvec_t_acc(&m.head_w.data, &d_out, &mut dh);
        let (dx, dh_prev, dc_prev) = lstm_backward(&trace.dec[s], &dh, &dc, &m.decoder, &mut grad.decoder);
        d_input_next = dx;
        dh = dh_prev;
        dc = dc_prev;
    }
    for cache in trace.enc.iter().rev() {
        let (_, dh_prev, dc_prev) = lstm_backward(cache, &dh, &dc, &m.encoder, &mut grad.encoder);
        dh = dh_prev;
        dc = dc_prev;
    }
}

fn traj_inputs(track: &TrackHistory) -> (Vec<Vec<f64>>, Vec<f64>, Vec<f64>) {
    let last = track.last_position();
    let inputs = track.positions.iter().map(|p| vec![p.x - last.x, p.y - last.y]).collect();
    let v = track.last_velocity();
    (inputs, vec![v.x, v.y], vec![last.x, last.y])
}

fn pose_inputs(track: &TrackHistory) -> (Vec<Vec<f64>>, Vec<f64>, Vec<f64>) {
    let inputs: Vec<Vec<f64>> = track.keypoints.iter().map(|f| f.iter().flatten().copied().collect()).collect();
    let last = inputs.last().expect("history is non-empty").clone();
    (inputs, last.clone(), last)
}

fn run_traj(m: &SeqModel, track: &TrackHistory) -> BranchTrace {
    let (inputs, seed, base) = traj_inputs(track);
    branch_forward(m, &inputs, &seed, &base, track.dt, Feed::Output)
}

fn run_pose(m: &SeqModel, track: &TrackHistory) -> BranchTrace {
    let (inputs, seed, base) = pose_inputs(track);
    branch_forward(m, &inputs, &seed, &base, 1.0, Feed::State)
}

fn unflatten_frame(v: &[f64]) -> Vec<[f64; 3]> {
    v.chunks(3).map(|c| [c[0], c[1], c[2]]).collect()
}

/// Three-step forecast plus the future-oriented feature. Deterministic.
pub fn forecast_track(
    track: &TrackHistory,
    params: &ForecasterParams,
) -> Result<(Forecast, GeoFeature), ForecastError> {
    if track.len() < MIN_HISTORY {
        return Err(ForecastError::TrackTooShort(track.len()));
    }
    let t = run_traj(&params.traj, track);
    let p = run_pose(&params.pose, track);
    let forecast = Forecast {
        positions: t.states.iter().map(|s| Vec2::new(s[0], s[1])).collect(),
        velocities: t.outs.iter().map(|o| Vec2::new(o[0], o[1])).collect(),
        keypoints: p.states.iter().map(|s| unflatten_frame(s)).collect(),
    };
    let mut geo = t.enc_h;
    geo.extend(p.enc_h);
    Ok((forecast, geo))
}

/// Encoder-only feature, used when the decoder branch is ablated away.
pub fn encode_track(track: &TrackHistory, params: &ForecasterParams) -> Result<GeoFeature, ForecastError> {
    if track.len() < MIN_HISTORY {
        return Err(ForecastError::TrackTooShort(track.len()));
    }
    let (ti, _, _) = traj_inputs(track);
    let (pi, _, _) = pose_inputs(track);
    let enc = |m: &LstmParams, inputs: &[Vec<f64>]| {
        let mut h = vec![0.0; HIDDEN];
        let mut c = vec![0.0; HIDDEN];
        for x in inputs {
            let (h2, c2, _) = lstm_forward(x, &h, &c, m);
            h = h2;
            c = c2;
        }
        h
    };
    let mut geo = enc(&params.traj.encoder, &ti);
    geo.extend(enc(&params.pose.encoder, &pi));
    Ok(geo)
}

/// Mean over keypoint terms of squared coordinate error plus `gamma1` times
/// squared confidence error.
pub fn pose_loss(pred: &[[f64; 3]], gt: &[[f64; 3]], gamma1: f64) -> Result<f64, ForecastError> {
    if pred.len() != gt.len() || pred.is_empty() {
        return Err(ForecastError::ShapeMismatch(format!(
            "{} predicted vs {} ground-truth keypoints",
            pred.len(),
            gt.len()
        )));
    }
    let sum: f64 = pred
        .iter()
        .zip(gt)
        .map(|(p, g)| {
            let du = p[0] - g[0];
            let dv = p[1] - g[1];
            let dconf = p[2] - g[2];
            du * du + dv * dv + gamma1 * dconf * dconf
        })
        .sum();
    Ok(sum / pred.len() as f64)
}

/// Mean over the horizon of squared position error plus `gamma2` times
/// squared velocity error.
pub fn traj_loss(
    pred_pos: &[Vec2],
    pred_vel: &[Vec2],
    gt_pos: &[Vec2],
    gt_vel: &[Vec2],
    gamma2: f64,
) -> Result<f64, ForecastError> {
    let t = pred_pos.len();
    if t == 0 || pred_vel.len() != t || gt_pos.len() != t || gt_vel.len() != t {
        return Err(ForecastError::ShapeMismatch(format!(
            "horizons {}/{} predicted vs {}/{} ground truth",
            t,
            pred_vel.len(),
            gt_pos.len(),
            gt_vel.len()
        )));
    }
    let sum: f64 =
        (0..t).map(|k| (pred_pos[k] - gt_pos[k]).norm_sq() + gamma2 * (pred_vel[k] - gt_vel[k]).norm_sq()).sum();
    Ok(sum / t as f64)
}

/// Backward differences anchored at the last observed position.
pub fn gt_velocities(last_observed: Vec2, future: &[Vec2], dt: f64) -> Vec<Vec2> {
    let mut prev = last_observed;
    future
        .iter()
        .map(|&p| {
            let v = (p - prev) / dt;
            prev = p;
            v
        })
        .collect()
}

/// Average displacement error over the horizon.
pub fn ade(pred: &[Vec2], gt: &[Vec2]) -> f64 {
    pred.iter().zip(gt).map(|(a, b)| a.distance(*b)).sum::<f64>() / pred.len().max(1) as f64
}

/// A history with its ground-truth future.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastSample {
    pub history: TrackHistory,
    pub future_positions: Vec<Vec2>,
    pub future_keypoints: Vec<Vec<[f64; 3]>>,
}

impl ForecastSample {
    pub fn validate(&self) -> Result<(), ForecastError> {
        if self.future_positions.len() != HORIZON || self.future_keypoints.len() != HORIZON {
            return Err(ForecastError::ShapeMismatch(format!("future horizon must be {HORIZON}")));
        }
        if self.future_keypoints.iter().any(|f| f.len() != NUM_KEYPOINTS) {
            return Err(ForecastError::ShapeMismatch(format!("future frames need {NUM_KEYPOINTS} keypoints")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForecastLossConfig {
    pub gamma1: f64,
    pub gamma2: f64,
    /// Multipliers on the two branch losses; a zero weight skips the branch.
    pub traj_weight: f64,
    pub pose_weight: f64,
}

impl Default for ForecastLossConfig {
    fn default() -> Self {
        Self { gamma1: 0.5, gamma2: 0.5, traj_weight: 1.0, pose_weight: 1.0 }
    }
}

/// Mean batch losses `(traj, pose)` and the gradient of
/// `traj_weight * traj + pose_weight * pose`.
pub fn batch_gradient(
    params: &ForecasterParams,
    batch: &[ForecastSample],
    cfg: &ForecastLossConfig,
) -> Result<(f64, f64, ForecasterParams), ForecastError> {
    if batch.is_empty() {
        return Err(ForecastError::EmptyBatch);
    }
    let n = batch.len() as f64;
    let mut grad = params.zeros_like();
    let (mut traj_sum, mut pose_sum) = (0.0, 0.0);
    for sample in batch {
        sample.validate()?;
        let h = &sample.history;
        if cfg.traj_weight != 0.0 {
            let tr = run_traj(&params.traj, h);
            let pred_pos: Vec<Vec2> = tr.states.iter().map(|s| Vec2::new(s[0], s[1])).collect();
            let pred_vel: Vec<Vec2> = tr.outs.iter().map(|o| Vec2::new(o[0], o[1])).collect();
            let gt_vel = gt_velocities(h.last_position(), &sample.future_positions, h.dt);
            traj_sum += traj_loss(&pred_pos, &pred_vel, &sample.future_positions, &gt_vel, cfg.gamma2)?;
            let k = cfg.traj_weight * 2.0 / (HORIZON as f64 * n);
            let d_states: Vec<Vec<f64>> = (0..HORIZON)
                .map(|s| {
                    let e = pred_pos[s] - sample.future_positions[s];
                    vec![k * e.x, k * e.y]
                })
                .collect();
            let d_outs: Vec<Vec<f64>> = (0..HORIZON)
                .map(|s| {
                    let e = pred_vel[s] - gt_vel[s];
                    vec![k * cfg.gamma2 * e.x, k * cfg.gamma2 * e.y]
                })
                .collect();
            branch_backward(&params.traj, &tr, &d_states, &d_outs, h.dt, Feed::Output, &mut grad.traj);
        }
        if cfg.pose_weight != 0.0 {
            let pr = run_pose(&params.pose, h);
            let gt: Vec<[f64; 3]> = sample.future_keypoints.iter().flatten().copied().collect();
            let pred: Vec<[f64; 3]> = pr.states.iter().flat_map(|s| unflatten_frame(s)).collect();
            pose_sum += pose_loss(&pred, &gt, cfg.gamma1)?;
            let k = cfg.pose_weight * 2.0 / (gt.len() as f64 * n);
            let d_states: Vec<Vec<f64>> = (0..HORIZON)
                .map(|s| {
                    let mut d = vec![0.0; POSE_DIM];
                    for j in 0..NUM_KEYPOINTS {
                        let (p, g) = (pred[s * NUM_KEYPOINTS + j], gt[s * NUM_KEYPOINTS + j]);
                        d[3 * j] = k * (p[0] - g[0]);
                        d[3 * j + 1] = k * (p[1] - g[1]);
                        d[3 * j + 2] = k * cfg.gamma1 * (p[2] - g[2]);
                    }
                    d
                })
                .collect();
            let d_outs = vec![vec![0.0; POSE_DIM]; HORIZON];
            branch_backward(&params.pose, &pr, &d_states, &d_outs, 1.0, Feed::State, &mut grad.pose);
        }
    }
    Ok((traj_sum / n, pose_sum / n, grad))
}

/// Weighted batch objective, the scalar whose gradient `batch_gradient` returns.
pub fn batch_objective(
    params: &ForecasterParams,
    batch: &[ForecastSample],
    cfg: &ForecastLossConfig,
) -> Result<f64, ForecastError> {
    if batch.is_empty() {
        return Err(ForecastError::EmptyBatch);
    }
    let mut total = 0.0;
    for sample in batch {
        sample.validate()?;
        let h = &sample.history;
        let (f, _) = forecast_track(h, params)?;
        if cfg.traj_weight != 0.0 {
            let gt_vel = gt_velocities(h.last_position(), &sample.future_positions, h.dt);
            total += cfg.traj_weight
                * traj_loss(&f.positions, &f.velocities, &sample.future_positions, &gt_vel, cfg.gamma2)?;
        }
        if cfg.pose_weight != 0.0 {
            let pred: Vec<[f64; 3]> = f.keypoints.iter().flatten().copied().collect();
            let gt: Vec<[f64; 3]> = sample.future_keypoints.iter().flatten().copied().collect();
            total += cfg.pose_weight * pose_loss(&pred, &gt, cfg.gamma1)?;
        }
    }
    Ok(total / batch.len() as f64)
}

/// One optimizer step on the batch. Returns the pre-update losses in the
/// `traj`/`pose` fields. A non-finite gradient leaves everything unchanged.
pub fn train_step(
    batch: &[ForecastSample],
    params: &mut ForecasterParams,
    opt: &mut Adam,
    lr: f64,
    cfg: &ForecastLossConfig,
) -> Result<LossBreakdown, ForecastError> {
    let (traj, pose, grad) = batch_gradient(params, batch, cfg)?;
    if !grad.all_finite() || !traj.is_finite() || !pose.is_finite() {
        return Err(ForecastError::NonFiniteGradient);
    }
    opt.step(params, &grad, lr);
    Ok(LossBreakdown::forecast_only(traj, pose))
}

/// Mini-batch training over shuffled epochs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Learning rate at the last epoch; decays geometrically from `lr`.
    pub final_lr: f64,
    pub seed: u64,
}

pub fn fit(
    params: &mut ForecasterParams,
    samples: &[ForecastSample],
    opts: &FitOptions,
    cfg: &ForecastLossConfig,
) -> Result<Vec<LossBreakdown>, ForecastError> {
    if samples.is_empty() {
        return Err(ForecastError::EmptyBatch);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut opt = Adam::new(params);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut curve = Vec::with_capacity(opts.epochs);
    let decay = if opts.epochs > 1 { (opts.final_lr / opts.lr).powf(1.0 / (opts.epochs - 1) as f64) } else { 1.0 };
    for epoch in 0..opts.epochs {
        let lr = opts.lr * decay.powi(epoch as i32);
        order.shuffle(&mut rng);
        let (mut traj, mut pose, mut batches) = (0.0, 0.0, 0.0);
        for chunk in order.chunks(opts.batch_size.max(1)) {
            let batch: Vec<ForecastSample> = chunk.iter().map(|&i| samples[i].clone()).collect();
            let lb = train_step(&batch, params, &mut opt, lr, cfg)?;
            traj += lb.traj;
            pose += lb.pose;
            batches += 1.0;
        }
        curve.push(LossBreakdown::forecast_only(traj / batches, pose / batches));
    }
    Ok(curve)
}

/// Optional corruption applied to the analytic gradient before comparison.
pub type GradientMutation = fn(&mut ForecasterParams);

/// Corrupts the encoder hidden-to-hidden gradients; a test fixture for the
/// gradient oracle.
pub fn corrupt_recurrent_gradient(grad: &mut ForecasterParams) {
    for m in [&mut grad.traj, &mut grad.pose] {
        for (k, g) in m.encoder.wh.data.iter_mut().enumerate() {
            *g = *g * 1.5 + 1e-3 * ((k % 7) as f64 - 3.0);
        }
    }
}

/// Central finite differences against the analytic gradient at `probes`
/// sampled parameters; returns the largest relative error.
pub fn grad_check_with(
    params: &ForecasterParams,
    batch: &[ForecastSample],
    h: f64,
    probes: usize,
    seed: u64,
    mutation: Option<GradientMutation>,
    cfg: &ForecastLossConfig,
) -> Result<f64, ForecastError> {
    let (_, _, mut grad) = batch_gradient(params, batch, cfg)?;
    if let Some(m) = mutation {
        m(&mut grad);
    }
    let objective = |p: &ForecasterParams| batch_objective(p, batch, cfg).unwrap_or(f64::NAN);
    Ok(finite_difference_error(params, &grad, &probe_indices(params, probes, seed), h, objective))
}

pub fn grad_check(params: &ForecasterParams, batch: &[ForecastSample], h: f64) -> Result<f64, ForecastError> {
    grad_check_with(params, batch, h, 20, 0, None, &ForecastLossConfig::default())
}

/// Constant-velocity walker with a static skeleton; positions optionally
/// perturbed by Gaussian noise. Futures are always noise-free.
pub fn constant_velocity_sample<R: Rng>(rng: &mut R, m: usize, dt: f64, noise: f64) -> ForecastSample {
    use rand_distr::{Distribution, Normal};
    let normal = Normal::new(0.0, noise.max(0.0)).expect("valid sigma");
    let start = Vec2::new(rng.gen_range(1.0..4.0), rng.gen_range(-2.0..2.0));
    let speed = rng.gen_range(0.0..1.5);
    let vel = Vec2::from_angle(rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI)) * speed;
    let at = |k: usize| start + vel * (k as f64 * dt);
    let jitter = |rng: &mut R| if noise > 0.0 { normal.sample(rng) } else { 0.0 };
    let positions: Vec<Vec2> = (0..m).map(|k| at(k) + Vec2::new(jitter(rng), jitter(rng))).collect();
    let frame: Vec<[f64; 3]> = (0..NUM_KEYPOINTS).map(|j| [0.5, 0.2 + 0.03 * j as f64, 1.0]).collect();
    ForecastSample {
        history: TrackHistory { positions, keypoints: vec![frame.clone(); m], dt },
        future_positions: (m..m + HORIZON).map(at).collect(),
        future_keypoints: vec![frame; HORIZON],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_batch(n: usize, seed: u64) -> Vec<ForecastSample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let mut s = constant_velocity_sample(&mut rng, 6, 0.25, 0.0);
                for f in s.history.keypoints.iter_mut().chain(s.future_keypoints.iter_mut()) {
                    for kp in f.iter_mut() {
                        kp[0] += rng.gen_range(-0.05..0.05);
                        kp[1] += rng.gen_range(-0.05..0.05);
                        kp[2] = rng.gen_range(0.0..1.0);
                    }
                }
                s
            })
            .collect()
    }

    #[test]
    fn pose_loss_examples() {
        assert_eq!(pose_loss(&[[0.3, 0.4, 1.0]], &[[0.3, 0.4, 1.0]], 0.5).unwrap(), 0.0);
        let v = pose_loss(&[[1.0, 0.0, 0.8]], &[[0.0, 0.0, 1.0]], 0.5).unwrap();
        assert!((v - 1.02).abs() < 1e-12);
        let v = pose_loss(&[[1.0, 0.0, 0.5], [0.0, 2.0, 0.5]], &[[0.0, 0.0, 0.5], [0.0, 0.0, 0.5]], 0.5).unwrap();
        assert!((v - 2.5).abs() < 1e-12);
        assert!(pose_loss(&[[0.0; 3]], &[[0.0; 3], [0.0; 3]], 0.5).is_err());
    }

    #[test]
    fn traj_loss_examples() {
        let p = [Vec2::new(0.5, 0.0)];
        let v = [Vec2::new(1.0, 0.0)];
        let z = [Vec2::new(0.0, 0.0)];
        assert!((traj_loss(&p, &v, &z, &z, 0.5).unwrap() - 0.75).abs() < 1e-12);
        let p2 = [Vec2::new(0.5, 0.0), Vec2::new(0.0, 0.5)];
        let z2 = [Vec2::new(0.0, 0.0); 2];
        assert!((traj_loss(&p2, &z2, &z2, &z2, 0.5).unwrap() - 0.25).abs() < 1e-12);
        assert!(traj_loss(&p2, &z2, &z, &z2, 0.5).is_err());
    }

    #[test]
    fn short_track_rejected() {
        let r = TrackHistory::new(vec![Vec2::new(0.0, 0.0); 2], vec![vec![[0.0; 3]; 17]; 2], 0.25);
        assert_eq!(r.unwrap_err(), ForecastError::TrackTooShort(2));
    }

    #[test]
    fn zero_head_copies_last_frame() {
        let mut p = ForecasterParams::init(1);
        p.traj.zero_head();
        p.pose.zero_head();
        let s = &sample_batch(1, 2)[0];
        let (f, geo) = forecast_track(&s.history, &p).unwrap();
        assert!(f.positions.iter().all(|&q| q == s.history.last_position()));
        assert!(f.keypoints.iter().all(|k| k == s.history.keypoints.last().unwrap()));
        assert_eq!(geo.len(), GEO_DIM);
    }

    #[test]
    fn forecast_is_deterministic() {
        let p = ForecasterParams::init(4);
        let s = &sample_batch(1, 5)[0];
        assert_eq!(forecast_track(&s.history, &p).unwrap(), forecast_track(&s.history, &p).unwrap());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let p = ForecasterParams::init(7);
        let batch = sample_batch(3, 8);
        let err = grad_check_with(&p, &batch, 1e-5, 40, 9, None, &ForecastLossConfig::default()).unwrap();
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn corrupted_gradient_is_caught() {
        let p = ForecasterParams::init(7);
        let batch = sample_batch(3, 8);
        let probes = p.tensors().len();
        // every tensor is probed once, including both encoder.wh tensors
        let err = grad_check_with(
            &p,
            &batch,
            1e-5,
            probes,
            9,
            Some(corrupt_recurrent_gradient),
            &ForecastLossConfig::default(),
        )
        .unwrap();
        assert!(err > 1e-2, "{err}");
    }

    #[test]
    fn zero_lr_leaves_params() {
        let mut p = ForecasterParams::init(3);
        let before = p.clone();
        let mut opt = Adam::new(&p);
        let batch = sample_batch(4, 1);
        train_step(&batch, &mut p, &mut opt, 0.0, &ForecastLossConfig::default()).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn empty_batch_rejected() {
        let mut p = ForecasterParams::init(3);
        let mut opt = Adam::new(&p);
        assert_eq!(
            train_step(&[], &mut p, &mut opt, 1e-3, &ForecastLossConfig::default()),
            Err(ForecastError::EmptyBatch)
        );
    }

    #[test]
    fn non_finite_gradient_aborts_step() {
        let mut p = ForecasterParams::init(3);
        let mut batch = sample_batch(1, 1);
        batch[0].future_positions[0].x = f64::NAN;
        let before = p.clone();
        let mut opt = Adam::new(&p);
        let r = train_step(&batch, &mut p, &mut opt, 1e-3, &ForecastLossConfig::default());
        assert_eq!(r, Err(ForecastError::NonFiniteGradient));
        assert_eq!(p, before);
    }

    #[test]
    fn checkpoint_round_trip() {
        let p = ForecasterParams::init(11);
        let json = serde_json::to_string(&crate::nn::Checkpoint::of("forecaster", &p)).unwrap();
        let ck: crate::nn::Checkpoint = serde_json::from_str(&json).unwrap();
        let q = ck.restore("forecaster", &ForecasterParams::init(0)).unwrap();
        assert_eq!(p, q);
        assert!(ck.restore("scorer", &p).is_err());
    }
}
