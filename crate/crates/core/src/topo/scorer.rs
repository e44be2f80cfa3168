//! Human-aware fusion and candidate scoring, with analytic gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::TopoError;
use crate::nn::{axpy, dot, matvec, matvec_acc, matvec_t_acc, outer_acc, softmax, Module, Tensor};
use crate::perception::STATIC_DIM;
use crate::semantic::{fnv1a64, tokenize};
use crate::topo::graph::{human_summary, HumanFeature, TopoGraph, FUSED_DIM, SUMMARY_DIM};

pub const VOCAB: usize = 1024;
pub const MAX_TOKENS: usize = 40;
pub const FUSE_IN: usize = STATIC_DIM + SUMMARY_DIM;
pub const FUSE_HIDDEN: usize = 128;
pub const DEFAULT_ALPHA: f64 = 0.5;
/// Cap on graph distances so unreachable nodes get a finite bias.
const MAX_GRAPH_DISTANCE: f64 = 1e3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstructionTokens {
    pub ids: Vec<usize>,
}

impl InstructionTokens {
    pub fn from_text(text: &str) -> Self {
        Self {
            ids: tokenize(text)
                .iter()
                .take(MAX_TOKENS)
                .map(|t| (fnv1a64(t.as_bytes()) % VOCAB as u64) as usize)
                .collect(),
        }
    }
}

/// Fusion perceptron plus scorer weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub fuse_w1: Tensor,
    pub fuse_b1: Tensor,
    pub fuse_w2: Tensor,
    pub fuse_b2: Tensor,
    pub wq: Tensor,
    pub wk: Tensor,
    pub wv: Tensor,
    pub alpha: Tensor,
    pub ffn_w1: Tensor,
    pub ffn_b1: Tensor,
    pub ffn_w2: Tensor,
    pub ffn_b2: Tensor,
    pub stop: Tensor,
    pub tokens: Tensor,
}

impl PolicyParams {
    pub fn init(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = FUSED_DIM;
        let s = |n: usize| 1.0 / (n as f64).sqrt();
        Self {
            fuse_w1: Tensor::uniform("fuse.w1", &[FUSE_HIDDEN, FUSE_IN], s(FUSE_IN), &mut rng),
            fuse_b1: Tensor::zeros("fuse.b1", &[FUSE_HIDDEN]),
            fuse_w2: Tensor::uniform("fuse.w2", &[d, FUSE_HIDDEN], s(FUSE_HIDDEN), &mut rng),
            fuse_b2: Tensor::zeros("fuse.b2", &[d]),
            wq: Tensor::uniform("attn.wq", &[d, d], s(d), &mut rng),
            wk: Tensor::uniform("attn.wk", &[d, d], s(d), &mut rng),
            wv: Tensor::uniform("attn.wv", &[d, d], s(d), &mut rng),
            alpha: Tensor { name: "gasa.alpha".into(), shape: vec![1], data: vec![DEFAULT_ALPHA] },
            ffn_w1: Tensor::uniform("ffn.w1", &[d, d], s(d), &mut rng),
            ffn_b1: Tensor::zeros("ffn.b1", &[d]),
            ffn_w2: Tensor::uniform("ffn.w2", &[1, d], s(d), &mut rng),
            ffn_b2: Tensor::zeros("ffn.b2", &[1]),
            stop: Tensor::uniform("stop", &[d], 0.1, &mut rng),
            tokens: Tensor::uniform("tokens", &[VOCAB, d], 1.0, &mut rng),
        }
    }

    pub fn zero_ffn(&mut self) {
        for t in [&mut self.ffn_w1, &mut self.ffn_b1, &mut self.ffn_w2, &mut self.ffn_b2] {
            t.data.iter_mut().for_each(|x| *x = 0.0);
        }
    }

    fn token(&self, id: usize) -> &[f64] {
        &self.tokens.data[id * FUSED_DIM..(id + 1) * FUSED_DIM]
    }
}

impl Module for PolicyParams {
    fn tensors(&self) -> Vec<&Tensor> {
        vec![
            &self.fuse_w1,
            &self.fuse_b1,
            &self.fuse_w2,
            &self.fuse_b2,
            &self.wq,
            &self.wk,
            &self.wv,
            &self.alpha,
            &self.ffn_w1,
            &self.ffn_b1,
            &self.ffn_w2,
            &self.ffn_b2,
            &self.stop,
            &self.tokens,
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        vec![
            &mut self.fuse_w1,
            &mut self.fuse_b1,
            &mut self.fuse_w2,
            &mut self.fuse_b2,
            &mut self.wq,
            &mut self.wk,
            &mut self.wv,
            &mut self.alpha,
            &mut self.ffn_w1,
            &mut self.ffn_b1,
            &mut self.ffn_w2,
            &mut self.ffn_b2,
            &mut self.stop,
            &mut self.tokens,
        ]
    }
}

struct FuseTrace {
    input: Vec<f64>,
    pre: Vec<f64>,
    hidden: Vec<f64>,
}

fn fuse_forward(static_feature: &[f64], summary: &[f64], p: &PolicyParams) -> (Vec<f64>, FuseTrace) {
    let mut input = static_feature.to_vec();
    input.extend_from_slice(summary);
    let mut pre = p.fuse_b1.data.clone();
    matvec_acc(&p.fuse_w1.data, &input, &mut pre);
    let hidden: Vec<f64> = pre.iter().map(|&x| x.max(0.0)).collect();
    let mut out = p.fuse_b2.data.clone();
    matvec_acc(&p.fuse_w2.data, &hidden, &mut out);
    (out, FuseTrace { input, pre, hidden })
}

fn fuse_backward(t: &FuseTrace, d_out: &[f64], p: &PolicyParams, g: &mut PolicyParams) {
    outer_acc(&mut g.fuse_w2.data, d_out, &t.hidden);
    axpy(&mut g.fuse_b2.data, 1.0, d_out);
    let mut dh = vec![0.0; FUSE_HIDDEN];
    matvec_t_acc(&p.fuse_w2.data, d_out, &mut dh);
    for (d, &pre) in dh.iter_mut().zip(&t.pre) {
        if pre <= 0.0 {
            *d = 0.0;
        }
    }
    outer_acc(&mut g.fuse_w1.data, &dh, &t.input);
    axpy(&mut g.fuse_b1.data, 1.0, &dh);
}

/// Two-layer perceptron on `[static ; mean(geo + sem)]`.
pub fn fuse(static_feature: &[f64], humans: &[HumanFeature], p: &PolicyParams) -> Result<Vec<f64>, TopoError> {
    if static_feature.len() != STATIC_DIM {
        return Err(TopoError::DimensionMismatch { expected: STATIC_DIM, got: static_feature.len() });
    }
    for h in humans {
        for v in [&h.geo, &h.sem] {
            if v.len() != SUMMARY_DIM {
                return Err(TopoError::DimensionMismatch { expected: SUMMARY_DIM, got: v.len() });
            }
        }
    }
    let refs: Vec<&HumanFeature> = humans.iter().collect();
    Ok(fuse_forward(static_feature, &human_summary(&refs), p).0)
}

/// Recomputes every node's fused feature from its stored inputs.
pub fn refresh_fused(graph: &mut TopoGraph, p: &PolicyParams) {
    for n in graph.nodes.iter_mut() {
        n.fused = fuse_forward(&n.static_feature, &n.human_summary, p).0;
    }
}

struct FfnTrace {
    input: Vec<f64>,
    pre: Vec<f64>,
    hidden: Vec<f64>,
}

fn ffn_forward(x: &[f64], p: &PolicyParams) -> (f64, FfnTrace) {
    let mut pre = p.ffn_b1.data.clone();
    matvec_acc(&p.ffn_w1.data, x, &mut pre);
    let hidden: Vec<f64> = pre.iter().map(|&v| v.max(0.0)).collect();
    let logit = dot(&p.ffn_w2.data, &hidden) + p.ffn_b2.data[0];
    (logit, FfnTrace { input: x.to_vec(), pre, hidden })
}

fn ffn_backward(t: &FfnTrace, d_logit: f64, p: &PolicyParams, g: &mut PolicyParams) -> Vec<f64> {
    axpy(&mut g.ffn_w2.data, d_logit, &t.hidden);
    g.ffn_b2.data[0] += d_logit;
    let dh: Vec<f64> =
        p.ffn_w2.data.iter().zip(&t.pre).map(|(&w, &pre)| if pre > 0.0 { d_logit * w } else { 0.0 }).collect();
    outer_acc(&mut g.ffn_w1.data, &dh, &t.input);
    axpy(&mut g.ffn_b1.data, 1.0, &dh);
    let mut dx = vec![0.0; t.input.len()];
    matvec_t_acc(&p.ffn_w1.data, &dh, &mut dx);
    dx
}

/// Everything the backward pass needs from one scoring call.
pub struct ScoreTrace {
    /// Action node ids in distribution order; STOP is the last entry.
    pub actions: Vec<usize>,
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
    fuse: Vec<FuseTrace>,
    fused: Vec<Vec<f64>>,
    token_ids: Vec<usize>,
    keys: Vec<Vec<f64>>,
    values: Vec<Vec<f64>>,
    queries: Vec<Vec<f64>>,
    cross: Vec<Vec<f64>>,
    x: Vec<Vec<f64>>,
    rows: Vec<usize>,
    row_dist: Vec<Vec<f64>>,
    row_attn: Vec<Vec<f64>>,
    ffn: Vec<FfnTrace>,
}

impl ScoreTrace {
    pub fn stop_index(&self) -> usize {
        self.actions.len()
    }
}

/// Distribution over the graph's action nodes followed by STOP.
pub fn score(graph: &TopoGraph, instruction: &InstructionTokens, p: &PolicyParams) -> Vec<f64> {
    score_forward(graph, instruction, p).probs
}

pub fn score_forward(graph: &TopoGraph, instruction: &InstructionTokens, p: &PolicyParams) -> ScoreTrace {
    let d = FUSED_DIM;
    let scale = 1.0 / (d as f64).sqrt();
    let n = graph.nodes.len();
    let (fused, fuse): (Vec<Vec<f64>>, Vec<FuseTrace>) =
        graph.nodes.iter().map(|node| fuse_forward(&node.static_feature, &node.human_summary, p)).unzip();

    let token_ids: Vec<usize> = instruction.ids.iter().take(MAX_TOKENS).copied().collect();
    let keys: Vec<Vec<f64>> = token_ids.iter().map(|&t| matvec(&p.wk.data, p.token(t), d)).collect();
    let values: Vec<Vec<f64>> = token_ids.iter().map(|&t| matvec(&p.wv.data, p.token(t), d)).collect();
    let mut queries = Vec::with_capacity(n);
    let mut cross = Vec::with_capacity(n);
    let mut x = Vec::with_capacity(n);
    for f in &fused {
        let q = matvec(&p.wq.data, f, d);
        let mut xi = f.clone();
        let a = if keys.is_empty() {
            Vec::new()
        } else {
            let a = softmax(&keys.iter().map(|k| dot(&q, k) * scale).collect::<Vec<_>>());
            for (w, v) in a.iter().zip(&values) {
                axpy(&mut xi, *w, v);
            }
            a
        };
        queries.push(q);
        cross.push(a);
        x.push(xi);
    }

    let current = graph.current;
    let mut rows: Vec<usize> = graph.actions.clone();
    rows.extend(current);
    let alpha = p.alpha.data[0];
    let mut row_dist = Vec::with_capacity(rows.len());
    let mut row_attn = Vec::with_capacity(rows.len());
    let mut y = Vec::with_capacity(rows.len());
    for &r in &rows {
        let dist: Vec<f64> = graph.geodesic_from(r).into_iter().map(|v| v.min(MAX_GRAPH_DISTANCE)).collect();
        let logits: Vec<f64> = (0..n).map(|j| dot(&x[r], &x[j]) * scale - alpha * dist[j]).collect();
        let b = softmax(&logits);
        let mut yr = x[r].clone();
        for (j, w) in b.iter().enumerate() {
            axpy(&mut yr, *w, &x[j]);
        }
        row_dist.push(dist);
        row_attn.push(b);
        y.push(yr);
    }

    let mut logits = Vec::with_capacity(graph.actions.len() + 1);
    let mut ffn = Vec::with_capacity(graph.actions.len() + 1);
    for ya in y.iter().take(graph.actions.len()) {
        let (l, t) = ffn_forward(ya, p);
        logits.push(l);
        ffn.push(t);
    }
    let stop_input: Vec<f64> = match current {
        Some(_) => y.last().expect("current row exists").iter().zip(&p.stop.data).map(|(a, b)| a + b).collect(),
        None => p.stop.data.clone(),
    };
    let (l, t) = ffn_forward(&stop_input, p);
    logits.push(l);
    ffn.push(t);
    let probs = softmax(&logits);
    ScoreTrace {
        actions: graph.actions.clone(),
        logits,
        probs,
        fuse,
        fused,
        token_ids,
        keys,
        values,
        queries,
        cross,
        x,
        rows,
        row_dist,
        row_attn,
        ffn,
    }
}

/// Accumulates into `g` the gradient of a scalar whose derivative with
/// respect to the logits is `d_logits`.
pub fn score_backward(trace: &ScoreTrace, d_logits: &[f64], p: &PolicyParams, g: &mut PolicyParams) {
    let d = FUSED_DIM;
    let scale = 1.0 / (d as f64).sqrt();
    let n = trace.x.len();
    let na = trace.actions.len();
    let mut dy = vec![vec![0.0; d]; trace.rows.len()];
    for a in 0..na {
        dy[a] = ffn_backward(&trace.ffn[a], d_logits[a], p, g);
    }
    let d_stop_in = ffn_backward(&trace.ffn[na], d_logits[na], p, g);
    axpy(&mut g.stop.data, 1.0, &d_stop_in);
    if trace.rows.len() > na {
        axpy(&mut dy[na], 1.0, &d_stop_in);
    }

    let mut dx = vec![vec![0.0; d]; n];
    for (ri, &r) in trace.rows.iter().enumerate() {
        let b = &trace.row_attn[ri];
        axpy(&mut dx[r], 1.0, &dy[ri]);
        let db: Vec<f64> = (0..n).map(|j| dot(&dy[ri], &trace.x[j])).collect();
        let mean: f64 = b.iter().zip(&db).map(|(w, v)| w * v).sum();
        for j in 0..n {
            axpy(&mut dx[j], b[j], &dy[ri]);
            let dl = b[j] * (db[j] - mean);
            if dl != 0.0 {
                axpy(&mut dx[r], dl * scale, &trace.x[j]);
                axpy(&mut dx[j], dl * scale, &trace.x[r]);
                g.alpha.data[0] -= dl * trace.row_dist[ri][j];
            }
        }
    }

    let nt = trace.token_ids.len();
    let mut dkeys = vec![vec![0.0; d]; nt];
    let mut dvalues = vec![vec![0.0; d]; nt];
    for i in 0..n {
        let mut df = dx[i].clone();
        if nt > 0 {
            let a = &trace.cross[i];
            let da: Vec<f64> = trace.values.iter().map(|v| dot(&dx[i], v)).collect();
            let mean: f64 = a.iter().zip(&da).map(|(w, v)| w * v).sum();
            let mut dq = vec![0.0; d];
            for t in 0..nt {
                axpy(&mut dvalues[t], a[t], &dx[i]);
                let ds = a[t] * (da[t] - mean) * scale;
                axpy(&mut dq, ds, &trace.keys[t]);
                axpy(&mut dkeys[t], ds, &trace.queries[i]);
            }
            outer_acc(&mut g.wq.data, &dq, &trace.fused[i]);
            matvec_t_acc(&p.wq.data, &dq, &mut df);
        }
        fuse_backward(&trace.fuse[i], &df, p, g);
    }
    for t in 0..nt {
        let id = trace.token_ids[t];
        let e = p.token(id).to_vec();
        outer_acc(&mut g.wk.data, &dkeys[t], &e);
        outer_acc(&mut g.wv.data, &dvalues[t], &e);
        let row = &mut g.tokens.data[id * d..(id + 1) * d];
        matvec_t_acc(&p.wk.data, &dkeys[t], row);
        matvec_t_acc(&p.wv.data, &dvalues[t], row);
    }
}

/// Random token sequence, for tests and gradient checks.
pub fn random_tokens<R: Rng>(rng: &mut R, len: usize) -> InstructionTokens {
    InstructionTokens { ids: (0..len.min(MAX_TOKENS)).map(|_| rng.gen_range(0..VOCAB)).collect() }
}
