//! Online topological graph of visited and candidate waypoints, with
//! human-aware fusion and instruction-conditioned candidate scoring.

pub mod graph;
pub mod scorer;

pub use graph::{
    assign_humans, snapshot, update_graph, GraphSnapshot, HumanFeature, NodeKind, TopoGraph, TopoNode, FUSED_DIM,
    MERGE_RADIUS, SUMMARY_DIM,
};
pub use scorer::{
    fuse, refresh_fused, score, score_backward, score_forward, InstructionTokens, PolicyParams, ScoreTrace, MAX_TOKENS,
    VOCAB,
};

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::geometry::{Pose2, Vec2};
    use crate::nn::{finite_difference_error, probe_indices, Module};
    use crate::perception::STATIC_DIM;
    use crate::topo::scorer::random_tokens;
    use crate::world::candidates::{Candidate, NUM_SECTORS};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_vec<R: Rng>(rng: &mut R, n: usize, s: f64) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-s..s)).collect()
    }

    fn human<R: Rng>(rng: &mut R, id: usize, position: Vec2) -> HumanFeature {
        HumanFeature { id, position, geo: random_vec(rng, SUMMARY_DIM, 1.0), sem: random_vec(rng, SUMMARY_DIM, 0.3) }
    }

    /// Two decisions' worth of graph with humans attached.
    pub(super) fn fixture(seed: u64) -> (TopoGraph, Vec<HumanFeature>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let feats: Vec<Vec<f64>> = (0..NUM_SECTORS).map(|_| random_vec(&mut rng, STATIC_DIM, 1.0)).collect();
        let cands = |c: Vec2| -> Vec<Candidate> {
            (0..4)
                .map(|k| {
                    let a = k as f64 * std::f64::consts::FRAC_PI_2;
                    Candidate { sector: k * 3, radius: 1.5, position: c + Vec2::from_angle(a) * 1.5 }
                })
                .collect()
        };
        let g = update_graph(&TopoGraph::new(), &Pose2::new(0.0, 0.0, 0.0), &cands(Vec2::new(0.0, 0.0)), &feats, 0)
            .unwrap();
        let g = update_graph(&g, &Pose2::new(1.5, 0.0, 0.0), &cands(Vec2::new(1.5, 0.0)), &feats, 1).unwrap();
        let humans = vec![human(&mut rng, 2, Vec2::new(2.8, 0.2)), human(&mut rng, 0, Vec2::new(1.6, 1.4))];
        let g = assign_humans(&g, &humans).unwrap();
        (g, humans)
    }

    #[test]
    fn probabilities_normalized() {
        for seed in 0..10 {
            let (g, _) = fixture(seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = score(&g, &random_tokens(&mut rng, 12), &PolicyParams::init(seed));
            assert_eq!(p.len(), g.actions.len() + 1);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(p.iter().all(|&x| x >= 0.0));
        }
    }

    #[test]
    fn zero_ffn_is_uniform() {
        let (g, _) = fixture(1);
        let mut params = PolicyParams::init(2);
        params.zero_ffn();
        let p = score(&g, &InstructionTokens::from_text("walk past the sofa"), &params);
        let u = 1.0 / p.len() as f64;
        assert!(p.iter().all(|&x| (x - u).abs() < 1e-15));
    }

    #[test]
    fn stop_only_without_candidates() {
        let feats = vec![vec![0.0; STATIC_DIM]; NUM_SECTORS];
        let g = update_graph(&TopoGraph::new(), &Pose2::new(0.0, 0.0, 0.0), &[], &feats, 0).unwrap();
        assert_eq!(score(&g, &InstructionTokens::from_text("go"), &PolicyParams::init(0)), vec![1.0]);
    }

    #[test]
    fn tokens_are_bounded() {
        let text = "word ".repeat(100);
        let t = InstructionTokens::from_text(&text);
        assert_eq!(t.ids.len(), MAX_TOKENS);
        assert!(t.ids.iter().all(|&i| i < VOCAB));
    }

    #[test]
    fn fuse_conventions() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = PolicyParams::init(5);
        let s = random_vec(&mut rng, STATIC_DIM, 1.0);
        let h = human(&mut rng, 4, Vec2::new(0.0, 0.0));
        let empty = fuse(&s, &[], &p).unwrap();
        let refs: Vec<&HumanFeature> = vec![];
        let mut manual_in = s.clone();
        manual_in.extend(graph::human_summary(&refs));
        assert!(manual_in[STATIC_DIM..].iter().all(|&x| x == 0.0));
        assert_eq!(empty.len(), FUSED_DIM);
        let one = fuse(&s, std::slice::from_ref(&h), &p).unwrap();
        let mut copies = vec![h.clone(), h.clone(), h.clone()];
        for (k, c) in copies.iter_mut().enumerate() {
            c.id = k;
        }
        let three = fuse(&s, &copies, &p).unwrap();
        for (a, b) in one.iter().zip(&three) {
            assert!((a - b).abs() < 1e-12);
        }
        let a = human(&mut rng, 1, Vec2::new(0.0, 0.0));
        let b = human(&mut rng, 7, Vec2::new(0.0, 0.0));
        let c = human(&mut rng, 3, Vec2::new(0.0, 0.0));
        let abc = fuse(&s, &[a.clone(), b.clone(), c.clone()], &p).unwrap();
        let cab = fuse(&s, &[c, a, b], &p).unwrap();
        assert_eq!(abc, cab);
        assert!(fuse(&s[..10], &[], &p).is_err());
    }

    #[test]
    fn human_order_does_not_change_scores() {
        let (g, humans) = fixture(3);
        let mut rev = humans.clone();
        rev.reverse();
        let base = {
            let mut g0 = g.clone();
            for n in g0.nodes.iter_mut() {
                n.human_summary = vec![0.0; SUMMARY_DIM];
            }
            g0
        };
        let g1 = assign_humans(&base, &humans).unwrap();
        let g2 = assign_humans(&base, &rev).unwrap();
        let tokens = InstructionTokens::from_text("pass the person reading");
        let p = PolicyParams::init(3);
        assert_eq!(score(&g1, &tokens, &p), score(&g2, &tokens, &p));
    }

    #[test]
    fn scaling_ffn_output_keeps_argmax() {
        let (g, _) = fixture(4);
        let tokens = InstructionTokens::from_text("go to the table");
        let p = PolicyParams::init(4);
        let argmax = |v: &[f64]| v.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        let base = argmax(&score(&g, &tokens, &p));
        for k in [0.1, 2.0, 17.0] {
            let mut q = p.clone();
            q.ffn_w2.data.iter_mut().for_each(|x| *x *= k);
            q.ffn_b2.data.iter_mut().for_each(|x| *x *= k);
            assert_eq!(argmax(&score(&g, &tokens, &q)), base);
        }
    }

    #[test]
    fn distance_bias_favors_near_candidate() {
        // A high-scoring visited node at the origin; the agent stands at
        // (5,0) with one candidate 1 m from the origin and one 10 m away.
        let d = FUSED_DIM;
        let mut g = TopoGraph::new();
        let mk = |id: usize, x: f64, y: f64, kind: NodeKind, v: f64| TopoNode {
            id,
            position: Vec2::new(x, y),
            kind,
            static_feature: vec![v; STATIC_DIM],
            human_summary: vec![0.0; SUMMARY_DIM],
            fused: vec![0.0; d],
            last_updated: 0,
        };
        g.nodes = vec![
            mk(0, 0.0, 0.0, NodeKind::Visited, 1.0),
            mk(1, 5.0, 0.0, NodeKind::Current, 0.0),
            mk(2, 1.0, 0.0, NodeKind::Candidate, 0.0),
            mk(3, 10.0, 0.0, NodeKind::Candidate, 0.0),
        ];
        for (a, b) in [(0, 1), (1, 2), (1, 3), (0, 2)] {
            let len = g.nodes[a].position.distance(g.nodes[b].position);
            g.edges.insert((a, b), len);
        }
        g.current = Some(1);
        g.actions = vec![2, 3];
        let tokens = InstructionTokens { ids: vec![] };
        let mut p = PolicyParams::init(0);
        // fused feature = static copy; the FFN scores the feature sum
        p.fuse_w1.data.iter_mut().for_each(|x| *x = 0.0);
        p.fuse_w2.data.iter_mut().for_each(|x| *x = 0.0);
        for k in 0..d {
            p.fuse_w1.data[k * graph_fuse_in() + k] = 1.0;
            p.fuse_w2.data[k * 128 + k] = 1.0;
            p.ffn_w1.data[k * d + k] = 1.0;
        }
        p.ffn_w1.data.iter_mut().enumerate().for_each(|(i, x)| {
            if i % (d + 1) != 0 {
                *x = 0.0
            }
        });
        p.ffn_w2.data.iter_mut().for_each(|x| *x = 1.0);
        p.alpha.data[0] = 0.0;
        let flat = score(&g, &tokens, &p);
        p.alpha.data[0] = 1.0;
        let local = score(&g, &tokens, &p);
        assert!(local[0] > flat[0], "{local:?} vs {flat:?}");
    }

    fn graph_fuse_in() -> usize {
        crate::topo::scorer::FUSE_IN
    }

    #[test]
    fn update_then_assign_keeps_graph_connected() {
        let (g, _) = fixture(6);
        let cur = g.current.unwrap();
        let d = g.geodesic_from(cur);
        assert!(g.actions.iter().all(|&a| d[a].is_finite()));
        assert!(g.edges.values().all(|&w| w > 0.0));
        for &a in &g.actions {
            assert!(g.edge(cur, a).is_some());
        }
    }

    #[test]
    fn score_gradient_matches_finite_differences() {
        for seed in 0..3 {
            let (g, _) = fixture(seed);
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let tokens = random_tokens(&mut rng, 8);
            let p = PolicyParams::init(seed);
            let w: Vec<f64> = random_vec(&mut rng, g.actions.len() + 1, 1.0);
            let objective = |q: &PolicyParams| {
                let t = score_forward(&g, &tokens, q);
                t.logits.iter().zip(&w).map(|(l, c)| l * c).sum::<f64>()
                    + 0.7 * t.probs.iter().map(|x| x.ln()).sum::<f64>()
            };
            let t = score_forward(&g, &tokens, &p);
            let n = w.len() as f64;
            // d/dl of sum ln p = 1 - n p
            let d: Vec<f64> = w.iter().zip(&t.probs).map(|(c, pi)| c + 0.7 * (1.0 - n * pi)).collect();
            let mut grad = p.zeros_like();
            score_backward(&t, &d, &p, &mut grad);
            let mut probes = probe_indices(&p, 42, seed);
            // token rows actually used by the instruction
            for (k, &id) in tokens.ids.iter().enumerate().take(6) {
                probes.push((13, id * FUSED_DIM + k));
            }
            let err = finite_difference_error(&p, &grad, &probes, 1e-5, objective);
            assert!(err < 1e-4, "seed {seed}: {err}");
        }
    }
}
