//! Benchmark harness: episode generation, evaluation, ablations, reports.

pub mod bench;
pub mod metrics;
pub mod report;

use serde::{Deserialize, Serialize};

use crate::agent::{navigate_episode, ActionMode, AgentConfig, AgentParams, EpisodeLog, GeoMode};
use crate::error::EvalError;
use crate::io::config_hash;
use crate::train::{train, TrainConfig, TrainOutcome};
use crate::world::{Episode, Split};

pub use bench::{generate_benchmark, generate_episode, Layout};
pub use metrics::{compute_metrics, compute_outcome_metrics, EpisodeOutcome, MetricsReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Toggle {
    GeoOff,
    SemOff,
    Past,
    CollOff,
    ProxOff,
    RgbOnly,
    DepthOnly,
}

impl Toggle {
    pub const ALL: [Toggle; 7] = [
        Toggle::GeoOff,
        Toggle::SemOff,
        Toggle::Past,
        Toggle::CollOff,
        Toggle::ProxOff,
        Toggle::RgbOnly,
        Toggle::DepthOnly,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Toggle::GeoOff => "geo-off",
            Toggle::SemOff => "sem-off",
            Toggle::Past => "past",
            Toggle::CollOff => "coll-off",
            Toggle::ProxOff => "prox-off",
            Toggle::RgbOnly => "rgb-only",
            Toggle::DepthOnly => "depth-only",
        }
    }
}

impl std::str::FromStr for Toggle {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Toggle::ALL.iter().copied().find(|t| t.name() == s).ok_or_else(|| {
            let names: Vec<&str> = Toggle::ALL.iter().map(|t| t.name()).collect();
            format!("unknown toggle '{s}' (expected one of {})", names.join(", "))
        })
    }
}

/// Canonical, order-independent variant name; `full` for no toggles.
pub fn variant_tag(toggles: &[Toggle]) -> String {
    let mut t = toggles.to_vec();
    t.sort();
    t.dedup();
    if t.is_empty() {
        "full".into()
    } else {
        t.iter().map(|x| x.name()).collect::<Vec<_>>().join("+")
    }
}

pub fn validate_toggles(toggles: &[Toggle]) -> Result<(), String> {
    let has = |t| toggles.contains(&t);
    if has(Toggle::RgbOnly) && has(Toggle::DepthOnly) {
        return Err("rgb-only and depth-only are mutually exclusive".into());
    }
    if has(Toggle::GeoOff) && has(Toggle::Past) {
        return Err("geo-off and past are mutually exclusive".into());
    }
    Ok(())
}

pub fn apply_toggles(cfg: &TrainConfig, toggles: &[Toggle]) -> TrainConfig {
    let mut c = cfg.clone();
    for t in toggles {
        match t {
            Toggle::GeoOff => c.agent.geo = GeoMode::Off,
            Toggle::SemOff => c.agent.semantic = false,
            Toggle::Past => c.agent.geo = GeoMode::Past,
            Toggle::CollOff => c.social.lambda_c = 0.0,
            Toggle::ProxOff => c.social.lambda_p = 0.0,
            Toggle::RgbOnly => {
                c.agent.use_depth = false;
                c.agent.channels.depth = false;
            }
            Toggle::DepthOnly => c.agent.channels.objects = false,
        }
    }
    c
}

/// Greedy evaluation. Logs come back in episode order regardless of the
/// worker count.
pub fn evaluate(
    params: &AgentParams,
    cfg: &AgentConfig,
    episodes: &[Episode],
    seed: u64,
    workers: usize,
) -> Vec<EpisodeLog> {
    let workers = workers.clamp(1, episodes.len().max(1));
    if workers == 1 {
        return episodes.iter().map(|e| navigate_episode(e, params, cfg, ActionMode::Greedy, seed)).collect();
    }
    let mut slots: Vec<Option<EpisodeLog>> = vec![None; episodes.len()];
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                scope.spawn(move || {
                    (w..episodes.len())
                        .step_by(workers)
                        .map(|i| (i, navigate_episode(&episodes[i], params, cfg, ActionMode::Greedy, seed)))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (i, log) in h.join().expect("evaluation worker panicked") {
                slots[i] = Some(log);
            }
        }
    });
    slots.into_iter().map(|s| s.expect("every episode evaluated")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblationConfig {
    pub train: TrainConfig,
    pub train_episodes: usize,
    pub eval_split: Split,
    pub eval_episodes: usize,
    pub bench_seed: u64,
    pub seeds: Vec<u64>,
    pub workers: usize,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            train_episodes: 60,
            eval_split: Split::Unseen,
            eval_episodes: 200,
            bench_seed: 2024,
            seeds: vec![0, 1, 2],
            workers: 1,
        }
    }
}

impl AblationConfig {
    pub fn hash(&self) -> String {
        config_hash(self)
    }

    pub fn train_set(&self) -> Vec<Episode> {
        generate_benchmark(self.train_episodes, Split::Seen, self.bench_seed)
    }

    pub fn eval_set(&self) -> Vec<Episode> {
        generate_benchmark(self.eval_episodes, self.eval_split, self.bench_seed.wrapping_add(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub tag: String,
    pub seed: u64,
    pub report: MetricsReport,
    /// SHA-256 over the episode log hashes, in episode order.
    pub logs_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub config_hash: String,
    pub rows: Vec<AblationRow>,
    /// Per-variant median over seeds, in request order.
    pub medians: Vec<MetricsReport>,
}

impl AblationTable {
    pub fn median(&self, tag: &str) -> Option<&MetricsReport> {
        self.medians.iter().find(|m| m.ablation == tag)
    }
}

pub fn logs_hash(logs: &[EpisodeLog]) -> String {
    let joined: String = logs.iter().map(|l| l.hash.as_str()).collect::<Vec<_>>().join("\n");
    crate::io::sha256_hex(joined.as_bytes())
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn median_report(reports: &[MetricsReport]) -> Option<MetricsReport> {
    let first = reports.first()?;
    let m = |f: fn(&MetricsReport) -> f64| median(reports.iter().map(f).collect());
    Some(MetricsReport {
        ne: m(|r| r.ne),
        sr: m(|r| r.sr),
        tcr: m(|r| r.tcr),
        cr: m(|r| r.cr),
        episodes: first.episodes,
        split: first.split.clone(),
        ablation: first.ablation.clone(),
    })
}

/// Trains one variant from `AgentParams::init(seed)` and evaluates it.
pub fn run_variant(
    cfg: &AblationConfig,
    toggles: &[Toggle],
    seed: u64,
    train_set: &[Episode],
    eval_set: &[Episode],
) -> Result<(TrainOutcome, Vec<EpisodeLog>, MetricsReport), EvalError> {
    validate_toggles(toggles).map_err(|e| EvalError::Train(crate::error::TrainError::InvalidConfig(e)))?;
    let mut tcfg = apply_toggles(&cfg.train, toggles);
    tcfg.seed = seed;
    let outcome = train(&tcfg, train_set, AgentParams::init(seed))?;
    let logs = evaluate(&outcome.params, &tcfg.agent, eval_set, seed, cfg.workers);
    let report = compute_metrics(&logs, tcfg.agent.goal_radius, &cfg.eval_split.to_string(), &variant_tag(toggles))?;
    Ok((outcome, logs, report))
}

/// One row per (variant, seed) with matched seeds and episodes. An empty
/// request runs the full model only.
pub fn run_ablation(cfg: &AblationConfig, variants: &[Vec<Toggle>]) -> Result<AblationTable, EvalError> {
    let full = [Vec::new()];
    let variants = if variants.is_empty() { &full[..] } else { variants };
    let train_set = cfg.train_set();
    let eval_set = cfg.eval_set();
    let mut rows = Vec::new();
    let mut medians = Vec::new();
    for toggles in variants {
        let mut reports = Vec::new();
        for &seed in &cfg.seeds {
            let (_, logs, report) = run_variant(cfg, toggles, seed, &train_set, &eval_set)?;
            rows.push(AblationRow {
                tag: variant_tag(toggles),
                seed,
                report: report.clone(),
                logs_hash: logs_hash(&logs),
            });
            reports.push(report);
        }
        medians.extend(median_report(&reports));
    }
    Ok(AblationTable { config_hash: cfg.hash(), rows, medians })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tags_are_canonical() {
        assert_eq!(variant_tag(&[]), "full");
        assert_eq!(variant_tag(&[Toggle::ProxOff, Toggle::CollOff]), variant_tag(&[Toggle::CollOff, Toggle::ProxOff]));
        assert_eq!("sem-off".parse::<Toggle>(), Ok(Toggle::SemOff));
        assert!("nope".parse::<Toggle>().is_err());
    }

    #[test]
    fn toggles_touch_the_right_knobs() {
        let base = TrainConfig::default();
        let c = apply_toggles(&base, &[Toggle::CollOff, Toggle::ProxOff, Toggle::RgbOnly]);
        assert_eq!((c.social.lambda_c, c.social.lambda_p), (0.0, 0.0));
        assert!(!c.agent.use_depth && !c.agent.channels.depth && c.agent.channels.objects);
        assert!(validate_toggles(&[Toggle::RgbOnly, Toggle::DepthOnly]).is_err());
        assert_eq!(apply_toggles(&base, &[]), base);
    }

    #[test]
    fn median_of_three() {
        let r = |cr: f64| MetricsReport {
            ne: cr,
            sr: 0.0,
            tcr: 0.0,
            cr,
            episodes: 1,
            split: "s".into(),
            ablation: "a".into(),
        };
        assert_eq!(median_report(&[r(0.3), r(0.1), r(0.2)]).unwrap().cr, 0.2);
    }

    #[test]
    fn parallel_matches_serial() {
        let eps = generate_benchmark(4, Split::Unseen, 5);
        let params = AgentParams::init(1);
        let cfg = AgentConfig { t_max: 6, ..AgentConfig::default() };
        assert_eq!(evaluate(&params, &cfg, &eps, 3, 1), evaluate(&params, &cfg, &eps, 3, 3));
    }
}
