//! Turns a tracked person into a short activity description.
//!
//! The rule-based interpreter stands in for a vision-language model: it reads
//! the ground-truth activity label that rides on detections and adds a motion
//! clause from the observed speed. A remote interpreter can be plugged in over
//! HTTP; any failure falls back to the rules.

use serde::{Deserialize, Serialize};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use crate::perception::window::Track;

pub const INTERPRETER_URL_ENV: &str = "HCSG_INTERPRETER_URL";
pub const MAX_IN_FLIGHT: usize = 4;

/// Navigation-oriented prompt sent to remote interpreters. This template is
/// our own; no published prompt is reproduced here.
pub const DEFAULT_PROMPT: &str = "You are assisting a robot that navigates among people. Describe in one \
sentence what this person is doing and how they are moving, focusing on anything that matters for \
passing them safely and politely.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DescriptionSource {
    Rule,
    Remote,
    Fallback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivityDescription {
    pub text: String,
    pub source: DescriptionSource,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InterpreterKind {
    RuleBased,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterpreterConfig {
    pub kind: InterpreterKind,
    pub endpoint: Option<String>,
    pub timeout_s: f64,
    pub prompt: String,
    /// Mean speed below which a person is "standing still".
    pub still_speed: f64,
    /// Mean speed below which a person is "walking slowly".
    pub slow_speed: f64,
}

impl Default for InterpreterConfig {
    fn default() -> Self {
        Self {
            kind: InterpreterKind::RuleBased,
            endpoint: None,
            timeout_s: 5.0,
            prompt: DEFAULT_PROMPT.to_string(),
            still_speed: 0.1,
            slow_speed: 0.8,
        }
    }
}

impl InterpreterConfig {
    pub fn remote(endpoint: &str) -> Result<Self, String> {
        let cfg = Self { kind: InterpreterKind::Remote, endpoint: Some(endpoint.to_string()), ..Self::default() };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Remote when `HCSG_INTERPRETER_URL` is set, rule-based otherwise.
    pub fn from_env() -> Result<Self, String> {
        match std::env::var(INTERPRETER_URL_ENV) {
            Ok(url) if !url.trim().is_empty() => Self::remote(url.trim()),
            _ => Ok(Self::default()),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.kind == InterpreterKind::Remote {
            let ep = self.endpoint.as_deref().ok_or("remote interpreter needs an endpoint")?;
            let url = url::Url::parse(ep).map_err(|e| format!("invalid interpreter URL '{ep}': {e}"))?;
            if !matches!(url.scheme(), "http" | "https") {
                return Err(format!("interpreter URL '{ep}' must be http or https"));
            }
        }
        if !(self.timeout_s > 0.0) {
            return Err("interpreter timeout must be positive".into());
        }
        Ok(())
    }
}

/// Mean planar speed over consecutive frames, m/s.
pub fn mean_speed(track: &Track, dt: f64) -> f64 {
    let speeds: Vec<f64> = track
        .frames
        .windows(2)
        .map(|w| w[1].position.distance(w[0].position) / ((w[1].t - w[0].t) as f64 * dt))
        .collect();
    if speeds.is_empty() {
        0.0
    } else {
        speeds.iter().sum::<f64>() / speeds.len() as f64
    }
}

pub fn motion_clause(speed: f64, cfg: &InterpreterConfig) -> &'static str {
    if speed < cfg.still_speed {
        "standing still"
    } else if speed < cfg.slow_speed {
        "walking slowly"
    } else {
        "walking quickly"
    }
}

pub fn rule_description(track: &Track, truth_label: &str, dt: f64, cfg: &InterpreterConfig) -> String {
    format!("A person is {truth_label}, {}.", motion_clause(mean_speed(track, dt), cfg))
}

#[derive(Serialize)]
struct RemoteFrame {
    x: f64,
    y: f64,
    keypoints: Vec<[f64; 3]>,
    t: u64,
}

#[derive(Serialize)]
struct RemoteRequest<'a> {
    track: Vec<RemoteFrame>,
    prompt: &'a str,
}

#[derive(Deserialize)]
struct RemoteResponse {
    description: String,
}

pub fn remote_request_body(track: &Track, prompt: &str) -> serde_json::Value {
    let req = RemoteRequest {
        track: track
            .frames
            .iter()
            .map(|f| RemoteFrame {
                x: f.position.x,
                y: f.position.y,
                keypoints: f.keypoints.iter().map(|k| [k.u, k.v, k.confidence]).collect(),
                t: f.t,
            })
            .collect(),
        prompt,
    };
    serde_json::to_value(req).expect("request serializes")
}

struct Slots {
    used: Mutex<usize>,
    freed: Condvar,
}

static SLOTS: Slots = Slots { used: Mutex::new(0), freed: Condvar::new() };

struct SlotGuard;

impl SlotGuard {
    fn acquire() -> Self {
        let mut used = SLOTS.used.lock().unwrap_or_else(|e| e.into_inner());
        while *used >= MAX_IN_FLIGHT {
            used = SLOTS.freed.wait(used).unwrap_or_else(|e| e.into_inner());
        }
        *used += 1;
        SlotGuard
    }
}

impl Drop for SlotGuard {
    fn drop(&mut self) {
        let mut used = SLOTS.used.lock().unwrap_or_else(|e| e.into_inner());
        *used -= 1;
        SLOTS.freed.notify_one();
    }
}

fn call_remote(track: &Track, cfg: &InterpreterConfig) -> Option<String> {
    let endpoint = cfg.endpoint.as_deref()?;
    let _slot = SlotGuard::acquire();
    let agent = ureq::AgentBuilder::new().timeout(Duration::from_secs_f64(cfg.timeout_s)).build();
    let resp = agent.post(endpoint).send_json(remote_request_body(track, &cfg.prompt)).ok()?;
    if resp.status() != 200 {
        return None;
    }
    let body: RemoteResponse = resp.into_json().ok()?;
    let text = body.description.trim().to_string();
    (!text.is_empty()).then_some(text)
}

/// Always returns a description; remote failures fall back to the rules.
pub fn interpret(track: &Track, truth_label: &str, dt: f64, cfg: &InterpreterConfig) -> ActivityDescription {
    match cfg.kind {
        InterpreterKind::RuleBased => {
            ActivityDescription { text: rule_description(track, truth_label, dt, cfg), source: DescriptionSource::Rule }
        }
        InterpreterKind::Remote => match call_remote(track, cfg) {
            Some(text) => ActivityDescription { text, source: DescriptionSource::Remote },
            None => ActivityDescription {
                text: rule_description(track, truth_label, dt, cfg),
                source: DescriptionSource::Fallback,
            },
        },
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::geometry::Vec2;
    use crate::perception::window::TrackFrame;
    use crate::perception::PixelKeypoint;

    pub(crate) fn straight_track(speed: f64, dt: f64, label: &str) -> Track {
        let frames = (0..6)
            .map(|k| TrackFrame {
                position: Vec2::new(2.0 + speed * dt * k as f64, 0.5),
                keypoints: vec![PixelKeypoint { u: 100.0, v: 100.0, confidence: 1.0 }; 17],
                t: k,
                sector: 0,
                truth_label: label.into(),
                truth_id: 0,
            })
            .collect();
        Track { id: 0, frames }
    }

    #[test]
    fn stationary_person() {
        let tr = straight_track(0.0, 0.25, "sorting clothes");
        let d = interpret(&tr, "sorting clothes", 0.25, &InterpreterConfig::default());
        assert_eq!(d.text, "A person is sorting clothes, standing still.");
        assert_eq!(d.source, DescriptionSource::Rule);
    }

    #[test]
    fn fast_walker() {
        let tr = straight_track(1.0, 0.25, "having a discussion");
        let d = interpret(&tr, "having a discussion", 0.25, &InterpreterConfig::default());
        assert_eq!(d.text, "A person is having a discussion, walking quickly.");
    }

    #[test]
    fn slow_walker() {
        let tr = straight_track(0.5, 0.25, "carrying a box");
        assert!(interpret(&tr, "carrying a box", 0.25, &InterpreterConfig::default())
            .text
            .ends_with("walking slowly."));
    }

    #[test]
    fn unreachable_remote_falls_back() {
        // port 9 on localhost: nothing listens there in the test sandbox
        let mut cfg = InterpreterConfig::remote("http://127.0.0.1:9/interpret").unwrap();
        cfg.timeout_s = 0.5;
        let tr = straight_track(0.0, 0.25, "reading a book");
        let d = interpret(&tr, "reading a book", 0.25, &cfg);
        assert_eq!(d.source, DescriptionSource::Fallback);
        assert_eq!(d.text, "A person is reading a book, standing still.");
    }

    #[test]
    fn invalid_url_rejected() {
        assert!(InterpreterConfig::remote("not a url").is_err());
        assert!(InterpreterConfig::remote("ftp://host/x").is_err());
    }
}
