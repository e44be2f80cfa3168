//! Checkpoint directories: one JSON tensor dump per parameter set plus the
//! training config that produced them.

use std::path::{Path, PathBuf};

use crate::agent::AgentParams;
use crate::io::{atomic_write, config_hash};
use crate::nn::Checkpoint;
use crate::train::run::TrainConfig;

pub const POLICY_FILE: &str = "policy.json";
pub const FORECASTER_FILE: &str = "forecaster.json";
pub const PAST_ENCODER_FILE: &str = "past_encoder.json";
pub const CONFIG_FILE: &str = "train_config.json";

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("checkpoint file not found: {}", .0.display())]
    Missing(PathBuf),
    #[error("cannot read checkpoint {path}: {1}", path = .0.display())]
    Invalid(PathBuf, String),
    #[error("cannot write checkpoint {path}: {1}", path = .0.display())]
    Write(PathBuf, std::io::Error),
}

fn to_json<T: serde::Serialize>(value: &T) -> Vec<u8> {
    let mut bytes = serde_json::to_vec(value).expect("checkpoint serializes");
    bytes.push(b'\n');
    bytes
}

pub fn save_checkpoint(dir: &Path, params: &AgentParams, cfg: &TrainConfig) -> Result<(), CheckpointError> {
    let write = |name: &str, bytes: Vec<u8>| {
        let path = dir.join(name);
        atomic_write(&path, &bytes).map_err(|e| CheckpointError::Write(path, e))
    };
    write(POLICY_FILE, to_json(&Checkpoint::of("policy", &params.policy)))?;
    write(FORECASTER_FILE, to_json(&Checkpoint::of("forecaster", &params.forecaster)))?;
    write(PAST_ENCODER_FILE, to_json(&Checkpoint::of("past-encoder", &params.past_encoder)))?;
    let mut cfg_json = serde_json::to_value(cfg).expect("config serializes");
    cfg_json["config_hash"] = serde_json::Value::String(config_hash(cfg));
    write(CONFIG_FILE, to_json(&cfg_json))
}

fn read(path: PathBuf) -> Result<(PathBuf, String), CheckpointError> {
    if !path.is_file() {
        return Err(CheckpointError::Missing(path));
    }
    let text = std::fs::read_to_string(&path).map_err(|e| CheckpointError::Invalid(path.clone(), e.to_string()))?;
    Ok((path, text))
}

fn restore<M: crate::nn::Module>(dir: &Path, name: &str, kind: &str, template: &M) -> Result<M, CheckpointError> {
    let (path, text) = read(dir.join(name))?;
    let ck: Checkpoint =
        serde_json::from_str(&text).map_err(|e| CheckpointError::Invalid(path.clone(), e.to_string()))?;
    ck.restore(kind, template).map_err(|e| CheckpointError::Invalid(path, e))
}

pub fn load_checkpoint(dir: &Path) -> Result<(AgentParams, TrainConfig), CheckpointError> {
    if !dir.is_dir() {
        return Err(CheckpointError::Missing(dir.to_path_buf()));
    }
    let (path, text) = read(dir.join(CONFIG_FILE))?;
    let mut value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CheckpointError::Invalid(path.clone(), e.to_string()))?;
    if let Some(obj) = value.as_object_mut() {
        obj.remove("config_hash");
    }
    let cfg: TrainConfig = serde_json::from_value(value).map_err(|e| CheckpointError::Invalid(path, e.to_string()))?;
    let template = AgentParams::init(0);
    let params = AgentParams {
        policy: restore(dir, POLICY_FILE, "policy", &template.policy)?,
        forecaster: restore(dir, FORECASTER_FILE, "forecaster", &template.forecaster)?,
        past_encoder: restore(dir, PAST_ENCODER_FILE, "past-encoder", &template.past_encoder)?,
    };
    Ok((params, cfg))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let dir = std::env::temp_dir().join(format!("socnav-ck-{}", std::process::id()));
        let params = AgentParams::init(11);
        let cfg = TrainConfig { seed: 11, ..TrainConfig::default() };
        save_checkpoint(&dir, &params, &cfg).unwrap();
        let (p2, c2) = load_checkpoint(&dir).unwrap();
        assert_eq!(p2, params);
        assert_eq!(c2, cfg);
        std::fs::remove_file(dir.join(POLICY_FILE)).unwrap();
        match load_checkpoint(&dir) {
            Err(CheckpointError::Missing(p)) => assert!(p.ends_with(POLICY_FILE)),
            other => panic!("{other:?}"),
        }
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
