//! JSON scenario files: maps are stored once and referenced by episodes.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use crate::error::WorldError;
use crate::geometry::{Pose2, Vec2};
use crate::world::episode::{Episode, Instruction, PedestrianSpec, Split};
use crate::world::map::WorldMap;

pub const SCENARIO_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapEntry {
    pub id: String,
    pub map: WorldMap,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpisodeRecord {
    pub id: String,
    pub map_id: String,
    pub start: Pose2,
    pub goal: Vec2,
    pub instruction: Instruction,
    pub pedestrians: Vec<PedestrianSpec>,
    pub split: Split,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub version: u32,
    pub config_hash: String,
    pub maps: Vec<MapEntry>,
    pub episodes: Vec<EpisodeRecord>,
}

impl ScenarioFile {
    /// Groups episodes by map; map order follows first use.
    pub fn from_episodes(config_hash: String, episodes: &[Episode]) -> Self {
        let mut maps: Vec<MapEntry> = Vec::new();
        for ep in episodes {
            if !maps.iter().any(|m| m.id == ep.map_id) {
                maps.push(MapEntry { id: ep.map_id.clone(), map: (*ep.map).clone() });
            }
        }
        let episodes = episodes
            .iter()
            .map(|e| EpisodeRecord {
                id: e.id.clone(),
                map_id: e.map_id.clone(),
                start: e.start,
                goal: e.goal,
                instruction: e.instruction.clone(),
                pedestrians: e.pedestrians.clone(),
                split: e.split,
                seed: e.seed,
            })
            .collect();
        Self { version: SCENARIO_VERSION, config_hash, maps, episodes }
    }

    /// Resolves map references and validates every episode.
    pub fn into_episodes(self) -> Result<Vec<Episode>, WorldError> {
        if self.version != SCENARIO_VERSION {
            return Err(WorldError::Scenario(format!("unsupported scenario version {}", self.version)));
        }
        let mut maps = BTreeMap::new();
        for m in self.maps {
            if maps.insert(m.id.clone(), Arc::new(m.map)).is_some() {
                return Err(WorldError::Scenario(format!("duplicate map id {}", m.id)));
            }
        }
        self.episodes
            .into_iter()
            .map(|r| {
                let map = maps
                    .get(&r.map_id)
                    .ok_or_else(|| {
                        WorldError::Scenario(format!("episode {} references unknown map {}", r.id, r.map_id))
                    })?
                    .clone();
                let ep = Episode {
                    id: r.id,
                    map_id: r.map_id,
                    map,
                    start: r.start,
                    goal: r.goal,
                    instruction: r.instruction,
                    pedestrians: r.pedestrians,
                    split: r.split,
                    seed: r.seed,
                };
                ep.validate()?;
                Ok(ep)
            })
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn parse(text: &str) -> Result<Self, WorldError> {
        serde_json::from_str(text).map_err(|e| WorldError::Scenario(e.to_string()))
    }
}

pub fn load_episodes(path: &Path) -> Result<Vec<Episode>, WorldError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| WorldError::Scenario(format!("cannot read {}: {e}", path.display())))?;
    ScenarioFile::parse(&text)?.into_episodes()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_fields_rejected() {
        let text = r#"{"version":1,"config_hash":"x","maps":[],"episodes":[],"extra":3}"#;
        assert!(ScenarioFile::parse(text).is_err());
    }

    #[test]
    fn unknown_map_reference_rejected() {
        let text = r#"{"version":1,"config_hash":"x","maps":[],"episodes":[{"id":"e","map_id":"m",
            "start":{"x":0,"y":0,"heading":0},"goal":{"x":1,"y":1},
            "instruction":{"template":0,"pedestrians":[],"object":0,"text":""},
            "pedestrians":[],"split":"seen","seed":0}]}"#;
        let f = ScenarioFile::parse(text).unwrap();
        assert!(f.into_episodes().is_err());
    }
}
