use serde::{Deserialize, Serialize};
use std::sync::Arc;

use crate::error::WorldError;
use crate::geometry::{Pose2, Vec2};
use crate::world::map::WorldMap;
use crate::world::pedestrian::PedestrianScript;
use crate::world::planning::shortest_path;

pub const MIN_GEODESIC: f64 = 2.0;
pub const ENDPOINT_CLEARANCE: f64 = 0.3;

/// Instruction templates. `{P0}`, `{P1}` expand to a pedestrian reference,
/// `{O}` to the goal object's class.
pub const TEMPLATES: [&str; 5] = [
    "Walk past the person {P0} and stop near the {O}.",
    "Go to the {O}, but give the person {P0} some space.",
    "Pass the people {P0} and {P1}, then wait by the {O}.",
    "Head for the {O} without bumping into the person {P0}.",
    "Move around the person {P0}, continue past the one {P1} and find the {O}.",
];

pub fn template_arity(template: usize) -> usize {
    let t = TEMPLATES[template];
    ["{P0}", "{P1}"].iter().filter(|s| t.contains(*s)).count()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Instruction {
    pub template: usize,
    pub pedestrians: Vec<usize>,
    pub object: usize,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PedestrianSpec {
    pub id: usize,
    pub script: PedestrianScript,
    pub body_scale: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Seen,
    Unseen,
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Split::Seen => "seen",
            Split::Unseen => "unseen",
        })
    }
}

impl std::str::FromStr for Split {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "seen" => Ok(Split::Seen),
            "unseen" => Ok(Split::Unseen),
            other => Err(format!("unknown split '{other}' (expected seen or unseen)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub id: String,
    pub map_id: String,
    pub map: Arc<WorldMap>,
    pub start: Pose2,
    pub goal: Vec2,
    pub instruction: Instruction,
    pub pedestrians: Vec<PedestrianSpec>,
    pub split: Split,
    pub seed: u64,
}

pub fn render_instruction(
    template: usize,
    pedestrians: &[usize],
    object: usize,
    peds: &[PedestrianSpec],
    map: &WorldMap,
) -> Result<String, WorldError> {
    let text = *TEMPLATES
        .get(template)
        .ok_or_else(|| WorldError::InvalidEpisode(format!("unknown instruction template {template}")))?;
    if pedestrians.len() != template_arity(template) {
        return Err(WorldError::InvalidEpisode(format!(
            "template {template} takes {} pedestrians, got {}",
            template_arity(template),
            pedestrians.len()
        )));
    }
    let obj = map
        .objects()
        .iter()
        .find(|o| o.id == object)
        .ok_or_else(|| WorldError::InvalidEpisode(format!("unknown object {object}")))?;
    let mut out = text.replace("{O}", &obj.class);
    for (slot, pid) in pedestrians.iter().enumerate() {
        let p = peds
            .iter()
            .find(|p| p.id == *pid)
            .ok_or_else(|| WorldError::InvalidEpisode(format!("instruction references unknown pedestrian {pid}")))?;
        out = out.replace(&format!("{{P{slot}}}"), &format!("who is {}", p.script.activity_label));
    }
    Ok(out)
}

impl Episode {
    pub fn validate(&self) -> Result<(), WorldError> {
        let map = &*self.map;
        for (what, p) in [("start", self.start.position()), ("goal", self.goal)] {
            if !map.is_free(p) || map.clearance(p, 1.0) < ENDPOINT_CLEARANCE {
                return Err(WorldError::InvalidEpisode(format!("{} {what} {p:?} lacks free space", self.id)));
            }
        }
        let path = shortest_path(map, self.start.position(), self.goal)?;
        if path.length < MIN_GEODESIC {
            return Err(WorldError::InvalidEpisode(format!(
                "{}: geodesic distance {:.2} below {MIN_GEODESIC}",
                self.id, path.length
            )));
        }
        for p in &self.pedestrians {
            if !(p.body_scale > 0.0) {
                return Err(WorldError::InvalidEpisode(format!("pedestrian {} has bad body scale", p.id)));
            }
            p.script.validate(map)?;
        }
        let ins = &self.instruction;
        let rendered = render_instruction(ins.template, &ins.pedestrians, ins.object, &self.pedestrians, map)?;
        if rendered != ins.text {
            return Err(WorldError::InvalidEpisode(format!(
                "{}: instruction text does not match its template",
                self.id
            )));
        }
        for pid in &ins.pedestrians {
            let p = self.pedestrians.iter().find(|p| p.id == *pid).expect("checked by render");
            if !ins.text.contains(&p.script.activity_label) {
                return Err(WorldError::InvalidEpisode(format!("{}: pedestrian {pid} not mentioned", self.id)));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::geometry::Rect;
    use crate::world::map::MapObject;

    pub(crate) fn fixture_episode(bounds: Rect, scripts: Vec<PedestrianScript>) -> Episode {
        let objects = vec![MapObject {
            id: 0,
            class: "sofa".into(),
            position: Vec2::new(bounds.max.x - 1.0, bounds.max.y - 1.0),
        }];
        let map = Arc::new(WorldMap::new(bounds, vec![], objects).unwrap());
        let pedestrians: Vec<PedestrianSpec> = scripts
            .into_iter()
            .enumerate()
            .map(|(i, script)| PedestrianSpec { id: i, script, body_scale: 1.0 })
            .collect();
        let (template, refs) = if pedestrians.is_empty() { (0, vec![]) } else { (0, vec![0]) };
        let text = if refs.is_empty() {
            "Go to the sofa.".to_string()
        } else {
            render_instruction(template, &refs, 0, &pedestrians, &map).unwrap()
        };
        Episode {
            id: "fixture".into(),
            map_id: "fixture-map".into(),
            map,
            start: Pose2::new(1.0, 1.0, 0.0),
            goal: Vec2::new(bounds.max.x - 1.5, bounds.max.y - 1.5),
            instruction: Instruction { template, pedestrians: refs, object: 0, text },
            pedestrians,
            split: Split::Seen,
            seed: 0,
        }
    }

    #[test]
    fn render_mentions_pedestrians() {
        let ep = fixture_episode(
            Rect::new(0.0, 0.0, 8.0, 8.0),
            vec![PedestrianScript {
                kind: crate::world::pedestrian::ScriptKind::Stand { position: Vec2::new(4.0, 4.0), heading: 0.0 },
                activity_label: "sorting clothes".into(),
            }],
        );
        assert_eq!(ep.instruction.text, "Walk past the person who is sorting clothes and stop near the sofa.");
        ep.validate().unwrap();
    }

    #[test]
    fn arity() {
        assert_eq!(template_arity(0), 1);
        assert_eq!(template_arity(2), 2);
    }
}
