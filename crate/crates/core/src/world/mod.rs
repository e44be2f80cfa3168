//! Deterministic 2D environment: static map, scripted pedestrians, waypoint
//! candidates and the shortest-path oracle used by the expert.

pub mod candidates;
pub mod episode;
pub mod map;
pub mod pedestrian;
pub mod planning;
pub mod scenario;
pub mod sim;

pub use candidates::{waypoint_candidates, Candidate, NUM_SECTORS};
pub use episode::{Episode, Instruction, PedestrianSpec, Split};
pub use map::{MapObject, WorldMap};
pub use pedestrian::{pedestrian_state_at, skeleton_at, Keypoint, PedestrianScript, PedestrianState, ScriptKind};
pub use planning::{shortest_path, DistanceField, PlannedPath};
pub use scenario::ScenarioFile;
pub use sim::{CollisionEvent, SimState, Simulator};
