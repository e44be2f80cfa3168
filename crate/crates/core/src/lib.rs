//! Human-populated navigation toolkit: a deterministic 2D simulator, simulated
//! panoramic perception, trajectory/pose forecasting, activity interpretation,
//! a topological waypoint policy and the social-distance training objective.

pub mod agent;
pub mod error;
pub mod eval;
pub mod forecast;
pub mod geometry;
pub mod io;
pub mod nn;
pub mod perception;
pub mod semantic;
pub mod topo;
pub mod train;
pub mod world;
