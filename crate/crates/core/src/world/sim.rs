use serde::{Deserialize, Serialize};

use crate::geometry::{Pose2, Vec2};
use crate::world::episode::Episode;
use crate::world::pedestrian::{pedestrian_state_at, PedestrianState};

pub const DEFAULT_DT: f64 = 0.25;
pub const AGENT_SPEED: f64 = 1.0;
pub const COLLISION_RADIUS: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    pub t: u64,
    pub dt: f64,
    pub agent: Pose2,
    pub pedestrians: Vec<PedestrianState>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CollisionEvent {
    pub pedestrian: usize,
    pub t: u64,
}

/// Advances scripted pedestrians around an agent that is moved explicitly.
#[derive(Debug, Clone, Copy)]
pub struct Simulator<'a> {
    pub episode: &'a Episode,
}

impl<'a> Simulator<'a> {
    pub fn new(episode: &'a Episode) -> Self {
        Self { episode }
    }

    pub fn initial_state(&self, dt: f64) -> SimState {
        assert!(dt > 0.0, "dt must be positive");
        let start = self.episode.start;
        SimState { t: 0, dt, agent: start, pedestrians: self.pedestrians_at(0, dt) }
    }

    pub fn pedestrians_at(&self, t: u64, dt: f64) -> Vec<PedestrianState> {
        self.episode.pedestrians.iter().map(|p| pedestrian_state_at(&p.script, t, dt)).collect()
    }

    /// World clock advances `steps` with the agent frozen.
    pub fn wait(&self, state: &SimState, steps: u64) -> SimState {
        let t = state.t + steps;
        SimState { t, dt: state.dt, agent: state.agent, pedestrians: self.pedestrians_at(t, state.dt) }
    }

    fn contacts(&self, agent: Vec2, peds: &[PedestrianState]) -> Vec<bool> {
        peds.iter().map(|p| p.position.distance(agent) < COLLISION_RADIUS).collect()
    }

    /// Moves the agent in a straight line to `target` at `AGENT_SPEED`, one
    /// world step per sub-step. Records one event per entering contact.
    pub fn step_agent(&self, state: &SimState, target: Vec2) -> (SimState, Vec<CollisionEvent>) {
        let start = state.agent.position();
        let dist = start.distance(target);
        let stride = AGENT_SPEED * state.dt;
        let n = (dist / stride).ceil() as u64;
        let heading = if dist > 0.0 { (target - start).angle() } else { state.agent.heading };
        let mut events = Vec::new();
        let mut in_contact = self.contacts(start, &state.pedestrians);
        let mut current = state.clone();
        for k in 1..=n {
            let frac = (k as f64 * stride / dist).min(1.0);
            let pos = if k == n { target } else { start.lerp(target, frac) };
            let t = state.t + k;
            let peds = self.pedestrians_at(t, state.dt);
            let now = self.contacts(pos, &peds);
            for (id, (&was, &is)) in in_contact.iter().zip(&now).enumerate() {
                if is && !was {
                    events.push(CollisionEvent { pedestrian: self.episode.pedestrians[id].id, t });
                }
            }
            in_contact = now;
            current = SimState { t, dt: state.dt, agent: Pose2::new(pos.x, pos.y, heading), pedestrians: peds };
        }
        if n == 0 {
            current.agent.heading = heading;
        }
        (current, events)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Rect;
    use crate::world::episode::tests::fixture_episode;
    use crate::world::pedestrian::{PedestrianScript, ScriptKind};

    fn stand(p: Vec2) -> PedestrianScript {
        PedestrianScript { kind: ScriptKind::Stand { position: p, heading: 0.0 }, activity_label: "reading".into() }
    }

    #[test]
    fn no_pedestrians_no_events() {
        let ep = fixture_episode(Rect::new(0.0, 0.0, 8.0, 8.0), vec![]);
        let sim = Simulator::new(&ep);
        let s = sim.initial_state(DEFAULT_DT);
        let (s2, ev) = sim.step_agent(&s, Vec2::new(4.0, 1.0));
        assert!(ev.is_empty());
        assert_eq!(s2.agent.position(), Vec2::new(4.0, 1.0));
        assert_eq!(s2.t, 12);
    }

    #[test]
    fn near_pedestrian_collides() {
        let ep = fixture_episode(Rect::new(0.0, 0.0, 8.0, 8.0), vec![stand(Vec2::new(2.5, 1.3))]);
        let sim = Simulator::new(&ep);
        let (_, ev) = sim.step_agent(&sim.initial_state(DEFAULT_DT), Vec2::new(4.0, 1.0));
        assert!(!ev.is_empty());
        assert!(ev.iter().all(|e| e.pedestrian == ep.pedestrians[0].id));
    }

    #[test]
    fn far_pedestrian_does_not_collide() {
        let ep = fixture_episode(Rect::new(0.0, 0.0, 8.0, 8.0), vec![stand(Vec2::new(2.5, 3.0))]);
        let sim = Simulator::new(&ep);
        let (_, ev) = sim.step_agent(&sim.initial_state(DEFAULT_DT), Vec2::new(4.0, 1.0));
        assert!(ev.is_empty());
    }

    #[test]
    fn contact_is_counted_once_per_entry() {
        let ep = fixture_episode(Rect::new(0.0, 0.0, 8.0, 8.0), vec![stand(Vec2::new(2.5, 1.0))]);
        let sim = Simulator::new(&ep);
        let (_, ev) = sim.step_agent(&sim.initial_state(DEFAULT_DT), Vec2::new(4.0, 1.0));
        assert_eq!(ev.len(), 1);
    }
}
