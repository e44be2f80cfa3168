use serde::{Deserialize, Serialize};

use crate::error::PerceptionError;
use crate::geometry::{Pose2, Vec2};

/// Per-sector pinhole camera. Image `u` grows to the right and `v` downwards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: f64,
    pub height: f64,
    pub mount_height: f64,
}

impl Default for CameraIntrinsics {
    fn default() -> Self {
        Self { fx: 100.0, fy: 100.0, cx: 112.0, cy: 112.0, width: 224.0, height: 224.0, mount_height: 1.25 }
    }
}

impl CameraIntrinsics {
    pub fn is_valid(&self) -> bool {
        self.fx > 0.0
            && self.fy > 0.0
            && self.cx >= 0.0
            && self.cx < self.width
            && self.cy >= 0.0
            && self.cy < self.height
    }
}

/// Camera axes in the agent (forward, right) frame for a camera yawed `psi`
/// counter-clockwise from the agent heading.
fn camera_axes(psi: f64) -> (Vec2, Vec2) {
    let (s, c) = psi.sin_cos();
    (Vec2::new(c, -s), Vec2::new(s, c))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub u: f64,
    pub v: f64,
    /// Depth along the optical axis.
    pub depth: f64,
}

/// Projects a world point at height `z` into the camera of a sector whose
/// world yaw is `camera_yaw`. Returns `None` behind the camera.
pub fn project(intr: &CameraIntrinsics, agent: &Pose2, camera_yaw: f64, world: Vec2, z: f64) -> Option<Projection> {
    let local = agent.to_agent(world);
    let (fwd, right) = camera_axes(camera_yaw - agent.heading);
    let depth = local.dot(fwd);
    if depth <= 0.0 {
        return None;
    }
    let x = local.dot(right);
    let y = intr.mount_height - z;
    Some(Projection { u: intr.cx + intr.fx * x / depth, v: intr.cy + intr.fy * y / depth, depth })
}

/// Pixel plus optical-axis depth back to agent-centric (forward, right)
/// coordinates. `sector_bearing` is the camera's world yaw.
pub fn backproject(
    u: f64,
    v: f64,
    d: f64,
    intr: &CameraIntrinsics,
    sector_bearing: f64,
    agent_heading: f64,
) -> Result<Vec2, PerceptionError> {
    if !(d > 0.0) {
        return Err(PerceptionError::NonPositiveDepth(d));
    }
    let x = (u - intr.cx) * d / intr.fx;
    // vertical coordinate (v - cy) * d / fy is dropped: only the ground plane is kept
    let _ = v;
    let (fwd, right) = camera_axes(sector_bearing - agent_heading);
    Ok(fwd * d + right * x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn principal_ray() {
        let p = backproject(112.0, 112.0, 2.0, &CameraIntrinsics::default(), 0.0, 0.0).unwrap();
        assert_eq!(p, Vec2::new(2.0, 0.0));
    }

    #[test]
    fn lateral_offset() {
        let intr = CameraIntrinsics { fx: 100.0, cx: 112.0, ..Default::default() };
        let p = backproject(212.0, 112.0, 2.0, &intr, 0.0, 0.0).unwrap();
        assert!((p - Vec2::new(2.0, 2.0)).norm() < 1e-12);
    }

    #[test]
    fn nonpositive_depth() {
        let intr = CameraIntrinsics::default();
        assert_eq!(backproject(1.0, 1.0, 0.0, &intr, 0.0, 0.0), Err(PerceptionError::NonPositiveDepth(0.0)));
        assert!(backproject(1.0, 1.0, -2.0, &intr, 0.0, 0.0).is_err());
    }

    #[test]
    fn point_on_axis_projects_to_center_column() {
        let intr = CameraIntrinsics::default();
        let agent = Pose2::new(1.0, 1.0, 0.5);
        let world = agent.to_world(Vec2::new(2.0, 0.0));
        let pr = project(&intr, &agent, 0.5, world, 0.0).unwrap();
        assert!((pr.u - intr.cx).abs() < 1e-9);
        assert!((pr.depth - 2.0).abs() < 1e-12);
    }
}
