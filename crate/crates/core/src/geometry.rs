//! Planar geometry shared by the simulator, perception and the planner.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::ops::{Add, Div, Mul, Neg, Sub};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn from_angle(theta: f64) -> Self {
        Self::new(theta.cos(), theta.sin())
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn cross(self, other: Vec2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn distance(self, other: Vec2) -> f64 {
        (self - other).norm()
    }

    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn lerp(self, other: Vec2, t: f64) -> Vec2 {
        self + (other - self) * t
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

impl Div<f64> for Vec2 {
    type Output = Vec2;
    fn div(self, s: f64) -> Vec2 {
        Vec2::new(self.x / s, self.y / s)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Agent pose in SE(2): world position plus counter-clockwise heading.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

impl Pose2 {
    pub const fn new(x: f64, y: f64, heading: f64) -> Self {
        Self { x, y, heading }
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    /// World point to agent-centric (forward, right) coordinates.
    pub fn to_agent(&self, world: Vec2) -> Vec2 {
        let d = world - self.position();
        let (s, c) = self.heading.sin_cos();
        Vec2::new(d.x * c + d.y * s, d.x * s - d.y * c)
    }

    /// Agent-centric (forward, right) coordinates back to the world frame.
    pub fn to_world(&self, local: Vec2) -> Vec2 {
        let (s, c) = self.heading.sin_cos();
        let forward = Vec2::new(c, s);
        let right = Vec2::new(s, -c);
        self.position() + forward * local.x + right * local.y
    }
}

/// Wraps an angle into [-pi, pi].
pub fn wrap_angle(theta: f64) -> f64 {
    let mut a = (theta + PI).rem_euclid(2.0 * PI) - PI;
    if a < -PI {
        a += 2.0 * PI;
    }
    a
}

/// Closest point on segment a-b to p, with its segment parameter in [0, 1].
pub fn closest_point_on_segment(a: Vec2, b: Vec2, p: Vec2) -> (Vec2, f64) {
    let ab = b - a;
    let len_sq = ab.norm_sq();
    if len_sq == 0.0 {
        return (a, 0.0);
    }
    let t = ((p - a).dot(ab) / len_sq).clamp(0.0, 1.0);
    (a + ab * t, t)
}

pub fn point_segment_distance(a: Vec2, b: Vec2, p: Vec2) -> f64 {
    closest_point_on_segment(a, b, p).0.distance(p)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rect {
    pub min: Vec2,
    pub max: Vec2,
}

impl Rect {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self { min: Vec2::new(x0.min(x1), y0.min(y1)), max: Vec2::new(x0.max(x1), y0.max(y1)) }
    }

    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn contains_rect(&self, other: &Rect) -> bool {
        self.contains(other.min) && self.contains(other.max)
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    pub fn center(&self) -> Vec2 {
        (self.min + self.max) * 0.5
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn agent_frame_round_trip() {
        let pose = Pose2::new(1.5, -2.0, 0.7);
        let p = Vec2::new(3.0, 4.0);
        let back = pose.to_world(pose.to_agent(p));
        assert!((back - p).norm() < 1e-12);
    }

    #[test]
    fn agent_frame_axes() {
        let pose = Pose2::new(0.0, 0.0, 0.0);
        // world +y is to the left of an agent facing +x
        let local = pose.to_agent(Vec2::new(0.0, 1.0));
        assert!((local.x).abs() < 1e-12 && (local.y + 1.0).abs() < 1e-12);
    }

    #[test]
    fn wrap() {
        assert!((wrap_angle(3.0 * PI) - PI).abs() < 1e-12 || (wrap_angle(3.0 * PI) + PI).abs() < 1e-12);
        assert!((wrap_angle(0.5) - 0.5).abs() < 1e-15);
        assert!((wrap_angle(-7.0) - (-7.0 + 2.0 * PI)).abs() < 1e-12);
    }

    #[test]
    fn segment_distance() {
        let d = point_segment_distance(Vec2::new(0.0, 0.0), Vec2::new(2.0, 0.0), Vec2::new(1.0, 0.3));
        assert!((d - 0.3).abs() < 1e-12);
        let d = point_segment_distance(Vec2::new(0.0, 0.0), Vec2::new(2.0, 0.0), Vec2::new(3.0, 0.0));
        assert!((d - 1.0).abs() < 1e-12);
    }
}
