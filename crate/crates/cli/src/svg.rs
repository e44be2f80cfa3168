//! Overhead SVG of one episode: map, pedestrian tracks, agent path and
//! collision markers.

use std::fmt::Write;

use socnav_core::agent::EpisodeLog;
use socnav_core::geometry::Vec2;
use socnav_core::world::{pedestrian_state_at, Episode};

const PX_PER_M: f64 = 40.0;
const MARGIN: f64 = 20.0;
const PED_COLORS: [&str; 4] = ["#d62728", "#9467bd", "#8c564b", "#e377c2"];

struct Frame {
    min: Vec2,
    height: f64,
}

impl Frame {
    fn x(&self, p: Vec2) -> f64 {
        MARGIN + (p.x - self.min.x) * PX_PER_M
    }

    fn y(&self, p: Vec2) -> f64 {
        MARGIN + (self.height - (p.y - self.min.y)) * PX_PER_M
    }

    fn polyline(&self, pts: &[Vec2]) -> String {
        pts.iter().map(|&p| format!("{:.1},{:.1}", self.x(p), self.y(p))).collect::<Vec<_>>().join(" ")
    }
}

pub fn render(episode: &Episode, log: &EpisodeLog, dt: f64) -> String {
    let b = *episode.map.bounds();
    let f = Frame { min: b.min, height: b.height() };
    let (w, h) = (b.width() * PX_PER_M + 2.0 * MARGIN, b.height() * PX_PER_M + 2.0 * MARGIN);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.0} {h:.0}">"#
    );
    let _ = writeln!(s, "<title>{}</title>", log.episode_id);
    let _ = writeln!(
        s,
        r##"<rect x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="#fafafa" stroke="#333"/>"##,
        f.x(b.min),
        f.y(b.max),
        b.width() * PX_PER_M,
        b.height() * PX_PER_M
    );
    for r in episode.map.obstacles() {
        let _ = writeln!(
            s,
            r##"<rect x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="#999"/>"##,
            f.x(r.min),
            f.y(r.max),
            r.width() * PX_PER_M,
            r.height() * PX_PER_M
        );
    }
    for o in episode.map.objects() {
        let _ = writeln!(
            s,
            r##"<rect x="{:.1}" y="{:.1}" width="8" height="8" fill="#2ca02c"/><text x="{:.1}" y="{:.1}" font-size="10">{}</text>"##,
            f.x(o.position) - 4.0,
            f.y(o.position) - 4.0,
            f.x(o.position) + 6.0,
            f.y(o.position) - 6.0,
            o.class
        );
    }
    let t_end = log.steps.last().map(|s| s.t).unwrap_or(0).max(1) + 20;
    for (k, p) in episode.pedestrians.iter().enumerate() {
        let track: Vec<Vec2> = (0..=t_end).map(|t| pedestrian_state_at(&p.script, t, dt).position).collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.5" stroke-dasharray="4 2"/>"#,
            f.polyline(&track),
            PED_COLORS[k % PED_COLORS.len()]
        );
    }
    let mut path: Vec<Vec2> = log.steps.iter().map(|s| s.pose.position()).collect();
    path.push(log.final_position);
    let _ =
        writeln!(s, r##"<polyline points="{}" fill="none" stroke="#1f77b4" stroke-width="2.5"/>"##, f.polyline(&path));
    let start = episode.start.position();
    let _ = writeln!(s, r##"<circle cx="{:.1}" cy="{:.1}" r="6" fill="#1f77b4"/>"##, f.x(start), f.y(start));
    let g = episode.goal;
    let _ = writeln!(
        s,
        r##"<circle cx="{:.1}" cy="{:.1}" r="{:.1}" fill="none" stroke="#ff7f0e" stroke-dasharray="3 3"/><circle cx="{:.1}" cy="{:.1}" r="5" fill="#ff7f0e"/>"##,
        f.x(g),
        f.y(g),
        3.0 * PX_PER_M,
        f.x(g),
        f.y(g)
    );
    for step in &log.steps {
        for ev in &step.collisions {
            if let Some(p) = episode.pedestrians.iter().find(|p| p.id == ev.pedestrian) {
                let at = pedestrian_state_at(&p.script, ev.t, dt).position;
                let _ = writeln!(
                    s,
                    r##"<path d="M{:.1},{:.1} l8,8 m0,-8 l-8,8" stroke="#000" stroke-width="2"/>"##,
                    f.x(at) - 4.0,
                    f.y(at) - 4.0
                );
            }
        }
    }
    s.push_str("</svg>\n");
    s
}
