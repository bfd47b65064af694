//! Egocentric observations: a fixed-width symbolic vector or a heading-up
//! 64×64 RGB image. Both are computed from the physical world alone.

use crate::geometry::Vec2;
use crate::world::{visible_entities, AgentId, EntityKind, EnvKind, Seen, Shape, WorldState};
use std::f64::consts::{PI, TAU};

pub const SLOTS: usize = 16;
/// shape(6) color(6) env kind(5) rel x, rel y, held by self, held by other,
/// active, is agent.
pub const SLOT_WIDTH: usize = 23;
/// Slots plus sin/cos of heading and a held flag.
pub const SYMBOLIC_WIDTH: usize = SLOTS * SLOT_WIDTH + 3;
pub const PIXEL_SIZE: usize = 64;

#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub view: Vec<f64>,
    pub prev_action: [f64; 4],
    pub prev_reward: f64,
}

pub fn symbolic_obs(state: &WorldState, agent: AgentId) -> Vec<f64> {
    let mut out = vec![0.0; SYMBOLIC_WIDTH];
    let Some(me) = state.agent(agent) else {
        return out;
    };
    let radius = state.arena.view_radius;
    for (slot, v) in visible_entities(state, agent, radius)
        .iter()
        .take(SLOTS)
        .enumerate()
    {
        let f = &mut out[slot * SLOT_WIDTH..(slot + 1) * SLOT_WIDTH];
        let rel = v.rel.into_frame(me.heading);
        f[17] = rel.x / radius;
        f[18] = rel.y / radius;
        match &v.seen {
            Seen::Entity(e) => {
                match e.kind {
                    EntityKind::Task(s) => {
                        f[s.shape.index()] = 1.0;
                        f[6 + s.color.index()] = 1.0;
                    }
                    EntityKind::Env(k) => f[12 + k.index()] = 1.0,
                }
                f[19] = (e.held_by == Some(agent)) as u8 as f64;
                f[20] = e.held_by.is_some_and(|h| h != agent) as u8 as f64;
                f[21] = (e.is_lit() || e.active) as u8 as f64;
            }
            Seen::Agent(a) => {
                f[20] = a.held.is_some() as u8 as f64;
                f[22] = 1.0;
            }
        }
    }
    let tail = SLOTS * SLOT_WIDTH;
    out[tail] = me.heading.sin();
    out[tail + 1] = me.heading.cos();
    out[tail + 2] = me.held.is_some() as u8 as f64;
    out
}

fn regular_polygon(d: Vec2, r: f64, n: usize) -> bool {
    let dist = d.length();
    if dist == 0.0 {
        return true;
    }
    let sector = TAU / n as f64;
    let theta = (d.y.atan2(d.x) - PI / 2.0).rem_euclid(sector) - sector / 2.0;
    dist * theta.cos() <= r * (PI / n as f64).cos()
}

/// Whether offset `d` from an object's center falls inside its outline.
pub fn shape_contains(shape: Shape, d: Vec2, r: f64) -> bool {
    match shape {
        Shape::Circle => d.length() <= r,
        Shape::Square => d.x.abs().max(d.y.abs()) <= 0.85 * r,
        Shape::Triangle => regular_polygon(d, r, 3),
        Shape::Pentagon => regular_polygon(d, r, 5),
        Shape::Star => {
            let theta = d.y.atan2(d.x) - PI / 2.0;
            let spike = (0.5 + 0.5 * (5.0 * theta).cos()).powi(2);
            d.length() <= r * (0.45 + 0.55 * spike)
        }
        Shape::Cross => {
            let (x, y) = (d.x.abs(), d.y.abs());
            (x <= r / 3.0 && y <= r) || (y <= r / 3.0 && x <= r)
        }
    }
}

const FLOOR: [f64; 3] = [0.15, 0.15, 0.15];
const WALL: [f64; 3] = [0.5, 0.5, 0.5];
const AGENT: [f64; 3] = [0.95, 0.95, 0.95];

/// Heading-up image of everything within view radius, channel-major
/// (`[c][row][col]`), forward pointing to the top row. Pixels beyond the
/// radius or hidden behind walls are black.
pub fn render_pixel_obs(state: &WorldState, agent: AgentId) -> Vec<f64> {
    let n = PIXEL_SIZE;
    let mut img = vec![0.0; 3 * n * n];
    let Some(me) = state.agent(agent) else {
        return img;
    };
    let a = &state.arena;
    let radius = a.view_radius;
    let fwd = Vec2::from_angle(me.heading);
    let right = Vec2::new(fwd.y, -fwd.x);
    let walls = a.walls();
    let mut seen = visible_entities(state, agent, radius);
    seen.reverse();
    for row in 0..n {
        for col in 0..n {
            let u = ((col as f64 + 0.5) / n as f64) * 2.0 - 1.0;
            let v = 1.0 - ((row as f64 + 0.5) / n as f64) * 2.0;
            if u * u + v * v > 1.0 {
                continue;
            }
            let p = me.pos + right * (u * radius) + fwd * (v * radius);
            let inside = p.x >= 0.0 && p.y >= 0.0 && p.x <= a.width && p.y <= a.height;
            let color = if !inside || walls.iter().any(|w| w.contains(p)) {
                WALL
            } else if !a.line_of_sight(me.pos, p) {
                continue;
            } else {
                let mut c = FLOOR;
                for vis in &seen {
                    let (hit, rgb) = match &vis.seen {
                        Seen::Entity(e) => match e.kind {
                            EntityKind::Task(s) => (
                                shape_contains(s.shape, p - e.pos, a.object_radius),
                                s.color.rgb(),
                            ),
                            EntityKind::Env(k) => {
                                let r = if k == EnvKind::PressurePlate {
                                    a.plate_radius
                                } else {
                                    a.env_radius
                                };
                                let lit = if e.is_lit() || e.active { 1.0 } else { 0.6 };
                                (p.distance(e.pos) <= r, k.rgb().map(|x| x * lit))
                            }
                        },
                        Seen::Agent(o) => (p.distance(o.pos) <= a.agent_radius, AGENT),
                    };
                    if hit {
                        c = rgb;
                    }
                }
                c
            };
            for ch in 0..3 {
                img[ch * n * n + row * n + col] = color[ch];
            }
        }
    }
    img
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{AgentBody, ArenaConfig, Color, ObjectSpec};

    fn alone(pos: Vec2, heading: f64) -> WorldState {
        let mut w = WorldState::new(ArenaConfig::default());
        w.agents.push(AgentBody {
            id: AgentId(0),
            pos,
            heading,
            held: None,
        });
        w
    }

    #[test]
    fn symbolic_width_and_slots() {
        let mut w = alone(Vec2::new(80.0, 80.0), 0.0);
        let spec = ObjectSpec::new(Shape::Square, Color::Blue);
        w.spawn(EntityKind::Task(spec), Vec2::new(80.0, 120.0));
        w.spawn(EntityKind::Env(EnvKind::Landmark), Vec2::new(100.0, 80.0));
        let o = symbolic_obs(&w, AgentId(0));
        assert_eq!(o.len(), SYMBOLIC_WIDTH);
        // Nearest first: the landmark at distance 20 straight ahead.
        assert_eq!(o[12], 1.0);
        assert!((o[18] - 0.25).abs() < 1e-12 && o[17].abs() < 1e-12);
        let s = &o[SLOT_WIDTH..2 * SLOT_WIDTH];
        assert_eq!(s[Shape::Square.index()], 1.0);
        assert_eq!(s[6 + Color::Blue.index()], 1.0);
        // Left of a +x heading is +y, so right coordinate is negative.
        assert!((s[17] + 0.5).abs() < 1e-12);
        assert!(o[2 * SLOT_WIDTH..SLOTS * SLOT_WIDTH]
            .iter()
            .all(|x| *x == 0.0));
    }

    #[test]
    fn overflow_truncated_to_slots() {
        let mut w = alone(Vec2::new(80.0, 80.0), 0.0);
        for i in 0..20 {
            let a = i as f64 * TAU / 20.0;
            w.spawn(
                EntityKind::Task(ObjectSpec::new(Shape::Circle, Color::Red)),
                Vec2::new(80.0, 80.0) + Vec2::from_angle(a) * (20.0 + i as f64),
            );
        }
        let o = symbolic_obs(&w, AgentId(0));
        assert_eq!(o.len(), SYMBOLIC_WIDTH);
        assert!(o[(SLOTS - 1) * SLOT_WIDTH] == 1.0);
    }

    #[test]
    fn empty_room_renders_only_floor_and_walls() {
        let w = alone(Vec2::new(80.0, 80.0), 0.3);
        let img = render_pixel_obs(&w, AgentId(0));
        assert_eq!(img.len(), 3 * PIXEL_SIZE * PIXEL_SIZE);
        for px in 0..PIXEL_SIZE * PIXEL_SIZE {
            let c = [
                img[px],
                img[PIXEL_SIZE * PIXEL_SIZE + px],
                img[2 * PIXEL_SIZE * PIXEL_SIZE + px],
            ];
            assert!(c == [0.0; 3] || c == FLOOR || c == WALL, "{c:?}");
        }
    }

    #[test]
    fn rotation_by_pi_rotates_image() {
        let mut w = alone(Vec2::new(80.0, 80.0), 0.0);
        w.spawn(
            EntityKind::Task(ObjectSpec::new(Shape::Triangle, Color::Green)),
            Vec2::new(110.0, 95.0),
        );
        w.spawn(
            EntityKind::Env(EnvKind::DropOffPoint),
            Vec2::new(40.0, 60.0),
        );
        let a = render_pixel_obs(&w, AgentId(0));
        w.agents[0].heading = PI;
        let b = render_pixel_obs(&w, AgentId(0));
        let n = PIXEL_SIZE;
        let mut diff = 0;
        for ch in 0..3 {
            for r in 0..n {
                for c in 0..n {
                    if a[ch * n * n + r * n + c] != b[ch * n * n + (n - 1 - r) * n + (n - 1 - c)] {
                        diff += 1;
                    }
                }
            }
        }
        assert!(diff <= 3 * n * n / 200, "{diff} pixels differ");
    }

    #[test]
    fn entity_just_outside_radius_absent() {
        let mut w = alone(Vec2::new(80.0, 80.0), 0.0);
        let base = render_pixel_obs(&w, AgentId(0));
        w.spawn(
            EntityKind::Env(EnvKind::Landmark),
            Vec2::new(80.0 + 80.5, 80.0),
        );
        assert_eq!(render_pixel_obs(&w, AgentId(0)), base);
        w.spawn(
            EntityKind::Env(EnvKind::Landmark),
            Vec2::new(80.0, 80.0 + 79.0),
        );
        assert_ne!(render_pixel_obs(&w, AgentId(0)), base);
    }

    #[test]
    fn shapes_are_distinct() {
        let r = 6.0;
        let mut masks = Vec::new();
        for s in Shape::ALL {
            let mut m = Vec::new();
            for i in -12..=12 {
                for j in -12..=12 {
                    m.push(shape_contains(
                        s,
                        Vec2::new(i as f64 * 0.5, j as f64 * 0.5),
                        r,
                    ));
                }
            }
            assert!(m.iter().any(|x| *x));
            masks.push(m);
        }
        for i in 0..masks.len() {
            for j in i + 1..masks.len() {
                assert_ne!(masks[i], masks[j]);
            }
        }
    }
}
