use super::{AgentBody, AgentId, Entity, WorldState};
use crate::geometry::Vec2;

#[derive(Clone, Debug, PartialEq)]
pub enum Seen {
    Entity(Entity),
    Agent(AgentBody),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Visible {
    pub seen: Seen,
    /// Offset from the observer in world axes.
    pub rel: Vec2,
    pub distance: f64,
}

/// Everything whose center is within `view_radius` of the agent (closed
/// ball) and not hidden behind a wall, nearest first. The observer itself
/// is excluded.
pub fn visible_entities(state: &WorldState, agent_id: AgentId, view_radius: f64) -> Vec<Visible> {
    let Some(me) = state.agent(agent_id) else {
        return Vec::new();
    };
    let walls = state.arena.walls();
    let visible = |p: Vec2| {
        p.distance(me.pos) <= view_radius && !walls.iter().any(|w| w.intersects_segment(me.pos, p))
    };
    let mut out: Vec<(u8, u32, Visible)> = Vec::new();
    for e in &state.entities {
        if visible(e.pos) {
            out.push((
                0,
                e.id.0,
                Visible {
                    seen: Seen::Entity(e.clone()),
                    rel: e.pos - me.pos,
                    distance: e.pos.distance(me.pos),
                },
            ));
        }
    }
    for a in state.agents.iter().filter(|a| a.id != agent_id) {
        if visible(a.pos) {
            out.push((
                1,
                a.id.0 as u32,
                Visible {
                    seen: Seen::Agent(a.clone()),
                    rel: a.pos - me.pos,
                    distance: a.pos.distance(me.pos),
                },
            ));
        }
    }
    out.sort_by(|a, b| {
        a.2.distance
            .total_cmp(&b.2.distance)
            .then((a.0, a.1).cmp(&(b.0, b.1)))
    });
    out.into_iter().map(|(_, _, v)| v).collect()
}
