//! Waypoint navigation through doorways and heading-then-advance steering.

use crate::geometry::{wrap_delta, Vec2};
use crate::world::{ActionCommand, AgentBody, AgentId, ArenaConfig, Doorway, WorldState};

/// Distance of the approach points in front of and behind a doorway.
const DOOR_APPROACH: f64 = 24.0;
/// Remaining heading error below which the agent moves while turning.
const ALIGNED: f64 = 0.5;

fn room_center(arena: &ArenaConfig, room: usize) -> Vec2 {
    match arena.room_count() {
        1 => arena.center(),
        _ => Vec2::new(
            ((room % 2) as f64 + 0.5) * arena.width / 2.0,
            ((room / 2) as f64 + 0.5) * arena.height / 2.0,
        ),
    }
}

fn door_between(arena: &ArenaConfig, a: usize, b: usize) -> Option<Doorway> {
    arena
        .doorways()
        .into_iter()
        .find(|d| d.rooms == (a, b) || d.rooms == (b, a))
}

/// Approach points on the `from` side and the far side of a doorway.
fn door_points(arena: &ArenaConfig, d: &Doorway, from: usize) -> (Vec2, Vec2) {
    let side = if (room_center(arena, from) - d.center).dot(d.normal) >= 0.0 {
        1.0
    } else {
        -1.0
    };
    (
        d.center + d.normal * (side * DOOR_APPROACH),
        d.center - d.normal * (side * DOOR_APPROACH),
    )
}

/// Rooms visited on the way from room `a` to room `b`, both included.
fn room_path(arena: &ArenaConfig, from: Vec2, to: Vec2) -> Vec<usize> {
    let (a, b) = (arena.room_of(from), arena.room_of(to));
    if a == b {
        return vec![a];
    }
    if door_between(arena, a, b).is_some() {
        return vec![a, b];
    }
    (0..arena.room_count())
        .filter(|&m| door_between(arena, a, m).is_some() && door_between(arena, m, b).is_some())
        .map(|m| {
            let d1 = door_between(arena, a, m).unwrap().center;
            let d2 = door_between(arena, m, b).unwrap().center;
            (from.distance(d1) + d1.distance(d2) + d2.distance(to), m)
        })
        .min_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)))
        .map_or(vec![a, b], |(_, m)| vec![a, m, b])
}

/// Full waypoint list from `from` to `to`, ending at `to`.
pub fn route(arena: &ArenaConfig, from: Vec2, to: Vec2) -> Vec<Vec2> {
    let rooms = room_path(arena, from, to);
    let mut out = Vec::new();
    for w in rooms.windows(2) {
        if let Some(d) = door_between(arena, w[0], w[1]) {
            let (pre, post) = door_points(arena, &d, w[0]);
            out.push(pre);
            out.push(post);
        }
    }
    out.push(to);
    out
}

/// The point to head for right now.
pub fn next_waypoint(arena: &ArenaConfig, from: Vec2, to: Vec2) -> Vec2 {
    let rooms = room_path(arena, from, to);
    if rooms.len() < 2 {
        return to;
    }
    let Some(d) = door_between(arena, rooms[0], rooms[1]) else {
        return to;
    };
    let (pre, post) = door_points(arena, &d, rooms[0]);
    let off = from - d.center;
    let along = off.dot(d.normal).abs();
    let lateral = off.dot(Vec2::new(-d.normal.y, d.normal.x)).abs();
    let clearance = arena.doorway / 2.0 - arena.agent_radius - 4.0;
    if along <= DOOR_APPROACH + 2.0 && lateral <= clearance {
        post
    } else {
        pre
    }
}

/// Turns toward `point` and advances once roughly aligned. Within `arrive`
/// of the point the command is motionless.
pub fn steer(body: &AgentBody, arena: &ArenaConfig, point: Vec2, arrive: f64) -> ActionCommand {
    let d = point - body.pos;
    let dist = d.length();
    if dist <= arrive {
        return ActionCommand::NULL;
    }
    let delta = wrap_delta(d.y.atan2(d.x) - body.heading);
    let turn = (delta / arena.theta_max).clamp(-1.0, 1.0);
    let rest = delta - turn * arena.theta_max;
    let forward = if rest.abs() < ALIGNED {
        (dist / arena.v_max).min(1.0)
    } else {
        0.0
    };
    ActionCommand {
        turn,
        forward,
        grasp: false,
        activate: false,
    }
}

/// Moves toward `target` through doorways; motionless within `arrive`.
pub fn navigate_within(
    state: &WorldState,
    agent: AgentId,
    target: Vec2,
    arrive: f64,
) -> ActionCommand {
    let Some(body) = state.agent(agent) else {
        return ActionCommand::NULL;
    };
    if body.pos.distance(target) <= arrive {
        return ActionCommand::NULL;
    }
    let wp = next_waypoint(&state.arena, body.pos, target);
    let arrive = if wp == target { arrive } else { 0.0 };
    steer(body, &state.arena, wp, arrive)
}

/// Moves toward `target`, stopping once it is within reach.
pub fn navigate(state: &WorldState, agent: AgentId, target: Vec2) -> ActionCommand {
    navigate_within(state, agent, target, state.arena.reach)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::advance_physics;

    fn world(pos: Vec2, heading: f64) -> WorldState {
        let mut w = WorldState::new(ArenaConfig::default());
        w.agents.push(AgentBody {
            id: AgentId(0),
            pos,
            heading,
            held: None,
        });
        w
    }

    fn run(w: &mut WorldState, target: Vec2, arrive: f64, limit: usize) -> Option<usize> {
        for i in 0..limit {
            if w.agents[0].pos.distance(target) <= arrive {
                return Some(i);
            }
            let c = navigate_within(w, AgentId(0), target, arrive);
            advance_physics(w, &[(AgentId(0), c)]);
        }
        None
    }

    #[test]
    fn same_room_bound() {
        let a = ArenaConfig::default();
        for (start, heading, target) in [
            (Vec2::new(40.0, 40.0), 0.0, Vec2::new(120.0, 120.0)),
            (Vec2::new(120.0, 30.0), 2.5, Vec2::new(30.0, 130.0)),
            (Vec2::new(200.0, 200.0), -1.0, Vec2::new(300.0, 300.0)),
        ] {
            let mut w = world(start, heading);
            let dist = start.distance(target) - a.reach;
            let delta = wrap_delta((target - start).y.atan2((target - start).x) - heading).abs();
            let bound =
                (dist / a.v_max).ceil() as usize + (delta / a.theta_max).ceil() as usize + 1;
            let steps = run(&mut w, target, a.reach, 500).unwrap();
            assert!(steps <= bound, "{steps} > {bound}");
        }
    }

    #[test]
    fn diagonal_route_uses_two_doorways() {
        let a = ArenaConfig::default();
        let r = route(&a, Vec2::new(40.0, 40.0), Vec2::new(280.0, 280.0));
        let doors = a.doorways();
        let near_door = |p: &Vec2| doors.iter().any(|d| p.distance(d.center) <= 25.0);
        let used: Vec<_> = doors
            .iter()
            .filter(|d| r.iter().any(|p| p.distance(d.center) <= 25.0))
            .collect();
        assert!(used.len() >= 2, "{r:?}");
        assert_eq!(r.iter().filter(|p| near_door(p)).count(), 4);
        let mut w = world(Vec2::new(40.0, 40.0), 0.0);
        assert!(run(&mut w, Vec2::new(280.0, 280.0), 2.0, 400).is_some());
    }

    #[test]
    fn reaches_every_room_from_every_room() {
        let a = ArenaConfig::default();
        let pts = [
            Vec2::new(30.0, 30.0),
            Vec2::new(290.0, 40.0),
            Vec2::new(40.0, 290.0),
            Vec2::new(280.0, 280.0),
            Vec2::new(140.0, 20.0),
            Vec2::new(20.0, 140.0),
        ];
        for &s in &pts {
            for &t in &pts {
                let mut w = world(s, 1.0);
                assert!(run(&mut w, t, 2.0, 600).is_some(), "{s:?} -> {t:?}");
                assert!(a.is_free(w.agents[0].pos, a.agent_radius));
            }
        }
    }

    #[test]
    fn own_position_means_no_motion() {
        let w = world(Vec2::new(50.0, 50.0), 0.4);
        assert_eq!(
            navigate(&w, AgentId(0), Vec2::new(50.0, 50.0)),
            ActionCommand::NULL
        );
    }
}
