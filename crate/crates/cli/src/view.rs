//! Text rendering of trees and worlds, and key parsing for human play.

use cotask::episode::{Episode, WorldSlot};
use cotask::geometry::Vec2;
use cotask::task::{EndKind, TaskTree};
use cotask::world::{ActionCommand, EntityKind, EnvKind};
use std::fmt::Write;

const COLS: usize = 64;
const ROWS: usize = 32;

fn join_specs(specs: &[cotask::world::ObjectSpec]) -> String {
    if specs.is_empty() {
        return "-".into();
    }
    specs
        .iter()
        .map(|s| s.to_string())
        .collect::<Vec<_>>()
        .join(" + ")
}

/// One line per stage plus the end condition.
pub fn describe_tree(tree: &TaskTree) -> String {
    let mut out = String::new();
    for st in &tree.subtasks {
        let mut extra = Vec::new();
        let p = &st.params;
        if p.landmarks > 0 {
            extra.push(format!("{} landmark(s)", p.landmarks));
        }
        if let Some(w) = p.window {
            extra.push(format!("window {w}"));
        }
        if let Some(l) = p.lemon {
            extra.push(format!("becomes {l}"));
        }
        if let Some([a, b]) = p.roles {
            extra.push(format!("roles {} {}", a.0, b.0));
        }
        if p.plate_gated {
            extra.push("plate gated".into());
        }
        let extra = if extra.is_empty() {
            String::new()
        } else {
            format!(" ({})", extra.join(", "))
        };
        let _ = writeln!(
            out,
            "stage {} {}: {} -> {}{extra}",
            st.stage,
            st.task.name(),
            join_specs(&st.inputs),
            join_specs(&st.outputs),
        );
    }
    let kind = match tree.end.kind {
        EndKind::ObjectExists => "exists",
        EndKind::ObjectNotExists => "does not exist",
    };
    let _ = writeln!(out, "end: {} {kind}", tree.end.target);
    out
}

fn env_char(kind: EnvKind, lit: bool) -> char {
    match (kind, lit) {
        (EnvKind::Landmark, false) => 'L',
        (EnvKind::Landmark, true) => 'l',
        (EnvKind::MeetingLandmark, false) => 'G',
        (EnvKind::MeetingLandmark, true) => 'g',
        (EnvKind::InOutMachine, _) => 'M',
        (EnvKind::DropOffPoint, _) => 'D',
        (EnvKind::PressurePlate, false) => 'P',
        (EnvKind::PressurePlate, true) => 'p',
    }
}

/// Top-down map of one world, north up, with a legend.
pub fn render_slot(slot: &WorldSlot) -> String {
    let w = &slot.world;
    let a = &w.arena;
    let cell = |p: Vec2| {
        let c = ((p.x / a.width) * COLS as f64).floor() as isize;
        let r = ROWS as isize - 1 - ((p.y / a.height) * ROWS as f64).floor() as isize;
        (
            r.clamp(0, ROWS as isize - 1) as usize,
            c.clamp(0, COLS as isize - 1) as usize,
        )
    };
    let walls = a.walls();
    let mut grid = vec![[' '; COLS]; ROWS];
    for (r, row) in grid.iter_mut().enumerate() {
        for (c, ch) in row.iter_mut().enumerate() {
            let p = Vec2::new(
                (c as f64 + 0.5) * a.width / COLS as f64,
                (ROWS as f64 - r as f64 - 0.5) * a.height / ROWS as f64,
            );
            if walls.iter().any(|wr| wr.contains(p)) {
                *ch = '#';
            } else {
                *ch = '.';
            }
        }
    }
    let mut legend = Vec::new();
    let mut letter = b'a';
    for e in &w.entities {
        let (r, c) = cell(e.pos);
        let ch = match e.kind {
            EntityKind::Env(k) => env_char(k, e.is_lit()),
            EntityKind::Task(spec) => {
                let ch = letter as char;
                letter = if letter == b'z' { b'a' } else { letter + 1 };
                let held = e
                    .held_by
                    .map(|h| format!(" held by {}", h.0))
                    .unwrap_or_default();
                legend.push(format!("  {ch} {} {spec}{held}", e.id));
                ch
            }
        };
        grid[r][c] = ch;
    }
    for ag in &w.agents {
        let (r, c) = cell(ag.pos);
        grid[r][c] = char::from(b'0' + ag.id.0);
    }
    let mut out = String::new();
    for row in &grid {
        out.extend(row.iter());
        out.push('\n');
    }
    for ag in &w.agents {
        let held = ag
            .held
            .and_then(|id| w.entity(id))
            .and_then(|e| e.kind.task_spec())
            .map(|s| format!(", holding {s}"))
            .unwrap_or_default();
        let _ = writeln!(
            out,
            "agent {} at ({:.0}, {:.0}) heading {:.0} deg{held}",
            ag.id.0,
            ag.pos.x,
            ag.pos.y,
            ag.heading.to_degrees()
        );
    }
    for l in legend {
        out.push_str(&l);
        out.push('\n');
    }
    out
}

/// Every world of the episode with its stage status.
pub fn render_episode(ep: &Episode) -> String {
    let mut out = format!("t = {}  mode {:?}\n", ep.t(), ep.mode());
    for (k, slot) in ep.slots().iter().enumerate() {
        let agents: Vec<String> = slot.agents.iter().map(|a| a.0.to_string()).collect();
        let stages: String = slot
            .progress
            .completed
            .iter()
            .map(|&c| if c { 'x' } else { '_' })
            .collect();
        let _ = writeln!(
            out,
            "world {k} (agents {}) stages [{stages}]",
            agents.join(",")
        );
        out.push_str(&describe_tree(&slot.tree));
        out.push_str(&render_slot(slot));
    }
    out
}

/// Key help for human play.
pub const KEY_HELP: &str = "keys: w forward, a turn left, d turn right, g hold grasp, e activate; \
     `|` separates agent 0 from agent 1; empty line waits; q quits";

/// Parses one input line into commands. `held` carries each agent's grasp
/// state between steps: `g` toggles it, since grasping is hold-to-keep.
/// Returns `None` on quit.
pub fn parse_keys(line: &str, held: &mut [bool; 2]) -> Option<[ActionCommand; 2]> {
    let line = line.trim();
    if line == "q" {
        return None;
    }
    let mut parts = line.splitn(2, '|');
    let mut cmds = [ActionCommand::NULL; 2];
    for (i, cmd) in cmds.iter_mut().enumerate() {
        let keys = parts.next().unwrap_or("");
        for k in keys.chars() {
            match k {
                'w' => cmd.forward = 1.0,
                'a' => cmd.turn = 1.0,
                'd' => cmd.turn = -1.0,
                'g' => held[i] = !held[i],
                'e' => cmd.activate = true,
                _ => {}
            }
        }
        cmd.grasp = held[i];
    }
    Some(cmds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use cotask::episode::EpisodeConfig;

    #[test]
    fn keys_map_to_channels() {
        let mut held = [false; 2];
        let c = parse_keys("wa g|de", &mut held).unwrap();
        assert_eq!(c[0].forward, 1.0);
        assert_eq!(c[0].turn, 1.0);
        assert!(c[0].grasp);
        assert_eq!(c[1].turn, -1.0);
        assert!(c[1].activate && !c[1].grasp);
        let c = parse_keys("", &mut held).unwrap();
        assert!(c[0].grasp, "grasp stays held");
        assert_eq!(c[0].forward, 0.0);
        assert!(parse_keys("q", &mut held).is_none());
    }

    #[test]
    fn render_shows_agents_and_walls() {
        let (ep, _) = Episode::reset(&EpisodeConfig::default().with_seed(3)).unwrap();
        let text = render_episode(&ep);
        assert!(text.contains('0') && text.contains('1'));
        assert!(text.contains('#'));
        assert!(text.contains("stage 1"));
        let map_rows = text.lines().filter(|l| l.len() == COLS).count();
        assert!(map_rows >= ROWS);
    }
}
