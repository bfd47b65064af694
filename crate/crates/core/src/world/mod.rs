//! Continuous 2D multi-room world: entities, agents, motion and interactions.

mod interact;
mod physics;
mod vision;

pub use interact::{
    activation_target, pair_key, resolve_activate, resolve_contacts, ActivateOutcome,
    ActivationEvent, Effect, InteractionTable, MachineOutcome, PairOutcome, Product, Rule, Via,
};
pub(crate) use physics::update_plates;
pub use physics::{advance_physics, grasp_target, resolve_grasp, ContactEvent};
pub use vision::{visible_entities, Seen, Visible};

use crate::geometry::{Rect, Vec2};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Circle,
    Square,
    Triangle,
    Pentagon,
    Star,
    Cross,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Color {
    Red,
    Green,
    Blue,
    Yellow,
    Magenta,
    Cyan,
}

impl Shape {
    pub const ALL: [Shape; 6] = [
        Shape::Circle,
        Shape::Square,
        Shape::Triangle,
        Shape::Pentagon,
        Shape::Star,
        Shape::Cross,
    ];
    pub const TRAINING: [Shape; 3] = [Shape::Circle, Shape::Square, Shape::Triangle];
    pub const NOVEL: [Shape; 3] = [Shape::Pentagon, Shape::Star, Shape::Cross];

    pub fn index(self) -> usize {
        self as usize
    }

    fn name(self) -> &'static str {
        match self {
            Shape::Circle => "circle",
            Shape::Square => "square",
            Shape::Triangle => "triangle",
            Shape::Pentagon => "pentagon",
            Shape::Star => "star",
            Shape::Cross => "cross",
        }
    }
}

impl Color {
    pub const ALL: [Color; 6] = [
        Color::Red,
        Color::Green,
        Color::Blue,
        Color::Yellow,
        Color::Magenta,
        Color::Cyan,
    ];
    pub const TRAINING: [Color; 3] = [Color::Red, Color::Green, Color::Blue];
    pub const NOVEL: [Color; 3] = [Color::Yellow, Color::Magenta, Color::Cyan];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn rgb(self) -> [f64; 3] {
        match self {
            Color::Red => [1.0, 0.1, 0.1],
            Color::Green => [0.1, 1.0, 0.1],
            Color::Blue => [0.15, 0.3, 1.0],
            Color::Yellow => [1.0, 1.0, 0.1],
            Color::Magenta => [1.0, 0.1, 1.0],
            Color::Cyan => [0.1, 1.0, 1.0],
        }
    }

    fn name(self) -> &'static str {
        match self {
            Color::Red => "red",
            Color::Green => "green",
            Color::Blue => "blue",
            Color::Yellow => "yellow",
            Color::Magenta => "magenta",
            Color::Cyan => "cyan",
        }
    }
}

/// Appearance of a movable task object.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ObjectSpec {
    pub shape: Shape,
    pub color: Color,
}

impl ObjectSpec {
    pub const fn new(shape: Shape, color: Color) -> Self {
        Self { shape, color }
    }
}

impl fmt::Display for ObjectSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.color.name(), self.shape.name())
    }
}

impl FromStr for ObjectSpec {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let (c, sh) = s
            .split_once('-')
            .ok_or_else(|| format!("bad object spec `{s}`"))?;
        let color = Color::ALL
            .into_iter()
            .find(|x| x.name() == c)
            .ok_or_else(|| format!("unknown color `{c}`"))?;
        let shape = Shape::ALL
            .into_iter()
            .find(|x| x.name() == sh)
            .ok_or_else(|| format!("unknown shape `{sh}`"))?;
        Ok(Self { shape, color })
    }
}

impl TryFrom<String> for ObjectSpec {
    type Error = String;
    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl From<ObjectSpec> for String {
    fn from(s: ObjectSpec) -> String {
        s.to_string()
    }
}

/// Which set of nine task-object specs an episode draws from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectPool {
    #[default]
    Training,
    /// Held-out shapes and colors, never seen in training.
    Novel,
}

impl ObjectPool {
    pub fn specs(self) -> Vec<ObjectSpec> {
        let (shapes, colors) = match self {
            ObjectPool::Training => (Shape::TRAINING, Color::TRAINING),
            ObjectPool::Novel => (Shape::NOVEL, Color::NOVEL),
        };
        colors
            .iter()
            .flat_map(|&c| shapes.iter().map(move |&s| ObjectSpec::new(s, c)))
            .collect()
    }
}

/// Immovable objects with fixed dynamics across episodes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    Landmark,
    InOutMachine,
    DropOffPoint,
    MeetingLandmark,
    PressurePlate,
}

impl EnvKind {
    pub const ALL: [EnvKind; 5] = [
        EnvKind::Landmark,
        EnvKind::InOutMachine,
        EnvKind::DropOffPoint,
        EnvKind::MeetingLandmark,
        EnvKind::PressurePlate,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_landmark(self) -> bool {
        matches!(self, EnvKind::Landmark | EnvKind::MeetingLandmark)
    }

    pub fn rgb(self) -> [f64; 3] {
        match self {
            EnvKind::Landmark => [0.95, 0.95, 0.95],
            EnvKind::InOutMachine => [0.9, 0.55, 0.1],
            EnvKind::DropOffPoint => [0.55, 0.3, 0.1],
            EnvKind::MeetingLandmark => [0.6, 0.6, 0.95],
            EnvKind::PressurePlate => [0.5, 0.8, 0.5],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityKind {
    Task(ObjectSpec),
    Env(EnvKind),
}

impl EntityKind {
    pub fn task_spec(&self) -> Option<ObjectSpec> {
        match self {
            EntityKind::Task(s) => Some(*s),
            EntityKind::Env(_) => None,
        }
    }

    pub fn env_kind(&self) -> Option<EnvKind> {
        match self {
            EntityKind::Env(k) => Some(*k),
            EntityKind::Task(_) => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EntityId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentId(pub u8);

impl AgentId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "e{}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Entity {
    pub id: EntityId,
    pub kind: EntityKind,
    pub pos: Vec2,
    pub held_by: Option<AgentId>,
    /// First activation time of a landmark within the current window.
    pub lit_at: Option<u64>,
    /// Pressure plate occupancy.
    pub active: bool,
    /// Owning subtask stage, for stage-specific environment objects.
    pub stage: Option<u8>,
    /// The only agent allowed to activate this object, if restricted.
    pub assigned: Option<AgentId>,
}

impl Entity {
    pub fn new(id: EntityId, kind: EntityKind, pos: Vec2) -> Self {
        Self {
            id,
            kind,
            pos,
            held_by: None,
            lit_at: None,
            active: false,
            stage: None,
            assigned: None,
        }
    }

    pub fn is_task(&self) -> bool {
        matches!(self.kind, EntityKind::Task(_))
    }

    pub fn is_lit(&self) -> bool {
        self.lit_at.is_some() || self.active
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentBody {
    pub id: AgentId,
    pub pos: Vec2,
    /// Radians in `[0, 2π)`.
    pub heading: f64,
    pub held: Option<EntityId>,
}

/// One agent's command for a single step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ActionCommand {
    /// Turn rate in `[-1, 1]`, scaled by the arena's maximum turn.
    pub turn: f64,
    /// Forward speed in `[0, 1]`, scaled by the arena's maximum speed.
    pub forward: f64,
    pub grasp: bool,
    pub activate: bool,
}

impl ActionCommand {
    pub const NULL: ActionCommand = ActionCommand {
        turn: 0.0,
        forward: 0.0,
        grasp: false,
        activate: false,
    };

    pub fn clamped(self) -> Self {
        let fin = |x: f64| if x.is_finite() { x } else { 0.0 };
        Self {
            turn: fin(self.turn).clamp(-1.0, 1.0),
            forward: fin(self.forward).clamp(0.0, 1.0),
            ..self
        }
    }

    pub fn to_array(self) -> [f64; 4] {
        [
            self.turn,
            self.forward,
            self.grasp as u8 as f64,
            self.activate as u8 as f64,
        ]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self {
            turn: a[0],
            forward: a[1],
            grasp: a[2] >= 0.5,
            activate: a[3] >= 0.5,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    SingleRoom,
    TwoByTwo,
}

/// Arena geometry and kinematic constants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArenaConfig {
    pub width: f64,
    pub height: f64,
    pub layout: Layout,
    pub wall_thickness: f64,
    pub doorway: f64,
    pub agent_radius: f64,
    pub object_radius: f64,
    pub env_radius: f64,
    pub reach: f64,
    pub v_max: f64,
    pub theta_max: f64,
    pub view_radius: f64,
    /// Distance of edge-spawned environment objects from the outer wall.
    pub edge_inset: f64,
    pub plate_radius: f64,
}

impl Default for ArenaConfig {
    fn default() -> Self {
        Self {
            width: 320.0,
            height: 320.0,
            layout: Layout::TwoByTwo,
            wall_thickness: 8.0,
            doorway: 60.0,
            agent_radius: 8.0,
            object_radius: 6.0,
            env_radius: 10.0,
            reach: 20.0,
            v_max: 6.0,
            theta_max: std::f64::consts::PI / 8.0,
            view_radius: 80.0,
            edge_inset: 14.0,
            plate_radius: 16.0,
        }
    }
}

/// A doorway between two rooms.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Doorway {
    pub center: Vec2,
    /// Unit normal of the wall the doorway pierces.
    pub normal: Vec2,
    pub rooms: (usize, usize),
}

impl ArenaConfig {
    /// A single walled room, used for desk-scale training.
    pub fn single_room() -> Self {
        Self {
            width: 160.0,
            height: 160.0,
            layout: Layout::SingleRoom,
            ..Self::default()
        }
    }

    pub fn hold_offset(&self) -> f64 {
        self.agent_radius + self.object_radius
    }

    pub fn contact_distance(&self) -> f64 {
        2.0 * self.object_radius + 2.0
    }

    pub fn center(&self) -> Vec2 {
        Vec2::new(self.width / 2.0, self.height / 2.0)
    }

    /// Interior wall rectangles. The outer boundary is handled separately.
    pub fn walls(&self) -> Vec<Rect> {
        match self.layout {
            Layout::SingleRoom => Vec::new(),
            Layout::TwoByTwo => {
                let (w, h) = (self.width, self.height);
                let ht = self.wall_thickness / 2.0;
                let hd = self.doorway / 2.0;
                let (mx, my) = (w / 2.0, h / 2.0);
                let vertical = [
                    (0.0, h / 4.0 - hd),
                    (h / 4.0 + hd, 3.0 * h / 4.0 - hd),
                    (3.0 * h / 4.0 + hd, h),
                ];
                let horizontal = [
                    (0.0, w / 4.0 - hd),
                    (w / 4.0 + hd, 3.0 * w / 4.0 - hd),
                    (3.0 * w / 4.0 + hd, w),
                ];
                vertical
                    .iter()
                    .map(|&(y0, y1)| Rect::new(mx - ht, y0, mx + ht, y1))
                    .chain(
                        horizontal
                            .iter()
                            .map(|&(x0, x1)| Rect::new(x0, my - ht, x1, my + ht)),
                    )
                    .collect()
            }
        }
    }

    pub fn doorways(&self) -> Vec<Doorway> {
        match self.layout {
            Layout::SingleRoom => Vec::new(),
            Layout::TwoByTwo => {
                let (w, h) = (self.width, self.height);
                vec![
                    Doorway {
                        center: Vec2::new(w / 2.0, h / 4.0),
                        normal: Vec2::new(1.0, 0.0),
                        rooms: (0, 1),
                    },
                    Doorway {
                        center: Vec2::new(w / 2.0, 3.0 * h / 4.0),
                        normal: Vec2::new(1.0, 0.0),
                        rooms: (2, 3),
                    },
                    Doorway {
                        center: Vec2::new(w / 4.0, h / 2.0),
                        normal: Vec2::new(0.0, 1.0),
                        rooms: (0, 2),
                    },
                    Doorway {
                        center: Vec2::new(3.0 * w / 4.0, h / 2.0),
                        normal: Vec2::new(0.0, 1.0),
                        rooms: (1, 3),
                    },
                ]
            }
        }
    }

    pub fn room_count(&self) -> usize {
        match self.layout {
            Layout::SingleRoom => 1,
            Layout::TwoByTwo => 4,
        }
    }

    /// Room index: row-major, `0` top-left (low x, low y).
    pub fn room_of(&self, p: Vec2) -> usize {
        match self.layout {
            Layout::SingleRoom => 0,
            Layout::TwoByTwo => {
                let col = (p.x >= self.width / 2.0) as usize;
                let row = (p.y >= self.height / 2.0) as usize;
                row * 2 + col
            }
        }
    }

    /// Whether a disc of radius `r` centered at `p` fits inside the arena
    /// without its center entering any wall expanded by `r`.
    pub fn is_free(&self, p: Vec2, r: f64) -> bool {
        p.x >= r
            && p.x <= self.width - r
            && p.y >= r
            && p.y <= self.height - r
            && !self
                .walls()
                .iter()
                .any(|w| w.expanded(r).contains_strict(p))
    }

    /// Straight line of sight between two points, blocked by interior walls.
    pub fn line_of_sight(&self, a: Vec2, b: Vec2) -> bool {
        !self.walls().iter().any(|w| w.intersects_segment(a, b))
    }
}

/// Complete physical state of one world.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub arena: ArenaConfig,
    pub agents: Vec<AgentBody>,
    /// Sorted by id.
    pub entities: Vec<Entity>,
    pub next_id: u32,
    pub t: u64,
}

impl WorldState {
    pub fn new(arena: ArenaConfig) -> Self {
        Self {
            arena,
            agents: Vec::new(),
            entities: Vec::new(),
            next_id: 0,
            t: 0,
        }
    }

    pub fn spawn(&mut self, kind: EntityKind, pos: Vec2) -> EntityId {
        let id = EntityId(self.next_id);
        self.next_id += 1;
        self.entities.push(Entity::new(id, kind, pos));
        id
    }

    pub fn entity(&self, id: EntityId) -> Option<&Entity> {
        self.entities
            .binary_search_by_key(&id, |e| e.id)
            .ok()
            .map(|i| &self.entities[i])
    }

    pub fn entity_mut(&mut self, id: EntityId) -> Option<&mut Entity> {
        match self.entities.binary_search_by_key(&id, |e| e.id) {
            Ok(i) => Some(&mut self.entities[i]),
            Err(_) => None,
        }
    }

    /// Removes an entity, releasing it from any holder.
    pub fn remove(&mut self, id: EntityId) -> Option<Entity> {
        let i = self.entities.binary_search_by_key(&id, |e| e.id).ok()?;
        let e = self.entities.remove(i);
        if let Some(holder) = e.held_by {
            if let Some(a) = self.agent_mut(holder) {
                a.held = None;
            }
        }
        Some(e)
    }

    pub fn agent(&self, id: AgentId) -> Option<&AgentBody> {
        self.agents.iter().find(|a| a.id == id)
    }

    pub fn agent_mut(&mut self, id: AgentId) -> Option<&mut AgentBody> {
        self.agents.iter_mut().find(|a| a.id == id)
    }

    pub fn count_spec(&self, spec: ObjectSpec) -> usize {
        self.entities
            .iter()
            .filter(|e| e.kind == EntityKind::Task(spec))
            .count()
    }

    pub fn plate_active(&self) -> bool {
        self.entities
            .iter()
            .any(|e| e.kind == EntityKind::Env(EnvKind::PressurePlate) && e.active)
    }

    /// Stable digest of the full state, used to detect replay divergence.
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        h.update(self.t.to_le_bytes());
        for a in &self.agents {
            h.update([a.id.0]);
            h.update(a.pos.x.to_bits().to_le_bytes());
            h.update(a.pos.y.to_bits().to_le_bytes());
            h.update(a.heading.to_bits().to_le_bytes());
            h.update(a.held.map_or(u32::MAX, |e| e.0).to_le_bytes());
        }
        for e in &self.entities {
            h.update(e.id.0.to_le_bytes());
            h.update(format!("{:?}", e.kind).as_bytes());
            h.update(e.pos.x.to_bits().to_le_bytes());
            h.update(e.pos.y.to_bits().to_le_bytes());
            h.update(e.held_by.map_or(u8::MAX, |a| a.0).to_le_bytes());
            h.update(e.lit_at.unwrap_or(u64::MAX).to_le_bytes());
            h.update([e.active as u8]);
        }
        let out = h.finalize();
        out[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_distinct_training_specs() {
        let specs = ObjectPool::Training.specs();
        assert_eq!(specs.len(), 9);
        let mut d = specs.clone();
        d.sort();
        d.dedup();
        assert_eq!(d.len(), 9);
        let novel = ObjectPool::Novel.specs();
        assert!(novel.iter().all(|s| !specs.contains(s)));
    }

    #[test]
    fn spec_string_round_trip() {
        for s in ObjectPool::Training
            .specs()
            .into_iter()
            .chain(ObjectPool::Novel.specs())
        {
            assert_eq!(s.to_string().parse::<ObjectSpec>().unwrap(), s);
        }
        assert!("purple-circle".parse::<ObjectSpec>().is_err());
    }

    #[test]
    fn two_by_two_has_one_doorway_per_shared_wall() {
        let a = ArenaConfig::default();
        let walls = a.walls();
        assert_eq!(walls.len(), 6);
        for d in a.doorways() {
            // The doorway center is open and 60 units wide.
            assert!(a.is_free(d.center, a.agent_radius));
            let along = Vec2::new(d.normal.y, d.normal.x);
            assert!(a.is_free(d.center + along * 21.0, a.agent_radius));
            assert!(!a.is_free(d.center + along * 31.0, a.agent_radius));
        }
    }

    #[test]
    fn rooms_are_quadrants() {
        let a = ArenaConfig::default();
        assert_eq!(a.room_of(Vec2::new(10.0, 10.0)), 0);
        assert_eq!(a.room_of(Vec2::new(300.0, 10.0)), 1);
        assert_eq!(a.room_of(Vec2::new(10.0, 300.0)), 2);
        assert_eq!(a.room_of(Vec2::new(300.0, 300.0)), 3);
    }
}
