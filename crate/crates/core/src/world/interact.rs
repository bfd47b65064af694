//! Per-episode interaction dynamics: pair combinations, activation outcomes
//! and machine rules, plus the events they emit.

use super::physics::ContactEvent;
use super::{AgentId, EntityId, EntityKind, EnvKind, ObjectSpec, WorldState};
use crate::geometry::Vec2;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairOutcome {
    /// Both inputs disappear and a new object appears in their place.
    Spawn(ObjectSpec),
    DespawnBoth,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivateOutcome {
    Become(ObjectSpec),
    Consume,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MachineOutcome {
    SwitchTo(ObjectSpec),
    Consume,
}

/// A transformation owned by one subtask stage. It fires at most once per
/// episode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rule<O> {
    pub outcome: O,
    pub stage: u8,
    /// Restricts the rule to one agent (forced-cooperation roles).
    pub actor: Option<AgentId>,
    /// Only applies while a pressure plate is occupied.
    pub needs_plate: bool,
    pub spent: bool,
}

impl<O> Rule<O> {
    pub fn new(outcome: O, stage: u8) -> Self {
        Self {
            outcome,
            stage,
            actor: None,
            needs_plate: false,
            spent: false,
        }
    }

    fn live(&self, agent: AgentId, plate: bool) -> bool {
        !self.spent && self.actor.map_or(true, |a| a == agent) && (!self.needs_plate || plate)
    }
}

/// Everything the episode's task tree makes interactable. Combinations not
/// listed here have no effect.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct InteractionTable {
    /// Keyed by the sorted spec pair.
    pub pairs: BTreeMap<(ObjectSpec, ObjectSpec), Rule<PairOutcome>>,
    pub activations: BTreeMap<ObjectSpec, Rule<ActivateOutcome>>,
    pub machines: BTreeMap<(EnvKind, ObjectSpec), Rule<MachineOutcome>>,
    /// The frontier stage; stage-tagged landmarks respond only to it.
    pub active_stage: Option<u8>,
}

pub fn pair_key(a: ObjectSpec, b: ObjectSpec) -> (ObjectSpec, ObjectSpec) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

impl InteractionTable {
    pub fn pair_outcome(&self, a: ObjectSpec, b: ObjectSpec) -> Option<PairOutcome> {
        self.pairs.get(&pair_key(a, b)).map(|r| r.outcome)
    }

    pub fn activate_outcome(&self, s: ObjectSpec) -> Option<ActivateOutcome> {
        self.activations.get(&s).map(|r| r.outcome)
    }

    pub fn machine_outcome(&self, kind: EnvKind, s: ObjectSpec) -> Option<MachineOutcome> {
        self.machines.get(&(kind, s)).map(|r| r.outcome)
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty() && self.activations.is_empty() && self.machines.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Via {
    Activation,
    InOutMachine,
    DropOffPoint,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Product {
    pub entity: EntityId,
    pub spec: ObjectSpec,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "effect", rename_all = "snake_case")]
pub enum Effect {
    LandmarkActivated {
        entity: EntityId,
    },
    Transformed {
        entity: EntityId,
        from: ObjectSpec,
        to: ObjectSpec,
        via: Via,
    },
    Consumed {
        entity: EntityId,
        spec: ObjectSpec,
        via: Via,
        at: Vec2,
    },
    Crafted {
        inputs: [EntityId; 2],
        specs: [ObjectSpec; 2],
        product: Option<Product>,
    },
    /// Output of a completed stage that does not create objects itself.
    Spawned {
        entity: EntityId,
        spec: ObjectSpec,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActivationEvent {
    pub t: u64,
    pub agent: Option<AgentId>,
    #[serde(flatten)]
    pub effect: Effect,
}

/// Applies live pair rules to this step's contacts.
pub fn resolve_contacts(
    state: &mut WorldState,
    contacts: &[ContactEvent],
    table: &mut InteractionTable,
) -> Vec<ActivationEvent> {
    let mut events = Vec::new();
    let plate = state.plate_active();
    for c in contacts {
        let (Some(a), Some(b)) = (state.entity(c.held), state.entity(c.other)) else {
            continue;
        };
        let (Some(sa), Some(sb)) = (a.kind.task_spec(), b.kind.task_spec()) else {
            continue;
        };
        let site = b.pos;
        let key = pair_key(sa, sb);
        let Some(rule) = table.pairs.get_mut(&key) else {
            continue;
        };
        if !rule.live(c.agent, plate) {
            continue;
        }
        rule.spent = true;
        let outcome = rule.outcome;
        state.remove(c.held);
        state.remove(c.other);
        let product = match outcome {
            PairOutcome::Spawn(spec) => {
                let id = state.spawn(EntityKind::Task(spec), site);
                Some(Product { entity: id, spec })
            }
            PairOutcome::DespawnBoth => None,
        };
        events.push(ActivationEvent {
            t: state.t,
            agent: Some(c.agent),
            effect: Effect::Crafted {
                inputs: [c.held, c.other],
                specs: [sa, sb],
                product,
            },
        });
    }
    events
}

/// The entity an activation by `agent_id` would address: the nearest in
/// reach that is not held and not a pressure plate, lowest id on ties.
pub fn activation_target(state: &WorldState, agent_id: AgentId) -> Option<EntityId> {
    let agent = state.agent(agent_id)?;
    let reach = state.arena.reach;
    state
        .entities
        .iter()
        .filter(|e| e.held_by.is_none() && e.kind != EntityKind::Env(EnvKind::PressurePlate))
        .map(|e| (e.pos.distance(agent.pos), e.id))
        .filter(|(d, _)| *d <= reach)
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .map(|(_, id)| id)
}

/// Triggers the entity chosen by [`activation_target`].
pub fn resolve_activate(
    state: &mut WorldState,
    agent_id: AgentId,
    table: &mut InteractionTable,
) -> Vec<ActivationEvent> {
    let Some(agent) = state.agent(agent_id).cloned() else {
        return Vec::new();
    };
    let reach = state.arena.reach;
    let Some(target) = activation_target(state, agent_id) else {
        return Vec::new();
    };
    let t = state.t;
    let plate = state.plate_active();
    let entity = state.entity(target).unwrap().clone();
    let event = |effect| ActivationEvent {
        t,
        agent: Some(agent_id),
        effect,
    };

    match entity.kind {
        EntityKind::Env(kind) if kind.is_landmark() => {
            if entity.assigned.is_some_and(|a| a != agent_id) {
                return Vec::new();
            }
            if entity.stage.is_some() && entity.stage != table.active_stage {
                return Vec::new();
            }
            let e = state.entity_mut(target).unwrap();
            e.lit_at.get_or_insert(t);
            vec![event(Effect::LandmarkActivated { entity: target })]
        }
        EntityKind::Env(kind @ (EnvKind::InOutMachine | EnvKind::DropOffPoint)) => {
            // The held object, or failing that the nearest free object at
            // the machine.
            let input = agent.held.or_else(|| {
                state
                    .entities
                    .iter()
                    .filter(|e| e.is_task() && e.held_by.is_none())
                    .map(|e| (e.pos.distance(entity.pos), e.id))
                    .filter(|(d, _)| *d <= reach)
                    .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
                    .map(|(_, id)| id)
            });
            let Some(input) = input else {
                return Vec::new();
            };
            let obj = state.entity(input).unwrap().clone();
            let spec = obj.kind.task_spec().unwrap();
            let Some(rule) = table.machines.get_mut(&(kind, spec)) else {
                return Vec::new();
            };
            if !rule.live(agent_id, plate) {
                return Vec::new();
            }
            rule.spent = true;
            let via = if kind == EnvKind::InOutMachine {
                Via::InOutMachine
            } else {
                Via::DropOffPoint
            };
            match rule.outcome {
                MachineOutcome::SwitchTo(to) => {
                    state.entity_mut(input).unwrap().kind = EntityKind::Task(to);
                    vec![event(Effect::Transformed {
                        entity: input,
                        from: spec,
                        to,
                        via,
                    })]
                }
                MachineOutcome::Consume => {
                    state.remove(input);
                    vec![event(Effect::Consumed {
                        entity: input,
                        spec,
                        via,
                        at: obj.pos,
                    })]
                }
            }
        }
        EntityKind::Env(_) => Vec::new(),
        EntityKind::Task(spec) => {
            let Some(rule) = table.activations.get_mut(&spec) else {
                return Vec::new();
            };
            if !rule.live(agent_id, plate) {
                return Vec::new();
            }
            rule.spent = true;
            match rule.outcome {
                ActivateOutcome::Become(to) => {
                    state.entity_mut(target).unwrap().kind = EntityKind::Task(to);
                    vec![event(Effect::Transformed {
                        entity: target,
                        from: spec,
                        to,
                        via: Via::Activation,
                    })]
                }
                ActivateOutcome::Consume => {
                    state.remove(target);
                    vec![event(Effect::Consumed {
                        entity: target,
                        spec,
                        via: Via::Activation,
                        at: entity.pos,
                    })]
                }
            }
        }
    }
}
