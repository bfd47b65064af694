//! Scripted agents: a privileged planner, a brute-force explorer that never
//! sees the task tree, and a uniform random baseline.

mod explorer;
mod nav;
mod planner;

pub use explorer::{brute_force_explore, ExploreReport, Explorer, ObjectKey, Pairing};
pub use nav::{navigate, navigate_within, next_waypoint, route, steer};
pub use planner::{solve_tree, FailureCause, Planner, SolveReport};

use crate::world::ActionCommand;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Uniformly random commands.
#[derive(Clone, Debug)]
pub struct RandomPolicy {
    rng: ChaCha8Rng,
}

impl RandomPolicy {
    pub fn new(rng: ChaCha8Rng) -> Self {
        Self { rng }
    }

    pub fn act(&mut self) -> [ActionCommand; 2] {
        let mut one = || ActionCommand {
            turn: self.rng.gen_range(-1.0..=1.0),
            forward: self.rng.gen_range(0.0..=1.0),
            grasp: self.rng.gen_bool(0.5),
            activate: self.rng.gen_bool(0.5),
        };
        [one(), one()]
    }
}
