//! Scripted controllers standing in for a trained model.

pub mod grid;
mod remote;

pub use grid::{astar_plan, follow_path, GridMap, Path};
pub use remote::{
    loopback_remote_policy, JetsonRunner, ObservationMailbox, ObservationPolicy, RemotePolicy,
};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::f64::consts::FRAC_PI_2;

use crate::error::Result;
use crate::geometry::{bearing_of, PlanarPoint};
use crate::sim::{Action, ObservationVector, Policy, PolicyContext, RingState};

/// Proportional steering toward a robot-frame target: turn with the
/// bearing error (gain-scaled, clamped), slow down as the error grows.
pub fn steer_toward(local: PlanarPoint, turn_gain: f64) -> Action {
    let bearing = bearing_of(local);
    Action {
        forward: (1.0 - bearing.abs() / FRAC_PI_2).clamp(0.0, 1.0),
        turn: (turn_gain * bearing).clamp(-1.0, 1.0),
    }
}

/// Chases the nearest observed ring; spins in place to scan when none are
/// visible. Works purely from the observation vector.
#[derive(Debug, Clone)]
pub struct GreedyPolicy {
    pub turn_gain: f64,
    pub scan_rate: f64,
}

impl Default for GreedyPolicy {
    fn default() -> Self {
        GreedyPolicy { turn_gain: 2.0, scan_rate: 0.5 }
    }
}

impl GreedyPolicy {
    pub fn act_on(&self, obs: &ObservationVector) -> Action {
        match obs.first_ring() {
            None => Action { forward: 0.0, turn: self.scan_rate },
            Some((x, z)) => steer_toward(PlanarPoint::new(x, z), self.turn_gain),
        }
    }
}

impl Policy for GreedyPolicy {
    fn act(&mut self, ctx: &PolicyContext<'_>) -> Result<Action> {
        Ok(self.act_on(ctx.observation))
    }

    fn name(&self) -> &'static str {
        "greedy"
    }
}

impl ObservationPolicy for GreedyPolicy {
    fn act_obs(&mut self, obs: &ObservationVector) -> Result<Action> {
        Ok(self.act_on(obs))
    }
}

/// Always outputs zero action.
#[derive(Debug, Clone, Default)]
pub struct ZeroPolicy;

impl Policy for ZeroPolicy {
    fn act(&mut self, _ctx: &PolicyContext<'_>) -> Result<Action> {
        Ok(Action::ZERO)
    }

    fn name(&self) -> &'static str {
        "zero"
    }
}

impl ObservationPolicy for ZeroPolicy {
    fn act_obs(&mut self, _obs: &ObservationVector) -> Result<Action> {
        Ok(Action::ZERO)
    }
}

/// Uniform random actions from a seeded generator.
pub struct RandomPolicy {
    rng: ChaCha8Rng,
}

impl RandomPolicy {
    pub fn new(seed: u64) -> Self {
        RandomPolicy { rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    fn draw(&mut self) -> Action {
        Action {
            forward: self.rng.random_range(-1.0..=1.0),
            turn: self.rng.random_range(-1.0..=1.0),
        }
    }
}

impl Policy for RandomPolicy {
    fn act(&mut self, _ctx: &PolicyContext<'_>) -> Result<Action> {
        Ok(self.draw())
    }

    fn name(&self) -> &'static str {
        "random"
    }
}

impl ObservationPolicy for RandomPolicy {
    fn act_obs(&mut self, _obs: &ObservationVector) -> Result<Action> {
        Ok(self.draw())
    }
}

/// Grid planner: plans an obstacle-aware path to the nearest visible ring
/// and follows it, replanning every step. Falls back to scanning when
/// nothing is visible or no path exists.
#[derive(Debug, Clone)]
pub struct AstarPolicy {
    pub resolution: f64,
    pub lookahead: f64,
    pub turn_gain: f64,
    pub scan_rate: f64,
}

impl Default for AstarPolicy {
    fn default() -> Self {
        AstarPolicy { resolution: 0.1, lookahead: 0.25, turn_gain: 2.0, scan_rate: 0.5 }
    }
}

impl Policy for AstarPolicy {
    fn act(&mut self, ctx: &PolicyContext<'_>) -> Result<Action> {
        let state = ctx.state;
        let pose = &state.robots[ctx.robot].pose;
        let visible = crate::sim::visible_rings(state, ctx.robot, ctx.config);
        let Some(&target_idx) = visible.first() else {
            return Ok(Action { forward: 0.0, turn: self.scan_rate });
        };
        let target = state.rings[target_idx].position;
        debug_assert!(state.rings[target_idx].state == RingState::OnField);

        let grid = GridMap::from_field(state, ctx.config, ctx.robot, self.resolution);
        match astar_plan(&grid, pose.position(), target) {
            Ok(path) => Ok(follow_path(&path, pose, self.lookahead, self.turn_gain)),
            // Start or goal boxed in: fall back to scanning for another ring.
            Err(_) => Ok(Action { forward: 0.0, turn: self.scan_rate }),
        }
    }

    fn name(&self) -> &'static str {
        "astar"
    }
}
