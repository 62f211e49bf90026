//! Deterministic 2D simulation of the ring-collection game.
//!
//! Robots are kinematic unicycles with axis-aligned square footprints.
//! Collisions resolve by positional projection (no interpenetration of
//! walls or the other robot), rings are collected by driving over them,
//! and pinning the opponent against a wall for the full pin duration
//! disqualifies the pinning robot and ends the episode. Mobile goals are
//! static: they occlude vision and block planning but score only by where
//! they sit when the episode ends.

mod episode;
mod observe;

pub use episode::{
    run_episode, EpisodeLog, EpisodeSummary, Policy, PolicyContext, RewardTotals, StepRecord,
};
pub use observe::{
    build_observation, visible_rings, ObservationVector, StackedObservation, OBS_LEN,
};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{Alliance, PlanarPoint, Pose2D};

/// Initial entity placement scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldLayout {
    /// Fixed mirrored grid of rings with goals at fixed spots.
    Standard,
    /// Mirrored pseudo-random scatter drawn from the config seed.
    SeededRandom,
}

fn default_field_width() -> f64 {
    3.6576
}

fn default_episode_steps() -> u32 {
    1260
}

fn default_dt() -> f64 {
    105.0 / 1260.0
}

fn default_ring_count() -> u32 {
    72
}

fn default_ring_capacity() -> u32 {
    10
}

fn default_robot_half_extent() -> f64 {
    0.2286
}

fn default_pickup_radius() -> f64 {
    0.25
}

fn default_pin_duration() -> f64 {
    5.0
}

fn default_max_forward_speed() -> f64 {
    1.5
}

fn default_max_turn_rate() -> f64 {
    PI
}

fn default_camera_fov() -> f64 {
    1.204 // roughly the 69-degree horizontal field of view of the depth camera
}

fn default_camera_range() -> f64 {
    4.0
}

fn default_noise_fraction() -> f64 {
    0.1
}

fn default_stack_depth() -> u32 {
    11
}

fn default_goal_radius() -> f64 {
    0.16
}

fn default_layout() -> FieldLayout {
    FieldLayout::Standard
}

/// Simulation parameters, loadable from JSON with per-field defaults.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimConfig {
    #[serde(default = "default_field_width")]
    pub field_width: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_episode_steps")]
    pub episode_steps: u32,
    #[serde(default = "default_ring_count")]
    pub ring_count: u32,
    #[serde(default = "default_ring_capacity")]
    pub ring_capacity: u32,
    #[serde(default = "default_robot_half_extent")]
    pub robot_half_extent: f64,
    #[serde(default = "default_pickup_radius")]
    pub pickup_radius: f64,
    #[serde(default = "default_pin_duration")]
    pub pin_duration: f64,
    #[serde(default = "default_max_forward_speed")]
    pub max_forward_speed: f64,
    #[serde(default = "default_max_turn_rate")]
    pub max_turn_rate: f64,
    /// Horizontal field-of-view of the onboard camera, radians.
    #[serde(default = "default_camera_fov")]
    pub camera_fov: f64,
    /// Maximum ring detection range, meters.
    #[serde(default = "default_camera_range")]
    pub camera_range: f64,
    #[serde(default = "default_noise_fraction")]
    pub noise_fraction: f64,
    #[serde(default = "default_stack_depth")]
    pub stack_depth: u32,
    #[serde(default = "default_goal_radius")]
    pub goal_radius: f64,
    #[serde(default = "default_layout")]
    pub layout: FieldLayout,
    #[serde(default)]
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults are total")
    }
}

impl SimConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: SimConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let positives = [
            ("field_width", self.field_width),
            ("dt", self.dt),
            ("robot_half_extent", self.robot_half_extent),
            ("pickup_radius", self.pickup_radius),
            ("pin_duration", self.pin_duration),
            ("max_forward_speed", self.max_forward_speed),
            ("max_turn_rate", self.max_turn_rate),
            ("camera_fov", self.camera_fov),
            ("camera_range", self.camera_range),
            ("goal_radius", self.goal_radius),
        ];
        for (name, v) in positives {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        if self.episode_steps == 0 {
            return Err(Error::InvalidConfig("episode_steps must be positive".into()));
        }
        if self.stack_depth == 0 {
            return Err(Error::InvalidConfig("stack_depth must be positive".into()));
        }
        if !(self.noise_fraction.is_finite() && self.noise_fraction >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "noise_fraction must be non-negative, got {}",
                self.noise_fraction
            )));
        }
        if self.field_width < 6.0 * self.robot_half_extent {
            return Err(Error::InvalidConfig(
                "field too small for two robot footprints".into(),
            ));
        }
        Ok(())
    }

    pub fn half_width(&self) -> f64 {
        self.field_width / 2.0
    }

    /// Total game length in seconds, `dt * episode_steps`.
    pub fn game_length(&self) -> f64 {
        self.dt * self.episode_steps as f64
    }
}

/// Normalized drive command: forward velocity and turn rate in `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub forward: f64,
    pub turn: f64,
}

impl Action {
    pub const ZERO: Action = Action { forward: 0.0, turn: 0.0 };

    pub fn new(forward: f64, turn: f64) -> Self {
        Action { forward, turn }
    }

    pub fn clamped(&self) -> Action {
        Action {
            forward: self.forward.clamp(-1.0, 1.0),
            turn: self.turn.clamp(-1.0, 1.0),
        }
    }
}

/// Per-step reward change for one agent, split by source.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardDelta {
    pub ring: f64,
    pub pin: f64,
    pub goal: f64,
    pub position: f64,
}

impl RewardDelta {
    pub fn total(&self) -> f64 {
        self.ring + self.pin + self.goal + self.position
    }

    pub fn add(&mut self, other: &RewardDelta) {
        self.ring += other.ring;
        self.pin += other.pin;
        self.goal += other.goal;
        self.position += other.position;
    }
}

/// Ring lifecycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RingState {
    OnField,
    Collected { by: usize },
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Ring {
    pub position: PlanarPoint,
    pub state: RingState,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GoalKind {
    AllianceRed,
    AllianceBlue,
    Neutral,
}

impl GoalKind {
    fn mirrored(&self) -> GoalKind {
        match self {
            GoalKind::AllianceRed => GoalKind::AllianceBlue,
            GoalKind::AllianceBlue => GoalKind::AllianceRed,
            GoalKind::Neutral => GoalKind::Neutral,
        }
    }

    /// Whether this goal can score for the given alliance.
    pub fn scores_for(&self, alliance: Alliance) -> bool {
        match self {
            GoalKind::Neutral => true,
            GoalKind::AllianceRed => alliance == Alliance::Red,
            GoalKind::AllianceBlue => alliance == Alliance::Blue,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MobileGoal {
    pub position: PlanarPoint,
    pub kind: GoalKind,
    pub radius: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RobotState {
    pub pose: Pose2D,
    pub alliance: Alliance,
    pub rings_held: u32,
    /// Seconds this robot has continuously pinned the opponent.
    pub pin_timer: f64,
    pub disqualified: bool,
}

/// Index of the red robot in [`FieldState::robots`].
pub const RED: usize = 0;
/// Index of the blue robot in [`FieldState::robots`].
pub const BLUE: usize = 1;

/// Full simulation world.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FieldState {
    pub robots: [RobotState; 2],
    pub rings: Vec<Ring>,
    pub goals: Vec<MobileGoal>,
    pub step_index: u32,
    pub clock: f64,
}

fn half_sign(alliance: Alliance) -> f64 {
    // Red owns the z < 0 half.
    match alliance {
        Alliance::Red => -1.0,
        Alliance::Blue => 1.0,
    }
}

fn rot180_point(p: PlanarPoint) -> PlanarPoint {
    PlanarPoint::new(-p.x, -p.z)
}

fn rot180_pose(p: Pose2D) -> Pose2D {
    Pose2D::new(-p.x, -p.z, p.heading + PI)
}

/// Place robots, rings, and goals for a fresh episode.
pub fn init_field(cfg: &SimConfig, layout: FieldLayout) -> Result<FieldState> {
    cfg.validate()?;
    let half = cfg.half_width();
    let home_z = 0.65 * half;
    let red_home = Pose2D::new(0.0, -home_z, PI / 2.0);
    let robots = [
        RobotState {
            pose: red_home,
            alliance: Alliance::Red,
            rings_held: 0,
            pin_timer: 0.0,
            disqualified: false,
        },
        RobotState {
            pose: rot180_pose(red_home),
            alliance: Alliance::Blue,
            rings_held: 0,
            pin_timer: 0.0,
            disqualified: false,
        },
    ];

    let goals = place_goals(cfg, layout)?;
    let rings = place_rings(cfg, layout, &goals)?;

    Ok(FieldState { robots, rings, goals, step_index: 0, clock: 0.0 })
}

fn place_goals(cfg: &SimConfig, layout: FieldLayout) -> Result<Vec<MobileGoal>> {
    let half = cfg.half_width();
    let r = cfg.goal_radius;
    let margin = r + cfg.robot_half_extent;
    if margin * 2.0 >= half {
        return Err(Error::InvalidConfig("goals cannot fit the field".into()));
    }
    let mut goals = Vec::with_capacity(5);
    match layout {
        FieldLayout::Standard => {
            let red = [
                PlanarPoint::new(-0.5 * half, -0.35 * half),
                PlanarPoint::new(0.5 * half, -0.35 * half),
            ];
            for p in red {
                goals.push(MobileGoal { position: p, kind: GoalKind::AllianceRed, radius: r });
            }
            for p in red {
                goals.push(MobileGoal {
                    position: rot180_point(p),
                    kind: GoalKind::AllianceBlue,
                    radius: r,
                });
            }
            goals.push(MobileGoal {
                position: PlanarPoint::new(0.0, 0.0),
                kind: GoalKind::Neutral,
                radius: r,
            });
        }
        FieldLayout::SeededRandom => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_mul(0x9E3779B97F4A7C15));
            // A goal dropped on a starting tile would blind the robot
            // that spawns there (its eye would sit inside the disc).
            let home_z = 0.65 * half;
            let homes = [PlanarPoint::new(0.0, -home_z), PlanarPoint::new(0.0, home_z)];
            let clearance = r + cfg.robot_half_extent + 0.05;
            let clear_of_homes = |p: &PlanarPoint| {
                homes.iter().all(|h| h.distance_to(p) > clearance)
            };
            let sample_red = |rng: &mut ChaCha8Rng| {
                PlanarPoint::new(
                    rng.random_range(-(half - margin)..(half - margin)),
                    rng.random_range(-(half - margin)..-2.0 * margin),
                )
            };
            let mut red = Vec::new();
            for _ in 0..200 {
                if red.len() == 2 {
                    break;
                }
                let p = sample_red(&mut rng);
                if clear_of_homes(&p)
                    && red.iter().all(|q: &PlanarPoint| q.distance_to(&p) > 3.0 * r)
                {
                    red.push(p);
                }
            }
            if red.len() != 2 {
                return Err(Error::InvalidConfig("could not place alliance goals".into()));
            }
            for &p in &red {
                goals.push(MobileGoal { position: p, kind: GoalKind::AllianceRed, radius: r });
            }
            for &p in &red {
                goals.push(MobileGoal {
                    position: rot180_point(p),
                    kind: GoalKind::AllianceBlue,
                    radius: r,
                });
            }
            // The single neutral goal may land on either half.
            let mut neutral = PlanarPoint::new(0.0, 0.0);
            for _ in 0..200 {
                let p = PlanarPoint::new(
                    rng.random_range(-(half - margin)..(half - margin)),
                    rng.random_range(-(half - margin)..(half - margin)),
                );
                if clear_of_homes(&p) {
                    neutral = p;
                    break;
                }
            }
            goals.push(MobileGoal { position: neutral, kind: GoalKind::Neutral, radius: r });
        }
    }
    Ok(goals)
}

fn place_rings(cfg: &SimConfig, layout: FieldLayout, goals: &[MobileGoal]) -> Result<Vec<Ring>> {
    let half = cfg.half_width();
    let margin = 0.3;
    let n = cfg.ring_count as usize;
    let per_side = n / 2;
    // Keep rings off the starting tiles so a motionless robot collects
    // nothing at the whistle.
    let spawn_clearance = cfg.pickup_radius + cfg.robot_half_extent;
    let home_z = 0.65 * half;
    let homes = [PlanarPoint::new(0.0, -home_z), PlanarPoint::new(0.0, home_z)];
    let clear_of_homes =
        |p: &PlanarPoint| homes.iter().all(|h| h.distance_to(p) > spawn_clearance);
    let mut red_positions: Vec<PlanarPoint> = Vec::with_capacity(per_side);

    match layout {
        FieldLayout::Standard if per_side == 0 => {}
        FieldLayout::Standard => {
            let cols = 8usize;
            let z_lo = -(half - margin);
            let z_hi = -0.25;
            let rows_max = ((z_hi - z_lo) / 0.12).floor().max(1.0) as usize;
            let mut rows = per_side.div_ceil(cols).max(1);
            while rows <= rows_max {
                red_positions.clear();
                'grid: for row in 0..rows {
                    for col in 0..cols {
                        let fx = (col as f64 + 0.5) / cols as f64;
                        let fz = (row as f64 + 0.5) / rows as f64;
                        let p = PlanarPoint::new(
                            -(half - margin) + fx * 2.0 * (half - margin),
                            z_lo + fz * (z_hi - z_lo),
                        );
                        if clear_of_homes(&p) {
                            red_positions.push(p);
                            if red_positions.len() == per_side {
                                break 'grid;
                            }
                        }
                    }
                }
                if red_positions.len() == per_side {
                    break;
                }
                rows += 1;
            }
            if red_positions.len() != per_side {
                return Err(Error::InvalidConfig(format!(
                    "{} rings cannot fit the standard layout",
                    cfg.ring_count
                )));
            }
        }
        FieldLayout::SeededRandom => {
            // A ring occupies real floor space; bound the count by area.
            let usable = 2.0 * (half - margin) * ((half - margin) - 0.15);
            let capacity = (usable / 0.01).floor() as usize;
            if per_side > capacity {
                return Err(Error::InvalidConfig(format!(
                    "{} rings cannot fit the field (capacity {})",
                    cfg.ring_count,
                    2 * capacity
                )));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let clear_of_goals = |p: &PlanarPoint| {
                goals
                    .iter()
                    .all(|g| g.position.distance_to(p) > g.radius + 0.05)
            };
            for _ in 0..per_side.max(1) * 200 {
                if red_positions.len() == per_side {
                    break;
                }
                let p = PlanarPoint::new(
                    rng.random_range(-(half - margin)..(half - margin)),
                    rng.random_range(-(half - margin)..-0.15),
                );
                if clear_of_goals(&p)
                    && clear_of_goals(&rot180_point(p))
                    && clear_of_homes(&p)
                    && clear_of_homes(&rot180_point(p))
                {
                    red_positions.push(p);
                }
            }
            if red_positions.len() != per_side {
                return Err(Error::InvalidConfig(format!(
                    "{} rings cannot fit the field",
                    cfg.ring_count
                )));
            }
        }
    }

    let mut rings = Vec::with_capacity(n);
    for &p in &red_positions {
        rings.push(Ring { position: p, state: RingState::OnField });
    }
    for &p in &red_positions {
        rings.push(Ring { position: rot180_point(p), state: RingState::OnField });
    }
    if n % 2 == 1 {
        // Odd count: the leftover ring sits at the self-mirrored center.
        rings.push(Ring { position: PlanarPoint::new(0.0, 0.0), state: RingState::OnField });
    }
    Ok(rings)
}

impl FieldState {
    /// Terminal when the step budget is spent or a robot was disqualified.
    pub fn is_terminal(&self, cfg: &SimConfig) -> bool {
        self.step_index >= cfg.episode_steps || self.robots.iter().any(|r| r.disqualified)
    }

    pub fn rings_on_field(&self) -> usize {
        self.rings.iter().filter(|r| r.state == RingState::OnField).count()
    }

    /// Advance the world one tick.
    ///
    /// Scales and clamps the normalized actions, integrates the unicycle
    /// kinematics (heading first, then translation along the new heading),
    /// projects robots out of walls and each other, collects rings crossed
    /// within the pickup radius, and updates pin timers.
    pub fn step(&mut self, actions: [Action; 2], cfg: &SimConfig) -> Result<[RewardDelta; 2]> {
        if self.is_terminal(cfg) {
            return Err(Error::InvalidState("step on terminal state".into()));
        }
        for a in &actions {
            if !a.forward.is_finite() || !a.turn.is_finite() {
                return Err(Error::InvalidAction(format!("{a:?}")));
            }
        }
        let mut deltas = [RewardDelta::default(); 2];

        for (robot, action) in self.robots.iter_mut().zip(actions.iter()) {
            let a = action.clamped();
            let heading = robot.pose.heading + a.turn * cfg.max_turn_rate * cfg.dt;
            let pose = Pose2D::new(robot.pose.x, robot.pose.z, heading);
            let (fx, fz) = pose.forward();
            let dist = a.forward * cfg.max_forward_speed * cfg.dt;
            robot.pose = Pose2D::new(pose.x + fx * dist, pose.z + fz * dist, heading);
        }

        self.resolve_collisions(cfg);
        self.collect_rings(cfg, &mut deltas);

        self.step_index += 1;
        self.clock = self.step_index as f64 * cfg.dt;

        let pin_deltas = self.update_pinning(cfg);
        deltas[0].add(&pin_deltas[0]);
        deltas[1].add(&pin_deltas[1]);
        Ok(deltas)
    }

    fn resolve_collisions(&mut self, cfg: &SimConfig) {
        let he = cfg.robot_half_extent;
        let limit = cfg.half_width() - he;
        let clamp_pose = |p: Pose2D| Pose2D {
            x: p.x.clamp(-limit, limit),
            z: p.z.clamp(-limit, limit),
            heading: p.heading,
        };
        for _ in 0..8 {
            for robot in self.robots.iter_mut() {
                robot.pose = clamp_pose(robot.pose);
            }
            let dx = self.robots[1].pose.x - self.robots[0].pose.x;
            let dz = self.robots[1].pose.z - self.robots[0].pose.z;
            let overlap_x = 2.0 * he - dx.abs();
            let overlap_z = 2.0 * he - dz.abs();
            if overlap_x <= 0.0 || overlap_z <= 0.0 {
                return;
            }
            // Push apart along the axis of least penetration, half each.
            if overlap_x <= overlap_z {
                let sign = if dx >= 0.0 { 1.0 } else { -1.0 };
                self.robots[0].pose.x -= sign * overlap_x / 2.0;
                self.robots[1].pose.x += sign * overlap_x / 2.0;
            } else {
                let sign = if dz >= 0.0 { 1.0 } else { -1.0 };
                self.robots[0].pose.z -= sign * overlap_z / 2.0;
                self.robots[1].pose.z += sign * overlap_z / 2.0;
            }
        }
        for robot in self.robots.iter_mut() {
            robot.pose = clamp_pose(robot.pose);
        }
    }

    fn collect_rings(&mut self, cfg: &SimConfig, deltas: &mut [RewardDelta; 2]) {
        let mut reachable: Vec<(f64, usize, usize)> = Vec::new();
        for (ring_idx, ring) in self.rings.iter().enumerate() {
            if ring.state != RingState::OnField {
                continue;
            }
            for (robot_idx, robot) in self.robots.iter().enumerate() {
                let d = robot.pose.position().distance_to(&ring.position);
                if d <= cfg.pickup_radius {
                    reachable.push((d, robot_idx, ring_idx));
                }
            }
        }
        // Nearest pair wins ties deterministically.
        reachable.sort_by(|a, b| {
            a.0.partial_cmp(&b.0)
                .unwrap()
                .then(a.1.cmp(&b.1))
                .then(a.2.cmp(&b.2))
        });
        for (_, robot_idx, ring_idx) in reachable {
            if self.rings[ring_idx].state != RingState::OnField {
                continue;
            }
            if self.robots[robot_idx].rings_held >= cfg.ring_capacity {
                continue;
            }
            self.rings[ring_idx].state = RingState::Collected { by: robot_idx };
            self.robots[robot_idx].rings_held += 1;
            deltas[robot_idx].ring += 5.0;
        }
    }

    /// Advance the pin timers after a movement update.
    ///
    /// A robot pins while it is in contact with the opponent and the
    /// opponent is in contact with a wall. Holding the pin for the full
    /// duration penalizes the pinning robot and disqualifies it, ending
    /// the episode. Breaking contact resets the timer.
    pub fn update_pinning(&mut self, cfg: &SimConfig) -> [RewardDelta; 2] {
        const TOL: f64 = 1e-6;
        let he = cfg.robot_half_extent;
        let limit = cfg.half_width() - he;
        let mut deltas = [RewardDelta::default(); 2];

        let dx = (self.robots[1].pose.x - self.robots[0].pose.x).abs();
        let dz = (self.robots[1].pose.z - self.robots[0].pose.z).abs();
        let in_contact = dx <= 2.0 * he + TOL && dz <= 2.0 * he + TOL;

        for (pinner, delta) in deltas.iter_mut().enumerate() {
            let opponent = &self.robots[1 - pinner].pose;
            let on_wall = opponent.x.abs() >= limit - TOL || opponent.z.abs() >= limit - TOL;
            if in_contact && on_wall {
                let timer = self.robots[pinner].pin_timer + cfg.dt;
                if timer + 1e-9 >= cfg.pin_duration {
                    self.robots[pinner].pin_timer = cfg.pin_duration;
                    if !self.robots[pinner].disqualified {
                        self.robots[pinner].disqualified = true;
                        delta.pin -= 5.0;
                    }
                } else {
                    self.robots[pinner].pin_timer = timer;
                }
            } else {
                self.robots[pinner].pin_timer = 0.0;
            }
        }
        deltas
    }

    /// Terminal scoring: goals on each agent's half and the position
    /// penalty for ending on the opposing half. Goal membership uses a
    /// strict half test, so a goal centered exactly on the midline counts
    /// for neither side.
    pub fn finalize_episode(&self, cfg: &SimConfig) -> Result<[RewardDelta; 2]> {
        if !self.is_terminal(cfg) {
            return Err(Error::InvalidState("finalize on non-terminal state".into()));
        }
        let mut deltas = [RewardDelta::default(); 2];
        for (idx, robot) in self.robots.iter().enumerate() {
            let own = half_sign(robot.alliance);
            for goal in &self.goals {
                if goal.kind.scores_for(robot.alliance) && goal.position.z * own > 0.0 {
                    deltas[idx].goal += 12.0;
                }
            }
            if robot.pose.z * own < 0.0 {
                deltas[idx].position -= 17.5;
            }
        }
        Ok(deltas)
    }

    /// The state rotated half a turn about the field center with the
    /// alliances exchanged. Observation symmetry means an agent cannot
    /// tell this state from the original.
    pub fn rotated_half_turn(&self) -> FieldState {
        let flip_robot = |r: &RobotState, alliance: Alliance| RobotState {
            pose: rot180_pose(r.pose),
            alliance,
            rings_held: r.rings_held,
            pin_timer: r.pin_timer,
            disqualified: r.disqualified,
        };
        FieldState {
            robots: [
                flip_robot(&self.robots[BLUE], Alliance::Red),
                flip_robot(&self.robots[RED], Alliance::Blue),
            ],
            rings: self
                .rings
                .iter()
                .map(|r| Ring {
                    position: rot180_point(r.position),
                    state: match r.state {
                        RingState::OnField => RingState::OnField,
                        RingState::Collected { by } => RingState::Collected { by: 1 - by },
                    },
                })
                .collect(),
            goals: self
                .goals
                .iter()
                .map(|g| MobileGoal {
                    position: rot180_point(g.position),
                    kind: g.kind.mirrored(),
                    radius: g.radius,
                })
                .collect(),
            step_index: self.step_index,
            clock: self.clock,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_layout_is_mirrored() {
        let cfg = SimConfig::default();
        let state = init_field(&cfg, FieldLayout::Standard).unwrap();
        let n = state.rings.len();
        assert_eq!(n, 72);
        for i in 0..n / 2 {
            let red = state.rings[i].position;
            let blue = state.rings[n / 2 + i].position;
            assert_eq!(blue.x, -red.x);
            assert_eq!(blue.z, -red.z);
        }
        assert_eq!(state.robots[RED].pose.x, -state.robots[BLUE].pose.x);
        assert_eq!(state.robots[RED].pose.z, -state.robots[BLUE].pose.z);
        let red_goals: Vec<_> =
            state.goals.iter().filter(|g| g.kind == GoalKind::AllianceRed).collect();
        let blue_goals: Vec<_> =
            state.goals.iter().filter(|g| g.kind == GoalKind::AllianceBlue).collect();
        assert_eq!(red_goals.len(), 2);
        assert_eq!(blue_goals.len(), 2);
        assert_eq!(state.goals.iter().filter(|g| g.kind == GoalKind::Neutral).count(), 1);
    }

    #[test]
    fn seeded_layout_is_deterministic() {
        let cfg = SimConfig {
            seed: 99,
            layout: FieldLayout::SeededRandom,
            ..SimConfig::default()
        };
        let a = init_field(&cfg, FieldLayout::SeededRandom).unwrap();
        let b = init_field(&cfg, FieldLayout::SeededRandom).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn zero_rings_is_a_valid_state() {
        let cfg = SimConfig {
            ring_count: 0,
            ..SimConfig::default()
        };
        let state = init_field(&cfg, FieldLayout::Standard).unwrap();
        assert!(state.rings.is_empty());
    }

    #[test]
    fn oversized_ring_count_is_rejected() {
        let mut cfg = SimConfig {
            ring_count: 100_000,
            ..SimConfig::default()
        };
        assert!(init_field(&cfg, FieldLayout::Standard).is_err());
        cfg.layout = FieldLayout::SeededRandom;
        assert!(init_field(&cfg, FieldLayout::SeededRandom).is_err());
    }

    #[test]
    fn zero_actions_only_advance_the_clock() {
        let cfg = SimConfig::default();
        let mut state = init_field(&cfg, FieldLayout::Standard).unwrap();
        let before = state.robots[RED].pose;
        let deltas = state.step([Action::ZERO, Action::ZERO], &cfg).unwrap();
        assert_eq!(state.robots[RED].pose, before);
        assert_eq!(state.step_index, 1);
        assert_eq!(state.clock, cfg.dt);
        assert_eq!(deltas[0].total(), 0.0);
    }

    #[test]
    fn full_forward_advances_exactly_max_speed_dt() {
        let cfg = SimConfig::default();
        let mut state = init_field(&cfg, FieldLayout::Standard).unwrap();
        // Point red along +x in free space.
        state.robots[RED].pose = Pose2D::new(0.0, 0.0, 0.0);
        state.robots[BLUE].pose = Pose2D::new(-1.5, 1.5, 0.0);
        state.rings.clear();
        let x0 = state.robots[RED].pose.x;
        state.step([Action::new(1.0, 0.0), Action::ZERO], &cfg).unwrap();
        let expect = x0 + cfg.max_forward_speed * cfg.dt;
        assert_eq!(state.robots[RED].pose.x, expect);
        assert_eq!(state.robots[RED].pose.z, 0.0);
    }

    #[test]
    fn nan_action_is_rejected() {
        let cfg = SimConfig::default();
        let mut state = init_field(&cfg, FieldLayout::Standard).unwrap();
        let err = state.step([Action::new(f64::NAN, 0.0), Action::ZERO], &cfg);
        assert!(matches!(err, Err(Error::InvalidAction(_))));
    }

    #[test]
    fn driving_over_a_ring_collects_it() {
        let cfg = SimConfig::default();
        let mut state = init_field(&cfg, FieldLayout::Standard).unwrap();
        state.rings.clear();
        state.robots[RED].pose = Pose2D::new(0.0, 0.0, 0.0);
        state.robots[BLUE].pose = Pose2D::new(-1.5, 1.5, 0.0);
        let target = PlanarPoint::new(cfg.max_forward_speed * cfg.dt, 0.0);
        state.rings.push(Ring { position: target, state: RingState::OnField });
        let deltas = state.step([Action::new(1.0, 0.0), Action::ZERO], &cfg).unwrap();
        assert_eq!(state.robots[RED].rings_held, 1);
        assert_eq!(state.rings[0].state, RingState::Collected { by: RED });
        assert_eq!(deltas[RED].ring, 5.0);
        assert_eq!(state.rings_on_field(), 0);
    }

    #[test]
    fn capacity_blocks_further_pickups() {
        let cfg = SimConfig {
            ring_capacity: 1,
            ..SimConfig::default()
        };
        let mut state = init_field(&cfg, FieldLayout::Standard).unwrap();
        state.rings.clear();
        state.robots[RED].pose = Pose2D::new(0.0, 0.0, 0.0);
        state.robots[BLUE].pose = Pose2D::new(-1.5, 1.5, 0.0);
        state.rings.push(Ring { position: PlanarPoint::new(0.05, 0.0), state: RingState::OnField });
        state.rings.push(Ring { position: PlanarPoint::new(0.1, 0.0), state: RingState::OnField });
        let deltas = state.step([Action::ZERO, Action::ZERO], &cfg).unwrap();
        assert_eq!(state.robots[RED].rings_held, 1);
        assert_eq!(deltas[RED].ring, 5.0);
        assert_eq!(state.rings_on_field(), 1);
        // The nearer ring went first.
        assert_eq!(state.rings[0].state, RingState::Collected { by: RED });
    }

    #[test]
    fn walls_stop_the_robot() {
        let cfg = SimConfig::default();
        let mut state = init_field(&cfg, FieldLayout::Standard).unwrap();
        state.rings.clear();
        state.robots[RED].pose = Pose2D::new(0.0, -cfg.half_width() + cfg.robot_half_extent, -PI / 2.0);
        state.robots[BLUE].pose = Pose2D::new(1.0, 1.0, 0.0);
        state.step([Action::new(1.0, 0.0), Action::ZERO], &cfg).unwrap();
        let limit = cfg.half_width() - cfg.robot_half_extent;
        assert!(state.robots[RED].pose.z >= -limit - 1e-9);
    }

    #[test]
    fn robots_do_not_interpenetrate() {
        let cfg = SimConfig::default();
        let mut state = init_field(&cfg, FieldLayout::Standard).unwrap();
        state.rings.clear();
        state.robots[RED].pose = Pose2D::new(0.0, -0.3, PI / 2.0);
        state.robots[BLUE].pose = Pose2D::new(0.0, 0.3, -PI / 2.0);
        for _ in 0..30 {
            if state.is_terminal(&cfg) {
                break;
            }
            state
                .step([Action::new(1.0, 0.0), Action::new(1.0, 0.0)], &cfg)
                .unwrap();
            let dx = (state.robots[0].pose.x - state.robots[1].pose.x).abs();
            let dz = (state.robots[0].pose.z - state.robots[1].pose.z).abs();
            let overlap =
                (2.0 * cfg.robot_half_extent - dx).min(2.0 * cfg.robot_half_extent - dz);
            assert!(
                dx >= 2.0 * cfg.robot_half_extent - 1e-9
                    || dz >= 2.0 * cfg.robot_half_extent - 1e-9,
                "interpenetration {overlap}"
            );
        }
    }

    /// Drive red into blue while blue sits against a wall; after the full
    /// pin duration red is disqualified with the pin penalty.
    #[test]
    fn sustained_pin_disqualifies_the_pinner() {
        let cfg = SimConfig::default();
        let mut state = init_field(&cfg, FieldLayout::Standard).unwrap();
        state.rings.clear();
        let limit = cfg.half_width() - cfg.robot_half_extent;
        state.robots[BLUE].pose = Pose2D::new(0.0, limit, PI / 2.0);
        state.robots[RED].pose = Pose2D::new(0.0, limit - 2.0 * cfg.robot_half_extent, PI / 2.0);
        let steps_needed = (cfg.pin_duration / cfg.dt).round() as u32;
        let mut pin_total = 0.0;
        let mut steps = 0;
        while !state.is_terminal(&cfg) {
            let deltas = state
                .step([Action::new(1.0, 0.0), Action::ZERO], &cfg)
                .unwrap();
            pin_total += deltas[RED].pin;
            steps += 1;
            assert!(steps <= steps_needed + 1, "pin never triggered");
        }
        assert_eq!(steps, steps_needed);
        assert_eq!(pin_total, -5.0);
        assert!(state.robots[RED].disqualified);
        assert!(!state.robots[BLUE].disqualified);
    }

    #[test]
    fn broken_contact_resets_the_pin_timer() {
        let cfg = SimConfig::default();
        let mut state = init_field(&cfg, FieldLayout::Standard).unwrap();
        state.rings.clear();
        let limit = cfg.half_width() - cfg.robot_half_extent;
        state.robots[BLUE].pose = Pose2D::new(0.0, limit, PI / 2.0);
        state.robots[RED].pose = Pose2D::new(0.0, limit - 2.0 * cfg.robot_half_extent, PI / 2.0);
        // Hold for most of the duration, then back off one step.
        let hold = (cfg.pin_duration / cfg.dt) as u32 - 2;
        for _ in 0..hold {
            state.step([Action::new(1.0, 0.0), Action::ZERO], &cfg).unwrap();
        }
        assert!(state.robots[RED].pin_timer > 0.0);
        state.step([Action::new(-1.0, 0.0), Action::ZERO], &cfg).unwrap();
        assert_eq!(state.robots[RED].pin_timer, 0.0);
        assert!(!state.robots[RED].disqualified);
    }

    #[test]
    fn finalize_scores_goals_and_position() {
        let cfg = SimConfig::default();
        let mut state = init_field(&cfg, FieldLayout::Standard).unwrap();
        // Everything on the red half, red robot home, blue robot intruding.
        state.goals = vec![
            MobileGoal { position: PlanarPoint::new(0.5, -0.5), kind: GoalKind::AllianceRed, radius: 0.16 },
            MobileGoal { position: PlanarPoint::new(-0.5, -0.5), kind: GoalKind::AllianceRed, radius: 0.16 },
            MobileGoal { position: PlanarPoint::new(0.9, -0.2), kind: GoalKind::Neutral, radius: 0.16 },
            MobileGoal { position: PlanarPoint::new(0.2, -0.8), kind: GoalKind::AllianceBlue, radius: 0.16 },
        ];
        state.robots[RED].pose = Pose2D::new(0.0, -1.0, 0.0);
        state.robots[BLUE].pose = Pose2D::new(0.0, -1.2, 0.0);
        state.step_index = cfg.episode_steps;
        let deltas = state.finalize_episode(&cfg).unwrap();
        // Red: two alliance goals plus the neutral, all on its half.
        assert_eq!(deltas[RED].goal, 36.0);
        assert_eq!(deltas[RED].position, 0.0);
        // Blue: its alliance goal sits on red's half and does not score;
        // ending on red's half costs the position penalty.
        assert_eq!(deltas[BLUE].goal, 0.0);
        assert_eq!(deltas[BLUE].position, -17.5);
    }

    #[test]
    fn midline_goal_counts_for_neither() {
        let cfg = SimConfig::default();
        let mut state = init_field(&cfg, FieldLayout::Standard).unwrap();
        state.goals = vec![MobileGoal {
            position: PlanarPoint::new(0.3, 0.0),
            kind: GoalKind::Neutral,
            radius: 0.16,
        }];
        state.step_index = cfg.episode_steps;
        let deltas = state.finalize_episode(&cfg).unwrap();
        assert_eq!(deltas[RED].goal, 0.0);
        assert_eq!(deltas[BLUE].goal, 0.0);
    }

    #[test]
    fn finalize_rejects_running_state() {
        let cfg = SimConfig::default();
        let state = init_field(&cfg, FieldLayout::Standard).unwrap();
        assert!(state.finalize_episode(&cfg).is_err());
    }

    #[test]
    fn ring_conservation_holds_under_stepping() {
        let cfg = SimConfig {
            layout: FieldLayout::SeededRandom,
            seed: 5,
            ..SimConfig::default()
        };
        let mut state = init_field(&cfg, FieldLayout::SeededRandom).unwrap();
        let total = state.rings.len();
        for i in 0..200 {
            if state.is_terminal(&cfg) {
                break;
            }
            let a = Action::new(1.0, if i % 40 < 20 { 0.2 } else { -0.3 });
            state.step([a, a], &cfg).unwrap();
            let collected = state.rings.len() - state.rings_on_field();
            assert_eq!(state.rings_on_field() + collected, total);
            assert!((state.clock - state.step_index as f64 * cfg.dt).abs() < 1e-15);
        }
    }

    #[test]
    fn config_invariant_game_length() {
        let cfg = SimConfig::default();
        assert_eq!(cfg.episode_steps, 1260);
        assert_eq!(cfg.game_length(), 105.0);
    }
}
