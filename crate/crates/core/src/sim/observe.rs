//! Visibility culling, the 27-value observation vector, and frame stacking.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::{FieldState, RingState, SimConfig};
use crate::error::{Error, Result};
use crate::geometry::{
    bearing_of, inject_noise, ring_to_robot_frame, to_alliance_frame, PlanarPoint,
};

/// Observation vector length: two poses (x, z, heading), the elapsed time
/// fraction, and ten ring slots of robot-frame (x, z).
pub const OBS_LEN: usize = 27;

/// Number of ring slots in the observation.
pub const RING_SLOTS: usize = 10;

/// Rings the robot's camera can currently see, as indices into
/// `state.rings`, sorted ascending by distance (ties by index).
///
/// A ring is visible when it is on the field, within the camera's
/// horizontal field-of-view wedge and range, and the sight line from the
/// robot center is not blocked by a mobile goal disc or the opposing
/// robot's box.
pub fn visible_rings(state: &FieldState, robot: usize, cfg: &SimConfig) -> Vec<usize> {
    let pose = &state.robots[robot].pose;
    let eye = pose.position();
    let opponent = &state.robots[1 - robot];
    let he = cfg.robot_half_extent;

    let mut hits: Vec<(f64, usize)> = Vec::new();
    'rings: for (idx, ring) in state.rings.iter().enumerate() {
        if ring.state != RingState::OnField {
            continue;
        }
        let dist = eye.distance_to(&ring.position);
        if dist > cfg.camera_range {
            continue;
        }
        let local = ring_to_robot_frame(ring.position, pose);
        if bearing_of(local).abs() > cfg.camera_fov / 2.0 {
            continue;
        }
        for goal in &state.goals {
            if segment_hits_disc(eye, ring.position, goal.position, goal.radius) {
                continue 'rings;
            }
        }
        if segment_hits_box(eye, ring.position, opponent.pose.position(), he) {
            continue;
        }
        hits.push((dist, idx));
    }
    hits.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    hits.into_iter().map(|(_, idx)| idx).collect()
}

/// Whether the open segment from `a` to `b` passes through the disc.
fn segment_hits_disc(a: PlanarPoint, b: PlanarPoint, center: PlanarPoint, radius: f64) -> bool {
    let abx = b.x - a.x;
    let abz = b.z - a.z;
    let len2 = abx * abx + abz * abz;
    let t = if len2 > 0.0 {
        (((center.x - a.x) * abx + (center.z - a.z) * abz) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let px = a.x + t * abx;
    let pz = a.z + t * abz;
    let dx = center.x - px;
    let dz = center.z - pz;
    dx * dx + dz * dz < radius * radius
}

/// Whether the segment from `a` to `b` crosses the axis-aligned square of
/// half-extent `he` centered at `c`. Standard slab test.
fn segment_hits_box(a: PlanarPoint, b: PlanarPoint, c: PlanarPoint, he: f64) -> bool {
    let (min_x, max_x) = (c.x - he, c.x + he);
    let (min_z, max_z) = (c.z - he, c.z + he);
    let dx = b.x - a.x;
    let dz = b.z - a.z;
    let mut t0 = 0.0f64;
    let mut t1 = 1.0f64;
    for (d, lo, hi, s) in [(dx, min_x, max_x, a.x), (dz, min_z, max_z, a.z)] {
        if d.abs() < 1e-15 {
            if s < lo || s > hi {
                return false;
            }
        } else {
            let mut ta = (lo - s) / d;
            let mut tb = (hi - s) / d;
            if ta > tb {
                std::mem::swap(&mut ta, &mut tb);
            }
            t0 = t0.max(ta);
            t1 = t1.min(tb);
            if t0 > t1 {
                return false;
            }
        }
    }
    true
}

/// The normalized model input. Layout:
///
/// | index | content |
/// |-------|---------|
/// | 0..3  | own pose in the alliance frame: x, z (per half width), heading (per pi) |
/// | 3..6  | opponent pose, same treatment |
/// | 6     | elapsed time fraction of the game |
/// | 7..27 | ten nearest visible rings, robot-frame x, z per half width; zero padded |
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationVector(pub [f64; OBS_LEN]);

impl ObservationVector {
    pub fn zeros() -> Self {
        ObservationVector([0.0; OBS_LEN])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn time_fraction(&self) -> f64 {
        self.0[6]
    }

    /// Robot-frame normalized position of ring slot `i`, if filled.
    pub fn ring_slot(&self, i: usize) -> Option<(f64, f64)> {
        let x = self.0[7 + 2 * i];
        let z = self.0[7 + 2 * i + 1];
        if x == 0.0 && z == 0.0 {
            None
        } else {
            Some((x, z))
        }
    }

    /// The nearest filled ring slot.
    pub fn first_ring(&self) -> Option<(f64, f64)> {
        (0..RING_SLOTS).find_map(|i| self.ring_slot(i))
    }
}

/// Build the observation for one robot.
///
/// Poses go through the alliance-frame rotation and half-width
/// normalization; ring positions go through the robot-frame transform and
/// the same normalization. Uniform noise at `cfg.noise_fraction` lands on
/// the pose entries and the filled ring slots (never on the time entry or
/// the zero padding); a zero fraction leaves the generator untouched.
pub fn build_observation<R: rand::Rng>(
    state: &FieldState,
    robot: usize,
    cfg: &SimConfig,
    rng: &mut R,
) -> ObservationVector {
    let half = cfg.half_width();
    let own = &state.robots[robot];
    let opp = &state.robots[1 - robot];
    let alliance = own.alliance;

    let mut obs = [0.0; OBS_LEN];
    let own_a = to_alliance_frame(own.pose, alliance);
    let opp_a = to_alliance_frame(opp.pose, alliance);
    obs[0] = own_a.x / half;
    obs[1] = own_a.z / half;
    obs[2] = own_a.heading / PI;
    obs[3] = opp_a.x / half;
    obs[4] = opp_a.z / half;
    obs[5] = opp_a.heading / PI;
    obs[6] = state.clock / cfg.game_length();

    let visible = visible_rings(state, robot, cfg);
    let filled = visible.len().min(RING_SLOTS);
    for (slot, &ring_idx) in visible.iter().take(RING_SLOTS).enumerate() {
        let local = ring_to_robot_frame(state.rings[ring_idx].position, &own.pose);
        obs[7 + 2 * slot] = local.x / half;
        obs[7 + 2 * slot + 1] = local.z / half;
    }

    if cfg.noise_fraction > 0.0 {
        inject_noise(&mut obs[0..6], cfg.noise_fraction, rng);
        inject_noise(&mut obs[7..7 + 2 * filled], cfg.noise_fraction, rng);
    }
    ObservationVector(obs)
}

/// Rolling window of the last `depth` observations, newest last,
/// initialized with zero frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackedObservation {
    frames: Vec<ObservationVector>,
}

impl StackedObservation {
    pub fn new(depth: usize) -> Self {
        assert!(depth >= 1);
        StackedObservation { frames: vec![ObservationVector::zeros(); depth] }
    }

    pub fn depth(&self) -> usize {
        self.frames.len()
    }

    /// Drop the oldest frame and append the new one.
    pub fn push(&mut self, obs: &ObservationVector) {
        self.frames.remove(0);
        self.frames.push(obs.clone());
    }

    /// Slice-based push for callers without the typed vector.
    pub fn push_slice(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != OBS_LEN {
            return Err(Error::InvalidConfig(format!(
                "observation must have {OBS_LEN} values, got {}",
                values.len()
            )));
        }
        let mut obs = ObservationVector::zeros();
        obs.0.copy_from_slice(values);
        self.push(&obs);
        Ok(())
    }

    pub fn newest(&self) -> &ObservationVector {
        self.frames.last().expect("stack is never empty")
    }

    pub fn frames(&self) -> &[ObservationVector] {
        &self.frames
    }

    /// All frames concatenated oldest-first, `depth * 27` values.
    pub fn flattened(&self) -> Vec<f64> {
        self.frames.iter().flat_map(|f| f.0.iter().copied()).collect()
    }
}
