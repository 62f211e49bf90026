//! Episode loop, policy interface, and per-step logging.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::Write;

use super::observe::{build_observation, ObservationVector, StackedObservation};
use super::{init_field, Action, FieldState, RewardDelta, SimConfig};
use crate::error::{Error, Result};

/// Everything a controller may look at when choosing an action. Scripted
/// planners get privileged access to the world state; observation-driven
/// controllers should restrict themselves to the vectors.
pub struct PolicyContext<'a> {
    pub observation: &'a ObservationVector,
    pub stacked: &'a StackedObservation,
    pub state: &'a FieldState,
    pub robot: usize,
    pub config: &'a SimConfig,
}

/// A controller for one robot. Outputs must stay in `[-1, 1]` per axis.
pub trait Policy {
    fn act(&mut self, ctx: &PolicyContext<'_>) -> Result<Action>;

    fn name(&self) -> &'static str {
        "policy"
    }
}

/// Reward totals for one agent over an episode.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct RewardTotals {
    pub ring: f64,
    pub pin: f64,
    pub goal: f64,
    pub position: f64,
    pub total: f64,
    pub rings_collected: u32,
}

/// Compact per-robot snapshot stored in step records.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RobotSnapshot {
    pub x: f64,
    pub z: f64,
    pub heading: f64,
    pub rings_held: u32,
    pub pin_timer: f64,
    pub disqualified: bool,
}

/// One line of the episode log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u32,
    pub clock: f64,
    pub robots: [RobotSnapshot; 2],
    pub actions: [Action; 2],
    pub deltas: [RewardDelta; 2],
    /// Running totals including this step (terminal scoring lands in the
    /// summary, not here).
    pub cumulative: [f64; 2],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub steps: u32,
    pub clock: f64,
    /// `"time"` or `"disqualification"`.
    pub terminal: String,
    pub totals: [RewardTotals; 2],
    pub rings_left_on_field: u32,
}

/// Per-step records plus the terminal summary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub records: Vec<StepRecord>,
    pub summary: EpisodeSummary,
}

impl EpisodeLog {
    /// One JSON object per step, then a `{"summary": ...}` line.
    pub fn write_jsonl(&self, w: &mut impl Write) -> Result<()> {
        for record in &self.records {
            serde_json::to_writer(&mut *w, record)?;
            writeln!(w)?;
        }
        write!(w, "{{\"summary\":")?;
        serde_json::to_writer(&mut *w, &self.summary)?;
        writeln!(w, "}}")?;
        Ok(())
    }

    /// Per-step CSV: step, clock, per-agent cumulative reward, rings held.
    pub fn write_step_csv(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "step,clock,red_cumulative,blue_cumulative,red_rings_held,blue_rings_held")?;
        for r in &self.records {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                r.step,
                r.clock,
                r.cumulative[0],
                r.cumulative[1],
                r.robots[0].rings_held,
                r.robots[1].rings_held
            )?;
        }
        Ok(())
    }
}

fn snapshot(state: &FieldState) -> [RobotSnapshot; 2] {
    let snap = |i: usize| {
        let r = &state.robots[i];
        RobotSnapshot {
            x: r.pose.x,
            z: r.pose.z,
            heading: r.pose.heading,
            rings_held: r.rings_held,
            pin_timer: r.pin_timer,
            disqualified: r.disqualified,
        }
    };
    [snap(0), snap(1)]
}

/// Run one full episode to termination.
///
/// Each step builds both observations (noise drawn from a generator seeded
/// by `cfg.seed`), pushes them onto the per-robot stacks, asks each policy
/// for an action, and advances the simulation. Terminal scoring from
/// [`FieldState::finalize_episode`] lands in the summary totals.
/// Deterministic policies plus a fixed seed give identical logs.
pub fn run_episode(
    cfg: &SimConfig,
    policy_red: &mut dyn Policy,
    policy_blue: &mut dyn Policy,
) -> Result<EpisodeLog> {
    cfg.validate()?;
    let mut state = init_field(cfg, cfg.layout)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xB01DFACE);
    let mut stacks = [
        StackedObservation::new(cfg.stack_depth as usize),
        StackedObservation::new(cfg.stack_depth as usize),
    ];
    let mut totals = [RewardTotals::default(); 2];
    let mut records: Vec<StepRecord> = Vec::with_capacity(cfg.episode_steps as usize);

    while !state.is_terminal(cfg) {
        let obs = [
            build_observation(&state, 0, cfg, &mut rng),
            build_observation(&state, 1, cfg, &mut rng),
        ];
        stacks[0].push(&obs[0]);
        stacks[1].push(&obs[1]);

        let act_one = |policy: &mut dyn Policy, i: usize| -> Result<Action> {
            let ctx = PolicyContext {
                observation: &obs[i],
                stacked: &stacks[i],
                state: &state,
                robot: i,
                config: cfg,
            };
            policy
                .act(&ctx)
                .map_err(|e| Error::PolicyFailure(format!("{} (robot {i}): {e}", policy.name())))
        };
        let actions = [act_one(policy_red, 0)?, act_one(policy_blue, 1)?];

        let deltas = state.step(actions, cfg)?;
        for i in 0..2 {
            totals[i].ring += deltas[i].ring;
            totals[i].pin += deltas[i].pin;
        }
        records.push(StepRecord {
            step: state.step_index,
            clock: state.clock,
            robots: snapshot(&state),
            actions,
            deltas,
            cumulative: [
                totals[0].ring + totals[0].pin,
                totals[1].ring + totals[1].pin,
            ],
        });
    }

    let final_deltas = state.finalize_episode(cfg)?;
    for i in 0..2 {
        totals[i].goal = final_deltas[i].goal;
        totals[i].position = final_deltas[i].position;
        totals[i].total = totals[i].ring + totals[i].pin + totals[i].goal + totals[i].position;
        totals[i].rings_collected = state.robots[i].rings_held;
    }
    let terminal = if state.robots.iter().any(|r| r.disqualified) {
        "disqualification"
    } else {
        "time"
    };
    Ok(EpisodeLog {
        records,
        summary: EpisodeSummary {
            steps: state.step_index,
            clock: state.clock,
            terminal: terminal.to_string(),
            totals,
            rings_left_on_field: state.rings_on_field() as u32,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Always outputs zero action.
    pub struct ZeroPolicy;

    impl Policy for ZeroPolicy {
        fn act(&mut self, _ctx: &PolicyContext<'_>) -> Result<Action> {
            Ok(Action::ZERO)
        }

        fn name(&self) -> &'static str {
            "zero"
        }
    }

    struct FailingPolicy;

    impl Policy for FailingPolicy {
        fn act(&mut self, _ctx: &PolicyContext<'_>) -> Result<Action> {
            Err(Error::PolicyFailure("deliberate".into()))
        }
    }

    #[test]
    fn zero_policies_run_the_full_episode() {
        let cfg = SimConfig::default();
        let log = run_episode(&cfg, &mut ZeroPolicy, &mut ZeroPolicy).unwrap();
        assert_eq!(log.summary.steps, 1260);
        assert_eq!(log.summary.clock, 105.0);
        assert_eq!(log.summary.terminal, "time");
        assert_eq!(log.summary.totals[0].ring, 0.0);
        assert_eq!(log.records.len(), 1260);
    }

    #[test]
    fn same_seed_gives_identical_logs() {
        let cfg = SimConfig {
            seed: 7,
            layout: super::super::FieldLayout::SeededRandom,
            ..SimConfig::default()
        };
        let a = run_episode(&cfg, &mut ZeroPolicy, &mut ZeroPolicy).unwrap();
        let b = run_episode(&cfg, &mut ZeroPolicy, &mut ZeroPolicy).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn policy_failure_aborts_with_diagnostic() {
        let cfg = SimConfig::default();
        let err = run_episode(&cfg, &mut FailingPolicy, &mut ZeroPolicy).unwrap_err();
        assert!(matches!(err, Error::PolicyFailure(_)));
        assert!(err.to_string().contains("robot 0"));
    }

    #[test]
    fn jsonl_has_one_line_per_step_plus_summary() {
        let cfg = SimConfig {
            episode_steps: 5,
            ..SimConfig::default()
        };
        let log = run_episode(&cfg, &mut ZeroPolicy, &mut ZeroPolicy).unwrap();
        let mut buf = Vec::new();
        log.write_jsonl(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 6);
        assert!(text.lines().last().unwrap().starts_with("{\"summary\":"));
    }

    #[test]
    fn step_csv_has_header_and_rows() {
        let cfg = SimConfig {
            episode_steps: 3,
            ..SimConfig::default()
        };
        let log = run_episode(&cfg, &mut ZeroPolicy, &mut ZeroPolicy).unwrap();
        let mut buf = Vec::new();
        log.write_step_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[0].starts_with("step,clock"));
        assert!(lines[1].starts_with("1,"));
    }
}
