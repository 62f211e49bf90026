//! Policy adapter that obtains actions over the data link.
//!
//! The wire carries what the real system sent: pose and game time out,
//! velocity and rotation back. Perception does not cross the wire; the
//! coprocessor side receives each observation through a shared mailbox,
//! standing in for its physically attached camera.

use std::sync::{Arc, Mutex};

use crate::error::{Error, Result};
use crate::link::{BrainEndpoint, JetsonEndpoint, StepEvent, Transport};
use crate::sim::{Action, ObservationVector, Policy, PolicyContext};

/// Slot the episode runner fills with the latest observation for the
/// coprocessor-side policy.
pub type ObservationMailbox = Arc<Mutex<Option<ObservationVector>>>;

/// A controller computable from the observation vector alone, which is
/// all the coprocessor has at runtime.
pub trait ObservationPolicy: Send {
    fn act_obs(&mut self, obs: &ObservationVector) -> Result<Action>;
}

/// Coprocessor-side driver: awaits pose reports, feeds the mailbox
/// observation to the wrapped policy, sends the command back.
pub struct JetsonRunner<T: Transport> {
    endpoint: JetsonEndpoint<T>,
    policy: Box<dyn ObservationPolicy>,
    mailbox: ObservationMailbox,
}

impl<T: Transport> JetsonRunner<T> {
    pub fn new(transport: T, policy: Box<dyn ObservationPolicy>, mailbox: ObservationMailbox) -> Self {
        JetsonRunner { endpoint: JetsonEndpoint::new(transport), policy, mailbox }
    }

    pub fn with_timeout(mut self, timeout_ms: u64) -> Self {
        self.endpoint = self.endpoint.with_timeout(timeout_ms);
        self
    }

    pub fn endpoint(&self) -> &JetsonEndpoint<T> {
        &self.endpoint
    }

    /// Step the endpoint until it has processed one fresh report or the
    /// receive deadline passes. Returns true when a report was processed.
    pub fn pump(&mut self) -> Result<bool> {
        let JetsonRunner { endpoint, policy, mailbox } = self;
        loop {
            let event = endpoint.step(|_pkt| {
                let obs = mailbox
                    .lock()
                    .expect("mailbox poisoned")
                    .clone()
                    .ok_or_else(|| Error::PolicyFailure("no observation available".into()))?;
                let action = policy.act_obs(&obs)?;
                let a = action.clamped();
                Ok((a.forward, a.turn))
            })?;
            match event {
                StepEvent::Processed(_) => return Ok(true),
                StepEvent::TimedOut => return Ok(false),
                StepEvent::Discarded => continue,
                StepEvent::Sent(_) => unreachable!("jetson endpoint cannot start by sending"),
            }
        }
    }

    /// Serve until the transport reports a hang-up. Meant for a dedicated
    /// thread paired with a remote brain.
    pub fn serve(&mut self) -> Result<()> {
        loop {
            match self.pump() {
                Ok(_) => continue,
                Err(Error::Transport(_)) => return Ok(()),
                Err(e) => return Err(e),
            }
        }
    }
}

/// Brain-side policy: each `act` publishes the observation to the
/// mailbox, runs one full request/response exchange over the link, and
/// returns the decoded action.
pub struct RemotePolicy<T: Transport> {
    brain: BrainEndpoint<T>,
    mailbox: ObservationMailbox,
    /// Driven between send and receive for single-threaded loopback;
    /// `None` when the peer runs elsewhere.
    pump: Option<Box<dyn FnMut() -> Result<bool> + Send>>,
    max_attempts: u32,
}

impl<T: Transport> RemotePolicy<T> {
    pub fn new(transport: T, mailbox: ObservationMailbox) -> Self {
        RemotePolicy {
            brain: BrainEndpoint::new(transport),
            mailbox,
            pump: None,
            max_attempts: 4,
        }
    }

    pub fn with_timeout(mut self, timeout_ms: u64) -> Self {
        self.brain = self.brain.with_timeout(timeout_ms);
        self
    }

    /// Attach an in-process peer driver (see [`JetsonRunner::pump`]).
    pub fn with_pump(mut self, pump: Box<dyn FnMut() -> Result<bool> + Send>) -> Self {
        self.pump = Some(pump);
        self
    }

    pub fn endpoint(&self) -> &BrainEndpoint<T> {
        &self.brain
    }

    fn exchange(&mut self, pose_time: (f64, f64, f64, f64)) -> Result<Action> {
        self.brain.step(|| pose_time, |_| {})?;
        let mut command = None;
        for _ in 0..self.max_attempts {
            if let Some(pump) = &mut self.pump {
                pump()?;
            }
            let event = self.brain.step(|| pose_time, |pkt| command = Some(*pkt))?;
            match event {
                StepEvent::Processed(_) => break,
                StepEvent::TimedOut | StepEvent::Discarded => continue,
                StepEvent::Sent(_) => unreachable!("endpoint was awaiting"),
            }
        }
        let pkt = command.ok_or_else(|| {
            Error::PolicyFailure("no response from the coprocessor link".into())
        })?;
        Ok(Action { forward: pkt.velocity, turn: pkt.rotation })
    }
}

impl<T: Transport> Policy for RemotePolicy<T> {
    fn act(&mut self, ctx: &PolicyContext<'_>) -> Result<Action> {
        *self.mailbox.lock().expect("mailbox poisoned") = Some(ctx.observation.clone());
        let pose = ctx.state.robots[ctx.robot].pose;
        self.exchange((pose.x, pose.z, pose.heading, ctx.state.clock))
    }

    fn name(&self) -> &'static str {
        "remote"
    }
}

/// Wire a remote policy to an in-process coprocessor over the given
/// transport pair, single-threaded: the remote policy pumps the runner
/// between its send and receive.
pub fn loopback_remote_policy<T: Transport + 'static>(
    brain_side: T,
    jetson_side: T,
    policy: Box<dyn ObservationPolicy>,
) -> RemotePolicy<T> {
    let mailbox: ObservationMailbox = Arc::new(Mutex::new(None));
    let mut runner = JetsonRunner::new(jetson_side, policy, Arc::clone(&mailbox));
    RemotePolicy::new(brain_side, mailbox).with_pump(Box::new(move || runner.pump()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::link::MemoryTransport;
    use crate::policy::GreedyPolicy;
    use crate::sim::{run_episode, FieldLayout, SimConfig};

    #[test]
    fn loopback_matches_local_greedy_exactly() {
        let cfg = SimConfig {
            seed: 21,
            layout: FieldLayout::SeededRandom,
            episode_steps: 200,
            ..SimConfig::default()
        };

        let local = run_episode(&cfg, &mut GreedyPolicy::default(), &mut GreedyPolicy::default())
            .unwrap();

        let (brain_side, jetson_side) = MemoryTransport::pair();
        let mut remote =
            loopback_remote_policy(brain_side, jetson_side, Box::new(GreedyPolicy::default()));
        let over_wire = run_episode(&cfg, &mut remote, &mut GreedyPolicy::default()).unwrap();

        assert_eq!(local.records.len(), over_wire.records.len());
        for (a, b) in local.records.iter().zip(over_wire.records.iter()) {
            assert_eq!(a.actions, b.actions, "step {}", a.step);
        }
        assert_eq!(
            serde_json::to_string(&local.summary.totals).unwrap(),
            serde_json::to_string(&over_wire.summary.totals).unwrap()
        );
    }

    #[test]
    fn dead_transport_times_out_as_policy_error() {
        let (brain_side, jetson_side) = MemoryTransport::pair();
        drop(jetson_side);
        let mailbox: ObservationMailbox = Arc::new(Mutex::new(None));
        let mut remote = RemotePolicy::new(brain_side, mailbox).with_timeout(5);
        let err = remote.exchange((0.0, 0.0, 0.0, 0.0)).unwrap_err();
        assert!(matches!(err, Error::Transport(_) | Error::PolicyFailure(_)));
    }
}
