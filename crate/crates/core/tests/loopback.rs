//! Link-protocol integration: endpoint alternation across transports,
//! fault handling, and equivalence between local and over-the-wire
//! control.

use std::sync::{Arc, Mutex};

use ringbot::link::{
    byte_pipe_pair, BrainEndpoint, FileTailTransport, JetsonEndpoint, MemoryTransport, Mode,
    StepEvent, Transport,
};
use ringbot::policy::{loopback_remote_policy, GreedyPolicy, ObservationMailbox, RemotePolicy};
use ringbot::sim::{run_episode, FieldLayout, SimConfig};

fn drive_cycles<B: Transport, J: Transport>(
    brain: &mut BrainEndpoint<B>,
    jetson: &mut JetsonEndpoint<J>,
    cycles: u64,
) {
    for cycle in 0..cycles {
        assert_eq!(brain.state().mode(), Mode::Sending);
        brain
            .step(|| (1.0, 2.0, 0.5, cycle as f64), |_| {})
            .unwrap();
        // Alternation: the brain never has two unacknowledged packets out.
        assert_eq!(brain.state().mode(), Mode::AwaitingMessage);
        loop {
            match jetson.step(|pkt| Ok((pkt.x / 2.0, pkt.z / 4.0))).unwrap() {
                StepEvent::Processed(i) => {
                    assert_eq!(i, cycle);
                    break;
                }
                StepEvent::Discarded => continue,
                other => panic!("jetson stalled on cycle {cycle}: {other:?}"),
            }
        }
        let mut got = None;
        loop {
            match brain.step(|| (0.0, 0.0, 0.0, 0.0), |pkt| got = Some(*pkt)).unwrap() {
                StepEvent::Processed(i) => {
                    assert_eq!(i, cycle);
                    break;
                }
                StepEvent::Discarded => continue,
                other => panic!("brain stalled on cycle {cycle}: {other:?}"),
            }
        }
        let pkt = got.unwrap();
        assert_eq!(pkt.velocity, 0.5);
        assert_eq!(pkt.rotation, 0.5);
        assert_eq!(pkt.iter, cycle);
    }
}

#[test]
fn memory_endpoints_alternate_cleanly() {
    let (bt, jt) = MemoryTransport::pair();
    let mut brain = BrainEndpoint::new(bt).with_timeout(500);
    let mut jetson = JetsonEndpoint::new(jt).with_timeout(500);
    drive_cycles(&mut brain, &mut jetson, 200);
    assert_eq!(brain.state().malformed_count, 0);
    assert_eq!(jetson.state().duplicate_count, 0);
}

#[test]
fn stream_bridge_carries_the_protocol() {
    let (bt, jt) = byte_pipe_pair();
    let mut brain = BrainEndpoint::new(bt).with_timeout(100);
    let mut jetson = JetsonEndpoint::new(jt).with_timeout(100);
    drive_cycles(&mut brain, &mut jetson, 100);
}

#[test]
fn file_tail_carries_the_protocol_and_survives_replay() {
    let dir = tempfile::tempdir().unwrap();
    let b2j = dir.path().join("brain_to_jetson.txt");
    let j2b = dir.path().join("jetson_to_brain.txt");
    let mut brain =
        BrainEndpoint::new(FileTailTransport::new(b2j.clone(), j2b.clone())).with_timeout(100);
    let mut jetson = JetsonEndpoint::new(FileTailTransport::new(j2b, b2j)).with_timeout(100);
    drive_cycles(&mut brain, &mut jetson, 50);

    // The brain-to-jetson file now holds every line ever sent; a fresh
    // reader replaying it from offset zero must see 50 lines.
    let text = std::fs::read_to_string(dir.path().join("brain_to_jetson.txt")).unwrap();
    assert_eq!(text.lines().count(), 50);
    assert!(text.lines().all(|l| l.starts_with("B ")));
}

#[test]
fn malformed_lines_are_discarded_and_counted() {
    let (mut bt, jt) = MemoryTransport::pair();
    let mut jetson = JetsonEndpoint::new(jt).with_timeout(50);
    bt.send("not a packet\n").unwrap();
    bt.send("B 1 2\n").unwrap(); // wrong field count
    bt.send("B 0 0 0 0 0\n").unwrap();
    assert_eq!(jetson.step(|_| Ok((0.0, 0.0))).unwrap(), StepEvent::Discarded);
    assert_eq!(jetson.step(|_| Ok((0.0, 0.0))).unwrap(), StepEvent::Discarded);
    assert_eq!(jetson.step(|_| Ok((0.0, 0.0))).unwrap(), StepEvent::Processed(0));
    assert_eq!(jetson.state().malformed_count, 2);
}

#[test]
fn policy_error_suppresses_response_and_recovers() {
    let (bt, jt) = MemoryTransport::pair();
    let mut brain = BrainEndpoint::new(bt).with_timeout(20);
    let mut jetson = JetsonEndpoint::new(jt).with_timeout(20);

    brain.step(|| (0.0, 0.0, 0.0, 0.0), |_| {}).unwrap();
    let event = jetson
        .step(|_| Err(ringbot::Error::PolicyFailure("deliberate".into())))
        .unwrap();
    assert_eq!(event, StepEvent::Discarded);
    assert_eq!(jetson.state().mode(), Mode::AwaitingMessage);
    // The brain times out, resends with a fresh iterator, and the link
    // continues.
    assert_eq!(brain.step(|| (0.0, 0.0, 0.0, 0.0), |_| {}).unwrap(), StepEvent::TimedOut);
    assert_eq!(brain.state().mode(), Mode::AwaitingMessage);
}

#[test]
fn remote_greedy_over_stream_bridge_matches_local() {
    let cfg = SimConfig {
        seed: 33,
        layout: FieldLayout::SeededRandom,
        episode_steps: 150,
        ..SimConfig::default()
    };

    let local = run_episode(&cfg, &mut GreedyPolicy::default(), &mut GreedyPolicy::default())
        .unwrap();

    let (brain_side, jetson_side) = byte_pipe_pair();
    let mut remote =
        loopback_remote_policy(brain_side, jetson_side, Box::new(GreedyPolicy::default()));
    let wired = run_episode(&cfg, &mut remote, &mut GreedyPolicy::default()).unwrap();

    for (a, b) in local.records.iter().zip(wired.records.iter()) {
        assert_eq!(a.actions, b.actions, "step {}", a.step);
    }
}

#[test]
fn remote_policy_requires_an_observation() {
    // A remote policy whose jetson side has no observation mailbox entry
    // suppresses its response; the exchange fails cleanly.
    let (bt, jt) = MemoryTransport::pair();
    let mailbox: ObservationMailbox = Arc::new(Mutex::new(None));
    let mut runner = ringbot::policy::JetsonRunner::new(
        jt,
        Box::new(GreedyPolicy::default()),
        Arc::clone(&mailbox),
    )
    .with_timeout(10);
    let mut remote = RemotePolicy::new(bt, mailbox)
        .with_timeout(10)
        .with_pump(Box::new(move || runner.pump()));

    let cfg = SimConfig::default();
    let state = ringbot::sim::init_field(&cfg, FieldLayout::Standard).unwrap();
    let obs = ringbot::sim::ObservationVector::zeros();
    let stack = ringbot::sim::StackedObservation::new(1);
    let ctx = ringbot::sim::PolicyContext {
        observation: &obs,
        stacked: &stack,
        state: &state,
        robot: 0,
        config: &cfg,
    };
    // The mailbox is filled by act(), so this succeeds end to end.
    let policy: &mut dyn ringbot::sim::Policy = &mut remote;
    assert!(policy.act(&ctx).is_ok());
}
