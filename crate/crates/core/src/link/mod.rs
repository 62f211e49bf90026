//! Brain/coprocessor data link: line-framed packet codec, duplicate
//! suppression via a trailing iterator, and the two alternating endpoint
//! state machines.
//!
//! Wire format, bit exact:
//!
//! ```text
//! B <x> <z> <heading> <game_time> <iter>\n
//! J <velocity> <rotation> <iter>\n
//! ```
//!
//! Fields are separated by single ASCII spaces and floats are printed as
//! shortest round-trip decimals, so `decode(encode(p)) == p` holds exactly.
//! Each sender appends a strictly increasing iterator; receivers drop a
//! packet whose iterator matches or precedes the last one processed, which
//! de-duplicates replayed lines from file-backed transports.

mod transport;

pub use transport::{
    byte_pipe_pair, BytePipe, DuplicatingTransport, FileTailTransport, MemoryTransport,
    StreamTransport, Transport,
};

use crate::error::{Error, Result};

/// Default per-receive deadline. The original blocking waits are unbounded;
/// a bounded wait keeps the endpoints testable.
pub const DEFAULT_TIMEOUT_MS: u64 = 250;

/// Pose-and-clock report sent by the brain each cycle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BrainPacket {
    pub x: f64,
    pub z: f64,
    pub heading: f64,
    pub game_time: f64,
    pub iter: u64,
}

impl BrainPacket {
    pub fn new(x: f64, z: f64, heading: f64, game_time: f64, iter: u64) -> Result<Self> {
        for (name, v) in [("x", x), ("z", z), ("heading", heading), ("game_time", game_time)] {
            if !v.is_finite() {
                return Err(Error::InvalidPacket(format!("{name} is not finite: {v}")));
            }
        }
        Ok(BrainPacket { x, z, heading, game_time, iter })
    }
}

/// Velocity command returned by the coprocessor each cycle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JetsonPacket {
    /// Normalized forward velocity in `[-1, 1]`.
    pub velocity: f64,
    /// Normalized rotation rate in `[-1, 1]`.
    pub rotation: f64,
    pub iter: u64,
}

impl JetsonPacket {
    pub fn new(velocity: f64, rotation: f64, iter: u64) -> Result<Self> {
        for (name, v) in [("velocity", velocity), ("rotation", rotation)] {
            if !v.is_finite() || v.abs() > 1.0 {
                return Err(Error::InvalidPacket(format!(
                    "{name} must lie in [-1, 1], got {v}"
                )));
            }
        }
        Ok(JetsonPacket { velocity, rotation, iter })
    }
}

/// Encode a brain packet as a wire line, newline included.
pub fn encode_brain(p: &BrainPacket) -> String {
    format!("B {} {} {} {} {}\n", p.x, p.z, p.heading, p.game_time, p.iter)
}

/// Encode a jetson packet as a wire line, newline included.
pub fn encode_jetson(p: &JetsonPacket) -> String {
    format!("J {} {} {}\n", p.velocity, p.rotation, p.iter)
}

fn split_fields<'a>(line: &'a str, tag: &str, n: usize) -> Result<Vec<&'a str>> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.is_empty() || fields[0] != tag {
        return Err(Error::MalformedPacket(format!(
            "expected tag {tag}, got {:?}",
            fields.first().copied().unwrap_or("")
        )));
    }
    if fields.len() != n + 1 {
        return Err(Error::MalformedPacket(format!(
            "expected {n} fields after tag {tag}, got {}",
            fields.len() - 1
        )));
    }
    Ok(fields[1..].to_vec())
}

fn parse_f64(s: &str) -> Result<f64> {
    s.parse::<f64>()
        .map_err(|_| Error::MalformedPacket(format!("bad number {s:?}")))
}

fn parse_iter(s: &str) -> Result<u64> {
    s.parse::<u64>()
        .map_err(|_| Error::MalformedPacket(format!("bad iterator {s:?}")))
}

/// Parse a brain line. Tolerates extra whitespace between fields.
pub fn decode_brain(line: &str) -> Result<BrainPacket> {
    let f = split_fields(line, "B", 5)?;
    BrainPacket::new(
        parse_f64(f[0])?,
        parse_f64(f[1])?,
        parse_f64(f[2])?,
        parse_f64(f[3])?,
        parse_iter(f[4])?,
    )
    .map_err(|e| Error::MalformedPacket(e.to_string()))
}

/// Parse a jetson line. Tolerates extra whitespace between fields.
pub fn decode_jetson(line: &str) -> Result<JetsonPacket> {
    let f = split_fields(line, "J", 3)?;
    JetsonPacket::new(parse_f64(f[0])?, parse_f64(f[1])?, parse_iter(f[2])?)
        .map_err(|e| Error::MalformedPacket(e.to_string()))
}

/// Endpoint processing phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    AwaitingMessage,
    Processing,
    Sending,
}

/// Verdict for an inbound iterator value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Inbound<P> {
    Fresh(P),
    Duplicate,
}

/// Shared half-duplex endpoint bookkeeping: mode, dedup watermark, and
/// outbound iterator sequence.
#[derive(Debug, Clone)]
pub struct EndpointState {
    mode: Mode,
    last_seen_iter: Option<u64>,
    last_sent_iter: Option<u64>,
    /// Lines that failed to parse, discarded.
    pub malformed_count: u64,
    /// Receive deadlines hit while awaiting.
    pub timeout_count: u64,
    /// Inbound packets dropped as duplicates or stale.
    pub duplicate_count: u64,
}

impl EndpointState {
    fn new(initial: Mode) -> Self {
        EndpointState {
            mode: initial,
            last_seen_iter: None,
            last_sent_iter: None,
            malformed_count: 0,
            timeout_count: 0,
            duplicate_count: 0,
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn last_seen_iter(&self) -> Option<u64> {
        self.last_seen_iter
    }

    pub fn last_sent_iter(&self) -> Option<u64> {
        self.last_sent_iter
    }

    fn next_outbound_iter(&mut self) -> u64 {
        let next = self.last_sent_iter.map_or(0, |i| i + 1);
        self.last_sent_iter = Some(next);
        next
    }

    /// Classify an inbound iterator: fresh if it advances past the last
    /// processed one; equal or older values are duplicates. Stale values
    /// show up when a file-backed transport replays old lines.
    pub fn accept_inbound<P>(&mut self, iter: u64, pkt: P) -> Inbound<P> {
        match self.last_seen_iter {
            Some(seen) if iter <= seen => {
                self.duplicate_count += 1;
                Inbound::Duplicate
            }
            _ => {
                self.last_seen_iter = Some(iter);
                Inbound::Fresh(pkt)
            }
        }
    }
}

/// One step outcome for an endpoint driver.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepEvent {
    /// A packet went out.
    Sent(u64),
    /// A fresh packet came in and was handed to the handler.
    Processed(u64),
    /// Receive deadline passed with nothing usable.
    TimedOut,
    /// A line was discarded (malformed or duplicate).
    Discarded,
}

/// Brain-side endpoint: sends pose/time, awaits a velocity command, hands
/// it to the motor sink. Starts in the sending mode because the protocol
/// begins with the brain transmitting.
pub struct BrainEndpoint<T: Transport> {
    state: EndpointState,
    transport: T,
    timeout_ms: u64,
}

impl<T: Transport> BrainEndpoint<T> {
    pub fn new(transport: T) -> Self {
        BrainEndpoint {
            state: EndpointState::new(Mode::Sending),
            transport,
            timeout_ms: DEFAULT_TIMEOUT_MS,
        }
    }

    pub fn with_timeout(mut self, timeout_ms: u64) -> Self {
        self.timeout_ms = timeout_ms;
        self
    }

    pub fn state(&self) -> &EndpointState {
        &self.state
    }

    /// Drive one transition. `pose_time` supplies the outbound report when
    /// in the sending mode; `motor_sink` consumes each fresh command.
    pub fn step(
        &mut self,
        pose_time: impl FnOnce() -> (f64, f64, f64, f64),
        motor_sink: impl FnOnce(&JetsonPacket),
    ) -> Result<StepEvent> {
        match self.state.mode {
            Mode::Sending => {
                let (x, z, heading, game_time) = pose_time();
                let iter = self.state.next_outbound_iter();
                let pkt = BrainPacket::new(x, z, heading, game_time, iter)?;
                self.transport.send(&encode_brain(&pkt))?;
                self.state.mode = Mode::AwaitingMessage;
                Ok(StepEvent::Sent(iter))
            }
            Mode::AwaitingMessage => {
                let line = match self.transport.receive(self.timeout_ms)? {
                    Some(line) => line,
                    None => {
                        self.state.timeout_count += 1;
                        return Ok(StepEvent::TimedOut);
                    }
                };
                let pkt = match decode_jetson(&line) {
                    Ok(pkt) => pkt,
                    Err(_) => {
                        self.state.malformed_count += 1;
                        return Ok(StepEvent::Discarded);
                    }
                };
                match self.state.accept_inbound(pkt.iter, pkt) {
                    Inbound::Duplicate => Ok(StepEvent::Discarded),
                    Inbound::Fresh(pkt) => {
                        self.state.mode = Mode::Processing;
                        motor_sink(&pkt);
                        self.state.mode = Mode::Sending;
                        Ok(StepEvent::Processed(pkt.iter))
                    }
                }
            }
            Mode::Processing => Err(Error::InvalidState(
                "brain endpoint observed mid-processing".into(),
            )),
        }
    }

    /// Run send-then-receive until a fresh command arrives or the retry
    /// budget is spent. Returns the decoded command.
    pub fn exchange(
        &mut self,
        pose_time: (f64, f64, f64, f64),
        max_attempts: u32,
    ) -> Result<JetsonPacket> {
        if self.state.mode == Mode::Sending {
            self.step(|| pose_time, |_| {})?;
        }
        let mut result = None;
        for _ in 0..max_attempts {
            let event = self.step(|| pose_time, |pkt| result = Some(*pkt))?;
            match event {
                StepEvent::Processed(_) => break,
                StepEvent::TimedOut | StepEvent::Discarded => continue,
                StepEvent::Sent(_) => unreachable!("awaiting endpoint cannot send"),
            }
        }
        result.ok_or(Error::Timeout(self.timeout_ms * max_attempts as u64))
    }
}

/// Coprocessor-side endpoint: awaits a pose/time report, invokes the
/// policy handler on each fresh one, sends the resulting command back.
pub struct JetsonEndpoint<T: Transport> {
    state: EndpointState,
    transport: T,
    timeout_ms: u64,
}

impl<T: Transport> JetsonEndpoint<T> {
    pub fn new(transport: T) -> Self {
        JetsonEndpoint {
            state: EndpointState::new(Mode::AwaitingMessage),
            transport,
            timeout_ms: DEFAULT_TIMEOUT_MS,
        }
    }

    pub fn with_timeout(mut self, timeout_ms: u64) -> Self {
        self.timeout_ms = timeout_ms;
        self
    }

    pub fn state(&self) -> &EndpointState {
        &self.state
    }

    /// Drive one transition. `policy` maps each fresh report to a
    /// `(velocity, rotation)` command; a policy error suppresses the
    /// response and returns the endpoint to awaiting, leaving the peer to
    /// time out and resend.
    pub fn step(
        &mut self,
        mut policy: impl FnMut(&BrainPacket) -> Result<(f64, f64)>,
    ) -> Result<StepEvent> {
        match self.state.mode {
            Mode::AwaitingMessage => {
                let line = match self.transport.receive(self.timeout_ms)? {
                    Some(line) => line,
                    None => {
                        self.state.timeout_count += 1;
                        return Ok(StepEvent::TimedOut);
                    }
                };
                let pkt = match decode_brain(&line) {
                    Ok(pkt) => pkt,
                    Err(_) => {
                        self.state.malformed_count += 1;
                        return Ok(StepEvent::Discarded);
                    }
                };
                match self.state.accept_inbound(pkt.iter, pkt) {
                    Inbound::Duplicate => Ok(StepEvent::Discarded),
                    Inbound::Fresh(pkt) => {
                        self.state.mode = Mode::Processing;
                        match policy(&pkt) {
                            Ok((velocity, rotation)) => {
                                self.state.mode = Mode::Sending;
                                let iter = self.state.next_outbound_iter();
                                let out = JetsonPacket::new(velocity, rotation, iter)?;
                                self.transport.send(&encode_jetson(&out))?;
                                self.state.mode = Mode::AwaitingMessage;
                                Ok(StepEvent::Processed(pkt.iter))
                            }
                            Err(_) => {
                                self.state.mode = Mode::AwaitingMessage;
                                Ok(StepEvent::Discarded)
                            }
                        }
                    }
                }
            }
            Mode::Sending | Mode::Processing => Err(Error::InvalidState(
                "jetson endpoint observed mid-cycle".into(),
            )),
        }
    }
}
