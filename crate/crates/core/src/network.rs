//! One run of the chain: sender, relays and receiver driven by the event loop.
//!
//! Each node's radio holds at most one data frame outstanding: the next data
//! frame goes on air once the previous one is LL-acknowledged or its LL-ACK
//! wait expires. TCP ACK frames are sent immediately.

use std::collections::VecDeque;
use std::fmt::Write as _;

use thiserror::Error;

use crate::harness::{ForcedLoss, RunMetrics, Scenario};
use crate::link::{FrameKind, Link, LossModel, TxOutcome};
use crate::node::{DtcNodeState, NodeAction, NodeConfig};
use crate::packet::{DataSegment, FrameId, LinkFrame, NodeId, Payload};
use crate::sim::{EventQueue, RandomSource, SimTime};
use crate::tcp::{ReceiverState, SenderAction, SenderConfig, SenderState};

#[derive(Debug, Error, PartialEq)]
pub enum RunError {
    #[error("event budget of {budget} exhausted at t={at}us before the transfer completed")]
    EventBudgetExhausted { budget: u64, at: u64 },
    #[error("event queue drained at t={at}us before the transfer completed")]
    Stalled { at: u64 },
}

#[derive(Clone, Debug)]
enum EventKind {
    StartTransfer,
    FrameArrival(LinkFrame),
    LlAckArrival(FrameId),
    LlAckTimeout(u64),
    LocalRtoExpiry(u64),
    SenderRtoExpiry(u64),
    RadioRelease(FrameId),
}

#[derive(Clone, Copy, Debug)]
enum Outgoing {
    /// Originated by the TCP sender or a relay cache.
    Originated(DataSegment),
    /// Forwarded by a relay; becomes a cache candidate when it goes on air.
    Forwarded(DataSegment),
}

#[derive(Debug, Default)]
struct Radio {
    busy: Option<FrameId>,
    queue: VecDeque<Outgoing>,
}

#[derive(Clone, Debug)]
struct SimEvent {
    target: NodeId,
    kind: EventKind,
}

/// Linear chain geometry: sender at position 0, relays at 1..hops, receiver
/// at `hops`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Chain {
    pub hops: usize,
    pub hop_latency: SimTime,
}

impl Chain {
    pub fn relay_count(&self) -> usize {
        self.hops - 1
    }

    pub fn position(&self, n: NodeId) -> usize {
        match n {
            NodeId::Sender => 0,
            NodeId::Relay(i) => i + 1,
            NodeId::Receiver => self.hops,
        }
    }

    pub fn at(&self, pos: usize) -> NodeId {
        match pos {
            0 => NodeId::Sender,
            p if p == self.hops => NodeId::Receiver,
            p => NodeId::Relay(p - 1),
        }
    }

    /// Neighbour toward the receiver.
    pub fn downstream(&self, n: NodeId) -> NodeId {
        self.at(self.position(n) + 1)
    }

    /// Neighbour toward the sender.
    pub fn upstream(&self, n: NodeId) -> NodeId {
        self.at(self.position(n) - 1)
    }

    /// Links between the relay and the receiver.
    pub fn hops_to_receiver(&self, relay: usize) -> usize {
        self.hops - relay - 1
    }

    pub fn link(&self, a: NodeId, b: NodeId) -> Link {
        debug_assert_eq!(self.position(a).abs_diff(self.position(b)), 1);
        Link {
            from: a,
            to: b,
            latency: self.hop_latency,
        }
    }
}

pub struct Network {
    chain: Chain,
    loss: LossModel,
    queue: EventQueue<SimEvent>,
    rng: RandomSource,
    sender: SenderState,
    receiver: ReceiverState,
    relays: Vec<DtcNodeState>,
    /// Data radios indexed by chain position (sender and relays).
    radios: Vec<Radio>,
    ll_wait: SimTime,
    forced: Vec<(ForcedLoss, bool)>,
    next_frame: u64,
    events: u64,
    event_budget: u64,
    trace: Option<String>,
}

impl Network {
    pub fn new(s: &Scenario) -> Self {
        let chain = Chain {
            hops: s.hops,
            hop_latency: s.hop_latency,
        };
        let loss = LossModel::derive(s.p_data).expect("scenario validated");
        let rto_min = s.rto_min();
        let sender = SenderState::new(SenderConfig {
            total_segments: s.total_segments,
            window: s.window,
            rto_min,
            rto_max: s.rto_max,
            rto_initial: rto_min.scale(s.rto_initial_multiplier as u64, 1),
            fast_retransmit: s.fast_retransmit,
        });
        let ll_wait = s.hop_latency.scale(s.ll_wait_multiplier as u64, 1);
        let node_cfg = NodeConfig {
            dtc_enabled: s.dtc_enabled,
            ll_wait,
            max_local_retries: s.max_local_retries,
        };
        let relays = (0..chain.relay_count())
            .map(|i| DtcNodeState::new(i, chain.hops_to_receiver(i), s.hop_latency, node_cfg.clone()))
            .collect();
        let mut queue = EventQueue::new();
        queue.schedule(
            SimTime::ZERO,
            SimEvent {
                target: NodeId::Sender,
                kind: EventKind::StartTransfer,
            },
        );
        Self {
            chain,
            loss,
            queue,
            rng: RandomSource::new(s.seed),
            sender,
            receiver: ReceiverState::new(s.total_segments),
            relays,
            radios: (0..chain.hops).map(|_| Radio::default()).collect(),
            ll_wait,
            forced: s.forced_losses.iter().map(|f| (*f, false)).collect(),
            next_frame: 0,
            events: 0,
            event_budget: s.event_budget,
            trace: None,
        }
    }

    pub fn with_trace(mut self) -> Self {
        self.trace = Some(String::new());
        self
    }

    pub fn trace(&self) -> Option<&str> {
        self.trace.as_deref()
    }

    pub fn rng_draws(&self) -> u64 {
        self.rng.draws()
    }

    pub fn relays(&self) -> &[DtcNodeState] {
        &self.relays
    }

    fn log(&mut self, line: impl FnOnce(&mut String)) {
        if let Some(t) = self.trace.as_mut() {
            line(t);
            t.push('\n');
        }
    }

    /// Runs until the sender sees the final cumulative ACK.
    pub fn run(&mut self) -> Result<RunMetrics, RunError> {
        while self.sender.completed_at().is_none() {
            if self.events >= self.event_budget {
                return Err(RunError::EventBudgetExhausted {
                    budget: self.event_budget,
                    at: self.queue.now().as_micros(),
                });
            }
            let Some(ev) = self.queue.pop_next() else {
                return Err(RunError::Stalled {
                    at: self.queue.now().as_micros(),
                });
            };
            self.events += 1;
            self.dispatch(ev.payload);
        }
        Ok(self.metrics())
    }

    fn metrics(&self) -> RunMetrics {
        RunMetrics {
            e2e_retransmissions: self.sender.e2e_retransmissions(),
            per_node_data_tx: self.relays.iter().map(DtcNodeState::data_tx_count).collect(),
            sender_data_tx: self.sender.total_data_tx(),
            completion_time: self.sender.completed_at().unwrap_or(self.queue.now()),
            delivered_segments: self.receiver.delivered_in_order(),
            local_retransmissions_total: self.relays.iter().map(DtcNodeState::local_retx_count).sum(),
        }
    }

    fn dispatch(&mut self, ev: SimEvent) {
        let now = self.queue.now();
        match (ev.target, ev.kind) {
            (NodeId::Sender, EventKind::StartTransfer) => {
                let actions = self.sender.start(now);
                self.apply_sender(actions);
            }
            (to, EventKind::FrameArrival(frame)) => self.on_frame(to, frame),
            (node, EventKind::LlAckArrival(frame_id)) => {
                if let NodeId::Relay(i) = node {
                    self.relays[i].on_ll_ack(frame_id);
                }
                self.release_radio(node, frame_id);
            }
            (node, EventKind::RadioRelease(frame_id)) => self.release_radio(node, frame_id),
            (NodeId::Relay(i), EventKind::LlAckTimeout(g)) => {
                let actions = self.relays[i].on_ll_timeout(g, now);
                self.apply_relay(i, actions);
            }
            (NodeId::Relay(i), EventKind::LocalRtoExpiry(g)) => {
                let actions = self.relays[i].on_local_rto(g, now);
                self.apply_relay(i, actions);
            }
            (NodeId::Sender, EventKind::SenderRtoExpiry(g)) => {
                let actions = self.sender.on_rto(g, now);
                self.apply_sender(actions);
            }
            (target, kind) => unreachable!("event {kind:?} delivered to {target}"),
        }
    }

    fn on_frame(&mut self, at: NodeId, frame: LinkFrame) {
        let now = self.queue.now();
        let link = self.chain.link(at, frame.from);
        let outcome = link.acknowledge(&self.loss, &mut self.rng, now);
        self.log_hop(at, frame.from, FrameKind::LlAck, outcome, now);
        if let TxOutcome::Delivered { at: when } = outcome {
            self.queue.schedule(
                when,
                SimEvent {
                    target: frame.from,
                    kind: EventKind::LlAckArrival(frame.frame_id),
                },
            );
        }

        match (at, frame.payload) {
            (NodeId::Receiver, Payload::Data(d)) => {
                let ack = self.receiver.on_data(&d);
                let id = self.alloc_frame();
                self.transmit(NodeId::Receiver, Payload::Ack(ack), id);
            }
            (NodeId::Sender, Payload::Ack(a)) => {
                let actions = self.sender.on_ack(&a, now);
                self.apply_sender(actions);
            }
            (NodeId::Relay(i), Payload::Data(d)) => {
                let actions = self.relays[i].on_data(d, now);
                self.apply_relay(i, actions);
            }
            (NodeId::Relay(i), Payload::Ack(a)) => {
                let actions = self.relays[i].on_ack(a, now);
                self.apply_relay(i, actions);
            }
            (at, payload) => unreachable!("{payload} arrived at {at}"),
        }
    }

    fn apply_sender(&mut self, actions: Vec<SenderAction>) {
        for a in actions {
            match a {
                SenderAction::Send(d) => self.send_data(NodeId::Sender, Outgoing::Originated(d)),
                SenderAction::ArmRto { at, generation } => self.queue.schedule(
                    at,
                    SimEvent {
                        target: NodeId::Sender,
                        kind: EventKind::SenderRtoExpiry(generation),
                    },
                ),
                SenderAction::Completed => {
                    let now = self.queue.now();
                    self.log(|t| {
                        let _ = write!(t, "DONE t={now}");
                    });
                }
            }
        }
    }

    fn apply_relay(&mut self, i: usize, actions: Vec<NodeAction>) {
        let me = NodeId::Relay(i);
        for a in actions {
            match a {
                NodeAction::Forward(d) => self.send_data(me, Outgoing::Forwarded(d)),
                NodeAction::Retransmit(d) => self.send_data(me, Outgoing::Originated(d)),
                NodeAction::Upstream(ack) => {
                    let id = self.alloc_frame();
                    self.transmit(me, Payload::Ack(ack), id);
                }
                NodeAction::ArmLlTimer { at, generation } => self.queue.schedule(
                    at,
                    SimEvent {
                        target: me,
                        kind: EventKind::LlAckTimeout(generation),
                    },
                ),
                NodeAction::ArmLocalRto { at, generation } => self.queue.schedule(
                    at,
                    SimEvent {
                        target: me,
                        kind: EventKind::LocalRtoExpiry(generation),
                    },
                ),
                NodeAction::Log(action, seq) => {
                    let now = self.queue.now();
                    self.log(|t| {
                        let _ = write!(t, "DTC node={i} action={action} seq={seq} t={now}");
                    });
                }
            }
        }
    }

    fn alloc_frame(&mut self) -> FrameId {
        let id = FrameId(self.next_frame);
        self.next_frame += 1;
        id
    }

    fn send_data(&mut self, from: NodeId, out: Outgoing) {
        let pos = self.chain.position(from);
        if self.radios[pos].busy.is_some() {
            self.radios[pos].queue.push_back(out);
        } else {
            self.put_on_air(from, out);
        }
    }

    fn release_radio(&mut self, node: NodeId, frame_id: FrameId) {
        if node == NodeId::Receiver {
            return;
        }
        let pos = self.chain.position(node);
        if self.radios[pos].busy != Some(frame_id) {
            return;
        }
        self.radios[pos].busy = None;
        if let Some(next) = self.radios[pos].queue.pop_front() {
            self.put_on_air(node, next);
        }
    }

    fn put_on_air(&mut self, from: NodeId, out: Outgoing) {
        let now = self.queue.now();
        let id = self.alloc_frame();
        let pos = self.chain.position(from);
        self.radios[pos].busy = Some(id);
        self.queue.schedule(
            now + self.ll_wait,
            SimEvent {
                target: from,
                kind: EventKind::RadioRelease(id),
            },
        );
        let d = match out {
            Outgoing::Originated(d) => d,
            Outgoing::Forwarded(d) => {
                if let NodeId::Relay(i) = from {
                    let actions = self.relays[i].on_forwarded(d, id, now);
                    self.apply_relay(i, actions);
                }
                d
            }
        };
        self.transmit(from, Payload::Data(d), id);
    }

    fn transmit(&mut self, from: NodeId, payload: Payload, frame_id: FrameId) {
        let now = self.queue.now();
        let to = match payload {
            Payload::Data(_) => self.chain.downstream(from),
            Payload::Ack(_) => self.chain.upstream(from),
        };
        let frame = LinkFrame {
            frame_id,
            payload,
            from,
            to,
        };
        self.log(|t| {
            let _ = write!(t, "TX node={from} {} t={now}", frame.payload);
        });
        let link = self.chain.link(from, to);
        let mut outcome = link.transmit(&frame, &self.loss, &mut self.rng, now);
        if let Payload::Data(d) = &frame.payload {
            if self.force_loss(from, d) {
                outcome = TxOutcome::Lost;
            }
        }
        self.log_hop(from, to, FrameKind::from(&frame.payload), outcome, now);
        if let TxOutcome::Delivered { at } = outcome {
            self.queue.schedule(
                at,
                SimEvent {
                    target: to,
                    kind: EventKind::FrameArrival(frame),
                },
            );
        }
    }

    fn force_loss(&mut self, from: NodeId, d: &DataSegment) -> bool {
        for (rule, used) in &mut self.forced {
            if !*used && rule.from == from && rule.seq == d.seq {
                *used = true;
                return true;
            }
        }
        false
    }

    fn log_hop(&mut self, from: NodeId, to: NodeId, kind: FrameKind, outcome: TxOutcome, now: SimTime) {
        let result = if outcome.is_delivered() { "delivered" } else { "lost" };
        self.log(|t| {
            let _ = write!(t, "HOP from={from} to={to} kind={kind} result={result} t={now}");
        });
    }
}

/// Runs `s` and returns its metrics together with the event trace.
pub fn run_traced(s: &Scenario) -> Result<(RunMetrics, String), RunError> {
    let mut net = Network::new(s).with_trace();
    let m = net.run()?;
    Ok((m, net.trace.take().unwrap_or_default()))
}
