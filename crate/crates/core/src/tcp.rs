//! Unmodified TCP endpoints at segment granularity.
//!
//! The sender sits at the sink and pushes a fixed number of segments through
//! a window advertised by the receiver. Recovery is timeout driven; fast
//! retransmit is available behind a flag and off by default.

use std::collections::{BTreeMap, BTreeSet};

use crate::packet::{AckSegment, DataSegment, SegmentNo};
use crate::sim::SimTime;

/// One step of the standard smoothed RTT estimator (alpha = 1/8, beta = 1/4).
///
/// `prev` is `None` before the first sample, in which case the estimator is
/// initialised with `srtt = sample` and `rttvar = sample / 2`.
pub fn update_rto(prev: Option<(SimTime, SimTime)>, sample: SimTime, rto_min: SimTime) -> (SimTime, SimTime, SimTime) {
    let (srtt, rttvar) = match prev {
        None => (sample, sample.scale(1, 2)),
        Some((srtt, rttvar)) => {
            let diff = if srtt > sample { srtt - sample } else { sample - srtt };
            let rttvar = SimTime((3 * rttvar.0 + diff.0) / 4);
            let srtt = SimTime((7 * srtt.0 + sample.0) / 8);
            (srtt, rttvar)
        }
    };
    let rto = (srtt + rttvar.scale(4, 1)).max(rto_min);
    (srtt, rttvar, rto)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SenderConfig {
    pub total_segments: u32,
    pub window: u32,
    pub rto_min: SimTime,
    pub rto_max: SimTime,
    pub rto_initial: SimTime,
    pub fast_retransmit: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct InFlight {
    first_sent_at: SimTime,
    transmissions: u32,
    sacked: bool,
    /// Cleared when a retransmission makes this segment's ACK timing ambiguous.
    timed: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SenderAction {
    Send(DataSegment),
    ArmRto { at: SimTime, generation: u64 },
    Completed,
}

#[derive(Clone, Debug)]
pub struct SenderState {
    cfg: SenderConfig,
    next_new: SegmentNo,
    cumulative: SegmentNo,
    in_flight: BTreeMap<SegmentNo, InFlight>,
    estimate: Option<(SimTime, SimTime)>,
    rto: SimTime,
    backoff: u32,
    rto_generation: u64,
    rto_armed: bool,
    dup_acks: u32,
    started: bool,
    completed_at: Option<SimTime>,
    e2e_retransmissions: u64,
    total_data_tx: u64,
}

impl SenderState {
    pub fn new(cfg: SenderConfig) -> Self {
        assert!(cfg.window >= 1, "window must be positive");
        let rto = cfg.rto_initial;
        Self {
            cfg,
            next_new: SegmentNo(1),
            cumulative: SegmentNo(1),
            in_flight: BTreeMap::new(),
            estimate: None,
            rto,
            backoff: 0,
            rto_generation: 0,
            rto_armed: false,
            dup_acks: 0,
            started: false,
            completed_at: None,
            e2e_retransmissions: 0,
            total_data_tx: 0,
        }
    }

    pub fn e2e_retransmissions(&self) -> u64 {
        self.e2e_retransmissions
    }

    pub fn total_data_tx(&self) -> u64 {
        self.total_data_tx
    }

    pub fn completed_at(&self) -> Option<SimTime> {
        self.completed_at
    }

    pub fn cumulative(&self) -> SegmentNo {
        self.cumulative
    }

    pub fn rto(&self) -> SimTime {
        self.rto
    }

    pub fn srtt(&self) -> Option<SimTime> {
        self.estimate.map(|(s, _)| s)
    }

    pub fn in_flight(&self) -> impl Iterator<Item = SegmentNo> + '_ {
        self.in_flight.keys().copied()
    }

    /// Whether an outstanding segment has been selectively acknowledged.
    /// SACKed segments stay retransmittable until cumulatively covered.
    pub fn is_sacked(&self, seq: SegmentNo) -> bool {
        self.in_flight.get(&seq).is_some_and(|f| f.sacked)
    }

    /// Timeout currently in force, including exponential backoff.
    pub fn effective_rto(&self) -> SimTime {
        let factor = 1u64.checked_shl(self.backoff.min(32)).unwrap_or(u64::MAX);
        SimTime(self.rto.0.saturating_mul(factor)).min(self.cfg.rto_max)
    }

    pub fn start(&mut self, now: SimTime) -> Vec<SenderAction> {
        assert!(!self.started, "transfer already started");
        self.started = true;
        let mut out = Vec::new();
        self.fill_window(now, &mut out);
        out
    }

    pub fn on_ack(&mut self, ack: &AckSegment, now: SimTime) -> Vec<SenderAction> {
        let mut out = Vec::new();
        if self.completed_at.is_some() || ack.ack_no() < self.cumulative {
            return out;
        }
        for s in ack.sack() {
            if let Some(f) = self.in_flight.get_mut(s) {
                f.sacked = true;
            }
        }

        if ack.ack_no() > self.cumulative {
            let still_out = self.in_flight.split_off(&ack.ack_no());
            let acked = std::mem::replace(&mut self.in_flight, still_out);
            // Sample only the segment whose arrival produced this ACK, and
            // only if no retransmission happened while it was outstanding
            // (Karn). A SACKed segment's ACK was held back by a hole.
            let sample = acked
                .iter()
                .next_back()
                .filter(|(_, f)| f.timed && !f.sacked)
                .map(|(_, f)| now - f.first_sent_at);
            if let Some(sample) = sample.filter(|s| s.0 > 0) {
                let (srtt, rttvar, rto) = update_rto(self.estimate, sample, self.cfg.rto_min);
                self.estimate = Some((srtt, rttvar));
                self.rto = rto;
            }
            self.cumulative = ack.ack_no();
            self.backoff = 0;
            self.dup_acks = 0;
            if self.cumulative.0 > self.cfg.total_segments {
                self.completed_at = Some(now);
                self.rto_generation += 1;
                self.rto_armed = false;
                out.push(SenderAction::Completed);
                return out;
            }
            self.rto_armed = false;
            self.rto_generation += 1;
            self.fill_window(now, &mut out);
            if !self.in_flight.is_empty() && !self.rto_armed {
                self.arm(now, &mut out);
            }
        } else if self.cfg.fast_retransmit {
            self.dup_acks += 1;
            if self.dup_acks == 3 {
                let seq = self.cumulative;
                self.retransmit(seq, &mut out);
            }
        }
        out
    }

    /// Handles an RTO expiry. Stale generations are ignored.
    pub fn on_rto(&mut self, generation: u64, now: SimTime) -> Vec<SenderAction> {
        let mut out = Vec::new();
        if generation != self.rto_generation || !self.rto_armed || self.completed_at.is_some() {
            return out;
        }
        self.rto_armed = false;
        let Some(&oldest) = self.in_flight.keys().next() else {
            return out;
        };
        self.retransmit(oldest, &mut out);
        self.backoff += 1;
        self.arm(now, &mut out);
        out
    }

    fn retransmit(&mut self, seq: SegmentNo, out: &mut Vec<SenderAction>) {
        let f = self.in_flight.get_mut(&seq).expect("retransmitting unknown segment");
        f.transmissions += 1;
        for f in self.in_flight.values_mut() {
            f.timed = false;
        }
        self.e2e_retransmissions += 1;
        self.total_data_tx += 1;
        out.push(SenderAction::Send(DataSegment::new(seq)));
    }

    fn fill_window(&mut self, now: SimTime, out: &mut Vec<SenderAction>) {
        while self.next_new.0 <= self.cfg.total_segments && (self.in_flight.len() as u32) < self.cfg.window {
            let seq = self.next_new;
            self.in_flight.insert(
                seq,
                InFlight {
                    first_sent_at: now,
                    transmissions: 1,
                    sacked: false,
                    timed: true,
                },
            );
            self.total_data_tx += 1;
            self.next_new = seq.next();
            out.push(SenderAction::Send(DataSegment::new(seq)));
            if !self.rto_armed {
                self.arm(now, out);
            }
        }
    }

    fn arm(&mut self, now: SimTime, out: &mut Vec<SenderAction>) {
        self.rto_generation += 1;
        self.rto_armed = true;
        out.push(SenderAction::ArmRto {
            at: now + self.effective_rto(),
            generation: self.rto_generation,
        });
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReceiverState {
    next_expected: SegmentNo,
    out_of_order: BTreeSet<SegmentNo>,
    total_segments: u32,
    delivered_in_order: u64,
}

impl ReceiverState {
    pub fn new(total_segments: u32) -> Self {
        Self {
            next_expected: SegmentNo(1),
            out_of_order: BTreeSet::new(),
            total_segments,
            delivered_in_order: 0,
        }
    }

    pub fn next_expected(&self) -> SegmentNo {
        self.next_expected
    }

    pub fn delivered_in_order(&self) -> u64 {
        self.delivered_in_order
    }

    pub fn is_complete(&self) -> bool {
        self.next_expected.0 > self.total_segments
    }

    /// Absorbs a data segment and returns the ACK to send back.
    pub fn on_data(&mut self, d: &DataSegment) -> AckSegment {
        if d.seq == self.next_expected {
            self.advance();
            while self.out_of_order.remove(&self.next_expected) {
                self.advance();
            }
        } else if d.seq > self.next_expected && d.seq.0 <= self.total_segments {
            self.out_of_order.insert(d.seq);
        }
        AckSegment::new(self.next_expected, self.out_of_order.iter().copied())
    }

    fn advance(&mut self) {
        self.next_expected = self.next_expected.next();
        self.delivered_in_order += 1;
    }
}
