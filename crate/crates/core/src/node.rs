//! Intermediate relay with a one-segment TCP cache.
//!
//! A relay forwards every data segment it sees. While caching is enabled it
//! also keeps a copy of one segment: the copy stays tentative until the next
//! hop acknowledges the frame at the link layer, and becomes locked if that
//! acknowledgment never shows up. A locked segment is retransmitted from the
//! cache when a TCP ACK reveals it missing, or when the local timer
//! (1.5 x the relay's rtt to the receiver) expires.
//!
//! Passing ACKs are used as signals: a SACK covering the cached segment
//! clears the cache, a relay that retransmits adds its segment to the SACK
//! set, and an ACK whose holes are all plugged by the retransmission is
//! swallowed. Data segments that arrive after this relay already forwarded
//! an ACK for them are answered with a regenerated ACK instead of being
//! forwarded.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::packet::{AckSegment, DataSegment, FrameId, SegmentNo};
use crate::sim::SimTime;

/// Seed for a relay's rtt estimate: one latency per link, both directions.
pub fn rtt_initial(hops_to_receiver: usize, hop_latency: SimTime) -> SimTime {
    assert!(
        hops_to_receiver >= 1,
        "relay must be at least one hop from the receiver"
    );
    SimTime(2 * hops_to_receiver as u64 * hop_latency.0)
}

#[derive(Clone, Debug, PartialEq)]
pub struct NodeConfig {
    pub dtc_enabled: bool,
    /// How long a tentative entry waits for its LL-ACK before locking.
    pub ll_wait: SimTime,
    pub max_local_retries: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CacheState {
    /// `awaiting` holds the frame whose LL-ACK is outstanding; `None` once
    /// acknowledged, at which point the entry may be overwritten.
    Tentative {
        awaiting: Option<(FrameId, SimTime)>,
    },
    Locked {
        local_rto_deadline: SimTime,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CacheEntry {
    pub segment: DataSegment,
    pub state: CacheState,
    pub local_retries: u32,
    pub timer_generation: u64,
}

impl CacheEntry {
    pub fn seq(&self) -> SegmentNo {
        self.segment.seq
    }

    pub fn is_locked(&self) -> bool {
        matches!(self.state, CacheState::Locked { .. })
    }

    fn is_replaceable(&self) -> bool {
        matches!(self.state, CacheState::Tentative { awaiting: None })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DtcLog {
    Cache,
    Lock,
    LocalRetx,
    Clear,
    DropAck,
    RegenAck,
}

impl fmt::Display for DtcLog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DtcLog::Cache => "cache",
            DtcLog::Lock => "lock",
            DtcLog::LocalRetx => "local_retx",
            DtcLog::Clear => "clear",
            DtcLog::DropAck => "drop_ack",
            DtcLog::RegenAck => "regen_ack",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum NodeAction {
    /// Pass a received data segment on toward the receiver.
    Forward(DataSegment),
    /// Resend the cached segment toward the receiver.
    Retransmit(DataSegment),
    /// Send an ACK toward the sender.
    Upstream(AckSegment),
    ArmLlTimer {
        at: SimTime,
        generation: u64,
    },
    ArmLocalRto {
        at: SimTime,
        generation: u64,
    },
    Log(DtcLog, SegmentNo),
}

#[derive(Clone, Debug)]
pub struct DtcNodeState {
    index: usize,
    hops_to_receiver: usize,
    cfg: NodeConfig,
    cache: Option<CacheEntry>,
    rtt_est: SimTime,
    rtt_samples_pending: BTreeMap<SegmentNo, SimTime>,
    sighted: BTreeSet<SegmentNo>,
    highest_ack_seen: SegmentNo,
    last_ack_forwarded: SegmentNo,
    generation: u64,
    data_tx_count: u64,
    local_retx_count: u64,
}

impl DtcNodeState {
    pub fn new(index: usize, hops_to_receiver: usize, hop_latency: SimTime, cfg: NodeConfig) -> Self {
        Self {
            index,
            hops_to_receiver,
            cfg,
            cache: None,
            rtt_est: rtt_initial(hops_to_receiver, hop_latency),
            rtt_samples_pending: BTreeMap::new(),
            sighted: BTreeSet::new(),
            highest_ack_seen: SegmentNo(1),
            last_ack_forwarded: SegmentNo(1),
            generation: 0,
            data_tx_count: 0,
            local_retx_count: 0,
        }
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn hops_to_receiver(&self) -> usize {
        self.hops_to_receiver
    }

    pub fn cache(&self) -> Option<&CacheEntry> {
        self.cache.as_ref()
    }

    pub fn rtt_est(&self) -> SimTime {
        self.rtt_est
    }

    pub fn last_ack_forwarded(&self) -> SegmentNo {
        self.last_ack_forwarded
    }

    pub fn data_tx_count(&self) -> u64 {
        self.data_tx_count
    }

    pub fn local_retx_count(&self) -> u64 {
        self.local_retx_count
    }

    pub fn has_pending_sample(&self, seq: SegmentNo) -> bool {
        self.rtt_samples_pending.contains_key(&seq)
    }

    fn local_timeout(&self, retries: u32) -> SimTime {
        SimTime(self.rtt_est.scale(3, 2).0 << retries.min(32))
    }

    fn bump(&mut self) -> u64 {
        self.generation += 1;
        self.generation
    }

    /// A data segment arrived from upstream. Either answers it with a
    /// regenerated ACK or hands it to the radio for forwarding; caching
    /// happens once the radio actually transmits it (see [`Self::on_forwarded`]).
    pub fn on_data(&mut self, d: DataSegment, _now: SimTime) -> Vec<NodeAction> {
        if self.cfg.dtc_enabled && d.seq < self.last_ack_forwarded {
            return vec![
                NodeAction::Log(DtcLog::RegenAck, d.seq),
                NodeAction::Upstream(AckSegment::cumulative(self.last_ack_forwarded)),
            ];
        }
        self.data_tx_count += 1;
        vec![NodeAction::Forward(d)]
    }

    /// The radio put a forwarded segment on air as `frame_id`.
    pub fn on_forwarded(&mut self, d: DataSegment, frame_id: FrameId, now: SimTime) -> Vec<NodeAction> {
        if !self.cfg.dtc_enabled {
            return Vec::new();
        }
        if self.sighted.insert(d.seq) {
            if d.seq >= self.highest_ack_seen {
                self.rtt_samples_pending.insert(d.seq, now);
            }
        } else {
            // Seen before: a sample from it would be ambiguous.
            self.rtt_samples_pending.remove(&d.seq);
        }

        let replaceable = self.cache.as_ref().is_none_or(CacheEntry::is_replaceable);
        if !replaceable {
            return Vec::new();
        }
        let generation = self.bump();
        let deadline = now + self.cfg.ll_wait;
        self.cache = Some(CacheEntry {
            segment: d,
            state: CacheState::Tentative {
                awaiting: Some((frame_id, deadline)),
            },
            local_retries: 0,
            timer_generation: generation,
        });
        vec![
            NodeAction::Log(DtcLog::Cache, d.seq),
            NodeAction::ArmLlTimer {
                at: deadline,
                generation,
            },
        ]
    }

    /// The next hop acknowledged `frame_id` at the link layer.
    pub fn on_ll_ack(&mut self, frame_id: FrameId) {
        let matches = matches!(
            self.cache,
            Some(CacheEntry { state: CacheState::Tentative { awaiting: Some((f, _)) }, .. }) if f == frame_id
        );
        if matches {
            let generation = self.bump();
            let entry = self.cache.as_mut().expect("checked above");
            entry.state = CacheState::Tentative { awaiting: None };
            entry.timer_generation = generation;
        }
    }

    /// The LL-ACK deadline of a tentative entry passed.
    pub fn on_ll_timeout(&mut self, generation: u64, now: SimTime) -> Vec<NodeAction> {
        let live = matches!(
            self.cache,
            Some(CacheEntry { state: CacheState::Tentative { awaiting: Some(_) }, timer_generation, .. })
                if timer_generation == generation
        );
        if !live {
            return Vec::new();
        }
        let new_generation = self.bump();
        let deadline = now + self.local_timeout(0);
        let entry = self.cache.as_mut().expect("checked above");
        entry.state = CacheState::Locked {
            local_rto_deadline: deadline,
        };
        entry.local_retries = 0;
        entry.timer_generation = new_generation;
        vec![
            NodeAction::Log(DtcLog::Lock, entry.seq()),
            NodeAction::ArmLocalRto {
                at: deadline,
                generation: new_generation,
            },
        ]
    }

    /// The local retransmission timer of a locked entry expired.
    pub fn on_local_rto(&mut self, generation: u64, now: SimTime) -> Vec<NodeAction> {
        let live = matches!(
            self.cache,
            Some(CacheEntry { state: CacheState::Locked { .. }, timer_generation, .. })
                if timer_generation == generation
        );
        if !live {
            return Vec::new();
        }
        let seq = self.cache.as_ref().expect("checked above").seq();
        let mut out = Vec::new();
        self.retransmit(seq, &mut out);

        let retries = {
            let entry = self.cache.as_mut().expect("checked above");
            entry.local_retries += 1;
            entry.local_retries
        };
        if retries <= self.cfg.max_local_retries {
            self.rearm(now, &mut out);
        } else {
            self.cache = None;
            self.bump();
            out.push(NodeAction::Log(DtcLog::Clear, seq));
        }
        out
    }

    /// A TCP ACK arrived from downstream.
    pub fn on_ack(&mut self, ack: AckSegment, now: SimTime) -> Vec<NodeAction> {
        if !self.cfg.dtc_enabled {
            return vec![NodeAction::Upstream(ack)];
        }

        let covered: Vec<SegmentNo> = self
            .rtt_samples_pending
            .keys()
            .copied()
            .filter(|s| ack.covers(*s))
            .collect();
        for seq in covered {
            let sent_at = self.rtt_samples_pending.remove(&seq).expect("key listed above");
            let sample = now.saturating_sub(sent_at);
            if sample.0 > 0 {
                self.rtt_est = SimTime((7 * self.rtt_est.0 + sample.0) / 8).max(SimTime(1));
            }
        }
        if ack.ack_no() > self.highest_ack_seen {
            self.highest_ack_seen = ack.ack_no();
            self.sighted = self.sighted.split_off(&ack.ack_no());
        }

        let mut out = Vec::new();
        let mut forward = ack;
        if let Some(entry) = self.cache {
            let c = entry.seq();
            if forward.covers(c) {
                self.cache = None;
                self.bump();
                out.push(NodeAction::Log(DtcLog::Clear, c));
            } else if entry.is_locked() && forward.ack_no() <= c {
                self.retransmit(c, &mut out);
                self.rearm(now, &mut out);
                if forward.gaps_filled_with(c) {
                    out.push(NodeAction::Log(DtcLog::DropAck, c));
                    return out;
                }
                forward.add_sack(c);
            }
        }

        self.last_ack_forwarded = self.last_ack_forwarded.max(forward.ack_no());
        out.push(NodeAction::Upstream(forward));
        out
    }

    fn retransmit(&mut self, seq: SegmentNo, out: &mut Vec<NodeAction>) {
        self.data_tx_count += 1;
        self.local_retx_count += 1;
        self.rtt_samples_pending.remove(&seq);
        out.push(NodeAction::Log(DtcLog::LocalRetx, seq));
        out.push(NodeAction::Retransmit(DataSegment::local(seq)));
    }

    fn rearm(&mut self, now: SimTime, out: &mut Vec<NodeAction>) {
        let generation = self.bump();
        let retries = self.cache.as_ref().map_or(0, |e| e.local_retries);
        let deadline = now + self.local_timeout(retries);
        let entry = self.cache.as_mut().expect("rearm without a cached segment");
        entry.state = CacheState::Locked {
            local_rto_deadline: deadline,
        };
        entry.timer_generation = generation;
        out.push(NodeAction::ArmLocalRto {
            at: deadline,
            generation,
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::packet::Origin;

    const MS: SimTime = SimTime::from_millis(1);

    fn seg(n: u32) -> SegmentNo {
        SegmentNo(n)
    }

    fn ack(no: u32, sack: &[u32]) -> AckSegment {
        AckSegment::new(seg(no), sack.iter().map(|&s| seg(s)))
    }

    fn node(dtc: bool) -> DtcNodeState {
        DtcNodeState::new(
            5,
            4,
            SimTime::from_millis(10),
            NodeConfig {
                dtc_enabled: dtc,
                ll_wait: SimTime::from_millis(30),
                max_local_retries: 3,
            },
        )
    }

    fn timer(actions: &[NodeAction]) -> Option<(SimTime, u64)> {
        actions.iter().find_map(|a| match a {
            NodeAction::ArmLlTimer { at, generation } | NodeAction::ArmLocalRto { at, generation } => {
                Some((*at, *generation))
            }
            _ => None,
        })
    }

    fn downstream(actions: &[NodeAction]) -> Vec<DataSegment> {
        actions
            .iter()
            .filter_map(|a| match a {
                NodeAction::Forward(d) | NodeAction::Retransmit(d) => Some(*d),
                _ => None,
            })
            .collect()
    }

    fn upstream(actions: &[NodeAction]) -> Vec<AckSegment> {
        actions
            .iter()
            .filter_map(|a| match a {
                NodeAction::Upstream(a) => Some(a.clone()),
                _ => None,
            })
            .collect()
    }

    /// Delivers a segment and, if the relay forwards it, puts it on air as
    /// `frame`.
    fn arrive(n: &mut DtcNodeState, d: DataSegment, now: SimTime, frame: FrameId) -> Vec<NodeAction> {
        let mut out = n.on_data(d, now);
        if out.contains(&NodeAction::Forward(d)) {
            out.extend(n.on_forwarded(d, frame, now));
        }
        out
    }

    /// Caches `seq` and lets the LL-ACK deadline pass, returning the local
    /// timer that was armed.
    fn lock(n: &mut DtcNodeState, seq: u32, now: SimTime) -> (SimTime, u64) {
        let a = arrive(n, DataSegment::new(seg(seq)), now, FrameId(seq as u64));
        let (at, g) = timer(&a).expect("cached");
        let a = n.on_ll_timeout(g, at);
        timer(&a).expect("locked")
    }

    #[test]
    fn rtt_seed() {
        assert_eq!(rtt_initial(4, SimTime::from_millis(10)), SimTime::from_millis(80));
        assert_eq!(rtt_initial(1, SimTime::from_millis(10)), SimTime::from_millis(20));
        let near = rtt_initial(1, SimTime::from_millis(10));
        assert!((2..=10).all(|h| rtt_initial(h, SimTime::from_millis(10)) > near));
    }

    #[test]
    fn regenerates_ack_for_already_acked_data() {
        let mut n = node(true);
        n.on_ack(ack(4, &[]), SimTime::ZERO);
        let a = arrive(&mut n, DataSegment::new(seg(2)), MS, FrameId(9));
        assert!(downstream(&a).is_empty());
        assert_eq!(upstream(&a), vec![ack(4, &[])]);
        assert_eq!(n.data_tx_count(), 0);
    }

    #[test]
    fn caches_first_segment_tentatively() {
        let mut n = node(true);
        let a = arrive(&mut n, DataSegment::new(seg(1)), SimTime::ZERO, FrameId(1));
        assert_eq!(downstream(&a), vec![DataSegment::new(seg(1))]);
        let e = n.cache().unwrap();
        assert_eq!(e.seq(), seg(1));
        assert_eq!(
            e.state,
            CacheState::Tentative {
                awaiting: Some((FrameId(1), SimTime::from_millis(30)))
            }
        );
        assert_eq!(n.data_tx_count(), 1);
    }

    #[test]
    fn locked_entry_is_never_displaced() {
        let mut n = node(true);
        lock(&mut n, 1, SimTime::ZERO);
        let a = arrive(&mut n, DataSegment::new(seg(3)), SimTime::from_millis(100), FrameId(3));
        assert_eq!(downstream(&a), vec![DataSegment::new(seg(3))]);
        assert_eq!(n.cache().unwrap().seq(), seg(1));
        assert!(n.cache().unwrap().is_locked());
    }

    #[test]
    fn ll_acked_entry_is_replaceable() {
        let mut n = node(true);
        let a = arrive(&mut n, DataSegment::new(seg(2)), SimTime::ZERO, FrameId(20));
        let (_, g) = timer(&a).unwrap();
        n.on_ll_ack(FrameId(20));
        // The pending deadline is now stale.
        assert!(n.on_ll_timeout(g, SimTime::from_millis(30)).is_empty());
        arrive(&mut n, DataSegment::new(seg(3)), SimTime::from_millis(40), FrameId(30));
        assert_eq!(n.cache().unwrap().seq(), seg(3));
    }

    #[test]
    fn unacked_tentative_entry_is_kept() {
        let mut n = node(true);
        arrive(&mut n, DataSegment::new(seg(1)), SimTime::ZERO, FrameId(1));
        let a = arrive(&mut n, DataSegment::new(seg(2)), SimTime::ZERO, FrameId(2));
        assert!(timer(&a).is_none());
        assert_eq!(n.cache().unwrap().seq(), seg(1));
    }

    #[test]
    fn ll_ack_noops() {
        let mut n = node(true);
        lock(&mut n, 1, SimTime::ZERO);
        let before = *n.cache().unwrap();
        n.on_ll_ack(FrameId(1));
        assert_eq!(*n.cache().unwrap(), before);

        let mut n = node(true);
        arrive(&mut n, DataSegment::new(seg(1)), SimTime::ZERO, FrameId(1));
        let before = *n.cache().unwrap();
        n.on_ll_ack(FrameId(77));
        assert_eq!(*n.cache().unwrap(), before);
    }

    #[test]
    fn lock_arms_one_and_a_half_rtt() {
        let mut n = DtcNodeState::new(
            0,
            2,
            SimTime::from_millis(10),
            NodeConfig {
                dtc_enabled: true,
                ll_wait: SimTime::from_millis(30),
                max_local_retries: 3,
            },
        );
        assert_eq!(n.rtt_est(), SimTime::from_millis(40));
        let (at, _) = lock(&mut n, 1, SimTime::ZERO);
        assert_eq!(at, SimTime::from_millis(30 + 60));
        assert!(n.cache().unwrap().is_locked());
    }

    #[test]
    fn local_rto_retransmits_with_backoff_then_gives_up() {
        let mut n = node(true);
        let (mut at, mut g) = lock(&mut n, 2, SimTime::ZERO);
        let base = n.rtt_est().scale(3, 2);
        for retry in 1..=3u32 {
            let a = n.on_local_rto(g, at);
            assert_eq!(downstream(&a), vec![DataSegment::local(seg(2))]);
            assert_eq!(n.cache().unwrap().local_retries, retry);
            let (next, ng) = timer(&a).unwrap();
            assert_eq!(next - at, SimTime(base.0 << retry));
            at = next;
            g = ng;
        }
        let a = n.on_local_rto(g, at);
        assert_eq!(downstream(&a), vec![DataSegment::local(seg(2))]);
        assert!(n.cache().is_none());
        assert_eq!(n.local_retx_count(), 4);
        assert!(a.contains(&NodeAction::Log(DtcLog::Clear, seg(2))));
    }

    #[test]
    fn stale_local_rto_after_clear() {
        let mut n = node(true);
        let (at, g) = lock(&mut n, 2, SimTime::ZERO);
        n.on_ack(ack(3, &[]), at - MS);
        assert!(n.cache().is_none());
        assert!(n.on_local_rto(g, at).is_empty());
    }

    #[test]
    fn retransmits_and_augments_sack() {
        // Relay closer to the receiver holding segment 2.
        let mut n = node(true);
        let (at, _) = lock(&mut n, 2, SimTime::ZERO);
        let a = n.on_ack(ack(1, &[3]), at - MS);
        assert_eq!(downstream(&a), vec![DataSegment::local(seg(2))]);
        assert_eq!(upstream(&a), vec![ack(1, &[2, 3])]);
        assert_eq!(n.cache().unwrap().seq(), seg(2));
        assert_eq!(n.last_ack_forwarded(), seg(1));
    }

    #[test]
    fn drops_ack_when_gaps_filled() {
        let mut n = node(true);
        let (at, _) = lock(&mut n, 1, SimTime::ZERO);
        let a = n.on_ack(ack(1, &[2, 3]), at - MS);
        assert_eq!(downstream(&a), vec![DataSegment::local(seg(1))]);
        assert!(upstream(&a).is_empty());
        assert!(a.contains(&NodeAction::Log(DtcLog::DropAck, seg(1))));
    }

    #[test]
    fn cumulative_ack_clears_and_forwards() {
        for c in 1..=3 {
            let mut n = node(true);
            lock(&mut n, c, SimTime::ZERO);
            let a = n.on_ack(ack(4, &[]), SimTime::from_millis(500));
            assert!(n.cache().is_none());
            assert!(downstream(&a).is_empty());
            assert_eq!(upstream(&a), vec![ack(4, &[])]);
            assert_eq!(n.last_ack_forwarded(), seg(4));
        }
    }

    #[test]
    fn sack_clears_cache() {
        let mut n = node(true);
        lock(&mut n, 3, SimTime::ZERO);
        let a = n.on_ack(ack(1, &[3]), SimTime::from_millis(200));
        assert!(n.cache().is_none());
        assert_eq!(upstream(&a), vec![ack(1, &[3])]);
    }

    #[test]
    fn tentative_entry_does_not_retransmit() {
        let mut n = node(true);
        arrive(&mut n, DataSegment::new(seg(2)), SimTime::ZERO, FrameId(2));
        n.on_ll_ack(FrameId(2));
        let a = n.on_ack(ack(1, &[3]), SimTime::from_millis(100));
        assert!(downstream(&a).is_empty());
        assert_eq!(upstream(&a), vec![ack(1, &[3])]);
        assert_eq!(n.cache().unwrap().seq(), seg(2));
    }

    #[test]
    fn rtt_estimate_tracks_samples_and_skips_retransmitted() {
        let mut n = node(true);
        assert_eq!(n.rtt_est(), SimTime::from_millis(80));
        arrive(&mut n, DataSegment::new(seg(1)), SimTime::ZERO, FrameId(1));
        n.on_ack(ack(2, &[]), SimTime::from_millis(160));
        assert_eq!(n.rtt_est(), SimTime::from_millis(90));

        let (at, _) = lock(&mut n, 2, SimTime::from_millis(200));
        assert!(n.has_pending_sample(seg(2)));
        n.on_ack(ack(2, &[3]), at);
        assert!(!n.has_pending_sample(seg(2)));
        let before = n.rtt_est();
        n.on_ack(ack(3, &[]), at + SimTime::from_secs(5));
        assert_eq!(n.rtt_est(), before);
    }

    #[test]
    fn disabled_node_is_a_pure_relay() {
        let mut n = node(false);
        n.on_ack(ack(9, &[]), SimTime::ZERO);
        let a = n.on_data(DataSegment::new(seg(2)), MS);
        assert_eq!(a, vec![NodeAction::Forward(DataSegment::new(seg(2)))]);
        assert!(n.on_forwarded(DataSegment::new(seg(2)), FrameId(4), MS).is_empty());
        let a = n.on_ack(ack(1, &[3]), MS);
        assert_eq!(a, vec![NodeAction::Upstream(ack(1, &[3]))]);
        assert!(n.cache().is_none());
        assert_eq!(n.data_tx_count(), 1);
    }

    #[test]
    fn local_retransmissions_carry_local_origin() {
        let mut n = node(true);
        let (at, g) = lock(&mut n, 4, SimTime::ZERO);
        let a = n.on_local_rto(g, at);
        assert!(downstream(&a).iter().all(|d| d.origin == Origin::LocalRetransmission));
    }
}
