//! Segment-granularity TCP packets and the SACK algebra.

use std::collections::BTreeSet;
use std::fmt;

/// Segment index, starting at 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SegmentNo(pub u32);

impl SegmentNo {
    pub fn next(self) -> SegmentNo {
        SegmentNo(self.0 + 1)
    }
}

impl fmt::Display for SegmentNo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Position on the chain. Relays are indexed from 0 (next to the sender).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NodeId {
    Sender,
    Relay(usize),
    Receiver,
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeId::Sender => f.write_str("sender"),
            NodeId::Relay(i) => write!(f, "{i}"),
            NodeId::Receiver => f.write_str("receiver"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Origin {
    EndToEnd,
    LocalRetransmission,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct DataSegment {
    pub seq: SegmentNo,
    pub origin: Origin,
}

impl DataSegment {
    pub fn new(seq: SegmentNo) -> Self {
        Self {
            seq,
            origin: Origin::EndToEnd,
        }
    }

    pub fn local(seq: SegmentNo) -> Self {
        Self {
            seq,
            origin: Origin::LocalRetransmission,
        }
    }
}

impl fmt::Display for DataSegment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let origin = match self.origin {
            Origin::EndToEnd => "e2e",
            Origin::LocalRetransmission => "local",
        };
        write!(f, "DATA seq={} origin={}", self.seq, origin)
    }
}

/// Cumulative (next-expected) acknowledgment plus a SACK set.
///
/// The SACK set never holds members below `ack_no`; every constructor and
/// mutator keeps that canonical form.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct AckSegment {
    ack_no: SegmentNo,
    sack: BTreeSet<SegmentNo>,
}

impl AckSegment {
    pub fn new(ack_no: SegmentNo, sack: impl IntoIterator<Item = SegmentNo>) -> Self {
        let sack = sack.into_iter().filter(|s| *s >= ack_no).collect();
        Self { ack_no, sack }
    }

    pub fn cumulative(ack_no: SegmentNo) -> Self {
        Self {
            ack_no,
            sack: BTreeSet::new(),
        }
    }

    pub fn ack_no(&self) -> SegmentNo {
        self.ack_no
    }

    pub fn sack(&self) -> &BTreeSet<SegmentNo> {
        &self.sack
    }

    /// True if `s` is acknowledged cumulatively or selectively.
    pub fn covers(&self, s: SegmentNo) -> bool {
        s < self.ack_no || self.sack.contains(&s)
    }

    /// Adds `s` to the SACK set. Segments below the cumulative point are
    /// already covered and leave the ACK unchanged.
    pub fn with_sack(mut self, s: SegmentNo) -> Self {
        self.add_sack(s);
        self
    }

    pub fn add_sack(&mut self, s: SegmentNo) {
        if s >= self.ack_no {
            self.sack.insert(s);
        }
    }

    /// Whether adding `s` leaves no hole between `ack_no` and the highest
    /// selectively acknowledged segment.
    pub fn gaps_filled_with(&self, s: SegmentNo) -> bool {
        let top = self.sack.iter().next_back().copied().map_or(s, |m| m.max(s));
        (self.ack_no.0..=top.0).all(|n| {
            let n = SegmentNo(n);
            n == s || self.sack.contains(&n)
        })
    }
}

impl fmt::Display for AckSegment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ACK no={} sack={{", self.ack_no)?;
        for (i, s) in self.sack.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{s}")?;
        }
        f.write_str("}")
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Payload {
    Data(DataSegment),
    Ack(AckSegment),
}

impl Payload {
    pub fn kind(&self) -> &'static str {
        match self {
            Payload::Data(_) => "data",
            Payload::Ack(_) => "ack",
        }
    }
}

impl fmt::Display for Payload {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Payload::Data(d) => d.fmt(f),
            Payload::Ack(a) => a.fmt(f),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FrameId(pub u64);

/// One link-level transmission of a TCP segment over a single hop.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LinkFrame {
    pub frame_id: FrameId,
    pub payload: Payload,
    pub from: NodeId,
    pub to: NodeId,
}
