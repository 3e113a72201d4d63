//! Network packets and on-air MAC frames.

use std::fmt;

use crate::time::{SimDuration, SimTime};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub usize);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FlowId(pub usize);

/// Identity of one transport copy entering the network. A TCP
/// retransmission of the same sequence number is a new copy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PacketId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegmentKind {
    Data,
    Ack,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub flow: FlowId,
    pub kind: SegmentKind,
    /// Sequence number for DATA, cumulative ack number (next expected) for ACK.
    pub seq: u64,
    pub size_bytes: u32,
    /// Source transmit time of this copy. ACKs echo the timestamp of the data they acknowledge.
    pub sent_at: SimTime,
}

/// A routed packet: a segment plus its end-to-end addressing.
#[derive(Debug, Clone, PartialEq)]
pub struct Packet {
    pub id: PacketId,
    pub origin: NodeId,
    pub dest: NodeId,
    pub segment: Segment,
}

impl Packet {
    pub fn size_bytes(&self) -> u32 {
        self.segment.size_bytes
    }

    pub fn is_data(&self) -> bool {
        self.segment.kind == SegmentKind::Data
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FrameKind {
    Rts,
    Cts,
    Data,
    Ack,
}

impl FrameKind {
    /// MAC header plus FCS bytes for each frame type.
    pub const fn overhead_bytes(self) -> u32 {
        match self {
            FrameKind::Data => 34,
            FrameKind::Rts => 20,
            FrameKind::Cts | FrameKind::Ack => 14,
        }
    }

    pub const fn as_str(self) -> &'static str {
        match self {
            FrameKind::Rts => "RTS",
            FrameKind::Cts => "CTS",
            FrameKind::Data => "DATA",
            FrameKind::Ack => "ACK",
        }
    }
}

impl fmt::Display for FrameKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub kind: FrameKind,
    pub src: NodeId,
    pub dst: NodeId,
    /// NAV reservation announced to third parties, measured from the frame's end.
    pub duration_field: SimDuration,
    /// Per-hop identity of the MAC service unit this frame belongs to.
    pub token: u64,
    /// The carried packet (DATA frames only).
    pub packet: Option<Packet>,
}

impl Frame {
    pub fn payload_bytes(&self) -> u32 {
        self.packet.as_ref().map_or(0, Packet::size_bytes)
    }

    pub fn size_bytes(&self) -> u32 {
        self.kind.overhead_bytes() + self.payload_bytes()
    }

    pub fn packet_id(&self) -> Option<PacketId> {
        self.packet.as_ref().map(|p| p.id)
    }
}

/// Airtime of a frame of `bytes` bytes: PLCP preamble/header plus the body at `bandwidth_bps`.
pub fn airtime(bytes: u32, plcp: SimDuration, bandwidth_bps: u64) -> SimDuration {
    let bits = u64::from(bytes) * 8;
    plcp + SimDuration::from_nanos(bits * 1_000_000_000 / bandwidth_bps)
}
