//! DCF parameters and the per-node contention state.
//!
//! This module holds the parts of the 802.11 DCF that are pure state
//! transitions: contention window adaptation, retry accounting, backoff
//! draws, frame durations and NAV bookkeeping. The event-driven side that
//! couples them to the radio lives in [`crate::network`].

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frame::{airtime, FrameKind, Packet};
use crate::sched::SimRng;
use crate::time::{SimDuration, SimTime};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MacParamError {
    #[error("cw_min ({cw_min}) and cw_max ({cw_max}) must satisfy 0 < cw_min <= cw_max and both be 2^k - 1")]
    ContentionWindow { cw_min: u32, cw_max: u32 },
    #[error("retry limits must be at least 1")]
    RetryLimit,
    #[error("difs must equal sifs + 2 * slot_time")]
    Difs,
    #[error("queue capacity must be at least 1")]
    Queue,
}

mod micros {
    use serde::{Deserialize, Deserializer, Serializer};

    use crate::time::SimDuration;

    pub fn serialize<S: Serializer>(d: &SimDuration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_micros())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<SimDuration, D::Error> {
        u64::deserialize(d).map(SimDuration::from_micros)
    }
}

/// DSSS timing and DCF tunables. Durations are written in microseconds in config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MacParams {
    #[serde(with = "micros")]
    pub slot_time: SimDuration,
    #[serde(with = "micros")]
    pub sifs: SimDuration,
    #[serde(with = "micros")]
    pub difs: SimDuration,
    pub cw_min: u32,
    pub cw_max: u32,
    pub short_retry_limit: u32,
    pub long_retry_limit: u32,
    pub rts_threshold_bytes: u32,
    #[serde(with = "micros")]
    pub plcp_overhead: SimDuration,
    pub queue_capacity: usize,
}

impl Default for MacParams {
    fn default() -> Self {
        MacParams {
            slot_time: SimDuration::from_micros(20),
            sifs: SimDuration::from_micros(10),
            difs: SimDuration::from_micros(50),
            cw_min: 31,
            cw_max: 1023,
            short_retry_limit: 7,
            long_retry_limit: 4,
            rts_threshold_bytes: 0,
            plcp_overhead: SimDuration::from_micros(192),
            queue_capacity: 50,
        }
    }
}

fn is_window(v: u32) -> bool {
    v > 0 && (v + 1).is_power_of_two()
}

impl MacParams {
    pub fn validate(&self) -> Result<(), MacParamError> {
        if !is_window(self.cw_min) || !is_window(self.cw_max) || self.cw_min > self.cw_max {
            return Err(MacParamError::ContentionWindow { cw_min: self.cw_min, cw_max: self.cw_max });
        }
        if self.short_retry_limit == 0 || self.long_retry_limit == 0 {
            return Err(MacParamError::RetryLimit);
        }
        if self.difs != self.sifs + self.slot_time * 2 {
            return Err(MacParamError::Difs);
        }
        if self.queue_capacity == 0 {
            return Err(MacParamError::Queue);
        }
        Ok(())
    }

    pub fn frame_airtime(&self, kind: FrameKind, payload_bytes: u32, bandwidth_bps: u64) -> SimDuration {
        airtime(kind.overhead_bytes() + payload_bytes, self.plcp_overhead, bandwidth_bps)
    }

    /// Whether a packet of this size is preceded by an RTS/CTS handshake.
    pub fn uses_rts(&self, payload_bytes: u32) -> bool {
        payload_bytes > self.rts_threshold_bytes
    }
}

/// Airtimes and NAV durations of the four-way exchange for one payload size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExchangeTiming {
    pub rts: SimDuration,
    pub cts: SimDuration,
    pub data: SimDuration,
    pub ack: SimDuration,
    pub sifs: SimDuration,
}

impl ExchangeTiming {
    pub fn new(params: &MacParams, payload_bytes: u32, bandwidth_bps: u64) -> Self {
        ExchangeTiming {
            rts: params.frame_airtime(FrameKind::Rts, 0, bandwidth_bps),
            cts: params.frame_airtime(FrameKind::Cts, 0, bandwidth_bps),
            data: params.frame_airtime(FrameKind::Data, payload_bytes, bandwidth_bps),
            ack: params.frame_airtime(FrameKind::Ack, 0, bandwidth_bps),
            sifs: params.sifs,
        }
    }

    pub fn airtime(&self, kind: FrameKind) -> SimDuration {
        match kind {
            FrameKind::Rts => self.rts,
            FrameKind::Cts => self.cts,
            FrameKind::Data => self.data,
            FrameKind::Ack => self.ack,
        }
    }

    /// NAV announced by each frame: the rest of the exchange after it ends.
    pub fn nav(&self, kind: FrameKind) -> SimDuration {
        match kind {
            FrameKind::Rts => self.sifs + self.cts + self.sifs + self.data + self.sifs + self.ack,
            FrameKind::Cts => self.sifs + self.data + self.sifs + self.ack,
            FrameKind::Data => self.sifs + self.ack,
            FrameKind::Ack => SimDuration::ZERO,
        }
    }
}

/// Binary-exponential contention window confined to `[cw_min, cw_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ContentionWindow {
    cw: u32,
    cw_min: u32,
    cw_max: u32,
}

impl ContentionWindow {
    pub fn new(cw_min: u32, cw_max: u32) -> Self {
        ContentionWindow { cw: cw_min, cw_min, cw_max }
    }

    pub fn value(&self) -> u32 {
        self.cw
    }

    pub fn reset(&mut self) {
        self.cw = self.cw_min;
    }

    pub fn double(&mut self) {
        self.cw = (2 * self.cw + 1).min(self.cw_max);
    }
}

/// Which stage of an exchange timed out.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailedStage {
    /// No CTS after an RTS.
    Rts,
    /// No ACK after a DATA frame.
    Data,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureOutcome {
    Retry,
    Discard,
}

/// Contention window plus the per-packet short and long retry counters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryState {
    pub cw: ContentionWindow,
    pub short_retry: u32,
    pub long_retry: u32,
    short_limit: u32,
    long_limit: u32,
}

impl RetryState {
    pub fn new(params: &MacParams) -> Self {
        RetryState {
            cw: ContentionWindow::new(params.cw_min, params.cw_max),
            short_retry: 0,
            long_retry: 0,
            short_limit: params.short_retry_limit,
            long_limit: params.long_retry_limit,
        }
    }

    pub fn on_success(&mut self) {
        self.cw.reset();
        self.short_retry = 0;
        self.long_retry = 0;
    }

    /// Doubles the window and charges the failure to the counter of the
    /// failed stage. Reaching the limit discards the packet and starts the
    /// next one from a fresh window.
    pub fn on_failure(&mut self, stage: FailedStage) -> FailureOutcome {
        self.cw.double();
        let exhausted = match stage {
            FailedStage::Rts => {
                self.short_retry += 1;
                self.short_retry >= self.short_limit
            }
            FailedStage::Data => {
                self.long_retry += 1;
                self.long_retry >= self.long_limit
            }
        };
        if exhausted {
            self.on_success();
            FailureOutcome::Discard
        } else {
            FailureOutcome::Retry
        }
    }
}

/// Number of idle slots to wait, uniform on `[0, cw]`.
pub fn draw_backoff_slots(cw: u32, rng: &mut SimRng) -> u32 {
    rng.uniform_int(cw)
}

/// Backoff interval for a given slot count.
pub fn backoff_duration(slots: u32, slot_time: SimDuration) -> SimDuration {
    slot_time * u64::from(slots)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MacPhase {
    Idle,
    WaitDifs,
    BackoffCounting,
    BackoffFrozen,
    DeferNav,
    Transmitting,
    WaitCts,
    WaitAck,
}

impl fmt::Display for MacPhase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            MacPhase::Idle => "IDLE",
            MacPhase::WaitDifs => "WAIT_DIFS",
            MacPhase::BackoffCounting => "BACKOFF_COUNTING",
            MacPhase::BackoffFrozen => "BACKOFF_FROZEN",
            MacPhase::DeferNav => "DEFER_NAV",
            MacPhase::Transmitting => "TRANSMITTING",
            MacPhase::WaitCts => "WAIT_CTS",
            MacPhase::WaitAck => "WAIT_ACK",
        };
        f.write_str(s)
    }
}

/// A packet waiting for (or undergoing) MAC service at one hop.
#[derive(Debug, Clone, PartialEq)]
pub struct QueuedPacket {
    pub packet: Packet,
    pub next_hop: crate::frame::NodeId,
    /// Per-hop identity, used for duplicate filtering at the receiver.
    pub token: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EnqueueResult {
    Accepted,
    /// Queue full; the packet is handed back for a drop record.
    Overflow(QueuedPacket),
}

/// What a node is doing with the head-of-queue packet.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TxStage {
    /// Contending for the medium.
    Contend,
    /// RTS on air or awaiting CTS.
    Rts,
    /// DATA on air or awaiting ACK.
    Data,
}

/// Per-node DCF state.
#[derive(Debug)]
pub struct MacState {
    pub phase: MacPhase,
    pub retry: RetryState,
    /// Remaining backoff slots; `None` when no backoff is pending.
    pub backoff_slots: Option<u32>,
    /// A fresh backoff must be drawn before the next transmission.
    pub backoff_due: bool,
    /// Start of the current countdown, when counting.
    pub count_start: Option<SimTime>,
    pub queue: VecDeque<QueuedPacket>,
    pub queue_capacity: usize,
    pub nav_until: SimTime,
    /// When the medium (physical and virtual) last became idle.
    pub idle_since: SimTime,
    pub stage: TxStage,
    /// The last attempt's frame was destroyed by overlap at its receiver.
    pub last_attempt_collided: bool,
    /// A CTS or ACK owed to a peer is scheduled.
    pub response_pending: bool,
}

impl MacState {
    pub fn new(params: &MacParams) -> Self {
        MacState {
            phase: MacPhase::Idle,
            retry: RetryState::new(params),
            backoff_slots: None,
            backoff_due: false,
            count_start: None,
            queue: VecDeque::new(),
            queue_capacity: params.queue_capacity,
            nav_until: SimTime::ZERO,
            idle_since: SimTime::ZERO,
            stage: TxStage::Contend,
            last_attempt_collided: false,
            response_pending: false,
        }
    }

    pub fn enqueue(&mut self, pkt: QueuedPacket) -> EnqueueResult {
        if self.queue.len() >= self.queue_capacity {
            return EnqueueResult::Overflow(pkt);
        }
        self.queue.push_back(pkt);
        EnqueueResult::Accepted
    }

    pub fn nav_active(&self, now: SimTime) -> bool {
        self.nav_until > now
    }

    /// Extends the NAV; returns true if it moved.
    pub fn update_nav(&mut self, until: SimTime) -> bool {
        if until > self.nav_until {
            self.nav_until = until;
            true
        } else {
            false
        }
    }

    pub fn cw(&self) -> u32 {
        self.retry.cw.value()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_consistent() {
        let p = MacParams::default();
        p.validate().unwrap();
        assert_eq!(p.difs, SimDuration::from_micros(50));
    }

    #[test]
    fn rejects_non_orbit_windows() {
        let p = MacParams { cw_min: 30, ..MacParams::default() };
        assert!(p.validate().is_err());
        let p = MacParams { cw_min: 1023, cw_max: 511, ..MacParams::default() };
        assert!(p.validate().is_err());
        let p = MacParams { short_retry_limit: 0, ..MacParams::default() };
        assert_eq!(p.validate(), Err(MacParamError::RetryLimit));
    }

    #[test]
    fn cw_doubles_and_saturates() {
        let mut cw = ContentionWindow::new(31, 1023);
        cw.double();
        assert_eq!(cw.value(), 63);
        for _ in 0..10 {
            cw.double();
        }
        assert_eq!(cw.value(), 1023);
        cw.reset();
        assert_eq!(cw.value(), 31);
    }

    #[test]
    fn success_resets_window_and_counters() {
        let p = MacParams::default();
        let mut r = RetryState::new(&p);
        for _ in 0..3 {
            r.on_failure(FailedStage::Rts);
        }
        r.on_failure(FailedStage::Data);
        assert_eq!((r.short_retry, r.long_retry), (3, 1));
        assert_eq!(r.cw.value(), 511);
        r.on_success();
        assert_eq!((r.short_retry, r.long_retry, r.cw.value()), (0, 0, 31));
    }

    #[test]
    fn seventh_rts_failure_discards() {
        let p = MacParams::default();
        let mut r = RetryState::new(&p);
        for _ in 0..6 {
            assert_eq!(r.on_failure(FailedStage::Rts), FailureOutcome::Retry);
        }
        assert_eq!(r.on_failure(FailedStage::Rts), FailureOutcome::Discard);
        assert_eq!(r.cw.value(), 31);
        assert_eq!(r.short_retry, 0);
    }

    #[test]
    fn fourth_data_failure_discards() {
        let p = MacParams::default();
        let mut r = RetryState::new(&p);
        for _ in 0..3 {
            assert_eq!(r.on_failure(FailedStage::Data), FailureOutcome::Retry);
        }
        assert_eq!(r.on_failure(FailedStage::Data), FailureOutcome::Discard);
    }

    #[test]
    fn backoff_is_slot_multiple() {
        let slot = SimDuration::from_micros(20);
        assert_eq!(backoff_duration(0, slot), SimDuration::ZERO);
        assert_eq!(backoff_duration(10, slot), SimDuration::from_micros(200));
        let mut rng = SimRng::new(3);
        assert_eq!(draw_backoff_slots(0, &mut rng), 0);
    }

    #[test]
    fn rts_threshold_selects_handshake() {
        let p = MacParams::default();
        assert!(p.uses_rts(1500));
        let p = MacParams { rts_threshold_bytes: 3000, ..p };
        assert!(!p.uses_rts(1500));
    }

    #[test]
    fn nav_durations_cover_the_exchange() {
        let t = ExchangeTiming::new(&MacParams::default(), 1500, 2_000_000);
        assert_eq!(t.data, SimDuration::from_micros(6328));
        assert_eq!(t.nav(FrameKind::Rts), SimDuration::from_micros(10 + 248 + 10 + 6328 + 10 + 248));
        assert_eq!(t.nav(FrameKind::Cts), t.nav(FrameKind::Rts) - t.sifs - t.cts);
        assert_eq!(t.nav(FrameKind::Ack), SimDuration::ZERO);
    }

    #[test]
    fn queue_capacity_rule() {
        let p = MacParams::default();
        let mut m = MacState::new(&p);
        let pkt = |i: u64| QueuedPacket {
            packet: crate::frame::Packet {
                id: crate::frame::PacketId(i),
                origin: crate::frame::NodeId(0),
                dest: crate::frame::NodeId(1),
                segment: crate::frame::Segment {
                    flow: crate::frame::FlowId(0),
                    kind: crate::frame::SegmentKind::Data,
                    seq: i,
                    size_bytes: 1500,
                    sent_at: SimTime::ZERO,
                },
            },
            next_hop: crate::frame::NodeId(1),
            token: i,
        };
        for i in 0..49 {
            assert_eq!(m.enqueue(pkt(i)), EnqueueResult::Accepted);
        }
        assert_eq!(m.enqueue(pkt(49)), EnqueueResult::Accepted);
        assert_eq!(m.enqueue(pkt(50)), EnqueueResult::Overflow(pkt(50)));
    }
}
