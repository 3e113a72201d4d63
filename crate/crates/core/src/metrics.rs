//! Per-run accounting of transport DATA copies: sends, deliveries and drops by cause.

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

use crate::frame::{NodeId, PacketId};
use crate::time::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DropReason {
    Collision,
    RetryLimitExceeded,
    QueueOverflow,
    NoRoute,
}

impl DropReason {
    pub const fn as_str(self) -> &'static str {
        match self {
            DropReason::Collision => "COL",
            DropReason::RetryLimitExceeded => "RET",
            DropReason::QueueOverflow => "IFQ",
            DropReason::NoRoute => "NRTE",
        }
    }
}

impl fmt::Display for DropReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DropRecord {
    pub packet: PacketId,
    pub node: NodeId,
    pub time: SimTime,
    pub reason: DropReason,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AccountingError {
    #[error("packet {0:?} sent twice")]
    DuplicateSend(PacketId),
    #[error("packet {0:?} was never sent")]
    UnknownPacket(PacketId),
    #[error("packet {0:?} reached a second terminal outcome")]
    DoubleTerminal(PacketId),
    #[error("conservation violated: sent {sent} != delivered {delivered} + dropped {dropped} + in flight {in_flight}")]
    Conservation { sent: u64, delivered: u64, dropped: u64, in_flight: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Outcome {
    InFlight,
    Delivered,
    Dropped,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MetricsReport {
    pub sent: u64,
    pub delivered: u64,
    pub avg_delay_s: f64,
    /// False when nothing was delivered and `avg_delay_s` is a placeholder zero.
    pub delay_defined: bool,
    pub total_dropped: u64,
    pub mac_dropped: u64,
    pub collision_dropped: u64,
    pub retry_dropped: u64,
    pub queue_dropped: u64,
    pub no_route_dropped: u64,
    pub in_flight_at_end: u64,
}

impl MetricsReport {
    pub fn check_invariants(&self) -> Result<(), AccountingError> {
        let ok_mac = self.mac_dropped == self.collision_dropped + self.retry_dropped;
        let ok_total = self.total_dropped == self.mac_dropped + self.queue_dropped + self.no_route_dropped;
        let ok_cons = self.sent == self.delivered + self.total_dropped + self.in_flight_at_end;
        if ok_mac && ok_total && ok_cons {
            Ok(())
        } else {
            Err(AccountingError::Conservation {
                sent: self.sent,
                delivered: self.delivered,
                dropped: self.total_dropped,
                in_flight: self.in_flight_at_end,
            })
        }
    }
}

#[derive(Debug, Default)]
pub struct MetricsCollector {
    outcomes: HashMap<PacketId, Outcome>,
    sent: u64,
    delivered: u64,
    delay_sum_s: f64,
    drops: Vec<DropRecord>,
}

impl MetricsCollector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record_send(&mut self, id: PacketId) -> Result<(), AccountingError> {
        if self.outcomes.insert(id, Outcome::InFlight).is_some() {
            return Err(AccountingError::DuplicateSend(id));
        }
        self.sent += 1;
        Ok(())
    }

    fn terminate(&mut self, id: PacketId, outcome: Outcome) -> Result<(), AccountingError> {
        match self.outcomes.get_mut(&id) {
            None => Err(AccountingError::UnknownPacket(id)),
            Some(o) if *o != Outcome::InFlight => Err(AccountingError::DoubleTerminal(id)),
            Some(o) => {
                *o = outcome;
                Ok(())
            }
        }
    }

    pub fn record_receive(&mut self, id: PacketId, sent_at: SimTime, received_at: SimTime) -> Result<(), AccountingError> {
        self.terminate(id, Outcome::Delivered)?;
        self.delivered += 1;
        self.delay_sum_s += received_at.saturating_since(sent_at).as_secs_f64();
        Ok(())
    }

    pub fn record_drop(&mut self, record: DropRecord) -> Result<(), AccountingError> {
        self.terminate(record.packet, Outcome::Dropped)?;
        self.drops.push(record);
        Ok(())
    }

    pub fn drops(&self) -> &[DropRecord] {
        &self.drops
    }

    /// Copies with no terminal outcome yet.
    pub fn outstanding(&self) -> u64 {
        self.outcomes.values().filter(|o| **o == Outcome::InFlight).count() as u64
    }

    /// Builds the report. `in_flight_at_end` is counted independently by
    /// the caller (by walking the queues) so conservation is a real check.
    pub fn finalize(&self, in_flight_at_end: u64) -> Result<MetricsReport, AccountingError> {
        let count = |r: DropReason| self.drops.iter().filter(|d| d.reason == r).count() as u64;
        let collision_dropped = count(DropReason::Collision);
        let retry_dropped = count(DropReason::RetryLimitExceeded);
        let queue_dropped = count(DropReason::QueueOverflow);
        let no_route_dropped = count(DropReason::NoRoute);
        let mac_dropped = collision_dropped + retry_dropped;
        let (avg_delay_s, delay_defined) = if self.delivered > 0 {
            (self.delay_sum_s / self.delivered as f64, true)
        } else {
            (0.0, false)
        };
        let report = MetricsReport {
            sent: self.sent,
            delivered: self.delivered,
            avg_delay_s,
            delay_defined,
            total_dropped: mac_dropped + queue_dropped + no_route_dropped,
            mac_dropped,
            collision_dropped,
            retry_dropped,
            queue_dropped,
            no_route_dropped,
            in_flight_at_end,
        };
        report.check_invariants()?;
        Ok(report)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn drop(id: u64, reason: DropReason) -> DropRecord {
        DropRecord { packet: PacketId(id), node: NodeId(0), time: SimTime::ZERO, reason }
    }

    #[test]
    fn single_delivery_delay() {
        let mut m = MetricsCollector::new();
        m.record_send(PacketId(1)).unwrap();
        m.record_receive(PacketId(1), SimTime::ZERO, SimTime::from_secs_f64(0.02)).unwrap();
        let r = m.finalize(0).unwrap();
        assert_eq!(r.delivered, 1);
        assert!((r.avg_delay_s - 0.02).abs() < 1e-12);
    }

    #[test]
    fn retry_drop_counts_as_mac_drop() {
        let mut m = MetricsCollector::new();
        m.record_send(PacketId(1)).unwrap();
        m.record_drop(drop(1, DropReason::RetryLimitExceeded)).unwrap();
        let r = m.finalize(0).unwrap();
        assert_eq!((r.retry_dropped, r.mac_dropped, r.delivered), (1, 1, 0));
    }

    #[test]
    fn empty_run_flags_undefined_delay() {
        let r = MetricsCollector::new().finalize(0).unwrap();
        assert_eq!(r, MetricsReport::default());
        assert!(!r.delay_defined);
    }

    #[test]
    fn average_of_two_delays() {
        let mut m = MetricsCollector::new();
        for (i, d) in [0.1, 0.3].into_iter().enumerate() {
            m.record_send(PacketId(i as u64)).unwrap();
            m.record_receive(PacketId(i as u64), SimTime::ZERO, SimTime::from_secs_f64(d)).unwrap();
        }
        assert!((m.finalize(0).unwrap().avg_delay_s - 0.2).abs() < 1e-12);
    }

    #[test]
    fn second_terminal_outcome_is_fatal() {
        let mut m = MetricsCollector::new();
        m.record_send(PacketId(7)).unwrap();
        m.record_drop(drop(7, DropReason::Collision)).unwrap();
        assert_eq!(
            m.record_receive(PacketId(7), SimTime::ZERO, SimTime::ZERO),
            Err(AccountingError::DoubleTerminal(PacketId(7)))
        );
    }

    #[test]
    fn conservation_mismatch_is_reported() {
        let mut m = MetricsCollector::new();
        m.record_send(PacketId(1)).unwrap();
        m.record_send(PacketId(2)).unwrap();
        assert!(m.finalize(1).is_err());
        assert_eq!(m.finalize(2).unwrap().in_flight_at_end, 2);
    }

    #[test]
    fn balance_with_many_in_flight() {
        let r = MetricsReport {
            sent: 2000,
            delivered: 1668,
            total_dropped: 93,
            mac_dropped: 73,
            collision_dropped: 54,
            retry_dropped: 19,
            queue_dropped: 20,
            in_flight_at_end: 239,
            ..MetricsReport::default()
        };
        r.check_invariants().unwrap();
    }
}
