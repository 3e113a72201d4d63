//! Reno-style TCP sender and cumulative-ACK receiver driving a greedy FTP source.
//!
//! Segments are numbered from 1. Acknowledgements carry the highest
//! in-order sequence received so far, so `0` means nothing has arrived.

use std::collections::BTreeSet;

use crate::time::{SimDuration, SimTime};

#[derive(Debug, Clone, PartialEq)]
pub struct TcpConfig {
    pub max_window: u32,
    pub initial_ssthresh: u32,
    pub initial_rto: SimDuration,
    pub min_rto: SimDuration,
    pub max_rto: SimDuration,
    pub data_bytes: u32,
    pub ack_bytes: u32,
}

impl Default for TcpConfig {
    fn default() -> Self {
        TcpConfig {
            max_window: 20,
            initial_ssthresh: 20,
            initial_rto: SimDuration::from_secs(1),
            min_rto: SimDuration::from_millis(200),
            max_rto: SimDuration::from_secs(60),
            data_bytes: 1500,
            ack_bytes: 40,
        }
    }
}

/// Sender-side reaction to an ACK or timer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AckEvent {
    NewData,
    Duplicate,
    FastRetransmit(u64),
    Stale,
}

#[derive(Debug, Clone)]
pub struct TcpSender {
    cfg: TcpConfig,
    pub cwnd: f64,
    pub ssthresh: u32,
    /// Next new sequence number to send.
    pub next_seq: u64,
    /// Highest cumulatively acknowledged sequence.
    pub highest_acked: u64,
    pub dupack_count: u32,
    pub srtt: Option<f64>,
    pub rttvar: f64,
    pub rto: SimDuration,
}

impl TcpSender {
    pub fn new(cfg: TcpConfig) -> Self {
        TcpSender {
            cwnd: 1.0,
            ssthresh: cfg.initial_ssthresh.max(2),
            next_seq: 1,
            highest_acked: 0,
            dupack_count: 0,
            srtt: None,
            rttvar: 0.0,
            rto: cfg.initial_rto,
            cfg,
        }
    }

    pub fn config(&self) -> &TcpConfig {
        &self.cfg
    }

    pub fn in_flight(&self) -> u64 {
        self.next_seq - 1 - self.highest_acked
    }

    pub fn has_outstanding(&self) -> bool {
        self.in_flight() > 0
    }

    fn window(&self) -> u64 {
        self.cwnd.min(f64::from(self.cfg.max_window)).floor() as u64
    }

    /// FTP source: always has data, so fill the window. Returns the new
    /// sequence numbers to transmit, in order.
    pub fn ftp_tick(&mut self) -> Vec<u64> {
        let mut out = Vec::new();
        while self.in_flight() < self.window() {
            out.push(self.next_seq);
            self.next_seq += 1;
        }
        out
    }

    fn halve(&mut self) {
        self.ssthresh = ((self.cwnd / 2.0).floor() as u32).max(2);
    }

    fn sample_rtt(&mut self, sample: f64) {
        match self.srtt {
            None => {
                self.srtt = Some(sample);
                self.rttvar = sample / 2.0;
            }
            Some(srtt) => {
                self.rttvar = 0.75 * self.rttvar + 0.25 * (sample - srtt).abs();
                self.srtt = Some(0.875 * srtt + 0.125 * sample);
            }
        }
        let rto = self.srtt.unwrap_or(sample) + 4.0 * self.rttvar;
        self.rto = SimDuration::from_secs_f64(rto).clamp(self.cfg.min_rto, self.cfg.max_rto);
    }

    /// Processes a cumulative ACK. `echo` is the send time of the data copy
    /// that triggered it, used as an RTT sample for new ACKs.
    pub fn on_ack(&mut self, ack: u64, echo: Option<SimTime>, now: SimTime) -> AckEvent {
        if ack > self.highest_acked {
            self.highest_acked = ack;
            if self.next_seq <= ack {
                self.next_seq = ack + 1;
            }
            self.dupack_count = 0;
            if self.cwnd < f64::from(self.ssthresh) {
                self.cwnd += 1.0;
            } else {
                self.cwnd += 1.0 / self.cwnd;
            }
            self.cwnd = self.cwnd.min(f64::from(self.cfg.max_window));
            if let Some(sent) = echo {
                self.sample_rtt(now.saturating_since(sent).as_secs_f64());
            }
            AckEvent::NewData
        } else if ack == self.highest_acked && self.has_outstanding() {
            self.on_dupack()
        } else {
            AckEvent::Stale
        }
    }

    /// Third duplicate triggers fast retransmit with Reno halving.
    pub fn on_dupack(&mut self) -> AckEvent {
        self.dupack_count += 1;
        if self.dupack_count == 3 {
            self.halve();
            self.cwnd = f64::from(self.ssthresh);
            AckEvent::FastRetransmit(self.highest_acked + 1)
        } else {
            AckEvent::Duplicate
        }
    }

    /// Retransmission timeout: collapse to one segment and go back to the
    /// first unacknowledged sequence. Returns the sequence to resend.
    pub fn on_timeout(&mut self) -> u64 {
        self.halve();
        self.cwnd = 1.0;
        self.rto = (self.rto * 2).min(self.cfg.max_rto);
        self.dupack_count = 0;
        let seq = self.highest_acked + 1;
        self.next_seq = seq + 1;
        seq
    }
}

#[derive(Debug, Clone, Default)]
pub struct TcpReceiver {
    highest_in_order: u64,
    out_of_order: BTreeSet<u64>,
}

impl TcpReceiver {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records a data segment and returns the cumulative ACK to send.
    pub fn on_receive_data(&mut self, seq: u64) -> u64 {
        if seq == self.highest_in_order + 1 {
            self.highest_in_order = seq;
            while self.out_of_order.remove(&(self.highest_in_order + 1)) {
                self.highest_in_order += 1;
            }
        } else if seq > self.highest_in_order + 1 {
            self.out_of_order.insert(seq);
        }
        self.highest_in_order
    }

    pub fn highest_in_order(&self) -> u64 {
        self.highest_in_order
    }
}
