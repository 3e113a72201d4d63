//! The event-driven network: DCF channel access, the RTS/CTS/DATA/ACK
//! exchange, forwarding along static routes and the TCP endpoints.
//!
//! Backoff is event driven rather than ticked per slot: a countdown
//! schedules its completion and, if the medium turns busy first, the
//! number of whole idle slots that elapsed is subtracted and the rest is
//! frozen until the medium has been idle for another DIFS.

use std::collections::{HashMap, HashSet};
use std::io::Write;

use thiserror::Error;

use crate::frame::{Frame, FrameKind, NodeId, Packet, PacketId, Segment, SegmentKind};
use crate::mac::{
    backoff_duration, draw_backoff_slots, EnqueueResult, ExchangeTiming, FailedStage, FailureOutcome,
    MacParams, MacPhase, MacState, QueuedPacket, TxStage,
};
use crate::metrics::{AccountingError, DropReason, DropRecord, MetricsCollector, MetricsReport};
use crate::phy::{propagation_delay, AirFrame, LinkTable, PhyError, RadioParams, Reception, Receiver};
use crate::scenario::{build_dumbbell, ConfigError, FlowSpec, ScenarioConfig, Topology};
use crate::sched::{EventHandle, Scheduler, SimRng};
use crate::time::{SimDuration, SimTime};
use crate::transport::{AckEvent, TcpConfig, TcpReceiver, TcpSender};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Phy(#[from] PhyError),
    #[error("accounting failure: {0}")]
    Accounting(#[from] AccountingError),
    #[error("trace output failed: {0}")]
    Trace(#[from] std::io::Error),
}

impl SimError {
    /// Errors that indicate a simulator bug rather than bad input.
    pub fn is_internal(&self) -> bool {
        matches!(self, SimError::Accounting(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum MacTimer {
    Difs,
    Backoff,
    CtsTimeout,
    AckTimeout,
}

#[derive(Debug, Clone)]
enum Event {
    FlowStart(usize),
    RxStart { node: NodeId, air: u64 },
    RxEnd { node: NodeId, air: u64 },
    TxEnd { node: NodeId, air: u64 },
    Mac { node: NodeId, timer: MacTimer },
    NavEnd(NodeId),
    Respond { node: NodeId, frame: Frame },
    SendData(NodeId),
    TcpTimeout(usize),
}

/// Counters useful for diagnostics and invariant audits.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NetworkStats {
    pub events: u64,
    pub rts_sent: u64,
    pub cts_sent: u64,
    pub data_sent: u64,
    pub ack_sent: u64,
    pub cts_timeouts: u64,
    pub ack_timeouts: u64,
    /// Frames addressed to a node that were destroyed by overlap there.
    pub collisions_at_receiver: u64,
    /// Contention transmissions started while the node sensed the medium busy.
    pub busy_medium_transmissions: u64,
    pub mac_discards: u64,
    pub tcp_timeouts: u64,
    pub fast_retransmits: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowSummary {
    pub spec: FlowSpec,
    pub highest_acked: u64,
    pub delivered: u64,
    pub cwnd: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: MetricsReport,
    pub stats: NetworkStats,
    pub flows: Vec<FlowSummary>,
    pub drops: Vec<DropRecord>,
    pub trace: Option<Vec<u8>>,
}

enum TraceSink {
    Memory(Vec<u8>),
    Writer(Box<dyn Write + Send>),
}

struct InAir {
    air: AirFrame,
    pending_rx: usize,
    tx_done: bool,
}

struct Node {
    mac: MacState,
    rx: Receiver,
    medium_idle: bool,
    timer: Option<(EventHandle, MacTimer)>,
    nav_timer: Option<EventHandle>,
}

struct Flow {
    spec: FlowSpec,
    sender: TcpSender,
    receiver: TcpReceiver,
    timer: Option<EventHandle>,
    delivered: u64,
}

/// Everything needed to run one simulation.
#[derive(Debug, Clone)]
pub struct SimSetup {
    pub topology: Topology,
    pub mac: MacParams,
    pub radio: RadioParams,
    pub tcp: TcpConfig,
    pub duration: SimTime,
    pub seed: u64,
    /// Worst-case one-way propagation delay used in CTS/ACK timeouts.
    pub max_propagation: SimDuration,
}

impl SimSetup {
    pub fn from_config(cfg: &ScenarioConfig, allow_any_n: bool) -> Result<Self, SimError> {
        cfg.validate(allow_any_n)?;
        let topology = build_dumbbell(cfg)?;
        let tcp = TcpConfig { data_bytes: cfg.payload, ..TcpConfig::default() };
        Ok(SimSetup {
            topology,
            mac: cfg.mac.clone(),
            radio: cfg.radio.clone(),
            tcp,
            duration: cfg.duration_time(),
            seed: cfg.seed,
            max_propagation: propagation_delay(cfg.field.0.hypot(cfg.field.1)),
        })
    }
}

pub struct Simulation {
    sched: Scheduler<Event>,
    rng: SimRng,
    mac_params: MacParams,
    radio: RadioParams,
    topo: Topology,
    links: LinkTable,
    nodes: Vec<Node>,
    flows: Vec<Flow>,
    air: HashMap<u64, InAir>,
    next_air: u64,
    next_token: u64,
    next_packet: u64,
    /// Per-hop tokens already taken over by the receiving node.
    accepted: HashSet<u64>,
    metrics: MetricsCollector,
    stats: NetworkStats,
    trace: Option<TraceSink>,
    max_prop: SimDuration,
    end: SimTime,
    error: Option<SimError>,
}

impl Simulation {
    pub fn new(setup: SimSetup) -> Result<Self, SimError> {
        setup.mac.validate().map_err(ConfigError::from)?;
        setup.radio.validate()?;
        let links = LinkTable::build(&setup.topology.positions, &setup.radio)?;
        let nodes = (0..setup.topology.len())
            .map(|_| Node {
                mac: MacState::new(&setup.mac),
                rx: Receiver::default(),
                medium_idle: true,
                timer: None,
                nav_timer: None,
            })
            .collect();
        let flows = setup
            .topology
            .flows
            .iter()
            .map(|spec| Flow {
                spec: spec.clone(),
                sender: TcpSender::new(setup.tcp.clone()),
                receiver: TcpReceiver::new(),
                timer: None,
                delivered: 0,
            })
            .collect();
        let mut sim = Simulation {
            sched: Scheduler::new(),
            rng: SimRng::new(setup.seed),
            mac_params: setup.mac,
            radio: setup.radio,
            topo: setup.topology,
            links,
            nodes,
            flows,
            air: HashMap::new(),
            next_air: 0,
            next_token: 0,
            next_packet: 0,
            accepted: HashSet::new(),
            metrics: MetricsCollector::new(),
            stats: NetworkStats::default(),
            trace: None,
            max_prop: setup.max_propagation,
            end: setup.duration,
            error: None,
        };
        for i in 0..sim.flows.len() {
            let at = sim.flows[i].spec.start_time;
            if at < sim.end {
                sim.schedule(at, Event::FlowStart(i));
            }
        }
        Ok(sim)
    }

    pub fn from_config(cfg: &ScenarioConfig, allow_any_n: bool) -> Result<Self, SimError> {
        Self::new(SimSetup::from_config(cfg, allow_any_n)?)
    }

    /// Keep the MAC event log in memory; returned in [`RunOutput::trace`].
    pub fn trace_to_memory(&mut self) {
        self.trace = Some(TraceSink::Memory(Vec::new()));
    }

    pub fn trace_to_writer(&mut self, w: Box<dyn Write + Send>) {
        self.trace = Some(TraceSink::Writer(w));
    }

    pub fn run(mut self) -> Result<RunOutput, SimError> {
        while let Some((_, ev)) = self.sched.pop_until(self.end) {
            self.stats.events += 1;
            self.handle(ev);
            if let Some(e) = self.error.take() {
                return Err(e);
            }
        }
        self.sched.advance_to(self.end);
        let in_flight = self.count_in_flight();
        let report = self.metrics.finalize(in_flight)?;
        let trace = match self.trace.take() {
            Some(TraceSink::Memory(buf)) => Some(buf),
            Some(TraceSink::Writer(mut w)) => {
                w.flush()?;
                None
            }
            None => None,
        };
        let flows = self
            .flows
            .iter()
            .map(|f| FlowSummary {
                spec: f.spec.clone(),
                highest_acked: f.sender.highest_acked,
                delivered: f.delivered,
                cwnd: f.sender.cwnd,
            })
            .collect();
        Ok(RunOutput { report, stats: self.stats, flows, drops: self.metrics.drops().to_vec(), trace })
    }

    fn now(&self) -> SimTime {
        self.sched.now()
    }

    fn schedule(&mut self, at: SimTime, ev: Event) -> EventHandle {
        self.sched.schedule(at, ev).expect("events are never scheduled in the past")
    }

    fn fail(&mut self, e: impl Into<SimError>) {
        if self.error.is_none() {
            self.error = Some(e.into());
        }
    }

    fn trace_line(&mut self, node: NodeId, event: &str, kind: Option<FrameKind>) {
        let Some(sink) = self.trace.as_mut() else { return };
        let now = self.sched.now();
        let mac = &self.nodes[node.0].mac;
        let line = format!(
            "{now} {node} {event} {} cw={} src={} lrc={}\n",
            kind.map_or("-", FrameKind::as_str),
            mac.cw(),
            mac.retry.short_retry,
            mac.retry.long_retry,
        );
        let res = match sink {
            TraceSink::Memory(buf) => {
                buf.extend_from_slice(line.as_bytes());
                Ok(())
            }
            TraceSink::Writer(w) => w.write_all(line.as_bytes()),
        };
        if let Err(e) = res {
            self.fail(e);
        }
    }

    fn handle(&mut self, ev: Event) {
        match ev {
            Event::FlowStart(f) => self.flow_send_window(f),
            Event::RxStart { node, air } => self.on_rx_start(node, air),
            Event::RxEnd { node, air } => self.on_rx_end(node, air),
            Event::TxEnd { node, air } => self.on_tx_end(node, air),
            Event::Mac { node, timer } => self.on_mac_timer(node, timer),
            Event::NavEnd(node) => {
                self.nodes[node.0].nav_timer = None;
                self.refresh_medium(node);
            }
            Event::Respond { node, frame } => {
                self.nodes[node.0].mac.response_pending = false;
                if !self.nodes[node.0].rx.is_transmitting() {
                    self.start_tx(node, frame);
                }
            }
            Event::SendData(node) => self.send_data(node),
            Event::TcpTimeout(f) => self.on_tcp_timeout(f),
        }
    }

    // ---- medium state -------------------------------------------------

    fn compute_idle(&self, n: NodeId) -> bool {
        let node = &self.nodes[n.0];
        !node.rx.channel_busy() && !node.mac.nav_active(self.now()) && !node.mac.response_pending
    }

    fn refresh_medium(&mut self, n: NodeId) {
        let idle = self.compute_idle(n);
        if idle == self.nodes[n.0].medium_idle {
            return;
        }
        self.nodes[n.0].medium_idle = idle;
        if idle {
            self.nodes[n.0].mac.idle_since = self.now();
            self.kick(n);
        } else {
            self.on_medium_busy(n);
        }
    }

    fn in_own_exchange(&self, n: NodeId) -> bool {
        matches!(
            self.nodes[n.0].mac.phase,
            MacPhase::Transmitting | MacPhase::WaitCts | MacPhase::WaitAck
        )
    }

    fn on_medium_busy(&mut self, n: NodeId) {
        let now = self.now();
        let slot = self.mac_params.slot_time;
        let node = &mut self.nodes[n.0];
        match node.timer {
            Some((h, MacTimer::Difs)) => {
                self.sched.cancel(h);
                node.timer = None;
            }
            Some((h, MacTimer::Backoff)) => {
                self.sched.cancel(h);
                node.timer = None;
                let start = node.mac.count_start.take().expect("counting has a start");
                let elapsed = (now - start).whole_units(slot);
                let remaining = node.mac.backoff_slots.unwrap_or(0).saturating_sub(elapsed as u32);
                node.mac.backoff_slots = Some(remaining);
            }
            _ => {}
        }
        if self.in_own_exchange(n) {
            return;
        }
        let node = &mut self.nodes[n.0];
        if !node.mac.queue.is_empty() && node.mac.backoff_slots.is_none() {
            node.mac.backoff_due = true;
        }
        node.mac.phase = if node.mac.nav_active(now) {
            MacPhase::DeferNav
        } else if node.mac.backoff_slots.is_some() || node.mac.backoff_due {
            MacPhase::BackoffFrozen
        } else {
            MacPhase::Idle
        };
    }

    /// Channel access entry point; safe to call whenever anything changed.
    fn kick(&mut self, n: NodeId) {
        if self.in_own_exchange(n) || self.nodes[n.0].timer.is_some() {
            return;
        }
        if !self.nodes[n.0].medium_idle {
            self.on_medium_busy(n);
            return;
        }
        let now = self.now();
        let difs = self.mac_params.difs;
        let mac = &mut self.nodes[n.0].mac;
        let has_work = !mac.queue.is_empty() || mac.backoff_slots.is_some() || mac.backoff_due;
        if !has_work {
            mac.phase = MacPhase::Idle;
            return;
        }
        let ready_at = mac.idle_since + difs;
        if ready_at <= now && mac.backoff_slots.is_none() && !mac.backoff_due {
            self.transmit_head(n);
            return;
        }
        mac.phase = MacPhase::WaitDifs;
        let at = ready_at.max(now);
        let h = self.schedule(at, Event::Mac { node: n, timer: MacTimer::Difs });
        self.nodes[n.0].timer = Some((h, MacTimer::Difs));
    }

    fn on_mac_timer(&mut self, n: NodeId, timer: MacTimer) {
        match self.nodes[n.0].timer {
            Some((_, t)) if t == timer => self.nodes[n.0].timer = None,
            _ => return,
        }
        match timer {
            MacTimer::Difs => self.on_difs(n),
            MacTimer::Backoff => {
                let mac = &mut self.nodes[n.0].mac;
                mac.backoff_slots = None;
                mac.count_start = None;
                self.backoff_complete(n);
            }
            MacTimer::CtsTimeout | MacTimer::AckTimeout if self.defer_timeout(n, timer) => {}
            MacTimer::CtsTimeout => {
                self.stats.cts_timeouts += 1;
                self.trace_line(n, "CTS_TIMEOUT", Some(FrameKind::Rts));
                self.on_failure(n, FailedStage::Rts);
            }
            MacTimer::AckTimeout => {
                self.stats.ack_timeouts += 1;
                self.trace_line(n, "ACK_TIMEOUT", Some(FrameKind::Data));
                self.on_failure(n, FailedStage::Data);
            }
        }
    }

    /// A response from the peer that is already arriving when the timeout
    /// fires is waited for; its end is processed before the re-armed timer.
    fn defer_timeout(&mut self, n: NodeId, timer: MacTimer) -> bool {
        let Some(peer) = self.nodes[n.0].mac.queue.front().map(|h| h.next_hop) else { return false };
        let now = self.now();
        let ending = self.nodes[n.0]
            .rx
            .arrival_ids()
            .filter_map(|id| self.air.get(&id))
            .filter(|a| a.air.tx_node == peer)
            .map(|a| a.air.end + self.links.delay(peer, n))
            .filter(|&t| t >= now)
            .max();
        let Some(at) = ending else { return false };
        let h = self.schedule(at, Event::Mac { node: n, timer });
        self.nodes[n.0].timer = Some((h, timer));
        true
    }

    fn on_difs(&mut self, n: NodeId) {
        if !self.nodes[n.0].medium_idle {
            self.on_medium_busy(n);
            return;
        }
        let mac = &mut self.nodes[n.0].mac;
        if mac.backoff_slots.is_none() {
            if mac.backoff_due {
                let cw = mac.cw();
                let slots = draw_backoff_slots(cw, &mut self.rng);
                let mac = &mut self.nodes[n.0].mac;
                mac.backoff_slots = Some(slots);
                mac.backoff_due = false;
                self.trace_line(n, &format!("BACKOFF slots={slots}"), None);
            } else if !mac.queue.is_empty() {
                self.transmit_head(n);
                return;
            } else {
                mac.phase = MacPhase::Idle;
                return;
            }
        }
        self.start_countdown(n);
    }

    fn start_countdown(&mut self, n: NodeId) {
        let now = self.now();
        let slots = self.nodes[n.0].mac.backoff_slots.expect("countdown needs a backoff");
        if slots == 0 {
            self.nodes[n.0].mac.backoff_slots = None;
            self.backoff_complete(n);
            return;
        }
        let at = now + backoff_duration(slots, self.mac_params.slot_time);
        let h = self.schedule(at, Event::Mac { node: n, timer: MacTimer::Backoff });
        let node = &mut self.nodes[n.0];
        node.timer = Some((h, MacTimer::Backoff));
        node.mac.count_start = Some(now);
        node.mac.phase = MacPhase::BackoffCounting;
    }

    fn backoff_complete(&mut self, n: NodeId) {
        if self.nodes[n.0].mac.queue.is_empty() {
            self.nodes[n.0].mac.phase = MacPhase::Idle;
        } else {
            self.transmit_head(n);
        }
    }

    // ---- transmission -------------------------------------------------

    fn timing(&self, payload: u32) -> ExchangeTiming {
        ExchangeTiming::new(&self.mac_params, payload, self.radio.bandwidth_bps)
    }

    fn transmit_head(&mut self, n: NodeId) {
        if !self.compute_idle(n) {
            self.stats.busy_medium_transmissions += 1;
        }
        let head = self.nodes[n.0].mac.queue.front().expect("transmit needs a packet").clone();
        let payload = head.packet.size_bytes();
        let timing = self.timing(payload);
        let use_rts = self.mac_params.uses_rts(payload);
        let mac = &mut self.nodes[n.0].mac;
        mac.last_attempt_collided = false;
        mac.phase = MacPhase::Transmitting;
        let frame = if use_rts {
            mac.stage = TxStage::Rts;
            Frame {
                kind: FrameKind::Rts,
                src: n,
                dst: head.next_hop,
                duration_field: timing.nav(FrameKind::Rts),
                token: head.token,
                packet: None,
            }
        } else {
            mac.stage = TxStage::Data;
            self.data_frame(n, &head, timing)
        };
        self.start_tx(n, frame);
    }

    fn data_frame(&self, n: NodeId, head: &QueuedPacket, timing: ExchangeTiming) -> Frame {
        Frame {
            kind: FrameKind::Data,
            src: n,
            dst: head.next_hop,
            duration_field: timing.nav(FrameKind::Data),
            token: head.token,
            packet: Some(head.packet.clone()),
        }
    }

    fn send_data(&mut self, n: NodeId) {
        let Some(head) = self.nodes[n.0].mac.queue.front().cloned() else { return };
        let timing = self.timing(head.packet.size_bytes());
        let frame = self.data_frame(n, &head, timing);
        let mac = &mut self.nodes[n.0].mac;
        mac.stage = TxStage::Data;
        mac.last_attempt_collided = false;
        self.start_tx(n, frame);
    }

    fn start_tx(&mut self, n: NodeId, frame: Frame) {
        let now = self.now();
        let airtime = self.timing(frame.payload_bytes()).airtime(frame.kind);
        let end = now + airtime;
        let id = self.next_air;
        self.next_air += 1;
        match frame.kind {
            FrameKind::Rts => self.stats.rts_sent += 1,
            FrameKind::Cts => self.stats.cts_sent += 1,
            FrameKind::Data => self.stats.data_sent += 1,
            FrameKind::Ack => self.stats.ack_sent += 1,
        }
        self.trace_line(n, "TX", Some(frame.kind));
        self.nodes[n.0].rx.start_transmit();
        self.schedule(end, Event::TxEnd { node: n, air: id });
        let mut pending = 0;
        for m in 0..self.nodes.len() {
            let m = NodeId(m);
            if m == n || self.links.power(n, m) < self.radio.carrier_sense_threshold_w {
                continue;
            }
            let delay = self.links.delay(n, m);
            self.schedule(now + delay, Event::RxStart { node: m, air: id });
            self.schedule(end + delay, Event::RxEnd { node: m, air: id });
            pending += 1;
        }
        let air = AirFrame { id, frame, tx_node: n, start: now, end };
        self.air.insert(id, InAir { air, pending_rx: pending, tx_done: false });
        self.refresh_medium(n);
    }

    fn release_air(&mut self, id: u64) {
        if let Some(a) = self.air.get(&id) {
            if a.tx_done && a.pending_rx == 0 {
                self.air.remove(&id);
            }
        }
    }

    fn on_tx_end(&mut self, n: NodeId, id: u64) {
        self.nodes[n.0].rx.end_transmit();
        let kind = {
            let a = self.air.get_mut(&id).expect("frame on air");
            a.tx_done = true;
            a.air.frame.kind
        };
        self.release_air(id);
        let now = self.now();
        let sifs = self.mac_params.sifs;
        let own = self.nodes[n.0].mac.phase == MacPhase::Transmitting;
        match kind {
            FrameKind::Rts if own => {
                let cts = self.timing(0).cts;
                let at = now + sifs + cts + self.max_prop * 2;
                self.nodes[n.0].mac.phase = MacPhase::WaitCts;
                let h = self.schedule(at, Event::Mac { node: n, timer: MacTimer::CtsTimeout });
                self.nodes[n.0].timer = Some((h, MacTimer::CtsTimeout));
            }
            FrameKind::Data if own => {
                let ack = self.timing(0).ack;
                let at = now + sifs + ack + self.max_prop * 2;
                self.nodes[n.0].mac.phase = MacPhase::WaitAck;
                let h = self.schedule(at, Event::Mac { node: n, timer: MacTimer::AckTimeout });
                self.nodes[n.0].timer = Some((h, MacTimer::AckTimeout));
            }
            _ => {}
        }
        self.refresh_medium(n);
    }

    // ---- reception ----------------------------------------------------

    fn on_rx_start(&mut self, n: NodeId, id: u64) {
        let tx = self.air[&id].air.tx_node;
        let power = self.links.power(tx, n);
        self.nodes[n.0].rx.begin_arrival(id, power);
        self.refresh_medium(n);
    }

    fn on_rx_end(&mut self, n: NodeId, id: u64) {
        let result = self.nodes[n.0].rx.end_arrival(id, &self.radio);
        let frame = {
            let a = self.air.get_mut(&id).expect("frame on air");
            a.pending_rx -= 1;
            a.air.frame.clone()
        };
        self.release_air(id);
        let outcome = result.map_or(Reception::BelowThreshold, |r| r.outcome);

        if outcome == Reception::Decoded && frame.dst != n {
            let until = self.now() + frame.duration_field;
            if self.nodes[n.0].mac.update_nav(until) {
                if let Some(h) = self.nodes[n.0].nav_timer.take() {
                    self.sched.cancel(h);
                }
                let h = self.schedule(until, Event::NavEnd(n));
                self.nodes[n.0].nav_timer = Some(h);
            }
        }
        // Reserve the response slot before the medium can look idle.
        let respond = outcome == Reception::Decoded && frame.dst == n && self.can_respond(n, &frame);
        if respond {
            self.nodes[n.0].mac.response_pending = true;
        }
        self.refresh_medium(n);

        match outcome {
            Reception::Decoded if frame.dst == n => self.on_frame_for_me(n, frame, respond),
            Reception::CollisionDrop if frame.dst == n => {
                self.stats.collisions_at_receiver += 1;
                self.trace_line(n, "COL", Some(frame.kind));
                if frame.kind == FrameKind::Data {
                    let sender = &mut self.nodes[frame.src.0].mac;
                    if sender.queue.front().is_some_and(|h| h.token == frame.token) {
                        sender.last_attempt_collided = true;
                    }
                }
            }
            _ => {}
        }
    }

    fn can_respond(&self, n: NodeId, frame: &Frame) -> bool {
        let node = &self.nodes[n.0];
        if node.rx.is_transmitting() || node.mac.response_pending {
            return false;
        }
        match frame.kind {
            // CTS only when idle in our own exchange and not silenced by NAV.
            FrameKind::Rts => !self.in_own_exchange(n) && !node.mac.nav_active(self.now()),
            FrameKind::Data => true,
            _ => false,
        }
    }

    fn on_frame_for_me(&mut self, n: NodeId, frame: Frame, respond: bool) {
        let now = self.now();
        let sifs = self.mac_params.sifs;
        match frame.kind {
            FrameKind::Rts => {
                if !respond {
                    return;
                }
                let cts = self.timing(0).cts;
                let reply = Frame {
                    kind: FrameKind::Cts,
                    src: n,
                    dst: frame.src,
                    duration_field: frame.duration_field.saturating_sub(sifs + cts),
                    token: frame.token,
                    packet: None,
                };
                self.schedule(now + sifs, Event::Respond { node: n, frame: reply });
            }
            FrameKind::Cts => {
                let node = &self.nodes[n.0];
                let matches = node.mac.phase == MacPhase::WaitCts
                    && node.mac.queue.front().is_some_and(|h| h.token == frame.token);
                if !matches {
                    return;
                }
                if let Some((h, _)) = self.nodes[n.0].timer.take() {
                    self.sched.cancel(h);
                }
                self.nodes[n.0].mac.phase = MacPhase::Transmitting;
                self.schedule(now + sifs, Event::SendData(n));
            }
            FrameKind::Data => {
                if respond {
                    let reply = Frame {
                        kind: FrameKind::Ack,
                        src: n,
                        dst: frame.src,
                        duration_field: SimDuration::ZERO,
                        token: frame.token,
                        packet: None,
                    };
                    self.schedule(now + sifs, Event::Respond { node: n, frame: reply });
                }
                if self.accepted.insert(frame.token) {
                    self.trace_line(n, "RX", Some(FrameKind::Data));
                    let packet = frame.packet.expect("DATA frames carry a packet");
                    self.on_packet_arrival(n, packet);
                }
            }
            FrameKind::Ack => {
                let node = &self.nodes[n.0];
                let matches = node.mac.phase == MacPhase::WaitAck
                    && node.mac.queue.front().is_some_and(|h| h.token == frame.token);
                if !matches {
                    return;
                }
                if let Some((h, _)) = self.nodes[n.0].timer.take() {
                    self.sched.cancel(h);
                }
                self.on_success(n);
            }
        }
    }

    fn on_success(&mut self, n: NodeId) {
        let mac = &mut self.nodes[n.0].mac;
        mac.retry.on_success();
        let done = mac.queue.pop_front().expect("success for a held packet");
        mac.backoff_due = true;
        mac.phase = MacPhase::Idle;
        self.accepted.remove(&done.token);
        self.trace_line(n, "SUCCESS", Some(FrameKind::Ack));
        self.kick(n);
    }

    fn on_failure(&mut self, n: NodeId, stage: FailedStage) {
        let mac = &mut self.nodes[n.0].mac;
        let outcome = mac.retry.on_failure(stage);
        mac.backoff_due = true;
        mac.phase = MacPhase::Idle;
        if outcome == FailureOutcome::Discard {
            // Handshake failures never put the packet itself on air.
            let collided = stage == FailedStage::Data && mac.last_attempt_collided;
            let dropped = mac.queue.pop_front().expect("failure for a held packet");
            self.stats.mac_discards += 1;
            let reason = if collided { DropReason::Collision } else { DropReason::RetryLimitExceeded };
            let handed_over = self.accepted.remove(&dropped.token);
            self.trace_line(n, &format!("DROP {reason}"), Some(FrameKind::Data));
            if !handed_over && dropped.packet.is_data() {
                let rec = DropRecord { packet: dropped.packet.id, node: n, time: self.now(), reason };
                if let Err(e) = self.metrics.record_drop(rec) {
                    self.fail(e);
                }
            }
        }
        self.kick(n);
    }

    // ---- forwarding -----------------------------------------------------

    fn on_packet_arrival(&mut self, n: NodeId, packet: Packet) {
        if packet.dest == n {
            self.deliver(n, packet);
            return;
        }
        match self.topo.routes.next_hop(n, packet.dest) {
            Some(next) => self.enqueue(n, packet, next),
            None => self.drop_packet(n, &packet, DropReason::NoRoute),
        }
    }

    fn drop_packet(&mut self, n: NodeId, packet: &Packet, reason: DropReason) {
        self.trace_line(n, &format!("DROP {reason}"), Some(FrameKind::Data));
        if packet.is_data() {
            let rec = DropRecord { packet: packet.id, node: n, time: self.now(), reason };
            if let Err(e) = self.metrics.record_drop(rec) {
                self.fail(e);
            }
        }
    }

    fn enqueue(&mut self, n: NodeId, packet: Packet, next_hop: NodeId) {
        let token = self.next_token;
        self.next_token += 1;
        match self.nodes[n.0].mac.enqueue(QueuedPacket { packet, next_hop, token }) {
            EnqueueResult::Accepted => self.kick(n),
            EnqueueResult::Overflow(rejected) => {
                self.drop_packet(n, &rejected.packet, DropReason::QueueOverflow)
            }
        }
    }

    fn count_in_flight(&self) -> u64 {
        self.nodes
            .iter()
            .flat_map(|node| node.mac.queue.iter())
            .filter(|q| q.packet.is_data() && !self.accepted.contains(&q.token))
            .count() as u64
    }

    // ---- transport ------------------------------------------------------

    fn new_packet_id(&mut self) -> PacketId {
        let id = PacketId(self.next_packet);
        self.next_packet += 1;
        id
    }

    fn send_segment(&mut self, f: usize, seq: u64) {
        let now = self.now();
        let id = self.new_packet_id();
        let flow = &self.flows[f];
        let packet = Packet {
            id,
            origin: flow.spec.src,
            dest: flow.spec.dst,
            segment: Segment {
                flow: crate::frame::FlowId(f),
                kind: SegmentKind::Data,
                seq,
                size_bytes: flow.sender.config().data_bytes,
                sent_at: now,
            },
        };
        let src = flow.spec.src;
        if let Err(e) = self.metrics.record_send(id) {
            self.fail(e);
        }
        if self.flows[f].timer.is_none() {
            self.arm_tcp_timer(f);
        }
        self.on_packet_arrival(src, packet);
    }

    fn flow_send_window(&mut self, f: usize) {
        for seq in self.flows[f].sender.ftp_tick() {
            self.send_segment(f, seq);
        }
    }

    fn arm_tcp_timer(&mut self, f: usize) {
        if let Some(h) = self.flows[f].timer.take() {
            self.sched.cancel(h);
        }
        let at = self.now() + self.flows[f].sender.rto;
        self.flows[f].timer = Some(self.schedule(at, Event::TcpTimeout(f)));
    }

    fn on_tcp_timeout(&mut self, f: usize) {
        self.flows[f].timer = None;
        if !self.flows[f].sender.has_outstanding() {
            return;
        }
        self.stats.tcp_timeouts += 1;
        let seq = self.flows[f].sender.on_timeout();
        self.arm_tcp_timer(f);
        self.send_segment(f, seq);
    }

    fn deliver(&mut self, n: NodeId, packet: Packet) {
        let now = self.now();
        let f = packet.segment.flow.0;
        match packet.segment.kind {
            SegmentKind::Data => {
                if let Err(e) = self.metrics.record_receive(packet.id, packet.segment.sent_at, now) {
                    self.fail(e);
                }
                self.flows[f].delivered += 1;
                let ack_no = self.flows[f].receiver.on_receive_data(packet.segment.seq);
                let id = self.new_packet_id();
                let ack = Packet {
                    id,
                    origin: n,
                    dest: packet.origin,
                    segment: Segment {
                        flow: packet.segment.flow,
                        kind: SegmentKind::Ack,
                        seq: ack_no,
                        size_bytes: self.flows[f].sender.config().ack_bytes,
                        sent_at: packet.segment.sent_at,
                    },
                };
                self.on_packet_arrival(n, ack);
            }
            SegmentKind::Ack => {
                let ev = self.flows[f].sender.on_ack(packet.segment.seq, Some(packet.segment.sent_at), now);
                match ev {
                    AckEvent::NewData => {
                        if self.flows[f].sender.has_outstanding() {
                            self.arm_tcp_timer(f);
                        } else if let Some(h) = self.flows[f].timer.take() {
                            self.sched.cancel(h);
                        }
                        self.flow_send_window(f);
                    }
                    AckEvent::FastRetransmit(seq) => {
                        self.stats.fast_retransmits += 1;
                        self.arm_tcp_timer(f);
                        self.send_segment(f, seq);
                        self.flow_send_window(f);
                    }
                    AckEvent::Duplicate | AckEvent::Stale => {}
                }
            }
        }
    }
}

/// Convenience: validate, build and run a scenario.
pub fn run_scenario(cfg: &ScenarioConfig, allow_any_n: bool) -> Result<RunOutput, SimError> {
    Simulation::from_config(cfg, allow_any_n)?.run()
}
