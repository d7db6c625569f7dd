//! The simulated fabric: hosts, switch ports, flows and the event loop that
//! moves packets between them.

use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cc::{Branch, CcDecision, CcParamError, CcParams, CcTuning, PathFacts};
use crate::event::{EventId, EventQueue, SimStats};
use crate::lb::{EntropyPool, LbMode};
use crate::packet::{FlowId, Packet, PacketKind, Psn};
use crate::port::{EnqueueOutcome, PortConfig, RedConfig, RedConfigError, SwitchPort};
use crate::rng::SimRng;
use crate::time::{serialization_delay, SimTime};
use crate::topology::{HostId, PortId, PortRole, Topology};
use crate::transport::{ReceiverFlow, SendItem, SenderCounters, SenderFlow};
use crate::workload::{validate_schedule, FlowSpec, WorkloadError};

/// Which switch queues record an occupancy sample on every change.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum QueueTrace {
    Off,
    /// Host-facing ToR ports and ToR uplinks.
    #[default]
    Tor,
    AllSwitches,
    Ports(BTreeSet<u32>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkConfig {
    pub trimming: bool,
    pub lb_mode: LbMode,
    /// Per-port data queue size; defaults to one network BDP.
    pub queue_capacity_bytes: Option<u64>,
    /// Control queue size; defaults to the data queue size.
    pub ctrl_capacity_bytes: Option<u64>,
    /// RED thresholds as fractions of the data queue size.
    pub red_kmin_frac: f64,
    pub red_kmax_frac: f64,
    pub cc: CcTuning,
    pub trace_cwnd: bool,
    pub trace_queues: QueueTrace,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            trimming: true,
            lb_mode: LbMode::Reps,
            queue_capacity_bytes: None,
            ctrl_capacity_bytes: None,
            red_kmin_frac: 0.2,
            red_kmax_frac: 0.8,
            cc: CcTuning::default(),
            trace_cwnd: true,
            trace_queues: QueueTrace::Tor,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NetworkError {
    #[error(transparent)]
    Red(#[from] RedConfigError),
    #[error(transparent)]
    Cc(#[from] CcParamError),
    #[error(transparent)]
    Workload(#[from] WorkloadError),
    #[error("queue capacity {0} B cannot hold one {1} B packet")]
    QueueTooSmall(u64, u32),
}

#[derive(Debug, Clone)]
enum Ev {
    FlowStart(FlowId),
    /// The packet reached the node feeding `path[hop]`.
    PortArrival(Packet),
    TxDone(PortId),
    HostArrival(Packet),
    Timeout(FlowId, Psn),
}

/// Fabric-wide packet accounting.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetCounters {
    pub data_injected: u64,
    pub data_delivered: u64,
    pub data_trimmed: u64,
    pub data_dropped: u64,
    pub headers_delivered: u64,
    pub ctrl_sent: u64,
    pub ctrl_delivered: u64,
    pub ctrl_dropped: u64,
    pub ecn_marked: u64,
    pub payload_bytes_injected: u64,
    pub payload_bytes_delivered: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("packet conservation violated: {kind} injected {injected} != accounted {accounted}")]
pub struct ConservationError {
    pub kind: &'static str,
    pub injected: u64,
    pub accounted: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CwndSample {
    pub time: SimTime,
    pub flow: FlowId,
    pub cwnd: f64,
    pub in_flight: u64,
    pub acked_bytes: u64,
    pub rtt: Option<SimTime>,
    pub ecn: bool,
    pub branch: Branch,
    pub quick_adapt: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QueueSample {
    pub time: SimTime,
    pub port: PortId,
    pub data_bytes: u64,
    pub ctrl_bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowRecord {
    pub id: FlowId,
    pub src: HostId,
    pub dst: HostId,
    pub size: u64,
    pub start: Option<SimTime>,
    pub finish: Option<SimTime>,
    pub base_rtt: SimTime,
    pub counters: SenderCounters,
    pub bytes_received: u64,
}

impl FlowRecord {
    pub fn fct(&self) -> Option<SimTime> {
        Some(self.finish? - self.start?)
    }
}

pub struct Network {
    topo: Topology,
    cfg: NetworkConfig,
    queue: EventQueue<Ev>,
    rng: SimRng,
    ports: Vec<SwitchPort>,
    traced: Vec<bool>,
    last_traced: Vec<(u64, u64)>,
    specs: Vec<FlowSpec>,
    dependents: Vec<Vec<FlowId>>,
    senders: Vec<Option<SenderFlow>>,
    receivers: Vec<Option<ReceiverFlow>>,
    params: Vec<CcParams>,
    finished: usize,
    counters: NetCounters,
    data_in_network: u64,
    ctrl_in_network: u64,
    cwnd_trace: Vec<CwndSample>,
    queue_trace: Vec<QueueSample>,
    events: u64,
    cancelled: u64,
}

impl Network {
    pub fn new(
        topo: Topology,
        cfg: NetworkConfig,
        flows: Vec<FlowSpec>,
        seed: u64,
    ) -> Result<Self, NetworkError> {
        validate_schedule(&flows, &topo)?;
        let capacity = cfg
            .queue_capacity_bytes
            .unwrap_or_else(|| topo.queue_capacity_bytes());
        if capacity < topo.mtu() as u64 {
            return Err(NetworkError::QueueTooSmall(capacity, topo.mtu()));
        }
        let red = RedConfig::from_fractions(capacity, cfg.red_kmin_frac, cfg.red_kmax_frac)?;
        let switch_port = PortConfig {
            capacity_bytes: Some(capacity),
            ctrl_capacity_bytes: Some(cfg.ctrl_capacity_bytes.unwrap_or(capacity)),
            red: Some(red),
            trimming: cfg.trimming,
            header_bytes: topo.header_bytes(),
        };
        let nic_port = PortConfig {
            capacity_bytes: None,
            ctrl_capacity_bytes: None,
            red: None,
            trimming: false,
            header_bytes: topo.header_bytes(),
        };
        let ports = topo
            .ports()
            .iter()
            .map(|p| {
                SwitchPort::new(if p.role == PortRole::HostNic {
                    nic_port
                } else {
                    switch_port
                })
            })
            .collect();
        let traced: Vec<bool> = topo
            .ports()
            .iter()
            .enumerate()
            .map(|(i, p)| match &cfg.trace_queues {
                QueueTrace::Off => false,
                QueueTrace::Tor => matches!(p.role, PortRole::TorDown | PortRole::TorUp),
                QueueTrace::AllSwitches => p.role != PortRole::HostNic,
                QueueTrace::Ports(set) => set.contains(&(i as u32)),
            })
            .collect();

        let mut params = Vec::with_capacity(flows.len());
        for f in &flows {
            let brtt = topo.measure_base_rtt(f.src, f.dst);
            let facts = PathFacts {
                mtu: topo.mtu(),
                brtt,
                bdp: topo.path_bdp_bytes(f.src, f.dst),
                network_bdp: topo.bdp_bytes(),
                network_brtt: topo.network_base_rtt(),
                trimming: cfg.trimming,
            };
            params.push(CcParams::derive(&cfg.cc, &facts)?);
        }

        let mut dependents = vec![Vec::new(); flows.len()];
        let mut queue = EventQueue::new();
        for f in &flows {
            match f.depends_on {
                Some(dep) => dependents[dep.index()].push(f.id),
                None => {
                    queue
                        .schedule(f.start, Ev::FlowStart(f.id))
                        .expect("start times are non-negative");
                }
            }
        }
        let n = flows.len();
        Ok(Network {
            rng: SimRng::new(seed),
            topo,
            cfg,
            queue,
            ports,
            last_traced: vec![(0, 0); traced.len()],
            traced,
            specs: flows,
            dependents,
            senders: vec![None; n],
            receivers: vec![None; n],
            params,
            finished: 0,
            counters: NetCounters::default(),
            data_in_network: 0,
            ctrl_in_network: 0,
            cwnd_trace: Vec::new(),
            queue_trace: Vec::new(),
            events: 0,
            cancelled: 0,
        })
    }

    pub fn topology(&self) -> &Topology {
        &self.topo
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.cfg
    }

    pub fn now(&self) -> SimTime {
        self.queue.now()
    }

    pub fn flows(&self) -> &[FlowSpec] {
        &self.specs
    }

    pub fn flow_params(&self, id: FlowId) -> &CcParams {
        &self.params[id.index()]
    }

    pub fn sender(&self, id: FlowId) -> Option<&SenderFlow> {
        self.senders.get(id.index())?.as_ref()
    }

    pub fn port(&self, id: PortId) -> &SwitchPort {
        &self.ports[id.index()]
    }

    pub fn counters(&self) -> &NetCounters {
        &self.counters
    }

    pub fn cwnd_trace(&self) -> &[CwndSample] {
        &self.cwnd_trace
    }

    pub fn queue_trace(&self) -> &[QueueSample] {
        &self.queue_trace
    }

    pub fn finished_flows(&self) -> usize {
        self.finished
    }

    pub fn is_complete(&self) -> bool {
        self.finished == self.specs.len()
    }

    pub fn stats(&self) -> SimStats {
        SimStats {
            events_processed: self.events,
            events_cancelled: self.cancelled,
            clock: self.queue.now(),
            quiescent: self.queue.is_empty(),
        }
    }

    pub fn flow_records(&self) -> Vec<FlowRecord> {
        self.specs
            .iter()
            .map(|f| {
                let s = self.senders[f.id.index()].as_ref();
                FlowRecord {
                    id: f.id,
                    src: f.src,
                    dst: f.dst,
                    size: f.size,
                    start: s.map(|s| s.start_time),
                    finish: s.and_then(|s| s.finish_time),
                    base_rtt: self.params[f.id.index()].brtt,
                    counters: s.map(|s| s.counters).unwrap_or_default(),
                    bytes_received: self.receivers[f.id.index()]
                        .as_ref()
                        .map_or(0, |r| r.bytes_received),
                }
            })
            .collect()
    }

    /// Every injected data packet is delivered, trimmed, dropped or still in
    /// the fabric; likewise for control packets.
    pub fn check_conservation(&self) -> Result<(), ConservationError> {
        let c = &self.counters;
        let data = c.data_delivered + c.data_trimmed + c.data_dropped + self.data_in_network;
        if data != c.data_injected {
            return Err(ConservationError {
                kind: "data",
                injected: c.data_injected,
                accounted: data,
            });
        }
        // trimmed headers join the control population
        let ctrl_in = c.ctrl_sent + c.data_trimmed;
        let ctrl = c.ctrl_delivered + c.headers_delivered + c.ctrl_dropped + self.ctrl_in_network;
        if ctrl != ctrl_in {
            return Err(ConservationError {
                kind: "control",
                injected: ctrl_in,
                accounted: ctrl,
            });
        }
        Ok(())
    }

    /// Runs until every flow finished or the event queue drained.
    pub fn run(&mut self) -> SimStats {
        self.run_until(SimTime::MAX)
    }

    /// Processes events up to `t_end`, stopping early once all flows are done
    /// and the fabric is empty.
    pub fn run_until(&mut self, t_end: SimTime) -> SimStats {
        while let Some(fired) = self.queue.pop_until(t_end) {
            self.events += 1;
            self.handle(fired.payload);
        }
        self.stats()
    }

    fn handle(&mut self, ev: Ev) {
        match ev {
            Ev::FlowStart(id) => self.start_flow(id),
            Ev::PortArrival(p) => {
                let port = p.path.get(p.hop as usize).expect("hop within path");
                self.enqueue(port, p);
            }
            Ev::TxDone(port) => {
                self.ports[port.index()].busy = false;
                self.kick(port);
            }
            Ev::HostArrival(p) => self.deliver(p),
            Ev::Timeout(flow, psn) => self.timeout(flow, psn),
        }
    }

    fn start_flow(&mut self, id: FlowId) {
        let spec = self.specs[id.index()];
        let now = self.now();
        let domain = self.topo.path_count(spec.src, spec.dst);
        let lb = EntropyPool::new(self.cfg.lb_mode, domain, &mut self.rng);
        let sender = SenderFlow::new(
            id,
            spec.src,
            spec.dst,
            spec.size,
            self.params[id.index()].clone(),
            lb,
            now,
        );
        self.receivers[id.index()] = Some(ReceiverFlow::new(id, sender.n_packets()));
        self.senders[id.index()] = Some(sender);
        self.pump(id);
    }

    /// Moves whatever the window allows into the sender's NIC queue.
    fn pump(&mut self, id: FlowId) {
        let s = self.senders[id.index()].as_mut().expect("flow started");
        let items: Vec<SendItem> = s.try_send(&mut self.rng);
        let (src, dst) = (s.src, s.dst);
        for it in items {
            let path = self.topo.route(src, dst, it.entropy);
            let p = Packet::data(id, it.psn, it.size, it.entropy, src, dst, path);
            self.enqueue(path.get(0).expect("non-empty path"), p);
        }
    }

    fn enqueue(&mut self, port: PortId, p: Packet) {
        let is_data = p.kind == PacketKind::Data;
        let outcome = self.ports[port.index()].try_enqueue(p);
        match outcome {
            EnqueueOutcome::Enqueued => {}
            EnqueueOutcome::Trimmed => {
                self.counters.data_trimmed += 1;
                self.data_in_network -= 1;
                self.ctrl_in_network += 1;
            }
            EnqueueOutcome::Dropped => {
                self.counters.data_dropped += 1;
                self.data_in_network -= 1;
            }
            EnqueueOutcome::DroppedCtrl => {
                if is_data {
                    // trimmed on arrival, then the header found no room
                    self.counters.data_trimmed += 1;
                    self.data_in_network -= 1;
                } else {
                    self.ctrl_in_network -= 1;
                }
                self.counters.ctrl_dropped += 1;
            }
        }
        self.trace_queue(port);
        self.kick(port);
    }

    /// Starts serializing the next packet if the port is idle.
    fn kick(&mut self, port: PortId) {
        let sp = &mut self.ports[port.index()];
        if sp.busy {
            return;
        }
        let Some(mut p) = sp.dequeue_and_mark(&mut self.rng) else {
            return;
        };
        sp.busy = true;
        let now = self.queue.now();
        let info = *self.topo.port(port);
        if info.role == PortRole::HostNic {
            self.leave_nic(&mut p, now);
        }
        let ser = serialization_delay(p.size_bytes as u64, self.topo.link_speed_bps());
        let mut arrive = now + ser + info.latency;
        self.queue.schedule_in(ser, Ev::TxDone(port));
        p.hop += 1;
        let ev = if (p.hop as usize) < p.path.len() {
            arrive += SimTime(self.topo.config().switch_latency_ns);
            Ev::PortArrival(p)
        } else {
            Ev::HostArrival(p)
        };
        self.queue
            .schedule(arrive, ev)
            .expect("arrivals are in the future");
        self.trace_queue(port);
    }

    /// NIC timestamping and retransmission timers for data leaving a host.
    fn leave_nic(&mut self, p: &mut Packet, now: SimTime) {
        match p.kind {
            PacketKind::Data => {
                p.ts_sent = now;
                self.counters.data_injected += 1;
                self.counters.payload_bytes_injected += p.size_bytes as u64;
                self.data_in_network += 1;
                let Some(s) = self.senders[p.flow.index()].as_mut() else {
                    return;
                };
                if s.is_in_flight(p.psn) {
                    let rto = s.params.rto;
                    let id = self.queue.schedule_in(rto, Ev::Timeout(p.flow, p.psn));
                    if let Some(old) = s.arm_timer(p.psn, id) {
                        if self.queue.cancel(old) {
                            self.cancelled += 1;
                        }
                    }
                }
            }
            _ => {
                self.counters.ctrl_sent += 1;
                self.ctrl_in_network += 1;
            }
        }
    }

    fn deliver(&mut self, p: Packet) {
        let now = self.now();
        let header = self.topo.header_bytes();
        match p.kind {
            PacketKind::Data => {
                self.counters.data_delivered += 1;
                self.counters.payload_bytes_delivered += p.size_bytes as u64;
                if p.ecn_marked {
                    self.counters.ecn_marked += 1;
                }
                self.data_in_network -= 1;
                let back = self.topo.route(p.dst, p.src, p.entropy);
                let r = self.receivers[p.flow.index()].as_mut().expect("receiver");
                let ack = r.on_data(&p, header, back);
                self.enqueue(back.get(0).expect("non-empty path"), ack);
            }
            PacketKind::TrimmedHeader => {
                self.counters.headers_delivered += 1;
                self.ctrl_in_network -= 1;
                let back = self.topo.route(p.dst, p.src, p.entropy);
                let r = self.receivers[p.flow.index()].as_mut().expect("receiver");
                let nack = r.on_trimmed(&p, header, back);
                self.enqueue(back.get(0).expect("non-empty path"), nack);
            }
            PacketKind::Ack => {
                self.counters.ctrl_delivered += 1;
                self.ctrl_in_network -= 1;
                let s = self.senders[p.flow.index()].as_mut().expect("sender");
                let Some(out) = s.on_ack(&p, now) else {
                    return;
                };
                self.cancel_timer(out.timer);
                self.trace_cwnd(
                    p.flow,
                    Some(now.saturating_sub(p.ts_sent)),
                    p.ecn_echo,
                    out.decision,
                );
                if out.finished {
                    self.finish(p.flow);
                } else {
                    self.pump(p.flow);
                }
            }
            PacketKind::Nack => {
                self.counters.ctrl_delivered += 1;
                self.ctrl_in_network -= 1;
                let s = self.senders[p.flow.index()].as_mut().expect("sender");
                let Some(out) = s.on_nack(&p, now) else {
                    return;
                };
                self.cancel_timer(out.timer);
                self.trace_cwnd(p.flow, None, false, out.decision);
                self.pump(p.flow);
            }
        }
    }

    fn timeout(&mut self, flow: FlowId, psn: Psn) {
        let now = self.now();
        let s = self.senders[flow.index()].as_mut().expect("sender");
        if let Some(out) = s.on_timeout(psn, now) {
            self.trace_cwnd(flow, None, false, out.decision);
            self.pump(flow);
        }
    }

    fn cancel_timer(&mut self, t: Option<EventId>) {
        if let Some(t) = t {
            if self.queue.cancel(t) {
                self.cancelled += 1;
            }
        }
    }

    fn finish(&mut self, id: FlowId) {
        self.finished += 1;
        let now = self.now();
        for dep in core::mem::take(&mut self.dependents[id.index()]) {
            let at = now + self.specs[dep.index()].start;
            self.queue
                .schedule(at, Ev::FlowStart(dep))
                .expect("dependent starts after its parent");
        }
    }

    fn trace_cwnd(&mut self, flow: FlowId, rtt: Option<SimTime>, ecn: bool, d: CcDecision) {
        if !self.cfg.trace_cwnd {
            return;
        }
        let s = self.senders[flow.index()].as_ref().expect("sender");
        self.cwnd_trace.push(CwndSample {
            time: self.queue.now(),
            flow,
            cwnd: s.cc.cwnd,
            in_flight: s.cc.in_flight,
            acked_bytes: s.bytes_acked(),
            rtt,
            ecn,
            branch: d.branch,
            quick_adapt: d.quick_adapt,
        });
    }

    fn trace_queue(&mut self, port: PortId) {
        if !self.traced[port.index()] {
            return;
        }
        let sp = &self.ports[port.index()];
        let sample = QueueSample {
            time: self.queue.now(),
            port,
            data_bytes: sp.data_bytes(),
            ctrl_bytes: sp.ctrl_bytes(),
        };
        let last = &mut self.last_traced[port.index()];
        if *last == (sample.data_bytes, sample.ctrl_bytes) {
            return;
        }
        *last = (sample.data_bytes, sample.ctrl_bytes);
        self.queue_trace.push(sample);
    }
}
