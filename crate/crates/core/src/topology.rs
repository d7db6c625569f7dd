//! Fat-tree construction, equal-cost path enumeration and entropy routing.
//!
//! Two shapes are supported:
//!
//! * 2-tier leaf/spine: `n_hosts / hosts_per_tor` ToRs, each with
//!   `hosts_per_tor / oversub` uplinks, one per spine.
//! * 3-tier k-ary fat-tree with `n_hosts = k³/4`: `k` pods of `k/2` ToRs with
//!   `k/2` hosts each; each ToR has `(k/2) / oversub` uplinks to that many
//!   aggregation switches, and each aggregation switch has `k/2` core uplinks.
//!
//! Oversubscription is realised by removing leaf uplinks, so every link keeps
//! the same speed and latency.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::packet::Entropy;
use crate::time::{serialization_delay, SimTime};

pub const MAX_HOPS: usize = 6;

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct HostId(pub u32);

impl HostId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PortId(pub u32);

impl PortId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Host,
    Tor,
    Agg,
    Core,
}

/// Ordered output ports from the source NIC to the last-hop ToR port.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Path {
    hops: [PortId; MAX_HOPS],
    len: u8,
}

impl Path {
    pub const EMPTY: Path = Path {
        hops: [PortId(0); MAX_HOPS],
        len: 0,
    };

    pub fn from_ports(ports: &[PortId]) -> Path {
        assert!(ports.len() <= MAX_HOPS, "path too long");
        let mut hops = [PortId(0); MAX_HOPS];
        hops[..ports.len()].copy_from_slice(ports);
        Path {
            hops,
            len: ports.len() as u8,
        }
    }

    pub fn ports(&self) -> &[PortId] {
        &self.hops[..self.len as usize]
    }

    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, hop: usize) -> Option<PortId> {
        self.ports().get(hop).copied()
    }
}

impl core::fmt::Debug for Path {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_list().entries(self.ports()).finish()
    }
}

/// Distance class of a host pair; base RTT is a function of the class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HopClass {
    SameTor,
    SamePod,
    CrossPod,
}

impl HopClass {
    /// Output ports traversed one way.
    pub fn port_count(self) -> usize {
        match self {
            HopClass::SameTor => 2,
            HopClass::SamePod => 4,
            HopClass::CrossPod => 6,
        }
    }
}

fn default_tiers() -> u8 {
    2
}
fn default_oversub() -> u32 {
    1
}
fn default_link_speed() -> u64 {
    800_000_000_000
}
fn default_link_latency() -> u64 {
    600
}
fn default_switch_latency() -> u64 {
    400
}
fn default_mtu() -> u32 {
    4096
}
fn default_header() -> u32 {
    64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FatTreeConfig {
    pub n_hosts: u32,
    #[serde(default = "default_tiers")]
    pub tiers: u8,
    #[serde(default = "default_oversub")]
    pub oversub_ratio: u32,
    #[serde(default = "default_link_speed")]
    pub link_speed_bps: u64,
    #[serde(default = "default_link_latency")]
    pub link_latency_ns: u64,
    #[serde(default = "default_switch_latency")]
    pub switch_latency_ns: u64,
    #[serde(default = "default_mtu")]
    pub mtu: u32,
    /// Size of trimmed headers, ACKs and NACKs.
    #[serde(default = "default_header")]
    pub header_bytes: u32,
    /// 2-tier only; derived from `n_hosts` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hosts_per_tor: Option<u32>,
    /// Per-host latency of the host<->ToR cable in both directions, replacing
    /// `link_latency_ns`. Used to give chosen flows a longer base RTT.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub host_link_latency_ns: BTreeMap<u32, u64>,
}

impl Default for FatTreeConfig {
    fn default() -> Self {
        FatTreeConfig {
            n_hosts: 16,
            tiers: default_tiers(),
            oversub_ratio: default_oversub(),
            link_speed_bps: default_link_speed(),
            link_latency_ns: default_link_latency(),
            switch_latency_ns: default_switch_latency(),
            mtu: default_mtu(),
            header_bytes: default_header(),
            hosts_per_tor: None,
            host_link_latency_ns: BTreeMap::new(),
        }
    }
}

impl FatTreeConfig {
    pub fn with_hosts(n_hosts: u32) -> Self {
        FatTreeConfig {
            n_hosts,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TopologyError {
    #[error("n_hosts must be positive")]
    NoHosts,
    #[error("tiers must be 2 or 3, got {0}")]
    Tiers(u8),
    #[error("oversubscription ratio must be 1, 2, 4 or 8, got {0}")]
    Oversub(u32),
    #[error("{n_hosts} hosts cannot be split into ToRs of {hosts_per_tor}")]
    HostsPerTor { n_hosts: u32, hosts_per_tor: u32 },
    #[error("{hosts_per_tor} hosts per ToR cannot be oversubscribed {oversub}:1")]
    OversubRadix { hosts_per_tor: u32, oversub: u32 },
    #[error("3-tier fat-tree needs n_hosts = k^3/4 for even k, got {0}")]
    ThreeTierRadix(u32),
    #[error("{0} must be positive")]
    NonPositive(&'static str),
    #[error("header size {header} must be smaller than mtu {mtu}")]
    Header { header: u32, mtu: u32 },
    #[error("host {0} in host_link_latency_ns does not exist")]
    UnknownHost(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PortRole {
    HostNic,
    TorDown,
    TorUp,
    AggDown,
    AggUp,
    CoreDown,
}

/// One directed link and the output port feeding it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PortInfo {
    pub from: NodeId,
    pub to: NodeId,
    pub role: PortRole,
    pub latency: SimTime,
}

impl PortInfo {
    /// The next node is a switch (as opposed to the destination host).
    pub fn into_switch(&self) -> bool {
        !matches!(self.role, PortRole::TorDown)
    }
}

/// Aggregate figures exported into the run manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologySummary {
    pub n_hosts: u32,
    pub tiers: u8,
    pub oversub_ratio: u32,
    pub hosts_per_tor: u32,
    pub n_tors: u32,
    pub uplinks_per_tor: u32,
    pub n_switches: u32,
    pub n_ports: u32,
    pub paths_same_tor: u32,
    pub paths_same_pod: Option<u32>,
    pub paths_cross: u32,
    pub base_rtt_ns: BTreeMap<HopClass, u64>,
    pub network_base_rtt_ns: u64,
    pub bdp_bytes: u64,
    pub queue_capacity_bytes: u64,
}

#[derive(Debug, Clone)]
pub struct Topology {
    config: FatTreeConfig,
    hosts_per_tor: u32,
    uplinks: u32,
    // 3-tier only
    half_k: u32,
    nodes: Vec<NodeKind>,
    ports: Vec<PortInfo>,
    nic: Vec<PortId>,
    tor_down: Vec<PortId>,
    /// `[tor][uplink]`
    tor_up: Vec<Vec<PortId>>,
    /// 2-tier: `[spine][tor]`; 3-tier: `[agg][tor-in-pod]` with agg indexed globally.
    upper_down: Vec<Vec<PortId>>,
    /// 3-tier: `[agg][core-slot]`
    agg_up: Vec<Vec<PortId>>,
    /// 3-tier: `[core][pod]`
    core_down: Vec<Vec<PortId>>,
    network_brtt: SimTime,
    bdp_bytes: u64,
}

impl Topology {
    pub fn build(config: &FatTreeConfig) -> Result<Topology, TopologyError> {
        validate(config)?;
        let mut topo = match config.tiers {
            2 => build_two_tier(config)?,
            3 => build_three_tier(config)?,
            t => return Err(TopologyError::Tiers(t)),
        };
        let worst = if config.tiers == 2 {
            HopClass::SamePod
        } else {
            HopClass::CrossPod
        };
        let brtt = if topo.n_tors() > 1 {
            topo.class_base_rtt(worst)
        } else {
            topo.class_base_rtt(HopClass::SameTor)
        };
        topo.network_brtt = brtt;
        topo.bdp_bytes = bdp_bytes(config.link_speed_bps, brtt);
        Ok(topo)
    }

    pub fn config(&self) -> &FatTreeConfig {
        &self.config
    }

    pub fn n_hosts(&self) -> u32 {
        self.config.n_hosts
    }

    pub fn mtu(&self) -> u32 {
        self.config.mtu
    }

    pub fn header_bytes(&self) -> u32 {
        self.config.header_bytes
    }

    pub fn link_speed_bps(&self) -> u64 {
        self.config.link_speed_bps
    }

    pub fn hosts_per_tor(&self) -> u32 {
        self.hosts_per_tor
    }

    pub fn uplinks_per_tor(&self) -> u32 {
        self.uplinks
    }

    pub fn n_tors(&self) -> u32 {
        self.config.n_hosts / self.hosts_per_tor
    }

    pub fn tor_of(&self, h: HostId) -> u32 {
        h.0 / self.hosts_per_tor
    }

    pub fn pod_of(&self, h: HostId) -> u32 {
        if self.config.tiers == 3 {
            self.tor_of(h) / self.half_k
        } else {
            0
        }
    }

    pub fn nodes(&self) -> &[NodeKind] {
        &self.nodes
    }

    pub fn ports(&self) -> &[PortInfo] {
        &self.ports
    }

    pub fn port(&self, id: PortId) -> &PortInfo {
        &self.ports[id.index()]
    }

    pub fn nic_port(&self, h: HostId) -> PortId {
        self.nic[h.index()]
    }

    /// Uplink ports of `tor`, the leaf-to-fabric capacity that oversubscription
    /// reduces.
    pub fn tor_uplinks(&self, tor: u32) -> &[PortId] {
        &self.tor_up[tor as usize]
    }

    /// ToR ports facing hosts for `tor`.
    pub fn tor_downlinks(&self, tor: u32) -> impl Iterator<Item = PortId> + '_ {
        let h = self.hosts_per_tor;
        (tor * h..(tor + 1) * h).map(move |i| self.tor_down[i as usize])
    }

    pub fn hop_class(&self, src: HostId, dst: HostId) -> HopClass {
        if self.tor_of(src) == self.tor_of(dst) {
            HopClass::SameTor
        } else if self.config.tiers == 2 || self.pod_of(src) == self.pod_of(dst) {
            HopClass::SamePod
        } else {
            HopClass::CrossPod
        }
    }

    /// Size of the entropy domain for the pair: the number of distinct
    /// shortest up/down paths.
    pub fn path_count(&self, src: HostId, dst: HostId) -> u32 {
        match self.hop_class(src, dst) {
            HopClass::SameTor => 1,
            HopClass::SamePod => self.uplinks,
            HopClass::CrossPod => self.uplinks * self.half_k,
        }
    }

    /// All shortest paths, ordered by the entropy that selects them.
    pub fn paths_between(&self, src: HostId, dst: HostId) -> Vec<Path> {
        assert_ne!(src, dst, "paths_between needs distinct hosts");
        (0..self.path_count(src, dst))
            .map(|e| self.route(src, dst, e))
            .collect()
    }

    /// Deterministic entropy-to-path hash. Entropies beyond the pair's domain
    /// wrap around.
    pub fn route(&self, src: HostId, dst: HostId, entropy: Entropy) -> Path {
        let nic = self.nic[src.index()];
        let last = self.tor_down[dst.index()];
        let (st, dt) = (self.tor_of(src) as usize, self.tor_of(dst) as usize);
        match self.hop_class(src, dst) {
            HopClass::SameTor => Path::from_ports(&[nic, last]),
            HopClass::SamePod => {
                let u = (entropy % self.uplinks) as usize;
                let up = self.tor_up[st][u];
                let down = if self.config.tiers == 2 {
                    self.upper_down[u][dt]
                } else {
                    let pod = self.pod_of(dst) as usize;
                    let agg = pod * self.uplinks as usize + u;
                    self.upper_down[agg][dt % self.half_k as usize]
                };
                Path::from_ports(&[nic, up, down, last])
            }
            HopClass::CrossPod => {
                let u = (entropy % self.uplinks) as usize;
                let slot = ((entropy / self.uplinks) % self.half_k) as usize;
                let src_pod = self.pod_of(src) as usize;
                let dst_pod = self.pod_of(dst) as usize;
                let src_agg = src_pod * self.uplinks as usize + u;
                let dst_agg = dst_pod * self.uplinks as usize + u;
                let core = u * self.half_k as usize + slot;
                Path::from_ports(&[
                    nic,
                    self.tor_up[st][u],
                    self.agg_up[src_agg][slot],
                    self.core_down[core][dst_pod],
                    self.upper_down[dst_agg][dt % self.half_k as usize],
                    last,
                ])
            }
        }
    }

    /// Idle-network RTT of one full-MTU data packet out and one header-sized
    /// ACK back between two specific hosts.
    pub fn measure_base_rtt(&self, src: HostId, dst: HostId) -> SimTime {
        let fwd = self.route(src, dst, 0);
        let back = self.route(dst, src, 0);
        self.one_way(&fwd, self.config.mtu) + self.one_way(&back, self.config.header_bytes)
    }

    /// Base RTT of the longest path in `class`, ignoring per-host overrides.
    pub fn class_base_rtt(&self, class: HopClass) -> SimTime {
        let ports = class.port_count() as u64;
        let c = &self.config;
        let ser = serialization_delay(c.mtu as u64, c.link_speed_bps)
            + serialization_delay(c.header_bytes as u64, c.link_speed_bps);
        let one_way_fixed = ports * c.link_latency_ns + (ports - 1) * c.switch_latency_ns;
        SimTime(2 * one_way_fixed + ports * ser.0)
    }

    /// Base RTT of the longest inter-rack path; sizes queues and the BDP.
    pub fn network_base_rtt(&self) -> SimTime {
        self.network_brtt
    }

    pub fn bdp_bytes(&self) -> u64 {
        self.bdp_bytes
    }

    /// Bytes the path between two hosts holds at line rate.
    pub fn path_bdp_bytes(&self, src: HostId, dst: HostId) -> u64 {
        bdp_bytes(self.config.link_speed_bps, self.measure_base_rtt(src, dst))
    }

    /// Per-port data queue capacity: one network BDP.
    pub fn queue_capacity_bytes(&self) -> u64 {
        self.bdp_bytes
    }

    pub fn summary(&self) -> TopologySummary {
        let mut base = BTreeMap::new();
        base.insert(HopClass::SameTor, self.class_base_rtt(HopClass::SameTor).0);
        if self.n_tors() > 1 {
            base.insert(HopClass::SamePod, self.class_base_rtt(HopClass::SamePod).0);
        }
        if self.config.tiers == 3 {
            base.insert(
                HopClass::CrossPod,
                self.class_base_rtt(HopClass::CrossPod).0,
            );
        }
        TopologySummary {
            n_hosts: self.config.n_hosts,
            tiers: self.config.tiers,
            oversub_ratio: self.config.oversub_ratio,
            hosts_per_tor: self.hosts_per_tor,
            n_tors: self.n_tors(),
            uplinks_per_tor: self.uplinks,
            n_switches: self.nodes.iter().filter(|n| **n != NodeKind::Host).count() as u32,
            n_ports: self.ports.len() as u32,
            paths_same_tor: 1,
            paths_same_pod: (self.config.tiers == 3).then_some(self.uplinks),
            paths_cross: if self.config.tiers == 3 {
                self.uplinks * self.half_k
            } else {
                self.uplinks
            },
            base_rtt_ns: base,
            network_base_rtt_ns: self.network_brtt.0,
            bdp_bytes: self.bdp_bytes,
            queue_capacity_bytes: self.queue_capacity_bytes(),
        }
    }

    fn one_way(&self, path: &Path, bytes: u32) -> SimTime {
        let c = &self.config;
        let ser = serialization_delay(bytes as u64, c.link_speed_bps);
        let mut t = SimTime::ZERO;
        for (i, p) in path.ports().iter().enumerate() {
            let info = self.port(*p);
            t += ser + info.latency;
            if i + 1 < path.len() {
                t += SimTime(c.switch_latency_ns);
            }
        }
        t
    }
}

pub fn bdp_bytes(link_speed_bps: u64, rtt: SimTime) -> u64 {
    (link_speed_bps as u128 * rtt.0 as u128 / 8 / 1_000_000_000) as u64
}

fn validate(c: &FatTreeConfig) -> Result<(), TopologyError> {
    if c.n_hosts == 0 {
        return Err(TopologyError::NoHosts);
    }
    if !matches!(c.tiers, 2 | 3) {
        return Err(TopologyError::Tiers(c.tiers));
    }
    if !matches!(c.oversub_ratio, 1 | 2 | 4 | 8) {
        return Err(TopologyError::Oversub(c.oversub_ratio));
    }
    if c.link_speed_bps == 0 {
        return Err(TopologyError::NonPositive("link_speed_bps"));
    }
    if c.link_latency_ns == 0 {
        return Err(TopologyError::NonPositive("link_latency_ns"));
    }
    if c.mtu == 0 {
        return Err(TopologyError::NonPositive("mtu"));
    }
    if c.header_bytes == 0 || c.header_bytes >= c.mtu {
        return Err(TopologyError::Header {
            header: c.header_bytes,
            mtu: c.mtu,
        });
    }
    for (&h, &lat) in &c.host_link_latency_ns {
        if h >= c.n_hosts {
            return Err(TopologyError::UnknownHost(h));
        }
        if lat == 0 {
            return Err(TopologyError::NonPositive("host_link_latency_ns"));
        }
    }
    Ok(())
}

fn default_hosts_per_tor(n: u32) -> u32 {
    let mut h = 1;
    while h * h < n || !n.is_multiple_of(h) {
        h += 1;
    }
    h
}

struct Builder<'a> {
    config: &'a FatTreeConfig,
    nodes: Vec<NodeKind>,
    ports: Vec<PortInfo>,
}

impl Builder<'_> {
    fn node(&mut self, kind: NodeKind) -> NodeId {
        self.nodes.push(kind);
        NodeId(self.nodes.len() as u32 - 1)
    }

    fn port(&mut self, from: NodeId, to: NodeId, role: PortRole, latency_ns: u64) -> PortId {
        self.ports.push(PortInfo {
            from,
            to,
            role,
            latency: SimTime(latency_ns),
        });
        PortId(self.ports.len() as u32 - 1)
    }

    fn host_latency(&self, h: u32) -> u64 {
        self.config
            .host_link_latency_ns
            .get(&h)
            .copied()
            .unwrap_or(self.config.link_latency_ns)
    }

    /// Hosts (node ids 0..n) and ToRs with their access links.
    fn access_layer(&mut self, hpt: u32) -> (Vec<NodeId>, Vec<PortId>, Vec<PortId>) {
        let n = self.config.n_hosts;
        for _ in 0..n {
            self.node(NodeKind::Host);
        }
        let tors: Vec<NodeId> = (0..n / hpt).map(|_| self.node(NodeKind::Tor)).collect();
        let mut nic = Vec::with_capacity(n as usize);
        let mut down = Vec::with_capacity(n as usize);
        for h in 0..n {
            let tor = tors[(h / hpt) as usize];
            let lat = self.host_latency(h);
            nic.push(self.port(NodeId(h), tor, PortRole::HostNic, lat));
            down.push(self.port(tor, NodeId(h), PortRole::TorDown, lat));
        }
        (tors, nic, down)
    }
}

fn build_two_tier(c: &FatTreeConfig) -> Result<Topology, TopologyError> {
    let hpt = c
        .hosts_per_tor
        .unwrap_or_else(|| default_hosts_per_tor(c.n_hosts));
    if hpt == 0 || !c.n_hosts.is_multiple_of(hpt) {
        return Err(TopologyError::HostsPerTor {
            n_hosts: c.n_hosts,
            hosts_per_tor: hpt,
        });
    }
    if !hpt.is_multiple_of(c.oversub_ratio) {
        return Err(TopologyError::OversubRadix {
            hosts_per_tor: hpt,
            oversub: c.oversub_ratio,
        });
    }
    let uplinks = hpt / c.oversub_ratio;
    let mut b = Builder {
        config: c,
        nodes: Vec::new(),
        ports: Vec::new(),
    };
    let (tors, nic, tor_down) = b.access_layer(hpt);
    let spines: Vec<NodeId> = (0..uplinks).map(|_| b.node(NodeKind::Core)).collect();
    let lat = c.link_latency_ns;
    let mut tor_up = vec![Vec::new(); tors.len()];
    let mut spine_down = vec![Vec::new(); spines.len()];
    for (t, &tor) in tors.iter().enumerate() {
        for (s, &spine) in spines.iter().enumerate() {
            tor_up[t].push(b.port(tor, spine, PortRole::TorUp, lat));
            spine_down[s].push(b.port(spine, tor, PortRole::CoreDown, lat));
        }
    }
    Ok(Topology {
        config: c.clone(),
        hosts_per_tor: hpt,
        uplinks,
        half_k: 1,
        nodes: b.nodes,
        ports: b.ports,
        nic,
        tor_down,
        tor_up,
        upper_down: spine_down,
        agg_up: Vec::new(),
        core_down: Vec::new(),
        network_brtt: SimTime::ZERO,
        bdp_bytes: 0,
    })
}

fn build_three_tier(c: &FatTreeConfig) -> Result<Topology, TopologyError> {
    let k = (2..=64u32)
        .step_by(2)
        .find(|k| k * k * k / 4 == c.n_hosts)
        .ok_or(TopologyError::ThreeTierRadix(c.n_hosts))?;
    let half = k / 2;
    if half % c.oversub_ratio != 0 {
        return Err(TopologyError::OversubRadix {
            hosts_per_tor: half,
            oversub: c.oversub_ratio,
        });
    }
    let uplinks = half / c.oversub_ratio;
    let mut b = Builder {
        config: c,
        nodes: Vec::new(),
        ports: Vec::new(),
    };
    let (tors, nic, tor_down) = b.access_layer(half);
    let lat = c.link_latency_ns;
    // aggs indexed pod * uplinks + u
    let aggs: Vec<NodeId> = (0..k * uplinks).map(|_| b.node(NodeKind::Agg)).collect();
    let cores: Vec<NodeId> = (0..uplinks * half)
        .map(|_| b.node(NodeKind::Core))
        .collect();
    let mut tor_up = vec![Vec::new(); tors.len()];
    let mut agg_down = vec![Vec::new(); aggs.len()];
    for (t, &tor) in tors.iter().enumerate() {
        let pod = t as u32 / half;
        for u in 0..uplinks {
            let a = (pod * uplinks + u) as usize;
            tor_up[t].push(b.port(tor, aggs[a], PortRole::TorUp, lat));
            agg_down[a].push(b.port(aggs[a], tor, PortRole::AggDown, lat));
        }
    }
    let mut agg_up = vec![Vec::new(); aggs.len()];
    let mut core_down = vec![Vec::new(); cores.len()];
    for (a, &agg) in aggs.iter().enumerate() {
        let u = a as u32 % uplinks;
        for slot in 0..half {
            let core = (u * half + slot) as usize;
            agg_up[a].push(b.port(agg, cores[core], PortRole::AggUp, lat));
        }
    }
    // core_down[core][pod] must be indexed by pod; aggs are pod-major.
    for pod in 0..k {
        for u in 0..uplinks {
            let a = (pod * uplinks + u) as usize;
            for slot in 0..half {
                let core = (u * half + slot) as usize;
                let p = b.port(cores[core], aggs[a], PortRole::CoreDown, lat);
                core_down[core].push(p);
            }
        }
    }
    Ok(Topology {
        config: c.clone(),
        hosts_per_tor: half,
        uplinks,
        half_k: half,
        nodes: b.nodes,
        ports: b.ports,
        nic,
        tor_down,
        tor_up,
        upper_down: agg_down,
        agg_up,
        core_down,
        network_brtt: SimTime::ZERO,
        bdp_bytes: 0,
    })
}
