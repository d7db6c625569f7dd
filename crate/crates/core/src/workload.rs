//! Flow-start schedules for the standard collective patterns and the
//! ideal-completion oracle they are judged against.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::packet::FlowId;
use crate::rng::SimRng;
use crate::time::SimTime;
use crate::topology::{HostId, Topology};

/// One message. A flow with `depends_on` starts when that flow finishes,
/// `start` after it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowSpec {
    pub id: FlowId,
    pub src: HostId,
    pub dst: HostId,
    pub size: u64,
    pub start: SimTime,
    pub depends_on: Option<FlowId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorkloadKind {
    Incast,
    Permutation,
    AllToAll,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadSpec {
    pub kind: WorkloadKind,
    pub msg_size: u64,
    /// Incast senders. Defaults to every other host.
    #[serde(default)]
    pub fan_in: Option<u32>,
    /// Incast receiver.
    #[serde(default)]
    pub receiver: u32,
    /// Per-flow size overrides keyed by flow index.
    #[serde(default)]
    pub uneven: BTreeMap<u32, u64>,
    /// All-to-all destinations in flight per host.
    #[serde(default = "default_k")]
    pub k_window: u32,
    /// Pairing seed for permutations; falls back to the run seed.
    #[serde(default)]
    pub seed: Option<u64>,
}

fn default_k() -> u32 {
    1
}

impl WorkloadSpec {
    pub fn new(kind: WorkloadKind, msg_size: u64) -> Self {
        WorkloadSpec {
            kind,
            msg_size,
            fan_in: None,
            receiver: 0,
            uneven: BTreeMap::new(),
            k_window: 1,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WorkloadError {
    #[error("fan_in {fan_in} exceeds the {available} hosts available")]
    FanIn { fan_in: u32, available: u32 },
    #[error("host {0} is outside the topology")]
    UnknownHost(u32),
    #[error("k_window must be at least 1")]
    Window,
    #[error("messages must be non-empty")]
    EmptyMessage,
    #[error("flow {flow}: source equals destination")]
    SelfFlow { flow: u32 },
    #[error("flow {flow} depends on {dep}, which is not an earlier flow")]
    Dependency { flow: u32, dep: u32 },
    #[error("size override for flow {0} which does not exist")]
    UnevenIndex(u32),
}

/// Builds the schedule for `spec` on `topo`. `run_seed` feeds the permutation
/// pairing unless the spec pins its own seed.
pub fn generate(
    spec: &WorkloadSpec,
    topo: &Topology,
    run_seed: u64,
) -> Result<Vec<FlowSpec>, WorkloadError> {
    if spec.msg_size == 0 {
        return Err(WorkloadError::EmptyMessage);
    }
    let mut flows = match spec.kind {
        WorkloadKind::Incast => {
            let n = topo.n_hosts();
            if spec.receiver >= n {
                return Err(WorkloadError::UnknownHost(spec.receiver));
            }
            let fan_in = spec.fan_in.unwrap_or(n - 1);
            if fan_in > n - 1 {
                return Err(WorkloadError::FanIn {
                    fan_in,
                    available: n - 1,
                });
            }
            gen_incast(topo, HostId(spec.receiver), fan_in, spec.msg_size)
        }
        WorkloadKind::Permutation => {
            let mut rng = SimRng::new(spec.seed.unwrap_or(run_seed));
            gen_permutation(topo, spec.msg_size, &mut rng)
        }
        WorkloadKind::AllToAll => {
            if spec.k_window == 0 {
                return Err(WorkloadError::Window);
            }
            gen_alltoall(topo.n_hosts(), spec.msg_size, spec.k_window)
        }
    };
    for (&idx, &size) in &spec.uneven {
        let f = flows
            .get_mut(idx as usize)
            .ok_or(WorkloadError::UnevenIndex(idx))?;
        if size == 0 {
            return Err(WorkloadError::EmptyMessage);
        }
        f.size = size;
    }
    Ok(flows)
}

/// `fan_in` senders to `receiver`, all at t=0. Senders are taken from other
/// racks first, walking forward from the receiver's rack.
pub fn gen_incast(topo: &Topology, receiver: HostId, fan_in: u32, size: u64) -> Vec<FlowSpec> {
    let n = topo.n_hosts();
    let h = topo.hosts_per_tor();
    let rack_start = topo.tor_of(receiver) * h;
    let mut remote = Vec::new();
    let mut local = Vec::new();
    for i in 0..n {
        let host = HostId((rack_start + h + i) % n);
        if host == receiver {
            continue;
        }
        if topo.tor_of(host) == topo.tor_of(receiver) {
            local.push(host);
        } else {
            remote.push(host);
        }
    }
    remote
        .into_iter()
        .chain(local)
        .take(fan_in as usize)
        .enumerate()
        .map(|(i, src)| FlowSpec {
            id: FlowId(i as u32),
            src,
            dst: receiver,
            size,
            start: SimTime::ZERO,
            depends_on: None,
        })
        .collect()
}

/// One flow per host, every destination on a different rack. Whole racks are
/// rotated by a random non-zero offset and hosts within a rack shuffled, so
/// each pairing is a derangement that crosses the fabric.
pub fn gen_permutation(topo: &Topology, size: u64, rng: &mut SimRng) -> Vec<FlowSpec> {
    let n = topo.n_hosts();
    if n < 2 {
        return Vec::new();
    }
    let h = topo.hosts_per_tor();
    let racks = topo.n_tors();
    let dst_of: Vec<u32> = if racks > 1 {
        let shift = 1 + rng.below(racks as u64 - 1) as u32;
        let mut slots: Vec<u32> = (0..h).collect();
        rng.shuffle(&mut slots);
        (0..n)
            .map(|s| ((s / h + shift) % racks) * h + slots[(s % h) as usize])
            .collect()
    } else {
        let shift = 1 + rng.below(n as u64 - 1) as u32;
        (0..n).map(|s| (s + shift) % n).collect()
    };
    dst_of
        .into_iter()
        .enumerate()
        .map(|(s, d)| FlowSpec {
            id: FlowId(s as u32),
            src: HostId(s as u32),
            dst: HostId(d),
            size,
            start: SimTime::ZERO,
            depends_on: None,
        })
        .collect()
}

/// Every host sends `size` bytes to every other host in ring order
/// `s+1, s+2, ...`, keeping at most `k` destinations in flight: the j-th
/// flow of a host waits for its (j-k)-th.
pub fn gen_alltoall(n_hosts: u32, size: u64, k: u32) -> Vec<FlowSpec> {
    let k = k.max(1) as usize;
    let per_host = n_hosts.saturating_sub(1) as usize;
    let mut flows = Vec::with_capacity(n_hosts as usize * per_host);
    for s in 0..n_hosts {
        let base = flows.len();
        for j in 0..per_host {
            let id = FlowId((base + j) as u32);
            flows.push(FlowSpec {
                id,
                src: HostId(s),
                dst: HostId((s + 1 + j as u32) % n_hosts),
                size,
                start: SimTime::ZERO,
                depends_on: (j >= k).then(|| FlowId((base + j - k) as u32)),
            });
        }
    }
    flows
}

/// Checks ids are dense and in order, no flow targets itself, and every
/// dependency points backwards.
pub fn validate_schedule(flows: &[FlowSpec], topo: &Topology) -> Result<(), WorkloadError> {
    for (i, f) in flows.iter().enumerate() {
        let id = i as u32;
        if f.id.0 != id {
            return Err(WorkloadError::Dependency {
                flow: f.id.0,
                dep: id,
            });
        }
        for h in [f.src, f.dst] {
            if h.0 >= topo.n_hosts() {
                return Err(WorkloadError::UnknownHost(h.0));
            }
        }
        if f.src == f.dst {
            return Err(WorkloadError::SelfFlow { flow: id });
        }
        if f.size == 0 {
            return Err(WorkloadError::EmptyMessage);
        }
        if let Some(dep) = f.depends_on {
            if dep.0 >= id {
                return Err(WorkloadError::Dependency {
                    flow: id,
                    dep: dep.0,
                });
            }
        }
    }
    Ok(())
}

pub fn total_bytes(flows: &[FlowSpec]) -> u64 {
    flows.iter().map(|f| f.size).sum()
}

/// Lower bound on the completion of the whole schedule: the busiest port's
/// byte load at line rate, with every flow spread evenly over its shortest
/// paths, plus the longest base RTT among the flows. Dependencies and start
/// offsets are ignored.
pub fn ideal_completion(topo: &Topology, flows: &[FlowSpec]) -> SimTime {
    if flows.is_empty() {
        return SimTime::ZERO;
    }
    let mut load = vec![0.0f64; topo.ports().len()];
    let mut brtt = SimTime::ZERO;
    for f in flows {
        let paths = topo.paths_between(f.src, f.dst);
        let share = f.size as f64 / paths.len() as f64;
        for p in &paths {
            for port in p.ports() {
                load[port.index()] += share;
            }
        }
        brtt = brtt.max(topo.measure_base_rtt(f.src, f.dst));
    }
    let busiest = load.iter().copied().fold(0.0, f64::max);
    let secs = busiest * 8.0 / topo.link_speed_bps() as f64;
    SimTime((secs * 1e9 + 0.5) as u64) + brtt
}
