//! Packet-level discrete-event simulator for datacenter networks, with the
//! SMaRTT sender-side congestion control, trimming switches and
//! entropy-based packet spraying.
//!
//! The crate is `no_std` and only needs `alloc`.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod cc;
pub mod event;
pub mod lb;
pub mod metrics;
pub mod network;
pub mod packet;
pub mod port;
pub mod rng;
pub mod time;
pub mod topology;
pub mod transport;
pub mod workload;

pub use cc::{CcParams, CcTuning, FlowCcState};
pub use event::{EventQueue, SimStats};
pub use lb::{EntropyPool, LbMode};
pub use network::{Network, NetworkConfig};
pub use packet::{FlowId, Packet, PacketKind};
pub use rng::SimRng;
pub use time::SimTime;
pub use topology::{FatTreeConfig, HostId, Path, Topology};
pub use workload::{FlowSpec, WorkloadKind, WorkloadSpec};
