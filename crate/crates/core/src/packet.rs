use serde::{Deserialize, Serialize};

use crate::time::SimTime;
use crate::topology::{HostId, Path};

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct FlowId(pub u32);

impl FlowId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Packet sequence number within a flow.
pub type Psn = u32;

/// Path-selection value hashed by switches onto one of the equal-cost paths.
pub type Entropy = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PacketKind {
    Data,
    TrimmedHeader,
    Ack,
    Nack,
}

impl PacketKind {
    pub fn is_control(self) -> bool {
        !matches!(self, PacketKind::Data)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Packet {
    pub flow: FlowId,
    pub psn: Psn,
    pub kind: PacketKind,
    pub size_bytes: u32,
    /// Size of the data packet a header/NACK stands for; equals `size_bytes`
    /// for data and the covered size for ACKs.
    pub orig_size_bytes: u32,
    pub entropy: Entropy,
    pub ecn_marked: bool,
    pub ecn_echo: bool,
    pub ts_sent: SimTime,
    pub src: HostId,
    pub dst: HostId,
    pub path: Path,
    /// Index into `path` of the next port to enter.
    pub hop: u8,
}

impl Packet {
    pub fn data(
        flow: FlowId,
        psn: Psn,
        size: u32,
        entropy: Entropy,
        src: HostId,
        dst: HostId,
        path: Path,
    ) -> Self {
        Packet {
            flow,
            psn,
            kind: PacketKind::Data,
            size_bytes: size,
            orig_size_bytes: size,
            entropy,
            ecn_marked: false,
            ecn_echo: false,
            ts_sent: SimTime::ZERO,
            src,
            dst,
            path,
            hop: 0,
        }
    }

    /// Strips the payload, keeping everything the NACK needs to echo.
    pub fn trimmed(&self, header_bytes: u32) -> Packet {
        debug_assert_eq!(self.kind, PacketKind::Data);
        Packet {
            kind: PacketKind::TrimmedHeader,
            size_bytes: header_bytes,
            orig_size_bytes: self.size_bytes,
            ecn_marked: false,
            ..*self
        }
    }

    /// Builds a control reply (ACK or NACK) travelling back to the sender
    /// along `path`.
    pub fn reply(&self, kind: PacketKind, header_bytes: u32, path: Path) -> Packet {
        debug_assert!(matches!(kind, PacketKind::Ack | PacketKind::Nack));
        Packet {
            flow: self.flow,
            psn: self.psn,
            kind,
            size_bytes: header_bytes,
            orig_size_bytes: self.orig_size_bytes,
            entropy: self.entropy,
            ecn_marked: false,
            ecn_echo: kind == PacketKind::Ack && self.ecn_marked,
            ts_sent: self.ts_sent,
            src: self.dst,
            dst: self.src,
            path,
            hop: 0,
        }
    }
}
