//! Switch output ports: a byte-bounded data FIFO with RED marking on dequeue
//! and trimming on overflow, plus a strict-priority control FIFO.

use alloc::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::packet::{Packet, PacketKind};
use crate::rng::SimRng;

/// RED thresholds on data-queue occupancy in bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RedConfig {
    pub kmin: u64,
    pub kmax: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("RED thresholds must satisfy 0 <= kmin < kmax <= capacity ({kmin}, {kmax}, {capacity})")]
pub struct RedConfigError {
    pub kmin: u64,
    pub kmax: u64,
    pub capacity: u64,
}

impl RedConfig {
    pub fn new(kmin: u64, kmax: u64, capacity: u64) -> Result<Self, RedConfigError> {
        if kmin >= kmax || kmax > capacity {
            return Err(RedConfigError {
                kmin,
                kmax,
                capacity,
            });
        }
        Ok(RedConfig { kmin, kmax })
    }

    /// Thresholds as fractions of the queue capacity.
    pub fn from_fractions(capacity: u64, lo: f64, hi: f64) -> Result<Self, RedConfigError> {
        let kmin = (capacity as f64 * lo) as u64;
        let kmax = (capacity as f64 * hi) as u64;
        Self::new(kmin, kmax, capacity)
    }

    /// Marking probability, linear between the thresholds.
    pub fn mark_probability(&self, occupancy: u64) -> f64 {
        if occupancy <= self.kmin {
            0.0
        } else if occupancy >= self.kmax {
            1.0
        } else {
            (occupancy - self.kmin) as f64 / (self.kmax - self.kmin) as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnqueueOutcome {
    Enqueued,
    /// Payload discarded; the header went into the control queue.
    Trimmed,
    /// Data packet discarded because the queue was full and trimming is off.
    Dropped,
    /// Control queue full.
    DroppedCtrl,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PortConfig {
    /// `None` for an unbounded queue (host NICs).
    pub capacity_bytes: Option<u64>,
    pub ctrl_capacity_bytes: Option<u64>,
    /// `None` disables marking.
    pub red: Option<RedConfig>,
    pub trimming: bool,
    pub header_bytes: u32,
}

#[derive(Debug, Clone)]
pub struct SwitchPort {
    cfg: PortConfig,
    data: VecDeque<Packet>,
    ctrl: VecDeque<Packet>,
    data_bytes: u64,
    ctrl_bytes: u64,
    /// A packet is currently being serialized.
    pub busy: bool,
}

impl SwitchPort {
    pub fn new(cfg: PortConfig) -> Self {
        SwitchPort {
            cfg,
            data: VecDeque::new(),
            ctrl: VecDeque::new(),
            data_bytes: 0,
            ctrl_bytes: 0,
            busy: false,
        }
    }

    pub fn config(&self) -> &PortConfig {
        &self.cfg
    }

    pub fn data_bytes(&self) -> u64 {
        self.data_bytes
    }

    pub fn ctrl_bytes(&self) -> u64 {
        self.ctrl_bytes
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty() && self.ctrl.is_empty()
    }

    pub fn try_enqueue(&mut self, p: Packet) -> EnqueueOutcome {
        if p.kind.is_control() {
            return self.push_ctrl(p);
        }
        let fits = self
            .cfg
            .capacity_bytes
            .is_none_or(|cap| self.data_bytes + p.size_bytes as u64 <= cap);
        if fits {
            self.data_bytes += p.size_bytes as u64;
            self.data.push_back(p);
            EnqueueOutcome::Enqueued
        } else if self.cfg.trimming {
            match self.push_ctrl(p.trimmed(self.cfg.header_bytes)) {
                EnqueueOutcome::Enqueued => EnqueueOutcome::Trimmed,
                other => other,
            }
        } else {
            EnqueueOutcome::Dropped
        }
    }

    fn push_ctrl(&mut self, p: Packet) -> EnqueueOutcome {
        let fits = self
            .cfg
            .ctrl_capacity_bytes
            .is_none_or(|cap| self.ctrl_bytes + p.size_bytes as u64 <= cap);
        if !fits {
            return EnqueueOutcome::DroppedCtrl;
        }
        self.ctrl_bytes += p.size_bytes as u64;
        self.ctrl.push_back(p);
        EnqueueOutcome::Enqueued
    }

    /// Takes the next packet to serialize: control first, then data. Data
    /// packets are ECN-marked with the RED probability of the occupancy they
    /// leave behind.
    pub fn dequeue_and_mark(&mut self, rng: &mut SimRng) -> Option<Packet> {
        if let Some(p) = self.ctrl.pop_front() {
            self.ctrl_bytes -= p.size_bytes as u64;
            return Some(p);
        }
        let mut p = self.data.pop_front()?;
        debug_assert_eq!(p.kind, PacketKind::Data);
        self.data_bytes -= p.size_bytes as u64;
        if let Some(red) = self.cfg.red {
            let prob = red.mark_probability(self.data_bytes);
            if rng.bernoulli(prob) {
                p.ecn_marked = true;
            }
        }
        Some(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::packet::FlowId;
    use crate::topology::{HostId, Path};

    fn data(psn: u32, size: u32) -> Packet {
        Packet::data(FlowId(0), psn, size, 0, HostId(0), HostId(1), Path::EMPTY)
    }

    fn port(capacity: u64, trimming: bool) -> SwitchPort {
        SwitchPort::new(PortConfig {
            capacity_bytes: Some(capacity),
            ctrl_capacity_bytes: Some(capacity),
            red: Some(RedConfig::from_fractions(capacity, 0.2, 0.8).unwrap()),
            trimming,
            header_bytes: 64,
        })
    }

    #[test]
    fn empty_queue_accepts_data() {
        let mut p = port(8192, true);
        assert_eq!(p.try_enqueue(data(0, 4096)), EnqueueOutcome::Enqueued);
        assert_eq!(p.data_bytes(), 4096);
    }

    #[test]
    fn full_queue_trims_into_ctrl() {
        let mut p = port(8192, true);
        p.try_enqueue(data(0, 4096));
        p.try_enqueue(data(1, 4096));
        assert_eq!(p.try_enqueue(data(2, 4096)), EnqueueOutcome::Trimmed);
        assert_eq!(p.data_bytes(), 8192);
        assert_eq!(p.ctrl_bytes(), 64);
        let mut rng = SimRng::new(0);
        let head = p.dequeue_and_mark(&mut rng).unwrap();
        assert_eq!(head.kind, PacketKind::TrimmedHeader);
        assert_eq!((head.psn, head.orig_size_bytes), (2, 4096));
    }

    #[test]
    fn full_queue_without_trimming_drops() {
        let mut p = port(4096, false);
        p.try_enqueue(data(0, 4096));
        assert_eq!(p.try_enqueue(data(1, 4096)), EnqueueOutcome::Dropped);
        assert_eq!(p.ctrl_bytes(), 0);
    }

    #[test]
    fn ctrl_overflow_is_reported() {
        let mut p = port(128, true);
        let mut ack = data(0, 64);
        ack.kind = PacketKind::Ack;
        assert_eq!(p.try_enqueue(ack), EnqueueOutcome::Enqueued);
        assert_eq!(p.try_enqueue(ack), EnqueueOutcome::Enqueued);
        assert_eq!(p.try_enqueue(ack), EnqueueOutcome::DroppedCtrl);
    }

    #[test]
    fn ctrl_has_strict_priority() {
        let mut p = port(1 << 20, true);
        p.try_enqueue(data(0, 4096));
        let mut ack = data(1, 64);
        ack.kind = PacketKind::Ack;
        p.try_enqueue(ack);
        let mut rng = SimRng::new(0);
        assert_eq!(p.dequeue_and_mark(&mut rng).unwrap().kind, PacketKind::Ack);
        assert_eq!(p.dequeue_and_mark(&mut rng).unwrap().kind, PacketKind::Data);
        assert!(p.dequeue_and_mark(&mut rng).is_none());
    }

    #[test]
    fn red_probability_endpoints_and_midpoint() {
        let red = RedConfig::new(1000, 3000, 4000).unwrap();
        assert_eq!(red.mark_probability(0), 0.0);
        assert_eq!(red.mark_probability(1000), 0.0);
        assert_eq!(red.mark_probability(2000), 0.5);
        assert_eq!(red.mark_probability(3000), 1.0);
        assert_eq!(red.mark_probability(3999), 1.0);
    }

    #[test]
    fn red_rejects_inverted_thresholds() {
        assert!(RedConfig::new(3000, 3000, 4000).is_err());
        assert!(RedConfig::new(1000, 5000, 4000).is_err());
    }

    #[test]
    fn control_packets_never_marked() {
        let mut p = port(4096, true);
        // occupancy pinned above kmax by a data packet behind the ack
        p.try_enqueue(data(0, 4096));
        let mut ack = data(1, 64);
        ack.kind = PacketKind::Ack;
        p.try_enqueue(ack);
        let mut rng = SimRng::new(9);
        let out = p.dequeue_and_mark(&mut rng).unwrap();
        assert!(!out.ecn_marked);
    }
}
