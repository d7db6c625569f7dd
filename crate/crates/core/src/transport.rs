//! Sender and receiver endpoints of a single message flow.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::cc::{AckInfo, CcDecision, CcParams, FlowCcState};
use crate::event::EventId;
use crate::lb::EntropyPool;
use crate::packet::{Entropy, FlowId, Packet, PacketKind, Psn};
use crate::rng::SimRng;
use crate::time::SimTime;
use crate::topology::{HostId, Path};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PsnState {
    Unsent,
    InFlight {
        entropy: Entropy,
        timer: Option<EventId>,
    },
    /// Lost or trimmed, waiting in the retransmission queue.
    Queued,
    Acked,
}

/// A data packet the sender wants on the wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SendItem {
    pub psn: Psn,
    pub size: u32,
    pub entropy: Entropy,
    pub retransmit: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SenderCounters {
    pub packets_sent: u64,
    pub bytes_sent: u64,
    pub retransmitted_bytes: u64,
    pub retransmitted_packets: u64,
    pub nacks: u64,
    pub timeouts: u64,
    pub spurious_acks: u64,
    pub ignored_nacks: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AckOutcome {
    pub decision: CcDecision,
    /// Timer of the acknowledged copy, to be cancelled.
    pub timer: Option<EventId>,
    pub finished: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossOutcome {
    pub decision: CcDecision,
    pub timer: Option<EventId>,
}

#[derive(Debug, Clone)]
pub struct SenderFlow {
    pub id: FlowId,
    pub src: HostId,
    pub dst: HostId,
    pub message_size: u64,
    pub mtu: u32,
    pub params: CcParams,
    pub cc: FlowCcState,
    pub lb: EntropyPool,
    pub start_time: SimTime,
    pub finish_time: Option<SimTime>,
    pub counters: SenderCounters,
    states: Vec<PsnState>,
    next_psn: Psn,
    retransmit: VecDeque<Psn>,
    bytes_acked: u64,
    unacked_bytes: u64,
}

impl SenderFlow {
    pub fn new(
        id: FlowId,
        src: HostId,
        dst: HostId,
        message_size: u64,
        params: CcParams,
        lb: EntropyPool,
        start_time: SimTime,
    ) -> Self {
        let mtu = params.mtu as u32;
        let n = message_size.div_ceil(mtu as u64) as usize;
        SenderFlow {
            id,
            src,
            dst,
            message_size,
            mtu,
            cc: FlowCcState::new(&params),
            params,
            lb,
            start_time,
            finish_time: None,
            counters: SenderCounters::default(),
            states: vec![PsnState::Unsent; n],
            next_psn: 0,
            retransmit: VecDeque::new(),
            bytes_acked: 0,
            unacked_bytes: 0,
        }
    }

    pub fn n_packets(&self) -> u32 {
        self.states.len() as u32
    }

    pub fn packet_size(&self, psn: Psn) -> u32 {
        let off = psn as u64 * self.mtu as u64;
        (self.message_size - off).min(self.mtu as u64) as u32
    }

    pub fn bytes_acked(&self) -> u64 {
        self.bytes_acked
    }

    /// Bytes currently in flight according to the per-packet ledger.
    pub fn unacked_bytes(&self) -> u64 {
        self.unacked_bytes
    }

    pub fn is_finished(&self) -> bool {
        self.finish_time.is_some()
    }

    pub fn fct(&self) -> Option<SimTime> {
        self.finish_time.map(|f| f - self.start_time)
    }

    /// Window-limited transmission: retransmissions first, then new data.
    pub fn try_send(&mut self, rng: &mut SimRng) -> Vec<SendItem> {
        let mut out = Vec::new();
        while !self.is_finished() {
            let (psn, retransmit) = loop {
                match self.retransmit.front() {
                    Some(&p) if self.states[p as usize] != PsnState::Queued => {
                        self.retransmit.pop_front();
                    }
                    Some(&p) => break (Some(p), true),
                    None => break (None, false),
                }
            };
            let psn = match psn {
                Some(p) => p,
                None if (self.next_psn as usize) < self.states.len() => self.next_psn,
                None => break,
            };
            let size = self.packet_size(psn);
            if (self.cc.in_flight + size as u64) as f64 > self.cc.cwnd {
                break;
            }
            if retransmit {
                self.retransmit.pop_front();
                self.counters.retransmitted_bytes += size as u64;
                self.counters.retransmitted_packets += 1;
            } else {
                self.next_psn += 1;
            }
            let entropy = self.lb.next_entropy(rng);
            self.states[psn as usize] = PsnState::InFlight {
                entropy,
                timer: None,
            };
            self.cc.on_sent(size as u64);
            self.unacked_bytes += size as u64;
            self.counters.packets_sent += 1;
            self.counters.bytes_sent += size as u64;
            out.push(SendItem {
                psn,
                size,
                entropy,
                retransmit,
            });
        }
        out
    }

    /// Records the retransmission timer armed when `psn` left the NIC.
    /// Returns a timer this one replaces, if any.
    pub fn arm_timer(&mut self, psn: Psn, id: EventId) -> Option<EventId> {
        match &mut self.states[psn as usize] {
            PsnState::InFlight { timer, .. } => timer.replace(id),
            _ => Some(id),
        }
    }

    /// True if `psn` is still awaiting an ACK on its current copy.
    pub fn is_in_flight(&self, psn: Psn) -> bool {
        matches!(
            self.states.get(psn as usize),
            Some(PsnState::InFlight { .. })
        )
    }

    fn take_in_flight(&mut self, psn: Psn) -> Option<(Entropy, Option<EventId>)> {
        match self.states.get(psn as usize).copied() {
            Some(PsnState::InFlight { entropy, timer }) => {
                let size = self.packet_size(psn) as u64;
                self.cc.on_left_flight(size);
                self.unacked_bytes -= size;
                Some((entropy, timer))
            }
            _ => None,
        }
    }

    pub fn on_ack(&mut self, ack: &Packet, now: SimTime) -> Option<AckOutcome> {
        debug_assert_eq!(ack.kind, PacketKind::Ack);
        let psn = ack.psn;
        let timer = match self.states.get(psn as usize).copied() {
            Some(PsnState::InFlight { .. }) => self.take_in_flight(psn).and_then(|(_, t)| t),
            // a late copy landed after the loss was declared
            Some(PsnState::Queued) => None,
            _ => {
                self.counters.spurious_acks += 1;
                return None;
            }
        };
        self.states[psn as usize] = PsnState::Acked;
        let size = self.packet_size(psn) as u64;
        self.bytes_acked += size;
        let info = AckInfo {
            size,
            ecn: ack.ecn_echo,
            rtt: now.saturating_sub(ack.ts_sent),
        };
        let decision = self.cc.on_ack(&self.params, &info, now);
        self.lb
            .on_feedback(ack.entropy, ack.ecn_echo || decision.lb_path_change);
        let finished = self.bytes_acked == self.message_size && self.finish_time.is_none();
        if finished {
            self.finish_time = Some(now);
        }
        Some(AckOutcome {
            decision,
            timer,
            finished,
        })
    }

    /// Trim feedback. NACKs for packets that are no longer outstanding are
    /// ignored.
    pub fn on_nack(&mut self, nack: &Packet, now: SimTime) -> Option<LossOutcome> {
        debug_assert_eq!(nack.kind, PacketKind::Nack);
        let Some((_, timer)) = self.take_in_flight(nack.psn) else {
            self.counters.ignored_nacks += 1;
            return None;
        };
        self.counters.nacks += 1;
        self.states[nack.psn as usize] = PsnState::Queued;
        self.retransmit.push_back(nack.psn);
        self.lb.on_feedback(nack.entropy, true);
        let size = nack.orig_size_bytes as u64;
        let decision = self.cc.on_trim(&self.params, size, now);
        Some(LossOutcome { decision, timer })
    }

    pub fn on_timeout(&mut self, psn: Psn, now: SimTime) -> Option<LossOutcome> {
        let (entropy, _) = self.take_in_flight(psn)?;
        self.counters.timeouts += 1;
        self.states[psn as usize] = PsnState::Queued;
        self.retransmit.push_back(psn);
        self.lb.on_feedback(entropy, true);
        let size = self.packet_size(psn) as u64;
        let decision = self.cc.on_timeout(&self.params, size, now);
        Some(LossOutcome {
            decision,
            timer: None,
        })
    }
}

#[derive(Debug, Clone)]
pub struct ReceiverFlow {
    pub id: FlowId,
    received: Vec<bool>,
    pub bytes_received: u64,
    pub duplicates: u64,
}

impl ReceiverFlow {
    pub fn new(id: FlowId, n_packets: u32) -> Self {
        ReceiverFlow {
            id,
            received: vec![false; n_packets as usize],
            bytes_received: 0,
            duplicates: 0,
        }
    }

    pub fn has(&self, psn: Psn) -> bool {
        self.received.get(psn as usize).copied().unwrap_or(false)
    }

    /// Accepts a data packet in any order and builds its ACK.
    pub fn on_data(&mut self, p: &Packet, header_bytes: u32, back: Path) -> Packet {
        debug_assert_eq!(p.kind, PacketKind::Data);
        match self.received.get_mut(p.psn as usize) {
            Some(seen) if !*seen => {
                *seen = true;
                self.bytes_received += p.size_bytes as u64;
            }
            _ => self.duplicates += 1,
        }
        p.reply(PacketKind::Ack, header_bytes, back)
    }

    /// Turns a trimmed header into a NACK.
    pub fn on_trimmed(&mut self, h: &Packet, header_bytes: u32, back: Path) -> Packet {
        debug_assert_eq!(h.kind, PacketKind::TrimmedHeader);
        h.reply(PacketKind::Nack, header_bytes, back)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cc::{CcTuning, PathFacts};
    use crate::lb::LbMode;

    const MTU: u32 = 4096;

    fn params(bdp: u64) -> CcParams {
        CcParams::derive(
            &CcTuning::default(),
            &PathFacts {
                mtu: MTU,
                brtt: SimTime(8_000),
                bdp,
                network_bdp: bdp,
                network_brtt: SimTime(8_000),
                trimming: true,
            },
        )
        .unwrap()
    }

    fn sender(size: u64, cwnd_mtus: f64) -> (SenderFlow, SimRng) {
        let mut rng = SimRng::new(5);
        let lb = EntropyPool::new(LbMode::Reps, 4, &mut rng);
        let mut s = SenderFlow::new(
            FlowId(0),
            HostId(0),
            HostId(1),
            size,
            params(1_000_000),
            lb,
            SimTime(0),
        );
        s.cc.cwnd = cwnd_mtus * MTU as f64;
        (s, rng)
    }

    fn ack_for(item: &SendItem, ts: u64, ecn: bool) -> Packet {
        let mut d = Packet::data(
            FlowId(0),
            item.psn,
            item.size,
            item.entropy,
            HostId(0),
            HostId(1),
            Path::EMPTY,
        );
        d.ts_sent = SimTime(ts);
        d.ecn_marked = ecn;
        d.reply(PacketKind::Ack, 64, Path::EMPTY)
    }

    #[test]
    fn window_limits_burst() {
        let (mut s, mut rng) = sender(100 * MTU as u64, 4.0);
        let sent = s.try_send(&mut rng);
        assert_eq!(sent.len(), 4);
        assert!(sent.iter().all(|i| i.size == MTU));
        assert_eq!(s.cc.in_flight, 4 * MTU as u64);
        assert!(s.try_send(&mut rng).is_empty());
    }

    #[test]
    fn residual_last_packet() {
        let (mut s, mut rng) = sender(2 * MTU as u64 + 100, 10.0);
        let sent = s.try_send(&mut rng);
        assert_eq!(
            sent.iter().map(|i| i.size).collect::<Vec<_>>(),
            [MTU, MTU, 100]
        );
    }

    #[test]
    fn retransmission_precedes_new_data() {
        let (mut s, mut rng) = sender(100 * MTU as u64, 2.0);
        let sent = s.try_send(&mut rng);
        let mut d = Packet::data(
            FlowId(0),
            sent[0].psn,
            MTU,
            0,
            HostId(0),
            HostId(1),
            Path::EMPTY,
        );
        d.ts_sent = SimTime(0);
        let nack = d.trimmed(64).reply(PacketKind::Nack, 64, Path::EMPTY);
        s.on_nack(&nack, SimTime(1_000)).unwrap();
        // the trim shrank cwnd by one packet; give it back
        s.cc.cwnd = 2.0 * MTU as f64;
        let next = s.try_send(&mut rng);
        assert_eq!(next[0].psn, sent[0].psn);
        assert!(next[0].retransmit);
        assert_eq!(s.counters.retransmitted_bytes, MTU as u64);
    }

    #[test]
    fn rtt_from_echoed_timestamp() {
        let (mut s, mut rng) = sender(10 * MTU as u64, 4.0);
        let sent = s.try_send(&mut rng);
        let before = s.cc.avg_rtt;
        assert!(before.is_none());
        s.on_ack(&ack_for(&sent[0], 1_000, false), SimTime(9_000))
            .unwrap();
        assert_eq!(s.cc.avg_rtt, Some(8_000.0));
    }

    #[test]
    fn in_flight_matches_ledger() {
        let (mut s, mut rng) = sender(50 * MTU as u64, 8.0);
        let mut outstanding: Vec<SendItem> = s.try_send(&mut rng);
        let mut now = 10_000;
        while let Some(item) = outstanding.pop() {
            now += 100;
            s.on_ack(
                &ack_for(&item, now - 9_000, item.psn % 3 == 0),
                SimTime(now),
            );
            assert_eq!(s.cc.in_flight, s.unacked_bytes());
            outstanding.extend(s.try_send(&mut rng));
        }
        assert!(s.is_finished());
        assert_eq!(s.bytes_acked(), 50 * MTU as u64);
    }

    #[test]
    fn unknown_and_duplicate_acks_are_spurious() {
        let (mut s, mut rng) = sender(10 * MTU as u64, 2.0);
        let sent = s.try_send(&mut rng);
        let a = ack_for(&sent[0], 0, false);
        assert!(s.on_ack(&a, SimTime(8_000)).is_some());
        assert!(s.on_ack(&a, SimTime(8_100)).is_none());
        let bogus = SendItem {
            psn: 9,
            size: MTU,
            entropy: 0,
            retransmit: false,
        };
        assert!(s
            .on_ack(&ack_for(&bogus, 0, false), SimTime(8_200))
            .is_none());
        assert_eq!(s.counters.spurious_acks, 2);
    }

    #[test]
    fn nack_for_acked_packet_ignored() {
        let (mut s, mut rng) = sender(10 * MTU as u64, 2.0);
        let sent = s.try_send(&mut rng);
        let a = ack_for(&sent[0], 0, false);
        s.on_ack(&a, SimTime(8_000));
        let mut d = Packet::data(
            FlowId(0),
            sent[0].psn,
            MTU,
            0,
            HostId(0),
            HostId(1),
            Path::EMPTY,
        );
        d.ts_sent = SimTime(0);
        let nack = d.trimmed(64).reply(PacketKind::Nack, 64, Path::EMPTY);
        assert!(s.on_nack(&nack, SimTime(8_100)).is_none());
        assert_eq!(s.counters.ignored_nacks, 1);
    }

    #[test]
    fn finish_time_on_final_ack() {
        let (mut s, mut rng) = sender(2 * MTU as u64, 4.0);
        let sent = s.try_send(&mut rng);
        s.on_ack(&ack_for(&sent[0], 0, false), SimTime(8_000));
        assert!(!s.is_finished());
        let out = s
            .on_ack(&ack_for(&sent[1], 0, false), SimTime(9_000))
            .unwrap();
        assert!(out.finished);
        assert_eq!(s.fct(), Some(SimTime(9_000)));
    }

    #[test]
    fn receiver_dedups_and_echoes() {
        let mut r = ReceiverFlow::new(FlowId(0), 4);
        let mut d = Packet::data(FlowId(0), 2, MTU, 1, HostId(0), HostId(1), Path::EMPTY);
        d.ecn_marked = true;
        let a = r.on_data(&d, 64, Path::EMPTY);
        assert!(a.ecn_echo);
        assert_eq!(r.bytes_received, MTU as u64);
        // out of order then duplicate
        let d0 = Packet::data(FlowId(0), 0, MTU, 1, HostId(0), HostId(1), Path::EMPTY);
        r.on_data(&d0, 64, Path::EMPTY);
        let again = r.on_data(&d, 64, Path::EMPTY);
        assert_eq!(again.kind, PacketKind::Ack);
        assert_eq!(r.bytes_received, 2 * MTU as u64);
        assert_eq!(r.duplicates, 1);
    }

    #[test]
    fn receiver_nacks_trimmed_header() {
        let mut r = ReceiverFlow::new(FlowId(0), 20);
        let d = Packet::data(FlowId(0), 17, MTU, 3, HostId(0), HostId(1), Path::EMPTY);
        let n = r.on_trimmed(&d.trimmed(64), 64, Path::EMPTY);
        assert_eq!(n.kind, PacketKind::Nack);
        assert_eq!((n.psn, n.orig_size_bytes, n.entropy), (17, MTU, 3));
        assert_eq!(r.bytes_received, 0);
    }
}
