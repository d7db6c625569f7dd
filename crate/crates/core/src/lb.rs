//! Per-flow entropy selection for packet spraying.

use alloc::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::packet::Entropy;
use crate::rng::SimRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LbMode {
    /// Recycle entropies whose feedback came back clean; retire marked ones.
    #[default]
    Reps,
    /// Uniform random entropy per packet.
    Oblivious,
    /// One entropy for the whole flow (ECMP).
    SinglePath,
}

#[derive(Debug, Clone)]
pub struct EntropyPool {
    mode: LbMode,
    domain: u32,
    recycled: VecDeque<Entropy>,
    fresh_cursor: u32,
    fixed: Entropy,
}

impl EntropyPool {
    /// Draws the per-flow starting offset (and the ECMP entropy) from `rng`.
    pub fn new(mode: LbMode, domain_size: u32, rng: &mut SimRng) -> Self {
        let domain = domain_size.max(1);
        let offset = rng.below(domain as u64) as u32;
        EntropyPool {
            mode,
            domain,
            recycled: VecDeque::new(),
            fresh_cursor: offset,
            fixed: offset,
        }
    }

    pub fn mode(&self) -> LbMode {
        self.mode
    }

    pub fn domain_size(&self) -> u32 {
        self.domain
    }

    pub fn recycled(&self) -> impl Iterator<Item = Entropy> + '_ {
        self.recycled.iter().copied()
    }

    pub fn next_entropy(&mut self, rng: &mut SimRng) -> Entropy {
        match self.mode {
            LbMode::Reps => {
                if let Some(e) = self.recycled.pop_front() {
                    return e;
                }
                let e = self.fresh_cursor;
                self.fresh_cursor = (self.fresh_cursor + 1) % self.domain;
                e
            }
            LbMode::Oblivious => rng.below(self.domain as u64) as Entropy,
            LbMode::SinglePath => self.fixed,
        }
    }

    /// Feedback for a packet sent on `entropy`. `congested` covers ECN echoes,
    /// NACKs and explicit path-change requests from the congestion control.
    pub fn on_feedback(&mut self, entropy: Entropy, congested: bool) {
        if self.mode != LbMode::Reps || entropy >= self.domain {
            return;
        }
        if congested {
            // most recent feedback wins: drop earlier clean tokens too
            self.recycled.retain(|&e| e != entropy);
        } else {
            self.recycled.push_back(entropy);
        }
    }
}
