//! Flow-completion statistics.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::network::{FlowRecord, NetCounters};
use crate::time::SimTime;

/// Nearest-rank percentile of an ascending slice, `q` in `[0, 1]`.
pub fn percentile(sorted: &[u64], q: f64) -> Option<u64> {
    if sorted.is_empty() {
        return None;
    }
    let q = q.clamp(0.0, 1.0);
    let rank = libm_ceil(q * sorted.len() as f64) as usize;
    Some(sorted[rank.clamp(1, sorted.len()) - 1])
}

fn libm_ceil(x: f64) -> f64 {
    let t = x as u64 as f64;
    if t < x {
        t + 1.0
    } else {
        t
    }
}

/// Empirical CDF points `(value, fraction <= value)` of an ascending slice.
pub fn cdf(sorted: &[u64]) -> Vec<(u64, f64)> {
    let n = sorted.len() as f64;
    let mut out: Vec<(u64, f64)> = Vec::new();
    for (i, &v) in sorted.iter().enumerate() {
        let frac = (i + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.0 == v => last.1 = frac,
            _ => out.push((v, frac)),
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FctSummary {
    pub flows: usize,
    pub completed: usize,
    pub fct_min_ns: Option<u64>,
    pub fct_max_ns: Option<u64>,
    pub fct_mean_ns: Option<f64>,
    pub fct_p50_ns: Option<u64>,
    pub fct_p99_ns: Option<u64>,
    /// Slowest minus fastest completion.
    pub fct_spread_ns: Option<u64>,
    /// Last finish minus first start, over completed flows.
    pub makespan_ns: Option<u64>,
    pub message_bytes: u64,
    pub retransmitted_bytes: u64,
    pub nacks: u64,
    pub timeouts: u64,
}

impl FctSummary {
    pub fn from_records(records: &[FlowRecord]) -> Self {
        let mut fcts: Vec<u64> = records
            .iter()
            .filter_map(|r| r.fct())
            .map(|t| t.0)
            .collect();
        fcts.sort_unstable();
        let first_start = records.iter().filter_map(|r| r.start).min();
        let last_finish = records.iter().filter_map(|r| r.finish).max();
        let makespan = match (first_start, last_finish) {
            (Some(s), Some(f)) => Some((f - s).0),
            _ => None,
        };
        FctSummary {
            flows: records.len(),
            completed: fcts.len(),
            fct_min_ns: fcts.first().copied(),
            fct_max_ns: fcts.last().copied(),
            fct_mean_ns: (!fcts.is_empty())
                .then(|| fcts.iter().map(|&x| x as f64).sum::<f64>() / fcts.len() as f64),
            fct_p50_ns: percentile(&fcts, 0.5),
            fct_p99_ns: percentile(&fcts, 0.99),
            fct_spread_ns: match (fcts.first(), fcts.last()) {
                (Some(a), Some(b)) => Some(b - a),
                _ => None,
            },
            makespan_ns: makespan,
            message_bytes: records.iter().map(|r| r.size).sum(),
            retransmitted_bytes: records.iter().map(|r| r.counters.retransmitted_bytes).sum(),
            nacks: records.iter().map(|r| r.counters.nacks).sum(),
            timeouts: records.iter().map(|r| r.counters.timeouts).sum(),
        }
    }

    pub fn retransmit_fraction(&self) -> f64 {
        if self.message_bytes == 0 {
            0.0
        } else {
            self.retransmitted_bytes as f64 / self.message_bytes as f64
        }
    }
}

/// Completion relative to an ideal time.
pub fn ideal_ratio(actual: SimTime, ideal: SimTime) -> Option<f64> {
    (ideal.0 > 0).then(|| actual.as_f64() / ideal.as_f64())
}

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub schema_version: u32,
    pub complete: bool,
    #[serde(flatten)]
    pub fct: FctSummary,
    pub ideal_ns: u64,
    pub ideal_ratio: Option<f64>,
    pub trims: u64,
    pub drops: u64,
    pub ctrl_drops: u64,
    pub counters: NetCounters,
}

impl RunSummary {
    pub fn new(records: &[FlowRecord], counters: NetCounters, ideal: SimTime) -> Self {
        let fct = FctSummary::from_records(records);
        let complete = fct.completed == fct.flows;
        let ideal_ratio = fct
            .makespan_ns
            .filter(|_| complete)
            .and_then(|m| ideal_ratio(SimTime(m), ideal));
        RunSummary {
            schema_version: SCHEMA_VERSION,
            complete,
            fct,
            ideal_ns: ideal.0,
            ideal_ratio,
            trims: counters.data_trimmed,
            drops: counters.data_dropped,
            ctrl_drops: counters.ctrl_dropped,
            counters,
        }
    }
}
