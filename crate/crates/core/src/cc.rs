//! SMaRTT per-flow congestion control.
//!
//! Every ACK first feeds the QuickAdapt byte counter, the ignore budget and the
//! RTT EWMA. Outside the ignore phase it then gives QuickAdapt and FastIncrease
//! the chance to act, and only when neither does it dispatches on the
//! `(ecn, rtt > trtt)` pair:
//!
//! | ECN | RTT above target | reaction                        |
//! |-----|------------------|---------------------------------|
//! | yes | yes              | multiplicative decrease         |
//! | yes | no               | load-balancer path change only  |
//! | no  | yes              | fair increase                   |
//! | no  | no               | proportional + fair increase    |
//!
//! The window is clamped to `[min_cwnd, max_cwnd]` after every update.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::time::SimTime;

/// Reaction to an ECN-marked ACK whose RTT is below target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EcnLowRtt {
    /// Leave the window alone and let the load balancer reroute.
    #[default]
    NoOp,
    /// Treat it like the high-RTT case (ablation baseline).
    Decrease,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum IncreaseMode {
    /// `fi` scaled by the path BDP relative to the network BDP.
    #[default]
    Fair,
    /// The same constant for every flow regardless of its path.
    Additive,
}

/// How the target RTT is derived from the path's base RTT.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TargetMode {
    /// `trtt = trtt_factor * brtt`.
    #[default]
    PerPath,
    /// `trtt = brtt + (trtt_factor - 1) * network_brtt`: every flow aims at
    /// the same queueing delay.
    SharedQueue,
}

/// Minimum spacing between two multiplicative decreases of one flow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MdSpacing {
    /// Once per the flow's own base RTT.
    #[default]
    PathBrtt,
    /// Once per the network base RTT, the same for every flow.
    NetworkBrtt,
}

/// How often the four core cases touch the window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AdjustMode {
    #[default]
    PerPacket,
    /// Run the core cases on every n-th eligible ACK with deltas scaled by n.
    SampleN(u32),
    /// Accumulate per-ACK deltas and apply them once per base RTT.
    AccumulateWindow,
}

fn d_trtt() -> f64 {
    1.5
}
fn d_max_cwnd() -> f64 {
    1.5
}
fn d_one() -> f64 {
    1.0
}
fn d_fi() -> f64 {
    0.25
}
fn d_k_fast() -> f64 {
    2.0
}
fn d_fast_eps() -> f64 {
    0.1
}
fn d_md_floor() -> f64 {
    0.5
}
fn d_md_gain() -> f64 {
    0.8
}
fn d_alpha() -> f64 {
    1.0 / 16.0
}
fn d_rto() -> f64 {
    7.0
}
fn d_low_acked() -> f64 {
    0.5
}
fn d_true() -> bool {
    true
}

/// Dimensionless knobs; absolute parameters are derived per flow from the
/// path's base RTT and BDP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CcTuning {
    #[serde(default = "d_trtt")]
    pub trtt_factor: f64,
    #[serde(default)]
    pub target_mode: TargetMode,
    #[serde(default = "d_max_cwnd")]
    pub max_cwnd_bdp: f64,
    #[serde(default = "d_one")]
    pub min_cwnd_mtu: f64,
    #[serde(default = "d_one")]
    pub initial_cwnd_bdp: f64,
    #[serde(default = "d_fi")]
    pub fi: f64,
    #[serde(default)]
    pub increase_mode: IncreaseMode,
    /// Overrides `brtt / (trtt - brtt)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pi: Option<f64>,
    #[serde(default = "d_k_fast")]
    pub k_fast: f64,
    /// `rtt <= brtt * (1 + fast_eps)` counts as "at base RTT".
    #[serde(default = "d_fast_eps")]
    pub fast_eps: f64,
    #[serde(default = "d_one")]
    pub qa_scaling: f64,
    #[serde(default = "d_md_floor")]
    pub md_floor: f64,
    #[serde(default = "d_md_gain")]
    pub md_gain: f64,
    #[serde(default)]
    pub md_spacing: MdSpacing,
    #[serde(default = "d_alpha")]
    pub ewma_alpha: f64,
    /// Retransmission timeout in network base RTTs.
    #[serde(default = "d_rto")]
    pub rto_brtt: f64,
    /// Trimless QuickAdapt fires when `avg_rtt > qa_high_rtt_factor * trtt`...
    #[serde(default = "d_one")]
    pub qa_high_rtt_factor: f64,
    /// ...and the bytes acked in the window are below this fraction of cwnd.
    #[serde(default = "d_low_acked")]
    pub qa_low_acked_frac: f64,
    #[serde(default = "d_true")]
    pub quick_adapt: bool,
    #[serde(default = "d_true")]
    pub qa_ignore: bool,
    /// Keep subtracting trimmed bytes from cwnd while the post-collapse
    /// ignore budget is being consumed.
    #[serde(default)]
    pub trim_decrease_in_ignore: bool,
    #[serde(default = "d_true")]
    pub fast_increase: bool,
    #[serde(default)]
    pub ecn_low_rtt: EcnLowRtt,
    #[serde(default)]
    pub adjust: AdjustMode,
}

impl Default for CcTuning {
    fn default() -> Self {
        CcTuning {
            trtt_factor: d_trtt(),
            target_mode: TargetMode::PerPath,
            max_cwnd_bdp: d_max_cwnd(),
            min_cwnd_mtu: d_one(),
            initial_cwnd_bdp: d_one(),
            fi: d_fi(),
            increase_mode: IncreaseMode::Fair,
            pi: None,
            k_fast: d_k_fast(),
            fast_eps: d_fast_eps(),
            qa_scaling: d_one(),
            md_floor: d_md_floor(),
            md_gain: d_md_gain(),
            md_spacing: MdSpacing::PathBrtt,
            ewma_alpha: d_alpha(),
            rto_brtt: d_rto(),
            qa_high_rtt_factor: d_one(),
            qa_low_acked_frac: d_low_acked(),
            quick_adapt: true,
            qa_ignore: true,
            trim_decrease_in_ignore: false,
            fast_increase: true,
            ecn_low_rtt: EcnLowRtt::NoOp,
            adjust: AdjustMode::PerPacket,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CcParamError {
    #[error("trtt_factor must exceed 1 (got {0})")]
    TargetRtt(f64),
    #[error("md_gain must be in (0, 1] (got {0})")]
    MdGain(f64),
    #[error("md_floor must be in (0, 1) (got {0})")]
    MdFloor(f64),
    #[error("ewma_alpha must be in (0, 1] (got {0})")]
    Alpha(f64),
    #[error("min_cwnd {min} exceeds max_cwnd {max}")]
    WindowBounds { min: f64, max: f64 },
    #[error("pi must be positive (got {0})")]
    Pi(f64),
    #[error("sample_n must be at least 1")]
    SampleN,
    #[error("{0} must be positive")]
    NonPositive(&'static str),
}

/// Path facts a flow's parameters are derived from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathFacts {
    pub mtu: u32,
    pub brtt: SimTime,
    pub bdp: u64,
    /// BDP of the longest path; fair-increase scaling is relative to it.
    pub network_bdp: u64,
    pub network_brtt: SimTime,
    pub trimming: bool,
}

/// Absolute per-flow parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct CcParams {
    pub mtu: f64,
    pub bdp: f64,
    pub max_cwnd: f64,
    pub min_cwnd: f64,
    pub initial_cwnd: f64,
    pub brtt: SimTime,
    pub trtt: SimTime,
    /// Effective fair-increase constant (after any BDP scaling).
    pub fi: f64,
    pub pi: f64,
    pub k_fast: f64,
    pub fast_eps: f64,
    pub qa_scaling: f64,
    pub md_floor: f64,
    pub md_gain: f64,
    /// Never shorter than `brtt`.
    pub md_interval: SimTime,
    pub ewma_alpha: f64,
    pub rto: SimTime,
    pub trimming: bool,
    pub qa_high_rtt: f64,
    pub qa_low_acked_frac: f64,
    pub quick_adapt: bool,
    pub qa_ignore: bool,
    pub trim_decrease_in_ignore: bool,
    pub fast_increase: bool,
    pub ecn_low_rtt: EcnLowRtt,
    pub adjust: AdjustMode,
}

impl CcParams {
    pub fn derive(t: &CcTuning, path: &PathFacts) -> Result<CcParams, CcParamError> {
        if t.trtt_factor.is_nan() || t.trtt_factor <= 1.0 {
            return Err(CcParamError::TargetRtt(t.trtt_factor));
        }
        if !(t.md_gain > 0.0 && t.md_gain <= 1.0) {
            return Err(CcParamError::MdGain(t.md_gain));
        }
        if !(t.md_floor > 0.0 && t.md_floor < 1.0) {
            return Err(CcParamError::MdFloor(t.md_floor));
        }
        if !(t.ewma_alpha > 0.0 && t.ewma_alpha <= 1.0) {
            return Err(CcParamError::Alpha(t.ewma_alpha));
        }
        if matches!(t.adjust, AdjustMode::SampleN(0)) {
            return Err(CcParamError::SampleN);
        }
        for (name, v) in [
            ("fi", t.fi),
            ("k_fast", t.k_fast),
            ("qa_scaling", t.qa_scaling),
            ("rto_brtt", t.rto_brtt),
            ("max_cwnd_bdp", t.max_cwnd_bdp),
            ("min_cwnd_mtu", t.min_cwnd_mtu),
            ("initial_cwnd_bdp", t.initial_cwnd_bdp),
        ] {
            if v.is_nan() || v <= 0.0 {
                return Err(CcParamError::NonPositive(name));
            }
        }
        let mtu = path.mtu as f64;
        let bdp = path.bdp as f64;
        let max_cwnd = t.max_cwnd_bdp * bdp;
        let min_cwnd = t.min_cwnd_mtu * mtu;
        if min_cwnd > max_cwnd {
            return Err(CcParamError::WindowBounds {
                min: min_cwnd,
                max: max_cwnd,
            });
        }
        let trtt = match t.target_mode {
            TargetMode::PerPath => path.brtt.mul_f64(t.trtt_factor),
            TargetMode::SharedQueue => path.brtt + path.network_brtt.mul_f64(t.trtt_factor - 1.0),
        };
        let pi = t.pi.unwrap_or_else(|| proportional_gain(path.brtt, trtt));
        if pi.is_nan() || pi <= 0.0 {
            return Err(CcParamError::Pi(pi));
        }
        let fi = match t.increase_mode {
            IncreaseMode::Fair => t.fi * bdp / path.network_bdp.max(1) as f64,
            IncreaseMode::Additive => t.fi,
        };
        Ok(CcParams {
            mtu,
            bdp,
            max_cwnd,
            min_cwnd,
            initial_cwnd: (t.initial_cwnd_bdp * bdp).clamp(min_cwnd, max_cwnd),
            brtt: path.brtt,
            trtt,
            fi,
            pi,
            k_fast: t.k_fast,
            fast_eps: t.fast_eps,
            qa_scaling: t.qa_scaling,
            md_floor: t.md_floor,
            md_gain: t.md_gain,
            md_interval: match t.md_spacing {
                MdSpacing::PathBrtt => path.brtt,
                MdSpacing::NetworkBrtt => path.brtt.max(path.network_brtt),
            },
            ewma_alpha: t.ewma_alpha,
            rto: path.network_brtt.mul_f64(t.rto_brtt),
            trimming: path.trimming,
            qa_high_rtt: t.qa_high_rtt_factor * trtt.as_f64(),
            qa_low_acked_frac: t.qa_low_acked_frac,
            quick_adapt: t.quick_adapt,
            qa_ignore: t.qa_ignore,
            trim_decrease_in_ignore: t.trim_decrease_in_ignore,
            fast_increase: t.fast_increase,
            ecn_low_rtt: t.ecn_low_rtt,
            adjust: t.adjust,
        })
    }
}

/// `brtt / (trtt - brtt)`: caps the proportional increase at one MTU per RTT.
pub fn proportional_gain(brtt: SimTime, trtt: SimTime) -> f64 {
    brtt.as_f64() / (trtt.as_f64() - brtt.as_f64())
}

/// Multiplicative-decrease factor, bounded to `[floor, 1]`.
pub fn md_factor(avg_rtt: f64, trtt: f64, floor: f64, gain: f64) -> f64 {
    let raw = 1.0 - (avg_rtt - trtt) / avg_rtt * gain;
    raw.clamp(floor, 1.0)
}

/// Feedback carried by one ACK.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AckInfo {
    /// Data bytes the ACK covers.
    pub size: u64,
    pub ecn: bool,
    pub rtt: SimTime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Ignored,
    QuickAdapt,
    FastIncrease,
    MultiplicativeDecrease,
    PathChange,
    FairIncrease,
    ProportionalIncrease,
    /// Sampling skipped this ACK or deltas were deferred.
    Deferred,
    Trim,
    Timeout,
}

impl Branch {
    pub fn as_str(self) -> &'static str {
        match self {
            Branch::Ignored => "ignored",
            Branch::QuickAdapt => "quick_adapt",
            Branch::FastIncrease => "fast_increase",
            Branch::MultiplicativeDecrease => "md",
            Branch::PathChange => "path_change",
            Branch::FairIncrease => "fair_increase",
            Branch::ProportionalIncrease => "proportional_increase",
            Branch::Deferred => "deferred",
            Branch::Trim => "trim",
            Branch::Timeout => "timeout",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CcDecision {
    pub delta: f64,
    pub lb_path_change: bool,
    pub branch: Branch,
    /// QuickAdapt collapsed the window during this update.
    pub quick_adapt: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowCcState {
    pub cwnd: f64,
    pub in_flight: u64,
    /// EWMA of RTT samples in ns; `None` until the first sample.
    pub avg_rtt: Option<f64>,
    pub last_md_at: Option<SimTime>,
    pub qa_end: Option<SimTime>,
    pub qa_acked: u64,
    pub trigger_qa: bool,
    pub bytes_to_ignore: u64,
    pub bytes_ignored: u64,
    pub fi_count: u64,
    pub fi_active: bool,
    sample_count: u32,
    acc_increase: f64,
    acc_md: Option<f64>,
    acc_since: Option<SimTime>,
    /// Timestamps of QuickAdapt collapses and multiplicative decreases, kept
    /// for spacing checks.
    pub last_qa_at: Option<SimTime>,
}

impl FlowCcState {
    pub fn new(p: &CcParams) -> Self {
        FlowCcState {
            cwnd: p.initial_cwnd,
            in_flight: 0,
            avg_rtt: None,
            last_md_at: None,
            qa_end: None,
            qa_acked: 0,
            trigger_qa: false,
            bytes_to_ignore: 0,
            bytes_ignored: 0,
            fi_count: 0,
            fi_active: false,
            sample_count: 0,
            acc_increase: 0.0,
            acc_md: None,
            acc_since: None,
            last_qa_at: None,
        }
    }

    pub fn in_ignore_phase(&self) -> bool {
        self.bytes_ignored < self.bytes_to_ignore
    }

    pub fn on_sent(&mut self, bytes: u64) {
        self.in_flight += bytes;
    }

    /// Removes bytes from flight without any congestion reaction.
    pub fn on_left_flight(&mut self, bytes: u64) {
        debug_assert!(self.in_flight >= bytes, "in_flight underflow");
        self.in_flight = self.in_flight.saturating_sub(bytes);
    }

    /// Full per-ACK update. The caller has already removed the ACKed bytes
    /// from `in_flight`.
    pub fn on_ack(&mut self, p: &CcParams, a: &AckInfo, now: SimTime) -> CcDecision {
        let before = self.cwnd;
        self.qa_acked += a.size;
        self.note_ignored(a.size);
        self.update_avg_rtt(p, a.rtt);

        let mut decision = CcDecision {
            delta: 0.0,
            lb_path_change: false,
            branch: Branch::Ignored,
            quick_adapt: false,
        };
        if !self.in_ignore_phase() {
            let adapted = p.quick_adapt && self.quick_adapt(p, now);
            let increased = p.fast_increase && self.fast_increase(p, a);
            if adapted {
                decision.branch = Branch::QuickAdapt;
                decision.quick_adapt = true;
            } else if increased {
                decision.branch = Branch::FastIncrease;
            } else {
                let (branch, lb) = self.adjust(p, a, now);
                decision.branch = branch;
                decision.lb_path_change = lb;
            }
        }
        self.clamp(p);
        decision.delta = self.cwnd - before;
        decision
    }

    /// Trim feedback (NACK) for a data packet of `size` bytes. The caller has
    /// already taken the packet out of flight and queued its retransmission.
    pub fn on_trim(&mut self, p: &CcParams, size: u64, now: SimTime) -> CcDecision {
        let before = self.cwnd;
        let ignoring = self.in_ignore_phase();
        self.note_ignored(size);
        if !ignoring || p.trim_decrease_in_ignore {
            self.cwnd -= size as f64;
        }
        let mut adapted = false;
        if !self.in_ignore_phase() && p.quick_adapt {
            self.trigger_qa = true;
            adapted = self.quick_adapt(p, now);
        }
        self.clamp(p);
        CcDecision {
            delta: self.cwnd - before,
            lb_path_change: true,
            branch: if adapted {
                Branch::QuickAdapt
            } else {
                Branch::Trim
            },
            quick_adapt: adapted,
        }
    }

    /// Retransmission timeout for `size` bytes; no direct window change.
    pub fn on_timeout(&mut self, p: &CcParams, size: u64, now: SimTime) -> CcDecision {
        let before = self.cwnd;
        self.note_ignored(size);
        let mut adapted = false;
        if !self.in_ignore_phase() && p.quick_adapt {
            self.trigger_qa = true;
            adapted = self.quick_adapt(p, now);
        }
        self.clamp(p);
        CcDecision {
            delta: self.cwnd - before,
            lb_path_change: true,
            branch: if adapted {
                Branch::QuickAdapt
            } else {
                Branch::Timeout
            },
            quick_adapt: adapted,
        }
    }

    fn note_ignored(&mut self, size: u64) {
        if self.bytes_ignored < self.bytes_to_ignore {
            self.bytes_ignored += size;
        }
    }

    fn update_avg_rtt(&mut self, p: &CcParams, rtt: SimTime) {
        let sample = rtt.as_f64();
        self.avg_rtt = Some(match self.avg_rtt {
            None => sample,
            Some(avg) => avg + p.ewma_alpha * (sample - avg),
        });
    }

    /// Window collapse to the bytes delivered in the last measurement window,
    /// at most once per target RTT. Returns true if the window was collapsed.
    pub fn quick_adapt(&mut self, p: &CcParams, now: SimTime) -> bool {
        let Some(end) = self.qa_end else {
            // first call only opens the measurement window
            self.qa_end = Some(now + p.trtt);
            self.qa_acked = 0;
            return false;
        };
        if now < end {
            return false;
        }
        if !p.trimming {
            self.qa_trimless_trigger(p);
        }
        let mut adapted = false;
        if self.trigger_qa {
            self.trigger_qa = false;
            adapted = true;
            self.cwnd = (self.qa_acked as f64 * p.qa_scaling).max(p.mtu);
            if p.qa_ignore {
                self.bytes_to_ignore = self.in_flight;
                self.bytes_ignored = 0;
            }
            self.last_qa_at = Some(now);
            // stale deltas from before the collapse must not be replayed
            self.acc_increase = 0.0;
            self.acc_md = None;
        }
        self.qa_end = Some(now + p.trtt);
        self.qa_acked = 0;
        adapted
    }

    /// Without trims, high delay together with low delivered bytes stands in
    /// for the loss signal.
    pub fn qa_trimless_trigger(&mut self, p: &CcParams) -> bool {
        let high = self.avg_rtt.is_some_and(|avg| avg > p.qa_high_rtt);
        let starved = (self.qa_acked as f64) < p.qa_low_acked_frac * self.cwnd;
        if high && starved {
            self.trigger_qa = true;
        }
        high && starved
    }

    /// Grows the window by `k_fast` MTUs per ACK once a full window of
    /// consecutive ACKs came back unmarked at base RTT.
    pub fn fast_increase(&mut self, p: &CcParams, a: &AckInfo) -> bool {
        let at_base = a.rtt.as_f64() <= p.brtt.as_f64() * (1.0 + p.fast_eps);
        if at_base && !a.ecn {
            self.fi_count += a.size;
            if self.fi_count as f64 > self.cwnd || self.fi_active {
                self.cwnd += p.k_fast * p.mtu;
                self.fi_active = true;
                return true;
            }
        } else {
            self.fi_count = 0;
            self.fi_active = false;
        }
        false
    }

    fn adjust(&mut self, p: &CcParams, a: &AckInfo, now: SimTime) -> (Branch, bool) {
        match p.adjust {
            AdjustMode::PerPacket => self.core_cases(p, a, now, 1.0),
            AdjustMode::SampleN(n) => {
                self.sample_count += 1;
                if self.sample_count < n {
                    return (Branch::Deferred, a.ecn);
                }
                self.sample_count = 0;
                self.core_cases(p, a, now, n as f64)
            }
            AdjustMode::AccumulateWindow => self.accumulate(p, a, now),
        }
    }

    /// Dispatch on `(ecn, rtt > trtt)`. `scale` multiplies the covered bytes
    /// when only every n-th ACK is processed.
    pub fn core_cases(
        &mut self,
        p: &CcParams,
        a: &AckInfo,
        now: SimTime,
        scale: f64,
    ) -> (Branch, bool) {
        let high = a.rtt > p.trtt;
        let size = a.size as f64 * scale;
        match (a.ecn, high) {
            (true, true) => {
                self.multiplicative_decrease(p, now);
                (Branch::MultiplicativeDecrease, true)
            }
            (true, false) => match p.ecn_low_rtt {
                EcnLowRtt::NoOp => (Branch::PathChange, true),
                EcnLowRtt::Decrease => {
                    self.multiplicative_decrease(p, now);
                    (Branch::MultiplicativeDecrease, true)
                }
            },
            (false, true) => {
                self.cwnd += self.fair_increase_delta(p, size);
                (Branch::FairIncrease, false)
            }
            (false, false) => {
                self.cwnd += self.proportional_increase_delta(p, size, a.rtt);
                self.cwnd += self.fair_increase_delta(p, size);
                (Branch::ProportionalIncrease, false)
            }
        }
    }

    /// Applies the decrease if at least `md_interval` passed since the last.
    /// Returns the factor applied, if any.
    pub fn multiplicative_decrease(&mut self, p: &CcParams, now: SimTime) -> Option<f64> {
        if self.last_md_at.is_some_and(|t| now < t + p.md_interval) {
            return None;
        }
        let avg = self.avg_rtt.unwrap_or(p.trtt.as_f64());
        let f = md_factor(avg, p.trtt.as_f64(), p.md_floor, p.md_gain);
        self.cwnd *= f;
        self.last_md_at = Some(now);
        Some(f)
    }

    pub fn fair_increase_delta(&self, p: &CcParams, size: f64) -> f64 {
        size / self.cwnd * p.mtu * p.fi
    }

    pub fn proportional_increase_delta(&self, p: &CcParams, size: f64, rtt: SimTime) -> f64 {
        let rtt = rtt.as_f64().max(1.0);
        let gap = (p.trtt.as_f64() - rtt).max(0.0);
        (gap / rtt * (size / self.cwnd) * p.mtu * p.pi).min(size)
    }

    fn accumulate(&mut self, p: &CcParams, a: &AckInfo, now: SimTime) -> (Branch, bool) {
        let since = *self.acc_since.get_or_insert(now);
        let high = a.rtt > p.trtt;
        let size = a.size as f64;
        let (branch, lb) = match (a.ecn, high) {
            (true, _) if high || p.ecn_low_rtt == EcnLowRtt::Decrease => {
                if self.acc_md.is_none()
                    && !self.last_md_at.is_some_and(|t| now < t + p.md_interval)
                {
                    let avg = self.avg_rtt.unwrap_or(p.trtt.as_f64());
                    self.acc_md = Some(md_factor(avg, p.trtt.as_f64(), p.md_floor, p.md_gain));
                }
                (Branch::Deferred, true)
            }
            (true, _) => (Branch::PathChange, true),
            (false, true) => {
                self.acc_increase += self.fair_increase_delta(p, size);
                (Branch::Deferred, false)
            }
            (false, false) => {
                self.acc_increase += self.proportional_increase_delta(p, size, a.rtt);
                self.acc_increase += self.fair_increase_delta(p, size);
                (Branch::Deferred, false)
            }
        };
        if now >= since + p.brtt {
            let mut applied = Branch::FairIncrease;
            if let Some(f) = self.acc_md.take() {
                self.cwnd *= f;
                self.last_md_at = Some(now);
                applied = Branch::MultiplicativeDecrease;
            }
            self.cwnd += self.acc_increase;
            self.acc_increase = 0.0;
            self.acc_since = Some(now);
            return (applied, lb);
        }
        (branch, lb)
    }

    fn clamp(&mut self, p: &CcParams) {
        self.cwnd = self.cwnd.clamp(p.min_cwnd, p.max_cwnd);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MTU: f64 = 4096.0;
    const BRTT: u64 = 8_000;

    fn facts() -> PathFacts {
        PathFacts {
            mtu: 4096,
            brtt: SimTime(BRTT),
            bdp: 800_000,
            network_bdp: 800_000,
            network_brtt: SimTime(BRTT),
            trimming: true,
        }
    }

    fn params() -> CcParams {
        CcParams::derive(&CcTuning::default(), &facts()).unwrap()
    }

    fn ack(size: u64, ecn: bool, rtt: u64) -> AckInfo {
        AckInfo {
            size,
            ecn,
            rtt: SimTime(rtt),
        }
    }

    #[test]
    fn default_derivation() {
        let p = params();
        assert_eq!(p.trtt, SimTime(12_000));
        assert_eq!(p.pi, 2.0);
        assert_eq!(p.max_cwnd, 1_200_000.0);
        assert_eq!(p.min_cwnd, MTU);
        assert_eq!(p.initial_cwnd, 800_000.0);
        assert_eq!(p.rto, SimTime(56_000));
        assert_eq!(p.fi, 0.25);
    }

    #[test]
    fn shared_queue_target_and_network_md_spacing() {
        let f = PathFacts {
            brtt: SimTime(4_000),
            ..facts()
        };
        let t = CcTuning {
            target_mode: TargetMode::SharedQueue,
            md_spacing: MdSpacing::NetworkBrtt,
            ..Default::default()
        };
        let p = CcParams::derive(&t, &f).unwrap();
        assert_eq!(p.trtt, SimTime(8_000));
        assert_eq!(p.md_interval, SimTime(BRTT));
        let p = CcParams::derive(&CcTuning::default(), &f).unwrap();
        assert_eq!(p.trtt, SimTime(6_000));
        assert_eq!(p.md_interval, SimTime(4_000));
    }

    #[test]
    fn trtt_factor_two_gives_pi_one() {
        let t = CcTuning {
            trtt_factor: 2.0,
            ..Default::default()
        };
        assert_eq!(CcParams::derive(&t, &facts()).unwrap().pi, 1.0);
    }

    #[test]
    fn fair_mode_scales_fi_by_path_bdp() {
        let mut f = facts();
        f.bdp = 400_000;
        let p = CcParams::derive(&CcTuning::default(), &f).unwrap();
        assert_eq!(p.fi, 0.125);
        let t = CcTuning {
            increase_mode: IncreaseMode::Additive,
            ..Default::default()
        };
        assert_eq!(CcParams::derive(&t, &f).unwrap().fi, 0.25);
    }

    #[test]
    fn invalid_tuning_rejected() {
        let bad = CcTuning {
            trtt_factor: 1.0,
            ..Default::default()
        };
        assert!(matches!(
            CcParams::derive(&bad, &facts()),
            Err(CcParamError::TargetRtt(_))
        ));
        let bad = CcTuning {
            md_gain: 1.5,
            ..Default::default()
        };
        assert!(CcParams::derive(&bad, &facts()).is_err());
        let bad = CcTuning {
            adjust: AdjustMode::SampleN(0),
            ..Default::default()
        };
        assert_eq!(CcParams::derive(&bad, &facts()), Err(CcParamError::SampleN));
    }

    #[test]
    fn md_factor_examples() {
        let t = 12_000.0;
        assert!((md_factor(2.0 * t, t, 0.5, 0.8) - 0.6).abs() < 1e-12);
        assert_eq!(md_factor(10.0 * t, t, 0.5, 0.8), 0.5);
        assert_eq!(md_factor(t, t, 0.5, 0.8), 1.0);
    }

    #[test]
    fn md_at_most_once_per_brtt() {
        let p = params();
        let mut s = FlowCcState::new(&p);
        s.avg_rtt = Some(24_000.0);
        assert_eq!(s.multiplicative_decrease(&p, SimTime(100_000)), Some(0.6));
        assert_eq!(s.multiplicative_decrease(&p, SimTime(107_999)), None);
        assert!(s.multiplicative_decrease(&p, SimTime(108_000)).is_some());
    }

    #[test]
    fn fair_increase_examples() {
        let p = params();
        let mut s = FlowCcState::new(&p);
        s.cwnd = MTU;
        assert_eq!(s.fair_increase_delta(&p, MTU), MTU * 0.25);
        s.cwnd = 10.0 * MTU;
        assert!((s.fair_increase_delta(&p, MTU) - MTU * 0.25 / 10.0).abs() < 1e-9);
    }

    #[test]
    fn proportional_increase_examples() {
        let p = params();
        let mut s = FlowCcState::new(&p);
        s.cwnd = 20.0 * MTU;
        // rtt = brtt, pi = 2: ((trtt-brtt)/brtt) * pi = 1
        let d = s.proportional_increase_delta(&p, MTU, SimTime(BRTT));
        assert!((d - MTU / 20.0).abs() < 1e-9);
        assert_eq!(s.proportional_increase_delta(&p, MTU, p.trtt), 0.0);
        // capped by the ACKed size for tiny windows
        s.cwnd = 64.0;
        assert_eq!(s.proportional_increase_delta(&p, 64.0, SimTime(BRTT)), 64.0);
    }

    #[test]
    fn core_case_dispatch() {
        let p = params();
        let now = SimTime(1_000_000);
        let mut s = FlowCcState::new(&p);
        s.cwnd = 100.0 * MTU;
        s.avg_rtt = Some(24_000.0);
        let (b, lb) = s.core_cases(&p, &ack(4096, true, 24_000), now, 1.0);
        assert_eq!((b, lb), (Branch::MultiplicativeDecrease, true));
        assert!((s.cwnd - 60.0 * MTU).abs() < 1e-6);

        let before = s.cwnd;
        let (b, lb) = s.core_cases(&p, &ack(4096, true, 10_800), now, 1.0);
        assert_eq!((b, lb), (Branch::PathChange, true));
        assert_eq!(s.cwnd, before);

        let (b, _) = s.core_cases(&p, &ack(4096, false, 20_000), now, 1.0);
        assert_eq!(b, Branch::FairIncrease);
        let (b, _) = s.core_cases(&p, &ack(4096, false, BRTT), now, 1.0);
        assert_eq!(b, Branch::ProportionalIncrease);
    }

    #[test]
    fn rtt_equal_to_target_counts_as_below() {
        let p = params();
        let mut s = FlowCcState::new(&p);
        let (b, _) = s.core_cases(&p, &ack(4096, true, p.trtt.0), SimTime(0), 1.0);
        assert_eq!(b, Branch::PathChange);
        let (b, _) = s.core_cases(&p, &ack(4096, false, p.trtt.0), SimTime(0), 1.0);
        assert_eq!(b, Branch::ProportionalIncrease);
    }

    #[test]
    fn ecn_low_rtt_decrease_variant() {
        let t = CcTuning {
            ecn_low_rtt: EcnLowRtt::Decrease,
            ..Default::default()
        };
        let p = CcParams::derive(&t, &facts()).unwrap();
        let mut s = FlowCcState::new(&p);
        s.avg_rtt = Some(24_000.0);
        let (b, _) = s.core_cases(&p, &ack(4096, true, 9_000), SimTime(0), 1.0);
        assert_eq!(b, Branch::MultiplicativeDecrease);
    }

    #[test]
    fn ignore_phase_suppresses_reaction_but_tracks_rtt() {
        let p = params();
        let mut s = FlowCcState::new(&p);
        s.cwnd = 50.0 * MTU;
        s.bytes_to_ignore = 10 * 4096;
        s.avg_rtt = Some(8_000.0);
        let d = s.on_ack(&p, &ack(4096, true, 40_000), SimTime(1_000));
        assert_eq!(d.branch, Branch::Ignored);
        assert_eq!(d.delta, 0.0);
        assert!(s.avg_rtt.unwrap() > 8_000.0);
        assert_eq!(s.bytes_ignored, 4096);
    }

    #[test]
    fn fast_increase_after_clean_window() {
        let p = params();
        let mut s = FlowCcState::new(&p);
        s.cwnd = 4.0 * MTU;
        s.qa_end = Some(SimTime::MAX);
        let mut now = SimTime(0);
        // clean base-RTT ACKs fill the counter; FI fires once it passes cwnd
        loop {
            now += SimTime(100);
            let before = s.cwnd;
            let would_exceed = (s.fi_count + 4096) as f64 > before;
            let d = s.on_ack(&p, &ack(4096, false, BRTT), now);
            if would_exceed {
                assert_eq!(d.branch, Branch::FastIncrease);
                assert_eq!(s.cwnd, before + 2.0 * MTU);
                break;
            }
            assert_ne!(d.branch, Branch::FastIncrease);
        }
        // stays active while the path remains clean
        let before = s.cwnd;
        let d = s.on_ack(&p, &ack(4096, false, BRTT), now + SimTime(100));
        assert_eq!(d.branch, Branch::FastIncrease);
        assert_eq!(s.cwnd, before + 2.0 * MTU);
    }

    #[test]
    fn fast_increase_resets_on_mark_or_delay() {
        let p = params();
        let mut s = FlowCcState::new(&p);
        s.cwnd = 2.0 * MTU;
        s.fi_count = 3 * 4096;
        s.fi_active = true;
        assert!(!s.fast_increase(&p, &ack(4096, true, BRTT)));
        assert_eq!((s.fi_count, s.fi_active), (0, false));
        s.fi_count = 3 * 4096;
        assert!(!s.fast_increase(&p, &ack(4096, false, BRTT * 14 / 10)));
        assert_eq!(s.fi_count, 0);
    }

    #[test]
    fn clamp_to_max_window() {
        let p = params();
        let mut s = FlowCcState::new(&p);
        s.cwnd = p.max_cwnd - 1.0;
        s.fi_active = true;
        s.qa_end = Some(SimTime::MAX);
        s.on_ack(&p, &ack(4096, false, BRTT), SimTime(5));
        assert_eq!(s.cwnd, p.max_cwnd);
    }

    #[test]
    fn quick_adapt_first_window_never_collapses() {
        let p = params();
        let mut s = FlowCcState::new(&p);
        s.trigger_qa = true;
        assert!(!s.quick_adapt(&p, SimTime(0)));
        assert_eq!(s.qa_end, Some(p.trtt));
        assert!(s.trigger_qa);
    }

    #[test]
    fn quick_adapt_with_nothing_acked_drops_to_mtu() {
        let p = params();
        let mut s = FlowCcState::new(&p);
        s.qa_end = Some(SimTime(10));
        s.trigger_qa = true;
        s.in_flight = 300_000;
        assert!(s.quick_adapt(&p, SimTime(10)));
        assert_eq!(s.cwnd, MTU);
        assert_eq!(s.bytes_to_ignore, 300_000);
        assert_eq!(s.bytes_ignored, 0);
        assert!(!s.trigger_qa);
    }

    #[test]
    fn trim_sets_trigger_and_collapses_at_window_end() {
        let p = params();
        let mut s = FlowCcState::new(&p);
        let start = SimTime(1_000);
        // opens the window
        let d = s.on_trim(&p, 4096, start);
        assert_eq!(d.branch, Branch::Trim);
        assert!(s.trigger_qa);
        assert_eq!(s.cwnd, 800_000.0 - 4096.0);
        s.in_flight = 100_000;
        s.qa_acked = 50_000;
        let d = s.on_ack(&p, &ack(4096, true, 20_000), start + p.trtt);
        assert_eq!(d.branch, Branch::QuickAdapt);
        assert_eq!(s.cwnd, 54_096.0);
    }

    #[test]
    fn trim_during_ignore_does_not_retrigger() {
        let p = params();
        let mut s = FlowCcState::new(&p);
        s.cwnd = 10.0 * MTU;
        s.bytes_to_ignore = 100_000;
        s.qa_end = Some(SimTime(0));
        s.on_trim(&p, 4096, SimTime(5));
        assert!(!s.trigger_qa);
        assert_eq!(s.cwnd, 10.0 * MTU);
    }

    #[test]
    fn trim_decrease_in_ignore_is_optional() {
        let mut p = params();
        p.trim_decrease_in_ignore = true;
        let mut s = FlowCcState::new(&p);
        s.cwnd = 10.0 * MTU;
        s.bytes_to_ignore = 100_000;
        s.on_trim(&p, 4096, SimTime(5));
        assert!(!s.trigger_qa);
        assert_eq!(s.cwnd, 9.0 * MTU);
    }

    #[test]
    fn trim_cannot_push_below_mtu() {
        let p = params();
        let mut s = FlowCcState::new(&p);
        s.cwnd = MTU;
        s.on_trim(&p, 4096, SimTime(5));
        assert_eq!(s.cwnd, MTU);
    }

    #[test]
    fn trimless_trigger_rule() {
        let mut f = facts();
        f.trimming = false;
        let p = CcParams::derive(&CcTuning::default(), &f).unwrap();
        let mut s = FlowCcState::new(&p);
        s.cwnd = 100.0 * MTU;
        s.avg_rtt = Some(2.0 * p.trtt.as_f64());
        s.qa_acked = (0.2 * s.cwnd) as u64;
        assert!(s.qa_trimless_trigger(&p));
        let mut s = FlowCcState::new(&p);
        s.avg_rtt = Some(p.brtt.as_f64());
        s.qa_acked = 0;
        assert!(!s.qa_trimless_trigger(&p));
    }

    #[test]
    fn sample_n_processes_every_nth() {
        let t = CcTuning {
            adjust: AdjustMode::SampleN(4),
            fast_increase: false,
            ..Default::default()
        };
        let p = CcParams::derive(&t, &facts()).unwrap();
        let mut s = FlowCcState::new(&p);
        s.cwnd = 20.0 * MTU;
        s.qa_end = Some(SimTime::MAX);
        let mut branches = alloc::vec::Vec::new();
        for i in 0..8 {
            branches.push(s.on_ack(&p, &ack(4096, false, 20_000), SimTime(i)).branch);
        }
        let acted = branches
            .iter()
            .filter(|b| **b == Branch::FairIncrease)
            .count();
        assert_eq!(acted, 2);
    }

    #[test]
    fn accumulate_applies_once_per_brtt() {
        let t = CcTuning {
            adjust: AdjustMode::AccumulateWindow,
            fast_increase: false,
            ..Default::default()
        };
        let p = CcParams::derive(&t, &facts()).unwrap();
        let mut s = FlowCcState::new(&p);
        s.cwnd = 20.0 * MTU;
        s.qa_end = Some(SimTime::MAX);
        let mut changes = alloc::vec::Vec::new();
        for i in 0..40u64 {
            let before = s.cwnd;
            s.on_ack(&p, &ack(4096, false, 20_000), SimTime(i * 500));
            if s.cwnd != before {
                changes.push(i * 500);
            }
        }
        assert!(!changes.is_empty());
        for w in changes.windows(2) {
            assert!(w[1] - w[0] >= BRTT);
        }
    }
}
