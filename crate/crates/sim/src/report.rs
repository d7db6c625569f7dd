//! Running an experiment and exporting its results.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use smartt_core::event::SimStats;
use smartt_core::metrics::RunSummary;
use smartt_core::network::{ConservationError, CwndSample, FlowRecord, NetworkError, QueueSample};
use smartt_core::topology::TopologySummary;
use smartt_core::workload::ideal_completion;
use smartt_core::Network;
use thiserror::Error;

use crate::config::{Derived, Prepared, RunConfig};

pub const FLOWS_CSV: &str = "flows.csv";
pub const CWND_CSV: &str = "cwnd_trace.csv";
pub const QUEUES_CSV: &str = "queues.csv";
pub const SUMMARY_JSON: &str = "summary.json";

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Conservation(#[from] ConservationError),
    #[error("writing {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("writing {path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("writing {path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
}

/// Contents of `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    #[serde(flatten)]
    pub run: RunSummary,
    pub sim: SimStats,
    pub topology: TopologySummary,
    pub derived: Derived,
    pub config: RunConfig,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub summary: Summary,
    pub flows: Vec<FlowRecord>,
    pub cwnd: Vec<CwndSample>,
    pub queues: Vec<QueueSample>,
}

pub fn run_experiment(p: &Prepared) -> Result<RunReport, RunError> {
    let cfg = &p.config;
    let mut net = Network::new(
        p.topology.clone(),
        cfg.network.clone(),
        p.flows.clone(),
        cfg.seed,
    )?;
    let sim = match cfg.t_end() {
        Some(t) => net.run_until(t),
        None => net.run(),
    };
    net.check_conservation()?;
    let flows = net.flow_records();
    let ideal = ideal_completion(&p.topology, &p.flows);
    let summary = Summary {
        run: RunSummary::new(&flows, *net.counters(), ideal),
        sim,
        topology: p.topology.summary(),
        derived: p.derived.clone(),
        config: cfg.clone(),
    };
    Ok(RunReport {
        summary,
        flows,
        cwnd: net.cwnd_trace().to_vec(),
        queues: net.queue_trace().to_vec(),
    })
}

#[derive(Debug, Serialize, Deserialize)]
pub struct FlowRow {
    pub flow_id: u32,
    pub src: u32,
    pub dst: u32,
    pub size_bytes: u64,
    pub start_ns: Option<u64>,
    pub finish_ns: Option<u64>,
    pub fct_ns: Option<u64>,
    pub base_rtt_ns: u64,
    pub bytes_received: u64,
    pub packets_sent: u64,
    pub retransmitted_bytes: u64,
    pub nacks: u64,
    pub timeouts: u64,
}

impl From<&FlowRecord> for FlowRow {
    fn from(r: &FlowRecord) -> Self {
        FlowRow {
            flow_id: r.id.0,
            src: r.src.0,
            dst: r.dst.0,
            size_bytes: r.size,
            start_ns: r.start.map(|t| t.0),
            finish_ns: r.finish.map(|t| t.0),
            fct_ns: r.fct().map(|t| t.0),
            base_rtt_ns: r.base_rtt.0,
            bytes_received: r.bytes_received,
            packets_sent: r.counters.packets_sent,
            retransmitted_bytes: r.counters.retransmitted_bytes,
            nacks: r.counters.nacks,
            timeouts: r.counters.timeouts,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CwndRow {
    pub time_ns: u64,
    pub flow_id: u32,
    pub cwnd_bytes: f64,
    pub in_flight_bytes: u64,
    pub acked_bytes: u64,
    pub rtt_ns: Option<u64>,
    pub ecn: bool,
    pub branch: String,
    pub quick_adapt: bool,
}

impl From<&CwndSample> for CwndRow {
    fn from(c: &CwndSample) -> Self {
        CwndRow {
            time_ns: c.time.0,
            flow_id: c.flow.0,
            cwnd_bytes: c.cwnd,
            in_flight_bytes: c.in_flight,
            acked_bytes: c.acked_bytes,
            rtt_ns: c.rtt.map(|t| t.0),
            ecn: c.ecn,
            branch: c.branch.as_str().to_string(),
            quick_adapt: c.quick_adapt,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct QueueRow {
    pub time_ns: u64,
    pub port: u32,
    pub data_bytes: u64,
    pub ctrl_bytes: u64,
}

impl From<&QueueSample> for QueueRow {
    fn from(q: &QueueSample) -> Self {
        QueueRow {
            time_ns: q.time.0,
            port: q.port.0,
            data_bytes: q.data_bytes,
            ctrl_bytes: q.ctrl_bytes,
        }
    }
}

fn write_csv<R: Serialize>(
    path: &Path,
    header: &[&str],
    rows: impl Iterator<Item = R>,
) -> Result<(), RunError> {
    let csv_err = |source| RunError::Csv {
        path: path.to_path_buf(),
        source,
    };
    // the header is written explicitly so empty traces still carry it
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush().map_err(|source| RunError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub const FLOW_COLUMNS: &[&str] = &[
    "flow_id",
    "src",
    "dst",
    "size_bytes",
    "start_ns",
    "finish_ns",
    "fct_ns",
    "base_rtt_ns",
    "bytes_received",
    "packets_sent",
    "retransmitted_bytes",
    "nacks",
    "timeouts",
];
pub const CWND_COLUMNS: &[&str] = &[
    "time_ns",
    "flow_id",
    "cwnd_bytes",
    "in_flight_bytes",
    "acked_bytes",
    "rtt_ns",
    "ecn",
    "branch",
    "quick_adapt",
];
pub const QUEUE_COLUMNS: &[&str] = &["time_ns", "port", "data_bytes", "ctrl_bytes"];

/// Writes the four report files into `dir`, creating it if needed.
pub fn write_report(report: &RunReport, dir: &Path) -> Result<(), RunError> {
    fs::create_dir_all(dir).map_err(|source| RunError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    write_csv(
        &dir.join(FLOWS_CSV),
        FLOW_COLUMNS,
        report.flows.iter().map(FlowRow::from),
    )?;
    write_csv(
        &dir.join(CWND_CSV),
        CWND_COLUMNS,
        report.cwnd.iter().map(CwndRow::from),
    )?;
    write_csv(
        &dir.join(QUEUES_CSV),
        QUEUE_COLUMNS,
        report.queues.iter().map(QueueRow::from),
    )?;
    let path = dir.join(SUMMARY_JSON);
    let file = File::create(&path).map_err(|source| RunError::Io {
        path: path.clone(),
        source,
    })?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, &report.summary).map_err(|source| RunError::Json {
        path: path.clone(),
        source,
    })?;
    writeln!(w)
        .and_then(|_| w.flush())
        .map_err(|source| RunError::Io { path, source })
}
