//! Run configuration files.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use smartt_core::cc::{CcParams, PathFacts};
use smartt_core::topology::{Topology, TopologyError};
use smartt_core::workload::{self, WorkloadError};
use smartt_core::{FatTreeConfig, FlowSpec, NetworkConfig, SimTime, WorkloadSpec};
use thiserror::Error;

use crate::matrix::{self, MatrixError};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: at `{at}`: {msg}")]
    Parse {
        path: PathBuf,
        at: String,
        msg: String,
    },
    #[error("exactly one of `workload` and `connection_matrix` must be given")]
    WorkloadSource,
    #[error("RED thresholds must satisfy 0 <= kmin < kmax <= 1 (got {kmin}, {kmax})")]
    Red { kmin: f64, kmax: f64 },
    #[error("t_end_ns must be positive")]
    TEnd,
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Workload(#[from] WorkloadError),
    #[error(transparent)]
    Cc(#[from] smartt_core::cc::CcParamError),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
}

fn default_seed() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub topology: FatTreeConfig,
    #[serde(default)]
    pub network: NetworkConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workload: Option<WorkloadSpec>,
    /// Schedule file, resolved relative to the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub connection_matrix: Option<PathBuf>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Stop the simulation here even if flows are still running.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_end_ns: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

/// Quantities computed from the topology and tuning, echoed into reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Derived {
    pub network_base_rtt_ns: u64,
    pub bdp_bytes: u64,
    pub queue_capacity_bytes: u64,
    pub rto_ns: u64,
    /// Target RTT and proportional gain of the longest path.
    pub trtt_ns: u64,
    pub pi: f64,
    pub fi: f64,
}

/// A validated configuration with its topology and flow schedule.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub config: RunConfig,
    pub topology: Topology,
    pub flows: Vec<FlowSpec>,
    pub derived: Derived,
}

impl RunConfig {
    pub fn from_json(text: &str, origin: &Path) -> Result<RunConfig, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| ConfigError::Parse {
            path: origin.to_path_buf(),
            at: e.path().to_string(),
            msg: e.inner().to_string(),
        })
    }

    pub fn t_end(&self) -> Option<SimTime> {
        self.t_end_ns.map(SimTime)
    }

    pub fn prepare(&self, base_dir: &Path) -> Result<Prepared, ConfigError> {
        let n = &self.network;
        if !(0.0..1.0).contains(&n.red_kmin_frac)
            || !(n.red_kmin_frac < n.red_kmax_frac && n.red_kmax_frac <= 1.0)
        {
            return Err(ConfigError::Red {
                kmin: n.red_kmin_frac,
                kmax: n.red_kmax_frac,
            });
        }
        if self.t_end_ns == Some(0) {
            return Err(ConfigError::TEnd);
        }
        let topology = Topology::build(&self.topology)?;
        let flows = match (&self.workload, &self.connection_matrix) {
            (Some(spec), None) => workload::generate(spec, &topology, self.seed)?,
            (None, Some(file)) => {
                let flows = matrix::read_file(&base_dir.join(file))?;
                workload::validate_schedule(&flows, &topology)?;
                flows
            }
            _ => return Err(ConfigError::WorkloadSource),
        };
        let derived = derive(&topology, n)?;
        Ok(Prepared {
            config: self.clone(),
            topology,
            flows,
            derived,
        })
    }
}

fn derive(topo: &Topology, n: &NetworkConfig) -> Result<Derived, ConfigError> {
    let facts = PathFacts {
        mtu: topo.mtu(),
        brtt: topo.network_base_rtt(),
        bdp: topo.bdp_bytes(),
        network_bdp: topo.bdp_bytes(),
        network_brtt: topo.network_base_rtt(),
        trimming: n.trimming,
    };
    let p = CcParams::derive(&n.cc, &facts)?;
    Ok(Derived {
        network_base_rtt_ns: topo.network_base_rtt().0,
        bdp_bytes: topo.bdp_bytes(),
        queue_capacity_bytes: n
            .queue_capacity_bytes
            .unwrap_or_else(|| topo.queue_capacity_bytes()),
        rto_ns: p.rto.0,
        trtt_ns: p.trtt.0,
        pi: p.pi,
        fi: p.fi,
    })
}

/// Reads and validates a JSON run configuration.
pub fn load_config(path: &Path) -> Result<Prepared, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let cfg = RunConfig::from_json(&text, path)?;
    cfg.prepare(path.parent().unwrap_or(Path::new(".")))
}
