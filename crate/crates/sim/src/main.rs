use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use smartt_sim::sweep::{parse_value, run_sweep};
use smartt_sim::{load_config, matrix, render, run_experiment, write_report, ChartKind};

#[derive(Parser)]
#[command(
    name = "smartt",
    version,
    about = "Packet-level datacenter congestion-control simulator"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one experiment and write its report.
    Run {
        config: PathBuf,
        /// Output directory; overrides `output_dir` in the config.
        #[arg(short, long)]
        out: Option<PathBuf>,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Also render every chart into the output directory.
        #[arg(long)]
        plot: bool,
    },
    /// Render charts from a report directory.
    Plot {
        dir: PathBuf,
        /// fct_cdf, cwnd_timeseries, queue_timeseries or fairness_bar; all when omitted.
        #[arg(short, long)]
        kind: Vec<String>,
        /// Directory for the SVG files; defaults to the report directory.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Run a config once per value of one parameter.
    Sweep {
        config: PathBuf,
        /// Dotted config path, e.g. `network.cc.fi`.
        #[arg(short, long)]
        param: String,
        /// Comma-separated values, parsed as JSON where possible.
        #[arg(short, long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Write the flow schedule of a config as a connection matrix.
    Matrix {
        config: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
}

fn plot_all(dir: &Path, out: &Path, kinds: &[ChartKind]) -> Result<(), Box<dyn std::error::Error>> {
    std::fs::create_dir_all(out)?;
    for &k in kinds {
        let file = out.join(format!("{k}.svg"));
        render(k, dir, &file)?;
        println!("wrote {}", file.display());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Box<dyn std::error::Error>> {
    match cli.cmd {
        Cmd::Run {
            config,
            out,
            seed,
            plot,
        } => {
            let mut prepared = load_config(&config)?;
            if let Some(s) = seed {
                prepared.config.seed = s;
                if let Some(w) = &prepared.config.workload {
                    prepared.flows = smartt_core::workload::generate(w, &prepared.topology, s)?;
                }
            }
            let dir = out
                .or_else(|| prepared.config.output_dir.clone())
                .ok_or("no output directory: pass --out or set output_dir")?;
            let report = run_experiment(&prepared)?;
            write_report(&report, &dir)?;
            let s = &report.summary.run;
            println!(
                "{} of {} flows completed; max FCT {} ns; ideal ratio {}",
                s.fct.completed,
                s.fct.flows,
                s.fct.fct_max_ns.map_or("-".into(), |v| v.to_string()),
                s.ideal_ratio.map_or("-".into(), |r| format!("{r:.3}")),
            );
            println!("report in {}", dir.display());
            if plot {
                let kinds: Vec<ChartKind> = ChartKind::ALL
                    .into_iter()
                    .filter(|k| *k != ChartKind::QueueTimeseries || !report.queues.is_empty())
                    .filter(|k| *k != ChartKind::CwndTimeseries || !report.cwnd.is_empty())
                    .collect();
                plot_all(&dir, &dir, &kinds)?;
            }
            if !s.complete {
                return Err("simulation ended before every flow completed".into());
            }
        }
        Cmd::Plot { dir, kind, out } => {
            let kinds = if kind.is_empty() {
                ChartKind::ALL.to_vec()
            } else {
                kind.iter().map(|k| k.parse()).collect::<Result<_, _>>()?
            };
            plot_all(&dir, out.as_deref().unwrap_or(&dir), &kinds)?;
        }
        Cmd::Sweep {
            config,
            param,
            values,
            out,
        } => {
            let values: Vec<_> = values.iter().map(|v| parse_value(v)).collect();
            let rows = run_sweep(&config, &param, &values, &out)?;
            for r in &rows {
                println!(
                    "{param}={}: max FCT {} ns, ideal ratio {}",
                    r.value,
                    r.fct_max_ns.map_or("-".into(), |v| v.to_string()),
                    r.ideal_ratio.map_or("-".into(), |x| format!("{x:.3}")),
                );
            }
            println!("summary in {}", out.join("sweep.csv").display());
        }
        Cmd::Matrix { config, out } => {
            let prepared = load_config(&config)?;
            matrix::write_file(&out, &prepared.flows)?;
            println!("wrote {} flows to {}", prepared.flows.len(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
