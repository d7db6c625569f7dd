//! SVG charts rendered from a report directory.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use plotters::prelude::*;
use thiserror::Error;

use crate::report::{CWND_CSV, FLOWS_CSV, QUEUES_CSV};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ChartKind {
    FctCdf,
    CwndTimeseries,
    QueueTimeseries,
    FairnessBar,
}

impl ChartKind {
    pub const ALL: [ChartKind; 4] = [
        ChartKind::FctCdf,
        ChartKind::CwndTimeseries,
        ChartKind::QueueTimeseries,
        ChartKind::FairnessBar,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ChartKind::FctCdf => "fct_cdf",
            ChartKind::CwndTimeseries => "cwnd_timeseries",
            ChartKind::QueueTimeseries => "queue_timeseries",
            ChartKind::FairnessBar => "fairness_bar",
        }
    }
}

impl fmt::Display for ChartKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ChartKind {
    type Err = PlotError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ChartKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| PlotError::UnknownKind(s.to_string()))
    }
}

#[derive(Debug, Error)]
pub enum PlotError {
    #[error("unknown chart kind `{0}` (expected fct_cdf, cwnd_timeseries, queue_timeseries or fairness_bar)")]
    UnknownKind(String),
    #[error("reading {path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: missing column `{column}`")]
    MissingColumn { path: PathBuf, column: String },
    #[error("{path}: row {row}: bad `{column}` value `{value}`")]
    Value {
        path: PathBuf,
        row: usize,
        column: String,
        value: String,
    },
    #[error("{path}: nothing to plot")]
    Empty { path: PathBuf },
    #[error("drawing {path}: {msg}")]
    Draw { path: PathBuf, msg: String },
}

/// Columns of a CSV file picked by name. Empty cells read as `None`.
struct Table {
    path: PathBuf,
    rows: Vec<Vec<Option<f64>>>,
}

impl Table {
    fn read(path: &Path, columns: &[&str]) -> Result<Table, PlotError> {
        let csv_err = |source| PlotError::Csv {
            path: path.to_path_buf(),
            source,
        };
        let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
        let headers = r.headers().map_err(csv_err)?.clone();
        let idx: Vec<usize> = columns
            .iter()
            .map(|c| {
                headers
                    .iter()
                    .position(|h| h == *c)
                    .ok_or_else(|| PlotError::MissingColumn {
                        path: path.to_path_buf(),
                        column: c.to_string(),
                    })
            })
            .collect::<Result<_, _>>()?;
        let mut rows = Vec::new();
        for (n, rec) in r.records().enumerate() {
            let rec = rec.map_err(csv_err)?;
            let mut row = Vec::with_capacity(idx.len());
            for (&i, col) in idx.iter().zip(columns) {
                let cell = rec.get(i).unwrap_or("");
                row.push(parse_cell(cell).ok_or_else(|| PlotError::Value {
                    path: path.to_path_buf(),
                    row: n + 1,
                    column: col.to_string(),
                    value: cell.to_string(),
                })?);
            }
            rows.push(row);
        }
        Ok(Table {
            path: path.to_path_buf(),
            rows,
        })
    }

    fn empty(&self) -> PlotError {
        PlotError::Empty {
            path: self.path.clone(),
        }
    }
}

fn parse_cell(cell: &str) -> Option<Option<f64>> {
    match cell {
        "" => Some(None),
        "true" => Some(Some(1.0)),
        "false" => Some(Some(0.0)),
        _ => cell.parse().ok().map(Some),
    }
}

const SIZE: (u32, u32) = (900, 540);

fn draw_err(path: &Path) -> impl Fn(String) -> PlotError + '_ {
    move |msg| PlotError::Draw {
        path: path.to_path_buf(),
        msg,
    }
}

fn range(lo: f64, hi: f64) -> std::ops::Range<f64> {
    if hi > lo {
        lo..hi
    } else {
        lo..lo + 1.0
    }
}

/// Renders `kind` from the report in `dir` to `out`.
pub fn render(kind: ChartKind, dir: &Path, out: &Path) -> Result<(), PlotError> {
    match kind {
        ChartKind::FctCdf => fct_cdf(dir, out),
        ChartKind::CwndTimeseries => cwnd_timeseries(dir, out),
        ChartKind::QueueTimeseries => queue_timeseries(dir, out),
        ChartKind::FairnessBar => fairness_bar(dir, out),
    }
}

fn fct_cdf(dir: &Path, out: &Path) -> Result<(), PlotError> {
    let t = Table::read(&dir.join(FLOWS_CSV), &["fct_ns"])?;
    let mut fcts: Vec<f64> = t
        .rows
        .iter()
        .filter_map(|r| r[0])
        .map(|ns| ns / 1e3)
        .collect();
    if fcts.is_empty() {
        return Err(t.empty());
    }
    fcts.sort_by(f64::total_cmp);
    let n = fcts.len() as f64;
    let pts: Vec<(f64, f64)> = fcts
        .iter()
        .enumerate()
        .map(|(i, &x)| (x, (i + 1) as f64 / n))
        .collect();
    let err = draw_err(out);
    let root = SVGBackend::new(out, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(|e| err(e.to_string()))?;
    let mut chart = ChartBuilder::on(&root)
        .caption("FCT CDF", ("sans-serif", 22))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(50)
        .build_cartesian_2d(range(0.0, fcts[fcts.len() - 1] * 1.05), 0.0..1.0)
        .map_err(|e| err(e.to_string()))?;
    chart
        .configure_mesh()
        .x_desc("flow completion time (us)")
        .y_desc("fraction of flows")
        .draw()
        .map_err(|e| err(e.to_string()))?;
    let mut steps = Vec::with_capacity(pts.len() * 2 + 1);
    steps.push((pts[0].0, 0.0));
    let mut prev = 0.0;
    for &(x, y) in &pts {
        steps.push((x, prev));
        steps.push((x, y));
        prev = y;
    }
    chart
        .draw_series(LineSeries::new(steps, BLUE.stroke_width(2)))
        .map_err(|e| err(e.to_string()))?;
    root.present().map_err(|e| err(e.to_string()))
}

fn cwnd_timeseries(dir: &Path, out: &Path) -> Result<(), PlotError> {
    let t = Table::read(
        &dir.join(CWND_CSV),
        &["time_ns", "flow_id", "cwnd_bytes", "quick_adapt"],
    )?;
    let mut flows: BTreeMap<u64, Vec<(f64, f64)>> = BTreeMap::new();
    let mut qa = Vec::new();
    for r in &t.rows {
        let (Some(time), Some(flow), Some(cwnd)) = (r[0], r[1], r[2]) else {
            continue;
        };
        let p = (time / 1e3, cwnd / 1e3);
        flows.entry(flow as u64).or_default().push(p);
        if r[3] == Some(1.0) {
            qa.push(p);
        }
    }
    if flows.is_empty() {
        return Err(t.empty());
    }
    let (x_max, y_max) = flows
        .values()
        .flatten()
        .fold((0.0f64, 0.0f64), |(x, y), p| (x.max(p.0), y.max(p.1)));
    let err = draw_err(out);
    let root = SVGBackend::new(out, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(|e| err(e.to_string()))?;
    let mut chart = ChartBuilder::on(&root)
        .caption("Congestion window", ("sans-serif", 22))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d(range(0.0, x_max), range(0.0, y_max * 1.05))
        .map_err(|e| err(e.to_string()))?;
    chart
        .configure_mesh()
        .x_desc("time (us)")
        .y_desc("cwnd (KB)")
        .draw()
        .map_err(|e| err(e.to_string()))?;
    for (i, pts) in flows.into_values().enumerate() {
        let color = Palette99::pick(i).to_rgba();
        chart
            .draw_series(LineSeries::new(pts, color.stroke_width(1)))
            .map_err(|e| err(e.to_string()))?;
    }
    chart
        .draw_series(
            qa.into_iter()
                .map(|p| Cross::new(p, 4, RED.stroke_width(2))),
        )
        .map_err(|e| err(e.to_string()))?
        .label("QuickAdapt")
        .legend(|(x, y)| Cross::new((x + 8, y), 4, RED.stroke_width(2)));
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(|e| err(e.to_string()))?;
    root.present().map_err(|e| err(e.to_string()))
}

fn queue_timeseries(dir: &Path, out: &Path) -> Result<(), PlotError> {
    let t = Table::read(&dir.join(QUEUES_CSV), &["time_ns", "port", "data_bytes"])?;
    let mut ports: BTreeMap<u64, Vec<(f64, f64)>> = BTreeMap::new();
    for r in &t.rows {
        if let (Some(time), Some(port), Some(bytes)) = (r[0], r[1], r[2]) {
            ports
                .entry(port as u64)
                .or_default()
                .push((time / 1e3, bytes / 1e3));
        }
    }
    if ports.is_empty() {
        return Err(t.empty());
    }
    let (x_max, y_max) = ports
        .values()
        .flatten()
        .fold((0.0f64, 0.0f64), |(x, y), p| (x.max(p.0), y.max(p.1)));
    let err = draw_err(out);
    let root = SVGBackend::new(out, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(|e| err(e.to_string()))?;
    let mut chart = ChartBuilder::on(&root)
        .caption("Queue occupancy", ("sans-serif", 22))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d(range(0.0, x_max), range(0.0, y_max * 1.05))
        .map_err(|e| err(e.to_string()))?;
    chart
        .configure_mesh()
        .x_desc("time (us)")
        .y_desc("data queued (KB)")
        .draw()
        .map_err(|e| err(e.to_string()))?;
    for (i, (port, pts)) in ports.into_iter().enumerate() {
        let color = Palette99::pick(i).to_rgba();
        // occupancy holds until the next sample
        let mut steps = Vec::with_capacity(pts.len() * 2);
        let mut prev: Option<f64> = None;
        for (x, y) in pts {
            if let Some(py) = prev {
                steps.push((x, py));
            }
            steps.push((x, y));
            prev = Some(y);
        }
        chart
            .draw_series(LineSeries::new(steps, color.stroke_width(1)))
            .map_err(|e| err(e.to_string()))?
            .label(format!("port {port}"))
            .legend(move |(x, y)| PathElement::new([(x, y), (x + 16, y)], color));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(|e| err(e.to_string()))?;
    root.present().map_err(|e| err(e.to_string()))
}

fn fairness_bar(dir: &Path, out: &Path) -> Result<(), PlotError> {
    let t = Table::read(&dir.join(FLOWS_CSV), &["flow_id", "size_bytes", "fct_ns"])?;
    let bars: Vec<(u64, f64)> = t
        .rows
        .iter()
        .filter_map(|r| match (r[0], r[1], r[2]) {
            (Some(id), Some(size), Some(fct)) if fct > 0.0 => Some((id as u64, size * 8.0 / fct)),
            _ => None,
        })
        .collect();
    if bars.is_empty() {
        return Err(t.empty());
    }
    let y_max = bars.iter().map(|b| b.1).fold(0.0, f64::max);
    let n = bars.len() as f64;
    let err = draw_err(out);
    let root = SVGBackend::new(out, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(|e| err(e.to_string()))?;
    let mut chart = ChartBuilder::on(&root)
        .caption("Mean throughput per flow", ("sans-serif", 22))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d(0.0..n, range(0.0, y_max * 1.1))
        .map_err(|e| err(e.to_string()))?;
    chart
        .configure_mesh()
        .disable_x_mesh()
        .x_desc("flow")
        .y_desc("throughput (Gb/s)")
        .x_labels(bars.len().min(32))
        .x_label_formatter(&|x| {
            let i = *x as usize;
            bars.get(i).map(|b| b.0.to_string()).unwrap_or_default()
        })
        .draw()
        .map_err(|e| err(e.to_string()))?;
    chart
        .draw_series(bars.iter().enumerate().map(|(i, b)| {
            let x = i as f64;
            Rectangle::new([(x + 0.1, 0.0), (x + 0.9, b.1)], BLUE.mix(0.7).filled())
        }))
        .map_err(|e| err(e.to_string()))?;
    root.present().map_err(|e| err(e.to_string()))
}
