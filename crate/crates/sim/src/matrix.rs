//! Connection-matrix files: one flow per line,
//! `src dst size start_time depends_on`.
//!
//! Flow ids follow line order. `depends_on` is a flow id or `-`; a dependent
//! flow starts `start_time` ns after its parent finishes. Blank lines and
//! lines starting with `#` are skipped.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use smartt_core::{FlowId, FlowSpec, HostId, SimTime};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MatrixError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("line {line}: expected 5 fields, found {found}")]
    Fields { line: usize, found: usize },
    #[error("line {line}: bad {field} `{value}`")]
    Value {
        line: usize,
        field: &'static str,
        value: String,
    },
}

pub fn parse(text: &str) -> Result<Vec<FlowSpec>, MatrixError> {
    let mut flows = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.trim();
        if body.is_empty() || body.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = body.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(MatrixError::Fields {
                line,
                found: fields.len(),
            });
        }
        let num = |idx: usize, field: &'static str| {
            fields[idx].parse::<u64>().map_err(|_| MatrixError::Value {
                line,
                field,
                value: fields[idx].to_string(),
            })
        };
        let host = |idx: usize, field: &'static str| {
            num(idx, field).and_then(|v| {
                u32::try_from(v).map_err(|_| MatrixError::Value {
                    line,
                    field,
                    value: fields[idx].to_string(),
                })
            })
        };
        let depends_on = match fields[4] {
            "-" => None,
            _ => Some(FlowId(host(4, "depends_on")?)),
        };
        flows.push(FlowSpec {
            id: FlowId(flows.len() as u32),
            src: HostId(host(0, "src")?),
            dst: HostId(host(1, "dst")?),
            size: num(2, "size")?,
            start: SimTime(num(3, "start_time")?),
            depends_on,
        });
    }
    Ok(flows)
}

pub fn render(flows: &[FlowSpec]) -> String {
    let mut out = String::from("# src dst size start_time depends_on\n");
    for f in flows {
        let dep = f
            .depends_on
            .map(|d| d.0.to_string())
            .unwrap_or_else(|| "-".into());
        let _ = writeln!(
            out,
            "{} {} {} {} {}",
            f.src.0, f.dst.0, f.size, f.start.0, dep
        );
    }
    out
}

pub fn read_file(path: &Path) -> Result<Vec<FlowSpec>, MatrixError> {
    let text = fs::read_to_string(path).map_err(|source| MatrixError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse(&text)
}

pub fn write_file(path: &Path, flows: &[FlowSpec]) -> Result<(), MatrixError> {
    fs::write(path, render(flows)).map_err(|source| MatrixError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let flows = vec![
            FlowSpec {
                id: FlowId(0),
                src: HostId(1),
                dst: HostId(2),
                size: 4096,
                start: SimTime(0),
                depends_on: None,
            },
            FlowSpec {
                id: FlowId(1),
                src: HostId(2),
                dst: HostId(3),
                size: 1 << 20,
                start: SimTime(500),
                depends_on: Some(FlowId(0)),
            },
        ];
        let text = render(&flows);
        assert_eq!(
            text,
            "# src dst size start_time depends_on\n1 2 4096 0 -\n2 3 1048576 500 0\n"
        );
        assert_eq!(parse(&text).unwrap(), flows);
    }

    #[test]
    fn comments_and_blanks_skipped() {
        let flows = parse("\n# header\n  0 1 10 0 -\n\n").unwrap();
        assert_eq!(flows.len(), 1);
        assert_eq!(flows[0].id, FlowId(0));
    }

    #[test]
    fn malformed_lines_name_the_line() {
        match parse("0 1 10 0 -\n0 1 10\n") {
            Err(MatrixError::Fields { line: 2, found: 3 }) => {}
            other => panic!("{other:?}"),
        }
        match parse("0 x 10 0 -\n") {
            Err(MatrixError::Value {
                line: 1,
                field: "dst",
                ..
            }) => {}
            other => panic!("{other:?}"),
        }
    }
}
