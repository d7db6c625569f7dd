use std::fs;
use std::path::Path;

use smartt_sim::matrix;
use smartt_sim::plot::{render, ChartKind, PlotError};
use smartt_sim::report::{CwndRow, FlowRow, QueueRow, CWND_COLUMNS, FLOW_COLUMNS, QUEUE_COLUMNS};
use smartt_sim::{load_config, run_experiment, write_report, RunConfig};

fn write_config(dir: &Path, body: &str) -> std::path::PathBuf {
    let path = dir.join("run.json");
    fs::write(&path, body).unwrap();
    path
}

const INCAST: &str = r#"{
    "topology": {"n_hosts": 16},
    "workload": {"kind": "incast", "msg_size": 262144, "fan_in": 4},
    "seed": 11
}"#;

fn first_line(path: &Path) -> String {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .next()
        .unwrap()
        .to_string()
}

#[test]
fn csv_headers_are_stable() {
    let tmp = tempfile::tempdir().unwrap();
    let p = load_config(&write_config(tmp.path(), INCAST)).unwrap();
    let report = run_experiment(&p).unwrap();
    let out = tmp.path().join("out");
    write_report(&report, &out).unwrap();
    assert_eq!(
        first_line(&out.join("flows.csv")),
        "flow_id,src,dst,size_bytes,start_ns,finish_ns,fct_ns,base_rtt_ns,bytes_received,packets_sent,retransmitted_bytes,nacks,timeouts"
    );
    assert_eq!(
        first_line(&out.join("cwnd_trace.csv")),
        "time_ns,flow_id,cwnd_bytes,in_flight_bytes,acked_bytes,rtt_ns,ecn,branch,quick_adapt"
    );
    assert_eq!(
        first_line(&out.join("queues.csv")),
        "time_ns,port,data_bytes,ctrl_bytes"
    );
}

#[test]
fn row_types_match_declared_columns() {
    // csv derives header names from field names; they must agree with the
    // explicit header lists written for empty traces
    fn header_of<T: serde::Serialize>(row: T) -> String {
        let mut w = csv::Writer::from_writer(vec![]);
        w.serialize(row).unwrap();
        let text = String::from_utf8(w.into_inner().unwrap()).unwrap();
        text.lines().next().unwrap().to_string()
    }
    let flow = FlowRow {
        flow_id: 0,
        src: 0,
        dst: 0,
        size_bytes: 0,
        start_ns: None,
        finish_ns: None,
        fct_ns: None,
        base_rtt_ns: 0,
        bytes_received: 0,
        packets_sent: 0,
        retransmitted_bytes: 0,
        nacks: 0,
        timeouts: 0,
    };
    assert_eq!(header_of(flow), FLOW_COLUMNS.join(","));
    let cwnd = CwndRow {
        time_ns: 0,
        flow_id: 0,
        cwnd_bytes: 0.0,
        in_flight_bytes: 0,
        acked_bytes: 0,
        rtt_ns: None,
        ecn: false,
        branch: String::new(),
        quick_adapt: false,
    };
    assert_eq!(header_of(cwnd), CWND_COLUMNS.join(","));
    let q = QueueRow {
        time_ns: 0,
        port: 0,
        data_bytes: 0,
        ctrl_bytes: 0,
    };
    assert_eq!(header_of(q), QUEUE_COLUMNS.join(","));
}

#[test]
fn same_seed_gives_byte_identical_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), INCAST);
    for name in ["a", "b"] {
        let p = load_config(&cfg).unwrap();
        write_report(&run_experiment(&p).unwrap(), &tmp.path().join(name)).unwrap();
    }
    for f in ["flows.csv", "cwnd_trace.csv", "queues.csv", "summary.json"] {
        let a = fs::read(tmp.path().join("a").join(f)).unwrap();
        let b = fs::read(tmp.path().join("b").join(f)).unwrap();
        assert!(a == b, "{f} differs");
    }
}

#[test]
fn summary_carries_manifest_and_completion() {
    let tmp = tempfile::tempdir().unwrap();
    let body = r#"{
        "topology": {"n_hosts": 16},
        "workload": {"kind": "incast", "msg_size": 4194304, "fan_in": 4},
        "t_end_ns": 20000
    }"#;
    let p = load_config(&write_config(tmp.path(), body)).unwrap();
    let report = run_experiment(&p).unwrap();
    write_report(&report, tmp.path()).unwrap();
    let v: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("summary.json")).unwrap())
            .unwrap();
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["complete"], false);
    assert_eq!(v["completed"], 0);
    assert_eq!(v["topology"]["n_hosts"], 16);
    assert_eq!(v["topology"]["bdp_bytes"], 736_800);
    assert_eq!(v["derived"]["pi"], 2.0);
    assert_eq!(v["config"]["t_end_ns"], 20_000);
    // the echoed config parses back
    let echoed: RunConfig = serde_json::from_value(v["config"].clone()).unwrap();
    assert_eq!(echoed, p.config);
}

#[test]
fn connection_matrix_drives_a_run() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(
        tmp.path().join("flows.txt"),
        "# src dst size start_time depends_on\n1 0 65536 0 -\n2 0 65536 0 -\n0 3 65536 1000 0\n",
    )
    .unwrap();
    let body = r#"{
        "topology": {"n_hosts": 16},
        "connection_matrix": "flows.txt"
    }"#;
    let p = load_config(&write_config(tmp.path(), body)).unwrap();
    assert_eq!(p.flows.len(), 3);
    let report = run_experiment(&p).unwrap();
    assert!(report.summary.run.complete);
    let parent = report.flows[0].finish.unwrap();
    assert!(report.flows[2].start.unwrap().0 >= parent.0 + 1000);
    let again = matrix::parse(&matrix::render(&p.flows)).unwrap();
    assert_eq!(again, p.flows);
}

#[test]
fn invalid_schedule_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("flows.txt"), "0 99 4096 0 -\n").unwrap();
    let body = r#"{"topology": {"n_hosts": 16}, "connection_matrix": "flows.txt"}"#;
    assert!(load_config(&write_config(tmp.path(), body)).is_err());
}

#[test]
fn every_chart_renders_svg() {
    let tmp = tempfile::tempdir().unwrap();
    let p = load_config(&write_config(tmp.path(), INCAST)).unwrap();
    write_report(&run_experiment(&p).unwrap(), tmp.path()).unwrap();
    for k in ChartKind::ALL {
        let out = tmp.path().join(format!("{k}.svg"));
        render(k, tmp.path(), &out).unwrap();
        let svg = fs::read_to_string(&out).unwrap();
        assert!(svg.starts_with("<svg"), "{k}");
        assert!(svg.contains("<text"), "{k}");
    }
}

#[test]
fn empty_report_is_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(
        tmp.path().join("flows.csv"),
        format!("{}\n", FLOW_COLUMNS.join(",")),
    )
    .unwrap();
    let err = render(ChartKind::FctCdf, tmp.path(), &tmp.path().join("x.svg")).unwrap_err();
    assert!(matches!(err, PlotError::Empty { .. }), "{err}");
}

#[test]
fn missing_column_is_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("queues.csv"), "time_ns,port\n1,2\n").unwrap();
    let err = render(
        ChartKind::QueueTimeseries,
        tmp.path(),
        &tmp.path().join("x.svg"),
    )
    .unwrap_err();
    match err {
        PlotError::MissingColumn { column, .. } => assert_eq!(column, "data_bytes"),
        other => panic!("{other}"),
    }
}
