use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn hocsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hocsim")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("run.cfg");
    fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

const SMALL: &str = "# short run\nduration_s = 20\nnode_count = 12\nsessions = 3\n";

#[test]
fn simulate_writes_trace_report_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("out");
    let o = hocsim(&["simulate", "--config", &cfg, "--protocol", "dsr", "--seed", "3", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.contains("pdr="));
    let trace = fs::read_to_string(out.join("trace.tsv")).unwrap();
    assert!(trace.lines().count() > 1);
    let csv = fs::read_to_string(out.join("metrics.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("protocol,node_count,seed,"));
    assert!(lines.next().unwrap().starts_with("dsr,12,3,"));
    assert_eq!(fs::read_to_string(out.join("report.txt")).unwrap(), stdout);
}

#[test]
fn simulate_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = hocsim(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0));
    }
    for f in ["trace.tsv", "metrics.csv", "report.txt"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn config_errors_exit_1_and_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "radius_m = -5\n");
    let o = hocsim(&["simulate", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("radius_m"));

    let cfg = write_config(dir.path(), "no_such_key = 1\n");
    let o = hocsim(&["simulate", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no_such_key"));

    let o = hocsim(&["simulate", "--config", dir.path().join("missing.cfg").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));

    let good = write_config(dir.path(), SMALL);
    let o = hocsim(&["simulate", "--config", &good, "--protocol", "aodv"]);
    assert_eq!(o.status.code(), Some(1));

    let o = hocsim(&["sweep", "--config", &good, "--protocols", "dsr", "--seeds", "4..2"]);
    assert_eq!(o.status.code(), Some(1));

    let o = hocsim(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn sweep_and_report_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "duration_s = 15\nsessions = 3\n");
    let (one, many) = (dir.path().join("one"), dir.path().join("many"));
    for (out, jobs) in [(&one, "1"), (&many, "3")] {
        let o = hocsim(&[
            "sweep", "--config", &cfg, "--protocols", "anthocnet,dsr", "--nodes", "10,14", "--seeds", "1..2,5",
            "--jobs", jobs, "--out", out.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["runs.csv", "aggregate.csv"] {
        assert_eq!(fs::read(one.join(f)).unwrap(), fs::read(many.join(f)).unwrap(), "{f}");
    }
    let runs = fs::read_to_string(one.join("runs.csv")).unwrap();
    assert_eq!(runs.lines().count(), 1 + 2 * 2 * 3);
    let agg = fs::read_to_string(one.join("aggregate.csv")).unwrap();
    assert_eq!(agg.lines().count(), 1 + 2 * 2);
    assert!(agg.lines().next().unwrap().contains("pdr_median,pdr_iqr,pdr_mean"));

    let rep = dir.path().join("rep");
    let o = hocsim(&["report", "--in", one.join("aggregate.csv").to_str().unwrap(), "--out", rep.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("% lesser than"));
    assert_eq!(fs::read_to_string(rep.join("comparison.txt")).unwrap(), text);
    let plot = fs::read_to_string(rep.join("plot_pdr.dat")).unwrap();
    assert_eq!(plot.lines().next(), Some("node_count\tanthocnet\tdsr"));
    assert_eq!(plot.lines().count(), 3);
}

#[test]
fn report_errors() {
    let dir = tempfile::tempdir().unwrap();
    let agg = dir.path().join("agg.csv");
    fs::write(&agg, "protocol,node_count\nanthocnet,16\n").unwrap();
    let o = hocsim(&["report", "--in", agg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("avg_delay_ms_median"));

    let o = hocsim(&["report", "--in", dir.path().join("nope.csv").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn infeasible_sweep_cell_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    // 3 nodes host at most 6 distinct sessions; 10 are requested.
    let cfg = write_config(dir.path(), "duration_s = 2\n");
    let out = dir.path().join("out");
    let o = hocsim(&["sweep", "--config", &cfg, "--protocols", "dsr", "--nodes", "6,3", "--seeds", "1", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("sessions"));
}
