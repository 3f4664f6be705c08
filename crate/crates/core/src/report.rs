//! Side-by-side protocol comparison built from an aggregate CSV alone.
//!
//! Needs the columns `protocol`, `node_count` and the `*_median` /
//! `overhead_kbps_mean` columns listed in [`REQUIRED_COLUMNS`]. Any CSV with
//! that schema works, not only ones written by [`crate::sweep`].

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Read;
use std::path::{Path, PathBuf};

use thiserror::Error;

pub const REQUIRED_COLUMNS: [&str; 7] = [
    "protocol",
    "node_count",
    "avg_delay_ms_median",
    "throughput_kbps_median",
    "goodput_kbps_median",
    "overhead_kbps_mean",
    "pdr_median",
];

/// Metrics written as plot-data files, with the aggregate column used.
pub const PLOT_METRICS: [(&str, &str); 6] = [
    ("avg_delay_ms", "avg_delay_ms_median"),
    ("throughput_kbps", "throughput_kbps_median"),
    ("goodput_kbps", "goodput_kbps_median"),
    ("overhead_kbps", "overhead_kbps_mean"),
    ("pdr", "pdr_median"),
    ("energy_mean_j", "energy_mean_j_mean"),
];

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("aggregate is missing column {0:?}")]
    MissingColumn(String),
    #[error("aggregate has no rows for protocol {0:?}")]
    MissingProtocol(String),
    #[error("need at least 2 protocols to compare, found {0}")]
    TooFewProtocols(usize),
    #[error("row {row}: column {column:?} is not a number")]
    BadValue { row: usize, column: String },
}

/// Aggregate values indexed by protocol then node count.
#[derive(Clone, Debug, Default)]
pub struct AggregateTable {
    pub protocols: Vec<String>,
    pub node_counts: Vec<u32>,
    columns: Vec<String>,
    cells: BTreeMap<(String, u32), Vec<Option<f64>>>,
}

impl AggregateTable {
    pub fn from_reader<R: Read>(r: R) -> Result<Self, ReportError> {
        let mut rdr = csv::Reader::from_reader(r);
        let columns: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        for c in REQUIRED_COLUMNS {
            if !columns.iter().any(|h| h == c) {
                return Err(ReportError::MissingColumn(c.to_string()));
            }
        }
        let pi = columns.iter().position(|h| h == "protocol").expect("checked");
        let ni = columns.iter().position(|h| h == "node_count").expect("checked");
        let mut t = AggregateTable { columns: columns.clone(), ..Default::default() };
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let protocol = rec.get(pi).unwrap_or("").to_string();
            let n: u32 = rec
                .get(ni)
                .and_then(|v| v.trim().parse().ok())
                .ok_or_else(|| ReportError::BadValue { row: row + 1, column: "node_count".into() })?;
            let mut values = Vec::with_capacity(columns.len());
            for (i, col) in columns.iter().enumerate() {
                let raw = rec.get(i).unwrap_or("").trim();
                if i == pi || raw.is_empty() {
                    values.push(None);
                } else {
                    match raw.parse::<f64>() {
                        Ok(v) => values.push(Some(v)),
                        Err(_) if i == ni => values.push(None),
                        Err(_) => return Err(ReportError::BadValue { row: row + 1, column: col.clone() }),
                    }
                }
            }
            if !t.protocols.contains(&protocol) {
                t.protocols.push(protocol.clone());
            }
            if !t.node_counts.contains(&n) {
                t.node_counts.push(n);
            }
            t.cells.insert((protocol, n), values);
        }
        t.node_counts.sort_unstable();
        Ok(t)
    }

    pub fn value(&self, protocol: &str, node_count: u32, column: &str) -> Option<f64> {
        let i = self.columns.iter().position(|c| c == column)?;
        self.cells.get(&(protocol.to_string(), node_count))?.get(i).copied().flatten()
    }

    pub fn has_column(&self, column: &str) -> bool {
        self.columns.iter().any(|c| c == column)
    }

    /// Mean over node counts of `column` for `protocol`, skipping gaps.
    pub fn protocol_mean(&self, protocol: &str, column: &str) -> Option<f64> {
        let v: Vec<f64> = self.node_counts.iter().filter_map(|&n| self.value(protocol, n, column)).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }
}

/// `(larger − smaller) / larger` in percent; 0 when both are 0.
pub fn percent_lesser(smaller: f64, larger: f64) -> f64 {
    if larger == 0.0 {
        0.0
    } else {
        (larger - smaller) / larger * 100.0
    }
}

#[derive(Clone, Debug)]
pub struct Comparison {
    pub text: String,
    /// `(protocol, mean overhead kbps)`.
    pub overhead: Vec<(String, f64)>,
    pub summary: Vec<String>,
    pub files: Vec<PathBuf>,
}

fn cell(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.digits$}"))
}

/// Builds the comparison text and plot-data files from an aggregate table.
/// `protocols`, if non-empty, selects and orders the compared protocols.
pub fn compare(table: &AggregateTable, protocols: &[String]) -> Result<Comparison, ReportError> {
    let protos: Vec<String> = if protocols.is_empty() { table.protocols.clone() } else { protocols.to_vec() };
    for p in &protos {
        if !table.protocols.contains(p) {
            return Err(ReportError::MissingProtocol(p.clone()));
        }
    }
    if protos.len() < 2 {
        return Err(ReportError::TooFewProtocols(protos.len()));
    }
    let mut text = String::new();
    writeln!(text, "End-to-end delay (ms, median)").unwrap();
    write!(text, "{:>10}", "nodes").unwrap();
    for p in &protos {
        write!(text, " {p:>14}").unwrap();
    }
    writeln!(text).unwrap();
    for &n in &table.node_counts {
        write!(text, "{n:>10}").unwrap();
        for p in &protos {
            write!(text, " {:>14}", cell(table.value(p, n, "avg_delay_ms_median"), 3)).unwrap();
        }
        writeln!(text).unwrap();
    }
    writeln!(text).unwrap();
    writeln!(text, "Throughput / goodput (kbps, median)").unwrap();
    write!(text, "{:>10}", "nodes").unwrap();
    for p in &protos {
        write!(text, " {:>14} {:>14}", format!("{p} thr"), format!("{p} good")).unwrap();
    }
    writeln!(text).unwrap();
    for &n in &table.node_counts {
        write!(text, "{n:>10}").unwrap();
        for p in &protos {
            write!(
                text,
                " {:>14} {:>14}",
                cell(table.value(p, n, "throughput_kbps_median"), 2),
                cell(table.value(p, n, "goodput_kbps_median"), 2)
            )
            .unwrap();
        }
        writeln!(text).unwrap();
    }
    writeln!(text).unwrap();
    writeln!(text, "Overhead (kbps, mean over node counts)").unwrap();
    let overhead: Vec<(String, f64)> =
        protos.iter().map(|p| (p.clone(), table.protocol_mean(p, "overhead_kbps_mean").unwrap_or(0.0))).collect();
    for (p, o) in &overhead {
        writeln!(text, "{p:>10} {o:.2}").unwrap();
    }
    let mut summary = Vec::new();
    for i in 0..overhead.len() {
        for j in i + 1..overhead.len() {
            let (a, b) = (&overhead[i], &overhead[j]);
            let (lo, hi) = if a.1 <= b.1 { (a, b) } else { (b, a) };
            summary.push(format!("{} overhead is {:.1}% lesser than {}", lo.0, percent_lesser(lo.1, hi.1), hi.0));
        }
    }
    for s in &summary {
        writeln!(text, "{s}").unwrap();
    }
    Ok(Comparison { text, overhead, summary, files: Vec::new() })
}

/// Plot-data file body: one header line, then one row per node count.
pub fn plot_data(table: &AggregateTable, protocols: &[String], column: &str) -> String {
    let mut s = String::from("node_count");
    for p in protocols {
        s.push('\t');
        s.push_str(p);
    }
    s.push('\n');
    for &n in &table.node_counts {
        s.push_str(&n.to_string());
        for p in protocols {
            s.push('\t');
            s.push_str(&table.value(p, n, column).map_or_else(|| "-".to_string(), |v| v.to_string()));
        }
        s.push('\n');
    }
    s
}

/// Reads `aggregate`, writes `comparison.txt` and `plot_<metric>.dat` files to `out_dir`.
pub fn compare_report(aggregate: &Path, out_dir: &Path, protocols: &[String]) -> Result<Comparison, ReportError> {
    let table = AggregateTable::from_reader(std::fs::File::open(aggregate)?)?;
    let mut cmp = compare(&table, protocols)?;
    let protos: Vec<String> = if protocols.is_empty() { table.protocols.clone() } else { protocols.to_vec() };
    std::fs::create_dir_all(out_dir)?;
    let main = out_dir.join("comparison.txt");
    std::fs::write(&main, &cmp.text)?;
    cmp.files.push(main);
    for (metric, column) in PLOT_METRICS {
        if !table.has_column(column) {
            continue;
        }
        let path = out_dir.join(format!("plot_{metric}.dat"));
        std::fs::write(&path, plot_data(&table, &protos, column))?;
        cmp.files.push(path);
    }
    Ok(cmp)
}

#[cfg(test)]
mod tests {
    use super::*;

    const CSV: &str = "protocol,node_count,avg_delay_ms_median,throughput_kbps_median,goodput_kbps_median,overhead_kbps_mean,pdr_median\n\
anthocnet,16,10,100,60,40,0.9\n\
dsr,16,12,110,60,50,0.95\n";

    #[test]
    fn overhead_summary_line() {
        let t = AggregateTable::from_reader(CSV.as_bytes()).unwrap();
        let c = compare(&t, &[]).unwrap();
        assert_eq!(c.summary, ["anthocnet overhead is 20.0% lesser than dsr"]);
        assert!(c.text.contains("End-to-end delay"));
    }

    #[test]
    fn identical_protocols_zero_difference() {
        let csv = CSV.replace(",50,", ",40,");
        let t = AggregateTable::from_reader(csv.as_bytes()).unwrap();
        assert_eq!(compare(&t, &[]).unwrap().summary, ["anthocnet overhead is 0.0% lesser than dsr"]);
    }

    #[test]
    fn errors() {
        let t = AggregateTable::from_reader(CSV.as_bytes()).unwrap();
        let e = compare(&t, &["anthocnet".into(), "ara".into()]).unwrap_err();
        assert!(e.to_string().contains("ara"));
        assert!(matches!(compare(&t, &["dsr".into()]), Err(ReportError::TooFewProtocols(1))));
        let e = AggregateTable::from_reader("protocol,node_count\n".as_bytes()).unwrap_err();
        assert!(e.to_string().contains("avg_delay_ms_median"));
    }

    #[test]
    fn plot_file_shape() {
        let t = AggregateTable::from_reader(CSV.as_bytes()).unwrap();
        let p = plot_data(&t, &t.protocols, "pdr_median");
        assert_eq!(p, "node_count\tanthocnet\tdsr\n16\t0.9\t0.95\n");
    }
}
