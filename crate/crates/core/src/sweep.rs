//! Cross-product sweeps over protocol × node count × seed, and their CSVs.
//!
//! Cells run on a bounded rayon pool. Results come back in cross-product
//! order whatever the parallelism, so the CSV bytes depend only on the spec.

use std::io::Write;

use rayon::prelude::*;

use crate::metrics::MetricsReport;
use crate::scenario::{Protocol, Scenario};
use crate::sim::run_simulation;

pub const DEFAULT_NODE_COUNTS: [u32; 7] = [16, 32, 50, 64, 80, 100, 128];

#[derive(Clone, Debug)]
pub struct SweepSpec {
    pub template: Scenario,
    pub protocols: Vec<Protocol>,
    pub node_counts: Vec<u32>,
    pub seeds: Vec<u64>,
}

impl SweepSpec {
    pub fn new(template: Scenario, protocols: Vec<Protocol>) -> Self {
        SweepSpec { template, protocols, node_counts: DEFAULT_NODE_COUNTS.to_vec(), seeds: (1..=10).collect() }
    }

    /// The scenario of every cell, in output order.
    pub fn cells(&self) -> Vec<(Protocol, u32, u64)> {
        let mut out = Vec::new();
        for &p in &self.protocols {
            for &n in &self.node_counts {
                for &s in &self.seeds {
                    out.push((p, n, s));
                }
            }
        }
        out
    }

    pub fn scenario(&self, protocol: Protocol, node_count: u32, seed: u64) -> Scenario {
        Scenario { protocol, node_count, seed, ..self.template.clone() }
    }
}

#[derive(Clone, Debug)]
pub struct CellResult {
    pub protocol: Protocol,
    pub node_count: u32,
    pub seed: u64,
    pub result: Result<MetricsReport, String>,
}

/// Runs every cell with at most `jobs` worker threads. A failing cell is
/// kept as an error row and does not stop the sweep.
pub fn run_sweep(spec: &SweepSpec, jobs: usize) -> Result<Vec<CellResult>, rayon::ThreadPoolBuildError> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build()?;
    let cells = spec.cells();
    Ok(pool.install(|| {
        cells
            .par_iter()
            .map(|&(protocol, node_count, seed)| {
                let result = run_simulation(&spec.scenario(protocol, node_count, seed))
                    .map(|o| o.report)
                    .map_err(|e| e.to_string());
                CellResult { protocol, node_count, seed, result }
            })
            .collect()
    }))
}

/// Type-7 (linear interpolation) quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    Some(sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]))
}

pub fn median(values: &[f64]) -> Option<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile(&v, 0.5)
}

pub fn iqr(values: &[f64]) -> Option<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Some(quantile(&v, 0.75)? - quantile(&v, 0.25)?)
}

pub fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_runs_csv<W: Write>(w: W, results: &[CellResult]) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["protocol", "node_count", "seed", "status"];
    header.extend(MetricsReport::field_names());
    out.write_record(&header)?;
    let blank = MetricsReport::field_names().len();
    for c in results {
        let mut row = vec![c.protocol.to_string(), c.node_count.to_string(), c.seed.to_string()];
        match &c.result {
            Ok(r) => {
                row.push("ok".into());
                row.extend(r.fields().into_iter().map(|(_, v)| v));
            }
            Err(e) => {
                row.push(format!("error: {e}"));
                row.extend(std::iter::repeat_n(String::new(), blank));
            }
        }
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

/// `(field, median, iqr, mean)`.
pub type FieldStats = (&'static str, Option<f64>, Option<f64>, Option<f64>);

#[derive(Clone, Debug, PartialEq)]
pub struct AggregateRow {
    pub protocol: Protocol,
    pub node_count: u32,
    pub runs: usize,
    pub failed: usize,
    /// `(field, median, iqr, mean)` over the successful runs that have a value.
    pub stats: Vec<FieldStats>,
}

impl AggregateRow {
    pub fn median(&self, field: &str) -> Option<f64> {
        self.stats.iter().find(|s| s.0 == field).and_then(|s| s.1)
    }

    pub fn mean(&self, field: &str) -> Option<f64> {
        self.stats.iter().find(|s| s.0 == field).and_then(|s| s.3)
    }
}

/// One row per (protocol, node count), in first-appearance order.
pub fn aggregate(results: &[CellResult]) -> Vec<AggregateRow> {
    let mut keys: Vec<(Protocol, u32)> = Vec::new();
    for c in results {
        if !keys.contains(&(c.protocol, c.node_count)) {
            keys.push((c.protocol, c.node_count));
        }
    }
    let names = MetricsReport::field_names();
    keys.into_iter()
        .map(|(protocol, node_count)| {
            let cell: Vec<&CellResult> =
                results.iter().filter(|c| c.protocol == protocol && c.node_count == node_count).collect();
            let ok: Vec<Vec<(&'static str, String)>> =
                cell.iter().filter_map(|c| c.result.as_ref().ok()).map(MetricsReport::fields).collect();
            let stats = names
                .iter()
                .enumerate()
                .map(|(i, &name)| {
                    let vals: Vec<f64> = ok.iter().filter_map(|f| f[i].1.parse::<f64>().ok()).collect();
                    (name, median(&vals), iqr(&vals), mean(&vals))
                })
                .collect();
            AggregateRow { protocol, node_count, runs: cell.len(), failed: cell.len() - ok.len(), stats }
        })
        .collect()
}

pub fn write_aggregate_csv<W: Write>(w: W, rows: &[AggregateRow]) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["protocol".to_string(), "node_count".into(), "runs".into(), "failed".into()];
    for name in MetricsReport::field_names() {
        header.push(format!("{name}_median"));
        header.push(format!("{name}_iqr"));
        header.push(format!("{name}_mean"));
    }
    out.write_record(&header)?;
    for r in rows {
        let mut row = vec![r.protocol.to_string(), r.node_count.to_string(), r.runs.to_string(), r.failed.to_string()];
        for (_, m, q, a) in &r.stats {
            row.push(opt(*m));
            row.push(opt(*q));
            row.push(opt(*a));
        }
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}
