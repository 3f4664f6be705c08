use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use hocsim::report::{compare_report, ReportError};
use hocsim::scenario::Scenario;
use hocsim::sweep::{aggregate, run_sweep, write_aggregate_csv, write_runs_csv, SweepSpec, DEFAULT_NODE_COUNTS};
use hocsim::{run_simulation, MetricsReport, Protocol};

#[derive(Parser)]
#[command(name = "hocsim", version, about = "Deterministic MANET routing simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one scenario and write its trace and metrics.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        protocol: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Run protocol × node count × seed and write runs.csv and aggregate.csv.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated, e.g. anthocnet,dsr
        #[arg(long)]
        protocols: String,
        /// Comma-separated node counts.
        #[arg(long)]
        nodes: Option<String>,
        /// `a..b` (inclusive) and/or comma-separated values.
        #[arg(long, default_value = "1..10")]
        seeds: String,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Compare protocols from an aggregate CSV.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Restrict and order the compared protocols.
        #[arg(long)]
        protocols: Option<String>,
    },
}

/// Failure classes mapped to exit codes 1 and 2.
enum Failure {
    Config(anyhow::Error),
    Run(anyhow::Error),
}

fn config<T, E: Into<anyhow::Error>>(r: std::result::Result<T, E>) -> std::result::Result<T, Failure> {
    r.map_err(|e| Failure::Config(e.into()))
}

fn run<T, E: Into<anyhow::Error>>(r: std::result::Result<T, E>) -> std::result::Result<T, Failure> {
    r.map_err(|e| Failure::Run(e.into()))
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    let v: Vec<T> = s
        .split(',')
        .map(str::trim)
        .filter(|x| !x.is_empty())
        .map(|x| x.parse::<T>().map_err(|e| anyhow::anyhow!("bad {what} {x:?}: {e}")))
        .collect::<Result<_>>()?;
    if v.is_empty() {
        bail!("empty {what} list");
    }
    Ok(v)
}

fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|x| !x.is_empty()) {
        match part.split_once("..") {
            Some((a, b)) => {
                let a: u64 = a.trim().parse().with_context(|| format!("bad seed range {part:?}"))?;
                let b: u64 = b.trim().parse().with_context(|| format!("bad seed range {part:?}"))?;
                if a > b {
                    bail!("empty seed range {part:?}");
                }
                out.extend(a..=b);
            }
            None => out.push(part.parse().with_context(|| format!("bad seed {part:?}"))?),
        }
    }
    if out.is_empty() {
        bail!("no seeds given");
    }
    Ok(out)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn simulate(cfg: &Path, protocol: Option<&str>, seed: Option<u64>, out: &Path) -> std::result::Result<(), Failure> {
    let mut s = config(Scenario::load(cfg))?;
    if let Some(p) = protocol {
        s.protocol = config(p.parse::<Protocol>().map_err(anyhow::Error::msg))?;
    }
    if let Some(seed) = seed {
        s.seed = seed;
    }
    let result = run(run_simulation(&s))?;
    run(fs::create_dir_all(out))?;
    run(write_file(&out.join("trace.tsv"), &result.trace))?;
    run(write_file(&out.join("report.txt"), result.report.to_kv().as_bytes()))?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["protocol", "node_count", "seed"];
    header.extend(MetricsReport::field_names());
    run(w.write_record(&header))?;
    let mut row = vec![s.protocol.to_string(), s.node_count.to_string(), s.seed.to_string()];
    row.extend(result.report.fields().into_iter().map(|(_, v)| v));
    run(w.write_record(&row))?;
    let bytes = run(w.into_inner().map_err(|e| anyhow::anyhow!("{e}")))?;
    run(write_file(&out.join("metrics.csv"), &bytes))?;
    print!("{}", result.report.to_kv());
    Ok(())
}

fn sweep(cfg: &Path, protocols: &str, nodes: Option<&str>, seeds: &str, jobs: usize, out: &Path) -> std::result::Result<(), Failure> {
    let template = config(Scenario::load(cfg))?;
    let protocols: Vec<Protocol> = config(parse_list(protocols, "protocol"))?;
    let mut spec = SweepSpec::new(template, protocols);
    if let Some(n) = nodes {
        spec.node_counts = config(parse_list(n, "node count"))?;
    } else {
        spec.node_counts = DEFAULT_NODE_COUNTS.to_vec();
    }
    spec.seeds = config(parse_seeds(seeds))?;
    for &n in &spec.node_counts {
        config(spec.scenario(spec.protocols[0], n, spec.seeds[0]).validate())?;
    }
    let results = run(run_sweep(&spec, jobs))?;
    run(fs::create_dir_all(out))?;
    let mut runs = Vec::new();
    run(write_runs_csv(&mut runs, &results))?;
    run(write_file(&out.join("runs.csv"), &runs))?;
    let mut agg = Vec::new();
    run(write_aggregate_csv(&mut agg, &aggregate(&results)))?;
    run(write_file(&out.join("aggregate.csv"), &agg))?;
    let failed = results.iter().filter(|r| r.result.is_err()).count();
    eprintln!("{} cells, {} failed; wrote {}", results.len(), failed, out.display());
    if failed > 0 {
        return Err(Failure::Run(anyhow::anyhow!("{failed} cells failed, see runs.csv")));
    }
    Ok(())
}

fn report(input: &Path, out: &Path, protocols: Option<&str>) -> std::result::Result<(), Failure> {
    let protos: Vec<String> = match protocols {
        Some(p) => config(parse_list(p, "protocol"))?,
        None => Vec::new(),
    };
    match compare_report(input, out, &protos) {
        Ok(c) => {
            print!("{}", c.text);
            Ok(())
        }
        Err(e @ (ReportError::Io(_) | ReportError::Csv(_))) => Err(Failure::Run(e.into())),
        Err(e) => Err(Failure::Config(e.into())),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.cmd {
        Cmd::Simulate { config, protocol, seed, out } => simulate(config, protocol.as_deref(), *seed, out),
        Cmd::Sweep { config, protocols, nodes, seeds, jobs, out } => {
            sweep(config, protocols, nodes.as_deref(), seeds, *jobs, out)
        }
        Cmd::Report { input, out, protocols } => report(input, out, protocols.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("configuration error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Run(e)) => {
            eprintln!("run failed: {e:#}");
            ExitCode::from(2)
        }
    }
}
