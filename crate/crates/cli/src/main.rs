// SPDX-License-Identifier: Apache-2.0

//! `offload-sim`: single offloads, grid sweeps, model evaluation and
//! validation, and multicast decode queries.
//!
//! Exit codes: 0 success, 1 simulation error, 2 configuration error.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{Map, Value};

use offload_core::analytic;
use offload_core::config::SystemConfig;
use offload_core::experiment::{self, ExperimentPlan, Setup, ValidationTable, POWERS_OF_TWO};
use offload_core::kernels::ProblemSize;
use offload_core::mcast::{self, MulticastAddress};
use offload_core::offload::{JobDescriptor, Mode};
use offload_core::topology::Target;
use offload_core::{offload, Error};

const DEFAULT_TRACE: &str = "offload-trace.jsonl";

#[derive(Parser)]
#[command(name = "offload-sim", version, about = "Cycle-level simulator of multicluster job offload")]
struct Cli {
    /// System configuration (TOML with [topology], [calibration], [kernels.*], [plan]).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Flat TOML table of calibration and topology overrides.
    #[arg(long, global = true)]
    calibration: Option<PathBuf>,
    /// JSON-lines output file (default: stdout).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Also write the records as CSV.
    #[arg(long, global = true)]
    csv: Option<PathBuf>,
    /// Write the event trace of a `run`.
    #[arg(long, global = true)]
    trace: bool,
    /// Trace file (default: `<out>.trace.jsonl`).
    #[arg(long, global = true)]
    trace_file: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one offload.
    Run(RunArgs),
    /// Simulate a grid of offloads in every requested mode.
    Sweep(SweepArgs),
    /// Evaluate the closed-form runtime model.
    Model(ModelArgs),
    /// Compare extended-mode simulation with the runtime model.
    Validate(ValidateArgs),
    /// Print the master ports a multicast request routes to.
    Decode(DecodeArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    kernel: String,
    /// `N`, `NxM` or `MxNxK`.
    #[arg(long)]
    size: ProblemSize,
    #[arg(long, short = 'n')]
    n_clusters: usize,
    #[arg(long, default_value = "extended")]
    mode: Mode,
    /// Override the kernel's argument size in bytes.
    #[arg(long)]
    arg_bytes: Option<u64>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long = "kernel")]
    kernels: Vec<String>,
    #[arg(long = "size")]
    sizes: Vec<ProblemSize>,
    #[arg(long, value_delimiter = ',')]
    clusters: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    modes: Vec<Mode>,
    /// Treat sizes as per-cluster work.
    #[arg(long)]
    weak: bool,
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long)]
    kernel: String,
    #[arg(long)]
    size: ProblemSize,
    #[arg(long, short = 'n', value_delimiter = ',')]
    n_clusters: Vec<usize>,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long = "kernel")]
    kernels: Vec<String>,
    #[arg(long = "size")]
    sizes: Vec<ProblemSize>,
    #[arg(long, value_delimiter = ',')]
    clusters: Vec<usize>,
}

#[derive(Args)]
struct DecodeArgs {
    /// Request address (hex with `0x` or decimal).
    #[arg(long, value_parser = parse_u64)]
    addr: u64,
    #[arg(long, value_parser = parse_u64, default_value = "0")]
    mask: u64,
}

fn parse_u64(s: &str) -> Result<u64, String> {
    let t = s.trim().replace('_', "");
    let r = match t.strip_prefix("0x").or_else(|| t.strip_prefix("0X")) {
        Some(hex) => u64::from_str_radix(hex, 16),
        None => t.parse(),
    };
    r.map_err(|e| format!("`{s}`: {e}"))
}

fn load_config(cli: &Cli) -> offload_core::Result<SystemConfig> {
    let mut cfg = match &cli.config {
        Some(p) => SystemConfig::load(p)?,
        None => SystemConfig::default(),
    };
    if let Some(p) = &cli.calibration {
        cfg.apply_calibration_file(p)?;
    }
    cfg.apply_env(std::env::vars())?;
    Ok(cfg)
}

fn create(path: &Path) -> offload_core::Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::Config(format!("cannot create {}: {e}", path.display())))
}

fn io_err(e: io::Error) -> Error {
    Error::Protocol(format!("write failed: {e}"))
}

fn trace_path(cli: &Cli) -> PathBuf {
    if let Some(p) = &cli.trace_file {
        return p.clone();
    }
    match &cli.out {
        Some(out) => {
            let mut s = out.clone().into_os_string();
            s.push(".trace.jsonl");
            s.into()
        }
        None => PathBuf::from(DEFAULT_TRACE),
    }
}

fn cmd_run(cli: &Cli, setup: &Setup, a: &RunArgs) -> offload_core::Result<Vec<Value>> {
    let mut job: JobDescriptor = setup.job(&a.kernel, a.size, a.n_clusters, a.mode)?;
    if let Some(b) = a.arg_bytes {
        job.arg_bytes = b;
    }
    let (report, trace) = offload::run_offload_traced(&setup.topology, &setup.calibration, &job, cli.trace)?;
    if cli.trace {
        let mut w = create(&trace_path(cli))?;
        for r in trace.records() {
            serde_json::to_writer(&mut w, r).map_err(|e| io_err(e.into()))?;
            writeln!(w).map_err(io_err)?;
        }
        w.flush().map_err(io_err)?;
    }
    Ok(vec![to_value(&report.record())])
}

fn cmd_sweep(cfg: &SystemConfig, setup: &Setup, a: &SweepArgs) -> offload_core::Result<Vec<Value>> {
    let mut plan = cfg
        .plan
        .clone()
        .unwrap_or_else(|| ExperimentPlan::new(&[], &[], &POWERS_OF_TWO, &Mode::ALL));
    if !a.kernels.is_empty() {
        plan.kernels = a.kernels.clone();
    }
    if !a.sizes.is_empty() {
        plan.sizes = a.sizes.clone();
    }
    if !a.clusters.is_empty() {
        plan.clusters = a.clusters.clone();
    }
    if !a.modes.is_empty() {
        plan.modes = a.modes.clone();
    }
    plan.weak_scaling |= a.weak;
    let records = experiment::sweep(setup, &plan)?;
    Ok(records.iter().map(to_value).collect())
}

fn cmd_model(a: &ModelArgs) -> offload_core::Result<Vec<Value>> {
    let clusters = if a.n_clusters.is_empty() {
        POWERS_OF_TWO.to_vec()
    } else {
        a.n_clusters.clone()
    };
    clusters
        .iter()
        .map(|&n| analytic::estimate(&a.kernel, n, &a.size).map(|e| to_value(&e)))
        .collect()
}

fn cmd_validate(setup: &Setup, a: &ValidateArgs) -> offload_core::Result<Vec<Value>> {
    let clusters = if a.clusters.is_empty() {
        POWERS_OF_TWO.to_vec()
    } else {
        a.clusters.clone()
    };
    let kernels: Vec<String> = if a.kernels.is_empty() {
        vec!["axpy".into(), "atax".into()]
    } else {
        a.kernels.clone()
    };
    let mut plans = Vec::new();
    for k in &kernels {
        let mut plan = if !a.sizes.is_empty() {
            ExperimentPlan::new(&[k.as_str()], &a.sizes, &clusters, &[Mode::Extended])
        } else {
            match k.to_ascii_lowercase().as_str() {
                "axpy" => experiment::axpy_validation_plan(),
                "atax" => experiment::atax_validation_plan(),
                other => return Err(Error::ModelUnavailable(other.into())),
            }
        };
        plan.clusters = clusters.clone();
        plans.push(plan);
    }
    let tables: Vec<ValidationTable> = plans
        .iter()
        .map(|p| experiment::validate(setup, p))
        .collect::<offload_core::Result<_>>()?;
    let mut out = Vec::new();
    let mut max = 0.0f64;
    for t in &tables {
        for row in &t.rows {
            let mut v = to_value(row);
            v.as_object_mut().unwrap().insert("record".into(), "validation".into());
            out.push(v);
        }
        max = max.max(t.max_relative_error);
    }
    let mut summary = Map::new();
    summary.insert("record".into(), "summary".into());
    summary.insert("points".into(), out.len().into());
    summary.insert("max_relative_error".into(), max.into());
    out.push(Value::Object(summary));
    Ok(out)
}

fn target_name(t: Target) -> String {
    match t {
        Target::Cluster(c) => format!("cluster{c}"),
        Target::Clint => "clint".into(),
        Target::SpmNarrow => "spm_narrow".into(),
        Target::SpmWide => "spm_wide".into(),
    }
}

fn cmd_decode(setup: &Setup, a: &DecodeArgs) -> offload_core::Result<Vec<Value>> {
    let req = MulticastAddress::new(a.addr, a.mask);
    let ports = mcast::route(req, &setup.topology.address_map())?;
    let targets: Vec<String> = ports
        .iter()
        .map(|&p| setup.topology.target_of_port(p).map_or_else(|| format!("port{p}"), target_name))
        .collect();
    let mut m = Map::new();
    m.insert("addr".into(), format!("{:#x}", req.addr).into());
    m.insert("mask".into(), format!("{:#x}", req.mask).into());
    m.insert("ports".into(), ports.iter().copied().collect::<Vec<_>>().into());
    m.insert("targets".into(), targets.into());
    Ok(vec![Value::Object(m)])
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("records serialize to JSON")
}

/// Flattens nested records into `a.b` columns. Arrays of objects carrying
/// a `name` and arrays of `[name, value]` pairs are keyed by that name.
fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
    let key = |k: &str| if prefix.is_empty() { k.to_string() } else { format!("{prefix}.{k}") };
    match v {
        Value::Object(m) => {
            for (k, v) in m {
                flatten(&key(k), v, out);
            }
        }
        Value::Array(items) if items.iter().all(|i| i.get("name").is_some_and(Value::is_string)) => {
            for i in items {
                let name = i["name"].as_str().unwrap();
                let mut rest = i.as_object().unwrap().clone();
                rest.remove("name");
                flatten(&key(name), &Value::Object(rest), out);
            }
        }
        Value::Array(items)
            if !items.is_empty()
                && items.iter().all(|i| i.as_array().is_some_and(|p| p.len() == 2 && p[0].is_string())) =>
        {
            for i in items {
                flatten(&key(i[0].as_str().unwrap()), &i[1], out);
            }
        }
        Value::Array(items) => out.push((
            prefix.to_string(),
            items.iter().map(cell).collect::<Vec<_>>().join(" "),
        )),
        other => out.push((prefix.to_string(), cell(other))),
    }
}

fn cell(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn write_csv(path: &Path, records: &[Value]) -> offload_core::Result<()> {
    let rows: Vec<Vec<(String, String)>> = records
        .iter()
        .map(|r| {
            let mut cols = Vec::new();
            flatten("", r, &mut cols);
            cols
        })
        .collect();
    let mut header: Vec<String> = Vec::new();
    for row in &rows {
        for (k, _) in row {
            if !header.contains(k) {
                header.push(k.clone());
            }
        }
    }
    let csv_err = |e: csv::Error| Error::Protocol(format!("csv write failed: {e}"));
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(&header).map_err(csv_err)?;
    for row in &rows {
        let line = header.iter().map(|h| {
            row.iter().find(|(k, _)| k == h).map_or("", |(_, v)| v.as_str())
        });
        w.write_record(line).map_err(csv_err)?;
    }
    w.flush().map_err(io_err)
}

fn write_jsonl(path: Option<&Path>, records: &[Value]) -> offload_core::Result<()> {
    let mut w: Box<dyn Write> = match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    };
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(|e| io_err(e.into()))?;
        writeln!(w).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

fn execute(cli: &Cli) -> offload_core::Result<()> {
    if cli.trace && !matches!(cli.command, Command::Run(_)) {
        return Err(Error::Config("--trace applies to `run` only".into()));
    }
    let cfg = load_config(cli)?;
    let setup = Setup::new(&cfg)?;
    let records = match &cli.command {
        Command::Run(a) => cmd_run(cli, &setup, a)?,
        Command::Sweep(a) => cmd_sweep(&cfg, &setup, a)?,
        Command::Model(a) => cmd_model(a)?,
        Command::Validate(a) => cmd_validate(&setup, a)?,
        Command::Decode(a) => cmd_decode(&setup, a)?,
    };
    for r in &records {
        if r.get("record").and_then(Value::as_str) == Some("warning") {
            let s = |k: &str| cell(&r[k]);
            eprintln!("warning: {} {} n={}: {}", s("kernel"), s("size"), s("n_clusters"), s("message"));
        }
    }
    write_jsonl(cli.out.as_deref(), &records)?;
    if let Some(p) = &cli.csv {
        write_csv(p, &records)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 1 })
        }
    }
}
