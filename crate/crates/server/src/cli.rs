//! `pdt` subcommands.
//!
//! Exit codes: 0 success, 1 other failure, 2 usage, 3 invalid graph,
//! 4 corrupt store or log, 5 oracle check failed, 6 I/O or configuration.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand};
use pdt_core::oracle::suite::{self, SuiteConfig};
use pdt_core::SkillId;
use pdt_tracker::engine::{posterior, rebuild, EvidenceSource, Posterior, INTERVAL_MASS};
use pdt_tracker::simulator::{simulate, SimConfig};
use pdt_tracker::store::{read_log, FileStore};
use pdt_tracker::{GraphParams, SkillGraph, StudentId, Timestamp, TrackerError, ValidationReport};
use thiserror::Error;

use crate::config::{Config, ConfigError};
use crate::service::{load_graph, Clock, Service, SystemClock, DEMO_GRAPH};

pub mod exit {
    pub const OK: u8 = 0;
    pub const FAILURE: u8 = 1;
    pub const USAGE: u8 = 2;
    pub const INVALID_GRAPH: u8 = 3;
    pub const CORRUPT: u8 = 4;
    pub const ORACLE: u8 = 5;
    pub const IO: u8 = 6;
}

#[derive(Debug, Parser)]
#[command(name = "pdt", version, about = "Track skill success-rate distributions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the HTTP service.
    Serve {
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Check a graph definition.
    Validate {
        graph: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Rebuild every student from an observation log.
    Replay {
        log: PathBuf,
        /// Defaults to graph.def next to the log, then the demo graph.
        #[arg(long)]
        graph: Option<PathBuf>,
        /// Report posteriors at this time instead of each student's last observation.
        #[arg(long)]
        at: Option<Timestamp>,
        #[arg(long)]
        json: bool,
    },
    /// Score calibration on a synthetic cohort.
    Simulate {
        #[arg(long, default_value_t = 20)]
        students: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 200)]
        trials: usize,
        /// Logit random-walk step; 0 keeps true rates fixed.
        #[arg(long, default_value_t = 0.05)]
        sigma: f64,
        /// Starting rate of every skill; uniform on [0.2, 0.8] when omitted.
        #[arg(long)]
        rate: Option<f64>,
        #[arg(long, default_value_t = 10)]
        bins: usize,
        #[arg(long, default_value_t = 500)]
        min_bin_count: usize,
        #[arg(long)]
        graph: Option<PathBuf>,
        #[arg(long)]
        json: bool,
        /// Write one JSON line per prediction.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Compare every transform against its numerical oracle.
    OracleCheck {
        #[arg(long, default_value_t = 200)]
        cases: usize,
        #[arg(long, default_value_t = 50)]
        trees: usize,
        #[arg(long, default_value_t = 1_000_000)]
        mc_samples: usize,
        #[arg(long, default_value_t = SuiteConfig::default().seed)]
        seed: u64,
    },
    /// Print the evidence behind a posterior.
    Explain {
        student: StudentId,
        skill: SkillId,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Defaults to now.
        #[arg(long)]
        at: Option<Timestamp>,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Tracker(#[from] TrackerError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{}: {source}", path.display())]
    File { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Failed(String, u8),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Tracker(TrackerError::InvalidGraph(_) | TrackerError::GraphSyntax(_)) => exit::INVALID_GRAPH,
            Self::Tracker(TrackerError::CorruptRecord { .. }) => exit::CORRUPT,
            Self::Tracker(TrackerError::Io(_)) | Self::Config(_) | Self::File { .. } | Self::Io(_) => exit::IO,
            Self::Tracker(_) => exit::FAILURE,
            Self::Failed(_, code) => *code,
        }
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|source| CliError::File { path: path.into(), source })
}

fn graph_or_demo(path: Option<&Path>) -> Result<SkillGraph, CliError> {
    let text = match path {
        Some(p) => read(p)?,
        None => DEMO_GRAPH.to_owned(),
    };
    Ok(load_graph(&text, &GraphParams::default())?.0)
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Serve { config } => serve(config.as_deref()),
        Command::Validate { graph, json } => validate(&graph, json, out),
        Command::Replay { log, graph, at, json } => replay(&log, graph.as_deref(), at, json, out),
        Command::Simulate { students, seed, trials, sigma, rate, bins, min_bin_count, graph, json, trace } => {
            let cfg = SimConfig { students, trials, seed, initial_rate: rate, sigma, bins, min_bin_count, ..SimConfig::default() };
            sim(&cfg, graph.as_deref(), json, trace.as_deref(), out)
        }
        Command::OracleCheck { cases, trees, mc_samples, seed } => {
            oracle_check(&SuiteConfig { cases, trees, mc_samples, seed }, out)
        }
        Command::Explain { student, skill, config, at, json } => {
            explain(config.as_deref(), &student, &skill, at, json, out)
        }
    }
}

fn serve(config: Option<&Path>) -> Result<(), CliError> {
    let cfg = Config::load(config)?;
    let service = Arc::new(Service::from_config(&cfg, Arc::new(SystemClock))?);
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&cfg.bind).await?;
        tracing::info!(addr = %listener.local_addr()?, store = %cfg.store.dir.display(), "listening");
        axum::serve(listener, crate::api::router(service))
            .with_graceful_shutdown(shutdown())
            .await
    })?;
    Ok(())
}

async fn shutdown() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    {
        use tokio::signal::unix::{signal, SignalKind};
        let term = async {
            match signal(SignalKind::terminate()) {
                Ok(mut s) => {
                    s.recv().await;
                }
                Err(_) => std::future::pending().await,
            }
        };
        tokio::select! {
            _ = ctrl_c => {}
            _ = term => {}
        }
    }
    #[cfg(not(unix))]
    ctrl_c.await;
    tracing::info!("shutting down");
}

fn print_report(report: &ValidationReport, out: &mut dyn Write) -> std::io::Result<()> {
    for issue in &report.issues {
        writeln!(out, "{issue}")?;
    }
    writeln!(out, "{}", if report.valid { "valid" } else { "invalid" })
}

fn validate(path: &Path, json: bool, out: &mut dyn Write) -> Result<(), CliError> {
    let text = read(path)?;
    let report = match load_graph(&text, &GraphParams::default()) {
        Ok((_, report)) => report,
        Err(TrackerError::InvalidGraph(report)) => report,
        Err(e) => return Err(e.into()),
    };
    if json {
        writeln!(out, "{}", serde_json::to_string_pretty(&report).expect("json"))?;
    } else {
        print_report(&report, out)?;
    }
    if report.valid {
        Ok(())
    } else {
        Err(CliError::Failed(format!("{}: {} errors", path.display(), report.errors().count()), exit::INVALID_GRAPH))
    }
}

fn replay(log: &Path, graph: Option<&Path>, at: Option<Timestamp>, json: bool, out: &mut dyn Write) -> Result<(), CliError> {
    let beside = log.parent().map(|d| d.join(FileStore::GRAPH)).filter(|p| p.exists());
    let graph = graph_or_demo(graph.or(beside.as_deref()))?;
    let entries = read_log(log)?;
    let records = rebuild(&graph, &entries)?;
    let mut all = serde_json::Map::new();
    for (student, record) in &records {
        let when = at.or(record.last_at).unwrap_or(0);
        let posteriors: Vec<Posterior> =
            record.states.keys().map(|skill| posterior(&graph, record, skill, when)).collect::<Result<_, _>>()?;
        if json {
            all.insert(
                student.to_string(),
                serde_json::json!({ "last_seq": record.last_seq, "at": when, "posteriors": posteriors }),
            );
            continue;
        }
        writeln!(out, "{student}  seq {}  at {when}", record.last_seq)?;
        for p in &posteriors {
            let count = record.states[&p.skill].practice_count;
            writeln!(out, "  {:<24} mean {:.6}  order {:>3}  practiced {count}", p.skill, p.mean, p.coefficients.order())?;
        }
    }
    if json {
        writeln!(out, "{}", serde_json::to_string_pretty(&all).expect("json"))?;
    } else {
        writeln!(out, "{} observations, {} students", entries.len(), records.len())?;
    }
    Ok(())
}

fn sim(cfg: &SimConfig, graph: Option<&Path>, json: bool, trace: Option<&Path>, out: &mut dyn Write) -> Result<(), CliError> {
    let graph = graph_or_demo(graph)?;
    let (run, report) = simulate(&graph, cfg)?;
    if let Some(path) = trace {
        let file = File::create(path).map_err(|source| CliError::File { path: path.into(), source })?;
        let mut w = BufWriter::new(file);
        for step in &run.steps {
            serde_json::to_writer(&mut w, step).expect("json");
            w.write_all(b"\n")?;
        }
        w.flush()?;
    }
    if json {
        writeln!(out, "{}", serde_json::to_string_pretty(&report).expect("json"))?;
    } else {
        write!(out, "{report}")?;
    }
    Ok(())
}

fn oracle_check(cfg: &SuiteConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let results = suite::run(cfg).map_err(TrackerError::from)?;
    for r in &results {
        writeln!(out, "{r}")?;
    }
    let failed = results.iter().filter(|r| !r.passed()).count();
    if failed == 0 {
        Ok(())
    } else {
        Err(CliError::Failed(format!("{failed} oracle checks failed"), exit::ORACLE))
    }
}

fn explain(
    config: Option<&Path>,
    student: &StudentId,
    skill: &SkillId,
    at: Option<Timestamp>,
    json: bool,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let cfg = Config::load(config)?;
    let service = Service::from_config(&cfg, Arc::new(SystemClock))?;
    let p = service.posterior(student, skill, at.or_else(|| Some(SystemClock.now())))?;
    if json {
        writeln!(out, "{}", serde_json::to_string_pretty(&p).expect("json"))?;
    } else {
        write_trace(&p, out)?;
    }
    Ok(())
}

/// Human-readable evidence trace.
pub fn write_trace(p: &Posterior, out: &mut dyn Write) -> std::io::Result<()> {
    writeln!(out, "{} at {}", p.skill, p.at)?;
    for e in &p.trace {
        let source = match &e.source {
            EvidenceSource::Own { practice_count, last_practiced: Some(t) } => {
                format!("own data      practiced {practice_count}, last at {t}")
            }
            EvidenceSource::Own { .. } => "own data      never practiced".to_owned(),
            EvidenceSource::Composite { setup, n_i } => format!("subskills     {setup} (n_i {n_i})"),
            EvidenceSource::Correlated { n_c, skills } => {
                let names: Vec<&str> = skills.iter().map(SkillId::as_str).collect();
                format!("correlated    {} (n_c {n_c})", names.join(", "))
            }
        };
        writeln!(out, "  {source:<56} mean {:.6}  order {}", e.mean, e.order)?;
    }
    writeln!(
        out,
        "  posterior mean {:.6}  {:.0}% interval [{:.6}, {:.6}]  order {}",
        p.mean,
        INTERVAL_MASS * 100.0,
        p.interval[0],
        p.interval[1],
        p.coefficients.order()
    )
}
