use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use uwbjam::attacker::{search_space_size, stage_sizes, staged_search_size};
use uwbjam::harness::{sniff_demo_scenario, ExperimentName, ExperimentSpec};
use uwbjam::phy::Domains;
use uwbjam::sim::{run, Scenario, Trace, TraceEvent};

#[derive(Parser)]
#[command(name = "uwbjam", version, about = "HRP UWB ranging and SYNC-jamming simulator")]
struct Cli {
    /// Directory for traces and CSV files.
    #[arg(long, global = true, env = "UWBJAM_OUT_DIR", default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a TOML scenario and write its trace.
    Simulate { scenario: PathBuf },
    /// Sniff a random victim configuration and show the stage log.
    SniffDemo {
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Run a built-in experiment and write its CSV.
    Experiment {
        /// One of: cir_degradation, field_sweep, delay_sweep, sniff_time,
        /// countermeasure, distance, selective, drift.
        name: String,
        /// Primary axis values, comma separated.
        #[arg(long, value_delimiter = ',')]
        sweep: Option<Vec<f64>>,
        /// Gain axis values, comma separated.
        #[arg(long, value_delimiter = ',')]
        gains: Option<Vec<f64>>,
        #[arg(long)]
        sessions: Option<usize>,
        #[arg(long)]
        replicates: Option<usize>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        snr_db: Option<f64>,
    },
    /// Print the parameter domains and search-space sizes.
    Domains {
        /// JSON file overriding the default domains.
        #[arg(long)]
        file: Option<PathBuf>,
    },
    /// Recompute and print the summary of a trace file.
    Report { trace: PathBuf },
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "trace".into())
}

fn simulate(out: &Path, path: &Path) -> Result<()> {
    let sc = Scenario::load(path)?;
    let trace = run(&sc)?;
    let name = stem(path);
    trace.write(out, &name)?;
    print!("{}", trace.summary_json());
    eprintln!("wrote {}", out.join(format!("{name}.jsonl")).display());
    Ok(())
}

fn sniff_demo(out: &Path, seed: u64) -> Result<()> {
    let (sc, victim) = sniff_demo_scenario(seed)?;
    println!("victim: {}", serde_json::to_string(&victim)?);
    let trace = run(&sc)?;
    let name = format!("sniff-demo-{seed}");
    trace.write(out, &name)?;
    let mut found = None;
    for e in &trace.events {
        match e {
            TraceEvent::Sniff { entry, .. } => {
                println!("packet {:>3} stage {} cursor {:>3} {:?}", entry.packet, entry.stage, entry.cursor, entry.outcome)
            }
            TraceEvent::Sniffed { config, packets, .. } => found = Some((*config, *packets)),
            _ => {}
        }
    }
    let Some((config, packets)) = found else {
        bail!("sniffing did not finish");
    };
    println!("sniffed after {packets} packets: {}", serde_json::to_string(&config)?);
    if !config.equivalent(&victim) {
        bail!("sniffed configuration differs from the victim's");
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn experiment(
    out: &Path,
    name: &str,
    sweep: Option<Vec<f64>>,
    gains: Option<Vec<f64>>,
    sessions: Option<usize>,
    replicates: Option<usize>,
    seed: u64,
    snr_db: Option<f64>,
) -> Result<()> {
    let name: ExperimentName = name.parse()?;
    let mut spec = ExperimentSpec::new(name, seed);
    spec.sweep = sweep.unwrap_or(spec.sweep);
    spec.gains = gains.unwrap_or(spec.gains);
    spec.sessions = sessions.unwrap_or(spec.sessions);
    spec.replicates = replicates.unwrap_or(spec.replicates);
    spec.snr_db = snr_db.unwrap_or(spec.snr_db);
    let csv = spec.run()?;
    std::fs::create_dir_all(out)?;
    let path = out.join(format!("{name}.csv"));
    std::fs::write(&path, &csv)?;
    print!("{csv}");
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn domains(file: Option<PathBuf>) -> Result<()> {
    let d: Domains = match file {
        Some(p) => serde_json::from_str(&std::fs::read_to_string(&p).with_context(|| p.display().to_string())?)?,
        None => Domains::default(),
    };
    let [a, b, c, e] = stage_sizes(&d);
    println!("{}", serde_json::to_string_pretty(&d)?);
    println!("full search space: {}", search_space_size(&d));
    println!("staged search: {a} + {b} + {c} + {e} = {}", staged_search_size(&d));
    Ok(())
}

fn report(path: &Path) -> Result<()> {
    let text = std::fs::read_to_string(path).with_context(|| path.display().to_string())?;
    let trace = Trace::from_jsonl(&text)?;
    print!("{}", trace.summary_json());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Simulate { scenario } => simulate(&cli.out, &scenario),
        Cmd::SniffDemo { seed } => sniff_demo(&cli.out, seed),
        Cmd::Experiment { name, sweep, gains, sessions, replicates, seed, snr_db } => {
            experiment(&cli.out, &name, sweep, gains, sessions, replicates, seed, snr_db)
        }
        Cmd::Domains { file } => domains(file),
        Cmd::Report { trace } => report(&trace),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
