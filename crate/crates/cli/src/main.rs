use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use log::{info, LevelFilter};

use cdpq::experiment::{self, verify_dir, write_config_record, ExperimentRecord};
use cdpq::parallel::with_workers;
use cdpq::ExperimentConfig;

#[derive(Parser, Debug)]
#[command(name = "cdpq", version, about = "CDPQ pulse-level simulator")]
struct Cli {
    #[command(flatten)]
    global: Global,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// TOML experiment config; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Output directory; overrides `output_dir` from the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[arg(long, short, global = true)]
    verbose: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Three lowest rotating-frame eigenenergies versus detuning.
    Spectrum,
    /// Automated gate tune-up.
    Calibrate,
    /// Single-pulse transfer and leakage maps over (A_g, t_g).
    SweepLeakage,
    /// Ramsey and Hahn decay, bare qubit versus CDPQ.
    Coherence,
    /// Clifford randomized benchmarking.
    Rb,
    /// Re-hash every artifact in the output directory.
    Verify,
}

fn load_config(g: &Global) -> Result<ExperimentConfig> {
    let mut cfg = match &g.config {
        Some(p) => ExperimentConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(o) = &g.out {
        cfg.output_dir = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn report(rec: &ExperimentRecord) {
    println!(
        "{} config_hash={} seed={}",
        rec.kind.as_str(),
        rec.config_hash,
        rec.seed
    );
    for f in &rec.files {
        println!("  wrote {}", f.display());
    }
}

fn verify(cfg: &ExperimentConfig, dir: &Path, check_config: bool) -> Result<bool> {
    let results = verify_dir(dir, check_config.then_some(cfg))?;
    let mut ok = true;
    for (p, v) in &results {
        let status = if v.payload_ok { "ok" } else { "PAYLOAD MISMATCH" };
        ok &= v.payload_ok;
        println!("{status} {} config_hash={} seed={}", p.display(), v.config_hash, v.seed);
    }
    Ok(ok)
}

fn run(cli: Cli) -> Result<bool> {
    let cfg = load_config(&cli.global)?;
    let out = cfg.output_dir.clone();
    info!("config hash {}", cfg.hash()?);
    if let Command::Verify = cli.command {
        return verify(&cfg, &out, cli.global.config.is_some());
    }
    let rec = with_workers(cli.global.workers, || -> cdpq::Result<ExperimentRecord> {
        write_config_record(&cfg, &out)?;
        match cli.command {
            Command::Spectrum => experiment::run_spectrum(&cfg, &out),
            Command::Calibrate => experiment::run_calibrate(&cfg, &out),
            Command::SweepLeakage => experiment::run_sweep_leakage(&cfg, &out),
            Command::Coherence => experiment::run_coherence(&cfg, &out),
            Command::Rb => experiment::run_rb(&cfg, &out),
            Command::Verify => unreachable!(),
        }
    })??;
    report(&rec);
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.global.verbose {
        LevelFilter::Debug
    } else {
        LevelFilter::Warn
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .init();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            if let Some(cdpq::Error::CalibrationFailed { log, .. }) = e.downcast_ref::<cdpq::Error>() {
                for l in log {
                    eprintln!("  {l}");
                }
            }
            ExitCode::FAILURE
        }
    }
}
