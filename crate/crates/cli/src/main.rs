//! `spincool` — command-line front end for the cooling simulator.
//!
//! Exit codes: 0 success, 1 usage/configuration error, 2 invariant breach
//! (a run produced state violating an advertised output guarantee, or a
//! cross-check failed).

mod config;
mod output;
mod run;
mod sample;

use std::collections::VecDeque;
use std::path::PathBuf;
use std::sync::Mutex;

use anyhow::Context;
use clap::{Parser, Subcommand};

use spincool::dicke::IdealizedMode;
use spincool::model::{coupling_strength, gibbs_population, PhysicalConfig};

use crate::run::{run_config_file, InvariantBreach};

#[derive(Parser)]
#[command(
    name = "spincool",
    version,
    about = "Cooling simulator for electron-spin ensembles coupled to a driven flux qubit"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one scenario config; writes `<stem>.csv` and `<stem>.summary.json`
    Simulate {
        /// Scenario config file (JSON)
        #[arg(long)]
        config: PathBuf,
        /// Override the sampling seed (sampled configs only)
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Per-cycle idealized maps; CSV (cycle,p_up) on stdout
    Idealized {
        /// Number of spins
        #[arg(long)]
        m: usize,
        /// Which maps make up a cycle
        #[arg(long, value_parser = ["step1", "step1+2"])]
        mode: String,
        /// Cycles to run
        #[arg(long)]
        cycles: usize,
    },
    /// Coupling strength (rad/s) at a position inside the loop
    Coupling {
        /// x offset from the loop center (meters)
        #[arg(long, allow_hyphen_values = true)]
        x: f64,
        /// y offset from the loop center (meters)
        #[arg(long, allow_hyphen_values = true)]
        y: f64,
    },
    /// Thermal excited-state population of an electron spin
    Gibbs {
        /// Magnetic field (millitesla)
        #[arg(long = "field-mT")]
        field_mt: f64,
        /// Temperature (millikelvin)
        #[arg(long = "temp-mK")]
        temp_mk: f64,
    },
    /// Cross-check the engines against brute-force oracles; JSON on stdout
    Xcheck {
        /// Number of spins
        #[arg(long)]
        m: usize,
    },
    /// Run every *.json config in a directory across worker threads
    Sweep {
        /// Directory of scenario configs
        #[arg(long = "config-dir")]
        config_dir: PathBuf,
        /// Worker threads
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Output directory
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

fn main() {
    let cli = Cli::parse();
    std::process::exit(match dispatch(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            if err.downcast_ref::<InvariantBreach>().is_some()
                || err
                    .chain()
                    .any(|c| c.downcast_ref::<InvariantBreach>().is_some())
            {
                2
            } else {
                1
            }
        }
    });
}

fn dispatch(cli: Cli) -> anyhow::Result<i32> {
    match cli.cmd {
        Cmd::Simulate { config, seed, out } => {
            let outcome = run_config_file(&config, seed, &out)?;
            println!("{outcome}");
            Ok(0)
        }
        Cmd::Idealized { m, mode, cycles } => {
            let mode = match mode.as_str() {
                "step1" => IdealizedMode::Step1Only,
                _ => IdealizedMode::Step1Plus2,
            };
            let curve = spincool::dicke::idealized_protocol(m, cycles, mode)?;
            let mut out = String::with_capacity(16 * curve.len());
            out.push_str("cycle,p_up\n");
            for (i, p) in curve.iter().enumerate() {
                out.push_str(&format!("{i},{}\n", output::sci9(*p)));
            }
            print!("{out}");
            Ok(0)
        }
        Cmd::Coupling { x, y } => {
            let g = coupling_strength(&PhysicalConfig::default(), x, y)?;
            println!("{}", output::sci9(g));
            Ok(0)
        }
        Cmd::Gibbs { field_mt, temp_mk } => {
            let p = gibbs_population(field_mt * 1e-3, temp_mk * 1e-3)?;
            println!("{}", output::sci9(p));
            Ok(0)
        }
        Cmd::Xcheck { m } => {
            let report = spincool::xcheck::run_all(m)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            if report.passed {
                Ok(0)
            } else {
                eprintln!("error: cross-check failed for M = {m}");
                Ok(2)
            }
        }
        Cmd::Sweep {
            config_dir,
            jobs,
            out,
        } => sweep(&config_dir, jobs, &out),
    }
}

/// Fan independent configs out across `jobs` worker threads. Results are
/// reported in path order regardless of completion order.
fn sweep(config_dir: &PathBuf, jobs: usize, out: &PathBuf) -> anyhow::Result<i32> {
    if jobs == 0 {
        anyhow::bail!("--jobs must be at least 1");
    }
    let mut configs: Vec<PathBuf> = std::fs::read_dir(config_dir)
        .with_context(|| format!("reading config dir {}", config_dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    configs.sort();
    if configs.is_empty() {
        anyhow::bail!("no *.json configs in {}", config_dir.display());
    }

    let queue: Mutex<VecDeque<PathBuf>> = Mutex::new(configs.iter().cloned().collect());
    let results: Mutex<Vec<(PathBuf, anyhow::Result<String>)>> = Mutex::new(Vec::new());
    std::thread::scope(|scope| {
        for _ in 0..jobs.min(configs.len()) {
            scope.spawn(|| loop {
                let Some(path) = queue.lock().unwrap().pop_front() else {
                    break;
                };
                let result = run_config_file(&path, None, out).map(|o| o.to_string());
                results.lock().unwrap().push((path, result));
            });
        }
    });

    let mut results = results.into_inner().unwrap();
    results.sort_by(|a, b| a.0.cmp(&b.0));
    let mut worst = 0;
    for (path, result) in &results {
        match result {
            Ok(line) => println!("{}: {line}", path.display()),
            Err(err) => {
                eprintln!("{}: error: {err:#}", path.display());
                let breach = err.downcast_ref::<InvariantBreach>().is_some()
                    || err
                        .chain()
                        .any(|c| c.downcast_ref::<InvariantBreach>().is_some());
                worst = worst.max(if breach { 2 } else { 1 });
            }
        }
    }
    Ok(worst)
}
