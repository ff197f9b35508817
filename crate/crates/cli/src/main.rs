//! `ptzgs`: run prescribed-time ZGS scenarios and export CSV and SVG figures.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 invalid input, 3 envelope violation.

mod plots;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use ptzgs_core::scenario::{load_config, paper_sec4, write_csv_file, RunReport};
use ptzgs_core::{Error, Scenario, Variant};

use crate::plots::{emit_plots, PlotFiles};

#[derive(Debug, Parser)]
#[command(
    name = "ptzgs",
    version,
    about = "Prescribed-time zero-gradient-sum optimization simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one scenario file
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (defaults to the file's `output.dir`, then `out/<file stem>`)
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Skip the SVG figures
        #[arg(long)]
        no_plots: bool,
    },
    /// Run a built-in preset
    Preset {
        #[arg(value_enum)]
        name: PresetName,
        #[arg(long, value_enum)]
        algorithm: Algorithm,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        no_plots: bool,
    },
    /// Run every `*.toml` scenario in a directory in parallel
    Sweep {
        #[arg(long)]
        config_dir: PathBuf,
        /// Parent directory; each scenario writes to `<out-dir>/<file stem>`
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
        #[arg(long)]
        no_plots: bool,
    },
    /// Validate a scenario file without running it
    Check {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PresetName {
    #[value(name = "paper-sec4")]
    PaperSec4,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Algorithm {
    Ms,
    Ss,
}

impl From<Algorithm> for Variant {
    fn from(a: Algorithm) -> Variant {
        match a {
            Algorithm::Ms => Variant::Ms,
            Algorithm::Ss => Variant::Ss,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Status {
    Ok,
    Failed,
    Invalid,
    Envelope,
}

impl Status {
    fn code(self) -> u8 {
        match self {
            Status::Ok => 0,
            Status::Failed => 1,
            Status::Invalid => 2,
            Status::Envelope => 3,
        }
    }

    fn of_error(e: &anyhow::Error) -> Status {
        match e.chain().find_map(|c| c.downcast_ref::<Error>()) {
            Some(Error::EnvelopeViolation { .. }) => Status::Envelope,
            Some(core) if core.is_validation() => Status::Invalid,
            _ => Status::Failed,
        }
    }
}

fn summary(name: &str, report: &RunReport) -> String {
    let mut s = String::new();
    let max = |v: &[f64]| v.iter().copied().fold(0.0, f64::max);
    let _ = writeln!(s, "scenario: {name} ({})", report.variant.name());
    let _ = writeln!(s, "samples: {}", report.samples);
    let _ = writeln!(s, "wall clock: {:.3?}", report.wall_clock);
    let _ = writeln!(s, "max Er at final guard: {:.3e}", max(&report.guard_er));
    let _ = writeln!(s, "max Er at end: {:.3e}", max(&report.final_er));
    match report.time_to_threshold {
        Some(t) => {
            let _ = writeln!(s, "all Er <= 1e-2 from t = {t:.6}");
        }
        None => {
            let _ = writeln!(s, "Er never dropped below 1e-2 for all agents");
        }
    }
    let c = &report.constants;
    let _ = writeln!(
        s,
        "constants: lambda2 = {:.6}, alpha1 = {:.6}, alpha2 = {:.6}, p = {:.4}, delta = {:.4}",
        c.lambda2, c.alpha1, c.alpha2, c.p, c.delta
    );
    let e = &report.envelope;
    let _ = writeln!(
        s,
        "envelope: max ratio {:.6} at t = {:.6} over {} samples ({})",
        e.max_ratio,
        e.worst_t,
        e.samples_checked,
        if e.passed() { "ok" } else { "VIOLATED" }
    );
    s
}

/// Runs a validated scenario and writes CSV, figures and `summary.txt` into `out`.
fn execute(scenario: &Scenario, name: &str, out: &Path, plots: bool) -> Result<Status> {
    let output = scenario.run().with_context(|| format!("running {name}"))?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let csv_path = out.join(&scenario.config.output.csv);
    write_csv_file(&output.trajectory, &csv_path)
        .with_context(|| format!("writing {}", csv_path.display()))?;
    if plots && scenario.config.output.plots {
        emit_plots(&output.trajectory, &PlotFiles::in_dir(out))?;
    }
    let text = summary(name, &output.report);
    std::fs::write(out.join("summary.txt"), &text)?;
    print!("{text}");
    println!("output: {}", out.display());
    if output.report.envelope.passed() {
        Ok(Status::Ok)
    } else {
        let e = &output.report.envelope;
        eprintln!(
            "error: {}",
            Error::EnvelopeViolation {
                t: e.worst_t,
                ratio: e.max_ratio
            }
        );
        Ok(Status::Envelope)
    }
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "scenario".into())
}

fn run_file(config: &Path, out_dir: Option<PathBuf>, plots: bool) -> Result<Status> {
    let scenario = load_config(config).with_context(|| format!("loading {}", config.display()))?;
    let name = stem(config);
    let out = out_dir
        .or_else(|| scenario.config.output.dir.clone())
        .unwrap_or_else(|| Path::new("out").join(&name));
    execute(&scenario, &name, &out, plots)
}

fn sweep(dir: &Path, out_dir: &Path, plots: bool) -> Result<Status> {
    let mut configs: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    configs.sort();
    if configs.is_empty() {
        anyhow::bail!("no .toml scenarios in {}", dir.display());
    }
    let results: Vec<(PathBuf, Status)> = configs
        .par_iter()
        .map(|c| {
            let status = run_file(c, Some(out_dir.join(stem(c))), plots).unwrap_or_else(|e| {
                eprintln!("{}: error: {e:#}", c.display());
                Status::of_error(&e)
            });
            (c.clone(), status)
        })
        .collect();
    for (c, s) in &results {
        println!("{}: exit {}", c.display(), s.code());
    }
    // the first failing scenario in file-name order decides the exit code
    Ok(results
        .iter()
        .map(|(_, s)| *s)
        .find(|s| *s != Status::Ok)
        .unwrap_or(Status::Ok))
}

fn dispatch(cli: Cli) -> Result<Status> {
    match cli.command {
        Command::Run {
            config,
            out_dir,
            no_plots,
        } => run_file(&config, out_dir, !no_plots),
        Command::Preset {
            name: PresetName::PaperSec4,
            algorithm,
            out_dir,
            no_plots,
        } => {
            let variant = Variant::from(algorithm);
            let scenario = paper_sec4(variant).validate()?;
            let name = format!("paper-sec4-{}", variant.name());
            let out = out_dir.unwrap_or_else(|| Path::new("out").join(&name));
            execute(&scenario, &name, &out, !no_plots)
        }
        Command::Sweep {
            config_dir,
            out_dir,
            no_plots,
        } => sweep(&config_dir, &out_dir, !no_plots),
        Command::Check { config } => {
            let sc =
                load_config(&config).with_context(|| format!("loading {}", config.display()))?;
            println!(
                "{}: ok ({} agents, dimension {}, {} stage(s), lambda2 = {:.6}, x* = {:?})",
                config.display(),
                sc.graph.agent_count(),
                sc.xstar.len(),
                sc.schedule.stages().len(),
                sc.constants.lambda2,
                sc.xstar.as_slice()
            );
            Ok(Status::Ok)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(status) => ExitCode::from(status.code()),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(Status::of_error(&e).code())
        }
    }
}
