use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use adaptive_wl::config::{parse_override, RunConfig};
use adaptive_wl::runner::{AnyExperiment, Stage};
use adaptive_wl::validate::{run_validation, Level};
use adaptive_wl::{Error, Result};

/// Adaptive Wang–Landau sampling for posteriors with intractable
/// normalizing constants.
#[derive(Parser)]
#[command(name = "awl", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write trace.csv, logz.csv, hist.csv, summary.json.
    Run {
        /// key = value configuration file.
        #[arg(long, required_unless_present = "resume")]
        config: Option<PathBuf>,
        /// Overrides the seed in the configuration file.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (default `out`, or the checkpoint's directory on resume).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Extra `key=value` overrides, applied after the file.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// Resume from a checkpoint instead of starting fresh.
        #[arg(long, conflicts_with_all = ["config", "seed", "set"])]
        resume: Option<PathBuf>,
    },
    /// Run the oracle-backed validation suite and write report.json.
    Validate {
        #[arg(long, default_value = "fast")]
        level: String,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Learn the log-Z surface for a configuration and print it on a grid.
    Surface {
        #[arg(long)]
        config: PathBuf,
        /// `lo:hi:steps`.
        #[arg(long)]
        grid: String,
        /// Coordinate to vary; the others sit at the box center.
        #[arg(long, default_value_t = 0)]
        axis: usize,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
}

fn overrides(set: &[String], seed: Option<u64>) -> Result<Vec<(String, String)>> {
    let mut out: Vec<(String, String)> = set.iter().map(|s| parse_override(s)).collect::<Result<_>>()?;
    if let Some(seed) = seed {
        out.push(("seed".into(), seed.to_string()));
    }
    Ok(out)
}

fn parse_grid(spec: &str) -> Result<(f64, f64, usize)> {
    let bad = || Error::InvalidArgument(format!("grid `{spec}` is not lo:hi:steps"));
    let parts: Vec<&str> = spec.split(':').collect();
    let [lo, hi, steps] = parts.as_slice() else {
        return Err(bad());
    };
    let lo: f64 = lo.parse().map_err(|_| bad())?;
    let hi: f64 = hi.parse().map_err(|_| bad())?;
    let steps: usize = steps.parse().map_err(|_| bad())?;
    if !(lo < hi) || steps < 2 {
        return Err(bad());
    }
    Ok((lo, hi, steps))
}

fn execute(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run {
            config,
            seed,
            out,
            set,
            resume,
        } => {
            let mut exp = match resume {
                Some(ckpt) => {
                    let mut exp = AnyExperiment::load_checkpoint(&ckpt)?;
                    let dir = out.unwrap_or_else(|| {
                        ckpt.parent()
                            .filter(|p| !p.as_os_str().is_empty())
                            .map(PathBuf::from)
                            .unwrap_or_else(|| PathBuf::from("."))
                    });
                    exp.set_output_dir(dir);
                    exp
                }
                None => {
                    let path = config.expect("clap requires --config without --resume");
                    let mut cfg = RunConfig::load(&path, &overrides(&set, seed)?)?;
                    if let Some(out) = out {
                        cfg.out = out;
                    }
                    AnyExperiment::prepare(cfg)?
                }
            };
            std::fs::create_dir_all(&exp.config().out)?;
            let stage = exp.run(None)?;
            debug_assert_eq!(stage, Stage::Done);
            let summary = exp.write_outputs()?;
            println!(
                "{} run finished: {} theta-steps, posterior mean [{}], outputs in {}",
                summary.model,
                summary.theta_steps,
                summary
                    .theta
                    .mean
                    .iter()
                    .map(|m| format!("{m:.4}"))
                    .collect::<Vec<_>>()
                    .join(", "),
                exp.config().out.display()
            );
            Ok(true)
        }
        Command::Validate { level, out } => {
            let level: Level = level.parse()?;
            let report = run_validation(level, |c| println!("{}", c.line()));
            std::fs::create_dir_all(&out)?;
            let path = out.join("report.json");
            let mut json = serde_json::to_string_pretty(&report)?;
            json.push('\n');
            std::fs::write(&path, json)?;
            println!(
                "{} of {} checks passed in {:.0} s; report written to {}",
                report.checks.iter().filter(|c| c.pass).count(),
                report.checks.len(),
                report.seconds,
                path.display()
            );
            Ok(report.all_pass)
        }
        Command::Surface { config, grid, axis, set } => {
            let (lo, hi, steps) = parse_grid(&grid)?;
            let cfg = RunConfig::load(&config, &overrides(&set, None)?)?;
            let mut exp = AnyExperiment::prepare(cfg)?;
            println!("theta_{axis},logz");
            for (t, z) in exp.surface_grid(axis, lo, hi, steps)? {
                println!("{t:.16e},{z:.16e}");
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
