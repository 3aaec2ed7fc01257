//! Experiment runner for the `tdesim` command-line tool.
//!
//! Each subcommand writes plot-ready CSV/JSON into the output directory.
//! Given the same config and seed, output files are byte-identical whatever
//! the thread count.

// `!(x > 0.0)` is used on purpose: unlike `x <= 0.0` it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use tdesim::TdeVariant;

pub use config::ExperimentConfig;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, config file or parameter values.
    #[error("config error: {0}")]
    Config(String),
    /// Failures while running a valid experiment.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl From<tdesim::Error> for CliError {
    fn from(e: tdesim::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "tdesim",
    version,
    about = "Event-driven time difference encoder experiments",
    after_help = "Any config field can also be set with a flag of the same dotted name, \
                  e.g. --nominal.gain 3000 or --texture.velocity '[0,-50]'."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Trace and spikes of one FAC/TRG pair.
    Step(Common),
    /// Charge and spike count over the Δt grid, both variants.
    Sweep(Common),
    /// Mismatch Monte Carlo of the transmitted charge, both variants.
    Montecarlo(Common),
    /// Oriented TDE array driven by a moving texture.
    OpticalFlow(Common),
    /// Writes the jittered texture stimulus to an event file.
    GenEvents(Common),
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON experiment config.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads (default: all cores). Never changes the output.
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long, value_parser = parse_variant)]
    pub variant: Option<TdeVariant>,
}

fn parse_variant(s: &str) -> Result<TdeVariant, String> {
    s.parse().map_err(|e: tdesim::Error| e.to_string())
}

/// Config fields without a dedicated flag that may still be set as `--name`.
const TOP_LEVEL_FIELDS: [&str; 3] = ["n_trials", "delta_ts", "experiment"];

/// `(dotted.path, raw value)` pairs taken from the command line.
pub type Overrides = Vec<(String, String)>;

/// Splits `--dotted.name value` overrides out of the argument list, leaving
/// the rest for clap.
pub fn split_overrides(args: Vec<OsString>) -> Result<(Vec<OsString>, Overrides), CliError> {
    let mut rest = Vec::with_capacity(args.len());
    let mut overrides = Vec::new();
    let mut it = args.into_iter();
    while let Some(arg) = it.next() {
        let Some(flag) = arg.to_str().and_then(|s| s.strip_prefix("--")) else {
            rest.push(arg);
            continue;
        };
        if flag.is_empty() {
            // Everything after `--` is positional.
            rest.push(arg);
            rest.extend(it);
            break;
        }
        let (key, inline) = match flag.split_once('=') {
            Some((k, v)) => (k, Some(v.to_string())),
            None => (flag, None),
        };
        if !key.contains('.') && !TOP_LEVEL_FIELDS.contains(&key) {
            rest.push(arg);
            continue;
        }
        let value = match inline {
            Some(v) => v,
            None => it
                .next()
                .and_then(|v| v.into_string().ok())
                .ok_or_else(|| CliError::Config(format!("--{key} needs a value")))?,
        };
        overrides.push((key.to_string(), value));
    }
    Ok((rest, overrides))
}

/// Resolves the effective config: defaults, then the config file, then dotted
/// overrides, then the common flags.
pub fn resolve_config(
    experiment: config::Experiment,
    common: &Common,
    overrides: &[(String, String)],
) -> Result<ExperimentConfig, CliError> {
    let base = match &common.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::default(),
    };
    let mut cfg = base.with_overrides(overrides)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.out.clone_from(out);
    }
    if let Some(v) = common.variant {
        cfg.variant = v;
    }
    if let Some(e) = cfg.experiment {
        if e != experiment {
            return Err(CliError::Config(format!(
                "config is for the {} experiment, not {}",
                e.name(),
                experiment.name()
            )));
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn configure_threads(threads: Option<usize>) -> Result<(), CliError> {
    match threads {
        Some(0) => Err(CliError::Config("--threads must be >= 1".into())),
        #[cfg(feature = "parallel")]
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Runtime(format!("thread pool: {e}"))),
        #[cfg(not(feature = "parallel"))]
        Some(_) => Ok(()),
        None => Ok(()),
    }
}

fn dispatch(cli: Cli, overrides: &[(String, String)]) -> Result<String, CliError> {
    use config::Experiment as E;
    let (experiment, common) = match &cli.command {
        Command::Step(c) => (E::Step, c),
        Command::Sweep(c) => (E::Sweep, c),
        Command::Montecarlo(c) => (E::Montecarlo, c),
        Command::OpticalFlow(c) => (E::OpticalFlow, c),
        Command::GenEvents(c) => (E::GenEvents, c),
    };
    let cfg = resolve_config(experiment, common, overrides)?;
    configure_threads(common.threads)?;
    match experiment {
        E::Step => commands::cmd_step(&cfg),
        E::Sweep => commands::cmd_sweep(&cfg),
        E::Montecarlo => commands::cmd_montecarlo(&cfg),
        E::OpticalFlow => commands::cmd_optical_flow(&cfg),
        E::GenEvents => commands::cmd_gen_events(&cfg),
    }
}

/// Entry point shared by the binary: parses `args` (including the program
/// name), runs the command and maps failures to exit codes.
pub fn run(args: Vec<OsString>) -> ExitCode {
    let outcome = split_overrides(args).and_then(|(rest, overrides)| {
        let cli = match Cli::try_parse_from(rest) {
            Ok(cli) => cli,
            Err(e) if e.use_stderr() => {
                let msg = e.to_string();
                let first = msg.lines().next().unwrap_or("invalid arguments");
                return Err(CliError::Config(
                    first.trim_start_matches("error: ").to_string(),
                ));
            }
            Err(e) => {
                // --help and --version.
                let _ = e.print();
                return Ok(String::new());
            }
        };
        dispatch(cli, &overrides)
    });
    match outcome {
        Ok(summary) => {
            if !summary.is_empty() {
                println!("{summary}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("tdesim: {msg}");
            ExitCode::from(e.exit_code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn os(args: &[&str]) -> Vec<OsString> {
        args.iter().map(OsString::from).collect()
    }

    #[test]
    fn overrides_are_split_from_flags() {
        let (rest, ov) = split_overrides(os(&[
            "tdesim",
            "step",
            "--seed",
            "3",
            "--nominal.gain",
            "3000",
            "--n_trials=10",
            "--out",
            "x",
        ]))
        .unwrap();
        assert_eq!(rest, os(&["tdesim", "step", "--seed", "3", "--out", "x"]));
        assert_eq!(
            ov,
            vec![
                ("nominal.gain".to_string(), "3000".to_string()),
                ("n_trials".to_string(), "10".to_string())
            ]
        );
        assert!(split_overrides(os(&["tdesim", "step", "--nominal.gain"])).is_err());
    }

    #[test]
    fn flags_win_over_config() {
        let (rest, ov) =
            split_overrides(os(&["tdesim", "sweep", "--seed", "9", "--seed.x", "1"])).unwrap();
        let cli = Cli::try_parse_from(rest).unwrap();
        let Command::Sweep(common) = &cli.command else {
            panic!()
        };
        // `seed` is a number, so `seed.x` cannot exist.
        assert!(resolve_config(config::Experiment::Sweep, common, &ov).is_err());
        let cfg = resolve_config(config::Experiment::Sweep, common, &[]).unwrap();
        assert_eq!(cfg.seed, 9);
    }
}
