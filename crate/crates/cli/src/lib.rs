//! Batch front end for the language-centric agent. Every subcommand reads a
//! resolved [`config::CliConfig`], writes files into an output directory and
//! records a `run_manifest.json` from which the run can be repeated.

pub mod commands;
pub mod config;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use crate::config::{ConfigBuilder, ConfigError, Manifest};

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

/// Environment variable naming a completion endpoint for the external
/// decomposer.
pub const LLM_URL_VAR: &str = "LCA_LLM_URL";

#[derive(Debug, Parser)]
#[command(name = "lca", version, about = "Language-centric agent experiments in a symbolic blocks world")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Output directory.
    #[arg(short, long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Reuse a non-empty output directory.
    #[arg(long, global = true)]
    pub force: bool,
    /// Config file of `key = value` lines.
    #[arg(short, long, global = true)]
    pub config: Option<PathBuf>,
    /// Start from the configuration recorded in a run manifest.
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
    /// Override one key, e.g. `--set rounds=50` (repeatable).
    #[arg(short, long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Monte Carlo sparseness of the grasp, pair and triple tasks.
    Sparseness,
    /// Collect & Infer training on one task.
    Train {
        /// Learn from external rewards only (the baseline).
        #[arg(long)]
        no_subgoals: bool,
    },
    /// Learn a task sequence, relabeling stored experience for each new task.
    Transfer,
    /// Execute an instruction with trained skills.
    Schedule {
        #[arg(long)]
        instruction: Option<String>,
        #[arg(long)]
        checkpoint: Option<String>,
    },
    /// Infer subgoals from a demonstration file and execute them.
    Imitate {
        #[arg(long)]
        demo: Option<String>,
        #[arg(long)]
        checkpoint: Option<String>,
    },
    /// Write the scripted expert's frames for a task as a demonstration.
    RecordDemo {
        #[arg(long)]
        task: Option<String>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Sparseness => "sparseness",
            Command::Train { .. } => "train",
            Command::Transfer => "transfer",
            Command::Schedule { .. } => "schedule",
            Command::Imitate { .. } => "imitate",
            Command::RecordDemo { .. } => "record-demo",
        }
    }

    // Subcommand flags are sugar for config keys so that they land in the
    // manifest.
    fn overrides(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        match self {
            Command::Train { no_subgoals: true } => out.push(("subgoals", "false".to_string())),
            Command::Schedule { instruction, checkpoint } => {
                out.extend(instruction.clone().map(|v| ("instruction", v)));
                out.extend(checkpoint.clone().map(|v| ("checkpoint", v)));
            }
            Command::Imitate { demo, checkpoint } => {
                out.extend(demo.clone().map(|v| ("demo", v)));
                out.extend(checkpoint.clone().map(|v| ("checkpoint", v)));
            }
            Command::RecordDemo { task } => out.extend(task.clone().map(|v| ("task", v))),
            _ => {}
        }
        out
    }
}

/// Resolves the configuration: defaults, then the manifest, the config
/// file, `--set` overrides, subcommand flags and finally the endpoint
/// variable when no endpoint is configured.
pub fn resolve_config(cli: &Cli) -> Result<config::CliConfig, ConfigError> {
    let mut builder = match &cli.common.manifest {
        Some(path) => {
            let m = Manifest::read(path)?;
            if m.command != cli.command.name() {
                return Err(ConfigError(format!(
                    "manifest records `{}`, not `{}`",
                    m.command,
                    cli.command.name()
                )));
            }
            ConfigBuilder::from_config(&m.config)
        }
        None => ConfigBuilder::new(),
    };
    if let Some(path) = &cli.common.config {
        builder.apply_file(path)?;
    }
    for pair in &cli.common.set {
        builder.set_pair(pair)?;
    }
    for (k, v) in cli.command.overrides() {
        builder.set(k, &v)?;
    }
    let mut config = builder.build()?;
    if config.run.llm_url.is_none() {
        if let Ok(url) = std::env::var(LLM_URL_VAR) {
            if !url.trim().is_empty() {
                config.run.llm_url = Some(url.trim().to_string());
            }
        }
    }
    Ok(config)
}

pub fn run(cli: &Cli) -> Result<()> {
    let config = resolve_config(cli)?;
    commands::prepare_out_dir(&cli.common.out, cli.common.force)?;
    commands::write_manifest(&cli.common.out, cli.command.name(), &config)?;
    commands::run_command(cli.command.name(), &config, &cli.common.out)
}

pub fn exit_code(err: &anyhow::Error) -> i32 {
    if err.downcast_ref::<ConfigError>().is_some() {
        EXIT_CONFIG
    } else {
        EXIT_RUNTIME
    }
}
