//! One function per subcommand. Each writes its artifacts into an output
//! directory and nothing else; all randomness comes from the master seed.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use lca_core::buffers::{write_episode_log, EpisodeLogEntry};
use lca_core::executive::{self, ExecutionTrace, FrameSequence, SkillLibrary};
use lca_core::instruction::parse_task;
use lca_core::policy::{load_checkpoint, save_checkpoint, PolicyParams};
use lca_core::seeding::derive;
use lca_core::semantics::Oracle;
use lca_core::trainer::{
    measure_sparseness, run_curriculum_experiment_observed, run_transfer_experiment_observed, scaling_tasks,
    steps_to_success_rate, RoundMetrics, RunObserver,
};
use lca_core::world::{self, Task};
use lca_core::ExecError;
use serde::Serialize;

use crate::config::{CliConfig, ConfigError, Manifest};

pub const MANIFEST_FILE: &str = "run_manifest.json";

/// Creates `dir`, refusing to reuse a non-empty one unless `force` is set.
pub fn prepare_out_dir(dir: &Path, force: bool) -> Result<()> {
    if dir.exists() {
        let occupied = fs::read_dir(dir)
            .with_context(|| format!("reading {}", dir.display()))?
            .next()
            .is_some();
        if occupied && !force {
            return Err(ConfigError(format!(
                "output directory {} is not empty; pass --force to overwrite",
                dir.display()
            ))
            .into());
        }
    }
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(())
}

pub fn write_manifest(dir: &Path, command: &str, config: &CliConfig) -> Result<()> {
    write_text(&dir.join(MANIFEST_FILE), &Manifest::new(command, config).to_json())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

fn write_checkpoint(path: &Path, params: &PolicyParams) -> Result<()> {
    let mut out = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    save_checkpoint(params, &mut out)?;
    out.flush()?;
    Ok(())
}

/// Dispatches a parsed subcommand name.
pub fn run_command(command: &str, config: &CliConfig, out: &Path) -> Result<()> {
    match command {
        "sparseness" => cmd_sparseness(config, out),
        "train" => cmd_train(config, out),
        "transfer" => cmd_transfer(config, out),
        "schedule" => cmd_schedule(config, out),
        "imitate" => cmd_imitate(config, out),
        "record-demo" => cmd_record_demo(config, out),
        other => Err(ConfigError(format!("unknown command `{other}`")).into()),
    }
}

/// `sparseness.csv`: one row per scaling task.
pub fn cmd_sparseness(config: &CliConfig, out: &Path) -> Result<()> {
    let mut csv = String::from("task,mean,censored_fraction,trials,lower_bound,max_steps\n");
    for task in scaling_tasks() {
        let est = measure_sparseness(task, &config.sparse, config.run.master_seed)?;
        log::info!("{task}: {:.1} steps ({:.0}% censored)", est.value(), 100.0 * est.censored_fraction);
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            task,
            est.value(),
            est.censored_fraction,
            est.trials,
            est.lower_bound,
            est.max_steps
        ));
    }
    write_text(&out.join("sparseness.csv"), &csv)
}

/// Streams the episode log and periodic checkpoints of a training run.
struct FileObserver {
    episodes: BufWriter<File>,
    checkpoint_dir: PathBuf,
    checkpoint_every: usize,
    error: Option<anyhow::Error>,
}

impl FileObserver {
    fn new(episodes: &Path, checkpoint_dir: PathBuf, checkpoint_every: usize) -> Result<Self> {
        let file = File::create(episodes).with_context(|| format!("creating {}", episodes.display()))?;
        Ok(FileObserver {
            episodes: BufWriter::new(file),
            checkpoint_dir,
            checkpoint_every,
            error: None,
        })
    }

    fn record(&mut self, r: Result<()>) {
        if let (Err(e), None) = (r, &self.error) {
            self.error = Some(e);
        }
    }

    fn finish(mut self) -> Result<()> {
        let flushed = self.episodes.flush().map_err(anyhow::Error::from);
        match self.error.take() {
            Some(e) => Err(e),
            None => flushed,
        }
    }
}

impl RunObserver for FileObserver {
    fn on_episode(&mut self, entry: &EpisodeLogEntry) {
        let r = write_episode_log(std::slice::from_ref(entry), &mut self.episodes).map_err(Into::into);
        self.record(r);
    }

    fn on_round(&mut self, metrics: &RoundMetrics, params: &PolicyParams) {
        log::info!(
            "round {}: {} steps, success {:.2}, buffer {}",
            metrics.round,
            metrics.cum_steps,
            metrics.eval_success,
            metrics.buffer_size
        );
        if self.checkpoint_every > 0 && (metrics.round + 1) % self.checkpoint_every == 0 {
            let r = fs::create_dir_all(&self.checkpoint_dir)
                .map_err(anyhow::Error::from)
                .and_then(|_| {
                    let path = self.checkpoint_dir.join(format!("round_{:04}.ckpt", metrics.round));
                    write_checkpoint(&path, params)
                });
            self.record(r);
        }
    }
}

#[derive(Serialize)]
struct TrainSummary {
    task: Task,
    subgoals: bool,
    curriculum: Vec<String>,
    rounds: usize,
    converged: bool,
    total_steps: u64,
    steps_to_50: Option<u64>,
    best_success: f64,
}

/// `metrics.csv`, `episodes.jsonl`, `policy.ckpt`, `skills.json`,
/// `summary.json`, plus `checkpoints/` when periodic checkpoints are on.
pub fn cmd_train(config: &CliConfig, out: &Path) -> Result<()> {
    let mut observer = FileObserver::new(
        &out.join("episodes.jsonl"),
        out.join("checkpoints"),
        config.run.checkpoint_every,
    )?;
    let result = run_curriculum_experiment_observed(config.task, &config.run, config.subgoals, &mut observer);
    observer.finish()?;
    write_text(&out.join("metrics.csv"), &result.curve.to_csv())?;
    write_checkpoint(&out.join("policy.ckpt"), &result.params)?;
    write_json(&out.join("skills.json"), &SkillLibrary::new(result.curriculum.captions().iter().copied()))?;
    write_json(
        &out.join("summary.json"),
        &TrainSummary {
            task: config.task,
            subgoals: config.subgoals,
            curriculum: result.curriculum.captions().iter().map(|c| c.text()).collect(),
            rounds: result.curve.rounds.len(),
            converged: result.curve.converged,
            total_steps: result.curve.total_steps(),
            steps_to_50: steps_to_success_rate(&result.curve, 0.5),
            best_success: result.curve.best_success(),
        },
    )
}

/// `transfer.csv` in task order, with per-task curves and checkpoints.
pub fn cmd_transfer(config: &CliConfig, out: &Path) -> Result<()> {
    let rows = run_transfer_experiment_observed(&config.transfer_tasks, &config.run, &mut |k| {
        Quiet(k)
    })?;
    let mut csv = String::from("task,steps_to_50,relabeled,rounds,converged\n");
    for (k, row) in rows.iter().enumerate() {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            row.task,
            row.steps_to_50.map(|s| s.to_string()).unwrap_or_default(),
            row.relabeled,
            row.curve.rounds.len(),
            row.curve.converged
        ));
        write_text(&out.join(format!("task{k}_metrics.csv")), &row.curve.to_csv())?;
        write_checkpoint(&out.join(format!("task{k}_policy.ckpt")), &row.params)?;
    }
    write_json(&out.join("skills.json"), &SkillLibrary::for_tasks(&config.transfer_tasks))?;
    write_text(&out.join("transfer.csv"), &csv)
}

struct Quiet(usize);

impl RunObserver for Quiet {
    fn on_round(&mut self, m: &RoundMetrics, _: &PolicyParams) {
        log::info!("task {} round {}: {} steps, success {:.2}", self.0, m.round, m.cum_steps, m.eval_success);
    }
}

fn load_skills(config: &CliConfig) -> Result<(PolicyParams, SkillLibrary)> {
    let ckpt = config
        .checkpoint
        .as_deref()
        .ok_or_else(|| ConfigError("a checkpoint is required (set checkpoint=<file>)".into()))?;
    let file = File::open(ckpt).with_context(|| format!("opening checkpoint {ckpt}"))?;
    let params = load_checkpoint(std::io::BufReader::new(file)).with_context(|| format!("loading {ckpt}"))?;
    let skills_path = match &config.skills {
        Some(p) => Some(PathBuf::from(p)),
        None => Path::new(ckpt).parent().map(|d| d.join("skills.json")).filter(|p| p.exists()),
    };
    let library = match skills_path {
        Some(p) => {
            let text = fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing skill library {}", p.display()))?
        }
        None => SkillLibrary::full(),
    };
    Ok((params, library))
}

#[derive(Serialize)]
struct TraceReport {
    source: String,
    trials: usize,
    successes: usize,
    traces: Vec<TrialTrace>,
}

#[derive(Serialize)]
struct TrialTrace {
    seed: u64,
    success: bool,
    #[serde(flatten)]
    trace: ExecutionTrace,
}

fn trial_seed(config: &CliConfig, k: usize) -> u64 {
    derive(config.run.master_seed, &[k as u64])
}

fn report(source: String, config: &CliConfig, mut run: impl FnMut(u64) -> Result<ExecutionTrace, ExecError>) -> Result<TraceReport> {
    let mut traces = Vec::with_capacity(config.trials);
    for k in 0..config.trials {
        let seed = trial_seed(config, k);
        let trace = run(seed).map_err(exec_error)?;
        traces.push(TrialTrace { seed, success: trace.success(), trace });
    }
    let successes = traces.iter().filter(|t| t.success).count();
    log::info!("{successes}/{} trials succeeded", config.trials);
    Ok(TraceReport { source, trials: config.trials, successes, traces })
}

// Grammar and library problems are input errors; the rest are runtime.
fn exec_error(e: ExecError) -> anyhow::Error {
    match e {
        ExecError::Parse(_) | ExecError::MissingSkill(_) | ExecError::Demo(_) | ExecError::EmptyDemo => {
            ConfigError(e.to_string()).into()
        }
        other => other.into(),
    }
}

/// `trace.json`: the instruction executed from `trials` seeded resets.
pub fn cmd_schedule(config: &CliConfig, out: &Path) -> Result<()> {
    parse_task(&config.instruction).map_err(|e| ConfigError(e.to_string()))?;
    let (params, library) = load_skills(config)?;
    let oracle = Oracle::new(config.run.oracle.clone());
    let rep = report(config.instruction.clone(), config, |seed| {
        executive::schedule(&config.instruction, &library, &params, &oracle, &world::reset(seed), config.skill_budget)
    })?;
    write_json(&out.join("trace.json"), &rep)
}

/// `trace.json`: the demonstrated subgoals executed from seeded resets.
pub fn cmd_imitate(config: &CliConfig, out: &Path) -> Result<()> {
    let path = config
        .demo
        .as_deref()
        .ok_or_else(|| ConfigError("a demonstration is required (set demo=<file>)".into()))?;
    let text = fs::read_to_string(path).with_context(|| format!("reading demonstration {path}"))?;
    let frames = FrameSequence::from_json(&text).map_err(exec_error)?;
    let (params, library) = load_skills(config)?;
    let oracle = Oracle::new(config.run.oracle.clone());
    let rep = report(path.to_string(), config, |seed| {
        executive::imitate(&frames, &library, &params, &oracle, seed, config.skill_budget)
    })?;
    write_json(&out.join("trace.json"), &rep)
}

/// `demo.json`: the scripted expert solving `task` from `reset(master_seed)`.
pub fn cmd_record_demo(config: &CliConfig, out: &Path) -> Result<()> {
    let demo = executive::record_demo(config.task, config.run.master_seed)?;
    let mut text = demo.to_json();
    text.push('\n');
    write_text(&out.join("demo.json"), &text)
}
