//! Collect & Infer: rounds of parallel episode collection followed by
//! behavioral cloning on harvested prefixes, and the experiments built on it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::buffers::{
    harvest_episode, harvest_external, record_step, relabel_offline, sample_batch, EpisodeLogEntry, EpisodeRecord,
    LifelongBuffer, TaskBuffer,
};
use crate::instruction::{decompose, Curriculum, CurriculumSource, EndpointConfig};
use crate::policy::{
    bc_update, cell_of, decode_cell, init_params, ActMode, Optimizer, PolicyParams, StateFeatures, TrainConfig,
    ACTION_CELLS,
};
use crate::semantics::{GoalLabel, Oracle, OracleConfig};
use crate::seeding::derive;
use crate::error::WorldError;
use crate::world::{self, estimate_sparseness, SparsenessEstimate, Task, WorldState};

// Seed-derivation domains.
const COLLECT: u64 = 1;
const EVAL: u64 = 2;
const TRAIN: u64 = 3;
const TRANSFER: u64 = 4;
const SPARSENESS: u64 = 5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub n_actors: usize,
    /// Step cap per episode; `None` uses the task's default.
    pub episode_cap: Option<usize>,
    /// Round budget.
    pub rounds: usize,
    pub eval_episodes: usize,
    pub eval_greedy: bool,
    pub epsilon_explore: f64,
    /// How non-exploratory collection actions are drawn from the policy.
    pub collect_mode: ActMode,
    /// Softmax temperature for sampled collection actions.
    pub collect_temperature: f64,
    pub master_seed: u64,
    /// Early stop once eval success reaches `converge_success` for
    /// `converge_patience` consecutive rounds.
    pub converge_success: f64,
    pub converge_patience: usize,
    /// Checkpoint period in rounds; 0 disables periodic checkpoints.
    pub checkpoint_every: usize,
    pub oracle: OracleConfig,
    pub train: TrainConfig,
    /// Completion endpoint for the external decomposer; `None` selects the
    /// rule decomposer.
    pub llm_url: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            n_actors: 32,
            episode_cap: None,
            rounds: 200,
            eval_episodes: 50,
            eval_greedy: true,
            epsilon_explore: 0.3,
            collect_mode: ActMode::Sample,
            collect_temperature: 1.0,
            master_seed: 0,
            converge_success: 0.95,
            converge_patience: 3,
            checkpoint_every: 0,
            oracle: OracleConfig::perfect(),
            train: TrainConfig::default(),
            llm_url: None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.n_actors == 0 || self.rounds == 0 || self.eval_episodes == 0 {
            return Err("n_actors, rounds and eval_episodes must be positive".into());
        }
        if self.episode_cap == Some(0) {
            return Err("episode_cap must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.epsilon_explore) {
            return Err("epsilon_explore must lie in [0, 1]".into());
        }
        if !(self.collect_temperature > 0.0 && self.collect_temperature.is_finite()) {
            return Err("collect_temperature must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.converge_success) || self.converge_patience == 0 {
            return Err("converge_success must lie in [0, 1] and converge_patience be positive".into());
        }
        self.oracle.validate()?;
        self.train.validate()
    }

    pub fn cap_for(&self, task: Task) -> usize {
        self.episode_cap.unwrap_or_else(|| task.default_episode_cap())
    }

    pub fn curriculum_source(&self) -> CurriculumSource {
        match &self.llm_url {
            Some(url) => CurriculumSource::External(EndpointConfig::new(url.clone())),
            None => CurriculumSource::Rule,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundMetrics {
    pub round: usize,
    pub cum_steps: u64,
    pub cum_episodes: u64,
    pub eval_success: f64,
    pub buffer_size: usize,
    pub bc_loss: Option<f64>,
}

pub const METRICS_HEADER: &str = "round,cum_steps,cum_episodes,eval_success,buffer_size,bc_loss";

impl RoundMetrics {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.round,
            self.cum_steps,
            self.cum_episodes,
            self.eval_success,
            self.buffer_size,
            self.bc_loss.map(|l| l.to_string()).unwrap_or_default()
        )
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LearningCurve {
    pub rounds: Vec<RoundMetrics>,
    pub converged: bool,
}

impl LearningCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(METRICS_HEADER);
        out.push('\n');
        for r in &self.rounds {
            out.push_str(&r.csv_row());
            out.push('\n');
        }
        out
    }

    pub fn total_steps(&self) -> u64 {
        self.rounds.last().map_or(0, |r| r.cum_steps)
    }

    pub fn best_success(&self) -> f64 {
        self.rounds.iter().map(|r| r.eval_success).fold(0.0, f64::max)
    }
}

/// Cumulative environment steps at the first round whose evaluation success
/// reaches `threshold`.
pub fn steps_to_success_rate(curve: &LearningCurve, threshold: f64) -> Option<u64> {
    curve
        .rounds
        .iter()
        .find(|r| r.eval_success >= threshold)
        .map(|r| r.cum_steps)
}

/// Chooses a grid cell for the current state and goal.
pub trait Actor: Sync {
    fn choose(&self, state: &WorldState, goal: GoalLabel, rng: &mut ChaCha8Rng) -> usize;
}

/// The learned policy with ε-random exploration over grid cells.
pub struct PolicyActor<'a> {
    pub params: &'a PolicyParams,
    pub oracle: &'a Oracle,
    pub epsilon: f64,
    pub mode: ActMode,
    pub temperature: f64,
}

impl Actor for PolicyActor<'_> {
    fn choose(&self, state: &WorldState, goal: GoalLabel, rng: &mut ChaCha8Rng) -> usize {
        if self.epsilon > 0.0 && rng.gen::<f64>() < self.epsilon {
            return rng.gen_range(0..ACTION_CELLS);
        }
        let mut dist = self
            .params
            .distribution(&StateFeatures::of(state), self.oracle.embedder().embed_goal(goal))
            .expect("policy and embedder dimensions agree");
        match self.mode {
            ActMode::Greedy => dist.greedy_cell(),
            ActMode::Sample => {
                if self.temperature != 1.0 {
                    dist.logits.iter_mut().for_each(|l| *l /= self.temperature);
                }
                dist.sample_cell(rng)
            }
        }
    }
}

/// Follows the shortest plan for a task, ignoring the goal. For tests and
/// demonstrations.
pub struct ScriptedActor(pub Task);

impl Actor for ScriptedActor {
    fn choose(&self, state: &WorldState, _goal: GoalLabel, _rng: &mut ChaCha8Rng) -> usize {
        world::scripted_expert(self.0, state)
            .ok()
            .and_then(|plan| plan.first().map(|a| cell_of(a.target)))
            .unwrap_or(0)
    }
}

/// How the actor picks its conditioning goal during an episode.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GoalMode {
    /// Walk the curriculum: the goal advances once the oracle confirms it.
    Subgoals,
    /// Always the final caption.
    FinalOnly,
}

/// Runs one episode from `reset(seed)`. Before every action the oracle is
/// asked about the current subgoal, so an already-satisfied subgoal costs no
/// steps.
pub fn run_episode(
    actor: &dyn Actor,
    task: Task,
    curriculum: &Curriculum,
    oracle: &Oracle,
    goal_mode: GoalMode,
    cap: usize,
    seed: u64,
) -> EpisodeRecord {
    let mut state = world::reset(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(derive(seed, &[COLLECT]));
    let captions = curriculum.captions();
    let mut goal_idx = 0;
    let mut steps = Vec::with_capacity(cap);
    while steps.len() < cap && !world::task_success(&state, task) {
        let goal = match goal_mode {
            GoalMode::Subgoals => {
                let snap = world::snapshot(&state);
                while goal_idx + 1 < captions.len() && oracle.verdict(captions[goal_idx], &snap) {
                    goal_idx += 1;
                }
                captions[goal_idx]
            }
            GoalMode::FinalOnly => curriculum.last(),
        };
        let cell = actor.choose(&state, GoalLabel::Caption(goal), &mut rng);
        steps.push(record_step(&state, cell, GoalLabel::Caption(goal)));
        state = world::step(&state, decode_cell(cell).expect("actors return grid cells")).expect("cell centers are in the workspace");
    }
    EpisodeRecord {
        steps,
        final_snapshot: world::snapshot(&state),
        task,
        external_reward: world::task_success(&state, task) as u8,
        episode_seed: seed,
    }
}

/// Trainer-owned state: the master parameters and their optimizer.
#[derive(Clone, Debug)]
pub struct Learner {
    pub params: PolicyParams,
    pub optimizer: Optimizer,
}

impl Learner {
    pub fn fresh(train: &TrainConfig, goal_dim: usize) -> Learner {
        let params = init_params(train.init_seed, goal_dim);
        let optimizer = Optimizer::for_params(train, &params);
        Learner { params, optimizer }
    }
}

/// Everything a run accumulates besides parameters.
#[derive(Clone, Debug, Default)]
pub struct Buffers {
    pub lifelong: LifelongBuffer,
    pub task: TaskBuffer,
}

/// Receives artifacts as a run progresses. The default methods discard them.
pub trait RunObserver {
    fn on_episode(&mut self, _entry: &EpisodeLogEntry) {}
    fn on_round(&mut self, _metrics: &RoundMetrics, _params: &PolicyParams) {}
}

pub struct NoObserver;
impl RunObserver for NoObserver {}

/// Fixed inputs of a run shared by all of its rounds.
pub struct RunContext<'a> {
    pub task: Task,
    pub curriculum: &'a Curriculum,
    pub oracle: &'a Oracle,
    pub config: &'a RunConfig,
    pub use_subgoals: bool,
    /// Seed stream for this run; distinct per task in a transfer sequence.
    pub seed: u64,
}

impl RunContext<'_> {
    fn goal_mode(&self) -> GoalMode {
        if self.use_subgoals {
            GoalMode::Subgoals
        } else {
            GoalMode::FinalOnly
        }
    }

    fn cap(&self) -> usize {
        self.config.cap_for(self.task)
    }
}

/// Greedy (or sampled) episodes on fresh layouts; fraction that succeed.
/// Nothing observed here enters a buffer.
pub fn evaluate(params: &PolicyParams, ctx: &RunContext, round: usize) -> f64 {
    let mode = if ctx.config.eval_greedy { ActMode::Greedy } else { ActMode::Sample };
    let actor = PolicyActor {
        params,
        oracle: ctx.oracle,
        epsilon: 0.0,
        mode,
        temperature: 1.0,
    };
    let wins: usize = (0..ctx.config.eval_episodes as u64)
        .into_par_iter()
        .map(|i| {
            let seed = derive(ctx.seed, &[EVAL, round as u64, i]);
            run_episode(&actor, ctx.task, ctx.curriculum, ctx.oracle, ctx.goal_mode(), ctx.cap(), seed).external_reward
                as usize
        })
        .sum();
    wins as f64 / ctx.config.eval_episodes as f64
}

/// One Collect & Infer round.
pub fn run_round(
    learner: &mut Learner,
    buffers: &mut Buffers,
    ctx: &RunContext,
    round: usize,
    prior: Option<&RoundMetrics>,
    observer: &mut dyn RunObserver,
) -> RoundMetrics {
    // Actors act from a read-only copy while the learner owns the master.
    let shared = learner.params.clone();
    let actor = PolicyActor {
        params: &shared,
        oracle: ctx.oracle,
        epsilon: ctx.config.epsilon_explore,
        mode: ctx.config.collect_mode,
        temperature: ctx.config.collect_temperature,
    };
    run_round_with(&actor, learner, buffers, ctx, round, prior, observer)
}

/// `run_round` with the collection behavior supplied by the caller.
pub fn run_round_with(
    actor: &dyn Actor,
    learner: &mut Learner,
    buffers: &mut Buffers,
    ctx: &RunContext,
    round: usize,
    prior: Option<&RoundMetrics>,
    observer: &mut dyn RunObserver,
) -> RoundMetrics {
    // Collect. Episodes come back in actor order whatever the scheduling.
    let episodes: Vec<EpisodeRecord> = (0..ctx.config.n_actors as u64)
        .into_par_iter()
        .map(|a| {
            let seed = derive(ctx.seed, &[COLLECT, round as u64, a]);
            run_episode(actor, ctx.task, ctx.curriculum, ctx.oracle, ctx.goal_mode(), ctx.cap(), seed)
        })
        .collect();

    // Infer.
    let mut new_steps = 0u64;
    for ep in episodes {
        new_steps += ep.len() as u64;
        let trajs = if ctx.use_subgoals {
            harvest_episode(&ep, ctx.curriculum, ctx.oracle)
        } else {
            harvest_external(&ep, ctx.curriculum)
        };
        let detected = if ctx.use_subgoals {
            ctx.oracle.detect_achieved(&ep.frames(), ctx.curriculum.captions())
        } else {
            Vec::new()
        };
        observer.on_episode(&EpisodeLogEntry::new(&ep, detected));
        buffers.task.extend(trajs);
        buffers.lifelong.append(ep);
    }

    let bc_loss = (buffers.task.timesteps() > 0).then(|| {
        let mut rng = ChaCha8Rng::seed_from_u64(derive(ctx.seed, &[TRAIN, round as u64]));
        let embedder = ctx.oracle.embedder();
        let mut total = 0.0;
        let n = ctx.config.train.gradient_steps_per_round;
        for _ in 0..n {
            let batch = sample_batch(&buffers.task, ctx.config.train.batch_size, embedder, &mut rng)
                .expect("buffer is non-empty");
            total += bc_update(&mut learner.params, &mut learner.optimizer, &batch, &ctx.config.train)
                .expect("batch is non-empty and dimensions agree");
        }
        total / n as f64
    });

    let metrics = RoundMetrics {
        round,
        cum_steps: prior.map_or(0, |p| p.cum_steps) + new_steps,
        cum_episodes: prior.map_or(0, |p| p.cum_episodes) + ctx.config.n_actors as u64,
        eval_success: evaluate(&learner.params, ctx, round),
        buffer_size: buffers.task.len(),
        bc_loss,
    };
    observer.on_round(&metrics, &learner.params);
    metrics
}

/// Rounds until the convergence rule fires or the budget runs out.
pub fn train_until_converged(
    learner: &mut Learner,
    buffers: &mut Buffers,
    ctx: &RunContext,
    observer: &mut dyn RunObserver,
) -> LearningCurve {
    let mut curve = LearningCurve::default();
    let mut streak = 0;
    for round in 0..ctx.config.rounds {
        let m = run_round(learner, buffers, ctx, round, curve.rounds.last(), observer);
        log::debug!("{} round {round}: success {:.2}, buffer {}", ctx.task, m.eval_success, m.buffer_size);
        streak = if m.eval_success >= ctx.config.converge_success { streak + 1 } else { 0 };
        curve.rounds.push(m);
        if streak >= ctx.config.converge_patience {
            curve.converged = true;
            break;
        }
    }
    curve
}

/// Result of a single-task training run.
#[derive(Clone, Debug)]
pub struct ExperimentResult {
    pub task: Task,
    pub curriculum: Curriculum,
    pub curve: LearningCurve,
    pub params: PolicyParams,
    pub buffers: Buffers,
}

pub fn run_curriculum_experiment(task: Task, config: &RunConfig, use_subgoals: bool) -> ExperimentResult {
    run_curriculum_experiment_observed(task, config, use_subgoals, &mut NoObserver)
}

pub fn run_curriculum_experiment_observed(
    task: Task,
    config: &RunConfig,
    use_subgoals: bool,
    observer: &mut dyn RunObserver,
) -> ExperimentResult {
    let curriculum = config.curriculum_source().curriculum(task);
    let oracle = Oracle::new(config.oracle.clone());
    let mut learner = Learner::fresh(&config.train, oracle.embedder().dim());
    let mut buffers = Buffers::default();
    let ctx = RunContext {
        task,
        curriculum: &curriculum,
        oracle: &oracle,
        config,
        use_subgoals,
        seed: config.master_seed,
    };
    let curve = train_until_converged(&mut learner, &mut buffers, &ctx, observer);
    ExperimentResult {
        task,
        curriculum,
        curve,
        params: learner.params,
        buffers,
    }
}

#[derive(Clone, Debug)]
pub struct TransferRow {
    pub task: Task,
    pub steps_to_50: Option<u64>,
    /// Trajectories relabeled from earlier tasks before any new collection.
    pub relabeled: usize,
    pub lifelong_after: usize,
    pub curve: LearningCurve,
    pub params: PolicyParams,
}

/// Learns tasks in order, each from freshly initialized weights, seeding
/// every task buffer by relabeling the shared lifelong buffer.
pub fn run_transfer_experiment(tasks: &[Task], config: &RunConfig) -> Result<Vec<TransferRow>, WorldError> {
    run_transfer_experiment_observed(tasks, config, &mut |_| NoObserver)
}

pub fn run_transfer_experiment_observed<O: RunObserver>(
    tasks: &[Task],
    config: &RunConfig,
    observer_for: &mut dyn FnMut(usize) -> O,
) -> Result<Vec<TransferRow>, WorldError> {
    if tasks.len() < 2 {
        return Err(WorldError::InvalidArgument("a transfer sequence needs at least two tasks".into()));
    }
    let oracle = Oracle::new(config.oracle.clone());
    let source = config.curriculum_source();
    let mut lifelong = LifelongBuffer::new();
    let mut rows = Vec::with_capacity(tasks.len());
    for (k, &task) in tasks.iter().enumerate() {
        let curriculum = source.curriculum(task);
        let mut learner = Learner::fresh(&config.train, oracle.embedder().dim());
        let task_buffer = relabel_offline(&lifelong, &curriculum, &oracle);
        let relabeled = task_buffer.len();
        let mut buffers = Buffers {
            lifelong: std::mem::take(&mut lifelong),
            task: task_buffer,
        };
        let ctx = RunContext {
            task,
            curriculum: &curriculum,
            oracle: &oracle,
            config,
            use_subgoals: true,
            seed: derive(config.master_seed, &[TRANSFER, k as u64]),
        };
        let mut observer = observer_for(k);
        let curve = train_until_converged(&mut learner, &mut buffers, &ctx, &mut observer);
        lifelong = buffers.lifelong;
        rows.push(TransferRow {
            task,
            steps_to_50: steps_to_success_rate(&curve, 0.5),
            relabeled,
            lifelong_after: lifelong.len(),
            curve,
            params: learner.params,
        });
    }
    Ok(rows)
}

/// Trials and step caps for the sparseness side of the scaling table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SparsenessConfig {
    pub trials: usize,
    pub max_steps: u64,
    /// The triple stack is far sparser; it gets fewer trials.
    pub triple_trials: usize,
}

impl Default for SparsenessConfig {
    fn default() -> Self {
        SparsenessConfig {
            trials: 400,
            max_steps: 1_000_000,
            triple_trials: 20,
        }
    }
}

impl SparsenessConfig {
    pub fn trials_for(&self, task: Task) -> usize {
        match task {
            Task::TripleStack => self.triple_trials,
            _ => self.trials,
        }
    }
}

pub fn measure_sparseness(task: Task, sparse: &SparsenessConfig, seed: u64) -> Result<SparsenessEstimate, WorldError> {
    estimate_sparseness(task, sparse.max_steps, sparse.trials_for(task), derive(seed, &[SPARSENESS, task.index() as u64]))
}

/// The three tasks of the scaling study, sparsest last.
pub fn scaling_tasks() -> [Task; 3] {
    use crate::world::ObjectId::*;
    [Task::Grasp(Red), Task::PairStack { top: Red, bottom: Blue }, Task::TripleStack]
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScalingRow {
    pub task: Task,
    pub sparseness: SparsenessEstimate,
    pub steps_to_50: Option<u64>,
}

impl ScalingRow {
    /// Steps-to-50% over sparseness; `None` when the task never got there.
    pub fn ratio(&self) -> Option<f64> {
        self.steps_to_50.map(|s| s as f64 / self.sparseness.value())
    }
}

pub fn run_sparseness_scaling(config: &RunConfig, sparse: &SparsenessConfig) -> Result<Vec<ScalingRow>, WorldError> {
    let mut rows = Vec::new();
    for task in scaling_tasks() {
        let sparseness = measure_sparseness(task, sparse, config.master_seed)?;
        let result = run_curriculum_experiment(task, config, true);
        rows.push(ScalingRow {
            task,
            sparseness,
            steps_to_50: steps_to_success_rate(&result.curve, 0.5),
        });
    }
    rows.sort_by(|a, b| a.sparseness.value().total_cmp(&b.sparseness.value()));
    Ok(rows)
}

/// Curriculum used when none is configured.
pub fn default_curriculum(task: Task) -> Curriculum {
    decompose(task)
}
