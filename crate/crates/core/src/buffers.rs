//! Episode storage: the append-only lifelong buffer, the per-task buffer of
//! goal-labeled trajectory prefixes, and the harvesting rules that move data
//! from one to the other.

use std::io::{BufRead, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::BufferError;
use crate::instruction::Curriculum;
use crate::policy::{decode_cell, BcBatch, StateFeatures, ACTION_CELLS};
use crate::semantics::{Caption, Detection, Embedder, GoalLabel, Oracle};
use crate::world::{self, SceneSnapshot, Task, WorldState};

#[derive(Clone, Debug, PartialEq)]
pub struct TimestepRecord {
    pub features: StateFeatures,
    pub snapshot: SceneSnapshot,
    pub action_cell: usize,
    /// Goal the actor was conditioned on when it chose the action.
    pub goal_label: GoalLabel,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeRecord {
    pub steps: Vec<TimestepRecord>,
    pub final_snapshot: SceneSnapshot,
    pub task: Task,
    pub external_reward: u8,
    pub episode_seed: u64,
}

impl EpisodeRecord {
    /// Snapshots s_0 .. s_T, one more than the number of actions.
    pub fn frames(&self) -> Vec<SceneSnapshot> {
        self.steps
            .iter()
            .map(|s| s.snapshot)
            .chain(std::iter::once(self.final_snapshot))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Rebuilds an episode by replaying logged cells from `reset(seed)`.
    pub fn replay(seed: u64, task: Task, cells: &[usize], goals: &[GoalLabel]) -> Result<EpisodeRecord, BufferError> {
        if cells.len() != goals.len() {
            return Err(BufferError::Log(format!("{} actions but {} goals", cells.len(), goals.len())));
        }
        let mut state = world::reset(seed);
        let mut steps = Vec::with_capacity(cells.len());
        for (&cell, &goal) in cells.iter().zip(goals) {
            let action = decode_cell(cell).map_err(|e| BufferError::Log(e.to_string()))?;
            steps.push(TimestepRecord {
                features: StateFeatures::of(&state),
                snapshot: world::snapshot(&state),
                action_cell: cell,
                goal_label: goal,
            });
            state = world::step(&state, action).map_err(|e| BufferError::Log(e.to_string()))?;
        }
        Ok(EpisodeRecord {
            steps,
            final_snapshot: world::snapshot(&state),
            task,
            external_reward: world::task_success(&state, task) as u8,
            episode_seed: seed,
        })
    }
}

/// Records one step of an episode being collected.
pub fn record_step(state: &WorldState, cell: usize, goal: GoalLabel) -> TimestepRecord {
    TimestepRecord {
        features: StateFeatures::of(state),
        snapshot: world::snapshot(state),
        action_cell: cell,
        goal_label: goal,
    }
}

/// A prefix s_0, a_0, ..., a_{t-1}, s_t of an episode, relabeled with the goal
/// observed to hold at s_t.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub label: GoalLabel,
    pub steps: Vec<TimestepRecord>,
    pub terminal: SceneSnapshot,
}

impl Trajectory {
    /// Number of states, terminal included.
    pub fn len(&self) -> usize {
        self.steps.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn actions(&self) -> usize {
        self.steps.len()
    }
}

fn prefix(ep: &EpisodeRecord, frames: &[SceneSnapshot], t: usize, label: GoalLabel) -> Trajectory {
    Trajectory {
        label,
        steps: ep.steps[..t].to_vec(),
        terminal: frames[t],
    }
}

/// Label order used to sort trajectories that end at the same timestep:
/// curriculum captions first, then the task label.
fn label_rank(curriculum: &Curriculum, label: GoalLabel) -> usize {
    match label {
        GoalLabel::Caption(c) => curriculum.captions().iter().position(|&k| k == c).unwrap_or(usize::MAX - 1),
        GoalLabel::Task(_) => usize::MAX,
    }
}

fn collect(ep: &EpisodeRecord, curriculum: &Curriculum, mut hits: Vec<(usize, GoalLabel)>) -> Vec<Trajectory> {
    // Zero-action prefixes carry nothing to imitate.
    hits.retain(|&(t, _)| t > 0);
    hits.sort_by_key(|&(t, l)| (t, label_rank(curriculum, l)));
    hits.dedup();
    let frames = ep.frames();
    hits.into_iter().map(|(t, l)| prefix(ep, &frames, t, l)).collect()
}

fn subgoal_hits(ep: &EpisodeRecord, curriculum: &Curriculum, oracle: &Oracle) -> Vec<(usize, GoalLabel)> {
    oracle
        .detect_achieved(&ep.frames(), curriculum.captions())
        .into_iter()
        .map(|Detection { timestep, caption }| (timestep, GoalLabel::Caption(caption)))
        .collect()
}

fn external_hits(ep: &EpisodeRecord, curriculum: &Curriculum) -> Vec<(usize, GoalLabel)> {
    if ep.external_reward == 0 {
        return Vec::new();
    }
    let t = ep.steps.len();
    vec![(t, GoalLabel::Task(ep.task)), (t, GoalLabel::Caption(curriculum.last()))]
}

/// Both harvesting arms: subgoal detections by the oracle, and the external
/// reward (labeled with the task and with the final caption).
pub fn harvest_episode(ep: &EpisodeRecord, curriculum: &Curriculum, oracle: &Oracle) -> Vec<Trajectory> {
    let mut hits = subgoal_hits(ep, curriculum, oracle);
    hits.extend(external_hits(ep, curriculum));
    collect(ep, curriculum, hits)
}

/// External-reward arm only; what an agent without subgoal rewards keeps.
pub fn harvest_external(ep: &EpisodeRecord, curriculum: &Curriculum) -> Vec<Trajectory> {
    collect(ep, curriculum, external_hits(ep, curriculum))
}

/// Subgoal-detection arm only.
pub fn harvest_subgoals(ep: &EpisodeRecord, curriculum: &Curriculum, oracle: &Oracle) -> Vec<Trajectory> {
    collect(ep, curriculum, subgoal_hits(ep, curriculum, oracle))
}

/// Append-only store of every collected episode, across tasks.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LifelongBuffer {
    episodes: Vec<EpisodeRecord>,
}

impl LifelongBuffer {
    pub fn new() -> Self {
        LifelongBuffer::default()
    }

    pub fn append(&mut self, ep: EpisodeRecord) {
        self.episodes.push(ep);
    }

    pub fn episodes(&self) -> &[EpisodeRecord] {
        &self.episodes
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }
}

/// Goal-labeled prefixes for the task being learned.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TaskBuffer {
    trajectories: Vec<Trajectory>,
    // Running count of action-bearing timesteps before each trajectory.
    offsets: Vec<usize>,
    timesteps: usize,
}

impl TaskBuffer {
    pub fn new() -> Self {
        TaskBuffer::default()
    }

    pub fn push(&mut self, traj: Trajectory) {
        self.offsets.push(self.timesteps);
        self.timesteps += traj.steps.len();
        self.trajectories.push(traj);
    }

    pub fn extend<I: IntoIterator<Item = Trajectory>>(&mut self, trajs: I) {
        for t in trajs {
            self.push(t);
        }
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    /// Total action-bearing timesteps, the population `sample_batch` draws from.
    pub fn timesteps(&self) -> usize {
        self.timesteps
    }

    /// Trajectory and step index of the `k`-th stored timestep.
    pub fn locate(&self, k: usize) -> (usize, usize) {
        let traj = self.offsets.partition_point(|&o| o <= k) - 1;
        (traj, k - self.offsets[traj])
    }
}

/// Runs the subgoal-detection arm over every stored episode against a new
/// task's curriculum.
pub fn relabel_offline(lifelong: &LifelongBuffer, curriculum: &Curriculum, oracle: &Oracle) -> TaskBuffer {
    let mut buf = TaskBuffer::new();
    for ep in lifelong.episodes() {
        buf.extend(harvest_subgoals(ep, curriculum, oracle));
    }
    buf
}

/// Uniform draw over all stored timesteps, each paired with its
/// trajectory's label embedding.
pub fn sample_batch<R: Rng>(
    buffer: &TaskBuffer,
    batch_size: usize,
    embedder: &Embedder,
    rng: &mut R,
) -> Result<BcBatch, BufferError> {
    if buffer.timesteps() == 0 {
        return Err(BufferError::Empty);
    }
    let mut batch = BcBatch::new();
    for _ in 0..batch_size {
        let (i, j) = buffer.locate(rng.gen_range(0..buffer.timesteps()));
        let traj = &buffer.trajectories[i];
        let step = &traj.steps[j];
        batch
            .push(step.features, embedder.embed_goal(traj.label), step.action_cell)
            .expect("stored cells are in range");
    }
    Ok(batch)
}

/// One line of the episode log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLogEntry {
    pub seed: u64,
    pub task: Task,
    pub actions: Vec<usize>,
    pub goals: Vec<GoalLabel>,
    pub reward: u8,
    pub detected: Vec<Detection>,
}

impl EpisodeLogEntry {
    pub fn new(ep: &EpisodeRecord, detected: Vec<Detection>) -> Self {
        EpisodeLogEntry {
            seed: ep.episode_seed,
            task: ep.task,
            actions: ep.steps.iter().map(|s| s.action_cell).collect(),
            goals: ep.steps.iter().map(|s| s.goal_label).collect(),
            reward: ep.external_reward,
            detected,
        }
    }

    pub fn replay(&self) -> Result<EpisodeRecord, BufferError> {
        if let Some(&bad) = self.actions.iter().find(|&&c| c >= ACTION_CELLS) {
            return Err(BufferError::Log(format!("action cell {bad} out of range")));
        }
        let ep = EpisodeRecord::replay(self.seed, self.task, &self.actions, &self.goals)?;
        if ep.external_reward != self.reward {
            return Err(BufferError::Log(format!("episode {} replays to a different reward", self.seed)));
        }
        Ok(ep)
    }
}

pub fn write_episode_log<W: Write>(entries: &[EpisodeLogEntry], mut out: W) -> std::io::Result<()> {
    for e in entries {
        serde_json::to_writer(&mut out, e)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_episode_log<R: BufRead>(input: R) -> Result<Vec<EpisodeLogEntry>, BufferError> {
    let mut out = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line.map_err(|e| BufferError::Log(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| BufferError::Log(format!("line {}: {e}", n + 1)))?);
    }
    Ok(out)
}

/// Captions of a curriculum as goal labels, in order.
pub fn caption_goals(curriculum: &Curriculum) -> Vec<GoalLabel> {
    curriculum.captions().iter().map(|&c: &Caption| GoalLabel::Caption(c)).collect()
}
