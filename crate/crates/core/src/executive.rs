//! Test-time behaviors: run learned skills one subgoal at a time against an
//! instruction, or read a skill sequence off a demonstration and run that.

use serde::{Deserialize, Serialize};

use crate::error::ExecError;
use crate::instruction::{decompose, parse_task, Curriculum};
use crate::policy::{decode_cell, PolicyParams, StateFeatures};
use crate::semantics::{Caption, Oracle};
use crate::world::{self, SceneSnapshot, Task, WorldState};

pub const DEFAULT_SKILL_BUDGET: usize = 10;

/// The captions a trained policy has skills for.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkillLibrary {
    captions: Vec<Caption>,
}

impl SkillLibrary {
    pub fn new(captions: impl IntoIterator<Item = Caption>) -> Self {
        let mut out: Vec<Caption> = Vec::new();
        for c in captions {
            if !out.contains(&c) {
                out.push(c);
            }
        }
        SkillLibrary { captions: out }
    }

    /// Every caption of the grammar.
    pub fn full() -> Self {
        SkillLibrary::new(Caption::all())
    }

    /// Captions of the rule curricula of `tasks`.
    pub fn for_tasks(tasks: &[Task]) -> Self {
        SkillLibrary::new(tasks.iter().flat_map(|&t| decompose(t).captions().to_vec()))
    }

    pub fn captions(&self) -> &[Caption] {
        &self.captions
    }

    pub fn contains(&self, caption: Caption) -> bool {
        self.captions.contains(&caption)
    }

    pub fn check(&self, curriculum: &Curriculum) -> Result<(), ExecError> {
        match curriculum.captions().iter().find(|&&c| !self.contains(c)) {
            Some(c) => Err(ExecError::MissingSkill(c.text())),
            None => Ok(()),
        }
    }
}

/// An expert demonstration, one snapshot per frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FrameSequence(Vec<SceneSnapshot>);

impl FrameSequence {
    pub fn new(frames: Vec<SceneSnapshot>) -> Result<Self, ExecError> {
        if frames.is_empty() {
            return Err(ExecError::EmptyDemo);
        }
        Ok(FrameSequence(frames))
    }

    pub fn frames(&self) -> &[SceneSnapshot] {
        &self.0
    }

    pub fn from_json(text: &str) -> Result<Self, ExecError> {
        let frames: Vec<SceneSnapshot> =
            serde_json::from_str(text).map_err(|e| ExecError::Demo(e.to_string()))?;
        FrameSequence::new(frames)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.0).expect("snapshots serialize")
    }
}

/// Frames of the scripted expert solving `task` from `reset(seed)`.
pub fn record_demo(task: Task, seed: u64) -> Result<FrameSequence, ExecError> {
    let mut state = world::reset(seed);
    let mut frames = vec![world::snapshot(&state)];
    for action in world::scripted_expert(task, &state)? {
        state = world::step(&state, action)?;
        frames.push(world::snapshot(&state));
    }
    FrameSequence::new(frames)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkillOutcome {
    pub subgoal: Caption,
    pub steps: usize,
    pub achieved: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExecutionTrace {
    pub curriculum: Curriculum,
    /// One entry per attempted skill; skills after a failure are not attempted.
    pub skills: Vec<SkillOutcome>,
    pub total_steps: usize,
    /// Every skill confirmed by the oracle.
    pub completed: bool,
    /// Ground truth for the instruction, when one was given.
    pub task_success: Option<bool>,
    pub final_snapshot: SceneSnapshot,
}

impl ExecutionTrace {
    pub fn success(&self) -> bool {
        self.task_success.unwrap_or(self.completed)
    }
}

/// Runs each skill until the oracle confirms its caption, checking before
/// every action, with at most `budget` actions per skill.
pub fn execute(
    curriculum: &Curriculum,
    library: &SkillLibrary,
    params: &PolicyParams,
    oracle: &Oracle,
    start: &WorldState,
    budget: usize,
) -> Result<(ExecutionTrace, WorldState), ExecError> {
    library.check(curriculum)?;
    let mut state = start.clone();
    let mut skills = Vec::with_capacity(curriculum.len());
    let mut total = 0;
    for &goal in curriculum.captions() {
        let embedding = oracle.embedder().embed_text(goal);
        let mut steps = 0;
        let achieved = loop {
            if oracle.verdict(goal, &world::snapshot(&state)) {
                break true;
            }
            if steps == budget {
                break false;
            }
            let cell = params.distribution(&StateFeatures::of(&state), embedding)?.greedy_cell();
            state = world::step(&state, decode_cell(cell)?)?;
            steps += 1;
        };
        total += steps;
        skills.push(SkillOutcome { subgoal: goal, steps, achieved });
        if !achieved {
            break;
        }
    }
    let completed = skills.len() == curriculum.len() && skills.iter().all(|s| s.achieved);
    let trace = ExecutionTrace {
        curriculum: curriculum.clone(),
        skills,
        total_steps: total,
        completed,
        task_success: None,
        final_snapshot: world::snapshot(&state),
    };
    Ok((trace, state))
}

/// Decomposes `instruction` and executes its curriculum from `start`.
pub fn schedule(
    instruction: &str,
    library: &SkillLibrary,
    params: &PolicyParams,
    oracle: &Oracle,
    start: &WorldState,
    budget: usize,
) -> Result<ExecutionTrace, ExecError> {
    let task = parse_task(instruction)?;
    schedule_curriculum(task, &decompose(task), library, params, oracle, start, budget)
}

/// Like [`schedule`], with the curriculum supplied by the caller.
pub fn schedule_curriculum(
    task: Task,
    curriculum: &Curriculum,
    library: &SkillLibrary,
    params: &PolicyParams,
    oracle: &Oracle,
    start: &WorldState,
    budget: usize,
) -> Result<ExecutionTrace, ExecError> {
    let (mut trace, state) = execute(curriculum, library, params, oracle, start, budget)?;
    trace.task_success = Some(world::task_success(&state, task));
    Ok(trace)
}

/// A recognized caption and the frame where it became true.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observed {
    pub frame: usize,
    pub caption: Caption,
}

/// Chronological list of library captions seen to become true in the frames.
///
/// A caption is emitted at each frame where its verdict turns positive
/// (frame 0 counts if positive there); captions turning positive on the same
/// frame keep library order. Repeats are collapsed only when consecutive, so
/// a caption achieved again after something else happened reappears.
pub fn observe_subgoals(frames: &FrameSequence, library: &SkillLibrary, oracle: &Oracle) -> Vec<Observed> {
    let mut prev = vec![false; library.captions().len()];
    let mut out: Vec<Observed> = Vec::new();
    for (t, frame) in frames.frames().iter().enumerate() {
        for (k, &c) in library.captions().iter().enumerate() {
            let now = oracle.verdict(c, frame);
            if now && !prev[k] && out.last().map(|o| o.caption) != Some(c) {
                out.push(Observed { frame: t, caption: c });
            }
            prev[k] = now;
        }
    }
    out
}

pub fn infer_subgoals(frames: &FrameSequence, library: &SkillLibrary, oracle: &Oracle) -> Result<Curriculum, ExecError> {
    let seen = observe_subgoals(frames, library, oracle);
    if seen.is_empty() {
        return Err(ExecError::NothingObserved);
    }
    Ok(Curriculum::new(seen.into_iter().map(|o| o.caption).collect())?)
}

/// Infers the demonstrated subgoals and executes them from `reset(seed)`.
pub fn imitate(
    frames: &FrameSequence,
    library: &SkillLibrary,
    params: &PolicyParams,
    oracle: &Oracle,
    seed: u64,
    budget: usize,
) -> Result<ExecutionTrace, ExecError> {
    let curriculum = infer_subgoals(frames, library, oracle)?;
    let (mut trace, _) = execute(&curriculum, library, params, oracle, &world::reset(seed), budget)?;
    // The demonstration's final frame is the target; judged by the annotator.
    let target = frames.frames().last().expect("non-empty");
    let reached = target.on_top.iter().all(|(top, bottom)| trace.final_snapshot.on_top.contains(top, bottom))
        && (target.grasping.is_none() || target.grasping == trace.final_snapshot.grasping);
    trace.task_success = Some(trace.completed && reached);
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::ObjectId;

    #[test]
    fn library_dedups_and_checks() {
        let lib = SkillLibrary::for_tasks(&[Task::PairStack { top: ObjectId::Red, bottom: ObjectId::Blue }, Task::Grasp(ObjectId::Red)]);
        assert_eq!(lib.captions().len(), 2);
        let triple = decompose(Task::TripleStack);
        assert!(matches!(lib.check(&triple), Err(ExecError::MissingSkill(_))));
    }

    #[test]
    fn empty_demo_rejected() {
        assert!(matches!(FrameSequence::new(vec![]), Err(ExecError::EmptyDemo)));
        assert!(matches!(FrameSequence::from_json("[]"), Err(ExecError::EmptyDemo)));
        assert!(matches!(FrameSequence::from_json("{"), Err(ExecError::Demo(_))));
    }

    #[test]
    fn nothing_observed_is_an_error() {
        let frames = FrameSequence::new(vec![SceneSnapshot::empty(); 4]).unwrap();
        let r = infer_subgoals(&frames, &SkillLibrary::full(), &Oracle::perfect());
        assert!(matches!(r, Err(ExecError::NothingObserved)));
    }

    #[test]
    fn demo_json_round_trips() {
        let demo = record_demo(Task::TripleStack, 3).unwrap();
        assert_eq!(FrameSequence::from_json(&demo.to_json()).unwrap(), demo);
    }
}
