//! Symbolic blocks world: three colored objects in a 20×20 cm basket,
//! manipulated by position-controlled pick and place.
//!
//! The basket floor is divided into a 10×10 lattice of 2 cm slots. Objects
//! resting on the floor always sit at a slot center; stacked objects share
//! the position of the object beneath them. An [`Action`] is a continuous
//! target: with an empty gripper it picks the nearest stack top within
//! [`PICK_TOLERANCE_CM`], while holding it either snaps the object onto a
//! stack top within [`SNAP_TOLERANCE_CM`] or settles it into the floor slot
//! containing the target.

use std::collections::{HashSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::WorldError;

pub const WORKSPACE_CM: f64 = 20.0;
pub const GRID_SIDE: usize = 10;
pub const SLOT_CM: f64 = WORKSPACE_CM / GRID_SIDE as f64;
pub const FOOTPRINT_CM: f64 = 4.0;
pub const PICK_TOLERANCE_CM: f64 = 2.0;
/// Alignment needed to set an object down on top of another one.
pub const SNAP_TOLERANCE_CM: f64 = 0.4;
pub const MAX_TOWER_HEIGHT: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ObjectId {
    Red,
    Green,
    Blue,
}

impl ObjectId {
    pub const ALL: [ObjectId; 3] = [ObjectId::Red, ObjectId::Green, ObjectId::Blue];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<ObjectId> {
        Self::ALL.get(i).copied()
    }

    pub fn color(self) -> &'static str {
        match self {
            ObjectId::Red => "red",
            ObjectId::Green => "green",
            ObjectId::Blue => "blue",
        }
    }
}

impl fmt::Display for ObjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.color())
    }
}

impl FromStr for ObjectId {
    type Err = WorldError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "red" => Ok(ObjectId::Red),
            "green" => Ok(ObjectId::Green),
            "blue" => Ok(ObjectId::Blue),
            other => Err(WorldError::UnknownColor(other.to_string())),
        }
    }
}

impl Serialize for ObjectId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.color())
    }
}

impl<'de> Deserialize<'de> for ObjectId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn chebyshev(self, other: Point) -> f64 {
        (self.x - other.x).abs().max((self.y - other.y).abs())
    }

    /// Center of the floor slot containing this point.
    pub fn slot_center(self) -> Point {
        let snap = |v: f64| {
            let i = ((v / SLOT_CM).floor() as isize).clamp(0, GRID_SIDE as isize - 1);
            (i as f64 + 0.5) * SLOT_CM
        };
        Point::new(snap(self.x), snap(self.y))
    }

    fn bits(self) -> (u64, u64) {
        (self.x.to_bits(), self.y.to_bits())
    }
}

/// A gripper target inside the workspace.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Action {
    pub target: Point,
}

impl Action {
    pub fn new(x: f64, y: f64) -> Self {
        Action {
            target: Point::new(x, y),
        }
    }

    pub fn is_in_workspace(&self) -> bool {
        let ok = |v: f64| v.is_finite() && (0.0..WORKSPACE_CM).contains(&v);
        ok(self.target.x) && ok(self.target.y)
    }
}

/// Set of ordered (top, bottom) pairs, packed into nine bits.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct OnTopSet(u16);

impl OnTopSet {
    fn bit(top: ObjectId, bottom: ObjectId) -> u16 {
        1 << (top.index() * 3 + bottom.index())
    }

    pub fn insert(&mut self, top: ObjectId, bottom: ObjectId) {
        self.0 |= Self::bit(top, bottom);
    }

    pub fn contains(&self, top: ObjectId, bottom: ObjectId) -> bool {
        self.0 & Self::bit(top, bottom) != 0
    }

    pub fn is_empty(&self) -> bool {
        self.0 == 0
    }

    pub fn len(&self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn iter(&self) -> impl Iterator<Item = (ObjectId, ObjectId)> + '_ {
        ObjectId::ALL.into_iter().flat_map(move |t| {
            ObjectId::ALL
                .into_iter()
                .filter(move |&b| self.contains(t, b))
                .map(move |b| (t, b))
        })
    }

    pub fn bits(&self) -> u16 {
        self.0
    }

    /// True when the pairs form a chain of three objects.
    pub fn has_triple_chain(&self) -> bool {
        self.iter()
            .any(|(top, mid)| self.iter().any(|(t, bottom)| t == mid && bottom != top))
    }
}

impl FromIterator<(ObjectId, ObjectId)> for OnTopSet {
    fn from_iter<I: IntoIterator<Item = (ObjectId, ObjectId)>>(iter: I) -> Self {
        let mut set = OnTopSet::default();
        for (t, b) in iter {
            set.insert(t, b);
        }
        set
    }
}

/// Symbolic stand-in for a camera frame: which captions are true, plus a
/// fingerprint of the rendered arrangement.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SceneSnapshot {
    pub grasping: Option<ObjectId>,
    #[serde(with = "on_top_serde")]
    pub on_top: OnTopSet,
    /// Fingerprint of object and effector positions. Two frames with the same
    /// predicates but different layouts look different to the oracle.
    #[serde(default)]
    pub view: u64,
}

mod on_top_serde {
    use super::{ObjectId, OnTopSet};
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(set: &OnTopSet, s: S) -> Result<S::Ok, S::Error> {
        let pairs: Vec<[ObjectId; 2]> = set.iter().map(|(t, b)| [t, b]).collect();
        pairs.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<OnTopSet, D::Error> {
        let pairs = Vec::<[ObjectId; 2]>::deserialize(d)?;
        let mut set = OnTopSet::default();
        for [t, b] in pairs {
            if t == b {
                return Err(serde::de::Error::custom(format!("object {t} cannot be on top of itself")));
            }
            set.insert(t, b);
        }
        Ok(set)
    }
}

impl SceneSnapshot {
    pub fn empty() -> Self {
        SceneSnapshot::default()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Task {
    Grasp(ObjectId),
    PairStack { top: ObjectId, bottom: ObjectId },
    TripleStack,
}

impl Task {
    /// Every task expressible in the instruction grammar.
    pub fn all() -> Vec<Task> {
        let mut tasks: Vec<Task> = ObjectId::ALL.iter().map(|&o| Task::Grasp(o)).collect();
        for top in ObjectId::ALL {
            for bottom in ObjectId::ALL {
                if top != bottom {
                    tasks.push(Task::PairStack { top, bottom });
                }
            }
        }
        tasks.push(Task::TripleStack);
        tasks
    }

    pub fn pair(top: ObjectId, bottom: ObjectId) -> Result<Task, WorldError> {
        if top == bottom {
            return Err(WorldError::SameObject(top));
        }
        Ok(Task::PairStack { top, bottom })
    }

    /// Position of this task in [`Task::all`].
    pub fn index(&self) -> usize {
        match *self {
            Task::Grasp(o) => o.index(),
            Task::PairStack { top, bottom } => {
                let b = if bottom.index() > top.index() { bottom.index() - 1 } else { bottom.index() };
                3 + top.index() * 2 + b
            }
            Task::TripleStack => 9,
        }
    }

    /// Canonical instruction text.
    pub fn text(&self) -> String {
        match self {
            Task::Grasp(o) => format!("Grasp the {o} object"),
            Task::PairStack { top, bottom } => {
                format!("Stack the {top} object on top of the {bottom} object")
            }
            Task::TripleStack => "Stack all three objects".to_string(),
        }
    }

    pub fn satisfied_by(&self, snap: &SceneSnapshot) -> bool {
        match *self {
            Task::Grasp(o) => snap.grasping == Some(o),
            Task::PairStack { top, bottom } => snap.on_top.contains(top, bottom),
            Task::TripleStack => snap.on_top.has_triple_chain(),
        }
    }

    /// Default training episode cap: ten times the optimal solution length.
    pub fn default_episode_cap(&self) -> usize {
        match self {
            Task::TripleStack => 40,
            _ => 20,
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WorldState {
    positions: [Point; 3],
    below: [Option<ObjectId>; 3],
    holding: Option<ObjectId>,
    effector: Point,
    step_count: u64,
}

impl WorldState {
    /// Builds a state from explicit parts and checks every invariant.
    pub fn from_parts(
        positions: [Point; 3],
        below: [Option<ObjectId>; 3],
        holding: Option<ObjectId>,
        effector: Point,
    ) -> Result<WorldState, WorldError> {
        let state = WorldState {
            positions,
            below,
            holding,
            effector,
            step_count: 0,
        };
        state.check_invariants()?;
        Ok(state)
    }

    pub fn position(&self, obj: ObjectId) -> Point {
        self.positions[obj.index()]
    }

    pub fn below(&self, obj: ObjectId) -> Option<ObjectId> {
        self.below[obj.index()]
    }

    pub fn above(&self, obj: ObjectId) -> Option<ObjectId> {
        ObjectId::ALL.into_iter().find(|&o| self.below(o) == Some(obj))
    }

    pub fn holding(&self) -> Option<ObjectId> {
        self.holding
    }

    pub fn effector(&self) -> Point {
        self.effector
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// Number of objects underneath `obj` (0 on the floor or in the gripper).
    pub fn level(&self, obj: ObjectId) -> usize {
        let mut level = 0;
        let mut cur = obj;
        while let Some(b) = self.below(cur) {
            level += 1;
            cur = b;
            if level > MAX_TOWER_HEIGHT {
                break;
            }
        }
        level
    }

    /// Height of the tower whose top is `top`.
    pub fn tower_height(&self, top: ObjectId) -> usize {
        self.level(top) + 1
    }

    pub fn is_stack_top(&self, obj: ObjectId) -> bool {
        self.holding != Some(obj) && self.above(obj).is_none()
    }

    pub fn is_base(&self, obj: ObjectId) -> bool {
        self.holding != Some(obj) && self.below(obj).is_none()
    }

    pub fn check_invariants(&self) -> Result<(), WorldError> {
        let bad = |msg: String| Err(WorldError::InvalidState(msg));
        for obj in ObjectId::ALL {
            let p = self.position(obj);
            if !(Action { target: p }).is_in_workspace() {
                return bad(format!("{obj} outside workspace"));
            }
            if self.below(obj) == Some(obj) {
                return bad(format!("{obj} rests on itself"));
            }
            if self.level(obj) >= MAX_TOWER_HEIGHT {
                return bad(format!("cycle or over-tall tower under {obj}"));
            }
            if let Some(b) = self.below(obj) {
                if self.holding == Some(b) {
                    return bad(format!("{obj} rests on held {b}"));
                }
                if self.position(b) != p {
                    return bad(format!("{obj} not aligned with {b}"));
                }
            }
            let supporters = ObjectId::ALL.iter().filter(|&&o| self.below(o) == Some(obj)).count();
            if supporters > 1 {
                return bad(format!("two objects on {obj}"));
            }
        }
        if let Some(h) = self.holding {
            if self.below(h).is_some() || self.above(h).is_some() {
                return bad(format!("held {h} is part of a stack"));
            }
        }
        let bases: Vec<ObjectId> = ObjectId::ALL.into_iter().filter(|&o| self.is_base(o)).collect();
        for (i, &a) in bases.iter().enumerate() {
            if self.position(a).slot_center() != self.position(a) {
                return bad(format!("{a} off the floor lattice"));
            }
            for &b in &bases[i + 1..] {
                if self.position(a).chebyshev(self.position(b)) < FOOTPRINT_CM {
                    return bad(format!("{a} and {b} overlap"));
                }
            }
        }
        Ok(())
    }
}

/// Initial layout: three floor objects at distinct, non-overlapping slots,
/// and the effector somewhere uniformly random above the basket.
pub fn reset(seed: u64) -> WorldState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    reset_with(&mut rng)
}

pub fn reset_with<R: Rng>(rng: &mut R) -> WorldState {
    let slots = separated_slots(rng);
    let effector = random_action(rng).target;
    WorldState {
        positions: slots,
        below: [None; 3],
        holding: None,
        effector,
        step_count: 0,
    }
}

fn slot_point(ix: usize, iy: usize) -> Point {
    Point::new((ix as f64 + 0.5) * SLOT_CM, (iy as f64 + 0.5) * SLOT_CM)
}

fn separated_slots<R: Rng>(rng: &mut R) -> [Point; 3] {
    loop {
        let pts: [Point; 3] = std::array::from_fn(|_| {
            slot_point(rng.gen_range(0..GRID_SIDE), rng.gen_range(0..GRID_SIDE))
        });
        let ok = (0..3).all(|i| (i + 1..3).all(|j| pts[i].chebyshev(pts[j]) >= FOOTPRINT_CM));
        if ok {
            return pts;
        }
    }
}

/// Applies one pick-or-place action. Never fails for in-workspace targets.
pub fn step(state: &WorldState, action: Action) -> Result<WorldState, WorldError> {
    if !action.is_in_workspace() {
        return Err(WorldError::OutOfWorkspace {
            x: action.target.x,
            y: action.target.y,
        });
    }
    let target = action.target;
    let mut next = state.clone();
    match state.holding {
        None => {
            let pick = nearest(state, target, PICK_TOLERANCE_CM, |o| state.is_stack_top(o));
            if let Some(obj) = pick {
                next.below[obj.index()] = None;
                next.holding = Some(obj);
            }
        }
        Some(held) => {
            let onto = nearest(state, target, SNAP_TOLERANCE_CM, |o| {
                o != held && state.is_stack_top(o) && state.tower_height(o) < MAX_TOWER_HEIGHT
            });
            if let Some(t) = onto {
                next.below[held.index()] = Some(t);
                next.positions[held.index()] = state.position(t);
                next.holding = None;
            } else {
                let slot = target.slot_center();
                let clear = ObjectId::ALL
                    .into_iter()
                    .filter(|&o| o != held && state.is_base(o))
                    .all(|o| state.position(o).chebyshev(slot) >= FOOTPRINT_CM);
                if clear {
                    next.positions[held.index()] = slot;
                    next.holding = None;
                }
            }
        }
    }
    if let Some(h) = next.holding {
        next.positions[h.index()] = target;
    }
    next.effector = target;
    next.step_count += 1;
    Ok(next)
}

fn nearest(
    state: &WorldState,
    target: Point,
    tolerance: f64,
    eligible: impl Fn(ObjectId) -> bool,
) -> Option<ObjectId> {
    let mut best: Option<(f64, ObjectId)> = None;
    for obj in ObjectId::ALL {
        if !eligible(obj) {
            continue;
        }
        let d = state.position(obj).chebyshev(target);
        if d < tolerance && best.map_or(true, |(bd, _)| d < bd) {
            best = Some((d, obj));
        }
    }
    best.map(|(_, o)| o)
}

pub fn snapshot(state: &WorldState) -> SceneSnapshot {
    let on_top = ObjectId::ALL
        .into_iter()
        .filter_map(|t| state.below(t).map(|b| (t, b)))
        .collect();
    SceneSnapshot {
        grasping: state.holding,
        on_top,
        view: view_fingerprint(state),
    }
}

fn view_fingerprint(state: &WorldState) -> u64 {
    let mut h = crate::seeding::Mix::new(0x5ce7e);
    for p in state.positions.iter().chain(std::iter::once(&state.effector)) {
        let (x, y) = p.bits();
        h = h.push(x).push(y);
    }
    h.push(state.holding.map_or(3, |o| o.index() as u64)).finish()
}

pub fn task_success(state: &WorldState, task: Task) -> bool {
    match task {
        Task::Grasp(o) => state.holding == Some(o),
        Task::PairStack { top, bottom } => state.below(top) == Some(bottom),
        Task::TripleStack => ObjectId::ALL.into_iter().any(|o| state.level(o) == 2),
    }
}

/// Uniform target over the whole workspace.
pub fn random_action<R: Rng>(rng: &mut R) -> Action {
    Action::new(rng.gen_range(0.0..WORKSPACE_CM), rng.gen_range(0.0..WORKSPACE_CM))
}

/// Result of a Monte Carlo sparseness measurement.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SparsenessEstimate {
    /// Mean steps-to-success over uncensored trials; `None` when every
    /// trial hit the step cap.
    pub mean: Option<f64>,
    /// Mean of min(steps, cap) over all trials: a lower bound on the true
    /// sparseness whenever some trials are censored.
    pub lower_bound: f64,
    pub censored_fraction: f64,
    pub trials: usize,
    pub max_steps: u64,
}

impl SparsenessEstimate {
    pub fn all_censored(&self) -> bool {
        self.mean.is_none()
    }

    pub fn uncensored(&self) -> usize {
        self.trials - (self.censored_fraction * self.trials as f64).round() as usize
    }

    /// Headline figure: the uncensored mean when nothing was censored,
    /// otherwise the censored lower bound.
    pub fn value(&self) -> f64 {
        if self.censored_fraction > 0.0 {
            self.lower_bound
        } else {
            self.mean.unwrap_or(self.lower_bound)
        }
    }

    /// Aggregates per-trial step counts; `None` marks a censored trial.
    pub fn from_trials(outcomes: &[Option<u64>], max_steps: u64) -> SparsenessEstimate {
        let trials = outcomes.len();
        let hits: Vec<u64> = outcomes.iter().flatten().copied().collect();
        let censored = trials - hits.len();
        let mean = (!hits.is_empty()).then(|| hits.iter().sum::<u64>() as f64 / hits.len() as f64);
        let total: f64 = outcomes.iter().map(|o| o.unwrap_or(max_steps) as f64).sum();
        SparsenessEstimate {
            mean,
            lower_bound: total / trials as f64,
            censored_fraction: censored as f64 / trials as f64,
            trials,
            max_steps,
        }
    }
}

/// Runs `trials` continuing random-action rollouts from fresh resets and
/// counts steps until the task first succeeds.
pub fn estimate_sparseness(
    task: Task,
    max_steps: u64,
    trials: usize,
    seed: u64,
) -> Result<SparsenessEstimate, WorldError> {
    if max_steps == 0 || trials == 0 {
        return Err(WorldError::InvalidArgument("max_steps and trials must be positive".into()));
    }
    use rayon::prelude::*;
    let outcomes: Vec<Option<u64>> = (0..trials as u64)
        .into_par_iter()
        .map(|i| {
            let trial_seed = crate::seeding::derive(seed, &[i]);
            let mut rng = ChaCha8Rng::seed_from_u64(trial_seed);
            let mut state = reset_with(&mut rng);
            steps_until(&mut state, &mut rng, max_steps, |s| task_success(s, task))
        })
        .collect();
    Ok(SparsenessEstimate::from_trials(&outcomes, max_steps))
}

fn steps_until<R: Rng>(
    state: &mut WorldState,
    rng: &mut R,
    max_steps: u64,
    done: impl Fn(&WorldState) -> bool,
) -> Option<u64> {
    for n in 1..=max_steps {
        *state = step(state, random_action(rng)).expect("random actions stay in the workspace");
        if done(state) {
            return Some(n);
        }
    }
    None
}

/// Shortest action sequence solving `task` from `state`.
///
/// Breadth-first search over symbolic configurations. Candidate targets are
/// the object positions plus one free floor slot; which free slot is used
/// never changes the number of moves needed.
///
/// For the triple stack the expert builds the canonical tower (red on blue,
/// green on red), so its demonstrations follow the rule curriculum.
pub fn scripted_expert(task: Task, state: &WorldState) -> Result<Vec<Action>, WorldError> {
    let plan = match task {
        Task::TripleStack => plan_until(state, |s| {
            s.below(ObjectId::Red) == Some(ObjectId::Blue) && s.below(ObjectId::Green) == Some(ObjectId::Red)
        }),
        _ => plan_until(state, |s| task_success(s, task)),
    };
    plan.ok_or_else(|| WorldError::Unsolvable(task.text()))
}

/// Shortest action sequence (at most 8 moves) reaching a state where `done`
/// holds.
pub fn plan_until(state: &WorldState, done: impl Fn(&WorldState) -> bool) -> Option<Vec<Action>> {
    const MAX_DEPTH: usize = 8;
    let key = |s: &WorldState| {
        let pos: Vec<(u64, u64)> = s.positions.iter().map(|p| p.bits()).collect();
        (pos, s.below, s.holding)
    };
    let mut seen = HashSet::new();
    let mut queue = VecDeque::new();
    seen.insert(key(state));
    queue.push_back((state.clone(), Vec::new()));
    while let Some((s, plan)) = queue.pop_front() {
        if done(&s) {
            return Some(plan);
        }
        if plan.len() >= MAX_DEPTH {
            continue;
        }
        for action in candidate_actions(&s) {
            let next = step(&s, action).expect("candidate targets lie in the workspace");
            if seen.insert(key(&next)) {
                let mut p = plan.clone();
                p.push(action);
                queue.push_back((next, p));
            }
        }
    }
    None
}

fn candidate_actions(state: &WorldState) -> Vec<Action> {
    let mut out: Vec<Action> = Vec::with_capacity(4);
    for obj in ObjectId::ALL {
        if state.holding == Some(obj) {
            continue;
        }
        let a = Action { target: state.position(obj) };
        if !out.contains(&a) {
            out.push(a);
        }
    }
    if let Some(held) = state.holding {
        if let Some(slot) = free_floor_slot(state, held) {
            out.push(Action { target: slot });
        }
    }
    out
}

/// First lattice slot (row-major) where `held` could be set down on the floor.
pub fn free_floor_slot(state: &WorldState, held: ObjectId) -> Option<Point> {
    (0..GRID_SIDE)
        .flat_map(|iy| (0..GRID_SIDE).map(move |ix| slot_point(ix, iy)))
        .find(|&slot| {
            ObjectId::ALL
                .into_iter()
                .filter(|&o| o != held && state.is_base(o))
                .all(|o| state.position(o).chebyshev(slot) >= FOOTPRINT_CM)
        })
}

/// Every distinct caption-level configuration a state can be in: which
/// object is held (if any) and how the rest are stacked. There are 22.
pub fn reachable_configurations() -> Vec<(Option<ObjectId>, Vec<Vec<ObjectId>>)> {
    let mut configs = Vec::new();
    let holds = std::iter::once(None).chain(ObjectId::ALL.into_iter().map(Some));
    for held in holds {
        let rest: Vec<ObjectId> = ObjectId::ALL.into_iter().filter(|&o| Some(o) != held).collect();
        // All separate.
        configs.push((held, rest.iter().map(|&o| vec![o]).collect()));
        // One ordered pair (bottom first) plus any singleton.
        for &bottom in &rest {
            for &top in &rest {
                if top == bottom {
                    continue;
                }
                let mut towers = vec![vec![bottom, top]];
                towers.extend(rest.iter().filter(|&&o| o != top && o != bottom).map(|&o| vec![o]));
                configs.push((held, towers));
            }
        }
        if rest.len() == 3 {
            for &a in &rest {
                for &b in &rest {
                    for &c in &rest {
                        if a != b && b != c && a != c {
                            configs.push((held, vec![vec![a, b, c]]));
                        }
                    }
                }
            }
        }
    }
    configs
}

/// Samples a caption configuration uniformly from
/// [`reachable_configurations`] and realizes it on a random layout.
pub fn random_reachable_state<R: Rng>(rng: &mut R) -> WorldState {
    let configs = reachable_configurations();
    let (held, towers) = &configs[rng.gen_range(0..configs.len())];
    let slots = separated_slots(rng);
    let mut positions = slots;
    let mut below = [None; 3];
    for (i, tower) in towers.iter().enumerate() {
        for (lvl, &obj) in tower.iter().enumerate() {
            positions[obj.index()] = slots[i];
            if lvl > 0 {
                below[obj.index()] = Some(tower[lvl - 1]);
            }
        }
    }
    let effector = match held {
        Some(h) => {
            positions[h.index()] = slots[2];
            slots[2]
        }
        None => slot_point(rng.gen_range(0..GRID_SIDE), rng.gen_range(0..GRID_SIDE)),
    };
    WorldState {
        positions,
        below,
        holding: *held,
        effector,
        step_count: 0,
    }
}
