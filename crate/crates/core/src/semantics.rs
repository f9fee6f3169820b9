//! Caption oracle: a stand-in for a finetuned contrastive vision-language
//! model.
//!
//! Captions and goal labels are embedded as orthonormal vectors; a scene is
//! the sum of the vectors of the captions true in it, so the dot product with
//! a true caption is 1 and with a false one is 0. A caption is judged true
//! when its score exceeds `gamma`. Precision and recall errors are injected
//! at the verdict level with hash-seeded coin flips so the same
//! (caption, frame, seed) always receives the same verdict.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr_free::standard_normal;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::ParseError;
use crate::seeding::Mix;
use crate::world::{self, ObjectId, SceneSnapshot, Task};

pub const DEFAULT_DIMENSION: usize = 128;
pub const DEFAULT_GAMMA: f64 = 0.8;
pub const DEFAULT_EMBED_SEED: u64 = 0x00c1_1b;

/// Share of (caption, frame) pairs that are true when frames are drawn
/// uniformly over the 22 caption configurations: 33 true pairs out of 198.
pub const UNIFORM_TRUE_RATE: f64 = 33.0 / 198.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Caption {
    Grasping(ObjectId),
    OnTop { top: ObjectId, bottom: ObjectId },
}

impl Caption {
    pub const COUNT: usize = 9;

    pub fn all() -> [Caption; 9] {
        std::array::from_fn(|i| Caption::from_index(i).unwrap())
    }

    pub fn from_index(i: usize) -> Option<Caption> {
        match i {
            0..=2 => ObjectId::from_index(i).map(Caption::Grasping),
            3..=8 => {
                let k = i - 3;
                let top = ObjectId::from_index(k / 2)?;
                let others: Vec<ObjectId> = ObjectId::ALL.into_iter().filter(|&o| o != top).collect();
                Some(Caption::OnTop {
                    top,
                    bottom: others[k % 2],
                })
            }
            _ => None,
        }
    }

    pub fn index(&self) -> usize {
        match *self {
            Caption::Grasping(o) => o.index(),
            Caption::OnTop { top, bottom } => {
                let b = if bottom.index() > top.index() { bottom.index() - 1 } else { bottom.index() };
                3 + top.index() * 2 + b
            }
        }
    }

    pub fn on_top(top: ObjectId, bottom: ObjectId) -> Option<Caption> {
        (top != bottom).then_some(Caption::OnTop { top, bottom })
    }

    pub fn text(&self) -> String {
        match self {
            Caption::Grasping(o) => format!("The robot is grasping the {o} object"),
            Caption::OnTop { top, bottom } => format!("The {top} object is on top of the {bottom} object"),
        }
    }

    /// Ground truth, as an automated annotator reading the simulator would
    /// report it.
    pub fn holds_in(&self, snap: &SceneSnapshot) -> bool {
        match *self {
            Caption::Grasping(o) => snap.grasping == Some(o),
            Caption::OnTop { top, bottom } => snap.on_top.contains(top, bottom),
        }
    }

    pub fn parse(text: &str) -> Result<Caption, ParseError> {
        let err = || ParseError::Caption(text.to_string());
        let words = normalized_words(text);
        let w: Vec<&str> = words.iter().map(String::as_str).collect();
        match w.as_slice() {
            ["the", "robot", "is", "grasping", "the", c, "object"] => {
                Ok(Caption::Grasping(c.parse().map_err(|_| err())?))
            }
            ["the", t, "object", "is", "on", "top", "of", "the", b, "object"] => {
                let top: ObjectId = t.parse().map_err(|_| err())?;
                let bottom: ObjectId = b.parse().map_err(|_| err())?;
                Caption::on_top(top, bottom).ok_or_else(err)
            }
            _ => Err(err()),
        }
    }
}

/// Lower-cased words with surrounding punctuation stripped.
pub(crate) fn normalized_words(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()).to_ascii_lowercase())
        .filter(|w| !w.is_empty())
        .collect()
}

impl fmt::Display for Caption {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text())
    }
}

impl FromStr for Caption {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Caption::parse(s)
    }
}

impl Serialize for Caption {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.text())
    }
}

impl<'de> Deserialize<'de> for Caption {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Caption::parse(&s).map_err(serde::de::Error::custom)
    }
}

/// What a trajectory is labeled with and what the policy is conditioned on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GoalLabel {
    Caption(Caption),
    Task(Task),
}

impl GoalLabel {
    pub fn text(&self) -> String {
        match self {
            GoalLabel::Caption(c) => c.text(),
            GoalLabel::Task(t) => t.text(),
        }
    }

    /// Whether the goal holds in a frame according to the annotator.
    pub fn holds_in(&self, snap: &SceneSnapshot) -> bool {
        match self {
            GoalLabel::Caption(c) => c.holds_in(snap),
            GoalLabel::Task(t) => t.satisfied_by(snap),
        }
    }

    fn slot(&self) -> usize {
        match self {
            GoalLabel::Caption(c) => c.index(),
            GoalLabel::Task(t) => Caption::COUNT + t.index(),
        }
    }
}

impl fmt::Display for GoalLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text())
    }
}

impl From<Caption> for GoalLabel {
    fn from(c: Caption) -> Self {
        GoalLabel::Caption(c)
    }
}

impl From<Task> for GoalLabel {
    fn from(t: Task) -> Self {
        GoalLabel::Task(t)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingVector(pub Vec<f64>);

impl EmbeddingVector {
    pub fn zeros(dim: usize) -> Self {
        EmbeddingVector(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn dot(&self, other: &EmbeddingVector) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    fn add_assign(&mut self, other: &EmbeddingVector) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += b;
        }
    }
}

/// Text and scene encoders sharing one embedding space.
///
/// Holds one unit vector per caption (9) and per task label (10), built by
/// Gram-Schmidt on seeded Gaussian draws, so all 19 are mutually orthogonal.
#[derive(Clone, Debug, PartialEq)]
pub struct Embedder {
    dim: usize,
    seed: u64,
    vectors: Vec<EmbeddingVector>,
}

const LABEL_COUNT: usize = Caption::COUNT + 10;

impl Embedder {
    pub fn new(dim: usize, seed: u64) -> Embedder {
        assert!(dim >= LABEL_COUNT, "embedding dimension must be at least {LABEL_COUNT}");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut vectors: Vec<EmbeddingVector> = Vec::with_capacity(LABEL_COUNT);
        while vectors.len() < LABEL_COUNT {
            let mut v: Vec<f64> = (0..dim).map(|_| standard_normal(&mut rng)).collect();
            for u in &vectors {
                let proj: f64 = v.iter().zip(&u.0).map(|(a, b)| a * b).sum();
                for (a, b) in v.iter_mut().zip(&u.0) {
                    *a -= proj * b;
                }
            }
            let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            if n > 1e-6 {
                vectors.push(EmbeddingVector(v.into_iter().map(|a| a / n).collect()));
            }
        }
        Embedder { dim, seed, vectors }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn embed_text(&self, caption: Caption) -> &EmbeddingVector {
        &self.vectors[caption.index()]
    }

    pub fn embed_goal(&self, goal: GoalLabel) -> &EmbeddingVector {
        &self.vectors[goal.slot()]
    }

    /// Sum of the embeddings of every caption true in the frame.
    pub fn embed_scene(&self, snap: &SceneSnapshot) -> EmbeddingVector {
        let mut out = EmbeddingVector::zeros(self.dim);
        for c in Caption::all().iter().filter(|c| c.holds_in(snap)) {
            out.add_assign(self.embed_text(*c));
        }
        out
    }
}

impl Default for Embedder {
    fn default() -> Self {
        Embedder::new(DEFAULT_DIMENSION, DEFAULT_EMBED_SEED)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub gamma: f64,
    pub target_precision: f64,
    pub target_recall: f64,
    pub noise_seed: u64,
    pub dimension: usize,
    pub embed_seed: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            gamma: DEFAULT_GAMMA,
            target_precision: 1.0,
            target_recall: 1.0,
            noise_seed: 0,
            dimension: DEFAULT_DIMENSION,
            embed_seed: DEFAULT_EMBED_SEED,
        }
    }
}

impl OracleConfig {
    pub fn perfect() -> Self {
        OracleConfig::default()
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(format!("gamma must lie in (0,1), got {}", self.gamma));
        }
        for (name, v) in [("precision", self.target_precision), ("recall", self.target_recall)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(format!("{name} must lie in (0,1], got {v}"));
            }
        }
        if self.dimension < LABEL_COUNT {
            return Err(format!("dimension must be at least {LABEL_COUNT}"));
        }
        Ok(())
    }

    /// Probability of flipping a false caption to true.
    ///
    /// Chosen so that precision equals `target_precision` when frames are
    /// uniform over the caption configurations (true-pair rate
    /// [`UNIFORM_TRUE_RATE`]). Under any other frame distribution this is an
    /// approximation.
    pub fn false_positive_rate(&self) -> f64 {
        let p = self.target_precision;
        let r = self.target_recall;
        let pi = UNIFORM_TRUE_RATE;
        (r * pi * (1.0 - p) / (p * (1.0 - pi))).clamp(0.0, 1.0)
    }

    pub fn is_noiseless(&self) -> bool {
        self.target_precision >= 1.0 && self.target_recall >= 1.0
    }
}

/// The caption-scoring oracle: an embedder plus thresholding and noise.
#[derive(Clone, Debug)]
pub struct Oracle {
    config: OracleConfig,
    embedder: Arc<Embedder>,
    fp_rate: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Detection {
    pub timestep: usize,
    pub caption: Caption,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PrecisionRecall {
    pub precision: f64,
    pub recall: f64,
    pub true_pairs: usize,
    pub positive_verdicts: usize,
}

impl Oracle {
    pub fn new(config: OracleConfig) -> Oracle {
        let embedder = Arc::new(Embedder::new(config.dimension, config.embed_seed));
        Oracle::with_embedder(config, embedder)
    }

    pub fn with_embedder(config: OracleConfig, embedder: Arc<Embedder>) -> Oracle {
        let fp_rate = config.false_positive_rate();
        Oracle {
            config,
            embedder,
            fp_rate,
        }
    }

    pub fn perfect() -> Oracle {
        Oracle::new(OracleConfig::perfect())
    }

    pub fn config(&self) -> &OracleConfig {
        &self.config
    }

    pub fn embedder(&self) -> &Arc<Embedder> {
        &self.embedder
    }

    pub fn score(&self, caption: Caption, snap: &SceneSnapshot) -> f64 {
        self.embedder.embed_text(caption).dot(&self.embedder.embed_scene(snap))
    }

    /// Thresholded, noise-perturbed judgement of whether `caption` describes
    /// the frame.
    pub fn verdict(&self, caption: Caption, snap: &SceneSnapshot) -> bool {
        let base = self.score(caption, snap) > self.config.gamma;
        if self.config.is_noiseless() {
            return base;
        }
        let u = Mix::new(self.config.noise_seed)
            .push(caption.index() as u64)
            .push(snap.grasping.map_or(3, |o| o.index() as u64))
            .push(snap.on_top.bits() as u64)
            .push(snap.view)
            .unit();
        if base {
            u >= 1.0 - self.config.target_recall
        } else {
            u < self.fp_rate
        }
    }

    /// Earliest positive frame for each subgoal, sorted by frame index
    /// (ties keep the subgoal order). Subgoals never recognized are omitted.
    pub fn detect_achieved(&self, frames: &[SceneSnapshot], subgoals: &[Caption]) -> Vec<Detection> {
        let mut hits: Vec<(usize, usize, Caption)> = subgoals
            .iter()
            .enumerate()
            .filter_map(|(k, &c)| {
                frames
                    .iter()
                    .position(|f| self.verdict(c, f))
                    .map(|t| (t, k, c))
            })
            .collect();
        hits.sort_by_key(|&(t, k, _)| (t, k));
        hits.into_iter()
            .map(|(timestep, _, caption)| Detection { timestep, caption })
            .collect()
    }

    /// Monte Carlo precision and recall of the verdicts against annotator
    /// truth over `n_states` random reachable states, all nine captions each.
    pub fn measure_precision_recall(&self, n_states: usize, seed: u64) -> PrecisionRecall {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut tp, mut fp, mut fneg) = (0usize, 0usize, 0usize);
        for _ in 0..n_states {
            let snap = world::snapshot(&world::random_reachable_state(&mut rng));
            for c in Caption::all() {
                match (c.holds_in(&snap), self.verdict(c, &snap)) {
                    (true, true) => tp += 1,
                    (false, true) => fp += 1,
                    (true, false) => fneg += 1,
                    (false, false) => {}
                }
            }
        }
        let ratio = |num: usize, den: usize| if den == 0 { 1.0 } else { num as f64 / den as f64 };
        PrecisionRecall {
            precision: ratio(tp, tp + fp),
            recall: ratio(tp, tp + fneg),
            true_pairs: tp + fneg,
            positive_verdicts: tp + fp,
        }
    }
}

/// Box-Muller draws, kept local so the embedding construction does not
/// depend on a distribution crate's sampling algorithm.
mod rand_distr_free {
    use rand::Rng;

    pub fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
        let u1: f64 = 1.0 - rng.gen::<f64>();
        let u2: f64 = rng.gen();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{reset, step, OnTopSet, Point, WorldState};
    use ObjectId::*;

    fn snap(grasping: Option<ObjectId>, pairs: &[(ObjectId, ObjectId)]) -> SceneSnapshot {
        SceneSnapshot {
            grasping,
            on_top: pairs.iter().copied().collect::<OnTopSet>(),
            view: 0,
        }
    }

    #[test]
    fn nine_captions_round_trip_text() {
        let all = Caption::all();
        for (i, c) in all.iter().enumerate() {
            assert_eq!(c.index(), i);
            assert_eq!(Caption::parse(&c.text()).unwrap(), *c);
            assert_eq!(Caption::parse(&c.text().to_uppercase()).unwrap(), *c);
        }
        let distinct: std::collections::HashSet<_> = all.iter().map(|c| c.text()).collect();
        assert_eq!(distinct.len(), 9);
        assert!(Caption::parse("The robot dances").is_err());
        assert!(Caption::parse("The red object is on top of the red object").is_err());
    }

    #[test]
    fn text_embeddings_are_unit_and_nearly_orthogonal() {
        let e = Embedder::default();
        let a = e.embed_text(Caption::Grasping(Red));
        assert_eq!(a, e.embed_text(Caption::Grasping(Red)));
        assert!((a.dot(a) - 1.0).abs() < 1e-9);
        let all = Caption::all();
        let mut pairs = 0;
        for i in 0..9 {
            for j in 0..9 {
                if i != j {
                    let d = e.embed_text(all[i]).dot(e.embed_text(all[j]));
                    assert!(d.abs() <= 0.05, "{} vs {}: {d}", all[i], all[j]);
                    pairs += 1;
                }
            }
        }
        assert_eq!(pairs, 72);
        for t in Task::all() {
            let v = e.embed_goal(GoalLabel::Task(t));
            assert!((v.norm() - 1.0).abs() < 1e-9);
            for c in all {
                assert!(v.dot(e.embed_text(c)).abs() <= 0.05);
            }
        }
    }

    #[test]
    fn embedder_is_stable_per_seed() {
        assert_eq!(Embedder::new(64, 3), Embedder::new(64, 3));
        assert_ne!(Embedder::new(64, 3), Embedder::new(64, 4));
    }

    #[test]
    fn scene_embedding_sums_true_captions() {
        let e = Embedder::default();
        assert_eq!(e.embed_scene(&SceneSnapshot::empty()), EmbeddingVector::zeros(128));
        assert_eq!(&e.embed_scene(&snap(Some(Red), &[])), e.embed_text(Caption::Grasping(Red)));
        let s = e.embed_scene(&snap(Some(Green), &[(Red, Blue)]));
        let expected: Vec<f64> = e
            .embed_text(Caption::Grasping(Green))
            .0
            .iter()
            .zip(&e.embed_text(Caption::OnTop { top: Red, bottom: Blue }).0)
            .map(|(a, b)| a + b)
            .collect();
        assert_eq!(s.0, expected);
    }

    #[test]
    fn scores_separate_true_from_false() {
        let o = Oracle::perfect();
        for c in Caption::all() {
            assert_eq!(o.score(c, &SceneSnapshot::empty()), 0.0);
        }
        let s = snap(Some(Green), &[(Red, Blue)]);
        let k = 2.0;
        for c in Caption::all() {
            let v = o.score(c, &s);
            if c.holds_in(&s) {
                assert!(v >= 0.9 && (v - 1.0).abs() <= 0.1 * k);
                assert!(v > o.config().gamma);
            } else {
                assert!(v <= 0.05 * k, "{c}: {v}");
            }
        }
    }

    #[test]
    fn threshold_separation_over_all_reachable_configurations() {
        let o = Oracle::perfect();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut min_true = f64::INFINITY;
        let mut max_false = f64::NEG_INFINITY;
        let mut seen = std::collections::HashSet::new();
        for _ in 0..2000 {
            let s = world::snapshot(&world::random_reachable_state(&mut rng));
            seen.insert((s.grasping, s.on_top));
            for c in Caption::all() {
                let v = o.score(c, &s);
                if c.holds_in(&s) {
                    min_true = min_true.min(v);
                } else {
                    max_false = max_false.max(v);
                }
            }
        }
        assert_eq!(seen.len(), 22);
        assert!(min_true - max_false >= 0.5);
    }

    #[test]
    fn score_ignores_coordinates() {
        let o = Oracle::perfect();
        let a = WorldState::from_parts(
            [Point::new(1.0, 1.0), Point::new(9.0, 9.0), Point::new(17.0, 1.0)],
            [None; 3],
            None,
            Point::new(10.0, 10.0),
        )
        .unwrap();
        let b = WorldState::from_parts(
            [Point::new(5.0, 13.0), Point::new(13.0, 5.0), Point::new(1.0, 1.0)],
            [None; 3],
            None,
            Point::new(3.0, 3.0),
        )
        .unwrap();
        let (sa, sb) = (world::snapshot(&a), world::snapshot(&b));
        assert_ne!(sa.view, sb.view);
        for c in Caption::all() {
            assert_eq!(o.score(c, &sa), o.score(c, &sb));
        }
    }

    #[test]
    fn perfect_verdict_matches_annotator() {
        let o = Oracle::perfect();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..1000 {
            let s = world::snapshot(&world::random_reachable_state(&mut rng));
            for c in Caption::all() {
                assert_eq!(o.verdict(c, &s), c.holds_in(&s));
            }
        }
    }

    #[test]
    fn noisy_verdict_is_deterministic() {
        let o = Oracle::new(OracleConfig {
            target_recall: 0.5,
            target_precision: 0.5,
            noise_seed: 9,
            ..OracleConfig::default()
        });
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let s = world::snapshot(&world::random_reachable_state(&mut rng));
            for c in Caption::all() {
                assert_eq!(o.verdict(c, &s), o.verdict(c, &s));
            }
        }
    }

    #[test]
    fn recall_knob_is_recovered() {
        let o = Oracle::new(OracleConfig {
            target_recall: 0.8,
            noise_seed: 5,
            ..OracleConfig::default()
        });
        let pr = o.measure_precision_recall(10_000, 17);
        assert!(pr.true_pairs >= 10_000);
        assert!((0.78..=0.82).contains(&pr.recall), "{pr:?}");
        assert_eq!(pr.precision, 1.0);
    }

    #[test]
    fn perfect_config_measures_perfectly() {
        let pr = Oracle::perfect().measure_precision_recall(500, 1);
        assert_eq!((pr.precision, pr.recall), (1.0, 1.0));
    }

    #[test]
    fn detection_reports_earliest_frames_in_order() {
        let o = Oracle::perfect();
        let s0 = reset(4);
        let plan = world::scripted_expert(Task::PairStack { top: Red, bottom: Blue }, &s0).unwrap();
        let mut frames = vec![world::snapshot(&s0)];
        let mut s = s0;
        for a in plan {
            s = step(&s, a).unwrap();
            frames.push(world::snapshot(&s));
        }
        let goals = [Caption::Grasping(Red), Caption::OnTop { top: Red, bottom: Blue }];
        let d = o.detect_achieved(&frames, &goals);
        assert_eq!(
            d,
            vec![
                Detection { timestep: 1, caption: goals[0] },
                Detection { timestep: 2, caption: goals[1] },
            ]
        );
        let still: Vec<SceneSnapshot> = vec![world::snapshot(&reset(4)); 5];
        assert!(o.detect_achieved(&still, &goals).is_empty());
        let held = snap(Some(Red), &[]);
        assert_eq!(o.detect_achieved(&[held], &goals)[0].timestep, 0);
    }
}
