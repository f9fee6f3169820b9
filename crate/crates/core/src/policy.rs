//! Goal-conditioned policy over a 10×10 grid of gripper targets, trained by
//! behavioral cloning.
//!
//! The network is a two-hidden-layer tanh MLP. Its input is the state
//! feature vector followed by the goal embedding. The output layer emits a
//! free score for each of the 100 cells plus one score per object; an
//! object's score is added to the logit of the cell it occupies. Picking an
//! object or stacking onto it is always "the cell of object k", and the
//! per-object scores let that be learned once instead of separately for
//! every layout.
//!
//! All weights live in one flat `Vec<f64>` so optimizers, finite-difference
//! checks and checkpoints can treat them uniformly.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::PolicyError;
use crate::semantics::EmbeddingVector;
use crate::world::{Action, ObjectId, Point, WorldState, GRID_SIDE, SLOT_CM, WORKSPACE_CM};

pub const ACTION_CELLS: usize = GRID_SIDE * GRID_SIDE;
pub const HIDDEN_UNITS: usize = 64;
/// Column scores followed by row scores.
/// Free cell scores followed by one pointer score per object.
pub const HEAD_UNITS: usize = ACTION_CELLS + 3;
/// Object positions (6), stack levels (3), held-object one-hot (4),
/// effector position (2).
pub const FEATURE_DIM: usize = 15;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StateFeatures(pub [f64; FEATURE_DIM]);

impl StateFeatures {
    pub fn of(state: &WorldState) -> StateFeatures {
        let mut f = [0.0; FEATURE_DIM];
        for obj in ObjectId::ALL {
            let p = state.position(obj);
            f[2 * obj.index()] = p.x / WORKSPACE_CM;
            f[2 * obj.index() + 1] = p.y / WORKSPACE_CM;
            f[6 + obj.index()] = state.level(obj) as f64 / 2.0;
        }
        let held_slot = state.holding().map_or(0, |o| o.index() + 1);
        f[9 + held_slot] = 1.0;
        f[13] = state.effector().x / WORKSPACE_CM;
        f[14] = state.effector().y / WORKSPACE_CM;
        StateFeatures(f)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Grid cell containing a workspace point.
pub fn cell_of(p: Point) -> usize {
    let idx = |v: f64| ((v / SLOT_CM).floor() as isize).clamp(0, GRID_SIDE as isize - 1) as usize;
    idx(p.y) * GRID_SIDE + idx(p.x)
}

/// Action aimed at the center of `cell`.
pub fn decode_cell(cell: usize) -> Result<Action, PolicyError> {
    if cell >= ACTION_CELLS {
        return Err(PolicyError::CellOutOfRange(cell));
    }
    let (ix, iy) = (cell % GRID_SIDE, cell / GRID_SIDE);
    Ok(Action::new((ix as f64 + 0.5) * SLOT_CM, (iy as f64 + 0.5) * SLOT_CM))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActMode {
    Greedy,
    Sample,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ActionDistribution {
    pub logits: Vec<f64>,
}

impl ActionDistribution {
    pub fn probabilities(&self) -> Vec<f64> {
        softmax(&self.logits)
    }

    /// Argmax cell; ties go to the lowest index.
    pub fn greedy_cell(&self) -> usize {
        let mut best = 0;
        for (i, &l) in self.logits.iter().enumerate() {
            if l > self.logits[best] {
                best = i;
            }
        }
        best
    }

    pub fn sample_cell<R: Rng>(&self, rng: &mut R) -> usize {
        let probs = self.probabilities();
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (i, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        probs.len() - 1
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub gradient_steps_per_round: usize,
    pub init_seed: u64,
    pub optimizer: OptimizerKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            batch_size: 256,
            gradient_steps_per_round: 100,
            init_seed: 0,
            optimizer: OptimizerKind::Adam,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err("learning_rate must be positive".into());
        }
        if self.batch_size == 0 || self.gradient_steps_per_round == 0 {
            return Err("batch_size and gradient_steps must be positive".into());
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Shape {
    features: usize,
    goal: usize,
    h1: usize,
    h2: usize,
    out: usize,
}

impl Shape {
    fn input(&self) -> usize {
        self.features + self.goal
    }

    // Offsets of W1, b1, W2, b2, W3, b3 in the flat parameter vector.
    fn offsets(&self) -> [usize; 7] {
        let i = self.input();
        let mut o = [0; 7];
        let sizes = [self.h1 * i, self.h1, self.h2 * self.h1, self.h2, self.out * self.h2, self.out];
        for k in 0..6 {
            o[k + 1] = o[k] + sizes[k];
        }
        o
    }

    fn len(&self) -> usize {
        self.offsets()[6]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolicyParams {
    shape: Shape,
    seed: u64,
    weights: Vec<f64>,
}

impl PolicyParams {
    pub fn init(seed: u64, goal_dim: usize) -> PolicyParams {
        let shape = Shape {
            features: FEATURE_DIM,
            goal: goal_dim,
            h1: HIDDEN_UNITS,
            h2: HIDDEN_UNITS,
            out: HEAD_UNITS,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = vec![0.0; shape.len()];
        let o = shape.offsets();
        let fans = [shape.input(), shape.h1, shape.h2];
        for layer in 0..3 {
            let bound = (1.0 / fans[layer] as f64).sqrt();
            for w in &mut weights[o[2 * layer]..o[2 * layer + 1]] {
                *w = rng.gen_range(-bound..bound);
            }
        }
        PolicyParams { shape, seed, weights }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn goal_dim(&self) -> usize {
        self.shape.goal
    }

    pub fn input_dim(&self) -> usize {
        self.shape.input()
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.is_finite())
    }

    fn check(&self, goal: &[f64]) -> Result<(), PolicyError> {
        if goal.len() != self.shape.goal {
            return Err(PolicyError::DimensionMismatch {
                expected: self.shape.input(),
                got: FEATURE_DIM + goal.len(),
            });
        }
        Ok(())
    }

    pub fn distribution(&self, features: &StateFeatures, goal: &EmbeddingVector) -> Result<ActionDistribution, PolicyError> {
        self.check(goal.as_slice())?;
        let goal_proj = self.project_goal(goal.as_slice());
        let mut acts = Activations::new(&self.shape);
        self.forward(features.as_slice(), &goal_proj, &mut acts);
        Ok(ActionDistribution { logits: acts.logits })
    }

    /// First-layer contribution of a goal embedding (plus bias).
    fn project_goal(&self, goal: &[f64]) -> Vec<f64> {
        let s = &self.shape;
        let o = s.offsets();
        let w1 = &self.weights[o[0]..o[1]];
        let b1 = &self.weights[o[1]..o[2]];
        let input = s.input();
        (0..s.h1)
            .map(|j| {
                let row = &w1[j * input + s.features..(j + 1) * input];
                b1[j] + dot(row, goal)
            })
            .collect()
    }

    fn forward(&self, features: &[f64], goal_proj: &[f64], acts: &mut Activations) {
        let s = &self.shape;
        let o = s.offsets();
        let input = s.input();
        let w1 = &self.weights[o[0]..o[1]];
        for j in 0..s.h1 {
            let row = &w1[j * input..j * input + s.features];
            acts.a1[j] = (goal_proj[j] + dot(row, features)).tanh();
        }
        let (w2, b2) = (&self.weights[o[2]..o[3]], &self.weights[o[3]..o[4]]);
        for j in 0..s.h2 {
            acts.a2[j] = (b2[j] + dot(&w2[j * s.h1..(j + 1) * s.h1], &acts.a1)).tanh();
        }
        let (w3, b3) = (&self.weights[o[4]..o[5]], &self.weights[o[5]..o[6]]);
        for k in 0..s.out {
            acts.head[k] = b3[k] + dot(&w3[k * s.h2..(k + 1) * s.h2], &acts.a2);
        }
        acts.logits.copy_from_slice(&acts.head[..ACTION_CELLS]);
        for (o, cell) in object_cells(features).into_iter().enumerate() {
            if let Some(c) = cell {
                acts.logits[c] += acts.head[ACTION_CELLS + o];
            }
        }
    }
}

/// Cell of every object not in the gripper, read back from the features.
fn object_cells(features: &[f64]) -> [Option<usize>; 3] {
    std::array::from_fn(|o| {
        let held = features[10 + o] > 0.5;
        (!held).then(|| cell_of(Point::new(features[2 * o] * WORKSPACE_CM, features[2 * o + 1] * WORKSPACE_CM)))
    })
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct Activations {
    a1: Vec<f64>,
    a2: Vec<f64>,
    head: Vec<f64>,
    logits: Vec<f64>,
}

impl Activations {
    fn new(s: &Shape) -> Self {
        Activations {
            a1: vec![0.0; s.h1],
            a2: vec![0.0; s.h2],
            head: vec![0.0; s.out],
            logits: vec![0.0; ACTION_CELLS],
        }
    }
}

pub fn init_params(seed: u64, goal_dim: usize) -> PolicyParams {
    PolicyParams::init(seed, goal_dim)
}

/// Value copy of the parameters; the copy shares nothing with the original.
pub fn clone_params(params: &PolicyParams) -> PolicyParams {
    params.clone()
}

pub fn act<R: Rng>(
    params: &PolicyParams,
    features: &StateFeatures,
    goal: &EmbeddingVector,
    mode: ActMode,
    rng: &mut R,
) -> Result<(usize, Action), PolicyError> {
    let dist = params.distribution(features, goal)?;
    let cell = match mode {
        ActMode::Greedy => dist.greedy_cell(),
        ActMode::Sample => dist.sample_cell(rng),
    };
    Ok((cell, decode_cell(cell)?))
}

/// Training batch. Goal embeddings are stored once and referenced by index,
/// since a batch only ever contains a handful of distinct goals.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BcBatch {
    goals: Vec<EmbeddingVector>,
    samples: Vec<(StateFeatures, usize, usize)>,
}

impl BcBatch {
    pub fn new() -> Self {
        BcBatch::default()
    }

    pub fn push(&mut self, features: StateFeatures, goal: &EmbeddingVector, target_cell: usize) -> Result<(), PolicyError> {
        if target_cell >= ACTION_CELLS {
            return Err(PolicyError::CellOutOfRange(target_cell));
        }
        let g = match self.goals.iter().position(|v| v == goal) {
            Some(i) => i,
            None => {
                self.goals.push(goal.clone());
                self.goals.len() - 1
            }
        };
        self.samples.push((features, g, target_cell));
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Target cells in sample order.
    pub fn targets(&self) -> impl Iterator<Item = usize> + '_ {
        self.samples.iter().map(|s| s.2)
    }

    /// Goal embedding of sample `i`.
    pub fn goal_of(&self, i: usize) -> &EmbeddingVector {
        &self.goals[self.samples[i].1]
    }
}

/// Mean cross-entropy over the batch and its gradient with respect to every
/// weight, by backpropagation.
pub fn loss_and_gradient(params: &PolicyParams, batch: &BcBatch) -> Result<(f64, Vec<f64>), PolicyError> {
    if batch.is_empty() {
        return Err(PolicyError::EmptyBatch);
    }
    for g in &batch.goals {
        params.check(g.as_slice())?;
    }
    let s = params.shape;
    let o = s.offsets();
    let input = s.input();
    let w = &params.weights;
    let mut grad = vec![0.0; w.len()];
    let projections: Vec<Vec<f64>> = batch.goals.iter().map(|g| params.project_goal(g.as_slice())).collect();
    // Accumulated first-layer pre-activation gradients per distinct goal; the
    // goal block of dW1 is their outer product with the goal embedding.
    let mut dz1_by_goal = vec![vec![0.0; s.h1]; batch.goals.len()];
    let mut acts = Activations::new(&s);
    let mut dlogits = vec![0.0; ACTION_CELLS];
    let mut dhead = vec![0.0; s.out];
    let mut dz2 = vec![0.0; s.h2];
    let mut dz1 = vec![0.0; s.h1];
    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;

    for (features, g, target) in &batch.samples {
        let x = features.as_slice();
        params.forward(x, &projections[*g], &mut acts);
        let probs = softmax(&acts.logits);
        loss -= probs[*target].max(f64::MIN_POSITIVE).ln();
        for k in 0..ACTION_CELLS {
            dlogits[k] = probs[k] * scale;
        }
        dlogits[*target] -= scale;
        dhead[..ACTION_CELLS].copy_from_slice(&dlogits);
        for (o, cell) in object_cells(x).into_iter().enumerate() {
            dhead[ACTION_CELLS + o] = cell.map_or(0.0, |c| dlogits[c]);
        }

        let (gw3, rest) = grad[o[4]..o[6]].split_at_mut(s.out * s.h2);
        for k in 0..s.out {
            let d = dhead[k];
            rest[k] += d;
            for (gw, a) in gw3[k * s.h2..(k + 1) * s.h2].iter_mut().zip(&acts.a2) {
                *gw += d * a;
            }
        }
        let w3 = &w[o[4]..o[5]];
        dz2.iter_mut().for_each(|v| *v = 0.0);
        for k in 0..s.out {
            let d = dhead[k];
            for (acc, wv) in dz2.iter_mut().zip(&w3[k * s.h2..(k + 1) * s.h2]) {
                *acc += d * wv;
            }
        }
        for (d, a) in dz2.iter_mut().zip(&acts.a2) {
            *d *= 1.0 - a * a;
        }

        let (gw2, gb2) = grad[o[2]..o[4]].split_at_mut(s.h2 * s.h1);
        for j in 0..s.h2 {
            let d = dz2[j];
            gb2[j] += d;
            for (gw, a) in gw2[j * s.h1..(j + 1) * s.h1].iter_mut().zip(&acts.a1) {
                *gw += d * a;
            }
        }
        let w2 = &w[o[2]..o[3]];
        dz1.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..s.h2 {
            let d = dz2[j];
            for (acc, wv) in dz1.iter_mut().zip(&w2[j * s.h1..(j + 1) * s.h1]) {
                *acc += d * wv;
            }
        }
        for (d, a) in dz1.iter_mut().zip(&acts.a1) {
            *d *= 1.0 - a * a;
        }

        let gw1 = &mut grad[o[0]..o[1]];
        for j in 0..s.h1 {
            let d = dz1[j];
            for (gw, xv) in gw1[j * input..j * input + s.features].iter_mut().zip(x) {
                *gw += d * xv;
            }
        }
        for (acc, d) in dz1_by_goal[*g].iter_mut().zip(&dz1) {
            *acc += d;
        }
    }

    for (goal, dz) in batch.goals.iter().zip(&dz1_by_goal) {
        for j in 0..s.h1 {
            grad[o[1] + j] += dz[j];
            let row = &mut grad[o[0] + j * input + s.features..o[0] + (j + 1) * input];
            for (gw, gv) in row.iter_mut().zip(goal.as_slice()) {
                *gw += dz[j] * gv;
            }
        }
    }
    Ok((loss * scale, grad))
}

/// Mean cross-entropy only.
pub fn batch_loss(params: &PolicyParams, batch: &BcBatch) -> Result<f64, PolicyError> {
    if batch.is_empty() {
        return Err(PolicyError::EmptyBatch);
    }
    let mut total = 0.0;
    let projections: Vec<Vec<f64>> = batch.goals.iter().map(|g| params.project_goal(g.as_slice())).collect();
    let mut acts = Activations::new(&params.shape);
    for (features, g, target) in &batch.samples {
        params.forward(features.as_slice(), &projections[*g], &mut acts);
        total -= softmax(&acts.logits)[*target].max(f64::MIN_POSITIVE).ln();
    }
    Ok(total / batch.len() as f64)
}

/// Optimizer state carried between updates.
#[derive(Clone, Debug, PartialEq)]
pub struct Optimizer {
    kind: OptimizerKind,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Optimizer {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    pub fn new(kind: OptimizerKind, n_params: usize) -> Self {
        let n = if kind == OptimizerKind::Adam { n_params } else { 0 };
        Optimizer {
            kind,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn for_params(config: &TrainConfig, params: &PolicyParams) -> Self {
        Optimizer::new(config.optimizer, params.len())
    }

    pub fn apply(&mut self, weights: &mut [f64], grad: &[f64], lr: f64) {
        match self.kind {
            OptimizerKind::Sgd => {
                for (w, g) in weights.iter_mut().zip(grad) {
                    *w -= lr * g;
                }
            }
            OptimizerKind::Adam => {
                self.t += 1;
                let c1 = 1.0 - Self::BETA1.powi(self.t as i32);
                let c2 = 1.0 - Self::BETA2.powi(self.t as i32);
                for i in 0..weights.len() {
                    let g = grad[i];
                    self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * g;
                    self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * g * g;
                    let mhat = self.m[i] / c1;
                    let vhat = self.v[i] / c2;
                    weights[i] -= lr * mhat / (vhat.sqrt() + Self::EPS);
                }
            }
        }
    }
}

/// One gradient step on the batch's mean cross-entropy. Returns the loss
/// measured before the step.
pub fn bc_update(
    params: &mut PolicyParams,
    optimizer: &mut Optimizer,
    batch: &BcBatch,
    config: &TrainConfig,
) -> Result<f64, PolicyError> {
    let (loss, grad) = loss_and_gradient(params, batch)?;
    optimizer.apply(&mut params.weights, &grad, config.learning_rate);
    Ok(loss)
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"LCAPOL01";

/// Writes the flat checkpoint: magic, then little-endian u64 header
/// (feature dim, goal dim, hidden 1, hidden 2, head units, init seed),
/// then every weight as a little-endian f64 in layer order
/// W1, b1, W2, b2, W3, b3 (matrices row-major, one row per output unit).
pub fn save_checkpoint<W: Write>(params: &PolicyParams, mut out: W) -> std::io::Result<()> {
    let s = params.shape;
    out.write_all(CHECKPOINT_MAGIC)?;
    for v in [s.features, s.goal, s.h1, s.h2, s.out] {
        out.write_all(&(v as u64).to_le_bytes())?;
    }
    out.write_all(&params.seed.to_le_bytes())?;
    for w in &params.weights {
        out.write_all(&w.to_le_bytes())?;
    }
    Ok(())
}

pub fn load_checkpoint<R: Read>(mut input: R) -> Result<PolicyParams, PolicyError> {
    let io = |e: std::io::Error| PolicyError::Checkpoint(e.to_string());
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic).map_err(io)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(PolicyError::Checkpoint("bad magic".into()));
    }
    let mut word = [0u8; 8];
    let mut header = [0u64; 6];
    for h in &mut header {
        input.read_exact(&mut word).map_err(io)?;
        *h = u64::from_le_bytes(word);
    }
    let [features, goal, h1, h2, out, seed] = header;
    if features as usize != FEATURE_DIM || out as usize != HEAD_UNITS || goal == 0 || goal > 1 << 16 || h1 > 1 << 16 || h2 > 1 << 16 {
        return Err(PolicyError::Checkpoint(format!("unsupported shape {header:?}")));
    }
    let shape = Shape {
        features: features as usize,
        goal: goal as usize,
        h1: h1 as usize,
        h2: h2 as usize,
        out: out as usize,
    };
    let mut weights = vec![0.0; shape.len()];
    for w in &mut weights {
        input.read_exact(&mut word).map_err(io)?;
        *w = f64::from_le_bytes(word);
    }
    if input.read(&mut word).map_err(io)? != 0 {
        return Err(PolicyError::Checkpoint("trailing bytes".into()));
    }
    Ok(PolicyParams { shape, seed, weights })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::semantics::{Caption, Embedder};
    use crate::world::reset;

    fn random_features<R: Rng>(rng: &mut R) -> StateFeatures {
        StateFeatures(std::array::from_fn(|_| rng.gen()))
    }

    #[test]
    fn features_are_normalized() {
        let f = StateFeatures::of(&reset(3));
        assert!(f.0.iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(f.0[9], 1.0, "nothing held");
    }

    #[test]
    fn cells_round_trip() {
        for c in 0..ACTION_CELLS {
            assert_eq!(cell_of(decode_cell(c).unwrap().target), c);
        }
        assert!(decode_cell(100).is_err());
    }

    #[test]
    fn init_is_seeded() {
        assert_eq!(init_params(3, 128), init_params(3, 128));
        assert_ne!(init_params(3, 128), init_params(4, 128));
        let p = init_params(3, 128);
        let e = Embedder::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..20 {
            let d = p.distribution(&random_features(&mut rng), e.embed_text(Caption::Grasping(ObjectId::Red))).unwrap();
            assert!(d.logits.iter().all(|l| l.is_finite()));
            let sum: f64 = d.probabilities().iter().sum();
            assert!((sum - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let p = init_params(0, 128);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let bad = EmbeddingVector::zeros(64);
        assert!(matches!(
            act(&p, &random_features(&mut rng), &bad, ActMode::Greedy, &mut rng),
            Err(PolicyError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn greedy_ties_break_low() {
        let d = ActionDistribution { logits: vec![0.0; ACTION_CELLS] };
        assert_eq!(d.greedy_cell(), 0);
        let mut l = vec![0.0; ACTION_CELLS];
        l[7] = 1.0;
        l[42] = 1.0;
        assert_eq!(ActionDistribution { logits: l }.greedy_cell(), 7);
    }

    #[test]
    fn clone_is_independent() {
        let original = init_params(1, 128);
        let copy = clone_params(&original);
        assert_eq!(copy, original);
        let mut trained = original.clone();
        let e = Embedder::default();
        let mut batch = BcBatch::new();
        batch.push(StateFeatures::of(&reset(0)), e.embed_text(Caption::Grasping(ObjectId::Red)), 5).unwrap();
        let cfg = TrainConfig::default();
        let mut opt = Optimizer::for_params(&cfg, &trained);
        bc_update(&mut trained, &mut opt, &batch, &cfg).unwrap();
        assert_ne!(trained, copy);
        assert_eq!(copy, original);
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let p = init_params(11, 128);
        let mut buf = Vec::new();
        save_checkpoint(&p, &mut buf).unwrap();
        assert_eq!(buf.len(), 8 + 6 * 8 + 8 * p.len());
        let q = load_checkpoint(buf.as_slice()).unwrap();
        assert_eq!(p.seed(), q.seed());
        assert!(p.weights().iter().zip(q.weights()).all(|(a, b)| a.to_bits() == b.to_bits()));
        let mut truncated = buf.clone();
        truncated.pop();
        assert!(load_checkpoint(truncated.as_slice()).is_err());
        buf[0] = b'X';
        assert!(load_checkpoint(buf.as_slice()).is_err());
    }
}
