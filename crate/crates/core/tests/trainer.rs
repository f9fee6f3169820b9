use lca_core::buffers::{harvest_episode, EpisodeLogEntry};
use lca_core::instruction::decompose;
use lca_core::policy::{save_checkpoint, PolicyParams};
use lca_core::semantics::{Caption, GoalLabel, Oracle};
use lca_core::trainer::*;
use lca_core::world::{ObjectId, Task};

use ObjectId::*;

const RB: Task = Task::PairStack { top: Red, bottom: Blue };

fn small(rounds: usize) -> RunConfig {
    RunConfig {
        n_actors: 8,
        rounds,
        eval_episodes: 10,
        train: lca_core::policy::TrainConfig {
            batch_size: 64,
            gradient_steps_per_round: 20,
            ..Default::default()
        },
        ..RunConfig::default()
    }
}

#[derive(Default)]
struct Recorder {
    episodes: Vec<EpisodeLogEntry>,
    checkpoints: Vec<Vec<u8>>,
}

impl RunObserver for Recorder {
    fn on_episode(&mut self, entry: &EpisodeLogEntry) {
        self.episodes.push(entry.clone());
    }

    fn on_round(&mut self, _m: &RoundMetrics, params: &PolicyParams) {
        let mut bytes = Vec::new();
        save_checkpoint(params, &mut bytes).unwrap();
        self.checkpoints.push(bytes);
    }
}

#[test]
fn same_seed_same_run() {
    let config = small(6);
    let mut a = Recorder::default();
    let mut b = Recorder::default();
    let ra = run_curriculum_experiment_observed(RB, &config, true, &mut a);
    let rb = run_curriculum_experiment_observed(RB, &config, true, &mut b);
    assert_eq!(ra.curve.to_csv(), rb.curve.to_csv());
    assert_eq!(ra.params, rb.params);
    assert_eq!(a.episodes, b.episodes);
    assert_eq!(a.checkpoints, b.checkpoints);
    assert_eq!(ra.buffers.task, rb.buffers.task);

    let other = run_curriculum_experiment(RB, &RunConfig { master_seed: 1, ..config }, true);
    assert_ne!(other.curve.to_csv(), ra.curve.to_csv());
}

#[test]
fn baseline_matches_subgoals_when_the_curriculum_is_the_task() {
    let config = small(8);
    let task = Task::Grasp(Green);
    let with = run_curriculum_experiment(task, &config, true);
    let without = run_curriculum_experiment(task, &config, false);
    assert_eq!(with.curve, without.curve);
    assert_eq!(with.params, without.params);
}

#[test]
fn accounting_and_no_leakage() {
    let config = small(5);
    let mut rec = Recorder::default();
    let r = run_curriculum_experiment_observed(RB, &config, true, &mut rec);
    let n = config.n_actors as u64;
    let mut steps = 0;
    for (k, m) in r.curve.rounds.iter().enumerate() {
        assert_eq!(m.round, k);
        assert_eq!(m.cum_episodes, (k as u64 + 1) * n);
        let this_round = &rec.episodes[k * config.n_actors..(k + 1) * config.n_actors];
        steps += this_round.iter().map(|e| e.actions.len() as u64).sum::<u64>();
        assert_eq!(m.cum_steps, steps);
    }
    // Only collected episodes are stored, and the task buffer is exactly
    // their harvest.
    let lifelong = r.buffers.lifelong.episodes();
    assert_eq!(lifelong.len() as u64, 5 * n);
    let oracle = Oracle::new(config.oracle.clone());
    let rebuilt: Vec<_> = lifelong.iter().flat_map(|ep| harvest_episode(ep, &r.curriculum, &oracle)).collect();
    assert_eq!(rebuilt, r.buffers.task.trajectories());
    for (e, ep) in rec.episodes.iter().zip(lifelong) {
        assert_eq!(&e.replay().unwrap(), ep);
    }
}

#[test]
fn episodes_walk_the_curriculum() {
    let c = decompose(Task::TripleStack);
    let ep = run_episode(&ScriptedActor(Task::TripleStack), Task::TripleStack, &c, &Oracle::perfect(), GoalMode::Subgoals, 40, 9);
    let goals: Vec<GoalLabel> = ep.steps.iter().map(|s| s.goal_label).collect();
    let expected: Vec<GoalLabel> = c.captions().iter().map(|&c| GoalLabel::Caption(c)).collect();
    assert_eq!(goals, expected);
    assert_eq!(ep.external_reward, 1);

    let fin = run_episode(&ScriptedActor(RB), RB, &decompose(RB), &Oracle::perfect(), GoalMode::FinalOnly, 20, 9);
    assert!(fin.steps.iter().all(|s| s.goal_label == GoalLabel::Caption(Caption::OnTop { top: Red, bottom: Blue })));
}

#[test]
fn episodes_respect_the_cap() {
    struct Idle;
    impl Actor for Idle {
        fn choose(&self, _: &lca_core::world::WorldState, _: GoalLabel, _: &mut rand_chacha::ChaCha8Rng) -> usize {
            0
        }
    }
    for seed in 0..5 {
        let ep = run_episode(&Idle, RB, &decompose(RB), &Oracle::perfect(), GoalMode::Subgoals, 7, seed);
        assert!(ep.len() <= 7 && !ep.is_empty());
    }
}

#[test]
fn steps_to_threshold() {
    let row = |round, cum_steps, eval_success| RoundMetrics {
        round,
        cum_steps,
        cum_episodes: 0,
        eval_success,
        buffer_size: 0,
        bc_loss: None,
    };
    let curve = LearningCurve {
        rounds: vec![row(0, 10, 0.1), row(1, 25, 0.5), row(2, 40, 0.9)],
        converged: false,
    };
    assert_eq!(steps_to_success_rate(&curve, 0.5), Some(25));
    assert_eq!(steps_to_success_rate(&curve, 0.95), None);
    assert!(curve.to_csv().starts_with("round,cum_steps,cum_episodes,eval_success,buffer_size,bc_loss\n"));
    assert_eq!(curve.to_csv().lines().count(), 4);
}

#[test]
fn transfer_needs_a_sequence() {
    assert!(run_transfer_experiment(&[RB], &small(1)).is_err());
}

#[test]
fn transfer_relabels_earlier_experience() {
    let tasks = [RB, Task::PairStack { top: Blue, bottom: Green }];
    let rows = run_transfer_experiment(&tasks, &small(3)).unwrap();
    assert_eq!(rows[0].relabeled, 0);
    assert_eq!(rows[1].lifelong_after, 2 * rows[0].lifelong_after);
}

#[test]
fn scaling_table_is_sorted_by_sparseness() {
    let sparse = SparsenessConfig {
        trials: 20,
        max_steps: 20_000,
        triple_trials: 2,
    };
    let rows = run_sparseness_scaling(&small(2), &sparse).unwrap();
    assert_eq!(rows.len(), 3);
    assert!(rows.windows(2).all(|w| w[0].sparseness.value() <= w[1].sparseness.value()));
    assert_eq!(rows[0].task, Task::Grasp(Red));
}

#[test]
fn config_validation() {
    assert!(RunConfig::default().validate().is_ok());
    for bad in [
        RunConfig { n_actors: 0, ..Default::default() },
        RunConfig { epsilon_explore: -0.1, ..Default::default() },
        RunConfig { episode_cap: Some(0), ..Default::default() },
        RunConfig { collect_temperature: 0.0, ..Default::default() },
        RunConfig { converge_patience: 0, ..Default::default() },
    ] {
        assert!(bad.validate().is_err(), "{bad:?}");
    }
}
