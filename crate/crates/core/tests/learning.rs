use lols::experiment::{
    build_tasks, evaluate, run_bandit, run_grid, train_tasks, Dataset, ExperimentConfig, Predictor, Schema, TaskKind,
    TaskSet,
};
use lols::bandit::Mode;
use lols::cslearn::Csoaa;
use lols::lols::{process_example, TrainState};
use lols::rng::{stream, Stream};
use lols::search::{trajectory, SearchTask};
use lols::tasks::{synth_multiclass, synth_parse, ReferenceQuality};

fn multiclass_config() -> ExperimentConfig {
    ExperimentConfig {
        task: TaskKind::Multiclass,
        ..Default::default()
    }
}

/// Progressive validation: each instance is scored by the policy trained
/// on the instances before it.
#[test]
fn online_loss_falls_over_the_stream() {
    let config = multiclass_config();
    let data = Dataset::Multiclass(synth_multiclass(2000, 5, 20, 2));
    let schema = Schema::infer(&config, &data).unwrap();
    let TaskSet::Multiclass(tasks) = build_tasks(&schema, &data, config.reference, config.reference_seed(), 1, true).unwrap() else {
        unreachable!()
    };
    let mut state = TrainState::new(Csoaa::new(tasks[0].dim(), config.eta0), 2);
    let mut rng = stream(0, Stream::Probe);
    let mut losses = Vec::new();
    for task in &tasks {
        let end = trajectory(task, &state.current_policy(), &mut rng).unwrap().end;
        losses.push(task.costs()[task.label_of(&end)]);
        process_example(&mut state, task, &config.plan()).unwrap();
    }
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let early = mean(&losses[..200]);
    let late = mean(&losses[losses.len() - 200..]);
    assert!(late < 0.5 * early, "early {early} late {late}");
}

#[test]
fn more_passes_do_not_hurt_held_out_cost() {
    let mut data = Dataset::Multiclass(synth_multiclass(1000, 5, 20, 4));
    let test = data.split_off_test();
    let held_out = |passes: usize| {
        let config = ExperimentConfig {
            passes,
            ..multiclass_config()
        };
        let schema = Schema::infer(&config, &data).unwrap();
        let train = build_tasks(&schema, &data, config.reference, config.reference_seed(), 1, true).unwrap();
        let eval = build_tasks(&schema, &test, config.reference, config.reference_seed(), 1, true).unwrap();
        let state = train_tasks(&config, &train, &config.plan(), 1, |_| {}).unwrap();
        evaluate(&eval, Predictor::Fixed(&state.current_policy())).unwrap()
    };
    let (zero, one, five) = (held_out(0), held_out(1), held_out(5));
    assert!(one < zero && five <= one + 0.01, "{zero} {one} {five}");
}

#[test]
fn grids_are_reproducible() {
    let config = ExperimentConfig {
        task: TaskKind::Parse,
        reference: ReferenceQuality::Bad,
        passes: 2,
        ..Default::default()
    };
    let mut train = Dataset::Parse(synth_parse(60, 5));
    let test = train.split_off_test();
    let a = run_grid(&config, &train, &test).unwrap();
    let b = run_grid(&config, &train, &test).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.render(), b.render());
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}

#[test]
fn bandit_explores_at_rate_epsilon_and_improves() {
    let config = ExperimentConfig {
        rounds: 10_000,
        epsilon: 0.1,
        ..multiclass_config()
    };
    let data = Dataset::Multiclass(synth_multiclass(2000, 5, 20, 1));
    let mut exploit = Vec::new();
    let (summary, _) = run_bandit(&config, &data, |e| {
        if e.mode == Mode::Exploited {
            exploit.push((e.round, e.loss));
        }
    })
    .unwrap();
    assert!(summary.n_explore.abs_diff(1000) <= 90, "n = {}", summary.n_explore);
    let window_mean = |end: u64| {
        let w: Vec<f64> = exploit.iter().filter(|(r, _)| *r < end).rev().take(100).map(|p| p.1).collect();
        w.iter().sum::<f64>() / w.len() as f64
    };
    let (early, late) = (window_mean(100), window_mean(10_000));
    assert!(late <= early, "early {early} late {late}");
}
