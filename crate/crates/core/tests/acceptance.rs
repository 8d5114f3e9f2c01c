//! The eight acceptance checks. Each prints one PASS/FAIL line; the test
//! fails if any of them does.

use std::time::{Duration, Instant};

use lols::cslearn::OgdRegressor;
use lols::experiment::{build_tasks, run_grid, train_tasks, Dataset, ExperimentConfig, GridReport, Schema, TaskKind};
use lols::features::SparseFeatures;
use lols::lols::{RollIn, RollOut};
use lols::rng::{stream, Stream};
use lols::search::TieBreak;
use lols::tasks::{synth_multiclass, synth_parse, synth_sequences, ReferenceQuality};
use lols::theory::{
    bandit_unbiasedness_suite, reference_rollin_counterexample, reference_rollout_counterexample, regret_bound_suite,
    snake_lower_bound, telescope_suite, ExactModel,
};
use rand::Rng as _;

struct Outcome {
    ok: bool,
    detail: String,
}

fn check(name: &str, budget: Duration, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let out = f();
    let took = start.elapsed();
    let ok = out.ok && took <= budget;
    println!(
        "{} {name}: {} ({:.2}s of {:.0}s)",
        if ok { "PASS" } else { "FAIL" },
        out.detail,
        took.as_secs_f64(),
        budget.as_secs_f64()
    );
    ok
}

/// Follows the named actions from the start state and returns the end loss.
fn walk(model: &ExactModel, choice: impl Fn(&str) -> &'static str) -> f64 {
    let mut s = model.start_state();
    while !model.is_terminal(s) {
        let a = model.action_id(s, choice(model.label(s))).expect("action exists");
        s = model.next(s, a);
    }
    model.terminal_loss_of(s)
}

fn reference_rollin_trap() -> Outcome {
    let report = reference_rollin_counterexample(TieBreak::LowestIndex, 20).unwrap();
    let r = &report.records[0];
    let model = ExactModel::hidden_branch();
    let j_ref = walk(&model, |s| if s == "s1" { "a" } else { "c" });
    let j_trap = walk(&model, |s| match s {
        "s1" => "b",
        "s2" => "c",
        _ => "e",
    });
    let groups_ok = r
        .examples_by_group
        .iter()
        .all(|(states, n)| (*n > 0) == !states.contains(&"s3".to_string()));
    let ok = !r.s3_features_seen
        && groups_ok
        && r.worst_gap == Some(100.0)
        && j_trap - j_ref == 100.0
        && r.zero_loss_policies.iter().any(|p| p.actions == ["b", "c", "e"]);
    Outcome {
        ok,
        detail: format!(
            "examples {:?}, s3 seen {}, worst zero-loss gap {:?} (walked {})",
            r.examples_by_group.iter().map(|(s, n)| (s.join("+"), *n)).collect::<Vec<_>>(),
            r.s3_features_seen,
            r.worst_gap,
            j_trap - j_ref
        ),
    }
}

fn reference_rollout_trap() -> Outcome {
    let r = reference_rollout_counterexample(0.1, 0.5, 500, 1).unwrap();
    let model = ExactModel::shared_feature(0.1);
    let walked = walk(&model, |s| if s == "s1" { "a" } else { "d" });
    let dev = r.reference_rollout.best_deviation.clone().unwrap();
    let ok = (r.reference_rollout.j - 0.9).abs() <= 1e-9
        && (walked - 0.9).abs() <= 1e-9
        && dev.j.abs() <= 1e-9
        && r.reference_rollout.converged_at <= 500
        && r.mixture_rollout.j.abs() <= 1e-9;
    Outcome {
        ok,
        detail: format!(
            "reference roll-out J {} (walked {walked}) deviation {}:{} J {}; mixture J {} converged at {}",
            r.reference_rollout.j, dev.state, dev.action, dev.j, r.mixture_rollout.j, r.mixture_rollout.converged_at
        ),
    }
}

fn regret_bound() -> Outcome {
    let out = regret_bound_suite(50, &[0.0, 0.25, 0.5, 0.75, 1.0], 30, 1, 1e-9).unwrap();
    Outcome {
        ok: out.ok() && out.total == 250,
        detail: format!("{}/{} bound reports satisfied", out.passed, out.total),
    }
}

fn telescope() -> Outcome {
    let out = telescope_suite(100, 10, 1, 1e-9);
    Outcome {
        ok: out.ok() && out.total == 1000,
        detail: format!("{}/{} policy pairs agree", out.passed, out.total),
    }
}

/// Longest induced path in the `t`-cube, by exhaustive search from 0.
fn longest_induced_path(t: usize) -> usize {
    fn go(t: usize, path: &mut Vec<u32>, best: &mut usize) {
        *best = (*best).max(path.len() - 1);
        let head = *path.last().unwrap();
        for b in 0..t {
            let v = head ^ (1 << b);
            if path[..path.len() - 1].iter().all(|&p| (p ^ v).count_ones() >= 2) && !path.contains(&v) {
                path.push(v);
                go(t, path, best);
                path.pop();
            }
        }
    }
    let mut best = 0;
    go(t, &mut vec![0], &mut best);
    best
}

fn snake() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for t in [3, 4, 5] {
        let r = snake_lower_bound(t).unwrap();
        let oracle = longest_induced_path(t);
        ok &= r.updates == oracle && r.strictly_decreasing;
        if t == 3 {
            ok &= r.updates == 4 && r.path == ["000", "001", "011", "111", "110"];
        }
        parts.push(format!("T={t}: {} updates (oracle {oracle})", r.updates));
    }
    Outcome {
        ok,
        detail: parts.join(", "),
    }
}

fn bandit_unbiasedness() -> Outcome {
    let (out, cases) = bandit_unbiasedness_suite(0.1, &[0.0, 0.5, 1.0], 100_000, 1).unwrap();
    let worst = cases
        .iter()
        .map(|c| (c.result.monte_carlo_mean - c.result.exact).abs() / c.result.standard_error.max(1e-12))
        .fold(0.0, f64::max);
    Outcome {
        ok: out.ok() && out.total == 6,
        detail: format!("{}/{} within 3 SE, worst {worst:.2} SE", out.passed, out.total),
    }
}

fn grid(task: TaskKind, reference: ReferenceQuality) -> GridReport {
    let config = ExperimentConfig {
        task,
        reference,
        ..Default::default()
    };
    let mut train = match task {
        TaskKind::Multiclass => Dataset::Multiclass(synth_multiclass(2000, 5, 20, config.seed)),
        TaskKind::Sequence => Dataset::Sequence(synth_sequences(500, config.seed)),
        _ => Dataset::Parse(synth_parse(300, config.seed)),
    };
    let test = train.split_off_test();
    run_grid(&config, &train, &test).unwrap()
}

fn grid_orderings() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for task in [TaskKind::Multiclass, TaskKind::Sequence, TaskKind::Parse] {
        let bad = grid(task, ReferenceQuality::Bad);
        let rr = bad.value(RollIn::Reference, RollOut::Reference);
        let learned_wins = [RollOut::Reference, RollOut::Mixture, RollOut::Learned]
            .iter()
            .all(|&ro| bad.metric.better(bad.value(RollIn::Learned, ro), rr));
        let opt = grid(task, ReferenceQuality::Optimal);
        let best = opt.best().value;
        let lm = opt.value(RollIn::Learned, RollOut::Mixture);
        let rel = (lm - best).abs() / best.abs().max(f64::MIN_POSITIVE);
        let values: Vec<f64> = opt.cells.iter().map(|c| c.value).collect();
        let band = values.iter().copied().fold(f64::MIN, f64::max) - values.iter().copied().fold(f64::MAX, f64::min);
        let band_ok = task != TaskKind::Sequence || band <= 0.02;
        ok &= learned_wins && rel <= 0.02 && band_ok;
        parts.push(format!(
            "{task}: bad-ref learned roll-in beats RR {learned_wins}, optimal L/M rel gap {rel:.4}{}",
            if task == TaskKind::Sequence { format!(", band {band:.4}") } else { String::new() }
        ));
        println!("{}{}", bad.render(), opt.render());
    }
    Outcome {
        ok,
        detail: parts.join("; "),
    }
}

fn gradient_and_reproducibility() -> Outcome {
    let dim = 12;
    let mut rng = stream(11, Stream::Probe);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let mut reg = OgdRegressor::new(dim, 0.5);
        reg.weights = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut pairs = Vec::new();
        for i in 0..dim {
            if rng.random_bool(0.5) {
                pairs.push((i, rng.random_range(-2.0..2.0)));
            }
        }
        let x = SparseFeatures::from_pairs(dim, pairs).unwrap();
        let cost = rng.random_range(0.0..2.0);
        let loss = |w: &[f64]| (x.dot(w) - cost).powi(2);
        let eta = 0.1;
        let before = reg.weights.clone();
        reg.step(&x, cost, eta);
        let h = 1e-6;
        for i in 0..dim {
            let mut plus = before.clone();
            let mut minus = before.clone();
            plus[i] += h;
            minus[i] -= h;
            let numeric = (loss(&plus) - loss(&minus)) / (2.0 * h);
            let analytic = (before[i] - reg.weights[i]) / eta;
            if numeric.abs() > 1e-8 || analytic.abs() > 1e-8 {
                worst = worst.max((numeric - analytic).abs() / numeric.abs().max(analytic.abs()));
            }
        }
    }
    let train_once = || {
        let config = ExperimentConfig {
            task: TaskKind::Sequence,
            passes: 2,
            ..Default::default()
        };
        let data = Dataset::Sequence(synth_sequences(60, 3));
        let schema = Schema::infer(&config, &data).unwrap();
        let tasks = build_tasks(&schema, &data, config.reference, config.reference_seed(), 1, true).unwrap();
        let state = train_tasks(&config, &tasks, &config.plan(), config.seed, |_| {}).unwrap();
        let mut bytes = Vec::new();
        state.learner.save(&mut bytes, config.hash()).unwrap();
        bytes
    };
    let (a, b) = (train_once(), train_once());
    Outcome {
        ok: worst <= 1e-5 && a == b,
        detail: format!("worst relative gradient error {worst:.2e}; models byte-identical {} ({} bytes)", a == b, a.len()),
    }
}

#[test]
fn acceptance() {
    let results = [
        check("1 reference roll-in trap", Duration::from_secs(1), reference_rollin_trap),
        check("2 reference roll-out trap", Duration::from_secs(5), reference_rollout_trap),
        check("3 regret bound", Duration::from_secs(120), regret_bound),
        check("4 telescoping identity", Duration::from_secs(30), telescope),
        check("5 hypercube descent", Duration::from_secs(60), snake),
        check("6 bandit unbiasedness", Duration::from_secs(60), bandit_unbiasedness),
        check("7 grid orderings", Duration::from_secs(600), grid_orderings),
        check("8 gradient and reproducibility", Duration::from_secs(30), gradient_and_reproducibility),
    ];
    let passed = results.iter().filter(|&&ok| ok).count();
    println!("{passed}/{} acceptance checks passed", results.len());
    assert!(results.iter().all(|&ok| ok));
}
