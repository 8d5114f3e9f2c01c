//! Counterexamples for reference roll-in and reference roll-out.

use serde::{Deserialize, Serialize};

use super::exact::{enumerate_policies, exact_j, ExactPolicy, StochasticPolicy};
use super::model::ExactModel;
use super::run_lols;
use crate::error::{Error, Result};
use crate::lols::{RollIn, RollOut, RolloutPlan};
use crate::search::{Reference, SearchTask, TieBreak};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroLossPolicy {
    pub actions: Vec<String>,
    pub j: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RollinRecord {
    pub model: String,
    pub roll_out: RollOut,
    pub rounds: usize,
    /// `(states of a feature group, examples generated there)`
    pub examples_by_group: Vec<(Vec<String>, usize)>,
    /// Whether any emitted example carried one of s3's features.
    pub s3_features_seen: bool,
    pub zero_loss_policies: Vec<ZeroLossPolicy>,
    pub j_ref: f64,
    /// Largest `J` among zero-loss class members; `None` when conflicting
    /// examples leave no class member at zero loss.
    pub worst_zero_loss_j: Option<f64>,
    pub worst_gap: Option<f64>,
    /// `J` of the worst member when it picks uniformly wherever no example was seen.
    pub worst_uniform_unvisited_j: Option<f64>,
    /// Whether some weight vector scores the two actions at s1 differently.
    pub root_separable: bool,
    /// Learner's own final policy under the chosen tie-break.
    pub learned_actions: Vec<String>,
    pub learned_j: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RollinReport {
    pub tie_break: TieBreak,
    pub records: Vec<RollinRecord>,
}

fn group_names(model: &ExactModel, g: usize) -> Vec<String> {
    model.groups()[g].iter().map(|&s| model.label(s).to_string()).collect()
}

/// Every weight in `{-1, 0, 1}^dim` (dim ≤ 8) scores the two actions at `s` alike?
fn separable(model: &ExactModel, s: usize) -> bool {
    let feats = model.action_features(&s);
    let dim = model.dim().min(8);
    let total = 3usize.pow(dim as u32);
    (0..total).any(|mut code| {
        let mut w = vec![0.0; model.dim()];
        for wi in w.iter_mut().take(dim) {
            *wi = (code % 3) as f64 - 1.0;
            code /= 3;
        }
        let scores: Vec<f64> = feats.iter().map(|f| f.dot(&w)).collect();
        scores.iter().any(|&x| x != scores[0])
    })
}

fn rollin_record(
    name: &str,
    model: &ExactModel,
    roll_out: RollOut,
    rounds: usize,
    tie_break: TieBreak,
) -> Result<RollinRecord> {
    let plan = RolloutPlan::new(RollIn::Reference, roll_out).with_seed(7);
    let run = run_lols(model, &plan, rounds, tie_break)?;
    let mut counts = vec![0usize; model.num_groups()];
    let mut example_groups = Vec::with_capacity(run.examples.len());
    for ex in &run.examples {
        let g = model
            .group_matching(&ex.per_action_features)
            .ok_or_else(|| Error::Format("example does not match any model state".into()))?;
        counts[g] += 1;
        example_groups.push(g);
    }
    let s3 = model.state_id("s3").ok_or_else(|| Error::Format("model has no s3".into()))?;
    let s3_features: Vec<usize> = model.signature(s3);
    let s3_features_seen = run
        .examples
        .iter()
        .flat_map(|ex| ex.per_action_features.iter())
        .flat_map(|f| f.pairs().iter().map(|&(i, _)| i))
        .any(|i| s3_features.contains(&i));

    let mut zero_loss = Vec::new();
    for p in enumerate_policies(model) {
        let loss: f64 = run
            .examples
            .iter()
            .zip(&example_groups)
            .map(|(ex, &g)| ex.costs[p.0[g]])
            .sum();
        if loss == 0.0 {
            zero_loss.push(p);
        }
    }
    let j_ref = exact_j(model, &Reference);
    let worst = zero_loss
        .iter()
        .max_by(|a, b| exact_j(model, *a).total_cmp(&exact_j(model, *b)));
    let worst_j = worst.map(|p| exact_j(model, p));
    let worst_uniform = worst.map(|p| {
        let mut uniform = p.tabulate(model);
        for (g, members) in model.groups().iter().enumerate() {
            if counts[g] == 0 {
                for &s in members {
                    let k = model.edges(s).len();
                    uniform.0[s] = vec![1.0 / k as f64; k];
                }
            }
        }
        exact_j(model, &uniform)
    });
    let learned = run.final_policy(model);
    Ok(RollinRecord {
        model: name.to_string(),
        roll_out,
        rounds,
        examples_by_group: (0..model.num_groups()).map(|g| (group_names(model, g), counts[g])).collect(),
        s3_features_seen,
        zero_loss_policies: zero_loss
            .iter()
            .map(|p| ZeroLossPolicy {
                actions: p.labels(model),
                j: exact_j(model, p),
            })
            .collect(),
        j_ref,
        worst_zero_loss_j: worst_j,
        worst_gap: worst_j.map(|j| j - j_ref),
        worst_uniform_unvisited_j: worst_uniform,
        root_separable: separable(model, model.start_state()),
        learned_actions: learned.labels(model),
        learned_j: exact_j(model, &learned),
    })
}

/// Reference roll-in on the two reference-roll-in models: all reference
/// roll-outs on the first; learned and mixture roll-outs on the
/// representation-constrained one.
pub fn reference_rollin_counterexample(tie_break: TieBreak, rounds: usize) -> Result<RollinReport> {
    let a = ExactModel::hidden_branch();
    let b = ExactModel::tied_root();
    Ok(RollinReport {
        tie_break,
        records: vec![
            rollin_record("hidden-branch", &a, RollOut::Reference, rounds, tie_break)?,
            rollin_record("tied-root", &b, RollOut::Learned, rounds, tie_break)?,
            rollin_record("tied-root", &b, RollOut::Mixture, rounds, tie_break)?,
        ],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Deviation {
    pub state: String,
    pub action: String,
    pub j: f64,
}

/// Cheapest policy that differs from `policy` at exactly one state.
pub fn best_one_step_deviation(model: &ExactModel, policy: &impl ExactPolicy) -> Option<Deviation> {
    let base = policy.tabulate(model);
    let mut best: Option<Deviation> = None;
    for s in 0..model.num_states() {
        if model.is_terminal(s) {
            continue;
        }
        let k = model.edges(s).len();
        for a in 0..k {
            let mut row = vec![0.0; k];
            row[a] = 1.0;
            if row == base.0[s] {
                continue;
            }
            let mut p = base.clone();
            p.0[s] = row;
            let j = exact_j(model, &StochasticPolicy(p.0));
            if best.as_ref().is_none_or(|b| j < b.j) {
                best = Some(Deviation {
                    state: model.label(s).to_string(),
                    action: model.edges(s)[a].label.clone(),
                    j,
                });
            }
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutRun {
    pub roll_out: RollOut,
    pub beta: f64,
    pub actions: Vec<String>,
    pub j: f64,
    /// First round from which the roll-in policy never changed again.
    pub converged_at: usize,
    pub best_deviation: Option<Deviation>,
    pub locally_optimal: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutRecord {
    pub eps: f64,
    pub rounds: usize,
    pub reference_rollout: RolloutRun,
    pub mixture_rollout: RolloutRun,
    /// `J(learned) - J(best deviation)` under reference roll-out.
    pub deviation_gap: f64,
}

fn rollout_run(model: &ExactModel, plan: RolloutPlan, rounds: usize) -> Result<RolloutRun> {
    let run = run_lols(model, &plan, rounds, TieBreak::LowestIndex)?;
    let last = run.final_policy(model);
    let converged_at = run.trace.iter().rposition(|p| p != &last).map_or(0, |i| i + 1);
    let j = exact_j(model, &last);
    let best_deviation = best_one_step_deviation(model, &last);
    let locally_optimal = best_deviation.as_ref().is_none_or(|d| d.j >= j);
    Ok(RolloutRun {
        roll_out: plan.roll_out,
        beta: plan.beta,
        actions: last.labels(model),
        j,
        converged_at,
        best_deviation,
        locally_optimal,
    })
}

/// Learned roll-in with reference roll-out versus mixture roll-out (with
/// reference probability `beta`) on the shared-feature model with a
/// suboptimal reference.
pub fn reference_rollout_counterexample(eps: f64, beta: f64, rounds: usize, seed: u64) -> Result<RolloutRecord> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::BadConfig(format!("eps must lie in (0, 1), got {eps}")));
    }
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::BadConfig(format!("beta must lie in [0, 1], got {beta}")));
    }
    let model = ExactModel::shared_feature(eps);
    let reference_rollout = rollout_run(
        &model,
        RolloutPlan::new(RollIn::Learned, RollOut::Reference).with_seed(seed),
        rounds,
    )?;
    let mixture_rollout = rollout_run(&model, RolloutPlan::lols(beta).with_seed(seed), rounds)?;
    let deviation_gap = reference_rollout.j - reference_rollout.best_deviation.as_ref().map_or(reference_rollout.j, |d| d.j);
    Ok(RolloutRecord {
        eps,
        rounds,
        reference_rollout,
        mixture_rollout,
        deviation_gap,
    })
}
