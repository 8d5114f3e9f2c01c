//! Epsilon-greedy structured contextual bandit learning.
//!
//! Only the scalar loss of one produced output is observed per round. With
//! probability epsilon a round explores: roll in with the newest policy to a
//! uniformly chosen depth, take a uniformly chosen action, roll out, and
//! train on the importance-weighted one-hot cost `K * loss` on that action.
//! Otherwise the round predicts with a policy drawn uniformly from every
//! policy produced so far and learns nothing.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::cslearn::{CostSensitiveExample, Csoaa};
use crate::error::{Error, Result};
use crate::lols::{draw_rollout_policy, Drawn, PolicyHistory, DEFAULT_CHECKPOINT_EVERY};
use crate::rng::{stream, Rng, Stream};
use crate::search::{execute, trajectory, Policy, Reference, SearchTask, WeightsView};
use crate::theory::{ExactModel, TablePolicy};

pub const DEFAULT_EPSILON: f64 = 0.1;

#[derive(Debug, Clone)]
pub struct BanditState {
    pub learner: Csoaa,
    /// Every policy produced so far, starting with the initial one.
    pub explored: PolicyHistory,
    pub epsilon: f64,
    pub beta: f64,
    pub rounds: u64,
    explore_rng: Rng,
    mixture_rng: Rng,
    exploit_rng: Rng,
}

impl BanditState {
    pub fn new(learner: Csoaa, epsilon: f64, beta: f64, seed: u64) -> Self {
        let explored = PolicyHistory::new(&learner.policy(), DEFAULT_CHECKPOINT_EVERY);
        Self {
            learner,
            explored,
            epsilon,
            beta,
            rounds: 0,
            explore_rng: stream(seed, Stream::Exploration),
            mixture_rng: stream(seed, Stream::Mixture),
            exploit_rng: stream(seed, Stream::Averaging),
        }
    }

    /// Number of exploration rounds so far.
    pub fn n_explore(&self) -> usize {
        self.explored.len() - 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Explored,
    Exploited,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplorationRecord {
    pub t: usize,
    pub action: usize,
    pub k: usize,
    pub costs: Vec<f64>,
    pub rollout: Drawn,
}

#[derive(Debug, Clone)]
pub struct BanditOutcome<S> {
    pub mode: Mode,
    /// End state whose structured output was produced this round.
    pub prediction: S,
    pub observed_loss: f64,
    pub exploration: Option<ExplorationRecord>,
    /// The uniform draw compared against epsilon.
    pub coin: f64,
}

/// One line of the bandit session log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BanditLogEntry {
    pub round: u64,
    pub mode: Mode,
    pub t: Option<usize>,
    pub action: Option<usize>,
    pub k: Option<usize>,
    pub loss: f64,
    pub coin: f64,
}

impl<S> BanditOutcome<S> {
    pub fn log_entry(&self, round: u64) -> BanditLogEntry {
        let e = self.exploration.as_ref();
        BanditLogEntry {
            round,
            mode: self.mode,
            t: e.map(|r| r.t),
            action: e.map(|r| r.action),
            k: e.map(|r| r.k),
            loss: self.observed_loss,
            coin: self.coin,
        }
    }
}

fn checked(loss: f64) -> Result<f64> {
    if (0.0..=1.0).contains(&loss) {
        Ok(loss)
    } else {
        Err(Error::LossOutOfRange(loss))
    }
}

struct Deviation<S> {
    t: usize,
    action: usize,
    k: usize,
    features: Vec<crate::features::SparseFeatures>,
    rollout: Drawn,
    end: S,
}

/// Rolls in with `policy` to a uniform depth, deviates uniformly, and rolls
/// out with reference (probability `beta`) or `policy`.
fn deviate<T, P>(task: &T, policy: &P, beta: f64, explore: &mut Rng, mixture: &mut Rng) -> Result<Deviation<T::State>>
where
    T: SearchTask + ?Sized,
    P: Policy<T>,
{
    let horizon = task.horizon();
    let t = explore.random_range(0..horizon);
    let s_t = execute(task, policy, &task.start(), t, mixture)?;
    let k = task.num_actions(&s_t);
    if k == 0 {
        return Err(Error::NoLegalAction { depth: t, horizon });
    }
    let action = explore.random_range(0..k);
    let features = task.action_features(&s_t);
    let next = task.transition(&s_t, action);
    let rollout = draw_rollout_policy(beta, mixture);
    let remaining = horizon - t - 1;
    let end = match rollout {
        Drawn::Reference => execute(task, &Reference, &next, remaining, mixture)?,
        _ => execute(task, policy, &next, remaining, mixture)?,
    };
    Ok(Deviation {
        t,
        action,
        k,
        features,
        rollout,
        end,
    })
}

/// `ĉ(a) = K ℓ 1[a = a_t]`
pub fn importance_weighted_costs(k: usize, chosen: usize, loss: f64) -> Vec<f64> {
    (0..k).map(|a| if a == chosen { k as f64 * loss } else { 0.0 }).collect()
}

/// Plays one round. `loss_oracle` is called exactly once, on the produced end state.
pub fn bandit_step<T, F>(state: &mut BanditState, task: &T, mut loss_oracle: F) -> Result<BanditOutcome<T::State>>
where
    T: SearchTask + ?Sized,
    F: FnMut(&T::State) -> f64,
{
    let coin: f64 = state.explore_rng.random();
    state.rounds += 1;
    if coin < state.epsilon {
        let latest = WeightsView {
            weights: state.learner.weights(),
            tie_break: state.learner.tie_break,
        };
        let dev = deviate(task, &latest, state.beta, &mut state.explore_rng, &mut state.mixture_rng)?;
        let loss = checked(loss_oracle(&dev.end))?;
        let costs = importance_weighted_costs(dev.k, dev.action, loss);
        let touched: Vec<usize> = dev
            .features
            .iter()
            .flat_map(|f| f.pairs().iter().map(|&(i, _)| i))
            .collect();
        let example = CostSensitiveExample::new(dev.features, costs.clone())?.raw();
        state.learner.update(&example)?;
        state.explored.push(&touched, state.learner.weights());
        Ok(BanditOutcome {
            mode: Mode::Explored,
            prediction: dev.end,
            observed_loss: loss,
            exploration: Some(ExplorationRecord {
                t: dev.t,
                action: dev.action,
                k: dev.k,
                costs,
                rollout: dev.rollout,
            }),
            coin,
        })
    } else {
        let n = state.exploit_rng.random_range(0..state.explored.len());
        let policy = state.explored.policy(n)?;
        let traj = trajectory(task, &policy, &mut state.mixture_rng)?;
        let loss = checked(loss_oracle(&traj.end))?;
        Ok(BanditOutcome {
            mode: Mode::Exploited,
            prediction: traj.end,
            observed_loss: loss,
            exploration: None,
            coin,
        })
    }
}

/// Exploration rate that balances the terms of the high-probability regret
/// bound: `(KT)^(2/3) (ln(N |Π|) / N)^(1/3)`, capped at 1.
pub fn balanced_epsilon(k: usize, horizon: usize, rounds: u64, policy_class_size: f64) -> f64 {
    let n = rounds.max(1) as f64;
    let kt = (k * horizon) as f64;
    (kt.powf(2.0 / 3.0) * ((n * policy_class_size).ln() / n).cbrt()).min(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub monte_carlo_mean: f64,
    pub standard_error: f64,
    pub exact: f64,
    pub trials: usize,
}

impl ProbeResult {
    pub fn within(&self, standard_errors: f64) -> bool {
        let band = standard_errors * self.standard_error;
        (self.monte_carlo_mean - self.exact).abs() <= band.max(1e-12)
    }
}

/// Simulates `trials` exploration rounds against a frozen `policy` and
/// compares the mean of `ĉ(action)` with its exact expectation
/// `E_{t ~ U, s ~ d_t} [β Q^ref(s, a) + (1 - β) Q^π(s, a)]`.
///
/// Losses must already lie in `[0, 1]` (see [`ExactModel::normalized`]).
pub fn unbiasedness_probe(
    model: &ExactModel,
    policy: &TablePolicy,
    beta: f64,
    action: usize,
    trials: usize,
    seed: u64,
) -> Result<ProbeResult> {
    let mut explore = stream(seed, Stream::Probe);
    let mut mixture = stream(seed, Stream::Mixture);
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..trials {
        let dev = deviate(model, policy, beta, &mut explore, &mut mixture)?;
        let loss = checked(model.terminal_loss_of(dev.end))?;
        let c = importance_weighted_costs(dev.k, dev.action, loss)
            .get(action)
            .copied()
            .unwrap_or(0.0);
        sum += c;
        sum_sq += c * c;
    }
    let n = trials as f64;
    let mean = sum / n;
    let var = if trials > 1 {
        ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0)
    } else {
        0.0
    };
    Ok(ProbeResult {
        monte_carlo_mean: mean,
        standard_error: (var / n).sqrt(),
        exact: crate::theory::expected_bandit_cost(model, policy, beta, action)?,
        trials,
    })
}
