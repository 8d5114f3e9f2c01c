//! The LOLS training loop.
//!
//! For each structured example and each decision point `t`, roll in to
//! `s_t`, try every action once, complete each one-step deviation with the
//! roll-out policy, and turn the end-state losses into a cost-sensitive
//! example. The `T` examples of an instance are fed to the learner together,
//! in ascending `t`, after all roll-outs for the instance are done.

use std::io::{Read, Write};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::cslearn::{CostSensitiveExample, Csoaa};
use crate::error::{Error, Result};
use crate::rng::{stream, Rng, Stream};
use crate::search::{end_loss, execute, step_with, LinearPolicy, Policy, Reference, SearchTask, TieBreak, WeightsView};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RollIn {
    Reference,
    Learned,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RollOut {
    Reference,
    Learned,
    Mixture,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DrawGranularity {
    /// One Bernoulli draw per (t, a) roll-out.
    #[default]
    PerRollout,
    /// A fresh draw at every state along a roll-out.
    PerState,
    /// One draw per structured example, shared by all of its roll-outs.
    PerExample,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RolloutPlan {
    pub roll_in: RollIn,
    pub roll_out: RollOut,
    /// Probability of rolling out with the reference; only read for `Mixture`.
    pub beta: f64,
    pub granularity: DrawGranularity,
    pub rng_seed: u64,
}

impl RolloutPlan {
    pub fn new(roll_in: RollIn, roll_out: RollOut) -> Self {
        Self {
            roll_in,
            roll_out,
            beta: 0.5,
            granularity: DrawGranularity::PerRollout,
            rng_seed: 0,
        }
    }

    /// Learned roll-in, mixture roll-out.
    pub fn lols(beta: f64) -> Self {
        Self {
            beta,
            ..Self::new(RollIn::Learned, RollOut::Mixture)
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }

    pub fn with_granularity(mut self, g: DrawGranularity) -> Self {
        self.granularity = g;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Drawn {
    Reference,
    Learned,
    /// Per-state mixture; individual draws are not recorded.
    Mixed,
}

/// Every learned policy `π̂_0, π̂_1, ...`, stored as sparse weight deltas
/// with periodic dense checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyHistory {
    dim: usize,
    tie_break: TieBreak,
    checkpoint_every: usize,
    /// `(policy index, weights)`, always starting with index 0.
    checkpoints: Vec<(usize, Vec<f64>)>,
    /// `deltas[i]` turns policy `i` into policy `i + 1`.
    deltas: Vec<Vec<(usize, f64)>>,
}

impl PolicyHistory {
    pub fn new(initial: &LinearPolicy, checkpoint_every: usize) -> Self {
        Self {
            dim: initial.dim(),
            tie_break: initial.tie_break,
            checkpoint_every: checkpoint_every.max(1),
            checkpoints: vec![(0, initial.weights.clone())],
            deltas: Vec::new(),
        }
    }

    /// Number of stored policies, including the initial one.
    pub fn len(&self) -> usize {
        self.deltas.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Appends the policy obtained by writing `weights[i]` for every `i` in `touched`.
    pub fn push(&mut self, touched: &[usize], weights: &[f64]) {
        let mut delta: Vec<(usize, f64)> = touched.iter().map(|&i| (i, weights[i])).collect();
        delta.sort_by_key(|&(i, _)| i);
        delta.dedup_by_key(|&mut (i, _)| i);
        self.deltas.push(delta);
        let n = self.deltas.len();
        if n % self.checkpoint_every == 0 {
            self.checkpoints.push((n, weights.to_vec()));
        }
    }

    pub fn policy(&self, n: usize) -> Result<LinearPolicy> {
        if n >= self.len() {
            return Err(Error::NoPolicies);
        }
        let (start, base) = self
            .checkpoints
            .iter()
            .rev()
            .find(|(i, _)| *i <= n)
            .expect("checkpoint 0 always present");
        let mut weights = base.clone();
        for delta in &self.deltas[*start..n] {
            for &(i, v) in delta {
                weights[i] = v;
            }
        }
        Ok(LinearPolicy {
            weights,
            tie_break: self.tie_break,
        })
    }

    /// Visits the requested policies in ascending order, replaying deltas
    /// once. `f` receives the policy index and its weights.
    pub fn sweep(&self, indices: &[usize], mut f: impl FnMut(usize, &LinearPolicy)) -> Result<()> {
        let mut order: Vec<usize> = indices.to_vec();
        order.sort_unstable();
        order.dedup();
        let mut current = match order.first() {
            Some(&first) => self.policy(first)?,
            None => return Ok(()),
        };
        let mut at = order[0];
        for &n in &order {
            if n >= self.len() {
                return Err(Error::NoPolicies);
            }
            for delta in &self.deltas[at..n] {
                for &(i, v) in delta {
                    current.weights[i] = v;
                }
            }
            at = n;
            f(n, &current);
        }
        Ok(())
    }
}

const HISTORY_MAGIC: &[u8; 8] = b"LOLSHIST";

fn read_u64<R: Read>(input: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    input.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_len<R: Read>(input: &mut R, limit: usize) -> Result<usize> {
    let n = read_u64(input)?;
    usize::try_from(n)
        .ok()
        .filter(|&n| n <= limit)
        .ok_or_else(|| Error::Format(format!("length {n} out of range")))
}

impl PolicyHistory {
    /// Binary archive: magic, dim, checkpoint interval, tie-break, the
    /// initial policy's nonzero weights, then every delta. Checkpoints are
    /// rebuilt on load.
    pub fn write_archive<W: Write>(&self, mut out: W) -> Result<()> {
        let mut buf = Vec::new();
        buf.extend_from_slice(HISTORY_MAGIC);
        buf.extend_from_slice(&(self.dim as u64).to_le_bytes());
        buf.extend_from_slice(&(self.checkpoint_every as u64).to_le_bytes());
        buf.push(match self.tie_break {
            TieBreak::LowestIndex => 0,
            TieBreak::HighestIndex => 1,
        });
        let initial: Vec<(usize, f64)> = self.checkpoints[0]
            .1
            .iter()
            .enumerate()
            .filter(|(_, w)| **w != 0.0)
            .map(|(i, &w)| (i, w))
            .collect();
        let put = |pairs: &[(usize, f64)], buf: &mut Vec<u8>| {
            buf.extend_from_slice(&(pairs.len() as u64).to_le_bytes());
            for &(i, v) in pairs {
                buf.extend_from_slice(&(i as u64).to_le_bytes());
                buf.extend_from_slice(&v.to_le_bytes());
            }
        };
        put(&initial, &mut buf);
        buf.extend_from_slice(&(self.deltas.len() as u64).to_le_bytes());
        for d in &self.deltas {
            put(d, &mut buf);
        }
        out.write_all(&buf)?;
        Ok(())
    }

    pub fn read_archive<R: Read>(mut input: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic)?;
        if &magic != HISTORY_MAGIC {
            return Err(Error::Format("bad history magic".into()));
        }
        let dim = read_len(&mut input, isize::MAX as usize)?;
        let checkpoint_every = read_len(&mut input, usize::MAX)?;
        let mut tb = [0u8; 1];
        input.read_exact(&mut tb)?;
        let tie_break = match tb[0] {
            0 => TieBreak::LowestIndex,
            1 => TieBreak::HighestIndex,
            other => return Err(Error::Format(format!("unknown tie-break code {other}"))),
        };
        let pairs = |input: &mut R| -> Result<Vec<(usize, f64)>> {
            let n = read_len(input, dim)?;
            (0..n)
                .map(|_| {
                    let i = read_len(input, dim.saturating_sub(1))?;
                    let v = f64::from_bits(read_u64(input)?);
                    Ok((i, v))
                })
                .collect()
        };
        let mut weights = vec![0.0; dim];
        for (i, v) in pairs(&mut input)? {
            weights[i] = v;
        }
        let mut history = PolicyHistory::new(&LinearPolicy { weights: weights.clone(), tie_break }, checkpoint_every);
        let count = read_len(&mut input, usize::MAX)?;
        for _ in 0..count {
            let delta = pairs(&mut input)?;
            for &(i, v) in &delta {
                weights[i] = v;
            }
            let touched: Vec<usize> = delta.iter().map(|&(i, _)| i).collect();
            history.push(&touched, &weights);
        }
        Ok(history)
    }
}

/// Learner state carried across structured examples.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub learner: Csoaa,
    pub history: PolicyHistory,
    pub examples_seen: u64,
    mixture_rng: Rng,
}

pub const DEFAULT_CHECKPOINT_EVERY: usize = 256;

impl TrainState {
    pub fn new(learner: Csoaa, seed: u64) -> Self {
        let history = PolicyHistory::new(&learner.policy(), DEFAULT_CHECKPOINT_EVERY);
        Self {
            learner,
            history,
            examples_seen: 0,
            mixture_rng: stream(seed, Stream::Mixture),
        }
    }

    pub fn current_policy(&self) -> LinearPolicy {
        self.learner.policy()
    }
}

/// What happened on one structured example; serialized as one JSON line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceReport {
    pub instance: u64,
    /// Roll-in action at each decision point.
    pub rollin_actions: Vec<usize>,
    pub costs: Vec<Vec<f64>>,
    /// Roll-out policy per (t, a).
    pub draws: Vec<Vec<Drawn>>,
    /// Mean cost of the post-update learner's predictions on this instance's examples.
    pub train_loss: f64,
}

/// Subtracts the minimum: `c(a) = ℓ(e(a)) - min_a' ℓ(e(a'))`.
pub fn extract_costs(rollout_losses: &[f64]) -> Result<Vec<f64>> {
    if rollout_losses.is_empty() {
        return Err(Error::EmptyActionSet);
    }
    if let Some(&bad) = rollout_losses.iter().find(|l| !l.is_finite()) {
        return Err(Error::NonFinite(bad));
    }
    let min = rollout_losses.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(rollout_losses.iter().map(|&l| l - min).collect())
}

/// Bernoulli(beta) choice between reference and learned roll-out.
pub fn draw_rollout_policy(beta: f64, rng: &mut Rng) -> Drawn {
    if rng.random::<f64>() < beta {
        Drawn::Reference
    } else {
        Drawn::Learned
    }
}

/// Switches between reference and learned at every state.
struct PerStateMixture<'a> {
    learned: WeightsView<'a>,
    beta: f64,
}

impl<T: SearchTask + ?Sized> Policy<T> for PerStateMixture<'_> {
    fn choose(&self, task: &T, state: &T::State, rng: &mut Rng) -> Result<usize> {
        match draw_rollout_policy(self.beta, rng) {
            Drawn::Reference => task.reference(state),
            _ => self.learned.choose(task, state, rng),
        }
    }
}

/// Runs one structured example through the roll-in/roll-out loop, updates
/// the learner, and returns the emitted cost-sensitive examples.
pub fn process_example<T: SearchTask + ?Sized>(
    state: &mut TrainState,
    task: &T,
    plan: &RolloutPlan,
) -> Result<(Vec<CostSensitiveExample>, InstanceReport)> {
    let horizon = task.horizon();
    let mut examples = Vec::with_capacity(horizon);
    let mut rollin_actions = Vec::with_capacity(horizon);
    let mut all_draws = Vec::with_capacity(horizon);
    let mut current = task.start();
    let example_draw = match (plan.roll_out, plan.granularity) {
        (RollOut::Mixture, DrawGranularity::PerExample) => Some(draw_rollout_policy(plan.beta, &mut state.mixture_rng)),
        _ => None,
    };
    {
        let learned = WeightsView {
            weights: &state.learner.regressor.weights,
            tie_break: state.learner.tie_break,
        };
        let rng = &mut state.mixture_rng;
        for t in 0..horizon {
            let k = task.num_actions(&current);
            if k == 0 {
                return Err(Error::NoLegalAction { depth: t, horizon });
            }
            let features = task.action_features(&current);
            let mut losses = Vec::with_capacity(k);
            let mut draws = Vec::with_capacity(k);
            for a in 0..k {
                let next = task.transition(&current, a);
                let remaining = horizon - t - 1;
                let drawn = match (plan.roll_out, plan.granularity) {
                    (RollOut::Reference, _) => Drawn::Reference,
                    (RollOut::Learned, _) => Drawn::Learned,
                    (RollOut::Mixture, DrawGranularity::PerRollout) => draw_rollout_policy(plan.beta, rng),
                    (RollOut::Mixture, DrawGranularity::PerState) => Drawn::Mixed,
                    (RollOut::Mixture, DrawGranularity::PerExample) => example_draw.expect("drawn above"),
                };
                let end = match drawn {
                    Drawn::Reference => execute(task, &Reference, &next, remaining, rng)?,
                    Drawn::Learned => execute(task, &learned, &next, remaining, rng)?,
                    Drawn::Mixed => {
                        let mix = PerStateMixture {
                            learned,
                            beta: plan.beta,
                        };
                        execute(task, &mix, &next, remaining, rng)?
                    }
                };
                losses.push(end_loss(task, &end)?);
                draws.push(drawn);
            }
            examples.push(CostSensitiveExample::new(features, extract_costs(&losses)?)?);
            all_draws.push(draws);
            let (a, next) = match plan.roll_in {
                RollIn::Reference => step_with(task, &Reference, &current, rng)?,
                RollIn::Learned => step_with(task, &learned, &current, rng)?,
            };
            rollin_actions.push(a);
            current = next;
        }
    }

    let mut touched = Vec::new();
    for ex in &examples {
        state.learner.update(ex)?;
        for f in &ex.per_action_features {
            touched.extend(f.pairs().iter().map(|&(i, _)| i));
        }
    }
    state.history.push(&touched, state.learner.weights());
    state.examples_seen += 1;

    let train_loss = if examples.is_empty() {
        0.0
    } else {
        let mut total = 0.0;
        for ex in &examples {
            total += ex.costs[state.learner.predict(ex)?];
        }
        total / examples.len() as f64
    };
    let report = InstanceReport {
        instance: state.examples_seen - 1,
        rollin_actions,
        costs: examples.iter().map(|e| e.costs.clone()).collect(),
        draws: all_draws,
        train_loss,
    };
    Ok((examples, report))
}

/// Online-to-batch predictor: per trajectory, pick one stored policy
/// uniformly and follow it.
#[derive(Debug, Clone, Copy)]
pub struct AveragedPolicy<'a> {
    history: &'a PolicyHistory,
    include_initial: bool,
}

impl<'a> AveragedPolicy<'a> {
    pub fn candidates(&self) -> std::ops::Range<usize> {
        let first = if self.include_initial { 0 } else { 1 };
        first..self.history.len()
    }

    pub fn sample_index(&self, rng: &mut Rng) -> usize {
        rng.random_range(self.candidates())
    }

    pub fn sample(&self, rng: &mut Rng) -> LinearPolicy {
        self.history
            .policy(self.sample_index(rng))
            .expect("index drawn from history range")
    }

    pub fn history(&self) -> &'a PolicyHistory {
        self.history
    }
}

/// Uniform average over `π̂_1..π̂_N` (or `π̂_0..π̂_N` with `include_initial`).
pub fn averaged_policy(state: &TrainState, include_initial: bool) -> Result<AveragedPolicy<'_>> {
    if state.examples_seen == 0 {
        return Err(Error::NoPolicies);
    }
    Ok(AveragedPolicy {
        history: &state.history,
        include_initial,
    })
}

/// Trains over `tasks` for `passes` passes in data order, reporting every instance.
pub fn train<T: SearchTask>(
    state: &mut TrainState,
    tasks: &[T],
    plan: &RolloutPlan,
    passes: usize,
    mut report: impl FnMut(&InstanceReport),
) -> Result<()> {
    for _ in 0..passes {
        for task in tasks {
            let (_, r) = process_example(state, task, plan)?;
            report(&r);
        }
    }
    Ok(())
}
