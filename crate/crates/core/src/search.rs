//! Search spaces, policies and trajectory execution.
//!
//! A [`SearchTask`] describes the search space induced by one structured
//! input: a start state, the legal actions at each state, a deterministic
//! transition, per-action features, and the loss of each end state. Every
//! trajectory has the same length, [`SearchTask::horizon`].

use std::fmt::Debug;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::SparseFeatures;
use crate::rng::Rng;

pub trait SearchTask {
    /// Encodes the input and every action taken so far.
    type State: Clone + Debug + PartialEq;

    fn start(&self) -> Self::State;

    /// Number of actions in every complete trajectory.
    fn horizon(&self) -> usize;

    fn depth(&self, state: &Self::State) -> usize;

    /// Live actions are `0..num_actions(state)`.
    fn num_actions(&self, state: &Self::State) -> usize;

    fn transition(&self, state: &Self::State, action: usize) -> Self::State;

    /// One feature vector per live action, all of dimension [`SearchTask::dim`].
    fn action_features(&self, state: &Self::State) -> Vec<SparseFeatures>;

    /// Loss of a terminal state. Callers go through [`end_loss`], which checks depth.
    fn terminal_loss(&self, terminal: &Self::State) -> f64;

    /// The reference policy's action at `state`.
    fn reference(&self, state: &Self::State) -> Result<usize>;

    fn dim(&self) -> usize;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum TieBreak {
    #[default]
    LowestIndex,
    HighestIndex,
}

/// Scores each action by `w · Φ(s, a)` and picks the smallest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearPolicy {
    pub weights: Vec<f64>,
    pub tie_break: TieBreak,
}

impl LinearPolicy {
    pub fn zeros(dim: usize) -> Self {
        Self {
            weights: vec![0.0; dim],
            tie_break: TieBreak::default(),
        }
    }

    pub fn with_tie_break(mut self, tie_break: TieBreak) -> Self {
        self.tie_break = tie_break;
        self
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn act(&self, per_action: &[SparseFeatures]) -> Result<usize> {
        act(self, per_action)
    }

    pub fn view(&self) -> WeightsView<'_> {
        WeightsView {
            weights: &self.weights,
            tie_break: self.tie_break,
        }
    }
}

/// Returns the index of the minimum score, breaking exact ties by `tie_break`.
pub fn argmin(scores: impl IntoIterator<Item = f64>, tie_break: TieBreak) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, s) in scores.into_iter().enumerate() {
        best = match best {
            None => Some((i, s)),
            Some((_, b)) if s < b => Some((i, s)),
            Some((_, b)) if s == b && tie_break == TieBreak::HighestIndex => Some((i, s)),
            keep => keep,
        };
    }
    best.map(|(i, _)| i)
}

pub fn act(policy: &LinearPolicy, per_action: &[SparseFeatures]) -> Result<usize> {
    policy.view().act(per_action)
}

/// A borrowed linear policy, used to act with a learner's live weights.
#[derive(Debug, Clone, Copy)]
pub struct WeightsView<'a> {
    pub weights: &'a [f64],
    pub tie_break: TieBreak,
}

impl WeightsView<'_> {
    pub fn act(&self, per_action: &[SparseFeatures]) -> Result<usize> {
        let d = self.weights.len();
        for f in per_action {
            if f.dim() != d {
                return Err(Error::DimensionMismatch {
                    index: f.dim(),
                    dim: d,
                });
            }
        }
        argmin(per_action.iter().map(|f| f.dot(self.weights)), self.tie_break)
            .ok_or(Error::EmptyActionSet)
    }
}

impl<T: SearchTask + ?Sized> Policy<T> for WeightsView<'_> {
    fn choose(&self, task: &T, state: &T::State, _rng: &mut Rng) -> Result<usize> {
        self.act(&task.action_features(state))
    }
}

/// Anything that picks an action at a state of `T`.
pub trait Policy<T: SearchTask + ?Sized> {
    fn choose(&self, task: &T, state: &T::State, rng: &mut Rng) -> Result<usize>;
}

impl<T: SearchTask + ?Sized> Policy<T> for LinearPolicy {
    fn choose(&self, task: &T, state: &T::State, _rng: &mut Rng) -> Result<usize> {
        act(self, &task.action_features(state))
    }
}

/// The task's reference policy.
#[derive(Debug, Clone, Copy, Default)]
pub struct Reference;

impl<T: SearchTask + ?Sized> Policy<T> for Reference {
    fn choose(&self, task: &T, state: &T::State, _rng: &mut Rng) -> Result<usize> {
        task.reference(state)
    }
}

/// Follows a recorded action sequence, indexed by depth.
#[derive(Debug, Clone)]
pub struct Replay(pub Vec<usize>);

impl<T: SearchTask + ?Sized> Policy<T> for Replay {
    fn choose(&self, task: &T, state: &T::State, _rng: &mut Rng) -> Result<usize> {
        let depth = task.depth(state);
        self.0.get(depth).copied().ok_or(Error::HorizonExceeded {
            depth,
            steps: 1,
            horizon: self.0.len(),
        })
    }
}

/// Wraps a closure `(task, state) -> action`.
pub struct FnPolicy<F>(pub F);

impl<T, F> Policy<T> for FnPolicy<F>
where
    T: SearchTask + ?Sized,
    F: Fn(&T, &T::State) -> usize,
{
    fn choose(&self, task: &T, state: &T::State, _rng: &mut Rng) -> Result<usize> {
        Ok((self.0)(task, state))
    }
}

/// Takes `steps` policy-chosen transitions from `from`.
pub fn execute<T, P>(task: &T, policy: &P, from: &T::State, steps: usize, rng: &mut Rng) -> Result<T::State>
where
    T: SearchTask + ?Sized,
    P: Policy<T> + ?Sized,
{
    let horizon = task.horizon();
    let depth = task.depth(from);
    if depth + steps > horizon {
        return Err(Error::HorizonExceeded {
            depth,
            steps,
            horizon,
        });
    }
    let mut state = from.clone();
    for _ in 0..steps {
        state = step_with(task, policy, &state, rng)?.1;
    }
    Ok(state)
}

/// One policy step; returns the chosen action and the next state.
pub fn step_with<T, P>(task: &T, policy: &P, state: &T::State, rng: &mut Rng) -> Result<(usize, T::State)>
where
    T: SearchTask + ?Sized,
    P: Policy<T> + ?Sized,
{
    let n = task.num_actions(state);
    if n == 0 {
        return Err(Error::NoLegalAction {
            depth: task.depth(state),
            horizon: task.horizon(),
        });
    }
    let a = policy.choose(task, state, rng)?;
    if a >= n {
        return Err(Error::IllegalAction { state: task.depth(state), action: a });
    }
    Ok((a, task.transition(state, a)))
}

/// Runs `policy` from `from` to the end and returns the end state.
pub fn roll_out<T, P>(task: &T, policy: &P, from: &T::State, rng: &mut Rng) -> Result<T::State>
where
    T: SearchTask + ?Sized,
    P: Policy<T> + ?Sized,
{
    let remaining = task.horizon().saturating_sub(task.depth(from));
    execute(task, policy, from, remaining, rng)
}

pub fn end_loss<T: SearchTask + ?Sized>(task: &T, terminal: &T::State) -> Result<f64> {
    let depth = task.depth(terminal);
    let horizon = task.horizon();
    if depth != horizon {
        return Err(Error::NotTerminal { depth, horizon });
    }
    Ok(task.terminal_loss(terminal))
}

#[derive(Debug, Clone)]
pub struct TrajectoryStep<S> {
    pub state: S,
    pub action: usize,
    pub per_action_features: Vec<SparseFeatures>,
}

/// A complete start-to-end run of a policy.
#[derive(Debug, Clone)]
pub struct Trajectory<S> {
    pub steps: Vec<TrajectoryStep<S>>,
    pub end: S,
    pub end_loss: f64,
}

impl<S> Trajectory<S> {
    pub fn actions(&self) -> Vec<usize> {
        self.steps.iter().map(|s| s.action).collect()
    }
}

pub fn trajectory<T, P>(task: &T, policy: &P, rng: &mut Rng) -> Result<Trajectory<T::State>>
where
    T: SearchTask + ?Sized,
    P: Policy<T> + ?Sized,
{
    let mut state = task.start();
    let mut steps = Vec::with_capacity(task.horizon());
    while task.depth(&state) < task.horizon() {
        let per_action_features = task.action_features(&state);
        let (action, next) = step_with(task, policy, &state, rng)?;
        steps.push(TrajectoryStep {
            state,
            action,
            per_action_features,
        });
        state = next;
    }
    let end_loss = end_loss(task, &state)?;
    Ok(Trajectory {
        steps,
        end: state,
        end_loss,
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::rng::{stream, Stream};

    /// Binary tree of depth `T` where the loss is the number of 1-actions,
    /// with unit features per (depth, action).
    #[derive(Debug)]
    pub(crate) struct CountOnes {
        pub horizon: usize,
    }

    impl SearchTask for CountOnes {
        type State = Vec<usize>;
        fn start(&self) -> Vec<usize> {
            Vec::new()
        }
        fn horizon(&self) -> usize {
            self.horizon
        }
        fn depth(&self, s: &Vec<usize>) -> usize {
            s.len()
        }
        fn num_actions(&self, _: &Vec<usize>) -> usize {
            2
        }
        fn transition(&self, s: &Vec<usize>, a: usize) -> Vec<usize> {
            let mut n = s.clone();
            n.push(a);
            n
        }
        fn action_features(&self, s: &Vec<usize>) -> Vec<SparseFeatures> {
            (0..2)
                .map(|a| SparseFeatures::unit(self.dim(), 2 * s.len() + a).unwrap())
                .collect()
        }
        fn terminal_loss(&self, s: &Vec<usize>) -> f64 {
            s.iter().sum::<usize>() as f64
        }
        fn reference(&self, _: &Vec<usize>) -> Result<usize> {
            Ok(0)
        }
        fn dim(&self) -> usize {
            2 * self.horizon
        }
    }

    fn rng() -> Rng {
        stream(0, Stream::Mixture)
    }

    fn feats(scores: &[f64]) -> (LinearPolicy, Vec<SparseFeatures>) {
        let d = scores.len();
        let policy = LinearPolicy {
            weights: scores.to_vec(),
            tie_break: TieBreak::LowestIndex,
        };
        let f = (0..d).map(|i| SparseFeatures::unit(d, i).unwrap()).collect();
        (policy, f)
    }

    #[test]
    fn zero_weights_pick_first_action() {
        let (_, f) = feats(&[0.0, 0.0, 0.0]);
        assert_eq!(act(&LinearPolicy::zeros(3), &f).unwrap(), 0);
    }

    #[test]
    fn unique_argmin() {
        let (p, f) = feats(&[2.0, 0.5, 1.0]);
        assert_eq!(act(&p, &f).unwrap(), 1);
    }

    #[test]
    fn ties_follow_tie_break() {
        let (p, f) = feats(&[0.5, 0.5, 1.0]);
        assert_eq!(act(&p, &f).unwrap(), 0);
        let p = p.with_tie_break(TieBreak::HighestIndex);
        assert_eq!(act(&p, &f).unwrap(), 1);
    }

    #[test]
    fn empty_action_set_is_an_error() {
        assert!(matches!(act(&LinearPolicy::zeros(2), &[]), Err(Error::EmptyActionSet)));
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let f = vec![SparseFeatures::unit(4, 0).unwrap()];
        assert!(matches!(
            act(&LinearPolicy::zeros(3), &f),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn zero_steps_is_identity() {
        let task = CountOnes { horizon: 3 };
        let s = vec![1];
        assert_eq!(execute(&task, &Reference, &s, 0, &mut rng()).unwrap(), s);
    }

    #[test]
    fn horizon_is_enforced() {
        let task = CountOnes { horizon: 3 };
        let err = execute(&task, &Reference, &vec![1, 0], 2, &mut rng()).unwrap_err();
        assert!(matches!(err, Error::HorizonExceeded { .. }));
    }

    #[test]
    fn end_loss_requires_terminal() {
        let task = CountOnes { horizon: 3 };
        assert!(matches!(end_loss(&task, &vec![1]), Err(Error::NotTerminal { .. })));
        assert_eq!(end_loss(&task, &vec![1, 0, 1]).unwrap(), 2.0);
        assert_eq!(end_loss(&task, &vec![1, 0, 1]).unwrap(), 2.0);
    }

    #[test]
    fn trajectory_replays_to_same_loss() {
        let task = CountOnes { horizon: 4 };
        let policy = LinearPolicy {
            weights: vec![1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0],
            tie_break: TieBreak::LowestIndex,
        };
        let traj = trajectory(&task, &policy, &mut rng()).unwrap();
        assert_eq!(traj.actions(), vec![1, 0, 1, 0]);
        assert_eq!(traj.steps.len(), 4);
        let end = execute(&task, &Replay(traj.actions()), &task.start(), 4, &mut rng()).unwrap();
        assert_eq!(end_loss(&task, &end).unwrap(), traj.end_loss);
    }

    #[test]
    fn rollouts_take_remaining_steps() {
        let task = CountOnes { horizon: 5 };
        for depth in 0..=5 {
            let s = vec![0; depth];
            let end = roll_out(&task, &Reference, &s, &mut rng()).unwrap();
            assert_eq!(end.len(), 5);
        }
    }
}
