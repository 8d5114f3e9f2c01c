//! Exact policy evaluation by enumeration over an [`ExactModel`].

use serde::{Deserialize, Serialize};

use super::model::ExactModel;
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::search::{LinearPolicy, Policy, Reference, SearchTask};

/// Action probabilities at every state (empty at terminal states).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StochasticPolicy(pub Vec<Vec<f64>>);

/// Anything that can be evaluated exactly on a model.
pub trait ExactPolicy {
    fn probs(&self, model: &ExactModel, s: usize) -> Vec<f64>;

    fn tabulate(&self, model: &ExactModel) -> StochasticPolicy {
        StochasticPolicy((0..model.num_states()).map(|s| self.probs(model, s)).collect())
    }
}

fn one_hot(n: usize, a: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[a] = 1.0;
    v
}

impl ExactPolicy for StochasticPolicy {
    fn probs(&self, _: &ExactModel, s: usize) -> Vec<f64> {
        self.0[s].clone()
    }

    fn tabulate(&self, _: &ExactModel) -> StochasticPolicy {
        self.clone()
    }
}

impl ExactPolicy for Reference {
    fn probs(&self, model: &ExactModel, s: usize) -> Vec<f64> {
        let n = model.edges(s).len();
        if n == 0 {
            return Vec::new();
        }
        one_hot(n, model.reference_action(s))
    }
}

impl ExactPolicy for LinearPolicy {
    fn probs(&self, model: &ExactModel, s: usize) -> Vec<f64> {
        let n = model.edges(s).len();
        if n == 0 {
            return Vec::new();
        }
        let a = self
            .act(&model.action_features(&s))
            .expect("policy dimension matches the model");
        one_hot(n, a)
    }
}

/// A deterministic policy that picks one action index per feature group:
/// the policy class of linear scorers over one-hot action features.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TablePolicy(pub Vec<usize>);

impl TablePolicy {
    pub fn action(&self, model: &ExactModel, s: usize) -> Option<usize> {
        model.group_of(s).map(|g| self.0[g])
    }

    pub fn from_linear(model: &ExactModel, policy: &LinearPolicy) -> Self {
        Self(
            model
                .groups()
                .iter()
                .map(|members| {
                    policy
                        .act(&model.action_features(&members[0]))
                        .expect("policy dimension matches the model")
                })
                .collect(),
        )
    }

    /// Looks up actions by label at the first member of each group.
    pub fn from_labels(model: &ExactModel, labels: &[&str]) -> Result<Self> {
        if labels.len() != model.num_groups() {
            return Err(Error::Format(format!(
                "expected {} group actions, got {}",
                model.num_groups(),
                labels.len()
            )));
        }
        model
            .groups()
            .iter()
            .zip(labels)
            .map(|(members, l)| {
                model
                    .action_id(members[0], l)
                    .ok_or_else(|| Error::Format(format!("no action '{l}' at {}", model.label(members[0]))))
            })
            .collect::<Result<Vec<_>>>()
            .map(Self)
    }

    pub fn labels(&self, model: &ExactModel) -> Vec<String> {
        model
            .groups()
            .iter()
            .zip(&self.0)
            .map(|(members, &a)| model.edges(members[0])[a].label.clone())
            .collect()
    }
}

impl ExactPolicy for TablePolicy {
    fn probs(&self, model: &ExactModel, s: usize) -> Vec<f64> {
        match self.action(model, s) {
            Some(a) => one_hot(model.edges(s).len(), a),
            None => Vec::new(),
        }
    }
}

impl Policy<ExactModel> for TablePolicy {
    fn choose(&self, model: &ExactModel, s: &usize, _: &mut Rng) -> Result<usize> {
        self.action(model, *s).ok_or(Error::NoLegalAction {
            depth: model.depth_of(*s),
            horizon: model.horizon(),
        })
    }
}

/// Number of policies in the table class.
pub fn policy_class_size(model: &ExactModel) -> f64 {
    (0..model.num_groups())
        .map(|g| model.group_arity(g) as f64)
        .product()
}

/// Every member of the table class, in lexicographic order.
pub fn enumerate_policies(model: &ExactModel) -> PolicyIter {
    PolicyIter {
        arity: (0..model.num_groups()).map(|g| model.group_arity(g)).collect(),
        next: Some(vec![0; model.num_groups()]),
    }
}

/// Lazy odometer over the table class, last group fastest.
#[derive(Debug, Clone)]
pub struct PolicyIter {
    arity: Vec<usize>,
    next: Option<Vec<usize>>,
}

impl Iterator for PolicyIter {
    type Item = TablePolicy;

    fn next(&mut self) -> Option<TablePolicy> {
        let current = self.next.take()?;
        let mut bump = current.clone();
        let mut i = bump.len();
        while i > 0 {
            i -= 1;
            bump[i] += 1;
            if bump[i] < self.arity[i] {
                self.next = Some(bump);
                break;
            }
            bump[i] = 0;
        }
        Some(TablePolicy(current))
    }
}

/// `β ref + (1 - β) π`, mixed independently at every state.
pub fn per_state_mixture(model: &ExactModel, beta: f64, policy: &impl ExactPolicy) -> StochasticPolicy {
    let r = Reference.tabulate(model);
    let p = policy.tabulate(model);
    StochasticPolicy(
        r.0.iter()
            .zip(&p.0)
            .map(|(r, p)| r.iter().zip(p).map(|(r, p)| beta * r + (1.0 - beta) * p).collect())
            .collect(),
    )
}

/// State values `V^π(s)`: expected end loss from `s` following `π`.
pub fn values(model: &ExactModel, policy: &StochasticPolicy) -> Vec<f64> {
    let n = model.num_states();
    let mut v = vec![0.0; n];
    for depth in (0..=model.horizon()).rev() {
        for s in model.states_at(depth) {
            v[s] = if model.is_terminal(s) {
                model.terminal_loss_of(s)
            } else {
                model
                    .edges(s)
                    .iter()
                    .zip(&policy.0[s])
                    .map(|(e, p)| p * v[e.next])
                    .sum()
            };
        }
    }
    v
}

/// `Q^π(s, a)` for every non-terminal state and action.
pub fn q_table(model: &ExactModel, policy: &StochasticPolicy) -> Vec<Vec<f64>> {
    let v = values(model, policy);
    (0..model.num_states())
        .map(|s| model.edges(s).iter().map(|e| v[e.next]).collect())
        .collect()
}

/// State occupancy under `π`; restricted to depth `t` it is `d_t^π`.
pub fn occupancy(model: &ExactModel, policy: &StochasticPolicy) -> Vec<f64> {
    let mut d = vec![0.0; model.num_states()];
    d[model.start_state()] = 1.0;
    for depth in 0..model.horizon() {
        for s in model.states_at(depth) {
            if d[s] == 0.0 {
                continue;
            }
            for (e, p) in model.edges(s).iter().zip(&policy.0[s]) {
                d[e.next] += d[s] * p;
            }
        }
    }
    d
}

pub fn exact_j(model: &ExactModel, policy: &impl ExactPolicy) -> f64 {
    values(model, &policy.tabulate(model))[model.start_state()]
}

pub fn exact_q(model: &ExactModel, policy: &impl ExactPolicy, s: usize, a: usize) -> Result<f64> {
    let edges = model.edges(s);
    if a >= edges.len() {
        return Err(Error::IllegalAction { state: s, action: a });
    }
    Ok(values(model, &policy.tabulate(model))[edges[a].next])
}

/// `E_{s ~ d_t^π} [Q^π(s, π)]` at depth `t`; equals `J(π)` for every `t < T`.
pub fn j_at_depth(model: &ExactModel, policy: &impl ExactPolicy, t: usize) -> f64 {
    let p = policy.tabulate(model);
    let q = q_table(model, &p);
    let d = occupancy(model, &p);
    model
        .states_at(t)
        .map(|s| d[s] * q[s].iter().zip(&p.0[s]).map(|(q, p)| q * p).sum::<f64>())
        .sum()
}

/// Exact expectation of the bandit cost estimate `ĉ(action)` when rolling in
/// and out with `policy` and rolling out with the reference with probability `beta`:
/// `E_{t ~ U(0..T), s ~ d_t^π} [β Q^ref(s, a) + (1 - β) Q^π(s, a)]`.
/// States with fewer than `action + 1` actions contribute zero.
pub fn expected_bandit_cost(model: &ExactModel, policy: &impl ExactPolicy, beta: f64, action: usize) -> Result<f64> {
    let p = policy.tabulate(model);
    let q_pi = q_table(model, &p);
    let q_ref = q_table(model, &Reference.tabulate(model));
    let d = occupancy(model, &p);
    let horizon = model.horizon();
    let mut total = 0.0;
    for t in 0..horizon {
        for s in model.states_at(t) {
            if action < model.edges(s).len() {
                total += d[s] * (beta * q_ref[s][action] + (1.0 - beta) * q_pi[s][action]);
            }
        }
    }
    Ok(total / horizon as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_force_j(model: &ExactModel, p: &StochasticPolicy, s: usize) -> f64 {
        if model.is_terminal(s) {
            return model.terminal_loss_of(s);
        }
        model
            .edges(s)
            .iter()
            .zip(&p.0[s])
            .map(|(e, pr)| pr * brute_force_j(model, p, e.next))
            .sum()
    }

    #[test]
    fn hidden_branch_values() {
        let m = ExactModel::hidden_branch();
        let good = TablePolicy::from_labels(&m, &["a", "c", "f"]).unwrap();
        let bad = TablePolicy::from_labels(&m, &["b", "c", "e"]).unwrap();
        assert_eq!(exact_j(&m, &good), 0.0);
        assert_eq!(exact_j(&m, &bad), 100.0);
        assert_eq!(exact_j(&m, &Reference), 0.0);
    }

    #[test]
    fn shared_feature_values() {
        let m = ExactModel::shared_feature(0.1);
        let bd = TablePolicy::from_labels(&m, &["b", "d"]).unwrap();
        assert_eq!(exact_j(&m, &bd), 0.0);
        let s1 = m.state_id("s1").unwrap();
        let b = m.action_id(s1, "b").unwrap();
        assert!((exact_q(&m, &Reference, s1, b).unwrap() - 1.1).abs() < 1e-12);
        assert!(matches!(exact_q(&m, &Reference, s1, 2), Err(Error::IllegalAction { .. })));
    }

    #[test]
    fn terminal_adjacent_q_ignores_policy() {
        let m = ExactModel::hidden_branch();
        let s2 = m.state_id("s2").unwrap();
        for p in enumerate_policies(&m) {
            assert_eq!(exact_q(&m, &p, s2, 1).unwrap(), 10.0);
        }
    }

    #[test]
    fn j_is_constant_across_depths_and_matches_recursion() {
        for seed in 0..40 {
            let m = ExactModel::random(seed, 5, 3);
            for (k, p) in enumerate_policies(&m).take(8).enumerate() {
                let mixed = per_state_mixture(&m, 0.3 + 0.05 * k as f64, &p);
                let j = exact_j(&m, &mixed);
                assert!((j - brute_force_j(&m, &mixed, m.start_state())).abs() < 1e-12);
                for t in 0..m.horizon() {
                    assert!((j_at_depth(&m, &mixed, t) - j).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn class_enumeration_counts() {
        let m = ExactModel::hidden_branch();
        assert_eq!(enumerate_policies(&m).count(), 8);
        assert_eq!(policy_class_size(&m), 8.0);
        assert_eq!(enumerate_policies(&ExactModel::shared_feature(0.1)).count(), 4);
    }

    #[test]
    fn single_trajectory_bandit_expectation_is_zero() {
        let text = "horizon 2\nstate r 0\nstate x 1\nstate y 2\naction r a x f\naction x a y g\nloss y 0\nreference r a\nreference x a\n";
        let m = ExactModel::parse(text, &[]).unwrap();
        assert_eq!(expected_bandit_cost(&m, &Reference, 0.5, 0).unwrap(), 0.0);
    }
}
