//! Telescoping identity and the mixture regret bound, checked by enumeration.

use serde::{Deserialize, Serialize};

use super::exact::{occupancy, q_table, values, ExactPolicy, StochasticPolicy};
use super::model::ExactModel;
use crate::error::{Error, Result};
use crate::search::{Reference, SearchTask};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TelescopeReport {
    /// `J(π1) - J(π2)`
    pub lhs: f64,
    /// `Σ_t E_{s ~ d_t^π1} [Q^π2(s, π1) - Q^π2(s, π2)]`
    pub rhs_forward: f64,
    /// `Σ_t E_{s ~ d_t^π2} [Q^π1(s, π1) - Q^π1(s, π2)]`
    pub rhs_reverse: f64,
}

impl TelescopeReport {
    pub fn agrees(&self, tol: f64) -> bool {
        (self.lhs - self.rhs_forward).abs() <= tol && (self.lhs - self.rhs_reverse).abs() <= tol
    }
}

fn expect_q(q: &[f64], p: &[f64]) -> f64 {
    q.iter().zip(p).map(|(q, p)| q * p).sum()
}

/// `Σ_t E_{s ~ d_t^roll} [Q^base(s, first) - Q^base(s, second)]`
fn telescope(
    model: &ExactModel,
    roll: &StochasticPolicy,
    base: &StochasticPolicy,
    first: &StochasticPolicy,
    second: &StochasticPolicy,
) -> f64 {
    let d = occupancy(model, roll);
    let q = q_table(model, base);
    (0..model.num_states())
        .filter(|&s| !model.is_terminal(s))
        .map(|s| d[s] * (expect_q(&q[s], &first.0[s]) - expect_q(&q[s], &second.0[s])))
        .sum()
}

pub fn check_telescope(model: &ExactModel, p1: &impl ExactPolicy, p2: &impl ExactPolicy) -> TelescopeReport {
    let p1 = p1.tabulate(model);
    let p2 = p2.tabulate(model);
    let start = model.start_state();
    TelescopeReport {
        lhs: values(model, &p1)[start] - values(model, &p2)[start],
        rhs_forward: telescope(model, &p1, &p2, &p1, &p2),
        rhs_reverse: telescope(model, &p2, &p1, &p1, &p2),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub beta: f64,
    pub rounds: usize,
    pub horizon: usize,
    pub j_bar: f64,
    pub j_ref: f64,
    /// `β (J(π̄) - J(ref))`
    pub lhs_ref_term: f64,
    /// `(1 - β) Σ_t (J(π̄) - min_{π ∈ Π} E_{s ~ d_t^π̄} [Q^π̄(s, π)])`
    pub lhs_dev_term: f64,
    pub rhs: f64,
    pub eps_bar: f64,
    /// Average of `Q^out(s, π̂_i)` over rounds and decision points.
    pub cs_term: f64,
    /// Average of `β min_a Q^ref(s, a) + (1 - β) min_a Q^π̂_i(s, a)`.
    pub mixed_min_term: f64,
    /// Best fixed class member on the same roll-in distributions.
    pub ell_star: f64,
    /// `ell_star - mixed_min_term`
    pub eps_class: f64,
    pub satisfied: bool,
}

impl BoundReport {
    pub fn lhs(&self) -> f64 {
        self.lhs_ref_term + self.lhs_dev_term
    }
}

struct RoundTables {
    d: Vec<f64>,
    q: Vec<Vec<f64>>,
    p: StochasticPolicy,
}

fn min_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Minimizes `Σ_s w(s) · x(s, π(s))` over the table class, one group at a time.
fn min_over_class(model: &ExactModel, mut weight_row: impl FnMut(usize, usize) -> f64, states: &[bool]) -> f64 {
    model
        .groups()
        .iter()
        .enumerate()
        .map(|(g, members)| {
            (0..model.group_arity(g))
                .map(|a| {
                    members
                        .iter()
                        .filter(|&&s| states[s])
                        .map(|&s| weight_row(s, a))
                        .sum::<f64>()
                })
                .fold(f64::INFINITY, f64::min)
        })
        .sum()
}

/// Evaluates the regret bound for the averaged policy over `trace`, the
/// roll-in policy of each training round, with exact mixture roll-out values.
pub fn check_regret_bound<P: ExactPolicy>(model: &ExactModel, trace: &[P], beta: f64, tol: f64) -> Result<BoundReport> {
    if trace.is_empty() {
        return Err(Error::TraceIncomplete("no rounds recorded".into()));
    }
    let n_states = model.num_states();
    let horizon = model.horizon();
    let rounds: Vec<RoundTables> = trace
        .iter()
        .map(|p| {
            let p = p.tabulate(model);
            RoundTables {
                d: occupancy(model, &p),
                q: q_table(model, &p),
                p,
            }
        })
        .collect();
    for (i, r) in rounds.iter().enumerate() {
        if r.p.0.len() != n_states || (0..n_states).any(|s| r.p.0[s].len() != model.edges(s).len()) {
            return Err(Error::TraceIncomplete(format!("round {i} does not cover every state")));
        }
    }
    let n = rounds.len() as f64;
    let reference = Reference.tabulate(model);
    let q_ref = q_table(model, &reference);
    let start = model.start_state();
    let j_ref = values(model, &reference)[start];
    let j_bar = rounds.iter().map(|r| values(model, &r.p)[start]).sum::<f64>() / n;

    let mut dev = 0.0;
    for t in 0..horizon {
        let at_t: Vec<bool> = (0..n_states).map(|s| model.depth_of(s) == t).collect();
        let best = min_over_class(
            model,
            |s, a| rounds.iter().map(|r| r.d[s] * r.q[s][a]).sum::<f64>() / n,
            &at_t,
        );
        dev += j_bar - best;
    }

    let mut cs_term = 0.0;
    let mut mixed_min = 0.0;
    let mut direct = 0.0;
    for r in &rounds {
        for s in 0..n_states {
            if model.is_terminal(s) || r.d[s] == 0.0 {
                continue;
            }
            let q_out: Vec<f64> = q_ref[s]
                .iter()
                .zip(&r.q[s])
                .map(|(qr, qp)| beta * qr + (1.0 - beta) * qp)
                .collect();
            let cs = expect_q(&q_out, &r.p.0[s]);
            let mm = beta * min_of(&q_ref[s]) + (1.0 - beta) * min_of(&r.q[s]);
            cs_term += r.d[s] * cs;
            mixed_min += r.d[s] * mm;
            direct += r.d[s] * (cs - mm);
        }
    }
    let scale = n * horizon as f64;
    cs_term /= scale;
    mixed_min /= scale;
    let eps_bar = direct / scale;

    let all_nonterminal: Vec<bool> = (0..n_states).map(|s| !model.is_terminal(s)).collect();
    let ell_star = min_over_class(
        model,
        |s, a| {
            rounds
                .iter()
                .map(|r| r.d[s] * (beta * q_ref[s][a] + (1.0 - beta) * r.q[s][a]))
                .sum::<f64>()
        },
        &all_nonterminal,
    ) / scale;

    let lhs_ref_term = beta * (j_bar - j_ref);
    let lhs_dev_term = (1.0 - beta) * dev;
    let rhs = horizon as f64 * eps_bar;
    Ok(BoundReport {
        beta,
        rounds: trace.len(),
        horizon,
        j_bar,
        j_ref,
        lhs_ref_term,
        lhs_dev_term,
        rhs,
        eps_bar,
        cs_term,
        mixed_min_term: mixed_min,
        ell_star,
        eps_class: ell_star - mixed_min,
        satisfied: lhs_ref_term + lhs_dev_term <= rhs + tol,
    })
}

#[cfg(test)]
mod tests {
    use super::super::exact::{enumerate_policies, per_state_mixture, policy_class_size, TablePolicy};
    use super::*;

    #[test]
    fn identical_policies_telescope_to_zero() {
        let m = ExactModel::hidden_branch();
        let p = TablePolicy::from_labels(&m, &["b", "d", "e"]).unwrap();
        let r = check_telescope(&m, &p, &p);
        assert_eq!((r.lhs, r.rhs_forward, r.rhs_reverse), (0.0, 0.0, 0.0));
    }

    #[test]
    fn hidden_branch_telescope() {
        let m = ExactModel::hidden_branch();
        let p1 = TablePolicy::from_labels(&m, &["a", "c", "f"]).unwrap();
        let p2 = TablePolicy::from_labels(&m, &["b", "c", "e"]).unwrap();
        let r = check_telescope(&m, &p1, &p2);
        assert_eq!(r.lhs, -100.0);
        assert!(r.agrees(1e-9), "{r:?}");
    }

    #[test]
    fn telescope_holds_for_stochastic_policies() {
        for seed in 0..20 {
            let m = ExactModel::random(seed, 4, 3);
            let first = TablePolicy(vec![0; m.num_groups()]);
            let last = TablePolicy((0..m.num_groups()).map(|g| m.group_arity(g) - 1).collect());
            let p1 = per_state_mixture(&m, 0.4, &first);
            let p2 = per_state_mixture(&m, 0.7, &last);
            assert!(check_telescope(&m, &p1, &p2).agrees(1e-9));
        }
    }

    /// Minimum over the whole class by enumeration.
    fn brute_dev_min(m: &ExactModel, trace: &[TablePolicy], t: usize) -> f64 {
        let n = trace.len() as f64;
        let tabs: Vec<_> = trace.iter().map(|p| p.tabulate(m)).collect();
        enumerate_policies(m)
            .map(|pi| {
                tabs.iter()
                    .map(|p| {
                        let d = occupancy(m, p);
                        let q = q_table(m, p);
                        m.states_at(t)
                            .map(|s| d[s] * q[s][pi.action(m, s).unwrap()])
                            .sum::<f64>()
                    })
                    .sum::<f64>()
                    / n
            })
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn group_decomposition_matches_enumeration() {
        let small = (0..200u64)
            .map(|seed| (seed, ExactModel::random(seed, 4, 3)))
            .filter(|(_, m)| policy_class_size(m) <= 50_000.0)
            .take(15);
        for (seed, m) in small {
            let all: Vec<TablePolicy> = enumerate_policies(&m).collect();
            let trace: Vec<TablePolicy> = (0..3).map(|i| all[(i * 7 + seed as usize) % all.len()].clone()).collect();
            let report = check_regret_bound(&m, &trace, 0.0, 1e-9).unwrap();
            let dev: f64 = (0..m.horizon()).map(|t| report.j_bar - brute_dev_min(&m, &trace, t)).sum();
            assert!((report.lhs_dev_term - dev).abs() < 1e-9);
        }
    }

    #[test]
    fn reference_trace_gives_zero_reference_term() {
        let m = ExactModel::shared_feature(0.1);
        for beta in [0.0, 0.5, 1.0] {
            let r = check_regret_bound(&m, &[Reference.tabulate(&m)], beta, 1e-9).unwrap();
            assert_eq!(r.lhs_ref_term, 0.0);
            assert!(r.lhs_dev_term >= 0.0);
            assert!(r.satisfied);
            assert!((r.eps_bar - (r.cs_term - r.mixed_min_term)).abs() < 1e-9);
        }
    }

    #[test]
    fn empty_trace_is_rejected() {
        let m = ExactModel::shared_feature(0.1);
        let empty: Vec<TablePolicy> = Vec::new();
        assert!(matches!(check_regret_bound(&m, &empty, 0.5, 1e-9), Err(Error::TraceIncomplete(_))));
    }
}
