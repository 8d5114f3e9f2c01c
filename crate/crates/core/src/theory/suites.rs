//! Seeded batteries over random models, shared by the command line and tests.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::bounds::{check_telescope, check_regret_bound, BoundReport, TelescopeReport};
use super::exact::TablePolicy;
use super::model::ExactModel;
use super::run_lols;
use crate::bandit::{unbiasedness_probe, ProbeResult};
use crate::error::Result;
use crate::lols::RolloutPlan;
use crate::rng::{derive_seed, stream, Stream};
use crate::search::TieBreak;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteOutcome<C> {
    pub suite: String,
    pub passed: usize,
    pub total: usize,
    pub failures: Vec<C>,
}

impl<C> SuiteOutcome<C> {
    pub fn ok(&self) -> bool {
        self.passed == self.total
    }
}

fn random_table(model: &ExactModel, rng: &mut crate::rng::Rng) -> TablePolicy {
    TablePolicy(
        (0..model.num_groups())
            .map(|g| rng.random_range(0..model.group_arity(g)))
            .collect(),
    )
}

/// Telescoping identity on `models` random models with `pairs` random
/// policy pairs each, checked in both argument orders.
pub fn telescope_suite(models: usize, pairs: usize, seed: u64, tol: f64) -> SuiteOutcome<TelescopeReport> {
    let mut out = SuiteOutcome {
        suite: "telescope".into(),
        passed: 0,
        total: 0,
        failures: Vec::new(),
    };
    for m in 0..models {
        let model_seed = derive_seed(seed, m as u64);
        let model = ExactModel::random(model_seed, 5, 3);
        let mut rng = stream(model_seed, Stream::Probe);
        for _ in 0..pairs {
            let p1 = random_table(&model, &mut rng);
            let p2 = random_table(&model, &mut rng);
            out.total += 1;
            let forward = check_telescope(&model, &p1, &p2);
            let backward = check_telescope(&model, &p2, &p1);
            if forward.agrees(tol) && backward.agrees(tol) {
                out.passed += 1;
            } else {
                out.failures.push(if forward.agrees(tol) { backward } else { forward });
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretBoundCase {
    pub model_seed: u64,
    pub report: BoundReport,
}

/// Trains `rounds` rounds with learned roll-in and mixture roll-out on each
/// random model for every `beta`, then checks the bound on the roll-in trace.
pub fn regret_bound_suite(
    models: usize,
    betas: &[f64],
    rounds: usize,
    seed: u64,
    tol: f64,
) -> Result<SuiteOutcome<RegretBoundCase>> {
    let mut out = SuiteOutcome {
        suite: "regret-bound".into(),
        passed: 0,
        total: 0,
        failures: Vec::new(),
    };
    for m in 0..models {
        let model_seed = derive_seed(seed, m as u64);
        let model = ExactModel::random(model_seed, 5, 3);
        for &beta in betas {
            let plan = RolloutPlan::lols(beta).with_seed(model_seed);
            let run = run_lols(&model, &plan, rounds, TieBreak::LowestIndex)?;
            let report = check_regret_bound(&model, &run.trace, beta, tol)?;
            out.total += 1;
            if report.satisfied {
                out.passed += 1;
            } else {
                out.failures.push(RegretBoundCase { model_seed, report });
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeCase {
    pub beta: f64,
    pub action: usize,
    pub result: ProbeResult,
}

/// Monte Carlo mean of the bandit cost estimate against its exact value on
/// the shared-feature model (losses scaled into `[0, 1]`), with an arbitrary
/// non-reference roll-in policy.
pub fn bandit_unbiasedness_suite(
    eps: f64,
    betas: &[f64],
    trials: usize,
    seed: u64,
) -> Result<(SuiteOutcome<ProbeCase>, Vec<ProbeCase>)> {
    let model = ExactModel::shared_feature(eps).normalized();
    let policy = TablePolicy::from_labels(&model, &["b", "d"])?;
    let mut out = SuiteOutcome {
        suite: "bandit-unbiasedness".into(),
        passed: 0,
        total: 0,
        failures: Vec::new(),
    };
    let mut cases = Vec::new();
    for (i, &beta) in betas.iter().enumerate() {
        for action in 0..2 {
            let case_seed = derive_seed(seed, (i * 2 + action) as u64);
            let result = unbiasedness_probe(&model, &policy, beta, action, trials, case_seed)?;
            out.total += 1;
            let case = ProbeCase { beta, action, result };
            if result.within(3.0) {
                out.passed += 1;
            } else {
                out.failures.push(case.clone());
            }
            cases.push(case);
        }
    }
    Ok((out, cases))
}
