//! Small-space theory lab: exact evaluation, identity and bound checks,
//! the counterexample constructions and the hypercube descent lower bound.

mod bounds;
mod counterexamples;
mod exact;
mod model;
mod snake;
mod suites;

pub use bounds::{check_telescope, check_regret_bound, BoundReport, TelescopeReport};
pub use counterexamples::{
    best_one_step_deviation, reference_rollin_counterexample, reference_rollout_counterexample, Deviation, RolloutRun,
    RollinRecord, RollinReport, RolloutRecord,
};
pub use exact::{
    enumerate_policies, exact_j, exact_q, expected_bandit_cost, j_at_depth, occupancy, per_state_mixture,
    policy_class_size, q_table, values, ExactPolicy, PolicyIter, StochasticPolicy, TablePolicy,
};
pub use model::{Edge, ExactModel, ModelBuilder, HIDDEN_BRANCH, TIED_ROOT, SHARED_FEATURE};
pub use snake::{bits_to_string, longest_snake, snake_lower_bound, SnakeReport, MAX_SNAKE_T};
pub use suites::{
    bandit_unbiasedness_suite, telescope_suite, regret_bound_suite, ProbeCase, SuiteOutcome, RegretBoundCase,
};

use crate::cslearn::{CostSensitiveExample, Csoaa, DEFAULT_ETA0};
use crate::error::Result;
use crate::lols::{process_example, RolloutPlan, TrainState};
use crate::search::{SearchTask, TieBreak};

/// Result of training on a single exact model for several rounds.
#[derive(Debug, Clone)]
pub struct ModelRun {
    pub state: TrainState,
    /// Every cost-sensitive example, in generation order.
    pub examples: Vec<CostSensitiveExample>,
    /// The roll-in policy of each round, as a class member.
    pub trace: Vec<TablePolicy>,
}

impl ModelRun {
    pub fn final_policy(&self, model: &ExactModel) -> TablePolicy {
        TablePolicy::from_linear(model, &self.state.current_policy())
    }
}

/// Runs `rounds` rounds of the training loop on one model.
pub fn run_lols(model: &ExactModel, plan: &RolloutPlan, rounds: usize, tie_break: TieBreak) -> Result<ModelRun> {
    let mut learner = Csoaa::new(model.dim(), DEFAULT_ETA0);
    learner.tie_break = tie_break;
    let mut state = TrainState::new(learner, plan.rng_seed);
    let mut examples = Vec::new();
    let mut trace = Vec::with_capacity(rounds);
    for _ in 0..rounds {
        trace.push(TablePolicy::from_linear(model, &state.current_policy()));
        let (ex, _) = process_example(&mut state, model, plan)?;
        examples.extend(ex);
    }
    Ok(ModelRun {
        state,
        examples,
        trace,
    })
}
