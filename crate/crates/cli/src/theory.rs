use clap::{Subcommand, ValueEnum};
use lols::search::TieBreak;
use lols::theory::{
    bandit_unbiasedness_suite, reference_rollin_counterexample, reference_rollout_counterexample, regret_bound_suite,
    snake_lower_bound, telescope_suite,
};
use lols::Result;
use serde_json::{json, Value};

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Ties {
    Lowest,
    Highest,
}

#[derive(Subcommand, Debug, Clone)]
pub enum Suite {
    /// Per-step advantage sums against J differences on random models
    #[command(alias = "lemma6")]
    Telescope {
        #[arg(long, default_value_t = 100)]
        models: usize,
        #[arg(long, default_value_t = 10)]
        pairs: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
    },
    /// Mixture regret bound on trained random models
    #[command(alias = "theorem3")]
    RegretBound {
        #[arg(long, default_value_t = 50)]
        models: usize,
        #[arg(long, default_value_t = 30)]
        rounds: usize,
        #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.25, 0.5, 0.75, 1.0])]
        betas: Vec<f64>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
    },
    /// Reference roll-in never sees the branch it should learn about
    #[command(alias = "counterexample-1")]
    RollinTrap {
        #[arg(long, default_value_t = 20)]
        rounds: usize,
        #[arg(long, value_enum, default_value_t = Ties::Lowest)]
        tie_break: Ties,
    },
    /// Reference roll-out converges to a policy a one-step deviation beats
    #[command(alias = "counterexample-2")]
    RolloutTrap {
        #[arg(long, default_value_t = 0.1)]
        eps: f64,
        /// Reference probability of the mixture roll-out
        #[arg(long, default_value_t = 0.5)]
        beta: f64,
        #[arg(long, default_value_t = 500)]
        rounds: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Both roll-in and roll-out traps
    Counterexamples {
        #[arg(long, default_value_t = 0.1)]
        eps: f64,
    },
    /// Best-neighbor descent along the longest snake of the T-cube
    Snake {
        #[arg(short = 'T', long = "T", default_value_t = 3)]
        t: usize,
    },
    /// Monte Carlo mean of the bandit cost estimate against its exact value
    BanditUnbiasedness {
        #[arg(long, default_value_t = 0.1)]
        eps: f64,
        #[arg(long, default_value_t = 100_000)]
        trials: usize,
        #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.5, 1.0])]
        betas: Vec<f64>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

fn to_value(v: impl serde::Serialize) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}

fn rollin_trap(rounds: usize, ties: Ties) -> Result<(bool, Value)> {
    let tie_break = match ties {
        Ties::Lowest => TieBreak::LowestIndex,
        Ties::Highest => TieBreak::HighestIndex,
    };
    let report = reference_rollin_counterexample(tie_break, rounds)?;
    let unseen = report.records.iter().all(|r| !r.s3_features_seen);
    let gap = report.records[0].worst_gap.is_some_and(|g| g > 0.0);
    Ok((unseen && gap, to_value(&report)))
}

fn rollout_trap(eps: f64, beta: f64, rounds: usize, seed: u64) -> Result<(bool, Value)> {
    let r = reference_rollout_counterexample(eps, beta, rounds, seed)?;
    let ok = !r.reference_rollout.locally_optimal && r.deviation_gap > 0.0 && r.mixture_rollout.locally_optimal;
    Ok((ok, to_value(&r)))
}

/// Runs one suite; returns whether it passed and its report.
pub fn run(suite: &Suite) -> Result<(bool, Value)> {
    let (name, pass, report) = match suite {
        Suite::Telescope { models, pairs, seed, tol } => {
            let out = telescope_suite(*models, *pairs, *seed, *tol);
            ("telescope", out.ok(), to_value(&out))
        }
        Suite::RegretBound {
            models,
            rounds,
            betas,
            seed,
            tol,
        } => {
            let out = regret_bound_suite(*models, betas, *rounds, *seed, *tol)?;
            ("regret-bound", out.ok(), to_value(&out))
        }
        Suite::RollinTrap { rounds, tie_break } => {
            let (ok, v) = rollin_trap(*rounds, *tie_break)?;
            ("rollin-trap", ok, v)
        }
        Suite::RolloutTrap { eps, beta, rounds, seed } => {
            let (ok, v) = rollout_trap(*eps, *beta, *rounds, *seed)?;
            ("rollout-trap", ok, v)
        }
        Suite::Counterexamples { eps } => {
            let (a, va) = rollin_trap(20, Ties::Lowest)?;
            let (b, vb) = rollout_trap(*eps, 0.5, 500, 1)?;
            ("counterexamples", a && b, json!({ "rollin_trap": va, "rollout_trap": vb }))
        }
        Suite::Snake { t } => {
            let r = snake_lower_bound(*t)?;
            let ok = r.strictly_decreasing && r.locally_optimal && r.updates == r.snake_edges;
            ("snake", ok, to_value(&r))
        }
        Suite::BanditUnbiasedness {
            eps,
            trials,
            betas,
            seed,
        } => {
            let (out, cases) = bandit_unbiasedness_suite(*eps, betas, *trials, *seed)?;
            ("bandit-unbiasedness", out.ok(), json!({ "outcome": to_value(&out), "cases": to_value(&cases) }))
        }
    };
    Ok((pass, json!({ "suite": name, "pass": pass, "report": report })))
}
