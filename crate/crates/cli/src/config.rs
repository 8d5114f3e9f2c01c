use std::path::PathBuf;

use clap::Args;
use lols::experiment::ExperimentConfig;
use lols::{Error, Result};

/// Config file plus per-key overrides. Flags win over `--set`, which wins
/// over the file.
#[derive(Args, Debug, Clone, Default)]
pub struct ConfigArgs {
    /// key = value config file
    #[arg(long, short = 'c')]
    pub config: Option<PathBuf>,
    /// Any config key, as KEY=VALUE (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// sequence | multiclass | parse | model
    #[arg(long)]
    pub task: Option<String>,
    /// Exact model file, for task = model
    #[arg(long)]
    pub model_file: Option<String>,
    /// optimal | suboptimal | bad
    #[arg(long)]
    pub reference: Option<String>,
    /// reference | learned
    #[arg(long)]
    pub roll_in: Option<String>,
    /// reference | learned | mixture
    #[arg(long)]
    pub roll_out: Option<String>,
    #[arg(long)]
    pub beta: Option<String>,
    /// per-rollout | per-state | per-example
    #[arg(long)]
    pub granularity: Option<String>,
    #[arg(long)]
    pub passes: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
    #[arg(long)]
    pub eta0: Option<String>,
    #[arg(long)]
    pub bits: Option<String>,
    #[arg(long)]
    pub train: Option<String>,
    #[arg(long)]
    pub test: Option<String>,
    #[arg(long)]
    pub epsilon: Option<String>,
    #[arg(long)]
    pub rounds: Option<String>,
    #[arg(long)]
    pub averaged: Option<String>,
}

impl ConfigArgs {
    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let mut config = match &self.config {
            Some(path) => ExperimentConfig::from_file(path)?,
            None => ExperimentConfig::default(),
        };
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::BadConfig(format!("--set expects KEY=VALUE, got '{kv}'")))?;
            config.set(k.trim(), v.trim())?;
        }
        let flags = [
            ("task", &self.task),
            ("model_file", &self.model_file),
            ("reference", &self.reference),
            ("roll_in", &self.roll_in),
            ("roll_out", &self.roll_out),
            ("beta", &self.beta),
            ("granularity", &self.granularity),
            ("passes", &self.passes),
            ("seed", &self.seed),
            ("eta0", &self.eta0),
            ("bits", &self.bits),
            ("train", &self.train),
            ("test", &self.test),
            ("epsilon", &self.epsilon),
            ("rounds", &self.rounds),
            ("averaged", &self.averaged),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                config.set(key, v)?;
            }
        }
        config.validate()?;
        Ok(config)
    }
}
