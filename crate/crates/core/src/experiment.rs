//! Experiment drivers: configuration, data loading, training, evaluation,
//! the roll-in × roll-out grid and simulated bandit sessions.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bandit::{bandit_step, BanditLogEntry, BanditState, Mode, DEFAULT_EPSILON};
use crate::cslearn::{Csoaa, DEFAULT_ETA0};
use crate::error::{Error, Result};
use crate::features::SparseFeatures;
use crate::lols::{averaged_policy, train, DrawGranularity, InstanceReport, PolicyHistory, RollIn, RollOut, RolloutPlan, TrainState};
use crate::rng::{derive_seed, stream, Stream};
use crate::search::{trajectory, LinearPolicy, SearchTask};
use crate::tasks::{
    read_csv, read_tsv, LabelTree, LabelTreeTask, MulticlassRow, ParseTask, ReferenceQuality, Sentence, SequenceTask,
    TagSet,
};
use crate::theory::{exact_j, ExactModel};

/// Salt for the seed that fixes the reference's arbitrary choices, shared by every grid cell.
const REFERENCE_SALT: u64 = 0x7265_6665;

impl FromStr for RollIn {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reference" | "ref" => Ok(Self::Reference),
            "learned" => Ok(Self::Learned),
            other => Err(Error::BadConfig(format!("unknown roll-in '{other}'"))),
        }
    }
}

impl FromStr for RollOut {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reference" | "ref" => Ok(Self::Reference),
            "learned" => Ok(Self::Learned),
            "mixture" | "mix" => Ok(Self::Mixture),
            other => Err(Error::BadConfig(format!("unknown roll-out '{other}'"))),
        }
    }
}

impl FromStr for DrawGranularity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per-rollout" => Ok(Self::PerRollout),
            "per-state" => Ok(Self::PerState),
            "per-example" => Ok(Self::PerExample),
            other => Err(Error::BadConfig(format!("unknown granularity '{other}'"))),
        }
    }
}

fn roll_in_name(r: RollIn) -> &'static str {
    match r {
        RollIn::Reference => "reference",
        RollIn::Learned => "learned",
    }
}

fn roll_out_name(r: RollOut) -> &'static str {
    match r {
        RollOut::Reference => "reference",
        RollOut::Learned => "learned",
        RollOut::Mixture => "mixture",
    }
}

fn quality_name(q: ReferenceQuality) -> &'static str {
    match q {
        ReferenceQuality::Optimal => "optimal",
        ReferenceQuality::Suboptimal => "suboptimal",
        ReferenceQuality::Bad => "bad",
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Sequence,
    Multiclass,
    Parse,
    /// An exact model file named by `model_file`.
    Model,
}

impl FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sequence" => Ok(Self::Sequence),
            "multiclass" => Ok(Self::Multiclass),
            "parse" => Ok(Self::Parse),
            "model" => Ok(Self::Model),
            other => Err(Error::BadConfig(format!("unknown task '{other}'"))),
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Sequence => "sequence",
            Self::Multiclass => "multiclass",
            Self::Parse => "parse",
            Self::Model => "model",
        })
    }
}

/// Flat key=value experiment description. Every key can also be set from
/// the command line through [`ExperimentConfig::set`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub task: TaskKind,
    pub model_file: Option<PathBuf>,
    /// `param.NAME = value` overrides for model files.
    pub params: BTreeMap<String, f64>,
    pub reference: ReferenceQuality,
    pub roll_in: RollIn,
    pub roll_out: RollOut,
    pub beta: f64,
    pub granularity: DrawGranularity,
    pub passes: usize,
    pub seed: u64,
    pub eta0: f64,
    /// Feature hash width for the sequence and parse templates.
    pub bits: u32,
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub epsilon: f64,
    /// Bandit rounds, and training instances for exact-model tasks.
    pub rounds: usize,
    /// Evaluate the history-averaged predictor instead of the final policy.
    pub averaged: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            task: TaskKind::Sequence,
            model_file: None,
            params: BTreeMap::new(),
            reference: ReferenceQuality::Optimal,
            roll_in: RollIn::Learned,
            roll_out: RollOut::Mixture,
            beta: 0.5,
            granularity: DrawGranularity::PerExample,
            passes: 5,
            seed: 1,
            eta0: DEFAULT_ETA0,
            bits: 16,
            train: None,
            test: None,
            epsilon: DEFAULT_EPSILON,
            rounds: 1000,
            averaged: false,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::BadConfig(format!("bad value '{value}' for '{key}'")))
}

fn path_value(value: &str) -> Option<PathBuf> {
    if value.is_empty() || value == "none" {
        None
    } else {
        Some(PathBuf::from(value))
    }
}

impl ExperimentConfig {
    /// Parses `key = value` lines; `#` starts a comment line.
    pub fn from_kv(text: &str) -> Result<Self> {
        let mut config = Self::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::BadConfig(format!("line {}: expected key = value", i + 1)))?;
            config
                .set(k.trim(), v.trim())
                .map_err(|e| Error::BadConfig(format!("line {}: {}", i + 1, strip_prefix(&e))))?;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::BadConfig(format!("cannot read {}: {e}", path.display())))?;
        Self::from_kv(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "task" => self.task = value.parse()?,
            "model_file" => self.model_file = path_value(value),
            "reference" => self.reference = value.parse()?,
            "roll_in" => self.roll_in = value.parse()?,
            "roll_out" => self.roll_out = value.parse()?,
            "beta" => self.beta = parse_value(key, value)?,
            "granularity" => self.granularity = value.parse()?,
            "passes" => self.passes = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            "eta0" => self.eta0 = parse_value(key, value)?,
            "bits" => self.bits = parse_value(key, value)?,
            "train" => self.train = path_value(value),
            "test" => self.test = path_value(value),
            "epsilon" => self.epsilon = parse_value(key, value)?,
            "rounds" => self.rounds = parse_value(key, value)?,
            "averaged" => self.averaged = parse_value(key, value)?,
            _ => match key.strip_prefix("param.") {
                Some(name) if !name.is_empty() => {
                    self.params.insert(name.to_string(), parse_value(key, value)?);
                }
                _ => return Err(Error::BadConfig(format!("unknown key '{key}'"))),
            },
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::BadConfig(m));
        if !(0.0..=1.0).contains(&self.beta) {
            return bad(format!("beta must lie in [0, 1], got {}", self.beta));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return bad(format!("epsilon must lie in [0, 1], got {}", self.epsilon));
        }
        if !(self.eta0.is_finite() && self.eta0 > 0.0) {
            return bad(format!("eta0 must be positive, got {}", self.eta0));
        }
        if !(1..=24).contains(&self.bits) {
            return bad(format!("bits must lie in 1..=24, got {}", self.bits));
        }
        if self.task == TaskKind::Model && self.model_file.is_none() {
            return bad("task = model needs model_file".into());
        }
        Ok(())
    }

    /// Canonical rendering, one `key = value` per line in a fixed order.
    pub fn to_kv(&self) -> String {
        let path = |p: &Option<PathBuf>| p.as_ref().map_or("none".to_string(), |p| p.display().to_string());
        let mut out = String::new();
        let mut line = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        line("task", self.task.to_string());
        line("model_file", path(&self.model_file));
        for (k, v) in &self.params {
            line(&format!("param.{k}"), v.to_string());
        }
        line("reference", quality_name(self.reference).into());
        line("roll_in", roll_in_name(self.roll_in).into());
        line("roll_out", roll_out_name(self.roll_out).into());
        line("beta", self.beta.to_string());
        line(
            "granularity",
            match self.granularity {
                DrawGranularity::PerRollout => "per-rollout",
                DrawGranularity::PerState => "per-state",
                DrawGranularity::PerExample => "per-example",
            }
            .into(),
        );
        line("passes", self.passes.to_string());
        line("seed", self.seed.to_string());
        line("eta0", self.eta0.to_string());
        line("bits", self.bits.to_string());
        line("train", path(&self.train));
        line("test", path(&self.test));
        line("epsilon", self.epsilon.to_string());
        line("rounds", self.rounds.to_string());
        line("averaged", self.averaged.to_string());
        out
    }

    /// SHA-256 of [`Self::to_kv`].
    pub fn hash(&self) -> [u8; 32] {
        Sha256::digest(self.to_kv().as_bytes()).into()
    }

    pub fn hash_hex(&self) -> String {
        hex(&self.hash())
    }

    pub fn plan(&self) -> RolloutPlan {
        RolloutPlan {
            roll_in: self.roll_in,
            roll_out: self.roll_out,
            beta: self.beta,
            granularity: self.granularity,
            rng_seed: self.seed,
        }
    }

    pub fn reference_seed(&self) -> u64 {
        derive_seed(self.seed, REFERENCE_SALT)
    }
}

fn strip_prefix(e: &Error) -> String {
    match e {
        Error::BadConfig(m) => m.clone(),
        other => other.to_string(),
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Raw instances of one task.
#[derive(Debug, Clone)]
pub enum Dataset {
    Sequence(Vec<Sentence>),
    Multiclass(Vec<MulticlassRow>),
    Parse(Vec<Sentence>),
    Model(ExactModel),
}

impl Dataset {
    pub fn len(&self) -> usize {
        match self {
            Dataset::Sequence(s) | Dataset::Parse(s) => s.len(),
            Dataset::Multiclass(r) => r.len(),
            Dataset::Model(_) => 1,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Keeps the first 80% by instance order; returns the held-out last 20%.
    pub fn split_off_test(&mut self) -> Dataset {
        let n = self.len();
        let at = n - n / 5;
        match self {
            Dataset::Sequence(s) => Dataset::Sequence(s.split_off(at)),
            Dataset::Parse(s) => Dataset::Parse(s.split_off(at)),
            Dataset::Multiclass(r) => Dataset::Multiclass(r.split_off(at)),
            Dataset::Model(m) => Dataset::Model(m.clone()),
        }
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })?))
}

pub fn read_dataset(task: TaskKind, path: &Path) -> Result<Dataset> {
    match task {
        TaskKind::Sequence => Ok(Dataset::Sequence(read_tsv(open(path)?)?)),
        TaskKind::Parse => Ok(Dataset::Parse(read_tsv(open(path)?)?)),
        TaskKind::Multiclass => Ok(Dataset::Multiclass(read_csv(open(path)?)?)),
        TaskKind::Model => Err(Error::BadConfig("model tasks read model_file, not a data file".into())),
    }
}

pub fn read_model(config: &ExperimentConfig) -> Result<ExactModel> {
    let path = config
        .model_file
        .as_ref()
        .ok_or_else(|| Error::BadConfig("task = model needs model_file".into()))?;
    let text = std::fs::read_to_string(path)?;
    let overrides: Vec<(&str, f64)> = config.params.iter().map(|(k, v)| (k.as_str(), *v)).collect();
    ExactModel::parse(&text, &overrides)
}

/// Training and held-out data for a config: the `test` file when given,
/// otherwise the last 20% of `train`.
pub fn load_split(config: &ExperimentConfig) -> Result<(Dataset, Dataset)> {
    if config.task == TaskKind::Model {
        let m = read_model(config)?;
        return Ok((Dataset::Model(m.clone()), Dataset::Model(m)));
    }
    let train_path = config
        .train
        .as_ref()
        .ok_or_else(|| Error::BadConfig("missing 'train' data path".into()))?;
    let mut train = read_dataset(config.task, train_path)?;
    let test = match &config.test {
        Some(p) => read_dataset(config.task, p)?,
        None => train.split_off_test(),
    };
    Ok((train, test))
}

/// What a trained model needs besides its weights to rebuild tasks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub task: TaskKind,
    pub bits: u32,
    pub tags: Option<TagSet>,
    pub labels: Option<usize>,
    pub feature_dim: Option<usize>,
    /// Multiclass costs are divided by this in bandit mode.
    pub cost_scale: Option<f64>,
}

impl Schema {
    pub fn infer(config: &ExperimentConfig, train: &Dataset) -> Result<Self> {
        let mut schema = Schema {
            task: config.task,
            bits: config.bits,
            tags: None,
            labels: None,
            feature_dim: None,
            cost_scale: None,
        };
        match train {
            Dataset::Sequence(s) => {
                let tags = TagSet::from_sentences(s);
                if tags.is_empty() {
                    return Err(Error::Format("no tags in training data".into()));
                }
                schema.tags = Some(tags);
            }
            Dataset::Multiclass(rows) => {
                let first = rows.first().ok_or_else(|| Error::Format("no multiclass rows".into()))?;
                schema.labels = Some(first.costs.len());
                schema.feature_dim = Some(
                    rows.iter()
                        .flat_map(|r| r.features.iter().map(|&(i, _)| i + 1))
                        .max()
                        .unwrap_or(0),
                );
                let max = rows
                    .iter()
                    .flat_map(|r| r.costs.iter().copied())
                    .fold(0.0_f64, f64::max);
                schema.cost_scale = Some(if max > 0.0 { max } else { 1.0 });
            }
            Dataset::Parse(_) | Dataset::Model(_) => {}
        }
        Ok(schema)
    }
}

/// Concrete search tasks for one dataset.
#[derive(Debug, Clone)]
pub enum TaskSet {
    Sequence(Vec<SequenceTask>),
    Multiclass(Vec<LabelTreeTask>),
    Parse(Vec<ParseTask>),
    Model(Vec<ExactModel>),
}

/// Builds tasks. Every instance shares `reference_seed`, so a bad or
/// suboptimal reference is one fixed policy over states rather than a
/// different one per instance. `with_gold = false` hides gold labels from
/// the tasks (used for bandit sessions).
pub fn build_tasks(
    schema: &Schema,
    data: &Dataset,
    quality: ReferenceQuality,
    reference_seed: u64,
    copies: usize,
    with_gold: bool,
) -> Result<TaskSet> {
    match data {
        Dataset::Sequence(sentences) => {
            let tags = schema.tags.as_ref().ok_or_else(|| Error::Format("schema lacks a tag set".into()))?;
            let tasks = sentences
                .iter()
                .map(|s| {
                    let gold = if with_gold { Some(tags.encode(&s.tags)?) } else { None };
                    SequenceTask::new(s.words.clone(), gold, tags.len(), schema.bits, quality, reference_seed)
                })
                .collect::<Result<_>>()?;
            Ok(TaskSet::Sequence(tasks))
        }
        Dataset::Parse(sentences) => {
            let tasks = sentences
                .iter()
                .enumerate()
                .map(|(i, s)| {
                    let gold = if with_gold {
                        Some(s.heads.clone().ok_or_else(|| {
                            Error::Format(format!("sentence {} has no gold heads", i + 1))
                        })?)
                    } else {
                        None
                    };
                    ParseTask::new(s.words.clone(), s.tags.clone(), gold, schema.bits, quality, reference_seed)
                })
                .collect::<Result<_>>()?;
            Ok(TaskSet::Parse(tasks))
        }
        Dataset::Multiclass(rows) => {
            let k = schema.labels.ok_or_else(|| Error::Format("schema lacks a label count".into()))?;
            let d = schema.feature_dim.unwrap_or(0);
            let tree = Arc::new(LabelTree::new(k)?);
            let tasks = rows
                .iter()
                .enumerate()
                .map(|(i, r)| {
                    if r.costs.len() != k {
                        return Err(Error::Format(format!(
                            "row {} has {} costs, model expects {k}",
                            i + 1,
                            r.costs.len()
                        )));
                    }
                    let features = SparseFeatures::from_pairs(d, r.features.clone()).map_err(|_| {
                        Error::Format(format!("row {} has a feature index past the model's {d}", i + 1))
                    })?;
                    LabelTreeTask::new(tree.clone(), features, r.costs.clone(), quality, reference_seed)
                })
                .collect::<Result<_>>()?;
            Ok(TaskSet::Multiclass(tasks))
        }
        Dataset::Model(m) => Ok(TaskSet::Model(vec![m.clone(); copies.max(1)])),
    }
}

impl TaskSet {
    pub fn len(&self) -> usize {
        match self {
            TaskSet::Sequence(t) => t.len(),
            TaskSet::Multiclass(t) => t.len(),
            TaskSet::Parse(t) => t.len(),
            TaskSet::Model(t) => t.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Feature dimension shared by every task; an empty set has dimension 0.
    pub fn dim(&self) -> usize {
        fn first<T: SearchTask>(t: &[T]) -> usize {
            t.first().map_or(0, |t| t.dim())
        }
        match self {
            TaskSet::Sequence(t) => first(t),
            TaskSet::Multiclass(t) => first(t),
            TaskSet::Parse(t) => first(t),
            TaskSet::Model(t) => first(t),
        }
    }

    pub fn metric(&self) -> Metric {
        match self {
            TaskSet::Sequence(_) => Metric::Accuracy,
            TaskSet::Multiclass(_) => Metric::AverageCost,
            TaskSet::Parse(_) => Metric::Uas,
            TaskSet::Model(_) => Metric::ExpectedLoss,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    /// Fraction of tokens tagged correctly.
    Accuracy,
    /// Mean cost of the predicted label.
    AverageCost,
    /// Fraction of tokens given their gold head.
    Uas,
    /// Exact expected end loss.
    ExpectedLoss,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Accuracy => "accuracy",
            Metric::AverageCost => "average cost",
            Metric::Uas => "UAS",
            Metric::ExpectedLoss => "expected loss",
        }
    }

    pub fn higher_is_better(self) -> bool {
        matches!(self, Metric::Accuracy | Metric::Uas)
    }

    /// Whether `a` is strictly better than `b`.
    pub fn better(self, a: f64, b: f64) -> bool {
        if self.higher_is_better() {
            a > b
        } else {
            a < b
        }
    }
}

/// Trains a fresh learner on `tasks` with the config's plan.
pub fn train_tasks(
    config: &ExperimentConfig,
    tasks: &TaskSet,
    plan: &RolloutPlan,
    mixture_seed: u64,
    report: impl FnMut(&InstanceReport),
) -> Result<TrainState> {
    let mut state = TrainState::new(Csoaa::new(tasks.dim(), config.eta0), mixture_seed);
    let passes = if matches!(tasks, TaskSet::Model(_)) { 1 } else { config.passes };
    match tasks {
        TaskSet::Sequence(t) => train(&mut state, t, plan, passes, report)?,
        TaskSet::Multiclass(t) => train(&mut state, t, plan, passes, report)?,
        TaskSet::Parse(t) => train(&mut state, t, plan, passes, report)?,
        TaskSet::Model(t) => train(&mut state, t, plan, passes, report)?,
    }
    Ok(state)
}

/// How predictions are made at evaluation time.
#[derive(Debug, Clone, Copy)]
pub enum Predictor<'a> {
    Fixed(&'a LinearPolicy),
    /// A uniformly drawn stored policy per instance, seeded.
    Averaged(&'a PolicyHistory, u64),
}

fn check_dim(model: usize, task: usize) -> Result<()> {
    if model != task {
        return Err(Error::ModelTaskMismatch { model, task });
    }
    Ok(())
}

/// Scores every task and returns `sum(numerator) / sum(denominator)`.
fn score_all<T: SearchTask>(
    tasks: &[T],
    predictor: Predictor<'_>,
    mut score: impl FnMut(&T, &LinearPolicy, &T::State) -> Result<(f64, f64)>,
) -> Result<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    let mut rng = stream(0, Stream::Probe);
    let mut pick = match predictor {
        Predictor::Fixed(_) => None,
        Predictor::Averaged(h, seed) => {
            if h.len() < 2 {
                return Err(Error::NoPolicies);
            }
            Some((h, stream(seed, Stream::Averaging)))
        }
    };
    use rand::Rng as _;
    for task in tasks {
        let drawn;
        let policy = match (&mut pick, predictor) {
            (None, Predictor::Fixed(p)) => p,
            (Some((h, r)), _) => {
                drawn = h.policy(r.random_range(1..h.len()))?;
                &drawn
            }
            _ => unreachable!("predictor and sampler agree"),
        };
        check_dim(policy.dim(), task.dim())?;
        let traj = trajectory(task, policy, &mut rng)?;
        let (n, d) = score(task, policy, &traj.end)?;
        num += n;
        den += d;
    }
    if den == 0.0 {
        return Err(Error::Format("nothing to evaluate".into()));
    }
    Ok(num / den)
}

/// Evaluates a predictor on `tasks` with the task's metric.
pub fn evaluate(tasks: &TaskSet, predictor: Predictor<'_>) -> Result<f64> {
    match tasks {
        TaskSet::Sequence(t) => score_all(t, predictor, |task, _, end| {
            let wrong = task.hamming(end)?;
            Ok(((end.len() - wrong) as f64, end.len() as f64))
        }),
        TaskSet::Parse(t) => score_all(t, predictor, |task, _, end| {
            let gold = task.gold().ok_or(Error::MissingGold)?;
            let heads = task.predicted_heads(end);
            let right = gold.iter().zip(&heads).filter(|(g, h)| g == h).count();
            Ok((right as f64, gold.len() as f64))
        }),
        TaskSet::Multiclass(t) => score_all(t, predictor, |task, _, end| Ok((task.costs()[task.label_of(end)], 1.0))),
        TaskSet::Model(t) => score_all(t, predictor, |model, policy, _| Ok((exact_j(model, policy), 1.0))),
    }
}

/// Evaluates the final policy, or the averaged predictor when `config.averaged`.
pub fn evaluate_state(config: &ExperimentConfig, state: &TrainState, tasks: &TaskSet, cell_seed: u64) -> Result<f64> {
    if config.averaged {
        let avg = averaged_policy(state, false)?;
        evaluate(tasks, Predictor::Averaged(avg.history(), cell_seed))
    } else {
        evaluate(tasks, Predictor::Fixed(&state.current_policy()))
    }
}

/// Sidecar written next to a model file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub schema: Schema,
    pub dim: usize,
    pub instances_seen: u64,
}

pub const GRID_ROLL_INS: [RollIn; 2] = [RollIn::Reference, RollIn::Learned];
pub const GRID_ROLL_OUTS: [RollOut; 3] = [RollOut::Reference, RollOut::Mixture, RollOut::Learned];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub roll_in: RollIn,
    pub roll_out: RollOut,
    pub seed: u64,
    pub value: f64,
}

/// Held-out metric for every roll-in × roll-out pair; rows are roll-in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridReport {
    pub task: TaskKind,
    pub reference: ReferenceQuality,
    pub metric: Metric,
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub cells: Vec<GridCell>,
}

impl GridReport {
    pub fn value(&self, roll_in: RollIn, roll_out: RollOut) -> f64 {
        self.cells
            .iter()
            .find(|c| c.roll_in == roll_in && c.roll_out == roll_out)
            .map_or(f64::NAN, |c| c.value)
    }

    pub fn best(&self) -> &GridCell {
        let mut best = &self.cells[0];
        for c in &self.cells[1..] {
            if self.metric.better(c.value, best.value) {
                best = c;
            }
        }
        best
    }

    /// Aligned table: `*` marks the best cell, brackets mark learned roll-in
    /// with mixture roll-out.
    pub fn render(&self) -> String {
        let best = self.best();
        let direction = if self.metric.higher_is_better() { "higher" } else { "lower" };
        let mut out = format!(
            "task={} reference={} metric={} ({direction} is better) config={}\n",
            self.task,
            quality_name(self.reference),
            self.metric.name(),
            &self.config_hash[..12.min(self.config_hash.len())]
        );
        let _ = writeln!(out, "{:<18}{:>14}{:>14}{:>14}", "roll-in \\ out", "reference", "mixture", "learned");
        for ri in GRID_ROLL_INS {
            let _ = write!(out, "{:<18}", roll_in_name(ri));
            for ro in GRID_ROLL_OUTS {
                let v = self.value(ri, ro);
                let mut cell = format!("{v:.4}");
                if ri == best.roll_in && ro == best.roll_out {
                    cell.push('*');
                }
                if ri == RollIn::Learned && ro == RollOut::Mixture {
                    cell = format!("[{cell}]");
                }
                let _ = write!(out, "{cell:>14}");
            }
            out.push('\n');
        }
        out
    }
}

/// Trains and evaluates all six cells. Cells share the data order and the
/// reference; cell `i` draws mixture roll-outs from `derive_seed(seed, i)`.
pub fn run_grid(config: &ExperimentConfig, train: &Dataset, test: &Dataset) -> Result<GridReport> {
    let schema = Schema::infer(config, train)?;
    let train_tasks_set = build_tasks(&schema, train, config.reference, config.reference_seed(), config.rounds, true)?;
    let test_tasks = build_tasks(&schema, test, config.reference, config.reference_seed(), 1, true)?;
    let mut specs = Vec::new();
    for ri in GRID_ROLL_INS {
        for ro in GRID_ROLL_OUTS {
            specs.push((ri, ro, derive_seed(config.seed, specs.len() as u64)));
        }
    }
    let results: Vec<Result<f64>> = std::thread::scope(|scope| {
        let handles: Vec<_> = specs
            .iter()
            .map(|&(ri, ro, seed)| {
                let train_tasks_set = &train_tasks_set;
                let test_tasks = &test_tasks;
                scope.spawn(move || -> Result<f64> {
                    let plan = RolloutPlan {
                        roll_in: ri,
                        roll_out: ro,
                        ..config.plan()
                    };
                    let state = train_tasks(config, train_tasks_set, &plan, seed, |_| {})?;
                    evaluate_state(config, &state, test_tasks, seed)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("grid cell panicked")).collect()
    });
    let mut cells = Vec::with_capacity(6);
    for ((ri, ro, seed), r) in specs.into_iter().zip(results) {
        cells.push(GridCell {
            roll_in: ri,
            roll_out: ro,
            seed,
            value: r?,
        });
    }
    Ok(GridReport {
        task: config.task,
        reference: config.reference,
        metric: test_tasks.metric(),
        config_hash: config.hash_hex(),
        config: config.clone(),
        cells,
    })
}

/// Trailing-window mean of exploitation losses at a round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BanditPoint {
    pub round: u64,
    pub exploit_loss: f64,
    pub n_explore: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BanditSummary {
    pub rounds: u64,
    pub epsilon: f64,
    pub n_explore: usize,
    pub trajectory: Vec<BanditPoint>,
    pub config_hash: String,
}

pub const BANDIT_WINDOW: usize = 100;

/// Plays `config.rounds` bandit rounds, cycling through the data in order.
/// Policies and the reference see tasks without gold labels; the loss
/// oracle scores end states against the gold copy, scaled into `[0, 1]`.
pub fn run_bandit(
    config: &ExperimentConfig,
    data: &Dataset,
    mut on_round: impl FnMut(&BanditLogEntry),
) -> Result<(BanditSummary, BanditState)> {
    let schema = Schema::infer(config, data)?;
    let seed = config.reference_seed();
    let data = match data {
        Dataset::Model(m) => Dataset::Model(m.normalized()),
        other => other.clone(),
    };
    let blind = build_tasks(&schema, &data, config.reference, seed, 1, false)?;
    let gold = build_tasks(&schema, &data, config.reference, seed, 1, true)?;
    if blind.is_empty() {
        return Err(Error::Format("no bandit instances".into()));
    }
    let mut state = BanditState::new(Csoaa::new(blind.dim(), config.eta0), config.epsilon, config.beta, config.seed);
    let mut window = std::collections::VecDeque::with_capacity(BANDIT_WINDOW);
    let mut points = Vec::new();
    let scale = schema.cost_scale.unwrap_or(1.0);
    for round in 0..config.rounds as u64 {
        let i = round as usize % blind.len();
        let entry = match (&blind, &gold) {
            (TaskSet::Sequence(b), TaskSet::Sequence(g)) => {
                let g = &g[i];
                bandit_step(&mut state, &b[i], |end| g.normalized_loss(end))?.log_entry(round)
            }
            (TaskSet::Parse(b), TaskSet::Parse(g)) => {
                let g = &g[i];
                bandit_step(&mut state, &b[i], |end| {
                    g.attachment_loss(&g.predicted_heads(end)).unwrap_or(f64::NAN)
                })?
                .log_entry(round)
            }
            (TaskSet::Multiclass(b), TaskSet::Multiclass(g)) => {
                let g = &g[i];
                bandit_step(&mut state, &b[i], |end| g.costs()[g.label_of(end)] / scale)?.log_entry(round)
            }
            (TaskSet::Model(b), TaskSet::Model(_)) => {
                let m = &b[i];
                bandit_step(&mut state, m, |end| m.terminal_loss_of(*end))?.log_entry(round)
            }
            _ => unreachable!("both task sets come from the same dataset"),
        };
        if entry.mode == Mode::Exploited {
            if window.len() == BANDIT_WINDOW {
                window.pop_front();
            }
            window.push_back(entry.loss);
        }
        let r = round + 1;
        if r.is_power_of_two() || r % 1000 == 0 || r == config.rounds as u64 {
            points.push(BanditPoint {
                round: r,
                exploit_loss: if window.is_empty() {
                    f64::NAN
                } else {
                    window.iter().sum::<f64>() / window.len() as f64
                },
                n_explore: state.n_explore(),
            });
        }
        on_round(&entry);
    }
    Ok((
        BanditSummary {
            rounds: config.rounds as u64,
            epsilon: config.epsilon,
            n_explore: state.n_explore(),
            trajectory: points,
            config_hash: config.hash_hex(),
        },
        state,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tasks::{synth_multiclass, synth_parse, synth_sequences};

    #[test]
    fn kv_round_trip_and_hash() {
        let c = ExperimentConfig::from_kv("# demo\ntask = parse\nreference = bad\nbeta=0.25\nparam.eps = 0.1\n").unwrap();
        assert_eq!(c.task, TaskKind::Parse);
        assert_eq!(c.reference, ReferenceQuality::Bad);
        assert_eq!(c.beta, 0.25);
        assert_eq!(c.passes, 5);
        let again = ExperimentConfig::from_kv(&c.to_kv()).unwrap();
        assert_eq!(again, c);
        assert_eq!(again.hash(), c.hash());
        let mut d = c.clone();
        d.set("seed", "2").unwrap();
        assert_ne!(d.hash(), c.hash());
    }

    #[test]
    fn bad_configs_are_rejected() {
        for text in ["nonsense", "colour = red", "beta = 2", "task = model", "passes = -1", "roll_in = sideways"] {
            assert!(matches!(ExperimentConfig::from_kv(text), Err(Error::BadConfig(_))), "{text}");
        }
    }

    #[test]
    fn split_keeps_last_fifth() {
        let mut d = Dataset::Sequence(synth_sequences(10, 1));
        let all = match &d {
            Dataset::Sequence(s) => s.clone(),
            _ => unreachable!(),
        };
        let test = d.split_off_test();
        assert_eq!(d.len(), 8);
        match test {
            Dataset::Sequence(t) => assert_eq!(t, all[8..]),
            _ => unreachable!(),
        }
    }

    fn small(task: TaskKind) -> (ExperimentConfig, Dataset) {
        let config = ExperimentConfig {
            task,
            bits: 10,
            passes: 2,
            ..Default::default()
        };
        let data = match task {
            TaskKind::Sequence => Dataset::Sequence(synth_sequences(30, 2)),
            TaskKind::Parse => Dataset::Parse(synth_parse(30, 2)),
            TaskKind::Multiclass => Dataset::Multiclass(synth_multiclass(60, 5, 4, 2)),
            TaskKind::Model => Dataset::Model(ExactModel::shared_feature(0.1)),
        };
        (config, data)
    }

    #[test]
    fn zero_passes_keep_zero_weights() {
        let (mut config, data) = small(TaskKind::Sequence);
        config.passes = 0;
        let schema = Schema::infer(&config, &data).unwrap();
        let tasks = build_tasks(&schema, &data, config.reference, 1, 1, true).unwrap();
        let st = train_tasks(&config, &tasks, &config.plan(), 1, |_| {}).unwrap();
        assert!(st.learner.weights().iter().all(|&w| w == 0.0));
    }

    #[test]
    fn gold_predictions_score_perfectly() {
        let (config, data) = small(TaskKind::Parse);
        let schema = Schema::infer(&config, &data).unwrap();
        if let TaskSet::Parse(tasks) = build_tasks(&schema, &data, ReferenceQuality::Optimal, 1, 1, true).unwrap() {
            for t in &tasks {
                let end = trajectory(t, &crate::search::Reference, &mut stream(0, Stream::Probe)).unwrap().end;
                assert_eq!(t.attachment_loss(&t.predicted_heads(&end)).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn eval_rejects_mismatched_dimension() {
        let (config, data) = small(TaskKind::Multiclass);
        let schema = Schema::infer(&config, &data).unwrap();
        let tasks = build_tasks(&schema, &data, config.reference, 1, 1, true).unwrap();
        let wrong = LinearPolicy::zeros(tasks.dim() + 1);
        assert!(matches!(
            evaluate(&tasks, Predictor::Fixed(&wrong)),
            Err(Error::ModelTaskMismatch { .. })
        ));
    }

    #[test]
    fn grid_is_reproducible() {
        let (config, mut data) = small(TaskKind::Multiclass);
        let test = data.split_off_test();
        let a = run_grid(&config, &data, &test).unwrap();
        let b = run_grid(&config, &data, &test).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.render(), b.render());
        assert_eq!(a.cells.len(), 6);
        assert!(a.render().contains('['));
    }

    #[test]
    fn bandit_with_zero_epsilon_never_updates() {
        let (mut config, data) = small(TaskKind::Multiclass);
        config.epsilon = 0.0;
        config.rounds = 300;
        let (summary, state) = run_bandit(&config, &data, |_| {}).unwrap();
        assert_eq!(summary.n_explore, 0);
        assert!(state.learner.weights().iter().all(|&w| w == 0.0));
    }

    #[test]
    fn bandit_runs_on_every_task() {
        for task in [TaskKind::Sequence, TaskKind::Parse, TaskKind::Multiclass, TaskKind::Model] {
            let (mut config, data) = small(task);
            config.reference = ReferenceQuality::Bad;
            config.rounds = 200;
            config.epsilon = 0.5;
            let mut losses = Vec::new();
            let (summary, _) = run_bandit(&config, &data, |e| losses.push(e.loss)).unwrap();
            assert!(summary.n_explore > 50, "{task}");
            assert!(losses.iter().all(|l| (0.0..=1.0).contains(l)), "{task}");
        }
    }
}
