//! Online cost-sensitive one-against-all learning.
//!
//! A single linear regressor predicts the cost of each action from that
//! action's feature vector; the predicted label is the action with the
//! smallest predicted cost. Updates are online gradient steps on the squared
//! loss of every (features, cost) pair in the example, taken in action order.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::SparseFeatures;
use crate::search::{argmin, LinearPolicy, TieBreak};

/// One decision point: a feature vector and a cost per live action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostSensitiveExample {
    pub per_action_features: Vec<SparseFeatures>,
    pub costs: Vec<f64>,
    /// Set for importance-weighted bandit examples, whose minimum cost need not be zero.
    pub raw: bool,
}

impl CostSensitiveExample {
    pub fn new(per_action_features: Vec<SparseFeatures>, costs: Vec<f64>) -> Result<Self> {
        if per_action_features.len() != costs.len() {
            return Err(Error::ArityMismatch {
                features: per_action_features.len(),
                costs: costs.len(),
            });
        }
        if per_action_features.is_empty() {
            return Err(Error::EmptyActionSet);
        }
        if let Some(&c) = costs.iter().find(|c| !c.is_finite() || **c < 0.0) {
            return Err(Error::NonFiniteCost(c));
        }
        Ok(Self {
            per_action_features,
            costs,
            raw: false,
        })
    }

    pub fn raw(mut self) -> Self {
        self.raw = true;
        self
    }

    pub fn len(&self) -> usize {
        self.costs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.costs.is_empty()
    }

    fn check_dim(&self, dim: usize) -> Result<()> {
        for f in &self.per_action_features {
            if let Some(&(i, _)) = f.pairs().last() {
                if i >= dim {
                    return Err(Error::DimensionMismatch { index: i, dim });
                }
            }
        }
        Ok(())
    }

    /// Cost of the label a fixed linear policy predicts on this example.
    pub fn cost_of(&self, policy: &LinearPolicy) -> f64 {
        let a = argmin(
            self.per_action_features.iter().map(|f| f.dot(&policy.weights)),
            policy.tie_break,
        )
        .unwrap_or(0);
        self.costs[a]
    }
}

/// Online least-squares regressor trained by gradient descent with step
/// `eta0 / sqrt(m)` on the m-th example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OgdRegressor {
    pub weights: Vec<f64>,
    pub eta0: f64,
    /// Number of examples seen; the step for the next example uses `updates + 1`.
    pub updates: u64,
}

pub const DEFAULT_ETA0: f64 = 0.5;

impl OgdRegressor {
    pub fn new(dim: usize, eta0: f64) -> Self {
        Self {
            weights: vec![0.0; dim],
            eta0,
            updates: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn predict(&self, x: &SparseFeatures) -> f64 {
        x.dot(&self.weights)
    }

    pub fn rate(&self, m: u64) -> f64 {
        self.eta0 / (m.max(1) as f64).sqrt()
    }

    /// `w <- w - eta * 2 (w.x - c) x`
    pub fn step(&mut self, x: &SparseFeatures, cost: f64, eta: f64) {
        let residual = self.predict(x) - cost;
        let scale = eta * 2.0 * residual;
        for &(i, v) in x.pairs() {
            self.weights[i] -= scale * v;
        }
    }
}

/// Running account of the learner's own cost on the examples it was updated with.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RegretLedger {
    pub cum_alg_cost: f64,
    pub examples: u64,
    recorded: Option<Vec<CostSensitiveExample>>,
}

impl RegretLedger {
    /// A ledger that also keeps every example so comparators can be replayed.
    pub fn recording() -> Self {
        Self {
            recorded: Some(Vec::new()),
            ..Self::default()
        }
    }

    fn record(&mut self, example: &CostSensitiveExample, predicted: usize) {
        self.cum_alg_cost += example.costs[predicted];
        self.examples += 1;
        if let Some(r) = &mut self.recorded {
            r.push(example.clone());
        }
    }

    pub fn recorded(&self) -> Option<&[CostSensitiveExample]> {
        self.recorded.as_deref()
    }

    /// Cumulative algorithm cost minus the best comparator's cumulative cost
    /// on the recorded sequence. An empty ledger has zero regret; a ledger
    /// that did not record examples is compared against the empty sequence.
    pub fn cs_regret(&self, comparators: &[LinearPolicy]) -> f64 {
        if self.examples == 0 {
            return 0.0;
        }
        let examples = self.recorded.as_deref().unwrap_or(&[]);
        let best = comparators
            .iter()
            .map(|p| examples.iter().map(|e| e.cost_of(p)).sum::<f64>())
            .fold(f64::INFINITY, f64::min);
        if best.is_finite() {
            self.cum_alg_cost - best
        } else {
            self.cum_alg_cost
        }
    }
}

/// Cost-sensitive one-against-all over a shared linear regressor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Csoaa {
    pub regressor: OgdRegressor,
    pub tie_break: TieBreak,
    pub ledger: RegretLedger,
}

impl Csoaa {
    pub fn new(dim: usize, eta0: f64) -> Self {
        Self {
            regressor: OgdRegressor::new(dim, eta0),
            tie_break: TieBreak::LowestIndex,
            ledger: RegretLedger::default(),
        }
    }

    pub fn recording(mut self) -> Self {
        self.ledger = RegretLedger::recording();
        self
    }

    pub fn dim(&self) -> usize {
        self.regressor.dim()
    }

    pub fn weights(&self) -> &[f64] {
        &self.regressor.weights
    }

    pub fn policy(&self) -> LinearPolicy {
        LinearPolicy {
            weights: self.regressor.weights.clone(),
            tie_break: self.tie_break,
        }
    }

    pub fn predict(&self, example: &CostSensitiveExample) -> Result<usize> {
        example.check_dim(self.dim())?;
        self.predict_features(&example.per_action_features)
    }

    pub fn predict_features(&self, per_action: &[SparseFeatures]) -> Result<usize> {
        argmin(
            per_action.iter().map(|f| self.regressor.predict(f)),
            self.tie_break,
        )
        .ok_or(Error::EmptyActionSet)
    }

    pub fn update(&mut self, example: &CostSensitiveExample) -> Result<()> {
        example.check_dim(self.dim())?;
        if let Some(&c) = example.costs.iter().find(|c| !c.is_finite()) {
            return Err(Error::NonFiniteCost(c));
        }
        let predicted = self.predict_features(&example.per_action_features)?;
        self.ledger.record(example, predicted);
        self.regressor.updates += 1;
        let eta = self.regressor.rate(self.regressor.updates);
        for (x, &c) in example.per_action_features.iter().zip(&example.costs) {
            self.regressor.step(x, c, eta);
        }
        Ok(())
    }

    pub fn save<W: Write>(&self, out: W, config_hash: [u8; 32]) -> Result<()> {
        ModelFile {
            dim: self.dim(),
            eta0: self.regressor.eta0,
            updates: self.regressor.updates,
            config_hash,
            weights: self.regressor.weights.clone(),
        }
        .write(out)
    }

    pub fn from_model(model: ModelFile) -> Self {
        Self {
            regressor: OgdRegressor {
                weights: model.weights,
                eta0: model.eta0,
                updates: model.updates,
            },
            tie_break: TieBreak::LowestIndex,
            ledger: RegretLedger::default(),
        }
    }
}

pub const MODEL_MAGIC: &[u8; 8] = b"LOLSCSOA";
pub const MODEL_VERSION: u32 = 1;

/// On-disk learner: fixed header then `dim` little-endian f64 weights.
///
/// ```text
/// magic        8 bytes  "LOLSCSOA"
/// version      u32 LE
/// dim          u64 LE
/// eta0         f64 LE
/// updates      u64 LE
/// config hash  32 bytes (SHA-256 of the resolved config, zeros if none)
/// weights      dim x f64 LE
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub dim: usize,
    pub eta0: f64,
    pub updates: u64,
    pub config_hash: [u8; 32],
    pub weights: Vec<f64>,
}

impl ModelFile {
    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(MODEL_MAGIC)?;
        out.write_all(&MODEL_VERSION.to_le_bytes())?;
        out.write_all(&(self.dim as u64).to_le_bytes())?;
        out.write_all(&self.eta0.to_le_bytes())?;
        out.write_all(&self.updates.to_le_bytes())?;
        out.write_all(&self.config_hash)?;
        let mut buf = Vec::with_capacity(self.weights.len() * 8);
        for w in &self.weights {
            buf.extend_from_slice(&w.to_le_bytes());
        }
        out.write_all(&buf)?;
        Ok(())
    }

    pub fn read<R: Read>(mut input: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic)?;
        if &magic != MODEL_MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let mut u32b = [0u8; 4];
        let mut u64b = [0u8; 8];
        input.read_exact(&mut u32b)?;
        let version = u32::from_le_bytes(u32b);
        if version != MODEL_VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        input.read_exact(&mut u64b)?;
        let dim = usize::try_from(u64::from_le_bytes(u64b))
            .map_err(|_| Error::Format("dimension overflows usize".into()))?;
        input.read_exact(&mut u64b)?;
        let eta0 = f64::from_le_bytes(u64b);
        input.read_exact(&mut u64b)?;
        let updates = u64::from_le_bytes(u64b);
        let mut config_hash = [0u8; 32];
        input.read_exact(&mut config_hash)?;
        let mut raw = Vec::new();
        input.read_to_end(&mut raw)?;
        if raw.len() != dim * 8 {
            return Err(Error::Format(format!(
                "expected {} weight bytes, found {}",
                dim * 8,
                raw.len()
            )));
        }
        let weights = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        Ok(Self {
            dim,
            eta0,
            updates,
            config_hash,
            weights,
        })
    }
}
