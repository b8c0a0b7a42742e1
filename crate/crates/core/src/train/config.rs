use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{OptimizerKind, Reduction};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BankRefresh {
    /// Push each batch's real minorities right after its forward pass.
    Batch,
    /// Push all minorities seen in an epoch at the end of the epoch.
    Epoch,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Weight of the signature reconstruction loss.
    pub gamma: f64,
    /// Weight of the signature term in the joint distance.
    pub omega: f64,
    pub bank_capacity: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub d: usize,
    pub d_cat: usize,
    pub proj_layers: usize,
    pub num_layers: usize,
    pub beta_alpha: f64,
    pub beta_beta: f64,
    /// Per-hop training fanout; its length must equal `num_layers`.
    pub fanouts: Vec<usize>,
    /// Evaluation fanout; `None` takes full neighbourhoods.
    pub eval_fanout: Option<usize>,
    pub epochs: usize,
    pub seed: u64,
    pub disable_gate: bool,
    pub disable_syn: bool,
    /// Synthetic samples per batch at most; `None` means `batch_size`.
    pub max_syn_per_batch: Option<usize>,
    pub per_relation_qkv: bool,
    pub optimizer: OptimizerKind,
    pub reduction: Reduction,
    pub bank_refresh: BankRefresh,
    pub temporal_sampling: bool,
    /// Evaluate the validation split every this many epochs; 0 disables.
    pub validate_every: usize,
    /// Keep the parameters of the epoch with the best validation G-Mean
    /// (B-Acc breaks ties) instead of the last epoch.
    pub select_best_val: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            gamma: 0.5,
            omega: 50.0,
            bank_capacity: 1024,
            batch_size: 512,
            lr: 1e-3,
            d: 128,
            d_cat: 16,
            proj_layers: 1,
            num_layers: 2,
            beta_alpha: 2.0,
            beta_beta: 2.0,
            fanouts: vec![16, 16],
            eval_fanout: None,
            epochs: 30,
            seed: 0,
            disable_gate: false,
            disable_syn: false,
            max_syn_per_batch: None,
            per_relation_qkv: false,
            optimizer: OptimizerKind::Adam,
            reduction: Reduction::Mean,
            bank_refresh: BankRefresh::Batch,
            temporal_sampling: false,
            validate_every: 1,
            select_best_val: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return bad("gamma must be finite and >= 0");
        }
        if !(self.omega >= 0.0 && self.omega.is_finite()) {
            return bad("omega must be finite and >= 0");
        }
        if self.bank_capacity < 2 {
            return bad("bank_capacity must be >= 2");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be > 0");
        }
        if self.d == 0 || self.d_cat == 0 {
            return bad("d and d_cat must be >= 1");
        }
        if self.num_layers == 0 {
            return bad("num_layers must be >= 1");
        }
        if self.fanouts.len() != self.num_layers {
            return bad("fanouts must have one entry per layer");
        }
        if self.fanouts.contains(&0) {
            return bad("fanouts must be positive");
        }
        if !(self.beta_alpha > 0.0 && self.beta_beta > 0.0) {
            return bad("beta parameters must be positive");
        }
        Ok(())
    }

    pub fn max_syn(&self) -> usize {
        self.max_syn_per_batch.unwrap_or(self.batch_size)
    }
}
