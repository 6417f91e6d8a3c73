//! Run configuration shared by the CLI flags and the checkpoint header.

use emmkgr_core::graph::Variant;
use emmkgr_core::trainer::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::{AppError, Result};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RunConfig {
    pub dim: usize,
    pub layers: usize,
    pub knn: usize,
    pub lambda_kg: f64,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub bpr_batch: usize,
    pub kg_batch: usize,
    pub epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub variant: String,
    pub baseline: bool,
    pub separate_item_tables: bool,
    pub zero_modalities: bool,
    pub eval_k: usize,
    #[serde(default)]
    pub best_epoch: Option<usize>,
    #[serde(default)]
    pub best_val_recall: Option<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dim: 64,
            layers: 2,
            knn: 10,
            lambda_kg: 1.0,
            learning_rate: 1e-3,
            weight_decay: 1e-4,
            bpr_batch: 1024,
            kg_batch: 1024,
            epochs: 200,
            patience: 10,
            seed: 42,
            variant: "original".to_string(),
            baseline: false,
            separate_item_tables: false,
            zero_modalities: false,
            eval_k: 20,
            best_epoch: None,
            best_val_recall: None,
        }
    }
}

impl RunConfig {
    pub fn variant(&self) -> Result<Variant> {
        Variant::parse(&self.variant)
            .ok_or_else(|| AppError::input(format!("unknown variant '{}'", self.variant)))
    }

    pub fn to_train_config(&self) -> Result<TrainConfig> {
        Ok(TrainConfig {
            dim: self.dim,
            layers: self.layers,
            lambda_kg: self.lambda_kg,
            learning_rate: self.learning_rate,
            weight_decay: self.weight_decay,
            bpr_batch: self.bpr_batch,
            kg_batch: self.kg_batch,
            epochs: self.epochs,
            patience: self.patience,
            seed: self.seed,
            variant: self.variant()?,
            baseline: self.baseline,
            separate_item_tables: self.separate_item_tables,
            eval_k: self.eval_k,
        })
    }
}
