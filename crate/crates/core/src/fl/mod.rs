//! Desk-scale federated learning whose aggregation runs through the
//! over-the-air channel.

mod adam;
mod dataset;
mod experiment;
mod federated;
mod model;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use adam::Adam;
pub use dataset::{load_mnist_idx, partition_iid, synth_dataset, Dataset};
pub use experiment::{load_datasets, train_curves, Curve};
pub use federated::{
    fed_round, local_train, run_federated, FederatedSetup, RoundChannel, RoundRecord, RoundStats, TrainingTrace,
};
pub use model::{evaluate, Activation, Mlp, ModelParams};

/// How `local_steps_per_round` is counted.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepUnit {
    /// Full passes over the client's data.
    #[default]
    Epochs,
    /// Individual mini-batch updates.
    Steps,
}

/// Where training data comes from. Without MNIST paths a synthetic
/// Gaussian-cluster dataset is generated instead.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    pub mnist_train_images: Option<PathBuf>,
    pub mnist_train_labels: Option<PathBuf>,
    pub mnist_test_images: Option<PathBuf>,
    pub mnist_test_labels: Option<PathBuf>,
    /// Training subset size; 0 keeps everything.
    pub train_samples: usize,
    pub test_samples: usize,
    pub synthetic_features: usize,
    pub synthetic_classes: usize,
    /// Standard deviation of the class means relative to unit within-class noise.
    pub synthetic_separation: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            mnist_train_images: None,
            mnist_train_labels: None,
            mnist_test_images: None,
            mnist_test_labels: None,
            train_samples: 6000,
            test_samples: 1000,
            synthetic_features: 10,
            synthetic_classes: 10,
            synthetic_separation: 1.0,
        }
    }
}

impl DatasetConfig {
    pub(crate) fn resolve_paths(&mut self, base: &Path) {
        for p in [
            &mut self.mnist_train_images,
            &mut self.mnist_train_labels,
            &mut self.mnist_test_images,
            &mut self.mnist_test_labels,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    /// True when all four MNIST paths are configured.
    pub fn has_mnist(&self) -> bool {
        self.mnist_train_images.is_some()
            && self.mnist_train_labels.is_some()
            && self.mnist_test_images.is_some()
            && self.mnist_test_labels.is_some()
    }
}

/// Model shape and optimizer settings for local training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingConfig {
    pub hidden_layers: Vec<usize>,
    pub activation: Activation,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub batch_size: usize,
    pub local_steps_per_round: usize,
    pub local_step_unit: StepUnit,
    pub rounds: usize,
    /// Per-client weights `w_i`; `None` uses the local dataset sizes.
    pub client_weights: Option<Vec<f64>>,
    pub dataset: DatasetConfig,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            hidden_layers: vec![32],
            activation: Activation::Relu,
            learning_rate: 1.0e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1.0e-7,
            batch_size: 32,
            local_steps_per_round: 20,
            local_step_unit: StepUnit::Epochs,
            rounds: 20,
            client_weights: None,
            dataset: DatasetConfig::default(),
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::invalid("training.learning_rate", "must be finite and > 0"));
        }
        for (field, beta) in [
            ("training.adam_beta1", self.adam_beta1),
            ("training.adam_beta2", self.adam_beta2),
        ] {
            if !(0.0..1.0).contains(&beta) {
                return Err(Error::invalid(field, format!("must lie in [0, 1), got {beta}")));
            }
        }
        if !(self.adam_epsilon.is_finite() && self.adam_epsilon > 0.0) {
            return Err(Error::invalid("training.adam_epsilon", "must be finite and > 0"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("training.batch_size", "must be >= 1"));
        }
        if self.local_steps_per_round == 0 {
            return Err(Error::invalid("training.local_steps_per_round", "must be >= 1"));
        }
        if self.hidden_layers.contains(&0) {
            return Err(Error::invalid("training.hidden_layers", "layer widths must be >= 1"));
        }
        if let Some(w) = &self.client_weights {
            if w.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
                return Err(Error::invalid(
                    "training.client_weights",
                    "weights must be finite and > 0",
                ));
            }
        }
        let ds = &self.dataset;
        if ds.synthetic_features == 0 || ds.synthetic_classes < 2 {
            return Err(Error::invalid(
                "training.dataset",
                "synthetic data needs >= 1 feature and >= 2 classes",
            ));
        }
        if !(ds.synthetic_separation.is_finite() && ds.synthetic_separation > 0.0) {
            return Err(Error::invalid(
                "training.dataset.synthetic_separation",
                "must be finite and > 0",
            ));
        }
        if ds.test_samples == 0 {
            return Err(Error::invalid("training.dataset.test_samples", "must be >= 1"));
        }
        Ok(())
    }
}
