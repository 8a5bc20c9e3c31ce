use log::{info, warn};
use rand::seq::SliceRandom;

use super::{load_mnist_idx, partition_iid, run_federated, synth_dataset, Dataset, FederatedSetup, Mlp};
use super::{RoundRecord, TrainingConfig, TrainingTrace};
use crate::error::Result;
use crate::privacy::PowerPolicy;
use crate::rng::Seed;
use crate::sysconfig::Scenario;

/// Train/test split: MNIST when all four paths are configured, otherwise the
/// synthetic cluster dataset.
pub fn load_datasets(config: &TrainingConfig, seed: Seed) -> Result<(Dataset, Dataset)> {
    let ds = &config.dataset;
    match (
        &ds.mnist_train_images,
        &ds.mnist_train_labels,
        &ds.mnist_test_images,
        &ds.mnist_test_labels,
    ) {
        (Some(train_images), Some(train_labels), Some(test_images), Some(test_labels)) => {
            let train = load_mnist_idx(train_images, train_labels)?;
            let test = load_mnist_idx(test_images, test_labels)?;
            let mut order: Vec<usize> = (0..train.len()).collect();
            order.shuffle(&mut seed.rng());
            if ds.train_samples > 0 {
                order.truncate(ds.train_samples);
            }
            let test_n = if ds.test_samples > 0 {
                ds.test_samples
            } else {
                test.len()
            };
            Ok((train.subset(&order)?, test.head(test_n)))
        }
        _ => {
            warn!("no MNIST files configured; using the synthetic dataset");
            let train_n = if ds.train_samples > 0 { ds.train_samples } else { 6000 };
            let all = synth_dataset(
                &mut seed.rng(),
                train_n + ds.test_samples,
                ds.synthetic_features,
                ds.synthetic_classes,
                ds.synthetic_separation,
            )?;
            all.split_at(train_n)
        }
    }
}

/// One training run of a `(I, policy)` pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub num_clients: usize,
    pub policy: PowerPolicy,
    pub trace: TrainingTrace,
}

/// Trains every `(I, policy)` pair of the scenario's experiment grid.
///
/// Runs with the same `I` share the data partition, the initialization and
/// the per-round channel and client seeds.
pub fn train_curves(scenario: &Scenario, mut on_round: impl FnMut(&RoundRecord)) -> Result<Vec<Curve>> {
    let exp = &scenario.experiment;
    let cfg = &scenario.training;
    let master = Seed(exp.master_seed);
    let (train, test) = load_datasets(cfg, master.child(0))?;
    let model = Mlp::new(
        train.num_features(),
        &cfg.hidden_layers,
        train.num_classes(),
        cfg.activation,
    );
    let mut curves = Vec::with_capacity(exp.num_clients_grid.len() * exp.policies.len());
    for &n in &exp.num_clients_grid {
        let clients = partition_iid(&train, n, &mut master.derive(&[1, n as u64]).rng())?;
        let params = scenario.system.with_num_clients(n);
        for &policy in &exp.policies {
            let setup = FederatedSetup::new(
                model.clone(),
                clients.clone(),
                params.clone(),
                scenario.privacy,
                policy,
                cfg.clone(),
            )?;
            let trace = run_federated(&setup, &test, cfg.rounds, master.derive(&[2, n as u64]), |r, _| {
                on_round(r)
            })?;
            info!(
                "I={n} {policy}: accuracy {:.4}, achieved epsilon {:.4e} over {} releases",
                trace.final_accuracy, trace.epsilon_achieved, trace.releases
            );
            curves.push(Curve {
                num_clients: n,
                policy,
                trace,
            });
        }
    }
    Ok(curves)
}
