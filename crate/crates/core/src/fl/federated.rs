use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::adam::Adam;
use super::dataset::Dataset;
use super::model::{evaluate, Mlp, ModelParams};
use super::{StepUnit, TrainingConfig};
use crate::aircomp::aggregate_round_per_slot;
use crate::channel::{draw_channel, ChannelDraw, FadingMode};
use crate::error::{Error, Result};
use crate::privacy::{clip_update_with, epsilon_achieved, tx_power_per_client, ClippedUpdate, PowerPolicy};
use crate::rng::Seed;
use crate::stats::RunningStats;
use crate::sysconfig::{PrivacyTarget, SystemParams};

/// Runs the configured number of local Adam steps from `theta` and returns
/// `Δ = θ_after − θ_before`. Optimizer state starts fresh on every call.
pub fn local_train<R: Rng + ?Sized>(
    model: &Mlp,
    theta: &ModelParams,
    data: &Dataset,
    config: &TrainingConfig,
    steps: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let mut params = theta.theta.clone();
    let mut adam = Adam::new(
        params.len(),
        config.learning_rate,
        config.adam_beta1,
        config.adam_beta2,
        config.adam_epsilon,
    );
    let batch_size = config.batch_size.min(data.len());
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut step = |params: &mut Vec<f64>, batch: &[usize]| -> Result<()> {
        let (loss, grad) = model.loss_and_grad(params, data, batch);
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            let norm = params.iter().map(|x| x * x).sum::<f64>().sqrt();
            return Err(Error::NonFinite(format!(
                "local training loss {loss} (batch of {}, parameter norm {norm:.3e})",
                batch.len()
            )));
        }
        adam.step(params, &grad);
        Ok(())
    };
    match config.local_step_unit {
        StepUnit::Epochs => {
            for _ in 0..steps {
                order.shuffle(rng);
                for batch in order.chunks(batch_size) {
                    step(&mut params, batch)?;
                }
            }
        }
        StepUnit::Steps => {
            let mut cursor = order.len();
            for _ in 0..steps {
                if cursor + batch_size > order.len() {
                    order.shuffle(rng);
                    cursor = 0;
                }
                let batch = order[cursor..cursor + batch_size].to_vec();
                cursor += batch_size;
                step(&mut params, &batch)?;
            }
        }
    }
    Ok(params.iter().zip(&theta.theta).map(|(a, b)| a - b).collect())
}

/// Channel state for one round.
#[derive(Debug, Clone, PartialEq)]
pub enum RoundChannel {
    /// One draw shared by every slot.
    Block(ChannelDraw),
    /// One draw per slot.
    PerSlot(Vec<ChannelDraw>),
}

impl RoundChannel {
    pub fn draw<R: Rng + ?Sized>(params: &SystemParams, num_slots: usize, rng: &mut R) -> Self {
        match params.fading {
            FadingMode::PerRound => RoundChannel::Block(draw_channel(rng, params)),
            FadingMode::PerSlot => RoundChannel::PerSlot((0..num_slots).map(|_| draw_channel(rng, params)).collect()),
        }
    }

    pub fn slot(&self, d: usize) -> &ChannelDraw {
        match self {
            RoundChannel::Block(draw) => draw,
            RoundChannel::PerSlot(draws) => &draws[d],
        }
    }
}

/// Everything a round needs besides the global model and randomness.
#[derive(Debug, Clone)]
pub struct FederatedSetup {
    pub model: Mlp,
    pub clients: Vec<Dataset>,
    /// `w_i`, one per client.
    pub weights: Vec<f64>,
    pub params: SystemParams,
    pub target: PrivacyTarget,
    pub policy: PowerPolicy,
    pub config: TrainingConfig,
}

impl FederatedSetup {
    pub fn new(
        model: Mlp,
        clients: Vec<Dataset>,
        params: SystemParams,
        target: PrivacyTarget,
        policy: PowerPolicy,
        config: TrainingConfig,
    ) -> Result<Self> {
        if clients.len() != params.num_clients() {
            return Err(Error::Dimension(format!(
                "{} client datasets for {} clients",
                clients.len(),
                params.num_clients()
            )));
        }
        if let Some(c) = clients.iter().find(|c| c.num_features() != model.num_features()) {
            return Err(Error::Dimension(format!(
                "client data has {} features, model expects {}",
                c.num_features(),
                model.num_features()
            )));
        }
        let smallest = clients.iter().map(Dataset::len).min().unwrap_or(0);
        if config.batch_size > smallest {
            return Err(Error::invalid(
                "training.batch_size",
                format!("{} exceeds the smallest client dataset ({smallest})", config.batch_size),
            ));
        }
        let weights = match &config.client_weights {
            Some(w) if w.len() == clients.len() => w.clone(),
            Some(w) => {
                return Err(Error::invalid(
                    "training.client_weights",
                    format!("{} weights for {} clients", w.len(), clients.len()),
                ))
            }
            None => clients.iter().map(|c| c.len() as f64).collect(),
        };
        Ok(FederatedSetup {
            model,
            clients,
            weights,
            params,
            target,
            policy,
            config,
        })
    }

    /// Seed client `i` trains with in the round seeded by `round_seed`.
    pub fn client_seed(round_seed: Seed, client: usize) -> Seed {
        round_seed.derive(&[0, client as u64])
    }

    fn noise_seed(round_seed: Seed) -> Seed {
        round_seed.child(1)
    }
}

/// Per-round diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundStats {
    pub policy: PowerPolicy,
    pub rho_per_slot: Vec<f64>,
    /// Mean over slots in which somebody transmitted.
    pub mean_rho: f64,
    pub dp_capped_slots: usize,
    pub silent_slots: usize,
    pub mean_noise_std: f64,
    pub epsilon_target: f64,
    /// Per-release ε implied by `mean_rho`.
    pub epsilon_achieved: f64,
    /// Highest transmit power of each client over the round's slots.
    pub max_tx_power: Vec<f64>,
    pub max_abs_symbol: f64,
    pub clip_bound_holds: bool,
    /// Number of noisy releases (slots) this round.
    pub releases: usize,
    /// Realized `Gβρ|Σs|²/σ_n²` averaged over active slots.
    pub snr_estimate: f64,
}

/// One aggregation round: local training, clipping, power control, noisy
/// over-the-air sum, global update `θ ← θ + Σ_i s_i + noise`.
pub fn fed_round(
    setup: &FederatedSetup,
    global: &ModelParams,
    channel: &RoundChannel,
    round_seed: Seed,
) -> Result<(ModelParams, RoundStats)> {
    let FederatedSetup {
        model,
        clients,
        weights,
        params,
        target,
        policy,
        config,
    } = setup;
    let weight_sum: f64 = weights.iter().sum();
    let symbols: Vec<Vec<f64>> = clients
        .par_iter()
        .enumerate()
        .map(|(i, data)| {
            let mut rng = FederatedSetup::client_seed(round_seed, i).rng();
            let delta = local_train(model, global, data, config, config.local_steps_per_round, &mut rng)?;
            clip_update_with(
                target.clip_norm(),
                &delta,
                weights[i],
                weight_sum,
                target.clip_threshold(),
            )
        })
        .collect::<Result<_>>()?;
    let s = ClippedUpdate::from_clients(symbols)?;
    let num_slots = s.num_slots();

    let mut rho_per_slot = Vec::with_capacity(num_slots);
    let mut dp_capped_slots = 0;
    let mut max_tx_power = vec![0.0f64; s.num_clients()];
    let mut cached = None;
    for d in 0..num_slots {
        let draw = channel.slot(d);
        let slot = s.slot(d);
        let scaling = match (policy.uses_symbols(), channel, cached) {
            (false, RoundChannel::Block(_), Some(sc)) => sc,
            _ => policy.scaling(params, target, draw, &slot),
        };
        cached = Some(scaling);
        dp_capped_slots += usize::from(scaling.dp_capped);
        for (m, p) in max_tx_power
            .iter_mut()
            .zip(tx_power_per_client(scaling.rho, draw, &slot, params))
        {
            *m = m.max(p);
        }
        rho_per_slot.push(scaling.rho);
    }

    let mut noise_rng = FederatedSetup::noise_seed(round_seed).rng();
    let estimate = aggregate_round_per_slot(&s, &rho_per_slot, params, &mut noise_rng)?;
    let theta = global
        .theta
        .iter()
        .zip(&estimate.estimate)
        .map(|(t, e)| t + e)
        .collect();

    let sums = s.slot_sums();
    let mut rho_stats = RunningStats::default();
    let mut noise_stats = RunningStats::default();
    let mut snr_stats = RunningStats::default();
    for d in 0..num_slots {
        let rho = rho_per_slot[d];
        if rho.is_finite() {
            rho_stats.push(rho);
            noise_stats.push(estimate.per_slot_noise_std[d]);
            snr_stats.push(params.link_gain() * rho * sums[d] * sums[d] / params.noise_power);
        }
    }
    let mean_rho = if rho_stats.count() > 0 { rho_stats.mean() } else { 0.0 };
    let max_abs_symbol = s.max_abs();
    let stats = RoundStats {
        policy: *policy,
        mean_rho,
        dp_capped_slots,
        silent_slots: num_slots - rho_stats.count() as usize,
        mean_noise_std: noise_stats.mean(),
        epsilon_target: target.epsilon(),
        epsilon_achieved: epsilon_achieved(params, mean_rho, target.clip_threshold(), target.delta())?,
        max_tx_power,
        max_abs_symbol,
        clip_bound_holds: max_abs_symbol <= target.clip_threshold(),
        releases: num_slots,
        snr_estimate: snr_stats.mean(),
        rho_per_slot,
    };
    Ok((ModelParams { theta }, stats))
}

/// One row of a training trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundRecord {
    pub round: usize,
    pub policy: PowerPolicy,
    pub num_clients: usize,
    pub epsilon_target: f64,
    /// ε implied by the running mean of ρ over all slots so far.
    pub epsilon_achieved: f64,
    pub rho: f64,
    pub snr_estimate: f64,
    pub test_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingTrace {
    pub records: Vec<RoundRecord>,
    pub initial_accuracy: f64,
    pub final_accuracy: f64,
    pub final_params: ModelParams,
    /// Mean ρ over every active slot of every round.
    pub mean_rho: f64,
    pub epsilon_achieved: f64,
    /// Noisy releases made over the whole run.
    pub releases: usize,
}

/// Trains for `rounds` rounds from a fresh initialization, evaluating on
/// `test` after every round. `on_round` sees every record as it is produced.
pub fn run_federated(
    setup: &FederatedSetup,
    test: &Dataset,
    rounds: usize,
    seed: Seed,
    mut on_round: impl FnMut(&RoundRecord, &RoundStats),
) -> Result<TrainingTrace> {
    let mut theta = setup.model.init(&mut seed.child(0).rng());
    let initial_accuracy = evaluate(&setup.model, &theta, test);
    let mut records = Vec::with_capacity(rounds);
    let mut rho_stats = RunningStats::default();
    let mut releases = 0;
    let mut accuracy = initial_accuracy;
    for round in 0..rounds {
        let channel = RoundChannel::draw(
            &setup.params,
            setup.model.num_params(),
            &mut seed.derive(&[1, round as u64]).rng(),
        );
        let (next, stats) = fed_round(setup, &theta, &channel, seed.derive(&[2, round as u64]))?;
        if !stats.clip_bound_holds {
            return Err(Error::invalid(
                "clip_threshold",
                format!("round {round} transmitted |s| = {} above S", stats.max_abs_symbol),
            ));
        }
        theta = next;
        stats
            .rho_per_slot
            .iter()
            .filter(|r| r.is_finite())
            .for_each(|&r| rho_stats.push(r));
        releases += stats.releases;
        accuracy = evaluate(&setup.model, &theta, test);
        let running_rho = if rho_stats.count() > 0 { rho_stats.mean() } else { 0.0 };
        let record = RoundRecord {
            round: round + 1,
            policy: setup.policy,
            num_clients: setup.clients.len(),
            epsilon_target: setup.target.epsilon(),
            epsilon_achieved: epsilon_achieved(
                &setup.params,
                running_rho,
                setup.target.clip_threshold(),
                setup.target.delta(),
            )?,
            rho: stats.mean_rho,
            snr_estimate: stats.snr_estimate,
            test_accuracy: accuracy,
        };
        on_round(&record, &stats);
        records.push(record);
    }
    let mean_rho = if rho_stats.count() > 0 { rho_stats.mean() } else { 0.0 };
    Ok(TrainingTrace {
        records,
        initial_accuracy,
        final_accuracy: accuracy,
        final_params: theta,
        mean_rho,
        epsilon_achieved: epsilon_achieved(
            &setup.params,
            mean_rho,
            setup.target.clip_threshold(),
            setup.target.delta(),
        )?,
        releases,
    })
}
