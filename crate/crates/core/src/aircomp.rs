//! The analog superposition channel at complex-baseband symbol level.
//!
//! After channel inversion every client's symbol arrives scaled by the same
//! `√(Gβρ)`, so one slot reduces to `r = √(Gβρ) Σ_i s_i + n_0` with
//! `n_0 ~ CN(0, σ_n²)`. The receiver keeps `Re(r)/√(Gβρ)`.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis;
use crate::channel::draw_channel;
use crate::error::{Error, Result};
use crate::privacy::{ClippedUpdate, PowerPolicy};
use crate::rng::Seed;
use crate::stats::RunningStats;
use crate::sysconfig::{linear_to_db, PrivacyTarget, SystemParams};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReceivedSymbol {
    pub value: Complex64,
    pub rho_used: f64,
    /// Kept for white-box checks of the noise model.
    pub noise_sample: Complex64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateEstimate {
    /// Decoded `Σ_i s_i^(d)` per slot.
    pub estimate: Vec<f64>,
    /// `σ_n/√(2Gβρ_d)` per slot; zero for slots nobody transmitted in.
    pub per_slot_noise_std: Vec<f64>,
}

fn noise_sample<R: Rng + ?Sized>(params: &SystemParams, rng: &mut R) -> Complex64 {
    if !params.noise_enabled {
        return Complex64::new(0.0, 0.0);
    }
    let half = Normal::new(0.0, (params.noise_power / 2.0).sqrt()).expect("valid std");
    Complex64::new(half.sample(rng), half.sample(rng))
}

/// Superposes one slot's channel-inverted symbols and adds receiver noise.
pub fn transmit_slot<R: Rng + ?Sized>(symbols: &[f64], rho: f64, params: &SystemParams, rng: &mut R) -> ReceivedSymbol {
    let amplitude = (params.link_gain() * rho).sqrt();
    let sum: f64 = symbols.iter().sum();
    let noise = noise_sample(params, rng);
    ReceivedSymbol {
        value: Complex64::new(amplitude * sum, 0.0) + noise,
        rho_used: rho,
        noise_sample: noise,
    }
}

/// `Re(r)/√(Gβρ)`.
pub fn decode_slot(received: &ReceivedSymbol, rho: f64, params: &SystemParams) -> Result<f64> {
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::UndefinedDecode { rho });
    }
    Ok(received.value.re / (params.link_gain() * rho).sqrt())
}

/// Per-slot noise standard deviation of the decoded sum.
pub fn decoded_noise_std(params: &SystemParams, rho: f64) -> f64 {
    if !params.noise_enabled || rho.is_infinite() {
        return 0.0;
    }
    params.noise_power.sqrt() / (2.0 * params.link_gain() * rho).sqrt()
}

/// Sends every coordinate in its own slot with a common `rho`.
pub fn aggregate_round<R: Rng + ?Sized>(
    s: &ClippedUpdate,
    rho: f64,
    params: &SystemParams,
    rng: &mut R,
) -> Result<AggregateEstimate> {
    aggregate_round_per_slot(s, &vec![rho; s.num_slots()], params, rng)
}

/// Sends every coordinate in its own slot, slot `d` using `rhos[d]`.
///
/// A slot with `rho = +inf` is one where every client is silent: nothing is
/// transmitted and the estimate is exactly zero.
pub fn aggregate_round_per_slot<R: Rng + ?Sized>(
    s: &ClippedUpdate,
    rhos: &[f64],
    params: &SystemParams,
    rng: &mut R,
) -> Result<AggregateEstimate> {
    if rhos.len() != s.num_slots() {
        return Err(Error::Dimension(format!(
            "{} scaling factors for {} slots",
            rhos.len(),
            s.num_slots()
        )));
    }
    let mut estimate = Vec::with_capacity(rhos.len());
    let mut per_slot_noise_std = Vec::with_capacity(rhos.len());
    for (d, &rho) in rhos.iter().enumerate() {
        let slot = s.slot(d);
        if rho == f64::INFINITY {
            debug_assert!(slot.iter().all(|x| *x == 0.0));
            estimate.push(0.0);
            per_slot_noise_std.push(0.0);
            continue;
        }
        let received = transmit_slot(&slot, rho, params, rng);
        estimate.push(decode_slot(&received, rho, params)?);
        per_slot_noise_std.push(decoded_noise_std(params, rho));
    }
    Ok(AggregateEstimate {
        estimate,
        per_slot_noise_std,
    })
}

/// Which symbols the SNR measurement transmits.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SymbolMode {
    /// Every client sends `S` with the same sign.
    #[default]
    Saturated,
    /// Slot columns recorded during training.
    Realized,
}

/// Symbols for [`measure_snr`].
#[derive(Debug, Clone, Copy)]
pub enum SymbolSource<'a> {
    Saturated,
    /// Slot columns cycled over trials; each must have one entry per client.
    Realized(&'a [Vec<f64>]),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SnrReport {
    pub policy: PowerPolicy,
    pub epsilon: f64,
    pub delta: f64,
    pub num_clients: usize,
    pub max_tx_power: f64,
    pub trials: u64,
    /// Measured linear SNR.
    pub snr: f64,
    pub std_error: f64,
    pub mean_rho: f64,
    pub exact_bound: f64,
    pub approx_bound: f64,
}

impl SnrReport {
    pub fn snr_db(&self) -> f64 {
        linear_to_db(self.snr)
    }
}

const TRIAL_CHUNK: u64 = 4096;

/// Monte Carlo received SNR: the mean of `Gβρ|Σ_i s_i|²` over independent
/// channel draws, divided by `σ_n²`.
///
/// Trial `t` draws from `seed.child(t)` and chunks are merged in order, so the
/// result does not depend on the number of worker threads.
pub fn measure_snr(
    params: &SystemParams,
    target: &PrivacyTarget,
    policy: PowerPolicy,
    num_trials: u64,
    seed: Seed,
    symbols: SymbolSource<'_>,
) -> Result<SnrReport> {
    if num_trials == 0 {
        return Err(Error::invalid("num_trials", "must be >= 1"));
    }
    let num_clients = params.num_clients();
    let saturated = vec![target.clip_threshold(); num_clients];
    if let SymbolSource::Realized(columns) = symbols {
        if columns.is_empty() {
            return Err(Error::invalid("symbols", "realized trace is empty"));
        }
        if let Some(c) = columns.iter().find(|c| c.len() != num_clients) {
            return Err(Error::Dimension(format!(
                "realized slot has {} symbols for {num_clients} clients",
                c.len()
            )));
        }
    }
    let link_gain = params.link_gain();
    let num_chunks = num_trials.div_ceil(TRIAL_CHUNK);
    let partials: Vec<(RunningStats, RunningStats)> = (0..num_chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut power = RunningStats::default();
            let mut rho_stats = RunningStats::default();
            let end = ((chunk + 1) * TRIAL_CHUNK).min(num_trials);
            for trial in chunk * TRIAL_CHUNK..end {
                let mut rng = seed.child(trial).rng();
                let draw = draw_channel(&mut rng, params);
                let slot: &[f64] = match symbols {
                    SymbolSource::Saturated => &saturated,
                    SymbolSource::Realized(cols) => &cols[(trial % cols.len() as u64) as usize],
                };
                let rho = policy.scaling(params, target, &draw, slot).rho;
                let sum: f64 = slot.iter().sum();
                if rho.is_finite() {
                    power.push(link_gain * rho * sum * sum);
                    rho_stats.push(rho);
                } else {
                    // silent slot: nothing on the air
                    power.push(0.0);
                }
            }
            (power, rho_stats)
        })
        .collect();
    let mut power = RunningStats::default();
    let mut rho = RunningStats::default();
    for (p, r) in &partials {
        power.merge(p);
        rho.merge(r);
    }
    Ok(SnrReport {
        policy,
        epsilon: target.epsilon(),
        delta: target.delta(),
        num_clients,
        max_tx_power: params.max_tx_power,
        trials: num_trials,
        snr: power.mean() / params.noise_power,
        std_error: power.std_error() / params.noise_power,
        mean_rho: rho.mean(),
        exact_bound: analysis::snr_bound(params, target),
        approx_bound: analysis::snr_bound_approx(num_clients, target.epsilon(), target.delta())?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{mean, variance};

    const S: f64 = 5e-5;

    fn reference(n: usize) -> (SystemParams, PrivacyTarget) {
        (SystemParams::reference(n), PrivacyTarget::new(0.01, 0.1, S).unwrap())
    }

    fn noiseless(n: usize) -> SystemParams {
        SystemParams {
            noise_enabled: false,
            ..SystemParams::reference(n)
        }
    }

    #[test]
    fn noiseless_slot_is_exact() {
        let p = noiseless(3);
        let s = [0.2 * S, -0.1 * S, 0.7 * S];
        let mut rng = Seed(1).rng();
        for rho in [1e-6, 0.157, 3.0, 1e4] {
            let r = transmit_slot(&s, rho, &p, &mut rng);
            assert_eq!(r.noise_sample, Complex64::new(0.0, 0.0));
            assert_eq!(r.value.re, (p.link_gain() * rho).sqrt() * s.iter().sum::<f64>());
            let decoded = decode_slot(&r, rho, &p).unwrap();
            let truth: f64 = s.iter().sum();
            assert!(((decoded - truth) / truth).abs() < 1e-12);
        }
    }

    #[test]
    fn silent_slot_carries_only_noise() {
        let (p, _) = reference(4);
        let r = transmit_slot(&[0.0; 4], 0.1, &p, &mut Seed(2).rng());
        assert_eq!(r.value, r.noise_sample);
    }

    #[test]
    fn zero_rho_cannot_be_decoded() {
        let (p, _) = reference(2);
        let r = transmit_slot(&[S, S], 0.0, &p, &mut Seed(3).rng());
        assert!(matches!(decode_slot(&r, 0.0, &p), Err(Error::UndefinedDecode { .. })));
        let s = ClippedUpdate::constant(2, 3, S);
        assert!(aggregate_round(&s, 0.0, &p, &mut Seed(3).rng()).is_err());
    }

    #[test]
    fn noise_model_statistics() {
        let (p, _) = reference(3);
        let s = [0.5 * S, 0.25 * S, -0.1 * S];
        let rho = 0.1576;
        let mut rng = Seed(4).rng();
        let n = 1_000_000;
        let mut re = Vec::with_capacity(n);
        let mut err = Vec::with_capacity(n);
        let truth: f64 = s.iter().sum();
        for _ in 0..n {
            let r = transmit_slot(&s, rho, &p, &mut rng);
            re.push(r.value.re);
            err.push(decode_slot(&r, rho, &p).unwrap() - truth);
        }
        assert!((variance(&re) / (p.noise_power / 2.0) - 1.0).abs() < 0.01);
        let std = variance(&err).sqrt();
        let expected = decoded_noise_std(&p, rho);
        assert!((std / expected - 1.0).abs() < 0.01, "{std} vs {expected}");
        assert!(mean(&err).abs() < 5.0 * expected / (n as f64).sqrt());
    }

    #[test]
    fn single_slot_round_matches_slot_path() {
        let (p, _) = reference(3);
        let s = ClippedUpdate::from_clients(vec![vec![0.1 * S], vec![0.3 * S], vec![-0.2 * S]]).unwrap();
        let rho = 0.5;
        let round = aggregate_round(&s, rho, &p, &mut Seed(5).rng()).unwrap();
        let r = transmit_slot(&s.slot(0), rho, &p, &mut Seed(5).rng());
        assert_eq!(round.estimate, vec![decode_slot(&r, rho, &p).unwrap()]);
        assert_eq!(round.per_slot_noise_std, vec![decoded_noise_std(&p, rho)]);
    }

    #[test]
    fn noiseless_round_recovers_column_sums() {
        let p = noiseless(3);
        let s = ClippedUpdate::from_clients(vec![
            vec![0.1, -0.2, 0.3, 0.0],
            vec![0.4, 0.5, -0.6, 0.0],
            vec![-0.7, 0.8, 0.9, 0.0],
        ])
        .unwrap();
        let est = aggregate_round_per_slot(&s, &[0.3, 2.0, 7.0, f64::INFINITY], &p, &mut Seed(6).rng()).unwrap();
        for (e, t) in est.estimate.iter().zip(s.slot_sums()) {
            assert!((e - t).abs() <= 1e-12 * t.abs());
        }
        assert_eq!(est.per_slot_noise_std, vec![0.0; 4]);
    }

    #[test]
    fn per_slot_noise_is_independent_with_expected_covariance() {
        let (p, _) = reference(2);
        let s = ClippedUpdate::constant(2, 3, 0.5 * S);
        let rho = 0.2;
        let truth = s.slot_sums();
        let mut rng = Seed(7).rng();
        let n = 100_000;
        let mut errs: [Vec<f64>; 3] = std::array::from_fn(|_| Vec::with_capacity(n));
        for _ in 0..n {
            let est = aggregate_round(&s, rho, &p, &mut rng).unwrap();
            for d in 0..3 {
                errs[d].push(est.estimate[d] - truth[d]);
            }
        }
        let expected_var = p.noise_power / (2.0 * p.link_gain() * rho);
        for e in &errs {
            assert!((variance(e) / expected_var - 1.0).abs() < 0.02);
        }
        for (a, b) in [(0, 1), (0, 2), (1, 2)] {
            let (ma, mb) = (mean(&errs[a]), mean(&errs[b]));
            let cov: f64 = errs[a]
                .iter()
                .zip(&errs[b])
                .map(|(x, y)| (x - ma) * (y - mb))
                .sum::<f64>()
                / n as f64;
            let corr = cov / (variance(&errs[a]) * variance(&errs[b])).sqrt();
            assert!(corr.abs() < 0.01, "corr({a},{b}) = {corr}");
        }
    }

    #[test]
    fn saturated_snr_is_signal_power_at_mean_rho() {
        // with s_i = S the signal power per trial is GβρI²S², so the measured
        // SNR must equal that expression at the mean ρ
        let (p, t) = reference(5);
        let report = measure_snr(&p, &t, PowerPolicy::DpStarStar, 2000, Seed(8), SymbolSource::Saturated).unwrap();
        let implied = p.link_gain() * report.mean_rho * 25.0 * S * S / p.noise_power;
        assert!((report.snr / implied - 1.0).abs() < 1e-9);
    }

    #[test]
    fn snr_respects_bound_and_grows_with_epsilon() {
        let (p, t) = reference(5);
        let low = measure_snr(
            &p,
            &t,
            PowerPolicy::DpStarStar,
            100_000,
            Seed(9),
            SymbolSource::Saturated,
        )
        .unwrap();
        assert!(low.snr <= 2.4745e-4 + 3.0 * low.std_error);
        assert!(low.snr <= low.exact_bound + 3.0 * low.std_error);
        let t2 = t.with_epsilon(0.95).unwrap();
        let high = measure_snr(
            &p,
            &t2,
            PowerPolicy::DpStarStar,
            100_000,
            Seed(9),
            SymbolSource::Saturated,
        )
        .unwrap();
        assert!(high.snr > low.snr);
    }

    #[test]
    fn measurement_is_reproducible() {
        let (p, t) = reference(5);
        let a = measure_snr(
            &p,
            &t,
            PowerPolicy::Conventional,
            10_000,
            Seed(10),
            SymbolSource::Saturated,
        )
        .unwrap();
        let b = measure_snr(
            &p,
            &t,
            PowerPolicy::Conventional,
            10_000,
            Seed(10),
            SymbolSource::Saturated,
        )
        .unwrap();
        assert_eq!(a, b);
        let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let c = single
            .install(|| {
                measure_snr(
                    &p,
                    &t,
                    PowerPolicy::Conventional,
                    10_000,
                    Seed(10),
                    SymbolSource::Saturated,
                )
            })
            .unwrap();
        assert_eq!(a, c);
    }

    #[test]
    fn realized_symbols_are_validated() {
        let (p, t) = reference(2);
        let cols = vec![vec![S, 0.5 * S], vec![0.0, 0.0]];
        let r = measure_snr(
            &p,
            &t,
            PowerPolicy::DpStar,
            1000,
            Seed(11),
            SymbolSource::Realized(&cols),
        )
        .unwrap();
        assert!(r.snr > 0.0);
        let bad = vec![vec![S]];
        assert!(measure_snr(&p, &t, PowerPolicy::DpStar, 10, Seed(11), SymbolSource::Realized(&bad)).is_err());
    }
}
