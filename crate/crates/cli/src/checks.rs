//! Self-checks run by `aircomp-dp validate`.

use std::fmt;
use std::io::Write;

use aircomp_dp::aircomp::{measure_snr, SymbolSource};
use aircomp_dp::channel::{draw_channel, effective_gain_ccdf, min_effective_gain};
use aircomp_dp::fl::{Activation, Dataset, Mlp};
use aircomp_dp::privacy::{
    clip_update_with, dp_rho_cap, epsilon_achieved, rho_conventional, rho_star, rho_star_star, tx_power_per_client,
};
use aircomp_dp::stats::{ks_test, RunningStats};
use aircomp_dp::sysconfig::dbm_to_watts;
use aircomp_dp::{analysis, ClipNorm, PowerPolicy, PrivacyTarget, Scenario, Seed, SystemParams};
use rand::Rng;
use serde::Serialize;

use crate::Result;

pub type BoundFn = fn(&SystemParams, &PrivacyTarget) -> f64;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub check: String,
    pub case: String,
    pub passed: bool,
    pub value: f64,
    pub limit: f64,
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(
            f,
            "{tag} {:<24} {:<36} value={:.6e} limit={:.6e}",
            self.check, self.case, self.value, self.limit
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub results: Vec<CheckResult>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.results.iter().all(|r| r.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.results.iter().filter(|r| !r.passed)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.results {
            w.serialize(r)?;
        }
        w.flush().map_err(|source| crate::CliError::Io {
            path: "<report>".into(),
            source,
        })?;
        Ok(())
    }
}

/// Check settings. `bound` is the SNR bound under test, normally
/// [`analysis::snr_bound`].
#[derive(Debug, Clone, Copy)]
pub struct Checks {
    pub bound: BoundFn,
    pub trials: u64,
    pub seed: Seed,
    pub random_pairs: usize,
}

impl Checks {
    pub fn new(trials: u64, seed: Seed) -> Self {
        Checks {
            bound: analysis::snr_bound,
            trials,
            seed,
            random_pairs: 10_000,
        }
    }

    pub fn with_bound(mut self, bound: BoundFn) -> Self {
        self.bound = bound;
        self
    }
}

struct Recorder(Vec<CheckResult>);

impl Recorder {
    fn push(&mut self, check: &str, case: String, passed: bool, value: f64, limit: f64) {
        let r = CheckResult {
            check: check.to_owned(),
            case,
            passed,
            value,
            limit,
        };
        log::debug!("{r}");
        self.0.push(r);
    }
}

pub fn run_checks(scenario: &Scenario, checks: &Checks) -> Result<ValidationReport> {
    let exp = &scenario.experiment;
    let mut rec = Recorder(Vec::new());
    let mut clients = exp.num_clients_grid.clone();
    clients.sort_unstable();
    clients.dedup();
    let mut epsilons = exp.epsilon_grid.clone();
    epsilons.sort_by(f64::total_cmp);
    let mut powers = exp.max_tx_power_dbm_grid.clone();
    powers.sort_by(f64::total_cmp);

    for &p0_dbm in &powers {
        let base = scenario.system.with_max_tx_power(dbm_to_watts(p0_dbm));
        for &n in &clients {
            let params = base.with_num_clients(n);
            let mut prev: Option<(f64, f64)> = None;
            for &eps in &epsilons {
                let target = scenario.privacy.with_epsilon(eps)?;
                let case = format!("P0={p0_dbm}dBm I={n} eps={eps}");
                let seed = checks.seed.derive(&[0, n as u64]);

                let report = measure_snr(
                    &params,
                    &target,
                    PowerPolicy::DpStarStar,
                    checks.trials,
                    seed,
                    SymbolSource::Saturated,
                )?;
                let bound = (checks.bound)(&params, &target);
                let se = report
                    .std_error
                    .max(analysis::snr_trial_std(&params, &target) / (checks.trials as f64).sqrt());
                let limit = bound + 3.0 * se;
                rec.push("snr_below_bound", case.clone(), report.snr <= limit, report.snr, limit);

                if let Some((prev_eps, prev_snr)) = prev {
                    let floor = prev_snr;
                    rec.push(
                        "snr_monotone_in_epsilon",
                        format!("{case} vs eps={prev_eps}"),
                        report.snr >= floor,
                        report.snr,
                        floor,
                    );
                }
                prev = Some((eps, report.snr));

                let expected = analysis::expected_rho_star_star(&params, &target);
                let mut rng = checks.seed.derive(&[1, n as u64, eps.to_bits()]).rng();
                let mut stats = RunningStats::default();
                for _ in 0..checks.trials {
                    stats.push(rho_star_star(&params, &target, &draw_channel(&mut rng, &params)).rho);
                }
                let rel = (stats.mean() - expected).abs() / expected;
                let tol = (4.0 * stats.std_error() / expected).max(0.01);
                rec.push("expected_rho", case.clone(), rel <= tol, rel, tol);

                let approx = analysis::snr_bound_approx(n, eps, target.delta())?;
                rec.push("approx_dominates_bound", case, approx >= bound, approx, bound);
            }
        }
    }

    for &n in &clients {
        let params = scenario.system.with_num_clients(n);
        let mut rng = checks.seed.derive(&[2, n as u64]).rng();
        let samples: Vec<f64> = (0..checks.trials)
            .map(|_| min_effective_gain(&draw_channel(&mut rng, &params), &params).value())
            .collect();
        let ks = ks_test(&samples, |x| 1.0 - effective_gain_ccdf(x, &params).unwrap_or(1.0));
        rec.push(
            "min_gain_distribution",
            format!("I={n}"),
            ks.p_value > 0.01,
            ks.p_value,
            0.01,
        );
    }

    policy_invariants(scenario, checks, &clients, &mut rec)?;
    gradient_check(checks.seed.child(4), &mut rec);
    Ok(ValidationReport { results: rec.0 })
}

/// Random channel/update pairs: policy ordering, power budget, DP cap and the
/// ε round trip.
fn policy_invariants(scenario: &Scenario, checks: &Checks, clients: &[usize], rec: &mut Recorder) -> Result<()> {
    let mut rng = checks.seed.child(3).rng();
    let mut worst_order = f64::NEG_INFINITY;
    let mut worst_power = f64::NEG_INFINITY;
    let mut worst_cap = f64::NEG_INFINITY;
    let mut worst_round_trip: f64 = 0.0;
    let mut worst_clip = f64::NEG_INFINITY;
    for _ in 0..checks.random_pairs {
        let n = clients[rng.random_range(0..clients.len())];
        let params = scenario.system.with_num_clients(n);
        let eps = 10f64.powf(rng.random_range(-3.0..0.0));
        let s_bound = 10f64.powf(rng.random_range(-6.0..0.0));
        let norm = if rng.random_bool(0.5) {
            ClipNorm::L2
        } else {
            ClipNorm::Linf
        };
        let target = scenario
            .privacy
            .with_epsilon(eps)?
            .with_clip_threshold(s_bound)?
            .with_clip_norm(norm);
        let draw = draw_channel(&mut rng, &params);
        let slot: Vec<f64> = (0..n)
            .map(|_| {
                let raw: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
                let clipped = clip_update_with(norm, &raw, 1.0, n as f64, s_bound).expect("valid clip input");
                worst_clip = worst_clip.max(clipped.iter().fold(0.0f64, |m, v| m.max(v.abs())) / s_bound - 1.0);
                clipped[0]
            })
            .collect();
        let star = rho_star(&params, &target, &draw, &slot).rho;
        let star_star = rho_star_star(&params, &target, &draw).rho;
        let conv = rho_conventional(&params, &draw, &slot).rho;
        let cap = dp_rho_cap(&params, &target);
        // ρ** ≤ ρ* ≤ ρ_conv, as relative excess
        worst_order = worst_order.max((star_star - star) / star).max(if conv.is_finite() {
            (star - conv) / conv
        } else {
            f64::NEG_INFINITY
        });
        for rho in [star, star_star, conv].into_iter().filter(|r| r.is_finite()) {
            for p in tx_power_per_client(rho, &draw, &slot, &params) {
                worst_power = worst_power.max(p / params.max_tx_power - 1.0);
            }
        }
        worst_cap = worst_cap.max(star_star / cap - 1.0);
        if star_star.is_finite() && star_star > 0.0 && star_star >= cap * (1.0 - 1e-12) {
            let achieved = epsilon_achieved(&params, star_star, s_bound, target.delta())?;
            worst_round_trip = worst_round_trip.max((achieved - eps).abs() / eps);
        }
    }
    let case = format!("{} pairs", checks.random_pairs);
    rec.push(
        "policy_ordering",
        case.clone(),
        worst_order <= 1e-12,
        worst_order,
        1e-12,
    );
    rec.push("tx_power_budget", case.clone(), worst_power <= 1e-9, worst_power, 1e-9);
    rec.push("dp_cap", case.clone(), worst_cap <= 1e-12, worst_cap, 1e-12);
    rec.push(
        "epsilon_round_trip",
        case.clone(),
        worst_round_trip <= 1e-9,
        worst_round_trip,
        1e-9,
    );
    rec.push("clip_bound", case, worst_clip <= 1e-12, worst_clip, 1e-12);
    Ok(())
}

/// Finite-difference check of the model gradient on a small tanh network.
fn gradient_check(seed: Seed, rec: &mut Recorder) {
    let mut rng = seed.rng();
    let model = Mlp::new(3, &[4], 3, Activation::Tanh);
    let features: Vec<f32> = (0..8 * 3).map(|_| rng.random_range(-1.0..1.0)).collect();
    let labels: Vec<usize> = (0..8).map(|i| i % 3).collect();
    let data = Dataset::new(features, labels, 3, 3).expect("valid toy dataset");
    let batch: Vec<usize> = (0..data.len()).collect();
    let theta = model.init(&mut rng).theta;
    let (_, grad) = model.loss_and_grad(&theta, &data, &batch);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for k in 0..theta.len() {
        let mut plus = theta.clone();
        plus[k] += h;
        let mut minus = theta.clone();
        minus[k] -= h;
        let fd = (model.loss(&plus, &data, &batch) - model.loss(&minus, &data, &batch)) / (2.0 * h);
        worst = worst.max((fd - grad[k]).abs() / fd.abs().max(grad[k].abs()).max(1e-6));
    }
    rec.push("gradient", format!("{} params", theta.len()), worst < 1e-4, worst, 1e-4);
}
