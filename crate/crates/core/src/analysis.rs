//! Closed forms for the SNR–privacy tradeoff.
//!
//! The minimum effective gain `g = min_i r_i^(-α)|h_i|²` is exponential with
//! rate `λ = Σ_i r_i^α`, and `ρ** = (P0/S²) min{g, g_th}`, so
//! `E[ρ**] = (P0/(S²λ))(1 - e^(-λ g_th))`. With saturated symbols the
//! received SNR is `GβI²S² E[ρ**] / σ_n²`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::privacy::gain_threshold;
use crate::sysconfig::{linear_to_db, PrivacyTarget, SystemParams};

/// `1 - e^(-x)` without cancellation for small `x`.
fn one_minus_exp_neg(x: f64) -> f64 {
    -(-x).exp_m1()
}

/// Upper bound on the received SNR under `ρ**`:
/// `(GβI²P0/(λσ_n²)) [1 - exp(-(λσ_n²/(4GβP0)) ε²/ln(1.25/δ))]`.
pub fn snr_bound(params: &SystemParams, target: &PrivacyTarget) -> f64 {
    let i = params.num_clients() as f64;
    let lambda = params.sum_r_alpha();
    let prefactor = params.link_gain() * i * i * params.max_tx_power / (lambda * params.noise_power);
    let exponent = lambda * params.noise_power / (4.0 * params.link_gain() * params.max_tx_power)
        * target.epsilon().powi(2)
        / target.log_term();
    prefactor * one_minus_exp_neg(exponent)
}

/// First-order approximation `I²ε² / (4 ln(1.25/δ))`, independent of the
/// physical layer.
pub fn snr_bound_approx(num_clients: usize, epsilon: f64, delta: f64) -> Result<f64> {
    if num_clients == 0 {
        return Err(Error::invalid("num_clients", "must be >= 1"));
    }
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::invalid(
            "epsilon",
            format!("must be finite and > 0, got {epsilon}"),
        ));
    }
    if !(delta > 0.0 && delta < 1.25) {
        return Err(Error::invalid("delta", format!("must lie in (0, 1.25), got {delta}")));
    }
    let i = num_clients as f64;
    Ok(i * i * epsilon * epsilon / (4.0 * (1.25 / delta).ln()))
}

/// `E_h[ρ**] = (P0/(S²Σr_i^α)) (1 - exp(-g_th Σr_i^α))`.
pub fn expected_rho_star_star(params: &SystemParams, target: &PrivacyTarget) -> f64 {
    let lambda = params.sum_r_alpha();
    let s2 = target.clip_threshold().powi(2);
    params.max_tx_power / (s2 * lambda) * one_minus_exp_neg(gain_threshold(params, target) * lambda)
}

/// Standard deviation of a single saturated-symbol SNR sample under `ρ**`,
/// i.e. of `GβI²P0 min{g, g_th} / σ_n²`.
///
/// Useful as a floor on Monte Carlo standard errors when the channel branch
/// is too rare to show up in the sample.
pub fn snr_trial_std(params: &SystemParams, target: &PrivacyTarget) -> f64 {
    let i = params.num_clients() as f64;
    let lambda = params.sum_r_alpha();
    let x = gain_threshold(params, target) * lambda;
    // λ² Var[min{g, g_th}] = 2(1 - e^(-x)(1 + x)) - (1 - e^(-x))²
    let scaled_var = if x < 1e-3 {
        x.powi(3) / 3.0 - x.powi(4) / 3.0 + 11.0 * x.powi(5) / 60.0
    } else {
        let q = one_minus_exp_neg(x);
        2.0 * (q - x * (-x).exp()) - q * q
    };
    params.link_gain() * i * i * params.max_tx_power / params.noise_power * scaled_var.max(0.0).sqrt() / lambda
}

/// One row of the tradeoff table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SnrBoundPoint {
    pub epsilon: f64,
    pub delta: f64,
    pub num_clients: usize,
    pub g_th: f64,
    pub exact_bound: f64,
    pub exact_bound_db: f64,
    pub approx_bound: f64,
    pub expected_rho: f64,
}

impl SnrBoundPoint {
    pub fn evaluate(params: &SystemParams, target: &PrivacyTarget) -> Result<Self> {
        let exact_bound = snr_bound(params, target);
        Ok(SnrBoundPoint {
            epsilon: target.epsilon(),
            delta: target.delta(),
            num_clients: params.num_clients(),
            g_th: gain_threshold(params, target),
            exact_bound,
            exact_bound_db: linear_to_db(exact_bound),
            approx_bound: snr_bound_approx(params.num_clients(), target.epsilon(), target.delta())?,
            expected_rho: expected_rho_star_star(params, target),
        })
    }
}

/// Evaluates every `(I, ε)` pair; rows come out sorted by `(I, ε)`.
pub fn tradeoff_table(
    params: &SystemParams,
    epsilon_grid: &[f64],
    num_clients_grid: &[usize],
    delta: f64,
    clip_threshold: f64,
) -> Result<Vec<SnrBoundPoint>> {
    if epsilon_grid.is_empty() || num_clients_grid.is_empty() {
        return Err(Error::invalid("grid", "epsilon and client grids must be nonempty"));
    }
    let mut clients = num_clients_grid.to_vec();
    clients.sort_unstable();
    let mut epsilons = epsilon_grid.to_vec();
    epsilons.sort_by(f64::total_cmp);
    let mut rows = Vec::with_capacity(clients.len() * epsilons.len());
    for &n in &clients {
        if n == 0 {
            return Err(Error::invalid("num_clients", "must be >= 1"));
        }
        let sized = params.with_num_clients(n);
        for &eps in &epsilons {
            let target = PrivacyTarget::new(eps, delta, clip_threshold)?;
            rows.push(SnrBoundPoint::evaluate(&sized, &target)?);
        }
    }
    Ok(rows)
}
