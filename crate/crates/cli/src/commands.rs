use std::io::Write;

use aircomp_dp::aircomp::{measure_snr, SymbolMode, SymbolSource};
use aircomp_dp::analysis::SnrBoundPoint;
use aircomp_dp::fl;
use aircomp_dp::sysconfig::{dbm_to_watts, linear_to_db};
use aircomp_dp::{PowerPolicy, Scenario, Seed};
use serde::Serialize;

use crate::{CliError, Result};

/// One `(P0, I, ε)` point of the SNR–privacy tradeoff.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TradeoffRow {
    pub epsilon: f64,
    pub delta: f64,
    pub num_clients: usize,
    pub max_tx_power_dbm: f64,
    pub policy: PowerPolicy,
    pub g_th: f64,
    pub exact_bound: f64,
    pub exact_bound_db: f64,
    pub approx_bound: f64,
    pub approx_bound_db: f64,
    pub expected_rho: f64,
    pub measured_snr: f64,
    pub snr_db: f64,
    pub snr_std_error: f64,
    pub trials: u64,
}

pub const TRADEOFF_HEADER: [&str; 15] = [
    "epsilon",
    "delta",
    "num_clients",
    "max_tx_power_dbm",
    "policy",
    "g_th",
    "exact_bound",
    "exact_bound_db",
    "approx_bound",
    "approx_bound_db",
    "expected_rho",
    "measured_snr",
    "snr_db",
    "snr_std_error",
    "trials",
];

/// Seed of every point with `I` clients; `ε` and `P0` share fading.
fn point_seed(master: Seed, num_clients: usize) -> Seed {
    master.child(num_clients as u64)
}

/// Analytical bounds plus the Monte Carlo SNR of `ρ**` for every grid point,
/// ordered by `(P0, I, ε)`.
pub fn tradeoff_rows(scenario: &Scenario) -> Result<Vec<TradeoffRow>> {
    let exp = &scenario.experiment;
    if exp.symbol_mode == SymbolMode::Realized {
        return Err(CliError::Usage(
            "tradeoff measures saturated symbols; realized symbols are reported by `train`".into(),
        ));
    }
    let target = scenario.privacy;
    let master = Seed(exp.master_seed);
    let mut powers = exp.max_tx_power_dbm_grid.clone();
    powers.sort_by(f64::total_cmp);
    let mut rows = Vec::new();
    for p0_dbm in powers {
        let params = scenario.system.with_max_tx_power(dbm_to_watts(p0_dbm));
        let table = aircomp_dp::tradeoff_table(
            &params,
            &exp.epsilon_grid,
            &exp.num_clients_grid,
            target.delta(),
            target.clip_threshold(),
        )?;
        for point in table {
            let SnrBoundPoint {
                epsilon,
                delta,
                num_clients,
                g_th,
                exact_bound,
                exact_bound_db,
                approx_bound,
                expected_rho,
            } = point;
            let sized = params.with_num_clients(num_clients);
            let point_target = target.with_epsilon(epsilon)?;
            let report = measure_snr(
                &sized,
                &point_target,
                PowerPolicy::DpStarStar,
                exp.num_trials,
                point_seed(master, num_clients),
                SymbolSource::Saturated,
            )?;
            rows.push(TradeoffRow {
                epsilon,
                delta,
                num_clients,
                max_tx_power_dbm: p0_dbm,
                policy: PowerPolicy::DpStarStar,
                g_th,
                exact_bound,
                exact_bound_db,
                approx_bound,
                approx_bound_db: linear_to_db(approx_bound),
                expected_rho,
                measured_snr: report.snr,
                snr_db: report.snr_db(),
                snr_std_error: report.std_error,
                trials: report.trials,
            });
        }
    }
    Ok(rows)
}

fn writer<W: Write>(out: W, header: &[&str]) -> Result<csv::Writer<W>> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(header)?;
    Ok(w)
}

pub fn run_tradeoff<W: Write>(scenario: &Scenario, out: W) -> Result<()> {
    let mut w = writer(out, &TRADEOFF_HEADER)?;
    for row in tradeoff_rows(scenario)? {
        w.serialize(row)?;
    }
    w.flush().map_err(|source| CliError::Io {
        path: "<output>".into(),
        source,
    })?;
    Ok(())
}

/// One round of one training curve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainRow {
    pub round: usize,
    pub policy: PowerPolicy,
    pub num_clients: usize,
    pub epsilon_target: f64,
    pub epsilon_achieved: f64,
    pub rho: f64,
    pub snr_estimate: f64,
    pub snr_db: f64,
    pub test_accuracy: f64,
}

pub const TRAIN_HEADER: [&str; 9] = [
    "round",
    "policy",
    "num_clients",
    "epsilon_target",
    "epsilon_achieved",
    "rho",
    "snr_estimate",
    "snr_db",
    "test_accuracy",
];

/// Runs every `(I, policy)` training curve of the scenario and returns one
/// row per round, curves in grid order.
pub fn train_rows(scenario: &Scenario) -> Result<Vec<TrainRow>> {
    let mut rows = Vec::new();
    fl::train_curves(scenario, |r| {
        rows.push(TrainRow {
            round: r.round,
            policy: r.policy,
            num_clients: r.num_clients,
            epsilon_target: r.epsilon_target,
            epsilon_achieved: r.epsilon_achieved,
            rho: r.rho,
            snr_estimate: r.snr_estimate,
            snr_db: linear_to_db(r.snr_estimate),
            test_accuracy: r.test_accuracy,
        })
    })?;
    Ok(rows)
}

pub fn run_train<W: Write>(scenario: &Scenario, out: W) -> Result<()> {
    let mut w = writer(out, &TRAIN_HEADER)?;
    for row in train_rows(scenario)? {
        w.serialize(row)?;
    }
    w.flush().map_err(|source| CliError::Io {
        path: "<output>".into(),
        source,
    })?;
    Ok(())
}
