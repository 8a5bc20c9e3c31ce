//! Differentially private over-the-air computation (AirComp) for federated
//! learning.
//!
//! Clients pre-invert their fading channels so that their analog symbols add
//! up coherently at the base station. The receiver noise left on the decoded
//! sum acts as a Gaussian mechanism; choosing the common power-scaling factor
//! `ρ` below a privacy-driven cap makes every aggregation `(ε, δ)`-DP.
//!
//! * [`sysconfig`]: parameters, units and scenario files
//! * [`channel`]: Rayleigh fading and the weakest effective link
//! * [`privacy`]: clipping and the power-control policies
//! * [`aircomp`]: the noisy superposition channel and SNR measurement
//! * [`analysis`]: closed-form SNR bounds and `E[ρ**]`
//! * [`fl`]: federated training through the channel

pub mod aircomp;
pub mod analysis;
pub mod channel;
mod error;
pub mod fl;
pub mod privacy;
pub mod rng;
pub mod stats;
pub mod sysconfig;

pub use aircomp::{measure_snr, AggregateEstimate, ReceivedSymbol, SnrReport, SymbolMode, SymbolSource};
pub use analysis::{expected_rho_star_star, snr_bound, snr_bound_approx, snr_trial_std, tradeoff_table, SnrBoundPoint};
pub use channel::{ChannelDraw, EffectiveGain, FadingMode};
pub use error::{Error, Result};
pub use fl::{Dataset, ModelParams, TrainingConfig};
pub use privacy::{ClipNorm, ClippedUpdate, PowerPolicy, PowerScaling};
pub use rng::Seed;
pub use sysconfig::{load_scenario, ExperimentConfig, PrivacyTarget, Scenario, SystemParams};
