//! Rayleigh block fading and the statistics of the weakest effective link.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sysconfig::SystemParams;

/// How often fading is redrawn during an aggregation round.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FadingMode {
    /// One draw per round, shared by all slots.
    #[default]
    PerRound,
    /// A fresh draw for every slot.
    PerSlot,
}

/// One realization of the per-client small-scale fading gains `h_i ~ CN(0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelDraw {
    gains: Vec<Complex64>,
}

impl ChannelDraw {
    pub fn from_gains(gains: Vec<Complex64>) -> Self {
        ChannelDraw { gains }
    }

    pub fn gains(&self) -> &[Complex64] {
        &self.gains
    }

    pub fn len(&self) -> usize {
        self.gains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gains.is_empty()
    }

    /// `r_i^(-α)|h_i|²` per client.
    pub fn effective_gains<'a>(&'a self, params: &'a SystemParams) -> impl Iterator<Item = f64> + 'a {
        self.gains
            .iter()
            .enumerate()
            .map(|(i, h)| params.path_gain(i) * h.norm_sqr())
    }
}

/// Draws `I` independent circularly symmetric unit-variance complex Gaussians.
pub fn draw_channel<R: Rng + ?Sized>(rng: &mut R, params: &SystemParams) -> ChannelDraw {
    let half = Normal::new(0.0, std::f64::consts::FRAC_1_SQRT_2).expect("valid std");
    let gains = (0..params.num_clients())
        .map(|_| Complex64::new(half.sample(rng), half.sample(rng)))
        .collect();
    ChannelDraw { gains }
}

/// `g = min_i r_i^(-α)|h_i|²`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct EffectiveGain(pub f64);

impl EffectiveGain {
    pub fn value(self) -> f64 {
        self.0
    }
}

pub fn min_effective_gain(draw: &ChannelDraw, params: &SystemParams) -> EffectiveGain {
    debug_assert_eq!(draw.len(), params.num_clients());
    EffectiveGain(draw.effective_gains(params).fold(f64::INFINITY, f64::min))
}

/// `P(g ≥ x) = exp(-x Σ_i r_i^α)`: the minimum effective gain is exponential
/// with rate `Σ_i r_i^α`.
pub fn effective_gain_ccdf(x: f64, params: &SystemParams) -> Result<f64> {
    if x.is_nan() || x < 0.0 {
        return Err(Error::invalid("x", format!("CCDF argument must be >= 0, got {x}")));
    }
    Ok((-x * params.sum_r_alpha()).exp())
}
