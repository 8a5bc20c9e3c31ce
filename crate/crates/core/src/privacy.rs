//! Update clipping, the DP constraint on the power-scaling factor and the
//! power-control policies built on it.
//!
//! With channel inversion every client pre-scales by `b_i = √ρ / (r_i^(-α/2) h_i)`,
//! so the receiver sees `√(Gβρ) Σ s_i + n`. After decoding, the Gaussian
//! mechanism needs `σ_n/√(2Gβρ) ≥ S√(2 ln(1.25/δ))/ε`, which caps ρ.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::channel::{min_effective_gain, ChannelDraw};
use crate::error::{Error, Result};
use crate::sysconfig::{PrivacyTarget, SystemParams};

/// Norm used when clipping a weighted update to `S`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClipNorm {
    /// Flat clipping of the whole `D`-dimensional update.
    #[default]
    L2,
    /// Independent clipping of every coordinate.
    Linf,
}

/// Transmit symbols `s_i^(d)` for all clients of one round, stored client-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ClippedUpdate {
    num_clients: usize,
    num_slots: usize,
    symbols: Vec<f64>,
}

impl ClippedUpdate {
    pub fn from_clients(clients: Vec<Vec<f64>>) -> Result<Self> {
        let num_clients = clients.len();
        let num_slots = clients.first().map_or(0, Vec::len);
        if let Some(bad) = clients.iter().position(|c| c.len() != num_slots) {
            return Err(Error::Dimension(format!(
                "client {bad} has {} coordinates, expected {num_slots}",
                clients[bad].len()
            )));
        }
        Ok(ClippedUpdate {
            num_clients,
            num_slots,
            symbols: clients.into_iter().flatten().collect(),
        })
    }

    /// Every symbol equal to `value`.
    pub fn constant(num_clients: usize, num_slots: usize, value: f64) -> Self {
        ClippedUpdate {
            num_clients,
            num_slots,
            symbols: vec![value; num_clients * num_slots],
        }
    }

    pub fn num_clients(&self) -> usize {
        self.num_clients
    }

    pub fn num_slots(&self) -> usize {
        self.num_slots
    }

    pub fn client(&self, i: usize) -> &[f64] {
        &self.symbols[i * self.num_slots..(i + 1) * self.num_slots]
    }

    /// The `I` symbols sent in slot `d`.
    pub fn slot(&self, d: usize) -> Vec<f64> {
        (0..self.num_clients)
            .map(|i| self.symbols[i * self.num_slots + d])
            .collect()
    }

    /// `Σ_i s_i^(d)` for every slot.
    pub fn slot_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.num_slots];
        for i in 0..self.num_clients {
            for (acc, s) in sums.iter_mut().zip(self.client(i)) {
                *acc += s;
            }
        }
        sums
    }

    pub fn max_abs(&self) -> f64 {
        self.symbols.iter().fold(0.0, |m, s| m.max(s.abs()))
    }
}

/// `s_i = (w_i Δ_i / Σw) · min{1, S Σw / (w_i ‖Δ_i‖)}` with the L2 norm.
pub fn clip_update(delta: &[f64], weight: f64, weight_sum: f64, clip_threshold: f64) -> Result<Vec<f64>> {
    clip_update_with(ClipNorm::L2, delta, weight, weight_sum, clip_threshold)
}

pub fn clip_update_with(
    norm: ClipNorm,
    delta: &[f64],
    weight: f64,
    weight_sum: f64,
    clip_threshold: f64,
) -> Result<Vec<f64>> {
    if !(weight.is_finite() && weight > 0.0) {
        return Err(Error::invalid(
            "weight",
            format!("must be finite and > 0, got {weight}"),
        ));
    }
    if !(weight_sum.is_finite() && weight_sum >= weight) {
        return Err(Error::invalid(
            "weight_sum",
            format!("must be finite and >= the client weight {weight}, got {weight_sum}"),
        ));
    }
    if clip_threshold.is_nan() || clip_threshold <= 0.0 {
        return Err(Error::invalid(
            "clip_threshold",
            format!("must be > 0, got {clip_threshold}"),
        ));
    }
    if let Some(d) = delta.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite(format!("update coordinate {d}")));
    }
    let share = weight / weight_sum;
    let mut s: Vec<f64> = delta.iter().map(|x| share * x).collect();
    match norm {
        ClipNorm::L2 => {
            let n = s.iter().map(|x| x * x).sum::<f64>().sqrt();
            if n > clip_threshold {
                let factor = clip_threshold / n;
                s.iter_mut().for_each(|x| *x *= factor);
                // rounding can land one ulp above the threshold
                s.iter_mut().for_each(|x| *x = x.clamp(-clip_threshold, clip_threshold));
            }
        }
        ClipNorm::Linf => {
            s.iter_mut().for_each(|x| *x = x.clamp(-clip_threshold, clip_threshold));
        }
    }
    Ok(s)
}

/// Query sensitivity of slot `d`: `max_k |s_k^(d)|`.
pub fn sensitivity(s: &ClippedUpdate, d: usize) -> f64 {
    (0..s.num_clients()).map(|i| s.client(i)[d].abs()).fold(0.0, f64::max)
}

/// Effective-gain threshold `g_th = σ_n²ε² / (4GβP0 ln(1.25/δ))` where the
/// DP cap takes over from the weakest channel.
pub fn gain_threshold(params: &SystemParams, target: &PrivacyTarget) -> f64 {
    params.noise_power * target.epsilon().powi(2) / (4.0 * params.link_gain() * params.max_tx_power * target.log_term())
}

/// DP branch of the policies divided by `P0`.
fn dp_branch(params: &SystemParams, target: &PrivacyTarget) -> f64 {
    gain_threshold(params, target) / target.clip_threshold().powi(2)
}

/// Largest ρ for which the decoded sum is `(ε, δ)`-DP:
/// `σ_n²ε² / (4GβS² ln(1.25/δ))`.
pub fn dp_rho_cap(params: &SystemParams, target: &PrivacyTarget) -> f64 {
    params.max_tx_power * dp_branch(params, target)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerPolicy {
    /// Full-power channel inversion, no privacy constraint.
    Conventional,
    /// DP-capped channel inversion using every client's symbol.
    DpStar,
    /// DP-capped channel inversion assuming saturated symbols; needs no `s_i`.
    DpStarStar,
}

impl PowerPolicy {
    pub fn name(self) -> &'static str {
        match self {
            PowerPolicy::Conventional => "conventional",
            PowerPolicy::DpStar => "dp_star",
            PowerPolicy::DpStarStar => "dp_star_star",
        }
    }

    /// Power-scaling factor of this policy for one slot.
    pub fn scaling(
        self,
        params: &SystemParams,
        target: &PrivacyTarget,
        draw: &ChannelDraw,
        slot: &[f64],
    ) -> PowerScaling {
        match self {
            PowerPolicy::Conventional => rho_conventional(params, draw, slot),
            PowerPolicy::DpStar => rho_star(params, target, draw, slot),
            PowerPolicy::DpStarStar => rho_star_star(params, target, draw),
        }
    }

    /// Whether the factor depends on the slot's symbols.
    pub fn uses_symbols(self) -> bool {
        !matches!(self, PowerPolicy::DpStarStar)
    }
}

impl fmt::Display for PowerPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for PowerPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "conventional" => Ok(PowerPolicy::Conventional),
            "dp_star" => Ok(PowerPolicy::DpStar),
            "dp_star_star" => Ok(PowerPolicy::DpStarStar),
            other => Err(Error::invalid("policy", format!("unknown policy `{other}`"))),
        }
    }
}

/// A power-scaling factor together with the policy that produced it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerScaling {
    /// May be `+inf` for symbol-aware policies when every symbol is zero.
    pub rho: f64,
    pub policy: PowerPolicy,
    /// True when the DP cap, not the channel, set the value.
    pub dp_capped: bool,
}

/// `min_i r_i^(-α)|h_i|² / |s_i|²`, skipping silent clients.
fn channel_branch(params: &SystemParams, draw: &ChannelDraw, slot: &[f64]) -> f64 {
    debug_assert_eq!(slot.len(), draw.len());
    draw.effective_gains(params)
        .zip(slot)
        .filter(|(_, s)| **s != 0.0)
        .map(|(g, s)| g / (s * s))
        .fold(f64::INFINITY, f64::min)
}

/// `ρ* = P0 min{ min_i r_i^(-α)|h_i|²/|s_i|², σ_n²ε²/(4GβP0 S² ln(1.25/δ)) }`.
pub fn rho_star(params: &SystemParams, target: &PrivacyTarget, draw: &ChannelDraw, slot: &[f64]) -> PowerScaling {
    let channel = channel_branch(params, draw, slot);
    let dp = dp_branch(params, target);
    PowerScaling {
        rho: params.max_tx_power * channel.min(dp),
        policy: PowerPolicy::DpStar,
        dp_capped: dp <= channel,
    }
}

/// `ρ** = (P0/S²) min{ min_i r_i^(-α)|h_i|², g_th }`.
pub fn rho_star_star(params: &SystemParams, target: &PrivacyTarget, draw: &ChannelDraw) -> PowerScaling {
    let s2 = target.clip_threshold().powi(2);
    let channel = min_effective_gain(draw, params).value() / s2;
    let dp = dp_branch(params, target);
    PowerScaling {
        rho: params.max_tx_power * channel.min(dp),
        policy: PowerPolicy::DpStarStar,
        dp_capped: dp <= channel,
    }
}

/// `ρ_conv = P0 min_i r_i^(-α)|h_i|² / |s_i|²`: transmit at the power limit.
pub fn rho_conventional(params: &SystemParams, draw: &ChannelDraw, slot: &[f64]) -> PowerScaling {
    PowerScaling {
        rho: params.max_tx_power * channel_branch(params, draw, slot),
        policy: PowerPolicy::Conventional,
        dp_capped: false,
    }
}

/// Privacy level reached at scaling `rho`: the DP cap solved for ε,
/// `ε = 2S √(Gβρ ln(1.25/δ)) / σ_n`.
pub fn epsilon_achieved(params: &SystemParams, rho: f64, clip_threshold: f64, delta: f64) -> Result<f64> {
    if rho.is_nan() || rho < 0.0 {
        return Err(Error::invalid("rho", format!("must be >= 0, got {rho}")));
    }
    if !(delta > 0.0 && delta < 1.25) {
        return Err(Error::invalid("delta", format!("must lie in (0, 1.25), got {delta}")));
    }
    let log_term = (1.25 / delta).ln();
    Ok(2.0 * clip_threshold * (params.link_gain() * rho * log_term).sqrt() / params.noise_power.sqrt())
}

/// Transmit power `|b_i s_i|² = ρ|s_i|² / (r_i^(-α)|h_i|²)` of every client.
///
/// Silent clients report zero. A client with an exactly zero channel gain
/// cannot be inverted; it is excluded and also reports zero.
pub fn tx_power_per_client(rho: f64, draw: &ChannelDraw, slot: &[f64], params: &SystemParams) -> Vec<f64> {
    draw.effective_gains(params)
        .zip(slot)
        .map(|(g, s)| {
            if *s == 0.0 {
                0.0
            } else if g == 0.0 {
                log::warn!("client with zero channel gain excluded from transmission");
                0.0
            } else {
                rho * s * s / g
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::draw_channel;
    use crate::rng::Seed;
    use num_complex::Complex64;
    use proptest::prelude::*;

    const S: f64 = 5e-5;

    fn reference() -> (SystemParams, PrivacyTarget) {
        (SystemParams::reference(5), PrivacyTarget::new(0.01, 0.1, S).unwrap())
    }

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn clip_below_threshold_is_identity() {
        // weighted update (S/2, 0)
        let out = clip_update(&[S / 2.0 * 4.0, 0.0], 1.0, 4.0, S).unwrap();
        assert_eq!(out, vec![S / 2.0, 0.0]);
    }

    #[test]
    fn clip_scales_to_threshold() {
        let out = clip_update(&[2.0 * S * 3.0, 0.0, 0.0], 1.0, 3.0, S).unwrap();
        assert!(rel(out[0], S) < 1e-15);
        assert_eq!(&out[1..], &[0.0, 0.0]);
    }

    #[test]
    fn clip_three_four_five() {
        let (w, wsum) = (2.0, 7.0);
        let out = clip_update(&[3.0 * wsum / w, 4.0 * wsum / w], w, wsum, 1.0).unwrap();
        assert!((out[0] - 0.6).abs() < 1e-15);
        assert!((out[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn clip_zero_and_errors() {
        assert_eq!(clip_update(&[0.0; 4], 1.0, 2.0, S).unwrap(), vec![0.0; 4]);
        assert!(clip_update(&[f64::NAN], 1.0, 2.0, S).is_err());
        assert!(clip_update(&[1.0], 0.0, 2.0, S).is_err());
        assert!(clip_update(&[1.0], 3.0, 2.0, S).is_err());
        assert!(clip_update(&[1.0], 1.0, 2.0, 0.0).is_err());
    }

    #[test]
    fn unbounded_threshold_disables_clipping() {
        let out = clip_update(&[10.0, -20.0], 1.0, 2.0, f64::INFINITY).unwrap();
        assert_eq!(out, vec![5.0, -10.0]);
    }

    #[test]
    fn linf_clips_coordinates() {
        let out = clip_update_with(ClipNorm::Linf, &[4.0, -1.0, 0.5], 1.0, 1.0, 1.0).unwrap();
        assert_eq!(out, vec![1.0, -1.0, 0.5]);
    }

    #[test]
    fn sensitivity_is_max_magnitude() {
        let s = ClippedUpdate::from_clients(vec![vec![0.1 * S, 0.0], vec![-0.4 * S, 0.0], vec![0.2 * S, 0.0]]).unwrap();
        assert!(rel(sensitivity(&s, 0), 0.4 * S) < 1e-15);
        assert_eq!(sensitivity(&s, 1), 0.0);
    }

    #[test]
    fn dp_cap_reference_value() {
        let (p, t) = reference();
        assert!(rel(dp_rho_cap(&p, &t), 0.15762) < 1e-4);
        let t2 = t.with_epsilon(0.02).unwrap();
        assert!(rel(dp_rho_cap(&p, &t2), 4.0 * dp_rho_cap(&p, &t)) < 1e-14);
        let t3 = t.with_clip_threshold(2.0 * S).unwrap();
        assert!(rel(dp_rho_cap(&p, &t3), 0.25 * dp_rho_cap(&p, &t)) < 1e-14);
    }

    #[test]
    fn gain_threshold_matches_cap() {
        let (p, t) = reference();
        let g_th = gain_threshold(&p, &t);
        assert!(rel(g_th, 3.9404e-8) < 1e-4);
        let dp_value = p.max_tx_power / (S * S) * g_th;
        assert!(rel(dp_value, 0.157617) < 1e-4);
        assert!(rel(dp_value, dp_rho_cap(&p, &t)) < 1e-6);
    }

    #[test]
    fn saturated_rho_star_equals_rho_star_star() {
        let (p, t) = reference();
        let mut rng = Seed(4).rng();
        for _ in 0..1000 {
            let draw = draw_channel(&mut rng, &p);
            let a = rho_star(&p, &t, &draw, &[S; 5]);
            let b = rho_star_star(&p, &t, &draw);
            assert_eq!(a.rho, b.rho);
            assert_eq!(a.dp_capped, b.dp_capped);
        }
    }

    #[test]
    fn dp_branch_selection() {
        let (p, t) = reference();
        // strong channels: the cap binds
        let draw = ChannelDraw::from_gains(vec![Complex64::new(1.0, 0.0); 5]);
        let r = rho_star(&p, &t, &draw, &[S; 5]);
        assert!(r.dp_capped);
        assert_eq!(r.rho, dp_rho_cap(&p, &t));
        // one deep fade below g_th: channel branch
        let mut gains = vec![Complex64::new(1.0, 0.0); 5];
        gains[2] = Complex64::new(1e-3, 0.0);
        let draw = ChannelDraw::from_gains(gains);
        let r = rho_star_star(&p, &t, &draw);
        assert!(!r.dp_capped);
        let g = 1e-4 * 1e-6;
        assert!(rel(r.rho, p.max_tx_power * g / (S * S)) < 1e-12);
    }

    #[test]
    fn rho_star_against_direct_formula() {
        let (p, t) = reference();
        let draw = draw_channel(&mut Seed(77).rng(), &p);
        let slot = [0.3 * S, -0.9 * S, 0.05 * S, S, -0.5 * S];
        let direct_channel = (0..5)
            .map(|i| 100f64.powi(-2) * draw.gains()[i].norm_sqr() / (slot[i] * slot[i]))
            .fold(f64::INFINITY, f64::min);
        let direct_dp = 1e-9 / (4.0 * 10f64.powf(-4.6) * 0.01) * 1e-4 / (S * S * (12.5f64).ln());
        let expected = 0.01 * direct_channel.min(direct_dp);
        assert!(rel(rho_star(&p, &t, &draw, &slot).rho, expected) < 1e-12);
        assert!(rel(rho_conventional(&p, &draw, &slot).rho, 0.01 * direct_channel) < 1e-12);
    }

    #[test]
    fn silent_clients_are_excluded() {
        let (p, t) = reference();
        let draw = draw_channel(&mut Seed(5).rng(), &p);
        let r = rho_star(&p, &t, &draw, &[0.0; 5]);
        assert!(r.dp_capped);
        assert_eq!(r.rho, dp_rho_cap(&p, &t));
        assert_eq!(rho_conventional(&p, &draw, &[0.0; 5]).rho, f64::INFINITY);
        let mut slot = [0.0; 5];
        slot[3] = S;
        let expected = p.max_tx_power * p.path_gain(3) * draw.gains()[3].norm_sqr() / (S * S);
        assert!(rel(rho_conventional(&p, &draw, &slot).rho, expected) < 1e-12);
    }

    #[test]
    fn conventional_saturates_power() {
        let (p, _) = reference();
        let draw = draw_channel(&mut Seed(6).rng(), &p);
        let slot = [S; 5];
        let g = min_effective_gain(&draw, &p).value();
        assert!(rel(rho_conventional(&p, &draw, &slot).rho, p.max_tx_power * g / (S * S)) < 1e-12);

        let slot = [0.2 * S, -0.7 * S, 0.0, 0.4 * S, S];
        let rho = rho_conventional(&p, &draw, &slot).rho;
        let powers = tx_power_per_client(rho, &draw, &slot, &p);
        assert_eq!(powers[2], 0.0);
        let max = powers.iter().cloned().fold(0.0, f64::max);
        assert!(rel(max, p.max_tx_power) < 1e-9);
    }

    #[test]
    fn epsilon_inverse() {
        let (p, t) = reference();
        assert_eq!(epsilon_achieved(&p, 0.0, S, 0.1).unwrap(), 0.0);
        let cap = dp_rho_cap(&p, &t);
        assert!(rel(epsilon_achieved(&p, cap, S, 0.1).unwrap(), 0.01) < 1e-9);
        assert!(rel(epsilon_achieved(&p, 4.0 * cap, S, 0.1).unwrap(), 0.02) < 1e-9);
        assert!(epsilon_achieved(&p, -1.0, S, 0.1).is_err());
        assert!(epsilon_achieved(&p, 1.0, S, 1.3).is_err());
    }

    fn clipped_slot(raw: &[f64]) -> Vec<f64> {
        raw.iter().map(|x| x * S).collect()
    }

    proptest! {
        #[test]
        fn clipped_norm_is_bounded(
            delta in prop::collection::vec(-1e3f64..1e3, 1..40),
            w in 0.1f64..10.0,
            extra in 0.0f64..100.0,
            clip in 1e-6f64..10.0,
        ) {
            let out = clip_update(&delta, w, w + extra, clip).unwrap();
            let n = out.iter().map(|x| x * x).sum::<f64>().sqrt();
            prop_assert!(n <= clip * (1.0 + 1e-12));
            prop_assert!(out.iter().all(|x| x.abs() <= clip));
            // clipped output is a fixed point
            let again = clip_update(&out, 1.0, 1.0, clip).unwrap();
            for (a, b) in again.iter().zip(&out) {
                prop_assert!((a - b).abs() <= 1e-12 * clip);
            }
        }

        #[test]
        fn policy_ordering(seed in any::<u64>(), raw in prop::collection::vec(-1.0f64..1.0, 5), eps in 0.001f64..2.0) {
            let (p, t) = reference();
            let t = t.with_epsilon(eps).unwrap();
            let draw = draw_channel(&mut Seed(seed).rng(), &p);
            let slot = clipped_slot(&raw);
            let ss = rho_star_star(&p, &t, &draw).rho;
            let s = rho_star(&p, &t, &draw, &slot).rho;
            let c = rho_conventional(&p, &draw, &slot).rho;
            prop_assert!(ss <= s);
            prop_assert!(s <= c);
            let cap = dp_rho_cap(&p, &t);
            prop_assert!(ss <= cap && s <= cap);
            for power in tx_power_per_client(ss, &draw, &slot, &p) {
                prop_assert!(power <= p.max_tx_power * (1.0 + 1e-12));
            }
        }

        #[test]
        fn permutation_invariance(seed in any::<u64>(), raw in prop::collection::vec(-1.0f64..1.0, 5), shift in 0usize..5) {
            let (p, t) = reference();
            let draw = draw_channel(&mut Seed(seed).rng(), &p);
            let slot = clipped_slot(&raw);
            let mut gains = draw.gains().to_vec();
            gains.rotate_left(shift);
            let mut rotated = slot.clone();
            rotated.rotate_left(shift);
            let draw2 = ChannelDraw::from_gains(gains);
            prop_assert_eq!(rho_star_star(&p, &t, &draw).rho, rho_star_star(&p, &t, &draw2).rho);
            prop_assert_eq!(rho_star(&p, &t, &draw, &slot).rho, rho_star(&p, &t, &draw2, &rotated).rho);
            prop_assert_eq!(rho_conventional(&p, &draw, &slot).rho, rho_conventional(&p, &draw2, &rotated).rho);
        }

        #[test]
        fn epsilon_round_trip(eps in 1e-4f64..10.0, delta in 1e-6f64..0.99) {
            let p = SystemParams::reference(5);
            let t = PrivacyTarget::new(eps, delta, S).unwrap();
            let back = epsilon_achieved(&p, dp_rho_cap(&p, &t), S, delta).unwrap();
            prop_assert!(((back - eps) / eps).abs() < 1e-9);
        }
    }
}
