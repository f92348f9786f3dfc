//! Leaky integrate-and-fire dynamics and the surrogate spike derivative.

use crate::error::{Error, Result};
use alloc::format;

/// LIF neuron constants shared by every neuron in a spiking model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LifParams {
    /// Leak factor applied to the previous membrane potential, 0 < beta < 1.
    pub beta: f32,
    /// Firing threshold, also the amount subtracted on reset.
    pub u_thr: f32,
    /// Number of simulation timesteps per forward pass.
    pub timesteps: usize,
    /// Slope of the fast-sigmoid surrogate derivative.
    pub surrogate_slope: f32,
}

impl LifParams {
    /// beta 0.99, threshold 1, 25 timesteps, slope 25.
    pub fn defaults() -> Self {
        Self {
            beta: 0.99,
            u_thr: 1.0,
            timesteps: 25,
            surrogate_slope: 25.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::Config(format!("beta must be in (0,1), got {}", self.beta)));
        }
        if !(self.u_thr > 0.0) {
            return Err(Error::Config(format!("u_thr must be positive, got {}", self.u_thr)));
        }
        if self.timesteps == 0 {
            return Err(Error::Config("timesteps must be at least 1".into()));
        }
        if !(self.surrogate_slope > 0.0) {
            return Err(Error::Config(format!(
                "surrogate_slope must be positive, got {}",
                self.surrogate_slope
            )));
        }
        Ok(())
    }
}

/// One membrane update: integrate the weighted input, leak the previous
/// potential, subtract the threshold if the neuron fired last step, then
/// threshold.
#[inline]
pub fn lif_step(u_prev: f32, weighted_input: f32, s_prev: bool, p: &LifParams) -> (f32, bool) {
    let reset = if s_prev { p.u_thr } else { 0.0 };
    let u = weighted_input + p.beta * u_prev - reset;
    (u, u > p.u_thr)
}

/// Fast-sigmoid surrogate for the spike derivative:
/// `1 / (1 + slope*|u - u_thr|)^2`. Peaks at 1 on the threshold.
#[inline]
pub fn surrogate_derivative(u: f32, p: &LifParams) -> f32 {
    surrogate_derivative_f64(u as f64, p.surrogate_slope as f64, p.u_thr as f64) as f32
}

#[inline]
pub(crate) fn surrogate_derivative_f64(u: f64, slope: f64, u_thr: f64) -> f64 {
    let denom = 1.0 + slope * (u - u_thr).abs();
    1.0 / (denom * denom)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(beta: f32, u_thr: f32) -> LifParams {
        LifParams {
            beta,
            u_thr,
            timesteps: 4,
            surrogate_slope: 25.0,
        }
    }

    #[test]
    fn zero_state_zero_input_stays_silent() {
        let (u, s) = lif_step(0.0, 0.0, false, &p(0.99, 1.0));
        assert_eq!(u, 0.0);
        assert!(!s);
    }

    #[test]
    fn four_step_hand_unrolled_chain() {
        // beta=0.5, threshold=1, constant input 0.6: fires at t3, resets.
        let params = p(0.5, 1.0);
        let input = 0.6f32;

        let (u1, s1) = lif_step(0.0, input, false, &params);
        let (u2, s2) = lif_step(u1, input, s1, &params);
        let (u3, s3) = lif_step(u2, input, s2, &params);
        let (u4, s4) = lif_step(u3, input, s3, &params);

        // Exact recurrence values in f32.
        let e1 = input;
        let e2 = input + 0.5f32 * e1;
        let e3 = input + 0.5f32 * e2;
        let e4 = input + 0.5f32 * e3 - 1.0f32;
        assert_eq!([u1, u2, u3, u4], [e1, e2, e3, e4]);
        assert_eq!([s1, s2, s3, s4], [false, false, true, false]);

        // And the hand-derived decimals.
        for (u, want) in [(u1, 0.6), (u2, 0.9), (u3, 1.05), (u4, 0.125)] {
            assert!((u - want).abs() < 1e-6, "got {u}, want {want}");
        }
    }

    #[test]
    fn reset_pulls_membrane_back_below_threshold() {
        // 0.5*2 - 1 = 0, not above threshold.
        let (u, s) = lif_step(2.0, 0.0, true, &p(0.5, 1.0));
        assert_eq!(u, 0.0);
        assert!(!s);
    }

    #[test]
    fn surrogate_peaks_at_threshold() {
        let params = p(0.5, 1.0);
        assert_eq!(surrogate_derivative(1.0, &params), 1.0);
        // slope=25, offset 0.04 -> 1/(1+1)^2.
        assert!((surrogate_derivative(1.04, &params) - 0.25).abs() < 1e-6);
        assert!((surrogate_derivative(0.96, &params) - 0.25).abs() < 1e-6);
    }

    #[test]
    fn surrogate_positive_even_and_decaying() {
        let params = p(0.5, 1.0);
        let mut last = surrogate_derivative(1.0, &params);
        for i in 1..200 {
            let off = i as f32 * 0.25;
            let hi = surrogate_derivative(1.0 + off, &params);
            let lo = surrogate_derivative(1.0 - off, &params);
            assert!(hi > 0.0);
            assert!((hi - lo).abs() < 1e-9, "even about the threshold");
            assert!(hi < last, "monotone decay away from the threshold");
            last = hi;
        }
    }

    #[test]
    fn params_validation() {
        assert!(LifParams::defaults().validate().is_ok());
        for bad in [
            LifParams { beta: 1.0, ..LifParams::defaults() },
            LifParams { beta: 0.0, ..LifParams::defaults() },
            LifParams { u_thr: 0.0, ..LifParams::defaults() },
            LifParams { timesteps: 0, ..LifParams::defaults() },
            LifParams { surrogate_slope: 0.0, ..LifParams::defaults() },
        ] {
            assert!(bad.validate().is_err(), "{bad:?} should fail validation");
        }
    }
}
