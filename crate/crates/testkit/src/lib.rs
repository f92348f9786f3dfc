//! Verification oracles for the spikefed test suites.
//!
//! Every function here recomputes a quantity the library also computes, but
//! through a structurally different route: forward-mode tangents instead of
//! the reverse adjoint sweep, finite differences instead of analytic
//! gradients, full sorts instead of partial selection, grid scans instead of
//! halving searches. Test code compares the two routes; nothing in here is
//! called by the library itself.

pub mod gradcheck;
pub mod search;
pub mod sparse;

/// Max-norm difference scaled by the reference's largest magnitude.
pub fn scaled_max_err(got: &[f32], want: &[f64]) -> f64 {
    assert_eq!(got.len(), want.len(), "gradient lengths differ");
    let scale = want
        .iter()
        .map(|w| w.abs())
        .fold(0.0f64, f64::max)
        .max(1e-12);
    got.iter()
        .zip(want)
        .map(|(&g, &w)| (g as f64 - w).abs())
        .fold(0.0f64, f64::max)
        / scale
}
