//! Gradient oracles: a fully-unrolled forward-mode tangent computation for
//! the spiking model and an f64 finite-difference reference for the dense
//! model.

use spikefed::nn::{ForwardTrace, LifParams, MlpTopology, ParameterVector};

fn softmax64(v: &[f64]) -> Vec<f64> {
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = v.iter().map(|&x| (x - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

fn surrogate64(u: f64, slope: f64, u_thr: f64) -> f64 {
    let d = 1.0 + slope * (u - u_thr).abs();
    1.0 / (d * d)
}

/// Gradient of the rate-coded cross-entropy loss along the recorded spike
/// trajectory, computed by propagating one tangent per parameter forward
/// through the unrolled dynamics (no adjoint recursion anywhere).
///
/// Scales as O(P^2 * T), so only suitable for small instances.
pub fn snn_grad_forward_mode(
    trace: &ForwardTrace,
    params: &ParameterVector,
    topo: &MlpTopology,
    lif: &LifParams,
    label: usize,
) -> Vec<f64> {
    let num_layers = topo.num_weight_layers();
    let widths: Vec<usize> = topo.layer_sizes[1..].to_vec();
    let t_steps = trace.timesteps;
    let slope = lif.surrogate_slope as f64;
    let u_thr = lif.u_thr as f64;
    let beta = lif.beta as f64;

    // Loss seed: dL/dcount_i = (softmax(count/T) - onehot)_i / T.
    let counts = trace.output_counts();
    let rates: Vec<f64> = counts.iter().map(|&c| c as f64 / t_steps as f64).collect();
    let mut seed = softmax64(&rates);
    seed[label] -= 1.0;
    for s in &mut seed {
        *s /= t_steps as f64;
    }

    // Recorded drive of layer `l` at timestep `t`.
    let drive = |l: usize, t: usize, j: usize| -> f64 {
        if l == 0 {
            trace.input_frames[t * trace.input_dim + j] as f64
        } else {
            trace.spike(l - 1, t, j) as f64
        }
    };

    let mut grads = vec![0.0f64; params.dim()];
    for (pi, grad_out) in grads.iter_mut().enumerate() {
        // Locate the parameter inside the layout.
        let slice = *params
            .layout
            .iter()
            .find(|s| (s.offset..s.offset + s.len()).contains(&pi))
            .expect("parameter index inside layout");
        let within = pi - slice.offset;
        let (pj, pcol) = (within / slice.cols, within % slice.cols);

        let mut tu_prev: Vec<Vec<f64>> = widths.iter().map(|&w| vec![0.0; w]).collect();
        let mut ts_prev: Vec<Vec<f64>> = widths.iter().map(|&w| vec![0.0; w]).collect();
        let mut tangent = 0.0f64;

        for t in 0..t_steps {
            let mut ts_cur: Vec<Vec<f64>> = Vec::with_capacity(num_layers);
            for l in 0..num_layers {
                let wslice = params.layout[l];
                let w = params.layer(l);
                let width = widths[l];
                let mut tu = vec![0.0f64; width];
                for (i, tui) in tu.iter_mut().enumerate() {
                    // Tangent of the weighted input: through the previous
                    // layer's spike tangents, plus the direct term when this
                    // is the perturbed weight's layer and column.
                    let mut ta = 0.0f64;
                    if l > 0 {
                        for j in 0..wslice.rows {
                            ta += w[j * wslice.cols + i] as f64 * ts_cur[l - 1][j];
                        }
                    }
                    if l == slice.layer && i == pcol {
                        ta += drive(l, t, pj);
                    }
                    *tui = ta + beta * tu_prev[l][i] - u_thr * ts_prev[l][i];
                }
                let ts: Vec<f64> = (0..width)
                    .map(|i| surrogate64(trace.potential(l, t, i) as f64, slope, u_thr) * tu[i])
                    .collect();
                if l == num_layers - 1 {
                    for (i, &tsi) in ts.iter().enumerate() {
                        tangent += seed[i] * tsi;
                    }
                }
                tu_prev[l] = tu;
                ts_cur.push(ts);
            }
            ts_prev = ts_cur;
        }
        *grad_out = tangent;
    }
    grads
}

/// Dense forward pass and softmax cross-entropy entirely in f64, over an
/// explicit f64 weight vector (each block carries a trailing bias row).
/// Used as the function under finite differencing.
pub fn dense_loss_f64(weights: &[f64], topo: &MlpTopology, input: &[f32], label: usize) -> f64 {
    let num_layers = topo.num_weight_layers();
    let mut x: Vec<f64> = input.iter().map(|&v| v as f64).collect();
    let mut offset = 0usize;
    for l in 0..num_layers {
        let rows = topo.layer_sizes[l];
        let cols = topo.layer_sizes[l + 1];
        let mut z = vec![0.0f64; cols];
        for (j, &xj) in x.iter().enumerate() {
            for (i, zi) in z.iter_mut().enumerate() {
                *zi += xj * weights[offset + j * cols + i];
            }
        }
        for (i, zi) in z.iter_mut().enumerate() {
            *zi += weights[offset + rows * cols + i];
        }
        offset += (rows + 1) * cols;
        if l + 1 == num_layers {
            let probs = softmax64(&z);
            return -probs[label].ln();
        }
        x = z.into_iter().map(|v| v.max(0.0)).collect();
    }
    unreachable!("topology has at least one layer");
}

/// Central finite differences of [`dense_loss_f64`] at `weights`.
pub fn dense_grad_central_diff(
    weights: &[f64],
    topo: &MlpTopology,
    input: &[f32],
    label: usize,
    h: f64,
) -> Vec<f64> {
    let mut grad = vec![0.0f64; weights.len()];
    let mut w = weights.to_vec();
    for (i, g) in grad.iter_mut().enumerate() {
        let orig = w[i];
        w[i] = orig + h;
        let hi = dense_loss_f64(&w, topo, input, label);
        w[i] = orig - h;
        let lo = dense_loss_f64(&w, topo, input, label);
        w[i] = orig;
        *g = (hi - lo) / (2.0 * h);
    }
    grad
}

/// Smallest |preactivation| across hidden layers; finite-difference checks
/// resample instances where this is close to the ReLU kink.
pub fn min_hidden_preactivation(weights: &[f64], topo: &MlpTopology, input: &[f32]) -> f64 {
    let num_layers = topo.num_weight_layers();
    let mut x: Vec<f64> = input.iter().map(|&v| v as f64).collect();
    let mut offset = 0usize;
    let mut min_abs = f64::INFINITY;
    for l in 0..num_layers {
        let rows = topo.layer_sizes[l];
        let cols = topo.layer_sizes[l + 1];
        let mut z = vec![0.0f64; cols];
        for (j, &xj) in x.iter().enumerate() {
            for (i, zi) in z.iter_mut().enumerate() {
                *zi += xj * weights[offset + j * cols + i];
            }
        }
        for (i, zi) in z.iter_mut().enumerate() {
            *zi += weights[offset + rows * cols + i];
        }
        offset += (rows + 1) * cols;
        if l + 1 == num_layers {
            break;
        }
        for &zi in &z {
            min_abs = min_abs.min(zi.abs());
        }
        x = z.into_iter().map(|v| v.max(0.0)).collect();
    }
    min_abs
}
