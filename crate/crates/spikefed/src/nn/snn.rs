//! Spiking MLP: forward unroll over timesteps and surrogate-gradient BPTT.
//!
//! Dynamics per neuron and timestep: the weighted input of the current frame
//! is integrated on top of the leaked previous potential, minus a threshold
//! subtraction if the neuron fired on the previous step. Spikes propagate to
//! the next layer within the same timestep. The training signal is softmax
//! cross-entropy on output spike rates (counts / T).

use super::lif::{surrogate_derivative_f64, LifParams};
use super::params::ParameterVector;
use super::{MlpTopology, ModelKind};
use crate::data::{EncodedInput, InputEncoding};
use crate::error::{Error, Result};
use crate::math;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

/// Complete per-timestep state of one forward pass, kept for BPTT.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    /// Widths of the spiking layers (every layer after the input).
    pub widths: Vec<usize>,
    pub timesteps: usize,
    /// Per spiking layer: membrane potentials, `timesteps * width`, t-major.
    pub potentials: Vec<Vec<f32>>,
    /// Per spiking layer: spikes as 0.0/1.0, same shape as `potentials`.
    pub spikes: Vec<Vec<f32>>,
    /// The encoded input frames that drove the pass, `timesteps * input_dim`.
    pub input_frames: Vec<f32>,
    pub input_dim: usize,
    pub encoding: InputEncoding,
}

impl ForwardTrace {
    pub fn potential(&self, layer: usize, t: usize, i: usize) -> f32 {
        self.potentials[layer][t * self.widths[layer] + i]
    }

    pub fn spike(&self, layer: usize, t: usize, i: usize) -> f32 {
        self.spikes[layer][t * self.widths[layer] + i]
    }

    /// Output spike counts summed over time.
    pub fn output_counts(&self) -> Vec<u32> {
        let last = self.widths.len() - 1;
        let width = self.widths[last];
        let mut counts = vec![0u32; width];
        for t in 0..self.timesteps {
            for i in 0..width {
                counts[i] += self.spike(last, t, i) as u32;
            }
        }
        counts
    }
}

/// `out[i] = sum_j x[j] * w[j*cols + i]`, accumulated in f32.
/// Zero drive rows (silent neurons) are skipped.
fn weighted_input(w: &[f32], rows: usize, cols: usize, x: &[f32], out: &mut [f32]) {
    out.fill(0.0);
    for j in 0..rows {
        let xj = x[j];
        if xj == 0.0 {
            continue;
        }
        let row = &w[j * cols..(j + 1) * cols];
        for (o, &wji) in out.iter_mut().zip(row) {
            *o += xj * wji;
        }
    }
}

/// Unroll the LIF network over the encoded input. Membrane potentials start
/// at zero. Returns output spike counts and the full trace.
pub fn snn_forward(
    params: &ParameterVector,
    input: &EncodedInput,
    topo: &MlpTopology,
    lif: &LifParams,
) -> Result<(Vec<u32>, ForwardTrace)> {
    if topo.kind != ModelKind::Spiking {
        return Err(Error::Config("snn_forward needs a spiking topology".to_string()));
    }
    if input.dim != topo.input_dim() {
        return Err(Error::Shape {
            what: "snn input dimension",
            expected: topo.input_dim(),
            got: input.dim,
        });
    }
    if input.timesteps != lif.timesteps {
        return Err(Error::Shape {
            what: "encoded timesteps",
            expected: lif.timesteps,
            got: input.timesteps,
        });
    }
    if params.dim() != topo.param_count() {
        return Err(Error::Shape {
            what: "snn parameters",
            expected: topo.param_count(),
            got: params.dim(),
        });
    }

    let num_layers = topo.num_weight_layers();
    let widths: Vec<usize> = topo.layer_sizes[1..].to_vec();
    let t_steps = lif.timesteps;

    let mut potentials: Vec<Vec<f32>> = widths.iter().map(|&w| vec![0.0; t_steps * w]).collect();
    let mut spikes: Vec<Vec<f32>> = widths.iter().map(|&w| vec![0.0; t_steps * w]).collect();

    // Rolling state per layer.
    let mut u_prev: Vec<Vec<f32>> = widths.iter().map(|&w| vec![0.0; w]).collect();
    let mut s_prev: Vec<Vec<f32>> = widths.iter().map(|&w| vec![0.0; w]).collect();
    let mut drive: Vec<f32> = Vec::new();
    let mut acc: Vec<f32> = vec![0.0; *widths.iter().max().unwrap()];

    for t in 0..t_steps {
        drive.clear();
        drive.extend_from_slice(input.frame(t));
        for l in 0..num_layers {
            let slice = params.layout[l];
            let w = params.layer(l);
            let width = widths[l];
            let a = &mut acc[..width];
            weighted_input(w, slice.rows, slice.cols, &drive, a);

            let pot = &mut potentials[l][t * width..(t + 1) * width];
            let spk = &mut spikes[l][t * width..(t + 1) * width];
            for i in 0..width {
                let reset = s_prev[l][i] * lif.u_thr;
                let u = a[i] + lif.beta * u_prev[l][i] - reset;
                let s = if u > lif.u_thr { 1.0 } else { 0.0 };
                pot[i] = u;
                spk[i] = s;
                u_prev[l][i] = u;
                s_prev[l][i] = s;
            }
            drive.clear();
            drive.extend_from_slice(spk);
        }
    }

    let trace = ForwardTrace {
        widths,
        timesteps: t_steps,
        potentials,
        spikes,
        input_frames: input.frames.clone(),
        input_dim: input.dim,
        encoding: input.encoding,
    };
    Ok((trace.output_counts(), trace))
}

/// Softmax cross-entropy over spike rates `counts / timesteps`.
pub fn loss_rate_ce(counts: &[u32], timesteps: usize, label: usize) -> f64 {
    let rates: Vec<f64> = counts.iter().map(|&c| c as f64 / timesteps as f64).collect();
    let probs = softmax(&rates);
    -math::ln(probs[label])
}

/// Gradient seed of the rate loss with respect to each output spike:
/// `(softmax(rates) - onehot(label)) / timesteps`, identical for every
/// timestep because counts are a plain sum over time.
pub(crate) fn rate_loss_seed(counts: &[u32], timesteps: usize, label: usize) -> Vec<f64> {
    let rates: Vec<f64> = counts.iter().map(|&c| c as f64 / timesteps as f64).collect();
    let mut seed = softmax(&rates);
    seed[label] -= 1.0;
    for g in &mut seed {
        *g /= timesteps as f64;
    }
    seed
}

pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&v| math::exp(v - max)).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Backpropagation through time over a recorded trace. Every Heaviside
/// derivative is replaced by the fast-sigmoid surrogate; the adjoint sweep
/// accumulates in f64 and rounds to f32 once at the end.
pub fn snn_backward_bptt(
    trace: &ForwardTrace,
    params: &ParameterVector,
    topo: &MlpTopology,
    lif: &LifParams,
    label: usize,
) -> Result<Vec<f32>> {
    let num_layers = topo.num_weight_layers();
    if trace.widths.len() != num_layers || trace.widths != topo.layer_sizes[1..] {
        return Err(Error::Shape {
            what: "trace layer widths",
            expected: num_layers,
            got: trace.widths.len(),
        });
    }
    if trace.input_dim != topo.input_dim() {
        return Err(Error::Shape {
            what: "trace input dimension",
            expected: topo.input_dim(),
            got: trace.input_dim,
        });
    }
    if params.dim() != topo.param_count() {
        return Err(Error::Shape {
            what: "snn parameters",
            expected: topo.param_count(),
            got: params.dim(),
        });
    }
    if label >= topo.output_dim() {
        return Err(Error::Config("label out of range".to_string()));
    }

    let t_steps = trace.timesteps;
    let slope = lif.surrogate_slope as f64;
    let u_thr = lif.u_thr as f64;
    let beta = lif.beta as f64;

    let seed = rate_loss_seed(&trace.output_counts(), t_steps, label);
    let mut grads = vec![0.0f64; params.dim()];

    // dL/dU for the following timestep, per layer.
    let mut du_next: Vec<Vec<f64>> = trace.widths.iter().map(|&w| vec![0.0; w]).collect();
    let mut du_t: Vec<Vec<f64>> = trace.widths.iter().map(|&w| vec![0.0; w]).collect();

    for t in (0..t_steps).rev() {
        for l in (0..num_layers).rev() {
            let width = trace.widths[l];
            let slice = params.layout[l];

            // dL/dS[l][t]: loss seed on the output layer, otherwise routed
            // back through the next layer's weights at the same timestep;
            // plus the reset carry from the neuron's own next step.
            for i in 0..width {
                let mut ds = if l == num_layers - 1 {
                    seed[i]
                } else {
                    let next = params.layout[l + 1];
                    let w_next = params.layer(l + 1);
                    let row = &w_next[i * next.cols..(i + 1) * next.cols];
                    row.iter()
                        .zip(du_t[l + 1].iter())
                        .map(|(&w, &du)| w as f64 * du)
                        .sum()
                };
                ds -= u_thr * du_next[l][i];

                let u = trace.potential(l, t, i) as f64;
                du_t[l][i] = ds * surrogate_derivative_f64(u, slope, u_thr) + beta * du_next[l][i];
            }

            // Accumulate weight gradients: grad[j,i] += drive[j] * dU[i].
            let drive: &[f32] = if l == 0 {
                &trace.input_frames[t * trace.input_dim..(t + 1) * trace.input_dim]
            } else {
                let w_prev = trace.widths[l - 1];
                &trace.spikes[l - 1][t * w_prev..(t + 1) * w_prev]
            };
            let g = &mut grads[slice.offset..slice.offset + slice.len()];
            for (j, &dj) in drive.iter().enumerate() {
                if dj == 0.0 {
                    continue;
                }
                let dj = dj as f64;
                let row = &mut g[j * slice.cols..(j + 1) * slice.cols];
                for (gw, &du) in row.iter_mut().zip(du_t[l].iter()) {
                    *gw += dj * du;
                }
            }
        }
        core::mem::swap(&mut du_next, &mut du_t);
    }

    Ok(grads.into_iter().map(|g| g as f32).collect())
}
