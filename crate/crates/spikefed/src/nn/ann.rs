//! Dense MLP baseline: affine layers (weights plus a bias row per block)
//! with ReLU hidden activations and softmax cross-entropy, on the same flat
//! parameter vector interface as the spiking model.

use super::params::ParameterVector;
use super::snn::softmax;
use super::{MlpTopology, ModelKind};
use crate::error::{Error, Result};
use crate::math;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

/// Activations of one forward pass, kept for backprop. `activations[0]` is
/// the input; entries after that are post-ReLU; `logits` is the raw final
/// layer output.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTrace {
    pub activations: Vec<Vec<f32>>,
    pub logits: Vec<f32>,
}

pub fn ann_forward(
    params: &ParameterVector,
    input: &[f32],
    topo: &MlpTopology,
) -> Result<(Vec<f32>, DenseTrace)> {
    if topo.kind != ModelKind::Dense {
        return Err(Error::Config("ann_forward needs a dense topology".to_string()));
    }
    if input.len() != topo.input_dim() {
        return Err(Error::Shape {
            what: "ann input dimension",
            expected: topo.input_dim(),
            got: input.len(),
        });
    }
    if params.dim() != topo.param_count() {
        return Err(Error::Shape {
            what: "ann parameters",
            expected: topo.param_count(),
            got: params.dim(),
        });
    }

    let num_layers = topo.num_weight_layers();
    let mut activations: Vec<Vec<f32>> = Vec::with_capacity(num_layers);
    activations.push(input.to_vec());

    let mut logits = Vec::new();
    for l in 0..num_layers {
        let slice = params.layout[l];
        let w = params.layer(l);
        let x = activations.last().unwrap();
        let fan_in = slice.rows - 1; // last row is the bias
        let mut z = vec![0.0f32; slice.cols];
        for (j, &xj) in x.iter().enumerate().take(fan_in) {
            if xj == 0.0 {
                continue;
            }
            let row = &w[j * slice.cols..(j + 1) * slice.cols];
            for (o, &wji) in z.iter_mut().zip(row) {
                *o += xj * wji;
            }
        }
        let bias = &w[fan_in * slice.cols..];
        for (o, &b) in z.iter_mut().zip(bias) {
            *o += b;
        }
        if l + 1 == num_layers {
            logits = z;
        } else {
            activations.push(z.into_iter().map(|v| v.max(0.0)).collect());
        }
    }

    let trace = DenseTrace {
        activations,
        logits: logits.clone(),
    };
    Ok((logits, trace))
}

/// Softmax cross-entropy on logits.
pub fn loss_softmax_ce(logits: &[f32], label: usize) -> f64 {
    let logits64: Vec<f64> = logits.iter().map(|&v| v as f64).collect();
    let probs = softmax(&logits64);
    -math::ln(probs[label])
}

/// Analytic gradient of the softmax cross-entropy loss with respect to
/// every weight. Accumulates in f64, rounds to f32 once.
pub fn ann_backward(
    trace: &DenseTrace,
    params: &ParameterVector,
    topo: &MlpTopology,
    label: usize,
) -> Result<Vec<f32>> {
    let num_layers = topo.num_weight_layers();
    if trace.activations.len() != num_layers || trace.logits.len() != topo.output_dim() {
        return Err(Error::Shape {
            what: "dense trace",
            expected: num_layers,
            got: trace.activations.len(),
        });
    }
    if params.dim() != topo.param_count() {
        return Err(Error::Shape {
            what: "ann parameters",
            expected: topo.param_count(),
            got: params.dim(),
        });
    }
    if label >= topo.output_dim() {
        return Err(Error::Config("label out of range".to_string()));
    }

    let logits64: Vec<f64> = trace.logits.iter().map(|&v| v as f64).collect();
    let mut dz = softmax(&logits64);
    dz[label] -= 1.0;

    let mut grads = vec![0.0f64; params.dim()];
    for l in (0..num_layers).rev() {
        let slice = params.layout[l];
        let fan_in = slice.rows - 1;
        let x = &trace.activations[l];
        let g = &mut grads[slice.offset..slice.offset + slice.len()];
        for (j, &xj) in x.iter().enumerate().take(fan_in) {
            if xj == 0.0 {
                continue;
            }
            let xj = xj as f64;
            let row = &mut g[j * slice.cols..(j + 1) * slice.cols];
            for (gw, &d) in row.iter_mut().zip(dz.iter()) {
                *gw += xj * d;
            }
        }
        // The bias row sees a constant drive of one.
        let bias_row = &mut g[fan_in * slice.cols..];
        for (gb, &d) in bias_row.iter_mut().zip(dz.iter()) {
            *gb += d;
        }
        if l > 0 {
            // Route back through the weights, then the ReLU mask (the stored
            // activation is post-ReLU: positive iff the unit was active).
            let w = params.layer(l);
            let mut dx = vec![0.0f64; fan_in];
            for (j, dxj) in dx.iter_mut().enumerate() {
                let row = &w[j * slice.cols..(j + 1) * slice.cols];
                *dxj = row
                    .iter()
                    .zip(dz.iter())
                    .map(|(&wji, &d)| wji as f64 * d)
                    .sum();
            }
            dz = dx
                .into_iter()
                .zip(x.iter())
                .map(|(d, &a)| if a > 0.0 { d } else { 0.0 })
                .collect();
        }
    }

    Ok(grads.into_iter().map(|g| g as f32).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::params::LayerSlice;
    use alloc::vec;

    fn dense(sizes: Vec<usize>) -> MlpTopology {
        MlpTopology::new(sizes, ModelKind::Dense).unwrap()
    }

    #[test]
    fn zero_weights_give_uniform_softmax_and_log_loss() {
        let topo = dense(vec![3, 4, 5]);
        let params = ParameterVector::zeros(&topo);
        let (logits, _) = ann_forward(&params, &[0.5, 0.2, 0.9], &topo).unwrap();
        assert!(logits.iter().all(|&v| v == 0.0));
        let loss = loss_softmax_ce(&logits, 2);
        assert!((loss - 5.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn one_layer_analytic_softmax_gradient() {
        // Identity-like single layer on a one-hot input: the gradient row of
        // the hot input j is exactly softmax(logits) - onehot(label), as is
        // the bias row (constant drive of one).
        let topo = dense(vec![3, 3]);
        let params = ParameterVector {
            values: vec![
                2.0, 0.0, 0.0, //
                0.0, 2.0, 0.0, //
                0.0, 0.0, 2.0, //
                0.0, 0.0, 0.0, // bias row
            ],
            layout: vec![LayerSlice {
                layer: 0,
                offset: 0,
                rows: 4,
                cols: 3,
            }],
        };
        let x = [0.0f32, 1.0, 0.0];
        let label = 1usize;
        let (logits, trace) = ann_forward(&params, &x, &topo).unwrap();
        assert_eq!(logits, vec![0.0, 2.0, 0.0]);
        let grad = ann_backward(&trace, &params, &topo, label).unwrap();

        let probs = softmax(&[0.0, 2.0, 0.0]);
        for i in 0..3 {
            let want = probs[i] - if i == label { 1.0 } else { 0.0 };
            assert!((grad[3 + i] as f64 - want).abs() < 1e-7, "hot row");
            assert!((grad[9 + i] as f64 - want).abs() < 1e-7, "bias row");
        }
        for i in 0..3 {
            assert_eq!(grad[i], 0.0, "cold rows see zero input");
            assert_eq!(grad[6 + i], 0.0);
        }
    }

    #[test]
    fn shape_errors_are_reported() {
        let topo = dense(vec![3, 2]);
        let params = ParameterVector::zeros(&topo);
        assert!(matches!(
            ann_forward(&params, &[0.1, 0.2], &topo),
            Err(Error::Shape { .. })
        ));
        let spiking = MlpTopology::new(vec![3, 2], ModelKind::Spiking).unwrap();
        assert!(ann_forward(&params, &[0.1, 0.2, 0.3], &spiking).is_err());
    }
}
