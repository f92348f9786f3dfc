//! Gradient correctness against independent oracles: the BPTT adjoint sweep
//! versus a fully-unrolled forward-mode tangent computation, and the dense
//! analytic gradient versus f64 central finite differences.

use rand::Rng;
use spikefed::data::{encode_input, InputEncoding};
use spikefed::nn::{
    ann_backward, ann_forward, snn_backward_bptt, snn_forward, LifParams, MlpTopology, ModelKind,
    ParameterVector,
};
use spikefed::rng::{self, domain};
use spikefed_testkit::gradcheck::{
    dense_grad_central_diff, min_hidden_preactivation, snn_grad_forward_mode,
};
use spikefed_testkit::scaled_max_err;

/// Random small spiking instance: up to 3 weight layers, up to 8 neurons per
/// layer, up to 5 timesteps. Weights are scaled up so a good fraction of
/// instances actually spike.
fn random_snn_instance(
    seed: u64,
) -> (ParameterVector, MlpTopology, LifParams, Vec<f32>, usize) {
    let mut r = rng::stream(seed, domain::INIT, 99, 0);
    let n_layers = r.random_range(1..=3usize);
    let mut sizes = Vec::with_capacity(n_layers + 1);
    for _ in 0..=n_layers {
        sizes.push(r.random_range(1..=8usize));
    }
    let topo = MlpTopology::new(sizes.clone(), ModelKind::Spiking).unwrap();
    let lif = LifParams {
        beta: r.random_range(0.3..0.99),
        u_thr: 1.0,
        timesteps: r.random_range(1..=5usize),
        surrogate_slope: 25.0,
    };
    let mut params = ParameterVector::glorot(&topo, &mut r);
    for v in &mut params.values {
        *v *= 3.0;
    }
    let input: Vec<f32> = (0..sizes[0]).map(|_| r.random_range(0.0..1.0f32)).collect();
    let label = r.random_range(0..*sizes.last().unwrap());
    (params, topo, lif, input, label)
}

#[test]
fn bptt_matches_forward_mode_oracle_on_random_instances() {
    let mut spiking_instances = 0;
    for seed in 0..50u64 {
        let (params, topo, lif, input, label) = random_snn_instance(seed);
        let encoded = encode_input(&input, lif.timesteps, InputEncoding::Direct, None).unwrap();
        let (counts, trace) = snn_forward(&params, &encoded, &topo, &lif).unwrap();
        if counts.iter().sum::<u32>() > 0 {
            spiking_instances += 1;
        }

        let got = snn_backward_bptt(&trace, &params, &topo, &lif, label).unwrap();
        let want = snn_grad_forward_mode(&trace, &params, &topo, &lif, label);
        let err = scaled_max_err(&got, &want);
        assert!(err < 1e-6, "instance {seed}: scaled max err {err}");
    }
    assert!(
        spiking_instances > 10,
        "only {spiking_instances} instances spiked; oracle coverage too thin"
    );
}

#[test]
fn ann_gradient_matches_central_differences() {
    let h = 1e-5;
    let mut checked = 0;
    let mut seed = 0u64;
    while checked < 100 {
        seed += 1;
        let mut r = rng::stream(seed, domain::INIT, 7, 0);
        let n_layers = r.random_range(1..=3usize);
        let mut sizes = Vec::with_capacity(n_layers + 1);
        for _ in 0..=n_layers {
            sizes.push(r.random_range(1..=8usize));
        }
        let topo = MlpTopology::new(sizes.clone(), ModelKind::Dense).unwrap();
        let params = ParameterVector::glorot(&topo, &mut r);
        let input: Vec<f32> = (0..sizes[0]).map(|_| r.random_range(-1.0..1.0f32)).collect();
        let label = r.random_range(0..*sizes.last().unwrap());

        // Finite differences are meaningless across the ReLU kink; resample
        // instances whose hidden preactivations come too close to it.
        let w64: Vec<f64> = params.values.iter().map(|&v| v as f64).collect();
        if min_hidden_preactivation(&w64, &topo, &input) < 1e-3 {
            continue;
        }

        let (_, trace) = ann_forward(&params, &input, &topo).unwrap();
        let got = ann_backward(&trace, &params, &topo, label).unwrap();
        let want = dense_grad_central_diff(&w64, &topo, &input, label, h);
        let err = scaled_max_err(&got, &want);
        assert!(err < 1e-4, "instance {seed}: scaled max err {err}");
        checked += 1;
    }
}
