//! Neural models: LIF spiking MLP trained with surrogate-gradient BPTT and a
//! matched dense MLP trained with ordinary backprop. Both operate on a flat
//! parameter vector so the federated layer never cares which kind it moves.

pub mod ann;
pub mod lif;
pub mod optim;
pub mod params;
pub mod snn;

pub use ann::{ann_backward, ann_forward, loss_softmax_ce, DenseTrace};
pub use lif::{lif_step, surrogate_derivative, LifParams};
pub use optim::{sgd_step, OptimizerState};
pub use params::{LayerSlice, ParameterVector};
pub use snn::{loss_rate_ce, snn_backward_bptt, snn_forward, ForwardTrace};

use crate::data::InputEncoding;
use crate::error::{Error, Result};
use alloc::string::ToString;
use alloc::vec::Vec;

/// Which family a topology instantiates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Spiking,
    Dense,
}

/// Fully-connected layer sizes, input first, output last. Spiking layers
/// are weight-only (the membrane recurrence has no bias term); dense layers
/// are affine, with the bias stored as one extra augmented row per weight
/// block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpTopology {
    pub layer_sizes: Vec<usize>,
    pub kind: ModelKind,
}

impl MlpTopology {
    pub fn new(layer_sizes: Vec<usize>, kind: ModelKind) -> Result<Self> {
        let topo = Self { layer_sizes, kind };
        topo.validate()?;
        Ok(topo)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 {
            return Err(Error::Config(
                "topology needs at least input and output sizes".to_string(),
            ));
        }
        if self.layer_sizes.iter().any(|&s| s == 0) {
            return Err(Error::Config("layer sizes must be positive".to_string()));
        }
        Ok(())
    }

    /// Number of weight matrices.
    pub fn num_weight_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    /// Total flat parameter count (dense layers carry a bias row).
    pub fn param_count(&self) -> usize {
        let bias = match self.kind {
            ModelKind::Spiking => 0,
            ModelKind::Dense => 1,
        };
        self.layer_sizes
            .windows(2)
            .map(|w| (w[0] + bias) * w[1])
            .sum()
    }
}

/// Everything needed to run one model: shape, neuron dynamics and how raw
/// samples become timestep inputs. `lif` and `encoding` are ignored for
/// dense models.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub topology: MlpTopology,
    pub lif: LifParams,
    pub encoding: InputEncoding,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        self.topology.validate()?;
        if self.topology.kind == ModelKind::Spiking {
            self.lif.validate()?;
        }
        Ok(())
    }
}
