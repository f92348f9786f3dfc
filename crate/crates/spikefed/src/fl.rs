//! Federated round orchestration: broadcast, local client steps, Byzantine
//! injection, top-k compression, FedAvg aggregation, evaluation.
//!
//! One round runs `broadcast -> benign local steps -> inject attacks (dense)
//! -> compress each update -> mean with divisor |C| -> add into the global
//! model`. All floating accumulation across clients happens in f64 in fixed
//! client-id order, so results do not depend on how the local steps were
//! scheduled.

use crate::attacks::{
    alie_attack, ipm_attack, minmax_attack, noise_attack, AttackKind, AttackSpec, BenignView,
};
use crate::compress::{
    dense_payload_bytes, topk_compress, CompressionConfig, RetentionCounter, SparseUpdate,
};
use crate::data::{encode_input, partition_iid, ClientShard, Dataset};
use crate::error::{Error, Result};
use crate::math;
use crate::nn::{
    ann_backward, ann_forward, loss_rate_ce, loss_softmax_ce, sgd_step, snn_backward_bptt,
    snn_forward, ModelKind, ModelSpec, OptimizerState, ParameterVector,
};
use crate::rng::{self, domain};
use alloc::format;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

/// Client-side SGD hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerHyper {
    pub lr: f32,
    pub momentum: f32,
    pub weight_decay: f32,
}

/// Local training configuration shared by all clients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub optimizer: OptimizerHyper,
    pub batch_size: usize,
}

/// Global model and the round counter.
#[derive(Debug, Clone)]
pub struct ServerState {
    pub global: ParameterVector,
    pub round: u64,
}

/// One simulated participant. The Byzantine flag is fixed for the whole
/// run; momentum buffers persist across rounds.
#[derive(Debug, Clone)]
pub struct ClientRecord {
    pub id: u32,
    pub byzantine: bool,
    pub shard: ClientShard,
    pub optimizer: OptimizerState,
}

/// What one benign client produced this round.
#[derive(Debug, Clone)]
pub struct LocalOutcome {
    /// `W_c - W^{r-1}`, the dense round delta.
    pub delta: Vec<f32>,
    /// Mean training loss over the local batch.
    pub loss: f64,
}

/// Metrics of one executed round.
#[derive(Debug, Clone)]
pub struct RoundReport {
    /// 1-based index of the round that was executed.
    pub round: u64,
    /// Mean training loss over the benign clients.
    pub train_loss: f64,
    /// Filled by the harness on evaluation rounds.
    pub test_accuracy: Option<f64>,
    pub uplink_bytes: u64,
    pub downlink_bytes: u64,
    /// L2 norm of each client's update as submitted on the wire.
    pub update_norms: Vec<f64>,
    /// Coordinates retained per update when compression is on.
    pub retained_per_update: Option<u32>,
}

/// Everything a client needs to run its local step for the current round.
pub struct StepCtx<'a> {
    pub model: &'a ModelSpec,
    pub data: &'a Dataset,
    pub global: &'a ParameterVector,
    pub batch_size: usize,
    pub master_seed: u64,
    pub round: u64,
    /// Whether Byzantine clients sit out local training this round.
    pub attack_active: bool,
}

/// Maps the per-client local steps of one round. Implementations must
/// return one slot per client, in client order; scheduling is theirs.
pub trait StepRunner {
    fn run_steps(
        &self,
        clients: &mut [ClientRecord],
        ctx: &StepCtx<'_>,
    ) -> Vec<Result<Option<LocalOutcome>>>;
}

/// In-order execution on the calling thread.
pub struct SequentialRunner;

impl StepRunner for SequentialRunner {
    fn run_steps(
        &self,
        clients: &mut [ClientRecord],
        ctx: &StepCtx<'_>,
    ) -> Vec<Result<Option<LocalOutcome>>> {
        clients
            .iter_mut()
            .map(|c| client_step_for_round(c, ctx))
            .collect()
    }
}

/// Per-client round entry point: Byzantine clients idle while an attack is
/// active (their updates are crafted later); everyone else trains.
pub fn client_step_for_round(
    client: &mut ClientRecord,
    ctx: &StepCtx<'_>,
) -> Result<Option<LocalOutcome>> {
    if client.byzantine && ctx.attack_active {
        return Ok(None);
    }
    client_local_step(client, ctx.global, ctx).map(Some)
}

/// One benign local step: copy the broadcast model, take one SGD step on
/// one batch, return `W_c - W^{r-1}`.
pub fn client_local_step(
    client: &mut ClientRecord,
    global: &ParameterVector,
    ctx: &StepCtx<'_>,
) -> Result<LocalOutcome> {
    if client.shard.is_empty() {
        return Err(Error::Empty("client shard"));
    }
    let mut local = global.clone();
    let batch = client.shard.next_batch(ctx.batch_size);

    let mut grad = vec![0.0f64; local.dim()];
    let mut loss = 0.0f64;
    let mut encode_rng = rng::stream(ctx.master_seed, domain::ENCODE, client.id as u64, ctx.round);
    for &idx in &batch {
        let sample = ctx.data.sample(idx as usize);
        let label = ctx.data.label(idx as usize);
        let (g, l) = match ctx.model.topology.kind {
            ModelKind::Spiking => {
                let input = encode_input(
                    sample,
                    ctx.model.lif.timesteps,
                    ctx.model.encoding,
                    Some(&mut encode_rng),
                )?;
                let (counts, trace) = snn_forward(&local, &input, &ctx.model.topology, &ctx.model.lif)?;
                let l = loss_rate_ce(&counts, ctx.model.lif.timesteps, label);
                let g = snn_backward_bptt(&trace, &local, &ctx.model.topology, &ctx.model.lif, label)?;
                (g, l)
            }
            ModelKind::Dense => {
                let (logits, trace) = ann_forward(&local, sample, &ctx.model.topology)?;
                let l = loss_softmax_ce(&logits, label);
                let g = ann_backward(&trace, &local, &ctx.model.topology, label)?;
                (g, l)
            }
        };
        for (acc, &gi) in grad.iter_mut().zip(&g) {
            *acc += gi as f64;
        }
        loss += l;
    }
    let scale = 1.0 / batch.len() as f64;
    let grad32: Vec<f32> = grad.into_iter().map(|g| (g * scale) as f32).collect();
    loss *= scale;

    sgd_step(&mut local, &grad32, &mut client.optimizer)?;

    let delta = local
        .values
        .iter()
        .zip(&global.values)
        .map(|(&w, &g)| w - g)
        .collect();
    Ok(LocalOutcome { delta, loss })
}

/// Replace Byzantine slots with crafted updates; benign slots pass through
/// untouched. Slot index doubles as the client id for noise streams.
pub fn inject_attacks(
    slots: Vec<Option<Vec<f32>>>,
    byzantine: &[bool],
    spec: &AttackSpec,
    master_seed: u64,
    round: u64,
) -> Result<Vec<Vec<f32>>> {
    if slots.len() != byzantine.len() {
        return Err(Error::Shape {
            what: "attack injection slots",
            expected: byzantine.len(),
            got: slots.len(),
        });
    }
    let num_clients = slots.len();
    let num_byzantine = byzantine.iter().filter(|&&b| b).count();

    let take_all = |slots: Vec<Option<Vec<f32>>>| -> Result<Vec<Vec<f32>>> {
        slots
            .into_iter()
            .map(|s| s.ok_or_else(|| Error::Config("missing benign update".to_string())))
            .collect()
    };
    if matches!(spec.kind, AttackKind::None) || num_byzantine == 0 {
        return take_all(slots);
    }

    let benign: Vec<Vec<f32>> = slots
        .iter()
        .zip(byzantine)
        .filter(|(_, &byz)| !byz)
        .map(|(s, _)| {
            s.clone()
                .ok_or_else(|| Error::Config("missing benign update".to_string()))
        })
        .collect::<Result<_>>()?;
    let view = BenignView::new(&benign, num_clients, num_byzantine)?;

    // Colluding attacks craft one vector; noise perturbs the benign mean
    // independently per malicious client.
    let crafted: Option<Vec<f32>> = match spec.kind {
        AttackKind::Alie => Some(alie_attack(&view)?),
        AttackKind::MinMax { perturbation, tau } => Some(minmax_attack(&view, perturbation, tau)?),
        AttackKind::Ipm { epsilon } => Some(ipm_attack(&view, epsilon)),
        AttackKind::Noise { .. } => None,
        AttackKind::None => unreachable!(),
    };
    let noise_base: Option<Vec<f32>> = match spec.kind {
        AttackKind::Noise { .. } => Some(view.mean().into_iter().map(|m| m as f32).collect()),
        _ => None,
    };

    slots
        .into_iter()
        .zip(byzantine)
        .enumerate()
        .map(|(id, (slot, &byz))| {
            if !byz {
                return slot.ok_or_else(|| Error::Config("missing benign update".to_string()));
            }
            match spec.kind {
                AttackKind::Noise { sigma } => {
                    let mut stream =
                        rng::stream(master_seed, domain::ATTACK_NOISE, id as u64, round);
                    Ok(noise_attack(noise_base.as_ref().unwrap(), sigma, &mut stream))
                }
                _ => Ok(crafted.clone().unwrap()),
            }
        })
        .collect()
}

/// An update as received by the server.
#[derive(Debug, Clone)]
pub enum ClientUpdate {
    Dense(Vec<f32>),
    Sparse(SparseUpdate),
}

impl ClientUpdate {
    pub fn dim(&self) -> usize {
        match self {
            ClientUpdate::Dense(v) => v.len(),
            ClientUpdate::Sparse(sp) => sp.dim as usize,
        }
    }

    pub fn payload_bytes(&self) -> u64 {
        match self {
            ClientUpdate::Dense(v) => dense_payload_bytes(v.len()),
            ClientUpdate::Sparse(sp) => sp.payload_bytes(),
        }
    }

    pub fn l2_norm(&self) -> f64 {
        let values: &[f32] = match self {
            ClientUpdate::Dense(v) => v,
            ClientUpdate::Sparse(sp) => &sp.values,
        };
        math::sqrt(values.iter().map(|&v| v as f64 * v as f64).sum())
    }
}

/// Mean of the client updates with divisor `|C|`; sparse updates contribute
/// zero on dropped coordinates. Sums in f64 in client order, rounds to f32
/// once.
pub fn aggregate_fedavg(updates: &[ClientUpdate], num_clients: usize) -> Result<Vec<f32>> {
    if updates.is_empty() {
        return Err(Error::Empty("aggregation inputs"));
    }
    if updates.len() != num_clients {
        return Err(Error::Shape {
            what: "aggregation updates",
            expected: num_clients,
            got: updates.len(),
        });
    }
    let dim = updates[0].dim();
    let mut sum = vec![0.0f64; dim];
    for u in updates {
        if u.dim() != dim {
            return Err(Error::Shape {
                what: "aggregation dims",
                expected: dim,
                got: u.dim(),
            });
        }
        match u {
            ClientUpdate::Dense(v) => {
                for (s, &x) in sum.iter_mut().zip(v) {
                    *s += x as f64;
                }
            }
            ClientUpdate::Sparse(sp) => {
                sp.validate()?;
                for (&i, &x) in sp.indices.iter().zip(&sp.values) {
                    sum[i as usize] += x as f64;
                }
            }
        }
    }
    let n = num_clients as f64;
    Ok(sum.into_iter().map(|s| (s / n) as f32).collect())
}

/// `clean - attacked`; negative when the attack helped.
pub fn accuracy_loss(clean: f64, attacked: f64) -> f64 {
    clean - attacked
}

/// Fraction of correctly argmax-classified test samples. Ties resolve to
/// the lowest class index. `seed` only matters for Poisson eval encoding.
pub fn evaluate(
    params: &ParameterVector,
    model: &ModelSpec,
    data: &Dataset,
    seed: u64,
) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Empty("evaluation dataset"));
    }
    let mut correct = 0usize;
    for i in 0..data.len() {
        let sample = data.sample(i);
        let predicted = match model.topology.kind {
            ModelKind::Spiking => {
                let mut enc_rng = rng::stream(seed, domain::EVAL_ENCODE, i as u64, 0);
                let input = encode_input(
                    sample,
                    model.lif.timesteps,
                    model.encoding,
                    Some(&mut enc_rng),
                )?;
                let (counts, _) = snn_forward(params, &input, &model.topology, &model.lif)?;
                argmax(&counts)
            }
            ModelKind::Dense => {
                let (logits, _) = ann_forward(params, sample, &model.topology)?;
                argmax(&logits)
            }
        };
        if predicted == data.label(i) {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.len() as f64)
}

fn argmax<T: PartialOrd + Copy>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// A full federated run: server, clients, adversary, codec.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub model: ModelSpec,
    pub train: TrainConfig,
    pub attack: AttackSpec,
    pub compression: Option<CompressionConfig>,
    pub server: ServerState,
    pub clients: Vec<ClientRecord>,
    pub retention: Option<RetentionCounter>,
    pub master_seed: u64,
}

impl Simulation {
    /// Partition the training data, initialize the global model, and fix
    /// Byzantine identities (the first `ceil(f*n)` client ids).
    pub fn new(
        model: ModelSpec,
        train: TrainConfig,
        attack: AttackSpec,
        compression: Option<CompressionConfig>,
        num_clients: usize,
        data: &Dataset,
        master_seed: u64,
    ) -> Result<Self> {
        model.validate()?;
        attack.validate()?;
        if let Some(cfg) = &compression {
            cfg.validate()?;
        }
        if train.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".to_string()));
        }
        if data.dim() != model.topology.input_dim() {
            return Err(Error::Shape {
                what: "dataset feature dim",
                expected: model.topology.input_dim(),
                got: data.dim(),
            });
        }
        if data.num_classes() != model.topology.output_dim() {
            return Err(Error::Shape {
                what: "dataset classes",
                expected: model.topology.output_dim(),
                got: data.num_classes(),
            });
        }

        let num_byzantine = attack.byzantine_count(num_clients);
        let benign = num_clients.saturating_sub(num_byzantine);
        match attack.kind {
            AttackKind::Alie | AttackKind::MinMax { .. } if benign < 2 => {
                return Err(Error::Config(format!(
                    "{:?} needs at least two benign clients, got {benign}",
                    attack.kind
                )));
            }
            _ => {}
        }

        let shards = partition_iid(data, num_clients, master_seed)?;
        let global = ParameterVector::glorot(
            &model.topology,
            &mut rng::stream(master_seed, domain::INIT, 0, 0),
        );
        let dim = global.dim();

        let clients = shards
            .into_iter()
            .enumerate()
            .map(|(id, shard)| ClientRecord {
                id: id as u32,
                byzantine: id < num_byzantine,
                shard,
                optimizer: OptimizerState::new(
                    dim,
                    train.optimizer.lr,
                    train.optimizer.momentum,
                    train.optimizer.weight_decay,
                ),
            })
            .collect();

        Ok(Self {
            model,
            train,
            attack,
            compression,
            retention: compression.map(|_| RetentionCounter::new(dim)),
            server: ServerState {
                global,
                round: 0,
            },
            clients,
            master_seed,
        })
    }

    pub fn num_clients(&self) -> usize {
        self.clients.len()
    }

    pub fn params(&self) -> &ParameterVector {
        &self.server.global
    }

    /// Run one round with sequential local steps.
    pub fn run_round(&mut self, data: &Dataset) -> Result<RoundReport> {
        self.run_round_with(data, &SequentialRunner)
    }

    /// Run one round, delegating local-step scheduling to `runner`.
    pub fn run_round_with(&mut self, data: &Dataset, runner: &dyn StepRunner) -> Result<RoundReport> {
        let round = self.server.round;
        let num_clients = self.clients.len();
        let num_byzantine = self.clients.iter().filter(|c| c.byzantine).count();
        let attack_active = !matches!(self.attack.kind, AttackKind::None) && num_byzantine > 0;

        let ctx = StepCtx {
            model: &self.model,
            data,
            global: &self.server.global,
            batch_size: self.train.batch_size,
            master_seed: self.master_seed,
            round,
            attack_active,
        };
        let outcomes = runner.run_steps(&mut self.clients, &ctx);
        if outcomes.len() != num_clients {
            return Err(Error::Shape {
                what: "step runner outputs",
                expected: num_clients,
                got: outcomes.len(),
            });
        }

        let mut slots: Vec<Option<Vec<f32>>> = Vec::with_capacity(num_clients);
        let mut loss_sum = 0.0f64;
        let mut loss_count = 0usize;
        for outcome in outcomes {
            match outcome? {
                Some(out) => {
                    loss_sum += out.loss;
                    loss_count += 1;
                    slots.push(Some(out.delta));
                }
                None => slots.push(None),
            }
        }
        let train_loss = loss_sum / loss_count.max(1) as f64;

        let byz_flags: Vec<bool> = self.clients.iter().map(|c| c.byzantine).collect();
        let dense_updates = inject_attacks(slots, &byz_flags, &self.attack, self.master_seed, round)?;

        let mut uplink = 0u64;
        let mut norms = Vec::with_capacity(num_clients);
        let mut retained = None;
        let mut wire = Vec::with_capacity(num_clients);
        for update in dense_updates {
            let cu = match &self.compression {
                Some(cfg) => {
                    let sp = topk_compress(&update, cfg)?;
                    if let Some(counter) = &mut self.retention {
                        counter.record(&sp)?;
                    }
                    retained = Some(sp.k() as u32);
                    ClientUpdate::Sparse(sp)
                }
                None => ClientUpdate::Dense(update),
            };
            uplink += cu.payload_bytes();
            norms.push(cu.l2_norm());
            wire.push(cu);
        }

        let mean = aggregate_fedavg(&wire, num_clients)?;
        for (w, m) in self.server.global.values.iter_mut().zip(&mean) {
            *w += m;
        }
        self.server.round += 1;

        let dim = self.server.global.dim();
        Ok(RoundReport {
            round: self.server.round,
            train_loss,
            test_accuracy: None,
            uplink_bytes: uplink,
            downlink_bytes: num_clients as u64 * dense_payload_bytes(dim),
            update_norms: norms,
            retained_per_update: retained,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_blobs, InputEncoding};
    use crate::nn::{LifParams, MlpTopology};

    fn dense_model(dim: usize, classes: usize) -> ModelSpec {
        ModelSpec {
            topology: MlpTopology::new(vec![dim, 6, classes], ModelKind::Dense).unwrap(),
            lif: LifParams::defaults(),
            encoding: InputEncoding::Direct,
        }
    }

    fn train_cfg(lr: f32) -> TrainConfig {
        TrainConfig {
            optimizer: OptimizerHyper {
                lr,
                momentum: 0.9,
                weight_decay: 0.0,
            },
            batch_size: 4,
        }
    }

    fn quick_sim(attack: AttackSpec, kappa: Option<f64>, seed: u64) -> (Simulation, Dataset) {
        let data = synth_blobs(3, 5, 12, 0.08, 77);
        let sim = Simulation::new(
            dense_model(5, 3),
            train_cfg(0.05),
            attack,
            kappa.map(|k| CompressionConfig::new(k).unwrap()),
            4,
            &data,
            seed,
        )
        .unwrap();
        (sim, data)
    }

    #[test]
    fn zero_lr_gives_zero_deltas() {
        let data = synth_blobs(3, 5, 12, 0.08, 77);
        let mut sim = Simulation::new(
            dense_model(5, 3),
            train_cfg(0.0),
            AttackSpec::none(),
            None,
            4,
            &data,
            1,
        )
        .unwrap();
        let before = sim.server.global.clone();
        let report = sim.run_round(&data).unwrap();
        assert_eq!(sim.server.global, before);
        assert!(report.update_norms.iter().all(|&n| n == 0.0));
        assert_eq!(report.round, 1);
    }

    #[test]
    fn delta_is_minus_lr_times_momentum() {
        let (mut sim, data) = quick_sim(AttackSpec::none(), None, 3);
        let global = sim.server.global.clone();
        let lr = sim.train.optimizer.lr;
        let ctx = StepCtx {
            model: &sim.model,
            data: &data,
            global: &global,
            batch_size: sim.train.batch_size,
            master_seed: sim.master_seed,
            round: 0,
            attack_active: false,
        };
        let out = client_local_step(&mut sim.clients[0], &global, &ctx).unwrap();
        // Algebraic identity; the subtraction (w - lr*m) - w re-rounds in
        // f32, so allow rounding at the weight's magnitude.
        for ((d, &m), &w) in out
            .delta
            .iter()
            .zip(&sim.clients[0].optimizer.momentum)
            .zip(&global.values)
        {
            let tol = 4.0 * f32::EPSILON * w.abs().max(1.0);
            assert!((d + lr * m).abs() <= tol, "delta {d} vs -lr*m {}", -lr * m);
        }
    }

    #[test]
    fn local_steps_replay_bit_identically() {
        let (mut a, data) = quick_sim(AttackSpec::none(), None, 9);
        let (mut b, _) = quick_sim(AttackSpec::none(), None, 9);
        for _ in 0..3 {
            let ra = a.run_round(&data).unwrap();
            let rb = b.run_round(&data).unwrap();
            assert_eq!(ra.update_norms, rb.update_norms);
            assert_eq!(ra.train_loss, rb.train_loss);
        }
        assert_eq!(a.server.global, b.server.global);
    }

    #[test]
    fn inject_none_is_identity() {
        let slots = vec![Some(vec![1.0f32, 2.0]), Some(vec![3.0, 4.0])];
        let got = inject_attacks(slots.clone(), &[false, false], &AttackSpec::none(), 0, 0).unwrap();
        assert_eq!(got, vec![vec![1.0, 2.0], vec![3.0, 4.0]]);
    }

    #[test]
    fn inject_ipm_replaces_byzantine_slot_with_negated_mean() {
        let slots = vec![None, Some(vec![1.0f32, 0.0]), Some(vec![3.0, -2.0])];
        let spec = AttackSpec {
            kind: AttackKind::Ipm { epsilon: 1.0 },
            malicious_fraction: 0.34,
        };
        let got = inject_attacks(slots, &[true, false, false], &spec, 0, 0).unwrap();
        assert_eq!(got[0], vec![-2.0, 1.0]);
        assert_eq!(got[1], vec![1.0, 0.0]);
        assert_eq!(got[2], vec![3.0, -2.0]);
    }

    #[test]
    fn inject_keeps_benign_slots_bit_unchanged() {
        let benign = vec![vec![0.125f32, -7.5], vec![0.25, 0.5], vec![1.0, 1.5]];
        for kind in [
            AttackKind::Noise { sigma: 0.1 },
            AttackKind::Alie,
            AttackKind::MinMax {
                perturbation: crate::attacks::Perturbation::UnitNegativeMean,
                tau: 1e-5,
            },
            AttackKind::Ipm { epsilon: 0.5 },
        ] {
            let slots = vec![
                None,
                Some(benign[0].clone()),
                Some(benign[1].clone()),
                Some(benign[2].clone()),
            ];
            let spec = AttackSpec {
                kind,
                malicious_fraction: 0.25,
            };
            let got = inject_attacks(slots, &[true, false, false, false], &spec, 5, 2).unwrap();
            assert_eq!(&got[1..], &benign[..]);
        }
    }

    #[test]
    fn aggregate_identical_updates_is_identity() {
        let u = vec![0.5f32, -1.0, 2.0];
        let updates = vec![
            ClientUpdate::Dense(u.clone()),
            ClientUpdate::Dense(u.clone()),
            ClientUpdate::Dense(u.clone()),
        ];
        assert_eq!(aggregate_fedavg(&updates, 3).unwrap(), u);
    }

    #[test]
    fn aggregate_zero_fills_sparse_coordinates() {
        let a = SparseUpdate {
            dim: 2,
            indices: vec![0],
            values: vec![2.0],
        };
        let b = SparseUpdate {
            dim: 2,
            indices: vec![1],
            values: vec![4.0],
        };
        let mean =
            aggregate_fedavg(&[ClientUpdate::Sparse(a), ClientUpdate::Sparse(b)], 2).unwrap();
        assert_eq!(mean, vec![1.0, 2.0]);
    }

    #[test]
    fn aggregate_is_permutation_invariant() {
        let us = vec![
            vec![1.0f32, -2.0, 0.5],
            vec![0.25, 0.75, -0.125],
            vec![-1.5, 2.5, 3.0],
        ];
        let fwd: Vec<ClientUpdate> = us.iter().cloned().map(ClientUpdate::Dense).collect();
        let rev: Vec<ClientUpdate> = us.iter().rev().cloned().map(ClientUpdate::Dense).collect();
        assert_eq!(
            aggregate_fedavg(&fwd, 3).unwrap(),
            aggregate_fedavg(&rev, 3).unwrap()
        );
    }

    #[test]
    fn aggregate_rejects_mismatched_counts_and_dims() {
        let updates = vec![ClientUpdate::Dense(vec![1.0])];
        assert!(aggregate_fedavg(&updates, 2).is_err());
        let ragged = vec![
            ClientUpdate::Dense(vec![1.0]),
            ClientUpdate::Dense(vec![1.0, 2.0]),
        ];
        assert!(aggregate_fedavg(&ragged, 2).is_err());
    }

    #[test]
    fn uplink_bytes_follow_the_codec_formula() {
        let (mut sim, data) = quick_sim(AttackSpec::none(), Some(0.2), 5);
        let dim = sim.server.global.dim();
        let k = crate::compress::retained_count(0.2, dim);
        let report = sim.run_round(&data).unwrap();
        assert_eq!(report.uplink_bytes, 4 * (8 + 8 * k as u64));
        assert_eq!(report.downlink_bytes, 4 * (8 + 4 * dim as u64));
        assert_eq!(report.retained_per_update, Some(k as u32));
        let counter = sim.retention.as_ref().unwrap();
        assert_eq!(counter.total(), 4 * k as u64);
    }

    #[test]
    fn byzantine_identities_are_the_leading_ids() {
        let spec = AttackSpec {
            kind: AttackKind::Ipm { epsilon: 0.5 },
            malicious_fraction: 0.3,
        };
        let (sim, _) = quick_sim(spec, None, 5);
        // ceil(0.3 * 4) = 2.
        let flags: Vec<bool> = sim.clients.iter().map(|c| c.byzantine).collect();
        assert_eq!(flags, vec![true, true, false, false]);
    }

    #[test]
    fn accuracy_loss_sign_convention() {
        assert_eq!(accuracy_loss(0.77, 0.77), 0.0);
        assert!((accuracy_loss(0.5, 0.6) + 0.1).abs() < 1e-12);
        assert!((accuracy_loss(0.77, 0.30) - 0.47).abs() < 1e-12);
    }

    #[test]
    fn evaluate_bounds_and_constant_predictor() {
        // Zero weights predict class 0 everywhere: accuracy = 1/num_classes
        // on a balanced set.
        let data = synth_blobs(4, 6, 10, 0.05, 3);
        let model = dense_model(6, 4);
        let params = ParameterVector::zeros(&model.topology);
        let acc = evaluate(&params, &model, &data, 0).unwrap();
        assert!((acc - 0.25).abs() < 1e-12);
    }

    #[test]
    fn evaluate_perfect_memorizer_reaches_one() {
        // Train on the test set until it is memorized; easy blobs make this
        // quick with a dense model.
        let data = synth_blobs(2, 4, 8, 0.02, 21);
        let model = ModelSpec {
            topology: MlpTopology::new(vec![4, 8, 2], ModelKind::Dense).unwrap(),
            lif: LifParams::defaults(),
            encoding: InputEncoding::Direct,
        };
        let mut sim = Simulation::new(
            model.clone(),
            TrainConfig {
                optimizer: OptimizerHyper {
                    lr: 0.5,
                    momentum: 0.9,
                    weight_decay: 0.0,
                },
                batch_size: 8,
            },
            AttackSpec::none(),
            None,
            2,
            &data,
            13,
        )
        .unwrap();
        for _ in 0..60 {
            sim.run_round(&data).unwrap();
        }
        let acc = evaluate(sim.params(), &model, &data, 0).unwrap();
        assert_eq!(acc, 1.0);
    }
}
