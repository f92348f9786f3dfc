//! In-memory datasets, IID client partitioning, and timestep input encoding.
//!
//! File-format ingestion (IDX) lives in the companion CLI crate; this module
//! only deals with data that is already in memory, so it stays `no_std`.

use crate::error::{Error, Result};
use crate::rng::{self, domain};
use alloc::format;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// A labeled dataset with features in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Vec<f32>,
    dim: usize,
    labels: Vec<u32>,
    num_classes: usize,
}

impl Dataset {
    pub fn new(samples: Vec<f32>, dim: usize, labels: Vec<u32>, num_classes: usize) -> Result<Self> {
        if dim == 0 || labels.is_empty() {
            return Err(Error::Empty("dataset"));
        }
        if samples.len() != labels.len() * dim {
            return Err(Error::Shape {
                what: "dataset samples",
                expected: labels.len() * dim,
                got: samples.len(),
            });
        }
        if let Some(bad) = labels.iter().find(|&&l| l as usize >= num_classes) {
            return Err(Error::Config(format!(
                "label {bad} out of range for {num_classes} classes"
            )));
        }
        Ok(Self {
            samples,
            dim,
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn sample(&self, i: usize) -> &[f32] {
        &self.samples[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i] as usize
    }
}

/// Gaussian blobs with one dominant feature axis per class, clamped to
/// `[0, 1]`. Class directions stay distinct, so the data is separable by
/// construction for small spreads. Classes beyond `dim` reuse axes and are
/// not separable; callers keep `num_classes <= dim`.
pub fn synth_blobs(
    num_classes: usize,
    dim: usize,
    per_class: usize,
    spread: f32,
    seed: u64,
) -> Dataset {
    assert!(num_classes > 0 && dim > 0 && per_class > 0, "all sizes must be positive");
    let mut rng = rng::stream(seed, domain::DATA, 0, 0);

    // Seed-jittered class centers: 0.8 on the class axis, 0.2 elsewhere.
    let mut centers = vec![0.0f32; num_classes * dim];
    for c in 0..num_classes {
        for j in 0..dim {
            let base = if j == c % dim { 0.8 } else { 0.2 };
            centers[c * dim + j] = base + rng.random_range(-0.02f32..0.02f32);
        }
    }

    let n = num_classes * per_class;
    let mut samples = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for c in 0..num_classes {
        for _ in 0..per_class {
            for j in 0..dim {
                let z: f32 = StandardNormal.sample(&mut rng);
                let v = centers[c * dim + j] + spread * z;
                samples.push(v.clamp(0.0, 1.0));
            }
            labels.push(c as u32);
        }
    }
    Dataset::new(samples, dim, labels, num_classes).expect("construction is consistent")
}

/// One client's view of the training set: a list of sample indices iterated
/// sequentially after a per-epoch seeded shuffle.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientShard {
    indices: Vec<u32>,
    cursor: usize,
    epoch: u64,
    seed: u64,
    client_id: u64,
}

impl ClientShard {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    /// Next `n` dataset indices, reshuffling whenever an epoch boundary is
    /// crossed. Batches may straddle epochs so every batch has exactly `n`
    /// samples.
    pub fn next_batch(&mut self, n: usize) -> Vec<u32> {
        let mut out = Vec::with_capacity(n);
        if self.indices.is_empty() {
            return out;
        }
        for _ in 0..n {
            if self.cursor == 0 {
                let mut rng = rng::stream(self.seed, domain::SHUFFLE, self.client_id, self.epoch);
                self.indices.shuffle(&mut rng);
            }
            out.push(self.indices[self.cursor]);
            self.cursor += 1;
            if self.cursor == self.indices.len() {
                self.cursor = 0;
                self.epoch += 1;
            }
        }
        out
    }
}

/// Split a dataset into `num_clients` disjoint shards of near-equal size
/// (sizes differ by at most one; earlier clients take the remainder).
pub fn partition_iid(dataset: &Dataset, num_clients: usize, seed: u64) -> Result<Vec<ClientShard>> {
    if num_clients == 0 {
        return Err(Error::Config("num_clients must be positive".to_string()));
    }
    let n = dataset.len();
    if n < num_clients {
        return Err(Error::Config(format!(
            "cannot split {n} samples across {num_clients} clients"
        )));
    }

    let mut perm: Vec<u32> = (0..n as u32).collect();
    perm.shuffle(&mut rng::stream(seed, domain::PARTITION, 0, 0));

    let base = n / num_clients;
    let extra = n % num_clients;
    let mut shards = Vec::with_capacity(num_clients);
    let mut at = 0;
    for c in 0..num_clients {
        let size = base + usize::from(c < extra);
        shards.push(ClientShard {
            indices: perm[at..at + size].to_vec(),
            cursor: 0,
            epoch: 0,
            seed,
            client_id: c as u64,
        });
        at += size;
    }
    Ok(shards)
}

/// How raw feature vectors become per-timestep network input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputEncoding {
    /// The sample is injected unchanged as input current at every timestep.
    Direct,
    /// Each timestep draws an independent Bernoulli spike per feature with
    /// firing probability equal to the feature value.
    Poisson,
}

/// A sample expanded over time: `timesteps` frames of `dim` values.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedInput {
    pub frames: Vec<f32>,
    pub timesteps: usize,
    pub dim: usize,
    pub encoding: InputEncoding,
}

impl EncodedInput {
    pub fn frame(&self, t: usize) -> &[f32] {
        &self.frames[t * self.dim..(t + 1) * self.dim]
    }
}

/// Expand a `[0,1]` sample over `timesteps` frames. Poisson encoding needs
/// a stream; direct encoding ignores it.
pub fn encode_input(
    sample: &[f32],
    timesteps: usize,
    mode: InputEncoding,
    rng: Option<&mut ChaCha8Rng>,
) -> Result<EncodedInput> {
    let dim = sample.len();
    let mut frames = Vec::with_capacity(timesteps * dim);
    match mode {
        InputEncoding::Direct => {
            for _ in 0..timesteps {
                frames.extend_from_slice(sample);
            }
        }
        InputEncoding::Poisson => {
            let rng = rng.ok_or_else(|| {
                Error::Config("poisson encoding requires an rng stream".to_string())
            })?;
            for _ in 0..timesteps {
                for &v in sample {
                    let u: f32 = rng.random();
                    frames.push(if u < v { 1.0 } else { 0.0 });
                }
            }
        }
    }
    Ok(EncodedInput {
        frames,
        timesteps,
        dim,
        encoding: mode,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::collections::BTreeSet;

    #[test]
    fn blobs_are_deterministic_and_in_range() {
        let a = synth_blobs(3, 8, 10, 0.05, 11);
        let b = synth_blobs(3, 8, 10, 0.05, 11);
        assert_eq!(a, b);
        assert_eq!(a.len(), 30);
        assert!(a.sample(0).iter().all(|&v| (0.0..=1.0).contains(&v)));
        let c = synth_blobs(3, 8, 10, 0.05, 12);
        assert_ne!(a, c);
    }

    #[test]
    fn blobs_with_zero_spread_sit_on_their_centers() {
        let d = synth_blobs(2, 4, 5, 0.0, 3);
        for c in 0..2 {
            let first = d.sample(c * 5).to_vec();
            for i in 0..5 {
                assert_eq!(d.sample(c * 5 + i), &first[..]);
            }
            // Dominant axis is the class axis.
            let hot = c % 4;
            for j in 0..4 {
                if j != hot {
                    assert!(first[hot] > first[j] + 0.5);
                }
            }
        }
    }

    #[test]
    fn partition_even_split() {
        let d = synth_blobs(4, 4, 25, 0.1, 1);
        let shards = partition_iid(&d, 20, 9).unwrap();
        assert_eq!(shards.len(), 20);
        assert!(shards.iter().all(|s| s.len() == 5));
    }

    #[test]
    fn partition_remainder_goes_to_leading_clients() {
        let d = synth_blobs(1, 2, 101, 0.1, 1);
        let shards = partition_iid(&d, 20, 9).unwrap();
        assert_eq!(shards[0].len(), 6);
        assert!(shards[1..].iter().all(|s| s.len() == 5));
    }

    #[test]
    fn partition_is_a_disjoint_cover() {
        let d = synth_blobs(2, 2, 53, 0.1, 4);
        let shards = partition_iid(&d, 7, 2).unwrap();
        let mut seen = BTreeSet::new();
        for s in &shards {
            for &i in s.indices() {
                assert!(seen.insert(i), "index {i} appears twice");
            }
        }
        assert_eq!(seen.len(), 106);
    }

    #[test]
    fn partition_rejects_more_clients_than_samples() {
        let d = synth_blobs(1, 2, 3, 0.1, 4);
        assert!(partition_iid(&d, 4, 0).is_err());
    }

    #[test]
    fn batches_cover_an_epoch_before_repeating() {
        let d = synth_blobs(1, 2, 10, 0.1, 4);
        let mut shard = partition_iid(&d, 2, 7).unwrap().remove(0);
        let epoch: BTreeSet<u32> = shard.next_batch(5).into_iter().collect();
        assert_eq!(epoch.len(), 5);
        assert_eq!(epoch, shard.indices().iter().copied().collect());
    }

    #[test]
    fn batch_order_is_reproducible() {
        let d = synth_blobs(1, 2, 10, 0.1, 4);
        let shards = partition_iid(&d, 2, 7).unwrap();
        let mut a = shards[0].clone();
        let mut b = shards[0].clone();
        for _ in 0..4 {
            assert_eq!(a.next_batch(3), b.next_batch(3));
        }
    }

    #[test]
    fn direct_encoding_repeats_the_sample() {
        let e = encode_input(&[0.2, 0.7], 4, InputEncoding::Direct, None).unwrap();
        assert_eq!(e.timesteps, 4);
        for t in 0..4 {
            assert_eq!(e.frame(t), &[0.2, 0.7]);
        }
    }

    #[test]
    fn poisson_encoding_saturates_at_the_extremes() {
        let mut rng = rng::stream(1, domain::ENCODE, 0, 0);
        let e = encode_input(&[0.0, 1.0], 50, InputEncoding::Poisson, Some(&mut rng)).unwrap();
        for t in 0..50 {
            assert_eq!(e.frame(t), &[0.0, 1.0]);
        }
    }

    #[test]
    fn poisson_encoding_requires_an_rng() {
        assert!(encode_input(&[0.5], 3, InputEncoding::Poisson, None).is_err());
    }

    #[test]
    fn poisson_rate_tracks_the_feature_value() {
        let mut rng = rng::stream(5, domain::ENCODE, 0, 0);
        let t = 10_000;
        let e = encode_input(&[0.5], t, InputEncoding::Poisson, Some(&mut rng)).unwrap();
        let rate = e.frames.iter().sum::<f32>() as f64 / t as f64;
        assert!((rate - 0.5).abs() < 0.01, "rate {rate}");
    }
}
