//! Crafting of malicious client updates.
//!
//! Adversaries here are non-omniscient: they see the benign clients' dense
//! updates for the round and nothing else — no datasets, no labels. That
//! bound is baked into the signatures, which only accept a [`BenignView`].
//! ALIE, MinMax and IPM are colluding (every malicious client submits the
//! same crafted vector); the noise attack is independent per client.

use crate::error::{Error, Result};
use crate::math;
use alloc::format;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Starting scale of the MinMax halving search.
pub const GAMMA_INIT: f64 = 10.0;
/// Default convergence tolerance of the MinMax halving search.
pub const DEFAULT_TAU: f64 = 1e-5;

/// Direction of the MinMax perturbation, normalized to unit length.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Perturbation {
    /// Opposite of the benign mean (the default).
    UnitNegativeMean,
    /// Opposite of the coordinate-wise sign of the benign mean.
    NegativeSign,
    /// Opposite of the coordinate-wise std of the benign updates.
    NegativeStd,
}

/// Which adversary runs, with its intensity knobs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AttackKind {
    None,
    Noise { sigma: f32 },
    Alie,
    MinMax { perturbation: Perturbation, tau: f64 },
    Ipm { epsilon: f32 },
}

/// Adversary configuration for a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackSpec {
    pub kind: AttackKind,
    /// Fraction of clients that are Byzantine, below one half.
    pub malicious_fraction: f32,
}

impl AttackSpec {
    pub fn none() -> Self {
        Self {
            kind: AttackKind::None,
            malicious_fraction: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..0.5).contains(&self.malicious_fraction) {
            return Err(Error::Config(format!(
                "malicious_fraction must be in [0, 0.5), got {}",
                self.malicious_fraction
            )));
        }
        match self.kind {
            AttackKind::Noise { sigma } if !(sigma > 0.0) => {
                Err(Error::Config(format!("noise sigma must be positive, got {sigma}")))
            }
            AttackKind::MinMax { tau, .. } if !(tau > 0.0) => {
                Err(Error::Config(format!("minmax tau must be positive, got {tau}")))
            }
            AttackKind::Ipm { epsilon } if !(epsilon > 0.0) => {
                Err(Error::Config(format!("ipm epsilon must be positive, got {epsilon}")))
            }
            _ => Ok(()),
        }
    }

    /// Number of Byzantine clients out of `num_clients`: `ceil(f * n)`.
    pub fn byzantine_count(&self, num_clients: usize) -> usize {
        libm::ceil(self.malicious_fraction as f64 * num_clients as f64) as usize
    }
}

/// The adversary's entire knowledge for one round: the benign dense updates
/// and the population counts.
#[derive(Debug, Clone)]
pub struct BenignView<'a> {
    updates: &'a [Vec<f32>],
    num_clients: usize,
    num_byzantine: usize,
}

impl<'a> BenignView<'a> {
    pub fn new(updates: &'a [Vec<f32>], num_clients: usize, num_byzantine: usize) -> Result<Self> {
        if updates.is_empty() {
            return Err(Error::Empty("benign updates"));
        }
        if updates.len() + num_byzantine != num_clients {
            return Err(Error::Shape {
                what: "benign view counts",
                expected: num_clients - num_byzantine,
                got: updates.len(),
            });
        }
        let dim = updates[0].len();
        if updates.iter().any(|u| u.len() != dim) {
            return Err(Error::Shape {
                what: "benign update dims",
                expected: dim,
                got: updates.iter().map(Vec::len).find(|&l| l != dim).unwrap(),
            });
        }
        Ok(Self {
            updates,
            num_clients,
            num_byzantine,
        })
    }

    pub fn dim(&self) -> usize {
        self.updates[0].len()
    }

    pub fn num_benign(&self) -> usize {
        self.updates.len()
    }

    pub fn num_clients(&self) -> usize {
        self.num_clients
    }

    pub fn num_byzantine(&self) -> usize {
        self.num_byzantine
    }

    pub fn updates(&self) -> &[Vec<f32>] {
        self.updates
    }

    /// Coordinate-wise mean in f64.
    pub fn mean(&self) -> Vec<f64> {
        let dim = self.dim();
        let mut mean = vec![0.0f64; dim];
        for u in self.updates {
            for (m, &v) in mean.iter_mut().zip(u) {
                *m += v as f64;
            }
        }
        let n = self.updates.len() as f64;
        for m in &mut mean {
            *m /= n;
        }
        mean
    }

    /// Coordinate-wise mean and population std in f64.
    pub fn mean_std(&self) -> (Vec<f64>, Vec<f64>) {
        let mean = self.mean();
        let dim = self.dim();
        let mut var = vec![0.0f64; dim];
        for u in self.updates {
            for ((s, &m), &v) in var.iter_mut().zip(&mean).zip(u) {
                let d = v as f64 - m;
                *s += d * d;
            }
        }
        let n = self.updates.len() as f64;
        let std = var.into_iter().map(|s| math::sqrt(s / n)).collect();
        (mean, std)
    }

    /// Largest pairwise L2 distance among the benign updates.
    pub fn max_pairwise_distance(&self) -> f64 {
        let mut max = 0.0f64;
        for (i, a) in self.updates.iter().enumerate() {
            for b in &self.updates[i + 1..] {
                let d = l2_distance(a, b);
                if d > max {
                    max = d;
                }
            }
        }
        max
    }
}

fn l2_distance(a: &[f32], b: &[f32]) -> f64 {
    let sum: f64 = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum();
    math::sqrt(sum)
}

/// Gaussian noise on top of a base update, one independent draw per
/// coordinate from the caller's stream.
pub fn noise_attack(own_update: &[f32], sigma: f32, rng: &mut ChaCha8Rng) -> Vec<f32> {
    own_update
        .iter()
        .map(|&v| {
            let z: f32 = StandardNormal.sample(rng);
            v + sigma * z
        })
        .collect()
}

/// "A little is enough": hide at `mean - z_max * std` where `z_max` is the
/// normal quantile that keeps the crafted vector inside the benign spread.
pub fn alie_attack(view: &BenignView<'_>) -> Result<Vec<f32>> {
    let n = view.num_clients();
    let m = view.num_byzantine();
    if view.num_benign() < 2 {
        return Err(Error::Config(
            "alie needs at least two benign updates".to_string(),
        ));
    }

    // s = floor(n/2 + 1) - m supporters needed beyond the Byzantine ones.
    let s = (n / 2 + 1) as i64 - m as i64;
    let benign = (n - m) as f64;
    let q = ((n as i64 - m as i64 - s) as f64) / benign;
    let z_max = math::normal_quantile(q).ok_or_else(|| {
        Error::Config(format!(
            "alie quantile undefined for n={n}, m={m} (p={q})"
        ))
    })?;

    let (mean, std) = view.mean_std();
    Ok(mean
        .iter()
        .zip(&std)
        .map(|(&mu, &sd)| (mu - z_max * sd) as f32)
        .collect())
}

/// MinMax: push `gamma` times a unit perturbation away from the benign mean,
/// with the largest `gamma` (halving search from [`GAMMA_INIT`]) that keeps
/// the crafted update within the maximum pairwise benign distance of every
/// benign update.
pub fn minmax_attack(
    view: &BenignView<'_>,
    perturbation: Perturbation,
    tau: f64,
) -> Result<Vec<f32>> {
    if view.num_benign() < 2 {
        return Err(Error::Config(
            "minmax needs at least two benign updates".to_string(),
        ));
    }
    if !(tau > 0.0) {
        return Err(Error::Config(format!("minmax tau must be positive, got {tau}")));
    }

    let (mean, std) = view.mean_std();
    let dir = perturbation_direction(&mean, &std, perturbation);
    let Some(dir) = dir else {
        // Degenerate direction: the crafted update collapses onto the mean.
        return Ok(mean.iter().map(|&m| m as f32).collect());
    };

    let diameter = view.max_pairwise_distance();
    let feasible = |gamma: f64| -> bool {
        view.updates().iter().all(|u| {
            let sum: f64 = mean
                .iter()
                .zip(&dir)
                .zip(u.iter())
                .map(|((&mu, &p), &v)| {
                    let d = mu + gamma * p - v as f64;
                    d * d
                })
                .sum();
            math::sqrt(sum) <= diameter
        })
    };

    let mut gamma = GAMMA_INIT;
    let mut step = GAMMA_INIT / 2.0;
    let mut best = 0.0f64;
    loop {
        if feasible(gamma) {
            best = gamma;
            gamma += step;
        } else {
            gamma -= step;
        }
        if step < tau {
            break;
        }
        step *= 0.5;
    }

    Ok(mean
        .iter()
        .zip(&dir)
        .map(|(&mu, &p)| (mu + best * p) as f32)
        .collect())
}

/// Unit-length perturbation direction, or `None` when it degenerates to the
/// zero vector. A zero mean under [`Perturbation::UnitNegativeMean`] falls
/// back to the sign variant.
fn perturbation_direction(
    mean: &[f64],
    std: &[f64],
    perturbation: Perturbation,
) -> Option<Vec<f64>> {
    let norm = |v: &[f64]| math::sqrt(v.iter().map(|&x| x * x).sum());
    let raw: Vec<f64> = match perturbation {
        Perturbation::UnitNegativeMean => {
            let raw: Vec<f64> = mean.iter().map(|&m| -m).collect();
            if norm(&raw) == 0.0 {
                return perturbation_direction(mean, std, Perturbation::NegativeSign);
            }
            raw
        }
        Perturbation::NegativeSign => mean
            .iter()
            .map(|&m| {
                if m > 0.0 {
                    -1.0
                } else if m < 0.0 {
                    1.0
                } else {
                    0.0
                }
            })
            .collect(),
        Perturbation::NegativeStd => std.iter().map(|&s| -s).collect(),
    };
    let n = norm(&raw);
    if n == 0.0 {
        return None;
    }
    Some(raw.into_iter().map(|x| x / n).collect())
}

/// Inner-product manipulation: the negated, epsilon-scaled benign mean.
/// Accumulates in f64 and rounds to f32 once.
pub fn ipm_attack(view: &BenignView<'_>, epsilon: f32) -> Vec<f32> {
    let eps = epsilon as f64;
    view.mean().into_iter().map(|m| (-eps * m) as f32).collect()
}
