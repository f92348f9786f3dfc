//! Grid-scan reference for the MinMax scale search.

use spikefed::attacks::Perturbation;

fn mean64(benign: &[Vec<f32>]) -> Vec<f64> {
    let dim = benign[0].len();
    let mut mean = vec![0.0f64; dim];
    for u in benign {
        for (m, &v) in mean.iter_mut().zip(u) {
            *m += v as f64;
        }
    }
    for m in &mut mean {
        *m /= benign.len() as f64;
    }
    mean
}

fn std64(benign: &[Vec<f32>], mean: &[f64]) -> Vec<f64> {
    let mut var = vec![0.0f64; mean.len()];
    for u in benign {
        for ((s, &m), &v) in var.iter_mut().zip(mean).zip(u) {
            let d = v as f64 - m;
            *s += d * d;
        }
    }
    var.into_iter()
        .map(|s| (s / benign.len() as f64).sqrt())
        .collect()
}

fn unit(v: Vec<f64>) -> Option<Vec<f64>> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n == 0.0 {
        None
    } else {
        Some(v.into_iter().map(|x| x / n).collect())
    }
}

/// The unit perturbation direction for a benign set, mirroring the attack's
/// fallback from a zero mean to the sign variant.
pub fn perturbation_direction(benign: &[Vec<f32>], kind: Perturbation) -> Option<Vec<f64>> {
    let mean = mean64(benign);
    match kind {
        Perturbation::UnitNegativeMean => match unit(mean.iter().map(|&m| -m).collect()) {
            Some(dir) => Some(dir),
            None => perturbation_direction(benign, Perturbation::NegativeSign),
        },
        Perturbation::NegativeSign => unit(
            mean.iter()
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
        ),
        Perturbation::NegativeStd => unit(std64(benign, &mean).into_iter().map(|s| -s).collect()),
    }
}

fn max_distance_to(benign: &[Vec<f32>], point: &[f64]) -> f64 {
    benign
        .iter()
        .map(|u| {
            u.iter()
                .zip(point)
                .map(|(&v, &p)| (v as f64 - p) * (v as f64 - p))
                .sum::<f64>()
                .sqrt()
        })
        .fold(0.0, f64::max)
}

fn diameter(benign: &[Vec<f32>]) -> f64 {
    let mut max = 0.0f64;
    for (i, a) in benign.iter().enumerate() {
        for b in &benign[i + 1..] {
            let d = a
                .iter()
                .zip(b)
                .map(|(&x, &y)| (x as f64 - y as f64) * (x as f64 - y as f64))
                .sum::<f64>()
                .sqrt();
            max = max.max(d);
        }
    }
    max
}

/// Largest feasible scale by a two-stage grid scan: coarse over the whole
/// feasible range, then fine around the coarse optimum. The feasible set is
/// an interval starting at zero (the constraint is convex in the scale), so
/// scanning upward is exact to the fine step.
pub fn grid_search_gamma(benign: &[Vec<f32>], kind: Perturbation, fine_step: f64) -> f64 {
    let mean = mean64(benign);
    let Some(dir) = perturbation_direction(benign, kind) else {
        return 0.0;
    };
    let diam = diameter(benign);
    let feasible = |gamma: f64| {
        let point: Vec<f64> = mean
            .iter()
            .zip(&dir)
            .map(|(&m, &p)| m + gamma * p)
            .collect();
        max_distance_to(benign, &point) <= diam
    };

    // Any feasible point is at most 2*diam from the mean along a unit ray.
    let hi = 2.0 * diam + 1.0;
    let coarse_step = 0.01;
    let mut coarse = 0.0f64;
    let mut g = 0.0;
    while g <= hi {
        if feasible(g) {
            coarse = g;
        }
        g += coarse_step;
    }

    let mut best = coarse;
    let mut g = coarse;
    while g <= coarse + coarse_step + fine_step {
        if feasible(g) {
            best = g;
        }
        g += fine_step;
    }
    best
}

/// Scale actually used by a crafted MinMax update: `||crafted - mean||`,
/// valid because the perturbation direction has unit length.
pub fn extract_gamma(benign: &[Vec<f32>], crafted: &[f32]) -> f64 {
    let mean = mean64(benign);
    crafted
        .iter()
        .zip(&mean)
        .map(|(&c, &m)| (c as f64 - m) * (c as f64 - m))
        .sum::<f64>()
        .sqrt()
}
