//! Brute-force reference for top-k selection.

/// Retained index set by full sort on (magnitude desc, index asc), returned
/// in ascending index order together with the retained values and `k`.
pub fn brute_force_topk(dense: &[f32], kappa: f64) -> (usize, Vec<u32>, Vec<f32>) {
    let d = dense.len();
    assert!(d > 0, "oracle needs a nonempty vector");
    let k = ((kappa * d as f64) as usize).max(1).min(d);

    let mut ranked: Vec<u32> = (0..d as u32).collect();
    ranked.sort_by(|&a, &b| {
        dense[b as usize]
            .abs()
            .total_cmp(&dense[a as usize].abs())
            .then(a.cmp(&b))
    });
    let mut indices = ranked[..k].to_vec();
    indices.sort_unstable();
    let values = indices.iter().map(|&i| dense[i as usize]).collect();
    (k, indices, values)
}

/// Apply drop-to-zero sparsification directly: keep the k top-magnitude
/// entries, zero the rest.
pub fn brute_force_sparsify(dense: &[f32], kappa: f64) -> Vec<f32> {
    let (_, indices, _) = brute_force_topk(dense, kappa);
    let mut out = vec![0.0f32; dense.len()];
    for &i in &indices {
        out[i as usize] = dense[i as usize];
    }
    out
}
