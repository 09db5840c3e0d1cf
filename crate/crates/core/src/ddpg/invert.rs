/// Scale factor applied to an action-parameter gradient so updates slow
/// down near the bounds and reverse once `p` is outside them.
pub fn inverting_factor(grad: f64, p: f64, p_min: f64, p_max: f64) -> f64 {
    debug_assert!(p_max > p_min);
    let range = p_max - p_min;
    if grad >= 0.0 {
        (p_max - p) / range
    } else {
        (p - p_min) / range
    }
}

/// Applies [`inverting_factor`] in place to a batch of action gradients laid
/// out row-major with one row per sample.
pub fn invert_gradients(grad: &mut [f64], p: &[f64], p_min: &[f64], p_max: &[f64]) {
    let dim = p_min.len();
    assert_eq!(grad.len(), p.len());
    assert_eq!(p_max.len(), dim);
    for (g_row, p_row) in grad.chunks_exact_mut(dim).zip(p.chunks_exact(dim)) {
        for j in 0..dim {
            g_row[j] *= inverting_factor(g_row[j], p_row[j], p_min[j], p_max[j]);
        }
    }
}
