use rand::Rng;

/// Draws `k` distinct indices, each draw proportional to the remaining
/// weights. When every remaining weight is zero the draw is uniform over
/// what is left.
pub fn weighted_sample_without_replacement<R: Rng + ?Sized>(
    weights: &[f64],
    k: usize,
    rng: &mut R,
) -> Vec<usize> {
    let mut remaining: Vec<usize> = (0..weights.len()).collect();
    let mut picked = Vec::with_capacity(k.min(weights.len()));
    while picked.len() < k && !remaining.is_empty() {
        let total: f64 = remaining.iter().map(|&i| weights[i].max(0.0)).sum();
        let pos = if total > 0.0 && total.is_finite() {
            let r = rng.gen::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = None;
            for (pos, &i) in remaining.iter().enumerate() {
                let w = weights[i].max(0.0);
                if w == 0.0 {
                    continue;
                }
                acc += w;
                chosen = Some(pos);
                if r < acc {
                    break;
                }
            }
            chosen.expect("positive total implies a positive weight")
        } else {
            rng.gen_range(0..remaining.len())
        };
        picked.push(remaining.remove(pos));
    }
    picked
}
