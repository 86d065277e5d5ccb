//! Small numeric helpers shared across modules.

/// Softmax restricted to `allowed` entries; the rest get exactly 0.
///
/// Returns `None` when nothing is allowed.
pub fn masked_softmax(logits: &[f64], allowed: &[bool]) -> Option<Vec<f64>> {
    debug_assert_eq!(logits.len(), allowed.len());
    let max = logits
        .iter()
        .zip(allowed)
        .filter(|(_, &a)| a)
        .map(|(l, _)| *l)
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return None;
    }
    let mut out: Vec<f64> = logits
        .iter()
        .zip(allowed)
        .map(|(l, &a)| if a { (l - max).exp() } else { 0.0 })
        .collect();
    let sum: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= sum);
    Some(out)
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= sum);
    out
}

/// `ln Σ exp(x)`, computed stably.
pub fn log_sum_exp(x: &[f64]) -> f64 {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + x.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(x: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in x.iter().enumerate() {
        if *v > x[best] {
            best = i;
        }
    }
    best
}

/// Indices sorted by descending value, ties by ascending index.
pub fn ranked(x: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[b].total_cmp(&x[a]).then(a.cmp(&b)));
    idx
}

/// Half-up rounding to `decimals` places.
///
/// A relative nudge absorbs binary representation error so that values
/// such as 0.05 round up as written.
pub fn round_half_up(x: f64, decimals: u32) -> f64 {
    let scale = 10f64.powi(decimals as i32);
    let scaled = x * scale;
    let nudge = scaled.abs() * 1e-12 + 1e-12;
    (scaled + 0.5 + nudge).floor() / scale
}

/// `85.3%`-style rendering of a fraction in `[0, 1]`.
pub fn percent_label(p: f64) -> String {
    format!("{:.1}%", round_half_up(p * 100.0, 1))
}
