use xprojct_core::Scalar;

/// Probability clamp applied before taking logarithms.
pub const PROB_EPS: f64 = 1e-7;

/// Mean binary cross-entropy over all entries of `probs` against `targets`.
pub fn bce_loss<S: Scalar>(probs: &[S], targets: &[S]) -> S {
    assert_eq!(probs.len(), targets.len(), "probabilities and targets differ in length");
    let total: f64 = probs
        .iter()
        .zip(targets)
        .map(|(&p, &t)| {
            let p = p.as_f64().clamp(PROB_EPS, 1.0 - PROB_EPS);
            let t = t.as_f64();
            -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
        })
        .sum();
    S::of(total / probs.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_prediction_is_near_zero() {
        let t = [0.0f64, 1.0, 1.0, 0.0];
        let l = bce_loss(&t, &t);
        assert!(l >= 0.0 && l <= 1.2e-7);
    }

    #[test]
    fn half_everywhere_is_ln2() {
        let p = [0.5f32; 28];
        let t: Vec<f32> = (0..28).map(|i| (i % 3 == 0) as u8 as f32).collect();
        assert!((bce_loss(&p, &t) - std::f32::consts::LN_2).abs() < 1e-6);
    }
}
