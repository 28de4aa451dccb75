//! Training losses over per-positive score groups.
//!
//! All three losses take the positives' scores and, per positive, the scores
//! of its attached negatives, and return the loss with gradients for every
//! score. Higher score = more plausible throughout.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossConfig {
    /// Temperature-scaled softmax over each positive and its negatives.
    SampledSoftmax { temperature: f64 },
    /// Pairwise hinge on every (positive, negative) pair.
    MarginRanking { margin: f64 },
    /// Hinge on the positive against the mean of its negatives.
    MeanNegativeMargin { margin: f64 },
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        match *self {
            LossConfig::SampledSoftmax { temperature } if temperature <= 0.0 => Err(
                Error::Config(format!("temperature must be > 0, got {temperature}")),
            ),
            LossConfig::MarginRanking { margin } | LossConfig::MeanNegativeMargin { margin }
                if margin <= 0.0 =>
            {
                Err(Error::Config(format!("margin must be > 0, got {margin}")))
            }
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LossConfig::SampledSoftmax { .. } => "sampled_softmax",
            LossConfig::MarginRanking { .. } => "margin_ranking",
            LossConfig::MeanNegativeMargin { .. } => "mean_negative_margin",
        }
    }

    pub fn compute(&self, pos_scores: &[f64], neg_scores: &[Vec<f64>]) -> (f64, LossGradients) {
        match *self {
            LossConfig::SampledSoftmax { temperature } => {
                sampled_softmax_loss(pos_scores, neg_scores, temperature)
            }
            LossConfig::MarginRanking { margin } => {
                margin_ranking_loss(pos_scores, neg_scores, margin)
            }
            LossConfig::MeanNegativeMargin { margin } => {
                mean_negative_margin_loss(pos_scores, neg_scores, margin)
            }
        }
    }
}

/// d loss / d score, mirroring the input layout.
#[derive(Debug, Clone)]
pub struct LossGradients {
    pub pos: Vec<f64>,
    pub neg: Vec<Vec<f64>>,
}

fn check_groups(pos_scores: &[f64], neg_scores: &[Vec<f64>]) {
    assert!(!pos_scores.is_empty(), "loss over empty positives");
    assert_eq!(
        pos_scores.len(),
        neg_scores.len(),
        "one negative group per positive"
    );
    assert!(
        neg_scores.iter().all(|n| !n.is_empty()),
        "every positive needs at least one negative"
    );
}

/// Mean over positives of `-log(e^{s+/tau} / (e^{s+/tau} + sum e^{s-/tau}))`,
/// computed with max-shift stabilization.
pub fn sampled_softmax_loss(
    pos_scores: &[f64],
    neg_scores: &[Vec<f64>],
    temperature: f64,
) -> (f64, LossGradients) {
    check_groups(pos_scores, neg_scores);
    assert!(temperature > 0.0, "temperature must be > 0");
    let inv_p = 1.0 / pos_scores.len() as f64;
    let mut loss = 0.0;
    let mut grad_pos = vec![0.0; pos_scores.len()];
    let mut grad_neg: Vec<Vec<f64>> = neg_scores.iter().map(|n| vec![0.0; n.len()]).collect();
    for (i, (&p, negs)) in pos_scores.iter().zip(neg_scores).enumerate() {
        let m = negs.iter().copied().fold(p, f64::max);
        let zp = ((p - m) / temperature).exp();
        let mut z = zp;
        for &n in negs {
            z += ((n - m) / temperature).exp();
        }
        loss += inv_p * (z.ln() - (p - m) / temperature);
        grad_pos[i] = inv_p * (zp / z - 1.0) / temperature;
        for (j, &n) in negs.iter().enumerate() {
            grad_neg[i][j] = inv_p * (((n - m) / temperature).exp() / z) / temperature;
        }
    }
    (
        loss,
        LossGradients {
            pos: grad_pos,
            neg: grad_neg,
        },
    )
}

/// `(1/(|P|*|N|)) sum_P sum_N max(0, margin - (s+ - s-))`; the subgradient at
/// the hinge point is 0. Ragged groups normalize per group.
pub fn margin_ranking_loss(
    pos_scores: &[f64],
    neg_scores: &[Vec<f64>],
    margin: f64,
) -> (f64, LossGradients) {
    check_groups(pos_scores, neg_scores);
    assert!(margin > 0.0, "margin must be > 0");
    let inv_p = 1.0 / pos_scores.len() as f64;
    let mut loss = 0.0;
    let mut grad_pos = vec![0.0; pos_scores.len()];
    let mut grad_neg: Vec<Vec<f64>> = neg_scores.iter().map(|n| vec![0.0; n.len()]).collect();
    for (i, (&p, negs)) in pos_scores.iter().zip(neg_scores).enumerate() {
        let w = inv_p / negs.len() as f64;
        for (j, &n) in negs.iter().enumerate() {
            let gap = margin - (p - n);
            if gap > 0.0 {
                loss += w * gap;
                grad_pos[i] -= w;
                grad_neg[i][j] += w;
            }
        }
    }
    (
        loss,
        LossGradients {
            pos: grad_pos,
            neg: grad_neg,
        },
    )
}

/// `(1/|P|) sum_P max(0, margin - (s+ - mean_N s-))`.
pub fn mean_negative_margin_loss(
    pos_scores: &[f64],
    neg_scores: &[Vec<f64>],
    margin: f64,
) -> (f64, LossGradients) {
    check_groups(pos_scores, neg_scores);
    assert!(margin > 0.0, "margin must be > 0");
    let inv_p = 1.0 / pos_scores.len() as f64;
    let mut loss = 0.0;
    let mut grad_pos = vec![0.0; pos_scores.len()];
    let mut grad_neg: Vec<Vec<f64>> = neg_scores.iter().map(|n| vec![0.0; n.len()]).collect();
    for (i, (&p, negs)) in pos_scores.iter().zip(neg_scores).enumerate() {
        let mean: f64 = negs.iter().sum::<f64>() / negs.len() as f64;
        let gap = margin - (p - mean);
        if gap > 0.0 {
            loss += inv_p * gap;
            grad_pos[i] -= inv_p;
            for g in grad_neg[i].iter_mut() {
                *g += inv_p / negs.len() as f64;
            }
        }
    }
    (
        loss,
        LossGradients {
            pos: grad_pos,
            neg: grad_neg,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::check_gradient;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn softmax_symmetric_pairs() {
        let (loss, _) = sampled_softmax_loss(&[0.3], &[vec![0.3]], 0.7);
        assert!((loss - 2.0_f64.ln()).abs() < 1e-12);
        let (loss3, _) = sampled_softmax_loss(&[0.3], &[vec![0.3, 0.3]], 0.7);
        assert!((loss3 - 3.0_f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn softmax_sharp_temperature() {
        // s+=1, s-=0, tau=0.1: loss = ln(1 + e^{-10}).
        let (loss, _) = sampled_softmax_loss(&[1.0], &[vec![0.0]], 0.1);
        let oracle = (-10.0_f64).exp().ln_1p();
        assert!((loss - oracle).abs() < 1e-15, "{loss} vs {oracle}");
        assert!((loss - 4.54e-5).abs() < 1e-7);
    }

    #[test]
    fn softmax_is_shift_invariant_per_group() {
        let pos = vec![0.4, -0.2];
        let negs = vec![vec![0.1, 0.3], vec![-0.5, 0.0]];
        let (loss, grads) = sampled_softmax_loss(&pos, &negs, 0.3);
        // Shift group 0 by a constant.
        let shifted_pos = vec![0.4 + 7.5, -0.2];
        let shifted_negs = vec![vec![0.1 + 7.5, 0.3 + 7.5], vec![-0.5, 0.0]];
        let (loss2, grads2) = sampled_softmax_loss(&shifted_pos, &shifted_negs, 0.3);
        assert!((loss - loss2).abs() < 1e-12);
        for (a, b) in grads.pos.iter().zip(&grads2.pos) {
            assert!((a - b).abs() < 1e-12);
        }
        for (a, b) in grads.neg.iter().flatten().zip(grads2.neg.iter().flatten()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_gradient_scales_inversely_with_temperature() {
        let pos = vec![0.4];
        let negs = vec![vec![0.1, -0.3, 0.2, 0.05]];
        let norm = |tau: f64| {
            let (_, g) = sampled_softmax_loss(&pos, &negs, tau);
            let mut sq = g.pos[0] * g.pos[0];
            for x in &g.neg[0] {
                sq += x * x;
            }
            sq.sqrt()
        };
        let (g1, g10, g100) = (norm(1.0), norm(10.0), norm(100.0));
        // Between 10 and 100 the softmax itself is nearly constant, so the
        // ratio is almost exactly the temperature ratio.
        assert!((g10 / g100 / 10.0 - 1.0).abs() < 0.05, "{}", g10 / g100);
        assert!(g1 / g10 > 5.0 && g1 / g10 < 15.0, "{}", g1 / g10);
    }

    #[test]
    fn margin_inactive_hinge_is_zero() {
        let (loss, grads) = margin_ranking_loss(&[1.0], &[vec![0.0]], 0.5);
        assert_eq!(loss, 0.0);
        assert_eq!(grads.pos[0], 0.0);
    }

    #[test]
    fn margin_active_hinge_value() {
        let (loss, _) = margin_ranking_loss(&[0.2], &[vec![0.1]], 0.5);
        assert!((loss - 0.4).abs() < 1e-12);
    }

    #[test]
    fn margin_all_equal_scores_saturate_at_margin() {
        let (loss, _) = margin_ranking_loss(&[0.3, 0.3], &[vec![0.3, 0.3], vec![0.3, 0.3]], 1.0);
        assert!((loss - 1.0).abs() < 1e-12);
    }

    #[test]
    fn margin_exact_hinge_point_has_zero_subgradient() {
        // s+ - s- == margin exactly: no loss, no gradient.
        let (loss, grads) = margin_ranking_loss(&[0.5], &[vec![0.0]], 0.5);
        assert_eq!(loss, 0.0);
        assert_eq!(grads.pos[0], 0.0);
        assert_eq!(grads.neg[0][0], 0.0);
    }

    #[test]
    fn mean_negative_boundary_is_zero() {
        // Negatives' mean equals s+ - margin: hinge lands exactly at zero.
        let (loss, _) = mean_negative_margin_loss(&[0.8], &[vec![0.2, 0.4]], 0.5);
        assert_eq!(loss, 0.0);
    }

    #[test]
    fn mean_negative_substitution() {
        let (loss, _) = mean_negative_margin_loss(&[0.5], &[vec![0.1, 0.3]], 0.5);
        assert!((loss - 0.2).abs() < 1e-12);
    }

    #[test]
    fn mean_negative_equals_margin_ranking_for_single_negative() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..50 {
            let pos: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let negs: Vec<Vec<f64>> = (0..3).map(|_| vec![rng.random_range(-1.0..1.0)]).collect();
            let (a, ga) = mean_negative_margin_loss(&pos, &negs, 0.7);
            let (b, gb) = margin_ranking_loss(&pos, &negs, 0.7);
            assert!((a - b).abs() < 1e-12);
            assert_eq!(ga.pos, gb.pos);
        }
    }

    /// Flatten (pos, negs) into one parameter vector for the oracle.
    fn gradcheck_loss(
        f: impl Fn(&[f64], &[Vec<f64>]) -> (f64, LossGradients),
        pos: &[f64],
        negs: &[Vec<f64>],
    ) -> f64 {
        let mut flat: Vec<f64> = pos.to_vec();
        for n in negs {
            flat.extend_from_slice(n);
        }
        let unflatten = |x: &[f64]| {
            let p = x[..pos.len()].to_vec();
            let mut off = pos.len();
            let n: Vec<Vec<f64>> = negs
                .iter()
                .map(|group| {
                    let g = x[off..off + group.len()].to_vec();
                    off += group.len();
                    g
                })
                .collect();
            (p, n)
        };
        let (_, grads) = f(pos, negs);
        let mut analytic = grads.pos.clone();
        for g in &grads.neg {
            analytic.extend_from_slice(g);
        }
        let obj = |x: &[f64]| {
            let (p, n) = unflatten(x);
            f(&p, &n).0
        };
        check_gradient(obj, &flat, &analytic, 1e-6)
    }

    #[test]
    fn all_losses_pass_the_gradient_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for trial in 0..30 {
            let n_pos = rng.random_range(1..4);
            let pos: Vec<f64> = (0..n_pos).map(|_| rng.random_range(-1.0..1.0)).collect();
            let negs: Vec<Vec<f64>> = (0..n_pos)
                .map(|_| {
                    (0..rng.random_range(1..5))
                        .map(|_| rng.random_range(-1.0..1.0))
                        .collect()
                })
                .collect();
            let e1 = gradcheck_loss(|p, n| sampled_softmax_loss(p, n, 0.37), &pos, &negs);
            assert!(e1 < 1e-6, "softmax trial {trial}: {e1}");
            // Hinges are only piecewise smooth; nudge away from the kink.
            let e2 = gradcheck_loss(|p, n| margin_ranking_loss(p, n, 0.5111), &pos, &negs);
            assert!(e2 < 1e-6, "margin trial {trial}: {e2}");
            let e3 = gradcheck_loss(|p, n| mean_negative_margin_loss(p, n, 0.5111), &pos, &negs);
            assert!(e3 < 1e-6, "mean-negative trial {trial}: {e3}");
        }
    }

    #[test]
    #[should_panic(expected = "empty positives")]
    fn empty_positives_violate_the_contract() {
        sampled_softmax_loss(&[], &[], 0.1);
    }
}
