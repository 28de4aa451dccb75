//! Mann-Whitney AUC: the probability a random positive outscores a random
//! negative, ties at half weight.

use crate::error::{Error, Result};

pub fn auc(labels: &[bool], scores: &[f64]) -> Result<f64> {
    assert_eq!(labels.len(), scores.len(), "labels/scores length mismatch");
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Metric(
            "AUC is undefined with a single class".into(),
        ));
    }
    // Rank-sum form: sort by score, assign average ranks to ties, then
    // U = sum(pos ranks) - n_pos(n_pos+1)/2. Tie groups get half-integer
    // average ranks, so everything stays exact in f64.
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // Positions i..=j (0-based) share the average rank in 1-based terms.
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            if labels[idx] {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// O(n^2) pairwise oracle: wins count 1, ties count 1/2.
    fn pairwise_auc(labels: &[bool], scores: &[f64]) -> f64 {
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for (i, &li) in labels.iter().enumerate() {
            if !li {
                continue;
            }
            for (j, &lj) in labels.iter().enumerate() {
                if lj {
                    continue;
                }
                pairs += 1.0;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
        wins / pairs
    }

    #[test]
    fn perfect_separation_is_one() {
        assert_eq!(auc(&[true, false], &[0.9, 0.1]).unwrap(), 1.0);
    }

    #[test]
    fn all_ties_is_half() {
        assert_eq!(
            auc(&[true, false, true, false], &[0.5, 0.5, 0.5, 0.5]).unwrap(),
            0.5
        );
    }

    #[test]
    fn single_class_is_an_error() {
        let err = auc(&[true, true], &[0.1, 0.2]).unwrap_err();
        assert!(err.to_string().contains("single class"), "{err}");
    }

    #[test]
    fn matches_pairwise_oracle_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for trial in 0..100 {
            let n = rng.random_range(2..=200);
            let mut labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
            // Force both classes.
            labels[0] = true;
            if labels.iter().all(|&l| l) {
                labels[1 % n] = false;
            }
            // Quantized scores so ties actually occur.
            let scores: Vec<f64> = (0..n)
                .map(|_| (rng.random_range(0..12) as f64) / 4.0)
                .collect();
            let fast = auc(&labels, &scores).unwrap();
            let slow = pairwise_auc(&labels, &scores);
            assert_eq!(fast, slow, "trial {trial}");
        }
    }
}
