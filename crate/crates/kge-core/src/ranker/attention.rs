//! Single-head scaled dot-product self-attention over entity slots.
//!
//! The fused output concatenates (a) the attended per-slot vectors and
//! (b) the flattened pre-softmax pairwise score matrix, so the scoring
//! layers downstream see both the mixed features and the raw pairwise
//! geometry the attention computed.

use rand::Rng;

use crate::math::{axpy, dot, outer_acc, DenseMatrix};
use crate::rng;

#[derive(Debug, Clone)]
pub struct AttentionParams {
    pub wq: DenseMatrix,
    pub wk: DenseMatrix,
    pub wv: DenseMatrix,
}

impl AttentionParams {
    /// Projections `(attn_dim x input_dim)`, initialized to the identity
    /// (rectangular: identity on the leading square block) plus small
    /// symmetry-breaking noise. At the start the pairwise logits then expose
    /// the raw dot-product geometry of the inputs, the same
    /// start-from-identity rule the relation transforms follow.
    pub fn init(input_dim: usize, attn_dim: usize, seed: u64) -> AttentionParams {
        let scale = 0.01 / (input_dim as f64).sqrt();
        let make = |k: u64| {
            let mut m = DenseMatrix::zeros(attn_dim, input_dim);
            let mut stream = rng::stream(seed, "attention-init", k);
            for x in m.data_mut() {
                *x = stream.random_range(-scale..scale);
            }
            for i in 0..attn_dim.min(input_dim) {
                m.row_mut(i)[i] += 1.0;
            }
            m
        };
        AttentionParams {
            wq: make(0),
            wk: make(1),
            wv: make(2),
        }
    }

    pub fn attn_dim(&self) -> usize {
        self.wq.rows()
    }

    /// Fused output width for `n_slots` inputs.
    pub fn output_dim(&self, n_slots: usize) -> usize {
        n_slots * self.attn_dim() + n_slots * n_slots
    }
}

/// Forward cache: everything the backward pass needs.
#[derive(Debug, Clone)]
pub struct AttentionForward {
    q: Vec<Vec<f64>>,
    k: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    /// Pre-softmax scaled logits, row-major `n_slots x n_slots`.
    pub logits: Vec<f64>,
    /// Softmax rows of `logits`.
    pub weights: Vec<f64>,
    /// `concat(attended slot outputs, logits)`.
    pub output: Vec<f64>,
}

/// Gradients from one backward pass.
#[derive(Debug, Clone)]
pub struct AttentionGradients {
    pub wq: DenseMatrix,
    pub wk: DenseMatrix,
    pub wv: DenseMatrix,
    pub slots: Vec<Vec<f64>>,
}

/// The fused feature vector for a slot sequence.
pub fn attend(slots: &[&[f64]], params: &AttentionParams) -> Vec<f64> {
    attend_forward(slots, params).output
}

pub fn attend_forward(slots: &[&[f64]], params: &AttentionParams) -> AttentionForward {
    let n = slots.len();
    assert!(n >= 2, "attention needs at least two slots");
    let da = params.attn_dim();
    let scale = 1.0 / (da as f64).sqrt();

    let q: Vec<Vec<f64>> = slots.iter().map(|x| params.wq.matvec(x)).collect();
    let k: Vec<Vec<f64>> = slots.iter().map(|x| params.wk.matvec(x)).collect();
    let v: Vec<Vec<f64>> = slots.iter().map(|x| params.wv.matvec(x)).collect();

    let mut logits = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            logits[i * n + j] = dot(&q[i], &k[j]) * scale;
        }
    }
    let mut weights = vec![0.0; n * n];
    for i in 0..n {
        let row = &logits[i * n..(i + 1) * n];
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for (w, &l) in weights[i * n..(i + 1) * n].iter_mut().zip(row) {
            *w = (l - m).exp();
            z += *w;
        }
        for w in weights[i * n..(i + 1) * n].iter_mut() {
            *w /= z;
        }
    }

    let mut output = Vec::with_capacity(n * da + n * n);
    for i in 0..n {
        let mut o = vec![0.0; da];
        for j in 0..n {
            axpy(&mut o, weights[i * n + j], &v[j]);
        }
        output.extend_from_slice(&o);
    }
    output.extend_from_slice(&logits);

    AttentionForward {
        q,
        k,
        v,
        logits,
        weights,
        output,
    }
}

/// Backpropagate `d_output` (same layout as `forward.output`) into the
/// projections and the slot inputs.
pub fn attend_backward(
    slots: &[&[f64]],
    params: &AttentionParams,
    forward: &AttentionForward,
    d_output: &[f64],
) -> AttentionGradients {
    let n = slots.len();
    let da = params.attn_dim();
    let din = slots[0].len();
    let scale = 1.0 / (da as f64).sqrt();
    assert_eq!(d_output.len(), n * da + n * n, "d_output layout mismatch");

    let d_attended = &d_output[..n * da];
    let d_logits_direct = &d_output[n * da..];

    // Attended outputs: o_i = sum_j A_ij v_j.
    let mut dv = vec![vec![0.0; da]; n];
    let mut d_weights = vec![0.0; n * n];
    for i in 0..n {
        let doi = &d_attended[i * da..(i + 1) * da];
        for j in 0..n {
            axpy(&mut dv[j], forward.weights[i * n + j], doi);
            d_weights[i * n + j] = dot(doi, &forward.v[j]);
        }
    }

    // Softmax rows: dL_ij = A_ij (dA_ij - sum_k dA_ik A_ik), plus the direct
    // path from the exposed logits.
    let mut d_logits = vec![0.0; n * n];
    for i in 0..n {
        let row_dot: f64 = (0..n)
            .map(|j| d_weights[i * n + j] * forward.weights[i * n + j])
            .sum();
        for j in 0..n {
            let a = forward.weights[i * n + j];
            d_logits[i * n + j] = a * (d_weights[i * n + j] - row_dot) + d_logits_direct[i * n + j];
        }
    }

    // Logits: L_ij = scale * q_i . k_j.
    let mut dq = vec![vec![0.0; da]; n];
    let mut dk = vec![vec![0.0; da]; n];
    for i in 0..n {
        for j in 0..n {
            let g = d_logits[i * n + j] * scale;
            axpy(&mut dq[i], g, &forward.k[j]);
            axpy(&mut dk[j], g, &forward.q[i]);
        }
    }

    let mut gwq = DenseMatrix::zeros(da, din);
    let mut gwk = DenseMatrix::zeros(da, din);
    let mut gwv = DenseMatrix::zeros(da, din);
    let mut d_slots = vec![vec![0.0; din]; n];
    for i in 0..n {
        outer_acc(&mut gwq, 1.0, &dq[i], slots[i]);
        outer_acc(&mut gwk, 1.0, &dk[i], slots[i]);
        outer_acc(&mut gwv, 1.0, &dv[i], slots[i]);
        axpy(&mut d_slots[i], 1.0, &params.wq.matvec_t(&dq[i]));
        axpy(&mut d_slots[i], 1.0, &params.wk.matvec_t(&dk[i]));
        axpy(&mut d_slots[i], 1.0, &params.wv.matvec_t(&dv[i]));
    }

    AttentionGradients {
        wq: gwq,
        wk: gwk,
        wv: gwv,
        slots: d_slots,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::check_gradient;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_slots(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect()
    }

    fn as_refs(slots: &[Vec<f64>]) -> Vec<&[f64]> {
        slots.iter().map(|s| s.as_slice()).collect()
    }

    #[test]
    fn identical_slots_attend_uniformly() {
        let params = AttentionParams::init(4, 4, 1);
        let slot = vec![0.3, -0.7, 0.2, 0.9];
        let fwd = attend_forward(&[&slot, &slot], &params);
        for &w in &fwd.weights {
            assert!((w - 0.5).abs() < 1e-12, "{w}");
        }
    }

    #[test]
    fn zero_query_projection_gives_uniform_weights() {
        let mut params = AttentionParams::init(4, 4, 2);
        for x in params.wq.data_mut() {
            *x = 0.0;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let slots = random_slots(&mut rng, 3, 4);
        let fwd = attend_forward(&as_refs(&slots), &params);
        for &w in &fwd.weights {
            assert!((w - 1.0 / 3.0).abs() < 1e-12, "{w}");
        }
    }

    #[test]
    fn output_is_permutation_equivariant() {
        let params = AttentionParams::init(5, 5, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let slots = random_slots(&mut rng, 4, 5);
        let fwd = attend_forward(&as_refs(&slots), &params);

        let perm = [2usize, 0, 3, 1];
        let permuted: Vec<Vec<f64>> = perm.iter().map(|&i| slots[i].clone()).collect();
        let fwd_p = attend_forward(&as_refs(&permuted), &params);

        let da = 5;
        let n = 4;
        for (new_i, &old_i) in perm.iter().enumerate() {
            for d in 0..da {
                let a = fwd.output[old_i * da + d];
                let b = fwd_p.output[new_i * da + d];
                assert!((a - b).abs() < 1e-12, "slot output mismatch");
            }
            for (new_j, &old_j) in perm.iter().enumerate() {
                let a = fwd.logits[old_i * n + old_j];
                let b = fwd_p.logits[new_i * n + new_j];
                assert!((a - b).abs() < 1e-12, "pairwise logit mismatch");
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (n, dim) = (3, 8);
        let params = AttentionParams::init(dim, dim, 7);
        let slots = random_slots(&mut rng, n, dim);
        let probe: Vec<f64> = (0..params.output_dim(n))
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();

        let objective = |p: &AttentionParams, s: &[Vec<f64>]| {
            dot(&attend(&as_refs(s), p), &probe)
        };
        let fwd = attend_forward(&as_refs(&slots), &params);
        let grads = attend_backward(&as_refs(&slots), &params, &fwd, &probe);

        for (name, which) in [("wq", 0), ("wk", 1), ("wv", 2)] {
            let current = match which {
                0 => &params.wq,
                1 => &params.wk,
                _ => &params.wv,
            };
            let analytic = match which {
                0 => &grads.wq,
                1 => &grads.wk,
                _ => &grads.wv,
            };
            let f = |x: &[f64]| {
                let mut p2 = params.clone();
                match which {
                    0 => p2.wq.data_mut().copy_from_slice(x),
                    1 => p2.wk.data_mut().copy_from_slice(x),
                    _ => p2.wv.data_mut().copy_from_slice(x),
                }
                objective(&p2, &slots)
            };
            let err = check_gradient(f, current.data(), analytic.data(), 1e-5);
            assert!(err < 1e-4, "{name} grad err {err}");
        }

        for i in 0..n {
            let f = |x: &[f64]| {
                let mut s2 = slots.clone();
                s2[i] = x.to_vec();
                objective(&params, &s2)
            };
            let err = check_gradient(f, &slots[i], &grads.slots[i], 1e-5);
            assert!(err < 1e-4, "slot {i} grad err {err}");
        }
    }

    #[test]
    #[should_panic(expected = "at least two slots")]
    fn single_slot_violates_the_contract() {
        let params = AttentionParams::init(4, 4, 1);
        attend(&[&[1.0, 0.0, 0.0, 0.0]], &params);
    }
}
