//! Similarity scores between embedding vectors.
//!
//! Both kinds follow one convention: larger is always better. Cosine is a
//! similarity already; the l2 kind returns the negated Euclidean distance.

use super::linalg::{dot, norm};

/// Norms below this are treated as zero; cosine of a zero vector is 0.
const COSINE_NORM_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistanceKind {
    Cosine,
    L2,
}

impl DistanceKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "cosine" => Some(DistanceKind::Cosine),
            "l2" => Some(DistanceKind::L2),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            DistanceKind::Cosine => "cosine",
            DistanceKind::L2 => "l2",
        }
    }
}

/// Score two vectors. Cosine lands in [-1, 1]; l2 is `-|u - v|` so that a
/// perfect match scores 0 and everything else is negative.
pub fn distance(kind: DistanceKind, u: &[f64], v: &[f64]) -> f64 {
    assert_eq!(u.len(), v.len(), "distance dimension mismatch");
    match kind {
        DistanceKind::Cosine => {
            let nu = norm(u);
            let nv = norm(v);
            if nu < COSINE_NORM_EPS || nv < COSINE_NORM_EPS {
                return 0.0;
            }
            dot(u, v) / (nu * nv)
        }
        DistanceKind::L2 => {
            let sq: f64 = u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum();
            -sq.sqrt()
        }
    }
}

/// Score plus its gradients with respect to both arguments.
///
/// At the non-differentiable points (zero-norm cosine input, coincident l2
/// points) the gradient is defined as zero.
pub fn distance_gradients(kind: DistanceKind, u: &[f64], v: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
    assert_eq!(u.len(), v.len(), "distance dimension mismatch");
    match kind {
        DistanceKind::Cosine => {
            let nu = norm(u);
            let nv = norm(v);
            if nu < COSINE_NORM_EPS || nv < COSINE_NORM_EPS {
                return (0.0, vec![0.0; u.len()], vec![0.0; v.len()]);
            }
            let c = dot(u, v) / (nu * nv);
            // d cos / du = v/(|u||v|) - cos * u/|u|^2
            let gu: Vec<f64> = u
                .iter()
                .zip(v)
                .map(|(ui, vi)| vi / (nu * nv) - c * ui / (nu * nu))
                .collect();
            let gv: Vec<f64> = u
                .iter()
                .zip(v)
                .map(|(ui, vi)| ui / (nu * nv) - c * vi / (nv * nv))
                .collect();
            (c, gu, gv)
        }
        DistanceKind::L2 => {
            let diff: Vec<f64> = u.iter().zip(v).map(|(a, b)| a - b).collect();
            let d = norm(&diff);
            if d < COSINE_NORM_EPS {
                return (0.0, vec![0.0; u.len()], vec![0.0; v.len()]);
            }
            let gu: Vec<f64> = diff.iter().map(|x| -x / d).collect();
            let gv: Vec<f64> = diff.iter().map(|x| x / d).collect();
            (-d, gu, gv)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::check_gradient;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn cosine_self_similarity_is_one() {
        let u = vec![0.3, -1.2, 4.0];
        assert!((distance(DistanceKind::Cosine, &u, &u) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cosine_orthogonal_is_zero() {
        let s = distance(DistanceKind::Cosine, &[1.0, 0.0], &[0.0, 1.0]);
        assert_eq!(s, 0.0);
    }

    #[test]
    fn l2_unit_axes() {
        let s = distance(DistanceKind::L2, &[1.0, 0.0], &[0.0, 1.0]);
        assert!((s - (-std::f64::consts::SQRT_2)).abs() < 1e-12);
    }

    #[test]
    fn zero_norm_cosine_is_zero_with_zero_gradient() {
        let (s, gu, gv) = distance_gradients(DistanceKind::Cosine, &[0.0, 0.0], &[1.0, 2.0]);
        assert_eq!(s, 0.0);
        assert!(gu.iter().chain(&gv).all(|&g| g == 0.0));
    }

    #[test]
    fn cosine_invariant_to_positive_rescaling() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let u: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
            let v: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
            let a = rng.random_range(0.01..100.0);
            let b = rng.random_range(0.01..100.0);
            let us: Vec<f64> = u.iter().map(|x| x * a).collect();
            let vs: Vec<f64> = v.iter().map(|x| x * b).collect();
            let s0 = distance(DistanceKind::Cosine, &u, &v);
            let s1 = distance(DistanceKind::Cosine, &us, &vs);
            assert!((s0 - s1).abs() < 1e-6, "{s0} vs {s1}");
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for kind in [DistanceKind::Cosine, DistanceKind::L2] {
            for _ in 0..20 {
                let u: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
                let v: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
                let (_, gu, gv) = distance_gradients(kind, &u, &v);

                let fu = |x: &[f64]| distance(kind, x, &v);
                let err_u = check_gradient(fu, &u, &gu, 1e-5);
                assert!(err_u < 1e-6, "{kind:?} grad-u err {err_u}");

                let fv = |x: &[f64]| distance(kind, &u, x);
                let err_v = check_gradient(fv, &v, &gv, 1e-5);
                assert!(err_v < 1e-6, "{kind:?} grad-v err {err_v}");
            }
        }
    }

    #[test]
    #[should_panic(expected = "distance dimension mismatch")]
    fn mismatched_dims_panic() {
        distance(DistanceKind::Cosine, &[1.0], &[1.0, 2.0]);
    }
}
