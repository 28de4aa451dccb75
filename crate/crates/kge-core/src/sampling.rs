//! Batch composition and negative sampling.
//!
//! Each edge type feeds a cyclic reader that reshuffles per epoch, so one
//! epoch consumes every positive exactly once. A batch takes a fixed number
//! of positives from every edge type (largest-remainder rounding of the mix
//! fractions) and attaches `k_uniform` tails drawn from a pre-sampled
//! uniform pool plus `k_in_batch` tails borrowed from other positives of the
//! same edge type. Corruption always replaces the tail.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::rng;
use crate::schema::{EdgeTypeId, EntityTypeId};
use crate::store::{Triple, TripleStore};

/// Per-edge-type share of every training batch.
#[derive(Debug, Clone)]
pub struct MixConfig {
    /// (edge type, fraction); fractions are >= 0 and sum to 1.
    pub fractions: Vec<(EdgeTypeId, f64)>,
    pub batch_size: usize,
}

impl MixConfig {
    /// Proportional-to-volume default with a floor of one slot per edge type
    /// that has any edges at all.
    pub fn proportional(store: &TripleStore, batch_size: usize) -> Result<MixConfig> {
        let counts = store.edge_counts();
        let total: usize = counts.iter().sum();
        if total == 0 {
            return Err(Error::Config("store has no edges to mix".into()));
        }
        let fractions = counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(i, &c)| (EdgeTypeId(i), c as f64 / total as f64))
            .collect();
        let mix = MixConfig {
            fractions,
            batch_size,
        };
        mix.validate()?;
        Ok(mix)
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if self.fractions.iter().any(|(_, f)| *f < 0.0 || !f.is_finite()) {
            return Err(Error::Config("mix fractions must be finite and >= 0".into()));
        }
        let sum: f64 = self.fractions.iter().map(|(_, f)| f).sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(Error::Config(format!(
                "mix fractions must sum to 1, got {sum}"
            )));
        }
        let nonzero = self.fractions.iter().filter(|(_, f)| *f > 0.0).count();
        if nonzero > self.batch_size {
            return Err(Error::Config(format!(
                "batch_size {} cannot give every one of {nonzero} edge types a slot",
                self.batch_size
            )));
        }
        Ok(())
    }

    /// Largest-remainder rounding of `fraction * batch_size`, with a floor of
    /// one for every nonzero fraction and ties broken by declaration order.
    pub fn counts(&self) -> Vec<(EdgeTypeId, usize)> {
        let b = self.batch_size;
        let mut counts: Vec<usize> = Vec::with_capacity(self.fractions.len());
        let mut remainders: Vec<(usize, f64)> = Vec::new();
        let mut assigned = 0usize;
        for (i, (_, f)) in self.fractions.iter().enumerate() {
            let exact = f * b as f64;
            let floor = exact.floor() as usize;
            counts.push(floor);
            assigned += floor;
            remainders.push((i, exact - floor as f64));
        }
        // Hand out the leftover slots by remainder, declaration order on ties.
        let mut leftover = b.saturating_sub(assigned);
        remainders.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        for (i, _) in remainders {
            if leftover == 0 {
                break;
            }
            counts[i] += 1;
            leftover -= 1;
        }
        // Floor of 1: steal from the largest counts for starved nonzero types.
        loop {
            let Some(starved) = counts
                .iter()
                .enumerate()
                .position(|(i, &c)| c == 0 && self.fractions[i].1 > 0.0)
            else {
                break;
            };
            let richest = counts
                .iter()
                .enumerate()
                .max_by_key(|(_, &c)| c)
                .map(|(i, _)| i)
                .unwrap();
            counts[richest] -= 1;
            counts[starved] += 1;
        }
        self.fractions
            .iter()
            .zip(counts)
            .map(|(&(et, _), c)| (et, c))
            .collect()
    }
}

/// Pre-sampled uniform negatives for one entity type (with replacement).
#[derive(Debug, Clone)]
pub struct NegativePool {
    pub entity_type: EntityTypeId,
    entries: Vec<u32>,
}

impl NegativePool {
    pub fn entries(&self) -> &[u32] {
        &self.entries
    }

    pub fn draw(&self, rng: &mut impl Rng) -> u32 {
        self.entries[rng.random_range(0..self.entries.len())]
    }
}

/// Sample `pool_size` entities of `entity_type` uniformly with replacement.
pub fn build_pool(
    store: &TripleStore,
    entity_type: EntityTypeId,
    pool_size: usize,
    seed: u64,
) -> Result<NegativePool> {
    let vocab_len = store.vocab(entity_type).len();
    if vocab_len == 0 {
        return Err(Error::Config(format!(
            "cannot build a negative pool over empty vocabulary `{}`",
            store.schema().entity_name(entity_type)
        )));
    }
    if pool_size == 0 {
        return Err(Error::Config("pool_size must be >= 1".into()));
    }
    let mut stream = rng::stream(seed, "negative-pool", entity_type.0 as u64);
    let entries = (0..pool_size)
        .map(|_| stream.random_range(0..vocab_len) as u32)
        .collect();
    Ok(NegativePool {
        entity_type,
        entries,
    })
}

/// Cyclic reader over one edge type's positives, reshuffled per epoch.
#[derive(Debug)]
pub struct EdgeStream {
    edge_type: EdgeTypeId,
    order: Vec<u32>,
    cursor: usize,
    epoch: u64,
    rng: ChaCha8Rng,
}

impl EdgeStream {
    pub fn new(store: &TripleStore, edge_type: EdgeTypeId, seed: u64) -> Result<EdgeStream> {
        let n = store.edges(edge_type).len();
        if n == 0 {
            return Err(Error::Config(format!(
                "edge type `{}` has no training edges",
                store.schema().edge_name(edge_type)
            )));
        }
        let mut stream = EdgeStream {
            edge_type,
            order: (0..n as u32).collect(),
            cursor: 0,
            epoch: 0,
            rng: rng::stream(seed, "edge-stream", edge_type.0 as u64),
        };
        stream.order.shuffle(&mut stream.rng);
        Ok(stream)
    }

    pub fn edge_type(&self) -> EdgeTypeId {
        self.edge_type
    }

    /// Completed passes over the edge list.
    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    fn next_index(&mut self) -> u32 {
        let i = self.order[self.cursor];
        self.cursor += 1;
        if self.cursor == self.order.len() {
            self.cursor = 0;
            self.epoch += 1;
            self.order.shuffle(&mut self.rng);
        }
        i
    }
}

/// Positives for one edge type within a batch, with attached negatives.
#[derive(Debug, Clone)]
pub struct BatchGroup {
    pub edge_type: EdgeTypeId,
    pub positives: Vec<Triple>,
    /// `k_uniform + k_in_batch` corrupted tails per positive, flattened.
    pub negative_tails: Vec<u32>,
    pub negatives_per_positive: usize,
}

impl BatchGroup {
    pub fn negatives_of(&self, positive_index: usize) -> &[u32] {
        let k = self.negatives_per_positive;
        &self.negative_tails[positive_index * k..(positive_index + 1) * k]
    }
}

#[derive(Debug, Clone, Default)]
pub struct BatchStats {
    /// In-batch draws that fell back to the uniform pool because the group
    /// had a single positive.
    pub in_batch_shortfall: usize,
}

#[derive(Debug, Clone)]
pub struct TrainBatch {
    pub groups: Vec<BatchGroup>,
    pub stats: BatchStats,
}

impl TrainBatch {
    pub fn total_positives(&self) -> usize {
        self.groups.iter().map(|g| g.positives.len()).sum()
    }
}

/// Pull the next batch of positives, per-type counts given by `mix`.
pub fn compose_batch(
    store: &TripleStore,
    streams: &mut [EdgeStream],
    mix: &MixConfig,
) -> Vec<(EdgeTypeId, Vec<Triple>)> {
    let counts = mix.counts();
    let mut out = Vec::with_capacity(counts.len());
    for (edge_type, count) in counts {
        if count == 0 {
            continue;
        }
        let stream = streams
            .iter_mut()
            .find(|s| s.edge_type() == edge_type)
            .expect("a stream exists for every mixed edge type");
        let edges = store.edges(edge_type);
        let positives = (0..count)
            .map(|_| edges[stream.next_index() as usize])
            .collect();
        out.push((edge_type, positives));
    }
    out
}

/// Attach `k_uniform` pool negatives and `k_in_batch` same-type in-batch
/// negatives to every positive. A group with a single positive cannot donate
/// in-batch tails; the shortfall is covered from the pool and counted in the
/// batch stats. Coincidental self-negatives are kept.
pub fn attach_negatives(
    store: &TripleStore,
    positives: Vec<(EdgeTypeId, Vec<Triple>)>,
    pools: &[NegativePool],
    k_uniform: usize,
    k_in_batch: usize,
    rng: &mut ChaCha8Rng,
) -> Result<TrainBatch> {
    if k_uniform + k_in_batch == 0 {
        return Err(Error::Config(
            "need at least one negative per positive (k_uniform + k_in_batch >= 1)".into(),
        ));
    }
    let mut stats = BatchStats::default();
    let mut groups = Vec::with_capacity(positives.len());
    for (edge_type, group_positives) in positives {
        let tail_type = store.schema().edge_types()[edge_type.0].tail;
        let pool = pools
            .iter()
            .find(|p| p.entity_type == tail_type)
            .ok_or_else(|| {
                Error::Config(format!(
                    "no negative pool for entity type `{}`",
                    store.schema().entity_name(tail_type)
                ))
            })?;
        let n = group_positives.len();
        let k = k_uniform + k_in_batch;
        let mut negative_tails = Vec::with_capacity(n * k);
        for (i, _) in group_positives.iter().enumerate() {
            for _ in 0..k_uniform {
                negative_tails.push(pool.draw(rng));
            }
            for _ in 0..k_in_batch {
                if n < 2 {
                    stats.in_batch_shortfall += 1;
                    negative_tails.push(pool.draw(rng));
                } else {
                    let mut j = rng.random_range(0..n - 1);
                    if j >= i {
                        j += 1;
                    }
                    negative_tails.push(group_positives[j].tail);
                }
            }
        }
        groups.push(BatchGroup {
            edge_type,
            positives: group_positives,
            negative_tails,
            negatives_per_positive: k,
        });
    }
    Ok(TrainBatch { groups, stats })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::Schema;

    fn store(n_users: usize, n_ads: usize, edges: &[(u32, u32)]) -> TripleStore {
        let schema = Schema::builder()
            .entity("user")
            .entity("ad")
            .edge("user", "click", "ad")
            .build();
        let mut s = TripleStore::new(schema);
        for i in 0..n_users {
            s.vocab_mut(EntityTypeId(0)).intern(&format!("u{i}"));
        }
        for i in 0..n_ads {
            s.vocab_mut(EntityTypeId(1)).intern(&format!("a{i}"));
        }
        for &(h, t) in edges {
            s.push(Triple {
                head: h,
                edge_type: EdgeTypeId(0),
                tail: t,
            });
        }
        s
    }

    #[test]
    fn pool_over_single_entity_is_constant() {
        let s = store(1, 1, &[(0, 0)]);
        let pool = build_pool(&s, EntityTypeId(1), 100, 1).unwrap();
        assert!(pool.entries().iter().all(|&e| e == 0));
    }

    #[test]
    fn pool_is_deterministic_per_seed() {
        let s = store(5, 100, &[(0, 0)]);
        let a = build_pool(&s, EntityTypeId(1), 1000, 7).unwrap();
        let b = build_pool(&s, EntityTypeId(1), 1000, 7).unwrap();
        let c = build_pool(&s, EntityTypeId(1), 1000, 8).unwrap();
        assert_eq!(a.entries(), b.entries());
        assert_ne!(a.entries(), c.entries());
    }

    #[test]
    fn pool_frequencies_look_uniform() {
        // 100k draws over 10k entities: every frequency should sit within
        // ten Poisson standard deviations of the mean of 10.
        let s = store(1, 10_000, &[(0, 0)]);
        let pool = build_pool(&s, EntityTypeId(1), 100_000, 3).unwrap();
        let mut freq = vec![0u32; 10_000];
        for &e in pool.entries() {
            freq[e as usize] += 1;
        }
        let tolerance = 10.0 * 10.0_f64.sqrt();
        for (i, &f) in freq.iter().enumerate() {
            assert!(
                (f as f64 - 10.0).abs() <= tolerance,
                "entity {i} frequency {f}"
            );
        }
    }

    #[test]
    fn pool_rejects_empty_vocabulary() {
        let s = store(1, 0, &[]);
        let err = build_pool(&s, EntityTypeId(1), 10, 1).unwrap_err();
        assert!(err.to_string().contains("empty vocabulary"), "{err}");
    }

    #[test]
    fn counts_split_evenly() {
        let mix = MixConfig {
            fractions: vec![(EdgeTypeId(0), 0.5), (EdgeTypeId(1), 0.5)],
            batch_size: 100,
        };
        assert_eq!(
            mix.counts(),
            vec![(EdgeTypeId(0), 50), (EdgeTypeId(1), 50)]
        );
    }

    #[test]
    fn counts_exact_fractions() {
        let mix = MixConfig {
            fractions: vec![
                (EdgeTypeId(0), 0.5),
                (EdgeTypeId(1), 0.3),
                (EdgeTypeId(2), 0.2),
            ],
            batch_size: 10,
        };
        let got: Vec<usize> = mix.counts().into_iter().map(|(_, c)| c).collect();
        assert_eq!(got, vec![5, 3, 2]);
    }

    #[test]
    fn counts_largest_remainder_breaks_ties_by_order() {
        let third = 1.0 / 3.0;
        let mix = MixConfig {
            fractions: vec![
                (EdgeTypeId(0), third),
                (EdgeTypeId(1), third),
                (EdgeTypeId(2), third),
            ],
            batch_size: 10,
        };
        let got: Vec<usize> = mix.counts().into_iter().map(|(_, c)| c).collect();
        assert_eq!(got, vec![4, 3, 3]);
    }

    #[test]
    fn counts_always_sum_to_batch_size() {
        let mut stream = rng::stream(5, "counts-prop", 0);
        for _ in 0..200 {
            let n = stream.random_range(1..6);
            let mut f: Vec<f64> = (0..n).map(|_| stream.random_range(0.0..1.0)).collect();
            let sum: f64 = f.iter().sum();
            f.iter_mut().for_each(|x| *x /= sum);
            let batch_size = stream.random_range(n..200);
            let mix = MixConfig {
                fractions: f
                    .iter()
                    .enumerate()
                    .map(|(i, &x)| (EdgeTypeId(i), x))
                    .collect(),
                batch_size,
            };
            let total: usize = mix.counts().into_iter().map(|(_, c)| c).sum();
            assert_eq!(total, batch_size);
        }
    }

    #[test]
    fn floor_of_one_preserves_tiny_edge_types() {
        let mix = MixConfig {
            fractions: vec![(EdgeTypeId(0), 0.999), (EdgeTypeId(1), 0.001)],
            batch_size: 10,
        };
        let got: Vec<usize> = mix.counts().into_iter().map(|(_, c)| c).collect();
        assert_eq!(got, vec![9, 1]);
    }

    #[test]
    fn stream_covers_every_edge_each_epoch() {
        let edges: Vec<(u32, u32)> = (0..17).map(|i| (i % 3, i % 5)).collect();
        let s = store(3, 5, &edges);
        let mut stream = EdgeStream::new(&s, EdgeTypeId(0), 9).unwrap();
        for _epoch in 0..3 {
            let mut seen = vec![false; 17];
            for _ in 0..17 {
                seen[stream.next_index() as usize] = true;
            }
            assert!(seen.iter().all(|&x| x));
        }
        assert_eq!(stream.epoch(), 3);
    }

    #[test]
    fn stream_rejects_empty_edge_type() {
        let s = store(2, 2, &[]);
        let err = EdgeStream::new(&s, EdgeTypeId(0), 1).unwrap_err();
        assert!(err.to_string().contains("no training edges"), "{err}");
    }

    #[test]
    fn every_positive_gets_exactly_k_negatives() {
        let s = store(4, 6, &[(0, 0), (1, 1), (2, 2), (3, 3)]);
        let pool = build_pool(&s, EntityTypeId(1), 100, 1).unwrap();
        let mut stream = EdgeStream::new(&s, EdgeTypeId(0), 2).unwrap();
        let mix = MixConfig {
            fractions: vec![(EdgeTypeId(0), 1.0)],
            batch_size: 4,
        };
        let positives = compose_batch(&s, std::slice::from_mut(&mut stream), &mix);
        let batch =
            attach_negatives(&s, positives, &[pool], 2, 2, &mut rng::stream(3, "t", 0)).unwrap();
        for g in &batch.groups {
            assert_eq!(g.negatives_per_positive, 4);
            assert_eq!(g.negative_tails.len(), g.positives.len() * 4);
            for (i, _) in g.positives.iter().enumerate() {
                assert_eq!(g.negatives_of(i).len(), 4);
            }
        }
        assert_eq!(batch.stats.in_batch_shortfall, 0);
    }

    #[test]
    fn no_negatives_at_all_is_rejected() {
        let s = store(2, 2, &[(0, 0), (1, 1)]);
        let pool = build_pool(&s, EntityTypeId(1), 10, 1).unwrap();
        let positives = vec![(EdgeTypeId(0), s.edges(EdgeTypeId(0)).to_vec())];
        let err = attach_negatives(&s, positives, &[pool], 0, 0, &mut rng::stream(1, "t", 0))
            .unwrap_err();
        assert!(err.to_string().contains("at least one negative"), "{err}");
    }

    #[test]
    fn two_positive_in_batch_negatives_swap_tails() {
        // With two positives and k_in_batch=1, the only other positive's tail
        // is the in-batch negative: i2 for u1 and i1 for u2.
        let s = store(2, 2, &[(0, 0), (1, 1)]);
        let pool = build_pool(&s, EntityTypeId(1), 10, 1).unwrap();
        let positives = vec![(EdgeTypeId(0), s.edges(EdgeTypeId(0)).to_vec())];
        let batch =
            attach_negatives(&s, positives, &[pool], 0, 1, &mut rng::stream(1, "t", 0)).unwrap();
        let g = &batch.groups[0];
        assert_eq!(g.negatives_of(0), &[1]);
        assert_eq!(g.negatives_of(1), &[0]);
    }

    #[test]
    fn single_positive_falls_back_to_pool_and_records_it() {
        let s = store(2, 5, &[(0, 0)]);
        let pool = build_pool(&s, EntityTypeId(1), 10, 1).unwrap();
        let positives = vec![(EdgeTypeId(0), s.edges(EdgeTypeId(0)).to_vec())];
        let batch =
            attach_negatives(&s, positives, &[pool], 1, 2, &mut rng::stream(4, "t", 0)).unwrap();
        assert_eq!(batch.stats.in_batch_shortfall, 2);
        assert_eq!(batch.groups[0].negatives_of(0).len(), 3);
    }

    #[test]
    fn negatives_are_type_correct() {
        // Tails drawn for user-click-ad can only be ad indices.
        let s = store(3, 4, &[(0, 0), (1, 1), (2, 3)]);
        let pool = build_pool(&s, EntityTypeId(1), 50, 6).unwrap();
        let positives = vec![(EdgeTypeId(0), s.edges(EdgeTypeId(0)).to_vec())];
        let batch =
            attach_negatives(&s, positives, &[pool], 2, 2, &mut rng::stream(8, "t", 0)).unwrap();
        let vocab_len = s.vocab(EntityTypeId(1)).len() as u32;
        for g in &batch.groups {
            assert!(g.negative_tails.iter().all(|&t| t < vocab_len));
        }
    }
}
