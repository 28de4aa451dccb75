//! Synthetic ranking examples over a community-structured graph.
//!
//! Positives draw every slot from one (community, sub-community) cell.
//! Negatives look identical except that one randomly chosen non-lead slot
//! is swapped to the finest different group available — another sub of the
//! same community when the slot type has one, another community otherwise —
//! so telling the classes apart requires comparing slot identities against
//! each other. Side features are pure noise, so the label is only
//! recoverable through entity identity — a model that ignores the embedding
//! tables cannot beat chance.

use std::io::Write;
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng;
use crate::schema::EntityTypeId;
use crate::store::TripleStore;
use crate::synth::CommunityMap;

#[derive(Debug, Clone, PartialEq)]
pub struct RankingExample {
    /// One local entity id per slot.
    pub slots: Vec<u32>,
    pub side: Vec<f64>,
    pub label: bool,
}

#[derive(Debug, Clone)]
pub struct RankingDataset {
    /// Entity type of each slot.
    pub slots: Vec<EntityTypeId>,
    pub n_side: usize,
    pub examples: Vec<RankingExample>,
}

#[derive(Debug, Clone)]
pub struct RankingDataConfig {
    pub n_examples: usize,
    /// Negatives per positive; 1.0 gives an even split.
    pub neg_ratio: f64,
    pub n_side_features: usize,
    pub slots: Vec<EntityTypeId>,
}

pub fn build_ranking_dataset(
    store: &TripleStore,
    communities: &CommunityMap,
    cfg: &RankingDataConfig,
    seed: u64,
) -> Result<RankingDataset> {
    if cfg.slots.len() < 2 {
        return Err(Error::Config("need at least two slots".into()));
    }
    if cfg.n_examples == 0 {
        return Err(Error::Config("n_examples must be >= 1".into()));
    }
    if !(cfg.neg_ratio >= 0.0) {
        return Err(Error::Config("neg_ratio must be >= 0".into()));
    }
    let n_comm = communities.n_communities;
    let n_sub = communities.n_subcommunities;

    // Per slot: members of every (community, sub) cell, of every community,
    // and of everything outside a community.
    struct SlotPools {
        by_cell: Vec<Vec<Vec<u32>>>,
        by_community: Vec<Vec<u32>>,
        not_community: Vec<Vec<u32>>,
    }
    let mut pools: Vec<SlotPools> = Vec::new();
    for &ty in &cfg.slots {
        let n = store.vocab(ty).len();
        let mut by_cell = vec![vec![Vec::new(); n_sub]; n_comm];
        let mut by_community = vec![Vec::new(); n_comm];
        let mut not_community = vec![Vec::new(); n_comm];
        for i in 0..n as u32 {
            let c = communities.community(ty, i) as usize;
            let s = communities.sub_community(ty, i) as usize;
            by_cell[c][s].push(i);
            by_community[c].push(i);
            for other in 0..n_comm {
                if other != c {
                    not_community[other].push(i);
                }
            }
        }
        for (c, m) in by_community.iter().enumerate() {
            if m.is_empty() {
                return Err(Error::Config(format!(
                    "insufficient entities: type `{}` has no member in community {c}",
                    store.schema().entity_name(ty)
                )));
            }
        }
        pools.push(SlotPools {
            by_cell,
            by_community,
            not_community,
        });
    }

    let n_neg = (cfg.n_examples as f64 * cfg.neg_ratio / (1.0 + cfg.neg_ratio)).round() as usize;
    let n_pos = cfg.n_examples - n_neg;
    let mut stream = rng::stream(seed, "ranking-dataset", 0);
    let mut examples = Vec::with_capacity(cfg.n_examples);
    let mut draw = |pool: &[u32], stream: &mut rand_chacha::ChaCha8Rng| -> u32 {
        pool[stream.random_range(0..pool.len())]
    };

    // A slot drawn from cell (c, s), falling back to the community when the
    // cell is empty for that type.
    let cell_draw = |pools: &SlotPools, c: usize, s: usize, stream: &mut rand_chacha::ChaCha8Rng| {
        let cell = &pools.by_cell[c][s];
        if cell.is_empty() {
            pools.by_community[c][stream.random_range(0..pools.by_community[c].len())]
        } else {
            cell[stream.random_range(0..cell.len())]
        }
    };

    for _ in 0..n_pos {
        let c = stream.random_range(0..n_comm);
        let s = stream.random_range(0..n_sub);
        let slots: Vec<u32> = (0..cfg.slots.len())
            .map(|slot| cell_draw(&pools[slot], c, s, &mut stream))
            .collect();
        let side = (0..cfg.n_side_features)
            .map(|_| stream.random_range(-1.0..1.0))
            .collect();
        examples.push(RankingExample {
            slots,
            side,
            label: true,
        });
    }
    for _ in 0..n_neg {
        // Same cell tuple with one non-lead slot swapped out. Preferred
        // swap target: a different sub of the same community; fallback:
        // a different community; a single community with a single sub has
        // no target at all and the labels carry no signal.
        let c = stream.random_range(0..n_comm);
        let s = stream.random_range(0..n_sub);
        let corrupt = 1 + stream.random_range(0..cfg.slots.len() - 1);
        let mut slots: Vec<u32> = (0..cfg.slots.len())
            .map(|slot| cell_draw(&pools[slot], c, s, &mut stream))
            .collect();
        let p = &pools[corrupt];
        let other_sub: Vec<u32> = p.by_community[c]
            .iter()
            .copied()
            .filter(|&i| communities.sub_community(cfg.slots[corrupt], i) as usize != s)
            .collect();
        if !other_sub.is_empty() {
            slots[corrupt] = draw(&other_sub, &mut stream);
        } else if n_comm > 1 {
            slots[corrupt] = draw(&p.not_community[c], &mut stream);
        }
        let side = (0..cfg.n_side_features)
            .map(|_| stream.random_range(-1.0..1.0))
            .collect();
        examples.push(RankingExample {
            slots,
            side,
            label: false,
        });
    }

    // Interleave classes for minibatch SGD.
    use rand::seq::SliceRandom;
    examples.shuffle(&mut stream);

    Ok(RankingDataset {
        slots: cfg.slots.clone(),
        n_side: cfg.n_side_features,
        examples,
    })
}

impl RankingDataset {
    /// TSV: header comment naming the slot types, then
    /// `label<TAB>raw ids...<TAB>side features...` rows.
    pub fn save(&self, path: &Path, store: &TripleStore) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path.display(), e))?;
        let mut w = std::io::BufWriter::new(file);
        let slot_names: Vec<&str> = self
            .slots
            .iter()
            .map(|&ty| store.schema().entity_name(ty))
            .collect();
        writeln!(w, "# slots: {}\tside: {}", slot_names.join(" "), self.n_side)
            .map_err(|e| Error::io(path.display(), e))?;
        for ex in &self.examples {
            let mut cols = vec![if ex.label { "1".to_string() } else { "0".to_string() }];
            for (s, &id) in ex.slots.iter().enumerate() {
                cols.push(store.vocab(self.slots[s]).raw_id(id).to_string());
            }
            for v in &ex.side {
                cols.push(format!("{v}"));
            }
            writeln!(w, "{}", cols.join("\t")).map_err(|e| Error::io(path.display(), e))?;
        }
        w.flush().map_err(|e| Error::io(path.display(), e))
    }

    pub fn load(path: &Path, store: &TripleStore) -> Result<RankingDataset> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display(), e))?;
        let mut lines = text.lines().enumerate();
        let parse_err = |line: usize, msg: String| Error::Parse {
            path: path.display().to_string(),
            line,
            msg,
        };
        let (_, header) = lines
            .next()
            .ok_or_else(|| parse_err(1, "empty dataset file".into()))?;
        let header = header
            .strip_prefix("# slots: ")
            .ok_or_else(|| parse_err(1, "missing `# slots:` header".into()))?;
        let (slot_part, side_part) = header
            .split_once("\tside: ")
            .ok_or_else(|| parse_err(1, "missing `side:` in header".into()))?;
        let slots: Vec<EntityTypeId> = slot_part
            .split_whitespace()
            .map(|name| {
                store
                    .schema()
                    .entity_type(name)
                    .ok_or_else(|| parse_err(1, format!("unknown entity type `{name}`")))
            })
            .collect::<Result<_>>()?;
        let n_side: usize = side_part
            .parse()
            .map_err(|_| parse_err(1, format!("bad side count `{side_part}`")))?;

        let mut examples = Vec::new();
        for (lineno, line) in lines {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 1 + slots.len() + n_side {
                return Err(parse_err(
                    lineno + 1,
                    format!(
                        "expected {} fields, got {}",
                        1 + slots.len() + n_side,
                        fields.len()
                    ),
                ));
            }
            let label = match fields[0] {
                "1" => true,
                "0" => false,
                other => return Err(parse_err(lineno + 1, format!("bad label `{other}`"))),
            };
            let mut slot_ids = Vec::with_capacity(slots.len());
            for (s, &ty) in slots.iter().enumerate() {
                let raw = fields[1 + s];
                let id = store.vocab(ty).lookup(raw).ok_or_else(|| {
                    parse_err(lineno + 1, format!("id `{raw}` not in vocabulary"))
                })?;
                slot_ids.push(id);
            }
            let side = fields[1 + slots.len()..]
                .iter()
                .map(|f| {
                    f.parse::<f64>()
                        .map_err(|_| parse_err(lineno + 1, format!("bad side feature `{f}`")))
                })
                .collect::<Result<_>>()?;
            examples.push(RankingExample {
                slots: slot_ids,
                side,
                label,
            });
        }
        Ok(RankingDataset {
            slots,
            n_side,
            examples,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_synthetic, SyntheticConfig, SyntheticEdgeSpec, TailPattern};

    fn graph(c: usize) -> (TripleStore, CommunityMap) {
        let cfg = SyntheticConfig {
            entities: vec![("user".into(), 120), ("item".into(), 200)],
            communities: c,
            subcommunities: 1,
            p_in: 0.9,
            p_out: 0.1,
            p_sub: 0.0,
            head_group_size: 10,
            edges: vec![SyntheticEdgeSpec {
                head: "user".into(),
                activity: "click".into(),
                tail: "item".into(),
                count: 500,
                pattern: TailPattern::Community,
            }],
        };
        let g = generate_synthetic(&cfg, 4).unwrap();
        (g.store, g.communities)
    }

    fn data_cfg(n: usize) -> RankingDataConfig {
        RankingDataConfig {
            n_examples: n,
            neg_ratio: 1.0,
            n_side_features: 3,
            slots: vec![EntityTypeId(0), EntityTypeId(1)],
        }
    }

    #[test]
    fn even_ratio_splits_evenly() {
        let (store, comm) = graph(6);
        let ds = build_ranking_dataset(&store, &comm, &data_cfg(1000), 1).unwrap();
        assert_eq!(ds.examples.len(), 1000);
        assert_eq!(ds.examples.iter().filter(|e| e.label).count(), 500);
    }

    #[test]
    fn positives_are_co_community_negatives_are_not() {
        // With a single sub level the corruption falls back to communities.
        let (store, comm) = graph(6);
        let ds = build_ranking_dataset(&store, &comm, &data_cfg(2000), 2).unwrap();
        for ex in &ds.examples {
            let cu = comm.community(EntityTypeId(0), ex.slots[0]);
            let ci = comm.community(EntityTypeId(1), ex.slots[1]);
            if ex.label {
                assert_eq!(cu, ci);
            } else {
                assert_ne!(cu, ci);
            }
        }
    }

    #[test]
    fn sub_structure_corrupts_within_the_community() {
        let cfg = SyntheticConfig {
            entities: vec![("user".into(), 240), ("item".into(), 480)],
            communities: 4,
            subcommunities: 6,
            p_in: 0.9,
            p_out: 0.1,
            p_sub: 0.8,
            head_group_size: 10,
            edges: vec![SyntheticEdgeSpec {
                head: "user".into(),
                activity: "click".into(),
                tail: "item".into(),
                count: 500,
                pattern: TailPattern::Community,
            }],
        };
        let g = generate_synthetic(&cfg, 8).unwrap();
        let ds = build_ranking_dataset(&g.store, &g.communities, &data_cfg(1000), 3).unwrap();
        for ex in &ds.examples {
            let (u, i) = (ex.slots[0], ex.slots[1]);
            let co_comm = g.communities.community(EntityTypeId(0), u)
                == g.communities.community(EntityTypeId(1), i);
            let co_sub = co_comm
                && g.communities.sub_community(EntityTypeId(0), u)
                    == g.communities.sub_community(EntityTypeId(1), i);
            if ex.label {
                assert!(co_sub, "positive not co-sub");
            } else {
                // Corrupted within the community: same community, other sub.
                assert!(co_comm && !co_sub, "negative not a same-community sub mismatch");
            }
        }
    }

    #[test]
    fn single_community_degenerates_to_uniform() {
        let (store, comm) = graph(1);
        let ds = build_ranking_dataset(&store, &comm, &data_cfg(300), 3).unwrap();
        assert_eq!(ds.examples.len(), 300);
        // Every tuple is trivially co-community, labels carry no signal.
        assert!(ds.examples.iter().any(|e| e.label));
        assert!(ds.examples.iter().any(|e| !e.label));
    }

    #[test]
    fn dataset_round_trips_through_tsv() {
        let (store, comm) = graph(4);
        let ds = build_ranking_dataset(&store, &comm, &data_cfg(150), 5).unwrap();
        let dir = std::env::temp_dir().join("kge_ranking_ds");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("dataset.tsv");
        ds.save(&path, &store).unwrap();
        let loaded = RankingDataset::load(&path, &store).unwrap();
        assert_eq!(loaded.slots, ds.slots);
        assert_eq!(loaded.n_side, ds.n_side);
        assert_eq!(loaded.examples, ds.examples);
    }

    #[test]
    fn insufficient_entities_is_a_config_error() {
        let (store, comm) = graph(6);
        let mut cfg = data_cfg(100);
        // 5 entities over 6 communities leaves one empty.
        let tiny_cfg = SyntheticConfig {
            entities: vec![("user".into(), 5), ("item".into(), 200)],
            communities: 6,
            subcommunities: 1,
            p_in: 0.9,
            p_out: 0.1,
            p_sub: 0.0,
            head_group_size: 10,
            edges: vec![],
        };
        let tiny = generate_synthetic(&tiny_cfg, 1).unwrap();
        cfg.slots = vec![EntityTypeId(0), EntityTypeId(1)];
        let err = build_ranking_dataset(&tiny.store, &tiny.communities, &cfg, 1).unwrap_err();
        assert!(err.to_string().contains("insufficient entities"), "{err}");
        drop((store, comm));
    }
}
