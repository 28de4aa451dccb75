//! Synthetic heterogeneous graphs with planted structure.
//!
//! Every entity gets a primary community (round-robin over `communities`)
//! and, optionally, a nested sub-community. A community-pattern edge picks a
//! uniform head, decides co-community vs cross-community with probability
//! `p_in / (p_in + p_out)`, then samples a tail from the matching candidate
//! set.
//!
//! Edge specs marked [`TailPattern::HeadGroups`] plant an n-to-m structure
//! instead: every head owns a small random subset of tails, drawn
//! independently of the community layout, and subsets of different heads
//! overlap. Heads of every community share tails scattered across all
//! communities, which is exactly the regime where a per-relation projection
//! pays off and a pure translation does not.

use std::io::Write;
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng;
use crate::schema::{EntityTypeId, Schema};
use crate::store::{Triple, TripleStore};

/// How an edge spec pairs heads with tails.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TailPattern {
    /// Tails drawn from the head's community (with optional sub-community
    /// refinement).
    Community,
    /// n-to-m: tails drawn from the head's own random tail group,
    /// independent of communities.
    HeadGroups,
}

impl TailPattern {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "community" => Some(TailPattern::Community),
            "head-groups" => Some(TailPattern::HeadGroups),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticEdgeSpec {
    pub head: String,
    pub activity: String,
    pub tail: String,
    pub count: usize,
    pub pattern: TailPattern,
}

#[derive(Debug, Clone)]
pub struct SyntheticConfig {
    /// Entity type name and vocabulary size.
    pub entities: Vec<(String, usize)>,
    /// Number of primary communities.
    pub communities: usize,
    /// Sub-communities nested inside each primary community (1 disables).
    pub subcommunities: usize,
    /// Intra-community edge weight; co-community probability is
    /// `p_in / (p_in + p_out)`.
    pub p_in: f64,
    /// Cross-community edge weight.
    pub p_out: f64,
    /// Given a co-community edge, probability the tail is also co-sub-community.
    pub p_sub: f64,
    /// Tails each head owns under the n-to-m pattern.
    pub head_group_size: usize,
    pub edges: Vec<SyntheticEdgeSpec>,
}

impl SyntheticConfig {
    fn validate(&self) -> Result<()> {
        let cfg_err = |msg: String| Err(Error::Config(msg));
        if self.communities == 0 {
            return cfg_err("communities must be >= 1".into());
        }
        if self.subcommunities == 0 {
            return cfg_err("subcommunities must be >= 1".into());
        }
        if !(self.p_in > self.p_out) || self.p_out < 0.0 || self.p_in > 1.0 {
            return cfg_err(format!(
                "need 0 <= p_out < p_in <= 1, got p_in={} p_out={}",
                self.p_in, self.p_out
            ));
        }
        if !(0.0..=1.0).contains(&self.p_sub) {
            return cfg_err(format!("p_sub must be in [0,1], got {}", self.p_sub));
        }
        if self.head_group_size == 0
            && self.edges.iter().any(|e| e.pattern == TailPattern::HeadGroups)
        {
            return cfg_err("head_group_size must be >= 1 for head-groups edges".into());
        }
        for spec in &self.edges {
            for ty in [&spec.head, &spec.tail] {
                match self.entities.iter().find(|(name, _)| name == ty) {
                    None => {
                        return cfg_err(format!(
                            "edge type `{} {} {}` references undeclared entity type `{ty}`",
                            spec.head, spec.activity, spec.tail
                        ))
                    }
                    Some((_, 0)) => {
                        return cfg_err(format!(
                            "entity type `{ty}` has zero entities but is referenced by `{} {} {}`",
                            spec.head, spec.activity, spec.tail
                        ))
                    }
                    Some(_) => {}
                }
            }
        }
        Ok(())
    }
}

/// Community and sub-community assignment per entity, aligned with a
/// store's vocabularies.
#[derive(Debug, Clone)]
pub struct CommunityMap {
    pub n_communities: usize,
    pub n_subcommunities: usize,
    communities: Vec<Vec<u32>>,
    subs: Vec<Vec<u32>>,
}

impl CommunityMap {
    pub fn community(&self, ty: EntityTypeId, local: u32) -> u32 {
        self.communities[ty.0][local as usize]
    }

    pub fn sub_community(&self, ty: EntityTypeId, local: u32) -> u32 {
        self.subs[ty.0][local as usize]
    }

    pub fn save(&self, path: &Path, store: &TripleStore) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path.display(), e))?;
        let mut w = std::io::BufWriter::new(file);
        for (ti, per_type) in self.communities.iter().enumerate() {
            let ty = EntityTypeId(ti);
            let name = store.schema().entity_name(ty);
            for (local, &c) in per_type.iter().enumerate() {
                writeln!(
                    w,
                    "{}\t{}\t{}\t{}",
                    name,
                    store.vocab(ty).raw_id(local as u32),
                    c,
                    self.subs[ti][local]
                )
                .map_err(|e| Error::io(path.display(), e))?;
            }
        }
        w.flush().map_err(|e| Error::io(path.display(), e))
    }

    /// Load assignments, resolving raw ids against `store`'s vocabularies.
    /// Every entity in the store must be covered.
    pub fn load(path: &Path, store: &TripleStore) -> Result<CommunityMap> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display(), e))?;
        let n_types = store.schema().entity_types().len();
        let mut communities: Vec<Vec<Option<u32>>> = (0..n_types)
            .map(|t| vec![None; store.vocab(EntityTypeId(t)).len()])
            .collect();
        let mut subs: Vec<Vec<u32>> = (0..n_types)
            .map(|t| vec![0; store.vocab(EntityTypeId(t)).len()])
            .collect();
        let mut max_c = 0;
        let mut max_s = 0;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 4 {
                return Err(Error::Parse {
                    path: path.display().to_string(),
                    line: lineno + 1,
                    msg: format!("expected 4 tab-separated fields, got {}", fields.len()),
                });
            }
            let ty = store.schema().entity_type(fields[0]).ok_or_else(|| Error::Schema {
                path: path.display().to_string(),
                line: lineno + 1,
                msg: format!("unknown entity type `{}`", fields[0]),
            })?;
            let Some(local) = store.vocab(ty).lookup(fields[1]) else {
                // Entities absent from the store (e.g. after a holdout
                // rewrite) are harmless extras.
                continue;
            };
            let parse_u32 = |field: &str| -> Result<u32> {
                field.parse().map_err(|_| Error::Parse {
                    path: path.display().to_string(),
                    line: lineno + 1,
                    msg: format!("bad assignment `{field}`"),
                })
            };
            let c = parse_u32(fields[2])?;
            let s = parse_u32(fields[3])?;
            max_c = max_c.max(c);
            max_s = max_s.max(s);
            communities[ty.0][local as usize] = Some(c);
            subs[ty.0][local as usize] = s;
        }
        let mut resolved = Vec::with_capacity(n_types);
        for (ti, per_type) in communities.into_iter().enumerate() {
            let mut out = Vec::with_capacity(per_type.len());
            for (local, c) in per_type.into_iter().enumerate() {
                let ty = EntityTypeId(ti);
                out.push(c.ok_or_else(|| {
                    Error::Config(format!(
                        "community file {} does not cover {} `{}`",
                        path.display(),
                        store.schema().entity_name(ty),
                        store.vocab(ty).raw_id(local as u32)
                    ))
                })?);
            }
            resolved.push(out);
        }
        Ok(CommunityMap {
            n_communities: max_c as usize + 1,
            n_subcommunities: max_s as usize + 1,
            communities: resolved,
            subs,
        })
    }
}

#[derive(Debug)]
pub struct SyntheticGraph {
    pub store: TripleStore,
    pub communities: CommunityMap,
}

/// Candidate index lists for one entity type.
struct TypePartition {
    by_community: Vec<Vec<u32>>,
    not_community: Vec<Vec<u32>>,
    by_sub: Vec<Vec<Vec<u32>>>,
}

impl TypePartition {
    fn build(count: usize, c: usize, s: usize) -> TypePartition {
        let mut by_community = vec![Vec::new(); c];
        let mut not_community = vec![Vec::new(); c];
        let mut by_sub = vec![vec![Vec::new(); s]; c];
        for i in 0..count {
            let pc = i % c;
            let sc = (i / c) % s;
            by_community[pc].push(i as u32);
            by_sub[pc][sc].push(i as u32);
            for other in 0..c {
                if other != pc {
                    not_community[other].push(i as u32);
                }
            }
        }
        TypePartition {
            by_community,
            not_community,
            by_sub,
        }
    }
}

fn pick<'a>(rng: &mut impl Rng, first: &'a [u32], fallbacks: &[&'a [u32]]) -> u32 {
    let candidates = if !first.is_empty() {
        first
    } else {
        fallbacks
            .iter()
            .copied()
            .find(|c| !c.is_empty())
            .expect("no candidates; validated entity counts are nonzero")
    };
    candidates[rng.random_range(0..candidates.len())]
}

pub fn generate_synthetic(config: &SyntheticConfig, seed: u64) -> Result<SyntheticGraph> {
    config.validate()?;
    let c = config.communities;
    let s = config.subcommunities;

    let mut sb = Schema::builder();
    for (name, _) in &config.entities {
        sb.try_entity(name).map_err(Error::Config)?;
    }
    for spec in &config.edges {
        sb.try_edge(&spec.head, &spec.activity, &spec.tail)
            .map_err(Error::Config)?;
    }
    let schema = sb.build();

    let mut store = TripleStore::new(schema.clone());
    let mut partitions = Vec::new();
    let mut communities = Vec::new();
    let mut subs = Vec::new();
    for (ti, (name, count)) in config.entities.iter().enumerate() {
        let ty = EntityTypeId(ti);
        for i in 0..*count {
            store.vocab_mut(ty).intern(&format!("{name}_{i}"));
        }
        partitions.push(TypePartition::build(*count, c, s));
        communities.push((0..*count).map(|i| (i % c) as u32).collect::<Vec<u32>>());
        subs.push((0..*count).map(|i| ((i / c) % s) as u32).collect::<Vec<u32>>());
    }

    let q_in = config.p_in / (config.p_in + config.p_out);
    let all_tails: Vec<Vec<u32>> = config
        .entities
        .iter()
        .map(|(_, count)| (0..*count as u32).collect())
        .collect();

    for (si, spec) in config.edges.iter().enumerate() {
        let edge_type = schema
            .edge_type(&spec.head, &spec.activity, &spec.tail)
            .expect("edge type was just declared");
        let head_ty = schema.entity_type(&spec.head).unwrap();
        let tail_ty = schema.entity_type(&spec.tail).unwrap();
        let n_heads = config.entities[head_ty.0].1;
        let n_tails = config.entities[tail_ty.0].1;
        let part = &partitions[tail_ty.0];
        let everything = &all_tails[tail_ty.0];

        // n-to-m pattern: every head owns a random tail group, groups of
        // different heads overlap freely.
        let head_groups: Option<Vec<Vec<u32>>> = (spec.pattern == TailPattern::HeadGroups)
            .then(|| {
                let mut group_rng = rng::stream(seed, "head-groups", si as u64);
                (0..n_heads)
                    .map(|_| {
                        let mut pool: Vec<u32> = (0..n_tails as u32).collect();
                        let size = config.head_group_size.min(n_tails);
                        for pick in 0..size {
                            let j = group_rng.random_range(pick..n_tails);
                            pool.swap(pick, j);
                        }
                        pool.truncate(size);
                        pool
                    })
                    .collect()
            });

        let mut rng = rng::stream(seed, "synthetic-edges", si as u64);
        for _ in 0..spec.count {
            let head = rng.random_range(0..n_heads) as u32;
            let co = rng.random_bool(q_in);
            let tail = match (&head_groups, co) {
                (Some(groups), true) => {
                    let group = &groups[head as usize];
                    group[rng.random_range(0..group.len())]
                }
                (Some(groups), false) => {
                    // Uniform over tails outside the head's group; the group
                    // is tiny, so rejection terminates fast.
                    let group = &groups[head as usize];
                    let mut tail = rng.random_range(0..n_tails) as u32;
                    for _ in 0..64 {
                        if !group.contains(&tail) {
                            break;
                        }
                        tail = rng.random_range(0..n_tails) as u32;
                    }
                    tail
                }
                (None, true) => {
                    let hc = head as usize % c;
                    let hs = (head as usize / c) % s;
                    if s > 1 && rng.random_bool(config.p_sub) {
                        pick(
                            &mut rng,
                            &part.by_sub[hc][hs],
                            &[&part.by_community[hc], everything],
                        )
                    } else {
                        pick(&mut rng, &part.by_community[hc], &[everything])
                    }
                }
                (None, false) => {
                    let hc = head as usize % c;
                    pick(&mut rng, &part.not_community[hc], &[everything])
                }
            };
            store.push(Triple {
                head,
                edge_type,
                tail,
            });
        }
    }

    Ok(SyntheticGraph {
        store,
        communities: CommunityMap {
            n_communities: c,
            n_subcommunities: s,
            communities,
            subs,
        },
    })
}
