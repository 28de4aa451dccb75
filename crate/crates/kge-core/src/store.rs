//! Typed edge lists with per-entity-type vocabularies.
//!
//! Edge files are UTF-8 TSV, one edge per line:
//! `head_type<TAB>head_raw_id<TAB>activity<TAB>tail_type<TAB>tail_raw_id`.
//! Lines starting with `#` and blank lines are ignored. Vocabularies assign
//! local indices in first-seen order; duplicate edges are kept.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng;
use crate::schema::{EdgeTypeId, EntityTypeId, Schema};

/// One edge, with endpoint ids local to the head/tail type vocabularies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Triple {
    pub head: u32,
    pub edge_type: EdgeTypeId,
    pub tail: u32,
}

/// Raw external id <-> contiguous local index, first-seen order.
#[derive(Debug, Clone, Default)]
pub struct Vocabulary {
    ids: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    pub fn intern(&mut self, raw: &str) -> u32 {
        if let Some(&i) = self.index.get(raw) {
            return i;
        }
        let i = self.ids.len() as u32;
        self.ids.push(raw.to_string());
        self.index.insert(raw.to_string(), i);
        i
    }

    pub fn lookup(&self, raw: &str) -> Option<u32> {
        self.index.get(raw).copied()
    }

    pub fn raw_id(&self, local: u32) -> &str {
        &self.ids[local as usize]
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn raw_ids(&self) -> &[String] {
        &self.ids
    }
}

#[derive(Debug, Clone)]
pub struct TripleStore {
    schema: Schema,
    vocabs: Vec<Vocabulary>,
    edges: Vec<Vec<Triple>>,
}

impl TripleStore {
    pub fn new(schema: Schema) -> Self {
        let n_entity = schema.entity_types().len();
        let n_edge = schema.edge_types().len();
        TripleStore {
            schema,
            vocabs: vec![Vocabulary::default(); n_entity],
            edges: vec![Vec::new(); n_edge],
        }
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn vocab(&self, ty: EntityTypeId) -> &Vocabulary {
        &self.vocabs[ty.0]
    }

    pub fn vocab_mut(&mut self, ty: EntityTypeId) -> &mut Vocabulary {
        &mut self.vocabs[ty.0]
    }

    pub fn edges(&self, edge_type: EdgeTypeId) -> &[Triple] {
        &self.edges[edge_type.0]
    }

    pub fn push(&mut self, triple: Triple) {
        let et = &self.schema.edge_types()[triple.edge_type.0];
        debug_assert!((triple.head as usize) < self.vocabs[et.head.0].len());
        debug_assert!((triple.tail as usize) < self.vocabs[et.tail.0].len());
        self.edges[triple.edge_type.0].push(triple);
    }

    pub fn total_edges(&self) -> usize {
        self.edges.iter().map(Vec::len).sum()
    }

    pub fn edge_counts(&self) -> Vec<usize> {
        self.edges.iter().map(Vec::len).collect()
    }

    /// Load a TSV edge file, building vocabularies in first-seen order.
    pub fn load_edges(path: &Path, schema: &Schema) -> Result<TripleStore> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display(), e))?;
        Self::parse_edges(&text, &path.display().to_string(), schema, None)
    }

    /// Load a TSV edge file against vocabularies borrowed from `base`
    /// (typically the full training store). Ids absent from `base` are a
    /// schema error rather than new vocabulary entries.
    pub fn load_edges_with_vocab(path: &Path, base: &TripleStore) -> Result<TripleStore> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display(), e))?;
        Self::parse_edges(
            &text,
            &path.display().to_string(),
            base.schema(),
            Some(&base.vocabs),
        )
    }

    fn parse_edges(
        text: &str,
        path: &str,
        schema: &Schema,
        fixed_vocab: Option<&[Vocabulary]>,
    ) -> Result<TripleStore> {
        let mut store = TripleStore::new(schema.clone());
        if let Some(v) = fixed_vocab {
            store.vocabs = v.to_vec();
        }
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim_end_matches('\n');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 5 {
                return Err(Error::Parse {
                    path: path.to_string(),
                    line: lineno + 1,
                    msg: format!("expected 5 tab-separated fields, got {}", fields.len()),
                });
            }
            let (ht, hid, act, tt, tid) =
                (fields[0], fields[1], fields[2], fields[3], fields[4]);
            let schema_err = |msg: String| Error::Schema {
                path: path.to_string(),
                line: lineno + 1,
                msg,
            };
            let head_ty = schema
                .entity_type(ht)
                .ok_or_else(|| schema_err(format!("unknown entity type `{ht}`")))?;
            let tail_ty = schema
                .entity_type(tt)
                .ok_or_else(|| schema_err(format!("unknown entity type `{tt}`")))?;
            let edge_type = schema
                .edge_type(ht, act, tt)
                .ok_or_else(|| schema_err(format!("unknown edge type `{ht} {act} {tt}`")))?;
            let (head, tail) = if fixed_vocab.is_some() {
                let h = store.vocabs[head_ty.0]
                    .lookup(hid)
                    .ok_or_else(|| schema_err(format!("id `{hid}` not in {ht} vocabulary")))?;
                let t = store.vocabs[tail_ty.0]
                    .lookup(tid)
                    .ok_or_else(|| schema_err(format!("id `{tid}` not in {tt} vocabulary")))?;
                (h, t)
            } else {
                (
                    store.vocabs[head_ty.0].intern(hid),
                    store.vocabs[tail_ty.0].intern(tid),
                )
            };
            store.edges[edge_type.0].push(Triple {
                head,
                edge_type,
                tail,
            });
        }
        Ok(store)
    }

    /// Write edges back out in the TSV format `load_edges` reads.
    pub fn save_edges(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path.display(), e))?;
        let mut w = std::io::BufWriter::new(file);
        for (ei, edges) in self.edges.iter().enumerate() {
            let et = &self.schema.edge_types()[ei];
            let head_name = self.schema.entity_name(et.head);
            let tail_name = self.schema.entity_name(et.tail);
            for t in edges {
                writeln!(
                    w,
                    "{}\t{}\t{}\t{}\t{}",
                    head_name,
                    self.vocabs[et.head.0].raw_id(t.head),
                    et.activity,
                    tail_name,
                    self.vocabs[et.tail.0].raw_id(t.tail),
                )
                .map_err(|e| Error::io(path.display(), e))?;
            }
        }
        w.flush().map_err(|e| Error::io(path.display(), e))
    }

    /// Move up to `n_per_edge_type` edges of every edge type into a held-out
    /// store, uniformly without replacement. Vocabularies are shared by both
    /// halves, so local indices keep meaning across the split.
    pub fn split_holdout(self, n_per_edge_type: usize, seed: u64) -> HoldoutSplit {
        let mut train = TripleStore {
            schema: self.schema.clone(),
            vocabs: self.vocabs.clone(),
            edges: vec![Vec::new(); self.edges.len()],
        };
        let mut eval = train.clone();
        let mut entries = Vec::new();
        for (ei, edges) in self.edges.into_iter().enumerate() {
            let available = edges.len();
            let take = n_per_edge_type.min(available);
            // Partial Fisher-Yates: the first `take` slots end up holding a
            // uniform sample without replacement.
            let mut order: Vec<u32> = (0..available as u32).collect();
            let mut rng = rng::stream(seed, "holdout", ei as u64);
            for i in 0..take {
                let j = rng.random_range(i..available);
                order.swap(i, j);
            }
            let mut picked = vec![false; available];
            for &i in &order[..take] {
                picked[i as usize] = true;
            }
            for (i, t) in edges.into_iter().enumerate() {
                if picked[i] {
                    eval.edges[ei].push(t);
                } else {
                    train.edges[ei].push(t);
                }
            }
            entries.push(SplitEntry {
                edge_type: EdgeTypeId(ei),
                requested: n_per_edge_type,
                held_out: take,
                remaining: available - take,
            });
        }
        HoldoutSplit {
            train,
            eval,
            manifest: SplitManifest { seed, entries },
        }
    }
}

#[derive(Debug, Clone)]
pub struct SplitEntry {
    pub edge_type: EdgeTypeId,
    pub requested: usize,
    pub held_out: usize,
    pub remaining: usize,
}

/// Records what the holdout split actually did, per edge type.
#[derive(Debug, Clone)]
pub struct SplitManifest {
    pub seed: u64,
    pub entries: Vec<SplitEntry>,
}

impl SplitManifest {
    pub fn to_text(&self, schema: &Schema) -> String {
        let mut out = format!("# holdout split\nseed\t{}\n", self.seed);
        out.push_str("edge_type\trequested\theld_out\tremaining\n");
        for e in &self.entries {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                schema.edge_name(e.edge_type),
                e.requested,
                e.held_out,
                e.remaining
            ));
        }
        out
    }
}

#[derive(Debug)]
pub struct HoldoutSplit {
    pub train: TripleStore,
    pub eval: TripleStore,
    pub manifest: SplitManifest,
}
