//! Binary checkpoint format.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic            8 bytes  "KGECKPT1"
//! version          u32      currently 1
//! kind             u8       0 transe, 1 transr, 2 transra
//! distance         u8       0 cosine, 1 l2
//! translation side u8       0 tail, 1 head
//! reserved         u8       0
//! anchor type      u32      entity type index, 0xFFFF_FFFF unless transra
//! dim              u32
//! n entity types   u32
//!   per type: name len u32, name bytes, vocab size u64, vocab fingerprint u64
//! n relations      u32
//!   per relation: head type u32, tail type u32
//! payload:
//!   per type:     vocab size * dim f64 (row-major embedding table)
//!   per relation: dim*dim f64 (projection, row-major), dim f64 (translation)
//! ```

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::math::{DenseMatrix, DistanceKind};
use crate::schema::{EntityTypeId, RelationType};
use crate::store::{TripleStore, Vocabulary};

use super::{KgeModel, ModelKind, RelationParams, TranslationSide};

const MAGIC: &[u8; 8] = b"KGECKPT1";
const VERSION: u32 = 1;
const NO_ANCHOR: u32 = u32::MAX;

/// FNV-1a over a vocabulary's raw ids, 0xFF-separated.
pub fn vocab_fingerprint(vocab: &Vocabulary) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    let mut eat = |b: u8| {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    };
    for id in vocab.raw_ids() {
        for &b in id.as_bytes() {
            eat(b);
        }
        eat(0xFF);
    }
    h
}

/// FNV-1a over the little-endian bytes of a parameter stream.
pub fn fingerprint_f64s(values: &[f64]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for v in values {
        for b in v.to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
    }
    h
}

pub fn save(model: &KgeModel, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path.display(), e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e: std::io::Error| Error::io(path.display(), e);

    w.write_all(MAGIC).map_err(io_err)?;
    w.write_all(&VERSION.to_le_bytes()).map_err(io_err)?;
    let kind = match model.kind {
        ModelKind::TransE => 0u8,
        ModelKind::TransR => 1,
        ModelKind::TransRA { .. } => 2,
    };
    let dist = match model.dist {
        DistanceKind::Cosine => 0u8,
        DistanceKind::L2 => 1,
    };
    let side = match model.transr_translation {
        TranslationSide::Tail => 0u8,
        TranslationSide::Head => 1,
    };
    w.write_all(&[kind, dist, side, 0]).map_err(io_err)?;
    let anchor = model.kind.anchor().map_or(NO_ANCHOR, |a| a.0 as u32);
    w.write_all(&anchor.to_le_bytes()).map_err(io_err)?;
    w.write_all(&(model.dim as u32).to_le_bytes()).map_err(io_err)?;

    w.write_all(&(model.entity_types.len() as u32).to_le_bytes())
        .map_err(io_err)?;
    for (ti, name) in model.entity_types.iter().enumerate() {
        w.write_all(&(name.len() as u32).to_le_bytes()).map_err(io_err)?;
        w.write_all(name.as_bytes()).map_err(io_err)?;
        w.write_all(&(model.tables[ti].rows() as u64).to_le_bytes())
            .map_err(io_err)?;
        w.write_all(&model.vocab_fingerprints[ti].to_le_bytes())
            .map_err(io_err)?;
    }
    w.write_all(&(model.relation_types.len() as u32).to_le_bytes())
        .map_err(io_err)?;
    for r in &model.relation_types {
        w.write_all(&(r.head.0 as u32).to_le_bytes()).map_err(io_err)?;
        w.write_all(&(r.tail.0 as u32).to_le_bytes()).map_err(io_err)?;
    }
    for t in &model.tables {
        write_f64s(&mut w, t.data()).map_err(io_err)?;
    }
    for r in &model.relations {
        write_f64s(&mut w, r.projection.data()).map_err(io_err)?;
        write_f64s(&mut w, &r.translation).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

pub fn load(path: &Path) -> Result<KgeModel> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path.display(), e))?;
    let mut r = BufReader::new(file);
    let ck_err = |msg: String| Error::Checkpoint(format!("{}: {msg}", path.display()));

    let mut magic = [0u8; 8];
    read_exact(&mut r, &mut magic, path)?;
    if &magic != MAGIC {
        return Err(ck_err("bad magic; not a checkpoint file".into()));
    }
    let version = read_u32(&mut r, path)?;
    if version != VERSION {
        return Err(ck_err(format!("unsupported version {version}")));
    }
    let mut flags = [0u8; 4];
    read_exact(&mut r, &mut flags, path)?;
    let anchor = read_u32(&mut r, path)?;
    let kind = match flags[0] {
        0 => ModelKind::TransE,
        1 => ModelKind::TransR,
        2 => {
            if anchor == NO_ANCHOR {
                return Err(ck_err("anchored kind without anchor type".into()));
            }
            ModelKind::TransRA {
                anchor: EntityTypeId(anchor as usize),
            }
        }
        k => return Err(ck_err(format!("unknown model kind {k}"))),
    };
    let dist = match flags[1] {
        0 => DistanceKind::Cosine,
        1 => DistanceKind::L2,
        d => return Err(ck_err(format!("unknown distance kind {d}"))),
    };
    let side = match flags[2] {
        0 => TranslationSide::Tail,
        1 => TranslationSide::Head,
        s => return Err(ck_err(format!("unknown translation side {s}"))),
    };
    let dim = read_u32(&mut r, path)? as usize;
    if dim == 0 {
        return Err(ck_err("dim must be >= 1".into()));
    }

    let n_types = read_u32(&mut r, path)? as usize;
    let mut entity_types = Vec::with_capacity(n_types);
    let mut vocab_sizes = Vec::with_capacity(n_types);
    let mut vocab_fingerprints = Vec::with_capacity(n_types);
    for _ in 0..n_types {
        let len = read_u32(&mut r, path)? as usize;
        let mut buf = vec![0u8; len];
        read_exact(&mut r, &mut buf, path)?;
        let name = String::from_utf8(buf).map_err(|_| ck_err("entity name is not UTF-8".into()))?;
        entity_types.push(name);
        vocab_sizes.push(read_u64(&mut r, path)? as usize);
        vocab_fingerprints.push(read_u64(&mut r, path)?);
    }
    let n_relations = read_u32(&mut r, path)? as usize;
    let mut relation_types = Vec::with_capacity(n_relations);
    for _ in 0..n_relations {
        let head = read_u32(&mut r, path)? as usize;
        let tail = read_u32(&mut r, path)? as usize;
        if head >= n_types || tail >= n_types {
            return Err(ck_err("relation references unknown entity type".into()));
        }
        relation_types.push(RelationType {
            head: EntityTypeId(head),
            tail: EntityTypeId(tail),
        });
    }

    let mut tables = Vec::with_capacity(n_types);
    for &rows in &vocab_sizes {
        let data = read_f64s(&mut r, rows * dim, path)?;
        tables.push(DenseMatrix::from_vec(rows, dim, data));
    }
    let mut relations = Vec::with_capacity(n_relations);
    for _ in 0..n_relations {
        let proj = read_f64s(&mut r, dim * dim, path)?;
        let trans = read_f64s(&mut r, dim, path)?;
        relations.push(RelationParams {
            projection: DenseMatrix::from_vec(dim, dim, proj),
            translation: trans,
        });
    }
    if let ModelKind::TransRA { anchor } = kind {
        if anchor.0 >= n_types {
            return Err(ck_err("anchor entity type out of range".into()));
        }
    }

    Ok(KgeModel {
        kind,
        dist,
        transr_translation: side,
        dim,
        entity_types,
        vocab_fingerprints,
        tables,
        relation_types,
        relations,
    })
}

/// Check that `store` is the graph this model was trained against: same
/// entity types, same vocabulary sizes and fingerprints, same relation
/// derivation.
pub fn validate_store(model: &KgeModel, store: &TripleStore) -> Result<()> {
    let schema = store.schema();
    if schema.entity_types() != model.entity_types.as_slice() {
        return Err(Error::Checkpoint(format!(
            "entity types differ: checkpoint has [{}], store has [{}]",
            model.entity_types.join(", "),
            schema.entity_types().join(", ")
        )));
    }
    for (ti, name) in model.entity_types.iter().enumerate() {
        let ty = EntityTypeId(ti);
        let store_len = store.vocab(ty).len();
        if store_len != model.tables[ti].rows() {
            return Err(Error::Checkpoint(format!(
                "{name} vocabulary has {store_len} entities, checkpoint table has {} rows",
                model.tables[ti].rows()
            )));
        }
        if vocab_fingerprint(store.vocab(ty)) != model.vocab_fingerprints[ti] {
            return Err(Error::Checkpoint(format!(
                "{name} vocabulary content differs from the checkpoint (same size, different ids)"
            )));
        }
    }
    if schema.relation_types() != model.relation_types.as_slice() {
        return Err(Error::Checkpoint(
            "relation types differ between checkpoint and store schema".into(),
        ));
    }
    Ok(())
}

fn write_f64s<W: Write>(w: &mut W, values: &[f64]) -> std::io::Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], path: &Path) -> Result<()> {
    r.read_exact(buf)
        .map_err(|e| Error::Checkpoint(format!("{}: truncated file ({e})", path.display())))
}

fn read_u32<R: Read>(r: &mut R, path: &Path) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b, path)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R, path: &Path) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b, path)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64s<R: Read>(r: &mut R, n: usize, path: &Path) -> Result<Vec<f64>> {
    let mut bytes = vec![0u8; n * 8];
    read_exact(r, &mut bytes, path)?;
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}
