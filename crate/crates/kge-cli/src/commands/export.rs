//! `kge export`: embeddings as TSV, optionally mapped into the anchor space.

use std::io::Write;

use kge_core::model::{KgeModel, ModelKind};
use kge_core::schema::EntityTypeId;
use kge_core::{Error, Result};

use crate::args::{log_info, CliArgs};
use crate::commands::train::load_graph;
use crate::manifest::RunManifest;

pub fn run(args: &CliArgs) -> Result<()> {
    let checkpoint = args.require_checkpoint()?;
    let graph_dir = args.require_graph()?;
    let out = args.require_out()?;

    let (_, store) = load_graph(graph_dir)?;
    let model = KgeModel::load(checkpoint)?;
    model.validate_store(&store)?;

    // Anchor-space export maps every non-anchor entity through the unique
    // anchor-headed relation of its type. Relation consolidation makes that
    // relation unambiguous when it exists at all.
    let anchor_relations: Option<Vec<Option<usize>>> = if args.anchor_space {
        let ModelKind::TransRA { anchor } = model.kind else {
            return Err(Error::Config(format!(
                "--anchor-space requires an anchored (transra) checkpoint; `{}` is {}",
                checkpoint.display(),
                model.kind.name()
            )));
        };
        let mut per_type = vec![None; model.entity_types.len()];
        for (ti, name) in model.entity_types.iter().enumerate() {
            let ty = EntityTypeId(ti);
            if ty == anchor {
                continue;
            }
            let rel = model
                .relation_types
                .iter()
                .position(|r| r.head == anchor && r.tail == ty);
            match rel {
                Some(r) => per_type[ti] = Some(r),
                None => {
                    return Err(Error::Config(format!(
                        "entity type `{name}` has no anchor-headed relation; it cannot be exported into the anchor space"
                    )))
                }
            }
        }
        Some(per_type)
    } else {
        None
    };

    std::fs::create_dir_all(out).map_err(|e| Error::io(out.display(), e))?;
    let path = out.join(if args.anchor_space {
        "embeddings_anchor_space.tsv"
    } else {
        "embeddings.tsv"
    });
    let file = std::fs::File::create(&path).map_err(|e| Error::io(path.display(), e))?;
    let mut w = std::io::BufWriter::new(file);
    let mut rows = 0usize;
    for (ti, name) in model.entity_types.iter().enumerate() {
        let ty = EntityTypeId(ti);
        for local in 0..store.vocab(ty).len() as u32 {
            let raw = store.vocab(ty).raw_id(local);
            let row = model.embedding(ty, local);
            let vector: Vec<f64> = match &anchor_relations {
                Some(per_type) => match per_type[ti] {
                    Some(rel) => model.relations[rel].transform(row),
                    None => row.to_vec(),
                },
                None => row.to_vec(),
            };
            let mut line = format!("{name}\t{raw}");
            for v in vector {
                line.push('\t');
                line.push_str(&format!("{v}"));
            }
            writeln!(w, "{line}").map_err(|e| Error::io(path.display(), e))?;
            rows += 1;
        }
    }
    w.flush().map_err(|e| Error::io(path.display(), e))?;

    let mut manifest = RunManifest::new("export", args.deterministic);
    manifest.field("input.checkpoint", checkpoint.display());
    manifest.field("input.graph", graph_dir.display());
    manifest.field("output.embeddings", path.display());
    manifest.field("anchor_space", args.anchor_space);
    manifest.field("rows", rows);
    manifest.write(out)?;
    log_info(&format!("exported {rows} embedding rows to {}", path.display()));
    Ok(())
}
