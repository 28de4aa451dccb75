//! `kge eval`: rank holdout positives against sampled corruptions, write
//! per-checkpoint reports and an optional side-by-side comparison.

use kge_core::eval::{evaluate, render_comparison, EvalConfig};
use kge_core::model::KgeModel;
use kge_core::store::TripleStore;
use kge_core::{Error, Result};

use crate::args::{log_info, CliArgs};
use crate::commands::train::load_graph;
use crate::config::ConfigFile;
use crate::manifest::RunManifest;

pub fn parse_eval_config(cfg: &mut ConfigFile, seed_override: Option<u64>) -> Result<EvalConfig> {
    let ks = match cfg.get("k") {
        None => vec![10, 100],
        Some(spec) => spec
            .split(',')
            .map(|p| {
                p.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::Config(format!("bad k `{p}`")))
            })
            .collect::<Result<_>>()?,
    };
    let seed = match seed_override {
        Some(s) => {
            cfg.get("seed");
            s
        }
        None => cfg.parse_or("seed", 0)?,
    };
    Ok(EvalConfig {
        n_eval: cfg.parse_or("n_eval", 1000)?,
        ks,
        seed,
        max_positives_per_edge_type: cfg.parse_or("max_positives_per_edge_type", 2000)?,
        share_corruptions: cfg.parse_or("share_corruptions", false)?,
    })
}

pub fn run(args: &CliArgs) -> Result<()> {
    let config_path = args.require_config()?;
    let graph_dir = args.require_graph()?;
    let out = args.require_out()?;
    if args.checkpoints.is_empty() {
        return Err(Error::Config("missing --checkpoint".into()));
    }
    let eval_edges = args
        .eval_edges
        .as_ref()
        .ok_or_else(|| Error::Config("missing --eval-edges (holdout written by `kge train`)".into()))?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out.display(), e))?;

    let (_, full_store) = load_graph(graph_dir)?;
    let eval_store = TripleStore::load_edges_with_vocab(eval_edges, &full_store)?;
    let mut cfg = ConfigFile::load(config_path)?;
    let eval_cfg = parse_eval_config(&mut cfg, args.seed)?;
    cfg.finish()?;

    let mut labels = Vec::new();
    let mut reports = Vec::new();
    let single = args.checkpoints.len() == 1;
    for path in &args.checkpoints {
        let model = KgeModel::load(path)?;
        let report = evaluate(&model, &eval_store, &eval_cfg)?;
        let label = if single {
            model.kind.name().to_string()
        } else {
            let stem = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "checkpoint".into());
            format!("{}:{}", model.kind.name(), stem)
        };
        let suffix = if single {
            String::new()
        } else {
            format!("-{}", label.replace([':', '/'], "_"))
        };
        let tsv_path = out.join(format!("report{suffix}.tsv"));
        let txt_path = out.join(format!("report{suffix}.txt"));
        std::fs::write(&tsv_path, report.to_tsv()).map_err(|e| Error::io(tsv_path.display(), e))?;
        std::fs::write(&txt_path, report.to_table()).map_err(|e| Error::io(txt_path.display(), e))?;
        log_info(&format!("wrote {}", txt_path.display()));
        labels.push(label);
        reports.push(report);
    }

    if args.compare {
        let table = render_comparison(&labels, &reports);
        let path = out.join("compare.txt");
        std::fs::write(&path, &table).map_err(|e| Error::io(path.display(), e))?;
        print!("{table}");
    } else if let Some(report) = reports.first() {
        print!("{}", report.to_table());
    }

    let mut manifest = RunManifest::new("eval", args.deterministic);
    manifest.config_file(config_path)?;
    manifest.field("seed", eval_cfg.seed);
    manifest.field("input.graph", graph_dir.display());
    manifest.field("input.eval_edges", eval_edges.display());
    for (label, path) in labels.iter().zip(&args.checkpoints) {
        manifest.field(&format!("input.checkpoint.{label}"), path.display());
    }
    manifest.field("n_eval", eval_cfg.n_eval);
    manifest.write(out)?;
    Ok(())
}
