//! `kge finetune`: build the planted ranking dataset and fine-tune a
//! checkpoint inside the ranking model under the chosen integration mode.

use kge_core::model::KgeModel;
use kge_core::ranker::{
    build_ranking_dataset, train_ranker, IntegrationMode, RankerConfig, RankingDataConfig,
};
use kge_core::synth::CommunityMap;
use kge_core::{Error, Result};

use crate::args::{log_info, CliArgs};
use crate::commands::train::load_graph;
use crate::config::ConfigFile;
use crate::manifest::RunManifest;

pub fn run(args: &CliArgs) -> Result<()> {
    let config_path = args.require_config()?;
    let graph_dir = args.require_graph()?;
    let checkpoint = args.require_checkpoint()?;
    let out = args.require_out()?;
    let mode_name = args
        .mode
        .as_deref()
        .ok_or_else(|| Error::Config("missing --mode {frozen,direct,attention}".into()))?;
    let mode = IntegrationMode::parse(mode_name).ok_or_else(|| {
        Error::Config(format!(
            "--mode expects frozen|direct|attention, got `{mode_name}`"
        ))
    })?;

    let (schema, store) = load_graph(graph_dir)?;
    let communities = CommunityMap::load(&graph_dir.join("communities.tsv"), &store)?;
    let model = KgeModel::load(checkpoint)?;
    model.validate_store(&store)?;

    let mut cfg = ConfigFile::load(config_path)?;
    let seed = match args.seed {
        Some(s) => {
            cfg.get("seed");
            s
        }
        None => cfg.parse_or("seed", 0)?,
    };
    let slots = match cfg.get("slots") {
        None => (0..schema.entity_types().len())
            .map(kge_core::schema::EntityTypeId)
            .collect(),
        Some(spec) => spec
            .split_whitespace()
            .map(|name| {
                schema
                    .entity_type(name)
                    .ok_or_else(|| Error::Config(format!("unknown slot entity type `{name}`")))
            })
            .collect::<Result<Vec<_>>>()?,
    };
    let data_cfg = RankingDataConfig {
        n_examples: cfg.parse_or("n_examples", 8000)?,
        neg_ratio: cfg.parse_or("neg_ratio", 1.0)?,
        n_side_features: cfg.parse_or("side_features", 4)?,
        slots,
    };
    let ranker_cfg = RankerConfig {
        mode,
        hidden_dim: cfg.parse_or("hidden_dim", 64)?,
        attn_dim: cfg.get("attn_dim").map(|v| v.parse().map_err(|_| {
            Error::Config(format!("bad attn_dim `{v}`"))
        })).transpose()?,
        epochs: cfg.parse_or("epochs", 12)?,
        minibatch: cfg.parse_or("minibatch", 128)?,
        lr_dense: cfg.parse_or("lr_dense", 0.05)?,
        lr_kge: cfg.parse_or("lr_kge", 0.05)?,
        validation_fraction: cfg.parse_or("validation_fraction", 0.2)?,
        seed,
    };
    cfg.finish()?;

    std::fs::create_dir_all(out).map_err(|e| Error::io(out.display(), e))?;
    let dataset = build_ranking_dataset(&store, &communities, &data_cfg, seed)?;
    let dataset_path = out.join("dataset.tsv");
    dataset.save(&dataset_path, &store)?;

    log_info(&format!(
        "finetuning mode={} over {} examples",
        mode.name(),
        dataset.examples.len()
    ));
    let outcome = train_ranker(&model, &dataset, &ranker_cfg)?;

    // Self-check: the frozen contract is bytes, not intent.
    if mode == IntegrationMode::FrozenPretrained
        && outcome.kge_fingerprint_before != outcome.kge_fingerprint_after
    {
        return Err(Error::Training(
            "self-check failed: frozen mode modified the KGE table".into(),
        ));
    }

    let metrics_path = out.join("metrics.tsv");
    std::fs::write(&metrics_path, outcome.metrics_tsv())
        .map_err(|e| Error::io(metrics_path.display(), e))?;

    let mut manifest = RunManifest::new("finetune", args.deterministic);
    manifest.config_file(config_path)?;
    manifest.field("seed", seed);
    manifest.field("mode", mode.name());
    manifest.field("input.graph", graph_dir.display());
    manifest.field("input.checkpoint", checkpoint.display());
    manifest.field("output.dataset", dataset_path.display());
    manifest.field("output.metrics", metrics_path.display());
    manifest.field("validation_auc", format!("{:.6}", outcome.final_val_auc()));
    manifest.write(out)?;
    log_info(&format!(
        "mode={} final validation AUC {:.4}",
        mode.name(),
        outcome.final_val_auc()
    ));
    println!("{}", outcome.metrics_tsv());
    Ok(())
}
