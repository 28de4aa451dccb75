//! `kge train`: split holdout, run the loop, write checkpoints + telemetry.

use std::path::Path;

use kge_core::loss::LossConfig;
use kge_core::math::{AdagradConfig, DistanceKind};
use kge_core::model::{KgeModel, ModelKind, TranslationSide};
use kge_core::schema::{EdgeTypeId, Schema};
use kge_core::store::TripleStore;
use kge_core::train::{telemetry_header, train, resolve_mix, TrainConfig};
use kge_core::{Error, Result};

use crate::args::{log_debug, log_info, CliArgs};
use crate::config::ConfigFile;
use crate::manifest::RunManifest;

pub struct TrainFileConfig {
    pub train: TrainConfig,
    pub holdout_per_edge_type: usize,
    pub holdout_leak_into_train: bool,
}

pub fn parse_train_config(
    cfg: &mut ConfigFile,
    schema: &Schema,
    seed_override: Option<u64>,
) -> Result<TrainFileConfig> {
    let kind_name = cfg.require("model")?;
    let kind = match kind_name.as_str() {
        "transe" => ModelKind::TransE,
        "transr" => ModelKind::TransR,
        "transra" => {
            let anchor_name = cfg.require("anchor")?;
            let anchor = schema.entity_type(&anchor_name).ok_or_else(|| {
                Error::Config(format!("anchor `{anchor_name}` is not an entity type"))
            })?;
            ModelKind::TransRA { anchor }
        }
        other => {
            return Err(Error::Config(format!(
                "key `model` expects transe|transr|transra, got `{other}`"
            )))
        }
    };
    let dist_name = cfg.get("distance").unwrap_or_else(|| "cosine".into());
    let dist = DistanceKind::parse(&dist_name)
        .ok_or_else(|| Error::Config(format!("key `distance` expects cosine|l2, got `{dist_name}`")))?;
    let side_name = cfg.get("transr_translation").unwrap_or_else(|| "tail".into());
    let side = TranslationSide::parse(&side_name).ok_or_else(|| {
        Error::Config(format!(
            "key `transr_translation` expects tail|head, got `{side_name}`"
        ))
    })?;
    let loss_name = cfg.get("loss").unwrap_or_else(|| "sampled_softmax".into());
    let loss = match loss_name.as_str() {
        "sampled_softmax" => LossConfig::SampledSoftmax {
            temperature: cfg.parse_or("temperature", 0.1)?,
        },
        "margin_ranking" => LossConfig::MarginRanking {
            margin: cfg.parse_or("margin", 1.0)?,
        },
        "mean_negative_margin" => LossConfig::MeanNegativeMargin {
            margin: cfg.parse_or("margin", 1.0)?,
        },
        other => {
            return Err(Error::Config(format!(
                "key `loss` expects sampled_softmax|margin_ranking|mean_negative_margin, got `{other}`"
            )))
        }
    };
    let mix = match cfg.get("mix") {
        None => None,
        Some(spec) => Some(parse_mix(&spec, schema)?),
    };
    let seed = match seed_override {
        Some(s) => {
            cfg.get("seed");
            s
        }
        None => cfg.parse_or("seed", 0)?,
    };

    let train = TrainConfig {
        kind,
        dim: cfg.parse_or("dim", 64)?,
        dist,
        transr_translation: side,
        steps: cfg.parse_or("steps", 5000)?,
        batch_size: cfg.parse_or("batch_size", 1024)?,
        seed,
        loss,
        mix,
        k_uniform: cfg.parse_or("k_uniform", 2)?,
        k_in_batch: cfg.parse_or("k_in_batch", 2)?,
        pool_size: cfg.parse_or("pool_size", 100_000)?,
        optimizer: AdagradConfig {
            learning_rate: cfg.parse_or("learning_rate", 0.1)?,
            epsilon: cfg.parse_or("adagrad_epsilon", 1e-10)?,
        },
        checkpoint_cadence: cfg.parse_or("checkpoint_cadence", 1000)?,
        telemetry_cadence: cfg.parse_or("telemetry_cadence", 100)?,
    };
    Ok(TrainFileConfig {
        train,
        holdout_per_edge_type: cfg.parse_or("holdout_per_edge_type", 0)?,
        holdout_leak_into_train: cfg.parse_or("holdout_leak_into_train", false)?,
    })
}

/// `head-activity-tail:fraction, ...`
fn parse_mix(spec: &str, schema: &Schema) -> Result<Vec<(EdgeTypeId, f64)>> {
    let mut out = Vec::new();
    for part in spec.split(',') {
        let part = part.trim();
        let (name, frac) = part
            .split_once(':')
            .ok_or_else(|| Error::Config(format!("mix entry `{part}` expects `edge:fraction`")))?;
        let pieces: Vec<&str> = name.split('-').collect();
        if pieces.len() != 3 {
            return Err(Error::Config(format!(
                "mix edge `{name}` expects `head-activity-tail`"
            )));
        }
        let edge = schema
            .edge_type(pieces[0], pieces[1], pieces[2])
            .ok_or_else(|| Error::Config(format!("mix references unknown edge type `{name}`")))?;
        let fraction: f64 = frac
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("bad mix fraction `{frac}`")))?;
        out.push((edge, fraction));
    }
    Ok(out)
}

pub fn load_graph(dir: &Path) -> Result<(Schema, TripleStore)> {
    let schema = Schema::load(&dir.join("schema.txt"))?;
    let store = TripleStore::load_edges(&dir.join("edges.tsv"), &schema)?;
    Ok((schema, store))
}

pub fn run(args: &CliArgs) -> Result<()> {
    let config_path = args.require_config()?;
    let graph_dir = args.require_graph()?;
    let out = args.require_out()?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out.display(), e))?;

    let (schema, full_store) = load_graph(graph_dir)?;
    let mut cfg = ConfigFile::load(config_path)?;
    let file_cfg = parse_train_config(&mut cfg, &schema, args.seed)?;
    cfg.finish()?;

    let split = full_store
        .clone()
        .split_holdout(file_cfg.holdout_per_edge_type, file_cfg.train.seed);
    let train_store = if file_cfg.holdout_leak_into_train {
        full_store
    } else {
        split.train
    };
    let eval_edges_path = out.join("eval_edges.tsv");
    split.eval.save_edges(&eval_edges_path)?;
    std::fs::write(
        out.join("split_manifest.txt"),
        split.manifest.to_text(&schema),
    )
    .map_err(|e| Error::io(out.display(), e))?;

    log_info(&format!(
        "training {} dim {} for {} steps over {} edges",
        file_cfg.train.kind.name(),
        file_cfg.train.dim,
        file_cfg.train.steps,
        train_store.total_edges()
    ));
    let mix = resolve_mix(&train_store, &file_cfg.train)?;
    for (et, count) in mix.counts() {
        log_debug(&format!(
            "batch slot {}: {count} positives",
            schema.edge_name(et)
        ));
    }
    let ckpt_dir = out.join("checkpoints");
    let outcome = train(&train_store, &file_cfg.train, Some(&ckpt_dir))?;

    let mut telemetry = telemetry_header(&train_store, &mix);
    telemetry.push('\n');
    for rec in &outcome.telemetry {
        telemetry.push_str(&rec.to_line());
        telemetry.push('\n');
    }
    std::fs::write(out.join("telemetry.tsv"), telemetry)
        .map_err(|e| Error::io(out.display(), e))?;

    // Self-check: the final checkpoint reloads to the exact parameters.
    let final_ckpt = ckpt_dir.join("model.ckpt");
    let reloaded = KgeModel::load(&final_ckpt)?;
    if reloaded.fingerprint() != outcome.model.fingerprint() {
        return Err(Error::Checkpoint(
            "self-check failed: reloaded checkpoint differs from trained model".into(),
        ));
    }

    let mut manifest = RunManifest::new("train", args.deterministic);
    manifest.config_file(config_path)?;
    manifest.field("seed", file_cfg.train.seed);
    manifest.field("input.graph", graph_dir.display());
    manifest.field("output.checkpoint", final_ckpt.display());
    manifest.field("output.eval_edges", eval_edges_path.display());
    manifest.field("model", file_cfg.train.kind.name());
    manifest.field("model_fingerprint", format!("{:016x}", outcome.model.fingerprint()));
    manifest.field("in_batch_shortfall", outcome.in_batch_shortfall);
    manifest.write(out)?;
    log_info(&format!(
        "final checkpoint {} (fingerprint {:016x})",
        final_ckpt.display(),
        outcome.model.fingerprint()
    ));
    Ok(())
}
