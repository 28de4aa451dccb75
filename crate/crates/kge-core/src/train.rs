//! The training loop: compose batch, attach negatives, score, loss,
//! sparse optimizer step.
//!
//! One trainer owns all parameters. Per-pair forward/backward work is pure
//! and runs in parallel; gradients are then accumulated and applied in a
//! fixed order, so a fixed seed reproduces parameters bit for bit.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::loss::LossConfig;
use crate::math::{axpy, distance_gradients, outer_acc, Adagrad, AdagradConfig, DenseMatrix, DistanceKind};
use crate::model::{head_repr, tail_repr, KgeModel, ModelKind, TranslationSide};
use crate::rng;
use crate::sampling::{attach_negatives, build_pool, compose_batch, EdgeStream, MixConfig, NegativePool, TrainBatch};
use crate::schema::{EdgeTypeId, EntityTypeId, RelationTypeId};
use crate::store::TripleStore;

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub kind: ModelKind,
    pub dim: usize,
    pub dist: DistanceKind,
    pub transr_translation: TranslationSide,
    pub steps: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub loss: LossConfig,
    /// Per-edge-type batch fractions; `None` means proportional to volume.
    pub mix: Option<Vec<(EdgeTypeId, f64)>>,
    pub k_uniform: usize,
    pub k_in_batch: usize,
    pub pool_size: usize,
    pub optimizer: AdagradConfig,
    /// Steps between cadence checkpoints; 0 disables intermediate ones.
    pub checkpoint_cadence: usize,
    /// Steps between telemetry records.
    pub telemetry_cadence: usize,
}

impl TrainConfig {
    pub fn new(kind: ModelKind, dim: usize, steps: usize, seed: u64) -> TrainConfig {
        TrainConfig {
            kind,
            dim,
            dist: DistanceKind::Cosine,
            transr_translation: TranslationSide::Tail,
            steps,
            batch_size: 1024,
            seed,
            loss: LossConfig::SampledSoftmax { temperature: 0.1 },
            mix: None,
            k_uniform: 2,
            k_in_batch: 2,
            pool_size: 100_000,
            optimizer: AdagradConfig::default(),
            checkpoint_cadence: 1000,
            telemetry_cadence: 100,
        }
    }

    fn validate(&self, store: &TripleStore) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Config("dim must be >= 1".into()));
        }
        self.loss.validate()?;
        if self.k_uniform + self.k_in_batch == 0 {
            return Err(Error::Config(
                "k_uniform + k_in_batch must be >= 1; the loss is undefined without negatives"
                    .into(),
            ));
        }
        if let Some(mix) = &self.mix {
            for (et, _) in mix {
                if et.0 >= store.schema().edge_types().len() {
                    return Err(Error::Config(format!(
                        "mix references unknown edge type index {}",
                        et.0
                    )));
                }
            }
        }
        if let ModelKind::TransRA { anchor } = self.kind {
            if anchor.0 >= store.schema().entity_types().len() {
                return Err(Error::Config("anchor entity type out of range".into()));
            }
        }
        Ok(())
    }
}

/// One telemetry record: loss plus per-edge-type mean positive/negative
/// scores and the global parameter-gradient norm.
#[derive(Debug, Clone)]
pub struct TelemetryRecord {
    pub step: usize,
    pub loss: f64,
    pub per_type: Vec<(EdgeTypeId, f64, f64)>,
    pub grad_norm: f64,
}

pub fn telemetry_header(store: &TripleStore, mix: &MixConfig) -> String {
    let mut cols = vec!["step".to_string(), "loss".to_string()];
    for (et, _) in &mix.fractions {
        let name = store.schema().edge_name(*et);
        cols.push(format!("{name}:pos_mean"));
        cols.push(format!("{name}:neg_mean"));
    }
    cols.push("grad_norm".to_string());
    format!("# {}", cols.join("\t"))
}

impl TelemetryRecord {
    pub fn to_line(&self) -> String {
        let mut cols = vec![self.step.to_string(), format!("{:.6}", self.loss)];
        for (_, pos, neg) in &self.per_type {
            cols.push(format!("{pos:.6}"));
            cols.push(format!("{neg:.6}"));
        }
        cols.push(format!("{:.6}", self.grad_norm));
        cols.join("\t")
    }
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub model: KgeModel,
    pub telemetry: Vec<TelemetryRecord>,
    pub checkpoints: Vec<PathBuf>,
    /// In-batch negative draws that fell back to the uniform pool.
    pub in_batch_shortfall: usize,
}

/// Gradients accumulated over one batch, keyed sparsely.
struct BatchGrads {
    /// (entity type, row) -> d loss / d row.
    rows: HashMap<(usize, u32), Vec<f64>>,
    rel_projection: Vec<Option<DenseMatrix>>,
    rel_translation: Vec<Option<Vec<f64>>>,
}

impl BatchGrads {
    fn new(n_relations: usize) -> BatchGrads {
        BatchGrads {
            rows: HashMap::new(),
            rel_projection: vec![None; n_relations],
            rel_translation: vec![None; n_relations],
        }
    }

    fn norm(&self) -> f64 {
        let mut sq = 0.0;
        for g in self.rows.values() {
            sq += g.iter().map(|x| x * x).sum::<f64>();
        }
        for m in self.rel_projection.iter().flatten() {
            sq += m.data().iter().map(|x| x * x).sum::<f64>();
        }
        for v in self.rel_translation.iter().flatten() {
            sq += v.iter().map(|x| x * x).sum::<f64>();
        }
        sq.sqrt()
    }
}

/// Forward pass output for one positive and its negatives.
struct PosForward {
    pos_score: f64,
    neg_scores: Vec<f64>,
    /// Distance gradients w.r.t. the head/tail representations.
    ga_pos: Vec<f64>,
    gb_pos: Vec<f64>,
    ga_neg: Vec<Vec<f64>>,
    gb_neg: Vec<Vec<f64>>,
}

/// Score every (positive, negative) pair of the batch. Pure; parallel over
/// positives with order-preserving collection.
fn forward_batch(model: &KgeModel, store: &TripleStore, batch: &TrainBatch) -> Vec<Vec<PosForward>> {
    let spec = model.score_spec();
    batch
        .groups
        .iter()
        .map(|group| {
            let et = &store.schema().edge_types()[group.edge_type.0];
            let rel = store.schema().relation_of(group.edge_type);
            let rp = &model.relations[rel.0];
            let anchored = model.head_is_anchor(rel);
            group
                .positives
                .par_iter()
                .enumerate()
                .map(|(i, triple)| {
                    let h = model.embedding(et.head, triple.head);
                    let a = head_repr(&spec, rp, h, anchored);
                    let b_pos =
                        tail_repr(&spec, rp, model.embedding(et.tail, triple.tail), anchored);
                    let (pos_score, ga_pos, gb_pos) = distance_gradients(spec.dist, &a, &b_pos);
                    let negs = group.negatives_of(i);
                    let mut neg_scores = Vec::with_capacity(negs.len());
                    let mut ga_neg = Vec::with_capacity(negs.len());
                    let mut gb_neg = Vec::with_capacity(negs.len());
                    for &nt in negs {
                        let b = tail_repr(&spec, rp, model.embedding(et.tail, nt), anchored);
                        let (s, ga, gb) = distance_gradients(spec.dist, &a, &b);
                        neg_scores.push(s);
                        ga_neg.push(ga);
                        gb_neg.push(gb);
                    }
                    PosForward {
                        pos_score,
                        neg_scores,
                        ga_pos,
                        gb_pos,
                        ga_neg,
                        gb_neg,
                    }
                })
                .collect()
        })
        .collect()
}

/// Chain loss gradients through the score functions into parameter space.
/// Returns the loss value, the accumulated gradients, and per-type score
/// means for telemetry.
fn batch_gradients(
    model: &KgeModel,
    store: &TripleStore,
    batch: &TrainBatch,
    loss: &LossConfig,
) -> (f64, BatchGrads, Vec<(EdgeTypeId, f64, f64)>) {
    let spec = model.score_spec();
    let forwards = forward_batch(model, store, batch);

    let mut pos_scores = Vec::new();
    let mut neg_scores = Vec::new();
    for group in &forwards {
        for f in group {
            pos_scores.push(f.pos_score);
            neg_scores.push(f.neg_scores.clone());
        }
    }
    let (loss_value, score_grads) = loss.compute(&pos_scores, &neg_scores);

    let mut grads = BatchGrads::new(model.relations.len());
    let dim = model.dim;
    let mut flat = 0usize;
    let mut per_type = Vec::with_capacity(batch.groups.len());
    for (group, fwd_group) in batch.groups.iter().zip(&forwards) {
        let et = &store.schema().edge_types()[group.edge_type.0];
        let rel = store.schema().relation_of(group.edge_type);
        let rp = &model.relations[rel.0];
        let anchored = model.head_is_anchor(rel);
        let paths = spec.paths(anchored);

        let mut pos_sum = 0.0;
        let mut neg_sum = 0.0;
        let mut neg_count = 0usize;
        for (i, (triple, fwd)) in group.positives.iter().zip(fwd_group).enumerate() {
            pos_sum += fwd.pos_score;
            neg_sum += fwd.neg_scores.iter().sum::<f64>();
            neg_count += fwd.neg_scores.len();
            let wp = score_grads.pos[flat];
            let wn = &score_grads.neg[flat];
            flat += 1;

            // Head-side gradients of all pairs share the head, so sum the
            // distance gradients first and project once.
            let mut ga_sum = vec![0.0; dim];
            axpy(&mut ga_sum, wp, &fwd.ga_pos);
            for (w, ga) in wn.iter().zip(&fwd.ga_neg) {
                axpy(&mut ga_sum, *w, ga);
            }
            let h = model.embedding(et.head, triple.head);
            let head_grad = if paths.project_head {
                rp.projection.matvec_t(&ga_sum)
            } else {
                ga_sum.clone()
            };
            grads
                .rows
                .entry((et.head.0, triple.head))
                .or_insert_with(|| vec![0.0; dim])
                .iter_mut()
                .zip(&head_grad)
                .for_each(|(acc, g)| *acc += g);

            // Tail-side gradients, one per pair.
            let mut tail_pass = |tail: u32, w: f64, gb: &[f64]| {
                if w == 0.0 {
                    return;
                }
                let t = model.embedding(et.tail, tail);
                let tail_grad = if paths.project_tail {
                    let mut scaled = vec![0.0; dim];
                    axpy(&mut scaled, w, gb);
                    rp.projection.matvec_t(&scaled)
                } else {
                    let mut scaled = vec![0.0; dim];
                    axpy(&mut scaled, w, gb);
                    scaled
                };
                grads
                    .rows
                    .entry((et.tail.0, tail))
                    .or_insert_with(|| vec![0.0; dim])
                    .iter_mut()
                    .zip(&tail_grad)
                    .for_each(|(acc, g)| *acc += g);
                if paths.project_tail {
                    let m = grads.rel_projection[rel.0]
                        .get_or_insert_with(|| DenseMatrix::zeros(dim, dim));
                    outer_acc(m, w, gb, t);
                }
                if paths.translation == TranslationSide::Tail {
                    let tr = grads.rel_translation[rel.0].get_or_insert_with(|| vec![0.0; dim]);
                    axpy(tr, w, gb);
                }
            };
            tail_pass(triple.tail, wp, &fwd.gb_pos);
            for ((w, gb), &nt) in wn.iter().zip(&fwd.gb_neg).zip(group.negatives_of(i)) {
                tail_pass(nt, *w, gb);
            }

            // Head-path relation gradients (projection and/or head-side
            // translation) also share the summed distance gradient.
            if paths.project_head {
                let m = grads.rel_projection[rel.0]
                    .get_or_insert_with(|| DenseMatrix::zeros(dim, dim));
                outer_acc(m, 1.0, &ga_sum, h);
            }
            if paths.translation == TranslationSide::Head {
                let tr = grads.rel_translation[rel.0].get_or_insert_with(|| vec![0.0; dim]);
                axpy(tr, 1.0, &ga_sum);
            }
        }
        let n_pos = group.positives.len().max(1);
        per_type.push((
            group.edge_type,
            pos_sum / n_pos as f64,
            neg_sum / neg_count.max(1) as f64,
        ));
    }

    (loss_value, grads, per_type)
}

/// Optimizer state for every parameter tensor.
struct OptState {
    tables: Vec<Adagrad>,
    projections: Vec<Adagrad>,
    translations: Vec<Adagrad>,
}

impl OptState {
    fn new(model: &KgeModel, cfg: AdagradConfig) -> OptState {
        OptState {
            tables: model
                .tables
                .iter()
                .map(|t| Adagrad::new(t.rows() * t.cols(), cfg))
                .collect(),
            projections: model
                .relations
                .iter()
                .map(|_| Adagrad::new(model.dim * model.dim, cfg))
                .collect(),
            translations: model
                .relations
                .iter()
                .map(|_| Adagrad::new(model.dim, cfg))
                .collect(),
        }
    }

    /// Apply accumulated gradients in sorted key order.
    fn apply(&mut self, model: &mut KgeModel, grads: &BatchGrads, store: &TripleStore) -> Result<()> {
        let dim = model.dim;
        let mut keys: Vec<&(usize, u32)> = grads.rows.keys().collect();
        keys.sort_unstable();
        for &&(ty, row) in &keys {
            let g = &grads.rows[&(ty, row)];
            let table = &mut model.tables[ty];
            self.tables[ty].step(row as usize * dim, table.row_mut(row as usize), g, || {
                format!(
                    "table[{}] row {row}",
                    store.schema().entity_name(EntityTypeId(ty))
                )
            })?;
        }
        for (ri, m) in grads.rel_projection.iter().enumerate() {
            if let Some(m) = m {
                let rel_name = relation_name(model, store, RelationTypeId(ri));
                self.projections[ri].step(
                    0,
                    model.relations[ri].projection.data_mut(),
                    m.data(),
                    || format!("relation[{rel_name}] projection"),
                )?;
            }
        }
        for (ri, v) in grads.rel_translation.iter().enumerate() {
            if let Some(v) = v {
                let rel_name = relation_name(model, store, RelationTypeId(ri));
                self.translations[ri].step(0, &mut model.relations[ri].translation, v, || {
                    format!("relation[{rel_name}] translation")
                })?;
            }
        }
        Ok(())
    }
}

fn relation_name(model: &KgeModel, store: &TripleStore, rel: RelationTypeId) -> String {
    let r = &model.relation_types[rel.0];
    format!(
        "{}->{}",
        store.schema().entity_name(r.head),
        store.schema().entity_name(r.tail)
    )
}

/// Resolve the mix: explicit fractions or proportional-to-volume default.
pub fn resolve_mix(store: &TripleStore, config: &TrainConfig) -> Result<MixConfig> {
    match &config.mix {
        Some(fractions) => {
            let mix = MixConfig {
                fractions: fractions.clone(),
                batch_size: config.batch_size,
            };
            mix.validate()?;
            Ok(mix)
        }
        None => MixConfig::proportional(store, config.batch_size),
    }
}

/// Run the full loop. When `checkpoint_dir` is given, checkpoints are written
/// at cadence and at completion; on a non-finite-loss abort the last cadence
/// checkpoint is retained.
pub fn train(
    store: &TripleStore,
    config: &TrainConfig,
    checkpoint_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    config.validate(store)?;
    let mix = resolve_mix(store, config)?;

    let mut streams = Vec::new();
    for (et, fraction) in &mix.fractions {
        if *fraction > 0.0 {
            streams.push(EdgeStream::new(store, *et, config.seed)?);
        }
    }

    // One pool per distinct tail entity type among mixed edge types.
    let mut pools: Vec<NegativePool> = Vec::new();
    for (et, _) in &mix.fractions {
        let tail_ty = store.schema().edge_types()[et.0].tail;
        if !pools.iter().any(|p| p.entity_type == tail_ty) {
            pools.push(build_pool(store, tail_ty, config.pool_size, config.seed)?);
        }
    }

    let mut model = KgeModel::init(store, config.kind, config.dist, config.dim, config.seed);
    model.transr_translation = config.transr_translation;
    let mut opt = OptState::new(&model, config.optimizer);
    let mut batch_rng = rng::stream(config.seed, "batch", 0);
    let mut telemetry = Vec::new();
    let mut checkpoints = Vec::new();
    let mut shortfall = 0usize;

    if let Some(dir) = checkpoint_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display(), e))?;
    }

    for step in 1..=config.steps {
        let positives = compose_batch(store, &mut streams, &mix);
        let batch = attach_negatives(
            store,
            positives,
            &pools,
            config.k_uniform,
            config.k_in_batch,
            &mut batch_rng,
        )?;
        shortfall += batch.stats.in_batch_shortfall;

        let (loss_value, grads, per_type) = batch_gradients(&model, store, &batch, &config.loss);
        if !loss_value.is_finite() {
            return Err(Error::Training(format!(
                "non-finite loss {loss_value} at step {step}; aborting with last-good checkpoint"
            )));
        }
        if config.telemetry_cadence > 0 && step % config.telemetry_cadence == 0 {
            telemetry.push(TelemetryRecord {
                step,
                loss: loss_value,
                per_type: per_type.clone(),
                grad_norm: grads.norm(),
            });
        }
        opt.apply(&mut model, &grads, store)?;

        if let Some(dir) = checkpoint_dir {
            if config.checkpoint_cadence > 0 && step % config.checkpoint_cadence == 0 {
                let path = dir.join(format!("step-{step:06}.ckpt"));
                model.save(&path)?;
                checkpoints.push(path);
            }
        }
    }

    if let Some(dir) = checkpoint_dir {
        let path = dir.join("model.ckpt");
        model.save(&path)?;
        checkpoints.push(path);
    }

    Ok(TrainOutcome {
        model,
        telemetry,
        checkpoints,
        in_batch_shortfall: shortfall,
    })
}
