//! Integration of pretrained embedding tables into a binary ranking model.
//!
//! Three modes, one architecture: entity slots are looked up in a copy of
//! the pretrained tables, mapped into the anchor space through their
//! relation transforms, and fed with dense side features into a one-hidden-
//! layer scorer.
//!
//! * frozen: table and transforms are read-only; only the scorer trains.
//! * direct: table and transforms fine-tune jointly with the scorer.
//! * attention: a self-attention layer over the slot embeddings feeds the
//!   scorer both attended outputs and raw pairwise logits; everything trains.

mod attention;
mod auc;
mod data;

pub use attention::{attend, attend_backward, attend_forward, AttentionForward, AttentionGradients, AttentionParams};
pub use auc::auc;
pub use data::{build_ranking_dataset, RankingDataConfig, RankingDataset, RankingExample};

use std::collections::HashMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::math::{axpy, dot, outer_acc, Adagrad, AdagradConfig, DenseMatrix};
use crate::model::{fingerprint_f64s, KgeModel, ModelKind, RelationParams};
use crate::rng;
use crate::schema::EntityTypeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntegrationMode {
    FrozenPretrained,
    DirectFinetune,
    AttentionFinetune,
}

impl IntegrationMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "frozen" => Some(IntegrationMode::FrozenPretrained),
            "direct" => Some(IntegrationMode::DirectFinetune),
            "attention" => Some(IntegrationMode::AttentionFinetune),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            IntegrationMode::FrozenPretrained => "frozen",
            IntegrationMode::DirectFinetune => "direct",
            IntegrationMode::AttentionFinetune => "attention",
        }
    }

    fn kge_trainable(&self) -> bool {
        !matches!(self, IntegrationMode::FrozenPretrained)
    }
}

#[derive(Debug, Clone)]
pub struct RankerConfig {
    pub mode: IntegrationMode,
    pub hidden_dim: usize,
    /// Attention dim; defaults to the embedding dim.
    pub attn_dim: Option<usize>,
    pub epochs: usize,
    pub minibatch: usize,
    /// Learning rate for the scorer and attention parameters.
    pub lr_dense: f64,
    /// Learning rate for embedding rows and relation transforms.
    pub lr_kge: f64,
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for RankerConfig {
    fn default() -> Self {
        RankerConfig {
            mode: IntegrationMode::AttentionFinetune,
            hidden_dim: 64,
            attn_dim: None,
            epochs: 12,
            minibatch: 128,
            lr_dense: 0.05,
            lr_kge: 0.05,
            validation_fraction: 0.2,
            seed: 0,
        }
    }
}

/// All ranker parameters, including the private copy of the KGE tables.
#[derive(Debug, Clone)]
pub struct RankerParams {
    pub mode: IntegrationMode,
    pub slots: Vec<EntityTypeId>,
    pub dim: usize,
    pub n_side: usize,
    /// Copied embedding tables, indexed by entity type.
    pub tables: Vec<DenseMatrix>,
    /// Anchor-space transform per entity type; `None` feeds the raw row.
    pub transforms: Vec<Option<RelationParams>>,
    pub attention: Option<AttentionParams>,
    pub w1: DenseMatrix,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

impl RankerParams {
    /// Copy tables and transforms out of a pretrained model. For the
    /// anchored kind every non-anchor slot type must be reachable through an
    /// anchor-headed relation; other kinds feed raw embeddings.
    pub fn from_model(
        model: &KgeModel,
        slots: &[EntityTypeId],
        n_side: usize,
        cfg: &RankerConfig,
    ) -> Result<RankerParams> {
        assert!(slots.len() >= 2, "ranker needs at least two slots");
        let dim = model.dim;
        let n_types = model.entity_types.len();
        let mut transforms: Vec<Option<RelationParams>> = vec![None; n_types];
        if let ModelKind::TransRA { anchor } = model.kind {
            for &slot_ty in slots {
                if slot_ty == anchor {
                    continue;
                }
                let rel = model
                    .relation_types
                    .iter()
                    .position(|r| r.head == anchor && r.tail == slot_ty)
                    .ok_or_else(|| {
                        Error::Config(format!(
                            "entity type `{}` is not reachable from the anchor; no anchor-headed relation exists",
                            model.entity_types[slot_ty.0]
                        ))
                    })?;
                transforms[slot_ty.0] = Some(model.relations[rel].clone());
            }
        }

        let attention = match cfg.mode {
            IntegrationMode::AttentionFinetune => Some(AttentionParams::init(
                dim,
                cfg.attn_dim.unwrap_or(dim),
                rng::sub_seed(cfg.seed, "ranker-attention", 0),
            )),
            _ => None,
        };
        let feature_dim = match &attention {
            Some(a) => a.output_dim(slots.len()) + n_side,
            None => slots.len() * dim + n_side,
        };
        let mut w1 = DenseMatrix::zeros(cfg.hidden_dim, feature_dim);
        let scale1 = 1.0 / (feature_dim as f64).sqrt();
        let mut stream = rng::stream(cfg.seed, "ranker-scorer", 0);
        use rand::Rng;
        for x in w1.data_mut() {
            *x = stream.random_range(-scale1..scale1);
        }
        let scale2 = 1.0 / (cfg.hidden_dim as f64).sqrt();
        let w2 = (0..cfg.hidden_dim)
            .map(|_| stream.random_range(-scale2..scale2))
            .collect();

        Ok(RankerParams {
            mode: cfg.mode,
            slots: slots.to_vec(),
            dim,
            n_side,
            tables: model.tables.clone(),
            transforms,
            attention,
            w1,
            b1: vec![0.0; cfg.hidden_dim],
            w2,
            b2: 0.0,
        })
    }

    /// Fingerprint of the KGE side only (tables + transforms); the frozen
    /// mode must keep this bit-identical through training.
    pub fn kge_fingerprint(&self) -> u64 {
        let mut values: Vec<f64> = Vec::new();
        for t in &self.tables {
            values.extend_from_slice(t.data());
        }
        for tr in self.transforms.iter().flatten() {
            values.extend_from_slice(tr.projection.data());
            values.extend_from_slice(&tr.translation);
        }
        fingerprint_f64s(&values)
    }

    /// Anchor-space representation of one slot.
    fn slot_repr(&self, slot_pos: usize, id: u32) -> Vec<f64> {
        let ty = self.slots[slot_pos];
        let e = self.tables[ty.0].row(id as usize);
        match &self.transforms[ty.0] {
            Some(tr) => tr.transform(e),
            None => e.to_vec(),
        }
    }

    /// Raw score (logit) of one example.
    pub fn logit(&self, ex: &RankingExample) -> f64 {
        self.forward(ex).z
    }

    /// Mean logistic loss over a set of examples.
    pub fn mean_loss(&self, examples: &[RankingExample]) -> f64 {
        assert!(!examples.is_empty());
        examples
            .iter()
            .map(|ex| bce_loss(self.forward(ex).z, ex.label))
            .sum::<f64>()
            / examples.len() as f64
    }

    fn forward(&self, ex: &RankingExample) -> ForwardCache {
        assert_eq!(ex.slots.len(), self.slots.len(), "slot count mismatch");
        assert_eq!(ex.side.len(), self.n_side, "side feature count mismatch");
        let x: Vec<Vec<f64>> = (0..self.slots.len())
            .map(|s| self.slot_repr(s, ex.slots[s]))
            .collect();
        let refs: Vec<&[f64]> = x.iter().map(|v| v.as_slice()).collect();
        let (attn, mut phi) = match &self.attention {
            Some(params) => {
                let fwd = attend_forward(&refs, params);
                let phi = fwd.output.clone();
                (Some(fwd), phi)
            }
            None => {
                let mut phi = Vec::with_capacity(self.slots.len() * self.dim);
                for v in &x {
                    phi.extend_from_slice(v);
                }
                (None, phi)
            }
        };
        phi.extend_from_slice(&ex.side);

        let mut hidden = self.w1.matvec(&phi);
        for (h, b) in hidden.iter_mut().zip(&self.b1) {
            *h = (*h + b).max(0.0);
        }
        let z = dot(&self.w2, &hidden) + self.b2;
        ForwardCache { x, attn, phi, hidden, z }
    }

    /// Mean loss over `examples` plus gradients for every parameter the
    /// mode trains. Pure; callable on arbitrary parameter values.
    pub fn batch_gradients(&self, examples: &[RankingExample]) -> (f64, RankerGrads) {
        assert!(!examples.is_empty());
        let weight = 1.0 / examples.len() as f64;
        let caches: Vec<ForwardCache> =
            examples.par_iter().map(|ex| self.forward(ex)).collect();
        let mut grads = RankerGrads::new(self);
        let mut loss = 0.0;
        for (ex, cache) in examples.iter().zip(&caches) {
            loss += weight * bce_loss(cache.z, ex.label);
            self.backward_into(ex, cache, weight, &mut grads);
        }
        (loss, grads)
    }

    fn backward_into(
        &self,
        ex: &RankingExample,
        cache: &ForwardCache,
        weight: f64,
        grads: &mut RankerGrads,
    ) {
        let y = if ex.label { 1.0 } else { 0.0 };
        let dz = weight * (sigmoid(cache.z) - y);

        // Scorer.
        axpy(&mut grads.w2, dz, &cache.hidden);
        grads.b2 += dz;
        let mut d_pre: Vec<f64> = self.w2.iter().map(|w| dz * w).collect();
        for (g, &h) in d_pre.iter_mut().zip(&cache.hidden) {
            if h <= 0.0 {
                *g = 0.0;
            }
        }
        outer_acc(&mut grads.w1, 1.0, &d_pre, &cache.phi);
        axpy(&mut grads.b1, 1.0, &d_pre);
        let d_phi = self.w1.matvec_t(&d_pre);

        // Side features are inputs; only the slot part propagates.
        let d_slots: Vec<Vec<f64>> = match (&self.attention, &cache.attn) {
            (Some(params), Some(fwd)) => {
                let cut = params.output_dim(self.slots.len());
                let refs: Vec<&[f64]> = cache.x.iter().map(|v| v.as_slice()).collect();
                let attn_grads = attend_backward(&refs, params, fwd, &d_phi[..cut]);
                if let Some(acc) = grads.attention.as_mut() {
                    acc.accumulate(&attn_grads);
                }
                attn_grads.slots
            }
            _ => (0..self.slots.len())
                .map(|s| d_phi[s * self.dim..(s + 1) * self.dim].to_vec())
                .collect(),
        };

        if !self.mode.kge_trainable() {
            return;
        }
        for (s, dx) in d_slots.iter().enumerate() {
            let ty = self.slots[s];
            let id = ex.slots[s];
            let e = self.tables[ty.0].row(id as usize);
            let de = match &self.transforms[ty.0] {
                Some(tr) => {
                    let (gm, gt) = grads.transforms[ty.0]
                        .get_or_insert_with(|| (DenseMatrix::zeros(self.dim, self.dim), vec![0.0; self.dim]));
                    outer_acc(gm, 1.0, dx, e);
                    axpy(gt, 1.0, dx);
                    tr.projection.matvec_t(dx)
                }
                None => dx.clone(),
            };
            grads
                .rows
                .entry((ty.0, id))
                .or_insert_with(|| vec![0.0; self.dim])
                .iter_mut()
                .zip(&de)
                .for_each(|(acc, g)| *acc += g);
        }
    }
}

struct ForwardCache {
    x: Vec<Vec<f64>>,
    attn: Option<AttentionForward>,
    phi: Vec<f64>,
    hidden: Vec<f64>,
    z: f64,
}

/// Accumulated attention gradients.
#[derive(Debug, Clone)]
pub struct AttentionGradAcc {
    pub wq: DenseMatrix,
    pub wk: DenseMatrix,
    pub wv: DenseMatrix,
}

impl AttentionGradAcc {
    fn accumulate(&mut self, g: &AttentionGradients) {
        for (a, b) in self.wq.data_mut().iter_mut().zip(g.wq.data()) {
            *a += b;
        }
        for (a, b) in self.wk.data_mut().iter_mut().zip(g.wk.data()) {
            *a += b;
        }
        for (a, b) in self.wv.data_mut().iter_mut().zip(g.wv.data()) {
            *a += b;
        }
    }
}

/// Gradients for one minibatch, sparse over table rows.
pub struct RankerGrads {
    pub rows: HashMap<(usize, u32), Vec<f64>>,
    pub transforms: Vec<Option<(DenseMatrix, Vec<f64>)>>,
    pub attention: Option<AttentionGradAcc>,
    pub w1: DenseMatrix,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

impl RankerGrads {
    fn new(params: &RankerParams) -> RankerGrads {
        RankerGrads {
            rows: HashMap::new(),
            transforms: vec![None; params.transforms.len()],
            attention: params.attention.as_ref().map(|a| AttentionGradAcc {
                wq: DenseMatrix::zeros(a.wq.rows(), a.wq.cols()),
                wk: DenseMatrix::zeros(a.wk.rows(), a.wk.cols()),
                wv: DenseMatrix::zeros(a.wv.rows(), a.wv.cols()),
            }),
            w1: DenseMatrix::zeros(params.w1.rows(), params.w1.cols()),
            b1: vec![0.0; params.b1.len()],
            w2: vec![0.0; params.w2.len()],
            b2: 0.0,
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable `softplus(z) - y*z`.
fn bce_loss(z: f64, label: bool) -> f64 {
    let y = if label { 1.0 } else { 0.0 };
    z.max(0.0) - y * z + (-z.abs()).exp().ln_1p()
}

#[derive(Debug, Clone)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_auc: f64,
    pub train_logloss: f64,
    pub val_auc: f64,
    pub val_logloss: f64,
}

#[derive(Debug)]
pub struct RankerOutcome {
    pub params: RankerParams,
    pub metrics: Vec<EpochMetrics>,
    pub kge_fingerprint_before: u64,
    pub kge_fingerprint_after: u64,
}

impl RankerOutcome {
    pub fn final_val_auc(&self) -> f64 {
        self.metrics.last().map(|m| m.val_auc).unwrap_or(0.5)
    }

    pub fn metrics_tsv(&self) -> String {
        let mut out = String::from("mode\tepoch\tsplit\tauc\tlogloss\n");
        for m in &self.metrics {
            out.push_str(&format!(
                "{}\t{}\ttrain\t{:.6}\t{:.6}\n",
                self.params.mode.name(),
                m.epoch,
                m.train_auc,
                m.train_logloss
            ));
            out.push_str(&format!(
                "{}\t{}\tvalidation\t{:.6}\t{:.6}\n",
                self.params.mode.name(),
                m.epoch,
                m.val_auc,
                m.val_logloss
            ));
        }
        out
    }
}

/// Fine-tune a pretrained model inside the ranking objective.
pub fn train_ranker(
    model: &KgeModel,
    dataset: &RankingDataset,
    cfg: &RankerConfig,
) -> Result<RankerOutcome> {
    if !(0.0..1.0).contains(&cfg.validation_fraction) {
        return Err(Error::Config("validation_fraction must be in [0, 1)".into()));
    }
    if cfg.epochs == 0 || cfg.minibatch == 0 {
        return Err(Error::Config("epochs and minibatch must be >= 1".into()));
    }
    for ex in &dataset.examples {
        for (s, &ty) in dataset.slots.iter().enumerate() {
            if ex.slots[s] as usize >= model.tables[ty.0].rows() {
                return Err(Error::Config(format!(
                    "dataset references {} id {} beyond the checkpoint vocabulary",
                    model.entity_types[ty.0], ex.slots[s]
                )));
            }
        }
    }

    let mut params = RankerParams::from_model(model, &dataset.slots, dataset.n_side, cfg)?;
    let before = params.kge_fingerprint();

    // Split train/validation on a seeded shuffle.
    let mut order: Vec<usize> = (0..dataset.examples.len()).collect();
    use rand::seq::SliceRandom;
    order.shuffle(&mut rng::stream(cfg.seed, "ranker-split", 0));
    let n_val = (dataset.examples.len() as f64 * cfg.validation_fraction).round() as usize;
    let (val_idx, train_idx) = order.split_at(n_val);
    if train_idx.is_empty() || val_idx.is_empty() {
        return Err(Error::Config("both splits need at least one example".into()));
    }
    let train_set: Vec<RankingExample> = train_idx
        .iter()
        .map(|&i| dataset.examples[i].clone())
        .collect();
    let val_set: Vec<RankingExample> = val_idx
        .iter()
        .map(|&i| dataset.examples[i].clone())
        .collect();

    let dense_cfg = AdagradConfig {
        learning_rate: cfg.lr_dense,
        epsilon: 1e-10,
    };
    let kge_cfg = AdagradConfig {
        learning_rate: cfg.lr_kge,
        epsilon: 1e-10,
    };
    let mut opt_w1 = Adagrad::new(params.w1.rows() * params.w1.cols(), dense_cfg);
    let mut opt_b1 = Adagrad::new(params.b1.len(), dense_cfg);
    let mut opt_w2 = Adagrad::new(params.w2.len(), dense_cfg);
    let mut opt_b2 = Adagrad::new(1, dense_cfg);
    let mut opt_attn = params
        .attention
        .as_ref()
        .map(|a| {
            let len = a.wq.rows() * a.wq.cols();
            [
                Adagrad::new(len, dense_cfg),
                Adagrad::new(len, dense_cfg),
                Adagrad::new(len, dense_cfg),
            ]
        });
    let mut opt_tables: Vec<Adagrad> = params
        .tables
        .iter()
        .map(|t| Adagrad::new(t.rows() * t.cols(), kge_cfg))
        .collect();
    let mut opt_transforms: Vec<Option<(Adagrad, Adagrad)>> = params
        .transforms
        .iter()
        .map(|t| {
            t.as_ref()
                .map(|_| (Adagrad::new(params.dim * params.dim, kge_cfg), Adagrad::new(params.dim, kge_cfg)))
        })
        .collect();

    let mut metrics = Vec::with_capacity(cfg.epochs);
    let mut train_order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 1..=cfg.epochs {
        train_order.shuffle(&mut rng::stream(cfg.seed, "ranker-epoch", epoch as u64));
        for chunk in train_order.chunks(cfg.minibatch) {
            let batch: Vec<RankingExample> =
                chunk.iter().map(|&i| train_set[i].clone()).collect();
            let (_, grads) = params.batch_gradients(&batch);

            opt_w1
                .step(0, params.w1.data_mut(), grads.w1.data(), || "ranker w1".into())?;
            opt_b1.step(0, &mut params.b1, &grads.b1, || "ranker b1".into())?;
            opt_w2.step(0, &mut params.w2, &grads.w2, || "ranker w2".into())?;
            let mut b2 = [params.b2];
            opt_b2.step(0, &mut b2, &[grads.b2], || "ranker b2".into())?;
            params.b2 = b2[0];

            if let (Some(attn), Some(acc), Some(opts)) = (
                params.attention.as_mut(),
                grads.attention.as_ref(),
                opt_attn.as_mut(),
            ) {
                opts[0].step(0, attn.wq.data_mut(), acc.wq.data(), || "attention wq".into())?;
                opts[1].step(0, attn.wk.data_mut(), acc.wk.data(), || "attention wk".into())?;
                opts[2].step(0, attn.wv.data_mut(), acc.wv.data(), || "attention wv".into())?;
            }

            if params.mode.kge_trainable() {
                let mut keys: Vec<&(usize, u32)> = grads.rows.keys().collect();
                keys.sort_unstable();
                for &&(ty, row) in &keys {
                    let g = &grads.rows[&(ty, row)];
                    opt_tables[ty].step(
                        row as usize * params.dim,
                        params.tables[ty].row_mut(row as usize),
                        g,
                        || format!("ranker table[{ty}] row {row}"),
                    )?;
                }
                for (ti, tg) in grads.transforms.iter().enumerate() {
                    if let Some((gm, gt)) = tg {
                        let tr = params.transforms[ti].as_mut().expect("gradient implies transform");
                        let (om, ot) = opt_transforms[ti].as_mut().expect("optimizer state exists");
                        om.step(0, tr.projection.data_mut(), gm.data(), || {
                            format!("ranker transform[{ti}] projection")
                        })?;
                        ot.step(0, &mut tr.translation, gt, || {
                            format!("ranker transform[{ti}] translation")
                        })?;
                    }
                }
            }
        }

        let eval_split = |set: &[RankingExample]| -> Result<(f64, f64)> {
            let scores: Vec<f64> = set.par_iter().map(|ex| params.logit(ex)).collect();
            let labels: Vec<bool> = set.iter().map(|ex| ex.label).collect();
            let logloss = set
                .iter()
                .zip(&scores)
                .map(|(ex, &z)| bce_loss(z, ex.label))
                .sum::<f64>()
                / set.len() as f64;
            Ok((auc(&labels, &scores)?, logloss))
        };
        let (train_auc, train_logloss) = eval_split(&train_set)?;
        let (val_auc, val_logloss) = eval_split(&val_set)?;
        metrics.push(EpochMetrics {
            epoch,
            train_auc,
            train_logloss,
            val_auc,
            val_logloss,
        });
    }

    let after = params.kge_fingerprint();
    Ok(RankerOutcome {
        params,
        metrics,
        kge_fingerprint_before: before,
        kge_fingerprint_after: after,
    })
}
