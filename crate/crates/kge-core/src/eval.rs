//! Corruption-ranking evaluation.
//!
//! Each held-out positive `(h, r, t)` is ranked against `n_eval` corrupted
//! triples `(h, r, t')` with uniformly sampled tails. Ties are pessimistic:
//! a corruption scoring equal to the positive pushes it down, so a model
//! that scores everything identically earns a recall of zero. Corruptions
//! are not filtered against true edges, and by default are resampled per
//! positive.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::math::{dot, norm, DistanceKind};
use crate::model::{head_repr, score, tail_repr, KgeModel};
use crate::rng;
use crate::schema::EdgeTypeId;
use crate::store::{Triple, TripleStore};

#[derive(Debug, Clone)]
pub struct EvalConfig {
    /// Corruptions ranked against every positive.
    pub n_eval: usize,
    /// Recall cutoffs, ascending.
    pub ks: Vec<usize>,
    pub seed: u64,
    /// Upper bound on positives evaluated per edge type.
    pub max_positives_per_edge_type: usize,
    /// Share one corruption set across an edge type instead of resampling
    /// per positive.
    pub share_corruptions: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            n_eval: 1000,
            ks: vec![10, 100],
            seed: 0,
            max_positives_per_edge_type: 2000,
            share_corruptions: false,
        }
    }
}

impl EvalConfig {
    fn validate(&self) -> Result<()> {
        let max_k = self.ks.iter().copied().max().unwrap_or(0);
        if self.ks.is_empty() || self.ks.iter().any(|&k| k == 0) {
            return Err(Error::Config("k list must contain positive cutoffs".into()));
        }
        if self.n_eval < max_k {
            return Err(Error::Config(format!(
                "n_eval {} must be >= max k {max_k}",
                self.n_eval
            )));
        }
        Ok(())
    }
}

/// Rank of the positive among its corruptions: `1 +` the number of
/// corrupted triples scoring `>=` the positive (ties pessimistic).
pub fn rank_positive(
    model: &KgeModel,
    store: &TripleStore,
    triple: Triple,
    corrupt_tails: &[u32],
) -> usize {
    let spec = model.score_spec();
    let et = &store.schema().edge_types()[triple.edge_type.0];
    let rel = store.schema().relation_of(triple.edge_type);
    let rp = &model.relations[rel.0];
    let anchored = model.head_is_anchor(rel);
    let h = model.embedding(et.head, triple.head);
    let pos = score(&spec, rp, h, model.embedding(et.tail, triple.tail), anchored);
    let beaten = corrupt_tails
        .iter()
        .filter(|&&t| score(&spec, rp, h, model.embedding(et.tail, t), anchored) >= pos)
        .count();
    1 + beaten
}

/// Fraction of ranks within the top k; `None` when there are no ranks.
pub fn recall_at_k(ranks: &[usize], k: usize) -> Option<f64> {
    assert!(k >= 1, "k must be >= 1");
    if ranks.is_empty() {
        return None;
    }
    Some(ranks.iter().filter(|&&r| r <= k).count() as f64 / ranks.len() as f64)
}

#[derive(Debug, Clone)]
pub struct EdgeTypeReport {
    pub edge_type: EdgeTypeId,
    pub edge_name: String,
    pub positives: usize,
    /// (k, recall) per requested cutoff.
    pub recalls: Vec<(usize, f64)>,
}

impl EdgeTypeReport {
    pub fn recall(&self, k: usize) -> Option<f64> {
        self.recalls.iter().find(|(kk, _)| *kk == k).map(|(_, r)| *r)
    }
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    /// Identifies the evaluated snapshot (model kind + parameter fingerprint).
    pub checkpoint: String,
    pub n_eval: usize,
    pub ks: Vec<usize>,
    pub seed: u64,
    pub entries: Vec<EdgeTypeReport>,
    /// Edge types with no positives in the eval store, noted rather than
    /// reported as zero.
    pub skipped: Vec<String>,
}

impl EvalReport {
    pub fn entry(&self, edge_name: &str) -> Option<&EdgeTypeReport> {
        self.entries.iter().find(|e| e.edge_name == edge_name)
    }

    /// Flat TSV: `edge_type  k  recall  n`.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("edge_type\tk\trecall\tn\n");
        for e in &self.entries {
            for (k, r) in &e.recalls {
                out.push_str(&format!("{}\t{}\t{:.6}\t{}\n", e.edge_name, k, r, e.positives));
            }
        }
        out
    }

    /// Human-readable table: one row per edge type, one recall column per k,
    /// with the chance baseline k/(n_eval+1) alongside.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "checkpoint {}  n_eval {}  seed {}\n",
            self.checkpoint, self.n_eval, self.seed
        ));
        let name_w = self
            .entries
            .iter()
            .map(|e| e.edge_name.len())
            .chain(["edge type".len()])
            .max()
            .unwrap();
        out.push_str(&format!("{:name_w$}  {:>6}", "edge type", "n"));
        for k in &self.ks {
            out.push_str(&format!("  {:>12}", format!("recall@{k}")));
        }
        out.push_str("  chance:");
        for k in &self.ks {
            out.push_str(&format!(" {:.4}", *k as f64 / (self.n_eval + 1) as f64));
        }
        out.push('\n');
        for e in &self.entries {
            out.push_str(&format!("{:name_w$}  {:>6}", e.edge_name, e.positives));
            for (_, r) in &e.recalls {
                out.push_str(&format!("  {:>12.6}", r));
            }
            out.push('\n');
        }
        for s in &self.skipped {
            out.push_str(&format!("{s}: no positives in eval store, omitted\n"));
        }
        out
    }
}

/// Side-by-side comparison of several snapshots over the same protocol,
/// one row per edge type and one column block per k.
pub fn render_comparison(labels: &[String], reports: &[EvalReport]) -> String {
    assert_eq!(labels.len(), reports.len());
    assert!(!reports.is_empty());
    let ks = reports[0].ks.clone();
    let mut out = String::new();
    let name_w = reports
        .iter()
        .flat_map(|r| r.entries.iter().map(|e| e.edge_name.len()))
        .chain(["edge type".len()])
        .max()
        .unwrap();
    let col_w = labels.iter().map(|l| l.len()).chain([10]).max().unwrap();
    for &k in &ks {
        out.push_str(&format!("recall@{k}\n"));
        out.push_str(&format!("{:name_w$}", "edge type"));
        for label in labels {
            out.push_str(&format!("  {label:>col_w$}"));
        }
        out.push('\n');
        for e in &reports[0].entries {
            out.push_str(&format!("{:name_w$}", e.edge_name));
            for r in reports {
                match r.entry(&e.edge_name).and_then(|en| en.recall(k)) {
                    Some(v) => out.push_str(&format!("  {v:>col_w$.6}")),
                    None => out.push_str(&format!("  {:>col_w$}", "-")),
                }
            }
            out.push('\n');
        }
        out.push('\n');
    }
    out
}

/// Evaluate a snapshot over the holdout store.
pub fn evaluate(model: &KgeModel, eval_store: &TripleStore, config: &EvalConfig) -> Result<EvalReport> {
    config.validate()?;
    model.validate_store(eval_store)?;
    let spec = model.score_spec();
    let mut entries = Vec::new();
    let mut skipped = Vec::new();

    for (ei, _) in eval_store.schema().edge_types().iter().enumerate() {
        let edge_type = EdgeTypeId(ei);
        let positives = eval_store.edges(edge_type);
        let edge_name = eval_store.schema().edge_name(edge_type);
        if positives.is_empty() {
            skipped.push(edge_name);
            continue;
        }
        let et = &eval_store.schema().edge_types()[ei];
        let rel = eval_store.schema().relation_of(edge_type);
        let rp = &model.relations[rel.0];
        let anchored = model.head_is_anchor(rel);
        let n_tails = eval_store.vocab(et.tail).len();

        // Tail representations depend only on (relation, tail), so transform
        // the whole tail vocabulary once.
        let tail_reprs: Vec<Vec<f64>> = (0..n_tails)
            .into_par_iter()
            .map(|t| tail_repr(&spec, rp, model.embedding(et.tail, t as u32), anchored))
            .collect();
        let tail_norms: Vec<f64> = tail_reprs.par_iter().map(|b| norm(b)).collect();

        let pair_score = |a: &[f64], na: f64, tail: u32| -> f64 {
            let b = &tail_reprs[tail as usize];
            match spec.dist {
                DistanceKind::Cosine => {
                    let nb = tail_norms[tail as usize];
                    if na < 1e-12 || nb < 1e-12 {
                        0.0
                    } else {
                        dot(a, b) / (na * nb)
                    }
                }
                DistanceKind::L2 => {
                    let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                    -sq.sqrt()
                }
            }
        };

        let shared: Option<Vec<u32>> = config.share_corruptions.then(|| {
            let mut stream = rng::stream(config.seed, "eval-shared", ei as u64);
            (0..config.n_eval)
                .map(|_| stream.random_range(0..n_tails) as u32)
                .collect()
        });

        let n_take = positives.len().min(config.max_positives_per_edge_type);
        let ranks: Vec<usize> = positives[..n_take]
            .par_iter()
            .enumerate()
            .map(|(pi, triple)| {
                let h = model.embedding(et.head, triple.head);
                let a = head_repr(&spec, rp, h, anchored);
                let na = norm(&a);
                let pos = pair_score(&a, na, triple.tail);
                let count_beaten = |tails: &mut dyn Iterator<Item = u32>| {
                    tails.filter(|&t| pair_score(&a, na, t) >= pos).count()
                };
                let beaten = match &shared {
                    Some(set) => count_beaten(&mut set.iter().copied()),
                    None => {
                        let mut stream = rng::stream(
                            config.seed,
                            "eval-corruptions",
                            ((ei as u64) << 32) | pi as u64,
                        );
                        count_beaten(
                            &mut (0..config.n_eval)
                                .map(|_| stream.random_range(0..n_tails) as u32),
                        )
                    }
                };
                1 + beaten
            })
            .collect();

        let recalls = config
            .ks
            .iter()
            .map(|&k| (k, recall_at_k(&ranks, k).expect("ranks nonempty")))
            .collect();
        entries.push(EdgeTypeReport {
            edge_type,
            edge_name,
            positives: n_take,
            recalls,
        });
    }

    Ok(EvalReport {
        checkpoint: format!("{}:{:016x}", model.kind.name(), model.fingerprint()),
        n_eval: config.n_eval,
        ks: config.ks.clone(),
        seed: config.seed,
        entries,
        skipped,
    })
}
