//! Translation-based KGE models over typed embedding tables.
//!
//! Three score families share one parameterization: every relation type owns
//! a square projection matrix and a translation vector, initialized to the
//! identity and zero so that all entity spaces start out as one space and
//! drift apart only as training demands.

mod checkpoint;
mod score;

pub use checkpoint::fingerprint_f64s;
pub use score::{
    head_repr, score, score_gradients, tail_repr, PathSpec, ScoreGradients, ScoreKind, ScoreSpec,
    TranslationSide,
};

use rand::Rng;

use crate::math::{DenseMatrix, DistanceKind};
use crate::rng;
use crate::schema::{EntityTypeId, RelationType, RelationTypeId};
use crate::store::TripleStore;

/// Model family, with the designated anchor space for the anchored variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    TransE,
    TransR,
    TransRA { anchor: EntityTypeId },
}

impl ModelKind {
    pub fn score_kind(&self) -> ScoreKind {
        match self {
            ModelKind::TransE => ScoreKind::TransE,
            ModelKind::TransR => ScoreKind::TransR,
            ModelKind::TransRA { .. } => ScoreKind::TransRA,
        }
    }

    pub fn anchor(&self) -> Option<EntityTypeId> {
        match self {
            ModelKind::TransRA { anchor } => Some(*anchor),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::TransE => "transe",
            ModelKind::TransR => "transr",
            ModelKind::TransRA { .. } => "transra",
        }
    }
}

/// Per-relation transform: projection applied to the non-anchor side(s) and
/// a translation vector.
#[derive(Debug, Clone, PartialEq)]
pub struct RelationParams {
    pub projection: DenseMatrix,
    pub translation: Vec<f64>,
}

impl RelationParams {
    /// Identity projection, zero translation: transforms nothing until trained.
    pub fn identity(dim: usize) -> Self {
        RelationParams {
            projection: DenseMatrix::identity(dim),
            translation: vec![0.0; dim],
        }
    }

    /// `projection * v + translation`.
    pub fn transform(&self, v: &[f64]) -> Vec<f64> {
        let mut out = self.projection.matvec(v);
        for (o, t) in out.iter_mut().zip(&self.translation) {
            *o += t;
        }
        out
    }
}

/// A full model: one embedding table per entity type plus one
/// [`RelationParams`] per relation type, with the scoring configuration
/// needed to reproduce its scores.
#[derive(Debug, Clone)]
pub struct KgeModel {
    pub kind: ModelKind,
    pub dist: DistanceKind,
    pub transr_translation: TranslationSide,
    pub dim: usize,
    /// Entity type names, mirroring the schema the model was built from.
    pub entity_types: Vec<String>,
    /// Vocabulary fingerprints, for refusing mismatched stores at load time.
    pub vocab_fingerprints: Vec<u64>,
    /// One `(vocab_size x dim)` table per entity type.
    pub tables: Vec<DenseMatrix>,
    pub relation_types: Vec<RelationType>,
    pub relations: Vec<RelationParams>,
}

impl KgeModel {
    /// Fresh model over `store`: embedding rows i.i.d. uniform in
    /// `[-1/sqrt(dim), +1/sqrt(dim)]`, relations at identity/zero.
    pub fn init(
        store: &TripleStore,
        kind: ModelKind,
        dist: DistanceKind,
        dim: usize,
        seed: u64,
    ) -> KgeModel {
        assert!(dim >= 1, "dim must be >= 1");
        if let ModelKind::TransRA { anchor } = kind {
            assert!(
                anchor.0 < store.schema().entity_types().len(),
                "anchor entity type out of range"
            );
        }
        let scale = 1.0 / (dim as f64).sqrt();
        let mut tables = Vec::new();
        let mut fingerprints = Vec::new();
        for (ti, _) in store.schema().entity_types().iter().enumerate() {
            let ty = EntityTypeId(ti);
            let rows = store.vocab(ty).len();
            let mut table = DenseMatrix::zeros(rows, dim);
            let mut stream = rng::stream(seed, "init-table", ti as u64);
            for x in table.data_mut() {
                *x = stream.random_range(-scale..scale);
            }
            tables.push(table);
            fingerprints.push(checkpoint::vocab_fingerprint(store.vocab(ty)));
        }
        let relations = store
            .schema()
            .relation_types()
            .iter()
            .map(|_| RelationParams::identity(dim))
            .collect();
        KgeModel {
            kind,
            dist,
            transr_translation: TranslationSide::Tail,
            dim,
            entity_types: store.schema().entity_types().to_vec(),
            vocab_fingerprints: fingerprints,
            tables,
            relation_types: store.schema().relation_types().to_vec(),
            relations,
        }
    }

    pub fn score_spec(&self) -> ScoreSpec {
        ScoreSpec {
            kind: self.kind.score_kind(),
            dist: self.dist,
            transr_translation: self.transr_translation,
        }
    }

    pub fn embedding(&self, ty: EntityTypeId, local: u32) -> &[f64] {
        self.tables[ty.0].row(local as usize)
    }

    /// Whether triples of `rel` put the anchor on the head side.
    pub fn head_is_anchor(&self, rel: RelationTypeId) -> bool {
        match self.kind {
            ModelKind::TransRA { anchor } => self.relation_types[rel.0].head == anchor,
            _ => false,
        }
    }

    /// Map a tail entity into the anchor space through its anchor-headed
    /// relation: `projection * v + translation`.
    ///
    /// Panics unless the model is the anchored kind and `rel`'s head is the
    /// anchor type; callers that can receive arbitrary checkpoints must
    /// validate first.
    pub fn transform_to_anchor(&self, rel: RelationTypeId, v: &[f64]) -> Vec<f64> {
        let anchor = self
            .kind
            .anchor()
            .expect("transform_to_anchor requires the anchored model kind");
        assert_eq!(
            self.relation_types[rel.0].head, anchor,
            "transform_to_anchor requires an anchor-headed relation"
        );
        self.relations[rel.0].transform(v)
    }

    /// FNV-1a over every parameter byte; identifies a snapshot in reports.
    pub fn fingerprint(&self) -> u64 {
        let mut values: Vec<f64> = Vec::new();
        for t in &self.tables {
            values.extend_from_slice(t.data());
        }
        for r in &self.relations {
            values.extend_from_slice(r.projection.data());
            values.extend_from_slice(&r.translation);
        }
        fingerprint_f64s(&values)
    }

    pub fn validate_store(&self, store: &TripleStore) -> crate::error::Result<()> {
        checkpoint::validate_store(self, store)
    }

    pub fn save(&self, path: &std::path::Path) -> crate::error::Result<()> {
        checkpoint::save(self, path)
    }

    pub fn load(path: &std::path::Path) -> crate::error::Result<KgeModel> {
        checkpoint::load(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::distance;
    use crate::schema::Schema;
    use crate::store::TripleStore;

    fn store() -> TripleStore {
        let schema = Schema::builder()
            .entity("user")
            .entity("item")
            .entity("ad")
            .edge("user", "click", "item")
            .edge("user", "checkout", "item")
            .edge("user", "click", "ad")
            .edge("ad", "promote", "item")
            .build();
        let mut s = TripleStore::new(schema);
        for i in 0..5 {
            s.vocab_mut(EntityTypeId(0)).intern(&format!("u{i}"));
            s.vocab_mut(EntityTypeId(1)).intern(&format!("i{i}"));
            s.vocab_mut(EntityTypeId(2)).intern(&format!("a{i}"));
        }
        s
    }

    fn anchored() -> ModelKind {
        ModelKind::TransRA {
            anchor: EntityTypeId(0),
        }
    }

    #[test]
    fn init_transform_is_identity() {
        let m = KgeModel::init(&store(), anchored(), DistanceKind::Cosine, 8, 1);
        let v = vec![1.0, -2.0, 3.0, 0.5, 0.0, 1.0, 2.0, -0.25];
        for r in &m.relations {
            assert_eq!(r.transform(&v), v);
        }
    }

    #[test]
    fn relations_consolidate_by_endpoints() {
        // click + checkout between (user, item) share one RelationParams.
        let m = KgeModel::init(&store(), anchored(), DistanceKind::Cosine, 4, 1);
        assert_eq!(m.relations.len(), 3);
        let s = store();
        let click = s.schema().edge_type("user", "click", "item").unwrap();
        let checkout = s.schema().edge_type("user", "checkout", "item").unwrap();
        assert_eq!(s.schema().relation_of(click), s.schema().relation_of(checkout));
    }

    #[test]
    fn init_is_deterministic_per_seed() {
        let a = KgeModel::init(&store(), anchored(), DistanceKind::Cosine, 64, 9);
        let b = KgeModel::init(&store(), anchored(), DistanceKind::Cosine, 64, 9);
        let c = KgeModel::init(&store(), anchored(), DistanceKind::Cosine, 64, 10);
        assert_eq!(a.fingerprint(), b.fingerprint());
        assert_ne!(a.fingerprint(), c.fingerprint());
    }

    #[test]
    fn init_rows_respect_scale() {
        let dim = 16;
        let m = KgeModel::init(&store(), ModelKind::TransE, DistanceKind::Cosine, dim, 3);
        let bound = 1.0 / (dim as f64).sqrt();
        for t in &m.tables {
            assert!(t.data().iter().all(|x| x.abs() <= bound));
        }
    }

    #[test]
    fn anchored_model_scores_plain_distance_at_init() {
        // At init the anchored score reduces to dist(h, t), which also equals
        // what a freshly initialized translation-only model produces.
        let s = store();
        let m = KgeModel::init(&s, anchored(), DistanceKind::Cosine, 8, 4);
        let te = KgeModel::init(&s, ModelKind::TransE, DistanceKind::Cosine, 8, 4);
        let rel = s.schema().relation_of(s.schema().edge_type("user", "click", "item").unwrap());
        for (hi, ti) in [(0u32, 1u32), (2, 3), (4, 0)] {
            let h = m.embedding(EntityTypeId(0), hi);
            let t = m.embedding(EntityTypeId(1), ti);
            let anchored_score = score(&m.score_spec(), &m.relations[rel.0], h, t, true);
            assert_eq!(anchored_score, distance(DistanceKind::Cosine, h, t));
            let te_score = score(
                &te.score_spec(),
                &te.relations[rel.0],
                te.embedding(EntityTypeId(0), hi),
                te.embedding(EntityTypeId(1), ti),
                false,
            );
            assert_eq!(anchored_score, te_score);
        }
    }

    #[test]
    fn transform_to_anchor_identity_and_translation() {
        let s = store();
        let mut m = KgeModel::init(&s, anchored(), DistanceKind::Cosine, 2, 4);
        let rel = s
            .schema()
            .relation_of(s.schema().edge_type("user", "click", "item").unwrap());
        assert_eq!(m.transform_to_anchor(rel, &[0.5, -1.0]), vec![0.5, -1.0]);
        m.relations[rel.0].translation = vec![1.0, 1.0];
        assert_eq!(m.transform_to_anchor(rel, &[0.0, 0.0]), vec![1.0, 1.0]);
    }

    #[test]
    fn exported_vectors_reproduce_anchored_scores() {
        let s = store();
        let mut m = KgeModel::init(&s, anchored(), DistanceKind::Cosine, 8, 5);
        let rel = s
            .schema()
            .relation_of(s.schema().edge_type("user", "click", "item").unwrap());
        // Perturb the relation so the equivalence is non-trivial.
        let mut stream = crate::rng::stream(99, "perturb", 0);
        for x in m.relations[rel.0].projection.data_mut() {
            *x += stream.random_range(-0.3..0.3);
        }
        for x in m.relations[rel.0].translation.iter_mut() {
            *x += stream.random_range(-0.3..0.3);
        }
        for (hi, ti) in [(0u32, 0u32), (1, 4), (3, 2)] {
            let h = m.embedding(EntityTypeId(0), hi);
            let t = m.embedding(EntityTypeId(1), ti);
            let via_score = score(&m.score_spec(), &m.relations[rel.0], h, t, true);
            let exported = m.transform_to_anchor(rel, t);
            let via_export = distance(DistanceKind::Cosine, h, &exported);
            assert!((via_score - via_export).abs() < 1e-6);
        }
    }

    #[test]
    #[should_panic(expected = "anchor-headed relation")]
    fn transform_to_anchor_rejects_non_anchor_relation() {
        let s = store();
        let m = KgeModel::init(&s, anchored(), DistanceKind::Cosine, 4, 4);
        let rel = s
            .schema()
            .relation_of(s.schema().edge_type("ad", "promote", "item").unwrap());
        m.transform_to_anchor(rel, &[0.0; 4]);
    }
}
