//! Heterogeneous graph schema: entity types, edge types, and the relation
//! types that training shares transforms across.
//!
//! An edge type carries an activity label (`user click item`); a relation
//! type deliberately drops it, so `user click item` and `user checkout item`
//! train one shared transform.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use crate::error::{Error, Result};

/// Index into [`Schema::entity_types`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EntityTypeId(pub usize);

/// Index into [`Schema::edge_types`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EdgeTypeId(pub usize);

/// Index into [`Schema::relation_types`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RelationTypeId(pub usize);

/// Directed edge type: head entity type, activity label, tail entity type.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeType {
    pub head: EntityTypeId,
    pub activity: String,
    pub tail: EntityTypeId,
}

/// (head entity type, tail entity type) — the unit transforms are keyed by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RelationType {
    pub head: EntityTypeId,
    pub tail: EntityTypeId,
}

#[derive(Debug, Clone, Default)]
pub struct Schema {
    entity_types: Vec<String>,
    edge_types: Vec<EdgeType>,
    relation_types: Vec<RelationType>,
    edge_to_relation: Vec<RelationTypeId>,
    entity_index: HashMap<String, EntityTypeId>,
}

impl Schema {
    pub fn builder() -> SchemaBuilder {
        SchemaBuilder::default()
    }

    pub fn entity_types(&self) -> &[String] {
        &self.entity_types
    }

    pub fn edge_types(&self) -> &[EdgeType] {
        &self.edge_types
    }

    /// Distinct (head, tail) pairs in edge-type declaration order.
    pub fn relation_types(&self) -> &[RelationType] {
        &self.relation_types
    }

    pub fn entity_type(&self, name: &str) -> Option<EntityTypeId> {
        self.entity_index.get(name).copied()
    }

    pub fn entity_name(&self, id: EntityTypeId) -> &str {
        &self.entity_types[id.0]
    }

    pub fn edge_type(&self, head: &str, activity: &str, tail: &str) -> Option<EdgeTypeId> {
        let h = self.entity_type(head)?;
        let t = self.entity_type(tail)?;
        self.edge_types
            .iter()
            .position(|e| e.head == h && e.activity == activity && e.tail == t)
            .map(EdgeTypeId)
    }

    /// Relation type an edge type collapses to (activity label dropped).
    pub fn relation_of(&self, edge: EdgeTypeId) -> RelationTypeId {
        self.edge_to_relation[edge.0]
    }

    /// The unique relation with the given endpoints, if any edge type induces it.
    pub fn relation_between(&self, head: EntityTypeId, tail: EntityTypeId) -> Option<RelationTypeId> {
        self.relation_types
            .iter()
            .position(|r| r.head == head && r.tail == tail)
            .map(RelationTypeId)
    }

    pub fn edge_name(&self, id: EdgeTypeId) -> String {
        let e = &self.edge_types[id.0];
        format!(
            "{}-{}-{}",
            self.entity_name(e.head),
            e.activity,
            self.entity_name(e.tail)
        )
    }

    /// Parse a schema file: `entity <name>` and `edge <head> <activity> <tail>`
    /// lines, whitespace-separated, `#` comments ignored.
    pub fn load(path: &Path) -> Result<Schema> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display(), e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, path: &str) -> Result<Schema> {
        let mut b = Schema::builder();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let err = |msg: String| Error::Schema {
                path: path.to_string(),
                line: lineno + 1,
                msg,
            };
            match fields[0] {
                "entity" if fields.len() == 2 => {
                    b.try_entity(fields[1]).map_err(err)?;
                }
                "edge" if fields.len() == 4 => {
                    b.try_edge(fields[1], fields[2], fields[3]).map_err(err)?;
                }
                other => {
                    return Err(Error::Parse {
                        path: path.to_string(),
                        line: lineno + 1,
                        msg: format!("expected `entity <name>` or `edge <head> <activity> <tail>`, got `{other} ...`"),
                    });
                }
            }
        }
        Ok(b.build())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path.display(), e))
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for name in &self.entity_types {
            out.push_str(&format!("entity {name}\n"));
        }
        for e in &self.edge_types {
            out.push_str(&format!(
                "edge {} {} {}\n",
                self.entity_name(e.head),
                e.activity,
                self.entity_name(e.tail)
            ));
        }
        out
    }
}

impl fmt::Display for Schema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_text())
    }
}

#[derive(Debug, Default)]
pub struct SchemaBuilder {
    schema: Schema,
}

impl SchemaBuilder {
    pub fn entity(mut self, name: &str) -> Self {
        self.try_entity(name).expect("duplicate entity type");
        self
    }

    pub fn edge(mut self, head: &str, activity: &str, tail: &str) -> Self {
        self.try_edge(head, activity, tail)
            .expect("invalid edge type");
        self
    }

    pub fn try_entity(&mut self, name: &str) -> std::result::Result<(), String> {
        if self.schema.entity_index.contains_key(name) {
            return Err(format!("duplicate entity type `{name}`"));
        }
        let id = EntityTypeId(self.schema.entity_types.len());
        self.schema.entity_types.push(name.to_string());
        self.schema.entity_index.insert(name.to_string(), id);
        Ok(())
    }

    pub fn try_edge(
        &mut self,
        head: &str,
        activity: &str,
        tail: &str,
    ) -> std::result::Result<(), String> {
        let h = self
            .schema
            .entity_type(head)
            .ok_or_else(|| format!("unknown entity type `{head}`"))?;
        let t = self
            .schema
            .entity_type(tail)
            .ok_or_else(|| format!("unknown entity type `{tail}`"))?;
        let dup = self
            .schema
            .edge_types
            .iter()
            .any(|e| e.head == h && e.activity == activity && e.tail == t);
        if dup {
            return Err(format!("duplicate edge type `{head} {activity} {tail}`"));
        }
        self.schema.edge_types.push(EdgeType {
            head: h,
            activity: activity.to_string(),
            tail: t,
        });
        // Relation derivation: first edge type with a given (head, tail)
        // allocates the relation; later ones reuse it.
        let rel = RelationType { head: h, tail: t };
        let rid = match self.schema.relation_types.iter().position(|r| *r == rel) {
            Some(i) => RelationTypeId(i),
            None => {
                self.schema.relation_types.push(rel);
                RelationTypeId(self.schema.relation_types.len() - 1)
            }
        };
        self.schema.edge_to_relation.push(rid);
        Ok(())
    }

    pub fn build(self) -> Schema {
        self.schema
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Schema {
        Schema::builder()
            .entity("user")
            .entity("item")
            .entity("ad")
            .edge("user", "click", "item")
            .edge("user", "checkout", "item")
            .edge("user", "click", "ad")
            .build()
    }

    #[test]
    fn relation_drops_activity() {
        let s = sample();
        let click = s.edge_type("user", "click", "item").unwrap();
        let checkout = s.edge_type("user", "checkout", "item").unwrap();
        let ad = s.edge_type("user", "click", "ad").unwrap();
        assert_eq!(s.relation_of(click), s.relation_of(checkout));
        assert_ne!(s.relation_of(click), s.relation_of(ad));
        assert_eq!(s.relation_types().len(), 2);
    }

    #[test]
    fn relation_derivation_is_pure_in_endpoints() {
        // Any two edge types with equal (head, tail) map to the same relation,
        // regardless of declaration order or activity label.
        let s = Schema::builder()
            .entity("a")
            .entity("b")
            .edge("a", "x", "b")
            .edge("a", "y", "b")
            .edge("b", "x", "a")
            .edge("a", "z", "b")
            .build();
        let r0 = s.relation_of(EdgeTypeId(0));
        assert_eq!(r0, s.relation_of(EdgeTypeId(1)));
        assert_eq!(r0, s.relation_of(EdgeTypeId(3)));
        assert_ne!(r0, s.relation_of(EdgeTypeId(2)));
    }

    #[test]
    fn text_round_trip() {
        let s = sample();
        let parsed = Schema::parse(&s.to_text(), "inline").unwrap();
        assert_eq!(parsed.entity_types(), s.entity_types());
        assert_eq!(parsed.edge_types(), s.edge_types());
    }

    #[test]
    fn parse_rejects_unknown_directive() {
        let err = Schema::parse("entity u\nnode v\n", "inline").unwrap_err();
        assert!(err.to_string().contains("inline:2"), "{err}");
    }

    #[test]
    fn parse_rejects_duplicate_entity() {
        let err = Schema::parse("entity u\nentity u\n", "inline").unwrap_err();
        assert!(err.to_string().contains("duplicate"), "{err}");
    }

    #[test]
    fn parse_rejects_edge_with_unknown_type() {
        let err = Schema::parse("entity u\nedge u click v\n", "inline").unwrap_err();
        assert!(err.to_string().contains("unknown entity type `v`"), "{err}");
    }
}
