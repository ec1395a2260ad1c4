//! Schemas, in-memory instances and subinstances.
//!
//! A [`Database`] is immutable once loaded. Every row carries a [`TupleId`]
//! assigned at load time; [`Database::restrict`] keeps those ids, so a
//! subinstance can always be related back to the instance it came from.
//!
//! Tuple ids also have a global 1-based number (`t1`, `t2`, ...) obtained by
//! numbering relations in schema order and rows in file order. That number
//! is what solver encodings use as variable names.

mod constraints;
mod schema;

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::path::Path;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use constraints::{
    check_constraints, fk_implications, ConstraintReport, FkGraph, Violation, ViolationKind,
};
pub use schema::{Attribute, FkTarget, ForeignKey, FunctionalDependency, RelationSchema, SchemaDoc};

use crate::value::Value;

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("schema error: {0}")]
    SchemaParse(String),
    #[error("no table supplied for relation `{0}`")]
    MissingTable(String),
    #[error("table `{0}` is not declared in the schema")]
    UnknownTable(String),
    #[error("{relation}: header {found:?} does not match schema attributes {expected:?}")]
    HeaderMismatch {
        relation: String,
        expected: Vec<String>,
        found: Vec<String>,
    },
    #[error("{relation} row {row}, column `{column}`: {message}")]
    Type {
        relation: String,
        row: usize,
        column: String,
        message: String,
    },
    #[error("{relation}: malformed CSV: {message}")]
    Csv { relation: String, message: String },
    #[error("constraint violation: {0}")]
    ConstraintViolation(ConstraintReport),
    #[error("unknown tuple id {0}")]
    UnknownTupleId(TupleId),
    #[error("tuple {child} has no referenced tuple for foreign key #{fk}")]
    DanglingReference { child: TupleId, fk: usize },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Identifies one stored row: the relation's position in the schema and the
/// 1-based row ordinal within that relation at load time.
///
/// Ordering is by relation then ordinal, which coincides with the global
/// `t`-numbering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TupleId {
    pub relation: u32,
    pub ordinal: u32,
}

impl TupleId {
    pub fn new(relation: u32, ordinal: u32) -> Self {
        TupleId { relation, ordinal }
    }
}

impl fmt::Display for TupleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}:{}", self.relation, self.ordinal)
    }
}

/// A set of tuple ids, iterated in id order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IdSet(BTreeSet<TupleId>);

impl IdSet {
    pub fn new() -> Self {
        IdSet(BTreeSet::new())
    }

    pub fn insert(&mut self, id: TupleId) -> bool {
        self.0.insert(id)
    }

    pub fn contains(&self, id: &TupleId) -> bool {
        self.0.contains(id)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &TupleId> + '_ {
        self.0.iter()
    }

    pub fn extend(&mut self, ids: impl IntoIterator<Item = TupleId>) {
        self.0.extend(ids)
    }

    pub fn union(&self, other: &IdSet) -> IdSet {
        IdSet(self.0.union(&other.0).copied().collect())
    }

    pub fn is_subset(&self, other: &IdSet) -> bool {
        self.0.is_subset(&other.0)
    }

    pub fn to_vec(&self) -> Vec<TupleId> {
        self.0.iter().copied().collect()
    }
}

impl FromIterator<TupleId> for IdSet {
    fn from_iter<I: IntoIterator<Item = TupleId>>(iter: I) -> Self {
        IdSet(iter.into_iter().collect())
    }
}

impl<'a> IntoIterator for &'a IdSet {
    type Item = &'a TupleId;
    type IntoIter = std::collections::btree_set::Iter<'a, TupleId>;
    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Row {
    pub id: TupleId,
    pub values: Vec<Value>,
}

#[derive(Debug)]
pub struct Database {
    schemas: Arc<Vec<RelationSchema>>,
    tables: Vec<Vec<Row>>,
    /// Global number of the first row of each relation minus one, taken from
    /// the originally loaded instance.
    offsets: Arc<Vec<u32>>,
    fk_graph: OnceLock<Arc<FkGraph>>,
}

impl Clone for Database {
    fn clone(&self) -> Self {
        Database {
            schemas: self.schemas.clone(),
            tables: self.tables.clone(),
            offsets: self.offsets.clone(),
            fk_graph: OnceLock::new(),
        }
    }
}

impl PartialEq for Database {
    fn eq(&self, other: &Self) -> bool {
        self.schemas == other.schemas && self.tables == other.tables
    }
}

impl Database {
    /// Builds a database from typed rows, assigning ids in row order and
    /// rejecting instances that violate a declared constraint.
    pub fn from_rows(
        schema: SchemaDoc,
        mut tables: HashMap<String, Vec<Vec<Value>>>,
    ) -> Result<Database, CatalogError> {
        for name in tables.keys() {
            if schema.relation(name).is_none() {
                return Err(CatalogError::UnknownTable(name.clone()));
            }
        }
        let mut out = Vec::with_capacity(schema.relations.len());
        let mut offsets = Vec::with_capacity(schema.relations.len());
        let mut next = 0u32;
        for (ri, rel) in schema.relations.iter().enumerate() {
            let rows = tables
                .remove(&rel.name)
                .ok_or_else(|| CatalogError::MissingTable(rel.name.clone()))?;
            offsets.push(next);
            let mut stored = Vec::with_capacity(rows.len());
            for (i, values) in rows.into_iter().enumerate() {
                if values.len() != rel.attributes.len() {
                    return Err(CatalogError::Type {
                        relation: rel.name.clone(),
                        row: i + 1,
                        column: String::new(),
                        message: format!(
                            "expected {} values, found {}",
                            rel.attributes.len(),
                            values.len()
                        ),
                    });
                }
                let mut typed = Vec::with_capacity(values.len());
                for (v, attr) in values.into_iter().zip(&rel.attributes) {
                    let v = v.coerce(attr.ty).ok_or_else(|| CatalogError::Type {
                        relation: rel.name.clone(),
                        row: i + 1,
                        column: attr.name.clone(),
                        message: format!("value `{v}` is not of type {}", attr.ty),
                    })?;
                    typed.push(v);
                }
                stored.push(Row {
                    id: TupleId::new(ri as u32, i as u32 + 1),
                    values: typed,
                });
            }
            next += stored.len() as u32;
            out.push(stored);
        }
        let db = Database {
            schemas: Arc::new(schema.relations),
            tables: out,
            offsets: Arc::new(offsets),
            fk_graph: OnceLock::new(),
        };
        let report = check_constraints(&db);
        if !report.is_empty() {
            return Err(CatalogError::ConstraintViolation(report));
        }
        Ok(db)
    }

    pub fn schemas(&self) -> &[RelationSchema] {
        &self.schemas
    }

    pub fn relation_index(&self, name: &str) -> Option<usize> {
        self.schemas.iter().position(|s| s.name == name)
    }

    pub fn schema(&self, name: &str) -> Option<&RelationSchema> {
        self.schemas.iter().find(|s| s.name == name)
    }

    pub fn rows(&self, relation: usize) -> &[Row] {
        &self.tables[relation]
    }

    pub fn rows_of(&self, name: &str) -> Option<&[Row]> {
        self.relation_index(name).map(|i| self.rows(i))
    }

    pub fn row(&self, id: TupleId) -> Option<&Row> {
        let rows = self.tables.get(id.relation as usize)?;
        // rows stay sorted by ordinal, even after restriction
        rows.binary_search_by_key(&id.ordinal, |r| r.id.ordinal)
            .ok()
            .map(|i| &rows[i])
    }

    pub fn contains(&self, id: TupleId) -> bool {
        self.row(id).is_some()
    }

    pub fn len(&self) -> usize {
        self.tables.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn ids(&self) -> impl Iterator<Item = TupleId> + '_ {
        self.tables.iter().flat_map(|t| t.iter().map(|r| r.id))
    }

    pub fn all_ids(&self) -> IdSet {
        self.ids().collect()
    }

    /// Global 1-based number of a tuple (`t`-number).
    pub fn global_number(&self, id: TupleId) -> u32 {
        self.offsets[id.relation as usize] + id.ordinal
    }

    /// The inverse of [`Database::global_number`] for the original instance.
    pub fn id_from_global(&self, n: u32) -> Option<TupleId> {
        let rel = self.offsets.iter().rposition(|&o| o < n)?;
        let id = TupleId::new(rel as u32, n - self.offsets[rel]);
        self.contains(id).then_some(id)
    }

    /// `t5`-style alias.
    pub fn alias(&self, id: TupleId) -> String {
        format!("t{}", self.global_number(id))
    }

    /// `Registration:2`-style rendering.
    pub fn render_id(&self, id: TupleId) -> String {
        match self.schemas.get(id.relation as usize) {
            Some(s) => format!("{}:{}", s.name, id.ordinal),
            None => id.to_string(),
        }
    }

    /// Parses either rendering back into an id of this database.
    pub fn parse_id(&self, s: &str) -> Option<TupleId> {
        if let Some((rel, ord)) = s.rsplit_once(':') {
            let ri = self.relation_index(rel)?;
            let id = TupleId::new(ri as u32, ord.parse().ok()?);
            return self.contains(id).then_some(id);
        }
        self.id_from_global(s.strip_prefix('t')?.parse().ok()?)
    }

    /// The subinstance containing exactly `ids`. Ids, row order and schemas
    /// are preserved; referential integrity is not re-checked.
    pub fn restrict(&self, ids: &IdSet) -> Result<Database, CatalogError> {
        let mut tables: Vec<Vec<Row>> = vec![Vec::new(); self.tables.len()];
        for &id in ids {
            let row = self.row(id).ok_or(CatalogError::UnknownTupleId(id))?;
            tables[id.relation as usize].push(row.clone());
        }
        Ok(Database {
            schemas: self.schemas.clone(),
            tables,
            offsets: self.offsets.clone(),
            fk_graph: OnceLock::new(),
        })
    }

    /// Foreign-key parent links of every stored tuple, computed once.
    pub fn fk_graph(&self) -> Arc<FkGraph> {
        self.fk_graph.get_or_init(|| Arc::new(FkGraph::build(self))).clone()
    }

    pub fn schema_doc(&self) -> SchemaDoc {
        SchemaDoc {
            relations: self.schemas.to_vec(),
        }
    }
}

/// Loads a database from a JSON schema document and one CSV text per
/// relation (header row first, attributes in schema order).
pub fn load_database(
    schema_doc: &str,
    tables: &HashMap<String, String>,
) -> Result<Database, CatalogError> {
    let schema = SchemaDoc::parse(schema_doc)?;
    let mut typed = HashMap::new();
    for name in tables.keys() {
        if schema.relation(name).is_none() {
            return Err(CatalogError::UnknownTable(name.clone()));
        }
    }
    for rel in &schema.relations {
        let text = tables
            .get(&rel.name)
            .ok_or_else(|| CatalogError::MissingTable(rel.name.clone()))?;
        typed.insert(rel.name.clone(), parse_csv(rel, text)?);
    }
    Database::from_rows(schema, typed)
}

/// Loads `schema_path` plus `<data_dir>/<Relation>.csv` for every relation.
pub fn load_dir(schema_path: &Path, data_dir: &Path) -> Result<Database, CatalogError> {
    let read = |p: &Path| {
        std::fs::read_to_string(p).map_err(|source| CatalogError::Io {
            path: p.display().to_string(),
            source,
        })
    };
    let schema_text = read(schema_path)?;
    let schema = SchemaDoc::parse(&schema_text)?;
    let mut tables = HashMap::new();
    for rel in &schema.relations {
        let path = data_dir.join(format!("{}.csv", rel.name));
        if !path.exists() {
            return Err(CatalogError::MissingTable(rel.name.clone()));
        }
        tables.insert(rel.name.clone(), read(&path)?);
    }
    load_database(&schema_text, &tables)
}

fn parse_csv(rel: &RelationSchema, text: &str) -> Result<Vec<Vec<Value>>, CatalogError> {
    let csv_err = |e: csv::Error| CatalogError::Csv {
        relation: rel.name.clone(),
        message: e.to_string(),
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::Headers)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    let expected: Vec<String> = rel.attributes.iter().map(|a| a.name.clone()).collect();
    if header != expected {
        return Err(CatalogError::HeaderMismatch {
            relation: rel.name.clone(),
            expected,
            found: header,
        });
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err)?;
        let mut values = Vec::with_capacity(record.len());
        for (cell, attr) in record.iter().zip(&rel.attributes) {
            let v = Value::parse(cell, attr.ty).map_err(|message| CatalogError::Type {
                relation: rel.name.clone(),
                row: i + 1,
                column: attr.name.clone(),
                message,
            })?;
            values.push(v);
        }
        rows.push(values);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testing::running_example;

    #[test]
    fn running_example_ids() {
        let db = running_example();
        assert_eq!(db.len(), 11);
        let ids: Vec<String> = db.ids().map(|id| db.alias(id)).collect();
        let expected: Vec<String> = (1..=11).map(|i| format!("t{i}")).collect();
        assert_eq!(ids, expected);
        let t5 = db.parse_id("t5").unwrap();
        assert_eq!(db.render_id(t5), "Registration:2");
        assert_eq!(db.parse_id("Registration:2"), Some(t5));
        assert_eq!(db.parse_id("t12"), None);
    }

    #[test]
    fn restrict_keeps_ids_and_order() {
        let db = running_example();
        let ids: IdSet = ["t5", "t1", "t4"].iter().map(|s| db.parse_id(s).unwrap()).collect();
        let sub = db.restrict(&ids).unwrap();
        let student: Vec<_> = sub.rows_of("Student").unwrap().iter().map(|r| sub.alias(r.id)).collect();
        let reg: Vec<_> = sub.rows_of("Registration").unwrap().iter().map(|r| sub.alias(r.id)).collect();
        assert_eq!(student, ["t1"]);
        assert_eq!(reg, ["t4", "t5"]);
        assert_eq!(sub.restrict(&ids).unwrap(), sub);
    }

    #[test]
    fn restrict_identity_and_empty() {
        let db = running_example();
        assert_eq!(db.restrict(&db.all_ids()).unwrap(), db);
        let empty = db.restrict(&IdSet::new()).unwrap();
        assert!(empty.is_empty());
        assert_eq!(empty.schemas(), db.schemas());
    }

    #[test]
    fn restrict_rejects_unknown_id() {
        let db = running_example();
        let sub = db.restrict(&[db.parse_id("t1").unwrap()].into_iter().collect()).unwrap();
        let bogus: IdSet = [db.parse_id("t4").unwrap()].into_iter().collect();
        assert!(matches!(sub.restrict(&bogus), Err(CatalogError::UnknownTupleId(_))));
    }

    #[test]
    fn empty_tables_load() {
        let mut tables = HashMap::new();
        tables.insert("Student".to_string(), "name,major\n".to_string());
        tables.insert("Registration".to_string(), "name,course,dept,grade\n".to_string());
        let db = load_database(crate::testing::RUNNING_SCHEMA, &tables).unwrap();
        assert!(db.is_empty());
    }

    #[test]
    fn duplicate_key_rejected() {
        let mut tables = HashMap::new();
        tables.insert("Student".to_string(), "name,major\nMary,CS\nMary,ECON\n".to_string());
        tables.insert("Registration".to_string(), "name,course,dept,grade\n".to_string());
        match load_database(crate::testing::RUNNING_SCHEMA, &tables) {
            Err(CatalogError::ConstraintViolation(report)) => {
                assert_eq!(report.violations.len(), 1);
                assert_eq!(report.violations[0].kind, ViolationKind::Key);
                assert_eq!(report.violations[0].tuples.len(), 2);
            }
            other => panic!("expected key violation, got {other:?}"),
        }
    }

    #[test]
    fn type_errors_carry_location() {
        let mut tables = HashMap::new();
        tables.insert("Student".to_string(), "name,major\nMary,CS\n".to_string());
        tables.insert(
            "Registration".to_string(),
            "name,course,dept,grade\nMary,216,CS,abc\n".to_string(),
        );
        match load_database(crate::testing::RUNNING_SCHEMA, &tables) {
            Err(CatalogError::Type { relation, row, column, .. }) => {
                assert_eq!((relation.as_str(), row, column.as_str()), ("Registration", 1, "grade"));
            }
            other => panic!("expected type error, got {other:?}"),
        }
    }

    #[test]
    fn header_and_missing_table_errors() {
        let mut tables = HashMap::new();
        tables.insert("Student".to_string(), "major,name\n".to_string());
        tables.insert("Registration".to_string(), "name,course,dept,grade\n".to_string());
        assert!(matches!(
            load_database(crate::testing::RUNNING_SCHEMA, &tables),
            Err(CatalogError::HeaderMismatch { .. })
        ));
        tables.remove("Registration");
        tables.insert("Student".to_string(), "name,major\n".to_string());
        assert!(matches!(
            load_database(crate::testing::RUNNING_SCHEMA, &tables),
            Err(CatalogError::MissingTable(_))
        ));
    }

    #[test]
    fn schema_errors() {
        let bad = r#"{"relations":[{"name":"A","attributes":[{"name":"x","type":"integer"}],"key":["y"]}]}"#;
        assert!(matches!(SchemaDoc::parse(bad), Err(CatalogError::SchemaParse(_))));
        let bad_fk = r#"{"relations":[{"name":"A","attributes":[{"name":"x","type":"integer"}],
            "foreign_keys":[{"columns":["x"],"references":{"relation":"B","columns":["x"]}}]}]}"#;
        assert!(matches!(SchemaDoc::parse(bad_fk), Err(CatalogError::SchemaParse(_))));
        assert!(matches!(SchemaDoc::parse("{"), Err(CatalogError::SchemaParse(_))));
    }
}
