use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::CatalogError;
use crate::value::AttributeType;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attribute {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: AttributeType,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FkTarget {
    pub relation: String,
    pub columns: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForeignKey {
    pub columns: Vec<String>,
    pub references: FkTarget,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionalDependency {
    pub lhs: Vec<String>,
    pub rhs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationSchema {
    pub name: String,
    pub attributes: Vec<Attribute>,
    #[serde(default)]
    pub key: Vec<String>,
    #[serde(default)]
    pub foreign_keys: Vec<ForeignKey>,
    #[serde(default)]
    pub not_null: Vec<String>,
    #[serde(default)]
    pub fds: Vec<FunctionalDependency>,
}

impl RelationSchema {
    pub fn position(&self, attr: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a.name == attr)
    }

    pub fn positions(&self, attrs: &[String]) -> Vec<usize> {
        attrs
            .iter()
            .map(|a| self.position(a).expect("attribute validated at schema load"))
            .collect()
    }
}

/// The schema document: `{"relations": [...]}`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaDoc {
    pub relations: Vec<RelationSchema>,
}

impl SchemaDoc {
    pub fn parse(text: &str) -> Result<SchemaDoc, CatalogError> {
        let doc: SchemaDoc =
            serde_json::from_str(text).map_err(|e| CatalogError::SchemaParse(e.to_string()))?;
        doc.validate()?;
        Ok(doc)
    }

    pub fn relation(&self, name: &str) -> Option<&RelationSchema> {
        self.relations.iter().find(|r| r.name == name)
    }

    fn validate(&self) -> Result<(), CatalogError> {
        let err = |msg: String| Err(CatalogError::SchemaParse(msg));
        let mut names = HashSet::new();
        for rel in &self.relations {
            if !is_identifier(&rel.name) {
                return err(format!("`{}` is not a valid relation name", rel.name));
            }
            if !names.insert(rel.name.as_str()) {
                return err(format!("relation `{}` declared twice", rel.name));
            }
            let mut attrs = HashSet::new();
            for a in &rel.attributes {
                if !is_identifier(&a.name) {
                    return err(format!("`{}.{}` is not a valid attribute name", rel.name, a.name));
                }
                if !attrs.insert(a.name.as_str()) {
                    return err(format!("attribute `{}` repeated in `{}`", a.name, rel.name));
                }
            }
            let check = |list: &[String], what: &str| -> Result<(), CatalogError> {
                for a in list {
                    if !attrs.contains(a.as_str()) {
                        return Err(CatalogError::SchemaParse(format!(
                            "{what} of `{}` names unknown attribute `{a}`",
                            rel.name
                        )));
                    }
                }
                Ok(())
            };
            check(&rel.key, "key")?;
            check(&rel.not_null, "not-null constraint")?;
            for fd in &rel.fds {
                check(&fd.lhs, "functional dependency")?;
                check(&fd.rhs, "functional dependency")?;
            }
            for fk in &rel.foreign_keys {
                check(&fk.columns, "foreign key")?;
            }
        }
        for rel in &self.relations {
            for fk in &rel.foreign_keys {
                let Some(target) = self.relation(&fk.references.relation) else {
                    return err(format!(
                        "foreign key of `{}` references unknown relation `{}`",
                        rel.name, fk.references.relation
                    ));
                };
                if fk.columns.len() != fk.references.columns.len() || fk.columns.is_empty() {
                    return err(format!("foreign key of `{}` has mismatched column lists", rel.name));
                }
                for (local, remote) in fk.columns.iter().zip(&fk.references.columns) {
                    let Some(rpos) = target.position(remote) else {
                        return err(format!(
                            "foreign key of `{}` references unknown attribute `{}.{remote}`",
                            rel.name, target.name
                        ));
                    };
                    let lty = rel.attributes[rel.position(local).unwrap()].ty;
                    if !lty.comparable_with(target.attributes[rpos].ty) {
                        return err(format!(
                            "foreign key `{}.{local}` -> `{}.{remote}` has incompatible types",
                            rel.name, target.name
                        ));
                    }
                }
            }
        }
        Ok(())
    }
}

pub(crate) fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}
