use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{results_on, Counterexample, FindError, Guarantee, Strategy, Timings};
use crate::catalog::Database;
use crate::eval::Relation;
use crate::ra::TypedQuery;
use crate::value::Value;

/// Counterexamples above this size are returned with a warning.
pub const LARGE_COUNTEREXAMPLE: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Counterexample,
    QueriesAgree,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableView {
    pub columns: Vec<String>,
    /// Tuple aliases, one per row, for base relations.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ids: Vec<String>,
    pub rows: Vec<Vec<serde_json::Value>>,
}

impl TableView {
    fn from_relation(r: &Relation) -> TableView {
        TableView {
            columns: r.columns.iter().map(|c| c.name.clone()).collect(),
            ids: Vec::new(),
            rows: r.rows.iter().map(|row| row.iter().map(cell).collect()).collect(),
        }
    }
}

fn cell(v: &Value) -> serde_json::Value {
    serde_json::to_value(v).expect("values serialize")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleView {
    pub size: usize,
    pub verified: bool,
    /// `Relation:ordinal` identifiers.
    pub ids: Vec<String>,
    /// `t1`, `t2`, ... numbering across the whole database.
    pub aliases: Vec<String>,
    /// Tuples grouped by relation name; empty relations omitted.
    pub tuples: BTreeMap<String, TableView>,
    pub params: BTreeMap<String, serde_json::Value>,
    pub witness: Option<Vec<serde_json::Value>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub verdict: Verdict,
    pub strategy: String,
    pub counterexample: Option<CounterexampleView>,
    pub q1_result: Option<TableView>,
    pub q2_result: Option<TableView>,
    pub timings_ms: Timings,
    pub optimum_guarantee: Guarantee,
    #[serde(default)]
    pub warnings: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub smt: Option<String>,
}

impl Report {
    pub fn agree(strategy: Strategy, timings: Timings) -> Report {
        Report {
            verdict: Verdict::QueriesAgree,
            strategy: strategy.to_string(),
            counterexample: None,
            q1_result: None,
            q2_result: None,
            timings_ms: timings,
            optimum_guarantee: Guarantee::None,
            warnings: Vec::new(),
            smt: None,
        }
    }

    pub fn from_counterexample(
        db: &Database,
        q1: &TypedQuery,
        q2: &TypedQuery,
        cex: Counterexample,
    ) -> Result<Report, FindError> {
        let (r1, r2) = results_on(db, q1, q2, &cex.ids, &cex.params)?;
        let mut tuples = BTreeMap::new();
        for (rel, schema) in db.schemas().iter().enumerate() {
            let mut view = TableView {
                columns: schema.attributes.iter().map(|a| a.name.clone()).collect(),
                ids: Vec::new(),
                rows: Vec::new(),
            };
            for &id in cex.ids.iter().filter(|id| id.relation as usize == rel) {
                let row = db.row(id).expect("ids come from the database");
                view.ids.push(db.alias(id));
                view.rows.push(row.values.iter().map(cell).collect());
            }
            if !view.rows.is_empty() {
                tuples.insert(schema.name.clone(), view);
            }
        }
        let mut warnings = Vec::new();
        if cex.size() > LARGE_COUNTEREXAMPLE {
            warnings.push(format!(
                "counterexample has {} tuples (more than {LARGE_COUNTEREXAMPLE})",
                cex.size()
            ));
        }
        if !cex.verified {
            warnings.push("counterexample failed verification".into());
        }
        Ok(Report {
            verdict: Verdict::Counterexample,
            strategy: cex.strategy,
            counterexample: Some(CounterexampleView {
                size: cex.ids.len(),
                verified: cex.verified,
                ids: cex.ids.iter().map(|&id| db.render_id(id)).collect(),
                aliases: cex.ids.iter().map(|&id| db.alias(id)).collect(),
                tuples,
                params: cex.params.iter().map(|(k, v)| (k.clone(), cell(v))).collect(),
                witness: cex.witness.as_ref().map(|w| w.iter().map(cell).collect()),
            }),
            q1_result: Some(TableView::from_relation(&r1)),
            q2_result: Some(TableView::from_relation(&r2)),
            timings_ms: cex.timings,
            optimum_guarantee: cex.guarantee,
            warnings,
            smt: cex.smt,
        })
    }

    pub fn size(&self) -> Option<usize> {
        self.counterexample.as_ref().map(|c| c.size)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Plain-text rendering: the counterexample tables followed by both
    /// query results on it.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let Some(c) = &self.counterexample else {
            out.push_str("queries agree on the test database\n");
            return out;
        };
        let _ = writeln!(
            out,
            "counterexample: {} tuple{} ({}, {})",
            c.size,
            if c.size == 1 { "" } else { "s" },
            self.strategy,
            if c.verified { "verified" } else { "NOT verified" }
        );
        if !c.params.is_empty() {
            let ps: Vec<String> = c.params.iter().map(|(k, v)| format!("@{k} = {}", plain(v))).collect();
            let _ = writeln!(out, "parameters: {}", ps.join(", "));
        }
        for (name, t) in &c.tuples {
            out.push('\n');
            let _ = writeln!(out, "{name}");
            render_grid(&mut out, t);
        }
        for (label, r) in [("Q1", &self.q1_result), ("Q2", &self.q2_result)] {
            if let Some(t) = r {
                out.push('\n');
                let _ = writeln!(out, "{label} result");
                render_grid(&mut out, t);
            }
        }
        for w in &self.warnings {
            let _ = writeln!(out, "\nwarning: {w}");
        }
        out
    }
}

fn plain(v: &serde_json::Value) -> String {
    match v {
        serde_json::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn render_grid(out: &mut String, t: &TableView) {
    let with_ids = !t.ids.is_empty();
    let mut header: Vec<String> = Vec::new();
    if with_ids {
        header.push(String::new());
    }
    header.extend(t.columns.iter().cloned());
    let mut lines: Vec<Vec<String>> = vec![header];
    for (i, r) in t.rows.iter().enumerate() {
        let mut line = Vec::new();
        if with_ids {
            line.push(t.ids[i].clone());
        }
        line.extend(r.iter().map(plain));
        lines.push(line);
    }
    let widths: Vec<usize> = (0..lines[0].len())
        .map(|j| lines.iter().map(|l| l[j].chars().count()).max().unwrap_or(0))
        .collect();
    for l in &lines {
        let cells: Vec<String> = l.iter().zip(&widths).map(|(s, w)| format!("{s:<w$}")).collect();
        let _ = writeln!(out, "  {}", cells.join("  ").trim_end());
    }
    if t.rows.is_empty() {
        out.push_str("  (empty)\n");
    }
}
