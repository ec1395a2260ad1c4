//! Relational-algebra frontend: syntax tree, parser, type checker and
//! query classification.

mod ast;
mod classify;
mod parser;
mod typing;

use thiserror::Error;

pub use ast::{AggFunc, AggSpec, CmpOp, JoinKind, Operand, Predicate, Query};
pub use classify::{classify, strip_differences, QueryClass};
pub use parser::{is_keyword, parse, parse_predicate, SyntaxError};
pub use typing::{
    bind_params, bind_some, type_query, validate_pair, OutAttr, SchemaDisplay, TypedQuery,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum QueryError {
    #[error(transparent)]
    Syntax(#[from] SyntaxError),
    #[error("type error: {0}")]
    Type(String),
    #[error("results are not union-compatible: {left} vs {right}")]
    UnionIncompatible { left: String, right: String },
    #[error("aggregate restriction violated: {0}")]
    AggRestrictionViolated(String),
    #[error("no value given for parameter @{0}")]
    MissingParam(String),
    #[error("unknown parameter @{0}")]
    UnknownParam(String),
}
