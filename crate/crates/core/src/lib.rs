//! Smallest counterexamples for pairs of relational-algebra queries.
//!
//! Given a reference query, a test query and a database on which they
//! disagree, the crate searches for a small subinstance on which they still
//! disagree. Query results are annotated with Boolean how-provenance over
//! tuple variables; a min-ones solver then picks the fewest tuples that keep
//! a distinguishing tuple (or aggregate value) alive.

pub mod catalog;
pub mod eval;
pub mod finder;
pub mod provenance;
pub mod ra;
pub mod solver;
#[doc(hidden)]
pub mod testing;
pub mod value;

pub use catalog::{Database, IdSet, TupleId};
pub use value::{AttributeType, Rational, Value};
