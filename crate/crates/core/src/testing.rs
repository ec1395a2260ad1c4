//! The student/registration instance used throughout the examples and
//! tests, embedded so it is available without touching the filesystem.

use std::collections::HashMap;

use crate::catalog::{load_database, Database};

pub const RUNNING_SCHEMA: &str = include_str!("../../../data/running/schema.json");
pub const STUDENT_CSV: &str = include_str!("../../../data/running/Student.csv");
pub const REGISTRATION_CSV: &str = include_str!("../../../data/running/Registration.csv");

/// Exactly one CS course (the correct query).
pub const ONE_CS: &str = include_str!("../../../data/running/queries/one_cs.ra");
/// At least one CS course (the wrong query).
pub const SOME_CS: &str = include_str!("../../../data/running/queries/some_cs.ra");
pub const AVG_CS: &str = include_str!("../../../data/running/queries/avg_cs.ra");
pub const AVG_ALL: &str = include_str!("../../../data/running/queries/avg_all.ra");
pub const AVG_CS_HAVING: &str = include_str!("../../../data/running/queries/avg_cs_having.ra");
pub const AVG_ALL_HAVING: &str = include_str!("../../../data/running/queries/avg_all_having.ra");

pub fn running_tables() -> HashMap<String, String> {
    HashMap::from([
        ("Student".to_string(), STUDENT_CSV.to_string()),
        ("Registration".to_string(), REGISTRATION_CSV.to_string()),
    ])
}

/// Student t1..t3, Registration t4..t11.
pub fn running_example() -> Database {
    load_database(RUNNING_SCHEMA, &running_tables()).expect("fixture loads")
}
