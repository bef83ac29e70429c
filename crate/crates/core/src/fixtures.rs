//! Small hand-checkable instances shipped with the crate.

use crate::model::{parse_instance, Instance};

pub const TINY2_JSON: &str = include_str!("../fixtures/tiny2.json");
pub const TINY3_JSON: &str = include_str!("../fixtures/tiny3.json");
pub const TINY3X3_JSON: &str = include_str!("../fixtures/tiny3x3.json");

/// Two agents, `T = 2`, one reward interaction, no transition interactions.
pub fn tiny2() -> Instance {
    parse_instance(TINY2_JSON).expect("tiny2 fixture is valid")
}

/// `tiny2` at `T = 3` with a risky `(sF, a)` step that agent `j` can improve.
pub fn tiny3() -> Instance {
    parse_instance(TINY3_JSON).expect("tiny3 fixture is valid")
}

/// Three `tiny3` agents chained `i <- j <- k`, plus a three-way reward.
pub fn tiny3x3() -> Instance {
    parse_instance(TINY3X3_JSON).expect("tiny3x3 fixture is valid")
}

/// Looks a fixture up by file stem.
pub fn by_name(name: &str) -> Option<Instance> {
    match name {
        "tiny2" => Some(tiny2()),
        "tiny3" => Some(tiny3()),
        "tiny3x3" => Some(tiny3x3()),
        _ => None,
    }
}
