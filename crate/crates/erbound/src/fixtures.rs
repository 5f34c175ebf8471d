//! Bundled reproduction fixtures.

use crate::error::Result;
use crate::model::{parse_system, System};

pub const EXAMPLE1_JSON: &str = include_str!("../fixtures/example1.json");
pub const EXAMPLE2_JSON: &str = include_str!("../fixtures/example2.json");
pub const REMARK31_JSON: &str = include_str!("../fixtures/remark31.json");
pub const REMARK32_JSON: &str = include_str!("../fixtures/remark32.json");

fn must(doc: &str) -> System {
    parse_system(doc).expect("bundled fixture is valid")
}

/// Three-constraint planar linear system with a uniformly bounded Hoffman constant.
pub fn example1() -> System {
    must(EXAMPLE1_JSON)
}

/// Opposing-pair linear system whose Hoffman constant degrades under perturbation.
pub fn example2() -> System {
    must(EXAMPLE2_JSON)
}

/// Identically-zero constraint function (local modulus is infinite).
pub fn remark31() -> System {
    must(REMARK31_JSON)
}

/// exp(x) - 1 with the destabilizing linear perturbation -0.1 x applied.
pub fn remark32() -> System {
    must(REMARK32_JSON)
}

pub fn by_name(name: &str) -> Result<System> {
    match name {
        "example1" => Ok(example1()),
        "example2" => Ok(example2()),
        "remark31" => Ok(remark31()),
        "remark32" => Ok(remark32()),
        other => Err(crate::error::Error::Invalid(format!(
            "unknown repro case `{other}` (expected example1|example2|remark31|remark32)"
        ))),
    }
}
