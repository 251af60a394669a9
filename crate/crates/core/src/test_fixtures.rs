//! Shared fixtures for unit tests: the running-example schema and policies.

use crate::policy::{parse_policy, Policy};
use crate::schema::{parse_dtd, Dtd};

pub const FIG1A_DTD: &str = include_str!("../../../fixtures/fig1a.dtd");
pub const EXAMPLE2_TOTAL: &str = include_str!("../../../fixtures/example2-total.policy");
pub const EXAMPLE2_PARTIAL: &str = include_str!("../../../fixtures/example2-partial.policy");
pub const QUASI_COUNTEREXAMPLE: &str =
    include_str!("../../../fixtures/quasi-counterexample.policy");

pub fn fig1a() -> Dtd {
    parse_dtd(FIG1A_DTD).expect("fixture DTD parses")
}

pub fn example2_total(dtd: &Dtd) -> Policy {
    parse_policy(EXAMPLE2_TOTAL, dtd).expect("fixture policy parses")
}

pub fn example2_partial(dtd: &Dtd) -> Policy {
    parse_policy(EXAMPLE2_PARTIAL, dtd).expect("fixture policy parses")
}
