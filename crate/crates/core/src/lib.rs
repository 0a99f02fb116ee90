//! Congestion management for a sub-transmission zone with batteries and
//! renewable curtailment under actuation delays.

// Checks like `!(x > 0.0)` are written that way to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod limits;
pub mod mpc;
pub mod qp;
pub mod report;
pub mod scenario;
pub mod simulator;
pub mod zone;

/// Scenario files shipped with the crate.
pub mod bundled {
    pub const ONE_OVERLOAD: &str = include_str!("../scenarios/one_overload.json");
    pub const TWO_OVERLOADS: &str = include_str!("../scenarios/two_overloads.json");
    pub const VOLATILE: &str = include_str!("../scenarios/volatile.json");

    pub const ALL: [(&str, &str); 3] = [
        ("one_overload", ONE_OVERLOAD),
        ("two_overloads", TWO_OVERLOADS),
        ("volatile", VOLATILE),
    ];

    pub fn get(name: &str) -> Option<&'static str> {
        ALL.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
    }
}
