//! Bundled workloads.

use std::collections::BTreeMap;

use crate::dsl::parse_workload;
use crate::model::{OpKind, Workload};

pub const SMALLBANK: &str = include_str!("../fixtures/smallbank.rtpl");
pub const TPCC: &str = include_str!("../fixtures/tpcc.rtpl");
pub const PCP: &str = include_str!("../fixtures/pcp.rtpl");

pub const NAMES: [&str; 6] = ["smallbank", "smallbank-nofc", "tpcc", "tpcc-promoted", "tpcc-nofc", "pcp"];

fn parse(text: &str) -> Workload {
    parse_workload(text).expect("bundled fixture parses")
}

/// TPC-C with the Customer read of OrderStatus turned into an update.
pub fn tpcc_promoted() -> Workload {
    let w = parse(TPCC);
    let t = w.templates.iter().position(|t| t.name == "OrderStatus").unwrap();
    let z = w.templates[t].var("Z").unwrap();
    let op = w.templates[t]
        .ops
        .iter()
        .position(|o| o.var == z && o.kind == OpKind::R)
        .unwrap();
    w.promote(t, op).expect("promotion keeps the template valid")
}

pub fn fixture(name: &str) -> Option<Workload> {
    Some(match name {
        "smallbank" => parse(SMALLBANK),
        "smallbank-nofc" => parse(SMALLBANK).strip_constraints(),
        "tpcc" => parse(TPCC),
        "tpcc-promoted" => tpcc_promoted(),
        "tpcc-nofc" => parse(TPCC).strip_constraints(),
        "pcp" => parse(PCP),
        _ => return None,
    })
}

pub fn fixtures() -> BTreeMap<&'static str, Workload> {
    NAMES.iter().map(|&n| (n, fixture(n).unwrap())).collect()
}
