//! Circuits shipped with the crate.
//!
//! `c17` is the smallest ISCAS-85 circuit. The `rc*` circuits come from
//! [`random_netlist`] with the parameters listed in [`VENDORED`], so anyone
//! can regenerate them; a unit test checks the files against the generator.

use crate::netlist::generate::{random_netlist, RandomCircuit};
use crate::netlist::{parse_bench, Netlist, NetlistError};

pub struct Vendored {
    pub name: &'static str,
    pub text: &'static str,
    pub generator: Option<RandomCircuit>,
}

const fn rc(inputs: usize, gates: usize, seed: u64) -> Option<RandomCircuit> {
    Some(RandomCircuit { inputs, key_inputs: 0, gates, max_fanin: 3, seed })
}

macro_rules! vendored {
    ($name:literal, $gen:expr) => {
        Vendored { name: $name, text: include_str!(concat!("../benchmarks/", $name, ".bench")), generator: $gen }
    };
}

pub const VENDORED: &[Vendored] = &[
    vendored!("c17", None),
    vendored!("rc16_a", rc(16, 80, 1601)),
    vendored!("rc16_b", rc(16, 90, 1602)),
    vendored!("rc16_c", rc(14, 70, 1603)),
    vendored!("rc32_220", rc(32, 220, 3201)),
    vendored!("rc34_260", rc(34, 260, 3401)),
    vendored!("rc36_300", rc(36, 300, 3601)),
    vendored!("rc38_340", rc(38, 340, 3801)),
    vendored!("rc40_380", rc(40, 380, 4001)),
    vendored!("rc36_280", rc(36, 280, 3602)),
    vendored!("rc64_3000", rc(64, 3000, 6401)),
];

/// Circuits with at most 16 inputs, small enough for exhaustive checks.
pub const SMALL: [&str; 3] = ["rc16_a", "rc16_b", "rc16_c"];

/// The desk-scale attack set: 32 to 40 inputs, 220 to 380 gates.
pub const DESK: [&str; 6] = ["rc32_220", "rc34_260", "rc36_300", "rc38_340", "rc40_380", "rc36_280"];

pub fn find(name: &str) -> Option<&'static Vendored> {
    VENDORED.iter().find(|v| v.name == name)
}

pub fn load(name: &str) -> Option<Result<Netlist, NetlistError>> {
    find(name).map(|v| parse_bench(v.text).map(|n| n.with_name(name)))
}

pub fn regenerate(v: &Vendored) -> Option<Netlist> {
    v.generator.as_ref().map(|g| random_netlist(v.name, g))
}
