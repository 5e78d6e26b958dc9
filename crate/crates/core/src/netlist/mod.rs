//! Combinational gate-level netlist IR.
//!
//! A [`Netlist`] is immutable once built. Gates are stored in topological
//! order, so a gate's index doubles as its position in evaluation order and
//! every fanin of gate `i` refers to an input or to a gate `j < i`.
//!
//! Construction always goes through [`NetlistBuilder`], which resolves net
//! names, checks arities, rejects multiple drivers and combinational cycles,
//! and canonicalises the gate order.

mod bench;
pub mod generate;
mod opt;
mod rewrite;
mod sim;
mod traverse;

use std::collections::{BinaryHeap, HashMap, HashSet};
use std::cmp::Reverse;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bench::{parse_bench, parse_bench_with, write_bench, ParseOptions, DEFAULT_KEY_PREFIX};
pub use opt::{constant_propagate, constant_propagate_traced, remove_dead_logic, DeadLogicReport, Propagated};
pub use rewrite::{rewrite_augment, rewrite_augment_traced, RewriteRule, RuleSet, Rewritten};
pub use sim::{exhaustive_lane_mask, exhaustive_words, WordSimulator};
pub use traverse::{ConeTable, FaninCone};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NetlistError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("{}undefined signal `{name}` referenced by `{user}`", line_prefix(*.line))]
    UndefinedSignal { name: String, user: String, line: Option<usize> },
    #[error("{}net `{name}` has more than one driver", line_prefix(*.line))]
    DuplicateDriver { name: String, line: Option<usize> },
    #[error("output `{0}` declared more than once")]
    DuplicateOutput(String),
    #[error("{}unsupported gate keyword `{keyword}`", line_prefix(*.line))]
    UnsupportedGate { keyword: String, line: Option<usize> },
    #[error("gate `{name}` of type {gtype} cannot take {arity} fanin(s)")]
    BadArity { name: String, gtype: GateType, arity: usize },
    #[error("combinational cycle through {}", .members.join(" -> "))]
    Cycle { members: Vec<String> },
    #[error("missing assignment for input `{0}`")]
    MissingInput(String),
    #[error("unknown signal `{0}`")]
    UnknownSignal(String),
    #[error("unknown gate id {0}")]
    UnknownGate(usize),
    #[error("gate `{0}` is a constant pseudo-gate and cannot be written as bench")]
    Unserializable(String),
}

fn line_prefix(line: Option<usize>) -> String {
    match line {
        Some(l) => format!("line {l}: "),
        None => String::new(),
    }
}

/// Gate alphabet. `Const0`/`Const1` are internal pseudo-gates produced by
/// constant propagation; they never appear in bench text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GateType {
    And,
    Nand,
    Or,
    Nor,
    Xor,
    Xnor,
    Not,
    Buf,
    Const0,
    Const1,
}

impl GateType {
    /// The eight serialisable bench types, in feature-vector order.
    pub const BENCH: [GateType; 8] = [
        GateType::And,
        GateType::Nand,
        GateType::Or,
        GateType::Nor,
        GateType::Xor,
        GateType::Xnor,
        GateType::Not,
        GateType::Buf,
    ];

    pub fn keyword(self) -> &'static str {
        match self {
            GateType::And => "AND",
            GateType::Nand => "NAND",
            GateType::Or => "OR",
            GateType::Nor => "NOR",
            GateType::Xor => "XOR",
            GateType::Xnor => "XNOR",
            GateType::Not => "NOT",
            GateType::Buf => "BUF",
            GateType::Const0 => "CONST0",
            GateType::Const1 => "CONST1",
        }
    }

    /// Case-insensitive bench keyword lookup. `BUFF` is accepted as an alias
    /// for `BUF`, as in the ISCAS distributions.
    pub fn from_keyword(word: &str) -> Option<GateType> {
        let upper = word.to_ascii_uppercase();
        let t = match upper.as_str() {
            "AND" => GateType::And,
            "NAND" => GateType::Nand,
            "OR" => GateType::Or,
            "NOR" => GateType::Nor,
            "XOR" => GateType::Xor,
            "XNOR" => GateType::Xnor,
            "NOT" | "INV" => GateType::Not,
            "BUF" | "BUFF" => GateType::Buf,
            _ => return None,
        };
        Some(t)
    }

    pub fn is_pseudo(self) -> bool {
        matches!(self, GateType::Const0 | GateType::Const1)
    }

    /// Position in [`GateType::BENCH`].
    pub fn bench_index(self) -> Option<usize> {
        GateType::BENCH.iter().position(|&t| t == self)
    }

    pub fn arity_ok(self, n: usize) -> bool {
        match self {
            GateType::Not | GateType::Buf => n == 1,
            GateType::Const0 | GateType::Const1 => n == 0,
            _ => n >= 2,
        }
    }

    /// Bit-parallel evaluation over 64 patterns at once.
    #[inline]
    pub fn eval_word<I: IntoIterator<Item = u64>>(self, inputs: I) -> u64 {
        let mut it = inputs.into_iter();
        match self {
            GateType::And => it.fold(!0, |acc, v| acc & v),
            GateType::Nand => !it.fold(!0, |acc, v| acc & v),
            GateType::Or => it.fold(0, |acc, v| acc | v),
            GateType::Nor => !it.fold(0, |acc, v| acc | v),
            GateType::Xor => it.fold(0, |acc, v| acc ^ v),
            GateType::Xnor => !it.fold(0, |acc, v| acc ^ v),
            GateType::Not => !it.next().unwrap_or(0),
            GateType::Buf => it.next().unwrap_or(0),
            GateType::Const0 => 0,
            GateType::Const1 => !0,
        }
    }

    pub fn eval_bits(self, inputs: &[bool]) -> bool {
        self.eval_word(inputs.iter().map(|&b| if b { !0u64 } else { 0 })) & 1 == 1
    }
}

impl fmt::Display for GateType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}

/// Index of a gate inside its netlist; also its topological rank.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GateId(pub usize);

/// A resolved signal reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Signal {
    Pi(usize),
    Ki(usize),
    Gate(GateId),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Gate {
    pub id: GateId,
    /// Name of the net this gate drives.
    pub name: String,
    pub gtype: GateType,
    pub fanin: Vec<Signal>,
}

/// Name-level gate description used while constructing netlists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GateSpec {
    pub name: String,
    pub gtype: GateType,
    pub fanin: Vec<String>,
}

impl GateSpec {
    pub fn new(name: impl Into<String>, gtype: GateType, fanin: Vec<String>) -> Self {
        GateSpec { name: name.into(), gtype, fanin }
    }
}

#[derive(Debug, Clone)]
pub struct Netlist {
    name: String,
    primary_inputs: Vec<String>,
    key_inputs: Vec<String>,
    primary_outputs: Vec<Signal>,
    gates: Vec<Gate>,
    lookup: HashMap<String, Signal>,
    loads: Vec<Vec<GateId>>,
    input_loads: Vec<Vec<GateId>>,
    po_fanout: Vec<u32>,
}

impl PartialEq for Netlist {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && self.structurally_eq(other)
    }
}

impl Netlist {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn primary_inputs(&self) -> &[String] {
        &self.primary_inputs
    }

    pub fn key_inputs(&self) -> &[String] {
        &self.key_inputs
    }

    pub fn primary_outputs(&self) -> &[Signal] {
        &self.primary_outputs
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn num_gates(&self) -> usize {
        self.gates.len()
    }

    pub fn gate(&self, id: GateId) -> Result<&Gate, NetlistError> {
        self.gates.get(id.0).ok_or(NetlistError::UnknownGate(id.0))
    }

    pub fn lookup(&self, name: &str) -> Option<Signal> {
        self.lookup.get(name).copied()
    }

    pub fn gate_by_name(&self, name: &str) -> Option<GateId> {
        match self.lookup(name) {
            Some(Signal::Gate(g)) => Some(g),
            _ => None,
        }
    }

    pub fn signal_name(&self, s: Signal) -> &str {
        match s {
            Signal::Pi(i) => &self.primary_inputs[i],
            Signal::Ki(i) => &self.key_inputs[i],
            Signal::Gate(g) => &self.gates[g.0].name,
        }
    }

    pub fn output_names(&self) -> Vec<&str> {
        self.primary_outputs.iter().map(|&s| self.signal_name(s)).collect()
    }

    /// Gates that read `g`'s output (each listed once).
    pub fn loads(&self, g: GateId) -> &[GateId] {
        &self.loads[g.0]
    }

    /// Gates that read a primary or key input.
    pub fn input_loads(&self, s: Signal) -> &[GateId] {
        match s {
            Signal::Pi(i) => &self.input_loads[i],
            Signal::Ki(i) => &self.input_loads[self.primary_inputs.len() + i],
            Signal::Gate(g) => &self.loads[g.0],
        }
    }

    /// Number of primary outputs driven directly by `g`.
    pub fn po_fanout(&self, g: GateId) -> usize {
        self.po_fanout[g.0] as usize
    }

    pub fn is_po(&self, g: GateId) -> bool {
        self.po_fanout[g.0] > 0
    }

    /// Gate ids in evaluation order.
    pub fn topo_order(&self) -> Vec<GateId> {
        (0..self.gates.len()).map(GateId).collect()
    }

    /// Same gates, types, fanin order and interface, ignoring the design name.
    pub fn structurally_eq(&self, other: &Netlist) -> bool {
        if self.primary_inputs != other.primary_inputs
            || self.key_inputs != other.key_inputs
            || self.output_names() != other.output_names()
            || self.gates.len() != other.gates.len()
        {
            return false;
        }
        self.gates.iter().all(|g| {
            let Some(oid) = other.gate_by_name(&g.name) else {
                return false;
            };
            let og = &other.gates[oid.0];
            og.gtype == g.gtype
                && og.fanin.len() == g.fanin.len()
                && og
                    .fanin
                    .iter()
                    .zip(&g.fanin)
                    .all(|(&a, &b)| other.signal_name(a) == self.signal_name(b))
        })
    }

    /// Name-level view, suitable for editing and rebuilding.
    pub fn to_builder(&self) -> NetlistBuilder {
        let mut b = NetlistBuilder::new(self.name.clone());
        for pi in &self.primary_inputs {
            b.input(pi.clone());
        }
        for ki in &self.key_inputs {
            b.key_input(ki.clone());
        }
        for &po in &self.primary_outputs {
            b.output(self.signal_name(po).to_string());
        }
        for g in &self.gates {
            b.gate(GateSpec {
                name: g.name.clone(),
                gtype: g.gtype,
                fanin: g.fanin.iter().map(|&s| self.signal_name(s).to_string()).collect(),
            });
        }
        b
    }

    /// Same circuit with its primary-input list replaced. Unused inputs may
    /// be added; inputs that still have loads cannot be dropped.
    pub fn with_primary_inputs(&self, inputs: &[String]) -> Result<Netlist, NetlistError> {
        let mut b = self.to_builder();
        b.inputs = inputs.to_vec();
        b.build()
    }

    pub fn has_pseudo_gates(&self) -> bool {
        self.gates.iter().any(|g| g.gtype.is_pseudo())
    }

    /// Every net name in use (inputs, keys and gates).
    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.primary_inputs
            .iter()
            .chain(&self.key_inputs)
            .map(String::as_str)
            .chain(self.gates.iter().map(|g| g.name.as_str()))
    }
}

/// Accumulates a name-level netlist description and validates it.
#[derive(Debug, Clone, Default)]
pub struct NetlistBuilder {
    pub name: String,
    pub inputs: Vec<String>,
    pub keys: Vec<String>,
    pub outputs: Vec<String>,
    pub gates: Vec<GateSpec>,
    lines: HashMap<String, usize>,
}

impl NetlistBuilder {
    pub fn new(name: impl Into<String>) -> Self {
        NetlistBuilder { name: name.into(), ..Default::default() }
    }

    pub fn input(&mut self, name: impl Into<String>) -> &mut Self {
        self.inputs.push(name.into());
        self
    }

    pub fn key_input(&mut self, name: impl Into<String>) -> &mut Self {
        self.keys.push(name.into());
        self
    }

    pub fn output(&mut self, name: impl Into<String>) -> &mut Self {
        self.outputs.push(name.into());
        self
    }

    pub fn gate(&mut self, spec: GateSpec) -> &mut Self {
        self.gates.push(spec);
        self
    }

    pub fn add(&mut self, name: impl Into<String>, gtype: GateType, fanin: &[&str]) -> &mut Self {
        self.gate(GateSpec::new(name, gtype, fanin.iter().map(|s| s.to_string()).collect()))
    }

    pub(crate) fn record_line(&mut self, name: &str, line: usize) {
        self.lines.insert(name.to_string(), line);
    }

    fn line_of(&self, name: &str) -> Option<usize> {
        self.lines.get(name).copied()
    }

    pub fn build(&self) -> Result<Netlist, NetlistError> {
        #[derive(Clone, Copy)]
        enum Slot {
            Input(Signal),
            Gate(usize),
        }
        let mut names: HashMap<&str, Slot> = HashMap::new();
        for (i, n) in self.inputs.iter().enumerate() {
            if names.insert(n, Slot::Input(Signal::Pi(i))).is_some() {
                return Err(NetlistError::DuplicateDriver { name: n.clone(), line: self.line_of(n) });
            }
        }
        for (i, n) in self.keys.iter().enumerate() {
            if names.insert(n, Slot::Input(Signal::Ki(i))).is_some() {
                return Err(NetlistError::DuplicateDriver { name: n.clone(), line: self.line_of(n) });
            }
        }
        for (i, g) in self.gates.iter().enumerate() {
            if names.insert(&g.name, Slot::Gate(i)).is_some() {
                return Err(NetlistError::DuplicateDriver {
                    name: g.name.clone(),
                    line: self.line_of(&g.name),
                });
            }
            if !g.gtype.arity_ok(g.fanin.len()) {
                return Err(NetlistError::BadArity {
                    name: g.name.clone(),
                    gtype: g.gtype,
                    arity: g.fanin.len(),
                });
            }
        }

        // Resolve fanins to slots.
        let mut fanin_slots: Vec<Vec<Slot>> = Vec::with_capacity(self.gates.len());
        for g in &self.gates {
            let mut v = Vec::with_capacity(g.fanin.len());
            for f in &g.fanin {
                match names.get(f.as_str()) {
                    Some(&s) => v.push(s),
                    None => {
                        return Err(NetlistError::UndefinedSignal {
                            name: f.clone(),
                            user: g.name.clone(),
                            line: self.line_of(&g.name),
                        })
                    }
                }
            }
            fanin_slots.push(v);
        }
        let mut seen_out = HashSet::new();
        for o in &self.outputs {
            if !names.contains_key(o.as_str()) {
                return Err(NetlistError::UndefinedSignal {
                    name: o.clone(),
                    user: "OUTPUT".into(),
                    line: self.line_of(&format!("OUTPUT({o})")),
                });
            }
            if !seen_out.insert(o.as_str()) {
                return Err(NetlistError::DuplicateOutput(o.clone()));
            }
        }

        // Kahn's algorithm; among ready gates the earliest-declared goes first.
        let n = self.gates.len();
        let mut pending = vec![0usize; n];
        let mut users: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (i, fs) in fanin_slots.iter().enumerate() {
            for s in fs {
                if let Slot::Gate(j) = *s {
                    pending[i] += 1;
                    users[j].push(i);
                }
            }
        }
        let mut heap: BinaryHeap<Reverse<usize>> =
            (0..n).filter(|&i| pending[i] == 0).map(Reverse).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(Reverse(i)) = heap.pop() {
            order.push(i);
            for &u in &users[i] {
                pending[u] -= 1;
                if pending[u] == 0 {
                    heap.push(Reverse(u));
                }
            }
        }
        if order.len() != n {
            let gate_fanin: Vec<Vec<usize>> = fanin_slots
                .iter()
                .map(|v| {
                    v.iter()
                        .filter_map(|s| match s {
                            Slot::Gate(j) => Some(*j),
                            Slot::Input(_) => None,
                        })
                        .collect()
                })
                .collect();
            return Err(NetlistError::Cycle { members: self.find_cycle(&gate_fanin, &pending) });
        }

        let mut rank = vec![0usize; n];
        for (r, &i) in order.iter().enumerate() {
            rank[i] = r;
        }
        let to_signal = |s: Slot| match s {
            Slot::Input(sig) => sig,
            Slot::Gate(j) => Signal::Gate(GateId(rank[j])),
        };
        let gates: Vec<Gate> = order
            .iter()
            .enumerate()
            .map(|(r, &i)| Gate {
                id: GateId(r),
                name: self.gates[i].name.clone(),
                gtype: self.gates[i].gtype,
                fanin: fanin_slots[i].iter().map(|&s| to_signal(s)).collect(),
            })
            .collect();
        let primary_outputs: Vec<Signal> =
            self.outputs.iter().map(|o| to_signal(names[o.as_str()])).collect();
        Ok(Netlist::assemble(
            self.name.clone(),
            self.inputs.clone(),
            self.keys.clone(),
            primary_outputs,
            gates,
        ))
    }

    fn find_cycle(&self, gate_fanin: &[Vec<usize>], pending: &[usize]) -> Vec<String> {
        // Every unresolved gate has at least one unresolved gate fanin, so
        // walking those edges must revisit a node.
        let Some(start) = (0..pending.len()).find(|&i| pending[i] > 0) else {
            return Vec::new();
        };
        let mut pos: HashMap<usize, usize> = HashMap::new();
        let mut path = Vec::new();
        let mut cur = start;
        loop {
            if let Some(&p) = pos.get(&cur) {
                let mut cyc: Vec<String> =
                    path[p..].iter().map(|&i: &usize| self.gates[i].name.clone()).collect();
                cyc.reverse();
                cyc.push(cyc[0].clone());
                return cyc;
            }
            pos.insert(cur, path.len());
            path.push(cur);
            cur = match gate_fanin[cur].iter().find(|&&j| pending[j] > 0) {
                Some(&j) => j,
                None => return path.iter().map(|&i| self.gates[i].name.clone()).collect(),
            };
        }
    }
}

impl Netlist {
    fn assemble(
        name: String,
        primary_inputs: Vec<String>,
        key_inputs: Vec<String>,
        primary_outputs: Vec<Signal>,
        gates: Vec<Gate>,
    ) -> Netlist {
        let mut lookup = HashMap::with_capacity(primary_inputs.len() + key_inputs.len() + gates.len());
        for (i, n) in primary_inputs.iter().enumerate() {
            lookup.insert(n.clone(), Signal::Pi(i));
        }
        for (i, n) in key_inputs.iter().enumerate() {
            lookup.insert(n.clone(), Signal::Ki(i));
        }
        for g in &gates {
            lookup.insert(g.name.clone(), Signal::Gate(g.id));
        }
        let n_in = primary_inputs.len();
        let mut loads: Vec<Vec<GateId>> = vec![Vec::new(); gates.len()];
        let mut input_loads: Vec<Vec<GateId>> = vec![Vec::new(); n_in + key_inputs.len()];
        for g in &gates {
            for &f in &g.fanin {
                let list = match f {
                    Signal::Pi(i) => &mut input_loads[i],
                    Signal::Ki(i) => &mut input_loads[n_in + i],
                    Signal::Gate(d) => &mut loads[d.0],
                };
                if list.last() != Some(&g.id) {
                    list.push(g.id);
                }
            }
        }
        let mut po_fanout = vec![0u32; gates.len()];
        for &po in &primary_outputs {
            if let Signal::Gate(g) = po {
                po_fanout[g.0] += 1;
            }
        }
        Netlist {
            name,
            primary_inputs,
            key_inputs,
            primary_outputs,
            gates,
            lookup,
            loads,
            input_loads,
            po_fanout,
        }
    }
}

/// Allocates fresh net names that do not collide with an existing set.
#[derive(Debug, Clone)]
pub struct NameGen {
    taken: HashSet<String>,
    prefix: String,
    next: usize,
}

impl NameGen {
    pub fn new<'a>(existing: impl IntoIterator<Item = &'a str>, prefix: impl Into<String>) -> Self {
        NameGen {
            taken: existing.into_iter().map(str::to_string).collect(),
            prefix: prefix.into(),
            next: 0,
        }
    }

    pub fn fresh(&mut self) -> String {
        loop {
            let cand = format!("{}{}", self.prefix, self.next);
            self.next += 1;
            if self.taken.insert(cand.clone()) {
                return cand;
            }
        }
    }

    /// `base` itself if free, otherwise `base_1`, `base_2`, ...
    pub fn derived(&mut self, base: &str) -> String {
        if self.taken.insert(base.to_string()) {
            return base.to_string();
        }
        let mut i = 1;
        loop {
            let cand = format!("{base}_{i}");
            if self.taken.insert(cand.clone()) {
                return cand;
            }
            i += 1;
        }
    }

    pub fn reserve(&mut self, name: &str) {
        self.taken.insert(name.to_string());
    }
}
