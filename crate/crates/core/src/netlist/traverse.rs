use std::collections::BTreeSet;

use fixedbitset::FixedBitSet;

use super::{GateId, Netlist, NetlistError, Signal};

/// Transitive fan-in of a gate, partitioned by signal kind. The start gate is
/// not a member of its own cone.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FaninCone {
    pub gates: BTreeSet<GateId>,
    pub pis: BTreeSet<usize>,
    pub kis: BTreeSet<usize>,
}

impl Netlist {
    pub fn fanin_cone(&self, start: GateId) -> Result<FaninCone, NetlistError> {
        self.gate(start)?;
        let mut cone = FaninCone::default();
        let mut stack = vec![start];
        while let Some(g) = stack.pop() {
            for &f in &self.gates()[g.0].fanin {
                match f {
                    Signal::Pi(i) => {
                        cone.pis.insert(i);
                    }
                    Signal::Ki(i) => {
                        cone.kis.insert(i);
                    }
                    Signal::Gate(d) => {
                        if cone.gates.insert(d) {
                            stack.push(d);
                        }
                    }
                }
            }
        }
        Ok(cone)
    }

    /// Gates reachable forward from `start`, excluding `start`.
    pub fn fanout_cone(&self, start: GateId) -> Result<BTreeSet<GateId>, NetlistError> {
        self.gate(start)?;
        let mut seen = BTreeSet::new();
        let mut stack = vec![start];
        while let Some(g) = stack.pop() {
            for &l in self.loads(g) {
                if seen.insert(l) {
                    stack.push(l);
                }
            }
        }
        Ok(seen)
    }

    /// Gates driven (directly) by `g`'s fanin, in fanin order, deduplicated.
    pub fn fanin_gates(&self, g: GateId) -> Vec<GateId> {
        let mut v: Vec<GateId> = Vec::new();
        for &f in &self.gates()[g.0].fanin {
            if let Signal::Gate(d) = f {
                if !v.contains(&d) {
                    v.push(d);
                }
            }
        }
        v
    }
}

/// Fan-in cones of every gate, computed once in topological order as bitsets.
/// Memory is quadratic in gate count, which is fine at benchmark scale.
#[derive(Debug, Clone)]
pub struct ConeTable {
    gates: Vec<FixedBitSet>,
    pis: Vec<FixedBitSet>,
    kis: Vec<FixedBitSet>,
}

impl ConeTable {
    pub fn new(n: &Netlist) -> Self {
        let ng = n.num_gates();
        let npi = n.primary_inputs().len();
        let nki = n.key_inputs().len();
        let mut gates: Vec<FixedBitSet> = Vec::with_capacity(ng);
        let mut pis: Vec<FixedBitSet> = Vec::with_capacity(ng);
        let mut kis: Vec<FixedBitSet> = Vec::with_capacity(ng);
        for g in n.gates() {
            let mut gs = FixedBitSet::with_capacity(ng);
            let mut ps = FixedBitSet::with_capacity(npi);
            let mut ks = FixedBitSet::with_capacity(nki);
            for &f in &g.fanin {
                match f {
                    Signal::Pi(i) => ps.insert(i),
                    Signal::Ki(i) => ks.insert(i),
                    Signal::Gate(d) => {
                        gs.insert(d.0);
                        gs.union_with(&gates[d.0]);
                        ps.union_with(&pis[d.0]);
                        ks.union_with(&kis[d.0]);
                    }
                }
            }
            gates.push(gs);
            pis.push(ps);
            kis.push(ks);
        }
        ConeTable { gates, pis, kis }
    }

    pub fn gates(&self, g: GateId) -> &FixedBitSet {
        &self.gates[g.0]
    }

    pub fn pis(&self, g: GateId) -> &FixedBitSet {
        &self.pis[g.0]
    }

    pub fn kis(&self, g: GateId) -> &FixedBitSet {
        &self.kis[g.0]
    }

    pub fn has_ki(&self, g: GateId) -> bool {
        !self.kis[g.0].is_clear()
    }

    pub fn cone(&self, g: GateId) -> FaninCone {
        FaninCone {
            gates: self.gates[g.0].ones().map(GateId).collect(),
            pis: self.pis[g.0].ones().collect(),
            kis: self.kis[g.0].ones().collect(),
        }
    }
}
