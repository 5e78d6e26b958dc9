//! Function-preserving structural rewrites, used to diversify training data.

use std::collections::{BTreeSet, HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{GateId, GateSpec, GateType, NameGen, Netlist, NetlistBuilder, Signal};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RewriteRule {
    /// 2-input XOR/XNOR into AND/OR/NOT form.
    XorExpand,
    /// AND/OR/NOT form of a 2-input XOR back into XOR.
    XorContract,
    /// XNOR into NOT(XOR).
    XnorSplit,
    /// NOT(XOR) into XNOR.
    XnorMerge,
    /// NAND into OR of inverted inputs, NOR into AND of inverted inputs, and back.
    DeMorgan,
    /// NOT(NOT(x)) into x.
    NotPair,
    /// Wide gates into balanced 2-input trees; nested same-type gates flattened.
    Rebalance,
}

impl RewriteRule {
    pub const ALL: [RewriteRule; 7] = [
        RewriteRule::XorExpand,
        RewriteRule::XorContract,
        RewriteRule::XnorSplit,
        RewriteRule::XnorMerge,
        RewriteRule::DeMorgan,
        RewriteRule::NotPair,
        RewriteRule::Rebalance,
    ];
}

/// Rules to apply plus nets that must be left exactly as they are.
#[derive(Debug, Clone, Default)]
pub struct RuleSet {
    pub rules: BTreeSet<RewriteRule>,
    pub frozen: HashSet<String>,
    /// Per-gate probability of attempting a rewrite.
    pub rate: Option<f64>,
}

impl RuleSet {
    pub fn all() -> Self {
        RuleSet { rules: RewriteRule::ALL.into_iter().collect(), ..Default::default() }
    }

    pub fn none() -> Self {
        RuleSet::default()
    }

    pub fn only(rules: &[RewriteRule]) -> Self {
        RuleSet { rules: rules.iter().copied().collect(), ..Default::default() }
    }

    pub fn freeze<I: IntoIterator<Item = S>, S: Into<String>>(mut self, names: I) -> Self {
        self.frozen.extend(names.into_iter().map(Into::into));
        self
    }
}

/// Rewritten netlist plus, for every gate in it, the original gate it came from.
#[derive(Debug, Clone)]
pub struct Rewritten {
    pub netlist: Netlist,
    pub origin: HashMap<String, String>,
}

pub fn rewrite_augment(n: &Netlist, rules: &RuleSet, seed: u64) -> Netlist {
    rewrite_augment_traced(n, rules, seed).netlist
}

enum Plan {
    Keep,
    Applied,
}

struct Ctx<'a> {
    n: &'a Netlist,
    rules: &'a RuleSet,
    plan: Vec<Plan>,
    absorbed: Vec<bool>,
}

impl Ctx<'_> {
    fn gate(&self, g: GateId) -> &super::Gate {
        &self.n.gates()[g.0]
    }

    /// A gate that may be folded into its single load.
    fn absorbable(&self, s: Signal, t: GateType) -> Option<GateId> {
        let Signal::Gate(d) = s else { return None };
        let gate = self.gate(d);
        (gate.gtype == t
            && self.n.loads(d).len() == 1
            && !self.n.is_po(d)
            && matches!(self.plan[d.0], Plan::Keep)
            && !self.absorbed[d.0]
            && !self.rules.frozen.contains(&gate.name))
            .then_some(d)
    }

    fn applicable(&self, g: GateId, rule: RewriteRule) -> Option<Vec<GateId>> {
        let gate = self.gate(g);
        let k = gate.fanin.len();
        let distinct = {
            let mut f = gate.fanin.clone();
            f.sort();
            f.dedup();
            f.len() == k
        };
        match rule {
            RewriteRule::XorExpand => {
                (matches!(gate.gtype, GateType::Xor | GateType::Xnor) && k == 2 && distinct).then(Vec::new)
            }
            RewriteRule::XnorSplit => (gate.gtype == GateType::Xnor).then(Vec::new),
            RewriteRule::XnorMerge => {
                if gate.gtype != GateType::Not {
                    return None;
                }
                self.absorbable(gate.fanin[0], GateType::Xor).map(|d| vec![d])
            }
            RewriteRule::NotPair => {
                if gate.gtype != GateType::Not {
                    return None;
                }
                self.absorbable(gate.fanin[0], GateType::Not).map(|d| vec![d])
            }
            RewriteRule::DeMorgan => match gate.gtype {
                GateType::Nand | GateType::Nor => Some(Vec::new()),
                GateType::And | GateType::Or if distinct => {
                    let mut inner = Vec::with_capacity(k);
                    for &f in &gate.fanin {
                        inner.push(self.absorbable(f, GateType::Not)?);
                    }
                    Some(inner)
                }
                _ => None,
            },
            RewriteRule::Rebalance => {
                let base = match gate.gtype {
                    GateType::And | GateType::Nand => GateType::And,
                    GateType::Or | GateType::Nor => GateType::Or,
                    GateType::Xor | GateType::Xnor => GateType::Xor,
                    _ => return None,
                };
                let nested: Vec<GateId> =
                    gate.fanin.iter().filter_map(|&f| self.absorbable(f, base)).collect();
                if !nested.is_empty() {
                    Some(nested)
                } else if k >= 3 {
                    Some(Vec::new())
                } else {
                    None
                }
            }
            RewriteRule::XorContract => {
                // OR(AND(a, NOT b), AND(NOT a, b)) with every inner gate private.
                if gate.gtype != GateType::Or || k != 2 {
                    return None;
                }
                let t1 = self.absorbable(gate.fanin[0], GateType::And)?;
                let t2 = self.absorbable(gate.fanin[1], GateType::And)?;
                if t1 == t2 {
                    return None;
                }
                let (g1, g2) = (self.gate(t1), self.gate(t2));
                if g1.fanin.len() != 2 || g2.fanin.len() != 2 {
                    return None;
                }
                let (a, nb) = (g1.fanin[0], g1.fanin[1]);
                let (na, b) = (g2.fanin[0], g2.fanin[1]);
                let inv_of = |s: Signal| -> Option<(GateId, Signal)> {
                    let d = self.absorbable(s, GateType::Not)?;
                    Some((d, self.gate(d).fanin[0]))
                };
                let (nbg, nb_in) = inv_of(nb)?;
                let (nag, na_in) = inv_of(na)?;
                (nb_in == b && na_in == a && a != b && nbg != nag).then(|| vec![t1, t2, nbg, nag])
            }
        }
    }
}

/// Applies at most one rule per original gate, choosing sites and rules
/// pseudo-randomly from `seed`. Every rewritten gate keeps driving its
/// original net name, except for collapsed inverter pairs.
pub fn rewrite_augment_traced(n: &Netlist, rules: &RuleSet, seed: u64) -> Rewritten {
    let identity = || Rewritten {
        netlist: n.clone(),
        origin: n.gates().iter().map(|g| (g.name.clone(), g.name.clone())).collect(),
    };
    if rules.rules.is_empty() {
        return identity();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rate = rules.rate.unwrap_or(0.5);
    let catalog: Vec<RewriteRule> = rules.rules.iter().copied().collect();
    let mut ctx = Ctx { n, rules, plan: Vec::with_capacity(n.num_gates()), absorbed: vec![false; n.num_gates()] };

    let mut chosen: Vec<Option<(RewriteRule, Vec<GateId>)>> = Vec::with_capacity(n.num_gates());
    for g in n.gates() {
        ctx.plan.push(Plan::Keep);
        chosen.push(None);
        if rules.frozen.contains(&g.name) || !rng.gen_bool(rate) {
            continue;
        }
        let mut order = catalog.clone();
        order.shuffle(&mut rng);
        for rule in order {
            if let Some(inner) = ctx.applicable(g.id, rule) {
                for &d in &inner {
                    ctx.absorbed[d.0] = true;
                }
                ctx.plan[g.id.0] = Plan::Applied;
                chosen[g.id.0] = Some((rule, inner));
                break;
            }
        }
    }

    let mut names = NameGen::new(n.names(), "rw");
    let mut alias: HashMap<String, String> = HashMap::new();
    let mut out: Vec<GateSpec> = Vec::with_capacity(n.num_gates() * 2);
    let mut origin: HashMap<String, String> = HashMap::new();
    let sig = |s: Signal, alias: &HashMap<String, String>| -> String {
        let name = n.signal_name(s);
        alias.get(name).cloned().unwrap_or_else(|| name.to_string())
    };

    for g in n.gates() {
        if ctx.absorbed[g.id.0] {
            continue;
        }
        let fan: Vec<String> = g.fanin.iter().map(|&s| sig(s, &alias)).collect();
        let mut emit = |spec: GateSpec, out: &mut Vec<GateSpec>| {
            origin.insert(spec.name.clone(), g.name.clone());
            out.push(spec);
        };
        let Some((rule, inner)) = &chosen[g.id.0] else {
            emit(GateSpec::new(g.name.clone(), g.gtype, fan), &mut out);
            continue;
        };
        let inner_fan = |d: GateId, alias: &HashMap<String, String>| -> Vec<String> {
            n.gates()[d.0].fanin.iter().map(|&s| sig(s, alias)).collect()
        };
        match rule {
            RewriteRule::XorExpand => {
                let (a, b) = (fan[0].clone(), fan[1].clone());
                let na = names.derived(&format!("{}_na", g.name));
                let nb = names.derived(&format!("{}_nb", g.name));
                let t1 = names.derived(&format!("{}_t1", g.name));
                let t2 = names.derived(&format!("{}_t2", g.name));
                emit(GateSpec::new(na.clone(), GateType::Not, vec![a.clone()]), &mut out);
                emit(GateSpec::new(nb.clone(), GateType::Not, vec![b.clone()]), &mut out);
                if g.gtype == GateType::Xor {
                    emit(GateSpec::new(t1.clone(), GateType::And, vec![a, nb]), &mut out);
                    emit(GateSpec::new(t2.clone(), GateType::And, vec![na, b]), &mut out);
                } else {
                    emit(GateSpec::new(t1.clone(), GateType::And, vec![a, b]), &mut out);
                    emit(GateSpec::new(t2.clone(), GateType::And, vec![na, nb]), &mut out);
                }
                emit(GateSpec::new(g.name.clone(), GateType::Or, vec![t1, t2]), &mut out);
            }
            RewriteRule::XorContract => {
                let t1 = inner_fan(inner[0], &alias);
                emit(GateSpec::new(g.name.clone(), GateType::Xor, vec![t1[0].clone(), inner_fan(inner[1], &alias)[1].clone()]), &mut out);
            }
            RewriteRule::XnorSplit => {
                let x = names.derived(&format!("{}_x", g.name));
                emit(GateSpec::new(x.clone(), GateType::Xor, fan), &mut out);
                emit(GateSpec::new(g.name.clone(), GateType::Not, vec![x]), &mut out);
            }
            RewriteRule::XnorMerge => {
                emit(GateSpec::new(g.name.clone(), GateType::Xnor, inner_fan(inner[0], &alias)), &mut out);
            }
            RewriteRule::NotPair => {
                let x = inner_fan(inner[0], &alias).remove(0);
                if n.is_po(g.id) || rules.frozen.contains(&x) {
                    emit(GateSpec::new(g.name.clone(), GateType::Buf, vec![x]), &mut out);
                } else {
                    alias.insert(g.name.clone(), x);
                }
            }
            RewriteRule::DeMorgan => {
                if inner.is_empty() {
                    let root = if g.gtype == GateType::Nand { GateType::Or } else { GateType::And };
                    let mut inv = Vec::with_capacity(fan.len());
                    for (i, f) in fan.into_iter().enumerate() {
                        let nm = names.derived(&format!("{}_n{i}", g.name));
                        emit(GateSpec::new(nm.clone(), GateType::Not, vec![f]), &mut out);
                        inv.push(nm);
                    }
                    emit(GateSpec::new(g.name.clone(), root, inv), &mut out);
                } else {
                    let root = if g.gtype == GateType::Or { GateType::Nand } else { GateType::Nor };
                    let ins: Vec<String> = inner.iter().map(|&d| inner_fan(d, &alias).remove(0)).collect();
                    emit(GateSpec::new(g.name.clone(), root, ins), &mut out);
                }
            }
            RewriteRule::Rebalance => {
                if !inner.is_empty() {
                    let mut flat = Vec::new();
                    for &s in &g.fanin {
                        match s {
                            Signal::Gate(d) if inner.contains(&d) => flat.extend(inner_fan(d, &alias)),
                            _ => flat.push(sig(s, &alias)),
                        }
                    }
                    emit(GateSpec::new(g.name.clone(), g.gtype, flat), &mut out);
                } else {
                    let base = match g.gtype {
                        GateType::And | GateType::Nand => GateType::And,
                        GateType::Or | GateType::Nor => GateType::Or,
                        _ => GateType::Xor,
                    };
                    let (left, right) = fan.split_at(fan.len() / 2);
                    let mut subtree = |part: &[String], out: &mut Vec<GateSpec>| -> String {
                        balanced(part, base, &g.name, &mut names, &mut |s| emit(s, out))
                    };
                    let l = subtree(left, &mut out);
                    let r = subtree(right, &mut out);
                    emit(GateSpec::new(g.name.clone(), g.gtype, vec![l, r]), &mut out);
                }
            }
        }
    }

    let mut b = NetlistBuilder::new(n.name());
    for pi in n.primary_inputs() {
        b.input(pi.clone());
    }
    for ki in n.key_inputs() {
        b.key_input(ki.clone());
    }
    for o in n.output_names() {
        b.output(o.to_string());
    }
    for spec in out {
        b.gate(spec);
    }
    let netlist = b.build().expect("rewrites preserve validity");
    Rewritten { netlist, origin }
}

/// Balanced 2-input tree over `leaves`; a single leaf is returned as is.
fn balanced(
    leaves: &[String],
    t: GateType,
    base: &str,
    names: &mut NameGen,
    emit: &mut dyn FnMut(GateSpec),
) -> String {
    if leaves.len() == 1 {
        return leaves[0].clone();
    }
    let (l, r) = leaves.split_at(leaves.len() / 2);
    let a = balanced(l, t, base, names, emit);
    let b = balanced(r, t, base, names, emit);
    let name = names.derived(&format!("{base}_b"));
    emit(GateSpec::new(name.clone(), t, vec![a, b]));
    name
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netlist::{exhaustive_lane_mask, exhaustive_words, generate, parse_bench};

    fn same_function(a: &Netlist, b: &Netlist) -> bool {
        let k = a.primary_inputs().len() + a.key_inputs().len();
        let words = 1u64 << k.saturating_sub(6);
        let mut sa = a.simulator();
        let mut sb = b.simulator();
        let np = a.primary_inputs().len();
        for w in 0..words {
            let v = exhaustive_words(k, w);
            let mask = exhaustive_lane_mask(k);
            let oa = sa.run(&v[..np], &v[np..]);
            let ob = sb.run(&v[..np], &v[np..]);
            if oa.iter().zip(&ob).any(|(x, y)| (x ^ y) & mask != 0) {
                return false;
            }
        }
        true
    }

    #[test]
    fn empty_rule_set_is_identity() {
        let n = generate::random_netlist("t", &generate::RandomCircuit { inputs: 6, key_inputs: 0, gates: 40, max_fanin: 3, seed: 1 });
        assert_eq!(rewrite_augment(&n, &RuleSet::none(), 7), n);
    }

    #[test]
    fn xnor_split_example() {
        let n = parse_bench("INPUT(a)\nINPUT(b)\nOUTPUT(y)\ny = XNOR(a, b)").unwrap();
        let rules = RuleSet { rate: Some(1.0), ..RuleSet::only(&[RewriteRule::XnorSplit]) };
        let r = rewrite_augment(&n, &rules, 0);
        let y = r.gate_by_name("y").unwrap();
        let yg = &r.gates()[y.0];
        assert_eq!(yg.gtype, GateType::Not);
        let Signal::Gate(x) = yg.fanin[0] else { panic!("expected gate fanin") };
        assert_eq!(r.gates()[x.0].gtype, GateType::Xor);
        assert!(same_function(&n, &r));
    }

    #[test]
    fn each_rule_preserves_function() {
        for rule in RewriteRule::ALL {
            for seed in 0..20 {
                let spec = generate::RandomCircuit { inputs: 8, key_inputs: 2, gates: 70, max_fanin: 4, seed };
                let mut n = generate::random_netlist("t", &spec);
                // Expand first so contraction and merge have material to match.
                let pre = RuleSet { rate: Some(0.6), ..RuleSet::only(&[RewriteRule::XorExpand, RewriteRule::XnorSplit, RewriteRule::DeMorgan]) };
                n = rewrite_augment(&n, &pre, seed + 100);
                let rules = RuleSet { rate: Some(1.0), ..RuleSet::only(&[rule]) };
                let r = rewrite_augment(&n, &rules, seed);
                assert!(same_function(&n, &r), "{rule:?} seed {seed}");
            }
        }
    }

    #[test]
    fn contraction_inverts_expansion() {
        let n = parse_bench("INPUT(a)\nINPUT(b)\nINPUT(c)\nOUTPUT(y)\nm = XOR(a, b)\ny = AND(m, c)").unwrap();
        let e = rewrite_augment(&n, &RuleSet { rate: Some(1.0), ..RuleSet::only(&[RewriteRule::XorExpand]) }, 0);
        assert!(e.num_gates() > n.num_gates());
        let c = rewrite_augment(&e, &RuleSet { rate: Some(1.0), ..RuleSet::only(&[RewriteRule::XorContract]) }, 0);
        assert_eq!(c.num_gates(), n.num_gates());
        assert!(same_function(&n, &c));
    }

    #[test]
    fn frozen_nets_untouched() {
        let n = parse_bench("INPUT(a)\nINPUT(b)\nOUTPUT(y)\nOUTPUT(z)\ny = XNOR(a, b)\nz = NAND(a, b)").unwrap();
        let rules = RuleSet { rate: Some(1.0), ..RuleSet::all() }.freeze(["y", "z"]);
        assert_eq!(rewrite_augment(&n, &rules, 3), n);
    }

    #[test]
    fn deterministic_and_origin_complete() {
        let spec = generate::RandomCircuit { inputs: 10, key_inputs: 0, gates: 120, max_fanin: 4, seed: 5 };
        let n = generate::random_netlist("t", &spec);
        let a = rewrite_augment_traced(&n, &RuleSet::all(), 11);
        let b = rewrite_augment_traced(&n, &RuleSet::all(), 11);
        assert_eq!(a.netlist, b.netlist);
        assert_ne!(a.netlist, n);
        for g in a.netlist.gates() {
            let o = &a.origin[&g.name];
            assert!(n.gate_by_name(o).is_some());
        }
    }

    #[test]
    fn five_passes_full_catalog_equivalent() {
        for seed in 0..10 {
            let spec = generate::RandomCircuit { inputs: 12, key_inputs: 0, gates: 150, max_fanin: 4, seed };
            let n = generate::random_netlist("t", &spec);
            let mut r = n.clone();
            for pass in 0..5 {
                r = rewrite_augment(&r, &RuleSet::all(), seed * 10 + pass);
            }
            assert!(same_function(&n, &r), "seed {seed}");
        }
    }
}
