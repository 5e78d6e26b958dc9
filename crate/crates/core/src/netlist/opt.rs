//! Constant propagation and dead-logic elimination.

use std::collections::{HashMap, HashSet};

use super::{GateSpec, GateType, Netlist, NetlistBuilder, NetlistError, Signal};

#[derive(Debug, Clone, PartialEq, Eq)]
enum Val {
    Const(bool),
    Net(String),
}

enum Simplified {
    Const(bool),
    Alias(String),
    Not(String),
    Gate(GateType, Vec<String>),
}

/// Result of [`constant_propagate`] plus the gate renames it performed.
#[derive(Debug, Clone)]
pub struct Propagated {
    pub netlist: Netlist,
    /// new name -> original name, for gates renamed to keep an output name.
    pub renames: HashMap<String, String>,
}

fn simplify(t: GateType, vals: &[Val]) -> Simplified {
    let nets = || vals.iter().filter_map(|v| match v {
        Val::Net(n) => Some(n.clone()),
        Val::Const(_) => None,
    });
    match t {
        GateType::And | GateType::Nand | GateType::Or | GateType::Nor => {
            let controlling = matches!(t, GateType::Or | GateType::Nor);
            let inverted = matches!(t, GateType::Nand | GateType::Nor);
            if vals.contains(&Val::Const(controlling)) {
                return Simplified::Const(controlling ^ inverted);
            }
            let mut terms: Vec<String> = Vec::new();
            for n in nets() {
                if !terms.contains(&n) {
                    terms.push(n);
                }
            }
            match terms.len() {
                0 => Simplified::Const(!controlling ^ inverted),
                1 if inverted => Simplified::Not(terms.remove(0)),
                1 => Simplified::Alias(terms.remove(0)),
                _ => Simplified::Gate(t, terms),
            }
        }
        GateType::Xor | GateType::Xnor => {
            let mut parity = t == GateType::Xnor;
            for v in vals {
                if let Val::Const(b) = v {
                    parity ^= b;
                }
            }
            // x ^ x cancels.
            let mut terms: Vec<String> = Vec::new();
            for n in nets() {
                if let Some(p) = terms.iter().position(|x| *x == n) {
                    terms.remove(p);
                } else {
                    terms.push(n);
                }
            }
            match terms.len() {
                0 => Simplified::Const(parity),
                1 if parity => Simplified::Not(terms.remove(0)),
                1 => Simplified::Alias(terms.remove(0)),
                _ => Simplified::Gate(if parity { GateType::Xnor } else { GateType::Xor }, terms),
            }
        }
        GateType::Not => match &vals[0] {
            Val::Const(b) => Simplified::Const(!b),
            Val::Net(n) => Simplified::Not(n.clone()),
        },
        GateType::Buf => match &vals[0] {
            Val::Const(b) => Simplified::Const(*b),
            Val::Net(n) => Simplified::Alias(n.clone()),
        },
        GateType::Const0 => Simplified::Const(false),
        GateType::Const1 => Simplified::Const(true),
    }
}

/// Ties `pins` to constants and simplifies the affected logic to a fixpoint.
///
/// Only gates downstream of a pinned net are rewritten; untouched logic is
/// kept verbatim, so an empty pin set returns an identical netlist. Pinned
/// inputs stay in the interface. Logic that loses all loads is left in place
/// for [`remove_dead_logic`].
pub fn constant_propagate(n: &Netlist, pins: &HashMap<String, bool>) -> Result<Netlist, NetlistError> {
    constant_propagate_traced(n, pins).map(|p| p.netlist)
}

pub fn constant_propagate_traced(
    n: &Netlist,
    pins: &HashMap<String, bool>,
) -> Result<Propagated, NetlistError> {
    let mut keys: Vec<&String> = pins.keys().collect();
    keys.sort();
    for k in keys {
        if n.lookup(k).is_none() {
            return Err(NetlistError::UnknownSignal(k.clone()));
        }
    }
    let mut val: HashMap<String, Val> = HashMap::with_capacity(n.num_gates() * 2);
    for name in n.primary_inputs().iter().chain(n.key_inputs()) {
        let v = match pins.get(name) {
            Some(&b) => Val::Const(b),
            None => Val::Net(name.clone()),
        };
        val.insert(name.clone(), v);
    }

    let mut emitted: Vec<GateSpec> = Vec::with_capacity(n.num_gates());
    let mut emitted_at: HashMap<String, usize> = HashMap::new();
    for g in n.gates() {
        if let Some(&b) = pins.get(&g.name) {
            val.insert(g.name.clone(), Val::Const(b));
            continue;
        }
        let fnames: Vec<&str> = g.fanin.iter().map(|&s| n.signal_name(s)).collect();
        let fvals: Vec<Val> = fnames.iter().map(|f| val[*f].clone()).collect();
        let dirty = g.gtype.is_pseudo()
            || fvals.iter().zip(&fnames).any(|(v, f)| !matches!(v, Val::Net(x) if x == f));
        if !dirty {
            emitted_at.insert(g.name.clone(), emitted.len());
            emitted.push(GateSpec::new(
                g.name.clone(),
                g.gtype,
                fnames.iter().map(|s| s.to_string()).collect(),
            ));
            val.insert(g.name.clone(), Val::Net(g.name.clone()));
            continue;
        }
        let v = match simplify(g.gtype, &fvals) {
            Simplified::Const(b) => Val::Const(b),
            Simplified::Alias(x) => Val::Net(x),
            Simplified::Not(x) => {
                // NOT(NOT(y)) folds to y.
                let inner = emitted_at
                    .get(&x)
                    .map(|&i| &emitted[i])
                    .filter(|s| s.gtype == GateType::Not)
                    .map(|s| s.fanin[0].clone());
                match inner {
                    Some(y) => Val::Net(y),
                    None => {
                        emitted_at.insert(g.name.clone(), emitted.len());
                        emitted.push(GateSpec::new(g.name.clone(), GateType::Not, vec![x]));
                        Val::Net(g.name.clone())
                    }
                }
            }
            Simplified::Gate(t, fan) => {
                emitted_at.insert(g.name.clone(), emitted.len());
                emitted.push(GateSpec::new(g.name.clone(), t, fan));
                Val::Net(g.name.clone())
            }
        };
        val.insert(g.name.clone(), v);
    }

    // Outputs keep their names: either the aliased gate takes the output's
    // name, or a buffer / constant pseudo-gate is added.
    let po_names: Vec<String> = n.output_names().into_iter().map(str::to_string).collect();
    let po_set: HashSet<&str> = po_names.iter().map(String::as_str).collect();
    let mut renames: HashMap<String, String> = HashMap::new();
    let mut extra: Vec<GateSpec> = Vec::new();
    for (p, &sig) in po_names.iter().zip(n.primary_outputs()) {
        if !matches!(sig, Signal::Gate(_)) {
            continue;
        }
        match &val[p] {
            Val::Net(q) if q == p => {}
            Val::Net(q) => {
                let renamable = emitted_at.contains_key(q)
                    && !po_set.contains(q.as_str())
                    && !renames.values().any(|old| old == q);
                if renamable {
                    renames.insert(p.clone(), q.clone());
                } else {
                    extra.push(GateSpec::new(p.clone(), GateType::Buf, vec![q.clone()]));
                }
            }
            Val::Const(b) => {
                let t = if *b { GateType::Const1 } else { GateType::Const0 };
                extra.push(GateSpec::new(p.clone(), t, vec![]));
            }
        }
    }
    let old_to_new: HashMap<&str, &str> =
        renames.iter().map(|(new, old)| (old.as_str(), new.as_str())).collect();
    let fix = |s: &str| old_to_new.get(s).map(|x| x.to_string()).unwrap_or_else(|| s.to_string());

    let mut b = NetlistBuilder::new(n.name());
    for pi in n.primary_inputs() {
        b.input(pi.clone());
    }
    for ki in n.key_inputs() {
        b.key_input(ki.clone());
    }
    for p in &po_names {
        b.output(p.clone());
    }
    for spec in emitted.into_iter().chain(extra) {
        b.gate(GateSpec::new(fix(&spec.name), spec.gtype, spec.fanin.iter().map(|f| fix(f)).collect()));
    }
    Ok(Propagated { netlist: b.build()?, renames })
}

/// What [`remove_dead_logic`] deleted.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DeadLogicReport {
    pub removed_gates: Vec<String>,
    pub dropped_inputs: Vec<String>,
    pub dropped_keys: Vec<String>,
}

/// Deletes every gate without a path to a primary output, then drops inputs
/// and key inputs that no longer have a load.
pub fn remove_dead_logic(n: &Netlist) -> (Netlist, DeadLogicReport) {
    let ng = n.num_gates();
    let mut live = vec![false; ng];
    let mut live_pi = vec![false; n.primary_inputs().len()];
    let mut live_ki = vec![false; n.key_inputs().len()];
    let mut mark = |s: Signal, live: &mut Vec<bool>| match s {
        Signal::Pi(i) => live_pi[i] = true,
        Signal::Ki(i) => live_ki[i] = true,
        Signal::Gate(g) => live[g.0] = true,
    };
    for &po in n.primary_outputs() {
        mark(po, &mut live);
    }
    for g in n.gates().iter().rev() {
        if live[g.id.0] {
            for &f in &g.fanin {
                mark(f, &mut live);
            }
        }
    }
    let mut report = DeadLogicReport::default();
    let mut b = NetlistBuilder::new(n.name());
    for (i, pi) in n.primary_inputs().iter().enumerate() {
        if live_pi[i] {
            b.input(pi.clone());
        } else {
            report.dropped_inputs.push(pi.clone());
        }
    }
    for (i, ki) in n.key_inputs().iter().enumerate() {
        if live_ki[i] {
            b.key_input(ki.clone());
        } else {
            report.dropped_keys.push(ki.clone());
        }
    }
    for o in n.output_names() {
        b.output(o.to_string());
    }
    for g in n.gates() {
        if live[g.id.0] {
            b.gate(GateSpec::new(
                g.name.clone(),
                g.gtype,
                g.fanin.iter().map(|&s| n.signal_name(s).to_string()).collect(),
            ));
        } else {
            report.removed_gates.push(g.name.clone());
        }
    }
    let out = b.build().expect("subset of a valid netlist is valid");
    (out, report)
}
