//! Structural rectification of classifier output.
//!
//! Each scheme has a small rule set over fan-in cones and direct
//! connectivity. Rules that promote gates into protection logic run before
//! rules that demote, and the whole set is iterated to a fixpoint.

use std::collections::{BTreeSet, HashSet};
use std::fmt::Write as _;

use fixedbitset::FixedBitSet;
use thiserror::Error;

use crate::labels::{LabelError, Labels, NodeClass, Scheme};
use crate::netlist::{ConeTable, GateId, GateType, Netlist, Signal};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PostError {
    #[error("class {class} is not used by scheme {scheme}")]
    SchemeMismatch { class: NodeClass, scheme: Scheme },
    #[error("no gate is predicted RESTORE")]
    NoRestore,
    #[error("rectification revisited an earlier labelling after {0} iterations")]
    Cycle(usize),
    #[error(transparent)]
    Label(#[from] LabelError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogEntry {
    pub gate: String,
    pub predicted: NodeClass,
    pub rectified: NodeClass,
    /// Last rule that moved the gate.
    pub rule: &'static str,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rectified {
    pub labels: Labels,
    /// Gates whose class changed, in gate order.
    pub log: Vec<LogEntry>,
    pub iterations: usize,
    /// Inferred protected inputs (SFLL family only).
    pub protected_inputs: BTreeSet<String>,
}

pub fn log_csv(log: &[LogEntry]) -> String {
    let mut s = String::from("gate,predicted_class,rectified_class,rule_fired\n");
    for e in log {
        let _ = writeln!(s, "{},{},{},{}", e.gate, e.predicted, e.rectified, e.rule);
    }
    s
}

/// Dispatches on the scheme.
pub fn rectify(n: &Netlist, scheme: Scheme, preds: &Labels) -> Result<Rectified, PostError> {
    match scheme {
        Scheme::AntiSat => rectify_antisat(n, preds),
        Scheme::TtLock | Scheme::SfllHd => rectify_sfll(n, scheme, preds),
    }
}

/// Static per-netlist facts the rules consult.
struct Ctx<'a> {
    n: &'a Netlist,
    cones: ConeTable,
    has_ki: Vec<bool>,
    /// Some gate without a key input lies in the fan-in cone.
    keyless_in_cone: Vec<bool>,
    is_xor: Vec<bool>,
    fanin_gates: Vec<Vec<GateId>>,
}

impl<'a> Ctx<'a> {
    fn new(n: &'a Netlist) -> Ctx<'a> {
        let cones = ConeTable::new(n);
        let has_ki: Vec<bool> = n.gates().iter().map(|g| cones.has_ki(g.id)).collect();
        let fanin_gates: Vec<Vec<GateId>> = n.gates().iter().map(|g| n.fanin_gates(g.id)).collect();
        let mut keyless_in_cone = vec![false; n.num_gates()];
        for g in n.gates() {
            keyless_in_cone[g.id.0] = fanin_gates[g.id.0].iter().any(|f| !has_ki[f.0] || keyless_in_cone[f.0]);
        }
        let is_xor = n.gates().iter().map(|g| matches!(g.gtype, GateType::Xor | GateType::Xnor)).collect();
        Ctx { n, cones, has_ki, keyless_in_cone, is_xor, fanin_gates }
    }

    /// Whether every gate in each fan-in cone carries `class`.
    fn cone_all(&self, cls: &[NodeClass], class: NodeClass) -> Vec<bool> {
        let mut out = vec![true; cls.len()];
        for g in 0..cls.len() {
            out[g] = self.fanin_gates[g].iter().all(|f| cls[f.0] == class && out[f.0]);
        }
        out
    }

    /// Two-input XOR/XNOR joining a key-driven cone made only of `class`
    /// gates with a key-free gate: a splice point of a protection block.
    fn integration(&self, cls: &[NodeClass], class: NodeClass) -> Vec<bool> {
        let pure = self.cone_all(cls, class);
        (0..cls.len())
            .map(|g| {
                let fi = &self.fanin_gates[g];
                self.is_xor[g]
                    && fi.len() == 2
                    && (0..2).any(|i| {
                        let (p, o) = (fi[i].0, fi[1 - i].0);
                        self.has_ki[p] && pure[p] && !self.has_ki[o]
                    })
            })
            .collect()
    }

    fn labels(&self, cls: &[NodeClass]) -> Labels {
        Labels::from_classes(self.n, cls)
    }
}

fn initial(n: &Netlist, scheme: Scheme, preds: &Labels) -> Result<Vec<NodeClass>, PostError> {
    let cls = preds.for_netlist(n)?;
    if let Some(&class) = cls.iter().find(|c| scheme.class_index(**c).is_none()) {
        return Err(PostError::SchemeMismatch { class, scheme });
    }
    Ok(cls)
}

type Rule<'r> = (&'static str, &'r dyn Fn(usize, &[NodeClass]) -> Option<NodeClass>);

/// Applies `rule` to every gate against a snapshot of `cls`.
fn sweep(cls: &mut [NodeClass], fired: &mut [Option<&'static str>], rule: Rule<'_>) -> bool {
    let snapshot = cls.to_vec();
    let mut changed = false;
    for g in 0..cls.len() {
        if let Some(c) = (rule.1)(g, &snapshot) {
            if c != cls[g] {
                cls[g] = c;
                fired[g] = Some(rule.0);
                changed = true;
            }
        }
    }
    changed
}

fn finish(
    ctx: &Ctx<'_>,
    start: &[NodeClass],
    cls: &[NodeClass],
    fired: &[Option<&'static str>],
    iterations: usize,
    protected_inputs: BTreeSet<String>,
) -> Rectified {
    let log = (0..cls.len())
        .filter(|&g| cls[g] != start[g])
        .map(|g| LogEntry {
            gate: ctx.n.gates()[g].name.clone(),
            predicted: start[g],
            rectified: cls[g],
            rule: fired[g].unwrap_or("unknown"),
        })
        .collect();
    Rectified { labels: ctx.labels(cls), log, iterations, protected_inputs }
}

/// Drives `step` until it reports no change, failing if a labelling repeats.
fn fixpoint(cls: &mut Vec<NodeClass>, mut step: impl FnMut(&mut Vec<NodeClass>) -> bool) -> Result<usize, PostError> {
    let mut seen: HashSet<Vec<NodeClass>> = HashSet::new();
    let mut iterations = 0;
    loop {
        seen.insert(cls.clone());
        iterations += 1;
        if !step(cls) {
            return Ok(iterations);
        }
        if seen.contains(cls) || iterations > cls.len() + 2 {
            return Err(PostError::Cycle(iterations));
        }
    }
}

pub fn rectify_antisat(n: &Netlist, preds: &Labels) -> Result<Rectified, PostError> {
    use NodeClass::{AntiSat as AS, Design as DN};
    let start = initial(n, Scheme::AntiSat, preds)?;
    let ctx = Ctx::new(n);
    let mut cls = start.clone();
    let mut fired = vec![None; cls.len()];
    let iterations = fixpoint(&mut cls, |cls| {
        let mut changed = false;
        loop {
            let integ = ctx.integration(cls, AS);
            let all_as = ctx.cone_all(cls, AS);
            let mut up = false;
            up |= sweep(cls, &mut fired, ("antisat_integration", &|g, c| {
                (c[g] == DN && integ[g]).then_some(AS)
            }));
            up |= sweep(cls, &mut fired, ("antisat_key_cone", &|g, c| {
                (c[g] == DN && ctx.has_ki[g] && all_as[g]).then_some(AS)
            }));
            if !up {
                break;
            }
            changed = true;
        }
        let integ = ctx.integration(cls, AS);
        changed |= sweep(cls, &mut fired, ("antisat_no_key", &|g, c| (c[g] == AS && !ctx.has_ki[g]).then_some(DN)));
        changed |= sweep(cls, &mut fired, ("antisat_design_cone", &|g, c| {
            (c[g] == AS && ctx.keyless_in_cone[g] && !integ[g]).then_some(DN)
        }));
        changed
    })?;
    Ok(finish(&ctx, &start, &cls, &fired, iterations, BTreeSet::new()))
}

/// Primary inputs feeding a RESTORE-class gate that has a key input in its cone.
fn protected_set(ctx: &Ctx<'_>, cls: &[NodeClass]) -> FixedBitSet {
    let mut x = FixedBitSet::with_capacity(ctx.n.primary_inputs().len());
    for g in ctx.n.gates() {
        if cls[g.id.0] == NodeClass::Restore && ctx.has_ki[g.id.0] {
            for &f in &g.fanin {
                if let Signal::Pi(i) = f {
                    x.insert(i);
                }
            }
        }
    }
    x
}

pub fn infer_protected_inputs(n: &Netlist, preds: &Labels) -> Result<BTreeSet<String>, PostError> {
    let cls = preds.for_netlist(n)?;
    if !cls.contains(&NodeClass::Restore) {
        return Err(PostError::NoRestore);
    }
    let ctx = Ctx::new(n);
    Ok(protected_set(&ctx, &cls).ones().map(|i| n.primary_inputs()[i].clone()).collect())
}

/// Gates whose every path to an output runs through `root`, `root` included.
fn fanout_free_cone(n: &Netlist, root: usize) -> Vec<usize> {
    let mut inside = vec![false; root + 1];
    inside[root] = true;
    for g in (0..root).rev() {
        let loads = n.loads(GateId(g));
        inside[g] = !n.is_po(GateId(g)) && !loads.is_empty() && loads.iter().all(|l| l.0 <= root && inside[l.0]);
    }
    (0..=root).filter(|&g| inside[g]).collect()
}

pub fn rectify_sfll(n: &Netlist, scheme: Scheme, preds: &Labels) -> Result<Rectified, PostError> {
    use NodeClass::{Design as DN, Perturb as PN, Restore as RN};
    if !scheme.is_sfll_family() {
        return Err(PostError::SchemeMismatch { class: NodeClass::Restore, scheme });
    }
    let start = initial(n, scheme, preds)?;
    if !start.contains(&RN) {
        return Err(PostError::NoRestore);
    }
    let ctx = Ctx::new(n);
    let ng = n.num_gates();
    let mut cls = start.clone();
    let mut fired = vec![None; ng];
    let mut x_final = FixedBitSet::new();

    let iterations = fixpoint(&mut cls, |cls| {
        let mut changed = false;

        // Restore: promote key-driven gates first, then demote.
        loop {
            let integ = ctx.integration(cls, RN);
            let all_rn = ctx.cone_all(cls, RN);
            let mut up = false;
            up |= sweep(cls, &mut fired, ("restore_integration", &|g, c| (c[g] != RN && integ[g]).then_some(RN)));
            up |= sweep(cls, &mut fired, ("restore_key_cone", &|g, c| {
                (c[g] != RN && ctx.has_ki[g] && all_rn[g]).then_some(RN)
            }));
            if !up {
                break;
            }
            changed = true;
        }
        let integ = ctx.integration(cls, RN);
        changed |= sweep(cls, &mut fired, ("restore_no_key", &|g, c| (c[g] == RN && !ctx.has_ki[g]).then_some(PN)));
        changed |= sweep(cls, &mut fired, ("restore_design_cone", &|g, c| {
            (c[g] == RN && ctx.keyless_in_cone[g] && !integ[g]).then_some(DN)
        }));

        // Perturb: gates driven only by protected inputs and wired into the
        // restore splice.
        let x = protected_set(&ctx, cls);
        let integ = ctx.integration(cls, RN);
        let structural: Vec<bool> = (0..ng)
            .map(|g| {
                let pis = ctx.cones.pis(GateId(g));
                !ctx.has_ki[g] && !pis.is_clear() && pis.is_subset(&x)
            })
            .collect();
        // The perturb-side splice feeds a restore splice and has a perturb-only fanin.
        let splice: Vec<bool> = (0..ng)
            .map(|g| {
                ctx.is_xor[g]
                    && !ctx.has_ki[g]
                    && n.loads(GateId(g)).iter().any(|l| integ[l.0])
                    && ctx.fanin_gates[g].iter().any(|f| structural[f.0])
            })
            .collect();
        let mut connected = vec![false; ng];
        let mut stack: Vec<usize> = (0..ng).filter(|&g| integ[g] || splice[g]).collect();
        for &g in &stack {
            connected[g] = true;
        }
        while let Some(u) = stack.pop() {
            for f in &ctx.fanin_gates[u] {
                if structural[f.0] && !connected[f.0] {
                    connected[f.0] = true;
                    stack.push(f.0);
                }
            }
        }
        let no_pis = |g: usize| ctx.cones.pis(GateId(g)).is_clear();
        // A splice joins the target's design driver with the perturb unit,
        // which is the fanout-free cone of its own side. The side whose cone
        // holds more PERTURB labels is taken as the perturb side.
        let mut perturb_side = vec![false; ng];
        let mut design_side = vec![false; ng];
        for s in (0..ng).filter(|&g| splice[g]) {
            let sides: Vec<(Vec<usize>, usize)> = ctx.fanin_gates[s]
                .iter()
                .map(|f| {
                    let cone = fanout_free_cone(n, f.0);
                    let pn = cone.iter().filter(|&&g| cls[g] == PN).count();
                    (cone, pn)
                })
                .collect();
            if sides.len() != 2 || sides[0].1 == sides[1].1 {
                continue;
            }
            let (p, d) = if sides[0].1 > sides[1].1 { (0, 1) } else { (1, 0) };
            sides[p].0.iter().for_each(|&g| perturb_side[g] = true);
            sides[d].0.iter().for_each(|&g| design_side[g] = true);
        }

        changed |= sweep(cls, &mut fired, ("perturb_key", &|g, c| {
            (c[g] == PN && ctx.has_ki[g]).then_some(DN)
        }));
        changed |= sweep(cls, &mut fired, ("perturb_unprotected", &|g, c| {
            (c[g] == PN && !splice[g] && !no_pis(g) && !(structural[g] && connected[g])).then_some(DN)
        }));

        changed |= sweep(cls, &mut fired, ("perturb_splice", &|g, c| (c[g] == DN && splice[g]).then_some(PN)));
        changed |= sweep(cls, &mut fired, ("perturb_cone", &|g, c| {
            (c[g] == DN && perturb_side[g] && structural[g]).then_some(PN)
        }));
        // Fanins all perturb, and the output stays inside the perturb unit.
        changed |= sweep(cls, &mut fired, ("perturb_fanin", &|g, c| {
            let fi = &ctx.fanin_gates[g];
            let loads = n.loads(GateId(g));
            (c[g] == DN
                && structural[g]
                && connected[g]
                && !design_side[g]
                && !fi.is_empty()
                && fi.iter().all(|f| c[f.0] == PN)
                && !n.is_po(GateId(g))
                && !loads.is_empty()
                && loads.iter().all(|l| c[l.0] == PN))
                .then_some(PN)
        }));
        changed |= sweep(cls, &mut fired, ("perturb_loads", &|g, c| {
            let loads = n.loads(GateId(g));
            (c[g] == DN
                && structural[g]
                && connected[g]
                && !design_side[g]
                && !n.is_po(GateId(g))
                && !loads.is_empty()
                && loads.iter().all(|l| c[l.0] == PN && !splice[l.0]))
            .then_some(PN)
        }));
        changed |= sweep(cls, &mut fired, ("perturb_design_side", &|g, c| {
            (c[g] == PN && design_side[g]).then_some(DN)
        }));
        // Perturb logic only feeds perturb logic or the restore splice.
        changed |= sweep(cls, &mut fired, ("perturb_design_load", &|g, c| {
            (c[g] == PN && !splice[g] && n.loads(GateId(g)).iter().any(|l| c[l.0] == DN)).then_some(DN)
        }));
        x_final = x;
        changed
    })?;
    let protected = x_final.ones().map(|i| n.primary_inputs()[i].clone()).collect();
    Ok(finish(&ctx, &start, &cls, &fired, iterations, protected))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::locking::{lock, LockConfig, LockedInstance};
    use crate::netlist::{generate, parse_bench};

    fn design(inputs: usize, gates: usize, seed: u64) -> Netlist {
        generate::random_netlist("d", &generate::RandomCircuit { inputs, key_inputs: 0, gates, max_fanin: 3, seed })
    }

    fn locked(scheme: Scheme, k: usize, h: usize, seed: u64) -> LockedInstance {
        let mut cfg = LockConfig::new(scheme, k, h, seed);
        if scheme.is_sfll_family() {
            cfg.perturb_rewrite_passes = (seed % 3) as usize;
        }
        lock(&design(16, 80, seed), &cfg).unwrap()
    }

    #[test]
    fn oracle_labels_are_fixed_points() {
        for seed in 0..12 {
            for (scheme, k, h) in [(Scheme::AntiSat, 8, 0), (Scheme::TtLock, 8, 0), (Scheme::SfllHd, 12, 2)] {
                let l = locked(scheme, k, h, seed);
                let r = rectify(&l.netlist, scheme, &l.labels).unwrap();
                assert_eq!(r.labels, l.labels, "{scheme} seed {seed}: {:?}", r.log);
                assert!(r.log.is_empty());
                let again = rectify(&l.netlist, scheme, &r.labels).unwrap();
                assert_eq!(again.labels, r.labels);
            }
        }
    }

    #[test]
    fn stray_perturb_label_does_not_spread_when_every_input_is_protected() {
        for seed in 0..4 {
            let l = lock(&design(16, 80, seed), &LockConfig::new(Scheme::TtLock, 16, 0, seed)).unwrap();
            let mut bad = Vec::new();
            for g in l.netlist.gates() {
                for (from, to) in [(NodeClass::Design, NodeClass::Perturb), (NodeClass::Perturb, NodeClass::Design)] {
                    if l.labels.get(&g.name) != Some(from) {
                        continue;
                    }
                    let mut preds = l.labels.clone();
                    preds.insert(g.name.clone(), to);
                    let r = rectify(&l.netlist, Scheme::TtLock, &preds).unwrap();
                    if r.labels != l.labels {
                        bad.push(format!("{} {from:?}->{to:?}: {} moved", g.name, r.log.len()));
                    }
                }
            }
            assert!(bad.is_empty(), "seed {seed}: {bad:?}");
        }
    }

    #[test]
    fn protected_inputs_match_metadata() {
        for seed in 0..8 {
            let l = locked(Scheme::TtLock, 8, 0, seed);
            let x = infer_protected_inputs(&l.netlist, &l.labels).unwrap();
            let meta: BTreeSet<String> = l.meta.protected_inputs.iter().cloned().collect();
            assert_eq!(x, meta);
            let r = rectify_sfll(&l.netlist, Scheme::TtLock, &l.labels).unwrap();
            assert_eq!(r.protected_inputs, meta);
        }
    }

    #[test]
    fn spurious_restore_on_key_logic_only_adds_protected_inputs() {
        let l = locked(Scheme::SfllHd, 8, 2, 3);
        let base = infer_protected_inputs(&l.netlist, &l.labels).unwrap();
        let mut noisy = l.labels.clone();
        for g in l.netlist.gates() {
            if l.labels.get(&g.name) == Some(NodeClass::Restore) {
                continue;
            }
            // Relabel one perturb comparator gate as RESTORE: it has no key input.
            if l.labels.get(&g.name) == Some(NodeClass::Perturb) {
                noisy.insert(g.name.clone(), NodeClass::Restore);
                break;
            }
        }
        let x = infer_protected_inputs(&l.netlist, &noisy).unwrap();
        assert!(base.is_subset(&x));
    }

    #[test]
    fn no_restore_is_error() {
        let l = locked(Scheme::TtLock, 8, 0, 1);
        let all_design = Labels::from_classes(&l.netlist, &vec![NodeClass::Design; l.netlist.num_gates()]);
        assert_eq!(rectify_sfll(&l.netlist, Scheme::TtLock, &all_design).unwrap_err(), PostError::NoRestore);
        assert_eq!(infer_protected_inputs(&l.netlist, &all_design).unwrap_err(), PostError::NoRestore);
    }

    #[test]
    fn scheme_mismatch() {
        let l = locked(Scheme::TtLock, 8, 0, 1);
        assert!(matches!(rectify_antisat(&l.netlist, &l.labels), Err(PostError::SchemeMismatch { .. })));
        let a = locked(Scheme::AntiSat, 8, 0, 1);
        assert!(matches!(rectify(&a.netlist, Scheme::SfllHd, &a.labels), Err(PostError::SchemeMismatch { .. })));
    }

    #[test]
    fn antisat_keyless_predictions_are_dropped() {
        let l = locked(Scheme::AntiSat, 8, 0, 2);
        let target = &l.meta.target;
        let mut p = l.labels.clone();
        let tgt = l.netlist.gate_by_name(target).unwrap();
        let mut flipped = vec![target.clone()];
        p.insert(target.clone(), NodeClass::AntiSat);
        for f in l.netlist.fanin_gates(tgt) {
            let name = l.netlist.gates()[f.0].name.clone();
            p.insert(name.clone(), NodeClass::AntiSat);
            flipped.push(name);
        }
        let r = rectify_antisat(&l.netlist, &p).unwrap();
        assert_eq!(r.labels, l.labels);
        assert!(r.log.iter().all(|e| e.rule == "antisat_no_key" && flipped.contains(&e.gate)));
    }

    #[test]
    fn antisat_tree_node_is_recovered() {
        let l = locked(Scheme::AntiSat, 16, 0, 4);
        let and = l
            .netlist
            .gates()
            .iter()
            .find(|g| g.gtype == GateType::And && l.labels.get(&g.name) == Some(NodeClass::AntiSat))
            .unwrap();
        let mut p = l.labels.clone();
        p.insert(and.name.clone(), NodeClass::Design);
        let r = rectify_antisat(&l.netlist, &p).unwrap();
        assert_eq!(r.labels, l.labels);
        assert_eq!(r.log.len(), 1);
        assert_eq!((r.log[0].predicted, r.log[0].rectified), (NodeClass::Design, NodeClass::AntiSat));
    }

    #[test]
    fn sfll_design_predicted_perturb_on_unprotected_inputs_is_dropped() {
        let l = locked(Scheme::SfllHd, 8, 1, 5);
        let x: BTreeSet<&str> = l.meta.protected_inputs.iter().map(String::as_str).collect();
        let cones = ConeTable::new(&l.netlist);
        let mut p = l.labels.clone();
        let mut n_flipped = 0;
        for g in l.netlist.gates() {
            let unprotected = cones.pis(g.id).ones().any(|i| !x.contains(l.netlist.primary_inputs()[i].as_str()));
            if l.labels.get(&g.name) == Some(NodeClass::Design) && unprotected && !cones.has_ki(g.id) {
                p.insert(g.name.clone(), NodeClass::Perturb);
                n_flipped += 1;
            }
        }
        assert!(n_flipped > 10);
        let r = rectify_sfll(&l.netlist, Scheme::SfllHd, &p).unwrap();
        assert_eq!(r.labels, l.labels);
        assert!(r.log.iter().all(|e| e.rule == "perturb_unprotected"));
    }

    #[test]
    fn sfll_single_flips_are_mostly_repaired() {
        let (mut fixed, mut total) = (0, 0);
        for seed in 0..10 {
            let (scheme, h) = if seed % 2 == 0 { (Scheme::TtLock, 0) } else { (Scheme::SfllHd, 1 + (seed % 3) as usize) };
            let l = locked(scheme, 8, h, seed);
            let scheme = l.meta.scheme;
            for g in l.netlist.gates() {
                let truth = l.labels.get(&g.name).unwrap();
                for &wrong in scheme.classes().iter().filter(|&&c| c != truth) {
                    let mut p = l.labels.clone();
                    p.insert(g.name.clone(), wrong);
                    total += 1;
                    if rectify(&l.netlist, scheme, &p).map(|r| r.labels == l.labels).unwrap_or(false) {
                        fixed += 1;
                    }
                }
            }
        }
        assert!(fixed as f64 >= 0.95 * total as f64, "{fixed}/{total}");
    }

    #[test]
    fn log_csv_format() {
        let n = parse_bench("INPUT(a)\nINPUT(b)\nOUTPUT(y)\ny = AND(a, b)").unwrap();
        let preds = Labels::from_classes(&n, &[NodeClass::AntiSat]);
        let r = rectify_antisat(&n, &preds).unwrap();
        assert_eq!(log_csv(&r.log), "gate,predicted_class,rectified_class,rule_fired\ny,ANTISAT,DESIGN,antisat_no_key\n");
    }
}
