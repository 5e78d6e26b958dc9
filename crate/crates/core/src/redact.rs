//! Removal of classified protection logic and simulation-based equivalence.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::labels::{LabelError, Labels};
use crate::netlist::{
    constant_propagate, exhaustive_lane_mask, exhaustive_words, remove_dead_logic, GateId, GateType, Netlist,
    NetlistError, Signal,
};
use crate::par;

/// Largest input count checked exhaustively under [`Budget::auto`].
pub const EXHAUSTIVE_MAX_INPUTS: usize = 24;
pub const DEFAULT_RANDOM_VECTORS: u64 = 100_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RedactError {
    #[error("no integration gate found among the protection-classified gates")]
    NoIntegrationGates,
    #[error("key inputs still drive logic after removal: {}", .paths.join("; "))]
    ResidualKeys { paths: Vec<String> },
    #[error("interfaces differ: {0}")]
    InterfaceMismatch(String),
    #[error("{0} inputs are too many for exhaustive checking")]
    TooManyInputs(usize),
    #[error("counterexample failed re-simulation")]
    UnconfirmedCounterexample,
    #[error(transparent)]
    Netlist(#[from] NetlistError),
    #[error(transparent)]
    Label(#[from] LabelError),
}

/// XOR/XNOR protection gates where protection logic meets the design: one
/// fanin is a non-splice protection gate, the other a design gate, a primary
/// input or another splice. Only splices whose output reaches the design
/// (a primary output, a DESIGN load, or a further splice) are kept.
pub fn find_integration_gates(n: &Netlist, labels: &Labels) -> Result<Vec<GateId>, RedactError> {
    let cls = labels.for_netlist(n)?;
    let ng = n.num_gates();
    let mut cand = vec![false; ng];
    for g in n.gates() {
        if !cls[g.id.0].is_protection() || !matches!(g.gtype, GateType::Xor | GateType::Xnor) || g.fanin.len() != 2 {
            continue;
        }
        let side = |s: Signal| -> Option<bool> {
            // Some(true): protection side; Some(false): design side.
            match s {
                Signal::Pi(_) => Some(false),
                Signal::Ki(_) => None,
                Signal::Gate(d) if cand[d.0] || !cls[d.0].is_protection() => Some(false),
                Signal::Gate(_) => Some(true),
            }
        };
        let sides = (side(g.fanin[0]), side(g.fanin[1]));
        cand[g.id.0] = matches!(sides, (Some(true), Some(false)) | (Some(false), Some(true)));
    }
    let mut keep = vec![false; ng];
    for g in n.gates().iter().rev() {
        let i = g.id.0;
        keep[i] = cand[i]
            && (n.is_po(g.id) || n.loads(g.id).iter().any(|l| !cls[l.0].is_protection() || keep[l.0]));
    }
    let found: Vec<GateId> = (0..ng).filter(|&i| keep[i]).map(GateId).collect();
    if found.is_empty() {
        return Err(RedactError::NoIntegrationGates);
    }
    Ok(found)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Removal {
    pub netlist: Netlist,
    pub integration_gates: Vec<String>,
    /// Protection-side nets tied to 0.
    pub pinned: Vec<String>,
    pub removed_gates: usize,
}

/// Ties the protection side of every splice to 0, simplifies, and deletes the
/// logic left without a path to an output. The primary-input list is kept.
pub fn remove_protection(n: &Netlist, labels: &Labels) -> Result<Removal, RedactError> {
    let cls = labels.for_netlist(n)?;
    if !cls.iter().any(|c| c.is_protection()) {
        return Ok(Removal { netlist: n.clone(), integration_gates: vec![], pinned: vec![], removed_gates: 0 });
    }
    let integ = find_integration_gates(n, labels)?;
    let is_integ: HashSet<usize> = integ.iter().map(|g| g.0).collect();
    let mut pins = HashMap::new();
    let mut pinned = Vec::new();
    for &g in &integ {
        for &f in &n.gates()[g.0].fanin {
            if let Signal::Gate(d) = f {
                if cls[d.0].is_protection() && !is_integ.contains(&d.0) {
                    let name = n.gates()[d.0].name.clone();
                    if pins.insert(name.clone(), false).is_none() {
                        pinned.push(name);
                    }
                }
            }
        }
    }
    let p = constant_propagate(n, &pins)?;
    let (p, _) = remove_dead_logic(&p);
    let p = p.with_primary_inputs(n.primary_inputs())?;
    if !p.key_inputs().is_empty() {
        return Err(RedactError::ResidualKeys { paths: p.key_inputs().iter().map(|k| key_path(&p, k)).collect() });
    }
    Ok(Removal {
        removed_gates: n.num_gates().saturating_sub(p.num_gates()),
        netlist: p,
        integration_gates: integ.iter().map(|g| n.gates()[g.0].name.clone()).collect(),
        pinned,
    })
}

/// Shortest forward path from key input `k` to a primary output, as names.
fn key_path(n: &Netlist, k: &str) -> String {
    let Some(src) = n.lookup(k) else { return k.to_string() };
    let mut prev: HashMap<usize, Option<usize>> = HashMap::new();
    let mut q = VecDeque::new();
    for &l in n.input_loads(src) {
        if prev.insert(l.0, None).is_none() {
            q.push_back(l.0);
        }
    }
    while let Some(u) = q.pop_front() {
        if n.is_po(GateId(u)) {
            let mut path = vec![n.gates()[u].name.clone()];
            let mut cur = u;
            while let Some(Some(p)) = prev.get(&cur) {
                path.push(n.gates()[*p].name.clone());
                cur = *p;
            }
            path.push(k.to_string());
            path.reverse();
            return path.join(" -> ");
        }
        for &l in n.loads(GateId(u)) {
            if let std::collections::hash_map::Entry::Vacant(e) = prev.entry(l.0) {
                e.insert(Some(u));
                q.push_back(l.0);
            }
        }
    }
    k.to_string()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Budget {
    Exhaustive,
    Random { vectors: u64, seed: u64 },
}

impl Budget {
    /// Exhaustive up to [`EXHAUSTIVE_MAX_INPUTS`] inputs, else seeded random vectors.
    pub fn auto(num_inputs: usize, seed: u64) -> Budget {
        if num_inputs <= EXHAUSTIVE_MAX_INPUTS {
            Budget::Exhaustive
        } else {
            Budget::Random { vectors: DEFAULT_RANDOM_VECTORS, seed }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Status {
    EquivalentExhaustive,
    EquivalentSampled,
    NotEquivalent,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub status: Status,
    /// Input assignment by name; present exactly when not equivalent.
    pub counterexample: Option<BTreeMap<String, bool>>,
    pub vectors_checked: u64,
}

impl Verdict {
    pub fn is_equivalent(&self) -> bool {
        self.status != Status::NotEquivalent
    }
}

/// Words evaluated per parallel work item.
const WORDS_PER_TASK: u64 = 64;

/// Compares two key-free netlists with matching interfaces by simulation.
/// The inputs are driven in sorted-name order, so the result does not depend
/// on argument order.
pub fn check_equivalence(a: &Netlist, b: &Netlist, budget: Budget) -> Result<Verdict, RedactError> {
    check_equivalence_with(a, b, budget, &[])
}

/// [`check_equivalence`] that first simulates the `directed` assignments.
/// Each assignment must name every primary input. Directed vectors are
/// skipped under an exhaustive budget, which covers them anyway.
pub fn check_equivalence_with(
    a: &Netlist,
    b: &Netlist,
    budget: Budget,
    directed: &[BTreeMap<String, bool>],
) -> Result<Verdict, RedactError> {
    for (side, n) in [("first", a), ("second", b)] {
        if !n.key_inputs().is_empty() {
            return Err(RedactError::InterfaceMismatch(format!("{side} netlist has key inputs")));
        }
    }
    let mut names: Vec<String> = a.primary_inputs().to_vec();
    names.sort();
    let mut bnames = b.primary_inputs().to_vec();
    bnames.sort();
    if names != bnames {
        return Err(RedactError::InterfaceMismatch("primary inputs differ".into()));
    }
    let mut outs: Vec<&str> = a.output_names();
    outs.sort_unstable();
    let mut bouts = b.output_names();
    bouts.sort_unstable();
    if outs != bouts || outs.windows(2).any(|w| w[0] == w[1]) {
        return Err(RedactError::InterfaceMismatch("primary outputs differ".into()));
    }
    let order = |n: &Netlist| -> Vec<usize> {
        n.primary_inputs().iter().map(|p| names.binary_search(p).expect("same input set")).collect()
    };
    let out_index = |n: &Netlist| -> Vec<usize> {
        let pos: HashMap<&str, usize> = n.output_names().into_iter().enumerate().map(|(i, o)| (o, i)).collect();
        outs.iter().map(|o| pos[o]).collect()
    };
    let (ord_a, ord_b) = (order(a), order(b));
    let (out_a, out_b) = (out_index(a), out_index(b));
    let ni = names.len();

    let (total_words, last_mask, vectors, random): (u64, u64, u64, Option<Vec<Vec<u64>>>) = match budget {
        Budget::Exhaustive => {
            if ni > EXHAUSTIVE_MAX_INPUTS {
                return Err(RedactError::TooManyInputs(ni));
            }
            let words = if ni >= 6 { 1u64 << (ni - 6) } else { 1 };
            (words, exhaustive_lane_mask(ni), 1u64 << ni, None)
        }
        Budget::Random { vectors, seed } => {
            let mut all = pack_directed(&names, directed)?;
            let vectors = vectors.max(1);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            all.extend((0..vectors.div_ceil(64)).map(|_| (0..ni).map(|_| rng.gen()).collect::<Vec<u64>>()));
            let total = directed.len() as u64 + vectors;
            let rem = vectors % 64;
            (all.len() as u64, if rem == 0 { !0 } else { (1u64 << rem) - 1 }, total, Some(all))
        }
    };
    let words_for = |w: u64| -> Vec<u64> {
        match &random {
            Some(all) => all[w as usize].clone(),
            None => exhaustive_words(ni, w),
        }
    };

    let tasks = total_words.div_ceil(WORDS_PER_TASK) as usize;
    let first_diff: Vec<Option<(u64, u64)>> = par::map_range(tasks, |t| {
        let mut sa = a.simulator();
        let mut sb = b.simulator();
        let lo = t as u64 * WORDS_PER_TASK;
        for w in lo..(lo + WORDS_PER_TASK).min(total_words) {
            let words = words_for(w);
            let wa: Vec<u64> = ord_a.iter().map(|&i| words[i]).collect();
            let wb: Vec<u64> = ord_b.iter().map(|&i| words[i]).collect();
            let ra = sa.run(&wa, &[]);
            let rb = sb.run(&wb, &[]);
            let mask = if w + 1 == total_words { last_mask } else { !0 };
            let diff = out_a.iter().zip(&out_b).fold(0u64, |acc, (&i, &j)| acc | (ra[i] ^ rb[j])) & mask;
            if diff != 0 {
                return Some((w, diff));
            }
        }
        None
    });
    let Some((w, diff)) = first_diff.into_iter().flatten().next() else {
        let status = if random.is_some() { Status::EquivalentSampled } else { Status::EquivalentExhaustive };
        return Ok(Verdict { status, counterexample: None, vectors_checked: vectors });
    };
    let lane = diff.trailing_zeros();
    let words = words_for(w);
    let cex: BTreeMap<String, bool> = names.iter().zip(&words).map(|(n, v)| (n.clone(), (v >> lane) & 1 == 1)).collect();
    let assignment: HashMap<String, bool> = cex.iter().map(|(k, &v)| (k.clone(), v)).collect();
    let sa: HashMap<String, bool> = a.simulate(&assignment)?.into_iter().collect();
    let sb: HashMap<String, bool> = b.simulate(&assignment)?.into_iter().collect();
    if sa == sb {
        return Err(RedactError::UnconfirmedCounterexample);
    }
    let directed_words = directed.len().div_ceil(64) as u64;
    let checked = if random.is_some() && w < directed_words {
        w * 64 + lane as u64 + 1
    } else if random.is_some() {
        directed.len() as u64 + (w - directed_words) * 64 + lane as u64 + 1
    } else {
        w * 64 + lane as u64 + 1
    };
    Ok(Verdict { status: Status::NotEquivalent, counterexample: Some(cex), vectors_checked: checked })
}

/// Packs assignments 64 to a word, padding the last word by repeating the
/// first vector so that no lane holds an unrequested pattern.
fn pack_directed(names: &[String], directed: &[BTreeMap<String, bool>]) -> Result<Vec<Vec<u64>>, RedactError> {
    let mut words = Vec::with_capacity(directed.len().div_ceil(64));
    for chunk in directed.chunks(64) {
        let mut w = vec![0u64; names.len()];
        for lane in 0..64 {
            let v = chunk.get(lane).unwrap_or(&chunk[0]);
            for (i, name) in names.iter().enumerate() {
                let bit = *v
                    .get(name)
                    .ok_or_else(|| RedactError::InterfaceMismatch(format!("directed vector lacks input `{name}`")))?;
                w[i] |= (bit as u64) << lane;
            }
        }
        words.push(w);
    }
    Ok(words)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labels::{NodeClass, Scheme};
    use crate::locking::{lock, LockConfig};
    use crate::netlist::{generate, parse_bench, rewrite_augment, RuleSet};

    fn design(inputs: usize, seed: u64) -> Netlist {
        generate::random_netlist("d", &generate::RandomCircuit { inputs, key_inputs: 0, gates: 90, max_fanin: 3, seed })
    }

    #[test]
    fn self_and_rewrite_are_equivalent() {
        let n = design(12, 1);
        let v = check_equivalence(&n, &n, Budget::Exhaustive).unwrap();
        assert_eq!(v.status, Status::EquivalentExhaustive);
        assert_eq!(v.vectors_checked, 1 << 12);
        let r = rewrite_augment(&n, &RuleSet::all(), 3);
        assert!(check_equivalence(&n, &r, Budget::Exhaustive).unwrap().is_equivalent());
        let s = check_equivalence(&n, &r, Budget::Random { vectors: 1000, seed: 2 }).unwrap();
        assert_eq!((s.status, s.vectors_checked), (Status::EquivalentSampled, 1000));
    }

    #[test]
    fn xor_vs_or_counterexample() {
        let x = parse_bench("INPUT(a)\nINPUT(b)\nOUTPUT(y)\ny = XOR(a, b)").unwrap();
        let o = parse_bench("INPUT(b)\nINPUT(a)\nOUTPUT(y)\ny = OR(a, b)").unwrap();
        let v = check_equivalence(&x, &o, Budget::Exhaustive).unwrap();
        assert_eq!(v.status, Status::NotEquivalent);
        let cex = v.counterexample.unwrap();
        assert_eq!(cex, BTreeMap::from([("a".to_string(), true), ("b".to_string(), true)]));
        let back = check_equivalence(&o, &x, Budget::Exhaustive).unwrap();
        assert_eq!(back.counterexample.unwrap(), cex);
    }

    #[test]
    fn directed_vectors_find_a_single_pattern_difference() {
        let mut a = String::new();
        let mut b = String::new();
        for i in 0..30 {
            a += &format!("INPUT(x{i})\n");
        }
        b += &a;
        let all: Vec<String> = (0..30).map(|i| format!("x{i}")).collect();
        a += &format!("OUTPUT(y)\ny = AND({})\n", all.join(", "));
        b += "OUTPUT(y)\nn0 = NOT(x0)\ny = AND(x0, n0)\n";
        let (a, b) = (parse_bench(&a).unwrap(), parse_bench(&b).unwrap());
        let budget = Budget::Random { vectors: 1000, seed: 1 };
        assert!(check_equivalence(&a, &b, budget).unwrap().is_equivalent());
        let ones: BTreeMap<String, bool> = all.iter().map(|n| (n.clone(), true)).collect();
        let mut zeros = ones.clone();
        zeros.insert("x3".into(), false);
        let v = check_equivalence_with(&a, &b, budget, &[zeros.clone(), ones.clone()]).unwrap();
        assert_eq!((v.status, v.vectors_checked), (Status::NotEquivalent, 2));
        assert_eq!(v.counterexample.unwrap(), ones);
        let v = check_equivalence_with(&a, &a, budget, &[zeros]).unwrap();
        assert_eq!((v.status, v.vectors_checked), (Status::EquivalentSampled, 1001));
    }

    #[test]
    fn symmetric_under_random_budget() {
        let a = design(30, 3);
        let mut b = a.to_builder();
        let last = b.gates.iter().rposition(|g| g.fanin.len() >= 2).unwrap();
        b.gates[last].gtype = if b.gates[last].gtype == GateType::And { GateType::Nand } else { GateType::And };
        let b = b.build().unwrap();
        let budget = Budget::Random { vectors: 5000, seed: 7 };
        assert_eq!(check_equivalence(&a, &b, budget).unwrap(), check_equivalence(&b, &a, budget).unwrap());
        assert_eq!(Budget::auto(30, 1), Budget::Random { vectors: DEFAULT_RANDOM_VECTORS, seed: 1 });
        assert_eq!(Budget::auto(24, 1), Budget::Exhaustive);
        assert_eq!(check_equivalence(&a, &a, Budget::Exhaustive).unwrap_err(), RedactError::TooManyInputs(30));
    }

    #[test]
    fn interface_mismatch() {
        let a = parse_bench("INPUT(a)\nINPUT(b)\nOUTPUT(y)\ny = XOR(a, b)").unwrap();
        let b = parse_bench("INPUT(a)\nINPUT(c)\nOUTPUT(y)\ny = XOR(a, c)").unwrap();
        let c = parse_bench("INPUT(a)\nINPUT(b)\nOUTPUT(z)\nz = XOR(a, b)").unwrap();
        assert!(matches!(check_equivalence(&a, &b, Budget::Exhaustive), Err(RedactError::InterfaceMismatch(_))));
        assert!(matches!(check_equivalence(&a, &c, Budget::Exhaustive), Err(RedactError::InterfaceMismatch(_))));
    }

    #[test]
    fn oracle_round_trip_every_scheme() {
        for seed in 0..6 {
            let n = design(16, seed);
            for (scheme, k, h, splices) in
                [(Scheme::AntiSat, 8, 0, 1), (Scheme::AntiSat, 16, 0, 1), (Scheme::TtLock, 8, 0, 2), (Scheme::SfllHd, 12, 3, 2)]
            {
                let mut cfg = LockConfig::new(scheme, k, h, seed);
                cfg.perturb_rewrite_passes = (seed % 2) as usize;
                let l = lock(&n, &cfg).unwrap();
                let integ = find_integration_gates(&l.netlist, &l.labels).unwrap();
                assert_eq!(integ.len(), splices, "{scheme} seed {seed}");
                let names: Vec<&str> = integ.iter().map(|g| l.netlist.gates()[g.0].name.as_str()).collect();
                let mut expect: Vec<&str> = l.meta.integration_gates.iter().map(String::as_str).collect();
                let mut got = names.clone();
                expect.sort_unstable();
                got.sort_unstable();
                assert_eq!(got, expect);
                let r = remove_protection(&l.netlist, &l.labels).unwrap();
                assert!(r.netlist.key_inputs().is_empty());
                let v = check_equivalence(&r.netlist, &n, Budget::Exhaustive).unwrap();
                assert_eq!(v.status, Status::EquivalentExhaustive, "{scheme} k {k} seed {seed}");
            }
        }
    }

    #[test]
    fn empty_protection_is_identity_and_all_design_has_no_splice() {
        let n = design(10, 4);
        let labels = Labels::from_classes(&n, &vec![NodeClass::Design; n.num_gates()]);
        assert_eq!(remove_protection(&n, &labels).unwrap().netlist, n);
        let l = lock(&n, &LockConfig::new(Scheme::AntiSat, 8, 0, 1)).unwrap();
        let all = Labels::from_classes(&l.netlist, &vec![NodeClass::Design; l.netlist.num_gates()]);
        assert_eq!(find_integration_gates(&l.netlist, &all).unwrap_err(), RedactError::NoIntegrationGates);
    }

    #[test]
    fn leaked_key_logic_is_reported() {
        let n = design(12, 5);
        let l = lock(&n, &LockConfig::new(Scheme::TtLock, 8, 0, 5)).unwrap();
        // Calling the restore splice DESIGN leaves the restore unit attached.
        let mut p = l.labels.clone();
        p.insert(l.meta.target.clone(), NodeClass::Design);
        let err = remove_protection(&l.netlist, &p).unwrap_err();
        match err {
            RedactError::ResidualKeys { paths } => assert!(paths.iter().all(|p| p.starts_with("keyinput"))),
            other => panic!("{other:?}"),
        }
    }
}
