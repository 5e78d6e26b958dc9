//! Invariants over randomly generated circuits and lock configurations.

use std::collections::{HashMap, HashSet};

use proptest::prelude::*;

use locklab::graph::encode;
use locklab::labels::{Labels, NodeClass, Scheme};
use locklab::locking::{apply_key, lock, LockConfig};
use locklab::netlist::generate::{random_netlist, RandomCircuit};
use locklab::netlist::{rewrite_augment, Netlist, RuleSet};
use locklab::par;
use locklab::postprocess::rectify;
use locklab::redact::{check_equivalence, remove_protection, Budget};

/// Truth table over every primary-input pattern (no key inputs).
fn truth_table(n: &Netlist) -> Vec<Vec<bool>> {
    let ni = n.primary_inputs().len();
    (0..1u32 << ni)
        .map(|v| {
            let bits: Vec<bool> = (0..ni).map(|i| v >> i & 1 == 1).collect();
            n.eval(&bits, &[])
        })
        .collect()
}

fn circuit(seed: u64, inputs: usize, gates: usize) -> Netlist {
    random_netlist("p", &RandomCircuit { inputs, key_inputs: 0, gates, max_fanin: 3, seed })
}

fn scheme_strategy() -> impl Strategy<Value = (Scheme, usize)> {
    prop_oneof![
        Just((Scheme::AntiSat, 0)),
        Just((Scheme::TtLock, 0)),
        (0usize..=3).prop_map(|h| (Scheme::SfllHd, h)),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn rewriting_preserves_function(seed in any::<u64>(), inputs in 3usize..10, gates in 5usize..150) {
        let n = circuit(seed, inputs, gates);
        let r = rewrite_augment(&n, &RuleSet::all(), seed ^ 0x55);
        prop_assert_eq!(truth_table(&n), truth_table(&r));
    }

    #[test]
    fn correct_key_and_oracle_removal_restore_function(
        seed in any::<u64>(),
        gates in 20usize..150,
        (scheme, h) in scheme_strategy(),
        half_k in 2usize..5,
    ) {
        let k = 2 * half_k;
        let n = circuit(seed, 10, gates);
        let l = lock(&n, &LockConfig::new(scheme, k, h.min(k), seed)).unwrap();
        prop_assert_eq!(l.netlist.key_inputs().len(), k);
        let want = truth_table(&n);
        prop_assert_eq!(truth_table(&apply_key(&l.netlist, &l.key).unwrap()), want.clone());
        let removed = remove_protection(&l.netlist, &l.labels).unwrap();
        prop_assert!(removed.netlist.key_inputs().is_empty());
        prop_assert!(!removed.integration_gates.is_empty());
        prop_assert_eq!(truth_table(&removed.netlist.with_primary_inputs(n.primary_inputs()).unwrap()), want);
    }

    #[test]
    fn labels_cover_every_gate_and_survive_csv(seed in any::<u64>(), (scheme, h) in scheme_strategy()) {
        let n = circuit(seed, 12, 80);
        let l = lock(&n, &LockConfig::new(scheme, 8, h, seed)).unwrap();
        let classes = l.labels.for_netlist(&l.netlist).unwrap();
        prop_assert_eq!(classes.len(), l.netlist.num_gates());
        prop_assert!(classes.iter().all(|c| scheme.classes().contains(c)));
        let back = Labels::from_csv(&l.labels.to_csv(&l.netlist).unwrap()).unwrap();
        prop_assert_eq!(back, l.labels);
    }

    #[test]
    fn rectification_is_idempotent(
        seed in any::<u64>(),
        (scheme, h) in scheme_strategy(),
        flips in proptest::collection::vec((any::<prop::sample::Index>(), any::<prop::sample::Index>()), 0..6),
    ) {
        let n = circuit(seed, 12, 80);
        let l = lock(&n, &LockConfig::new(scheme, 8, h, seed)).unwrap();
        let mut preds = l.labels.clone();
        for (g, c) in &flips {
            let gate = &l.netlist.gates()[g.index(l.netlist.num_gates())].name;
            preds.insert(gate.clone(), *c.get(scheme.classes()));
        }
        if let Ok(once) = rectify(&l.netlist, scheme, &preds) {
            let twice = rectify(&l.netlist, scheme, &once.labels).unwrap();
            prop_assert_eq!(&twice.labels, &once.labels);
            prop_assert!(twice.log.is_empty());
        }
        // Oracle labels are already a fixpoint.
        prop_assert_eq!(rectify(&l.netlist, scheme, &l.labels).unwrap().labels, l.labels);
    }

    #[test]
    fn encoded_graph_is_simple_and_undirected(seed in any::<u64>(), gates in 1usize..200) {
        let n = random_netlist("g", &RandomCircuit { inputs: 6, key_inputs: 3, gates, max_fanin: 4, seed });
        let g = encode(&n, None).unwrap();
        prop_assert_eq!(g.node_names.len(), n.num_gates());
        prop_assert_eq!(g.features.len(), n.num_gates() * g.feature_dim);
        let set: HashSet<(u32, u32)> = g.edges.iter().copied().collect();
        prop_assert_eq!(set.len(), g.edges.len());
        prop_assert!(g.edges.iter().all(|&(u, v)| u < v));
        let index: HashMap<&str, u32> =
            n.gates().iter().enumerate().map(|(i, x)| (x.name.as_str(), i as u32)).collect();
        let mut want = HashSet::new();
        for (i, gate) in n.gates().iter().enumerate() {
            for &f in &gate.fanin {
                if let Some(&j) = index.get(n.signal_name(f)) {
                    if j != i as u32 {
                        want.insert((j.min(i as u32), j.max(i as u32)));
                    }
                }
            }
        }
        prop_assert_eq!(set, want);
    }

    #[test]
    fn sampled_verdict_is_thread_count_independent(seed in any::<u64>(), flip in any::<prop::sample::Index>()) {
        let n = random_netlist("e", &RandomCircuit { inputs: 30, key_inputs: 0, gates: 120, max_fanin: 3, seed });
        let l = lock(&n, &LockConfig::new(Scheme::SfllHd, 8, 1, seed)).unwrap();
        // Flip one protection label so removal may go wrong.
        let mut labels = l.labels.clone();
        let gate = &l.netlist.gates()[flip.index(l.netlist.num_gates())].name;
        let c = labels.get(gate).unwrap();
        labels.insert(gate.clone(), if c == NodeClass::Design { NodeClass::Perturb } else { NodeClass::Design });
        if let Ok(r) = remove_protection(&l.netlist, &labels) {
            let budget = Budget::Random { vectors: 1 << 14, seed };
            let one = par::with_jobs(Some(1), || check_equivalence(&n, &r.netlist, budget));
            let many = par::with_jobs(Some(4), || check_equivalence(&n, &r.netlist, budget));
            prop_assert_eq!(format!("{one:?}"), format!("{many:?}"));
        }
    }
}
