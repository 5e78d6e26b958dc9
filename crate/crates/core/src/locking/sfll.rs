use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::hd::{build_hd_checker, HdKey};
use super::{
    choose_inputs, key_names, label_all, splice_xor, LockConfig, LockError, LockMeta, LockedInstance, SecretKey,
    TargetPolicy, LOCK_PREFIX,
};
use crate::labels::{Labels, NodeClass, Scheme};
use crate::netlist::{rewrite_augment_traced, ConeTable, GateType, NameGen, Netlist, RuleSet, Signal};

/// SFLL-HD^h: a key-hard-coded perturb unit strips the protected output on
/// every cube pattern at distance `h` from the key, and a key-input-driven
/// restore unit flips it back.
pub fn lock_sfll_hd(n: &Netlist, k: usize, h: usize, seed: u64) -> Result<LockedInstance, LockError> {
    lock_with(n, &LockConfig::new(Scheme::SfllHd, k, h, seed))
}

/// TTLock, i.e. SFLL-HD with `h = 0`.
pub fn lock_ttlock(n: &Netlist, k: usize, seed: u64) -> Result<LockedInstance, LockError> {
    lock_with(n, &LockConfig::new(Scheme::TtLock, k, 0, seed))
}

pub(super) fn lock_with(n: &Netlist, cfg: &LockConfig) -> Result<LockedInstance, LockError> {
    let (k, h) = (cfg.key_size, cfg.h);
    if k == 0 {
        return Err(LockError::ZeroKeySize);
    }
    if h > k {
        return Err(LockError::HdOutOfRange { h, k });
    }
    if !n.key_inputs().is_empty() {
        return Err(LockError::AlreadyLocked);
    }
    if n.primary_inputs().len() < k {
        return Err(LockError::TooFewInputs { needed: k, available: n.primary_inputs().len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    // Target output first, so the protected cube can come from its support.
    let cones = ConeTable::new(n);
    let support = |name: &str| -> Vec<String> {
        let g = n.gate_by_name(name).expect("output driven by a gate");
        cones.pis(g).ones().map(|i| n.primary_inputs()[i].clone()).collect()
    };
    let gate_outputs: Vec<&str> = n
        .primary_outputs()
        .iter()
        .filter(|&&s| matches!(s, Signal::Gate(_))).map(|&s| n.signal_name(s))
        .collect();
    let target = match &cfg.target {
        TargetPolicy::Explicit(t) => {
            if !gate_outputs.contains(&t.as_str()) {
                return Err(LockError::UnknownTarget(t.clone()));
            }
            t.clone()
        }
        TargetPolicy::Random => {
            let wide: Vec<&str> = gate_outputs.iter().copied().filter(|o| support(o).len() >= k).collect();
            if wide.is_empty() {
                let best = gate_outputs.iter().map(|o| support(o).len()).max().ok_or(LockError::NoTarget)?;
                let widest: Vec<&str> =
                    gate_outputs.iter().copied().filter(|o| support(o).len() == best).collect();
                widest.choose(&mut rng).ok_or(LockError::NoTarget)?.to_string()
            } else {
                wide.choose(&mut rng).ok_or(LockError::NoTarget)?.to_string()
            }
        }
    };
    let xs = choose_inputs(n, k, &cfg.inputs, &support(&target), &mut rng)?;
    let bits: Vec<bool> = (0..k).map(|_| rng.gen()).collect();
    let kis = key_names(k);

    let mut names = NameGen::new(n.names().chain(kis.iter().map(String::as_str)), LOCK_PREFIX);
    let p_net = names.fresh();
    let perturb = build_hd_checker(&xs, h, HdKey::Hard(&bits), &p_net, &mut names)?;
    let r_net = names.fresh();
    let restore = build_hd_checker(&xs, h, HdKey::Inputs(&kis), &r_net, &mut names)?;

    let mut b = n.to_builder();
    for ki in &kis {
        b.key_input(ki.clone());
    }
    let mut protection: HashMap<String, NodeClass> = HashMap::new();
    for g in perturb.gates {
        protection.insert(g.name.clone(), NodeClass::Perturb);
        b.gate(g);
    }
    for g in restore.gates {
        protection.insert(g.name.clone(), NodeClass::Restore);
        b.gate(g);
    }
    // y = (y_orig ^ P) ^ R, keeping the output name.
    let strip = names.fresh();
    let (_, orig) = splice_xor(&mut b, &target, &p_net, &mut names);
    for g in &mut b.gates {
        if g.name == target {
            g.name = strip.clone();
        }
    }
    b.gate(crate::netlist::GateSpec::new(target.clone(), GateType::Xor, vec![strip.clone(), r_net.clone()]));
    protection.insert(strip.clone(), NodeClass::Perturb);
    protection.insert(target.clone(), NodeClass::Restore);
    let mut netlist = b.build()?;
    let mut labels = label_all(&netlist, &protection);
    debug_assert_eq!(labels.get(&orig), Some(NodeClass::Design));

    for pass in 0..cfg.perturb_rewrite_passes {
        let frozen = labels
            .iter()
            .filter(|&(_, c)| c != NodeClass::Perturb)
            .map(|(g, _)| g.to_string())
            .chain([p_net.clone(), strip.clone()]);
        let rules = RuleSet::all().freeze(frozen);
        let r = rewrite_augment_traced(&netlist, &rules, cfg.seed ^ (0x9e37_79b9 + pass as u64));
        let mut next = Labels::new();
        for g in r.netlist.gates() {
            let c = labels.get(&r.origin[&g.name]).expect("origin is an old gate");
            next.insert(g.name.clone(), c);
        }
        netlist = r.netlist;
        labels = next;
    }

    Ok(LockedInstance {
        labels,
        key: SecretKey { bits },
        meta: LockMeta {
            design: n.name().to_string(),
            scheme: cfg.scheme,
            key_size: k,
            h,
            seed: cfg.seed,
            protected_inputs: xs,
            target: target.clone(),
            key_inputs: kis,
            integration_gates: vec![strip, target],
            protection_nets: vec![p_net, r_net],
        },
        netlist,
    })
}
