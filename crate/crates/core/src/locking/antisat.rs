use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::hd::Emitter;
use super::{
    choose_inputs, key_names, label_all, splice_xor, LockConfig, LockError, LockMeta, LockedInstance, SecretKey,
    TargetPolicy, LOCK_PREFIX,
};
use crate::labels::{NodeClass, Scheme};
use crate::netlist::{GateType, NameGen, Netlist};

/// Anti-SAT with `g` an AND tree: `Y = g(X ^ K1) & !g(X ^ K2)`, XORed into
/// one internal net. The correct key has `K1 == K2`.
pub fn lock_antisat(n: &Netlist, k: usize, seed: u64) -> Result<LockedInstance, LockError> {
    lock_with(n, &LockConfig::new(Scheme::AntiSat, k, 0, seed))
}

pub(super) fn lock_with(n: &Netlist, cfg: &LockConfig) -> Result<LockedInstance, LockError> {
    let k = cfg.key_size;
    if k == 0 {
        return Err(LockError::ZeroKeySize);
    }
    if k % 2 == 1 {
        return Err(LockError::OddKeySize(k));
    }
    if !n.key_inputs().is_empty() {
        return Err(LockError::AlreadyLocked);
    }
    let na = k / 2;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let xs = choose_inputs(n, na, &cfg.inputs, &[], &mut rng)?;
    let half: Vec<bool> = (0..na).map(|_| rng.gen()).collect();
    let bits: Vec<bool> = half.iter().chain(&half).copied().collect();
    let kis = key_names(k);

    let target = match &cfg.target {
        TargetPolicy::Explicit(t) => {
            n.gate_by_name(t).ok_or_else(|| LockError::UnknownTarget(t.clone()))?;
            t.clone()
        }
        TargetPolicy::Random => {
            let internal: Vec<&str> = n
                .gates()
                .iter()
                .filter(|g| !n.is_po(g.id) && !n.loads(g.id).is_empty())
                .map(|g| g.name.as_str())
                .collect();
            let pool: Vec<&str> = if internal.is_empty() {
                n.gates().iter().filter(|g| n.is_po(g.id)).map(|g| g.name.as_str()).collect()
            } else {
                internal
            };
            pool.choose(&mut rng).ok_or(LockError::NoTarget)?.to_string()
        }
    };

    let mut names = NameGen::new(n.names().chain(kis.iter().map(String::as_str)), LOCK_PREFIX);
    let mut e = Emitter { names: &mut names, gates: Vec::new() };
    let b1: Vec<String> =
        (0..na).map(|i| e.gate(GateType::Xor, vec![xs[i].clone(), kis[i].clone()], None)).collect();
    let b2: Vec<String> =
        (0..na).map(|i| e.gate(GateType::Xor, vec![xs[i].clone(), kis[na + i].clone()], None)).collect();
    let g1 = e.tree(GateType::And, &b1, None);
    let g2 = e.tree(GateType::And, &b2, None);
    let ng2 = e.gate(GateType::Not, vec![g2], None);
    let y = e.gate(GateType::And, vec![g1, ng2], None);
    let added = std::mem::take(&mut e.gates);

    let mut b = n.to_builder();
    for ki in &kis {
        b.key_input(ki.clone());
    }
    let mut protection: HashMap<String, NodeClass> = HashMap::new();
    for g in added {
        protection.insert(g.name.clone(), NodeClass::AntiSat);
        b.gate(g);
    }
    let (xor, _) = splice_xor(&mut b, &target, &y, &mut names);
    protection.insert(xor.clone(), NodeClass::AntiSat);
    let netlist = b.build()?;
    let labels = label_all(&netlist, &protection);
    Ok(LockedInstance {
        labels,
        key: SecretKey { bits },
        meta: LockMeta {
            design: n.name().to_string(),
            scheme: Scheme::AntiSat,
            key_size: k,
            h: 0,
            seed: cfg.seed,
            protected_inputs: xs,
            target,
            key_inputs: kis,
            integration_gates: vec![xor],
            protection_nets: vec![y],
        },
        netlist,
    })
}
