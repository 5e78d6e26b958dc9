//! Seeded random combinational circuits.
//!
//! Used for property tests and for the vendored desk-scale benchmark set.
//! Every input is used and every gate either has a load or drives an output,
//! so generated circuits contain no dead logic.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{GateSpec, GateType, Netlist, NetlistBuilder, DEFAULT_KEY_PREFIX};

#[derive(Debug, Clone, Copy)]
pub struct RandomCircuit {
    pub inputs: usize,
    pub key_inputs: usize,
    pub gates: usize,
    pub max_fanin: usize,
    pub seed: u64,
}

const TYPE_WEIGHTS: [(GateType, u32); 8] = [
    (GateType::Nand, 20),
    (GateType::And, 15),
    (GateType::Nor, 12),
    (GateType::Or, 12),
    (GateType::Not, 14),
    (GateType::Xor, 8),
    (GateType::Xnor, 5),
    (GateType::Buf, 3),
];

fn pick_type(rng: &mut ChaCha8Rng) -> GateType {
    let total: u32 = TYPE_WEIGHTS.iter().map(|w| w.1).sum();
    let mut r = rng.gen_range(0..total);
    for &(t, w) in &TYPE_WEIGHTS {
        if r < w {
            return t;
        }
        r -= w;
    }
    GateType::Nand
}

pub fn random_netlist(name: &str, spec: &RandomCircuit) -> Netlist {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut b = NetlistBuilder::new(name);
    let mut pool: Vec<String> = Vec::new();
    // Signals without a load yet, oldest first.
    let mut unloaded: Vec<String> = Vec::new();
    for i in 0..spec.inputs {
        let n = format!("x{i}");
        b.input(n.clone());
        pool.push(n.clone());
        unloaded.push(n);
    }
    for i in 0..spec.key_inputs {
        let n = format!("{DEFAULT_KEY_PREFIX}{i}");
        b.key_input(n.clone());
        pool.push(n.clone());
        unloaded.push(n);
    }
    assert!(!pool.is_empty(), "random circuit needs at least one input");
    let max_fanin = spec.max_fanin.max(2);

    for gi in 0..spec.gates {
        let mut gtype = pick_type(&mut rng);
        if pool.len() < 2 {
            gtype = GateType::Not;
        }
        let arity = if matches!(gtype, GateType::Not | GateType::Buf) {
            1
        } else {
            let r: f64 = rng.gen();
            let a = if r < 0.7 { 2 } else if r < 0.9 { 3 } else { 4 };
            a.min(max_fanin).min(pool.len())
        };
        let mut fanin: Vec<String> = Vec::with_capacity(arity);
        let mut guard = 0;
        while fanin.len() < arity && guard < 64 {
            guard += 1;
            let pick = if !unloaded.is_empty() && rng.gen_bool(0.6) {
                let idx = rng.gen_range(0..unloaded.len().min(4));
                unloaded[idx].clone()
            } else {
                let window = (pool.len() / 3).max(8).min(pool.len());
                let idx = pool.len() - 1 - rng.gen_range(0..window);
                pool[idx].clone()
            };
            if !fanin.contains(&pick) {
                fanin.push(pick);
            }
        }
        if fanin.len() < arity {
            // Degenerate pools: fall back to a unary gate.
            gtype = if rng.gen_bool(0.5) { GateType::Not } else { GateType::Buf };
            fanin.truncate(1);
        }
        for f in &fanin {
            if let Some(p) = unloaded.iter().position(|u| u == f) {
                unloaded.remove(p);
            }
        }
        let gname = format!("n{gi}");
        b.gate(GateSpec::new(gname.clone(), gtype, fanin));
        pool.push(gname.clone());
        unloaded.push(gname);
    }

    // Inputs still unused get folded into an extra output gate each.
    let leftover_inputs: Vec<String> =
        unloaded.iter().filter(|u| !u.starts_with('n')).cloned().collect();
    for (extra, inp) in leftover_inputs.into_iter().enumerate() {
        unloaded.retain(|u| u != &inp);
        let partner = pool.iter().filter(|p| p.starts_with('n')).collect::<Vec<_>>().choose(&mut rng).map(|s| s.to_string());
        let gname = format!("e{extra}");
        match partner {
            Some(p) => {
                unloaded.retain(|u| u != &p);
                b.gate(GateSpec::new(gname.clone(), GateType::Xor, vec![inp, p]));
            }
            None => {
                b.gate(GateSpec::new(gname.clone(), GateType::Buf, vec![inp]));
            }
        }
        unloaded.push(gname);
    }
    for u in &unloaded {
        b.output(u.clone());
    }
    b.build().expect("generated circuit is valid by construction")
}
