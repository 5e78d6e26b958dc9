//! Quick oracle checks run by `locklab selfcheck`.
//!
//! Each check compares a library routine against an independent brute-force
//! computation on small inputs, so that a broken build or platform shows up
//! before a long experiment.

use std::collections::{HashMap, HashSet, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::benchmarks;
use crate::gnn::{init_params, loss_and_grads, Dims, BLOCK_NAMES};
use crate::graph::{extract_all, Csr};
use crate::gnn::Matrix;
use crate::labels::Scheme;
use crate::locking::{apply_key, lock, LockConfig};
use crate::netlist::generate::{random_netlist, RandomCircuit};
use crate::netlist::{constant_propagate, remove_dead_logic, GateType, Netlist};
use crate::postprocess::rectify;
use crate::redact::{check_equivalence, remove_protection, Budget};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, r: Result<String, String>) -> Check {
    match r {
        Ok(detail) => Check { name, passed: true, detail },
        Err(detail) => Check { name, passed: false, detail },
    }
}

pub fn run_all() -> Vec<Check> {
    vec![
        check("lock/unlock round trip", round_trip()),
        check("protected-pattern census", census()),
        check("two-hop features", features()),
        check("gradients", gradients()),
        check("rectification fixpoint", rectification()),
    ]
}

fn small(name: &str) -> Result<Netlist, String> {
    benchmarks::load(name).ok_or_else(|| format!("missing {name}"))?.map_err(|e| e.to_string())
}

fn same(a: &Netlist, b: &Netlist) -> Result<bool, String> {
    check_equivalence(a, b, Budget::Exhaustive).map(|v| v.is_equivalent()).map_err(|e| e.to_string())
}

fn round_trip() -> Result<String, String> {
    let mut runs = 0;
    for name in benchmarks::SMALL {
        let n = small(name)?;
        for (scheme, h) in [(Scheme::AntiSat, 0), (Scheme::TtLock, 0), (Scheme::SfllHd, 2)] {
            let l = lock(&n, &LockConfig::new(scheme, 8, h, 7)).map_err(|e| e.to_string())?;
            let unlocked = apply_key(&l.netlist, &l.key).map_err(|e| e.to_string())?;
            let removed = remove_protection(&l.netlist, &l.labels).map_err(|e| e.to_string())?;
            if !same(&n, &unlocked)? || !same(&n, &removed.netlist)? {
                return Err(format!("{name} {scheme}"));
            }
            runs += 1;
        }
    }
    Ok(format!("{runs} instances"))
}

fn binom(n: u64, k: u64) -> u64 {
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

fn census() -> Result<String, String> {
    let n = small("rc16_a")?;
    let ni = n.primary_inputs().len();
    for h in 0..=4 {
        let l = lock(&n, &LockConfig::new(Scheme::SfllHd, 8, h, 3)).map_err(|e| e.to_string())?;
        let pins = HashMap::from([(l.meta.protection_nets[1].clone(), false)]);
        let stripped = constant_propagate(&l.netlist, &pins).map_err(|e| e.to_string())?;
        let (stripped, _) = remove_dead_logic(&stripped);
        let stripped = stripped.with_primary_inputs(n.primary_inputs()).map_err(|e| e.to_string())?;
        let mut diff = 0u64;
        for v in 0..1u64 << ni {
            let bits: Vec<bool> = (0..ni).map(|i| v >> i & 1 == 1).collect();
            if n.eval(&bits, &[]) != stripped.eval(&bits, &[]) {
                diff += 1;
            }
        }
        let want = binom(8, h as u64) << (ni - 8);
        if diff != want {
            return Err(format!("h={h}: {diff} differing patterns, expected {want}"));
        }
    }
    Ok("h = 0..4 on 8 protected inputs".into())
}

fn bfs_counts(n: &Netlist) -> Vec<[u32; 8]> {
    let mut adj: Vec<HashSet<usize>> = vec![HashSet::new(); n.num_gates()];
    let index: HashMap<&str, usize> = n.gates().iter().enumerate().map(|(i, g)| (g.name.as_str(), i)).collect();
    for (i, g) in n.gates().iter().enumerate() {
        for &f in &g.fanin {
            if let Some(&j) = index.get(n.signal_name(f)) {
                if j != i {
                    adj[i].insert(j);
                    adj[j].insert(i);
                }
            }
        }
    }
    (0..n.num_gates())
        .map(|s| {
            let mut dist = HashMap::from([(s, 0usize)]);
            let mut q = VecDeque::from([s]);
            while let Some(u) = q.pop_front() {
                if dist[&u] < 2 {
                    for &v in &adj[u] {
                        if !dist.contains_key(&v) {
                            dist.insert(v, dist[&u] + 1);
                            q.push_back(v);
                        }
                    }
                }
            }
            let mut c = [0u32; 8];
            for (&v, &d) in &dist {
                if d > 0 {
                    let t = n.gates()[v].gtype;
                    if let Some(k) = GateType::BENCH.iter().position(|&b| b == t) {
                        c[k] += 1;
                    }
                }
            }
            c
        })
        .collect()
}

fn features() -> Result<String, String> {
    for seed in 0..10 {
        let n = random_netlist("f", &RandomCircuit { inputs: 8, key_inputs: 3, gates: 120, max_fanin: 4, seed });
        for ((g, f), o) in n.gates().iter().zip(extract_all(&n)).zip(bfs_counts(&n)) {
            if f.neigh_counts != o {
                return Err(format!("seed {seed} gate {}", g.name));
            }
        }
    }
    Ok("10 netlists".into())
}

fn gradients() -> Result<String, String> {
    let adj = Csr::from_lists(&[vec![1, 2], vec![0, 2, 3], vec![0, 1], vec![1], vec![]]);
    let targets = [(0u32, 0usize), (1, 1), (3, 2), (4, 1)];
    let mut worst: f64 = 0.0;
    for seed in 0..2u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Matrix::from_vec(5, 4, (0..20).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let mut p = init_params(Dims { input: 4, hidden: 5, classes: 3 }, seed).map_err(|e| e.to_string())?;
        for b in [1, 3, 5, 7] {
            p.blocks_mut()[b].data.iter_mut().for_each(|v| *v = rng.gen_range(-0.1..0.1));
        }
        let loss = |p: &crate::gnn::ModelParams| loss_and_grads(p, &adj, &x, &targets, None, None).map(|r| r.0);
        let (_, g) = loss_and_grads(&p, &adj, &x, &targets, None, None).map_err(|e| e.to_string())?;
        let eps = 1e-5;
        for b in 0..BLOCK_NAMES.len() {
            let (mut num2, mut diff2, mut ana2) = (0.0, 0.0, 0.0);
            for j in 0..p.blocks()[b].data.len() {
                let orig = p.blocks()[b].data[j];
                p.blocks_mut()[b].data[j] = orig + eps;
                let up = loss(&p).map_err(|e| e.to_string())?;
                p.blocks_mut()[b].data[j] = orig - eps;
                let down = loss(&p).map_err(|e| e.to_string())?;
                p.blocks_mut()[b].data[j] = orig;
                let num = (up - down) / (2.0 * eps);
                let ana = g.blocks()[b].data[j];
                num2 += num * num;
                ana2 += ana * ana;
                diff2 += (num - ana) * (num - ana);
            }
            let scale = num2.sqrt() + ana2.sqrt();
            let rel = if scale == 0.0 { 0.0 } else { diff2.sqrt() / scale };
            worst = worst.max(rel);
            if rel > 1e-4 {
                return Err(format!("seed {seed} block {}: relative error {rel:.2e}", BLOCK_NAMES[b]));
            }
        }
    }
    Ok(format!("worst relative error {worst:.1e}"))
}

fn rectification() -> Result<String, String> {
    let mut runs = 0;
    for name in benchmarks::SMALL {
        let n = small(name)?;
        for (scheme, h) in [(Scheme::AntiSat, 0), (Scheme::SfllHd, 1)] {
            let l = lock(&n, &LockConfig::new(scheme, 8, h, 11)).map_err(|e| e.to_string())?;
            let r = rectify(&l.netlist, scheme, &l.labels).map_err(|e| e.to_string())?;
            if r.labels != l.labels {
                return Err(format!("{name} {scheme}: oracle labels moved"));
            }
            runs += 1;
        }
    }
    Ok(format!("{runs} instances"))
}

#[cfg(test)]
mod tests {
    #[test]
    fn every_check_passes() {
        for c in super::run_all() {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }
}
