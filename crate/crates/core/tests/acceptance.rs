//! Acceptance suite. Every test prints one line of the form
//!
//! ```text
//! ACCEPTANCE <n> PASS|FAIL <criterion>: <measurements>
//! ```
//!
//! and then asserts the criterion at its stated tolerance. Run with
//! `cargo test --release --test acceptance -- --nocapture` to see the lines.
//! The tests hold a shared lock so that wall-clock limits are measured
//! without competing tests.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use locklab::benchmarks;
use locklab::gnn::{init_params, loss_and_grads, Dims, Matrix, BLOCK_NAMES};
use locklab::graph::{extract_all, Csr};
use locklab::labels::{Labels, Scheme};
use locklab::locking::{apply_key, lock, LockConfig, LockMeta, LockedInstance};
use locklab::netlist::generate::{random_netlist, RandomCircuit};
use locklab::netlist::{constant_propagate, parse_bench, remove_dead_logic, write_bench, Netlist};
use locklab::pipeline::{
    attack_stage, cmd_attack, cmd_gen_dataset, cmd_train, evaluate_stage, AccessLog, AttackReport, Census,
    ExperimentConfig, Layout,
};
use locklab::postprocess::rectify;
use locklab::redact::remove_protection;

static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> std::sync::MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

/// Written straight to stdout so the line shows even when output is captured.
fn report(n: u32, name: &str, pass: bool, detail: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "ACCEPTANCE {n} {} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    let _ = out.flush();
}

fn vendored(name: &str) -> Netlist {
    benchmarks::load(name).unwrap().unwrap()
}

// ---------------------------------------------------------------------------
// An evaluator written against bench text alone, sharing no code with the
// library's parser or simulators.

struct TextCircuit {
    inputs: Vec<String>,
    outputs: Vec<String>,
    gates: Vec<(String, String, Vec<String>)>,
    /// Gate type and fanin slots over `inputs ++ gates`.
    program: Vec<(String, Vec<usize>)>,
    output_slots: Vec<usize>,
}

impl TextCircuit {
    fn new(n: &Netlist) -> Self {
        let text = write_bench(n).unwrap();
        let (mut inputs, mut outputs, mut gates) = (vec![], vec![], vec![]);
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            if let Some(x) = line.strip_prefix("INPUT(").and_then(|r| r.strip_suffix(')')) {
                inputs.push(x.to_string());
            } else if let Some(x) = line.strip_prefix("OUTPUT(").and_then(|r| r.strip_suffix(')')) {
                outputs.push(x.to_string());
            } else {
                let (lhs, rhs) = line.split_once('=').unwrap();
                let (ty, args) = rhs.trim().split_once('(').unwrap();
                let args = args.trim_end_matches(')').split(',').map(|a| a.trim().to_string()).collect();
                gates.push((lhs.trim().to_string(), ty.trim().to_string(), args));
            }
        }
        let slot: HashMap<&str, usize> = inputs
            .iter()
            .map(String::as_str)
            .chain(gates.iter().map(|g: &(String, String, Vec<String>)| g.0.as_str()))
            .enumerate()
            .map(|(i, x)| (x, i))
            .collect();
        let program = gates.iter().map(|(_, t, a)| (t.clone(), a.iter().map(|x| slot[x.as_str()]).collect())).collect();
        let output_slots = outputs.iter().map(|o| slot[o.as_str()]).collect();
        TextCircuit { inputs, outputs, gates, program, output_slots }
    }

    /// 64 patterns at once; `inputs` maps every input name to its lanes.
    fn eval(&self, inputs: &HashMap<&str, u64>) -> BTreeMap<String, u64> {
        let mut v: Vec<u64> = self.inputs.iter().map(|x| inputs[x.as_str()]).collect();
        for (ty, args) in &self.program {
            let a = args.iter().map(|&i| v[i]);
            let out = match ty.as_str() {
                "AND" => a.fold(!0, |s, x| s & x),
                "NAND" => !a.fold(!0, |s, x| s & x),
                "OR" => a.fold(0, |s, x| s | x),
                "NOR" => !a.fold(0, |s, x| s | x),
                "XOR" => a.fold(0, |s, x| s ^ x),
                "XNOR" => !a.fold(0, |s, x| s ^ x),
                "NOT" => !v[args[0]],
                "BUF" => v[args[0]],
                other => panic!("gate type {other}"),
            };
            v.push(out);
        }
        self.outputs.iter().zip(&self.output_slots).map(|(o, &i)| (o.clone(), v[i])).collect()
    }
}

/// Input words for word `w` of an exhaustive sweep over `inputs`.
fn exhaustive_word(inputs: &[String], w: u64) -> (HashMap<&str, u64>, u64) {
    const LANE: [u64; 6] = [
        0xAAAA_AAAA_AAAA_AAAA,
        0xCCCC_CCCC_CCCC_CCCC,
        0xF0F0_F0F0_F0F0_F0F0,
        0xFF00_FF00_FF00_FF00,
        0xFFFF_0000_FFFF_0000,
        0xFFFF_FFFF_0000_0000,
    ];
    let ni = inputs.len();
    let map = inputs
        .iter()
        .enumerate()
        .map(|(i, x)| (x.as_str(), if i < 6 { LANE[i] } else if (w >> (i - 6)) & 1 == 1 { !0 } else { 0 }))
        .collect();
    let mask = if ni >= 6 { !0 } else { (1u64 << (1 << ni)) - 1 };
    (map, mask)
}

/// Number of input patterns on which the two circuits differ (exhaustive).
fn count_differences(a: &Netlist, b: &Netlist) -> u64 {
    let (ta, tb) = (TextCircuit::new(a), TextCircuit::new(b));
    let mut inputs = ta.inputs.clone();
    inputs.sort();
    let mut bi = tb.inputs.clone();
    bi.sort();
    assert_eq!(inputs, bi, "input sets differ");
    let words = if inputs.len() >= 6 { 1u64 << (inputs.len() - 6) } else { 1 };
    let mut diff = 0;
    for w in 0..words {
        let (map, mask) = exhaustive_word(&inputs, w);
        let (oa, ob) = (ta.eval(&map), tb.eval(&map));
        assert_eq!(oa.keys().collect::<Vec<_>>(), ob.keys().collect::<Vec<_>>(), "output sets differ");
        let d = oa.iter().fold(0u64, |acc, (k, v)| acc | (v ^ ob[k])) & mask;
        diff += d.count_ones() as u64;
    }
    diff
}

/// Sampled comparison: `random` words of random patterns plus the given
/// directed patterns. Returns the number of differing patterns seen.
fn sampled_differences(a: &Netlist, b: &Netlist, random: usize, directed: &[HashMap<String, bool>], seed: u64) -> u64 {
    let (ta, tb) = (TextCircuit::new(a), TextCircuit::new(b));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut diff = 0;
    let mut run = |map: HashMap<&str, u64>, mask: u64| {
        let (oa, ob) = (ta.eval(&map), tb.eval(&map));
        diff += (oa.iter().fold(0u64, |acc, (k, v)| acc | (v ^ ob[k])) & mask).count_ones() as u64;
    };
    for _ in 0..random {
        run(ta.inputs.iter().map(|x| (x.as_str(), rng.gen())).collect(), !0);
    }
    for chunk in directed.chunks(64) {
        let mut map: HashMap<&str, u64> = ta.inputs.iter().map(|x| (x.as_str(), 0)).collect();
        for (lane, v) in chunk.iter().enumerate() {
            for (x, w) in map.iter_mut() {
                *w |= (v[*x] as u64) << lane;
            }
        }
        run(map, if chunk.len() == 64 { !0 } else { (1u64 << chunk.len()) - 1 });
    }
    diff
}

/// Patterns at Hamming distance `h` from the key on the protected inputs.
fn protected_patterns(l: &LockedInstance, inputs: &[String], count: usize, seed: u64) -> Vec<HashMap<String, bool>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let mut v: HashMap<String, bool> = inputs.iter().map(|x| (x.clone(), rng.gen())).collect();
            let mut bits = l.key.bits.clone();
            for i in sample(&mut rng, bits.len(), l.meta.h) {
                bits[i] = !bits[i];
            }
            for (x, b) in l.meta.protected_inputs.iter().zip(bits) {
                v.insert(x.clone(), b);
            }
            v
        })
        .collect()
}

// ---------------------------------------------------------------------------

#[test]
fn criterion_1_round_trip() {
    let _g = serial();
    let start = Instant::now();
    let small = ["rc16_a", "rc16_b", "rc16_c"];
    let (mut exhaustive, mut sampled, mut failures) = (0, 0, Vec::new());
    let mut grid: Vec<(Scheme, usize, usize, &str)> = Vec::new();
    for k in [8, 16, 32] {
        for d in small {
            grid.push((Scheme::AntiSat, k, 0, d));
        }
        for h in [0, 2, 4] {
            let scheme = if h == 0 { Scheme::TtLock } else { Scheme::SfllHd };
            if k == 32 {
                // No circuit with at most 16 inputs has 32 inputs to protect.
                grid.push((scheme, k, h, "rc32_220"));
            } else {
                for d in small {
                    grid.push((scheme, k, h, d));
                }
            }
            if h == 0 {
                // SFLL-HD^0 itself, besides TTLock.
                grid.push((Scheme::SfllHd, k, 0, if k == 32 { "rc32_220" } else { "rc16_a" }));
            }
        }
    }
    for &(scheme, k, h, design) in &grid {
        let n = vendored(design);
        let need = if scheme == Scheme::AntiSat { k / 2 } else { k };
        if n.primary_inputs().len() < need {
            continue;
        }
        for seed in 0..3u64 {
            let l = lock(&n, &LockConfig::new(scheme, k, h, 1000 + seed)).unwrap();
            let unlocked = apply_key(&l.netlist, &l.key).unwrap();
            let removed = remove_protection(&l.netlist, &l.labels).unwrap().netlist;
            let tag = format!("{scheme} K={k} h={h} {design} seed {seed}");
            if n.primary_inputs().len() <= 16 {
                exhaustive += 1;
                for (what, m) in [("key", &unlocked), ("removal", &removed)] {
                    if count_differences(&n, m) != 0 {
                        failures.push(format!("{tag} ({what})"));
                    }
                }
            } else {
                sampled += 1;
                let directed = protected_patterns(&l, n.primary_inputs(), 4096, seed);
                for (what, m) in [("key", &unlocked), ("removal", &removed)] {
                    if sampled_differences(&n, m, 1 << 14, &directed, seed) != 0 {
                        failures.push(format!("{tag} ({what})"));
                    }
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = failures.is_empty() && exhaustive > 0 && secs < 300.0;
    report(
        1,
        "lock/unlock round trip",
        pass,
        &format!(
            "{exhaustive} instances exhaustive (<=16 inputs), {sampled} K=32 SFLL-family instances on 32 inputs \
             with 2^20 random + 4096 protected-pattern vectors, {} failures, {secs:.1}s",
            failures.len()
        ),
    );
    assert!(failures.is_empty(), "{failures:?}");
    assert!(secs < 300.0);
}

fn binom(n: u64, k: u64) -> u64 {
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

#[test]
fn criterion_2_protected_pattern_census() {
    let _g = serial();
    let mut lines = Vec::new();
    let mut pass = true;
    for design in ["rc16_a", "rc16_b", "rc16_c"] {
        let n = vendored(design);
        let ni = n.primary_inputs().len();
        for h in [0, 1, 2, 4] {
            let l = lock(&n, &LockConfig::new(Scheme::SfllHd, 8, h, 77)).unwrap();
            // Stripped circuit: the restore unit's output held at 0.
            let pins = HashMap::from([(l.meta.protection_nets[1].clone(), false)]);
            let s = constant_propagate(&l.netlist, &pins).unwrap();
            let s = remove_dead_logic(&s).0.with_primary_inputs(n.primary_inputs()).unwrap();
            assert!(s.key_inputs().is_empty());
            let diff = count_differences(&n, &s);
            // Each differing cube pattern differs under every completion.
            let cubes = diff >> (ni - 8);
            let ok = cubes == binom(8, h as u64) && diff == cubes << (ni - 8);
            pass &= ok;
            lines.push(format!("{design} h={h}: {cubes} cubes (C(8,{h})={})", binom(8, h as u64)));
        }
    }
    report(2, "protected-pattern census", pass, &lines.join("; "));
    assert!(pass);
}

/// Two-hop neighbourhood type counts and degrees straight from bench text.
/// in-degree, out-degree, to_pi, to_ki, to_po, neighbourhood type counts
type TextFeatures = (u32, u32, bool, bool, bool, [u32; 8]);

fn text_features(n: &Netlist) -> HashMap<String, TextFeatures> {
    let c = TextCircuit::new(n);
    let types = ["AND", "NAND", "OR", "NOR", "XOR", "XNOR", "NOT", "BUF"];
    let gate_type: HashMap<&str, &str> = c.gates.iter().map(|(g, t, _)| (g.as_str(), t.as_str())).collect();
    let kis: HashSet<&str> = n.key_inputs().iter().map(String::as_str).collect();
    let mut adj: HashMap<&str, HashSet<&str>> = HashMap::new();
    let mut loads: HashMap<&str, HashSet<&str>> = HashMap::new();
    for (g, _, args) in &c.gates {
        adj.entry(g).or_default();
        for a in args {
            if gate_type.contains_key(a.as_str()) && a != g {
                adj.entry(g).or_default().insert(a);
                adj.entry(a).or_default().insert(g);
            }
            if gate_type.contains_key(a.as_str()) {
                loads.entry(a).or_default().insert(g);
            }
        }
    }
    let mut out = HashMap::new();
    for (g, _, args) in &c.gates {
        let mut dist: HashMap<&str, u32> = HashMap::from([(g.as_str(), 0)]);
        let mut q = VecDeque::from([g.as_str()]);
        while let Some(u) = q.pop_front() {
            if dist[u] == 2 {
                continue;
            }
            for &v in &adj[u] {
                if !dist.contains_key(v) {
                    dist.insert(v, dist[u] + 1);
                    q.push_back(v);
                }
            }
        }
        let mut counts = [0u32; 8];
        for (v, d) in dist {
            if d > 0 {
                counts[types.iter().position(|t| *t == gate_type[v]).unwrap()] += 1;
            }
        }
        let pos = c.outputs.iter().filter(|o| *o == g).count() as u32;
        let fanout = loads.get(g.as_str()).map_or(0, |l| l.len() as u32) + pos;
        let to_ki = args.iter().any(|a| kis.contains(a.as_str()));
        let to_pi = args.iter().any(|a| !kis.contains(a.as_str()) && !gate_type.contains_key(a.as_str()));
        out.insert(g.clone(), (args.len() as u32, fanout, to_pi, to_ki, pos > 0, counts));
    }
    out
}

#[test]
fn criterion_3_feature_oracle() {
    let _g = serial();
    let mut nodes = 0;
    let mut mismatches = Vec::new();
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = RandomCircuit {
            inputs: rng.gen_range(2..40),
            key_inputs: rng.gen_range(0..12),
            gates: rng.gen_range(1..=500),
            max_fanin: rng.gen_range(2..6),
            seed,
        };
        let n = random_netlist("f", &spec);
        assert!(n.num_gates() <= 500 + spec.inputs + spec.key_inputs);
        let oracle = text_features(&n);
        for (g, f) in n.gates().iter().zip(extract_all(&n)) {
            nodes += 1;
            let got = (f.in_degree, f.out_degree, f.to_pi, f.to_ki, f.to_po, f.neigh_counts);
            if got != oracle[&g.name] {
                mismatches.push(format!("seed {seed} gate {}", g.name));
            }
        }
    }
    let pass = mismatches.is_empty();
    report(3, "feature extraction oracle", pass, &format!("100 netlists, {nodes} nodes, {} mismatches", mismatches.len()));
    assert!(pass, "{:?}", &mismatches[..mismatches.len().min(5)]);
}

#[test]
fn criterion_4_gradient_check() {
    let _g = serial();
    let adj = Csr::from_lists(&[vec![1, 4], vec![0, 2, 3], vec![1], vec![1, 5], vec![0], vec![3], vec![]]);
    let targets = [(0u32, 1usize), (1, 0), (2, 2), (3, 1), (5, 0), (6, 2)];
    let mut worst: f64 = 0.0;
    let mut pass = true;
    let seeds = 0..6u64;
    for seed in seeds.clone() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dims = Dims { input: 4, hidden: 7, classes: 3 };
        let x = Matrix::from_vec(7, 4, (0..28).map(|_| rng.gen_range(-2.0..2.0)).collect());
        let mut p = init_params(dims, seed).unwrap();
        for b in p.blocks_mut() {
            for v in &mut b.data {
                *v += rng.gen_range(-0.05..0.05);
            }
        }
        let weights = (seed % 2 == 1).then(|| vec![0.7, 1.6, 1.1]);
        let loss = |p: &locklab::gnn::ModelParams| loss_and_grads(p, &adj, &x, &targets, weights.as_deref(), None).unwrap();
        let grads = loss(&p).1;
        let eps = 1e-5;
        for b in 0..BLOCK_NAMES.len() {
            let (mut d2, mut n2, mut a2) = (0.0, 0.0, 0.0);
            for j in 0..p.blocks()[b].data.len() {
                let orig = p.blocks()[b].data[j];
                p.blocks_mut()[b].data[j] = orig + eps;
                let up = loss(&p).0;
                p.blocks_mut()[b].data[j] = orig - eps;
                let down = loss(&p).0;
                p.blocks_mut()[b].data[j] = orig;
                let num = (up - down) / (2.0 * eps);
                let ana = grads.blocks()[b].data[j];
                d2 += (num - ana) * (num - ana);
                n2 += num * num;
                a2 += ana * ana;
            }
            let scale = n2.sqrt() + a2.sqrt();
            let rel = if scale == 0.0 { 0.0 } else { d2.sqrt() / scale };
            worst = worst.max(rel);
            pass &= rel <= 1e-4;
        }
    }
    report(4, "gradient check", pass, &format!("6 seeds x 8 blocks, worst relative error {worst:.2e} (limit 1e-4)"));
    assert!(pass);
}

// ---------------------------------------------------------------------------
// Desk-scale attacks.

fn workspace_config(name: &str, out: &Path) -> ExperimentConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    let mut cfg = ExperimentConfig::load(&path).unwrap();
    cfg.output_dir = out.to_path_buf();
    cfg
}

fn run_pipeline(cfg: &ExperimentConfig) -> (AttackReport, Duration) {
    let start = Instant::now();
    cmd_gen_dataset(cfg).unwrap();
    cmd_train(cfg).unwrap();
    let r = cmd_attack(cfg).unwrap();
    (r, start.elapsed())
}

fn attack_detail(r: &AttackReport, t: Duration) -> String {
    let s = &r.summary;
    let worst = r.designs.iter().map(|d| d.post.accuracy).fold(1.0, f64::min);
    format!(
        "{} {} designs, {} instances: accuracy pre {:.3}% post {:.3}% (worst design {:.3}%), removal {}/{} = {:.1}%, {:.1} min",
        r.scheme,
        s.designs,
        s.instances,
        100.0 * s.accuracy_pre,
        100.0 * s.accuracy_post,
        100.0 * worst,
        s.equivalent,
        s.instances,
        100.0 * s.removal_success,
        t.as_secs_f64() / 60.0
    )
}

#[test]
fn criterion_5_antisat_attack() {
    let _g = serial();
    let dir = tempfile::tempdir().unwrap();
    let cfg = workspace_config("antisat.json", dir.path());
    assert!(cfg.resolve_benchmarks().unwrap().len() >= 5);
    let (r, t) = run_pipeline(&cfg);
    let s = &r.summary;
    let pass = s.accuracy_post >= 0.99 && s.removal_success >= 0.95 && t < Duration::from_secs(30 * 60);
    report(5, "Anti-SAT desk attack", pass, &attack_detail(&r, t));
    assert!(s.accuracy_post >= 0.99);
    assert!(s.removal_success >= 0.95);
    assert!(t < Duration::from_secs(30 * 60));
}

#[test]
fn criterion_6_ttlock_and_sfll_attack() {
    let _g = serial();
    let mut details = Vec::new();
    let mut pass = true;
    let mut total = Duration::ZERO;
    let mut results = Vec::new();
    for name in ["ttlock.json", "sfll_hd2.json"] {
        let dir = tempfile::tempdir().unwrap();
        let (r, t) = run_pipeline(&workspace_config(name, dir.path()));
        pass &= r.summary.accuracy_post >= 0.98 && r.summary.removal_success >= 0.90;
        total += t;
        details.push(attack_detail(&r, t));
        results.push(r);
    }
    pass &= total < Duration::from_secs(60 * 60);
    report(6, "TTLock and SFLL-HD^2 desk attack", pass, &details.join(" | "));
    for r in &results {
        assert!(r.summary.accuracy_post >= 0.98, "{}", r.scheme);
        assert!(r.summary.removal_success >= 0.90, "{}", r.scheme);
    }
    assert!(total < Duration::from_secs(60 * 60));
}

// ---------------------------------------------------------------------------

#[test]
fn criterion_7_single_flip_repair() {
    let _g = serial();
    let (mut flips, mut repaired, mut runs, mut idempotent) = (0u64, 0u64, 0u64, 0u64);
    for i in 0..100u64 {
        let design = ["rc16_a", "rc16_b", "rc16_c"][i as usize % 3];
        let (scheme, h) = if i % 4 == 0 { (Scheme::TtLock, 0) } else { (Scheme::SfllHd, 1 + (i as usize % 3)) };
        let k = if i % 2 == 0 { 8 } else { 12 };
        let l = lock(&vendored(design), &LockConfig::new(scheme, k, h, 5000 + i)).unwrap();
        let classes = scheme.classes();
        for g in l.netlist.gates() {
            let truth = l.labels.get(&g.name).unwrap();
            for &c in classes.iter().filter(|&&c| c != truth) {
                let mut corrupted: Labels = l.labels.clone();
                corrupted.insert(g.name.clone(), c);
                flips += 1;
                runs += 1;
                match rectify(&l.netlist, scheme, &corrupted) {
                    Ok(r) => {
                        repaired += (r.labels == l.labels) as u64;
                        let again = rectify(&l.netlist, scheme, &r.labels).unwrap();
                        idempotent += (again.labels == r.labels && again.log.is_empty()) as u64;
                    }
                    // A flip that leaves no RESTORE gate cannot be
                    // rectified; it counts as unrepaired but idempotence
                    // does not apply.
                    Err(_) => idempotent += 1,
                }
            }
        }
    }
    let rate = repaired as f64 / flips as f64;
    let pass = rate >= 0.95 && idempotent == runs;
    report(
        7,
        "single-flip repair",
        pass,
        &format!("100 SFLL-family instances, {repaired}/{flips} flips repaired ({:.2}%), idempotent {idempotent}/{runs}", 100.0 * rate),
    );
    assert!(rate >= 0.95);
    assert_eq!(idempotent, runs);
}

fn small_config(out: &Path, scheme: Scheme, seed: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(
        ["rc16_a", "rc16_b", "rc16_c"].iter().map(|d| format!("vendored:{d}")).collect(),
        scheme,
        vec![8, 12],
    );
    cfg.h_values = if scheme == Scheme::SfllHd { vec![1, 2] } else { vec![0] };
    cfg.seed = seed;
    cfg.perturb_rewrite_passes = 1;
    cfg.train.hidden = 64;
    cfg.train.max_epochs = 40;
    cfg.train.patience = 40;
    cfg.train.num_roots = 600;
    cfg.train.seed = seed;
    cfg.output_dir = out.to_path_buf();
    cfg
}

#[test]
fn criterion_8_oracle_less_audit() {
    let _g = serial();
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), Scheme::SfllHd, 8);
    cmd_gen_dataset(&cfg).unwrap();
    let folds = cmd_train(&cfg).unwrap();
    let layout = Layout::of(&cfg);
    let census: Census = serde_json::from_str(&std::fs::read_to_string(layout.census()).unwrap()).unwrap();

    // Move every secret out of reach before the attacker runs.
    let hidden = dir.path().join("hidden");
    let mut moved: Vec<(PathBuf, PathBuf)> = Vec::new();
    for e in &census.instances {
        for f in ["labels.csv", "meta.json", "secret.json"] {
            let from = layout.instance(&e.design, &e.id).join(f);
            let to = hidden.join(&e.design).join(&e.id).join(f);
            std::fs::create_dir_all(to.parent().unwrap()).unwrap();
            std::fs::rename(&from, &to).unwrap();
            moved.push((from, to));
        }
    }
    let log = AccessLog::new();
    let outcomes = attack_stage(&cfg, &census, &log).unwrap();
    let reads = log.reads();
    let allowed = |p: &Path| {
        let name = p.file_name().unwrap().to_str().unwrap();
        name == "locked.bench" || name == "model.json.gz"
    };
    let bad: Vec<&PathBuf> = reads.iter().filter(|p| !allowed(p)).collect();
    let expected_reads = census.instances.len() + folds.len();
    for (from, to) in &moved {
        std::fs::rename(to, from).unwrap();
    }
    let r = evaluate_stage(&cfg, &outcomes).unwrap();
    let test_reads: u64 = folds.iter().map(|f| f.test_label_reads).sum();
    let pass = bad.is_empty() && reads.len() == expected_reads && outcomes.len() == census.instances.len() && test_reads == 0;
    report(
        8,
        "oracle-less audit",
        pass,
        &format!(
            "attack ran with labels/meta/secrets removed; {} reads, all locked.bench or checkpoints; \
             {} TEST label reads during training; post-rectification accuracy {:.2}%",
            reads.len(),
            test_reads,
            100.0 * r.summary.accuracy_post
        ),
    );
    assert!(bad.is_empty(), "{bad:?}");
    assert_eq!(reads.len(), expected_reads);
    assert_eq!(test_reads, 0);
}

fn tree_files(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().unwrap() != "timing.json" {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn criterion_9_determinism() {
    let _g = serial();
    let mut trees = Vec::new();
    for jobs in [Some(1), Some(3)] {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_config(dir.path(), Scheme::SfllHd, 9);
        locklab::par::with_jobs(jobs, || {
            cmd_gen_dataset(&cfg).unwrap();
            cmd_train(&cfg).unwrap();
            cmd_attack(&cfg).unwrap();
        });
        trees.push(tree_files(&cfg.scheme_dir()));
    }
    let (a, b) = (&trees[0], &trees[1]);
    let recovered = a.keys().filter(|p| p.ends_with("recovered.bench")).count();
    let differing: Vec<&PathBuf> =
        a.keys().chain(b.keys()).filter(|p| a.get(*p) != b.get(*p)).collect();
    let has_report = a.contains_key(Path::new("report.json")) && a.contains_key(Path::new("report.csv"));
    let pass = differing.is_empty() && recovered > 0 && has_report;
    report(
        9,
        "determinism",
        pass,
        &format!(
            "two runs (1 and 3 worker threads): {} files compared incl. report.json, report.csv, {recovered} \
             recovered netlists and checkpoints; {} differ",
            a.len(),
            differing.len()
        ),
    );
    assert!(pass, "{differing:?}");
}

#[test]
fn negative_control_restore_unit_dropped() {
    let _g = serial();
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), Scheme::SfllHd, 4);
    cmd_gen_dataset(&cfg).unwrap();
    cmd_train(&cfg).unwrap();
    let layout = Layout::of(&cfg);
    let census: Census = serde_json::from_str(&std::fs::read_to_string(layout.census()).unwrap()).unwrap();
    let outcomes = attack_stage(&cfg, &census, &AccessLog::new()).unwrap();
    // Swap every recovered netlist for the locked one with its restore unit
    // held at 0: the perturb unit alone still corrupts the protected cubes.
    for o in &outcomes {
        let dir = layout.instance(&o.design, &o.instance.id);
        let locked = parse_bench(&std::fs::read_to_string(dir.join("locked.bench")).unwrap()).unwrap();
        let meta: LockMeta = serde_json::from_str(&std::fs::read_to_string(dir.join("meta.json")).unwrap()).unwrap();
        let pins = HashMap::from([(meta.protection_nets[1].clone(), false)]);
        let stripped = remove_dead_logic(&constant_propagate(&locked, &pins).unwrap()).0;
        let inputs: Vec<String> = locked.primary_inputs().to_vec();
        let stripped = stripped.with_primary_inputs(&inputs).unwrap();
        std::fs::write(o.recovered.as_ref().unwrap(), write_bench(&stripped).unwrap()).unwrap();
    }
    let r = evaluate_stage(&cfg, &outcomes).unwrap();
    assert_eq!(r.summary.instances, census.instances.len());
    assert_eq!(r.summary.equivalent, 0);
    assert!(r.designs.iter().flat_map(|d| &d.instances).all(|i| !i.success));
}
