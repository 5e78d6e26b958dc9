//! Anti-SAT, TTLock and SFLL-HD locking with ground-truth gate labels.

mod antisat;
mod hd;
mod sfll;

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::labels::{Labels, NodeClass, Scheme};
use crate::netlist::{
    constant_propagate, remove_dead_logic, GateSpec, GateType, NameGen, Netlist, NetlistBuilder, NetlistError,
    DEFAULT_KEY_PREFIX,
};

pub use antisat::lock_antisat;
pub use hd::{build_hd_checker, hd_checker_netlist, HdChecker, HdKey};
pub use sfll::{lock_sfll_hd, lock_ttlock};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LockError {
    #[error("Anti-SAT needs an even key size, got {0}")]
    OddKeySize(usize),
    #[error("key size must be positive")]
    ZeroKeySize,
    #[error("need {needed} primary inputs, netlist has {available}")]
    TooFewInputs { needed: usize, available: usize },
    #[error("Hamming distance {h} out of range for key size {k}")]
    HdOutOfRange { h: usize, k: usize },
    #[error("TTLock is SFLL-HD with h = 0, got h = {0}")]
    TtLockNonzeroH(usize),
    #[error("key has {got} bits, expected {expected}")]
    KeyLength { expected: usize, got: usize },
    #[error("netlist already has key inputs")]
    AlreadyLocked,
    #[error("no gate qualifies as an integration target")]
    NoTarget,
    #[error("`{0}` is not a primary input")]
    UnknownInput(String),
    #[error("`{0}` is not a valid target")]
    UnknownTarget(String),
    #[error("protected input `{0}` listed twice")]
    DuplicateInput(String),
    #[error(transparent)]
    Netlist(#[from] NetlistError),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputPolicy {
    #[default]
    Random,
    FirstK,
    Explicit(Vec<String>),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetPolicy {
    #[default]
    Random,
    Explicit(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LockConfig {
    pub scheme: Scheme,
    pub key_size: usize,
    #[serde(default)]
    pub h: usize,
    pub seed: u64,
    #[serde(default)]
    pub inputs: InputPolicy,
    #[serde(default)]
    pub target: TargetPolicy,
    /// Structural rewrite passes over the perturb unit (SFLL family only), so
    /// that its shape depends on the key beyond the first layer.
    #[serde(default)]
    pub perturb_rewrite_passes: usize,
}

impl LockConfig {
    pub fn new(scheme: Scheme, key_size: usize, h: usize, seed: u64) -> Self {
        LockConfig {
            scheme,
            key_size,
            h,
            seed,
            inputs: InputPolicy::Random,
            target: TargetPolicy::Random,
            perturb_rewrite_passes: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SecretKey {
    pub bits: Vec<bool>,
}

impl SecretKey {
    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn to_bit_string(&self) -> String {
        self.bits.iter().map(|&b| if b { '1' } else { '0' }).collect()
    }
}

/// Everything about an instance except the key.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LockMeta {
    pub design: String,
    pub scheme: Scheme,
    pub key_size: usize,
    pub h: usize,
    pub seed: u64,
    pub protected_inputs: Vec<String>,
    /// Anti-SAT: the internal net the flip signal is XORed into.
    /// SFLL family: the protected primary output.
    pub target: String,
    pub key_inputs: Vec<String>,
    /// Splice gates, in the order they were inserted.
    pub integration_gates: Vec<String>,
    /// Protection signals entering the splices (Anti-SAT: Y; SFLL: perturb, restore).
    pub protection_nets: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct LockedInstance {
    pub netlist: Netlist,
    pub key: SecretKey,
    pub labels: Labels,
    pub meta: LockMeta,
}

pub fn lock(n: &Netlist, cfg: &LockConfig) -> Result<LockedInstance, LockError> {
    match cfg.scheme {
        Scheme::AntiSat => antisat::lock_with(n, cfg),
        Scheme::TtLock if cfg.h != 0 => Err(LockError::TtLockNonzeroH(cfg.h)),
        Scheme::TtLock | Scheme::SfllHd => sfll::lock_with(n, cfg),
    }
}

/// Ties every key input to its bit, simplifies, and drops the key inputs.
/// The primary-input list of the locked netlist is preserved.
pub fn apply_key(locked: &Netlist, key: &SecretKey) -> Result<Netlist, LockError> {
    if key.len() != locked.key_inputs().len() {
        return Err(LockError::KeyLength { expected: locked.key_inputs().len(), got: key.len() });
    }
    let pins: HashMap<String, bool> = locked.key_inputs().iter().cloned().zip(key.bits.iter().copied()).collect();
    let p = constant_propagate(locked, &pins)?;
    let (p, _) = remove_dead_logic(&p);
    Ok(p.with_primary_inputs(locked.primary_inputs())?)
}

pub(crate) fn key_names(k: usize) -> Vec<String> {
    (0..k).map(|i| format!("{DEFAULT_KEY_PREFIX}{i}")).collect()
}

/// Picks `k` protected inputs. `preferred` inputs are drawn first under the
/// random policy.
pub(crate) fn choose_inputs(
    n: &Netlist,
    k: usize,
    policy: &InputPolicy,
    preferred: &[String],
    rng: &mut ChaCha8Rng,
) -> Result<Vec<String>, LockError> {
    let pis = n.primary_inputs();
    if pis.len() < k {
        return Err(LockError::TooFewInputs { needed: k, available: pis.len() });
    }
    match policy {
        InputPolicy::FirstK => Ok(pis[..k].to_vec()),
        InputPolicy::Explicit(list) => {
            if list.len() != k {
                return Err(LockError::KeyLength { expected: k, got: list.len() });
            }
            let mut seen = std::collections::HashSet::new();
            for x in list {
                if !pis.contains(x) {
                    return Err(LockError::UnknownInput(x.clone()));
                }
                if !seen.insert(x) {
                    return Err(LockError::DuplicateInput(x.clone()));
                }
            }
            Ok(list.clone())
        }
        InputPolicy::Random => {
            let mut first: Vec<String> = pis.iter().filter(|p| preferred.contains(p)).cloned().collect();
            let mut rest: Vec<String> = pis.iter().filter(|p| !preferred.contains(p)).cloned().collect();
            first.shuffle(rng);
            rest.shuffle(rng);
            first.extend(rest);
            first.truncate(k);
            Ok(first)
        }
    }
}

/// Inserts `XOR(net, prot)` so that every reader of `net` sees the XOR.
/// When `net` is a primary output its driver is renamed and the XOR takes
/// over the output name. Returns the XOR name and the driver's (new) name.
pub(crate) fn splice_xor(
    b: &mut NetlistBuilder,
    net: &str,
    prot: &str,
    names: &mut NameGen,
) -> (String, String) {
    if b.outputs.iter().any(|o| o == net) {
        let renamed = names.derived(&format!("{net}__orig"));
        for g in &mut b.gates {
            if g.name == net {
                g.name = renamed.clone();
            }
            for f in &mut g.fanin {
                if f == net {
                    *f = renamed.clone();
                }
            }
        }
        b.gate(GateSpec::new(net, GateType::Xor, vec![renamed.clone(), prot.to_string()]));
        (net.to_string(), renamed)
    } else {
        let x = names.fresh();
        for g in &mut b.gates {
            for f in &mut g.fanin {
                if f == net {
                    *f = x.clone();
                }
            }
        }
        b.gate(GateSpec::new(x.clone(), GateType::Xor, vec![net.to_string(), prot.to_string()]));
        (x, net.to_string())
    }
}

/// Labels for a locked netlist: everything not listed in `protection` is DESIGN.
pub(crate) fn label_all(n: &Netlist, protection: &HashMap<String, NodeClass>) -> Labels {
    let mut l = Labels::new();
    for g in n.gates() {
        l.insert(g.name.clone(), protection.get(&g.name).copied().unwrap_or(NodeClass::Design));
    }
    l
}

/// Prefix for every gate added by locking.
pub(crate) const LOCK_PREFIX: &str = "lk";
