//! Hamming-distance checker networks: `[popcount(x ^ key) == h]`.

use crate::netlist::{GateSpec, GateType, NameGen, Netlist, NetlistBuilder, DEFAULT_KEY_PREFIX};

use super::LockError;

/// Where the reference pattern comes from.
#[derive(Debug, Clone, Copy)]
pub enum HdKey<'a> {
    /// Folded into the first layer as inverters (bit 1) and buffers (bit 0).
    Hard(&'a [bool]),
    /// Compared through XOR gates against these key inputs.
    Inputs(&'a [String]),
}

#[derive(Debug, Clone)]
pub struct HdChecker {
    pub gates: Vec<GateSpec>,
    pub output: String,
}

pub(super) struct Emitter<'a> {
    pub(super) names: &'a mut NameGen,
    pub(super) gates: Vec<GateSpec>,
}

impl Emitter<'_> {
    pub(super) fn gate(&mut self, t: GateType, fanin: Vec<String>, name: Option<&str>) -> String {
        let name = match name {
            Some(n) => n.to_string(),
            None => self.names.fresh(),
        };
        self.gates.push(GateSpec::new(name.clone(), t, fanin));
        name
    }

    /// Balanced 2-input tree; the lower-indexed half always goes left.
    pub(super) fn tree(&mut self, t: GateType, terms: &[String], name: Option<&str>) -> String {
        match terms.len() {
            0 => unreachable!("empty reduction"),
            1 => match name {
                Some(n) => self.gate(GateType::Buf, vec![terms[0].clone()], Some(n)),
                None => terms[0].clone(),
            },
            len => {
                let (l, r) = terms.split_at(len / 2);
                let a = self.tree(t, l, None);
                let b = self.tree(t, r, None);
                self.gate(t, vec![a, b], name)
            }
        }
    }

    /// Sum bits, least significant first.
    fn popcount(&mut self, bits: &[String]) -> Vec<String> {
        if bits.len() == 1 {
            return vec![bits[0].clone()];
        }
        let (l, r) = bits.split_at(bits.len() / 2);
        let a = self.popcount(l);
        let b = self.popcount(r);
        self.add(&a, &b, bit_len(bits.len()))
    }

    /// Ripple-carry addition truncated to `width` bits; carries that cannot
    /// be consumed are never built.
    fn add(&mut self, a: &[String], b: &[String], width: usize) -> Vec<String> {
        let mut out = Vec::with_capacity(width);
        let mut carry: Option<String> = None;
        for i in 0..width {
            let ops: Vec<String> =
                [a.get(i).cloned(), b.get(i).cloned(), carry.take()].into_iter().flatten().collect();
            let need_carry = i + 1 < width;
            match ops.len() {
                0 => break,
                1 => out.push(ops[0].clone()),
                2 => {
                    out.push(self.gate(GateType::Xor, ops.clone(), None));
                    if need_carry {
                        carry = Some(self.gate(GateType::And, ops, None));
                    }
                }
                _ => {
                    let t = self.gate(GateType::Xor, vec![ops[0].clone(), ops[1].clone()], None);
                    out.push(self.gate(GateType::Xor, vec![t.clone(), ops[2].clone()], None));
                    if need_carry {
                        let g = self.gate(GateType::And, vec![ops[0].clone(), ops[1].clone()], None);
                        let p = self.gate(GateType::And, vec![t, ops[2].clone()], None);
                        carry = Some(self.gate(GateType::Or, vec![g, p], None));
                    }
                }
            }
        }
        out
    }
}

fn bit_len(v: usize) -> usize {
    (usize::BITS - v.leading_zeros()) as usize
}

/// Builds a network over `inputs` whose gate named `output` is 1 exactly when
/// the Hamming distance between the inputs and the reference pattern is `h`.
pub fn build_hd_checker(
    inputs: &[String],
    h: usize,
    key: HdKey<'_>,
    output: &str,
    names: &mut NameGen,
) -> Result<HdChecker, LockError> {
    let width = inputs.len();
    if width == 0 || h > width {
        return Err(LockError::HdOutOfRange { h, k: width });
    }
    match key {
        HdKey::Hard(bits) if bits.len() != width => {
            return Err(LockError::KeyLength { expected: width, got: bits.len() })
        }
        HdKey::Inputs(kis) if kis.len() != width => {
            return Err(LockError::KeyLength { expected: width, got: kis.len() })
        }
        _ => {}
    }
    names.reserve(output);
    let mut e = Emitter { names, gates: Vec::new() };

    if h == 0 {
        // Plain comparator: per-bit match signals reduced by an AND tree.
        let matches: Vec<String> = (0..width)
            .map(|i| match key {
                HdKey::Hard(bits) => {
                    let t = if bits[i] { GateType::Buf } else { GateType::Not };
                    e.gate(t, vec![inputs[i].clone()], None)
                }
                HdKey::Inputs(kis) => e.gate(GateType::Xnor, vec![inputs[i].clone(), kis[i].clone()], None),
            })
            .collect();
        e.tree(GateType::And, &matches, Some(output));
        return Ok(HdChecker { gates: e.gates, output: output.to_string() });
    }

    let diffs: Vec<String> = (0..width)
        .map(|i| match key {
            HdKey::Hard(bits) => {
                let t = if bits[i] { GateType::Not } else { GateType::Buf };
                e.gate(t, vec![inputs[i].clone()], None)
            }
            HdKey::Inputs(kis) => e.gate(GateType::Xor, vec![inputs[i].clone(), kis[i].clone()], None),
        })
        .collect();
    let sum = e.popcount(&diffs);
    let terms: Vec<String> = sum
        .iter()
        .enumerate()
        .map(|(j, s)| if (h >> j) & 1 == 1 { s.clone() } else { e.gate(GateType::Not, vec![s.clone()], None) })
        .collect();
    e.tree(GateType::And, &terms, Some(output));
    Ok(HdChecker { gates: e.gates, output: output.to_string() })
}

/// Stand-alone checker netlist with inputs `x0..`, optional key inputs and a
/// single output `eq`.
pub fn hd_checker_netlist(width: usize, h: usize, key: Option<&[bool]>) -> Result<Netlist, LockError> {
    let xs: Vec<String> = (0..width).map(|i| format!("x{i}")).collect();
    let ks: Vec<String> = (0..width).map(|i| format!("{DEFAULT_KEY_PREFIX}{i}")).collect();
    let mut names = NameGen::new(xs.iter().chain(&ks).map(String::as_str), "hd");
    let hk = match key {
        Some(bits) => HdKey::Hard(bits),
        None => HdKey::Inputs(&ks),
    };
    let c = build_hd_checker(&xs, h, hk, "eq", &mut names)?;
    let mut b = NetlistBuilder::new("hd");
    for x in &xs {
        b.input(x.clone());
    }
    if key.is_none() {
        for k in &ks {
            b.key_input(k.clone());
        }
    }
    b.output("eq");
    for g in c.gates {
        b.gate(g);
    }
    Ok(b.build()?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binom(n: u64, k: u64) -> u64 {
        (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
    }

    fn true_patterns(n: &Netlist, width: usize, kis: &[bool]) -> Vec<u64> {
        (0..1u64 << width)
            .filter(|&p| {
                let pis: Vec<bool> = (0..width).map(|i| (p >> i) & 1 == 1).collect();
                n.eval(&pis, kis)[0]
            })
            .collect()
    }

    #[test]
    fn hard_zero_key_h0_only_all_zero() {
        let n = hd_checker_netlist(4, 0, Some(&[false; 4])).unwrap();
        assert_eq!(true_patterns(&n, 4, &[]), vec![0]);
        assert!(n.gates().iter().all(|g| matches!(g.gtype, GateType::Not | GateType::And)));
    }

    #[test]
    fn width4_h2_six_patterns() {
        let n = hd_checker_netlist(4, 2, Some(&[false; 4])).unwrap();
        let t = true_patterns(&n, 4, &[]);
        assert_eq!(t.len(), 6);
        assert!(t.iter().all(|p| p.count_ones() == 2));
    }

    #[test]
    fn width8_h8_single_pattern() {
        let key = [true, false, true, true, false, false, true, false];
        let n = hd_checker_netlist(8, 8, Some(&key)).unwrap();
        let t = true_patterns(&n, 8, &[]);
        let complement: u64 = (0..8).filter(|&i| !key[i]).map(|i| 1u64 << i).sum();
        assert_eq!(t, vec![complement]);
    }

    #[test]
    fn counts_match_binomial_for_all_widths() {
        for width in 1..=9usize {
            for h in 0..=width {
                let key: Vec<bool> = (0..width).map(|i| (i * 7 + h) % 3 == 0).collect();
                let n = hd_checker_netlist(width, h, Some(&key)).unwrap();
                let kp: u64 = (0..width).filter(|&i| key[i]).map(|i| 1u64 << i).sum();
                let t = true_patterns(&n, width, &[]);
                assert_eq!(t.len() as u64, binom(width as u64, h as u64), "width {width} h {h}");
                assert!(t.iter().all(|p| (p ^ kp).count_ones() as usize == h));
            }
        }
    }

    #[test]
    fn key_input_variant_tracks_key() {
        for h in 0..=5usize {
            let n = hd_checker_netlist(5, h, None).unwrap();
            for kp in [0u64, 0b10110, 0b11111] {
                let kis: Vec<bool> = (0..5).map(|i| (kp >> i) & 1 == 1).collect();
                let t = true_patterns(&n, 5, &kis);
                assert_eq!(t.len() as u64, binom(5, h as u64));
                assert!(t.iter().all(|p| (p ^ kp).count_ones() as usize == h));
            }
        }
    }

    #[test]
    fn h_out_of_range() {
        assert!(matches!(hd_checker_netlist(4, 5, None), Err(LockError::HdOutOfRange { h: 5, k: 4 })));
    }
}
