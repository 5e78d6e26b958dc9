use std::collections::HashMap;

use super::{GateType, Netlist, NetlistError, Signal};

/// Compiled bit-parallel evaluator. Each call evaluates 64 input patterns,
/// one per bit lane.
#[derive(Debug, Clone)]
pub struct WordSimulator {
    n_pi: usize,
    n_ki: usize,
    ops: Vec<(GateType, u32, u32)>,
    fanin: Vec<u32>,
    outputs: Vec<u32>,
    values: Vec<u64>,
}

impl WordSimulator {
    pub fn new(n: &Netlist) -> Self {
        let n_pi = n.primary_inputs().len();
        let n_ki = n.key_inputs().len();
        let slot = |s: Signal| -> u32 {
            (match s {
                Signal::Pi(i) => i,
                Signal::Ki(i) => n_pi + i,
                Signal::Gate(g) => n_pi + n_ki + g.0,
            }) as u32
        };
        let mut ops = Vec::with_capacity(n.num_gates());
        let mut fanin = Vec::new();
        for g in n.gates() {
            let start = fanin.len() as u32;
            fanin.extend(g.fanin.iter().map(|&s| slot(s)));
            ops.push((g.gtype, start, fanin.len() as u32));
        }
        let outputs = n.primary_outputs().iter().map(|&s| slot(s)).collect();
        WordSimulator { n_pi, n_ki, ops, fanin, outputs, values: vec![0; n_pi + n_ki + n.num_gates()] }
    }

    /// Evaluates one word per input; returns one word per primary output.
    pub fn run(&mut self, pis: &[u64], kis: &[u64]) -> Vec<u64> {
        self.eval(pis, kis);
        self.outputs.iter().map(|&o| self.values[o as usize]).collect()
    }

    /// Evaluates and leaves every net value readable through [`Self::value`].
    pub fn eval(&mut self, pis: &[u64], kis: &[u64]) {
        assert_eq!(pis.len(), self.n_pi, "primary input word count");
        assert_eq!(kis.len(), self.n_ki, "key input word count");
        self.values[..self.n_pi].copy_from_slice(pis);
        self.values[self.n_pi..self.n_pi + self.n_ki].copy_from_slice(kis);
        let base = self.n_pi + self.n_ki;
        for (i, &(t, a, b)) in self.ops.iter().enumerate() {
            let fan = &self.fanin[a as usize..b as usize];
            let vals = &self.values;
            let v = t.eval_word(fan.iter().map(|&f| vals[f as usize]));
            self.values[base + i] = v;
        }
    }

    pub fn gate_value(&self, gate: usize) -> u64 {
        self.values[self.n_pi + self.n_ki + gate]
    }

    pub fn output_value(&self, po: usize) -> u64 {
        self.values[self.outputs[po] as usize]
    }

    pub fn num_outputs(&self) -> usize {
        self.outputs.len()
    }
}

impl Netlist {
    /// Evaluates every primary output for one complete input assignment.
    /// Keys of the returned map are output names.
    pub fn simulate(&self, assignment: &HashMap<String, bool>) -> Result<Vec<(String, bool)>, NetlistError> {
        let fetch = |name: &String| -> Result<bool, NetlistError> {
            assignment.get(name).copied().ok_or_else(|| NetlistError::MissingInput(name.clone()))
        };
        let pis = self.primary_inputs().iter().map(fetch).collect::<Result<Vec<_>, _>>()?;
        let kis = self.key_inputs().iter().map(fetch).collect::<Result<Vec<_>, _>>()?;
        let outs = self.eval(&pis, &kis);
        Ok(self.output_names().into_iter().map(str::to_string).zip(outs).collect())
    }

    /// Positional evaluation: inputs in declaration order, outputs in PO order.
    pub fn eval(&self, pis: &[bool], kis: &[bool]) -> Vec<bool> {
        let w = |b: &bool| if *b { !0u64 } else { 0 };
        let pw: Vec<u64> = pis.iter().map(w).collect();
        let kw: Vec<u64> = kis.iter().map(w).collect();
        self.eval_words(&pw, &kw).into_iter().map(|v| v & 1 == 1).collect()
    }

    pub fn eval_words(&self, pis: &[u64], kis: &[u64]) -> Vec<u64> {
        WordSimulator::new(self).run(pis, kis)
    }

    pub fn simulator(&self) -> WordSimulator {
        WordSimulator::new(self)
    }
}

/// Input words for exhaustive enumeration: word `w` of input `i` holds bit
/// `i` of patterns `64*w .. 64*w+63`.
pub fn exhaustive_words(num_inputs: usize, word: u64) -> Vec<u64> {
    (0..num_inputs)
        .map(|i| {
            if i < 6 {
                // Lanes within the word enumerate the low six bits.
                const LANE: [u64; 6] = [
                    0xAAAA_AAAA_AAAA_AAAA,
                    0xCCCC_CCCC_CCCC_CCCC,
                    0xF0F0_F0F0_F0F0_F0F0,
                    0xFF00_FF00_FF00_FF00,
                    0xFFFF_0000_FFFF_0000,
                    0xFFFF_FFFF_0000_0000,
                ];
                LANE[i]
            } else if (word >> (i - 6)) & 1 == 1 {
                !0
            } else {
                0
            }
        })
        .collect()
}

/// Number of valid lanes in the last word of an exhaustive sweep.
pub fn exhaustive_lane_mask(num_inputs: usize) -> u64 {
    if num_inputs >= 6 {
        !0
    } else {
        (1u64 << (1u32 << num_inputs)) - 1
    }
}
