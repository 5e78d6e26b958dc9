use crate::netlist::{exhaustive_lane_mask, exhaustive_words, Netlist};

/// Exhaustive comparison of two key-free netlists, matching inputs and
/// outputs by name.
pub fn same_function(a: &Netlist, b: &Netlist) -> bool {
    let np = a.primary_inputs().len();
    assert!(a.key_inputs().is_empty() && b.key_inputs().is_empty());
    let mut ai: Vec<&String> = a.primary_inputs().iter().collect();
    let mut bi: Vec<&String> = b.primary_inputs().iter().collect();
    ai.sort();
    bi.sort();
    assert_eq!(ai, bi, "input sets differ");
    let mut ao = a.output_names();
    let mut bo = b.output_names();
    ao.sort();
    bo.sort();
    assert_eq!(ao, bo, "output sets differ");
    let b_pos: Vec<usize> =
        b.primary_inputs().iter().map(|n| a.primary_inputs().iter().position(|x| x == n).unwrap()).collect();
    let b_out: Vec<usize> =
        a.output_names().iter().map(|o| b.output_names().iter().position(|x| x == o).unwrap()).collect();
    let mut sa = a.simulator();
    let mut sb = b.simulator();
    let mask = exhaustive_lane_mask(np);
    for w in 0..(1u64 << np.saturating_sub(6)) {
        let v = exhaustive_words(np, w);
        let vb: Vec<u64> = b_pos.iter().map(|&i| v[i]).collect();
        let oa = sa.run(&v, &[]);
        let ob = sb.run(&vb, &[]);
        for (i, &j) in b_out.iter().enumerate() {
            if (oa[i] ^ ob[j]) & mask != 0 {
                return false;
            }
        }
    }
    true
}
