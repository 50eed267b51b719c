//! Bounded functional equivalence by exhaustive or seeded simulation.
//!
//! Coverage rule. Combinational references: every assignment of the data
//! input bits, once each (at most 10 bits). Sequential references with at
//! most 6 data bits: one reset cycle followed by 8 rounds, each round
//! visiting every input assignment in a round-specific order. Wider
//! sequential references: one reset cycle and 256 pseudorandom cycles.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ast::{ModuleAst, PortDecl};
use super::sim::{data_inputs, mask, Compiled, Stimulus, StimulusError};

pub const MAX_COMBINATIONAL_BITS: u32 = 10;
pub const MAX_EXHAUSTIVE_SEQUENTIAL_BITS: u32 = 6;
pub const SEQUENTIAL_ROUNDS: usize = 8;
pub const RANDOM_CYCLES: usize = 256;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EquivError {
    #[error("output ports differ between candidate and reference")]
    InterfaceMismatch,
    #[error(transparent)]
    Stimulus(#[from] StimulusError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Equivalence {
    /// Matching output bits over total output bits.
    pub fraction: f64,
    pub is_equivalent: bool,
}

/// Compares `candidate` against `reference` on `vectors`.
///
/// Output ports must agree by name and width. Candidate inputs absent from
/// the stimulus are held at zero.
pub fn equivalence_fraction(
    candidate: &ModuleAst,
    reference: &ModuleAst,
    vectors: &Stimulus,
) -> Result<Equivalence, EquivError> {
    let mut cand_out: Vec<&PortDecl> = candidate.interface.outputs().collect();
    let mut ref_out: Vec<&PortDecl> = reference.interface.outputs().collect();
    cand_out.sort_by(|a, b| a.name.cmp(&b.name));
    ref_out.sort_by(|a, b| a.name.cmp(&b.name));
    let same = cand_out.len() == ref_out.len()
        && cand_out
            .iter()
            .zip(&ref_out)
            .all(|(c, r)| c.name == r.name && c.width == r.width);
    if !same {
        return Err(EquivError::InterfaceMismatch);
    }

    let mut cand_stim = vectors.clone();
    for p in candidate.interface.inputs() {
        match reference.interface.port(&p.name) {
            Some(r) if r.width != p.width => return Err(EquivError::InterfaceMismatch),
            _ => {}
        }
        if !cand_stim.inputs.contains(&p.name) {
            cand_stim.inputs.push(p.name.clone());
            for row in &mut cand_stim.cycles {
                row.push(0);
            }
        }
    }

    let want = Compiled::new(reference)?.run(vectors)?;
    let got = Compiled::new(candidate)?.run(&cand_stim)?;
    let col: HashMap<&str, usize> = got
        .outputs
        .iter()
        .enumerate()
        .map(|(i, n)| (n.as_str(), i))
        .collect();

    let mut total = 0u64;
    let mut matching = 0u64;
    for (w_row, g_row) in want.cycles.iter().zip(&got.cycles) {
        for (j, name) in want.outputs.iter().enumerate() {
            let width = want.widths[j];
            let diff = (w_row[j] ^ g_row[col[name.as_str()]]) & mask(width);
            total += u64::from(width);
            matching += u64::from(width) - u64::from(diff.count_ones());
        }
    }
    let fraction = if total == 0 {
        1.0
    } else {
        matching as f64 / total as f64
    };
    Ok(Equivalence {
        fraction,
        is_equivalent: matching == total && satisfies_coverage(reference, vectors),
    })
}

fn data_bits(ast: &ModuleAst) -> u32 {
    data_inputs(ast).iter().map(|(_, w)| u32::from(*w)).sum()
}

/// Splits a packed row index into per-port values, first port most
/// significant, each port MSB first.
fn unpack(row: u32, ports: &[(String, u8)]) -> Vec<u8> {
    let mut out = vec![0u8; ports.len()];
    let mut shift = 0u32;
    for (i, (_, w)) in ports.iter().enumerate().rev() {
        out[i] = ((row >> shift) as u8) & mask(*w);
        shift += u32::from(*w);
    }
    out
}

fn pack(values: &[u8], ports: &[(String, u8)]) -> u32 {
    ports
        .iter()
        .zip(values)
        .fold(0u32, |acc, ((_, w), v)| (acc << w) | u32::from(*v))
}

/// Input ports whose assertion resets some register: a reset condition that
/// is a bare input signal.
fn reset_inputs(ast: &ModuleAst) -> Vec<&str> {
    ast.registers
        .iter()
        .filter_map(|r| match &r.reset {
            Some(super::ast::Expr::Signal(s)) if ast.interface.port(s).is_some() => Some(s.as_str()),
            _ => None,
        })
        .collect()
}

/// Builds the stimulus prescribed by the coverage rule for `reference`.
/// `seed` only matters for wide sequential designs.
pub fn coverage_vectors(reference: &ModuleAst, seed: u64) -> Option<Stimulus> {
    let data = data_inputs(reference);
    let bits = data_bits(reference);
    let all_inputs: Vec<String> = reference.interface.inputs().map(|p| p.name.clone()).collect();
    let clocks = reference.clocks();
    // Rows are generated over data inputs, then spread into the full input
    // order with clocks held at 0.
    let expand = |vals: Vec<u8>| -> Vec<u8> {
        all_inputs
            .iter()
            .map(|name| {
                data.iter()
                    .position(|(n, _)| n == name)
                    .map_or(0, |i| vals[i])
            })
            .collect()
    };
    debug_assert!(clocks.iter().all(|c| all_inputs.iter().any(|n| n == c)));

    if !reference.is_sequential() {
        if bits > MAX_COMBINATIONAL_BITS {
            return None;
        }
        let cycles = (0..1u32 << bits).map(|r| expand(unpack(r, &data))).collect();
        return Some(Stimulus {
            inputs: all_inputs,
            cycles,
            reset_cycles: 0,
        });
    }

    let resets = reset_inputs(reference);
    let reset_row = expand(
        data.iter()
            .map(|(n, _)| u8::from(resets.contains(&n.as_str())))
            .collect(),
    );
    let mut cycles = vec![reset_row];
    if bits <= MAX_EXHAUSTIVE_SEQUENTIAL_BITS {
        let n = 1u32 << bits;
        for round in 0..SEQUENTIAL_ROUNDS as u32 {
            let stride = 2 * round + 1;
            let offset = 3 * round;
            for i in 0..n {
                let r = (i.wrapping_mul(stride).wrapping_add(offset)) & (n - 1);
                cycles.push(expand(unpack(r, &data)));
            }
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..RANDOM_CYCLES {
            let r: u32 = rng.gen_range(0..1u32 << bits);
            cycles.push(expand(unpack(r, &data)));
        }
    }
    Some(Stimulus {
        inputs: all_inputs,
        cycles,
        reset_cycles: 1,
    })
}

/// Whether `vectors` meet the coverage rule for `reference`.
pub fn satisfies_coverage(reference: &ModuleAst, vectors: &Stimulus) -> bool {
    let data = data_inputs(reference);
    let bits = data_bits(reference);
    let Some(pos): Option<Vec<usize>> = data
        .iter()
        .map(|(n, _)| vectors.inputs.iter().position(|s| s == n))
        .collect()
    else {
        return false;
    };
    let rows = vectors
        .cycles
        .iter()
        .skip(vectors.reset_cycles)
        .map(|row| {
            let vals: Vec<u8> = pos.iter().map(|&i| row.get(i).copied().unwrap_or(0)).collect();
            pack(&vals, &data)
        });
    if !reference.is_sequential() {
        if bits > MAX_COMBINATIONAL_BITS {
            return false;
        }
        let mut seen = vec![false; 1usize << bits];
        for r in rows {
            seen[r as usize] = true;
        }
        return seen.iter().all(|&s| s);
    }
    if vectors.reset_cycles == 0 {
        return false;
    }
    if bits <= MAX_EXHAUSTIVE_SEQUENTIAL_BITS {
        let mut count = vec![0usize; 1usize << bits];
        for r in rows {
            count[r as usize] += 1;
        }
        count.iter().all(|&c| c >= SEQUENTIAL_ROUNDS)
    } else {
        rows.count() >= RANDOM_CYCLES
    }
}

/// Output values of a combinational module for each packed data-input row,
/// flattened across outputs (interface order) per row.
pub fn truth_table(ast: &ModuleAst) -> Option<Vec<Vec<u8>>> {
    let stim = coverage_vectors(ast, 0)?;
    let trace = Compiled::new(ast).ok()?.run(&stim).ok()?;
    Some(trace.cycles)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::minirtl::{lexer::tokenize, parser::parse, vocab::Vocab};

    fn ast(src: &str) -> ModuleAst {
        let v = Vocab::minirtl();
        parse(v, &tokenize(v, src).unwrap()).unwrap()
    }

    fn comb(name: &str, op: &str) -> ModuleAst {
        ast(&format!(
            "module {name} ( input a , input b , output y ) ; assign y = a {op} b ; endmodule"
        ))
    }

    #[test]
    fn identity_is_equivalent() {
        let m = comb("and2", "&");
        let v = coverage_vectors(&m, 0).unwrap();
        let e = equivalence_fraction(&m, &m, &v).unwrap();
        assert_eq!(e.fraction, 1.0);
        assert!(e.is_equivalent);
    }

    #[test]
    fn xor_vs_or_three_quarters() {
        let r = comb("or2", "|");
        let c = comb("or2", "^");
        let v = coverage_vectors(&r, 0).unwrap();
        let e = equivalence_fraction(&c, &r, &v).unwrap();
        assert_eq!(e.fraction, 0.75);
        assert!(!e.is_equivalent);
    }

    #[test]
    fn output_mismatch_is_error() {
        let r = comb("or2", "|");
        let c = ast("module or2 ( input a , input b , output z ) ; assign z = a | b ; endmodule");
        let v = coverage_vectors(&r, 0).unwrap();
        assert_eq!(
            equivalence_fraction(&c, &r, &v).unwrap_err(),
            EquivError::InterfaceMismatch
        );
    }

    #[test]
    fn partial_vectors_are_not_proof() {
        let r = comb("and2", "&");
        let mut v = coverage_vectors(&r, 0).unwrap();
        v.cycles.pop();
        let e = equivalence_fraction(&r, &r, &v).unwrap();
        assert_eq!(e.fraction, 1.0);
        assert!(!e.is_equivalent);
    }

    #[test]
    fn sequential_rounds_cover_every_row() {
        let m = ast("module dff1 ( input clk , input rst , input d , output reg q ) ; always @ ( posedge clk ) if ( rst ) q <= 0 ; else q <= d ; endmodule");
        let v = coverage_vectors(&m, 0).unwrap();
        assert_eq!(v.reset_cycles, 1);
        assert_eq!(v.cycles.len(), 1 + 8 * 4);
        // rst asserted during the reset row, clock held low.
        assert_eq!(v.cycles[0], vec![0, 1, 0]);
        assert!(satisfies_coverage(&m, &v));
        let neg = ast("module dff1 ( input clk , input rst , input d , output reg q ) ; always @ ( negedge clk ) if ( rst ) q <= 0 ; else q <= d ; endmodule");
        let e = equivalence_fraction(&neg, &m, &v).unwrap();
        assert!(e.fraction < 1.0);
    }

    #[test]
    fn wide_sequential_uses_random_cycles() {
        let m = ast("module reg1 ( input clk , input [ 3 : 0 ] a , input [ 3 : 0 ] b , output reg [ 3 : 0 ] q ) ; always @ ( posedge clk ) q <= a ^ b ; endmodule");
        let v = coverage_vectors(&m, 9).unwrap();
        assert_eq!(v.cycles.len(), 1 + RANDOM_CYCLES);
        assert_eq!(v, coverage_vectors(&m, 9).unwrap());
        assert_ne!(v, coverage_vectors(&m, 10).unwrap());
        assert!(satisfies_coverage(&m, &v));
    }

    #[test]
    fn extra_candidate_input_held_low() {
        let r = comb("and2", "&");
        let c = ast("module and2 ( input a , input b , input c , output y ) ; assign y = a & b & ~ c ; endmodule");
        let v = coverage_vectors(&r, 0).unwrap();
        assert!(equivalence_fraction(&c, &r, &v).unwrap().is_equivalent);
    }

    #[test]
    fn truth_table_rows_msb_first() {
        let m = ast("module top1 ( input a , input b , output y ) ; assign y = a & ~ b ; endmodule");
        let tt: Vec<u8> = truth_table(&m).unwrap().into_iter().map(|r| r[0]).collect();
        assert_eq!(tt, vec![0, 0, 1, 0]);
    }
}
