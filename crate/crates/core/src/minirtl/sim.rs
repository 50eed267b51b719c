//! Exact two-valued cycle simulator.
//!
//! One cycle: apply inputs, settle the continuous assigns, update
//! negative-edge registers and settle again, sample outputs, then update
//! positive-edge registers. Registers start at zero; during the reset
//! prefix every register loads zero at its edge.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::ast::{BinOp, Edge, Expr, ModuleAst};
use super::parser::comb_order;

/// Input assignments, one row per clock cycle. Row entries follow `inputs`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stimulus {
    pub inputs: Vec<String>,
    pub cycles: Vec<Vec<u8>>,
    pub reset_cycles: usize,
}

/// Per-cycle values of every output port, in interface order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trace {
    pub outputs: Vec<String>,
    pub widths: Vec<u8>,
    pub cycles: Vec<Vec<u8>>,
}

impl Trace {
    /// Values of one output over all cycles.
    pub fn column(&self, name: &str) -> Option<Vec<u8>> {
        let i = self.outputs.iter().position(|o| o == name)?;
        Some(self.cycles.iter().map(|row| row[i]).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StimulusError {
    #[error("stimulus does not drive input `{0}`")]
    MissingInput(String),
    #[error("stimulus row {row} has {got} entries, expected {expected}")]
    RowLength {
        row: usize,
        got: usize,
        expected: usize,
    },
    #[error("value {value} does not fit input `{input}` in cycle {row}")]
    ValueTooWide {
        row: usize,
        input: String,
        value: u8,
    },
    #[error("module violates structural invariants: {0}")]
    Malformed(String),
}

pub fn mask(width: u8) -> u8 {
    ((1u16 << width) - 1) as u8
}

#[derive(Debug, Clone)]
enum Node {
    Sig(usize),
    Bit(usize, u8),
    Const(u8),
    Not(Box<Node>, u8),
    Bin(BinOp, Box<Node>, Box<Node>),
    Tern(Box<Node>, Box<Node>, Box<Node>),
}

impl Node {
    fn eval(&self, v: &[u8]) -> u8 {
        match self {
            Node::Sig(i) => v[*i],
            Node::Bit(i, b) => (v[*i] >> b) & 1,
            Node::Const(c) => *c,
            Node::Not(e, m) => !e.eval(v) & m,
            Node::Bin(op, l, r) => {
                let (a, b) = (l.eval(v), r.eval(v));
                match op {
                    BinOp::And => a & b,
                    BinOp::Or => a | b,
                    BinOp::Xor => a ^ b,
                    BinOp::Eq => u8::from(a == b),
                }
            }
            Node::Tern(c, t, f) => {
                if c.eval(v) != 0 {
                    t.eval(v)
                } else {
                    f.eval(v)
                }
            }
        }
    }
}

struct CompiledReg {
    target: usize,
    next: Node,
    reset: Option<Node>,
    edge: Edge,
}

/// Flattened module ready for repeated simulation.
pub struct Compiled {
    names: Vec<String>,
    widths: Vec<u8>,
    inputs: Vec<usize>,
    outputs: Vec<usize>,
    output_names: Vec<String>,
    assigns: Vec<(usize, Node)>,
    registers: Vec<CompiledReg>,
}

impl Compiled {
    pub fn new(ast: &ModuleAst) -> Result<Self, StimulusError> {
        let index: HashMap<String, usize> = ast
            .decls
            .iter()
            .enumerate()
            .map(|(i, d)| (d.name.clone(), i))
            .collect();
        let widths = widths_of(ast);
        let lookup = |name: &str| {
            index
                .get(name)
                .copied()
                .ok_or_else(|| StimulusError::Malformed(format!("undeclared `{name}`")))
        };
        let order = comb_order(ast)
            .map_err(|s| StimulusError::Malformed(format!("combinational cycle through `{s}`")))?;
        let mut assigns = Vec::with_capacity(order.len());
        for i in order {
            let a = &ast.assigns[i];
            assigns.push((lookup(&a.target)?, compile_expr(&a.expr, &index, &widths)?));
        }
        let w = &widths;
        let mut registers = Vec::new();
        for r in &ast.registers {
            registers.push(CompiledReg {
                target: lookup(&r.target)?,
                next: compile_expr(&r.next, &index, w)?,
                reset: r
                    .reset
                    .as_ref()
                    .map(|e| compile_expr(e, &index, w))
                    .transpose()?,
                edge: r.edge,
            });
        }
        let inputs = ast
            .interface
            .inputs()
            .map(|p| lookup(&p.name))
            .collect::<Result<_, _>>()?;
        let outputs = ast
            .interface
            .outputs()
            .map(|p| lookup(&p.name))
            .collect::<Result<_, _>>()?;
        Ok(Self {
            names: ast.decls.iter().map(|d| d.name.clone()).collect(),
            widths,
            inputs,
            outputs,
            output_names: ast.interface.outputs().map(|p| p.name.clone()).collect(),
            assigns,
            registers,
        })
    }

    fn settle(&self, v: &mut [u8]) {
        for (t, e) in &self.assigns {
            v[*t] = e.eval(v);
        }
    }

    fn clock(&self, v: &mut [u8], edge: Edge, in_reset: bool) -> bool {
        let updates: Vec<(usize, u8)> = self
            .registers
            .iter()
            .filter(|r| r.edge == edge)
            .map(|r| {
                let reset = in_reset || r.reset.as_ref().is_some_and(|e| e.eval(v) != 0);
                (r.target, if reset { 0 } else { r.next.eval(v) })
            })
            .collect();
        let any = !updates.is_empty();
        for (t, val) in updates {
            v[t] = val;
        }
        any
    }

    pub fn run(&self, stim: &Stimulus) -> Result<Trace, StimulusError> {
        let mut slot = Vec::with_capacity(self.inputs.len());
        for &i in &self.inputs {
            let name = self.name_of(i);
            let pos = stim
                .inputs
                .iter()
                .position(|s| s == name)
                .ok_or_else(|| StimulusError::MissingInput(name.to_string()))?;
            slot.push((i, pos));
        }
        let mut v = vec![0u8; self.widths.len()];
        let mut cycles = Vec::with_capacity(stim.cycles.len());
        for (row, values) in stim.cycles.iter().enumerate() {
            if values.len() != stim.inputs.len() {
                return Err(StimulusError::RowLength {
                    row,
                    got: values.len(),
                    expected: stim.inputs.len(),
                });
            }
            for &(i, pos) in &slot {
                let val = values[pos];
                if val & !mask(self.widths[i]) != 0 {
                    return Err(StimulusError::ValueTooWide {
                        row,
                        input: self.name_of(i).to_string(),
                        value: val,
                    });
                }
                v[i] = val;
            }
            let in_reset = row < stim.reset_cycles;
            self.settle(&mut v);
            if self.clock(&mut v, Edge::Negedge, in_reset) {
                self.settle(&mut v);
            }
            cycles.push(self.outputs.iter().map(|&o| v[o]).collect());
            self.clock(&mut v, Edge::Posedge, in_reset);
        }
        Ok(Trace {
            outputs: self.output_names.clone(),
            widths: self.outputs.iter().map(|&o| self.widths[o]).collect(),
            cycles,
        })
    }

    fn name_of(&self, i: usize) -> &str {
        &self.names[i]
    }
}

fn widths_of(ast: &ModuleAst) -> Vec<u8> {
    ast.decls.iter().map(|d| d.width).collect()
}

fn compile_expr(
    e: &Expr,
    index: &HashMap<String, usize>,
    widths: &[u8],
) -> Result<Node, StimulusError> {
    let lookup = |name: &str| {
        index
            .get(name)
            .copied()
            .ok_or_else(|| StimulusError::Malformed(format!("undeclared `{name}`")))
    };
    Ok(match e {
        Expr::Signal(s) => Node::Sig(lookup(s)?),
        Expr::Index(s, b) => Node::Bit(lookup(s)?, *b),
        Expr::Const(c) => Node::Const(*c & 1),
        Expr::Not(inner) => {
            let w = static_width(inner, index, widths);
            Node::Not(Box::new(compile_expr(inner, index, widths)?), mask(w))
        }
        Expr::Binary(op, l, r) => Node::Bin(
            *op,
            Box::new(compile_expr(l, index, widths)?),
            Box::new(compile_expr(r, index, widths)?),
        ),
        Expr::Ternary(c, t, f) => Node::Tern(
            Box::new(compile_expr(c, index, widths)?),
            Box::new(compile_expr(t, index, widths)?),
            Box::new(compile_expr(f, index, widths)?),
        ),
    })
}

fn static_width(e: &Expr, index: &HashMap<String, usize>, widths: &[u8]) -> u8 {
    match e {
        Expr::Signal(s) => index.get(s).map_or(1, |&i| widths[i]),
        Expr::Index(..) | Expr::Const(_) => 1,
        Expr::Not(inner) => static_width(inner, index, widths),
        Expr::Binary(BinOp::Eq, ..) => 1,
        Expr::Binary(_, l, _) => static_width(l, index, widths),
        Expr::Ternary(_, t, _) => static_width(t, index, widths),
    }
}

/// Runs `ast` over `stim` and returns the output trace.
pub fn simulate(ast: &ModuleAst, stim: &Stimulus) -> Result<Trace, StimulusError> {
    Compiled::new(ast)?.run(stim)
}

/// Evaluates an expression directly against named values (value, width).
/// Independent of the compiled simulator; used for truth-table digests.
pub fn eval_expr(e: &Expr, env: &dyn Fn(&str) -> Option<(u8, u8)>) -> Option<(u8, u8)> {
    Some(match e {
        Expr::Signal(s) => env(s)?,
        Expr::Index(s, b) => ((env(s)?.0 >> b) & 1, 1),
        Expr::Const(c) => (*c & 1, 1),
        Expr::Not(inner) => {
            let (v, w) = eval_expr(inner, env)?;
            (!v & mask(w), w)
        }
        Expr::Binary(op, l, r) => {
            let (a, w) = eval_expr(l, env)?;
            let (b, _) = eval_expr(r, env)?;
            match op {
                BinOp::And => (a & b, w),
                BinOp::Or => (a | b, w),
                BinOp::Xor => (a ^ b, w),
                BinOp::Eq => (u8::from(a == b), 1),
            }
        }
        Expr::Ternary(c, t, f) => {
            if eval_expr(c, env)?.0 != 0 {
                eval_expr(t, env)?
            } else {
                eval_expr(f, env)?
            }
        }
    })
}

/// Data inputs of a module: input ports that are not used as a clock, in
/// declaration order, with widths.
pub fn data_inputs(ast: &ModuleAst) -> Vec<(String, u8)> {
    let clocks = ast.clocks();
    ast.interface
        .inputs()
        .filter(|p| !clocks.contains(&p.name.as_str()))
        .map(|p| (p.name.clone(), p.width))
        .collect()
}
