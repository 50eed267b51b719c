//! Template-driven generation of specification/code/testbench triples.
//!
//! Every task carries a structured prompt, a reference design in canonical
//! MiniRTL text, and the stimulus prescribed by the coverage rule. A task is
//! admitted to a corpus only after the reference parses, simulates over its
//! vectors and is equivalent to itself.

use std::collections::HashSet;
use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::minirtl::vocab::{self, TokenId, Vocab};
use crate::minirtl::{
    coverage_vectors, data_inputs, equivalence_fraction, eval_expr, parse_source, simulate,
    truth_table, BinOp, Edge, Expr, ModuleAst, Stimulus,
};
use crate::seed::{mix, mix_all, streams};

/// Maximum prompt length in tokens.
pub const MAX_PROMPT_LEN: usize = 48;
/// Truth-table rows included in a prompt digest.
pub const DIGEST_ROWS: usize = 16;
const MAX_ATTEMPTS: u64 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    Combinational,
    Register,
    Counter,
    Mux,
    FsmLite,
}

impl TaskKind {
    pub const ALL: [TaskKind; 5] = [
        TaskKind::Combinational,
        TaskKind::Register,
        TaskKind::Counter,
        TaskKind::Mux,
        TaskKind::FsmLite,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Combinational => "combinational",
            TaskKind::Register => "register",
            TaskKind::Counter => "counter",
            TaskKind::Mux => "mux",
            TaskKind::FsmLite => "fsm-lite",
        }
    }

    pub fn is_sequential(self) -> bool {
        matches!(self, TaskKind::Register | TaskKind::Counter | TaskKind::FsmLite)
    }

    fn names(self) -> &'static [&'static str] {
        match self {
            TaskKind::Combinational => &COMB_NAMES,
            TaskKind::Mux => &["mux2", "mux4", "pick2", "pick3"],
            TaskKind::Register => &["dff1", "dff2", "reg1", "reg2", "hold1", "hold2"],
            TaskKind::Counter => &[
                "cnt2", "ctr2", "tick2", "step2", "unit1", "unit2", "core1", "top1",
            ],
            TaskKind::FsmLite => &[
                "fsm1", "fsm2", "seq1", "seq2", "det1", "det2", "toggle", "blink",
            ],
        }
    }
}

const COMB_NAMES: [&str; 36] = [
    "and2", "or2", "xor2", "nand2", "nor2", "xnor2", "and3", "or3", "xor3", "maj3", "gate1",
    "gate2", "gate3", "gate4", "logic1", "logic2", "logic3", "logic4", "comb1", "comb2", "comb3",
    "comb4", "func1", "func2", "func3", "func4", "parity", "chk1", "chk2", "enc1", "dec1", "cmp1",
    "cmp2", "eq1", "neq1", "bit1",
];

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Difficulty {
    Easy,
    Medium,
    Hard,
}

impl Difficulty {
    pub const ALL: [Difficulty; 3] = [Difficulty::Easy, Difficulty::Medium, Difficulty::Hard];

    pub fn name(self) -> &'static str {
        match self {
            Difficulty::Easy => "easy",
            Difficulty::Medium => "medium",
            Difficulty::Hard => "hard",
        }
    }
}

impl fmt::Display for Difficulty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Split {
    #[serde(rename = "train")]
    Train,
    #[serde(rename = "eval-heldout")]
    Heldout,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub id: String,
    pub kind: TaskKind,
    pub difficulty: Difficulty,
    pub split: Split,
    pub prompt_tokens: Vec<TokenId>,
    pub reference: ModuleAst,
    pub reference_text: String,
    pub vectors: Stimulus,
}

impl Task {
    /// Reference token sequence followed by EOS: the supervised target.
    pub fn target_tokens(&self, vocab: &Vocab) -> Vec<TokenId> {
        let mut t = self.reference.to_tokens(vocab);
        t.push(vocab.eos());
        t
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GenError {
    #[error("no non-degenerate {kind}/{difficulty} design after {attempts} attempts")]
    Exhausted {
        kind: TaskKind,
        difficulty: Difficulty,
        attempts: u64,
    },
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("count for {kind}/{difficulty} must be at least 1")]
    ZeroCount {
        kind: TaskKind,
        difficulty: Difficulty,
    },
    #[error("heldout fraction {0} outside [0, 1)")]
    HeldoutFraction(f64),
    #[error("corpus configuration lists no cells")]
    Empty,
    #[error(transparent)]
    Generation(#[from] GenError),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CorpusError {
    #[error("corpus json: {0}")]
    Json(String),
    #[error("task {id}: reference does not parse: {reason}")]
    Reference { id: String, reason: String },
    #[error("task {id} fails validation")]
    Invalid { id: String },
}

fn pick<'a, R: Rng>(rng: &mut R, xs: &'a [&'a str]) -> &'a str {
    xs.choose(rng).copied().expect("nonempty pool")
}

fn random_op<R: Rng>(rng: &mut R) -> BinOp {
    match rng.gen_range(0..20) {
        0..=5 => BinOp::And,
        6..=11 => BinOp::Or,
        12..=17 => BinOp::Xor,
        _ => BinOp::Eq,
    }
}

/// Random expression over `leaves` with operator depth at most `depth`.
fn random_expr<R: Rng>(rng: &mut R, leaves: &[Expr], depth: usize) -> Expr {
    if depth == 0 || rng.gen_bool(0.3) {
        return leaves.choose(rng).cloned().expect("nonempty leaves");
    }
    if rng.gen_bool(0.15) {
        let inner = random_expr(rng, leaves, depth - 1);
        return match inner {
            Expr::Not(e) => *e,
            e => Expr::not(e),
        };
    }
    let l = random_expr(rng, leaves, depth - 1);
    let mut r = random_expr(rng, leaves, depth - 1);
    for _ in 0..4 {
        if r != l {
            break;
        }
        r = random_expr(rng, leaves, depth - 1);
    }
    if r == l {
        return l;
    }
    Expr::bin(random_op(rng), l, r)
}

fn leaf_count(e: &Expr) -> usize {
    match e {
        Expr::Signal(_) | Expr::Index(..) | Expr::Const(_) => 1,
        Expr::Not(x) => leaf_count(x),
        Expr::Binary(_, l, r) => leaf_count(l) + leaf_count(r),
        Expr::Ternary(c, t, f) => leaf_count(c) + leaf_count(t) + leaf_count(f),
    }
}

fn distinct_leaves(e: &Expr, out: &mut Vec<Expr>) {
    match e {
        Expr::Signal(_) | Expr::Index(..) => {
            if !out.contains(e) {
                out.push(e.clone());
            }
        }
        Expr::Const(_) => {}
        Expr::Not(x) => distinct_leaves(x, out),
        Expr::Binary(_, l, r) => {
            distinct_leaves(l, out);
            distinct_leaves(r, out);
        }
        Expr::Ternary(c, t, f) => {
            distinct_leaves(c, out);
            distinct_leaves(t, out);
            distinct_leaves(f, out);
        }
    }
}

/// Values of `e` over all assignments of scalar `vars`, first variable most
/// significant.
fn table_over(e: &Expr, vars: &[&str]) -> Vec<u8> {
    let n = vars.len();
    (0..1u32 << n)
        .map(|row| {
            let env = |name: &str| {
                vars.iter()
                    .position(|v| *v == name)
                    .map(|i| (((row >> (n - 1 - i)) & 1) as u8, 1u8))
            };
            eval_expr(e, &env).map_or(0, |(v, _)| v)
        })
        .collect()
}

fn is_constant(table: &[u8]) -> bool {
    table.iter().all(|&v| v == table[0])
}

/// Whether the function in `table` (over `n` variables, MSB first) depends
/// on variable `i`.
fn depends_on(table: &[u8], n: usize, i: usize) -> bool {
    let bit = 1usize << (n - 1 - i);
    (0..table.len()).any(|r| r & bit == 0 && table[r] != table[r | bit])
}

struct Design {
    name: String,
    ports: Vec<String>,
    body: Vec<String>,
    descriptor: Vec<String>,
}

impl Design {
    fn source(&self) -> String {
        format!(
            "module {} ( {} ) ; {} endmodule",
            self.name,
            self.ports.join(" , "),
            self.body.join(" ")
        )
    }
}

fn edge_word(e: Edge) -> &'static str {
    match e {
        Edge::Posedge => "posedge",
        Edge::Negedge => "negedge",
    }
}

fn always_block(edge: Edge, target: &str, next: &Expr, reset: bool) -> String {
    let head = format!("always @ ( {} clk )", edge_word(edge));
    let next = crate::minirtl::expr_source(next);
    if reset {
        format!("{head} if ( rst ) {target} <= 0 ; else {target} <= {next} ;")
    } else {
        format!("{head} {target} <= {next} ;")
    }
}

fn comb_design<R: Rng>(rng: &mut R, difficulty: Difficulty) -> Option<Design> {
    let (inputs, leaves, depth, ports): (Vec<&str>, Vec<Expr>, usize, Vec<String>) =
        match difficulty {
            Difficulty::Easy => {
                let v = vec!["a", "b"];
                (v.clone(), v.iter().map(|s| Expr::signal(s)).collect(), 2, in_ports(&v))
            }
            Difficulty::Medium => {
                let v = vec!["a", "b", "c"];
                (v.clone(), v.iter().map(|s| Expr::signal(s)).collect(), 4, in_ports(&v))
            }
            Difficulty::Hard => {
                if rng.gen_bool(0.5) {
                    let v = vec!["a", "b", "c", "d"];
                    (v.clone(), v.iter().map(|s| Expr::signal(s)).collect(), 4, in_ports(&v))
                } else {
                    let leaves = (0..4).map(|i| Expr::Index("a".into(), i)).collect();
                    (vec![], leaves, 4, vec!["input [ 3 : 0 ] a".into()])
                }
            }
        };
    let expr = random_expr(rng, &leaves, depth);
    let mut used = Vec::new();
    distinct_leaves(&expr, &mut used);
    let needed = if inputs.is_empty() { 3 } else { inputs.len() };
    let max_leaves = match difficulty {
        Difficulty::Easy => 3,
        Difficulty::Medium => 5,
        Difficulty::Hard => 6,
    };
    if used.len() < needed || leaf_count(&expr) > max_leaves {
        return None;
    }
    let mut ports = ports;
    ports.push("output y".into());
    Some(Design {
        name: pick(rng, TaskKind::Combinational.names()).into(),
        ports,
        body: vec![format!("assign y = {} ;", crate::minirtl::expr_source(&expr))],
        descriptor: vec![],
    })
}

fn in_ports(names: &[&str]) -> Vec<String> {
    names.iter().map(|n| format!("input {n}")).collect()
}

fn mux_design<R: Rng>(rng: &mut R, difficulty: Difficulty) -> Option<Design> {
    let sel = Expr::signal("sel");
    let (data, expr): (Vec<&str>, Expr) = match difficulty {
        Difficulty::Easy => {
            let a = Expr::signal("a");
            let arm = if rng.gen_bool(0.5) { a } else { Expr::not(a) };
            let k = Expr::Const(rng.gen_range(0..2));
            let (t, f) = if rng.gen_bool(0.5) { (arm, k) } else { (k, arm) };
            (vec!["a"], Expr::ternary(sel, t, f))
        }
        Difficulty::Medium | Difficulty::Hard => {
            let (vars, depth) = if difficulty == Difficulty::Medium {
                (vec!["a", "b"], 1)
            } else {
                (vec!["a", "b", "c"], 2)
            };
            let leaves: Vec<Expr> = vars.iter().map(|s| Expr::signal(s)).collect();
            let t = random_expr(rng, &leaves, depth);
            let f = random_expr(rng, &leaves, depth);
            if t == f {
                return None;
            }
            (vars, Expr::ternary(sel, t, f))
        }
    };
    let mut vars = vec!["sel"];
    vars.extend(&data);
    let table = table_over(&expr, &vars);
    if !depends_on(&table, vars.len(), 0) {
        return None;
    }
    let mut ports = in_ports(&vars);
    ports.push("output y".into());
    Some(Design {
        name: pick(rng, TaskKind::Mux.names()).into(),
        ports,
        body: vec![format!("assign y = {} ;", crate::minirtl::expr_source(&expr))],
        descriptor: vec![],
    })
}

fn random_edge<R: Rng>(rng: &mut R) -> Edge {
    if rng.gen_bool(0.5) {
        Edge::Posedge
    } else {
        Edge::Negedge
    }
}

fn seq_header(edge: Edge, reset: bool, tag: &str) -> Vec<String> {
    vec![
        tag.into(),
        edge_word(edge).into(),
        if reset { vocab::RST_TAG } else { vocab::NO_RST_TAG }.into(),
    ]
}

fn clock_ports(reset: bool) -> Vec<String> {
    let mut p = vec!["input clk".to_string()];
    if reset {
        p.push("input rst".into());
    }
    p
}

fn register_design<R: Rng>(rng: &mut R, difficulty: Difficulty) -> Option<Design> {
    let edge = random_edge(rng);
    let reset = rng.gen_bool(0.5);
    let (data, depth): (Vec<&str>, usize) = match difficulty {
        Difficulty::Easy => (vec!["d"], 2),
        Difficulty::Medium => (vec!["d", "e"], 3),
        Difficulty::Hard => (vec!["d", "e"], 4),
    };
    let mut vars = vec!["q"];
    vars.extend(&data);
    let leaves: Vec<Expr> = vars.iter().map(|s| Expr::signal(s)).collect();
    let next = random_expr(rng, &leaves, depth);
    if leaf_count(&next) > 4 {
        return None;
    }
    let table = table_over(&next, &vars);
    if is_constant(&table) || !(1..vars.len()).any(|i| depends_on(&table, vars.len(), i)) {
        return None;
    }
    let mut ports = clock_ports(reset);
    ports.extend(in_ports(&data));
    ports.push("output reg q".into());
    let mut descriptor = seq_header(edge, reset, vocab::REG_TAG);
    descriptor.push(vocab::TT.into());
    descriptor.extend(table.iter().map(u8::to_string));
    Some(Design {
        name: pick(rng, TaskKind::Register.names()).into(),
        ports,
        body: vec![always_block(edge, "q", &next, reset)],
        descriptor,
    })
}

fn counter_design<R: Rng>(rng: &mut R, difficulty: Difficulty) -> Option<Design> {
    let edge = random_edge(rng);
    let reset = rng.gen_bool(0.5);
    let enable = difficulty != Difficulty::Easy && rng.gen_bool(0.5);
    let up = rng.gen_bool(0.5);
    let q0 = Expr::signal("q0");
    let q1 = Expr::signal("q1");
    let carry = if up { q0.clone() } else { Expr::not(q0.clone()) };
    let (n0, n1) = if enable {
        let e = Expr::signal("e");
        (
            Expr::bin(BinOp::Xor, q0, e.clone()),
            Expr::bin(BinOp::Xor, q1, Expr::bin(BinOp::And, carry, e)),
        )
    } else {
        (Expr::not(q0), Expr::bin(BinOp::Xor, q1, carry))
    };
    let mut ports = clock_ports(reset);
    if enable {
        ports.push("input e".into());
    }
    ports.push("output reg q0".into());
    ports.push("output reg q1".into());
    let mut descriptor = seq_header(edge, reset, vocab::CNT_TAG);
    descriptor.push(if up { vocab::UP_TAG } else { vocab::DOWN_TAG }.into());
    Some(Design {
        name: pick(rng, TaskKind::Counter.names()).into(),
        ports,
        body: vec![
            always_block(edge, "q0", &n0, reset),
            always_block(edge, "q1", &n1, reset),
        ],
        descriptor,
    })
}

fn fsm_design<R: Rng>(rng: &mut R, difficulty: Difficulty) -> Option<Design> {
    let edge = random_edge(rng);
    let reset = rng.gen_bool(0.5);
    let depth = if difficulty == Difficulty::Easy { 1 } else { 2 };
    let vars = ["q", "a"];
    let leaves: Vec<Expr> = vars.iter().map(|s| Expr::signal(s)).collect();
    let next = random_expr(rng, &leaves, depth);
    let out = random_expr(rng, &leaves, depth);
    let next_t = table_over(&next, &vars);
    let out_t = table_over(&out, &vars);
    if !depends_on(&next_t, 2, 1) || !depends_on(&out_t, 2, 0) {
        return None;
    }
    let mut ports = clock_ports(reset);
    ports.push("input a".into());
    ports.push("output y".into());
    let mut descriptor = seq_header(edge, reset, vocab::FSM_TAG);
    descriptor.push(vocab::TT.into());
    descriptor.extend(next_t.iter().map(u8::to_string));
    descriptor.push(vocab::TT.into());
    descriptor.extend(out_t.iter().map(u8::to_string));
    Some(Design {
        name: pick(rng, TaskKind::FsmLite.names()).into(),
        ports,
        body: vec![
            "reg q ;".into(),
            always_block(edge, "q", &next, reset),
            format!("assign y = {} ;", crate::minirtl::expr_source(&out)),
        ],
        descriptor,
    })
}

/// Structured prompt for a reference design: BOS, SPEC, module name, input
/// list, output list, behaviour descriptor, SPEC terminator.
///
/// Bus ports are followed by their width. Combinational designs are
/// described by a truth-table digest; sequential designs by a kind tag, the
/// clock edge, the reset style and kind-specific parameters.
pub fn encode_prompt(vocab: &Vocab, reference: &ModuleAst, kind: TaskKind) -> Vec<TokenId> {
    let mut words: Vec<String> = vec![
        vocab::BOS.into(),
        vocab::SPEC.into(),
        reference.interface.module_name.clone(),
        vocab::IN.into(),
    ];
    for p in reference.interface.inputs() {
        words.push(p.name.clone());
        if p.width > 1 {
            words.push(p.width.to_string());
        }
    }
    words.push(vocab::OUT.into());
    for p in reference.interface.outputs() {
        words.push(p.name.clone());
        if p.width > 1 {
            words.push(p.width.to_string());
        }
    }
    words.extend(behaviour_descriptor(reference, kind));
    words.push(vocab::END_SPEC.into());
    words.iter().map(|w| vocab.expect_id(w)).collect()
}

fn behaviour_descriptor(reference: &ModuleAst, kind: TaskKind) -> Vec<String> {
    if !kind.is_sequential() {
        let table = truth_table(reference).unwrap_or_default();
        let mut d = vec![vocab::TT.to_string()];
        d.extend(table.iter().take(DIGEST_ROWS).flatten().map(u8::to_string));
        return d;
    }
    let reg = &reference.registers[0];
    let reset = reg.reset.is_some();
    match kind {
        TaskKind::Register => {
            let mut vars = vec![reg.target.as_str()];
            let data = data_inputs(reference);
            vars.extend(data.iter().map(|(n, _)| n.as_str()).filter(|n| *n != "rst"));
            let mut d = seq_header(reg.edge, reset, vocab::REG_TAG);
            d.push(vocab::TT.into());
            d.extend(table_over(&reg.next, &vars).iter().map(u8::to_string));
            d
        }
        TaskKind::Counter => {
            let mut d = seq_header(reg.edge, reset, vocab::CNT_TAG);
            let q1 = reference.registers.iter().find(|r| r.target == "q1");
            // From q1 = 0, q0 = 1 with the enable high, only an up counter
            // carries into q1.
            let up = q1.is_some_and(|r| table_over(&r.next, &["q0", "q1", "e"])[0b101] == 1);
            d.push(if up { vocab::UP_TAG } else { vocab::DOWN_TAG }.into());
            d
        }
        TaskKind::FsmLite => {
            let mut d = seq_header(reg.edge, reset, vocab::FSM_TAG);
            d.push(vocab::TT.into());
            d.extend(table_over(&reg.next, &["q", "a"]).iter().map(u8::to_string));
            if let Some(a) = reference.assigns.iter().find(|a| a.target == "y") {
                d.push(vocab::TT.into());
                d.extend(table_over(&a.expr, &["q", "a"]).iter().map(u8::to_string));
            }
            d
        }
        TaskKind::Combinational | TaskKind::Mux => unreachable!(),
    }
}

/// Generates one task. Degenerate draws (constant outputs, unused inputs)
/// are redrawn from the same seeded stream up to 100 times.
pub fn generate_task(seed: u64, kind: TaskKind, difficulty: Difficulty) -> Result<Task, GenError> {
    let v = Vocab::minirtl();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..MAX_ATTEMPTS {
        let design = match kind {
            TaskKind::Combinational => comb_design(&mut rng, difficulty),
            TaskKind::Mux => mux_design(&mut rng, difficulty),
            TaskKind::Register => register_design(&mut rng, difficulty),
            TaskKind::Counter => counter_design(&mut rng, difficulty),
            TaskKind::FsmLite => fsm_design(&mut rng, difficulty),
        };
        let Some(design) = design else { continue };
        let Ok(reference) = parse_source(v, &design.source()) else {
            continue;
        };
        let Some(vectors) = coverage_vectors(&reference, mix(seed, streams::CORPUS)) else {
            continue;
        };
        let Ok(trace) = simulate(&reference, &vectors) else {
            continue;
        };
        let varying = (0..trace.outputs.len()).any(|j| {
            let first = trace.cycles.first().map(|r| r[j]);
            trace.cycles.iter().any(|r| Some(r[j]) != first)
        });
        if !varying {
            continue;
        }
        let prompt_tokens = encode_prompt(v, &reference, kind);
        debug_assert!(design.descriptor.is_empty() || {
            let d: Vec<TokenId> = design.descriptor.iter().map(|w| v.expect_id(w)).collect();
            prompt_tokens.windows(d.len()).any(|w| w == d.as_slice())
        });
        if prompt_tokens.len() > MAX_PROMPT_LEN {
            continue;
        }
        return Ok(Task {
            id: format!("{kind}-{difficulty}-{seed:016x}"),
            kind,
            difficulty,
            split: Split::Train,
            prompt_tokens,
            reference_text: reference.to_source(),
            reference,
            vectors,
        });
    }
    Err(GenError::Exhausted {
        kind,
        difficulty,
        attempts: MAX_ATTEMPTS,
    })
}

/// Three-stage filter: the reference text parses, simulation over the
/// vectors is total, and the reference is equivalent to itself under the
/// coverage rule. Prompt framing is checked as well.
pub fn validate_task(task: &Task) -> bool {
    let v = Vocab::minirtl();
    let framed = task.prompt_tokens.first() == Some(&v.bos())
        && task.prompt_tokens.last() == Some(&v.expect_id(vocab::END_SPEC));
    if !framed {
        return false;
    }
    let Ok(ast) = parse_source(v, &task.reference_text) else {
        return false;
    };
    if simulate(&ast, &task.vectors).is_err() {
        return false;
    }
    matches!(
        equivalence_fraction(&ast, &ast, &task.vectors),
        Ok(eq) if eq.fraction == 1.0 && eq.is_equivalent
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellCount {
    pub kind: TaskKind,
    pub difficulty: Difficulty,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusConfig {
    pub counts: Vec<CellCount>,
    #[serde(default = "default_heldout")]
    pub heldout_fraction: f64,
}

fn default_heldout() -> f64 {
    0.2
}

impl Default for CorpusConfig {
    /// 625 tasks, 500 train and 125 heldout.
    fn default() -> Self {
        use Difficulty::*;
        use TaskKind::*;
        let cells = [
            (Combinational, Easy, 150),
            (Combinational, Medium, 150),
            (Combinational, Hard, 50),
            (Mux, Easy, 25),
            (Mux, Medium, 50),
            (Register, Easy, 25),
            (Register, Medium, 50),
            (Counter, Hard, 50),
            (FsmLite, Hard, 75),
        ];
        Self {
            counts: cells
                .iter()
                .map(|&(kind, difficulty, count)| CellCount {
                    kind,
                    difficulty,
                    count,
                })
                .collect(),
            heldout_fraction: 0.2,
        }
    }
}

impl CorpusConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.counts.is_empty() {
            return Err(ConfigError::Empty);
        }
        if let Some(c) = self.counts.iter().find(|c| c.count == 0) {
            return Err(ConfigError::ZeroCount {
                kind: c.kind,
                difficulty: c.difficulty,
            });
        }
        if !(0.0..1.0).contains(&self.heldout_fraction) {
            return Err(ConfigError::HeldoutFraction(self.heldout_fraction));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Corpus {
    pub tasks: Vec<Task>,
}

#[derive(Serialize, Deserialize)]
struct TaskRecord {
    id: String,
    prompt_tokens: Vec<TokenId>,
    reference_text: String,
    vectors: Stimulus,
    kind: TaskKind,
    difficulty: Difficulty,
    split: Split,
}

impl Corpus {
    pub fn train(&self) -> impl Iterator<Item = &Task> {
        self.tasks.iter().filter(|t| t.split == Split::Train)
    }

    pub fn heldout(&self) -> impl Iterator<Item = &Task> {
        self.tasks.iter().filter(|t| t.split == Split::Heldout)
    }

    pub fn get(&self, id: &str) -> Option<&Task> {
        self.tasks.iter().find(|t| t.id == id)
    }

    /// JSON array, one compact task record per line.
    pub fn to_json(&self) -> String {
        let mut s = String::from("[\n");
        for (i, t) in self.tasks.iter().enumerate() {
            let rec = TaskRecord {
                id: t.id.clone(),
                prompt_tokens: t.prompt_tokens.clone(),
                reference_text: t.reference_text.clone(),
                vectors: t.vectors.clone(),
                kind: t.kind,
                difficulty: t.difficulty,
                split: t.split,
            };
            s.push_str(&serde_json::to_string(&rec).expect("task record serializes"));
            s.push_str(if i + 1 < self.tasks.len() { ",\n" } else { "\n" });
        }
        s.push_str("]\n");
        s
    }

    /// Parses a corpus file, re-parsing every reference and re-validating
    /// every task.
    pub fn from_json(text: &str) -> Result<Self, CorpusError> {
        let records: Vec<TaskRecord> =
            serde_json::from_str(text).map_err(|e| CorpusError::Json(e.to_string()))?;
        let v = Vocab::minirtl();
        let mut tasks = Vec::with_capacity(records.len());
        for r in records {
            let reference =
                parse_source(v, &r.reference_text).map_err(|e| CorpusError::Reference {
                    id: r.id.clone(),
                    reason: e.to_string(),
                })?;
            let task = Task {
                id: r.id,
                kind: r.kind,
                difficulty: r.difficulty,
                split: r.split,
                prompt_tokens: r.prompt_tokens,
                reference,
                reference_text: r.reference_text,
                vectors: r.vectors,
            };
            if !validate_task(&task) {
                return Err(CorpusError::Invalid { id: task.id });
            }
            tasks.push(task);
        }
        Ok(Self { tasks })
    }
}

/// Builds a corpus cell by cell. Task `i` of cell `c` draws from
/// `mix_all(seed, [CORPUS, c, i, attempt])`; draws whose prompt already
/// appears in the corpus are retried so heldout prompts never duplicate
/// training prompts. A seeded shuffle per cell picks the heldout subset.
pub fn build_corpus(config: &CorpusConfig, seed: u64) -> Result<Corpus, ConfigError> {
    config.validate()?;
    let mut seen: HashSet<Vec<TokenId>> = HashSet::new();
    let mut tasks = Vec::new();
    for (c, cell) in config.counts.iter().enumerate() {
        let mut cell_tasks = Vec::with_capacity(cell.count);
        for i in 0..cell.count {
            let mut chosen = None;
            for attempt in 0..MAX_ATTEMPTS {
                let s = mix_all(seed, &[streams::CORPUS, c as u64, i as u64, attempt]);
                let task = generate_task(s, cell.kind, cell.difficulty)?;
                let fresh = !seen.contains(&task.prompt_tokens);
                if fresh || attempt + 1 == MAX_ATTEMPTS {
                    chosen = Some(task);
                    break;
                }
            }
            let mut task = chosen.expect("at least one attempt");
            seen.insert(task.prompt_tokens.clone());
            task.id = format!("{}-{}-{i:04}", cell.kind, cell.difficulty);
            cell_tasks.push(task);
        }
        let held = (cell.count as f64 * config.heldout_fraction).round() as usize;
        let mut order: Vec<usize> = (0..cell.count).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(mix_all(
            seed,
            &[streams::CORPUS, c as u64, u64::MAX],
        )));
        for &j in &order[..held] {
            cell_tasks[j].split = Split::Heldout;
        }
        tasks.extend(cell_tasks);
    }
    Ok(Corpus { tasks })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::minirtl::detokenize;

    #[test]
    fn and2_prompt_matches_encoding_rule() {
        let v = Vocab::minirtl();
        let ast = parse_source(
            v,
            "module and2 ( input a , input b , output y ) ; assign y = a & b ; endmodule",
        )
        .unwrap();
        let p = encode_prompt(v, &ast, TaskKind::Combinational);
        assert_eq!(
            detokenize(v, &p),
            "<bos> <spec> and2 <in> a b <out> y <tt> 0 0 0 1 </spec>"
        );
    }

    #[test]
    fn easy_combinational_structure() {
        let t = generate_task(7, TaskKind::Combinational, Difficulty::Easy).unwrap();
        assert_eq!(t.reference.interface.inputs().count(), 2);
        assert_eq!(t.reference.assigns.len(), 1);
        assert!(t.reference.assigns[0].expr.depth() <= 2);
        assert!(validate_task(&t));
    }

    #[test]
    fn register_has_one_element_and_clock() {
        for s in 0..50 {
            for d in Difficulty::ALL {
                let t = generate_task(s, TaskKind::Register, d).unwrap();
                assert_eq!(t.reference.registers.len(), 1);
                assert!(t.reference.interface.port("clk").is_some());
            }
        }
    }

    #[test]
    fn difficulty_bounds() {
        for s in 0..200 {
            let e = generate_task(s, TaskKind::Combinational, Difficulty::Easy).unwrap();
            let m = generate_task(s, TaskKind::Combinational, Difficulty::Medium).unwrap();
            let h = generate_task(s, TaskKind::Combinational, Difficulty::Hard).unwrap();
            assert!(e.reference.interface.inputs().count() <= 2);
            assert!(m.reference.interface.inputs().count() <= 3);
            assert!(m.reference.assigns[0].expr.depth() <= 4);
            let bits: u32 = h.reference.interface.inputs().map(|p| u32::from(p.width)).sum();
            assert!(bits <= 4);
        }
    }

    #[test]
    fn thousand_tasks_validate_and_fit_prompt_bound() {
        let mut n = 0;
        for s in 0..200u64 {
            for kind in TaskKind::ALL {
                let t = generate_task(mix(s, 1), kind, Difficulty::ALL[(s % 3) as usize]).unwrap();
                assert!(validate_task(&t), "{}", t.reference_text);
                assert!(t.prompt_tokens.len() <= MAX_PROMPT_LEN);
                n += 1;
            }
        }
        assert_eq!(n, 1000);
    }

    #[test]
    fn truncated_reference_or_missing_input_fails_validation() {
        let mut t = generate_task(3, TaskKind::Combinational, Difficulty::Medium).unwrap();
        let good = t.clone();
        let cut = t.reference_text.len() - "endmodule".len();
        t.reference_text.truncate(cut);
        assert!(!validate_task(&t));

        let mut t = good;
        t.vectors.inputs.pop();
        for row in &mut t.vectors.cycles {
            row.pop();
        }
        assert!(!validate_task(&t));
    }

    #[test]
    fn identical_behaviour_identical_prompt() {
        let v = Vocab::minirtl();
        let a = parse_source(v, "module or2 ( input a , input b , output y ) ; assign y = a | b ; endmodule").unwrap();
        let b = parse_source(v, "module or2 ( input a , input b , output y ) ; assign y = b | a ; endmodule").unwrap();
        assert_eq!(
            encode_prompt(v, &a, TaskKind::Combinational),
            encode_prompt(v, &b, TaskKind::Combinational)
        );
    }

    #[test]
    fn corpus_is_deterministic_and_split() {
        let cfg = CorpusConfig {
            counts: vec![CellCount {
                kind: TaskKind::Combinational,
                difficulty: Difficulty::Easy,
                count: 50,
            }],
            heldout_fraction: 0.2,
        };
        let a = build_corpus(&cfg, 1).unwrap();
        let b = build_corpus(&cfg, 1).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        assert_eq!(a.heldout().count(), 10);
        let train: HashSet<_> = a.train().map(|t| t.id.clone()).collect();
        assert!(a.heldout().all(|t| !train.contains(&t.id)));
        let back = Corpus::from_json(&a.to_json()).unwrap();
        assert_eq!(back.to_json(), a.to_json());
    }

    #[test]
    fn zero_count_rejected() {
        let cfg = CorpusConfig {
            counts: vec![CellCount {
                kind: TaskKind::Mux,
                difficulty: Difficulty::Easy,
                count: 0,
            }],
            heldout_fraction: 0.2,
        };
        assert!(matches!(build_corpus(&cfg, 0), Err(ConfigError::ZeroCount { .. })));
    }

    #[test]
    fn default_corpus_sizes_and_diversity() {
        let c = build_corpus(&CorpusConfig::default(), 1).unwrap();
        assert_eq!(c.train().count(), 500);
        assert_eq!(c.heldout().count(), 125);
        let tables: HashSet<Vec<TokenId>> = c
            .tasks
            .iter()
            .filter(|t| t.kind == TaskKind::Combinational)
            .map(|t| {
                let p = &t.prompt_tokens;
                let tt = p.iter().rposition(|&x| x == Vocab::minirtl().expect_id(vocab::TT)).unwrap();
                p[tt..].to_vec()
            })
            .collect();
        assert!(tables.len() >= 50, "{} distinct tables", tables.len());
        assert!(c.tasks.iter().all(validate_task));
    }
}
