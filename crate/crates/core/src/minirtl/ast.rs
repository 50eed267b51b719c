use serde::{Deserialize, Serialize};

use super::vocab::{TokenId, Vocab};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Input,
    Output,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PortDecl {
    pub name: String,
    pub direction: Direction,
    pub width: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interface {
    pub module_name: String,
    pub ports: Vec<PortDecl>,
}

impl Interface {
    pub fn inputs(&self) -> impl Iterator<Item = &PortDecl> {
        self.ports.iter().filter(|p| p.direction == Direction::Input)
    }

    pub fn outputs(&self) -> impl Iterator<Item = &PortDecl> {
        self.ports.iter().filter(|p| p.direction == Direction::Output)
    }

    pub fn port(&self, name: &str) -> Option<&PortDecl> {
        self.ports.iter().find(|p| p.name == name)
    }
}

/// How a named signal was declared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SignalKind {
    Input,
    Output,
    OutputReg,
    Wire,
    Reg,
}

impl SignalKind {
    pub fn is_reg(self) -> bool {
        matches!(self, SignalKind::OutputReg | SignalKind::Reg)
    }

    pub fn is_net(self) -> bool {
        matches!(self, SignalKind::Output | SignalKind::Wire)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignalDecl {
    pub name: String,
    pub width: u8,
    pub kind: SignalKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    And,
    Or,
    Xor,
    Eq,
}

impl BinOp {
    /// Binding strength; larger binds tighter.
    pub fn precedence(self) -> u8 {
        match self {
            BinOp::Or => 1,
            BinOp::Xor => 2,
            BinOp::And => 3,
            BinOp::Eq => 4,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::And => "&",
            BinOp::Or => "|",
            BinOp::Xor => "^",
            BinOp::Eq => "==",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Expr {
    Signal(String),
    Index(String, u8),
    /// One-bit constant.
    Const(u8),
    Not(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Ternary(Box<Expr>, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn signal(name: &str) -> Self {
        Expr::Signal(name.to_string())
    }

    pub fn not(e: Expr) -> Self {
        Expr::Not(Box::new(e))
    }

    pub fn bin(op: BinOp, l: Expr, r: Expr) -> Self {
        Expr::Binary(op, Box::new(l), Box::new(r))
    }

    pub fn ternary(c: Expr, t: Expr, f: Expr) -> Self {
        Expr::Ternary(Box::new(c), Box::new(t), Box::new(f))
    }

    /// Operator nesting depth; leaves have depth 0.
    pub fn depth(&self) -> usize {
        match self {
            Expr::Signal(_) | Expr::Index(..) | Expr::Const(_) => 0,
            Expr::Not(e) => 1 + e.depth(),
            Expr::Binary(_, l, r) => 1 + l.depth().max(r.depth()),
            Expr::Ternary(c, t, f) => 1 + c.depth().max(t.depth()).max(f.depth()),
        }
    }

    /// Signal names read by this expression, in first-occurrence order.
    pub fn signals(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_signals(&mut out);
        out
    }

    fn collect_signals<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Expr::Signal(s) | Expr::Index(s, _) => {
                if !out.contains(&s.as_str()) {
                    out.push(s);
                }
            }
            Expr::Const(_) => {}
            Expr::Not(e) => e.collect_signals(out),
            Expr::Binary(_, l, r) => {
                l.collect_signals(out);
                r.collect_signals(out);
            }
            Expr::Ternary(c, t, f) => {
                c.collect_signals(out);
                t.collect_signals(out);
                f.collect_signals(out);
            }
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Ternary(..) => 0,
            Expr::Binary(op, ..) => op.precedence(),
            _ => u8::MAX,
        }
    }

    fn render(&self, out: &mut Vec<String>) {
        match self {
            Expr::Signal(s) => out.push(s.clone()),
            Expr::Index(s, i) => {
                out.push(s.clone());
                out.push("[".into());
                out.push(i.to_string());
                out.push("]".into());
            }
            Expr::Const(v) => out.push(v.to_string()),
            Expr::Not(e) => {
                out.push("~".into());
                render_child(e, e.precedence() < u8::MAX, out);
            }
            Expr::Binary(op, l, r) => {
                let p = op.precedence();
                render_child(l, l.precedence() < p, out);
                out.push(op.symbol().into());
                render_child(r, r.precedence() <= p, out);
            }
            Expr::Ternary(c, t, f) => {
                render_child(c, c.precedence() == 0, out);
                out.push("?".into());
                render_child(t, t.precedence() == 0, out);
                out.push(":".into());
                f.render(out);
            }
        }
    }
}

fn render_child(e: &Expr, parens: bool, out: &mut Vec<String>) {
    if parens {
        out.push("(".into());
        e.render(out);
        out.push(")".into());
    } else {
        e.render(out);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Edge {
    Posedge,
    Negedge,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContAssign {
    pub target: String,
    pub expr: Expr,
}

/// Clocked register element. When `reset` evaluates to 1 at the active edge
/// the register loads zero, otherwise it loads `next`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Register {
    pub target: String,
    pub next: Expr,
    pub edge: Edge,
    pub clock: String,
    pub reset: Option<Expr>,
}

/// A parsed MiniRTL module. Ports live in `interface`; `decls` holds every
/// named signal including ports.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModuleAst {
    pub interface: Interface,
    pub decls: Vec<SignalDecl>,
    pub assigns: Vec<ContAssign>,
    pub registers: Vec<Register>,
}

impl ModuleAst {
    pub fn decl(&self, name: &str) -> Option<&SignalDecl> {
        self.decls.iter().find(|d| d.name == name)
    }

    pub fn is_sequential(&self) -> bool {
        !self.registers.is_empty()
    }

    /// Input ports used as a clock by some register.
    pub fn clocks(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for r in &self.registers {
            if !out.contains(&r.clock.as_str()) {
                out.push(&r.clock);
            }
        }
        out
    }

    /// Canonical source rendering as a list of lexemes: header, internal
    /// declarations, registers, continuous assigns, `endmodule`.
    pub fn to_lexemes(&self) -> Vec<String> {
        let mut out: Vec<String> = vec!["module".into(), self.interface.module_name.clone(), "(".into()];
        for (i, p) in self.interface.ports.iter().enumerate() {
            if i > 0 {
                out.push(",".into());
            }
            match p.direction {
                Direction::Input => out.push("input".into()),
                Direction::Output => {
                    out.push("output".into());
                    if self.decl(&p.name).is_some_and(|d| d.kind == SignalKind::OutputReg) {
                        out.push("reg".into());
                    }
                }
            }
            push_range(p.width, &mut out);
            out.push(p.name.clone());
        }
        out.push(")".into());
        out.push(";".into());
        for d in &self.decls {
            let kw = match d.kind {
                SignalKind::Wire => "wire",
                SignalKind::Reg => "reg",
                _ => continue,
            };
            out.push(kw.into());
            push_range(d.width, &mut out);
            out.push(d.name.clone());
            out.push(";".into());
        }
        for r in &self.registers {
            out.extend(["always", "@", "("].map(String::from));
            out.push(
                match r.edge {
                    Edge::Posedge => "posedge",
                    Edge::Negedge => "negedge",
                }
                .into(),
            );
            out.push(r.clock.clone());
            out.push(")".into());
            if let Some(rst) = &r.reset {
                out.extend(["if", "("].map(String::from));
                rst.render(&mut out);
                out.extend([")".into(), r.target.clone(), "<=".into(), "0".into(), ";".into()]);
                out.push("else".into());
            }
            out.push(r.target.clone());
            out.push("<=".into());
            r.next.render(&mut out);
            out.push(";".into());
        }
        for a in &self.assigns {
            out.push("assign".into());
            out.push(a.target.clone());
            out.push("=".into());
            a.expr.render(&mut out);
            out.push(";".into());
        }
        out.push("endmodule".into());
        out
    }

    pub fn to_source(&self) -> String {
        self.to_lexemes().join(" ")
    }

    /// Token ids of the canonical rendering. Every lexeme produced by
    /// `to_lexemes` for a valid AST is a vocabulary terminal.
    pub fn to_tokens(&self, vocab: &Vocab) -> Vec<TokenId> {
        self.to_lexemes()
            .iter()
            .map(|l| vocab.expect_id(l))
            .collect()
    }
}

fn push_range(width: u8, out: &mut Vec<String>) {
    if width > 1 {
        out.extend(["[".into(), (width - 1).to_string(), ":".into(), "0".into(), "]".into()]);
    }
}

/// Renders an expression on its own, e.g. for diagnostics.
pub fn expr_source(e: &Expr) -> String {
    let mut out = Vec::new();
    e.render(&mut out);
    out.join(" ")
}
