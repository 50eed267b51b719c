use std::collections::HashMap;
use std::fmt;

use super::ast::{
    BinOp, ContAssign, Direction, Edge, Expr, Interface, ModuleAst, PortDecl, Register, SignalDecl,
    SignalKind,
};
use super::vocab::{Keyword, Punct, TokenId, TokenKind, Vocab};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntaxError {
    /// Index of the first offending token; equals the sequence length when
    /// input ended early.
    pub index: usize,
    pub expected: Vec<&'static str>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SemanticKind {
    Undeclared,
    MultiDriver,
    CombCycle,
    WidthMismatch,
    Undriven,
    IllegalTarget,
    Duplicate,
    MissingPorts,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SemanticError {
    pub kind: SemanticKind,
    pub signal: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("syntax error at token {}: expected one of {:?}", .0.index, .0.expected)]
    Syntax(SyntaxError),
    #[error("semantic error ({:?}) on `{}`", .0.kind, .0.signal)]
    Semantic(SemanticError),
}

impl ParseError {
    fn semantic(kind: SemanticKind, signal: &str) -> Self {
        ParseError::Semantic(SemanticError {
            kind,
            signal: signal.to_string(),
        })
    }

    pub fn semantic_kind(&self) -> Option<SemanticKind> {
        match self {
            ParseError::Semantic(e) => Some(e.kind),
            ParseError::Syntax(_) => None,
        }
    }
}

impl fmt::Display for SemanticKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SemanticKind::Undeclared => "undeclared",
            SemanticKind::MultiDriver => "multi-driver",
            SemanticKind::CombCycle => "comb-cycle",
            SemanticKind::WidthMismatch => "width-mismatch",
            SemanticKind::Undriven => "undriven",
            SemanticKind::IllegalTarget => "illegal-target",
            SemanticKind::Duplicate => "duplicate",
            SemanticKind::MissingPorts => "missing-ports",
        };
        f.write_str(s)
    }
}

/// Parses one MiniRTL module and checks every structural invariant of
/// [`ModuleAst`].
pub fn parse(vocab: &Vocab, tokens: &[TokenId]) -> Result<ModuleAst, ParseError> {
    let mut p = Parser {
        vocab,
        tokens,
        pos: 0,
    };
    let raw = p.module().map_err(ParseError::Syntax)?;
    check(raw)
}

/// Module as read, before semantic checks.
struct RawModule {
    interface: Interface,
    decls: Vec<SignalDecl>,
    assigns: Vec<ContAssign>,
    registers: Vec<Register>,
}

struct Parser<'a> {
    vocab: &'a Vocab,
    tokens: &'a [TokenId],
    pos: usize,
}

type PResult<T> = Result<T, SyntaxError>;

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<TokenKind> {
        self.tokens.get(self.pos).and_then(|&t| self.vocab.kind(t))
    }

    fn text(&self) -> &'a str {
        let id = self.tokens[self.pos];
        self.vocab.token(id).unwrap_or("")
    }

    fn fail<T>(&self, expected: &[&'static str]) -> PResult<T> {
        Err(SyntaxError {
            index: self.pos,
            expected: expected.to_vec(),
        })
    }

    fn at_kw(&self, kw: Keyword) -> bool {
        self.peek() == Some(TokenKind::Keyword(kw))
    }

    fn at_punct(&self, p: Punct) -> bool {
        self.peek() == Some(TokenKind::Punct(p))
    }

    fn kw(&mut self, kw: Keyword, name: &'static str) -> PResult<()> {
        if self.at_kw(kw) {
            self.pos += 1;
            Ok(())
        } else {
            self.fail(&[name])
        }
    }

    fn punct(&mut self, p: Punct, name: &'static str) -> PResult<()> {
        if self.at_punct(p) {
            self.pos += 1;
            Ok(())
        } else {
            self.fail(&[name])
        }
    }

    fn ident(&mut self) -> PResult<String> {
        if self.peek() == Some(TokenKind::Ident) {
            let s = self.text().to_string();
            self.pos += 1;
            Ok(s)
        } else {
            self.fail(&["identifier"])
        }
    }

    fn number(&mut self) -> PResult<u8> {
        match self.peek() {
            Some(TokenKind::Number(n)) => {
                self.pos += 1;
                Ok(n)
            }
            _ => self.fail(&["number"]),
        }
    }

    fn module(&mut self) -> PResult<RawModule> {
        self.kw(Keyword::Module, "module")?;
        let module_name = if self.peek() == Some(TokenKind::ModuleName) {
            let s = self.text().to_string();
            self.pos += 1;
            s
        } else {
            return self.fail(&["module name"]);
        };
        self.punct(Punct::LParen, "(")?;
        let mut ports = Vec::new();
        let mut decls = Vec::new();
        loop {
            let (port, kind) = self.port()?;
            decls.push(SignalDecl {
                name: port.name.clone(),
                width: port.width,
                kind,
            });
            ports.push(port);
            if self.at_punct(Punct::Comma) {
                self.pos += 1;
                continue;
            }
            if self.at_punct(Punct::RParen) {
                self.pos += 1;
                break;
            }
            return self.fail(&[",", ")"]);
        }
        self.punct(Punct::Semi, ";")?;
        let mut assigns = Vec::new();
        let mut registers = Vec::new();
        loop {
            match self.peek() {
                Some(TokenKind::Keyword(Keyword::EndModule)) => {
                    self.pos += 1;
                    break;
                }
                Some(TokenKind::Keyword(Keyword::Wire)) | Some(TokenKind::Keyword(Keyword::Reg)) => {
                    let kind = if self.at_kw(Keyword::Wire) {
                        SignalKind::Wire
                    } else {
                        SignalKind::Reg
                    };
                    self.pos += 1;
                    let width = self.range()?;
                    let name = self.ident()?;
                    self.punct(Punct::Semi, ";")?;
                    decls.push(SignalDecl { name, width, kind });
                }
                Some(TokenKind::Keyword(Keyword::Assign)) => {
                    self.pos += 1;
                    let target = self.ident()?;
                    self.punct(Punct::Assign, "=")?;
                    let expr = self.expr()?;
                    self.punct(Punct::Semi, ";")?;
                    assigns.push(ContAssign { target, expr });
                }
                Some(TokenKind::Keyword(Keyword::Always)) => {
                    self.pos += 1;
                    registers.push(self.always()?);
                }
                _ => return self.fail(&["wire", "reg", "assign", "always", "endmodule"]),
            }
        }
        if self.pos != self.tokens.len() {
            return self.fail(&["end of input"]);
        }
        Ok(RawModule {
            interface: Interface { module_name, ports },
            decls,
            assigns,
            registers,
        })
    }

    fn port(&mut self) -> PResult<(PortDecl, SignalKind)> {
        let (direction, kind) = if self.at_kw(Keyword::Input) {
            self.pos += 1;
            (Direction::Input, SignalKind::Input)
        } else if self.at_kw(Keyword::Output) {
            self.pos += 1;
            if self.at_kw(Keyword::Reg) {
                self.pos += 1;
                (Direction::Output, SignalKind::OutputReg)
            } else {
                (Direction::Output, SignalKind::Output)
            }
        } else {
            return self.fail(&["input", "output"]);
        };
        let width = self.range()?;
        let name = self.ident()?;
        Ok((
            PortDecl {
                name,
                direction,
                width,
            },
            kind,
        ))
    }

    /// Optional `[ msb : 0 ]`, msb in 0..=3.
    fn range(&mut self) -> PResult<u8> {
        if !self.at_punct(Punct::LBracket) {
            return Ok(1);
        }
        self.pos += 1;
        let msb = self.number()?;
        if msb > 3 {
            self.pos -= 1;
            return self.fail(&["0", "1", "2", "3"]);
        }
        self.punct(Punct::Colon, ":")?;
        if self.peek() != Some(TokenKind::Number(0)) {
            return self.fail(&["0"]);
        }
        self.pos += 1;
        self.punct(Punct::RBracket, "]")?;
        Ok(msb + 1)
    }

    fn always(&mut self) -> PResult<Register> {
        self.punct(Punct::At, "@")?;
        self.punct(Punct::LParen, "(")?;
        let edge = if self.at_kw(Keyword::Posedge) {
            Edge::Posedge
        } else if self.at_kw(Keyword::Negedge) {
            Edge::Negedge
        } else {
            return self.fail(&["posedge", "negedge"]);
        };
        self.pos += 1;
        let clock = self.ident()?;
        self.punct(Punct::RParen, ")")?;
        let (target, next, reset) = self.statement()?;
        Ok(Register {
            target,
            next,
            edge,
            clock,
            reset,
        })
    }

    /// `begin stmt end` | `q <= e ;` | `if ( c ) q <= e ; [else q <= e ;]`
    fn statement(&mut self) -> PResult<(String, Expr, Option<Expr>)> {
        if self.at_kw(Keyword::Begin) {
            self.pos += 1;
            let s = self.statement()?;
            self.kw(Keyword::End, "end")?;
            return Ok(s);
        }
        if self.at_kw(Keyword::If) {
            self.pos += 1;
            self.punct(Punct::LParen, "(")?;
            let cond = self.expr()?;
            self.punct(Punct::RParen, ")")?;
            let (target, then_e) = self.nonblocking()?;
            let else_e = if self.at_kw(Keyword::Else) {
                self.pos += 1;
                let at = self.pos;
                let (t2, e2) = self.nonblocking()?;
                if t2 != target {
                    return Err(SyntaxError {
                        index: at,
                        expected: vec!["same register target"],
                    });
                }
                e2
            } else {
                Expr::Signal(target.clone())
            };
            return Ok(if then_e == Expr::Const(0) {
                (target, else_e, Some(cond))
            } else {
                let next = Expr::ternary(cond, then_e, else_e);
                (target, next, None)
            });
        }
        let (target, e) = self.nonblocking()?;
        Ok((target, e, None))
    }

    fn nonblocking(&mut self) -> PResult<(String, Expr)> {
        let target = self.ident()?;
        self.punct(Punct::NonBlocking, "<=")?;
        let e = self.expr()?;
        self.punct(Punct::Semi, ";")?;
        Ok((target, e))
    }

    fn expr(&mut self) -> PResult<Expr> {
        let cond = self.binary(1)?;
        if self.at_punct(Punct::Question) {
            self.pos += 1;
            let t = self.expr()?;
            self.punct(Punct::Colon, ":")?;
            let f = self.expr()?;
            return Ok(Expr::ternary(cond, t, f));
        }
        Ok(cond)
    }

    fn binop(&self) -> Option<BinOp> {
        match self.peek()? {
            TokenKind::Punct(Punct::And) => Some(BinOp::And),
            TokenKind::Punct(Punct::Or) => Some(BinOp::Or),
            TokenKind::Punct(Punct::Xor) => Some(BinOp::Xor),
            TokenKind::Punct(Punct::EqEq) => Some(BinOp::Eq),
            _ => None,
        }
    }

    /// Precedence climbing over the left-associative binary operators.
    fn binary(&mut self, min_prec: u8) -> PResult<Expr> {
        let mut lhs = self.unary()?;
        while let Some(op) = self.binop() {
            let prec = op.precedence();
            if prec < min_prec {
                break;
            }
            self.pos += 1;
            let rhs = self.binary(prec + 1)?;
            lhs = Expr::bin(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> PResult<Expr> {
        if self.at_punct(Punct::Not) {
            self.pos += 1;
            return Ok(Expr::not(self.unary()?));
        }
        match self.peek() {
            Some(TokenKind::Punct(Punct::LParen)) => {
                self.pos += 1;
                let e = self.expr()?;
                self.punct(Punct::RParen, ")")?;
                Ok(e)
            }
            Some(TokenKind::Number(n)) if n <= 1 => {
                self.pos += 1;
                Ok(Expr::Const(n))
            }
            Some(TokenKind::Ident) => {
                let name = self.ident()?;
                if self.at_punct(Punct::LBracket) {
                    self.pos += 1;
                    let idx = self.number()?;
                    self.punct(Punct::RBracket, "]")?;
                    Ok(Expr::Index(name, idx))
                } else {
                    Ok(Expr::Signal(name))
                }
            }
            _ => self.fail(&["identifier", "0", "1", "(", "~"]),
        }
    }
}

fn check(raw: RawModule) -> Result<ModuleAst, ParseError> {
    let RawModule {
        interface,
        decls,
        assigns,
        registers,
    } = raw;

    let mut table: HashMap<&str, &SignalDecl> = HashMap::new();
    for d in &decls {
        if table.insert(d.name.as_str(), d).is_some() {
            return Err(ParseError::semantic(SemanticKind::Duplicate, &d.name));
        }
    }
    if interface.inputs().next().is_none() || interface.outputs().next().is_none() {
        return Err(ParseError::semantic(
            SemanticKind::MissingPorts,
            &interface.module_name,
        ));
    }

    let width_of = |e: &Expr| expr_width(e, &table);

    let mut drivers: HashMap<&str, usize> = HashMap::new();
    for a in &assigns {
        let d = table
            .get(a.target.as_str())
            .ok_or_else(|| ParseError::semantic(SemanticKind::Undeclared, &a.target))?;
        if !d.kind.is_net() {
            return Err(ParseError::semantic(SemanticKind::IllegalTarget, &a.target));
        }
        if width_of(&a.expr)? != d.width {
            return Err(ParseError::semantic(SemanticKind::WidthMismatch, &a.target));
        }
        *drivers.entry(a.target.as_str()).or_default() += 1;
    }
    for r in &registers {
        let d = table
            .get(r.target.as_str())
            .ok_or_else(|| ParseError::semantic(SemanticKind::Undeclared, &r.target))?;
        if !d.kind.is_reg() {
            return Err(ParseError::semantic(SemanticKind::IllegalTarget, &r.target));
        }
        let clk = table
            .get(r.clock.as_str())
            .ok_or_else(|| ParseError::semantic(SemanticKind::Undeclared, &r.clock))?;
        if clk.kind != SignalKind::Input {
            return Err(ParseError::semantic(SemanticKind::IllegalTarget, &r.clock));
        }
        if clk.width != 1 {
            return Err(ParseError::semantic(SemanticKind::WidthMismatch, &r.clock));
        }
        if width_of(&r.next)? != d.width {
            return Err(ParseError::semantic(SemanticKind::WidthMismatch, &r.target));
        }
        if let Some(rst) = &r.reset {
            if width_of(rst)? != 1 {
                return Err(ParseError::semantic(SemanticKind::WidthMismatch, &r.target));
            }
        }
        *drivers.entry(r.target.as_str()).or_default() += 1;
    }
    for d in &decls {
        let n = drivers.get(d.name.as_str()).copied().unwrap_or(0);
        match (d.kind, n) {
            (SignalKind::Input, _) => {}
            (_, 0) => return Err(ParseError::semantic(SemanticKind::Undriven, &d.name)),
            (_, 1) => {}
            _ => return Err(ParseError::semantic(SemanticKind::MultiDriver, &d.name)),
        }
    }

    let ast = ModuleAst {
        interface,
        decls,
        assigns,
        registers,
    };
    if let Err(sig) = comb_order(&ast) {
        return Err(ParseError::semantic(SemanticKind::CombCycle, &sig));
    }
    Ok(ast)
}

fn expr_width(e: &Expr, table: &HashMap<&str, &SignalDecl>) -> Result<u8, ParseError> {
    let lookup = |s: &str| {
        table
            .get(s)
            .map(|d| d.width)
            .ok_or_else(|| ParseError::semantic(SemanticKind::Undeclared, s))
    };
    match e {
        Expr::Signal(s) => lookup(s),
        Expr::Index(s, i) => {
            if *i >= lookup(s)? {
                Err(ParseError::semantic(SemanticKind::WidthMismatch, s))
            } else {
                Ok(1)
            }
        }
        Expr::Const(_) => Ok(1),
        Expr::Not(inner) => expr_width(inner, table),
        Expr::Binary(op, l, r) => {
            let (wl, wr) = (expr_width(l, table)?, expr_width(r, table)?);
            if wl != wr {
                return Err(width_error(e));
            }
            Ok(if *op == BinOp::Eq { 1 } else { wl })
        }
        Expr::Ternary(c, t, f) => {
            let wc = expr_width(c, table)?;
            let (wt, wf) = (expr_width(t, table)?, expr_width(f, table)?);
            if wc != 1 || wt != wf {
                return Err(width_error(e));
            }
            Ok(wt)
        }
    }
}

fn width_error(e: &Expr) -> ParseError {
    let sig = e.signals().first().map(|s| s.to_string()).unwrap_or_default();
    ParseError::semantic(SemanticKind::WidthMismatch, &sig)
}

/// Evaluation order of the continuous assigns (indices into
/// `ast.assigns`), or the name of a signal on a combinational cycle.
pub fn comb_order(ast: &ModuleAst) -> Result<Vec<usize>, String> {
    let n = ast.assigns.len();
    let producer: HashMap<&str, usize> = ast
        .assigns
        .iter()
        .enumerate()
        .map(|(i, a)| (a.target.as_str(), i))
        .collect();
    // deps[i] = assigns that must run before i
    let mut indegree = vec![0usize; n];
    let mut users: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, a) in ast.assigns.iter().enumerate() {
        for s in a.expr.signals() {
            if let Some(&j) = producer.get(s) {
                indegree[i] += 1;
                users[j].push(i);
            }
        }
    }
    let mut ready: Vec<usize> = (0..n).filter(|&i| indegree[i] == 0).rev().collect();
    let mut order = Vec::with_capacity(n);
    while let Some(i) = ready.pop() {
        order.push(i);
        for &u in &users[i] {
            indegree[u] -= 1;
            if indegree[u] == 0 {
                ready.push(u);
            }
        }
    }
    if order.len() == n {
        Ok(order)
    } else {
        let stuck = (0..n).find(|&i| indegree[i] > 0).unwrap_or(0);
        Err(ast.assigns[stuck].target.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::minirtl::lexer::tokenize;

    fn parse_src(src: &str) -> Result<ModuleAst, ParseError> {
        let v = Vocab::minirtl();
        parse(v, &tokenize(v, src).unwrap())
    }

    const AND2: &str = "module and2 ( input a , input b , output y ) ; assign y = a & b ; endmodule";

    #[test]
    fn minimal_module() {
        let ast = parse_src(AND2).unwrap();
        assert_eq!(ast.interface.inputs().count(), 2);
        assert_eq!(ast.assigns.len(), 1);
        assert_eq!(ast.to_source(), AND2);
    }

    #[test]
    fn missing_endmodule_fails_at_end() {
        let src = AND2.trim_end_matches(" endmodule");
        let n = tokenize(Vocab::minirtl(), src).unwrap().len();
        match parse_src(src) {
            Err(ParseError::Syntax(e)) => assert_eq!(e.index, n),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn multi_driver() {
        let src = "module and2 ( input a , input b , output y ) ; assign y = a & b ; assign y = a ; endmodule";
        assert_eq!(
            parse_src(src).unwrap_err().semantic_kind(),
            Some(SemanticKind::MultiDriver)
        );
    }

    #[test]
    fn undeclared_and_width_and_cycle() {
        let cases = [
            (
                "module top1 ( input a , output y ) ; assign y = a & c ; endmodule",
                SemanticKind::Undeclared,
            ),
            (
                "module top1 ( input [ 1 : 0 ] a , input b , output y ) ; assign y = a & b ; endmodule",
                SemanticKind::WidthMismatch,
            ),
            (
                "module top1 ( input a , output y ) ; wire t0 ; wire t1 ; assign t0 = t1 ; assign t1 = t0 & a ; assign y = t0 ; endmodule",
                SemanticKind::CombCycle,
            ),
            (
                "module top1 ( input a , output y ) ; wire t0 ; assign y = a ; endmodule",
                SemanticKind::Undriven,
            ),
            (
                "module top1 ( input a , output y ) ; assign a = y ; assign y = 1 ; endmodule",
                SemanticKind::IllegalTarget,
            ),
            (
                "module top1 ( input a , output y ) ; always @ ( posedge a ) y <= a ; endmodule",
                SemanticKind::IllegalTarget,
            ),
            (
                "module top1 ( input a , input a , output y ) ; assign y = a ; endmodule",
                SemanticKind::Duplicate,
            ),
            (
                "module top1 ( output y ) ; assign y = 1 ; endmodule",
                SemanticKind::MissingPorts,
            ),
            (
                "module top1 ( input [ 3 : 0 ] a , output y ) ; assign y = a [ 4 ] ; endmodule",
                SemanticKind::WidthMismatch,
            ),
        ];
        for (src, kind) in cases {
            assert_eq!(parse_src(src).unwrap_err().semantic_kind(), Some(kind), "{src}");
        }
    }

    #[test]
    fn bus_port_width() {
        let ast = parse_src(
            "module bit1 ( input [ 3 : 0 ] a , output y ) ; assign y = a [ 0 ] ^ a [ 3 ] ; endmodule",
        )
        .unwrap();
        assert_eq!(ast.interface.ports[0].width, 4);
    }

    #[test]
    fn register_forms() {
        let src = "module dff1 ( input clk , input rst , input d , output reg q ) ; always @ ( posedge clk ) if ( rst ) q <= 0 ; else q <= ~ d ; endmodule";
        let ast = parse_src(src).unwrap();
        assert_eq!(ast.registers.len(), 1);
        assert!(ast.registers[0].reset.is_some());
        assert_eq!(ast.to_source(), src);

        let wrapped = "module dff1 ( input clk , input d , output reg q ) ; always @ ( negedge clk ) begin if ( d ) q <= 1 ; end endmodule";
        let ast = parse_src(wrapped).unwrap();
        assert_eq!(ast.registers[0].edge, Edge::Negedge);
        assert_eq!(
            ast.registers[0].next,
            Expr::ternary(Expr::signal("d"), Expr::Const(1), Expr::signal("q"))
        );
    }

    #[test]
    fn precedence_and_round_trip() {
        let src = "module top1 ( input a , input b , input c , output y ) ; assign y = a | b & c ^ ~ ( a | c ) ; endmodule";
        let ast = parse_src(src).unwrap();
        let again = parse_src(&ast.to_source()).unwrap();
        assert_eq!(ast, again);
        match &ast.assigns[0].expr {
            Expr::Binary(BinOp::Or, _, r) => assert!(matches!(**r, Expr::Binary(BinOp::Xor, ..))),
            e => panic!("{e:?}"),
        }
        let tern = "module top1 ( input sel , input a , input b , output y ) ; assign y = sel ? a : b == a ? 1 : 0 ; endmodule";
        let ast = parse_src(tern).unwrap();
        assert_eq!(parse_src(&ast.to_source()).unwrap(), ast);
    }

    #[test]
    fn trailing_tokens_rejected() {
        let src = format!("{AND2} endmodule");
        assert!(matches!(parse_src(&src), Err(ParseError::Syntax(_))));
    }
}
