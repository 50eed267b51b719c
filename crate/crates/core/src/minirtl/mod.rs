//! MiniRTL: a closed-vocabulary synthesizable Verilog subset with exact
//! two-valued semantics. Tokenizer, parser, interface extraction,
//! cycle simulator and bounded equivalence checking.

mod ast;
mod equiv;
mod lexer;
mod parser;
mod sim;
pub mod vocab;

pub use ast::{
    expr_source, BinOp, ContAssign, Direction, Edge, Expr, Interface, ModuleAst, PortDecl,
    Register, SignalDecl, SignalKind,
};
pub use equiv::{
    coverage_vectors, equivalence_fraction, satisfies_coverage, truth_table, EquivError,
    Equivalence, MAX_COMBINATIONAL_BITS, MAX_EXHAUSTIVE_SEQUENTIAL_BITS, RANDOM_CYCLES,
    SEQUENTIAL_ROUNDS,
};
pub use lexer::{detokenize, tokenize, LexError};
pub use parser::{parse, ParseError, SemanticError, SemanticKind, SyntaxError};
pub use sim::{data_inputs, eval_expr, simulate, Compiled, Stimulus, StimulusError, Trace};
pub use vocab::{Keyword, Punct, TokenId, TokenKind, Vocab};

/// Ports of a parsed module in declaration order.
pub fn extract_interface(ast: &ModuleAst) -> Interface {
    ast.interface.clone()
}

/// Tokenize and parse in one step.
pub fn parse_source(vocab: &Vocab, text: &str) -> Result<ModuleAst, SourceError> {
    let tokens = tokenize(vocab, text)?;
    Ok(parse(vocab, &tokens)?)
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SourceError {
    #[error(transparent)]
    Lex(#[from] LexError),
    #[error(transparent)]
    Parse(#[from] ParseError),
}
