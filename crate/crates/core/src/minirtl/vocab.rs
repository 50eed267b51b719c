//! Closed token vocabulary shared by the MiniRTL front-end, the prompt
//! encoder and the policy.

use std::collections::HashMap;
use std::sync::OnceLock;

use sha2::{Digest, Sha256};

/// Dense token id in `0..Vocab::len()`.
pub type TokenId = u32;

pub const PAD: &str = "<pad>";
pub const BOS: &str = "<bos>";
pub const EOS: &str = "<eos>";
pub const SPEC: &str = "<spec>";
pub const END_SPEC: &str = "</spec>";
pub const IN: &str = "<in>";
pub const OUT: &str = "<out>";
pub const TT: &str = "<tt>";
pub const REG_TAG: &str = "<reg>";
pub const CNT_TAG: &str = "<cnt>";
pub const FSM_TAG: &str = "<fsm>";
pub const RST_TAG: &str = "<rst>";
pub const NO_RST_TAG: &str = "<norst>";
pub const UP_TAG: &str = "<up>";
pub const DOWN_TAG: &str = "<down>";

const SPECIALS: [&str; 15] = [
    PAD, BOS, EOS, SPEC, END_SPEC, IN, OUT, TT, REG_TAG, CNT_TAG, FSM_TAG, RST_TAG, NO_RST_TAG,
    UP_TAG, DOWN_TAG,
];

const KEYWORDS: [&str; 14] = [
    "module", "endmodule", "input", "output", "wire", "reg", "assign", "always", "posedge",
    "negedge", "if", "else", "begin", "end",
];

const PUNCTUATION: [&str; 16] = [
    "@", "(", ")", "[", "]", ";", ",", "=", "<=", "==", "?", ":", "&", "|", "^", "~",
];

const NUMBERS: [&str; 5] = ["0", "1", "2", "3", "4"];

/// Signal identifiers usable for ports, wires and registers.
pub const IDENTIFIERS: [&str; 15] = [
    "a", "b", "c", "d", "e", "sel", "clk", "rst", "y", "z", "q", "q0", "q1", "t0", "t1",
];

/// Module-name pool.
pub const MODULE_NAMES: [&str; 64] = [
    "and2", "or2", "xor2", "nand2", "nor2", "xnor2", "and3", "or3", "xor3", "maj3", "mux2",
    "mux4", "pick2", "pick3", "gate1", "gate2", "gate3", "gate4", "logic1", "logic2", "logic3",
    "logic4", "comb1", "comb2", "comb3", "comb4", "func1", "func2", "func3", "func4", "dff1",
    "dff2", "reg1", "reg2", "hold1", "hold2", "cnt2", "ctr2", "tick2", "step2", "fsm1", "fsm2",
    "seq1", "seq2", "det1", "det2", "toggle", "blink", "parity", "chk1", "chk2", "enc1", "dec1",
    "cmp1", "cmp2", "eq1", "neq1", "bit1", "bit2", "unit1", "unit2", "core1", "top1", "top2",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Keyword {
    Module,
    EndModule,
    Input,
    Output,
    Wire,
    Reg,
    Assign,
    Always,
    Posedge,
    Negedge,
    If,
    Else,
    Begin,
    End,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Punct {
    At,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Semi,
    Comma,
    Assign,
    NonBlocking,
    EqEq,
    Question,
    Colon,
    And,
    Or,
    Xor,
    Not,
}

/// Lexical class of a vocabulary entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TokenKind {
    Special,
    Keyword(Keyword),
    Punct(Punct),
    Number(u8),
    Ident,
    ModuleName,
    /// Entry of a caller-supplied vocabulary that is not a MiniRTL terminal.
    Other,
}

fn classify(token: &str) -> TokenKind {
    use Keyword as K;
    use Punct as P;
    if SPECIALS.contains(&token) {
        return TokenKind::Special;
    }
    let kw = match token {
        "module" => Some(K::Module),
        "endmodule" => Some(K::EndModule),
        "input" => Some(K::Input),
        "output" => Some(K::Output),
        "wire" => Some(K::Wire),
        "reg" => Some(K::Reg),
        "assign" => Some(K::Assign),
        "always" => Some(K::Always),
        "posedge" => Some(K::Posedge),
        "negedge" => Some(K::Negedge),
        "if" => Some(K::If),
        "else" => Some(K::Else),
        "begin" => Some(K::Begin),
        "end" => Some(K::End),
        _ => None,
    };
    if let Some(kw) = kw {
        return TokenKind::Keyword(kw);
    }
    let p = match token {
        "@" => Some(P::At),
        "(" => Some(P::LParen),
        ")" => Some(P::RParen),
        "[" => Some(P::LBracket),
        "]" => Some(P::RBracket),
        ";" => Some(P::Semi),
        "," => Some(P::Comma),
        "=" => Some(P::Assign),
        "<=" => Some(P::NonBlocking),
        "==" => Some(P::EqEq),
        "?" => Some(P::Question),
        ":" => Some(P::Colon),
        "&" => Some(P::And),
        "|" => Some(P::Or),
        "^" => Some(P::Xor),
        "~" => Some(P::Not),
        _ => None,
    };
    if let Some(p) = p {
        return TokenKind::Punct(p);
    }
    if let Some(i) = NUMBERS.iter().position(|n| *n == token) {
        return TokenKind::Number(i as u8);
    }
    if IDENTIFIERS.contains(&token) {
        return TokenKind::Ident;
    }
    if MODULE_NAMES.contains(&token) {
        return TokenKind::ModuleName;
    }
    TokenKind::Other
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum VocabError {
    #[error("empty vocabulary")]
    Empty,
    #[error("duplicate token `{0}`")]
    Duplicate(String),
}

/// Ordered token list with dense ids.
#[derive(Debug, Clone)]
pub struct Vocab {
    tokens: Vec<String>,
    kinds: Vec<TokenKind>,
    index: HashMap<String, TokenId>,
}

impl Vocab {
    pub fn from_tokens<I, S>(tokens: I) -> Result<Self, VocabError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let tokens: Vec<String> = tokens.into_iter().map(Into::into).collect();
        if tokens.is_empty() {
            return Err(VocabError::Empty);
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i as TokenId).is_some() {
                return Err(VocabError::Duplicate(t.clone()));
            }
        }
        let kinds = tokens.iter().map(|t| classify(t)).collect();
        Ok(Self { tokens, kinds, index })
    }

    /// The MiniRTL vocabulary: reserved tokens, prompt markers, every
    /// terminal of the grammar, the identifier pool and the module-name pool.
    pub fn minirtl() -> &'static Vocab {
        static VOCAB: OnceLock<Vocab> = OnceLock::new();
        VOCAB.get_or_init(|| {
            let all = SPECIALS
                .iter()
                .chain(KEYWORDS.iter())
                .chain(PUNCTUATION.iter())
                .chain(NUMBERS.iter())
                .chain(IDENTIFIERS.iter())
                .chain(MODULE_NAMES.iter())
                .copied();
            Vocab::from_tokens(all).expect("builtin vocabulary is well-formed")
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    /// Id of a token known to be present. Panics otherwise.
    pub fn expect_id(&self, token: &str) -> TokenId {
        self.id(token)
            .unwrap_or_else(|| panic!("token `{token}` missing from vocabulary"))
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn kind(&self, id: TokenId) -> Option<TokenKind> {
        self.kinds.get(id as usize).copied()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn pad(&self) -> TokenId {
        self.id(PAD).unwrap_or(0)
    }

    pub fn bos(&self) -> TokenId {
        self.expect_id(BOS)
    }

    pub fn eos(&self) -> TokenId {
        self.expect_id(EOS)
    }

    /// SHA-256 over the newline-joined token list, lowercase hex.
    pub fn hash(&self) -> String {
        let mut hasher = Sha256::new();
        for t in &self.tokens {
            hasher.update(t.as_bytes());
            hasher.update(b"\n");
        }
        hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_are_dense_and_invertible() {
        let v = Vocab::minirtl();
        for (i, t) in v.tokens().iter().enumerate() {
            assert_eq!(v.id(t), Some(i as TokenId));
        }
        assert_eq!(v.len(), 129);
    }

    #[test]
    fn reserved_tokens_present() {
        let v = Vocab::minirtl();
        for t in [PAD, BOS, EOS, "module", "<=", "==", "~", "4", "q1", "and2"] {
            assert!(v.id(t).is_some(), "{t}");
        }
        assert_eq!(v.kind(v.expect_id("and2")), Some(TokenKind::ModuleName));
        assert_eq!(v.kind(v.expect_id("sel")), Some(TokenKind::Ident));
        assert_eq!(v.kind(v.expect_id("3")), Some(TokenKind::Number(3)));
    }

    #[test]
    fn duplicate_rejected() {
        assert_eq!(
            Vocab::from_tokens(["x", "x"]).unwrap_err(),
            VocabError::Duplicate("x".into())
        );
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = Vocab::from_tokens(["x", "y"]).unwrap();
        let b = Vocab::from_tokens(["y", "x"]).unwrap();
        assert_eq!(a.hash(), a.clone().hash());
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
