use super::vocab::{TokenId, Vocab};

/// Lexeme outside the MiniRTL alphabet. `position` is a byte offset.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("lex error at byte {position}: unexpected `{lexeme}`")]
pub struct LexError {
    pub position: usize,
    pub lexeme: String,
}

/// Splits MiniRTL source into vocabulary ids. Whitespace is insignificant
/// except as a separator.
pub fn tokenize(vocab: &Vocab, text: &str) -> Result<Vec<TokenId>, LexError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        let end = if c.is_ascii_alphabetic() || c == b'_' {
            scan_while(bytes, i, |b| b.is_ascii_alphanumeric() || b == b'_')
        } else if c.is_ascii_digit() {
            scan_while(bytes, i, |b| b.is_ascii_digit())
        } else if c == b'<' {
            match bytes.get(i + 1) {
                Some(b'=') => i + 2,
                _ => match bytes[i..].iter().position(|&b| b == b'>') {
                    Some(off) => i + off + 1,
                    None => i + 1,
                },
            }
        } else if c == b'=' && bytes.get(i + 1) == Some(&b'=') {
            i + 2
        } else {
            // One character, possibly multi-byte.
            i + text[i..].chars().next().map_or(1, char::len_utf8)
        };
        let lexeme = &text[start..end];
        match vocab.id(lexeme) {
            Some(id) => out.push(id),
            None => {
                return Err(LexError {
                    position: start,
                    lexeme: lexeme.to_string(),
                })
            }
        }
        i = end;
    }
    Ok(out)
}

fn scan_while(bytes: &[u8], mut i: usize, pred: impl Fn(u8) -> bool) -> usize {
    while i < bytes.len() && pred(bytes[i]) {
        i += 1;
    }
    i
}

/// Canonical single-space rendering. Ids outside the vocabulary render as
/// `<unk>`.
pub fn detokenize(vocab: &Vocab, ids: &[TokenId]) -> String {
    let mut s = String::new();
    for (n, &id) in ids.iter().enumerate() {
        if n > 0 {
            s.push(' ');
        }
        s.push_str(vocab.token(id).unwrap_or("<unk>"));
    }
    s
}
