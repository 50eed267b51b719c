use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::DomainError;
use crate::minirtl::{Keyword, Punct, TokenId, TokenKind, Vocab};
use crate::policy::Rollout;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TokenClass {
    ProcessSensitivity,
    ControlFlow,
    BindingConnection,
    ModuleHead,
    StructuralTerminator,
    Identifier,
    Literal,
    Other,
}

impl TokenClass {
    pub const ALL: [TokenClass; 8] = [
        TokenClass::ProcessSensitivity,
        TokenClass::ControlFlow,
        TokenClass::BindingConnection,
        TokenClass::ModuleHead,
        TokenClass::StructuralTerminator,
        TokenClass::Identifier,
        TokenClass::Literal,
        TokenClass::Other,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TokenClass::ProcessSensitivity => "process-sensitivity",
            TokenClass::ControlFlow => "control-flow",
            TokenClass::BindingConnection => "binding-connection",
            TokenClass::ModuleHead => "module-head",
            TokenClass::StructuralTerminator => "structural-terminator",
            TokenClass::Identifier => "identifier",
            TokenClass::Literal => "literal",
            TokenClass::Other => "other",
        }
    }
}

/// Class of every vocabulary entry, indexed by token id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenClassMap {
    classes: Vec<TokenClass>,
}

impl TokenClassMap {
    pub fn new(vocab: &Vocab) -> Self {
        use Keyword as K;
        use Punct as P;
        let classes = (0..vocab.len() as TokenId)
            .map(|id| match vocab.kind(id) {
                Some(TokenKind::Keyword(K::Always | K::Posedge | K::Negedge)) => TokenClass::ProcessSensitivity,
                Some(TokenKind::Keyword(K::If | K::Else)) | Some(TokenKind::Punct(P::Question | P::Colon)) => {
                    TokenClass::ControlFlow
                }
                Some(TokenKind::Keyword(K::Assign)) | Some(TokenKind::Punct(P::LBracket | P::RBracket)) => {
                    TokenClass::BindingConnection
                }
                Some(TokenKind::Keyword(K::Module)) => TokenClass::ModuleHead,
                Some(TokenKind::Keyword(K::End | K::EndModule | K::Input | K::Output)) => {
                    TokenClass::StructuralTerminator
                }
                Some(TokenKind::Ident | TokenKind::ModuleName) => TokenClass::Identifier,
                Some(TokenKind::Number(_)) => TokenClass::Literal,
                _ => TokenClass::Other,
            })
            .collect();
        Self { classes }
    }

    pub fn class(&self, token: TokenId) -> TokenClass {
        self.classes.get(token as usize).copied().unwrap_or(TokenClass::Other)
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }
}

/// Edges `0, w, 2w, …` with the last edge pinned to `ln V`.
pub fn default_edges(vocab_size: usize, width: f64) -> Vec<f64> {
    let top = (vocab_size as f64).ln();
    let mut edges = vec![0.0];
    let mut i = 1;
    while (i as f64) * width < top - 1e-12 {
        edges.push(i as f64 * width);
        i += 1;
    }
    edges.push(top);
    edges
}

/// Left-closed bins, last bin closed. Values outside the edge range are
/// counted in the nearest end bin so that the counts always sum to `N`.
pub fn entropy_histogram(entropies: &[f64], edges: &[f64]) -> Result<Vec<usize>, DomainError> {
    if edges.len() < 2 {
        return Err(DomainError("histogram needs at least two edges".into()));
    }
    if edges.iter().any(|e| !e.is_finite()) || edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(DomainError("histogram edges must be finite and strictly increasing".into()));
    }
    let bins = edges.len() - 1;
    let mut counts = vec![0; bins];
    for &h in entropies {
        if h.is_nan() {
            return Err(DomainError("entropy is NaN".into()));
        }
        let i = edges.partition_point(|&e| e <= h);
        counts[i.saturating_sub(1).min(bins - 1)] += 1;
    }
    Ok(counts)
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

fn median(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let mut s = xs.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() / 2;
    Some(if s.len() % 2 == 1 { s[m] } else { (s[m - 1] + s[m]) / 2.0 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    pub class: TokenClass,
    pub count: usize,
    pub mean: Option<f64>,
    pub median: Option<f64>,
}

/// One row per class, in [`TokenClass::ALL`] order.
pub fn token_class_stats(rollouts: &[Rollout], map: &TokenClassMap) -> Vec<ClassStats> {
    let mut by_class: BTreeMap<TokenClass, Vec<f64>> = BTreeMap::new();
    for ro in rollouts {
        for (&tok, &h) in ro.response_tokens.iter().zip(&ro.entropies) {
            by_class.entry(map.class(tok)).or_default().push(h);
        }
    }
    TokenClass::ALL
        .iter()
        .map(|&class| {
            let hs = by_class.get(&class).map(Vec::as_slice).unwrap_or(&[]);
            ClassStats {
                class,
                count: hs.len(),
                mean: mean(hs),
                median: median(hs),
            }
        })
        .collect()
}

/// Token-weighted mean entropy over the union of `classes`.
pub fn union_mean(rollouts: &[Rollout], map: &TokenClassMap, classes: &[TokenClass]) -> Option<f64> {
    let hs: Vec<f64> = rollouts
        .iter()
        .flat_map(|ro| ro.response_tokens.iter().zip(&ro.entropies))
        .filter(|(&t, _)| classes.contains(&map.class(t)))
        .map(|(_, &h)| h)
        .collect();
    mean(&hs)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TokenEntropy {
    pub token: TokenId,
    pub mean_entropy: f64,
    pub frequency: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TopTokens {
    pub highest: Vec<TokenEntropy>,
    pub lowest: Vec<TokenEntropy>,
}

pub fn top_tokens_by_entropy(rollouts: &[Rollout], k: usize, min_frequency: usize) -> Result<TopTokens, DomainError> {
    if k == 0 || min_frequency == 0 {
        return Err(DomainError("k and the frequency floor must be at least 1".into()));
    }
    let mut acc: BTreeMap<TokenId, (f64, usize)> = BTreeMap::new();
    for ro in rollouts {
        for (&tok, &h) in ro.response_tokens.iter().zip(&ro.entropies) {
            let e = acc.entry(tok).or_insert((0.0, 0));
            e.0 += h;
            e.1 += 1;
        }
    }
    let rows: Vec<TokenEntropy> = acc
        .into_iter()
        .filter(|(_, (_, n))| *n >= min_frequency)
        .map(|(token, (sum, n))| TokenEntropy {
            token,
            mean_entropy: sum / n as f64,
            frequency: n,
        })
        .collect();
    let mut highest = rows.clone();
    highest.sort_by(|a, b| b.mean_entropy.total_cmp(&a.mean_entropy).then(a.token.cmp(&b.token)));
    highest.truncate(k);
    let mut lowest = rows;
    lowest.sort_by(|a, b| a.mean_entropy.total_cmp(&b.mean_entropy).then(a.token.cmp(&b.token)));
    lowest.truncate(k);
    Ok(TopTokens { highest, lowest })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropySummary {
    pub tokens: usize,
    pub median: f64,
    pub mean: f64,
    /// `median < mean`: the mass sits low with a long high-entropy tail.
    pub right_skewed: bool,
    pub threshold: f64,
    pub fraction_below: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyReport {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub classes: Vec<ClassStats>,
    pub top: TopTokens,
    pub summary: EntropySummary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EntropyStudyConfig {
    pub bin_width: f64,
    pub top_k: usize,
    pub min_frequency: usize,
    pub low_threshold: f64,
}

impl Default for EntropyStudyConfig {
    fn default() -> Self {
        Self {
            bin_width: 0.05,
            top_k: 100,
            min_frequency: 10,
            low_threshold: 0.15,
        }
    }
}

pub fn entropy_report(
    rollouts: &[Rollout],
    vocab: &Vocab,
    cfg: &EntropyStudyConfig,
) -> Result<EntropyReport, DomainError> {
    if !(cfg.bin_width > 0.0 && cfg.bin_width.is_finite()) {
        return Err(DomainError("bin width must be positive".into()));
    }
    let all: Vec<f64> = rollouts.iter().flat_map(|r| r.entropies.iter().copied()).collect();
    let edges = default_edges(vocab.len(), cfg.bin_width);
    let counts = entropy_histogram(&all, &edges)?;
    let map = TokenClassMap::new(vocab);
    let med = median(&all).unwrap_or(0.0);
    let avg = mean(&all).unwrap_or(0.0);
    let below = all.iter().filter(|&&h| h < cfg.low_threshold).count();
    Ok(EntropyReport {
        edges,
        counts,
        classes: token_class_stats(rollouts, &map),
        top: top_tokens_by_entropy(rollouts, cfg.top_k, cfg.min_frequency)?,
        summary: EntropySummary {
            tokens: all.len(),
            median: med,
            mean: avg,
            right_skewed: med < avg,
            threshold: cfg.low_threshold,
            fraction_below: below as f64 / all.len().max(1) as f64,
        },
    })
}

impl EntropyReport {
    pub fn histogram_csv(&self) -> String {
        let mut s = String::from("lower,upper,count\n");
        for (w, c) in self.edges.windows(2).zip(&self.counts) {
            let _ = writeln!(s, "{},{},{}", w[0], w[1], c);
        }
        s
    }

    pub fn classes_csv(&self) -> String {
        let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        let mut s = String::from("class,count,mean,median\n");
        for c in &self.classes {
            let _ = writeln!(s, "{},{},{},{}", c.class.name(), c.count, opt(c.mean), opt(c.median));
        }
        s
    }

    pub fn top_tokens_csv(&self, vocab: &Vocab) -> String {
        let mut s = String::from("table,rank,token,mean_entropy,frequency\n");
        for (name, rows) in [("highest", &self.top.highest), ("lowest", &self.top.lowest)] {
            for (i, r) in rows.iter().enumerate() {
                let tok = vocab.token(r.token).unwrap_or("?");
                let _ = writeln!(s, "{name},{},{},{},{}", i + 1, csv_field(tok), r.mean_entropy, r.frequency);
            }
        }
        s
    }

    pub fn histogram_svg(&self) -> String {
        let (w, h, pad) = (640.0, 320.0, 40.0);
        let max = self.counts.iter().copied().max().unwrap_or(0).max(1) as f64;
        let lo = self.edges[0];
        let span = self.edges[self.edges.len() - 1] - lo;
        let x = |e: f64| pad + (e - lo) / span * (w - 2.0 * pad);
        let mut s = svg_open(w, h);
        for (e, &c) in self.edges.windows(2).zip(&self.counts) {
            let bh = c as f64 / max * (h - 2.0 * pad);
            let _ = writeln!(
                s,
                r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#4a78b5"/>"##,
                x(e[0]),
                h - pad - bh,
                (x(e[1]) - x(e[0])).max(0.5),
                bh
            );
        }
        let _ = writeln!(
            s,
            r##"<line x1="{pad}" y1="{y}" x2="{x2}" y2="{y}" stroke="black"/>"##,
            y = h - pad,
            x2 = w - pad
        );
        let _ = writeln!(
            s,
            r#"<text x="{pad}" y="{:.0}" font-size="12">0</text><text x="{:.0}" y="{:.0}" font-size="12" text-anchor="end">{:.3} nats</text>"#,
            h - pad / 3.0,
            w - pad,
            h - pad / 3.0,
            self.edges[self.edges.len() - 1]
        );
        let _ = writeln!(
            s,
            r#"<text x="{pad}" y="{:.0}" font-size="12">{} tokens, median {:.4}, mean {:.4}</text>"#,
            pad / 2.0,
            self.summary.tokens,
            self.summary.median,
            self.summary.mean
        );
        s.push_str("</svg>\n");
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatRecord {
    pub position: usize,
    pub token: String,
    pub entropy: f64,
}

pub fn heatmap_export(rollout: &Rollout, vocab: &Vocab) -> Vec<HeatRecord> {
    rollout
        .response_tokens
        .iter()
        .zip(&rollout.entropies)
        .enumerate()
        .map(|(position, (&t, &entropy))| HeatRecord {
            position,
            token: vocab.token(t).unwrap_or("?").to_string(),
            entropy,
        })
        .collect()
}

pub fn heatmap_csv(records: &[HeatRecord]) -> String {
    let mut s = String::from("position,token,entropy\n");
    for r in records {
        let _ = writeln!(s, "{},{},{}", r.position, csv_field(&r.token), r.entropy);
    }
    s
}

/// Colour for entropy `h` on a linear white-to-red scale over `[0, max]`.
pub fn heat_color(h: f64, max: f64) -> String {
    let f = if max > 0.0 { (h / max).clamp(0.0, 1.0) } else { 0.0 };
    let g = (255.0 * (1.0 - f)).round() as u8;
    format!("#ff{g:02x}{g:02x}")
}

/// Tokens laid out left to right, wrapping after `;`, each on a cell
/// coloured by its entropy.
pub fn heatmap_svg(records: &[HeatRecord], max_entropy: f64) -> String {
    let (cw, lh, pad) = (7.5, 22.0, 10.0);
    let mut cells = Vec::with_capacity(records.len());
    let (mut col, mut line, mut width) = (0.0f64, 0usize, 0.0f64);
    for r in records {
        let len = r.token.chars().count() as f64 + 1.0;
        cells.push((col, line, len, r));
        col += len;
        width = width.max(col);
        if r.token == ";" {
            col = 0.0;
            line += 1;
        }
    }
    let w = 2.0 * pad + width * cw;
    let h = 2.0 * pad + (line + 1) as f64 * lh;
    let mut s = svg_open(w, h);
    for (col, line, len, r) in cells {
        let x = pad + col * cw;
        let y = pad + line as f64 * lh;
        let _ = writeln!(
            s,
            r#"<rect x="{x:.1}" y="{y:.1}" width="{:.1}" height="{:.1}" fill="{}"><title>{:.4}</title></rect>"#,
            len * cw,
            lh - 2.0,
            heat_color(r.entropy, max_entropy),
            r.entropy
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-family="monospace" font-size="12">{}</text>"#,
            x + cw / 2.0,
            y + lh - 8.0,
            xml_escape(&r.token)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn svg_open(w: f64, h: f64) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w:.0}\" height=\"{h:.0}\" viewBox=\"0 0 {w:.0} {h:.0}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    )
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ro(tokens: &[TokenId], hs: &[f64]) -> Rollout {
        Rollout {
            prompt_tokens: vec![],
            response_tokens: tokens.to_vec(),
            logprobs: vec![0.0; tokens.len()],
            entropies: hs.to_vec(),
            temperature: 1.0,
            truncated: false,
        }
    }

    #[test]
    fn histogram_examples() {
        let v = Vocab::minirtl();
        let top = (v.len() as f64).ln();
        assert_eq!(entropy_histogram(&[0.0; 7], &[0.0, 0.15, top]).unwrap(), [7, 0]);
        assert_eq!(entropy_histogram(&[], &[0.0, 0.15, top]).unwrap(), [0, 0]);
        assert_eq!(entropy_histogram(&[0.15, top], &[0.0, 0.15, top]).unwrap(), [0, 2]);
        assert!(entropy_histogram(&[0.1], &[0.0, 0.0, 1.0]).is_err());
        assert!(entropy_histogram(&[0.1], &[0.0]).is_err());
        let edges = default_edges(v.len(), 0.05);
        assert_eq!(edges[1], 0.05);
        assert_eq!(*edges.last().unwrap(), top);
    }

    #[test]
    fn class_map_follows_lists() {
        let v = Vocab::minirtl();
        let m = TokenClassMap::new(v);
        let c = |t: &str| m.class(v.expect_id(t));
        assert_eq!(c("posedge"), TokenClass::ProcessSensitivity);
        assert_eq!(c("always"), TokenClass::ProcessSensitivity);
        assert_eq!(c("?"), TokenClass::ControlFlow);
        assert_eq!(c("else"), TokenClass::ControlFlow);
        assert_eq!(c("["), TokenClass::BindingConnection);
        assert_eq!(c("assign"), TokenClass::BindingConnection);
        assert_eq!(c("module"), TokenClass::ModuleHead);
        assert_eq!(c("endmodule"), TokenClass::StructuralTerminator);
        assert_eq!(c("output"), TokenClass::StructuralTerminator);
        assert_eq!(c("q0"), TokenClass::Identifier);
        assert_eq!(c("mux2"), TokenClass::Identifier);
        assert_eq!(c("3"), TokenClass::Literal);
        assert_eq!(c(";"), TokenClass::Other);
        assert_eq!(m.len(), v.len());
    }

    #[test]
    fn class_stats_and_top_tokens() {
        let v = Vocab::minirtl();
        let m = TokenClassMap::new(v);
        let q = v.expect_id("?");
        let a = v.expect_id("a");
        let rs = vec![ro(&[q, a, a], &[0.9, 0.1, 0.1]), ro(&[a, q], &[0.1, 0.9])];
        let stats = token_class_stats(&rs, &m);
        let get = |c| stats.iter().find(|s| s.class == c).unwrap();
        assert_eq!(get(TokenClass::ControlFlow).mean, Some(0.9));
        assert_eq!(get(TokenClass::Identifier).count, 3);
        assert!((get(TokenClass::Identifier).mean.unwrap() - 0.1).abs() < 1e-15);
        assert_eq!(get(TokenClass::Literal).count, 0);
        assert_eq!(get(TokenClass::Literal).mean, None);
        assert_eq!(stats.iter().map(|s| s.count).sum::<usize>(), 5);

        let top = top_tokens_by_entropy(&rs, 1, 1).unwrap();
        assert_eq!(top.highest[0].token, q);
        assert_eq!(top.lowest[0].token, a);
        let none = top_tokens_by_entropy(&rs, 5, 4).unwrap();
        assert!(none.highest.is_empty() && none.lowest.is_empty());
        assert!(top_tokens_by_entropy(&rs, 0, 1).is_err());
    }

    #[test]
    fn heatmap_is_projection() {
        let v = Vocab::minirtl();
        let toks = [v.expect_id("assign"), v.expect_id("y"), v.expect_id(";")];
        let hs = [0.3, 1e-9, 0.0];
        let r = ro(&toks, &hs);
        let recs = heatmap_export(&r, v);
        assert_eq!(recs.len(), 3);
        for (rec, h) in recs.iter().zip(hs) {
            assert_eq!(rec.entropy.to_bits(), h.to_bits());
        }
        assert_eq!(heat_color(0.0, 4.0), "#ffffff");
        assert_eq!(heat_color(4.0, 4.0), "#ff0000");
        let flat = heatmap_svg(&heatmap_export(&ro(&toks, &[0.0; 3]), v), 4.8);
        assert_eq!(flat.matches("#ffffff").count(), 3);
    }
}
