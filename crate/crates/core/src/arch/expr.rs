//! Architecture expressions such as `s(wl(elmo), wl(glove), tbert)`.
//!
//! ```text
//! expr  := "s" "(" item ("," item)* ")"
//! item  := group | ID
//! group := ("wl" | "wc") "(" ID ("," ID)* ")"
//! ```
//!
//! Identifiers are case-insensitive and rendered in lower case. Ids inside a
//! group must be declared word sources; bare ids must be declared sentence
//! sources.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Embedding source ids an expression may refer to.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SourceCatalog {
    word: BTreeSet<String>,
    sentence: BTreeSet<String>,
}

impl Default for SourceCatalog {
    fn default() -> Self {
        let mut c = SourceCatalog::empty();
        for id in ["elmo", "glove", "fasttext", "ling"] {
            c.add_word(id);
        }
        for id in ["tbert", "bert", "use", "infersent"] {
            c.add_sentence(id);
        }
        c
    }
}

impl SourceCatalog {
    pub fn empty() -> Self {
        SourceCatalog {
            word: BTreeSet::new(),
            sentence: BTreeSet::new(),
        }
    }

    pub fn add_word(&mut self, id: &str) -> &mut Self {
        self.word.insert(id.to_lowercase());
        self
    }

    pub fn add_sentence(&mut self, id: &str) -> &mut Self {
        self.sentence.insert(id.to_lowercase());
        self
    }

    pub fn with_word(mut self, id: &str) -> Self {
        self.add_word(id);
        self
    }

    pub fn with_sentence(mut self, id: &str) -> Self {
        self.add_sentence(id);
        self
    }

    pub fn is_word(&self, id: &str) -> bool {
        self.word.contains(id)
    }

    pub fn is_sentence(&self, id: &str) -> bool {
        self.sentence.contains(id)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum GroupKind {
    /// `wl`: biLSTM + attention over the concatenated word embeddings.
    Lstm,
    /// `wc`: convolution + max-over-time pooling.
    Conv,
}

impl GroupKind {
    pub fn keyword(self) -> &'static str {
        match self {
            GroupKind::Lstm => "wl",
            GroupKind::Conv => "wc",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ArchItem {
    Group {
        kind: GroupKind,
        sources: Vec<String>,
    },
    Sentence(String),
}

/// A single `s(...)` node with its ordered children.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchExpr {
    pub items: Vec<ArchItem>,
}

impl ArchExpr {
    pub fn parse(text: &str, catalog: &SourceCatalog) -> Result<Self> {
        Parser {
            src: text.as_bytes(),
            pos: 0,
            catalog,
        }
        .expr()
    }

    /// Distinct word sources, in first-use order (`f`).
    pub fn word_sources(&self) -> Vec<&str> {
        let mut seen = Vec::new();
        for item in &self.items {
            if let ArchItem::Group { sources, .. } = item {
                for s in sources {
                    if !seen.contains(&s.as_str()) {
                        seen.push(s.as_str());
                    }
                }
            }
        }
        seen
    }

    /// Distinct sentence sources, in first-use order (`g`).
    pub fn sentence_sources(&self) -> Vec<&str> {
        let mut seen = Vec::new();
        for item in &self.items {
            if let ArchItem::Sentence(s) = item {
                if !seen.contains(&s.as_str()) {
                    seen.push(s.as_str());
                }
            }
        }
        seen
    }

    /// Number of wl/wc groups (`p`).
    pub fn group_count(&self) -> usize {
        self.items
            .iter()
            .filter(|i| matches!(i, ArchItem::Group { .. }))
            .count()
    }

    /// Number of sentence-level concatenations (`q`); always 1 for now.
    pub fn sentence_node_count(&self) -> usize {
        1
    }

    pub fn has_lstm_group(&self) -> bool {
        self.items.iter().any(|i| {
            matches!(
                i,
                ArchItem::Group {
                    kind: GroupKind::Lstm,
                    ..
                }
            )
        })
    }
}

impl fmt::Display for ArchExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("s(")?;
        for (i, item) in self.items.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            match item {
                ArchItem::Group { kind, sources } => {
                    write!(f, "{}({})", kind.keyword(), sources.join(", "))?
                }
                ArchItem::Sentence(id) => f.write_str(id)?,
            }
        }
        f.write_str(")")
    }
}

#[derive(Debug, PartialEq)]
enum Tok {
    Ident(String),
    Open,
    Close,
    Comma,
    End,
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    catalog: &'a SourceCatalog,
}

fn is_ident_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_' || b == b'-' || b == b'.'
}

impl Parser<'_> {
    fn err<T>(&self, offset: usize, message: impl Into<String>) -> Result<T> {
        Err(Error::Parse {
            offset,
            message: message.into(),
        })
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Result<(usize, Tok)> {
        let save = self.pos;
        let tok = self.next();
        self.pos = save;
        tok
    }

    fn next(&mut self) -> Result<(usize, Tok)> {
        self.skip_ws();
        let start = self.pos;
        let Some(&b) = self.src.get(self.pos) else {
            return Ok((start, Tok::End));
        };
        let tok = match b {
            b'(' => Tok::Open,
            b')' => Tok::Close,
            b',' => Tok::Comma,
            _ if is_ident_byte(b) => {
                while self.pos < self.src.len() && is_ident_byte(self.src[self.pos]) {
                    self.pos += 1;
                }
                let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
                return Ok((start, Tok::Ident(text.to_ascii_lowercase())));
            }
            _ => return self.err(start, format!("unexpected character {:?}", char::from(b))),
        };
        self.pos += 1;
        Ok((start, tok))
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<usize> {
        let (at, tok) = self.next()?;
        if tok != want {
            return self.err(at, format!("expected {what}, found {}", describe(&tok)));
        }
        Ok(at)
    }

    fn expr(&mut self) -> Result<ArchExpr> {
        let (at, tok) = self.next()?;
        match tok {
            Tok::Ident(ref id) if id == "s" => {}
            other => {
                return self.err(
                    at,
                    format!(
                        "expression must start with s(...), found {}",
                        describe(&other)
                    ),
                )
            }
        }
        self.expect(Tok::Open, "'(' after s")?;
        if let (at, Tok::Close) = self.peek()? {
            return self.err(at, "empty s() node");
        }
        let mut items = vec![self.item()?];
        loop {
            let (at, tok) = self.next()?;
            match tok {
                Tok::Comma => items.push(self.item()?),
                Tok::Close => break,
                Tok::End => return self.err(at, "unbalanced parentheses: missing ')'"),
                other => {
                    return self.err(
                        at,
                        format!("expected ',' or ')', found {}", describe(&other)),
                    )
                }
            }
        }
        match self.next()? {
            (_, Tok::End) => Ok(ArchExpr { items }),
            (at, Tok::Comma) => self.err(at, "multiple s() nodes are not supported"),
            (at, Tok::Close) => self.err(at, "unbalanced parentheses: unexpected ')'"),
            (at, other) => self.err(at, format!("trailing input: {}", describe(&other))),
        }
    }

    fn item(&mut self) -> Result<ArchItem> {
        let (at, tok) = self.next()?;
        let Tok::Ident(id) = tok else {
            return self.err(
                at,
                format!(
                    "expected a group or a sentence source, found {}",
                    describe(&tok)
                ),
            );
        };
        if let (_, Tok::Open) = self.peek()? {
            let kind = match id.as_str() {
                "wl" => GroupKind::Lstm,
                "wc" => GroupKind::Conv,
                "s" => return self.err(at, "multiple s() nodes are not supported"),
                other => {
                    return self.err(
                        at,
                        format!("unknown group kind {other:?} (expected wl or wc)"),
                    )
                }
            };
            self.next()?;
            if let (at, Tok::Close) = self.peek()? {
                return self.err(at, format!("empty {}() group", kind.keyword()));
            }
            let mut sources = Vec::new();
            loop {
                let (at, tok) = self.next()?;
                let Tok::Ident(src) = tok else {
                    return self.err(
                        at,
                        format!("expected a word source, found {}", describe(&tok)),
                    );
                };
                if !self.catalog.is_word(&src) {
                    let hint = if self.catalog.is_sentence(&src) {
                        " (it is a sentence source)"
                    } else {
                        ""
                    };
                    return self.err(at, format!("unknown word source {src:?}{hint}"));
                }
                sources.push(src);
                let (at, tok) = self.next()?;
                match tok {
                    Tok::Comma => continue,
                    Tok::Close => break,
                    Tok::End => return self.err(at, "unbalanced parentheses: missing ')'"),
                    other => {
                        return self.err(
                            at,
                            format!("expected ',' or ')', found {}", describe(&other)),
                        )
                    }
                }
            }
            return Ok(ArchItem::Group { kind, sources });
        }
        if !self.catalog.is_sentence(&id) {
            let hint = if self.catalog.is_word(&id) {
                " (word sources go inside wl() or wc())"
            } else {
                ""
            };
            return self.err(at, format!("unknown sentence source {id:?}{hint}"));
        }
        Ok(ArchItem::Sentence(id))
    }
}

fn describe(tok: &Tok) -> String {
    match tok {
        Tok::Ident(s) => format!("{s:?}"),
        Tok::Open => "'('".into(),
        Tok::Close => "')'".into(),
        Tok::Comma => "','".into(),
        Tok::End => "end of input".into(),
    }
}
