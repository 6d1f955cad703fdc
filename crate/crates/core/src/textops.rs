//! Character sets, candidate encoding, edit distance and negative hardness.

use std::collections::HashMap;

use crate::error::{Error, Result};

/// Lowercase letters, digits and space.
pub const DEFAULT_CHARS: &str = "abcdefghijklmnopqrstuvwxyz0123456789 ";

/// Ordered characters plus two reserved indices: OOV (`len`) and PAD
/// (`len + 1`).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Charset {
    chars: Vec<char>,
    index: HashMap<char, usize>,
}

impl Default for Charset {
    fn default() -> Self {
        Charset::new(DEFAULT_CHARS.chars()).expect("default charset is valid")
    }
}

impl Charset {
    pub fn new(chars: impl IntoIterator<Item = char>) -> Result<Self> {
        let chars: Vec<char> = chars.into_iter().collect();
        let mut index = HashMap::with_capacity(chars.len());
        for (i, &c) in chars.iter().enumerate() {
            if c == '\n' || index.insert(c, i).is_some() {
                return Err(Error::Config(format!("charset: duplicate or invalid character {c:?}")));
            }
        }
        if chars.is_empty() {
            return Err(Error::Config("charset is empty".into()));
        }
        Ok(Charset { chars, index })
    }

    /// Default set extended with additional characters (e.g. frequent
    /// non-Latin letters). Characters already present are ignored.
    pub fn with_extra(extra: &str) -> Result<Self> {
        let mut chars: Vec<char> = DEFAULT_CHARS.chars().collect();
        for c in extra.chars().flat_map(char::to_lowercase) {
            if !chars.contains(&c) {
                chars.push(c);
            }
        }
        Charset::new(chars)
    }

    pub fn chars(&self) -> &[char] {
        &self.chars
    }

    /// Number of embedding rows including OOV and PAD.
    pub fn size(&self) -> usize {
        self.chars.len() + 2
    }

    pub fn oov(&self) -> usize {
        self.chars.len()
    }

    pub fn pad(&self) -> usize {
        self.chars.len() + 1
    }

    pub fn index_of(&self, c: char) -> usize {
        self.index.get(&c).copied().unwrap_or(self.oov())
    }

    pub fn char_at(&self, i: usize) -> Option<char> {
        self.chars.get(i).copied()
    }

    pub fn contains(&self, c: char) -> bool {
        self.index.contains_key(&c)
    }

    /// One character per line.
    pub fn to_lines(&self) -> String {
        let mut s = String::with_capacity(self.chars.len() * 2);
        for &c in &self.chars {
            s.push(c);
            s.push('\n');
        }
        s
    }

    pub fn from_lines(s: &str) -> Result<Self> {
        let mut chars = Vec::new();
        for line in s.split_terminator('\n') {
            let mut it = line.chars();
            match (it.next(), it.next()) {
                (Some(c), None) => chars.push(c),
                _ => return Err(Error::Config(format!("charset line {line:?} is not one character"))),
            }
        }
        Charset::new(chars)
    }
}

/// Model input for one candidate string.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodedCandidate {
    pub text: String,
    pub indices: Vec<usize>,
}

impl EncodedCandidate {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// First `n` characters.
    pub fn prefix(&self, n: usize) -> EncodedCandidate {
        EncodedCandidate {
            text: self.text.chars().take(n).collect(),
            indices: self.indices[..n.min(self.indices.len())].to_vec(),
        }
    }
}

/// Lowercases, trims, maps characters (unknown ones to OOV) and keeps the
/// first `max_len` characters.
pub fn encode(text: &str, charset: &Charset, max_len: usize) -> Result<EncodedCandidate> {
    if max_len == 0 {
        return Err(Error::InvalidArgument("max_len must be positive".into()));
    }
    let lower = text.to_lowercase();
    let trimmed = lower.trim();
    if trimmed.is_empty() {
        return Err(Error::EmptyText);
    }
    let text: String = trimmed.chars().take(max_len).collect();
    let text = text.trim_end().to_string();
    let indices = text.chars().map(|c| charset.index_of(c)).collect();
    Ok(EncodedCandidate { text, indices })
}

/// Inverse of [`encode`] for in-charset indices; OOV and PAD are dropped.
pub fn decode(indices: &[usize], charset: &Charset) -> String {
    indices.iter().filter_map(|&i| charset.char_at(i)).collect()
}

/// Levenshtein distance over lowercased code points, unit costs.
pub fn edit_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().flat_map(char::to_lowercase).collect();
    let b: Vec<char> = b.chars().flat_map(char::to_lowercase).collect();
    levenshtein(&a, &b)
}

fn levenshtein(a: &[char], b: &[char]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, &ac) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, &bc) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ac != bc);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

fn char_len(s: &str) -> usize {
    s.chars().flat_map(char::to_lowercase).count()
}

/// `1 - min_p edit(neg, p) / max(len(neg), len(p))`; higher is harder.
pub fn hardness<S: AsRef<str>>(neg: &str, positives: &[S]) -> Result<f32> {
    if positives.is_empty() {
        return Err(Error::EmptyPositives);
    }
    let mut best = f64::INFINITY;
    for p in positives {
        let p = p.as_ref();
        let denom = char_len(neg).max(char_len(p));
        if denom == 0 {
            return Err(Error::EmptyText);
        }
        best = best.min(edit_distance(neg, p) as f64 / denom as f64);
    }
    Ok((1.0 - best) as f32)
}
