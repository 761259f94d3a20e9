//! Text normalization shared by queries and documents.
//!
//! Steps run in a fixed order: lowercase, split on Unicode whitespace, trim
//! non-alphanumeric characters from token edges, drop short tokens, drop
//! stopwords. No stemming is applied.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Version tag of the bundled stopword list. Bump when the file changes.
pub const STOPWORDS_VERSION: &str = "en-v1";

const DEFAULT_STOPWORDS: &str = include_str!("../data/stopwords_en.txt");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    pub lowercase: bool,
    pub strip_edge_punct: bool,
    pub stopwords: BTreeSet<String>,
    pub min_token_len: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            lowercase: true,
            strip_edge_punct: true,
            stopwords: default_stopwords(),
            min_token_len: 1,
        }
    }
}

impl PreprocessConfig {
    /// Config with no stopword filtering.
    pub fn without_stopwords() -> Self {
        Self {
            stopwords: BTreeSet::new(),
            ..Self::default()
        }
    }

    /// Replaces the stopword list, lowercasing entries when `lowercase` is on
    /// so that they can match normalized tokens.
    pub fn with_stopwords<I, S>(mut self, words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        self.stopwords = words
            .into_iter()
            .map(|w| w.as_ref().trim().to_string())
            .filter(|w| !w.is_empty())
            .collect();
        self.normalize();
        self
    }

    /// Re-establishes the lowercase-stopwords invariant after field edits.
    pub fn normalize(&mut self) {
        if self.lowercase
            && self
                .stopwords
                .iter()
                .any(|w| w.chars().any(char::is_uppercase))
        {
            self.stopwords = self.stopwords.iter().map(|w| w.to_lowercase()).collect();
        }
        self.min_token_len = self.min_token_len.max(1);
    }

    /// SHA-256 over the sorted stopword list, one word per line.
    pub fn stopwords_sha256(&self) -> String {
        let mut hasher = Sha256::new();
        for word in &self.stopwords {
            hasher.update(word.as_bytes());
            hasher.update(b"\n");
        }
        hex(&hasher.finalize())
    }
}

pub fn default_stopwords() -> BTreeSet<String> {
    parse_stopwords(DEFAULT_STOPWORDS)
}

/// Reads a one-word-per-line stopword file. Blank lines and `#` comments are
/// skipped.
pub fn load_stopwords(path: &Path) -> std::io::Result<BTreeSet<String>> {
    Ok(parse_stopwords(&std::fs::read_to_string(path)?))
}

fn parse_stopwords(text: &str) -> BTreeSet<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect()
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    let mut out = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        let _ = write!(out, "{b:02x}");
    }
    out
}

/// Ordered tokens of one text; duplicates are kept.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenList(Vec<String>);

impl TokenList {
    pub fn new(tokens: Vec<String>) -> Self {
        Self(tokens)
    }

    pub fn as_slice(&self) -> &[String] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<String> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, String> {
        self.0.iter()
    }

    /// Distinct tokens in first-occurrence order.
    pub fn unique(&self) -> Vec<&str> {
        let mut seen = std::collections::HashSet::with_capacity(self.0.len());
        self.0
            .iter()
            .map(String::as_str)
            .filter(|t| seen.insert(*t))
            .collect()
    }

    pub fn join(&self, sep: &str) -> String {
        self.0.join(sep)
    }
}

impl<'a> IntoIterator for &'a TokenList {
    type Item = &'a String;
    type IntoIter = std::slice::Iter<'a, String>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

impl From<Vec<String>> for TokenList {
    fn from(tokens: Vec<String>) -> Self {
        Self(tokens)
    }
}

impl<'a> From<Vec<&'a str>> for TokenList {
    fn from(tokens: Vec<&'a str>) -> Self {
        Self(tokens.into_iter().map(str::to_string).collect())
    }
}

pub fn preprocess(text: &str, cfg: &PreprocessConfig) -> TokenList {
    let lowered;
    let text = if cfg.lowercase {
        lowered = text.to_lowercase();
        lowered.as_str()
    } else {
        text
    };
    let tokens = text
        .split_whitespace()
        .map(|raw| {
            if cfg.strip_edge_punct {
                raw.trim_matches(|c: char| !c.is_alphanumeric())
            } else {
                raw
            }
        })
        .filter(|t| !t.is_empty() && t.chars().count() >= cfg.min_token_len)
        .filter(|t| !cfg.stopwords.contains(*t))
        .map(str::to_string)
        .collect();
    TokenList(tokens)
}
