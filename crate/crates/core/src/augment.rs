//! Query augmentation from offline rewrite tables.
//!
//! Rewrites are generated outside this crate (for instance by an LLM) and
//! stored as TSV files with header `post_id<TAB>text`. [`PROMPTS`] lists the
//! instruction that produced each table kind.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{sanitize, write_err, CorpusError, Query, QuerySet, Table, TableFormat};

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("no `{kind}` rewrite for post `{post_id}`")]
    MissingRewrite { post_id: String, kind: RewriteKind },
    #[error("rewrite table `{kind}` is required by mode `{mode}` but was not supplied")]
    MissingTable {
        kind: RewriteKind,
        mode: AugmentMode,
    },
    #[error("rewrite table: {0}")]
    Table(#[from] CorpusError),
    #[error("empty rewrite for post `{post_id}` at data row {row}")]
    EmptyRewrite { post_id: String, row: usize },
    #[error("unknown augmentation mode `{0}`")]
    UnknownMode(String),
    #[error("unknown rewrite kind `{0}`")]
    UnknownKind(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewriteKind {
    Formal,
    EnglishFormal,
    Keywords,
}

impl RewriteKind {
    pub const ALL: [RewriteKind; 3] = [
        RewriteKind::Formal,
        RewriteKind::EnglishFormal,
        RewriteKind::Keywords,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RewriteKind::Formal => "formal",
            RewriteKind::EnglishFormal => "english_formal",
            RewriteKind::Keywords => "keywords",
        }
    }

    /// Instruction used to generate this kind of rewrite.
    pub const fn prompt(self) -> &'static str {
        match self {
            RewriteKind::Formal => "Rewrite the input using formal language",
            RewriteKind::EnglishFormal => "Rewrite the input using formal English language",
            RewriteKind::Keywords => "Return a list of only science-related keywords in the tweet",
        }
    }
}

impl std::fmt::Display for RewriteKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RewriteKind {
    type Err = AugmentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| AugmentError::UnknownKind(s.to_string()))
    }
}

/// Prompt text for each rewrite kind, in table order.
pub const PROMPTS: [(RewriteKind, &str); 3] = [
    (RewriteKind::Formal, RewriteKind::Formal.prompt()),
    (
        RewriteKind::EnglishFormal,
        RewriteKind::EnglishFormal.prompt(),
    ),
    (RewriteKind::Keywords, RewriteKind::Keywords.prompt()),
];

/// How a query's text is formed from the tweet and its rewrites.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugmentMode {
    #[default]
    None,
    ReplaceFormal,
    ReplaceEnglishFormal,
    ConcatFormal,
    ConcatEnglishFormal,
    ConcatAll,
    ReplaceKeywords,
}

impl AugmentMode {
    pub const ALL: [AugmentMode; 7] = [
        AugmentMode::None,
        AugmentMode::ReplaceFormal,
        AugmentMode::ReplaceEnglishFormal,
        AugmentMode::ConcatFormal,
        AugmentMode::ConcatEnglishFormal,
        AugmentMode::ConcatAll,
        AugmentMode::ReplaceKeywords,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AugmentMode::None => "none",
            AugmentMode::ReplaceFormal => "replace_formal",
            AugmentMode::ReplaceEnglishFormal => "replace_english_formal",
            AugmentMode::ConcatFormal => "concat_formal",
            AugmentMode::ConcatEnglishFormal => "concat_english_formal",
            AugmentMode::ConcatAll => "concat_all",
            AugmentMode::ReplaceKeywords => "replace_keywords",
        }
    }

    /// Human-readable row label for summary tables.
    pub fn label(self) -> &'static str {
        match self {
            AugmentMode::None => "None",
            AugmentMode::ReplaceFormal => "Replace w/ Formal Rewritten",
            AugmentMode::ReplaceEnglishFormal => "Replace w/ English Formal Rewritten",
            AugmentMode::ConcatFormal => "Concat w/ Formal",
            AugmentMode::ConcatEnglishFormal => "Concat w/ English Formal",
            AugmentMode::ConcatAll => "Concat w/ All (Formal & English Formal)",
            AugmentMode::ReplaceKeywords => "Replace w/ Keywords",
        }
    }

    /// Rewrite kinds used, in concatenation order.
    pub fn required_kinds(self) -> &'static [RewriteKind] {
        match self {
            AugmentMode::None => &[],
            AugmentMode::ReplaceFormal | AugmentMode::ConcatFormal => &[RewriteKind::Formal],
            AugmentMode::ReplaceEnglishFormal | AugmentMode::ConcatEnglishFormal => {
                &[RewriteKind::EnglishFormal]
            }
            AugmentMode::ConcatAll => &[RewriteKind::EnglishFormal, RewriteKind::Formal],
            AugmentMode::ReplaceKeywords => &[RewriteKind::Keywords],
        }
    }

    fn keeps_original(self) -> bool {
        matches!(
            self,
            AugmentMode::None
                | AugmentMode::ConcatFormal
                | AugmentMode::ConcatEnglishFormal
                | AugmentMode::ConcatAll
        )
    }
}

impl std::fmt::Display for AugmentMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AugmentMode {
    type Err = AugmentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| AugmentError::UnknownMode(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RewriteTable {
    pub kind: RewriteKind,
    entries: HashMap<String, String>,
}

impl RewriteTable {
    pub fn new(kind: RewriteKind) -> Self {
        Self {
            kind,
            entries: HashMap::new(),
        }
    }

    pub fn from_entries<I, K, V>(kind: RewriteKind, entries: I) -> Self
    where
        I: IntoIterator<Item = (K, V)>,
        K: Into<String>,
        V: AsRef<str>,
    {
        Self {
            kind,
            entries: entries
                .into_iter()
                .map(|(k, v)| (k.into(), sanitize(v.as_ref())))
                .collect(),
        }
    }

    /// Reads a `post_id<TAB>text` table. Later duplicates are rejected.
    pub fn from_reader<R: Read>(reader: R, kind: RewriteKind) -> Result<Self, AugmentError> {
        let table = Table::read(reader, TableFormat::Tsv)?;
        let post = table.column("post_id")?;
        let text = table.column("text")?;
        let mut entries = HashMap::with_capacity(table.rows.len());
        for (i, row) in table.rows.iter().enumerate() {
            let rewrite = sanitize(&row[text]);
            if rewrite.trim().is_empty() {
                return Err(AugmentError::EmptyRewrite {
                    post_id: row[post].clone(),
                    row: i + 1,
                });
            }
            if entries.insert(row[post].clone(), rewrite).is_some() {
                return Err(CorpusError::DuplicateId {
                    id: row[post].clone(),
                    row: i + 1,
                }
                .into());
            }
        }
        Ok(Self { kind, entries })
    }

    pub fn load(path: &Path, kind: RewriteKind) -> Result<Self, AugmentError> {
        let file = std::fs::File::open(path).map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_reader(file, kind)
    }

    pub fn get(&self, post_id: &str) -> Option<&str> {
        self.entries.get(post_id).map(String::as_str)
    }

    /// Writes the `post_id<TAB>text` form, rows sorted by post id.
    pub fn write<W: Write>(&self, writer: W) -> Result<(), AugmentError> {
        let mut out = TableFormat::Tsv.writer_builder().from_writer(writer);
        out.write_record(["post_id", "text"]).map_err(write_err)?;
        let mut rows: Vec<_> = self.entries.iter().collect();
        rows.sort_unstable();
        for (post_id, text) in rows {
            out.write_record([post_id, text]).map_err(write_err)?;
        }
        out.flush().map_err(|source| CorpusError::Io {
            path: Default::default(),
            source,
        })?;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// At most one table per kind.
#[derive(Debug, Clone, Default)]
pub struct RewriteTables(BTreeMap<RewriteKind, RewriteTable>);

impl RewriteTables {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, table: RewriteTable) -> Option<RewriteTable> {
        self.0.insert(table.kind, table)
    }

    pub fn with(mut self, table: RewriteTable) -> Self {
        self.insert(table);
        self
    }

    pub fn get(&self, kind: RewriteKind) -> Option<&RewriteTable> {
        self.0.get(&kind)
    }

    /// Checks that every table `mode` needs is present.
    pub fn check_mode(&self, mode: AugmentMode) -> Result<(), AugmentError> {
        match mode
            .required_kinds()
            .iter()
            .find(|k| !self.0.contains_key(k))
        {
            Some(&kind) => Err(AugmentError::MissingTable { kind, mode }),
            None => Ok(()),
        }
    }
}

/// Text used as the query for `q` under `mode`.
pub fn augment_query(
    q: &Query,
    mode: AugmentMode,
    tables: &RewriteTables,
) -> Result<String, AugmentError> {
    tables.check_mode(mode)?;
    let mut parts: Vec<&str> = Vec::with_capacity(3);
    if mode.keeps_original() {
        parts.push(&q.tweet_text);
    }
    for &kind in mode.required_kinds() {
        let rewrite = tables
            .get(kind)
            .and_then(|t| t.get(&q.post_id))
            .ok_or_else(|| AugmentError::MissingRewrite {
                post_id: q.post_id.clone(),
                kind,
            })?;
        parts.push(rewrite);
    }
    Ok(parts.join(" "))
}

/// Applies `mode` to every query, keeping ids and labels.
pub fn augment_queries(
    queries: &QuerySet,
    mode: AugmentMode,
    tables: &RewriteTables,
) -> Result<QuerySet, AugmentError> {
    let augmented = queries
        .iter()
        .map(|q| {
            Ok(Query {
                tweet_text: augment_query(q, mode, tables)?,
                ..q.clone()
            })
        })
        .collect::<Result<Vec<_>, AugmentError>>()?;
    Ok(QuerySet::new(augmented)?)
}
