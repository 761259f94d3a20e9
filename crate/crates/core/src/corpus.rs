//! Paper collection and query set loading.
//!
//! Both inputs are header-led tables in CSV (RFC 4180 quoting) or TSV (no
//! quoting). Columns are located by name; unknown columns are carried along
//! on each [`Document`] but never used for retrieval.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("missing required column `{0}`")]
    MissingColumn(String),
    #[error("duplicate id `{id}` at data row {row}")]
    DuplicateId { id: String, row: usize },
    #[error("malformed data row {row}: {detail}")]
    MalformedRow { row: usize, detail: String },
    #[error("input is not valid UTF-8 (data row {row}; row 0 is the header)")]
    NotUtf8 { row: usize },
    #[error("unsupported table format `{0}` (expected csv or tsv)")]
    UnknownFormat(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TableFormat {
    Csv,
    Tsv,
}

impl TableFormat {
    /// Infers the format from a file extension (`.csv` or `.tsv`/`.txt`).
    pub fn from_path(path: &Path) -> Result<Self, CorpusError> {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .unwrap_or_default()
            .to_ascii_lowercase();
        ext.parse()
    }

    fn reader_builder(self) -> csv::ReaderBuilder {
        let mut builder = csv::ReaderBuilder::new();
        builder.has_headers(true).flexible(false);
        match self {
            TableFormat::Csv => builder.delimiter(b','),
            TableFormat::Tsv => builder.delimiter(b'\t').quoting(false),
        };
        builder
    }

    pub(crate) fn writer_builder(self) -> csv::WriterBuilder {
        let mut builder = csv::WriterBuilder::new();
        builder.terminator(csv::Terminator::Any(b'\n'));
        match self {
            TableFormat::Csv => builder.delimiter(b','),
            TableFormat::Tsv => builder.delimiter(b'\t').quote_style(csv::QuoteStyle::Never),
        };
        builder
    }
}

impl std::str::FromStr for TableFormat {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(TableFormat::Csv),
            "tsv" | "txt" => Ok(TableFormat::Tsv),
            other => Err(CorpusError::UnknownFormat(other.to_string())),
        }
    }
}

/// One paper of the collection.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub cord_uid: String,
    pub title: String,
    #[serde(rename = "abstract")]
    pub abstract_text: String,
    /// Columns other than the three required ones, keyed by header name.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, String>,
}

impl Document {
    pub fn new(
        cord_uid: impl Into<String>,
        title: impl Into<String>,
        abstract_text: impl Into<String>,
    ) -> Self {
        Self {
            cord_uid: cord_uid.into(),
            title: sanitize(&title.into()),
            abstract_text: sanitize(&abstract_text.into()),
            extra: BTreeMap::new(),
        }
    }

    pub fn text(&self) -> String {
        document_text(self)
    }
}

/// Searchable text of a document: the title, followed by the abstract when
/// there is one.
pub fn document_text(doc: &Document) -> String {
    if doc.abstract_text.is_empty() {
        doc.title.clone()
    } else {
        let mut text = String::with_capacity(doc.title.len() + 1 + doc.abstract_text.len());
        text.push_str(&doc.title);
        text.push(' ');
        text.push_str(&doc.abstract_text);
        text
    }
}

/// One tweet, optionally labeled with the paper it references.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub post_id: String,
    pub tweet_text: String,
    pub gold_cord_uid: Option<String>,
}

impl Query {
    pub fn new(post_id: impl Into<String>, tweet_text: impl Into<String>) -> Self {
        Self {
            post_id: post_id.into(),
            tweet_text: sanitize(&tweet_text.into()),
            gold_cord_uid: None,
        }
    }

    pub fn with_gold(mut self, cord_uid: impl Into<String>) -> Self {
        self.gold_cord_uid = Some(cord_uid.into());
        self
    }
}

#[derive(Debug, Clone, Default)]
pub struct Corpus {
    docs: Vec<Document>,
    by_id: HashMap<String, usize>,
}

impl Corpus {
    /// Builds a corpus, rejecting empty or repeated ids.
    pub fn new(docs: Vec<Document>) -> Result<Self, CorpusError> {
        let mut by_id = HashMap::with_capacity(docs.len());
        for (i, doc) in docs.iter().enumerate() {
            if doc.cord_uid.is_empty() {
                return Err(CorpusError::MalformedRow {
                    row: i + 1,
                    detail: "empty cord_uid".into(),
                });
            }
            if by_id.insert(doc.cord_uid.clone(), i).is_some() {
                return Err(CorpusError::DuplicateId {
                    id: doc.cord_uid.clone(),
                    row: i + 1,
                });
            }
        }
        Ok(Self { docs, by_id })
    }

    pub fn from_reader<R: Read>(reader: R, format: TableFormat) -> Result<Self, CorpusError> {
        let table = Table::read(reader, format)?;
        let uid = table.column("cord_uid")?;
        let title = table.column("title")?;
        let abs = table.column("abstract")?;
        let extra_cols: Vec<(usize, &str)> = table
            .headers
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != uid && i != title && i != abs)
            .map(|(i, h)| (i, h.as_str()))
            .collect();

        let docs = table
            .rows
            .iter()
            .map(|row| {
                let mut doc =
                    Document::new(row[uid].clone(), row[title].as_str(), row[abs].as_str());
                doc.extra = extra_cols
                    .iter()
                    .map(|&(i, name)| (name.to_string(), sanitize(&row[i])))
                    .collect();
                doc
            })
            .collect();
        Self::new(docs)
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn docs(&self) -> &[Document] {
        &self.docs
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Document> {
        self.docs.iter()
    }

    pub fn position(&self, cord_uid: &str) -> Option<usize> {
        self.by_id.get(cord_uid).copied()
    }

    pub fn get(&self, cord_uid: &str) -> Option<&Document> {
        self.position(cord_uid).map(|i| &self.docs[i])
    }

    /// Writes the corpus in `format`; extra columns follow the required ones
    /// in name order.
    pub fn write<W: Write>(&self, writer: W, format: TableFormat) -> Result<(), CorpusError> {
        let extra_names: Vec<&str> = {
            let mut names: Vec<&str> = self
                .docs
                .iter()
                .flat_map(|d| d.extra.keys().map(String::as_str))
                .collect();
            names.sort_unstable();
            names.dedup();
            names
        };
        let mut out = format.writer_builder().from_writer(writer);
        let mut header = vec!["cord_uid", "title", "abstract"];
        header.extend(&extra_names);
        out.write_record(&header).map_err(write_err)?;
        for doc in &self.docs {
            let mut record = vec![
                doc.cord_uid.as_str(),
                doc.title.as_str(),
                doc.abstract_text.as_str(),
            ];
            record.extend(
                extra_names
                    .iter()
                    .map(|name| doc.extra.get(*name).map_or("", String::as_str)),
            );
            out.write_record(&record).map_err(write_err)?;
        }
        out.flush().map_err(|source| CorpusError::Io {
            path: PathBuf::new(),
            source,
        })
    }
}

impl<'a> IntoIterator for &'a Corpus {
    type Item = &'a Document;
    type IntoIter = std::slice::Iter<'a, Document>;

    fn into_iter(self) -> Self::IntoIter {
        self.docs.iter()
    }
}

#[derive(Debug, Clone, Default)]
pub struct QuerySet {
    queries: Vec<Query>,
    labeled: bool,
}

impl QuerySet {
    pub fn new(queries: Vec<Query>) -> Result<Self, CorpusError> {
        let mut seen = HashMap::with_capacity(queries.len());
        for (i, q) in queries.iter().enumerate() {
            if q.post_id.is_empty() {
                return Err(CorpusError::MalformedRow {
                    row: i + 1,
                    detail: "empty post_id".into(),
                });
            }
            if matches!(q.gold_cord_uid.as_deref(), Some("")) {
                return Err(CorpusError::MalformedRow {
                    row: i + 1,
                    detail: "empty cord_uid label".into(),
                });
            }
            if seen.insert(q.post_id.as_str(), i).is_some() {
                return Err(CorpusError::DuplicateId {
                    id: q.post_id.clone(),
                    row: i + 1,
                });
            }
        }
        let labeled = queries.iter().all(|q| q.gold_cord_uid.is_some());
        Ok(Self { queries, labeled })
    }

    /// Reads queries; when `labeled` is set the `cord_uid` column is required
    /// and every row must carry a label.
    pub fn from_reader<R: Read>(
        reader: R,
        format: TableFormat,
        labeled: bool,
    ) -> Result<Self, CorpusError> {
        let table = Table::read(reader, format)?;
        let post = table.column("post_id")?;
        let text = table.column("tweet_text")?;
        let gold = if labeled {
            Some(table.column("cord_uid")?)
        } else {
            None
        };
        let queries = table
            .rows
            .iter()
            .map(|row| Query {
                post_id: row[post].clone(),
                tweet_text: sanitize(&row[text]),
                gold_cord_uid: gold.map(|g| row[g].clone()),
            })
            .collect();
        Self::new(queries)
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }

    pub fn labeled(&self) -> bool {
        self.labeled
    }

    pub fn queries(&self) -> &[Query] {
        &self.queries
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Query> {
        self.queries.iter()
    }

    /// Gold labels keyed by post id; unlabeled queries are skipped.
    pub fn gold(&self) -> BTreeMap<String, String> {
        self.queries
            .iter()
            .filter_map(|q| Some((q.post_id.clone(), q.gold_cord_uid.clone()?)))
            .collect()
    }

    pub fn write<W: Write>(&self, writer: W, format: TableFormat) -> Result<(), CorpusError> {
        let mut out = format.writer_builder().from_writer(writer);
        if self.labeled {
            out.write_record(["post_id", "tweet_text", "cord_uid"])
                .map_err(write_err)?;
        } else {
            out.write_record(["post_id", "tweet_text"])
                .map_err(write_err)?;
        }
        for q in &self.queries {
            match (&q.gold_cord_uid, self.labeled) {
                (Some(gold), true) => out.write_record([&q.post_id, &q.tweet_text, gold]),
                _ => out.write_record([&q.post_id, &q.tweet_text]),
            }
            .map_err(write_err)?;
        }
        out.flush().map_err(|source| CorpusError::Io {
            path: PathBuf::new(),
            source,
        })
    }
}

impl<'a> IntoIterator for &'a QuerySet {
    type Item = &'a Query;
    type IntoIter = std::slice::Iter<'a, Query>;

    fn into_iter(self) -> Self::IntoIter {
        self.queries.iter()
    }
}

pub fn load_corpus(path: &Path, format: TableFormat) -> Result<Corpus, CorpusError> {
    Corpus::from_reader(open(path)?, format)
}

pub fn load_queries(
    path: &Path,
    format: TableFormat,
    labeled: bool,
) -> Result<QuerySet, CorpusError> {
    QuerySet::from_reader(open(path)?, format, labeled)
}

/// Loads queries, treating the file as labeled iff it has a `cord_uid` column.
pub fn load_queries_detect(path: &Path, format: TableFormat) -> Result<QuerySet, CorpusError> {
    let headers = Table::read_headers(open(path)?, format)?;
    let labeled = headers.iter().any(|h| h == "cord_uid");
    load_queries(path, format, labeled)
}

pub fn write_corpus(corpus: &Corpus, path: &Path, format: TableFormat) -> Result<(), CorpusError> {
    let file = File::create(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    corpus.write(std::io::BufWriter::new(file), format)
}

fn open(path: &Path) -> Result<File, CorpusError> {
    File::open(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub(crate) fn write_err(err: csv::Error) -> CorpusError {
    CorpusError::Io {
        path: PathBuf::new(),
        source: std::io::Error::other(err),
    }
}

/// Replaces raw tabs and line breaks so every field survives a TSV round trip.
pub(crate) fn sanitize(field: &str) -> String {
    if field.contains(['\t', '\n', '\r']) {
        field.replace(['\t', '\n', '\r'], " ")
    } else {
        field.to_string()
    }
}

/// Fully decoded table: header names plus UTF-8 rows of equal width.
pub(crate) struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn read<R: Read>(reader: R, format: TableFormat) -> Result<Self, CorpusError> {
        let mut rdr = format.reader_builder().from_reader(reader);
        let headers = decode_headers(&mut rdr)?;
        let mut rows = Vec::new();
        for (i, record) in rdr.byte_records().enumerate() {
            let row = i + 1;
            let record = record.map_err(|e| record_err(e, row))?;
            let fields = record
                .iter()
                .map(|f| String::from_utf8(f.to_vec()).map_err(|_| CorpusError::NotUtf8 { row }))
                .collect::<Result<Vec<_>, _>>()?;
            rows.push(fields);
        }
        Ok(Self { headers, rows })
    }

    fn read_headers<R: Read>(reader: R, format: TableFormat) -> Result<Vec<String>, CorpusError> {
        decode_headers(&mut format.reader_builder().from_reader(reader))
    }

    pub fn column(&self, name: &str) -> Result<usize, CorpusError> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CorpusError::MissingColumn(name.to_string()))
    }
}

fn decode_headers<R: Read>(rdr: &mut csv::Reader<R>) -> Result<Vec<String>, CorpusError> {
    let headers = rdr.byte_headers().map_err(|e| record_err(e, 0))?;
    headers
        .iter()
        .map(|h| {
            std::str::from_utf8(h)
                .map(|s| s.trim_start_matches('\u{feff}').trim().to_string())
                .map_err(|_| CorpusError::NotUtf8 { row: 0 })
        })
        .collect()
}

fn record_err(err: csv::Error, row: usize) -> CorpusError {
    match err.kind() {
        csv::ErrorKind::Utf8 { .. } => CorpusError::NotUtf8 { row },
        csv::ErrorKind::Io(_) => CorpusError::Io {
            path: PathBuf::new(),
            source: std::io::Error::other(err.to_string()),
        },
        _ => CorpusError::MalformedRow {
            row,
            detail: err.to_string(),
        },
    }
}
