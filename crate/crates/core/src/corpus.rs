//! Document ingestion, social-media tokenization and vocabulary construction.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

pub const DEFAULT_DOMAIN: &str = "default";

/// One collected post.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    pub domain: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created_at: Option<DateTime<Utc>>,
}

impl Document {
    pub fn new(id: impl Into<String>, text: impl Into<String>, domain: impl Into<String>) -> Self {
        Document {
            id: id.into(),
            text: text.into(),
            domain: domain.into(),
            created_at: None,
        }
    }

    fn from_json(value: &Value) -> Option<Document> {
        let obj = value.as_object()?;
        let id = match obj.get("id")? {
            Value::String(s) => s.clone(),
            Value::Number(n) => n.to_string(),
            _ => return None,
        };
        let text = obj.get("text")?.as_str()?.to_string();
        if id.is_empty() || text.trim().is_empty() {
            return None;
        }
        let domain = match obj.get("domain") {
            None | Some(Value::Null) => DEFAULT_DOMAIN.to_string(),
            Some(Value::String(s)) => s.clone(),
            Some(_) => return None,
        };
        let created_at = match obj.get("created_at") {
            None | Some(Value::Null) => None,
            Some(Value::String(s)) => Some(DateTime::parse_from_rfc3339(s).ok()?.with_timezone(&Utc)),
            Some(_) => return None,
        };
        Some(Document {
            id,
            text,
            domain,
            created_at,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InputFormat {
    Jsonl,
    Txt,
}

impl FromStr for InputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jsonl" => Ok(InputFormat::Jsonl),
            "txt" => Ok(InputFormat::Txt),
            other => Err(Error::Config(format!("unknown input format {other:?} (expected jsonl or txt)"))),
        }
    }
}

impl InputFormat {
    /// Guess from the file extension, falling back to jsonl.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("txt") => InputFormat::Txt,
            _ => InputFormat::Jsonl,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct ReadOutcome {
    pub documents: Vec<Document>,
    /// Number of malformed jsonl lines that were skipped.
    pub skipped: usize,
}

pub fn read_documents(path: impl AsRef<Path>, format: InputFormat) -> Result<ReadOutcome> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_documents(BufReader::new(file), format).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn parse_documents(reader: impl BufRead, format: InputFormat) -> Result<ReadOutcome> {
    let mut out = ReadOutcome::default();
    let mut nonblank = 0usize;
    let mut first_bad = None;
    for (n, line) in reader.lines().enumerate() {
        let line_no = n + 1;
        let line = line.map_err(|e| Error::Format(format!("line {line_no}: {e}")))?;
        if line.trim().is_empty() {
            continue;
        }
        nonblank += 1;
        match format {
            InputFormat::Txt => out.documents.push(Document::new(
                format!("line-{line_no}"),
                line,
                DEFAULT_DOMAIN,
            )),
            InputFormat::Jsonl => {
                match serde_json::from_str::<Value>(&line)
                    .ok()
                    .as_ref()
                    .and_then(Document::from_json)
                {
                    Some(doc) => out.documents.push(doc),
                    None => {
                        out.skipped += 1;
                        first_bad.get_or_insert(line_no);
                    }
                }
            }
        }
    }
    if out.skipped * 2 > nonblank {
        return Err(Error::Format(format!(
            "{} of {} lines malformed, first bad line {}",
            out.skipped,
            nonblank,
            first_bad.unwrap_or(0)
        )));
    }
    if out.skipped > 0 {
        log::warn!("skipped {} malformed lines (first at line {})", out.skipped, first_bad.unwrap_or(0));
    }
    Ok(out)
}

pub fn write_documents(path: impl AsRef<Path>, docs: &[Document]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for doc in docs {
        let line = serde_json::to_string(doc).expect("document serializes");
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenRules {
    pub lowercase: bool,
    /// Keep the leading '#' of hashtags as part of the token.
    pub keep_hashtags: bool,
    pub drop_urls: bool,
    /// Drop tokens starting with '@'.
    pub drop_mentions: bool,
    pub min_token_len: usize,
}

impl Default for TokenRules {
    fn default() -> Self {
        TokenRules {
            lowercase: true,
            keep_hashtags: true,
            drop_urls: true,
            drop_mentions: true,
            min_token_len: 2,
        }
    }
}

impl TokenRules {
    pub fn validate(&self) -> Result<()> {
        if self.min_token_len == 0 {
            return Err(Error::Config("min_token_len must be at least 1".into()));
        }
        Ok(())
    }
}

fn is_url(token: &str) -> bool {
    let lower = token.to_lowercase();
    lower.starts_with("http://") || lower.starts_with("https://") || lower.starts_with("www.")
}

fn strip_punctuation(raw: &str) -> &str {
    raw.trim_start_matches(|c: char| !(c.is_alphanumeric() || c == '#' || c == '@'))
        .trim_end_matches(|c: char| !c.is_alphanumeric())
}

/// Split `text` into tokens according to `rules`.
///
/// Leading and trailing punctuation is stripped (a leading `#` or `@` is
/// kept so hashtags and mentions stay recognisable); interior punctuation
/// such as the apostrophe in "don't" survives.
pub fn tokenize(text: &str, rules: &TokenRules) -> Vec<String> {
    let mut tokens = Vec::new();
    for raw in text.split_whitespace() {
        if rules.drop_urls && is_url(raw) {
            continue;
        }
        let stripped = strip_punctuation(raw);
        if stripped.is_empty() {
            continue;
        }
        if rules.drop_urls && is_url(stripped) {
            continue;
        }
        if rules.drop_mentions && stripped.starts_with('@') {
            continue;
        }
        let mut token = if !rules.keep_hashtags {
            strip_punctuation(stripped.trim_start_matches('#')).to_string()
        } else {
            stripped.to_string()
        };
        if rules.lowercase {
            token = token.to_lowercase();
        }
        if token.chars().count() < rules.min_token_len {
            continue;
        }
        tokens.push(token);
    }
    tokens
}

/// Token/id map with corpus frequencies.
///
/// Ids are contiguous, ordered by descending count with ties broken by
/// ascending token.
#[derive(Clone, Debug, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
    counts: Vec<u64>,
    min_count: u64,
}

impl Vocabulary {
    /// Build from raw token counts, dropping anything under `min_count`.
    pub fn from_counts(counts: HashMap<String, u64>, min_count: u64) -> Result<Self> {
        if min_count == 0 {
            return Err(Error::Config("min_count must be at least 1".into()));
        }
        let mut kept: Vec<(String, u64)> = counts.into_iter().filter(|(_, c)| *c >= min_count).collect();
        if kept.is_empty() {
            return Err(Error::Config(format!("vocabulary is empty after min_count={min_count} filtering")));
        }
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let (tokens, counts): (Vec<_>, Vec<_>) = kept.into_iter().unzip();
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Ok(Vocabulary {
            tokens,
            index,
            counts,
            min_count,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn min_count(&self) -> u64 {
        self.min_count
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn count(&self, id: u32) -> Option<u64> {
        self.counts.get(id as usize).copied()
    }

    pub fn count_of(&self, token: &str) -> Option<u64> {
        self.id(token).and_then(|id| self.count(id))
    }

    /// Map tokens to ids, dropping out-of-vocabulary tokens.
    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<u32> {
        tokens.iter().filter_map(|t| self.id(t.as_ref())).collect()
    }

    pub fn save_tsv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(w, "token\tid\tcount").map_err(io)?;
        for (id, (token, count)) in self.tokens.iter().zip(&self.counts).enumerate() {
            writeln!(w, "{token}\t{id}\t{count}").map_err(io)?;
        }
        w.flush().map_err(io)
    }

    /// Load a vocabulary written by [`Vocabulary::save_tsv`]. The min count
    /// is taken as the smallest stored count.
    pub fn load_tsv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = BufReader::new(file).lines();
        let bad = |line: usize, what: &str| Error::Format(format!("{}: line {line}: {what}", path.display()));
        match lines.next() {
            Some(Ok(h)) if h == "token\tid\tcount" => {}
            _ => return Err(bad(1, "expected header `token<TAB>id<TAB>count`")),
        }
        let mut counts = HashMap::new();
        let mut expected_order = Vec::new();
        for (n, line) in lines.enumerate() {
            let line_no = n + 2;
            let line = line.map_err(|e| Error::io(path, e))?;
            let fields: Vec<&str> = line.split('\t').collect();
            let [token, id, count] = fields[..] else {
                return Err(bad(line_no, "expected three tab-separated fields"));
            };
            let id: usize = id.parse().map_err(|_| bad(line_no, "id is not an integer"))?;
            let count: u64 = count.parse().map_err(|_| bad(line_no, "count is not an integer"))?;
            if id != expected_order.len() {
                return Err(bad(line_no, "ids must be contiguous and in order"));
            }
            if counts.insert(token.to_string(), count).is_some() {
                return Err(bad(line_no, "duplicate token"));
            }
            expected_order.push(token.to_string());
        }
        let min_count = counts.values().copied().min().unwrap_or(1);
        let vocab = Vocabulary::from_counts(counts, min_count)?;
        if vocab.tokens != expected_order {
            return Err(Error::Format(format!(
                "{}: rows are not in descending-count order",
                path.display()
            )));
        }
        Ok(vocab)
    }
}

/// Corpus-level statistics gathered while building a vocabulary.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CorpusStats {
    pub documents: usize,
    pub total_tokens: u64,
    pub filtered_tokens: u64,
}

pub fn count_tokens(docs: &[Document], rules: &TokenRules) -> HashMap<String, u64> {
    let mut counts = HashMap::new();
    for doc in docs {
        for token in tokenize(&doc.text, rules) {
            *counts.entry(token).or_insert(0) += 1;
        }
    }
    counts
}

pub fn build_vocabulary(docs: &[Document], rules: &TokenRules, min_count: u64) -> Result<Vocabulary> {
    build_vocabulary_with_stats(docs, rules, min_count).map(|(v, _)| v)
}

pub fn build_vocabulary_with_stats(
    docs: &[Document],
    rules: &TokenRules,
    min_count: u64,
) -> Result<(Vocabulary, CorpusStats)> {
    rules.validate()?;
    let counts = count_tokens(docs, rules);
    let total_tokens: u64 = counts.values().sum();
    let vocab = Vocabulary::from_counts(counts, min_count)?;
    let kept: u64 = vocab.counts.iter().sum();
    Ok((
        vocab,
        CorpusStats {
            documents: docs.len(),
            total_tokens,
            filtered_tokens: total_tokens - kept,
        },
    ))
}
