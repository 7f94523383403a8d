//! Keyword extraction, bounded dynamic ranking and the multi-round
//! collect → train → extract loop, plus a synthetic drifting collector.

use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cluster::{kmeans_space, ranked_members, KMeansConfig, Representative};
use crate::config::PipelineConfig;
use crate::cooccur::{CooccurrenceTable, Weighting};
use crate::corpus::{build_vocabulary_with_stats, read_documents, tokenize, write_documents, CorpusStats, Document, InputFormat, TokenRules, Vocabulary};
use crate::error::{Error, Result};
use crate::glove::{export_vectors, train, EmbeddingModel, TrainMode, TrainOutcome};
use crate::vectors::VectorSpace;

#[derive(Clone, Debug, PartialEq)]
pub struct Candidate {
    pub token: String,
    pub score: f64,
}

impl Candidate {
    pub fn new(token: impl Into<String>, score: f64) -> Self {
        Candidate {
            token: token.into(),
            score,
        }
    }
}

/// Descending score, ties by ascending token.
pub fn sort_candidates(list: &mut [Candidate]) {
    list.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.token.cmp(&b.token)));
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeywordEntry {
    pub token: String,
    pub score: f64,
    pub round_introduced: usize,
    pub last_active_round: usize,
}

/// Bounded keyword ranking, kept sorted by descending score with ties by
/// ascending token.
#[derive(Clone, Debug, PartialEq)]
pub struct KeywordSet {
    entries: Vec<KeywordEntry>,
    capacity: usize,
}

impl KeywordSet {
    pub fn new(capacity: usize) -> Self {
        KeywordSet {
            entries: Vec::new(),
            capacity,
        }
    }

    /// Rebuild from stored entries, restoring order and checking the
    /// set's invariants.
    pub fn from_entries(mut entries: Vec<KeywordEntry>, capacity: usize) -> Result<Self> {
        if entries.len() > capacity {
            return Err(Error::Format(format!("{} keywords exceed capacity {capacity}", entries.len())));
        }
        let mut seen = HashSet::new();
        for e in &entries {
            if !(e.score >= 0.0) || !e.score.is_finite() {
                return Err(Error::Format(format!("keyword {:?} has invalid score {}", e.token, e.score)));
            }
            if !seen.insert(e.token.as_str()) {
                return Err(Error::Format(format!("keyword {:?} appears twice", e.token)));
            }
        }
        sort_entries(&mut entries);
        Ok(KeywordSet { entries, capacity })
    }

    pub fn entries(&self) -> &[KeywordEntry] {
        &self.entries
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn tokens(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.token.clone()).collect()
    }

    pub fn get(&self, token: &str) -> Option<&KeywordEntry> {
        self.entries.iter().find(|e| e.token == token)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.get(token).is_some()
    }

    /// Tokens to query with next: the current keywords, or the seeds
    /// while the set is still empty.
    pub fn query_tokens<S: AsRef<str>>(&self, seeds: &[S]) -> Vec<String> {
        if self.entries.is_empty() {
            seeds.iter().map(|s| s.as_ref().to_string()).collect()
        } else {
            self.tokens()
        }
    }
}

fn sort_entries(entries: &mut [KeywordEntry]) {
    entries.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.token.cmp(&b.token)));
}

/// Decay existing scores, add candidate scores, re-rank and truncate.
pub fn rank_and_prune(current: &KeywordSet, candidates: &[Candidate], round: usize, decay: f64, k_max: usize) -> KeywordSet {
    let mut by_token: BTreeMap<String, KeywordEntry> = current
        .entries
        .iter()
        .map(|e| {
            let mut e = e.clone();
            e.score *= decay;
            (e.token.clone(), e)
        })
        .collect();
    for c in candidates {
        by_token
            .entry(c.token.clone())
            .and_modify(|e| {
                e.score += c.score;
                e.last_active_round = round;
            })
            .or_insert_with(|| KeywordEntry {
                token: c.token.clone(),
                score: c.score,
                round_introduced: round,
                last_active_round: round,
            });
    }
    let mut entries: Vec<KeywordEntry> = by_token.into_values().collect();
    sort_entries(&mut entries);
    entries.truncate(k_max);
    KeywordSet {
        entries,
        capacity: k_max,
    }
}

/// Common English function words plus social-media filler.
pub const BUNDLED_STOPWORDS: &[&str] = &[
    "a", "about", "above", "after", "again", "against", "all", "am", "an", "and", "any", "are", "as", "at", "be",
    "because", "been", "before", "being", "below", "between", "both", "but", "by", "can", "could", "did", "do",
    "does", "doing", "don't", "down", "during", "each", "few", "for", "from", "further", "had", "has", "have",
    "having", "he", "her", "here", "hers", "herself", "him", "himself", "his", "how", "i", "i'm", "if", "in",
    "into", "is", "it", "it's", "its", "itself", "just", "me", "more", "most", "my", "myself", "no", "nor", "not",
    "now", "of", "off", "on", "once", "only", "or", "other", "our", "ours", "ourselves", "out", "over", "own",
    "same", "she", "should", "so", "some", "such", "than", "that", "the", "their", "theirs", "them",
    "themselves", "then", "there", "these", "they", "this", "those", "through", "to", "too", "under", "until",
    "up", "very", "was", "we", "were", "what", "when", "where", "which", "while", "who", "whom", "why", "will",
    "with", "would", "you", "your", "yours", "yourself", "yourselves", "amp", "rt", "via", "im", "dont", "get",
    "got", "like", "one", "also", "really", "still", "even", "much", "many", "say", "said",
];

/// Tokens never offered as keywords.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Stoplist {
    words: HashSet<String>,
}

impl Stoplist {
    pub fn empty() -> Self {
        Stoplist::default()
    }

    pub fn bundled() -> Self {
        Stoplist {
            words: BUNDLED_STOPWORDS.iter().map(|w| w.to_string()).collect(),
        }
    }

    /// Bundled words plus the `fraction` most frequent vocabulary entries.
    pub fn for_vocabulary(vocab: &Vocabulary, fraction: f64) -> Self {
        let mut s = Stoplist::bundled();
        let n = (fraction * vocab.len() as f64).floor() as usize;
        s.words.extend(vocab.tokens().iter().take(n).cloned());
        s
    }

    pub fn insert(&mut self, word: impl Into<String>) {
        self.words.insert(word.into());
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(word)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

/// Tokens ranked by summed co-occurrence with the seeds.
pub fn extract_by_cooccurrence<S: AsRef<str>>(
    seeds: &[S],
    table: &CooccurrenceTable,
    vocab: &Vocabulary,
    stoplist: &Stoplist,
    k: usize,
) -> Result<Vec<Candidate>> {
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    if table.vocab_size() != vocab.len() {
        return Err(Error::Config(format!(
            "table covers {} tokens but the vocabulary has {}",
            table.vocab_size(),
            vocab.len()
        )));
    }
    let mut is_seed = vec![false; vocab.len()];
    let mut resolved = 0;
    for s in seeds {
        match vocab.id(s.as_ref()) {
            Some(id) => {
                if !is_seed[id as usize] {
                    resolved += 1;
                }
                is_seed[id as usize] = true;
            }
            None => log::warn!("seed {:?} is not in the vocabulary; skipped", s.as_ref()),
        }
    }
    if resolved == 0 {
        return Err(Error::Extraction("none of the seed keywords is in the vocabulary".into()));
    }
    let mut score = vec![0.0f64; vocab.len()];
    let mut touched = vec![false; vocab.len()];
    for (i, j, x) in table.iter() {
        let (i, j) = (i as usize, j as usize);
        if is_seed[j] {
            score[i] += x;
            touched[i] = true;
        }
        if i != j && is_seed[i] {
            score[j] += x;
            touched[j] = true;
        }
    }
    let mut out: Vec<Candidate> = (0..vocab.len())
        .filter(|&w| touched[w] && !is_seed[w] && !stoplist.contains(&vocab.tokens()[w]))
        .map(|w| Candidate::new(vocab.tokens()[w].clone(), score[w]))
        .collect();
    sort_candidates(&mut out);
    out.truncate(k);
    Ok(out)
}

/// Cluster representatives scored by cluster size times cosine to the
/// centroid. Non-positive scores are dropped.
pub fn extract_by_clustering(
    space: &VectorSpace,
    cfg: &KMeansConfig,
    normalize: bool,
    per_cluster: usize,
    method: Representative,
    vocab: Option<&Vocabulary>,
) -> Result<Vec<Candidate>> {
    if per_cluster == 0 {
        return Err(Error::Config("per_cluster must be at least 1".into()));
    }
    if method == Representative::Frequency && vocab.is_none() {
        return Err(Error::Config("frequency representatives need a vocabulary".into()));
    }
    let result = kmeans_space(space, cfg, normalize)?;
    let sizes = result.sizes();
    let mut out = Vec::new();
    for c in 0..result.k {
        let mut members = ranked_members(space, &result, c)?;
        if let (Representative::Frequency, Some(v)) = (method, vocab) {
            members.sort_by(|a, b| {
                v.count_of(b.0)
                    .unwrap_or(0)
                    .cmp(&v.count_of(a.0).unwrap_or(0))
                    .then_with(|| a.0.cmp(b.0))
            });
        }
        out.extend(
            members
                .into_iter()
                .take(per_cluster)
                .map(|(t, cos)| Candidate::new(t, sizes[c] as f64 * cos))
                .filter(|c| c.score > 0.0),
        );
    }
    sort_candidates(&mut out);
    Ok(out)
}

/// Merge two candidate lists keeping the larger score per token.
pub fn union_candidates(a: &[Candidate], b: &[Candidate]) -> Vec<Candidate> {
    let mut best: BTreeMap<&str, f64> = BTreeMap::new();
    for c in a.iter().chain(b) {
        best.entry(&c.token)
            .and_modify(|s| *s = s.max(c.score))
            .or_insert(c.score);
    }
    let mut out: Vec<Candidate> = best.into_iter().map(|(t, s)| Candidate::new(t, s)).collect();
    sort_candidates(&mut out);
    out
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Candidates {
    pub cooccurrence: Vec<Candidate>,
    pub clustering: Vec<Candidate>,
    pub union: Vec<Candidate>,
}

/// Both extraction avenues over one trained round. `score_table` is the
/// table used for co-occurrence scoring, which may differ from the training
/// table when raw counts are requested.
pub fn extract_candidates<S: AsRef<str>>(
    query: &[S],
    score_table: &CooccurrenceTable,
    vocab: &Vocabulary,
    space: &VectorSpace,
    cfg: &PipelineConfig,
) -> Result<Candidates> {
    let stoplist = Stoplist::for_vocabulary(vocab, cfg.stop_fraction);
    let cooccurrence = match extract_by_cooccurrence(query, score_table, vocab, &stoplist, cfg.extract_k) {
        Ok(list) => list,
        Err(Error::Extraction(msg)) => {
            log::warn!("co-occurrence extraction skipped: {msg}");
            Vec::new()
        }
        Err(e) => return Err(e),
    };
    let mut clustering = extract_by_clustering(
        space,
        &cfg.kmeans_config(space.len()),
        cfg.normalize,
        cfg.per_cluster,
        cfg.representative,
        Some(vocab),
    )?;
    clustering.retain(|c| !stoplist.contains(&c.token));
    let union = union_candidates(&cooccurrence, &clustering);
    Ok(Candidates {
        cooccurrence,
        clustering,
        union,
    })
}

/// Everything one training pass over a corpus produces.
#[derive(Clone, Debug)]
pub struct RoundArtifacts {
    pub vocab: Vocabulary,
    pub stats: CorpusStats,
    pub table: CooccurrenceTable,
    pub outcome: TrainOutcome,
    pub space: VectorSpace,
    pub candidates: Candidates,
}

pub fn encode_documents(docs: &[Document], vocab: &Vocabulary, rules: &TokenRules) -> Vec<Vec<u32>> {
    docs.iter().map(|d| vocab.encode(&tokenize(&d.text, rules))).collect()
}

pub fn build_table(encoded: &[Vec<u32>], vocab_size: usize, weighting: Weighting, cfg: &PipelineConfig) -> Result<CooccurrenceTable> {
    if cfg.threads > 1 {
        CooccurrenceTable::build_sharded(encoded, vocab_size, cfg.window, weighting, cfg.threads)
    } else {
        CooccurrenceTable::build(encoded, vocab_size, cfg.window, weighting)
    }
}

pub fn train_mode(cfg: &PipelineConfig) -> TrainMode {
    if cfg.threads > 1 {
        TrainMode::Parallel { threads: cfg.threads }
    } else {
        TrainMode::Deterministic
    }
}

/// Vocabulary, co-occurrence, training and extraction over one corpus.
pub fn run_pipeline<S: AsRef<str>>(docs: &[Document], query: &[S], cfg: &PipelineConfig) -> Result<RoundArtifacts> {
    let rules = cfg.token_rules();
    let (vocab, stats) = build_vocabulary_with_stats(docs, &rules, cfg.min_count)?;
    let encoded = encode_documents(docs, &vocab, &rules);
    let table = build_table(&encoded, vocab.len(), cfg.weighting, cfg)?;
    let train_cfg = cfg.train_config();
    let model = EmbeddingModel::init(vocab.len(), train_cfg.dim, train_cfg.seed)?;
    let outcome = train(model, &table, &train_cfg, train_mode(cfg))?;
    let space = export_vectors(&outcome.model, vocab.tokens(), cfg.export, "corpus")?;
    let candidates = if cfg.raw_counts && cfg.weighting != Weighting::Uniform {
        let raw = build_table(&encoded, vocab.len(), Weighting::Uniform, cfg)?;
        extract_candidates(query, &raw, &vocab, &space, cfg)?
    } else {
        extract_candidates(query, &table, &vocab, &space, cfg)?
    };
    Ok(RoundArtifacts {
        vocab,
        stats,
        table,
        outcome,
        space,
        candidates,
    })
}

/// Source of documents for keyword queries.
pub trait Collector {
    /// At most `limit` documents for round `round` (1-based) matching any
    /// of `keywords`.
    fn query(&self, round: usize, keywords: &[String], limit: usize) -> Result<Vec<Document>>;
}

fn matching<'a>(
    docs: impl IntoIterator<Item = &'a Document>,
    keywords: &[String],
    rules: &TokenRules,
    limit: usize,
) -> Vec<Document> {
    let wanted: HashSet<&str> = keywords.iter().map(String::as_str).collect();
    docs.into_iter()
        .filter(|d| tokenize(&d.text, rules).iter().any(|t| wanted.contains(t.as_str())))
        .take(limit)
        .cloned()
        .collect()
}

/// Reads `round-<r>.jsonl` from a directory. A round without its own file
/// sees the latest earlier round's file.
#[derive(Clone, Debug)]
pub struct FileCollector {
    dir: PathBuf,
    rules: TokenRules,
}

impl FileCollector {
    pub fn new(dir: impl Into<PathBuf>, rules: TokenRules) -> Self {
        FileCollector { dir: dir.into(), rules }
    }

    pub fn round_path(dir: &Path, round: usize) -> PathBuf {
        dir.join(format!("round-{round}.jsonl"))
    }

    fn source(&self, round: usize) -> Result<PathBuf> {
        (1..=round)
            .rev()
            .map(|r| Self::round_path(&self.dir, r))
            .find(|p| p.is_file())
            .ok_or_else(|| {
                Error::Collector(format!(
                    "{}: no round-<r>.jsonl file for round {round} or earlier",
                    self.dir.display()
                ))
            })
    }
}

impl Collector for FileCollector {
    fn query(&self, round: usize, keywords: &[String], limit: usize) -> Result<Vec<Document>> {
        let path = self.source(round)?;
        let docs = read_documents(&path, InputFormat::Jsonl)?.documents;
        Ok(matching(&docs, keywords, &self.rules, limit))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilyConfig {
    pub tokens: Vec<String>,
    pub anchor: String,
    /// Expected family-token occurrences per topical document.
    pub intensity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftConfig {
    pub rounds: usize,
    /// Planted families for each round, outer index = round - 1.
    pub families: Vec<Vec<FamilyConfig>>,
    pub background_vocab_size: usize,
    pub docs_per_round: usize,
    /// Background tokens per document.
    pub doc_length: usize,
    pub seed: u64,
    /// Share of documents that carry a planted family.
    #[serde(default = "default_topic_share")]
    pub topic_share: f64,
}

fn default_topic_share() -> f64 {
    0.5
}

impl DriftConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: DriftConfig = serde_json::from_str(text).map_err(|e| Error::Config(format!("drift config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn background_token(i: usize) -> String {
        format!("bg{i}")
    }

    pub fn is_background(&self, token: &str) -> bool {
        token
            .strip_prefix("bg")
            .and_then(|n| n.parse::<usize>().ok())
            .is_some_and(|n| n < self.background_vocab_size && Self::background_token(n) == token)
    }

    /// Family tokens planted in `round` (1-based).
    pub fn planted(&self, round: usize) -> Vec<String> {
        let mut out: Vec<String> = self
            .families
            .get(round.wrapping_sub(1))
            .into_iter()
            .flatten()
            .flat_map(|f| f.tokens.iter().cloned())
            .collect();
        out.sort();
        out.dedup();
        out
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.rounds == 0 || self.docs_per_round == 0 || self.doc_length == 0 || self.background_vocab_size == 0 {
            return bad("rounds, docs_per_round, doc_length and background_vocab_size must be positive".into());
        }
        if self.families.len() != self.rounds {
            return bad(format!("{} family lists for {} rounds", self.families.len(), self.rounds));
        }
        if !(0.0..=1.0).contains(&self.topic_share) {
            return bad("topic_share must lie in [0, 1]".into());
        }
        for (r, fams) in self.families.iter().enumerate() {
            for f in fams {
                if !(f.intensity > 0.0) || !f.intensity.is_finite() {
                    return bad(format!("round {}: family intensity must be positive", r + 1));
                }
                if f.tokens.is_empty() {
                    return bad(format!("round {}: family without tokens", r + 1));
                }
                if let Some(t) = f.tokens.iter().chain([&f.anchor]).find(|t| self.is_background(t)) {
                    return bad(format!("round {}: {t:?} collides with the background vocabulary", r + 1));
                }
            }
        }
        Ok(())
    }
}

/// Synthetic collector whose per-round document pools carry the planted
/// families of a [`DriftConfig`].
#[derive(Clone, Debug)]
pub struct SimCollector {
    pools: Vec<Vec<Document>>,
    rules: TokenRules,
}

pub fn simulate_drift(cfg: &DriftConfig) -> Result<SimCollector> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut pools = Vec::with_capacity(cfg.rounds);
    for round in 1..=cfg.rounds {
        let families = &cfg.families[round - 1];
        let mut pool = Vec::with_capacity(cfg.docs_per_round);
        for d in 0..cfg.docs_per_round {
            let mut tokens: Vec<String> = (0..cfg.doc_length)
                .map(|_| DriftConfig::background_token(rng.random_range(0..cfg.background_vocab_size)))
                .collect();
            if !families.is_empty() && rng.random::<f64>() < cfg.topic_share {
                let fam = &families[rng.random_range(0..families.len())];
                let pos = rng.random_range(0..=tokens.len());
                tokens.insert(pos, fam.anchor.clone());
                let whole = fam.intensity.floor() as usize;
                let extra = usize::from(rng.random::<f64>() < fam.intensity.fract());
                for _ in 0..whole + extra {
                    let t = fam.tokens[rng.random_range(0..fam.tokens.len())].clone();
                    let pos = rng.random_range(0..=tokens.len());
                    tokens.insert(pos, t);
                }
            }
            pool.push(Document::new(format!("r{round}-d{d:05}"), tokens.join(" "), "sim"));
        }
        pools.push(pool);
    }
    Ok(SimCollector {
        pools,
        rules: TokenRules::default(),
    })
}

impl SimCollector {
    /// Every document generated for `round`; rounds past the end repeat the
    /// last pool.
    pub fn pool(&self, round: usize) -> &[Document] {
        let r = round.clamp(1, self.pools.len());
        &self.pools[r - 1]
    }

    pub fn rounds(&self) -> usize {
        self.pools.len()
    }

    /// Write each pool as `round-<r>.jsonl`, readable by [`FileCollector`].
    pub fn write_rounds(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (r, pool) in self.pools.iter().enumerate() {
            write_documents(FileCollector::round_path(dir, r + 1), pool)?;
        }
        Ok(())
    }
}

impl Collector for SimCollector {
    fn query(&self, round: usize, keywords: &[String], limit: usize) -> Result<Vec<Document>> {
        Ok(matching(self.pool(round), keywords, &self.rules, limit))
    }
}

/// One round of [`iterate`].
#[derive(Clone, Debug, PartialEq)]
pub struct RoundRecord {
    pub round: usize,
    pub keywords: KeywordSet,
    pub docs_collected: usize,
    /// Documents in the training corpus after this round's collection.
    pub corpus_docs: usize,
    pub vocab_size: usize,
    pub stats: Option<CorpusStats>,
    pub loss_trace: Vec<f64>,
    pub final_loss: Option<f64>,
}

impl RoundRecord {
    pub fn is_empty(&self) -> bool {
        self.docs_collected == 0
    }

    pub fn history_line(&self) -> HistoryLine {
        HistoryLine {
            round: self.round,
            keywords: self
                .keywords
                .entries()
                .iter()
                .map(|e| HistoryKeyword {
                    token: e.token.clone(),
                    score: e.score,
                    round_introduced: e.round_introduced,
                    last_active_round: e.last_active_round,
                })
                .collect(),
            docs_collected: self.docs_collected,
            vocab_size: self.vocab_size,
            final_loss: self.final_loss,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryKeyword {
    pub token: String,
    pub score: f64,
    pub round_introduced: usize,
    pub last_active_round: usize,
}

/// One line of the JSON-lines history file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryLine {
    pub round: usize,
    pub keywords: Vec<HistoryKeyword>,
    pub docs_collected: usize,
    pub vocab_size: usize,
    pub final_loss: Option<f64>,
}

impl HistoryLine {
    pub fn keyword_set(&self, capacity: usize) -> Result<KeywordSet> {
        KeywordSet::from_entries(
            self.keywords
                .iter()
                .map(|k| KeywordEntry {
                    token: k.token.clone(),
                    score: k.score,
                    round_introduced: k.round_introduced,
                    last_active_round: k.last_active_round,
                })
                .collect(),
            capacity,
        )
    }
}

pub fn write_history_line(w: &mut impl Write, line: &HistoryLine) -> std::io::Result<()> {
    serde_json::to_writer(&mut *w, line)?;
    w.write_all(b"\n")
}

pub fn write_history(path: impl AsRef<Path>, records: &[RoundRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
    for r in records {
        write_history_line(&mut f, &r.history_line()).map_err(|e| Error::io(path, e))?;
    }
    f.flush().map_err(|e| Error::io(path, e))
}

pub fn read_history(path: impl AsRef<Path>) -> Result<Vec<HistoryLine>> {
    let path = path.as_ref();
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| Error::Format(format!("{} line {}: {e}", path.display(), n + 1)))?,
        );
    }
    Ok(out)
}

/// Adds newly collected documents to a corpus, skipping ids already held.
#[derive(Clone, Debug, Default)]
pub struct CorpusAccumulator {
    docs: Vec<Document>,
    ids: HashSet<String>,
}

impl CorpusAccumulator {
    pub fn extend(&mut self, docs: impl IntoIterator<Item = Document>) -> usize {
        let before = self.docs.len();
        for d in docs {
            if self.ids.insert(d.id.clone()) {
                self.docs.push(d);
            }
        }
        self.docs.len() - before
    }

    pub fn documents(&self) -> &[Document] {
        &self.docs
    }

    pub fn clear(&mut self) {
        self.docs.clear();
        self.ids.clear();
    }
}

/// Run `rounds` rounds and return the full history.
pub fn iterate<S: AsRef<str>>(
    seeds: &[S],
    collector: &dyn Collector,
    cfg: &PipelineConfig,
    rounds: usize,
) -> Result<Vec<RoundRecord>> {
    let mut out = Vec::with_capacity(rounds);
    iterate_with(seeds, collector, cfg, rounds, |r| {
        out.push(r.clone());
        Ok(())
    })?;
    Ok(out)
}

/// [`iterate`] that hands each finished round to `on_round` as it
/// completes, so callers keep partial history when a later round aborts.
pub fn iterate_with<S: AsRef<str>>(
    seeds: &[S],
    collector: &dyn Collector,
    cfg: &PipelineConfig,
    rounds: usize,
    mut on_round: impl FnMut(&RoundRecord) -> Result<()>,
) -> Result<()> {
    if rounds == 0 {
        return Err(Error::Config("rounds must be at least 1".into()));
    }
    if seeds.is_empty() {
        return Err(Error::Config("at least one seed keyword is required".into()));
    }
    cfg.validate()?;
    let mut set = KeywordSet::new(cfg.kmax);
    let mut corpus = CorpusAccumulator::default();
    let mut empty_streak = 0;
    for round in 1..=rounds {
        let query = set.query_tokens(seeds);
        let docs = collector.query(round, &query, cfg.query_limit)?;
        let record = if docs.is_empty() {
            empty_streak += 1;
            log::warn!("round {round}: collector returned no documents");
            set = rank_and_prune(&set, &[], round, cfg.decay, cfg.kmax);
            RoundRecord {
                round,
                keywords: set.clone(),
                docs_collected: 0,
                corpus_docs: corpus.documents().len(),
                vocab_size: 0,
                stats: None,
                loss_trace: Vec::new(),
                final_loss: None,
            }
        } else {
            empty_streak = 0;
            let collected = docs.len();
            if cfg.fresh_corpus {
                corpus.clear();
            }
            corpus.extend(docs);
            let art = run_pipeline(corpus.documents(), &query, cfg)?;
            set = rank_and_prune(&set, &art.candidates.union, round, cfg.decay, cfg.kmax);
            log::info!(
                "round {round}: {collected} documents, vocabulary {}, loss {:.6}, {} keywords",
                art.vocab.len(),
                art.outcome.final_loss(),
                set.len()
            );
            RoundRecord {
                round,
                keywords: set.clone(),
                docs_collected: collected,
                corpus_docs: corpus.documents().len(),
                vocab_size: art.vocab.len(),
                stats: Some(art.stats),
                final_loss: Some(art.outcome.final_loss()),
                loss_trace: art.outcome.loss_trace,
            }
        };
        on_round(&record)?;
        if empty_streak >= 2 {
            return Err(Error::Collector(format!(
                "rounds {} and {round} returned no documents; stopping",
                round - 1
            )));
        }
    }
    Ok(())
}
