//! `kwdrift` command-line front end. Every stage reads and writes plain
//! files so the pipeline can be resumed or inspected at any step.

use std::ffi::OsString;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use kwdrift::cluster::{kmeans_best_of, read_cluster_report, write_cluster_report, Init};
use kwdrift::corpus::{build_vocabulary_with_stats, read_documents, write_documents, InputFormat};
use kwdrift::domain::{compare_domains, report_to_table, TableFormat};
use kwdrift::glove::{export_vectors, train, ExportMode, TrainOutcome};
use kwdrift::keywords::{
    extract_by_clustering, extract_by_cooccurrence, extract_candidates, iterate_with, rank_and_prune, read_history,
    simulate_drift, train_mode, write_history_line, Candidate, Collector, CorpusAccumulator, DriftConfig,
    FileCollector, HistoryLine, KeywordSet, Stoplist,
};
use kwdrift::keywords::{build_table, encode_documents};
use kwdrift::tsne::{project, write_projection};
use kwdrift::{CooccurrenceTable, EmbeddingModel, Error, PipelineConfig, Query, Result, VectorSpace, Vocabulary, Weighting};

#[derive(Debug, Parser)]
#[command(name = "kwdrift", version, about = "Train GloVe embeddings and track drifting keyword sets")]
pub struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalArgs {
    /// Flat `key = value` config file; flags override it.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override one config key; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(short, long, global = true)]
    verbose: bool,
}

#[derive(Debug, Args)]
struct SpaceArgs {
    /// Embedding text file.
    #[arg(long, value_name = "FILE")]
    vectors: Option<PathBuf>,
    /// Model checkpoint; needs --vocab.
    #[arg(long, value_name = "FILE", conflicts_with = "vectors")]
    model: Option<PathBuf>,
    #[arg(long, value_name = "FILE", requires = "model")]
    vocab: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Read documents, build the vocabulary and write the working corpus.
    Ingest {
        #[arg(long, value_name = "FILE")]
        input: Vec<PathBuf>,
        /// jsonl or txt; inferred from the extension by default.
        #[arg(long)]
        format: Option<InputFormat>,
        /// Keep only documents with this domain label.
        #[arg(long)]
        domain: Option<String>,
        /// Also query a collector: file:<dir> or sim:<drift.json>.
        #[arg(long)]
        collector: Option<String>,
        #[arg(long, default_value_t = 1)]
        round: usize,
        /// Comma-separated query keywords for the collector.
        #[arg(long)]
        seeds: Option<String>,
        /// Keyword state file (history JSON lines); its last line is the query.
        #[arg(long, value_name = "FILE")]
        keywords: Option<PathBuf>,
        /// Working corpus (JSON lines) to write.
        #[arg(long, value_name = "FILE")]
        docs: PathBuf,
        /// Start from the documents already in --docs.
        #[arg(long)]
        append: bool,
        #[arg(long, value_name = "FILE")]
        vocab: PathBuf,
        #[arg(long)]
        min_count: Option<u64>,
    },
    /// Count windowed co-occurrences into a binary table.
    Cooccur {
        #[arg(long, value_name = "FILE")]
        docs: PathBuf,
        #[arg(long, value_name = "FILE")]
        vocab: PathBuf,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
        #[arg(long)]
        window: Option<usize>,
        #[arg(long)]
        weighting: Option<Weighting>,
    },
    /// Train embeddings from a co-occurrence table.
    Train {
        #[arg(long, value_name = "FILE")]
        cooc: PathBuf,
        #[arg(long, value_name = "FILE")]
        vocab: PathBuf,
        /// Binary checkpoint output.
        #[arg(long, value_name = "FILE")]
        model: Option<PathBuf>,
        /// Embedding text output.
        #[arg(long, value_name = "FILE")]
        vectors: Option<PathBuf>,
        /// CSV `epoch,loss`, epoch 0 being the loss before training.
        #[arg(long, value_name = "FILE")]
        loss: Option<PathBuf>,
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        eta: Option<f64>,
        #[arg(long)]
        export: Option<ExportMode>,
    },
    /// Nearest neighbours of a token.
    Neighbors {
        #[command(flatten)]
        space: SpaceArgs,
        #[arg(long)]
        query: String,
        #[arg(long, default_value_t = 10)]
        k: usize,
        /// Also write `token,similarity` CSV for word-cloud plotting.
        #[arg(long, value_name = "FILE")]
        wordcloud: Option<PathBuf>,
    },
    /// Solve a : b :: c : ?
    Analogy {
        #[command(flatten)]
        space: SpaceArgs,
        #[arg(long)]
        a: String,
        #[arg(long)]
        b: String,
        #[arg(long)]
        c: String,
        #[arg(long, default_value_t = 10)]
        k: usize,
    },
    /// k-means over the embedding rows.
    Cluster {
        #[command(flatten)]
        space: SpaceArgs,
        #[arg(long)]
        k: Option<usize>,
        /// CSV `token,cluster_id,similarity_to_centroid`.
        #[arg(long, value_name = "FILE")]
        report: PathBuf,
        #[arg(long)]
        normalize: bool,
        #[arg(long)]
        init: Option<Init>,
        /// Keep the best of this many seeded runs.
        #[arg(long, default_value_t = 1)]
        restarts: usize,
    },
    /// t-SNE projection to two dimensions.
    Project {
        #[command(flatten)]
        space: SpaceArgs,
        /// Cluster report whose ids label the points.
        #[arg(long, value_name = "FILE")]
        clusters: Option<PathBuf>,
        /// CSV `token,x,y,cluster_id`.
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
        #[arg(long)]
        perplexity: Option<f64>,
        #[arg(long)]
        iters: Option<usize>,
        /// Project only the first N tokens of the space.
        #[arg(long, default_value_t = 500)]
        limit: usize,
    },
    /// Extract candidate keywords from one trained corpus.
    Extract {
        #[arg(long, value_name = "FILE")]
        cooc: PathBuf,
        #[arg(long, value_name = "FILE")]
        vocab: PathBuf,
        #[arg(long, value_name = "FILE")]
        model: Option<PathBuf>,
        #[arg(long, value_name = "FILE", conflicts_with = "model")]
        vectors: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Method::Both)]
        method: Method,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        seeds: Option<String>,
        #[arg(long, value_name = "FILE")]
        keywords: Option<PathBuf>,
        /// Round number recorded for new keywords; defaults to one past the state file.
        #[arg(long)]
        round: Option<usize>,
        /// CSV `token,score`.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
        /// Append the updated keyword set as a history line.
        #[arg(long, value_name = "FILE")]
        state_out: Option<PathBuf>,
        #[arg(long)]
        kmax: Option<usize>,
        #[arg(long)]
        decay: Option<f64>,
    },
    /// Multi-round collect, train and extract loop.
    Iterate {
        #[arg(long)]
        seeds: String,
        #[arg(long, default_value_t = 5)]
        rounds: usize,
        #[arg(long)]
        kmax: Option<usize>,
        #[arg(long)]
        decay: Option<f64>,
        /// file:<dir> or sim:<drift.json>.
        #[arg(long)]
        collector: String,
        /// History output, one JSON object per round.
        #[arg(long, value_name = "FILE")]
        history: PathBuf,
        #[arg(long)]
        fresh_corpus: bool,
        #[arg(long)]
        raw_counts: bool,
    },
    /// Compare probe neighbourhoods across domain spaces.
    Compare {
        /// LABEL=PATH of an embedding text file; repeatable.
        #[arg(long = "space", value_name = "LABEL=PATH", required = true)]
        spaces: Vec<String>,
        #[arg(long, default_value = "female,male")]
        probes: String,
        #[arg(long, default_value_t = 9)]
        k: usize,
        #[arg(long, value_name = "FILE")]
        csv: Option<PathBuf>,
        #[arg(long, value_name = "FILE")]
        markdown: Option<PathBuf>,
    },
    /// Write a synthetic drifting corpus as round-<r>.jsonl files.
    Simulate {
        #[arg(long = "drift", value_name = "FILE")]
        drift: PathBuf,
        #[arg(long, value_name = "DIR")]
        out_dir: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
enum Method {
    Cooccur,
    Cluster,
    Both,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Ingest { .. } => "ingest",
            Command::Cooccur { .. } => "cooccur",
            Command::Train { .. } => "train",
            Command::Neighbors { .. } => "neighbors",
            Command::Analogy { .. } => "analogy",
            Command::Cluster { .. } => "cluster",
            Command::Project { .. } => "project",
            Command::Extract { .. } => "extract",
            Command::Iterate { .. } => "iterate",
            Command::Compare { .. } => "compare",
            Command::Simulate { .. } => "simulate",
        }
    }

    /// Fold subcommand flags that shadow config keys into `cfg`.
    fn apply_overrides(&self, cfg: &mut PipelineConfig) {
        fn put<T: Clone>(slot: &mut T, v: &Option<T>) {
            if let Some(v) = v {
                *slot = v.clone();
            }
        }
        match self {
            Command::Ingest { min_count, .. } => put(&mut cfg.min_count, min_count),
            Command::Cooccur { window, weighting, .. } => {
                put(&mut cfg.window, window);
                put(&mut cfg.weighting, weighting);
            }
            Command::Train {
                dim, epochs, eta, export, ..
            } => {
                put(&mut cfg.dim, dim);
                put(&mut cfg.epochs, epochs);
                put(&mut cfg.eta, eta);
                put(&mut cfg.export, export);
            }
            Command::Cluster {
                k, normalize, init, ..
            } => {
                put(&mut cfg.k_clusters, k);
                put(&mut cfg.kmeans_init, init);
                cfg.normalize |= *normalize;
            }
            Command::Project { perplexity, iters, .. } => {
                put(&mut cfg.perplexity, perplexity);
                put(&mut cfg.tsne_iters, iters);
            }
            Command::Extract { k, kmax, decay, .. } => {
                put(&mut cfg.extract_k, k);
                put(&mut cfg.kmax, kmax);
                put(&mut cfg.decay, decay);
            }
            Command::Iterate {
                kmax,
                decay,
                fresh_corpus,
                raw_counts,
                ..
            } => {
                put(&mut cfg.kmax, kmax);
                put(&mut cfg.decay, decay);
                cfg.fresh_corpus |= *fresh_corpus;
                cfg.raw_counts |= *raw_counts;
            }
            _ => {}
        }
    }
}

/// Run the CLI and return the process exit code: 0 on success, 1 on usage
/// or configuration errors, 2 on data or format errors, 3 on numeric
/// failure.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let level = if cli.global.verbose {
        log::LevelFilter::Info
    } else {
        log::LevelFilter::Warn
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .try_init();
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn resolve_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = PipelineConfig::default();
    if let Some(path) = &cli.global.config {
        cfg.apply_file(path)?;
    }
    for kv in &cli.global.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        cfg.set(k.trim(), v)?;
    }
    if let Some(seed) = cli.global.seed {
        cfg.seed = seed;
    }
    if let Some(t) = cli.global.threads {
        cfg.threads = t;
    }
    cli.command.apply_overrides(&mut cfg);
    cfg.validate()?;
    Ok(cfg)
}

fn print_config(command: &str, cfg: &PipelineConfig) {
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "# kwdrift {command}: resolved config");
    for (k, v) in cfg.entries() {
        let _ = writeln!(err, "{k} = {v}");
    }
}

fn split_list(s: &str) -> Vec<String> {
    s.split(',').map(str::trim).filter(|t| !t.is_empty()).map(String::from).collect()
}

fn open_collector(source: &str, cfg: &PipelineConfig) -> Result<Box<dyn Collector>> {
    if let Some(dir) = source.strip_prefix("file:") {
        Ok(Box::new(FileCollector::new(dir, cfg.token_rules())))
    } else if let Some(path) = source.strip_prefix("sim:") {
        Ok(Box::new(simulate_drift(&DriftConfig::load(path)?)?))
    } else {
        Err(Error::Config(format!("collector must be file:<dir> or sim:<config>, got {source:?}")))
    }
}

fn last_state(path: &Path, capacity: usize) -> Result<(KeywordSet, usize)> {
    let lines = read_history(path)?;
    match lines.last() {
        Some(line) => Ok((line.keyword_set(capacity.max(line.keywords.len()))?, line.round)),
        None => Ok((KeywordSet::new(capacity), 0)),
    }
}

fn load_space(args: &SpaceArgs, cfg: &PipelineConfig) -> Result<VectorSpace> {
    match (&args.vectors, &args.model, &args.vocab) {
        (Some(v), _, _) => VectorSpace::load_text(v),
        (None, Some(m), Some(vocab)) => space_from_model(m, vocab, cfg),
        _ => Err(Error::Config("give --vectors, or --model with --vocab".into())),
    }
}

fn space_from_model(model: &Path, vocab: &Path, cfg: &PipelineConfig) -> Result<VectorSpace> {
    let model = EmbeddingModel::load(model)?;
    let vocab = Vocabulary::load_tsv(vocab)?;
    export_vectors(&model, vocab.tokens(), cfg.export, "model")
}

fn print_neighbors(items: impl IntoIterator<Item = (String, f64)>) {
    let mut out = std::io::stdout().lock();
    for (t, s) in items {
        let _ = writeln!(out, "{t}\t{s:.6}");
    }
}

fn write_candidates(path: &Path, list: &[Candidate]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let mut put = |rec: [&str; 2]| {
        w.write_record(rec)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))
    };
    put(["token", "score"])?;
    for c in list {
        put([c.token.as_str(), &c.score.to_string()])?;
    }
    w.flush().map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

fn write_loss(path: &Path, outcome: &TrainOutcome) -> Result<()> {
    let mut text = String::from("epoch,loss\n");
    text.push_str(&format!("0,{}\n", outcome.initial_loss));
    for (e, l) in outcome.loss_trace.iter().enumerate() {
        text.push_str(&format!("{},{l}\n", e + 1));
    }
    std::fs::write(path, text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

fn append_line(path: &Path, line: &HistoryLine) -> Result<()> {
    let mut f = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    write_history_line(&mut f, line).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

fn execute(cli: &Cli) -> Result<()> {
    let cfg = resolve_config(cli)?;
    print_config(cli.command.name(), &cfg);
    match &cli.command {
        Command::Ingest {
            input,
            format,
            domain,
            collector,
            round,
            seeds,
            keywords,
            docs,
            append,
            vocab,
            ..
        } => {
            if input.is_empty() && collector.is_none() {
                return Err(Error::Config("ingest needs --input or --collector".into()));
            }
            let mut corpus = CorpusAccumulator::default();
            if *append && docs.is_file() {
                corpus.extend(read_documents(docs, InputFormat::Jsonl)?.documents);
            }
            for path in input {
                let fmt = format.unwrap_or_else(|| InputFormat::from_path(path));
                let outcome = read_documents(path, fmt)?;
                if outcome.skipped > 0 {
                    log::warn!("{}: skipped {} malformed lines", path.display(), outcome.skipped);
                }
                corpus.extend(
                    outcome
                        .documents
                        .into_iter()
                        .filter(|d| domain.as_ref().is_none_or(|want| &d.domain == want)),
                );
            }
            if let Some(source) = collector {
                let seed_list = seeds.as_deref().map(split_list).unwrap_or_default();
                let query = match keywords {
                    Some(path) => last_state(path, cfg.kmax)?.0.query_tokens(&seed_list),
                    None => seed_list,
                };
                if query.is_empty() {
                    return Err(Error::Config("collector queries need --seeds or --keywords".into()));
                }
                let got = open_collector(source, &cfg)?.query(*round, &query, cfg.query_limit)?;
                eprintln!("collected {} documents for round {round}", got.len());
                corpus.extend(got);
            }
            let (v, stats) = build_vocabulary_with_stats(corpus.documents(), &cfg.token_rules(), cfg.min_count)?;
            write_documents(docs, corpus.documents())?;
            v.save_tsv(vocab)?;
            eprintln!(
                "{} documents, {} tokens ({} below min_count), vocabulary {}",
                stats.documents,
                stats.total_tokens,
                stats.filtered_tokens,
                v.len()
            );
        }
        Command::Cooccur { docs, vocab, out, .. } => {
            let corpus = read_documents(docs, InputFormat::Jsonl)?.documents;
            let v = Vocabulary::load_tsv(vocab)?;
            let encoded = encode_documents(&corpus, &v, &cfg.token_rules());
            let table = build_table(&encoded, v.len(), cfg.weighting, &cfg)?;
            table.save_binary(out)?;
            eprintln!("{} non-zero pairs over {} tokens", table.nnz(), v.len());
        }
        Command::Train {
            cooc,
            vocab,
            model,
            vectors,
            loss,
            ..
        } => {
            if model.is_none() && vectors.is_none() {
                return Err(Error::Config("train needs --model and/or --vectors".into()));
            }
            let table = CooccurrenceTable::load_binary(cooc)?;
            let v = Vocabulary::load_tsv(vocab)?;
            if table.vocab_size() != v.len() {
                return Err(Error::Format(format!(
                    "table covers {} tokens but the vocabulary has {}",
                    table.vocab_size(),
                    v.len()
                )));
            }
            let tc = cfg.train_config();
            let init = EmbeddingModel::init(v.len(), tc.dim, tc.seed)?;
            let outcome = train(init, &table, &tc, train_mode(&cfg))?;
            if let Some(path) = model {
                outcome.model.save(path)?;
            }
            if let Some(path) = vectors {
                export_vectors(&outcome.model, v.tokens(), cfg.export, "corpus")?.save_text(path)?;
            }
            if let Some(path) = loss {
                write_loss(path, &outcome)?;
            }
            eprintln!("loss {} -> {}", outcome.initial_loss, outcome.final_loss());
        }
        Command::Neighbors {
            space,
            query,
            k,
            wordcloud,
        } => {
            let s = load_space(space, &cfg)?;
            let found = match wordcloud {
                Some(path) => s.wordcloud_export(query, *k, path)?,
                None => s.nearest_neighbors(Query::Token(query), *k, &[] as &[&str])?,
            };
            print_neighbors(found.into_iter().map(|n| (n.token, n.similarity)));
        }
        Command::Analogy { space, a, b, c, k } => {
            let s = load_space(space, &cfg)?;
            print_neighbors(s.analogy(a, b, c, *k)?.into_iter().map(|n| (n.token, n.similarity)));
        }
        Command::Cluster {
            space, report, restarts, ..
        } => {
            let s = load_space(space, &cfg)?;
            let kc = cfg.kmeans_config(usize::MAX);
            let data = if cfg.normalize { s.normalized() } else { s.clone() };
            let result = kmeans_best_of(data.data(), data.dim(), &kc, (*restarts).max(1))?;
            write_cluster_report(&s, &result, report)?;
            println!(
                "k {} wcss {} iterations {} seed {}",
                result.k, result.wcss, result.iterations, result.seed
            );
        }
        Command::Project {
            space,
            clusters,
            out,
            limit,
            ..
        } => {
            let s = load_space(space, &cfg)?;
            let tokens: Vec<String> = s.tokens().iter().take(*limit).cloned().collect();
            let projection = project(&s, Some(&tokens), &cfg.tsne_config())?;
            let ids: std::collections::HashMap<String, usize> = match clusters {
                Some(path) => read_cluster_report(path)?.into_iter().collect(),
                None => Default::default(),
            };
            write_projection(&projection, |t| ids.get(t).copied(), out)?;
            eprintln!("projected {} tokens, KL {}", projection.rows.len(), projection.final_kl);
        }
        Command::Extract {
            cooc,
            vocab,
            model,
            vectors,
            method,
            seeds,
            keywords,
            round,
            out,
            state_out,
            ..
        } => {
            let table = CooccurrenceTable::load_binary(cooc)?;
            let v = Vocabulary::load_tsv(vocab)?;
            let seed_list = seeds.as_deref().map(split_list).unwrap_or_default();
            let (state, last_round) = match keywords {
                Some(path) => last_state(path, cfg.kmax)?,
                None => (KeywordSet::new(cfg.kmax), 0),
            };
            let query = state.query_tokens(&seed_list);
            if query.is_empty() {
                return Err(Error::Config("extract needs --seeds or a non-empty --keywords state".into()));
            }
            let space = || -> Result<VectorSpace> {
                match (model, vectors) {
                    (Some(m), _) => space_from_model(m, vocab, &cfg),
                    (None, Some(p)) => VectorSpace::load_text(p),
                    (None, None) => Err(Error::Config("this method needs --model or --vectors".into())),
                }
            };
            let list = match method {
                Method::Cooccur => {
                    let stop = Stoplist::for_vocabulary(&v, cfg.stop_fraction);
                    extract_by_cooccurrence(&query, &table, &v, &stop, cfg.extract_k)?
                }
                Method::Cluster => {
                    let s = space()?;
                    let stop = Stoplist::for_vocabulary(&v, cfg.stop_fraction);
                    let mut list = extract_by_clustering(
                        &s,
                        &cfg.kmeans_config(s.len()),
                        cfg.normalize,
                        cfg.per_cluster,
                        cfg.representative,
                        Some(&v),
                    )?;
                    list.retain(|c| !stop.contains(&c.token));
                    list
                }
                Method::Both => extract_candidates(&query, &table, &v, &space()?, &cfg)?.union,
            };
            print_neighbors(list.iter().map(|c| (c.token.clone(), c.score)));
            if let Some(path) = out {
                write_candidates(path, &list)?;
            }
            if let Some(path) = state_out {
                let r = round.unwrap_or(last_round + 1);
                let next = rank_and_prune(&state, &list, r, cfg.decay, cfg.kmax);
                let line = HistoryLine {
                    round: r,
                    keywords: next
                        .entries()
                        .iter()
                        .map(|e| kwdrift::keywords::HistoryKeyword {
                            token: e.token.clone(),
                            score: e.score,
                            round_introduced: e.round_introduced,
                            last_active_round: e.last_active_round,
                        })
                        .collect(),
                    docs_collected: 0,
                    vocab_size: v.len(),
                    final_loss: None,
                };
                append_line(path, &line)?;
            }
        }
        Command::Iterate {
            seeds,
            rounds,
            collector,
            history,
            ..
        } => {
            let seed_list = split_list(seeds);
            let source = open_collector(collector, &cfg)?;
            let file = std::fs::File::create(history).map_err(|e| Error::Format(format!("{}: {e}", history.display())))?;
            let mut w = std::io::BufWriter::new(file);
            let result = iterate_with(&seed_list, source.as_ref(), &cfg, *rounds, |r| {
                write_history_line(&mut w, &r.history_line())
                    .and_then(|_| w.flush())
                    .map_err(|e| Error::Format(format!("{}: {e}", history.display())))?;
                let top: Vec<&str> = r.keywords.entries().iter().take(10).map(|e| e.token.as_str()).collect();
                println!(
                    "round {} docs {} vocab {} keywords {} top {}",
                    r.round,
                    r.docs_collected,
                    r.vocab_size,
                    r.keywords.len(),
                    top.join(",")
                );
                Ok(())
            });
            result?;
        }
        Command::Compare {
            spaces,
            probes,
            k,
            csv,
            markdown,
        } => {
            let mut loaded: Vec<(String, VectorSpace)> = Vec::new();
            for source in spaces {
                let (label, path) = source
                    .split_once('=')
                    .ok_or_else(|| Error::Config(format!("--space expects LABEL=PATH, got {source:?}")))?;
                loaded.push((label.to_string(), VectorSpace::load_text(path)?.with_domain(label)));
            }
            let report = compare_domains(loaded.iter().map(|(l, s)| (l.as_str(), s)), &split_list(probes), *k)?;
            for g in &report.gaps {
                log::warn!("probe {:?} is absent from domain {:?}", g.probe, g.domain);
            }
            let md = report_to_table(&report, TableFormat::Markdown);
            if let Some(path) = csv {
                std::fs::write(path, report_to_table(&report, TableFormat::Csv))
                    .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
            }
            if let Some(path) = markdown {
                std::fs::write(path, &md).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
            }
            print!("{md}");
        }
        Command::Simulate { drift, out_dir } => {
            let d = DriftConfig::load(drift)?;
            let sim = simulate_drift(&d)?;
            sim.write_rounds(out_dir)?;
            eprintln!("wrote {} rounds to {}", sim.rounds(), out_dir.display());
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("kwdrift").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn train_and_cluster_defaults() {
        let cli = parse(&["train", "--cooc", "c", "--vocab", "v", "--model", "m"]);
        assert_eq!(resolve_config(&cli).unwrap().dim, 50);
        let cli = parse(&["cluster", "--vectors", "v", "--report", "r"]);
        let cfg = resolve_config(&cli).unwrap();
        assert_eq!(cfg.k_clusters, 100);
        assert_eq!(cfg.kmeans_seed(), cfg.seed + 2);
    }

    #[test]
    fn flags_override_file_and_set() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.conf");
        std::fs::write(&path, "dim = 20\nepochs = 3\n").unwrap();
        let p = path.to_str().unwrap();
        let cli = parse(&["--config", p, "--set", "epochs=7", "train", "--cooc", "c", "--vocab", "v", "--model", "m", "--dim", "12"]);
        let cfg = resolve_config(&cli).unwrap();
        assert_eq!((cfg.dim, cfg.epochs), (12, 7));
    }

    #[test]
    fn unknown_flag_is_usage_error() {
        assert_eq!(run(["kwdrift", "train", "--bogus"]), 1);
        assert_eq!(run(["kwdrift", "--set", "nope=1", "simulate", "--drift", "x", "--out-dir", "y"]), 1);
        assert_eq!(run(["kwdrift", "--help"]), 0);
    }
}
