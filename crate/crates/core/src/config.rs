//! Flat `key = value` pipeline configuration.
//!
//! Every tunable has a default; files may override any subset, and unknown
//! keys are rejected. Stage seeds are derived from the global `seed` by
//! fixed offsets so one number reproduces a whole run.

use std::fmt::Write as _;
use std::path::Path;

use crate::cluster::{Init, KMeansConfig, Representative};
use crate::cooccur::Weighting;
use crate::corpus::TokenRules;
use crate::error::{Error, Result};
use crate::glove::{ExportMode, TrainConfig};
use crate::tsne::TsneConfig;

pub const TRAIN_SEED_OFFSET: u64 = 1;
pub const KMEANS_SEED_OFFSET: u64 = 2;
pub const TSNE_SEED_OFFSET: u64 = 3;

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value {value:?} for {key}")))
}

macro_rules! pipeline_config {
    ($( $(#[doc = $doc:literal])* $field:ident : $ty:ty = $default:expr, )*) => {
        #[derive(Clone, Debug, PartialEq)]
        pub struct PipelineConfig {
            $( $(#[doc = $doc])* pub $field: $ty, )*
        }

        impl Default for PipelineConfig {
            fn default() -> Self {
                PipelineConfig { $( $field: $default, )* }
            }
        }

        impl PipelineConfig {
            /// Every key with its one-line description.
            pub const KEYS: &'static [(&'static str, &'static str)] = &[
                $( (stringify!($field), concat!($($doc),*)), )*
            ];

            /// Set one key from its textual value.
            pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
                let value = value.trim();
                match key {
                    $( stringify!($field) => self.$field = parse_value(key, value)?, )*
                    other => return Err(Error::Config(format!("unknown config key {other:?}"))),
                }
                Ok(())
            }

            /// Resolved `(key, value)` pairs in declaration order.
            pub fn entries(&self) -> Vec<(&'static str, String)> {
                vec![ $( (stringify!($field), self.$field.to_string()), )* ]
            }
        }
    };
}

pipeline_config! {
    /// Global seed; stage seeds are derived by fixed offsets.
    seed: u64 = 42,
    /// Fold tokens to lower case.
    lowercase: bool = true,
    /// Keep the leading '#' of hashtags.
    keep_hashtags: bool = true,
    /// Drop URL tokens.
    drop_urls: bool = true,
    /// Drop @mention tokens.
    drop_mentions: bool = true,
    /// Minimum token length in characters.
    min_token_len: usize = 2,
    /// Minimum corpus frequency for a vocabulary entry.
    min_count: u64 = 2,
    /// Symmetric context window.
    window: usize = 10,
    /// Co-occurrence weighting: inverse_distance or uniform.
    weighting: Weighting = Weighting::InverseDistance,
    /// Worker threads; values above 1 enable sharded counting and parallel training.
    threads: usize = 1,
    /// Embedding dimension.
    dim: usize = 50,
    /// Training epochs.
    epochs: usize = 25,
    /// Initial AdaGrad learning rate.
    eta: f64 = 0.05,
    /// Weighting function cap.
    x_max: f64 = 100.0,
    /// Weighting function exponent.
    alpha: f64 = 0.75,
    /// Bound on the per-term residual factor.
    gradient_clip: f64 = 100.0,
    /// Exported vectors: sum (main + context) or main.
    export: ExportMode = ExportMode::Sum,
    /// Number of k-means clusters.
    k_clusters: usize = 100,
    /// Maximum Lloyd iterations.
    kmeans_max_iter: usize = 300,
    /// Stop when the WCSS improvement falls below this.
    kmeans_tol: f64 = 0.0,
    /// k-means seeding: kmeanspp or random.
    kmeans_init: Init = Init::KMeansPlusPlus,
    /// Length-normalise vectors before clustering.
    normalize: bool = false,
    /// Representative selection: centroid_cosine or frequency.
    representative: Representative = Representative::CentroidCosine,
    /// t-SNE perplexity.
    perplexity: f64 = 30.0,
    /// t-SNE iterations.
    tsne_iters: usize = 1000,
    /// Candidates kept from co-occurrence extraction.
    extract_k: usize = 25,
    /// Representatives taken per cluster.
    per_cluster: usize = 1,
    /// Keyword set capacity.
    kmax: usize = 100,
    /// Per-round multiplicative score decay in (0, 1].
    decay: f64 = 0.7,
    /// Retrain on each round's documents alone instead of the accumulated corpus.
    fresh_corpus: bool = false,
    /// Score co-occurrence candidates with unweighted window counts.
    raw_counts: bool = false,
    /// Documents requested from the collector per round.
    query_limit: usize = 5000,
    /// Fraction of most frequent vocabulary entries treated as stopwords.
    stop_fraction: f64 = 0.001,
}

impl PipelineConfig {
    /// Apply a flat config file: `key = value` lines, `#` comments.
    pub fn apply_str(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
            self.set(key.trim(), value)
                .map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.apply_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let mut cfg = PipelineConfig::default();
        cfg.apply_file(path)?;
        Ok(cfg)
    }

    /// Render as a config file that [`apply_str`](Self::apply_str) accepts.
    pub fn to_config_string(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        self.token_rules().validate()?;
        self.train_config().validate()?;
        if self.min_count == 0 {
            return Err(Error::Config("min_count must be at least 1".into()));
        }
        if self.window == 0 {
            return Err(Error::Config("window must be at least 1".into()));
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return Err(Error::Config("decay must lie in (0, 1]".into()));
        }
        if self.kmax == 0 || self.extract_k == 0 || self.per_cluster == 0 || self.k_clusters == 0 {
            return Err(Error::Config("kmax, extract_k, per_cluster and k_clusters must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.stop_fraction) {
            return Err(Error::Config("stop_fraction must lie in [0, 1)".into()));
        }
        Ok(())
    }

    pub fn token_rules(&self) -> TokenRules {
        TokenRules {
            lowercase: self.lowercase,
            keep_hashtags: self.keep_hashtags,
            drop_urls: self.drop_urls,
            drop_mentions: self.drop_mentions,
            min_token_len: self.min_token_len,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            dim: self.dim,
            x_max: self.x_max,
            alpha: self.alpha,
            eta: self.eta,
            epochs: self.epochs,
            seed: self.train_seed(),
            gradient_clip: self.gradient_clip,
        }
    }

    /// k-means settings with `k` clamped to the number of rows available.
    pub fn kmeans_config(&self, rows: usize) -> KMeansConfig {
        KMeansConfig {
            k: self.k_clusters.min(rows).max(1),
            max_iter: self.kmeans_max_iter,
            tol: self.kmeans_tol,
            seed: self.kmeans_seed(),
            init: self.kmeans_init,
        }
    }

    pub fn tsne_config(&self) -> TsneConfig {
        TsneConfig {
            perplexity: self.perplexity,
            iters: self.tsne_iters,
            seed: self.tsne_seed(),
            ..TsneConfig::default()
        }
    }

    pub fn train_seed(&self) -> u64 {
        self.seed.wrapping_add(TRAIN_SEED_OFFSET)
    }

    pub fn kmeans_seed(&self) -> u64 {
        self.seed.wrapping_add(KMEANS_SEED_OFFSET)
    }

    pub fn tsne_seed(&self) -> u64 {
        self.seed.wrapping_add(TSNE_SEED_OFFSET)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_carry_documented_values() {
        let c = PipelineConfig::default();
        assert_eq!(c.dim, 50);
        assert_eq!(c.k_clusters, 100);
        assert_eq!(c.window, 10);
        assert_eq!(c.kmax, 100);
        assert_eq!(c.decay, 0.7);
        assert_eq!(PipelineConfig::KEYS.len(), c.entries().len());
        assert!(PipelineConfig::KEYS.iter().all(|(_, doc)| !doc.is_empty()));
        c.validate().unwrap();
    }

    #[test]
    fn file_overrides_and_round_trip() {
        let mut c = PipelineConfig::default();
        c.apply_str("# comment\ndim = 16\nweighting = uniform  # trailing\n\nkmeans_init=random\n")
            .unwrap();
        assert_eq!(c.dim, 16);
        assert_eq!(c.weighting, Weighting::Uniform);
        assert_eq!(c.kmeans_init, Init::Random);
        let mut back = PipelineConfig::default();
        back.apply_str(&c.to_config_string()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn unknown_and_malformed_keys_are_rejected() {
        let mut c = PipelineConfig::default();
        let e = c.apply_str("dim = 3\nbogus = 1\n").unwrap_err();
        assert!(matches!(&e, Error::Config(m) if m.contains("line 2") && m.contains("bogus")), "{e}");
        assert!(c.apply_str("dim = many\n").is_err());
        assert!(c.apply_str("dim\n").is_err());
    }

    #[test]
    fn stage_seeds_use_fixed_offsets() {
        let c = PipelineConfig {
            seed: 100,
            ..PipelineConfig::default()
        };
        assert_eq!((c.train_seed(), c.kmeans_seed(), c.tsne_seed()), (101, 102, 103));
        assert_eq!(c.train_config().seed, 101);
        assert_eq!(c.kmeans_config(10).k, 10);
    }
}
