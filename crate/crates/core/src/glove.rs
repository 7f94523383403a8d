//! GloVe weighted least-squares training with AdaGrad.
//!
//! The objective over stored pairs is
//! `J = sum f(x_ij) * (w_i . wt_j + b_i + bt_j - ln x_ij)^2`,
//! one term per unordered pair. Updates use `common = f * diff`, i.e. the
//! gradient with the factor 2 folded into the learning rate;
//! [`term_gradient`] returns the exact gradient of a single term.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cooccur::CooccurrenceTable;
use crate::error::{Error, Result};
use crate::vectors::VectorSpace;

const MAGIC: &[u8; 4] = b"KWGM";
const VERSION: u32 = 1;
const ADAGRAD_EPS: f64 = 1e-8;

/// GloVe parameters: main vectors `w`, context vectors `wt` (both row-major
/// `V x D`), and their biases.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingModel {
    vocab_size: usize,
    dim: usize,
    pub w: Vec<f64>,
    pub wt: Vec<f64>,
    pub b: Vec<f64>,
    pub bt: Vec<f64>,
}

impl EmbeddingModel {
    pub fn zeros(vocab_size: usize, dim: usize) -> Self {
        EmbeddingModel {
            vocab_size,
            dim,
            w: vec![0.0; vocab_size * dim],
            wt: vec![0.0; vocab_size * dim],
            b: vec![0.0; vocab_size],
            bt: vec![0.0; vocab_size],
        }
    }

    /// Every entry uniform on `[-0.5/dim, 0.5/dim]`, drawn in the order
    /// `w`, `wt`, `b`, `bt` from a ChaCha8 stream seeded with `seed`.
    pub fn init(vocab_size: usize, dim: usize, seed: u64) -> Result<Self> {
        if vocab_size == 0 || dim == 0 {
            return Err(Error::Config("vocab_size and dim must be at least 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound = 0.5 / dim as f64;
        let mut m = EmbeddingModel::zeros(vocab_size, dim);
        for v in m
            .w
            .iter_mut()
            .chain(m.wt.iter_mut())
            .chain(m.b.iter_mut())
            .chain(m.bt.iter_mut())
        {
            *v = rng.random_range(-bound..=bound);
        }
        Ok(m)
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn main_vector(&self, i: usize) -> &[f64] {
        &self.w[i * self.dim..(i + 1) * self.dim]
    }

    pub fn context_vector(&self, i: usize) -> &[f64] {
        &self.wt[i * self.dim..(i + 1) * self.dim]
    }

    /// `w_i . wt_j + b_i + bt_j`
    pub fn predict(&self, i: usize, j: usize) -> f64 {
        dot(self.main_vector(i), self.context_vector(j)) + self.b[i] + self.bt[j]
    }

    pub fn is_finite(&self) -> bool {
        self.w
            .iter()
            .chain(&self.wt)
            .chain(&self.b)
            .chain(&self.bt)
            .all(|v| v.is_finite())
    }

    /// Exchange the roles of main and context parameters.
    pub fn swapped(&self) -> Self {
        EmbeddingModel {
            vocab_size: self.vocab_size,
            dim: self.dim,
            w: self.wt.clone(),
            wt: self.w.clone(),
            b: self.bt.clone(),
            bt: self.b.clone(),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        w.write_all(MAGIC).map_err(io)?;
        w.write_all(&VERSION.to_le_bytes()).map_err(io)?;
        w.write_all(&(self.vocab_size as u32).to_le_bytes()).map_err(io)?;
        w.write_all(&(self.dim as u32).to_le_bytes()).map_err(io)?;
        for v in self.w.iter().chain(&self.wt).chain(&self.b).chain(&self.bt) {
            w.write_all(&v.to_le_bytes()).map_err(io)?;
        }
        w.flush().map_err(io)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut bytes = Vec::new();
        BufReader::new(file)
            .read_to_end(&mut bytes)
            .map_err(|e| Error::io(path, e))?;
        let bad = |m: String| Error::Format(format!("{}: {m}", path.display()));
        if bytes.len() < 16 || &bytes[..4] != MAGIC {
            return Err(bad("not a model checkpoint".into()));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        if u32_at(4) != VERSION {
            return Err(bad(format!("unsupported version {}", u32_at(4))));
        }
        let (v, d) = (u32_at(8) as usize, u32_at(12) as usize);
        let n = 2 * v * d + 2 * v;
        if bytes.len() != 16 + 8 * n {
            return Err(bad(format!("expected {} bytes for V={v}, D={d}, found {}", 16 + 8 * n, bytes.len())));
        }
        let mut vals = bytes[16..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        let mut take = |k: usize| (&mut vals).take(k).collect::<Vec<f64>>();
        let model = EmbeddingModel {
            vocab_size: v,
            dim: d,
            w: take(v * d),
            wt: take(v * d),
            b: take(v),
            bt: take(v),
        };
        if !model.is_finite() {
            return Err(bad("checkpoint holds non-finite values".into()));
        }
        Ok(model)
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub dim: usize,
    pub x_max: f64,
    pub alpha: f64,
    pub eta: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Bound on `|f * diff|` per term.
    pub gradient_clip: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dim: 50,
            x_max: 100.0,
            alpha: 0.75,
            eta: 0.05,
            epochs: 25,
            seed: 1,
            gradient_clip: 100.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Config("dim must be at least 1".into()));
        }
        if !(self.x_max > 0.0) {
            return Err(Error::Config("x_max must be positive".into()));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::Config("alpha must lie in (0, 1]".into()));
        }
        if !(self.eta > 0.0) {
            return Err(Error::Config("eta must be positive".into()));
        }
        if !(self.gradient_clip > 0.0) {
            return Err(Error::Config("gradient_clip must be positive".into()));
        }
        Ok(())
    }
}

/// GloVe weighting `f(x) = min(1, (x / x_max)^alpha)`.
pub fn weight_f(x: f64, x_max: f64, alpha: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("weight_f needs a positive finite count, got {x}")));
    }
    Ok(if x < x_max { (x / x_max).powf(alpha) } else { 1.0 })
}

pub fn loss_term(model: &EmbeddingModel, cfg: &TrainConfig, i: usize, j: usize, x: f64) -> Result<f64> {
    let f = weight_f(x, cfg.x_max, cfg.alpha)?;
    let diff = model.predict(i, j) - x.ln();
    let term = f * diff * diff;
    if !term.is_finite() {
        return Err(Error::Numeric(format!("non-finite loss term at ({i}, {j})")));
    }
    Ok(term)
}

/// Objective over every stored pair, summed in ascending `(i, j)` order.
pub fn total_loss(model: &EmbeddingModel, table: &CooccurrenceTable, cfg: &TrainConfig) -> Result<f64> {
    let mut sum = 0.0;
    for (i, j, x) in table.iter() {
        sum += loss_term(model, cfg, i as usize, j as usize, x)?;
    }
    Ok(sum)
}

/// `sqrt(sum f * diff^2 / sum f)` over stored pairs.
pub fn weighted_rmse(model: &EmbeddingModel, table: &CooccurrenceTable, cfg: &TrainConfig) -> Result<f64> {
    let mut weight = 0.0;
    for (_, _, x) in table.iter() {
        weight += weight_f(x, cfg.x_max, cfg.alpha)?;
    }
    if weight == 0.0 {
        return Ok(0.0);
    }
    Ok((total_loss(model, table, cfg)? / weight).sqrt())
}

/// Exact partial derivatives of one `loss_term`.
#[derive(Clone, Debug, PartialEq)]
pub struct TermGradient {
    pub w_i: Vec<f64>,
    pub wt_j: Vec<f64>,
    pub b_i: f64,
    pub bt_j: f64,
}

pub fn term_gradient(model: &EmbeddingModel, cfg: &TrainConfig, i: usize, j: usize, x: f64) -> Result<TermGradient> {
    let f = weight_f(x, cfg.x_max, cfg.alpha)?;
    let g = 2.0 * f * (model.predict(i, j) - x.ln());
    Ok(TermGradient {
        w_i: model.context_vector(j).iter().map(|v| g * v).collect(),
        wt_j: model.main_vector(i).iter().map(|v| g * v).collect(),
        b_i: g,
        bt_j: g,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrainMode {
    /// Sequential, bit-reproducible for a seed.
    Deterministic,
    /// Lock-free updates from `threads` workers.
    Parallel { threads: usize },
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: EmbeddingModel,
    /// Objective before the first epoch.
    pub initial_loss: f64,
    /// Objective after each epoch.
    pub loss_trace: Vec<f64>,
}

impl TrainOutcome {
    pub fn final_loss(&self) -> f64 {
        self.loss_trace.last().copied().unwrap_or(self.initial_loss)
    }
}

#[derive(Clone, Copy)]
struct Pair {
    i: usize,
    j: usize,
    log_x: f64,
    f: f64,
}

pub fn train(
    model: EmbeddingModel,
    table: &CooccurrenceTable,
    cfg: &TrainConfig,
    mode: TrainMode,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if table.is_empty() {
        return Err(Error::Config("cannot train on an empty co-occurrence table".into()));
    }
    if model.vocab_size != table.vocab_size() {
        return Err(Error::Config(format!(
            "model has {} rows but the table covers {} tokens",
            model.vocab_size,
            table.vocab_size()
        )));
    }
    let pairs = table
        .iter()
        .map(|(i, j, x)| {
            Ok(Pair {
                i: i as usize,
                j: j as usize,
                log_x: x.ln(),
                f: weight_f(x, cfg.x_max, cfg.alpha)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let initial_loss = total_loss(&model, table, cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut loss_trace = Vec::with_capacity(cfg.epochs);

    let model = match mode {
        TrainMode::Deterministic => {
            let mut state = AdaGrad::new(model);
            for epoch in 0..cfg.epochs {
                order.shuffle(&mut rng);
                for &k in &order {
                    state.step(&pairs[k], cfg)?;
                }
                loss_trace.push(checked_loss(&state.model, table, cfg, epoch)?);
            }
            state.model
        }
        TrainMode::Parallel { threads } => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads.max(1))
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
            let shared = SharedAdaGrad::new(&model);
            let mut current = model;
            for epoch in 0..cfg.epochs {
                order.shuffle(&mut rng);
                let chunk = order.len().div_ceil(threads.max(1)).max(1);
                pool.install(|| {
                    use rayon::prelude::*;
                    order
                        .par_chunks(chunk)
                        .try_for_each(|part| part.iter().try_for_each(|&k| shared.step(&pairs[k], cfg)))
                })?;
                current = shared.snapshot(current);
                loss_trace.push(checked_loss(&current, table, cfg, epoch)?);
            }
            current
        }
    };

    Ok(TrainOutcome {
        model,
        initial_loss,
        loss_trace,
    })
}

fn checked_loss(model: &EmbeddingModel, table: &CooccurrenceTable, cfg: &TrainConfig, epoch: usize) -> Result<f64> {
    let loss = total_loss(model, table, cfg).map_err(|e| Error::Numeric(format!("epoch {epoch}: {e}")))?;
    if !loss.is_finite() {
        return Err(Error::Numeric(format!("epoch {epoch}: loss is {loss}")));
    }
    Ok(loss)
}

fn non_finite(p: &Pair) -> Error {
    Error::Numeric(format!("non-finite residual at entry ({}, {})", p.i, p.j))
}

struct AdaGrad {
    model: EmbeddingModel,
    gw: Vec<f64>,
    gwt: Vec<f64>,
    gb: Vec<f64>,
    gbt: Vec<f64>,
}

impl AdaGrad {
    fn new(model: EmbeddingModel) -> Self {
        AdaGrad {
            gw: vec![1.0; model.w.len()],
            gwt: vec![1.0; model.wt.len()],
            gb: vec![1.0; model.b.len()],
            gbt: vec![1.0; model.bt.len()],
            model,
        }
    }

    fn step(&mut self, p: &Pair, cfg: &TrainConfig) -> Result<()> {
        let d = self.model.dim;
        let diff = self.model.predict(p.i, p.j) - p.log_x;
        if !diff.is_finite() {
            return Err(non_finite(p));
        }
        let common = (p.f * diff).clamp(-cfg.gradient_clip, cfg.gradient_clip);
        let (ri, rj) = (p.i * d, p.j * d);
        for k in 0..d {
            let wi = self.model.w[ri + k];
            let wj = self.model.wt[rj + k];
            let g_wi = common * wj;
            let g_wj = common * wi;
            self.model.w[ri + k] -= cfg.eta * g_wi / (self.gw[ri + k] + ADAGRAD_EPS).sqrt();
            self.model.wt[rj + k] -= cfg.eta * g_wj / (self.gwt[rj + k] + ADAGRAD_EPS).sqrt();
            self.gw[ri + k] += g_wi * g_wi;
            self.gwt[rj + k] += g_wj * g_wj;
        }
        self.model.b[p.i] -= cfg.eta * common / (self.gb[p.i] + ADAGRAD_EPS).sqrt();
        self.model.bt[p.j] -= cfg.eta * common / (self.gbt[p.j] + ADAGRAD_EPS).sqrt();
        self.gb[p.i] += common * common;
        self.gbt[p.j] += common * common;
        Ok(())
    }
}

/// Parameters and accumulators as relaxed atomics so workers can update
/// them concurrently without locks. Races lose updates, never memory safety.
struct SharedAdaGrad {
    dim: usize,
    w: Vec<AtomicU64>,
    wt: Vec<AtomicU64>,
    b: Vec<AtomicU64>,
    bt: Vec<AtomicU64>,
    gw: Vec<AtomicU64>,
    gwt: Vec<AtomicU64>,
    gb: Vec<AtomicU64>,
    gbt: Vec<AtomicU64>,
}

fn atomics(values: &[f64]) -> Vec<AtomicU64> {
    values.iter().map(|v| AtomicU64::new(v.to_bits())).collect()
}

#[inline]
fn load(a: &AtomicU64) -> f64 {
    f64::from_bits(a.load(Ordering::Relaxed))
}

#[inline]
fn store(a: &AtomicU64, v: f64) {
    a.store(v.to_bits(), Ordering::Relaxed)
}

impl SharedAdaGrad {
    fn new(model: &EmbeddingModel) -> Self {
        SharedAdaGrad {
            dim: model.dim,
            w: atomics(&model.w),
            wt: atomics(&model.wt),
            b: atomics(&model.b),
            bt: atomics(&model.bt),
            gw: atomics(&vec![1.0; model.w.len()]),
            gwt: atomics(&vec![1.0; model.wt.len()]),
            gb: atomics(&vec![1.0; model.b.len()]),
            gbt: atomics(&vec![1.0; model.bt.len()]),
        }
    }

    fn step(&self, p: &Pair, cfg: &TrainConfig) -> Result<()> {
        let d = self.dim;
        let (ri, rj) = (p.i * d, p.j * d);
        let mut pred = load(&self.b[p.i]) + load(&self.bt[p.j]);
        for k in 0..d {
            pred += load(&self.w[ri + k]) * load(&self.wt[rj + k]);
        }
        let diff = pred - p.log_x;
        if !diff.is_finite() {
            return Err(non_finite(p));
        }
        let common = (p.f * diff).clamp(-cfg.gradient_clip, cfg.gradient_clip);
        for k in 0..d {
            let wi = load(&self.w[ri + k]);
            let wj = load(&self.wt[rj + k]);
            let (g_wi, g_wj) = (common * wj, common * wi);
            let (acc_i, acc_j) = (load(&self.gw[ri + k]), load(&self.gwt[rj + k]));
            store(&self.w[ri + k], wi - cfg.eta * g_wi / (acc_i + ADAGRAD_EPS).sqrt());
            store(&self.wt[rj + k], wj - cfg.eta * g_wj / (acc_j + ADAGRAD_EPS).sqrt());
            store(&self.gw[ri + k], acc_i + g_wi * g_wi);
            store(&self.gwt[rj + k], acc_j + g_wj * g_wj);
        }
        let (acc_b, acc_bt) = (load(&self.gb[p.i]), load(&self.gbt[p.j]));
        store(&self.b[p.i], load(&self.b[p.i]) - cfg.eta * common / (acc_b + ADAGRAD_EPS).sqrt());
        store(&self.bt[p.j], load(&self.bt[p.j]) - cfg.eta * common / (acc_bt + ADAGRAD_EPS).sqrt());
        store(&self.gb[p.i], acc_b + common * common);
        store(&self.gbt[p.j], acc_bt + common * common);
        Ok(())
    }

    fn snapshot(&self, mut into: EmbeddingModel) -> EmbeddingModel {
        let copy = |dst: &mut Vec<f64>, src: &[AtomicU64]| {
            for (d, s) in dst.iter_mut().zip(src) {
                *d = load(s);
            }
        };
        copy(&mut into.w, &self.w);
        copy(&mut into.wt, &self.wt);
        copy(&mut into.b, &self.b);
        copy(&mut into.bt, &self.bt);
        into
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ExportMode {
    /// `w_i + wt_i`
    #[default]
    Sum,
    /// `w_i` only
    Main,
}

impl FromStr for ExportMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sum" => Ok(ExportMode::Sum),
            "main" => Ok(ExportMode::Main),
            other => Err(Error::Config(format!("unknown export mode {other:?} (expected sum or main)"))),
        }
    }
}

impl std::fmt::Display for ExportMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ExportMode::Sum => "sum",
            ExportMode::Main => "main",
        })
    }
}

pub fn export_vectors(
    model: &EmbeddingModel,
    tokens: &[String],
    mode: ExportMode,
    domain: &str,
) -> Result<VectorSpace> {
    if tokens.len() != model.vocab_size {
        return Err(Error::Config(format!(
            "{} tokens for a model of {} rows",
            tokens.len(),
            model.vocab_size
        )));
    }
    let data = match mode {
        ExportMode::Main => model.w.clone(),
        ExportMode::Sum => model.w.iter().zip(&model.wt).map(|(a, b)| a + b).collect(),
    };
    VectorSpace::new(tokens.to_vec(), data, model.dim, domain)
}
