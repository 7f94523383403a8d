//! Exact O(n^2) t-SNE projection to two dimensions.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::cluster::squared_distance;
use crate::error::{Error, Result};
use crate::vectors::{csv_error, VectorSpace};

const BISECTION_STEPS: usize = 50;
const ENTROPY_TOL: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iters: usize,
    pub seed: u64,
    pub learning_rate: f64,
    pub initial_momentum: f64,
    pub final_momentum: f64,
    /// Iteration at which momentum switches to `final_momentum`.
    pub momentum_switch: usize,
    pub exaggeration: f64,
    /// Iterations during which affinities are exaggerated.
    pub exaggeration_iters: usize,
}

impl Default for TsneConfig {
    fn default() -> Self {
        TsneConfig {
            perplexity: 30.0,
            iters: 1000,
            seed: 1,
            learning_rate: 200.0,
            initial_momentum: 0.5,
            final_momentum: 0.8,
            momentum_switch: 250,
            exaggeration: 4.0,
            exaggeration_iters: 100,
        }
    }
}

impl TsneConfig {
    /// Perplexity must be at least 1 and at most `(n - 1) / 3`.
    pub fn validate(&self, n: usize) -> Result<()> {
        if n < 4 {
            return Err(Error::Config(format!("t-SNE needs at least 4 points, got {n}")));
        }
        if !(self.perplexity >= 1.0) || 3.0 * self.perplexity > (n - 1) as f64 {
            return Err(Error::Config(format!(
                "perplexity {} infeasible for {n} points (need 1 <= perplexity <= {})",
                self.perplexity,
                (n - 1) as f64 / 3.0
            )));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        Ok(())
    }
}

/// Conditional affinities `p_j|i`, row-major `n x n`. Each row is a
/// Gaussian kernel whose precision is bisected until the row entropy
/// matches `ln(perplexity)`.
pub fn conditional_probabilities(data: &[f64], dim: usize, perplexity: f64) -> Vec<f64> {
    let n = data.len() / dim;
    let target = perplexity.ln();
    let row = |i: usize| &data[i * dim..(i + 1) * dim];
    let mut cond = vec![0.0; n * n];
    let mut dist = vec![0.0; n];
    for i in 0..n {
        for (j, d) in dist.iter_mut().enumerate() {
            *d = if i == j { 0.0 } else { squared_distance(row(i), row(j)) };
        }
        let dmin = (0..n)
            .filter(|&j| j != i)
            .map(|j| dist[j])
            .fold(f64::INFINITY, f64::min);
        let (mut beta, mut lo, mut hi) = (1.0, f64::NEG_INFINITY, f64::INFINITY);
        let p = &mut cond[i * n..(i + 1) * n];
        for _ in 0..BISECTION_STEPS {
            // Shifting by dmin leaves the normalised row unchanged and keeps
            // the nearest neighbour's kernel at 1.
            let mut sum = 0.0;
            let mut weighted = 0.0;
            for j in 0..n {
                p[j] = if j == i { 0.0 } else { (-beta * (dist[j] - dmin)).exp() };
                sum += p[j];
                weighted += p[j] * (dist[j] - dmin);
            }
            let entropy = sum.ln() + beta * weighted / sum;
            p.iter_mut().for_each(|v| *v /= sum);
            let gap = entropy - target;
            if gap.abs() < ENTROPY_TOL {
                break;
            }
            if gap > 0.0 {
                lo = beta;
                beta = if hi.is_finite() { (beta + hi) / 2.0 } else { beta * 2.0 };
            } else {
                hi = beta;
                beta = if lo.is_finite() { (beta + lo) / 2.0 } else { beta / 2.0 };
            }
        }
    }
    cond
}

/// Symmetric joint affinities `p_ij = (p_j|i + p_i|j) / 2n`.
pub fn joint_probabilities(data: &[f64], dim: usize, perplexity: f64) -> Vec<f64> {
    let n = data.len() / dim;
    let cond = conditional_probabilities(data, dim, perplexity);
    let mut joint = vec![0.0; n * n];
    let scale = 2.0 * n as f64;
    for i in 0..n {
        for j in 0..n {
            joint[i * n + j] = (cond[i * n + j] + cond[j * n + i]) / scale;
        }
    }
    joint
}

/// Unnormalised Student-t kernel `(1 + |y_i - y_j|^2)^-1` and its sum.
fn student_kernel(y: &[f64], n: usize) -> (Vec<f64>, f64) {
    let mut num = vec![0.0; n * n];
    let mut z = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let dx = y[2 * i] - y[2 * j];
            let dy = y[2 * i + 1] - y[2 * j + 1];
            let k = 1.0 / (1.0 + dx * dx + dy * dy);
            num[i * n + j] = k;
            num[j * n + i] = k;
            z += 2.0 * k;
        }
    }
    (num, z)
}

/// `KL(P || Q)` for a 2-D layout `y` (interleaved x, y pairs).
pub fn kl_divergence(p: &[f64], y: &[f64]) -> f64 {
    let n = y.len() / 2;
    let (num, z) = student_kernel(y, n);
    let mut kl = 0.0;
    for i in 0..n {
        for j in 0..n {
            let pij = p[i * n + j];
            if i != j && pij > 0.0 {
                kl += pij * (pij / (num[i * n + j] / z)).ln();
            }
        }
    }
    kl
}

/// Gradient of `KL(exaggeration * P || Q)` with respect to `y`:
/// `4 sum_j (e p_ij - q_ij)(y_i - y_j) / (1 + |y_i - y_j|^2)`.
pub fn kl_gradient(p: &[f64], y: &[f64], exaggeration: f64) -> Vec<f64> {
    let n = y.len() / 2;
    let (num, z) = student_kernel(y, n);
    let mut grad = vec![0.0; 2 * n];
    for i in 0..n {
        let (mut gx, mut gy) = (0.0, 0.0);
        for j in 0..n {
            if i == j {
                continue;
            }
            let k = num[i * n + j];
            let m = (exaggeration * p[i * n + j] - k / z) * k;
            gx += m * (y[2 * i] - y[2 * j]);
            gy += m * (y[2 * i + 1] - y[2 * j + 1]);
        }
        grad[2 * i] = 4.0 * gx;
        grad[2 * i + 1] = 4.0 * gy;
    }
    grad
}

#[derive(Clone, Debug)]
pub struct TsneOutcome {
    /// Interleaved `(x, y)` per input row.
    pub coords: Vec<f64>,
    /// Unexaggerated KL divergence after every iteration.
    pub kl_trace: Vec<f64>,
}

impl TsneOutcome {
    pub fn final_kl(&self) -> f64 {
        self.kl_trace.last().copied().unwrap_or(f64::NAN)
    }
}

/// Runs the optimisation, calling `observe(iteration, coords)` after each
/// update (handy for gradient checks at intermediate iterates).
pub fn tsne_with<F: FnMut(usize, &[f64])>(
    data: &[f64],
    dim: usize,
    cfg: &TsneConfig,
    mut observe: F,
) -> Result<TsneOutcome> {
    if dim == 0 || !data.len().is_multiple_of(dim) {
        return Err(Error::Config("data length is not a multiple of the dimension".into()));
    }
    let n = data.len() / dim;
    cfg.validate(n)?;
    let p = joint_probabilities(data, dim, cfg.perplexity);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let normal = Normal::new(0.0, 1e-4).expect("valid normal");
    let mut y: Vec<f64> = (0..2 * n).map(|_| normal.sample(&mut rng)).collect();
    let mut velocity = vec![0.0; 2 * n];
    let mut kl_trace = Vec::with_capacity(cfg.iters);

    for iter in 0..cfg.iters {
        let exaggeration = if iter < cfg.exaggeration_iters { cfg.exaggeration } else { 1.0 };
        let momentum = if iter < cfg.momentum_switch { cfg.initial_momentum } else { cfg.final_momentum };
        let grad = kl_gradient(&p, &y, exaggeration);
        for ((v, g), yi) in velocity.iter_mut().zip(&grad).zip(y.iter_mut()) {
            *v = momentum * *v - cfg.learning_rate * g;
            *yi += *v;
        }
        let (mx, my) = y.chunks_exact(2).fold((0.0, 0.0), |(a, b), c| (a + c[0], b + c[1]));
        for c in y.chunks_exact_mut(2) {
            c[0] -= mx / n as f64;
            c[1] -= my / n as f64;
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("t-SNE diverged at iteration {iter}")));
        }
        kl_trace.push(kl_divergence(&p, &y));
        observe(iter, &y);
    }
    Ok(TsneOutcome { coords: y, kl_trace })
}

pub fn tsne(data: &[f64], dim: usize, cfg: &TsneConfig) -> Result<TsneOutcome> {
    tsne_with(data, dim, cfg, |_, _| {})
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProjectedPoint {
    pub token: String,
    pub x: f64,
    pub y: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Projection2D {
    pub rows: Vec<ProjectedPoint>,
    pub perplexity: f64,
    pub final_kl: f64,
}

/// Project a subset of tokens (all of `space` when `tokens` is `None`).
pub fn project(space: &VectorSpace, tokens: Option<&[String]>, cfg: &TsneConfig) -> Result<Projection2D> {
    let selected: Vec<usize> = match tokens {
        None => (0..space.len()).collect(),
        Some(ts) => ts.iter().map(|t| space.lookup(t)).collect::<Result<_>>()?,
    };
    let data: Vec<f64> = selected.iter().flat_map(|&i| space.vector(i).iter().copied()).collect();
    let out = tsne(&data, space.dim(), cfg)?;
    Ok(Projection2D {
        rows: selected
            .iter()
            .zip(out.coords.chunks_exact(2))
            .map(|(&i, c)| ProjectedPoint {
                token: space.tokens()[i].clone(),
                x: c[0],
                y: c[1],
            })
            .collect(),
        perplexity: cfg.perplexity,
        final_kl: out.final_kl().max(0.0),
    })
}

/// CSV `token,x,y,cluster_id`; `cluster_of` supplies the id per token.
pub fn write_projection(
    projection: &Projection2D,
    mut cluster_of: impl FnMut(&str) -> Option<usize>,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(["token", "x", "y", "cluster_id"])
        .map_err(|e| csv_error(path, e))?;
    for r in &projection.rows {
        let cluster = cluster_of(&r.token).map(|c| c.to_string()).unwrap_or_default();
        w.write_record([r.token.as_str(), &r.x.to_string(), &r.y.to_string(), &cluster])
            .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
