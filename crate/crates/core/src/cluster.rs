//! Lloyd's k-means over embedding rows, representative-keyword selection
//! and cluster report export.

use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::corpus::Vocabulary;
use crate::error::{Error, Result};
use crate::vectors::{csv_error, dot, norm, VectorSpace};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Init {
    #[default]
    KMeansPlusPlus,
    Random,
}

impl FromStr for Init {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kmeanspp" => Ok(Init::KMeansPlusPlus),
            "random" => Ok(Init::Random),
            other => Err(Error::Config(format!("unknown k-means init {other:?} (expected kmeanspp or random)"))),
        }
    }
}

impl std::fmt::Display for Init {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Init::KMeansPlusPlus => "kmeanspp",
            Init::Random => "random",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KMeansConfig {
    pub k: usize,
    pub max_iter: usize,
    pub tol: f64,
    pub seed: u64,
    pub init: Init,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        KMeansConfig {
            k: 100,
            max_iter: 300,
            tol: 0.0,
            seed: 1,
            init: Init::KMeansPlusPlus,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KMeansResult {
    pub k: usize,
    pub dim: usize,
    /// Row-major `k x dim`.
    pub centroids: Vec<f64>,
    pub assignments: Vec<usize>,
    pub wcss: f64,
    pub iterations: usize,
    pub seed: u64,
    /// WCSS after initialisation and after every Lloyd iteration.
    pub wcss_history: Vec<f64>,
}

impl KMeansResult {
    pub fn centroid(&self, c: usize) -> &[f64] {
        &self.centroids[c * self.dim..(c + 1) * self.dim]
    }

    pub fn members(&self, c: usize) -> impl Iterator<Item = usize> + '_ {
        self.assignments
            .iter()
            .enumerate()
            .filter(move |(_, &a)| a == c)
            .map(|(i, _)| i)
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        sizes
    }
}

#[inline]
pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest centroid by Euclidean distance, ties to the lowest id.
fn nearest(point: &[f64], centroids: &[f64], dim: usize) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.chunks_exact(dim).enumerate() {
        let d = squared_distance(point, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn assign(data: &[f64], dim: usize, centroids: &[f64]) -> Vec<usize> {
    data.par_chunks_exact(dim)
        .map(|p| nearest(p, centroids, dim).0)
        .collect()
}

pub fn wcss(data: &[f64], dim: usize, centroids: &[f64], assignments: &[usize]) -> f64 {
    data.chunks_exact(dim)
        .zip(assignments)
        .map(|(p, &c)| squared_distance(p, &centroids[c * dim..(c + 1) * dim]))
        .sum()
}

fn update_means(data: &[f64], dim: usize, k: usize, assignments: &[usize], centroids: &mut [f64]) {
    let mut sums = vec![0.0; k * dim];
    let mut counts = vec![0usize; k];
    for (p, &c) in data.chunks_exact(dim).zip(assignments) {
        counts[c] += 1;
        for (s, v) in sums[c * dim..(c + 1) * dim].iter_mut().zip(p) {
            *s += v;
        }
    }
    for c in 0..k {
        if counts[c] > 0 {
            for d in 0..dim {
                centroids[c * dim + d] = sums[c * dim + d] / counts[c] as f64;
            }
        }
    }
}

/// Give each empty cluster the point farthest from its own centroid, moving
/// that cluster's centroid onto the point. Returns whether anything moved.
fn repair_empty(data: &[f64], dim: usize, k: usize, assignments: &mut [usize], centroids: &mut [f64]) -> bool {
    let mut counts = vec![0usize; k];
    for &a in assignments.iter() {
        counts[a] += 1;
    }
    let mut repaired = false;
    for c in 0..k {
        if counts[c] > 0 {
            continue;
        }
        let donor = data
            .chunks_exact(dim)
            .enumerate()
            .filter(|(i, _)| counts[assignments[*i]] > 1)
            .map(|(i, p)| (i, squared_distance(p, &centroids[assignments[i] * dim..(assignments[i] + 1) * dim])))
            .fold(None, |best: Option<(usize, f64)>, (i, d)| match best {
                Some((_, bd)) if bd >= d => best,
                _ => Some((i, d)),
            });
        let Some((i, _)) = donor else { break };
        counts[assignments[i]] -= 1;
        counts[c] += 1;
        assignments[i] = c;
        centroids[c * dim..(c + 1) * dim].copy_from_slice(&data[i * dim..(i + 1) * dim]);
        repaired = true;
    }
    repaired
}

/// Reassign to nearest centroids, repairing empty clusters. If coincident
/// centroids (duplicate points) keep emptying a cluster, the repaired
/// assignment is kept even though it is not nearest-centroid.
fn assign_repaired(data: &[f64], dim: usize, k: usize, centroids: &mut [f64]) -> Vec<usize> {
    let mut assignments = assign(data, dim, centroids);
    for _ in 0..k {
        if !repair_empty(data, dim, k, &mut assignments, centroids) {
            break;
        }
        let next = assign(data, dim, centroids);
        let mut counts = vec![0usize; k];
        next.iter().for_each(|&a| counts[a] += 1);
        if counts.contains(&0) {
            log::debug!("k-means: coincident centroids, keeping repaired assignment");
            break;
        }
        assignments = next;
    }
    assignments
}

fn init_centroids(data: &[f64], n: usize, dim: usize, cfg: &KMeansConfig, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let row = |i: usize| &data[i * dim..(i + 1) * dim];
    let mut chosen: Vec<usize> = Vec::with_capacity(cfg.k);
    match cfg.init {
        Init::Random => {
            chosen = rand::seq::index::sample(rng, n, cfg.k).into_vec();
        }
        Init::KMeansPlusPlus => {
            chosen.push(rng.random_range(0..n));
            let mut d2: Vec<f64> = (0..n).map(|i| squared_distance(row(i), row(chosen[0]))).collect();
            while chosen.len() < cfg.k {
                let total: f64 = d2.iter().sum();
                let next = if total > 0.0 {
                    let mut target = rng.random::<f64>() * total;
                    let mut pick = None;
                    for (i, &d) in d2.iter().enumerate() {
                        if d > 0.0 {
                            pick = Some(i);
                            if target < d {
                                break;
                            }
                            target -= d;
                        }
                    }
                    pick.expect("positive mass")
                } else {
                    // All remaining points coincide with a chosen centre.
                    let free: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
                    free[rng.random_range(0..free.len())]
                };
                chosen.push(next);
                for (i, d) in d2.iter_mut().enumerate() {
                    *d = d.min(squared_distance(row(i), row(next)));
                }
            }
        }
    }
    chosen.iter().flat_map(|&i| row(i).iter().copied()).collect()
}

/// Lloyd's algorithm. Stops when assignments no longer change, when the
/// WCSS improvement drops below `tol`, or after `max_iter` iterations.
pub fn kmeans(data: &[f64], dim: usize, cfg: &KMeansConfig) -> Result<KMeansResult> {
    if dim == 0 || !data.len().is_multiple_of(dim) {
        return Err(Error::Config("data length is not a multiple of the dimension".into()));
    }
    let n = data.len() / dim;
    if cfg.k == 0 || cfg.k > n {
        return Err(Error::Config(format!("k = {} must lie in 1..={n}", cfg.k)));
    }
    if cfg.max_iter == 0 {
        return Err(Error::Config("max_iter must be at least 1".into()));
    }
    if !(cfg.tol >= 0.0) {
        return Err(Error::Config("tol must be non-negative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut centroids = init_centroids(data, n, dim, cfg, &mut rng);
    let mut assignments = assign_repaired(data, dim, cfg.k, &mut centroids);
    let mut history = vec![wcss(data, dim, &centroids, &assignments)];
    let mut iterations = 0;
    while iterations < cfg.max_iter {
        iterations += 1;
        update_means(data, dim, cfg.k, &assignments, &mut centroids);
        let next = assign_repaired(data, dim, cfg.k, &mut centroids);
        let current = wcss(data, dim, &centroids, &next);
        let previous = *history.last().expect("history starts non-empty");
        history.push(current);
        let unchanged = next == assignments;
        assignments = next;
        if unchanged || previous - current < cfg.tol {
            break;
        }
    }
    Ok(KMeansResult {
        k: cfg.k,
        dim,
        wcss: *history.last().unwrap(),
        centroids,
        assignments,
        iterations,
        seed: cfg.seed,
        wcss_history: history,
    })
}

/// Run `restarts` seeds (`seed`, `seed + 1`, ...) and keep the lowest WCSS;
/// ties keep the earliest seed.
pub fn kmeans_best_of(data: &[f64], dim: usize, cfg: &KMeansConfig, restarts: usize) -> Result<KMeansResult> {
    let mut best: Option<KMeansResult> = None;
    for r in 0..restarts.max(1) {
        let run = kmeans(
            data,
            dim,
            &KMeansConfig {
                seed: cfg.seed.wrapping_add(r as u64),
                ..cfg.clone()
            },
        )?;
        if best.as_ref().is_none_or(|b| run.wcss < b.wcss) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Cluster `space`, optionally on length-normalised rows.
pub fn kmeans_space(space: &VectorSpace, cfg: &KMeansConfig, normalize: bool) -> Result<KMeansResult> {
    if normalize {
        kmeans(space.normalized().data(), space.dim(), cfg)
    } else {
        kmeans(space.data(), space.dim(), cfg)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Representative {
    #[default]
    CentroidCosine,
    Frequency,
}

impl FromStr for Representative {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "centroid_cosine" => Ok(Representative::CentroidCosine),
            "frequency" => Ok(Representative::Frequency),
            other => Err(Error::Config(format!(
                "unknown representative method {other:?} (expected centroid_cosine or frequency)"
            ))),
        }
    }
}

impl std::fmt::Display for Representative {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Representative::CentroidCosine => "centroid_cosine",
            Representative::Frequency => "frequency",
        })
    }
}

fn check_shape(space: &VectorSpace, result: &KMeansResult, cluster_id: usize) -> Result<()> {
    if result.assignments.len() != space.len() || result.dim != space.dim() {
        return Err(Error::Config("clustering result does not match the vector space".into()));
    }
    if cluster_id >= result.k {
        return Err(Error::Config(format!("cluster id {cluster_id} out of range 0..{}", result.k)));
    }
    Ok(())
}

/// Cosine to a centroid; a zero centroid scores 0 for every member.
pub fn similarity_to_centroid(v: &[f64], centroid: &[f64]) -> f64 {
    let (nv, nc) = (norm(v), norm(centroid));
    if nv == 0.0 || nc == 0.0 {
        return 0.0;
    }
    (dot(v, centroid) / (nv * nc)).clamp(-1.0, 1.0)
}

/// Members of a cluster with their cosine to the centroid, best first,
/// ties by ascending token.
pub fn ranked_members<'a>(space: &'a VectorSpace, result: &KMeansResult, cluster_id: usize) -> Result<Vec<(&'a str, f64)>> {
    check_shape(space, result, cluster_id)?;
    let centroid = result.centroid(cluster_id);
    let mut members: Vec<(&str, f64)> = result
        .members(cluster_id)
        .map(|i| (space.tokens()[i].as_str(), similarity_to_centroid(space.vector(i), centroid)))
        .collect();
    members.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(b.0)));
    Ok(members)
}

pub fn cluster_terms(space: &VectorSpace, result: &KMeansResult, cluster_id: usize, limit: usize) -> Result<Vec<String>> {
    Ok(ranked_members(space, result, cluster_id)?
        .into_iter()
        .take(limit)
        .map(|(t, _)| t.to_string())
        .collect())
}

/// Pick one keyword to stand for a cluster. `Frequency` needs the corpus
/// vocabulary; members missing from it count as zero.
pub fn representative(
    space: &VectorSpace,
    result: &KMeansResult,
    cluster_id: usize,
    method: Representative,
    vocab: Option<&Vocabulary>,
) -> Result<String> {
    let members = ranked_members(space, result, cluster_id)?;
    if members.is_empty() {
        return Err(Error::Config(format!("cluster {cluster_id} is empty")));
    }
    let pick = match method {
        Representative::CentroidCosine => members[0].0,
        Representative::Frequency => {
            let vocab = vocab.ok_or_else(|| Error::Config("frequency representatives need a vocabulary".into()))?;
            members
                .iter()
                .map(|(t, _)| (*t, vocab.count_of(t).unwrap_or(0)))
                .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(a.0)))
                .expect("non-empty")
                .0
        }
    };
    Ok(pick.to_string())
}

/// Cluster id holding `token`.
pub fn cluster_of(space: &VectorSpace, result: &KMeansResult, token: &str) -> Result<usize> {
    Ok(result.assignments[space.lookup(token)?])
}

/// CSV `token,cluster_id,similarity_to_centroid`, clusters in id order,
/// members best first.
pub fn write_cluster_report(space: &VectorSpace, result: &KMeansResult, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(["token", "cluster_id", "similarity_to_centroid"])
        .map_err(|e| csv_error(path, e))?;
    for c in 0..result.k {
        for (t, s) in ranked_members(space, result, c)? {
            w.write_record([t, &c.to_string(), &s.to_string()])
                .map_err(|e| csv_error(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Read cluster assignments back from a report written by
/// [`write_cluster_report`], as `(token, cluster_id)` pairs.
pub fn read_cluster_report(path: impl AsRef<Path>) -> Result<Vec<(String, usize)>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let id = rec
            .get(1)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Format(format!("{}: bad cluster id", path.display())))?;
        out.push((rec.get(0).unwrap_or_default().to_string(), id));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashMap;

    fn cfg(k: usize, seed: u64) -> KMeansConfig {
        KMeansConfig {
            k,
            seed,
            ..KMeansConfig::default()
        }
    }

    /// Exhaustive search over every assignment of `n` 1-D points to `k`
    /// labels; returns the optimal WCSS.
    fn best_partition(points: &[f64], k: usize) -> f64 {
        let n = points.len();
        let mut best = f64::INFINITY;
        for code in 0..k.pow(n as u32) {
            let labels: Vec<usize> = (0..n).map(|i| code / k.pow(i as u32) % k).collect();
            let mut total = 0.0;
            for c in 0..k {
                let members: Vec<f64> = (0..n).filter(|&i| labels[i] == c).map(|i| points[i]).collect();
                if members.is_empty() {
                    continue;
                }
                let mean = members.iter().sum::<f64>() / members.len() as f64;
                total += members.iter().map(|x| (x - mean).powi(2)).sum::<f64>();
            }
            best = best.min(total);
        }
        best
    }

    #[test]
    fn two_clusters_on_a_line() {
        let pts = [0.0, 1.0, 10.0, 11.0];
        assert_eq!(best_partition(&pts, 2), 1.0);
        let r = kmeans_best_of(&pts, 1, &cfg(2, 0), 10).unwrap();
        assert_eq!(r.wcss, 1.0);
        assert_eq!(r.assignments[0], r.assignments[1]);
        assert_eq!(r.assignments[2], r.assignments[3]);
        assert_ne!(r.assignments[0], r.assignments[2]);
        let mut cs = r.centroids.clone();
        cs.sort_by(f64::total_cmp);
        assert_eq!(cs, [0.5, 10.5]);
    }

    #[test]
    fn k_equals_n_is_exact() {
        let pts = [3.0, -1.0, 0.5, 0.25, 8.0];
        let r = kmeans(&pts, 1, &cfg(5, 4)).unwrap();
        assert_eq!(r.wcss, 0.0);
        let mut a = r.assignments.clone();
        a.sort();
        assert_eq!(a, [0, 1, 2, 3, 4]);
    }

    #[test]
    fn k_one_is_global_mean() {
        let pts = [1.0, 2.0, 3.0, 4.0, 2.0, 0.0];
        let r = kmeans(&pts, 2, &cfg(1, 9)).unwrap();
        assert_eq!(r.centroids, [2.0, 2.0]);
        let var: f64 = pts
            .chunks(2)
            .map(|p| (p[0] - 2.0).powi(2) + (p[1] - 2.0).powi(2))
            .sum();
        assert!((r.wcss - var).abs() < 1e-12);
    }

    #[test]
    fn k_larger_than_n_is_config_error() {
        assert!(matches!(kmeans(&[1.0, 2.0], 1, &cfg(3, 0)), Err(Error::Config(_))));
    }

    #[test]
    fn duplicate_points_still_fill_every_cluster() {
        let pts = [1.0, 1.0, 1.0, 5.0, 5.0, 9.0];
        for seed in 0..20 {
            let r = kmeans(&pts, 1, &cfg(3, seed)).unwrap();
            assert!(r.sizes().iter().all(|&s| s > 0), "seed {seed}: {:?}", r.assignments);
        }
    }

    fn toy_space() -> VectorSpace {
        VectorSpace::new(
            ["a", "b", "c", "d"].map(String::from).to_vec(),
            vec![1.0, 0.0, 0.9, 0.1, -1.0, 0.05, -0.95, -0.1],
            2,
            "toy",
        )
        .unwrap()
    }

    #[test]
    fn representatives_and_terms() {
        let space = toy_space();
        let r = kmeans_best_of(space.data(), 2, &cfg(2, 1), 5).unwrap();
        let ca = cluster_of(&space, &r, "a").unwrap();
        assert_eq!(cluster_of(&space, &r, "b").unwrap(), ca);
        let rep = representative(&space, &r, ca, Representative::CentroidCosine, None).unwrap();
        assert_eq!(cluster_terms(&space, &r, ca, 1).unwrap(), [rep.clone()]);
        let centroid = r.centroid(ca);
        let (sa, sb) = (
            similarity_to_centroid(&[1.0, 0.0], centroid),
            similarity_to_centroid(&[0.9, 0.1], centroid),
        );
        assert_eq!(rep, if sa >= sb { "a" } else { "b" });

        let mut terms = cluster_terms(&space, &r, 1 - ca, 10).unwrap();
        terms.sort();
        assert_eq!(terms, ["c", "d"]);
    }

    #[test]
    fn centroid_cosine_example_decided_by_direct_evaluation() {
        let space = VectorSpace::new(vec!["a".into(), "b".into()], vec![1.0, 0.0, 0.9, 0.1], 2, "t").unwrap();
        let r = KMeansResult {
            k: 1,
            dim: 2,
            centroids: vec![0.95, 0.05],
            assignments: vec![0, 0],
            wcss: 0.0,
            iterations: 0,
            seed: 0,
            wcss_history: vec![],
        };
        let ca = similarity_to_centroid(&[1.0, 0.0], &[0.95, 0.05]);
        let cb = similarity_to_centroid(&[0.9, 0.1], &[0.95, 0.05]);
        // 0.95 / |c| = 0.998618 against 0.86 / (|b| |c|) = 0.998314
        assert!((ca - 0.998618).abs() < 1e-6 && (cb - 0.998314).abs() < 1e-6, "{ca} {cb}");
        assert_eq!(representative(&space, &r, 0, Representative::CentroidCosine, None).unwrap(), "a");
    }

    #[test]
    fn frequency_representative() {
        let space = VectorSpace::new(vec!["x".into(), "y".into()], vec![1.0, 0.0, 0.0, 1.0], 2, "t").unwrap();
        let r = KMeansResult {
            k: 1,
            dim: 2,
            centroids: vec![0.5, 0.5],
            assignments: vec![0, 0],
            wcss: 0.0,
            iterations: 0,
            seed: 0,
            wcss_history: vec![],
        };
        let vocab = Vocabulary::from_counts(HashMap::from([("x".to_string(), 5), ("y".to_string(), 9)]), 1).unwrap();
        assert_eq!(representative(&space, &r, 0, Representative::Frequency, Some(&vocab)).unwrap(), "y");
        assert!(representative(&space, &r, 0, Representative::Frequency, None).is_err());
    }

    #[test]
    fn singleton_representative() {
        let space = toy_space();
        let r = kmeans(space.data(), 2, &cfg(4, 2)).unwrap();
        for c in 0..4 {
            let member = r.members(c).next().unwrap();
            assert_eq!(
                representative(&space, &r, c, Representative::CentroidCosine, None).unwrap(),
                space.tokens()[member]
            );
        }
    }

    #[test]
    fn report_round_trip() {
        let space = toy_space();
        let r = kmeans(space.data(), 2, &cfg(2, 3)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("clusters.csv");
        write_cluster_report(&space, &r, &p).unwrap();
        let rows = read_cluster_report(&p).unwrap();
        assert_eq!(rows.len(), 4);
        for (t, c) in rows {
            assert_eq!(cluster_of(&space, &r, &t).unwrap(), c);
        }
    }

    proptest! {
        #[test]
        fn lloyd_invariants(points in proptest::collection::vec(-10.0f64..10.0, 6..60), k in 1usize..5, seed in 0u64..1000) {
            let dim = 2;
            let n = points.len() / dim;
            let data = &points[..n * dim];
            prop_assume!(k <= n);
            let r = kmeans(data, dim, &cfg(k, seed)).unwrap();
            for w in r.wcss_history.windows(2) {
                prop_assert!(w[1] <= w[0], "{:?}", r.wcss_history);
            }
            prop_assert!(r.sizes().iter().all(|&s| s > 0));
            let recomputed = wcss(data, dim, &r.centroids, &r.assignments);
            prop_assert_eq!(recomputed, r.wcss);
            let brute: Vec<usize> = data.chunks(dim).map(|p| {
                let mut best = 0;
                for c in 1..k {
                    if squared_distance(p, r.centroid(c)) < squared_distance(p, r.centroid(best)) {
                        best = c;
                    }
                }
                best
            }).collect();
            prop_assert_eq!(&brute, &r.assignments);
            prop_assert_eq!(kmeans(data, dim, &cfg(k, seed)).unwrap(), r);
        }
    }
}
