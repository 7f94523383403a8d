//! Sparse symmetric co-occurrence statistics.
//!
//! Each unordered pair `(i, j)` is stored once with `i <= j`. The diagonal
//! holds self co-occurrence (the same token seen twice inside one window).

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"KWCX";
const VERSION: u32 = 1;
const RECORD_BYTES: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Weighting {
    /// A pair at distance `d` contributes `1/d`.
    InverseDistance,
    /// Every in-window pair contributes 1.
    Uniform,
}

impl Weighting {
    #[inline]
    pub fn weight(self, distance: usize) -> f64 {
        match self {
            Weighting::InverseDistance => 1.0 / distance as f64,
            Weighting::Uniform => 1.0,
        }
    }

    fn code(self) -> u8 {
        match self {
            Weighting::InverseDistance => 0,
            Weighting::Uniform => 1,
        }
    }

    fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Weighting::InverseDistance),
            1 => Some(Weighting::Uniform),
            _ => None,
        }
    }
}

impl fmt::Display for Weighting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Weighting::InverseDistance => "inverse_distance",
            Weighting::Uniform => "uniform",
        })
    }
}

impl FromStr for Weighting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inverse_distance" => Ok(Weighting::InverseDistance),
            "uniform" => Ok(Weighting::Uniform),
            other => Err(Error::Config(format!(
                "unknown weighting {other:?} (expected inverse_distance or uniform)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CooccurrenceTable {
    vocab_size: usize,
    window: usize,
    weighting: Weighting,
    entries: BTreeMap<(u32, u32), f64>,
}

impl CooccurrenceTable {
    pub fn new(vocab_size: usize, window: usize, weighting: Weighting) -> Result<Self> {
        if window == 0 {
            return Err(Error::Config("window must be at least 1".into()));
        }
        if vocab_size > u32::MAX as usize {
            return Err(Error::Config(format!("vocabulary of {vocab_size} exceeds 32-bit ids")));
        }
        Ok(CooccurrenceTable {
            vocab_size,
            window,
            weighting,
            entries: BTreeMap::new(),
        })
    }

    /// Build directly from `(i, j, x)` triples; orientation is normalised
    /// and repeated pairs are summed.
    pub fn from_entries(
        vocab_size: usize,
        window: usize,
        weighting: Weighting,
        entries: impl IntoIterator<Item = (u32, u32, f64)>,
    ) -> Result<Self> {
        let mut table = CooccurrenceTable::new(vocab_size, window, weighting)?;
        for (i, j, x) in entries {
            table.check_id(i.max(j))?;
            if !(x.is_finite() && x > 0.0) {
                return Err(Error::Domain(format!("co-occurrence weight must be positive, got {x}")));
            }
            let key = if i <= j { (i, j) } else { (j, i) };
            *table.entries.entry(key).or_insert(0.0) += x;
        }
        Ok(table)
    }

    /// Build from a sequence of already-encoded documents in one pass.
    pub fn build<D: AsRef<[u32]>>(
        docs: &[D],
        vocab_size: usize,
        window: usize,
        weighting: Weighting,
    ) -> Result<Self> {
        let mut table = CooccurrenceTable::new(vocab_size, window, weighting)?;
        for doc in docs {
            table.accumulate(doc.as_ref())?;
        }
        Ok(table)
    }

    /// Build `shards` partial tables over contiguous document ranges in
    /// parallel, then merge them in shard order.
    pub fn build_sharded<D: AsRef<[u32]> + Sync>(
        docs: &[D],
        vocab_size: usize,
        window: usize,
        weighting: Weighting,
        shards: usize,
    ) -> Result<Self> {
        let shards = shards.max(1);
        let chunk = docs.len().div_ceil(shards).max(1);
        let parts = docs
            .par_chunks(chunk)
            .map(|part| CooccurrenceTable::build(part, vocab_size, window, weighting))
            .collect::<Result<Vec<_>>>()?;
        if parts.is_empty() {
            return CooccurrenceTable::new(vocab_size, window, weighting);
        }
        CooccurrenceTable::merge(&parts)
    }

    /// Add every in-window position pair of one document. Pairs never cross
    /// document boundaries.
    pub fn accumulate(&mut self, tokens: &[u32]) -> Result<()> {
        if let Some(&bad) = tokens.iter().find(|&&t| t as usize >= self.vocab_size) {
            return Err(Error::Index {
                id: bad as usize,
                size: self.vocab_size,
            });
        }
        for (p, &a) in tokens.iter().enumerate() {
            let end = (p + self.window).min(tokens.len() - 1);
            for (q, &b) in tokens.iter().enumerate().take(end + 1).skip(p + 1) {
                let key = if a <= b { (a, b) } else { (b, a) };
                *self.entries.entry(key).or_insert(0.0) += self.weighting.weight(q - p);
            }
        }
        Ok(())
    }

    /// Entry-wise sum. Tables are folded in the order given, each in
    /// ascending key order, so the result only depends on that order.
    pub fn merge(tables: &[CooccurrenceTable]) -> Result<Self> {
        let first = tables
            .first()
            .ok_or_else(|| Error::Config("merge needs at least one table".into()))?;
        let mut out = CooccurrenceTable::new(first.vocab_size, first.window, first.weighting)?;
        for t in tables {
            if (t.vocab_size, t.window, t.weighting) != (out.vocab_size, out.window, out.weighting) {
                return Err(Error::Config(format!(
                    "cannot merge tables with (V={}, window={}, {}) and (V={}, window={}, {})",
                    out.vocab_size, out.window, out.weighting, t.vocab_size, t.window, t.weighting
                )));
            }
            for (&k, &x) in &t.entries {
                *out.entries.entry(k).or_insert(0.0) += x;
            }
        }
        Ok(out)
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn weighting(&self) -> Weighting {
        self.weighting
    }

    /// Number of stored (unordered) pairs.
    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Logical (symmetric) lookup.
    pub fn get(&self, i: u32, j: u32) -> f64 {
        let key = if i <= j { (i, j) } else { (j, i) };
        self.entries.get(&key).copied().unwrap_or(0.0)
    }

    /// Stored entries in ascending `(i, j)` order, `i <= j`.
    pub fn iter(&self) -> impl ExactSizeIterator<Item = (u32, u32, f64)> + '_ {
        self.entries.iter().map(|(&(i, j), &x)| (i, j, x))
    }

    /// Sum over stored entries (each unordered pair once).
    pub fn total_weight(&self) -> f64 {
        self.entries.values().sum()
    }

    fn check_id(&self, i: u32) -> Result<()> {
        if i as usize >= self.vocab_size {
            return Err(Error::Index {
                id: i as usize,
                size: self.vocab_size,
            });
        }
        Ok(())
    }

    /// All `(j, X_ij)` with `X_ij > 0`, read from both storage orientations,
    /// sorted by descending weight then ascending `j`.
    pub fn row(&self, i: u32) -> Result<Vec<(u32, f64)>> {
        self.check_id(i)?;
        let mut row: Vec<(u32, f64)> = self
            .entries
            .range((i, i)..=(i, u32::MAX))
            .map(|(&(_, j), &x)| (j, x))
            .collect();
        row.extend(
            self.entries
                .range(..(i, i))
                .filter(|(&(_, j), _)| j == i)
                .map(|(&(a, _), &x)| (a, x)),
        );
        sort_row(&mut row);
        Ok(row)
    }

    /// Every row at once; cheaper than repeated [`row`](Self::row) calls.
    pub fn rows(&self) -> Vec<Vec<(u32, f64)>> {
        let mut rows = vec![Vec::new(); self.vocab_size];
        for (&(i, j), &x) in &self.entries {
            rows[i as usize].push((j, x));
            if i != j {
                rows[j as usize].push((i, x));
            }
        }
        for row in &mut rows {
            sort_row(row);
        }
        rows
    }

    pub fn save_binary(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.vocab_size as u32).to_le_bytes())?;
        w.write_all(&(self.window as u32).to_le_bytes())?;
        w.write_all(&[self.weighting.code()])?;
        w.write_all(&(self.entries.len() as u64).to_le_bytes())?;
        for (&(i, j), &x) in &self.entries {
            w.write_all(&i.to_le_bytes())?;
            w.write_all(&j.to_le_bytes())?;
            w.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn load_binary(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut bytes = Vec::new();
        BufReader::new(file)
            .read_to_end(&mut bytes)
            .map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        const HEADER: usize = 4 + 4 + 4 + 4 + 1 + 8;
        let fmt = |m: &str| Error::Format(m.to_string());
        if bytes.len() < HEADER {
            return Err(fmt("truncated header"));
        }
        if &bytes[0..4] != MAGIC {
            return Err(fmt("bad magic, not a co-occurrence file"));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let version = u32_at(4);
        if version != VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let vocab_size = u32_at(8) as usize;
        let window = u32_at(12) as usize;
        let weighting = Weighting::from_code(bytes[16]).ok_or_else(|| fmt("unknown weighting code"))?;
        let count = u64::from_le_bytes(bytes[17..25].try_into().unwrap()) as usize;
        let body = &bytes[HEADER..];
        if body.len() != count.saturating_mul(RECORD_BYTES) {
            return Err(Error::Format(format!(
                "expected {count} records ({} bytes), found {} bytes",
                count.saturating_mul(RECORD_BYTES),
                body.len()
            )));
        }
        let mut table = CooccurrenceTable::new(vocab_size, window, weighting)
            .map_err(|_| fmt("invalid header"))?;
        let mut prev = None;
        for rec in body.chunks_exact(RECORD_BYTES) {
            let i = u32::from_le_bytes(rec[0..4].try_into().unwrap());
            let j = u32::from_le_bytes(rec[4..8].try_into().unwrap());
            let x = f64::from_le_bytes(rec[8..16].try_into().unwrap());
            if i > j || j as usize >= vocab_size || !(x.is_finite() && x > 0.0) {
                return Err(Error::Format(format!("invalid record ({i}, {j}, {x})")));
            }
            if prev.is_some_and(|p| p >= (i, j)) {
                return Err(fmt("records out of order or duplicated"));
            }
            prev = Some((i, j));
            table.entries.insert((i, j), x);
        }
        Ok(table)
    }
}

fn sort_row(row: &mut [(u32, f64)]) {
    row.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
}
