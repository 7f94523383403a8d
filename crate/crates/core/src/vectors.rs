//! Token vector spaces: cosine queries, analogies and the GloVe text format.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Cosine similarity, clamped to `[-1, 1]`.
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Domain(format!("dimension mismatch: {} vs {}", a.len(), b.len())));
    }
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::Domain("cosine of a zero-norm vector".into()));
    }
    Ok(cosine_with_norms(a, na, b, nb))
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
fn cosine_with_norms(a: &[f64], na: f64, b: &[f64], nb: f64) -> f64 {
    (dot(a, b) / (na * nb)).clamp(-1.0, 1.0)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Neighbor {
    pub token: String,
    pub similarity: f64,
}

/// Either a token in the space or a raw query vector.
#[derive(Clone, Copy, Debug)]
pub enum Query<'a> {
    Token(&'a str),
    Vector(&'a [f64]),
}

#[derive(Clone, Debug, PartialEq)]
pub struct VectorSpace {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    data: Vec<f64>,
    norms: Vec<f64>,
    dim: usize,
    domain: String,
}

impl VectorSpace {
    /// `data` is row-major, one row of `dim` values per token.
    pub fn new(tokens: Vec<String>, data: Vec<f64>, dim: usize, domain: impl Into<String>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("vector dimension must be at least 1".into()));
        }
        if data.len() != tokens.len() * dim {
            return Err(Error::Config(format!(
                "{} values for {} tokens of dimension {dim}",
                data.len(),
                tokens.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite value for token {:?}", tokens[pos / dim])));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::Format(format!("duplicate token {t:?}")));
            }
        }
        let norms = data.chunks_exact(dim).map(norm).collect();
        Ok(VectorSpace {
            tokens,
            index,
            data,
            norms,
            dim,
            domain: domain.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn domain(&self) -> &str {
        &self.domain
    }

    pub fn with_domain(mut self, domain: impl Into<String>) -> Self {
        self.domain = domain.into();
        self
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn vector(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.index_of(token).map(|i| self.vector(i))
    }

    /// Look a token up, failing with spelling suggestions within edit
    /// distance 2.
    pub fn lookup(&self, token: &str) -> Result<usize> {
        self.index_of(token).ok_or_else(|| self.unknown(token))
    }

    fn unknown(&self, token: &str) -> Error {
        let mut close: Vec<(usize, &String)> = self
            .tokens
            .iter()
            .map(|t| (strsim::levenshtein(token, t), t))
            .filter(|(d, _)| *d <= 2)
            .collect();
        close.sort();
        Error::UnknownToken {
            token: token.to_string(),
            suggestions: close.into_iter().take(5).map(|(_, t)| t.clone()).collect(),
        }
    }

    /// Return all rows scaled to unit length (zero rows stay zero).
    pub fn normalized(&self) -> VectorSpace {
        let mut data = self.data.clone();
        for (row, &n) in data.chunks_exact_mut(self.dim).zip(&self.norms) {
            if n > 0.0 {
                row.iter_mut().for_each(|v| *v /= n);
            }
        }
        VectorSpace::new(self.tokens.clone(), data, self.dim, self.domain.clone()).expect("same shape")
    }

    /// Exact nearest neighbors by cosine similarity.
    ///
    /// Results are ordered by descending similarity, ties by ascending
    /// token. A token query never returns itself; `exclude` is also
    /// omitted. Zero-norm rows have no defined cosine and are skipped.
    pub fn nearest_neighbors<S: AsRef<str>>(&self, query: Query<'_>, k: usize, exclude: &[S]) -> Result<Vec<Neighbor>> {
        if k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        let mut skip: HashSet<usize> = exclude.iter().filter_map(|t| self.index_of(t.as_ref())).collect();
        let qvec = match query {
            Query::Token(t) => {
                let i = self.lookup(t)?;
                skip.insert(i);
                self.vector(i)
            }
            Query::Vector(v) => {
                if v.len() != self.dim {
                    return Err(Error::Domain(format!("query has dimension {}, space has {}", v.len(), self.dim)));
                }
                v
            }
        };
        let qn = norm(qvec);
        if qn == 0.0 {
            return Err(Error::Domain("query vector has zero norm".into()));
        }
        let mut scored: Vec<(f64, usize)> = (0..self.len())
            .filter(|i| !skip.contains(i) && self.norms[*i] > 0.0)
            .map(|i| (cosine_with_norms(qvec, qn, self.vector(i), self.norms[i]), i))
            .collect();
        let order = |a: &(f64, usize), b: &(f64, usize)| {
            b.0.total_cmp(&a.0)
                .then_with(|| self.tokens[a.1].cmp(&self.tokens[b.1]))
        };
        if scored.len() > k {
            scored.select_nth_unstable_by(k - 1, order);
            scored.truncate(k);
        }
        scored.sort_by(order);
        Ok(scored
            .into_iter()
            .map(|(s, i)| Neighbor {
                token: self.tokens[i].clone(),
                similarity: s,
            })
            .collect())
    }

    /// Neighbors of `vec(b) - vec(a) + vec(c)`, excluding the three inputs.
    pub fn analogy(&self, a: &str, b: &str, c: &str, k: usize) -> Result<Vec<Neighbor>> {
        let (va, vb, vc) = (self.vector(self.lookup(a)?), self.vector(self.lookup(b)?), self.vector(self.lookup(c)?));
        let target: Vec<f64> = (0..self.dim).map(|d| (vb[d] - va[d]) + vc[d]).collect();
        self.nearest_neighbors(Query::Vector(&target), k, &[a, b, c])
    }

    /// One line per token: the token followed by its values with six
    /// significant digits.
    pub fn save_text(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_text(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_text(&self, w: &mut impl Write) -> std::io::Result<()> {
        for (i, t) in self.tokens.iter().enumerate() {
            w.write_all(t.as_bytes())?;
            for v in self.vector(i) {
                write!(w, " {}", format_sig(*v, 6))?;
            }
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Read the GloVe text format. The domain label defaults to the file
    /// stem.
    pub fn load_text(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let domain = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("default")
            .to_string();
        Self::read_text(BufReader::new(file), domain).map_err(|e| match e {
            Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn read_text(reader: impl BufRead, domain: impl Into<String>) -> Result<Self> {
        let mut tokens = Vec::new();
        let mut seen = HashSet::new();
        let mut data = Vec::new();
        let mut dim = None;
        for (n, line) in reader.lines().enumerate() {
            let line_no = n + 1;
            let line = line.map_err(|e| Error::Format(format!("line {line_no}: {e}")))?;
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split_whitespace();
            let token = fields.next().expect("nonblank line has a field");
            let start = data.len();
            for f in fields {
                let v: f64 = f
                    .parse()
                    .map_err(|_| Error::Format(format!("line {line_no}: {f:?} is not a number")))?;
                if !v.is_finite() {
                    return Err(Error::Format(format!("line {line_no}: non-finite value")));
                }
                data.push(v);
            }
            let width = data.len() - start;
            match dim {
                None if width == 0 => return Err(Error::Format(format!("line {line_no}: no vector values"))),
                None => dim = Some(width),
                Some(d) if d != width => {
                    return Err(Error::Format(format!(
                        "line {line_no}: expected {d} values, found {width}"
                    )))
                }
                Some(_) => {}
            }
            if !seen.insert(token.to_string()) {
                return Err(Error::Format(format!("line {line_no}: duplicate token {token:?}")));
            }
            tokens.push(token.to_string());
        }
        let dim = dim.ok_or_else(|| Error::Format("no vectors found".into()))?;
        VectorSpace::new(tokens, data, dim, domain)
    }

    /// Write `token,similarity` rows for the `k` nearest neighbors of
    /// `query`; `k = 0` writes only the header.
    pub fn wordcloud_export(&self, query: &str, k: usize, path: impl AsRef<Path>) -> Result<Vec<Neighbor>> {
        self.lookup(query)?;
        let rows = if k == 0 {
            Vec::new()
        } else {
            self.nearest_neighbors::<&str>(Query::Token(query), k, &[])?
        };
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
        w.write_record(["token", "similarity"]).map_err(|e| csv_error(path, e))?;
        for n in &rows {
            w.write_record([n.token.as_str(), &n.similarity.to_string()])
                .map_err(|e| csv_error(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(rows)
    }
}

pub(crate) fn csv_error(path: &Path, e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            _ => unreachable!(),
        }
    } else {
        Error::Format(format!("{}: {e}", path.display()))
    }
}

/// Format with `digits` significant digits, `%g` style: plain decimal for
/// moderate exponents, scientific otherwise, trailing zeros trimmed.
pub fn format_sig(v: f64, digits: usize) -> String {
    if v == 0.0 || !v.is_finite() {
        return if v == 0.0 { "0".into() } else { v.to_string() };
    }
    let sci = format!("{:.*e}", digits - 1, v);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if exp < -4 || exp >= digits as i32 {
        let m = trim_zeros(mantissa);
        return format!("{m}e{exp}");
    }
    let decimals = (digits as i32 - 1 - exp).max(0) as usize;
    trim_zeros(&format!("{:.*}", decimals, v)).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toy() -> VectorSpace {
        VectorSpace::new(
            vec!["a".into(), "b".into(), "c".into()],
            vec![1.0, 0.0, 1.0, 0.01, 0.0, 1.0],
            2,
            "toy",
        )
        .unwrap()
    }

    #[test]
    fn cosine_identities() {
        let v = [0.3, -1.2, 4.0];
        assert!((cosine(&v, &v).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        let v2: Vec<f64> = v.iter().map(|x| 2.0 * x).collect();
        assert!((cosine(&v, &v2).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(cosine(&[0.0, 0.0], &[1.0, 0.0]), Err(Error::Domain(_))));
        assert!(matches!(cosine(&[1.0], &[1.0, 0.0]), Err(Error::Domain(_))));
    }

    #[test]
    fn nearest_neighbor_toy() {
        let s = toy();
        let n = s.nearest_neighbors::<&str>(Query::Token("a"), 1, &[]).unwrap();
        assert_eq!(n.len(), 1);
        assert_eq!(n[0].token, "b");
        let expect = 1.0 / (1.0f64 + 0.0001).sqrt();
        assert!((n[0].similarity - expect).abs() < 1e-15);
        assert!((n[0].similarity - 0.99995).abs() < 1e-6);
        assert_eq!(s.nearest_neighbors::<&str>(Query::Token("a"), 10, &[]).unwrap().len(), 2);
        assert_eq!(s.nearest_neighbors(Query::Token("a"), 10, &["b"]).unwrap().len(), 1);
    }

    #[test]
    fn unknown_token_suggests_spellings() {
        let s = VectorSpace::new(vec!["metoo".into(), "#metoo".into(), "zebra".into()], vec![1.0; 3], 1, "d").unwrap();
        match s.nearest_neighbors::<&str>(Query::Token("meto"), 1, &[]).unwrap_err() {
            Error::UnknownToken { suggestions, .. } => assert_eq!(suggestions, ["metoo", "#metoo"]),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn analogy_constructed_identity() {
        let s = VectorSpace::new(
            vec!["a".into(), "b".into(), "c".into(), "d".into(), "e".into()],
            vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 2.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.2, 0.1, 0.9],
            3,
            "d",
        )
        .unwrap();
        let r = s.analogy("a", "b", "c", 1).unwrap();
        assert_eq!(r[0].token, "d");
        assert!((r[0].similarity - 1.0).abs() < 1e-12);
    }

    #[test]
    fn format_sig_matches_g_style() {
        assert_eq!(format_sig(0.418, 6), "0.418");
        assert_eq!(format_sig(-0.41242123, 6), "-0.412421");
        assert_eq!(format_sig(1234567.0, 6), "1.23457e6");
        assert_eq!(format_sig(0.0000123456789, 6), "1.23457e-5");
        assert_eq!(format_sig(100.0, 6), "100");
        assert_eq!(format_sig(0.0, 6), "0");
    }

    #[test]
    fn text_format_parsing() {
        let s = VectorSpace::read_text("cat 0.1 0.2 0.3\n".as_bytes(), "d").unwrap();
        assert_eq!(s.tokens(), ["cat"]);
        assert_eq!(s.vector(0), [0.1, 0.2, 0.3]);
        assert_eq!(s.dim(), 3);

        let err = VectorSpace::read_text("a 1 2 3\nb 1 2 3 4\n".as_bytes(), "d").unwrap_err();
        assert!(matches!(&err, Error::Format(m) if m.contains("line 2")), "{err}");
        let err = VectorSpace::read_text("a 1\na 2\n".as_bytes(), "d").unwrap_err();
        assert!(matches!(&err, Error::Format(m) if m.contains("duplicate")), "{err}");
    }

    #[test]
    fn wordcloud_csv() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("cloud.csv");
        let s = VectorSpace::new(
            (0..5).map(|i| format!("t{i}")).collect(),
            vec![1.0, 0.0, 1.0, 0.1, 1.0, 0.3, 0.0, 1.0, 1.0, 0.2],
            2,
            "d",
        )
        .unwrap();
        s.wordcloud_export("t0", 3, &p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "token,similarity");
        let toks: Vec<&str> = lines[1..].iter().map(|l| l.split(',').next().unwrap()).collect();
        assert_eq!(toks, ["t1", "t4", "t2"]);

        s.wordcloud_export("t0", 0, &p).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "token,similarity\n");
    }

    fn space(rows: Vec<Vec<f64>>) -> VectorSpace {
        let dim = rows[0].len();
        let tokens = (0..rows.len()).map(|i| format!("w{i:03}")).collect();
        VectorSpace::new(tokens, rows.concat(), dim, "p").unwrap()
    }

    fn rows() -> impl Strategy<Value = Vec<Vec<f64>>> {
        proptest::collection::vec(proptest::collection::vec(-3i32..=3, 3), 4..25)
            .prop_map(|r| r.into_iter().map(|v| v.into_iter().map(f64::from).collect::<Vec<f64>>()).collect::<Vec<_>>())
            .prop_filter("nonzero rows", |r| r.iter().all(|v| v.iter().any(|&x| x != 0.0)))
    }

    proptest! {
        #[test]
        fn scaling_leaves_neighbors_unchanged(r in rows(), scale in 0.1f64..50.0) {
            let s = space(r.clone());
            let scaled = space(r.iter().map(|v| v.iter().map(|x| x * scale).collect()).collect());
            let q = s.tokens()[0].clone();
            let a = s.nearest_neighbors::<&str>(Query::Token(&q), 5, &[]).unwrap();
            let b = scaled.nearest_neighbors::<&str>(Query::Token(&q), 5, &[]).unwrap();
            prop_assert_eq!(a.len(), b.len());
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x.similarity - y.similarity).abs() < 1e-12);
            }
        }

        #[test]
        fn full_k_returns_every_other_token(r in rows()) {
            let s = space(r);
            for t in s.tokens() {
                let n = s.nearest_neighbors::<&str>(Query::Token(t), s.len() - 1, &[]).unwrap();
                let mut got: Vec<&str> = n.iter().map(|x| x.token.as_str()).collect();
                got.sort();
                let expect: Vec<&str> = s.tokens().iter().filter(|x| *x != t).map(String::as_str).collect();
                prop_assert_eq!(got, expect);
            }
        }

        #[test]
        fn degenerate_analogy_is_plain_neighbors(r in rows()) {
            let s = space(r);
            let (a, c) = (s.tokens()[0].clone(), s.tokens()[1].clone());
            let an = s.analogy(&a, &a, &c, 4).unwrap();
            let nn = s.nearest_neighbors(Query::Token(&c), 4, &[a.as_str()]).unwrap();
            prop_assert_eq!(an, nn);
        }

        #[test]
        fn text_round_trip_preserves_cosines(r in proptest::collection::vec(proptest::collection::vec(-1.0f64..1.0, 4), 2..12)) {
            prop_assume!(r.iter().all(|v| norm(v) > 1e-3));
            let s = space(r);
            let mut buf = Vec::new();
            s.write_text(&mut buf).unwrap();
            let back = VectorSpace::read_text(buf.as_slice(), "p").unwrap();
            prop_assert_eq!(back.tokens(), s.tokens());
            for i in 0..s.len() {
                for j in 0..s.len() {
                    let a = cosine(s.vector(i), s.vector(j)).unwrap();
                    let b = cosine(back.vector(i), back.vector(j)).unwrap();
                    prop_assert!((a - b).abs() < 1e-5);
                }
            }
        }
    }
}
