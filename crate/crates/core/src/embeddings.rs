//! Pretrained word vectors, word frequencies and the function-word filter.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::index;

use crate::error::{Error, Result};
use crate::linalg::{self, dot, norm};

#[derive(Debug, Clone, Copy)]
pub struct LoadOptions {
    pub lowercase: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions { lowercase: true }
    }
}

/// Immutable vocabulary of `dim`-dimensional vectors with optional counts.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    words: Vec<String>,
    index: HashMap<String, usize>,
    vectors: Vec<f64>,
    freqs: Option<Vec<u64>>,
}

impl EmbeddingTable {
    /// Builds a table from in-memory entries. Words must be unique and
    /// non-empty, vectors finite and of length `dim`.
    pub fn from_entries<I, S>(dim: usize, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, Vec<f64>)>,
        S: Into<String>,
    {
        if dim == 0 {
            return Err(Error::invalid("embedding dimension must be at least 1"));
        }
        let mut table = EmbeddingTable {
            dim,
            words: Vec::new(),
            index: HashMap::new(),
            vectors: Vec::new(),
            freqs: None,
        };
        for (word, v) in entries {
            let word = word.into();
            if word.is_empty() {
                return Err(Error::invalid("empty word"));
            }
            if v.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: v.len(),
                });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::invalid(format!("non-finite component for {word:?}")));
            }
            if table.index.contains_key(&word) {
                return Err(Error::invalid(format!("duplicate word {word:?}")));
            }
            table.push(word, &v);
        }
        Ok(table)
    }

    fn push(&mut self, word: String, v: &[f64]) {
        self.index.insert(word.clone(), self.words.len());
        self.words.push(word);
        self.vectors.extend_from_slice(v);
    }

    pub fn load(path: impl AsRef<Path>, opts: LoadOptions) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(BufReader::new(file), path, opts)
    }

    /// Parses word2vec text format. `origin` only labels error messages.
    pub fn read<R: BufRead>(reader: R, origin: &Path, opts: LoadOptions) -> Result<Self> {
        let mut lines = reader.lines().enumerate();
        let (vocab_size, dim) = loop {
            let Some((i, line)) = lines.next() else {
                return Err(Error::parse(origin, 1, "missing header"));
            };
            let line = line.map_err(|e| Error::io(origin, e))?;
            if line.trim().is_empty() {
                continue;
            }
            break parse_header(&line).ok_or_else(|| {
                Error::parse(
                    origin,
                    i + 1,
                    format!(
                        "malformed header {:?}, expected \"<vocab_size> <dim>\"",
                        line.trim()
                    ),
                )
            })?;
        };

        let mut table = EmbeddingTable {
            dim,
            words: Vec::with_capacity(vocab_size),
            index: HashMap::with_capacity(vocab_size),
            vectors: Vec::with_capacity(vocab_size * dim),
            freqs: None,
        };
        // raw (pre-case-folding) spellings seen so far
        let mut raw_seen: HashSet<String> = HashSet::new();
        let mut entries = 0usize;
        let mut v = Vec::with_capacity(dim);
        for (i, line) in lines {
            let lineno = i + 1;
            let line = line.map_err(|e| Error::io(origin, e))?;
            let mut fields = line.split_whitespace();
            let Some(raw) = fields.next() else { continue };
            if entries == vocab_size {
                return Err(Error::parse(
                    origin,
                    lineno,
                    format!("more entries than the declared {vocab_size}"),
                ));
            }
            v.clear();
            for f in fields {
                let x: f64 = f
                    .parse()
                    .map_err(|_| Error::parse(origin, lineno, format!("invalid number {f:?}")))?;
                if !x.is_finite() {
                    return Err(Error::parse(
                        origin,
                        lineno,
                        format!("non-finite value {f:?}"),
                    ));
                }
                v.push(x);
            }
            if v.len() != dim {
                return Err(Error::parse(
                    origin,
                    lineno,
                    format!("expected {dim} components, got {}", v.len()),
                ));
            }
            if !raw_seen.insert(raw.to_string()) {
                return Err(Error::DuplicateWord {
                    path: origin.to_path_buf(),
                    line: lineno,
                    word: raw.to_string(),
                });
            }
            entries += 1;
            let word = if opts.lowercase {
                raw.to_lowercase()
            } else {
                raw.to_string()
            };
            // case variants folding onto an existing entry keep the first vector
            if !table.index.contains_key(&word) {
                table.push(word, &v);
            }
        }
        if entries != vocab_size {
            return Err(Error::parse(
                origin,
                entries + 1,
                format!("header declares {vocab_size} entries, found {entries}"),
            ));
        }
        Ok(table)
    }

    /// Writes word2vec text format; floats use shortest round-trip formatting.
    pub fn write<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{} {}", self.len(), self.dim)?;
        for (i, w) in self.words.iter().enumerate() {
            write!(out, "{w}")?;
            for x in self.vector_at(i) {
                write!(out, " {x}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    /// Reads a "word count" sidecar. Unknown words are ignored; counts of case
    /// variants are summed when `lowercase` is set.
    pub fn load_frequencies(&mut self, path: impl AsRef<Path>, lowercase: bool) -> Result<()> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut freqs = vec![0u64; self.len()];
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let mut fields = line.split_whitespace();
            let Some(word) = fields.next() else { continue };
            let count = fields
                .next()
                .and_then(|c| c.parse::<u64>().ok())
                .ok_or_else(|| Error::parse(path, i + 1, "expected \"word count\""))?;
            let key = if lowercase {
                word.to_lowercase()
            } else {
                word.to_string()
            };
            if let Some(&idx) = self.index.get(&key) {
                freqs[idx] += count;
            }
        }
        self.freqs = Some(freqs);
        Ok(())
    }

    pub fn set_frequencies(&mut self, freqs: Vec<u64>) -> Result<()> {
        if freqs.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                got: freqs.len(),
            });
        }
        self.freqs = Some(freqs);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn index_of(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    pub fn vector(&self, word: &str) -> Option<&[f64]> {
        self.index_of(word).map(|i| self.vector_at(i))
    }

    pub fn vector_at(&self, idx: usize) -> &[f64] {
        &self.vectors[idx * self.dim..(idx + 1) * self.dim]
    }

    pub fn has_frequencies(&self) -> bool {
        self.freqs.is_some()
    }

    pub fn frequency(&self, word: &str) -> Option<u64> {
        let f = self.freqs.as_ref()?;
        self.index_of(word).map(|i| f[i])
    }
}

fn parse_header(line: &str) -> Option<(usize, usize)> {
    let mut it = line.split_whitespace();
    let n = it.next()?.parse().ok()?;
    let d: usize = it.next()?.parse().ok()?;
    if it.next().is_some() || d == 0 {
        return None;
    }
    Some((n, d))
}

/// Function words excluded from contexts.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StopwordSet {
    words: HashSet<String>,
}

const DEFAULT_STOPWORDS: &str = include_str!("../data/stopwords_en.txt");

impl StopwordSet {
    pub fn empty() -> Self {
        Self::default()
    }

    /// The bundled English list.
    pub fn english() -> Self {
        Self::parse(DEFAULT_STOPWORDS, true)
    }

    pub fn load(path: impl AsRef<Path>, lowercase: bool) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::parse(&text, lowercase))
    }

    fn parse(text: &str, lowercase: bool) -> Self {
        text.lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(|l| {
                if lowercase {
                    l.to_lowercase()
                } else {
                    l.to_string()
                }
            })
            .collect()
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

impl<S: Into<String>> FromIterator<S> for StopwordSet {
    fn from_iter<T: IntoIterator<Item = S>>(iter: T) -> Self {
        StopwordSet {
            words: iter.into_iter().map(Into::into).collect(),
        }
    }
}

pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            expected: u.len(),
            got: v.len(),
        });
    }
    let (nu, nv) = (norm(u), norm(v));
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok((dot(u, v) / (nu * nv)).clamp(-1.0, 1.0))
}

/// Mean and population standard deviation of cosine similarity over
/// `sample_pairs` uniformly drawn index pairs `i != j` (with replacement).
pub fn pairwise_cosine_stats<V: AsRef<[f64]>>(
    vectors: &[V],
    sample_pairs: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let n = vectors.len();
    if n < 2 {
        return Err(Error::NotEnoughCandidates {
            needed: 2,
            available: n,
        });
    }
    if sample_pairs == 0 {
        return Err(Error::invalid("sample_pairs must be positive"));
    }
    let unit: Vec<Vec<f64>> = vectors
        .iter()
        .map(|v| linalg::normalized(v.as_ref()).ok_or(Error::ZeroVector))
        .collect::<Result<_>>()?;
    let mut rng = linalg::rng_for(&[seed, 0x636f_7369]);
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..sample_pairs {
        let pair = index::sample(&mut rng, n, 2);
        let c = dot(&unit[pair.index(0)], &unit[pair.index(1)]).clamp(-1.0, 1.0);
        sum += c;
        sum_sq += c * c;
    }
    let m = sample_pairs as f64;
    let mean = sum / m;
    let var = (sum_sq / m - mean * mean).max(0.0);
    Ok((mean, var.sqrt()))
}

/// Uniform sample without replacement from words with frequency strictly
/// greater than `min_freq`, returned in sampling order.
pub fn sample_frequent_words(
    table: &EmbeddingTable,
    min_freq: u64,
    count: usize,
    seed: u64,
) -> Result<Vec<String>> {
    let freqs = table.freqs.as_ref().ok_or(Error::NoFrequencies)?;
    if count == 0 {
        return Err(Error::invalid("count must be at least 1"));
    }
    let eligible: Vec<usize> = (0..table.len()).filter(|&i| freqs[i] > min_freq).collect();
    if eligible.len() < count {
        return Err(Error::NotEnoughCandidates {
            needed: count,
            available: eligible.len(),
        });
    }
    let mut rng = linalg::rng_for(&[seed, 0x6672_6571]);
    Ok(index::sample(&mut rng, eligible.len(), count)
        .into_iter()
        .map(|i| table.words[eligible[i]].clone())
        .collect())
}
