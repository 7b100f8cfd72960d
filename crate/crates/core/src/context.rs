//! Context extraction around target occurrences and the low-rank subspace
//! representation of a context.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::embeddings::{EmbeddingTable, StopwordSet};
use crate::error::{Error, Result};
use crate::linalg::{self, dot};

/// One occurrence of a target word and its filtered context.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContextInstance {
    pub instance_id: String,
    pub target: String,
    /// Eligible context words in sentence order, target excluded.
    pub tokens: Vec<String>,
    /// Token index of the target in its sentence.
    pub raw_position: usize,
    /// 1-based corpus line the occurrence came from (0 when not from a corpus).
    pub line: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowOptions {
    /// Eligible words taken on each side.
    pub window: usize,
    pub lowercase: bool,
    /// Keep the target word itself as a context token.
    pub include_target: bool,
}

impl Default for WindowOptions {
    fn default() -> Self {
        WindowOptions {
            window: 10,
            lowercase: true,
            include_target: false,
        }
    }
}

/// Byte ranges of whitespace-separated tokens.
pub fn token_spans(line: &str) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut start = None;
    for (i, ch) in line.char_indices() {
        if ch.is_whitespace() {
            if let Some(s) = start.take() {
                spans.push((s, i));
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        spans.push((s, line.len()));
    }
    spans
}

pub fn normalize_token(token: &str, lowercase: bool) -> String {
    if lowercase {
        token.to_lowercase()
    } else {
        token.to_string()
    }
}

/// Up to `window` eligible words on each side of `position`, in sentence
/// order. Eligible means in vocabulary, not a stopword and not the target
/// word. `tokens` must already be normalized.
pub fn window_tokens(
    tokens: &[String],
    position: usize,
    opts: &WindowOptions,
    table: &EmbeddingTable,
    stopwords: &StopwordSet,
) -> Vec<String> {
    let target = tokens.get(position).map(String::as_str).unwrap_or("");
    let eligible = |t: &String| t != target && table.contains(t) && !stopwords.contains(t);
    let mut left: Vec<String> = tokens[..position.min(tokens.len())]
        .iter()
        .rev()
        .filter(|t| eligible(t))
        .take(opts.window)
        .cloned()
        .collect();
    left.reverse();
    if opts.include_target && table.contains(target) {
        left.push(target.to_string());
    }
    let right = tokens
        .iter()
        .skip(position + 1)
        .filter(|t| eligible(t))
        .take(opts.window)
        .cloned();
    left.extend(right);
    left
}

/// Every occurrence of `target` in a one-sentence-per-line corpus, in corpus
/// order, capped at `max_instances` when given.
pub fn extract_contexts(
    corpus_path: impl AsRef<Path>,
    target: &str,
    opts: &WindowOptions,
    table: &EmbeddingTable,
    stopwords: &StopwordSet,
    max_instances: Option<usize>,
) -> Result<Vec<ContextInstance>> {
    let path = corpus_path.as_ref();
    let target = normalize_token(target, opts.lowercase);
    if !table.contains(&target) {
        return Err(Error::NotInVocabulary(target));
    }
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let cap = max_instances.unwrap_or(usize::MAX);
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        if out.len() >= cap {
            break;
        }
        let line = line.map_err(|e| Error::io(path, e))?;
        out.extend(
            sentence_contexts(&line, i + 1, &target, opts, table, stopwords).take(cap - out.len()),
        );
    }
    Ok(out)
}

/// Contexts for every occurrence of `target` in a single sentence.
pub fn sentence_contexts<'a>(
    sentence: &'a str,
    line: usize,
    target: &'a str,
    opts: &'a WindowOptions,
    table: &'a EmbeddingTable,
    stopwords: &'a StopwordSet,
) -> impl Iterator<Item = ContextInstance> + 'a {
    let tokens: Vec<String> = sentence
        .split_whitespace()
        .map(|t| normalize_token(t, opts.lowercase))
        .collect();
    let positions: Vec<usize> = tokens
        .iter()
        .enumerate()
        .filter(|(_, t)| t.as_str() == target)
        .map(|(i, _)| i)
        .collect();
    positions.into_iter().map(move |pos| ContextInstance {
        instance_id: format!("{line}:{pos}"),
        target: target.to_string(),
        tokens: window_tokens(&tokens, pos, opts, table, stopwords),
        raw_position: pos,
        line,
    })
}

pub fn write_instances<W: Write>(mut out: W, instances: &[ContextInstance]) -> std::io::Result<()> {
    for c in instances {
        writeln!(
            out,
            "{}\t{}\t{}\t{}",
            c.instance_id,
            c.target,
            c.raw_position,
            c.tokens.join(" ")
        )?;
    }
    Ok(())
}

pub fn read_instances<R: BufRead>(reader: R, origin: &Path) -> Result<Vec<ContextInstance>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(origin, e))?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(Error::parse(
                origin,
                i + 1,
                format!("expected 4 tab-separated fields, got {}", fields.len()),
            ));
        }
        let raw_position = fields[2].parse().map_err(|_| {
            Error::parse(origin, i + 1, format!("invalid position {:?}", fields[2]))
        })?;
        out.push(ContextInstance {
            instance_id: fields[0].to_string(),
            target: fields[1].to_string(),
            tokens: fields[3].split_whitespace().map(str::to_string).collect(),
            raw_position,
            line: 0,
        });
    }
    Ok(out)
}

/// A point on the Grassmannian: an orthonormal basis plus the spectrum of the
/// data it was fitted to.
#[derive(Debug, Clone, PartialEq)]
pub struct Subspace {
    basis: Vec<Vec<f64>>,
    energy: Vec<f64>,
    total_energy: f64,
}

impl Subspace {
    /// Rank-`rank` principal subspace of the given rows (uncentered unless
    /// `centered`). Keeps fewer directions when the data are rank deficient.
    pub fn from_vectors(rows: &[&[f64]], rank: usize, centered: bool) -> Result<Self> {
        if rank == 0 {
            return Err(Error::invalid("rank must be at least 1"));
        }
        let Some(dim) = rows.first().map(|r| r.len()) else {
            return Err(Error::EmptyContext);
        };
        let centered_rows: Vec<Vec<f64>>;
        let rows: Vec<&[f64]> = if centered {
            let mut mean = vec![0.0; dim];
            for r in rows {
                mean.iter_mut()
                    .zip(r.iter())
                    .for_each(|(m, x)| *m += x / rows.len() as f64);
            }
            centered_rows = rows
                .iter()
                .map(|r| r.iter().zip(&mean).map(|(x, m)| x - m).collect())
                .collect();
            centered_rows.iter().map(Vec::as_slice).collect()
        } else {
            rows.to_vec()
        };
        let mut p = linalg::principal_directions(&rows, dim);
        if p.directions.is_empty() {
            return Err(Error::EmptyContext);
        }
        p.directions.truncate(rank);
        p.energy.truncate(rank);
        Ok(Subspace {
            basis: p.directions,
            energy: p.energy,
            total_energy: p.total_energy,
        })
    }

    /// Span of arbitrary vectors, orthonormalized. Each basis vector gets unit
    /// energy.
    pub fn from_spanning(vectors: &[Vec<f64>]) -> Result<Self> {
        let basis = linalg::orthonormalize(vectors);
        if basis.is_empty() {
            return Err(Error::EmptyContext);
        }
        let n = basis.len();
        Ok(Subspace {
            basis,
            energy: vec![1.0; n],
            total_energy: n as f64,
        })
    }

    pub fn dim(&self) -> usize {
        self.basis[0].len()
    }

    pub fn rank(&self) -> usize {
        self.basis.len()
    }

    pub fn basis(&self) -> &[Vec<f64>] {
        &self.basis
    }

    pub fn energy(&self) -> &[f64] {
        &self.energy
    }

    pub fn total_energy(&self) -> f64 {
        self.total_energy
    }

    /// Squared norm of the projection of `u` onto the span.
    pub fn projection_energy(&self, u: &[f64]) -> f64 {
        self.basis.iter().map(|b| dot(u, b).powi(2)).sum()
    }

    /// Projection distance for a vector already known to be unit length.
    pub fn distance_to_unit(&self, u: &[f64]) -> f64 {
        (1.0 - self.projection_energy(u)).max(0.0).sqrt()
    }

    /// Applies `f` to each basis vector; `f` must be an isometry for the
    /// result to remain orthonormal.
    pub fn map_basis(&self, f: impl Fn(&[f64]) -> Vec<f64>) -> Subspace {
        Subspace {
            basis: self.basis.iter().map(|b| f(b)).collect(),
            energy: self.energy.clone(),
            total_energy: self.total_energy,
        }
    }
}

fn token_rows<'a>(tokens: &[String], table: &'a EmbeddingTable) -> Vec<&'a [f64]> {
    tokens.iter().filter_map(|t| table.vector(t)).collect()
}

/// Rank-`rank` uncentered principal subspace of the context's word vectors.
/// Out-of-vocabulary tokens are ignored; duplicates count as separate rows.
pub fn context_subspace(
    tokens: &[String],
    table: &EmbeddingTable,
    rank: usize,
) -> Result<Subspace> {
    context_subspace_with(tokens, table, rank, false)
}

pub fn context_subspace_with(
    tokens: &[String],
    table: &EmbeddingTable,
    rank: usize,
    centered: bool,
) -> Result<Subspace> {
    let rows = token_rows(tokens, table);
    if rows.is_empty() {
        return Err(Error::EmptyContext);
    }
    Subspace::from_vectors(&rows, rank, centered)
}

/// d(u, S) = sqrt(1 - sum_n (u . b_n)^2) for unit `u`.
pub fn subspace_distance(u: &[f64], s: &Subspace) -> Result<f64> {
    if u.len() != s.dim() {
        return Err(Error::DimensionMismatch {
            expected: s.dim(),
            got: u.len(),
        });
    }
    let n = linalg::norm(u);
    if (n - 1.0).abs() > 1e-6 {
        return Err(Error::NotUnit(n));
    }
    Ok(s.distance_to_unit(u))
}

/// Share of squared Frobenius norm captured by the top `rank` directions.
pub fn variance_ratio(tokens: &[String], table: &EmbeddingTable, rank: usize) -> Result<f64> {
    variance_ratio_with(tokens, table, rank, false)
}

pub fn variance_ratio_with(
    tokens: &[String],
    table: &EmbeddingTable,
    rank: usize,
    centered: bool,
) -> Result<f64> {
    let s = context_subspace_with(tokens, table, rank, centered)?;
    Ok(ratio(&s))
}

pub(crate) fn ratio(s: &Subspace) -> f64 {
    let captured: f64 = s.energy.iter().sum();
    (captured / s.total_energy).min(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(i: usize, d: usize) -> Vec<f64> {
        let mut v = vec![0.0; d];
        v[i] = 1.0;
        v
    }

    fn toks(ws: &[&str]) -> Vec<String> {
        ws.iter().map(|s| s.to_string()).collect()
    }

    fn table() -> EmbeddingTable {
        EmbeddingTable::from_entries(
            3,
            [
                ("a", e(0, 3)),
                ("the", e(1, 3)),
                ("crane", e(2, 3)),
                ("lifted", vec![1.0, 1.0, 0.0]),
                ("beam", vec![0.0, 1.0, 1.0]),
                ("x", vec![2.0, 0.0, 0.0]),
                ("y", vec![1.0, 1.0, 0.0]),
            ],
        )
        .unwrap()
    }

    #[test]
    fn window_filters_stopwords_and_target() {
        let t = table();
        let stop: StopwordSet = ["a", "the"].into_iter().collect();
        let sent = toks(&["a", "crane", "lifted", "the", "beam"]);
        let got = window_tokens(&sent, 1, &WindowOptions::default(), &t, &stop);
        assert_eq!(got, ["lifted", "beam"]);
        let incl = WindowOptions {
            include_target: true,
            ..Default::default()
        };
        assert_eq!(
            window_tokens(&sent, 1, &incl, &t, &stop),
            ["crane", "lifted", "beam"]
        );
    }

    #[test]
    fn window_clips_to_size() {
        let t = table();
        let sent = toks(&["x", "y", "lifted", "crane", "beam", "x", "y"]);
        let opts = WindowOptions {
            window: 1,
            ..Default::default()
        };
        assert_eq!(
            window_tokens(&sent, 3, &opts, &t, &StopwordSet::empty()),
            ["lifted", "beam"]
        );
    }

    #[test]
    fn extraction_per_occurrence() {
        let t = table();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.txt");
        std::fs::write(
            &p,
            "a crane lifted the beam\nnothing here\ncrane x crane y\n",
        )
        .unwrap();
        let stop: StopwordSet = ["a", "the"].into_iter().collect();
        let got =
            extract_contexts(&p, "crane", &WindowOptions::default(), &t, &stop, None).unwrap();
        assert_eq!(got.len(), 3);
        assert_eq!(got[0].tokens, ["lifted", "beam"]);
        assert_eq!((got[1].raw_position, got[2].raw_position), (0, 2));
        assert_ne!(got[1].instance_id, got[2].instance_id);
        assert_eq!(
            extract_contexts(&p, "crane", &WindowOptions::default(), &t, &stop, Some(2))
                .unwrap()
                .len(),
            2
        );
        let beam =
            extract_contexts(&p, "beam", &WindowOptions::default(), &t, &stop, None).unwrap();
        assert_eq!(beam[0].tokens, ["crane", "lifted"]);
        assert!(matches!(
            extract_contexts(&p, "zebra", &WindowOptions::default(), &t, &stop, None),
            Err(Error::NotInVocabulary(_))
        ));
    }

    #[test]
    fn instance_lines_round_trip() {
        let inst = vec![ContextInstance {
            instance_id: "3:1".into(),
            target: "crane".into(),
            tokens: toks(&["lifted", "beam"]),
            raw_position: 1,
            line: 0,
        }];
        let mut buf = Vec::new();
        write_instances(&mut buf, &inst).unwrap();
        assert_eq!(
            String::from_utf8(buf.clone()).unwrap(),
            "3:1\tcrane\t1\tlifted beam\n"
        );
        assert_eq!(
            read_instances(buf.as_slice(), Path::new("m")).unwrap(),
            inst
        );
    }

    #[test]
    fn rank_one_context() {
        let t = EmbeddingTable::from_entries(3, [("p", e(0, 3))]).unwrap();
        let s = context_subspace(&toks(&["p", "p", "p"]), &t, 3).unwrap();
        assert_eq!(s.rank(), 1);
        assert!((s.energy()[0] - 3.0).abs() < 1e-12);
        assert!((s.total_energy() - 3.0).abs() < 1e-12);
        assert!((s.basis()[0][0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_inputs_give_unit_energies() {
        let t = EmbeddingTable::from_entries(3, [("p", e(0, 3)), ("q", e(1, 3))]).unwrap();
        let s = context_subspace(&toks(&["p", "q"]), &t, 2).unwrap();
        assert_eq!(s.energy().len(), 2);
        assert!(s.energy().iter().all(|x| (x - 1.0).abs() < 1e-12));
        assert!(s.distance_to_unit(&e(0, 3)) < 1e-7);
        assert!(s.distance_to_unit(&e(1, 3)) < 1e-7);
    }

    #[test]
    fn top_direction_matches_gram_eigenvector() {
        // rows (2,0,0), (1,1,0): X^T X restricted to coords 1-2 is [[5,1],[1,1]]
        let t = table();
        let s = context_subspace(&toks(&["x", "y"]), &t, 1).unwrap();
        // oracle: eigen-decomposition of [[5,1],[1,1]] by hand
        let lam = 3.0 + 5f64.sqrt();
        let v = linalg::normalized(&[1.0, lam - 5.0]).unwrap();
        let b = &s.basis()[0];
        assert!((dot(&b[..2], &v).abs() - 1.0).abs() < 1e-9);
        assert!(b[2].abs() < 1e-12);
        assert!((ratio(&s) - lam / 6.0).abs() < 1e-9);
    }

    #[test]
    fn distance_examples() {
        let s = Subspace::from_spanning(&[e(0, 3), e(1, 3)]).unwrap();
        assert!(subspace_distance(&e(0, 3), &s).unwrap().abs() < 1e-12);
        assert!((subspace_distance(&e(2, 3), &s).unwrap() - 1.0).abs() < 1e-12);
        let s1 = Subspace::from_spanning(&[e(0, 3)]).unwrap();
        assert!((subspace_distance(&[0.6, 0.8, 0.0], &s1).unwrap() - 0.8).abs() < 1e-12);
        assert!(matches!(
            subspace_distance(&[1.0, 1.0, 0.0], &s1),
            Err(Error::NotUnit(_))
        ));
    }

    #[test]
    fn variance_ratio_examples() {
        // singular values (2,1,1): rows 2e1, e2, e3
        let t = EmbeddingTable::from_entries(
            3,
            [("a", vec![2.0, 0.0, 0.0]), ("b", e(1, 3)), ("c", e(2, 3))],
        )
        .unwrap();
        let ws = toks(&["a", "b", "c"]);
        assert!((variance_ratio(&ws, &t, 1).unwrap() - 4.0 / 6.0).abs() < 1e-9);
        assert!((variance_ratio(&ws, &t, 3).unwrap() - 1.0).abs() < 1e-12);
        assert!((variance_ratio(&ws, &t, 5).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(
            variance_ratio(&toks(&["zz"]), &t, 1),
            Err(Error::EmptyContext)
        ));
    }

    #[test]
    fn isotropic_rank_four_ratio() {
        let mut rng = linalg::rng_for(&[11]);
        let mut mean = 0.0;
        for _ in 0..100 {
            let rows: Vec<Vec<f64>> = (0..21)
                .map(|_| linalg::random_unit(&mut rng, 300))
                .collect();
            let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
            mean += ratio(&Subspace::from_vectors(&refs, 4, false).unwrap()) / 100.0;
        }
        // independent Monte-Carlo estimate (numpy SVD, 1000 trials): 0.2643, sd 0.0047
        assert!((mean - 0.2643).abs() < 0.005, "{mean}");
    }

    #[test]
    fn spans_of_tokens() {
        assert_eq!(token_spans("  ab c\td "), vec![(2, 4), (5, 6), (7, 8)]);
        assert!(token_spans("").is_empty());
    }
}
