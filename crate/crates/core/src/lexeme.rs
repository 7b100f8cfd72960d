//! Consumers of lexeme vectors: contextual similarity, SCWS evaluation and
//! the police-lineup sense identification task.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::seq::index;

use crate::context::{self, normalize_token};
use crate::disambig::{self, SoftAssignment};
use crate::embeddings::{cosine, EmbeddingTable, LoadOptions, StopwordSet};
use crate::error::{Error, Result};
use crate::grassmeans::SenseModel;
use crate::linalg::{self, dot};
use crate::metrics;

/// Vectors for (word, sense) pairs; senses are 0-based.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LexemeTable {
    dim: usize,
    entries: HashMap<(String, usize), Vec<f64>>,
    /// Erasure-labelled rows that were skipped on load.
    pub skipped_idk: usize,
}

impl LexemeTable {
    pub fn new(dim: usize) -> Self {
        LexemeTable {
            dim,
            ..Default::default()
        }
    }

    pub fn insert(&mut self, word: &str, sense: usize, v: Vec<f64>) -> Result<()> {
        if v.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: v.len(),
            });
        }
        if linalg::norm(&v) == 0.0 {
            return Err(Error::ZeroVector);
        }
        self.entries.insert((word.to_string(), sense), v);
        Ok(())
    }

    pub fn get(&self, word: &str, sense: usize) -> Option<&[f64]> {
        self.entries
            .get(&(word.to_string(), sense))
            .map(Vec::as_slice)
    }

    /// All senses of `word` with a vector, by sense index.
    pub fn senses_of(&self, word: &str) -> Vec<(usize, &[f64])> {
        let mut v: Vec<(usize, &[f64])> = self
            .entries
            .iter()
            .filter(|((w, _), _)| w == word)
            .map(|((_, k), v)| (*k, v.as_slice()))
            .collect();
        v.sort_by_key(|(k, _)| *k);
        v
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

/// Parses `word<sep>k` (1-based `k`). `Ok(None)` for an erasure label.
fn parse_label<'a>(
    token: &'a str,
    separator: &str,
) -> std::result::Result<Option<(&'a str, usize)>, String> {
    let Some((word, suffix)) = token.rsplit_once(separator) else {
        return Err(format!("{token:?} has no sense label"));
    };
    if suffix.eq_ignore_ascii_case("idk") {
        return Ok(None);
    }
    match suffix.parse::<usize>() {
        Ok(k) if k >= 1 && !word.is_empty() => Ok(Some((word, k - 1))),
        _ => Err(format!("malformed sense label {suffix:?} in {token:?}")),
    }
}

/// Loads lexeme vectors from a word2vec text file trained on a labeled
/// corpus. Plain words are ignored; erasure rows are counted and skipped.
pub fn load_lexemes(
    path: impl AsRef<Path>,
    base: &EmbeddingTable,
    separator: &str,
    lowercase: bool,
) -> Result<LexemeTable> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    // read raw so labels keep their case for parsing
    let raw = EmbeddingTable::read(BufReader::new(file), path, LoadOptions { lowercase: false })?;
    if raw.dim() != base.dim() {
        return Err(Error::invalid(format!(
            "{}: lexeme dimension {} does not match embedding dimension {}",
            path.display(),
            raw.dim(),
            base.dim()
        )));
    }
    let mut table = LexemeTable::new(raw.dim());
    for (i, token) in raw.words().iter().enumerate() {
        if !token.contains(separator) {
            continue;
        }
        match parse_label(token, separator) {
            Ok(Some((word, k))) => {
                let word = normalize_token(word, lowercase);
                if !table.entries.contains_key(&(word.clone(), k)) {
                    table.insert(&word, k, raw.vector_at(i).to_vec())?;
                }
            }
            Ok(None) => table.skipped_idk += 1,
            Err(msg) => return Err(Error::parse(path, i + 2, msg)),
        }
    }
    Ok(table)
}

/// A word in a sentence, as fed to the similarity measures.
#[derive(Debug, Clone, PartialEq)]
pub struct WordInContext {
    pub word: String,
    /// Normalized sentence tokens.
    pub sentence: Vec<String>,
    pub position: usize,
}

/// Shared inputs for HardSim/SoftSim.
pub struct SimilarityModel<'a> {
    pub table: &'a EmbeddingTable,
    pub stopwords: &'a StopwordSet,
    pub models: &'a BTreeMap<String, SenseModel>,
    pub lexemes: &'a LexemeTable,
    pub lowercase: bool,
}

impl SimilarityModel<'_> {
    fn model(&self, word: &str) -> Result<&SenseModel> {
        self.models
            .get(word)
            .ok_or_else(|| Error::MissingModel(word.to_string()))
    }

    fn subspace(&self, model: &SenseModel, c: &WordInContext) -> Result<context::Subspace> {
        disambig::context_for(
            model,
            &c.sentence,
            c.position,
            self.lowercase,
            self.table,
            self.stopwords,
        )
        .ok_or(Error::EmptyContext)
    }

    fn lexeme(&self, word: &str, sense: usize) -> Result<&[f64]> {
        self.lexemes
            .get(word, sense)
            .ok_or_else(|| Error::MissingLexeme {
                word: word.to_string(),
                sense: sense + 1,
            })
    }

    /// Hard-decoded sense of the word in its context.
    pub fn decode(&self, c: &WordInContext) -> Result<usize> {
        let m = self.model(&c.word)?;
        Ok(disambig::hard_decode(m, &self.subspace(m, c)?)?.0)
    }

    pub fn distribution(&self, c: &WordInContext, beta: f64) -> Result<SoftAssignment> {
        let m = self.model(&c.word)?;
        disambig::soft_decode(m, &self.subspace(m, c)?, beta)
    }

    /// Cosine of the lexeme vectors of the two hard-decoded senses.
    pub fn hard_sim(&self, a: &WordInContext, b: &WordInContext) -> Result<f64> {
        let (ka, kb) = (self.decode(a)?, self.decode(b)?);
        cosine(self.lexeme(&a.word, ka)?, self.lexeme(&b.word, kb)?)
    }

    /// Probability-weighted mean of lexeme cosines over all sense pairs.
    pub fn soft_sim(&self, a: &WordInContext, b: &WordInContext, beta: f64) -> Result<f64> {
        let pa = self.distribution(a, beta)?;
        let pb = self.distribution(b, beta)?;
        self.soft_sim_from(&a.word, &pa, &b.word, &pb)
    }

    pub fn soft_sim_from(
        &self,
        wa: &str,
        pa: &SoftAssignment,
        wb: &str,
        pb: &SoftAssignment,
    ) -> Result<f64> {
        let mut total = 0.0;
        for (ka, &p) in pa.probs.iter().enumerate() {
            let va = self.lexeme(wa, ka)?;
            for (kb, &q) in pb.probs.iter().enumerate() {
                total += p * q * cosine(va, self.lexeme(wb, kb)?)?;
            }
        }
        Ok(total)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimMode {
    Hard,
    Soft,
    Global,
}

impl std::str::FromStr for SimMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hard" => Ok(SimMode::Hard),
            "soft" => Ok(SimMode::Soft),
            "global" => Ok(SimMode::Global),
            other => Err(Error::invalid(format!(
                "unknown mode {other:?} (hard|soft|global)"
            ))),
        }
    }
}

/// One SCWS pair. Contexts keep their `<b>..</b>` markup.
#[derive(Debug, Clone, PartialEq)]
pub struct ScwsRow {
    pub id: String,
    pub word1: String,
    pub word2: String,
    pub context1: String,
    pub context2: String,
    pub rating: f64,
}

/// Reads SCWS rows. Accepts the compact layout
/// `id, word1, word2, context1, context2, rating` and the published layout
/// `id, word1, pos1, word2, pos2, context1, context2, avg, ratings...`.
pub fn read_scws<R: BufRead>(reader: R, origin: &Path) -> Result<Vec<ScwsRow>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(origin, e))?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        let (id, w1, w2, c1, c2, r) = match f.len() {
            6 => (f[0], f[1], f[2], f[3], f[4], f[5]),
            n if n >= 8 => (f[0], f[1], f[3], f[5], f[6], f[7]),
            n => {
                return Err(Error::parse(
                    origin,
                    i + 1,
                    format!("expected 6 or at least 8 fields, got {n}"),
                ))
            }
        };
        let rating = r
            .trim()
            .parse()
            .map_err(|_| Error::parse(origin, i + 1, format!("invalid rating {r:?}")))?;
        out.push(ScwsRow {
            id: id.to_string(),
            word1: w1.to_string(),
            word2: w2.to_string(),
            context1: c1.to_string(),
            context2: c2.to_string(),
            rating,
        });
    }
    Ok(out)
}

/// Splits a `<b>`-marked context into normalized tokens and the target
/// position. `None` when the markup is missing.
pub fn parse_marked_context(text: &str, lowercase: bool) -> Option<(String, Vec<String>, usize)> {
    let open = text.find("<b>")?;
    let close = open + text[open..].find("</b>")?;
    let target = text[open + 3..close].trim();
    if target.is_empty() || target.contains(char::is_whitespace) {
        return None;
    }
    let norm = |s: &str| {
        s.split_whitespace()
            .map(|t| normalize_token(t, lowercase))
            .collect::<Vec<_>>()
    };
    let mut tokens = norm(&text[..open]);
    let position = tokens.len();
    tokens.push(normalize_token(target, lowercase));
    tokens.extend(norm(&text[close + 4..]));
    Some((tokens[position].clone(), tokens, position))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScwsReport {
    pub spearman: f64,
    pub evaluated: usize,
    pub skipped_unmarked: usize,
    pub skipped_oov: usize,
    /// Rows where a side had no model, no lexeme or an empty context and the
    /// global word vector was used instead.
    pub fallbacks: usize,
    /// Model similarity per evaluated row, in input order.
    pub scores: Vec<(String, f64)>,
}

#[derive(Debug, Clone, Copy)]
pub struct ScwsOptions {
    pub mode: SimMode,
    pub beta: f64,
    pub lite_only: bool,
}

/// Spearman correlation between model similarities and human ratings.
pub fn scws_eval(
    rows: &[ScwsRow],
    sim: &SimilarityModel<'_>,
    opts: &ScwsOptions,
) -> Result<ScwsReport> {
    let mut report = ScwsReport {
        spearman: f64::NAN,
        evaluated: 0,
        skipped_unmarked: 0,
        skipped_oov: 0,
        fallbacks: 0,
        scores: Vec::new(),
    };
    let mut model_scores = Vec::new();
    let mut human = Vec::new();
    for row in rows {
        let (Some((t1, s1, p1)), Some((t2, s2, p2))) = (
            parse_marked_context(&row.context1, sim.lowercase),
            parse_marked_context(&row.context2, sim.lowercase),
        ) else {
            report.skipped_unmarked += 1;
            continue;
        };
        if opts.lite_only && (t1 != t2 || row.context1 == row.context2) {
            continue;
        }
        let (Some(g1), Some(g2)) = (sim.table.vector(&t1), sim.table.vector(&t2)) else {
            report.skipped_oov += 1;
            continue;
        };
        let global = cosine(g1, g2)?;
        let a = WordInContext {
            word: t1,
            sentence: s1,
            position: p1,
        };
        let b = WordInContext {
            word: t2,
            sentence: s2,
            position: p2,
        };
        let score = match opts.mode {
            SimMode::Global => global,
            SimMode::Hard => sim.hard_sim(&a, &b).unwrap_or_else(|_| {
                report.fallbacks += 1;
                global
            }),
            SimMode::Soft => sim.soft_sim(&a, &b, opts.beta).unwrap_or_else(|_| {
                report.fallbacks += 1;
                global
            }),
        };
        model_scores.push(score);
        human.push(row.rating);
        report.scores.push((row.id.clone(), score));
    }
    report.evaluated = model_scores.len();
    report.spearman = metrics::spearman(&model_scores, &human)?;
    Ok(report)
}

/// One candidate sense in a lineup.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineupSense {
    pub sense_id: String,
    pub defining_words: Vec<String>,
    pub is_true_sense: bool,
}

/// Reads "target\tsense_id\tis_true\tdefining words" rows, grouped by target
/// in first-appearance order.
pub fn read_lineup<R: BufRead>(
    reader: R,
    origin: &Path,
    lowercase: bool,
) -> Result<Vec<(String, Vec<LineupSense>)>> {
    let mut groups: Vec<(String, Vec<LineupSense>)> = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(origin, e))?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 4 {
            return Err(Error::parse(
                origin,
                i + 1,
                format!("expected 4 tab-separated fields, got {}", f.len()),
            ));
        }
        let is_true = match f[2].trim() {
            "1" => true,
            "0" => false,
            other => {
                return Err(Error::parse(
                    origin,
                    i + 1,
                    format!("is_true must be 0 or 1, got {other:?}"),
                ))
            }
        };
        let words: Vec<String> = f[3]
            .split_whitespace()
            .map(|w| normalize_token(w, lowercase))
            .collect();
        if words.is_empty() {
            return Err(Error::parse(origin, i + 1, "sense has no defining words"));
        }
        let target = normalize_token(f[0].trim(), lowercase);
        let sense = LineupSense {
            sense_id: f[1].to_string(),
            defining_words: words,
            is_true_sense: is_true,
        };
        match groups.iter_mut().find(|(t, _)| *t == target) {
            Some((_, senses)) => senses.push(sense),
            None => groups.push((target, vec![sense])),
        }
    }
    Ok(groups)
}

/// `(sum |v . x_i|^p)^(1/p)`; `p = inf` gives the max.
pub fn power_score(v: &[f64], defining: &[&[f64]], p: f64) -> f64 {
    let terms = defining.iter().map(|x| dot(v, x).abs());
    if p.is_infinite() {
        terms.fold(0.0, f64::max)
    } else {
        terms.map(|t| t.powf(p)).sum::<f64>().powf(1.0 / p)
    }
}

/// Background words for the mean-correction term.
#[derive(Debug, Clone, PartialEq)]
pub struct Background {
    indices: Vec<usize>,
}

impl Background {
    /// Up to `size` vocabulary words sampled without replacement (the whole
    /// vocabulary when it is smaller).
    pub fn sample(table: &EmbeddingTable, size: usize, seed: u64) -> Self {
        let n = table.len();
        let indices = if size >= n {
            (0..n).collect()
        } else {
            let mut rng = linalg::rng_for(&[seed, 0x6267]);
            let mut v = index::sample(&mut rng, n, size).into_vec();
            v.sort_unstable();
            v
        };
        Background { indices }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Mean score of the background words against `defining`.
    pub fn correction(&self, table: &EmbeddingTable, defining: &[&[f64]], p: f64) -> f64 {
        if self.indices.is_empty() {
            return 0.0;
        }
        self.indices
            .iter()
            .map(|&i| power_score(table.vector_at(i), defining, p))
            .sum::<f64>()
            / self.indices.len() as f64
    }
}

fn defining_vectors<'t>(sense: &LineupSense, table: &'t EmbeddingTable) -> Result<Vec<&'t [f64]>> {
    let v: Vec<&[f64]> = sense
        .defining_words
        .iter()
        .filter_map(|w| table.vector(w))
        .collect();
    if v.is_empty() {
        return Err(Error::invalid(format!(
            "sense {:?} has no defining word in the vocabulary",
            sense.sense_id
        )));
    }
    Ok(v)
}

#[derive(Debug, Clone, Copy)]
pub struct LineupScoring<'a> {
    pub table: &'a EmbeddingTable,
    pub background: Option<&'a Background>,
    pub p: f64,
}

impl LineupScoring<'_> {
    fn word_term(&self, w: &str, defining: &[&[f64]]) -> Result<f64> {
        let v = self
            .table
            .vector(w)
            .ok_or_else(|| Error::NotInVocabulary(w.to_string()))?;
        let correction = self
            .background
            .map_or(0.0, |b| b.correction(self.table, defining, self.p));
        Ok(power_score(v, defining, self.p) - correction)
    }

    /// Word-vector score of a sense, mean-corrected against the background.
    pub fn baseline(&self, w: &str, sense: &LineupSense) -> Result<f64> {
        let defining = defining_vectors(sense, self.table)?;
        self.word_term(w, &defining)
    }

    /// Lexeme term plus the corrected word term. The correction only applies
    /// to the word term.
    pub fn lexeme(&self, lexeme: &[f64], w: &str, sense: &LineupSense) -> Result<f64> {
        let defining = defining_vectors(sense, self.table)?;
        Ok(power_score(lexeme, &defining, self.p) + self.word_term(w, &defining)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LineupMode {
    Baseline,
    Lexeme,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineupOutcome {
    /// Indices into the lineup, best first.
    pub selected: Vec<usize>,
    pub precision: f64,
    pub recall: f64,
}

fn rank_desc(scored: &mut [(usize, f64)]) {
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
}

/// Selects `k` senses of `w` from the lineup.
///
/// Lexeme mode pools the two best senses per lexeme of `w`; with
/// `collapse_duplicates` a sense proposed by several lexemes keeps its best
/// score. When the pool holds fewer than `k` senses the rest are filled from
/// the remaining senses by their best lexeme score.
pub fn lineup_task(
    w: &str,
    senses: &[LineupSense],
    k: usize,
    mode: LineupMode,
    scoring: &LineupScoring<'_>,
    lexemes: Option<&LexemeTable>,
    collapse_duplicates: bool,
) -> Result<LineupOutcome> {
    if k == 0 || k > senses.len() {
        return Err(Error::invalid(format!(
            "need 1 <= k <= {} senses, got k = {k}",
            senses.len()
        )));
    }
    let n_true = senses.iter().filter(|s| s.is_true_sense).count();
    if n_true == 0 {
        return Err(Error::invalid(format!(
            "lineup for {w:?} has no true sense; recall is undefined"
        )));
    }
    let selected: Vec<usize> = match mode {
        LineupMode::Baseline => {
            let mut scored = senses
                .iter()
                .enumerate()
                .map(|(i, s)| Ok((i, scoring.baseline(w, s)?)))
                .collect::<Result<Vec<_>>>()?;
            rank_desc(&mut scored);
            scored.into_iter().take(k).map(|(i, _)| i).collect()
        }
        LineupMode::Lexeme => {
            let lexemes =
                lexemes.ok_or_else(|| Error::invalid("lexeme mode needs a lexeme table"))?;
            let own = lexemes.senses_of(w);
            if own.is_empty() {
                return Err(Error::MissingLexeme {
                    word: w.to_string(),
                    sense: 1,
                });
            }
            let mut pool: Vec<(usize, f64)> = Vec::new();
            let mut best_any = vec![f64::NEG_INFINITY; senses.len()];
            for (_, v) in &own {
                let mut scored = senses
                    .iter()
                    .enumerate()
                    .map(|(i, s)| Ok((i, scoring.lexeme(v, w, s)?)))
                    .collect::<Result<Vec<_>>>()?;
                for &(i, s) in &scored {
                    best_any[i] = best_any[i].max(s);
                }
                rank_desc(&mut scored);
                pool.extend(scored.into_iter().take(2));
            }
            if collapse_duplicates {
                let mut best: BTreeMap<usize, f64> = BTreeMap::new();
                for (i, s) in pool {
                    let e = best.entry(i).or_insert(f64::NEG_INFINITY);
                    *e = e.max(s);
                }
                pool = best.into_iter().collect();
            }
            rank_desc(&mut pool);
            let mut chosen: Vec<usize> = pool.into_iter().map(|(i, _)| i).take(k).collect();
            if chosen.len() < k {
                let mut rest: Vec<(usize, f64)> = (0..senses.len())
                    .filter(|i| !chosen.contains(i))
                    .map(|i| (i, best_any[i]))
                    .collect();
                rank_desc(&mut rest);
                chosen.extend(rest.into_iter().map(|(i, _)| i).take(k - chosen.len()));
            }
            chosen
        }
    };
    let mut hit_ids: Vec<usize> = selected
        .iter()
        .copied()
        .filter(|&i| senses[i].is_true_sense)
        .collect();
    hit_ids.sort_unstable();
    hit_ids.dedup();
    let hits = hit_ids.len() as f64;
    Ok(LineupOutcome {
        selected,
        precision: hits / k as f64,
        recall: hits / n_true as f64,
    })
}
