//! Synthetic data with known structure: planted-direction subspaces, isotropic
//! vectors and a small self-consistent fixture set (embeddings, corpus and
//! evaluation files) for offline end-to-end runs.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::context::Subspace;
use crate::embeddings::EmbeddingTable;
use crate::error::{Error, Result};
use crate::linalg::{self, random_unit};

/// `count` orthonormal directions in `dim` dimensions.
pub fn orthonormal_directions<R: Rng + ?Sized>(
    rng: &mut R,
    dim: usize,
    count: usize,
) -> Vec<Vec<f64>> {
    assert!(
        count <= dim,
        "cannot fit {count} orthonormal directions in {dim} dimensions"
    );
    loop {
        let raw: Vec<Vec<f64>> = (0..count).map(|_| random_unit(rng, dim)).collect();
        let q = linalg::orthonormalize(&raw);
        if q.len() == count {
            return q;
        }
    }
}

/// For every planted direction, `per_direction` rank-`rank` subspaces spanned
/// by the direction and `rank - 1` random vectors. Labels give the index of
/// the planted direction; subspaces are interleaved across labels.
pub fn planted_subspaces<R: Rng + ?Sized>(
    rng: &mut R,
    planted: &[Vec<f64>],
    rank: usize,
    per_direction: usize,
) -> (Vec<Subspace>, Vec<usize>) {
    let dim = planted[0].len();
    let mut subspaces = Vec::with_capacity(planted.len() * per_direction);
    let mut labels = Vec::with_capacity(subspaces.capacity());
    for i in 0..per_direction * planted.len() {
        let label = i % planted.len();
        let mut span = vec![planted[label].clone()];
        span.extend((1..rank).map(|_| random_unit(rng, dim)));
        subspaces.push(Subspace::from_spanning(&span).expect("random span is nondegenerate"));
        labels.push(label);
    }
    (subspaces, labels)
}

/// Rows of i.i.d. standard normal entries.
pub fn isotropic_rows<R: Rng + ?Sized>(rng: &mut R, n: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            (0..dim)
                .map(|_| rng.sample(rand_distr::StandardNormal))
                .collect()
        })
        .collect()
}

pub const FIXTURE_DIM: usize = 20;
pub const FIXTURE_SEED: u64 = 20160915;

const STOPWORDS: [&str; 8] = ["the", "a", "of", "and", "in", "was", "is", "to"];
const MONOSEMOUS: [&str; 8] = [
    "wolf", "piano", "glacier", "violin", "copper", "tulip", "saturn", "lagoon",
];
const TOPIC_WORDS: usize = 12;
const FILLER_WORDS: usize = 60;

/// Topics: 0 bird, 1 machine, 2 storm, 3 money, 4 river, 5.. one per monosemous word.
fn topic_name(t: usize) -> String {
    match t {
        0 => "bird".into(),
        1 => "machine".into(),
        2 => "storm".into(),
        3 => "money".into(),
        4 => "river".into(),
        t => format!("{}ctx", MONOSEMOUS[t - 5]),
    }
}

const TOPICS: usize = 5 + MONOSEMOUS.len();

/// Planted fixture: polysemous "crane" (bird/machine) and "bank"
/// (money/river), monosemous "typhoon" (storm) and eight further monosemous
/// words, each with its own topic direction. Context words sit near their
/// topic direction, so contexts of one sense intersect along it.
pub struct Fixture {
    pub table: EmbeddingTable,
    pub directions: Vec<Vec<f64>>,
    rng: rand_chacha::ChaCha8Rng,
}

impl Fixture {
    pub fn new(seed: u64) -> Self {
        let mut rng = linalg::rng_for(&[seed, 0x6669_7874]);
        let dirs = orthonormal_directions(&mut rng, FIXTURE_DIM, TOPICS);
        let mut entries: Vec<(String, Vec<f64>)> = Vec::new();
        let round = |v: Vec<f64>| {
            v.into_iter()
                .map(|x| (x * 1e6).round() / 1e6)
                .collect::<Vec<f64>>()
        };
        for (t, d) in dirs.iter().enumerate() {
            for j in 0..TOPIC_WORDS {
                let g = random_unit(&mut rng, FIXTURE_DIM);
                let v: Vec<f64> = d.iter().zip(&g).map(|(a, b)| 0.8 * a + 0.6 * b).collect();
                entries.push((format!("{}_{j}", topic_name(t)), round(v)));
            }
        }
        for j in 0..FILLER_WORDS {
            entries.push((
                format!("misc_{j}"),
                round(random_unit(&mut rng, FIXTURE_DIM)),
            ));
        }
        for s in STOPWORDS {
            entries.push((s.to_string(), round(random_unit(&mut rng, FIXTURE_DIM))));
        }
        let mix = |a: &[f64], b: &[f64]| {
            linalg::normalized(&a.iter().zip(b).map(|(x, y)| x + y).collect::<Vec<_>>()).unwrap()
        };
        entries.push(("crane".into(), round(mix(&dirs[0], &dirs[1]))));
        entries.push(("bank".into(), round(mix(&dirs[3], &dirs[4]))));
        entries.push(("typhoon".into(), round(dirs[2].clone())));
        for (i, w) in MONOSEMOUS.iter().enumerate() {
            entries.push((w.to_string(), round(dirs[5 + i].clone())));
        }
        let table = EmbeddingTable::from_entries(FIXTURE_DIM, entries)
            .expect("fixture vocabulary is valid");
        Fixture {
            table,
            directions: dirs,
            rng,
        }
    }

    fn topic_word(&mut self, t: usize) -> String {
        format!(
            "{}_{}",
            topic_name(t),
            self.rng.random_range(0..TOPIC_WORDS)
        )
    }

    /// A sentence about topic `t` with `target` inserted; returns the text
    /// and the target's token position.
    pub fn sentence(&mut self, t: usize, target: Option<&str>) -> (String, usize) {
        let mut words: Vec<String> = Vec::new();
        let content = self.rng.random_range(7..=10);
        for _ in 0..content {
            words.push(self.topic_word(t));
            if self.rng.random_bool(0.4) {
                words.push(STOPWORDS[self.rng.random_range(0..STOPWORDS.len())].to_string());
            }
        }
        if self.rng.random_bool(0.5) {
            words.push(format!("misc_{}", self.rng.random_range(0..FILLER_WORDS)));
        }
        words.shuffle(&mut self.rng);
        let pos = self.rng.random_range(0..=words.len());
        if let Some(t) = target {
            words.insert(pos, t.to_string());
        }
        (words.join(" "), pos)
    }

    fn filler_sentence(&mut self) -> String {
        let n = self.rng.random_range(8..=14);
        (0..n)
            .map(|_| {
                if self.rng.random_bool(0.3) {
                    STOPWORDS[self.rng.random_range(0..STOPWORDS.len())].to_string()
                } else {
                    format!("misc_{}", self.rng.random_range(0..FILLER_WORDS))
                }
            })
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Training corpus lines, shuffled.
    pub fn corpus(&mut self) -> Vec<String> {
        let mut lines = Vec::new();
        for (word, topic, n) in [
            ("crane", 0, 60),
            ("crane", 1, 60),
            ("bank", 3, 40),
            ("bank", 4, 40),
            ("typhoon", 2, 60),
        ] {
            for _ in 0..n {
                lines.push(self.sentence(topic, Some(word)).0);
            }
        }
        for (i, w) in MONOSEMOUS.iter().enumerate() {
            for _ in 0..30 {
                lines.push(self.sentence(5 + i, Some(w)).0);
            }
        }
        for _ in 0..300 {
            lines.push(self.filler_sentence());
        }
        lines.shuffle(&mut self.rng);
        lines
    }

    /// Write every fixture file into `dir`.
    pub fn write_all(mut self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let put = |name: &str, text: String| {
            let p = dir.join(name);
            std::fs::write(&p, text).map_err(|e| Error::io(&p, e))
        };

        let mut emb = Vec::new();
        self.table
            .write(&mut emb)
            .map_err(|e| Error::io(dir.join("embeddings.txt"), e))?;
        put("embeddings.txt", String::from_utf8(emb).expect("utf8"))?;
        put("stopwords.txt", STOPWORDS.join("\n") + "\n")?;
        put("monosemous.txt", MONOSEMOUS.join("\n") + "\n")?;

        let corpus = self.corpus();
        let mut counts: std::collections::BTreeMap<&str, u64> = Default::default();
        for l in &corpus {
            for w in l.split_whitespace() {
                *counts.entry(w).or_default() += 1;
            }
        }
        let mut freq = String::new();
        for w in self.table.words() {
            writeln!(freq, "{w} {}", counts.get(w.as_str()).copied().unwrap_or(0)).unwrap();
        }
        put("frequencies.txt", freq)?;
        put("corpus.txt", corpus.join("\n") + "\n")?;

        let mut gold = String::new();
        let mut id = 0;
        for (word, senses) in [
            ("crane", [(0, "crane.bird"), (1, "crane.machine")]),
            ("bank", [(3, "bank.money"), (4, "bank.river")]),
        ] {
            for _ in 0..20 {
                for (topic, label) in senses {
                    id += 1;
                    let (s, pos) = self.sentence(topic, Some(word));
                    writeln!(gold, "{word}.{id}\t{word}\t{label}\t{pos}\t{s}").unwrap();
                }
            }
        }
        put("wsi_gold.tsv", gold)?;

        put("lexemes.txt", self.lexemes())?;
        put("scws.tsv", self.scws())?;
        put("lineup.tsv", self.lineup())?;
        Ok(())
    }

    /// Lexeme vectors as an external trainer would emit them after labeling:
    /// each sense lexeme lies near its topic direction.
    fn lexemes(&mut self) -> String {
        let mut rows: Vec<(String, Vec<f64>)> = Vec::new();
        for (word, topics) in [("crane", [0, 1]), ("bank", [3, 4])] {
            for (k, t) in topics.iter().enumerate() {
                let g = random_unit(&mut self.rng, FIXTURE_DIM);
                let v = self.directions[*t]
                    .iter()
                    .zip(&g)
                    .map(|(a, b)| 0.9 * a + 0.3 * b)
                    .collect();
                rows.push((format!("{word}#{}", k + 1), v));
            }
            rows.push((
                format!("{word}#IDK"),
                self.table.vector(word).unwrap().to_vec(),
            ));
        }
        rows.push((
            "typhoon".into(),
            self.table.vector("typhoon").unwrap().to_vec(),
        ));
        let mut out = format!("{} {}\n", rows.len(), FIXTURE_DIM);
        for (w, v) in rows {
            out.push_str(&w);
            for x in v {
                write!(out, " {}", (x * 1e6).round() / 1e6).unwrap();
            }
            out.push('\n');
        }
        out
    }

    fn marked(&mut self, topic: usize, word: &str) -> String {
        let (s, pos) = self.sentence(topic, Some(word));
        let mut toks: Vec<String> = s.split_whitespace().map(str::to_string).collect();
        toks[pos] = format!("<b>{}</b>", toks[pos]);
        toks.join(" ")
    }

    /// Compact SCWS layout; ratings follow sense agreement with small jitter.
    fn scws(&mut self) -> String {
        let mut out = String::new();
        let mut id = 0;
        let pairs: [(&str, usize, &str, usize, f64); 8] = [
            ("crane", 0, "crane", 0, 8.5),
            ("crane", 1, "crane", 1, 8.0),
            ("crane", 0, "crane", 1, 2.0),
            ("bank", 3, "bank", 3, 8.2),
            ("bank", 4, "bank", 4, 7.8),
            ("bank", 3, "bank", 4, 1.5),
            ("crane", 1, "bank", 3, 1.0),
            ("crane", 0, "typhoon", 2, 3.0),
        ];
        for round in 0..3 {
            for (w1, t1, w2, t2, r) in pairs {
                id += 1;
                let c1 = self.marked(t1, w1);
                let c2 = self.marked(t2, w2);
                let jitter = self.rng.random_range(-0.4..0.4);
                writeln!(
                    out,
                    "{id}\t{w1}\t{w2}\t{c1}\t{c2}\t{:.2}",
                    r + jitter + round as f64 * 0.01
                )
                .unwrap();
            }
        }
        id += 1;
        writeln!(
            out,
            "{id}\tcrane\tcrane\tno markup here\tcrane_x <b>crane</b>\t5.0"
        )
        .unwrap();
        out
    }

    /// Twenty senses per polysemous target: its two true topics plus
    /// eighteen distractors drawn from other topics and filler words.
    fn lineup(&mut self) -> String {
        let mut out = String::new();
        for (word, truth) in [("crane", [0usize, 1]), ("bank", [3, 4])] {
            let mut rows: Vec<(String, bool, Vec<String>)> = Vec::new();
            for t in truth {
                rows.push((topic_name(t), true, self.defining(Some(t))));
            }
            let others: Vec<usize> = (0..TOPICS).filter(|t| !truth.contains(t)).collect();
            for &t in &others {
                rows.push((topic_name(t), false, self.defining(Some(t))));
            }
            let mut j = 0;
            while rows.len() < 20 {
                rows.push((format!("misc{j}"), false, self.defining(None)));
                j += 1;
            }
            rows.shuffle(&mut self.rng);
            for (id, is_true, words) in rows {
                writeln!(
                    out,
                    "{word}\t{word}.{id}\t{}\t{}",
                    u8::from(is_true),
                    words.join(" ")
                )
                .unwrap();
            }
        }
        out
    }

    fn defining(&mut self, topic: Option<usize>) -> Vec<String> {
        let mut idx: Vec<usize> = (0..match topic {
            Some(_) => TOPIC_WORDS,
            None => FILLER_WORDS,
        })
            .collect();
        idx.shuffle(&mut self.rng);
        idx.into_iter()
            .take(8)
            .map(|j| match topic {
                Some(t) => format!("{}_{j}", topic_name(t)),
                None => format!("misc_{j}"),
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::dot;

    #[test]
    fn orthonormal_set() {
        let mut rng = linalg::rng_for(&[1]);
        let q = orthonormal_directions(&mut rng, 10, 10);
        for i in 0..10 {
            for j in 0..10 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((dot(&q[i], &q[j]) - want).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn planted_subspaces_contain_their_direction() {
        let mut rng = linalg::rng_for(&[2]);
        let q = orthonormal_directions(&mut rng, 12, 3);
        let (subs, labels) = planted_subspaces(&mut rng, &q, 3, 4);
        assert_eq!(subs.len(), 12);
        for (s, l) in subs.iter().zip(labels) {
            assert_eq!(s.rank(), 3);
            assert!(s.distance_to_unit(&q[l]) < 1e-6);
        }
    }

    #[test]
    fn fixture_is_deterministic() {
        let a = Fixture::new(3).table;
        let b = Fixture::new(3).table;
        assert_eq!(a, b);
        assert!(a.contains("crane") && a.contains("bird_0") && a.contains("wolf"));
    }
}
