//! Hard and soft sense decoding, and corpus labeling for lexeme training.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::context::{self, Subspace, WindowOptions};
use crate::embeddings::{EmbeddingTable, StopwordSet};
use crate::error::{Error, Result};
use crate::grassmeans::{self, SenseModel};
use crate::linalg;

/// A decoded sense (0-based) or the erasure label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SenseLabel {
    Sense(usize),
    Idk,
}

impl fmt::Display for SenseLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SenseLabel::Sense(k) => write!(f, "{}", k + 1),
            SenseLabel::Idk => f.write_str("IDK"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SoftAssignment {
    pub probs: Vec<f64>,
}

impl SoftAssignment {
    pub fn uniform(k: usize) -> Self {
        SoftAssignment {
            probs: vec![1.0 / k as f64; k],
        }
    }

    /// Most probable sense, lowest index on ties.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, p) in self.probs.iter().enumerate() {
            if *p > self.probs[best] {
                best = i;
            }
        }
        best
    }

    /// Inverse-CDF draw with a uniform `u` in [0, 1).
    pub fn sample_with(&self, u: f64) -> usize {
        let mut acc = 0.0;
        for (i, p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        // rounding: fall back to the last sense with mass
        self.probs.iter().rposition(|p| *p > 0.0).unwrap_or(0)
    }
}

fn check_dim(model: &SenseModel, s: &Subspace) -> Result<()> {
    if model.dim() != s.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: s.dim(),
        });
    }
    Ok(())
}

pub fn distances(model: &SenseModel, s: &Subspace) -> Result<Vec<f64>> {
    check_dim(model, s)?;
    Ok(model
        .directions
        .iter()
        .map(|u| s.distance_to_unit(u))
        .collect())
}

/// Nearest sense and its distance; ties go to the lowest index.
pub fn hard_decode(model: &SenseModel, s: &Subspace) -> Result<(usize, f64)> {
    check_dim(model, s)?;
    Ok(grassmeans::nearest(&model.directions, s))
}

/// `P(k) ∝ exp(-beta * d_k)`.
pub fn soft_decode(model: &SenseModel, s: &Subspace, beta: f64) -> Result<SoftAssignment> {
    if beta.is_nan() || beta <= 0.0 {
        return Err(Error::invalid("beta must be positive"));
    }
    Ok(softmax_of_distances(&distances(model, s)?, beta))
}

pub fn softmax_of_distances(distances: &[f64], beta: f64) -> SoftAssignment {
    let min = distances.iter().copied().fold(f64::INFINITY, f64::min);
    let w: Vec<f64> = distances
        .iter()
        .map(|d| (-beta * (d - min)).exp())
        .collect();
    let z: f64 = w.iter().sum();
    SoftAssignment {
        probs: w.into_iter().map(|x| x / z).collect(),
    }
}

/// Hard decoding with the erasure rule: a sense only when its distance is
/// strictly below `theta`.
pub fn hard_label(model: &SenseModel, s: &Subspace, theta: f64) -> Result<(SenseLabel, f64)> {
    let (k, d) = hard_decode(model, s)?;
    Ok((
        if d < theta {
            SenseLabel::Sense(k)
        } else {
            SenseLabel::Idk
        },
        d,
    ))
}

/// Subspace of a normalized sentence around `position`, using the model's
/// window and rank. `None` when no eligible context word remains.
pub fn context_for(
    model: &SenseModel,
    tokens: &[String],
    position: usize,
    lowercase: bool,
    table: &EmbeddingTable,
    stopwords: &StopwordSet,
) -> Option<Subspace> {
    let opts = WindowOptions {
        window: model.window,
        lowercase,
        include_target: false,
    };
    let ctx = context::window_tokens(tokens, position, &opts, table, stopwords);
    context::context_subspace(&ctx, table, model.rank).ok()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LabelMode {
    Hard { theta: f64 },
    Soft { beta: f64, seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelOptions {
    pub mode: LabelMode,
    pub lowercase: bool,
    pub separator: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetReport {
    pub sense_counts: Vec<u64>,
    pub idk_count: u64,
    pub total: u64,
}

impl TargetReport {
    fn merge(&mut self, other: &TargetReport) {
        for (a, b) in self.sense_counts.iter_mut().zip(&other.sense_counts) {
            *a += b;
        }
        self.idk_count += other.idk_count;
        self.total += other.total;
    }
}

/// Per-target occurrence counts, serialized as a JSON object keyed by target.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LabelReport {
    pub targets: BTreeMap<String, TargetReport>,
}

impl LabelReport {
    fn for_models(models: &BTreeMap<String, SenseModel>) -> Self {
        LabelReport {
            targets: models
                .iter()
                .map(|(t, m)| {
                    (
                        t.clone(),
                        TargetReport {
                            sense_counts: vec![0; m.k],
                            ..Default::default()
                        },
                    )
                })
                .collect(),
        }
    }

    fn merge(&mut self, other: &LabelReport) {
        for (t, r) in &other.targets {
            if let Some(mine) = self.targets.get_mut(t) {
                mine.merge(r);
            }
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

/// Rewrites every occurrence of a modeled target as `word<sep>label`, keeping
/// all other bytes of the line untouched.
pub struct Labeler<'a> {
    models: &'a BTreeMap<String, SenseModel>,
    table: &'a EmbeddingTable,
    stopwords: &'a StopwordSet,
    opts: LabelOptions,
}

impl<'a> Labeler<'a> {
    pub fn new(
        models: &'a BTreeMap<String, SenseModel>,
        table: &'a EmbeddingTable,
        stopwords: &'a StopwordSet,
        opts: LabelOptions,
    ) -> Result<Self> {
        match opts.mode {
            LabelMode::Hard { theta } if !(0.0..=1.0).contains(&theta) => {
                return Err(Error::invalid(format!(
                    "theta must lie in [0, 1], got {theta}"
                )))
            }
            LabelMode::Soft { beta, .. } if beta.is_nan() || beta <= 0.0 => {
                return Err(Error::invalid("beta must be positive"))
            }
            _ => {}
        }
        for (t, m) in models {
            if m.dim() != table.dim() {
                return Err(Error::invalid(format!(
                    "model for {t:?} has dimension {}, embeddings have {}",
                    m.dim(),
                    table.dim()
                )));
            }
        }
        Ok(Labeler {
            models,
            table,
            stopwords,
            opts,
        })
    }

    /// Labels one line (without its terminator). `line_idx` seeds soft sampling.
    pub fn label_line(&self, line: &str, line_idx: u64, report: &mut LabelReport) -> String {
        let spans = context::token_spans(line);
        let tokens: Vec<String> = spans
            .iter()
            .map(|&(s, e)| context::normalize_token(&line[s..e], self.opts.lowercase))
            .collect();
        let mut out = String::with_capacity(line.len() + 16);
        let mut cursor = 0;
        for (pos, (&(_, e), tok)) in spans.iter().zip(&tokens).enumerate() {
            let Some(model) = self.models.get(tok) else {
                continue;
            };
            let label = self.decide(model, &tokens, pos, line_idx);
            let entry = report
                .targets
                .entry(tok.clone())
                .or_insert_with(|| TargetReport {
                    sense_counts: vec![0; model.k],
                    ..Default::default()
                });
            entry.total += 1;
            match label {
                SenseLabel::Sense(k) => entry.sense_counts[k] += 1,
                SenseLabel::Idk => entry.idk_count += 1,
            }
            out.push_str(&line[cursor..e]);
            out.push_str(&self.opts.separator);
            out.push_str(&label.to_string());
            cursor = e;
        }
        out.push_str(&line[cursor..]);
        out
    }

    fn decide(
        &self,
        model: &SenseModel,
        tokens: &[String],
        pos: usize,
        line_idx: u64,
    ) -> SenseLabel {
        let subspace = context_for(
            model,
            tokens,
            pos,
            self.opts.lowercase,
            self.table,
            self.stopwords,
        );
        match self.opts.mode {
            LabelMode::Hard { theta } => match subspace {
                Some(s) => hard_label(model, &s, theta).map_or(SenseLabel::Idk, |(l, _)| l),
                None => SenseLabel::Idk,
            },
            LabelMode::Soft { beta, seed } => {
                let dist = subspace
                    .and_then(|s| soft_decode(model, &s, beta).ok())
                    .unwrap_or_else(|| SoftAssignment::uniform(model.k));
                let mut rng = linalg::rng_for(&[seed, line_idx, pos as u64, 0x736f_6674]);
                SenseLabel::Sense(dist.sample_with(rng.random::<f64>()))
            }
        }
    }

    /// Labels a whole text, preserving line terminators. Lines are processed
    /// in parallel chunks and reassembled in input order.
    pub fn label_text(&self, text: &str) -> (String, LabelReport) {
        let lines: Vec<&str> = text.split_inclusive('\n').collect();
        let chunks: Vec<(String, LabelReport)> = lines
            .par_chunks(2048)
            .enumerate()
            .map(|(c, chunk)| {
                let mut report = LabelReport::for_models(self.models);
                let mut out = String::new();
                for (i, raw) in chunk.iter().enumerate() {
                    let body = raw.trim_end_matches('\n').trim_end_matches('\r');
                    out.push_str(&self.label_line(body, (c * 2048 + i) as u64, &mut report));
                    out.push_str(&raw[body.len()..]);
                }
                (out, report)
            })
            .collect();
        let mut report = LabelReport::for_models(self.models);
        let mut out = String::with_capacity(text.len() + text.len() / 8);
        for (s, r) in &chunks {
            out.push_str(s);
            report.merge(r);
        }
        (out, report)
    }

    pub fn label_file(
        &self,
        corpus_path: impl AsRef<Path>,
        out_path: impl AsRef<Path>,
    ) -> Result<LabelReport> {
        let (src, dst) = (corpus_path.as_ref(), out_path.as_ref());
        let text = std::fs::read_to_string(src).map_err(|e| Error::io(src, e))?;
        let (labeled, report) = self.label_text(&text);
        std::fs::write(dst, labeled).map_err(|e| Error::io(dst, e))?;
        Ok(report)
    }
}

pub fn label_corpus_hard(
    models: &BTreeMap<String, SenseModel>,
    table: &EmbeddingTable,
    stopwords: &StopwordSet,
    corpus_path: impl AsRef<Path>,
    out_path: impl AsRef<Path>,
    theta: f64,
    lowercase: bool,
) -> Result<LabelReport> {
    let opts = LabelOptions {
        mode: LabelMode::Hard { theta },
        lowercase,
        separator: "#".into(),
    };
    Labeler::new(models, table, stopwords, opts)?.label_file(corpus_path, out_path)
}

#[allow(clippy::too_many_arguments)]
pub fn label_corpus_soft(
    models: &BTreeMap<String, SenseModel>,
    table: &EmbeddingTable,
    stopwords: &StopwordSet,
    corpus_path: impl AsRef<Path>,
    out_path: impl AsRef<Path>,
    beta: f64,
    seed: u64,
    lowercase: bool,
) -> Result<LabelReport> {
    let opts = LabelOptions {
        mode: LabelMode::Soft { beta, seed },
        lowercase,
        separator: "#".into(),
    };
    Labeler::new(models, table, stopwords, opts)?.label_file(corpus_path, out_path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grassmeans::FORMAT_VERSION;

    fn e(i: usize, d: usize) -> Vec<f64> {
        let mut v = vec![0.0; d];
        v[i] = 1.0;
        v
    }

    pub(crate) fn model(target: &str, directions: Vec<Vec<f64>>) -> SenseModel {
        SenseModel {
            format_version: FORMAT_VERSION,
            target: target.into(),
            k: directions.len(),
            rank: 3,
            window: 10,
            restarts: 1,
            seed: 0,
            objective: 0.0,
            directions,
            assignments: None,
        }
    }

    fn span(vs: &[Vec<f64>]) -> Subspace {
        Subspace::from_spanning(vs).unwrap()
    }

    #[test]
    fn hard_decode_examples() {
        let m = model("w", vec![e(0, 3), e(1, 3)]);
        assert_eq!(
            hard_decode(&m, &span(&[e(0, 3), e(2, 3)])).unwrap(),
            (0, 0.0)
        );
        assert_eq!(hard_decode(&m, &span(&[e(2, 3)])).unwrap(), (0, 1.0));
        let (k, d) = hard_decode(&m, &span(&[vec![0.6, 0.8, 0.0]])).unwrap();
        assert_eq!(k, 1);
        assert!((d - 0.6).abs() < 1e-12);
        assert!(hard_decode(&m, &span(&[e(0, 4)])).is_err());
    }

    #[test]
    fn soft_decode_examples() {
        let p = softmax_of_distances(&[0.0, 1.0], 1.0);
        assert!((p.probs[0] - 0.7311).abs() < 1e-4 && (p.probs[1] - 0.2689).abs() < 1e-4);
        let p = softmax_of_distances(&[0.0, 1.0], 10.0);
        assert!((p.probs[0] - 0.99995).abs() < 1e-5 && p.probs[1] < 1e-4);
        let p = softmax_of_distances(&[0.3; 4], 10.0);
        assert!(p.probs.iter().all(|x| (x - 0.25).abs() < 1e-15));
        let m = model("w", vec![e(0, 3)]);
        assert!(soft_decode(&m, &span(&[e(0, 3)]), 0.0).is_err());
    }

    #[test]
    fn threshold_is_strict() {
        let m = model("w", vec![e(0, 3), e(1, 3)]);
        let s = span(&[vec![0.6, 0.0, 0.8]]);
        // distance to e1 is 0.8
        assert_eq!(hard_label(&m, &s, 0.8).unwrap().0, SenseLabel::Idk);
        assert_eq!(hard_label(&m, &s, 0.81).unwrap().0, SenseLabel::Sense(0));
        assert_eq!(SenseLabel::Sense(0).to_string(), "1");
        assert_eq!(SenseLabel::Idk.to_string(), "IDK");
    }

    #[test]
    fn sampling_inverse_cdf() {
        let d = SoftAssignment {
            probs: vec![1.0, 0.0],
        };
        assert!((0..100).all(|i| d.sample_with(i as f64 / 100.0) == 0));
        let u = SoftAssignment::uniform(2);
        assert_eq!((u.sample_with(0.49), u.sample_with(0.5)), (0, 1));
    }

    fn fixture() -> (EmbeddingTable, BTreeMap<String, SenseModel>) {
        let t = EmbeddingTable::from_entries(
            3,
            [
                ("crane", vec![1.0, 1.0, 0.0]),
                ("bird", e(0, 3)),
                ("steel", e(1, 3)),
                ("fog", e(2, 3)),
            ],
        )
        .unwrap();
        let mut models = BTreeMap::new();
        models.insert("crane".to_string(), model("crane", vec![e(0, 3), e(1, 3)]));
        (t, models)
    }

    #[test]
    fn hard_labeling_rewrites_only_targets() {
        let (t, models) = fixture();
        let stop = StopwordSet::empty();
        let opts = LabelOptions {
            mode: LabelMode::Hard { theta: 0.6 },
            lowercase: true,
            separator: "#".into(),
        };
        let l = Labeler::new(&models, &t, &stop, opts).unwrap();
        let text = "the  Crane bird\r\nsteel crane\nfog crane\ncrane\n";
        let (out, rep) = l.label_text(text);
        assert_eq!(
            out,
            "the  Crane#1 bird\r\nsteel crane#2\nfog crane#IDK\ncrane#IDK\n"
        );
        let r = &rep.targets["crane"];
        assert_eq!(
            (r.sense_counts.clone(), r.idk_count, r.total),
            (vec![1, 1], 2, 4)
        );
        assert_eq!(
            out.split_whitespace().count(),
            text.split_whitespace().count()
        );
    }

    #[test]
    fn theta_boundaries() {
        let (t, models) = fixture();
        let stop = StopwordSet::empty();
        let text = "bird crane\nsteel crane\nfog crane\n";
        // "fog" is orthogonal to both senses, so d = 1 and the strict test fails even at theta = 1
        for (theta, idk) in [(0.0, 3), (1.0, 1)] {
            let opts = LabelOptions {
                mode: LabelMode::Hard { theta },
                lowercase: true,
                separator: "#".into(),
            };
            let (_, rep) = Labeler::new(&models, &t, &stop, opts)
                .unwrap()
                .label_text(text);
            assert_eq!(rep.targets["crane"].idk_count, idk, "theta {theta}");
        }
        let bad = LabelOptions {
            mode: LabelMode::Hard { theta: 1.5 },
            lowercase: true,
            separator: "#".into(),
        };
        assert!(Labeler::new(&models, &t, &stop, bad).is_err());
    }

    #[test]
    fn soft_labeling_is_seeded_and_balanced() {
        let (t, models) = fixture();
        let stop = StopwordSet::empty();
        // context "fog" is equidistant from both senses
        let text = "fog crane\n".repeat(10_000);
        let opts = |seed| LabelOptions {
            mode: LabelMode::Soft { beta: 10.0, seed },
            lowercase: true,
            separator: "#".into(),
        };
        let l = Labeler::new(&models, &t, &stop, opts(7)).unwrap();
        let (a, rep) = l.label_text(&text);
        let (b, _) = l.label_text(&text);
        assert_eq!(a, b);
        let share = rep.targets["crane"].sense_counts[0] as f64 / 10_000.0;
        assert!((0.47..=0.53).contains(&share), "{share}");
        assert_eq!(rep.targets["crane"].idk_count, 0);
        let (c, _) = Labeler::new(&models, &t, &stop, opts(8))
            .unwrap()
            .label_text(&text);
        assert_ne!(a, c);
        // degenerate distribution: "bird" context is far closer to sense 1
        let (d, _) = Labeler::new(
            &models,
            &t,
            &stop,
            LabelOptions {
                mode: LabelMode::Soft { beta: 1e4, seed: 1 },
                ..opts(1)
            },
        )
        .unwrap()
        .label_text(&"bird crane\n".repeat(200));
        assert!(d.lines().all(|l| l == "bird crane#1"));
    }
}
