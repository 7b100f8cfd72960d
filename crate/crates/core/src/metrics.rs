//! Clustering and similarity evaluation over contingency tables.

use std::collections::HashMap;
use std::fmt::Display;
use std::hash::Hash;
use std::io::BufRead;
use std::path::Path;

use crate::error::{Error, Result};

/// Counts of (gold, predicted) label pairs. Rows are gold labels, columns
/// predicted labels, both in first-appearance order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContingencyTable {
    pub rows: Vec<String>,
    pub cols: Vec<String>,
    pub counts: Vec<Vec<u64>>,
    pub total: u64,
}

impl ContingencyTable {
    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self> {
        let t = counts.len();
        let k = counts.first().map_or(0, Vec::len);
        if t == 0 || k == 0 || counts.iter().any(|r| r.len() != k) {
            return Err(Error::invalid(
                "contingency table must be a non-empty rectangle",
            ));
        }
        let total = counts.iter().flatten().sum();
        if total == 0 {
            return Err(Error::invalid("contingency table is empty"));
        }
        Ok(ContingencyTable {
            rows: (0..t).map(|i| i.to_string()).collect(),
            cols: (0..k).map(|i| i.to_string()).collect(),
            counts,
            total,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.counts.len()
    }

    pub fn n_cols(&self) -> usize {
        self.cols.len()
    }

    fn row_sums(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    fn col_sums(&self) -> Vec<u64> {
        (0..self.n_cols())
            .map(|k| self.counts.iter().map(|r| r[k]).sum())
            .collect()
    }
}

/// Cross-tabulates gold and predicted labels. Erasure predictions (e.g. IDK)
/// are just another predicted value and get their own column.
pub fn build_contingency<G, P>(gold: &[G], predicted: &[P]) -> Result<ContingencyTable>
where
    G: Eq + Hash + Display,
    P: Eq + Hash + Display,
{
    if gold.len() != predicted.len() {
        return Err(Error::DimensionMismatch {
            expected: gold.len(),
            got: predicted.len(),
        });
    }
    if gold.is_empty() {
        return Err(Error::invalid("no labels"));
    }
    let mut row_index: HashMap<&G, usize> = HashMap::new();
    let mut col_index: HashMap<&P, usize> = HashMap::new();
    let mut rows = Vec::new();
    let mut cols = Vec::new();
    let mut cells = Vec::with_capacity(gold.len());
    for (g, p) in gold.iter().zip(predicted) {
        let r = *row_index.entry(g).or_insert_with(|| {
            rows.push(g.to_string());
            rows.len() - 1
        });
        let c = *col_index.entry(p).or_insert_with(|| {
            cols.push(p.to_string());
            cols.len() - 1
        });
        cells.push((r, c));
    }
    let mut counts = vec![vec![0u64; cols.len()]; rows.len()];
    for (r, c) in cells {
        counts[r][c] += 1;
    }
    Ok(ContingencyTable {
        rows,
        cols,
        counts,
        total: gold.len() as u64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VMeasure {
    pub v: f64,
    pub homogeneity: f64,
    pub completeness: f64,
}

fn entropy(marginals: &[u64], n: f64) -> f64 {
    marginals
        .iter()
        .filter(|&&a| a > 0)
        .map(|&a| {
            let p = a as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Homogeneity, completeness and their harmonic mean (natural log). A zero
/// marginal entropy makes the corresponding score 1.
pub fn v_measure(table: &ContingencyTable) -> VMeasure {
    let n = table.total as f64;
    let rows = table.row_sums();
    let cols = table.col_sums();
    let h_t = entropy(&rows, n);
    let h_k = entropy(&cols, n);
    let mut h_t_given_k = 0.0;
    let mut h_k_given_t = 0.0;
    for (t, row) in table.counts.iter().enumerate() {
        for (k, &a) in row.iter().enumerate() {
            if a == 0 {
                continue;
            }
            let a = a as f64;
            h_t_given_k -= a / n * (a / cols[k] as f64).ln();
            h_k_given_t -= a / n * (a / rows[t] as f64).ln();
        }
    }
    let homogeneity = if h_t == 0.0 {
        1.0
    } else {
        1.0 - h_t_given_k / h_t
    };
    let completeness = if h_k == 0.0 {
        1.0
    } else {
        1.0 - h_k_given_t / h_k
    };
    let v = if homogeneity + completeness == 0.0 {
        0.0
    } else {
        2.0 * homogeneity * completeness / (homogeneity + completeness)
    };
    VMeasure {
        v: v.clamp(0.0, 1.0),
        homogeneity: homogeneity.clamp(0.0, 1.0),
        completeness: completeness.clamp(0.0, 1.0),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairedF {
    pub f: f64,
    pub precision: f64,
    pub recall: f64,
}

fn pairs(n: u64) -> u64 {
    n * n.saturating_sub(1) / 2
}

fn ratio_or_zero(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Pair-counting F-score: two instances form a pair when they share a cluster.
pub fn paired_f_score(table: &ContingencyTable) -> PairedF {
    let predicted: u64 = table.col_sums().into_iter().map(pairs).sum();
    let gold: u64 = table.row_sums().into_iter().map(pairs).sum();
    let both: u64 = table.counts.iter().flatten().map(|&a| pairs(a)).sum();
    let precision = ratio_or_zero(both as f64, predicted as f64);
    let recall = ratio_or_zero(both as f64, gold as f64);
    PairedF {
        f: ratio_or_zero(2.0 * precision * recall, precision + recall),
        precision,
        recall,
    }
}

/// Largest share of instances on a one-to-one matching of predicted clusters
/// to gold classes. Exact; limited to 8 predicted clusters.
pub fn best_permutation_accuracy(table: &ContingencyTable) -> Result<f64> {
    let k = table.n_cols();
    if k > 8 {
        return Err(Error::TooManyClusters(k));
    }
    // best[mask]: max matched mass using the columns in `mask`, rows so far
    let full = 1usize << k;
    let mut best = vec![0u64; full];
    for row in &table.counts {
        let prev = best.clone();
        for mask in 0..full {
            for (c, &a) in row.iter().enumerate() {
                if mask & (1 << c) != 0 {
                    best[mask] = best[mask].max(prev[mask ^ (1 << c)] + a);
                }
            }
        }
    }
    Ok(best[full - 1] as f64 / table.total as f64)
}

/// Average ranks (1-based), ties share the mean of the positions they span.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = r;
        }
        i = j + 1;
    }
    ranks
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch {
            expected: xs.len(),
            got: ys.len(),
        });
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx).powi(2);
        syy += (y - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::invalid(
            "correlation of a constant vector is undefined",
        ));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman's rho with average ranks for ties.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch {
            expected: xs.len(),
            got: ys.len(),
        });
    }
    if xs.len() < 2 {
        return Err(Error::invalid("spearman needs at least two pairs"));
    }
    pearson(&average_ranks(xs), &average_ranks(ys))
}

/// One row of a WSI gold file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GoldInstance {
    pub instance_id: String,
    pub target: String,
    pub gold_sense: String,
    pub target_position: usize,
    pub sentence: String,
}

/// Reads "instance_id\ttarget\tgold_sense\ttarget_position\tsentence" rows.
pub fn read_gold<R: BufRead>(reader: R, origin: &Path) -> Result<Vec<GoldInstance>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(origin, e))?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.splitn(5, '\t').collect();
        if f.len() != 5 {
            return Err(Error::parse(
                origin,
                i + 1,
                format!("expected 5 tab-separated fields, got {}", f.len()),
            ));
        }
        let target_position = f[3].trim().parse().map_err(|_| {
            Error::parse(origin, i + 1, format!("invalid target position {:?}", f[3]))
        })?;
        out.push(GoldInstance {
            instance_id: f[0].to_string(),
            target: f[1].to_string(),
            gold_sense: f[2].to_string(),
            target_position,
            sentence: f[4].to_string(),
        });
    }
    Ok(out)
}

/// Scores for one target word.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetScores {
    pub target: String,
    pub instances: usize,
    /// Distinct predicted labels, erasures included.
    pub clusters: usize,
    pub v: VMeasure,
    pub f: PairedF,
}

impl TargetScores {
    pub fn from_table(target: &str, table: &ContingencyTable) -> Self {
        TargetScores {
            target: target.to_string(),
            instances: table.total as usize,
            clusters: table.n_cols(),
            v: v_measure(table),
            f: paired_f_score(table),
        }
    }
}

/// Unweighted mean over targets.
#[derive(Debug, Clone, PartialEq)]
pub struct MacroScores {
    pub targets: usize,
    pub instances: usize,
    pub mean_clusters: f64,
    pub v: VMeasure,
    pub f: PairedF,
}

pub fn macro_average(scores: &[TargetScores]) -> Option<MacroScores> {
    if scores.is_empty() {
        return None;
    }
    let n = scores.len() as f64;
    let mean = |g: &dyn Fn(&TargetScores) -> f64| scores.iter().map(g).sum::<f64>() / n;
    Some(MacroScores {
        targets: scores.len(),
        instances: scores.iter().map(|s| s.instances).sum(),
        mean_clusters: mean(&|s| s.clusters as f64),
        v: VMeasure {
            v: mean(&|s| s.v.v),
            homogeneity: mean(&|s| s.v.homogeneity),
            completeness: mean(&|s| s.v.completeness),
        },
        f: PairedF {
            f: mean(&|s| s.f.f),
            precision: mean(&|s| s.f.precision),
            recall: mean(&|s| s.f.recall),
        },
    })
}
