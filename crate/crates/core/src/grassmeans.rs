//! Sense induction on the Grassmannian.
//!
//! Each context is a low-rank subspace. A sense is a unit direction, scored
//! against a context by the projection distance `d(u, S)`. K-Grassmeans
//! alternates nearest-direction assignment with a closed-form direction update:
//! the unit vector minimising `sum_c d^2(u, S_c)` is the dominant eigenvector of
//! `sum_c sum_n b_n b_n^T` over the basis vectors `b_n` of the group.

use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::context::{self, Subspace, WindowOptions};
use crate::embeddings::{EmbeddingTable, StopwordSet};
use crate::error::{Error, Result};
use crate::linalg::{self, random_unit};
use crate::metrics::{self, ContingencyTable};

pub const FORMAT_VERSION: u32 = 1;

/// How basis vectors enter the direction update.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    #[default]
    Unweighted,
    /// Weight each basis vector by its squared singular value share. Only
    /// the unweighted update minimises the clustering objective.
    EnergyWeighted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub instance_id: String,
    /// 1-based cluster index.
    pub cluster: usize,
}

/// Fitted senses of one target word. Serialized as JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SenseModel {
    pub format_version: u32,
    pub target: String,
    pub k: usize,
    pub rank: usize,
    pub window: usize,
    pub restarts: usize,
    pub seed: u64,
    pub objective: f64,
    pub directions: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assignments: Option<Vec<Assignment>>,
}

impl SenseModel {
    pub fn dim(&self) -> usize {
        self.directions.first().map_or(0, Vec::len)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let model: SenseModel = serde_json::from_str(&text)?;
        if model.format_version != FORMAT_VERSION {
            return Err(Error::invalid(format!(
                "{}: unsupported format_version {}",
                path.display(),
                model.format_version
            )));
        }
        if model.directions.len() != model.k || model.k == 0 {
            return Err(Error::invalid(format!(
                "{}: expected {} directions",
                path.display(),
                model.k
            )));
        }
        Ok(model)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KGrassmeansParams {
    pub k: usize,
    pub restarts: usize,
    pub max_iters: usize,
    pub tol: f64,
    pub seed: u64,
    pub aggregation: Aggregation,
}

impl KGrassmeansParams {
    pub fn new(k: usize) -> Self {
        KGrassmeansParams {
            k,
            restarts: 10,
            max_iters: 100,
            tol: 1e-6,
            seed: 0,
            aggregation: Aggregation::Unweighted,
        }
    }
}

/// Objective after every E/M iteration of one restart.
#[derive(Debug, Clone, PartialEq)]
pub struct RestartTrace {
    pub objectives: Vec<f64>,
    /// Number of empty clusters re-seeded with random directions.
    pub reseeded: usize,
    pub converged: bool,
}

impl RestartTrace {
    pub fn final_objective(&self) -> f64 {
        self.objectives.last().copied().unwrap_or(f64::INFINITY)
    }

    /// True when the objective never rises by more than `slack`.
    pub fn is_monotone(&self, slack: f64) -> bool {
        self.objectives.windows(2).all(|w| w[1] <= w[0] + slack)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    pub directions: Vec<Vec<f64>>,
    pub objective: f64,
    /// 0-based cluster per input subspace.
    pub assignments: Vec<usize>,
    pub traces: Vec<RestartTrace>,
    pub best_restart: usize,
}

impl Clustering {
    pub fn into_model(
        self,
        target: &str,
        rank: usize,
        window: usize,
        params: &KGrassmeansParams,
        instance_ids: Option<&[String]>,
    ) -> SenseModel {
        let assignments = instance_ids.map(|ids| {
            ids.iter()
                .zip(&self.assignments)
                .map(|(id, &k)| Assignment {
                    instance_id: id.clone(),
                    cluster: k + 1,
                })
                .collect()
        });
        SenseModel {
            format_version: FORMAT_VERSION,
            target: target.to_string(),
            k: params.k,
            rank,
            window,
            restarts: params.restarts,
            seed: params.seed,
            objective: self.objective,
            directions: self.directions,
            assignments,
        }
    }
}

/// Squared projection distance of a unit direction to each subspace, summed.
pub fn objective<'a>(direction: &[f64], subspaces: impl IntoIterator<Item = &'a Subspace>) -> f64 {
    subspaces
        .into_iter()
        .map(|s| (1.0 - s.projection_energy(direction)).max(0.0))
        .sum()
}

/// Unit direction closest to all subspaces in the least-squares projection
/// sense, with its residual `sum_c d^2(u, S_c)`.
pub fn recover_intersection<'a, I>(subspaces: I) -> Result<(Vec<f64>, f64)>
where
    I: IntoIterator<Item = &'a Subspace>,
{
    recover_intersection_with(subspaces, Aggregation::Unweighted)
}

pub fn recover_intersection_with<'a, I>(
    subspaces: I,
    aggregation: Aggregation,
) -> Result<(Vec<f64>, f64)>
where
    I: IntoIterator<Item = &'a Subspace>,
{
    let subspaces: Vec<&Subspace> = subspaces.into_iter().collect();
    let Some(first) = subspaces.first() else {
        return Err(Error::invalid(
            "recover_intersection needs at least one subspace",
        ));
    };
    let dim = first.dim();
    let mut vectors: Vec<&[f64]> = Vec::new();
    let mut weights: Vec<f64> = Vec::new();
    for s in &subspaces {
        if s.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: s.dim(),
            });
        }
        for (b, e) in s.basis().iter().zip(s.energy()) {
            vectors.push(b);
            weights.push(match aggregation {
                Aggregation::Unweighted => 1.0,
                Aggregation::EnergyWeighted => e / s.total_energy().max(f64::MIN_POSITIVE),
            });
        }
    }
    let w = match aggregation {
        Aggregation::Unweighted => None,
        Aggregation::EnergyWeighted => Some(weights.as_slice()),
    };
    let (direction, _) = linalg::dominant_direction(&vectors, w, dim).ok_or(Error::ZeroVector)?;
    let residual = objective(&direction, subspaces.iter().copied());
    Ok((direction, residual))
}

/// Index of the nearest direction to each subspace; ties go to the lowest index.
pub fn expectation_assign(directions: &[Vec<f64>], subspaces: &[Subspace]) -> Vec<usize> {
    subspaces.iter().map(|s| nearest(directions, s).0).collect()
}

/// (index, distance) of the nearest direction; ties go to the lowest index.
pub(crate) fn nearest(directions: &[Vec<f64>], s: &Subspace) -> (usize, f64) {
    let mut best = (0usize, f64::INFINITY);
    for (k, u) in directions.iter().enumerate() {
        let d = s.distance_to_unit(u);
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaximizationStep {
    pub directions: Vec<Vec<f64>>,
    pub objective: f64,
    /// Clusters that were empty and got a fresh random direction.
    pub reseeded: Vec<usize>,
}

/// Re-fits one direction per group. Empty groups are re-seeded from `rng`.
pub fn maximization_update<R: Rng + ?Sized>(
    groups: &[Vec<&Subspace>],
    dim: usize,
    aggregation: Aggregation,
    rng: &mut R,
) -> Result<MaximizationStep> {
    let mut directions = Vec::with_capacity(groups.len());
    let mut reseeded = Vec::new();
    let mut total = 0.0;
    for (k, group) in groups.iter().enumerate() {
        if group.is_empty() {
            directions.push(random_unit(rng, dim));
            reseeded.push(k);
            continue;
        }
        let (u, _) = recover_intersection_with(group.iter().copied(), aggregation)?;
        total += objective(&u, group.iter().copied());
        directions.push(u);
    }
    Ok(MaximizationStep {
        directions,
        objective: total,
        reseeded,
    })
}

/// K-Grassmeans with independent random restarts; the restart with the lowest
/// final objective wins (earliest on ties). Restarts run in parallel and each
/// draws from its own seeded stream, so results do not depend on scheduling.
pub fn k_grassmeans(subspaces: &[Subspace], params: &KGrassmeansParams) -> Result<Clustering> {
    let k = params.k;
    if k == 0 || params.restarts == 0 || params.max_iters == 0 {
        return Err(Error::invalid("k, restarts and max_iters must be positive"));
    }
    if params.tol.is_nan() || params.tol <= 0.0 {
        return Err(Error::invalid("tol must be positive"));
    }
    if subspaces.len() < k {
        return Err(Error::NotEnoughCandidates {
            needed: k,
            available: subspaces.len(),
        });
    }
    let dim = subspaces[0].dim();
    if let Some(bad) = subspaces.iter().find(|s| s.dim() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: bad.dim(),
        });
    }

    let runs: Vec<Result<RestartRun>> = (0..params.restarts)
        .into_par_iter()
        .map(|r| single_run(subspaces, dim, params, r as u64))
        .collect();

    let mut best: Option<(usize, Vec<Vec<f64>>, Vec<usize>)> = None;
    let mut traces: Vec<RestartTrace> = Vec::with_capacity(runs.len());
    for (r, run) in runs.into_iter().enumerate() {
        let (dirs, assign, trace) = run?;
        let better = match &best {
            None => true,
            Some((b, _, _)) => trace.final_objective() < traces[*b].final_objective(),
        };
        traces.push(trace);
        if better {
            best = Some((r, dirs, assign));
        }
    }
    let (best_restart, directions, assignments) = best.expect("at least one restart");
    Ok(Clustering {
        objective: traces[best_restart].final_objective(),
        directions,
        assignments,
        traces,
        best_restart,
    })
}

/// Directions, assignments and trace of one restart.
type RestartRun = (Vec<Vec<f64>>, Vec<usize>, RestartTrace);

fn single_run(
    subspaces: &[Subspace],
    dim: usize,
    params: &KGrassmeansParams,
    restart: u64,
) -> Result<RestartRun> {
    let mut rng = linalg::rng_for(&[params.seed, restart, 0x6b67_726d]);
    let mut directions: Vec<Vec<f64>> = (0..params.k).map(|_| random_unit(&mut rng, dim)).collect();
    let mut trace = RestartTrace {
        objectives: Vec::new(),
        reseeded: 0,
        converged: false,
    };
    let mut assignments = Vec::new();
    let mut previous = f64::INFINITY;
    for _ in 0..params.max_iters {
        assignments = expectation_assign(&directions, subspaces);
        let mut groups: Vec<Vec<&Subspace>> = vec![Vec::new(); params.k];
        for (s, &g) in subspaces.iter().zip(&assignments) {
            groups[g].push(s);
        }
        let step = maximization_update(&groups, dim, params.aggregation, &mut rng)?;
        if params.aggregation == Aggregation::Unweighted {
            debug_assert!(
                step.objective <= previous + 1e-9,
                "objective rose: {previous} -> {}",
                step.objective
            );
        }
        trace.reseeded += step.reseeded.len();
        trace.objectives.push(step.objective);
        directions = step.directions;
        if (previous - step.objective).abs() < params.tol {
            trace.converged = true;
            break;
        }
        previous = step.objective;
    }
    Ok((directions, assignments, trace))
}

#[derive(Debug, Clone, Copy)]
pub struct MergeParams {
    pub window: WindowOptions,
    pub rank: usize,
    pub max_instances: Option<usize>,
    pub kgrassmeans: KGrassmeansParams,
}

#[derive(Debug, Clone)]
pub struct MergeOutcome {
    pub accuracy: f64,
    pub model: SenseModel,
    pub contingency: ContingencyTable,
}

/// Pools the contexts of several monosemous words as if they were one
/// surface form, clusters them with `k = words.len()` and scores the
/// recovered partition against the word of origin.
///
/// Occurrences of any of the merged words are removed from every context,
/// since the merged form has no embedding of its own.
pub fn synth_merge_experiment(
    words: &[String],
    corpus_path: impl AsRef<Path>,
    table: &EmbeddingTable,
    stopwords: &StopwordSet,
    params: &MergeParams,
) -> Result<MergeOutcome> {
    if words.is_empty() {
        return Err(Error::invalid("no words to merge"));
    }
    let merged: Vec<String> = words
        .iter()
        .map(|w| context::normalize_token(w, params.window.lowercase))
        .collect();
    let mut subspaces = Vec::new();
    let mut gold = Vec::new();
    let mut ids = Vec::new();
    for (label, word) in merged.iter().enumerate() {
        let before = subspaces.len();
        for inst in context::extract_contexts(
            &corpus_path,
            word,
            &params.window,
            table,
            stopwords,
            params.max_instances,
        )? {
            let tokens: Vec<String> = inst
                .tokens
                .into_iter()
                .filter(|t| !merged.contains(t))
                .collect();
            if let Ok(s) = context::context_subspace(&tokens, table, params.rank) {
                subspaces.push(s);
                gold.push(label);
                ids.push(format!("{word}:{}", inst.instance_id));
            }
        }
        if subspaces.len() == before {
            return Err(Error::invalid(format!(
                "word {word:?} has no usable context"
            )));
        }
    }
    let kg = KGrassmeansParams {
        k: merged.len(),
        ..params.kgrassmeans
    };
    let clustering = k_grassmeans(&subspaces, &kg)?;
    let contingency = metrics::build_contingency(&gold, &clustering.assignments)?;
    let accuracy = metrics::best_permutation_accuracy(&contingency)?;
    let model = clustering.into_model(
        &merged.join("+"),
        params.rank,
        params.window.window,
        &kg,
        Some(&ids),
    );
    Ok(MergeOutcome {
        accuracy,
        model,
        contingency,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::dot;

    fn e(i: usize, d: usize) -> Vec<f64> {
        let mut v = vec![0.0; d];
        v[i] = 1.0;
        v
    }

    fn span(vs: &[Vec<f64>]) -> Subspace {
        Subspace::from_spanning(vs).unwrap()
    }

    #[test]
    fn intersection_of_two_planes() {
        let s = [span(&[e(0, 3), e(1, 3)]), span(&[e(0, 3), e(2, 3)])];
        let (u, r) = recover_intersection(&s).unwrap();
        assert!((u[0] - 1.0).abs() < 1e-12, "{u:?}");
        assert!(r.abs() < 1e-12);
        // sign rule on a negated basis
        let neg = [span(&[vec![0.0, -1.0, 0.0]])];
        let (u, r) = recover_intersection(&neg).unwrap();
        assert!((u[1] - 1.0).abs() < 1e-12 && r.abs() < 1e-12);
        assert!(recover_intersection(&[] as &[Subspace]).is_err());
    }

    #[test]
    fn planted_direction_is_recovered() {
        let mut rng = linalg::rng_for(&[5]);
        let p = random_unit(&mut rng, 20);
        let subs: Vec<Subspace> = (0..50)
            .map(|_| {
                span(&[
                    p.clone(),
                    random_unit(&mut rng, 20),
                    random_unit(&mut rng, 20),
                ])
            })
            .collect();
        let (u, _) = recover_intersection(&subs).unwrap();
        assert!(dot(&u, &p).abs() >= 0.999);
    }

    #[test]
    fn assignment_and_ties() {
        let dirs = vec![e(0, 3), e(1, 3)];
        let subs = vec![
            span(&[e(0, 3), e(2, 3)]),
            span(&[e(2, 3)]),
            span(&[e(1, 3)]),
        ];
        assert_eq!(expectation_assign(&dirs, &subs), vec![0, 0, 1]);
        assert_eq!(expectation_assign(&[e(0, 3)], &subs), vec![0, 0, 0]);
    }

    #[test]
    fn m_step_cases() {
        let a = span(&[e(0, 3), e(1, 3)]);
        let b = span(&[e(0, 3), e(2, 3)]);
        let c = span(&[e(2, 3)]);
        let groups = vec![vec![&a, &b], vec![&c], vec![]];
        let mut rng = linalg::rng_for(&[1]);
        let step = maximization_update(&groups, 3, Aggregation::Unweighted, &mut rng).unwrap();
        assert!((step.directions[0][0] - 1.0).abs() < 1e-12);
        assert!((step.directions[1][2] - 1.0).abs() < 1e-12);
        assert!((linalg::norm(&step.directions[2]) - 1.0).abs() < 1e-12);
        assert!(step.objective.abs() < 1e-12);
        assert_eq!(step.reseeded, vec![2]);
    }

    fn planted(k: usize, per: usize, dim: usize, seed: u64) -> (Vec<Subspace>, Vec<usize>) {
        let mut rng = linalg::rng_for(&[seed]);
        let mut subs = Vec::new();
        let mut labels = Vec::new();
        for i in 0..per * k {
            let c = i % k;
            subs.push(span(&[
                e(c, dim),
                random_unit(&mut rng, dim),
                random_unit(&mut rng, dim),
            ]));
            labels.push(c);
        }
        (subs, labels)
    }

    #[test]
    fn two_planted_senses_are_separated() {
        let (subs, labels) = planted(2, 20, 20, 3);
        let fit = k_grassmeans(&subs, &KGrassmeansParams::new(2)).unwrap();
        let t = metrics::build_contingency(&labels, &fit.assignments).unwrap();
        assert_eq!(metrics::best_permutation_accuracy(&t).unwrap(), 1.0);
        assert!(fit.objective < 1e-9);
        for tr in &fit.traces {
            assert!(tr.is_monotone(1e-9), "{:?}", tr.objectives);
            assert!(fit.objective <= tr.final_objective());
        }
        let recomputed: f64 = subs
            .iter()
            .zip(&fit.assignments)
            .map(|(s, &k)| s.distance_to_unit(&fit.directions[k]).powi(2))
            .sum();
        assert!((recomputed - fit.objective).abs() < 1e-6);
    }

    #[test]
    fn k_one_matches_intersection() {
        let (subs, _) = planted(3, 5, 10, 8);
        let fit = k_grassmeans(&subs, &KGrassmeansParams::new(1)).unwrap();
        let (u, r) = recover_intersection(&subs).unwrap();
        assert!(dot(&u, &fit.directions[0]).abs() >= 1.0 - 1e-9);
        assert!((r - fit.objective).abs() < 1e-9);
    }

    #[test]
    fn deterministic_and_validated() {
        let (subs, _) = planted(3, 6, 12, 4);
        let p = KGrassmeansParams {
            seed: 42,
            ..KGrassmeansParams::new(3)
        };
        assert_eq!(
            k_grassmeans(&subs, &p).unwrap(),
            k_grassmeans(&subs, &p).unwrap()
        );
        assert!(k_grassmeans(&subs[..2], &p).is_err());
        assert!(k_grassmeans(&subs, &KGrassmeansParams { tol: 0.0, ..p }).is_err());
    }

    #[test]
    fn model_json_round_trip() {
        let (subs, _) = planted(2, 3, 6, 1);
        let p = KGrassmeansParams::new(2);
        let ids: Vec<String> = (0..subs.len()).map(|i| format!("i{i}")).collect();
        let m = k_grassmeans(&subs, &p)
            .unwrap()
            .into_model("crane", 3, 10, &p, Some(&ids));
        let json = m.to_json().unwrap();
        assert!(json.contains("\"format_version\": 1"));
        let back: SenseModel = serde_json::from_str(&json).unwrap();
        assert_eq!(back, m);
        assert!(back
            .assignments
            .unwrap()
            .iter()
            .all(|a| (1..=2).contains(&a.cluster)));
    }
}
