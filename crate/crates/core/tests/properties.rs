use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use polysemy::context::{context_subspace, subspace_distance, Subspace};
use polysemy::disambig::{hard_decode, softmax_of_distances};
use polysemy::embeddings::{cosine, EmbeddingTable, LoadOptions};
use polysemy::grassmeans::{SenseModel, FORMAT_VERSION};
use polysemy::lexeme::power_score;
use polysemy::linalg::{dot, orthonormalize, random_unit};
use polysemy::metrics::{build_contingency, paired_f_score, v_measure};

fn vector(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, dim).prop_filter("nonzero", |v| dot(v, v) > 1e-6)
}

fn table_of(rows: &[Vec<f64>]) -> (EmbeddingTable, Vec<String>) {
    let words: Vec<String> = (0..rows.len()).map(|i| format!("w{i}")).collect();
    let t = EmbeddingTable::from_entries(
        rows[0].len(),
        words.iter().cloned().zip(rows.iter().cloned()),
    )
    .unwrap();
    (t, words)
}

fn random_orthogonal(seed: u64, dim: usize) -> Vec<Vec<f64>> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let q = orthonormalize(
            &(0..dim)
                .map(|_| random_unit(&mut r, dim))
                .collect::<Vec<_>>(),
        );
        if q.len() == dim {
            return q;
        }
    }
}

fn apply(q: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    q.iter().map(|row| dot(row, v)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cosine_symmetric_and_scale_invariant(u in vector(6), v in vector(6), a in 0.1f64..10.0) {
        let c = cosine(&u, &v).unwrap();
        prop_assert!((c - cosine(&v, &u).unwrap()).abs() < 1e-12);
        let scaled: Vec<f64> = u.iter().map(|x| a * x).collect();
        prop_assert!((c - cosine(&scaled, &v).unwrap()).abs() < 1e-9);
        prop_assert!((-1.0..=1.0).contains(&c));
    }

    #[test]
    fn subspace_basis_is_orthonormal(rows in prop::collection::vec(vector(8), 1..12), rank in 1usize..6) {
        let (t, words) = table_of(&rows);
        let s = context_subspace(&words, &t, rank).unwrap();
        for (i, a) in s.basis().iter().enumerate() {
            for (j, b) in s.basis().iter().enumerate() {
                let want = if i == j { 1.0 } else { 0.0 };
                prop_assert!((dot(a, b) - want).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn distance_shrinks_with_rank(rows in prop::collection::vec(vector(8), 2..12), u in vector(8)) {
        let (t, words) = table_of(&rows);
        let n = dot(&u, &u).sqrt();
        let u: Vec<f64> = u.iter().map(|x| x / n).collect();
        let mut prev = f64::INFINITY;
        for rank in 1..=5 {
            let d = subspace_distance(&u, &context_subspace(&words, &t, rank).unwrap()).unwrap();
            prop_assert!(d <= prev + 1e-9);
            prev = d;
        }
    }

    #[test]
    fn distances_are_rotation_invariant(rows in prop::collection::vec(vector(5), 2..8), u in vector(5), seed in any::<u64>()) {
        let q = random_orthogonal(seed, 5);
        let n = dot(&u, &u).sqrt();
        let u: Vec<f64> = u.iter().map(|x| x / n).collect();
        let (t, words) = table_of(&rows);
        let rotated: Vec<Vec<f64>> = rows.iter().map(|r| apply(&q, r)).collect();
        let (tq, _) = table_of(&rotated);
        let d = subspace_distance(&u, &context_subspace(&words, &t, 2).unwrap()).unwrap();
        let dq = subspace_distance(&apply(&q, &u), &context_subspace(&words, &tq, 2).unwrap()).unwrap();
        prop_assert!((d - dq).abs() <= 1e-6);
    }

    #[test]
    fn metrics_ignore_label_names(pairs in prop::collection::vec((0usize..4, 0usize..4), 1..40), shift in 1usize..10) {
        let gold: Vec<usize> = pairs.iter().map(|p| p.0).collect();
        let pred: Vec<usize> = pairs.iter().map(|p| p.1).collect();
        let renamed: Vec<usize> = pred.iter().map(|p| (p + shift) * 7).collect();
        let a = build_contingency(&gold, &pred).unwrap();
        let b = build_contingency(&gold, &renamed).unwrap();
        prop_assert!((v_measure(&a).v - v_measure(&b).v).abs() < 1e-12);
        prop_assert!((paired_f_score(&a).f - paired_f_score(&b).f).abs() < 1e-12);
        // swapping roles swaps homogeneity and completeness
        let t = build_contingency(&pred, &gold).unwrap();
        prop_assert!((v_measure(&a).homogeneity - v_measure(&t).completeness).abs() < 1e-9);
    }

    #[test]
    fn soft_argmax_matches_hard(seed in any::<u64>(), k in 2usize..6, beta in 0.1f64..100.0) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let m = SenseModel {
            format_version: FORMAT_VERSION,
            target: "w".into(),
            k,
            rank: 2,
            window: 10,
            restarts: 1,
            seed: 0,
            objective: 0.0,
            directions: (0..k).map(|_| random_unit(&mut r, 7)).collect(),
            assignments: None,
        };
        let s = Subspace::from_spanning(&[random_unit(&mut r, 7), random_unit(&mut r, 7)]).unwrap();
        let d: Vec<f64> = m.directions.iter().map(|u| s.distance_to_unit(u)).collect();
        let p = softmax_of_distances(&d, beta);
        prop_assert_eq!(p.argmax(), hard_decode(&m, &s).unwrap().0);
        prop_assert!((p.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn power_score_grows_with_alignment(defining in prop::collection::vec(vector(4), 1..5), v in vector(4), p in 1.0f64..6.0) {
        // adding a multiple of the first defining vector's direction to a
        // vector already aligned with it raises that term and the score
        let refs: Vec<&[f64]> = defining.iter().map(Vec::as_slice).collect();
        let sign = dot(&v, &defining[0]).signum();
        let boosted: Vec<f64> = v.iter().zip(&defining[0]).map(|(a, b)| a + sign * b).collect();
        let same_sign = defining[1..].iter().all(|d| dot(&v, d) * dot(&defining[0], d) * sign >= 0.0);
        prop_assume!(same_sign && dot(&v, &defining[0]) != 0.0);
        prop_assert!(power_score(&boosted, &refs, p) >= power_score(&v, &refs, p) - 1e-12);
        prop_assert!(power_score(&v, &refs, f64::INFINITY) <= power_score(&v, &refs, p) + 1e-12);
    }

    #[test]
    fn embedding_text_round_trip(rows in prop::collection::vec(prop::collection::vec(-1e3f64..1e3, 3), 1..10)) {
        let (t, _) = table_of(&rows);
        let mut buf = Vec::new();
        t.write(&mut buf).unwrap();
        let back = EmbeddingTable::read(buf.as_slice(), std::path::Path::new("mem"), LoadOptions::default()).unwrap();
        prop_assert_eq!(back, t);
    }
}
