//! Small dense helpers over `&[f64]` plus the two decompositions the pipeline
//! needs: a thin SVD of a token matrix and the dominant eigenvector of a sum
//! of projectors.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Returns `None` for the zero vector.
pub fn normalized(a: &[f64]) -> Option<Vec<f64>> {
    let n = norm(a);
    if n == 0.0 || !n.is_finite() {
        return None;
    }
    Some(a.iter().map(|x| x / n).collect())
}

/// Uniform sample from the unit sphere in `dim` dimensions.
pub fn random_unit<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        if let Some(u) = normalized(&v) {
            return u;
        }
    }
}

/// Flip sign so the entry of largest magnitude is positive (first one wins on ties).
pub fn canonical_sign(v: &mut [f64]) {
    let mut best = 0usize;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v.get(best).is_some_and(|x| *x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Modified Gram-Schmidt with re-orthogonalisation. Vectors that fall into the
/// span of earlier ones (relative tolerance `1e-10`) are dropped.
pub fn orthonormalize(vectors: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for v in vectors {
        let scale = norm(v);
        if scale == 0.0 {
            continue;
        }
        let mut w = v.clone();
        for _ in 0..2 {
            for b in &basis {
                let c = dot(&w, b);
                w.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
            }
        }
        if norm(&w) > 1e-10 * scale {
            basis.push(normalized(&w).expect("nonzero"));
        }
    }
    basis
}

/// Principal directions of a set of `dim`-dimensional rows, uncentered.
pub struct Principal {
    /// Directions in decreasing singular-value order, numerically nonzero only.
    pub directions: Vec<Vec<f64>>,
    /// Squared singular values matching `directions`.
    pub energy: Vec<f64>,
    /// Squared Frobenius norm of the input.
    pub total_energy: f64,
}

pub fn principal_directions(rows: &[&[f64]], dim: usize) -> Principal {
    let n = rows.len();
    let total_energy: f64 = rows.iter().map(|r| dot(r, r)).sum();
    if n == 0 || total_energy == 0.0 {
        return Principal {
            directions: Vec::new(),
            energy: Vec::new(),
            total_energy,
        };
    }
    // columns are tokens
    let a = DMatrix::from_fn(dim, n, |i, j| rows[j][i]);
    let svd = a.svd(true, false);
    let u = svd.u.expect("requested U");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));

    let smax = svd.singular_values[order[0]];
    let cutoff = smax * (dim.max(n) as f64) * f64::EPSILON * 4.0;
    let mut directions = Vec::new();
    let mut energy = Vec::new();
    for idx in order {
        let s = svd.singular_values[idx];
        if s <= cutoff {
            break;
        }
        let mut col: Vec<f64> = u.column(idx).iter().copied().collect();
        canonical_sign(&mut col);
        directions.push(col);
        energy.push(s * s);
    }
    Principal {
        directions,
        energy,
        total_energy,
    }
}

/// Dominant eigenvector of `sum_i w_i b_i b_i^T` for the given vectors `b_i`
/// (weights default to one). Works in the smaller of the ambient and Gram
/// spaces. Returns the unit eigenvector (canonical sign) and its eigenvalue.
pub fn dominant_direction(
    vectors: &[&[f64]],
    weights: Option<&[f64]>,
    dim: usize,
) -> Option<(Vec<f64>, f64)> {
    let m = vectors.len();
    if m == 0 {
        return None;
    }
    let w = |i: usize| weights.map_or(1.0, |ws| ws[i]);
    let mut dir = if m <= dim {
        // G = W^{1/2} B^T B W^{1/2}; eigvec y maps to B W^{1/2} y
        let g = DMatrix::from_fn(m, m, |i, j| {
            (w(i) * w(j)).sqrt() * dot(vectors[i], vectors[j])
        });
        let eig = SymmetricEigen::new(g);
        let top = argmax(eig.eigenvalues.as_slice())?;
        let y = eig.eigenvectors.column(top);
        let mut v = vec![0.0; dim];
        for (i, b) in vectors.iter().enumerate() {
            let c = y[i] * w(i).sqrt();
            v.iter_mut().zip(b.iter()).for_each(|(x, bi)| *x += c * bi);
        }
        normalized(&v)?
    } else {
        let mut mat = DMatrix::<f64>::zeros(dim, dim);
        for (i, b) in vectors.iter().enumerate() {
            let wi = w(i);
            for r in 0..dim {
                let br = wi * b[r];
                if br == 0.0 {
                    continue;
                }
                for c in 0..dim {
                    mat[(r, c)] += br * b[c];
                }
            }
        }
        let eig = SymmetricEigen::new(mat);
        let top = argmax(eig.eigenvalues.as_slice())?;
        normalized(eig.eigenvectors.column(top).as_slice())?
    };
    canonical_sign(&mut dir);
    let value = vectors
        .iter()
        .enumerate()
        .map(|(i, b)| w(i) * dot(&dir, b).powi(2))
        .sum();
    Some((dir, value))
}

fn argmax(xs: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, x) in xs.iter().enumerate() {
        match best {
            Some(b) if xs[b] >= *x => {}
            _ => best = Some(i),
        }
    }
    best
}

/// SplitMix64 finaliser; used to derive independent stream seeds.
pub(crate) fn mix_seed(parts: &[u64]) -> u64 {
    let mut h: u64 = 0x9E37_79B9_7F4A_7C15;
    for p in parts {
        let mut z = h ^ p.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h = z ^ (z >> 31);
    }
    h
}

pub(crate) fn rng_for(parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix_seed(parts))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sign_rule_makes_largest_entry_positive() {
        let mut v = vec![0.1, -0.9, 0.2];
        canonical_sign(&mut v);
        assert_eq!(v, vec![-0.1, 0.9, -0.2]);
    }

    #[test]
    fn gram_schmidt_drops_dependent_vectors() {
        let b = orthonormalize(&[
            vec![1.0, 0.0, 0.0],
            vec![2.0, 0.0, 0.0],
            vec![1.0, 1.0, 0.0],
        ]);
        assert_eq!(b.len(), 2);
        assert!(dot(&b[0], &b[1]).abs() < 1e-12);
    }

    #[test]
    fn dominant_direction_agrees_in_both_spaces() {
        let mut rng = rng_for(&[7]);
        let vs: Vec<Vec<f64>> = (0..4).map(|_| random_unit(&mut rng, 6)).collect();
        let refs: Vec<&[f64]> = vs.iter().map(|v| v.as_slice()).collect();
        let (a, la) = dominant_direction(&refs, None, 6).unwrap();
        // force the ambient path by repeating vectors past dim
        let rep: Vec<&[f64]> = refs.iter().cycle().take(8).copied().collect();
        let (b, lb) = dominant_direction(&rep, None, 6).unwrap();
        assert!((dot(&a, &b).abs() - 1.0).abs() < 1e-9);
        assert!((2.0 * la - lb).abs() < 1e-9);
    }

    #[test]
    fn svd_of_rank_one_rows() {
        let e1 = [1.0, 0.0, 0.0];
        let p = principal_directions(&[&e1, &e1, &e1], 3);
        assert_eq!(p.directions.len(), 1);
        assert!((p.energy[0] - 3.0).abs() < 1e-12);
        assert!((p.total_energy - 3.0).abs() < 1e-12);
    }
}
