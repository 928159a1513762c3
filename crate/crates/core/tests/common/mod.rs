// shared by several test targets; not every target uses every oracle
#![allow(dead_code)]

//! Independent oracles shared by the integration and acceptance tests.
//!
//! Nothing here reuses the solver paths under test: the coding oracle
//! enumerates sign patterns and solves restricted normal equations, the
//! margin oracle enumerates index subsets, and the eigenvalue oracle is a
//! self-contained cyclic Jacobi sweep.

use nalgebra::{DMatrix, DVector};
use sparse_transfer::dict::Dictionary;
use sparse_transfer::rng::{stream, Stream};

use rand::Rng;
use rand_distr::StandardNormal;

/// Brute-force coding oracle: enumerate all 3^m sign patterns, solve each
/// restricted quadratic exactly, keep sign-consistent KKT points, and return
/// the candidate with the smallest objective. Intended for `m <= 3`.
pub fn sign_pattern_oracle(dict: &Dictionary, x: &DVector<f64>, lambda: f64) -> Option<Vec<f64>> {
    let m = dict.size();
    assert!(m <= 6, "oracle is exponential in m");
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut pattern = vec![0i8; m];
    enumerate_patterns(dict, x, lambda, &mut pattern, 0, &mut best);
    best.map(|(_, z)| z)
}

fn enumerate_patterns(
    dict: &Dictionary,
    x: &DVector<f64>,
    lambda: f64,
    pattern: &mut Vec<i8>,
    depth: usize,
    best: &mut Option<(f64, Vec<f64>)>,
) {
    let m = dict.size();
    if depth == m {
        if let Some(z) = try_pattern(dict, x, lambda, pattern) {
            let objective = oracle_objective(dict, x, lambda, &z);
            if best.as_ref().map(|(o, _)| objective < *o).unwrap_or(true) {
                *best = Some((objective, z));
            }
        }
        return;
    }
    for sign in [0i8, 1, -1] {
        pattern[depth] = sign;
        enumerate_patterns(dict, x, lambda, pattern, depth + 1, best);
    }
}

fn try_pattern(
    dict: &Dictionary,
    x: &DVector<f64>,
    lambda: f64,
    pattern: &[i8],
) -> Option<Vec<f64>> {
    let m = dict.size();
    let active: Vec<usize> = (0..m).filter(|&j| pattern[j] != 0).collect();
    let mut z = vec![0.0; m];
    if !active.is_empty() {
        let k = active.len();
        let cols = dict.columns();
        let gram = DMatrix::from_fn(k, k, |a, b| {
            dict.column(active[a]).dot(&dict.column(active[b]))
        });
        let rhs = DVector::from_fn(k, |a, _| {
            let mut dot = 0.0;
            for r in 0..x.len() {
                dot += cols[(r, active[a])] * x[r];
            }
            dot - lambda * pattern[active[a]] as f64
        });
        let solution = gram.lu().solve(&rhs)?;
        for (a, &j) in active.iter().enumerate() {
            // the restricted solution must take the assumed signs
            if solution[a] * pattern[j] as f64 <= 0.0 {
                return None;
            }
            z[j] = solution[a];
        }
    }
    // inactive coordinates must satisfy the correlation condition
    let recon = dict.columns() * DVector::from_column_slice(&z);
    let residual = x - recon;
    for (j, &sign) in pattern.iter().enumerate() {
        if sign == 0 {
            let corr = dict.column(j).dot(&residual);
            if corr.abs() > lambda + 1e-9 {
                return None;
            }
        }
    }
    Some(z)
}

fn oracle_objective(dict: &Dictionary, x: &DVector<f64>, lambda: f64, z: &[f64]) -> f64 {
    let recon = dict.columns() * DVector::from_column_slice(z);
    let residual = x - recon;
    0.5 * residual.norm_squared() + lambda * z.iter().map(|v| v.abs()).sum::<f64>()
}

/// Margin oracle: max over size-(m-k) subsets of the minimum of
/// `lambda - c_j`, enumerated recursively over the same correlation values.
pub fn margin_by_enumeration(correlations: &[f64], lambda: f64, k: usize) -> f64 {
    let m = correlations.len();
    let keep = m - k;
    let mut chosen = Vec::with_capacity(keep);
    let mut best = f64::NEG_INFINITY;
    enumerate_subsets(correlations, lambda, keep, 0, &mut chosen, &mut best);
    best
}

fn enumerate_subsets(
    correlations: &[f64],
    lambda: f64,
    keep: usize,
    start: usize,
    chosen: &mut Vec<usize>,
    best: &mut f64,
) {
    if chosen.len() == keep {
        let worst = chosen
            .iter()
            .map(|&j| lambda - correlations[j])
            .fold(f64::INFINITY, f64::min);
        if worst > *best {
            *best = worst;
        }
        return;
    }
    let m = correlations.len();
    let remaining = keep - chosen.len();
    for j in start..=(m - remaining) {
        chosen.push(j);
        enumerate_subsets(correlations, lambda, keep, j + 1, chosen, best);
        chosen.pop();
    }
}

/// Smallest eigenvalue of a symmetric matrix by cyclic Jacobi rotations.
pub fn jacobi_min_eigenvalue(matrix: &DMatrix<f64>) -> f64 {
    let n = matrix.nrows();
    assert_eq!(n, matrix.ncols());
    let mut a = matrix.clone();
    for _ in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[(p, q)] * a[(p, q)];
            }
        }
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if a[(p, q)].abs() < 1e-300 {
                    continue;
                }
                let theta = 0.5 * (2.0 * a[(p, q)]).atan2(a[(q, q)] - a[(p, p)]);
                let (s, c) = theta.sin_cos();
                for r in 0..n {
                    let arp = a[(r, p)];
                    let arq = a[(r, q)];
                    a[(r, p)] = c * arp - s * arq;
                    a[(r, q)] = s * arp + c * arq;
                }
                for r in 0..n {
                    let apr = a[(p, r)];
                    let aqr = a[(q, r)];
                    a[(p, r)] = c * apr - s * aqr;
                    a[(q, r)] = s * apr + c * aqr;
                }
            }
        }
    }
    (0..n).map(|i| a[(i, i)]).fold(f64::INFINITY, f64::min)
}

/// A seeded Gaussian sample vector.
pub fn gaussian_vector(d: usize, rng: &mut Stream) -> DVector<f64> {
    DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// A seeded random coding problem with unit-column dictionary and a
/// regularization weight at the given fraction of `||D^T x||_inf`.
pub fn random_problem(
    seed: u64,
    d: usize,
    m: usize,
    lambda_ratio: f64,
) -> (Dictionary, DVector<f64>, f64) {
    let mut rng = stream(seed, 0);
    let dict = Dictionary::random_unit_columns(d, m, &mut rng).unwrap();
    let x = gaussian_vector(d, &mut rng);
    let lambda = lambda_ratio * dict.correlations(&x).amax();
    (dict, x, lambda)
}

/// Euclidean distance between a code vector and a plain slice.
pub fn l2_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}
