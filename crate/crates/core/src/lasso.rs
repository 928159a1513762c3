//! The l1-regularized least-squares sparse coder and its optimality
//! certificates.
//!
//! `solve` runs cyclic coordinate descent with exact soft-threshold updates
//! and certifies the result through the KKT conditions: every returned code
//! satisfies `|<d_j, x - D a>| <= lambda + tol` and, on the support,
//! `<d_j, x - D a> = sign(a_j) lambda` within `tol`.

use nalgebra::DVector;
use serde::ser::{SerializeMap, SerializeStruct};
use serde::{Serialize, Serializer};

use crate::dict::Dictionary;
use crate::error::{Error, Result};

/// One sparse-coding instance: dictionary, sample, and regularization weight.
#[derive(Clone, Copy, Debug)]
pub struct LassoProblem<'a> {
    pub dict: &'a Dictionary,
    pub x: &'a DVector<f64>,
    pub lambda: f64,
}

impl<'a> LassoProblem<'a> {
    pub fn new(dict: &'a Dictionary, x: &'a DVector<f64>, lambda: f64) -> Result<Self> {
        if x.len() != dict.ambient_dim() {
            return Err(Error::Dimension(format!(
                "sample has length {}, dictionary ambient dimension is {}",
                x.len(),
                dict.ambient_dim()
            )));
        }
        if !lambda.is_finite() || lambda <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "lambda must be positive, got {lambda}"
            )));
        }
        Ok(Self { dict, x, lambda })
    }
}

/// A certified solver output.
#[derive(Clone, Debug)]
pub struct SparseCode {
    pub coefficients: Vec<f64>,
    /// Indices of exactly nonzero coefficients.
    pub support: Vec<usize>,
    /// Maximum KKT violation at return.
    pub kkt_residual: f64,
    /// Objective value at the returned code.
    pub objective: f64,
    /// Coordinate sweeps performed.
    pub iterations: usize,
}

/// Codes serialize sparsely: `coefficients` becomes an object of
/// `index: value` pairs over the support, with the dense length in `size`.
impl Serialize for SparseCode {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        struct SparsePairs<'a>(&'a SparseCode);
        impl Serialize for SparsePairs<'_> {
            fn serialize<S: Serializer>(
                &self,
                serializer: S,
            ) -> std::result::Result<S::Ok, S::Error> {
                let mut map = serializer.serialize_map(Some(self.0.support.len()))?;
                for &i in &self.0.support {
                    map.serialize_entry(&i.to_string(), &self.0.coefficients[i])?;
                }
                map.end()
            }
        }
        let mut state = serializer.serialize_struct("SparseCode", 6)?;
        state.serialize_field("size", &self.coefficients.len())?;
        state.serialize_field("coefficients", &SparsePairs(self))?;
        state.serialize_field("support", &self.support)?;
        state.serialize_field("kkt_residual", &self.kkt_residual)?;
        state.serialize_field("objective", &self.objective)?;
        state.serialize_field("iterations", &self.iterations)?;
        state.end()
    }
}

impl SparseCode {
    pub fn coefficients_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.coefficients)
    }

    pub fn l1_norm(&self) -> f64 {
        self.coefficients.iter().map(|v| v.abs()).sum()
    }
}

/// Solver controls. `tol` bounds the final KKT violation; iterating past
/// `max_iter` sweeps is a convergence error.
#[derive(Clone, Debug)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Optional initial iterate (defaults to the zero vector).
    pub warm_start: Option<Vec<f64>>,
    /// Visit coordinates in reverse order; exposed to check uniqueness.
    pub reverse_order: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 100_000,
            warm_start: None,
            reverse_order: false,
        }
    }
}

fn soft_threshold(u: f64, lambda: f64) -> f64 {
    if u > lambda {
        u - lambda
    } else if u < -lambda {
        u + lambda
    } else {
        0.0
    }
}

/// Solve with default options overridden by the given tolerance and sweep cap.
pub fn solve(problem: &LassoProblem<'_>, tol: f64, max_iter: usize) -> Result<SparseCode> {
    solve_with(
        problem,
        &SolverOptions {
            tol,
            max_iter,
            ..SolverOptions::default()
        },
    )
}

/// Cyclic coordinate descent with exact per-coordinate soft-threshold updates.
pub fn solve_with(problem: &LassoProblem<'_>, opts: &SolverOptions) -> Result<SparseCode> {
    if !opts.tol.is_finite() || opts.tol <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "tol must be positive, got {}",
            opts.tol
        )));
    }
    if opts.max_iter == 0 {
        return Err(Error::InvalidArgument("max_iter must be >= 1".into()));
    }
    let m = problem.dict.size();
    let lambda = problem.lambda;

    if problem.x.iter().all(|v| *v == 0.0) {
        return Ok(finish(problem, vec![0.0; m], 0.0, 0));
    }

    let gram = problem.dict.gram();
    let b = problem.dict.correlations(problem.x);

    let mut a: Vec<f64> = match &opts.warm_start {
        Some(w) => {
            if w.len() != m {
                return Err(Error::Dimension(format!(
                    "warm start has length {}, dictionary size is {m}",
                    w.len()
                )));
            }
            w.clone()
        }
        None => vec![0.0; m],
    };
    // residual correlations c_j = <d_j, x - D a>
    let mut c: Vec<f64> = (0..m)
        .map(|j| b[j] - (0..m).map(|i| gram[(j, i)] * a[i]).sum::<f64>())
        .collect();

    let mut kkt = f64::INFINITY;
    for sweep in 1..=opts.max_iter {
        for step in 0..m {
            let j = if opts.reverse_order {
                m - 1 - step
            } else {
                step
            };
            // unit-norm columns make the quadratic coefficient 1
            let u = c[j] + a[j];
            let new = soft_threshold(u, lambda);
            if new != a[j] {
                let delta = new - a[j];
                a[j] = new;
                for i in 0..m {
                    c[i] -= delta * gram[(i, j)];
                }
            }
        }
        // recompute residual correlations exactly to stop incremental drift
        for j in 0..m {
            c[j] = b[j] - (0..m).map(|i| gram[(j, i)] * a[i]).sum::<f64>();
        }
        kkt = kkt_violation(&a, &c, lambda);
        if kkt <= opts.tol {
            return Ok(finish(problem, a, kkt, sweep));
        }
    }
    Err(Error::Convergence {
        iterations: opts.max_iter,
        residual: kkt,
        best: a,
    })
}

fn kkt_violation(a: &[f64], c: &[f64], lambda: f64) -> f64 {
    let mut worst: f64 = 0.0;
    for (aj, cj) in a.iter().zip(c.iter()) {
        let v = if *aj != 0.0 {
            (cj - aj.signum() * lambda).abs()
        } else {
            (cj.abs() - lambda).max(0.0)
        };
        worst = worst.max(v);
    }
    worst
}

fn finish(problem: &LassoProblem<'_>, a: Vec<f64>, kkt: f64, iterations: usize) -> SparseCode {
    let support: Vec<usize> = a
        .iter()
        .enumerate()
        .filter(|(_, v)| **v != 0.0)
        .map(|(i, _)| i)
        .collect();
    let objective = objective_unchecked(problem, &a);
    SparseCode {
        coefficients: a,
        support,
        kkt_residual: kkt,
        objective,
        iterations,
    }
}

/// Objective `0.5 ||x - D z||^2 + lambda ||z||_1` at an arbitrary point.
pub fn objective(problem: &LassoProblem<'_>, z: &[f64]) -> Result<f64> {
    if z.len() != problem.dict.size() {
        return Err(Error::Dimension(format!(
            "code has length {}, dictionary size is {}",
            z.len(),
            problem.dict.size()
        )));
    }
    Ok(objective_unchecked(problem, z))
}

fn objective_unchecked(problem: &LassoProblem<'_>, z: &[f64]) -> f64 {
    let recon = problem.dict.columns() * DVector::from_column_slice(z);
    let residual = problem.x - recon;
    0.5 * residual.norm_squared() + problem.lambda * z.iter().map(|v| v.abs()).sum::<f64>()
}

/// Residual correlations `<d_j, x - D a>` for a given code.
pub fn residual_correlations(problem: &LassoProblem<'_>, code: &[f64]) -> Result<DVector<f64>> {
    if code.len() != problem.dict.size() {
        return Err(Error::Dimension(format!(
            "code has length {}, dictionary size is {}",
            code.len(),
            problem.dict.size()
        )));
    }
    let recon = problem.dict.columns() * DVector::from_column_slice(code);
    Ok(problem.dict.correlations(&(problem.x - recon)))
}

/// Gap in the subgradient identity `lambda ||a||_1 = <x - D a, D a>`.
///
/// Vanishes at any exact solution; at a certified solution it is bounded by a
/// multiple of the solver tolerance.
pub fn subgradient_identity_gap(problem: &LassoProblem<'_>, code: &SparseCode) -> f64 {
    let a = code.coefficients_vector();
    let recon = problem.dict.columns() * &a;
    let lhs = problem.lambda * code.l1_norm();
    let rhs = (problem.x - &recon).dot(&recon);
    (lhs - rhs).abs()
}

/// Optimal value of the sparse-coding objective (solves with the defaults).
pub fn optimal_value(problem: &LassoProblem<'_>) -> Result<f64> {
    let opts = SolverOptions::default();
    Ok(solve_with(problem, &opts)?.objective)
}
