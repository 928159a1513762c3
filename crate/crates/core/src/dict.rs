//! Dictionaries, matrix norms, and incoherence/conditioning diagnostics.
//!
//! A dictionary is a `d x m` real matrix with unit Euclidean columns. Its
//! Gram matrix is computed once at construction and shared immutably by all
//! diagnostics.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use rand::Rng;
use rand_distr::StandardNormal;

/// Column norms are accepted as unit when within this tolerance; constructors
/// renormalize so the stored columns are exact to machine precision.
pub const UNIT_NORM_TOL: f64 = 1e-10;

/// A `d x m` matrix with unit-norm columns. Immutable after construction.
#[derive(Clone, Debug, PartialEq)]
pub struct Dictionary {
    columns: DMatrix<f64>,
    gram: DMatrix<f64>,
}

impl Dictionary {
    /// Build a dictionary from an arbitrary matrix, renormalizing each column.
    /// Columns with norm below [`UNIT_NORM_TOL`] are rejected.
    pub fn from_matrix(mut columns: DMatrix<f64>) -> Result<Self> {
        let (d, m) = columns.shape();
        if d == 0 || m == 0 {
            return Err(Error::Dimension(format!(
                "dictionary must have d >= 1 and m >= 1, got {d} x {m}"
            )));
        }
        for j in 0..m {
            let norm = columns.column(j).norm();
            if norm < UNIT_NORM_TOL {
                return Err(Error::InvalidArgument(format!(
                    "column {j} has norm {norm:.3e}, cannot normalize"
                )));
            }
            // columns already unit within tolerance keep their exact bits,
            // so text round-trips reproduce the stored matrix
            if (norm - 1.0).abs() > UNIT_NORM_TOL {
                let mut col = columns.column_mut(j);
                col /= norm;
            }
        }
        let gram = columns.transpose() * &columns;
        Ok(Self { columns, gram })
    }

    /// Ambient dimension `d`.
    pub fn ambient_dim(&self) -> usize {
        self.columns.nrows()
    }

    /// Dictionary size `m`.
    pub fn size(&self) -> usize {
        self.columns.ncols()
    }

    pub fn columns(&self) -> &DMatrix<f64> {
        &self.columns
    }

    pub fn column(&self, j: usize) -> DVector<f64> {
        self.columns.column(j).into_owned()
    }

    /// Gram matrix `D^T D`, computed once at construction.
    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    /// Correlations of every atom with a vector: `D^T v`.
    pub fn correlations(&self, v: &DVector<f64>) -> DVector<f64> {
        self.columns.transpose() * v
    }

    /// Check the unit-norm invariant.
    pub fn validate(&self) -> Result<()> {
        for j in 0..self.size() {
            let norm = self.columns.column(j).norm();
            if (norm - 1.0).abs() > UNIT_NORM_TOL {
                return Err(Error::InvalidArgument(format!(
                    "column {j} has norm {norm} (unit within {UNIT_NORM_TOL} required)"
                )));
            }
        }
        Ok(())
    }

    /// Dictionary with independent standard Gaussian columns, normalized.
    pub fn random_unit_columns<R: Rng>(d: usize, m: usize, rng: &mut R) -> Result<Self> {
        if d == 0 || m == 0 {
            return Err(Error::Dimension("d and m must be >= 1".into()));
        }
        let columns = DMatrix::from_fn(d, m, |_, _| rng.sample::<f64, _>(StandardNormal));
        Self::from_matrix(columns)
    }

    /// Dictionary whose columns are orthonormal (QR of a Gaussian matrix).
    /// Requires `m <= d`; the resulting incoherence constant is zero.
    pub fn random_orthonormal<R: Rng>(d: usize, m: usize, rng: &mut R) -> Result<Self> {
        if m > d {
            return Err(Error::Dimension(format!(
                "orthonormal dictionary needs m <= d, got m={m}, d={d}"
            )));
        }
        // Gram-Schmidt with redraw on near-dependence.
        let mut basis: Vec<DVector<f64>> = Vec::with_capacity(m);
        while basis.len() < m {
            let mut v = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
            for b in &basis {
                let c = b.dot(&v);
                v -= b * c;
            }
            let norm = v.norm();
            if norm > 1e-8 {
                basis.push(v / norm);
            }
        }
        let columns = DMatrix::from_fn(d, m, |i, j| basis[j][i]);
        Self::from_matrix(columns)
    }

    /// Dictionary with exactly prescribed incoherence constant `mu`.
    ///
    /// Columns are `sqrt(1-s) e_j + sqrt(s) v` for an orthonormal family
    /// `{e_1..e_m, v}`, so every off-diagonal Gram entry equals
    /// `s = mu / sqrt(d)` exactly. Requires `m + 1 <= d` and
    /// `0 <= mu < sqrt(d)`.
    pub fn with_incoherence<R: Rng>(d: usize, m: usize, mu: f64, rng: &mut R) -> Result<Self> {
        if m + 1 > d {
            return Err(Error::Dimension(format!(
                "incoherent construction needs m + 1 <= d, got m={m}, d={d}"
            )));
        }
        let s = mu / (d as f64).sqrt();
        if !(0.0..1.0).contains(&s) {
            return Err(Error::InvalidArgument(format!(
                "mu={mu} gives off-diagonal {s}, must lie in [0, 1)"
            )));
        }
        let base = Self::random_orthonormal(d, m + 1, rng)?;
        let shared = base.column(m);
        let (w_e, w_v) = ((1.0 - s).sqrt(), s.sqrt());
        let columns = DMatrix::from_fn(d, m, |i, j| w_e * base.columns[(i, j)] + w_v * shared[i]);
        Self::from_matrix(columns)
    }

    /// Write in the text matrix format (see [`write_matrix`]).
    pub fn write_text<W: Write>(&self, w: W) -> Result<()> {
        write_matrix(&self.columns, w)
    }

    /// Read from the text matrix format, validating/renormalizing columns.
    pub fn read_text<R: Read>(r: R) -> Result<Self> {
        Self::from_matrix(read_matrix(r)?)
    }

    pub fn write_text_file<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_text(std::io::BufWriter::new(file))
    }

    pub fn read_text_file<P: AsRef<Path>>(path: P) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_text(BufReader::new(file))
    }
}

/// Incoherence diagnostics of a dictionary.
#[derive(Clone, Debug, serde::Serialize)]
pub struct IncoherenceReport {
    /// Smallest `mu` with every off-diagonal Gram entry `<= mu / sqrt(d)`.
    pub mu: f64,
    /// Largest `|<d_i, d_j>|` over `i != j` (zero when `m = 1`).
    pub max_offdiag: f64,
    /// Minimum over size-`k` supports of the smallest eigenvalue of the
    /// support-restricted Gram, clamped to `[0, 1]`. Filled on request.
    pub restricted_eig_min: Option<f64>,
}

impl IncoherenceReport {
    /// Attach the exhaustive restricted-eigenvalue diagnostic for sparsity `k`.
    pub fn with_restricted_eigenvalue(mut self, dict: &Dictionary, k: usize) -> Result<Self> {
        let eig = restricted_eigenvalue(dict, k)?;
        self.restricted_eig_min = Some(eig.clamp(0.0, 1.0));
        Ok(self)
    }
}

/// The (1,2)-induced norm: maximum Euclidean column norm.
pub fn induced_norm_1_2(matrix: &DMatrix<f64>) -> Result<f64> {
    if matrix.ncols() == 0 || matrix.nrows() == 0 {
        return Err(Error::Dimension(
            "induced (1,2) norm needs at least one column".into(),
        ));
    }
    Ok((0..matrix.ncols())
        .map(|j| matrix.column(j).norm())
        .fold(0.0, f64::max))
}

/// Distance between two dictionaries in the (1,2) norm.
pub fn dict_distance(a: &Dictionary, b: &Dictionary) -> Result<f64> {
    if a.ambient_dim() != b.ambient_dim() || a.size() != b.size() {
        return Err(Error::Dimension(format!(
            "dictionary shapes differ: {}x{} vs {}x{}",
            a.ambient_dim(),
            a.size(),
            b.ambient_dim(),
            b.size()
        )));
    }
    induced_norm_1_2(&(a.columns() - b.columns()))
}

/// Tightest incoherence constant of a dictionary.
///
/// `mu = max_offdiag * sqrt(d)`; for `m = 1` both are zero.
pub fn mu_incoherence(dict: &Dictionary) -> IncoherenceReport {
    let gram = dict.gram();
    let m = dict.size();
    let mut max_offdiag: f64 = 0.0;
    for i in 0..m {
        for j in (i + 1)..m {
            max_offdiag = max_offdiag.max(gram[(i, j)].abs());
        }
    }
    IncoherenceReport {
        mu: max_offdiag * (dict.ambient_dim() as f64).sqrt(),
        max_offdiag,
        restricted_eig_min: None,
    }
}

/// Default cap on the number of supports enumerated by
/// [`restricted_eigenvalue`].
pub const DEFAULT_SUPPORT_BUDGET: u128 = 100_000;

/// Minimum over all size-`k` supports of the smallest eigenvalue of the
/// support-restricted Gram, by exhaustive enumeration.
///
/// This equals the squared smallest singular value over all `k`-column
/// submatrices, so a positive value certifies that every `k`-sparse vector
/// is well conditioned; no separate singular-value sweep is provided.
pub fn restricted_eigenvalue(dict: &Dictionary, k: usize) -> Result<f64> {
    restricted_eigenvalue_with_budget(dict, k, DEFAULT_SUPPORT_BUDGET)
}

/// As [`restricted_eigenvalue`] with an explicit enumeration budget.
pub fn restricted_eigenvalue_with_budget(dict: &Dictionary, k: usize, budget: u128) -> Result<f64> {
    let m = dict.size();
    if k == 0 || k > m {
        return Err(Error::InvalidArgument(format!(
            "sparsity k={k} must satisfy 1 <= k <= m={m}"
        )));
    }
    let count = binomial(m, k);
    if count > budget {
        return Err(Error::BudgetExceeded {
            required: count,
            budget,
        });
    }
    let gram = dict.gram();
    let mut min_eig = f64::INFINITY;
    for support in Combinations::new(m, k) {
        let sub = DMatrix::from_fn(k, k, |a, b| gram[(support[a], support[b])]);
        let eigs = SymmetricEigen::new(sub).eigenvalues;
        min_eig = min_eig.min(eigs.iter().copied().fold(f64::INFINITY, f64::min));
    }
    Ok(min_eig)
}

/// Margin of the strong irrepresentation condition for a signed support.
///
/// Returns `min_i (1 - |(G_21 G_11^{-1} signs)_i|)` over off-support rows,
/// where `G_11`/`G_21` are the support and cross blocks of the Gram matrix.
/// A positive value certifies the condition. When the support covers every
/// column the condition is vacuous and the margin is `1`.
pub fn irrepresentation_margin(dict: &Dictionary, support: &[usize], signs: &[f64]) -> Result<f64> {
    let m = dict.size();
    if support.is_empty() {
        return Err(Error::InvalidArgument("support must be nonempty".into()));
    }
    if support.len() != signs.len() {
        return Err(Error::Dimension(format!(
            "support has {} indices but {} signs given",
            support.len(),
            signs.len()
        )));
    }
    let mut seen = vec![false; m];
    for &i in support {
        if i >= m {
            return Err(Error::InvalidArgument(format!(
                "support index {i} out of range for m={m}"
            )));
        }
        if seen[i] {
            return Err(Error::InvalidArgument(format!(
                "support index {i} repeated"
            )));
        }
        seen[i] = true;
    }
    for &s in signs {
        if s != 1.0 && s != -1.0 {
            return Err(Error::InvalidArgument(format!(
                "signs must be +1 or -1, got {s}"
            )));
        }
    }
    let gram = dict.gram();
    let k = support.len();
    let g11 = DMatrix::from_fn(k, k, |a, b| gram[(support[a], support[b])]);
    let rhs = DVector::from_row_slice(signs);
    let chol = nalgebra::Cholesky::new(g11)
        .ok_or_else(|| Error::Conditioning("support Gram block is not positive definite".into()))?;
    let u = chol.solve(&rhs);
    let off: Vec<usize> = (0..m).filter(|i| !seen[*i]).collect();
    if off.is_empty() {
        return Ok(1.0);
    }
    let mut margin = f64::INFINITY;
    for &row in &off {
        let mut dot = 0.0;
        for (a, &col) in support.iter().enumerate() {
            dot += gram[(row, col)] * u[a];
        }
        margin = margin.min(1.0 - dot.abs());
    }
    Ok(margin)
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul((n - i) as u128) / (i as u128 + 1);
    }
    acc
}

/// Lexicographic enumeration of size-`k` subsets of `0..n`.
pub struct Combinations {
    n: usize,
    state: Vec<usize>,
    done: bool,
}

impl Combinations {
    pub fn new(n: usize, k: usize) -> Self {
        Self {
            n,
            state: (0..k).collect(),
            done: k > n,
        }
    }
}

impl Iterator for Combinations {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.done {
            return None;
        }
        let current = self.state.clone();
        let k = self.state.len();
        // advance to the next combination
        let mut i = k;
        loop {
            if i == 0 {
                self.done = true;
                break;
            }
            i -= 1;
            if self.state[i] < self.n - (k - i) {
                self.state[i] += 1;
                for j in (i + 1)..k {
                    self.state[j] = self.state[j - 1] + 1;
                }
                break;
            }
        }
        if k == 0 {
            self.done = true;
        }
        Some(current)
    }
}

/// Write a matrix as text: first line `d m`, then `d` rows of `m`
/// space-separated values at 17 significant digits (exact f64 round-trip).
pub fn write_matrix<W: Write>(matrix: &DMatrix<f64>, mut w: W) -> Result<()> {
    let (d, m) = matrix.shape();
    let mut buf = String::new();
    writeln!(buf, "{d} {m}").expect("write to string");
    for i in 0..d {
        for j in 0..m {
            if j > 0 {
                buf.push(' ');
            }
            write!(buf, "{:.16e}", matrix[(i, j)]).expect("write to string");
        }
        buf.push('\n');
    }
    w.write_all(buf.as_bytes())?;
    Ok(())
}

/// Read a matrix in the text format produced by [`write_matrix`].
pub fn read_matrix<R: Read>(r: R) -> Result<DMatrix<f64>> {
    let reader = BufReader::new(r);
    let mut lines = reader.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| Error::Parse {
        line: 1,
        message: "empty input".into(),
    })?;
    let header = header?;
    let mut parts = header.split_whitespace();
    let parse_dim = |tok: Option<&str>, line: usize| -> Result<usize> {
        tok.ok_or_else(|| Error::Parse {
            line,
            message: "header must be 'd m'".into(),
        })?
        .parse()
        .map_err(|e| Error::Parse {
            line,
            message: format!("bad dimension: {e}"),
        })
    };
    let d = parse_dim(parts.next(), 1)?;
    let m = parse_dim(parts.next(), 1)?;
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(d);
    for (idx, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row: std::result::Result<Vec<f64>, _> =
            line.split_whitespace().map(str::parse::<f64>).collect();
        let row = row.map_err(|e| Error::Parse {
            line: idx + 1,
            message: format!("bad value: {e}"),
        })?;
        if row.len() != m {
            return Err(Error::Parse {
                line: idx + 1,
                message: format!("expected {m} values, found {}", row.len()),
            });
        }
        rows.push(row);
        if rows.len() == d {
            break;
        }
    }
    if rows.len() != d {
        return Err(Error::Parse {
            line: d + 1,
            message: format!("expected {d} rows, found {}", rows.len()),
        });
    }
    Ok(DMatrix::from_fn(d, m, |i, j| rows[i][j]))
}
