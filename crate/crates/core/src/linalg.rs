//! Dense-matrix primitives: validated construction, numerical rank, orthonormal
//! bases, subspace set operations, and least squares.
//!
//! Conventions used throughout the crate:
//! * numerical rank counts singular values above `RANK_REL_TOL` relative to the
//!   largest one;
//! * subspaces are represented by matrices with orthonormal columns and are
//!   compared through their projectors, never through basis entries (bases are
//!   only unique up to rotation and sign);
//! * principal angles below `ANGLE_TOL` are treated as zero.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative singular-value cutoff for numerical rank decisions.
pub const RANK_REL_TOL: f64 = 1e-10;

/// Principal angles below this are treated as zero when intersecting subspaces.
pub const ANGLE_TOL: f64 = 1e-8;

/// Acceptance tolerance for claimed-orthonormal bases, `‖BᵀB − I‖_∞`.
pub const ORTHONORMAL_TOL: f64 = 1e-8;

/// Checks shape and entry finiteness. `context` names the offending argument
/// in error messages.
pub fn validate(a: &DMatrix<f64>, context: &'static str) -> Result<()> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Err(Error::EmptyMatrix { context });
    }
    for col in 0..a.ncols() {
        for row in 0..a.nrows() {
            if !a[(row, col)].is_finite() {
                return Err(Error::NonFinite { context, row, col });
            }
        }
    }
    Ok(())
}

/// Validated constructor from row-major entries.
pub fn dense(rows: usize, cols: usize, entries: &[f64]) -> Result<DMatrix<f64>> {
    if rows == 0 || cols == 0 {
        return Err(Error::EmptyMatrix { context: "dense" });
    }
    if entries.len() != rows * cols {
        return Err(Error::ShapeMismatch(format!(
            "dense: {rows}x{cols} needs {} entries, got {}",
            rows * cols,
            entries.len()
        )));
    }
    let a = DMatrix::from_row_slice(rows, cols, entries);
    validate(&a, "dense")?;
    Ok(a)
}

/// Numerical rank from the singular spectrum: count of σᵢ > RANK_REL_TOL · σ₁.
pub fn numerical_rank(a: &DMatrix<f64>) -> usize {
    let sv = a.clone().singular_values();
    rank_from_singular_values(sv.as_slice())
}

pub(crate) fn rank_from_singular_values(sv: &[f64]) -> usize {
    let max = sv.iter().cloned().fold(0.0_f64, f64::max);
    if max <= 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > RANK_REL_TOL * max).count()
}

/// A linear subspace of R^ambient, stored as a matrix with orthonormal columns.
/// The zero-dimensional subspace has a basis with zero columns.
#[derive(Debug, Clone)]
pub struct Subspace {
    ambient: usize,
    basis: DMatrix<f64>,
}

impl Subspace {
    /// The zero-dimensional subspace of R^ambient.
    pub fn trivial(ambient: usize) -> Self {
        Subspace {
            ambient,
            basis: DMatrix::zeros(ambient, 0),
        }
    }

    /// Wraps a claimed-orthonormal basis, verifying ‖BᵀB − I‖_∞ ≤ ORTHONORMAL_TOL.
    pub fn from_orthonormal(basis: DMatrix<f64>) -> Result<Self> {
        if basis.nrows() == 0 {
            return Err(Error::EmptyMatrix {
                context: "Subspace::from_orthonormal",
            });
        }
        if basis.ncols() > 0 {
            validate(&basis, "Subspace::from_orthonormal")?;
            let gram = basis.transpose() * &basis;
            let defect = (&gram - DMatrix::identity(gram.nrows(), gram.ncols()))
                .iter()
                .fold(0.0_f64, |acc, x| acc.max(x.abs()));
            if defect > ORTHONORMAL_TOL {
                return Err(Error::NotOrthonormal { defect });
            }
        }
        Ok(Subspace {
            ambient: basis.nrows(),
            basis,
        })
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn is_trivial(&self) -> bool {
        self.dim() == 0
    }
}

/// Orthonormal basis of the column space, via SVD with the relative rank rule.
/// An all-zero matrix yields the trivial subspace.
pub fn thin_orthonormal_basis(a: &DMatrix<f64>) -> Result<Subspace> {
    validate(a, "thin_orthonormal_basis")?;
    let svd = a.clone().svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let r = rank_from_singular_values(svd.singular_values.as_slice());
    if r == 0 {
        return Ok(Subspace::trivial(a.nrows()));
    }
    debug_assert!(
        svd.singular_values
            .as_slice()
            .windows(2)
            .all(|w| w[0] >= w[1]),
        "singular values must be sorted descending"
    );
    Ok(Subspace {
        ambient: a.nrows(),
        basis: u.columns(0, r).into_owned(),
    })
}

/// P = B Bᵀ. The trivial subspace maps to the zero matrix.
pub fn orthogonal_projector(s: &Subspace) -> DMatrix<f64> {
    if s.is_trivial() {
        return DMatrix::zeros(s.ambient, s.ambient);
    }
    &s.basis * s.basis.transpose()
}

/// Intersection via principal angles: directions of S₁ whose cosine against S₂
/// is within ANGLE_TOL of 1.
pub fn subspace_intersection(s1: &Subspace, s2: &Subspace) -> Result<Subspace> {
    if s1.ambient != s2.ambient {
        return Err(Error::ShapeMismatch(format!(
            "subspace_intersection: ambient dims {} vs {}",
            s1.ambient, s2.ambient
        )));
    }
    if s1.is_trivial() || s2.is_trivial() {
        return Ok(Subspace::trivial(s1.ambient));
    }
    let cross = s1.basis.transpose() * &s2.basis;
    let svd = cross.svd(true, false);
    let w = svd.u.expect("left singular vectors requested");
    let keep: Vec<usize> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, &c)| c >= 1.0 - ANGLE_TOL)
        .map(|(i, _)| i)
        .collect();
    if keep.is_empty() {
        return Ok(Subspace::trivial(s1.ambient));
    }
    let mut basis = DMatrix::zeros(s1.ambient, keep.len());
    for (out_col, &i) in keep.iter().enumerate() {
        let dir = &s1.basis * w.column(i);
        basis.set_column(out_col, &dir);
    }
    Subspace::from_orthonormal(basis)
}

/// Orthogonal complement of `small` within `big`: the subspace C with
/// P_big = P_small + P_C. Errors if `small` is not numerically contained in `big`.
pub fn relative_complement(big: &Subspace, small: &Subspace) -> Result<Subspace> {
    if big.ambient != small.ambient {
        return Err(Error::ShapeMismatch(format!(
            "relative_complement: ambient dims {} vs {}",
            big.ambient, small.ambient
        )));
    }
    // Containment check: every basis vector of `small` must project onto `big`
    // with negligible residual. Basis columns are unit vectors, so the residual
    // norm is directly comparable to ANGLE_TOL.
    for col in 0..small.dim() {
        let v = small.basis.column(col);
        let proj = &big.basis * (big.basis.transpose() * v);
        let residual = (v - proj).norm();
        if residual > 1e2 * ANGLE_TOL {
            return Err(Error::NotContained { residual });
        }
    }
    if small.is_trivial() {
        return Ok(big.clone());
    }
    if small.dim() == big.dim() {
        return Ok(Subspace::trivial(big.ambient));
    }
    // Deflate: remove the `small` component from big's basis, then re-orthonormalize.
    let deflated = &big.basis - &small.basis * (small.basis.transpose() * &big.basis);
    let comp = thin_orthonormal_basis(&deflated)?;
    if comp.dim() != big.dim() - small.dim() {
        return Err(Error::Infeasible(format!(
            "relative_complement: expected dimension {}, computed {}",
            big.dim() - small.dim(),
            comp.dim()
        )));
    }
    Ok(comp)
}

/// Least-squares coefficients argmin_C ‖Y − XC‖_F via SVD. Requires X to have
/// full numerical column rank; rank deficiency is an error, not a pseudo-inverse
/// fallback.
pub fn ols_fit(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    validate(x, "ols_fit: design")?;
    validate(y, "ols_fit: response")?;
    if x.nrows() != y.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "ols_fit: design has {} rows, response has {}",
            x.nrows(),
            y.nrows()
        )));
    }
    if x.ncols() > x.nrows() {
        // The thin SVD of a wide matrix never exposes the column-rank
        // deficiency, so reject under-determined systems up front.
        return Err(Error::DegenerateDesign { ratio: 0.0 });
    }
    let svd = x.clone().svd(true, true);
    let sv = &svd.singular_values;
    let smax = sv.max();
    let smin = sv.min();
    if smax <= 0.0 || smin <= RANK_REL_TOL * smax {
        return Err(Error::DegenerateDesign {
            ratio: if smax > 0.0 { smin / smax } else { 0.0 },
        });
    }
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let mut uty = u.transpose() * y;
    for i in 0..sv.len() {
        let row_scaled = uty.row(i) / sv[i];
        uty.set_row(i, &row_scaled);
    }
    Ok(v_t.transpose() * uty)
}

/// Inverse symmetric square root A^{-1/2} of a symmetric positive-definite
/// matrix, via its eigendecomposition.
pub fn sym_inv_sqrt(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    validate(a, "sym_inv_sqrt")?;
    if a.nrows() != a.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "sym_inv_sqrt: {}x{} is not square",
            a.nrows(),
            a.ncols()
        )));
    }
    let eig = a.clone().symmetric_eigen();
    let emax = eig.eigenvalues.max();
    if emax <= 0.0 {
        return Err(Error::DegenerateDesign { ratio: 0.0 });
    }
    let mut scaled = eig.eigenvectors.clone();
    for i in 0..eig.eigenvalues.len() {
        let ev = eig.eigenvalues[i];
        if ev <= RANK_REL_TOL * emax {
            return Err(Error::DegenerateDesign { ratio: ev / emax });
        }
        let col = scaled.column(i) / ev.sqrt();
        scaled.set_column(i, &col);
    }
    Ok(&scaled * eig.eigenvectors.transpose())
}

/// Symmetric square root A^{1/2} of a symmetric positive-semidefinite matrix.
pub fn sym_sqrt(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    validate(a, "sym_sqrt")?;
    if a.nrows() != a.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "sym_sqrt: {}x{} is not square",
            a.nrows(),
            a.ncols()
        )));
    }
    let eig = a.clone().symmetric_eigen();
    let mut scaled = eig.eigenvectors.clone();
    for i in 0..eig.eigenvalues.len() {
        let ev = eig.eigenvalues[i].max(0.0);
        let col = scaled.column(i) * ev.sqrt();
        scaled.set_column(i, &col);
    }
    Ok(&scaled * eig.eigenvectors.transpose())
}

/// Gathers the listed rows into a new matrix, preserving order.
pub fn select_rows(a: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(rows.len(), a.ncols());
    for (i, &row) in rows.iter().enumerate() {
        out.set_row(i, &a.row(row));
    }
    out
}

/// Gathers the listed columns into a new matrix, preserving order.
pub fn select_columns(a: &DMatrix<f64>, cols: &[usize]) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.nrows(), cols.len());
    for (i, &col) in cols.iter().enumerate() {
        out.set_column(i, &a.column(col));
    }
    out
}

/// Squared Frobenius norm of Y − XC.
pub fn residual_sum_of_squares(x: &DMatrix<f64>, y: &DMatrix<f64>, c: &DMatrix<f64>) -> f64 {
    (y - x * c).norm_squared()
}

/// Euclidean norms of each row.
pub fn row_norms(a: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(a.nrows(), (0..a.nrows()).map(|i| a.row(i).norm()))
}
