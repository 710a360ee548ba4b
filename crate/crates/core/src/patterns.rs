//! Structural patterns of jointly row-sparse, rank-deficient coefficient
//! matrices, and the restricted least-squares estimators built on them.
//!
//! A p×m coefficient matrix B with nonzero rows 𝒥 and rank r determines a
//! pattern (𝒥, U): U has orthonormal columns spanning the column space of
//! B[𝒥,·] when r < min(|𝒥|, m), and is the |𝒥|×|𝒥| identity otherwise (the
//! rank constraint is vacuous there). Writing S for the column selection that
//! embeds 𝒥 into {1..p}, the p×r̄ matrix SU has orthonormal columns and
//!   X B = (X S U) (Uᵀ B[𝒥,·]),
//! so fitting Y on the factor design X S U reproduces every coefficient matrix
//! with this pattern. The pattern rank r̄ is the column count of U.
//!
//! Patterns are compared through projectors (SU)(SU)ᵀ; basis entries are only
//! determined up to rotation.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{self, rank_from_singular_values, Subspace};

/// Rows with norm ≤ ROW_ZERO_REL_TOL · (largest row norm) count as zero.
pub const ROW_ZERO_REL_TOL: f64 = 1e-12;

/// The (support, subspace) skeleton of a coefficient matrix.
#[derive(Debug, Clone)]
pub struct StructuralPattern {
    p: usize,
    support: Vec<usize>,
    u: DMatrix<f64>,
}

impl StructuralPattern {
    /// Builds a pattern directly from a support set and an orthonormal U.
    /// `u` must be J×r̄ with orthonormal columns, 1 ≤ r̄ ≤ J; indices must be
    /// in-range and strictly increasing.
    pub fn new(p: usize, support: Vec<usize>, u: DMatrix<f64>) -> Result<Self> {
        if support.is_empty() {
            return Err(Error::EmptyModel);
        }
        if support.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter(
                "StructuralPattern: support must be strictly increasing".into(),
            ));
        }
        if *support.last().unwrap() >= p {
            return Err(Error::InvalidParameter(format!(
                "StructuralPattern: support index {} out of range for p = {p}",
                support.last().unwrap()
            )));
        }
        if u.nrows() != support.len() || u.ncols() == 0 || u.ncols() > support.len() {
            return Err(Error::ShapeMismatch(format!(
                "StructuralPattern: U is {}x{}, expected {} rows and 1..={} columns",
                u.nrows(),
                u.ncols(),
                support.len(),
                support.len()
            )));
        }
        // Delegate the orthonormality check.
        Subspace::from_orthonormal(u.clone())?;
        Ok(StructuralPattern { p, support, u })
    }

    /// Support size J.
    pub fn cardinality(&self) -> usize {
        self.support.len()
    }

    /// Pattern rank r̄ = r(SU), the factor-design width.
    pub fn rank(&self) -> usize {
        self.u.ncols()
    }

    /// Rank of any coefficient matrix carrying this pattern, given its column
    /// count m. Equals r̄ except when U is the identity, where the coefficient
    /// rank saturates at min(J, m).
    pub fn model_rank(&self, m: usize) -> usize {
        self.rank().min(self.cardinality()).min(m)
    }

    pub fn ambient_dim(&self) -> usize {
        self.p
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn u(&self) -> &DMatrix<f64> {
        &self.u
    }

    /// The p×r̄ matrix SU: rows of U scattered onto the support.
    pub fn selection_projection(&self) -> DMatrix<f64> {
        let mut su = DMatrix::zeros(self.p, self.u.ncols());
        for (i, &row) in self.support.iter().enumerate() {
            su.set_row(row, &self.u.row(i));
        }
        su
    }

    /// Column span of SU as a subspace of R^p.
    pub fn subspace(&self) -> Subspace {
        Subspace::from_orthonormal(self.selection_projection())
            .expect("SU inherits orthonormal columns from U")
    }

    /// The projector (SU)(SU)ᵀ; the rotation-invariant fingerprint of the
    /// pattern.
    pub fn projector(&self) -> DMatrix<f64> {
        let su = self.selection_projection();
        &su * su.transpose()
    }
}

fn pattern_and_rank(b: &DMatrix<f64>) -> Result<(StructuralPattern, usize)> {
    linalg::validate(b, "extract_pattern")?;
    let norms = linalg::row_norms(b);
    let max_norm = norms.max();
    if max_norm <= 0.0 {
        return Err(Error::EmptyModel);
    }
    let tol = ROW_ZERO_REL_TOL * max_norm;
    let support: Vec<usize> = (0..b.nrows()).filter(|&i| norms[i] > tol).collect();
    let block = linalg::select_rows(b, &support);
    let j = support.len();
    let m = b.ncols();
    let svd = block.clone().svd(true, false);
    let r = rank_from_singular_values(svd.singular_values.as_slice());
    debug_assert!(r >= 1, "a nonzero block has rank at least 1");
    let u = if r < j.min(m) {
        svd.u.expect("u requested").columns(0, r).into_owned()
    } else {
        // Rank constraint vacuous: U = I, pattern rank J.
        DMatrix::identity(j, j)
    };
    Ok((StructuralPattern::new(b.nrows(), support, u)?, r))
}

/// Reads the structural pattern off a coefficient matrix: support by the
/// relative row-norm rule, then U from the thin SVD of the supported block
/// (identity when the rank constraint is vacuous).
pub fn extract_pattern(b: &DMatrix<f64>) -> Result<StructuralPattern> {
    pattern_and_rank(b).map(|(pat, _)| pat)
}

/// The factor design X S U: selected columns of X mixed by U.
pub fn factor_design(x: &DMatrix<f64>, pattern: &StructuralPattern) -> Result<DMatrix<f64>> {
    linalg::validate(x, "factor_design")?;
    if x.ncols() != pattern.ambient_dim() {
        return Err(Error::ShapeMismatch(format!(
            "factor_design: X has {} columns, pattern lives in R^{}",
            x.ncols(),
            pattern.ambient_dim()
        )));
    }
    Ok(linalg::select_columns(x, pattern.support()) * pattern.u())
}

/// A coefficient matrix together with its structural pattern.
#[derive(Debug, Clone)]
pub struct CandidateModel {
    coefficients: DMatrix<f64>,
    pattern: StructuralPattern,
    rank: usize,
}

impl CandidateModel {
    /// Builds the model by extracting the pattern from `coefficients`.
    pub fn from_coefficients(coefficients: DMatrix<f64>) -> Result<Self> {
        let (pattern, rank) = pattern_and_rank(&coefficients)?;
        Ok(CandidateModel {
            coefficients,
            pattern,
            rank,
        })
    }

    pub fn coefficients(&self) -> &DMatrix<f64> {
        &self.coefficients
    }

    pub fn pattern(&self) -> &StructuralPattern {
        &self.pattern
    }

    /// Support size J.
    pub fn cardinality(&self) -> usize {
        self.pattern.cardinality()
    }

    /// Rank of the coefficient matrix (not the pattern rank r̄).
    pub fn rank(&self) -> usize {
        self.rank
    }

    /// Training error ‖Y − XB‖²_F.
    pub fn rss(&self, x: &DMatrix<f64>, y: &DMatrix<f64>) -> f64 {
        linalg::residual_sum_of_squares(x, y, &self.coefficients)
    }
}

/// Least squares restricted to a pattern: regress Y on the factor design
/// W = X S U and scatter B̂ = SU·Ĉ back to p×m. The returned model keeps the
/// imposed pattern (its support can only shrink in exact arithmetic).
pub fn restricted_estimate(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    pattern: &StructuralPattern,
) -> Result<CandidateModel> {
    let w = factor_design(x, pattern)?;
    if y.nrows() != x.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "restricted_estimate: X has {} rows, Y has {}",
            x.nrows(),
            y.nrows()
        )));
    }
    let c = linalg::ols_fit(&w, y)?;
    let block = pattern.u() * &c;
    let mut b = DMatrix::zeros(pattern.ambient_dim(), y.ncols());
    for (i, &row) in pattern.support().iter().enumerate() {
        b.set_row(row, &block.row(i));
    }
    let rank = rank_from_singular_values(c.clone().singular_values().as_slice());
    Ok(CandidateModel {
        coefficients: b,
        pattern: pattern.clone(),
        rank,
    })
}

/// Exact solution of the support- and rank-restricted least-squares problem
///   min ‖Y − XB‖²_F  subject to  B[𝒥ᶜ,·] = 0, rank(B) ≤ r:
/// ordinary least squares on the selected columns followed by projection of
/// the fitted values onto their top-r right singular directions. The fitted
/// values X·Ĉ form the orthogonal projection of Y onto the selected column
/// span (a truncated-SVD pseudo-inverse in disguise), so the rank-r factor is
/// read off their SVD.
pub fn reduced_rank_refit(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    support: &[usize],
    r: usize,
) -> Result<CandidateModel> {
    linalg::validate(x, "reduced_rank_refit: design")?;
    linalg::validate(y, "reduced_rank_refit: response")?;
    if support.is_empty() {
        return Err(Error::EmptyModel);
    }
    let mut support = support.to_vec();
    support.sort_unstable();
    support.dedup();
    if *support.last().unwrap() >= x.ncols() {
        return Err(Error::InvalidParameter(format!(
            "reduced_rank_refit: support index {} out of range for p = {}",
            support.last().unwrap(),
            x.ncols()
        )));
    }
    let j = support.len();
    let m = y.ncols();
    if r == 0 || r > j.min(m) {
        return Err(Error::InvalidParameter(format!(
            "reduced_rank_refit: rank {r} outside 1..={}",
            j.min(m)
        )));
    }
    let xj = linalg::select_columns(x, &support);
    let c_full = linalg::ols_fit(&xj, y)?;
    let block = if r == j.min(m) {
        c_full
    } else {
        let fitted = &xj * &c_full;
        let svd = fitted.svd(false, true);
        let v_t = svd.v_t.expect("v_t requested");
        let keep = r.min(rank_from_singular_values(svd.singular_values.as_slice()));
        if keep == 0 {
            // Fitted values are exactly zero; the refit has no support.
            return Err(Error::EmptyModel);
        }
        let vr = v_t.rows(0, keep).transpose();
        c_full * (&vr * vr.transpose())
    };
    let mut b = DMatrix::zeros(x.ncols(), m);
    for (i, &row) in support.iter().enumerate() {
        b.set_row(row, &block.row(i));
    }
    CandidateModel::from_coefficients(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::dense;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
        DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
    }

    #[test]
    fn extracts_rank_one_pattern_from_repeated_rows() {
        // Rows 1 and 2 both equal (1, 1): support {1, 2}, rank 1, and the
        // pattern subspace is the diagonal direction of those two coordinates.
        let b = dense(
            4,
            2,
            &[0.0, 0.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0],
        )
        .unwrap();
        let pat = extract_pattern(&b).unwrap();
        assert_eq!(pat.support(), &[1, 2]);
        assert_eq!(pat.rank(), 1);
        let p = pat.projector();
        let mut expected = DMatrix::zeros(4, 4);
        expected[(1, 1)] = 0.5;
        expected[(1, 2)] = 0.5;
        expected[(2, 1)] = 0.5;
        expected[(2, 2)] = 0.5;
        assert_relative_eq!(p, expected, epsilon = 1e-12);
    }

    #[test]
    fn full_rank_block_gets_identity_u() {
        let b = dense(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]).unwrap();
        let pat = extract_pattern(&b).unwrap();
        assert_eq!(pat.support(), &[0, 1]);
        // rank 2 = min(J, m): U = I₂, pattern rank J = 2.
        assert_eq!(pat.rank(), 2);
        assert_eq!(pat.model_rank(2), 2);
        assert_relative_eq!(*pat.u(), DMatrix::identity(2, 2), epsilon = 1e-15);
    }

    #[test]
    fn tall_full_rank_block_saturates_model_rank_at_m() {
        // J = 3 > m = 2 with a rank-2 block: the rank constraint is vacuous,
        // U = I₃ and the pattern rank is J, but any coefficient matrix with
        // this pattern still has rank min(J, m) = 2.
        let b = dense(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]).unwrap();
        let pat = extract_pattern(&b).unwrap();
        assert_eq!(pat.rank(), 3);
        assert_eq!(pat.model_rank(2), 2);
    }

    #[test]
    fn zero_matrix_has_no_pattern() {
        let b = DMatrix::zeros(3, 2);
        assert!(matches!(extract_pattern(&b), Err(Error::EmptyModel)));
    }

    #[test]
    fn row_zero_rule_is_relative() {
        // A row at 1e-13 of the max norm is treated as zero; 1e-9 is kept.
        let b = dense(3, 1, &[1.0, 1e-13, 0.0]).unwrap();
        assert_eq!(extract_pattern(&b).unwrap().support(), &[0]);
        let b = dense(3, 1, &[1.0, 1e-9, 0.0]).unwrap();
        assert_eq!(extract_pattern(&b).unwrap().support(), &[0, 1]);
    }

    #[test]
    fn factor_design_mixes_selected_columns() {
        let x = DMatrix::identity(4, 4);
        let s = 1.0 / 2.0_f64.sqrt();
        let pat =
            StructuralPattern::new(4, vec![1, 2], dense(2, 1, &[s, s]).unwrap()).unwrap();
        let w = factor_design(&x, &pat).unwrap();
        let expected = dense(4, 1, &[0.0, s, s, 0.0]).unwrap();
        assert_relative_eq!(w, expected, epsilon = 1e-12);
    }

    #[test]
    fn factorization_identity_reproduces_xb() {
        // X B = (X S U)(Uᵀ B[𝒥,·]) for extracted patterns.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..30 {
            let x = random_matrix(&mut rng, 10, 6);
            // Random rank-deficient B with random support.
            let left = random_matrix(&mut rng, 4, 2);
            let right = random_matrix(&mut rng, 2, 5);
            let block = left * right;
            let mut b = DMatrix::zeros(6, 5);
            for (i, &row) in [0usize, 2, 3, 5].iter().enumerate() {
                b.set_row(row, &block.row(i));
            }
            let pat = extract_pattern(&b).unwrap();
            let w = factor_design(&x, &pat).unwrap();
            let core = pat.u().transpose() * linalg::select_rows(&b, pat.support());
            let lhs = &x * &b;
            let rhs = w * core;
            assert_relative_eq!(lhs, rhs, epsilon = 1e-9);
        }
    }

    #[test]
    fn restricted_estimate_vanishes_on_orthogonal_directions() {
        // Y lives entirely on column 0; fitting on the orthogonal column 1
        // returns a zero coefficient row.
        let x = dense(4, 2, &[1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, -1.0]).unwrap();
        let y = dense(4, 1, &[2.0, 2.0, 0.0, 0.0]).unwrap();
        let pat = StructuralPattern::new(2, vec![1], DMatrix::identity(1, 1)).unwrap();
        let model = restricted_estimate(&x, &y, &pat).unwrap();
        assert!(model.coefficients().norm() < 1e-12);
    }

    #[test]
    fn restricted_estimate_is_idempotent_on_its_own_fit() {
        // Refitting the pattern extracted from a restricted estimate
        // reproduces the same fitted values.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random_matrix(&mut rng, 20, 6);
        let y = random_matrix(&mut rng, 20, 3);
        let pat = StructuralPattern::new(
            6,
            vec![1, 3, 4],
            DMatrix::identity(3, 3),
        )
        .unwrap();
        let first = restricted_estimate(&x, &y, &pat).unwrap();
        let re_pat = extract_pattern(first.coefficients()).unwrap();
        let second = restricted_estimate(&x, &y, &re_pat).unwrap();
        assert_relative_eq!(
            &x * first.coefficients(),
            &x * second.coefficients(),
            epsilon = 1e-9
        );
    }

    #[test]
    fn refit_with_vacuous_rank_equals_plain_ols() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = random_matrix(&mut rng, 15, 5);
        let y = random_matrix(&mut rng, 15, 2);
        let support = vec![0, 2, 4];
        let refit = reduced_rank_refit(&x, &y, &support, 2).unwrap();
        let pat = StructuralPattern::new(5, support, DMatrix::identity(3, 3)).unwrap();
        let ols = restricted_estimate(&x, &y, &pat).unwrap();
        assert_relative_eq!(
            refit.coefficients(),
            ols.coefficients(),
            epsilon = 1e-9
        );
    }

    #[test]
    fn refit_on_identity_design_truncates_the_svd() {
        // With X = I the refit is the best rank-r approximation of Y on the
        // chosen rows (Eckart-Young).
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let y = random_matrix(&mut rng, 4, 3);
        let x = DMatrix::identity(4, 4);
        let refit = reduced_rank_refit(&x, &y, &[0, 1, 2, 3], 2).unwrap();
        let svd = y.clone().svd(true, true);
        let u = svd.u.unwrap();
        let v_t = svd.v_t.unwrap();
        let mut truncated = DMatrix::zeros(4, 3);
        for i in 0..2 {
            truncated += u.column(i) * v_t.row(i) * svd.singular_values[i];
        }
        assert_relative_eq!(refit.coefficients(), &truncated, epsilon = 1e-9);
        assert_eq!(refit.rank(), 2);
    }

    #[test]
    fn refit_objective_is_monotone_in_rank() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let x = random_matrix(&mut rng, 18, 6);
        let y = random_matrix(&mut rng, 18, 4);
        let support = vec![0, 1, 3, 5];
        let mut last = f64::INFINITY;
        for r in 1..=4 {
            let rss = reduced_rank_refit(&x, &y, &support, r)
                .unwrap()
                .rss(&x, &y);
            assert!(rss <= last + 1e-9);
            last = rss;
        }
    }

    #[test]
    fn refit_rejects_bad_ranks_and_supports() {
        let x = dense(4, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0, 2.0]).unwrap();
        let y = dense(4, 1, &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!(reduced_rank_refit(&x, &y, &[0], 0).is_err());
        assert!(reduced_rank_refit(&x, &y, &[0], 2).is_err());
        assert!(reduced_rank_refit(&x, &y, &[5], 1).is_err());
        assert!(reduced_rank_refit(&x, &y, &[], 1).is_err());
    }

    #[test]
    fn patterns_from_equivalent_matrices_share_projectors() {
        // Scaling and right-rotation change the coefficients but not the
        // pattern projector.
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let left = random_matrix(&mut rng, 3, 1);
        let right = random_matrix(&mut rng, 1, 4);
        let block = left * right;
        let mut b = DMatrix::zeros(5, 4);
        for (i, &row) in [1usize, 2, 4].iter().enumerate() {
            b.set_row(row, &block.row(i));
        }
        let pat1 = extract_pattern(&b).unwrap();
        let pat2 = extract_pattern(&(&b * 3.5)).unwrap();
        assert_relative_eq!(pat1.projector(), pat2.projector(), epsilon = 1e-10);
    }
}
