//! Dense linear-algebra primitives shared by the solvers.
//!
//! Everything here is a pure function of its inputs. Gram solves go through a
//! Cholesky factor of the symmetrized matrix `(M + Mᵀ)/2`, and numerical rank
//! uses column-pivoted Gram-Schmidt with the tolerance
//! `max(d, k) · ε_mach · (largest column norm)`.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

use crate::error::{Result, ScaleError};

/// Relative asymmetry accepted by [`logdet_psd`] before it reports
/// [`ScaleError::NotSymmetric`].
pub const SYMMETRY_TOL: f64 = 1e-10;

/// A `d × n` real matrix of full row rank; column `j` is the vector `u_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    columns: DMatrix<f64>,
}

impl Frame {
    pub fn new(columns: DMatrix<f64>) -> Result<Self> {
        let (d, n) = columns.shape();
        if d == 0 || n == 0 {
            return Err(ScaleError::InvalidInput("frame must be nonempty".into()));
        }
        if n < d {
            return Err(ScaleError::InvalidInput(format!(
                "frame has {n} columns but dimension {d}"
            )));
        }
        if columns.iter().any(|x| !x.is_finite()) {
            return Err(ScaleError::InvalidInput("frame has non-finite entries".into()));
        }
        let rank = numerical_rank(&columns);
        if rank != d {
            return Err(ScaleError::InvalidInput(format!(
                "frame is not full row rank (rank {rank} < {d})"
            )));
        }
        Ok(Self { columns })
    }

    /// Builds a frame from `d` rows given in row-major order.
    pub fn from_row_slice(d: usize, n: usize, entries: &[f64]) -> Result<Self> {
        if entries.len() != d * n {
            return Err(ScaleError::DimensionMismatch(format!(
                "expected {} entries, got {}",
                d * n,
                entries.len()
            )));
        }
        Self::new(DMatrix::from_row_slice(d, n, entries))
    }

    pub fn identity(d: usize) -> Self {
        Self {
            columns: DMatrix::identity(d, d),
        }
    }

    pub fn dim(&self) -> usize {
        self.columns.nrows()
    }

    pub fn len(&self) -> usize {
        self.columns.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.ncols() == 0
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.columns
    }

    pub fn column(&self, j: usize) -> DVector<f64> {
        self.columns.column(j).into_owned()
    }

    /// The `d × |idx|` submatrix `U_T`.
    pub fn select(&self, idx: &[usize]) -> DMatrix<f64> {
        self.columns.select_columns(idx)
    }

    /// Applies an invertible left transform, `U ↦ L U`.
    pub fn left_transform(&self, left: &DMatrix<f64>) -> Result<Self> {
        if left.shape() != (self.dim(), self.dim()) {
            return Err(ScaleError::DimensionMismatch(
                "left transform must be d × d".into(),
            ));
        }
        Self::new(left * &self.columns)
    }
}

/// A strictly positive length-`n` vector `z` (the square of the right scaling).
#[derive(Debug, Clone, PartialEq)]
pub struct Scaling(Vec<f64>);

impl Scaling {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(ScaleError::InvalidInput("scaling must be nonempty".into()));
        }
        if let Some(j) = values.iter().position(|&v| !(v.is_finite() && v > 0.0)) {
            return Err(ScaleError::InvalidInput(format!(
                "scaling entry {j} is not a positive finite number ({})",
                values[j]
            )));
        }
        Ok(Self(values))
    }

    pub fn ones(n: usize) -> Self {
        Self(vec![1.0; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(0.0, f64::max)
    }

    /// `log(z_max / z_min)`.
    pub fn log_range(&self) -> f64 {
        (self.max() / self.min()).ln()
    }

    /// Uniform rescaling so the smallest entry equals 1.
    pub fn normalized(&self) -> Self {
        let m = self.min();
        Self(self.0.iter().map(|v| v / m).collect())
    }

    pub fn scaled(&self, t: f64) -> Result<Self> {
        Self::new(self.0.iter().map(|v| v * t).collect())
    }

    /// `z ∘ (1_{T̄} + α 1_T)`.
    pub fn scale_up(&self, set: &[usize], alpha: f64) -> Result<Self> {
        let mut v = self.0.clone();
        for &j in set {
            v[j] *= alpha;
        }
        Self::new(v)
    }
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Cached lower-triangular factor `L` with `L Lᵀ` equal to a symmetric
/// positive-definite `d × d` matrix, normally the Gram matrix `U Z Uᵀ`.
#[derive(Debug, Clone)]
pub struct GramContext {
    gram: DMatrix<f64>,
    lower: DMatrix<f64>,
    /// `L⁻¹ U Z^{1/2}`, read off the orthogonal factor when built from a frame.
    basis: Option<DMatrix<f64>>,
}

impl GramContext {
    /// Factors `U Z Uᵀ` through a Householder QR of `Z^{1/2} Uᵀ` with rows
    /// sorted by decreasing norm, which stays accurate for strongly graded `z`.
    pub fn new(frame: &Frame, z: &Scaling) -> Result<Self> {
        if z.len() != frame.len() {
            return Err(ScaleError::DimensionMismatch(format!(
                "scaling has length {} but frame has {} columns",
                z.len(),
                frame.len()
            )));
        }
        let u = frame.matrix();
        let (d, n) = u.shape();
        let roots: Vec<f64> = z.as_slice().iter().map(|v| v.sqrt()).collect();
        let norms: Vec<f64> = (0..n).map(|j| roots[j] * u.column(j).norm()).collect();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]).then(a.cmp(&b)));
        let tall = DMatrix::from_fn(n, d, |r, i| roots[order[r]] * u[(i, order[r])]);
        let qr = tall.qr();
        let (mut q, mut upper) = (qr.q(), qr.r());
        for i in 0..d {
            if upper[(i, i)] < 0.0 {
                upper.row_mut(i).neg_mut();
                q.column_mut(i).neg_mut();
            }
        }
        let diag = upper.diagonal();
        let (lo, hi) = (diag.min(), diag.max());
        if !(lo > d as f64 * f64::EPSILON * hi) {
            return Err(ScaleError::FactorizationFailure(format!(
                "Gram matrix is numerically singular (pivot {lo:e}, scale {hi:e})"
            )));
        }
        let mut scaled = u.clone();
        for (j, &zj) in z.as_slice().iter().enumerate() {
            scaled.column_mut(j).scale_mut(zj);
        }
        let gram = symmetrize(&(scaled * u.transpose()));
        // Rows of Q are accurate even where the triangular solve is not.
        let mut basis = DMatrix::zeros(d, n);
        for (r, &j) in order.iter().enumerate() {
            basis.column_mut(j).tr_copy_from(&q.row(r));
        }
        Ok(Self {
            gram,
            lower: upper.transpose(),
            basis: Some(basis),
        })
    }

    /// Factorizes an explicit symmetric positive-definite matrix.
    pub fn from_gram(gram: &DMatrix<f64>) -> Result<Self> {
        let d = gram.nrows();
        if d == 0 || gram.ncols() != d {
            return Err(ScaleError::DimensionMismatch("gram must be square".into()));
        }
        let gram = symmetrize(gram);
        let chol = Cholesky::new(gram.clone()).ok_or_else(|| {
            ScaleError::FactorizationFailure("Gram matrix is not positive definite".into())
        })?;
        let lower = chol.l();
        let max_diag = gram.diagonal().max();
        let min_pivot = lower.diagonal().iter().map(|x| x * x).fold(f64::INFINITY, f64::min);
        if !(min_pivot > d as f64 * f64::EPSILON * max_diag) {
            return Err(ScaleError::FactorizationFailure(format!(
                "Gram matrix is numerically singular (pivot {min_pivot:e}, scale {max_diag:e})"
            )));
        }
        Ok(Self {
            gram,
            lower,
            basis: None,
        })
    }

    pub fn dim(&self) -> usize {
        self.gram.nrows()
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    /// `G⁻¹ B`.
    pub fn solve(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        let half = self.whiten(rhs);
        self.lower
            .tr_solve_lower_triangular(&half)
            .expect("factor has a nonzero diagonal")
    }

    pub fn solve_vec(&self, rhs: &DVector<f64>) -> DVector<f64> {
        let half = self
            .lower
            .solve_lower_triangular(rhs)
            .expect("factor has a nonzero diagonal");
        self.lower
            .tr_solve_lower_triangular(&half)
            .expect("factor has a nonzero diagonal")
    }

    /// `L⁻¹ B` where `G = L Lᵀ`; columns of the result have squared norms
    /// `b_jᵀ G⁻¹ b_j`.
    pub fn whiten(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        self.lower
            .solve_lower_triangular(rhs)
            .expect("factor has a nonzero diagonal")
    }

    /// `xᵀ G⁻¹ y`.
    pub fn inv_inner(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        x.dot(&self.solve_vec(y))
    }
}

/// `L⁻¹ U_T Z_T^{1/2}` for the factor `L` of `U Z Uᵀ`. `ctx` must belong to `(frame, z)`.
pub(crate) fn whitened_columns(
    frame: &Frame,
    z: &Scaling,
    ctx: &GramContext,
    set: &[usize],
) -> DMatrix<f64> {
    if let Some(b) = &ctx.basis {
        return b.select_columns(set);
    }
    let mut cols = frame.select(set);
    for (k, &j) in set.iter().enumerate() {
        cols.column_mut(k).scale_mut(z.as_slice()[j].sqrt());
    }
    ctx.whiten(&cols)
}

/// `ℓ_j = z_j u_jᵀ (U Z Uᵀ)⁻¹ u_j` for every column.
pub fn leverage_scores(frame: &Frame, z: &Scaling) -> Result<Vec<f64>> {
    let ctx = GramContext::new(frame, z)?;
    Ok(leverage_scores_with(frame, z, &ctx))
}

pub(crate) fn leverage_scores_with(frame: &Frame, z: &Scaling, ctx: &GramContext) -> Vec<f64> {
    if let Some(b) = &ctx.basis {
        return b.column_iter().map(|c| c.norm_squared()).collect();
    }
    let w = ctx.whiten(frame.matrix());
    w.column_iter()
        .zip(z.as_slice())
        .map(|(col, zj)| zj * col.norm_squared())
        .collect()
}

/// Default rank tolerance `max(d, k) · ε_mach · max_j ‖m_j‖`.
pub fn rank_tolerance(columns: &DMatrix<f64>) -> f64 {
    let (d, k) = columns.shape();
    let largest = columns
        .column_iter()
        .map(|c| c.norm())
        .fold(0.0, f64::max);
    d.max(k) as f64 * f64::EPSILON * largest
}

pub fn numerical_rank(columns: &DMatrix<f64>) -> usize {
    numerical_rank_with_tol(columns, rank_tolerance(columns))
}

/// Column-pivoted modified Gram-Schmidt (two projection passes per pivot).
/// A pivot counts iff its residual norm exceeds `tol`.
pub fn numerical_rank_with_tol(columns: &DMatrix<f64>, tol: f64) -> usize {
    let (d, k) = columns.shape();
    let mut work: Vec<DVector<f64>> = columns.column_iter().map(|c| c.into_owned()).collect();
    let mut used = vec![false; k];
    let mut rank = 0;
    while rank < d.min(k) {
        let mut pivot = None;
        let mut best = tol;
        for (j, col) in work.iter().enumerate() {
            if used[j] {
                continue;
            }
            let norm = col.norm();
            if norm > best {
                best = norm;
                pivot = Some(j);
            }
        }
        let Some(p) = pivot else { break };
        used[p] = true;
        rank += 1;
        let q = &work[p] / best;
        for (j, col) in work.iter_mut().enumerate() {
            if used[j] {
                continue;
            }
            for _ in 0..2 {
                let proj = q.dot(col);
                col.axpy(-proj, &q, 1.0);
            }
        }
    }
    rank
}

fn check_symmetric(m: &DMatrix<f64>) -> Result<()> {
    if !m.is_square() {
        return Err(ScaleError::DimensionMismatch("matrix must be square".into()));
    }
    let scale = m.amax().max(1.0);
    let asym = (m - m.transpose()).amax();
    if asym > SYMMETRY_TOL * scale {
        return Err(ScaleError::NotSymmetric { asymmetry: asym });
    }
    Ok(())
}

/// Log-determinant of a symmetric PSD matrix. Singular input (a Cholesky
/// pivot at or below `k · ε_mach · max diag`) yields `-∞`.
pub fn logdet_psd(m: &DMatrix<f64>) -> Result<f64> {
    check_symmetric(m)?;
    Ok(logdet_sym_unchecked(&symmetrize(m)))
}

pub(crate) fn logdet_sym_unchecked(m: &DMatrix<f64>) -> f64 {
    let k = m.nrows();
    if k == 0 {
        return 0.0;
    }
    let max_diag = m.diagonal().max();
    if !(max_diag > 0.0) {
        return f64::NEG_INFINITY;
    }
    // Outer-product Cholesky with diagonal pivoting; the floor mirrors LAPACK's pstrf.
    let floor = k as f64 * f64::EPSILON * max_diag;
    let mut a = m.clone();
    let mut logdet = 0.0;
    for j in 0..k {
        let (mut piv, mut best) = (j, a[(j, j)]);
        for i in (j + 1)..k {
            if a[(i, i)] > best {
                piv = i;
                best = a[(i, i)];
            }
        }
        if best <= floor {
            return f64::NEG_INFINITY;
        }
        a.swap_rows(j, piv);
        a.swap_columns(j, piv);
        logdet += best.ln();
        for r in (j + 1)..k {
            let f = a[(r, j)] / best;
            for c in (j + 1)..=r {
                let v = a[(r, c)] - f * a[(c, j)];
                a[(r, c)] = v;
                a[(c, r)] = v;
            }
        }
    }
    logdet
}

/// Trace of the Moore-Penrose pseudo-inverse of a symmetric PSD matrix:
/// the sum of `1/λ` over eigenvalues above `k · ε_mach · λ_max`.
pub fn pinv_trace(m: &DMatrix<f64>) -> f64 {
    let k = m.nrows();
    if k == 0 {
        return 0.0;
    }
    let eig = SymmetricEigen::new(symmetrize(m));
    let lmax = eig.eigenvalues.max();
    if !(lmax > 0.0) {
        return 0.0;
    }
    let cutoff = k as f64 * f64::EPSILON * lmax;
    eig.eigenvalues
        .iter()
        .filter(|&&l| l > cutoff)
        .map(|l| 1.0 / l)
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn gram_examples() {
        let ctx = GramContext::new(&Frame::identity(2), &Scaling::ones(2)).unwrap();
        assert_eq!(ctx.gram(), &DMatrix::<f64>::identity(2, 2));

        let u = Frame::from_row_slice(2, 3, &[1.0, 0.0, 1.0, 0.0, 1.0, 1.0]).unwrap();
        let ctx = GramContext::new(&u, &Scaling::ones(3)).unwrap();
        assert_eq!(ctx.gram(), &DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]));

        let z = Scaling::new(vec![4.0, 9.0]).unwrap();
        let ctx = GramContext::new(&Frame::identity(2), &z).unwrap();
        assert_eq!(ctx.gram(), &DMatrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 9.0]));
    }

    #[test]
    fn gram_rejects_singular() {
        let g = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(
            GramContext::from_gram(&g),
            Err(ScaleError::FactorizationFailure(_))
        ));
    }

    #[test]
    fn leverage_examples() {
        let l = leverage_scores(&Frame::identity(2), &Scaling::ones(2)).unwrap();
        assert!(close(l[0], 1.0, 1e-15) && close(l[1], 1.0, 1e-15));

        let u = Frame::from_row_slice(2, 3, &[1.0, 0.0, 1.0, 0.0, 1.0, 1.0]).unwrap();
        let l = leverage_scores(&u, &Scaling::ones(3)).unwrap();
        for v in l {
            assert!(close(v, 2.0 / 3.0, 1e-15));
        }
    }

    #[test]
    fn leverage_one_dimensional_closed_form() {
        let u = [0.5, -2.0, 3.0, 1.25];
        let z = [0.1, 2.0, 0.7, 5.0];
        let frame = Frame::from_row_slice(1, 4, &u).unwrap();
        let l = leverage_scores(&frame, &Scaling::new(z.to_vec()).unwrap()).unwrap();
        let total: f64 = u.iter().zip(&z).map(|(a, b)| b * a * a).sum();
        for j in 0..4 {
            assert!(close(l[j], z[j] * u[j] * u[j] / total, 1e-12));
        }
    }

    #[test]
    fn frame_validation() {
        assert!(Frame::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]).is_err());
        assert!(Frame::from_row_slice(2, 1, &[1.0, 2.0]).is_err());
        assert!(Frame::from_row_slice(1, 2, &[1.0, f64::NAN]).is_err());
        assert!(Scaling::new(vec![1.0, 0.0]).is_err());
        assert!(Scaling::new(vec![1.0, f64::INFINITY]).is_err());
    }

    #[test]
    fn rank_examples() {
        assert_eq!(numerical_rank(&DMatrix::identity(2, 2)), 2);
        assert_eq!(numerical_rank(&DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 0.0])), 1);
        assert_eq!(
            numerical_rank(&DMatrix::from_row_slice(2, 3, &[1.0, 1.0, 0.0, 0.0, 0.0, 1.0])),
            2
        );
        assert_eq!(numerical_rank(&DMatrix::zeros(3, 2)), 0);
    }

    #[test]
    fn logdet_examples() {
        assert!(close(logdet_psd(&DMatrix::identity(3, 3)).unwrap(), 0.0, 1e-15));
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 8.0]);
        assert!(close(logdet_psd(&m).unwrap(), 16f64.ln(), 1e-14));
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        assert!(close(logdet_psd(&m).unwrap(), 3f64.ln(), 1e-14));
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert_eq!(logdet_psd(&m).unwrap(), f64::NEG_INFINITY);
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(matches!(logdet_psd(&m), Err(ScaleError::NotSymmetric { .. })));
    }

    #[test]
    fn pinv_trace_examples() {
        assert!(close(pinv_trace(&DMatrix::identity(2, 2)), 2.0, 1e-14));
        let m = DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.0]);
        assert!(close(pinv_trace(&m), 2.0, 1e-14));
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(close(pinv_trace(&m), 0.5, 1e-14));
        assert_eq!(pinv_trace(&DMatrix::zeros(3, 3)), 0.0);
    }
}
