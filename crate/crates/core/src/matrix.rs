//! Matrix scaling with an implicit row normalization: only the column
//! scaling `y` is stored, rows are rescaled to hit `r` exactly.

use crate::error::{Result, ScaleError};
use crate::frame::{select_margin_set, IterationRecord, Outcome, ScalingResult, SolverConfig};
use crate::linalg::Scaling;

/// Slack on the Hall comparison, relative to the total mass `s`.
pub const HALL_TOL: f64 = 1e-7;

/// A nonnegative matrix with no zero rows or columns.
#[derive(Debug, Clone, PartialEq)]
pub struct NonnegMatrix {
    rows: usize,
    cols: usize,
    /// `(column, value)` for the nonzeros of each row.
    row_support: Vec<Vec<(usize, f64)>>,
    /// `(row, value)` for the nonzeros of each column.
    col_support: Vec<Vec<(usize, f64)>>,
}

impl NonnegMatrix {
    /// Builds from row-major entries.
    pub fn from_row_slice(rows: usize, cols: usize, entries: &[f64]) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(ScaleError::InvalidInput("matrix must be nonempty".into()));
        }
        if entries.len() != rows * cols {
            return Err(ScaleError::DimensionMismatch(format!(
                "{} entries for a {rows}x{cols} matrix",
                entries.len()
            )));
        }
        let mut row_support = vec![Vec::new(); rows];
        let mut col_support = vec![Vec::new(); cols];
        for i in 0..rows {
            for j in 0..cols {
                let a = entries[i * cols + j];
                if !(a.is_finite() && a >= 0.0) {
                    return Err(ScaleError::InvalidInput(format!(
                        "entry ({i}, {j}) = {a} is not a finite nonnegative number"
                    )));
                }
                if a > 0.0 {
                    row_support[i].push((j, a));
                    col_support[j].push((i, a));
                }
            }
        }
        if let Some(i) = row_support.iter().position(Vec::is_empty) {
            return Err(ScaleError::InvalidInput(format!("row {i} is zero")));
        }
        if let Some(j) = col_support.iter().position(Vec::is_empty) {
            return Err(ScaleError::InvalidInput(format!("column {j} is zero")));
        }
        Ok(Self {
            rows,
            cols,
            row_support,
            col_support,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.row_support.iter().map(Vec::len).sum()
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.row_support[i]
    }

    pub fn col(&self, j: usize) -> &[(usize, f64)] {
        &self.col_support[j]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row_support[i]
            .iter()
            .find(|(c, _)| *c == j)
            .map_or(0.0, |&(_, a)| a)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixMarginals {
    r: Vec<f64>,
    c: Vec<f64>,
    s: f64,
}

impl MatrixMarginals {
    pub fn new(r: Vec<f64>, c: Vec<f64>) -> Result<Self> {
        for (name, v) in [("row", &r), ("column", &c)] {
            if v.is_empty() {
                return Err(ScaleError::InvalidInput(format!("{name} marginals are empty")));
            }
            if let Some(k) = v.iter().position(|&x| !(x.is_finite() && x > 0.0)) {
                return Err(ScaleError::InvalidInput(format!(
                    "{name} marginal {k} is not a positive finite number ({})",
                    v[k]
                )));
            }
        }
        let sr: f64 = r.iter().sum();
        let sc: f64 = c.iter().sum();
        if (sr - sc).abs() > 1e-9 * sr.max(sc) {
            return Err(ScaleError::InvalidInput(format!(
                "row marginals sum to {sr} but column marginals sum to {sc}"
            )));
        }
        Ok(Self { r, c, s: sr })
    }

    pub fn rows(&self) -> &[f64] {
        &self.r
    }

    pub fn cols(&self) -> &[f64] {
        &self.c
    }

    pub fn total(&self) -> f64 {
        self.s
    }
}

fn scaled_row_sums(a: &NonnegMatrix, y: &[f64]) -> Result<Vec<f64>> {
    (0..a.rows())
        .map(|i| {
            let s: f64 = a.row(i).iter().map(|&(j, v)| v * y[j]).sum();
            if s > 0.0 && s.is_finite() {
                Ok(s)
            } else {
                Err(ScaleError::ZeroRowSum { row: i })
            }
        })
        .collect()
}

fn check_lengths(a: &NonnegMatrix, r: &[f64], y: &[f64]) -> Result<()> {
    if r.len() != a.rows() || y.len() != a.cols() {
        return Err(ScaleError::DimensionMismatch(format!(
            "{}x{} matrix with {} row marginals and {} column scalings",
            a.rows(),
            a.cols(),
            r.len(),
            y.len()
        )));
    }
    Ok(())
}

/// `c_j(y) = Σ_i r_i A_ij y_j / (A y)_i`.
pub fn column_sums(a: &NonnegMatrix, r: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    check_lengths(a, r, y)?;
    let rowsum = scaled_row_sums(a, y)?;
    let mut c = vec![0.0; a.cols()];
    for (i, sum) in rowsum.iter().enumerate() {
        for &(j, v) in a.row(i) {
            c[j] += r[i] * v * y[j] / sum;
        }
    }
    Ok(c)
}

/// The implicit row scaling `x_i = r_i / (A y)_i`.
pub fn row_scaling(a: &NonnegMatrix, r: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    check_lengths(a, r, y)?;
    Ok(scaled_row_sums(a, y)?.iter().zip(r).map(|(s, r)| r / s).collect())
}

/// Rows touching at least one column of `set`, increasing.
pub fn neighborhood(a: &NonnegMatrix, set: &[usize]) -> Vec<usize> {
    let mut hit = vec![false; a.rows()];
    for &j in set {
        for &(i, _) in a.col(j) {
            hit[i] = true;
        }
    }
    (0..a.rows()).filter(|&i| hit[i]).collect()
}

/// Per-row share of the scaled mass that lies in `set`, as `(row, μ, 1 − μ)`.
fn row_shares(a: &NonnegMatrix, y: &[f64], set: &[usize]) -> Result<Vec<(usize, f64, f64)>> {
    let mut inside = vec![false; a.cols()];
    for &j in set {
        inside[j] = true;
    }
    neighborhood(a, set)
        .into_iter()
        .map(|i| {
            let (mut t, mut rest) = (0.0, 0.0);
            for &(j, v) in a.row(i) {
                if inside[j] {
                    t += v * y[j];
                } else {
                    rest += v * y[j];
                }
            }
            let total = t + rest;
            if !(total > 0.0 && total.is_finite()) {
                return Err(ScaleError::ZeroRowSum { row: i });
            }
            Ok((i, t / total, rest / total))
        })
        .collect()
}

/// `h(α) − h(1) = Σ_{i∈N(T)} r_i (α−1) μ_i (1−μ_i) / (1 + (α−1) μ_i)`.
pub fn matrix_gain(a: &NonnegMatrix, r: &[f64], y: &[f64], set: &[usize], alpha: f64) -> Result<f64> {
    check_lengths(a, r, y)?;
    let t = alpha - 1.0;
    Ok(row_shares(a, y, set)?
        .iter()
        .map(|&(i, mu, rest)| r[i] * t * mu * rest / (1.0 + t * mu))
        .sum())
}

/// `h(α) = Σ_{j∈T} c_j(y ∘ (1_T̄ + α 1_T))`.
pub fn matrix_proxy_h(a: &NonnegMatrix, r: &[f64], y: &[f64], set: &[usize], alpha: f64) -> Result<f64> {
    check_lengths(a, r, y)?;
    Ok(row_shares(a, y, set)?
        .iter()
        .map(|&(i, mu, _)| r[i] * alpha * mu / (1.0 + (alpha - 1.0) * mu))
        .sum())
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixUpdate {
    pub alpha_hat: f64,
    /// Index of the linear piece containing `α̂ − 1` (0 is the first).
    pub segment: usize,
    /// `sup_α g(α) = Σ_{i∈N(T)} r_i (1 − μ_i)`.
    pub supremum: f64,
}

/// Solves `g(α̂) = γ` for the piecewise-linear minorant-majorant
/// `g(α) = Σ_i r_i min((α−1) μ_i (1−μ_i), 1 − μ_i)`.
pub fn matrix_update(
    a: &NonnegMatrix,
    r: &[f64],
    y: &[f64],
    set: &[usize],
    gamma: f64,
) -> Result<MatrixUpdate> {
    check_lengths(a, r, y)?;
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(ScaleError::InvalidInput(format!("gamma must be positive, got {gamma}")));
    }
    let mut shares: Vec<(f64, f64, f64)> = row_shares(a, y, set)?
        .into_iter()
        .filter(|&(_, mu, rest)| mu > 0.0 && rest > 0.0)
        .map(|(i, mu, rest)| (mu, rest, r[i]))
        .collect();
    shares.sort_by(|x, y| y.0.total_cmp(&x.0));

    let supremum: f64 = shares.iter().map(|&(_, rest, ri)| ri * rest).sum();
    let s: f64 = r.iter().sum();
    let target = if gamma > supremum {
        if gamma <= supremum + 1e-12 * s.max(1.0) && !shares.is_empty() {
            supremum
        } else {
            return Err(ScaleError::InfeasibleSegment { gamma, supremum });
        }
    } else {
        gamma
    };

    let mut slope: f64 = shares.iter().map(|&(mu, rest, ri)| ri * mu * rest).sum();
    let mut plateau = 0.0;
    let mut k = 0;
    let mut segment = 0;
    while k < shares.len() {
        let mu = shares[k].0;
        let end = 1.0 / mu;
        if plateau + slope * end >= target {
            let t = (target - plateau) / slope;
            return Ok(MatrixUpdate {
                alpha_hat: 1.0 + t.clamp(0.0, end),
                segment,
                supremum,
            });
        }
        // Rows sharing this breakpoint saturate together.
        while k < shares.len() && shares[k].0 == mu {
            let (m, rest, ri) = shares[k];
            plateau += ri * rest;
            slope -= ri * m * rest;
            k += 1;
        }
        segment += 1;
    }
    let last = shares.last().map_or(0.0, |x| 1.0 / x.0);
    Ok(MatrixUpdate {
        alpha_hat: 1.0 + last,
        segment,
        supremum,
    })
}

/// One-pass overestimate of `ρ_{T_k}(A)` for every prefix `T_k` of `order`.
///
/// A row's outside-to-inside ratio is largest when it first enters the
/// neighborhood, so the running maximum of entry-time ratios dominates
/// `max_{i∈N(T_k)} Σ_{j∉T_k} A_ij / Σ_{j∈T_k} A_ij`.
pub fn matrix_rho_prefix(a: &NonnegMatrix, order: &[usize]) -> Vec<f64> {
    let n = order.len();
    let mut position = vec![0; a.cols()];
    for (p, &j) in order.iter().enumerate() {
        position[j] = p;
    }
    let mut running = 0.0f64;
    let mut entered = vec![false; a.rows()];
    let mut out = Vec::with_capacity(n.saturating_sub(1));
    for (k, &j) in order.iter().enumerate().take(n.saturating_sub(1)) {
        for &(i, _) in a.col(j) {
            if entered[i] {
                continue;
            }
            entered[i] = true;
            let (mut inside, mut outside) = (0.0, 0.0);
            for &(c, v) in a.row(i) {
                if position[c] <= k {
                    inside += v;
                } else {
                    outside += v;
                }
            }
            running = running.max(outside / inside);
        }
        out.push(running);
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixRegularizeReport {
    pub scaling: Scaling,
    pub shrunk_cuts: usize,
    pub rho_hat_max: f64,
}

/// Caps every sorted-order ratio `y_k / y_{k+1}` at `max(ρ̂_{T_k}/δ, 1)`.
pub fn matrix_regularize(a: &NonnegMatrix, y: &Scaling, delta: f64) -> Result<MatrixRegularizeReport> {
    let n = a.cols();
    if y.len() != n {
        return Err(ScaleError::DimensionMismatch(format!(
            "scaling of length {} for {} columns",
            y.len(),
            n
        )));
    }
    if !(delta > 0.0 && delta < 0.5) {
        return Err(ScaleError::InvalidInput(format!("delta must lie in (0, 1/2), got {delta}")));
    }
    let vals = y.as_slice();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&p, &q| vals[q].total_cmp(&vals[p]).then(p.cmp(&q)));
    let low = vals[order[n - 1]];
    let rhos = matrix_rho_prefix(a, &order);

    let mut out = vec![0.0; n];
    out[order[n - 1]] = 1.0;
    let mut factor = 1.0;
    let mut shrunk_cuts = 0;
    for k in (1..n).rev() {
        let cap = (rhos[k - 1] / delta).max(1.0);
        let ratio = vals[order[k - 1]] / vals[order[k]];
        if ratio > cap * (1.0 + 1e-12) {
            factor *= cap / ratio;
            shrunk_cuts += 1;
        }
        out[order[k - 1]] = vals[order[k - 1]] / low * factor;
    }
    Ok(MatrixRegularizeReport {
        scaling: Scaling::new(out)?,
        shrunk_cuts,
        rho_hat_max: rhos.iter().copied().fold(0.0, f64::max),
    })
}

/// `⌈40 n³ ln(max(n,2) · max(s,1) / ε)⌉`.
pub fn matrix_iteration_cap(n: usize, s: f64, eps: f64) -> usize {
    let n_f = n as f64;
    (40.0 * n_f.powi(3) * (n_f.max(2.0) * s.max(1.0) / eps).ln())
        .ceil()
        .max(1.0) as usize
}

/// `γ / (15 s n³)`.
pub fn matrix_delta(gamma: f64, s: f64, n: usize) -> f64 {
    gamma / (15.0 * s * (n as f64).powi(3))
}

fn combined_error(col: &[f64], c: &[f64]) -> f64 {
    col.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Scales `A` towards row sums `r` and column sums `c`, or returns a column
/// set `T` with `c(T) > r(N(T))`.
pub fn run_matrix(
    a: &NonnegMatrix,
    marginals: &MatrixMarginals,
    eps: f64,
    config: &SolverConfig,
) -> Result<ScalingResult> {
    let (m, n) = (a.rows(), a.cols());
    let r = marginals.rows();
    let c = marginals.cols();
    if r.len() != m || c.len() != n {
        return Err(ScaleError::DimensionMismatch(format!(
            "{m}x{n} matrix with {} row and {} column marginals",
            r.len(),
            c.len()
        )));
    }
    if !(eps.is_finite() && eps > 0.0) {
        return Err(ScaleError::InvalidInput(format!("eps must be positive, got {eps}")));
    }
    let s = marginals.total();
    let cap = config
        .max_iters
        .unwrap_or_else(|| matrix_iteration_cap(n, s, eps));

    let hall = |set: &[usize]| -> Option<Vec<usize>> {
        let mass: f64 = set.iter().map(|&j| c[j]).sum();
        let reach: f64 = neighborhood(a, set).iter().map(|&i| r[i]).sum();
        (mass > reach + HALL_TOL * s).then(|| set.to_vec())
    };

    let mut y = Scaling::ones(n);
    let mut col = column_sums(a, r, y.as_slice())?;
    let mut error_sq = combined_error(&col, c);
    let mut trace = Vec::new();
    let mut iteration = 0;
    loop {
        if error_sq <= eps * eps {
            return Ok(ScalingResult {
                outcome: Outcome::Scaled(y),
                iterations: iteration,
                final_error_sq: error_sq,
                trace,
            });
        }
        if n < 2 {
            // A single column carries all the mass; a mismatch is a rounding artifact.
            return Err(ScaleError::InvalidInput("single-column instance cannot be balanced".into()));
        }
        if iteration >= cap {
            return Err(ScaleError::IterationCapExceeded {
                cap,
                trace: Box::new(trace),
            });
        }
        let margin = select_margin_set(&col, c)?;
        let set = margin.members();
        if let Some(cert) = hall(&set) {
            return Ok(ScalingResult {
                outcome: Outcome::Infeasible(cert),
                iterations: iteration,
                final_error_sq: error_sq,
                trace,
            });
        }
        let gamma = margin.gamma;
        let update = matrix_update(a, r, y.as_slice(), &set, gamma)?;
        let progress = matrix_gain(a, r, y.as_slice(), &set, update.alpha_hat)?;
        let updated = y.scale_up(&set, update.alpha_hat)?.normalized();
        let log_range_updated = updated.log_range();
        let delta = matrix_delta(gamma, s, n).min(0.25);
        let (next, shrunk_cuts) = if config.regularize {
            let rep = matrix_regularize(a, &updated, delta)?;
            (rep.scaling, rep.shrunk_cuts)
        } else {
            (updated, 0)
        };
        y = next;
        col = column_sums(a, r, y.as_slice())?;
        let error_sq_after = combined_error(&col, c);
        if config.record_trace {
            trace.push(IterationRecord {
                iteration,
                error_sq,
                error_sq_after,
                gamma,
                nu: margin.nu,
                set_size: set.len(),
                alpha_hat: update.alpha_hat,
                progress,
                h_prime_one: None,
                nd_iters: 0,
                guess_branch: false,
                regularized: config.regularize,
                delta,
                shrunk_cuts,
                log_range_updated,
                log_range: y.log_range(),
            });
        }
        error_sq = error_sq_after;
        iteration += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat(m: usize, n: usize, e: &[f64]) -> NonnegMatrix {
        NonnegMatrix::from_row_slice(m, n, e).unwrap()
    }

    #[test]
    fn column_sum_examples() {
        let ones = mat(2, 2, &[1.0; 4]);
        assert_eq!(column_sums(&ones, &[1.0, 1.0], &[1.0, 1.0]).unwrap(), vec![1.0, 1.0]);
        let tri = mat(2, 2, &[1.0, 0.0, 1.0, 1.0]);
        assert_eq!(column_sums(&tri, &[1.0, 1.0], &[1.0, 1.0]).unwrap(), vec![1.5, 0.5]);
        let a = column_sums(&tri, &[1.0, 1.0], &[2.0, 3.0]).unwrap();
        let b = column_sums(&tri, &[1.0, 1.0], &[14.0, 21.0]).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn neighborhood_examples() {
        let tri = mat(2, 2, &[1.0, 0.0, 1.0, 1.0]);
        assert_eq!(neighborhood(&tri, &[1]), vec![1]);
        assert_eq!(neighborhood(&tri, &[0, 1]), vec![0, 1]);
        assert!(neighborhood(&tri, &[]).is_empty());
        let id = mat(3, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(neighborhood(&id, &[0, 2]), vec![0, 2]);
    }

    #[test]
    fn rejects_zero_lines() {
        assert!(NonnegMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 0.0]).is_err());
        assert!(NonnegMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 0.0]).is_err());
        assert!(NonnegMatrix::from_row_slice(1, 2, &[1.0, -1.0]).is_err());
    }

    #[test]
    fn update_single_row() {
        // Row 0 splits its mass evenly between column 0 (in T) and column 1.
        let a = mat(1, 2, &[1.0, 1.0]);
        let up = matrix_update(&a, &[1.0], &[1.0, 1.0], &[0], 0.2).unwrap();
        assert!((up.alpha_hat - 1.8).abs() < 1e-15);
        assert_eq!(up.segment, 0);
    }

    #[test]
    fn update_near_supremum_uses_last_segment() {
        let a = mat(2, 3, &[1.0, 1.0, 0.0, 1.0, 2.0, 2.0]);
        let r = [1.0, 1.0];
        let y = [1.0, 1.0, 1.0];
        let up = matrix_update(&a, &r, &y, &[0], 1.5).unwrap_err();
        assert!(matches!(up, ScaleError::InfeasibleSegment { .. }));
        let sup = 0.5 + 0.8;
        let up = matrix_update(&a, &r, &y, &[0], sup - 1e-15).unwrap();
        // Breakpoints at α−1 = 2 and 5.
        assert!(up.alpha_hat > 3.0 && up.alpha_hat <= 6.0);
        assert_eq!(up.segment, 1);
    }

    #[test]
    fn update_full_rows_has_no_room() {
        let a = mat(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let err = matrix_update(&a, &[1.0, 1.0], &[1.0, 1.0], &[0], 0.1).unwrap_err();
        assert!(matches!(err, ScaleError::InfeasibleSegment { supremum, .. } if supremum == 0.0));
    }

    #[test]
    fn run_examples() {
        let cfg = SolverConfig::default();
        let ones = mat(2, 2, &[1.0; 4]);
        let marg = MatrixMarginals::new(vec![1.0, 1.0], vec![1.0, 1.0]).unwrap();
        let res = run_matrix(&ones, &marg, 1e-8, &cfg).unwrap();
        assert_eq!(res.iterations, 0);
        assert_eq!(res.scaling().unwrap(), &Scaling::ones(2));

        let tri = mat(2, 2, &[1.0, 0.0, 1.0, 1.0]);
        let res = run_matrix(&tri, &marg, 1e-6, &cfg).unwrap();
        assert!(res.scaling().is_some());
        assert!(res.final_error_sq <= 1e-12);

        let id = mat(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let marg = MatrixMarginals::new(vec![1.0, 1.0], vec![1.5, 0.5]).unwrap();
        let res = run_matrix(&id, &marg, 1e-8, &cfg).unwrap();
        assert_eq!(res.certificate(), Some(&[0usize][..]));
    }

    #[test]
    fn rho_prefix_dominates_exact() {
        let a = mat(3, 3, &[1.0, 2.0, 0.0, 0.5, 0.5, 3.0, 0.0, 1.0, 1.0]);
        let order = [1, 0, 2];
        let rhos = matrix_rho_prefix(&a, &order);
        for k in 1..3 {
            let set = &order[..k];
            let exact = neighborhood(&a, set)
                .iter()
                .map(|&i| {
                    let (mut inside, mut outside) = (0.0, 0.0);
                    for &(j, v) in a.row(i) {
                        if set.contains(&j) {
                            inside += v;
                        } else {
                            outside += v;
                        }
                    }
                    outside / inside
                })
                .fold(0.0, f64::max);
            assert!(rhos[k - 1] >= exact - 1e-15);
        }
    }
}
