//! The outer frame-scaling loop: margin-set selection, the subset proxy `h`,
//! infeasibility certificates and the iteration driver.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ScaleError};
use crate::linalg::{
    leverage_scores_with, numerical_rank_with_tol, rank_tolerance, whitened_columns, Frame,
    GramContext, Scaling,
};
use crate::regularize::Regularizer;
use crate::update::compute_update;

/// Slack used when comparing `⟨c, 1_T⟩` against an integer rank.
pub const CERTIFICATE_TOL: f64 = 1e-7;

/// Target column norms `c`, with `⟨c, 1⟩ = d`.
#[derive(Debug, Clone, PartialEq)]
pub struct Marginals(Vec<f64>);

impl Marginals {
    pub fn new(values: Vec<f64>, d: usize) -> Result<Self> {
        if let Some(j) = values.iter().position(|&v| !(v.is_finite() && v > 0.0)) {
            return Err(ScaleError::InvalidInput(format!(
                "marginal {j} is not a positive finite number ({})",
                values[j]
            )));
        }
        let total: f64 = values.iter().sum();
        if (total - d as f64).abs() > 1e-9 * d as f64 {
            return Err(ScaleError::InvalidInput(format!(
                "marginals sum to {total}, expected {d}"
            )));
        }
        Ok(Self(values))
    }

    /// `c = (d/n) 1_n`, the Forster-transform target.
    pub fn uniform(d: usize, n: usize) -> Self {
        Self(vec![d as f64 / n as f64; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// A prefix of the ascending order of `ℓ − c` together with its margin.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginSet {
    /// Indices sorted by `ℓ_j − c_j` ascending (ties by index).
    pub order: Vec<usize>,
    /// `|T|`; the set is `order[..cut]`.
    pub cut: usize,
    pub gamma: f64,
    pub nu: f64,
}

impl MarginSet {
    /// Members of `T` in increasing index order.
    pub fn members(&self) -> Vec<usize> {
        let mut t = self.order[..self.cut].to_vec();
        t.sort_unstable();
        t
    }

    pub fn complement(&self) -> Vec<usize> {
        let mut t = self.order[self.cut..].to_vec();
        t.sort_unstable();
        t
    }
}

/// Picks the prefix of the sorted error vector with the widest gap.
pub fn select_margin_set(lev: &[f64], c: &[f64]) -> Result<MarginSet> {
    let n = lev.len();
    if c.len() != n {
        return Err(ScaleError::DimensionMismatch(format!(
            "{} leverage scores vs {} marginals",
            n,
            c.len()
        )));
    }
    if n < 2 {
        return Err(ScaleError::InvalidInput("margin set needs n >= 2".into()));
    }
    let x: Vec<f64> = lev.iter().zip(c).map(|(l, c)| l - c).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(a.cmp(&b)));

    let mut cut = 1;
    let mut widest = f64::NEG_INFINITY;
    for k in 1..n {
        let gap = x[order[k]] - x[order[k - 1]];
        if gap > widest {
            widest = gap;
            cut = k;
        }
    }
    let lo = x[order[cut - 1]];
    let hi = x[order[cut]];
    let gamma = (hi - lo) / 2.0;
    if gamma == 0.0 && x.iter().any(|&v| v != 0.0) {
        return Err(ScaleError::DegenerateMargin);
    }
    Ok(MarginSet {
        order,
        cut,
        gamma,
        nu: (hi + lo) / 2.0,
    })
}

/// Evaluates `h(α) = tr[α M_T (M_T̄ + α M_T)⁻¹]` and its derivative.
///
/// Internally works with the whitened Gram `C` of `L⁻¹ U_T Z_T^{1/2}` (using
/// whichever of `WᵀW`, `WWᵀ` is smaller), whose nonzero spectrum is the
/// spectrum `μ` of `M_T (U Z Uᵀ)⁻¹`. Then `h(α) = tr[α C (I + (α-1) C)⁻¹]`.
#[derive(Debug, Clone)]
pub struct ProxyContext {
    pub m_t: DMatrix<f64>,
    pub m_tbar: DMatrix<f64>,
    pub(crate) whitened: DMatrix<f64>,
    compact: DMatrix<f64>,
}

impl ProxyContext {
    pub fn new(frame: &Frame, z: &Scaling, set: &[usize]) -> Result<Self> {
        let gram = GramContext::new(frame, z)?;
        Self::with_gram(frame, z, set, gram)
    }

    pub(crate) fn with_gram(
        frame: &Frame,
        z: &Scaling,
        set: &[usize],
        gram: GramContext,
    ) -> Result<Self> {
        let n = frame.len();
        if set.iter().any(|&j| j >= n) {
            return Err(ScaleError::InvalidInput("set index out of range".into()));
        }
        let mut inside = vec![false; n];
        for &j in set {
            inside[j] = true;
        }
        let d = frame.dim();
        let mut m_t = DMatrix::zeros(d, d);
        let mut m_tbar = DMatrix::zeros(d, d);
        for j in 0..n {
            let u = frame.column(j);
            let target = if inside[j] { &mut m_t } else { &mut m_tbar };
            target.ger(z.as_slice()[j], &u, &u, 1.0);
        }
        let whitened = whitened_columns(frame, z, &gram, set);
        let compact = if set.len() <= d {
            whitened.transpose() * &whitened
        } else {
            &whitened * whitened.transpose()
        };
        Ok(Self {
            m_t,
            m_tbar,
            whitened,
            compact,
        })
    }

    /// `h(1) = Σ_{j∈T} ℓ_j = tr[M_T (U Z Uᵀ)⁻¹]`.
    pub fn leverage_sum(&self) -> f64 {
        self.compact.trace()
    }

    fn shifted_solves(&self, alpha: f64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(ScaleError::InvalidInput(format!("alpha must be positive, got {alpha}")));
        }
        let k = self.compact.nrows();
        let eye = DMatrix::<f64>::identity(k, k);
        let shifted = &eye + &self.compact * (alpha - 1.0);
        let chol = nalgebra::Cholesky::new(shifted).ok_or_else(|| {
            ScaleError::FactorizationFailure(format!("shifted proxy matrix at alpha = {alpha}"))
        })?;
        let x = chol.solve(&self.compact);
        let y = chol.solve(&(eye - &self.compact));
        Ok((x, y))
    }

    pub fn h(&self, alpha: f64) -> Result<f64> {
        let (x, _) = self.shifted_solves(alpha)?;
        Ok(alpha * x.trace())
    }

    /// `h(α) − h(1)`, evaluated directly as `(α−1) tr[C (I−C) (I + (α−1)C)⁻¹]`.
    pub fn gain(&self, alpha: f64) -> Result<f64> {
        if alpha == 1.0 {
            return Ok(0.0);
        }
        let (x, _) = self.shifted_solves(alpha)?;
        let k = self.compact.nrows();
        let eye = DMatrix::<f64>::identity(k, k);
        Ok((alpha - 1.0) * trace_of_product(&x, &(eye - &self.compact)))
    }

    /// `h'(α) = tr[M_T S⁻¹ M_T̄ S⁻¹]` with `S = M_T̄ + α M_T`.
    pub fn h_prime(&self, alpha: f64) -> Result<f64> {
        let (x, y) = self.shifted_solves(alpha)?;
        Ok(trace_of_product(&x, &y))
    }
}

/// `tr(A B)` without forming the product.
pub(crate) fn trace_of_product(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let mut s = 0.0;
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            s += a[(i, j)] * b[(j, i)];
        }
    }
    s
}

pub fn proxy_h(ctx: &ProxyContext, alpha: f64) -> Result<f64> {
    ctx.h(alpha)
}

pub fn proxy_h_prime(ctx: &ProxyContext, alpha: f64) -> Result<f64> {
    ctx.h_prime(alpha)
}

/// Returns `T` when `rk(U_T) < ⟨c, 1_T⟩ − 1e-7`.
pub fn check_infeasibility(frame: &Frame, c: &[f64], set: &[usize]) -> Option<Vec<usize>> {
    check_infeasibility_tol(frame, c, set, 1.0)
}

pub(crate) fn check_infeasibility_tol(
    frame: &Frame,
    c: &[f64],
    set: &[usize],
    rank_tol_scale: f64,
) -> Option<Vec<usize>> {
    let mass: f64 = set.iter().map(|&j| c[j]).sum();
    if mass <= CERTIFICATE_TOL {
        return None;
    }
    let cols = frame.select(set);
    let rank = numerical_rank_with_tol(&cols, rank_tol_scale * rank_tolerance(&cols));
    if (rank as f64) < mass - CERTIFICATE_TOL {
        let mut t = set.to_vec();
        t.sort_unstable();
        Some(t)
    } else {
        None
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Outer-loop cap; `None` uses `⌈40 n³ ln(max(n,2)/ε)⌉`.
    pub max_iters: Option<usize>,
    /// Multiplier on the default rank tolerance.
    pub rank_tol_scale: f64,
    pub record_trace: bool,
    /// Disabling this is meant for test harnesses only.
    pub regularize: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iters: None,
            rank_tol_scale: 1.0,
            record_trace: true,
            regularize: true,
        }
    }
}

pub fn default_iteration_cap(n: usize, eps: f64) -> usize {
    let n_f = n as f64;
    (40.0 * n_f.powi(3) * (n_f.max(2.0) / eps).ln()).ceil().max(1.0) as usize
}

/// One outer iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Squared error at the start of the iteration.
    pub error_sq: f64,
    /// Squared error after the update and regularization.
    pub error_sq_after: f64,
    pub gamma: f64,
    pub nu: f64,
    pub set_size: usize,
    pub alpha_hat: f64,
    /// `h(α̂) − h(1)`.
    pub progress: f64,
    /// `h'(1)` (frame runs only).
    pub h_prime_one: Option<f64>,
    pub nd_iters: usize,
    pub guess_branch: bool,
    pub regularized: bool,
    pub delta: f64,
    pub shrunk_cuts: usize,
    /// `log(z_max/z_min)` right after the multiplicative update.
    pub log_range_updated: f64,
    /// `log(z_max/z_min)` at the end of the iteration.
    pub log_range: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Scaled(Scaling),
    Infeasible(Vec<usize>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Scaled,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingResult {
    pub outcome: Outcome,
    pub iterations: usize,
    pub final_error_sq: f64,
    pub trace: Vec<IterationRecord>,
}

impl ScalingResult {
    pub fn status(&self) -> Status {
        match self.outcome {
            Outcome::Scaled(_) => Status::Scaled,
            Outcome::Infeasible(_) => Status::Infeasible,
        }
    }

    pub fn scaling(&self) -> Option<&Scaling> {
        match &self.outcome {
            Outcome::Scaled(z) => Some(z),
            Outcome::Infeasible(_) => None,
        }
    }

    pub fn certificate(&self) -> Option<&[usize]> {
        match &self.outcome {
            Outcome::Infeasible(t) => Some(t),
            Outcome::Scaled(_) => None,
        }
    }
}

fn squared_error(lev: &[f64], c: &[f64]) -> f64 {
    lev.iter().zip(c).map(|(l, c)| (l - c) * (l - c)).sum()
}

/// Regularization precision used by the main loop, `γ / (15 n^{5/2} d)`.
pub fn loop_delta(gamma: f64, n: usize, d: usize) -> f64 {
    gamma / (15.0 * (n as f64).powf(2.5) * d as f64)
}

/// Scales `frame` towards marginals `c` until `‖ℓ(z) − c‖² ≤ ε²`, or returns
/// a set `T` with `⟨c, 1_T⟩ > rk(U_T)`.
pub fn run(frame: &Frame, c: &Marginals, eps: f64, config: &SolverConfig) -> Result<ScalingResult> {
    let n = frame.len();
    let d = frame.dim();
    if c.len() != n {
        return Err(ScaleError::DimensionMismatch(format!(
            "{} marginals for {} columns",
            c.len(),
            n
        )));
    }
    if !(eps.is_finite() && eps > 0.0) {
        return Err(ScaleError::InvalidInput(format!("eps must be positive, got {eps}")));
    }
    let c = c.as_slice();
    let cap = config.max_iters.unwrap_or_else(|| default_iteration_cap(n, eps));

    let regularizer = Regularizer::new(frame)?;
    let mut z = Scaling::ones(n);
    let mut gram = GramContext::new(frame, &z)?;
    let mut lev = leverage_scores_with(frame, &z, &gram);
    let mut error_sq = squared_error(&lev, c);

    // A single column carrying more than one unit of mass is infeasible on its own.
    for j in 0..n {
        if let Some(cert) = check_infeasibility_tol(frame, c, &[j], config.rank_tol_scale) {
            return Ok(ScalingResult {
                outcome: Outcome::Infeasible(cert),
                iterations: 0,
                final_error_sq: error_sq,
                trace: Vec::new(),
            });
        }
    }
    let mut trace = Vec::new();
    let mut iteration = 0;

    loop {
        if error_sq <= eps * eps {
            return Ok(ScalingResult {
                outcome: Outcome::Scaled(z),
                iterations: iteration,
                final_error_sq: error_sq,
                trace,
            });
        }
        if iteration >= cap {
            return Err(ScaleError::IterationCapExceeded {
                cap,
                trace: Box::new(trace),
            });
        }

        let margin = select_margin_set(&lev, c)?;
        let set = margin.members();
        if let Some(cert) = check_infeasibility_tol(frame, c, &set, config.rank_tol_scale) {
            return Ok(ScalingResult {
                outcome: Outcome::Infeasible(cert),
                iterations: iteration,
                final_error_sq: error_sq,
                trace,
            });
        }

        let gamma = margin.gamma.min(1.0);
        let update = compute_update(frame, &z, &set, gamma)?;
        let updated = z.scale_up(&set, update.alpha_hat)?.normalized();
        let log_range_updated = updated.log_range();

        let delta = loop_delta(gamma, n, d);
        let (next, shrunk_cuts) = if config.regularize {
            let report = regularizer.regularize(&updated, delta)?;
            (report.scaling, report.shrunk_cuts)
        } else {
            (updated, 0)
        };

        z = next;
        gram = GramContext::new(frame, &z)?;
        lev = leverage_scores_with(frame, &z, &gram);
        let error_sq_after = squared_error(&lev, c);

        if config.record_trace {
            trace.push(IterationRecord {
                iteration,
                error_sq,
                error_sq_after,
                gamma: margin.gamma,
                nu: margin.nu,
                set_size: set.len(),
                alpha_hat: update.alpha_hat,
                progress: update.gain,
                h_prime_one: Some(update.h_prime_one),
                nd_iters: update.nd_iterations,
                guess_branch: update.guess_branch,
                regularized: config.regularize,
                delta,
                shrunk_cuts,
                log_range_updated,
                log_range: z.log_range(),
            });
        }
        error_sq = error_sq_after;
        iteration += 1;
    }
}
