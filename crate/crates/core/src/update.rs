//! Step-size computation: Newton-Dinkelbach on the subset proxy, seeded by a
//! coarse estimate of the small-eigenvalue mass obtained from a determinant
//! local optimum.

use nalgebra::DMatrix;

use crate::error::{Result, ScaleError};
use crate::frame::ProxyContext;
use crate::linalg::{logdet_sym_unchecked, numerical_rank, Frame, Scaling};

/// Derivative values at or below this are treated as zero.
pub const DERIVATIVE_FLOOR: f64 = 1e-14;

/// An increasing concave differentiable function of one variable.
pub trait ConcaveFn {
    fn value(&self, alpha: f64) -> Result<f64>;
    fn derivative(&self, alpha: f64) -> Result<f64>;
}

/// Adapts a pair of closures `(f, f')`.
pub struct ScalarFn<V, D>(pub V, pub D);

impl<V, D> ConcaveFn for ScalarFn<V, D>
where
    V: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    fn value(&self, alpha: f64) -> Result<f64> {
        Ok((self.0)(alpha))
    }
    fn derivative(&self, alpha: f64) -> Result<f64> {
        Ok((self.1)(alpha))
    }
}

/// `h(α) − h(1)` for a fixed subset.
pub struct ProxyGain<'a>(pub &'a ProxyContext);

impl ConcaveFn for ProxyGain<'_> {
    fn value(&self, alpha: f64) -> Result<f64> {
        self.0.gain(alpha)
    }
    fn derivative(&self, alpha: f64) -> Result<f64> {
        self.0.h_prime(alpha)
    }
}

#[derive(Debug, Clone)]
pub struct NdProblem<F> {
    pub f: F,
    pub alpha0: f64,
    pub b_low: f64,
    pub b_high: f64,
    pub max_iters: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NdStep {
    pub alpha: f64,
    pub value: f64,
    pub derivative: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NdOutcome {
    pub alpha: f64,
    pub value: f64,
    pub iterations: usize,
    /// One entry per evaluated iterate, starting with `α₀`. The derivative of
    /// the final iterate is not evaluated and is stored as NaN.
    pub history: Vec<NdStep>,
}

/// `⌈12 log₂(n d)⌉ + 8`.
pub fn nd_iteration_cap(n: usize, d: usize) -> usize {
    let nd = (n * d).max(2) as f64;
    (12.0 * nd.log2()).ceil() as usize + 8
}

/// Newton-Dinkelbach for `b' ≤ f(α) ≤ b`: `α ← α + (b − f(α)) / f'(α)`
/// until `f(α) ≥ b'`.
pub fn newton_dinkelbach<F: ConcaveFn>(problem: &NdProblem<F>) -> Result<NdOutcome> {
    let NdProblem {
        f,
        alpha0,
        b_low,
        b_high,
        max_iters,
    } = problem;
    if !(b_low < b_high) {
        return Err(ScaleError::PreconditionViolated(format!(
            "need b' < b, got b' = {b_low}, b = {b_high}"
        )));
    }
    let mut alpha = *alpha0;
    let mut value = f.value(alpha)?;
    if value > b_high + 1e-9 {
        return Err(ScaleError::PreconditionViolated(format!(
            "f(alpha0) = {value} exceeds the upper target {b_high}"
        )));
    }
    let mut history = Vec::new();
    let mut iterations = 0;
    while value < *b_low {
        if iterations >= *max_iters {
            return Err(ScaleError::NdIterationCap { cap: *max_iters });
        }
        let derivative = f.derivative(alpha)?;
        history.push(NdStep {
            alpha,
            value,
            derivative,
        });
        if !(derivative > DERIVATIVE_FLOOR) {
            return Err(ScaleError::DerivativeVanished { alpha, derivative });
        }
        alpha += (b_high - value) / derivative;
        value = f.value(alpha)?;
        iterations += 1;
    }
    history.push(NdStep {
        alpha,
        value,
        derivative: f64::NAN,
    });
    Ok(NdOutcome {
        alpha,
        value,
        iterations,
        history,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenSumEstimate {
    pub mu_tilde: f64,
    pub p: usize,
    /// The determinant local optimum used for the projection (frame indices).
    pub subset: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalOpt {
    /// Frame column indices, increasing.
    pub members: Vec<usize>,
    pub swaps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UpdateOutcome {
    pub alpha_hat: f64,
    /// `h(α̂) − h(1)`.
    pub gain: f64,
    pub h_prime_one: f64,
    pub alpha0: f64,
    pub nd_iterations: usize,
    pub guess_branch: bool,
    pub estimate: Option<EigenSumEstimate>,
}

fn validate_set(frame: &Frame, set: &[usize]) -> Result<()> {
    if set.is_empty() {
        return Err(ScaleError::InvalidInput("index set is empty".into()));
    }
    let mut seen = vec![false; frame.len()];
    for &j in set {
        if j >= frame.len() || seen[j] {
            return Err(ScaleError::InvalidInput(format!(
                "index set has an invalid or repeated entry {j}"
            )));
        }
        seen[j] = true;
    }
    Ok(())
}

/// Finds `α̂ ≥ 1` with `γ/5 ≤ h(α̂) − h(1) ≤ γ`.
pub fn compute_update(frame: &Frame, z: &Scaling, set: &[usize], gamma: f64) -> Result<UpdateOutcome> {
    validate_set(frame, set)?;
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(ScaleError::InvalidInput(format!("gamma must lie in (0, 1], got {gamma}")));
    }
    let ctx = ProxyContext::new(frame, z, set)?;
    let h_prime_one = ctx.h_prime(1.0)?;

    let mut estimate = None;
    let mut alpha0 = 1.0;
    let guess_branch = h_prime_one < gamma / 4.0;
    if guess_branch {
        let est = estimate_from_context(frame, set, &ctx, h_prime_one)?;
        if est.mu_tilde > 0.0 {
            let seed = 1.0 + gamma / (2.0 * est.mu_tilde);
            if seed.is_finite() && ctx.gain(seed)? <= gamma + 1e-9 {
                alpha0 = seed;
            }
        }
        estimate = Some(est);
    }

    let nd = newton_dinkelbach(&NdProblem {
        f: ProxyGain(&ctx),
        alpha0,
        b_low: gamma / 5.0,
        b_high: gamma,
        max_iters: nd_iteration_cap(frame.len(), frame.dim()),
    })?;
    Ok(UpdateOutcome {
        alpha_hat: nd.alpha,
        gain: nd.value,
        h_prime_one,
        alpha0,
        nd_iterations: nd.iterations,
        guess_branch,
        estimate,
    })
}

/// Estimates `μ_s = Σ_{μ_i < 1/2} μ_i` for the spectrum of
/// `U_T Z_T U_Tᵀ (U Z Uᵀ)⁻¹`, within a factor `1 + 8nd²`.
pub fn approx_small_eigen_sum(frame: &Frame, z: &Scaling, set: &[usize]) -> Result<EigenSumEstimate> {
    validate_set(frame, set)?;
    let ctx = ProxyContext::new(frame, z, set)?;
    let h_prime_one = ctx.h_prime(1.0)?;
    estimate_from_context(frame, set, &ctx, h_prime_one)
}

fn nearest_count(trace: f64) -> Result<usize> {
    if (trace - trace.floor() - 0.5).abs() == 0.0 {
        return Err(ScaleError::PreconditionViolated(format!(
            "trace {trace} is equidistant from two integers"
        )));
    }
    Ok(trace.round().max(0.0) as usize)
}

fn estimate_from_context(
    frame: &Frame,
    set: &[usize],
    ctx: &ProxyContext,
    h_prime_one: f64,
) -> Result<EigenSumEstimate> {
    if !(h_prime_one < 0.25) {
        return Err(ScaleError::GuessPreconditionViolated { h_prime_one });
    }
    let trace = ctx.leverage_sum();
    let p = nearest_count(trace)?;
    let rank = numerical_rank(&frame.select(set));
    if p == rank {
        return Ok(EigenSumEstimate {
            mu_tilde: 0.0,
            p,
            subset: Vec::new(),
        });
    }
    if p == 0 {
        return Ok(EigenSumEstimate {
            mu_tilde: trace,
            p,
            subset: Vec::new(),
        });
    }
    if p > rank {
        return Err(ScaleError::PreconditionViolated(format!(
            "rounded trace {p} exceeds rank {rank}"
        )));
    }
    let w = &ctx.whitened;
    let kernel = w.transpose() * w;
    let (positions, _) = local_opt_on_kernel(&kernel, p);
    let mu_tilde = projection_residual(w, &positions)?;
    Ok(EigenSumEstimate {
        mu_tilde,
        p,
        subset: positions.iter().map(|&k| set[k]).collect(),
    })
}

/// `Σ_j ‖(I − Π) w_j‖²` where `Π` projects onto the span of the chosen columns.
fn projection_residual(w: &DMatrix<f64>, chosen: &[usize]) -> Result<f64> {
    let basis_cols: Vec<_> = chosen.iter().map(|&k| w.column(k).into_owned()).collect();
    let basis = DMatrix::from_columns(&basis_cols);
    let qr = basis.qr();
    let r = qr.r();
    let scale = r.diagonal().amax();
    if r.diagonal().iter().any(|v| !(v.abs() > f64::EPSILON * scale * chosen.len() as f64)) {
        return Err(ScaleError::FactorizationFailure(
            "local optimum columns are numerically dependent".into(),
        ));
    }
    let q = qr.q();
    let mut total = 0.0;
    for col in w.column_iter() {
        let mut res = col.into_owned();
        for _ in 0..2 {
            let coeffs = q.transpose() * &res;
            res -= &q * coeffs;
        }
        total += res.norm_squared();
    }
    Ok(total)
}

fn sub_logdet(kernel: &DMatrix<f64>, idx: &[usize]) -> f64 {
    let k = idx.len();
    let sub = DMatrix::from_fn(k, k, |a, b| kernel[(idx[a], idx[b])]);
    logdet_sym_unchecked(&sub)
}

/// Greedy selection followed by best-swap local search on the Gram kernel
/// `K`. Returns positions into `K` (increasing) and the number of swaps.
fn local_opt_on_kernel(kernel: &DMatrix<f64>, p: usize) -> (Vec<usize>, usize) {
    let k = kernel.nrows();
    let mut chosen: Vec<usize> = Vec::with_capacity(p);
    for _ in 0..p {
        let mut best = f64::NEG_INFINITY;
        let mut pick = None;
        for i in (0..k).filter(|i| !chosen.contains(i)) {
            let mut trial = chosen.clone();
            trial.push(i);
            let v = sub_logdet(kernel, &trial);
            if pick.is_none() || v > best {
                best = v;
                pick = Some(i);
            }
        }
        chosen.push(pick.expect("p does not exceed the number of columns"));
    }
    chosen.sort_unstable();

    let threshold = std::f64::consts::LN_2 + 1e-12;
    let mut swaps = 0;
    loop {
        let current = sub_logdet(kernel, &chosen);
        let mut best = f64::NEG_INFINITY;
        let mut pair = None;
        for (slot, _) in chosen.iter().enumerate() {
            for j in (0..k).filter(|j| !chosen.contains(j)) {
                let mut trial = chosen.clone();
                trial[slot] = j;
                let v = sub_logdet(kernel, &trial);
                if v > best {
                    best = v;
                    pair = Some((slot, j));
                }
            }
        }
        let improves = if current == f64::NEG_INFINITY {
            best > f64::NEG_INFINITY
        } else {
            best > current + threshold
        };
        match pair {
            Some((slot, j)) if improves => {
                chosen[slot] = j;
                chosen.sort_unstable();
                swaps += 1;
            }
            _ => return (chosen, swaps),
        }
    }
}

/// Swap-phase bound `⌈log₂(2p · C(|T|, p))⌉ + 1`.
pub fn swap_bound(set_size: usize, p: usize) -> usize {
    let mut log_binom = 0.0;
    for i in 0..p {
        log_binom += ((set_size - i) as f64).log2() - ((i + 1) as f64).log2();
    }
    ((2.0 * p as f64).log2() + log_binom).ceil() as usize + 1
}

/// A `p`-subset `D ⊆ T` that no single swap can more than double in
/// `det(U_Dᵀ (U Z Uᵀ)⁻¹ U_D Z_D)`.
pub fn det_local_opt(frame: &Frame, z: &Scaling, set: &[usize], p: usize) -> Result<LocalOpt> {
    validate_set(frame, set)?;
    let rank = numerical_rank(&frame.select(set));
    if p == 0 || p >= rank {
        return Err(ScaleError::PreconditionViolated(format!(
            "need 0 < p < rank(U_T) = {rank}, got p = {p}"
        )));
    }
    let ctx = ProxyContext::new(frame, z, set)?;
    let trace = ctx.leverage_sum();
    if trace < p as f64 - 0.5 {
        return Err(ScaleError::PreconditionViolated(format!(
            "leverage mass {trace} is below p - 1/2"
        )));
    }
    let w = &ctx.whitened;
    let kernel = w.transpose() * w;
    let (positions, swaps) = local_opt_on_kernel(&kernel, p);
    let mut members: Vec<usize> = positions.iter().map(|&k| set[k]).collect();
    members.sort_unstable();
    Ok(LocalOpt { members, swaps })
}
