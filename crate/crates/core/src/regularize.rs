//! Prefix-gap shrinking of a scaling vector followed by snapping to a grid.

use nalgebra::DMatrix;

use crate::error::{Result, ScaleError};
use crate::linalg::{pinv_trace, whitened_columns, Frame, GramContext, Scaling};

/// Relative slack on cap comparisons, so a second pass over an already
/// regularized vector does not re-trigger on rounding noise.
const CAP_SLACK: f64 = 1e-12;

/// Overestimate of `1 + ρ_T(U)`: `max(tr[(U_Tᵀ (U Uᵀ)⁻¹ U_T)⁺], 1)`.
pub fn rho_overestimate(frame: &Frame, set: &[usize]) -> Result<f64> {
    if set.is_empty() {
        return Err(ScaleError::InvalidInput("rho needs a nonempty set".into()));
    }
    if set.iter().any(|&j| j >= frame.len()) {
        return Err(ScaleError::InvalidInput("set index out of range".into()));
    }
    let ones = Scaling::ones(frame.len());
    let ctx = GramContext::new(frame, &ones)?;
    let w = whitened_columns(frame, &ones, &ctx, set);
    let small = if set.len() <= frame.dim() {
        w.transpose() * &w
    } else {
        &w * w.transpose()
    };
    Ok(pinv_trace(&small).max(1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegularizeReport {
    pub scaling: Scaling,
    /// Number of prefix cuts whose ratio had to be capped.
    pub shrunk_cuts: usize,
    /// Largest `ρ̂` over all prefixes of the sorted order.
    pub rho_hat_max: f64,
    /// Grid spacing used for snapping, `1 / ⌈2/δ⌉`.
    pub grid: f64,
}

/// Holds `(U Uᵀ)^{-1/2}`-whitened columns so prefix `ρ̂` values can be
/// accumulated with one rank-one update per cut.
#[derive(Debug, Clone)]
pub struct Regularizer {
    whitened: DMatrix<f64>,
}

impl Regularizer {
    pub fn new(frame: &Frame) -> Result<Self> {
        let ones = Scaling::ones(frame.len());
        let ctx = GramContext::new(frame, &ones)?;
        let all: Vec<usize> = (0..frame.len()).collect();
        Ok(Self {
            whitened: whitened_columns(frame, &ones, &ctx, &all),
        })
    }

    /// `ρ̂` of each prefix `order[..k]`, `k = 1..n−1`.
    pub fn prefix_rhos(&self, order: &[usize]) -> Vec<f64> {
        let d = self.whitened.nrows();
        let mut acc = DMatrix::<f64>::zeros(d, d);
        let mut out = Vec::with_capacity(order.len().saturating_sub(1));
        for &j in order.iter().take(order.len().saturating_sub(1)) {
            let w = self.whitened.column(j);
            acc.ger(1.0, &w, &w, 1.0);
            out.push(pinv_trace(&acc).max(1.0));
        }
        out
    }

    pub fn regularize(&self, z: &Scaling, delta: f64) -> Result<RegularizeReport> {
        let n = self.whitened.ncols();
        if z.len() != n {
            return Err(ScaleError::DimensionMismatch(format!(
                "scaling of length {} for {} columns",
                z.len(),
                n
            )));
        }
        if !(delta > 0.0 && delta < 0.5) {
            return Err(ScaleError::InvalidInput(format!("delta must lie in (0, 1/2), got {delta}")));
        }
        let vals = z.as_slice();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]).then(a.cmp(&b)));
        let low = vals[order[n - 1]];
        let v: Vec<f64> = order.iter().map(|&j| vals[j] / low).collect();

        let rhos = self.prefix_rhos(&order);
        let caps: Vec<f64> = rhos.iter().map(|r| r / delta).collect();

        // Shrink: walk cuts bottom-up, tracking the factor applied to everything above.
        let mut shrunk = vec![0.0; n];
        shrunk[n - 1] = 1.0;
        let mut factor = 1.0;
        let mut shrunk_cuts = 0;
        for k in (1..n).rev() {
            let ratio = v[k - 1] / v[k];
            if ratio > caps[k - 1] * (1.0 + CAP_SLACK) {
                factor *= caps[k - 1] / ratio;
                shrunk_cuts += 1;
            }
            shrunk[k - 1] = v[k - 1] * factor;
        }

        // Snap to multiples of 1/N, never letting a ratio exceed its cap.
        let steps = (2.0 / delta).ceil();
        let grid = 1.0 / steps;
        let mut snapped = vec![0.0; n];
        snapped[n - 1] = 1.0;
        for k in (1..n).rev() {
            let mut s = snap_nearest(shrunk[k - 1], steps);
            let bound = caps[k - 1] * snapped[k];
            if s > bound * (1.0 + CAP_SLACK) {
                s = snap_floor(bound, steps);
            }
            snapped[k - 1] = s.max(snapped[k]).max(grid);
        }

        let mut out = vec![0.0; n];
        for (pos, &j) in order.iter().enumerate() {
            out[j] = snapped[pos];
        }
        Ok(RegularizeReport {
            scaling: Scaling::new(out)?,
            shrunk_cuts,
            rho_hat_max: rhos.iter().copied().fold(1.0, f64::max),
            grid,
        })
    }
}

/// Beyond this many grid steps a float cannot resolve the grid anyway.
const GRID_LIMIT: f64 = 4_503_599_627_370_496.0;

fn snap_nearest(x: f64, steps: f64) -> f64 {
    let m = x * steps;
    if m >= GRID_LIMIT {
        x
    } else {
        m.round() / steps
    }
}

fn snap_floor(x: f64, steps: f64) -> f64 {
    let m = x * steps;
    if m >= GRID_LIMIT {
        x
    } else {
        m.floor() / steps
    }
}

/// Convenience wrapper around [`Regularizer::regularize`].
pub fn regularize(frame: &Frame, z: &Scaling, delta: f64) -> Result<Scaling> {
    Ok(Regularizer::new(frame)?.regularize(z, delta)?.scaling)
}
