//! Perceptron in the inner product `⟨x, y⟩_Q = xᵀ (U Z Uᵀ)⁻¹ y`, which stands
//! in for the isotropizing left scaling without forming a matrix square root.

use nalgebra::DVector;

use crate::error::{Result, ScaleError};
use crate::linalg::{leverage_scores_with, Frame, GramContext, Scaling};

#[derive(Debug, Clone)]
pub struct QMetric {
    ctx: GramContext,
}

impl QMetric {
    pub fn new(frame: &Frame, z: &Scaling) -> Result<Self> {
        Ok(Self {
            ctx: GramContext::new(frame, z)?,
        })
    }

    pub fn from_context(ctx: GramContext) -> Self {
        Self { ctx }
    }

    pub fn dim(&self) -> usize {
        self.ctx.dim()
    }

    pub fn inner(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        self.ctx.inv_inner(x, y)
    }

    pub fn norm_sq(&self, x: &DVector<f64>) -> f64 {
        self.inner(x, x)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub point: DVector<f64>,
    pub label: i8,
}

impl LabeledSample {
    pub fn new(point: DVector<f64>, label: i8) -> Result<Self> {
        if label != 1 && label != -1 {
            return Err(ScaleError::InvalidInput(format!("label must be +1 or -1, got {label}")));
        }
        Ok(Self { point, label })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerceptronRun {
    pub v: DVector<f64>,
    pub updates: usize,
    /// `‖v‖²_Q` before the first update and after each one.
    pub norm_history: Vec<f64>,
    /// Which parallel seed produced `v` (`2j` for `+u_j`, `2j+1` for `−u_j`).
    pub seed: Option<usize>,
}

/// One perceptron instance. Updates are applied on the lowest-index sample
/// that `v` misclassifies with margin at least `γ`.
#[derive(Debug, Clone)]
struct Instance {
    v: DVector<f64>,
    norm_sq: f64,
    updates: usize,
    norm_history: Vec<f64>,
    alive: bool,
}

impl Instance {
    fn new(q: &QMetric, v0: DVector<f64>) -> Self {
        let norm_sq = q.norm_sq(&v0);
        Self {
            v: v0,
            norm_sq,
            updates: 0,
            norm_history: vec![norm_sq],
            alive: norm_sq > 0.0,
        }
    }

    fn first_mistake(&self, samples: &[LabeledSample], q: &QMetric, sample_norms: &[f64], gamma: f64) -> Option<usize> {
        samples.iter().enumerate().position(|(j, s)| {
            let ip = q.inner(&self.v, &s.point);
            f64::from(s.label) * ip <= -gamma * (self.norm_sq * sample_norms[j]).sqrt() && ip != 0.0
        })
    }

    fn update(&mut self, sample: &LabeledSample, q: &QMetric, sample_norm: f64) {
        let ip = q.inner(&self.v, &sample.point);
        self.v -= &sample.point * (ip / sample_norm);
        self.norm_sq = q.norm_sq(&self.v);
        self.updates += 1;
        self.norm_history.push(self.norm_sq);
        if !(self.norm_sq > f64::EPSILON * self.norm_history[0]) {
            self.alive = false;
        }
    }
}

fn sample_norms(samples: &[LabeledSample], q: &QMetric) -> Result<Vec<f64>> {
    samples
        .iter()
        .map(|s| {
            if s.point.len() != q.dim() {
                return Err(ScaleError::DimensionMismatch(format!(
                    "sample of length {} in dimension {}",
                    s.point.len(),
                    q.dim()
                )));
            }
            let n = q.norm_sq(&s.point);
            if n > 0.0 {
                Ok(n)
            } else {
                Err(ScaleError::InvalidInput("zero sample point".into()))
            }
        })
        .collect()
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma < 1.0 {
        Ok(())
    } else {
        Err(ScaleError::InvalidInput(format!("gamma must lie in (0, 1), got {gamma}")))
    }
}

/// Runs a single instance from `v0` for at most `max_updates` updates.
pub fn improved_perceptron(
    samples: &[LabeledSample],
    q: &QMetric,
    gamma: f64,
    v0: &DVector<f64>,
    max_updates: usize,
) -> Result<PerceptronRun> {
    check_gamma(gamma)?;
    let norms = sample_norms(samples, q)?;
    let mut inst = Instance::new(q, v0.clone());
    while inst.alive {
        match inst.first_mistake(samples, q, &norms, gamma) {
            None => {
                return Ok(PerceptronRun {
                    v: inst.v,
                    updates: inst.updates,
                    norm_history: inst.norm_history,
                    seed: None,
                })
            }
            Some(_) if inst.updates >= max_updates => break,
            Some(j) => inst.update(&samples[j], q, norms[j]),
        }
    }
    Err(ScaleError::NotSeparable)
}

/// Runs `2n` instances seeded with `±u_j` in round-robin, one update per live
/// instance per sweep, and returns the first that has no high-margin mistake.
pub fn parallel_perceptron(
    samples: &[LabeledSample],
    q: &QMetric,
    gamma: f64,
    max_updates: usize,
) -> Result<PerceptronRun> {
    check_gamma(gamma)?;
    let norms = sample_norms(samples, q)?;
    let mut instances: Vec<Instance> = samples
        .iter()
        .flat_map(|s| [Instance::new(q, s.point.clone()), Instance::new(q, -&s.point)])
        .collect();
    loop {
        let mut any_alive = false;
        for (idx, inst) in instances.iter_mut().enumerate() {
            if !inst.alive {
                continue;
            }
            match inst.first_mistake(samples, q, &norms, gamma) {
                None => {
                    return Ok(PerceptronRun {
                        v: inst.v.clone(),
                        updates: inst.updates,
                        norm_history: inst.norm_history.clone(),
                        seed: Some(idx),
                    })
                }
                Some(_) if inst.updates >= max_updates => inst.alive = false,
                Some(j) => inst.update(&samples[j], q, norms[j]),
            }
            any_alive |= inst.alive;
        }
        if !any_alive {
            return Err(ScaleError::NotSeparable);
        }
    }
}

/// Fraction of columns `u_j` with `⟨w, u_j⟩²_Q ≥ ‖w‖²_Q ‖u_j‖²_Q / (4d)`.
///
/// Requires `(U, z)` to be within `d/(2n)` of the uniform-marginal position.
pub fn margin_fraction(frame: &Frame, z: &Scaling, w: &DVector<f64>) -> Result<f64> {
    let (d, n) = (frame.dim(), frame.len());
    if w.len() != d {
        return Err(ScaleError::DimensionMismatch(format!(
            "direction of length {} in dimension {d}",
            w.len()
        )));
    }
    let ctx = GramContext::new(frame, z)?;
    let lev = leverage_scores_with(frame, z, &ctx);
    let target = d as f64 / n as f64;
    let err: f64 = lev.iter().map(|l| (l - target) * (l - target)).sum();
    let eps = d as f64 / (2.0 * n as f64);
    if err > eps * eps {
        return Err(ScaleError::PreconditionViolated(format!(
            "squared distance {err:e} from uniform marginals exceeds {:e}",
            eps * eps
        )));
    }
    let q = QMetric::from_context(ctx);
    let wn = q.norm_sq(w);
    if !(wn > 0.0) {
        return Err(ScaleError::InvalidInput("direction must be nonzero".into()));
    }
    let threshold = 1.0 / (4.0 * d as f64);
    let hits = (0..n)
        .filter(|&j| {
            let u = frame.column(j);
            let un = q.norm_sq(&u);
            let ip = q.inner(w, &u);
            un > 0.0 && ip * ip >= threshold * wn * un
        })
        .count();
    Ok(hits as f64 / n as f64)
}
