#![allow(dead_code)]

use framescale::{Frame, Scaling};
use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;

/// `(UZUᵀ)^{-1/2}` from an eigendecomposition; independent of the library's factorization.
pub fn inv_sqrt_gram(frame: &Frame, z: &Scaling) -> DMatrix<f64> {
    let u = frame.matrix();
    let mut scaled = u.clone();
    for (j, &zj) in z.as_slice().iter().enumerate() {
        scaled.column_mut(j).scale_mut(zj);
    }
    let g = scaled * u.transpose();
    let eig = SymmetricEigen::new((&g + g.transpose()) * 0.5);
    let inv_sqrt = eig.eigenvalues.map(|l| 1.0 / l.sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&inv_sqrt) * eig.eigenvectors.transpose()
}

/// `V = (UZUᵀ)^{-1/2} U Z^{1/2} = W Pᵀ` from the SVD `Z^{1/2} Uᵀ = P Σ Wᵀ`, rows
/// sorted by norm first so graded scalings stay accurate.
pub fn isotropic_columns(frame: &Frame, z: &Scaling) -> DMatrix<f64> {
    let (d, n) = (frame.dim(), frame.len());
    let zs = z.as_slice();
    let weight = |j: usize| zs[j] * frame.matrix().column(j).norm_squared();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| weight(b).total_cmp(&weight(a)));
    let a = DMatrix::from_fn(n, d, |r, i| zs[order[r]].sqrt() * frame.matrix()[(i, order[r])]);
    let svd = a.svd(true, true);
    let (p, wt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let sorted = wt.transpose() * p.transpose();
    let mut v = DMatrix::zeros(d, n);
    for (r, &j) in order.iter().enumerate() {
        v.set_column(j, &sorted.column(r));
    }
    v
}

pub fn leverage_oracle(frame: &Frame, z: &Scaling) -> Vec<f64> {
    let v = isotropic_columns(frame, z);
    v.column_iter().map(|c| c.norm_squared()).collect()
}

/// Eigenvalues `μ` of `V_T V_Tᵀ`, with roundoff-level values set to zero.
pub fn subset_spectrum(frame: &Frame, z: &Scaling, set: &[usize]) -> Vec<f64> {
    let v = isotropic_columns(frame, z);
    let cols: Vec<_> = set.iter().map(|&j| v.column(j).into_owned()).collect();
    let vt = DMatrix::from_columns(&cols);
    let m = &vt * vt.transpose();
    let eig = SymmetricEigen::new((&m + m.transpose()) * 0.5).eigenvalues;
    eig.iter().map(|&l| if l.abs() < 1e-12 { 0.0 } else { l }).collect()
}

pub fn spectral_h(mu: &[f64], alpha: f64) -> f64 {
    mu.iter().map(|m| alpha * m / (1.0 + (alpha - 1.0) * m)).sum()
}

pub fn spectral_h_prime(mu: &[f64], alpha: f64) -> f64 {
    mu.iter()
        .map(|m| m * (1.0 - m) / (1.0 + (alpha - 1.0) * m).powi(2))
        .sum()
}

pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn l1_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// A full-rank frame with entries in `[-2, 2]`, `1 ≤ d ≤ max_d`, `n ∈ [d, max_n]`.
pub fn frame_strategy(max_d: usize, max_n: usize) -> impl Strategy<Value = Frame> {
    (1..=max_d)
        .prop_flat_map(move |d| (Just(d), d..=max_n.max(d)))
        .prop_flat_map(|(d, n)| {
            proptest::collection::vec(-2.0f64..2.0, d * n)
                .prop_map(move |e| Frame::new(DMatrix::from_column_slice(d, n, &e)))
        })
        .prop_filter_map("rank deficient", |f| f.ok())
}

/// Positive scaling of length `n` spanning `10^{±span}`.
pub fn scaling_strategy(n: usize, span: f64) -> impl Strategy<Value = Scaling> {
    proptest::collection::vec(-span..span, n)
        .prop_map(|e| Scaling::new(e.into_iter().map(|x| 10f64.powf(x)).collect()).unwrap())
}

/// Frame, scaling and a nonempty proper subset.
pub fn instance_strategy(
    max_d: usize,
    max_n: usize,
    span: f64,
) -> impl Strategy<Value = (Frame, Scaling, Vec<usize>)> {
    frame_strategy(max_d, max_n)
        .prop_filter("need n >= 2", |f| f.len() >= 2)
        .prop_flat_map(move |f| {
            let n = f.len();
            (
                Just(f),
                scaling_strategy(n, span),
                proptest::sample::subsequence((0..n).collect::<Vec<_>>(), 1..n),
            )
        })
}
