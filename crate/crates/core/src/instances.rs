//! Seeded instance generators for tests, benchmarks and the CLI.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Result, ScaleError};
use crate::frame::{Marginals, ProxyContext};
use crate::linalg::{numerical_rank, Frame, Scaling};
use crate::matrix::{MatrixMarginals, NonnegMatrix};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn check_frame_dims(d: usize, n: usize) -> Result<()> {
    if d == 0 || n < d {
        return Err(ScaleError::InvalidInput(format!("need 1 <= d <= n, got d = {d}, n = {n}")));
    }
    Ok(())
}

/// Standard normal entries; redrawn in the (measure-zero) rank-deficient case.
pub fn gaussian_frame(d: usize, n: usize, seed: u64) -> Result<Frame> {
    check_frame_dims(d, n)?;
    let mut rng = rng(seed);
    loop {
        let m = DMatrix::from_fn(d, n, |_, _| rng.sample::<f64, _>(StandardNormal));
        if let Ok(f) = Frame::new(m) {
            return Ok(f);
        }
    }
}

/// A full-rank integer frame in which a cluster of 2 or 3 columns are integer
/// multiples of one vector, with marginals putting mass `1 + t` on the
/// cluster. Returns the frame, marginals and the planted cluster.
pub fn planted_infeasible_frame(d: usize, n: usize, seed: u64) -> Result<(Frame, Marginals, Vec<usize>)> {
    check_frame_dims(d, n)?;
    if d < 2 || n < d + 2 {
        return Err(ScaleError::InvalidInput(format!(
            "planting needs d >= 2 and n >= d + 2, got d = {d}, n = {n}"
        )));
    }
    let mut rng = rng(seed);
    loop {
        let k = rng.random_range(2..=(n - d).min(3));
        let mut cols: Vec<usize> = (0..n).collect();
        cols.shuffle(&mut rng);
        let mut cluster = cols[..k].to_vec();
        cluster.sort_unstable();

        let base: Vec<f64> = (0..d).map(|_| rng.random_range(-3i32..=3) as f64).collect();
        if base.iter().all(|&b| b == 0.0) {
            continue;
        }
        let mut m = DMatrix::zeros(d, n);
        for j in 0..n {
            if cluster.contains(&j) {
                let mult = [1.0, 2.0, 3.0, -1.0, -2.0][rng.random_range(0..5)];
                for i in 0..d {
                    m[(i, j)] = mult * base[i];
                }
            } else {
                for i in 0..d {
                    m[(i, j)] = rng.random_range(-4i32..=4) as f64;
                }
            }
        }
        if numerical_rank(&m) != d {
            continue;
        }
        let Ok(frame) = Frame::new(m) else { continue };

        let extra = rng.random_range(20..=50) as f64 / 100.0;
        let inside = (1.0 + extra) / k as f64;
        let outside = (d as f64 - 1.0 - extra) / (n - k) as f64;
        let c: Vec<f64> = (0..n)
            .map(|j| if cluster.contains(&j) { inside } else { outside })
            .collect();
        let marginals = Marginals::new(c, d)?;
        return Ok((frame, marginals, cluster));
    }
}

/// A Gaussian frame with a scaling that pushes the spectrum of the subset
/// `T = {0, …, k−1}` towards `{0, 1}`: a few columns of `T` get large weights,
/// the rest tiny ones. Redraws until `h'(1) < 1/4`, the precondition of the
/// small-eigenvalue estimator. Dimensions satisfy `2 ≤ d ≤ max_d`, `n ≤ max_n`.
pub fn small_eigen_instance(seed: u64, max_d: usize, max_n: usize) -> Result<(Frame, Scaling, Vec<usize>)> {
    if max_d < 2 || max_n < max_d + 2 {
        return Err(ScaleError::InvalidInput("need max_d >= 2 and max_n >= max_d + 2".into()));
    }
    let mut rng = rng(seed);
    loop {
        let d = rng.random_range(2..=max_d);
        let n = rng.random_range(d + 2..=max_n);
        let frame = gaussian_frame(d, n, rng.random())?;
        let k = rng.random_range(1..n);
        let big = rng.random_range(0..k.min(d));
        let z: Vec<f64> = (0..n)
            .map(|j| {
                if j < big {
                    10f64.powf(rng.random_range(1.5..4.0))
                } else if j < k {
                    10f64.powf(rng.random_range(-4.0..-1.0))
                } else {
                    1.0
                }
            })
            .collect();
        let z = Scaling::new(z)?;
        let set: Vec<usize> = (0..k).collect();
        if ProxyContext::new(&frame, &z, &set)?.h_prime(1.0)? < 0.25 {
            return Ok((frame, z, set));
        }
    }
}

/// Entries uniform in `[0.1, 1]`.
pub fn positive_matrix(m: usize, n: usize, seed: u64) -> Result<NonnegMatrix> {
    let mut rng = rng(seed);
    let e: Vec<f64> = (0..m * n).map(|_| rng.random_range(0.1..1.0)).collect();
    NonnegMatrix::from_row_slice(m, n, &e)
}

/// A 0/1 matrix with roughly half of its entries set. For square shapes the
/// diagonal is always set so that `r = c = 1` is feasible.
pub fn bipartite_matrix(m: usize, n: usize, seed: u64) -> Result<NonnegMatrix> {
    if m == 0 || n == 0 {
        return Err(ScaleError::InvalidInput("matrix must be nonempty".into()));
    }
    let mut rng = rng(seed);
    let mut e = vec![0.0; m * n];
    for v in e.iter_mut() {
        if rng.random_bool(0.5) {
            *v = 1.0;
        }
    }
    for i in 0..m.max(n) {
        e[(i % m) * n + (i % n)] = 1.0;
    }
    NonnegMatrix::from_row_slice(m, n, &e)
}

/// Marginals `r = 1_m`, `c = (m/n) 1_n`.
pub fn uniform_matrix_marginals(m: usize, n: usize) -> Result<MatrixMarginals> {
    MatrixMarginals::new(vec![1.0; m], vec![m as f64 / n as f64; n])
}

/// An `n × n` positive-on-support matrix with unit marginals in which a
/// planted column set `T` only reaches `|T| − 1` rows. Returns the matrix,
/// marginals and `T`.
pub fn planted_hall_violation(n: usize, seed: u64) -> Result<(NonnegMatrix, MatrixMarginals, Vec<usize>)> {
    if n < 3 {
        return Err(ScaleError::InvalidInput(format!("need n >= 3, got {n}")));
    }
    let mut rng = rng(seed);
    let k = rng.random_range(2..n);
    let mut cols: Vec<usize> = (0..n).collect();
    cols.shuffle(&mut rng);
    let mut set = cols[..k].to_vec();
    set.sort_unstable();
    let mut rows: Vec<usize> = (0..n).collect();
    rows.shuffle(&mut rng);
    let reach = &rows[..k - 1];

    let mut e = vec![0.0; n * n];
    for &j in &set {
        for &i in reach {
            if rng.random_bool(0.7) {
                e[i * n + j] = rng.random_range(0.1..1.0);
            }
        }
        // Keep every planted column nonzero.
        let i = reach[rng.random_range(0..reach.len())];
        e[i * n + j] = rng.random_range(0.1..1.0);
    }
    for j in (0..n).filter(|j| !set.contains(j)) {
        for i in 0..n {
            if rng.random_bool(0.6) {
                e[i * n + j] = rng.random_range(0.1..1.0);
            }
        }
    }
    // Rows outside the reach must still be nonzero, and only non-planted columns may cover them.
    let free: Vec<usize> = (0..n).filter(|j| !set.contains(j)).collect();
    for i in 0..n {
        if (0..n).all(|j| e[i * n + j] == 0.0) {
            let j = free[rng.random_range(0..free.len())];
            e[i * n + j] = rng.random_range(0.1..1.0);
        }
    }
    for &j in &free {
        if (0..n).all(|i| e[i * n + j] == 0.0) {
            let i = rng.random_range(0..n);
            e[i * n + j] = rng.random_range(0.1..1.0);
        }
    }
    let a = NonnegMatrix::from_row_slice(n, n, &e)?;
    let marg = MatrixMarginals::new(vec![1.0; n], vec![1.0; n])?;
    Ok((a, marg, set))
}
