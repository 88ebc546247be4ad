//! Exact rational arithmetic for small certificate checks.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Pow, Signed, Zero};

/// Reads a decimal such as `-1.25e-3` as the exact rational it denotes.
pub fn parse_decimal(tok: &str) -> Option<BigRational> {
    let (mantissa, exp) = match tok.find(['e', 'E']) {
        Some(i) => (&tok[..i], tok[i + 1..].parse::<i64>().ok()?),
        None => (tok, 0),
    };
    if exp.abs() > 4096 {
        return None;
    }
    let (neg, body) = match mantissa.as_bytes().first()? {
        b'-' => (true, &mantissa[1..]),
        b'+' => (false, &mantissa[1..]),
        _ => (false, mantissa),
    };
    let (int, frac) = body.split_once('.').unwrap_or((body, ""));
    if int.is_empty() && frac.is_empty() {
        return None;
    }
    if !int.bytes().chain(frac.bytes()).all(|b| b.is_ascii_digit()) {
        return None;
    }
    let digits: BigInt = format!("0{int}{frac}").parse().ok()?;
    let scale = exp - frac.len() as i64;
    let ten = BigInt::from(10);
    let mut value = if scale >= 0 {
        BigRational::from_integer(digits * ten.pow(scale as u64))
    } else {
        BigRational::new(digits, ten.pow(scale.unsigned_abs()))
    };
    if neg {
        value = -value;
    }
    Some(value)
}

/// Rank of a dense rational matrix given as rows.
pub fn rank(mut rows: Vec<Vec<BigRational>>) -> usize {
    let cols = rows.first().map_or(0, Vec::len);
    let mut rank = 0;
    for c in 0..cols {
        let Some(p) = (rank..rows.len()).find(|&r| !rows[r][c].is_zero()) else {
            continue;
        };
        rows.swap(rank, p);
        let pivot = rows[rank][c].clone();
        for r in rank + 1..rows.len() {
            if rows[r][c].is_zero() {
                continue;
            }
            let f = &rows[r][c] / &pivot;
            for k in c..cols {
                let delta = &f * &rows[rank][k];
                rows[r][k] -= delta;
            }
        }
        rank += 1;
    }
    rank
}

pub fn sum<'a>(values: impl IntoIterator<Item = &'a BigRational>) -> BigRational {
    values.into_iter().fold(BigRational::zero(), |acc, v| acc + v)
}

pub fn is_positive(v: &BigRational) -> bool {
    v.is_positive()
}
