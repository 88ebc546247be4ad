//! Independent re-checks of a result document against its instance.

use framescale::matrix::{column_sums, neighborhood};
use framescale::{leverage_scores, numerical_rank, Frame, NonnegMatrix, Scaling};
use num_rational::BigRational;

use crate::document::{DocStatus, ResultDocument};
use crate::exact;
use crate::io::{Table, Vector};

/// Certificates on instances up to this size are checked in exact arithmetic.
pub const EXACT_MAX_D: usize = 6;
pub const EXACT_MAX_N: usize = 12;

/// Relative slack on recomputed squared errors.
const ERROR_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("check `{check}` failed: {detail}")]
pub struct VerifyFailure {
    pub check: &'static str,
    pub detail: String,
}

fn fail(check: &'static str, detail: impl Into<String>) -> VerifyFailure {
    VerifyFailure {
        check,
        detail: detail.into(),
    }
}

fn rationals(tokens: &[String], check: &'static str) -> Result<Vec<BigRational>, VerifyFailure> {
    tokens
        .iter()
        .map(|t| exact::parse_decimal(t).ok_or_else(|| fail(check, format!("`{t}` is not a decimal"))))
        .collect()
}

fn scaling_of(doc: &ResultDocument, n: usize) -> Result<Scaling, VerifyFailure> {
    let s = doc.scaling().ok_or_else(|| fail("scaling-present", "scaled result without a scaling"))?;
    if s.len() != n {
        return Err(fail("scaling-length", format!("{} entries for {n} columns", s.len())));
    }
    Scaling::new(s.to_vec()).map_err(|e| fail("scaling-positive", e.to_string()))
}

fn certificate_of(doc: &ResultDocument, n: usize) -> Result<Vec<usize>, VerifyFailure> {
    let t = doc
        .certificate
        .clone()
        .ok_or_else(|| fail("certificate-present", "infeasible result without a certificate"))?;
    if t.is_empty() || t.iter().any(|&j| j >= n) || t.windows(2).any(|w| w[0] >= w[1]) {
        return Err(fail("certificate-indices", format!("{t:?} is not a sorted nonempty subset of 0..{n}")));
    }
    Ok(t)
}

fn check_error(doc: &ResultDocument, err: f64) -> Result<(), VerifyFailure> {
    let eps_sq = doc.config.eps * doc.config.eps;
    if !(err <= eps_sq * (1.0 + ERROR_SLACK)) {
        return Err(fail("error-within-eps", format!("recomputed error² {err:e} exceeds eps² {eps_sq:e}")));
    }
    if (err - doc.final_error_sq).abs() > ERROR_SLACK * eps_sq.max(err) {
        return Err(fail(
            "reported-error",
            format!("recomputed error² {err:e}, reported {:e}", doc.final_error_sq),
        ));
    }
    Ok(())
}

pub fn verify_frame(doc: &ResultDocument, table: &Table, marginals: &Vector) -> Result<(), VerifyFailure> {
    let (d, n) = (table.rows, table.cols);
    if marginals.values.len() != n {
        return Err(fail("marginals-length", format!("{} marginals for {n} columns", marginals.values.len())));
    }
    let frame = Frame::from_row_slice(d, n, &table.values).map_err(|e| fail("frame-valid", e.to_string()))?;
    match doc.status {
        DocStatus::Scaled => {
            let z = scaling_of(doc, n)?;
            let lev = leverage_scores(&frame, &z).map_err(|e| fail("leverage", e.to_string()))?;
            let total: f64 = lev.iter().sum();
            if (total - d as f64).abs() > 1e-9 * d as f64 {
                return Err(fail("leverage-sum", format!("leverage sums to {total}, expected {d}")));
            }
            let err: f64 = lev.iter().zip(&marginals.values).map(|(l, c)| (l - c) * (l - c)).sum();
            check_error(doc, err)
        }
        DocStatus::Infeasible => {
            let t = certificate_of(doc, n)?;
            if d <= EXACT_MAX_D && n <= EXACT_MAX_N {
                let entries = rationals(&table.tokens, "frame-rational")?;
                let rows = (0..d).map(|i| t.iter().map(|&j| entries[i * n + j].clone()).collect()).collect();
                let rank = exact::rank(rows);
                let c = rationals(&marginals.tokens, "marginals-rational")?;
                let mass = exact::sum(t.iter().map(|&j| &c[j]));
                if !exact::is_positive(&(&mass - BigRational::from_integer(rank.into()))) {
                    return Err(fail("exact-rank", format!("c(T) = {mass} does not exceed rank {rank}")));
                }
            } else {
                let rank = numerical_rank(&frame.select(&t));
                let mass: f64 = t.iter().map(|&j| marginals.values[j]).sum();
                if !(mass > rank as f64 + framescale::frame::CERTIFICATE_TOL) {
                    return Err(fail("float-rank", format!("c(T) = {mass} does not exceed rank {rank}")));
                }
            }
            Ok(())
        }
    }
}

pub fn verify_matrix(
    doc: &ResultDocument,
    table: &Table,
    rows: &Vector,
    cols: &Vector,
) -> Result<(), VerifyFailure> {
    let (m, n) = (table.rows, table.cols);
    if rows.values.len() != m || cols.values.len() != n {
        return Err(fail("marginals-length", "marginal lengths do not match the matrix"));
    }
    let a = NonnegMatrix::from_row_slice(m, n, &table.values).map_err(|e| fail("matrix-valid", e.to_string()))?;
    match doc.status {
        DocStatus::Scaled => {
            let y = scaling_of(doc, n)?;
            let col = column_sums(&a, &rows.values, y.as_slice()).map_err(|e| fail("column-sums", e.to_string()))?;
            let err: f64 = col.iter().zip(&cols.values).map(|(p, q)| (p - q) * (p - q)).sum();
            check_error(doc, err)
        }
        DocStatus::Infeasible => {
            let t = certificate_of(doc, n)?;
            let entries = rationals(&table.tokens, "matrix-rational")?;
            let r = rationals(&rows.tokens, "rows-rational")?;
            let c = rationals(&cols.tokens, "cols-rational")?;
            let reach: Vec<usize> = (0..m)
                .filter(|&i| t.iter().any(|&j| exact::is_positive(&entries[i * n + j])))
                .collect();
            debug_assert_eq!(reach, neighborhood(&a, &t));
            let mass = exact::sum(t.iter().map(|&j| &c[j]));
            let supply = exact::sum(reach.iter().map(|&i| &r[i]));
            if mass <= supply {
                return Err(fail("exact-hall", format!("c(T) = {mass} does not exceed r(N(T)) = {supply}")));
            }
            Ok(())
        }
    }
}
