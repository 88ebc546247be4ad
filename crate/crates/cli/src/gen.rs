//! Seeded instance files.

use std::path::{Path, PathBuf};

use framescale::instances::{bipartite_matrix, gaussian_frame, planted_infeasible_frame, uniform_matrix_marginals};
use framescale::{Frame, Marginals};

use crate::io::{format_line, format_table, write};
use crate::CliError;

pub const FRAME_FILE: &str = "frame.txt";
pub const MARGINALS_FILE: &str = "marginals.txt";
pub const MATRIX_FILE: &str = "matrix.txt";
pub const ROWS_FILE: &str = "rows.txt";
pub const COLS_FILE: &str = "cols.txt";

fn frame_text(f: &Frame) -> String {
    let (d, n) = (f.dim(), f.len());
    let m = f.matrix();
    let row_major: Vec<f64> = (0..d).flat_map(|i| (0..n).map(move |j| m[(i, j)])).collect();
    format_table(d, n, &row_major)
}

fn write_frame(dir: &Path, f: &Frame, c: &Marginals) -> Result<Vec<PathBuf>, CliError> {
    let (fp, cp) = (dir.join(FRAME_FILE), dir.join(MARGINALS_FILE));
    write(&fp, &frame_text(f))?;
    write(&cp, &format_line(c.as_slice()))?;
    Ok(vec![fp, cp])
}

/// Standard normal frame with marginals `(d/n) 1`.
pub fn gaussian(dir: &Path, d: usize, n: usize, seed: u64) -> Result<Vec<PathBuf>, CliError> {
    let f = gaussian_frame(d, n, seed)?;
    write_frame(dir, &f, &Marginals::uniform(d, n))
}

/// Integer frame with a planted low-rank cluster that carries too much mass.
pub fn infeasible(dir: &Path, d: usize, n: usize, seed: u64) -> Result<Vec<PathBuf>, CliError> {
    let (f, c, _) = planted_infeasible_frame(d, n, seed)?;
    write_frame(dir, &f, &c)
}

/// 0/1 matrix with marginals `r = 1`, `c = (m/n) 1`.
pub fn bipartite(dir: &Path, m: usize, n: usize, seed: u64) -> Result<Vec<PathBuf>, CliError> {
    let a = bipartite_matrix(m, n, seed)?;
    let marg = uniform_matrix_marginals(m, n)?;
    let row_major: Vec<f64> = (0..m).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| a.get(i, j)).collect();
    let paths = [dir.join(MATRIX_FILE), dir.join(ROWS_FILE), dir.join(COLS_FILE)];
    write(&paths[0], &format_table(m, n, &row_major))?;
    write(&paths[1], &format_line(marg.rows()))?;
    write(&paths[2], &format_line(marg.cols()))?;
    Ok(paths.to_vec())
}
