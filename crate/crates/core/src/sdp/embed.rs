//! Real symmetric embedding `H -> [[Re H, -Im H], [Im H, Re H]]`.

use nalgebra::DMatrix;

use super::{BlockData, BlockKind, BlockValue, SdpProblem, SparseHermitian};
use crate::linalg::{self, CMatrix, C64};

/// Objective values and constraint right-hand sides of the embedded problem are
/// this multiple of the originals.
pub const EMBED_SCALE: f64 = 2.0;

pub fn embed_hermitian(h: &CMatrix) -> DMatrix<f64> {
    let n = h.nrows();
    let mut out = DMatrix::zeros(2 * n, 2 * n);
    for r in 0..n {
        for c in 0..n {
            let v = h[(r, c)];
            out[(r, c)] = v.re;
            out[(r + n, c + n)] = v.re;
            out[(r, c + n)] = -v.im;
            out[(r + n, c)] = v.im;
        }
    }
    out
}

/// Inverse of [`embed_hermitian`], averaging the two copies of each entry.
pub fn extract_hermitian(m: &DMatrix<f64>) -> CMatrix {
    let n = m.nrows() / 2;
    CMatrix::from_fn(n, n, |r, c| {
        let re = 0.5 * (m[(r, c)] + m[(r + n, c + n)]);
        let im = 0.5 * (m[(r + n, c)] - m[(r, c + n)]);
        C64::new(re, im)
    })
}

fn embed_sparse(a: &SparseHermitian) -> SparseHermitian {
    let n = a.dim;
    let mut entries = Vec::with_capacity(4 * a.entries.len());
    for &(r, c, v) in &a.entries {
        if v.re != 0.0 {
            entries.push((r, c, linalg::re(v.re)));
            entries.push((r + n, c + n, linalg::re(v.re)));
        }
        if v.im != 0.0 {
            entries.push((r, c + n, linalg::re(-v.im)));
            entries.push((r + n, c, linalg::re(v.im)));
        }
    }
    SparseHermitian { dim: 2 * n, entries }
}

/// Real (zero-imaginary) problem on doubled PSD blocks whose optimal value and
/// constraint bounds are [`EMBED_SCALE`] times the originals; dual multipliers agree.
pub fn embed_real(problem: &SdpProblem) -> SdpProblem {
    let blocks: Vec<BlockKind> = problem
        .blocks
        .iter()
        .map(|&k| match k {
            BlockKind::Psd(n) => BlockKind::Psd(2 * n),
            other => other,
        })
        .collect();
    let mut out = SdpProblem::new(blocks);
    for (j, c) in problem.objective.iter().enumerate() {
        out.objective[j] = match c {
            BlockValue::Matrix(m) => BlockValue::Matrix(embed_hermitian(m).map(linalg::re)),
            BlockValue::Vector(v) => BlockValue::Vector(v * EMBED_SCALE),
        };
    }
    for c in &problem.constraints {
        let mut row = c.clone();
        row.bound *= EMBED_SCALE;
        row.terms = c
            .terms
            .iter()
            .map(|(j, d)| {
                let e = match d {
                    BlockData::Matrix(a) => BlockData::Matrix(embed_sparse(a)),
                    BlockData::Vector(v) => BlockData::Vector(v.iter().map(|&(i, x)| (i, x * EMBED_SCALE)).collect()),
                };
                (*j, e)
            })
            .collect();
        out.push(row);
    }
    out
}
