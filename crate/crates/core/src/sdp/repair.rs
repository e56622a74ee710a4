//! Turning an approximate dual point into an exactly dual-feasible one.

use super::{BlockData, BlockKind, BlockValue, ConstraintKind, SdpProblem};
use crate::linalg;

#[derive(Debug, Clone, PartialEq)]
pub struct DualCertificate {
    pub y: Vec<f64>,
    /// `b . y`, a valid lower bound on the primal optimum.
    pub bound: f64,
    /// Total amount the multipliers were moved by the repair.
    pub adjustment: f64,
}

/// A row whose data on `block` is `c 1` (`c > 0`), whose other terms are PSD, and
/// whose multiplier may be decreased: decreasing it raises every dual slack.
fn repair_row(problem: &SdpProblem, block: usize) -> Option<(usize, f64)> {
    problem.constraints.iter().enumerate().find_map(|(i, row)| {
        if row.kind == ConstraintKind::Ge {
            return None;
        }
        let mut scale = None;
        for (j, d) in &row.terms {
            match (problem.blocks[*j], d) {
                (BlockKind::Free(_), _) => return None,
                (_, BlockData::Matrix(a)) if *j == block => scale = a.identity_multiple().filter(|&c| c > 0.0),
                (_, BlockData::Matrix(a)) => {
                    if linalg::min_eigenvalue(&a.to_dense()) < 0.0 {
                        return None;
                    }
                }
                (_, BlockData::Vector(v)) => {
                    if *j == block {
                        let n = problem.blocks[block].dim();
                        let c = v.first().map(|e| e.1)?;
                        if v.len() != n || v.iter().any(|e| (e.1 - c).abs() > 1e-14 * c.abs()) || c <= 0.0 {
                            return None;
                        }
                        scale = Some(c);
                    } else if v.iter().any(|e| e.1 < 0.0) {
                        return None;
                    }
                }
            }
        }
        scale.map(|c| (i, c))
    })
}

/// Smallest cone "eigenvalue" of a dual slack block, with the block's magnitude.
fn violation(kind: BlockKind, s: &BlockValue) -> (f64, f64) {
    match kind {
        BlockKind::Psd(_) => {
            let m = s.matrix();
            (linalg::min_eigenvalue(m), linalg::max_abs(m))
        }
        BlockKind::Nonneg(_) => {
            let v = s.vector();
            (v.iter().copied().fold(f64::INFINITY, f64::min), v.amax())
        }
        BlockKind::Free(_) => (0.0, 0.0),
    }
}

fn dual_feasible(problem: &SdpProblem, y: &[f64]) -> bool {
    let s = problem.dual_slack(y);
    problem.blocks.iter().zip(&s).all(|(&k, v)| match k {
        BlockKind::Free(_) => v.vector().iter().all(|t| t.abs() <= 1e-12 * (1.0 + v.vector().amax())),
        _ => violation(k, v).0 >= 0.0,
    })
}

/// Repairs `y` so that `C - sum y_k A_k` lies exactly in the dual cone and the sign
/// conditions hold: first clamp signs, then shift identity-like rows, and as a last
/// resort scale `y` towards zero. Returns `None` when no repair is possible.
pub fn certified_dual_bound(problem: &SdpProblem, y: &[f64]) -> Option<DualCertificate> {
    let mut yr: Vec<f64> = problem
        .constraints
        .iter()
        .zip(y)
        .map(|(c, &v)| match c.kind {
            ConstraintKind::Eq => v,
            ConstraintKind::Le => v.min(0.0),
            ConstraintKind::Ge => v.max(0.0),
        })
        .collect();
    if yr.iter().any(|v| !v.is_finite()) {
        return None;
    }
    for _pass in 0..3 {
        let s = problem.dual_slack(&yr);
        let mut changed = false;
        for (j, &kind) in problem.blocks.iter().enumerate() {
            if matches!(kind, BlockKind::Free(_)) {
                continue;
            }
            let (lam, mag) = violation(kind, &s[j]);
            let margin = 8.0 * f64::EPSILON * (1.0 + mag) * kind.dim() as f64;
            if lam < margin && lam < 0.0 {
                if let Some((row, c)) = repair_row(problem, j) {
                    yr[row] -= (margin - lam) / c;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    if !dual_feasible(problem, &yr) {
        // Scale towards zero: the feasible multipliers along the ray form an interval.
        if !dual_feasible(problem, &vec![0.0; yr.len()]) {
            return None;
        }
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            let trial: Vec<f64> = yr.iter().map(|v| v * mid).collect();
            if dual_feasible(problem, &trial) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        yr.iter_mut().for_each(|v| *v *= lo);
    }
    let adjustment = yr.iter().zip(y).map(|(a, b)| (a - b).abs()).sum();
    Some(DualCertificate { bound: problem.dual_objective(&yr), y: yr, adjustment })
}
