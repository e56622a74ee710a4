//! Small dense semidefinite programs over complex Hermitian blocks.
//!
//! Problems are stated in the minimisation form
//!
//! ```text
//! min  <C, X>   s.t.  <A_k, X> (=, <=, >=) b_k,   X = (X_1, ..., X_p)
//! ```
//!
//! where every block `X_j` is a PSD Hermitian matrix, a nonnegative vector or a
//! free vector, and `<A, X> = Re tr[A X]` (dot product for vector blocks). Dual
//! multipliers follow the same convention: `y_k <= 0` for `<=` rows, `y_k >= 0` for
//! `>=` rows, and the dual slack is `Z = C - sum_k y_k A_k`.

mod embed;
mod io;
mod repair;
mod solver;

use std::fmt;

use nalgebra::DVector;
use thiserror::Error;

use crate::linalg::{self, CMatrix, C64};

pub use embed::{embed_hermitian, embed_real, extract_hermitian, EMBED_SCALE};
pub use io::{dump, load};
pub use repair::{certified_dual_bound, DualCertificate};
pub use solver::solve;

#[derive(Debug, Error)]
pub enum SdpError {
    #[error("block {block}: {reason}")]
    Block { block: usize, reason: String },
    #[error("constraint {row} ({label}): {reason}")]
    Constraint { row: usize, label: String, reason: String },
    #[error("objective: {0}")]
    Objective(String),
    #[error("parse error on line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

pub type Result<T> = std::result::Result<T, SdpError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockKind {
    Psd(usize),
    Nonneg(usize),
    Free(usize),
}

impl BlockKind {
    pub fn dim(self) -> usize {
        match self {
            BlockKind::Psd(n) | BlockKind::Nonneg(n) | BlockKind::Free(n) => n,
        }
    }

    /// Barrier degree of the cone.
    fn degree(self) -> usize {
        match self {
            BlockKind::Psd(n) | BlockKind::Nonneg(n) => n,
            BlockKind::Free(_) => 0,
        }
    }
}

/// Hermitian matrix stored as its full list of nonzero entries (both triangles).
#[derive(Debug, Clone, PartialEq)]
pub struct SparseHermitian {
    pub dim: usize,
    pub entries: Vec<(usize, usize, C64)>,
}

impl SparseHermitian {
    pub fn from_dense(m: &CMatrix) -> Self {
        let scale = linalg::max_abs(m);
        let tol = 1e-15 * scale;
        let mut entries = Vec::new();
        for c in 0..m.ncols() {
            for r in 0..m.nrows() {
                let v = m[(r, c)];
                if v.norm() > tol {
                    entries.push((r, c, v));
                }
            }
        }
        Self { dim: m.nrows(), entries }
    }

    pub fn to_dense(&self) -> CMatrix {
        let mut m = linalg::zeros(self.dim);
        for &(r, c, v) in &self.entries {
            m[(r, c)] += v;
        }
        m
    }

    /// `Re tr[A M]` for any square `M`.
    pub fn inner(&self, m: &CMatrix) -> f64 {
        self.entries.iter().map(|&(r, c, v)| (v * m[(c, r)]).re).sum()
    }

    /// `M += alpha A`
    pub fn add_to(&self, m: &mut CMatrix, alpha: f64) {
        for &(r, c, v) in &self.entries {
            m[(r, c)] += v * alpha;
        }
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn norm_sq(&self) -> f64 {
        self.entries.iter().map(|e| e.2.norm_sqr()).sum()
    }

    pub fn identity(n: usize) -> Self {
        Self { dim: n, entries: (0..n).map(|i| (i, i, linalg::re(1.0))).collect() }
    }

    /// `Some(c)` when the matrix is `c * 1`.
    pub fn identity_multiple(&self) -> Option<f64> {
        let mut diag = vec![C64::new(0.0, 0.0); self.dim];
        for &(r, c, v) in &self.entries {
            if r != c {
                return None;
            }
            diag[r] += v;
        }
        let c0 = diag.first()?.re;
        diag.iter().all(|d| (d - linalg::re(c0)).norm() <= 1e-14 * c0.abs()).then_some(c0)
    }
}

/// Data of one constraint (or objective) restricted to one block.
#[derive(Debug, Clone, PartialEq)]
pub enum BlockData {
    Matrix(SparseHermitian),
    /// `(index, coefficient)` pairs.
    Vector(Vec<(usize, f64)>),
}

impl BlockData {
    pub fn inner(&self, x: &BlockValue) -> f64 {
        match (self, x) {
            (BlockData::Matrix(a), BlockValue::Matrix(m)) => a.inner(m),
            (BlockData::Vector(a), BlockValue::Vector(v)) => a.iter().map(|&(i, c)| c * v[i]).sum(),
            _ => panic!("block data and value kinds differ"),
        }
    }

    pub fn add_to(&self, x: &mut BlockValue, alpha: f64) {
        match (self, x) {
            (BlockData::Matrix(a), BlockValue::Matrix(m)) => a.add_to(m, alpha),
            (BlockData::Vector(a), BlockValue::Vector(v)) => {
                for &(i, c) in a {
                    v[i] += alpha * c;
                }
            }
            _ => panic!("block data and value kinds differ"),
        }
    }

    fn norm_sq(&self) -> f64 {
        match self {
            BlockData::Matrix(a) => a.norm_sq(),
            BlockData::Vector(a) => a.iter().map(|e| e.1 * e.1).sum(),
        }
    }
}

/// A dense value of one block.
#[derive(Debug, Clone, PartialEq)]
pub enum BlockValue {
    Matrix(CMatrix),
    Vector(DVector<f64>),
}

impl BlockValue {
    pub fn zeros(kind: BlockKind) -> Self {
        match kind {
            BlockKind::Psd(n) => BlockValue::Matrix(linalg::zeros(n)),
            BlockKind::Nonneg(n) | BlockKind::Free(n) => BlockValue::Vector(DVector::zeros(n)),
        }
    }

    pub fn matrix(&self) -> &CMatrix {
        match self {
            BlockValue::Matrix(m) => m,
            BlockValue::Vector(_) => panic!("vector block used as a matrix"),
        }
    }

    pub fn vector(&self) -> &DVector<f64> {
        match self {
            BlockValue::Vector(v) => v,
            BlockValue::Matrix(_) => panic!("matrix block used as a vector"),
        }
    }

    /// `<self, other>`
    pub fn dot(&self, other: &BlockValue) -> f64 {
        match (self, other) {
            (BlockValue::Matrix(a), BlockValue::Matrix(b)) => linalg::trace_product(a, b),
            (BlockValue::Vector(a), BlockValue::Vector(b)) => a.dot(b),
            _ => panic!("block kinds differ"),
        }
    }

    pub fn norm_sq(&self) -> f64 {
        match self {
            BlockValue::Matrix(a) => a.iter().map(|z| z.norm_sqr()).sum(),
            BlockValue::Vector(a) => a.norm_squared(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintKind {
    Eq,
    Le,
    Ge,
}

impl fmt::Display for ConstraintKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConstraintKind::Eq => "eq",
            ConstraintKind::Le => "le",
            ConstraintKind::Ge => "ge",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub label: String,
    pub terms: Vec<(usize, BlockData)>,
    pub kind: ConstraintKind,
    pub bound: f64,
}

impl Constraint {
    pub fn new(label: impl Into<String>, kind: ConstraintKind, bound: f64) -> Self {
        Self { label: label.into(), terms: Vec::new(), kind, bound }
    }

    pub fn matrix(mut self, block: usize, a: SparseHermitian) -> Self {
        self.terms.push((block, BlockData::Matrix(a)));
        self
    }

    pub fn dense(self, block: usize, a: &CMatrix) -> Self {
        self.matrix(block, SparseHermitian::from_dense(a))
    }

    pub fn vector(mut self, block: usize, coefficients: Vec<(usize, f64)>) -> Self {
        self.terms.push((block, BlockData::Vector(coefficients)));
        self
    }

    /// `<A, X>`
    pub fn evaluate(&self, x: &[BlockValue]) -> f64 {
        self.terms.iter().map(|(j, d)| d.inner(&x[*j])).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdpProblem {
    pub blocks: Vec<BlockKind>,
    pub objective: Vec<BlockValue>,
    pub constraints: Vec<Constraint>,
}

impl SdpProblem {
    pub fn new(blocks: Vec<BlockKind>) -> Self {
        let objective = blocks.iter().map(|&k| BlockValue::zeros(k)).collect();
        Self { blocks, objective, constraints: Vec::new() }
    }

    pub fn add_block(&mut self, kind: BlockKind) -> usize {
        self.blocks.push(kind);
        self.objective.push(BlockValue::zeros(kind));
        self.blocks.len() - 1
    }

    pub fn set_objective(&mut self, block: usize, value: BlockValue) {
        self.objective[block] = value;
    }

    pub fn push(&mut self, c: Constraint) -> usize {
        self.constraints.push(c);
        self.constraints.len() - 1
    }

    pub fn validate(&self) -> Result<()> {
        for (j, (&kind, c)) in self.blocks.iter().zip(&self.objective).enumerate() {
            let ok = match (kind, c) {
                (BlockKind::Psd(n), BlockValue::Matrix(m)) => {
                    if m.nrows() == n && m.ncols() == n && linalg::hermitian_defect(m) > linalg::HERMITIAN_TOL * (1.0 + linalg::max_abs(m)) {
                        return Err(SdpError::Objective(format!("block {j} is not Hermitian")));
                    }
                    m.nrows() == n && m.ncols() == n
                }
                (BlockKind::Nonneg(n) | BlockKind::Free(n), BlockValue::Vector(v)) => v.len() == n,
                _ => false,
            };
            if !ok {
                return Err(SdpError::Block { block: j, reason: "objective shape mismatch".into() });
            }
        }
        for (i, c) in self.constraints.iter().enumerate() {
            let bad = |reason: &str| SdpError::Constraint { row: i, label: c.label.clone(), reason: reason.into() };
            if !c.bound.is_finite() {
                return Err(bad("non-finite bound"));
            }
            for (j, d) in &c.terms {
                let kind = *self.blocks.get(*j).ok_or_else(|| bad("unknown block"))?;
                match (kind, d) {
                    (BlockKind::Psd(n), BlockData::Matrix(a)) => {
                        if a.dim != n || a.entries.iter().any(|&(r, c, _)| r >= n || c >= n) {
                            return Err(bad("matrix dimension mismatch"));
                        }
                        if linalg::hermitian_defect(&a.to_dense()) > linalg::HERMITIAN_TOL * (1.0 + a.norm_sq().sqrt()) {
                            return Err(bad("matrix is not Hermitian"));
                        }
                    }
                    (BlockKind::Nonneg(n) | BlockKind::Free(n), BlockData::Vector(v)) => {
                        if v.iter().any(|&(i, _)| i >= n) {
                            return Err(bad("vector index out of range"));
                        }
                    }
                    _ => return Err(bad("data kind does not match block kind")),
                }
            }
        }
        Ok(())
    }

    pub fn objective_value(&self, x: &[BlockValue]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c.dot(v)).sum()
    }

    /// Dual slack `C - sum_k y_k A_k`.
    pub fn dual_slack(&self, y: &[f64]) -> Vec<BlockValue> {
        let mut z = self.objective.clone();
        for (c, &yk) in self.constraints.iter().zip(y) {
            if yk != 0.0 {
                for (j, d) in &c.terms {
                    d.add_to(&mut z[*j], -yk);
                }
            }
        }
        z
    }

    pub fn dual_objective(&self, y: &[f64]) -> f64 {
        self.constraints.iter().zip(y).map(|(c, yk)| c.bound * yk).sum()
    }

    /// Largest violation of the constraints and cone memberships by `x`.
    pub fn primal_violation(&self, x: &[BlockValue]) -> f64 {
        let mut worst = 0.0f64;
        for c in &self.constraints {
            let v = c.evaluate(x) - c.bound;
            worst = worst.max(match c.kind {
                ConstraintKind::Eq => v.abs(),
                ConstraintKind::Le => v.max(0.0),
                ConstraintKind::Ge => (-v).max(0.0),
            });
        }
        for (&kind, v) in self.blocks.iter().zip(x) {
            worst = worst.max(match kind {
                BlockKind::Psd(_) => (-linalg::min_eigenvalue(v.matrix())).max(0.0),
                BlockKind::Nonneg(_) => v.vector().iter().fold(0.0f64, |a, &t| a.max(-t)),
                BlockKind::Free(_) => 0.0,
            });
        }
        worst
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub gap: f64,
    pub feasibility: f64,
    pub max_iter: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { gap: 1e-9, feasibility: 1e-9, max_iter: 200 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    MaxIter,
    NumericalTrouble,
}

impl SdpStatus {
    pub fn name(self) -> &'static str {
        match self {
            SdpStatus::Optimal => "optimal",
            SdpStatus::Infeasible => "infeasible",
            SdpStatus::Unbounded => "unbounded",
            SdpStatus::MaxIter => "max_iter",
            SdpStatus::NumericalTrouble => "numerical_trouble",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub status: SdpStatus,
    pub x: Vec<BlockValue>,
    pub y: Vec<f64>,
    pub z: Vec<BlockValue>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    /// `primal - dual`
    pub gap: f64,
    /// Relative primal and dual residual norms.
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub iterations: usize,
}

/// Accuracy accepted from a solve that stopped short of the requested tolerances.
pub const NEAR_OPTIMAL_TOL: f64 = 1e-7;

impl SdpSolution {
    pub fn relative_gap(&self) -> f64 {
        self.gap.abs() / (1.0 + self.primal_objective.abs() + self.dual_objective.abs())
    }

    /// Optimal, or an early stop whose best iterate is within [`NEAR_OPTIMAL_TOL`].
    pub fn is_usable(&self) -> bool {
        match self.status {
            SdpStatus::Optimal => true,
            SdpStatus::MaxIter | SdpStatus::NumericalTrouble => {
                self.primal_residual <= NEAR_OPTIMAL_TOL
                    && self.dual_residual <= NEAR_OPTIMAL_TOL
                    && self.relative_gap() <= NEAR_OPTIMAL_TOL
            }
            _ => false,
        }
    }
}

/// Orthonormal basis of `n x n` Hermitian matrices under `Re tr[A B]`.
pub fn hermitian_basis(n: usize) -> Vec<SparseHermitian> {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        out.push(SparseHermitian { dim: n, entries: vec![(i, i, linalg::re(1.0))] });
        for j in i + 1..n {
            out.push(SparseHermitian { dim: n, entries: vec![(i, j, linalg::re(h)), (j, i, linalg::re(h))] });
            out.push(SparseHermitian { dim: n, entries: vec![(i, j, C64::new(0.0, h)), (j, i, C64::new(0.0, -h))] });
        }
    }
    out
}

/// Blocks introduced by [`trace_norm_ball`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceNormBall {
    pub p_blocks: Vec<usize>,
    pub q_blocks: Vec<usize>,
    pub radius_row: usize,
}

/// One diagonal block of the affine image `M(X)`: `image[t]` holds the terms of
/// `<E_t, M(X)>` for the orthonormal basis [`hermitian_basis`] of the block, and
/// `center` the matching block of `M_0`.
#[derive(Debug, Clone)]
pub struct BallPart {
    pub image: Vec<Vec<(usize, BlockData)>>,
    pub center: CMatrix,
}

/// Adds `1/2 ||M(X) - M_0||_1 <= r` for a block-diagonal image through PSD blocks
/// `P_s, Q_s` with `M_s(X) - M_0,s = P_s - Q_s` and `1/2 sum_s tr[P_s + Q_s] <= r`.
pub fn trace_norm_ball(problem: &mut SdpProblem, label: &str, parts: Vec<BallPart>, radius: f64) -> TraceNormBall {
    let mut p_blocks = Vec::new();
    let mut q_blocks = Vec::new();
    let mut radius_row = Constraint::new(format!("{label}.radius"), ConstraintKind::Le, radius);
    for (s, part) in parts.into_iter().enumerate() {
        let k = part.center.nrows();
        let basis = hermitian_basis(k);
        assert_eq!(part.image.len(), basis.len(), "image must list one term set per basis element");
        let p_block = problem.add_block(BlockKind::Psd(k));
        let q_block = problem.add_block(BlockKind::Psd(k));
        for (t, (terms, e)) in part.image.into_iter().zip(&basis).enumerate() {
            let neg = SparseHermitian { dim: k, entries: e.entries.iter().map(|&(r, c, v)| (r, c, -v)).collect() };
            let mut row = Constraint::new(format!("{label}[{s}.{t}]"), ConstraintKind::Eq, e.inner(&part.center));
            row.terms = terms;
            problem.push(row.matrix(p_block, neg).matrix(q_block, e.clone()));
        }
        let mut half = SparseHermitian::identity(k);
        half.entries.iter_mut().for_each(|e| e.2 = linalg::re(0.5));
        radius_row = radius_row.matrix(p_block, half.clone()).matrix(q_block, half);
        p_blocks.push(p_block);
        q_blocks.push(q_block);
    }
    let radius_row = problem.push(radius_row);
    TraceNormBall { p_blocks, q_blocks, radius_row }
}

/// Outcome of [`check_feasibility`].
#[derive(Debug, Clone)]
pub enum Feasibility {
    /// `margin` is the optimal `t`; `witness` satisfies all constraints.
    Feasible { witness: Vec<BlockValue>, margin: f64 },
    Infeasible { margin: Option<f64>, status: SdpStatus },
}

/// Solves `max t` s.t. the constraints hold at `X` with every PSD block of `X`
/// written as `X_j = S_j + t 1` (`S_j >= 0`); the problem is feasible iff `t* >= -1e-9`.
/// The objective of `problem` is ignored.
pub fn check_feasibility(problem: &SdpProblem, tol: &Tolerances) -> Result<Feasibility> {
    problem.validate()?;
    let mut lifted = SdpProblem::new(problem.blocks.clone());
    let t = lifted.add_block(BlockKind::Free(1));
    lifted.set_objective(t, BlockValue::Vector(DVector::from_element(1, -1.0)));
    for c in &problem.constraints {
        let mut row = c.clone();
        let shift: f64 = c
            .terms
            .iter()
            .filter_map(|(_, d)| match d {
                BlockData::Matrix(a) => Some(a.entries.iter().filter(|e| e.0 == e.1).map(|e| e.2.re).sum::<f64>()),
                BlockData::Vector(_) => None,
            })
            .sum();
        if shift != 0.0 {
            row.terms.push((t, BlockData::Vector(vec![(0, shift)])));
        }
        lifted.push(row);
    }
    // Bounded above whenever some PSD block has a trace constraint; cap t anyway.
    lifted.push(Constraint::new("t.cap", ConstraintKind::Le, 1.0).vector(t, vec![(0, 1.0)]));
    let sol = solve(&lifted, tol)?;
    match sol.status {
        _ if sol.is_usable() => {
            let margin = sol.x[t].vector()[0];
            if margin >= -1e-9 {
                let mut witness: Vec<BlockValue> = sol.x[..problem.blocks.len()].to_vec();
                for (w, &kind) in witness.iter_mut().zip(&problem.blocks) {
                    if let (BlockValue::Matrix(m), BlockKind::Psd(n)) = (w, kind) {
                        *m += linalg::identity(n) * linalg::re(margin);
                    }
                }
                Ok(Feasibility::Feasible { witness, margin })
            } else {
                Ok(Feasibility::Infeasible { margin: Some(margin), status: sol.status })
            }
        }
        status => Ok(Feasibility::Infeasible { margin: None, status }),
    }
}

#[cfg(test)]
mod tests;
