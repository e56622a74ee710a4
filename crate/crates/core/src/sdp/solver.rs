//! Infeasible-start primal-dual interior-point method.
//!
//! Search direction: HKM (`dX = sigma mu Z^-1 - X - X dZ Z^-1`, symmetrised), with a
//! Mehrotra predictor-corrector. Complex Hermitian blocks are handled natively, free
//! variables through the bordered Schur system, linearly dependent rows are removed
//! beforehand and checked for consistency.

use std::collections::HashMap;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::{
    BlockData, BlockKind, BlockValue, ConstraintKind, Result, SdpProblem, SdpSolution, SdpStatus, SparseHermitian,
    Tolerances,
};
use crate::linalg::{self, CMatrix};

const STEP_FRACTION: f64 = 0.98;
const DEPENDENCE_TOL: f64 = 1e-12;
const BLOWUP: f64 = 1e9;
const REFINEMENT_STEPS: usize = 2;
/// Iterations without halving `max(pinf, dinf, gap)` before giving up.
const STAGNATION: usize = 15;
/// Rows with at most `SPARSE_ROW * n` entries in an `n x n` block are treated as sparse.
const SPARSE_ROW: usize = 8;

struct Row {
    terms: Vec<(usize, BlockData)>,
    /// Dense copies of matrix terms that are not sparse enough to multiply entry-wise.
    dense: Vec<Option<CMatrix>>,
}

struct Form {
    kinds: Vec<BlockKind>,
    c: Vec<BlockValue>,
    rows: Vec<Row>,
    b: DVector<f64>,
    /// Original index and scale of every kept row (`row_internal = row_original / scale`).
    origin: Vec<(usize, f64)>,
    /// `(row, term)` incidences per block.
    by_block: Vec<Vec<(usize, usize)>>,
    /// Per incidence in `by_block`: an earlier incidence with identical data.
    twins: Vec<Vec<Option<usize>>>,
    /// Global numbering of free scalars: `(block, index)`.
    free: Vec<(usize, usize)>,
    user_blocks: usize,
    user_rows: usize,
}

enum Preprocess {
    Ready(Form),
    Inconsistent,
}

/// Sparse real coordinates of a row, used for the dependence test.
fn coordinates(terms: &[(usize, BlockData)], offsets: &[usize], kinds: &[BlockKind]) -> Vec<(usize, f64)> {
    let mut out = Vec::new();
    for (j, d) in terms {
        let off = offsets[*j];
        match d {
            BlockData::Matrix(a) => {
                let n = kinds[*j].dim();
                for &(r, c, v) in &a.entries {
                    out.push((off + 2 * (r * n + c), v.re));
                    out.push((off + 2 * (r * n + c) + 1, v.im));
                }
            }
            BlockData::Vector(a) => out.extend(a.iter().map(|&(i, c)| (off + i, c))),
        }
    }
    out.sort_by_key(|e| e.0);
    let mut merged: Vec<(usize, f64)> = Vec::with_capacity(out.len());
    for (i, v) in out {
        match merged.last_mut() {
            Some(last) if last.0 == i => last.1 += v,
            _ => merged.push((i, v)),
        }
    }
    merged.retain(|e| e.1 != 0.0);
    merged
}

fn sparse_dot(a: &[(usize, f64)], b: &[(usize, f64)]) -> f64 {
    let (mut i, mut j, mut acc) = (0, 0, 0.0);
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                acc += a[i].1 * b[j].1;
                i += 1;
                j += 1;
            }
        }
    }
    acc
}

impl Form {
    fn build(problem: &SdpProblem) -> Preprocess {
        let mut kinds = problem.blocks.clone();
        let mut c = problem.objective.clone();
        let n_ineq = problem.constraints.iter().filter(|r| r.kind != ConstraintKind::Eq).count();
        let slack_block = (n_ineq > 0).then(|| {
            kinds.push(BlockKind::Nonneg(n_ineq));
            c.push(BlockValue::Vector(DVector::zeros(n_ineq)));
            kinds.len() - 1
        });
        let mut raw: Vec<(usize, Vec<(usize, BlockData)>, f64)> = Vec::new();
        let mut next_slack = 0;
        for (i, row) in problem.constraints.iter().enumerate() {
            let mut terms = row.terms.clone();
            let sign = match row.kind {
                ConstraintKind::Eq => None,
                ConstraintKind::Le => Some(1.0),
                ConstraintKind::Ge => Some(-1.0),
            };
            if let (Some(s), Some(block)) = (sign, slack_block) {
                terms.push((block, BlockData::Vector(vec![(next_slack, s)])));
                next_slack += 1;
            }
            raw.push((i, terms, row.bound));
        }

        let mut offsets = Vec::with_capacity(kinds.len());
        let mut total = 0;
        for k in &kinds {
            offsets.push(total);
            total += match k {
                BlockKind::Psd(n) => 2 * n * n,
                BlockKind::Nonneg(n) | BlockKind::Free(n) => *n,
            };
        }
        let coords: Vec<Vec<(usize, f64)>> = raw.iter().map(|r| coordinates(&r.1, &offsets, &kinds)).collect();
        let norms: Vec<f64> = coords.iter().map(|v| v.iter().map(|e| e.1 * e.1).sum::<f64>().sqrt()).collect();

        // Pivot-free Cholesky of the Gram matrix of the normalised rows, in row order.
        let m = raw.len();
        let mut kept: Vec<usize> = Vec::new();
        let mut l_rows: Vec<Vec<f64>> = Vec::new(); // L restricted to kept rows
        for i in 0..m {
            let bi = raw[i].2;
            if norms[i] == 0.0 {
                if bi.abs() > 1e-9 {
                    return Preprocess::Inconsistent;
                }
                continue;
            }
            let g: Vec<f64> = kept.iter().map(|&k| sparse_dot(&coords[i], &coords[k]) / (norms[i] * norms[k])).collect();
            // Solve L l = g.
            let mut l = vec![0.0; kept.len()];
            for p in 0..kept.len() {
                let s: f64 = (0..p).map(|q| l_rows[p][q] * l[q]).sum();
                l[p] = (g[p] - s) / l_rows[p][p];
            }
            let resid = 1.0 - l.iter().map(|v| v * v).sum::<f64>();
            if resid > DEPENDENCE_TOL {
                let mut row = l;
                row.push(resid.sqrt());
                l_rows.push(row);
                kept.push(i);
            } else {
                // Coefficients of row i in the kept rows: solve L^T c = l.
                let mut coef = vec![0.0; kept.len()];
                for p in (0..kept.len()).rev() {
                    let s: f64 = (p + 1..kept.len()).map(|q| l_rows[q][p] * coef[q]).sum();
                    coef[p] = (l[p] - s) / l_rows[p][p];
                }
                let predicted: f64 = kept.iter().zip(&coef).map(|(&k, c)| c * raw[k].2 / norms[k]).sum();
                if (predicted - bi / norms[i]).abs() > 1e-9 * (1.0 + (bi / norms[i]).abs()) {
                    return Preprocess::Inconsistent;
                }
            }
        }

        let mut rows = Vec::with_capacity(kept.len());
        let mut b = DVector::zeros(kept.len());
        let mut origin = Vec::with_capacity(kept.len());
        let mut by_block = vec![Vec::new(); kinds.len()];
        for (p, &i) in kept.iter().enumerate() {
            let s = norms[i];
            let terms: Vec<(usize, BlockData)> = raw[i]
                .1
                .iter()
                .map(|(j, d)| {
                    let scaled = match d {
                        BlockData::Matrix(a) => {
                            let mut a = a.clone();
                            a.entries.iter_mut().for_each(|e| e.2 /= s);
                            BlockData::Matrix(a)
                        }
                        BlockData::Vector(v) => BlockData::Vector(v.iter().map(|&(k, x)| (k, x / s)).collect()),
                    };
                    (*j, scaled)
                })
                .collect();
            let dense = terms
                .iter()
                .map(|(j, d)| match d {
                    BlockData::Matrix(a) if a.nnz() > SPARSE_ROW * kinds[*j].dim() => Some(a.to_dense()),
                    _ => None,
                })
                .collect();
            for (t, (j, _)) in terms.iter().enumerate() {
                by_block[*j].push((p, t));
            }
            rows.push(Row { terms, dense });
            b[p] = raw[i].2 / s;
            origin.push((raw[i].0, s));
        }
        // Incidences whose matrix data repeats an earlier one in the same block
        // (e.g. the two sides of an interval) share `X A Z^-1` in the Schur complement.
        let twins = by_block
            .iter()
            .map(|inc| {
                let mut seen: HashMap<Vec<(usize, usize, u64, u64)>, usize> = HashMap::new();
                inc.iter()
                    .enumerate()
                    .map(|(q, &(i, t)): (usize, &(usize, usize))| match &rows[i].terms[t].1 {
                        BlockData::Matrix(a) => {
                            let key = a.entries.iter().map(|&(r, c, v)| (r, c, v.re.to_bits(), v.im.to_bits())).collect();
                            match seen.get(&key) {
                                Some(&first) => Some(first),
                                None => {
                                    seen.insert(key, q);
                                    None
                                }
                            }
                        }
                        BlockData::Vector(_) => None,
                    })
                    .collect()
            })
            .collect();
        let free = kinds
            .iter()
            .enumerate()
            .filter_map(|(j, k)| match k {
                BlockKind::Free(n) => Some((0..*n).map(move |i| (j, i))),
                _ => None,
            })
            .flatten()
            .collect();
        Preprocess::Ready(Form {
            kinds,
            c,
            rows,
            b,
            origin,
            by_block,
            twins,
            free,
            user_blocks: problem.blocks.len(),
            user_rows: problem.constraints.len(),
        })
    }

    fn m(&self) -> usize {
        self.rows.len()
    }

    fn apply(&self, x: &[BlockValue]) -> DVector<f64> {
        DVector::from_iterator(self.m(), self.rows.iter().map(|r| r.terms.iter().map(|(j, d)| d.inner(&x[*j])).sum()))
    }

    /// `sum_i y_i A_i` on every block.
    fn adjoint(&self, y: &DVector<f64>) -> Vec<BlockValue> {
        let mut out: Vec<BlockValue> = self.kinds.iter().map(|&k| BlockValue::zeros(k)).collect();
        for (row, &yi) in self.rows.iter().zip(y.iter()) {
            if yi != 0.0 {
                for (j, d) in &row.terms {
                    d.add_to(&mut out[*j], yi);
                }
            }
        }
        out
    }

    /// Free-variable columns `B` (m x n_free).
    fn free_matrix(&self) -> DMatrix<f64> {
        let mut bm = DMatrix::zeros(self.m(), self.free.len());
        for (col, &(j, idx)) in self.free.iter().enumerate() {
            for &(i, t) in &self.by_block[j] {
                if let BlockData::Vector(v) = &self.rows[i].terms[t].1 {
                    bm[(i, col)] += v.iter().filter(|e| e.0 == idx).map(|e| e.1).sum::<f64>();
                }
            }
        }
        bm
    }
}

/// Largest `alpha` with `X + alpha dX >= 0` given the Cholesky factor of `X`.
/// Largest `alpha` with `X + alpha dX >= 0`, given `L^-1` for `X = L L^dag`.
fn psd_step(l_inv: &CMatrix, dx: &CMatrix) -> f64 {
    let b = linalg::matmul(&linalg::matmul(l_inv, dx), &l_inv.adjoint());
    let lam = linalg::min_eigenvalue(&b);
    if lam < 0.0 {
        -1.0 / lam
    } else {
        f64::INFINITY
    }
}

fn vec_step(x: &DVector<f64>, dx: &DVector<f64>) -> f64 {
    x.iter().zip(dx.iter()).filter(|(_, &d)| d < 0.0).map(|(&v, &d)| -v / d).fold(f64::INFINITY, f64::min)
}

/// Per PSD block: inverse Cholesky factors of `X` and `Z`, and `Z^-1`.
struct Factors {
    x_chol_inv: Vec<Option<CMatrix>>,
    z_inv: Vec<Option<CMatrix>>,
    z_chol_inv: Vec<Option<CMatrix>>,
}

fn lower_inverse(l: &CMatrix) -> CMatrix {
    let n = l.nrows();
    l.solve_lower_triangular(&linalg::identity(n)).expect("triangular factor is invertible")
}

fn factor(kinds: &[BlockKind], x: &[BlockValue], z: &[BlockValue]) -> Option<Factors> {
    let mut f = Factors { x_chol_inv: Vec::new(), z_inv: Vec::new(), z_chol_inv: Vec::new() };
    for (j, k) in kinds.iter().enumerate() {
        if let BlockKind::Psd(_) = k {
            let cx = Cholesky::new(linalg::hermitize(x[j].matrix()))?;
            let cz = Cholesky::new(linalg::hermitize(z[j].matrix()))?;
            f.x_chol_inv.push(Some(lower_inverse(&cx.l())));
            f.z_inv.push(Some(linalg::hermitize(&cz.inverse())));
            f.z_chol_inv.push(Some(lower_inverse(&cz.l())));
        } else {
            f.x_chol_inv.push(None);
            f.z_inv.push(None);
            f.z_chol_inv.push(None);
        }
    }
    Some(f)
}

/// `X A Z^-1` for one row term.
fn scaled_term(a: &BlockData, dense: Option<&CMatrix>, x: &CMatrix, z_inv: &CMatrix) -> CMatrix {
    if let Some(ad) = dense {
        return linalg::matmul(&linalg::matmul(x, ad), z_inv);
    }
    let BlockData::Matrix(a) = a else { unreachable!() };
    let n = x.nrows();
    let mut w = linalg::zeros(n);
    let xs = x.as_slice();
    let ws = w.as_mut_slice();
    // Column-major: W[:, q] += X[:, r] * (v Zinv[c, q]).
    for &(r, c, v) in &a.entries {
        let xr = &xs[r * n..(r + 1) * n];
        for q in 0..n {
            let coef = z_inv[(c, q)] * v;
            for (wp, xp) in ws[q * n..(q + 1) * n].iter_mut().zip(xr) {
                *wp += xp * coef;
            }
        }
    }
    w
}

/// `Re tr[A X B Z^-1]` for two sparse terms.
fn sparse_pair(a: &SparseHermitian, b: &SparseHermitian, x: &CMatrix, z_inv: &CMatrix) -> f64 {
    let mut acc = 0.0;
    for &(ra, ca, va) in &a.entries {
        for &(rb, cb, vb) in &b.entries {
            acc += (va * x[(ca, rb)] * vb * z_inv[(cb, ra)]).re;
        }
    }
    acc
}

struct Newton {
    schur: Cholesky<f64, Dyn>,
    free: Option<(DMatrix<f64>, Cholesky<f64, Dyn>, DMatrix<f64>)>,
}

fn schur_matrix(form: &Form, x: &[BlockValue], z: &[BlockValue], f: &Factors) -> DMatrix<f64> {
    let m = form.m();
    let mut mm = DMatrix::zeros(m, m);
    for (j, kind) in form.kinds.iter().enumerate() {
        let inc = &form.by_block[j];
        match kind {
            BlockKind::Psd(_) => {
                let xj = x[j].matrix();
                let zi = f.z_inv[j].as_ref().unwrap();
                let twins = &form.twins[j];
                let n = kind.dim();
                // Rows with many entries get `W = X A Z^-1`; pairs of sparse rows are summed directly.
                let ws: Vec<Option<CMatrix>> = inc
                    .iter()
                    .zip(twins)
                    .map(|(&(i, t), twin)| {
                        let row = &form.rows[i];
                        let BlockData::Matrix(a) = &row.terms[t].1 else { unreachable!() };
                        (twin.is_none() && a.nnz() > SPARSE_ROW * n)
                            .then(|| scaled_term(&row.terms[t].1, row.dense[t].as_ref(), xj, zi))
                    })
                    .collect();
                let w_of = |q: usize| ws[twins[q].unwrap_or(q)].as_ref();
                for (p, &(i, t)) in inc.iter().enumerate() {
                    let BlockData::Matrix(a) = &form.rows[i].terms[t].1 else { unreachable!() };
                    for (q, &(k, s)) in inc.iter().enumerate().skip(p) {
                        let BlockData::Matrix(b) = &form.rows[k].terms[s].1 else { unreachable!() };
                        let v = match (w_of(q), w_of(p)) {
                            (Some(wq), _) => a.inner(wq),
                            (None, Some(wp)) => b.inner(wp),
                            (None, None) => sparse_pair(a, b, xj, zi),
                        };
                        mm[(i, k)] += v;
                        if i != k {
                            mm[(k, i)] += v;
                        }
                    }
                }
            }
            BlockKind::Nonneg(_) => {
                let (xv, zv) = (x[j].vector(), z[j].vector());
                for (p, &(i, t)) in inc.iter().enumerate() {
                    let BlockData::Vector(a) = &form.rows[i].terms[t].1 else { unreachable!() };
                    for &(k, s) in inc.iter().skip(p) {
                        let BlockData::Vector(bv) = &form.rows[k].terms[s].1 else { unreachable!() };
                        let mut v = 0.0;
                        for &(ia, ca) in a {
                            for &(ib, cb) in bv {
                                if ia == ib {
                                    v += ca * cb * xv[ia] / zv[ia];
                                }
                            }
                        }
                        mm[(i, k)] += v;
                        if i != k {
                            mm[(k, i)] += v;
                        }
                    }
                }
            }
            BlockKind::Free(_) => {}
        }
    }
    mm
}

impl Newton {
    fn new(form: &Form, mm: DMatrix<f64>) -> Option<Self> {
        let scale = (0..mm.nrows()).map(|i| mm[(i, i)].abs()).fold(1e-300, f64::max);
        let mut reg = 0.0;
        let schur = loop {
            let mut trial = mm.clone();
            for i in 0..trial.nrows() {
                trial[(i, i)] += reg;
            }
            if let Some(c) = Cholesky::new(trial) {
                break c;
            }
            reg = if reg == 0.0 { 1e-14 * scale } else { reg * 100.0 };
            if reg > 1e-6 * scale {
                return None;
            }
        };
        let free = if form.free.is_empty() {
            None
        } else {
            let bm = form.free_matrix();
            let minv_b = schur.solve(&bm);
            let s = bm.transpose() * &minv_b;
            let cs = Cholesky::new(s.clone()).or_else(|| {
                let mut s = s;
                let sc = (0..s.nrows()).map(|i| s[(i, i)]).fold(1e-300, f64::max);
                for i in 0..s.nrows() {
                    s[(i, i)] += 1e-13 * sc;
                }
                Cholesky::new(s)
            })?;
            Some((bm, cs, minv_b))
        };
        Some(Self { schur, free })
    }

    /// Solves `M dy + B dt = h`, `B^T dy = rf`.
    fn solve(&self, h: &DVector<f64>, rf: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        match &self.free {
            None => (self.schur.solve(h), DVector::zeros(0)),
            Some((bm, cs, minv_b)) => {
                let minv_h = self.schur.solve(h);
                let dt = cs.solve(&(bm.transpose() * &minv_h - rf));
                let dy = minv_h - minv_b * &dt;
                (dy, dt)
            }
        }
    }
}

#[derive(Clone)]
struct State {
    x: Vec<BlockValue>,
    y: DVector<f64>,
    z: Vec<BlockValue>,
}

fn initial_point(form: &Form) -> State {
    let m = form.m();
    let mut x = Vec::new();
    let mut z = Vec::new();
    for (j, &kind) in form.kinds.iter().enumerate() {
        let n = kind.dim() as f64;
        let mut xi = 10f64.max(n.sqrt());
        let mut eta = 10f64.max(n.sqrt()).max(form.c[j].norm_sq().sqrt());
        for &(i, t) in &form.by_block[j] {
            let a = form.rows[i].terms[t].1.norm_sq().sqrt();
            xi = xi.max(n.sqrt() * (1.0 + form.b[i].abs()) / (1.0 + a));
            eta = eta.max(a);
        }
        match kind {
            BlockKind::Psd(k) => {
                x.push(BlockValue::Matrix(linalg::identity(k) * linalg::re(xi)));
                z.push(BlockValue::Matrix(linalg::identity(k) * linalg::re(eta)));
            }
            BlockKind::Nonneg(k) => {
                x.push(BlockValue::Vector(DVector::from_element(k, xi)));
                z.push(BlockValue::Vector(DVector::from_element(k, eta)));
            }
            BlockKind::Free(k) => {
                x.push(BlockValue::Vector(DVector::zeros(k)));
                z.push(BlockValue::Vector(DVector::zeros(k)));
            }
        }
    }
    State { x, y: DVector::zeros(m), z }
}

fn add_scaled(a: &mut BlockValue, b: &BlockValue, alpha: f64) {
    match (a, b) {
        (BlockValue::Matrix(a), BlockValue::Matrix(b)) => *a += b * linalg::re(alpha),
        (BlockValue::Vector(a), BlockValue::Vector(b)) => a.axpy(alpha, b, 1.0),
        _ => unreachable!(),
    }
}

fn sub(a: &BlockValue, b: &BlockValue) -> BlockValue {
    let mut out = a.clone();
    add_scaled(&mut out, b, -1.0);
    out
}

/// Direction from the complementarity target `sigma mu` and a corrector term.
#[allow(clippy::too_many_arguments)]
fn direction(
    form: &Form,
    st: &State,
    f: &Factors,
    newton: &Newton,
    rp: &DVector<f64>,
    rd: &[BlockValue],
    rf: &DVector<f64>,
    target: f64,
    corrector: Option<(&[BlockValue], &[BlockValue])>,
) -> (Vec<BlockValue>, DVector<f64>, Vec<BlockValue>) {
    // R = target Z^-1 - X - (X Rd + corr) Z^-1 on cone blocks.
    let mut r: Vec<BlockValue> = Vec::with_capacity(form.kinds.len());
    for (j, kind) in form.kinds.iter().enumerate() {
        r.push(match kind {
            BlockKind::Psd(_) => {
                let xj = st.x[j].matrix();
                let zi = f.z_inv[j].as_ref().unwrap();
                let mut inner = linalg::matmul(xj, rd[j].matrix());
                if let Some((dxa, dza)) = corrector {
                    inner += linalg::matmul(dxa[j].matrix(), dza[j].matrix());
                }
                BlockValue::Matrix(linalg::hermitize(&(zi * linalg::re(target) - xj - linalg::matmul(&inner, zi))))
            }
            BlockKind::Nonneg(_) => {
                let (xv, zv, rv) = (st.x[j].vector(), st.z[j].vector(), rd[j].vector());
                let mut v = DVector::zeros(xv.len());
                for i in 0..xv.len() {
                    let mut corr = 0.0;
                    if let Some((dxa, dza)) = corrector {
                        corr = dxa[j].vector()[i] * dza[j].vector()[i];
                    }
                    v[i] = (target - xv[i] * zv[i] - xv[i] * rv[i] - corr) / zv[i];
                }
                BlockValue::Vector(v)
            }
            BlockKind::Free(n) => BlockValue::Vector(DVector::zeros(*n)),
        });
    }
    let h = rp - form.apply(&r);
    let (mut dy, dt) = newton.solve(&h, rf);
    let mut dx = r;
    let mut dz: Vec<BlockValue> = rd.to_vec();
    lift(form, st, f, &dy, &dt, &mut dx, &mut dz);
    // Iterative refinement against the operator itself: near the optimum the Schur
    // complement is ill-conditioned and A(dx) = rp is otherwise met only to ~1e-9.
    let rp_norm = rp.norm().max(1e-300);
    for _ in 0..REFINEMENT_STEPS {
        let e = rp - form.apply(&dx);
        let ef = match &newton.free {
            Some((bm, _, _)) => rf - bm.transpose() * &dy,
            None => DVector::zeros(0),
        };
        if e.norm() <= 1e-14 * rp_norm.max(1.0) && ef.norm() <= 1e-14 {
            break;
        }
        let (cy, ct) = newton.solve(&e, &ef);
        lift(form, st, f, &cy, &ct, &mut dx, &mut dz);
        dy += cy;
    }
    for (j, kind) in form.kinds.iter().enumerate() {
        if matches!(kind, BlockKind::Free(_)) {
            dz[j] = BlockValue::Vector(DVector::zeros(kind.dim()));
        }
    }
    (dx, dy, dz)
}

/// Adds the contribution of `(dy, dt)` to a Newton direction:
/// `dx += X A^T(dy) Z^-1` (symmetrised) on cone blocks, `dt` on free scalars, `dz -= A^T(dy)`.
fn lift(
    form: &Form,
    st: &State,
    f: &Factors,
    dy: &DVector<f64>,
    dt: &DVector<f64>,
    dx: &mut [BlockValue],
    dz: &mut [BlockValue],
) {
    let aty = form.adjoint(dy);
    for (j, kind) in form.kinds.iter().enumerate() {
        match kind {
            BlockKind::Psd(_) => {
                let xj = st.x[j].matrix();
                let zi = f.z_inv[j].as_ref().unwrap();
                let extra = linalg::matmul(&linalg::matmul(xj, aty[j].matrix()), zi);
                if let BlockValue::Matrix(m) = &mut dx[j] {
                    *m = linalg::hermitize(&(&*m + extra));
                }
                add_scaled(&mut dz[j], &aty[j], -1.0);
            }
            BlockKind::Nonneg(_) => {
                let (xv, zv, av) = (st.x[j].vector(), st.z[j].vector(), aty[j].vector());
                if let BlockValue::Vector(v) = &mut dx[j] {
                    for i in 0..v.len() {
                        v[i] += xv[i] * av[i] / zv[i];
                    }
                }
                add_scaled(&mut dz[j], &aty[j], -1.0);
            }
            BlockKind::Free(_) => {}
        }
    }
    for (col, &(j, i)) in form.free.iter().enumerate() {
        if let BlockValue::Vector(v) = &mut dx[j] {
            v[i] += dt[col];
        }
    }
}

fn max_steps(form: &Form, st: &State, f: &Factors, dx: &[BlockValue], dz: &[BlockValue]) -> (f64, f64) {
    let (mut ap, mut ad) = (f64::INFINITY, f64::INFINITY);
    for (j, kind) in form.kinds.iter().enumerate() {
        match kind {
            BlockKind::Psd(_) => {
                ap = ap.min(psd_step(f.x_chol_inv[j].as_ref().unwrap(), dx[j].matrix()));
                ad = ad.min(psd_step(f.z_chol_inv[j].as_ref().unwrap(), dz[j].matrix()));
            }
            BlockKind::Nonneg(_) => {
                ap = ap.min(vec_step(st.x[j].vector(), dx[j].vector()));
                ad = ad.min(vec_step(st.z[j].vector(), dz[j].vector()));
            }
            BlockKind::Free(_) => {}
        }
    }
    (ap, ad)
}

fn complementarity(form: &Form, x: &[BlockValue], z: &[BlockValue]) -> f64 {
    form.kinds
        .iter()
        .enumerate()
        .filter(|(_, k)| !matches!(k, BlockKind::Free(_)))
        .map(|(j, _)| x[j].dot(&z[j]))
        .sum()
}

pub fn solve(problem: &SdpProblem, tol: &Tolerances) -> Result<SdpSolution> {
    problem.validate()?;
    let form = match Form::build(problem) {
        Preprocess::Ready(f) => f,
        Preprocess::Inconsistent => return Ok(trivial(problem, SdpStatus::Infeasible, 0)),
    };
    let nu: f64 = form.kinds.iter().map(|k| k.degree() as f64).sum::<f64>().max(1.0);
    let b_norm = form.b.norm();
    let c_norm = form.c.iter().map(|c| c.norm_sq()).sum::<f64>().sqrt();
    let mut st = initial_point(&form);
    let status;
    let mut iterations = 0;
    let mut stalls = 0;
    let mut metrics;
    // Best iterate so far by `max(pinf, dinf, gap)`; returned on early exits.
    let mut best: Option<(f64, State, (f64, f64, f64, f64))> = None;
    let mut since_best = 0;

    loop {
        let ax = form.apply(&st.x);
        let rp = &form.b - ax;
        let aty = form.adjoint(&st.y);
        let mut rd: Vec<BlockValue> = Vec::with_capacity(form.kinds.len());
        let mut rf = DVector::zeros(form.free.len());
        for (j, kind) in form.kinds.iter().enumerate() {
            let mut r = sub(&form.c[j], &aty[j]);
            if !matches!(kind, BlockKind::Free(_)) {
                add_scaled(&mut r, &st.z[j], -1.0);
            }
            rd.push(r);
        }
        for (col, &(j, i)) in form.free.iter().enumerate() {
            rf[col] = rd[j].vector()[i];
        }
        let rd_norm = form
            .kinds
            .iter()
            .enumerate()
            .map(|(j, _)| rd[j].norm_sq())
            .sum::<f64>()
            .sqrt();
        let pobj: f64 = form.c.iter().zip(&st.x).map(|(c, x)| c.dot(x)).sum();
        let dobj = form.b.dot(&st.y);
        let pinf = rp.norm() / (1.0 + b_norm);
        let dinf = rd_norm / (1.0 + c_norm);
        let gap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
        let mu = complementarity(&form, &st.x, &st.z) / nu;
        metrics = (pobj, dobj, pinf, dinf);
        if !(pobj.is_finite() && dobj.is_finite() && mu.is_finite()) {
            status = SdpStatus::NumericalTrouble;
            break;
        }
        let merit = pinf.max(dinf).max(gap);
        if best.as_ref().is_none_or(|b| merit < 0.5 * b.0) {
            best = Some((merit, st.clone(), metrics));
            since_best = 0;
        } else {
            since_best += 1;
        }
        if pinf <= tol.feasibility && dinf <= tol.feasibility && gap <= tol.gap {
            status = SdpStatus::Optimal;
            break;
        }
        if dobj > BLOWUP * (1.0 + c_norm) && pinf > tol.feasibility {
            status = SdpStatus::Infeasible;
            break;
        }
        if -pobj > BLOWUP * (1.0 + b_norm) && dinf > tol.feasibility {
            status = SdpStatus::Unbounded;
            break;
        }
        if iterations >= tol.max_iter {
            status = SdpStatus::MaxIter;
            break;
        }
        if since_best >= STAGNATION {
            status = SdpStatus::NumericalTrouble;
            break;
        }
        iterations += 1;

        let Some(f) = factor(&form.kinds, &st.x, &st.z) else {
            status = SdpStatus::NumericalTrouble;
            break;
        };
        let Some(newton) = Newton::new(&form, schur_matrix(&form, &st.x, &st.z, &f)) else {
            status = SdpStatus::NumericalTrouble;
            break;
        };

        let (dxa, _, dza) = direction(&form, &st, &f, &newton, &rp, &rd, &rf, 0.0, None);
        let (ap, ad) = max_steps(&form, &st, &f, &dxa, &dza);
        let (ap, ad) = (ap.min(1.0), ad.min(1.0));
        let mut xa = st.x.clone();
        let mut za = st.z.clone();
        for j in 0..form.kinds.len() {
            add_scaled(&mut xa[j], &dxa[j], ap);
            add_scaled(&mut za[j], &dza[j], ad);
        }
        let mu_aff = complementarity(&form, &xa, &za) / nu;
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

        let (dx, dy, dz) = direction(&form, &st, &f, &newton, &rp, &rd, &rf, sigma * mu, Some((&dxa, &dza)));
        let (ap, ad) = max_steps(&form, &st, &f, &dx, &dz);
        let ap = (STEP_FRACTION * ap).min(1.0);
        let ad = (STEP_FRACTION * ad).min(1.0);
        if ap < 1e-10 && ad < 1e-10 {
            stalls += 1;
            if stalls >= 3 {
                status = SdpStatus::NumericalTrouble;
                break;
            }
        } else {
            stalls = 0;
        }
        for j in 0..form.kinds.len() {
            add_scaled(&mut st.x[j], &dx[j], ap);
            if !matches!(form.kinds[j], BlockKind::Free(_)) {
                add_scaled(&mut st.z[j], &dz[j], ad);
            }
        }
        st.y.axpy(ad, &dy, 1.0);
    }

    if matches!(status, SdpStatus::MaxIter | SdpStatus::NumericalTrouble) {
        if let Some((_, state, m)) = best {
            st = state;
            metrics = m;
        }
    }
    let (_, _, pinf, dinf) = metrics;
    let mut y = vec![0.0; form.user_rows];
    for (p, &(i, s)) in form.origin.iter().enumerate() {
        y[i] = st.y[p] / s;
    }
    let x: Vec<BlockValue> = st.x[..form.user_blocks].to_vec();
    let primal_objective = problem.objective_value(&x);
    let dual_objective = problem.dual_objective(&y);
    let z = problem.dual_slack(&y);
    Ok(SdpSolution {
        status,
        x,
        y,
        z,
        primal_objective,
        dual_objective,
        gap: primal_objective - dual_objective,
        primal_residual: pinf,
        dual_residual: dinf,
        iterations,
    })
}

fn trivial(problem: &SdpProblem, status: SdpStatus, iterations: usize) -> SdpSolution {
    let x: Vec<BlockValue> = problem.blocks.iter().map(|&k| BlockValue::zeros(k)).collect();
    let y = vec![0.0; problem.constraints.len()];
    SdpSolution {
        status,
        z: problem.dual_slack(&y),
        x,
        y,
        primal_objective: f64::NAN,
        dual_objective: f64::NAN,
        gap: f64::NAN,
        primal_residual: f64::INFINITY,
        dual_residual: f64::NAN,
        iterations,
    }
}
