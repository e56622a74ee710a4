//! The feasible set as a block-diagonal SDP.
//!
//! Every operator in the problem commutes with the total photon number of BF, so the
//! state is restricted to one PSD block per photon layer of `A (x) BF` and the
//! marginal constraint splits over the F photon number of `A (x) F`.

use crate::fock::PartialTraceKernel;
use crate::linalg::{self, CMatrix};
use crate::protocol::{Observable, Scenario, A_DIM};
use crate::sdp::{
    self, BallPart, BlockData, BlockKind, BlockValue, Constraint, ConstraintKind, SdpProblem, SparseHermitian,
};

use super::{BoundsError, Result};

/// Which source-replacement constraint is imposed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MarginalConstraint {
    /// `tr_B rho` on `A (x) F` (the bypass constraint).
    #[default]
    AliceAndF,
    /// Only Alice's reduced state.
    AliceOnly,
    None,
}

#[derive(Debug, Clone)]
pub struct FeasibleSetSpec {
    layout: Layout,
    pub statistics: Vec<Observable>,
    pub marginal: MarginalConstraint,
    pub weight: f64,
    /// Constraint rows of the linear subproblem; the objective is filled per call.
    template: SdpProblem,
}

/// Splits `m` into diagonal blocks, failing if mass sits between blocks.
fn restrict(m: &CMatrix, sectors: &[Vec<usize>], sector_of: &[usize], what: &str) -> Result<Vec<CMatrix>> {
    let scale = 1.0 + linalg::max_abs(m);
    let mut defect = 0.0f64;
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            if sector_of[r] != sector_of[c] {
                defect = defect.max(m[(r, c)].norm());
            }
        }
    }
    if defect > 1e-10 * scale {
        return Err(BoundsError::Reduction { what: what.to_string(), defect });
    }
    Ok(sectors.iter().map(|idx| m.select_rows(idx).select_columns(idx)).collect())
}

fn sector_index(n: usize, sectors: &[Vec<usize>]) -> Vec<usize> {
    let mut out = vec![usize::MAX; n];
    for (j, idx) in sectors.iter().enumerate() {
        for &i in idx {
            out[i] = j;
        }
    }
    out
}

/// Columns spanning the eigenvalues of `m` below `tol` (or above, if `!below`).
fn eigenspace(m: &CMatrix, tol: f64, below: bool) -> CMatrix {
    let (vals, vecs) = linalg::eigh(m);
    let cols: Vec<usize> = (0..vals.len()).filter(|&i| (vals[i] <= tol) == below).collect();
    vecs.select_columns(&cols)
}

/// Block structure of the state: photon-layer sectors of `A (x) BF`, each
/// optionally compressed to a subspace by an isometry `frame` (`sigma_j = V_j^dag rho_j V_j`).
#[derive(Debug, Clone)]
struct Layout {
    dim: usize,
    sectors: Vec<Vec<usize>>,
    sector_of: Vec<usize>,
    frames: Vec<CMatrix>,
}

impl Layout {
    fn compress(&self, m: &CMatrix, what: &str) -> Result<Vec<CMatrix>> {
        Ok(restrict(m, &self.sectors, &self.sector_of, what)?
            .into_iter()
            .zip(&self.frames)
            .map(|(b, v)| linalg::hermitize(&(v.adjoint() * b * v)))
            .collect())
    }

    /// Compressed blocks as constraint terms; entries at roundoff level of `m` are dropped.
    fn terms(&self, m: &CMatrix, what: &str) -> Result<Vec<(usize, BlockData)>> {
        let floor = CHOP_TOL * (1.0 + linalg::max_abs(m));
        Ok(self
            .compress(m, what)?
            .into_iter()
            .map(|b| b.map(|z| if z.norm() > floor { z } else { linalg::re(0.0) }))
            .enumerate()
            .map(|(j, b)| (j, BlockData::Matrix(SparseHermitian::from_dense(&b))))
            .filter(|(_, d)| matches!(d, BlockData::Matrix(a) if a.nnz() > 0))
            .collect())
    }
}

/// The source-replacement map `rho -> tr_B rho` (or `tr_BF rho`) with its reference value.
struct MarginalMap {
    sectors: Vec<Vec<usize>>,
    reference: CMatrix,
    adjoint: Box<dyn Fn(&CMatrix) -> Result<CMatrix>>,
}

impl MarginalMap {
    fn new(scenario: &Scenario, mode: MarginalConstraint) -> Option<Self> {
        let d = scenario.basis.len();
        let kernel = PartialTraceKernel::new(&scenario.basis);
        let m = kernel.support.len();
        let reference = &scenario.marginal;
        match mode {
            MarginalConstraint::None => None,
            MarginalConstraint::AliceAndF => {
                let st = kernel.support.states().to_vec();
                let max_f = st.iter().map(|s| s.0 + s.1).max().unwrap_or(0);
                let sectors = (0..=max_f)
                    .map(|c| {
                        (0..A_DIM)
                            .flat_map(|a| (0..m).filter(|&f| st[f].0 + st[f].1 == c).map(move |f| a * m + f).collect::<Vec<_>>())
                            .collect()
                    })
                    .collect();
                Some(Self {
                    sectors,
                    reference: reference.clone(),
                    adjoint: Box::new(move |e: &CMatrix| Ok(kernel.adjoint(e, A_DIM)?)),
                })
            }
            MarginalConstraint::AliceOnly => Some(Self {
                sectors: vec![(0..A_DIM).collect()],
                reference: CMatrix::from_fn(A_DIM, A_DIM, |i, j| (0..m).map(|f| reference[(i * m + f, j * m + f)]).sum()),
                adjoint: Box::new(move |e: &CMatrix| Ok(linalg::kron(e, &linalg::identity(d)))),
            }),
        }
    }

    fn dim(&self) -> usize {
        self.reference.nrows()
    }

    fn embed(&self, sector: usize, e: &CMatrix) -> CMatrix {
        let idx = &self.sectors[sector];
        let mut full = linalg::zeros(self.dim());
        for (p, &r) in idx.iter().enumerate() {
            for (q, &c) in idx.iter().enumerate() {
                full[(r, c)] = e[(p, q)];
            }
        }
        full
    }

    fn centers(&self) -> Result<Vec<CMatrix>> {
        restrict(&self.reference, &self.sectors, &sector_index(self.dim(), &self.sectors), "reference marginal")
    }

    /// `tr_B^dag` of the projector onto the kernel of the reference: every feasible
    /// state is orthogonal to its support.
    fn excluded(&self) -> Result<CMatrix> {
        let scale = linalg::max_eigenvalue(&self.reference).max(1.0);
        let mut pk = linalg::zeros(self.dim());
        for (s, c) in self.centers()?.iter().enumerate() {
            let v = eigenspace(c, KERNEL_TOL * scale, true);
            pk += self.embed(s, &(&v * v.adjoint()));
        }
        (self.adjoint)(&pk)
    }

    fn parts(&self, layout: &Layout) -> Result<Vec<BallPart>> {
        let mut parts = Vec::with_capacity(self.sectors.len());
        for (s, center) in self.centers()?.into_iter().enumerate() {
            let image = sdp::hermitian_basis(center.nrows())
                .iter()
                .map(|e| layout.terms(&(self.adjoint)(&self.embed(s, &e.to_dense()))?, "marginal constraint"))
                .collect::<Result<_>>()?;
            parts.push(BallPart { image, center });
        }
        Ok(parts)
    }
}

const KERNEL_TOL: f64 = 1e-12;
const CHOP_TOL: f64 = 1e-13;

/// Builds the feasible set of the key-rate problem for a scenario.
///
/// With `W = 0` and a marginal constraint, the reference marginal is rank deficient,
/// which confines every feasible state to a face of the PSD cone; the blocks are
/// compressed to that face so that the subproblems keep strictly feasible points.
pub fn assemble_constraints(scenario: &Scenario, mode: MarginalConstraint) -> Result<FeasibleSetSpec> {
    let w = scenario.weight;
    if !(0.0..=1.0).contains(&w) {
        return Err(BoundsError::Weight(w));
    }
    let d = scenario.basis.len();
    let n = scenario.dim();
    let sectors: Vec<Vec<usize>> = (0..=scenario.basis.max_total_photons())
        .map(|layer| {
            let states = scenario.basis.layer(layer);
            (0..A_DIM).flat_map(|a| states.iter().map(move |&s| a * d + s)).collect()
        })
        .filter(|v: &Vec<usize>| !v.is_empty())
        .collect();
    let sector_of = sector_index(n, &sectors);
    let marginal = MarginalMap::new(scenario, mode);

    let frames: Vec<CMatrix> = match (&marginal, w == 0.0) {
        (Some(map), true) => {
            let excluded = restrict(&map.excluded()?, &sectors, &sector_of, "marginal kernel")?;
            excluded.iter().map(|k| eigenspace(k, KERNEL_TOL * (1.0 + linalg::max_abs(k)), true)).collect()
        }
        _ => sectors.iter().map(|s| linalg::identity(s.len())).collect(),
    };
    // Drop blocks that the face removes entirely.
    let keep: Vec<usize> = (0..sectors.len()).filter(|&j| frames[j].ncols() > 0).collect();
    let sectors: Vec<Vec<usize>> = keep.iter().map(|&j| sectors[j].clone()).collect();
    let frames: Vec<CMatrix> = keep.iter().map(|&j| frames[j].clone()).collect();
    let mut sector_of = sector_index(n, &sectors);
    // States outside every kept sector must carry no constraint weight; mark them as their own sector.
    for v in sector_of.iter_mut().filter(|v| **v == usize::MAX) {
        *v = usize::MAX - 1;
    }
    let layout = Layout { dim: n, sectors, sector_of, frames };
    let mut problem = SdpProblem::new(layout.frames.iter().map(|v| BlockKind::Psd(v.ncols())).collect());

    for ob in &scenario.observables {
        let terms = layout.terms(&ob.operator, &ob.label)?;
        if w == 0.0 {
            let mut row = Constraint::new(ob.label.clone(), ConstraintKind::Eq, ob.target);
            row.terms = terms;
            problem.push(row);
        } else {
            let mut hi = Constraint::new(format!("{}.upper", ob.label), ConstraintKind::Le, ob.target);
            hi.terms = terms.clone();
            let mut lo = Constraint::new(format!("{}.lower", ob.label), ConstraintKind::Ge, ob.target - w);
            lo.terms = terms;
            problem.push(hi);
            problem.push(lo);
        }
    }
    let trace_terms = layout.terms(&linalg::identity(n), "trace")?;
    if w == 0.0 {
        let mut row = Constraint::new("trace", ConstraintKind::Eq, 1.0);
        row.terms = trace_terms;
        problem.push(row);
    } else {
        let mut hi = Constraint::new("trace.upper", ConstraintKind::Le, 1.0);
        hi.terms = trace_terms.clone();
        let mut lo = Constraint::new("trace.lower", ConstraintKind::Ge, 1.0 - w);
        lo.terms = trace_terms;
        problem.push(hi);
        problem.push(lo);
    }

    if let Some(map) = &marginal {
        let parts = map.parts(&layout)?;
        if w == 0.0 {
            for (s, part) in parts.into_iter().enumerate() {
                let basis = sdp::hermitian_basis(part.center.nrows());
                for (t, (terms, e)) in part.image.into_iter().zip(&basis).enumerate() {
                    let mut row = Constraint::new(format!("marginal[{s}.{t}]"), ConstraintKind::Eq, e.inner(&part.center));
                    row.terms = terms;
                    problem.push(row);
                }
            }
        } else {
            sdp::trace_norm_ball(&mut problem, "marginal", parts, w.sqrt());
        }
    }

    Ok(FeasibleSetSpec { statistics: scenario.observables.clone(), marginal: mode, weight: w, layout, template: problem })
}

impl FeasibleSetSpec {
    pub fn dim(&self) -> usize {
        self.layout.dim
    }

    pub fn state_blocks(&self) -> usize {
        self.layout.sectors.len()
    }

    /// Dimensions of the (compressed) state blocks.
    pub fn block_dims(&self) -> Vec<usize> {
        self.layout.frames.iter().map(|v| v.ncols()).collect()
    }

    /// The constraint rows (objective zero).
    pub fn template(&self) -> &SdpProblem {
        &self.template
    }

    /// Compressed diagonal blocks of a full operator.
    pub fn blocks_of(&self, m: &CMatrix) -> Vec<BlockValue> {
        self.layout
            .sectors
            .iter()
            .zip(&self.layout.frames)
            .map(|(idx, v)| BlockValue::Matrix(linalg::hermitize(&(v.adjoint() * m.select_rows(idx).select_columns(idx) * v))))
            .collect()
    }

    /// Full operator from its compressed blocks.
    pub fn assemble(&self, blocks: &[BlockValue]) -> CMatrix {
        let mut out = linalg::zeros(self.layout.dim);
        for ((idx, v), b) in self.layout.sectors.iter().zip(&self.layout.frames).zip(blocks) {
            let m = v * b.matrix() * v.adjoint();
            for (p, &r) in idx.iter().enumerate() {
                for (q, &c) in idx.iter().enumerate() {
                    out[(r, c)] = m[(p, q)];
                }
            }
        }
        linalg::hermitize(&out)
    }

    /// Like [`assemble`](Self::assemble), with each block clipped to the PSD cone first.
    /// Solver output may sit a few ulps outside the cone, which the logarithms do not tolerate.
    pub fn assemble_psd(&self, blocks: &[BlockValue]) -> CMatrix {
        let clipped: Vec<BlockValue> =
            blocks.iter().map(|b| BlockValue::Matrix(linalg::hermitian_function(b.matrix(), |x| x.max(0.0)))).collect();
        self.assemble(&clipped)
    }

    /// `min tr[sigma G]` over the feasible set.
    pub fn linear_problem(&self, gradient: &CMatrix) -> SdpProblem {
        let mut p = self.template.clone();
        for (j, b) in self.blocks_of(&linalg::hermitize(gradient)).into_iter().enumerate() {
            p.set_objective(j, b);
        }
        p
    }

    /// Largest violation of the state constraints by `rho`, including mass outside
    /// the retained blocks (auxiliary blocks are optimised out and not checked).
    pub fn violation(&self, rho: &CMatrix) -> f64 {
        let blocks = self.blocks_of(rho);
        let mut worst = (-linalg::min_eigenvalue(rho)).max(0.0);
        let kept: f64 = blocks.iter().map(|b| linalg::real_trace(b.matrix())).sum();
        worst = worst.max((linalg::real_trace(rho) - kept).abs());
        let n_state = self.state_blocks();
        for c in &self.template.constraints {
            if c.terms.iter().any(|(j, _)| *j >= n_state) {
                continue;
            }
            let v = c.evaluate(&blocks) - c.bound;
            worst = worst.max(match c.kind {
                ConstraintKind::Eq => v.abs(),
                ConstraintKind::Le => v.max(0.0),
                ConstraintKind::Ge => (-v).max(0.0),
            });
        }
        worst
    }
}
