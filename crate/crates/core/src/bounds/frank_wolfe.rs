//! Step 1: conditional-gradient descent of `f_eps` over the feasible set.

use crate::keyrate::KeyMapBundle;
use crate::linalg::{self, CMatrix};
use crate::sdp::{self, SdpStatus, Tolerances};

use super::{BoundsError, FeasibleSetSpec, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FwOptions {
    /// Stop when `|tr[Delta G]| < delta`.
    pub delta: f64,
    pub max_iter: usize,
    pub line_search_evals: usize,
    pub line_search_tol: f64,
    /// Stop after this many consecutive decreases below `stall_tol`.
    pub stall_iters: usize,
    pub stall_tol: f64,
    pub sdp: Tolerances,
}

impl Default for FwOptions {
    fn default() -> Self {
        Self {
            delta: 1e-6,
            max_iter: 300,
            line_search_evals: 60,
            line_search_tol: 1e-10,
            stall_iters: 5,
            stall_tol: 1e-12,
            sdp: Tolerances::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FwStop {
    Converged,
    MaxIter,
    Stalled,
}

impl FwStop {
    pub fn name(self) -> &'static str {
        match self {
            FwStop::Converged => "converged",
            FwStop::MaxIter => "max_iter",
            FwStop::Stalled => "stalled",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FwIteration {
    /// `f_eps(rho_i)`
    pub value: f64,
    /// `|tr[Delta rho G]|`
    pub improvement: f64,
    pub step: f64,
}

#[derive(Debug, Clone)]
pub struct FwTrace {
    pub iterations: Vec<FwIteration>,
    pub rho: CMatrix,
    pub value: f64,
    pub stop: FwStop,
}

/// Golden-section minimisation of a convex function on `[0, 1]`.
pub fn golden_section(f: impl Fn(f64) -> f64, max_evals: usize, tol: f64) -> (f64, f64) {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (0.0, 1.0);
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    let mut evals = 2;
    while evals < max_evals && b - a > tol {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = f(x2);
        }
        evals += 1;
    }
    if f1 <= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Direction `Delta = sigma* - rho` of the linearised problem at `rho`.
pub(crate) fn direction(spec: &FeasibleSetSpec, gradient: &CMatrix, tol: &Tolerances) -> Result<(CMatrix, sdp::SdpSolution)> {
    let problem = spec.linear_problem(gradient);
    let sol = sdp::solve(&problem, tol)?;
    if !sol.is_usable() {
        return Err(BoundsError::DirectionSdp(sol.status));
    }
    Ok((spec.assemble_psd(&sol.x[..spec.state_blocks()]), sol))
}

pub fn frank_wolfe(spec: &FeasibleSetSpec, bundle: &KeyMapBundle, rho0: &CMatrix, opts: &FwOptions) -> Result<FwTrace> {
    let mut rho = linalg::hermitize(rho0);
    let mut value = bundle.f_eps(&rho)?.value;
    let mut iterations = Vec::new();
    let mut stalls = 0;
    let mut stop = FwStop::MaxIter;
    // Last iterate whose linear subproblem solved; Step 2 re-solves that same
    // subproblem, so a later numerical failure falls back to it.
    let mut last_good: Option<(CMatrix, f64)> = None;
    for _ in 0..opts.max_iter {
        let grad = bundle.grad_f_eps(&rho)?;
        let sigma = match direction(spec, &grad, &opts.sdp) {
            Ok((sigma, _)) => sigma,
            Err(BoundsError::DirectionSdp(status)) if status != SdpStatus::Infeasible => match last_good {
                Some((r, v)) => {
                    rho = r;
                    value = v;
                    stop = FwStop::Stalled;
                    break;
                }
                None => return Err(BoundsError::DirectionSdp(status)),
            },
            Err(e) => return Err(e),
        };
        last_good = Some((rho.clone(), value));
        let delta = &sigma - &rho;
        let improvement = linalg::trace_product(&delta, &grad).abs();
        if improvement < opts.delta {
            iterations.push(FwIteration { value, improvement, step: 0.0 });
            stop = FwStop::Converged;
            break;
        }
        let along = |t: f64| bundle.f_eps(&(&rho + &delta * linalg::re(t))).map(|v| v.value).unwrap_or(f64::INFINITY);
        let (mut step, mut next) = golden_section(along, opts.line_search_evals, opts.line_search_tol);
        let at_one = along(1.0);
        if at_one < next {
            step = 1.0;
            next = at_one;
        }
        if !(next < value) {
            step = 0.0;
            next = value;
        }
        iterations.push(FwIteration { value, improvement, step });
        if step > 0.0 {
            rho = linalg::hermitize(&(&rho + &delta * linalg::re(step)));
        }
        if value - next < opts.stall_tol {
            stalls += 1;
        } else {
            stalls = 0;
        }
        value = next;
        if stalls >= opts.stall_iters {
            stop = FwStop::Stalled;
            break;
        }
    }
    Ok(FwTrace { iterations, rho, value, stop })
}
