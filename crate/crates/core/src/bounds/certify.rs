//! Step 2: a certified lower bound from the linearisation at `rho*`.

use crate::keyrate::{zeta_eps, KeyMapBundle};
use crate::linalg::{self, CMatrix};
use crate::sdp::{self, Tolerances};

use super::{FeasibleSetSpec, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CertStatus {
    Certified,
    /// No exactly dual-feasible point could be constructed; the bound is `-inf`.
    DualRepairFailed,
}

impl CertStatus {
    pub fn name(self) -> &'static str {
        match self {
            CertStatus::Certified => "certified",
            CertStatus::DualRepairFailed => "dual_repair_failed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CertifiedRate {
    /// `f_eps(rho*)`, an upper value of the inner minimisation.
    pub fw_value: f64,
    /// `f_eps(rho*) - tr[rho* G] + beta - 2 zeta_eps`
    pub lower_bound: f64,
    pub beta: f64,
    /// `tr[rho* G]`
    pub linear_term: f64,
    pub zeta: f64,
    pub ec_term: f64,
    /// `lower_bound - ec_term`
    pub raw_key_rate: f64,
    /// `max(raw_key_rate, 0)`
    pub key_rate: f64,
    /// Primal minus certified dual value of the Step-2 SDP.
    pub duality_gap: f64,
    /// How far the dual multipliers had to be moved to become exactly feasible.
    pub dual_adjustment: f64,
    pub status: CertStatus,
}

pub fn certified_lower_bound(
    rho: &CMatrix,
    spec: &FeasibleSetSpec,
    bundle: &KeyMapBundle,
    ec_term: f64,
    tol: &Tolerances,
) -> Result<CertifiedRate> {
    let value = bundle.f_eps(rho)?.value;
    let grad = bundle.grad_f_eps(rho)?;
    let linear_term = linalg::trace_product(rho, &grad);
    let zeta = zeta_eps(bundle.epsilon, bundle.d_prime)?;
    let problem = spec.linear_problem(&grad);
    let sol = sdp::solve(&problem, tol)?;
    let cert = sdp::certified_dual_bound(&problem, &sol.y);
    let (beta, status, adjustment) = match cert {
        Some(c) if c.bound.is_finite() => (c.bound, CertStatus::Certified, c.adjustment),
        _ => (f64::NEG_INFINITY, CertStatus::DualRepairFailed, f64::NAN),
    };
    let lower_bound = value - linear_term + beta - 2.0 * zeta;
    let raw_key_rate = lower_bound - ec_term;
    Ok(CertifiedRate {
        fw_value: value,
        lower_bound,
        beta,
        linear_term,
        zeta,
        ec_term,
        raw_key_rate,
        key_rate: raw_key_rate.max(0.0),
        duality_gap: sol.primal_objective - beta,
        dual_adjustment: adjustment,
        status,
    })
}
