//! The certified key-rate computation: constraint assembly, Frank-Wolfe (Step 1),
//! the linearised dual bound (Step 2), weight bounds and transmissivity scans.

mod certify;
mod constraints;
mod frank_wolfe;
mod pipeline;
mod weight;

use thiserror::Error;

use crate::fock::FockError;
use crate::keyrate::KeyRateError;
use crate::protocol::ProtocolError;
use crate::sdp::{SdpError, SdpStatus};

pub use certify::{certified_lower_bound, CertStatus, CertifiedRate};
pub use constraints::{assemble_constraints, FeasibleSetSpec, MarginalConstraint};
pub use frank_wolfe::{frank_wolfe, golden_section, FwIteration, FwOptions, FwStop, FwTrace};
pub use pipeline::{
    default_grid, evaluate, refine_band_edge, scan_eta_t, PipelineOptions, PointResult, PointStatus, ScanResult,
};
pub use weight::{
    b_only_basis, lambda_min_dc, lambda_min_dc_brute, poisson_tail, wcp_f_tail, weight_bound, WeightReport,
};

#[derive(Debug, Error)]
pub enum BoundsError {
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Fock(#[from] FockError),
    #[error(transparent)]
    KeyRate(#[from] KeyRateError),
    #[error(transparent)]
    Sdp(#[from] SdpError),
    #[error("{what} is not block diagonal in photon number (defect {defect:e})")]
    Reduction { what: String, defect: f64 },
    #[error("weight {0} outside [0, 1]")]
    Weight(f64),
    #[error("direction subproblem returned {}", .0.name())]
    DirectionSdp(SdpStatus),
    #[error("weight bound needs N > 1 (got {0})")]
    TrivialWeight(u32),
    #[error("weight inputs out of range: q_dc={q_dc}, p_z={p_z}, W_F={w_f}")]
    WeightInput { q_dc: f64, p_z: f64, w_f: f64 },
}

pub type Result<T> = std::result::Result<T, BoundsError>;
