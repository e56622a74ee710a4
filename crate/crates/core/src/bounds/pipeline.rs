//! One certified point and scans over the second transmissivity.

use std::time::Instant;

use rayon::prelude::*;

use crate::keyrate::KeyMapBundle;
use crate::protocol::{BypassParams, Scenario};
use crate::sdp::{self, Feasibility};

use super::{
    assemble_constraints, certified_lower_bound, frank_wolfe, CertStatus, CertifiedRate, FwOptions, FwStop,
    MarginalConstraint, Result,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineOptions {
    pub fw: FwOptions,
    pub marginal: MarginalConstraint,
    /// Overrides the scenario's depolarising parameter.
    pub epsilon: Option<f64>,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self { fw: FwOptions::default(), marginal: MarginalConstraint::AliceAndF, epsilon: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointStatus {
    Ok,
    Infeasible,
    FwStalled,
    FwMaxIter,
    DualRepairFailed,
    NumericalTrouble,
}

impl PointStatus {
    pub fn name(self) -> &'static str {
        match self {
            PointStatus::Ok => "ok",
            PointStatus::Infeasible => "infeasible",
            PointStatus::FwStalled => "fw_stalled",
            PointStatus::FwMaxIter => "fw_max_iter",
            PointStatus::DualRepairFailed => "dual_repair_failed",
            PointStatus::NumericalTrouble => "numerical_trouble",
        }
    }

    /// A certified number was produced (possibly from an unconverged Step 1).
    pub fn has_rate(self) -> bool {
        matches!(self, PointStatus::Ok | PointStatus::FwStalled | PointStatus::FwMaxIter)
    }
}

#[derive(Debug, Clone)]
pub struct PointResult {
    pub bypass: BypassParams,
    pub weight: f64,
    pub feasible: bool,
    /// Optimal `t` of the feasibility program.
    pub margin: Option<f64>,
    pub iterations: usize,
    pub stop: Option<FwStop>,
    pub rate: Option<CertifiedRate>,
    pub status: PointStatus,
    pub wall_time_ms: u128,
    pub message: Option<String>,
}

fn run(scenario: &Scenario, opts: &PipelineOptions, out: &mut PointResult) -> Result<()> {
    let spec = assemble_constraints(scenario, opts.marginal)?;
    let witness = match sdp::check_feasibility(spec.template(), &opts.fw.sdp)? {
        Feasibility::Feasible { witness, margin } => {
            out.feasible = true;
            out.margin = Some(margin);
            witness
        }
        Feasibility::Infeasible { margin, status } => {
            out.margin = margin;
            out.status = PointStatus::Infeasible;
            if margin.is_none() {
                out.message = Some(format!("feasibility program: {}", status.name()));
            }
            return Ok(());
        }
    };
    let rho0 = spec.assemble_psd(&witness[..spec.state_blocks()]);
    let bundle = KeyMapBundle::new(scenario)?;
    let bundle = match opts.epsilon {
        Some(e) => bundle.with_epsilon(e)?,
        None => bundle,
    };
    let trace = frank_wolfe(&spec, &bundle, &rho0, &opts.fw)?;
    out.iterations = trace.iterations.len();
    out.stop = Some(trace.stop);
    let rate = certified_lower_bound(&trace.rho, &spec, &bundle, scenario.ec_term, &opts.fw.sdp)?;
    out.status = match (rate.status, trace.stop) {
        (CertStatus::DualRepairFailed, _) => PointStatus::DualRepairFailed,
        (_, FwStop::Converged) => PointStatus::Ok,
        (_, FwStop::Stalled) => PointStatus::FwStalled,
        (_, FwStop::MaxIter) => PointStatus::FwMaxIter,
    };
    out.rate = Some(rate);
    Ok(())
}

/// Feasibility check, Frank-Wolfe and the certified bound for one scenario.
/// Numerical failures are reported in the result, never as panics.
pub fn evaluate(scenario: &Scenario, opts: &PipelineOptions) -> PointResult {
    let start = Instant::now();
    let mut out = PointResult {
        bypass: scenario.bypass,
        weight: scenario.weight,
        feasible: false,
        margin: None,
        iterations: 0,
        stop: None,
        rate: None,
        status: PointStatus::NumericalTrouble,
        wall_time_ms: 0,
        message: None,
    };
    if let Err(e) = run(scenario, opts, &mut out) {
        out.status = PointStatus::NumericalTrouble;
        out.message = Some(e.to_string());
    }
    out.wall_time_ms = start.elapsed().as_millis();
    out
}

#[derive(Debug, Clone)]
pub struct ScanResult {
    pub points: Vec<PointResult>,
    /// Index of the smallest certified key rate among points with a rate.
    pub argmin: Option<usize>,
}

impl ScanResult {
    pub fn min_rate(&self) -> Option<f64> {
        self.argmin.and_then(|i| self.points[i].rate.map(|r| r.raw_key_rate))
    }

    pub fn argmin_eta_t(&self) -> Option<f64> {
        self.argmin.map(|i| self.points[i].bypass.eta_t)
    }

    pub fn feasibility_mask(&self) -> Vec<bool> {
        self.points.iter().map(|p| p.feasible).collect()
    }
}

/// Minimises the certified rate over `eta_T` in `grid` at fixed `eta_AE`.
/// Points are evaluated in parallel and returned in grid order.
pub fn scan_eta_t<F>(build: F, eta_ae: f64, grid: &[f64], opts: &PipelineOptions) -> Result<ScanResult>
where
    F: Fn(BypassParams) -> Result<Scenario> + Sync,
{
    let scenarios: Vec<Scenario> =
        grid.iter().map(|&t| build(BypassParams::new(eta_ae, t)?)).collect::<Result<_>>()?;
    let points: Vec<PointResult> = scenarios.par_iter().map(|s| evaluate(s, opts)).collect();
    let argmin = points
        .iter()
        .enumerate()
        .filter(|(_, p)| p.status.has_rate())
        .filter_map(|(i, p)| p.rate.map(|r| (i, r.raw_key_rate)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(i, _)| i);
    Ok(ScanResult { points, argmin })
}

/// Uniform grid of `n` points on `(0, 1]`.
pub fn default_grid(n: usize) -> Vec<f64> {
    (1..=n).map(|i| i as f64 / n as f64).collect()
}

/// Bisection for the boundary between an infeasible and a feasible `eta_T`.
pub fn refine_band_edge<F>(build: F, eta_ae: f64, infeasible_at: f64, feasible_at: f64, tol: f64) -> Result<f64>
where
    F: Fn(BypassParams) -> Result<Scenario>,
{
    let (mut bad, mut good) = (infeasible_at, feasible_at);
    while (good - bad).abs() > tol {
        let mid = 0.5 * (bad + good);
        let scenario = build(BypassParams::new(eta_ae, mid)?)?;
        let spec = assemble_constraints(&scenario, MarginalConstraint::AliceAndF)?;
        match sdp::check_feasibility(spec.template(), &sdp::Tolerances::default())? {
            Feasibility::Feasible { .. } => good = mid,
            Feasibility::Infeasible { .. } => bad = mid,
        }
    }
    Ok(good)
}
