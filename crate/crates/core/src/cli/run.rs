//! Executing a run configuration.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{self, PointResult, PointStatus};
use crate::protocol::BypassParams;

use super::{ExitStatus, Result, RunConfig};

/// One CSV row; the column order is part of the output format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub scenario_id: String,
    pub protocol: String,
    pub eta_ae: f64,
    pub eta_t: f64,
    #[serde(rename = "W")]
    pub weight: f64,
    pub fw_value: f64,
    pub lower_bound: f64,
    pub ec_term: f64,
    /// `lower_bound - ec_term` (not clipped at zero).
    pub key_rate: f64,
    pub feasible: bool,
    pub iterations: usize,
    pub duality_gap: f64,
    pub wall_time_ms: u128,
    pub status: String,
}

impl ResultRow {
    fn from_point(id: String, protocol: &str, p: &PointResult, timing: bool) -> Self {
        let nan = f64::NAN;
        let (fw_value, lower_bound, ec_term, key_rate, duality_gap) = match &p.rate {
            Some(r) => (r.fw_value, r.lower_bound, r.ec_term, r.raw_key_rate, r.duality_gap),
            None => (nan, nan, nan, nan, nan),
        };
        Self {
            scenario_id: id,
            protocol: protocol.to_string(),
            eta_ae: p.bypass.eta_ae,
            eta_t: p.bypass.eta_t,
            weight: p.weight,
            fw_value,
            lower_bound,
            ec_term,
            key_rate,
            feasible: p.feasible,
            iterations: p.iterations,
            duality_gap,
            wall_time_ms: if timing { p.wall_time_ms } else { 0 },
            status: p.status.name().to_string(),
        }
    }
}

/// Minimum over the `eta_T` grid at one `eta_AE`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanSummary {
    pub eta_ae: f64,
    pub min_key_rate: Option<f64>,
    pub argmin_eta_t: Option<f64>,
    pub feasible: Vec<bool>,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub rows: Vec<ResultRow>,
    pub points: Vec<PointResult>,
    pub scans: Vec<ScanSummary>,
    pub exit: ExitStatus,
}

/// Exit status for a set of evaluated points.
pub fn exit_status(points: &[PointResult]) -> ExitStatus {
    let broken = |s: PointStatus| matches!(s, PointStatus::NumericalTrouble | PointStatus::DualRepairFailed);
    if points.iter().any(|p| broken(p.status)) {
        ExitStatus::NumericalFailure
    } else if !points.iter().any(|p| p.feasible) {
        ExitStatus::InfeasibleEverywhere
    } else {
        ExitStatus::Ok
    }
}

/// Evaluates every `(eta_AE, eta_T)` point of the configuration in parallel;
/// results are returned in grid order.
pub fn run(config: &RunConfig) -> Result<RunReport> {
    config.validate()?;
    let opts = config.solver.pipeline();
    let mut jobs = Vec::new();
    for &eta_ae in &config.sweep.eta_ae {
        let weight = config.weight(eta_ae)?;
        for eta_t in config.eta_t_values(eta_ae) {
            let bypass = BypassParams::new(eta_ae, eta_t)?;
            jobs.push(config.scenario(bypass, weight)?);
        }
    }
    let points: Vec<PointResult> = jobs.par_iter().map(|s| bounds::evaluate(s, &opts)).collect();

    let label = config.label();
    let protocol = config.protocol.kind_name();
    let rows = points
        .iter()
        .enumerate()
        .map(|(i, p)| ResultRow::from_point(format!("{label}:{i:04}"), protocol, p, config.output.timing))
        .collect();

    let mut scans = Vec::new();
    if config.is_scan() {
        let mut offset = 0;
        for &eta_ae in &config.sweep.eta_ae {
            let n = config.eta_t_values(eta_ae).len();
            let block = &points[offset..offset + n];
            offset += n;
            let best = block
                .iter()
                .filter(|p| p.status.has_rate())
                .filter_map(|p| p.rate.map(|r| (p.bypass.eta_t, r.raw_key_rate)))
                .min_by(|a, b| a.1.total_cmp(&b.1));
            scans.push(ScanSummary {
                eta_ae,
                min_key_rate: best.map(|b| b.1),
                argmin_eta_t: best.map(|b| b.0),
                feasible: block.iter().map(|p| p.feasible).collect(),
            });
        }
    }
    let exit = exit_status(&points);
    Ok(RunReport { rows, points, scans, exit })
}

pub fn write_csv<W: Write>(rows: &[ResultRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
