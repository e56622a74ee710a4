//! Run configuration: a versioned TOML tree.
//!
//! ```toml
//! schema_version = 1
//! name = "sp-table-one"
//!
//! [protocol]
//! kind = "sp"            # "sp" | "sp-mismatch" | "wcp"
//! p_z = 0.5
//!
//! [sweep]
//! eta_ae = [0.2, 0.5, 0.8]
//! eta_t = { mode = "scan", points = 15 }     # or { mode = "scan", values = [...] },
//!                                            #    { mode = "fixed", value = 1.0 },
//!                                            #    { mode = "equal_to_eta_ae" }
//! weight = { mode = "fixed", value = 0.0 }   # or { mode = "from_double_clicks", q_dc = 1e-4, n = 2 }
//!
//! [solver]
//! epsilon = 1e-10
//!
//! [output]
//! csv = "results.csv"
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bounds::{self, FwOptions, MarginalConstraint, PipelineOptions};
use crate::protocol::{BypassParams, QberFormula, Scenario, SpNoiseModel, WcpModel};
use crate::sdp::Tolerances;

use super::{CliError, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub name: Option<String>,
    pub protocol: ProtocolConfig,
    pub sweep: SweepConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub output: OutputConfig,
    /// Worker threads; `BYPASS_QKD_THREADS` takes precedence, unset means all cores.
    #[serde(default)]
    pub threads: Option<usize>,
    /// Seed for the randomised self-test suites.
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_seed() -> u64 {
    2024
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ProtocolConfig {
    /// Matched single-photon BB84 with the channel/detector noise model.
    Sp {
        #[serde(default = "half")]
        p_z: f64,
        #[serde(default = "table::eta_ch")]
        eta_ch: f64,
        #[serde(default = "table::eta_d")]
        eta_d: f64,
        #[serde(default = "table::e_d")]
        e_d: f64,
        #[serde(default = "table::p_d")]
        p_d: f64,
        #[serde(default)]
        printed_qber: bool,
    },
    /// Single photons with depolarising noise `q` and detector efficiencies `eta_1`, `eta_2`.
    SpMismatch {
        #[serde(default = "half")]
        p_z: f64,
        q: f64,
        eta_1: f64,
        #[serde(default = "one")]
        eta_2: f64,
    },
    /// Phase-randomised weak coherent pulses.
    Wcp {
        #[serde(default = "half")]
        p_z: f64,
        mu: f64,
        q: f64,
    },
}

fn half() -> f64 {
    0.5
}

fn one() -> f64 {
    1.0
}

mod table {
    use crate::protocol::SpNoiseModel;

    pub fn eta_ch() -> f64 {
        SpNoiseModel::table_one().eta_ch
    }
    pub fn eta_d() -> f64 {
        SpNoiseModel::table_one().eta_d
    }
    pub fn e_d() -> f64 {
        SpNoiseModel::table_one().e_d
    }
    pub fn p_d() -> f64 {
        SpNoiseModel::table_one().p_d
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub eta_ae: Vec<f64>,
    pub eta_t: EtaTMode,
    #[serde(default)]
    pub weight: WeightMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum EtaTMode {
    /// Minimise over a grid: explicit `values`, or `points` uniform points on `(0, 1]`.
    Scan {
        #[serde(default)]
        points: Option<usize>,
        #[serde(default)]
        values: Option<Vec<f64>>,
    },
    Fixed {
        value: f64,
    },
    EqualToEtaAe,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum WeightMode {
    Fixed { value: f64 },
    /// `W = q_dc / lambda_min^{n+1} + W_F` (requires `eta_T = 1`).
    FromDoubleClicks { q_dc: f64, n: u32 },
}

impl Default for WeightMode {
    fn default() -> Self {
        WeightMode::Fixed { value: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarginalMode {
    #[default]
    AliceAndF,
    AliceOnly,
    None,
}

impl From<MarginalMode> for MarginalConstraint {
    fn from(m: MarginalMode) -> Self {
        match m {
            MarginalMode::AliceAndF => MarginalConstraint::AliceAndF,
            MarginalMode::AliceOnly => MarginalConstraint::AliceOnly,
            MarginalMode::None => MarginalConstraint::None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Depolarising parameter of `f_eps`; unset keeps the protocol default.
    pub epsilon: Option<f64>,
    /// Frank-Wolfe stopping threshold on `|tr[Delta G]|`.
    pub delta: f64,
    pub max_iter: usize,
    pub gap_tol: f64,
    pub feas_tol: f64,
    pub sdp_max_iter: usize,
    pub marginal: MarginalMode,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let fw = FwOptions::default();
        Self {
            epsilon: None,
            delta: fw.delta,
            max_iter: fw.max_iter,
            gap_tol: fw.sdp.gap,
            feas_tol: fw.sdp.feasibility,
            sdp_max_iter: fw.sdp.max_iter,
            marginal: MarginalMode::AliceAndF,
        }
    }
}

impl SolverConfig {
    pub fn pipeline(&self) -> PipelineOptions {
        let sdp = Tolerances { gap: self.gap_tol, feasibility: self.feas_tol, max_iter: self.sdp_max_iter };
        PipelineOptions {
            fw: FwOptions { delta: self.delta, max_iter: self.max_iter, sdp, ..FwOptions::default() },
            marginal: self.marginal.into(),
            epsilon: self.epsilon,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Result table; stdout when unset.
    pub csv: Option<PathBuf>,
    /// Record wall-clock times (makes the CSV run-dependent).
    pub timing: bool,
}

fn field(path: &str, message: impl Into<String>) -> CliError {
    CliError::Config { path: path.to_string(), message: message.into() }
}

fn unit(path: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(field(path, format!("{v} is not a probability")))
    }
}

fn open_unit(path: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(field(path, format!("{v} is not in (0, 1)")))
    }
}

fn transmissivity(path: &str, v: f64) -> Result<()> {
    if v > 0.0 && v <= 1.0 {
        Ok(())
    } else {
        Err(field(path, format!("{v} is not in (0, 1]")))
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: RunConfig = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| field("<file>", format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("configuration is always representable")
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(field(
                "schema_version",
                format!("unsupported version {} (expected {SCHEMA_VERSION})", self.schema_version),
            ));
        }
        match self.protocol {
            ProtocolConfig::Sp { p_z, eta_ch, eta_d, e_d, p_d, .. } => {
                open_unit("protocol.p_z", p_z)?;
                unit("protocol.eta_ch", eta_ch)?;
                unit("protocol.eta_d", eta_d)?;
                unit("protocol.e_d", e_d)?;
                unit("protocol.p_d", p_d)?;
            }
            ProtocolConfig::SpMismatch { p_z, q, eta_1, eta_2 } => {
                open_unit("protocol.p_z", p_z)?;
                unit("protocol.q", q)?;
                transmissivity("protocol.eta_1", eta_1)?;
                transmissivity("protocol.eta_2", eta_2)?;
            }
            ProtocolConfig::Wcp { p_z, mu, q } => {
                open_unit("protocol.p_z", p_z)?;
                unit("protocol.q", q)?;
                if !(mu > 0.0 && mu.is_finite()) {
                    return Err(field("protocol.mu", format!("{mu} is not a positive mean photon number")));
                }
            }
        }
        if self.sweep.eta_ae.is_empty() {
            return Err(field("sweep.eta_ae", "grid is empty"));
        }
        for (i, &v) in self.sweep.eta_ae.iter().enumerate() {
            transmissivity(&format!("sweep.eta_ae[{i}]"), v)?;
        }
        match &self.sweep.eta_t {
            EtaTMode::Scan { points, values } => match (points, values) {
                (Some(_), Some(_)) => return Err(field("sweep.eta_t", "give either `points` or `values`, not both")),
                (None, None) => return Err(field("sweep.eta_t", "scan needs `points` or `values`")),
                (Some(0), _) => return Err(field("sweep.eta_t.points", "grid is empty")),
                (_, Some(v)) if v.is_empty() => return Err(field("sweep.eta_t.values", "grid is empty")),
                (_, Some(v)) => {
                    for (i, &t) in v.iter().enumerate() {
                        transmissivity(&format!("sweep.eta_t.values[{i}]"), t)?;
                    }
                }
                _ => {}
            },
            EtaTMode::Fixed { value } => transmissivity("sweep.eta_t.value", *value)?,
            EtaTMode::EqualToEtaAe => {}
        }
        match self.sweep.weight {
            WeightMode::Fixed { value } => unit("sweep.weight.value", value)?,
            WeightMode::FromDoubleClicks { q_dc, n } => {
                unit("sweep.weight.q_dc", q_dc)?;
                if n <= 1 {
                    return Err(field("sweep.weight.n", "the weight bound needs n > 1"));
                }
                if self.sweep.eta_t != (EtaTMode::Fixed { value: 1.0 }) {
                    return Err(field("sweep.eta_t", "weights from double clicks require eta_t fixed at 1"));
                }
            }
        }
        let s = &self.solver;
        if let Some(e) = s.epsilon {
            open_unit("solver.epsilon", e)?;
        }
        for (path, v) in [("solver.delta", s.delta), ("solver.gap_tol", s.gap_tol), ("solver.feas_tol", s.feas_tol)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(field(path, format!("{v} is not a positive tolerance")));
            }
        }
        if s.max_iter == 0 {
            return Err(field("solver.max_iter", "must be at least 1"));
        }
        if s.sdp_max_iter == 0 {
            return Err(field("solver.sdp_max_iter", "must be at least 1"));
        }
        if self.threads == Some(0) {
            return Err(field("threads", "must be at least 1"));
        }
        Ok(())
    }

    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.protocol.kind_name().to_string())
    }

    /// `eta_T` values to evaluate at a given `eta_AE`.
    pub fn eta_t_values(&self, eta_ae: f64) -> Vec<f64> {
        match &self.sweep.eta_t {
            EtaTMode::Scan { values: Some(v), .. } => v.clone(),
            EtaTMode::Scan { points, .. } => bounds::default_grid(points.unwrap_or(1)),
            EtaTMode::Fixed { value } => vec![*value],
            EtaTMode::EqualToEtaAe => vec![eta_ae],
        }
    }

    pub fn is_scan(&self) -> bool {
        matches!(self.sweep.eta_t, EtaTMode::Scan { .. })
    }

    /// Weight at a given `eta_AE`.
    pub fn weight(&self, eta_ae: f64) -> Result<f64> {
        match self.sweep.weight {
            WeightMode::Fixed { value } => Ok(value),
            WeightMode::FromDoubleClicks { q_dc, n } => {
                let w_f = match self.protocol {
                    ProtocolConfig::Wcp { mu, .. } => bounds::wcp_f_tail(mu, eta_ae, n),
                    _ => 0.0,
                };
                Ok(bounds::weight_bound(q_dc, n, self.protocol.p_z(), w_f)?.w)
            }
        }
    }

    pub fn scenario(&self, bypass: BypassParams, weight: f64) -> Result<Scenario> {
        Ok(self.protocol.scenario(bypass, weight)?)
    }
}

impl ProtocolConfig {
    pub fn kind_name(&self) -> &'static str {
        match self {
            ProtocolConfig::Sp { .. } => "sp",
            ProtocolConfig::SpMismatch { .. } => "sp-mismatch",
            ProtocolConfig::Wcp { .. } => "wcp",
        }
    }

    pub fn p_z(&self) -> f64 {
        match *self {
            ProtocolConfig::Sp { p_z, .. } | ProtocolConfig::SpMismatch { p_z, .. } | ProtocolConfig::Wcp { p_z, .. } => {
                p_z
            }
        }
    }

    pub fn scenario(&self, bypass: BypassParams, weight: f64) -> crate::protocol::Result<Scenario> {
        match *self {
            ProtocolConfig::Sp { p_z, eta_ch, eta_d, e_d, p_d, printed_qber } => {
                let model = SpNoiseModel { eta_ch, eta_d, e_d, p_d, p_z, ..SpNoiseModel::table_one() };
                let formula = if printed_qber { QberFormula::Printed } else { QberFormula::Corrected };
                let (q, e) = crate::protocol::sp_statistics(&model, formula)?;
                Ok(Scenario::sp_from_statistics(p_z, q, e, bypass)?.with_weight(weight))
            }
            ProtocolConfig::SpMismatch { p_z, q, eta_1, eta_2 } => {
                let model = SpNoiseModel::mismatched(q, eta_1, eta_2, p_z);
                Ok(Scenario::sp_mismatch(&model, bypass)?.with_weight(weight))
            }
            ProtocolConfig::Wcp { p_z, mu, q } => Scenario::wcp(&WcpModel::new(mu, q, p_z), bypass, weight),
        }
    }
}
