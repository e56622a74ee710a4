//! Concrete BB84 instances in the bypass model: sources, Bob's threshold-detector
//! POVMs, observables, simulated statistics, error-correction cost and the closed-form
//! baseline rates used for comparison.
//!
//! Alice's register `A = C^2 (x) C^2` is indexed by `2x + a` (basis choice major), and
//! operators on `A (x) span(basis)` are stored A-major, i.e. as `kron(A, BF)`.

use thiserror::Error;

use crate::fock::{
    self, BeamSplitterConvention, FockError, ModeOccupation, PartialTraceKernel, Polarization,
    SubspaceBasis,
};
use crate::linalg::{self, re, CMatrix, CVector};

pub const A_DIM: usize = 4;
/// Bob's outcomes: four clicks `(b, y)` plus the no-click event.
pub const OUTCOMES: usize = 5;
pub const NO_CLICK: usize = 4;
pub const E0: f64 = 0.5;

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error(transparent)]
    Fock(#[from] FockError),
    #[error("parameter `{name}` = {value} is out of range")]
    Parameter { name: &'static str, value: f64 },
    #[error("POVM completeness violated: smallest no-click eigenvalue {0:e}")]
    Completeness(f64),
    #[error("click probability is zero")]
    NoClicks,
    #[error("simulated statistics failed their cross-check: expected {expected}, found {found}")]
    CrossCheck { expected: f64, found: f64 },
    #[error("attack is not an isometry (defect {0:e})")]
    NotIsometric(f64),
}

pub type Result<T> = std::result::Result<T, ProtocolError>;

fn check_unit(name: &'static str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(ProtocolError::Parameter { name, value })
    }
}

pub fn alice_index(a: usize, x: usize) -> usize {
    2 * x + a
}

/// `M_{a,x} = |a,x><a,x|`.
pub fn alice_projector(a: usize, x: usize) -> CMatrix {
    let mut m = linalg::zeros(A_DIM);
    m[(alice_index(a, x), alice_index(a, x))] = re(1.0);
    m
}

pub fn outcome_index(b: usize, y: usize) -> usize {
    2 * y + b
}

/// Probability of choosing basis `x` (`p_0 = p_z`, `p_1 = 1 - p_z`).
pub fn basis_probability(p_z: f64, x: usize) -> f64 {
    if x == 0 {
        p_z
    } else {
        1.0 - p_z
    }
}

/// Sifting efficiency `1 - 2 p_z (1 - p_z)`.
pub fn sifting(p_z: f64) -> f64 {
    1.0 - 2.0 * p_z * (1.0 - p_z)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BypassParams {
    pub eta_ae: f64,
    pub eta_t: f64,
}

impl BypassParams {
    pub fn new(eta_ae: f64, eta_t: f64) -> Result<Self> {
        for (name, v) in [("eta_AE", eta_ae), ("eta_T", eta_t)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(ProtocolError::Parameter { name, value: v });
            }
        }
        Ok(Self { eta_ae, eta_t })
    }

    /// No bypass: everything reaches Eve and Bob collects everything.
    pub fn none() -> Self {
        Self { eta_ae: 1.0, eta_t: 1.0 }
    }
}

/// Which QBER expression to evaluate for the single-photon noise model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum QberFormula {
    /// `(e0 Q - (e0 - e_d) eta_ch eta_d) / Q`.
    #[default]
    Corrected,
    /// The printed variant with an extra `p_d` factor on the misalignment term.
    Printed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpNoiseModel {
    pub eta_ch: f64,
    pub eta_d: f64,
    pub e_d: f64,
    pub p_d: f64,
    pub p_z: f64,
    /// Depolarising strength (mismatched-detector model).
    pub q: f64,
    pub eta_1: f64,
    pub eta_2: f64,
}

impl SpNoiseModel {
    /// Matched-detector reference parameters.
    pub fn table_one() -> Self {
        Self { eta_ch: 1e-3, eta_d: 0.9, e_d: 0.01, p_d: 1e-7, p_z: 0.5, q: 0.0, eta_1: 1.0, eta_2: 1.0 }
    }

    /// Depolarised single photons seen by detectors of efficiency `eta_1`, `eta_2`.
    pub fn mismatched(q: f64, eta_1: f64, eta_2: f64, p_z: f64) -> Self {
        Self { q, eta_1, eta_2, p_z, ..Self::table_one() }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("eta_ch", self.eta_ch),
            ("eta_d", self.eta_d),
            ("e_d", self.e_d),
            ("p_d", self.p_d),
            ("q", self.q),
            ("eta_1", self.eta_1),
            ("eta_2", self.eta_2),
        ] {
            check_unit(name, v)?;
        }
        if !(self.p_z > 0.0 && self.p_z < 1.0) {
            return Err(ProtocolError::Parameter { name: "p_z", value: self.p_z });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WcpModel {
    pub mu: f64,
    pub q: f64,
    pub p_z: f64,
    pub sim_cutoff: u32,
}

impl WcpModel {
    pub fn new(mu: f64, q: f64, p_z: f64) -> Self {
        Self { mu, q, p_z, sim_cutoff: 20 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(ProtocolError::Parameter { name: "mu", value: self.mu });
        }
        check_unit("q", self.q)?;
        if !(self.p_z > 0.0 && self.p_z < 1.0) {
            return Err(ProtocolError::Parameter { name: "p_z", value: self.p_z });
        }
        if self.sim_cutoff < 10 {
            return Err(ProtocolError::Parameter { name: "sim_cutoff", value: self.sim_cutoff.into() });
        }
        Ok(())
    }
}

/// `P_mu(n)`.
pub fn poisson(mu: f64, n: u32) -> f64 {
    let log = -mu + f64::from(n) * mu.ln() - (1..=n).map(|k| f64::from(k).ln()).sum::<f64>();
    log.exp()
}

/// Bob's measurement `{N_{b,y}, N_{perp,perp}}` on a truncated Fock space.
#[derive(Debug, Clone, PartialEq)]
pub struct BobPovm {
    /// Click elements indexed by [`outcome_index`].
    pub clicks: [CMatrix; 4],
    pub no_click: CMatrix,
}

impl BobPovm {
    pub fn element(&self, b: usize, y: usize) -> &CMatrix {
        &self.clicks[outcome_index(b, y)]
    }

    /// Element by outcome index, `NO_CLICK` included.
    pub fn outcome(&self, o: usize) -> &CMatrix {
        if o == NO_CLICK {
            &self.no_click
        } else {
            &self.clicks[o]
        }
    }

    pub fn dim(&self) -> usize {
        self.no_click.nrows()
    }

    /// `sum_b N_{b,y}`.
    pub fn basis_filter(&self, y: usize) -> CMatrix {
        self.element(0, y) + self.element(1, y)
    }

    /// `U^dagger N U` for every element.
    pub fn conjugated(&self, u: &CMatrix) -> Self {
        let rot = |m: &CMatrix| linalg::hermitize(&(u.adjoint() * m * u));
        Self {
            clicks: [rot(&self.clicks[0]), rot(&self.clicks[1]), rot(&self.clicks[2]), rot(&self.clicks[3])],
            no_click: rot(&self.no_click),
        }
    }

    fn complete(clicks: [CMatrix; 4]) -> Result<Self> {
        let n = clicks[0].nrows();
        let mut no_click = linalg::identity(n);
        for c in &clicks {
            no_click -= c;
        }
        let no_click = linalg::hermitize(&no_click);
        let lo = linalg::min_eigenvalue(&no_click);
        if lo < -1e-12 {
            return Err(ProtocolError::Completeness(lo));
        }
        Ok(Self { clicks, no_click })
    }
}

/// Active-basis threshold detection: single clicks map to their bit, double clicks
/// are split evenly between both bits. Acts as the identity on F.
pub fn threshold_povm(basis: &SubspaceBasis, p_z: f64) -> Result<BobPovm> {
    let n = basis.len();
    let rot = fock::diagonal_basis_rotation(basis)?;
    let mut clicks = [linalg::zeros(n), linalg::zeros(n), linalg::zeros(n), linalg::zeros(n)];
    for (s, occ) in basis.states().iter().enumerate() {
        if occ.b_photons() == 0 {
            continue;
        }
        let single: &[(usize, f64)] = if occ.bv == 0 {
            &[(0, 1.0)]
        } else if occ.bh == 0 {
            &[(1, 1.0)]
        } else {
            &[(0, 0.5), (1, 0.5)]
        };
        let z = linalg::projector(&unit(n, s));
        let x_vec: CVector = rot.column(s).into_owned();
        let xp = linalg::projector(&x_vec);
        for &(b, w) in single {
            clicks[outcome_index(b, 0)] += &z * re(w * p_z);
            clicks[outcome_index(b, 1)] += &xp * re(w * (1.0 - p_z));
        }
    }
    BobPovm::complete(clicks)
}

fn unit(n: usize, i: usize) -> CVector {
    let mut v = CVector::zeros(n);
    v[i] = re(1.0);
    v
}

/// Single-photon POVM with detector efficiencies `eta_1` (bit 0) and `eta_2` (bit 1).
pub fn sp_povm(p_z: f64, eta_1: f64, eta_2: f64) -> Result<BobPovm> {
    check_unit("eta_1", eta_1)?;
    check_unit("eta_2", eta_2)?;
    let base = threshold_povm(&SubspaceBasis::enumerate(1), p_z)?;
    let clicks = [
        &base.clicks[0] * re(eta_1),
        &base.clicks[1] * re(eta_2),
        &base.clicks[2] * re(eta_1),
        &base.clicks[3] * re(eta_2),
    ];
    BobPovm::complete(clicks)
}

/// Total double-click operator `p_z P_{H/V} + (1 - p_z) P_{D/A}` (identity on F).
pub fn double_click_operator(basis: &SubspaceBasis, p_z: f64) -> Result<CMatrix> {
    let n = basis.len();
    let rot = fock::diagonal_basis_rotation(basis)?;
    let mut out = linalg::zeros(n);
    for (s, occ) in basis.states().iter().enumerate() {
        if occ.bh > 0 && occ.bv > 0 {
            out[(s, s)] += re(p_z);
            out += linalg::projector(&rot.column(s).into_owned()) * re(1.0 - p_z);
        }
    }
    Ok(linalg::hermitize(&out))
}

/// The honest source `sum_{a,x} sqrt(p_x/2) |a,x> (x) |1_{q(a,x)}>` on `A (x) Omega^sp`.
pub fn sp_source(p_z: f64) -> Result<CVector> {
    if !(p_z > 0.0 && p_z < 1.0) {
        return Err(ProtocolError::Parameter { name: "p_z", value: p_z });
    }
    let basis = SubspaceBasis::enumerate(1);
    entangled_source(&basis, p_z, 1, 1.0)
}

/// `sum_{a,x} sqrt(p_x/2) |a,x> (x) |phi_{n,a,x}>` at transmissivity `eta_ae`.
fn entangled_source(basis: &SubspaceBasis, p_z: f64, n: u32, eta_ae: f64) -> Result<CVector> {
    let d = basis.len();
    let mut psi = CVector::zeros(A_DIM * d);
    for x in 0..2 {
        for a in 0..2 {
            let amp = (basis_probability(p_z, x) / 2.0).sqrt();
            let phi = fock::photon_block_state(n, Polarization::from_key(a, x), eta_ae, basis)?;
            let i = alice_index(a, x);
            for s in 0..d {
                psi[i * d + s] += phi[s] * re(amp);
            }
        }
    }
    Ok(psi)
}

/// Lifts an operator on BF to `A (x) BF`.
pub fn lift_bf(op: &CMatrix) -> CMatrix {
    linalg::kron(&linalg::identity(A_DIM), op)
}

/// `(1_A (x) U) rho (1_A (x) U)^dagger`.
pub fn apply_bf_unitary(rho: &CMatrix, u: &CMatrix) -> CMatrix {
    let big = lift_bf(u);
    linalg::hermitize(&(&big * rho * big.adjoint()))
}

/// Coarse-grained single-photon observables `E_Z`, `E_X`, `E_empty` on `A (x) BF`.
#[derive(Debug, Clone)]
pub struct SpObservables {
    pub e_z: CMatrix,
    pub e_x: CMatrix,
    pub e_empty: CMatrix,
}

pub fn sp_observables(povm: &BobPovm) -> SpObservables {
    let err = |y: usize| {
        linalg::kron(&alice_projector(0, y), povm.element(1, y))
            + linalg::kron(&alice_projector(1, y), povm.element(0, y))
    };
    SpObservables { e_z: err(0), e_x: err(1), e_empty: lift_bf(&povm.no_click) }
}

/// Click probability and QBER of the matched single-photon channel model.
pub fn sp_statistics(model: &SpNoiseModel, formula: QberFormula) -> Result<(f64, f64)> {
    model.validate()?;
    let t = model.eta_ch * model.eta_d;
    let q = 1.0 - (1.0 - t) * (1.0 - model.p_d).powi(2);
    if q <= 0.0 {
        return Err(ProtocolError::NoClicks);
    }
    let mis = match formula {
        QberFormula::Corrected => (E0 - model.e_d) * t,
        QberFormula::Printed => (E0 - model.e_d) * t * model.p_d,
    };
    Ok((q, (E0 * q - mis) / q))
}

/// Statistics of depolarised single photons under (possibly mismatched) detectors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MismatchStatistics {
    /// Joint probabilities `tr[E_Z rho]`, `tr[E_X rho]`.
    pub e_z: f64,
    pub e_x: f64,
    /// Click probability `1 - tr[E_empty rho]`.
    pub q: f64,
    /// Probability of a sifted click in the Z basis.
    pub z_sifted: f64,
}

impl MismatchStatistics {
    /// Error rate among sifted Z-basis clicks.
    pub fn qber_z(&self) -> f64 {
        if self.z_sifted > 0.0 {
            self.e_z / self.z_sifted
        } else {
            0.0
        }
    }
}

/// `(1 - q) sigma + q tr_BF[sigma] (x) (|1_BH><1_BH| + |1_BV><1_BV|)/2` on `A (x) Omega^sp`.
fn depolarize_sp(rho: &CMatrix, q: f64) -> Result<CMatrix> {
    let basis = SubspaceBasis::enumerate(1);
    let d = basis.len();
    let mut rho_a = linalg::zeros(A_DIM);
    for i in 0..A_DIM {
        for j in 0..A_DIM {
            rho_a[(i, j)] = (0..d).map(|s| rho[(i * d + s, j * d + s)]).sum();
        }
    }
    let mut tau = linalg::zeros(d);
    for occ in [ModeOccupation::new(1, 0, 0, 0), ModeOccupation::new(0, 1, 0, 0)] {
        let i = basis.index_of(&occ).ok_or(FockError::MissingState(occ.as_array()))?;
        tau[(i, i)] = re(0.5);
    }
    Ok(rho * re(1.0 - q) + linalg::kron(&rho_a, &tau) * re(q))
}

pub fn sp_mismatch_statistics(model: &SpNoiseModel) -> Result<MismatchStatistics> {
    model.validate()?;
    let psi = sp_source(model.p_z)?;
    let rho = depolarize_sp(&linalg::projector(&psi), model.q)?;
    let povm = sp_povm(model.p_z, model.eta_1, model.eta_2)?;
    let obs = sp_observables(&povm);
    let mut z_sifted = 0.0;
    for a in 0..2 {
        z_sifted += linalg::trace_product(&linalg::kron(&alice_projector(a, 0), &povm.basis_filter(0)), &rho);
    }
    Ok(MismatchStatistics {
        e_z: linalg::trace_product(&obs.e_z, &rho),
        e_x: linalg::trace_product(&obs.e_x, &rho),
        q: 1.0 - linalg::trace_product(&obs.e_empty, &rho),
        z_sifted,
    })
}

/// Truncated phase-randomised WCP source after the first beam splitter.
#[derive(Debug, Clone)]
pub struct WcpSource {
    /// `rho'` on `A (x) Omega^wcp`, subnormalised by the truncation.
    pub rho: CMatrix,
    /// `1 - sum_{n <= 2} P_mu(n)`.
    pub tail_weight: f64,
    /// `tr_B` of the truncated state on `A (x) F'`.
    pub marginal: CMatrix,
}

pub fn wcp_source(model: &WcpModel, eta_ae: f64, basis: &SubspaceBasis) -> Result<WcpSource> {
    model.validate()?;
    check_unit("eta_AE", eta_ae)?;
    let d = basis.len();
    let mut rho = linalg::zeros(A_DIM * d);
    let mut kept = 0.0;
    for n in 0..=basis.max_total_photons() {
        let w = poisson(model.mu, n);
        kept += w;
        let phi = entangled_source(basis, model.p_z, n, eta_ae)?;
        rho += linalg::projector(&phi) * re(w);
    }
    let rho = linalg::hermitize(&rho);
    let marginal = PartialTraceKernel::new(basis).apply(&rho, A_DIM)?;
    Ok(WcpSource { rho, tail_weight: 1.0 - kept, marginal })
}

/// Simulated WCP statistics without a bypass channel.
#[derive(Debug, Clone, PartialEq)]
pub struct WcpStatistics {
    /// `p(a, x, o)` indexed by `[alice_index(a, x)][o]`.
    pub table: [[f64; OUTCOMES]; A_DIM],
    pub q_mu: f64,
    pub e_z: f64,
    pub e_x: f64,
    /// `tr[rho_sim P_DC]`.
    pub double_click: f64,
}

impl WcpStatistics {
    pub fn p(&self, a: usize, b: usize, x: usize, y: usize) -> f64 {
        self.table[alice_index(a, x)][outcome_index(b, y)]
    }
}

pub fn wcp_statistics(model: &WcpModel) -> Result<WcpStatistics> {
    model.validate()?;
    let mut table = [[0.0; OUTCOMES]; A_DIM];
    let mut double_click = 0.0;
    // Each photon layer of B separately; the depolariser adds a single photon.
    let mut add_layer = |n: u32, weight: f64, states: &dyn Fn(usize, usize, &SubspaceBasis) -> Result<CMatrix>| -> Result<()> {
        let layer = SubspaceBasis::from_occupations((0..=n).map(|k| ModeOccupation::new(k, n - k, 0, 0)).collect());
        let povm = threshold_povm(&layer, model.p_z)?;
        let dc = double_click_operator(&layer, model.p_z)?;
        for x in 0..2 {
            for a in 0..2 {
                let rho = states(a, x, &layer)?;
                let w = weight * basis_probability(model.p_z, x) / 2.0;
                for (o, slot) in table[alice_index(a, x)].iter_mut().enumerate() {
                    *slot += w * linalg::trace_product(povm.outcome(o), &rho);
                }
                double_click += w * linalg::trace_product(&dc, &rho);
            }
        }
        Ok(())
    };
    for n in 0..=model.sim_cutoff {
        let w = (1.0 - model.q) * poisson(model.mu, n);
        add_layer(n, w, &|a, x, layer| {
            let v = fock::photon_block_state(n, Polarization::from_key(a, x), 1.0, layer)?;
            Ok(linalg::projector(&v))
        })?;
    }
    add_layer(1, model.q, &|_, _, _| Ok(linalg::from_real_diagonal(&[0.5, 0.5])))?;

    let q_mu = 1.0 - table.iter().map(|row| row[NO_CLICK]).sum::<f64>();
    let expected = 1.0 - (1.0 - model.q) * (-model.mu).exp();
    if (q_mu - expected).abs() > 1e-9 {
        return Err(ProtocolError::CrossCheck { expected, found: q_mu });
    }
    let err = |x: usize| {
        let joint = table[alice_index(0, x)][outcome_index(1, x)] + table[alice_index(1, x)][outcome_index(0, x)];
        joint / (basis_probability(model.p_z, x).powi(2) * q_mu)
    };
    Ok(WcpStatistics { e_z: err(0), e_x: err(1), table, q_mu, double_click })
}

/// Error-correction leakage `(1 - 2 p_z (1 - p_z)) Q H_bin(E)` in bits.
pub fn ec_term(p_z: f64, q: f64, e: f64) -> f64 {
    sifting(p_z) * q * linalg::binary_entropy(e)
}

pub mod baseline {
    //! Closed-form key-rate bounds.
    use super::sifting;
    use crate::linalg::binary_entropy;

    /// Single-photon BB84 without a bypass channel.
    pub fn sp_normal(p_z: f64, q: f64, e: f64) -> f64 {
        sifting(p_z) * q * (1.0 - 2.0 * binary_entropy(e))
    }

    fn bypass_form(p_z: f64, q: f64, e: f64, s0: f64, s11: f64) -> f64 {
        let eps11 = if s11 > 0.0 { (e * q / s11).min(0.5) } else { 0.5 };
        sifting(p_z) * (-q * binary_entropy(e) + s11 * (1.0 - binary_entropy(eps11)) + s0)
    }

    /// Analytic single-photon bypass bound.
    pub fn ext_bp_sp(p_z: f64, q: f64, e: f64, eta_ae: f64) -> f64 {
        let s0 = (q - eta_ae).max(0.0);
        let s11 = (q - (1.0 - eta_ae)).max(0.0);
        bypass_form(p_z, q, e, s0, s11)
    }

    /// Analytic WCP bypass bound.
    pub fn ext_bp_wcp(p_z: f64, q_mu: f64, e_mu: f64, mu: f64, eta_ae: f64) -> f64 {
        let s0 = (q_mu - (1.0 - (-mu * eta_ae).exp())).max(0.0);
        let s11 = (q_mu - (1.0 - mu * eta_ae * (-mu).exp())).max(0.0);
        bypass_form(p_z, q_mu, e_mu, s0, s11)
    }

    /// Noiseless rate with detector efficiency mismatch (tilted entangled state).
    pub fn tilted_rate(eta_1: f64, eta_2: f64, p_z: f64) -> f64 {
        let s = eta_1 + eta_2;
        0.5 * s * sifting(p_z) * binary_entropy(eta_1.max(eta_2) / s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProtocolKind {
    Sp,
    SpMismatch,
    Wcp,
}

impl ProtocolKind {
    pub fn name(self) -> &'static str {
        match self {
            ProtocolKind::Sp => "sp",
            ProtocolKind::SpMismatch => "sp-mismatch",
            ProtocolKind::Wcp => "wcp",
        }
    }
}

/// A linear constraint `tr[op rho] = target` (relaxed to an interval when `W > 0`).
#[derive(Debug, Clone)]
pub struct Observable {
    pub label: String,
    pub operator: CMatrix,
    pub target: f64,
}

/// A fully specified optimisation instance.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub kind: ProtocolKind,
    pub p_z: f64,
    pub bypass: BypassParams,
    pub basis: SubspaceBasis,
    /// Un-rotated measurement.
    pub bob: BobPovm,
    /// Second beam splitter at `eta_T`.
    pub u2: CMatrix,
    pub observables: Vec<Observable>,
    /// Reference `tr_B` on `A (x) F'` for the source-replacement constraint.
    pub marginal: CMatrix,
    pub weight: f64,
    pub epsilon: f64,
    pub ec_term: f64,
}

pub const DEFAULT_EPSILON: f64 = 1e-8;

impl Scenario {
    /// Matched single-photon BB84 with fixed `(Q, E)` statistics.
    pub fn sp_matched(model: &SpNoiseModel, bypass: BypassParams) -> Result<Self> {
        let (q, e) = sp_statistics(model, QberFormula::Corrected)?;
        Self::sp_from_statistics(model.p_z, q, e, bypass)
    }

    /// Matched single-photon BB84 with explicit click probability and QBER.
    pub fn sp_from_statistics(p_z: f64, q: f64, e: f64, bypass: BypassParams) -> Result<Self> {
        check_unit("Q", q)?;
        check_unit("E", e)?;
        let bob = sp_povm(p_z, 1.0, 1.0)?;
        let mut s = Self::sp_common(ProtocolKind::Sp, p_z, bob, bypass)?;
        let targets = [p_z * p_z * q * e, (1.0 - p_z).powi(2) * q * e, 1.0 - q];
        for (ob, t) in s.observables.iter_mut().zip(targets) {
            ob.target = t;
        }
        s.ec_term = ec_term(p_z, q, e);
        Ok(s)
    }

    pub fn sp_mismatch(model: &SpNoiseModel, bypass: BypassParams) -> Result<Self> {
        let stats = sp_mismatch_statistics(model)?;
        let bob = sp_povm(model.p_z, model.eta_1, model.eta_2)?;
        let mut s = Self::sp_common(ProtocolKind::SpMismatch, model.p_z, bob, bypass)?;
        for (ob, t) in s.observables.iter_mut().zip([stats.e_z, stats.e_x, 1.0 - stats.q]) {
            ob.target = t;
        }
        s.ec_term = ec_term(model.p_z, stats.q, stats.qber_z());
        Ok(s)
    }

    fn sp_common(kind: ProtocolKind, p_z: f64, bob: BobPovm, bypass: BypassParams) -> Result<Self> {
        let basis = SubspaceBasis::enumerate(1);
        let u1 = fock::beam_splitter(&basis, bypass.eta_ae, BeamSplitterConvention::U1)?;
        let u2 = fock::beam_splitter(&basis, bypass.eta_t, BeamSplitterConvention::U2)?;
        let psi = sp_source(p_z)?;
        let source = apply_bf_unitary(&linalg::projector(&psi), &u1);
        let marginal = PartialTraceKernel::new(&basis).apply(&source, A_DIM)?;
        let obs = sp_observables(&bob.conjugated(&u2));
        let observables = vec![
            Observable { label: "E_Z".into(), operator: obs.e_z, target: 0.0 },
            Observable { label: "E_X".into(), operator: obs.e_x, target: 0.0 },
            Observable { label: "E_empty".into(), operator: obs.e_empty, target: 0.0 },
        ];
        Ok(Self {
            kind,
            p_z,
            bypass,
            basis,
            bob,
            u2,
            observables,
            marginal,
            weight: 0.0,
            epsilon: DEFAULT_EPSILON,
            ec_term: 0.0,
        })
    }

    /// WCP BB84 on the two-photon subspace with the full statistics table.
    pub fn wcp(model: &WcpModel, bypass: BypassParams, weight: f64) -> Result<Self> {
        check_unit("W", weight)?;
        let stats = wcp_statistics(model)?;
        let basis = SubspaceBasis::enumerate(2);
        let source = wcp_source(model, bypass.eta_ae, &basis)?;
        // The truncated marginal is renormalised so that it is compatible with tr rho = 1.
        let marginal = &source.marginal * re(1.0 / linalg::real_trace(&source.marginal));
        let bob = threshold_povm(&basis, model.p_z)?;
        let u2 = fock::beam_splitter(&basis, bypass.eta_t, BeamSplitterConvention::U2)?;
        let rotated = bob.conjugated(&u2);
        let mut observables = Vec::with_capacity(A_DIM * OUTCOMES);
        for x in 0..2 {
            for a in 0..2 {
                for o in 0..OUTCOMES {
                    let label = if o == NO_CLICK {
                        format!("p(a={a},x={x},none)")
                    } else {
                        format!("p(a={a},x={x},b={},y={})", o % 2, o / 2)
                    };
                    observables.push(Observable {
                        label,
                        operator: linalg::kron(&alice_projector(a, x), rotated.outcome(o)),
                        target: stats.table[alice_index(a, x)][o],
                    });
                }
            }
        }
        Ok(Self {
            kind: ProtocolKind::Wcp,
            p_z: model.p_z,
            bypass,
            basis,
            bob,
            u2,
            observables,
            marginal,
            weight,
            epsilon: DEFAULT_EPSILON,
            ec_term: ec_term(model.p_z, stats.q_mu, stats.e_z),
        })
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn with_weight(mut self, weight: f64) -> Self {
        self.weight = weight;
        self
    }

    /// Dimension of `A (x) span(basis)`.
    pub fn dim(&self) -> usize {
        A_DIM * self.basis.len()
    }

    /// Rotated POVM `N' = U2^dagger N U2`.
    pub fn rotated_bob(&self) -> BobPovm {
        self.bob.conjugated(&self.u2)
    }
}

/// Eve's interaction on the B part of the single-photon space: an isometry from the
/// qutrit `{vac, 1_BH, 1_BV}` into `{vac, 1_BH, 1_BV} (x) E` that leaves the vacuum in B.
#[derive(Debug, Clone)]
pub struct ExplicitAttack {
    /// `(3 d_E) x 3`, rows ordered `b * d_E + e`.
    isometry: CMatrix,
    eve_dim: usize,
}

impl ExplicitAttack {
    pub fn new(isometry: CMatrix, eve_dim: usize) -> Result<Self> {
        if isometry.nrows() != 3 * eve_dim || isometry.ncols() != 3 {
            return Err(FockError::Dimension { expected: 3 * eve_dim, found: isometry.nrows() }.into());
        }
        let defect = linalg::max_abs(&(isometry.adjoint() * &isometry - linalg::identity(3)));
        let leak: f64 = (eve_dim..3 * eve_dim).map(|r| isometry[(r, 0)].norm()).fold(0.0, f64::max);
        if defect > 1e-10 || leak > 1e-10 {
            return Err(ProtocolError::NotIsometric(defect.max(leak)));
        }
        Ok(Self { isometry, eve_dim })
    }

    pub fn identity() -> Self {
        Self { isometry: linalg::identity(3), eve_dim: 1 }
    }

    /// Measure in H/V, keep a record, resend the measured photon.
    pub fn intercept_resend_z() -> Self {
        let mut w = linalg::zeros_rect(9, 3);
        w[(0, 0)] = re(1.0); // vac -> vac, e0
        w[(3 + 1, 1)] = re(1.0); // H -> H, e1
        w[(6 + 2, 2)] = re(1.0); // V -> V, e2
        Self { isometry: w, eve_dim: 3 }
    }

    /// Haar-like random attack with an Eve register of dimension `eve_dim`.
    pub fn random<R: rand::Rng + ?Sized>(eve_dim: usize, rng: &mut R) -> Self {
        let n = 3 * eve_dim;
        let u = linalg::random::unitary(n - 1, rng);
        let mut w = linalg::zeros_rect(n, 3);
        let phase = linalg::random::unitary(1, rng)[(0, 0)];
        w[(0, 0)] = phase;
        for col in 1..3 {
            for r in 0..n - 1 {
                w[(r + 1, col)] = u[(r, col - 1)];
            }
        }
        Self { isometry: w, eve_dim }
    }

    pub fn eve_dim(&self) -> usize {
        self.eve_dim
    }

    /// `V_E : A (x) Omega^sp -> A (x) Omega^sp (x) E` as a matrix.
    fn on_system(&self) -> CMatrix {
        // Omega^sp order: vac, BH, BV, FH, FV. F photons only coexist with B vacuum.
        let de = self.eve_dim;
        let d = 5;
        let mut bf = linalg::zeros_rect(d * de, d);
        for col in 0..3 {
            for b in 0..3 {
                for e in 0..de {
                    bf[(b * de + e, col)] = self.isometry[(b * de + e, col)];
                }
            }
        }
        for f in 3..5 {
            // |vac_B, 1_F> -> |vac_B, 1_F> (x) W|vac>_E
            for e in 0..de {
                bf[(f * de + e, f)] = self.isometry[(e, 0)];
            }
        }
        linalg::kron(&linalg::identity(A_DIM), &bf)
    }
}

/// Outcome of propagating the honest source through an explicit attack.
#[derive(Debug, Clone)]
pub struct AttackReport {
    /// State before the second beam splitter, `tr_E |psi'><psi'|`.
    pub rho_prime: CMatrix,
    /// `p(a, x, o)`.
    pub table: [[f64; OUTCOMES]; A_DIM],
    pub e_z: f64,
    pub e_x: f64,
    pub q: f64,
    /// QBER over sifted clicks in both bases.
    pub qber: f64,
    /// `Pr[pass] H(A | XYE)` evaluated directly on Eve's conditional states.
    pub pass_entropy: f64,
}

pub fn simulate_explicit_attack(
    attack: &ExplicitAttack,
    p_z: f64,
    bypass: BypassParams,
    bob: &BobPovm,
) -> Result<AttackReport> {
    let basis = SubspaceBasis::enumerate(1);
    let d = A_DIM * basis.len();
    let de = attack.eve_dim;
    let u1 = lift_bf(&fock::beam_splitter(&basis, bypass.eta_ae, BeamSplitterConvention::U1)?);
    let u2 = lift_bf(&fock::beam_splitter(&basis, bypass.eta_t, BeamSplitterConvention::U2)?);
    let psi_pp = &u1 * sp_source(p_z)?;
    let psi_p = attack.on_system() * psi_pp; // index (sys * de + e)
    let as_matrix = |v: &CVector| CMatrix::from_fn(d, de, |r, e| v[r * de + e]);
    let psi_p_m = as_matrix(&psi_p);
    let rho_prime = linalg::hermitize(&(&psi_p_m * psi_p_m.adjoint()));
    let psi_m = &u2 * &psi_p_m;

    let mut table = [[0.0; OUTCOMES]; A_DIM];
    for x in 0..2 {
        for a in 0..2 {
            for o in 0..OUTCOMES {
                let op = linalg::kron(&alice_projector(a, x), bob.outcome(o));
                table[alice_index(a, x)][o] = linalg::real_trace(&(psi_m.adjoint() * op * &psi_m));
            }
        }
    }

    // Eve's unnormalised conditional states rho_E^{a,x} for sifted clicks.
    let mut pass_entropy = 0.0;
    for x in 0..2 {
        let mut omega_e = linalg::zeros(de);
        let mut h_ae = 0.0;
        for a in 0..2 {
            let op = linalg::kron(&alice_projector(a, x), &bob.basis_filter(x));
            let w = (psi_m.adjoint() * op * &psi_m).transpose();
            let w = linalg::hermitize(&w);
            h_ae += entropy_unnormalised(&w);
            omega_e += w;
        }
        pass_entropy += h_ae - entropy_unnormalised(&omega_e);
    }

    let e_z = table[alice_index(0, 0)][outcome_index(1, 0)] + table[alice_index(1, 0)][outcome_index(0, 0)];
    let e_x = table[alice_index(0, 1)][outcome_index(1, 1)] + table[alice_index(1, 1)][outcome_index(0, 1)];
    let q = 1.0 - table.iter().map(|r| r[NO_CLICK]).sum::<f64>();
    let sifted: f64 = (0..2)
        .flat_map(|x| (0..2).flat_map(move |a| (0..2).map(move |b| (a, b, x))))
        .map(|(a, b, x)| table[alice_index(a, x)][outcome_index(b, x)])
        .sum();
    let qber = if sifted > 0.0 { (e_z + e_x) / sifted } else { 0.0 };
    Ok(AttackReport { rho_prime, table, e_z, e_x, q, qber, pass_entropy })
}

/// `-tr[w log2 w]` for a positive, not necessarily normalised, operator.
fn entropy_unnormalised(w: &CMatrix) -> f64 {
    linalg::eigenvalues(w).iter().filter(|&&l| l > 0.0).map(|&l| -l * l.log2()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{identity, max_abs};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn assert_complete(povm: &BobPovm) {
        let mut sum = povm.no_click.clone();
        for c in &povm.clicks {
            sum += c;
            assert!(linalg::min_eigenvalue(c) > -1e-10);
        }
        assert!(linalg::min_eigenvalue(&povm.no_click) > -1e-10);
        assert!(max_abs(&(sum - identity(povm.dim()))) < 1e-10);
    }

    #[test]
    fn sp_source_structure() {
        let psi = sp_source(0.5).unwrap();
        assert!(close(psi.norm(), 1.0, 1e-15));
        // |a=0,x=0> (x) |1_BH>
        assert!(close(psi[1].re, 0.5, 1e-15));

        let p_z = 0.3;
        let psi = sp_source(p_z).unwrap();
        let rho = linalg::projector(&psi);
        let mut rho_a = linalg::zeros(A_DIM);
        for i in 0..A_DIM {
            for j in 0..A_DIM {
                rho_a[(i, j)] = (0..5).map(|s| rho[(i * 5 + s, j * 5 + s)]).sum();
            }
        }
        let expected = [p_z / 2.0, p_z / 2.0, (1.0 - p_z) / 2.0, (1.0 - p_z) / 2.0];
        for (i, e) in expected.iter().enumerate() {
            assert!(close(rho_a[(i, i)].re, *e, 1e-15));
        }
        // Overlap <1_BH|1_B+> = 1/sqrt 2 gives cross-basis coherence.
        let c = (p_z * (1.0 - p_z)).sqrt() / 2.0 * std::f64::consts::FRAC_1_SQRT_2;
        assert!(close(rho_a[(alice_index(0, 0), alice_index(0, 1))].re, c, 1e-15));
    }

    #[test]
    fn sp_povm_elements() {
        let povm = sp_povm(0.5, 1.0, 1.0).unwrap();
        assert_complete(&povm);
        let mut expected = linalg::zeros(5);
        expected[(1, 1)] = re(0.5);
        assert!(max_abs(&(povm.element(0, 0) - expected)) < 1e-15);

        let mismatched = sp_povm(0.5, 0.5, 1.0).unwrap();
        assert_complete(&mismatched);
        // 1 - eta_1 p_z - (eta_1 + eta_2)(1 - p_z)/2
        assert!(close(mismatched.no_click[(1, 1)].re, 0.375, 1e-15));
        assert!(matches!(sp_povm(0.5, 1.5, 1.0), Err(ProtocolError::Parameter { .. })));
    }

    #[test]
    fn sp_observables_properties() {
        let basis = SubspaceBasis::enumerate(1);
        let povm = sp_povm(0.5, 1.0, 1.0).unwrap();
        let psi = sp_source(0.5).unwrap();
        let honest = sp_observables(&povm);
        assert!(close(linalg::trace_product(&honest.e_z, &linalg::projector(&psi)), 0.0, 1e-15));
        assert!(close(linalg::trace_product(&honest.e_x, &linalg::projector(&psi)), 0.0, 1e-15));

        let u2 = fock::beam_splitter(&basis, 1.0, BeamSplitterConvention::U2).unwrap();
        let rotated = sp_observables(&povm.conjugated(&u2));
        let expected = lift_bf(&(u2.adjoint() * &povm.no_click * &u2));
        assert!(max_abs(&(&rotated.e_empty - expected)) < 1e-15);

        let u2 = fock::beam_splitter(&basis, 0.4, BeamSplitterConvention::U2).unwrap();
        let rotated = sp_observables(&povm.conjugated(&u2));
        let rest = identity(20) - (&rotated.e_z + &rotated.e_x + &rotated.e_empty);
        assert!(linalg::min_eigenvalue(&rest) > -1e-12);
    }

    #[test]
    fn table_one_statistics() {
        let (q, e) = sp_statistics(&SpNoiseModel::table_one(), QberFormula::Corrected).unwrap();
        assert!(close(q, 9.001998199898997e-4, 1e-15));
        assert!(close(e, 1.0108766734758934e-2, 1e-12));
        let (_, printed) = sp_statistics(&SpNoiseModel::table_one(), QberFormula::Printed).unwrap();
        assert!(close(printed, 0.49999995101087663, 1e-12));

        let noiseless = SpNoiseModel { p_d: 0.0, e_d: 0.0, ..SpNoiseModel::table_one() };
        let (q, e) = sp_statistics(&noiseless, QberFormula::Corrected).unwrap();
        assert!(close(q, 9e-4, 1e-15));
        assert!(close(e, 0.0, 1e-12));
    }

    #[test]
    fn mismatch_statistics() {
        let s = sp_mismatch_statistics(&SpNoiseModel::mismatched(0.0, 1.0, 1.0, 0.5)).unwrap();
        assert!(close(s.e_z, 0.0, 1e-15) && close(s.e_x, 0.0, 1e-15));
        assert!(close(s.q, 1.0, 1e-15));

        let s = sp_mismatch_statistics(&SpNoiseModel::mismatched(1.0, 1.0, 1.0, 0.5)).unwrap();
        assert!(close(s.e_z, 0.125, 1e-15));
        assert!(close(s.qber_z(), 0.5, 1e-14));

        // Direct evaluation: q = 0.1, eta_1 = 0.5.
        let s = sp_mismatch_statistics(&SpNoiseModel::mismatched(0.1, 0.5, 1.0, 0.5)).unwrap();
        // Errors in Z come only from the depolarised part: 0.1 * (p_z/2) * p_z/2 * (eta_1 + eta_2).
        assert!(close(s.e_z, 0.1 * 0.25 * 0.25 * 1.5, 1e-15));
        // Clicks: honest photons click with (eta_1 + eta_2)/2 on average, as do depolarised ones.
        assert!(close(s.q, 0.75, 1e-15));
    }

    #[test]
    fn wcp_source_truncation() {
        let basis = SubspaceBasis::enumerate(2);
        for mu in [0.5, 0.8, 1.1] {
            let src = wcp_source(&WcpModel::new(mu, 0.02, 0.5), 0.7, &basis).unwrap();
            let expected = (-mu).exp() * (1.0 + mu + mu * mu / 2.0);
            assert!(close(linalg::real_trace(&src.rho), expected, 1e-14));
            assert!(close(src.tail_weight, 1.0 - expected, 1e-14));
            assert!(close(linalg::real_trace(&src.marginal), expected, 1e-14));
        }
        let src = wcp_source(&WcpModel::new(1e-9, 0.0, 0.5), 0.7, &basis).unwrap();
        assert!(close(linalg::real_trace(&src.rho), 1.0, 1e-8));

        // eta_AE = 1: the one-photon layer carries nothing in F.
        let src = wcp_source(&WcpModel::new(0.5, 0.0, 0.5), 1.0, &basis).unwrap();
        for (s, occ) in basis.states().iter().enumerate() {
            if occ.total() == 1 && occ.f_photons() > 0 {
                for i in 0..A_DIM {
                    assert_eq!(src.rho[(i * 15 + s, i * 15 + s)].norm(), 0.0);
                }
            }
        }
    }

    #[test]
    fn wcp_povm_elements() {
        let basis = SubspaceBasis::enumerate(2);
        let povm = threshold_povm(&basis, 0.5).unwrap();
        assert_complete(&povm);
        let i20 = basis.index_of(&ModeOccupation::new(2, 0, 0, 0)).unwrap();
        let i11 = basis.index_of(&ModeOccupation::new(1, 1, 0, 0)).unwrap();
        assert!(close(povm.element(0, 0)[(i20, i20)].re, 0.5, 1e-15));
        assert!(close(povm.element(0, 0)[(i11, i11)].re, 0.25, 1e-15));
        for p_z in [0.3, 0.7] {
            let povm = threshold_povm(&basis, p_z).unwrap();
            assert_complete(&povm);
            for el in povm.clicks.iter().chain([&povm.no_click]) {
                let mut blocked = linalg::zeros(15);
                for n in 0..=2 {
                    let om = fock::layer_projector(&basis, n);
                    blocked += &om * el * &om;
                }
                assert!(max_abs(&(el - blocked)) < 1e-12);
            }
        }
    }

    #[test]
    fn wcp_statistics_values() {
        for mu in [0.5, 0.8, 1.1] {
            let s = wcp_statistics(&WcpModel::new(mu, 0.02, 0.5)).unwrap();
            assert!(close(s.q_mu, 1.0 - 0.98 * (-mu as f64).exp(), 1e-9));
            let total: f64 = s.table.iter().flatten().sum();
            assert!(close(total, 1.0, 1e-12));
            assert!(close(s.e_z, s.e_x, 1e-12));
        }
        let s = wcp_statistics(&WcpModel::new(0.5, 0.02, 0.5)).unwrap();
        assert!(close(s.q_mu, 0.40559995348161926, 1e-12));
        let s = wcp_statistics(&WcpModel::new(0.5, 0.0, 0.5)).unwrap();
        assert!(close(s.e_z, 0.0, 1e-15));
    }

    #[test]
    fn error_correction_and_baselines() {
        let (q, e) = (9.001998199898997e-4, 1.0108766734758934e-2);
        assert_eq!(ec_term(0.5, q, 0.0), 0.0);
        assert!(close(ec_term(0.5, q, e), 3.668914270222753e-5, 1e-15));
        assert!(close(ec_term(0.5, q, 0.5), 0.5 * q, 1e-18));
        assert!(close(baseline::sp_normal(0.5, q, e), 3.767216245904948e-4, 1e-15));
        assert!(close(baseline::tilted_rate(0.078, 1.0, 0.5), 0.10096970977846467, 1e-14));
        let both = baseline::ext_bp_sp(0.5, q, e, 0.5);
        assert!(close(both, -0.5 * q * linalg::binary_entropy(e), 1e-15));
    }

    #[test]
    fn explicit_attack_identity() {
        let povm = sp_povm(0.5, 1.0, 1.0).unwrap();
        let r = simulate_explicit_attack(&ExplicitAttack::identity(), 0.5, BypassParams::none(), &povm).unwrap();
        assert!(close(r.e_z, 0.0, 1e-15) && close(r.e_x, 0.0, 1e-15));
        assert!(close(r.q, 1.0, 1e-14));
        assert!(close(r.pass_entropy, sifting(0.5), 1e-12));
    }

    #[test]
    fn explicit_attack_intercept_resend() {
        let povm = sp_povm(0.5, 1.0, 1.0).unwrap();
        let r =
            simulate_explicit_attack(&ExplicitAttack::intercept_resend_z(), 0.5, BypassParams::none(), &povm).unwrap();
        assert!(close(r.qber, 0.25, 1e-14));
        assert!(close(r.e_z, 0.0, 1e-15));
    }

    #[test]
    fn attacks_preserve_source_marginal() {
        let basis = SubspaceBasis::enumerate(1);
        let kernel = PartialTraceKernel::new(&basis);
        let povm = sp_povm(0.4, 1.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let bypass = BypassParams::new(0.6, 0.8).unwrap();
        let reference = Scenario::sp_from_statistics(0.4, 0.1, 0.01, bypass).unwrap().marginal;
        for de in 1..=5 {
            let attack = ExplicitAttack::random(de, &mut rng);
            let r = simulate_explicit_attack(&attack, 0.4, bypass, &povm).unwrap();
            let m = kernel.apply(&r.rho_prime, A_DIM).unwrap();
            assert!(max_abs(&(m - &reference)) < 1e-10);
        }
    }

    #[test]
    fn rejects_non_isometries() {
        assert!(matches!(
            ExplicitAttack::new(linalg::zeros_rect(6, 3), 2),
            Err(ProtocolError::NotIsometric(_))
        ));
    }

    #[test]
    fn scenario_shapes() {
        let sp = Scenario::sp_matched(&SpNoiseModel::table_one(), BypassParams::new(0.5, 0.9).unwrap()).unwrap();
        assert_eq!(sp.dim(), 20);
        assert_eq!(sp.observables.len(), 3);
        assert_eq!(sp.marginal.nrows(), 12);
        let wcp = Scenario::wcp(&WcpModel::new(0.5, 0.02, 0.5), BypassParams::new(0.9, 1.0).unwrap(), 0.0).unwrap();
        assert_eq!(wcp.dim(), 60);
        assert_eq!(wcp.observables.len(), 20);
        assert!(close(linalg::real_trace(&wcp.marginal), 1.0, 1e-14));
    }
}
