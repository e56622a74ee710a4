//! Fast invariant checks runnable from the command line.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bounds::{self, PipelineOptions};
use crate::fock::{self, SubspaceBasis};
use crate::keyrate::KeyMapBundle;
use crate::linalg::{self, random};
use crate::protocol::{self, BypassParams, ExplicitAttack, Scenario, SpNoiseModel, WcpModel};
use crate::sdp::{self, BlockKind, BlockValue, Constraint, ConstraintKind, SdpProblem, SparseHermitian};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    /// Worst observed deviation against its tolerance.
    pub detail: String,
}

fn outcome(name: &'static str, worst: f64, tol: f64) -> CheckOutcome {
    CheckOutcome { name, passed: worst <= tol, detail: format!("worst {worst:.3e} (tol {tol:.0e})") }
}

fn failed(name: &'static str, e: impl std::fmt::Display) -> CheckOutcome {
    CheckOutcome { name, passed: false, detail: e.to_string() }
}

fn lambda_closed_form() -> CheckOutcome {
    let mut worst = 0.0f64;
    for n in 1..=6 {
        for p_z in [0.3, 0.5, 0.7] {
            match bounds::lambda_min_dc_brute(n, p_z) {
                Ok(b) => worst = worst.max((bounds::lambda_min_dc(n, p_z) - b).abs()),
                Err(e) => return failed("double-click eigenvalue", e),
            }
        }
    }
    outcome("double-click eigenvalue", worst, 1e-12)
}

fn partial_trace(rng: &mut ChaCha8Rng) -> CheckOutcome {
    let basis = SubspaceBasis::enumerate(2);
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let rho = random::density_matrix(4 * basis.len(), 4, rng);
        let fast = fock::partial_trace_b(&rho, 4, &basis).map(|r| r.0);
        let slow = fock::partial_trace_b_by_embedding(&rho, 4, &basis);
        match (fast, slow) {
            (Ok(a), Ok(b)) => worst = worst.max(linalg::max_abs(&(a - b))),
            (Err(e), _) | (_, Err(e)) => return failed("partial trace", e),
        }
    }
    outcome("partial trace", worst, 1e-12)
}

fn gradient(rng: &mut ChaCha8Rng) -> CheckOutcome {
    let mut run = || -> Result<f64, Box<dyn std::error::Error>> {
        let sp = Scenario::sp_matched(&SpNoiseModel::table_one(), BypassParams::new(0.5, 0.8)?)?;
        let wcp = Scenario::wcp(&WcpModel::new(0.5, 0.02, 0.5), BypassParams::new(0.9, 0.9)?, 0.0)?;
        let mut worst = 0.0f64;
        for s in [sp, wcp] {
            let b = KeyMapBundle::new(&s)?.with_epsilon(1e-6)?;
            let n = b.state_dim();
            for _ in 0..3 {
                let rho = random::density_matrix(n, n, rng);
                let g = b.grad_f_eps(&rho)?;
                let mut d = random::hermitian(n, rng);
                let shift = linalg::real_trace(&d) / n as f64;
                d -= linalg::identity(n) * linalg::re(shift);
                let norm = d.norm();
                d /= linalg::re(norm);
                let t = 1e-5;
                let fp = b.f_eps(&(&rho + &d * linalg::re(t)))?.value;
                let fm = b.f_eps(&(&rho - &d * linalg::re(t)))?.value;
                let an = linalg::trace_product(&d, &g);
                worst = worst.max(((fp - fm) / (2.0 * t) - an).abs() / an.abs().max(1e-3));
            }
        }
        Ok(worst)
    };
    match run() {
        Ok(w) => outcome("gradient vs finite differences", w, 1e-6),
        Err(e) => failed("gradient vs finite differences", e),
    }
}

fn explicit_attacks(rng: &mut ChaCha8Rng) -> CheckOutcome {
    let mut run = || -> Result<f64, Box<dyn std::error::Error>> {
        let bob = protocol::sp_povm(0.5, 1.0, 1.0)?;
        let mut worst = 0.0f64;
        for (eta_ae, eta_t) in [(1.0, 1.0), (0.6, 0.7)] {
            let bypass = BypassParams::new(eta_ae, eta_t)?;
            let basis = SubspaceBasis::enumerate(1);
            let u2 = fock::beam_splitter(&basis, eta_t, fock::BeamSplitterConvention::U2)?;
            let bundle = KeyMapBundle::from_parts(&bob, &u2, 0.0)?;
            for _ in 0..3 {
                let attack = ExplicitAttack::random(3, rng);
                let report = protocol::simulate_explicit_attack(&attack, 0.5, bypass, &bob)?;
                worst = worst.max((bundle.f_eps(&report.rho_prime)?.value - report.pass_entropy).abs());
            }
        }
        Ok(worst)
    };
    match run() {
        Ok(w) => outcome("objective vs explicit attacks", w, 1e-8),
        Err(e) => failed("objective vs explicit attacks", e),
    }
}

fn weak_duality(rng: &mut ChaCha8Rng) -> CheckOutcome {
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..5 {
        let n = 4;
        let c = random::hermitian(n, rng);
        let a = random::hermitian(n, rng);
        let rho = random::density_matrix(n, n, rng);
        let mut p = SdpProblem::new(vec![BlockKind::Psd(n)]);
        p.set_objective(0, BlockValue::Matrix(c));
        p.push(Constraint::new("trace", ConstraintKind::Eq, 1.0).matrix(0, SparseHermitian::identity(n)));
        p.push(Constraint::new("a", ConstraintKind::Le, linalg::trace_product(&a, &rho) + 0.1).dense(0, &a));
        match sdp::solve(&p, &sdp::Tolerances::default()) {
            Ok(s) => worst = worst.max(s.dual_objective - s.primal_objective),
            Err(e) => return failed("SDP weak duality", e),
        }
    }
    outcome("SDP weak duality", worst.max(0.0), 1e-8)
}

fn certificate() -> CheckOutcome {
    let run = || -> Result<f64, Box<dyn std::error::Error>> {
        let s = Scenario::sp_matched(&SpNoiseModel::table_one(), BypassParams::new(0.5, 0.7)?)?;
        let r = bounds::evaluate(&s, &PipelineOptions { epsilon: Some(1e-10), ..Default::default() });
        let rate = r.rate.ok_or("no certified rate")?;
        Ok((rate.lower_bound - rate.fw_value).max(0.0))
    };
    match run() {
        Ok(w) => outcome("certified bound below FW value", w, 1e-7),
        Err(e) => failed("certified bound below FW value", e),
    }
}

/// Runs every check with a fixed seed.
pub fn selftest(seed: u64) -> Vec<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    vec![
        lambda_closed_form(),
        partial_trace(&mut rng),
        gradient(&mut rng),
        explicit_attacks(&mut rng),
        weak_duality(&mut rng),
        certificate(),
    ]
}
