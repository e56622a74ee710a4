// The key-rate objective `f_eps` and its gradient: agreement with the entropy of an
// explicit attack computed on Eve's side, and a finite-difference gradient check.

use bypass_qkd::fock::{self, BeamSplitterConvention, SubspaceBasis};
use bypass_qkd::keyrate::{zeta_eps, KeyMapBundle};
use bypass_qkd::linalg::{self, random};
use bypass_qkd::protocol::{self, BypassParams, ExplicitAttack};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let bob = protocol::sp_povm(0.5, 1.0, 1.0)?;
    let bypass = BypassParams::new(0.6, 0.8)?;
    let u2 = fock::beam_splitter(&SubspaceBasis::enumerate(1), bypass.eta_t, BeamSplitterConvention::U2)?;
    let bundle = KeyMapBundle::from_parts(&bob, &u2, 0.0)?;

    for k in 0..3 {
        let attack = ExplicitAttack::random(3, &mut rng);
        let report = protocol::simulate_explicit_attack(&attack, 0.5, bypass, &bob)?;
        let f = bundle.f_eps(&report.rho_prime)?.value;
        println!(
            "attack {k}: QBER {:.4}, f_0(rho') = {f:.10}, Pr[pass] H(A|XYE) = {:.10}",
            report.qber, report.pass_entropy
        );
    }

    let bundle = bundle.with_epsilon(1e-6)?;
    let n = bundle.state_dim();
    let rho = random::density_matrix(n, n, &mut rng);
    let grad = bundle.grad_f_eps(&rho)?;
    let mut d = random::hermitian(n, &mut rng);
    d -= linalg::identity(n) * linalg::re(linalg::real_trace(&d) / n as f64);
    let t = 1e-5;
    let fd = (bundle.f_eps(&(&rho + &d * linalg::re(t)))?.value - bundle.f_eps(&(&rho - &d * linalg::re(t)))?.value)
        / (2.0 * t);
    println!("directional derivative: finite difference {fd:.9}, gradient {:.9}", linalg::trace_product(&d, &grad));
    println!("zeta_eps(1e-6, d' = {}) = {:.3e}", bundle.d_prime, zeta_eps(1e-6, bundle.d_prime)?);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
