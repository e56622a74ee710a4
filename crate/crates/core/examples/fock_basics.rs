// Truncated Fock space of the B and F modes: basis, beam splitters, and the
// partial trace over B checked against the embed-then-trace construction.

use bypass_qkd::fock::{self, BeamSplitterConvention, SubspaceBasis};
use bypass_qkd::linalg::{self, random};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    for n in 0..=2 {
        println!("<= {n} photons: {} basis states", SubspaceBasis::enumerate(n).len());
    }
    let basis = SubspaceBasis::enumerate(2);
    let u = fock::beam_splitter(&basis, 0.7, BeamSplitterConvention::U1)?;
    let unitarity = linalg::max_abs(&(u.adjoint() * &u - linalg::identity(basis.len())));
    println!("beam splitter (eta = 0.7): |U^dag U - 1| = {unitarity:.2e}");

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let rho = random::density_matrix(4 * basis.len(), 3, &mut rng);
    let (fast, support) = fock::partial_trace_b(&rho, 4, &basis)?;
    let slow = fock::partial_trace_b_by_embedding(&rho, 4, &basis)?;
    println!(
        "tr_B on A (x) F ({} F states): kernel vs embedding = {:.2e}, trace = {:.12}",
        support.len(),
        linalg::max_abs(&(&fast - slow)),
        linalg::real_trace(&fast)
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
