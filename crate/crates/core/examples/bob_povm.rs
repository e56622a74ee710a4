// Bob's threshold-detector measurement: completeness, the single-photon POVM with
// detector mismatch, and the double-click operator behind the weight bound.

use bypass_qkd::bounds;
use bypass_qkd::fock::SubspaceBasis;
use bypass_qkd::linalg;
use bypass_qkd::protocol::{self, OUTCOMES};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let basis = SubspaceBasis::enumerate(2);
    let povm = protocol::threshold_povm(&basis, 0.5)?;
    let total = (0..OUTCOMES).fold(linalg::zeros(povm.dim()), |acc, o| acc + povm.outcome(o));
    println!(
        "threshold POVM on {} states: |sum E - 1| = {:.2e}",
        povm.dim(),
        linalg::max_abs(&(total - linalg::identity(povm.dim())))
    );

    let sp = protocol::sp_povm(0.5, 0.078, 1.0)?;
    println!("mismatched single-photon POVM: no-click element diagonal = {:?}", sp.no_click.diagonal().map(|z| z.re).as_slice());

    for n in 1..=6 {
        println!(
            "double-click lambda_min on the {n}-photon layer: closed form {:.12}, diagonalised {:.12}",
            bounds::lambda_min_dc(n, 0.5),
            bounds::lambda_min_dc_brute(n, 0.5)?
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
