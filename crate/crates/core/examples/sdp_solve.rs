// The interior-point SDP solver on its own: a two-by-two correlation matrix, a state
// minimisation with an inequality, and a rigorously repaired dual bound.

use bypass_qkd::linalg::{self, random, re};
use bypass_qkd::sdp::{self, BlockKind, BlockValue, Constraint, ConstraintKind, SdpProblem, SparseHermitian, Tolerances};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    // min -2 Re X_01 subject to X_00 = X_11 = 1: the optimum is -2.
    let mut p = SdpProblem::new(vec![BlockKind::Psd(2)]);
    let mut c = linalg::zeros(2);
    c[(0, 1)] = re(-1.0);
    c[(1, 0)] = re(-1.0);
    p.set_objective(0, BlockValue::Matrix(c));
    for i in 0..2 {
        let e = SparseHermitian { dim: 2, entries: vec![(i, i, re(1.0))] };
        p.push(Constraint::new("diag", ConstraintKind::Eq, 1.0).matrix(0, e));
    }
    let s = sdp::solve(&p, &Tolerances::default())?;
    println!(
        "correlation matrix: {} primal {:.9} dual {:.9} in {} iterations",
        s.status.name(),
        s.primal_objective,
        s.dual_objective,
        s.iterations
    );

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 5;
    let cost = random::hermitian(n, &mut rng);
    let a = random::hermitian(n, &mut rng);
    let rho = random::density_matrix(n, n, &mut rng);
    let mut q = SdpProblem::new(vec![BlockKind::Psd(n)]);
    q.set_objective(0, BlockValue::Matrix(cost.clone()));
    q.push(Constraint::new("trace", ConstraintKind::Eq, 1.0).matrix(0, SparseHermitian::identity(n)));
    q.push(Constraint::new("a", ConstraintKind::Le, linalg::trace_product(&a, &rho)).dense(0, &a));
    let s = sdp::solve(&q, &Tolerances::default())?;
    let cert = sdp::certified_dual_bound(&q, &s.y).ok_or("no dual certificate")?;
    println!(
        "state program: primal {:.9}, certified dual bound {:.9} (moved by {:.1e}), unconstrained minimum {:.9}",
        s.primal_objective,
        cert.bound,
        cert.adjustment,
        linalg::min_eigenvalue(&cost)
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
