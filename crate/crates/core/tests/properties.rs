//! Invariants checked over randomly drawn parameters.

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use bypass_qkd::bounds::{self, FwStop, MarginalConstraint, PipelineOptions};
use bypass_qkd::fock::{self, BeamSplitterConvention, SubspaceBasis};
use bypass_qkd::keyrate::{zeta_eps, KeyMapBundle};
use bypass_qkd::linalg::{self, random, re};
use bypass_qkd::protocol::{self, BypassParams, Scenario, SpNoiseModel, OUTCOMES};
use bypass_qkd::sdp::{self, BlockKind, BlockValue, Constraint, ConstraintKind, SdpProblem, SparseHermitian, Tolerances};

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig { cases, ..ProptestConfig::default() }
}

proptest! {
    #![proptest_config(config(64))]

    #[test]
    fn threshold_povm_is_complete(p_z in 0.01f64..0.99, n in 1u32..=3) {
        let basis = SubspaceBasis::enumerate(n);
        let povm = protocol::threshold_povm(&basis, p_z).unwrap();
        let total = (0..OUTCOMES).fold(linalg::zeros(povm.dim()), |acc, o| acc + povm.outcome(o));
        prop_assert!(linalg::max_abs(&(total - linalg::identity(povm.dim()))) < 1e-12);
        for o in 0..OUTCOMES {
            prop_assert!(linalg::min_eigenvalue(povm.outcome(o)) > -1e-12);
        }
    }

    #[test]
    fn mismatched_povm_is_complete(p_z in 0.01f64..0.99, eta_1 in 0.0f64..=1.0, eta_2 in 0.0f64..=1.0) {
        let povm = protocol::sp_povm(p_z, eta_1, eta_2).unwrap();
        let total = (0..OUTCOMES).fold(linalg::zeros(povm.dim()), |acc, o| acc + povm.outcome(o));
        prop_assert!(linalg::max_abs(&(total - linalg::identity(povm.dim()))) < 1e-12);
    }

    #[test]
    fn beam_splitters_are_unitary(eta in 0.0f64..=1.0, n in 1u32..=3) {
        let basis = SubspaceBasis::enumerate(n);
        for conv in [BeamSplitterConvention::U1, BeamSplitterConvention::U2] {
            let u = fock::beam_splitter(&basis, eta, conv).unwrap();
            prop_assert!(linalg::max_abs(&(u.adjoint() * &u - linalg::identity(basis.len()))) < 1e-12);
        }
    }

    #[test]
    fn partial_trace_is_linear_and_trace_preserving(seed in any::<u64>(), a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let basis = SubspaceBasis::enumerate(2);
        let n = 4 * basis.len();
        let x = random::density_matrix(n, 3, &mut rng);
        let y = random::hermitian(n, &mut rng);
        let tr = |m: &linalg::CMatrix| fock::partial_trace_b(m, 4, &basis).unwrap().0;
        let combined = tr(&(&x * re(a) + &y * re(b)));
        let separate = tr(&x) * re(a) + tr(&y) * re(b);
        prop_assert!(linalg::max_abs(&(combined - separate)) < 1e-12);
        prop_assert!((linalg::real_trace(&tr(&x)) - 1.0).abs() < 1e-12);
        prop_assert!((linalg::real_trace(&tr(&y)) - linalg::real_trace(&y)).abs() < 1e-12);
    }

    #[test]
    fn double_click_eigenvalue_is_a_probability(n in 1u32..=12, p_z in 0.01f64..0.99) {
        let l = bounds::lambda_min_dc(n, p_z);
        prop_assert!((0.0..=0.5).contains(&l));
        prop_assert!(bounds::lambda_min_dc(n + 2, p_z) >= l - 1e-15);
    }

    #[test]
    fn zeta_grows_with_epsilon(e in 1e-12f64..1e-3, d in 2usize..200) {
        let small = zeta_eps(e, d).unwrap();
        prop_assert!(small > 0.0);
        prop_assert!(zeta_eps(2.0 * e, d).unwrap() > small);
    }

    #[test]
    fn sdp_weak_duality(seed in any::<u64>(), n in 2usize..6, slack in 0.0f64..0.5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = random::hermitian(n, &mut rng);
        let a = random::hermitian(n, &mut rng);
        let rho = random::density_matrix(n, n, &mut rng);
        let mut p = SdpProblem::new(vec![BlockKind::Psd(n)]);
        p.set_objective(0, BlockValue::Matrix(c.clone()));
        p.push(Constraint::new("trace", ConstraintKind::Eq, 1.0).matrix(0, SparseHermitian::identity(n)));
        p.push(Constraint::new("a", ConstraintKind::Le, linalg::trace_product(&a, &rho) + slack).dense(0, &a));
        let s = sdp::solve(&p, &Tolerances::default()).unwrap();
        prop_assert!(s.dual_objective <= s.primal_objective + 1e-8);
        prop_assert!(s.primal_objective >= linalg::min_eigenvalue(&c) - 1e-8);
        if let Some(cert) = sdp::certified_dual_bound(&p, &s.y) {
            prop_assert!(cert.bound <= s.primal_objective + 1e-8);
        }
    }
}

proptest! {
    #![proptest_config(config(12))]

    #[test]
    fn frank_wolfe_never_increases_and_certifies_below(eta_ae in 0.3f64..=1.0, eta_t in 0.6f64..=1.0) {
        let scenario = Scenario::sp_matched(&SpNoiseModel::table_one(), BypassParams::new(eta_ae, eta_t).unwrap()).unwrap();
        let spec = bounds::assemble_constraints(&scenario, MarginalConstraint::AliceAndF).unwrap();
        let opts = PipelineOptions { epsilon: Some(1e-10), ..Default::default() };
        let sdp::Feasibility::Feasible { witness, .. } = sdp::check_feasibility(spec.template(), &opts.fw.sdp).unwrap() else {
            return Ok(());
        };
        let rho0 = spec.assemble_psd(&witness[..spec.state_blocks()]);
        let bundle = KeyMapBundle::new(&scenario).unwrap().with_epsilon(1e-10).unwrap();
        let trace = bounds::frank_wolfe(&spec, &bundle, &rho0, &opts.fw).unwrap();
        for w in trace.iterations.windows(2) {
            prop_assert!(w[1].value <= w[0].value + 1e-12);
        }
        let rate = bounds::certified_lower_bound(&trace.rho, &spec, &bundle, scenario.ec_term, &opts.fw.sdp).unwrap();
        prop_assert!(rate.lower_bound <= rate.fw_value + 1e-7);
        if trace.stop == FwStop::Converged {
            prop_assert!(rate.fw_value - rate.lower_bound <= 1e-5);
        }
    }
}
