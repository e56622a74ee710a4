use super::*;
use crate::linalg::{random, re};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tol() -> Tolerances {
    Tolerances::default()
}

fn trace_one(n: usize, block: usize) -> Constraint {
    Constraint::new("trace", ConstraintKind::Eq, 1.0).matrix(block, SparseHermitian::identity(n))
}

#[test]
fn diagonal_objective_on_states() {
    let mut p = SdpProblem::new(vec![BlockKind::Psd(2)]);
    p.set_objective(0, BlockValue::Matrix(linalg::from_real_diagonal(&[1.0, 2.0])));
    p.push(trace_one(2, 0));
    let s = solve(&p, &tol()).unwrap();
    assert_eq!(s.status, SdpStatus::Optimal);
    assert!((s.primal_objective - 1.0).abs() < 1e-8);
    let x = s.x[0].matrix();
    assert!((x[(0, 0)].re - 1.0).abs() < 1e-7 && x[(1, 1)].re.abs() < 1e-7);
    assert!(s.dual_objective <= s.primal_objective + 1e-8);
}

#[test]
fn correlation_matrix_extreme() {
    let mut p = SdpProblem::new(vec![BlockKind::Psd(2)]);
    let mut c = linalg::zeros(2);
    c[(0, 1)] = re(-1.0);
    c[(1, 0)] = re(-1.0);
    p.set_objective(0, BlockValue::Matrix(c));
    for i in 0..2 {
        p.push(Constraint::new("diag", ConstraintKind::Eq, 1.0).matrix(0, SparseHermitian { dim: 2, entries: vec![(i, i, re(1.0))] }));
    }
    let s = solve(&p, &tol()).unwrap();
    assert_eq!(s.status, SdpStatus::Optimal);
    assert!((s.primal_objective + 2.0).abs() < 1e-7);
    assert!((s.dual_objective + 2.0).abs() < 1e-7);
}

/// Exhaustive basic-feasible-solution search for `min c.x, A x = b, x >= 0`.
fn lp_oracle(c: &[f64], a: &[Vec<f64>], b: &[f64]) -> f64 {
    let n = c.len();
    let m = a.len();
    let mut best = f64::INFINITY;
    let mut subset = vec![0usize; m];
    fn rec(start: usize, depth: usize, n: usize, subset: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
        if depth == subset.len() {
            f(subset);
            return;
        }
        for i in start..n {
            subset[depth] = i;
            rec(i + 1, depth + 1, n, subset, f);
        }
    }
    rec(0, 0, n, &mut subset, &mut |cols: &[usize]| {
        let basis = nalgebra::DMatrix::from_fn(m, m, |r, k| a[r][cols[k]]);
        let Some(inv) = basis.clone().try_inverse() else { return };
        if basis.determinant().abs() < 1e-12 {
            return;
        }
        let xb = inv * nalgebra::DVector::from_column_slice(b);
        if xb.iter().all(|&v| v >= -1e-12) {
            let val: f64 = cols.iter().zip(xb.iter()).map(|(&k, &v)| c[k] * v).sum();
            best = best.min(val);
        }
    });
    best
}

#[test]
fn diagonal_lp_matches_vertex_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let n = 5;
        let m = 2;
        let c: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x0: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
        let mut a: Vec<Vec<f64>> = (0..m).map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        a[0] = vec![1.0; n]; // keeps the feasible set bounded
        let b: Vec<f64> = a.iter().map(|row| row.iter().zip(&x0).map(|(p, q)| p * q).sum()).collect();
        let expected = lp_oracle(&c, &a, &b);

        let mut p = SdpProblem::new(vec![BlockKind::Psd(n)]);
        p.set_objective(0, BlockValue::Matrix(linalg::from_real_diagonal(&c)));
        for (row, &bi) in a.iter().zip(&b) {
            p.push(Constraint::new("lp", ConstraintKind::Eq, bi).matrix(0, SparseHermitian::from_dense(&linalg::from_real_diagonal(row))));
        }
        let s = solve(&p, &tol()).unwrap();
        assert_eq!(s.status, SdpStatus::Optimal);
        assert!((s.primal_objective - expected).abs() < 1e-7, "{} vs {expected}", s.primal_objective);

        // Same LP on a nonnegative block.
        let mut q = SdpProblem::new(vec![BlockKind::Nonneg(n)]);
        q.set_objective(0, BlockValue::Vector(nalgebra::DVector::from_vec(c.clone())));
        for (row, &bi) in a.iter().zip(&b) {
            q.push(Constraint::new("lp", ConstraintKind::Eq, bi).vector(0, row.iter().copied().enumerate().collect()));
        }
        let s = solve(&q, &tol()).unwrap();
        assert!((s.primal_objective - expected).abs() < 1e-7);
    }
}

struct Instance {
    problem: SdpProblem,
    c: CMatrix,
    a: Vec<CMatrix>,
    b: Vec<f64>,
}

/// `min tr[C X]` over states with one equality and one `<=` constraint.
fn random_instance(rng: &mut ChaCha8Rng, n: usize) -> Instance {
    let c = random::hermitian(n, rng);
    let a1 = random::hermitian(n, rng);
    let a2 = random::hermitian(n, rng);
    let rho = random::density_matrix(n, n, rng);
    let b1 = linalg::trace_product(&a1, &rho);
    let b2 = linalg::trace_product(&a2, &rho) + 0.1;
    let mut p = SdpProblem::new(vec![BlockKind::Psd(n)]);
    p.set_objective(0, BlockValue::Matrix(c.clone()));
    p.push(trace_one(n, 0));
    p.push(Constraint::new("eq", ConstraintKind::Eq, b1).dense(0, &a1));
    p.push(Constraint::new("le", ConstraintKind::Le, b2).dense(0, &a2));
    Instance { problem: p, c, a: vec![a1, a2], b: vec![b1, b2] }
}

fn golden_max(lo: f64, hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (lo, hi);
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..90 {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = f(x1);
        }
    }
    f1.max(f2)
}

/// Independent oracle: maximise the concave dual function
/// `g(y) = b.y + lambda_min(C - y_1 A_1 - y_2 A_2)` (states as the domain) over the
/// projected box `y_2 <= 0` by nested section search on its subgradient-ordered slices.
fn dual_function_oracle(inst: &Instance) -> f64 {
    let g = |y1: f64, y2: f64| {
        let s = &inst.c - &inst.a[0] * re(y1) - &inst.a[1] * re(y2);
        inst.b[0] * y1 + inst.b[1] * y2 + linalg::min_eigenvalue(&s)
    };
    golden_max(-60.0, 60.0, |y1| golden_max(-60.0, 0.0, |y2| g(y1, y2)))
}

#[test]
fn matches_dual_function_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for k in 0..20 {
        let inst = random_instance(&mut rng, 3 + k % 2);
        let s = solve(&inst.problem, &tol()).unwrap();
        assert_eq!(s.status, SdpStatus::Optimal);
        let oracle = dual_function_oracle(&inst);
        assert!((s.primal_objective - oracle).abs() < 1e-5, "{} vs {oracle}", s.primal_objective);
        assert!(s.dual_objective <= s.primal_objective + 1e-8);
        assert!(s.y[2] <= 1e-12);
    }
}

#[test]
fn invariant_under_unitary_conjugation() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..5 {
        let inst = random_instance(&mut rng, 4);
        let u = random::unitary(4, &mut rng);
        let conj = |m: &CMatrix| linalg::hermitize(&(&u * m * u.adjoint()));
        let mut q = SdpProblem::new(vec![BlockKind::Psd(4)]);
        q.set_objective(0, BlockValue::Matrix(conj(&inst.c)));
        q.push(trace_one(4, 0));
        q.push(Constraint::new("eq", ConstraintKind::Eq, inst.b[0]).dense(0, &conj(&inst.a[0])));
        q.push(Constraint::new("le", ConstraintKind::Le, inst.b[1]).dense(0, &conj(&inst.a[1])));
        let s0 = solve(&inst.problem, &tol()).unwrap();
        let s1 = solve(&q, &tol()).unwrap();
        assert!((s0.primal_objective - s1.primal_objective).abs() < 1e-7);
    }
}

#[test]
fn dual_repair_gives_valid_bounds() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..10 {
        let inst = random_instance(&mut rng, 4);
        let s = solve(&inst.problem, &tol()).unwrap();
        let noisy: Vec<f64> = s.y.iter().map(|v| v + rng.random_range(-1e-3..1e-3)).collect();
        let cert = certified_dual_bound(&inst.problem, &noisy).unwrap();
        assert!(cert.bound <= s.primal_objective + 1e-10);
        assert!(cert.bound > s.primal_objective - 0.1);
        let z = inst.problem.dual_slack(&cert.y);
        assert!(linalg::min_eigenvalue(z[0].matrix()) >= 0.0);
        assert!(cert.y[2] <= 0.0);
    }
}

#[test]
fn real_embedding_properties() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let h = random::hermitian(4, &mut rng);
    let e = embed_hermitian(&h);
    let mut ev: Vec<f64> = e.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    let hv = linalg::eigenvalues(&h);
    for (i, v) in hv.iter().enumerate() {
        assert!((ev[2 * i] - v).abs() < 1e-12 && (ev[2 * i + 1] - v).abs() < 1e-12);
    }
    assert!(linalg::max_abs(&(extract_hermitian(&e) - &h)) < 1e-15);

    let psd = random::density_matrix(4, 2, &mut rng);
    assert!(embed_hermitian(&psd).symmetric_eigen().eigenvalues.min() > -1e-12);
    assert!(e.clone().symmetric_eigen().eigenvalues.min() < 0.0 && linalg::min_eigenvalue(&h) < 0.0);

    let real = linalg::from_real_diagonal(&[1.0, 2.0]);
    let er = embed_hermitian(&real);
    assert_eq!(er.view((0, 0), (2, 2)), er.view((2, 2), (2, 2)));
    assert_eq!(er.view((0, 2), (2, 2)).amax(), 0.0);

    let inst = random_instance(&mut rng, 3);
    let s0 = solve(&inst.problem, &tol()).unwrap();
    let s1 = solve(&embed_real(&inst.problem), &tol()).unwrap();
    assert!((s1.primal_objective / EMBED_SCALE - s0.primal_objective).abs() < 1e-7);
}

fn free_hermitian_ball(center: &CMatrix, radius: f64, functional: &CMatrix) -> (SdpProblem, TraceNormBall) {
    let k = center.nrows();
    let basis = hermitian_basis(k);
    let mut p = SdpProblem::new(vec![BlockKind::Free(k * k)]);
    let coeffs: Vec<f64> = basis.iter().map(|e| -e.inner(functional)).collect();
    p.set_objective(0, BlockValue::Vector(nalgebra::DVector::from_vec(coeffs)));
    let image = (0..k * k).map(|t| vec![(0, BlockData::Vector(vec![(t, 1.0)]))]).collect();
    let ball = trace_norm_ball(&mut p, "ball", vec![BallPart { image, center: center.clone() }], radius);
    (p, ball)
}

#[test]
fn trace_norm_ball_dual_norm() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for _ in 0..5 {
        let m0 = random::density_matrix(3, 3, &mut rng);
        let l = random::hermitian(3, &mut rng);
        let r = 0.3;
        let (p, _) = free_hermitian_ball(&m0, r, &l);
        let s = solve(&p, &tol()).unwrap();
        assert_eq!(s.status, SdpStatus::Optimal);
        let expected = linalg::trace_product(&l, &m0) + 2.0 * r * linalg::eigenvalues(&l).iter().fold(0.0f64, |a, v| a.max(v.abs()));
        assert!((-s.primal_objective - expected).abs() < 1e-7, "{} vs {expected}", -s.primal_objective);
    }
}

#[test]
fn trace_norm_ball_scalar_and_zero_radius() {
    let m0 = linalg::from_real_diagonal(&[0.4]);
    let (p, _) = free_hermitian_ball(&m0, 0.25, &linalg::from_real_diagonal(&[1.0]));
    let s = solve(&p, &tol()).unwrap();
    // 1/2 |m - m0| <= r, so the maximum is m0 + 2r.
    assert!((-s.primal_objective - 0.9).abs() < 1e-8, "{}", s.primal_objective);

    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let m0 = random::hermitian(2, &mut rng);
    let l = random::hermitian(2, &mut rng);
    let (p, ball) = free_hermitian_ball(&m0, 0.0, &l);
    let s = solve(&p, &tol()).unwrap();
    assert!((-s.primal_objective - linalg::trace_product(&l, &m0)).abs() < 1e-6);
    assert!(linalg::max_abs(s.x[ball.p_blocks[0]].matrix()) < 1e-6);
    assert!(linalg::max_abs(s.x[ball.q_blocks[0]].matrix()) < 1e-6);
}

#[test]
fn feasibility_check() {
    let mut p = SdpProblem::new(vec![BlockKind::Psd(3)]);
    p.push(trace_one(3, 0));
    match check_feasibility(&p, &tol()).unwrap() {
        Feasibility::Feasible { witness, margin } => {
            assert!((margin - 1.0 / 3.0).abs() < 1e-7);
            assert!((linalg::real_trace(witness[0].matrix()) - 1.0).abs() < 1e-8);
        }
        other => panic!("{other:?}"),
    }
    p.push(Constraint::new("half", ConstraintKind::Eq, 0.5).matrix(0, SparseHermitian::identity(3)));
    assert!(matches!(check_feasibility(&p, &tol()).unwrap(), Feasibility::Infeasible { .. }));

    // Consistent linear system but no PSD solution: <11| X |11> = -0.1.
    let mut q = SdpProblem::new(vec![BlockKind::Psd(2)]);
    q.push(trace_one(2, 0));
    q.push(Constraint::new("neg", ConstraintKind::Eq, -0.1).matrix(0, SparseHermitian { dim: 2, entries: vec![(1, 1, re(1.0))] }));
    match check_feasibility(&q, &tol()).unwrap() {
        Feasibility::Infeasible { margin: Some(t), .. } => assert!((t + 0.1).abs() < 1e-7),
        other => panic!("{other:?}"),
    }
}

#[test]
fn infeasible_equalities_reported() {
    let mut p = SdpProblem::new(vec![BlockKind::Psd(2)]);
    p.push(trace_one(2, 0));
    p.push(Constraint::new("half", ConstraintKind::Eq, 0.5).matrix(0, SparseHermitian::identity(2)));
    assert_eq!(solve(&p, &tol()).unwrap().status, SdpStatus::Infeasible);

    let mut q = SdpProblem::new(vec![BlockKind::Psd(2)]);
    q.push(trace_one(2, 0));
    q.push(Constraint::new("neg", ConstraintKind::Le, -0.5).matrix(0, SparseHermitian::identity(2)));
    assert_eq!(solve(&q, &tol()).unwrap().status, SdpStatus::Infeasible);
}

#[test]
fn dump_load_roundtrip() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut inst = random_instance(&mut rng, 3);
    let j = inst.problem.add_block(BlockKind::Nonneg(2));
    inst.problem.push(Constraint::new("with space", ConstraintKind::Ge, 0.1).vector(j, vec![(0, 1.0), (1, 0.3)]));
    let text = dump(&inst.problem);
    let back = load(&text).unwrap();
    let mut expected = inst.problem.clone();
    expected.constraints.last_mut().unwrap().label = "with_space".into();
    assert_eq!(back, expected);
    assert!(load("sdp 2\n").is_err());
}

#[test]
fn validation_rejects_bad_data() {
    let mut p = SdpProblem::new(vec![BlockKind::Psd(2)]);
    let mut a = linalg::zeros(2);
    a[(0, 1)] = re(1.0);
    p.push(Constraint::new("bad", ConstraintKind::Eq, 0.0).dense(0, &a));
    assert!(solve(&p, &tol()).is_err());
}
