//! The objective of the key-rate problem: the post-selected relative entropy
//! `f_eps(rho) = sum_x D(G_x^eps[rho] || Z[G_x^eps[rho]])`, its gradient and the
//! perturbation correction `zeta_eps`. Logarithms are base 2.
//!
//! `V_x P_x` has range `S_x = span{|a>_Ã |a,x>_A |s>}` of dimension `2 d_BF`. The
//! depolariser adds a multiple of the identity on the complement, where `sigma` and
//! `Z[sigma]` coincide, so both the value and the gradient are computed on `S_x`.

use thiserror::Error;

use crate::linalg::{self, re, CMatrix};
use crate::protocol::{self, Scenario, A_DIM};

#[derive(Debug, Error, PartialEq)]
pub enum KeyRateError {
    #[error("P_x is not positive semidefinite (POVM corrupted)")]
    SquareRoot,
    #[error("state dimension {found} does not match the key map ({expected})")]
    Dimension { expected: usize, found: usize },
    #[error("epsilon {0} outside (0, 1/(d'-1))")]
    Epsilon(f64),
    #[error("spectrum of the perturbed image reached {0:e}; logarithm undefined")]
    SpectralFloor(f64),
    #[error("state trace {0} outside (0, 1]")]
    Trace(f64),
}

pub type Result<T> = std::result::Result<T, KeyRateError>;

/// The compressed key map of one basis, `K_x = R_x V_x P_x : A (x) BF -> S_x`.
#[derive(Debug, Clone)]
pub struct KeyMap {
    /// `2 d_BF x (4 d_BF)`, rows `(a, s)` with `a` the key register value.
    pub k: CMatrix,
    /// `P_x` on BF.
    pub p: CMatrix,
}

#[derive(Debug, Clone)]
pub struct KeyMapBundle {
    pub maps: [KeyMap; 2],
    pub epsilon: f64,
    /// `dim(Ã (x) A (x) BF)`.
    pub d_prime: usize,
    pub bf_dim: usize,
}

/// Objective value with its per-basis split and spectral diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveValue {
    pub value: f64,
    pub per_basis: [f64; 2],
    /// Smallest eigenvalue of `G_x[rho]` before the depolariser.
    pub floor_before: f64,
    /// Smallest eigenvalue after the depolariser.
    pub floor_after: f64,
}

impl KeyMapBundle {
    pub fn new(scenario: &Scenario) -> Result<Self> {
        Self::from_parts(&scenario.bob, &scenario.u2, scenario.epsilon)
    }

    /// Bundle from Bob's un-rotated POVM and the second beam splitter.
    pub fn from_parts(bob: &protocol::BobPovm, u2: &CMatrix, epsilon: f64) -> Result<Self> {
        let d = bob.dim();
        let d_prime = 2 * A_DIM * d;
        if !(0.0..1.0 / (d_prime as f64 - 1.0)).contains(&epsilon) {
            return Err(KeyRateError::Epsilon(epsilon));
        }
        let build = |x: usize| -> Result<KeyMap> {
            let root = linalg::sqrt_psd(&bob.basis_filter(x), 1e-12).ok_or(KeyRateError::SquareRoot)?;
            let p = linalg::hermitize(&(u2.adjoint() * root * u2));
            let mut k = linalg::zeros_rect(2 * d, A_DIM * d);
            for a in 0..2 {
                let col0 = protocol::alice_index(a, x) * d;
                k.view_mut((a * d, col0), (d, d)).copy_from(&p);
            }
            Ok(KeyMap { k, p })
        };
        Ok(Self { maps: [build(0)?, build(1)?], epsilon, d_prime, bf_dim: d })
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        if !(0.0..1.0 / (self.d_prime as f64 - 1.0)).contains(&epsilon) {
            return Err(KeyRateError::Epsilon(epsilon));
        }
        Self { epsilon, ..self.clone() }.pipe(Ok)
    }

    pub fn state_dim(&self) -> usize {
        A_DIM * self.bf_dim
    }

    /// Full isometry `V_x : A (x) BF -> Ã (x) A (x) BF` (for checks and oracles).
    pub fn v_full(&self, x: usize) -> CMatrix {
        let d = self.bf_dim;
        let n = A_DIM * d;
        let mut v = linalg::zeros_rect(2 * n, n);
        for a in 0..2 {
            let i = protocol::alice_index(a, x);
            for s in 0..d {
                v[(a * n + i * d + s, i * d + s)] = re(1.0);
            }
        }
        v
    }

    /// `G_x[rho] = V_x P_x rho P_x V_x^dagger` on the full `d'`-dimensional space.
    pub fn g_full(&self, x: usize, rho: &CMatrix) -> CMatrix {
        let p = protocol::lift_bf(&self.maps[x].p);
        let v = self.v_full(x);
        let t = &v * &p;
        linalg::hermitize(&(&t * rho * t.adjoint()))
    }

    fn check(&self, rho: &CMatrix) -> Result<()> {
        if rho.nrows() != self.state_dim() {
            return Err(KeyRateError::Dimension { expected: self.state_dim(), found: rho.nrows() });
        }
        Ok(())
    }

    /// Compressed perturbed image on `S_x` together with the undepolarised image.
    fn image(&self, x: usize, rho: &CMatrix) -> (CMatrix, CMatrix) {
        let k = &self.maps[x].k;
        let g = linalg::hermitize(&(k * rho * k.adjoint()));
        let t = linalg::real_trace(&g);
        let mut sigma = &g * re(1.0 - self.epsilon);
        let shift = self.epsilon * t / self.d_prime as f64;
        for i in 0..sigma.nrows() {
            sigma[(i, i)] += re(shift);
        }
        (sigma, g)
    }

    pub fn f_eps(&self, rho: &CMatrix) -> Result<ObjectiveValue> {
        self.check(rho)?;
        let mut per_basis = [0.0; 2];
        let mut floor_before = f64::INFINITY;
        let mut floor_after = f64::INFINITY;
        let d = self.bf_dim;
        for x in 0..2 {
            let (sigma, g) = self.image(x, rho);
            floor_before = floor_before.min(linalg::min_eigenvalue(&g));
            if linalg::real_trace(&g) == 0.0 {
                // Nothing passes the filter: the image is exactly zero.
                floor_after = floor_after.min(0.0);
                continue;
            }
            let vals = linalg::eigenvalues(&sigma);
            floor_after = floor_after.min(vals[0]);
            if self.epsilon > 0.0 && vals[0] <= 0.0 {
                return Err(KeyRateError::SpectralFloor(vals[0]));
            }
            let mut value = -linalg::entropy_bits(&vals);
            for a in 0..2 {
                let block = sigma.view((a * d, a * d), (d, d)).into_owned();
                value += linalg::entropy_bits(&linalg::eigenvalues(&block));
            }
            per_basis[x] = value;
        }
        Ok(ObjectiveValue { value: per_basis[0] + per_basis[1], per_basis, floor_before, floor_after })
    }

    /// Gradient `G` with `d f_eps = tr[Delta G]` (the transpose of the paper's `∇f`).
    pub fn grad_f_eps(&self, rho: &CMatrix) -> Result<CMatrix> {
        self.check(rho)?;
        if self.epsilon <= 0.0 {
            return Err(KeyRateError::Epsilon(self.epsilon));
        }
        let d = self.bf_dim;
        let n = self.state_dim();
        let mut grad = linalg::zeros(n);
        for x in 0..2 {
            let (sigma, _) = self.image(x, rho);
            let (vals, vecs) = linalg::eigh(&sigma);
            if vals[0] <= 0.0 {
                return Err(KeyRateError::SpectralFloor(vals[0]));
            }
            let log_sigma = log2_from_eigh(&vals, &vecs);
            let mut l = log_sigma;
            for a in 0..2 {
                let block = sigma.view((a * d, a * d), (d, d)).into_owned();
                let log_block = linalg::hermitian_function(&block, f64::log2);
                let mut view = l.view_mut((a * d, a * d), (d, d));
                view -= log_block;
            }
            let tr_l = linalg::real_trace(&l);
            let mut inner = &l * re(1.0 - self.epsilon);
            let shift = self.epsilon * tr_l / self.d_prime as f64;
            for i in 0..inner.nrows() {
                inner[(i, i)] += re(shift);
            }
            let k = &self.maps[x].k;
            grad += k.adjoint() * inner * k;
        }
        Ok(linalg::hermitize(&grad))
    }
}

fn log2_from_eigh(vals: &[f64], vecs: &CMatrix) -> CMatrix {
    let mut scaled = vecs.clone();
    for (j, &v) in vals.iter().enumerate() {
        scaled.column_mut(j).scale_mut(v.log2());
    }
    scaled * vecs.adjoint()
}

trait Pipe: Sized {
    fn pipe<T>(self, f: impl FnOnce(Self) -> T) -> T {
        f(self)
    }
}
impl<T> Pipe for T {}

/// Continuity correction `2 eps (d'-1) log2(d' / (eps (d'-1)))`.
pub fn zeta_eps(epsilon: f64, d_prime: usize) -> Result<f64> {
    let dm = d_prime as f64 - 1.0;
    if !(epsilon >= 0.0 && epsilon < 1.0 / dm) {
        return Err(KeyRateError::Epsilon(epsilon));
    }
    if epsilon == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * epsilon * dm * (d_prime as f64 / (epsilon * dm)).log2())
}

#[cfg(test)]
pub(crate) mod oracle {
    //! Straightforward full-dimensional evaluation used to validate the compressed one.
    use super::*;

    pub fn f_full(bundle: &KeyMapBundle, rho: &CMatrix) -> f64 {
        let dp = bundle.d_prime;
        let n = dp / 2;
        let mut total = 0.0;
        for x in 0..2 {
            let g = bundle.g_full(x, rho);
            let t = linalg::real_trace(&g);
            let sigma = &g * re(1.0 - bundle.epsilon) + linalg::identity(dp) * re(bundle.epsilon * t / dp as f64);
            let mut z = linalg::zeros(dp);
            for a in 0..2 {
                z.view_mut((a * n, a * n), (n, n)).copy_from(&sigma.view((a * n, a * n), (n, n)));
            }
            let floor = |v: f64| if v > 0.0 { v.log2() } else { 0.0 };
            let log_s = linalg::hermitian_function(&sigma, floor);
            let log_z = linalg::hermitian_function(&z, floor);
            total += linalg::trace_product(&sigma, &(log_s - log_z));
        }
        total
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{max_abs, random};
    use crate::protocol::{BypassParams, SpNoiseModel, WcpModel};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sp_bundle(eta_t: f64, eps: f64) -> KeyMapBundle {
        let s = Scenario::sp_matched(&SpNoiseModel::table_one(), BypassParams::new(0.5, eta_t).unwrap())
            .unwrap()
            .with_epsilon(eps);
        KeyMapBundle::new(&s).unwrap()
    }

    #[test]
    fn zeta_values() {
        assert!((zeta_eps(1e-8, 40).unwrap() - 2.0757321495396732e-5).abs() < 1e-18);
        assert!((zeta_eps(1e-8, 120).unwrap() - 6.327824426753075e-5).abs() < 1e-17);
        assert_eq!(zeta_eps(0.0, 40).unwrap(), 0.0);
        assert!(zeta_eps(1e-14, 40).unwrap() < 1e-10);
        assert!(zeta_eps(0.5, 40).is_err());
    }

    #[test]
    fn dimensions_and_isometry() {
        let b = sp_bundle(1.0, 1e-8);
        assert_eq!(b.d_prime, 40);
        let sum = b.v_full(0).adjoint() * b.v_full(0) + b.v_full(1).adjoint() * b.v_full(1);
        assert!(max_abs(&(sum - linalg::identity(20))) < 1e-15);

        let s = Scenario::wcp(&WcpModel::new(0.5, 0.02, 0.5), BypassParams::new(0.9, 1.0).unwrap(), 0.0).unwrap();
        assert_eq!(KeyMapBundle::new(&s).unwrap().d_prime, 120);
    }

    #[test]
    fn p_squared_is_rotated_filter() {
        let s = Scenario::sp_matched(&SpNoiseModel::table_one(), BypassParams::none()).unwrap();
        let b = KeyMapBundle::new(&s).unwrap();
        let rotated = s.rotated_bob();
        let p0 = &b.maps[0].p;
        assert!(max_abs(&(p0 * p0 - rotated.basis_filter(0))) < 1e-14);
    }

    #[test]
    fn compressed_matches_full_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for eps in [0.0, 1e-8, 1e-3] {
            let b = sp_bundle(0.7, eps);
            for _ in 0..5 {
                let rho = random::density_matrix(20, 20, &mut rng);
                let fast = b.f_eps(&rho).unwrap().value;
                let slow = oracle::f_full(&b, &rho);
                assert!((fast - slow).abs() < 1e-11, "{fast} vs {slow}");
            }
        }
    }

    #[test]
    fn classical_key_gives_zero() {
        // A state diagonal in Alice's register with Bob's photon in a Z eigenstate is Z-fixed.
        let b = sp_bundle(1.0, 1e-8);
        let mut rho = linalg::zeros(20);
        rho[(3, 3)] = re(0.5);
        rho[(5 + 4, 5 + 4)] = re(0.5);
        let f = b.f_eps(&rho).unwrap();
        assert!(f.value.abs() < 1e-10);
        assert!(f.value > -1e-12);
    }

    #[test]
    fn honest_state_gives_sifting_bit() {
        let s = Scenario::sp_matched(&SpNoiseModel::table_one(), BypassParams::none()).unwrap();
        let b = KeyMapBundle::new(&s).unwrap().with_epsilon(0.0).unwrap();
        let psi = protocol::sp_source(0.5).unwrap();
        // With eta_AE = eta_T = 1 the source replacement U1 and U2 only flip signs on F.
        let f = b.f_eps(&linalg::projector(&psi)).unwrap();
        assert!((f.value - 0.5).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let b = sp_bundle(0.8, 1e-6);
        for _ in 0..5 {
            let rho = random::density_matrix(20, 20, &mut rng);
            let g = b.grad_f_eps(&rho).unwrap();
            let mut delta = random::hermitian(20, &mut rng);
            let tr = linalg::real_trace(&delta) / 20.0;
            for i in 0..20 {
                delta[(i, i)] -= re(tr);
            }
            let t = 1e-5;
            let fp = b.f_eps(&(&rho + &delta * re(t))).unwrap().value;
            let fm = b.f_eps(&(&rho - &delta * re(t))).unwrap().value;
            let fd = (fp - fm) / (2.0 * t);
            let an = linalg::trace_product(&delta, &g);
            assert!((fd - an).abs() <= 1e-6 * an.abs().max(1e-3), "{fd} vs {an}");
        }
    }

    #[test]
    fn convex_along_segments() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let b = sp_bundle(0.6, 1e-8);
        for _ in 0..10 {
            let r = random::density_matrix(20, 3, &mut rng);
            let s = random::density_matrix(20, 3, &mut rng);
            let mid = (&r + &s) * re(0.5);
            let fr = b.f_eps(&r).unwrap().value;
            let fs = b.f_eps(&s).unwrap().value;
            let fm = b.f_eps(&mid).unwrap().value;
            assert!(fm <= 0.5 * (fr + fs) + 1e-9);
            assert!(fr >= 0.0 && fs >= 0.0);
            let g = b.grad_f_eps(&r).unwrap();
            assert!(fs >= fr + linalg::trace_product(&(&s - &r), &g) - 1e-9);
        }
    }

    #[test]
    fn agrees_with_explicit_attack_entropy() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let bob = protocol::sp_povm(0.5, 0.9, 0.7).unwrap();
        for (eta_ae, eta_t) in [(1.0, 1.0), (0.5, 0.8), (0.3, 0.4)] {
            let bypass = BypassParams::new(eta_ae, eta_t).unwrap();
            let basis = crate::fock::SubspaceBasis::enumerate(1);
            let u2 = crate::fock::beam_splitter(&basis, eta_t, crate::fock::BeamSplitterConvention::U2).unwrap();
            let b = KeyMapBundle::from_parts(&bob, &u2, 0.0).unwrap();
            let mut attacks = vec![protocol::ExplicitAttack::identity(), protocol::ExplicitAttack::intercept_resend_z()];
            attacks.extend((0..3).map(|_| protocol::ExplicitAttack::random(3, &mut rng)));
            for attack in attacks {
                let report = protocol::simulate_explicit_attack(&attack, 0.5, bypass, &bob).unwrap();
                let f = b.f_eps(&report.rho_prime).unwrap().value;
                assert!((f - report.pass_entropy).abs() < 1e-8, "{f} vs {}", report.pass_entropy);
            }
        }
    }

    #[test]
    fn rejects_wrong_dimension() {
        let b = sp_bundle(1.0, 1e-8);
        assert_eq!(
            b.f_eps(&linalg::zeros(5)).unwrap_err(),
            KeyRateError::Dimension { expected: 20, found: 5 }
        );
    }
}
