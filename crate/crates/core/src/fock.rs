//! Truncated bosonic Fock spaces for the four modes `B_H, B_V, F_H, F_V`.
//!
//! Basis vectors are occupation-number kets ordered by total photon number and,
//! inside one photon layer, lexicographically with larger `B_H` counts first. For
//! one photon this reproduces the ordering `{vac, 1_BH, 1_BV, 1_FH, 1_FV}`.
//!
//! Linear-optical unitaries (beam splitters, polarisation rotations) are built
//! layer by layer from the image of each creation-operator monomial, so they are
//! exact inside any truncation closed under photon number.

use std::collections::HashMap;

use thiserror::Error;

use crate::linalg::{self, re, CMatrix, CVector, C64};

#[derive(Debug, Error, PartialEq)]
pub enum FockError {
    #[error("requested {requested} photons but the basis is truncated at {max}")]
    Truncation { requested: u32, max: u32 },
    #[error("transmissivity {0} outside [0, 1]")]
    Transmissivity(f64),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("operator is not Hermitian (defect {0:e})")]
    NotHermitian(f64),
    #[error("occupation {0:?} is not in the basis")]
    MissingState([u32; 4]),
}

pub type Result<T> = std::result::Result<T, FockError>;

/// Photon counts in `B_H, B_V, F_H, F_V`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ModeOccupation {
    pub bh: u32,
    pub bv: u32,
    pub fh: u32,
    pub fv: u32,
}

impl ModeOccupation {
    pub const VACUUM: Self = Self::new(0, 0, 0, 0);

    pub const fn new(bh: u32, bv: u32, fh: u32, fv: u32) -> Self {
        Self { bh, bv, fh, fv }
    }

    pub fn from_array(n: [u32; 4]) -> Self {
        Self::new(n[0], n[1], n[2], n[3])
    }

    pub fn as_array(&self) -> [u32; 4] {
        [self.bh, self.bv, self.fh, self.fv]
    }

    pub fn total(&self) -> u32 {
        self.bh + self.bv + self.fh + self.fv
    }

    pub fn b_photons(&self) -> u32 {
        self.bh + self.bv
    }

    pub fn f_photons(&self) -> u32 {
        self.fh + self.fv
    }

    pub fn b_part(&self) -> (u32, u32) {
        (self.bh, self.bv)
    }

    pub fn f_part(&self) -> (u32, u32) {
        (self.fh, self.fv)
    }

    fn canonical_key(&self) -> (u32, std::cmp::Reverse<[u32; 4]>) {
        (self.total(), std::cmp::Reverse(self.as_array()))
    }
}

/// Ordered occupation-number basis of a photon-number-closed subspace.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceBasis {
    states: Vec<ModeOccupation>,
    index: HashMap<ModeOccupation, usize>,
    max_total_photons: u32,
}

impl SubspaceBasis {
    /// All four-mode occupations with at most `max_total_photons` photons.
    pub fn enumerate(max_total_photons: u32) -> Self {
        let n = max_total_photons;
        let mut states = Vec::new();
        for bh in 0..=n {
            for bv in 0..=n - bh {
                for fh in 0..=n - bh - bv {
                    for fv in 0..=n - bh - bv - fh {
                        states.push(ModeOccupation::new(bh, bv, fh, fv));
                    }
                }
            }
        }
        Self::from_occupations(states)
    }

    /// Canonically ordered basis over an arbitrary set of occupations.
    pub fn from_occupations(mut states: Vec<ModeOccupation>) -> Self {
        states.sort_by_key(|s| s.canonical_key());
        states.dedup();
        let index = states.iter().enumerate().map(|(i, s)| (*s, i)).collect();
        let max_total_photons = states.iter().map(|s| s.total()).max().unwrap_or(0);
        Self { states, index, max_total_photons }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[ModeOccupation] {
        &self.states
    }

    pub fn state(&self, i: usize) -> ModeOccupation {
        self.states[i]
    }

    pub fn index_of(&self, occ: &ModeOccupation) -> Option<usize> {
        self.index.get(occ).copied()
    }

    pub fn max_total_photons(&self) -> u32 {
        self.max_total_photons
    }

    /// Indices of the states carrying exactly `n` photons in total.
    pub fn layer(&self, n: u32) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.states[i].total() == n).collect()
    }

    fn ket(&self, occ: ModeOccupation) -> Result<CVector> {
        let i = self.index_of(&occ).ok_or(FockError::MissingState(occ.as_array()))?;
        let mut v = CVector::zeros(self.len());
        v[i] = re(1.0);
        Ok(v)
    }
}

/// Dense Hermitian matrix checked against [`linalg::HERMITIAN_TOL`] at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianOperator {
    matrix: CMatrix,
}

impl HermitianOperator {
    pub fn new(matrix: CMatrix) -> Result<Self> {
        Self::with_tolerance(matrix, linalg::HERMITIAN_TOL)
    }

    pub fn with_tolerance(matrix: CMatrix, tol: f64) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(FockError::Dimension { expected: matrix.nrows(), found: matrix.ncols() });
        }
        let defect = linalg::hermitian_defect(&matrix);
        if defect > tol {
            return Err(FockError::NotHermitian(defect));
        }
        Ok(Self { matrix: linalg::hermitize(&matrix) })
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

/// Photon-number selector for [`photon_projector`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhotonCount {
    Exactly(u32),
    Any,
}

impl PhotonCount {
    fn admits(self, n: u32) -> bool {
        match self {
            PhotonCount::Exactly(k) => k == n,
            PhotonCount::Any => true,
        }
    }
}

/// `Pi_B^{k_B} (x) Pi_F^{k_F}` restricted to the basis.
pub fn photon_projector(
    basis: &SubspaceBasis,
    k_b: PhotonCount,
    k_f: PhotonCount,
) -> Result<HermitianOperator> {
    for k in [k_b, k_f] {
        if let PhotonCount::Exactly(n) = k {
            if n > basis.max_total_photons() {
                return Err(FockError::Truncation { requested: n, max: basis.max_total_photons() });
            }
        }
    }
    let diag: Vec<f64> = basis
        .states()
        .iter()
        .map(|s| if k_b.admits(s.b_photons()) && k_f.admits(s.f_photons()) { 1.0 } else { 0.0 })
        .collect();
    HermitianOperator::new(linalg::from_real_diagonal(&diag))
}

/// Projector onto the `n`-photon layer `Omega_n`.
pub fn layer_projector(basis: &SubspaceBasis, n: u32) -> CMatrix {
    let diag: Vec<f64> =
        basis.states().iter().map(|s| if s.total() == n { 1.0 } else { 0.0 }).collect();
    linalg::from_real_diagonal(&diag)
}

/// Creation-operator polynomial: monomial exponents to coefficient.
type Polynomial = HashMap<[u32; 4], C64>;

fn multiply_linear(poly: &Polynomial, weights: &[C64; 4]) -> Polynomial {
    let mut out = Polynomial::new();
    for (mono, &coef) in poly {
        for (mode, &w) in weights.iter().enumerate() {
            if w == C64::new(0.0, 0.0) {
                continue;
            }
            let mut m = *mono;
            m[mode] += 1;
            *out.entry(m).or_insert(C64::new(0.0, 0.0)) += coef * w;
        }
    }
    out
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

fn polynomial_to_state(poly: &Polynomial, basis: &SubspaceBasis, norm: f64) -> Result<CVector> {
    let mut v = CVector::zeros(basis.len());
    for (mono, &coef) in poly {
        if coef.norm() == 0.0 {
            continue;
        }
        let occ = ModeOccupation::from_array(*mono);
        let i = basis.index_of(&occ).ok_or(FockError::MissingState(*mono))?;
        let amp = mono.iter().map(|&k| factorial(k)).product::<f64>().sqrt();
        v[i] += coef * re(amp / norm);
    }
    Ok(v)
}

/// Unitary induced on the truncated Fock space by the creation-operator map
/// `a_i^dagger -> sum_j transfer[i][j] a_j^dagger` (mode order `B_H, B_V, F_H, F_V`).
pub fn linear_optics_unitary(basis: &SubspaceBasis, transfer: &[[C64; 4]; 4]) -> Result<CMatrix> {
    let mut u = linalg::zeros(basis.len());
    for (col, occ) in basis.states().iter().enumerate() {
        let mut poly = Polynomial::new();
        poly.insert([0; 4], re(1.0));
        let counts = occ.as_array();
        for (mode, &k) in counts.iter().enumerate() {
            for _ in 0..k {
                poly = multiply_linear(&poly, &transfer[mode]);
            }
        }
        let norm = counts.iter().map(|&k| factorial(k)).product::<f64>().sqrt();
        let image = polynomial_to_state(&poly, basis, norm)?;
        u.set_column(col, &image);
    }
    Ok(u)
}

/// Which of the two interferometer beam splitters to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BeamSplitterConvention {
    /// `b -> sqrt(eta) b + sqrt(1-eta) f`, `f -> sqrt(1-eta) b - sqrt(eta) f`.
    U1,
    /// `b -> -sqrt(eta) b + sqrt(1-eta) f`, `f -> sqrt(1-eta) b + sqrt(eta) f`.
    U2,
}

/// Beam splitter of transmissivity `eta` acting identically on both polarisations.
pub fn beam_splitter(
    basis: &SubspaceBasis,
    eta: f64,
    convention: BeamSplitterConvention,
) -> Result<CMatrix> {
    if !(0.0..=1.0).contains(&eta) || eta.is_nan() {
        return Err(FockError::Transmissivity(eta));
    }
    let t = eta.sqrt();
    let r = (1.0 - eta).sqrt();
    let (bb, bf, fb, ff) = match convention {
        BeamSplitterConvention::U1 => (t, r, r, -t),
        BeamSplitterConvention::U2 => (-t, r, r, t),
    };
    let z = re(0.0);
    let transfer = [
        [re(bb), z, re(bf), z],
        [z, re(bb), z, re(bf)],
        [re(fb), z, re(ff), z],
        [z, re(fb), z, re(ff)],
    ];
    linear_optics_unitary(basis, &transfer)
}

/// Rotation taking H/V-labelled Fock kets of mode B to the diagonal basis:
/// `b_H^dagger -> b_+^dagger`, `b_V^dagger -> b_-^dagger`. Mode F is untouched.
pub fn diagonal_basis_rotation(basis: &SubspaceBasis) -> Result<CMatrix> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let z = re(0.0);
    let transfer = [
        [re(s), re(s), z, z],
        [re(s), re(-s), z, z],
        [z, z, re(1.0), z],
        [z, z, z, re(1.0)],
    ];
    linear_optics_unitary(basis, &transfer)
}

/// BB84 polarisation labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Polarization {
    H,
    V,
    Plus,
    Minus,
}

impl Polarization {
    /// `(a, x)` to polarisation: `(0,0)=H, (1,0)=V, (0,1)=+, (1,1)=-`.
    pub fn from_key(a: usize, x: usize) -> Self {
        match (a, x) {
            (0, 0) => Polarization::H,
            (1, 0) => Polarization::V,
            (0, 1) => Polarization::Plus,
            _ => Polarization::Minus,
        }
    }

    /// Amplitudes on `(H, V)`.
    pub fn amplitudes(self) -> [f64; 2] {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        match self {
            Polarization::H => [1.0, 0.0],
            Polarization::V => [0.0, 1.0],
            Polarization::Plus => [s, s],
            Polarization::Minus => [s, -s],
        }
    }
}

/// `(sqrt(eta) b_s^dagger + sqrt(1-eta) f_s^dagger)^n / sqrt(n!) |0>`.
pub fn photon_block_state(
    n: u32,
    pol: Polarization,
    eta_ae: f64,
    basis: &SubspaceBasis,
) -> Result<CVector> {
    if !(0.0..=1.0).contains(&eta_ae) || eta_ae.is_nan() {
        return Err(FockError::Transmissivity(eta_ae));
    }
    if n > basis.max_total_photons() {
        return Err(FockError::Truncation { requested: n, max: basis.max_total_photons() });
    }
    let [h, v] = pol.amplitudes();
    let (t, r) = (eta_ae.sqrt(), (1.0 - eta_ae).sqrt());
    let weights = [re(t * h), re(t * v), re(r * h), re(r * v)];
    let mut poly = Polynomial::new();
    poly.insert([0; 4], re(1.0));
    for _ in 0..n {
        poly = multiply_linear(&poly, &weights);
    }
    polynomial_to_state(&poly, basis, factorial(n).sqrt())
}

/// Ket `|occ>` in the basis.
pub fn basis_ket(basis: &SubspaceBasis, occ: ModeOccupation) -> Result<CVector> {
    basis.ket(occ)
}

/// F-mode occupations reachable inside a subspace, in canonical order.
#[derive(Debug, Clone, PartialEq)]
pub struct FSupport {
    states: Vec<(u32, u32)>,
    index: HashMap<(u32, u32), usize>,
}

impl FSupport {
    pub fn of(basis: &SubspaceBasis) -> Self {
        let mut states: Vec<(u32, u32)> = basis.states().iter().map(|s| s.f_part()).collect();
        states.sort_by_key(|&(h, v)| (h + v, std::cmp::Reverse((h, v))));
        states.dedup();
        let index = states.iter().enumerate().map(|(i, s)| (*s, i)).collect();
        Self { states, index }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[(u32, u32)] {
        &self.states
    }

    pub fn index_of(&self, f: (u32, u32)) -> Option<usize> {
        self.index.get(&f).copied()
    }
}

/// The finite kernel `F_{s,s'}` of the partial trace over B: all pairs of basis
/// states sharing their B occupation, with the F indices they map to.
#[derive(Debug, Clone)]
pub struct PartialTraceKernel {
    pub support: FSupport,
    /// `(s, s', f(s), f(s'))`
    pub pairs: Vec<(usize, usize, usize, usize)>,
    pub basis_dim: usize,
}

impl PartialTraceKernel {
    pub fn new(basis: &SubspaceBasis) -> Self {
        let support = FSupport::of(basis);
        let mut pairs = Vec::new();
        for (s, a) in basis.states().iter().enumerate() {
            for (t, b) in basis.states().iter().enumerate() {
                if a.b_part() == b.b_part() {
                    let fs = support.index_of(a.f_part()).expect("support built from basis");
                    let ft = support.index_of(b.f_part()).expect("support built from basis");
                    pairs.push((s, t, fs, ft));
                }
            }
        }
        Self { support, pairs, basis_dim: basis.len() }
    }

    /// `tr_B` of an operator on `C^{a_dim} (x) span(basis)`.
    pub fn apply(&self, op: &CMatrix, a_dim: usize) -> Result<CMatrix> {
        let n = self.basis_dim;
        if op.nrows() != a_dim * n || op.ncols() != a_dim * n {
            return Err(FockError::Dimension { expected: a_dim * n, found: op.nrows() });
        }
        let m = self.support.len();
        let mut out = linalg::zeros(a_dim * m);
        for i in 0..a_dim {
            for j in 0..a_dim {
                for &(s, t, fs, ft) in &self.pairs {
                    out[(i * m + fs, j * m + ft)] += op[(i * n + s, j * n + t)];
                }
            }
        }
        Ok(out)
    }

    /// Hilbert–Schmidt adjoint of [`Self::apply`].
    pub fn adjoint(&self, y: &CMatrix, a_dim: usize) -> Result<CMatrix> {
        let m = self.support.len();
        if y.nrows() != a_dim * m {
            return Err(FockError::Dimension { expected: a_dim * m, found: y.nrows() });
        }
        let n = self.basis_dim;
        let mut out = linalg::zeros(a_dim * n);
        for i in 0..a_dim {
            for j in 0..a_dim {
                for &(s, t, fs, ft) in &self.pairs {
                    out[(i * n + s, j * n + t)] = y[(i * m + fs, j * m + ft)];
                }
            }
        }
        Ok(out)
    }
}

/// `tr_B` of an operator on `C^{a_dim} (x) span(basis)`; returns the reduced
/// operator on `C^{a_dim} (x) span(F-support)` together with that support.
pub fn partial_trace_b(
    op: &CMatrix,
    a_dim: usize,
    basis: &SubspaceBasis,
) -> Result<(CMatrix, FSupport)> {
    let kernel = PartialTraceKernel::new(basis);
    let out = kernel.apply(op, a_dim)?;
    Ok((out, kernel.support))
}

/// Reference `tr_B`: embeds the operator into the full tensor product of the four
/// modes (each truncated at the basis photon cap), traces B out there and reads off
/// the F support. Slow; used to validate [`PartialTraceKernel`].
pub fn partial_trace_b_by_embedding(op: &CMatrix, a_dim: usize, basis: &SubspaceBasis) -> Result<CMatrix> {
    let n = basis.len();
    if op.nrows() != a_dim * n || op.ncols() != a_dim * n {
        return Err(FockError::Dimension { expected: a_dim * n, found: op.nrows() });
    }
    let k = basis.max_total_photons() as usize + 1;
    let pair = |x: u32, y: u32| x as usize * k + y as usize;
    let (db, df) = (k * k, k * k);
    let full = |a: usize, s: usize| {
        let o = basis.state(s);
        (a * db + pair(o.bh, o.bv)) * df + pair(o.fh, o.fv)
    };
    let dim = a_dim * db * df;
    let mut big = linalg::zeros(dim);
    for i in 0..a_dim {
        for j in 0..a_dim {
            for s in 0..n {
                for t in 0..n {
                    big[(full(i, s), full(j, t))] = op[(i * n + s, j * n + t)];
                }
            }
        }
    }
    let mut reduced = linalg::zeros(a_dim * df);
    for i in 0..a_dim {
        for j in 0..a_dim {
            for b in 0..db {
                for f in 0..df {
                    for g in 0..df {
                        reduced[(i * df + f, j * df + g)] += big[((i * db + b) * df + f, (j * db + b) * df + g)];
                    }
                }
            }
        }
    }
    let support = FSupport::of(basis);
    let idx: Vec<usize> = (0..a_dim)
        .flat_map(|a| support.states().iter().map(move |&(h, v)| a * df + pair(h, v)))
        .collect();
    Ok(reduced.select_rows(&idx).select_columns(&idx))
}

/// Sum of absolute eigenvalues of a Hermitian operator.
pub fn trace_norm(op: &CMatrix) -> Result<f64> {
    let defect = linalg::hermitian_defect(op);
    if defect > linalg::COMPOSED_TOL {
        return Err(FockError::NotHermitian(defect));
    }
    Ok(linalg::schatten_one(op))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{identity, max_abs, random};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn binom(n: u32, k: u32) -> usize {
        (0..k).fold(1usize, |acc, i| acc * (n - i) as usize / (i + 1) as usize)
    }

    #[test]
    fn basis_sizes() {
        assert_eq!(SubspaceBasis::enumerate(0).len(), 1);
        let b1 = SubspaceBasis::enumerate(1);
        assert_eq!(b1.len(), 5);
        assert_eq!(
            b1.states(),
            &[
                ModeOccupation::VACUUM,
                ModeOccupation::new(1, 0, 0, 0),
                ModeOccupation::new(0, 1, 0, 0),
                ModeOccupation::new(0, 0, 1, 0),
                ModeOccupation::new(0, 0, 0, 1),
            ]
        );
        assert_eq!(SubspaceBasis::enumerate(2).len(), 15);
        for n in 0..6 {
            let expected: usize = (0..=n).map(|k| binom(k + 3, 3)).sum();
            assert_eq!(SubspaceBasis::enumerate(n).len(), expected);
        }
    }

    #[test]
    fn projectors() {
        let b1 = SubspaceBasis::enumerate(1);
        let vac = photon_projector(&b1, PhotonCount::Exactly(0), PhotonCount::Exactly(0)).unwrap();
        assert_eq!(vac.matrix()[(0, 0)], re(1.0));
        assert!((linalg::real_trace(vac.matrix()) - 1.0).abs() < 1e-15);

        let mut sum = vac.into_matrix();
        for k in 0..=1 {
            sum += photon_projector(&b1, PhotonCount::Exactly(1 - k), PhotonCount::Exactly(k))
                .unwrap()
                .matrix();
        }
        assert!(max_abs(&(sum - identity(5))) < 1e-15);

        let b2 = SubspaceBasis::enumerate(2);
        let p11 = photon_projector(&b2, PhotonCount::Exactly(1), PhotonCount::Exactly(1)).unwrap();
        assert_eq!(linalg::real_trace(p11.matrix()).round() as usize, 4);

        assert_eq!(
            photon_projector(&b1, PhotonCount::Exactly(2), PhotonCount::Any).unwrap_err(),
            FockError::Truncation { requested: 2, max: 1 }
        );
    }

    #[test]
    fn u1_at_full_transmission() {
        let b1 = SubspaceBasis::enumerate(1);
        let u = beam_splitter(&b1, 1.0, BeamSplitterConvention::U1).unwrap();
        let expected = linalg::from_real_diagonal(&[1.0, 1.0, 1.0, -1.0, -1.0]);
        assert!(max_abs(&(u - expected)) < 1e-15);
    }

    #[test]
    fn u1_balanced_column() {
        let b1 = SubspaceBasis::enumerate(1);
        let u = beam_splitter(&b1, 0.5, BeamSplitterConvention::U1).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let col: Vec<f64> = u.column(1).iter().map(|z| z.re).collect();
        let expected = [0.0, s, 0.0, s, 0.0];
        for (a, b) in col.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn u2_two_photon_diagonal() {
        let b2 = SubspaceBasis::enumerate(2);
        let idx = b2.index_of(&ModeOccupation::new(2, 0, 0, 0)).unwrap();
        for eta in [0.0, 0.2, 0.65, 1.0] {
            let u = beam_splitter(&b2, eta, BeamSplitterConvention::U2).unwrap();
            assert!((u[(idx, idx)] - re(eta)).norm() < 1e-14);
            assert!(max_abs(&(&u * u.adjoint() - identity(15))) < 1e-12);
        }
    }

    #[test]
    fn beam_splitters_unitary_and_number_preserving() {
        for max in 1..=3 {
            let basis = SubspaceBasis::enumerate(max);
            let n = basis.len();
            for eta in [0.0, 0.3, 0.7, 1.0] {
                for conv in [BeamSplitterConvention::U1, BeamSplitterConvention::U2] {
                    let u = beam_splitter(&basis, eta, conv).unwrap();
                    assert!(max_abs(&(u.adjoint() * &u - identity(n))) <= 1e-10);
                    for layer in 0..=max {
                        let om = layer_projector(&basis, layer);
                        assert!(max_abs(&(&u * &om - &om * &u)) <= 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn rejects_bad_transmissivity() {
        let b1 = SubspaceBasis::enumerate(1);
        assert!(matches!(
            beam_splitter(&b1, 1.5, BeamSplitterConvention::U1),
            Err(FockError::Transmissivity(_))
        ));
    }

    #[test]
    fn block_states() {
        let b2 = SubspaceBasis::enumerate(2);
        let vac = photon_block_state(0, Polarization::H, 0.3, &b2).unwrap();
        assert_eq!(vac[0], re(1.0));

        let eta: f64 = 0.3;
        let one = photon_block_state(1, Polarization::H, eta, &b2).unwrap();
        let bh = b2.index_of(&ModeOccupation::new(1, 0, 0, 0)).unwrap();
        let fh = b2.index_of(&ModeOccupation::new(0, 0, 1, 0)).unwrap();
        assert!((one[bh] - re(eta.sqrt())).norm() < 1e-15);
        assert!((one[fh] - re((1.0 - eta).sqrt())).norm() < 1e-15);

        let two = photon_block_state(2, Polarization::H, 0.5, &b2).unwrap();
        let i20 = b2.index_of(&ModeOccupation::new(2, 0, 0, 0)).unwrap();
        let i11 = b2.index_of(&ModeOccupation::new(1, 0, 1, 0)).unwrap();
        let i02 = b2.index_of(&ModeOccupation::new(0, 0, 2, 0)).unwrap();
        assert!((two[i20] - re(0.5)).norm() < 1e-15);
        assert!((two[i11] - re(2f64.sqrt() / 2.0)).norm() < 1e-15);
        assert!((two[i02] - re(0.5)).norm() < 1e-15);
        assert!((two.norm() - 1.0).abs() < 1e-15);

        assert!(photon_block_state(3, Polarization::V, 0.5, &b2).is_err());
    }

    #[test]
    fn block_state_matches_beam_splitter_image() {
        // U1 applied to (b_s^dagger)^n |0>/sqrt(n!) gives the block state.
        let b2 = SubspaceBasis::enumerate(2);
        let eta = 0.37;
        let u1 = beam_splitter(&b2, eta, BeamSplitterConvention::U1).unwrap();
        let rot = diagonal_basis_rotation(&b2).unwrap();
        let input = rot * basis_ket(&b2, ModeOccupation::new(2, 0, 0, 0)).unwrap();
        let expected = photon_block_state(2, Polarization::Plus, eta, &b2).unwrap();
        assert!(((u1 * input) - expected).norm() < 1e-14);
    }

    #[test]
    fn trace_norms() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let rho = random::density_matrix(5, 3, &mut rng);
        assert!((trace_norm(&rho).unwrap() - 1.0).abs() < 1e-12);
        assert!((trace_norm(&linalg::from_real_diagonal(&[0.5, -0.5])).unwrap() - 1.0).abs() < 1e-15);
        for _ in 0..10 {
            let a = random::pure_state(6, &mut rng);
            let b = random::pure_state(6, &mut rng);
            let c = a.dotc(&b).norm();
            let diff = linalg::projector(&a) - linalg::projector(&b);
            let expected = 2.0 * (1.0 - c * c).sqrt();
            assert!((trace_norm(&diff).unwrap() - expected).abs() < 1e-10);
        }
        let mut bad = linalg::zeros(2);
        bad[(0, 1)] = re(1.0);
        assert!(matches!(trace_norm(&bad), Err(FockError::NotHermitian(_))));
    }

    #[test]
    fn partial_trace_of_bypass_photon() {
        let b1 = SubspaceBasis::enumerate(1);
        let ket = basis_ket(&b1, ModeOccupation::new(0, 0, 1, 0)).unwrap();
        let a = linalg::from_real_diagonal(&[0.25; 4]);
        let rho = linalg::kron(&a, &linalg::projector(&ket));
        let (out, support) = partial_trace_b(&rho, 4, &b1).unwrap();
        assert_eq!(support.states(), &[(0, 0), (1, 0), (0, 1)]);
        let f = support.index_of((1, 0)).unwrap();
        let mut expected_f = linalg::zeros(3);
        expected_f[(f, f)] = re(1.0);
        assert!(max_abs(&(out - linalg::kron(&a, &expected_f))) < 1e-15);
    }

    #[test]
    fn kernel_matches_embedding() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for cap in [1, 2] {
            let basis = SubspaceBasis::enumerate(cap);
            for a_dim in [1, 4] {
                let rho = random::density_matrix(a_dim * basis.len(), 3, &mut rng);
                let (fast, _) = partial_trace_b(&rho, a_dim, &basis).unwrap();
                let slow = partial_trace_b_by_embedding(&rho, a_dim, &basis).unwrap();
                assert!(max_abs(&(fast - slow)) < 1e-14);
            }
        }
    }

    #[test]
    fn partial_trace_dimension_check() {
        let b1 = SubspaceBasis::enumerate(1);
        assert!(partial_trace_b(&linalg::zeros(7), 4, &b1).is_err());
    }
}
