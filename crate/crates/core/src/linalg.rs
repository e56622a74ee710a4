//! Dense complex linear-algebra helpers shared by every layer.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Hermiticity tolerance for freshly constructed inputs.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Hermiticity tolerance for composed products.
pub const COMPOSED_TOL: f64 = 1e-10;

#[inline]
pub fn re(x: f64) -> C64 {
    C64::new(x, 0.0)
}

pub fn zeros(n: usize) -> CMatrix {
    CMatrix::zeros(n, n)
}

pub fn zeros_rect(rows: usize, cols: usize) -> CMatrix {
    CMatrix::zeros(rows, cols)
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

pub fn from_real_diagonal(d: &[f64]) -> CMatrix {
    let mut m = zeros(d.len());
    for (i, &v) in d.iter().enumerate() {
        m[(i, i)] = re(v);
    }
    m
}

/// `|u><v|`
pub fn outer(u: &CVector, v: &CVector) -> CMatrix {
    u * v.adjoint()
}

pub fn projector(u: &CVector) -> CMatrix {
    outer(u, u)
}

/// Below this size the generic complex product is as fast as the split one.
const SPLIT_GEMM_MIN: usize = 12;

/// `A B`, computed from four real products for moderate sizes (the real kernel is
/// vectorised, the complex one is not).
pub fn matmul(a: &CMatrix, b: &CMatrix) -> CMatrix {
    if a.nrows().min(a.ncols()).min(b.ncols()) < SPLIT_GEMM_MIN {
        return a * b;
    }
    let (ar, ai) = (a.map(|z| z.re), a.map(|z| z.im));
    let (br, bi) = (b.map(|z| z.re), b.map(|z| z.im));
    let re_part = &ar * &br - &ai * &bi;
    let im_part = &ar * &bi + &ai * &br;
    CMatrix::from_fn(a.nrows(), b.ncols(), |i, j| C64::new(re_part[(i, j)], im_part[(i, j)]))
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

/// `max |M - M^dagger|`
pub fn hermitian_defect(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

pub fn hermitize(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()).scale(0.5)
}

pub fn trace(m: &CMatrix) -> C64 {
    m.diagonal().iter().sum()
}

pub fn real_trace(m: &CMatrix) -> f64 {
    m.diagonal().iter().map(|z| z.re).sum()
}

/// Real part of `tr[A B]`; equals the Hilbert–Schmidt inner product for Hermitian `A`.
pub fn trace_product(a: &CMatrix, b: &CMatrix) -> f64 {
    let n = a.nrows();
    let mut acc = 0.0;
    for i in 0..n {
        for k in 0..n {
            let x = a[(i, k)];
            let y = b[(k, i)];
            acc += x.re * y.re - x.im * y.im;
        }
    }
    acc
}

/// Ascending eigenvalues with matching eigenvector columns.
pub fn eigh(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let eig = SymmetricEigen::new(hermitize(m));
    let n = m.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = zeros(n);
    for (new, &old) in order.iter().enumerate() {
        vectors.set_column(new, &eig.eigenvectors.column(old));
    }
    (values, vectors)
}

pub fn eigenvalues(m: &CMatrix) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let mut v: Vec<f64> = SymmetricEigen::new(hermitize(m)).eigenvalues.iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v
}

pub fn min_eigenvalue(m: &CMatrix) -> f64 {
    eigenvalues(m).first().copied().unwrap_or(0.0)
}

pub fn max_eigenvalue(m: &CMatrix) -> f64 {
    eigenvalues(m).last().copied().unwrap_or(0.0)
}

/// `U f(Λ) U^dagger` for Hermitian `m`.
pub fn hermitian_function(m: &CMatrix, f: impl Fn(f64) -> f64) -> CMatrix {
    let (vals, vecs) = eigh(m);
    let mut scaled = vecs.clone();
    for (j, &v) in vals.iter().enumerate() {
        let fv = f(v);
        scaled.column_mut(j).scale_mut(fv);
    }
    scaled * vecs.adjoint()
}

/// Square root of a PSD matrix; eigenvalues below `-tol` are rejected.
pub fn sqrt_psd(m: &CMatrix, tol: f64) -> Option<CMatrix> {
    if min_eigenvalue(m) < -tol {
        return None;
    }
    Some(hermitian_function(m, |x| x.max(0.0).sqrt()))
}

/// `sum |lambda_i|` for Hermitian input.
pub fn schatten_one(m: &CMatrix) -> f64 {
    eigenvalues(m).iter().map(|x| x.abs()).sum()
}

/// `-sum lambda log2 lambda` over the positive part of the spectrum.
pub fn entropy_bits(values: &[f64]) -> f64 {
    -values.iter().filter(|&&x| x > 0.0).map(|&x| x * x.log2()).sum::<f64>()
}

pub fn binary_entropy(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        0.0
    } else {
        -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
    }
}

/// Random-state generators used by tests, examples and the self-test.
pub mod random {
    use super::*;

    pub fn gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMatrix {
        CMatrix::from_fn(rows, cols, |_, _| {
            C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
        })
    }

    pub fn pure_state<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CVector {
        let v = CVector::from_fn(n, |_, _| {
            C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
        });
        let norm = v.norm();
        v / re(norm)
    }

    /// Ginibre-distributed density matrix of the given rank.
    pub fn density_matrix<R: Rng + ?Sized>(n: usize, rank: usize, rng: &mut R) -> CMatrix {
        let g = gaussian_matrix(n, rank.max(1), rng);
        let rho = &g * g.adjoint();
        let t = real_trace(&rho);
        hermitize(&(rho / re(t)))
    }

    pub fn hermitian<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMatrix {
        hermitize(&gaussian_matrix(n, n, rng))
    }

    /// Haar-ish unitary from the QR factorisation of a Ginibre matrix.
    pub fn unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMatrix {
        let g = gaussian_matrix(n, n, rng);
        let qr = g.qr();
        let (q, r) = (qr.q(), qr.r());
        let mut u = q;
        for j in 0..n {
            let d = r[(j, j)];
            let phase = if d.norm() > 0.0 { d / re(d.norm()) } else { re(1.0) };
            for i in 0..n {
                u[(i, j)] *= phase;
            }
        }
        u
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn function_of_matrix_reproduces_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let h = random::hermitian(6, &mut rng);
        let back = hermitian_function(&h, |x| x);
        assert!(max_abs(&(back - &h)) < 1e-12);
    }

    #[test]
    fn random_unitary_is_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let u = random::unitary(7, &mut rng);
        assert!(max_abs(&(u.adjoint() * &u - identity(7))) < 1e-12);
    }

    #[test]
    fn split_product_matches_complex_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random::gaussian_matrix(20, 17, &mut rng);
        let b = random::gaussian_matrix(17, 23, &mut rng);
        assert!(max_abs(&(matmul(&a, &b) - &a * &b)) < 1e-12);
    }

    #[test]
    fn trace_norm_of_signed_diagonal() {
        let m = from_real_diagonal(&[0.5, -0.5]);
        assert!((schatten_one(&m) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn binary_entropy_midpoint() {
        assert!((binary_entropy(0.5) - 1.0).abs() < 1e-15);
        assert_eq!(binary_entropy(0.0), 0.0);
    }
}
