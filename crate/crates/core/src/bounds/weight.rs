//! Weight outside the truncated space from double-click statistics.

use crate::fock::{ModeOccupation, SubspaceBasis};
use crate::linalg;
use crate::protocol::{self, poisson};

use super::{BoundsError, Result};

/// Smallest eigenvalue of the double-click operator on the `n`-photon layer of B:
/// `1/2 - 1/2 sqrt((2 p_z - 1)^2 + c 2^-n (p_z - p_z^2))`, `c = 8` (odd) or `16` (even).
pub fn lambda_min_dc(n: u32, p_z: f64) -> f64 {
    let c = if n % 2 == 1 { 8.0 } else { 16.0 };
    let inner = (2.0 * p_z - 1.0).powi(2) + c * 0.5f64.powi(n as i32) * (p_z - p_z * p_z);
    (0.5 - 0.5 * inner.sqrt()).max(0.0)
}

/// B-only basis of all states with `bh + bv = n` (or `<= n` when `cumulative`).
pub fn b_only_basis(n: u32, cumulative: bool) -> SubspaceBasis {
    let layers: Vec<u32> = if cumulative { (0..=n).collect() } else { vec![n] };
    let states = layers
        .into_iter()
        .flat_map(|k| (0..=k).rev().map(move |h| ModeOccupation::new(h, k - h, 0, 0)))
        .collect();
    SubspaceBasis::from_occupations(states)
}

/// The same eigenvalue by explicit diagonalisation.
pub fn lambda_min_dc_brute(n: u32, p_z: f64) -> Result<f64> {
    let basis = b_only_basis(n, false);
    let op = protocol::double_click_operator(&basis, p_z)?;
    Ok(linalg::min_eigenvalue(&op))
}

/// Poisson probability of more than `n` events.
pub fn poisson_tail(mean: f64, n: u32) -> f64 {
    let mut tail = 0.0;
    let mut k = n + 1;
    loop {
        let p = poisson(mean, k);
        tail += p;
        if p < 1e-18 * tail.max(1e-300) || k > n + 200 {
            break;
        }
        k += 1;
    }
    tail
}

/// Weight of the WCP F marginal beyond `n` photons (mean `mu (1 - eta_AE)`).
pub fn wcp_f_tail(mu: f64, eta_ae: f64, n: u32) -> f64 {
    poisson_tail(mu * (1.0 - eta_ae), n)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightReport {
    pub n: u32,
    pub p_z: f64,
    pub q_dc: f64,
    /// `lambda_min` of the `n+1`-photon layer.
    pub lambda: f64,
    pub w_b: f64,
    pub w_f: f64,
    /// `clamp(w_b + w_f, 0, 1)`
    pub w: f64,
}

/// `W <= q_dc / lambda_min^{N+1} + W_F`.
pub fn weight_bound(q_dc: f64, n: u32, p_z: f64, w_f: f64) -> Result<WeightReport> {
    if n <= 1 {
        return Err(BoundsError::TrivialWeight(n));
    }
    if !(0.0..=1.0).contains(&q_dc) || !(0.0..=1.0).contains(&w_f) || !(p_z > 0.0 && p_z < 1.0) {
        return Err(BoundsError::WeightInput { q_dc, p_z, w_f });
    }
    let lambda = lambda_min_dc(n + 1, p_z);
    let w_b = q_dc / lambda;
    Ok(WeightReport { n, p_z, q_dc, lambda, w_b, w_f, w: (w_b + w_f).clamp(0.0, 1.0) })
}
