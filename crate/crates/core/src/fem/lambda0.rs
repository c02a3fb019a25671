//! Sufficient size of the zeroth-order shift `lambda` for coercivity.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::assemble::{assemble_matrix, Coefficients};
use crate::coeff::{CellGrid, CoefficientSet};
use crate::domain::{triangulate, PolygonDomain};
use crate::error::Result;
use crate::linalg::krylov::dot;
use crate::linalg::sparse::Csr;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lambda0Report {
    /// Returned bound (after any doubling).
    pub lambda0: f64,
    /// `kappa^2 / mu + kappa` from the observed constants.
    pub analytic: f64,
    pub mu: f64,
    pub kappa: f64,
    /// Smallest `B[u, u] / |u|_{H^1}^2` over the random fields at `lambda0`.
    pub min_rayleigh: f64,
    pub doublings: usize,
}

const RAYLEIGH_FLOOR: f64 = 1e-6;
const SAMPLES: usize = 100;

fn quadratic(k: &Csr, u: &[f64]) -> f64 {
    let mut y = vec![0.0; u.len()];
    k.matvec(u, &mut y);
    dot(u, &y)
}

/// Smallest Rayleigh quotient `B[u, u] / |u|_{H^1}^2` of `coeffs` (with its
/// own `lambda`) over `SAMPLES` seeded random P1 fields.
pub fn min_rayleigh_quotient(coeffs: &CoefficientSet, seed: u64) -> Result<f64> {
    let d = PolygonDomain::preset("square")?;
    let mesh = triangulate(&d, 1.0 / 16.0)?;
    let eps = 0.25;
    let k = assemble_matrix(Coefficients::Periodic(coeffs), &mesh, eps)?;
    let h1 = CoefficientSet::identity(2, coeffs.m(), 1.0);
    let g = assemble_matrix(Coefficients::Periodic(&h1), &mesh, eps)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::INFINITY;
    let mut u = vec![0.0; k.n_rows];
    for _ in 0..SAMPLES {
        u.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
        worst = worst.min(quadratic(&k, &u) / quadratic(&g, &u));
    }
    Ok(worst)
}

/// Absorbs the first-order terms by Cauchy's inequality.
pub fn analytic_lambda0(mu: f64, kappa: f64) -> f64 {
    kappa * kappa / mu + kappa
}

/// `lambda0 = kappa^2 / mu + kappa`, confirmed on random fields and doubled
/// until the check passes.
pub fn estimate_lambda0(coeffs: &CoefficientSet, seed: u64) -> Result<Lambda0Report> {
    let rep = coeffs.validate(CellGrid::new(64, coeffs.dim())?, true)?;
    let (mu, kappa) = (rep.mu_observed, rep.kappa_observed);
    let analytic = analytic_lambda0(mu, kappa);
    let mut lambda0 = analytic;
    let mut doublings = 0;
    loop {
        let mut c = coeffs.clone();
        c.lambda = lambda0;
        let q = min_rayleigh_quotient(&c, seed)?;
        if q >= RAYLEIGH_FLOOR || doublings >= 30 {
            return Ok(Lambda0Report {
                lambda0,
                analytic,
                mu,
                kappa,
                min_rayleigh: q,
                doublings,
            });
        }
        lambda0 = if lambda0 > 0.0 { 2.0 * lambda0 } else { 1.0 };
        doublings += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff::preset;

    #[test]
    fn formula() {
        assert_eq!(analytic_lambda0(1.0, 1.0), 2.0);
        assert_eq!(analytic_lambda0(0.5, 0.0), 0.0);
    }

    #[test]
    fn pure_divergence_form_needs_no_shift() {
        let c = preset("laminate", 0).unwrap();
        let r = estimate_lambda0(&c, 7).unwrap();
        assert_eq!(r.lambda0, 0.0);
        assert!(r.min_rayleigh > RAYLEIGH_FLOOR);
    }

    #[test]
    fn smooth_trig_bound_is_coercive() {
        let c = preset("smooth-trig", 0).unwrap();
        let r = estimate_lambda0(&c, 7).unwrap();
        assert!((r.analytic - (r.kappa * r.kappa / r.mu + r.kappa)).abs() < 1e-15);
        assert!(r.min_rayleigh >= RAYLEIGH_FLOOR);
        assert_eq!(r.doublings, 0);
    }
}
