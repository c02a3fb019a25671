//! Discrete adjoint, Green and compatibility identities.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::assemble::{assemble_load, assemble_matrix, eval_at, Coefficients, ProblemData};
use super::function::FemFunction;
use super::norms::{integrate, Region, Weight};
use crate::coeff::CoeffValues;
use crate::domain::TriMesh;
use crate::error::Result;
use crate::linalg::krylov::dot;

fn rel(a: f64, b: f64) -> f64 {
    let s = a.abs().max(b.abs());
    if s == 0.0 {
        0.0
    } else {
        (a - b).abs() / s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjointReport {
    /// Largest `|K*_ij - K_ji|` relative to the largest entry.
    pub transpose_defect: f64,
    /// Largest relative defect of `<K u, v> = <u, K* v>` over random pairs
    /// vanishing on the boundary.
    pub pairing_defect: f64,
}

/// Compares the primal and adjoint matrices on `mesh`.
pub fn adjoint_identity(coeffs: Coefficients, adjoint: Coefficients, mesh: &TriMesh, epsilon: f64, seed: u64) -> Result<AdjointReport> {
    let k = assemble_matrix(coeffs, mesh, epsilon)?;
    let ks = assemble_matrix(adjoint, mesh, epsilon)?;
    let scale = k.vals.iter().fold(0.0f64, |s, v| s.max(v.abs()));
    let mut transpose_defect = 0.0f64;
    for i in 0..k.n_rows {
        let (cs, vs) = k.row(i);
        for (&c, &v) in cs.iter().zip(vs) {
            transpose_defect = transpose_defect.max((v - ks.get(c as usize, i)).abs());
        }
    }
    transpose_defect /= scale.max(f64::MIN_POSITIVE);
    let m = k.n_rows / mesh.node_count();
    let on_b = mesh.boundary_nodes();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairing_defect = 0.0f64;
    let (mut ku, mut ksv) = (vec![0.0; k.n_rows], vec![0.0; k.n_rows]);
    for _ in 0..10 {
        let mut draw = || -> Vec<f64> {
            (0..k.n_rows)
                .map(|i| if on_b[i / m] { 0.0 } else { rng.random_range(-1.0..1.0) })
                .collect()
        };
        let (u, v) = (draw(), draw());
        k.matvec(&u, &mut ku);
        ks.matvec(&v, &mut ksv);
        pairing_defect = pairing_defect.max(rel(dot(&ku, &v), dot(&u, &ksv)));
    }
    Ok(AdjointReport {
        transpose_defect,
        pairing_defect,
    })
}

/// Second Green identity for Neumann solutions `u` of `(data_u)` and `v` of
/// the adjoint problem `(data_v)`: `<F, v> + <h, v> = <Phi, u> + <eta, u>`.
pub fn green_defect(u: &FemFunction, data_u: &ProblemData, v: &FemFunction, data_v: &ProblemData) -> f64 {
    let lu = assemble_load(&u.mesh, u.m, data_u);
    let lv = assemble_load(&v.mesh, v.m, data_v);
    rel(dot(&lu, &v.values), dot(&lv, &u.values))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompatibilityReport {
    /// Per component: `int (B grad u + c u) + lambda int u`.
    pub lhs: Vec<f64>,
    /// Per component: `int F + <h, 1>`.
    pub rhs: Vec<f64>,
    /// Largest relative defect, normalized by the magnitude of the terms.
    pub defect: f64,
}

/// Tests the weak form of a Neumann solution with the constant function.
pub fn compatibility(coeffs: Coefficients, u: &FemFunction, data: &ProblemData) -> Result<CompatibilityReport> {
    let l = coeffs.layout();
    let m = l.m;
    let lambda = coeffs.lambda();
    let mesh = &u.mesh;
    let mut lhs = vec![0.0; m];
    let mut mag = vec![0.0; m];
    for al in 0..m {
        let term = |which: usize| {
            integrate(mesh, None, Region::All, Weight::One, |t, bl, x| {
                let mut cv = CoeffValues::zeros(l);
                eval_at(&coeffs, data.epsilon, x, &mut cv);
                let mut s = 0.0;
                for be in 0..m {
                    match which {
                        0 => {
                            let g = u.gradient_in(t, be);
                            for i in 0..l.dim {
                                s += cv.b[l.v(i, al, be)] * g[i];
                            }
                        }
                        _ => s += cv.c[l.c(al, be)] * u.value_in(t, bl, be),
                    }
                }
                if which == 1 {
                    s += lambda * u.value_in(t, bl, al);
                }
                s
            })
        };
        let (tb, tc) = (term(0)?, term(1)?);
        lhs[al] = tb + tc;
        mag[al] = tb.abs() + tc.abs();
    }
    let load = assemble_load(mesh, m, data);
    let mut rhs = vec![0.0; m];
    for (i, v) in load.iter().enumerate() {
        rhs[i % m] += v;
    }
    let mut defect = 0.0f64;
    for al in 0..m {
        let scale = (mag[al] + rhs[al].abs()).max(f64::MIN_POSITIVE);
        defect = defect.max((lhs[al] - rhs[al]).abs() / scale);
    }
    Ok(CompatibilityReport { lhs, rhs, defect })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::coeff::{parse_expr, preset, Scope};
    use crate::domain::{triangulate, PolygonDomain};
    use crate::fem::assemble::{assemble, BoundaryData, Load};
    use crate::fem::solve::{solve, SolveOptions};

    #[test]
    fn adjoint_identity_on_smooth_trig() {
        let mesh = triangulate(&PolygonDomain::preset("l-shape").unwrap(), 1.0 / 32.0).unwrap();
        let c = preset("smooth-trig", 0).unwrap();
        let cs = c.adjoint();
        let r = adjoint_identity(Coefficients::Periodic(&c), Coefficients::Periodic(&cs), &mesh, 0.125, 3).unwrap();
        assert!(r.transpose_defect <= 1e-12, "{r:?}");
        assert!(r.pairing_defect <= 1e-12, "{r:?}");
    }

    #[test]
    fn row_sums_reproduce_compatibility_lhs() {
        let mesh = Arc::new(triangulate(&PolygonDomain::preset("square").unwrap(), 1.0 / 32.0).unwrap());
        let c = preset("smooth-trig", 0).unwrap();
        let x = parse_expr("sin(3*x1)+x2", Scope::physical(2)).unwrap();
        let u = FemFunction::from_exprs(mesh.clone(), &[x]).unwrap();
        let k = assemble_matrix(Coefficients::Periodic(&c), &mesh, 0.125).unwrap();
        let mut ku = vec![0.0; k.n_rows];
        k.matvec(&u.values, &mut ku);
        let ones_ku: f64 = ku.iter().sum();
        let data = ProblemData::neumann(Load::Zero, BoundaryData::Zero, 0.125);
        let rep = compatibility(Coefficients::Periodic(&c), &u, &data).unwrap();
        assert!((ones_ku - rep.lhs[0]).abs() < 1e-12 * rep.lhs[0].abs().max(1.0));
    }

    #[test]
    fn neumann_green_and_compatibility() {
        let d = PolygonDomain::preset("square").unwrap();
        let mesh = Arc::new(triangulate(&d, 1.0 / 64.0).unwrap());
        let c = preset("smooth-trig", 0).unwrap();
        let f = parse_expr("1+x1", Scope::physical(2)).unwrap();
        let phi = parse_expr("cos(x2)", Scope::physical(2)).unwrap();
        let h = BoundaryData::piecewise_constant(&d, vec![vec![1.0], vec![-0.5], vec![0.25], vec![2.0]]).unwrap();
        let eta = BoundaryData::piecewise_constant(&d, vec![vec![0.0], vec![1.0], vec![-1.0], vec![0.5]]).unwrap();
        let du = ProblemData::neumann(Load::Expr(vec![f]), h, 0.125);
        let dv = ProblemData::neumann(Load::Expr(vec![phi]), eta, 0.125);
        let opts = SolveOptions {
            tol: 1e-13,
            ..Default::default()
        };
        let su = assemble(Coefficients::Periodic(&c), mesh.clone(), &du, false).unwrap();
        let sv = assemble(Coefficients::Periodic(&c), mesh, &dv, true).unwrap();
        let (u, _) = solve(&su, opts).unwrap();
        let (v, _) = solve(&sv, opts).unwrap();
        assert!(green_defect(&u, &du, &v, &dv) <= 1e-10);
        let rep = compatibility(Coefficients::Periodic(&c), &u, &du).unwrap();
        assert!(rep.defect <= 1e-8, "{rep:?}");
    }
}
