//! Krylov solves of assembled systems.

use serde::{Deserialize, Serialize};

use super::assemble::AssembledSystem;
use super::function::FemFunction;
use crate::error::Result;
use crate::linalg::krylov::{bicgstab, pcg, KrylovOptions, SolveStats};
use crate::linalg::multigrid::{GridDofs, Multigrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preconditioner {
    Jacobi,
    Multigrid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub preconditioner: Preconditioner,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol: 1e-10,
            max_iter: 5000,
            preconditioner: Preconditioner::Multigrid,
        }
    }
}

/// Free lattice points of the system, if its mesh came from a lattice.
fn grid_dofs(sys: &AssembledSystem) -> Option<GridDofs> {
    let lat = sys.mesh.lattice.as_ref()?;
    let dof = lat
        .node_of
        .iter()
        .map(|&n| if n == u32::MAX { u32::MAX } else { sys.free[n as usize] })
        .collect();
    Some(GridDofs {
        nx: lat.nx,
        ny: lat.ny,
        dof,
        cell_in: lat.cell_index.iter().map(|&c| c != u32::MAX).collect(),
        count: sys.free_count,
    })
}

/// Solves `sys`, CG when symmetric and BiCGStab otherwise.
pub fn solve(sys: &AssembledSystem, opts: SolveOptions) -> Result<(FemFunction, SolveStats)> {
    let a = &sys.matrix;
    let mut x = vec![0.0; a.n_rows];
    let kopts = KrylovOptions {
        tol: opts.tol,
        max_iter: opts.max_iter,
    };
    let apply = |u: &[f64], o: &mut [f64]| a.matvec(u, o);
    let grid = match opts.preconditioner {
        Preconditioner::Multigrid => grid_dofs(sys),
        Preconditioner::Jacobi => None,
    };
    let stats = if let Some(g) = grid {
        let mg = Multigrid::new(a.clone(), &g, sys.m);
        let pre = |r: &[f64], z: &mut [f64]| mg.apply(r, z);
        if sys.symmetric {
            pcg(apply, pre, &sys.rhs, &mut x, kopts)?
        } else {
            bicgstab(apply, pre, &sys.rhs, &mut x, kopts)?
        }
    } else {
        let dinv: Vec<f64> = a.diagonal().iter().map(|d| if *d != 0.0 { 1.0 / d } else { 1.0 }).collect();
        let pre = |r: &[f64], z: &mut [f64]| {
            for ((zi, ri), di) in z.iter_mut().zip(r).zip(&dinv) {
                *zi = ri * di;
            }
        };
        if sys.symmetric {
            pcg(apply, pre, &sys.rhs, &mut x, kopts)?
        } else {
            bicgstab(apply, pre, &sys.rhs, &mut x, kopts)?
        }
    };
    Ok((sys.expand(&x), stats))
}

/// Relative residual `|b - A x| / |b|` of a reduced solution vector.
pub fn relative_residual(sys: &AssembledSystem, u: &FemFunction) -> f64 {
    let m = sys.m;
    let mut x = vec![0.0; sys.matrix.n_rows];
    for (node, &f) in sys.free.iter().enumerate() {
        if f != u32::MAX {
            x[f as usize * m..(f as usize + 1) * m].copy_from_slice(&u.values[node * m..(node + 1) * m]);
        }
    }
    let mut r = vec![0.0; x.len()];
    sys.matrix.matvec(&x, &mut r);
    let (mut num, mut den) = (0.0, 0.0);
    for (ri, bi) in r.iter().zip(&sys.rhs) {
        num += (bi - ri) * (bi - ri);
        den += bi * bi;
    }
    if den == 0.0 {
        num.sqrt()
    } else {
        (num / den).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;
    use std::sync::Arc;

    use super::*;
    use crate::coeff::{parse_expr, CoeffValues, CoefficientSet, Layout, Scope};
    use crate::domain::{triangulate, PolygonDomain};
    use crate::fem::assemble::{assemble, BoundaryData, Coefficients, Load, ProblemData};

    /// `-Lap u + u = 1` on the unit square with zero trace, by double sine series.
    fn series_center(terms: usize) -> f64 {
        let mut s = 0.0;
        for a in (1..terms).step_by(2) {
            for b in (1..terms).step_by(2) {
                let (a, b) = (a as f64, b as f64);
                let sa = (a * PI / 2.0).sin();
                let sb = (b * PI / 2.0).sin();
                s += 16.0 / (PI * PI * a * b * (PI * PI * (a * a + b * b) + 1.0)) * sa * sb;
            }
        }
        s
    }

    fn identity_values() -> (Layout, CoeffValues) {
        let l = Layout { dim: 2, m: 1 };
        let mut v = CoeffValues::zeros(l);
        v.a[l.a(0, 0, 0, 0)] = 1.0;
        v.a[l.a(1, 1, 0, 0)] = 1.0;
        (l, v)
    }

    #[test]
    fn series_oracle_at_center() {
        // frozen reference: series truncated below index 4000 (tail < 1e-11)
        let reference = series_center(4000);
        assert!((reference - 0.069_808_57).abs() < 1e-7, "{reference}");
        let mesh = Arc::new(triangulate(&PolygonDomain::preset("square").unwrap(), 1.0 / 128.0).unwrap());
        let (l, v) = identity_values();
        let one = parse_expr("1", Scope::physical(2)).unwrap();
        let data = ProblemData::dirichlet(Load::Expr(vec![one]), BoundaryData::Zero, 0.0);
        let c = Coefficients::Constant {
            layout: l,
            values: &v,
            lambda: 1.0,
        };
        let sys = assemble(c, mesh, &data, false).unwrap();
        assert!(sys.symmetric);
        let (u, st) = solve(&sys, SolveOptions::default()).unwrap();
        assert!(st.iterations < 40);
        assert!(relative_residual(&sys, &u) <= 1e-10);
        let mid = u.eval([0.5, 0.5]).unwrap()[0];
        assert!((mid - reference).abs() < 1e-3, "{mid} vs {reference}");
    }

    #[test]
    fn zero_data_gives_zero() {
        let mesh = Arc::new(triangulate(&PolygonDomain::preset("l-shape").unwrap(), 1.0 / 16.0).unwrap());
        let id = CoefficientSet::identity(2, 1, 1.0);
        let data = ProblemData::neumann(Load::Zero, BoundaryData::Zero, 0.25);
        let sys = assemble(Coefficients::Periodic(&id), mesh, &data, false).unwrap();
        let (u, _) = solve(&sys, SolveOptions::default()).unwrap();
        assert!(u.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn constant_periodic_matches_constant_solve() {
        let mesh = Arc::new(triangulate(&PolygonDomain::preset("square").unwrap(), 1.0 / 32.0).unwrap());
        let id = CoefficientSet::identity(2, 1, 1.0);
        let (l, v) = identity_values();
        let f = parse_expr("1+x1*x2", Scope::physical(2)).unwrap();
        let g = parse_expr("x1-x2", Scope::physical(2)).unwrap();
        let data = ProblemData::dirichlet(Load::Expr(vec![f.clone()]), BoundaryData::Expr(vec![g.clone()]), 0.125);
        let sys = assemble(Coefficients::Periodic(&id), mesh.clone(), &data, false).unwrap();
        let (ue, _) = solve(&sys, SolveOptions::default()).unwrap();
        let data0 = ProblemData::dirichlet(Load::Expr(vec![f]), BoundaryData::Expr(vec![g]), 0.0);
        let c = Coefficients::Constant {
            layout: l,
            values: &v,
            lambda: 1.0,
        };
        let sys0 = assemble(c, mesh, &data0, false).unwrap();
        let (u0, _) = solve(&sys0, SolveOptions::default()).unwrap();
        let diff = ue.values.iter().zip(&u0.values).fold(0.0f64, |s, (a, b)| s.max((a - b).abs()));
        assert!(diff < 1e-8, "{diff}");
    }

    #[test]
    fn jacobi_and_multigrid_agree() {
        let mesh = Arc::new(triangulate(&PolygonDomain::preset("l-shape").unwrap(), 1.0 / 32.0).unwrap());
        let c = crate::coeff::preset("smooth-trig", 0).unwrap();
        let one = parse_expr("1", Scope::physical(2)).unwrap();
        let data = ProblemData::dirichlet(Load::Expr(vec![one]), BoundaryData::Zero, 0.25);
        let sys = assemble(Coefficients::Periodic(&c), mesh, &data, false).unwrap();
        let (a, sa) = solve(&sys, SolveOptions::default()).unwrap();
        let (b, _) = solve(
            &sys,
            SolveOptions {
                preconditioner: Preconditioner::Jacobi,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(sa.iterations < 30);
        let diff = a.values.iter().zip(&b.values).fold(0.0f64, |s, (x, y)| s.max((x - y).abs()));
        assert!(diff < 1e-8);
    }

    #[test]
    fn galerkin_orders_on_single_mode() {
        // u = sin(pi x) sin(pi y) solves -Lap u + u = (2 pi^2 + 1) u
        use crate::fem::norms::{integrate, Region, Weight};
        let (l, v) = identity_values();
        let f = parse_expr("(2*pi^2+1)*sin(pi*x1)*sin(pi*x2)", Scope::physical(2)).unwrap();
        let mut errs = vec![];
        for h in [1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0] {
            let mesh = Arc::new(triangulate(&PolygonDomain::preset("square").unwrap(), h).unwrap());
            let data = ProblemData::dirichlet(Load::Expr(vec![f.clone()]), BoundaryData::Zero, 0.0);
            let c = Coefficients::Constant {
                layout: l,
                values: &v,
                lambda: 1.0,
            };
            let (u, _) = solve(&assemble(c, mesh.clone(), &data, false).unwrap(), SolveOptions::default()).unwrap();
            let exact = |x: [f64; 2]| {
                let (sx, sy) = ((PI * x[0]).sin(), (PI * x[1]).sin());
                let (cx, cy) = ((PI * x[0]).cos(), (PI * x[1]).cos());
                (sx * sy, [PI * cx * sy, PI * sx * cy])
            };
            let l2 = integrate(&mesh, None, Region::All, Weight::One, |t, b, x| {
                (u.value_in(t, b, 0) - exact(x).0).powi(2)
            })
            .unwrap();
            let semi = integrate(&mesh, None, Region::All, Weight::One, |t, _, x| {
                let g = u.gradient_in(t, 0);
                let e = exact(x).1;
                (g[0] - e[0]).powi(2) + (g[1] - e[1]).powi(2)
            })
            .unwrap();
            errs.push((l2.sqrt(), (l2 + semi).sqrt()));
        }
        for w in errs.windows(2) {
            let (r2, r1) = (w[0].0 / w[1].0, w[0].1 / w[1].1);
            assert!((r1 / 2.0 - 1.0).abs() < 0.2, "H1 ratio {r1}");
            assert!((r2 / 4.0 - 1.0).abs() < 0.2, "L2 ratio {r2}");
        }
    }
}
