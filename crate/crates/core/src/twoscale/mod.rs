//! The two-scale approximant `w_eps`, its residual fields, and numerical
//! checks of the exact identities they satisfy.

pub mod residual;
pub mod sampler;
pub mod state;

pub use residual::{
    check_weak_identity, duality_pairing, energy_bound, flux_antisymmetry, residual_fields, test_functions,
    DualityReport, EnergyBound, PointResidual, ResidualFields, WeakIdentityReport,
};
pub use sampler::{sample_periodic, sample_periodic_at_scale, PackedCell};
pub use state::{build_w, w_norms, TwoScaleState, Variant, WNorms};

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::cell::{CellData, CellOptions};
    use crate::coeff::{parse_expr, preset, CellGrid, CoefficientSet, Scope};
    use crate::domain::{triangulate, PolygonDomain};
    use crate::fem::{assemble, solve, BcKind, BoundaryData, Coefficients, FemFunction, Load, ProblemData, SolveOptions};

    struct Pair {
        cell: CellData,
        domain: PolygonDomain,
        ue: FemFunction,
        u0: FemFunction,
    }

    fn pair(c: &CoefficientSet, eps: f64, h: f64, bc: BcKind) -> Pair {
        let domain = PolygonDomain::preset("square").unwrap();
        let cell = CellData::compute(c, CellGrid::new(64, 2).unwrap(), CellOptions::default()).unwrap();
        let mesh = Arc::new(triangulate(&domain, h).unwrap());
        let f = parse_expr("1+x1*x2", Scope::physical(2)).unwrap();
        let data = match bc {
            BcKind::Dirichlet => {
                let g = BoundaryData::piecewise_linear(&domain, vec![vec![0.0], vec![1.0], vec![0.5], vec![-0.5]]).unwrap();
                ProblemData::dirichlet(Load::Expr(vec![f]), g, eps)
            }
            BcKind::Neumann => {
                let h = BoundaryData::piecewise_constant(&domain, vec![vec![1.0], vec![-0.5], vec![0.25], vec![2.0]]).unwrap();
                ProblemData::neumann(Load::Expr(vec![f]), h, eps)
            }
        };
        let opts = SolveOptions {
            tol: 1e-12,
            ..Default::default()
        };
        let se = assemble(Coefficients::Periodic(c), mesh.clone(), &data, false).unwrap();
        let hom = Coefficients::Constant {
            layout: c.layout,
            values: &cell.hats,
            lambda: c.lambda,
        };
        let s0 = assemble(hom, mesh, &data, false).unwrap();
        let (ue, _) = solve(&se, opts).unwrap();
        let (u0, _) = solve(&s0, opts).unwrap();
        Pair { cell, domain, ue, u0 }
    }

    const EDGE: Variant = Variant::SHALLOW;

    #[test]
    fn variant_labels_round_trip() {
        for v in [Variant::S_ONCE, Variant::S_TWICE, Variant::ADJOINT_TWICE, Variant::SHALLOW, Variant::UNCUT] {
            assert_eq!(Variant::parse(&v.label()).unwrap(), v);
        }
        assert_eq!(Variant::parse("S2-psi2.5").unwrap().cutoff, Some(2.5));
        for bad in ["S3-psi4", "S1-psi0", "S1", "T1-psi4", "S1-phi4"] {
            assert!(Variant::parse(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn identity_coefficients_leave_nothing_to_correct() {
        let c = CoefficientSet::identity(2, 1, 1.0);
        let p = pair(&c, 0.25, 1.0 / 128.0, BcKind::Dirichlet);
        let st = build_w(&p.ue, &p.u0, &p.cell, &c, &p.domain, 0.25, EDGE).unwrap();
        for (w, (a, b)) in st.w.values.iter().zip(p.ue.values.iter().zip(&p.u0.values)) {
            assert!((w - (a - b)).abs() < 1e-14);
        }
        let (f, big_f) = residual_fields(&st).norms();
        assert!(f < 1e-12 && big_f < 1e-12, "{f} {big_f}");
        let tests = test_functions(p.ue.mesh.clone(), &p.domain, 1, 5, 1, true);
        let r = check_weak_identity(&st, &tests, BcKind::Dirichlet).unwrap();
        assert!(r.max_defect <= 1e-8, "{r:?}");
        let one = parse_expr("1", Scope::physical(2)).unwrap();
        let data = ProblemData::dirichlet(Load::Expr(vec![one.clone()]), BoundaryData::Zero, 0.25);
        let sa = assemble(Coefficients::Periodic(&c), p.ue.mesh.clone(), &data, true).unwrap();
        let (phi, _) = solve(&sa, SolveOptions { tol: 1e-12, ..Default::default() }).unwrap();
        let d = duality_pairing(&st, &[one], &phi).unwrap();
        // both sides are round-off, so the defect is measured against u_0
        assert!(d.lhs.abs() < 1e-12 && d.rhs.abs() < 1e-12, "{d:?}");
        assert!(d.defect <= 1e-5, "{d:?}");
    }

    #[test]
    fn exact_phi_cancels_the_difference_terms() {
        let c = preset("smooth-trig", 0).unwrap();
        let p = pair(&c, 0.25, 1.0 / 64.0, BcKind::Dirichlet);
        let mut st = build_w(&p.ue, &p.u0, &p.cell, &c, &p.domain, 0.25, Variant::UNCUT).unwrap();
        // phi equal to (u_0, grad u_0) at the evaluation point
        let u0 = &p.u0;
        let t = 1000;
        let l = [0.2, 0.3, 0.5];
        let x = crate::fem::function::bary_point(&u0.mesh.vertices(t), &l);
        let (v, g) = (u0.value_in(t, &l, 0), u0.gradient_in(t, 0));
        st.phi.data.chunks_mut(3).for_each(|o| o.copy_from_slice(&[v, g[0], g[1]]));
        let mut sc = st.scratch();
        st.residual_at(t, &l, x, &mut sc);
        let o = &sc.out;
        let eps = st.epsilon;
        for i in 0..2 {
            let want = o.k[i] - eps * (o.i[i] + o.j[i]);
            assert!((o.f[i] - want).abs() < 1e-12 * (1.0 + want.abs()));
        }
        assert!((o.big_f[0] + eps * (o.m[0] + o.n[0])).abs() < 1e-12);
    }

    #[test]
    fn weak_and_duality_identities_on_laminate() {
        let c = preset("laminate", 0).unwrap();
        let eps = 0.25;
        let p = pair(&c, eps, eps / 32.0, BcKind::Dirichlet);
        let st = build_w(&p.ue, &p.u0, &p.cell, &c, &p.domain, eps, EDGE).unwrap();
        assert_eq!(st.support_leak(), 0.0);
        let tests = test_functions(p.ue.mesh.clone(), &p.domain, 1, 8, 2, true);
        let r = check_weak_identity(&st, &tests, BcKind::Dirichlet).unwrap();
        assert!(r.max_defect <= 1e-2, "{r:?}");
        assert!(r.f_l2 > 0.1);
        let one = parse_expr("1", Scope::physical(2)).unwrap();
        let data = ProblemData::dirichlet(Load::Expr(vec![one.clone()]), BoundaryData::Zero, eps);
        let sa = assemble(Coefficients::Periodic(&c), p.ue.mesh.clone(), &data, true).unwrap();
        let (phi, _) = solve(&sa, SolveOptions { tol: 1e-12, ..Default::default() }).unwrap();
        let d = duality_pairing(&st, &[one], &phi).unwrap();
        assert!(d.defect <= 1e-2, "{d:?}");
        assert!(d.lhs.abs() > 1e-4);
        assert!(flux_antisymmetry(&st, &tests[0]) < 1e-12);
        // a non-vanishing adjoint field is refused
        assert!(duality_pairing(&st, &[parse_expr("1", Scope::physical(2)).unwrap()], &p.ue).is_err());
    }

    #[test]
    fn neumann_identity_needs_the_boundary_flux() {
        let c = preset("smooth-trig", 0).unwrap();
        let eps = 0.25;
        let p = pair(&c, eps, eps / 32.0, BcKind::Neumann);
        let st = build_w(&p.ue, &p.u0, &p.cell, &c, &p.domain, eps, Variant::UNCUT).unwrap();
        let tests = test_functions(p.ue.mesh.clone(), &p.domain, 1, 6, 3, false);
        let r = check_weak_identity(&st, &tests, BcKind::Neumann).unwrap();
        assert!(r.max_defect <= 1e-3, "{r:?}");
        assert!(check_weak_identity(&st, &tests, BcKind::Dirichlet).is_err());
    }

    #[test]
    fn corrector_reduces_the_gradient_error() {
        let c = preset("laminate", 0).unwrap();
        let eps = 1.0 / 16.0;
        let p = pair(&c, eps, eps / 16.0, BcKind::Dirichlet);
        let st = build_w(&p.ue, &p.u0, &p.cell, &c, &p.domain, eps, Variant::UNCUT).unwrap();
        let n = w_norms(&st).unwrap();
        assert!(2.0 * n.h1 < n.h1_plain, "{n:?}");
        // a cutoff leaves the boundary layer uncorrected
        let st = build_w(&p.ue, &p.u0, &p.cell, &c, &p.domain, eps, EDGE).unwrap();
        let cut = w_norms(&st).unwrap();
        assert!(n.h1 < cut.h1 && cut.h1 < 0.6 * cut.h1_plain, "{cut:?}");
        let e = energy_bound(&st, cut.h1);
        assert!(e.constant > 0.0 && e.constant < 1e3);
        // the canonical fields stay inside their layers
        for v in [Variant::S_ONCE, Variant::S_TWICE] {
            let st = build_w(&p.ue, &p.u0, &p.cell, &c, &p.domain, eps, v).unwrap();
            assert_eq!(st.support_leak(), 0.0, "{}", v.label());
            assert!(st.phi.max_abs() > 0.1);
        }
    }

    #[test]
    fn underresolved_or_mismatched_inputs_are_refused() {
        let c = preset("laminate", 0).unwrap();
        let p = pair(&c, 0.25, 1.0 / 16.0, BcKind::Dirichlet);
        assert!(build_w(&p.ue, &p.u0, &p.cell, &c, &p.domain, 0.1, EDGE).is_err());
        let other = FemFunction::zeros(Arc::new(triangulate(&p.domain, 1.0 / 8.0).unwrap()), 1);
        assert!(build_w(&p.ue, &other, &p.cell, &c, &p.domain, 0.25, EDGE).is_err());
    }
}
