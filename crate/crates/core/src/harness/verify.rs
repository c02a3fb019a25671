//! The verification suite: every module's invariant checks behind one call.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::config::Config;
use crate::cell::{CellData, CellOptions};
use crate::coeff::{parse_expr, CoefficientSet, Scope};
use crate::domain::{triangulate, PolygonDomain};
use crate::error::Result;
use crate::fem::identities::{adjoint_identity, compatibility, green_defect};
use crate::fem::{
    assemble, check_resolution, estimate_lambda0, measure, solve, BcKind, BoundaryData, Coefficients, Load,
    ProblemData, Region, Side, SolveOptions, Weight,
};
use crate::smoothing::{default_factors, verify_weighted_bounds};
use crate::twoscale::{build_w, check_weak_identity, duality_pairing, flux_antisymmetry, test_functions, Variant};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Skipped,
}

/// `value <= limit` (or `value >= limit` when `at_least`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    pub at_least: bool,
    pub pass: bool,
}

impl Check {
    fn at_most(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Check {
            name: name.into(),
            value,
            limit,
            at_least: false,
            pass: value <= limit,
        }
    }

    fn at_least(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Check {
            name: name.into(),
            value,
            limit,
            at_least: true,
            pass: value >= limit,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub name: String,
    pub status: Status,
    pub checks: Vec<Check>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub preset: String,
    pub domain: String,
    pub stages: Vec<Stage>,
    pub pass: bool,
}

impl SuiteReport {
    pub fn stage(&self, name: &str) -> Option<&Stage> {
        self.stages.iter().find(|s| s.name == name)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn finish(name: &str, r: Result<Vec<Check>>) -> Stage {
    match r {
        Ok(checks) => Stage {
            name: name.into(),
            status: if checks.iter().all(|c| c.pass) { Status::Pass } else { Status::Fail },
            checks,
            error: None,
        },
        Err(e) => Stage {
            name: name.into(),
            status: Status::Fail,
            checks: vec![],
            error: Some(e.to_string()),
        },
    }
}

fn skipped(name: &str, why: &str) -> Stage {
    Stage {
        name: name.into(),
        status: Status::Skipped,
        checks: vec![],
        error: Some(why.into()),
    }
}

const STAGES: [&str; 7] = ["coeff", "plan", "cell", "identities", "smoothing", "two-scale", "layer-geometry"];

/// Runs the suite for the coefficients, domain and first plan row of
/// `config`. A coefficient failure skips everything after it; a plan or
/// cell failure skips the two-scale stage.
pub fn verify_all(config: &Config) -> SuiteReport {
    let plan = &config.plan;
    let mut stages = vec![];
    let coeffs = config.coefficients();
    let domain = plan.domain();
    let coeff_stage = finish(
        "coeff",
        coeffs.as_ref().map_err(clone_err).and_then(|c| {
            let rep = c.validate(config.cell_grid(c.dim())?, true)?;
            Ok(vec![Check::at_least("mu_observed", rep.mu_observed, f64::MIN_POSITIVE)])
        }),
    );
    let ok = coeff_stage.status == Status::Pass;
    stages.push(coeff_stage);
    let (Ok(c), true) = (coeffs, ok) else {
        stages.extend(STAGES[1..].iter().map(|s| skipped(s, "coefficient validation failed")));
        return SuiteReport {
            preset: plan.preset.clone(),
            domain: plan.domain.clone(),
            pass: false,
            stages,
        };
    };
    let plan_stage = finish("plan", plan_checks(config, &c));
    let plan_ok = plan_stage.status == Status::Pass;
    stages.push(plan_stage);
    let cell = config
        .cell_grid(c.dim())
        .and_then(|g| CellData::compute(&c, g, CellOptions::default()));
    stages.push(finish("cell", cell.as_ref().map_err(clone_err).map(cell_checks)));
    match &domain {
        Ok(d) => {
            stages.push(finish("identities", identity_checks(&c, d, plan.eps[0], plan.seed)));
            stages.push(finish("smoothing", smoothing_checks(d)));
            match (&cell, plan_ok) {
                (Ok(cell), true) => stages.push(finish("two-scale", two_scale_checks(config, &c, cell, d))),
                _ => stages.push(skipped("two-scale", "needs a valid plan and cell data")),
            }
            stages.push(finish("layer-geometry", layer_geometry_checks(d)));
        }
        Err(e) => {
            for s in &STAGES[3..] {
                stages.push(finish(s, Err(clone_err(e))));
            }
        }
    }
    SuiteReport {
        preset: plan.preset.clone(),
        domain: plan.domain.clone(),
        pass: stages.iter().all(|s| s.status == Status::Pass),
        stages,
    }
}

fn clone_err(e: &crate::error::Error) -> crate::error::Error {
    crate::error::Error::Invalid(e.to_string())
}

fn plan_checks(config: &Config, c: &CoefficientSet) -> Result<Vec<Check>> {
    let plan = &config.plan;
    plan.validate()?;
    for (id, &eps) in plan.eps.iter().enumerate() {
        let h = plan.mesh_size(eps);
        check_resolution(eps, h).map_err(|e| crate::error::Error::Config(format!("plan row {id} (eps = {eps}, h = {h}): {e}")))?;
    }
    let l0 = estimate_lambda0(c, plan.seed)?;
    Ok(vec![Check::at_least("lambda - lambda0", c.lambda - l0.lambda0, 0.0)])
}

fn cell_checks(cell: &CellData) -> Vec<Check> {
    let d = &cell.diagnostics;
    let l = cell.layout;
    let adj = cell.hats.adjoint(l);
    let scale = cell.hats.a.iter().chain(&cell.hats.v).chain(&cell.hats.b).chain(&cell.hats.c).fold(1.0f64, |s, v| s.max(v.abs()));
    let pairs = adj.a.iter().zip(&cell.hats_star.a)
        .chain(adj.v.iter().zip(&cell.hats_star.v))
        .chain(adj.b.iter().zip(&cell.hats_star.b))
        .chain(adj.c.iter().zip(&cell.hats_star.c));
    let adjoint_gap = pairs.fold(0.0f64, |s, (a, b)| s.max((a - b).abs())) / scale;
    vec![
        Check::at_most("mean of chi, theta, Pi", d.max_mean_potentials, 1e-10),
        Check::at_most("mean of b, W", d.max_mean_fluxes, 1e-10),
        Check::at_most("E antisymmetry", d.e_antisymmetry, 0.0),
        Check::at_most("|d_j E_jik - b_ik| relative", d.e_residual, 1e-8),
        Check::at_most("div b relative", d.b_divergence, 1e-8),
        Check::at_most("adjoint homogenization consistency", adjoint_gap, 1e-9),
        Check::at_least("A_hat ellipticity", d.a_hat_min_eig, f64::MIN_POSITIVE),
    ]
}

fn identity_checks(c: &CoefficientSet, domain: &PolygonDomain, eps: f64, seed: u64) -> Result<Vec<Check>> {
    let h = 1.0 / 64.0;
    let eps = eps.max(2.0 * h);
    let mesh = Arc::new(triangulate(domain, h)?);
    let cs = c.adjoint();
    let adj = adjoint_identity(Coefficients::Periodic(c), Coefficients::Periodic(&cs), &mesh, eps, seed)?;
    let m = c.m();
    let x = Scope::physical(2);
    let load = |src: &str| -> Result<Load> { Ok(Load::Expr(vec![parse_expr(src, x)?; m])) };
    let per_edge = |pattern: [f64; 4]| -> Vec<Vec<f64>> {
        (0..domain.vertices.len()).map(|k| vec![pattern[k % 4]; m]).collect()
    };
    let du = ProblemData::neumann(load("1+x1")?, BoundaryData::piecewise_constant(domain, per_edge([1.0, -0.5, 0.25, 2.0]))?, eps);
    let dv = ProblemData::neumann(load("cos(x2)")?, BoundaryData::piecewise_constant(domain, per_edge([0.0, 1.0, -1.0, 0.5]))?, eps);
    let opts = SolveOptions {
        tol: 1e-13,
        ..Default::default()
    };
    let (u, _) = solve(&assemble(Coefficients::Periodic(c), mesh.clone(), &du, false)?, opts)?;
    let (v, _) = solve(&assemble(Coefficients::Periodic(c), mesh, &dv, true)?, opts)?;
    let compat = compatibility(Coefficients::Periodic(c), &u, &du)?;
    Ok(vec![
        Check::at_most("adjoint transpose defect", adj.transpose_defect, 1e-10),
        Check::at_most("adjoint pairing defect", adj.pairing_defect, 1e-10),
        Check::at_most("Green identity defect", green_defect(&u, &du, &v, &dv), 1e-10),
        Check::at_most("Neumann compatibility defect", compat.defect, 1e-8),
    ])
}

fn smoothing_checks(domain: &PolygonDomain) -> Result<Vec<Check>> {
    let factors = default_factors();
    let reports = [1.0 / 16.0, 1.0 / 32.0]
        .iter()
        .filter(|&&e| 2.0 * e < domain.r00)
        .map(|&e| verify_weighted_bounds(domain, e, &factors))
        .collect::<Result<Vec<_>>>()?;
    let mut checks = vec![];
    for r in &reports {
        let e = r.epsilon;
        checks.push(Check::at_most(format!("S(delta)/delta at eps={e}"), r.max_ratio_delta, 2.0 + 1e-6));
        checks.push(Check::at_most(format!("S(1/delta)*delta at eps={e}"), r.max_ratio_inv_delta, 2.0 + 1e-6));
    }
    if let [a, b] = &reports[..] {
        let mut drift = (a.commutator_constant / b.commutator_constant).ln().abs();
        for (p, q) in a.products.iter().zip(&b.products) {
            drift = drift.max((p.constant / q.constant).ln().abs());
        }
        checks.push(Check::at_most("constant drift under eps halving (log)", drift, 2f64.ln()));
    }
    Ok(checks)
}

fn two_scale_checks(config: &Config, c: &CoefficientSet, cell: &CellData, domain: &PolygonDomain) -> Result<Vec<Check>> {
    let plan = &config.plan;
    let eps = plan.eps[0];
    let h = plan.mesh_size(eps);
    let mesh = Arc::new(triangulate(domain, h)?);
    let m = c.m();
    let data = plan.problem(domain, m, eps)?;
    let opts = SolveOptions {
        tol: 1e-12,
        ..Default::default()
    };
    let (ue, _) = solve(&assemble(Coefficients::Periodic(c), mesh.clone(), &data, false)?, opts)?;
    let hom = Coefficients::Constant {
        layout: c.layout,
        values: &cell.hats,
        lambda: c.lambda,
    };
    let (u0, _) = solve(&assemble(hom, mesh.clone(), &data, false)?, opts)?;
    let dirichlet = plan.bc == BcKind::Dirichlet;
    // Dirichlet needs phi to vanish near the boundary; Neumann carries the flux term
    let variant = if dirichlet { Variant::SHALLOW } else { Variant::UNCUT };
    let st = build_w(&ue, &u0, cell, c, domain, eps, variant)?;
    let tests = test_functions(mesh.clone(), domain, m, 10, plan.seed, dirichlet);
    let weak = check_weak_identity(&st, &tests, plan.bc)?;
    let mut checks = vec![
        Check::at_most("weak identity defect", weak.max_defect, 1e-2),
        Check::at_most("flux antisymmetry", flux_antisymmetry(&st, &tests[0]), 1e-12),
        Check::at_most("support leak", st.support_leak(), 0.0),
    ];
    if dirichlet {
        let one = parse_expr("1", Scope::physical(2))?;
        let adata = ProblemData::dirichlet(Load::Expr(vec![one.clone(); m]), BoundaryData::Zero, eps);
        let (phi, _) = solve(&assemble(Coefficients::Periodic(c), mesh, &adata, true)?, opts)?;
        let dual = duality_pairing(&st, &vec![one; m], &phi)?;
        checks.push(Check::at_most("duality defect", dual.defect, 1e-2));
    }
    Ok(checks)
}

/// `|Omega \ Sigma_t|` of a polygon for small `t`: the perimeter strip, minus
/// the overlaps `t^2 cot(theta/2)` at convex corners, plus the sectors
/// `t^2 (theta - pi) / 2` at reflex ones.
pub fn layer_area(domain: &PolygonDomain, t: f64) -> f64 {
    let v = &domain.vertices;
    let n = v.len();
    let mut corners = 0.0;
    for k in 0..n {
        let (a, b, c) = (v[(k + n - 1) % n], v[k], v[(k + 1) % n]);
        let (e1, e2) = ([b[0] - a[0], b[1] - a[1]], [c[0] - b[0], c[1] - b[1]]);
        let turn = (e1[0] * e2[1] - e1[1] * e2[0]).atan2(e1[0] * e2[0] + e1[1] * e2[1]);
        let theta = PI - turn;
        corners += if turn >= 0.0 { -1.0 / (0.5 * theta).tan() } else { 0.5 * (theta - PI) };
    }
    domain.perimeter() * t + corners * t * t
}

fn layer_geometry_checks(domain: &PolygonDomain) -> Result<Vec<Check>> {
    let mesh = triangulate(domain, 1.0 / 128.0)?;
    let mut checks = vec![];
    for t in [1.0 / 16.0, 1.0 / 32.0] {
        if t >= domain.r00 {
            continue;
        }
        let got = measure(&mesh, Some(domain), Region::Layer { r: t, side: Side::BoundaryLayer }, Weight::One)?;
        let want = layer_area(domain, t);
        checks.push(Check::at_most(format!("layer area at t={t}"), (got - want).abs() / want, 1e-3));
    }
    Ok(checks)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layer_area_formula() {
        let s = PolygonDomain::preset("square").unwrap();
        let t = 0.1;
        assert!((layer_area(&s, t) - (1.0 - (1.0 - 2.0 * t).powi(2))).abs() < 1e-14);
        // L-shape: three unit-half notches; compare with a fine pixel count
        let l = PolygonDomain::preset("l-shape").unwrap();
        let n = 2000;
        let mut count = 0usize;
        for i in 0..n {
            for j in 0..n {
                let p = [(i as f64 + 0.5) / n as f64, (j as f64 + 0.5) / n as f64];
                if l.contains(p) && l.distance(p) < t {
                    count += 1;
                }
            }
        }
        let pix = count as f64 / (n * n) as f64;
        assert!((layer_area(&l, t) - pix).abs() < 1e-3, "{} {pix}", layer_area(&l, t));
    }

    #[test]
    fn sign_flipped_a_stops_at_validation() {
        let c = Config::from_toml(
            r#"
            [coefficients]
            a = { "1,1,1,1" = "-(2+sin(2*pi*y1))" }
            "#,
        )
        .unwrap();
        let r = verify_all(&c);
        assert!(!r.pass);
        assert_eq!(r.stages[0].status, Status::Fail);
        assert!(r.stages[0].error.as_deref().unwrap().contains("ellipticity"));
        assert!(r.stages[1..].iter().all(|s| s.status == Status::Skipped));
    }

    #[test]
    fn underresolved_row_is_named() {
        let c = Config::from_toml(
            r#"
            [plan]
            eps = [0.125, 0.0625, 0.03125]
            h = 0.02
            "#,
        )
        .unwrap();
        let r = verify_all(&c);
        assert!(!r.pass);
        let plan = r.stage("plan").unwrap();
        assert_eq!(plan.status, Status::Fail);
        let msg = plan.error.as_deref().unwrap();
        assert!(msg.contains("plan row 2") && msg.contains("under-resolved"), "{msg}");
        assert_eq!(r.stage("two-scale").unwrap().status, Status::Skipped);
    }
}
