//! Plain, layer and `delta`-weighted norms of finite element functions.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::function::{bary_point, FemFunction};
use super::quadrature::TriangleRule;
use crate::domain::{layer_mask, LayerTag, Point, PolygonDomain, TriMesh};
use crate::error::{Error, Result};

/// Which side of the level set `delta = r`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Side {
    /// `Sigma_r = {delta > r}`.
    Interior,
    /// `Omega \ Sigma_r`.
    BoundaryLayer,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Region {
    All,
    Layer { r: f64, side: Side },
}

/// Integrand weight `delta^power`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Weight {
    One,
    Delta,
    InvDelta,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum NormKind {
    L2,
    H1,
    Lp(f64),
    L2Layer { r: f64, side: Side },
    H1Layer { r: f64, side: Side },
    /// `power` is `1` or `-1`.
    L2Weighted { r: f64, side: Side, power: i32 },
    H1Weighted { r: f64, side: Side, power: i32 },
}

/// Refinement depth for elements cut by the level set (`4^3` pieces).
const CUT_LEVELS: usize = 3;

fn sub_triangles(levels: usize) -> Vec<[[f64; 3]; 3]> {
    let mut tris = vec![[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]];
    for _ in 0..levels {
        let mut next = Vec::with_capacity(tris.len() * 4);
        for [a, b, c] in tris {
            let mid = |p: [f64; 3], q: [f64; 3]| [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1]), 0.5 * (p[2] + q[2])];
            let (ab, bc, ca) = (mid(a, b), mid(b, c), mid(c, a));
            next.extend_from_slice(&[[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]);
        }
        tris = next;
    }
    tris
}

fn validate_region(domain: Option<&PolygonDomain>, region: Region, weight: Weight) -> Result<()> {
    if let Region::Layer { r, side } = region {
        let d = domain.ok_or_else(|| Error::invalid("layer regions need the domain"))?;
        if !(r > 0.0 && r < d.r00) {
            return Err(Error::invalid(format!("layer depth {r} must lie in (0, r00 = {})", d.r00)));
        }
        if side == Side::BoundaryLayer && weight == Weight::InvDelta {
            return Err(Error::invalid("delta^-1 is not integrable on the boundary layer"));
        }
    } else if weight == Weight::InvDelta {
        return Err(Error::invalid("delta^-1 weight needs an interior layer region"));
    }
    if weight != Weight::One && domain.is_none() {
        return Err(Error::invalid("weighted integrals need the domain"));
    }
    Ok(())
}

/// `int_region weight(x) f(t, lambda, x) dx` with an order-4 rule; elements
/// cut by the level set are subdivided and their pieces classified by the
/// centroid distance. `f` receives the element, barycentric coordinates in
/// it and the physical point.
pub fn integrate<F>(mesh: &TriMesh, domain: Option<&PolygonDomain>, region: Region, weight: Weight, f: F) -> Result<f64>
where
    F: Fn(usize, &[f64; 3], Point) -> f64 + Sync,
{
    validate_region(domain, region, weight)?;
    let tags = match region {
        Region::All => None,
        Region::Layer { r, .. } => Some(layer_mask(domain.unwrap(), mesh, r)),
    };
    let rule = TriangleRule::order4();
    let subs = sub_triangles(CUT_LEVELS);
    let keep = |tag: LayerTag| match region {
        Region::All => true,
        Region::Layer { side, .. } => match side {
            Side::Interior => tag == LayerTag::Inside,
            Side::BoundaryLayer => tag == LayerTag::BoundaryLayer,
        },
    };
    let w = |x: Point| -> f64 {
        match weight {
            Weight::One => 1.0,
            Weight::Delta => domain.unwrap().distance(x),
            Weight::InvDelta => 1.0 / domain.unwrap().distance(x),
        }
    };
    let element = |t: usize| -> f64 {
        let v = mesh.vertices(t);
        let area = mesh.area(t).abs();
        let tag = tags.as_ref().map_or(LayerTag::Inside, |g| g[t]);
        let quad = |corner: &[[f64; 3]; 3], scale: f64| -> f64 {
            let mut s = 0.0;
            for (q, &wq) in rule.points.iter().zip(&rule.weights) {
                let mut l = [0.0; 3];
                for k in 0..3 {
                    l[k] = q[0] * corner[0][k] + q[1] * corner[1][k] + q[2] * corner[2][k];
                }
                let x = bary_point(&v, &l);
                s += wq * w(x) * f(t, &l, x);
            }
            s * scale
        };
        if tag == LayerTag::Cut {
            let (r, side) = match region {
                Region::Layer { r, side } => (r, side),
                Region::All => unreachable!(),
            };
            let d = domain.unwrap();
            let scale = area / subs.len() as f64;
            subs.iter()
                .filter(|c| {
                    let l = [
                        (c[0][0] + c[1][0] + c[2][0]) / 3.0,
                        (c[0][1] + c[1][1] + c[2][1]) / 3.0,
                        (c[0][2] + c[1][2] + c[2][2]) / 3.0,
                    ];
                    let inside = d.distance(bary_point(&v, &l)) >= r;
                    inside == (side == Side::Interior)
                })
                .map(|c| quad(c, scale))
                .sum()
        } else if keep(tag) {
            quad(&subs_identity(), area)
        } else {
            0.0
        }
    };
    const CHUNK: usize = 4096;
    let nt = mesh.triangles.len();
    let partial: Vec<f64> = (0..nt.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| (c * CHUNK..((c + 1) * CHUNK).min(nt)).map(element).sum())
        .collect();
    Ok(partial.iter().sum())
}

#[inline]
fn subs_identity() -> [[f64; 3]; 3] {
    [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
}

fn value_sq(u: &FemFunction, t: usize, l: &[f64; 3]) -> f64 {
    (0..u.m).map(|al| u.value_in(t, l, al).powi(2)).sum()
}

fn grad_sq(u: &FemFunction, t: usize) -> f64 {
    (0..u.m)
        .map(|al| {
            let g = u.gradient_in(t, al);
            g[0] * g[0] + g[1] * g[1]
        })
        .sum()
}

fn weight_of(power: i32) -> Result<Weight> {
    match power {
        1 => Ok(Weight::Delta),
        -1 => Ok(Weight::InvDelta),
        p => Err(Error::invalid(format!("weight power must be 1 or -1, got {p}"))),
    }
}

/// Norm of `u`; `domain` is required for layer and weighted kinds.
pub fn norm(u: &FemFunction, domain: Option<&PolygonDomain>, kind: NormKind) -> Result<f64> {
    let mesh = &u.mesh;
    let l2 = |region, weight| integrate(mesh, domain, region, weight, |t, l, _| value_sq(u, t, l));
    let h1 = |region, weight| {
        integrate(mesh, domain, region, weight, |t, l, _| value_sq(u, t, l) + grad_sq(u, t))
    };
    let sq = match kind {
        NormKind::L2 => l2(Region::All, Weight::One)?,
        NormKind::H1 => h1(Region::All, Weight::One)?,
        NormKind::Lp(p) => {
            if !(p >= 1.0) {
                return Err(Error::invalid(format!("L^p needs p >= 1, got {p}")));
            }
            let s = integrate(mesh, domain, Region::All, Weight::One, |t, l, _| {
                value_sq(u, t, l).powf(0.5 * p)
            })?;
            return Ok(s.powf(1.0 / p));
        }
        NormKind::L2Layer { r, side } => l2(Region::Layer { r, side }, Weight::One)?,
        NormKind::H1Layer { r, side } => h1(Region::Layer { r, side }, Weight::One)?,
        NormKind::L2Weighted { r, side, power } => l2(Region::Layer { r, side }, weight_of(power)?)?,
        NormKind::H1Weighted { r, side, power } => h1(Region::Layer { r, side }, weight_of(power)?)?,
    };
    Ok(sq.sqrt())
}

/// `H^1` seminorm `|grad u|_{L^2}`.
pub fn h1_seminorm(u: &FemFunction) -> f64 {
    integrate(&u.mesh, None, Region::All, Weight::One, |t, _, _| grad_sq(u, t))
        .expect("unweighted full-domain integral")
        .sqrt()
}

/// Area of a region, possibly weighted.
pub fn measure(mesh: &TriMesh, domain: Option<&PolygonDomain>, region: Region, weight: Weight) -> Result<f64> {
    integrate(mesh, domain, region, weight, |_, _, _| 1.0)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::domain::triangulate;

    fn unit(h: f64) -> (PolygonDomain, Arc<TriMesh>) {
        let d = PolygonDomain::preset("square").unwrap();
        let mesh = Arc::new(triangulate(&d, h).unwrap());
        (d, mesh)
    }

    #[test]
    fn constant_function_norms() {
        let (d, mesh) = unit(1.0 / 64.0);
        let one = FemFunction::interpolate(mesh, 1, |_, o| o[0] = 1.0);
        assert!((norm(&one, None, NormKind::L2).unwrap() - 1.0).abs() < 1e-13);
        assert!((norm(&one, None, NormKind::H1).unwrap() - 1.0).abs() < 1e-13);
        assert!((norm(&one, None, NormKind::Lp(4.0)).unwrap() - 1.0).abs() < 1e-13);
        let layer = norm(
            &one,
            Some(&d),
            NormKind::L2Layer {
                r: 0.1,
                side: Side::BoundaryLayer,
            },
        )
        .unwrap();
        assert!((layer - 0.6).abs() < 0.006, "{layer}");
        // int_{Sigma_r} delta over the unit square: 4 (1/24 - r^2/2 + 2 r^3 / 3)
        let r: f64 = 0.1;
        let exact = 4.0 * (1.0 / 24.0 - r * r / 2.0 + 2.0 * r.powi(3) / 3.0);
        assert!((exact - 0.149_333_333_333).abs() < 1e-9);
        let w = norm(
            &one,
            Some(&d),
            NormKind::L2Weighted {
                r,
                side: Side::Interior,
                power: 1,
            },
        )
        .unwrap();
        assert!((w * w / exact - 1.0).abs() < 0.01, "{}", w * w);
    }

    #[test]
    fn layers_partition_the_domain() {
        let d = PolygonDomain::preset("l-shape").unwrap();
        let mesh = triangulate(&d, 1.0 / 64.0).unwrap();
        for r in [0.013, 0.05, 0.1] {
            let a = measure(&mesh, Some(&d), Region::Layer { r, side: Side::Interior }, Weight::One).unwrap();
            let b = measure(&mesh, Some(&d), Region::Layer { r, side: Side::BoundaryLayer }, Weight::One).unwrap();
            assert!((a + b - 0.75).abs() < 1e-12);
        }
    }

    #[test]
    fn inverse_weight_rejected_on_boundary_layer() {
        let (d, mesh) = unit(0.125);
        let one = FemFunction::interpolate(mesh, 1, |_, o| o[0] = 1.0);
        let kind = NormKind::L2Weighted {
            r: 0.1,
            side: Side::BoundaryLayer,
            power: -1,
        };
        assert!(matches!(norm(&one, Some(&d), kind), Err(Error::Invalid(_))));
    }

    #[test]
    fn gradient_norm_of_linear() {
        let (_, mesh) = unit(1.0 / 16.0);
        let u = FemFunction::interpolate(mesh, 2, |p, o| {
            o[0] = 3.0 * p[0];
            o[1] = -4.0 * p[1];
        });
        assert!((h1_seminorm(&u) - 5.0).abs() < 1e-12);
    }
}
