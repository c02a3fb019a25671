//! Structured triangulations of rectilinear polygons.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Point, PolygonDomain};
use crate::error::{Error, Result};

/// Default upper bound on the node count of a mesh.
pub const DEFAULT_NODE_CAP: usize = 12_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryEdge {
    /// Endpoints, ordered counterclockwise along the boundary.
    pub nodes: [u32; 2],
    pub normal: Point,
    pub length: f64,
}

/// The square lattice a structured mesh was cut from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    pub origin: Point,
    /// Cell side.
    pub h: f64,
    /// Cells per axis.
    pub nx: usize,
    pub ny: usize,
    /// Mesh node of lattice point `(i, j)` at `j * (nx + 1) + i`, or `u32::MAX`.
    pub node_of: Vec<u32>,
    /// Lattice cell `(i, j)` of each pair of triangles `2c, 2c + 1`.
    pub cells: Vec<[u32; 2]>,
    /// Inverse of `cells` at `j * nx + i`, or `u32::MAX`.
    pub cell_index: Vec<u32>,
}

impl Lattice {
    #[inline]
    pub fn node(&self, i: usize, j: usize) -> Option<usize> {
        let v = self.node_of[j * (self.nx + 1) + i];
        (v != u32::MAX).then_some(v as usize)
    }

    /// Triangle containing `p` (closed cells, ties broken towards lower indices).
    pub fn locate(&self, p: Point) -> Option<usize> {
        let fx = (p[0] - self.origin[0]) / self.h;
        let fy = (p[1] - self.origin[1]) / self.h;
        if !(fx >= -1e-9 && fy >= -1e-9 && fx <= self.nx as f64 + 1e-9 && fy <= self.ny as f64 + 1e-9) {
            return None;
        }
        let i = (fx.floor().max(0.0) as usize).min(self.nx - 1);
        let j = (fy.floor().max(0.0) as usize).min(self.ny - 1);
        let (u, v) = (fx - i as f64, fy - j as f64);
        // a point on a shared edge may sit in a neighbouring cell that is absent
        let candidates = [(i, j), (i.wrapping_sub(1), j), (i, j.wrapping_sub(1)), (i + 1, j), (i, j + 1), (i.wrapping_sub(1), j.wrapping_sub(1))];
        for (ci, cj) in candidates {
            if ci >= self.nx || cj >= self.ny {
                continue;
            }
            let c = self.cell_index[cj * self.nx + ci];
            if c == u32::MAX {
                continue;
            }
            let (u, v) = (u + i as f64 - ci as f64, v + j as f64 - cj as f64);
            if !(-1e-9..=1.0 + 1e-9).contains(&u) || !(-1e-9..=1.0 + 1e-9).contains(&v) {
                continue;
            }
            let second = if (ci + cj) % 2 == 0 { v > u } else { u + v > 1.0 };
            return Some(2 * c as usize + second as usize);
        }
        None
    }
}

/// Conforming P1 triangulation with boundary edges and outward normals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriMesh {
    pub nodes: Vec<Point>,
    pub triangles: Vec<[u32; 3]>,
    pub boundary: Vec<BoundaryEdge>,
    /// Cell side of the lattice; the longest element edge is `h * sqrt(2)`.
    pub h: f64,
    pub lattice: Option<Lattice>,
}

impl TriMesh {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    #[inline]
    pub fn vertices(&self, t: usize) -> [Point; 3] {
        let [a, b, c] = self.triangles[t];
        [self.nodes[a as usize], self.nodes[b as usize], self.nodes[c as usize]]
    }

    pub fn area(&self, t: usize) -> f64 {
        let [p, q, r] = self.vertices(t);
        0.5 * ((q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0]))
    }

    pub fn barycenter(&self, t: usize) -> Point {
        let [p, q, r] = self.vertices(t);
        [(p[0] + q[0] + r[0]) / 3.0, (p[1] + q[1] + r[1]) / 3.0]
    }

    pub fn boundary_length(&self) -> f64 {
        self.boundary.iter().map(|e| e.length).sum()
    }

    /// Node flags: true on the boundary.
    pub fn boundary_nodes(&self) -> Vec<bool> {
        let mut flag = vec![false; self.nodes.len()];
        for e in &self.boundary {
            flag[e.nodes[0] as usize] = true;
            flag[e.nodes[1] as usize] = true;
        }
        flag
    }

    /// Smallest interior angle over all elements, in degrees.
    pub fn min_angle_degrees(&self) -> f64 {
        let mut worst = 180.0f64;
        for t in 0..self.triangles.len() {
            let v = self.vertices(t);
            for k in 0..3 {
                let (a, b, c) = (v[k], v[(k + 1) % 3], v[(k + 2) % 3]);
                let u = [b[0] - a[0], b[1] - a[1]];
                let w = [c[0] - a[0], c[1] - a[1]];
                let cos = (u[0] * w[0] + u[1] * w[1]) / ((u[0].hypot(u[1])) * (w[0].hypot(w[1])));
                worst = worst.min(cos.clamp(-1.0, 1.0).acos().to_degrees());
            }
        }
        worst
    }

    /// Longest element edge.
    pub fn max_diameter(&self) -> f64 {
        let mut m = 0.0f64;
        for t in 0..self.triangles.len() {
            let v = self.vertices(t);
            for k in 0..3 {
                let (a, b) = (v[k], v[(k + 1) % 3]);
                m = m.max((b[0] - a[0]).hypot(b[1] - a[1]));
            }
        }
        m
    }

    /// Writes `<stem>.nodes` (`x y`) and `<stem>.elements` (`i j k`, 0-based).
    pub fn export(&self, stem: &Path) -> Result<()> {
        let mut s = String::with_capacity(self.nodes.len() * 40);
        for p in &self.nodes {
            writeln!(s, "{:.17e} {:.17e}", p[0], p[1]).unwrap();
        }
        std::fs::File::create(stem.with_extension("nodes"))?.write_all(s.as_bytes())?;
        s.clear();
        for t in &self.triangles {
            writeln!(s, "{} {} {}", t[0], t[1], t[2]).unwrap();
        }
        std::fs::File::create(stem.with_extension("elements"))?.write_all(s.as_bytes())?;
        Ok(())
    }
}

fn lattice_resolution(domain: &PolygonDomain, h: f64) -> Result<(Point, usize, usize, f64)> {
    let (lo, hi) = domain.bbox();
    let extent = (hi[0] - lo[0]).max(hi[1] - lo[1]);
    // cells per unit length; the cell side must divide every vertex offset
    let start = (1.0 / h).ceil().max(1.0) as u64;
    for per_unit in start..start.saturating_mul(4).max(start + 64) {
        let s = 1.0 / per_unit as f64;
        let aligned = domain.vertices.iter().all(|v| {
            (0..2).all(|a| {
                let t = (v[a] - lo[a]) / s;
                (t - t.round()).abs() < 1e-9
            })
        });
        let rectilinear = domain
            .edges()
            .all(|(a, b)| (a[0] - b[0]).abs() < 1e-14 || (a[1] - b[1]).abs() < 1e-14);
        if !rectilinear {
            return Err(Error::Unsupported(
                "structured meshing needs an axis-aligned polygon".into(),
            ));
        }
        if aligned {
            let nx = ((hi[0] - lo[0]) / s).round() as usize;
            let ny = ((hi[1] - lo[1]) / s).round() as usize;
            return Ok((lo, nx, ny, s));
        }
        if per_unit as f64 * extent > 1e9 {
            break;
        }
    }
    Err(Error::Unsupported(format!(
        "no lattice with cell side <= {h} fits the polygon vertices"
    )))
}

pub fn triangulate(domain: &PolygonDomain, h: f64) -> Result<TriMesh> {
    triangulate_with_cap(domain, h, DEFAULT_NODE_CAP)
}

/// Criss-cross triangulation on the coarsest square lattice with cell side
/// `<= h` that contains every polygon vertex. Diagonals alternate with the
/// parity of `i + j`, so lattice refinement gives nested meshes.
pub fn triangulate_with_cap(domain: &PolygonDomain, h: f64, node_cap: usize) -> Result<TriMesh> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::invalid(format!("mesh size must be positive, got {h}")));
    }
    let (lo, hi) = domain.bbox();
    let estimate = ((hi[0] - lo[0]) / h + 2.0) * ((hi[1] - lo[1]) / h + 2.0);
    if estimate > node_cap as f64 {
        return Err(Error::Resource(format!(
            "mesh size {h} needs about {estimate:.3e} nodes, above the cap {node_cap}"
        )));
    }
    let (origin, nx, ny, s) = lattice_resolution(domain, h)?;
    if ((nx + 1) * (ny + 1)) as f64 > node_cap as f64 {
        return Err(Error::Resource(format!(
            "lattice of {}x{} cells exceeds the node cap {node_cap}",
            nx, ny
        )));
    }
    let inside: Vec<bool> = (0..nx * ny)
        .map(|c| {
            let (i, j) = (c % nx, c / nx);
            domain.contains([
                origin[0] + (i as f64 + 0.5) * s,
                origin[1] + (j as f64 + 0.5) * s,
            ])
        })
        .collect();
    let cell_in = |i: isize, j: isize| -> bool {
        i >= 0 && j >= 0 && (i as usize) < nx && (j as usize) < ny && inside[j as usize * nx + i as usize]
    };
    let mut node_of = vec![u32::MAX; (nx + 1) * (ny + 1)];
    let mut nodes = vec![];
    for j in 0..=ny {
        for i in 0..=nx {
            let (ii, jj) = (i as isize, j as isize);
            if cell_in(ii - 1, jj - 1) || cell_in(ii, jj - 1) || cell_in(ii - 1, jj) || cell_in(ii, jj) {
                node_of[j * (nx + 1) + i] = nodes.len() as u32;
                nodes.push([origin[0] + i as f64 * s, origin[1] + j as f64 * s]);
            }
        }
    }
    let id = |i: usize, j: usize| node_of[j * (nx + 1) + i];
    let mut triangles = vec![];
    let mut cells = vec![];
    let mut cell_index = vec![u32::MAX; nx * ny];
    let mut boundary = vec![];
    for j in 0..ny {
        for i in 0..nx {
            if !inside[j * nx + i] {
                continue;
            }
            let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            if (i + j) % 2 == 0 {
                triangles.push([a, b, c]);
                triangles.push([a, c, d]);
            } else {
                triangles.push([a, b, d]);
                triangles.push([b, c, d]);
            }
            cell_index[j * nx + i] = cells.len() as u32;
            cells.push([i as u32, j as u32]);
            let (ii, jj) = (i as isize, j as isize);
            if !cell_in(ii, jj - 1) {
                boundary.push(BoundaryEdge { nodes: [a, b], normal: [0.0, -1.0], length: s });
            }
            if !cell_in(ii + 1, jj) {
                boundary.push(BoundaryEdge { nodes: [b, c], normal: [1.0, 0.0], length: s });
            }
            if !cell_in(ii, jj + 1) {
                boundary.push(BoundaryEdge { nodes: [c, d], normal: [0.0, 1.0], length: s });
            }
            if !cell_in(ii - 1, jj) {
                boundary.push(BoundaryEdge { nodes: [d, a], normal: [-1.0, 0.0], length: s });
            }
        }
    }
    Ok(TriMesh {
        nodes,
        triangles,
        boundary,
        h: s,
        lattice: Some(Lattice {
            origin,
            h: s,
            nx,
            ny,
            node_of,
            cells,
            cell_index,
        }),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerTag {
    /// In `Sigma_r` (`delta >= r`).
    Inside,
    /// In the boundary layer `Omega \ Sigma_r`.
    BoundaryLayer,
    /// Straddles the level set `delta = r`.
    Cut,
}

/// Classifies elements against `Sigma_r` by barycentric `delta`; elements
/// whose vertices lie strictly on both sides of the level `r` are `Cut`.
pub fn layer_mask(domain: &PolygonDomain, mesh: &TriMesh, r: f64) -> Vec<LayerTag> {
    let tol = 1e-9 * mesh.h;
    let node_delta: Vec<f64> = mesh.nodes.iter().map(|&p| domain.boundary_distance(p)).collect();
    (0..mesh.triangles.len())
        .map(|t| {
            let ds = mesh.triangles[t].map(|v| node_delta[v as usize]);
            let lo = ds.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = ds.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if lo < r - tol && hi > r + tol {
                LayerTag::Cut
            } else if domain.distance(mesh.barycenter(t)) >= r {
                LayerTag::Inside
            } else {
                LayerTag::BoundaryLayer
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_half_has_eight_triangles() {
        let d = PolygonDomain::preset("square").unwrap();
        let m = triangulate(&d, 0.5).unwrap();
        assert_eq!(m.triangles.len(), 8);
        assert_eq!(m.nodes.len(), 9);
        assert_eq!(m.boundary.len(), 8);
        assert!((m.min_angle_degrees() - 45.0).abs() < 1e-9);
    }

    #[test]
    fn l_shape_excludes_removed_quadrant() {
        let d = PolygonDomain::preset("l-shape").unwrap();
        let m = triangulate(&d, 0.25).unwrap();
        assert_eq!(m.triangles.len(), 24);
        assert_eq!(m.nodes.len(), 21);
        for p in &m.nodes {
            assert!(!(p[0] < 0.5 && p[1] > 0.5), "{p:?}");
        }
        assert!((m.boundary_length() - d.perimeter()).abs() < 1e-12);
        let area: f64 = (0..m.triangles.len()).map(|t| m.area(t)).sum();
        assert!((area - 0.75).abs() < 1e-14);
        assert!((0..m.triangles.len()).all(|t| m.area(t) > 0.0));
    }

    #[test]
    fn tiny_mesh_size_hits_the_cap() {
        let d = PolygonDomain::preset("square").unwrap();
        assert!(matches!(triangulate(&d, 1e-9), Err(Error::Resource(_))));
    }

    #[test]
    fn boundary_normals_point_outward() {
        let d = PolygonDomain::preset("l-shape").unwrap();
        let m = triangulate(&d, 1.0 / 16.0).unwrap();
        for e in &m.boundary {
            let (a, b) = (m.nodes[e.nodes[0] as usize], m.nodes[e.nodes[1] as usize]);
            let mid = [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0];
            let out = [mid[0] + 1e-3 * e.normal[0], mid[1] + 1e-3 * e.normal[1]];
            let inn = [mid[0] - 1e-3 * e.normal[0], mid[1] - 1e-3 * e.normal[1]];
            assert!(!d.contains(out) && d.contains(inn));
            // counterclockwise: the normal is the tangent rotated clockwise
            let t = [b[0] - a[0], b[1] - a[1]];
            assert!((t[1] - e.normal[0] * e.length).abs() < 1e-14);
        }
        assert!((m.boundary_length() - d.perimeter()).abs() < 1e-12);
    }

    #[test]
    fn meshes_are_nested() {
        let d = PolygonDomain::preset("square").unwrap();
        let c = triangulate(&d, 0.25).unwrap();
        let f = triangulate(&d, 0.125).unwrap();
        let fl = f.lattice.as_ref().unwrap();
        // every coarse edge is a union of fine edges
        let mut fine_edges = std::collections::HashSet::new();
        for t in &f.triangles {
            for k in 0..3 {
                let (a, b) = (t[k].min(t[(k + 1) % 3]), t[k].max(t[(k + 1) % 3]));
                fine_edges.insert((a, b));
            }
        }
        let key = |p: Point| fl.node((p[0] / fl.h).round() as usize, (p[1] / fl.h).round() as usize).unwrap() as u32;
        for t in 0..c.triangles.len() {
            let v = c.vertices(t);
            for k in 0..3 {
                let (a, b) = (v[k], v[(k + 1) % 3]);
                let mid = [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0];
                for (p, q) in [(a, mid), (mid, b)] {
                    let (x, y) = (key(p), key(q));
                    assert!(fine_edges.contains(&(x.min(y), x.max(y))));
                }
            }
        }
    }

    #[test]
    fn layer_mask_limits() {
        let d = PolygonDomain::preset("square").unwrap();
        let m = triangulate(&d, 1.0 / 32.0).unwrap();
        assert!(layer_mask(&d, &m, d.r00).iter().all(|&t| t == LayerTag::BoundaryLayer));
        assert!(layer_mask(&d, &m, 1e-12).iter().all(|&t| t == LayerTag::Inside));
    }

    #[test]
    fn square_layer_area() {
        let d = PolygonDomain::preset("square").unwrap();
        let m = triangulate(&d, 0.01).unwrap();
        let tags = layer_mask(&d, &m, 0.1);
        let mut layer = 0.0;
        let mut cut = 0.0;
        for (t, tag) in tags.iter().enumerate() {
            match tag {
                LayerTag::BoundaryLayer => layer += m.area(t),
                LayerTag::Cut => cut += m.area(t),
                LayerTag::Inside => {}
            }
        }
        let est = layer + 0.5 * cut;
        assert!((est - 0.36).abs() < 0.05 * 0.36, "{est}");
    }

    #[test]
    fn point_location() {
        let d = PolygonDomain::preset("l-shape").unwrap();
        let m = triangulate(&d, 1.0 / 8.0).unwrap();
        let l = m.lattice.as_ref().unwrap();
        for t in 0..m.triangles.len() {
            let b = m.barycenter(t);
            assert_eq!(l.locate(b), Some(t));
        }
        assert!(l.locate([0.25, 0.75]).is_none());
        assert!(l.locate([0.5, 0.75]).is_some());
        assert!(l.locate([1.0, 1.0]).is_some());
    }

    #[test]
    fn export_tables() {
        let d = PolygonDomain::preset("square").unwrap();
        let m = triangulate(&d, 0.5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("mesh");
        m.export(&stem).unwrap();
        let nodes = std::fs::read_to_string(stem.with_extension("nodes")).unwrap();
        let elems = std::fs::read_to_string(stem.with_extension("elements")).unwrap();
        assert_eq!(nodes.lines().count(), 9);
        assert_eq!(elems.lines().count(), 8);
        assert!(elems.lines().all(|l| l.split(' ').all(|v| v.parse::<usize>().unwrap() < 9)));
    }
}
