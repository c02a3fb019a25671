//! P1 assembly of the bilinear form `B_eps[u, phi]` and its adjoint.
//!
//! Rows are test functions, columns trial functions, both ordered
//! `node * m + alpha`.

use std::collections::HashMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::function::{bary_point, basis_gradients, FemFunction};
use super::quadrature::{gauss_segment, TriangleRule};
use crate::coeff::{CoeffValues, CoefficientSet, Layout, ScalarFieldExpr};
use crate::domain::{Point, PolygonDomain, TriMesh};
use crate::error::{Error, Result};
use crate::linalg::sparse::Csr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BcKind {
    Dirichlet,
    Neumann,
}

/// Coefficients of the operator being discretized.
#[derive(Debug, Clone, Copy)]
pub enum Coefficients<'a> {
    /// Periodic fields evaluated at `x / eps`.
    Periodic(&'a CoefficientSet),
    /// Constant tensors, e.g. the homogenized ones.
    Constant {
        layout: Layout,
        values: &'a CoeffValues,
        lambda: f64,
    },
}

impl Coefficients<'_> {
    pub fn layout(&self) -> Layout {
        match self {
            Coefficients::Periodic(c) => c.layout,
            Coefficients::Constant { layout, .. } => *layout,
        }
    }

    pub fn lambda(&self) -> f64 {
        match self {
            Coefficients::Periodic(c) => c.lambda,
            Coefficients::Constant { lambda, .. } => *lambda,
        }
    }

    fn has_first_order(&self) -> bool {
        match self {
            Coefficients::Periodic(c) => !c.first_order_free(),
            Coefficients::Constant { values, .. } => {
                values.v.iter().chain(&values.b).any(|x| *x != 0.0)
            }
        }
    }

    fn a_symmetric(&self) -> bool {
        match self {
            Coefficients::Periodic(c) => c.symmetric_a,
            Coefficients::Constant { layout: l, values, .. } => {
                let mut sym = true;
                for i in 0..l.dim {
                    for j in 0..l.dim {
                        for al in 0..l.m {
                            for be in 0..l.m {
                                sym &= values.a[l.a(i, j, al, be)] == values.a[l.a(j, i, be, al)];
                            }
                        }
                    }
                }
                sym && values.c.iter().enumerate().all(|(k, x)| *x == values.c[(k % l.m) * l.m + k / l.m])
            }
        }
    }
}

/// Fills `out` with the coefficients at physical point `x`.
pub fn eval_at(coeffs: &Coefficients, epsilon: f64, x: Point, out: &mut CoeffValues) {
    match coeffs {
        Coefficients::Periodic(set) => set.eval_into(&[x[0] / epsilon, x[1] / epsilon], out),
        Coefficients::Constant { values, .. } => out.clone_from(values),
    }
}

/// Owned adjoint coefficients, kept alive while borrowed by [`Coefficients`].
enum Owned {
    Set(CoefficientSet),
    Values(CoeffValues),
}

/// Boundary data on the polygon.
#[derive(Debug, Clone)]
pub enum BoundaryData {
    Zero,
    /// One expression in `x1, x2` per component.
    Expr(Vec<ScalarFieldExpr>),
    /// Constant per polygon edge, `values[edge][alpha]`.
    PerEdge { edges: Vec<(Point, Point)>, values: Vec<Vec<f64>> },
    /// Linear along each polygon edge from vertex values `values[vertex][alpha]`.
    PerVertex { vertices: Vec<Point>, values: Vec<Vec<f64>> },
}

impl BoundaryData {
    pub fn piecewise_constant(domain: &PolygonDomain, values: Vec<Vec<f64>>) -> Result<Self> {
        let edges: Vec<_> = domain.edges().collect();
        if values.len() != edges.len() {
            return Err(Error::invalid(format!(
                "{} edge values given for {} polygon edges",
                values.len(),
                edges.len()
            )));
        }
        Ok(BoundaryData::PerEdge { edges, values })
    }

    pub fn piecewise_linear(domain: &PolygonDomain, values: Vec<Vec<f64>>) -> Result<Self> {
        if values.len() != domain.vertices.len() {
            return Err(Error::invalid(format!(
                "{} vertex values given for {} polygon vertices",
                values.len(),
                domain.vertices.len()
            )));
        }
        Ok(BoundaryData::PerVertex {
            vertices: domain.vertices.clone(),
            values,
        })
    }

    /// Value at a boundary point; `hint` is a point used to pick the polygon
    /// edge (an edge midpoint resolves corners unambiguously).
    pub fn eval(&self, p: Point, hint: Point, m: usize, out: &mut [f64]) {
        match self {
            BoundaryData::Zero => out[..m].iter_mut().for_each(|v| *v = 0.0),
            BoundaryData::Expr(e) => {
                for al in 0..m {
                    out[al] = e[al].eval(&p);
                }
            }
            BoundaryData::PerEdge { edges, values } => {
                let k = nearest_edge(edges.iter().copied(), hint);
                out[..m].copy_from_slice(&values[k][..m]);
            }
            BoundaryData::PerVertex { vertices, values } => {
                let n = vertices.len();
                let k = nearest_edge((0..n).map(|k| (vertices[k], vertices[(k + 1) % n])), hint);
                let (a, b) = (vertices[k], vertices[(k + 1) % n]);
                let t = project(a, b, p).1;
                for al in 0..m {
                    out[al] = (1.0 - t) * values[k][al] + t * values[(k + 1) % n][al];
                }
            }
        }
    }
}

fn project(a: Point, b: Point, p: Point) -> (f64, f64) {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let t = (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / (dx * dx + dy * dy)).clamp(0.0, 1.0);
    let (qx, qy) = (a[0] + t * dx - p[0], a[1] + t * dy - p[1]);
    ((qx * qx + qy * qy).sqrt(), t)
}

fn nearest_edge(edges: impl Iterator<Item = (Point, Point)>, p: Point) -> usize {
    let mut best = (f64::INFINITY, 0);
    for (k, (a, b)) in edges.enumerate() {
        let d = project(a, b, p).0;
        if d < best.0 {
            best = (d, k);
        }
    }
    best.1
}

/// Volume load `F`.
#[derive(Debug, Clone)]
pub enum Load {
    Zero,
    Expr(Vec<ScalarFieldExpr>),
    Fem(FemFunction),
}

impl Load {
    pub(crate) fn eval(&self, t: usize, l: &[f64; 3], p: Point, m: usize, out: &mut [f64]) {
        match self {
            Load::Zero => out[..m].iter_mut().for_each(|v| *v = 0.0),
            Load::Expr(e) => {
                for al in 0..m {
                    out[al] = e[al].eval(&p);
                }
            }
            Load::Fem(f) => {
                for al in 0..m {
                    out[al] = f.value_in(t, l, al);
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct ProblemData {
    pub bc: BcKind,
    pub load: Load,
    /// Optional divergence-form load `f`, `f[alpha * d + i]`, entering as `-int f . grad phi`.
    pub div_load: Option<Vec<ScalarFieldExpr>>,
    /// Dirichlet trace `g` or Neumann flux `h` according to `bc`.
    pub boundary: BoundaryData,
    /// Oscillation scale; 0 for a constant-coefficient problem.
    pub epsilon: f64,
}

impl ProblemData {
    pub fn dirichlet(load: Load, g: BoundaryData, epsilon: f64) -> Self {
        ProblemData {
            bc: BcKind::Dirichlet,
            load,
            div_load: None,
            boundary: g,
            epsilon,
        }
    }

    pub fn neumann(load: Load, h: BoundaryData, epsilon: f64) -> Self {
        ProblemData {
            bc: BcKind::Neumann,
            load,
            div_load: None,
            boundary: h,
            epsilon,
        }
    }
}

/// Reduced linear system on the free unknowns.
#[derive(Debug, Clone)]
pub struct AssembledSystem {
    pub mesh: Arc<TriMesh>,
    pub m: usize,
    pub matrix: Csr,
    pub rhs: Vec<f64>,
    /// Free index of each node, `u32::MAX` when constrained.
    pub free: Vec<u32>,
    pub free_count: usize,
    /// Prescribed nodal values (`node * m + alpha`), zero at free nodes.
    pub constrained: Vec<f64>,
    pub symmetric: bool,
    pub bc: BcKind,
    pub warnings: Vec<String>,
}

impl AssembledSystem {
    /// Scatters a reduced vector and the constrained values into a nodal field.
    pub fn expand(&self, x: &[f64]) -> FemFunction {
        let m = self.m;
        let mut values = self.constrained.clone();
        for (node, &f) in self.free.iter().enumerate() {
            if f != u32::MAX {
                values[node * m..(node + 1) * m].copy_from_slice(&x[f as usize * m..(f as usize + 1) * m]);
            }
        }
        FemFunction {
            mesh: self.mesh.clone(),
            m,
            values,
        }
    }

    pub fn matrix_market(&self) -> String {
        self.matrix.to_matrix_market()
    }
}

/// Checks the resolution rule for oscillating coefficients.
pub fn check_resolution(epsilon: f64, h: f64) -> Result<Option<String>> {
    if epsilon <= 0.0 {
        return Ok(None);
    }
    if epsilon < 2.0 * h {
        return Err(Error::Underresolved {
            epsilon,
            two_h: 2.0 * h,
        });
    }
    Ok((epsilon < 4.0 * h).then(|| format!("epsilon = {epsilon} is below 4h = {}; quadrature is marginal", 4.0 * h)))
}

/// Node-to-node sparsity, expanded to `m x m` blocks.
pub fn sparsity(mesh: &TriMesh, m: usize) -> Csr {
    let n = mesh.node_count();
    let mut inc_ptr = vec![0usize; n + 1];
    for t in &mesh.triangles {
        for &v in t {
            inc_ptr[v as usize + 1] += 1;
        }
    }
    for i in 0..n {
        inc_ptr[i + 1] += inc_ptr[i];
    }
    let mut fill = inc_ptr.clone();
    let mut inc = vec![0u32; inc_ptr[n]];
    for (k, t) in mesh.triangles.iter().enumerate() {
        for &v in t {
            inc[fill[v as usize]] = k as u32;
            fill[v as usize] += 1;
        }
    }
    drop(fill);
    // first pass: neighbour counts; second pass: fill
    let neighbours = |node: usize, buf: &mut Vec<u32>| {
        buf.clear();
        for &t in &inc[inc_ptr[node]..inc_ptr[node + 1]] {
            buf.extend_from_slice(&mesh.triangles[t as usize]);
        }
        buf.sort_unstable();
        buf.dedup();
    };
    let mut buf = Vec::with_capacity(32);
    let mut row_ptr = vec![0usize; n * m + 1];
    for node in 0..n {
        neighbours(node, &mut buf);
        for al in 0..m {
            row_ptr[node * m + al + 1] = buf.len() * m;
        }
    }
    for i in 0..n * m {
        row_ptr[i + 1] += row_ptr[i];
    }
    let mut cols = vec![0u32; row_ptr[n * m]];
    for node in 0..n {
        neighbours(node, &mut buf);
        for al in 0..m {
            let mut p = row_ptr[node * m + al];
            for &nb in &buf {
                for be in 0..m {
                    cols[p] = nb * m as u32 + be as u32;
                    p += 1;
                }
            }
        }
    }
    Csr::from_pattern(n * m, n * m, row_ptr, cols)
}

/// Dense `3m x 3m` element matrix, row `(a, alpha)` at `a * m + alpha`.
fn element_matrix(
    l: Layout,
    verts: [Point; 3],
    rule: &TriangleRule,
    lambda: f64,
    mut coeff_at: impl FnMut(Point, &mut CoeffValues),
    cv: &mut CoeffValues,
    out: &mut [f64],
) {
    let (d, m) = (l.dim, l.m);
    let (g, area) = basis_gradients(verts);
    let n = 3 * m;
    out[..n * n].iter_mut().for_each(|v| *v = 0.0);
    for (bl, &w) in rule.points.iter().zip(&rule.weights) {
        coeff_at(bary_point(&verts, bl), cv);
        let wq = w * area;
        for a in 0..3 {
            for b in 0..3 {
                for al in 0..m {
                    for be in 0..m {
                        let mut s = 0.0;
                        for i in 0..d {
                            for j in 0..d {
                                s += cv.a[l.a(i, j, al, be)] * g[b][j] * g[a][i];
                            }
                            s += cv.v[l.v(i, al, be)] * bl[b] * g[a][i];
                            s += cv.b[l.v(i, al, be)] * g[b][i] * bl[a];
                        }
                        let mut c = cv.c[l.c(al, be)];
                        if al == be {
                            c += lambda;
                        }
                        s += c * bl[a] * bl[b];
                        out[(a * m + al) * n + b * m + be] += wq * s;
                    }
                }
            }
        }
    }
}

fn scatter(k: &mut Csr, tri: [u32; 3], m: usize, e: &[f64]) {
    let n = 3 * m;
    for a in 0..3 {
        for al in 0..m {
            let row = tri[a] as usize * m + al;
            for b in 0..3 {
                for be in 0..m {
                    let col = tri[b] as usize * m + be;
                    let p = k.find(row, col).expect("entry outside the sparsity pattern");
                    k.vals[p] += e[(a * m + al) * n + b * m + be];
                }
            }
        }
    }
}

/// Period of the element pattern in lattice cells, when the coefficient
/// period `eps` is an even number of cells.
fn lattice_period(mesh: &TriMesh, epsilon: f64) -> Option<usize> {
    let lat = mesh.lattice.as_ref()?;
    let p = epsilon / lat.h;
    let pr = p.round();
    ((p - pr).abs() < 1e-9 * p && pr >= 2.0 && pr as usize % 2 == 0).then_some(pr as usize)
}

/// Full stiffness matrix over all nodes (no boundary conditions).
pub fn assemble_matrix(coeffs: Coefficients, mesh: &TriMesh, epsilon: f64) -> Result<Csr> {
    let l = coeffs.layout();
    if l.dim != 2 {
        return Err(Error::Unsupported("finite elements are implemented for d = 2".into()));
    }
    let m = l.m;
    let lambda = coeffs.lambda();
    let mut k = sparsity(mesh, m);
    let n = 3 * m;
    match coeffs {
        Coefficients::Constant { values, .. } => {
            let rule = TriangleRule::order2();
            let mut cache: HashMap<[u64; 4], Vec<f64>> = HashMap::new();
            let mut cv = values.clone();
            for t in 0..mesh.triangles.len() {
                let v = mesh.vertices(t);
                // elements of a lattice mesh come in a few congruent shapes
                let key = [
                    (v[1][0] - v[0][0]).to_bits(),
                    (v[1][1] - v[0][1]).to_bits(),
                    (v[2][0] - v[0][0]).to_bits(),
                    (v[2][1] - v[0][1]).to_bits(),
                ];
                let e = cache.entry(key).or_insert_with(|| {
                    let mut e = vec![0.0; n * n];
                    element_matrix(l, v, &rule, lambda, |_, _| {}, &mut cv, &mut e);
                    e
                });
                scatter(&mut k, mesh.triangles[t], m, e);
            }
        }
        Coefficients::Periodic(set) => {
            if !(epsilon > 0.0) {
                return Err(Error::invalid("periodic coefficients need epsilon > 0"));
            }
            let rule = TriangleRule::order4();
            let at = |x: Point, cv: &mut CoeffValues| set.eval_into(&[x[0] / epsilon, x[1] / epsilon], cv);
            if let (Some(p), Some(lat)) = (lattice_period(mesh, epsilon), mesh.lattice.as_ref()) {
                // element (ci, cj, half) only depends on (ci mod p, cj mod p, half)
                let mut first = vec![usize::MAX; p * p * 2];
                for (c, cell) in lat.cells.iter().enumerate() {
                    let key = ((cell[1] as usize % p) * p + cell[0] as usize % p) * 2;
                    for half in 0..2 {
                        if first[key + half] == usize::MAX {
                            first[key + half] = 2 * c + half;
                        }
                    }
                }
                let reps: Vec<Option<Vec<f64>>> = first
                    .par_iter()
                    .map(|&t| {
                        (t != usize::MAX).then(|| {
                            let mut cv = CoeffValues::zeros(l);
                            let mut e = vec![0.0; n * n];
                            element_matrix(l, mesh.vertices(t), &rule, lambda, at, &mut cv, &mut e);
                            e
                        })
                    })
                    .collect();
                for (c, cell) in lat.cells.iter().enumerate() {
                    let key = ((cell[1] as usize % p) * p + cell[0] as usize % p) * 2;
                    for half in 0..2 {
                        let e = reps[key + half].as_ref().unwrap();
                        scatter(&mut k, mesh.triangles[2 * c + half], m, e);
                    }
                }
            } else {
                const CHUNK: usize = 16384;
                let nt = mesh.triangles.len();
                let mut buf = vec![0.0; CHUNK * n * n];
                for start in (0..nt).step_by(CHUNK) {
                    let end = (start + CHUNK).min(nt);
                    buf[..(end - start) * n * n]
                        .par_chunks_mut(n * n)
                        .enumerate()
                        .for_each_init(
                            || CoeffValues::zeros(l),
                            |cv, (o, e)| element_matrix(l, mesh.vertices(start + o), &rule, lambda, at, cv, e),
                        );
                    for t in start..end {
                        scatter(&mut k, mesh.triangles[t], m, &buf[(t - start) * n * n..(t - start + 1) * n * n]);
                    }
                }
            }
        }
    }
    Ok(k)
}

/// Load vector over all nodes: `int F . phi - int f : grad phi (+ int_dOmega h . phi)`.
pub fn assemble_load(mesh: &TriMesh, m: usize, data: &ProblemData) -> Vec<f64> {
    let mut rhs = vec![0.0; mesh.node_count() * m];
    let rule = TriangleRule::order4();
    let mut fv = vec![0.0; m];
    let mut dv = vec![0.0; 2 * m];
    let has_load = !matches!(data.load, Load::Zero);
    if has_load || data.div_load.is_some() {
        for t in 0..mesh.triangles.len() {
            let v = mesh.vertices(t);
            let tri = mesh.triangles[t];
            let (g, area) = basis_gradients(v);
            for (bl, &w) in rule.points.iter().zip(&rule.weights) {
                let p = bary_point(&v, bl);
                let wq = w * area;
                if has_load {
                    data.load.eval(t, bl, p, m, &mut fv);
                    for a in 0..3 {
                        for al in 0..m {
                            rhs[tri[a] as usize * m + al] += wq * fv[al] * bl[a];
                        }
                    }
                }
                if let Some(f) = &data.div_load {
                    for (o, e) in dv.iter_mut().zip(f) {
                        *o = e.eval(&p);
                    }
                    for a in 0..3 {
                        for al in 0..m {
                            rhs[tri[a] as usize * m + al] -= wq * (dv[al * 2] * g[a][0] + dv[al * 2 + 1] * g[a][1]);
                        }
                    }
                }
            }
        }
    }
    if data.bc == BcKind::Neumann && !matches!(data.boundary, BoundaryData::Zero) {
        let gauss = gauss_segment(3);
        let mut hv = vec![0.0; m];
        for e in &mesh.boundary {
            let (p, q) = (mesh.nodes[e.nodes[0] as usize], mesh.nodes[e.nodes[1] as usize]);
            let mid = [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])];
            for &(s, w) in &gauss {
                let x = [p[0] + s * (q[0] - p[0]), p[1] + s * (q[1] - p[1])];
                data.boundary.eval(x, mid, m, &mut hv);
                for al in 0..m {
                    rhs[e.nodes[0] as usize * m + al] += w * e.length * hv[al] * (1.0 - s);
                    rhs[e.nodes[1] as usize * m + al] += w * e.length * hv[al] * s;
                }
            }
        }
    }
    rhs
}

/// Assembles the reduced system for `data`; with `adjoint` the adjoint
/// coefficients are used, so the matrix is the transpose of the primal one.
pub fn assemble(
    coeffs: Coefficients,
    mesh: Arc<TriMesh>,
    data: &ProblemData,
    adjoint: bool,
) -> Result<AssembledSystem> {
    let l = coeffs.layout();
    let m = l.m;
    let mut warnings = vec![];
    match coeffs {
        Coefficients::Periodic(_) if data.epsilon <= 0.0 => {
            return Err(Error::invalid("epsilon = 0 needs constant (homogenized) coefficients"))
        }
        Coefficients::Periodic(_) => {
            if let Some(w) = check_resolution(data.epsilon, mesh.h)? {
                warnings.push(w);
            }
        }
        Coefficients::Constant { .. } => {}
    }
    let owned = adjoint.then(|| match coeffs {
        Coefficients::Periodic(c) => Owned::Set(c.adjoint()),
        Coefficients::Constant { values, .. } => Owned::Values(values.adjoint(l)),
    });
    let coeffs = match (&owned, coeffs) {
        (Some(Owned::Set(c)), _) => Coefficients::Periodic(c),
        (Some(Owned::Values(v)), Coefficients::Constant { layout, lambda, .. }) => Coefficients::Constant {
            layout,
            values: v,
            lambda,
        },
        _ => coeffs,
    };
    let symmetric = !coeffs.has_first_order() && coeffs.a_symmetric();
    let full = assemble_matrix(coeffs, &mesh, data.epsilon)?;
    let load = assemble_load(&mesh, m, data);
    let n = mesh.node_count();
    let mut free = vec![0u32; n];
    let mut constrained = vec![0.0; n * m];
    let mut free_count = n;
    if data.bc == BcKind::Dirichlet {
        let on_b = mesh.boundary_nodes();
        // a boundary node's hint is the midpoint towards an adjacent boundary node
        let mut hint: Vec<Point> = mesh.nodes.clone();
        for e in &mesh.boundary {
            let (p, q) = (mesh.nodes[e.nodes[0] as usize], mesh.nodes[e.nodes[1] as usize]);
            hint[e.nodes[0] as usize] = [0.75 * p[0] + 0.25 * q[0], 0.75 * p[1] + 0.25 * q[1]];
        }
        free_count = 0;
        for node in 0..n {
            if on_b[node] {
                free[node] = u32::MAX;
                data.boundary
                    .eval(mesh.nodes[node], hint[node], m, &mut constrained[node * m..(node + 1) * m]);
            } else {
                free[node] = free_count as u32;
                free_count += 1;
            }
        }
    } else {
        for (node, f) in free.iter_mut().enumerate() {
            *f = node as u32;
        }
    }
    let (matrix, rhs) = if free_count == n {
        (full, load)
    } else {
        reduce(&full, &load, &free, free_count, m, &constrained)
    };
    if let Some(k) = constrained.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            value: constrained[k],
            point: mesh.nodes[k / m].to_vec(),
        });
    }
    Ok(AssembledSystem {
        mesh,
        m,
        matrix,
        rhs,
        free,
        free_count,
        constrained,
        symmetric,
        bc: data.bc,
        warnings,
    })
}

/// Keeps free rows and columns; constrained columns move to the right side.
fn reduce(k: &Csr, load: &[f64], free: &[u32], nf: usize, m: usize, g: &[f64]) -> (Csr, Vec<f64>) {
    let dof = |i: usize| -> Option<usize> {
        let f = free[i / m];
        (f != u32::MAX).then(|| f as usize * m + i % m)
    };
    let mut row_ptr = vec![0usize; nf * m + 1];
    let mut cols = Vec::with_capacity(k.nnz());
    let mut vals = Vec::with_capacity(k.nnz());
    let mut rhs = vec![0.0; nf * m];
    for i in 0..k.n_rows {
        let Some(r) = dof(i) else { continue };
        let mut b = load[i];
        let (cs, vs) = k.row(i);
        for (&c, &v) in cs.iter().zip(vs) {
            match dof(c as usize) {
                Some(cf) => {
                    cols.push(cf as u32);
                    vals.push(v);
                }
                None => b -= v * g[c as usize],
            }
        }
        rhs[r] = b;
        row_ptr[r + 1] = cols.len();
    }
    (
        Csr {
            n_rows: nf * m,
            n_cols: nf * m,
            row_ptr,
            cols,
            vals,
        },
        rhs,
    )
}
