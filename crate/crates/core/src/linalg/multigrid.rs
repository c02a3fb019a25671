//! Geometric multigrid on nested square-lattice P1 meshes with Galerkin
//! coarse operators, used as a Krylov preconditioner.

use nalgebra::{DMatrix, DVector};

use super::sparse::Csr;

/// Free lattice points of one level.
#[derive(Debug, Clone)]
pub struct GridDofs {
    pub nx: usize,
    pub ny: usize,
    /// Lattice point `(i, j)` at `j * (nx + 1) + i` to free node index, or `u32::MAX`.
    pub dof: Vec<u32>,
    /// Cell `(i, j)` at `j * nx + i` belongs to the mesh.
    pub cell_in: Vec<bool>,
    pub count: usize,
}

impl GridDofs {
    #[inline]
    fn at(&self, i: usize, j: usize) -> Option<usize> {
        let v = self.dof[j * (self.nx + 1) + i];
        (v != u32::MAX).then_some(v as usize)
    }

    /// Next coarser level, if the cell mask coarsens exactly.
    pub fn coarsen(&self) -> Option<GridDofs> {
        if self.nx % 2 != 0 || self.ny % 2 != 0 || self.nx < 2 || self.ny < 2 {
            return None;
        }
        let (cx, cy) = (self.nx / 2, self.ny / 2);
        let mut cell_in = vec![false; cx * cy];
        for cj in 0..cy {
            for ci in 0..cx {
                let kids = [(0, 0), (1, 0), (0, 1), (1, 1)]
                    .map(|(a, b)| self.cell_in[(2 * cj + b) * self.nx + 2 * ci + a]);
                if kids.iter().any(|&k| k != kids[0]) {
                    return None;
                }
                cell_in[cj * cx + ci] = kids[0];
            }
        }
        let mut dof = vec![u32::MAX; (cx + 1) * (cy + 1)];
        let mut count = 0;
        for j in 0..=cy {
            for i in 0..=cx {
                if self.at(2 * i, 2 * j).is_some() {
                    dof[j * (cx + 1) + i] = count as u32;
                    count += 1;
                }
            }
        }
        Some(GridDofs {
            nx: cx,
            ny: cy,
            dof,
            cell_in,
            count,
        })
    }

    /// P1 prolongation from `coarse` to `self` for `m` components per node.
    pub fn prolongation(&self, coarse: &GridDofs, m: usize) -> Csr {
        let mut trip = Vec::with_capacity(self.count * m * 3);
        for j in 0..=self.ny {
            for i in 0..=self.nx {
                let Some(f) = self.at(i, j) else { continue };
                let mut w: Vec<((usize, usize), f64)> = vec![];
                match (i % 2, j % 2) {
                    (0, 0) => w.push(((i / 2, j / 2), 1.0)),
                    (1, 0) => {
                        w.push((((i - 1) / 2, j / 2), 0.5));
                        w.push((((i + 1) / 2, j / 2), 0.5));
                    }
                    (0, 1) => {
                        w.push(((i / 2, (j - 1) / 2), 0.5));
                        w.push(((i / 2, (j + 1) / 2), 0.5));
                    }
                    _ => {
                        let (ci, cj) = ((i - 1) / 2, (j - 1) / 2);
                        if (ci + cj) % 2 == 0 {
                            w.push(((ci, cj), 0.5));
                            w.push(((ci + 1, cj + 1), 0.5));
                        } else {
                            w.push(((ci + 1, cj), 0.5));
                            w.push(((ci, cj + 1), 0.5));
                        }
                    }
                }
                for ((ci, cj), wt) in w {
                    if let Some(c) = coarse.at(ci, cj) {
                        for al in 0..m {
                            trip.push((f * m + al, c * m + al, wt));
                        }
                    }
                }
            }
        }
        Csr::from_triplets(self.count * m, coarse.count * m, &trip)
    }
}

struct Level {
    a: Csr,
    /// Prolongation from the next coarser level and its transpose.
    p: Option<(Csr, Csr)>,
    diag_inv: Vec<f64>,
}

enum Coarse {
    Lu(nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>),
    Smooth,
}

pub struct Multigrid {
    levels: Vec<Level>,
    coarse: Coarse,
    pub sweeps: usize,
}

const DIRECT_LIMIT: usize = 2000;

impl Multigrid {
    /// Builds the hierarchy for `a` posed on the free dofs of `grid`.
    pub fn new(a: Csr, grid: &GridDofs, m: usize) -> Multigrid {
        let mut levels = vec![];
        let mut a = a;
        let mut g = grid.clone();
        loop {
            let diag_inv = a.diagonal().iter().map(|&d| if d != 0.0 { 1.0 / d } else { 0.0 }).collect();
            if a.n_rows <= DIRECT_LIMIT {
                levels.push(Level { a, p: None, diag_inv });
                break;
            }
            let Some(c) = g.coarsen().filter(|c| c.count > 0 && c.count * m < a.n_rows) else {
                levels.push(Level { a, p: None, diag_inv });
                break;
            };
            let p = g.prolongation(&c, m);
            let r = p.transpose();
            let ac = r.matmul(&a.matmul(&p));
            levels.push(Level {
                a,
                p: Some((p, r)),
                diag_inv,
            });
            a = ac;
            g = c;
        }
        let last = &levels.last().unwrap().a;
        let coarse = if last.n_rows <= DIRECT_LIMIT {
            let n = last.n_rows;
            let mut d = DMatrix::<f64>::zeros(n, n);
            for i in 0..n {
                let (cols, vals) = last.row(i);
                for (c, v) in cols.iter().zip(vals) {
                    d[(i, *c as usize)] = *v;
                }
            }
            Coarse::Lu(d.lu())
        } else {
            Coarse::Smooth
        };
        Multigrid {
            levels,
            coarse,
            sweeps: 1,
        }
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    /// One V-cycle from a zero initial guess: `x ~ A^{-1} b`.
    pub fn apply(&self, b: &[f64], x: &mut [f64]) {
        x.iter_mut().for_each(|v| *v = 0.0);
        self.cycle(0, b, x);
    }

    fn cycle(&self, l: usize, b: &[f64], x: &mut [f64]) {
        let lev = &self.levels[l];
        let Some((p, r)) = &lev.p else {
            match &self.coarse {
                Coarse::Lu(lu) => {
                    let sol = lu.solve(&DVector::from_column_slice(b));
                    match sol {
                        Some(s) => x.copy_from_slice(s.as_slice()),
                        None => {
                            // singular coarse operator: fall back to smoothing
                            for _ in 0..20 {
                                gauss_seidel(&lev.a, &lev.diag_inv, b, x, true);
                                gauss_seidel(&lev.a, &lev.diag_inv, b, x, false);
                            }
                        }
                    }
                }
                Coarse::Smooth => {
                    for _ in 0..20 {
                        gauss_seidel(&lev.a, &lev.diag_inv, b, x, true);
                        gauss_seidel(&lev.a, &lev.diag_inv, b, x, false);
                    }
                }
            }
            return;
        };
        for _ in 0..self.sweeps {
            gauss_seidel(&lev.a, &lev.diag_inv, b, x, true);
        }
        let mut res = vec![0.0; b.len()];
        lev.a.matvec(x, &mut res);
        for (ri, bi) in res.iter_mut().zip(b) {
            *ri = bi - *ri;
        }
        let mut rc = vec![0.0; r.n_rows];
        r.matvec(&res, &mut rc);
        let mut xc = vec![0.0; r.n_rows];
        self.cycle(l + 1, &rc, &mut xc);
        let mut corr = vec![0.0; x.len()];
        p.matvec(&xc, &mut corr);
        for (xi, ci) in x.iter_mut().zip(&corr) {
            *xi += ci;
        }
        for _ in 0..self.sweeps {
            gauss_seidel(&lev.a, &lev.diag_inv, b, x, false);
        }
    }
}

fn gauss_seidel(a: &Csr, diag_inv: &[f64], b: &[f64], x: &mut [f64], forward: bool) {
    let n = a.n_rows;
    let mut step = |i: usize| {
        let (cols, vals) = a.row(i);
        let mut s = b[i];
        for (c, v) in cols.iter().zip(vals) {
            let c = *c as usize;
            if c != i {
                s -= v * x[c];
            }
        }
        x[i] = s * diag_inv[i];
    };
    if forward {
        (0..n).for_each(&mut step);
    } else {
        (0..n).rev().for_each(&mut step);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::krylov::{pcg, KrylovOptions};

    /// 5-point Laplacian on the interior of an `n x n` cell lattice.
    fn poisson(n: usize) -> (Csr, GridDofs) {
        let mut dof = vec![u32::MAX; (n + 1) * (n + 1)];
        let mut count = 0;
        for j in 1..n {
            for i in 1..n {
                dof[j * (n + 1) + i] = count;
                count += 1;
            }
        }
        let mut trip = vec![];
        for j in 1..n {
            for i in 1..n {
                let r = dof[j * (n + 1) + i] as usize;
                trip.push((r, r, 4.0));
                for (a, b) in [(i - 1, j), (i + 1, j), (i, j - 1), (i, j + 1)] {
                    let c = dof[b * (n + 1) + a];
                    if c != u32::MAX {
                        trip.push((r, c as usize, -1.0));
                    }
                }
            }
        }
        let g = GridDofs {
            nx: n,
            ny: n,
            dof,
            cell_in: vec![true; n * n],
            count: count as usize,
        };
        (Csr::from_triplets(g.count, g.count, &trip), g)
    }

    #[test]
    fn prolongation_reproduces_linears() {
        let (_, g) = poisson(16);
        let c = g.coarsen().unwrap();
        let p = g.prolongation(&c, 1);
        // coarse values of f(x, y) = x + 2y at interior coarse points
        let mut xc = vec![0.0; c.count];
        for j in 0..=c.ny {
            for i in 0..=c.nx {
                if let Some(k) = c.at(i, j) {
                    xc[k] = (2 * i) as f64 + 2.0 * (2 * j) as f64;
                }
            }
        }
        let mut xf = vec![0.0; g.count];
        p.matvec(&xc, &mut xf);
        for j in 2..g.ny - 1 {
            for i in 2..g.nx - 1 {
                let k = g.at(i, j).unwrap();
                assert!((xf[k] - (i as f64 + 2.0 * j as f64)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn multigrid_preconditioned_cg_is_fast() {
        let (a, g) = poisson(256);
        let mg = Multigrid::new(a.clone(), &g, 1);
        assert!(mg.depth() >= 3);
        let b: Vec<f64> = (0..a.n_rows).map(|i| ((i * 7) % 13) as f64 - 6.0).collect();
        let mut x = vec![0.0; a.n_rows];
        let st = pcg(
            |u, o| a.matvec(u, o),
            |r, z| mg.apply(r, z),
            &b,
            &mut x,
            KrylovOptions { tol: 1e-10, max_iter: 200 },
        )
        .unwrap();
        assert!(st.iterations < 40, "{}", st.iterations);
    }
}
