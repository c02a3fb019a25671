//! Compressed sparse row matrices.

use rayon::prelude::*;

#[derive(Debug, Clone, PartialEq)]
pub struct Csr {
    pub n_rows: usize,
    pub n_cols: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<u32>,
    pub vals: Vec<f64>,
}

impl Csr {
    /// Builds a matrix from a sorted, duplicate-free pattern with zero values.
    pub fn from_pattern(n_rows: usize, n_cols: usize, row_ptr: Vec<usize>, cols: Vec<u32>) -> Self {
        let nnz = cols.len();
        Csr {
            n_rows,
            n_cols,
            row_ptr,
            cols,
            vals: vec![0.0; nnz],
        }
    }

    /// Sums duplicate triplets; rows come out sorted by column.
    pub fn from_triplets(n_rows: usize, n_cols: usize, trip: &[(usize, usize, f64)]) -> Self {
        let mut count = vec![0usize; n_rows + 1];
        for &(r, _, _) in trip {
            count[r + 1] += 1;
        }
        for i in 0..n_rows {
            count[i + 1] += count[i];
        }
        let mut fill = count.clone();
        let mut tmp = vec![(0u32, 0.0); trip.len()];
        for &(r, c, v) in trip {
            tmp[fill[r]] = (c as u32, v);
            fill[r] += 1;
        }
        let mut row_ptr = vec![0usize; n_rows + 1];
        let mut cols = Vec::with_capacity(trip.len());
        let mut vals = Vec::with_capacity(trip.len());
        for r in 0..n_rows {
            let row = &mut tmp[count[r]..count[r + 1]];
            row.sort_by_key(|e| e.0);
            for &(c, v) in row.iter() {
                if cols.len() > row_ptr[r] && *cols.last().unwrap() == c {
                    *vals.last_mut().unwrap() += v;
                } else {
                    cols.push(c);
                    vals.push(v);
                }
            }
            row_ptr[r + 1] = cols.len();
        }
        Csr {
            n_rows,
            n_cols,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    #[inline]
    pub fn row(&self, i: usize) -> (&[u32], &[f64]) {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        (&self.cols[a..b], &self.vals[a..b])
    }

    /// Position of `(i, j)` in the value array.
    #[inline]
    pub fn find(&self, i: usize, j: usize) -> Option<usize> {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        let j = j as u32;
        if b - a <= 16 {
            (a..b).find(|&p| self.cols[p] == j)
        } else {
            self.cols[a..b].binary_search(&j).ok().map(|p| a + p)
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.find(i, j).map_or(0.0, |p| self.vals[p])
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        let body = |(i, yi): (usize, &mut f64)| {
            let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
            let mut s = 0.0;
            for p in a..b {
                s += self.vals[p] * x[self.cols[p] as usize];
            }
            *yi = s;
        };
        if self.n_rows > 50_000 {
            y.par_iter_mut().enumerate().with_min_len(8192).for_each(body);
        } else {
            y.iter_mut().enumerate().for_each(body);
        }
    }

    pub fn transpose(&self) -> Csr {
        let mut count = vec![0usize; self.n_cols + 1];
        for &c in &self.cols {
            count[c as usize + 1] += 1;
        }
        for i in 0..self.n_cols {
            count[i + 1] += count[i];
        }
        let mut fill = count.clone();
        let mut cols = vec![0u32; self.nnz()];
        let mut vals = vec![0.0; self.nnz()];
        for r in 0..self.n_rows {
            for p in self.row_ptr[r]..self.row_ptr[r + 1] {
                let c = self.cols[p] as usize;
                cols[fill[c]] = r as u32;
                vals[fill[c]] = self.vals[p];
                fill[c] += 1;
            }
        }
        Csr {
            n_rows: self.n_cols,
            n_cols: self.n_rows,
            row_ptr: count,
            cols,
            vals,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n_rows).map(|i| self.get(i, i)).collect()
    }

    /// Sparse product `self * other` (Gustavson).
    pub fn matmul(&self, other: &Csr) -> Csr {
        assert_eq!(self.n_cols, other.n_rows);
        let mut row_ptr = vec![0usize; self.n_rows + 1];
        let mut cols = vec![];
        let mut vals = vec![];
        let mut marker = vec![usize::MAX; other.n_cols];
        let mut acc = vec![0.0; other.n_cols];
        let mut touched: Vec<u32> = vec![];
        for i in 0..self.n_rows {
            touched.clear();
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                let k = self.cols[p] as usize;
                let a = self.vals[p];
                for q in other.row_ptr[k]..other.row_ptr[k + 1] {
                    let j = other.cols[q] as usize;
                    if marker[j] != i {
                        marker[j] = i;
                        acc[j] = 0.0;
                        touched.push(j as u32);
                    }
                    acc[j] += a * other.vals[q];
                }
            }
            touched.sort_unstable();
            for &j in &touched {
                cols.push(j);
                vals.push(acc[j as usize]);
            }
            row_ptr[i + 1] = cols.len();
        }
        Csr {
            n_rows: self.n_rows,
            n_cols: other.n_cols,
            row_ptr,
            cols,
            vals,
        }
    }

    /// Largest `|a_ij - a_ji|` relative to the largest entry.
    pub fn asymmetry(&self) -> f64 {
        let t = self.transpose();
        let scale = self.vals.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        let mut worst = 0.0f64;
        for i in 0..self.n_rows {
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.cols[p] as usize;
                worst = worst.max((self.vals[p] - t.get(i, j)).abs());
            }
        }
        worst / scale
    }

    /// Matrix-market coordinate text (1-based indices).
    pub fn to_matrix_market(&self) -> String {
        use std::fmt::Write;
        let mut s = String::new();
        writeln!(s, "%%MatrixMarket matrix coordinate real general").unwrap();
        writeln!(s, "{} {} {}", self.n_rows, self.n_cols, self.nnz()).unwrap();
        for i in 0..self.n_rows {
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                writeln!(s, "{} {} {:.17e}", i + 1, self.cols[p] + 1, self.vals[p]).unwrap();
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense(a: &Csr) -> Vec<Vec<f64>> {
        (0..a.n_rows).map(|i| (0..a.n_cols).map(|j| a.get(i, j)).collect()).collect()
    }

    #[test]
    fn triplets_sum_duplicates() {
        let a = Csr::from_triplets(2, 3, &[(0, 2, 1.0), (0, 0, 2.0), (0, 2, 3.0), (1, 1, -1.0)]);
        assert_eq!(dense(&a), vec![vec![2.0, 0.0, 4.0], vec![0.0, -1.0, 0.0]]);
        assert_eq!(a.cols, vec![0, 2, 1]);
    }

    #[test]
    fn product_and_transpose_match_dense() {
        let a = Csr::from_triplets(3, 2, &[(0, 0, 1.0), (1, 1, 2.0), (2, 0, 3.0), (2, 1, 4.0)]);
        let b = Csr::from_triplets(2, 3, &[(0, 1, 5.0), (1, 0, 6.0), (1, 2, 7.0)]);
        let c = a.matmul(&b);
        let (da, db) = (dense(&a), dense(&b));
        for i in 0..3 {
            for j in 0..3 {
                let want: f64 = (0..2).map(|k| da[i][k] * db[k][j]).sum();
                assert_eq!(c.get(i, j), want);
            }
        }
        let t = a.transpose();
        for i in 0..3 {
            for j in 0..2 {
                assert_eq!(t.get(j, i), a.get(i, j));
            }
        }
        let mut y = vec![0.0; 3];
        a.matvec(&[1.0, -1.0], &mut y);
        assert_eq!(y, vec![1.0, -2.0, -1.0]);
    }

    #[test]
    fn matrix_market_header() {
        let a = Csr::from_triplets(2, 2, &[(0, 0, 1.0), (1, 0, 2.0)]);
        let s = a.to_matrix_market();
        assert!(s.lines().nth(1).unwrap() == "2 2 2");
        assert!(s.contains("2 1 2.0"));
    }
}
