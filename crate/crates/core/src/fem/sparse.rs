//! Compressed sparse row matrices.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::real::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix<T> {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<T>,
}

impl<T: Real> CsrMatrix<T> {
    /// Builds a matrix from raw CSR arrays; column indices must be sorted per row.
    pub fn from_raw(n_rows: usize, n_cols: usize, row_ptr: Vec<usize>, col_idx: Vec<usize>, values: Vec<T>) -> Self {
        assert_eq!(row_ptr.len(), n_rows + 1);
        assert_eq!(col_idx.len(), values.len());
        assert_eq!(row_ptr[n_rows], col_idx.len());
        debug_assert!((0..n_rows).all(|r| col_idx[row_ptr[r]..row_ptr[r + 1]].windows(2).all(|w| w[0] < w[1])));
        Self {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            values,
        }
    }

    /// Sums duplicate entries; ties are summed in input order.
    pub fn from_triplets(n_rows: usize, n_cols: usize, mut triplets: Vec<(usize, usize, T)>) -> Self {
        triplets.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0; n_rows + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<T> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            assert!(r < n_rows && c < n_cols, "triplet ({r}, {c}) out of bounds");
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..n_rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Self::from_raw(n_rows, n_cols, row_ptr, col_idx, values)
    }

    /// Zero matrix with the block pattern induced by element node lists:
    /// nodes sharing an element couple all `block` components with each other.
    pub fn from_element_nodes<'a>(
        n_nodes: usize,
        block: usize,
        elements: impl Iterator<Item = &'a [usize]>,
    ) -> Self {
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n_nodes];
        for nodes in elements {
            for &a in nodes {
                adj[a].extend_from_slice(nodes);
            }
        }
        for row in adj.iter_mut() {
            row.sort_unstable();
            row.dedup();
        }
        let n = n_nodes * block;
        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0);
        let nnz: usize = adj.iter().map(|r| r.len()).sum::<usize>() * block * block;
        let mut col_idx = Vec::with_capacity(nnz);
        for row in &adj {
            for _ in 0..block {
                for &b in row {
                    col_idx.extend((0..block).map(|c| b * block + c));
                }
                row_ptr.push(col_idx.len());
            }
        }
        let values = vec![T::zero(); col_idx.len()];
        Self::from_raw(n, n, row_ptr, col_idx, values)
    }

    pub fn identity(n: usize) -> Self {
        Self::from_raw(n, n, (0..=n).collect(), (0..n).collect(), vec![T::one(); n])
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    /// Column indices and values of row `r`.
    #[inline]
    pub fn row(&self, r: usize) -> (&[usize], &[T]) {
        let (a, b) = (self.row_ptr[r], self.row_ptr[r + 1]);
        (&self.col_idx[a..b], &self.values[a..b])
    }

    /// Position of entry `(r, c)` in the value array.
    #[inline]
    pub fn find(&self, r: usize, c: usize) -> Option<usize> {
        let (a, b) = (self.row_ptr[r], self.row_ptr[r + 1]);
        self.col_idx[a..b].binary_search(&c).ok().map(|k| a + k)
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        self.find(r, c).map_or(T::zero(), |k| self.values[k])
    }

    /// Adds `v` to an entry that must be part of the pattern.
    #[inline]
    pub fn add(&mut self, r: usize, c: usize, v: T) {
        let k = self.find(r, c).unwrap_or_else(|| panic!("entry ({r}, {c}) outside sparsity pattern"));
        self.values[k] += v;
    }

    /// Scatters a dense local matrix (row-major, `dofs.len()` squared).
    pub fn add_local(&mut self, dofs: &[usize], local: &[T]) {
        let n = dofs.len();
        for (i, &r) in dofs.iter().enumerate() {
            for (j, &c) in dofs.iter().enumerate() {
                self.add(r, c, local[i * n + j]);
            }
        }
    }

    pub fn clear_values(&mut self) {
        self.values.iter_mut().for_each(|v| *v = T::zero());
    }

    pub fn same_pattern(&self, other: &Self) -> bool {
        self.n_rows == other.n_rows && self.row_ptr == other.row_ptr && self.col_idx == other.col_idx
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.n_rows];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[T], y: &mut [T]) {
        assert_eq!(x.len(), self.n_cols);
        for (r, yr) in y.iter_mut().enumerate() {
            let mut s = T::zero();
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                s += self.values[k] * x[self.col_idx[k]];
            }
            *yr = s;
        }
    }

    /// `xᵀ A y`.
    pub fn bilinear(&self, x: &[T], y: &[T]) -> T {
        let ay = self.matvec(y);
        x.iter().zip(&ay).map(|(&a, &b)| a * b).sum()
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.n_rows).map(|r| self.get(r, r)).collect()
    }

    /// `self + a * other` for matrices with identical patterns.
    pub fn axpy(&self, a: T, other: &Self) -> Self {
        assert!(self.same_pattern(other), "axpy needs identical patterns");
        let mut out = self.clone();
        for (x, &y) in out.values.iter_mut().zip(&other.values) {
            *x += a * y;
        }
        out
    }

    pub fn scaled(&self, a: T) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= a);
        out
    }

    pub fn transpose(&self) -> Self {
        let mut trip = Vec::with_capacity(self.nnz());
        for r in 0..self.n_rows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                trip.push((self.col_idx[k], r, self.values[k]));
            }
        }
        Self::from_triplets(self.n_cols, self.n_rows, trip)
    }

    /// Largest `|A_ij - A_ji|` over stored entries.
    pub fn asymmetry(&self) -> T {
        let mut worst = T::zero();
        for r in 0..self.n_rows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let c = self.col_idx[k];
                worst = worst.max((self.values[k] - self.get(c, r)).abs());
            }
        }
        worst
    }

    pub fn max_abs(&self) -> T {
        self.values.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    /// Dense row-major copy, for tests and small problems.
    pub fn to_dense(&self) -> Vec<Vec<T>> {
        let mut d = vec![vec![T::zero(); self.n_cols]; self.n_rows];
        for (r, row) in d.iter_mut().enumerate() {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                row[self.col_idx[k]] += self.values[k];
            }
        }
        d
    }

    /// Imposes `x[d] = values[d]` for every `d` with `fixed[d]`.
    ///
    /// Constrained rows become identity rows. Constrained columns of free rows
    /// are zeroed and moved to each right-hand side using the matching value
    /// vector, which keeps the matrix symmetric.
    pub fn apply_dirichlet(&mut self, fixed: &[bool], rhs: &mut [&mut [T]], values: &[&[T]]) {
        assert_eq!(fixed.len(), self.n_rows);
        assert_eq!(rhs.len(), values.len());
        for r in 0..self.n_rows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let c = self.col_idx[k];
                if fixed[r] {
                    self.values[k] = if c == r { T::one() } else { T::zero() };
                } else if fixed[c] {
                    let a = self.values[k];
                    for (b, g) in rhs.iter_mut().zip(values) {
                        b[r] -= a * g[c];
                    }
                    self.values[k] = T::zero();
                }
            }
            if fixed[r] {
                assert!(self.find(r, r).is_some(), "constrained row {r} has no diagonal entry");
                for (b, g) in rhs.iter_mut().zip(values) {
                    b[r] = g[r];
                }
            }
        }
    }

    /// Writes the matrix in MatrixMarket coordinate format (1-based indices).
    pub fn write_matrix_market(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let io = |source| Error::Io {
            path: path.display().to_string(),
            source,
        };
        let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
        writeln!(f, "%%MatrixMarket matrix coordinate real general").map_err(io)?;
        writeln!(f, "{} {} {}", self.n_rows, self.n_cols, self.nnz()).map_err(io)?;
        for r in 0..self.n_rows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                writeln!(f, "{} {} {:e}", r + 1, self.col_idx[k] + 1, self.values[k]).map_err(io)?;
            }
        }
        f.flush().map_err(io)
    }
}
