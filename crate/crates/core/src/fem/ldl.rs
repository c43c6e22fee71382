//! Sparse LDLᵀ factorization for symmetric matrices with fill-reducing ordering.
//!
//! Up-looking algorithm driven by the elimination tree. No pivoting is done,
//! so the ordering must keep every leading pivot nonzero: any ordering works
//! for positive definite matrices, saddle point systems need a block ordering
//! (see [`Ordering::BlockAmd`]).

use super::sparse::CsrMatrix;
use crate::error::{Error, Result};
use crate::real::Real;

const NONE: usize = usize::MAX;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Ordering {
    Natural,
    /// Approximate minimum degree on the scalar graph.
    Amd,
    /// AMD on the graph of consecutive `n`-dof blocks, each block kept in its
    /// internal order.
    BlockAmd(usize),
    Given(Vec<usize>),
}

#[derive(Debug, Clone)]
pub struct LdlFactor<T> {
    n: usize,
    /// `perm[k]` is the original index eliminated at step `k`.
    perm: Vec<usize>,
    perm_inv: Vec<usize>,
    parent: Vec<usize>,
    l_ptr: Vec<usize>,
    l_idx: Vec<usize>,
    l_val: Vec<T>,
    d: Vec<T>,
    pattern_rows: Vec<usize>,
    pattern_cols: Vec<usize>,
}

fn amd_permutation(n: usize, adj_ptr: &[usize], adj: &[usize]) -> Vec<usize> {
    if n == 0 {
        return Vec::new();
    }
    let ap: Vec<i64> = adj_ptr.iter().map(|&x| x as i64).collect();
    let ai: Vec<i64> = adj.iter().map(|&x| x as i64).collect();
    match amd::order::<i64>(n as i64, &ap, &ai, &amd::Control::default()) {
        Ok((p, _, _)) => p.into_iter().map(|x| x as usize).collect(),
        Err(_) => (0..n).collect(),
    }
}

fn block_graph<T: Real>(a: &CsrMatrix<T>, block: usize) -> (usize, Vec<usize>, Vec<usize>) {
    let nb = a.n_rows() / block;
    let mut ptr = vec![0];
    let mut idx = Vec::new();
    let mut row: Vec<usize> = Vec::new();
    for b in 0..nb {
        row.clear();
        for r in b * block..(b + 1) * block {
            row.extend(a.row(r).0.iter().map(|&c| c / block));
        }
        row.sort_unstable();
        row.dedup();
        idx.extend_from_slice(&row);
        ptr.push(idx.len());
    }
    (nb, ptr, idx)
}

fn ordering_perm<T: Real>(a: &CsrMatrix<T>, ordering: &Ordering) -> Vec<usize> {
    let n = a.n_rows();
    match ordering {
        Ordering::Natural => (0..n).collect(),
        Ordering::Amd => amd_permutation(n, a.row_ptr(), a.col_idx()),
        Ordering::BlockAmd(b) => {
            assert!(*b > 0 && n % b == 0, "matrix size {n} is not a multiple of block {b}");
            let (nb, ptr, idx) = block_graph(a, *b);
            amd_permutation(nb, &ptr, &idx)
                .into_iter()
                .flat_map(|k| (0..*b).map(move |c| k * b + c))
                .collect()
        }
        Ordering::Given(p) => {
            assert_eq!(p.len(), n);
            p.clone()
        }
    }
}

impl<T: Real> LdlFactor<T> {
    /// Symbolic and numeric factorization of a symmetric matrix. Only the
    /// pattern and values of the full matrix are read; symmetry is assumed.
    pub fn new(a: &CsrMatrix<T>, ordering: &Ordering) -> Result<Self> {
        assert_eq!(a.n_rows(), a.n_cols(), "LDLᵀ needs a square matrix");
        let n = a.n_rows();
        let perm = ordering_perm(a, ordering);
        let mut perm_inv = vec![0; n];
        for (k, &i) in perm.iter().enumerate() {
            perm_inv[i] = k;
        }
        let mut f = Self {
            n,
            perm,
            perm_inv,
            parent: vec![NONE; n],
            l_ptr: vec![0; n + 1],
            l_idx: Vec::new(),
            l_val: Vec::new(),
            d: vec![T::zero(); n],
            pattern_rows: a.row_ptr().to_vec(),
            pattern_cols: a.col_idx().to_vec(),
        };
        f.symbolic(a);
        f.refactor(a)?;
        Ok(f)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Nonzeros in the strict lower factor.
    pub fn nnz_l(&self) -> usize {
        self.l_ptr[self.n]
    }

    fn symbolic(&mut self, a: &CsrMatrix<T>) {
        let n = self.n;
        let mut flag = vec![NONE; n];
        let mut lnz = vec![0usize; n];
        for k in 0..n {
            flag[k] = k;
            for &c in a.row(self.perm[k]).0 {
                let mut i = self.perm_inv[c];
                if i >= k {
                    continue;
                }
                while flag[i] != k {
                    if self.parent[i] == NONE {
                        self.parent[i] = k;
                    }
                    lnz[i] += 1;
                    flag[i] = k;
                    i = self.parent[i];
                }
            }
        }
        for k in 0..n {
            self.l_ptr[k + 1] = self.l_ptr[k] + lnz[k];
        }
        self.l_idx = vec![0; self.l_ptr[n]];
        self.l_val = vec![T::zero(); self.l_ptr[n]];
    }

    /// Numeric refactorization for a matrix with the same pattern.
    pub fn refactor(&mut self, a: &CsrMatrix<T>) -> Result<()> {
        assert!(
            a.row_ptr() == self.pattern_rows.as_slice() && a.col_idx() == self.pattern_cols.as_slice(),
            "refactor needs the original sparsity pattern"
        );
        let n = self.n;
        let scale = a.max_abs();
        let tiny = T::epsilon() * T::lit(16.0) * scale;
        let mut y = vec![T::zero(); n];
        let mut flag = vec![NONE; n];
        let mut pattern = vec![0usize; n];
        let mut lnz = vec![0usize; n];
        for k in 0..n {
            let mut top = n;
            flag[k] = k;
            let (cols, vals) = a.row(self.perm[k]);
            for (&c, &v) in cols.iter().zip(vals) {
                let mut i = self.perm_inv[c];
                if i > k {
                    continue;
                }
                y[i] += v;
                let mut len = 0;
                while flag[i] != k {
                    pattern[len] = i;
                    len += 1;
                    flag[i] = k;
                    i = self.parent[i];
                }
                while len > 0 {
                    top -= 1;
                    len -= 1;
                    pattern[top] = pattern[len];
                }
            }
            let mut dk = y[k];
            y[k] = T::zero();
            for &i in &pattern[top..n] {
                let yi = y[i];
                y[i] = T::zero();
                let start = self.l_ptr[i];
                for p in start..start + lnz[i] {
                    y[self.l_idx[p]] -= self.l_val[p] * yi;
                }
                let lki = yi / self.d[i];
                dk -= lki * yi;
                let p = start + lnz[i];
                self.l_idx[p] = k;
                self.l_val[p] = lki;
                lnz[i] += 1;
            }
            if !(dk.abs() > tiny) {
                return Err(Error::Factorization { row: self.perm[k] });
            }
            self.d[k] = dk;
        }
        Ok(())
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    pub fn solve_in_place(&self, b: &mut [T]) {
        assert_eq!(b.len(), self.n);
        let mut x: Vec<T> = self.perm.iter().map(|&i| b[i]).collect();
        for j in 0..self.n {
            let xj = x[j];
            for p in self.l_ptr[j]..self.l_ptr[j + 1] {
                x[self.l_idx[p]] -= self.l_val[p] * xj;
            }
        }
        for (xj, &dj) in x.iter_mut().zip(&self.d) {
            *xj /= dj;
        }
        for j in (0..self.n).rev() {
            let mut s = x[j];
            for p in self.l_ptr[j]..self.l_ptr[j + 1] {
                s -= self.l_val[p] * x[self.l_idx[p]];
            }
            x[j] = s;
        }
        for (k, &i) in self.perm.iter().enumerate() {
            b[i] = x[k];
        }
    }

    /// Number of negative pivots (the matrix inertia's negative count).
    pub fn negative_pivots(&self) -> usize {
        self.d.iter().filter(|d| **d < T::zero()).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplace_1d(n: usize) -> CsrMatrix<f64> {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
        }
        CsrMatrix::from_triplets(n, n, t)
    }

    #[test]
    fn solves_tridiagonal_in_all_orderings() {
        let a = laplace_1d(30);
        let x_true: Vec<f64> = (0..30).map(|i| (i as f64 * 0.3).sin()).collect();
        let b = a.matvec(&x_true);
        for ord in [Ordering::Natural, Ordering::Amd, Ordering::BlockAmd(3), Ordering::Given((0..30).rev().collect())] {
            let f = LdlFactor::new(&a, &ord).unwrap();
            let x = f.solve(&b);
            for (u, v) in x.iter().zip(&x_true) {
                assert!((u - v).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn symmetric_indefinite_saddle_point() {
        // [[1, 1], [1, 0]] needs the (1,1) pivot first
        let a = CsrMatrix::<f64>::from_triplets(2, 2, vec![(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0)]);
        let f = LdlFactor::new(&a, &Ordering::Natural).unwrap();
        assert_eq!(f.negative_pivots(), 1);
        let x: Vec<f64> = f.solve(&[2.0, 1.0]);
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 1.0).abs() < 1e-15);
        assert!(matches!(
            LdlFactor::new(&a, &Ordering::Given(vec![1, 0])),
            Err(Error::Factorization { row: 1 })
        ));
    }

    #[test]
    fn singular_matrix_is_reported() {
        let a = CsrMatrix::from_triplets(2, 2, vec![(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 1.0)]);
        assert!(matches!(LdlFactor::new(&a, &Ordering::Natural), Err(Error::Factorization { .. })));
    }

    #[test]
    fn refactor_reuses_structure() {
        let a = laplace_1d(10);
        let mut f = LdlFactor::new(&a, &Ordering::Amd).unwrap();
        let a2 = a.scaled(3.0);
        f.refactor(&a2).unwrap();
        let x = f.solve(&a2.matvec(&[1.0; 10]));
        assert!(x.iter().all(|v| (v - 1.0).abs() < 1e-12));
    }
}
