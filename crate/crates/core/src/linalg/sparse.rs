use std::ops::Mul;

use num_traits::{Float, Zero};

use crate::scalar::Scalar;

/// Compressed sparse row matrix with sorted, duplicate-free column indices.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix<S> {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    data: Vec<S>,
}

/// Accumulates `(row, col, value)` entries; duplicates are summed in insertion
/// order when the matrix is built, so the result does not depend on how the
/// entries were produced as long as they arrive in the same order.
#[derive(Clone, Debug)]
pub struct TripletBuilder<S> {
    nrows: usize,
    ncols: usize,
    entries: Vec<(usize, usize, S)>,
}

impl<S: Scalar> TripletBuilder<S> {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, row: usize, col: usize, value: S) {
        assert!(
            row < self.nrows && col < self.ncols,
            "entry ({row}, {col}) outside {}x{}",
            self.nrows,
            self.ncols
        );
        self.entries.push((row, col, value));
    }

    /// Adds `scale * block` with its upper-left corner at `(row0, col0)`.
    pub fn push_block<B>(&mut self, row0: usize, col0: usize, block: &CsrMatrix<B>, scale: S)
    where
        B: Scalar,
        S: Mul<B, Output = S>,
    {
        for (i, j, v) in block.iter() {
            self.push(row0 + i, col0 + j, scale * v);
        }
    }

    pub fn build(self) -> CsrMatrix<S> {
        CsrMatrix::from_triplets(self.nrows, self.ncols, self.entries)
    }
}

impl<S: Scalar> CsrMatrix<S> {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            indptr: vec![0; nrows + 1],
            indices: Vec::new(),
            data: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            nrows: n,
            ncols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            data: vec![S::one(); n],
        }
    }

    pub fn from_triplets(nrows: usize, ncols: usize, mut entries: Vec<(usize, usize, S)>) -> Self {
        // stable: equal (row, col) keys keep insertion order for the summation
        entries.sort_by_key(|&(i, j, _)| (i, j));
        let mut indptr = vec![0usize; nrows + 1];
        let mut indices: Vec<usize> = Vec::with_capacity(entries.len());
        let mut data: Vec<S> = Vec::with_capacity(entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in entries {
            assert!(i < nrows && j < ncols, "triplet ({i}, {j}) out of bounds");
            if last == Some((i, j)) {
                *data.last_mut().expect("nonempty") += v;
            } else {
                indices.push(j);
                data.push(v);
                indptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..nrows {
            indptr[i + 1] += indptr[i];
        }
        Self {
            nrows,
            ncols,
            indptr,
            indices,
            data,
        }
    }

    pub fn from_dense(rows: &[Vec<S>]) -> Self {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        let mut b = TripletBuilder::new(nrows, ncols);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), ncols, "ragged dense input");
            for (j, &v) in row.iter().enumerate() {
                if v != S::zero() {
                    b.push(i, j, v);
                }
            }
        }
        b.build()
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    /// Number of stored entries (explicit zeros included).
    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, S)> + '_ {
        let range = self.indptr[i]..self.indptr[i + 1];
        self.indices[range.clone()]
            .iter()
            .copied()
            .zip(self.data[range].iter().copied())
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, S)> + '_ {
        (0..self.nrows).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn get(&self, i: usize, j: usize) -> S {
        let range = self.indptr[i]..self.indptr[i + 1];
        match self.indices[range.clone()].binary_search(&j) {
            Ok(k) => self.data[range.start + k],
            Err(_) => S::zero(),
        }
    }

    pub fn mul_vec<X>(&self, x: &[X]) -> Vec<X>
    where
        X: Scalar + Mul<S, Output = X>,
    {
        assert_eq!(x.len(), self.ncols, "mul_vec dimension mismatch");
        (0..self.nrows)
            .map(|i| self.row(i).map(|(j, v)| x[j] * v).sum())
            .collect()
    }

    /// `selfᵀ x` without forming the transpose.
    pub fn tr_mul_vec<X>(&self, x: &[X]) -> Vec<X>
    where
        X: Scalar + Mul<S, Output = X>,
    {
        assert_eq!(x.len(), self.nrows, "tr_mul_vec dimension mismatch");
        let mut out = vec![X::zero(); self.ncols];
        for (i, j, v) in self.iter() {
            out[j] += x[i] * v;
        }
        out
    }

    pub fn transpose(&self) -> Self {
        let entries = self.iter().map(|(i, j, v)| (j, i, v)).collect();
        Self::from_triplets(self.ncols, self.nrows, entries)
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(S) -> U) -> CsrMatrix<U> {
        CsrMatrix {
            nrows: self.nrows,
            ncols: self.ncols,
            indptr: self.indptr.clone(),
            indices: self.indices.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.ncols, other.nrows, "matmul dimension mismatch");
        let mut entries = Vec::new();
        let mut acc: Vec<Option<S>> = vec![None; other.ncols];
        let mut touched = Vec::new();
        for i in 0..self.nrows {
            for (k, a) in self.row(i) {
                for (j, b) in other.row(k) {
                    match &mut acc[j] {
                        Some(s) => *s += a * b,
                        slot @ None => {
                            *slot = Some(a * b);
                            touched.push(j);
                        }
                    }
                }
            }
            touched.sort_unstable();
            for &j in &touched {
                entries.push((i, j, acc[j].take().expect("touched")));
            }
            touched.clear();
        }
        Self::from_triplets(self.nrows, other.ncols, entries)
    }

    /// `alpha * self + beta * other`.
    pub fn lincomb(&self, alpha: S, other: &Self, beta: S) -> Self {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let entries = self
            .iter()
            .map(|(i, j, v)| (i, j, alpha * v))
            .chain(other.iter().map(|(i, j, v)| (i, j, beta * v)))
            .collect();
        Self::from_triplets(self.nrows, self.ncols, entries)
    }

    pub fn to_dense(&self) -> Vec<Vec<S>> {
        let mut out = vec![vec![S::zero(); self.ncols]; self.nrows];
        for (i, j, v) in self.iter() {
            out[i][j] += v;
        }
        out
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> S::Real {
        self.data
            .iter()
            .fold(S::Real::zero(), |m, v| m.max(v.modulus()))
    }

    /// Row-sum norm.
    pub fn norm_inf(&self) -> S::Real {
        (0..self.nrows)
            .map(|i| {
                self.row(i)
                    .fold(S::Real::zero(), |s, (_, v)| s + v.modulus())
            })
            .fold(S::Real::zero(), |m, s| m.max(s))
    }

    /// Largest entry-wise deviation `max |self_ij − other_ij|`.
    pub fn max_abs_diff(&self, other: &Self) -> S::Real {
        self.lincomb(S::one(), other, -S::one()).max_abs()
    }

    /// `max |a_ij − a_ji|` (plain transpose, no conjugation).
    pub fn asymmetry(&self) -> S::Real {
        self.max_abs_diff(&self.transpose())
    }

    /// Restricts to the given rows and columns (in the given order).
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> Self {
        let mut col_pos = vec![usize::MAX; self.ncols];
        for (k, &c) in cols.iter().enumerate() {
            col_pos[c] = k;
        }
        let mut b = TripletBuilder::new(rows.len(), cols.len());
        for (r, &i) in rows.iter().enumerate() {
            for (j, v) in self.row(i) {
                if col_pos[j] != usize::MAX {
                    b.push(r, col_pos[j], v);
                }
            }
        }
        b.build()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> CsrMatrix<f64> {
        CsrMatrix::from_dense(&[vec![1.0, 0.0, 2.0], vec![0.0, 3.0, 0.0]])
    }

    #[test]
    fn duplicates_are_summed() {
        let m = CsrMatrix::from_triplets(2, 2, vec![(0, 1, 1.0), (1, 0, 2.0), (0, 1, 0.5)]);
        assert_eq!(m.get(0, 1), 1.5);
        assert_eq!(m.get(1, 0), 2.0);
        assert_eq!(m.get(0, 0), 0.0);
        assert_eq!(m.nnz(), 2);
    }

    #[test]
    fn products_agree_with_dense() {
        let a = small();
        assert_eq!(a.mul_vec(&[1.0, 1.0, 1.0]), vec![3.0, 3.0]);
        assert_eq!(a.tr_mul_vec(&[1.0, 2.0]), vec![1.0, 6.0, 2.0]);
        let ata = a.transpose().matmul(&a);
        assert_eq!(
            ata.to_dense(),
            vec![
                vec![1.0, 0.0, 2.0],
                vec![0.0, 9.0, 0.0],
                vec![2.0, 0.0, 4.0]
            ]
        );
        assert_eq!(ata.asymmetry(), 0.0);
    }

    #[test]
    fn select_reorders() {
        let a = small();
        let s = a.select(&[1, 0], &[2, 1]);
        assert_eq!(s.to_dense(), vec![vec![0.0, 3.0], vec![2.0, 0.0]]);
    }
}
