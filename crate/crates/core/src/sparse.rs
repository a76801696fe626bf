//! Small structured-matrix kernels used by the fast generator: a triplet
//! sparse matrix and two-mode Kronecker factors `A ⊗ B`.

use std::collections::BTreeMap;
use std::sync::Arc;

use num_traits::Zero;

use crate::num::{CMatrix, Real, C};
use crate::operators::kron;

/// Sparse square matrix stored as `(row, col, value)` triplets, row-major sorted.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseOp<T: Real> {
    dim: usize,
    entries: Vec<(usize, usize, C<T>)>,
}

impl<T: Real> SparseOp<T> {
    pub fn identity(dim: usize) -> Self {
        Self {
            dim,
            entries: (0..dim)
                .map(|i| (i, i, C::new(T::one(), T::zero())))
                .collect(),
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            entries: Vec::new(),
        }
    }

    /// Keeps entries that are exactly nonzero.
    pub fn from_dense(m: &CMatrix<T>) -> Self {
        let mut entries = Vec::new();
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                let v = m[(i, j)];
                if !v.is_zero() {
                    entries.push((i, j, v));
                }
            }
        }
        Self {
            dim: m.nrows(),
            entries,
        }
    }

    fn from_map(dim: usize, map: BTreeMap<(usize, usize), C<T>>) -> Self {
        Self {
            dim,
            entries: map
                .into_iter()
                .filter(|(_, v)| !v.is_zero())
                .map(|((i, j), v)| (i, j, v))
                .collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[(usize, usize, C<T>)] {
        &self.entries
    }

    pub fn to_dense(&self) -> CMatrix<T> {
        let mut m = CMatrix::zeros(self.dim, self.dim);
        for &(i, j, v) in &self.entries {
            m[(i, j)] += v;
        }
        m
    }

    pub fn adjoint(&self) -> Self {
        let map = self
            .entries
            .iter()
            .map(|&(i, j, v)| ((j, i), v.conj()))
            .collect();
        Self::from_map(self.dim, map)
    }

    pub fn scale(&self, s: C<T>) -> Self {
        Self {
            dim: self.dim,
            entries: self
                .entries
                .iter()
                .map(|&(i, j, v)| (i, j, v * s))
                .collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        let mut map = BTreeMap::new();
        for &(i, j, v) in self.entries.iter().chain(&other.entries) {
            *map.entry((i, j)).or_insert_with(C::zero) += v;
        }
        Self::from_map(self.dim, map)
    }

    /// Sparse product `self · other`.
    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        let mut rows: Vec<Vec<(usize, C<T>)>> = vec![Vec::new(); other.dim];
        for &(k, j, v) in &other.entries {
            rows[k].push((j, v));
        }
        let mut map = BTreeMap::new();
        for &(i, k, a) in &self.entries {
            for &(j, b) in &rows[k] {
                *map.entry((i, j)).or_insert_with(C::zero) += a * b;
            }
        }
        Self::from_map(self.dim, map)
    }

    /// `out += s · self · m` for a dense square `m`.
    pub fn left_mul_acc(&self, m: &[C<T>], out: &mut [C<T>], s: C<T>) {
        let n = self.dim;
        for c in 0..n {
            let col = &m[c * n..(c + 1) * n];
            let ocol = &mut out[c * n..(c + 1) * n];
            for &(i, j, v) in &self.entries {
                ocol[i] += s * v * col[j];
            }
        }
    }

    /// `out += s · m · self†` for a dense square `m`.
    pub fn right_adj_mul_acc(&self, m: &[C<T>], out: &mut [C<T>], s: C<T>) {
        let n = self.dim;
        for &(i, j, v) in &self.entries {
            let w = s * v.conj();
            let (src, dst) = (j * n, i * n);
            for r in 0..n {
                out[dst + r] += w * m[src + r];
            }
        }
    }
}

/// Operator `A ⊗ B` on `R1 ⊗ R2`, applied without forming the product.
#[derive(Debug, Clone, PartialEq)]
pub struct KronPair<T: Real> {
    pub a: CMatrix<T>,
    pub b: CMatrix<T>,
}

pub type SharedKron<T> = Arc<KronPair<T>>;

impl<T: Real> KronPair<T> {
    pub fn new(a: CMatrix<T>, b: CMatrix<T>) -> Self {
        Self { a, b }
    }

    pub fn dim(&self) -> usize {
        self.a.nrows() * self.b.nrows()
    }

    pub fn to_dense(&self) -> CMatrix<T> {
        kron(&self.a, &self.b)
    }

    pub fn adjoint(&self) -> Self {
        Self {
            a: self.a.adjoint(),
            b: self.b.adjoint(),
        }
    }

    /// `out = (A ⊗ B) · m`, column-major `m` of size `dim × dim`.
    pub fn left_mul(&self, m: &[C<T>], out: &mut [C<T>], scratch: &mut Vec<C<T>>) {
        let n1 = self.a.nrows();
        let n2 = self.b.nrows();
        let n = n1 * n2;
        let (a, b) = (self.a.as_slice(), self.b.as_slice());
        scratch.resize(n, C::zero());
        for c in 0..n {
            // column viewed as an n2 x n1 column-major matrix V; result is B V Aᵀ
            let v = &m[c * n..(c + 1) * n];
            scratch.iter_mut().for_each(|z| *z = C::zero());
            for i1 in 0..n1 {
                let s = &mut scratch[i1 * n2..(i1 + 1) * n2];
                for j2 in 0..n2 {
                    let x = v[i1 * n2 + j2];
                    for (z, bij) in s.iter_mut().zip(&b[j2 * n2..(j2 + 1) * n2]) {
                        *z += *bij * x;
                    }
                }
            }
            let o = &mut out[c * n..(c + 1) * n];
            o.iter_mut().for_each(|z| *z = C::zero());
            for j1 in 0..n1 {
                let src = &scratch[j1 * n2..(j1 + 1) * n2];
                for i1 in 0..n1 {
                    let x = a[j1 * n1 + i1];
                    for (z, s) in o[i1 * n2..(i1 + 1) * n2].iter_mut().zip(src) {
                        *z += x * *s;
                    }
                }
            }
        }
    }

    /// `out = (A ⊗ B) · m · (A ⊗ B)†`.
    pub fn sandwich(
        &self,
        m: &[C<T>],
        out: &mut [C<T>],
        work: &mut Vec<C<T>>,
        scratch: &mut Vec<C<T>>,
    ) {
        let n = self.dim();
        work.resize(n * n, C::zero());
        self.left_mul(m, work, scratch);
        // (K M K†) = (K (K M)†)†
        adjoint_in_place(work, n);
        self.left_mul(work, out, scratch);
        adjoint_in_place(out, n);
    }
}

pub fn adjoint_in_place<T: Real>(m: &mut [C<T>], n: usize) {
    for i in 0..n {
        m[i * n + i] = m[i * n + i].conj();
        for j in (i + 1)..n {
            let a = m[i * n + j];
            let b = m[j * n + i];
            m[i * n + j] = b.conj();
            m[j * n + i] = a.conj();
        }
    }
}
