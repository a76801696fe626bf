//! Right-hand side of the master equation on a flat state vector.
//!
//! When every jump moves ancilla levels one-to-one and the state carries no
//! ancilla coherences, the dynamics closes on the diagonal ancilla blocks.
//! [`Generator::Structured`] then evolves only those `R × R` blocks with
//! sparse ladder products and Kronecker-factored displacements. Anything
//! else falls back to [`Generator::Dense`].

use std::collections::HashMap;
use std::sync::Arc;

use num_traits::Zero;

use crate::error::{Error, Result};
use crate::master::Liouvillian;
use crate::num::{lit, max_abs, CMatrix, Real, C};
use crate::operators::{unitarity_defect, HilbertGeometry};
use crate::sparse::{SharedKron, SparseOp};

/// Scratch buffers reused across RHS evaluations.
#[derive(Debug, Clone)]
pub struct Workspace<T: Real> {
    acc: Vec<C<T>>,
    tmp: Vec<C<T>>,
    sand: Vec<C<T>>,
    work: Vec<C<T>>,
    scratch: Vec<C<T>>,
}

impl<T: Real> Default for Workspace<T> {
    fn default() -> Self {
        Self {
            acc: Vec::new(),
            tmp: Vec::new(),
            sand: Vec::new(),
            work: Vec::new(),
            scratch: Vec::new(),
        }
    }
}

#[derive(Debug, Clone)]
struct Feed<T: Real> {
    from: usize,
    rate: T,
    sparse: SparseOp<T>,
}

#[derive(Debug, Clone)]
struct Group<T: Real> {
    to: usize,
    kron: Option<SharedKron<T>>,
    feeds: Vec<Feed<T>>,
}

#[derive(Debug, Clone)]
pub struct StructuredGenerator<T: Real> {
    geometry: HilbertGeometry,
    blocks: usize,
    block_dim: usize,
    /// `½Σ r S†S + iHₙ` per ancilla level.
    keff: Vec<SparseOp<T>>,
    groups: Vec<Group<T>>,
}

#[derive(Debug, Clone)]
pub struct DenseGenerator<T: Real> {
    geometry: HilbertGeometry,
    keff: SparseOp<T>,
    jumps: Vec<(T, SparseOp<T>)>,
}

#[derive(Debug, Clone)]
pub enum Generator<T: Real> {
    Structured(StructuredGenerator<T>),
    Dense(DenseGenerator<T>),
}

fn block_of<T: Real>(m: &CMatrix<T>, r: usize, i: usize, j: usize) -> CMatrix<T> {
    m.view((i * r, j * r), (r, r)).into_owned()
}

fn has_ancilla_coherences<T: Real>(m: &CMatrix<T>, geometry: &HilbertGeometry) -> bool {
    let a = geometry.ancilla_dim();
    let r = geometry.resonator_dim();
    (0..a).any(|i| (0..a).any(|j| i != j && max_abs(&block_of(m, r, i, j)) > T::zero()))
}

impl<T: Real> StructuredGenerator<T> {
    /// Builds the block generator, or explains why it does not apply.
    pub fn new(l: &Liouvillian<T>) -> std::result::Result<Self, String> {
        let g = l.geometry;
        let a = g.ancilla_dim();
        let r = g.resonator_dim();
        let tol = T::default_tol() * lit(100.0);
        let mut keff: Vec<SparseOp<T>> = vec![SparseOp::zeros(r); a];
        if let Some(h) = &l.hamiltonian {
            if has_ancilla_coherences(h.matrix(), &g) {
                return Err("Hamiltonian couples ancilla levels".into());
            }
            for (n, k) in keff.iter_mut().enumerate() {
                let hn = SparseOp::from_dense(&block_of(h.matrix(), r, n, n));
                *k = k.add(&hn.scale(C::new(T::zero(), T::one())));
            }
        }
        let mut index: HashMap<(usize, usize), usize> = HashMap::new();
        let mut groups: Vec<Group<T>> = Vec::new();
        let half = lit::<T>(0.5);
        for t in &l.terms {
            let f = t
                .factors
                .as_ref()
                .ok_or_else(|| format!("term {} has no block factorization", t.info.label))?;
            let mut froms: Vec<usize> = f.blocks.iter().map(|b| b.from).collect();
            let mut tos: Vec<usize> = f.blocks.iter().map(|b| b.to).collect();
            froms.sort_unstable();
            froms.dedup();
            tos.sort_unstable();
            tos.dedup();
            if froms.len() != f.blocks.len() || tos.len() != f.blocks.len() {
                return Err(format!("term {} mixes ancilla levels", t.info.label));
            }
            if t.rate == T::zero() {
                continue;
            }
            for b in &f.blocks {
                if b.from >= a || b.to >= a || b.sparse.dim() != r {
                    return Err(format!("term {} has a malformed block", t.info.label));
                }
                if let Some(k) = &b.kron {
                    if unitarity_defect(&k.a) > tol || unitarity_defect(&k.b) > tol {
                        return Err(format!(
                            "term {} has a non-unitary Kronecker factor",
                            t.info.label
                        ));
                    }
                }
                let sds = b.sparse.adjoint().matmul(&b.sparse);
                keff[b.from] = keff[b.from].add(&sds.scale(C::new(t.rate * half, T::zero())));
                let key = (b.to, b.kron.as_ref().map_or(0, |k| Arc::as_ptr(k) as usize));
                let gi = *index.entry(key).or_insert_with(|| {
                    groups.push(Group {
                        to: b.to,
                        kron: b.kron.clone(),
                        feeds: Vec::new(),
                    });
                    groups.len() - 1
                });
                groups[gi].feeds.push(Feed {
                    from: b.from,
                    rate: t.rate,
                    sparse: b.sparse.clone(),
                });
            }
        }
        Ok(Self {
            geometry: g,
            blocks: a,
            block_dim: r,
            keff,
            groups,
        })
    }

    fn apply(&self, v: &[C<T>], out: &mut [C<T>], ws: &mut Workspace<T>) {
        let r = self.block_dim;
        let bs = r * r;
        let one = C::new(T::one(), T::zero());
        let m_one = -one;
        out.iter_mut().for_each(|z| *z = C::zero());
        for n in 0..self.blocks {
            let rho = &v[n * bs..(n + 1) * bs];
            let o = &mut out[n * bs..(n + 1) * bs];
            self.keff[n].left_mul_acc(rho, o, m_one);
            self.keff[n].right_adj_mul_acc(rho, o, m_one);
        }
        ws.acc.resize(bs, C::zero());
        ws.tmp.resize(bs, C::zero());
        ws.sand.resize(bs, C::zero());
        for g in &self.groups {
            ws.acc.iter_mut().for_each(|z| *z = C::zero());
            for f in &g.feeds {
                let rho = &v[f.from * bs..(f.from + 1) * bs];
                ws.tmp.iter_mut().for_each(|z| *z = C::zero());
                f.sparse.left_mul_acc(rho, &mut ws.tmp, one);
                f.sparse
                    .right_adj_mul_acc(&ws.tmp, &mut ws.acc, C::new(f.rate, T::zero()));
            }
            let o = &mut out[g.to * bs..(g.to + 1) * bs];
            match &g.kron {
                None => o.iter_mut().zip(&ws.acc).for_each(|(x, y)| *x += *y),
                Some(k) => {
                    k.sandwich(&ws.acc, &mut ws.sand, &mut ws.work, &mut ws.scratch);
                    o.iter_mut().zip(&ws.sand).for_each(|(x, y)| *x += *y);
                }
            }
        }
    }
}

impl<T: Real> DenseGenerator<T> {
    pub fn new(l: &Liouvillian<T>) -> Self {
        let d = l.geometry.total_dim();
        let mut keff = SparseOp::zeros(d);
        if let Some(h) = &l.hamiltonian {
            keff = keff.add(&SparseOp::from_dense(h.matrix()).scale(C::new(T::zero(), T::one())));
        }
        let mut jumps = Vec::new();
        for t in &l.terms {
            if t.rate == T::zero() {
                continue;
            }
            let s = SparseOp::from_dense(t.jump.matrix());
            keff = keff.add(
                &s.adjoint()
                    .matmul(&s)
                    .scale(C::new(t.rate * lit(0.5), T::zero())),
            );
            jumps.push((t.rate, s));
        }
        Self {
            geometry: l.geometry,
            keff,
            jumps,
        }
    }

    fn apply(&self, v: &[C<T>], out: &mut [C<T>], ws: &mut Workspace<T>) {
        let one = C::new(T::one(), T::zero());
        out.iter_mut().for_each(|z| *z = C::zero());
        self.keff.left_mul_acc(v, out, -one);
        self.keff.right_adj_mul_acc(v, out, -one);
        ws.tmp.resize(v.len(), C::zero());
        for (rate, s) in &self.jumps {
            ws.tmp.iter_mut().for_each(|z| *z = C::zero());
            s.left_mul_acc(v, &mut ws.tmp, one);
            s.right_adj_mul_acc(&ws.tmp, out, C::new(*rate, T::zero()));
        }
    }
}

impl<T: Real> Generator<T> {
    /// Structured generator when the generator and the initial state allow it.
    pub fn for_state(l: &Liouvillian<T>, rho0: &CMatrix<T>) -> Self {
        if has_ancilla_coherences(rho0, &l.geometry) {
            return Self::Dense(DenseGenerator::new(l));
        }
        match StructuredGenerator::new(l) {
            Ok(s) => Self::Structured(s),
            Err(_) => Self::Dense(DenseGenerator::new(l)),
        }
    }

    pub fn dense(l: &Liouvillian<T>) -> Self {
        Self::Dense(DenseGenerator::new(l))
    }

    pub fn is_structured(&self) -> bool {
        matches!(self, Self::Structured(_))
    }

    pub fn geometry(&self) -> &HilbertGeometry {
        match self {
            Self::Structured(s) => &s.geometry,
            Self::Dense(d) => &d.geometry,
        }
    }

    pub fn state_len(&self) -> usize {
        match self {
            Self::Structured(s) => s.blocks * s.block_dim * s.block_dim,
            Self::Dense(d) => d.geometry.total_dim().pow(2),
        }
    }

    pub fn pack(&self, rho: &CMatrix<T>) -> Result<Vec<C<T>>> {
        let g = self.geometry();
        let d = g.total_dim();
        if rho.nrows() != d || rho.ncols() != d {
            return Err(Error::InvalidDimension(format!(
                "state is {}x{}, expected {d}",
                rho.nrows(),
                rho.ncols()
            )));
        }
        match self {
            Self::Dense(_) => Ok(rho.as_slice().to_vec()),
            Self::Structured(s) => {
                if has_ancilla_coherences(rho, g) {
                    return Err(Error::InvalidArgument(
                        "state has ancilla coherences the block generator cannot carry".into(),
                    ));
                }
                let mut v = Vec::with_capacity(self.state_len());
                for n in 0..s.blocks {
                    v.extend_from_slice(block_of(rho, s.block_dim, n, n).as_slice());
                }
                Ok(v)
            }
        }
    }

    pub fn unpack(&self, v: &[C<T>]) -> CMatrix<T> {
        let d = self.geometry().total_dim();
        match self {
            Self::Dense(_) => CMatrix::from_column_slice(d, d, v),
            Self::Structured(s) => {
                let r = s.block_dim;
                let mut m = CMatrix::zeros(d, d);
                for (n, blk) in v.chunks(r * r).enumerate() {
                    m.view_mut((n * r, n * r), (r, r))
                        .copy_from(&CMatrix::from_column_slice(r, r, blk));
                }
                m
            }
        }
    }

    /// Diagonal ancilla blocks `ρₙₙ` of a packed state.
    pub fn diagonal_blocks(&self, v: &[C<T>]) -> Vec<CMatrix<T>> {
        let g = self.geometry();
        let r = g.resonator_dim();
        match self {
            Self::Structured(_) => v
                .chunks(r * r)
                .map(|b| CMatrix::from_column_slice(r, r, b))
                .collect(),
            Self::Dense(_) => {
                let m = self.unpack(v);
                (0..g.ancilla_dim())
                    .map(|n| block_of(&m, r, n, n))
                    .collect()
            }
        }
    }

    /// Smallest eigenvalue of the packed state.
    pub fn min_eigenvalue(&self, v: &[C<T>]) -> T {
        let blocks = match self {
            Self::Structured(_) => self.diagonal_blocks(v),
            Self::Dense(_) => vec![self.unpack(v)],
        };
        blocks
            .iter()
            .filter_map(|b| {
                crate::num::hermitian_eigenvalues(&crate::num::hermitize(b))
                    .first()
                    .copied()
            })
            .fold(T::max_value().unwrap_or(T::one()), |a, b| a.min(b))
    }

    pub fn trace(&self, v: &[C<T>]) -> T {
        let d = self.geometry().total_dim();
        let (blocks, dim) = match self {
            Self::Structured(s) => (s.blocks, s.block_dim),
            Self::Dense(_) => (1, d),
        };
        let mut t = T::zero();
        for b in 0..blocks {
            for i in 0..dim {
                t += v[b * dim * dim + i * dim + i].re;
            }
        }
        t
    }

    pub fn apply(&self, v: &[C<T>], out: &mut [C<T>], ws: &mut Workspace<T>) {
        match self {
            Self::Structured(s) => s.apply(v, out, ws),
            Self::Dense(d) => d.apply(v, out, ws),
        }
    }
}
