//! Operators on the composite truncated space `ancilla ⊗ R1 ⊗ R2`.
//!
//! Basis index of `|a, n1, n2⟩` is `a·N1·N2 + n1·N2 + n2`. The two-level
//! ancilla is ordered `(excited, ground)`, so `σz = diag(1, -1)`.

use std::fmt;
use std::ops::{Add, Mul, Sub};

use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::num::{cl, hermitian_eigenvalues, hermitize, lit, max_abs, trace, CMatrix, Real, C};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AncillaKind {
    /// No ancilla factor: the bare two-resonator space.
    None,
    Tls,
    Oscillator,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Site {
    Ancilla,
    R1,
    R2,
}

impl Site {
    fn index(self) -> usize {
        match self {
            Site::Ancilla => 0,
            Site::R1 => 1,
            Site::R2 => 2,
        }
    }
}

/// Layout of the composite space. Traced-out factors keep dimension 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct HilbertGeometry {
    ancilla: AncillaKind,
    dims: [usize; 3],
}

impl HilbertGeometry {
    pub fn tls(n1: usize, n2: usize) -> Result<Self> {
        Self::new(AncillaKind::Tls, 2, [n1, n2])
    }

    pub fn oscillator(levels: usize, n1: usize, n2: usize) -> Result<Self> {
        Self::new(AncillaKind::Oscillator, levels, [n1, n2])
    }

    pub fn two_mode(n1: usize, n2: usize) -> Result<Self> {
        Self::new(AncillaKind::None, 1, [n1, n2])
    }

    pub fn new(ancilla: AncillaKind, ancilla_dim: usize, fock_dims: [usize; 2]) -> Result<Self> {
        match ancilla {
            AncillaKind::Tls if ancilla_dim != 2 => {
                return Err(Error::InvalidDimension(format!(
                    "two-level ancilla needs dimension 2, got {ancilla_dim}"
                )))
            }
            AncillaKind::None if ancilla_dim != 1 => {
                return Err(Error::InvalidDimension(
                    "geometry without ancilla must have ancilla dimension 1".into(),
                ))
            }
            AncillaKind::Oscillator if ancilla_dim < 2 => {
                return Err(Error::InvalidDimension(format!(
                    "oscillator ancilla needs at least 2 levels, got {ancilla_dim}"
                )))
            }
            _ => {}
        }
        if fock_dims.iter().any(|&n| n < 3) {
            return Err(Error::InvalidDimension(format!(
                "Fock truncation must be at least 3 per resonator, got {fock_dims:?}"
            )));
        }
        Ok(Self {
            ancilla,
            dims: [ancilla_dim, fock_dims[0], fock_dims[1]],
        })
    }

    pub fn ancilla_kind(&self) -> AncillaKind {
        self.ancilla
    }

    pub fn ancilla_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn fock_dims(&self) -> [usize; 2] {
        [self.dims[1], self.dims[2]]
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn site_dim(&self, site: Site) -> usize {
        self.dims[site.index()]
    }

    pub fn total_dim(&self) -> usize {
        self.dims.iter().product()
    }

    /// Dimension of the `R1 ⊗ R2` factor.
    pub fn resonator_dim(&self) -> usize {
        self.dims[1] * self.dims[2]
    }

    pub fn has_ancilla(&self) -> bool {
        self.ancilla != AncillaKind::None
    }

    /// Geometry of the two resonators alone.
    pub fn resonators(&self) -> Self {
        Self {
            ancilla: AncillaKind::None,
            dims: [1, self.dims[1], self.dims[2]],
        }
    }

    fn reduced(&self, keep: &[Site]) -> Self {
        let mut dims = [1; 3];
        for &s in keep {
            dims[s.index()] = self.dims[s.index()];
        }
        let ancilla = if keep.contains(&Site::Ancilla) {
            self.ancilla
        } else {
            AncillaKind::None
        };
        Self { ancilla, dims }
    }
}

impl fmt::Display for HilbertGeometry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:?}[{}] x {} x {}",
            self.ancilla, self.dims[0], self.dims[1], self.dims[2]
        )
    }
}

/// Matrix on a composite space together with its layout.
#[derive(Debug, Clone, PartialEq)]
pub struct QOperator<T: Real> {
    geometry: HilbertGeometry,
    matrix: CMatrix<T>,
}

impl<T: Real> QOperator<T> {
    pub fn new(geometry: HilbertGeometry, matrix: CMatrix<T>) -> Result<Self> {
        let d = geometry.total_dim();
        if matrix.nrows() != d || matrix.ncols() != d {
            return Err(Error::InvalidDimension(format!(
                "matrix is {}x{}, geometry {geometry} needs {d}x{d}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        Ok(Self { geometry, matrix })
    }

    pub fn identity(geometry: HilbertGeometry) -> Self {
        let d = geometry.total_dim();
        Self {
            geometry,
            matrix: CMatrix::identity(d, d),
        }
    }

    pub fn zeros(geometry: HilbertGeometry) -> Self {
        let d = geometry.total_dim();
        Self {
            geometry,
            matrix: CMatrix::zeros(d, d),
        }
    }

    pub fn geometry(&self) -> &HilbertGeometry {
        &self.geometry
    }

    pub fn matrix(&self) -> &CMatrix<T> {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix<T> {
        self.matrix
    }

    pub fn adjoint(&self) -> Self {
        Self {
            geometry: self.geometry,
            matrix: self.matrix.adjoint(),
        }
    }

    pub fn scale(&self, s: C<T>) -> Self {
        Self {
            geometry: self.geometry,
            matrix: &self.matrix * s,
        }
    }

    pub fn trace(&self) -> C<T> {
        trace(&self.matrix)
    }

    /// `⟨O⟩ = Tr(ρ O)`.
    pub fn expectation(&self, state: &DensityState<T>) -> C<T> {
        let rho = state.matrix();
        let mut acc = C::zero();
        for i in 0..rho.nrows() {
            for j in 0..rho.ncols() {
                acc += rho[(i, j)] * self.matrix[(j, i)];
            }
        }
        acc
    }

    fn check_same(&self, other: &Self) {
        assert_eq!(
            self.geometry, other.geometry,
            "operator arithmetic across different geometries"
        );
    }
}

impl<'a, T: Real> Mul<&'a QOperator<T>> for &'a QOperator<T> {
    type Output = QOperator<T>;
    fn mul(self, rhs: &'a QOperator<T>) -> QOperator<T> {
        self.check_same(rhs);
        QOperator {
            geometry: self.geometry,
            matrix: &self.matrix * &rhs.matrix,
        }
    }
}

impl<'a, T: Real> Add<&'a QOperator<T>> for &'a QOperator<T> {
    type Output = QOperator<T>;
    fn add(self, rhs: &'a QOperator<T>) -> QOperator<T> {
        self.check_same(rhs);
        QOperator {
            geometry: self.geometry,
            matrix: &self.matrix + &rhs.matrix,
        }
    }
}

impl<'a, T: Real> Sub<&'a QOperator<T>> for &'a QOperator<T> {
    type Output = QOperator<T>;
    fn sub(self, rhs: &'a QOperator<T>) -> QOperator<T> {
        self.check_same(rhs);
        QOperator {
            geometry: self.geometry,
            matrix: &self.matrix - &rhs.matrix,
        }
    }
}

/// Density operator: Hermitian, unit trace, positive up to integration slack.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityState<T: Real> {
    op: QOperator<T>,
}

impl<T: Real> DensityState<T> {
    pub const TRACE_TOL: f64 = 1e-8;
    pub const HERMITIAN_TOL: f64 = 1e-10;
    pub const MIN_EIGENVALUE: f64 = -1e-7;

    /// Validates trace, Hermiticity and positivity.
    pub fn new(op: QOperator<T>) -> Result<Self> {
        let state = Self { op };
        let terr = state.trace_error();
        if terr > lit(Self::TRACE_TOL) {
            return Err(Error::InvalidArgument(format!(
                "density operator trace deviates from 1 by {:e}",
                crate::num::to_f64(terr)
            )));
        }
        let herr = crate::num::hermiticity_error(state.matrix());
        if herr > lit(Self::HERMITIAN_TOL) {
            return Err(Error::InvalidArgument(format!(
                "density operator is not Hermitian (deviation {:e})",
                crate::num::to_f64(herr)
            )));
        }
        let min = state.min_eigenvalue();
        if min < lit(Self::MIN_EIGENVALUE) {
            return Err(Error::InvalidArgument(format!(
                "density operator has eigenvalue {:e}",
                crate::num::to_f64(min)
            )));
        }
        Ok(state)
    }

    /// Wraps a matrix without checks. Used for intermediate results whose
    /// validity the caller tracks.
    pub fn new_unchecked(op: QOperator<T>) -> Self {
        Self { op }
    }

    pub fn from_matrix(geometry: HilbertGeometry, matrix: CMatrix<T>) -> Result<Self> {
        Self::new(QOperator::new(geometry, matrix)?)
    }

    /// `|ψ⟩⟨ψ|` for a normalized ket.
    pub fn pure(geometry: HilbertGeometry, ket: &crate::num::CVector<T>) -> Result<Self> {
        let norm = ket.norm();
        if norm <= T::zero() {
            return Err(Error::InvalidArgument("zero state vector".into()));
        }
        let k = ket.unscale(norm);
        Self::from_matrix(geometry, &k * k.adjoint())
    }

    /// Basis projector `|index⟩⟨index|`.
    pub fn basis(geometry: HilbertGeometry, index: usize) -> Result<Self> {
        let d = geometry.total_dim();
        if index >= d {
            return Err(Error::InvalidArgument(format!(
                "basis index {index} out of range for dimension {d}"
            )));
        }
        let mut m = CMatrix::zeros(d, d);
        m[(index, index)] = C::one();
        Self::from_matrix(geometry, m)
    }

    /// Product of factor states in the fixed ordering.
    pub fn product(
        geometry: HilbertGeometry,
        ancilla: &CMatrix<T>,
        r1: &CMatrix<T>,
        r2: &CMatrix<T>,
    ) -> Result<Self> {
        Self::from_matrix(geometry, kron(&kron(ancilla, r1), r2))
    }

    pub fn geometry(&self) -> &HilbertGeometry {
        self.op.geometry()
    }

    pub fn matrix(&self) -> &CMatrix<T> {
        self.op.matrix()
    }

    pub fn op(&self) -> &QOperator<T> {
        &self.op
    }

    pub fn into_op(self) -> QOperator<T> {
        self.op
    }

    pub fn trace_error(&self) -> T {
        crate::num::cabs(self.op.trace() - C::one())
    }

    pub fn min_eigenvalue(&self) -> T {
        hermitian_eigenvalues(&hermitize(self.matrix()))
            .first()
            .copied()
            .unwrap_or_else(T::zero)
    }

    pub fn purity(&self) -> T {
        let m = self.matrix();
        (m * m).trace().re
    }
}

/// Truncated annihilation operator with `⟨m|b|m+1⟩ = √(m+1)`.
pub fn fock_destroy<T: Real>(n_levels: usize) -> Result<CMatrix<T>> {
    if n_levels < 2 {
        return Err(Error::InvalidDimension(format!(
            "ladder operator needs at least 2 levels, got {n_levels}"
        )));
    }
    let mut b = CMatrix::zeros(n_levels, n_levels);
    for m in 0..n_levels - 1 {
        b[(m, m + 1)] = C::new(lit::<T>((m + 1) as f64).sqrt(), T::zero());
    }
    Ok(b)
}

/// `(σ₋, σ₊, σz)` in the `(excited, ground)` basis.
pub fn tls_operators<T: Real>() -> (CMatrix<T>, CMatrix<T>, CMatrix<T>) {
    let o = C::one();
    let z = C::zero();
    let lower = CMatrix::from_row_slice(2, 2, &[z, z, o, z]);
    let raise = lower.adjoint();
    let sz = CMatrix::from_row_slice(2, 2, &[o, z, z, -o]);
    (lower, raise, sz)
}

pub fn kron<T: Real>(a: &CMatrix<T>, b: &CMatrix<T>) -> CMatrix<T> {
    a.kronecker(b)
}

/// Places a single-factor operator on `site`, identities elsewhere.
pub fn embed<T: Real>(
    factor: &CMatrix<T>,
    site: Site,
    geometry: &HilbertGeometry,
) -> Result<QOperator<T>> {
    let d = geometry.site_dim(site);
    if factor.nrows() != d || factor.ncols() != d {
        return Err(Error::InvalidDimension(format!(
            "factor is {}x{}, site {site:?} has dimension {d}",
            factor.nrows(),
            factor.ncols()
        )));
    }
    let [da, d1, d2] = geometry.dims();
    let id = |n: usize| CMatrix::<T>::identity(n, n);
    let m = match site {
        Site::Ancilla => kron(&kron(factor, &id(d1)), &id(d2)),
        Site::R1 => kron(&kron(&id(da), factor), &id(d2)),
        Site::R2 => kron(&id(da * d1), factor),
    };
    QOperator::new(*geometry, m)
}

/// Matrix exponential of a raw square matrix.
pub fn expm<T: Real>(m: &CMatrix<T>) -> Result<CMatrix<T>> {
    if !m.is_square() {
        return Err(Error::InvalidDimension(
            "exponential of a non-square matrix".into(),
        ));
    }
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NumericalFailure(
            "non-finite entry in exponent".into(),
        ));
    }
    let e = m.clone().exp();
    if e.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NumericalFailure(
            "matrix exponential did not converge".into(),
        ));
    }
    Ok(e)
}

pub fn matrix_exponential<T: Real>(op: &QOperator<T>) -> Result<QOperator<T>> {
    QOperator::new(*op.geometry(), expm(op.matrix())?)
}

/// Displacement-type factor `e^{α(b† - b)}` on one truncated mode.
pub fn displacement<T: Real>(n_levels: usize, alpha: T) -> Result<CMatrix<T>> {
    let b = fock_destroy::<T>(n_levels)?;
    expm(&((b.adjoint() - b) * C::new(alpha, T::zero())))
}

/// Reduced state on `keep`. Traced factors get dimension 1 in the result.
pub fn partial_trace<T: Real>(state: &DensityState<T>, keep: &[Site]) -> Result<DensityState<T>> {
    if keep.is_empty() {
        return Err(Error::InvalidArgument(
            "partial trace needs at least one kept site".into(),
        ));
    }
    let geom = *state.geometry();
    let out_geom = geom.reduced(keep);
    let dims = geom.dims();
    let kept: [bool; 3] = [
        keep.contains(&Site::Ancilla),
        keep.contains(&Site::R1),
        keep.contains(&Site::R2),
    ];
    let odims = out_geom.dims();
    let od = out_geom.total_dim();
    let rho = state.matrix();
    let mut out = CMatrix::<T>::zeros(od, od);
    let idx = |i: [usize; 3], d: [usize; 3]| (i[0] * d[1] + i[1]) * d[2] + i[2];
    let total = geom.total_dim();
    for r in 0..total {
        let ri = [
            r / (dims[1] * dims[2]),
            (r / dims[2]) % dims[1],
            r % dims[2],
        ];
        for c in 0..total {
            let ci = [
                c / (dims[1] * dims[2]),
                (c / dims[2]) % dims[1],
                c % dims[2],
            ];
            // traced indices must agree
            if (0..3).any(|k| !kept[k] && ri[k] != ci[k]) {
                continue;
            }
            let mut ro = [0; 3];
            let mut co = [0; 3];
            for k in 0..3 {
                if kept[k] {
                    ro[k] = ri[k];
                    co[k] = ci[k];
                }
            }
            out[(idx(ro, odims), idx(co, odims))] += rho[(r, c)];
        }
    }
    Ok(DensityState::new_unchecked(QOperator::new(out_geom, out)?))
}

/// Sum of the ancilla-diagonal blocks, i.e. the trace over the ancilla.
/// Cheaper than [`partial_trace`] for the common case.
pub fn trace_ancilla<T: Real>(rho: &CMatrix<T>, geometry: &HilbertGeometry) -> CMatrix<T> {
    let r = geometry.resonator_dim();
    let mut out = CMatrix::zeros(r, r);
    for a in 0..geometry.ancilla_dim() {
        out += rho.view((a * r, a * r), (r, r));
    }
    out
}

/// Partial transpose of a two-resonator operator with respect to `site`
/// (`R1` or `R2`).
pub fn partial_transpose<T: Real>(
    rho: &CMatrix<T>,
    geometry: &HilbertGeometry,
    site: Site,
) -> Result<CMatrix<T>> {
    if geometry.ancilla_dim() != 1 || site == Site::Ancilla {
        return Err(Error::InvalidDimension(format!(
            "partial transpose needs a two-resonator state, got {geometry}"
        )));
    }
    let [_, n1, n2] = geometry.dims();
    let d = n1 * n2;
    if rho.nrows() != d || rho.ncols() != d {
        return Err(Error::InvalidDimension(format!(
            "matrix is {}x{}, expected {d}x{d}",
            rho.nrows(),
            rho.ncols()
        )));
    }
    let mut out = CMatrix::zeros(d, d);
    for i1 in 0..n1 {
        for i2 in 0..n2 {
            for j1 in 0..n1 {
                for j2 in 0..n2 {
                    let (r, c) = match site {
                        Site::R2 => (i1 * n2 + j2, j1 * n2 + i2),
                        _ => (j1 * n2 + i2, i1 * n2 + j2),
                    };
                    out[(i1 * n2 + i2, j1 * n2 + j2)] = rho[(r, c)];
                }
            }
        }
    }
    Ok(out)
}

/// Normalized thermal state of one truncated mode with mean occupation `nbar`
/// before truncation.
pub fn thermal_state<T: Real>(n_levels: usize, nbar: T) -> Result<CMatrix<T>> {
    if nbar < T::zero() {
        return Err(Error::InvalidArgument("negative thermal occupation".into()));
    }
    let mut m = CMatrix::zeros(n_levels, n_levels);
    if nbar == T::zero() {
        m[(0, 0)] = C::one();
        return Ok(m);
    }
    let q = nbar / (T::one() + nbar);
    let mut p = T::one();
    let mut z = T::zero();
    for k in 0..n_levels {
        m[(k, k)] = C::new(p, T::zero());
        z += p;
        p *= q;
    }
    Ok(m.unscale(z))
}

/// Projector onto the first basis state of a factor.
pub fn ground_projector<T: Real>(n: usize, index: usize) -> CMatrix<T> {
    let mut m = CMatrix::zeros(n, n);
    m[(index, index)] = cl(1.0);
    m
}

/// Elementwise maximum of `|A†A - 1|`.
pub fn unitarity_defect<T: Real>(u: &CMatrix<T>) -> T {
    let n = u.nrows();
    max_abs(&(u.adjoint() * u - CMatrix::<T>::identity(n, n)))
}
