//! Local-basis states and logarithmic negativity.

use num_traits::Zero;

use crate::error::{Error, Result};
use crate::master::ancilla_level_values;
use crate::num::{hermitian_eigenvalues, hermitize, lit, CMatrix, Real, C};
use crate::operators::{
    displacement, partial_trace, partial_transpose, unitarity_defect, DensityState,
    HilbertGeometry, QOperator, Site,
};
use crate::sparse::KronPair;

/// Extra Fock levels used when measuring truncation leakage.
const LEAKAGE_PAD: usize = 8;

/// Largest acceptable leakage of a state out of the truncated space.
pub const LEAKAGE_LIMIT: f64 = 1e-6;

/// The polaron unitary `û = e^{-z Σαᵢ(bᵢ† - bᵢ)}`, block diagonal in the
/// ancilla level `z`.
#[derive(Debug, Clone)]
pub struct PolaronMap<T: Real> {
    alpha: [T; 2],
    geometry: HilbertGeometry,
    u: QOperator<T>,
    /// `Uₙ†` per ancilla level, as `D₁(zα₁) ⊗ D₂(zα₂)`.
    local: Vec<KronPair<T>>,
    z: Vec<T>,
}

impl<T: Real> PolaronMap<T> {
    pub fn new(geometry: HilbertGeometry, alpha: [T; 2]) -> Result<Self> {
        if !geometry.has_ancilla() {
            return Err(Error::InvalidDimension(
                "polaron map needs an ancilla factor".into(),
            ));
        }
        let [n1, n2] = geometry.fock_dims();
        let z = ancilla_level_values::<T>(&geometry);
        let mut local = Vec::with_capacity(z.len());
        for &zn in &z {
            local.push(KronPair::new(
                displacement(n1, zn * alpha[0])?,
                displacement(n2, zn * alpha[1])?,
            ));
        }
        let r = geometry.resonator_dim();
        let d = geometry.total_dim();
        let mut u = CMatrix::zeros(d, d);
        for (n, k) in local.iter().enumerate() {
            u.view_mut((n * r, n * r), (r, r))
                .copy_from(&k.to_dense().adjoint());
        }
        Ok(Self {
            alpha,
            geometry,
            u: QOperator::new(geometry, u)?,
            local,
            z,
        })
    }

    pub fn alpha(&self) -> [T; 2] {
        self.alpha
    }

    pub fn geometry(&self) -> &HilbertGeometry {
        &self.geometry
    }

    pub fn u(&self) -> &QOperator<T> {
        &self.u
    }

    pub fn unitarity_defect(&self) -> T {
        unitarity_defect(self.u.matrix())
    }

    fn check_geometry(&self, g: &HilbertGeometry) -> Result<()> {
        if *g != self.geometry {
            return Err(Error::InvalidDimension(format!(
                "state on {g}, polaron map on {}",
                self.geometry
            )));
        }
        Ok(())
    }

    /// `ρ = û† ρ̃ û`.
    pub fn to_local_basis(&self, state_tilde: &DensityState<T>) -> Result<DensityState<T>> {
        self.check_geometry(state_tilde.geometry())?;
        let leak = self.leakage(state_tilde.matrix());
        if leak > lit(LEAKAGE_LIMIT) {
            return Err(Error::TruncationLeakage {
                leakage: crate::num::to_f64(leak),
                limit: LEAKAGE_LIMIT,
            });
        }
        let u = self.u.matrix();
        let rho = hermitize(&(u.adjoint() * state_tilde.matrix() * u));
        DensityState::from_matrix(self.geometry, rho)
    }

    /// `ρ̃ = û ρ û†`.
    pub fn from_local_basis(&self, state: &DensityState<T>) -> Result<DensityState<T>> {
        self.check_geometry(state.geometry())?;
        let u = self.u.matrix();
        DensityState::from_matrix(
            self.geometry,
            hermitize(&(u * state.matrix() * u.adjoint())),
        )
    }

    /// `Uₙ† ρ̃ₙₙ Uₙ` for each diagonal ancilla block.
    pub fn local_blocks(&self, blocks: &[CMatrix<T>]) -> Vec<CMatrix<T>> {
        let r = self.geometry.resonator_dim();
        let (mut work, mut scratch) = (Vec::new(), Vec::new());
        blocks
            .iter()
            .zip(&self.local)
            .map(|(b, k)| {
                let mut out = vec![C::zero(); r * r];
                k.sandwich(b.as_slice(), &mut out, &mut work, &mut scratch);
                CMatrix::from_column_slice(r, r, &out)
            })
            .collect()
    }

    /// Local-frame resonator state `Tr_A[û† ρ̃ û]` from the diagonal blocks of `ρ̃`.
    pub fn resonator_from_blocks(&self, blocks: &[CMatrix<T>]) -> CMatrix<T> {
        let r = self.geometry.resonator_dim();
        self.local_blocks(blocks)
            .into_iter()
            .fold(CMatrix::zeros(r, r), |a, b| a + b)
    }

    /// Population pushed beyond the truncation by the inverse map, measured
    /// by repeating it with exact displacements on a padded space.
    pub fn leakage(&self, rho_tilde: &CMatrix<T>) -> T {
        let [n1, n2] = self.geometry.fock_dims();
        let (m1, m2) = (n1 + LEAKAGE_PAD, n2 + LEAKAGE_PAD);
        let r = n1 * n2;
        let big = m1 * m2;
        let (mut work, mut scratch) = (Vec::new(), Vec::new());
        let mut total = T::zero();
        for (n, &zn) in self.z.iter().enumerate() {
            let k = match (
                displacement(m1, zn * self.alpha[0]),
                displacement(m2, zn * self.alpha[1]),
            ) {
                (Ok(a), Ok(b)) => KronPair::new(a, b),
                _ => return T::max_value().unwrap_or(T::one()),
            };
            let mut padded = vec![C::zero(); big * big];
            for j in 0..r {
                let pj = (j / n2) * m2 + j % n2;
                for i in 0..r {
                    let pi = (i / n2) * m2 + i % n2;
                    padded[pj * big + pi] = rho_tilde[(n * r + i, n * r + j)];
                }
            }
            let mut out = vec![C::zero(); big * big];
            k.sandwich(&padded, &mut out, &mut work, &mut scratch);
            for i1 in 0..m1 {
                for i2 in 0..m2 {
                    if i1 >= n1 || i2 >= n2 {
                        let i = i1 * m2 + i2;
                        total += out[i * big + i].re;
                    }
                }
            }
        }
        total.abs()
    }
}

/// `Tr_A ρ` as a two-resonator state.
pub fn resonator_state<T: Real>(state: &DensityState<T>) -> Result<DensityState<T>> {
    if !state.geometry().has_ancilla() {
        return Err(Error::InvalidDimension(format!(
            "resonator_state needs an ancilla factor, got {}",
            state.geometry()
        )));
    }
    partial_trace(state, &[Site::R1, Site::R2])
}

/// `log₂ ‖ρ^{Γ₂}‖₁` of a two-resonator state.
pub fn log_negativity<T: Real>(state: &DensityState<T>) -> Result<T> {
    log_negativity_matrix(state.matrix(), state.geometry(), Site::R2)
}

/// Log-negativity of a raw two-resonator matrix, transposing `site`.
pub fn log_negativity_matrix<T: Real>(
    rho: &CMatrix<T>,
    geometry: &HilbertGeometry,
    site: Site,
) -> Result<T> {
    let pt = hermitize(&partial_transpose(rho, geometry, site)?);
    let ev = hermitian_eigenvalues(&pt);
    if ev.iter().any(|x| !x.is_finite()) {
        return Err(Error::NumericalFailure(
            "partial-transpose spectrum is not finite".into(),
        ));
    }
    let norm = ev.iter().fold(T::zero(), |a, x| a + x.abs());
    Ok(norm.log2().max(T::zero()))
}
