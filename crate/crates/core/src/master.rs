//! Lindblad generators.
//!
//! Every builder first lists `(jump, bath, signed frequency, α-order)` specs
//! and only then resolves rates through the spectral module. Polaron-frame
//! operators are materialized as dense matrices with the displacement factor
//! from an exact matrix exponential. Each term also records a block
//! factorization (ancilla shift, Kronecker displacement, sparse remainder)
//! that the fast generator in [`crate::generator`] uses.

use std::fmt;
use std::sync::Arc;

use num_traits::One;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::{cl, lit, max_abs, to_f64, CMatrix, Real, C};
use crate::operators::{
    displacement, embed, fock_destroy, tls_operators, AncillaKind, HilbertGeometry, QOperator, Site,
};
use crate::sparse::{KronPair, SharedKron, SparseOp};
use crate::spectral::{response, BathLabel, BathSpec};

/// Resonator and ancilla parameters in units of the ancilla frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams<T> {
    pub omega_a: T,
    pub omega: [T; 2],
    pub g: [T; 2],
    pub alpha: [T; 2],
    pub ancilla: AncillaKind,
}

impl<T: Real> SystemParams<T> {
    pub fn from_couplings(
        omega_a: T,
        omega: [T; 2],
        g: [T; 2],
        ancilla: AncillaKind,
    ) -> Result<Self> {
        let p = Self {
            omega_a,
            omega,
            g,
            alpha: [g[0] / omega[0], g[1] / omega[1]],
            ancilla,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn from_alpha(
        omega_a: T,
        omega: [T; 2],
        alpha: [T; 2],
        ancilla: AncillaKind,
    ) -> Result<Self> {
        let p = Self {
            omega_a,
            omega,
            g: [alpha[0] * omega[0], alpha[1] * omega[1]],
            alpha,
            ancilla,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega_a > T::zero()) || self.omega.iter().any(|w| !(*w > T::zero())) {
            return Err(Error::InvalidConfiguration(
                "all frequencies must be positive".into(),
            ));
        }
        for i in 0..2 {
            let expect = self.g[i] / self.omega[i];
            if (expect - self.alpha[i]).abs() > T::default_tol() * T::one().max(expect.abs()) {
                return Err(Error::InvalidConfiguration(format!(
                    "alpha[{i}] = {} disagrees with g/omega = {}",
                    to_f64(self.alpha[i]),
                    to_f64(expect)
                )));
            }
        }
        Ok(())
    }

    pub fn sum_omega(&self) -> T {
        self.omega[0] + self.omega[1]
    }

    /// Joint lower-sideband frequency `ω_a - ω₁ - ω₂`.
    pub fn omega_minus(&self) -> T {
        self.omega_a - self.sum_omega()
    }
}

/// The four baths of the machine.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BathSet<T> {
    pub hot: BathSpec<T>,
    pub cold: BathSpec<T>,
    pub local: [BathSpec<T>; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AncillaFactor {
    Lower,
    Raise,
}

/// One polaron-frame resonator ladder factor `b̃ᵢ` or `b̃ᵢ†`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Ladder {
    pub mode: usize,
    pub dagger: bool,
}

const fn lo(mode: usize) -> Ladder {
    Ladder {
        mode,
        dagger: false,
    }
}

const fn up(mode: usize) -> Ladder {
    Ladder { mode, dagger: true }
}

/// Product `[ã or ã†] · b̃… · b̃…` in the polaron frame.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct JumpExpr {
    pub ancilla: Option<AncillaFactor>,
    pub ladders: Vec<Ladder>,
}

impl JumpExpr {
    pub fn new(ancilla: Option<AncillaFactor>, ladders: &[Ladder]) -> Self {
        Self {
            ancilla,
            ladders: ladders.to_vec(),
        }
    }

    fn modes(&self) -> Vec<usize> {
        let mut m: Vec<usize> = self.ladders.iter().map(|l| l.mode).collect();
        m.sort_unstable();
        m.dedup();
        m
    }
}

impl fmt::Display for JumpExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        match self.ancilla {
            Some(AncillaFactor::Lower) => parts.push("ã".to_string()),
            Some(AncillaFactor::Raise) => parts.push("ã†".to_string()),
            None => {}
        }
        for l in &self.ladders {
            parts.push(format!(
                "b̃{}{}",
                l.mode + 1,
                if l.dagger { "†" } else { "" }
            ));
        }
        if parts.is_empty() {
            parts.push("1".into());
        }
        write!(f, "{}", parts.join(" "))
    }
}

/// Provenance of a term, echoed in the audit manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermInfo {
    pub label: String,
    pub bath: Option<BathLabel>,
    pub frequency: Option<f64>,
    pub alpha_order: u32,
}

impl TermInfo {
    pub fn plain(label: impl Into<String>) -> Self {
        Self {
            label: label.into(),
            bath: None,
            frequency: None,
            alpha_order: 0,
        }
    }
}

/// Block of a jump: maps ancilla level `from` to `to` with resonator part
/// `kron · sparse`.
#[derive(Debug, Clone)]
pub struct FactorBlock<T: Real> {
    pub from: usize,
    pub to: usize,
    pub kron: Option<SharedKron<T>>,
    pub sparse: SparseOp<T>,
}

/// Block factorization of a jump. All blocks share one ancilla shift.
#[derive(Debug, Clone, Default)]
pub struct JumpFactors<T: Real> {
    pub blocks: Vec<FactorBlock<T>>,
}

impl<T: Real> JumpFactors<T> {
    /// Dense matrix the factorization stands for.
    pub fn to_dense(&self, geometry: &HilbertGeometry) -> CMatrix<T> {
        let r = geometry.resonator_dim();
        let d = geometry.total_dim();
        let mut m = CMatrix::zeros(d, d);
        for b in &self.blocks {
            let mut blk = b.sparse.to_dense();
            if let Some(k) = &b.kron {
                blk = k.to_dense() * blk;
            }
            m.view_mut((b.to * r, b.from * r), (r, r)).copy_from(&blk);
        }
        m
    }
}

#[derive(Debug, Clone)]
pub struct LindbladTerm<T: Real> {
    pub rate: T,
    pub jump: QOperator<T>,
    pub info: TermInfo,
    pub factors: Option<JumpFactors<T>>,
}

impl<T: Real> LindbladTerm<T> {
    pub fn new(rate: T, jump: QOperator<T>, info: TermInfo) -> Result<Self> {
        if !(rate >= T::zero()) {
            return Err(Error::InvalidArgument(format!(
                "negative rate {} for term {}",
                to_f64(rate),
                info.label
            )));
        }
        Ok(Self {
            rate,
            jump,
            info,
            factors: None,
        })
    }

    pub fn with_factors(mut self, factors: JumpFactors<T>) -> Self {
        self.factors = Some(factors);
        self
    }
}

/// `rate·(o ρ o† - ½{o†o, ρ})`.
pub fn dissipator_apply<T: Real>(term: &LindbladTerm<T>, rho: &QOperator<T>) -> Result<CMatrix<T>> {
    if term.jump.geometry() != rho.geometry() {
        return Err(Error::InvalidDimension(format!(
            "term on {} applied to state on {}",
            term.jump.geometry(),
            rho.geometry()
        )));
    }
    Ok(dissipator_matrix(
        term.rate,
        term.jump.matrix(),
        rho.matrix(),
    ))
}

fn dissipator_matrix<T: Real>(rate: T, o: &CMatrix<T>, rho: &CMatrix<T>) -> CMatrix<T> {
    let od = o.adjoint();
    let odo = &od * o;
    let half: C<T> = cl(0.5);
    let out = o * rho * &od - (&odo * rho + rho * &odo) * half;
    out * C::new(rate, T::zero())
}

/// Audit record of one term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermRecord {
    pub label: String,
    pub bath: Option<BathLabel>,
    pub frequency: Option<f64>,
    pub alpha_order: u32,
    pub rate: f64,
}

#[derive(Debug, Clone)]
pub struct Liouvillian<T: Real> {
    pub geometry: HilbertGeometry,
    pub terms: Vec<LindbladTerm<T>>,
    pub hamiltonian: Option<QOperator<T>>,
    pub warnings: Vec<String>,
}

impl<T: Real> Liouvillian<T> {
    pub fn new(geometry: HilbertGeometry) -> Self {
        Self {
            geometry,
            terms: Vec::new(),
            hamiltonian: None,
            warnings: Vec::new(),
        }
    }

    pub fn push(&mut self, term: LindbladTerm<T>) -> Result<()> {
        if *term.jump.geometry() != self.geometry {
            return Err(Error::InvalidDimension(format!(
                "term on {} added to generator on {}",
                term.jump.geometry(),
                self.geometry
            )));
        }
        self.terms.push(term);
        Ok(())
    }

    pub fn with_hamiltonian(mut self, h: QOperator<T>) -> Result<Self> {
        if *h.geometry() != self.geometry {
            return Err(Error::InvalidDimension(
                "Hamiltonian geometry mismatch".into(),
            ));
        }
        self.hamiltonian = Some(h);
        Ok(self)
    }

    /// `-i[H, ρ] + Σ D[o]ρ` with dense matrices.
    pub fn apply(&self, rho: &CMatrix<T>) -> Result<CMatrix<T>> {
        let d = self.geometry.total_dim();
        if rho.nrows() != d || rho.ncols() != d {
            return Err(Error::InvalidDimension(format!(
                "state is {}x{}, generator acts on dimension {d}",
                rho.nrows(),
                rho.ncols()
            )));
        }
        let mut out = CMatrix::zeros(d, d);
        if let Some(h) = &self.hamiltonian {
            let h = h.matrix();
            out += (h * rho - rho * h) * C::new(T::zero(), -T::one());
        }
        for t in &self.terms {
            out += dissipator_matrix(t.rate, t.jump.matrix(), rho);
        }
        Ok(out)
    }

    /// Dense superoperator acting on column-stacked `vec(ρ)`.
    pub fn superoperator(&self) -> CMatrix<T> {
        let d = self.geometry.total_dim();
        let id = CMatrix::<T>::identity(d, d);
        let mut s = CMatrix::zeros(d * d, d * d);
        if let Some(h) = &self.hamiltonian {
            let h = h.matrix();
            let mi = C::new(T::zero(), -T::one());
            s += (id.kronecker(h) - h.transpose().kronecker(&id)) * mi;
        }
        let half: C<T> = cl(0.5);
        for t in &self.terms {
            let o = t.jump.matrix();
            let odo = o.adjoint() * o;
            let term = o.conjugate().kronecker(o)
                - (id.kronecker(&odo) + odo.transpose().kronecker(&id)) * half;
            s += term * C::new(t.rate, T::zero());
        }
        s
    }

    /// Largest |rate|·‖o‖² over terms plus ‖H‖, a crude generator scale.
    pub fn norm_estimate(&self) -> T {
        let mut n = T::zero();
        if let Some(h) = &self.hamiltonian {
            n += h.matrix().norm();
        }
        for t in &self.terms {
            let o = t.jump.matrix().norm();
            n += t.rate * o * o;
        }
        n
    }

    pub fn manifest(&self) -> Vec<TermRecord> {
        self.terms
            .iter()
            .map(|t| TermRecord {
                label: t.info.label.clone(),
                bath: t.info.bath,
                frequency: t.info.frequency,
                alpha_order: t.info.alpha_order,
                rate: to_f64(t.rate),
            })
            .collect()
    }
}

/// Level value multiplying the displacement generator in `û` and `b̃ = b - α·z`:
/// `σz` eigenvalue for the two-level ancilla, `n` for an oscillator.
pub fn ancilla_level_values<T: Real>(geometry: &HilbertGeometry) -> Vec<T> {
    match geometry.ancilla_kind() {
        AncillaKind::None => vec![T::zero()],
        AncillaKind::Tls => vec![T::one(), -T::one()],
        AncillaKind::Oscillator => (0..geometry.ancilla_dim()).map(|n| lit(n as f64)).collect(),
    }
}

/// Nonzero entries `(from, to, coefficient)` of the ancilla lowering operator.
fn ancilla_lowering<T: Real>(geometry: &HilbertGeometry) -> Vec<(usize, usize, T)> {
    match geometry.ancilla_kind() {
        AncillaKind::None => Vec::new(),
        // excited (0) -> ground (1)
        AncillaKind::Tls => vec![(0, 1, T::one())],
        AncillaKind::Oscillator => (1..geometry.ancilla_dim())
            .map(|n| (n, n - 1, lit::<T>(n as f64).sqrt()))
            .collect(),
    }
}

/// Ancilla excitation operator in the substitution rule: `σz` or `a†a`.
fn ancilla_level_operator<T: Real>(geometry: &HilbertGeometry) -> CMatrix<T> {
    let z = ancilla_level_values::<T>(geometry);
    CMatrix::from_diagonal(&crate::num::CVector::from_iterator(
        z.len(),
        z.iter().map(|&v| C::new(v, T::zero())),
    ))
}

/// Polaron-frame operators `ã = a·e^{-X}`, `b̃ᵢ = bᵢ - αᵢ·z` on a geometry,
/// with `X = Σαᵢ(bᵢ† - bᵢ)` and `z` the ancilla level operator.
pub struct PolaronOperators<T: Real> {
    pub geometry: HilbertGeometry,
    pub alpha: [T; 2],
    pub a: QOperator<T>,
    pub b: [QOperator<T>; 2],
    /// `e^{-X} = D₁(-α₁) ⊗ D₂(-α₂)` on the resonators.
    pub displacement: SharedKron<T>,
    pub displacement_adj: SharedKron<T>,
    bare_b: [CMatrix<T>; 2],
}

impl<T: Real> PolaronOperators<T> {
    pub fn new(geometry: HilbertGeometry, alpha: [T; 2]) -> Result<Self> {
        if !geometry.has_ancilla() {
            return Err(Error::InvalidDimension(
                "polaron operators need an ancilla factor".into(),
            ));
        }
        let [n1, n2] = geometry.fock_dims();
        let b1 = fock_destroy::<T>(n1)?;
        let b2 = fock_destroy::<T>(n2)?;
        let x = &embed(&(b1.adjoint() - &b1), Site::R1, &geometry)?
            .scale(C::new(alpha[0], T::zero()))
            + &embed(&(b2.adjoint() - &b2), Site::R2, &geometry)?
                .scale(C::new(alpha[1], T::zero()));
        let e_minus_x = crate::operators::matrix_exponential(&x.scale(-C::one()))?;
        let lower = match geometry.ancilla_kind() {
            AncillaKind::Tls => tls_operators::<T>().0,
            _ => fock_destroy::<T>(geometry.ancilla_dim())?,
        };
        let a = &embed(&lower, Site::Ancilla, &geometry)? * &e_minus_x;
        let z = embed(
            &ancilla_level_operator::<T>(&geometry),
            Site::Ancilla,
            &geometry,
        )?;
        let bt1 = &embed(&b1, Site::R1, &geometry)? - &z.scale(C::new(alpha[0], T::zero()));
        let bt2 = &embed(&b2, Site::R2, &geometry)? - &z.scale(C::new(alpha[1], T::zero()));
        let d = KronPair::new(
            displacement::<T>(n1, -alpha[0])?,
            displacement::<T>(n2, -alpha[1])?,
        );
        let dadj = d.adjoint();
        Ok(Self {
            geometry,
            alpha,
            a,
            b: [bt1, bt2],
            displacement: Arc::new(d),
            displacement_adj: Arc::new(dadj),
            bare_b: [b1, b2],
        })
    }

    /// Dense matrix of a jump expression.
    pub fn dense(&self, expr: &JumpExpr) -> QOperator<T> {
        let mut m = match expr.ancilla {
            Some(AncillaFactor::Lower) => self.a.clone(),
            Some(AncillaFactor::Raise) => self.a.adjoint(),
            None => QOperator::identity(self.geometry),
        };
        for l in &expr.ladders {
            let f = if l.dagger {
                self.b[l.mode].adjoint()
            } else {
                self.b[l.mode].clone()
            };
            m = &m * &f;
        }
        m
    }

    /// Resonator-block product of the ladder factors at ancilla level value `z`.
    fn ladder_block(&self, ladders: &[Ladder], z: T) -> SparseOp<T> {
        let [n1, n2] = self.geometry.fock_dims();
        let r = n1 * n2;
        let mut p = SparseOp::identity(r);
        for l in ladders {
            let bm = if l.mode == 0 {
                self.bare_b[0].kronecker(&CMatrix::identity(n2, n2))
            } else {
                CMatrix::identity(n1, n1).kronecker(&self.bare_b[1])
            };
            let shifted = bm - CMatrix::identity(r, r) * C::new(self.alpha[l.mode] * z, T::zero());
            let f = if l.dagger { shifted.adjoint() } else { shifted };
            p = p.matmul(&SparseOp::from_dense(&f));
        }
        p
    }

    pub fn factors(&self, expr: &JumpExpr) -> JumpFactors<T> {
        let z = ancilla_level_values::<T>(&self.geometry);
        let mut blocks = Vec::new();
        match expr.ancilla {
            None => {
                for (n, &zn) in z.iter().enumerate() {
                    blocks.push(FactorBlock {
                        from: n,
                        to: n,
                        kron: None,
                        sparse: self.ladder_block(&expr.ladders, zn),
                    });
                }
            }
            Some(AncillaFactor::Lower) => {
                for (from, to, c) in ancilla_lowering::<T>(&self.geometry) {
                    blocks.push(FactorBlock {
                        from,
                        to,
                        kron: Some(self.displacement.clone()),
                        sparse: self
                            .ladder_block(&expr.ladders, z[from])
                            .scale(C::new(c, T::zero())),
                    });
                }
            }
            Some(AncillaFactor::Raise) => {
                for (to, from, c) in ancilla_lowering::<T>(&self.geometry) {
                    blocks.push(FactorBlock {
                        from,
                        to,
                        kron: Some(self.displacement_adj.clone()),
                        sparse: self
                            .ladder_block(&expr.ladders, z[from])
                            .scale(C::new(c, T::zero())),
                    });
                }
            }
        }
        JumpFactors { blocks }
    }
}

/// A jump before its rate is resolved.
#[derive(Debug, Clone)]
pub struct TermSpec<T> {
    pub expr: JumpExpr,
    pub bath: BathLabel,
    pub frequency: T,
    pub alpha_order: u32,
}

fn spec<T: Real>(expr: JumpExpr, bath: BathLabel, frequency: T, alpha_order: u32) -> TermSpec<T> {
    TermSpec {
        expr,
        bath,
        frequency,
        alpha_order,
    }
}

fn bath_of<T: Real>(baths: &BathSet<T>, label: BathLabel) -> &BathSpec<T> {
    match label {
        BathLabel::Hot => &baths.hot,
        BathLabel::Cold => &baths.cold,
        BathLabel::Local1 => &baths.local[0],
        BathLabel::Local2 => &baths.local[1],
    }
}

/// α prefactor: geometric mean of the αᵢ of the modes in the jump, to the order.
fn alpha_prefactor<T: Real>(alpha: [T; 2], expr: &JumpExpr, order: u32) -> T {
    if order == 0 {
        return T::one();
    }
    let modes = expr.modes();
    let mean = match modes.as_slice() {
        [m] => alpha[*m],
        _ => (alpha[0] * alpha[1]).abs().sqrt(),
    };
    mean.powi(order as i32)
}

fn resolve<T: Real>(
    params: &SystemParams<T>,
    baths: &BathSet<T>,
    geometry: HilbertGeometry,
    specs: Vec<TermSpec<T>>,
) -> Result<Liouvillian<T>> {
    if geometry.ancilla_kind() != params.ancilla {
        return Err(Error::InvalidConfiguration(format!(
            "geometry ancilla {:?} does not match parameters {:?}",
            geometry.ancilla_kind(),
            params.ancilla
        )));
    }
    let ops = PolaronOperators::new(geometry, params.alpha)?;
    let mut l = Liouvillian::new(geometry);
    for s in specs {
        let bath = bath_of(baths, s.bath);
        let rate =
            alpha_prefactor(params.alpha, &s.expr, s.alpha_order) * response(s.frequency, bath)?;
        let jump = ops.dense(&s.expr);
        if max_abs(jump.matrix()) == T::zero() {
            continue;
        }
        let info = TermInfo {
            label: s.expr.to_string(),
            bath: Some(s.bath),
            frequency: Some(to_f64(s.frequency)),
            alpha_order: s.alpha_order,
        };
        let term = LindbladTerm::new(rate, jump, info)?.with_factors(ops.factors(&s.expr));
        l.push(term)?;
    }
    Ok(l)
}

fn local_specs<T: Real>(params: &SystemParams<T>) -> Vec<TermSpec<T>> {
    let mut v = Vec::new();
    for (i, label) in [(0, BathLabel::Local1), (1, BathLabel::Local2)] {
        v.push(spec(
            JumpExpr::new(None, &[lo(i)]),
            label,
            params.omega[i],
            0,
        ));
        v.push(spec(
            JumpExpr::new(None, &[up(i)]),
            label,
            -params.omega[i],
            0,
        ));
    }
    v
}

fn cold_filtered_specs<T: Real>(params: &SystemParams<T>) -> Vec<TermSpec<T>> {
    use AncillaFactor::*;
    let wa = params.omega_a;
    let c = BathLabel::Cold;
    let mut v = vec![
        spec(JumpExpr::new(Some(Lower), &[]), c, wa, 0),
        spec(JumpExpr::new(Some(Raise), &[]), c, -wa, 0),
    ];
    for i in 0..2 {
        v.push(spec(JumpExpr::new(Some(Lower), &[up(i), lo(i)]), c, wa, 3));
    }
    for i in 0..2 {
        v.push(spec(JumpExpr::new(Some(Raise), &[up(i), lo(i)]), c, -wa, 3));
    }
    v
}

fn hot_pair_specs<T: Real>(omega_minus: T) -> Vec<TermSpec<T>> {
    use AncillaFactor::*;
    vec![
        spec(
            JumpExpr::new(Some(Lower), &[up(0), up(1)]),
            BathLabel::Hot,
            omega_minus,
            3,
        ),
        spec(
            JumpExpr::new(Some(Raise), &[lo(0), lo(1)]),
            BathLabel::Hot,
            -omega_minus,
            3,
        ),
    ]
}

fn require_filters<T: Real>(baths: &BathSet<T>) -> Result<()> {
    for b in [&baths.hot, &baths.cold] {
        if b.filter.is_none() {
            return Err(Error::InvalidConfiguration(format!(
                "{} bath needs a filter for the filtered generators",
                b.label.as_str()
            )));
        }
    }
    Ok(())
}

/// Every secular term for both ancilla baths (Ohmic or filtered) plus the
/// local resonator baths.
pub fn build_full_secular<T: Real>(
    params: &SystemParams<T>,
    baths: &BathSet<T>,
    geometry: HilbertGeometry,
) -> Result<Liouvillian<T>> {
    use AncillaFactor::*;
    let wa = params.omega_a;
    let w = params.omega;
    let mut specs = Vec::new();
    for q in [BathLabel::Hot, BathLabel::Cold] {
        specs.push(spec(JumpExpr::new(Some(Lower), &[]), q, wa, 0));
        specs.push(spec(JumpExpr::new(Some(Raise), &[]), q, -wa, 0));
        for i in 0..2 {
            specs.push(spec(JumpExpr::new(Some(Lower), &[up(i), lo(i)]), q, wa, 3));
        }
        for i in 0..2 {
            specs.push(spec(JumpExpr::new(Some(Raise), &[up(i), lo(i)]), q, -wa, 3));
        }
        for i in 0..2 {
            for n in 1..=2u32 {
                let nw = w[i] * lit(n as f64);
                let ups = vec![up(i); n as usize];
                let los = vec![lo(i); n as usize];
                specs.push(spec(JumpExpr::new(Some(Lower), &ups), q, wa - nw, n + 1));
                specs.push(spec(JumpExpr::new(Some(Raise), &los), q, -wa + nw, n + 1));
                specs.push(spec(JumpExpr::new(Some(Lower), &los), q, wa + nw, n + 1));
                specs.push(spec(JumpExpr::new(Some(Raise), &ups), q, -wa - nw, n + 1));
            }
        }
        let s = params.sum_omega();
        specs.push(spec(
            JumpExpr::new(Some(Lower), &[up(0), up(1)]),
            q,
            wa - s,
            3,
        ));
        specs.push(spec(
            JumpExpr::new(Some(Raise), &[lo(0), lo(1)]),
            q,
            -wa + s,
            3,
        ));
        specs.push(spec(
            JumpExpr::new(Some(Lower), &[lo(0), lo(1)]),
            q,
            wa + s,
            3,
        ));
        specs.push(spec(
            JumpExpr::new(Some(Raise), &[up(0), up(1)]),
            q,
            -wa - s,
            3,
        ));
        let d = w[0] - w[1];
        specs.push(spec(
            JumpExpr::new(Some(Lower), &[up(0), lo(1)]),
            q,
            wa - d,
            3,
        ));
        specs.push(spec(
            JumpExpr::new(Some(Raise), &[lo(0), up(1)]),
            q,
            -wa + d,
            3,
        ));
        specs.push(spec(
            JumpExpr::new(Some(Lower), &[lo(0), up(1)]),
            q,
            wa + d,
            3,
        ));
        specs.push(spec(
            JumpExpr::new(Some(Raise), &[up(0), lo(1)]),
            q,
            -wa - d,
            3,
        ));
    }
    specs.extend(local_specs(params));
    let mut l = resolve(params, baths, geometry, specs)?;
    if params.alpha.iter().any(|a| a.abs() > lit(0.3)) {
        l.warnings
            .push("alpha above 0.3: dropped O(alpha^4) terms may matter".into());
    }
    Ok(l)
}

fn max_local_linewidth<T: Real>(params: &SystemParams<T>, baths: &BathSet<T>) -> T {
    let mut m = T::zero();
    for i in 0..2 {
        for w in [params.omega[i], -params.omega[i]] {
            m = m.max(crate::spectral::ohmic_response(w, &baths.local[i]));
        }
    }
    m
}

/// Cold carrier and dressed-carrier terms, the hot joint lower sideband and
/// the local baths, for distinct resonator frequencies.
pub fn build_filtered_nondegenerate<T: Real>(
    params: &SystemParams<T>,
    baths: &BathSet<T>,
    geometry: HilbertGeometry,
) -> Result<Liouvillian<T>> {
    if params.omega[0] == params.omega[1] {
        return Err(Error::DegenerateConfiguration(format!(
            "omega_1 = omega_2 = {}",
            to_f64(params.omega[0])
        )));
    }
    let mut l = nondegenerate_unchecked(params, baths, geometry)?;
    let split = (params.omega[0] - params.omega[1]).abs();
    if split < max_local_linewidth(params, baths) * lit(10.0) {
        l.warnings
            .push("resonator frequencies are within 10 local linewidths".into());
    }
    Ok(l)
}

pub(crate) fn nondegenerate_specs<T: Real>(params: &SystemParams<T>) -> Vec<TermSpec<T>> {
    let mut specs = cold_filtered_specs(params);
    specs.extend(hot_pair_specs(params.omega_minus()));
    specs.extend(local_specs(params));
    specs
}

pub(crate) fn nondegenerate_unchecked<T: Real>(
    params: &SystemParams<T>,
    baths: &BathSet<T>,
    geometry: HilbertGeometry,
) -> Result<Liouvillian<T>> {
    require_filters(baths)?;
    resolve(params, baths, geometry, nondegenerate_specs(params))
}

/// Non-degenerate terms plus cold cross terms and hot two-phonon terms, for
/// `ω₁ = ω₂`.
pub fn build_filtered_degenerate<T: Real>(
    params: &SystemParams<T>,
    baths: &BathSet<T>,
    geometry: HilbertGeometry,
) -> Result<Liouvillian<T>> {
    use AncillaFactor::*;
    if params.omega[0] != params.omega[1] {
        return Err(Error::InvalidConfiguration(format!(
            "degenerate builder needs omega_1 = omega_2, got {} and {}",
            to_f64(params.omega[0]),
            to_f64(params.omega[1])
        )));
    }
    require_filters(baths)?;
    let wa = params.omega_a;
    let two_omega = params.omega[0] * lit(2.0);
    let c = BathLabel::Cold;
    let h = BathLabel::Hot;
    let mut specs = nondegenerate_specs(params);
    specs.extend([
        spec(JumpExpr::new(Some(Lower), &[up(0), lo(1)]), c, wa, 3),
        spec(JumpExpr::new(Some(Lower), &[lo(0), up(1)]), c, wa, 3),
        spec(JumpExpr::new(Some(Raise), &[lo(0), up(1)]), c, -wa, 3),
        spec(JumpExpr::new(Some(Raise), &[up(0), lo(1)]), c, -wa, 3),
    ]);
    for i in 0..2 {
        specs.push(spec(
            JumpExpr::new(Some(Lower), &[up(i), up(i)]),
            h,
            wa - two_omega,
            3,
        ));
    }
    for i in 0..2 {
        specs.push(spec(
            JumpExpr::new(Some(Raise), &[lo(i), lo(i)]),
            h,
            -wa + two_omega,
            3,
        ));
    }
    resolve(params, baths, geometry, specs)
}

/// Operators of the effective two-resonator jump.
pub struct DentOperators<T: Real> {
    /// `α₁b₁ + α₂b₂`
    pub c: QOperator<T>,
    /// `b₁b₂ + α₁α₂`
    pub d: QOperator<T>,
    /// `e^{c - c†}(d - c)`
    pub jump: QOperator<T>,
    pub weight: T,
    factors: JumpFactors<T>,
}

impl<T: Real> DentOperators<T> {
    pub fn new(alpha: [T; 2], geometry: HilbertGeometry, n_a_expect: T) -> Result<Self> {
        if geometry.has_ancilla() {
            return Err(Error::InvalidDimension(
                "effective two-resonator jump lives on the resonators only".into(),
            ));
        }
        if !(n_a_expect >= T::zero()) {
            return Err(Error::InvalidArgument(
                "ancilla occupation must be nonnegative".into(),
            ));
        }
        let [n1, n2] = geometry.fock_dims();
        let b1 = embed(&fock_destroy::<T>(n1)?, Site::R1, &geometry)?;
        let b2 = embed(&fock_destroy::<T>(n2)?, Site::R2, &geometry)?;
        let a = |x: T| C::new(x, T::zero());
        let c = &b1.scale(a(alpha[0])) + &b2.scale(a(alpha[1]));
        let d = &(&b1 * &b2) + &QOperator::identity(geometry).scale(a(alpha[0] * alpha[1]));
        let exp = crate::operators::matrix_exponential(&(&c - &c.adjoint()))?;
        let dc = &d - &c;
        let jump = &exp * &dc;
        let kron = KronPair::new(
            displacement::<T>(n1, -alpha[0])?,
            displacement::<T>(n2, -alpha[1])?,
        );
        let factors = JumpFactors {
            blocks: vec![FactorBlock {
                from: 0,
                to: 0,
                kron: Some(Arc::new(kron)),
                sparse: SparseOp::from_dense(dc.matrix()),
            }],
        };
        Ok(Self {
            c,
            d,
            jump,
            weight: n_a_expect + T::one(),
            factors,
        })
    }
}

/// Single-term generator `rate·⟨n_a + 1⟩·D[e^{c-c†}(d - c)]` on the resonators.
pub fn build_dent_only<T: Real>(
    alpha: [T; 2],
    geometry: HilbertGeometry,
    rate: T,
    n_a_expect: T,
) -> Result<Liouvillian<T>> {
    let ops = DentOperators::new(alpha, geometry, n_a_expect)?;
    let mut l = Liouvillian::new(geometry);
    let info = TermInfo {
        label: "e^{c-c†}(d-c)".into(),
        bath: Some(BathLabel::Hot),
        frequency: None,
        alpha_order: 0,
    };
    l.push(
        LindbladTerm::new(rate * ops.weight, ops.jump.clone(), info)?.with_factors(ops.factors),
    )?;
    Ok(l)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArenzParams<T> {
    pub kappa_c: T,
    pub kappa_d: T,
    pub beta: C<T>,
}

/// `κ_c D[(b₁ - b₂)/√2] + κ_d D[b₁b₂/2 - β²]`.
pub fn build_arenz_reference<T: Real>(
    arenz: &ArenzParams<T>,
    geometry: HilbertGeometry,
) -> Result<Liouvillian<T>> {
    if geometry.has_ancilla() {
        return Err(Error::InvalidDimension(
            "reference generator lives on the resonators only".into(),
        ));
    }
    if !(arenz.kappa_c >= T::zero() && arenz.kappa_d >= T::zero()) {
        return Err(Error::InvalidArgument("negative reference rate".into()));
    }
    let [n1, n2] = geometry.fock_dims();
    let b1 = embed(&fock_destroy::<T>(n1)?, Site::R1, &geometry)?;
    let b2 = embed(&fock_destroy::<T>(n2)?, Site::R2, &geometry)?;
    let s = C::new(T::one() / lit::<T>(2.0).sqrt(), T::zero());
    let c_minus = (&b1 - &b2).scale(s);
    let d_minus =
        &(&b1 * &b2).scale(cl(0.5)) - &QOperator::identity(geometry).scale(arenz.beta * arenz.beta);
    let mut l = Liouvillian::new(geometry);
    for (rate, op, label) in [
        (arenz.kappa_c, c_minus, "(b1-b2)/sqrt2"),
        (arenz.kappa_d, d_minus, "b1 b2/2 - beta^2"),
    ] {
        let f = JumpFactors {
            blocks: vec![FactorBlock {
                from: 0,
                to: 0,
                kron: None,
                sparse: SparseOp::from_dense(op.matrix()),
            }],
        };
        l.push(LindbladTerm::new(rate, op, TermInfo::plain(label))?.with_factors(f))?;
    }
    Ok(l)
}

/// `Σ ωᵢ bᵢ†bᵢ` embedded in the geometry.
pub fn free_resonator_hamiltonian<T: Real>(
    geometry: HilbertGeometry,
    omega: [T; 2],
) -> Result<QOperator<T>> {
    let [n1, n2] = geometry.fock_dims();
    let n = |k: usize| -> Result<CMatrix<T>> {
        let b = fock_destroy::<T>(k)?;
        Ok(b.adjoint() * b)
    };
    let h1 = embed(&n(n1)?, Site::R1, &geometry)?.scale(C::new(omega[0], T::zero()));
    let h2 = embed(&n(n2)?, Site::R2, &geometry)?.scale(C::new(omega[1], T::zero()));
    Ok(&h1 + &h2)
}
