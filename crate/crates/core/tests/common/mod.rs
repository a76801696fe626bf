#![allow(dead_code)]

use entangler::master::*;
use entangler::num::{CMatrix, CVector, C};
use entangler::operators::{AncillaKind, HilbertGeometry};
use entangler::spectral::{BathLabel, BathSpec, Filter};

/// Deterministic generator for test inputs.
pub struct Lcg(pub u64);

impl Lcg {
    pub fn uniform(&mut self) -> f64 {
        self.0 = self
            .0
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        (self.0 >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn centered(&mut self) -> f64 {
        self.uniform() - 0.5
    }

    pub fn complex_matrix(&mut self, n: usize) -> CMatrix<f64> {
        CMatrix::from_fn(n, n, |_, _| C::new(self.centered(), self.centered()))
    }

    /// Random density matrix of dimension `n`.
    pub fn density(&mut self, n: usize) -> CMatrix<f64> {
        let x = self.complex_matrix(n);
        let m = &x * x.adjoint();
        let t = m.trace();
        m / t
    }

    /// Random Hermitian matrix with unit Frobenius norm.
    pub fn hermitian(&mut self, n: usize) -> CMatrix<f64> {
        let x = self.complex_matrix(n);
        let h = &x + x.adjoint();
        let norm = h.norm();
        h / C::new(norm, 0.0)
    }
}

pub fn max_abs(m: &CMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |a, z| a.max(z.norm()))
}

/// `A ⊗ B`, written out index by index.
pub fn kron(a: &CMatrix<f64>, b: &CMatrix<f64>) -> CMatrix<f64> {
    let (ra, ca, rb, cb) = (a.nrows(), a.ncols(), b.nrows(), b.ncols());
    CMatrix::from_fn(ra * rb, ca * cb, |i, j| {
        a[(i / rb, j / cb)] * b[(i % rb, j % cb)]
    })
}

pub fn dissipator(o: &CMatrix<f64>, rho: &CMatrix<f64>) -> CMatrix<f64> {
    let od = o.adjoint();
    let odo = &od * o;
    o * rho * &od - (&odo * rho + rho * &odo) * C::new(0.5, 0.0)
}

/// Small-scale filtered machine with well separated sidebands.
pub fn toy_params(alpha: f64) -> SystemParams<f64> {
    SystemParams::from_alpha(1.0, [0.05, 0.03], [alpha, alpha], AncillaKind::Tls).unwrap()
}

pub fn toy_baths(p: &SystemParams<f64>, coupling: f64) -> BathSet<f64> {
    BathSet {
        hot: BathSpec::filtered(
            BathLabel::Hot,
            6.0,
            coupling,
            Filter::new(p.omega_minus(), coupling),
        )
        .unwrap(),
        cold: BathSpec::filtered(
            BathLabel::Cold,
            0.15,
            coupling,
            Filter::new(p.omega_a, coupling),
        )
        .unwrap(),
        local: [
            BathSpec::ohmic(BathLabel::Local1, 0.4, 1e-3).unwrap(),
            BathSpec::ohmic(BathLabel::Local2, 0.3, 2e-3).unwrap(),
        ],
    }
}

/// Random state on the lowest `k` Fock levels of an `n`-level mode.
pub fn low_excitation(rng: &mut Lcg, n: usize, k: usize) -> CMatrix<f64> {
    let small = rng.density(k);
    let mut m = CMatrix::zeros(n, n);
    m.view_mut((0, 0), (k, k)).copy_from(&small);
    m
}

/// Largest entry of `Tr_A[û† D[ã† b̃₁ b̃₂](û (ρ_A ⊗ ρ_R) û†) û] - ⟨n_a + 1⟩ D_ent(ρ_R)`
/// for a diagonal ancilla state with level populations `pops`.
pub fn traced_pair_deviation(
    geometry: entangler::operators::HilbertGeometry,
    alpha: f64,
    pops: &[f64],
    rho_r: &CMatrix<f64>,
) -> f64 {
    use entangler::entanglement::PolaronMap;
    use entangler::operators::trace_ancilla;

    let ops = PolaronOperators::new(geometry, [alpha, alpha]).unwrap();
    let jump = ops.dense(&JumpExpr::new(
        Some(AncillaFactor::Raise),
        &[
            Ladder {
                mode: 0,
                dagger: false,
            },
            Ladder {
                mode: 1,
                dagger: false,
            },
        ],
    ));
    let u = PolaronMap::new(geometry, [alpha, alpha])
        .unwrap()
        .u()
        .matrix()
        .clone();
    let rho_a = CMatrix::from_fn(pops.len(), pops.len(), |i, j| {
        C::new(if i == j { pops[i] } else { 0.0 }, 0.0)
    });
    let rho = kron(&rho_a, rho_r);
    let tilde = &u * rho * u.adjoint();
    let back = u.adjoint() * dissipator(jump.matrix(), &tilde) * &u;
    let traced = trace_ancilla(&back, &geometry);

    // ⟨n_a⟩ from the ancilla number operator: a†a, or |e⟩⟨e| with the excited level first
    let n_a: f64 = match geometry.ancilla_kind() {
        AncillaKind::Tls => pops[0],
        _ => pops.iter().enumerate().map(|(n, p)| n as f64 * p).sum(),
    };
    let [n1, n2] = geometry.fock_dims();
    let dent = DentOperators::new(
        [alpha, alpha],
        HilbertGeometry::two_mode(n1, n2).unwrap(),
        n_a,
    )
    .unwrap();
    let expected = dissipator(dent.jump.matrix(), rho_r) * C::new(n_a + 1.0, 0.0);
    max_abs(&(traced - expected))
}

/// Row-stacked `vec(ρ)ᵢⱼ = ρ[i, j]`, where `vec(AρB) = (A ⊗ Bᵀ) vec(ρ)`.
pub fn row_stacked_generator(l: &Liouvillian<f64>) -> CMatrix<f64> {
    let d = l.geometry.total_dim();
    let id = CMatrix::identity(d, d);
    let mut s = CMatrix::zeros(d * d, d * d);
    if let Some(h) = &l.hamiltonian {
        let h = h.matrix();
        s += (kron(h, &id) - kron(&id, &h.transpose())) * C::new(0.0, -1.0);
    }
    for t in &l.terms {
        let o = t.jump.matrix();
        let odo = o.adjoint() * o;
        let term = kron(o, &o.conjugate())
            - (kron(&odo, &id) + kron(&id, &odo.transpose())) * C::new(0.5, 0.0);
        s += term * C::new(t.rate, 0.0);
    }
    s
}

pub fn vec_rows(m: &CMatrix<f64>) -> CVector<f64> {
    let d = m.nrows();
    CVector::from_fn(d * d, |k, _| m[(k / d, k % d)])
}

pub fn unvec_rows(v: &CVector<f64>, d: usize) -> CMatrix<f64> {
    CMatrix::from_fn(d, d, |i, j| v[i * d + j])
}

pub fn all_small_generators() -> Vec<(&'static str, Liouvillian<f64>)> {
    let two = HilbertGeometry::two_mode(3, 3).unwrap();
    let tls = HilbertGeometry::tls(3, 3).unwrap();
    let osc = HilbertGeometry::oscillator(3, 3, 3).unwrap();
    let p = toy_params(0.2);
    let b = toy_baths(&p, 0.01);
    let po = SystemParams {
        ancilla: AncillaKind::Oscillator,
        ..p
    };
    let pd = SystemParams::from_alpha(1.0, [0.04, 0.04], [0.2, 0.15], AncillaKind::Tls).unwrap();
    let bd = toy_baths(&pd, 0.01);
    let pdo = SystemParams {
        ancilla: AncillaKind::Oscillator,
        ..pd
    };
    let arenz = ArenzParams {
        kappa_c: 0.1,
        kappa_d: 0.07,
        beta: C::new(0.2, 0.1),
    };
    vec![
        ("dent", build_dent_only([0.2, 0.3], two, 0.1, 0.05).unwrap()),
        (
            "dent+H",
            build_dent_only([0.2, 0.2], two, 0.1, 0.0)
                .unwrap()
                .with_hamiltonian(free_resonator_hamiltonian(two, [1.0, 0.8]).unwrap())
                .unwrap(),
        ),
        ("arenz", build_arenz_reference(&arenz, two).unwrap()),
        ("secular tls", build_full_secular(&p, &b, tls).unwrap()),
        ("secular osc", build_full_secular(&po, &b, osc).unwrap()),
        (
            "nondegenerate tls",
            build_filtered_nondegenerate(&p, &b, tls).unwrap(),
        ),
        (
            "nondegenerate osc",
            build_filtered_nondegenerate(&po, &b, osc).unwrap(),
        ),
        (
            "degenerate tls",
            build_filtered_degenerate(&pd, &bd, tls).unwrap(),
        ),
        (
            "degenerate osc",
            build_filtered_degenerate(&pdo, &bd, osc).unwrap(),
        ),
    ]
}
