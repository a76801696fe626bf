//! Time evolution, observables and fixed points of the master equation.

use std::io::Write;
use std::path::Path;

use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::entanglement::{log_negativity_matrix, PolaronMap};
use crate::error::{Error, Result};
use crate::generator::{Generator, Workspace};
use crate::master::{ancilla_level_values, Liouvillian};
use crate::num::{cabs, hermitize, lit, max_abs, to_f64, CMatrix, Real, C};
use crate::operators::{AncillaKind, DensityState, HilbertGeometry, QOperator, Site};

/// Trace drift that may be silently renormalized.
pub const TRACE_DRIFT_BUDGET: f64 = 1e-8;
/// Most negative eigenvalue tolerated in a recorded state.
pub const POSITIVITY_FLOOR: f64 = -1e-6;
/// Largest Hilbert dimension for which dense vectorized methods are used.
pub const DENSE_DIM_LIMIT: usize = 40;

/// `-i[H, ρ] + Σ D[o]ρ`.
pub fn rhs<T: Real>(l: &Liouvillian<T>, state: &DensityState<T>) -> Result<CMatrix<T>> {
    if *state.geometry() != l.geometry {
        return Err(Error::InvalidDimension(format!(
            "state on {}, generator on {}",
            state.geometry(),
            l.geometry
        )));
    }
    l.apply(state.matrix())
}

#[derive(Debug, Clone)]
pub struct EvolveOptions<T: Real> {
    pub t_final: T,
    pub stride: T,
    pub rtol: T,
    pub atol: T,
    /// Smallest admissible step before giving up as stiff.
    pub h_min: T,
    pub max_steps: usize,
    /// Multiplies times when exporting (e.g. `ω₁` for `ω₁t` axes).
    pub time_scale: T,
    /// Inverse polaron map applied before reducing to the resonators.
    pub polaron: Option<PolaronMap<T>>,
    pub snapshots: bool,
    /// Force the dense generator even when the block form applies.
    pub force_dense: bool,
}

impl<T: Real> EvolveOptions<T> {
    pub fn new(t_final: T, stride: T) -> Self {
        Self {
            t_final,
            stride,
            rtol: lit(1e-8),
            atol: lit(1e-12),
            h_min: lit(1e-10),
            max_steps: 50_000_000,
            time_scale: T::one(),
            polaron: None,
            snapshots: false,
            force_dense: false,
        }
    }

    pub fn tolerance(mut self, rtol: T) -> Self {
        self.rtol = rtol;
        self
    }

    pub fn polaron(mut self, map: PolaronMap<T>) -> Self {
        self.polaron = Some(map);
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.t_final >= T::zero()) || !(self.stride > T::zero()) {
            return Err(Error::InvalidArgument(
                "need t_final >= 0 and stride > 0".into(),
            ));
        }
        if !(self.rtol > T::zero()) || !(self.atol > T::zero()) {
            return Err(Error::InvalidArgument("tolerances must be positive".into()));
        }
        Ok(())
    }
}

/// Observables at one recorded time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub t: f64,
    pub en: f64,
    pub n1: f64,
    pub n2: f64,
    pub na: f64,
    pub trace_err: f64,
    pub min_eig: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory<T: Real> {
    pub records: Vec<Record>,
    pub time_scale: f64,
    pub snapshots: Vec<DensityState<T>>,
    pub final_state: DensityState<T>,
    pub structured: bool,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
}

pub const CSV_HEADER: &str = "t,EN,n1,n2,na,trace_err,min_eig";

impl<T: Real> Trajectory<T> {
    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.t).collect()
    }

    pub fn en(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.en).collect()
    }

    pub fn peak_en(&self) -> f64 {
        self.records.iter().fold(0.0, |a, r| a.max(r.en))
    }

    pub fn last(&self) -> &Record {
        self.records
            .last()
            .expect("trajectory has at least one record")
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{CSV_HEADER}")?;
        for r in &self.records {
            writeln!(
                w,
                "{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.3e},{:.3e}",
                r.t * self.time_scale,
                r.en,
                r.n1,
                r.n2,
                r.na,
                r.trace_err,
                r.min_eig
            )?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))
    }
}

struct Observer<'a, T: Real> {
    gen: &'a Generator<T>,
    polaron: Option<&'a PolaronMap<T>>,
    levels: Vec<T>,
    two_mode: HilbertGeometry,
}

impl<'a, T: Real> Observer<'a, T> {
    fn new(gen: &'a Generator<T>, polaron: Option<&'a PolaronMap<T>>) -> Result<Self> {
        let g = *gen.geometry();
        if let Some(p) = polaron {
            if *p.geometry() != g {
                return Err(Error::InvalidDimension(
                    "polaron map geometry differs from the generator".into(),
                ));
            }
        }
        let levels = match g.ancilla_kind() {
            // excited-state population for the two-level ancilla
            AncillaKind::Tls => vec![T::one(), T::zero()],
            _ => ancilla_level_values(&g),
        };
        Ok(Self {
            gen,
            polaron,
            levels,
            two_mode: g.resonators(),
        })
    }

    fn record(&self, t: T, v: &[C<T>], trace_err: T) -> Result<Record> {
        let blocks = self.gen.diagonal_blocks(v);
        let na = blocks
            .iter()
            .zip(&self.levels)
            .fold(T::zero(), |a, (b, &z)| a + z * crate::num::trace(b).re);
        let rho_r = match self.polaron {
            Some(p) => p.resonator_from_blocks(&blocks),
            None => blocks.iter().fold(
                CMatrix::zeros(blocks[0].nrows(), blocks[0].ncols()),
                |a, b| a + b,
            ),
        };
        let rho_r = hermitize(&rho_r);
        let [n1, n2] = self.two_mode.fock_dims();
        let (mut m1, mut m2) = (T::zero(), T::zero());
        for i1 in 0..n1 {
            for i2 in 0..n2 {
                let p = rho_r[(i1 * n2 + i2, i1 * n2 + i2)].re;
                m1 += p * lit(i1 as f64);
                m2 += p * lit(i2 as f64);
            }
        }
        let en = log_negativity_matrix(&rho_r, &self.two_mode, Site::R2)?;
        Ok(Record {
            t: to_f64(t),
            en: to_f64(en),
            n1: to_f64(m1),
            n2: to_f64(m2),
            na: to_f64(na),
            trace_err: to_f64(trace_err),
            min_eig: to_f64(self.gen.min_eigenvalue(v)),
        })
    }
}

// Dormand–Prince 5(4) tableau.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

struct Stepper<'a, T: Real> {
    gen: &'a Generator<T>,
    ws: Workspace<T>,
    k: [Vec<C<T>>; 7],
    tmp: Vec<C<T>>,
    y_new: Vec<C<T>>,
    fresh: bool,
}

impl<'a, T: Real> Stepper<'a, T> {
    fn new(gen: &'a Generator<T>, n: usize) -> Self {
        let z = || vec![C::zero(); n];
        Self {
            gen,
            ws: Workspace::default(),
            k: [z(), z(), z(), z(), z(), z(), z()],
            tmp: z(),
            y_new: z(),
            fresh: true,
        }
    }

    fn stage(&mut self, y: &[C<T>], h: T, coeffs: &[(usize, f64)], target: usize) {
        self.tmp.copy_from_slice(y);
        for &(j, a) in coeffs {
            let c = C::new(h * lit(a), T::zero());
            for (t, k) in self.tmp.iter_mut().zip(&self.k[j]) {
                *t += *k * c;
            }
        }
        let (tmp, k) = (&self.tmp, &mut self.k[target]);
        self.gen.apply(tmp, k, &mut self.ws);
    }

    /// One trial step; returns the scaled error norm. The candidate stays in
    /// `y_new` and its derivative in `k[6]`.
    fn attempt(&mut self, y: &[C<T>], h: T, rtol: T, atol: T) -> T {
        if self.fresh {
            let k0 = &mut self.k[0];
            self.gen.apply(y, k0, &mut self.ws);
            self.fresh = false;
        }
        self.stage(y, h, &[(0, A21)], 1);
        self.stage(y, h, &[(0, A31), (1, A32)], 2);
        self.stage(y, h, &[(0, A41), (1, A42), (2, A43)], 3);
        self.stage(y, h, &[(0, A51), (1, A52), (2, A53), (3, A54)], 4);
        self.stage(y, h, &[(0, A61), (1, A62), (2, A63), (3, A64), (4, A65)], 5);
        let hc = |c: f64| C::new(h * lit(c), T::zero());
        for i in 0..y.len() {
            self.y_new[i] = y[i]
                + self.k[0][i] * hc(B1)
                + self.k[2][i] * hc(B3)
                + self.k[3][i] * hc(B4)
                + self.k[4][i] * hc(B5)
                + self.k[5][i] * hc(B6);
        }
        let (yn, k6) = (&self.y_new, &mut self.k[6]);
        self.gen.apply(yn, k6, &mut self.ws);
        let mut sum = T::zero();
        for i in 0..y.len() {
            let e = self.k[0][i] * hc(E1)
                + self.k[2][i] * hc(E3)
                + self.k[3][i] * hc(E4)
                + self.k[4][i] * hc(E5)
                + self.k[5][i] * hc(E6)
                + self.k[6][i] * hc(E7);
            let sc = atol + rtol * cabs(y[i]).max(cabs(self.y_new[i]));
            let r = cabs(e) / sc;
            sum += r * r;
        }
        (sum / lit(y.len().max(1) as f64)).sqrt()
    }

    fn accept(&mut self, y: &mut [C<T>]) {
        y.copy_from_slice(&self.y_new);
        self.k.swap(0, 6);
    }

    fn invalidate(&mut self) {
        self.fresh = true;
    }
}

fn initial_step<T: Real>(
    gen: &Generator<T>,
    y: &[C<T>],
    rtol: T,
    atol: T,
    ws: &mut Workspace<T>,
) -> T {
    let mut f = vec![C::zero(); y.len()];
    gen.apply(y, &mut f, ws);
    let mut d0 = T::zero();
    let mut d1 = T::zero();
    for i in 0..y.len() {
        let sc = atol + rtol * cabs(y[i]);
        d0 += (cabs(y[i]) / sc).powi(2);
        d1 += (cabs(f[i]) / sc).powi(2);
    }
    let n = lit::<T>(y.len().max(1) as f64);
    let (d0, d1) = ((d0 / n).sqrt(), (d1 / n).sqrt());
    if d0 < lit(1e-5) || d1 < lit(1e-5) {
        lit(1e-6)
    } else {
        lit::<T>(0.01) * d0 / d1
    }
}

/// Integrates `dρ̃/dt = L[ρ̃]` from `state0`, recording every `stride`.
pub fn evolve<T: Real>(
    l: &Liouvillian<T>,
    state0: &DensityState<T>,
    opts: &EvolveOptions<T>,
) -> Result<Trajectory<T>> {
    opts.validate()?;
    if *state0.geometry() != l.geometry {
        return Err(Error::InvalidDimension(format!(
            "initial state on {}, generator on {}",
            state0.geometry(),
            l.geometry
        )));
    }
    let gen = if opts.force_dense {
        Generator::dense(l)
    } else {
        Generator::for_state(l, state0.matrix())
    };
    let observer = Observer::new(&gen, opts.polaron.as_ref())?;
    let mut y = gen.pack(state0.matrix())?;
    let n = y.len();
    let mut stepper = Stepper::new(&gen, n);
    let mut traj = Trajectory {
        records: Vec::new(),
        time_scale: to_f64(opts.time_scale),
        snapshots: Vec::new(),
        final_state: state0.clone(),
        structured: gen.is_structured(),
        accepted_steps: 0,
        rejected_steps: 0,
    };

    let (rtol, atol) = (opts.rtol, opts.atol);
    let mut t = T::zero();
    let mut h = initial_step(&gen, &y, rtol, atol, &mut Workspace::default()).min(opts.stride);
    let mut err_prev = T::one();
    let mut k_rec = 0usize;
    // the budget cannot sit below what the scalar type resolves
    let budget = lit::<T>(TRACE_DRIFT_BUDGET).max(lit::<T>(1e3) * T::machine_eps());
    loop {
        let t_rec = (opts.stride * lit(k_rec as f64)).min(opts.t_final);
        // record
        if t >= t_rec {
            let tr = gen.trace(&y);
            let drift = (tr - T::one()).abs();
            if drift > budget {
                return Err(Error::IntegrationQuality {
                    time: to_f64(t),
                    detail: format!("trace drifted by {:.3e}", to_f64(drift)),
                });
            }
            let s = C::new(T::one() / tr, T::zero());
            y.iter_mut().for_each(|z| *z *= s);
            let rec = observer.record(t, &y, drift)?;
            if rec.min_eig < POSITIVITY_FLOOR {
                return Err(Error::IntegrationQuality {
                    time: rec.t,
                    detail: format!("minimum eigenvalue {:.3e}", rec.min_eig),
                });
            }
            traj.records.push(rec);
            stepper.invalidate();
            if opts.snapshots {
                let op = QOperator::new(l.geometry, hermitize(&gen.unpack(&y)))?;
                traj.snapshots.push(DensityState::new_unchecked(op));
            }
            if t_rec >= opts.t_final {
                break;
            }
            k_rec += 1;
            continue;
        }
        let remaining = t_rec - t;
        let last = h >= remaining;
        let h_try = if last { remaining } else { h };
        if traj.accepted_steps + traj.rejected_steps >= opts.max_steps {
            return Err(Error::Stiffness {
                time: to_f64(t),
                min_step: to_f64(h_try),
            });
        }
        let err = stepper.attempt(&y, h_try, rtol, atol);
        if !err.is_finite() {
            traj.rejected_steps += 1;
            h = h_try * lit(0.2);
            stepper.invalidate();
        } else if err <= T::one() {
            stepper.accept(&mut y);
            traj.accepted_steps += 1;
            t = if last { t_rec } else { t + h_try };
            let e = err.max(lit(1e-10));
            let fac = lit::<T>(0.9) * e.powf(lit(-0.7 / 5.0)) * err_prev.powf(lit(0.4 / 5.0));
            let fac = fac.max(lit(0.2)).min(lit(10.0));
            // a step shortened to land on a record time should not shrink h
            h = if last {
                h.max(h_try * fac)
            } else {
                h_try * fac
            };
            err_prev = e;
        } else {
            traj.rejected_steps += 1;
            let fac = (lit::<T>(0.9) * err.powf(lit(-0.2))).max(lit(0.2));
            h = h_try * fac;
        }
        if h < opts.h_min && !(remaining <= opts.h_min) {
            return Err(Error::Stiffness {
                time: to_f64(t),
                min_step: to_f64(h),
            });
        }
    }
    let fin = hermitize(&gen.unpack(&y));
    traj.final_state = DensityState::new(QOperator::new(l.geometry, fin)?)?;
    Ok(traj)
}

/// Maximum deviation between two trajectories on a shared grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    /// `max_t |ΔE_N| / max(max_t E_N, EN_RESOLUTION)` of the reference run.
    pub en_deviation: f64,
    /// Same for the two resonator populations.
    pub population_deviation: f64,
    pub converged: bool,
}

pub const CONVERGENCE_TOLERANCE: f64 = 0.02;

/// Log-negativity below this is numerical noise and counts as no entanglement.
pub const EN_RESOLUTION: f64 = 1e-6;

/// Compares `coarse` against the better-resolved `reference`.
pub fn compare_trajectories<T: Real, U: Real>(
    coarse: &Trajectory<T>,
    reference: &Trajectory<U>,
) -> Result<ConvergenceReport> {
    if coarse.records.len() != reference.records.len() {
        return Err(Error::InvalidArgument(
            "trajectories have different grids".into(),
        ));
    }
    let rel = |f: &dyn Fn(&Record) -> f64, floor: f64| {
        let scale = reference
            .records
            .iter()
            .fold(floor, |a, r| a.max(f(r).abs()));
        let diff = coarse
            .records
            .iter()
            .zip(&reference.records)
            .fold(0.0f64, |a, (x, y)| a.max((f(x) - f(y)).abs()));
        if diff == 0.0 {
            0.0
        } else {
            diff / scale
        }
    };
    let en = rel(&|r| r.en, EN_RESOLUTION);
    let pop = rel(&|r| r.n1, 1e-12).max(rel(&|r| r.n2, 1e-12));
    Ok(ConvergenceReport {
        en_deviation: en,
        population_deviation: pop,
        converged: en < CONVERGENCE_TOLERANCE && pop < CONVERGENCE_TOLERANCE,
    })
}

/// Fixed point `L[ρ] = 0`.
///
/// Small spaces use the null vector of the dense superoperator. Larger ones
/// run restarted GMRES on the block generator from two different starts and
/// require that both agree.
pub fn steady_state<T: Real>(l: &Liouvillian<T>) -> Result<DensityState<T>> {
    let g = l.geometry;
    let d = g.total_dim();
    let scale = l.norm_estimate();
    let out = if d <= DENSE_DIM_LIMIT {
        dense_null_state(l)?
    } else {
        krylov_steady_state(l)?
    };
    let res = max_abs(&l.apply(&out)?);
    if res > lit::<T>(1e-10) * scale {
        return Err(Error::NumericalFailure(format!(
            "steady-state residual {:.3e} exceeds 1e-10 of the generator scale {:.3e}",
            to_f64(res),
            to_f64(scale)
        )));
    }
    DensityState::from_matrix(g, out)
}

fn normalize_state<T: Real>(m: CMatrix<T>) -> Result<CMatrix<T>> {
    let m = hermitize(&m);
    let tr = crate::num::trace(&m).re;
    if tr == T::zero() || !tr.is_finite() {
        return Err(Error::NumericalFailure("fixed point has zero trace".into()));
    }
    Ok(m.unscale(tr))
}

fn dense_null_state<T: Real>(l: &Liouvillian<T>) -> Result<CMatrix<T>> {
    let d = l.geometry.total_dim();
    let s = l.superoperator();
    let svd = s.svd(false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::NumericalFailure("SVD did not return right vectors".into()))?;
    let sv = &svd.singular_values;
    let smax = sv.iter().fold(T::zero(), |a, &b| a.max(b));
    let tol = smax * lit::<T>(1e-10).max(T::default_tol() * lit(10.0)) * lit(d as f64);
    let null: Vec<usize> = (0..sv.len()).filter(|&i| sv[i] <= tol).collect();
    if null.len() != 1 {
        return Err(Error::NonUniqueSteadyState(null.len()));
    }
    let row = v_t.row(null[0]);
    let v: Vec<C<T>> = row.iter().map(|z| z.conj()).collect();
    normalize_state(CMatrix::from_column_slice(d, d, &v))
}

fn krylov_steady_state<T: Real>(l: &Liouvillian<T>) -> Result<CMatrix<T>> {
    let g = l.geometry;
    let d = g.total_dim();
    let start_a = CMatrix::<T>::identity(d, d).unscale(lit(d as f64));
    let mut start_b = CMatrix::<T>::zeros(d, d);
    let mut z = T::zero();
    for i in 0..d {
        let w = lit::<T>(0.5).powi((i % 24) as i32);
        start_b[(i, i)] = C::new(w, T::zero());
        z += w;
    }
    let start_b = start_b.unscale(z);
    let gen = Generator::for_state(l, &start_a);
    let solve = |rho0: &CMatrix<T>| -> Result<CMatrix<T>> {
        let x0 = gen.pack(rho0)?;
        let x = gmres_fixed_point(&gen, &x0)?;
        normalize_state(gen.unpack(&x))
    };
    let a = solve(&start_a)?;
    let b = solve(&start_b)?;
    if max_abs(&(&a - &b)) > lit(1e-6) {
        return Err(Error::NonUniqueSteadyState(2));
    }
    Ok(a)
}

fn dot<T: Real>(a: &[C<T>], b: &[C<T>]) -> C<T> {
    a.iter()
        .zip(b)
        .fold(C::zero(), |s, (x, y)| s + x.conj() * y)
}

fn norm<T: Real>(a: &[C<T>]) -> T {
    a.iter().fold(T::zero(), |s, x| s + x.norm_sqr()).sqrt()
}

/// Restarted GMRES for `L[x0 + δ] = 0`, with `δ` in the Krylov space of `L`
/// (so the trace of `x0` is kept).
fn gmres_fixed_point<T: Real>(gen: &Generator<T>, x0: &[C<T>]) -> Result<Vec<C<T>>> {
    const RESTART: usize = 120;
    const MAX_CYCLES: usize = 200;
    let n = x0.len();
    let mut ws = Workspace::default();
    let mut x = x0.to_vec();
    let apply = |v: &[C<T>], ws: &mut Workspace<T>| {
        let mut o = vec![C::zero(); n];
        gen.apply(v, &mut o, ws);
        o
    };
    let r0 = apply(&x, &mut ws);
    let target = norm(&r0) * lit(1e-13);
    for _ in 0..MAX_CYCLES {
        // residual of L δ = -L x
        let mut r: Vec<C<T>> = apply(&x, &mut ws).into_iter().map(|z| -z).collect();
        let beta = norm(&r);
        if beta <= target || beta == T::zero() {
            return Ok(x);
        }
        r.iter_mut().for_each(|z| *z = z.unscale(beta));
        let mut basis = vec![r];
        let mut hmat = vec![vec![C::<T>::zero(); RESTART]; RESTART + 1];
        let (mut cs, mut sn) = (vec![C::<T>::zero(); RESTART], vec![C::<T>::zero(); RESTART]);
        let mut gvec = vec![C::<T>::zero(); RESTART + 1];
        gvec[0] = C::new(beta, T::zero());
        let mut used = 0;
        for j in 0..RESTART {
            let mut w = apply(&basis[j], &mut ws);
            for (i, b) in basis.iter().enumerate() {
                let hij = dot(b, &w);
                hmat[i][j] = hij;
                w.iter_mut().zip(b).for_each(|(wk, bk)| *wk -= hij * bk);
            }
            let hn = norm(&w);
            hmat[j + 1][j] = C::new(hn, T::zero());
            for i in 0..j {
                let (a, b) = (hmat[i][j], hmat[i + 1][j]);
                hmat[i][j] = cs[i].conj() * a + sn[i].conj() * b;
                hmat[i + 1][j] = -sn[i] * a + cs[i] * b;
            }
            let (a, b) = (hmat[j][j], hmat[j + 1][j]);
            let rr = (a.norm_sqr() + b.norm_sqr()).sqrt();
            if rr == T::zero() {
                used = j;
                break;
            }
            cs[j] = a.unscale(rr);
            sn[j] = b.unscale(rr);
            hmat[j][j] = C::new(rr, T::zero());
            hmat[j + 1][j] = C::zero();
            gvec[j + 1] = -sn[j] * gvec[j];
            gvec[j] = cs[j].conj() * gvec[j];
            used = j + 1;
            if cabs(gvec[j + 1]) <= target || hn == T::zero() {
                break;
            }
            w.iter_mut().for_each(|z| *z = z.unscale(hn));
            basis.push(w);
        }
        let mut yv = vec![C::<T>::zero(); used];
        for i in (0..used).rev() {
            let mut s = gvec[i];
            for k in (i + 1)..used {
                s -= hmat[i][k] * yv[k];
            }
            yv[i] = s / hmat[i][i];
        }
        for (k, yk) in yv.iter().enumerate() {
            x.iter_mut()
                .zip(&basis[k])
                .for_each(|(xi, bi)| *xi += *yk * bi);
        }
    }
    Err(Error::NumericalFailure(
        "GMRES did not reach the steady-state tolerance".into(),
    ))
}

/// Exact propagation `vec(ρ(t)) = e^{𝓛t} vec(ρ₀)` on a uniform grid, for
/// spaces small enough to hold the dense superoperator.
pub fn propagate_exact<T: Real>(
    l: &Liouvillian<T>,
    state0: &DensityState<T>,
    stride: T,
    steps: usize,
) -> Result<Vec<DensityState<T>>> {
    let d = l.geometry.total_dim();
    if d > DENSE_DIM_LIMIT {
        return Err(Error::InvalidDimension(format!(
            "dense propagator limited to dimension {DENSE_DIM_LIMIT}, got {d}"
        )));
    }
    let prop = crate::operators::expm(&(l.superoperator() * C::new(stride, T::zero())))?;
    let mut v = crate::num::CVector::from_column_slice(state0.matrix().as_slice());
    let mut out = vec![state0.clone()];
    for _ in 0..steps {
        v = &prop * v;
        let m = hermitize(&CMatrix::from_column_slice(d, d, v.as_slice()));
        out.push(DensityState::new_unchecked(QOperator::new(l.geometry, m)?));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::master::{
        build_arenz_reference, build_dent_only, free_resonator_hamiltonian, ArenzParams,
        LindbladTerm, TermInfo,
    };
    use crate::operators::{embed, fock_destroy};

    fn decay(g: HilbertGeometry, rate: f64) -> Liouvillian<f64> {
        let b = embed(
            &fock_destroy::<f64>(g.fock_dims()[0]).unwrap(),
            Site::R1,
            &g,
        )
        .unwrap();
        let mut l = Liouvillian::new(g);
        l.push(LindbladTerm::new(rate, b, TermInfo::plain("b1")).unwrap())
            .unwrap();
        l
    }

    #[test]
    fn empty_generator_keeps_state() {
        let g = HilbertGeometry::two_mode(3, 3).unwrap();
        let l = Liouvillian::<f64>::new(g);
        let rho = DensityState::basis(g, 4).unwrap();
        assert!(max_abs(&rhs(&l, &rho).unwrap()) == 0.0);
        let tr = evolve(&l, &rho, &EvolveOptions::new(2.0, 0.5)).unwrap();
        assert_eq!(tr.records.len(), 5);
        assert!(tr
            .records
            .iter()
            .all(|r| r.n1 == 1.0 && r.n2 == 1.0 && r.en == 0.0));
        assert!(max_abs(&(tr.final_state.matrix() - rho.matrix())) == 0.0);
    }

    #[test]
    fn single_term_matches_dissipator() {
        let g = HilbertGeometry::two_mode(3, 4).unwrap();
        let l = decay(g, 0.4);
        let rho = DensityState::basis(g, 7).unwrap();
        let d = crate::master::dissipator_apply(&l.terms[0], rho.op()).unwrap();
        assert_eq!(rhs(&l, &rho).unwrap(), d);
    }

    #[test]
    fn exponential_decay_of_one_photon() {
        let g = HilbertGeometry::two_mode(4, 3).unwrap();
        let gamma = 0.3;
        let tr = evolve(
            &decay(g, gamma),
            &DensityState::basis(g, 3).unwrap(),
            &EvolveOptions::new(10.0, 0.25),
        )
        .unwrap();
        for r in &tr.records {
            assert!(
                (r.n1 - (-gamma * r.t).exp()).abs() < 1e-7,
                "{} {}",
                r.t,
                r.n1
            );
            assert!(r.trace_err <= 1e-8);
        }
        assert!((tr.records[40].t - 10.0).abs() < 1e-12);
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,EN,n1,n2,na,trace_err,min_eig\n"));
        assert_eq!(text.lines().count(), 42);
    }

    #[test]
    fn steady_states_of_thermal_and_pure_decay() {
        let g = HilbertGeometry::two_mode(5, 3).unwrap();
        let mut l = decay(g, 0.2);
        let b2 = embed(&fock_destroy::<f64>(3).unwrap(), Site::R2, &g).unwrap();
        l.push(LindbladTerm::new(0.1, b2, TermInfo::plain("b2")).unwrap())
            .unwrap();
        assert!((steady_state(&l).unwrap().matrix()[(0, 0)].re - 1.0).abs() < 1e-10);

        let g = HilbertGeometry::two_mode(8, 3).unwrap();
        let (gamma, nbar) = (0.1, 0.3);
        let b1 = embed(&fock_destroy::<f64>(8).unwrap(), Site::R1, &g).unwrap();
        let b2 = embed(&fock_destroy::<f64>(3).unwrap(), Site::R2, &g).unwrap();
        let mut l = Liouvillian::new(g);
        l.push(LindbladTerm::new(gamma * (1.0 + nbar), b1.clone(), TermInfo::plain("b1")).unwrap())
            .unwrap();
        l.push(LindbladTerm::new(gamma * nbar, b1.adjoint(), TermInfo::plain("b1†")).unwrap())
            .unwrap();
        l.push(LindbladTerm::new(gamma, b2, TermInfo::plain("b2")).unwrap())
            .unwrap();
        let ss = steady_state(&l).unwrap();
        // truncated thermal distribution is the exact fixed point of the truncated pair
        let mut vac = CMatrix::zeros(3, 3);
        vac[(0, 0)] = C::new(1.0, 0.0);
        let q: f64 = nbar / (1.0 + nbar);
        let z: f64 = (0..8).map(|k| q.powi(k)).sum();
        let th = CMatrix::from_diagonal(&crate::num::CVector::from_iterator(
            8,
            (0..8).map(|k| C::new(q.powi(k) / z, 0.0)),
        ));
        assert!(max_abs(&(ss.matrix() - th.kronecker(&vac))) < 1e-9);
    }

    #[test]
    fn degenerate_fixed_points_are_reported() {
        let g = HilbertGeometry::two_mode(3, 3).unwrap();
        // only mode 1 decays, mode 2 keeps any state
        assert!(
            matches!(steady_state(&decay(g, 0.2)), Err(Error::NonUniqueSteadyState(k)) if k > 1)
        );
    }

    #[test]
    fn krylov_path_agrees_with_dense_path() {
        let g = HilbertGeometry::two_mode(7, 7).unwrap();
        let arenz = ArenzParams {
            kappa_c: 0.1,
            kappa_d: 0.1,
            beta: C::new(0.3, 0.0),
        };
        let mut l = build_arenz_reference(&arenz, g).unwrap();
        // make the fixed point unique
        let b1 = embed(&fock_destroy::<f64>(7).unwrap(), Site::R1, &g).unwrap();
        l.push(LindbladTerm::new(0.02, b1, TermInfo::plain("b1")).unwrap())
            .unwrap();
        let a = steady_state(&l).unwrap();
        let e = evolve(
            &l,
            &DensityState::basis(g, 0).unwrap(),
            &EvolveOptions::new(6000.0, 6000.0),
        )
        .unwrap();
        let diff = max_abs(&(a.matrix() - e.final_state.matrix()));
        assert!(diff < 1e-6, "{diff}");
    }

    #[test]
    fn integrator_matches_exact_propagator() {
        let g = HilbertGeometry::two_mode(4, 4).unwrap();
        let l = build_dent_only([0.2, 0.2], g, 0.1, 0.0).unwrap();
        let l = l
            .with_hamiltonian(free_resonator_hamiltonian(g, [1.0, 1.0]).unwrap())
            .unwrap();
        let rho = DensityState::basis(g, 0).unwrap();
        let exact = propagate_exact(&l, &rho, 0.5, 8).unwrap();
        let tr = evolve(&l, &rho, &EvolveOptions::new(4.0, 0.5).tolerance(1e-10)).unwrap();
        for (k, s) in exact.iter().enumerate() {
            let n1: f64 = (0..16)
                .map(|i| (i / 4) as f64 * s.matrix()[(i, i)].re)
                .sum();
            assert!((n1 - tr.records[k].n1).abs() < 1e-8);
        }
        assert!(tr.peak_en() > 0.0);
        let dense = evolve(
            &l,
            &rho,
            &EvolveOptions {
                force_dense: true,
                ..EvolveOptions::new(4.0, 0.5)
            },
        )
        .unwrap();
        assert!(!dense.structured && tr.structured);
        let rep = compare_trajectories(&dense, &tr).unwrap();
        assert!(rep.converged && rep.en_deviation < 1e-5);
    }
}
