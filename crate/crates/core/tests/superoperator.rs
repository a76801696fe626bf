//! Generator application against an independently assembled vectorized
//! generator, plus structural properties of every builder.

mod common;

use common::{all_small_generators, max_abs, row_stacked_generator, unvec_rows, vec_rows, Lcg};
use entangler::dynamics::rhs;
use entangler::generator::{Generator, Workspace};
use entangler::num::{CMatrix, CVector, C};
use entangler::operators::DensityState;
use proptest::prelude::*;

#[test]
fn rhs_matches_vectorized_generator_for_every_builder() {
    let mut rng = Lcg(11);
    for (name, l) in all_small_generators() {
        let d = l.geometry.total_dim();
        assert!(d <= 27);
        let s = row_stacked_generator(&l);
        let rho = rng.density(d);
        let state = DensityState::from_matrix(l.geometry, rho.clone()).unwrap();
        let expect = unvec_rows(&(&s * vec_rows(&rho)), d);
        let got = rhs(&l, &state).unwrap();
        let scale = max_abs(&expect).max(1e-300);
        assert!(
            max_abs(&(&got - &expect)) <= 1e-12 * scale.max(1.0),
            "{name}: {}",
            max_abs(&(&got - &expect))
        );

        // column-stacked superoperator of the library agrees with the oracle
        let col = l.superoperator() * CVector::from_column_slice(rho.as_slice());
        let col = CMatrix::from_column_slice(d, d, col.as_slice());
        assert!(max_abs(&(col - &expect)) <= 1e-12, "{name}");

        // the integrator's right-hand side, on both paths
        for gen in [Generator::for_state(&l, &rho), Generator::dense(&l)] {
            let v = gen.pack(&rho).unwrap();
            let mut out = vec![C::new(0.0, 0.0); v.len()];
            gen.apply(&v, &mut out, &mut Workspace::default());
            assert!(max_abs(&(gen.unpack(&out) - &expect)) <= 1e-12, "{name}");
        }
    }
}

#[test]
fn block_states_use_the_structured_path() {
    let mut rng = Lcg(5);
    for (name, l) in all_small_generators() {
        let g = l.geometry;
        let r = g.resonator_dim();
        let mut rho = CMatrix::zeros(g.total_dim(), g.total_dim());
        for n in 0..g.ancilla_dim() {
            rho.view_mut((n * r, n * r), (r, r))
                .copy_from(&(rng.density(r) / C::new(g.ancilla_dim() as f64, 0.0)));
        }
        assert!(Generator::for_state(&l, &rho).is_structured(), "{name}");
    }
}

#[test]
fn emitted_rates_are_nonnegative() {
    for (name, l) in all_small_generators() {
        for t in &l.terms {
            assert!(
                t.rate >= 0.0 && t.rate.is_finite(),
                "{name}: {} has rate {}",
                t.info.label,
                t.rate
            );
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn generators_annihilate_trace_and_keep_hermiticity(seed in any::<u64>()) {
        let mut rng = Lcg(seed);
        for (name, l) in all_small_generators() {
            let h = rng.hermitian(l.geometry.total_dim());
            let out = l.apply(&h).unwrap();
            prop_assert!(out.trace().norm() < 1e-10, "{}", name);
            prop_assert!(max_abs(&(&out - out.adjoint())) < 1e-10, "{}", name);
        }
    }
}
