//! Reduced rate picture of the filtered machine: individual resonator rates,
//! joint pair cooling and heating, and the cooling-dominance test.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::master::{BathSet, SystemParams};
use crate::num::{to_f64, Real};
use crate::spectral::{bose_occupation, filtered_response, ohmic_response};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateSet<T> {
    pub gamma_down: [T; 2],
    pub gamma_up: [T; 2],
    /// Joint pair cooling `Γ↓`.
    pub big_gamma_down: T,
    /// Joint pair heating `Γ↑`.
    pub big_gamma_up: T,
    pub gamma_d: T,
    pub n_a: T,
}

/// Cold-filter thermal occupation of the ancilla transition.
pub fn default_ancilla_occupation<T: Real>(
    params: &SystemParams<T>,
    baths: &BathSet<T>,
) -> Result<T> {
    bose_occupation(params.omega_a, baths.cold.temperature)
}

pub fn effective_rates<T: Real>(
    params: &SystemParams<T>,
    baths: &BathSet<T>,
    n_a_expect: T,
) -> Result<RateSet<T>> {
    if !(n_a_expect >= T::zero()) {
        return Err(Error::InvalidArgument(
            "ancilla occupation must be nonnegative".into(),
        ));
    }
    let wm = params.omega_minus();
    if !(wm > T::zero()) {
        return Err(Error::InvalidConfiguration(format!(
            "joint sideband frequency {} must be positive",
            to_f64(wm)
        )));
    }
    let a3 = (params.alpha[0] * params.alpha[1]).abs().sqrt().powi(3);
    let one_plus = n_a_expect + T::one();
    let hot = &baths.hot;
    let cold = &baths.cold;
    Ok(RateSet {
        gamma_down: [0, 1].map(|i| ohmic_response(params.omega[i], &baths.local[i])),
        gamma_up: [0, 1].map(|i| ohmic_response(-params.omega[i], &baths.local[i])),
        big_gamma_down: a3 * filtered_response(-wm, hot)? * one_plus,
        big_gamma_up: a3 * filtered_response(wm, hot)? * n_a_expect,
        gamma_d: a3
            * (filtered_response(params.omega_a, cold)? * n_a_expect
                + filtered_response(-params.omega_a, cold)? * one_plus),
        n_a: n_a_expect,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoolingReport {
    pub dominant: bool,
    /// `min(Γ↓/Γ↑, Γ↓/max γ↑)`.
    pub margin: f64,
}

pub fn cooling_dominance<T: Real>(rates: &RateSet<T>) -> CoolingReport {
    let down = to_f64(rates.big_gamma_down);
    let up = to_f64(rates.big_gamma_up);
    let local = to_f64(rates.gamma_up[0].max(rates.gamma_up[1]));
    let ratio = |a: f64, b: f64| {
        if b == 0.0 {
            if a > 0.0 {
                f64::INFINITY
            } else {
                0.0
            }
        } else {
            a / b
        }
    };
    CoolingReport {
        dominant: down > up && down > local,
        margin: ratio(down, up).min(ratio(down, local)),
    }
}

/// How far the pair channel dominates local heating: `max γᵢn̄ᵢ / (α³ f̃_h(ω₋))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeReport {
    pub ratio: f64,
    /// `ratio` below [`REGIME_FACTOR`].
    pub satisfied: bool,
}

/// Reading of "much smaller than" used by [`regime_condition`].
pub const REGIME_FACTOR: f64 = 0.1;

pub fn regime_condition<T: Real>(
    params: &SystemParams<T>,
    baths: &BathSet<T>,
) -> Result<RegimeReport> {
    let a3 = (params.alpha[0] * params.alpha[1]).abs().sqrt().powi(3);
    let pair = a3 * filtered_response(params.omega_minus(), &baths.hot)?;
    let mut local = T::zero();
    for i in 0..2 {
        let b = &baths.local[i];
        local = local.max(b.coupling * bose_occupation(params.omega[i], b.temperature)?);
    }
    let ratio = to_f64(local) / to_f64(pair);
    Ok(RegimeReport {
        ratio,
        satisfied: ratio < REGIME_FACTOR && ratio.is_finite(),
    })
}

/// `Γ↓ - Γ↑` as a function of the hot temperature, on the given grid.
pub fn pair_cooling_margin<T: Real>(
    params: &SystemParams<T>,
    baths: &BathSet<T>,
    n_a: T,
    hot_temperatures: &[T],
) -> Result<Vec<T>> {
    hot_temperatures
        .iter()
        .map(|&th| {
            let mut b = *baths;
            b.hot.temperature = th;
            let r = effective_rates(params, &b, n_a)?;
            Ok(r.big_gamma_down - r.big_gamma_up)
        })
        .collect()
}

impl<T: Real> RateSet<T> {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.gamma_down[0],
            self.gamma_down[1],
            self.gamma_up[0],
            self.gamma_up[1],
            self.big_gamma_down,
            self.big_gamma_up,
            self.gamma_d,
        ];
        if all.iter().any(|x| !(*x >= T::zero())) {
            return Err(Error::NumericalFailure(
                "negative or non-finite rate".into(),
            ));
        }
        Ok(())
    }
}
