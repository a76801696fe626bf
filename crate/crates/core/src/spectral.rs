//! Bath response functions: Ohmic rates with Bose occupations, the
//! Lorentzian-filtered spectrum, and an optional cutoff-regularized Lamb shift.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::{lit, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BathLabel {
    Hot,
    Cold,
    Local1,
    Local2,
}

impl BathLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            BathLabel::Hot => "hot",
            BathLabel::Cold => "cold",
            BathLabel::Local1 => "local1",
            BathLabel::Local2 => "local2",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambShiftMode<T> {
    Off,
    /// Hard upper integration limit Λ.
    Cutoff(T),
}

/// How the filtered spectrum is continued to negative frequencies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NegativeFrequency {
    /// `f̃(-ω) = f̃(ω)·e^{-ω/T}`: the Lorentzian is evaluated at `|ω|`.
    #[default]
    DetailedBalance,
    /// Signed argument inserted directly into the Lorentzian.
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Filter<T> {
    pub center: T,
    pub coupling: T,
    pub lamb_shift: LambShiftMode<T>,
    pub negative_frequency: NegativeFrequency,
}

impl<T: Real> Filter<T> {
    pub fn new(center: T, coupling: T) -> Self {
        Self {
            center,
            coupling,
            lamb_shift: LambShiftMode::Off,
            negative_frequency: NegativeFrequency::DetailedBalance,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BathSpec<T> {
    pub label: BathLabel,
    pub temperature: T,
    pub coupling: T,
    pub filter: Option<Filter<T>>,
}

impl<T: Real> BathSpec<T> {
    pub fn ohmic(label: BathLabel, temperature: T, coupling: T) -> Result<Self> {
        let b = Self {
            label,
            temperature,
            coupling,
            filter: None,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn filtered(
        label: BathLabel,
        temperature: T,
        coupling: T,
        filter: Filter<T>,
    ) -> Result<Self> {
        let b = Self {
            label,
            temperature,
            coupling,
            filter: Some(filter),
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let name = self.label.as_str();
        if !(self.temperature >= T::zero()) {
            return Err(Error::InvalidConfiguration(format!(
                "{name} bath: negative temperature"
            )));
        }
        if !(self.coupling > T::zero()) {
            return Err(Error::InvalidConfiguration(format!(
                "{name} bath: coupling must be positive"
            )));
        }
        if let Some(f) = &self.filter {
            if !(f.coupling > T::zero()) {
                return Err(Error::InvalidConfiguration(format!(
                    "{name} bath: filter coupling must be positive"
                )));
            }
            if let LambShiftMode::Cutoff(c) = f.lamb_shift {
                if !(c > T::zero()) || !c.is_finite() {
                    return Err(Error::InvalidConfiguration(format!(
                        "{name} bath: Lamb-shift cutoff must be finite and positive"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// `n̄ = 1/(e^{ω/T} - 1)`, zero at `T = 0`.
pub fn bose_occupation<T: Real>(omega: T, temperature: T) -> Result<T> {
    if !(omega > T::zero()) {
        return Err(Error::InvalidArgument(format!(
            "Bose occupation needs a positive frequency, got {}",
            crate::num::to_f64(omega)
        )));
    }
    if temperature <= T::zero() {
        return Ok(T::zero());
    }
    Ok(T::one() / (omega / temperature).exp_m1())
}

/// Ohmic emission/absorption rate at a signed frequency.
pub fn ohmic_response<T: Real>(omega: T, bath: &BathSpec<T>) -> T {
    ohmic(omega, bath.temperature, bath.coupling)
}

fn ohmic<T: Real>(omega: T, temperature: T, coupling: T) -> T {
    if omega == T::zero() {
        return T::zero();
    }
    let w = omega.abs();
    let n = bose_occupation(w, temperature).unwrap_or_else(|_| T::zero());
    if omega > T::zero() {
        w * coupling * (T::one() + n)
    } else {
        w * coupling * n
    }
}

/// Principal value `P∫₀^Λ f_bath(ω')/(ω - ω') dω'` for the bath's Ohmic
/// response. Returns zero when the shift is switched off.
pub fn lamb_shift<T: Real>(omega: T, bath: &BathSpec<T>) -> Result<T> {
    let cutoff = match bath.filter.map(|f| f.lamb_shift) {
        None | Some(LambShiftMode::Off) => return Ok(T::zero()),
        Some(LambShiftMode::Cutoff(c)) => c,
    };
    principal_value(|w| ohmic_response(w, bath), omega, cutoff)
}

/// `P∫₀^Λ f(ω')/(ω - ω') dω'`. The singular window `[ω-δ, ω+δ]` is folded
/// onto `∫₀^δ (f(ω-s) - f(ω+s))/s ds`, the remainder is integrated directly.
pub fn principal_value<T: Real, F: Fn(T) -> T>(f: F, omega: T, cutoff: T) -> Result<T> {
    let zero = T::zero();
    if !(cutoff > zero) {
        return Err(Error::InvalidArgument(
            "principal value needs a positive cutoff".into(),
        ));
    }
    let tol: T = lit(1e-12);
    let direct = |a: T, b: T| integrate(&|w: T| f(w) / (omega - w), a, b, tol);
    if omega <= zero || omega >= cutoff {
        if omega == zero || omega == cutoff {
            return Err(Error::InvalidArgument(
                "pole on an integration endpoint".into(),
            ));
        }
        return direct(zero, cutoff);
    }
    let delta = omega.min(cutoff - omega) * lit(0.5);
    let folded = integrate(&|s: T| (f(omega - s) - f(omega + s)) / s, zero, delta, tol)?;
    let left = direct(zero, omega - delta)?;
    let right = direct(omega + delta, cutoff)?;
    Ok(left + folded + right)
}

const GK_NODES: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const GK_WEIGHTS_K: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const GK_WEIGHTS_G: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gauss_kronrod<T: Real, F: Fn(T) -> T>(f: &F, a: T, b: T) -> (T, T) {
    let half: T = (b - a) * lit(0.5);
    let mid: T = (a + b) * lit(0.5);
    let fc = f(mid);
    let mut k = fc * lit(GK_WEIGHTS_K[7]);
    let mut g = fc * lit(GK_WEIGHTS_G[3]);
    for i in 0..7 {
        let x: T = half * lit(GK_NODES[i]);
        let s = f(mid - x) + f(mid + x);
        k += s * lit(GK_WEIGHTS_K[i]);
        if i % 2 == 1 {
            g += s * lit(GK_WEIGHTS_G[i / 2]);
        }
    }
    (k * half, ((k - g) * half).abs())
}

/// Adaptive Gauss–Kronrod (7/15) quadrature.
pub fn integrate<T: Real, F: Fn(T) -> T>(f: &F, a: T, b: T, rel_tol: T) -> Result<T> {
    let mut stack = vec![(a, b, 0u32)];
    let mut total = T::zero();
    let (whole, _) = gauss_kronrod(f, a, b);
    let scale = whole.abs().max(lit(1e-300));
    while let Some((lo, hi, depth)) = stack.pop() {
        let (val, err) = gauss_kronrod(f, lo, hi);
        if !val.is_finite() {
            return Err(Error::NumericalFailure(
                "non-finite quadrature value".into(),
            ));
        }
        let width_frac = (hi - lo) / (b - a);
        if err <= rel_tol * scale * width_frac.max(lit(1e-3)) || err <= lit(1e-300) {
            total += val;
        } else if depth >= 60 {
            return Err(Error::NumericalFailure(format!(
                "quadrature did not converge on [{}, {}]",
                crate::num::to_f64(lo),
                crate::num::to_f64(hi)
            )));
        } else {
            let m = (lo + hi) * lit(0.5);
            stack.push((lo, m, depth + 1));
            stack.push((m, hi, depth + 1));
        }
    }
    Ok(total)
}

fn lorentzian<T: Real>(omega: T, width_rate: T, center: T, kappa: T) -> T {
    let pi = T::PI();
    let w = pi * width_rate;
    let num = w * w;
    let det = omega - center;
    let den = det * det + num;
    if den == T::zero() {
        return T::zero();
    }
    kappa / pi * num / den
}

/// Filtered spectrum `f̃(ω)` at a signed frequency.
pub fn filtered_response<T: Real>(omega: T, bath: &BathSpec<T>) -> Result<T> {
    let filter = bath.filter.ok_or_else(|| {
        Error::InvalidConfiguration(format!("{} bath has no filter", bath.label.as_str()))
    })?;
    let shifted = |w: T| -> Result<T> { Ok(filter.center + lamb_shift(w, bath)?) };
    match filter.negative_frequency {
        NegativeFrequency::Literal => {
            let f = ohmic_response(omega, bath);
            Ok(lorentzian(omega, f, shifted(omega.abs())?, filter.coupling))
        }
        NegativeFrequency::DetailedBalance => {
            let w = omega.abs();
            if w == T::zero() {
                return Ok(T::zero());
            }
            let f = ohmic_response(w, bath);
            let positive = lorentzian(w, f, shifted(w)?, filter.coupling);
            if omega > T::zero() {
                Ok(positive)
            } else if bath.temperature <= T::zero() {
                Ok(T::zero())
            } else {
                Ok(positive * (-w / bath.temperature).exp())
            }
        }
    }
}

/// Filtered spectrum if the bath carries a filter, Ohmic otherwise.
pub fn response<T: Real>(omega: T, bath: &BathSpec<T>) -> Result<T> {
    if bath.filter.is_some() {
        filtered_response(omega, bath)
    } else {
        Ok(ohmic_response(omega, bath))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn bath(t: f64, g: f64) -> BathSpec<f64> {
        BathSpec::ohmic(BathLabel::Hot, t, g).unwrap()
    }

    #[test]
    fn bose_occupation_cases() {
        let t = 0.37;
        assert_relative_eq!(
            bose_occupation(t * 2f64.ln(), t).unwrap(),
            1.0,
            max_relative = 1e-14
        );
        assert_eq!(bose_occupation(1.0, 0.0).unwrap(), 0.0);
        let n = bose_occupation(30.0, 1.0).unwrap();
        assert_relative_eq!(n, 1.0 / (30f64.exp() - 1.0), max_relative = 1e-14);
        assert_relative_eq!(n, (-30f64).exp(), max_relative = 1e-12);
        assert!(bose_occupation(0.0, 1.0).is_err());
        assert!(bose_occupation(-1.0, 1.0).is_err());
    }

    #[test]
    fn ohmic_edge_cases() {
        let b = bath(0.5, 0.2);
        assert_eq!(ohmic_response(0.0, &b), 0.0);
        assert_eq!(ohmic_response(-0.3, &bath(0.0, 0.2)), 0.0);
        // both one-sided limits tend to γT
        for eps in [1e-6, -1e-6] {
            assert_relative_eq!(ohmic_response(eps, &b), 0.5 * 0.2, max_relative = 1e-5);
        }
    }

    #[test]
    fn errors_on_invalid_baths() {
        assert!(BathSpec::ohmic(BathLabel::Cold, -1.0, 1.0).is_err());
        assert!(BathSpec::ohmic(BathLabel::Cold, 1.0, 0.0).is_err());
        let f = Filter {
            coupling: 0.0,
            ..Filter::new(1.0, 1.0)
        };
        assert!(BathSpec::filtered(BathLabel::Cold, 1.0, 1.0, f).is_err());
        assert!(filtered_response(1.0, &bath(1.0, 1.0)).is_err());
    }

    #[test]
    fn lamb_shift_off_is_zero() {
        let b = BathSpec::filtered(BathLabel::Hot, 1.0, 0.1, Filter::new(1.0, 0.1)).unwrap();
        for w in [0.1, 1.0, 7.0] {
            assert_eq!(lamb_shift(w, &b).unwrap(), 0.0);
        }
    }

    #[test]
    fn symmetric_principal_value_of_constant_vanishes() {
        for w in [0.3, 1.0, 2.5] {
            let v: f64 = principal_value(|_| 1.0, w, 2.0 * w).unwrap();
            assert!(v.abs() < 1e-12, "{v}");
        }
    }

    /// Independent route: subtract f(ω) over the whole range and add the
    /// analytic log term, integrating with composite Simpson on a fine grid.
    fn simpson_subtracted(f: impl Fn(f64) -> f64, w: f64, cutoff: f64) -> f64 {
        let g = |x: f64| {
            if (x - w).abs() < 1e-9 {
                let h = 1e-5;
                -(f(w + h) - f(w - h)) / (2.0 * h)
            } else {
                (f(x) - f(w)) / (w - x)
            }
        };
        let simpson = |a: f64, b: f64, n: usize| {
            let h = (b - a) / n as f64;
            let mut s = g(a) + g(b);
            for i in 1..n {
                let x = a + i as f64 * h;
                s += if i % 2 == 1 { 4.0 } else { 2.0 } * g(x);
            }
            s * h / 3.0
        };
        simpson(0.0, w, 200_000) + simpson(w, cutoff, 200_000) + f(w) * (w / (cutoff - w)).ln()
    }

    #[test]
    fn ohmic_lamb_shift_matches_quadrature_oracle() {
        let filter = Filter {
            lamb_shift: LambShiftMode::Cutoff(10.0),
            ..Filter::new(1.0, 0.1)
        };
        let b = BathSpec::filtered(BathLabel::Hot, 0.0, 1.0, filter).unwrap();
        let got = lamb_shift(1.0, &b).unwrap();
        let oracle = simpson_subtracted(|x| x, 1.0, 10.0);
        assert_relative_eq!(got, oracle, max_relative = 1e-6);
        // closed form for the zero-temperature Ohmic integrand
        assert_relative_eq!(got, -10.0 + 1.0 * (1.0f64 / 9.0).ln(), max_relative = 1e-10);

        // finite temperature against the same independent route
        let hot = BathSpec {
            temperature: 0.7,
            ..b
        };
        let oracle = simpson_subtracted(|x| ohmic_response(x, &hot), 1.0, 10.0);
        assert_relative_eq!(lamb_shift(1.0, &hot).unwrap(), oracle, max_relative = 1e-6);
    }

    fn filtered_bath(t: f64, gamma: f64, center: f64, kappa: f64) -> BathSpec<f64> {
        BathSpec::filtered(BathLabel::Hot, t, gamma, Filter::new(center, kappa)).unwrap()
    }

    #[test]
    fn filtered_peak_and_tail() {
        let b = filtered_bath(2.0, 0.01, 1.0, 0.3);
        assert_relative_eq!(
            filtered_response(1.0, &b).unwrap(),
            0.3 / std::f64::consts::PI,
            max_relative = 1e-14
        );
        let width = std::f64::consts::PI * ohmic_response(1.0, &b);
        let w = 1.0 + 100.0 * width;
        let f = ohmic_response(w, &b);
        let asym =
            0.3 / std::f64::consts::PI * (std::f64::consts::PI * f).powi(2) / (w - 1.0).powi(2);
        assert_relative_eq!(filtered_response(w, &b).unwrap(), asym, max_relative = 0.02);
    }

    #[test]
    fn filtered_detailed_balance_at_resonance() {
        let (w, t) = (1.0, 0.8);
        let b = filtered_bath(t, 0.05, w, 0.2);
        let pos = filtered_response(w, &b).unwrap();
        let neg = filtered_response(-w, &b).unwrap();
        assert_relative_eq!(neg / pos, (-w / t).exp(), max_relative = 1e-10);
        let ohm = ohmic_response(-w, &b) / ohmic_response(w, &b);
        assert_relative_eq!(neg / pos, ohm, max_relative = 1e-10);
    }

    #[test]
    fn literal_negative_frequency_is_far_off_resonance() {
        let mut b = filtered_bath(0.8, 0.05, 1.0, 0.2);
        b.filter.as_mut().unwrap().negative_frequency = NegativeFrequency::Literal;
        let neg = filtered_response(-1.0, &b).unwrap();
        let pos = filtered_response(1.0, &b).unwrap();
        assert!(neg < 1e-2 * pos);
    }

    #[test]
    fn filtered_maximum_on_scan_is_at_center() {
        let b = filtered_bath(1.5, 0.002, 0.9, 0.1);
        let grid: Vec<f64> = (0..2001).map(|i| 0.85 + 1e-4 * i as f64 * 0.5).collect();
        let best = grid
            .iter()
            .copied()
            .max_by(|a, c| {
                filtered_response(*a, &b)
                    .unwrap()
                    .total_cmp(&filtered_response(*c, &b).unwrap())
            })
            .unwrap();
        assert!((best - 0.9).abs() <= 0.5e-4, "{best}");
    }

    proptest! {
        #[test]
        fn ohmic_kms_ratio(w in 1e-3f64..20.0, t in 1e-2f64..50.0, g in 1e-6f64..1.0) {
            let b = bath(t, g);
            let r = ohmic_response(-w, &b) / ohmic_response(w, &b);
            prop_assert!((r / (-w / t).exp() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn responses_nonnegative(w in -5.0f64..5.0, t in 0.0f64..10.0, c in 0.1f64..3.0) {
            let b = filtered_bath(t, 0.1, c, 0.5);
            prop_assert!(ohmic_response(w, &b) >= 0.0);
            prop_assert!(filtered_response(w, &b).unwrap() >= 0.0);
        }
    }
}
