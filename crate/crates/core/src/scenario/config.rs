//! Scenario configuration files and their resolution into numeric inputs.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::units::{Quantity, UnitScale};
use crate::error::{Error, Result};
use crate::master::{ArenzParams, BathSet, SystemParams};
use crate::num::C;
use crate::operators::{AncillaKind, HilbertGeometry};
use crate::spectral::{BathLabel, BathSpec, Filter, LambShiftMode, NegativeFrequency};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Fig2Comparison,
    Fig3Nondegenerate,
    Fig4Degenerate,
    Fig5Thermal,
    CustomSweep,
    Custom,
}

impl ScenarioKind {
    pub fn default_model(self) -> Model {
        match self {
            Self::Fig2Comparison => Model::Dent,
            Self::Fig4Degenerate => Model::FilteredDegenerate,
            _ => Model::FilteredNondegenerate,
        }
    }

    /// Whether the scenario is expected to build up entanglement.
    pub fn claims_entanglement(self) -> bool {
        !matches!(self, Self::Custom | Self::CustomSweep)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    /// Effective two-resonator jump on the resonators alone.
    Dent,
    /// Two-jump reference generator on the resonators alone.
    Arenz,
    FilteredNondegenerate,
    FilteredDegenerate,
    FullSecular,
}

impl Model {
    pub fn needs_ancilla(self) -> bool {
        !matches!(self, Self::Dent | Self::Arenz)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    #[serde(default = "default_ancilla")]
    pub ancilla: AncillaKind,
    pub omega_a: Quantity,
    pub omega: [Quantity; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<[Quantity; 2]>,
}

fn default_ancilla() -> AncillaKind {
    AncillaKind::Tls
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterConfig {
    /// Filter resonance; the scenario's natural choice when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<Quantity>,
    /// Filter coupling `κ`; the bath coupling when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coupling: Option<Quantity>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BathConfig {
    pub temperature: Quantity,
    pub coupling: Quantity,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filter: Option<FilterConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BathsConfig {
    pub hot: BathConfig,
    pub cold: BathConfig,
    pub local: [BathConfig; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialConfig {
    #[default]
    Ground,
    Thermal {
        nbar: [f64; 2],
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TimeUnit {
    /// `ω_a t`
    #[default]
    OmegaA,
    /// `ω₁ t`
    #[serde(rename = "omega_1")]
    Omega1,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HorizonConfig {
    /// Final time in `time_unit`.
    pub t_final: f64,
    pub stride: f64,
    #[serde(default)]
    pub time_unit: TimeUnit,
    /// Stop early once E_N and populations change by less than 0.1% over
    /// one window of this length.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub settle_window: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DentConfig {
    pub rate: f64,
    #[serde(default)]
    pub n_a: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArenzConfig {
    pub kappa_c: f64,
    pub kappa_d: f64,
    /// Real and imaginary part of the coherent amplitude.
    #[serde(default)]
    pub beta: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveConfig {
    pub label: String,
    /// Dotted-key overrides applied to the base config for this curve.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub set: BTreeMap<String, Value>,
}

/// A first phase evolved before the recorded horizon (e.g. ground-state
/// cooling with the filters on other sidebands). Its final state starts the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrecoolConfig {
    /// In the horizon's time unit.
    pub duration: f64,
    /// Dotted-key overrides for the phase; geometry and α must stay fixed.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub set: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: ScenarioKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<Model>,
    pub system: SystemConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baths: Option<BathsConfig>,
    #[serde(default)]
    pub initial: InitialConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub precool: Option<PrecoolConfig>,
    pub truncation: usize,
    #[serde(default = "default_ancilla_levels")]
    pub ancilla_levels: usize,
    pub horizon: HorizonConfig,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dent: Option<DentConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arenz: Option<ArenzConfig>,
    /// Adds `Σ ωᵢ bᵢ†bᵢ` to the resonator-only generators.
    #[serde(default)]
    pub free_hamiltonian: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lamb_shift_cutoff: Option<Quantity>,
    #[serde(default)]
    pub negative_frequency: NegativeFrequency,
    #[serde(default)]
    pub convergence_check: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub curves: Vec<CurveConfig>,
    /// Run report written next to the outputs; ignored on load.
    #[serde(default, skip_serializing)]
    pub manifest: Option<Value>,
}

fn default_ancilla_levels() -> usize {
    3
}

fn default_tolerance() -> f64 {
    1e-8
}

/// Config text plus where it came from, for error messages.
fn parse_err(path: &Path, e: serde_json::Error, note: &str) -> Error {
    Error::Config {
        path: path.display().to_string(),
        line: e.line(),
        column: e.column(),
        message: format!("{e}{note}"),
    }
}

/// Sets `a.b.c = value` inside a JSON object, creating objects on the way.
/// Numeric path segments index arrays.
pub fn set_dotted(root: &mut Value, key: &str, value: Value) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    let mut cur = root;
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        if let Ok(idx) = part.parse::<usize>() {
            let arr = cur.as_array_mut().ok_or_else(|| {
                Error::InvalidConfiguration(format!("{key}: segment {part} indexes a non-array"))
            })?;
            let slot = arr.get_mut(idx).ok_or_else(|| {
                Error::InvalidConfiguration(format!("{key}: index {idx} out of range"))
            })?;
            if last {
                *slot = value;
                return Ok(());
            }
            cur = slot;
        } else {
            if cur.is_null() {
                *cur = Value::Object(Default::default());
            }
            let obj = cur.as_object_mut().ok_or_else(|| {
                Error::InvalidConfiguration(format!("{key}: segment {part} indexes a non-object"))
            })?;
            if last {
                obj.insert((*part).to_string(), value);
                return Ok(());
            }
            cur = obj.entry((*part).to_string()).or_insert(Value::Null);
        }
    }
    Ok(())
}

/// `key=value` from the command line; the value is JSON when it parses as
/// JSON and a plain string otherwise.
pub fn parse_assignment(s: &str) -> Result<(String, Value)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| Error::InvalidArgument(format!("expected key=value, got {s:?}")))?;
    let value = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()));
    Ok((k.trim().to_string(), value))
}

impl ScenarioConfig {
    pub fn from_str_at(text: &str, path: &Path) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| parse_err(path, e, ""))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_str_at(&text, path)
    }

    /// Loads with dotted-key overrides applied before typing.
    pub fn load_with(path: &Path, overrides: &[(String, Value)]) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        if overrides.is_empty() {
            return Self::from_str_at(&text, path);
        }
        let mut v: Value = serde_json::from_str(&text).map_err(|e| parse_err(path, e, ""))?;
        for (k, val) in overrides {
            set_dotted(&mut v, k, val.clone())?;
        }
        let merged = serde_json::to_string_pretty(&v)?;
        let cfg: Self = serde_json::from_str(&merged)
            .map_err(|e| parse_err(path, e, " (position in the config after overrides)"))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_value(&self) -> Result<Value> {
        Ok(serde_json::to_value(self)?)
    }

    pub fn with_overrides(&self, overrides: &[(String, Value)]) -> Result<Self> {
        let mut v = self.to_value()?;
        for (k, val) in overrides {
            set_dotted(&mut v, k, val.clone())?;
        }
        let cfg: Self = serde_json::from_value(v)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Config of one curve: the base with the curve's overrides and no curve list.
    pub fn curve_config(&self, curve: &CurveConfig) -> Result<Self> {
        let overrides: Vec<(String, Value)> = curve
            .set
            .iter()
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        let mut c = self.with_overrides(&overrides)?;
        c.curves.clear();
        Ok(c)
    }

    /// Curves to run, with labels. A config without curves runs itself once.
    pub fn expand_curves(&self) -> Result<Vec<(String, ScenarioConfig)>> {
        if self.curves.is_empty() {
            let mut c = self.clone();
            c.manifest = None;
            return Ok(vec![("main".into(), c)]);
        }
        let mut seen = std::collections::BTreeSet::new();
        let mut out = Vec::new();
        for curve in &self.curves {
            if !seen.insert(curve.label.clone()) {
                return Err(Error::InvalidConfiguration(format!(
                    "duplicate curve label {:?}",
                    curve.label
                )));
            }
            if curve.label.is_empty() || curve.label.contains(['/', '\\']) {
                return Err(Error::InvalidConfiguration(format!(
                    "curve label {:?} is not a file name",
                    curve.label
                )));
            }
            out.push((curve.label.clone(), self.curve_config(curve)?));
        }
        Ok(out)
    }

    pub fn model(&self) -> Model {
        self.model.unwrap_or_else(|| self.scenario.default_model())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfiguration(m));
        if self.truncation < 3 {
            return bad(format!("truncation {} is below 3", self.truncation));
        }
        if self.system.alpha.is_some() == self.system.g.is_some() {
            return bad("give exactly one of system.alpha and system.g".into());
        }
        let h = &self.horizon;
        if !(h.t_final >= 0.0) || !(h.stride > 0.0) {
            return bad("horizon needs t_final >= 0 and stride > 0".into());
        }
        if let Some(w) = h.settle_window {
            if !(w >= h.stride) {
                return bad("settle_window must be at least one stride".into());
            }
        }
        if !(self.tolerance > 0.0 && self.tolerance < 1e-2) {
            return bad(format!("tolerance {} outside (0, 1e-2)", self.tolerance));
        }
        let model = self.model();
        match model {
            Model::Dent if self.dent.is_none() => {
                return bad("model dent needs a dent block".into())
            }
            Model::Arenz if self.arenz.is_none() => {
                return bad("model arenz needs an arenz block".into())
            }
            m if m.needs_ancilla() && self.baths.is_none() => {
                return bad(format!("model {m:?} needs baths"))
            }
            m if m.needs_ancilla() && self.system.ancilla == AncillaKind::None => {
                return bad(format!("model {m:?} needs an ancilla"))
            }
            _ => {}
        }
        if let InitialConfig::Thermal { nbar } = &self.initial {
            if nbar.iter().any(|n| !(*n >= 0.0)) {
                return bad("thermal nbar must be nonnegative".into());
            }
        }
        for c in &self.curves {
            if c.set
                .keys()
                .any(|k| k == "curves" || k.starts_with("curves."))
            {
                return bad("a curve may not override the curve list".into());
            }
        }
        Ok(())
    }

    /// Parameters in `ω_a = 1` units.
    pub fn resolve(&self) -> Result<Resolved> {
        self.validate()?;
        let scale = UnitScale::new(&self.system.omega_a)?;
        let model = self.model();
        let omega = [
            scale.frequency(&self.system.omega[0])?,
            scale.frequency(&self.system.omega[1])?,
        ];
        let ancilla = if model.needs_ancilla() {
            self.system.ancilla
        } else {
            AncillaKind::None
        };
        let params = match (&self.system.alpha, &self.system.g) {
            (Some(a), _) => SystemParams::from_alpha(1.0, omega, *a, ancilla)?,
            (None, Some(g)) => SystemParams::from_couplings(
                1.0,
                omega,
                [scale.frequency(&g[0])?, scale.frequency(&g[1])?],
                ancilla,
            )?,
            _ => unreachable!("validated"),
        };
        let n = self.truncation;
        let geometry = match ancilla {
            AncillaKind::None => HilbertGeometry::two_mode(n, n)?,
            AncillaKind::Tls => HilbertGeometry::tls(n, n)?,
            AncillaKind::Oscillator => HilbertGeometry::oscillator(self.ancilla_levels, n, n)?,
        };
        let lamb = match &self.lamb_shift_cutoff {
            Some(q) => LambShiftMode::Cutoff(scale.frequency(q)?),
            None => LambShiftMode::Off,
        };
        let mut warnings = Vec::new();
        let baths = match &self.baths {
            None => None,
            Some(b) => {
                let hot_center = match model {
                    Model::FilteredDegenerate => 1.0 - 2.0 * omega[0],
                    _ => params.omega_minus(),
                };
                let mk = |c: &BathConfig,
                          label: BathLabel,
                          center: Option<f64>|
                 -> Result<BathSpec<f64>> {
                    let t = scale.temperature(&c.temperature)?;
                    let g = scale.frequency(&c.coupling)?;
                    match (&c.filter, center) {
                        (Some(f), Some(auto)) => {
                            let mut filt = Filter::new(
                                match &f.center {
                                    Some(q) => scale.frequency(q)?,
                                    None => auto,
                                },
                                match &f.coupling {
                                    Some(q) => scale.frequency(q)?,
                                    None => g,
                                },
                            );
                            filt.lamb_shift = lamb;
                            filt.negative_frequency = self.negative_frequency;
                            BathSpec::filtered(label, t, g, filt)
                        }
                        _ => BathSpec::ohmic(label, t, g),
                    }
                };
                let set = BathSet {
                    hot: mk(&b.hot, BathLabel::Hot, Some(hot_center))?,
                    cold: mk(&b.cold, BathLabel::Cold, Some(1.0))?,
                    local: [
                        mk(&b.local[0], BathLabel::Local1, None)?,
                        mk(&b.local[1], BathLabel::Local2, None)?,
                    ],
                };
                let (th, tc) = (set.hot.temperature, set.cold.temperature);
                let ti = set.local[0].temperature.max(set.local[1].temperature);
                if self.scenario.claims_entanglement() && !(th > ti && ti > tc) {
                    warnings.push(format!("temperatures do not satisfy T_h > T_i > T_c (T_h={th:.4}, T_i={ti:.4}, T_c={tc:.4})"));
                }
                Some(set)
            }
        };
        let time_scale = match self.horizon.time_unit {
            TimeUnit::OmegaA => 1.0,
            TimeUnit::Omega1 => omega[0],
        };
        let arenz = self.arenz.as_ref().map(|a| ArenzParams {
            kappa_c: a.kappa_c,
            kappa_d: a.kappa_d,
            beta: C::new(a.beta[0], a.beta[1]),
        });
        Ok(Resolved {
            model,
            geometry,
            params,
            baths,
            initial: self.initial.clone(),
            t_final: self.horizon.t_final / time_scale,
            stride: self.horizon.stride / time_scale,
            settle_window: self.horizon.settle_window.map(|w| w / time_scale),
            time_scale,
            tolerance: self.tolerance,
            dent: self.dent.clone(),
            arenz,
            free_hamiltonian: self.free_hamiltonian,
            kelvin_per_unit: scale.kelvin_per_unit(),
            warnings,
        })
    }
}

/// Numeric inputs of one run, in `ω_a = 1` units.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub model: Model,
    pub geometry: HilbertGeometry,
    pub params: SystemParams<f64>,
    pub baths: Option<BathSet<f64>>,
    pub initial: InitialConfig,
    pub t_final: f64,
    pub stride: f64,
    pub settle_window: Option<f64>,
    pub time_scale: f64,
    pub tolerance: f64,
    pub dent: Option<DentConfig>,
    pub arenz: Option<ArenzParams<f64>>,
    pub free_hamiltonian: bool,
    pub kelvin_per_unit: Option<f64>,
    pub warnings: Vec<String>,
}
