//! Runs resolved scenarios: builds the generator and initial state, evolves
//! every curve, and writes CSVs and a manifest.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use super::config::{InitialConfig, Model, Resolved, ScenarioConfig};
use crate::dynamics::{compare_trajectories, evolve, ConvergenceReport, EvolveOptions, Trajectory};
use crate::entanglement::PolaronMap;
use crate::error::{Error, Result};
use crate::master::{
    build_arenz_reference, build_dent_only, build_filtered_degenerate,
    build_filtered_nondegenerate, build_full_secular, free_resonator_hamiltonian, Liouvillian,
    TermRecord,
};
use crate::num::CMatrix;
use crate::operators::{ground_projector, thermal_state, AncillaKind, DensityState};
use crate::rates::{
    cooling_dominance, default_ancilla_occupation, effective_rates, regime_condition,
    CoolingReport, RateSet, RegimeReport,
};

/// Relative change per settle window below which a run counts as stationary.
pub const SETTLE_THRESHOLD: f64 = 1e-3;

pub fn build_generator(r: &Resolved) -> Result<Liouvillian<f64>> {
    let g = r.geometry;
    let mut l = match r.model {
        Model::Dent => {
            let d = r
                .dent
                .as_ref()
                .ok_or_else(|| Error::InvalidConfiguration("missing dent block".into()))?;
            build_dent_only(r.params.alpha, g, d.rate, d.n_a)?
        }
        Model::Arenz => {
            let a = r
                .arenz
                .as_ref()
                .ok_or_else(|| Error::InvalidConfiguration("missing arenz block".into()))?;
            build_arenz_reference(a, g)?
        }
        m => {
            let b = r
                .baths
                .as_ref()
                .ok_or_else(|| Error::InvalidConfiguration("missing baths".into()))?;
            match m {
                Model::FilteredNondegenerate => build_filtered_nondegenerate(&r.params, b, g)?,
                Model::FilteredDegenerate => build_filtered_degenerate(&r.params, b, g)?,
                _ => build_full_secular(&r.params, b, g)?,
            }
        }
    };
    if r.free_hamiltonian {
        l = l.with_hamiltonian(free_resonator_hamiltonian(g, r.params.omega)?)?;
    }
    Ok(l)
}

/// Polaron map for models that act on the dressed frame.
pub fn polaron_map(r: &Resolved) -> Result<Option<PolaronMap<f64>>> {
    if r.model.needs_ancilla() {
        Ok(Some(PolaronMap::new(r.geometry, r.params.alpha)?))
    } else {
        Ok(None)
    }
}

/// Initial state in the frame the generator acts on.
pub fn initial_state(r: &Resolved, map: Option<&PolaronMap<f64>>) -> Result<DensityState<f64>> {
    let g = r.geometry;
    let [n1, n2] = g.fock_dims();
    let ancilla: CMatrix<f64> = match g.ancilla_kind() {
        AncillaKind::None => ground_projector(1, 0),
        // ground is the second level of the two-level ancilla
        AncillaKind::Tls => ground_projector(2, 1),
        AncillaKind::Oscillator => ground_projector(g.ancilla_dim(), 0),
    };
    let (r1, r2) = match &r.initial {
        InitialConfig::Ground => (ground_projector(n1, 0), ground_projector(n2, 0)),
        InitialConfig::Thermal { nbar } => {
            (thermal_state(n1, nbar[0])?, thermal_state(n2, nbar[1])?)
        }
    };
    let local = DensityState::product(g, &ancilla, &r1, &r2)?;
    match map {
        Some(m) => m.from_local_basis(&local),
        None => Ok(local),
    }
}

fn settled(a: &crate::dynamics::Record, b: &crate::dynamics::Record) -> bool {
    let close =
        |x: f64, y: f64| (x - y).abs() <= SETTLE_THRESHOLD * x.abs().max(y.abs()).max(1e-12);
    close(a.en, b.en) && close(a.n1, b.n1) && close(a.n2, b.n2)
}

/// State the recorded run starts from: the configured initial state, carried
/// through the precool phase when one is set.
pub fn start_state(
    cfg: &ScenarioConfig,
    r: &Resolved,
    map: Option<&PolaronMap<f64>>,
) -> Result<DensityState<f64>> {
    let rho0 = initial_state(r, map)?;
    let Some(pre) = &cfg.precool else {
        return Ok(rho0);
    };
    let overrides: Vec<(String, Value)> = pre
        .set
        .iter()
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();
    let mut phase = cfg.with_overrides(&overrides)?;
    phase.precool = None;
    let pr = phase.resolve()?;
    if pr.geometry != r.geometry || pr.params.alpha != r.params.alpha {
        return Err(Error::InvalidConfiguration(
            "the precool phase must keep the geometry and the coupling ratios".into(),
        ));
    }
    if !(pre.duration >= 0.0) {
        return Err(Error::InvalidConfiguration(
            "precool duration must be nonnegative".into(),
        ));
    }
    let t = pre.duration / r.time_scale;
    if t == 0.0 {
        return Ok(rho0);
    }
    let l = build_generator(&pr)?;
    let opts = EvolveOptions::new(t, t).tolerance(pr.tolerance);
    Ok(evolve(&l, &rho0, &opts)?.final_state)
}

/// Evolves over the horizon from `rho0`, stopping early when a settle window
/// is set and the observables stop changing.
pub fn evolve_resolved(
    r: &Resolved,
    l: &Liouvillian<f64>,
    map: Option<PolaronMap<f64>>,
    rho0: DensityState<f64>,
) -> Result<Trajectory<f64>> {
    let opts = |t_final: f64| {
        let mut o = EvolveOptions::new(t_final, r.stride).tolerance(r.tolerance);
        o.time_scale = r.time_scale;
        o.polaron = map.clone();
        o
    };
    let Some(window) = r.settle_window else {
        return evolve(l, &rho0, &opts(r.t_final));
    };
    // windows are whole strides so the record grid matches an unbroken run
    let per = (window / r.stride).round().max(1.0);
    let window = per * r.stride;
    let mut traj = evolve(l, &rho0, &opts(window.min(r.t_final)))?;
    let mut offset = window.min(r.t_final);
    while offset < r.t_final {
        let chunk = window.min(r.t_final - offset);
        let before = *traj.last();
        let next = evolve(l, &traj.final_state, &opts(chunk))?;
        traj.records.extend(next.records.iter().skip(1).map(|rec| {
            let mut rec = *rec;
            rec.t += offset;
            rec
        }));
        traj.final_state = next.final_state;
        traj.accepted_steps += next.accepted_steps;
        traj.rejected_steps += next.rejected_steps;
        offset += chunk;
        if settled(&before, traj.last()) {
            break;
        }
    }
    Ok(traj)
}

/// Effective-rate picture of a filtered configuration.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RateSummary {
    pub rates: RateSet<f64>,
    pub cooling: CoolingReport,
    pub regime: RegimeReport,
}

pub fn rate_summary(r: &Resolved) -> Result<Option<RateSummary>> {
    let Some(b) = &r.baths else { return Ok(None) };
    if !r.model.needs_ancilla() || r.params.omega_minus() <= 0.0 {
        return Ok(None);
    }
    let n_a = default_ancilla_occupation(&r.params, b)?;
    let rates = effective_rates(&r.params, b, n_a)?;
    Ok(Some(RateSummary {
        rates,
        cooling: cooling_dominance(&rates),
        regime: regime_condition(&r.params, b)?,
    }))
}

#[derive(Debug, Clone)]
pub struct CurveResult {
    pub label: String,
    pub config: ScenarioConfig,
    pub trajectory: Trajectory<f64>,
    pub terms: Vec<TermRecord>,
    pub warnings: Vec<String>,
    pub rates: Option<RateSummary>,
    pub convergence: Option<ConvergenceReport>,
}

pub fn run_curve(label: &str, cfg: &ScenarioConfig) -> Result<CurveResult> {
    let r = cfg.resolve()?;
    let l = build_generator(&r)?;
    let mut warnings = r.warnings.clone();
    warnings.extend(l.warnings.iter().cloned());
    let map = polaron_map(&r)?;
    let rho0 = start_state(cfg, &r, map.as_ref())?;
    let traj = evolve_resolved(&r, &l, map, rho0)?;
    let convergence = if cfg.convergence_check {
        let mut finer = cfg.clone();
        finer.truncation += 2;
        finer.convergence_check = false;
        let fr = finer.resolve()?;
        let fl = build_generator(&fr)?;
        let fmap = polaron_map(&fr)?;
        let frho0 = start_state(&finer, &fr, fmap.as_ref())?;
        let mut reference = evolve_resolved(&fr, &fl, fmap, frho0)?;
        // either run may have settled first; compare on the shared grid
        let shared = traj.records.len().min(reference.records.len());
        reference.records.truncate(shared);
        let mut coarse = traj.clone();
        coarse.records.truncate(shared);
        let rep = compare_trajectories(&coarse, &reference)?;
        if !rep.converged {
            warnings.push(format!(
                "truncation {} not converged against {}: E_N deviation {:.3e}, population deviation {:.3e}",
                cfg.truncation, finer.truncation, rep.en_deviation, rep.population_deviation
            ));
        }
        Some(rep)
    } else {
        None
    };
    if cfg.scenario.claims_entanglement() && traj.peak_en() < crate::dynamics::EN_RESOLUTION {
        warnings.push("no entanglement builds up over the horizon".into());
    }
    Ok(CurveResult {
        label: label.to_string(),
        config: cfg.clone(),
        terms: l.manifest(),
        warnings,
        rates: rate_summary(&r)?,
        trajectory: traj,
        convergence,
    })
}

/// All curves of a scenario, run in parallel, in config order.
pub fn run_all(cfg: &ScenarioConfig) -> Result<Vec<CurveResult>> {
    let curves = cfg.expand_curves()?;
    curves
        .par_iter()
        .map(|(label, c)| run_curve(label, c))
        .collect()
}

fn resolved_summary(r: &Resolved) -> Value {
    json!({
        "model": r.model,
        "dims": r.geometry.dims(),
        "omega": r.params.omega,
        "alpha": r.params.alpha,
        "g": r.params.g,
        "temperatures": r.baths.as_ref().map(|b| json!({
            "hot": b.hot.temperature,
            "cold": b.cold.temperature,
            "local": [b.local[0].temperature, b.local[1].temperature],
        })),
        "t_final": r.t_final,
        "stride": r.stride,
        "time_scale": r.time_scale,
        "kelvin_per_unit": r.kelvin_per_unit,
    })
}

fn curve_manifest(c: &CurveResult) -> Result<Value> {
    let r = c.config.resolve()?;
    let last = c.trajectory.last();
    Ok(json!({
        "label": c.label,
        "csv": format!("{}.csv", c.label),
        "overrides": c.config.to_value()?,
        "resolved": resolved_summary(&r),
        "terms": c.terms,
        "warnings": c.warnings,
        "rates": c.rates,
        "convergence": c.convergence,
        "structured": c.trajectory.structured,
        "accepted_steps": c.trajectory.accepted_steps,
        "rejected_steps": c.trajectory.rejected_steps,
        "peak_en": c.trajectory.peak_en(),
        "final": last,
    }))
}

/// Effective config with a `manifest` entry describing the run. Loading it
/// back as a config reproduces the run.
pub fn manifest(cfg: &ScenarioConfig, results: &[CurveResult]) -> Result<Value> {
    let mut v = cfg.to_value()?;
    let curves = results
        .iter()
        .map(curve_manifest)
        .collect::<Result<Vec<_>>>()?;
    v.as_object_mut()
        .expect("config serializes to an object")
        .insert(
            "manifest".into(),
            json!({
                "generator": concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION")),
                "csv_header": crate::dynamics::CSV_HEADER,
                "curves": curves,
            }),
        );
    Ok(v)
}

pub fn output_dir(cfg: &ScenarioConfig, cli: Option<&Path>) -> PathBuf {
    match (cli, &cfg.output_dir) {
        (Some(p), _) => p.to_path_buf(),
        (None, Some(s)) => PathBuf::from(s),
        (None, None) => PathBuf::from("out"),
    }
}

/// Runs every curve and writes `<label>.csv` plus `manifest.json` into `dir`.
pub fn run_to_dir(cfg: &ScenarioConfig, dir: &Path) -> Result<Vec<CurveResult>> {
    let results = run_all(cfg)?;
    std::fs::create_dir_all(dir)?;
    for c in &results {
        c.trajectory
            .save_csv(&dir.join(format!("{}.csv", c.label)))?;
    }
    let m = manifest(cfg, &results)?;
    std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&m)?)?;
    Ok(results)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SweepAxis {
    HotTemperature,
    LocalTemperature,
    Alpha,
    Truncation,
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "T_h" | "th" | "hot_temperature" => Self::HotTemperature,
            "T_i" | "ti" | "local_temperature" => Self::LocalTemperature,
            "alpha" => Self::Alpha,
            "N" | "truncation" => Self::Truncation,
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "unknown sweep axis {s:?}; use T_h, T_i, alpha or N"
                )))
            }
        })
    }
}

impl SweepAxis {
    fn is_temperature(self) -> bool {
        matches!(self, Self::HotTemperature | Self::LocalTemperature)
    }

    /// Overrides that put `value` on this axis. Bare numbers on a temperature
    /// axis are kelvin when the config uses physical units.
    pub fn overrides(self, cfg: &ScenarioConfig, value: &str) -> Result<Vec<(String, Value)>> {
        let v = value.trim();
        let bare: Option<f64> = v.parse().ok();
        let physical = !cfg.system.omega_a.is_scaled();
        let quantity = match bare {
            Some(x) if self.is_temperature() && physical => Value::String(format!("{x} K")),
            Some(x) => json!(x),
            None => Value::String(v.to_string()),
        };
        let number = || {
            bare.ok_or_else(|| Error::InvalidArgument(format!("sweep value {v:?} is not a number")))
        };
        Ok(match self {
            Self::HotTemperature => vec![("baths.hot.temperature".into(), quantity)],
            Self::LocalTemperature => vec![
                ("baths.local.0.temperature".into(), quantity.clone()),
                ("baths.local.1.temperature".into(), quantity),
            ],
            Self::Alpha => {
                let a = number()?;
                vec![
                    ("system.alpha".into(), json!([a, a])),
                    ("system.g".into(), Value::Null),
                ]
            }
            Self::Truncation => {
                let n = number()?;
                if n.fract() != 0.0 || n < 0.0 {
                    return Err(Error::InvalidArgument(format!(
                        "truncation {v} is not a count"
                    )));
                }
                vec![("truncation".into(), json!(n as usize))]
            }
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub value: String,
    pub peak_en: f64,
    pub late_en: f64,
    /// Pair cooling margin of the effective rates; NaN when not defined.
    pub cooling_margin: f64,
}

pub const SWEEP_HEADER: &str = "value,peak_EN,late_EN,cooling_margin";

pub fn sweep(cfg: &ScenarioConfig, axis: SweepAxis, values: &[String]) -> Result<Vec<SweepRow>> {
    let mut base = cfg.clone();
    base.curves.clear();
    base.manifest = None;
    let configs = values
        .iter()
        .map(|v| Ok((v.clone(), base.with_overrides(&axis.overrides(&base, v)?)?)))
        .collect::<Result<Vec<_>>>()?;
    configs
        .par_iter()
        .map(|(v, c)| {
            let res = run_curve(v, c)?;
            let margin = res.rates.map(|s| s.cooling.margin).unwrap_or(f64::NAN);
            Ok(SweepRow {
                value: v.clone(),
                peak_en: res.trajectory.peak_en(),
                late_en: res.trajectory.last().en,
                cooling_margin: margin,
            })
        })
        .collect()
}

pub fn write_sweep<W: std::io::Write>(rows: &[SweepRow], mut w: W) -> Result<()> {
    writeln!(w, "{SWEEP_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{:.10e},{:.10e},{:.6e}",
            r.value, r.peak_en, r.late_en, r.cooling_margin
        )?;
    }
    Ok(())
}

/// Validation summary of one curve without evolving it.
#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub label: String,
    pub resolved: Value,
    pub terms: Vec<TermRecord>,
    pub warnings: Vec<String>,
    pub rates: Option<RateSummary>,
}

pub fn check(cfg: &ScenarioConfig) -> Result<Vec<CheckReport>> {
    cfg.expand_curves()?
        .into_iter()
        .map(|(label, c)| {
            let r = c.resolve()?;
            let l = build_generator(&r)?;
            let mut warnings = r.warnings.clone();
            warnings.extend(l.warnings.iter().cloned());
            Ok(CheckReport {
                label,
                resolved: resolved_summary(&r),
                terms: l.manifest(),
                warnings,
                rates: rate_summary(&r)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ScenarioConfig {
        let text = r#"{
  "scenario": "custom",
  "model": "filtered_nondegenerate",
  "system": {"omega_a": 1, "omega": [0.02, 0.01], "alpha": [0.2, 0.2]},
  "baths": {
    "hot": {"temperature": 5.0, "coupling": 0.002, "filter": {}},
    "cold": {"temperature": 0.02, "coupling": 0.002, "filter": {}},
    "local": [{"temperature": 0.05, "coupling": 1e-5}, {"temperature": 0.05, "coupling": 1e-5}]
  },
  "truncation": 4,
  "horizon": {"t_final": 2000, "stride": 500},
  "curves": [{"label": "a"}, {"label": "b", "set": {"baths.hot.temperature": 1.0}}]
}"#;
        ScenarioConfig::from_str_at(text, Path::new("small.json")).unwrap()
    }

    #[test]
    fn tls_initial_state_is_dressed_ground() {
        let cfg = small();
        let r = cfg.resolve().unwrap();
        let map = polaron_map(&r).unwrap().unwrap();
        let s = initial_state(&r, Some(&map)).unwrap();
        let back = map.to_local_basis(&s).unwrap();
        // ancilla ground, resonators in vacuum
        assert!((back.matrix()[(16, 16)].re - 1.0).abs() < 1e-12);
        assert!((s.purity() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn curves_run_in_order_and_repeat_exactly() {
        let cfg = small();
        let a = run_all(&cfg).unwrap();
        let b = run_all(&cfg).unwrap();
        assert_eq!(
            a.iter().map(|c| c.label.as_str()).collect::<Vec<_>>(),
            ["a", "b"]
        );
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.trajectory.records, y.trajectory.records);
        }
        assert_eq!(a[0].trajectory.records.len(), 5);
        assert_eq!(a[0].terms.len(), 12);
    }

    #[test]
    fn settle_window_keeps_the_record_grid() {
        let mut cfg = small();
        cfg.curves.clear();
        let full = run_curve("x", &cfg).unwrap();
        cfg.horizon.settle_window = Some(1000.0);
        let chunked = run_curve("x", &cfg).unwrap();
        let n = chunked.trajectory.records.len();
        assert!(n >= 3);
        for (p, q) in full
            .trajectory
            .records
            .iter()
            .zip(&chunked.trajectory.records)
        {
            assert_eq!(p.t, q.t);
            assert!((p.n1 - q.n1).abs() < 1e-7 * p.n1.max(1e-6));
        }
    }

    #[test]
    fn precool_phase_hands_over_its_final_state() {
        let mut cfg = small();
        cfg.curves.clear();
        let plain = run_curve("x", &cfg).unwrap();
        let phase = json!({"duration": 3000, "set": {"baths.hot.temperature": 0.02}});
        let with = cfg.with_overrides(&[("precool".into(), phase)]).unwrap();
        let r = with.resolve().unwrap();
        let map = polaron_map(&r).unwrap();
        let start = start_state(&with, &r, map.as_ref()).unwrap();
        let run = run_curve("x", &with).unwrap();
        assert!(
            (run.trajectory.records[0].n1 - start_state_n1(&start, map.as_ref())).abs() < 1e-14
        );
        assert!(run.trajectory.records[0].n1 > plain.trajectory.records[0].n1);
        let zero = cfg
            .with_overrides(&[("precool".into(), json!({"duration": 0}))])
            .unwrap();
        assert_eq!(
            run_curve("x", &zero).unwrap().trajectory.records,
            plain.trajectory.records
        );
        let bad = cfg
            .with_overrides(&[(
                "precool".into(),
                json!({"duration": 10, "set": {"truncation": 5}}),
            )])
            .unwrap();
        assert!(run_curve("x", &bad).is_err());
    }

    fn start_state_n1(s: &DensityState<f64>, map: Option<&PolaronMap<f64>>) -> f64 {
        let local = map.unwrap().to_local_basis(s).unwrap();
        let g = *local.geometry();
        let n = crate::operators::fock_destroy::<f64>(g.fock_dims()[0]).unwrap();
        let n =
            crate::operators::embed(&(n.adjoint() * &n), crate::operators::Site::R1, &g).unwrap();
        n.expectation(&local).re
    }

    #[test]
    fn sweep_axis_overrides() {
        let cfg = small();
        let o = SweepAxis::LocalTemperature.overrides(&cfg, "0.2").unwrap();
        assert_eq!(o.len(), 2);
        assert_eq!(o[0].1, json!(0.2));
        assert!(SweepAxis::Truncation.overrides(&cfg, "4.5").is_err());
        assert!("bogus".parse::<SweepAxis>().is_err());
        let rows = sweep(&cfg, SweepAxis::Truncation, &["3".into(), "4".into()]).unwrap();
        assert_eq!(rows.len(), 2);
        let mut buf = Vec::new();
        write_sweep(&rows, &mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with(SWEEP_HEADER));
    }

    #[test]
    fn outputs_and_manifest_round_trip() {
        let cfg = small();
        let dir = tempfile::tempdir().unwrap();
        run_to_dir(&cfg, dir.path()).unwrap();
        let csv = std::fs::read_to_string(dir.path().join("a.csv")).unwrap();
        assert_eq!(csv.lines().next().unwrap(), crate::dynamics::CSV_HEADER);
        let m = ScenarioConfig::load(&dir.path().join("manifest.json")).unwrap();
        assert_eq!(m.curves, cfg.curves);
        assert_eq!(m.resolve().unwrap().t_final, cfg.resolve().unwrap().t_final);
    }

    #[test]
    fn check_reports_terms() {
        let rep = check(&small()).unwrap();
        assert_eq!(rep.len(), 2);
        assert_eq!(rep[0].terms.len(), 12);
        assert!(rep[0].rates.is_some());
    }
}
