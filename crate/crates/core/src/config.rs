//! Run configuration: TOML parsing, defaults, validation and dotted-key overrides.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::{ModelParams, Problem};
use crate::noise::NoiseConfig;
use crate::param_gate::GateInputs;
use crate::spectral::{Basis, Boundary, SpaceConfig, SpectralField, ZeroModePolicy};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpaceSection {
    pub dim: usize,
    pub boundary: Boundary,
    pub modes: usize,
    /// Grid points per axis; `2 * modes` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<usize>,
    pub zero_mode: ZeroModePolicy,
}

impl Default for SpaceSection {
    fn default() -> Self {
        SpaceSection {
            dim: 1,
            boundary: Boundary::Neumann,
            modes: 16,
            grid: None,
            zero_mode: ZeroModePolicy::Drop,
        }
    }
}

impl SpaceSection {
    pub fn to_config(&self) -> SpaceConfig {
        SpaceConfig {
            dim: self.dim,
            boundary: self.boundary,
            modes: self.modes,
            grid: self.grid.unwrap_or(2 * self.modes),
            zero_mode: self.zero_mode,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeSection {
    pub t_end: f64,
    pub dt: f64,
}

impl Default for TimeSection {
    fn default() -> Self {
        TimeSection { t_end: 1.0, dt: 1e-3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CutoffSection {
    /// Threshold of single-level runs.
    pub kappa: f64,
    /// Increasing thresholds for glued runs.
    pub schedule: Vec<f64>,
    /// Continue with the linear system once the schedule is exhausted.
    pub linear_fallback: bool,
}

impl Default for CutoffSection {
    fn default() -> Self {
        CutoffSection {
            kappa: 1e6,
            schedule: (1..=10).map(f64::from).collect(),
            linear_fallback: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeAmplitude {
    pub index: usize,
    pub amplitude: f64,
}

/// `mean + Σ amplitude·φ_index`, flat mode indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialField {
    pub mean: f64,
    pub modes: Vec<ModeAmplitude>,
}

impl Default for InitialField {
    fn default() -> Self {
        InitialField {
            mean: 1.0,
            modes: Vec::new(),
        }
    }
}

impl InitialField {
    pub fn build(&self, basis: &Arc<Basis>) -> SpectralField {
        let mut f = SpectralField::constant(basis, self.mean);
        for m in &self.modes {
            f.coeffs_mut()[m.index] += m.amplitude;
        }
        f
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialSection {
    pub u: InitialField,
    pub v: InitialField,
}

impl Default for InitialSection {
    fn default() -> Self {
        InitialSection {
            u: InitialField {
                mean: 1.0,
                modes: vec![ModeAmplitude {
                    index: 1,
                    amplitude: 0.2,
                }],
            },
            v: InitialField {
                mean: 0.5,
                modes: vec![ModeAmplitude {
                    index: 2,
                    amplitude: 0.1,
                }],
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PicardSection {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PicardSection {
    fn default() -> Self {
        PicardSection {
            tol: 1e-8,
            max_iter: 20,
        }
    }
}

/// Scheme constants of the invariant-set bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KSetSection {
    pub c_t: f64,
    pub c_kappa: f64,
    pub c2: f64,
}

impl Default for KSetSection {
    fn default() -> Self {
        KSetSection {
            c_t: 1.0,
            c_kappa: 1.0,
            c2: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimateSection {
    /// Power applied to the coupling integral.
    pub m: f64,
    /// Snapshot stride of the simulated records.
    pub snapshot_stride: usize,
}

impl Default for EstimateSection {
    fn default() -> Self {
        EstimateSection {
            m: 1.0,
            snapshot_stride: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergenceSection {
    /// Step counts over `[0, T]` of the compared runs.
    pub levels: Vec<usize>,
    pub reference_steps: usize,
}

impl Default for ConvergenceSection {
    fn default() -> Self {
        ConvergenceSection {
            levels: vec![256, 512, 1024, 2048, 4096],
            reference_steps: 16384,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
    /// Snapshot stride of simulate/glue runs; 0 keeps initial and final state.
    pub snapshot_stride: usize,
    pub field_dumps: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Ensemble size.
    pub paths: usize,
    pub space: SpaceSection,
    pub model: ModelParams,
    pub noise: NoiseConfig,
    pub time: TimeSection,
    pub cutoff: CutoffSection,
    pub initial: InitialSection,
    pub picard: PicardSection,
    pub kset: KSetSection,
    pub estimate: EstimateSection,
    pub convergence: ConvergenceSection,
    pub output: OutputSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            paths: 1,
            space: SpaceSection::default(),
            model: ModelParams::default(),
            noise: NoiseConfig::default(),
            time: TimeSection::default(),
            cutoff: CutoffSection::default(),
            initial: InitialSection::default(),
            picard: PicardSection::default(),
            kset: KSetSection::default(),
            estimate: EstimateSection::default(),
            convergence: ConvergenceSection::default(),
            output: OutputSection::default(),
        }
    }
}

impl RunConfig {
    /// Every violated constraint, not just the first.
    pub fn violations(&self) -> Vec<String> {
        let space = self.space.to_config();
        let mut out = space.violations();
        out.extend(self.model.violations());
        out.extend(self.noise.violations());
        if self.paths == 0 {
            out.push("paths must be at least 1".into());
        }
        let t = &self.time;
        if !(t.dt > 0.0) {
            out.push(format!("time.dt must be positive (got {})", t.dt));
        }
        if !(t.t_end > 0.0) {
            out.push(format!("time.t_end must be positive (got {})", t.t_end));
        }
        if t.dt > 0.0 && t.t_end > 0.0 {
            let steps = (t.t_end / t.dt).round();
            if steps < 1.0 || ((steps * t.dt - t.t_end) / t.t_end).abs() > 1e-9 {
                out.push(format!(
                    "time.t_end ({}) must be an integer multiple of time.dt ({})",
                    t.t_end, t.dt
                ));
            }
        }
        if !(self.cutoff.kappa > 0.0) {
            out.push(format!("cutoff.kappa must be positive (got {})", self.cutoff.kappa));
        }
        let s = &self.cutoff.schedule;
        if s.is_empty() || s[0] <= 0.0 || s.windows(2).any(|w| w[0] >= w[1]) {
            out.push("cutoff.schedule must be non-empty, positive and strictly increasing".into());
        }
        let modes = space.mode_count();
        for (name, field) in [("u", &self.initial.u), ("v", &self.initial.v)] {
            for m in &field.modes {
                if m.index >= modes {
                    out.push(format!(
                        "initial.{name}.modes index {} out of range (mode count {modes})",
                        m.index
                    ));
                }
            }
        }
        if !(self.picard.tol > 0.0) {
            out.push(format!("picard.tol must be positive (got {})", self.picard.tol));
        }
        if self.picard.max_iter == 0 {
            out.push("picard.max_iter must be at least 1".into());
        }
        if !(self.estimate.m > 0.0) {
            out.push(format!("estimate.m must be positive (got {})", self.estimate.m));
        }
        let c = &self.convergence;
        if c.levels.len() < 2 {
            out.push("convergence.levels needs at least two entries".into());
        }
        for &n in &c.levels {
            if n == 0 || c.reference_steps % n != 0 {
                out.push(format!(
                    "convergence.levels entry {n} must divide convergence.reference_steps ({})",
                    c.reference_steps
                ));
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(v))
        }
    }

    pub fn basis(&self) -> Result<Arc<Basis>> {
        Basis::new(self.space.to_config())
    }

    pub fn problem(&self) -> Result<Problem> {
        Problem::new(self.model, self.basis()?, self.noise, self.time.t_end, self.time.dt)
    }

    pub fn initial_data(&self, basis: &Arc<Basis>) -> (SpectralField, SpectralField) {
        (self.initial.u.build(basis), self.initial.v.build(basis))
    }

    pub fn gate_inputs(&self) -> GateInputs {
        GateInputs {
            d: self.space.dim,
            q: self.model.q,
            aleph: self.model.aleph,
            alpha: self.model.alpha,
            rho: self.model.rho,
            p_star: self.model.p_star,
            gamma1: self.noise.gamma1,
            gamma2: self.noise.gamma2,
        }
    }

    /// Normalized TOML with every effective value.
    pub fn dump(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }
}

fn parse_value(text: &str) -> toml::Value {
    match format!("v = {text}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(text.to_string()),
    }
}

/// Sets `a.b.c = value` in a TOML table; `value` is read as a TOML literal and
/// falls back to a bare string.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, value) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Parse(format!("override '{assignment}' is not of the form key=value")))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(Error::Parse(format!("override key '{key}' is malformed")));
    }
    let mut node = table;
    for part in &path[..path.len() - 1] {
        let entry = node
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry
            .as_table_mut()
            .ok_or_else(|| Error::Parse(format!("override key '{key}': '{part}' is not a table")))?;
    }
    node.insert(path[path.len() - 1].to_string(), parse_value(value.trim()));
    Ok(())
}

/// Parses, applies overrides, fills defaults and validates.
pub fn parse_config_with(text: &str, overrides: &[String]) -> Result<RunConfig> {
    let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Parse(e.to_string()))?;
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    let mut cfg: RunConfig = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| Error::Parse(e.to_string()))?;
    cfg.space.grid.get_or_insert(2 * cfg.space.modes);
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    parse_config_with(text, &[])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_dump_has_every_value() {
        let cfg = parse_config("[space]\ndim = 1\n").unwrap();
        let dump = cfg.dump();
        for key in ["paths", "grid = 32", "r1", "p_star", "gamma2", "t_end", "schedule", "max_iter", "c_kappa"] {
            assert!(dump.contains(key), "{key} missing from\n{dump}");
        }
    }

    #[test]
    fn round_trip() {
        let text = "paths = 3\n[model]\nq = 1.5\nscheme = \"semi-implicit\"\n[initial.u]\nmean = 2.0\n";
        let a = parse_config(text).unwrap();
        let b = parse_config(&a.dump()).unwrap();
        assert_eq!(a, b);
        assert_eq!(b.model.q, 1.5);
        assert_eq!(b.initial.u.mean, 2.0);
    }

    #[test]
    fn all_violations_are_listed() {
        let err = parse_config("[model]\nr1 = -1.0\naleph = 3.0\n[time]\ndt = 0.3\n").unwrap_err();
        match err {
            Error::Validation(v) => {
                assert!(v.iter().any(|m| m.contains("r1")));
                assert!(v.iter().any(|m| m.contains("aleph")));
                assert!(v.iter().any(|m| m.contains("time.dt")));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_keys_and_syntax_errors_are_parse_errors() {
        let e = parse_config("[model]\nr3 = 1.0\n").unwrap_err();
        assert!(matches!(&e, Error::Parse(m) if m.contains("r3")), "{e:?}");
        let e = parse_config("[model\n").unwrap_err();
        assert!(matches!(&e, Error::Parse(m) if m.contains("line 1")), "{e:?}");
    }

    #[test]
    fn overrides() {
        let o = vec![
            "model.c1=0.25".to_string(),
            "space.boundary=periodic".to_string(),
            "cutoff.schedule=[2.0, 4.0]".to_string(),
            "paths=7".to_string(),
        ];
        let cfg = parse_config_with("", &o).unwrap();
        assert_eq!(cfg.model.c1, 0.25);
        assert_eq!(cfg.space.boundary, Boundary::Periodic);
        assert_eq!(cfg.cutoff.schedule, vec![2.0, 4.0]);
        assert_eq!(cfg.paths, 7);
        assert!(parse_config_with("", &["nonsense".to_string()]).is_err());
    }
}
