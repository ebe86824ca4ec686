//! Scenario files: a TOML description of one model, controller and run.
//!
//! ```toml
//! model = "hvac2z"          # hvac2z | rlc-series | rlc-2mesh | linear
//! seed = 7
//!
//! [params]                  # model-specific overrides
//! c2 = 1.5
//!
//! [gains]
//! kd = 0.0
//!
//! [setpoint]
//! zones = [2.5, 6.0]        # hvac2z only; otherwise `x = [...]`
//!
//! [initial]
//! x = [0.0, 0.0, 0.0, 0.0]
//!
//! [run]
//! dt = 1e-3
//! t_end = 30.0
//! log_stride = 1
//! band = 0.01
//!
//! [check]
//! samples = 1000
//! waive = false
//!
//! [output]
//! dir = "out"
//! stem = "baseline"
//!
//! [variational]
//! delta_x0 = [0.1, 0.0, 0.0, 0.0]
//! ```
//!
//! Every table is optional except the `linear` model's `[params]`. Unknown
//! keys are rejected.

use std::fs;
use std::path::{Path, PathBuf};

use krasov_core::models::{HvacModel, HvacParams, LinearModel, RlcModel, RlcParams};
use krasov_core::simulate::{AssumptionGate, SimulationConfig};
use krasov_core::system::{ControlAffineModel, Metric, StateBox};
use krasov_core::{CheckConfig, ControllerGains};
use nalgebra::{DMatrix, DVector};
use serde::{de::DeserializeOwned, Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error("{path}: {source}")]
    Parse { path: PathBuf, source: toml::de::Error },

    #[error("{path}: {message}")]
    Invalid { path: PathBuf, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "hvac2z")]
    Hvac2z,
    #[serde(rename = "rlc-series")]
    RlcSeries,
    #[serde(rename = "rlc-2mesh")]
    Rlc2Mesh,
    #[serde(rename = "linear")]
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SeriesParams {
    pub l: f64,
    pub c: f64,
    pub r: f64,
    pub domain_halfwidth: f64,
}

impl Default for SeriesParams {
    fn default() -> Self {
        SeriesParams { l: 1.0, c: 1.0, r: 1.5, domain_halfwidth: 5.0 }
    }
}

/// Full two-mesh parameter set, defaulting to the built-in preset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MeshParams(pub RlcParams);

impl Default for MeshParams {
    fn default() -> Self {
        MeshParams(RlcParams::two_mesh())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearParams {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    /// Identity when absent.
    #[serde(default)]
    pub metric: Option<Vec<Vec<f64>>>,
    #[serde(default = "unit")]
    pub domain_halfwidth: f64,
}

fn unit() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainsSpec {
    pub k1: Option<f64>,
    pub kd: Option<f64>,
    pub ki: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetpointSpec {
    pub x: Option<Vec<f64>>,
    pub zones: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    pub x: Option<Vec<f64>>,
    pub u: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSpec {
    pub dt: f64,
    pub t_end: f64,
    pub log_stride: usize,
    pub band: f64,
}

impl Default for RunSpec {
    fn default() -> Self {
        RunSpec { dt: 1e-3, t_end: 30.0, log_stride: 1, band: 0.01 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CheckSpec {
    pub samples: usize,
    pub probes: usize,
    pub tolerance: f64,
    pub margin_a1: f64,
    /// Skip the assumption gate before simulating.
    pub waive: bool,
}

impl Default for CheckSpec {
    fn default() -> Self {
        let c = CheckConfig::default();
        CheckSpec {
            samples: c.samples,
            probes: c.probes,
            tolerance: c.tolerance,
            margin_a1: c.margin_a1,
            waive: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    /// Relative to the scenario file's directory.
    pub dir: Option<PathBuf>,
    pub stem: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariationalSpec {
    pub delta_x0: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
struct Selector {
    model: ModelKind,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile<P> {
    #[allow(dead_code)]
    model: ModelKind,
    params: Option<P>,
    #[serde(default)]
    gains: GainsSpec,
    #[serde(default)]
    setpoint: SetpointSpec,
    #[serde(default)]
    initial: InitialSpec,
    #[serde(default)]
    run: RunSpec,
    #[serde(default)]
    check: CheckSpec,
    seed: Option<u64>,
    #[serde(default)]
    output: OutputSpec,
    #[serde(default)]
    variational: VariationalSpec,
}

/// Command-line overrides; each takes precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out_dir: Option<PathBuf>,
    pub dt: Option<f64>,
    pub t_end: Option<f64>,
    pub seed: Option<u64>,
    pub delta_x0: Option<Vec<f64>>,
}

/// Resolved parameter set, echoed into every summary.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum ResolvedParams {
    Hvac(HvacParams),
    Series(SeriesParams),
    Mesh(RlcParams),
    Linear(LinearParams),
}

/// A fully resolved scenario: a model plus everything needed to run it.
pub struct Scenario {
    pub path: PathBuf,
    pub stem: String,
    pub out_dir: PathBuf,
    pub kind: ModelKind,
    pub params: ResolvedParams,
    pub model: Box<dyn ControlAffineModel>,
    pub gains: ControllerGains,
    pub x_star: DVector<f64>,
    pub x0: DVector<f64>,
    pub u0: Option<DVector<f64>>,
    pub run: RunSpec,
    pub check: CheckSpec,
    pub seed: u64,
    pub delta_x0: DVector<f64>,
}

impl Scenario {
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self, ScenarioError> {
        let text = fs::read_to_string(path).map_err(|source| ScenarioError::Io { path: path.into(), source })?;
        let parse_err = |source| ScenarioError::Parse { path: path.into(), source };
        let selector: Selector = toml::from_str(&text).map_err(parse_err)?;
        let invalid = |message: String| ScenarioError::Invalid { path: path.into(), message };

        let (file, params, model): (ScenarioFile<()>, ResolvedParams, Box<dyn ControlAffineModel>) =
            match selector.model {
                ModelKind::Hvac2z => {
                    let (file, p) = parse_with::<HvacParams>(&text).map_err(parse_err)?;
                    let p = p.unwrap_or_default();
                    let model = HvacModel::new(p).map_err(|e| invalid(e.to_string()))?;
                    (file, ResolvedParams::Hvac(p), Box::new(model))
                }
                ModelKind::RlcSeries => {
                    let (file, p) = parse_with::<SeriesParams>(&text).map_err(parse_err)?;
                    let p = p.unwrap_or_default();
                    let rlc = RlcParams { domain_halfwidth: p.domain_halfwidth, ..RlcParams::series(p.l, p.c, p.r) };
                    let model = RlcModel::new(rlc).map_err(|e| invalid(e.to_string()))?;
                    (file, ResolvedParams::Series(p), Box::new(model))
                }
                ModelKind::Rlc2Mesh => {
                    let (file, p) = parse_with::<MeshParams>(&text).map_err(parse_err)?;
                    let p = p.unwrap_or_default().0;
                    let model = RlcModel::new(p.clone()).map_err(|e| invalid(e.to_string()))?;
                    (file, ResolvedParams::Mesh(p), Box::new(model))
                }
                ModelKind::Linear => {
                    let (file, p) = parse_with::<LinearParams>(&text).map_err(parse_err)?;
                    let p = p.ok_or_else(|| invalid("model \"linear\" requires [params] with a and b".into()))?;
                    let model = linear_model(&p).map_err(|e| invalid(e.to_string()))?;
                    (file, ResolvedParams::Linear(p), Box::new(model))
                }
            };
        resolve(path, file, selector.model, params, model, overrides).map_err(invalid)
    }

    pub fn simulation_config(&self) -> SimulationConfig {
        let gate = if self.check.waive {
            AssumptionGate::Waive
        } else {
            AssumptionGate::Verify(self.check_config())
        };
        let mut cfg = SimulationConfig::new(self.x0.clone(), self.x_star.clone(), self.gains)
            .with_horizon(self.run.t_end, self.run.dt)
            .with_log_stride(self.run.log_stride)
            .with_band(self.run.band)
            .with_assumptions(gate);
        if let Some(u0) = &self.u0 {
            cfg = cfg.with_u0(u0.clone());
        }
        cfg
    }

    pub fn check_config(&self) -> CheckConfig {
        CheckConfig {
            samples: self.check.samples,
            probes: self.check.probes,
            tolerance: self.check.tolerance,
            margin_a1: self.check.margin_a1,
            seed: self.seed,
        }
    }

    pub fn output_path(&self, suffix: &str) -> PathBuf {
        self.out_dir.join(format!("{}.{suffix}", self.stem))
    }
}

/// Parses the whole file with the model's parameter type, then erases it.
fn parse_with<P: DeserializeOwned>(text: &str) -> Result<(ScenarioFile<()>, Option<P>), toml::de::Error> {
    let file: ScenarioFile<P> = toml::from_str(text)?;
    let ScenarioFile { model, params, gains, setpoint, initial, run, check, seed, output, variational } = file;
    let erased = ScenarioFile { model, params: None, gains, setpoint, initial, run, check, seed, output, variational };
    Ok((erased, params))
}

fn rows_to_matrix(name: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>, String> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
        return Err(format!("params.{name} must be a non-empty rectangular matrix"));
    }
    Ok(DMatrix::from_row_iterator(rows.len(), ncols, rows.iter().flatten().copied()))
}

fn linear_model(p: &LinearParams) -> Result<LinearModel, String> {
    let a = rows_to_matrix("a", &p.a)?;
    let b = rows_to_matrix("b", &p.b)?;
    let n = a.nrows();
    let metric = match &p.metric {
        Some(rows) => Metric::new(rows_to_matrix("metric", rows)?).map_err(|e| e.to_string())?,
        None => Metric::identity(n),
    };
    let domain = StateBox::uniform(n, -p.domain_halfwidth, p.domain_halfwidth).map_err(|e| e.to_string())?;
    LinearModel::new(a, b, metric, domain).map_err(|e| e.to_string())
}

fn vector(name: &str, values: &[f64], len: usize) -> Result<DVector<f64>, String> {
    if values.len() != len {
        return Err(format!("{name} has {} entries, model needs {len}", values.len()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(format!("{name} must be finite"));
    }
    Ok(DVector::from_column_slice(values))
}

fn resolve(
    path: &Path,
    file: ScenarioFile<()>,
    kind: ModelKind,
    params: ResolvedParams,
    model: Box<dyn ControlAffineModel>,
    overrides: &Overrides,
) -> Result<Scenario, String> {
    let (n, m) = (model.state_dim(), model.input_dim());

    let base = ControllerGains::default();
    let gains = ControllerGains::new(
        file.gains.k1.unwrap_or(base.k1),
        file.gains.kd.unwrap_or(base.kd),
        file.gains.ki.unwrap_or(base.ki),
    )
    .map_err(|e| format!("gains: {e}"))?;

    let x_star = match (&file.setpoint.x, file.setpoint.zones, &params) {
        (Some(_), Some(_), _) => return Err("setpoint: give either x or zones, not both".into()),
        (Some(x), None, _) => vector("setpoint.x", x, n)?,
        (None, Some([t1, t2]), ResolvedParams::Hvac(p)) => {
            HvacModel::new(*p).map_err(|e| e.to_string())?.setpoint_state(t1, t2)
        }
        (None, Some(_), _) => return Err("setpoint.zones is only defined for model \"hvac2z\"".into()),
        (None, None, ResolvedParams::Hvac(p)) => {
            let (t1, t2) = krasov_core::models::hvac::DEFAULT_ZONE_SETPOINTS;
            HvacModel::new(*p).map_err(|e| e.to_string())?.setpoint_state(t1, t2)
        }
        (None, None, _) => DVector::zeros(n),
    };
    let x0 = match &file.initial.x {
        Some(x) => vector("initial.x", x, n)?,
        None => DVector::zeros(n),
    };
    let u0 = file.initial.u.as_deref().map(|u| vector("initial.u", u, m)).transpose()?;

    let mut run = file.run;
    if let Some(dt) = overrides.dt {
        run.dt = dt;
    }
    if let Some(t_end) = overrides.t_end {
        run.t_end = t_end;
    }
    if !(run.dt > 0.0 && run.dt.is_finite()) {
        return Err(format!("run.dt must be positive, got {}", run.dt));
    }
    if !(run.t_end >= run.dt && run.t_end.is_finite()) {
        return Err(format!("run.t_end must be >= dt, got {}", run.t_end));
    }
    if run.log_stride == 0 {
        return Err("run.log_stride must be >= 1".into());
    }
    if !(run.band > 0.0) {
        return Err("run.band must be positive".into());
    }
    if file.check.samples == 0 {
        return Err("check.samples must be >= 1".into());
    }

    let delta_x0 = match overrides.delta_x0.as_deref().or(file.variational.delta_x0.as_deref()) {
        Some(d) => vector("variational.delta_x0", d, n)?,
        None => {
            let mut d = DVector::zeros(n);
            d[0] = 0.1;
            d
        }
    };

    let scenario_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let out_dir = match (&overrides.out_dir, &file.output.dir) {
        (Some(dir), _) => dir.clone(),
        (None, Some(dir)) => scenario_dir.join(dir),
        (None, None) => scenario_dir,
    };
    let stem = match file.output.stem {
        Some(stem) if !stem.is_empty() && !stem.contains(['/', '\\']) => stem,
        Some(stem) => return Err(format!("output.stem {stem:?} must be a plain file name")),
        None => path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "scenario".into()),
    };

    Ok(Scenario {
        path: path.into(),
        stem,
        out_dir,
        kind,
        params,
        model,
        gains,
        x_star,
        x0,
        u0,
        run,
        check: file.check,
        seed: overrides.seed.or(file.seed).unwrap_or(0),
        delta_x0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn load_str(text: &str) -> Result<Scenario, ScenarioError> {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        file.write_all(text.as_bytes()).unwrap();
        Scenario::load(file.path(), &Overrides::default())
    }

    #[test]
    fn minimal_hvac_uses_defaults() {
        let s = load_str("model = \"hvac2z\"\n").unwrap();
        assert_eq!(s.kind, ModelKind::Hvac2z);
        assert_eq!(s.gains, ControllerGains::default());
        assert_eq!(s.run, RunSpec::default());
        assert!((s.x_star[0] - 2.5).abs() < 1e-15 && (s.x_star[1] - 6.0).abs() < 1e-15);
        assert_eq!(s.delta_x0.as_slice(), &[0.1, 0.0, 0.0, 0.0]);
        assert_eq!(s.seed, 0);
    }

    #[test]
    fn partial_gains_and_param_aliases() {
        let s = load_str("model = \"hvac2z\"\n[params]\nr31 = 2.0\n[gains]\nkd = 0.0\n").unwrap();
        assert_eq!(s.gains.kd, 0.0);
        assert_eq!(s.gains.ki, 1.0);
        match s.params {
            ResolvedParams::Hvac(p) => assert_eq!(p.r13, 2.0),
            _ => panic!("wrong params"),
        }
    }

    #[test]
    fn unknown_field_reports_line() {
        let err = load_str("model = \"hvac2z\"\n[run]\ndt = 1e-3\ntend = 5.0\n").err().unwrap();
        let msg = err.to_string();
        assert!(matches!(err, ScenarioError::Parse { .. }));
        assert!(msg.contains("tend") && msg.contains("line 4"), "{msg}");
    }

    #[test]
    fn unknown_model_param_is_rejected() {
        let err = load_str("model = \"rlc-series\"\n[params]\nq = 1.0\n").err().unwrap();
        assert!(matches!(err, ScenarioError::Parse { .. }), "{err}");
    }

    #[test]
    fn linear_needs_params_and_checks_dimensions() {
        assert!(matches!(load_str("model = \"linear\"\n").err().unwrap(), ScenarioError::Invalid { .. }));
        let text = "model = \"linear\"\n[params]\na = [[-1.0, 0.0], [0.0, -2.0]]\nb = [[1.0], [0.0]]\n[initial]\nx = [1.0]\n";
        let err = load_str(text).err().unwrap();
        assert!(err.to_string().contains("initial.x"), "{err}");
    }

    #[test]
    fn zones_only_for_hvac_and_invalid_gains() {
        assert!(load_str("model = \"rlc-2mesh\"\n[setpoint]\nzones = [1.0, 2.0]\n").is_err());
        assert!(load_str("model = \"hvac2z\"\n[gains]\nki = 0.0\n").is_err());
    }

    #[test]
    fn overrides_take_precedence() {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        file.write_all(b"model = \"hvac2z\"\nseed = 3\n[run]\ndt = 0.01\n").unwrap();
        let overrides = Overrides {
            dt: Some(0.02),
            seed: Some(11),
            out_dir: Some("elsewhere".into()),
            ..Default::default()
        };
        let s = Scenario::load(file.path(), &overrides).unwrap();
        assert_eq!(s.run.dt, 0.02);
        assert_eq!(s.seed, 11);
        assert_eq!(s.out_dir, PathBuf::from("elsewhere"));
        assert_eq!(s.check_config().seed, 11);
    }
}
