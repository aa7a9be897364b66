//! Run configuration: a TOML file of flat sections, validated strictly.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use toml::{Table, Value};

use trudinger::discretization::{BoundaryExpr, BoundaryFamily, PolyTerm};
use trudinger::model::Exponent;
use trudinger::stepper::{MassTreatment, SolveConfig};
use trudinger::Execution;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config value for {key}: {message}")]
    Invalid { key: String, message: String },
    #[error("cannot read config: {0}")]
    Io(String),
}

fn invalid(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.to_string(),
        message: message.into(),
    }
}

/// Exponent setting: a number above 2, or the `p2` near-heat mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ExponentSetting {
    Value(f64),
    Mode(P2Mode),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum P2Mode {
    P2,
}

impl ExponentSetting {
    pub fn exponent(&self) -> Exponent {
        match self {
            ExponentSetting::Value(p) => Exponent::new(*p).expect("validated on load"),
            ExponentSetting::Mode(P2Mode::P2) => Exponent::p2_limit(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleChoice {
    None,
    HeatSine,
    SeparableP,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSection {
    pub p: ExponentSetting,
    pub a: f64,
    pub b: f64,
    pub t_final: f64,
    pub boundary: String,
    pub params: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretizationSection {
    pub steps: usize,
    pub elements: usize,
    pub quadrature_order: usize,
    pub lumped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverSection {
    pub gradient_tol: f64,
    pub max_iterations: usize,
    pub reg_initial: f64,
    pub reg_floor: f64,
    pub backtrack_factor: f64,
    pub sufficient_decrease: f64,
    pub deterministic: bool,
    pub execution: Execution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSection {
    pub gammas: Vec<f64>,
    /// Rungs written `"<steps>x<elements>"`.
    pub ladder: Vec<String>,
    /// Energy-estimate cutoffs; empty means `T/4, T/2, T`.
    pub cutoffs: Vec<f64>,
    pub oracle: OracleChoice,
    pub oracle_resolution: usize,
    pub samples: usize,
    pub exponents: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Polynomial coefficients of the spatial part of the weak-form test
    /// field; empty means `(x − a)(b − x)`.
    pub test_field: Vec<f64>,
    /// Stored solution (solution CSV schema) checked by `verify`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub solution_csv: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputSection {
    pub dir: String,
    pub formats: Vec<OutputFormat>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub problem: ProblemSection,
    pub discretization: DiscretizationSection,
    pub solver: SolverSection,
    pub experiment: ExperimentSection,
    pub output: OutputSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        let s = SolveConfig::default();
        RunConfig {
            problem: ProblemSection {
                p: ExponentSetting::Value(3.0),
                a: 0.0,
                b: 1.0,
                t_final: 0.1,
                boundary: "sin-bump".into(),
                params: vec![1.0, 0.0, 1.0],
            },
            discretization: DiscretizationSection {
                steps: 100,
                elements: 32,
                quadrature_order: s.quadrature_order,
                lumped: true,
            },
            solver: SolverSection {
                gradient_tol: s.gradient_tol,
                max_iterations: s.max_iterations,
                reg_initial: s.reg_initial,
                reg_floor: s.reg_floor,
                backtrack_factor: s.backtrack_factor,
                sufficient_decrease: s.sufficient_decrease,
                deterministic: true,
                execution: Execution::Parallel,
            },
            experiment: ExperimentSection {
                gammas: vec![0.2, 0.1, 0.05],
                ladder: vec!["50x16".into(), "100x32".into(), "200x64".into()],
                cutoffs: Vec::new(),
                oracle: OracleChoice::None,
                oracle_resolution: trudinger::verification::DEFAULT_ORACLE_RESOLUTION,
                samples: 10_000,
                exponents: vec![2.5, 3.0, 4.0],
                seed: None,
                test_field: Vec::new(),
                solution_csv: None,
            },
            output: OutputSection {
                dir: "out".into(),
                formats: vec![OutputFormat::Csv, OutputFormat::Json],
            },
        }
    }
}

const SECTIONS: &[(&str, &[&str])] = &[
    ("problem", &["p", "a", "b", "t_final", "boundary", "params"]),
    ("discretization", &["steps", "elements", "quadrature_order", "lumped"]),
    (
        "solver",
        &[
            "gradient_tol",
            "max_iterations",
            "reg_initial",
            "reg_floor",
            "backtrack_factor",
            "sufficient_decrease",
            "deterministic",
            "execution",
        ],
    ),
    (
        "experiment",
        &[
            "gammas",
            "ladder",
            "cutoffs",
            "oracle",
            "oracle_resolution",
            "samples",
            "exponents",
            "seed",
            "test_field",
            "solution_csv",
        ],
    ),
    ("output", &["dir", "formats"]),
];

pub const BOUNDARY_FAMILIES: &[&str] = &["constant", "affine-xt", "sin-bump", "separable-product", "polynomial"];

fn suggestion(name: &str, candidates: &[&str]) -> String {
    candidates
        .iter()
        .map(|c| (strsim::levenshtein(name, c), *c))
        .filter(|(d, _)| *d <= 3)
        .min()
        .map(|(_, c)| format!("; did you mean \"{c}\"?"))
        .unwrap_or_default()
}

/// Rejects sections and keys that are not part of the schema.
fn check_keys(table: &Table) -> Result<(), ConfigError> {
    let names: Vec<&str> = SECTIONS.iter().map(|(s, _)| *s).collect();
    for (section, value) in table {
        let Some((_, keys)) = SECTIONS.iter().find(|(s, _)| s == section) else {
            return Err(invalid(section, format!("unknown section{}", suggestion(section, &names))));
        };
        let Value::Table(inner) = value else {
            return Err(invalid(section, "expected a [section]"));
        };
        for key in inner.keys() {
            if !keys.contains(&key.as_str()) {
                let full: Vec<String> = keys.iter().map(|k| format!("{section}.{k}")).collect();
                let full_refs: Vec<&str> = full.iter().map(String::as_str).collect();
                return Err(invalid(
                    &format!("{section}.{key}"),
                    format!("unknown key{}", suggestion(&format!("{section}.{key}"), &full_refs)),
                ));
            }
        }
    }
    Ok(())
}

/// Overlays the file onto the defaults, so missing keys keep their defaults.
fn merge(base: &mut Table, over: &Table) {
    for (k, v) in over {
        match (base.get_mut(k), v) {
            (Some(Value::Table(b)), Value::Table(o)) => merge(b, o),
            _ => {
                base.insert(k.clone(), v.clone());
            }
        }
    }
}

/// Finds which user-supplied key breaks typed deserialization by trying
/// each one alone on top of the defaults.
fn field_error(defaults: &Table, user: &Table, err: toml::de::Error) -> ConfigError {
    for (section, inner) in user {
        let Value::Table(inner) = inner else { continue };
        for (key, value) in inner {
            let mut probe = defaults.clone();
            let mut single = Table::new();
            single.insert(key.clone(), value.clone());
            let mut wrapper = Table::new();
            wrapper.insert(section.clone(), Value::Table(single));
            merge(&mut probe, &wrapper);
            if let Err(e) = RunConfig::deserialize(Value::Table(normalize(probe))) {
                return invalid(&format!("{section}.{key}"), e.message().to_string());
            }
        }
    }
    ConfigError::Parse(err.message().to_string())
}

/// Integer `p` is accepted as a float.
fn normalize(mut table: Table) -> Table {
    if let Some(Value::Table(problem)) = table.get_mut("problem") {
        if let Some(Value::Integer(i)) = problem.get("p").cloned() {
            problem.insert("p".into(), Value::Float(i as f64));
        }
    }
    table
}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let table: Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
    check_keys(&table)?;
    let defaults = Table::try_from(RunConfig::default()).map_err(|e| ConfigError::Parse(e.to_string()))?;
    let mut merged = defaults.clone();
    merge(&mut merged, &table);
    let cfg = RunConfig::deserialize(Value::Table(normalize(merged))).map_err(|e| field_error(&defaults, &table, e))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))?;
    parse_config(&text)
}

/// TOML text that [`parse_config`] maps back to `cfg`.
pub fn to_toml(cfg: &RunConfig) -> String {
    toml::to_string(cfg).expect("config serializes")
}

pub fn parse_rung(s: &str) -> Option<(usize, usize)> {
    let (m, n) = s.split_once('x')?;
    let (m, n) = (m.trim().parse().ok()?, n.trim().parse().ok()?);
    (m >= 1 && n >= 1).then_some((m, n))
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let p = &self.problem;
        if let ExponentSetting::Value(v) = p.p {
            if !(v > 2.0 && v.is_finite()) {
                return Err(invalid("problem.p", format!("must be a number above 2 or \"p2\", got {v}")));
            }
        }
        if !(p.a.is_finite() && p.b.is_finite() && p.a < p.b) {
            return Err(invalid("problem.b", "need finite a < b"));
        }
        if !(p.t_final > 0.0 && p.t_final.is_finite()) {
            return Err(invalid("problem.t_final", "must be positive"));
        }
        self.boundary_expr()?;
        let d = &self.discretization;
        if d.steps == 0 {
            return Err(invalid("discretization.steps", "must be at least 1"));
        }
        if d.elements == 0 {
            return Err(invalid("discretization.elements", "must be at least 1"));
        }
        if !(1..=trudinger::geometry::MAX_GAUSS_ORDER).contains(&d.quadrature_order) {
            return Err(invalid("discretization.quadrature_order", "must lie in 1..=10"));
        }
        self.solve_config()
            .validate()
            .map_err(|e| invalid("solver", e.to_string()))?;
        let e = &self.experiment;
        if e.gammas.iter().any(|g| !(*g > 0.0)) || e.gammas.windows(2).any(|w| w[1] >= w[0]) {
            return Err(invalid("experiment.gammas", "must be positive and strictly decreasing"));
        }
        let ladder = self.ladder()?;
        if ladder.len() >= 2 {
            trudinger::solver::validate_ladder(&ladder).map_err(|err| invalid("experiment.ladder", err.to_string()))?;
        }
        if e.cutoffs.iter().any(|c| !(*c > 0.0 && *c <= p.t_final)) {
            return Err(invalid("experiment.cutoffs", "must lie in (0, t_final]"));
        }
        if e.oracle == OracleChoice::HeatSine && p.p != ExponentSetting::Mode(P2Mode::P2) {
            return Err(invalid("experiment.oracle", "heat-sine needs problem.p = \"p2\""));
        }
        if e.oracle == OracleChoice::HeatSine && p.a != 0.0 {
            return Err(invalid("experiment.oracle", "heat-sine needs problem.a = 0"));
        }
        if e.oracle_resolution < 100 {
            return Err(invalid("experiment.oracle_resolution", "must be at least 100"));
        }
        if e.exponents.iter().any(|q| !(*q > 2.0 && q.is_finite())) {
            return Err(invalid("experiment.exponents", "every exponent must exceed 2"));
        }
        if self.output.formats.is_empty() {
            return Err(invalid("output.formats", "at least one format is required"));
        }
        Ok(())
    }

    pub fn exponent(&self) -> Exponent {
        self.problem.p.exponent()
    }

    pub fn ladder(&self) -> Result<Vec<(usize, usize)>, ConfigError> {
        self.experiment
            .ladder
            .iter()
            .map(|s| parse_rung(s).ok_or_else(|| invalid("experiment.ladder", format!("bad rung \"{s}\", expected like \"50x16\""))))
            .collect()
    }

    pub fn cutoffs(&self) -> Vec<f64> {
        if self.experiment.cutoffs.is_empty() {
            let t = self.problem.t_final;
            vec![0.25 * t, 0.5 * t, t]
        } else {
            self.experiment.cutoffs.clone()
        }
    }

    pub fn boundary_expr(&self) -> Result<BoundaryExpr, ConfigError> {
        let params = &self.problem.params;
        let need = |n: usize| -> Result<(), ConfigError> {
            if params.len() != n {
                Err(invalid(
                    "problem.params",
                    format!("family \"{}\" takes {n} parameters, got {}", self.problem.boundary, params.len()),
                ))
            } else {
                Ok(())
            }
        };
        let family = match self.problem.boundary.as_str() {
            "constant" => {
                need(1)?;
                BoundaryFamily::Constant { value: params[0] }
            }
            "affine-xt" => {
                need(3)?;
                BoundaryFamily::AffineXt {
                    c0: params[0],
                    cx: params[1],
                    ct: params[2],
                }
            }
            "sin-bump" => {
                need(3)?;
                BoundaryFamily::SinBump {
                    amplitude: params[0],
                    offset: params[1],
                    wavenumber: params[2],
                }
            }
            "separable-product" => {
                need(3)?;
                BoundaryFamily::SeparableProduct {
                    amplitude: params[0],
                    time_wavenumber: params[1],
                    space_wavenumber: params[2],
                }
            }
            "polynomial" => {
                if params.is_empty() || !params.len().is_multiple_of(3) {
                    return Err(invalid("problem.params", "polynomial takes (coeff, x_pow, t_pow) triples"));
                }
                let mut terms = Vec::new();
                for c in params.chunks(3) {
                    let pow = |v: f64| -> Result<u32, ConfigError> {
                        if v >= 0.0 && v.fract() == 0.0 && v <= 16.0 {
                            Ok(v as u32)
                        } else {
                            Err(invalid("problem.params", format!("power {v} is not an integer in 0..=16")))
                        }
                    };
                    terms.push(PolyTerm {
                        coeff: c[0],
                        x_pow: pow(c[1])?,
                        t_pow: pow(c[2])?,
                    });
                }
                BoundaryFamily::Polynomial { terms }
            }
            other => {
                return Err(invalid(
                    "problem.boundary",
                    format!("unknown family \"{other}\"{}", suggestion(other, BOUNDARY_FAMILIES)),
                ))
            }
        };
        if params.iter().any(|v| !v.is_finite()) {
            return Err(invalid("problem.params", "parameters must be finite"));
        }
        Ok(BoundaryExpr::new(family))
    }

    pub fn solve_config(&self) -> SolveConfig {
        let s = &self.solver;
        SolveConfig {
            gradient_tol: s.gradient_tol,
            max_iterations: s.max_iterations,
            reg_initial: s.reg_initial,
            reg_floor: s.reg_floor,
            backtrack_factor: s.backtrack_factor,
            sufficient_decrease: s.sufficient_decrease,
            quadrature_order: self.discretization.quadrature_order,
            mass: if self.discretization.lumped {
                MassTreatment::Lumped
            } else {
                MassTreatment::Consistent
            },
            execution: s.execution,
            ordered_reduction: s.deterministic,
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        PathBuf::from(&self.output.dir)
    }

    pub fn wants(&self, f: OutputFormat) -> bool {
        self.output.formats.contains(&f)
    }
}
