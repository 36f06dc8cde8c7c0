//! Run configuration: a TOML file with `system`, `integrator`, `output`,
//! `verify` and `sweep` sections.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use eulertop::expr::{parse, Expr, ParameterBinding};
use eulertop::field::{
    builtin, synthesize, Builtin, DeformationSpec, PoleSet, Provenance, VectorField,
};
use eulertop::{IntegratorConfig, Thresholds};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Seed for every randomized suite.
    #[serde(default)]
    pub seed: u64,
    /// Initial state.
    pub x0: Vec<f64>,
    /// Optional time reparametrization factor `f(x)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reparametrization: Option<String>,
    pub system: SystemConfig,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
}

/// Either `builtin` or (`dimension`, `deformations`), never both.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builtin: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dimension: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deformations: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub parameters: BTreeMap<String, f64>,
    /// Pole families of an inline system, for the singularity guard and the
    /// sampler. Builtins know their own.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub poles: Option<PoleSet>,
    /// Hand-written field to check against the synthesized one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub closed_form: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub trajectory: String,
    pub report: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: PathBuf::from("out"),
            trajectory: "trajectory.csv".into(),
            report: "report.json".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    pub samples: usize,
    /// Sample box is `[-half_width, half_width]^n`.
    pub half_width: f64,
    /// Rejection radius around the system's poles. Near coincidence planes
    /// the quartic field's divergence loses digits to cancellation, so the
    /// default keeps well clear of them.
    pub guard: f64,
    pub thresholds: Thresholds,
    /// Largest accepted relative deviation from a closed-form field.
    pub closed_form_tolerance: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            samples: 1000,
            half_width: 2.0,
            guard: 0.2,
            thresholds: Thresholds::default(),
            closed_form_tolerance: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub parameter: String,
    pub values: Vec<f64>,
    #[serde(default = "default_workers")]
    pub workers: usize,
}

fn default_workers() -> usize {
    1
}

/// A configuration problem, anchored to a line of the file when possible.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub path: PathBuf,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "{}:{}: {}", self.path.display(), l, self.message),
            None => write!(f, "{}: {}", self.path.display(), self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

/// Locates `key = ...` inside `[section]` (or at top level when `section`
/// is empty); 1-based line number.
fn key_line(text: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.starts_with('[') {
            current = line
                .trim_matches(|c| c == '[' || c == ']')
                .trim()
                .to_string();
            continue;
        }
        if current == section {
            if let Some((k, _)) = line.split_once('=') {
                if k.trim().trim_matches('"') == key {
                    return Some(i + 1);
                }
            }
        }
    }
    None
}

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// The system a config resolves to.
#[derive(Debug, Clone)]
pub struct ResolvedSystem {
    /// Builtin name, or `inline`.
    pub name: String,
    pub builtin: Option<Builtin>,
    pub spec: DeformationSpec,
    pub field: VectorField,
    pub closed_form: Option<VectorField>,
}

impl ResolvedSystem {
    pub fn dimension(&self) -> usize {
        self.spec.dimension()
    }

    pub fn poles(&self) -> PoleSet {
        self.spec.poles()
    }

    /// The undeformed top of the same dimension, integrated for comparison.
    pub fn undeformed(&self) -> Result<ResolvedSystem, String> {
        let n = self.dimension();
        let name = if n == 3 { "euler3" } else { "euler_nd" };
        let sys = builtin(name, n, 0.0).map_err(|e| e.to_string())?;
        let field = synthesize(&sys.spec).map_err(|e| e.to_string())?;
        Ok(ResolvedSystem {
            name: name.into(),
            builtin: Some(sys.builtin),
            spec: sys.spec,
            field,
            closed_form: sys.closed_form,
        })
    }
}

/// A validated configuration.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub path: PathBuf,
    pub config: RunConfig,
    pub system: ResolvedSystem,
    pub reparametrization: Option<Expr>,
}

impl RunConfig {
    pub fn from_toml(text: &str, path: &Path) -> Result<RunConfig, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError {
            path: path.to_path_buf(),
            line: e.span().map(|s| line_of_offset(text, s.start)),
            message: e.message().trim().to_string(),
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    /// Resolve the system and check all cross-field constraints. `text` is
    /// the source the config was read from, used to anchor messages.
    pub fn resolve(self, text: &str, path: &Path) -> Result<Loaded, ConfigError> {
        let err = |section: &str, key: &str, message: String| ConfigError {
            path: path.to_path_buf(),
            line: key_line(text, section, key).or_else(|| key_line(text, "", section)),
            message,
        };
        let sys = &self.system;
        let bindings: ParameterBinding = sys
            .parameters
            .iter()
            .map(|(k, v)| (k.clone(), *v))
            .collect();
        let names: Vec<&str> = sys.parameters.keys().map(String::as_str).collect();
        let system = match (&sys.builtin, &sys.deformations) {
            (Some(_), Some(_)) => {
                return Err(err(
                    "system",
                    "deformations",
                    "give either `builtin` or `deformations`, not both".into(),
                ))
            }
            (None, None) => {
                return Err(err(
                    "system",
                    "builtin",
                    "`system` needs `builtin` or `deformations`".into(),
                ))
            }
            (Some(name), None) => {
                if sys.closed_form.is_some() || sys.poles.is_some() {
                    return Err(err(
                        "system",
                        "builtin",
                        "`closed_form` and `poles` apply to inline systems only".into(),
                    ));
                }
                let which: Builtin = name
                    .parse()
                    .map_err(|e: eulertop::FieldError| err("system", "builtin", e.to_string()))?;
                let n = sys.dimension.unwrap_or(3);
                if let Some(extra) = sys
                    .parameters
                    .keys()
                    .find(|k| k.as_str() != eulertop::field::COUPLING)
                {
                    return Err(err(
                        "system",
                        extra,
                        format!("builtin systems take only the parameter `g`, got `{extra}`"),
                    ));
                }
                let g = match (
                    which.is_deformation(),
                    sys.parameters.get(eulertop::field::COUPLING),
                ) {
                    (true, None) => {
                        return Err(err(
                            "system",
                            "builtin",
                            format!("builtin `{name}` needs parameters.g"),
                        ))
                    }
                    (_, g) => g.copied().unwrap_or(0.0),
                };
                let b =
                    builtin(name, n, g).map_err(|e| err("system", "dimension", e.to_string()))?;
                let field =
                    synthesize(&b.spec).map_err(|e| err("system", "builtin", e.to_string()))?;
                ResolvedSystem {
                    name: name.clone(),
                    builtin: Some(which),
                    spec: b.spec,
                    field,
                    closed_form: b.closed_form,
                }
            }
            (None, Some(sources)) => {
                let n = sys.dimension.ok_or_else(|| {
                    err(
                        "system",
                        "deformations",
                        "inline systems need `dimension`".into(),
                    )
                })?;
                if n < 3 {
                    return Err(err(
                        "system",
                        "dimension",
                        format!("dimension must be at least 3, got {n}"),
                    ));
                }
                if sources.len() != n - 1 {
                    return Err(err(
                        "system",
                        "deformations",
                        format!(
                            "dimension {n} needs {} deformation functions, got {}",
                            n - 1,
                            sources.len()
                        ),
                    ));
                }
                let parse_all = |key: &str, list: &[String]| -> Result<Vec<Expr>, ConfigError> {
                    list.iter()
                        .enumerate()
                        .map(|(k, s)| {
                            parse(s, n, &names)
                                .map_err(|e| err("system", key, format!("{key}[{}]: {e}", k + 1)))
                        })
                        .collect()
                };
                let alphas = parse_all("deformations", sources)?;
                let spec = DeformationSpec::new(n, alphas, bindings.clone())
                    .map_err(|e| err("system", "deformations", e.to_string()))?
                    .with_poles(sys.poles.unwrap_or_default());
                let field =
                    synthesize(&spec).map_err(|e| err("system", "deformations", e.to_string()))?;
                let closed_form = match &sys.closed_form {
                    None => None,
                    Some(list) if list.len() != n => {
                        return Err(err(
                            "system",
                            "closed_form",
                            format!("closed_form needs {n} components, got {}", list.len()),
                        ))
                    }
                    Some(list) => {
                        let comps = parse_all("closed_form", list)?;
                        let v = VectorField::from_components(
                            comps,
                            bindings.clone(),
                            Provenance::UserClosedForm,
                        )
                        .map_err(|e| err("system", "closed_form", e.to_string()))?;
                        Some(v.with_poles(spec.poles()))
                    }
                };
                ResolvedSystem {
                    name: "inline".into(),
                    builtin: None,
                    spec,
                    field,
                    closed_form,
                }
            }
        };
        let n = system.dimension();
        if self.x0.len() != n {
            return Err(err(
                "",
                "x0",
                format!(
                    "dimension mismatch: x0 has {} coordinates, the system has {n}",
                    self.x0.len()
                ),
            ));
        }
        if self.x0.iter().any(|v| !v.is_finite()) {
            return Err(err("", "x0", "x0 must be finite".into()));
        }
        self.integrator
            .validate()
            .map_err(|e| err("integrator", "method", e.to_string()))?;
        let reparametrization = match &self.reparametrization {
            None => None,
            Some(s) => Some(
                parse(s, n, &names)
                    .map_err(|e| err("", "reparametrization", format!("reparametrization: {e}")))?,
            ),
        };
        if self.verify.samples == 0
            || !(self.verify.half_width > 0.0)
            || !(self.verify.guard >= 0.0)
        {
            return Err(err(
                "verify",
                "samples",
                "verify needs samples > 0, half_width > 0 and guard >= 0".into(),
            ));
        }
        if let Some(sw) = &self.sweep {
            check_sweep(sw, &system).map_err(|m| err("sweep", "values", m))?;
        }
        Ok(Loaded {
            path: path.to_path_buf(),
            config: self,
            system,
            reparametrization,
        })
    }
}

pub(crate) fn check_sweep(sw: &SweepConfig, system: &ResolvedSystem) -> Result<(), String> {
    if sw.values.is_empty() {
        return Err("sweep needs at least one value".into());
    }
    if sw.values.iter().any(|v| !v.is_finite()) {
        return Err("sweep values must be finite".into());
    }
    if sw.workers == 0 {
        return Err("sweep workers must be at least 1".into());
    }
    if system.spec.bindings().get(&sw.parameter).is_none() {
        return Err(format!(
            "`{}` is not a parameter of this system",
            sw.parameter
        ));
    }
    Ok(())
}

/// Read, parse and validate a config file.
pub fn load(path: &Path) -> Result<Loaded, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
        path: path.to_path_buf(),
        line: None,
        message: format!("cannot read: {e}"),
    })?;
    RunConfig::from_toml(&text, path)?.resolve(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load_str(text: &str) -> Result<Loaded, ConfigError> {
        let p = Path::new("test.toml");
        RunConfig::from_toml(text, p)?.resolve(text, p)
    }

    #[test]
    fn builtin_config() {
        let l = load_str(
            "x0 = [1, 2, 3]\n[system]\nbuiltin = \"cube_root_deform\"\nparameters = { g = 1.0 }\n",
        )
        .unwrap();
        assert_eq!(l.system.name, "cube_root_deform");
        assert!(l.system.closed_form.is_some());
        assert_eq!(l.config.integrator, IntegratorConfig::default());
    }

    #[test]
    fn inline_config_with_closed_form() {
        let text = r#"
x0 = [1.0, 2.0, 3.0]
reparametrization = "1 + x2^2"

[system]
dimension = 3
deformations = ["g/x1 - g/x2", "g/x1 - g/x3"]
parameters = { g = 0.5 }
poles = { coordinate_planes = true }
closed_form = ["x2*x3", "x1*x3", "x1*x2"]

[integrator]
method = "fixed-rk4"
step = 0.01
t1 = 0.1
"#;
        let l = load_str(text).unwrap();
        assert!(l.system.poles().coordinate_planes);
        assert!(l.reparametrization.is_some());
        assert_eq!(
            l.system.closed_form.unwrap().provenance(),
            Provenance::UserClosedForm
        );
    }

    #[test]
    fn dimension_mismatch_is_anchored_to_x0() {
        let e = load_str("x0 = [1, 2, 3, 4]\n[system]\nbuiltin = \"euler3\"\n").unwrap_err();
        assert_eq!(e.line, Some(1));
        assert!(e.message.contains("dimension mismatch"), "{e}");
    }

    #[test]
    fn syntax_errors_carry_lines() {
        let e = load_str(
            "x0 = [1, 2, 3]\n[system]\nbuiltin = \"euler3\"\n[integrator]\nmethod = \"leapfrog\"\n",
        )
        .unwrap_err();
        assert_eq!(e.line, Some(5), "{e}");
        let e =
            load_str("x0 = [1, 2, 3]\n\n[system]\nbuiltin = \"euler3\"\ncolour = 1\n").unwrap_err();
        assert_eq!(e.line, Some(5), "{e}");
    }

    #[test]
    fn expression_errors_name_the_entry() {
        let text = "x0 = [1, 2, 3]\n[system]\ndimension = 3\ndeformations = [\"x1 +\", \"0\"]\n";
        let e = load_str(text).unwrap_err();
        assert_eq!(e.line, Some(4));
        assert!(
            e.message.contains("deformations[1]") && e.message.contains("position 5"),
            "{e}"
        );
        let text = "x0 = [1, 2, 3]\n[system]\ndimension = 3\ndeformations = [\"x4\", \"0\"]\n";
        assert!(load_str(text).is_err());
    }

    #[test]
    fn system_source_must_be_unique() {
        let text = "x0 = [1, 2, 3]\n[system]\nbuiltin = \"euler3\"\ndimension = 3\ndeformations = [\"0\", \"0\"]\n";
        assert!(load_str(text).unwrap_err().message.contains("not both"));
        assert!(load_str("x0 = [1, 2, 3]\n[system]\n").is_err());
        let e = load_str("x0 = [1, 2, 3]\n[system]\nbuiltin = \"quartic_deform\"\n").unwrap_err();
        assert!(e.message.contains("parameters.g"), "{e}");
    }

    #[test]
    fn sweep_validation() {
        let base =
            "x0 = [1, 2, 3]\n[system]\nbuiltin = \"cube_root_deform\"\nparameters = { g = 1.0 }\n";
        assert!(load_str(&format!("{base}[sweep]\nparameter = \"g\"\nvalues = []\n")).is_err());
        assert!(load_str(&format!(
            "{base}[sweep]\nparameter = \"h\"\nvalues = [1.0]\n"
        ))
        .is_err());
        assert!(load_str(&format!(
            "{base}[sweep]\nparameter = \"g\"\nvalues = [1.0, 0.0]\n"
        ))
        .is_ok());
    }

    #[test]
    fn effective_config_round_trips() {
        let l = load_str("x0 = [1, 2, 3]\nseed = 9\n[system]\nbuiltin = \"quartic_deform\"\nparameters = { g = 1.0 }\n").unwrap();
        let dumped = l.config.to_toml();
        let again = load_str(&dumped).unwrap();
        assert_eq!(again.config, l.config);
    }
}
