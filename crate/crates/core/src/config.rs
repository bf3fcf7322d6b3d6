//! Scenario files.
//!
//! A config is a TOML document holding named scenarios, an output
//! directory, optional metric settings and comparison pairs. Unknown keys
//! are rejected.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gekf::MeasurementModel;
use crate::metrics::MetricsOptions;
use crate::sim::Scenario;

/// Bundled configs, by name.
pub const PRESETS: [(&str, &str); 4] = [
    ("known_objective", include_str!("../presets/known_objective.toml")),
    ("experiment", include_str!("../presets/experiment.toml")),
    ("light_source", include_str!("../presets/light_source.toml")),
    ("moving_source", include_str!("../presets/moving_source.toml")),
];

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub metrics: MetricsOptions,
    pub scenarios: BTreeMap<String, Scenario>,
    #[serde(default)]
    pub compare: Vec<[String; 2]>,
    /// Set when invariant checks were skipped at load time.
    #[serde(skip)]
    pub forced: bool,
    /// Warnings raised while resolving scenarios, by scenario name.
    #[serde(skip)]
    pub warnings: BTreeMap<String, Vec<String>>,
}

impl Config {
    /// Parses and validates a config. With `force`, scenario invariant
    /// violations are logged instead of rejected.
    pub fn parse(text: &str, force: bool) -> Result<Self> {
        let mut cfg: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if cfg.scenarios.is_empty() {
            return Err(Error::Config("config defines no scenarios".into()));
        }
        for [a, b] in &cfg.compare {
            for n in [a, b] {
                if !cfg.scenarios.contains_key(n) {
                    let line = find_line(text, |l| l.contains(&format!("\"{n}\"")));
                    return Err(Error::Config(format!(
                        "{}comparison references unknown scenario `{n}`",
                        line_prefix(line)
                    )));
                }
            }
        }
        cfg.forced = force;
        let names: Vec<String> = cfg.scenarios.keys().cloned().collect();
        for name in names {
            let sc = &cfg.scenarios[&name];
            match sc.resolve() {
                Ok((resolved, warnings)) => {
                    cfg.scenarios.insert(name.clone(), resolved);
                    if !warnings.is_empty() {
                        cfg.warnings.insert(name, warnings);
                    }
                }
                Err(e) if force => {
                    log::warn!("scenario `{name}`: {e} (continuing, forced)");
                    cfg.warnings.entry(name).or_default().push(e.to_string());
                }
                Err(e) => {
                    let line = locate(text, &name, &e);
                    return Err(Error::Config(format!(
                        "{}scenario `{name}`: {e}",
                        line_prefix(line)
                    )));
                }
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path, force: bool) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, force).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Loads a bundled config by name.
    pub fn preset(name: &str) -> Result<Self> {
        let (_, text) = PRESETS
            .iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| Error::Config(format!("no bundled preset `{name}`")))?;
        Self::parse(text, false)
    }

    /// The bundled config that defines scenario `name`, if any.
    pub fn preset_with_scenario(name: &str) -> Option<Self> {
        PRESETS
            .iter()
            .filter_map(|(p, _)| Self::preset(p).ok())
            .find(|c| c.scenarios.contains_key(name))
    }

    pub fn scenario(&self, name: &str) -> Result<&Scenario> {
        self.scenarios.get(name).ok_or_else(|| {
            let known: Vec<_> = self.scenarios.keys().map(String::as_str).collect();
            Error::Config(format!("unknown scenario `{name}` (have: {})", known.join(", ")))
        })
    }

    pub fn override_seed(&mut self, seed: u64) {
        self.scenarios.values_mut().for_each(|s| s.seed = seed);
    }

    pub fn override_measurement_model(&mut self, model: MeasurementModel) {
        for g in self.scenarios.values_mut().filter_map(|s| s.gekf.as_mut()) {
            g.measurement_model = model;
        }
    }
}

fn line_prefix(line: Option<usize>) -> String {
    line.map_or(String::new(), |n| format!("line {n}: "))
}

fn find_line(text: &str, pred: impl Fn(&str) -> bool) -> Option<usize> {
    text.lines().position(pred).map(|i| i + 1)
}

/// Best-effort source line for an invariant violation: the offending key
/// inside the scenario's tables, else the scenario's first header.
fn locate(text: &str, scenario: &str, err: &Error) -> Option<usize> {
    let header = format!("[scenarios.{scenario}");
    let key = match err {
        Error::InvalidParam { name, .. } => name.split('/').next().map(str::to_string),
        Error::InvalidField(_) => Some("kind".to_string()),
        _ => None,
    };
    let mut inside = false;
    let mut first_header = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.starts_with('[') {
            inside = line.starts_with(&format!("{header}]")) || line.starts_with(&format!("{header}."));
            if inside && first_header.is_none() {
                first_header = Some(i + 1);
            }
            continue;
        }
        if let (true, Some(k)) = (inside, &key) {
            let matches = line
                .strip_prefix(k.as_str())
                .is_some_and(|rest| rest.trim_start().starts_with('='));
            if matches {
                return Some(i + 1);
            }
        }
    }
    first_header
}
