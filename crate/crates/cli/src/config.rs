//! Run configuration files.

use std::path::{Path, PathBuf};

use hosf_core::scenarios::{preset, ScenarioSpec};
use hosf_core::HosfError;
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Top-level JSON document accepted by `run`, `compare-orders` and
/// `validate-config`.
///
/// Exactly one of `preset` and `scenario` must be given. `overrides` is
/// merged into a preset before it is parsed.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub preset: Option<String>,
    #[serde(default)]
    pub overrides: Option<Value>,
    #[serde(default)]
    pub scenario: Option<Value>,
    /// Output directory, relative to the working directory.
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// Seed for randomized inputs. The built-in scenarios are
    /// deterministic; the value is carried into the manifest.
    #[serde(default)]
    pub seed: u64,
}

/// A parsed and validated configuration.
#[derive(Clone, Debug)]
pub struct Resolved {
    pub raw: Value,
    pub config: RunConfig,
    pub scenario: ScenarioSpec,
    pub output: PathBuf,
}

fn parse_error(e: serde_path_to_error::Error<serde_json::Error>) -> HosfError {
    let path = e.path().to_string();
    HosfError::config(path, e.into_inner().to_string())
}

pub fn load(path: &Path) -> Result<Resolved, HosfError> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        HosfError::config("config", format!("cannot read {}: {e}", path.display()))
    })?;
    let raw: Value = serde_json::from_str(&text)
        .map_err(|e| HosfError::config("config", format!("{}: {e}", path.display())))?;
    let config: RunConfig = serde_path_to_error::deserialize(raw.clone()).map_err(parse_error)?;
    let scenario = match (&config.preset, &config.scenario) {
        (Some(name), None) => preset(name, config.overrides.as_ref())?,
        (None, Some(v)) => {
            if config.overrides.is_some() {
                return Err(HosfError::config("overrides", "only allowed together with `preset`"));
            }
            ScenarioSpec::from_value(v.clone()).map_err(|e| match e {
                HosfError::Config { key, reason } => HosfError::config(format!("scenario.{key}"), reason),
                other => other,
            })?
        }
        (Some(_), Some(_)) => {
            return Err(HosfError::config("scenario", "give either `preset` or `scenario`, not both"))
        }
        (None, None) => return Err(HosfError::config("scenario", "one of `preset` or `scenario` is required")),
    };
    scenario.validate()?;
    let output = config
        .output
        .clone()
        .unwrap_or_else(|| PathBuf::from("hosf-out").join(&scenario.name));
    check_writable(&output)?;
    Ok(Resolved {
        raw,
        config,
        scenario,
        output,
    })
}

/// The output directory either exists as a writable directory or can be
/// created under a writable ancestor.
pub fn check_writable(path: &Path) -> Result<(), HosfError> {
    let mut probe = Some(path);
    while let Some(p) = probe {
        let p = if p.as_os_str().is_empty() { Path::new(".") } else { p };
        if let Ok(meta) = std::fs::metadata(p) {
            if !meta.is_dir() {
                return Err(HosfError::config(
                    "output",
                    format!("{} exists and is not a directory", p.display()),
                ));
            }
            if meta.permissions().readonly() {
                return Err(HosfError::config("output", format!("{} is not writable", p.display())));
            }
            return Ok(());
        }
        probe = p.parent();
    }
    Err(HosfError::config("output", format!("no existing ancestor for {}", path.display())))
}
