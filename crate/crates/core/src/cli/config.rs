//! TOML scenario files.
//!
//! Every key except `scenario` is optional; missing keys take the defaults of
//! [`ScenarioConfig::new`]. Custom chains list their disks as `[[disks]]`
//! tables with `index`, `center` and `radius`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Disk, ScenarioConfig, ScenarioKind};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Malformed(String),
    #[error("scenario: unknown scenario `{0}` (expected uniform, single_defect, two_defect, ssh or custom)")]
    UnknownScenario(String),
    #[error("{key}: missing ({msg})")]
    MissingKey { key: String, msg: String },
    #[error("{key}: {msg}")]
    OutOfRange { key: String, msg: String },
}

impl ConfigError {
    /// Stable identifier printed with the message.
    pub fn code(&self) -> &'static str {
        match self {
            ConfigError::Io { .. } => "E-CONFIG-IO",
            ConfigError::Malformed(_) => "E-CONFIG-SYNTAX",
            ConfigError::UnknownScenario(_) => "E-CONFIG-SCENARIO",
            ConfigError::MissingKey { .. } => "E-CONFIG-MISSING",
            ConfigError::OutOfRange { .. } => "E-CONFIG-RANGE",
        }
    }

    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            ConfigError::Io { .. } => 10,
            ConfigError::Malformed(_) => 11,
            ConfigError::UnknownScenario(_) => 12,
            ConfigError::MissingKey { .. } => 13,
            ConfigError::OutOfRange { .. } => 14,
        }
    }

    /// The offending key, when there is one.
    pub fn key(&self) -> Option<&str> {
        match self {
            ConfigError::UnknownScenario(_) => Some("scenario"),
            ConfigError::MissingKey { key, .. } | ConfigError::OutOfRange { key, .. } => Some(key),
            _ => None,
        }
    }
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    scenario: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    bulk_radius: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    defect_radius: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    half_width: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    defect_separation: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    alpha_points: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    fourier_terms: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    panels_per_disk: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    band_truncation_width: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    output_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    disks: Vec<Disk>,
}

fn count(key: &str, value: Option<i64>, default: usize) -> Result<usize, ConfigError> {
    match value {
        None => Ok(default),
        Some(v) if v >= 0 => Ok(v as usize),
        Some(v) => Err(ConfigError::OutOfRange {
            key: key.to_string(),
            msg: format!("must be non-negative, got {v}"),
        }),
    }
}

pub fn parse_config(path: &Path) -> Result<ScenarioConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config_str(&text)
}

pub fn parse_config_str(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::Malformed(e.to_string()))?;
    let name = raw.scenario.ok_or_else(|| ConfigError::MissingKey {
        key: "scenario".into(),
        msg: "every config names a scenario".into(),
    })?;
    let kind = ScenarioKind::parse(&name).ok_or(ConfigError::UnknownScenario(name))?;
    let mut cfg = ScenarioConfig::new(kind);
    if let Some(r) = raw.bulk_radius {
        cfg.bulk_radius = r;
    }
    if let Some(r) = raw.defect_radius {
        cfg.defect_radius = r;
    }
    cfg.half_width = count("half_width", raw.half_width, cfg.half_width)?;
    cfg.defect_separation = raw
        .defect_separation
        .map(|l| count("defect_separation", Some(l), 0))
        .transpose()?;
    cfg.alpha_points = count("alpha_points", raw.alpha_points, cfg.alpha_points)?;
    cfg.fourier_terms = count("fourier_terms", raw.fourier_terms, cfg.fourier_terms)?;
    cfg.panels_per_disk = count("panels_per_disk", raw.panels_per_disk, cfg.panels_per_disk)?;
    cfg.band_truncation_width = count(
        "band_truncation_width",
        raw.band_truncation_width,
        cfg.band_truncation_width,
    )?;
    if let Some(dir) = raw.output_dir {
        cfg.output_dir = dir;
    }
    cfg.custom_disks = raw.disks;
    check(&cfg)?;
    Ok(cfg)
}

/// Validation with the config-level error codes.
pub fn check(cfg: &ScenarioConfig) -> Result<(), ConfigError> {
    cfg.validate().map_err(|(key, msg)| {
        let missing = (key == "defect_separation" && cfg.defect_separation.is_none())
            || (key == "disks" && cfg.custom_disks.is_empty());
        if missing {
            ConfigError::MissingKey { key, msg }
        } else {
            ConfigError::OutOfRange { key, msg }
        }
    })
}

/// Serializes every field, so `parse_config_str(&emit_config(c))` equals `c`.
pub fn emit_config(cfg: &ScenarioConfig) -> String {
    let raw = RawConfig {
        scenario: Some(cfg.scenario.name().to_string()),
        bulk_radius: Some(cfg.bulk_radius),
        defect_radius: Some(cfg.defect_radius),
        half_width: Some(cfg.half_width as i64),
        defect_separation: cfg.defect_separation.map(|l| l as i64),
        alpha_points: Some(cfg.alpha_points as i64),
        fourier_terms: Some(cfg.fourier_terms as i64),
        panels_per_disk: Some(cfg.panels_per_disk as i64),
        band_truncation_width: Some(cfg.band_truncation_width as i64),
        output_dir: Some(cfg.output_dir.clone()),
        disks: cfg.custom_disks.clone(),
    };
    toml::to_string(&raw).expect("config fields are representable in TOML")
}
