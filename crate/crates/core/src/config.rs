//! TOML scenario files.
//!
//! Keys mirror [`SystemConfig`], [`ClusterConfig`], [`EhCircuit`] and
//! [`SolverOptions`]. Quantities that are commonly quoted in logarithmic
//! units accept either suffix, e.g. `tx_power_w = 10` or `tx_power_dbm = 40`.
//!
//! ```toml
//! num_antennas = 8
//! tx_power_w = 10
//! antenna_gain_db = 10
//!
//! [[clusters]]
//! num_terminals = 8
//! angle_deg = 30
//! rician_kappa = 5        # `inf` for pure line of sight
//! pathloss_db = -63.5
//!
//! [eh_circuit]
//! sensitivity_dbm = -22
//! saturation_w = 311e-6
//! ```

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analytics::dbm_to_watts;
use crate::channel::{ClusterConfig, CorrelationConfig, SystemConfig, DEFAULT_ELEMENT_SPACING};
use crate::constrained::SolverOptions;
use crate::simulation::EhCircuit;

/// Everything needed to reproduce a run.
#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub system: SystemConfig,
    #[serde(default)]
    pub eh_circuit: EhCircuit,
    #[serde(default)]
    pub solver: SolverOptions,
}

impl Scenario {
    pub fn operating_point() -> Self {
        Self {
            system: SystemConfig::operating_point(),
            eh_circuit: EhCircuit::default(),
            solver: SolverOptions::default(),
        }
    }

    pub fn validate(&self) -> crate::Result<()> {
        self.system.validate()?;
        self.eh_circuit.validate()?;
        self.solver.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "line {line}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    num_antennas: usize,
    tx_power_w: Option<f64>,
    tx_power_dbm: Option<f64>,
    #[serde(default)]
    antenna_gain_db: f64,
    element_spacing: Option<f64>,
    #[serde(default)]
    rotation_deg: f64,
    #[serde(default)]
    master_seed: u64,
    clusters: Vec<RawCluster>,
    #[serde(default)]
    correlation: CorrelationConfig,
    #[serde(default)]
    eh_circuit: RawCircuit,
    #[serde(default)]
    solver: SolverOptions,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCluster {
    num_terminals: usize,
    angle_deg: f64,
    #[serde(default)]
    aperture_deg: f64,
    #[serde(with = "crate::serde_ext::extended_f64")]
    rician_kappa: f64,
    pathloss_db: f64,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawCircuit {
    sensitivity_w: Option<f64>,
    sensitivity_dbm: Option<f64>,
    saturation_w: Option<f64>,
    saturation_dbm: Option<f64>,
    efficiency: Option<f64>,
}

fn either(
    name: &str,
    watts: Option<f64>,
    dbm: Option<f64>,
    default: Option<f64>,
) -> std::result::Result<f64, (String, String)> {
    match (watts, dbm) {
        (Some(_), Some(_)) => Err((format!("{name}_w"), format!("give only one of {name}_w and {name}_dbm"))),
        (Some(w), None) => Ok(w),
        (None, Some(d)) => Ok(dbm_to_watts(d)),
        (None, None) => default.ok_or_else(|| (format!("{name}_w"), format!("missing {name}_w (or {name}_dbm)"))),
    }
}

fn line_of_offset(source: &str, offset: usize) -> usize {
    source[..offset.min(source.len())].matches('\n').count() + 1
}

/// Best-effort line of a key path such as `clusters[1].angle_deg`.
fn locate(source: &str, path: &str) -> Option<usize> {
    let (section, index, key) = match path.split_once('.') {
        Some((head, key)) => match head.split_once('[') {
            Some((name, rest)) => (Some(name), rest.trim_end_matches(']').parse::<usize>().ok(), key),
            None => (Some(head), None, key),
        },
        None => (None, None, path),
    };
    let lines: Vec<&str> = source.lines().collect();
    let is_header = |l: &str| l.trim_start().starts_with('[');
    let start = match section {
        None => 0,
        Some(name) => {
            let array = format!("[[{name}]]");
            let table = format!("[{name}]");
            let mut seen = 0;
            let mut found = None;
            for (i, l) in lines.iter().enumerate() {
                let t = l.trim();
                if t == table || (t == array && index == Some(seen)) {
                    found = Some(i);
                    break;
                }
                if t == array {
                    seen += 1;
                }
            }
            found? + 1
        }
    };
    for (i, l) in lines.iter().enumerate().skip(start) {
        if i > start && is_header(l) || (section.is_none() && is_header(l)) {
            break;
        }
        let t = l.trim_start();
        if t.strip_prefix(key).is_some_and(|rest| rest.trim_start().starts_with('=')) {
            return Some(i + 1);
        }
    }
    section.map(|_| start)
}

/// Maps a validation message naming a key path to a source line.
fn anchor(source: &str, message: String) -> ConfigError {
    let path = message
        .split(|c: char| c.is_whitespace() || c == ':')
        .find(|w| w.contains('.') && w.chars().next().is_some_and(|c| c.is_ascii_alphabetic()))
        .or_else(|| message.split_whitespace().find(|w| w.contains('_')));
    ConfigError { line: path.and_then(|p| locate(source, p)), message }
}

pub fn parse_scenario(source: &str) -> std::result::Result<Scenario, ConfigError> {
    let raw: RawConfig = toml::from_str(source).map_err(|e| ConfigError {
        line: e.span().map(|s| line_of_offset(source, s.start)),
        message: e.message().trim().to_string(),
    })?;
    let tx_power_w = either("tx_power", raw.tx_power_w, raw.tx_power_dbm, None)
        .map_err(|(key, msg)| ConfigError { line: locate(source, &key), message: msg })?;
    let defaults = EhCircuit::default();
    let c = &raw.eh_circuit;
    let circuit = (|| {
        Ok(EhCircuit {
            sensitivity_w: either(
                "eh_circuit.sensitivity",
                c.sensitivity_w,
                c.sensitivity_dbm,
                Some(defaults.sensitivity_w),
            )?,
            saturation_w: either(
                "eh_circuit.saturation",
                c.saturation_w,
                c.saturation_dbm,
                Some(defaults.saturation_w),
            )?,
            efficiency: c.efficiency.unwrap_or(defaults.efficiency),
        })
    })()
    .map_err(|(key, msg): (String, String)| ConfigError { line: locate(source, &key), message: msg })?;
    let scenario = Scenario {
        system: SystemConfig {
            num_antennas: raw.num_antennas,
            clusters: raw
                .clusters
                .into_iter()
                .map(|c| ClusterConfig {
                    num_terminals: c.num_terminals,
                    angle_deg: c.angle_deg,
                    aperture_deg: c.aperture_deg,
                    rician_kappa: c.rician_kappa,
                    pathloss_db: c.pathloss_db,
                })
                .collect(),
            tx_power_w,
            antenna_gain_db: raw.antenna_gain_db,
            element_spacing: raw.element_spacing.unwrap_or(DEFAULT_ELEMENT_SPACING),
            rotation_deg: raw.rotation_deg,
            master_seed: raw.master_seed,
            correlation: raw.correlation,
        },
        eh_circuit: circuit,
        solver: raw.solver,
    };
    scenario.validate().map_err(|e| {
        let msg = match e {
            crate::Error::Config(m) => m,
            other => other.to_string(),
        };
        anchor(source, msg)
    })?;
    Ok(scenario)
}

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Invalid { path: String, source: ConfigError },
}

/// Reads a TOML scenario, or the scenario embedded in a run manifest when the
/// file ends in `.json`.
pub fn load_scenario(path: &Path) -> std::result::Result<Scenario, LoadError> {
    let display = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|source| LoadError::Io { path: display.clone(), source })?;
    let parsed = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
        scenario_from_manifest(&text)
    } else {
        parse_scenario(&text)
    };
    parsed.map_err(|source| LoadError::Invalid { path: display, source })
}

fn scenario_from_manifest(text: &str) -> std::result::Result<Scenario, ConfigError> {
    #[derive(Deserialize)]
    struct Wrapper {
        scenario: Scenario,
    }
    let w: Wrapper =
        serde_json::from_str(text).map_err(|e| ConfigError { line: Some(e.line()), message: e.to_string() })?;
    w.scenario.validate().map_err(|e| ConfigError { line: None, message: e.to_string() })?;
    Ok(w.scenario)
}

#[cfg(test)]
mod tests {
    use super::*;

    const OP: &str = r#"
num_antennas = 8
tx_power_dbm = 40
antenna_gain_db = 10
master_seed = 1

[[clusters]]
num_terminals = 8
angle_deg = 0
rician_kappa = 5
pathloss_db = -63.5

[[clusters]]
num_terminals = 8
angle_deg = 30
rician_kappa = 5
pathloss_db = -63.5

[[clusters]]
num_terminals = 8
angle_deg = 70
rician_kappa = 5
pathloss_db = -63.5

[eh_circuit]
sensitivity_w = 6.30e-6
saturation_w = 311e-6
"#;

    #[test]
    fn operating_point_file() {
        let s = parse_scenario(OP).unwrap();
        let mut expected = Scenario::operating_point();
        expected.system.tx_power_w = s.system.tx_power_w;
        assert!((s.system.tx_power_w - 10.0).abs() < 1e-12);
        assert_eq!(s, expected);
    }

    #[test]
    fn infinite_kappa_and_dbm_bounds() {
        let src = OP
            .replace(
                "rician_kappa = 5\npathloss_db = -63.5\n\n[[clusters]]\nnum_terminals = 8\nangle_deg = 30",
                "rician_kappa = inf\npathloss_db = -63.5\n\n[[clusters]]\nnum_terminals = 8\nangle_deg = 30",
            )
            .replace("sensitivity_w = 6.30e-6", "sensitivity_dbm = -22");
        let s = parse_scenario(&src).unwrap();
        assert!(s.system.clusters[0].rician_kappa.is_infinite());
        assert!((s.eh_circuit.sensitivity_w - 6.3096e-6).abs() < 1e-9);
        let json = serde_json::to_string(&s).unwrap();
        assert!(json.contains("\"inf\""));
        let back: Scenario = serde_json::from_str(&json).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn syntax_error_is_line_anchored() {
        let src = OP.replace("angle_deg = 30", "angle_deg = = 30");
        let err = parse_scenario(&src).unwrap_err();
        assert_eq!(err.line, Some(15));
    }

    #[test]
    fn unknown_key_is_line_anchored() {
        let src = OP.replace("antenna_gain_db = 10", "antenna_gain = 10");
        let err = parse_scenario(&src).unwrap_err();
        assert_eq!(err.line, Some(4));
        assert!(err.message.contains("antenna_gain"));
    }

    #[test]
    fn validation_error_is_line_anchored() {
        let src = OP.replace("angle_deg = 70", "angle_deg = 270");
        let err = parse_scenario(&src).unwrap_err();
        assert_eq!(err.line, Some(21), "{err}");
        assert!(err.to_string().starts_with("line 21: clusters[2].angle_deg"));
    }

    #[test]
    fn conflicting_units_rejected() {
        let src = OP.replace("tx_power_dbm = 40", "tx_power_dbm = 40\ntx_power_w = 10");
        let err = parse_scenario(&src).unwrap_err();
        assert!(err.message.contains("only one"));
        let src = OP.replace("tx_power_dbm = 40", "");
        assert!(parse_scenario(&src).unwrap_err().message.contains("missing tx_power_w"));
    }

    #[test]
    fn too_many_clusters() {
        let src = OP.replace("num_antennas = 8", "num_antennas = 2");
        let err = parse_scenario(&src).unwrap_err();
        assert!(err.message.contains("clusters"), "{err}");
    }
}
