//! TOML run configuration.
//!
//! Sections `[scenario]`, `[array]`, `[cfar]`, `[tracker]` and `[eval]`.
//! Angles are given in degrees. The tuning parameters `psi_r`, `psi_theta`,
//! `sigma_r`, `sigma_theta`, `sigma_zeta`, `G_r`, `G_theta`, `G_s`, `N_c`,
//! `d1`, `d2`, `P_fa`, `U`, `max_range` and `scr_db` are required; everything
//! else has a default.

use std::path::Path;

use serde::Deserialize;

use crate::detect::{CfarConfig, MergeConfig};
use crate::error::{Error, Result};
use crate::eval::EvalConfig;
use crate::pipeline::PipelineConfig;
use crate::scenario::{ArrayGeometry, Scenario, TargetTruth, Waveform};
use crate::track::{GateConfig, MeasurementNoise, TrackerConfig};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    scenario: ScenarioSection,
    #[serde(default)]
    array: ArraySection,
    cfar: CfarSection,
    tracker: TrackerSection,
    #[serde(default)]
    eval: EvalSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioSection {
    #[serde(default)]
    seed: u64,
    scr_db: f64,
    max_range: f64,
    #[serde(rename = "U")]
    beams: usize,
    #[serde(default = "defaults::num_emissions")]
    num_emissions: usize,
    #[serde(default = "defaults::emission_period")]
    emission_period: f64,
    #[serde(default = "defaults::sound_speed")]
    sound_speed: f64,
    #[serde(default = "defaults::sample_rate")]
    sample_rate: f64,
    #[serde(default = "defaults::chirp_start")]
    chirp_start_hz: f64,
    #[serde(default = "defaults::chirp_bandwidth")]
    chirp_bandwidth_hz: f64,
    #[serde(default = "defaults::chirp_duration")]
    chirp_duration_s: f64,
    #[serde(default = "defaults::targets")]
    targets: Vec<TargetSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TargetSection {
    position: [f64; 2],
    velocity: [f64; 2],
    #[serde(default)]
    birth: usize,
    death: usize,
    #[serde(default = "defaults::amplitude")]
    amplitude: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ArraySection {
    /// Element positions (m).
    elements: Vec<[f64; 2]>,
}

impl Default for ArraySection {
    fn default() -> Self {
        Self {
            elements: ArrayGeometry::floater().elements().to_vec(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CfarSection {
    #[serde(rename = "P_fa")]
    p_fa: f64,
    #[serde(default = "defaults::guard")]
    guard: [usize; 2],
    #[serde(default = "defaults::train")]
    train: [usize; 2],
    #[serde(default = "defaults::min_area")]
    min_area: usize,
    #[serde(default = "defaults::max_area")]
    max_area: usize,
    psi_r: f64,
    /// Degrees.
    psi_theta: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrackerSection {
    sigma_r: f64,
    /// Degrees.
    sigma_theta: f64,
    sigma_zeta: f64,
    #[serde(rename = "G_r")]
    g_r: f64,
    /// Degrees.
    #[serde(rename = "G_theta")]
    g_theta: f64,
    #[serde(rename = "G_s")]
    g_s: f64,
    #[serde(rename = "N_c")]
    n_c: usize,
    d1: usize,
    d2: usize,
    #[serde(default = "defaults::v_max")]
    v_max: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EvalSection {
    #[serde(default = "defaults::d_assoc")]
    d_assoc: f64,
    #[serde(default = "defaults::conv_tolerance")]
    convergence_tolerance: f64,
    #[serde(default = "defaults::conv_window")]
    convergence_window: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            d_assoc: defaults::d_assoc(),
            convergence_tolerance: defaults::conv_tolerance(),
            convergence_window: defaults::conv_window(),
        }
    }
}

mod defaults {
    use super::TargetSection;
    use crate::detect::CfarConfig;
    use crate::eval::EvalConfig;
    use crate::track::TrackerConfig;

    pub fn num_emissions() -> usize {
        60
    }
    pub fn emission_period() -> f64 {
        1.0
    }
    pub fn sound_speed() -> f64 {
        1500.0
    }
    pub fn sample_rate() -> f64 {
        50_000.0
    }
    pub fn chirp_start() -> f64 {
        10_000.0
    }
    pub fn chirp_bandwidth() -> f64 {
        10_000.0
    }
    pub fn chirp_duration() -> f64 {
        0.01
    }
    pub fn amplitude() -> f64 {
        1.0
    }
    pub fn targets() -> Vec<TargetSection> {
        vec![TargetSection {
            position: [0.0, 100.0],
            velocity: [1.0, -3.0],
            birth: 0,
            death: 59,
            amplitude: 1.0,
        }]
    }
    pub fn guard() -> [usize; 2] {
        CfarConfig::default().guard
    }
    pub fn train() -> [usize; 2] {
        CfarConfig::default().train
    }
    pub fn min_area() -> usize {
        CfarConfig::default().min_area
    }
    pub fn max_area() -> usize {
        CfarConfig::default().max_area
    }
    pub fn v_max() -> f64 {
        TrackerConfig::default().initial_speed_std
    }
    pub fn d_assoc() -> f64 {
        EvalConfig::default().assoc_distance
    }
    pub fn conv_tolerance() -> f64 {
        EvalConfig::default().convergence_tolerance
    }
    pub fn conv_window() -> usize {
        EvalConfig::default().convergence_window
    }
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<PipelineConfig> {
    let file: ConfigFile =
        toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
    let s = file.scenario;
    let array = ArrayGeometry::new(file.array.elements)
        .map_err(|e| Error::Config(format!("[array] {e}")))?;
    let scenario = Scenario {
        array,
        waveform: Waveform {
            start_hz: s.chirp_start_hz,
            bandwidth_hz: s.chirp_bandwidth_hz,
            duration_s: s.chirp_duration_s,
            sample_rate_hz: s.sample_rate,
        },
        targets: s
            .targets
            .into_iter()
            .map(|t| TargetTruth {
                position: t.position,
                velocity: t.velocity,
                birth: t.birth,
                death: t.death,
                amplitude: t.amplitude,
            })
            .collect(),
        sound_speed: s.sound_speed,
        emission_period: s.emission_period,
        num_emissions: s.num_emissions,
        max_range: s.max_range,
        scr_db: s.scr_db,
        beams: s.beams,
        seed: s.seed,
    };
    let c = file.cfar;
    let t = file.tracker;
    let cfg = PipelineConfig {
        scenario,
        cfar: CfarConfig {
            p_fa: c.p_fa,
            guard: c.guard,
            train: c.train,
            min_area: c.min_area,
            max_area: c.max_area,
        },
        merge: MergeConfig {
            psi_r: c.psi_r,
            psi_theta: c.psi_theta.to_radians(),
        },
        tracker: TrackerConfig {
            noise: MeasurementNoise {
                sigma_r: t.sigma_r,
                sigma_theta: t.sigma_theta.to_radians(),
            },
            sigma_zeta: t.sigma_zeta,
            gate: GateConfig {
                g_r: t.g_r,
                g_theta: t.g_theta.to_radians(),
                g_s: t.g_s,
            },
            confirm_count: t.n_c,
            delete_misses: t.d1,
            delete_window: t.d2,
            initial_speed_std: t.v_max,
        },
        eval: EvalConfig {
            assoc_distance: file.eval.d_assoc,
            convergence_tolerance: file.eval.convergence_tolerance,
            convergence_window: file.eval.convergence_window,
        },
    };
    cfg.validate().map_err(|e| Error::Config(e.to_string()))?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<PipelineConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const EXAMPLE: &str = r#"
[scenario]
seed = 7
scr_db = 3.0
max_range = 120.0
U = 72

[cfar]
P_fa = 0.2
psi_r = 10.0
psi_theta = 6.0

[tracker]
sigma_r = 0.3
sigma_theta = 3.0
sigma_zeta = 1e-4
G_r = 10.0
G_theta = 10.0
G_s = 0.1
N_c = 5
d1 = 7
d2 = 15
"#;

    #[test]
    fn parses_minimal_config() {
        let cfg = parse_config(EXAMPLE).unwrap();
        assert_eq!(cfg.scenario.seed, 7);
        assert_eq!(cfg.scenario.beams, 72);
        assert_eq!(cfg.cfar.p_fa, 0.2);
        assert!((cfg.merge.psi_theta - 6f64.to_radians()).abs() < 1e-15);
        assert_eq!(cfg.tracker.confirm_count, 5);
        assert_eq!(cfg.scenario.array, ArrayGeometry::floater());
        assert_eq!(cfg.scenario.targets.len(), 1);
    }

    #[test]
    fn missing_key_is_named() {
        let text = EXAMPLE.replace("sigma_theta = 3.0\n", "");
        let err = parse_config(&text).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(err.to_string().contains("sigma_theta"), "{err}");
    }

    #[test]
    fn unknown_key_is_rejected() {
        let text = EXAMPLE.replace("d2 = 15", "d2 = 15\nd3 = 1");
        assert!(parse_config(&text).unwrap_err().to_string().contains("d3"));
    }

    #[test]
    fn invalid_values_are_config_errors() {
        let text = EXAMPLE.replace("P_fa = 0.2", "P_fa = 1.5");
        assert!(matches!(parse_config(&text), Err(Error::Config(_))));
        let text = EXAMPLE.replace("d1 = 7", "d1 = 20");
        assert!(matches!(parse_config(&text), Err(Error::Config(_))));
    }
}
