//! Bundled experiment configurations.

use super::experiment::ExperimentConfig;
use crate::error::{Result, SarError};

const PRESETS: &[(&str, &str)] = &[
    ("paper-fig1", include_str!("../../presets/paper-fig1.json")),
    ("paper-tau", include_str!("../../presets/paper-tau.json")),
    (
        "paper-homophily",
        include_str!("../../presets/paper-homophily.json"),
    ),
    ("replicates", include_str!("../../presets/replicates.json")),
    ("smoke", include_str!("../../presets/smoke.json")),
];

pub fn preset_names() -> Vec<&'static str> {
    PRESETS.iter().map(|(n, _)| *n).collect()
}

pub fn preset_json(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, j)| *j)
}

pub fn preset(name: &str) -> Result<ExperimentConfig> {
    let text = preset_json(name).ok_or_else(|| SarError::InvalidConfig {
        path: "preset".into(),
        msg: format!(
            "unknown preset '{name}'; available: {}",
            preset_names().join(", ")
        ),
    })?;
    ExperimentConfig::from_json(text)
}
