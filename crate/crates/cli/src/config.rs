//! Config loading and command-line overrides.

use std::path::{Path, PathBuf};

use corrnc_core::ExperimentConfig;

use crate::CliError;

/// Values that override the config file. `out` and `threads` may also come
/// from the environment; nothing else does.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub snr_db: Option<f64>,
    pub threads: Option<usize>,
    pub no_stage2: bool,
}

pub fn parse_config(text: &str, origin: &str) -> Result<ExperimentConfig, CliError> {
    let cfg: ExperimentConfig =
        toml::from_str(text).map_err(|e| CliError::Config(format!("{origin}: {}", e.message().trim())))?;
    cfg.validate().map_err(|e| CliError::Config(format!("{origin}: {e}")))?;
    Ok(cfg)
}

pub fn load_config(path: Option<&Path>) -> Result<ExperimentConfig, CliError> {
    match path {
        None => Ok(ExperimentConfig::desk_scale()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", p.display())))?;
            parse_config(&text, &p.display().to_string())
        }
    }
}

pub fn apply_overrides(cfg: &mut ExperimentConfig, o: &Overrides) -> Result<(), CliError> {
    if let Some(out) = &o.out {
        cfg.experiment.output = out.clone();
    }
    if let Some(seed) = o.seed {
        cfg.experiment.seed = seed;
    }
    if let Some(snr) = o.snr_db {
        cfg.noise.snr_db = vec![snr];
    }
    if o.no_stage2 {
        cfg.experiment.stage2 = false;
    }
    if o.threads == Some(0) {
        return Err(CliError::Config("--threads must be at least 1".into()));
    }
    cfg.validate().map_err(|e| CliError::Config(e.to_string()))
}

pub fn to_toml(cfg: &ExperimentConfig) -> String {
    toml::to_string(cfg).expect("config serializes to TOML")
}
