//! Persisted calibrator with format version and provenance.

use imax_calib::calibrator::FitConfig;
use imax_calib::{Calibrator64, ScoreKind};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const FORMAT_VERSION: &str = "1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub seed: u64,
    /// SHA-256 of the canonical JSON of the fit settings.
    pub config_hash: String,
    pub fit_set_size: usize,
    pub holdout_frac: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibratorBundle {
    pub version: String,
    pub input_kind: ScoreKind,
    pub config: FitConfig,
    pub calibrator: Calibrator64,
    pub provenance: Provenance,
}

pub fn config_hash(cfg: &FitConfig, input_kind: ScoreKind, holdout: Option<f64>) -> String {
    let canonical = serde_json::json!({ "config": cfg, "input_kind": input_kind, "holdout_frac": holdout });
    Sha256::digest(canonical.to_string().as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

impl CalibratorBundle {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("bundle serializes");
        s.push('\n');
        s
    }

    pub fn from_json(s: &str) -> CliResult<Self> {
        let b: Self = serde_json::from_str(s).map_err(|e| CliError::Data(format!("bundle: {e}")))?;
        if b.version != FORMAT_VERSION {
            return Err(CliError::Data(format!(
                "bundle version `{}` is not supported (expected `{FORMAT_VERSION}`)",
                b.version
            )));
        }
        b.calibrator.validate()?;
        Ok(b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_hash_tracks_settings() {
        let cfg = FitConfig::default();
        let a = config_hash(&cfg, ScoreKind::RawLogits, None);
        assert_eq!(a, config_hash(&cfg.clone(), ScoreKind::RawLogits, None));
        assert_ne!(a, config_hash(&FitConfig { seed: 1, ..cfg.clone() }, ScoreKind::RawLogits, None));
        assert_ne!(a, config_hash(&cfg, ScoreKind::Probabilities, None));
        assert_ne!(a, config_hash(&cfg, ScoreKind::RawLogits, Some(0.2)));
    }

    #[test]
    fn rejects_garbage() {
        assert!(CalibratorBundle::from_json("{}").is_err());
        assert!(CalibratorBundle::from_json("not json").is_err());
    }
}
