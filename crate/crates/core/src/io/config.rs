//! The run configuration document (TOML).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::PipelineConfig;
use crate::metrics::SsimParams;
use crate::stylize::{LossParams, TrainConfig, DEFAULT_PATCH_PX};

use super::read_bytes;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    /// Chebyshev matching tolerance for edge precision/recall, in pixels.
    pub tolerance: usize,
    pub ssim: SsimParams,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            tolerance: 2,
            ssim: SsimParams::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    pub lr: f64,
    pub iters: usize,
    pub use_contrastive: bool,
    pub patch_px: usize,
}

impl Default for TrainSettings {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            lr: t.lr,
            iters: t.iters,
            use_contrastive: t.use_contrastive,
            patch_px: DEFAULT_PATCH_PX,
        }
    }
}

/// Everything a run needs besides its input files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub pipeline: PipelineConfig<f64>,
    pub loss: LossParams,
    pub metrics: MetricsConfig,
    pub train: TrainSettings,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.pipeline.validate()?;
        self.loss.validate()?;
        if self.train.patch_px == 0 {
            return Err(Error::Config("train.patch_px must be positive".into()));
        }
        Ok(())
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            loss: self.loss,
            lr: self.train.lr,
            iters: self.train.iters,
            use_contrastive: self.train.use_contrastive,
            seed: self.seed,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }
}

/// Parses and validates a configuration. Unknown keys are errors that name
/// the key.
pub fn parse_run_config(text: &str, path: &Path) -> Result<RunConfig> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| {
        Error::Config(format!("{}: {}", path.display(), e.message()))
    })?;
    cfg.validate()
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    Ok(cfg)
}

pub fn load_run_config(path: &Path) -> Result<RunConfig> {
    let bytes = read_bytes(path)?;
    let text = String::from_utf8(bytes).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        offset: e.utf8_error().valid_up_to(),
        message: "configuration is not UTF-8".into(),
    })?;
    parse_run_config(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips() {
        let cfg = RunConfig::default();
        let back = parse_run_config(&cfg.to_toml(), Path::new("run.toml")).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_documents_fill_defaults() {
        let text = "seed = 3\n[pipeline.threshold]\nwindow = 11\noffset = 0.5\n[pipeline.flow_edge]\ninterpolation = \"spline\"\n";
        let cfg = parse_run_config(text, Path::new("run.toml")).unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.pipeline.threshold.window, 11);
        assert_eq!(cfg.pipeline.threshold.offset, Some(0.5));
        assert_eq!(cfg.metrics.tolerance, 2);
    }

    #[test]
    fn unknown_keys_are_named() {
        for (text, key) in [
            ("sede = 1", "sede"),
            ("[pipeline.threshold]\nwindw = 9", "windw"),
            ("[loss]\nmargin = 0.1", "margin"),
            ("[metrics.ssim]\nk3 = 1", "k3"),
        ] {
            let err = parse_run_config(text, Path::new("run.toml")).unwrap_err();
            assert!(err.to_string().contains(key), "{err}");
        }
    }

    #[test]
    fn invalid_values_are_config_errors() {
        let err = parse_run_config("[pipeline.threshold]\nwindow = 4", Path::new("run.toml")).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(parse_run_config("[loss]\ndelta = 0.0", Path::new("run.toml")).is_err());
    }
}
