use std::path::{Path, PathBuf};

use flamesurf::estimate::EstimatorConfig;
use serde::Deserialize;

/// Run configuration file. Relative paths resolve against its folder.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub rig: Option<PathBuf>,
    pub threshold: Option<u16>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    #[serde(default)]
    pub estimator: EstimatorConfig,
}

impl RunConfig {
    pub fn parse(text: &str, base: &Path) -> serde_json::Result<Self> {
        let mut cfg: RunConfig = serde_json::from_str(text)?;
        for p in [&mut cfg.rig, &mut cfg.out].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }
}
