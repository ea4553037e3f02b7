//! Flat tracker configuration, read from and written to TOML.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::features::{FeatureMode, FeatureParams};
use crate::regularizer::RegularizerSpec;
use crate::solver::{SolverParams, SweepOrder};
use crate::{Error, Result};

/// Every tunable of the tracker. Unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerConfig {
    pub features: FeatureMode,
    pub cell_size: usize,
    pub hann_window: bool,
    /// Search region area as a multiple of the target area.
    pub search_area_scale: f64,
    /// Cap on `√(M·N)` of the feature grid.
    pub max_grid: usize,
    /// Targets whose grid would fall below this extent are upsampled.
    pub min_grid: usize,
    /// Forces a square `n × n` grid (odd), overriding the two bounds above.
    pub fixed_grid: Option<usize>,

    pub mu: f64,
    pub eta: f64,
    pub beta: f64,
    pub sparsity_keep: f64,

    pub learning_rate: f64,
    pub gs_sweeps: usize,
    pub sweep_order: SweepOrder,
    pub output_sigma_factor: f64,

    pub scales: usize,
    pub scale_step: f64,
    pub newton_iterations: usize,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        let reg = RegularizerSpec::default();
        let solver = SolverParams::default();
        let feat = FeatureParams::default();
        TrackerConfig {
            features: feat.mode,
            cell_size: feat.cell_size,
            hann_window: feat.hann_window,
            search_area_scale: 4.0,
            max_grid: 50,
            min_grid: 25,
            fixed_grid: None,
            mu: reg.mu,
            eta: reg.eta,
            beta: reg.beta,
            sparsity_keep: reg.sparsity_keep,
            learning_rate: solver.learning_rate,
            gs_sweeps: solver.gs_sweeps,
            sweep_order: solver.sweep_order,
            output_sigma_factor: 1.0 / 16.0,
            scales: 7,
            scale_step: 1.01,
            newton_iterations: 5,
        }
    }
}

impl TrackerConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: TrackerConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    pub fn validate(&self) -> Result<()> {
        self.regularizer().validate()?;
        self.solver().validate()?;
        if self.cell_size == 0 {
            return Err(Error::invalid("cell_size", "must be positive"));
        }
        if !(self.search_area_scale >= 1.0 && self.search_area_scale.is_finite()) {
            return Err(Error::invalid(
                "search_area_scale",
                format!("{} must be >= 1", self.search_area_scale),
            ));
        }
        if self.max_grid < 3 || self.min_grid > self.max_grid {
            return Err(Error::invalid(
                "max_grid",
                format!("need 3 <= max_grid and min_grid <= max_grid, got {}/{}", self.max_grid, self.min_grid),
            ));
        }
        if let Some(n) = self.fixed_grid {
            if n % 2 == 0 || n == 0 {
                return Err(Error::invalid("fixed_grid", format!("{n} must be odd and positive")));
            }
        }
        if !(self.output_sigma_factor > 0.0) {
            return Err(Error::invalid("output_sigma_factor", "must be positive"));
        }
        if self.scales == 0 || self.scales % 2 == 0 {
            return Err(Error::invalid("scales", format!("{} must be odd", self.scales)));
        }
        if !(self.scale_step > 1.0 && self.scale_step.is_finite()) {
            return Err(Error::invalid("scale_step", format!("{} must be > 1", self.scale_step)));
        }
        Ok(())
    }

    pub fn regularizer(&self) -> RegularizerSpec {
        RegularizerSpec {
            mu: self.mu,
            eta: self.eta,
            beta: self.beta,
            sparsity_keep: self.sparsity_keep,
        }
    }

    pub fn solver(&self) -> SolverParams {
        SolverParams {
            learning_rate: self.learning_rate,
            gs_sweeps: self.gs_sweeps,
            sweep_order: self.sweep_order,
        }
    }

    pub fn feature_params(&self) -> FeatureParams {
        FeatureParams {
            mode: self.features,
            cell_size: self.cell_size,
            hann_window: self.hann_window,
        }
    }

    /// Short hex digest identifying this configuration.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}
