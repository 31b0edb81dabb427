//! JSON run configuration: one document drives every subcommand. Unknown
//! keys are rejected; omitted keys take the documented defaults; the
//! effective configuration is echoed into the output directory so a run can
//! be reproduced from its artifacts alone.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use dsth::optim::Variant;
use dsth::{DsthConfig64, Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Single top-level seed; every stage derives a named sub-seed from it.
    pub seed: u64,
    /// `full`, `dsth-i`, `dsth-ii`, `dsth-iii`, or `dsth-iv`.
    pub variant: String,
    pub code_length: usize,
    pub alpha: f64,
    pub beta: f64,
    pub mu0: f64,
    pub rho: f64,
    pub mu_max: f64,
    pub max_iter: usize,
    pub rel_tol: f64,
    /// Ridge weight for hash-function learning.
    pub eta: f64,
    pub anchors: AnchorParams,
    pub paths: PathsConfig,
    pub split: SplitParams,
    pub eval: EvalParams,
    pub synth: SynthConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let d = DsthConfig64::default();
        RunConfig {
            seed: 0,
            variant: "full".to_string(),
            code_length: d.code_length,
            alpha: d.alpha,
            beta: d.beta,
            mu0: d.mu0,
            rho: d.rho,
            mu_max: d.mu_max,
            max_iter: d.max_iter,
            rel_tol: d.rel_tol,
            eta: dsth::hash::DEFAULT_ETA,
            anchors: AnchorParams::default(),
            paths: PathsConfig::default(),
            split: SplitParams::default(),
            eval: EvalParams::default(),
            synth: SynthConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnchorParams {
    pub k: usize,
    pub s: usize,
    /// Kernel bandwidth; estimated from the data when absent.
    pub sigma: Option<f64>,
    pub kmeans_max_iter: usize,
}

impl Default for AnchorParams {
    fn default() -> Self {
        AnchorParams {
            k: 300,
            s: 5,
            sigma: None,
            kmeans_max_iter: 25,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    pub visual: PathBuf,
    pub text: PathBuf,
    pub labels: PathBuf,
    pub out_dir: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig {
            visual: "visual.dmat".into(),
            text: "text.dmat".into(),
            labels: "labels.dlbl".into(),
            out_dir: "out".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitParams {
    pub n_query: usize,
    pub n_train: usize,
}

impl Default for SplitParams {
    fn default() -> Self {
        SplitParams {
            n_query: 50,
            n_train: 200,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalParams {
    /// Retrieval depth for mAP.
    pub r: usize,
    /// Scope points for the precision-scope curve; empty skips the curve.
    pub scopes: Vec<usize>,
    /// Drop each query's own id from its ranking (only meaningful when
    /// queries live inside the indexed database).
    pub exclude_query_from_db: bool,
}

impl Default for EvalParams {
    fn default() -> Self {
        EvalParams {
            r: 100,
            scopes: Vec::new(),
            exclude_query_from_db: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub n_classes: usize,
    pub per_class: usize,
    pub d_x: usize,
    pub d_y: usize,
    pub noise: f64,
    pub cross_modal_consistency: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_classes: 3,
            per_class: 100,
            d_x: 32,
            d_y: 16,
            noise: 0.0,
            cross_modal_consistency: 1.0,
        }
    }
}

impl RunConfig {
    /// Loads and validates; missing file or malformed JSON are configuration
    /// errors.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("config {}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.parsed_variant()?;
        if self.code_length < 2 {
            return Err(Error::Config(format!(
                "code_length {} < 2",
                self.code_length
            )));
        }
        if self.eval.r == 0 {
            return Err(Error::Config("eval.r must be >= 1".into()));
        }
        if self.anchors.s == 0 || self.anchors.s > self.anchors.k {
            return Err(Error::Config(format!(
                "anchors.s={} must be in 1..=k={}",
                self.anchors.s, self.anchors.k
            )));
        }
        Ok(())
    }

    pub fn parsed_variant(&self) -> Result<Variant> {
        Variant::from_cli_name(&self.variant)
            .ok_or_else(|| Error::Config(format!("unknown variant {:?}", self.variant)))
    }

    /// Core optimizer configuration for this run.
    pub fn optimizer_config(&self) -> Result<DsthConfig64> {
        Ok(DsthConfig64 {
            code_length: self.code_length,
            alpha: self.alpha,
            beta: self.beta,
            mu0: self.mu0,
            rho: self.rho,
            mu_max: self.mu_max,
            max_iter: self.max_iter,
            rel_tol: self.rel_tol,
            variant: self.parsed_variant()?,
            seed: self.seed,
        })
    }

    /// Writes the effective configuration into the output directory.
    pub fn echo(&self) -> Result<()> {
        fs::create_dir_all(&self.paths.out_dir)?;
        let pretty = serde_json::to_string_pretty(self).expect("config serializes");
        fs::write(self.paths.out_dir.join("config_echo.json"), pretty)?;
        Ok(())
    }
}
