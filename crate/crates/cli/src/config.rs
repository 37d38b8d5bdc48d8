//! Run configuration: JSON file with flag overrides. Unknown keys are
//! rejected so config typos fail loudly.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use qrpotts::contour_model::EnumerationCaps;
use qrpotts::lattice::VolumeSpec;
use qrpotts::mc::{Boundary, GraphSpec, SamplerKind};
use qrpotts::potts::ModelParams;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Verify,
    Exact,
    Contours,
    Sample,
    Sweep,
    Report,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsConfig {
    pub q: f64,
    pub r: f64,
    pub beta: f64,
}

impl Default for ParamsConfig {
    fn default() -> Self {
        ParamsConfig { q: 2.0, r: 1.0, beta: std::f64::consts::LN_2 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub beta_from: f64,
    pub beta_to: f64,
    pub steps: usize,
    #[serde(default = "default_sweeps")]
    pub sweeps: u64,
    #[serde(default = "default_burn_in")]
    pub burn_in: u64,
    #[serde(default = "default_thin")]
    pub thin: u64,
    #[serde(default = "default_bins")]
    pub bins: usize,
    #[serde(default = "default_dip")]
    pub dip_threshold: f64,
    #[serde(default = "default_torus_w")]
    pub torus_w: u32,
    #[serde(default = "default_torus_h")]
    pub torus_h: u32,
}

fn default_sweeps() -> u64 {
    100_000
}
fn default_burn_in() -> u64 {
    2_000
}
fn default_thin() -> u64 {
    1
}
fn default_bins() -> usize {
    40
}
fn default_dip() -> f64 {
    0.7
}
fn default_torus_w() -> u32 {
    16
}
fn default_torus_h() -> u32 {
    16
}

impl Default for SweepConfig {
    fn default() -> Self {
        // grid around the crossing point of the default parameters
        SweepConfig {
            beta_from: 0.8,
            beta_to: 1.4,
            steps: 4,
            sweeps: default_sweeps(),
            burn_in: default_burn_in(),
            thin: default_thin(),
            bins: default_bins(),
            dip_threshold: default_dip(),
            torus_w: default_torus_w(),
            torus_h: default_torus_h(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSection {
    pub graph: GraphSpec,
    pub boundary: Boundary,
    pub sampler: SamplerKind,
    pub sweeps: u64,
    pub burn_in: u64,
    pub thin: u64,
}

impl Default for ChainSection {
    fn default() -> Self {
        ChainSection {
            graph: GraphSpec::Rect { w: 8, h: 8 },
            boundary: Boundary::Free,
            sampler: SamplerKind::Cluster,
            sweeps: 20_000,
            burn_in: 1_000,
            thin: 1,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    #[serde(default)]
    pub params: ParamsConfig,
    #[serde(default = "default_volume")]
    pub volume: VolumeSpec,
    #[serde(default)]
    pub caps: EnumerationCaps,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default = "default_enum_cap")]
    pub enumeration_cap: u64,
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub chain: ChainSection,
    /// verification also runs the slowest exhaustive checks
    #[serde(default)]
    pub full: bool,
    /// test hook: perturbs one identity to prove the suite bites
    #[serde(default)]
    pub corrupt: Option<String>,
}

fn default_volume() -> VolumeSpec {
    VolumeSpec::Window { n: 1 }
}
fn default_tau() -> f64 {
    2.0
}
fn default_seed() -> u64 {
    1
}
fn default_out() -> PathBuf {
    PathBuf::from("out")
}
fn default_enum_cap() -> u64 {
    1 << 26
}

impl RunConfig {
    pub fn minimal(command: Command) -> RunConfig {
        RunConfig {
            command,
            params: ParamsConfig::default(),
            volume: default_volume(),
            caps: EnumerationCaps::default(),
            tau: default_tau(),
            seed: default_seed(),
            out: default_out(),
            enumeration_cap: default_enum_cap(),
            threads: None,
            sweep: SweepConfig::default(),
            chain: ChainSection::default(),
            full: false,
            corrupt: None,
        }
    }

    pub fn from_file(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if let Err(e) = ModelParams::new(self.params.q, self.params.r, self.params.beta) {
            bail!("{e}");
        }
        if self.tau <= 0.0 {
            bail!("tau must be > 0, got {}", self.tau);
        }
        if self.sweep.steps == 0 && self.command == Command::Sweep {
            // an empty grid is allowed: the sweep becomes a no-op
        }
        if let VolumeSpec::Explicit { .. } = &self.volume {
            self.volume
                .build()
                .map_err(|e| anyhow::anyhow!("volume: {e}"))?;
        }
        Ok(())
    }

    pub fn model_params(&self) -> Result<ModelParams> {
        ModelParams::new(self.params.q, self.params.r, self.params.beta).map_err(|e| anyhow::anyhow!("{e}"))
    }

    pub fn beta_grid(&self) -> Vec<f64> {
        let s = &self.sweep;
        if s.steps == 0 {
            return Vec::new();
        }
        if s.steps == 1 {
            return vec![s.beta_from];
        }
        (0..s.steps)
            .map(|i| s.beta_from + (s.beta_to - s.beta_from) * i as f64 / (s.steps - 1) as f64)
            .collect()
    }
}
